use mgi_core::reduction::{run_pipeline, PipelineConfig, ReductionPlan};
use mgi_core::sensing::{worst_case_f, DetectorGeometry, ModelParams, SensingModel};
use mgi_core::sim::{simulate_gi, AcquisitionConfig, ObjectImage};
use mgi_core::transforms::{BasisKind, SparsityBasis};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ghost(n: usize, photons: f64) -> SensingModel {
    SensingModel::ghost(DetectorGeometry::sliding(n, n, 3).unwrap(), ModelParams::new(photons)).unwrap()
}

#[test]
fn worst_case_mse_is_the_covariance_trace() {
    let model = ghost(6, 2.0);
    let plan = ReductionPlan::worst_case(&model).unwrap();
    let trace = plan.covariance().trace();
    assert!((plan.worst_case_mse() - trace).abs() <= 1e-10 * trace);
    let f = worst_case_f(&model);
    assert!(f.data().iter().all(|&v| v == 1.0));
}

#[test]
fn linear_estimate_is_unbiased_on_sixteen_by_sixteen() {
    let n = 16;
    let model = ghost(n, 1.0);
    let plan = ReductionPlan::worst_case(&model).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let f = ObjectImage::new(n, n, (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let draws = 600;
    let mut sum = DVector::zeros(n * n);
    let mut sum_sq = DVector::zeros(n * n);
    for s in 0..draws {
        let m = simulate_gi(&f, &model, &AcquisitionConfig::ghost(1.0, s)).unwrap();
        let r = plan.linear(&model, &m.xi).unwrap().estimate;
        sum_sq += r.component_mul(&r);
        sum += r;
    }
    let k = draws as f64;
    for i in 0..n * n {
        let mean = sum[i] / k;
        let var = (sum_sq[i] / k - mean * mean) * k / (k - 1.0);
        assert!((mean - f.data()[i]).abs() <= 4.0 * (var / k).sqrt(), "pixel {i}");
    }
}

#[test]
fn interior_linear_estimate_survives_refinement() {
    let n = 6;
    let model = ghost(n, 1e6);
    let plan = ReductionPlan::worst_case(&model).unwrap();
    let f = ObjectImage::constant(n, n, 0.5).unwrap();
    let cfg = PipelineConfig::new(SparsityBasis::identity(n, n).unwrap(), 0.0);
    for seed in 0..5 {
        let m = simulate_gi(&f, &model, &AcquisitionConfig::ghost(1e6, seed)).unwrap();
        let (linear, refined, _) = plan.constrained(&model, &m.xi, &cfg).unwrap();
        assert!(linear.estimate.iter().all(|v| *v > 0.0 && *v < 1.0));
        assert_eq!(linear.estimate, refined.estimate);
        assert!(refined.converged);
    }
}

#[test]
fn zero_lambda_is_the_no_sparsity_pipeline() {
    let n = 8;
    let model = ghost(n, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = ObjectImage::new(n, n, (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let m = simulate_gi(&f, &model, &AcquisitionConfig::ghost(1.0, 5)).unwrap();
    let none = run_pipeline(&m.xi, &model, &PipelineConfig::new(SparsityBasis::identity(n, n).unwrap(), 0.0)).unwrap();
    for kind in [BasisKind::Dct2, BasisKind::Haar2] {
        let cfg = PipelineConfig::new(SparsityBasis::new(kind, n, n).unwrap(), 0.0);
        let out = run_pipeline(&m.xi, &model, &cfg).unwrap();
        assert_eq!(out.image(), none.image());
        assert_eq!(out.diagnostics.coefficients_zeroed, 0);
    }
}

#[test]
fn thresholding_shrinks_noise_on_zero_coefficients() {
    let n = 8;
    let model = ghost(n, 1.0);
    let plan = ReductionPlan::worst_case(&model).unwrap();
    let f = ObjectImage::constant(n, n, 0.4).unwrap();
    let basis = SparsityBasis::haar2(n, n).unwrap();
    let std = plan.component_std(&basis).unwrap();
    let truth = basis.forward(f.data()).unwrap();
    let cfg = PipelineConfig::new(basis.clone(), 2.0);
    let draws = 400;
    let mut before = vec![0.0; n * n];
    let mut after = vec![0.0; n * n];
    for s in 0..draws {
        let m = simulate_gi(&f, &model, &AcquisitionConfig::ghost(1.0, s)).unwrap();
        let (_, refined, _) = plan.constrained(&model, &m.xi, &cfg).unwrap();
        let c = basis.forward(refined.estimate.as_slice()).unwrap();
        for i in 0..n * n {
            let kept = if c[i].abs() < 2.0 * std[i] { 0.0 } else { c[i] };
            before[i] += c[i] * c[i];
            after[i] += kept * kept;
        }
    }
    for i in (0..n * n).filter(|&i| truth[i].abs() < 1e-12) {
        assert!(after[i] <= before[i], "component {i}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pipeline_output_stays_in_the_unit_box(
        seed in any::<u64>(),
        lambda in 0.0f64..4.0,
        kind in prop_oneof![Just(BasisKind::Identity), Just(BasisKind::Dct2), Just(BasisKind::Haar2)],
        spread in 0.1f64..50.0,
    ) {
        let n = 6;
        let model = ghost(n, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xi = DVector::from_fn(model.n_measurements(), |_, _| rng.random_range(-spread..spread));
        let out = run_pipeline(&xi, &model, &PipelineConfig::new(SparsityBasis::new(kind, n, n).unwrap(), lambda)).unwrap();
        prop_assert!(out.image().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(out.constrained.estimate.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
