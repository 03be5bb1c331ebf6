use mgi_core::sensing::{DetectorGeometry, ModelParams, SensingModel};
use mgi_core::sim::{simulate_gi, simulate_ordinary, AcquisitionConfig, NoiseMode, ObjectImage};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DRAWS: u64 = 10_000;

fn object(w: usize, h: usize, seed: u64) -> ObjectImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ObjectImage::new(w, h, (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

struct Moments {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

fn moments(samples: &[DVector<f64>]) -> Moments {
    let k = samples.len() as f64;
    let mean = samples.iter().fold(DVector::zeros(samples[0].len()), |acc, s| acc + s) / k;
    let mut cov = DMatrix::zeros(mean.len(), mean.len());
    for s in samples {
        let d = s - &mean;
        cov.ger(1.0, &d, &d, 1.0);
    }
    Moments { mean, cov: cov / (k - 1.0) }
}

fn draw(f: &ObjectImage, model: &SensingModel, cfg: &AcquisitionConfig, draws: u64) -> Vec<DVector<f64>> {
    let af = model.apply_a(f.data());
    (0..draws)
        .map(|s| {
            let c = cfg.clone().with_seed(1_000_000 + s);
            let m = match c.arms {
                1 => simulate_ordinary(f, model, &c),
                _ => simulate_gi(f, model, &c),
            }
            .unwrap();
            m.xi - &af
        })
        .collect()
}

fn check_moments(samples: &[DVector<f64>], sigma: &DMatrix<f64>) {
    let m = moments(samples);
    let k = samples.len() as f64;
    for i in 0..m.mean.len() {
        let se = (m.cov[(i, i)] / k).sqrt();
        assert!(m.mean[i].abs() <= 4.0 * se, "component {i}: mean {} with SE {se}", m.mean[i]);
    }
    let rel = (&m.cov - sigma).norm() / sigma.norm();
    assert!(rel <= 0.05, "empirical covariance off by {rel}");
}

#[test]
fn same_seed_same_measurement() {
    let f = object(6, 5, 1);
    let model = SensingModel::ghost(DetectorGeometry::sliding(6, 5, 3).unwrap(), ModelParams::new(2.0)).unwrap();
    for mode in [NoiseMode::Gaussian, NoiseMode::Poisson] {
        let mut cfg = AcquisitionConfig::ghost(2.0, 42);
        cfg.noise_mode = mode;
        let a = simulate_gi(&f, &model, &cfg).unwrap();
        let b = simulate_gi(&f, &model, &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate_gi(&f, &model, &cfg.clone().with_seed(43)).unwrap();
        assert_ne!(a.xi, c.xi);
    }
}

#[test]
fn ghost_noise_has_the_model_moments() {
    let (w, h) = (4, 4);
    let f = object(w, h, 2);
    let p = ModelParams::new(2.0).with_noise_photons(5.0, 0.3);
    let model = SensingModel::ghost(DetectorGeometry::sliding(w, h, 3).unwrap(), p).unwrap();
    let sigma = model.build_sigma_nu(f.data()).unwrap().to_dense();
    for mode in [NoiseMode::Gaussian, NoiseMode::Poisson] {
        let mut cfg = AcquisitionConfig::ghost(2.0, 0).with_noise_photons(5.0, 0.3);
        cfg.noise_mode = mode;
        check_moments(&draw(&f, &model, &cfg, DRAWS), &sigma);
    }
}

#[test]
fn ordinary_noise_has_the_model_moments() {
    let (w, h) = (4, 4);
    let f = object(w, h, 3);
    let p = ModelParams::new(3.0).with_noise_photons(4.0, 0.1);
    let model = SensingModel::ordinary(DetectorGeometry::sliding(w, h, 3).unwrap(), p).unwrap();
    let sigma = model.build_sigma_nu(f.data()).unwrap().to_dense();
    for mode in [NoiseMode::Gaussian, NoiseMode::Poisson] {
        let mut cfg = AcquisitionConfig::ordinary(3.0, 0).with_noise_photons(4.0, 0.1);
        cfg.noise_mode = mode;
        check_moments(&draw(&f, &model, &cfg, DRAWS), &sigma);
    }
}

fn mean_variance(samples: &[DVector<f64>]) -> f64 {
    let m = moments(samples);
    m.cov.diagonal().mean()
}

#[test]
fn variance_grows_with_noise_photons() {
    let f = object(4, 4, 4);
    let g = DetectorGeometry::sliding(4, 4, 3).unwrap();
    let mut last = 0.0;
    for rate in [0.0, 2.0, 8.0, 32.0] {
        let model = SensingModel::ghost(g, ModelParams::new(2.0).with_noise_photons(rate, 0.1)).unwrap();
        let cfg = AcquisitionConfig::ghost(2.0, 0).with_noise_photons(rate, 0.1);
        let v = mean_variance(&draw(&f, &model, &cfg, 2000));
        assert!(v >= last, "rate {rate}: {v} < {last}");
        last = v;
    }
}

#[test]
fn relative_noise_shrinks_with_photons() {
    let f = object(4, 4, 5);
    let g = DetectorGeometry::sliding(4, 4, 3).unwrap();
    let mut last = [f64::INFINITY; 2];
    for photons in [0.5, 2.0, 8.0, 32.0] {
        for (k, ordinary) in [false, true].into_iter().enumerate() {
            let p = ModelParams::new(photons).with_noise_photons(3.0, 0.1);
            let (model, cfg) = if ordinary {
                (
                    SensingModel::ordinary(g, p).unwrap(),
                    AcquisitionConfig::ordinary(photons, 0).with_noise_photons(3.0, 0.1),
                )
            } else {
                (
                    SensingModel::ghost(g, p).unwrap(),
                    AcquisitionConfig::ghost(photons, 0).with_noise_photons(3.0, 0.1),
                )
            };
            let signal = model.apply_a(f.data()).mean();
            let rel = mean_variance(&draw(&f, &model, &cfg, 2000)) / (signal * signal);
            assert!(rel <= last[k], "photons {photons}: {rel} > {}", last[k]);
            last[k] = rel;
        }
    }
}

#[test]
fn coincidence_window_suppresses_noise_photons() {
    let g = DetectorGeometry::sliding(4, 4, 3).unwrap();
    let dark = ObjectImage::constant(4, 4, 0.0).unwrap();
    let p = ModelParams::new(1.0).with_noise_photons(6.0, 0.1);
    let gi = SensingModel::ghost(g, p.clone()).unwrap();
    let ord = SensingModel::ordinary(g, p).unwrap();
    let m = g.n_detectors();
    for i in 0..m {
        assert!(gi.sigma_prime()[i] < ord.sigma_prime()[i]);
    }
    let gi_var = moments(&draw(&dark, &gi, &AcquisitionConfig::ghost(1.0, 0).with_noise_photons(6.0, 0.1), 4000))
        .cov
        .diagonal();
    let ord_var = moments(&draw(
        &dark,
        &ord,
        &AcquisitionConfig::ordinary(1.0, 0).with_noise_photons(6.0, 0.1),
        4000,
    ))
    .cov
    .diagonal();
    for i in 0..m {
        assert!(gi_var[i] < ord_var[i], "detector {i}: {} vs {}", gi_var[i], ord_var[i]);
    }

    // p_acc = 1 removes the advantage
    let p = ModelParams::new(1.0).with_noise_photons(6.0, 1.0);
    let gi = SensingModel::ghost(g, p.clone()).unwrap();
    let ord = SensingModel::ordinary(g, p).unwrap();
    assert_eq!(gi.sigma_prime().rows(0, m), ord.sigma_prime().rows(0, m));
}

#[test]
fn zero_noise_scale_is_exact() {
    let f = object(5, 5, 6);
    let model = SensingModel::ghost(DetectorGeometry::sliding(5, 5, 3).unwrap(), ModelParams::new(1.0)).unwrap();
    let mut cfg = AcquisitionConfig::ghost(1.0, 9);
    cfg.noise_scale = 0.0;
    assert_eq!(simulate_gi(&f, &model, &cfg).unwrap().xi, model.apply_a(f.data()));
}

#[test]
fn acquisition_must_match_model() {
    let f = object(4, 4, 7);
    let model = SensingModel::ghost(DetectorGeometry::sliding(4, 4, 3).unwrap(), ModelParams::new(1.0)).unwrap();
    assert!(simulate_gi(&f, &model, &AcquisitionConfig::ghost(2.0, 0)).is_err());
    assert!(simulate_gi(&f, &model, &AcquisitionConfig::ordinary(1.0, 0)).is_err());
    let wrong = object(5, 4, 7);
    assert!(simulate_gi(&wrong, &model, &AcquisitionConfig::ghost(1.0, 0)).is_err());
}
