use std::f64::consts::PI;

use mgi_core::transforms::{BasisKind, SparsityBasis};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Orthonormal 2-D DCT-II by direct summation over a row-major `h x w` image.
fn naive_dct2(x: &[f64], w: usize, h: usize) -> Vec<f64> {
    let c = |k: usize, n: usize| if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
    let mut out = vec![0.0; w * h];
    for u in 0..h {
        for v in 0..w {
            let mut s = 0.0;
            for r in 0..h {
                for col in 0..w {
                    s += x[r * w + col]
                        * (PI * (2 * r + 1) as f64 * u as f64 / (2 * h) as f64).cos()
                        * (PI * (2 * col + 1) as f64 * v as f64 / (2 * w) as f64).cos();
                }
            }
            out[u * w + v] = c(u, h) * c(v, w) * s;
        }
    }
    out
}

fn dense(basis: &SparsityBasis) -> DMatrix<f64> {
    let n = basis.len();
    let mut t = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        t.set_column(i, &nalgebra::DVector::from_vec(basis.forward(&e).unwrap()));
    }
    t
}

#[test]
fn constant_image_maps_to_dc() {
    let b = SparsityBasis::dct2(4, 4).unwrap();
    let c = b.forward(&[0.37; 16]).unwrap();
    assert!((c[0] - 4.0 * 0.37).abs() < 1e-12);
    assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn one_level_haar_on_two_by_two() {
    let (a, b, c, d) = (0.1, 0.7, 0.4, 0.9);
    let got = SparsityBasis::haar2(2, 2).unwrap().forward(&[a, b, c, d]).unwrap();
    let want = [(a + b + c + d) / 2.0, (a - b + c - d) / 2.0, (a + b - c - d) / 2.0, (a - b - c + d) / 2.0];
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() < 1e-15);
    }
}

#[test]
fn ramp_matches_double_sum() {
    let ramp: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
    let got = SparsityBasis::dct2(4, 4).unwrap().forward(&ramp).unwrap();
    for (g, w) in got.iter().zip(naive_dct2(&ramp, 4, 4)) {
        assert!((g - w).abs() < 1e-12);
    }
}

#[test]
fn rectangular_dct_matches_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..6 * 10).map(|_| rng.random_range(0.0..1.0)).collect();
    let got = SparsityBasis::dct2(10, 6).unwrap().forward(&x).unwrap();
    for (g, w) in got.iter().zip(naive_dct2(&x, 10, 6)) {
        assert!((g - w).abs() < 1e-12);
    }
}

#[test]
fn basis_images_are_orthonormal() {
    for basis in [SparsityBasis::dct2(8, 8).unwrap(), SparsityBasis::haar2(8, 8).unwrap()] {
        let n = basis.len();
        let images = DMatrix::from_fn(n, n, |i, k| {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            basis.inverse(&e).unwrap()[i]
        });
        let gram = images.transpose() * &images;
        assert!((gram - DMatrix::identity(n, n)).amax() < 1e-12, "{}", basis.kind());
    }
}

#[test]
fn identity_covariance_gives_unit_deviations() {
    for kind in [BasisKind::Identity, BasisKind::Dct2, BasisKind::Haar2] {
        let b = SparsityBasis::new(kind, 8, 4).unwrap();
        let s = b.component_std(&DMatrix::identity(32, 32)).unwrap();
        assert!(s.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }
    let d: Vec<f64> = (1..=4).map(|i| i as f64).collect();
    let s = SparsityBasis::identity(2, 2)
        .unwrap()
        .component_std(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d.clone())))
        .unwrap();
    for (g, w) in s.iter().zip(&d) {
        assert_eq!(*g, w.sqrt());
    }
}

#[test]
fn component_std_matches_dense_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for basis in [SparsityBasis::dct2(8, 8).unwrap(), SparsityBasis::haar2(8, 8).unwrap()] {
        let t = dense(&basis);
        let b = DMatrix::from_fn(64, 64, |_, _| rng.random_range(-1.0..1.0));
        let sigma = &b * b.transpose() + DMatrix::identity(64, 64) * 0.01;
        let want = (&t * &sigma * t.transpose()).diagonal().map(f64::sqrt);
        let got = basis.component_std(&sigma).unwrap();
        assert!((got - want).amax() < 1e-10);
    }
}

#[test]
fn block_constant_image_lives_in_approximation_band() {
    let b = SparsityBasis::haar2(16, 16).unwrap();
    let block = 1 << b.haar_levels();
    let coarse = 16 / block;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let values: Vec<f64> = (0..coarse * coarse).map(|_| rng.random_range(0.0..1.0)).collect();
    let img: Vec<f64> = (0..256).map(|i| values[(i / 16 / block) * coarse + (i % 16) / block]).collect();
    let c = b.forward(&img).unwrap();
    for (i, v) in c.iter().enumerate() {
        if i / 16 >= coarse || i % 16 >= coarse {
            assert!(v.abs() < 1e-12, "coefficient {i} = {v}");
        }
    }

    // two levels on an 8x8 grid: constant 4x4 blocks
    let b2 = SparsityBasis::haar2_with_levels(8, 8, 2).unwrap();
    let img: Vec<f64> = (0..64).map(|i| if (i / 8) < 4 && (i % 8) >= 4 { 1.0 } else { 0.25 }).collect();
    let c = b2.forward(&img).unwrap();
    for (i, v) in c.iter().enumerate() {
        if i / 8 >= 2 || i % 8 >= 2 {
            assert!(v.abs() < 1e-12);
        }
    }
}

fn kinds() -> impl Strategy<Value = BasisKind> {
    prop_oneof![Just(BasisKind::Identity), Just(BasisKind::Dct2), Just(BasisKind::Haar2)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_preserves_norm_and_is_linear(
        kind in kinds(),
        w in prop::sample::select(vec![2usize, 4, 6, 8, 16, 32]),
        h in prop::sample::select(vec![2usize, 4, 8, 12, 16]),
        seed in any::<u64>(),
        a in -3.0f64..3.0,
        bcoef in -3.0f64..3.0,
    ) {
        let basis = SparsityBasis::new(kind, w, h).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..w * h).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..w * h).map(|_| rng.random_range(-1.0..1.0)).collect();
        let tx = basis.forward(&x).unwrap();
        let ty = basis.forward(&y).unwrap();
        let norm = |v: &[f64]| v.iter().map(|z| z * z).sum::<f64>().sqrt();
        prop_assert!((norm(&tx) - norm(&x)).abs() < 1e-12);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + bcoef * q).collect();
        let tc = basis.forward(&combo).unwrap();
        for i in 0..w * h {
            prop_assert!((tc[i] - (a * tx[i] + bcoef * ty[i])).abs() < 1e-12);
        }
        let back = basis.inverse(&tx).unwrap();
        for i in 0..w * h {
            prop_assert!((back[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn deviations_positive_for_positive_definite(kind in kinds(), seed in any::<u64>()) {
        let basis = SparsityBasis::new(kind, 4, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(16, 16, |_, _| rng.random_range(-1.0..1.0));
        let sigma = &b * b.transpose() + DMatrix::identity(16, 16) * 1e-3;
        prop_assert!(basis.component_std(&sigma).unwrap().iter().all(|v| *v > 0.0));
    }
}
