use gitnet_core::pca::fit_pca;
use gitnet_core::tensor::matmul;
use gitnet_core::{PcaOptions, Tensor};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `rows×cols` matrix of rank `rank` plus a constant row offset.
fn low_rank(rows: usize, cols: usize, rank: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Tensor::from_fn(&[rows, rank], |_| rng.random::<f64>() * 2.0 - 1.0);
    let b = Tensor::from_fn(&[rank, cols], |_| rng.random::<f64>() * 2.0 - 1.0);
    let offset: Vec<f64> = (0..cols).map(|_| rng.random::<f64>()).collect();
    let mut m = matmul(&a, &b).unwrap();
    for i in 0..rows {
        for (v, o) in m.row_mut(i).iter_mut().zip(&offset) {
            *v += o;
        }
    }
    m
}

fn centered_spectrum(samples: &Tensor) -> Vec<f64> {
    let (m, n) = (samples.rows(), samples.cols());
    let mut x = DMatrix::from_row_slice(m, n, samples.data());
    for j in 0..n {
        let mu = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-mu);
    }
    let mut s: Vec<f64> = x.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

fn squared_residual(samples: &Tensor, opts: &PcaOptions) -> (usize, f64) {
    let basis = fit_pca(samples, opts).unwrap();
    let rec = basis.reconstruct(samples).unwrap();
    let r = samples.sub(&rec).unwrap().data().iter().map(|v| v * v).sum();
    (basis.n_components(), r)
}

#[test]
fn reconstruction_error_equals_discarded_energy() {
    let samples = low_rank(200, 300, 10, 5);
    let s = centered_spectrum(&samples);
    for threshold in [0.9, 0.99, 0.99999] {
        let opts = PcaOptions { energy_threshold: threshold, ..PcaOptions::default() };
        let (p, r) = squared_residual(&samples, &opts);
        let tail: f64 = s[p..].iter().map(|v| v * v).sum();
        let rel = (r - tail).abs() / tail.max(1e-300);
        assert!(rel < 1e-8 || (r - tail).abs() < 1e-18, "threshold {threshold}: P={p}, residual {r:e} vs {tail:e}");
    }
}

#[test]
fn full_energy_reconstructs_exactly() {
    let samples = low_rank(60, 40, 7, 9);
    let opts = PcaOptions { energy_threshold: 1.0, p_cap: 40, ..PcaOptions::default() };
    let basis = fit_pca(&samples, &opts).unwrap();
    assert!(basis.n_components() <= 40);
    let rec = basis.reconstruct(&samples).unwrap();
    assert!(rec.max_abs_diff(&samples) < 1e-9);
}

#[test]
fn components_are_orthonormal() {
    let samples = low_rank(80, 50, 12, 2);
    let basis = fit_pca(&samples, &PcaOptions::default()).unwrap();
    let e = basis.components();
    let gram = matmul(e, &e.transpose().unwrap()).unwrap();
    assert!(gram.max_abs_diff(&Tensor::eye(basis.n_components())) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn p_never_exceeds_cap(seed in 0u64..1000, cap in 1usize..15, threshold in 0.5f64..1.0) {
        let samples = low_rank(30, 20, 10, seed);
        let opts = PcaOptions { energy_threshold: threshold, p_cap: cap, ..PcaOptions::default() };
        prop_assert!(fit_pca(&samples, &opts).unwrap().n_components() <= cap);
    }

    #[test]
    fn encode_is_linear_on_centered_inputs(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let samples = low_rank(40, 25, 6, seed);
        let basis = fit_pca(&samples, &PcaOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let f = Tensor::from_fn(&[1, 25], |_| rng.random::<f64>() - 0.5);
        let g = Tensor::from_fn(&[1, 25], |_| rng.random::<f64>() - 0.5);
        let mu = Tensor::new(vec![1, 25], basis.mean().to_vec()).unwrap();
        let shift = |t: &Tensor| t.add(&mu).unwrap();
        let combo = f.scale(a).add(&g.scale(b)).unwrap();
        let lhs = basis.encode(&shift(&combo)).unwrap();
        let rhs = basis
            .encode(&shift(&f)).unwrap().scale(a)
            .add(&basis.encode(&shift(&g)).unwrap().scale(b)).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
    }

    #[test]
    fn reconstruction_is_idempotent(seed in 0u64..1000) {
        let samples = low_rank(40, 25, 8, seed);
        let opts = PcaOptions { energy_threshold: 0.95, ..PcaOptions::default() };
        let basis = fit_pca(&samples, &opts).unwrap();
        let once = basis.reconstruct(&samples).unwrap();
        let twice = basis.reconstruct(&once).unwrap();
        prop_assert!(once.max_abs_diff(&twice) < 1e-10);
    }
}
