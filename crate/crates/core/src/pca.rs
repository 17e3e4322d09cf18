//! PCA function bases fitted on training snapshots.
//!
//! A basis stores the mean function and `P` orthonormal component rows.
//! [`PcaBasis::encode`] is the orthogonal projection onto the components after
//! removing the mean; [`PcaBasis::decode`] maps coefficients back to mesh
//! values. Inner products are plain Euclidean sums over mesh points.

use crate::error::{invalid, Error, Result};
use crate::tensor::{
    dense_svd, kernels, randomized_svd, Svd, Tensor, DENSE_SVD_MAX_ENTRIES,
    RSVD_DEFAULT_OVERSAMPLE, RSVD_DEFAULT_POWER_ITERS,
};

pub const DEFAULT_ENERGY_THRESHOLD: f64 = 0.99999;
pub const DEFAULT_P_CAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaOptions {
    pub energy_threshold: f64,
    pub p_cap: usize,
    /// Subtract the column mean before the SVD. Disable to reproduce an
    /// uncentered basis.
    pub center: bool,
    /// Seed for the randomized SVD used on large sample matrices.
    pub seed: u64,
}

impl Default for PcaOptions {
    fn default() -> Self {
        Self {
            energy_threshold: DEFAULT_ENERGY_THRESHOLD,
            p_cap: DEFAULT_P_CAP,
            center: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    mean: Vec<f64>,
    /// P×N, orthonormal rows.
    components: Tensor,
    singular_values: Vec<f64>,
    energy_threshold: f64,
    p_cap: usize,
    centered: bool,
    degenerate: bool,
    /// ⟨mean, e_k⟩ for each component, so encoding is a single affine product.
    mean_proj: Vec<f64>,
}

impl PcaBasis {
    /// Assembles a basis from stored parts (used by checkpoint loading and tests).
    pub fn from_parts(
        mean: Vec<f64>,
        components: Tensor,
        singular_values: Vec<f64>,
        energy_threshold: f64,
        p_cap: usize,
        centered: bool,
        degenerate: bool,
    ) -> Result<Self> {
        let (p, n) = components.dims2()?;
        if mean.len() != n || singular_values.len() != p {
            return Err(Error::ShapeMismatch {
                op: "PcaBasis::from_parts",
                left: vec![mean.len(), singular_values.len()],
                right: vec![n, p],
            });
        }
        let mut mean_proj = vec![0.0; p];
        kernels::gemm_nt(1, n, p, &mean, components.data(), &mut mean_proj);
        Ok(Self {
            mean,
            components,
            singular_values,
            energy_threshold,
            p_cap,
            centered,
            degenerate,
            mean_proj,
        })
    }

    pub fn n_points(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.rows()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &Tensor {
        &self.components
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn energy_threshold(&self) -> f64 {
        self.energy_threshold
    }

    pub fn p_cap(&self) -> usize {
        self.p_cap
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// True when the training samples had no variance; the single component
    /// is then an arbitrary unit vector.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Coefficients `α[c,k] = ⟨f[c,·] − mean, e_k⟩` for every row of `f: d×N`.
    pub fn encode(&self, f: &Tensor) -> Result<Tensor> {
        let (d, n) = f.dims2()?;
        if n != self.n_points() {
            return Err(Error::ShapeMismatch {
                op: "encode",
                left: f.shape().to_vec(),
                right: vec![d, self.n_points()],
            });
        }
        let p = self.n_components();
        let mut out: Vec<f64> = self.mean_proj.iter().map(|v| -v).cycle().take(d * p).collect();
        kernels::gemm_nt(d, n, p, f.data(), self.components.data(), &mut out);
        Tensor::new(vec![d, p], out)
    }

    /// `f[c,·] = mean + Σ_k α[c,k]·e_k` for every row of `alpha: d×P`.
    pub fn decode(&self, alpha: &Tensor) -> Result<Tensor> {
        let (d, p) = alpha.dims2()?;
        if p != self.n_components() {
            return Err(Error::ShapeMismatch {
                op: "decode",
                left: alpha.shape().to_vec(),
                right: vec![d, self.n_components()],
            });
        }
        let n = self.n_points();
        let mut out: Vec<f64> = self.mean.iter().copied().cycle().take(d * n).collect();
        kernels::gemm_nn(d, p, n, alpha.data(), self.components.data(), &mut out);
        Tensor::new(vec![d, n], out)
    }

    /// `decode(encode(f))`
    pub fn reconstruct(&self, f: &Tensor) -> Result<Tensor> {
        self.decode(&self.encode(f)?)
    }
}

/// Smallest `p` whose leading squared singular values hold `threshold` of
/// `total` energy, capped at `p_cap` and floored at 1.
pub fn truncation_rank(singular_values: &[f64], total: f64, threshold: f64, p_cap: usize) -> usize {
    let target = threshold * total;
    let mut acc = 0.0;
    let mut p = singular_values.len();
    for (i, s) in singular_values.iter().enumerate() {
        acc += s * s;
        if acc >= target {
            p = i + 1;
            break;
        }
    }
    p.min(p_cap).max(1)
}

/// Fits a PCA basis to `samples: M×N` (one discretized function per row).
///
/// Multi-channel data shares one scalar basis: stack each channel as its own row.
pub fn fit_pca(samples: &Tensor, opts: &PcaOptions) -> Result<PcaBasis> {
    let (m, n) = samples.dims2()?;
    if m < 2 {
        return Err(invalid(format!("fit_pca needs at least 2 samples, got {m}")));
    }
    if !(opts.energy_threshold > 0.0 && opts.energy_threshold <= 1.0) {
        return Err(invalid(format!(
            "energy threshold must lie in (0, 1], got {}",
            opts.energy_threshold
        )));
    }
    if opts.p_cap == 0 {
        return Err(invalid("p_cap must be at least 1"));
    }
    if !samples.is_finite() {
        return Err(Error::NonFinite("PCA samples".into()));
    }

    let mut mean = vec![0.0; n];
    if opts.center {
        for i in 0..m {
            for (acc, v) in mean.iter_mut().zip(samples.row(i)) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);
    }
    let mut centered = samples.clone();
    for i in 0..m {
        for (v, mu) in centered.row_mut(i).iter_mut().zip(&mean) {
            *v -= mu;
        }
    }
    let total: f64 = centered.data().iter().map(|v| v * v).sum();

    if total == 0.0 {
        let mut e = vec![0.0; n];
        e[0] = 1.0;
        return PcaBasis::from_parts(
            mean,
            Tensor::new(vec![1, n], e)?,
            vec![0.0],
            opts.energy_threshold,
            opts.p_cap,
            opts.center,
            true,
        );
    }

    let (svd, total) = if m * n <= DENSE_SVD_MAX_ENTRIES {
        let svd = dense_svd(&centered)?;
        let total = svd.s.iter().map(|s| s * s).sum();
        (svd, total)
    } else {
        let k = m.min(n);
        let rank = opts.p_cap.min(k);
        let oversample = RSVD_DEFAULT_OVERSAMPLE.min(k - rank);
        let svd = randomized_svd(&centered, rank, oversample, RSVD_DEFAULT_POWER_ITERS, opts.seed)?;
        (svd, total)
    };
    let Svd { s, vt, .. } = svd;
    let p = truncation_rank(&s, total, opts.energy_threshold, opts.p_cap);
    let components = Tensor::new(vec![p, n], vt.data()[..p * n].to_vec())?;
    PcaBasis::from_parts(
        mean,
        components,
        s[..p].to_vec(),
        opts.energy_threshold,
        opts.p_cap,
        opts.center,
        false,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::tensor::{matmul, matmul_nt};
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(r: usize, c: usize, seed: u64) -> Tensor {
        let mut rng = seeded(seed);
        let d = (0..r * c).map(|_| StandardNormal.sample(&mut rng)).collect();
        Tensor::new(vec![r, c], d).unwrap()
    }

    fn low_rank_data(m: usize, n: usize, rank: usize, seed: u64) -> Tensor {
        let mut x = matmul(&gaussian(m, rank, seed), &gaussian(rank, n, seed + 1)).unwrap();
        let mean = gaussian(1, n, seed + 2);
        for i in 0..m {
            for (v, mu) in x.row_mut(i).iter_mut().zip(mean.data()) {
                *v += 5.0 * mu;
            }
        }
        x
    }

    #[test]
    fn two_point_example() {
        let s = Tensor::from_rows(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        let b = fit_pca(&s, &PcaOptions::default()).unwrap();
        assert_eq!(b.n_components(), 1);
        assert!((b.components().at(&[0, 0]).abs() - 1.0).abs() < 1e-15);
        assert!(b.components().at(&[0, 1]).abs() < 1e-15);
        assert!((b.singular_values()[0] - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn zero_variance_is_flagged_degenerate() {
        let s = Tensor::from_rows(&[&[3.0, 4.0], &[3.0, 4.0], &[3.0, 4.0]]);
        let b = fit_pca(&s, &PcaOptions::default()).unwrap();
        assert!(b.is_degenerate());
        assert_eq!(b.mean(), &[3.0, 4.0]);
        assert_eq!(b.n_components(), 1);
        let alpha = b.encode(&s).unwrap();
        assert!(alpha.data().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn rejects_single_sample() {
        assert!(fit_pca(&Tensor::zeros(&[1, 4]), &PcaOptions::default()).is_err());
    }

    #[test]
    fn recovers_rank_three_subspace() {
        let x = low_rank_data(40, 25, 3, 10);
        let b = fit_pca(&x, &PcaOptions::default()).unwrap();
        assert_eq!(b.n_components(), 3);
        let rec = b.reconstruct(&x).unwrap();
        assert!(rec.max_abs_diff(&x) < 1e-9);
        let g = matmul_nt(b.components(), b.components()).unwrap();
        assert!(g.max_abs_diff(&Tensor::eye(3)) < 1e-8);
    }

    #[test]
    fn encode_mean_and_unit_offsets() {
        let x = low_rank_data(30, 12, 4, 20);
        let b = fit_pca(&x, &PcaOptions::default()).unwrap();
        let mean = Tensor::new(vec![1, 12], b.mean().to_vec()).unwrap();
        assert!(b.encode(&mean).unwrap().data().iter().all(|a| a.abs() < 1e-12));
        let mut f = mean.clone();
        for (v, e) in f.data_mut().iter_mut().zip(b.components().row(0)) {
            *v += 2.0 * e;
        }
        let a = b.encode(&f).unwrap();
        assert!((a.data()[0] - 2.0).abs() < 1e-12);
        assert!(a.data()[1..].iter().all(|v| v.abs() < 1e-12));
        let zero = Tensor::zeros(&[2, b.n_components()]);
        let d = b.decode(&zero).unwrap();
        assert_eq!(d.row(0), b.mean());
        assert_eq!(d.row(1), b.mean());
    }

    #[test]
    fn uncentered_variant_keeps_zero_mean() {
        let x = low_rank_data(20, 8, 2, 30);
        let opts = PcaOptions {
            center: false,
            ..Default::default()
        };
        let b = fit_pca(&x, &opts).unwrap();
        assert!(!b.is_centered());
        assert!(b.mean().iter().all(|&m| m == 0.0));
        assert!(b.reconstruct(&x).unwrap().max_abs_diff(&x) < 1e-9);
    }

    #[test]
    fn shape_mismatch_errors() {
        let b = fit_pca(&low_rank_data(10, 6, 2, 40), &PcaOptions::default()).unwrap();
        assert!(b.encode(&Tensor::zeros(&[1, 5])).is_err());
        assert!(b.decode(&Tensor::zeros(&[1, b.n_components() + 1])).is_err());
    }

    #[test]
    fn p_cap_limits_components() {
        let x = gaussian(30, 20, 50);
        let opts = PcaOptions {
            p_cap: 5,
            ..Default::default()
        };
        assert_eq!(fit_pca(&x, &opts).unwrap().n_components(), 5);
    }

    #[test]
    fn randomized_route_on_large_matrices() {
        // 1200 × 1000 exceeds the dense guard.
        let x = low_rank_data(1200, 1000, 6, 60);
        let b = fit_pca(&x, &PcaOptions::default()).unwrap();
        assert_eq!(b.n_components(), 6);
        let rows = Tensor::new(vec![3, 1000], x.data()[..3000].to_vec()).unwrap();
        let rec = b.reconstruct(&rows).unwrap();
        assert!(rec.max_abs_diff(&rows) < 1e-8);
    }
}
