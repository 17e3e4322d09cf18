//! Orthogonal factorizations: Householder QR, one-sided Jacobi SVD, cyclic
//! Jacobi symmetric eigensolver, and a Gaussian-sketch randomized SVD.

use super::{kernels, Tensor};
use crate::error::{invalid, Error, Result};
use crate::rng::seeded;
use rand_distr::{Distribution, StandardNormal};

/// Entry-count guard for [`dense_svd`].
pub const DENSE_SVD_MAX_ENTRIES: usize = 1_000_000;
pub const RSVD_DEFAULT_OVERSAMPLE: usize = 10;
pub const RSVD_DEFAULT_POWER_ITERS: usize = 2;

const JACOBI_MAX_SWEEPS: usize = 80;

/// Thin SVD `M = U·diag(s)·Vt` with `s` sorted nonincreasing.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Tensor,
    pub s: Vec<f64>,
    pub vt: Tensor,
}

impl Svd {
    pub fn reconstruct(&self) -> Tensor {
        let mut us = self.u.clone();
        let r = self.s.len();
        for i in 0..us.rows() {
            for (v, s) in us.row_mut(i).iter_mut().zip(&self.s) {
                *v *= s;
            }
        }
        debug_assert_eq!(us.cols(), r);
        super::matmul(&us, &self.vt).expect("conforming factors")
    }
}

/// Column-major working matrix; Jacobi rotations touch whole columns.
struct Columns {
    rows: usize,
    data: Vec<Vec<f64>>,
}

impl Columns {
    fn from_row_major(rows: usize, cols: usize, a: &[f64]) -> Self {
        let data = (0..cols)
            .map(|j| (0..rows).map(|i| a[i * cols + j]).collect())
            .collect();
        Self { rows, data }
    }

    fn identity(n: usize) -> Self {
        let data = (0..n)
            .map(|j| {
                let mut c = vec![0.0; n];
                c[j] = 1.0;
                c
            })
            .collect();
        Self { rows: n, data }
    }

    fn to_row_major(&self, order: &[usize]) -> Vec<f64> {
        let cols = order.len();
        let mut out = vec![0.0; self.rows * cols];
        for (jj, &j) in order.iter().enumerate() {
            for i in 0..self.rows {
                out[i * cols + jj] = self.data[j][i];
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// One-sided (Hestenes) Jacobi on the columns of `w`, accumulating the
/// right rotations into `v`. On return the columns of `w` are mutually
/// orthogonal.
fn hestenes(w: &mut Columns, v: &mut Columns) {
    let n = w.data.len();
    let tol = 1e-15;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&w.data[p], &w.data[p]);
                let beta = dot(&w.data[q], &w.data[q]);
                let gamma = dot(&w.data[p], &w.data[q]);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w.data, p, q, c, s);
                rotate(&mut v.data, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
}

/// Householder QR of a tall matrix `a: m×n` (`m ≥ n`). Returns the thin
/// factor `Q: m×n` with orthonormal columns and upper-triangular `R: n×n`.
pub fn householder_qr(a: &Tensor) -> Result<(Tensor, Tensor)> {
    let (m, n) = a.dims2()?;
    if m < n {
        return Err(invalid(format!("householder_qr needs rows >= cols, got {m}x{n}")));
    }
    let mut r = a.data().to_vec();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut v: Vec<f64> = (j..m).map(|i| r[i * n + j]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        v.iter_mut().for_each(|x| *x /= vnorm);
        for col in j..n {
            let proj: f64 = (j..m).map(|i| v[i - j] * r[i * n + col]).sum();
            for i in j..m {
                r[i * n + col] -= 2.0 * v[i - j] * proj;
            }
        }
        reflectors.push(v);
    }
    // Q = H_0 H_1 … H_{n-1} applied to the first n columns of the identity.
    let mut q = vec![0.0; m * n];
    for j in 0..n {
        q[j * n + j] = 1.0;
    }
    for (j, v) in reflectors.iter().enumerate().rev() {
        if v.is_empty() {
            continue;
        }
        for col in 0..n {
            let proj: f64 = (j..m).map(|i| v[i - j] * q[i * n + col]).sum();
            for i in j..m {
                q[i * n + col] -= 2.0 * v[i - j] * proj;
            }
        }
    }
    let mut rr = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            rr[i * n + j] = r[i * n + j];
        }
    }
    Ok((Tensor::new(vec![m, n], q)?, Tensor::new(vec![n, n], rr)?))
}

/// Completes zero columns of `u` (indices in `missing`) to an orthonormal set
/// by Gram–Schmidt against the canonical basis.
fn complete_orthonormal(u: &mut Columns, missing: &[usize]) {
    let m = u.rows;
    let mut basis_idx = 0;
    for &j in missing {
        while basis_idx < m {
            let mut cand = vec![0.0; m];
            cand[basis_idx] = 1.0;
            basis_idx += 1;
            for _ in 0..2 {
                for (k, col) in u.data.iter().enumerate() {
                    if k == j || col.iter().all(|&x| x == 0.0) {
                        continue;
                    }
                    let p = dot(col, &cand);
                    cand.iter_mut().zip(col).for_each(|(c, x)| *c -= p * x);
                }
            }
            let nrm = dot(&cand, &cand).sqrt();
            if nrm > 1e-8 {
                cand.iter_mut().for_each(|c| *c /= nrm);
                u.data[j] = cand;
                break;
            }
        }
    }
}

/// SVD of a tall matrix (`m ≥ n`), returning `U: m×n`, `s`, `Vt: n×n`.
fn svd_tall(m: usize, n: usize, a: &[f64]) -> Result<Svd> {
    // QR first so the Jacobi sweeps work on an n×n triangle.
    let (q, r) = if m > n {
        let (q, r) = householder_qr(&Tensor::new(vec![m, n], a.to_vec())?)?;
        (Some(q), r)
    } else {
        (None, Tensor::new(vec![m, n], a.to_vec())?)
    };
    let mut w = Columns::from_row_major(n, n, r.data());
    let mut v = Columns::identity(n);
    hestenes(&mut w, &mut v);

    let mut s: Vec<f64> = w.data.iter().map(|c| dot(c, c).sqrt()).collect();
    let smax = s.iter().copied().fold(0.0, f64::max);
    let mut missing = Vec::new();
    for (j, col) in w.data.iter_mut().enumerate() {
        if s[j] > smax * 1e-300 && s[j] > 0.0 {
            let inv = 1.0 / s[j];
            col.iter_mut().for_each(|x| *x *= inv);
        } else {
            s[j] = 0.0;
            col.iter_mut().for_each(|x| *x = 0.0);
            missing.push(j);
        }
    }
    complete_orthonormal(&mut w, &missing);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap().then(i.cmp(&j)));
    let s_sorted: Vec<f64> = order.iter().map(|&j| s[j]).collect();
    let ur = Tensor::new(vec![n, n], w.to_row_major(&order))?;
    let v_sorted = Tensor::new(vec![n, n], v.to_row_major(&order))?;
    let u = match q {
        Some(q) => super::matmul(&q, &ur)?,
        None => ur,
    };
    Ok(Svd {
        u,
        s: s_sorted,
        vt: v_sorted.transpose()?,
    })
}

/// Thin SVD of `m: r×c` with `k = min(r, c)` singular triplets.
///
/// Refuses inputs with more than [`DENSE_SVD_MAX_ENTRIES`] entries.
pub fn dense_svd(m: &Tensor) -> Result<Svd> {
    let (r, c) = m.dims2()?;
    if r * c > DENSE_SVD_MAX_ENTRIES {
        return Err(invalid(format!(
            "dense_svd limited to {DENSE_SVD_MAX_ENTRIES} entries, got {r}x{c}"
        )));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("dense_svd input".into()));
    }
    if r >= c {
        svd_tall(r, c, m.data())
    } else {
        let t = m.transpose()?;
        let svd = svd_tall(c, r, t.data())?;
        Ok(Svd {
            u: svd.vt.transpose()?,
            s: svd.s,
            vt: svd.u.transpose()?,
        })
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in nonincreasing order and the matching eigenvectors
/// as the columns of an n×n matrix.
pub fn symmetric_eigen(a: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    let (n, n2) = a.dims2()?;
    if n != n2 {
        return Err(invalid(format!("symmetric_eigen needs a square matrix, got {n}x{n2}")));
    }
    let mut s = a.data().to_vec();
    let mut v = Tensor::eye(n).into_data();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| s[i * n + j] * s[i * n + j])
            .sum();
        let diag: f64 = (0..n).map(|i| s[i * n + i] * s[i * n + i]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = s[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (s[q * n + q] - s[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (akp, akq) = (s[k * n + p], s[k * n + q]);
                    s[k * n + p] = c * akp - sn * akq;
                    s[k * n + q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (s[p * n + k], s[q * n + k]);
                    s[p * n + k] = c * apk - sn * aqk;
                    s[q * n + k] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - sn * vkq;
                    v[k * n + q] = sn * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let evals: Vec<f64> = (0..n).map(|i| s[i * n + i]).collect();
    order.sort_by(|&i, &j| evals[j].partial_cmp(&evals[i]).unwrap().then(i.cmp(&j)));
    let mut vecs = vec![0.0; n * n];
    for (jj, &j) in order.iter().enumerate() {
        for k in 0..n {
            vecs[k * n + jj] = v[k * n + j];
        }
    }
    Ok((order.iter().map(|&j| evals[j]).collect(), Tensor::new(vec![n, n], vecs)?))
}

/// Rank-`rank` randomized SVD with Gaussian sketching and `power_iters`
/// rounds of re-orthonormalized subspace iteration.
pub fn randomized_svd(
    m: &Tensor,
    rank: usize,
    oversample: usize,
    power_iters: usize,
    seed: u64,
) -> Result<Svd> {
    let (rows, cols) = m.dims2()?;
    let l = rank + oversample;
    if rank == 0 || l > rows.min(cols) {
        return Err(invalid(format!(
            "randomized_svd: rank {rank} + oversample {oversample} exceeds min({rows}, {cols})"
        )));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("randomized_svd input".into()));
    }
    let mut rng = seeded(seed);
    let omega: Vec<f64> = (0..cols * l).map(|_| StandardNormal.sample(&mut rng)).collect();

    let mut y = vec![0.0; rows * l];
    kernels::gemm_nn(rows, cols, l, m.data(), &omega, &mut y);
    let (mut q, _) = householder_qr(&Tensor::new(vec![rows, l], y)?)?;
    for _ in 0..power_iters {
        let mut z = vec![0.0; cols * l];
        kernels::gemm_tn(cols, rows, l, m.data(), q.data(), &mut z);
        let (qz, _) = householder_qr(&Tensor::new(vec![cols, l], z)?)?;
        let mut y = vec![0.0; rows * l];
        kernels::gemm_nn(rows, cols, l, m.data(), qz.data(), &mut y);
        q = householder_qr(&Tensor::new(vec![rows, l], y)?)?.0;
    }
    // B = Qᵀ·M is l×cols; its SVD lifts back through Q.
    let mut b = vec![0.0; l * cols];
    kernels::gemm_tn(l, rows, cols, q.data(), m.data(), &mut b);
    let small = dense_svd(&Tensor::new(vec![l, cols], b)?)?;
    let ub = small.u; // l×l
    let mut ub_r = vec![0.0; l * rank];
    for i in 0..l {
        ub_r[i * rank..(i + 1) * rank].copy_from_slice(&ub.row(i)[..rank]);
    }
    let u = super::matmul(&q, &Tensor::new(vec![l, rank], ub_r)?)?;
    let vt = Tensor::new(vec![rank, cols], small.vt.data()[..rank * cols].to_vec())?;
    Ok(Svd {
        u,
        s: small.s[..rank].to_vec(),
        vt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::tensor::{matmul, matmul_tn};

    fn gaussian(r: usize, c: usize, seed: u64) -> Tensor {
        let mut rng = seeded(seed);
        let d = (0..r * c).map(|_| StandardNormal.sample(&mut rng)).collect();
        Tensor::new(vec![r, c], d).unwrap()
    }

    fn orthonormality_error(q: &Tensor) -> f64 {
        let g = matmul_tn(q, q).unwrap();
        g.max_abs_diff(&Tensor::eye(g.rows()))
    }

    fn rel_frobenius(a: &Tensor, b: &Tensor) -> f64 {
        a.sub(b).unwrap().norm() / b.norm()
    }

    #[test]
    fn permutation_matrix_singular_values() {
        let svd = dense_svd(&Tensor::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert!((svd.s[0] - 1.0).abs() < 1e-15 && (svd.s[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_svd() {
        let svd = dense_svd(&Tensor::from_rows(&[&[2.0]])).unwrap();
        assert_eq!(svd.s, vec![2.0]);
        assert_eq!(svd.u.data()[0].abs(), 1.0);
    }

    #[test]
    fn random_tall_and_wide_residuals() {
        for (r, c, seed) in [(8, 5, 1), (5, 8, 2), (30, 20, 3), (6, 6, 4)] {
            let a = gaussian(r, c, seed);
            let svd = dense_svd(&a).unwrap();
            assert!(orthonormality_error(&svd.u) < 1e-10);
            assert!(orthonormality_error(&svd.vt.transpose().unwrap()) < 1e-10);
            assert!(rel_frobenius(&svd.reconstruct(), &a) < 1e-10);
            assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rank_deficient_keeps_orthonormal_u() {
        let a = matmul(&gaussian(10, 2, 5), &gaussian(2, 6, 6)).unwrap();
        let svd = dense_svd(&a).unwrap();
        assert!(orthonormality_error(&svd.u) < 1e-10);
        assert!(svd.s[2] < 1e-12 * svd.s[0]);
        assert!(rel_frobenius(&svd.reconstruct(), &a) < 1e-12);
    }

    #[test]
    fn size_guard() {
        assert!(dense_svd(&Tensor::zeros(&[1001, 1000])).is_err());
    }

    #[test]
    fn qr_factors() {
        let a = gaussian(9, 4, 7);
        let (q, r) = householder_qr(&a).unwrap();
        assert!(orthonormality_error(&q) < 1e-13);
        assert!(matmul(&q, &r).unwrap().max_abs_diff(&a) < 1e-13);
    }

    #[test]
    fn symmetric_eigen_reconstructs() {
        let g = gaussian(7, 7, 8);
        let a = matmul_tn(&g, &g).unwrap();
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        assert!(orthonormality_error(&vecs) < 1e-12);
        let mut vd = vecs.clone();
        for i in 0..7 {
            for (x, l) in vd.row_mut(i).iter_mut().zip(&vals) {
                *x *= l;
            }
        }
        let back = crate::tensor::matmul_nt(&vd, &vecs).unwrap();
        assert!(back.max_abs_diff(&a) < 1e-11 * a.norm());
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn randomized_diagonal() {
        let mut m = Tensor::zeros(&[5, 5]);
        m.set(&[0, 0], 3.0);
        m.set(&[1, 1], 2.0);
        m.set(&[2, 2], 1.0);
        let svd = randomized_svd(&m, 3, 2, 2, 11).unwrap();
        for (s, e) in svd.s.iter().zip([3.0, 2.0, 1.0]) {
            assert!((s - e).abs() < 1e-10);
        }
    }

    #[test]
    fn randomized_recovers_exact_low_rank() {
        let m = matmul(&gaussian(50, 4, 12), &gaussian(4, 40, 13)).unwrap();
        let svd = randomized_svd(&m, 4, RSVD_DEFAULT_OVERSAMPLE, RSVD_DEFAULT_POWER_ITERS, 5).unwrap();
        assert!(orthonormality_error(&svd.u) < 1e-10);
        assert!(orthonormality_error(&svd.vt.transpose().unwrap()) < 1e-10);
        let err = svd.reconstruct().sub(&m).unwrap().norm();
        assert!(err < 1e-9, "{err:e}");
        assert!(err / m.norm() < 1e-10);
    }

    #[test]
    fn randomized_agrees_with_dense_leading_values() {
        for seed in 0..5 {
            let m = gaussian(30, 20, 100 + seed);
            let dense = dense_svd(&m).unwrap();
            // rank + oversample = min dimension: the sketch spans the full row space.
            let rs = randomized_svd(&m, 10, 10, 2, seed).unwrap();
            for k in 0..10 {
                let rel = (rs.s[k] - dense.s[k]).abs() / dense.s[k];
                assert!(rel < 1e-8, "k={k} rel={rel:e}");
            }
        }
    }

    #[test]
    fn randomized_is_bit_reproducible() {
        let m = gaussian(40, 25, 21);
        let a = randomized_svd(&m, 5, 10, 2, 77).unwrap();
        let b = randomized_svd(&m, 5, 10, 2, 77).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.vt, b.vt);
        assert_eq!(a.s, b.s);
    }

    #[test]
    fn randomized_rejects_oversized_rank() {
        assert!(randomized_svd(&gaussian(6, 5, 1), 4, 2, 1, 0).is_err());
        assert!(randomized_svd(&gaussian(6, 5, 1), 0, 2, 1, 0).is_err());
    }
}
