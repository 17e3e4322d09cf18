//! Dataset generators: periodic Gaussian random fields, exact advection,
//! finite-difference Poisson with Gaussian-process boundary data, and
//! synthetic low-rank linear operators.
//!
//! Sample `i` of every generator draws from its own stream seeded with
//! `splitmix64(seed ^ i)`, so samples do not depend on how many are requested.

use crate::error::{invalid, Error, Result};
use crate::rng::{sample_rng, Rng};
use crate::tensor::{symmetric_eigen, Tensor};
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::{PI, SQRT_2};

/// Lengthscale of the boundary-data kernel.
pub const POISSON_LENGTHSCALE: f64 = 0.2;
pub const POISSON_SOURCE: f64 = -1.0;
/// Backward-error bound accepted from the Poisson solver.
pub const POISSON_RESIDUAL_TOL: f64 = 1e-10;
const GP_EIGEN_FLOOR: f64 = 1e-12;

/// Uniform points `x_j = j/n` on the periodic unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mesh1D {
    pub n: usize,
}

impl Mesh1D {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("periodic mesh needs at least 2 points, got {n}")));
        }
        Ok(Mesh1D { n })
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| j as f64 / self.n as f64).collect()
    }
}

/// Uniform `nx×ny` grid on the unit square, node `(i, j)` at `(i/(nx−1), j/(ny−1))`.
///
/// Boundary nodes are listed counterclockwise from the origin: bottom edge
/// left to right, right edge upward, top edge right to left, left edge
/// downward. Interior nodes are stored row by row (`j` outer, `i` inner).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mesh2D {
    pub nx: usize,
    pub ny: usize,
}

impl Mesh2D {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(invalid(format!("grid must be at least 3x3, got {nx}x{ny}")));
        }
        Ok(Mesh2D { nx, ny })
    }

    pub fn n_boundary(&self) -> usize {
        2 * (self.nx + self.ny) - 4
    }

    pub fn n_interior(&self) -> usize {
        (self.nx - 2) * (self.ny - 2)
    }

    /// `(i, j)` of every boundary node in counterclockwise order.
    pub fn boundary_nodes(&self) -> Vec<(usize, usize)> {
        let (nx, ny) = (self.nx, self.ny);
        let mut v = Vec::with_capacity(self.n_boundary());
        v.extend((0..nx).map(|i| (i, 0)));
        v.extend((1..ny).map(|j| (nx - 1, j)));
        v.extend((0..nx - 1).rev().map(|i| (i, ny - 1)));
        v.extend((1..ny - 1).rev().map(|j| (0, j)));
        v
    }

    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 / (self.nx - 1) as f64, j as f64 / (self.ny - 1) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshDesc {
    Periodic1D { n: usize },
    /// Boundary trace of a square grid.
    Boundary2D { nx: usize, ny: usize },
    /// Interior nodes of a square grid.
    Interior2D { nx: usize, ny: usize },
    /// Bare point set, e.g. a vector space without geometry.
    Points { n: usize },
}

impl MeshDesc {
    pub fn n_points(&self) -> usize {
        match *self {
            MeshDesc::Periodic1D { n } | MeshDesc::Points { n } => n,
            MeshDesc::Boundary2D { nx, ny } => 2 * (nx + ny) - 4,
            MeshDesc::Interior2D { nx, ny } => (nx - 2) * (ny - 2),
        }
    }
}

/// Paired discretized functions: `inputs: N×d_in×N_u`, `outputs: N×d_out×N_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor,
    pub outputs: Tensor,
    pub input_mesh: MeshDesc,
    pub output_mesh: MeshDesc,
    pub generator: String,
    pub seed: u64,
}

impl Dataset {
    /// Builds a dataset with point-set meshes after checking shapes and finiteness.
    pub fn new(inputs: Tensor, outputs: Tensor, generator: &str, seed: u64) -> Result<Self> {
        let (si, so) = (inputs.shape(), outputs.shape());
        if si.len() != 3 || so.len() != 3 || si[0] != so[0] {
            return Err(Error::ShapeMismatch {
                op: "dataset",
                left: si.to_vec(),
                right: so.to_vec(),
            });
        }
        if !inputs.is_finite() || !outputs.is_finite() {
            return Err(Error::NonFinite(format!("{generator} dataset")));
        }
        Ok(Dataset {
            input_mesh: MeshDesc::Points { n: si[2] },
            output_mesh: MeshDesc::Points { n: so[2] },
            inputs,
            outputs,
            generator: generator.to_string(),
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn d_in(&self) -> usize {
        self.inputs.shape()[1]
    }

    pub fn d_out(&self) -> usize {
        self.outputs.shape()[1]
    }

    pub fn n_pts_u(&self) -> usize {
        self.inputs.shape()[2]
    }

    pub fn n_pts_v(&self) -> usize {
        self.outputs.shape()[2]
    }

    /// `d_in×N_u` input of sample `i`.
    pub fn input(&self, i: usize) -> Tensor {
        sample_of(&self.inputs, i)
    }

    /// `d_out×N_v` output of sample `i`.
    pub fn output(&self, i: usize) -> Tensor {
        sample_of(&self.outputs, i)
    }

    /// All inputs stacked as `(N·d_in)×N_u` rows.
    pub fn input_rows(&self) -> Tensor {
        let s = self.inputs.shape();
        self.inputs.clone().reshape(&[s[0] * s[1], s[2]]).expect("same length")
    }

    /// All outputs stacked as `(N·d_out)×N_v` rows.
    pub fn output_rows(&self) -> Tensor {
        let s = self.outputs.shape();
        self.outputs.clone().reshape(&[s[0] * s[1], s[2]]).expect("same length")
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() || indices.iter().any(|&i| i >= self.len()) {
            return Err(invalid(format!("subset indices out of range for {} samples", self.len())));
        }
        Ok(Dataset {
            inputs: gather(&self.inputs, indices),
            outputs: gather(&self.outputs, indices),
            input_mesh: self.input_mesh,
            output_mesh: self.output_mesh,
            generator: self.generator.clone(),
            seed: self.seed,
        })
    }

    /// First `n_first` samples and the rest.
    pub fn split(&self, n_first: usize) -> Result<(Dataset, Dataset)> {
        if n_first == 0 || n_first >= self.len() {
            return Err(invalid(format!("cannot split {} samples at {n_first}", self.len())));
        }
        let a: Vec<usize> = (0..n_first).collect();
        let b: Vec<usize> = (n_first..self.len()).collect();
        Ok((self.subset(&a)?, self.subset(&b)?))
    }
}

fn sample_of(t: &Tensor, i: usize) -> Tensor {
    let s = t.shape();
    let per = s[1] * s[2];
    Tensor::new(vec![s[1], s[2]], t.data()[i * per..(i + 1) * per].to_vec()).expect("valid sample")
}

/// Gathers leading-axis slices of any tensor.
pub fn gather(t: &Tensor, indices: &[usize]) -> Tensor {
    let s = t.shape();
    let per = t.len() / s[0];
    let mut data = Vec::with_capacity(indices.len() * per);
    for &i in indices {
        data.extend_from_slice(&t.data()[i * per..(i + 1) * per]);
    }
    let mut shape = s.to_vec();
    shape[0] = indices.len();
    Tensor::new(shape, data).expect("non-empty gather")
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Standard deviation of Fourier mode `k` for covariance `(−Δ+9)⁻²` on the unit torus.
pub fn grf_mode_std(k: usize) -> f64 {
    let w = 2.0 * PI * k as f64;
    1.0 / (w * w + 9.0)
}

/// Samples of the periodic Gaussian random field with covariance `(−Δ+9)⁻²`,
/// synthesized from the real Fourier modes `1, √2·cos(2πkx), √2·sin(2πkx)` up
/// to the Nyquist mode (cosine only at `k = n/2`).
pub fn sample_grf_periodic_1d(mesh: Mesh1D, n_samples: usize, seed: u64) -> Result<Tensor> {
    let n = mesh.n;
    if !n.is_multiple_of(2) {
        return Err(invalid(format!("random-field mesh must have an even number of points, got {n}")));
    }
    if n_samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let half = n / 2;
    // basis[m][j]: mode m evaluated at x_j, scaled by its standard deviation.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    basis.push(vec![grf_mode_std(0); n]);
    for k in 1..=half {
        let s = grf_mode_std(k) * SQRT_2;
        let angle = |j: usize| 2.0 * PI * ((k * j) % n) as f64 / n as f64;
        basis.push((0..n).map(|j| s * angle(j).cos()).collect());
        if k < half {
            basis.push((0..n).map(|j| s * angle(j).sin()).collect());
        }
    }
    let mut out = vec![0.0; n_samples * n];
    for (i, row) in out.chunks_mut(n).enumerate() {
        let mut rng = sample_rng(seed, i as u64);
        for mode in &basis {
            let z = normal(&mut rng);
            for (o, b) in row.iter_mut().zip(mode) {
                *o += z * b;
            }
        }
    }
    Tensor::new(vec![n_samples, n], out)
}

/// Transport of `u₀ = sign(ξ)` at unit speed for time 0.5 on the unit torus.
/// The exact solution is the input rotated by `n/2` grid points.
pub fn advection_dataset(mesh: Mesh1D, n_samples: usize, seed: u64) -> Result<Dataset> {
    if !mesh.n.is_multiple_of(2) {
        return Err(invalid(format!("advection mesh size must be even, got {}", mesh.n)));
    }
    let n = mesh.n;
    let xi = sample_grf_periodic_1d(mesh, n_samples, seed)?;
    let u0 = xi.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
    let mut u1 = vec![0.0; u0.len()];
    for (src, dst) in u0.data().chunks(n).zip(u1.chunks_mut(n)) {
        for j in 0..n {
            dst[j] = src[(j + n - n / 2) % n];
        }
    }
    let mut ds = Dataset::new(
        u0.reshape(&[n_samples, 1, n])?,
        Tensor::new(vec![n_samples, 1, n], u1)?,
        "advection",
        seed,
    )?;
    ds.input_mesh = MeshDesc::Periodic1D { n };
    ds.output_mesh = MeshDesc::Periodic1D { n };
    Ok(ds)
}

/// Factor `F` with `F·Fᵀ ≈ K` for the RBF kernel on `n` uniform points of `[0, 1]`.
fn rbf_factor(n_points: usize, lengthscale: f64) -> Result<Tensor> {
    if n_points < 2 {
        return Err(invalid(format!("need at least 2 points, got {n_points}")));
    }
    if !(lengthscale > 0.0 && lengthscale.is_finite()) {
        return Err(invalid(format!("lengthscale must be positive, got {lengthscale}")));
    }
    let x: Vec<f64> = (0..n_points).map(|i| i as f64 / (n_points - 1) as f64).collect();
    let k = Tensor::from_fn(&[n_points, n_points], |ix| {
        let d = x[ix[0]] - x[ix[1]];
        (-d * d / (2.0 * lengthscale * lengthscale)).exp()
    });
    let (vals, vecs) = symmetric_eigen(&k)?;
    let roots: Vec<f64> = vals.iter().map(|&l| l.max(GP_EIGEN_FLOOR).sqrt()).collect();
    Ok(Tensor::from_fn(&[n_points, n_points], |ix| vecs.at(ix) * roots[ix[1]]))
}

fn draw_gp(factor: &Tensor, rng: &mut Rng) -> Vec<f64> {
    let n = factor.rows();
    let z: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
    (0..n)
        .map(|i| factor.row(i).iter().zip(&z).map(|(a, b)| a * b).sum())
        .collect()
}

/// Zero-mean Gaussian-process samples with kernel `exp(−(x−y)²/(2ℓ²))` on
/// `x_i = i/(n−1)`, via a symmetric eigendecomposition with eigenvalues
/// floored at 1e-12.
pub fn sample_gp_rbf_1d(n_points: usize, lengthscale: f64, n_samples: usize, seed: u64) -> Result<Tensor> {
    if n_samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let factor = rbf_factor(n_points, lengthscale)?;
    let mut out = Vec::with_capacity(n_samples * n_points);
    for i in 0..n_samples {
        out.extend(draw_gp(&factor, &mut sample_rng(seed, i as u64)));
    }
    Tensor::new(vec![n_samples, n_points], out)
}

/// Banded Cholesky factorization of the 5-point discretization of `−Δ` on
/// the interior of a [`Mesh2D`], reused across right-hand sides.
#[derive(Debug, Clone)]
pub struct PoissonSolver {
    mesh: Mesh2D,
    bw: usize,
    /// Row `r` holds `L[r, r−bw..=r]`.
    chol: Vec<f64>,
    cx: f64,
    cy: f64,
}

impl PoissonSolver {
    pub fn new(mesh: Mesh2D) -> Result<Self> {
        let (mx, my) = (mesh.nx - 2, mesh.ny - 2);
        let hx = 1.0 / (mesh.nx - 1) as f64;
        let hy = 1.0 / (mesh.ny - 1) as f64;
        let (cx, cy) = (1.0 / (hx * hx), 1.0 / (hy * hy));
        let n = mx * my;
        let bw = mx;
        let w = bw + 1;
        let mut a = vec![0.0; n * w];
        for r in 0..n {
            a[r * w + bw] = 2.0 * (cx + cy);
            if r % mx != 0 {
                a[r * w + bw - 1] = -cx;
            }
            if r >= mx {
                a[r * w] = -cy;
            }
        }
        // In-place band Cholesky: band[r][bw − (r − c)] = L[r, c].
        for r in 0..n {
            let lo = r.saturating_sub(bw);
            for c in lo..=r {
                let mut s = a[r * w + bw - (r - c)];
                for t in lo.max(c.saturating_sub(bw))..c {
                    s -= a[r * w + bw - (r - t)] * a[c * w + bw - (c - t)];
                }
                if c == r {
                    if s <= 0.0 {
                        return Err(invalid("Poisson matrix is not positive definite"));
                    }
                    a[r * w + bw] = s.sqrt();
                } else {
                    a[r * w + bw - (r - c)] = s / a[c * w + bw];
                }
            }
        }
        Ok(PoissonSolver { mesh, bw, chol: a, cx, cy })
    }

    pub fn mesh(&self) -> Mesh2D {
        self.mesh
    }

    fn apply(&self, h: &[f64], rhs_bc: &mut [f64]) {
        // rhs_bc ← A·h − rhs_bc, used for the residual.
        let (mx, my) = (self.mesh.nx - 2, self.mesh.ny - 2);
        for j in 0..my {
            for i in 0..mx {
                let r = j * mx + i;
                let mut v = 2.0 * (self.cx + self.cy) * h[r];
                if i > 0 {
                    v -= self.cx * h[r - 1];
                }
                if i + 1 < mx {
                    v -= self.cx * h[r + 1];
                }
                if j > 0 {
                    v -= self.cy * h[r - mx];
                }
                if j + 1 < my {
                    v -= self.cy * h[r + mx];
                }
                rhs_bc[r] = v - rhs_bc[r];
            }
        }
    }

    /// Interior values of `−Δh = source` with Dirichlet data `boundary`
    /// (counterclockwise order). Fails when the backward error
    /// `‖A·h − b‖∞ / (‖A‖∞·‖h‖∞ + ‖b‖∞)` exceeds [`POISSON_RESIDUAL_TOL`].
    pub fn solve(&self, boundary: &[f64], source: f64) -> Result<Vec<f64>> {
        let mesh = self.mesh;
        if boundary.len() != mesh.n_boundary() {
            return Err(Error::ShapeMismatch {
                op: "poisson boundary",
                left: vec![boundary.len()],
                right: vec![mesh.n_boundary()],
            });
        }
        let (nx, ny) = (mesh.nx, mesh.ny);
        let mut grid = vec![0.0; nx * ny];
        for (&(i, j), &v) in mesh.boundary_nodes().iter().zip(boundary) {
            grid[j * nx + i] = v;
        }
        let (mx, my) = (nx - 2, ny - 2);
        let n = mx * my;
        let mut b = vec![source; n];
        for j in 0..my {
            for i in 0..mx {
                let (gi, gj) = (i + 1, j + 1);
                let r = j * mx + i;
                if gi == 1 {
                    b[r] += self.cx * grid[gj * nx];
                }
                if gi == nx - 2 {
                    b[r] += self.cx * grid[gj * nx + nx - 1];
                }
                if gj == 1 {
                    b[r] += self.cy * grid[gi];
                }
                if gj == ny - 2 {
                    b[r] += self.cy * grid[(ny - 1) * nx + gi];
                }
            }
        }
        let (bw, w) = (self.bw, self.bw + 1);
        let l = &self.chol;
        let mut y = b.clone();
        for r in 0..n {
            let lo = r.saturating_sub(bw);
            let mut s = y[r];
            for c in lo..r {
                s -= l[r * w + bw - (r - c)] * y[c];
            }
            y[r] = s / l[r * w + bw];
        }
        for r in (0..n).rev() {
            let hi = (r + bw).min(n - 1);
            let mut s = y[r];
            for c in r + 1..=hi {
                s -= l[c * w + bw - (c - r)] * y[c];
            }
            y[r] = s / l[r * w + bw];
        }
        let mut resid = b.clone();
        self.apply(&y, &mut resid);
        let rnorm = resid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let a_norm = 4.0 * (self.cx + self.cy);
        let hnorm = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bnorm = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = a_norm * hnorm + bnorm;
        let rel = if scale > 0.0 { rnorm / scale } else { rnorm };
        if !rel.is_finite() || rel > POISSON_RESIDUAL_TOL {
            return Err(Error::SolverResidual {
                residual: rel,
                tolerance: POISSON_RESIDUAL_TOL,
            });
        }
        Ok(y)
    }
}

/// Boundary trace assembled from four independent GP draws, one per side, with
/// each corner set to the mean of the two sides meeting there.
fn square_boundary(mesh: Mesh2D, fx: &Tensor, fy: &Tensor, rng: &mut Rng) -> Vec<f64> {
    let (nx, ny) = (mesh.nx, mesh.ny);
    let bottom = draw_gp(fx, rng);
    let right = draw_gp(fy, rng);
    let top = draw_gp(fx, rng);
    let left = draw_gp(fy, rng);
    let mut v = Vec::with_capacity(mesh.n_boundary());
    v.push(0.5 * (bottom[0] + left[0]));
    v.extend_from_slice(&bottom[1..nx - 1]);
    v.push(0.5 * (bottom[nx - 1] + right[0]));
    v.extend_from_slice(&right[1..ny - 1]);
    v.push(0.5 * (right[ny - 1] + top[nx - 1]));
    v.extend(top[1..nx - 1].iter().rev());
    v.push(0.5 * (top[0] + left[ny - 1]));
    v.extend(left[1..ny - 1].iter().rev());
    v
}

/// Boundary data `h|∂D` (GP with ℓ = 0.2 on each side) mapped to the interior
/// solution of `−Δh = −1` on the unit square.
pub fn poisson_dataset(mesh: Mesh2D, n_samples: usize, seed: u64) -> Result<Dataset> {
    if n_samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let solver = PoissonSolver::new(mesh)?;
    let fx = rbf_factor(mesh.nx, POISSON_LENGTHSCALE)?;
    let fy = rbf_factor(mesh.ny, POISSON_LENGTHSCALE)?;
    let (nb, ni) = (mesh.n_boundary(), mesh.n_interior());
    let mut inputs = Vec::with_capacity(n_samples * nb);
    let mut outputs = Vec::with_capacity(n_samples * ni);
    for i in 0..n_samples {
        let bc = square_boundary(mesh, &fx, &fy, &mut sample_rng(seed, i as u64));
        outputs.extend(solver.solve(&bc, POISSON_SOURCE)?);
        inputs.extend(bc);
    }
    let mut ds = Dataset::new(
        Tensor::new(vec![n_samples, 1, nb], inputs)?,
        Tensor::new(vec![n_samples, 1, ni], outputs)?,
        "poisson",
        seed,
    )?;
    ds.input_mesh = MeshDesc::Boundary2D { nx: mesh.nx, ny: mesh.ny };
    ds.output_mesh = MeshDesc::Interior2D { nx: mesh.nx, ny: mesh.ny };
    Ok(ds)
}

/// Pairs `(f, A·f + noise_std·ε)` for a fixed random `A = U·Vᵀ/√rank` of the
/// given rank. Returns the dataset and `A` (`n_out×n_in`).
pub fn linear_operator_dataset(
    n_in: usize,
    n_out: usize,
    rank: usize,
    n_samples: usize,
    noise_std: f64,
    seed: u64,
) -> Result<(Dataset, Tensor)> {
    if rank == 0 || rank > n_in.min(n_out) {
        return Err(invalid(format!("rank {rank} must lie in 1..={}", n_in.min(n_out))));
    }
    if n_samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(invalid(format!("noise_std must be non-negative, got {noise_std}")));
    }
    let mut op_rng = sample_rng(seed, u64::MAX);
    let u = Tensor::from_fn(&[n_out, rank], |_| normal(&mut op_rng));
    let v = Tensor::from_fn(&[n_in, rank], |_| normal(&mut op_rng));
    let a = crate::tensor::matmul_nt(&u, &v)?.scale(1.0 / (rank as f64).sqrt());
    let mut inputs = Vec::with_capacity(n_samples * n_in);
    let mut outputs = Vec::with_capacity(n_samples * n_out);
    for i in 0..n_samples {
        let mut rng = sample_rng(seed, i as u64);
        let f: Vec<f64> = (0..n_in).map(|_| normal(&mut rng)).collect();
        for r in 0..n_out {
            let clean: f64 = a.row(r).iter().zip(&f).map(|(x, y)| x * y).sum();
            outputs.push(clean + noise_std * normal(&mut rng));
        }
        inputs.extend(f);
    }
    let ds = Dataset::new(
        Tensor::new(vec![n_samples, 1, n_in], inputs)?,
        Tensor::new(vec![n_samples, 1, n_out], outputs)?,
        "linear",
        seed,
    )?;
    Ok((ds, a))
}
