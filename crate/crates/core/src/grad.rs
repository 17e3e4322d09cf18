//! Reverse-mode gradients for GIT-Net and PCA-Net, written out by hand.
//!
//! Adjoints used throughout: for `Y = A·X·B`, `∂X = Aᵀ·G·Bᵀ`,
//! `∂A = G·(X·B)ᵀ`, `∂B = (A·X)ᵀ·G`; for the hybrid product
//! `∂x[d,k] = Σ_c D[d,c,k]·G[c,k]` and `∂D[d,c,k] = x[d,k]·G[c,k]`.
//! PCA bases are frozen; only network parameters receive gradients.

use crate::error::{invalid, Error, Result};
use crate::gitnet::{GitNetParams, PcaNetParams, Variant};
use crate::pca::PcaBasis;
use crate::tensor::{kernels, matmul, matmul_nt, matmul_tn, Tensor};
use crate::train::{loss_terms, LossKind, LossTerms};

/// Intermediates of one GIT layer for a stacked batch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerTape {
    /// Layer input `x`, `(B·C)×K`.
    pub input: Tensor,
    /// `x·P`
    pub rotated: Tensor,
    /// `(x·P) ⊗ D`
    pub mixed: Tensor,
    /// Argument of the activation: `T·x + K·x` (standard) or `K·x` (pre-residual).
    pub pre_activation: Tensor,
}

/// Coefficient-space intermediates of a GIT-Net forward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoeffTape {
    pub batch: usize,
    /// Input coefficients, `(B·d_in)×P_u`.
    pub alpha: Tensor,
    /// `L↑·α` per sample, `(B·C)×P_u`.
    pub lifted_left: Tensor,
    pub layers: Vec<LayerTape>,
    /// Output of the last layer, `(B·C)×K`.
    pub last: Tensor,
    /// `L↓·z` per sample, `(B·d_out)×K`.
    pub projected_left: Tensor,
}

/// A GIT-Net forward pass on mesh values, with everything backward needs.
#[derive(Debug, Clone, PartialEq)]
pub struct GradTape {
    pub coeffs: CoeffTape,
    /// Output basis components `P_v×N_v`, to pull mesh gradients back to coefficients.
    pub output_components: Tensor,
}

/// Inputs and pre-activations of every dense layer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MlpTape {
    pub inputs: Vec<Tensor>,
    pub pre_activations: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub t: Tensor,
    pub p: Tensor,
    pub d: Tensor,
    pub q: Tensor,
}

/// `∂loss/∂θ` for every GIT-Net parameter, shaped like [`GitNetParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GitNetGrads {
    pub l_up: Tensor,
    pub r_up: Tensor,
    pub layers: Vec<LayerGrads>,
    pub l_down: Tensor,
    pub r_down: Tensor,
}

impl GitNetGrads {
    pub fn zeros_like(m: &GitNetParams) -> Self {
        let z = |t: &Tensor| Tensor::zeros(t.shape());
        GitNetGrads {
            l_up: z(&m.l_up),
            r_up: z(&m.r_up),
            layers: m
                .layers
                .iter()
                .map(|l| LayerGrads {
                    t: z(&l.t),
                    p: z(&l.p),
                    d: z(&l.d),
                    q: z(&l.q),
                })
                .collect(),
            l_down: z(&m.l_down),
            r_down: z(&m.r_down),
        }
    }

    /// Same order as [`GitNetParams::tensors`].
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.l_up, &self.r_up];
        for l in &self.layers {
            v.extend([&l.t, &l.p, &l.d, &l.q]);
        }
        v.extend([&self.l_down, &self.r_down]);
        v
    }

    pub fn into_tensors(self) -> Vec<Tensor> {
        let mut v = vec![self.l_up, self.r_up];
        for l in self.layers {
            v.extend([l.t, l.p, l.d, l.q]);
        }
        v.extend([self.l_down, self.r_down]);
        v
    }
}

/// A network on PCA coefficients whose parameters can be trained.
pub trait Differentiable: Clone {
    type Tape: Default;

    /// `(d_in, P_u)`
    fn input_dims(&self) -> (usize, usize);
    /// `(d_out, P_v)`
    fn output_dims(&self) -> (usize, usize);

    /// Batched evaluation on `(B·d_in)×P_u` coefficients, recording into `tape` when given.
    fn forward(&self, alpha: &Tensor, tape: Option<&mut Self::Tape>) -> Result<Tensor>;

    /// Parameter gradients for upstream gradient `g: (B·d_out)×P_v`, in
    /// [`Differentiable::params`] order.
    fn backward(&self, tape: &Self::Tape, g: &Tensor) -> Result<Vec<Tensor>>;

    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;
}

impl Differentiable for GitNetParams {
    type Tape = CoeffTape;

    fn input_dims(&self) -> (usize, usize) {
        (self.arch.d_in, self.arch.p_u)
    }

    fn output_dims(&self) -> (usize, usize) {
        (self.arch.d_out, self.arch.p_v)
    }

    fn forward(&self, alpha: &Tensor, tape: Option<&mut CoeffTape>) -> Result<Tensor> {
        self.forward_batch(alpha, tape)
    }

    fn backward(&self, tape: &CoeffTape, g: &Tensor) -> Result<Vec<Tensor>> {
        Ok(backward_coeffs(self, tape, g)?.into_tensors())
    }

    fn params(&self) -> Vec<&Tensor> {
        self.tensors()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.tensors_mut()
    }
}

impl Differentiable for PcaNetParams {
    type Tape = MlpTape;

    fn input_dims(&self) -> (usize, usize) {
        (self.d_in, self.p_u())
    }

    fn output_dims(&self) -> (usize, usize) {
        (self.d_out, self.p_v())
    }

    fn forward(&self, alpha: &Tensor, tape: Option<&mut MlpTape>) -> Result<Tensor> {
        let rows = crate::gitnet::flatten_coeffs(alpha, self.d_in)?;
        let out = self.forward_rows(&rows, tape)?;
        crate::gitnet::unflatten_coeffs(out, self.d_out)
    }

    fn backward(&self, tape: &MlpTape, g: &Tensor) -> Result<Vec<Tensor>> {
        let g = crate::gitnet::flatten_coeffs(g, self.d_out)?;
        mlp_backward(self, tape, &g)
    }

    fn params(&self) -> Vec<&Tensor> {
        self.tensors()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.tensors_mut()
    }
}

fn stack_samples(f_batch: &Tensor, op: &'static str, d: usize, n: usize) -> Result<Tensor> {
    let s = f_batch.shape();
    if s.len() != 3 || s[1] != d || s[2] != n {
        return Err(Error::ShapeMismatch {
            op,
            left: s.to_vec(),
            right: vec![s.first().copied().unwrap_or(0), d, n],
        });
    }
    f_batch.clone().reshape(&[s[0] * d, n])
}

/// Batched GIT-Net forward on mesh values `f_batch: B×d_in×N_u`, returning
/// `B×d_out×N_v` predictions identical to per-sample [`crate::gitnet::gitnet_forward`].
pub fn forward_with_tape(
    m: &GitNetParams,
    basis_u: &PcaBasis,
    basis_v: &PcaBasis,
    f_batch: &Tensor,
) -> Result<(Tensor, GradTape)> {
    crate::gitnet::check_bases(&m.arch, basis_u, basis_v)?;
    let f = stack_samples(f_batch, "forward_with_tape", m.arch.d_in, basis_u.n_points())?;
    let alpha = basis_u.encode(&f)?;
    let mut coeffs = CoeffTape::default();
    let beta = m.forward_batch(&alpha, Some(&mut coeffs))?;
    let out = basis_v.decode(&beta)?;
    let b = coeffs.batch;
    let tape = GradTape {
        coeffs,
        output_components: basis_v.components().clone(),
    };
    Ok((out.reshape(&[b, m.arch.d_out, basis_v.n_points()])?, tape))
}

/// Parameter gradients given `∂loss/∂predictions` of shape `B×d_out×N_v`.
pub fn backward(m: &GitNetParams, tape: &GradTape, d_pred: &Tensor) -> Result<GitNetGrads> {
    let n_v = tape.output_components.cols();
    let g = stack_samples(d_pred, "backward", m.arch.d_out, n_v)?;
    if g.rows() != tape.coeffs.batch * m.arch.d_out {
        return Err(invalid("upstream gradient batch differs from the tape"));
    }
    let g_beta = matmul_nt(&g, &tape.output_components)?;
    backward_coeffs(m, &tape.coeffs, &g_beta)
}

/// `c[m×n] += Σ_b a_b[m×k]·b_b[n×k]ᵀ` over stacked samples.
fn per_sample_nt(batch: usize, m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for s in 0..batch {
        kernels::gemm_nt(m, k, n, &a[s * m * k..(s + 1) * m * k], &b[s * n * k..(s + 1) * n * k], c);
    }
}

/// `out_b = Aᵀ·G_b` for every sample block.
fn left_transpose_multiply(a: &Tensor, g: &Tensor, batch: usize) -> Tensor {
    let (r, c) = (a.rows(), a.cols());
    let n = g.cols();
    let mut out = vec![0.0; batch * c * n];
    for s in 0..batch {
        kernels::gemm_tn(c, r, n, a.data(), &g.data()[s * r * n..(s + 1) * r * n], &mut out[s * c * n..(s + 1) * c * n]);
    }
    Tensor::new(vec![batch * c, n], out).expect("shape is consistent by construction")
}

/// Gradients with respect to parameters given `g_beta = ∂loss/∂β`, `(B·d_out)×P_v`.
pub fn backward_coeffs(m: &GitNetParams, tape: &CoeffTape, g_beta: &Tensor) -> Result<GitNetGrads> {
    let a = &m.arch;
    let batch = tape.batch;
    let (c, k) = (a.channels, a.modes);
    if g_beta.shape() != [batch * a.d_out, a.p_v] || tape.layers.len() != m.layers.len() {
        return Err(Error::ShapeMismatch {
            op: "backward",
            left: g_beta.shape().to_vec(),
            right: vec![batch * a.d_out, a.p_v],
        });
    }
    let mut grads = GitNetGrads::zeros_like(m);

    // Projection: y = (L↓·z)·R↓
    grads.r_down = matmul_tn(&tape.projected_left, g_beta)?;
    let g_lz = matmul_nt(g_beta, &m.r_down)?;
    per_sample_nt(batch, a.d_out, k, c, g_lz.data(), tape.last.data(), grads.l_down.data_mut());
    let mut g = left_transpose_multiply(&m.l_down, &g_lz, batch);

    for ((layer, rec), lg) in m.layers.iter().zip(&tape.layers).zip(&mut grads.layers).rev() {
        let (g_skip, g_kq) = match a.variant {
            Variant::Standard => {
                let g_pre = activation_backward(layer.activation, &g, &rec.pre_activation)?;
                (g_pre.clone(), g_pre)
            }
            Variant::PreResidual => {
                let g_kq = activation_backward(layer.activation, &g, &rec.pre_activation)?;
                (g, g_kq)
            }
        };
        per_sample_nt(batch, c, k, c, g_skip.data(), rec.input.data(), lg.t.data_mut());
        let mut g_x = left_transpose_multiply(&layer.t, &g_skip, batch);

        lg.q = matmul_tn(&rec.mixed, &g_kq)?;
        let g_h = matmul_nt(&g_kq, &layer.q)?;
        let g_rot = hybrid_backward(&layer.d, &rec.rotated, &g_h, batch, lg.d.data_mut());
        lg.p = matmul_tn(&rec.input, &g_rot)?;
        g_x.add_assign(&matmul_nt(&g_rot, &layer.p)?)?;
        g = g_x;
    }

    // Lift: z₀ = (L↑·α)·R↑
    grads.r_up = matmul_tn(&tape.lifted_left, &g)?;
    let g_la = matmul_nt(&g, &m.r_up)?;
    per_sample_nt(batch, c, a.p_u, a.d_in, g_la.data(), tape.alpha.data(), grads.l_up.data_mut());
    Ok(grads)
}

fn activation_backward(act: crate::tensor::Activation, g: &Tensor, pre: &Tensor) -> Result<Tensor> {
    match act {
        crate::tensor::Activation::Identity => Ok(g.clone()),
        _ => g.hadamard(&act.derivative(pre)),
    }
}

/// Returns `∂x` and accumulates `∂D` for `h = x ⊗ D` over a stacked batch.
fn hybrid_backward(d: &Tensor, x: &Tensor, g_h: &Tensor, batch: usize, g_d: &mut [f64]) -> Tensor {
    let c = d.shape()[0];
    let k = d.shape()[2];
    let mut g_x = vec![0.0; batch * c * k];
    let (dd, xd, gd) = (d.data(), x.data(), g_h.data());
    for s in 0..batch {
        let off = s * c * k;
        for din in 0..c {
            let xrow = &xd[off + din * k..off + (din + 1) * k];
            let gxrow = &mut g_x[off + din * k..off + (din + 1) * k];
            for cout in 0..c {
                let base = (din * c + cout) * k;
                let drow = &dd[base..base + k];
                let grow = &gd[off + cout * k..off + (cout + 1) * k];
                let gdrow = &mut g_d[base..base + k];
                for j in 0..k {
                    gxrow[j] += drow[j] * grow[j];
                    gdrow[j] += xrow[j] * grow[j];
                }
            }
        }
    }
    Tensor::new(vec![batch * c, k], g_x).expect("shape is consistent by construction")
}

fn mlp_backward(p: &PcaNetParams, tape: &MlpTape, g_out: &Tensor) -> Result<Vec<Tensor>> {
    let n = p.weights.len();
    if tape.inputs.len() != n || tape.pre_activations.len() != n {
        return Err(invalid("MLP tape does not match the parameter record"));
    }
    let mut grads = vec![Tensor::zeros(&[1, 1]); 2 * n];
    let mut g = g_out.clone();
    for i in (0..n).rev() {
        let g_pre = if i + 1 == n {
            g
        } else {
            activation_backward(p.activation, &g, &tape.pre_activations[i])?
        };
        grads[2 * i] = matmul_tn(&tape.inputs[i], &g_pre)?;
        let (rows, cols) = g_pre.dims2()?;
        let mut db = vec![0.0; cols];
        for r in 0..rows {
            for (acc, v) in db.iter_mut().zip(g_pre.row(r)) {
                *acc += v;
            }
        }
        grads[2 * i + 1] = Tensor::new(vec![1, cols], db)?;
        g = matmul_nt(&g_pre, &p.weights[i])?;
    }
    Ok(grads)
}

/// Loss of a batch and its gradient with respect to the mesh predictions.
/// Both tensors are `B×…`; the loss averages over the leading extent.
pub fn loss_grad(preds: &Tensor, targets: &Tensor, kind: LossKind) -> Result<(f64, Tensor)> {
    let (terms, g) = loss_grad_terms(preds, targets, kind)?;
    Ok((terms.loss, g))
}

fn loss_grad_terms(preds: &Tensor, targets: &Tensor, kind: LossKind) -> Result<(LossTerms, Tensor)> {
    let terms = loss_terms(preds, targets, kind)?;
    let b = preds.shape()[0];
    let per = preds.len() / b;
    let mut g = preds.sub(targets)?;
    for (s, chunk) in g.data_mut().chunks_mut(per).enumerate() {
        let w = 2.0 * terms.weights[s] / b as f64;
        chunk.iter_mut().for_each(|v| *v *= w);
    }
    Ok((terms, g))
}

/// Loss terms and parameter gradients on cached input coefficients
/// `alpha: (B·d_in)×P_u` against mesh targets `B×d_out×N_v`.
pub fn coeff_loss_and_grad<M: Differentiable>(
    model: &M,
    alpha: &Tensor,
    basis_v: &PcaBasis,
    targets: &Tensor,
    kind: LossKind,
) -> Result<(LossTerms, Vec<Tensor>)> {
    let mut tape = M::Tape::default();
    let beta = model.forward(alpha, Some(&mut tape))?;
    let preds = basis_v.decode(&beta)?.reshape(targets.shape())?;
    let (terms, g) = loss_grad_terms(&preds, targets, kind)?;
    let g = g.reshape(&[beta.rows(), basis_v.n_points()])?;
    let g_beta = matmul_nt(&g, basis_v.components())?;
    Ok((terms, model.backward(&tape, &g_beta)?))
}

/// Batch loss of a model on mesh inputs `B×d_in×N_u` and targets `B×d_out×N_v`.
pub fn batch_loss<M: Differentiable>(
    model: &M,
    basis_u: &PcaBasis,
    basis_v: &PcaBasis,
    f_batch: &Tensor,
    g_batch: &Tensor,
    kind: LossKind,
) -> Result<f64> {
    let (d_in, _) = model.input_dims();
    let alpha = basis_u.encode(&stack_samples(f_batch, "batch_loss", d_in, basis_u.n_points())?)?;
    let preds = basis_v.decode(&model.forward(&alpha, None)?)?.reshape(g_batch.shape())?;
    Ok(loss_terms(&preds, g_batch, kind)?.loss)
}

/// Compares backward's gradient of the absolute mean-squared loss against
/// central differences with step `h` for every scalar parameter, and returns
/// the largest relative deviation `|a − n| / max(|a|, |n|, 1e-12)`.
pub fn finite_diff_check<M: Differentiable>(
    model: &M,
    basis_u: &PcaBasis,
    basis_v: &PcaBasis,
    f_batch: &Tensor,
    g_batch: &Tensor,
    h: f64,
) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(invalid(format!("finite-difference step {h} outside [1e-7, 1e-3]")));
    }
    let kind = LossKind::AbsoluteMse;
    let (d_in, _) = model.input_dims();
    let alpha = basis_u.encode(&stack_samples(f_batch, "finite_diff_check", d_in, basis_u.n_points())?)?;
    let (_, analytic) = coeff_loss_and_grad(model, &alpha, basis_v, g_batch, kind)?;
    let b = g_batch.shape()[0];
    let per = g_batch.len() / b;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (ti, grad) in analytic.iter().enumerate() {
        for j in 0..grad.len() {
            let orig = probe.params()[ti].data()[j];
            let (hi, lo) = (orig + h, orig - h);
            probe.params_mut()[ti].data_mut()[j] = hi;
            let up = probe.forward(&alpha, None)?;
            probe.params_mut()[ti].data_mut()[j] = lo;
            let down = probe.forward(&alpha, None)?;
            probe.params_mut()[ti].data_mut()[j] = orig;
            // L(+) − L(−) = (1/B)·Σ (p₊ − p₋)·(p₊ + p₋ − 2g). The difference is
            // taken in coefficient space so the basis mean does not cancel.
            let delta = matmul(&up.sub(&down)?, basis_v.components())?;
            let sum = basis_v.decode(&up)?.add(&basis_v.decode(&down)?)?;
            let mut diff = 0.0;
            for ((dl, sm), g) in delta.data().chunks(per).zip(sum.data().chunks(per)).zip(g_batch.data().chunks(per)) {
                diff += dl.iter().zip(sm).zip(g).map(|((dl, sm), g)| dl * (sm - 2.0 * g)).sum::<f64>();
            }
            let numeric = diff / b as f64 / (hi - lo);
            let a = grad.data()[j];
            let dev = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
            worst = worst.max(dev);
        }
    }
    Ok(worst)
}
