//! GIT-Net forward evaluation and the PCA-Net baseline.
//!
//! A network maps PCA coefficients `α ∈ R^{d_in×P_u}` to `R^{d_out×P_v}`:
//!
//! ```text
//! z₀ = L↑ · α · R↑                                  (lift, C×K)
//! z_{l+1} = σ(T·z_l + ((z_l·P) ⊗ D)·Q)              (standard layer)
//! z_{l+1} = T·z_l + σ(((z_l·P) ⊗ D)·Q)              (pre-residual layer)
//! β = L↓ · z_L · R↓                                  (project, d_out×P_v)
//! ```
//!
//! where `(x ⊗ D)[c,k] = Σ_d D[d,c,k]·x[d,k]` never mixes modes. Hidden
//! layers use the configured activation; the last layer is always linear.
//!
//! Batches are stored as `(B·rows)×cols` matrices: sample `b` owns rows
//! `b·rows..(b+1)·rows`. Every kernel processes rows independently, so a
//! sample's result does not depend on the batch it travels in.

mod pcanet;

pub(crate) use pcanet::{flatten_coeffs, unflatten_coeffs};
pub use pcanet::{init_pcanet, pcanet_forward, PcaNetParams, PCANET_DEFAULT_HIDDEN_LAYERS};

use crate::error::{invalid, Error, Result};
use crate::grad::{CoeffTape, LayerTape};
use crate::pca::PcaBasis;
use crate::rng::{seeded, Rng};
use crate::tensor::{flops, kernels, Activation, Tensor};
use rand::Rng as _;

pub const DEFAULT_LAYERS: usize = 3;
/// Channel and mode grids used for hyperparameter sweeps.
pub const CHANNEL_GRID: [usize; 5] = [2, 4, 8, 16, 32];
pub const MODE_GRID: [usize; 5] = [16, 64, 128, 256, 512];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// `σ(T·α + K·α)`
    Standard,
    /// `T·α + σ(K·α)`
    PreResidual,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::PreResidual => "pre_residual",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "standard" => Some(Variant::Standard),
            "pre_residual" => Some(Variant::PreResidual),
            _ => None,
        }
    }
}

/// One GIT layer: channel skip `T`, change of basis `P`, per-mode channel
/// mixer `D[d,c,k]`, and inverse change of basis `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct GitLayerParams {
    pub t: Tensor,
    pub p: Tensor,
    pub d: Tensor,
    pub q: Tensor,
    pub activation: Activation,
}

impl GitLayerParams {
    pub fn channels(&self) -> usize {
        self.t.rows()
    }

    pub fn modes(&self) -> usize {
        self.p.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.t.rows();
        let k = self.p.rows();
        let ok = self.t.shape() == [c, c]
            && self.p.shape() == [k, k]
            && self.q.shape() == [k, k]
            && self.d.shape() == [c, c, k];
        if !ok {
            return Err(invalid(format!(
                "inconsistent GIT layer shapes: T {:?}, P {:?}, D {:?}, Q {:?}",
                self.t.shape(),
                self.p.shape(),
                self.d.shape(),
                self.q.shape()
            )));
        }
        Ok(())
    }
}

/// Size and layout of a GIT-Net.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub d_in: usize,
    pub d_out: usize,
    pub p_u: usize,
    pub p_v: usize,
    pub channels: usize,
    pub modes: usize,
    pub layers: usize,
    pub variant: Variant,
    /// Activation of every layer but the last.
    pub hidden_activation: Activation,
}

impl Architecture {
    /// Scalar parameter count: `C·d_in + P_u·K + L·(2K² + KC² + C²) + d_out·C + K·P_v`.
    pub fn param_count(&self) -> usize {
        let (c, k) = (self.channels, self.modes);
        c * self.d_in
            + self.p_u * k
            + self.layers * param_count_layer(c, k)
            + self.d_out * c
            + k * self.p_v
    }
}

/// Parameters of one layer: the `2K² + KC²` of the integral-transform part plus `C²` for `T`.
pub fn param_count_layer(channels: usize, modes: usize) -> usize {
    2 * modes * modes + modes * channels * channels + channels * channels
}

#[derive(Debug, Clone, PartialEq)]
pub struct GitNetParams {
    pub arch: Architecture,
    /// C×d_in
    pub l_up: Tensor,
    /// P_u×K
    pub r_up: Tensor,
    pub layers: Vec<GitLayerParams>,
    /// d_out×C
    pub l_down: Tensor,
    /// K×P_v
    pub r_down: Tensor,
}

impl GitNetParams {
    pub fn validate(&self) -> Result<()> {
        let a = &self.arch;
        let (c, k) = (a.channels, a.modes);
        if a.layers == 0 || self.layers.len() != a.layers {
            return Err(invalid(format!(
                "expected {} layers (at least one), found {}",
                a.layers,
                self.layers.len()
            )));
        }
        let shapes_ok = self.l_up.shape() == [c, a.d_in]
            && self.r_up.shape() == [a.p_u, k]
            && self.l_down.shape() == [a.d_out, c]
            && self.r_down.shape() == [k, a.p_v];
        if !shapes_ok {
            return Err(invalid("lift/projection shapes disagree with the architecture"));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate()?;
            if layer.channels() != c || layer.modes() != k {
                return Err(invalid(format!("layer {i} is not {c}x{k}")));
            }
            let expected = if i + 1 == a.layers {
                Activation::Identity
            } else {
                a.hidden_activation
            };
            if layer.activation != expected {
                return Err(invalid(format!(
                    "layer {i} activation {:?}, expected {expected:?}",
                    layer.activation
                )));
            }
        }
        if self.tensors().iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("GIT-Net parameters".into()));
        }
        Ok(())
    }

    /// All parameter arrays in canonical order: L↑, R↑, per layer (T, P, D, Q), L↓, R↓.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.l_up, &self.r_up];
        for l in &self.layers {
            v.extend([&l.t, &l.p, &l.d, &l.q]);
        }
        v.extend([&self.l_down, &self.r_down]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.l_up, &mut self.r_up];
        for l in &mut self.layers {
            v.extend([&mut l.t, &mut l.p, &mut l.d, &mut l.q]);
        }
        v.extend([&mut self.l_down, &mut self.r_down]);
        v
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Batched evaluation on PCA coefficients `alpha: (B·d_in)×P_u`,
    /// returning `(B·d_out)×P_v`. Intermediates are recorded when `tape` is given.
    pub(crate) fn forward_batch(&self, alpha: &Tensor, mut tape: Option<&mut CoeffTape>) -> Result<Tensor> {
        let a = &self.arch;
        let (rows, p_u) = alpha.dims2()?;
        if p_u != a.p_u || rows % a.d_in != 0 {
            return Err(Error::ShapeMismatch {
                op: "gitnet forward",
                left: alpha.shape().to_vec(),
                right: vec![a.d_in, a.p_u],
            });
        }
        let batch = rows / a.d_in;
        let (c, k) = (a.channels, a.modes);

        let la = left_multiply(&self.l_up, alpha, batch)?;
        let mut z = crate::tensor::matmul(&la, &self.r_up)?;
        if let Some(t) = tape.as_deref_mut() {
            t.batch = batch;
            t.alpha = alpha.clone();
            t.lifted_left = la;
            t.layers.clear();
        }
        for layer in &self.layers {
            let (out, record) = layer_forward(layer, &z, batch, a.variant)?;
            if let Some(t) = tape.as_deref_mut() {
                t.layers.push(record);
            }
            z = out;
        }
        debug_assert_eq!(z.shape(), [batch * c, k]);
        let lz = left_multiply(&self.l_down, &z, batch)?;
        let out = crate::tensor::matmul(&lz, &self.r_down)?;
        if let Some(t) = tape {
            t.last = z;
            t.projected_left = lz;
        }
        Ok(out)
    }

    /// Evaluates the network on coefficients `alpha: (B·d_in)×P_u`.
    pub fn forward_coeffs(&self, alpha: &Tensor) -> Result<Tensor> {
        self.forward_batch(alpha, None)
    }
}

/// `out_b = A·X_b` for every sample block `X_b` of a stacked batch.
pub(crate) fn left_multiply(a: &Tensor, x: &Tensor, batch: usize) -> Result<Tensor> {
    let (m, inner) = a.dims2()?;
    let (rows, n) = x.dims2()?;
    if rows != batch * inner {
        return Err(Error::ShapeMismatch {
            op: "left_multiply",
            left: a.shape().to_vec(),
            right: x.shape().to_vec(),
        });
    }
    let mut out = vec![0.0; batch * m * n];
    for b in 0..batch {
        kernels::gemm_nn(
            m,
            inner,
            n,
            a.data(),
            &x.data()[b * inner * n..(b + 1) * inner * n],
            &mut out[b * m * n..(b + 1) * m * n],
        );
    }
    Tensor::new(vec![batch * m, n], out)
}

/// Frequency-wise channel mixing `out[c,k] = Σ_d D[d,c,k]·alpha[d,k]` for a
/// single `C×K` array.
pub fn hybrid_product(alpha: &Tensor, d: &Tensor) -> Result<Tensor> {
    let (c, k) = alpha.dims2()?;
    if d.shape() != [c, c, k] {
        return Err(Error::ShapeMismatch {
            op: "hybrid_product",
            left: alpha.shape().to_vec(),
            right: d.shape().to_vec(),
        });
    }
    hybrid_product_batch(alpha, d, 1)
}

pub(crate) fn hybrid_product_batch(x: &Tensor, d: &Tensor, batch: usize) -> Result<Tensor> {
    let (rows, k) = x.dims2()?;
    let c = d.shape()[0];
    if rows != batch * c || d.shape() != [c, c, k] {
        return Err(Error::ShapeMismatch {
            op: "hybrid_product",
            left: x.shape().to_vec(),
            right: d.shape().to_vec(),
        });
    }
    flops::record(2 * (batch * c * c * k) as u64);
    let mut out = vec![0.0; rows * k];
    let (xd, dd) = (x.data(), d.data());
    for b in 0..batch {
        let xb = &xd[b * c * k..(b + 1) * c * k];
        let ob = &mut out[b * c * k..(b + 1) * c * k];
        for din in 0..c {
            let xrow = &xb[din * k..(din + 1) * k];
            for cout in 0..c {
                let drow = &dd[(din * c + cout) * k..(din * c + cout + 1) * k];
                let orow = &mut ob[cout * k..(cout + 1) * k];
                for ((o, &dv), &xv) in orow.iter_mut().zip(drow).zip(xrow) {
                    *o += dv * xv;
                }
            }
        }
    }
    Tensor::new(vec![rows, k], out)
}

fn layer_forward(
    layer: &GitLayerParams,
    x: &Tensor,
    batch: usize,
    variant: Variant,
) -> Result<(Tensor, LayerTape)> {
    let xp = crate::tensor::matmul(x, &layer.p)?;
    let h = hybrid_product_batch(&xp, &layer.d, batch)?;
    let kq = crate::tensor::matmul(&h, &layer.q)?;
    let tx = left_multiply(&layer.t, x, batch)?;
    let (out, pre) = match variant {
        Variant::Standard => {
            let pre = tx.add(&kq)?;
            (layer.activation.apply(&pre), pre)
        }
        Variant::PreResidual => {
            let out = tx.add(&layer.activation.apply(&kq))?;
            (out, kq)
        }
    };
    let record = LayerTape {
        input: x.clone(),
        rotated: xp,
        mixed: h,
        pre_activation: pre,
    };
    Ok((out, record))
}

/// One GIT layer applied to a single `C×K` array.
pub fn git_layer_forward(layer: &GitLayerParams, alpha: &Tensor, variant: Variant) -> Result<Tensor> {
    layer.validate()?;
    let (c, k) = alpha.dims2()?;
    if c != layer.channels() || k != layer.modes() {
        return Err(Error::ShapeMismatch {
            op: "git_layer_forward",
            left: alpha.shape().to_vec(),
            right: vec![layer.channels(), layer.modes()],
        });
    }
    Ok(layer_forward(layer, alpha, 1, variant)?.0)
}

/// `L↑ · α · R↑` for a single `d_in×P_u` coefficient array.
pub fn lift(m: &GitNetParams, alpha: &Tensor) -> Result<Tensor> {
    if alpha.shape() != [m.arch.d_in, m.arch.p_u] {
        return Err(Error::ShapeMismatch {
            op: "lift",
            left: alpha.shape().to_vec(),
            right: vec![m.arch.d_in, m.arch.p_u],
        });
    }
    crate::tensor::matmul(&crate::tensor::matmul(&m.l_up, alpha)?, &m.r_up)
}

/// `L↓ · z · R↓` for a single `C×K` array.
pub fn project(m: &GitNetParams, z: &Tensor) -> Result<Tensor> {
    if z.shape() != [m.arch.channels, m.arch.modes] {
        return Err(Error::ShapeMismatch {
            op: "project",
            left: z.shape().to_vec(),
            right: vec![m.arch.channels, m.arch.modes],
        });
    }
    crate::tensor::matmul(&crate::tensor::matmul(&m.l_down, z)?, &m.r_down)
}

/// Full operator on one discretized input `f: d_in×N_u`, returning `d_out×N_v`.
pub fn gitnet_forward(
    m: &GitNetParams,
    basis_u: &PcaBasis,
    basis_v: &PcaBasis,
    f: &Tensor,
) -> Result<Tensor> {
    check_bases(&m.arch, basis_u, basis_v)?;
    let alpha = basis_u.encode(f)?;
    if alpha.rows() != m.arch.d_in {
        return Err(Error::ShapeMismatch {
            op: "gitnet_forward",
            left: f.shape().to_vec(),
            right: vec![m.arch.d_in, basis_u.n_points()],
        });
    }
    basis_v.decode(&m.forward_batch(&alpha, None)?)
}

pub(crate) fn check_bases(a: &Architecture, basis_u: &PcaBasis, basis_v: &PcaBasis) -> Result<()> {
    if basis_u.n_components() != a.p_u || basis_v.n_components() != a.p_v {
        return Err(Error::ShapeMismatch {
            op: "bases",
            left: vec![basis_u.n_components(), basis_v.n_components()],
            right: vec![a.p_u, a.p_v],
        });
    }
    Ok(())
}

pub(crate) fn glorot(rng: &mut Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| (2.0 * rng.random::<f64>() - 1.0) * bound)
}

/// Glorot-uniform initialization, deterministic in `seed`. Each `D[:,:,k]`
/// slice is scaled as a C×C matrix.
pub fn init_params(arch: Architecture, seed: u64) -> Result<GitNetParams> {
    let a = arch;
    if [a.d_in, a.d_out, a.p_u, a.p_v, a.channels, a.modes, a.layers].contains(&0) {
        return Err(invalid(format!("all architecture counts must be positive: {a:?}")));
    }
    let (c, k) = (a.channels, a.modes);
    let mut rng = seeded(seed);
    let l_up = glorot(&mut rng, &[c, a.d_in], c, a.d_in);
    let r_up = glorot(&mut rng, &[a.p_u, k], a.p_u, k);
    let layers = (0..a.layers)
        .map(|i| GitLayerParams {
            t: glorot(&mut rng, &[c, c], c, c),
            p: glorot(&mut rng, &[k, k], k, k),
            d: glorot(&mut rng, &[c, c, k], c, c),
            q: glorot(&mut rng, &[k, k], k, k),
            activation: if i + 1 == a.layers {
                Activation::Identity
            } else {
                a.hidden_activation
            },
        })
        .collect();
    let l_down = glorot(&mut rng, &[a.d_out, c], a.d_out, c);
    let r_down = glorot(&mut rng, &[k, a.p_v], k, a.p_v);
    Ok(GitNetParams {
        arch,
        l_up,
        r_up,
        layers,
        l_down,
        r_down,
    })
}
