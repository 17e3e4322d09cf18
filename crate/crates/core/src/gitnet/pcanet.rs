//! PCA-Net: a multilayer perceptron on flattened PCA coefficients.

use super::glorot;
use crate::error::{invalid, Error, Result};
use crate::grad::MlpTape;
use crate::pca::PcaBasis;
use crate::rng::seeded;
use crate::tensor::{matmul_acc, Activation, Tensor};

pub const PCANET_DEFAULT_HIDDEN_LAYERS: usize = 4;

/// Weights are stored `in×out` so a batch of row vectors maps as `X·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaNetParams {
    pub d_in: usize,
    pub d_out: usize,
    pub widths: Vec<usize>,
    pub weights: Vec<Tensor>,
    /// `1×out` rows.
    pub biases: Vec<Tensor>,
    pub activation: Activation,
}

impl PcaNetParams {
    pub fn validate(&self) -> Result<()> {
        let n = self.widths.len();
        if n < 2 || self.weights.len() != n - 1 || self.biases.len() != n - 1 {
            return Err(invalid("PCA-Net needs at least two widths and one weight per gap"));
        }
        if self.widths.contains(&0) || self.d_in == 0 || self.d_out == 0 {
            return Err(invalid("PCA-Net widths must be positive"));
        }
        if !self.widths[0].is_multiple_of(self.d_in) || !self.widths[n - 1].is_multiple_of(self.d_out) {
            return Err(invalid("PCA-Net end widths must be multiples of the channel counts"));
        }
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let (a, z) = (self.widths[i], self.widths[i + 1]);
            if w.shape() != [a, z] || b.shape() != [1, z] {
                return Err(Error::ShapeMismatch {
                    op: "pcanet layer",
                    left: w.shape().to_vec(),
                    right: vec![a, z],
                });
            }
        }
        if self.tensors().iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("PCA-Net parameters".into()));
        }
        Ok(())
    }

    pub fn p_u(&self) -> usize {
        self.widths[0] / self.d_in
    }

    pub fn p_v(&self) -> usize {
        self.widths[self.widths.len() - 1] / self.d_out
    }

    /// Weights and biases interleaved: W₀, b₀, W₁, b₁, …
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `x: B×widths[0]` → `B×widths[last]`.
    pub(crate) fn forward_rows(&self, x: &Tensor, mut tape: Option<&mut MlpTape>) -> Result<Tensor> {
        let (batch, width) = x.dims2()?;
        if width != self.widths[0] {
            return Err(Error::ShapeMismatch {
                op: "pcanet forward",
                left: x.shape().to_vec(),
                right: vec![batch, self.widths[0]],
            });
        }
        if let Some(t) = tape.as_deref_mut() {
            t.inputs.clear();
            t.pre_activations.clear();
        }
        let last = self.weights.len() - 1;
        let mut h = x.clone();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut init = Tensor::zeros(&[batch, w.cols()]);
            for r in 0..batch {
                init.row_mut(r).copy_from_slice(b.data());
            }
            let pre = matmul_acc(&init, &h, w)?;
            let next = if i == last { pre.clone() } else { self.activation.apply(&pre) };
            if let Some(t) = tape.as_deref_mut() {
                t.inputs.push(h);
                t.pre_activations.push(pre);
            }
            h = next;
        }
        Ok(h)
    }

    /// Evaluates on coefficients `alpha: (B·d_in)×P_u`, returning `(B·d_out)×P_v`.
    pub fn forward_coeffs(&self, alpha: &Tensor) -> Result<Tensor> {
        let rows = flatten_coeffs(alpha, self.d_in)?;
        let out = self.forward_rows(&rows, None)?;
        unflatten_coeffs(out, self.d_out)
    }
}

/// `(B·d)×P` → `B×(d·P)`, same memory order.
pub(crate) fn flatten_coeffs(alpha: &Tensor, d: usize) -> Result<Tensor> {
    let (rows, p) = alpha.dims2()?;
    if rows % d != 0 {
        return Err(Error::ShapeMismatch {
            op: "flatten coefficients",
            left: alpha.shape().to_vec(),
            right: vec![d, p],
        });
    }
    alpha.clone().reshape(&[rows / d, d * p])
}

pub(crate) fn unflatten_coeffs(x: Tensor, d: usize) -> Result<Tensor> {
    let (b, w) = x.dims2()?;
    x.reshape(&[b * d, w / d])
}

/// Glorot weights and zero biases.
pub fn init_pcanet(
    d_in: usize,
    d_out: usize,
    widths: &[usize],
    activation: Activation,
    seed: u64,
) -> Result<PcaNetParams> {
    let mut rng = seeded(seed);
    let n = widths.len();
    if n < 2 {
        return Err(invalid("PCA-Net needs at least an input and an output width"));
    }
    let weights = widths.windows(2).map(|w| glorot(&mut rng, &[w[0], w[1]], w[0], w[1])).collect();
    let biases = widths[1..].iter().map(|&w| Tensor::zeros(&[1, w])).collect();
    let p = PcaNetParams {
        d_in,
        d_out,
        widths: widths.to_vec(),
        weights,
        biases,
        activation,
    };
    p.validate()?;
    Ok(p)
}

/// Full PCA-Net operator on one discretized input `f: d_in×N_u`.
pub fn pcanet_forward(
    params: &PcaNetParams,
    basis_u: &PcaBasis,
    basis_v: &PcaBasis,
    f: &Tensor,
) -> Result<Tensor> {
    if basis_u.n_components() != params.p_u() || basis_v.n_components() != params.p_v() {
        return Err(Error::ShapeMismatch {
            op: "pcanet bases",
            left: vec![basis_u.n_components(), basis_v.n_components()],
            right: vec![params.p_u(), params.p_v()],
        });
    }
    if f.dims2()?.0 != params.d_in {
        return Err(Error::ShapeMismatch {
            op: "pcanet_forward",
            left: f.shape().to_vec(),
            right: vec![params.d_in, basis_u.n_points()],
        });
    }
    let alpha = basis_u.encode(f)?;
    basis_v.decode(&params.forward_coeffs(&alpha)?)
}
