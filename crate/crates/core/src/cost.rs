//! Evaluation-cost models.
//!
//! One flop is one real multiply or add, so a multiply-add counts 2. Affine
//! offsets (PCA means, biases) are folded into accumulator initialization
//! and cost nothing; GELU is budgeted at [`crate::tensor::GELU_FLOPS`] per element; ReLU and
//! the identity are free. The exact formulas here agree with the counter in
//! [`crate::tensor::flops`] on the implemented models.

use crate::error::Result;
use crate::gitnet::{gitnet_forward, pcanet_forward, Architecture, GitNetParams, PcaNetParams, Variant};
use crate::pca::PcaBasis;
use crate::tensor::{count_flops, Activation, Tensor};

/// Radix-2 FFT budget per point and level.
pub const FFT_FLOPS_CONSTANT: f64 = 5.0;

pub const STAGES: [&str; 5] = ["encode", "lift", "layers", "project", "decode"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub architecture: String,
    pub n_pts_u: u64,
    pub n_pts_v: u64,
    pub d_in: u64,
    pub d_out: u64,
    pub p_u: u64,
    pub p_v: u64,
    pub channels: u64,
    pub modes: u64,
    pub layers: u64,
    /// Flops per stage, in [`STAGES`] order.
    pub breakdown: [u64; 5],
    pub flops: u64,
}

impl CostReport {
    pub fn csv_header() -> &'static str {
        "architecture,n_pts_u,n_pts_v,d_in,d_out,p_u,p_v,channels,modes,layers,encode,lift,layers_flops,project,decode,flops"
    }

    pub fn csv_row(&self) -> String {
        let b = &self.breakdown;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.architecture,
            self.n_pts_u,
            self.n_pts_v,
            self.d_in,
            self.d_out,
            self.p_u,
            self.p_v,
            self.channels,
            self.modes,
            self.layers,
            b[0],
            b[1],
            b[2],
            b[3],
            b[4],
            self.flops
        )
    }
}

fn build(name: &str, dims: [u64; 9], breakdown: [u64; 5]) -> CostReport {
    let [n_pts_u, n_pts_v, d_in, d_out, p_u, p_v, channels, modes, layers] = dims;
    CostReport {
        architecture: name.to_string(),
        n_pts_u,
        n_pts_v,
        d_in,
        d_out,
        p_u,
        p_v,
        channels,
        modes,
        layers,
        breakdown,
        flops: breakdown.iter().sum(),
    }
}

/// Exact flops of one GIT-Net evaluation with the given architecture and mesh sizes.
pub fn gitnet_cost(a: &Architecture, n_pts_u: usize, n_pts_v: usize) -> CostReport {
    let u = |v: usize| v as u64;
    let (c, k, l) = (u(a.channels), u(a.modes), u(a.layers));
    let (d_in, d_out, p_u, p_v) = (u(a.d_in), u(a.d_out), u(a.p_u), u(a.p_v));
    let encode = 2 * d_in * p_u * u(n_pts_u);
    let lift = 2 * (c * d_in * p_u + c * p_u * k);
    let per_layer = 2 * (c * k * k + c * c * k + c * k * k + c * c * k) + c * k;
    let hidden = l.saturating_sub(1) * a.hidden_activation.flops_per_element() * c * k;
    let layers = l * per_layer + hidden;
    let project = 2 * (d_out * c * k + d_out * k * p_v);
    let decode = 2 * d_out * p_v * u(n_pts_v);
    build(
        "gitnet",
        [u(n_pts_u), u(n_pts_v), d_in, d_out, p_u, p_v, c, k, l],
        [encode, lift, layers, project, decode],
    )
}

/// Exact GIT-Net flops on a shared mesh of `n_p` points with GELU hidden layers.
#[allow(clippy::too_many_arguments)]
pub fn flops_gitnet_exact(
    n_p: usize,
    d_in: usize,
    d_out: usize,
    p_u: usize,
    p_v: usize,
    c: usize,
    k: usize,
    l: usize,
) -> CostReport {
    let arch = Architecture {
        d_in,
        d_out,
        p_u,
        p_v,
        channels: c,
        modes: k,
        layers: l,
        variant: Variant::Standard,
        hidden_activation: Activation::Gelu,
    };
    gitnet_cost(&arch, n_p, n_p)
}

/// Exact flops of one PCA-Net evaluation. `widths` runs from `d_in·P_u` to
/// `d_out·P_v`; `activation` applies to hidden widths only.
pub fn flops_pcanet_exact(
    n_p: usize,
    d_in: usize,
    d_out: usize,
    p_u: usize,
    p_v: usize,
    widths: &[usize],
    activation: Activation,
) -> CostReport {
    pcanet_cost(d_in, d_out, p_u, p_v, widths, activation, n_p, n_p)
}

/// PCA-Net flops with separate input and output mesh sizes.
#[allow(clippy::too_many_arguments)]
pub fn pcanet_cost(
    d_in: usize,
    d_out: usize,
    p_u: usize,
    p_v: usize,
    widths: &[usize],
    activation: Activation,
    n_pts_u: usize,
    n_pts_v: usize,
) -> CostReport {
    let u = |v: usize| v as u64;
    let encode = 2 * u(d_in * p_u * n_pts_u);
    let decode = 2 * u(d_out * p_v * n_pts_v);
    let products: u64 = widths.windows(2).map(|w| 2 * u(w[0] * w[1])).sum();
    let hidden: u64 = widths
        .iter()
        .skip(1)
        .take(widths.len().saturating_sub(2))
        .map(|&w| u(w) * activation.flops_per_element())
        .sum();
    build(
        "pcanet",
        [u(n_pts_u), u(n_pts_v), u(d_in), u(d_out), u(p_u), u(p_v), 0, 0, u(widths.len().saturating_sub(1))],
        [encode, 0, products + hidden, 0, decode],
    )
}

/// Analytic FNO cost `L·(c_fft·C·N_p·log₂N_p·2 + 2·N_p·C²)`; `modes` does not
/// enter at this level of detail.
pub fn flops_fno_scaling(n_p: usize, c: usize, l: usize, _modes: usize) -> f64 {
    let (n, c, l) = (n_p as f64, c as f64, l as f64);
    l * (FFT_FLOPS_CONSTANT * c * n * n.log2() * 2.0 + 2.0 * n * c * c)
}

/// Analytic POD-DeepONet cost `2·N_p·C² + 2·C·K·N_p + 2·P·N_p`: a width-`C`
/// trunk evaluated at every point, `K` outputs per point, and a `P`-term
/// expansion.
pub fn flops_pod_deeponet(n_p: usize, c: usize, k: usize, p: usize) -> u64 {
    let (n, c, k, p) = (n_p as u64, c as u64, k as u64, p as u64);
    2 * n * c * c + 2 * c * k * n + 2 * p * n
}

/// Flops recorded by the kernel counter during one GIT-Net evaluation.
pub fn instrumented_gitnet(m: &GitNetParams, basis_u: &PcaBasis, basis_v: &PcaBasis, f: &Tensor) -> Result<u64> {
    let (out, n) = count_flops(|| gitnet_forward(m, basis_u, basis_v, f));
    out.map(|_| n)
}

/// Flops recorded by the kernel counter during one PCA-Net evaluation.
pub fn instrumented_pcanet(p: &PcaNetParams, basis_u: &PcaBasis, basis_v: &PcaBasis, f: &Tensor) -> Result<u64> {
    let (out, n) = count_flops(|| pcanet_forward(p, basis_u, basis_v, f));
    out.map(|_| n)
}
