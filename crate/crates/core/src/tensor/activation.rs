use super::{flops, Tensor};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Declared cost of one GELU evaluation (erf through a rational approximation).
pub const GELU_FLOPS: u64 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Gelu,
    Relu,
}

impl Activation {
    pub fn apply(self, x: &Tensor) -> Tensor {
        match self {
            Activation::Identity => x.clone(),
            Activation::Gelu => gelu(x),
            Activation::Relu => relu(x),
        }
    }

    pub fn derivative(self, x: &Tensor) -> Tensor {
        match self {
            Activation::Identity => x.map(|_| 1.0),
            Activation::Gelu => gelu_grad(x),
            Activation::Relu => relu_grad(x),
        }
    }

    /// Flops charged per element by the counter. Max and copy are free.
    pub fn flops_per_element(self) -> u64 {
        match self {
            Activation::Gelu => GELU_FLOPS,
            Activation::Identity | Activation::Relu => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Gelu => "gelu",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Activation::Identity),
            "gelu" => Some(Activation::Gelu),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Standard normal CDF. Uses `erfc` so the lower tail keeps full relative precision.
#[inline]
fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

#[inline]
fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Exact GELU, `x·Φ(x)`.
#[inline]
pub fn gelu_scalar(x: f64) -> f64 {
    x * normal_cdf(x)
}

/// `d/dx x·Φ(x) = Φ(x) + x·φ(x)`
#[inline]
pub fn gelu_grad_scalar(x: f64) -> f64 {
    normal_cdf(x) + x * normal_pdf(x)
}

pub fn gelu(x: &Tensor) -> Tensor {
    flops::record(GELU_FLOPS * x.len() as u64);
    x.map(gelu_scalar)
}

pub fn gelu_grad(x: &Tensor) -> Tensor {
    x.map(gelu_grad_scalar)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn relu_grad(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { 1.0 } else { 0.0 })
}
