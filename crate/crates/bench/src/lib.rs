//! Deterministic fixtures shared by the benchmarks.

use gitnet_core::gitnet::init_params;
use gitnet_core::pca::fit_pca;
use gitnet_core::pdedata::{advection_dataset, Mesh1D};
use gitnet_core::rng::splitmix64;
use gitnet_core::{Activation, Architecture, Dataset, GitNetParams, PcaBasis, PcaOptions, Tensor, Variant};

/// Entries uniform in `[-1, 1)`, derived from `seed` and the flat index.
pub fn uniform(shape: &[usize], seed: u64) -> Tensor {
    let mut i = 0u64;
    Tensor::from_fn(shape, |_| {
        i += 1;
        (splitmix64(seed ^ i.wrapping_mul(0x9e37_79b9)) >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    })
}

pub struct Problem {
    pub data: Dataset,
    pub basis_u: PcaBasis,
    pub basis_v: PcaBasis,
    pub model: GitNetParams,
}

/// Advection data on `mesh` points with a fitted model of the given shape.
pub fn advection_problem(mesh: usize, samples: usize, channels: usize, modes: usize, layers: usize) -> Problem {
    let data = advection_dataset(Mesh1D::new(mesh).unwrap(), samples, 1).unwrap();
    let opts = PcaOptions::default();
    let basis_u = fit_pca(&data.input_rows(), &opts).unwrap();
    let basis_v = fit_pca(&data.output_rows(), &opts).unwrap();
    let arch = Architecture {
        d_in: 1,
        d_out: 1,
        p_u: basis_u.n_components(),
        p_v: basis_v.n_components(),
        channels,
        modes,
        layers,
        variant: Variant::Standard,
        hidden_activation: Activation::Gelu,
    };
    let model = init_params(arch, 2).unwrap();
    Problem { data, basis_u, basis_v, model }
}
