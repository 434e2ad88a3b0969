//! Shared fixtures for the benchmarks.

use kernex::{DiscreteDistribution, GaussianSpec, KernelSpec, Sample};

/// `n` draws from a standard normal in `d` dimensions centred at `shift`.
pub fn gaussian_sample(n: usize, d: usize, shift: f64, seed: u64) -> Sample {
    let spec = GaussianSpec::isotropic(vec![shift; d]).expect("valid mean");
    kernex::sample(&spec.into(), n, seed).expect("sampling succeeds")
}

/// A sequence of `n` scalars whose mean jumps by `shift` halfway through.
pub fn step_sequence(n: usize, shift: f64, seed: u64) -> Sample {
    let pre = gaussian_sample(n / 2, 1, 0.0, seed);
    let post = gaussian_sample(n - n / 2, 1, shift, seed + 1);
    pre.concat(&post).expect("same dimension")
}

pub fn unit_kernel() -> KernelSpec {
    KernelSpec::gaussian(1.0).expect("positive bandwidth")
}

/// The Bernoulli pair used throughout the exact checks.
pub fn bernoulli_pair() -> (DiscreteDistribution, DiscreteDistribution) {
    (
        DiscreteDistribution::on_alphabet(vec![0.5, 0.5]).expect("valid pmf"),
        DiscreteDistribution::on_alphabet(vec![0.9, 0.1]).expect("valid pmf"),
    )
}
