//! Kernel two-sample testing with maximum mean discrepancy.
//!
//! The crate covers the biased and unbiased MMD statistics, distribution-free
//! and permutation thresholds, the optimal type-II error exponent `D*`, an
//! off-line change-point scan, an exact method-of-types calculator for small
//! alphabets, and a seeded Monte Carlo harness.

// `!(x > 0.0)` is how NaN gets rejected alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod changepoint;
pub mod distributions;
pub mod error;
pub mod exponents;
pub mod kernels;
pub mod mmd;
pub mod numeric;
pub mod rng;
pub mod sanov;
pub mod simulation;
pub mod thresholds;
pub mod two_sample;

pub use changepoint::{cp_threshold, detect, ChangePointResult, Window};
pub use distributions::{
    kld, sample, DiscreteDistribution, Distribution, GaussianMixture, GaussianSpec, MixtureComponent, Sample,
};
pub use error::{Error, Result};
pub use exponents::{dstar, dstar_oracle, exponent_report, exponent_report_at, Dstar, ExponentReport, Normalization, Regime};
pub use kernels::{BandwidthRule, KernelFamily, KernelSpec};
pub use mmd::{mmd2_biased, mmd2_unbiased, MmdValue, StatisticKind};
pub use thresholds::{ThresholdPolicy, ThresholdSpec};
pub use two_sample::{decide, Decision, KernelChoice, TestOutcome};
