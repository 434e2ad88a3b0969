//! The two-sample decision: statistic against threshold.

use serde::{Deserialize, Serialize};

use crate::distributions::Sample;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::mmd::StatisticKind;
use crate::thresholds::{self, ThresholdPolicy, ThresholdSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    #[serde(rename = "accept_H0")]
    AcceptH0,
    #[serde(rename = "reject_H0")]
    RejectH0,
}

impl Decision {
    pub fn rejects(&self) -> bool {
        matches!(self, Decision::RejectH0)
    }
}

/// A single kernel or a finite family scored by its supremum.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelChoice {
    Single(KernelSpec),
    Family(Vec<KernelSpec>),
}

impl KernelChoice {
    pub fn kernels(&self) -> &[KernelSpec] {
        match self {
            KernelChoice::Single(k) => std::slice::from_ref(k),
            KernelChoice::Family(ks) => ks,
        }
    }
}

impl From<KernelSpec> for KernelChoice {
    fn from(k: KernelSpec) -> Self {
        KernelChoice::Single(k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestOutcome {
    pub decision: Decision,
    pub statistic: f64,
    pub threshold: f64,
    pub statistic_kind: StatisticKind,
    pub threshold_policy: ThresholdPolicy,
    pub n: usize,
    pub m: usize,
}

/// Accepts `H0: P = Q` iff the statistic does not exceed the threshold.
///
/// The biased statistic is compared as `d_k` (square root), the unbiased one
/// as the raw squared value, matching the scale of each threshold formula.
pub fn decide(
    x: &Sample,
    y: &Sample,
    kernel: &KernelChoice,
    spec: &ThresholdSpec,
    kind: StatisticKind,
) -> Result<TestOutcome> {
    let kernels = kernel.kernels();
    if kernels.is_empty() {
        return Err(Error::EmptyKernelFamily);
    }
    if x.d() != y.d() {
        return Err(Error::DimensionMismatch {
            left: x.d(),
            right: y.d(),
        });
    }
    let statistic = thresholds::native_statistic(x, y, kernels, kind)?;
    let threshold = thresholds::evaluate(spec, x, y, kernels, kind, statistic)?;
    let decision = if statistic <= threshold {
        Decision::AcceptH0
    } else {
        Decision::RejectH0
    };
    Ok(TestOutcome {
        decision,
        statistic,
        threshold,
        statistic_kind: kind,
        threshold_policy: spec.policy,
        n: x.n(),
        m: y.n(),
    })
}
