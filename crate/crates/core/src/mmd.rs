//! Squared-MMD estimators and the exact finite-alphabet population MMD.

use serde::{Deserialize, Serialize};

use crate::distributions::{DiscreteDistribution, Sample};
use crate::error::{Error, Result};
use crate::kernels::{self, KernelSpec, DEFAULT_TILE};

/// Negative biased values down to this are treated as rounding noise.
pub const CLAMP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticKind {
    Biased,
    Unbiased,
}

impl std::fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StatisticKind::Biased => "biased",
            StatisticKind::Unbiased => "unbiased",
        })
    }
}

impl std::str::FromStr for StatisticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "biased" => Ok(StatisticKind::Biased),
            "unbiased" => Ok(StatisticKind::Unbiased),
            other => Err(Error::InvalidParameter(format!("unknown statistic `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MmdValue {
    pub squared: f64,
    pub kind: StatisticKind,
    pub n: usize,
    pub m: usize,
    pub kernel: KernelSpec,
}

impl MmdValue {
    /// `sqrt(max(squared, 0))`; the scale `d_k` used by the distribution-free bounds.
    pub fn distance(&self) -> f64 {
        self.squared.max(0.0).sqrt()
    }
}

/// The three kernel block sums of a two-sample split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BlockSums {
    /// off-diagonal sum within X
    pub xx_off: f64,
    pub xx_diag: f64,
    pub yy_off: f64,
    pub yy_diag: f64,
    pub xy: f64,
}

impl BlockSums {
    pub fn compute(x: &Sample, y: &Sample, kernel: &KernelSpec, tile: usize) -> Result<Self> {
        let xy = kernels::cross_sum(x, y, kernel, tile)?;
        Ok(Self {
            xx_off: kernels::off_diagonal_sum(x, kernel, tile),
            xx_diag: kernels::diagonal_sum(x, kernel),
            yy_off: kernels::off_diagonal_sum(y, kernel, tile),
            yy_diag: kernels::diagonal_sum(y, kernel),
            xy,
        })
    }
}

pub(crate) fn biased_from_sums(sxx: f64, syy: f64, sxy: f64, n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    sxx / (n * n) + syy / (m * m) - 2.0 * sxy / (n * m)
}

pub(crate) fn unbiased_from_sums(sxx_off: f64, syy_off: f64, sxy: f64, n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    sxx_off / (n * (n - 1.0)) + syy_off / (m * (m - 1.0)) - 2.0 * sxy / (n * m)
}

pub(crate) fn clamp_biased(v: f64) -> f64 {
    if (-CLAMP_TOL..0.0).contains(&v) {
        0.0
    } else {
        v
    }
}

fn check_pair(x: &Sample, y: &Sample) -> Result<()> {
    if x.d() != y.d() {
        return Err(Error::DimensionMismatch {
            left: x.d(),
            right: y.d(),
        });
    }
    Ok(())
}

/// Biased (V-statistic) squared MMD between the empirical measures of `x` and `y`.
pub fn mmd2_biased(x: &Sample, y: &Sample, kernel: &KernelSpec) -> Result<MmdValue> {
    mmd2_biased_tiled(x, y, kernel, DEFAULT_TILE)
}

/// As [`mmd2_biased`] with an explicit Gram tile size.
pub fn mmd2_biased_tiled(x: &Sample, y: &Sample, kernel: &KernelSpec, tile: usize) -> Result<MmdValue> {
    check_pair(x, y)?;
    let s = BlockSums::compute(x, y, kernel, tile)?;
    let squared = biased_from_sums(s.xx_off + s.xx_diag, s.yy_off + s.yy_diag, s.xy, x.n(), y.n());
    Ok(MmdValue {
        squared: clamp_biased(squared),
        kind: StatisticKind::Biased,
        n: x.n(),
        m: y.n(),
        kernel: *kernel,
    })
}

/// Unbiased (U-statistic) squared MMD; diagonal terms excluded, may be negative.
pub fn mmd2_unbiased(x: &Sample, y: &Sample, kernel: &KernelSpec) -> Result<MmdValue> {
    mmd2_unbiased_tiled(x, y, kernel, DEFAULT_TILE)
}

pub fn mmd2_unbiased_tiled(x: &Sample, y: &Sample, kernel: &KernelSpec, tile: usize) -> Result<MmdValue> {
    check_pair(x, y)?;
    let needed = 2;
    if x.n() < needed || y.n() < needed {
        return Err(Error::TooFewObservations {
            needed,
            got: x.n().min(y.n()),
        });
    }
    let s = BlockSums::compute(x, y, kernel, tile)?;
    Ok(MmdValue {
        squared: unbiased_from_sums(s.xx_off, s.yy_off, s.xy, x.n(), y.n()),
        kind: StatisticKind::Unbiased,
        n: x.n(),
        m: y.n(),
        kernel: *kernel,
    })
}

/// Squared MMD of aligned pmfs over `support`: `(p-q)^T K (p-q)`.
pub fn mmd2_population_pmf(support: &[Vec<f64>], p: &[f64], q: &[f64], kernel: &KernelSpec) -> f64 {
    let diff: Vec<f64> = p.iter().zip(q).map(|(a, b)| a - b).collect();
    let mut acc = 0.0;
    for (a, &da) in diff.iter().enumerate() {
        if da == 0.0 {
            continue;
        }
        for (b, &db) in diff.iter().enumerate() {
            acc += da * db * kernel.eval(&support[a], &support[b]);
        }
    }
    acc
}

/// Exact `d_k(P, Q)` for finite-support distributions.
pub fn mmd_population_discrete(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    kernel: &KernelSpec,
) -> Result<f64> {
    let a = p.align(q)?;
    Ok(clamp_biased(mmd2_population_pmf(&a.support, &a.p, &a.q, kernel))
        .max(0.0)
        .sqrt())
}

/// `max_k d_k(P_n, Q_m)` over a finite kernel family sharing one bound `K`.
pub fn mmd_sup_family(x: &Sample, y: &Sample, kernels: &[KernelSpec]) -> Result<f64> {
    let first = kernels.first().ok_or(Error::EmptyKernelFamily)?;
    if kernels.iter().any(|k| k.bound() != first.bound()) {
        return Err(Error::InvalidParameter("kernel family must share one bound K".into()));
    }
    let mut best = f64::NEG_INFINITY;
    for k in kernels {
        best = best.max(mmd2_biased(x, y, k)?.distance());
    }
    Ok(best)
}
