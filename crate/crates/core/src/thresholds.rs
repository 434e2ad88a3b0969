//! Test thresholds: distribution-free bounds and the permutation null.
//!
//! Closed-form thresholds live on the scale of the statistic they bound:
//! [`ldb_threshold`] and [`one_sample_threshold`] bound `d_k` (the square
//! root of the biased statistic), [`unbiased_ldb_threshold`] bounds the
//! unbiased squared statistic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::Sample;
use crate::error::{Error, Result};
use crate::kernels::{gram_matrix_symmetric, Gram, KernelSpec};
use crate::mmd::{self, StatisticKind};
use crate::numeric::compensated_sum;
use crate::rng;

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_PERMUTATIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    Ldb,
    #[serde(alias = "unbiased")]
    UnbiasedLdb,
    Permutation,
    Combined,
    OneSample,
}

impl ThresholdPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            ThresholdPolicy::Ldb => "ldb",
            ThresholdPolicy::UnbiasedLdb => "unbiased_ldb",
            ThresholdPolicy::Permutation => "permutation",
            ThresholdPolicy::Combined => "combined",
            ThresholdPolicy::OneSample => "one_sample",
        }
    }
}

impl std::fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ThresholdPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ldb" => ThresholdPolicy::Ldb,
            "unbiased" | "unbiased_ldb" => ThresholdPolicy::UnbiasedLdb,
            "permutation" => ThresholdPolicy::Permutation,
            "combined" => ThresholdPolicy::Combined,
            "one_sample" => ThresholdPolicy::OneSample,
            other => return Err(Error::InvalidParameter(format!("unknown threshold policy `{other}`"))),
        })
    }
}

fn default_b() -> usize {
    DEFAULT_PERMUTATIONS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawThresholdSpec")]
pub struct ThresholdSpec {
    pub policy: ThresholdPolicy,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
}

#[derive(Deserialize)]
struct RawThresholdSpec {
    policy: ThresholdPolicy,
    alpha: f64,
    #[serde(rename = "B", default = "default_b")]
    b: usize,
    #[serde(default)]
    seed: u64,
}

impl TryFrom<RawThresholdSpec> for ThresholdSpec {
    type Error = Error;

    fn try_from(r: RawThresholdSpec) -> Result<Self> {
        ThresholdSpec::new(r.policy, r.alpha, r.b, r.seed)
    }
}

impl ThresholdSpec {
    pub fn new(policy: ThresholdPolicy, alpha: f64, b: usize, seed: u64) -> Result<Self> {
        check_alpha(alpha)?;
        if b == 0 {
            return Err(Error::InvalidParameter("permutation count B must be >= 1".into()));
        }
        Ok(Self { policy, alpha, b, seed })
    }

    pub fn ldb(alpha: f64) -> Result<Self> {
        Self::new(ThresholdPolicy::Ldb, alpha, DEFAULT_PERMUTATIONS, 0)
    }

    pub fn permutation(alpha: f64, b: usize, seed: u64) -> Result<Self> {
        Self::new(ThresholdPolicy::Permutation, alpha, b, seed)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn check_bound(k: f64) -> Result<()> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::InvalidParameter(format!("kernel bound K must be positive, got {k}")));
    }
    Ok(())
}

fn check_size(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::TooFewObservations { needed: min, got: n });
    }
    Ok(())
}

/// Distribution-free threshold on `d_k(P_n, Q_m)`:
/// `(sqrt(K/m) + sqrt(K/n)) (2 + sqrt(2 ln(2/alpha)))`.
pub fn ldb_threshold(n: usize, m: usize, k: f64, alpha: f64) -> Result<f64> {
    check_size(n, 1)?;
    check_size(m, 1)?;
    check_bound(k)?;
    check_alpha(alpha)?;
    let (n, m) = (n as f64, m as f64);
    Ok(((k / m).sqrt() + (k / n).sqrt()) * (2.0 + (2.0 * (2.0 / alpha).ln()).sqrt()))
}

/// Threshold on the unbiased squared statistic with equal sample sizes:
/// `(4K / sqrt(n)) sqrt(ln(1/alpha))`.
pub fn unbiased_ldb_threshold(n: usize, k: f64, alpha: f64) -> Result<f64> {
    check_size(n, 2)?;
    check_bound(k)?;
    check_alpha(alpha)?;
    Ok(4.0 * k / (n as f64).sqrt() * (1.0 / alpha).ln().sqrt())
}

/// [`unbiased_ldb_threshold`] for a pair of sizes, which must agree.
pub fn unbiased_ldb_threshold_for(n: usize, m: usize, k: f64, alpha: f64) -> Result<f64> {
    if n != m {
        return Err(Error::IncompatiblePolicy {
            statistic: StatisticKind::Unbiased.to_string(),
            policy: ThresholdPolicy::UnbiasedLdb.to_string(),
            reason: format!("requires n = m, got n = {n}, m = {m}"),
        });
    }
    unbiased_ldb_threshold(n, k, alpha)
}

/// One-sample threshold on `d_k(P, P_n)`: `sqrt(2K/n) (1 + sqrt(ln(1/alpha)))`.
pub fn one_sample_threshold(n: usize, k: f64, alpha: f64) -> Result<f64> {
    check_size(n, 1)?;
    check_bound(k)?;
    check_alpha(alpha)?;
    Ok((2.0 * k / n as f64).sqrt() * (1.0 + (1.0 / alpha).ln().sqrt()))
}

/// Pooled Gram matrices of `x ∪ y`, one per kernel, with the row sums needed
/// to score any relabelling of the pooled points in `O(s^2)` where `s` is the
/// smaller group size.
#[derive(Debug, Clone)]
pub struct PooledGram {
    grams: Vec<Gram>,
    row_sums: Vec<Vec<f64>>,
    totals: Vec<f64>,
    n: usize,
    m: usize,
}

impl PooledGram {
    pub fn new(x: &Sample, y: &Sample, kernels: &[KernelSpec]) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::EmptyKernelFamily);
        }
        let pooled = x.concat(y)?;
        let grams: Vec<Gram> = kernels.iter().map(|k| gram_matrix_symmetric(&pooled, k)).collect();
        let row_sums: Vec<Vec<f64>> = grams
            .iter()
            .map(|g| (0..g.rows()).map(|i| compensated_sum(g.row(i).iter().copied())).collect())
            .collect();
        let totals = row_sums.iter().map(|r| compensated_sum(r.iter().copied())).collect();
        Ok(Self {
            grams,
            row_sums,
            totals,
            n: x.n(),
            m: y.n(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `(sum within group incl. diagonal, sum of diagonal)` for sorted indices.
    fn within(&self, g: usize, idx: &[usize]) -> (f64, f64) {
        let gram = &self.grams[g];
        let mut off = 0.0;
        let mut diag = 0.0;
        for (p, &i) in idx.iter().enumerate() {
            let row = gram.row(i);
            diag += row[i];
            let mut acc = 0.0;
            for &j in &idx[p + 1..] {
                acc += row[j];
            }
            off += acc;
        }
        (2.0 * off + diag, diag)
    }

    /// Statistic on its native scale for the split where `first` (sorted, size n)
    /// forms X and `second` (sorted, size m) forms Y.
    fn split_statistic(&self, g: usize, first: &[usize], second: &[usize], kind: StatisticKind) -> f64 {
        // square only the smaller group; the rest follows from row sums
        let (small, swap) = if second.len() < first.len() {
            (second, true)
        } else {
            (first, false)
        };
        let (s_ss, diag_s) = self.within(g, small);
        let rows: f64 = small.iter().map(|&i| self.row_sums[g][i]).sum();
        let s_st = rows - s_ss;
        let s_tt = self.totals[g] - 2.0 * s_st - s_ss;
        let (s_xx, s_yy) = if swap { (s_tt, s_ss) } else { (s_ss, s_tt) };
        match kind {
            StatisticKind::Biased => mmd::clamp_biased(mmd::biased_from_sums(s_xx, s_yy, s_st, self.n, self.m))
                .max(0.0)
                .sqrt(),
            StatisticKind::Unbiased => {
                let diag_t: f64 = {
                    let other = if swap { first } else { second };
                    other.iter().map(|&i| self.grams[g].get(i, i)).sum()
                };
                let (dx, dy) = if swap { (diag_t, diag_s) } else { (diag_s, diag_t) };
                mmd::unbiased_from_sums(s_xx - dx, s_yy - dy, s_st, self.n, self.m)
            }
        }
    }

    fn family_statistic(&self, first: &[usize], second: &[usize], kind: StatisticKind) -> f64 {
        (0..self.grams.len())
            .map(|g| self.split_statistic(g, first, second, kind))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Statistic for the original labelling (first n pooled rows are X).
    pub fn observed(&self, kind: StatisticKind) -> f64 {
        let first: Vec<usize> = (0..self.n).collect();
        let second: Vec<usize> = (self.n..self.n + self.m).collect();
        self.family_statistic(&first, &second, kind)
    }

    /// Statistic under one uniformly random relabelling drawn from `rng`.
    pub fn permuted_once<R: rand::Rng + ?Sized>(&self, kind: StatisticKind, rng: &mut R) -> f64 {
        use rand::seq::SliceRandom;
        let total = self.n + self.m;
        let mut idx: Vec<usize> = (0..total).collect();
        let (chosen, rest) = idx.partial_shuffle(rng, self.n);
        let mut first = chosen.to_vec();
        let mut second = rest.to_vec();
        first.sort_unstable();
        second.sort_unstable();
        self.family_statistic(&first, &second, kind)
    }

    /// `B` permuted statistics; replicate `b` draws from stream `(seed, b)`.
    pub fn permuted(&self, kind: StatisticKind, replicates: usize, seed: u64) -> Vec<f64> {
        (0..replicates)
            .into_par_iter()
            .map(|b| {
                let mut rng = rng::stream(seed, &[b as u64]);
                self.permuted_once(kind, &mut rng)
            })
            .collect()
    }
}

/// `k`-th smallest of `permuted ∪ {observed}` with `k = ceil((1 - alpha)(B + 1))`.
pub fn permutation_quantile(observed: f64, permuted: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if permuted.is_empty() {
        return Err(Error::InvalidParameter("permutation count B must be >= 1".into()));
    }
    let mut values = Vec::with_capacity(permuted.len() + 1);
    values.extend_from_slice(permuted);
    values.push(observed);
    values.sort_by(f64::total_cmp);
    let count = values.len();
    let rank = (((1.0 - alpha) * count as f64) - 1e-9).ceil() as usize;
    Ok(values[rank.clamp(1, count) - 1])
}

/// Permutation threshold for the statistic `kind` on its native scale
/// (`d_k` for biased, squared for unbiased).
pub fn permutation_threshold(
    x: &Sample,
    y: &Sample,
    kernel: &KernelSpec,
    alpha: f64,
    b: usize,
    seed: u64,
    kind: StatisticKind,
) -> Result<f64> {
    let observed = native_statistic(x, y, std::slice::from_ref(kernel), kind)?;
    let pooled = PooledGram::new(x, y, std::slice::from_ref(kernel))?;
    permutation_quantile(observed, &pooled.permuted(kind, b, seed), alpha)
}

/// The test statistic on the scale its thresholds use.
pub(crate) fn native_statistic(x: &Sample, y: &Sample, kernels: &[KernelSpec], kind: StatisticKind) -> Result<f64> {
    match (kind, kernels) {
        (_, []) => Err(Error::EmptyKernelFamily),
        (StatisticKind::Biased, [k]) => Ok(mmd::mmd2_biased(x, y, k)?.distance()),
        (StatisticKind::Biased, family) => mmd::mmd_sup_family(x, y, family),
        (StatisticKind::Unbiased, [k]) => Ok(mmd::mmd2_unbiased(x, y, k)?.squared),
        (StatisticKind::Unbiased, _) => Err(Error::IncompatiblePolicy {
            statistic: kind.to_string(),
            policy: "kernel family".into(),
            reason: "the sup statistic is defined for the biased estimator only".into(),
        }),
    }
}

/// Threshold for `spec` when testing `x` against `y`, after checking that the
/// policy bounds the requested statistic. `observed` must be the native
/// statistic for this pairing; it enters the permutation quantile.
pub(crate) fn evaluate(
    spec: &ThresholdSpec,
    x: &Sample,
    y: &Sample,
    kernels: &[KernelSpec],
    kind: StatisticKind,
    observed: f64,
) -> Result<f64> {
    let bound = kernels.first().ok_or(Error::EmptyKernelFamily)?.bound();
    let incompatible = |reason: &str| Error::IncompatiblePolicy {
        statistic: kind.to_string(),
        policy: spec.policy.to_string(),
        reason: reason.to_string(),
    };
    let closed_form = |policy: ThresholdPolicy| -> Result<f64> {
        match (policy, kind) {
            (ThresholdPolicy::Ldb, StatisticKind::Biased) => ldb_threshold(x.n(), y.n(), bound, spec.alpha),
            (ThresholdPolicy::UnbiasedLdb, StatisticKind::Unbiased) => {
                unbiased_ldb_threshold_for(x.n(), y.n(), bound, spec.alpha)
            }
            _ => unreachable!("closed-form pairing checked by caller"),
        }
    };
    let permutation = || -> Result<f64> {
        let pooled = PooledGram::new(x, y, kernels)?;
        permutation_quantile(observed, &pooled.permuted(kind, spec.b, spec.seed), spec.alpha)
    };
    match (spec.policy, kind) {
        (ThresholdPolicy::Ldb, StatisticKind::Biased) => closed_form(ThresholdPolicy::Ldb),
        (ThresholdPolicy::Ldb, StatisticKind::Unbiased) => {
            Err(incompatible("ldb bounds d_k; use unbiased_ldb for the unbiased statistic"))
        }
        (ThresholdPolicy::UnbiasedLdb, StatisticKind::Unbiased) => closed_form(ThresholdPolicy::UnbiasedLdb),
        (ThresholdPolicy::UnbiasedLdb, StatisticKind::Biased) => {
            Err(incompatible("unbiased_ldb bounds the unbiased squared statistic"))
        }
        (ThresholdPolicy::Permutation, _) => permutation(),
        (ThresholdPolicy::Combined, _) => {
            let free = match kind {
                StatisticKind::Biased => closed_form(ThresholdPolicy::Ldb)?,
                StatisticKind::Unbiased => closed_form(ThresholdPolicy::UnbiasedLdb)?,
            };
            Ok(permutation()?.min(free))
        }
        (ThresholdPolicy::OneSample, _) => Err(incompatible("one_sample bounds d_k(P, P_n), not a two-sample statistic")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::GaussianSpec;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ldb_reference_and_scaling() {
        let t = ldb_threshold(100, 100, 1.0, 0.05).unwrap();
        assert!(close(t, 0.943_241, 1e-6), "{t}");
        let t2 = ldb_threshold(100, 100, 2.0, 0.05).unwrap();
        assert!(close(t2 / t, 2f64.sqrt(), 1e-14));
        let t4 = ldb_threshold(400, 400, 1.0, 0.05).unwrap();
        assert!(close(t4, t / 2.0, 1e-15));
    }

    #[test]
    fn unbiased_reference_and_scaling() {
        // (4/10) sqrt(ln 20) = 0.6923274
        let t = unbiased_ldb_threshold(100, 1.0, 0.05).unwrap();
        assert!(close(t, 0.692_327_4, 1e-7), "{t}");
        let t4 = unbiased_ldb_threshold(400, 1.0, 0.05).unwrap();
        assert!(close(t4, 0.346_163_7, 1e-7));
        assert!(close(t4, t / 2.0, 1e-15));
        assert!(unbiased_ldb_threshold(100, 1.0, 1.0 - 1e-12).unwrap() < 1e-5);
        assert!(unbiased_ldb_threshold_for(10, 12, 1.0, 0.05).is_err());
    }

    #[test]
    fn one_sample_reference() {
        // sqrt(0.02) (1 + sqrt(ln 20)) = 0.3861960
        let t = one_sample_threshold(100, 1.0, 0.05).unwrap();
        assert!(close(t, 0.386_196_0, 1e-7), "{t}");
        assert!(one_sample_threshold(100, 0.0, 0.05).is_err());
        let mut prev = f64::INFINITY;
        for n in [1, 10, 100, 1000, 10_000] {
            let v = one_sample_threshold(n, 1.0, 0.05).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(ldb_threshold(0, 10, 1.0, 0.05).is_err());
        assert!(ldb_threshold(10, 10, 1.0, 0.0).is_err());
        assert!(ldb_threshold(10, 10, 1.0, 1.0).is_err());
        assert!(ThresholdSpec::new(ThresholdPolicy::Permutation, 0.05, 0, 1).is_err());
    }

    #[test]
    fn closed_forms_are_monotone() {
        let alphas = [0.01, 0.05, 0.1, 0.5];
        for w in alphas.windows(2) {
            assert!(ldb_threshold(50, 50, 1.0, w[1]).unwrap() < ldb_threshold(50, 50, 1.0, w[0]).unwrap());
            assert!(unbiased_ldb_threshold(50, 1.0, w[1]).unwrap() < unbiased_ldb_threshold(50, 1.0, w[0]).unwrap());
            assert!(one_sample_threshold(50, 1.0, w[1]).unwrap() < one_sample_threshold(50, 1.0, w[0]).unwrap());
        }
        for n in [2usize, 5, 50, 500] {
            assert!(ldb_threshold(n + 1, 7, 1.0, 0.05).unwrap() < ldb_threshold(n, 7, 1.0, 0.05).unwrap());
            assert!(ldb_threshold(7, n + 1, 1.0, 0.05).unwrap() < ldb_threshold(7, n, 1.0, 0.05).unwrap());
            assert!(unbiased_ldb_threshold(n + 1, 1.0, 0.05).unwrap() < unbiased_ldb_threshold(n, 1.0, 0.05).unwrap());
        }
    }

    #[test]
    fn quantile_rule() {
        // B = 1: k = ceil(0.95 * 2) = 2, the larger of the two values
        assert_eq!(permutation_quantile(0.3, &[0.7], 0.05).unwrap(), 0.7);
        assert_eq!(permutation_quantile(0.9, &[0.7], 0.05).unwrap(), 0.9);
        // B = 9, alpha = 0.1: k = 9 of 10
        let perm: Vec<f64> = (1..=9).map(f64::from).collect();
        assert_eq!(permutation_quantile(10.0, &perm, 0.1).unwrap(), 9.0);
        // B = 1, alpha = 0.5: k = 1
        assert_eq!(permutation_quantile(0.9, &[0.7], 0.5).unwrap(), 0.7);
    }

    #[test]
    fn pooled_statistics_match_direct_estimators() {
        let g = GaussianSpec::isotropic(vec![0.0, 0.0]).unwrap();
        let x = g.sample(17, 1).unwrap();
        let y = g.sample(11, 2).unwrap();
        let k = KernelSpec::gaussian(1.3).unwrap();
        let pooled = PooledGram::new(&x, &y, &[k]).unwrap();
        let biased = mmd::mmd2_biased(&x, &y, &k).unwrap().distance();
        let unbiased = mmd::mmd2_unbiased(&x, &y, &k).unwrap().squared;
        assert!(close(pooled.observed(StatisticKind::Biased), biased, 1e-12));
        assert!(close(pooled.observed(StatisticKind::Unbiased), unbiased, 1e-12));

        // an explicit relabelling scored both ways
        let mut rng = rng::stream(9, &[0]);
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..28).collect();
        idx.shuffle(&mut rng);
        let mut first = idx[..17].to_vec();
        let mut second = idx[17..].to_vec();
        first.sort_unstable();
        second.sort_unstable();
        let all = x.concat(&y).unwrap();
        let xs = all.select(&first).unwrap();
        let ys = all.select(&second).unwrap();
        let direct = mmd::mmd2_unbiased(&xs, &ys, &k).unwrap().squared;
        assert!(close(pooled.split_statistic(0, &first, &second, StatisticKind::Unbiased), direct, 1e-12));
        let direct = mmd::mmd2_biased(&xs, &ys, &k).unwrap().distance();
        assert!(close(pooled.split_statistic(0, &first, &second, StatisticKind::Biased), direct, 1e-12));
    }

    #[test]
    fn permutation_threshold_is_deterministic() {
        let g = GaussianSpec::isotropic(vec![0.0]).unwrap();
        let x = g.sample(20, 3).unwrap();
        let y = g.sample(25, 4).unwrap();
        let k = KernelSpec::gaussian(1.0).unwrap();
        let a = permutation_threshold(&x, &y, &k, 0.05, 50, 7, StatisticKind::Biased).unwrap();
        let b = permutation_threshold(&x, &y, &k, 0.05, 50, 7, StatisticKind::Biased).unwrap();
        assert_eq!(a, b);
        let c = permutation_threshold(&x, &y, &k, 0.05, 50, 8, StatisticKind::Biased).unwrap();
        assert!(a > 0.0 && c > 0.0);
    }

    #[test]
    fn spec_json() {
        let s: ThresholdSpec =
            serde_json::from_str(r#"{"policy":"permutation","alpha":0.05,"B":200,"seed":3}"#).unwrap();
        assert_eq!(s, ThresholdSpec::new(ThresholdPolicy::Permutation, 0.05, 200, 3).unwrap());
        let s: ThresholdSpec = serde_json::from_str(r#"{"policy":"ldb","alpha":0.1}"#).unwrap();
        assert_eq!(s.b, DEFAULT_PERMUTATIONS);
        let s: ThresholdSpec = serde_json::from_str(r#"{"policy":"unbiased","alpha":0.1}"#).unwrap();
        assert_eq!(s.policy, ThresholdPolicy::UnbiasedLdb);
        assert!(serde_json::from_str::<ThresholdSpec>(r#"{"policy":"ldb","alpha":1.5}"#).is_err());
        assert!(serde_json::from_str::<ThresholdSpec>(r#"{"policy":"ldb","alpha":0.1,"B":0}"#).is_err());
    }
}
