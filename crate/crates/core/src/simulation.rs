//! Seeded Monte Carlo experiments: error curves, exponent fits, bandwidth
//! sweeps and change-point power.
//!
//! Every random draw comes from a stream keyed by `(master seed, cell, trial,
//! purpose)`, and trials are collected in index order, so output depends only
//! on the config and the seed, never on the thread count.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::changepoint::{detect, Window};
use crate::distributions::{Distribution, GaussianMixture, GaussianSpec, Sample};
use crate::error::{Error, Result};
use crate::exponents::Normalization;
use crate::kernels::{BandwidthRule, KernelSpec};
use crate::mmd::StatisticKind;
use crate::rng;
use crate::thresholds::{ThresholdPolicy, ThresholdSpec, DEFAULT_ALPHA};
use crate::two_sample::{decide, KernelChoice};

const DRAW_X: u64 = 0;
const DRAW_Y: u64 = 1;
const PERMUTE: u64 = 2;
const NULL_X: u64 = 3;
const NULL_Y: u64 = 4;
const NULL_PERMUTE: u64 = 5;
const SETUP: u64 = 6;

/// Hex SHA-256 of the config's JSON serialization.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("configs serialize");
    Sha256::digest(&bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn header(experiment: &str, hash: &str, seed: u64) -> String {
    format!("# experiment={experiment} config_sha256={hash} seed={seed}\n")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn default_bandwidth() -> BandwidthRule {
    BandwidthRule::Median
}

fn default_statistic() -> StatisticKind {
    StatisticKind::Biased
}

fn default_true() -> bool {
    true
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

/// Two-sample error-rate experiment over a grid of sample sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoSampleConfig {
    pub p: Distribution,
    pub q: Distribution,
    pub n_grid: Vec<usize>,
    /// Defaults to `n_grid`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_grid: Option<Vec<usize>>,
    pub trials: usize,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: BandwidthRule,
    #[serde(default = "default_statistic")]
    pub statistic: StatisticKind,
    pub threshold: ThresholdSpec,
    /// Also run every trial under `P = P` to estimate the type-I rate.
    #[serde(default = "default_true")]
    pub measure_type_one: bool,
}

impl TwoSampleConfig {
    fn sizes(&self) -> Result<Vec<(usize, usize)>> {
        if self.n_grid.is_empty() {
            return Err(Error::Config("n_grid must not be empty".into()));
        }
        let m_grid = self.m_grid.as_ref().unwrap_or(&self.n_grid);
        if m_grid.len() != self.n_grid.len() {
            return Err(Error::Config(format!(
                "m_grid has {} entries but n_grid has {}",
                m_grid.len(),
                self.n_grid.len()
            )));
        }
        let sizes: Vec<_> = self.n_grid.iter().copied().zip(m_grid.iter().copied()).collect();
        if let Some(&(n, m)) = sizes.iter().find(|&&(n, m)| n < 2 || m < 2) {
            return Err(Error::Config(format!("sample sizes must be >= 2, got n={n}, m={m}")));
        }
        Ok(sizes)
    }

    pub fn validate(&self) -> Result<()> {
        check_trials(self.trials)?;
        if self.p.dim() != self.q.dim() {
            return Err(Error::Config(format!(
                "p has dimension {} but q has dimension {}",
                self.p.dim(),
                self.q.dim()
            )));
        }
        self.sizes().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub type_one_rate: Option<f64>,
    /// Absent when `P = Q`.
    pub type_two_rate: Option<f64>,
    pub threshold_policy: ThresholdPolicy,
    pub bandwidth_rule: String,
}

impl CurveRow {
    /// `ln(type-II rate)`; a zero rate is written as `<ln(1/trials)>`.
    pub fn log_type_two(&self) -> Option<String> {
        self.type_two_rate.map(|r| {
            if r > 0.0 {
                r.ln().to_string()
            } else {
                format!("<{}", (1.0 / self.trials as f64).ln())
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorCurve {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<CurveRow>,
}

impl ErrorCurve {
    pub fn to_csv(&self) -> String {
        let mut out = header(&self.experiment, &self.config_hash, self.seed);
        out.push_str("n,m,trials,type_I_rate,type_II_rate,log_type_II_rate,threshold_policy,bandwidth_rule\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.n,
                r.m,
                r.trials,
                fmt_opt(r.type_one_rate),
                fmt_opt(r.type_two_rate),
                r.log_type_two().unwrap_or_default(),
                r.threshold_policy,
                r.bandwidth_rule
            );
        }
        out
    }
}

fn one_test(
    p: &Distribution,
    q: &Distribution,
    (n, m): (usize, usize),
    config: &TwoSampleConfig,
    seed: u64,
    path: [u64; 2],
    purposes: [u64; 3],
) -> Result<bool> {
    let [cell, trial] = path;
    let x = p.sample_with(n, &mut rng::stream(seed, &[cell, trial, purposes[0]]))?;
    let y = q.sample_with(m, &mut rng::stream(seed, &[cell, trial, purposes[1]]))?;
    let kernel = config.bandwidth.resolve(&x.concat(&y)?)?;
    let spec = config
        .threshold
        .with_seed(rng::derive_seed(seed, &[cell, trial, purposes[2]]));
    Ok(decide(&x, &y, &KernelChoice::Single(kernel), &spec, config.statistic)?
        .decision
        .rejects())
}

/// Per-size empirical type-I and type-II rates.
pub fn run_two_sample_experiment(config: &TwoSampleConfig, seed: u64) -> Result<ErrorCurve> {
    config.validate()?;
    let sizes = config.sizes()?;
    let null_only = config.p == config.q;
    let measure_null = config.measure_type_one || null_only;
    let mut rows = Vec::with_capacity(sizes.len());
    for (cell, &(n, m)) in sizes.iter().enumerate() {
        let cell = cell as u64;
        let outcomes: Vec<(bool, bool)> = (0..config.trials as u64)
            .into_par_iter()
            .map(|trial| {
                let false_alarm = if measure_null {
                    one_test(&config.p, &config.p, (n, m), config, seed, [cell, trial], [NULL_X, NULL_Y, NULL_PERMUTE])?
                } else {
                    false
                };
                let miss = if null_only {
                    false
                } else {
                    !one_test(&config.p, &config.q, (n, m), config, seed, [cell, trial], [DRAW_X, DRAW_Y, PERMUTE])?
                };
                Ok((false_alarm, miss))
            })
            .collect::<Result<_>>()?;
        let trials = config.trials as f64;
        let false_alarms = outcomes.iter().filter(|o| o.0).count() as f64;
        let misses = outcomes.iter().filter(|o| o.1).count() as f64;
        rows.push(CurveRow {
            n,
            m,
            trials: config.trials,
            type_one_rate: measure_null.then_some(false_alarms / trials),
            type_two_rate: (!null_only).then_some(misses / trials),
            threshold_policy: config.threshold.policy,
            bandwidth_rule: config.bandwidth.label(),
        });
    }
    Ok(ErrorCurve {
        experiment: "two_sample".into(),
        config_hash: config_hash(config),
        seed,
        rows,
    })
}

/// Least-squares slope of `-ln(type-II rate)` against sample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub std_error: f64,
    pub intercept: f64,
    pub normalization: Normalization,
    pub used_rows: usize,
    /// `(n, m)` of rows skipped because their rate was 0, 1 or absent.
    pub excluded: Vec<(usize, usize)>,
}

pub fn fit_exponent(curve: &ErrorCurve, normalization: Normalization) -> Result<ExponentFit> {
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for r in &curve.rows {
        match r.type_two_rate {
            Some(rate) if rate > 0.0 && rate < 1.0 => {
                let size = match normalization {
                    Normalization::PerTotalSamples => r.n + r.m,
                    Normalization::PerSmallerSample => r.n.min(r.m),
                };
                points.push((size as f64, -rate.ln()));
            }
            _ => excluded.push((r.n, r.m)),
        }
    }
    if points.len() < 3 {
        return Err(Error::InsufficientRows { usable: points.len() });
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all usable rows share one sample size".into()));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(ExponentFit {
        slope,
        std_error: (ssr / (k - 2.0) / sxx).sqrt(),
        intercept,
        normalization,
        used_rows: points.len(),
        excluded,
    })
}

fn default_epsilon() -> f64 {
    6.0
}

fn default_spacing() -> f64 {
    10.0
}

fn default_components() -> usize {
    5
}

fn default_permutations() -> usize {
    500
}

fn default_sweep_statistic() -> StatisticKind {
    StatisticKind::Unbiased
}

/// Distributions compared in a bandwidth sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepSetup {
    /// 3x3 grid of unit normals; `Q` has correlation `(ε-1)/(ε+1)` in every component.
    GaussianGrid {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default = "default_spacing")]
        spacing: f64,
    },
    /// Equal-weight 1D mixture with unit variances and means drawn from
    /// U[0, 10] each trial; `Q` adds standard normal noise to every mean.
    Mixture {
        #[serde(default = "default_components")]
        components: usize,
    },
    Custom { p: Distribution, q: Distribution },
}

impl SweepSetup {
    pub fn gaussian_grid(epsilon: f64, spacing: f64) -> Result<(Distribution, Distribution)> {
        if !(epsilon >= 1.0) || !(spacing > 0.0) {
            return Err(Error::Config(format!(
                "grid setup needs epsilon >= 1 and spacing > 0, got {epsilon}, {spacing}"
            )));
        }
        let rho = (epsilon - 1.0) / (epsilon + 1.0);
        let mut ps = Vec::with_capacity(9);
        let mut qs = Vec::with_capacity(9);
        for i in 0..3 {
            for j in 0..3 {
                let mean = vec![spacing * i as f64, spacing * j as f64];
                ps.push(GaussianSpec::isotropic(mean.clone())?);
                qs.push(GaussianSpec::new(mean, vec![vec![1.0, rho], vec![rho, 1.0]])?);
            }
        }
        Ok((GaussianMixture::uniform(ps)?.into(), GaussianMixture::uniform(qs)?.into()))
    }

    fn mixture_pair<R: Rng + ?Sized>(components: usize, rng: &mut R) -> Result<(Distribution, Distribution)> {
        let mut ps = Vec::with_capacity(components);
        let mut qs = Vec::with_capacity(components);
        for _ in 0..components {
            let mu: f64 = rng.random_range(0.0..10.0);
            let noise: f64 = StandardNormal.sample(rng);
            ps.push(GaussianSpec::isotropic(vec![mu])?);
            qs.push(GaussianSpec::isotropic(vec![mu + noise])?);
        }
        Ok((GaussianMixture::uniform(ps)?.into(), GaussianMixture::uniform(qs)?.into()))
    }

    fn validate(&self) -> Result<()> {
        match self {
            SweepSetup::GaussianGrid { epsilon, spacing } => Self::gaussian_grid(*epsilon, *spacing).map(|_| ()),
            SweepSetup::Mixture { components } if *components == 0 => {
                Err(Error::Config("mixture needs at least one component".into()))
            }
            SweepSetup::Mixture { .. } => Ok(()),
            SweepSetup::Custom { p, q } if p.dim() != q.dim() => Err(Error::Config(format!(
                "p has dimension {} but q has dimension {}",
                p.dim(),
                q.dim()
            ))),
            SweepSetup::Custom { .. } => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub setup: SweepSetup,
    pub bandwidths: Vec<f64>,
    /// Sizes with `n = m`.
    pub n_grid: Vec<usize>,
    pub trials: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(rename = "B", default = "default_permutations")]
    pub b: usize,
    #[serde(default = "default_sweep_statistic")]
    pub statistic: StatisticKind,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        check_trials(self.trials)?;
        check_alpha(self.alpha)?;
        if self.bandwidths.is_empty() {
            return Err(Error::Config("bandwidth grid must not be empty".into()));
        }
        for &w in &self.bandwidths {
            KernelSpec::gaussian(w).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.n_grid.is_empty() || self.n_grid.iter().any(|&n| n < 2) {
            return Err(Error::Config("n_grid must be non-empty with sizes >= 2".into()));
        }
        if self.b == 0 {
            return Err(Error::Config("B must be >= 1".into()));
        }
        self.setup.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub bandwidth: f64,
    pub n: usize,
    pub trials: usize,
    pub type_two_rate: f64,
    /// Median-heuristic bandwidth averaged over the trials at this size.
    pub median_bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = header("bandwidth_sweep", &self.config_hash, self.seed);
        out.push_str("bandwidth,n,trials,type_II_rate,median_bandwidth\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.bandwidth, r.n, r.trials, r.type_two_rate, r.median_bandwidth
            );
        }
        out
    }

    pub fn rate(&self, bandwidth: f64, n: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.bandwidth == bandwidth && r.n == n)
            .map(|r| r.type_two_rate)
    }
}

/// Type-II rate per `(bandwidth, n)` under a permutation threshold. All
/// bandwidths see the same samples and permutation streams within a trial.
pub fn run_bandwidth_sweep(config: &SweepConfig, seed: u64) -> Result<SweepTable> {
    config.validate()?;
    let kernels: Vec<KernelSpec> = config
        .bandwidths
        .iter()
        .map(|&w| KernelSpec::gaussian(w))
        .collect::<Result<_>>()?;
    let fixed = match &config.setup {
        SweepSetup::GaussianGrid { epsilon, spacing } => Some(SweepSetup::gaussian_grid(*epsilon, *spacing)?),
        SweepSetup::Custom { p, q } => Some((p.clone(), q.clone())),
        SweepSetup::Mixture { .. } => None,
    };
    let mut rows = Vec::with_capacity(kernels.len() * config.n_grid.len());
    for (cell, &n) in config.n_grid.iter().enumerate() {
        let cell = cell as u64;
        let per_trial: Vec<(Vec<bool>, f64)> = (0..config.trials as u64)
            .into_par_iter()
            .map(|trial| {
                let (p, q) = match (&fixed, &config.setup) {
                    (Some(pair), _) => pair.clone(),
                    (None, SweepSetup::Mixture { components }) => {
                        SweepSetup::mixture_pair(*components, &mut rng::stream(seed, &[cell, trial, SETUP]))?
                    }
                    (None, _) => unreachable!("only the mixture setup is drawn per trial"),
                };
                let x = p.sample_with(n, &mut rng::stream(seed, &[cell, trial, DRAW_X]))?;
                let y = q.sample_with(n, &mut rng::stream(seed, &[cell, trial, DRAW_Y]))?;
                let median = crate::kernels::median_heuristic(&x.concat(&y)?)?;
                let spec = ThresholdSpec::permutation(config.alpha, config.b, rng::derive_seed(seed, &[cell, trial, PERMUTE]))?;
                let misses = kernels
                    .iter()
                    .map(|k| Ok(!decide(&x, &y, &KernelChoice::Single(*k), &spec, config.statistic)?.decision.rejects()))
                    .collect::<Result<Vec<bool>>>()?;
                Ok((misses, median))
            })
            .collect::<Result<_>>()?;
        let trials = config.trials as f64;
        let median_bandwidth = per_trial.iter().map(|t| t.1).sum::<f64>() / trials;
        for (i, k) in kernels.iter().enumerate() {
            let misses = per_trial.iter().filter(|t| t.0[i]).count() as f64;
            rows.push(SweepRow {
                bandwidth: k.bandwidth(),
                n,
                trials: config.trials,
                type_two_rate: misses / trials,
                median_bandwidth,
            });
        }
    }
    Ok(SweepTable {
        config_hash: config_hash(config),
        seed,
        rows,
    })
}

fn default_fixed_bandwidth() -> BandwidthRule {
    BandwidthRule::Fixed(1.0)
}

fn default_tolerance() -> usize {
    10
}

/// Mean-shift change-point experiment on a 1D sequence: `N(0, 1)` before the
/// change, `N(shift, 1)` after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangePointConfig {
    pub shifts: Vec<f64>,
    pub n: usize,
    /// Number of pre-change observations; defaults to `n / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub change_at: Option<usize>,
    pub trials: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_fixed_bandwidth")]
    pub bandwidth: BandwidthRule,
    /// Defaults to `[ceil(0.2 n), floor(0.8 n)]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[usize; 2]>,
    /// A detection is localized when `|t_hat - t| <= localization_tolerance`.
    #[serde(default = "default_tolerance")]
    pub localization_tolerance: usize,
}

impl ChangePointConfig {
    fn resolved(&self) -> Result<(usize, Window)> {
        check_trials(self.trials)?;
        check_alpha(self.alpha)?;
        if self.shifts.is_empty() || self.shifts.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("shifts must be a non-empty list of finite values".into()));
        }
        let change_at = self.change_at.unwrap_or(self.n / 2);
        if change_at == 0 || change_at >= self.n {
            return Err(Error::Config(format!(
                "change_at must lie in 1..{}, got {change_at}",
                self.n
            )));
        }
        let window = match self.window {
            Some([a, b]) => Window::new(self.n, a, b),
            None => Window::default_for(self.n),
        }
        .map_err(|e| Error::Config(e.to_string()))?;
        Ok((change_at, window))
    }

    pub fn validate(&self) -> Result<()> {
        self.resolved().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangePointRow {
    pub shift: f64,
    pub n: usize,
    pub trials: usize,
    pub detections: usize,
    pub detection_rate: f64,
    /// Mean `|t_hat - t|` over detections.
    pub mean_abs_error: Option<f64>,
    /// Fraction of detections localized within the tolerance.
    pub localized_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangePointTable {
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<ChangePointRow>,
}

impl ChangePointTable {
    pub fn to_csv(&self) -> String {
        let mut out = header("changepoint", &self.config_hash, self.seed);
        out.push_str("shift,n,trials,detections,detection_rate,mean_abs_error,localized_rate\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.shift,
                r.n,
                r.trials,
                r.detections,
                r.detection_rate,
                fmt_opt(r.mean_abs_error),
                fmt_opt(r.localized_rate)
            );
        }
        out
    }
}

pub fn run_changepoint_experiment(config: &ChangePointConfig, seed: u64) -> Result<ChangePointTable> {
    let (change_at, window) = config.resolved()?;
    let n = config.n;
    let mut rows = Vec::with_capacity(config.shifts.len());
    for (cell, &shift) in config.shifts.iter().enumerate() {
        let cell = cell as u64;
        let estimates: Vec<Option<usize>> = (0..config.trials as u64)
            .into_par_iter()
            .map(|trial| {
                let mut rng = rng::stream(seed, &[cell, trial, DRAW_X]);
                let values: Vec<f64> = (0..n)
                    .map(|i| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        if i < change_at {
                            z
                        } else {
                            z + shift
                        }
                    })
                    .collect();
                let z = Sample::from_scalars(&values)?;
                let kernel = config.bandwidth.resolve(&z)?;
                Ok(detect(&z, &kernel, window, config.alpha)?.estimated_index)
            })
            .collect::<Result<_>>()?;
        let found: Vec<usize> = estimates.into_iter().flatten().collect();
        let detections = found.len();
        let errors: Vec<usize> = found.iter().map(|&t| t.abs_diff(change_at)).collect();
        let (mean_abs_error, localized_rate) = if detections == 0 {
            (None, None)
        } else {
            let d = detections as f64;
            (
                Some(errors.iter().sum::<usize>() as f64 / d),
                Some(errors.iter().filter(|&&e| e <= config.localization_tolerance).count() as f64 / d),
            )
        };
        rows.push(ChangePointRow {
            shift,
            n,
            trials: config.trials,
            detections,
            detection_rate: detections as f64 / config.trials as f64,
            mean_abs_error,
            localized_rate,
        });
    }
    Ok(ChangePointTable {
        config_hash: config_hash(config),
        seed,
        rows,
    })
}

/// Any experiment the `simulate` command can run, tagged by `experiment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum SimulationConfig {
    TwoSample(TwoSampleConfig),
    Changepoint(ChangePointConfig),
    BandwidthSweep(SweepConfig),
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            SimulationConfig::TwoSample(c) => c.validate(),
            SimulationConfig::Changepoint(c) => c.validate(),
            SimulationConfig::BandwidthSweep(c) => c.validate(),
        }
    }

    /// Runs the experiment and renders its CSV.
    pub fn run_csv(&self, seed: u64) -> Result<String> {
        Ok(match self {
            SimulationConfig::TwoSample(c) => run_two_sample_experiment(c, seed)?.to_csv(),
            SimulationConfig::Changepoint(c) => run_changepoint_experiment(c, seed)?.to_csv(),
            SimulationConfig::BandwidthSweep(c) => run_bandwidth_sweep(c, seed)?.to_csv(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(rates: &[(usize, f64)]) -> ErrorCurve {
        ErrorCurve {
            experiment: "synthetic".into(),
            config_hash: String::new(),
            seed: 0,
            rows: rates
                .iter()
                .map(|&(n, r)| CurveRow {
                    n,
                    m: n,
                    trials: 1000,
                    type_one_rate: None,
                    type_two_rate: Some(r),
                    threshold_policy: ThresholdPolicy::Permutation,
                    bandwidth_rule: "1".into(),
                })
                .collect(),
        }
    }

    #[test]
    fn exact_exponential_is_recovered() {
        let curve = synthetic(&[(10, (-4.0f64).exp()), (20, (-8.0f64).exp()), (40, (-16.0f64).exp())]);
        let fit = fit_exponent(&curve, Normalization::PerTotalSamples).unwrap();
        assert!((fit.slope - 0.2).abs() < 1e-9);
        assert!(fit.std_error < 1e-9);
        let fit = fit_exponent(&curve, Normalization::PerSmallerSample).unwrap();
        assert!((fit.slope - 0.4).abs() < 1e-9);
    }

    #[test]
    fn noisy_exponential_stays_close() {
        let noise = [1.1, 0.9, 1.05, 0.95, 1.1, 0.92];
        let rates: Vec<_> = [10usize, 20, 30, 40, 50, 60]
            .iter()
            .zip(noise)
            .map(|(&n, e)| (n, (-0.2 * 2.0 * n as f64).exp() * e))
            .collect();
        let fit = fit_exponent(&synthetic(&rates), Normalization::PerTotalSamples).unwrap();
        assert!((fit.slope - 0.2).abs() < 0.05, "{}", fit.slope);
    }

    #[test]
    fn constant_rates_give_zero_slope() {
        let fit = fit_exponent(&synthetic(&[(10, 0.3), (20, 0.3), (30, 0.3)]), Normalization::PerTotalSamples).unwrap();
        assert!(fit.slope.abs() < 1e-12);
    }

    #[test]
    fn zero_rates_are_excluded() {
        let curve = synthetic(&[(10, 0.3), (20, 0.1), (30, 0.0), (40, 0.0)]);
        match fit_exponent(&curve, Normalization::PerTotalSamples) {
            Err(Error::InsufficientRows { usable }) => assert_eq!(usable, 2),
            other => panic!("{other:?}"),
        }
        let curve = synthetic(&[(10, 0.3), (20, 0.1), (30, 0.05), (40, 0.0)]);
        let fit = fit_exponent(&curve, Normalization::PerTotalSamples).unwrap();
        assert_eq!(fit.excluded, vec![(40, 40)]);
        assert_eq!(curve.rows[3].log_type_two().unwrap(), format!("<{}", (0.001f64).ln()));
    }

    fn small_config() -> TwoSampleConfig {
        TwoSampleConfig {
            p: GaussianSpec::isotropic(vec![0.0]).unwrap().into(),
            q: GaussianSpec::isotropic(vec![1.5]).unwrap().into(),
            n_grid: vec![10, 20],
            m_grid: None,
            trials: 20,
            bandwidth: BandwidthRule::Median,
            statistic: StatisticKind::Biased,
            threshold: ThresholdSpec::permutation(0.05, 50, 0).unwrap(),
            measure_type_one: true,
        }
    }

    #[test]
    fn two_sample_experiment_is_deterministic() {
        let c = small_config();
        let a = run_two_sample_experiment(&c, 7).unwrap().to_csv();
        let b = run_two_sample_experiment(&c, 7).unwrap().to_csv();
        assert_eq!(a, b);
        assert!(a.starts_with("# experiment=two_sample config_sha256="));
        assert!(a.contains(" seed=7\n"));
        assert_eq!(a.lines().count(), 4);
        let other = run_two_sample_experiment(&c, 8).unwrap().to_csv();
        assert_ne!(a, other);
    }

    #[test]
    fn null_config_has_no_type_two_column_values() {
        let mut c = small_config();
        c.q = c.p.clone();
        let curve = run_two_sample_experiment(&c, 1).unwrap();
        assert!(curve.rows.iter().all(|r| r.type_two_rate.is_none() && r.type_one_rate.is_some()));
    }

    #[test]
    fn config_validation() {
        let mut c = small_config();
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.m_grid = Some(vec![10]);
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.n_grid = vec![1];
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.q = GaussianSpec::isotropic(vec![0.0, 0.0]).unwrap().into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let json = r#"{
            "experiment": "two_sample",
            "p": {"type": "gaussian", "mean": [0.25, 0.25], "cov": [[1, 0], [0, 1]]},
            "q": {"type": "gaussian", "mean": [1, 1], "cov": [[1, 0], [0, 1]]},
            "n_grid": [50, 100],
            "trials": 10,
            "bandwidth": "median",
            "threshold": {"policy": "permutation", "alpha": 0.05, "B": 100}
        }"#;
        let c: SimulationConfig = serde_json::from_str(json).unwrap();
        c.validate().unwrap();
        let back: SimulationConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<SimulationConfig>(&json.replace("n_grid", "n_grdi")).is_err());
    }

    #[test]
    fn sweep_shape_and_determinism() {
        let c = SweepConfig {
            setup: SweepSetup::Mixture { components: 5 },
            bandwidths: vec![0.5, 2.0, 8.0],
            n_grid: vec![10, 15],
            trials: 8,
            alpha: 0.05,
            b: 40,
            statistic: StatisticKind::Unbiased,
        };
        let t = run_bandwidth_sweep(&c, 3).unwrap();
        assert_eq!(t.rows.len(), 6);
        assert_eq!(t.to_csv(), run_bandwidth_sweep(&c, 3).unwrap().to_csv());
        assert!(t.rows.iter().all(|r| (0.0..=1.0).contains(&r.type_two_rate) && r.median_bandwidth > 0.0));
        let mut bad = c.clone();
        bad.bandwidths.clear();
        assert!(run_bandwidth_sweep(&bad, 3).is_err());
    }

    #[test]
    fn grid_setup_components() {
        let (p, q) = SweepSetup::gaussian_grid(6.0, 10.0).unwrap();
        match (p, q) {
            (Distribution::Mixture(p), Distribution::Mixture(q)) => {
                assert_eq!(p.components().len(), 9);
                let cov = q.components()[4].gaussian.cov();
                assert!((cov[0][1] - 5.0 / 7.0).abs() < 1e-15);
                assert_eq!(q.components()[8].gaussian.mean(), &[20.0, 20.0]);
            }
            _ => panic!("grid setup should build mixtures"),
        }
    }

    #[test]
    fn changepoint_experiment_rows() {
        let c = ChangePointConfig {
            shifts: vec![0.0, 10.0],
            n: 200,
            change_at: None,
            trials: 5,
            alpha: 0.05,
            // with w = 1 and unit noise d_k stays below the threshold for any shift
            bandwidth: BandwidthRule::Median,
            window: None,
            localization_tolerance: 10,
        };
        let t = run_changepoint_experiment(&c, 11).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0].detections, 0);
        assert_eq!(t.rows[0].mean_abs_error, None);
        assert_eq!(t.rows[1].detection_rate, 1.0);
        assert_eq!(t.rows[1].localized_rate, Some(1.0));
        let mut bad = c.clone();
        bad.window = Some([1, 150]);
        assert!(bad.validate().is_err());
    }
}
