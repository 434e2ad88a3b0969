//! Optimal type-II error exponent `D* = inf_R c D(R||P) + (1-c) D(R||Q)`.
//!
//! For finite alphabets the infimum is attained by the geometric mixture
//! `R* ∝ P^c Q^(1-c)`, giving `D* = -ln sum_x P(x)^c Q(x)^(1-c)`. For
//! Gaussians the same integral has a closed form. [`dstar_oracle`] minimises
//! the objective numerically without using the mixture form and exists to
//! certify it.

use serde::{Serialize, Serializer};

use crate::distributions::{kld, kld_gaussian, kld_pmf, log_det_spd, DiscreteDistribution, Distribution, GaussianSpec};
use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;

/// Largest aligned alphabet the numerical oracle accepts.
pub const ORACLE_MAX_ALPHABET: usize = 6;
pub const ORACLE_DEFAULT_TOLERANCE: f64 = 1e-10;
const ORACLE_MAX_ITERATIONS: usize = 10_000;

fn check_ratio(c: f64) -> Result<()> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidParameter(format!("c must lie in (0, 1), got {c}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dstar {
    pub value: f64,
    /// Geometric-mixture minimiser, finite alphabets only.
    pub minimizer: Option<DiscreteDistribution>,
}

/// `c D(R||P) + (1-c) D(R||Q)` over aligned pmfs.
pub fn dstar_objective(r: &[f64], p: &[f64], q: &[f64], c: f64) -> f64 {
    let a = kld_pmf(r, p);
    let b = kld_pmf(r, q);
    if a.is_infinite() || b.is_infinite() {
        return f64::INFINITY;
    }
    c * a + (1.0 - c) * b
}

/// Closed-form `D*` over a finite alphabet.
pub fn dstar_discrete(p: &DiscreteDistribution, q: &DiscreteDistribution, c: f64) -> Result<Dstar> {
    check_ratio(c)?;
    let a = p.align(q)?;
    let logs: Vec<f64> = a
        .p
        .iter()
        .zip(&a.q)
        .map(|(&pi, &qi)| {
            if pi > 0.0 && qi > 0.0 {
                c * pi.ln() + (1.0 - c) * qi.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let lse = log_sum_exp(&logs);
    if lse == f64::NEG_INFINITY {
        return Ok(Dstar {
            value: f64::INFINITY,
            minimizer: None,
        });
    }
    let mut r: Vec<f64> = logs.iter().map(|l| (l - lse).exp()).collect();
    let total: f64 = r.iter().sum();
    r.iter_mut().for_each(|v| *v /= total);
    Ok(Dstar {
        value: (-lse).max(0.0),
        minimizer: Some(DiscreteDistribution::new(a.support, r)?),
    })
}

/// `-ln ∫ p^c q^(1-c)` for multivariate normals:
/// `c(1-c)/2 Δᵀ S⁻¹ Δ + ½ ln(det S / (det Σp^(1-c) det Σq^c))`, `S = (1-c)Σp + cΣq`.
pub fn dstar_gaussian(p: &GaussianSpec, q: &GaussianSpec, c: f64) -> Result<f64> {
    check_ratio(c)?;
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            left: p.dim(),
            right: q.dim(),
        });
    }
    let sp = p.cov_matrix();
    let sq = q.cov_matrix();
    let mix = &sp * (1.0 - c) + &sq * c;
    let diff = p.mean_vector() - q.mean_vector();
    let chol = mix
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidDistribution("mixed covariance not positive definite".into()))?;
    let solved = chol.solve(&diff);
    let maha = diff.dot(&solved);
    let log_term = log_det_spd(&mix) - (1.0 - c) * log_det_spd(&sp) - c * log_det_spd(&sq);
    Ok((0.5 * c * (1.0 - c) * maha + 0.5 * log_term).max(0.0))
}

/// `D*` for a pair of discrete or Gaussian models.
pub fn dstar(p: &Distribution, q: &Distribution, c: f64) -> Result<Dstar> {
    match (p, q) {
        (Distribution::Discrete(p), Distribution::Discrete(q)) => dstar_discrete(p, q, c),
        (Distribution::Gaussian(p), Distribution::Gaussian(q)) => Ok(Dstar {
            value: dstar_gaussian(p, q, c)?,
            minimizer: None,
        }),
        _ => Err(Error::InvalidParameter(
            "D* needs two discrete or two Gaussian models".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub value: f64,
    pub minimizer: Vec<f64>,
    /// Frank-Wolfe gap at the final iterate; upper-bounds `value - D*`.
    pub gap: f64,
    pub iterations: usize,
}

/// Minimises `c D(R||P) + (1-c) D(R||Q)` over the simplex by damped Newton
/// steps on the common support, stopping once the Frank-Wolfe gap certifies
/// the value to within `tolerance`.
pub fn dstar_oracle(p: &DiscreteDistribution, q: &DiscreteDistribution, c: f64, tolerance: f64) -> Result<OracleResult> {
    dstar_oracle_with(p, q, c, tolerance, ORACLE_MAX_ITERATIONS)
}

/// [`dstar_oracle`] with an explicit iteration budget.
pub fn dstar_oracle_with(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    c: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<OracleResult> {
    check_ratio(c)?;
    if !(tolerance > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let a = p.align(q)?;
    let t = a.p.len();
    if t > ORACLE_MAX_ALPHABET {
        return Err(Error::InvalidParameter(format!(
            "oracle supports alphabets up to {ORACLE_MAX_ALPHABET}, got {t}"
        )));
    }
    // mass outside the common support makes the objective infinite
    let active: Vec<usize> = (0..t).filter(|&i| a.p[i] > 0.0 && a.q[i] > 0.0).collect();
    if active.is_empty() {
        return Ok(OracleResult {
            value: f64::INFINITY,
            minimizer: vec![0.0; t],
            gap: 0.0,
            iterations: 0,
        });
    }
    let ps: Vec<f64> = active.iter().map(|&i| a.p[i]).collect();
    let qs: Vec<f64> = active.iter().map(|&i| a.q[i]).collect();
    let k = active.len();

    let objective = |r: &[f64]| dstar_objective(r, &ps, &qs, c);
    let gradient = |r: &[f64]| -> Vec<f64> {
        r.iter()
            .zip(ps.iter().zip(&qs))
            .map(|(&ri, (&pi, &qi))| c * (ri / pi).ln() + (1.0 - c) * (ri / qi).ln() + 1.0)
            .collect()
    };
    let fw_gap = |r: &[f64], g: &[f64]| -> f64 {
        let inner: f64 = r.iter().zip(g).map(|(a, b)| a * b).sum();
        let min = g.iter().copied().fold(f64::INFINITY, f64::min);
        (inner - min).max(0.0)
    };

    let mut r = vec![1.0 / k as f64; k];
    let mut f = objective(&r);
    let mut iterations = 0;
    let mut g = gradient(&r);
    let mut gap = fw_gap(&r, &g);
    while gap > tolerance && iterations < max_iterations {
        iterations += 1;
        // Newton direction under sum(r) = 1; the Hessian is diag(1/r)
        let rg: f64 = r.iter().zip(&g).map(|(a, b)| a * b).sum();
        let dir: Vec<f64> = r.iter().zip(&g).map(|(ri, gi)| ri * (rg - gi)).collect();
        let decrement: f64 = dir.iter().zip(&g).map(|(d, gi)| -d * gi).sum();
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-20 {
            let cand: Vec<f64> = r.iter().zip(&dir).map(|(ri, di)| ri + step * di).collect();
            if cand.iter().all(|&v| v > 0.0) {
                let fc = objective(&cand);
                let gc = gradient(&cand);
                let gap_c = fw_gap(&cand, &gc);
                // near the optimum f stops resolving progress; a shrinking gap still counts
                if fc <= f - 0.25 * step * decrement || (fc <= f && gap_c < gap) {
                    r = cand;
                    f = fc;
                    g = gc;
                    gap = gap_c;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if gap > tolerance {
        return Err(Error::NotCertified {
            gap,
            tolerance,
            iterations,
        });
    }
    let mut minimizer = vec![0.0; t];
    for (slot, &i) in active.iter().enumerate() {
        minimizer[i] = r[slot];
    }
    Ok(OracleResult {
        value: dstar_objective(&minimizer, &a.p, &a.q, c),
        minimizer,
        gap,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `n/(n+m) -> c ∈ (0, 1)`
    Balanced,
    /// one sample size dominates (`n/m -> ∞` or `m/n -> ∞`)
    Degenerate,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(Regime::Balanced),
            "degenerate" => Ok(Regime::Degenerate),
            other => Err(Error::InvalidParameter(format!("unknown regime `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    PerTotalSamples,
    PerSmallerSample,
}

fn extended_real<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentReport {
    pub c: f64,
    pub regime: Regime,
    #[serde(serialize_with = "extended_real")]
    pub exponent: f64,
    pub normalization: Normalization,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minimizer: Option<DiscreteDistribution>,
}

fn divergence(p: &Distribution, q: &Distribution) -> Result<f64> {
    match (p, q) {
        (Distribution::Discrete(p), Distribution::Discrete(q)) => kld(p, q),
        (Distribution::Gaussian(p), Distribution::Gaussian(q)) => kld_gaussian(p, q),
        _ => Err(Error::InvalidParameter(
            "divergence needs two discrete or two Gaussian models".into(),
        )),
    }
}

/// Balanced-regime report for a given limiting ratio `c = lim n/(n+m)`.
pub fn exponent_report_at(p: &Distribution, q: &Distribution, c: f64) -> Result<ExponentReport> {
    let d = dstar(p, q, c)?;
    Ok(ExponentReport {
        c,
        regime: Regime::Balanced,
        exponent: d.value,
        normalization: Normalization::PerTotalSamples,
        minimizer: d.minimizer,
    })
}

/// Exponent of the type-II error for sample sizes `(n, m)` in a declared regime.
///
/// Balanced: `c = n/(n+m)` and the exponent is `D*` per `n + m` samples.
/// Degenerate: the larger sample is treated as infinite; with `n >= m` the
/// exponent is `D(P||Q)` per `m` samples (`c = 1`), otherwise `D(Q||P)` per `n`
/// samples (`c = 0`).
pub fn exponent_report(p: &Distribution, q: &Distribution, n: usize, m: usize, regime: Regime) -> Result<ExponentReport> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter("sample sizes must be >= 1".into()));
    }
    match regime {
        Regime::Balanced => exponent_report_at(p, q, n as f64 / (n + m) as f64),
        Regime::Degenerate => {
            let (c, exponent) = if n >= m {
                (1.0, divergence(p, q)?)
            } else {
                (0.0, divergence(q, p)?)
            };
            Ok(ExponentReport {
                c,
                regime,
                exponent,
                normalization: Normalization::PerSmallerSample,
                minimizer: None,
            })
        }
    }
}
