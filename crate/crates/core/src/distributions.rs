//! Probability models, seeded samplers and Kullback-Leibler divergence.
//!
//! Finite-alphabet models ([`DiscreteDistribution`]) carry explicit support
//! points in `R^d` so that kernels can be evaluated on them. Gaussian models
//! ([`GaussianSpec`], [`GaussianMixture`]) cover the continuous experiments.
//! All logarithms are natural; divergences are in nats.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

const PMF_SUM_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;

/// An `n x d` matrix of observations stored row-major; rows are observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl Sample {
    pub fn new(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSample("sample must contain at least one row".into()));
        }
        if d == 0 {
            return Err(Error::InvalidSample("dimension must be positive".into()));
        }
        if data.len() != n * d {
            return Err(Error::InvalidSample(format!(
                "expected {} values for a {n}x{d} sample, got {}",
                n * d,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSample(format!(
                "non-finite entry in row {}",
                pos / d
            )));
        }
        Ok(Self { data, n, d })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::InvalidSample(format!(
                    "row {i} has {} columns, expected {d}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(data, rows.len(), d)
    }

    /// One-dimensional sample from a slice of scalars.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec(), values.len(), 1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    /// Stacks `self` on top of `other`.
    pub fn concat(&self, other: &Sample) -> Result<Sample> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch {
                left: self.d,
                right: other.d,
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Sample {
            data,
            n: self.n + other.n,
            d: self.d,
        })
    }

    /// Rows `start..end` as a new sample.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Sample> {
        if start >= end || end > self.n {
            return Err(Error::InvalidSample(format!(
                "row range {start}..{end} invalid for {} rows",
                self.n
            )));
        }
        Sample::new(self.data[start * self.d..end * self.d].to_vec(), end - start, self.d)
    }

    pub fn select(&self, indices: &[usize]) -> Result<Sample> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Sample::new(data, indices.len(), self.d)
    }

    /// The empirical measure `(1/n) sum delta_{x_i}`, with duplicate rows merged.
    pub fn empirical(&self) -> DiscreteDistribution {
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by(|&a, &b| {
            self.row(a)
                .iter()
                .zip(self.row(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut support: Vec<Vec<f64>> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for i in order {
            let r = self.row(i);
            match support.last() {
                Some(last) if last.as_slice() == r => *counts.last_mut().unwrap() += 1,
                _ => {
                    support.push(r.to_vec());
                    counts.push(1);
                }
            }
        }
        let n = self.n as f64;
        DiscreteDistribution {
            support,
            pmf: counts.into_iter().map(|c| c as f64 / n).collect(),
        }
    }
}

/// A probability mass function over distinct points of `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDiscrete")]
pub struct DiscreteDistribution {
    support: Vec<Vec<f64>>,
    pmf: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDiscrete {
    support: Vec<Vec<f64>>,
    pmf: Vec<f64>,
}

impl TryFrom<RawDiscrete> for DiscreteDistribution {
    type Error = Error;

    fn try_from(raw: RawDiscrete) -> Result<Self> {
        DiscreteDistribution::new(raw.support, raw.pmf)
    }
}

impl DiscreteDistribution {
    pub fn new(support: Vec<Vec<f64>>, pmf: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if support.len() != pmf.len() {
            return Err(Error::InvalidDistribution(format!(
                "support has {} points but pmf has {} entries",
                support.len(),
                pmf.len()
            )));
        }
        let d = support[0].len();
        if d == 0 || support.iter().any(|s| s.len() != d) {
            return Err(Error::InvalidDistribution(
                "support points must share a positive dimension".into(),
            ));
        }
        if support.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDistribution("non-finite support point".into()));
        }
        if pmf.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidDistribution("pmf entries must be finite and >= 0".into()));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > PMF_SUM_TOL {
            return Err(Error::InvalidDistribution(format!("pmf sums to {total}, not 1")));
        }
        for i in 0..support.len() {
            for j in i + 1..support.len() {
                if support[i] == support[j] {
                    return Err(Error::InvalidDistribution(format!(
                        "support points {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(Self { support, pmf })
    }

    /// A distribution over the alphabet `{0, 1, ..., t-1}` embedded on the real line.
    pub fn on_alphabet(pmf: Vec<f64>) -> Result<Self> {
        let support = (0..pmf.len()).map(|i| vec![i as f64]).collect();
        Self::new(support, pmf)
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn len(&self) -> usize {
        self.pmf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmf.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support[0].len()
    }

    /// Expresses both distributions over the union of their supports; points
    /// missing from one side get mass 0. Order: `self`'s points first.
    pub fn align(&self, other: &DiscreteDistribution) -> Result<Aligned> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        let mut support = self.support.clone();
        let mut p = self.pmf.clone();
        let mut q = vec![0.0; support.len()];
        for (point, &mass) in other.support.iter().zip(&other.pmf) {
            match support.iter().position(|s| s == point) {
                Some(i) => q[i] = mass,
                None => {
                    support.push(point.clone());
                    p.push(0.0);
                    q.push(mass);
                }
            }
        }
        Ok(Aligned { support, p, q })
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        let mut rng = rng::from_seed(seed);
        self.sample_with(n, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Sample> {
        check_count(n)?;
        let index = WeightedIndex::new(&self.pmf)
            .map_err(|e| Error::InvalidDistribution(e.to_string()))?;
        let d = self.dim();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            data.extend_from_slice(&self.support[index.sample(rng)]);
        }
        Sample::new(data, n, d)
    }
}

/// Two pmfs over a shared support.
#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub support: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

/// Multivariate normal with a symmetric positive-definite covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian")]
pub struct GaussianSpec {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    #[serde(skip)]
    chol: DMatrix<f64>,
}

impl PartialEq for GaussianSpec {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

#[derive(Deserialize)]
struct RawGaussian {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl TryFrom<RawGaussian> for GaussianSpec {
    type Error = Error;

    fn try_from(raw: RawGaussian) -> Result<Self> {
        GaussianSpec::new(raw.mean, raw.cov)
    }
}

impl GaussianSpec {
    pub fn new(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidDistribution("empty mean vector".into()));
        }
        if cov.len() != d || cov.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidDistribution(format!(
                "covariance must be {d}x{d}"
            )));
        }
        if mean.iter().chain(cov.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDistribution("non-finite Gaussian parameter".into()));
        }
        for (i, row) in cov.iter().enumerate() {
            for (j, other) in cov.iter().enumerate().take(i) {
                if (row[j] - other[i]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidDistribution(format!(
                        "covariance not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::InvalidDistribution("covariance is not positive definite".into()))?
            .unpack();
        Ok(Self { mean, cov, chol })
    }

    /// `N(mean, I)`.
    pub fn isotropic(mean: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        let cov = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(mean, cov)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &[Vec<f64>] {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub(crate) fn mean_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }

    pub(crate) fn cov_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.cov[i][j])
    }

    fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for i in 0..d {
            let mut v = self.mean[i];
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                v += self.chol[(i, j)] * zj;
            }
            out.push(v);
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        let mut rng = rng::from_seed(seed);
        self.sample_with(n, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Sample> {
        check_count(n)?;
        let mut data = Vec::with_capacity(n * self.dim());
        for _ in 0..n {
            self.draw_into(rng, &mut data);
        }
        Sample::new(data, n, self.dim())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    #[serde(flatten)]
    pub gaussian: GaussianSpec,
}

/// Finite weighted mixture of Gaussians sharing a dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture")]
pub struct GaussianMixture {
    components: Vec<MixtureComponent>,
}

#[derive(Deserialize)]
struct RawMixture {
    components: Vec<MixtureComponent>,
}

impl TryFrom<RawMixture> for GaussianMixture {
    type Error = Error;

    fn try_from(raw: RawMixture) -> Result<Self> {
        GaussianMixture::new(raw.components)
    }
}

impl GaussianMixture {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidDistribution("mixture has no components".into()));
        }
        let d = components[0].gaussian.dim();
        if components.iter().any(|c| c.gaussian.dim() != d) {
            return Err(Error::InvalidDistribution("mixture components differ in dimension".into()));
        }
        if components.iter().any(|c| !(c.weight >= 0.0) || !c.weight.is_finite()) {
            return Err(Error::InvalidDistribution("mixture weights must be >= 0".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > PMF_SUM_TOL {
            return Err(Error::InvalidDistribution(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self { components })
    }

    /// Equal-weight mixture.
    pub fn uniform(gaussians: Vec<GaussianSpec>) -> Result<Self> {
        let w = 1.0 / gaussians.len().max(1) as f64;
        let mut components: Vec<MixtureComponent> = gaussians
            .into_iter()
            .map(|gaussian| MixtureComponent { weight: w, gaussian })
            .collect();
        // absorb rounding so the weights sum to exactly 1
        if let Some((last, rest)) = components.split_last_mut() {
            last.weight = 1.0 - rest.iter().map(|c| c.weight).sum::<f64>();
        }
        Self::new(components)
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].gaussian.dim()
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Sample> {
        check_count(n)?;
        let weights: Vec<f64> = self.components.iter().map(|c| c.weight).collect();
        let index =
            WeightedIndex::new(&weights).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
        let mut data = Vec::with_capacity(n * self.dim());
        for _ in 0..n {
            let k = index.sample(rng);
            self.components[k].gaussian.draw_into(rng, &mut data);
        }
        Sample::new(data, n, self.dim())
    }
}

/// Any of the supported models. JSON form is tagged by `"type"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Distribution {
    Discrete(DiscreteDistribution),
    Gaussian(GaussianSpec),
    Mixture(GaussianMixture),
}

impl Distribution {
    pub fn dim(&self) -> usize {
        match self {
            Distribution::Discrete(p) => p.dim(),
            Distribution::Gaussian(g) => g.dim(),
            Distribution::Mixture(m) => m.dim(),
        }
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Sample> {
        match self {
            Distribution::Discrete(p) => p.sample_with(n, rng),
            Distribution::Gaussian(g) => g.sample_with(n, rng),
            Distribution::Mixture(m) => m.sample_with(n, rng),
        }
    }
}

impl From<DiscreteDistribution> for Distribution {
    fn from(d: DiscreteDistribution) -> Self {
        Distribution::Discrete(d)
    }
}

impl From<GaussianSpec> for Distribution {
    fn from(g: GaussianSpec) -> Self {
        Distribution::Gaussian(g)
    }
}

impl From<GaussianMixture> for Distribution {
    fn from(m: GaussianMixture) -> Self {
        Distribution::Mixture(m)
    }
}

/// Draws `n` i.i.d. rows. Identical `(dist, n, seed)` gives bit-identical output.
pub fn sample(dist: &Distribution, n: usize, seed: u64) -> Result<Sample> {
    let mut rng = rng::from_seed(seed);
    dist.sample_with(n, &mut rng)
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be >= 1".into()));
    }
    Ok(())
}

/// `sum p ln(p/q)` over aligned pmfs with `0 ln(0/q) = 0` and `p ln(p/0) = +inf`.
pub fn kld_pmf(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return f64::INFINITY;
        }
        acc += pi * (pi / qi).ln();
    }
    // log-sum inequality makes this non-negative; clear rounding residue
    acc.max(0.0)
}

/// `D(P||Q)` in nats over the union of the two supports.
pub fn kld(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    let a = p.align(q)?;
    Ok(kld_pmf(&a.p, &a.q))
}

/// `D(P||Q)` between multivariate normals.
pub fn kld_gaussian(p: &GaussianSpec, q: &GaussianSpec) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            left: p.dim(),
            right: q.dim(),
        });
    }
    let d = p.dim() as f64;
    let sq = q.cov_matrix();
    let sq_chol = sq.clone().cholesky().expect("validated at construction");
    let sq_inv = sq_chol.inverse();
    let diff = q.mean_vector() - p.mean_vector();
    let trace = (&sq_inv * p.cov_matrix()).trace();
    let maha = (diff.transpose() * &sq_inv * &diff)[(0, 0)];
    let ln_det_q = log_det_spd(&sq);
    let ln_det_p = log_det_spd(&p.cov_matrix());
    Ok((0.5 * (trace + maha - d + ln_det_q - ln_det_p)).max(0.0))
}

pub(crate) fn log_det_spd(m: &DMatrix<f64>) -> f64 {
    let l = m.clone().cholesky().expect("matrix must be SPD").unpack();
    2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Total-variation distance between aligned pmfs.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
