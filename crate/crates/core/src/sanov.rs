//! Exact finite-alphabet method-of-types computations.
//!
//! Types of length-`n` sequences over `t` symbols are enumerated explicitly,
//! their probabilities are evaluated as exact multinomials in the log domain,
//! and region probabilities for pairs of empirical measures are obtained by
//! summing over type pairs. This gives exact type-II error probabilities for
//! the kernel test on small alphabets.

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::distributions::{kld_pmf, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::exponents::dstar_discrete;
use crate::kernels::KernelSpec;
use crate::numeric::pairwise_sum;
use crate::thresholds::ldb_threshold;

pub const MAX_ALPHABET: usize = 5;
pub const MAX_TYPES: u128 = 10_000_000;
/// Cap on `|types_n| * |types_m|` for pair enumeration.
pub const MAX_TYPE_PAIRS: u128 = 400_000_000;

/// Symbol counts of a length-`n` sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct TypeVector {
    counts: Vec<u32>,
    n: u32,
}

impl TypeVector {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidParameter("type vector needs at least one symbol".into()));
        }
        let n = counts.iter().sum();
        Ok(Self { counts, n })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn t(&self) -> usize {
        self.counts.len()
    }

    /// The empirical pmf `counts / n`.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }
}

/// `C(n + t - 1, t - 1)`, the number of types.
pub fn type_count(n: usize, t: usize) -> u128 {
    let (top, k) = ((n + t - 1) as u128, (t - 1) as u128);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (top - i) / (i + 1);
    }
    acc
}

fn check_alphabet(t: usize) -> Result<()> {
    if !(2..=MAX_ALPHABET).contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "alphabet size must be in 2..={MAX_ALPHABET}, got {t}"
        )));
    }
    Ok(())
}

/// Every type of length-`n` sequences over `t` symbols, in lexicographic order.
pub fn enumerate_types(n: usize, t: usize) -> Result<Vec<TypeVector>> {
    if n == 0 {
        return Err(Error::InvalidParameter("sequence length must be >= 1".into()));
    }
    check_alphabet(t)?;
    let count = type_count(n, t);
    if count > MAX_TYPES {
        return Err(Error::EnumerationCap { count, cap: MAX_TYPES });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut counts = vec![0u32; t];
    fill(&mut counts, 0, n as u32, &mut out);
    Ok(out)
}

fn fill(counts: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<TypeVector>) {
    if pos == counts.len() - 1 {
        counts[pos] = remaining;
        out.push(TypeVector {
            counts: counts.to_vec(),
            n: counts.iter().sum(),
        });
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        fill(counts, pos + 1, remaining - c, out);
    }
}

fn ln_factorial(k: u32) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

/// `ln P(type of x^n = tv)` for `x^n` i.i.d. from `pmf`; `-inf` outside the support.
pub fn log_type_probability(pmf: &[f64], tv: &TypeVector) -> f64 {
    debug_assert_eq!(pmf.len(), tv.t());
    let mut acc = ln_factorial(tv.n);
    for (&c, &p) in tv.counts.iter().zip(pmf) {
        if c == 0 {
            continue;
        }
        if p == 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += c as f64 * p.ln() - ln_factorial(c);
    }
    acc
}

/// Exact multinomial probability `n! / prod(n_i!) prod p_i^{n_i}`.
pub fn type_probability(p: &DiscreteDistribution, tv: &TypeVector) -> Result<f64> {
    if p.len() != tv.t() {
        return Err(Error::DimensionMismatch {
            left: p.len(),
            right: tv.t(),
        });
    }
    Ok(log_type_probability(p.pmf(), tv).exp())
}

/// A set partition of the alphabet: `cell_of[symbol]` names the symbol's cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    cell_of: Vec<usize>,
    cells: usize,
}

impl Partition {
    /// Cells must be numbered `0..r` with every cell non-empty.
    pub fn new(cell_of: Vec<usize>) -> Result<Self> {
        if cell_of.is_empty() {
            return Err(Error::InvalidParameter("partition of an empty alphabet".into()));
        }
        let cells = cell_of.iter().max().unwrap() + 1;
        let mut seen = vec![false; cells];
        for &c in &cell_of {
            seen[c] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidParameter("partition has an empty cell".into()));
        }
        Ok(Self { cell_of, cells })
    }

    pub fn finest(t: usize) -> Self {
        Self {
            cell_of: (0..t).collect(),
            cells: t,
        }
    }

    pub fn single_cell(t: usize) -> Self {
        Self {
            cell_of: vec![0; t],
            cells: 1,
        }
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn cell_of(&self) -> &[usize] {
        &self.cell_of
    }

    pub fn aggregate(&self, pmf: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cells];
        for (&c, &p) in self.cell_of.iter().zip(pmf) {
            out[c] += p;
        }
        out
    }

    /// True when `self` is obtained by merging cells of `finer`.
    pub fn is_coarsening_of(&self, finer: &Partition) -> bool {
        if self.cell_of.len() != finer.cell_of.len() {
            return false;
        }
        let mut image = vec![usize::MAX; finer.cells];
        for (&f, &c) in finer.cell_of.iter().zip(&self.cell_of) {
            if image[f] == usize::MAX {
                image[f] = c;
            } else if image[f] != c {
                return false;
            }
        }
        true
    }
}

/// All set partitions of `t` symbols (restricted growth strings).
pub fn set_partitions(t: usize) -> Vec<Partition> {
    fn grow(prefix: &mut Vec<usize>, t: usize, out: &mut Vec<Partition>) {
        if prefix.len() == t {
            out.push(Partition::new(prefix.clone()).expect("restricted growth strings are valid"));
            return;
        }
        let next = prefix.iter().max().map_or(0, |m| m + 1);
        for c in 0..=next {
            prefix.push(c);
            grow(prefix, t, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if t > 0 {
        grow(&mut vec![0], t, &mut out);
    }
    out
}

/// `D(P^A || Q^A)` for the cell-aggregated distributions.
pub fn kld_partition(p: &DiscreteDistribution, q: &DiscreteDistribution, partition: &Partition) -> Result<f64> {
    let a = p.align(q)?;
    if partition.cell_of.len() != a.p.len() {
        return Err(Error::DimensionMismatch {
            left: partition.cell_of.len(),
            right: a.p.len(),
        });
    }
    Ok(kld_pmf(&partition.aggregate(&a.p), &partition.aggregate(&a.q)))
}

/// Types with their log-probabilities under one pmf.
struct Lattice {
    types: Vec<TypeVector>,
    log_probs: Vec<f64>,
}

impl Lattice {
    fn new(pmf: &[f64], n: usize) -> Result<Self> {
        let types = enumerate_types(n, pmf.len())?;
        let log_probs = types.iter().map(|tv| log_type_probability(pmf, tv)).collect();
        Ok(Self { types, log_probs })
    }
}

fn check_pair_cap(n: usize, m: usize, t: usize) -> Result<()> {
    let count = type_count(n, t).saturating_mul(type_count(m, t));
    if count > MAX_TYPE_PAIRS {
        return Err(Error::EnumerationCap {
            count,
            cap: MAX_TYPE_PAIRS,
        });
    }
    Ok(())
}

/// Shared support with the two pmfs laid out on it.
type Aligned = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>);

fn aligned_pmfs(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<Aligned> {
    let a = p.align(q)?;
    check_alphabet(a.p.len())?;
    Ok((a.support, a.p, a.q))
}

/// Sums `P(type_n = R) Q(type_m = S)` over type pairs accepted by `keep`,
/// where `keep` sees indices into the two lattices.
fn region_sum<F>(lp: &Lattice, lq: &Lattice, keep: F) -> f64
where
    F: Fn(usize, usize) -> bool + Sync,
{
    let rows: Vec<f64> = (0..lp.types.len())
        .into_par_iter()
        .map(|i| {
            let a = lp.log_probs[i];
            if a == f64::NEG_INFINITY {
                return 0.0;
            }
            let mut terms = Vec::new();
            for j in 0..lq.types.len() {
                let b = lq.log_probs[j];
                if b != f64::NEG_INFINITY && keep(i, j) {
                    terms.push((a + b).exp());
                }
            }
            pairwise_sum(&terms)
        })
        .collect();
    pairwise_sum(&rows)
}

/// Exact `P((P_n, Q_m) ∈ region)` for `x^n ~ P`, `y^m ~ Q` independent.
/// The region sees the two type vectors over the aligned alphabet.
pub fn exact_region_probability<F>(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    n: usize,
    m: usize,
    region: F,
) -> Result<f64>
where
    F: Fn(&TypeVector, &TypeVector) -> bool + Sync,
{
    let (_, pp, qq) = aligned_pmfs(p, q)?;
    check_pair_cap(n, m, pp.len())?;
    let lp = Lattice::new(&pp, n)?;
    let lq = Lattice::new(&qq, m)?;
    Ok(region_sum(&lp, &lq, |i, j| region(&lp.types[i], &lq.types[j])))
}

/// Exact probability with the finite-n bounds obtained by chaining the
/// type-count and type-probability bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionSandwich {
    pub lower: f64,
    pub exact: f64,
    pub upper: f64,
    /// `min over type pairs in the region of n D(R||P) + m D(S||Q)`.
    pub min_weighted_divergence: f64,
}

impl RegionSandwich {
    pub fn holds(&self, slack: f64) -> bool {
        self.lower <= self.exact * (1.0 + slack) + slack * f64::MIN_POSITIVE
            && self.exact <= self.upper * (1.0 + slack)
    }
}

/// `(n+1)^-t (m+1)^-t e^{-E} <= P(region) <= (n+1)^t (m+1)^t e^{-E}`, with `E`
/// the smallest `n D(R||P) + m D(S||Q)` over achievable pairs in the region.
pub fn region_sandwich<F>(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    n: usize,
    m: usize,
    region: F,
) -> Result<RegionSandwich>
where
    F: Fn(&TypeVector, &TypeVector) -> bool + Sync,
{
    let (_, pp, qq) = aligned_pmfs(p, q)?;
    let t = pp.len() as f64;
    check_pair_cap(n, m, pp.len())?;
    let lp = Lattice::new(&pp, n)?;
    let lq = Lattice::new(&qq, m)?;
    let dp: Vec<f64> = lp.types.iter().map(|r| n as f64 * kld_pmf(&r.frequencies(), &pp)).collect();
    let dq: Vec<f64> = lq.types.iter().map(|s| m as f64 * kld_pmf(&s.frequencies(), &qq)).collect();
    let exact = region_sum(&lp, &lq, |i, j| region(&lp.types[i], &lq.types[j]));
    let mut best = f64::INFINITY;
    for (i, r) in lp.types.iter().enumerate() {
        for (j, s) in lq.types.iter().enumerate() {
            let e = dp[i] + dq[j];
            if e < best && region(r, s) {
                best = e;
            }
        }
    }
    let poly = t * ((n as f64 + 1.0).ln() + (m as f64 + 1.0).ln());
    Ok(RegionSandwich {
        lower: (-poly - best).exp(),
        exact,
        upper: (poly - best).exp(),
        min_weighted_divergence: best,
    })
}

/// Outcome of checking `(n+1)^-t e^{-n D(T||P)} <= P(T) <= e^{-n D(T||P)}`
/// for every type `T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeSandwichReport {
    pub n: usize,
    pub t: usize,
    pub checked: usize,
    pub violations: usize,
    /// largest `ln P(T) - ln upper` seen (should be <= 0)
    pub worst_upper_margin: f64,
    /// largest `ln lower - ln P(T)` seen (should be <= 0)
    pub worst_lower_margin: f64,
}

/// Checks the per-type sandwich in the log domain with absolute slack `slack`.
/// Types with mass outside `P`'s support have probability 0 and infinite
/// divergence; only the upper bound applies to them.
pub fn verify_type_sandwich(p: &DiscreteDistribution, n: usize, slack: f64) -> Result<TypeSandwichReport> {
    let t = p.len();
    let types = enumerate_types(n, t)?;
    let mut violations = 0;
    let mut worst_upper = f64::NEG_INFINITY;
    let mut worst_lower = f64::NEG_INFINITY;
    for tv in &types {
        let lp = log_type_probability(p.pmf(), tv);
        let d = kld_pmf(&tv.frequencies(), p.pmf());
        if d.is_infinite() {
            if lp != f64::NEG_INFINITY {
                violations += 1;
            }
            continue;
        }
        let upper = -(n as f64) * d;
        let lower = -(t as f64) * (n as f64 + 1.0).ln() - n as f64 * d;
        worst_upper = worst_upper.max(lp - upper);
        worst_lower = worst_lower.max(lower - lp);
        if lp > upper + slack || lower > lp + slack {
            violations += 1;
        }
    }
    Ok(TypeSandwichReport {
        n,
        t,
        checked: types.len(),
        violations,
        worst_upper_margin: worst_upper,
        worst_lower_margin: worst_lower,
    })
}

/// Threshold rule used to build the acceptance region of an error curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ThresholdRule {
    /// distribution-free bound at level `alpha`
    Ldb { alpha: f64 },
    /// a constant threshold on `d_k`
    Fixed { gamma: f64 },
}

impl ThresholdRule {
    pub fn gamma(&self, n: usize, m: usize, bound: f64) -> Result<f64> {
        match *self {
            ThresholdRule::Ldb { alpha } => ldb_threshold(n, m, bound, alpha),
            ThresholdRule::Fixed { gamma } => Ok(gamma),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveRow {
    pub n: usize,
    pub m: usize,
    pub gamma: f64,
    /// exact acceptance probability under `(P, Q)`
    pub beta: f64,
    /// `-ln(beta) / (n + m)`
    pub rate: f64,
    /// `D*` at `c = n / (n + m)`
    pub dstar: f64,
}

/// Exact acceptance probability of `{(R, S): d_k(R, S) <= gamma}` under
/// `(P, Q)` for each `(n, m)`, with per-pair MMD evaluated against cached
/// kernel products on the type lattices.
pub fn exact_error_curve(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    kernel: &KernelSpec,
    rule: ThresholdRule,
    sizes: &[(usize, usize)],
) -> Result<Vec<CurveRow>> {
    let (support, pp, qq) = aligned_pmfs(p, q)?;
    let t = pp.len();
    let kmat: Vec<f64> = (0..t * t)
        .map(|ij| kernel.eval(&support[ij / t], &support[ij % t]))
        .collect();
    let quad = |v: &[f64]| -> (Vec<f64>, f64) {
        let kv: Vec<f64> = (0..t).map(|a| (0..t).map(|b| kmat[a * t + b] * v[b]).sum()).collect();
        let vkv = v.iter().zip(&kv).map(|(x, y)| x * y).sum();
        (kv, vkv)
    };
    let mut rows = Vec::with_capacity(sizes.len());
    for &(n, m) in sizes {
        check_pair_cap(n, m, t)?;
        let gamma = rule.gamma(n, m, kernel.bound())?;
        let gamma2 = gamma * gamma;
        let lp = Lattice::new(&pp, n)?;
        let lq = Lattice::new(&qq, m)?;
        let fp: Vec<Vec<f64>> = lp.types.iter().map(TypeVector::frequencies).collect();
        let cache_p: Vec<f64> = fp.iter().map(|r| quad(r).1).collect();
        let cache_q: Vec<(Vec<f64>, f64)> = lq.types.iter().map(|s| quad(&s.frequencies())).collect();
        let beta = region_sum(&lp, &lq, |i, j| {
            let (ks, sks) = &cache_q[j];
            let cross: f64 = fp[i].iter().zip(ks).map(|(a, b)| a * b).sum();
            let d2 = cache_p[i] + sks - 2.0 * cross;
            d2.max(0.0) <= gamma2
        });
        let beta = beta.min(1.0);
        let c = n as f64 / (n + m) as f64;
        rows.push(CurveRow {
            n,
            m,
            gamma,
            beta,
            rate: if beta >= 1.0 { 0.0 } else { -beta.ln() / (n + m) as f64 },
            dstar: dstar_discrete(p, q, c)?.value,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(pmf: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::on_alphabet(pmf.to_vec()).unwrap()
    }

    #[test]
    fn enumeration_counts() {
        let two = enumerate_types(2, 2).unwrap();
        let counts: Vec<_> = two.iter().map(|t| t.counts().to_vec()).collect();
        assert_eq!(counts, vec![vec![0, 2], vec![1, 1], vec![2, 0]]);
        assert_eq!(enumerate_types(1, 3).unwrap().len(), 3);
        assert_eq!(enumerate_types(30, 3).unwrap().len(), 496);
        assert_eq!(type_count(30, 3), 496);
    }

    #[test]
    fn enumeration_limits() {
        assert!(enumerate_types(0, 2).is_err());
        assert!(enumerate_types(5, 1).is_err());
        assert!(enumerate_types(5, 6).is_err());
        assert!(matches!(enumerate_types(1000, 5), Err(Error::EnumerationCap { .. })));
    }

    #[test]
    fn enumeration_is_duplicate_free() {
        let types = enumerate_types(7, 4).unwrap();
        let mut sorted = types.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), types.len());
        assert!(types.iter().all(|t| t.n() == 7 && t.t() == 4));
    }

    #[test]
    fn type_probabilities() {
        let p = dist(&[0.5, 0.5]);
        let tv = TypeVector::new(vec![1, 1]).unwrap();
        let prob = type_probability(&p, &tv).unwrap();
        assert!((prob - 0.5).abs() < 1e-14);
        assert!((1.0 / 9.0..=1.0).contains(&prob));

        let point = dist(&[1.0, 0.0]);
        for n in [1usize, 5, 40] {
            let tv = TypeVector::new(vec![n as u32, 0]).unwrap();
            assert!((type_probability(&point, &tv).unwrap() - 1.0).abs() < 1e-12);
            let tv = TypeVector::new(vec![n as u32 - 1, 1]).unwrap();
            assert_eq!(type_probability(&point, &tv).unwrap(), 0.0);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        for (pmf, n) in [(vec![0.3, 0.7], 30), (vec![0.2, 0.5, 0.3], 30), (vec![0.1, 0.6, 0.3], 7)] {
            let p = dist(&pmf);
            let total: f64 = enumerate_types(n, pmf.len())
                .unwrap()
                .iter()
                .map(|tv| type_probability(&p, tv).unwrap())
                .sum();
            assert!((total - 1.0).abs() < 1e-10, "{total}");
        }
    }

    #[test]
    fn trivial_regions() {
        let p = dist(&[0.5, 0.5]);
        let q = dist(&[0.9, 0.1]);
        let all = exact_region_probability(&p, &q, 12, 9, |_, _| true).unwrap();
        assert!((all - 1.0).abs() < 1e-12);
        assert_eq!(exact_region_probability(&p, &q, 12, 9, |_, _| false).unwrap(), 0.0);
    }

    #[test]
    fn region_of_independent_events_factorizes() {
        let p = dist(&[0.2, 0.8]);
        let q = dist(&[0.6, 0.4]);
        let pr = exact_region_probability(&p, &q, 10, 8, |r, s| r.counts()[0] <= 3 && s.counts()[0] >= 4).unwrap();
        let a: f64 = (0..=3u32)
            .map(|k| type_probability(&p, &TypeVector::new(vec![k, 10 - k]).unwrap()).unwrap())
            .sum();
        let b: f64 = (4..=8u32)
            .map(|k| type_probability(&q, &TypeVector::new(vec![k, 8 - k]).unwrap()).unwrap())
            .sum();
        assert!((pr - a * b).abs() < 1e-14);
    }

    #[test]
    fn partitions() {
        assert_eq!(set_partitions(1).len(), 1);
        assert_eq!(set_partitions(3).len(), 5);
        assert_eq!(set_partitions(4).len(), 15);
        assert!(Partition::new(vec![0, 2]).is_err());
        let p = dist(&[0.1, 0.2, 0.3, 0.4]);
        let q = dist(&[0.4, 0.3, 0.2, 0.1]);
        assert!(kld_partition(&p, &q, &Partition::single_cell(4)).unwrap().abs() < 1e-15);
        let fine = kld_partition(&p, &q, &Partition::finest(4)).unwrap();
        assert!((fine - crate::distributions::kld(&p, &q).unwrap()).abs() < 1e-15);
        let a = Partition::new(vec![0, 0, 1, 2]).unwrap();
        let coarse = Partition::new(vec![0, 0, 1, 1]).unwrap();
        assert!(coarse.is_coarsening_of(&a));
        assert!(!a.is_coarsening_of(&coarse));
        assert!(kld_partition(&p, &q, &coarse).unwrap() <= kld_partition(&p, &q, &a).unwrap());
    }

    #[test]
    fn error_curve_under_null_meets_level() {
        let p = dist(&[0.5, 0.5]);
        let k = KernelSpec::gaussian(1.0).unwrap();
        let rows = exact_error_curve(&p, &p, &k, ThresholdRule::Ldb { alpha: 0.05 }, &[(25, 25), (60, 60)]).unwrap();
        for r in rows {
            assert!(r.beta >= 0.95, "{r:?}");
            assert_eq!(r.dstar, 0.0);
        }
    }

    #[test]
    fn error_curve_matches_generic_region() {
        let p = dist(&[0.5, 0.5]);
        let q = dist(&[0.9, 0.1]);
        let k = KernelSpec::gaussian(1.0).unwrap();
        let gamma = 0.3;
        let rows = exact_error_curve(&p, &q, &k, ThresholdRule::Fixed { gamma }, &[(20, 20)]).unwrap();
        let support = vec![vec![0.0], vec![1.0]];
        let generic = exact_region_probability(&p, &q, 20, 20, |r, s| {
            crate::mmd::mmd2_population_pmf(&support, &r.frequencies(), &s.frequencies(), &k)
                .max(0.0)
                .sqrt()
                <= gamma
        })
        .unwrap();
        assert!((rows[0].beta - generic).abs() < 1e-14);
    }
}
