//! Gaussian kernel, blocked Gram-matrix evaluation and the median heuristic.
//!
//! Kernel sums are accumulated per row in ascending column order whatever
//! the tile size, so tiled and untiled evaluation agree bit for bit. Row
//! totals are then combined with compensated summation in row order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::Sample;
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Rows per tile for Gram evaluation.
pub const DEFAULT_TILE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
}

/// `k(x, y) = exp(-|x - y|^2 / w)`, bounded by `K = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel")]
pub struct KernelSpec {
    family: KernelFamily,
    bandwidth: f64,
    #[serde(skip)]
    bound: f64,
}

#[derive(Deserialize)]
struct RawKernel {
    family: KernelFamily,
    bandwidth: f64,
}

impl TryFrom<RawKernel> for KernelSpec {
    type Error = Error;

    fn try_from(raw: RawKernel) -> Result<Self> {
        match raw.family {
            KernelFamily::Gaussian => KernelSpec::gaussian(raw.bandwidth),
        }
    }
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be a positive finite number, got {bandwidth}"
            )));
        }
        Ok(Self {
            family: KernelFamily::Gaussian,
            bandwidth,
            bound: 1.0,
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Upper bound `K` on `k(x, y)`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Gaussian => (-squared_distance(x, y) / self.bandwidth).exp(),
        }
    }
}

/// How to obtain a bandwidth for a given pooled sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    Fixed(f64),
    Median,
}

impl BandwidthRule {
    pub fn resolve(&self, pooled: &Sample) -> Result<KernelSpec> {
        match *self {
            BandwidthRule::Fixed(w) => KernelSpec::gaussian(w),
            BandwidthRule::Median => KernelSpec::gaussian(median_heuristic(pooled)?),
        }
    }

    pub fn label(&self) -> String {
        match self {
            BandwidthRule::Fixed(w) => format!("{w}"),
            BandwidthRule::Median => "median".into(),
        }
    }
}

impl std::str::FromStr for BandwidthRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("median") {
            return Ok(BandwidthRule::Median);
        }
        let w: f64 = s
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bandwidth `{s}` is neither a number nor `median`")))?;
        KernelSpec::gaussian(w)?;
        Ok(BandwidthRule::Fixed(w))
    }
}

impl Serialize for BandwidthRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BandwidthRule::Fixed(w) => s.serialize_f64(*w),
            BandwidthRule::Median => s.serialize_str("median"),
        }
    }
}

impl<'de> Deserialize<'de> for BandwidthRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(w) => KernelSpec::gaussian(w)
                .map(|_| BandwidthRule::Fixed(w))
                .map_err(serde::de::Error::custom),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[inline]
pub fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Median of squared Euclidean distances over all unordered pairs of distinct
/// rows; with an even number of pairs the lower middle value is taken.
pub fn median_heuristic(pooled: &Sample) -> Result<f64> {
    let n = pooled.n();
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let xi = pooled.row(i);
        for j in i + 1..n {
            dists.push(squared_distance(xi, pooled.row(j)));
        }
    }
    let mid = (dists.len() - 1) / 2;
    let (_, median, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let median = *median;
    if median <= 0.0 {
        return Err(Error::Degenerate(
            "median pairwise distance is zero (points identical)".into(),
        ));
    }
    Ok(median)
}

/// Dense row-major kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Gram {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

fn check_dims(x: &Sample, y: &Sample) -> Result<()> {
    if x.d() != y.d() {
        return Err(Error::DimensionMismatch {
            left: x.d(),
            right: y.d(),
        });
    }
    Ok(())
}

/// `G[i][j] = k(x_i, y_j)`, computed in row tiles.
pub fn gram_matrix(x: &Sample, y: &Sample, kernel: &KernelSpec) -> Result<Gram> {
    check_dims(x, y)?;
    let (rows, cols) = (x.n(), y.n());
    let mut values = vec![0.0; rows * cols];
    values
        .par_chunks_mut(DEFAULT_TILE * cols.max(1))
        .enumerate()
        .for_each(|(tile, chunk)| {
            let r0 = tile * DEFAULT_TILE;
            for (off, out) in chunk.chunks_exact_mut(cols).enumerate() {
                let xi = x.row(r0 + off);
                for (j, v) in out.iter_mut().enumerate() {
                    *v = kernel.eval(xi, y.row(j));
                }
            }
        });
    Ok(Gram { values, rows, cols })
}

/// Symmetric Gram matrix of one sample; only the upper triangle is evaluated.
pub fn gram_matrix_symmetric(x: &Sample, kernel: &KernelSpec) -> Gram {
    let n = x.n();
    let mut values = vec![0.0; n * n];
    values
        .par_chunks_mut(DEFAULT_TILE * n)
        .enumerate()
        .for_each(|(tile, chunk)| {
            let r0 = tile * DEFAULT_TILE;
            for (off, out) in chunk.chunks_exact_mut(n).enumerate() {
                let i = r0 + off;
                let xi = x.row(i);
                for (j, v) in out.iter_mut().enumerate().skip(i) {
                    *v = kernel.eval(xi, x.row(j));
                }
            }
        });
    for i in 0..n {
        for j in 0..i {
            values[i * n + j] = values[j * n + i];
        }
    }
    Gram {
        values,
        rows: n,
        cols: n,
    }
}

/// Per-row kernel sums over a rectangular block, tiled over rows and columns.
/// Within a row, columns are always visited in ascending order.
fn tiled_row_sums(x: &Sample, y: &Sample, kernel: &KernelSpec, tile: usize, upper_only: bool) -> Vec<f64> {
    let tile = tile.max(1);
    let (rows, cols) = (x.n(), y.n());
    let row_tiles: Vec<usize> = (0..rows).step_by(tile).collect();
    let per_tile: Vec<Vec<f64>> = row_tiles
        .par_iter()
        .map(|&r0| {
            let r1 = (r0 + tile).min(rows);
            let mut acc = vec![0.0; r1 - r0];
            let mut c0 = 0;
            while c0 < cols {
                let c1 = (c0 + tile).min(cols);
                for i in r0..r1 {
                    let xi = x.row(i);
                    let start = if upper_only { c0.max(i + 1) } else { c0 };
                    let a = &mut acc[i - r0];
                    for j in start..c1 {
                        *a += kernel.eval(xi, y.row(j));
                    }
                }
                c0 = c1;
            }
            acc
        })
        .collect();
    per_tile.into_iter().flatten().collect()
}

/// `sum_{i,j} k(x_i, y_j)`.
pub fn cross_sum(x: &Sample, y: &Sample, kernel: &KernelSpec, tile: usize) -> Result<f64> {
    check_dims(x, y)?;
    Ok(compensated_sum(tiled_row_sums(x, y, kernel, tile, false)))
}

/// `sum_{i != j} k(x_i, x_j)` evaluated through the upper triangle.
pub fn off_diagonal_sum(x: &Sample, kernel: &KernelSpec, tile: usize) -> f64 {
    2.0 * compensated_sum(tiled_row_sums(x, x, kernel, tile, true))
}

/// `sum_i k(x_i, x_i)`.
pub fn diagonal_sum(x: &Sample, kernel: &KernelSpec) -> f64 {
    compensated_sum(x.rows().map(|r| kernel.eval(r, r)))
}
