//! Off-line single change-point detection by the maximum-partition MMD scan.
//!
//! Split index `i` means the first segment is `z_1..z_i` and the second is
//! `z_{i+1}..z_n`. The scan keeps the three Gram block sums of the current
//! split and moves one row from the right block to the left per step, so the
//! whole window costs `O(n^2)` after the Gram matrix.

use serde::Serialize;

use crate::distributions::Sample;
use crate::error::{Error, Result};
use crate::kernels::{gram_matrix_symmetric, KernelSpec};
use crate::mmd;

/// Search window `[a, b]` over split indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Window {
    pub a: usize,
    pub b: usize,
}

impl Window {
    pub fn new(n: usize, a: usize, b: usize) -> Result<Self> {
        if !(1 < a && a <= b && b < n) {
            return Err(Error::WindowOutOfRange { n, a, b });
        }
        Ok(Self { a, b })
    }

    /// `a = ceil(0.2 n)`, `b = floor(0.8 n)`.
    pub fn default_for(n: usize) -> Result<Self> {
        let a = (n as f64 * 0.2).ceil() as usize;
        let b = (n as f64 * 0.8).floor() as usize;
        Self::new(n, a, b)
    }

    pub fn len(&self) -> usize {
        self.b - self.a + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// `sqrt(2K/a) + sqrt(2K/b) + sqrt(2 K n ln(2n/alpha) / c_min)` with
/// `c_min = min(a(n-a), b(n-b))`.
pub fn cp_threshold(n: usize, a: usize, b: usize, k: f64, alpha: f64) -> Result<f64> {
    Window::new(n, a, b)?;
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::InvalidParameter(format!("kernel bound K must be positive, got {k}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let (nf, af, bf) = (n as f64, a as f64, b as f64);
    let c_min = (af * (nf - af)).min(bf * (nf - bf));
    Ok((2.0 * k / af).sqrt() + (2.0 * k / bf).sqrt() + (2.0 * k * nf * (2.0 * nf / alpha).ln() / c_min).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    /// `(i, d_k(P_i, Q_{n-i}))` for every `i` in the window.
    pub statistics: Vec<(usize, f64)>,
    pub max: f64,
    /// Smallest index attaining the maximum.
    pub argmax: usize,
}

fn check_sequence(z: &Sample, window: Window) -> Result<()> {
    Window::new(z.n(), window.a, window.b).map(|_| ())
}

fn summarize(statistics: Vec<(usize, f64)>) -> ScanResult {
    let (mut argmax, mut max) = statistics[0];
    for &(i, v) in &statistics[1..] {
        // strict comparison keeps the earliest index on ties
        if v > max {
            max = v;
            argmax = i;
        }
    }
    ScanResult { statistics, max, argmax }
}

/// Incremental scan over the window.
pub fn scan(z: &Sample, kernel: &KernelSpec, window: Window) -> Result<ScanResult> {
    check_sequence(z, window)?;
    let n = z.n();
    let g = gram_matrix_symmetric(z, kernel);

    // block sums for the split at i = a
    let a = window.a;
    let mut s_xx = 0.0;
    let mut s_xy = 0.0;
    let mut s_yy = 0.0;
    for r in 0..n {
        let row = g.row(r);
        if r < a {
            s_xx += row[..a].iter().sum::<f64>();
            s_xy += row[a..].iter().sum::<f64>();
        } else {
            s_yy += row[a..].iter().sum::<f64>();
        }
    }

    let mut statistics = Vec::with_capacity(window.len());
    let mut i = a;
    loop {
        let v = mmd::clamp_biased(mmd::biased_from_sums(s_xx, s_yy, s_xy, i, n - i));
        statistics.push((i, v.max(0.0).sqrt()));
        if i == window.b {
            break;
        }
        // move row i (0-based) from the right block to the left block
        let row = g.row(i);
        let to_left: f64 = row[..i].iter().sum();
        let to_right: f64 = row[i + 1..].iter().sum();
        let diag = row[i];
        s_xx += 2.0 * to_left + diag;
        s_yy -= 2.0 * to_right + diag;
        s_xy += to_right - to_left;
        i += 1;
    }
    Ok(summarize(statistics))
}

/// Reference scan recomputing every split from scratch, `O(n^3)`.
pub fn scan_from_scratch(z: &Sample, kernel: &KernelSpec, window: Window) -> Result<ScanResult> {
    check_sequence(z, window)?;
    let n = z.n();
    let mut statistics = Vec::with_capacity(window.len());
    for i in window.a..=window.b {
        let left = z.slice_rows(0, i)?;
        let right = z.slice_rows(i, n)?;
        statistics.push((i, mmd::mmd2_biased(&left, &right, kernel)?.distance()));
    }
    Ok(summarize(statistics))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangePointResult {
    pub detected: bool,
    pub scan_statistic: f64,
    pub threshold: f64,
    pub estimated_index: Option<usize>,
    pub window: Window,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub per_index_statistics: Vec<(usize, f64)>,
}

/// Declares a change when the scan maximum exceeds [`cp_threshold`].
pub fn detect(z: &Sample, kernel: &KernelSpec, window: Window, alpha: f64) -> Result<ChangePointResult> {
    let threshold = cp_threshold(z.n(), window.a, window.b, kernel.bound(), alpha)?;
    let s = scan(z, kernel, window)?;
    let detected = s.max > threshold;
    Ok(ChangePointResult {
        detected,
        scan_statistic: s.max,
        threshold,
        estimated_index: detected.then_some(s.argmax),
        window,
        per_index_statistics: s.statistics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_reference() {
        let t = cp_threshold(100, 20, 80, 1.0, 0.05).unwrap();
        assert!((t - 1.492_553_9).abs() < 1e-7, "{t}");
        assert!(cp_threshold(100, 20, 80, 1.0, 0.1).unwrap() < t);
        assert!(cp_threshold(100, 1, 80, 1.0, 0.05).is_err());
        assert!(cp_threshold(100, 20, 100, 1.0, 0.05).is_err());
        assert!(cp_threshold(100, 50, 40, 1.0, 0.05).is_err());
    }

    #[test]
    fn threshold_symmetric_window_specialization() {
        let n = 100usize;
        let t = cp_threshold(n, n / 2, n / 2, 1.0, 0.05).unwrap();
        let nf = n as f64;
        let expected = 2.0 * (4.0 / nf).sqrt() + (8.0 * (2.0 * nf / 0.05).ln() / nf).sqrt();
        assert!((t - expected).abs() < 1e-14);
    }

    #[test]
    fn default_window() {
        assert_eq!(Window::default_for(200).unwrap(), Window { a: 40, b: 160 });
        assert_eq!(Window::default_for(11).unwrap(), Window { a: 3, b: 8 });
        assert!(Window::default_for(3).is_err());
    }

    #[test]
    fn constant_sequence_scans_to_zero() {
        let z = Sample::from_scalars(&[1.5; 30]).unwrap();
        let k = KernelSpec::gaussian(1.0).unwrap();
        let s = scan(&z, &k, Window::new(30, 5, 25).unwrap()).unwrap();
        assert_eq!(s.statistics.len(), 21);
        assert!(s.statistics.iter().all(|&(_, v)| v == 0.0));
        assert_eq!(s.max, 0.0);
        assert_eq!(s.argmax, 5);
    }

    #[test]
    fn step_sequence_localizes() {
        let mut values = vec![0.0; 50];
        values.extend(vec![10.0; 50]);
        let z = Sample::from_scalars(&values).unwrap();
        let k = KernelSpec::gaussian(1.0).unwrap();
        let s = scan(&z, &k, Window::new(100, 20, 80).unwrap()).unwrap();
        assert_eq!(s.argmax, 50);
        assert_eq!(s.statistics.len(), 61);
        let expected = (2.0 - 2.0 * (-100.0f64).exp()).sqrt();
        assert!((s.max - expected).abs() < 1e-12);
    }

    #[test]
    fn ties_break_to_smallest_index() {
        let summary = summarize(vec![(3, 0.5), (4, 0.9), (5, 0.9), (6, 0.1)]);
        assert_eq!(summary.argmax, 4);
        // a symmetric sequence gives equal statistics at mirrored splits
        let z = Sample::from_scalars(&[0.0, 0.0, 5.0, 5.0, 5.0, 5.0, 0.0, 0.0]).unwrap();
        let k = KernelSpec::gaussian(1.0).unwrap();
        let s = scan(&z, &k, Window::new(8, 2, 6).unwrap()).unwrap();
        let v2 = s.statistics[0].1;
        let v6 = s.statistics[4].1;
        assert!((v2 - v6).abs() < 1e-12);
        assert!(s.argmax <= 6);
    }

    #[test]
    fn detect_contract() {
        // at n = 80 the threshold exceeds sqrt(2K), so nothing can be detected
        assert!(cp_threshold(80, 16, 64, 1.0, 0.05).unwrap() > 2f64.sqrt());
        let mut values = vec![0.0; 100];
        values.extend(vec![10.0; 100]);
        let z = Sample::from_scalars(&values).unwrap();
        let k = KernelSpec::gaussian(1.0).unwrap();
        let r = detect(&z, &k, Window::default_for(200).unwrap(), 0.05).unwrap();
        assert!(r.detected);
        assert_eq!(r.estimated_index, Some(100));
        let z = Sample::from_scalars(&[0.0; 200]).unwrap();
        let r = detect(&z, &k, Window::default_for(200).unwrap(), 0.05).unwrap();
        assert!(!r.detected);
        assert_eq!(r.estimated_index, None);
    }
}
