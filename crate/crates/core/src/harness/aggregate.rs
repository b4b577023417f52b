//! Pointwise mean and percentile bands across trials.

use serde::Serialize;

use crate::{Error, Result};

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Band {
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Mean and central `level` percentile band of equally long paths; sums
/// run in path order so the result does not depend on how paths were
/// produced.
pub fn band(paths: &[Vec<f64>], level: f64) -> Result<Band> {
    let Some(first) = paths.first() else {
        return Err(Error::InvalidInput("no trials to aggregate".into()));
    };
    let len = first.len();
    if paths.iter().any(|p| p.len() != len) {
        return Err(Error::InvalidShape("trial paths differ in length".into()));
    }
    let q_lo = 0.5 * (1.0 - level);
    let mut out = Band {
        mean: Vec::with_capacity(len),
        lo: Vec::with_capacity(len),
        hi: Vec::with_capacity(len),
    };
    let mut column = Vec::with_capacity(paths.len());
    for t in 0..len {
        column.clear();
        column.extend(paths.iter().map(|p| p[t]));
        // shifted by the first trial: exact when every trial agrees
        let shift = column[0];
        let mean = shift + column.iter().map(|v| v - shift).sum::<f64>() / column.len() as f64;
        column.sort_by(f64::total_cmp);
        out.mean.push(mean);
        out.lo.push(quantile_sorted(&column, q_lo));
        out.hi.push(quantile_sorted(&column, 1.0 - q_lo));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateSeries {
    pub t: Vec<usize>,
    pub dist: Band,
    pub gap: Band,
    pub bound_dist: Vec<f64>,
    pub bound_gap: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub band_level: f64,
}

impl AggregateSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert!((quantile_sorted(&v, 0.025) - 1.075).abs() < 1e-15);
    }

    #[test]
    fn single_trial_band_is_degenerate() {
        let b = band(&[vec![3.0, 1.0, 2.0]], 0.95).unwrap();
        assert_eq!(b.mean, vec![3.0, 1.0, 2.0]);
        assert_eq!(b.lo, b.mean);
        assert_eq!(b.hi, b.mean);
    }

    #[test]
    fn rejects_ragged() {
        assert!(band(&[vec![1.0], vec![1.0, 2.0]], 0.95).is_err());
        assert!(band(&[], 0.95).is_err());
    }

    #[test]
    fn constant_column_mean_is_exact() {
        let v = 83.477_192_573_182_66;
        let b = band(&vec![vec![v]; 100], 0.95).unwrap();
        assert_eq!(b.mean[0], v);
    }

    #[test]
    fn band_orders() {
        let mut rng = crate::RngStream::new(0, 0);
        let paths: Vec<Vec<f64>> = (0..100).map(|_| (0..5).map(|_| rng.standard_normal()).collect()).collect();
        let b = band(&paths, 0.95).unwrap();
        for t in 0..5 {
            assert!(b.lo[t] <= b.mean[t] && b.mean[t] <= b.hi[t]);
        }
    }
}
