//! Bias, standard error and percentile intervals from the replicate matrix.

use std::fmt::Write as _;

use crate::engine::ReplicateMatrix;
use crate::error::{Error, Result};

/// Slack for rank arithmetic so that e.g. `1000 * 0.025` lands on 25.
const RANK_EPS: f64 = 1e-9;

/// `mean_i t[i][j] - t0[j]` per dimension.
pub fn bias(t0: &[f64], t: &ReplicateMatrix) -> Result<Vec<f64>> {
    if t.rows() == 0 {
        return Err(Error::EmptyReplicates);
    }
    check_dimension(t0, t)?;
    let r = t.rows() as f64;
    let mut sums = vec![0.0; t.dimension()];
    for row in t.iter_rows() {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    Ok(sums.iter().zip(t0).map(|(s, t0)| s / r - t0).collect())
}

/// Sample standard deviation of each column, divisor `R - 1`.
pub fn standard_error(t: &ReplicateMatrix) -> Result<Vec<f64>> {
    if t.rows() < 2 {
        return Err(Error::InsufficientReplicates {
            need: 2,
            have: t.rows(),
        });
    }
    Ok((0..t.dimension())
        .map(|j| crate::statistic::sample_sd(&t.column(j)))
        .collect())
}

/// 1-based order-statistic ranks `(floor((R+1) a/2), ceil((R+1)(1 - a/2)))`
/// clamped to `[1, R]`.
pub fn percentile_ranks(resamples: usize, alpha: f64) -> Result<(usize, usize)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let r1 = (resamples + 1) as f64;
    let lower = (r1 * alpha / 2.0 + RANK_EPS).floor();
    if lower < 1.0 || resamples == 0 {
        return Err(Error::InsufficientReplicates {
            need: ((2.0 / alpha) - 1.0 - RANK_EPS).ceil().max(1.0) as usize,
            have: resamples,
        });
    }
    let upper = (r1 * (1.0 - alpha / 2.0) - RANK_EPS).ceil();
    let clamp = |x: f64| (x as usize).clamp(1, resamples);
    Ok((clamp(lower), clamp(upper)))
}

/// Percentile interval per dimension at level `1 - alpha`.
pub fn percentile_ci(t: &ReplicateMatrix, alpha: f64) -> Result<Vec<(f64, f64)>> {
    let (lo, hi) = percentile_ranks(t.rows(), alpha)?;
    Ok((0..t.dimension())
        .map(|j| {
            let mut col = t.column(j);
            col.sort_unstable_by(f64::total_cmp);
            (col[lo - 1], col[hi - 1])
        })
        .collect())
}

fn check_dimension(t0: &[f64], t: &ReplicateMatrix) -> Result<()> {
    if t0.len() == t.dimension() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: t.dimension(),
            found: t0.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionEstimate {
    pub dimension: usize,
    pub t0: f64,
    pub bias: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub alpha: f64,
    pub resamples: usize,
    pub dimensions: Vec<DimensionEstimate>,
}

pub const REPORT_CSV_HEADER: &str = "dimension,t0,bias,se,ci_lower,ci_upper";

impl EstimateReport {
    pub fn new(t0: &[f64], t: &ReplicateMatrix, alpha: f64) -> Result<Self> {
        let b = bias(t0, t)?;
        let se = standard_error(t)?;
        let ci = percentile_ci(t, alpha)?;
        let dimensions = (0..t.dimension())
            .map(|j| DimensionEstimate {
                dimension: j,
                t0: t0[j],
                bias: b[j],
                se: se[j],
                ci_lower: ci[j].0,
                ci_upper: ci[j].1,
            })
            .collect();
        Ok(Self {
            alpha,
            resamples: t.rows(),
            dimensions,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for d in &self.dimensions {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?},{:?}",
                d.dimension, d.t0, d.bias, d.se, d.ci_lower, d.ci_upper
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let level = format!("{}% CI", trim_float((1.0 - self.alpha) * 100.0));
        let mut out = format!("bootstrap estimates, R = {}\n", self.resamples);
        let _ = writeln!(
            out,
            "{:>4}  {:>14}  {:>14}  {:>14}  {:>32}",
            "dim", "t0", "bias", "std. error", level
        );
        for d in &self.dimensions {
            let ci = format!("({:.6}, {:.6})", d.ci_lower, d.ci_upper);
            let _ = writeln!(
                out,
                "{:>4}  {:>14.6}  {:>14.6e}  {:>14.6}  {:>32}",
                d.dimension, d.t0, d.bias, d.se, ci
            );
        }
        out
    }
}

fn trim_float(v: f64) -> String {
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> ReplicateMatrix {
        let p = rows[0].len();
        ReplicateMatrix::new(rows.len(), p, rows.iter().flat_map(|r| r.iter().copied()).collect()).unwrap()
    }

    fn column(values: impl IntoIterator<Item = f64>) -> ReplicateMatrix {
        let v: Vec<f64> = values.into_iter().collect();
        ReplicateMatrix::new(v.len(), 1, v).unwrap()
    }

    #[test]
    fn bias_examples() {
        assert_eq!(bias(&[3.0], &matrix(&[&[2.0], &[3.0], &[4.0]])).unwrap(), [0.0]);
        assert_eq!(bias(&[0.0], &matrix(&[&[1.0]])).unwrap(), [1.0]);
        assert_eq!(bias(&[2.0, 2.0], &matrix(&[&[2.0, 4.0], &[2.0, 0.0]])).unwrap(), [0.0, 0.0]);
        assert!(matches!(bias(&[], &column([])), Err(Error::EmptyReplicates)));
        assert!(matches!(bias(&[1.0, 2.0], &column([1.0])), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn se_examples() {
        assert_eq!(standard_error(&column([2.0, 3.0, 4.0])).unwrap(), [1.0]);
        assert_eq!(standard_error(&column([5.0; 4])).unwrap(), [0.0]);
        assert_eq!(standard_error(&column([0.0, 2.0])).unwrap(), [2f64.sqrt()]);
        assert!(matches!(
            standard_error(&column([1.0])),
            Err(Error::InsufficientReplicates { need: 2, have: 1 })
        ));
    }

    #[test]
    fn ci_examples() {
        let vals: Vec<f64> = (1..=999).rev().map(f64::from).collect();
        assert_eq!(percentile_ranks(999, 0.05).unwrap(), (25, 975));
        assert_eq!(percentile_ci(&column(vals), 0.05).unwrap(), [(25.0, 975.0)]);
        assert_eq!(percentile_ci(&column([7.5; 40]), 0.05).unwrap(), [(7.5, 7.5)]);
        assert_eq!(percentile_ranks(19, 0.1).unwrap(), (1, 19));
        let t = column((0..19).map(|i| f64::from(i * 7 % 19)));
        assert_eq!(percentile_ci(&t, 0.1).unwrap(), [(0.0, 18.0)]);
    }

    #[test]
    fn ci_errors() {
        assert!(matches!(percentile_ranks(999, 0.0), Err(Error::AlphaOutOfRange(_))));
        assert!(matches!(percentile_ranks(999, 1.0), Err(Error::AlphaOutOfRange(_))));
        assert!(matches!(percentile_ranks(999, f64::NAN), Err(Error::AlphaOutOfRange(_))));
        assert!(matches!(
            percentile_ranks(18, 0.1),
            Err(Error::InsufficientReplicates { need: 19, have: 18 })
        ));
    }

    #[test]
    fn report_renders() {
        let t = matrix(&[&[1.0, 10.0], &[2.0, 20.0], &[3.0, 30.0], &[4.0, 40.0]]);
        let report = EstimateReport::new(&[2.0, 20.0], &t, 0.5).unwrap();
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(REPORT_CSV_HEADER));
        assert_eq!(lines.next().unwrap().split(',').count(), 6);
        assert_eq!(lines.count(), 1);
        assert!(report.to_text().contains("50% CI"));
        assert_eq!(report.dimensions[1].bias, 5.0);
    }
}
