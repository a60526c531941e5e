//! Statistics evaluated on each resample.
//!
//! A [`StatisticSpec`] names what to compute; [`PreparedStatistic`] binds it to
//! a dataset (column lookups resolved once) and evaluates it against borrowed
//! sample views without allocating per call. New statistic kinds are added
//! here: a variant on the spec, its accepted views, and an arm in
//! `PreparedStatistic::eval_into`.

use std::fmt;
use std::str::FromStr;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::plan::{SampleView, Stype};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Summary {
    Mean,
    Median,
    StdDev,
}

impl Summary {
    pub fn name(self) -> &'static str {
        match self {
            Summary::Mean => "mean",
            Summary::Median => "median",
            Summary::StdDev => "sd",
        }
    }

    pub fn accepts(self, stype: Stype) -> bool {
        match self {
            Summary::Mean => true,
            // Need a materialized resample.
            Summary::Median | Summary::StdDev => stype != Stype::Weights,
        }
    }

    fn min_observations(self) -> usize {
        match self {
            Summary::StdDev => 2,
            Summary::Mean | Summary::Median => 1,
        }
    }
}

impl FromStr for Summary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Summary::Mean),
            "median" => Ok(Summary::Median),
            "sd" => Ok(Summary::StdDev),
            _ => Err(Error::InvalidStatistic(s.to_owned())),
        }
    }
}

/// A named, possibly vector-valued statistic.
///
/// A scalar summary without a column applies to the first column.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StatisticSpec {
    Scalar {
        summary: Summary,
        column: Option<String>,
    },
    WeightedRatio {
        numerator: String,
        denominator: String,
    },
    PerColumn {
        summary: Summary,
        columns: Vec<String>,
    },
}

impl StatisticSpec {
    pub fn mean() -> Self {
        Self::scalar(Summary::Mean)
    }

    pub fn median() -> Self {
        Self::scalar(Summary::Median)
    }

    pub fn sd() -> Self {
        Self::scalar(Summary::StdDev)
    }

    pub fn scalar(summary: Summary) -> Self {
        StatisticSpec::Scalar {
            summary,
            column: None,
        }
    }

    pub fn ratio(numerator: impl Into<String>, denominator: impl Into<String>) -> Self {
        StatisticSpec::WeightedRatio {
            numerator: numerator.into(),
            denominator: denominator.into(),
        }
    }

    pub fn per_column<S: Into<String>>(summary: Summary, columns: impl IntoIterator<Item = S>) -> Self {
        StatisticSpec::PerColumn {
            summary,
            columns: columns.into_iter().map(Into::into).collect(),
        }
    }

    pub fn accepts(&self, stype: Stype) -> bool {
        match self {
            StatisticSpec::Scalar { summary, .. } | StatisticSpec::PerColumn { summary, .. } => {
                summary.accepts(stype)
            }
            StatisticSpec::WeightedRatio { .. } => true,
        }
    }

    /// The view used for `t0` when none is requested.
    pub fn default_stype(&self) -> Stype {
        match self {
            StatisticSpec::WeightedRatio { .. } => Stype::Weights,
            _ => Stype::Indices,
        }
    }

    pub fn check_view(&self, stype: Stype) -> Result<()> {
        if self.accepts(stype) {
            Ok(())
        } else {
            Err(Error::UnsupportedView {
                statistic: self.to_string(),
                stype: stype.as_str(),
            })
        }
    }
}

impl fmt::Display for StatisticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatisticSpec::Scalar { summary, column: None } => f.write_str(summary.name()),
            StatisticSpec::Scalar {
                summary,
                column: Some(c),
            } => write!(f, "{}:{c}", summary.name()),
            StatisticSpec::WeightedRatio {
                numerator,
                denominator,
            } => write!(f, "ratio:{numerator}:{denominator}"),
            StatisticSpec::PerColumn { summary, columns } => {
                write!(f, "per-column:{}:{}", summary.name(), columns.join(","))
            }
        }
    }
}

impl FromStr for StatisticSpec {
    type Err = Error;

    /// `mean`, `median`, `sd` (optionally `:<col>`), `ratio:<x>:<u>`,
    /// `per-column:<stat>:<c1,c2,...>`.
    fn from_str(s: &str) -> Result<Self> {
        let invalid = || Error::InvalidStatistic(s.to_owned());
        let parts: Vec<&str> = s.splitn(3, ':').collect();
        match parts.as_slice() {
            [name] => Ok(StatisticSpec::scalar(name.parse().map_err(|_| invalid())?)),
            ["ratio", x, u] if !x.is_empty() && !u.is_empty() && !u.contains(':') => {
                Ok(StatisticSpec::ratio(*x, *u))
            }
            ["per-column", stat, cols] => {
                let columns: Vec<String> = cols.split(',').map(str::to_owned).collect();
                if columns.iter().any(String::is_empty) {
                    return Err(invalid());
                }
                Ok(StatisticSpec::PerColumn {
                    summary: stat.parse().map_err(|_| invalid())?,
                    columns,
                })
            }
            [name, col] if !col.is_empty() => Ok(StatisticSpec::Scalar {
                summary: name.parse().map_err(|_| invalid())?,
                column: Some((*col).to_owned()),
            }),
            _ => Err(invalid()),
        }
    }
}

/// Borrowed form of [`SampleView`].
#[derive(Debug, Clone, Copy)]
pub enum ViewRef<'a> {
    Indices(&'a [u64]),
    Frequencies(&'a [u64]),
    Weights(&'a [f64]),
}

impl<'a> ViewRef<'a> {
    pub fn stype(self) -> Stype {
        match self {
            ViewRef::Indices(_) => Stype::Indices,
            ViewRef::Frequencies(_) => Stype::Frequencies,
            ViewRef::Weights(_) => Stype::Weights,
        }
    }

    fn len(self) -> usize {
        match self {
            ViewRef::Indices(v) | ViewRef::Frequencies(v) => v.len(),
            ViewRef::Weights(v) => v.len(),
        }
    }
}

impl<'a> From<&'a SampleView> for ViewRef<'a> {
    fn from(view: &'a SampleView) -> Self {
        match view {
            SampleView::Indices(v) => ViewRef::Indices(v),
            SampleView::Frequencies(v) => ViewRef::Frequencies(v),
            SampleView::Weights(v) => ViewRef::Weights(v),
        }
    }
}

#[derive(Debug, Clone)]
enum Bound {
    Summary { summary: Summary, columns: Vec<usize> },
    Ratio { numerator: usize, denominator: usize },
}

/// A statistic bound to one dataset.
#[derive(Debug, Clone)]
pub struct PreparedStatistic<'a> {
    spec: &'a StatisticSpec,
    data: &'a Dataset,
    bound: Bound,
}

/// Reusable buffer for materialized resamples.
#[derive(Debug, Default)]
pub struct Scratch {
    values: Vec<f64>,
}

impl<'a> PreparedStatistic<'a> {
    pub fn new(spec: &'a StatisticSpec, data: &'a Dataset) -> Result<Self> {
        let lookup = |name: &str| {
            data.column_index(name)
                .ok_or_else(|| Error::UnknownColumn(name.to_owned()))
        };
        let bound = match spec {
            StatisticSpec::Scalar { summary, column } => Bound::Summary {
                summary: *summary,
                columns: vec![match column {
                    Some(c) => lookup(c)?,
                    None => 0,
                }],
            },
            StatisticSpec::PerColumn { summary, columns } => {
                if columns.is_empty() {
                    return Err(Error::InvalidStatistic(spec.to_string()));
                }
                Bound::Summary {
                    summary: *summary,
                    columns: columns.iter().map(|c| lookup(c)).collect::<Result<_>>()?,
                }
            }
            StatisticSpec::WeightedRatio {
                numerator,
                denominator,
            } => Bound::Ratio {
                numerator: lookup(numerator)?,
                denominator: lookup(denominator)?,
            },
        };
        if let Bound::Summary { summary, .. } = &bound {
            let need = summary.min_observations();
            if data.n() < need {
                return Err(Error::InsufficientObservations {
                    statistic: spec.to_string(),
                    need,
                    have: data.n(),
                });
            }
        }
        Ok(Self { spec, data, bound })
    }

    pub fn spec(&self) -> &StatisticSpec {
        self.spec
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    /// Output dimension `p`.
    pub fn dimension(&self) -> usize {
        match &self.bound {
            Bound::Summary { columns, .. } => columns.len(),
            Bound::Ratio { .. } => 1,
        }
    }

    /// Evaluates into `out` (length `p`); every output is checked finite.
    pub fn eval_into(&self, view: ViewRef<'_>, scratch: &mut Scratch, out: &mut [f64]) -> Result<()> {
        self.spec.check_view(view.stype())?;
        if view.len() != self.data.n() {
            return Err(Error::ViewLength {
                expected: self.data.n(),
                found: view.len(),
            });
        }
        if out.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: out.len(),
            });
        }
        match &self.bound {
            Bound::Summary { summary, columns } => {
                for (slot, &c) in out.iter_mut().zip(columns) {
                    *slot = summarize(*summary, self.data.column_at(c), view, scratch)?;
                }
            }
            Bound::Ratio {
                numerator,
                denominator,
            } => {
                let x = self.data.column_at(*numerator);
                let u = self.data.column_at(*denominator);
                out[0] = weighted_sum(x, view)? / weighted_sum(u, view)?;
            }
        }
        if let Some((dimension, &value)) = out.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteReplicate { dimension, value });
        }
        Ok(())
    }

    pub fn eval(&self, view: &SampleView) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dimension()];
        self.eval_into(view.into(), &mut Scratch::default(), &mut out)?;
        Ok(out)
    }

    /// Statistic of the original data under the identity view of `stype`.
    pub fn t0(&self, stype: Stype) -> Result<Vec<f64>> {
        self.eval(&SampleView::identity(stype, self.data.n()))
    }
}

fn summarize(summary: Summary, x: &[f64], view: ViewRef<'_>, scratch: &mut Scratch) -> Result<f64> {
    match summary {
        Summary::Mean => mean(x, view),
        Summary::Median => {
            materialize(x, view, &mut scratch.values)?;
            Ok(median_in_place(&mut scratch.values))
        }
        Summary::StdDev => {
            materialize(x, view, &mut scratch.values)?;
            Ok(sample_sd(&scratch.values))
        }
    }
}

fn check_index(i: u64, n: usize) -> Result<usize> {
    if i < n as u64 {
        Ok(i as usize)
    } else {
        Err(Error::IndexOutOfRange { index: i, n })
    }
}

fn mean(x: &[f64], view: ViewRef<'_>) -> Result<f64> {
    match view {
        ViewRef::Indices(idx) => {
            let mut sum = 0.0;
            for &i in idx {
                sum += x[check_index(i, x.len())?];
            }
            Ok(sum / idx.len() as f64)
        }
        ViewRef::Frequencies(f) => {
            let total: u64 = f.iter().sum();
            if total == 0 {
                return Err(Error::ZeroTotal);
            }
            let sum: f64 = f.iter().zip(x).map(|(&fj, &xj)| fj as f64 * xj).sum();
            Ok(sum / total as f64)
        }
        ViewRef::Weights(w) => Ok(w.iter().zip(x).map(|(&wj, &xj)| wj * xj).sum()),
    }
}

fn weighted_sum(x: &[f64], view: ViewRef<'_>) -> Result<f64> {
    Ok(match view {
        ViewRef::Indices(idx) => {
            let mut sum = 0.0;
            for &i in idx {
                sum += x[check_index(i, x.len())?];
            }
            sum
        }
        ViewRef::Frequencies(f) => f.iter().zip(x).map(|(&fj, &xj)| fj as f64 * xj).sum(),
        ViewRef::Weights(w) => w.iter().zip(x).map(|(&wj, &xj)| wj * xj).sum(),
    })
}

fn materialize(x: &[f64], view: ViewRef<'_>, out: &mut Vec<f64>) -> Result<()> {
    out.clear();
    match view {
        ViewRef::Indices(idx) => {
            out.reserve(idx.len());
            for &i in idx {
                out.push(x[check_index(i, x.len())?]);
            }
        }
        ViewRef::Frequencies(f) => {
            for (&fj, &xj) in f.iter().zip(x) {
                out.extend(std::iter::repeat_n(xj, fj as usize));
            }
            if out.is_empty() {
                return Err(Error::ZeroTotal);
            }
        }
        ViewRef::Weights(_) => unreachable!("weights are rejected before materializing"),
    }
    Ok(())
}

/// Median by selection; even lengths average the two middle order statistics.
pub fn median_in_place(values: &mut [f64]) -> f64 {
    let len = values.len();
    debug_assert!(len > 0);
    let mid = len / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if len % 2 == 1 {
        return upper;
    }
    let lower = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let m = (lower + upper) / 2.0;
    if m.is_finite() {
        m
    } else {
        lower / 2.0 + upper / 2.0
    }
}

/// Two-pass sample standard deviation with divisor `len - 1`.
pub fn sample_sd(values: &[f64]) -> f64 {
    let len = values.len() as f64;
    let mean = values.iter().sum::<f64>() / len;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (len - 1.0)).sqrt()
}

pub fn probe_dimension(spec: &StatisticSpec, data: &Dataset) -> Result<usize> {
    let prepared = PreparedStatistic::new(spec, data)?;
    Ok(prepared.t0(spec.default_stype())?.len())
}

pub fn eval_statistic(spec: &StatisticSpec, data: &Dataset, view: &SampleView) -> Result<Vec<f64>> {
    PreparedStatistic::new(spec, data)?.eval(view)
}

/// Statistic on the original data, using the spec's default view.
pub fn t0(spec: &StatisticSpec, data: &Dataset) -> Result<Vec<f64>> {
    PreparedStatistic::new(spec, data)?.t0(spec.default_stype())
}
