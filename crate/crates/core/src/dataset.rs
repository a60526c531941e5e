//! Column-oriented numeric tables and the synthetic expression matrix.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::CounterRng;

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    name: String,
    values: Vec<f64>,
}

impl Column {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Immutable table of `n` finite observations across uniquely named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    n: usize,
}

impl Dataset {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = (S, Vec<f64>)>) -> Result<Self> {
        let columns: Vec<Column> = columns
            .into_iter()
            .map(|(name, values)| Column {
                name: name.into(),
                values,
            })
            .collect();
        let n = columns.first().map_or(0, |c| c.values.len());
        if n == 0 {
            return Err(Error::EmptyTable);
        }
        let mut seen = HashSet::with_capacity(columns.len());
        for col in &columns {
            validate_name(&col.name)?;
            if !seen.insert(col.name.as_str()) {
                return Err(Error::DuplicateColumn(col.name.clone()));
            }
            if col.values.len() != n {
                return Err(Error::ColumnLength {
                    name: col.name.clone(),
                    expected: n,
                    found: col.values.len(),
                });
            }
            if let Some(row) = col.values.iter().position(|v| !v.is_finite()) {
                let column = columns.iter().position(|c| c.name == col.name).unwrap_or(0);
                return Err(Error::NonFiniteValue {
                    line: row + 2,
                    column: column + 1,
                });
            }
        }
        Ok(Self { columns, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.column_index(name).map(|i| self.columns[i].values())
    }

    pub fn column_at(&self, index: usize) -> &[f64] {
        &self.columns[index].values
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }
}

fn validate_name(name: &str) -> Result<()> {
    let bad = name.is_empty() || name.contains([',', '\n', '\r']);
    if bad {
        Err(Error::InvalidColumnName(name.to_owned()))
    } else {
        Ok(())
    }
}

/// Parses a comma-separated table with a header line. No quoting, no missing fields.
pub fn parse_table(text: &str) -> Result<Dataset> {
    let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    let header = match lines.next() {
        Some(h) if !h.is_empty() => h,
        _ => return Err(Error::EmptyTable),
    };
    let names: Vec<&str> = header.split(',').collect();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); names.len()];

    let body: Vec<&str> = lines.collect();
    // A single trailing newline terminates the last row; it is not a row.
    let body = match body.split_last() {
        Some((&"", rest)) => rest,
        _ => &body[..],
    };
    for (i, line) in body.iter().enumerate() {
        let line_no = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return Err(Error::RaggedRow {
                line: line_no,
                expected: names.len(),
                found: fields.len(),
            });
        }
        for (j, field) in fields.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::NonNumericField {
                line: line_no,
                column: j + 1,
                value: (*field).to_owned(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    line: line_no,
                    column: j + 1,
                });
            }
            values[j].push(v);
        }
    }
    if body.is_empty() {
        return Err(Error::EmptyTable);
    }
    Dataset::new(names.into_iter().zip(values))
}

pub fn load_table(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_owned()),
        _ => Error::io(path, e),
    })?;
    parse_table(&text)
}

/// Renders the table with shortest round-trip float formatting.
pub fn render_table(data: &Dataset) -> String {
    let mut out = String::with_capacity(data.n() * data.num_columns() * 12);
    out.push_str(&data.names().collect::<Vec<_>>().join(","));
    out.push('\n');
    for row in 0..data.n() {
        for (j, col) in data.columns().iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{:?}", col.values[row]);
        }
        out.push('\n');
    }
    out
}

pub fn write_table(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_table(data)).map_err(|e| Error::io(path, e))
}

/// Patient group of each sample column in a synthetic expression matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupLabels(Vec<u8>);

impl GroupLabels {
    pub fn labels(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `GxA+B`: G genes, A samples in group 1, B in group 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthShape {
    pub genes: usize,
    pub group1: usize,
    pub group2: usize,
}

impl SynthShape {
    pub const GOLUB: SynthShape = SynthShape {
        genes: 7129,
        group1: 47,
        group2: 25,
    };
}

impl FromStr for SynthShape {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let bad = || format!("expected GENESxGROUP1+GROUP2, got {s:?}");
        let (genes, groups) = s.split_once('x').ok_or_else(bad)?;
        let (a, b) = groups.split_once('+').ok_or_else(bad)?;
        let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        Ok(SynthShape {
            genes: parse(genes)?,
            group1: parse(a)?,
            group2: parse(b)?,
        })
    }
}

impl std::fmt::Display for SynthShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}+{}", self.genes, self.group1, self.group2)
    }
}

/// Every tenth gene (starting at gene 0) is shifted up in group 2.
pub const SHIFTED_GENE_STRIDE: usize = 10;
/// Log-scale mean shift applied to group 2 on the shifted genes.
pub const GROUP2_LOG_SHIFT: f64 = 1.0;

/// Synthetic Golub-shaped matrix: one row per gene, one column per sample.
///
/// Gene `g` has log-scale centre `6 + z_g` and spread `0.25 + 0.5 u_g`; each
/// sample value is `exp(centre + shift + spread * z)`.
pub fn synth_expression(
    genes: usize,
    group1: usize,
    group2: usize,
    seed: u64,
) -> Result<(Dataset, GroupLabels)> {
    if genes == 0 {
        return Err(Error::ZeroDimension("genes"));
    }
    if group1 == 0 {
        return Err(Error::ZeroDimension("group 1 samples"));
    }
    if group2 == 0 {
        return Err(Error::ZeroDimension("group 2 samples"));
    }
    let samples = group1 + group2;
    let mut rng = CounterRng::new(seed);
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(genes); samples];
    for g in 0..genes {
        let z: f64 = StandardNormal.sample(&mut rng);
        let centre = 6.0 + z;
        let spread = 0.25 + 0.5 * unit(&mut rng);
        let shift = if g % SHIFTED_GENE_STRIDE == 0 {
            GROUP2_LOG_SHIFT
        } else {
            0.0
        };
        for (s, col) in cols.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            let offset = if s >= group1 { shift } else { 0.0 };
            col.push((centre + offset + spread * z).exp());
        }
    }
    let names = (0..group1)
        .map(|i| format!("g1_{i}"))
        .chain((0..group2).map(|i| format!("g2_{i}")));
    let data = Dataset::new(names.zip(cols))?;
    let labels = (0..samples).map(|s| if s < group1 { 1 } else { 2 }).collect();
    Ok((data, GroupLabels(labels)))
}

fn unit(rng: &mut CounterRng) -> f64 {
    (rng.next_word() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_columns() {
        let d = parse_table("x,u\n2,1\n4,2\n").unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.column("x").unwrap(), &[2.0, 4.0]);
        assert_eq!(d.column("u").unwrap(), &[1.0, 2.0]);
        assert_eq!(d.names().collect::<Vec<_>>(), ["x", "u"]);
    }

    #[test]
    fn minimal_table() {
        let d = parse_table("a\n1\n").unwrap();
        assert_eq!(d.n(), 1);
        assert_eq!(d.column("a").unwrap(), &[1.0]);
    }

    #[test]
    fn missing_final_newline_is_fine() {
        let d = parse_table("a,b\n1,2\n3,4").unwrap();
        assert_eq!(d.n(), 2);
    }

    #[test]
    fn ragged_row_reports_line() {
        match parse_table("a,b\n1\n") {
            Err(Error::RaggedRow { line, expected, found }) => {
                assert_eq!((line, expected, found), (2, 2, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_reports_line_and_column() {
        match parse_table("a,b\n1,2\n3,x\n") {
            Err(Error::NonNumericField { line, column, .. }) => assert_eq!((line, column), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_nan_and_inf() {
        assert!(matches!(
            parse_table("a\nNaN\n"),
            Err(Error::NonFiniteValue { line: 2, column: 1 })
        ));
        assert!(matches!(
            parse_table("a\n1\ninf\n"),
            Err(Error::NonFiniteValue { line: 3, column: 1 })
        ));
    }

    #[test]
    fn empty_tables() {
        assert!(matches!(parse_table(""), Err(Error::EmptyTable)));
        assert!(matches!(parse_table("a,b\n"), Err(Error::EmptyTable)));
    }

    #[test]
    fn header_rules() {
        assert!(matches!(parse_table("a,a\n1,2\n"), Err(Error::DuplicateColumn(_))));
        assert!(matches!(parse_table("a,\n1,2\n"), Err(Error::InvalidColumnName(_))));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_table("/definitely/not/here.csv"),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn synth_shapes() {
        let (d, labels) = synth_expression(7129, 47, 25, 7).unwrap();
        assert_eq!(d.n(), 7129);
        assert_eq!(d.num_columns(), 72);
        assert_eq!(labels.len(), 72);
        assert_eq!(labels.labels().iter().filter(|&&l| l == 1).count(), 47);

        let (d, _) = synth_expression(1, 1, 1, 7).unwrap();
        assert_eq!((d.n(), d.num_columns()), (1, 2));
    }

    #[test]
    fn synth_is_deterministic_and_positive() {
        let a = synth_expression(50, 3, 2, 11).unwrap();
        let b = synth_expression(50, 3, 2, 11).unwrap();
        assert_eq!(render_table(&a.0), render_table(&b.0));
        assert!(a.0.columns().iter().all(|c| c.values().iter().all(|&v| v > 0.0)));
        let c = synth_expression(50, 3, 2, 12).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn synth_group_shift_is_visible() {
        let (d, _) = synth_expression(2000, 20, 20, 5).unwrap();
        let log_mean = |cols: std::ops::Range<usize>, shifted: bool| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for g in (0..d.n()).filter(|g| (g % SHIFTED_GENE_STRIDE == 0) == shifted) {
                for c in cols.clone() {
                    sum += d.column_at(c)[g].ln();
                    count += 1;
                }
            }
            sum / count as f64
        };
        let shifted_gap = log_mean(20..40, true) - log_mean(0..20, true);
        let plain_gap = log_mean(20..40, false) - log_mean(0..20, false);
        assert!((shifted_gap - GROUP2_LOG_SHIFT).abs() < 0.1, "{shifted_gap}");
        assert!(plain_gap.abs() < 0.05, "{plain_gap}");
    }

    #[test]
    fn synth_zero_dimension() {
        assert!(matches!(synth_expression(0, 1, 1, 0), Err(Error::ZeroDimension(_))));
        assert!(matches!(synth_expression(1, 0, 1, 0), Err(Error::ZeroDimension(_))));
        assert!(matches!(synth_expression(1, 1, 0, 0), Err(Error::ZeroDimension(_))));
    }

    #[test]
    fn shape_parsing() {
        assert_eq!("7129x47+25".parse::<SynthShape>().unwrap(), SynthShape::GOLUB);
        assert!("7129x47".parse::<SynthShape>().is_err());
        assert_eq!(SynthShape::GOLUB.to_string(), "7129x47+25");
    }
}
