//! Resample plans: every bootstrap index set, generated once on the master.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::CounterRng;

/// Width of one stored index, in memory and in the size model.
pub const INDEX_BYTES: u64 = 8;
/// Size of the plan dump header: magic, version, n, R, seed.
pub const PLAN_HEADER_BYTES: u64 = 32;
pub const PLAN_MAGIC: [u8; 4] = *b"PBPL";
pub const PLAN_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RngConfig {
    pub seed: u64,
}

impl RngConfig {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn algorithm(&self) -> &'static str {
        crate::rng::ALGORITHM
    }
}

/// How a resample is presented to the statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Stype {
    #[default]
    Indices,
    Frequencies,
    Weights,
}

impl Stype {
    pub const ALL: [Stype; 3] = [Stype::Indices, Stype::Frequencies, Stype::Weights];

    pub fn as_str(self) -> &'static str {
        match self {
            Stype::Indices => "indices",
            Stype::Frequencies => "frequencies",
            Stype::Weights => "weights",
        }
    }

    pub fn code(self) -> char {
        match self {
            Stype::Indices => 'i',
            Stype::Frequencies => 'f',
            Stype::Weights => 'w',
        }
    }
}

impl fmt::Display for Stype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stype {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "i" | "indices" => Ok(Stype::Indices),
            "f" | "frequencies" => Ok(Stype::Frequencies),
            "w" | "weights" => Ok(Stype::Weights),
            _ => Err(format!("unknown stype {s:?} (expected i, f or w)")),
        }
    }
}

/// `R` rows of `n` indices in `[0, n)`, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResamplePlan {
    n: usize,
    resamples: usize,
    rng: RngConfig,
    indices: Vec<u64>,
}

impl ResamplePlan {
    /// Draws all rows in resample order from one stream.
    pub fn generate(n: usize, resamples: usize, rng: RngConfig) -> Result<Self> {
        Self::generate_within(n, resamples, rng, None)
    }

    /// Like [`ResamplePlan::generate`], refusing plans whose size model
    /// exceeds `ceiling` bytes.
    pub fn generate_within(
        n: usize,
        resamples: usize,
        rng: RngConfig,
        ceiling: Option<u64>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::ZeroDimension("n"));
        }
        if resamples == 0 {
            return Err(Error::ZeroDimension("R"));
        }
        let bytes = plan_bytes(n, resamples)?;
        if let Some(ceiling) = ceiling {
            if bytes > ceiling {
                return Err(Error::PlanTooLarge {
                    required: bytes,
                    ceiling,
                });
            }
        }
        let total = n
            .checked_mul(resamples)
            .ok_or(Error::ArithmeticOverflow("plan length"))?;
        let mut stream = CounterRng::new(rng.seed);
        let bound = n as u64;
        let mut indices = Vec::with_capacity(total);
        indices.extend((0..total).map(|_| stream.below(bound)));
        Ok(Self {
            n,
            resamples,
            rng,
            indices,
        })
    }

    pub fn from_rows(n: usize, rng: RngConfig, rows: Vec<Vec<u64>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::ZeroDimension("n"));
        }
        let resamples = rows.len();
        let mut indices = Vec::with_capacity(n * resamples);
        for row in rows {
            if row.len() != n {
                return Err(Error::ViewLength {
                    expected: n,
                    found: row.len(),
                });
            }
            if let Some(&index) = row.iter().find(|&&i| i >= n as u64) {
                return Err(Error::IndexOutOfRange { index, n });
            }
            indices.extend(row);
        }
        Ok(Self {
            n,
            resamples,
            rng,
            indices,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn resamples(&self) -> usize {
        self.resamples
    }

    pub fn rng(&self) -> RngConfig {
        self.rng
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.indices[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, u64> {
        self.indices.chunks_exact(self.n)
    }

    /// Rows `[start, start + len)` as one contiguous slice.
    pub fn block(&self, start: usize, len: usize) -> &[u64] {
        &self.indices[start * self.n..(start + len) * self.n]
    }

    pub fn as_flat(&self) -> &[u64] {
        &self.indices
    }

    /// Writes the dump format: 32-byte header then little-endian indices.
    pub fn write_dump<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        write_dump_header(out, self.n as u64, self.resamples as u64, self.rng.seed)?;
        write_indices(out, &self.indices)
    }

    pub fn read_dump<R: Read>(input: &mut R) -> Result<Self> {
        let (n, resamples, seed) = read_dump_header(input)?;
        let total = n
            .checked_mul(resamples)
            .ok_or(Error::ArithmeticOverflow("plan length"))?;
        let indices = read_indices(input, total, n)?;
        Ok(Self {
            n,
            resamples,
            rng: RngConfig::new(seed),
            indices,
        })
    }
}

pub(crate) fn write_dump_header<W: Write>(out: &mut W, n: u64, r: u64, seed: u64) -> std::io::Result<()> {
    let mut header = [0u8; PLAN_HEADER_BYTES as usize];
    header[0..4].copy_from_slice(&PLAN_MAGIC);
    header[4..8].copy_from_slice(&PLAN_VERSION.to_le_bytes());
    header[8..16].copy_from_slice(&n.to_le_bytes());
    header[16..24].copy_from_slice(&r.to_le_bytes());
    header[24..32].copy_from_slice(&seed.to_le_bytes());
    out.write_all(&header)
}

pub(crate) fn write_indices<W: Write>(out: &mut W, indices: &[u64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(indices.len().min(1 << 16) * 8);
    for chunk in indices.chunks(1 << 16) {
        buf.clear();
        for &i in chunk {
            buf.extend_from_slice(&i.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub(crate) fn read_dump_header<R: Read>(input: &mut R) -> Result<(usize, usize, u64)> {
    let mut header = [0u8; PLAN_HEADER_BYTES as usize];
    input
        .read_exact(&mut header)
        .map_err(|e| Error::PlanFormat(format!("short header: {e}")))?;
    if header[0..4] != PLAN_MAGIC {
        return Err(Error::PlanFormat("bad magic".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != PLAN_VERSION {
        return Err(Error::PlanFormat(format!("unsupported version {version}")));
    }
    let word = |at: usize| u64::from_le_bytes(header[at..at + 8].try_into().unwrap());
    let n = usize::try_from(word(8)).map_err(|_| Error::ArithmeticOverflow("n"))?;
    let r = usize::try_from(word(16)).map_err(|_| Error::ArithmeticOverflow("R"))?;
    Ok((n, r, word(24)))
}

pub(crate) fn read_indices<R: Read>(input: &mut R, total: usize, n: usize) -> Result<Vec<u64>> {
    let mut indices = Vec::with_capacity(total);
    let mut buf = [0u8; 8];
    for _ in 0..total {
        input
            .read_exact(&mut buf)
            .map_err(|e| Error::PlanFormat(format!("truncated indices: {e}")))?;
        let index = u64::from_le_bytes(buf);
        if index >= n as u64 {
            return Err(Error::IndexOutOfRange { index, n });
        }
        indices.push(index);
    }
    Ok(indices)
}

/// Size model of a plan: `R * n * INDEX_BYTES + PLAN_HEADER_BYTES`.
pub fn plan_bytes(n: usize, resamples: usize) -> Result<u64> {
    (n as u64)
        .checked_mul(resamples as u64)
        .and_then(|c| c.checked_mul(INDEX_BYTES))
        .and_then(|b| b.checked_add(PLAN_HEADER_BYTES))
        .ok_or(Error::ArithmeticOverflow("plan bytes"))
}

/// A single resample as seen by the statistic.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleView {
    Indices(Vec<u64>),
    Frequencies(Vec<u64>),
    Weights(Vec<f64>),
}

impl SampleView {
    pub fn from_row(row: &[u64], n: usize, stype: Stype) -> Result<Self> {
        Ok(match stype {
            Stype::Indices => {
                if let Some(&index) = row.iter().find(|&&i| i >= n as u64) {
                    return Err(Error::IndexOutOfRange { index, n });
                }
                SampleView::Indices(row.to_vec())
            }
            Stype::Frequencies => SampleView::Frequencies(indices_to_frequencies(row, n)?),
            Stype::Weights => SampleView::Weights(frequencies_to_weights(&indices_to_frequencies(row, n)?)?),
        })
    }

    /// The view that reproduces the original data: `0..n`, all-ones, or `1/n`.
    pub fn identity(stype: Stype, n: usize) -> Self {
        match stype {
            Stype::Indices => SampleView::Indices((0..n as u64).collect()),
            Stype::Frequencies => SampleView::Frequencies(vec![1; n]),
            Stype::Weights => SampleView::Weights(vec![1.0 / n as f64; n]),
        }
    }

    pub fn stype(&self) -> Stype {
        match self {
            SampleView::Indices(_) => Stype::Indices,
            SampleView::Frequencies(_) => Stype::Frequencies,
            SampleView::Weights(_) => Stype::Weights,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SampleView::Indices(v) | SampleView::Frequencies(v) => v.len(),
            SampleView::Weights(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Occurrence count of each observation in a resample row.
pub fn indices_to_frequencies(row: &[u64], n: usize) -> Result<Vec<u64>> {
    let mut freq = vec![0u64; n];
    count_into(row, &mut freq)?;
    Ok(freq)
}

pub(crate) fn count_into(row: &[u64], freq: &mut [u64]) -> Result<()> {
    freq.fill(0);
    let n = freq.len();
    for &i in row {
        match freq.get_mut(i as usize) {
            Some(slot) if i < n as u64 => *slot += 1,
            _ => return Err(Error::IndexOutOfRange { index: i, n }),
        }
    }
    Ok(())
}

/// `w_j = f_j / sum(f)`.
pub fn frequencies_to_weights(freq: &[u64]) -> Result<Vec<f64>> {
    let mut w = vec![0.0; freq.len()];
    weights_into(freq, &mut w)?;
    Ok(w)
}

pub(crate) fn weights_into(freq: &[u64], w: &mut [f64]) -> Result<()> {
    let total: u64 = freq.iter().sum();
    if total == 0 {
        return Err(Error::ZeroTotal);
    }
    let total = total as f64;
    for (wj, &fj) in w.iter_mut().zip(freq) {
        *wj = fj as f64 / total;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_observation_plan() {
        let plan = ResamplePlan::generate(1, 3, RngConfig::new(123)).unwrap();
        assert_eq!(plan.rows().collect::<Vec<_>>(), vec![&[0u64][..]; 3]);
    }

    #[test]
    fn golden_plans() {
        // Frozen from an independent reference implementation of the generator.
        let plan = ResamplePlan::generate(5, 2, RngConfig::new(42)).unwrap();
        assert_eq!(plan.row(0), &[3, 0, 1, 1, 0]);
        assert_eq!(plan.row(1), &[4, 1, 4, 1, 3]);

        let plan = ResamplePlan::generate(7, 3, RngConfig::new(0)).unwrap();
        assert_eq!(plan.row(0), &[6, 3, 0, 6, 0, 2, 1]);
        assert_eq!(plan.row(1), &[5, 1, 6, 2, 5, 3, 3]);
        assert_eq!(plan.row(2), &[4, 3, 3, 5, 1, 5, 5]);

        let plan = ResamplePlan::generate(3, 2, RngConfig::new(u64::MAX)).unwrap();
        assert_eq!(plan.as_flat(), &[2, 2, 0, 1, 2, 2]);
    }

    #[test]
    fn regeneration_is_identical() {
        let a = ResamplePlan::generate(17, 40, RngConfig::new(5)).unwrap();
        let b = ResamplePlan::generate(17, 40, RngConfig::new(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(matches!(
            ResamplePlan::generate(0, 1, RngConfig::default()),
            Err(Error::ZeroDimension(_))
        ));
        assert!(matches!(
            ResamplePlan::generate(1, 0, RngConfig::default()),
            Err(Error::ZeroDimension(_))
        ));
    }

    #[test]
    fn ceiling_is_enforced() {
        let need = plan_bytes(10, 10).unwrap();
        assert!(ResamplePlan::generate_within(10, 10, RngConfig::new(1), Some(need)).is_ok());
        match ResamplePlan::generate_within(10, 10, RngConfig::new(1), Some(need - 1)) {
            Err(Error::PlanTooLarge { required, ceiling }) => {
                assert_eq!((required, ceiling), (need, need - 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn frequencies() {
        assert_eq!(indices_to_frequencies(&[0, 0, 2], 3).unwrap(), [2, 0, 1]);
        assert_eq!(indices_to_frequencies(&[0, 1, 2], 3).unwrap(), [1, 1, 1]);
        assert_eq!(indices_to_frequencies(&[4, 4, 4, 4, 4], 5).unwrap(), [0, 0, 0, 0, 5]);
        assert!(matches!(
            indices_to_frequencies(&[0, 3], 3),
            Err(Error::IndexOutOfRange { index: 3, n: 3 })
        ));
    }

    #[test]
    fn weights() {
        assert_eq!(frequencies_to_weights(&[2, 0, 1]).unwrap(), [2.0 / 3.0, 0.0, 1.0 / 3.0]);
        assert_eq!(frequencies_to_weights(&[1, 1, 1, 1]).unwrap(), [0.25; 4]);
        assert_eq!(frequencies_to_weights(&[5]).unwrap(), [1.0]);
        assert!(matches!(frequencies_to_weights(&[0, 0]), Err(Error::ZeroTotal)));
        assert!(matches!(frequencies_to_weights(&[]), Err(Error::ZeroTotal)));
    }

    #[test]
    fn size_model() {
        assert_eq!(plan_bytes(1, 1).unwrap(), 8 + PLAN_HEADER_BYTES);
        assert_eq!(plan_bytes(7129, 75_000).unwrap(), 7129 * 75_000 * 8 + 32);
        assert_eq!(plan_bytes(7129, 75_000).unwrap(), 4_277_400_032);
        assert!(matches!(
            plan_bytes(1 << 32, 1 << 32),
            Err(Error::ArithmeticOverflow(_))
        ));
    }

    #[test]
    fn dump_round_trip() {
        let plan = ResamplePlan::generate(6, 4, RngConfig::new(77)).unwrap();
        let mut buf = Vec::new();
        plan.write_dump(&mut buf).unwrap();
        assert_eq!(buf.len() as u64, plan_bytes(6, 4).unwrap());
        assert_eq!(&buf[0..4], b"PBPL");
        assert_eq!(u64::from_le_bytes(buf[24..32].try_into().unwrap()), 77);
        assert_eq!(ResamplePlan::read_dump(&mut buf.as_slice()).unwrap(), plan);

        buf[0] = b'X';
        assert!(matches!(
            ResamplePlan::read_dump(&mut buf.as_slice()),
            Err(Error::PlanFormat(_))
        ));
    }

    #[test]
    fn views_from_row() {
        let row = [0u64, 0, 2];
        assert_eq!(
            SampleView::from_row(&row, 3, Stype::Frequencies).unwrap(),
            SampleView::Frequencies(vec![2, 0, 1])
        );
        assert_eq!(SampleView::identity(Stype::Weights, 4), SampleView::Weights(vec![0.25; 4]));
        assert_eq!(SampleView::identity(Stype::Indices, 3).len(), 3);
    }

    #[test]
    fn stype_parsing() {
        assert_eq!("w".parse::<Stype>().unwrap(), Stype::Weights);
        assert_eq!("indices".parse::<Stype>().unwrap(), Stype::Indices);
        assert!("x".parse::<Stype>().is_err());
    }
}
