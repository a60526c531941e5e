//! Length-prefixed frames exchanged between the master and worker processes.
//!
//! ```text
//! frame   := len:u32le tag:u8 payload[len]
//! u64     := 8 bytes little-endian       f64 := IEEE-754 bits as u64
//! str     := len:u64 utf8[len]
//!
//! DATASET    (1) := ncols:u64 n:u64 { name:str values:f64[n] }[ncols]
//! SPEC       (2) := kind:u64 summary:u64 ncols:u64 { column:str }[ncols]
//! PLAN_BLOCK (3) := rank:u64 start:u64 stype:u64 plan-dump
//!                   (32-byte plan header with R = block length, then indices)
//! RESULTS    (4) := rank:u64 start:u64 count:u64 p:u64 values:f64[count*p]
//! ERROR      (5) := rank:u64 resample:u64 (u64::MAX if none) message:str
//! SHUTDOWN   (6) := empty
//! ```
//!
//! `len` counts payload bytes only, excluding the tag.

use std::io::{self, Read, Write};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::plan::{read_dump_header, write_dump_header, Stype, PLAN_HEADER_BYTES};
use crate::statistic::{StatisticSpec, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Tag {
    Dataset = 1,
    Spec = 2,
    PlanBlock = 3,
    Results = 4,
    Error = 5,
    Shutdown = 6,
}

impl Tag {
    pub fn from_byte(b: u8) -> Option<Tag> {
        Some(match b {
            1 => Tag::Dataset,
            2 => Tag::Spec,
            3 => Tag::PlanBlock,
            4 => Tag::Results,
            5 => Tag::Error,
            6 => Tag::Shutdown,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub tag: Tag,
    pub payload: Vec<u8>,
}

pub const NO_RESAMPLE: u64 = u64::MAX;

pub fn frame_header(tag: Tag, payload_len: usize) -> Result<[u8; 5]> {
    let len = u32::try_from(payload_len).map_err(|_| Error::FrameTooLarge {
        size: payload_len as u64,
    })?;
    let mut header = [0u8; 5];
    header[..4].copy_from_slice(&len.to_le_bytes());
    header[4] = tag as u8;
    Ok(header)
}

pub fn write_frame<W: Write + ?Sized>(out: &mut W, tag: Tag, payload: &[u8]) -> io::Result<()> {
    let header = frame_header(tag, payload.len()).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    out.write_all(&header)?;
    out.write_all(payload)?;
    out.flush()
}

/// Reads one frame; `Ok(None)` on a clean end of stream before a header.
pub fn read_frame<R: Read + ?Sized>(input: &mut R) -> io::Result<Option<Frame>> {
    let mut header = [0u8; 5];
    let mut filled = 0;
    while filled < header.len() {
        match input.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(m) => filled += m,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let len = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
    let tag = Tag::from_byte(header[4])
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("unknown tag {}", header[4])))?;
    let mut payload = vec![0u8; len];
    input.read_exact(&mut payload)?;
    Ok(Some(Frame { tag, payload }))
}

#[derive(Debug, Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn with_capacity(bytes: usize) -> Self {
        Self {
            buf: Vec::with_capacity(bytes),
        }
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.u64(v.to_bits())
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
        self
    }

    pub fn f64s(&mut self, vs: &[f64]) -> &mut Self {
        self.buf.reserve(vs.len() * 8);
        for &v in vs {
            self.f64(v);
        }
        self
    }

    pub fn u64s(&mut self, vs: &[u64]) -> &mut Self {
        self.buf.reserve(vs.len() * 8);
        for &v in vs {
            self.u64(v);
        }
        self
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(b);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Decoder<'a> {
    buf: &'a [u8],
}

fn malformed(what: &str) -> Error {
    Error::Protocol {
        rank: usize::MAX,
        message: format!("malformed {what}"),
    }
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.buf.len() < len {
            return Err(malformed("payload (truncated)"));
        }
        let (head, rest) = self.buf.split_at(len);
        self.buf = rest;
        Ok(head)
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| malformed("length"))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub fn str(&mut self) -> Result<String> {
        let len = self.usize()?;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| malformed("string"))
    }

    pub fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = self.take(count.checked_mul(8).ok_or_else(|| malformed("length"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }

    pub fn u64s(&mut self, count: usize) -> Result<Vec<u64>> {
        let bytes = self.take(count.checked_mul(8).ok_or_else(|| malformed("length"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn rest(&mut self) -> &'a [u8] {
        std::mem::take(&mut self.buf)
    }

    pub fn finish(self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(malformed("payload (trailing bytes)"))
        }
    }
}

pub fn encode_dataset(data: &Dataset) -> Vec<u8> {
    let mut enc = Encoder::with_capacity(16 + data.num_columns() * (16 + data.n() * 8));
    enc.u64(data.num_columns() as u64).u64(data.n() as u64);
    for col in data.columns() {
        enc.str(col.name()).f64s(col.values());
    }
    enc.finish()
}

pub fn decode_dataset(payload: &[u8]) -> Result<Dataset> {
    let mut dec = Decoder::new(payload);
    let ncols = dec.usize()?;
    let n = dec.usize()?;
    let mut columns = Vec::with_capacity(ncols.min(1 << 16));
    for _ in 0..ncols {
        let name = dec.str()?;
        columns.push((name, dec.f64s(n)?));
    }
    dec.finish()?;
    Dataset::new(columns)
}

const KIND_SCALAR: u64 = 0;
const KIND_RATIO: u64 = 1;
const KIND_PER_COLUMN: u64 = 2;

fn summary_code(s: Summary) -> u64 {
    match s {
        Summary::Mean => 0,
        Summary::Median => 1,
        Summary::StdDev => 2,
    }
}

fn summary_from(code: u64) -> Result<Summary> {
    Ok(match code {
        0 => Summary::Mean,
        1 => Summary::Median,
        2 => Summary::StdDev,
        _ => return Err(malformed("summary code")),
    })
}

pub fn encode_spec(spec: &StatisticSpec) -> Vec<u8> {
    let mut enc = Encoder::default();
    match spec {
        StatisticSpec::Scalar { summary, column } => {
            enc.u64(KIND_SCALAR).u64(summary_code(*summary));
            match column {
                Some(c) => enc.u64(1).str(c),
                None => enc.u64(0),
            };
        }
        StatisticSpec::WeightedRatio {
            numerator,
            denominator,
        } => {
            enc.u64(KIND_RATIO).u64(0).u64(2).str(numerator).str(denominator);
        }
        StatisticSpec::PerColumn { summary, columns } => {
            enc.u64(KIND_PER_COLUMN)
                .u64(summary_code(*summary))
                .u64(columns.len() as u64);
            for c in columns {
                enc.str(c);
            }
        }
    }
    enc.finish()
}

pub fn decode_spec(payload: &[u8]) -> Result<StatisticSpec> {
    let mut dec = Decoder::new(payload);
    let kind = dec.u64()?;
    let summary = summary_from(dec.u64()?)?;
    let ncols = dec.usize()?;
    let mut columns = Vec::with_capacity(ncols.min(1 << 16));
    for _ in 0..ncols {
        columns.push(dec.str()?);
    }
    dec.finish()?;
    match (kind, columns.len()) {
        (KIND_SCALAR, 0) => Ok(StatisticSpec::Scalar { summary, column: None }),
        (KIND_SCALAR, 1) => Ok(StatisticSpec::Scalar {
            summary,
            column: columns.pop(),
        }),
        (KIND_RATIO, 2) => {
            let denominator = columns.pop().unwrap();
            let numerator = columns.pop().unwrap();
            Ok(StatisticSpec::WeightedRatio {
                numerator,
                denominator,
            })
        }
        (KIND_PER_COLUMN, _) => Ok(StatisticSpec::PerColumn { summary, columns }),
        _ => Err(malformed("statistic")),
    }
}

fn stype_code(s: Stype) -> u64 {
    match s {
        Stype::Indices => 0,
        Stype::Frequencies => 1,
        Stype::Weights => 2,
    }
}

fn stype_from(code: u64) -> Result<Stype> {
    Stype::ALL
        .get(usize::try_from(code).unwrap_or(usize::MAX))
        .copied()
        .ok_or_else(|| malformed("stype"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanBlockMsg {
    pub rank: usize,
    pub start: usize,
    pub stype: Stype,
    pub n: usize,
    pub seed: u64,
    pub rows: Vec<u64>,
}

impl PlanBlockMsg {
    pub fn len(&self) -> usize {
        self.rows.len().checked_div(self.n).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Encodes a plan block straight from a borrowed slice of plan rows.
pub fn encode_plan_block(rank: usize, start: usize, stype: Stype, n: usize, seed: u64, rows: &[u64]) -> Vec<u8> {
    let len = rows.len() / n.max(1);
    let mut header = Vec::with_capacity(PLAN_HEADER_BYTES as usize);
    write_dump_header(&mut header, n as u64, len as u64, seed).expect("writing to a Vec");
    let mut enc = Encoder::with_capacity(24 + header.len() + rows.len() * 8);
    enc.u64(rank as u64)
        .u64(start as u64)
        .u64(stype_code(stype))
        .bytes(&header)
        .u64s(rows);
    enc.finish()
}

pub fn decode_plan_block(payload: &[u8]) -> Result<PlanBlockMsg> {
    let mut dec = Decoder::new(payload);
    let rank = dec.usize()?;
    let start = dec.usize()?;
    let stype = stype_from(dec.u64()?)?;
    let mut rest = dec.rest();
    let (n, len, seed) = read_dump_header(&mut rest)?;
    let mut dec = Decoder::new(rest);
    let count = n.checked_mul(len).ok_or_else(|| malformed("plan length"))?;
    let rows = dec.u64s(count)?;
    dec.finish()?;
    if let Some(&index) = rows.iter().find(|&&i| i >= n as u64) {
        return Err(Error::IndexOutOfRange { index, n });
    }
    Ok(PlanBlockMsg {
        rank,
        start,
        stype,
        n,
        seed,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsMsg {
    pub rank: usize,
    pub start: usize,
    pub count: usize,
    pub p: usize,
    pub values: Vec<f64>,
}

pub fn encode_results(msg: &ResultsMsg) -> Vec<u8> {
    let mut enc = Encoder::with_capacity(32 + msg.values.len() * 8);
    enc.u64(msg.rank as u64)
        .u64(msg.start as u64)
        .u64(msg.count as u64)
        .u64(msg.p as u64)
        .f64s(&msg.values);
    enc.finish()
}

pub fn decode_results(payload: &[u8]) -> Result<ResultsMsg> {
    let mut dec = Decoder::new(payload);
    let rank = dec.usize()?;
    let start = dec.usize()?;
    let count = dec.usize()?;
    let p = dec.usize()?;
    let values = dec.f64s(count.checked_mul(p).ok_or_else(|| malformed("results length"))?)?;
    dec.finish()?;
    Ok(ResultsMsg {
        rank,
        start,
        count,
        p,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorMsg {
    pub rank: usize,
    pub resample: Option<usize>,
    pub message: String,
}

pub fn encode_error(msg: &ErrorMsg) -> Vec<u8> {
    let mut enc = Encoder::default();
    enc.u64(msg.rank as u64)
        .u64(msg.resample.map_or(NO_RESAMPLE, |r| r as u64))
        .str(&msg.message);
    enc.finish()
}

pub fn decode_error(payload: &[u8]) -> Result<ErrorMsg> {
    let mut dec = Decoder::new(payload);
    let rank = dec.usize()?;
    let resample = dec.u64()?;
    let message = dec.str()?;
    dec.finish()?;
    Ok(ErrorMsg {
        rank,
        resample: (resample != NO_RESAMPLE).then_some(resample as usize),
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_layout_is_bit_exact() {
        let mut buf = Vec::new();
        write_frame(&mut buf, Tag::Results, &[0xAA, 0xBB, 0xCC]).unwrap();
        assert_eq!(buf, [3, 0, 0, 0, 4, 0xAA, 0xBB, 0xCC]);
        let mut buf = Vec::new();
        write_frame(&mut buf, Tag::Shutdown, &[]).unwrap();
        assert_eq!(buf, [0, 0, 0, 0, 6]);
    }

    #[test]
    fn frames_stream() {
        let mut buf = Vec::new();
        write_frame(&mut buf, Tag::Dataset, b"abc").unwrap();
        write_frame(&mut buf, Tag::Shutdown, b"").unwrap();
        let mut r = buf.as_slice();
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), Frame { tag: Tag::Dataset, payload: b"abc".to_vec() });
        assert_eq!(read_frame(&mut r).unwrap().unwrap().tag, Tag::Shutdown);
        assert!(read_frame(&mut r).unwrap().is_none());
    }

    #[test]
    fn truncated_and_unknown_frames() {
        let mut r: &[u8] = &[5, 0, 0, 0, 1, 1, 2];
        assert_eq!(read_frame(&mut r).unwrap_err().kind(), io::ErrorKind::UnexpectedEof);
        let mut r: &[u8] = &[0, 0];
        assert_eq!(read_frame(&mut r).unwrap_err().kind(), io::ErrorKind::UnexpectedEof);
        let mut r: &[u8] = &[0, 0, 0, 0, 99];
        assert_eq!(read_frame(&mut r).unwrap_err().kind(), io::ErrorKind::InvalidData);
    }

    #[test]
    fn oversized_frames_rejected() {
        assert!(matches!(
            frame_header(Tag::PlanBlock, u32::MAX as usize + 1),
            Err(Error::FrameTooLarge { .. })
        ));
        assert!(frame_header(Tag::PlanBlock, u32::MAX as usize).is_ok());
    }

    #[test]
    fn dataset_payload_layout() {
        let d = Dataset::new([("a", vec![1.5])]).unwrap();
        let payload = encode_dataset(&d);
        let mut expect = Vec::new();
        expect.extend_from_slice(&1u64.to_le_bytes());
        expect.extend_from_slice(&1u64.to_le_bytes());
        expect.extend_from_slice(&1u64.to_le_bytes());
        expect.push(b'a');
        expect.extend_from_slice(&1.5f64.to_bits().to_le_bytes());
        assert_eq!(payload, expect);
        assert_eq!(decode_dataset(&payload).unwrap(), d);
    }

    #[test]
    fn plan_block_embeds_dump_header() {
        let payload = encode_plan_block(2, 10, Stype::Weights, 3, 42, &[0, 1, 2, 2, 2, 0]);
        assert_eq!(payload.len(), 24 + 32 + 6 * 8);
        assert_eq!(&payload[24..28], b"PBPL");
        let msg = decode_plan_block(&payload).unwrap();
        assert_eq!(
            msg,
            PlanBlockMsg { rank: 2, start: 10, stype: Stype::Weights, n: 3, seed: 42, rows: vec![0, 1, 2, 2, 2, 0] }
        );
        assert_eq!(msg.len(), 2);
    }

    #[test]
    fn plan_block_rejects_bad_indices() {
        let payload = encode_plan_block(0, 0, Stype::Indices, 2, 0, &[0, 5]);
        assert!(matches!(decode_plan_block(&payload), Err(Error::IndexOutOfRange { index: 5, n: 2 })));
    }

    #[test]
    fn spec_and_messages_round_trip() {
        for spec in [
            StatisticSpec::median(),
            "sd:col".parse().unwrap(),
            StatisticSpec::ratio("x", "u"),
            StatisticSpec::per_column(Summary::Mean, ["a", "b"]),
        ] {
            assert_eq!(decode_spec(&encode_spec(&spec)).unwrap(), spec);
        }
        let res = ResultsMsg { rank: 1, start: 4, count: 2, p: 2, values: vec![1.0, -0.0, f64::MIN_POSITIVE, 3.0] };
        let back = decode_results(&encode_results(&res)).unwrap();
        assert_eq!(back.values[1].to_bits(), (-0.0f64).to_bits());
        assert_eq!(back, res);
        for resample in [None, Some(17)] {
            let err = ErrorMsg { rank: 3, resample, message: "boom".into() };
            assert_eq!(decode_error(&encode_error(&err)).unwrap(), err);
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut payload = encode_results(&ResultsMsg { rank: 0, start: 0, count: 0, p: 1, values: vec![] });
        payload.push(0);
        assert!(decode_results(&payload).is_err());
    }
}
