//! Binary candidate-set encoding with shared gaps stored once.
//!
//! All integers little-endian. A set is laid out as
//!
//! ```text
//! u8 version | u32 id_len, id bytes | u16 M | u32 n_anchors
//! n_anchors × (i64 time, u32 segment, f64 offset, f64 x, f64 y)
//! M × (f64 raw_log_prob, f64 confidence)
//! (n_anchors - 1) × gap block
//! ```
//!
//! A gap block is `u32 body_len | u32 gap | u8 type | u16 alternatives` then,
//! for type 1 (shared by every candidate), one `path, f64 log_prob`; for
//! type 0, each alternative as `path, f64 log_prob` followed by `M × u16`
//! giving the alternative used by each candidate. A path is
//! `u32 n | n × u32 segment | f64 entry | f64 exit | f64 length`.
//!
//! A store file is `b"CTCS" | u8 version | u32 count | count × (u32 len, set)`.

use thiserror::Error;

use super::{Anchor, CandidateSet, CandidateTrajectory};
use crate::geometry::Point;
use crate::roadnet::{PathOnNetwork, SegmentId, SegmentPosition};

pub const FORMAT_VERSION: u8 = 1;
const STORE_MAGIC: &[u8; 4] = b"CTCS";
const TYPE_DIVERGENT: u8 = 0;
const TYPE_SHARED: u8 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("corrupt data at byte {offset}: {message}")]
    Corrupt { offset: usize, message: String },
    #[error("cannot encode: {0}")]
    Inconsistent(String),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i64(&mut self, v: i64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn path(&mut self, p: &PathOnNetwork) {
        self.u32(p.segments.len() as u32);
        for s in &p.segments {
            self.u32(s.0);
        }
        self.f64(p.entry_offset_m);
        self.f64(p.exit_offset_m);
        self.f64(p.length_m);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, FormatError> {
        Err(FormatError::Corrupt {
            offset: self.pos,
            message: message.into(),
        })
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.buf.len() - self.pos < n {
            return self.err(format!("need {n} more byte(s)"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn i64(&mut self) -> Result<i64, FormatError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn count(&mut self, item_size: usize) -> Result<usize, FormatError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(item_size) > self.buf.len() - self.pos {
            self.pos -= 4;
            return self.err(format!("count {n} exceeds remaining data"));
        }
        Ok(n)
    }
    fn path(&mut self) -> Result<PathOnNetwork, FormatError> {
        let n = self.count(4)?;
        let mut segments = Vec::with_capacity(n);
        for _ in 0..n {
            segments.push(SegmentId(self.u32()?));
        }
        Ok(PathOnNetwork {
            segments,
            entry_offset_m: self.f64()?,
            exit_offset_m: self.f64()?,
            length_m: self.f64()?,
        })
    }
}

/// Encodes a set. All candidates must share their anchors.
pub fn encode_candidate_set(set: &CandidateSet) -> Result<Vec<u8>, FormatError> {
    let first = set
        .candidates
        .first()
        .ok_or_else(|| FormatError::Inconsistent("empty candidate set".into()))?;
    let m = set.candidates.len();
    if m > u16::MAX as usize {
        return Err(FormatError::Inconsistent("too many candidates".into()));
    }
    let gaps = first.anchors.len().saturating_sub(1);
    for c in &set.candidates {
        if c.anchors != first.anchors || c.subpaths.len() != gaps || c.gap_log_probs.len() != gaps {
            return Err(FormatError::Inconsistent(
                "candidates disagree on anchors or gap count".into(),
            ));
        }
    }

    let mut w = Writer(Vec::new());
    w.u8(FORMAT_VERSION);
    w.u32(set.sequence_id.len() as u32);
    w.0.extend_from_slice(set.sequence_id.as_bytes());
    w.u16(m as u16);
    w.u32(first.anchors.len() as u32);
    for a in &first.anchors {
        w.i64(a.time);
        w.u32(a.position.segment.0);
        w.f64(a.position.offset_m);
        w.f64(a.point.x);
        w.f64(a.point.y);
    }
    for c in &set.candidates {
        w.f64(c.raw_log_prob);
        w.f64(c.confidence);
    }
    for g in 0..gaps {
        // distinct (path, log prob) pairs in first-use order
        let mut alts: Vec<(&PathOnNetwork, f64)> = Vec::new();
        let mut map = Vec::with_capacity(m);
        for c in &set.candidates {
            let key = (&c.subpaths[g], c.gap_log_probs[g]);
            let idx = match alts
                .iter()
                .position(|(p, s)| *p == key.0 && s.to_bits() == key.1.to_bits())
            {
                Some(i) => i,
                None => {
                    alts.push(key);
                    alts.len() - 1
                }
            };
            map.push(idx as u16);
        }
        let mut body = Writer(Vec::new());
        body.u32(g as u32);
        body.u8(if alts.len() == 1 { TYPE_SHARED } else { TYPE_DIVERGENT });
        body.u16(alts.len() as u16);
        for (p, s) in &alts {
            body.path(p);
            body.f64(*s);
        }
        if alts.len() > 1 {
            for i in map {
                body.u16(i);
            }
        }
        w.u32(body.0.len() as u32);
        w.0.extend_from_slice(&body.0);
    }
    Ok(w.0)
}

pub fn decode_candidate_set(bytes: &[u8]) -> Result<CandidateSet, FormatError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let version = r.u8()?;
    if version != FORMAT_VERSION {
        r.pos = 0;
        return r.err(format!("unsupported version {version}"));
    }
    let id_len = r.count(1)?;
    let id_at = r.pos;
    let sequence_id = match std::str::from_utf8(r.take(id_len)?) {
        Ok(s) => s.to_string(),
        Err(_) => {
            r.pos = id_at;
            return r.err("sequence id is not UTF-8");
        }
    };
    let m = r.u16()? as usize;
    if m == 0 {
        r.pos -= 2;
        return r.err("candidate count is zero");
    }
    let n = r.count(36)?;
    let mut anchors = Vec::with_capacity(n);
    for _ in 0..n {
        let time = r.i64()?;
        let segment = SegmentId(r.u32()?);
        let offset = r.f64()?;
        let x = r.f64()?;
        let y = r.f64()?;
        anchors.push(Anchor {
            time,
            position: SegmentPosition::new(segment, offset),
            point: Point::new(x, y),
        });
    }
    let mut candidates: Vec<CandidateTrajectory> = Vec::with_capacity(m);
    for _ in 0..m {
        let raw_log_prob = r.f64()?;
        let confidence = r.f64()?;
        candidates.push(CandidateTrajectory {
            anchors: anchors.clone(),
            subpaths: Vec::new(),
            gap_log_probs: Vec::new(),
            raw_log_prob,
            confidence,
        });
    }
    for g in 0..n.saturating_sub(1) {
        let len = r.u32()? as usize;
        let start = r.pos;
        let gap = r.u32()?;
        if gap as usize != g {
            r.pos -= 4;
            return r.err(format!("expected gap {g}, found {gap}"));
        }
        let kind = r.u8()?;
        let count = r.u16()? as usize;
        let mut alts = Vec::with_capacity(count);
        for _ in 0..count {
            let p = r.path()?;
            let s = r.f64()?;
            alts.push((p, s));
        }
        match (kind, count) {
            (TYPE_SHARED, 1) => {
                for c in &mut candidates {
                    c.subpaths.push(alts[0].0.clone());
                    c.gap_log_probs.push(alts[0].1);
                }
            }
            (TYPE_DIVERGENT, 2..) => {
                for c in &mut candidates {
                    let at = r.pos;
                    let i = r.u16()? as usize;
                    let Some((p, s)) = alts.get(i) else {
                        r.pos = at;
                        return r.err(format!("alternative {i} out of range"));
                    };
                    c.subpaths.push(p.clone());
                    c.gap_log_probs.push(*s);
                }
            }
            _ => {
                r.pos = start + 4;
                return r.err(format!("bad block type {kind} with {count} alternative(s)"));
            }
        }
        if r.pos - start != len {
            r.pos = start;
            return r.err("block length mismatch");
        }
    }
    if r.pos != bytes.len() {
        return r.err("trailing bytes");
    }
    Ok(CandidateSet {
        sequence_id,
        candidates,
    })
}

pub fn write_store(sets: &[CandidateSet]) -> Result<Vec<u8>, FormatError> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(STORE_MAGIC);
    w.u8(FORMAT_VERSION);
    w.u32(sets.len() as u32);
    for s in sets {
        let b = encode_candidate_set(s)?;
        w.u32(b.len() as u32);
        w.0.extend_from_slice(&b);
    }
    Ok(w.0)
}

pub fn read_store(bytes: &[u8]) -> Result<Vec<CandidateSet>, FormatError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != STORE_MAGIC {
        r.pos = 0;
        return r.err("not a candidate store");
    }
    let version = r.u8()?;
    if version != FORMAT_VERSION {
        r.pos -= 1;
        return r.err(format!("unsupported version {version}"));
    }
    let n = r.count(4)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.count(1)?;
        let at = r.pos;
        let body = r.take(len)?;
        out.push(decode_candidate_set(body).map_err(|e| match e {
            FormatError::Corrupt { offset, message } => FormatError::Corrupt {
                offset: at + offset,
                message,
            },
            other => other,
        })?);
    }
    if r.pos != bytes.len() {
        return r.err("trailing bytes");
    }
    Ok(out)
}

/// Human-readable JSON rendering of a set.
pub fn to_debug_json(set: &CandidateSet) -> String {
    serde_json::to_string_pretty(set).expect("candidate sets always serialize")
}
