//! `id,time,lac,cid` log lines, e.g. `1B2A7,20170901080234,37146,19618`.

use std::collections::BTreeMap;
use std::io::BufRead;

use chrono::NaiveDateTime;

use super::{SeqPoint, TowerId, TowerSequence};

const TIME_FORMAT: &str = "%Y%m%d%H%M%S";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellRecord {
    pub user_id: String,
    pub timestamp: i64,
    pub tower: TowerId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedRecords {
    pub records: Vec<CellRecord>,
    /// Malformed lines (blank lines are not counted).
    pub skipped: usize,
}

/// Parses a 14-digit `YYYYMMDDHHMMSS` time as UTC seconds.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    if s.len() != 14 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    NaiveDateTime::parse_from_str(s, TIME_FORMAT)
        .ok()
        .map(|t| t.and_utc().timestamp())
}

pub fn format_timestamp(t: i64) -> String {
    chrono::DateTime::from_timestamp(t, 0)
        .map(|d| d.format(TIME_FORMAT).to_string())
        .unwrap_or_default()
}

pub fn format_record(r: &CellRecord) -> String {
    format!(
        "{},{},{},{}",
        r.user_id,
        format_timestamp(r.timestamp),
        r.tower.lac,
        r.tower.cid
    )
}

fn parse_line(line: &str) -> Option<CellRecord> {
    let mut it = line.split(',').map(str::trim);
    let user_id = it.next().filter(|s| !s.is_empty())?;
    let timestamp = parse_timestamp(it.next()?)?;
    let lac = it.next()?.parse().ok()?;
    let cid = it.next()?.parse().ok()?;
    if it.next().is_some() {
        return None;
    }
    Some(CellRecord {
        user_id: user_id.to_string(),
        timestamp,
        tower: TowerId::new(lac, cid),
    })
}

pub fn parse_records(input: impl BufRead) -> std::io::Result<ParsedRecords> {
    let mut out = ParsedRecords::default();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line) {
            Some(r) => out.records.push(r),
            None => out.skipped += 1,
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuiltSequences {
    /// One per user, ordered by user id.
    pub sequences: Vec<TowerSequence>,
    pub duplicates: usize,
    pub conflicts: usize,
}

/// Groups records per user and sorts them by time. Exact repeats collapse;
/// for a timestamp seen with different towers the first record in input order wins.
pub fn build_sequences(records: &[CellRecord]) -> BuiltSequences {
    let mut per_user: BTreeMap<&str, Vec<(i64, usize, TowerId)>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        per_user
            .entry(&r.user_id)
            .or_default()
            .push((r.timestamp, i, r.tower));
    }
    let mut out = BuiltSequences::default();
    for (user, mut rows) in per_user {
        rows.sort_unstable_by_key(|&(t, i, _)| (t, i));
        let mut points: Vec<SeqPoint> = Vec::with_capacity(rows.len());
        for (time, _, tower) in rows {
            match points.last() {
                Some(last) if last.time == time => {
                    if last.tower == tower {
                        out.duplicates += 1;
                    } else {
                        out.conflicts += 1;
                    }
                }
                _ => points.push(SeqPoint { time, tower }),
            }
        }
        out.sequences.push(TowerSequence::new(user, points));
    }
    out
}
