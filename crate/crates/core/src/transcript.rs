//! CSV persistence of campaign histories and constraint-model error records.
//!
//! Transcript columns: `iteration`, one column per knob, `objective`,
//! `constraint_value`, `is_placeholder`, `feasible`, `submit_time`,
//! `complete_time`, `agent_id`. Missing values are empty cells. Floats use the
//! shortest representation that round-trips, so identical runs give identical bytes.

use std::io::{Read, Write};
use std::path::Path;

use crate::constraint::MapeRecord;
use crate::error::{Error, Result};
use crate::knobspace::{Configuration, KnobSpace};
use crate::optimizers::HistoryEntry;

const LEADING: [&str; 1] = ["iteration"];
const TRAILING: [&str; 7] = [
    "objective",
    "constraint_value",
    "is_placeholder",
    "feasible",
    "submit_time",
    "complete_time",
    "agent_id",
];

pub const MAPE_COLUMNS: [&str; 8] = [
    "iteration",
    "predicted",
    "observed",
    "ape",
    "predicted_at",
    "observed_at",
    "trained_on",
    "observation_index",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn transcript_header(space: &KnobSpace) -> Vec<String> {
    LEADING
        .iter()
        .map(|s| s.to_string())
        .chain(space.knobs().iter().map(|k| k.name.clone()))
        .chain(TRAILING.iter().map(|s| s.to_string()))
        .collect()
}

pub fn write_transcript<W: Write>(out: W, space: &KnobSpace, history: &[HistoryEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(transcript_header(space))?;
    for e in history {
        let mut row = vec![e.iteration.to_string()];
        row.extend(e.config.0.iter().map(|v| v.to_string()));
        row.push(e.objective.to_string());
        row.push(opt(e.constraint_value));
        row.push(e.is_placeholder.to_string());
        row.push(e.feasible.to_string());
        row.push(e.submit_time.to_string());
        row.push(opt(e.complete_time));
        row.push(e.agent_id.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_transcript(path: &Path, space: &KnobSpace, history: &[HistoryEntry]) -> Result<()> {
    write_transcript(std::fs::File::create(path)?, space, history)
}

/// A transcript read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub knob_names: Vec<String>,
    pub entries: Vec<HistoryEntry>,
}

impl Transcript {
    pub fn agent_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.entries.iter().map(|e| e.agent_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

fn parse<T: std::str::FromStr>(field: &str, column: &str, line: u64) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Domain(format!("line {line}: bad value `{field}` in column `{column}`")))
}

fn parse_opt(field: &str, column: &str, line: u64) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse(field, column, line).map(Some)
    }
}

pub fn read_transcript<R: Read>(input: R) -> Result<Transcript> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let bad_header = || Error::Domain(format!("unexpected transcript header {header:?}"));
    if header.len() < LEADING.len() + TRAILING.len() || header[0] != LEADING[0] {
        return Err(bad_header());
    }
    let knobs = header.len() - LEADING.len() - TRAILING.len();
    if header[1 + knobs..].iter().zip(TRAILING).any(|(a, b)| a != b) {
        return Err(bad_header());
    }
    let knob_names = header[1..1 + knobs].to_vec();

    let mut entries = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let f = |i: usize| rec.get(i).unwrap_or("");
        let config: Vec<i64> = (0..knobs)
            .map(|k| parse(f(1 + k), &knob_names[k], line))
            .collect::<Result<_>>()?;
        let t = 1 + knobs;
        entries.push(HistoryEntry {
            iteration: parse(f(0), "iteration", line)?,
            config: Configuration(config),
            objective: parse(f(t), TRAILING[0], line)?,
            constraint_value: parse_opt(f(t + 1), TRAILING[1], line)?,
            is_placeholder: parse(f(t + 2), TRAILING[2], line)?,
            feasible: parse(f(t + 3), TRAILING[3], line)?,
            submit_time: parse(f(t + 4), TRAILING[4], line)?,
            complete_time: parse_opt(f(t + 5), TRAILING[5], line)?,
            agent_id: parse(f(t + 6), TRAILING[6], line)?,
            job: None,
        });
    }
    Ok(Transcript { knob_names, entries })
}

pub fn load_transcript(path: &Path) -> Result<Transcript> {
    read_transcript(std::fs::File::open(path)?)
}

pub fn write_mape<W: Write>(out: W, records: &[MapeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MAPE_COLUMNS)?;
    for r in records {
        w.write_record([
            r.iteration.to_string(),
            r.predicted.to_string(),
            r.observed.to_string(),
            r.ape.to_string(),
            r.predicted_at.to_string(),
            r.observed_at.to_string(),
            r.trained_on.to_string(),
            r.observation_index.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_mape(path: &Path, records: &[MapeRecord]) -> Result<()> {
    write_mape(std::fs::File::create(path)?, records)
}

pub fn read_mape<R: Read>(input: R) -> Result<Vec<MapeRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != MAPE_COLUMNS {
        return Err(Error::Domain(format!("unexpected MAPE header {header:?}")));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let f = |i: usize| rec.get(i).unwrap_or("");
        out.push(MapeRecord {
            iteration: parse(f(0), MAPE_COLUMNS[0], line)?,
            predicted: parse(f(1), MAPE_COLUMNS[1], line)?,
            observed: parse(f(2), MAPE_COLUMNS[2], line)?,
            ape: parse(f(3), MAPE_COLUMNS[3], line)?,
            predicted_at: parse(f(4), MAPE_COLUMNS[4], line)?,
            observed_at: parse(f(5), MAPE_COLUMNS[5], line)?,
            trained_on: parse(f(6), MAPE_COLUMNS[6], line)?,
            observation_index: parse(f(7), MAPE_COLUMNS[7], line)?,
        });
    }
    Ok(out)
}

pub fn load_mape(path: &Path) -> Result<Vec<MapeRecord>> {
    read_mape(std::fs::File::open(path)?)
}
