//! On-disk basin bundle: `graph.json`, `series.csv` and `sensitive.csv`.
//!
//! Floats are written with 17 significant digits. The `flow` column holds the
//! gauge value where `flow_observed_flag` is 1 and the simulated value
//! elsewhere; `temp` is empty where unobserved.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::basin::{SegmentSeries, FEATURE_COUNT};
use crate::error::{Error, Result};
use crate::graph::{BasinGraph, SegmentId};
use crate::train::Dataset;

pub const GRAPH_FILE: &str = "graph.json";
pub const SERIES_FILE: &str = "series.csv";
pub const SENSITIVE_FILE: &str = "sensitive.csv";

fn series_header() -> Vec<String> {
    let mut h = vec!["segment_id".to_string(), "day".to_string()];
    h.extend((1..=FEATURE_COUNT).map(|k| format!("feature_{k}")));
    h.extend(
        ["flow", "flow_observed_flag", "temp", "temp_observed_flag"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn series_csv(data: &Dataset) -> String {
    let mut out = series_header().join(",");
    out.push('\n');
    for (ix, s) in data.series.iter().enumerate() {
        let id = data.graph.id(ix);
        for day in 0..s.days() {
            let _ = write!(out, "{id},{day}");
            for v in s.feature_row(day) {
                let _ = write!(out, ",{}", float(*v));
            }
            let flow = if s.flow_observed[day] { s.flow[day] } else { s.flow_simulated[day] };
            let temp = if s.temp_observed[day] { float(s.temp[day]) } else { String::new() };
            let _ = writeln!(
                out,
                ",{},{},{},{}",
                float(flow),
                u8::from(s.flow_observed[day]),
                temp,
                u8::from(s.temp_observed[day])
            );
        }
    }
    out
}

pub fn sensitive_csv(data: &Dataset) -> String {
    let mut out = String::from("segment_id,s_value\n");
    for (ix, v) in data.sensitive.iter().enumerate() {
        let _ = writeln!(out, "{},{}", data.graph.id(ix), float(*v));
    }
    out
}

fn write_file(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

fn read_file(path: PathBuf) -> Result<String> {
    fs::read_to_string(&path).map_err(|e| Error::io(path, e))
}

pub fn write_bundle(dir: &Path, data: &Dataset) -> Result<()> {
    data.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(dir.join(GRAPH_FILE), &data.graph.to_json())?;
    write_file(dir.join(SERIES_FILE), &series_csv(data))?;
    write_file(dir.join(SENSITIVE_FILE), &sensitive_csv(data))?;
    Ok(())
}

/// One parsed `series.csv` row.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesRow {
    pub features: [f64; FEATURE_COUNT],
    pub flow: f64,
    pub flow_observed: bool,
    pub temp: Option<f64>,
}

/// Rows grouped by segment, each indexed by day.
pub type SeriesTable = BTreeMap<SegmentId, Vec<SeriesRow>>;

fn field(record: &csv::StringRecord, k: usize, line: u64) -> Result<&str> {
    record
        .get(k)
        .ok_or_else(|| Error::Parse(format!("line {line}: missing column {}", k + 1)))
}

fn number<T: std::str::FromStr>(text: &str, what: &str, line: u64) -> Result<T> {
    text.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad {what} {text:?}")))
}

fn finite(text: &str, what: &str, line: u64) -> Result<f64> {
    let v: f64 = number(text, what, line)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Parse(format!("line {line}: {what} is not finite")))
    }
}

fn flag(text: &str, what: &str, line: u64) -> Result<bool> {
    match text.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Parse(format!("line {line}: {what} must be 0 or 1, got {other:?}"))),
    }
}

fn reader<'a>(text: &'a str, expected: &[String]) -> Result<csv::Reader<&'a [u8]>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != expected {
        return Err(Error::Parse(format!(
            "unexpected header {header:?}, expected {expected:?}"
        )));
    }
    Ok(rdr)
}

/// Parses `series.csv`. Days of each segment must be `0, 1, 2, ...` in order.
pub fn parse_series_csv(text: &str) -> Result<SeriesTable> {
    let header = series_header();
    let mut rdr = reader(text, &header)?;
    let mut table = SeriesTable::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Error::Parse(format!(
                "line {line}: {} columns, expected {}",
                rec.len(),
                header.len()
            )));
        }
        let id: SegmentId = number(field(&rec, 0, line)?, "segment_id", line)?;
        let day: usize = number(field(&rec, 1, line)?, "day", line)?;
        let mut features = [0.0; FEATURE_COUNT];
        for (k, f) in features.iter_mut().enumerate() {
            *f = finite(field(&rec, 2 + k, line)?, "feature", line)?;
        }
        let base = 2 + FEATURE_COUNT;
        let flow = finite(field(&rec, base, line)?, "flow", line)?;
        let flow_observed = flag(field(&rec, base + 1, line)?, "flow_observed_flag", line)?;
        let temp_text = field(&rec, base + 2, line)?.trim();
        let temp_observed = flag(field(&rec, base + 3, line)?, "temp_observed_flag", line)?;
        let temp = match (temp_observed, temp_text.is_empty()) {
            (true, false) => Some(finite(temp_text, "temp", line)?),
            (false, true) => None,
            (true, true) => return Err(Error::Parse(format!("line {line}: observed temp is empty"))),
            (false, false) => return Err(Error::Parse(format!("line {line}: temp given but flagged unobserved"))),
        };
        let rows = table.entry(id).or_default();
        if day != rows.len() {
            return Err(Error::Parse(format!(
                "line {line}: segment {id} day {day} out of order (expected {})",
                rows.len()
            )));
        }
        rows.push(SeriesRow {
            features,
            flow,
            flow_observed,
            temp,
        });
    }
    Ok(table)
}

pub fn parse_sensitive_csv(text: &str) -> Result<BTreeMap<SegmentId, f64>> {
    let header = ["segment_id".to_string(), "s_value".to_string()];
    let mut rdr = reader(text, &header)?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(Error::Parse(format!("line {line}: expected 2 columns")));
        }
        let id: SegmentId = number(field(&rec, 0, line)?, "segment_id", line)?;
        let v = finite(field(&rec, 1, line)?, "s_value", line)?;
        if out.insert(id, v).is_some() {
            return Err(Error::Parse(format!("line {line}: duplicate segment {id}")));
        }
    }
    Ok(out)
}

/// Joins the three parsed files into a dataset, checking that they describe
/// the same segments and that every segment has the same number of days.
pub fn assemble(graph: BasinGraph, series: SeriesTable, sensitive: BTreeMap<SegmentId, f64>) -> Result<Dataset> {
    let n = graph.len();
    if series.len() != n || sensitive.len() != n {
        return Err(Error::Parse(format!(
            "graph has {n} segments, series has {}, sensitive has {}",
            series.len(),
            sensitive.len()
        )));
    }
    let mut days = None;
    let mut out_series = Vec::with_capacity(n);
    let mut out_sensitive = Vec::with_capacity(n);
    for &id in graph.segments() {
        let rows = series.get(&id).ok_or(Error::UnknownSegment(id))?;
        let s = *sensitive.get(&id).ok_or(Error::UnknownSegment(id))?;
        match days {
            None => days = Some(rows.len()),
            Some(d) if d != rows.len() => {
                return Err(Error::Parse(format!(
                    "segment {id} has {} days, others have {d}",
                    rows.len()
                )))
            }
            _ => {}
        }
        let flow: Vec<f64> = rows.iter().map(|r| r.flow).collect();
        out_series.push(SegmentSeries {
            features: rows.iter().flat_map(|r| r.features).collect(),
            flow_simulated: flow.clone(),
            flow,
            flow_observed: rows.iter().map(|r| r.flow_observed).collect(),
            temp: rows.iter().map(|r| r.temp.unwrap_or(f64::NAN)).collect(),
            temp_observed: rows.iter().map(|r| r.temp.is_some()).collect(),
        });
        out_sensitive.push(s);
    }
    let data = Dataset {
        graph,
        series: out_series,
        sensitive: out_sensitive,
    };
    data.validate()?;
    Ok(data)
}

pub fn read_bundle(dir: &Path) -> Result<Dataset> {
    let graph = BasinGraph::from_json(&read_file(dir.join(GRAPH_FILE))?)?;
    let series = parse_series_csv(&read_file(dir.join(SERIES_FILE))?)?;
    let sensitive = parse_sensitive_csv(&read_file(dir.join(SENSITIVE_FILE))?)?;
    assemble(graph, series, sensitive)
}

/// SHA-256 over the three bundle files, each prefixed by its name and length.
pub fn bundle_digest(dir: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    for name in [GRAPH_FILE, SERIES_FILE, SENSITIVE_FILE] {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(path, e))?;
        hasher.update(name.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}
