//! Performance database (`results.csv`), baseline comparison and trace export.
//!
//! `results.csv` has one column per parameter in space order followed by
//! `objective,status,elapsed_sec,worker_id,eval_id,started_at,finished_at`.
//! Inactive parameters are written as `nan`; timestamps are seconds since
//! campaign start with millisecond precision.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::optimizer::{Direction, EvalStatus};
use crate::space::{Configuration, ParameterSpace};

pub const RECORD_COLUMNS: [&str; 7] = [
    "objective",
    "status",
    "elapsed_sec",
    "worker_id",
    "eval_id",
    "started_at",
    "finished_at",
];

pub const TRACE_COLUMNS: [&str; 3] = ["t_sec", "objective", "status"];

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("results header does not match the space: {0}")]
    Header(String),
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("eval_id {got} is not after {last}")]
    OutOfOrder { got: u64, last: u64 },
    #[error("baseline: {0}")]
    Baseline(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRecord {
    pub eval_id: u64,
    pub worker_id: usize,
    pub config: Configuration,
    /// User orientation.
    pub objective: f64,
    pub status: EvalStatus,
    pub elapsed: f64,
    pub started_at: f64,
    pub finished_at: f64,
}

/// Destination for finished evaluations.
pub trait RecordSink {
    fn append(&mut self, record: &EvaluationRecord) -> Result<(), StoreError>;
}

impl RecordSink for Vec<EvaluationRecord> {
    fn append(&mut self, record: &EvaluationRecord) -> Result<(), StoreError> {
        self.push(record.clone());
        Ok(())
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn header(space: &ParameterSpace) -> Vec<String> {
    space
        .names()
        .map(str::to_string)
        .chain(RECORD_COLUMNS.iter().map(|c| c.to_string()))
        .collect()
}

fn row(space: &ParameterSpace, r: &EvaluationRecord) -> Vec<String> {
    let mut out: Vec<String> = (0..space.len()).map(|i| space.render_value(i, &r.config)).collect();
    out.extend([
        r.objective.to_string(),
        r.status.to_string(),
        r.elapsed.to_string(),
        r.worker_id.to_string(),
        r.eval_id.to_string(),
        format!("{:.3}", r.started_at),
        format!("{:.3}", r.finished_at),
    ]);
    out
}

/// Append-only `results.csv` writer; every record is flushed to disk.
pub struct ResultsWriter {
    space: Arc<ParameterSpace>,
    path: PathBuf,
    writer: csv::Writer<File>,
    last_eval_id: Option<u64>,
}

impl ResultsWriter {
    /// Creates (truncating) `path` and writes the header.
    pub fn create(path: &Path, space: Arc<ParameterSpace>) -> Result<Self, StoreError> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(header(&space))?;
        writer.flush().map_err(io_err(path))?;
        Ok(ResultsWriter {
            space,
            path: path.to_path_buf(),
            writer,
            last_eval_id: None,
        })
    }

    /// Opens an existing file for further appends, or creates it.
    pub fn open_append(path: &Path, space: Arc<ParameterSpace>) -> Result<Self, StoreError> {
        if !path.exists() {
            return Self::create(path, space);
        }
        let existing = read_results(path, &space)?;
        let file = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
        let writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        Ok(ResultsWriter {
            space,
            path: path.to_path_buf(),
            writer,
            last_eval_id: existing.iter().map(|r| r.eval_id).max(),
        })
    }

    /// First eval_id that may still be appended.
    pub fn next_eval_id(&self) -> u64 {
        self.last_eval_id.map_or(0, |id| id + 1)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append_record(&mut self, record: &EvaluationRecord) -> Result<(), StoreError> {
        if let Some(last) = self.last_eval_id {
            if record.eval_id <= last {
                return Err(StoreError::OutOfOrder {
                    got: record.eval_id,
                    last,
                });
            }
        }
        self.writer.write_record(row(&self.space, record))?;
        self.writer.flush().map_err(io_err(&self.path))?;
        self.last_eval_id = Some(record.eval_id);
        Ok(())
    }
}

impl RecordSink for ResultsWriter {
    fn append(&mut self, record: &EvaluationRecord) -> Result<(), StoreError> {
        self.append_record(record)
    }
}

/// A results file read without a space: parameter values stay textual.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    pub parameter_names: Vec<String>,
    pub rows: Vec<RawRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub values: Vec<String>,
    pub objective: f64,
    pub status: EvalStatus,
    pub elapsed: f64,
    pub worker_id: usize,
    pub eval_id: u64,
    pub started_at: f64,
    pub finished_at: f64,
}

pub fn read_table(path: &Path) -> Result<ResultsTable, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    parse_table(file)
}

pub fn parse_table<R: io::Read>(input: R) -> Result<ResultsTable, StoreError> {
    let mut reader = csv::Reader::from_reader(input);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let n_params = headers
        .len()
        .checked_sub(RECORD_COLUMNS.len())
        .ok_or_else(|| StoreError::Header(format!("only {} columns", headers.len())))?;
    if headers[n_params..] != RECORD_COLUMNS {
        return Err(StoreError::Header(format!(
            "trailing columns are {:?}",
            &headers[n_params..]
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |reason: String| StoreError::Row { row: i + 1, reason };
        let field = |k: usize| rec.get(n_params + k).unwrap_or("");
        let num = |k: usize| {
            field(k)
                .parse::<f64>()
                .map_err(|_| bad(format!("{} `{}` is not a number", RECORD_COLUMNS[k], field(k))))
        };
        let int = |k: usize| {
            field(k)
                .parse::<u64>()
                .map_err(|_| bad(format!("{} `{}` is not an integer", RECORD_COLUMNS[k], field(k))))
        };
        rows.push(RawRecord {
            values: (0..n_params).map(|k| rec.get(k).unwrap_or("").to_string()).collect(),
            objective: num(0)?,
            status: field(1).parse().map_err(bad)?,
            elapsed: num(2)?,
            worker_id: int(3)? as usize,
            eval_id: int(4)?,
            started_at: num(5)?,
            finished_at: num(6)?,
        });
    }
    Ok(ResultsTable {
        parameter_names: headers[..n_params].to_vec(),
        rows,
    })
}

/// Reads `results.csv`, decoding parameter values with `space`.
pub fn read_results(path: &Path, space: &ParameterSpace) -> Result<Vec<EvaluationRecord>, StoreError> {
    let table = read_table(path)?;
    decode_table(&table, space)
}

pub fn decode_table(table: &ResultsTable, space: &ParameterSpace) -> Result<Vec<EvaluationRecord>, StoreError> {
    let expected: Vec<&str> = space.names().collect();
    if table.parameter_names != expected {
        return Err(StoreError::Header(format!(
            "parameters {:?}, space has {:?}",
            table.parameter_names, expected
        )));
    }
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, raw)| {
            let pairs: Vec<(&str, &str)> = expected
                .iter()
                .copied()
                .zip(raw.values.iter().map(String::as_str))
                .collect();
            let config = space.assign(&pairs).map_err(|v| StoreError::Row {
                row: i + 1,
                reason: v.to_string(),
            })?;
            Ok(EvaluationRecord {
                eval_id: raw.eval_id,
                worker_id: raw.worker_id,
                config,
                objective: raw.objective,
                status: raw.status,
                elapsed: raw.elapsed,
                started_at: raw.started_at,
                finished_at: raw.finished_at,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSpec {
    pub objective: f64,
    pub provenance: String,
    pub direction: Direction,
}

impl BaselineSpec {
    pub fn new(objective: f64, provenance: &str, direction: Direction) -> Result<Self, StoreError> {
        if !objective.is_finite() {
            return Err(StoreError::Baseline(format!("{objective} is not finite")));
        }
        Ok(BaselineSpec {
            objective,
            provenance: provenance.to_string(),
            direction,
        })
    }
}

/// Rounds half away from zero to two decimals.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Unrounded improvement of `best` over the baseline, in percent. Positive
/// means better in the baseline's direction.
pub fn improvement_raw(baseline: &BaselineSpec, best: f64) -> Result<f64, StoreError> {
    let b = baseline.objective;
    if b == 0.0 {
        return Err(StoreError::Baseline("baseline objective is zero".into()));
    }
    if !best.is_finite() || !b.is_finite() {
        return Err(StoreError::Baseline("values must be finite".into()));
    }
    if baseline.direction == Direction::Maximize && b < 0.0 {
        return Err(StoreError::Baseline(
            "maximize baseline must be positive".into(),
        ));
    }
    Ok(match baseline.direction {
        Direction::Maximize => 100.0 * (best - b) / b,
        Direction::Minimize => 100.0 * (b - best) / b,
    })
}

/// Improvement in percent, rounded to two decimals for reporting.
pub fn improvement_percent(baseline: &BaselineSpec, best: f64) -> Result<f64, StoreError> {
    improvement_raw(baseline, best).map(round2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub t_sec: f64,
    pub objective: f64,
    pub status: EvalStatus,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub points: Vec<TracePoint>,
    pub baseline: Option<f64>,
}

/// Objective over time, ordered by finish time (then eval_id).
pub fn export_trace(records: &[EvaluationRecord], baseline: Option<&BaselineSpec>) -> Trace {
    let mut sorted: Vec<&EvaluationRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.finished_at.total_cmp(&b.finished_at).then(a.eval_id.cmp(&b.eval_id)));
    Trace {
        points: sorted
            .into_iter()
            .map(|r| TracePoint {
                t_sec: r.finished_at,
                objective: r.objective,
                status: r.status,
            })
            .collect(),
        baseline: baseline.map(|b| b.objective),
    }
}

/// Same as [`export_trace`] for a textual results table.
pub fn export_table_trace(table: &ResultsTable, baseline: Option<f64>) -> Trace {
    let mut sorted: Vec<&RawRecord> = table.rows.iter().collect();
    sorted.sort_by(|a, b| a.finished_at.total_cmp(&b.finished_at).then(a.eval_id.cmp(&b.eval_id)));
    Trace {
        points: sorted
            .into_iter()
            .map(|r| TracePoint {
                t_sec: r.finished_at,
                objective: r.objective,
                status: r.status,
            })
            .collect(),
        baseline,
    }
}

/// Running best over `ok` points: `(t_sec, best so far)`.
pub fn incumbent_series(trace: &Trace, direction: Direction) -> Vec<(f64, f64)> {
    let mut best: Option<f64> = None;
    trace
        .points
        .iter()
        .filter(|p| p.status == EvalStatus::Ok)
        .map(|p| {
            let b = match best {
                Some(b) if !direction.is_better(p.objective, b) => b,
                _ => p.objective,
            };
            best = Some(b);
            (p.t_sec, b)
        })
        .collect()
}

/// Writes `t_sec,objective,status`. A configured baseline is emitted first
/// as a `baseline` row at t = 0.
pub fn write_trace<W: Write>(trace: &Trace, out: W) -> Result<(), StoreError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    if let Some(b) = trace.baseline {
        w.write_record(["0.000".to_string(), b.to_string(), "baseline".to_string()])?;
    }
    for p in &trace.points {
        w.write_record([format!("{:.3}", p.t_sec), p.objective.to_string(), p.status.to_string()])?;
    }
    w.flush().map_err(|source| StoreError::Io {
        path: "trace".into(),
        source,
    })?;
    Ok(())
}

pub fn read_trace<R: io::Read>(input: R) -> Result<Trace, StoreError> {
    let mut reader = csv::Reader::from_reader(input);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers != TRACE_COLUMNS {
        return Err(StoreError::Header(format!("trace columns are {headers:?}")));
    }
    let mut trace = Trace::default();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |reason: String| StoreError::Row { row: i + 1, reason };
        let num = |k: usize| {
            rec.get(k)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|_| bad(format!("column {k} is not a number")))
        };
        let status = rec.get(2).unwrap_or("");
        if status == "baseline" {
            trace.baseline = Some(num(1)?);
            continue;
        }
        trace.points.push(TracePoint {
            t_sec: num(0)?,
            objective: num(1)?,
            status: status.parse().map_err(bad)?,
        });
    }
    Ok(trace)
}

/// Human-readable campaign summary.
pub fn render_report(
    table: &ResultsTable,
    direction: Direction,
    baseline: Option<&BaselineSpec>,
) -> Result<String, StoreError> {
    use std::fmt::Write as _;
    let mut s = String::new();
    let count = |st: EvalStatus| table.rows.iter().filter(|r| r.status == st).count();
    let _ = writeln!(s, "evaluations: {}", table.rows.len());
    let _ = writeln!(
        s,
        "status: ok={} timeout={} fail={}",
        count(EvalStatus::Ok),
        count(EvalStatus::Timeout),
        count(EvalStatus::Fail)
    );
    let wall = table
        .rows
        .iter()
        .map(|r| r.finished_at)
        .fold(0.0f64, f64::max);
    let _ = writeln!(s, "total autotuning time (s): {wall:.3}");
    let best = table
        .rows
        .iter()
        .filter(|r| r.status == EvalStatus::Ok)
        .fold(None::<&RawRecord>, |best, r| match best {
            Some(b) if !direction.is_better(r.objective, b.objective) => Some(b),
            _ => Some(r),
        });
    match best {
        None => {
            let _ = writeln!(s, "best: none (no ok evaluations)");
        }
        Some(b) => {
            let _ = writeln!(s, "best objective ({direction}): {}", b.objective);
            let _ = writeln!(s, "best eval_id: {}", b.eval_id);
            let _ = writeln!(s, "best configuration:");
            for (name, value) in table.parameter_names.iter().zip(&b.values) {
                let _ = writeln!(s, "  {name} = {value}");
            }
            if let Some(base) = baseline {
                let pct = improvement_percent(base, b.objective)?;
                let _ = writeln!(s, "baseline: {} ({})", base.objective, base.provenance);
                let _ = writeln!(s, "improvement: {pct:.2}%");
            }
        }
    }
    Ok(s)
}
