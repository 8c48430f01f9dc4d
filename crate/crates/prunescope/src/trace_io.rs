//! Trace files. CSV floats carry 17 significant digits, which round-trips f64.

use std::io::{Read, Write};
use std::path::Path;

use prunescope_core::trace::{TraceRecord, TRACE_COLUMNS};

use crate::error::{AppError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Csv,
    Json,
}

impl TraceFormat {
    /// `.json` means JSON, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => TraceFormat::Json,
            _ => TraceFormat::Csv,
        }
    }
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(context: &str) -> impl FnOnce(csv::Error) -> AppError + '_ {
    move |source| AppError::Csv { context: context.to_string(), source }
}

pub fn write_csv<W: Write>(records: &[TraceRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS).map_err(csv_err("trace header"))?;
    for r in records {
        let f = format_float;
        w.write_record([
            r.epoch.to_string(),
            r.group_id.clone(),
            r.kind.as_str().to_string(),
            f(r.lambda),
            f(r.raw_grad),
            f(r.ema_grad),
            f(r.raw_fisher),
            f(r.ema_fisher),
            f(r.raw_bayes),
            f(r.ema_bayes),
            f(r.l1_norm),
            f(r.task_loss),
            f(r.total_loss),
        ])
        .map_err(csv_err("trace row"))?;
    }
    w.flush().map_err(|e| AppError::Other(format!("flushing trace: {e}")))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err("trace header"))?;
    if header.iter().ne(TRACE_COLUMNS) {
        return Err(AppError::Other(format!("unexpected trace header: {}", header.iter().collect::<Vec<_>>().join(","))));
    }
    r.deserialize().map(|row| row.map_err(csv_err("trace row"))).collect()
}

pub fn to_csv_string(records: &[TraceRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(records, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn emit_trace(records: &[TraceRecord], format: TraceFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match format {
        TraceFormat::Csv => {
            let file = std::fs::File::create(path).map_err(|e| AppError::io(path, e))?;
            write_csv(records, std::io::BufWriter::new(file))
        }
        TraceFormat::Json => crate::error::write_json(path, &records),
    }
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    let path = path.as_ref();
    match TraceFormat::from_path(path) {
        TraceFormat::Csv => {
            let file = std::fs::File::open(path).map_err(|e| AppError::io(path, e))?;
            read_csv(std::io::BufReader::new(file))
        }
        TraceFormat::Json => crate::error::read_json(path),
    }
}
