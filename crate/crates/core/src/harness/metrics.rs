//! Per-round metrics records and their CSV form.
//!
//! Columns: `round, L_0..L_{p-1}, lambda_0..lambda_{p-1}, worst, <summary
//! columns>, comm_params_cumulative, degenerate`. Reals are written with 17
//! significant digits, which parse back to the identical `f64`.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RoundReport {
    pub round: u64,
    pub per_domain_loss: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Max of `per_domain_loss` over domains present in the round.
    pub worst_domain_loss: f64,
    /// Toy task: the learned scalar. Classification: per-domain accuracy.
    pub model_summary: Vec<f64>,
    pub comm_params_cumulative: u64,
    pub degenerate: bool,
}

/// Column layout of a metrics file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetricsSchema {
    pub num_domains: usize,
    pub summary_names: Vec<String>,
}

impl MetricsSchema {
    pub fn header(&self) -> Vec<String> {
        let p = self.num_domains;
        let mut h = vec!["round".to_string()];
        h.extend((0..p).map(|i| format!("L_{i}")));
        h.extend((0..p).map(|i| format!("lambda_{i}")));
        h.push("worst".into());
        h.extend(self.summary_names.iter().cloned());
        h.push("comm_params_cumulative".into());
        h.push("degenerate".into());
        h
    }

    fn from_header(header: &[String]) -> std::result::Result<Self, String> {
        let p = header.iter().filter(|h| h.starts_with("L_")).count();
        let fixed = 1 + 2 * p + 1 + 2;
        if header.len() < fixed {
            return Err("header too short".into());
        }
        let schema = Self {
            num_domains: p,
            summary_names: header[2 * p + 2..header.len() - 2].to_vec(),
        };
        if schema.header() != header {
            return Err(format!("unexpected header {header:?}"));
        }
        Ok(schema)
    }

    fn row(&self, r: &RoundReport) -> Vec<String> {
        let mut row = vec![r.round.to_string()];
        row.extend(r.per_domain_loss.iter().map(|&v| fmt_real(v)));
        row.extend(r.lambda.iter().map(|&v| fmt_real(v)));
        row.push(fmt_real(r.worst_domain_loss));
        row.extend(r.model_summary.iter().map(|&v| fmt_real(v)));
        row.push(r.comm_params_cumulative.to_string());
        row.push(r.degenerate.to_string());
        row
    }

    fn check(&self, r: &RoundReport) -> Result<()> {
        if r.per_domain_loss.len() != self.num_domains
            || r.lambda.len() != self.num_domains
            || r.model_summary.len() != self.summary_names.len()
        {
            return Err(Error::InvalidArgument(format!(
                "report for round {} does not match the metrics schema",
                r.round
            )));
        }
        Ok(())
    }

    fn parse_row(&self, fields: &[&str]) -> std::result::Result<RoundReport, String> {
        let p = self.num_domains;
        let s = self.summary_names.len();
        if fields.len() != 2 * p + s + 4 {
            return Err(format!("expected {} fields, got {}", 2 * p + s + 4, fields.len()));
        }
        let real = |f: &str| f.parse::<f64>().map_err(|e| format!("`{f}`: {e}"));
        let reals = |fs: &[&str]| fs.iter().map(|f| real(f)).collect::<std::result::Result<Vec<_>, _>>();
        Ok(RoundReport {
            round: fields[0].parse().map_err(|e| format!("round: {e}"))?,
            per_domain_loss: reals(&fields[1..1 + p])?,
            lambda: reals(&fields[1 + p..1 + 2 * p])?,
            worst_domain_loss: real(fields[1 + 2 * p])?,
            model_summary: reals(&fields[2 + 2 * p..2 + 2 * p + s])?,
            comm_params_cumulative: fields[2 + 2 * p + s]
                .parse()
                .map_err(|e| format!("comm_params_cumulative: {e}"))?,
            degenerate: fields[3 + 2 * p + s]
                .parse()
                .map_err(|e| format!("degenerate: {e}"))?,
        })
    }
}

/// 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Appends one row per round and flushes after each, so a run in progress
/// can be inspected.
pub struct MetricsWriter {
    path: PathBuf,
    schema: MetricsSchema,
    writer: csv::Writer<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path, schema: MetricsSchema) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        writer
            .write_record(schema.header())
            .and_then(|_| writer.flush().map_err(Into::into))
            .map_err(|e| csv_error(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            schema,
            writer,
        })
    }

    pub fn write(&mut self, report: &RoundReport) -> Result<()> {
        self.schema.check(report)?;
        self.writer
            .write_record(self.schema.row(report))
            .and_then(|_| self.writer.flush().map_err(Into::into))
            .map_err(|e| csv_error(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer
            .flush()
            .map_err(|e| Error::io(&self.path, e))?;
        let file = self
            .writer
            .into_inner()
            .map_err(|e| Error::io(&self.path, e.into_error()))?;
        file.sync_all().map_err(|e| Error::io(&self.path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

pub fn write_metrics_csv(path: &Path, schema: &MetricsSchema, reports: &[RoundReport]) -> Result<()> {
    let mut w = MetricsWriter::create(path, schema.clone())?;
    for r in reports {
        w.write(r)?;
    }
    w.finish()
}

pub fn read_metrics_csv(path: &Path) -> Result<(MetricsSchema, Vec<RoundReport>)> {
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let schema = MetricsSchema::from_header(&header).map_err(parse_err)?;
    let mut reports = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let fields: Vec<&str> = record.iter().collect();
        reports.push(
            schema
                .parse_row(&fields)
                .map_err(|m| parse_err(format!("row {}: {m}", i + 1)))?,
        );
    }
    Ok((schema, reports))
}

/// Writes `text` to `path`, creating parent directories.
pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
