//! Per-trial result rows and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

pub const CSV_HEADER: &str = "preset,n,m,trial,method,gamma,mse,bias_sq,variance,iters,defect,wall_ms,error";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodTag {
    #[serde(rename = "RAT")]
    Rat,
    #[serde(rename = "SM")]
    Sm,
}

impl MethodTag {
    pub fn label(&self) -> &'static str {
        match self {
            MethodTag::Rat => "RAT",
            MethodTag::Sm => "SM",
        }
    }
}

impl From<rat_core::Estimator> for MethodTag {
    fn from(e: rat_core::Estimator) -> Self {
        match e {
            rat_core::Estimator::Rat => MethodTag::Rat,
            rat_core::Estimator::Sm => MethodTag::Sm,
        }
    }
}

/// One row per (cell, trial, method). Fields that do not apply are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub preset: String,
    pub n: usize,
    pub m: usize,
    pub trial: usize,
    pub method: MethodTag,
    pub gamma: Option<f64>,
    pub mse: Option<f64>,
    pub bias_sq: Option<f64>,
    pub variance: Option<f64>,
    pub iters: Option<usize>,
    pub defect: Option<f64>,
    pub wall_ms: Option<f64>,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn is_ok(&self) -> bool {
        self.error.is_none() && self.mse.is_some_and(f64::is_finite)
    }
}

/// Streams records to any writer; the header goes out even with no rows.
pub struct RecordWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(sink: W) -> Result<Self> {
        let mut inner =
            csv::WriterBuilder::new().has_headers(false).terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
        inner.write_record(CSV_HEADER.split(','))?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, record: &TrialRecord) -> Result<()> {
        self.inner.serialize(record)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush().map_err(csv::Error::from)?;
        self.inner.into_inner().map_err(|e| BenchError::Csv(csv::Error::from(e.into_error())))
    }
}

pub fn write_csv<W: Write>(records: &[TrialRecord], sink: W) -> Result<W> {
    let mut w = RecordWriter::new(sink)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()
}

pub fn emit_csv(records: &[TrialRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
    write_csv(records, std::io::BufWriter::new(file))?;
    Ok(())
}

pub fn read_csv<R: Read>(source: R) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(BenchError::Config(format!("unexpected CSV header '{}'", header.join(","))));
    }
    rdr.deserialize().map(|r| r.map_err(BenchError::from)).collect()
}

pub fn parse_csv(path: &Path) -> Result<Vec<TrialRecord>> {
    let file = std::fs::File::open(path).map_err(|e| BenchError::io(path, e))?;
    read_csv(std::io::BufReader::new(file))
}
