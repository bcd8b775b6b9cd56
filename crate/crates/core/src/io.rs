//! CSV and JSON formats for datasets, fits, test tables, and simulation
//! outputs. Indices in every file are one-based.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FglError, Result};
use crate::inference::TestResult;
use crate::matrix::SymMatrix;
use crate::penalty::PenaltyParams;
use crate::sim::{CoverageReport, FluctuationResult, HistogramBin};
use crate::solver::{FglFit, Scale};
use crate::tuning::AicRow;

/// Observation matrix with its header of variable names.
#[derive(Debug, Clone)]
pub struct Observations {
    pub names: Vec<String>,
    pub data: DMatrix<f64>,
}

fn csv_error(e: csv::Error) -> FglError {
    let (line, column) = match e.position() {
        Some(pos) => (pos.line(), 0),
        None => (0, 0),
    };
    FglError::Parse {
        line,
        column,
        message: e.to_string(),
    }
}

/// Reads a header row of variable names followed by one observation per row.
pub fn read_observations<R: Read>(reader: R) -> Result<Observations> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let names: Vec<String> = rdr
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_owned)
        .collect();
    if names.is_empty() {
        return Err(FglError::Parse {
            line: 1,
            column: 1,
            message: "missing header row".into(),
        });
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != names.len() {
            return Err(FglError::Parse {
                line,
                column: record.len().min(names.len()) + 1,
                message: format!("expected {} fields, found {}", names.len(), record.len()),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| FglError::Parse {
                line,
                column: c + 1,
                message: format!("cannot parse {field:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(FglError::Parse {
                    line,
                    column: c + 1,
                    message: format!("non-finite value {field:?}"),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    Ok(Observations {
        data: DMatrix::from_row_slice(rows, names.len(), &values),
        names,
    })
}

pub fn read_observations_file(path: &Path) -> Result<Observations> {
    read_observations(File::open(path)?)
}

/// `p` rows of `p` comma-separated values, no header.
pub fn write_matrix_csv<W: Write>(writer: W, m: &SymMatrix) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in m.to_rows() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: Read>(reader: R) -> Result<SymMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row = record
            .iter()
            .enumerate()
            .map(|(c, f)| {
                f.parse::<f64>().map_err(|_| FglError::Parse {
                    line,
                    column: c + 1,
                    message: format!("cannot parse {f:?} as a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    SymMatrix::from_rows(&rows)
}

/// Persisted form of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub p: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub lambda: f64,
    pub rho: f64,
    pub scale: Scale,
    pub converged: bool,
    pub iterations: usize,
    pub thetas: Vec<SymMatrix>,
}

impl FitRecord {
    pub fn from_fit(fit: &FglFit) -> Self {
        FitRecord {
            p: fit.p(),
            k: fit.k(),
            lambda: fit.params.lambda,
            rho: fit.params.rho,
            scale: fit.scale,
            converged: fit.converged,
            iterations: fit.iterations,
            thetas: fit.thetas.clone(),
        }
    }

    pub fn params(&self) -> PenaltyParams {
        PenaltyParams {
            lambda: self.lambda,
            rho: self.rho,
            weighted: self.scale == Scale::Correlation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thetas.len() != self.k || self.thetas.iter().any(|t| t.dim() != self.p) {
            return Err(FglError::InvalidInput(
                "fit record dimensions disagree with its thetas".into(),
            ));
        }
        Ok(())
    }
}

pub fn write_json<T: Serialize, W: Write>(writer: W, value: &T) -> Result<()> {
    let mut w = BufWriter::new(writer);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_fit_record<R: Read>(reader: R) -> Result<FitRecord> {
    let rec: FitRecord = serde_json::from_reader(reader)?;
    rec.validate()?;
    Ok(rec)
}

/// Columns `i, j, a1..aK, T, sigma_hat, z, p_value, ci_low, ci_high, reject`.
pub fn write_test_results_csv<W: Write>(writer: W, results: &[TestResult], k: usize) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    let mut header = vec!["i".to_string(), "j".to_string()];
    header.extend((1..=k).map(|g| format!("a{g}")));
    header.extend(
        ["T", "sigma_hat", "z", "p_value", "ci_low", "ci_high", "reject"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header).map_err(csv_error)?;
    for r in results {
        let mut rec = vec![(r.i + 1).to_string(), (r.j + 1).to_string()];
        rec.extend(r.coefficients.iter().map(|a| a.to_string()));
        rec.extend([
            r.statistic.to_string(),
            r.sigma_hat.to_string(),
            r.z.to_string(),
            r.p_value.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
            r.reject.to_string(),
        ]);
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// JSON test records, with one-based indices like the CSV form.
pub fn test_results_json(results: &[TestResult]) -> Vec<TestResult> {
    results
        .iter()
        .map(|r| TestResult {
            i: r.i + 1,
            j: r.j + 1,
            ..r.clone()
        })
        .collect()
}

/// Columns `lambda, rho, aic, converged`.
pub fn write_aic_table_csv<W: Write>(writer: W, table: &[AicRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    w.write_record(["lambda", "rho", "aic", "converged"]).map_err(csv_error)?;
    for row in table {
        w.write_record([
            row.lambda.to_string(),
            row.rho.to_string(),
            row.aic.to_string(),
            row.converged.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `replication, i, j, z`.
pub fn write_z_samples_csv<W: Write>(writer: W, result: &FluctuationResult) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    w.write_record(["replication", "i", "j", "z"]).map_err(csv_error)?;
    for (r, row) in result.z.iter().enumerate() {
        for (&(i, j), z) in result.entries.iter().zip(row) {
            w.write_record([(r + 1).to_string(), i.to_string(), j.to_string(), z.to_string()])
                .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns `i, j, lower, upper, count`.
pub fn write_histogram_csv<W: Write>(
    writer: W,
    histograms: &[((usize, usize), Vec<HistogramBin>)],
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    w.write_record(["i", "j", "lower", "upper", "count"]).map_err(csv_error)?;
    for ((i, j), bins) in histograms {
        for b in bins {
            w.write_record([
                i.to_string(),
                j.to_string(),
                b.lower.to_string(),
                b.upper.to_string(),
                b.count.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns `i, j, hits, reps, in_S`.
pub fn write_coverage_csv<W: Write>(writer: W, report: &CoverageReport) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    w.write_record(["i", "j", "hits", "reps", "in_S"]).map_err(csv_error)?;
    for e in &report.entries {
        w.write_record([
            e.i.to_string(),
            e.j.to_string(),
            e.hits.to_string(),
            report.replications.to_string(),
            e.in_s.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
