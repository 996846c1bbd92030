//! Per-group statistics over experiment rows.

use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{HarnessError, Result};
use crate::experiment::{Row, CSV_HEADER};

/// Statistics of one (workload, scheme, quantity) group. Rows whose
/// estimate is not finite are counted in `failed` and otherwise ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub workload: String,
    pub scheme: String,
    pub quantity: String,
    pub n: usize,
    pub failed: usize,
    pub truth: f64,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator), 0 for `n < 2`.
    pub std: f64,
    pub bias: f64,
    pub rmse: f64,
    pub max_imag_residual: f64,
}

impl SummaryRow {
    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        self.std / (self.n as f64).sqrt()
    }

    /// `std / |truth|`.
    pub fn rel_std(&self) -> f64 {
        self.std / self.truth.abs()
    }
}

/// Groups in order of first appearance.
pub fn summarize(rows: &[Row]) -> Result<Vec<SummaryRow>> {
    let mut groups: Vec<(SummaryRow, Vec<f64>)> = Vec::new();
    for row in rows {
        let pos = groups.iter().position(|(g, _)| {
            g.workload == row.workload && g.scheme == row.scheme && g.quantity == row.quantity
        });
        let i = match pos {
            Some(i) => i,
            None => {
                groups.push((
                    SummaryRow {
                        workload: row.workload.clone(),
                        scheme: row.scheme.clone(),
                        quantity: row.quantity.clone(),
                        n: 0,
                        failed: 0,
                        truth: row.truth,
                        mean: f64::NAN,
                        std: f64::NAN,
                        bias: f64::NAN,
                        rmse: f64::NAN,
                        max_imag_residual: 0.0,
                    },
                    Vec::new(),
                ));
                groups.len() - 1
            }
        };
        let (g, values) = &mut groups[i];
        if g.truth.to_bits() != row.truth.to_bits() {
            return Err(HarnessError::Schema(format!(
                "truth changes within {}/{}/{}: {} vs {}",
                g.workload, g.scheme, g.quantity, g.truth, row.truth
            )));
        }
        if row.estimate.is_finite() {
            values.push(row.estimate);
            g.max_imag_residual = g.max_imag_residual.max(row.imag_residual);
        } else {
            g.failed += 1;
        }
    }
    Ok(groups
        .into_iter()
        .map(|(mut g, values)| {
            g.n = values.len();
            if g.n > 0 {
                let n = g.n as f64;
                g.mean = values.iter().sum::<f64>() / n;
                let ss: f64 = values.iter().map(|v| (v - g.mean).powi(2)).sum();
                g.std = if g.n > 1 {
                    (ss / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                g.bias = g.mean - g.truth;
                g.rmse = (values.iter().map(|v| (v - g.truth).powi(2)).sum::<f64>() / n).sqrt();
            }
            g
        })
        .collect())
}

/// Parses rows, rejecting any header other than the experiment schema.
pub fn read_rows<R: Read>(input: R) -> std::result::Result<Vec<Row>, SchemaOrCsv> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader
        .headers()
        .map_err(SchemaOrCsv::Csv)?
        .iter()
        .map(str::to_string)
        .collect();
    if header.join(",") != CSV_HEADER {
        return Err(SchemaOrCsv::Schema(format!(
            "expected header `{CSV_HEADER}`, found `{}`",
            header.join(",")
        )));
    }
    reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(SchemaOrCsv::Csv)
}

/// Failure of [`read_rows`], before a path is attached.
#[derive(Debug)]
pub enum SchemaOrCsv {
    Schema(String),
    Csv(csv::Error),
}

pub fn read_rows_from(path: &Path) -> Result<Vec<Row>> {
    let file = File::open(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_rows(file).map_err(|e| match e {
        SchemaOrCsv::Schema(msg) => HarnessError::Schema(format!("{}: {msg}", path.display())),
        SchemaOrCsv::Csv(source) => HarnessError::Csv {
            path: path.to_path_buf(),
            source,
        },
    })
}

/// Fixed-width text table.
pub struct SummaryTable<'a>(pub &'a [SummaryRow]);

impl fmt::Display for SummaryTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:<16} {:<10} {:>6} {:>5} {:>12} {:>12} {:>12} {:>12} {:>12}",
            "workload", "scheme", "quantity", "n", "fail", "truth", "mean", "std", "bias", "rmse"
        )?;
        for r in self.0 {
            writeln!(
                f,
                "{:<12} {:<16} {:<10} {:>6} {:>5} {:>12.3} {:>12.3} {:>12.3} {:>12.3} {:>12.3}",
                r.workload,
                r.scheme,
                r.quantity,
                r.n,
                r.failed,
                r.truth,
                r.mean,
                r.std,
                r.bias,
                r.rmse
            )?;
        }
        Ok(())
    }
}
