//! Flat tables written as CSV or as JSON records.

use std::io::Write;

use mmexit::linalg::RealMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Shortest text that reads back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v}")
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// One row per matrix entry: `lead..., k, r, value`, states counted from 1.
    pub fn push_matrix(&mut self, lead: &[String], value: &RealMatrix) {
        for k in 0..value.nrows() {
            for r in 0..value.ncols() {
                let mut row = lead.to_vec();
                row.push((k + 1).to_string());
                row.push((r + 1).to_string());
                row.push(num(value[(k, r)]));
                self.push(row);
            }
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> csv::Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let columns = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<csv::Result<_>>()?;
        Ok(Self { columns, rows })
    }

    /// Array of objects; numeric cells become JSON numbers where they parse.
    pub fn to_json(&self) -> serde_json::Value {
        let records = self
            .rows
            .iter()
            .map(|row| {
                let obj = self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, v)| {
                        let val = v
                            .parse::<f64>()
                            .ok()
                            .and_then(serde_json::Number::from_f64)
                            .map(serde_json::Value::Number)
                            .unwrap_or_else(|| serde_json::Value::String(v.clone()));
                        (c.clone(), val)
                    })
                    .collect();
                serde_json::Value::Object(obj)
            })
            .collect();
        serde_json::Value::Array(records)
    }

    pub fn write<W: Write>(&self, format: Format, mut out: W) -> std::io::Result<()> {
        match format {
            Format::Csv => self.write_csv(out).map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(e) => e,
                other => std::io::Error::other(format!("{other:?}")),
            }),
            Format::Json => {
                serde_json::to_writer_pretty(&mut out, &self.to_json())?;
                writeln!(out)
            }
        }
    }
}
