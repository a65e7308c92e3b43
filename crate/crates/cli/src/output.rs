//! Result tables and their CSV / JSON rendering.

use std::io::Write;

use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Rows whose point could not be evaluated.
    pub infeasible: usize,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn num(&self, row: usize, name: &str) -> Option<f64> {
        match self.rows.get(row)?.get(self.column(name)?)? {
            Cell::Num(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }
}

#[derive(Serialize)]
struct JsonDoc<'a> {
    config: &'a str,
    seed: u64,
    #[serde(flatten)]
    table: &'a Table,
}

/// Writes `table`, prefixed by the resolved configuration and seed.
pub fn write(table: &Table, config_toml: &str, seed: u64, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    match format {
        Format::Csv => {
            for line in config_toml.lines() {
                writeln!(out, "# {line}")?;
            }
            writeln!(out, "# seed = {seed}")?;
            let mut w = csv::Writer::from_writer(out);
            w.write_record(&table.columns).map_err(csv_err)?;
            for row in &table.rows {
                w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
            }
            w.flush()?;
        }
        Format::Json => {
            let doc = JsonDoc {
                config: config_toml,
                seed,
                table,
            };
            serde_json::to_writer_pretty(&mut *out, &doc).map_err(|e| CliError::Io(e.into()))?;
            writeln!(out)?;
        }
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.into())
}
