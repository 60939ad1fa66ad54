//! Column tables written as commented CSV or as JSON `{metadata, columns}`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Map, Value};

use crate::config::{Format, RunConfig, SCHEMA_VERSION};

/// Marker written where a quantity is undefined (e.g. `n_a = n_th` for intensity estimation).
pub const SINGULAR: &str = "singular";
/// Marker for a column deliberately not computed on this row.
pub const SKIPPED: &str = "skipped";

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(&'static str),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            // `Display` for f64 is the shortest string that parses back to the same value.
            Cell::Num(x) => x.to_string(),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => (*s).to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) => json!(x),
            Cell::Int(n) => json!(n),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Text(SINGULAR), Cell::Num)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// Extra metadata beyond the effective config.
    pub notes: Vec<(&'static str, String)>,
}

impl Table {
    pub fn new(name: &'static str, columns: &[&'static str]) -> Self {
        Self {
            name,
            columns: columns.to_vec(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, key: &'static str, value: impl Into<String>) {
        self.notes.push((key, value.into()));
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    fn header_pairs(&self, command: &str, cfg: &RunConfig) -> Vec<(String, String)> {
        let mut pairs = vec![
            ("schema_version".to_string(), SCHEMA_VERSION.to_string()),
            ("tool".to_string(), format!("qas {}", env!("CARGO_PKG_VERSION"))),
            ("command".to_string(), command.to_string()),
        ];
        pairs.extend(cfg.echo_pairs().into_iter().map(|(k, v)| (format!("config.{k}"), v)));
        pairs.extend(self.notes.iter().map(|(k, v)| (k.to_string(), v.clone())));
        pairs
    }

    pub fn to_csv(&self, command: &str, cfg: &RunConfig) -> String {
        let mut s = String::new();
        for (k, v) in self.header_pairs(command, cfg) {
            let _ = writeln!(s, "# {k} = {v}");
        }
        let _ = writeln!(s, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    pub fn to_json(&self, command: &str, cfg: &RunConfig) -> String {
        let mut meta = Map::new();
        let mut config = Map::new();
        meta.insert("schema_version".into(), json!(SCHEMA_VERSION));
        meta.insert("tool".into(), json!(format!("qas {}", env!("CARGO_PKG_VERSION"))));
        meta.insert("command".into(), json!(command));
        for (k, v) in cfg.echo_pairs() {
            config.insert(k.into(), json!(v));
        }
        meta.insert("config".into(), Value::Object(config));
        for (k, v) in &self.notes {
            meta.insert((*k).into(), json!(v));
        }
        let mut cols = Map::new();
        for (i, name) in self.columns.iter().enumerate() {
            cols.insert(
                (*name).into(),
                Value::Array(self.rows.iter().map(|r| r[i].json()).collect()),
            );
        }
        let doc = json!({ "metadata": meta, "columns": cols });
        let mut text = serde_json::to_string_pretty(&doc).expect("tables serialize");
        text.push('\n');
        text
    }

    pub fn render(&self, command: &str, cfg: &RunConfig, format: Format) -> (String, String) {
        match format {
            Format::Csv => (format!("{}.csv", self.name), self.to_csv(command, cfg)),
            Format::Json => (format!("{}.json", self.name), self.to_json(command, cfg)),
        }
    }
}

/// A rendered output file.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

pub fn write_all(dir: &Path, files: &[OutputFile]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    for f in files {
        let path = dir.join(&f.name);
        fs::write(&path, &f.contents).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

/// Numeric cells of a CSV written by `Table::to_csv`, keyed by column.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().context("CSV has no header row")?;
    let columns = header.split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    Ok((columns, rows))
}
