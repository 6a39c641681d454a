use std::fmt::Write;

use super::config::RunConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(usize),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(x) => format!("{x:.16e}"),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.replace([',', '\n', '\r'], ";"),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n)
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

/// Column name and description.
pub type Column = (&'static str, &'static str);

#[derive(Debug, Clone)]
pub struct Table {
    pub columns: &'static [Column],
    pub rows: Vec<Vec<Cell>>,
    /// Set when the run stopped early; the rows so far are kept.
    pub failure: Option<String>,
}

impl Table {
    pub fn new(columns: &'static [Column]) -> Self {
        Self {
            columns,
            rows: Vec::new(),
            failure: None,
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, cfg: &RunConfig) -> String {
        let mut out = String::new();
        writeln!(out, "# casotto {}", env!("CARGO_PKG_VERSION")).unwrap();
        writeln!(out, "# [config]").unwrap();
        writeln!(out, "# command = {}", cfg.command.name()).unwrap();
        for (k, v) in &cfg.entries {
            writeln!(out, "# {k} = {v}").unwrap();
        }
        writeln!(out, "# [columns]").unwrap();
        for (name, desc) in self.columns {
            writeln!(out, "# {name}: {desc}").unwrap();
        }
        let names: Vec<&str> = self.columns.iter().map(|c| c.0).collect();
        writeln!(out, "{}", names.join(",")).unwrap();
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
        if let Some(msg) = &self.failure {
            writeln!(out, "# numerical failure: {}", msg.replace('\n', " ")).unwrap();
        }
        out
    }
}
