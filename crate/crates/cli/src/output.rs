//! CSV tables with a resolved-config header.

use std::fmt::Write as _;

use qrepeater::FockDensityMatrix;

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // 17 significant digits.
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

fn header(command: &str, cfg: &RunConfig) -> String {
    let mut out = format!("# qrepeater {command}\n");
    for (k, v) in cfg.entries() {
        let _ = writeln!(out, "# {k} = {v}");
    }
    out
}

pub fn render(command: &str, cfg: &RunConfig, table: &Table) -> String {
    let mut out = header(command, cfg);
    out += &table.columns.join(",");
    out.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(Cell::render).collect();
        out += &cells.join(",");
        out.push('\n');
    }
    out
}

/// Density matrix as `row,col,re,im` lines; indices are row-major with mode 0 slowest.
pub fn render_state(command: &str, cfg: &RunConfig, rho: &FockDensityMatrix) -> String {
    let mut out = header(command, cfg);
    let _ = writeln!(out, "# modes = {}, cutoff = {}", rho.mode_count(), rho.cutoff());
    out += "row,col,re,im\n";
    let m = rho.elements();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            let _ = writeln!(out, "{i},{j},{:.16e},{:.16e}", z.re, z.im);
        }
    }
    out
}
