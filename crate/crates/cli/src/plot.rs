//! CSV tables with a sidecar column description, and minimal SVG line plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(usize),
    Num(Option<f64>),
    Text(Option<String>),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(Some(v)) => v.to_string(),
            Cell::Num(None) | Cell::Text(None) => String::new(),
            Cell::Text(Some(s)) => quote(s),
        }
    }

    fn number(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Num(v) => *v,
            Cell::Text(_) => None,
        }
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Column names with their descriptions, and rows of cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[(&str, &str)]) -> Self {
        Table { columns: columns.iter().map(|(n, d)| (n.to_string(), d.to_string())).collect(), rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|(n, _)| n == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.iter().map(|(n, _)| quote(n)).collect::<Vec<_>>().join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(Cell::render).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    /// One `name: description` line per column.
    pub fn header_text(&self) -> String {
        self.columns.iter().map(|(n, d)| format!("{n}: {d}\n")).collect()
    }

    /// Polyline of column `y` against column `x`, optionally with a logarithmic x axis.
    pub fn to_svg(&self, x: &str, y: &str, log_x: bool, title: &str) -> String {
        let (xi, yi) = (self.column(x), self.column(y));
        let mut pts: Vec<(f64, f64)> = match (xi, yi) {
            (Some(xi), Some(yi)) => self
                .rows
                .iter()
                .filter_map(|r| Some((r[xi].number()?, r[yi].number()?)))
                .filter(|(a, b)| a.is_finite() && b.is_finite() && (!log_x || *a > 0.0))
                .map(|(a, b)| (if log_x { a.log10() } else { a }, b))
                .collect(),
            _ => Vec::new(),
        };
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        svg(&pts, x, y, log_x, title)
    }
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: f64 = 60.0;

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn svg(pts: &[(f64, f64)], xl: &str, yl: &str, log_x: bool, title: &str) -> String {
    let (x0, x1) = range(pts.iter().map(|p| p.0));
    let (y0, y1) = range(pts.iter().map(|p| p.1));
    let (x0, x1) = if log_x { (x0.floor(), x1.ceil().max(x0.floor() + 1.0)) } else { (x0, x1) };
    let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#, W / 2.0, escape(title)).unwrap();
    writeln!(s, r#"<line x1="{M}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, H - M, W - M, H - M).unwrap();
    writeln!(s, r#"<line x1="{M}" y1="{M}" x2="{M}" y2="{}" stroke="black"/>"#, H - M).unwrap();
    let xticks: Vec<f64> = if log_x {
        (x0 as i64..=x1 as i64).map(|k| k as f64).collect()
    } else {
        (0..=4).map(|k| x0 + (x1 - x0) * k as f64 / 4.0).collect()
    };
    for t in xticks {
        let label = if log_x { format!("1e{}", t as i64) } else { format!("{t:.3}") };
        writeln!(s, r#"<line x1="{0:.2}" y1="{1}" x2="{0:.2}" y2="{2}" stroke="black"/>"#, sx(t), H - M, H - M + 5.0).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle" font-size="12">{label}</text>"#, sx(t), H - M + 20.0).unwrap();
    }
    for k in 0..=4 {
        let t = y0 + (y1 - y0) * k as f64 / 4.0;
        writeln!(s, r#"<line x1="{}" y1="{1:.2}" x2="{M}" y2="{1:.2}" stroke="black"/>"#, M - 5.0, sy(t)).unwrap();
        writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end" font-size="12">{}</text>"#, M - 8.0, sy(t) + 4.0, format_tick(t)).unwrap();
    }
    let xlabel = if log_x { format!("{xl} (log scale)") } else { xl.to_string() };
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, H - 15.0, escape(&xlabel)).unwrap();
    writeln!(s, r#"<text x="15" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 15 {})">{}</text>"#, H / 2.0, H / 2.0, escape(yl)).unwrap();
    if !pts.is_empty() {
        let line: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        writeln!(s, r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#, line.join(" ")).unwrap();
        for &(x, y) in pts {
            writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#, sx(x), sy(y)).unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Sidecar path holding the column descriptions of a CSV file.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".header");
    PathBuf::from(s)
}

pub fn write(key: &'static str, path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io { key, path: path.to_path_buf(), message: e.to_string() })
}

/// Write the CSV and its sidecar header.
pub fn write_csv(key: &'static str, path: &Path, table: &Table) -> Result<(), CliError> {
    write(key, path, &table.to_csv())?;
    write(key, &sidecar(path), &table.header_text())
}
