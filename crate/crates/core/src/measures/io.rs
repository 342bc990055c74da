//! Plain-text storage of densities and scalar fields.
//!
//! ```text
//! otlab-density v1            (or: otlab-field v1)
//! domain interval 0 1         (disk cx cy r | ellipse cx cy rx ry | rectangle x0 y0 x1 y1)
//! mesh line 100               (tensor n1 n2 | polar nr ntheta | cartesian n)
//! floor 0.5                   (densities only)
//! values
//! 1 1 1 ...                   (node values in row-major order)
//! ```
//!
//! Lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use super::{DensityGrid, Domain, Resolution, ScalarField, Shape};
use crate::error::{Error, Result};

const DENSITY_MAGIC: &str = "otlab-density v1";
const FIELD_MAGIC: &str = "otlab-field v1";

fn resolution_of(domain: &Domain) -> Resolution {
    use super::Layout;
    match *domain.mesh().layout() {
        Layout::Line { cells, .. } => Resolution::Line { cells },
        Layout::Tensor { n, .. } if domain.mesh().is_cut() => Resolution::Cartesian { n: n[0] },
        Layout::Tensor { n, .. } => Resolution::Tensor { n },
        Layout::Polar { nr, ntheta, .. } => Resolution::Polar { nr, ntheta },
    }
}

fn header(out: &mut String, magic: &str, domain: &Domain) {
    writeln!(out, "{magic}").unwrap();
    match *domain.shape() {
        Shape::Interval { a, b } => writeln!(out, "domain interval {a} {b}"),
        Shape::Disk { center, radius } => writeln!(out, "domain disk {} {} {radius}", center[0], center[1]),
        Shape::Ellipse { center, radii } => {
            writeln!(out, "domain ellipse {} {} {} {}", center[0], center[1], radii[0], radii[1])
        }
        Shape::Rectangle { lo, hi } => writeln!(out, "domain rectangle {} {} {} {}", lo[0], lo[1], hi[0], hi[1]),
    }
    .unwrap();
    match resolution_of(domain) {
        Resolution::Line { cells } => writeln!(out, "mesh line {cells}"),
        Resolution::Tensor { n } => writeln!(out, "mesh tensor {} {}", n[0], n[1]),
        Resolution::Polar { nr, ntheta } => writeln!(out, "mesh polar {nr} {ntheta}"),
        Resolution::Cartesian { n } => writeln!(out, "mesh cartesian {n}"),
    }
    .unwrap();
}

fn body(out: &mut String, values: &[f64]) {
    out.push_str("values\n");
    for (k, v) in values.iter().enumerate() {
        out.push_str(&v.to_string());
        out.push(if k % 8 == 7 || k + 1 == values.len() { '\n' } else { ' ' });
    }
}

pub fn format_density(d: &DensityGrid) -> String {
    let mut out = String::new();
    header(&mut out, DENSITY_MAGIC, d.domain());
    writeln!(out, "floor {}", d.floor()).unwrap();
    body(&mut out, d.values());
    out
}

pub fn format_field(u: &ScalarField) -> String {
    let mut out = String::new();
    header(&mut out, FIELD_MAGIC, u.domain());
    body(&mut out, u.values());
    out
}

struct Parsed {
    domain: Arc<Domain>,
    floor: Option<f64>,
    values: Vec<f64>,
}

fn nums(words: &[&str], n: usize, key: &str) -> Result<Vec<f64>> {
    if words.len() != n {
        return Err(Error::Parse(format!("`{key}` expects {n} numbers, found {}", words.len())));
    }
    words
        .iter()
        .map(|w| w.parse::<f64>().map_err(|_| Error::Parse(format!("`{key}`: cannot read number `{w}`"))))
        .collect()
}

fn ints(words: &[&str], n: usize, key: &str) -> Result<Vec<usize>> {
    if words.len() != n {
        return Err(Error::Parse(format!("`{key}` expects {n} integers, found {}", words.len())));
    }
    words
        .iter()
        .map(|w| w.parse::<usize>().map_err(|_| Error::Parse(format!("`{key}`: cannot read integer `{w}`"))))
        .collect()
}

fn parse(text: &str, magic: &str) -> Result<Parsed> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some(l) if l == magic => {}
        other => return Err(Error::Parse(format!("expected header `{magic}`, found `{}`", other.unwrap_or("")))),
    }
    let mut shape = None;
    let mut res = None;
    let mut floor = None;
    let mut values = Vec::new();
    let mut in_values = false;
    for line in lines {
        if in_values {
            for w in line.split_whitespace() {
                values.push(w.parse::<f64>().map_err(|_| Error::Parse(format!("values: cannot read number `{w}`")))?);
            }
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        match words[0] {
            "domain" => {
                let kind = words.get(1).copied().unwrap_or("");
                let rest = &words[2.min(words.len())..];
                shape = Some(match kind {
                    "interval" => {
                        let v = nums(rest, 2, "domain interval")?;
                        Shape::Interval { a: v[0], b: v[1] }
                    }
                    "disk" => {
                        let v = nums(rest, 3, "domain disk")?;
                        Shape::Disk { center: [v[0], v[1]], radius: v[2] }
                    }
                    "ellipse" => {
                        let v = nums(rest, 4, "domain ellipse")?;
                        Shape::Ellipse { center: [v[0], v[1]], radii: [v[2], v[3]] }
                    }
                    "rectangle" => {
                        let v = nums(rest, 4, "domain rectangle")?;
                        Shape::Rectangle { lo: [v[0], v[1]], hi: [v[2], v[3]] }
                    }
                    other => return Err(Error::Parse(format!("unknown domain kind `{other}`"))),
                });
            }
            "mesh" => {
                let kind = words.get(1).copied().unwrap_or("");
                let rest = &words[2.min(words.len())..];
                res = Some(match kind {
                    "line" => Resolution::Line { cells: ints(rest, 1, "mesh line")?[0] },
                    "tensor" => {
                        let v = ints(rest, 2, "mesh tensor")?;
                        Resolution::Tensor { n: [v[0], v[1]] }
                    }
                    "polar" => {
                        let v = ints(rest, 2, "mesh polar")?;
                        Resolution::Polar { nr: v[0], ntheta: v[1] }
                    }
                    "cartesian" => Resolution::Cartesian { n: ints(rest, 1, "mesh cartesian")?[0] },
                    other => return Err(Error::Parse(format!("unknown mesh kind `{other}`"))),
                });
            }
            "floor" => floor = Some(nums(&words[1..], 1, "floor")?[0]),
            "values" => in_values = true,
            other => return Err(Error::Parse(format!("unknown key `{other}`"))),
        }
    }
    let shape = shape.ok_or_else(|| Error::Parse("missing `domain` line".into()))?;
    let res = res.ok_or_else(|| Error::Parse("missing `mesh` line".into()))?;
    if !in_values {
        return Err(Error::Parse("missing `values` section".into()));
    }
    let domain = Domain::new(shape, res)?;
    if values.len() != domain.len() {
        return Err(Error::Parse(format!("expected {} values, found {}", domain.len(), values.len())));
    }
    Ok(Parsed { domain, floor, values })
}

/// Parse a density; values are renormalized to unit mass and checked against the floor.
pub fn parse_density(text: &str) -> Result<DensityGrid> {
    let p = parse(text, DENSITY_MAGIC)?;
    DensityGrid::new(p.domain, p.values, p.floor.unwrap_or(0.0))
}

pub fn parse_field(text: &str) -> Result<ScalarField> {
    let p = parse(text, FIELD_MAGIC)?;
    ScalarField::new(p.domain, p.values)
}

pub fn read_density(path: impl AsRef<Path>) -> Result<DensityGrid> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_density(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn read_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_field(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_density(path: impl AsRef<Path>, d: &DensityGrid) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_density(d)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_field(path: impl AsRef<Path>, u: &ScalarField) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_field(u)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
