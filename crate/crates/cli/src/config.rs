//! JSON run configuration. Every subcommand accepts `--config FILE`; keys of the
//! file mirror the long flags (with `_` for `-`), unknown keys are rejected and
//! flags given on the command line take precedence over the file. Relative input
//! paths in a config file are resolved against the file's directory.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use otlab::experiments::{Family, Theorem};
use otlab::ot_discrete::Backend;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::CliError;

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config { path: path.to_path_buf(), message: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config { path: path.to_path_buf(), message: e.to_string() })
}

/// Path of an input file; relative paths from a config file are taken relative to it.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(transparent)]
pub struct InputPath(pub PathBuf);

impl FromStr for InputPath {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(InputPath(PathBuf::from(s)))
    }
}

impl InputPath {
    /// The path, or an error naming `key` if the file is missing.
    pub fn existing(&self, key: &'static str) -> Result<&Path, CliError> {
        if self.0.is_file() {
            Ok(&self.0)
        } else {
            Err(CliError::MissingFile { key, path: self.0.clone() })
        }
    }
}

pub trait Rebase: Sized {
    fn rebase(self, _dir: &Path) -> Self {
        self
    }
}

impl Rebase for InputPath {
    fn rebase(self, dir: &Path) -> Self {
        if self.0.is_absolute() {
            self
        } else {
            InputPath(dir.join(self.0))
        }
    }
}

impl Rebase for PathBuf {}
impl Rebase for f64 {}
impl Rebase for u64 {}
impl Rebase for usize {}
impl Rebase for bool {}
impl Rebase for String {}
impl Rebase for Vec<f64> {}
impl Rebase for Vec<usize> {}
impl Rebase for BackendName {}
impl Rebase for PathKindName {}
impl Rebase for FamilySpec {}
impl Rebase for Theorem {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendName {
    Auto,
    Exact,
    Sinkhorn,
}

/// Resolve a backend name and ε; `None` means automatic selection.
pub fn backend(name: Option<BackendName>, eps: Option<f64>, default: BackendName) -> Result<Option<Backend>, CliError> {
    if let Some(e) = eps {
        if !(e > 0.0 && e.is_finite()) {
            return Err(CliError::invalid("eps", format!("regularization {e} must be positive")));
        }
    }
    match name.unwrap_or(default) {
        BackendName::Auto => Ok(None),
        BackendName::Exact => Ok(Some(Backend::Exact)),
        BackendName::Sinkhorn => match eps {
            Some(eps) => Ok(Some(Backend::Sinkhorn { eps })),
            None => Err(CliError::MissingKey("eps", "eps")),
        },
    }
}

pub fn backend_name(b: Option<Backend>) -> &'static str {
    match b {
        None => "auto",
        Some(Backend::Exact) => "exact",
        Some(Backend::Sinkhorn { .. }) => "sinkhorn",
    }
}

pub fn positive(key: &'static str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::invalid(key, format!("{v} must be positive")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PathKindName {
    Linear,
    Multiplicative,
    Geodesic,
}

/// A family given by name (default parameters) or as a full descriptor.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum FamilySpec {
    Name(String),
    Full(Family),
}

impl FromStr for FamilySpec {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(FamilySpec::Name(s.to_string()))
    }
}

fn spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Default parameters of every named family.
pub fn default_family(name: &str, seed: u64) -> Result<Family, CliError> {
    Ok(match name {
        "translation" => Family::Translation { cells: 400, sizes: spaced(0.02, 0.2, 10) },
        "multiplicative" => Family::Multiplicative { cells: 1000, sizes: spaced(0.05, 0.4, 8) },
        "piecewise_constant" => Family::PiecewiseConstant { cells: 800, sizes: vec![0.025, 0.05, 0.1, 0.2, 0.4] },
        "random_smooth" => Family::RandomSmooth { cells: 200, seed, count: 20, floor: 0.2, size_range: [0.01, 0.5] },
        "disk" => Family::Disk { n: 24, sizes: vec![0.05, 0.1, 0.2, 0.4] },
        "counterexample" => Family::Counterexample { p: 2.0, eta: 0.9, eps: vec![1e-1, 1e-2, 1e-3, 1e-4] },
        other => {
            return Err(CliError::invalid(
                "family",
                format!("unknown family '{other}' (expected translation, multiplicative, piecewise_constant, random_smooth, disk or counterexample)"),
            ))
        }
    })
}

/// Declare a subcommand's options once for both the command line and the config file.
macro_rules! options {
    ($(#[$m:meta])* pub struct $name:ident { $( $(#[$fm:meta])* pub $field:ident : Option<$ty:ty> ),* $(,)? }) => {
        $(#[$m])*
        #[derive(clap::Args, serde::Deserialize, Debug, Default, Clone)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            /// JSON config file; flags override its keys
            #[arg(long)]
            #[serde(skip)]
            pub config: Option<std::path::PathBuf>,
            $( $(#[$fm])* #[serde(default)] pub $field: Option<$ty>, )*
        }

        impl $name {
            /// Fill unset flags from the config file.
            pub fn merged(self) -> Result<Self, $crate::error::CliError> {
                let Some(path) = self.config.clone() else { return Ok(self) };
                let cfg: $name = $crate::config::load(&path)?;
                let dir = path.parent().map(|p| p.to_path_buf()).unwrap_or_default();
                Ok($name {
                    config: Some(path),
                    $( $field: self.$field.or(cfg.$field.map(|v| $crate::config::Rebase::rebase(v, &dir))), )*
                })
            }
        }
    };
}

pub(crate) use options;
