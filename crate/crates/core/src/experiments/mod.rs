//! Empirical stability sweeps, Brascamp–Lieb checks and identity suites.
//!
//! Every sweep is driven by a serializable [`Family`]; the report carries the
//! family so each row can be regenerated from the report alone.

mod brascamp_lieb;
mod families;
mod identities;
mod sweeps;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::ot_discrete::Backend;

pub use brascamp_lieb::{brascamp_lieb_check, brascamp_lieb_suite, BrascampLieb, BrascampLiebSuite, BL_CLAMP_FLOOR, MAX_CLAMP_RATE};
pub use families::{Family, Instance};
pub use identities::{identity_suite, IdentityReport};
pub use sweeps::{brenier_potential, gradient_rows, gradient_stability, holder_exponent_p, holder_rows, holder_stability, potential_rows, potential_stability, QUANTILE_ATOMS};

/// Which stability estimate a sweep probes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem {
    /// ‖∇φ₁−∇φ₀‖_{L²} against d₂(f₀,f₁)+d₂(g₀,g₁).
    #[serde(rename = "1.1")]
    Gradient,
    /// Normalized potentials against L² density differences.
    #[serde(rename = "1.2")]
    Potential,
    /// C^{1,α} norms against L^p density differences.
    #[serde(rename = "1.3")]
    Holder,
}

impl Theorem {
    pub fn tag(self) -> &'static str {
        match self {
            Theorem::Gradient => "1.1",
            Theorem::Potential => "1.2",
            Theorem::Holder => "1.3",
        }
    }
}

impl FromStr for Theorem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "1.1" => Ok(Theorem::Gradient),
            "1.2" => Ok(Theorem::Potential),
            "1.3" => Ok(Theorem::Holder),
            _ => Err(Error::RangeError(format!("unknown theorem tag '{s}' (expected 1.1, 1.2 or 1.3)"))),
        }
    }
}

/// One instance of a sweep. Failed instances keep their row with `error` set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub index: usize,
    pub size: f64,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    /// lhs / rhs, absent when rhs = 0.
    pub ratio: Option<f64>,
    /// Secondary left side: plan distance (1.1), gradient norm (1.2), midpoint gap (negative control).
    pub lhs_alt: Option<f64>,
    /// Secondary right side when it differs from `rhs` (rhs^{1/3} for 1.2).
    pub rhs_alt: Option<f64>,
    pub ratio_alt: Option<f64>,
    pub error: Option<String>,
}

impl StabilityRow {
    pub(crate) fn failed(index: usize, size: f64, e: &Error) -> Self {
        StabilityRow { index, size, lhs: None, rhs: None, ratio: None, lhs_alt: None, rhs_alt: None, ratio_alt: None, error: Some(e.to_string()) }
    }
}

/// Ratio table of one sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub theorem: Theorem,
    pub family: Family,
    pub backend: Backend,
    pub alpha: Option<f64>,
    pub p: Option<f64>,
    /// Largest |∫e^{−φ} − 1| over the normalized potentials of a 1.2 sweep.
    pub normalization_defect: Option<f64>,
    pub columns: Vec<String>,
    pub rows: Vec<StabilityRow>,
}

impl StabilityReport {
    /// Largest over smallest ratio among rows that have one.
    pub fn ratio_spread(&self) -> Option<f64> {
        let r: Vec<f64> = self.rows.iter().filter_map(|r| r.ratio).collect();
        if r.is_empty() {
            return None;
        }
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = r.iter().copied().fold(f64::INFINITY, f64::min);
        Some(max / min)
    }
}

pub(crate) fn ratio(lhs: f64, rhs: f64) -> Option<f64> {
    (rhs > 0.0).then(|| lhs / rhs)
}

pub(crate) fn sort_rows(rows: &mut [StabilityRow]) {
    rows.sort_by(|a, b| a.size.total_cmp(&b.size).then(a.index.cmp(&b.index)));
}
