use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Domain, ScalarField, Vec2, VectorField};
use crate::error::{Error, Result};

/// Seed of the pair sample used by the Hölder estimator on large meshes.
pub const HOLDER_SEED: u64 = 0x5EED;
/// Node count up to which every pair enters the Hölder estimator.
pub const HOLDER_ALL_PAIRS_MAX: usize = 2000;
/// Number of sampled pairs above that count.
pub const HOLDER_SAMPLE_PAIRS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpNorm {
    pub p: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub lp_norms: Vec<LpNorm>,
    pub sup_norm: f64,
    pub alpha: Option<f64>,
    pub holder_seminorm: Option<f64>,
    pub pairs_sampled: usize,
}

impl NormReport {
    pub fn lp(&self, p: f64) -> Option<f64> {
        self.lp_norms.iter().find(|n| n.p == p).map(|n| n.value)
    }
}

/// Nodal data whose pointwise magnitude and differences can be measured.
pub trait NodeField {
    fn domain(&self) -> &Domain;
    fn node_count(&self) -> usize;
    fn magnitude(&self, i: usize) -> f64;
    fn distance(&self, i: usize, j: usize) -> f64;
}

impl NodeField for ScalarField {
    fn domain(&self) -> &Domain {
        ScalarField::domain(self)
    }
    fn node_count(&self) -> usize {
        self.len()
    }
    fn magnitude(&self, i: usize) -> f64 {
        self.values()[i].abs()
    }
    fn distance(&self, i: usize, j: usize) -> f64 {
        (self.values()[i] - self.values()[j]).abs()
    }
}

impl NodeField for VectorField {
    fn domain(&self) -> &Domain {
        VectorField::domain(self)
    }
    fn node_count(&self) -> usize {
        self.len()
    }
    fn magnitude(&self, i: usize) -> f64 {
        self.values()[i].norm()
    }
    fn distance(&self, i: usize, j: usize) -> f64 {
        (self.values()[i] - self.values()[j]).norm()
    }
}

/// L^p norms by quadrature, the sup over nodes and optionally the Hölder seminorm estimator.
pub fn norms<F: NodeField>(field: &F, ps: &[f64], alpha: Option<f64>) -> Result<NormReport> {
    if field.node_count() == 0 {
        return Err(Error::EmptyInput("field has no nodes".into()));
    }
    if let Some(&p) = ps.iter().find(|&&p| !(p >= 1.0)) {
        return Err(Error::RangeError(format!("L^p exponent {p} is below 1")));
    }
    if let Some(a) = alpha {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::RangeError(format!("Hölder order {a} is outside (0, 1]")));
        }
    }
    let domain = field.domain();
    let vol = domain.volumes();
    let support: Vec<usize> = (0..field.node_count()).filter(|&i| vol[i] > 0.0).collect();
    let lp_norms = ps
        .iter()
        .map(|&p| {
            let s: f64 = support.iter().map(|&i| field.magnitude(i).powf(p) * vol[i]).sum();
            LpNorm { p, value: s.powf(1.0 / p) }
        })
        .collect();
    let sup_norm = support.iter().map(|&i| field.magnitude(i)).fold(0.0, f64::max);
    let (holder, pairs) = match alpha {
        None => (None, 0),
        Some(a) => {
            let (v, n) = holder_seminorm(field, domain.nodes(), &support, a);
            (Some(v), n)
        }
    };
    Ok(NormReport { lp_norms, sup_norm, alpha, holder_seminorm: holder, pairs_sampled: pairs })
}

fn holder_seminorm<F: NodeField>(field: &F, nodes: &[Vec2], support: &[usize], alpha: f64) -> (f64, usize) {
    let quotient = |i: usize, j: usize| {
        let d = (nodes[i] - nodes[j]).norm();
        if d > 0.0 {
            field.distance(i, j) / d.powf(alpha)
        } else {
            0.0
        }
    };
    let n = support.len();
    if n <= HOLDER_ALL_PAIRS_MAX {
        let mut best: f64 = 0.0;
        for a in 0..n {
            for b in a + 1..n {
                best = best.max(quotient(support[a], support[b]));
            }
        }
        (best, n * n.saturating_sub(1) / 2)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(HOLDER_SEED);
        let mut best: f64 = 0.0;
        for _ in 0..HOLDER_SAMPLE_PAIRS {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            best = best.max(quotient(support[a], support[b]));
        }
        (best, HOLDER_SAMPLE_PAIRS)
    }
}
