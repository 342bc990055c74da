use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

/// Accumulates entries row by row; duplicates are summed in insertion order.
pub(crate) struct Builder {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Builder {
    pub fn new(n: usize) -> Self {
        Builder { rows: vec![Vec::new(); n] }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.rows[i].push((j, v));
    }

    /// Energy term w·(x_a − x_b)².
    pub fn edge(&mut self, a: usize, b: usize, w: f64) {
        self.add(a, a, w);
        self.add(b, b, w);
        self.add(a, b, -w);
        self.add(b, a, -w);
    }

    pub fn finish(self) -> SparseMatrix {
        let n = self.rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in self.rows {
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut s = 0.0;
                while k < row.len() && row[k].0 == c {
                    s += row[k].1;
                    k += 1;
                }
                cols.push(c);
                vals.push(s);
            }
            row_ptr.push(cols.len());
        }
        SparseMatrix { n, row_ptr, cols, vals }
    }
}

impl SparseMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match r.binary_search(&j) {
            Ok(k) => self.vals[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(|k| self.vals[k] * x[self.cols[k]]).sum())
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Exact (bitwise) symmetry of the stored entries.
    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).all(|k| self.get(self.cols[k], i) == self.vals[k]))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[i][self.cols[k]] = self.vals[k];
            }
        }
        d
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn deflate(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

pub(crate) struct PcgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Jacobi-preconditioned conjugate gradients on the complement of the constants,
/// for a symmetric positive semidefinite matrix whose kernel is the constants.
pub(crate) fn pcg(m: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<PcgOutcome> {
    let n = m.dim();
    let mut r = b.to_vec();
    deflate(&mut r);
    let bnorm = dot(&r, &r).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(PcgOutcome { x, iterations: 0, residual: 0.0 });
    }
    let inv_diag: Vec<f64> = m.diagonal().iter().map(|d| if *d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let precondition = |r: &[f64]| {
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
        deflate(&mut z);
        z
    };
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    loop {
        let rn = dot(&r, &r).sqrt() / bnorm;
        if rn <= tol {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::SolverFailure { iterations, residual: rn });
        }
        iterations += 1;
        let ap = m.mul(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolverFailure { iterations, residual: rn });
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        z = precondition(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    // true residual of the deflated system
    let mut res = m.mul(&x);
    let mut bd = b.to_vec();
    deflate(&mut bd);
    res.iter_mut().zip(&bd).for_each(|(a, b)| *a = b - *a);
    let residual = dot(&res, &res).sqrt() / bnorm;
    Ok(PcgOutcome { x, iterations, residual })
}
