//! Primal network simplex for the uncapacitated transportation problem.
//!
//! Nodes `0..m` are sources, `m..m+n` targets and `m+n` an artificial root.
//! Every tree arc is stored at its lower endpoint; arcs always run from the
//! source side (source → target, source → root, root → target), so a node's
//! arc points up exactly when the node is a source.

use crate::error::{Error, Result};

pub(crate) struct SimplexSolution {
    /// Positive flows on real arcs as `(source, target, flow)`.
    pub flows: Vec<(usize, usize, f64)>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

const NONE: usize = usize::MAX;

struct Tree {
    m: usize,
    parent: Vec<usize>,
    flow: Vec<f64>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    children: Vec<Vec<usize>>,
}

impl Tree {
    fn up(&self, w: usize) -> bool {
        w < self.m
    }
}

pub(crate) fn solve<C>(supply: &[f64], demand: &[f64], cost: C, max_pivots: usize) -> Result<SimplexSolution>
where
    C: Fn(usize, usize) -> f64,
{
    let m = supply.len();
    let n = demand.len();
    let root = m + n;
    let mut cmax: f64 = 0.0;
    // rough cost scale from a strided sample plus the diagonal corners
    let stride = ((m * n) / 4096).max(1);
    let mut k = 0;
    while k < m * n {
        cmax = cmax.max(cost(k / n, k % n));
        k += stride;
    }
    for i in 0..m {
        cmax = cmax.max(cost(i, 0)).max(cost(i, n - 1));
    }
    for j in 0..n {
        cmax = cmax.max(cost(0, j)).max(cost(m - 1, j));
    }
    let big_m = (m + n) as f64 * (cmax + 1.0) + 1.0;
    let tol = 1e-12 * (cmax + 1.0) * ((m + n) as f64).sqrt();

    let mut t = Tree {
        m,
        parent: vec![root; m + n + 1],
        flow: vec![0.0; m + n + 1],
        depth: vec![1; m + n + 1],
        pi: vec![0.0; m + n + 1],
        children: vec![Vec::new(); m + n + 1],
    };
    t.parent[root] = NONE;
    t.depth[root] = 0;
    for i in 0..m {
        t.flow[i] = supply[i];
        t.pi[i] = big_m;
    }
    for j in 0..n {
        t.flow[m + j] = demand[j];
        t.pi[m + j] = -big_m;
    }
    t.children[root] = (0..m + n).collect();

    let total = m * n;
    let block = ((total as f64).sqrt().ceil() as usize).max(16).min(total);
    let mut next = 0usize;
    let mut pivots = 0usize;
    let mut u_path = Vec::new();
    let mut v_path = Vec::new();
    let mut stack = Vec::new();
    loop {
        // block search for the entering arc
        let mut best = -tol;
        let mut enter = NONE;
        let mut scanned = 0;
        while scanned < total {
            let end = (scanned + block).min(total);
            for _ in scanned..end {
                let i = next / n;
                let j = next % n;
                let rc = cost(i, j) - t.pi[i] + t.pi[m + j];
                if rc < best {
                    best = rc;
                    enter = next;
                }
                next += 1;
                if next == total {
                    next = 0;
                }
            }
            scanned = end;
            if enter != NONE {
                break;
            }
        }
        if enter == NONE {
            break;
        }
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::NoConvergence { iterations: pivots, violation: best.abs() });
        }
        let (ei, ej) = (enter / n, enter % n);
        let u = ei;
        let v = m + ej;
        let rc = best;

        // cycle: apex -> u (down), u -> v (entering), v -> apex (up)
        u_path.clear();
        v_path.clear();
        let (mut a, mut b) = (u, v);
        while t.depth[a] > t.depth[b] {
            u_path.push(a);
            a = t.parent[a];
        }
        while t.depth[b] > t.depth[a] {
            v_path.push(b);
            b = t.parent[b];
        }
        while a != b {
            u_path.push(a);
            a = t.parent[a];
            v_path.push(b);
            b = t.parent[b];
        }
        // leaving arc: last minimal blocking arc in flow order starting at the apex
        let mut theta = f64::INFINITY;
        let mut leave = NONE;
        for &w in u_path.iter().rev() {
            if t.up(w) && t.flow[w] <= theta {
                theta = t.flow[w];
                leave = w;
            }
        }
        for &w in v_path.iter() {
            if !t.up(w) && t.flow[w] <= theta {
                theta = t.flow[w];
                leave = w;
            }
        }
        if leave == NONE {
            return Err(Error::NoConvergence { iterations: pivots, violation: rc.abs() });
        }
        for &w in &u_path {
            if t.up(w) {
                t.flow[w] -= theta;
            } else {
                t.flow[w] += theta;
            }
        }
        for &w in &v_path {
            if t.up(w) {
                t.flow[w] += theta;
            } else {
                t.flow[w] -= theta;
            }
        }
        let leave_on_u = u_path.contains(&leave);
        let (s_in, s_out) = if leave_on_u { (u, v) } else { (v, u) };

        // detach the subtree below `leave` and re-hang it from s_out through the entering arc
        let p = t.parent[leave];
        let pos = t.children[p].iter().position(|&c| c == leave).unwrap();
        t.children[p].swap_remove(pos);
        let mut w = s_in;
        let mut carried = theta;
        let mut new_parent = s_out;
        loop {
            let old_parent = t.parent[w];
            let old_flow = t.flow[w];
            t.parent[w] = new_parent;
            t.flow[w] = carried;
            t.children[new_parent].push(w);
            if w == leave {
                break;
            }
            let pos = t.children[old_parent].iter().position(|&c| c == w).unwrap();
            t.children[old_parent].swap_remove(pos);
            carried = old_flow;
            new_parent = w;
            w = old_parent;
        }
        // shift potentials and depths of the re-hung subtree
        let delta = if s_in == v { -rc } else { rc };
        stack.clear();
        stack.push(s_in);
        t.depth[s_in] = t.depth[s_out] + 1;
        while let Some(x) = stack.pop() {
            t.pi[x] += delta;
            for k in 0..t.children[x].len() {
                let c = t.children[x][k];
                t.depth[c] = t.depth[x] + 1;
                stack.push(c);
            }
        }
    }

    let mut flows = Vec::with_capacity(m + n);
    for w in 0..m + n {
        let p = t.parent[w];
        if p == root || t.flow[w] <= 0.0 {
            continue;
        }
        if w < m {
            flows.push((w, p - m, t.flow[w]));
        } else {
            flows.push((p, w - m, t.flow[w]));
        }
    }
    flows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let alpha = t.pi[..m].to_vec();
    let beta = t.pi[m..m + n].iter().map(|p| -p).collect();
    Ok(SimplexSolution { flows, alpha, beta })
}
