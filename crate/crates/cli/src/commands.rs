use std::path::{Path, PathBuf};

use otlab::experiments::{
    brascamp_lieb_check, brascamp_lieb_suite, brenier_potential, gradient_stability, holder_stability, identity_suite, potential_stability, Family,
    StabilityReport, Theorem,
};
use otlab::linear_response::solve_response;
use otlab::measures::io::{read_density, read_field, write_density, write_field};
use otlab::measures::{integrate, DensityGrid, Domain, ScalarField};
use otlab::ot1d::{counterexample_sweep, d2_1d};
use otlab::ot_discrete::{d2_points_with, Backend, D2Report, PointSet, SinkhornOptions};
use otlab::paths::{geodesic, geodesic_action, linear_path, multiplicative_path, DensityPath, BB_NODES};
use otlab::second_variation::{auto_backend, run_second_variation, SecondVariationOptions, FD_SINKHORN_TOL};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{backend, backend_name, default_family, options, positive, BackendName, FamilySpec, InputPath, PathKindName};
use crate::error::{CliError, Context};
use crate::plot::{self, Cell, Table};
use crate::Globals;

fn require<T>(v: Option<T>, key: &'static str, flag: &'static str) -> Result<T, CliError> {
    v.ok_or(CliError::MissingKey(key, flag))
}

fn density(p: Option<InputPath>, key: &'static str) -> Result<DensityGrid, CliError> {
    let p = require(p, key, key)?;
    read_density(p.existing(key)?).key(key)
}

fn field(p: Option<InputPath>, key: &'static str) -> Result<ScalarField, CliError> {
    let p = require(p, key, key)?;
    read_field(p.existing(key)?).key(key)
}

/// Field data share the mesh of their density; rebuild them on that mesh.
fn on_mesh_of(u: ScalarField, d: &DensityGrid, key: &'static str) -> Result<ScalarField, CliError> {
    if !Domain::same_mesh(u.domain(), d.domain()) {
        return Err(CliError::Core { key, source: otlab::Error::MeshMismatch });
    }
    ScalarField::new(d.domain().clone(), u.into_values()).key(key)
}

fn to_object(v: impl Serialize) -> Map<String, Value> {
    match serde_json::to_value(v).expect("serializable output") {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("result".into(), other);
            m
        }
    }
}

/// JSON envelope shared by all subcommands.
fn envelope(command: &str, g: Globals, seed: u64, backend: &str, body: Map<String, Value>) -> Value {
    let mut m = body;
    m.insert("command".into(), json!(command));
    m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert("seed".into(), json!(seed));
    m.insert("backend".into(), json!(backend));
    let timings = if g.wall_clock {
        json!({ "wall_clock": true, "seconds": g.started.elapsed().as_secs_f64() })
    } else {
        json!({ "wall_clock": false, "seconds": null })
    };
    m.insert("timings".into(), timings);
    Value::Object(m)
}

fn emit(value: &Value, json_flag: Option<bool>, out: Option<&Path>, summary: &str) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("valid JSON") + "\n";
    if let Some(p) = out {
        plot::write("out", p, &text)?;
    }
    if json_flag.unwrap_or(false) {
        print!("{text}");
    } else {
        println!("{summary}");
    }
    Ok(())
}

options! {
    pub struct D2Opts {
        /// Source density file
        #[arg(long)]
        pub mu: Option<InputPath>,
        /// Target density file
        #[arg(long)]
        pub nu: Option<InputPath>,
        /// exact, sinkhorn or auto
        #[arg(long, value_enum)]
        pub backend: Option<BackendName>,
        /// Entropic regularization for the sinkhorn backend
        #[arg(long)]
        pub eps: Option<f64>,
        /// Marginal tolerance of the sinkhorn backend
        #[arg(long)]
        pub tol: Option<f64>,
        /// Iteration cap of the sinkhorn backend
        #[arg(long)]
        pub max_iter: Option<usize>,
        /// Print JSON to stdout
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        pub json: Option<bool>,
        /// Write JSON to this file
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

pub fn d2(o: D2Opts, g: Globals) -> Result<(), CliError> {
    let o = o.merged()?;
    let mu = density(o.mu, "mu")?;
    let nu = density(o.nu, "nu")?;
    let tol = positive("tol", o.tol.unwrap_or(FD_SINKHORN_TOL))?;
    if o.max_iter == Some(0) {
        return Err(CliError::invalid("max_iter", "must be at least 1"));
    }
    let b = backend(o.backend, o.eps, BackendName::Exact)?.unwrap_or_else(|| auto_backend(&mu, &nu));
    if mu.dim() != nu.dim() {
        return Err(CliError::invalid("nu", format!("dimension {} differs from the source dimension {}", nu.dim(), mu.dim())));
    }
    let report = if mu.dim() == 1 && b == Backend::Exact {
        D2Report { d2: d2_1d(&mu, &nu).key("mu")?, backend: "exact".into(), eps: None, debiased: false, marginal_violation: 0.0, atoms: 0 }
    } else {
        let (a, _) = PointSet::from_density(&mu);
        let (c, _) = PointSet::from_density(&nu);
        let mut opts = SinkhornOptions { tol, ..SinkhornOptions::default() };
        if let Some(n) = o.max_iter {
            opts.max_iter = n;
        }
        d2_points_with(&a, &c, b, &opts).key("backend")?
    };
    let summary = format!("d2 = {}", report.d2);
    let v = envelope("d2", g, g.seed.unwrap_or(0), backend_name(Some(b)), to_object(&report));
    emit(&v, o.json, o.out.as_deref(), &summary)
}

options! {
    pub struct PathOpts {
        /// Start density
        #[arg(long)]
        pub f0: Option<InputPath>,
        /// End density (linear and geodesic paths)
        #[arg(long)]
        pub f1: Option<InputPath>,
        /// Perturbation field (multiplicative paths)
        #[arg(long)]
        pub h: Option<InputPath>,
        /// linear, multiplicative or geodesic
        #[arg(long, value_enum)]
        pub kind: Option<PathKindName>,
        /// Comma-separated sample times
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        pub times: Option<Vec<f64>>,
        /// Backend of the geodesic potential in 2D
        #[arg(long, value_enum)]
        pub backend: Option<BackendName>,
        /// Entropic regularization for the sinkhorn backend
        #[arg(long)]
        pub eps: Option<f64>,
        /// Directory receiving one density file per time
        #[arg(long)]
        pub out_dir: Option<PathBuf>,
        /// Print JSON to stdout
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        pub json: Option<bool>,
        /// Write JSON to this file
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

fn build_path(kind: PathKindName, f0: Option<InputPath>, f1: Option<InputPath>, h: Option<InputPath>, b: Backend) -> Result<DensityPath, CliError> {
    let start = density(f0, "f0")?;
    match kind {
        PathKindName::Linear => linear_path(&start, &density(f1, "f1")?).key("f1"),
        PathKindName::Geodesic => geodesic(&start, &density(f1, "f1")?, b).key("f1"),
        PathKindName::Multiplicative => {
            let h = on_mesh_of(field(h, "h")?, &start, "h")?;
            multiplicative_path(&start, &h).key("h")
        }
    }
}

pub fn path(o: PathOpts, g: Globals) -> Result<(), CliError> {
    let o = o.merged()?;
    let kind = require(o.kind, "kind", "kind")?;
    let b = backend(o.backend, o.eps, BackendName::Exact)?.unwrap_or(Backend::Exact);
    let p = build_path(kind, o.f0, o.f1, o.h, b)?;
    let times = o.times.unwrap_or_else(|| vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    let slices = p.slices(&times).key("times")?;
    let mut files = Vec::new();
    if let Some(dir) = &o.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io { key: "out_dir", path: dir.clone(), message: e.to_string() })?;
        for (k, s) in slices.iter().enumerate() {
            let f = dir.join(format!("slice_{k:03}.dat"));
            write_density(&f, s).map_err(|e| CliError::Io { key: "out_dir", path: f.clone(), message: e.to_string() })?;
            files.push(f.display().to_string());
        }
    }
    let action = if kind == PathKindName::Geodesic { Some(geodesic_action(&p, BB_NODES).key("f1")?) } else { None };
    let masses: Vec<f64> = slices.iter().map(|s| s.mass()).collect();
    let body = to_object(json!({ "kind": p.kind().name(), "times": times, "masses": masses, "files": files, "action": action }));
    let v = envelope("path", g, g.seed.unwrap_or(0), backend_name(Some(b)), body);
    emit(&v, o.json, o.out.as_deref(), &format!("{} slices of a {} path", slices.len(), p.kind().name()))
}

options! {
    pub struct ResponseOpts {
        /// Start source density
        #[arg(long)]
        pub f0: Option<InputPath>,
        /// End source density
        #[arg(long)]
        pub f1: Option<InputPath>,
        /// Start target density
        #[arg(long)]
        pub g0: Option<InputPath>,
        /// End target density
        #[arg(long)]
        pub g1: Option<InputPath>,
        /// Source perturbation (multiplicative paths)
        #[arg(long)]
        pub h: Option<InputPath>,
        /// Target perturbation (multiplicative paths)
        #[arg(long)]
        pub k: Option<InputPath>,
        /// linear or multiplicative
        #[arg(long, value_enum)]
        pub kind: Option<PathKindName>,
        /// Time at which the response is solved
        #[arg(long, allow_negative_numbers = true)]
        pub t: Option<f64>,
        /// Backend of the Brenier potential in 2D
        #[arg(long, value_enum)]
        pub backend: Option<BackendName>,
        /// Entropic regularization for the sinkhorn backend
        #[arg(long)]
        pub eps: Option<f64>,
        /// Write the response field to this file
        #[arg(long)]
        pub field: Option<PathBuf>,
        /// Print JSON to stdout
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        pub json: Option<bool>,
        /// Write JSON to this file
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

pub fn response(o: ResponseOpts, g: Globals) -> Result<(), CliError> {
    let o = o.merged()?;
    let kind = o.kind.unwrap_or(PathKindName::Linear);
    let t = o.t.unwrap_or(0.0);
    let (pf, pg) = match kind {
        PathKindName::Linear => (build_path(kind, o.f0, o.f1, None, Backend::Exact)?, {
            let g0 = density(o.g0, "g0")?;
            linear_path(&g0, &density(o.g1, "g1")?).key("g1")?
        }),
        PathKindName::Multiplicative => {
            let pf = build_path(kind, o.f0, None, o.h, Backend::Exact)?;
            let g0 = density(o.g0, "g0")?;
            let k = on_mesh_of(field(o.k, "k")?, &g0, "k")?;
            (pf, multiplicative_path(&g0, &k).key("k")?)
        }
        PathKindName::Geodesic => return Err(CliError::invalid("kind", "the response needs a linear or multiplicative path")),
    };
    let ft = pf.at(t).key("t")?;
    let gt = pg.at(t).key("t")?;
    let b = backend(o.backend, o.eps, BackendName::Auto)?.unwrap_or_else(|| auto_backend(&ft, &gt));
    let (phi, _) = brenier_potential(&ft, &gt, b).key("backend")?;
    let xi = solve_response(&pf, &pg, &phi, t).key("f0")?;
    if let Some(f) = &o.field {
        write_field(f, &xi.xi).map_err(|e| CliError::Io { key: "field", path: f.clone(), message: e.to_string() })?;
    }
    let sq: Vec<f64> = xi.xi.values().iter().map(|v| v * v).collect();
    let mut body = to_object(xi.diagnostics());
    body.insert("kind".into(), json!(pf.kind().name()));
    body.insert("t".into(), json!(t));
    body.insert("method".into(), json!(xi.method));
    body.insert("xi_l2".into(), json!(integrate(xi.xi.domain(), &sq).sqrt()));
    body.insert("field".into(), json!(o.field.as_ref().map(|p| p.display().to_string())));
    let summary = format!("response solved in {} iterations, residual {:e}", xi.iterations, xi.residual);
    let v = envelope("response", g, g.seed.unwrap_or(0), backend_name(Some(b)), body);
    emit(&v, o.json, o.out.as_deref(), &summary)
}

options! {
    pub struct SecondVariationOpts {
        /// Base source density
        #[arg(long)]
        pub f: Option<InputPath>,
        /// Base target density
        #[arg(long)]
        pub g: Option<InputPath>,
        /// Source perturbation with ∫hf = 0
        #[arg(long)]
        pub h: Option<InputPath>,
        /// Target perturbation with ∫kg = 0
        #[arg(long)]
        pub k: Option<InputPath>,
        /// Finite-difference step
        #[arg(long)]
        pub dt: Option<f64>,
        /// auto, exact or sinkhorn
        #[arg(long, value_enum)]
        pub backend: Option<BackendName>,
        /// Entropic regularization for the sinkhorn backend
        #[arg(long)]
        pub eps: Option<f64>,
        /// Marginal tolerance of the sinkhorn backend
        #[arg(long)]
        pub tol: Option<f64>,
        /// Print JSON to stdout
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        pub json: Option<bool>,
        /// Write JSON to this file
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

pub fn second_variation(o: SecondVariationOpts, g: Globals) -> Result<(), CliError> {
    let o = o.merged()?;
    let f = density(o.f, "f")?;
    let gd = density(o.g, "g")?;
    let h = on_mesh_of(field(o.h, "h")?, &f, "h")?;
    let k = on_mesh_of(field(o.k, "k")?, &gd, "k")?;
    let dt = positive("dt", o.dt.unwrap_or(1e-2))?;
    let tol = positive("tol", o.tol.unwrap_or(FD_SINKHORN_TOL))?;
    let chosen = backend(o.backend, o.eps, BackendName::Auto)?;
    let b = chosen.unwrap_or_else(|| auto_backend(&f, &gd));
    let (phi, _) = brenier_potential(&f, &gd, b).key("backend")?;
    let opts = SecondVariationOptions { dt, backend: Some(b), tol };
    let report = run_second_variation(&f, &gd, &h, &k, &phi, &opts).key("h")?;
    let summary = format!("formula = {}, fd = {}, relative gap = {:e}", report.formula_value, report.fd_value, report.relative_gap);
    let v = envelope("second-variation", g, g.seed.unwrap_or(0), backend_name(Some(b)), to_object(&report));
    emit(&v, o.json, o.out.as_deref(), &summary)
}

options! {
    pub struct StabilityOpts {
        /// 1.1 (gradients), 1.2 (normalized potentials) or 1.3 (C^{1,α})
        #[arg(long)]
        pub theorem: Option<Theorem>,
        /// Family name; a config file may give the full descriptor instead
        #[arg(long)]
        pub family: Option<FamilySpec>,
        /// Hölder order for 1.3
        #[arg(long)]
        pub alpha: Option<f64>,
        /// exact or sinkhorn (2D families)
        #[arg(long, value_enum)]
        pub backend: Option<BackendName>,
        /// Entropic regularization for the sinkhorn backend
        #[arg(long)]
        pub eps: Option<f64>,
        /// Write the ratio table as CSV (plus a .header sidecar)
        #[arg(long)]
        pub csv: Option<PathBuf>,
        /// Write an SVG plot of the ratio column
        #[arg(long)]
        pub svg: Option<PathBuf>,
        /// Print JSON to stdout
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        pub json: Option<bool>,
        /// Write JSON to this file
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

fn family_seed(f: &Family) -> Option<u64> {
    match f {
        Family::RandomSmooth { seed, .. } => Some(*seed),
        _ => None,
    }
}

pub fn stability_table(report: &StabilityReport) -> Table {
    let described: Vec<(String, String)> = report
        .columns
        .iter()
        .map(|c| match c.split_once(": ") {
            Some((n, d)) => (n.to_string(), d.to_string()),
            None => (c.clone(), String::new()),
        })
        .collect();
    let mut t = Table { columns: described, rows: Vec::new() };
    for r in &report.rows {
        t.rows.push(vec![
            Cell::Int(r.index),
            Cell::Num(Some(r.size)),
            Cell::Num(r.lhs),
            Cell::Num(r.rhs),
            Cell::Num(r.ratio),
            Cell::Num(r.lhs_alt),
            Cell::Num(r.rhs_alt),
            Cell::Num(r.ratio_alt),
            Cell::Text(r.error.clone()),
        ]);
    }
    t
}

pub fn stability(o: StabilityOpts, g: Globals) -> Result<(), CliError> {
    let o = o.merged()?;
    let theorem = require(o.theorem, "theorem", "theorem")?;
    let mut family = match require(o.family, "family", "family")? {
        FamilySpec::Name(n) => default_family(&n, g.seed.unwrap_or(0))?,
        FamilySpec::Full(f) => f,
    };
    if let (Family::RandomSmooth { seed, .. }, Some(s)) = (&mut family, g.seed) {
        *seed = s;
    }
    let b = backend(o.backend, o.eps, BackendName::Exact)?.unwrap_or(Backend::Exact);
    let report = match theorem {
        Theorem::Gradient => gradient_stability(&family, b),
        Theorem::Potential => potential_stability(&family, b),
        Theorem::Holder => holder_stability(&family, o.alpha.unwrap_or(0.5), b),
    };
    let report = report.map_err(|e| CliError::Core { key: if matches!(e, otlab::Error::ExponentError(_)) { "alpha" } else { "family" }, source: e })?;
    let table = stability_table(&report);
    if let Some(p) = &o.csv {
        plot::write_csv("csv", p, &table)?;
    }
    if let Some(p) = &o.svg {
        let title = format!("stability {} ({})", theorem.tag(), family.name());
        plot::write("svg", p, &table.to_svg("size", "ratio", false, &title))?;
    }
    let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
    let summary = format!(
        "{} rows ({} failed), ratio spread {}",
        report.rows.len(),
        failed,
        report.ratio_spread().map_or("n/a".to_string(), |s| s.to_string())
    );
    let mut body = to_object(&report);
    body.insert("ratio_spread".into(), json!(report.ratio_spread()));
    body.insert("backend_options".into(), serde_json::to_value(b).expect("serializable backend"));
    let seed = family_seed(&family).or(g.seed).unwrap_or(0);
    let v = envelope("stability", g, seed, backend_name(Some(b)), body);
    emit(&v, o.json, o.out.as_deref(), &summary)
}

options! {
    pub struct SharpnessOpts {
        /// Vanishing order of the degenerate density
        #[arg(long)]
        pub p: Option<f64>,
        /// Hölder exponent of the map bound
        #[arg(long)]
        pub eta: Option<f64>,
        /// Comma-separated ε values in (0, 1/2)
        #[arg(long, value_delimiter = ',')]
        pub eps: Option<Vec<f64>>,
        #[arg(long)]
        pub csv: Option<PathBuf>,
        /// SVG of the ratio against ε on a log axis
        #[arg(long)]
        pub svg: Option<PathBuf>,
        /// Print JSON to stdout
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        pub json: Option<bool>,
        /// Write JSON to this file
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

pub fn sharpness_table(rows: &[otlab::ot1d::SharpnessRow]) -> Table {
    let mut t = Table::new(&[
        ("eps", "perturbation parameter"),
        ("a", "location of the zero, 1/(2(1-eps))"),
        ("map_gap", "sup norm of the quantile difference"),
        ("density_gap", "sup norm of the density difference"),
        ("ratio", "map_gap / density_gap^eta"),
        ("midpoint_gap", "|quantile(1/2) - 1/2|"),
    ]);
    for r in rows {
        t.rows.push([r.eps, r.a, r.map_gap, r.density_gap, r.ratio, r.midpoint_gap].iter().map(|&v| Cell::Num(Some(v))).collect());
    }
    t
}

pub fn sharpness(o: SharpnessOpts, g: Globals) -> Result<(), CliError> {
    let o = o.merged()?;
    let p = o.p.unwrap_or(2.0);
    let eta = o.eta.unwrap_or(0.9);
    let eps = o.eps.unwrap_or_else(|| vec![1e-1, 1e-2, 1e-3, 1e-4]);
    let rows = counterexample_sweep(p, eta, &eps).map_err(|e| {
        let key = match e {
            otlab::Error::ExponentError(_) => "eta",
            otlab::Error::RangeError(ref m) if m.starts_with("exponent") => "p",
            _ => "eps",
        };
        CliError::Core { key, source: e }
    })?;
    let table = sharpness_table(&rows);
    if let Some(path) = &o.csv {
        plot::write_csv("csv", path, &table)?;
    }
    if let Some(path) = &o.svg {
        plot::write("svg", path, &table.to_svg("eps", "ratio", true, &format!("sharpness, p = {p}, eta = {eta}")))?;
    }
    let summary = format!("{} rows, ratios {:?}", rows.len(), rows.iter().map(|r| r.ratio).collect::<Vec<_>>());
    let body = to_object(json!({ "p": p, "eta": eta, "rows": rows }));
    let v = envelope("sharpness", g, g.seed.unwrap_or(0), "closed_form", body);
    emit(&v, o.json, o.out.as_deref(), &summary)
}

options! {
    pub struct IdentitiesOpts {
        /// Comma-separated ring counts of the polar disk meshes
        #[arg(long, value_delimiter = ',')]
        pub resolutions: Option<Vec<usize>>,
        /// Number of seeded variance-bound instances
        #[arg(long)]
        pub bl_count: Option<usize>,
        /// Ring count of the variance-bound mesh
        #[arg(long)]
        pub bl_rings: Option<usize>,
        /// Print JSON to stdout
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        pub json: Option<bool>,
        /// Write JSON to this file
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

pub fn identities(o: IdentitiesOpts, g: Globals) -> Result<(), CliError> {
    let o = o.merged()?;
    let res = o.resolutions.unwrap_or_else(|| vec![8, 16, 32]);
    if res.len() < 2 || res.iter().any(|&n| n < 4) {
        return Err(CliError::invalid("resolutions", "need at least two ring counts, each at least 4"));
    }
    let report = identity_suite(&res).key("resolutions")?;
    let seed = g.seed.unwrap_or(0);
    let suite = brascamp_lieb_suite(seed, o.bl_count.unwrap_or(200), o.bl_rings.unwrap_or(12)).key("bl_count")?;
    let line = Domain::unit_interval(2000);
    let analytic = brascamp_lieb_check(&ScalarField::from_fn(line.clone(), |x| 0.5 * x.x * x.x), &ScalarField::from_fn(line, |x| x.x)).key("bl_count")?;
    let summary = format!(
        "magic slopes {:?}, cofactor (quadratic) {:e}, boundary identity {:e}, variance-bound min margin {:e}",
        report.magic_slopes, report.cofactor_quadratic, report.boundary_identity, suite.min_margin
    );
    let mut body = to_object(&report);
    body.insert(
        "brascamp_lieb".into(),
        json!({ "count": suite.count, "resolution": suite.resolution, "min_margin": suite.min_margin, "analytic": analytic }),
    );
    let v = envelope("identities", g, seed, "finite_volume", body);
    emit(&v, o.json, o.out.as_deref(), &summary)
}
