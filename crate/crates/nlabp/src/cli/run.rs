//! Command execution and artifact writing.

use super::config::{Command, FieldSource, RunConfig};
use super::expr::Expr;
use super::io::write_field;
use crate::base::{norm, Exterior, Field, Grid, Point, SigmaParams};
use crate::certify::{
    abp_certificate_with, comparison_check, envelope_sigma2_study, fd_hessian, ring_catalogue, ring_study, shrink_study, sigma2_limit_suite,
    AbpCertificate,
};
use crate::envelope::{inf_convolution, solve_dirichlet_with, solve_obstacle_with, PucciSweep};
use crate::error::{Error, Result};
use crate::linalg::Sym;
use crate::nonlocal_ops::{e_sigma, frac_laplacian, fraclap_scale, moments, pucci_minus, pucci_minus_from_moments, pucci_plus, pucci_plus_from_moments};
use crate::quadrature::QuadraturePlan;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Process exit statuses of the command-line driver.
pub mod exit {
    pub const OK: i32 = 0;
    pub const RUNTIME: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NONCONVERGENCE: i32 = 3;
    pub const VIOLATION: i32 = 4;
}

/// Exit status for an error raised by a run.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Domain(_) | Error::Precondition(_) | Error::Support(_) | Error::Degenerate(_) => exit::CONFIG,
        Error::NonConvergence { .. } | Error::Divergence { .. } | Error::Infeasible { .. } => exit::NONCONVERGENCE,
        _ => exit::RUNTIME,
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Halvings of the configured grid spacing.
    pub refine: u32,
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub command: &'static str,
    pub outputs: Vec<PathBuf>,
    /// Description of a violated inequality, if the run found one.
    pub finding: Option<String>,
    pub report: Value,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.finding.is_some() { exit::VIOLATION } else { exit::OK }
    }
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
    dump: bool,
}

impl Artifacts {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    fn json(&mut self, name: &str, v: &impl Serialize) -> Result<()> {
        let text = serde_json::to_string_pretty(v).map_err(|e| Error::Config(format!("cannot serialize report: {e}")))?;
        let p = self.path(name);
        std::fs::write(p, text + "\n")?;
        Ok(())
    }

    fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<()> {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(p).map_err(csv_err)?;
        for r in rows {
            w.serialize(r).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    fn csv_records(&mut self, name: &str, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(p).map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(r.iter().map(|v| format!("{v:e}"))).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    fn field(&mut self, name: &str, f: &Field) -> Result<()> {
        if self.dump {
            let p = self.path(name);
            write_field(&p, f)?;
        }
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    std::io::Error::other(e.to_string()).into()
}

/// Runs a validated configuration and writes its artifacts and manifest.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunSummary> {
    let issues = cfg.validate();
    if !issues.is_empty() {
        return Err(Error::Config(issues.join("; ")));
    }
    std::fs::create_dir_all(&opts.out_dir)?;
    let start = Instant::now();
    let grid = cfg.grid(opts.refine)?;
    let plan = cfg.plan(&grid)?;
    let mut art = Artifacts { dir: opts.out_dir.clone(), written: Vec::new(), dump: cfg.output.dump_fields };
    let ctx = Ctx { cfg, grid, plan };
    let (report, finding) = match cfg.command {
        Command::OperatorEval => ctx.operator_eval(&mut art)?,
        Command::Envelope => ctx.envelope(&mut art)?,
        Command::Dirichlet => ctx.dirichlet(&mut art)?,
        Command::AbpCheck => ctx.abp_check(&mut art)?,
        Command::Comparison => ctx.comparison(&mut art)?,
        Command::LimitStudy => ctx.limit_study(&mut art)?,
        Command::RingStudy => ctx.ring_study(&mut art)?,
        Command::ShrinkStudy => ctx.shrink_study(&mut art)?,
    };
    let wall = start.elapsed().as_secs_f64();
    let manifest = json!({
        "tool": "nlabp",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cfg.command.name(),
        "seed": cfg.seed,
        "refine": opts.refine,
        "threads": opts.threads,
        "grid": { "n": grid.n, "h": grid.h, "dims": &grid.dims[..grid.n], "lo": &grid.lo[..grid.n], "hi": &grid.hi[..grid.n] },
        "config": cfg,
        "base_dir": cfg.base_dir,
        "outputs": art.written.iter().map(|p| p.file_name().map(|s| s.to_string_lossy().into_owned())).collect::<Vec<_>>(),
        "finding": finding,
        "wall_time_s": wall,
    });
    let manifest_name = cfg.output.manifest.clone();
    art.json(&manifest_name, &manifest)?;
    Ok(RunSummary { command: cfg.command.name(), outputs: art.written, finding, report })
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    grid: Grid,
    plan: QuadraturePlan,
}

type Outcome = (Value, Option<String>);

fn to_value(v: &impl Serialize) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Config(format!("cannot serialize report: {e}")))
}

fn point_of(v: &[f64]) -> Point {
    let mut p = [0.0; 3];
    p[..v.len()].copy_from_slice(v);
    p
}

/// Largest value of `f` over lattice offsets of length at most `radius`.
fn dilate_max(f: &Field, radius: f64) -> Field {
    let g = &f.grid;
    let k = (radius / g.h).floor() as i64;
    let n = g.n;
    let side = (2 * k + 1) as usize;
    let mut offsets = Vec::new();
    for idx in 0..side.pow(n as u32) {
        let mut rem = idx;
        let mut m = [0i64; 3];
        for c in m.iter_mut().take(n) {
            *c = (rem % side) as i64 - k;
            rem /= side;
        }
        let len2: i64 = m.iter().map(|c| c * c).sum();
        if (len2 as f64) * g.h * g.h <= radius * radius + 1e-12 {
            offsets.push(m);
        }
    }
    let vals = (0..g.len())
        .map(|i| {
            let node = g.node(i);
            offsets
                .iter()
                .map(|m| {
                    let mut q = node;
                    for a in 0..n {
                        q[a] += m[a];
                    }
                    f.node_value(&q)
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    f.with_values(vals)
}

#[derive(Serialize)]
struct ChainRow<'a> {
    name: &'a str,
    lhs: f64,
    rhs: f64,
    slack: f64,
    pass: bool,
}

#[derive(Serialize)]
struct RegularizedRow {
    eps: f64,
    dilation: f64,
    theorem_lhs: f64,
    theorem_rhs_without_c: f64,
    empirical_c: Option<f64>,
    passed: bool,
}

impl Ctx<'_> {
    fn params(&self) -> SigmaParams {
        self.cfg.params
    }

    fn source(&self, name: &str, src: &Option<FieldSource>) -> Result<Field> {
        let s = src.as_ref().ok_or_else(|| Error::Config(format!("problem.{name} is required")))?;
        self.cfg.field(s, &self.grid)
    }

    fn sweep(&self) -> Result<PucciSweep> {
        PucciSweep::new(&self.grid, &self.params(), &self.plan)
    }

    fn operator_eval(&self, art: &mut Artifacts) -> Result<Outcome> {
        let u = self.source("u", &self.cfg.problem.u)?;
        let p = self.params();
        let study = &self.cfg.study;
        let ops = &study.operators;
        let mut pts: Vec<Point> = study.points.iter().map(|v| point_of(v)).collect();
        if study.random_points > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
            let nodes: Vec<usize> = (0..self.grid.len()).filter(|&i| norm(&self.grid.point(i)) < study.radius).collect();
            if nodes.is_empty() {
                return Err(Error::Config("no grid nodes inside study.radius".into()));
            }
            for _ in 0..study.random_points {
                pts.push(self.grid.point(nodes[rng.gen_range(0..nodes.len())]));
            }
        }
        let n = p.n;
        let mut header: Vec<String> = ["x", "y", "z"][..n].iter().map(|s| s.to_string()).collect();
        header.extend(ops.iter().cloned());
        let mut rows: Vec<Vec<f64>> = Vec::new();
        if !pts.is_empty() {
            for x in &pts {
                let mut row = x[..n].to_vec();
                for op in ops {
                    row.push(match op.as_str() {
                        "frac_laplacian" => frac_laplacian(&u, x, &p, &self.plan)?,
                        "e_sigma" => e_sigma(&u, x, &p, &self.plan)?,
                        "pucci_minus" => pucci_minus(&u, x, &p, &self.plan)?,
                        "pucci_plus" => pucci_plus(&u, x, &p, &self.plan)?,
                        _ => p.hessian_prefactor() * moments(&u, x, p.sigma, &self.plan)?.w.trace(),
                    });
                }
                rows.push(row);
            }
        } else {
            let w = self.sweep()?.moments(&u)?;
            let mut dumps: Vec<Vec<f64>> = vec![vec![0.0; self.grid.len()]; ops.len()];
            for (i, wi) in w.iter().enumerate() {
                let x = self.grid.point(i);
                if norm(&x) >= study.radius {
                    continue;
                }
                let mut row = x[..n].to_vec();
                for (k, op) in ops.iter().enumerate() {
                    let val = op_from_moments(op, wi, &p)?;
                    dumps[k][i] = val;
                    row.push(val);
                }
                rows.push(row);
            }
            for (k, op) in ops.iter().enumerate() {
                art.field(&format!("{op}.bin"), &u.with_values(std::mem::take(&mut dumps[k])))?;
            }
        }
        let summary: Vec<Value> = ops
            .iter()
            .enumerate()
            .map(|(k, op)| {
                let col: Vec<f64> = rows.iter().map(|r| r[n + k]).collect();
                let min = col.iter().copied().fold(f64::INFINITY, f64::min);
                let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mean = col.iter().sum::<f64>() / col.len().max(1) as f64;
                json!({ "operator": op, "min": min, "max": max, "mean": mean })
            })
            .collect();
        let report = json!({ "command": "operator-eval", "params": p, "h": self.grid.h, "evaluations": rows.len(), "operators": summary });
        art.csv_records(&self.cfg.output.csv, &header, &rows)?;
        art.json(&self.cfg.output.json, &report)?;
        Ok((report, None))
    }

    fn envelope(&self, art: &mut Artifacts) -> Result<Outcome> {
        let u = self.source("u", &self.cfg.problem.u)?;
        let p = self.params();
        let c = &self.cfg.certificate;
        let schedule = c.schedule_for(self.grid.h, p.sigma);
        let env = solve_obstacle_with(&u, &p, &self.plan, &c.penalty, &schedule, &c.envelope)?;
        let g = &self.grid;
        let inner = c.envelope.inner_radius;
        let outer = c.envelope.outer_radius;
        let psi: Vec<f64> = (0..g.len()).map(|i| if norm(&g.point(i)) < inner { u.values[i] - env.obstacle_shift } else { 0.0 }).collect();
        let tol = 10.0 * g.h.powf(p.sigma);
        let mut worst: f64 = 0.0;
        for i in 0..g.len() {
            if norm(&g.point(i)) < outer {
                worst = worst.max(env.residual.values[i].min(psi[i] - env.gamma.values[i]).abs());
            }
        }
        let monotone = env.levels.windows(2).all(|w| w[1].iter().zip(&w[0]).all(|(b, a)| *b >= a - 1e-9 * (1.0 + a.abs())));
        let contact_nodes = env.contact.iter().filter(|c| **c).count();
        let ball_nodes = (0..g.len()).filter(|&i| norm(&g.point(i)) < inner).count();
        let report = json!({
            "command": "envelope",
            "params": p,
            "h": g.h,
            "schedule": schedule,
            "eps_history": env.eps_history,
            "contact_nodes": contact_nodes,
            "contact_fraction": contact_nodes as f64 / ball_nodes.max(1) as f64,
            "complementarity_max": worst,
            "complementarity_tol": tol,
            "monotone_in_eps": monotone,
            "beta0": env.beta0,
            "obstacle_shift": env.obstacle_shift,
            "contact_tol": env.contact_tol,
            "iterations": env.iterations,
            "inf_gamma": env.gamma.min(),
        });
        art.csv(&self.cfg.output.csv, &env.eps_history)?;
        art.json(&self.cfg.output.json, &report)?;
        art.field("gamma.bin", &env.gamma)?;
        art.field("contact.bin", &u.with_values(env.contact.iter().map(|c| f64::from(u8::from(*c))).collect()))?;
        art.field("residual.bin", &env.residual)?;
        let finding = (worst > tol).then(|| format!("complementarity {worst:e} exceeds {tol:e}"));
        Ok((report, finding))
    }

    fn solve(&self, f: &Field, sweep: &PucciSweep) -> Result<Field> {
        solve_dirichlet_with(f, sweep, &self.cfg.dirichlet)
    }

    fn dirichlet(&self, art: &mut Artifacts) -> Result<Outcome> {
        let f = self.source("f", &self.cfg.problem.f)?;
        let sweep = self.sweep()?;
        let u = self.solve(&f, &sweep)?;
        let m = sweep.minus(&u)?;
        let g = &self.grid;
        let radius = self.cfg.dirichlet.radius;
        let n = g.n;
        let mut rows = Vec::new();
        let mut resid: f64 = 0.0;
        for i in 0..g.len() {
            let x = g.point(i);
            if norm(&x) < radius {
                let r = m[i] - f.values[i];
                resid = resid.max(r.abs());
                let mut row = x[..n].to_vec();
                row.extend([u.values[i], f.values[i], r]);
                rows.push(row);
            }
        }
        let mut header: Vec<String> = ["x", "y", "z"][..n].iter().map(|s| s.to_string()).collect();
        header.extend(["u", "f", "residual"].map(String::from));
        let report = json!({ "command": "dirichlet", "params": self.params(), "h": g.h, "inf_u": u.min(), "sup_residual": resid, "nodes": rows.len() });
        art.csv_records(&self.cfg.output.csv, &header, &rows)?;
        art.json(&self.cfg.output.json, &report)?;
        art.field("u.bin", &u)?;
        Ok((report, None))
    }

    fn abp_inputs(&self) -> Result<(Field, Field)> {
        let pr = &self.cfg.problem;
        let sweep = self.sweep()?;
        let g = &self.grid;
        match (&pr.u, &pr.f) {
            (Some(_), Some(_)) => Ok((self.source("u", &pr.u)?, self.source("f", &pr.f)?)),
            (None, Some(_)) => {
                let f = self.source("f", &pr.f)?;
                Ok((self.solve(&f, &sweep)?, f))
            }
            (Some(_), None) => {
                let u = self.source("u", &pr.u)?;
                let zero_ext = Field { grid: *g, values: u.values.clone(), exterior: Exterior::Zero };
                let m = sweep.minus(&zero_ext)?;
                let f = (0..g.len()).map(|i| if norm(&g.point(i)) < 1.0 { m[i].max(0.0) } else { 0.0 }).collect();
                let f = u.with_values(f);
                Ok((u, f))
            }
            (None, None) => Err(Error::Config("abp-check requires problem.u or problem.f".into())),
        }
    }

    fn abp_check(&self, art: &mut Artifacts) -> Result<Outcome> {
        let (u, f) = self.abp_inputs()?;
        let p = self.params();
        let cert: AbpCertificate = abp_certificate_with(&u, &f, &p, &self.plan, &self.cfg.certificate)?;
        let mut regularized = Vec::new();
        let osc = u.max() - u.min();
        for &eps in &self.cfg.study.inf_convolution {
            let ue = inf_convolution(&u, eps)?;
            let dilation = (2.0 * eps * osc).sqrt();
            let fe = dilate_max(&f, dilation + self.grid.h);
            let c = abp_certificate_with(&ue, &fe, &p, &self.plan, &self.cfg.certificate)?;
            regularized.push(RegularizedRow {
                eps,
                dilation,
                theorem_lhs: c.theorem_lhs,
                theorem_rhs_without_c: c.theorem_rhs_without_c,
                empirical_c: c.empirical_c,
                passed: c.passed,
            });
        }
        let rows: Vec<ChainRow> = cert.chain.iter().map(|s| ChainRow { name: &s.name, lhs: s.lhs, rhs: s.rhs, slack: s.slack, pass: s.pass }).collect();
        art.csv(&self.cfg.output.csv, &rows)?;
        if !regularized.is_empty() {
            art.csv("regularized.csv", &regularized)?;
        }
        let mut report = to_value(&cert)?;
        report["command"] = json!("abp-check");
        report["regularized"] = to_value(&regularized)?;
        art.json(&self.cfg.output.json, &report)?;
        art.field("u.bin", &u)?;
        art.field("f.bin", &f)?;
        let failed: Vec<&str> = cert.chain.iter().filter(|s| !s.pass).map(|s| s.name.as_str()).collect();
        let finding = (!failed.is_empty()).then(|| format!("chain steps failed: {}", failed.join(", ")));
        Ok((report, finding))
    }

    fn comparison(&self, art: &mut Artifacts) -> Result<Outcome> {
        let pr = &self.cfg.problem;
        let f = self.source("f", &pr.f)?;
        let g = self.source("g", &pr.g)?;
        let sweep = self.sweep()?;
        let u = match &pr.u {
            Some(_) => self.source("u", &pr.u)?,
            None => self.solve(&f, &sweep)?,
        };
        let v = match &pr.v {
            Some(_) => self.source("v", &pr.v)?,
            None => self.solve(&g, &sweep)?,
        };
        let r = comparison_check(&u, &v, &f, &g, self.cfg.dirichlet.radius, &self.params(), self.cfg.study.tol)?;
        art.csv(&self.cfg.output.csv, std::slice::from_ref(&r))?;
        let mut report = to_value(&r)?;
        report["command"] = json!("comparison");
        art.json(&self.cfg.output.json, &report)?;
        art.field("u.bin", &u)?;
        art.field("v.bin", &v)?;
        let finding = (!r.pass).then(|| format!("sup(u - v) = {:e} with a vanishing right-hand side", r.sup_diff));
        Ok((report, finding))
    }

    /// Exact Hessian of `u` at `x`: finite differences of the expression
    /// when there is one, lattice differences otherwise.
    fn exact_hessian(&self, u: &Field, x: &Point) -> Result<Sym> {
        let n = self.grid.n;
        let mut hs = Sym::zeros(n);
        match &self.cfg.problem.u {
            Some(FieldSource::Expr(text)) => {
                let e = Expr::parse(text, &self.cfg.problem.constants).map_err(|e| Error::Config(e.to_string()))?;
                hs = fd_hessian(|p| e.eval(p), x, n, 1e-3);
            }
            _ => {
                let node = self.grid.lattice_node(x).ok_or_else(|| Error::Config("study.point must be a grid node".into()))?;
                let h = self.grid.h;
                let val = |m: [i64; 3]| u.node_value(&[node[0] + m[0], node[1] + m[1], node[2] + m[2]]);
                for i in 0..n {
                    for j in i..n {
                        let mut acc = 0.0;
                        for (w, s) in [(-1.0, 2i64), (16.0, 1)] {
                            let mut pp = [0i64; 3];
                            let mut pm = [0i64; 3];
                            pp[i] += s;
                            pp[j] += s;
                            pm[i] += s;
                            pm[j] -= s;
                            acc += w * (val(pp) - val(pm) - val(pm.map(|c| -c)) + val(pp.map(|c| -c)));
                        }
                        let v = acc / (12.0 * 4.0 * h * h);
                        hs.m[i][j] = v;
                        hs.m[j][i] = v;
                    }
                }
            }
        }
        Ok(hs)
    }

    fn limit_study(&self, art: &mut Artifacts) -> Result<Outcome> {
        let u = self.source("u", &self.cfg.problem.u)?;
        let study = &self.cfg.study;
        let x = study.point;
        let hess = self.exact_hessian(&u, &x)?;
        let n = self.grid.n;
        let mut probe = Sym::zeros(n);
        match &study.probe {
            Some(m) => {
                for i in 0..n {
                    for j in 0..n {
                        probe.m[i][j] = 0.5 * (m[i][j] + m[j][i]);
                    }
                }
            }
            None => {
                for i in 0..n {
                    probe.m[i][i] = (i + 1) as f64;
                }
            }
        }
        let suite = sigma2_limit_suite(&u, &x, &hess, &study.sigmas, &probe, &self.plan)?;
        art.csv(&self.cfg.output.csv, &suite.rows)?;
        let mut report = json!({ "command": "limit-study", "point": &x[..n], "hessian": hess, "suite": suite });
        if study.envelope_limit {
            let env = envelope_sigma2_study(&u, &study.sigmas, &self.params(), &self.plan, &self.cfg.certificate)?;
            art.csv("envelope_limit.csv", &env.rows)?;
            report["envelope_limit"] = to_value(&env)?;
        }
        art.json(&self.cfg.output.json, &report)?;
        Ok((report, None))
    }

    fn ring_study(&self, art: &mut Artifacts) -> Result<Outcome> {
        #[derive(Serialize)]
        struct Row<'a> {
            problem: &'a str,
            sigma: f64,
            lambda: f64,
            rho0: f64,
            rings: usize,
            bad: usize,
            scaled_bad: f64,
            bound: f64,
        }
        let wanted = &self.cfg.study.problems;
        let problems: Vec<_> = ring_catalogue().into_iter().filter(|p| wanted.is_empty() || wanted.contains(&p.name)).collect();
        let study = ring_study(&self.grid, &self.plan, &problems, &self.cfg.dirichlet, &self.cfg.certificate)?;
        let rows: Vec<Row> = study
            .entries
            .iter()
            .map(|e| Row {
                problem: &e.problem,
                sigma: e.sigma,
                lambda: e.lambda,
                rho0: e.report.rho0,
                rings: e.report.rings.len(),
                bad: e.report.bad_indices.len(),
                scaled_bad: e.report.scaled_bad,
                bound: e.report.bound,
            })
            .collect();
        art.csv(&self.cfg.output.csv, &rows)?;
        let mut report = to_value(&study)?;
        report["command"] = json!("ring-study");
        art.json(&self.cfg.output.json, &report)?;
        Ok((report, None))
    }

    fn shrink_study(&self, art: &mut Artifacts) -> Result<Outcome> {
        let r = shrink_study(&self.grid, &self.params(), &self.plan, self.cfg.study.levels, &self.cfg.certificate)?;
        art.csv(&self.cfg.output.csv, &r.rows)?;
        let mut report = to_value(&r)?;
        report["command"] = json!("shrink-study");
        art.json(&self.cfg.output.json, &report)?;
        Ok((report, None))
    }
}

fn op_from_moments(op: &str, w: &Sym, p: &SigmaParams) -> Result<f64> {
    Ok(match op {
        "frac_laplacian" => fraclap_scale(p.n, p.sigma) * w.trace(),
        "e_sigma" => p.hessian_prefactor() * w.min_eigenvalue(),
        "pucci_minus" => pucci_minus_from_moments(w, p)?,
        "pucci_plus" => pucci_plus_from_moments(w, p)?,
        _ => p.hessian_prefactor() * w.trace(),
    })
}

/// Loads, validates and runs the configuration at `path`.
pub fn run_file(path: &Path, opts: &RunOptions) -> Result<RunSummary> {
    let cfg = RunConfig::load(path)?;
    run(&cfg, opts)
}
