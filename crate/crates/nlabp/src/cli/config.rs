//! Run configuration, read from TOML.
//!
//! ```toml
//! command = "abp-check"
//! seed = 7
//!
//! [params]
//! n = 2
//! sigma = 1.0
//! lambda = 1.0
//! Lambda = 2.0
//!
//! [grid]
//! half_width = 3.2
//! points = 65
//!
//! [problem]
//! f = "4 * pos(1 - r^2/0.49)^2"
//! ```
//!
//! Field entries in `[problem]` are expressions in `x`, `y`, `z`, `r` and
//! the names in `[problem.constants]`, or `{ file = "dump.bin" }` pointing
//! at a binary field dump. Relative paths resolve against the directory of
//! the configuration file.

use super::expr::Expr;
use crate::base::{Exterior, Field, Grid, SigmaParams};
use crate::certify::{ring_catalogue, CertOptions, RhsShape};
use crate::envelope::{DirichletOptions, LimitOptions};
use crate::error::{Error, Result};
use crate::quadrature::{PlanSpec, QuadraturePlan};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    OperatorEval,
    Envelope,
    Dirichlet,
    AbpCheck,
    Comparison,
    LimitStudy,
    RingStudy,
    ShrinkStudy,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::OperatorEval => "operator-eval",
            Command::Envelope => "envelope",
            Command::Dirichlet => "dirichlet",
            Command::AbpCheck => "abp-check",
            Command::Comparison => "comparison",
            Command::LimitStudy => "limit-study",
            Command::RingStudy => "ring-study",
            Command::ShrinkStudy => "shrink-study",
        }
    }

    /// Commands that solve on `B₃` need the grid to cover it.
    fn needs_outer_ball(self) -> bool {
        !matches!(self, Command::OperatorEval | Command::Dirichlet | Command::Comparison)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub half_width: f64,
    /// Nodes per axis; odd so that the origin is a node.
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { half_width: 3.2, points: 65 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum FieldSource {
    Expr(String),
    File { file: PathBuf },
    Shape(RhsShape),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSpec {
    pub constants: BTreeMap<String, f64>,
    /// Obstacle for `envelope`, field for `operator-eval` and
    /// `limit-study`. In `abp-check` a given `u` is certified as is; without
    /// it `u` solves the Dirichlet problem for `f`, and without `f` the
    /// right-hand side is `max(M⁻u, 0)` in `B₁`.
    pub u: Option<FieldSource>,
    /// Second solution for `comparison`.
    pub v: Option<FieldSource>,
    pub f: Option<FieldSource>,
    pub g: Option<FieldSource>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySpec {
    pub sigmas: Vec<f64>,
    /// Number of halvings in `shrink-study`.
    pub levels: usize,
    /// Catalogue entries for `ring-study`; empty means all.
    pub problems: Vec<String>,
    /// Evaluation point of `limit-study`.
    pub point: [f64; 3],
    /// Matrix of the linear operator probed by `limit-study`.
    pub probe: Option<Vec<Vec<f64>>>,
    /// Also compare envelopes with the second-order obstacle problem.
    pub envelope_limit: bool,
    /// Extra certificates of `inf_convolution(u, ε)` in `abp-check`.
    pub inf_convolution: Vec<f64>,
    /// Operators of `operator-eval`.
    pub operators: Vec<String>,
    /// Explicit evaluation points of `operator-eval`; empty means every
    /// node of `B_radius`.
    pub points: Vec<Vec<f64>>,
    /// Random nodes of `B_radius` added to `points` using the run seed.
    pub random_points: usize,
    pub radius: f64,
    /// Slack of the comparison left side.
    pub tol: f64,
}

impl Default for StudySpec {
    fn default() -> Self {
        StudySpec {
            sigmas: vec![1.5, 1.9, 1.99],
            levels: 4,
            problems: Vec::new(),
            point: [0.0; 3],
            probe: None,
            envelope_limit: false,
            inf_convolution: Vec::new(),
            operators: vec!["frac_laplacian".into(), "e_sigma".into(), "pucci_minus".into(), "pucci_plus".into()],
            points: Vec::new(),
            random_points: 0,
            radius: 1.0,
            tol: 1e-6,
        }
    }
}

pub const OPERATORS: [&str; 5] = ["frac_laplacian", "e_sigma", "pucci_minus", "pucci_plus", "trace"];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub json: String,
    pub csv: String,
    pub manifest: String,
    pub dump_fields: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { json: "report.json".into(), csv: "table.csv".into(), manifest: "manifest.json".into(), dump_fields: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    pub params: SigmaParams,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub quadrature: PlanSpec,
    #[serde(default)]
    pub problem: ProblemSpec,
    #[serde(default)]
    pub certificate: CertOptions,
    #[serde(default)]
    pub dirichlet: DirichletOptions,
    #[serde(default)]
    pub limit: LimitOptions,
    #[serde(default)]
    pub study: StudySpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &dir)
    }

    /// Grid after `refine` halvings of the spacing.
    pub fn grid(&self, refine: u32) -> Result<Grid> {
        let base = Grid::cube(self.params.n, self.grid.half_width, self.grid.points)?;
        Ok(base.refined(refine))
    }

    pub fn plan(&self, grid: &Grid) -> Result<QuadraturePlan> {
        QuadraturePlan::from_spec(grid.n, grid.h, self.quadrature.clone())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() { p.to_path_buf() } else { self.base_dir.join(p) }
    }

    pub fn field(&self, src: &FieldSource, grid: &Grid) -> Result<Field> {
        match src {
            FieldSource::Expr(text) => {
                let e = Expr::parse(text, &self.problem.constants).map_err(|e| Error::Config(format!("expression '{text}': {e}")))?;
                Ok(Field::from_fn(*grid, Exterior::Zero, |x| e.eval(x)))
            }
            FieldSource::File { file } => super::io::read_field(&self.resolve(file), Some(grid)),
            FieldSource::Shape(shape) => Ok(shape.field(grid)),
        }
    }

    fn required(&self) -> Vec<(&'static str, bool)> {
        let p = &self.problem;
        match self.command {
            Command::OperatorEval | Command::Envelope | Command::LimitStudy => vec![("u", p.u.is_some())],
            Command::Dirichlet => vec![("f", p.f.is_some())],
            Command::AbpCheck => vec![("u or f", p.u.is_some() || p.f.is_some())],
            Command::Comparison => vec![("f", p.f.is_some()), ("g", p.g.is_some())],
            Command::RingStudy | Command::ShrinkStudy => Vec::new(),
        }
    }

    /// Every violated constraint; empty for a runnable configuration.
    pub fn validate(&self) -> Vec<String> {
        let mut out = self.params.diagnostics();
        let gs = &self.grid;
        if gs.points < 5 || gs.points.is_multiple_of(2) {
            out.push(format!("grid.points must be odd and at least 5, got {}", gs.points));
        }
        if !(gs.half_width > 0.0) {
            out.push(format!("grid.half_width must be positive, got {}", gs.half_width));
        }
        let outer = self.certificate.envelope.outer_radius;
        if self.command.needs_outer_ball() && gs.half_width < outer {
            out.push(format!("grid.half_width {} does not cover the envelope ball of radius {outer}", gs.half_width));
        }
        let q = &self.quadrature;
        if !(q.far_cutoff > 0.0) || !(q.radial_step > 0.0) || !(q.angular_step > 0.0) || !(q.inner_radius > 0.0) || q.gauss_points == 0 {
            out.push("quadrature lengths and counts must be positive".into());
        }
        for (name, present) in self.required() {
            if !present {
                out.push(format!("{} requires problem.{name}", self.command.name()));
            }
        }
        let p = &self.problem;
        for (name, src) in [("u", &p.u), ("v", &p.v), ("f", &p.f), ("g", &p.g)] {
            match src {
                Some(FieldSource::Expr(text)) => {
                    if let Err(e) = Expr::parse(text, &p.constants) {
                        out.push(format!("problem.{name}: {e}"));
                    }
                }
                Some(FieldSource::File { file }) => {
                    let path = self.resolve(file);
                    if !path.is_file() {
                        out.push(format!("problem.{name}: file {} does not exist", path.display()));
                    }
                }
                _ => {}
            }
        }
        let c = &self.certificate;
        if !(c.penalty.epsilon > 0.0) || !(c.penalty.beta0 >= 0.0) {
            out.push("certificate.penalty needs epsilon > 0 and beta0 >= 0".into());
        }
        if c.schedule.iter().any(|e| !(*e > 0.0)) || c.schedule.windows(2).any(|w| w[1] >= w[0]) {
            out.push("certificate.schedule must be positive and strictly decreasing".into());
        }
        if !(c.envelope.cfl > 0.0 && c.envelope.cfl <= 1.0) {
            out.push(format!("certificate.envelope.cfl must be in (0,1], got {}", c.envelope.cfl));
        }
        if !(self.dirichlet.cfl > 0.0 && self.dirichlet.cfl <= 1.0) {
            out.push(format!("dirichlet.cfl must be in (0,1], got {}", self.dirichlet.cfl));
        }
        let s = &self.study;
        if matches!(self.command, Command::LimitStudy) && s.sigmas.is_empty() {
            out.push("limit-study needs a nonempty study.sigmas".into());
        }
        for sig in &s.sigmas {
            if !(*sig > 0.0 && *sig < 2.0) {
                out.push(format!("study.sigmas entry out of (0,2): {sig}"));
            }
        }
        if let Some(m) = &s.probe {
            if m.len() != self.params.n || m.iter().any(|r| r.len() != self.params.n) {
                out.push("study.probe must be an n x n matrix".into());
            }
        }
        for op in &s.operators {
            if !OPERATORS.contains(&op.as_str()) {
                out.push(format!("unknown operator '{op}', expected one of {OPERATORS:?}"));
            }
        }
        for pt in &s.points {
            if pt.len() != self.params.n {
                out.push(format!("study.points entry {pt:?} does not have {} coordinates", self.params.n));
            }
        }
        if s.inf_convolution.iter().any(|e| !(*e > 0.0)) {
            out.push("study.inf_convolution entries must be positive".into());
        }
        if matches!(self.command, Command::ShrinkStudy) && s.levels > 8 {
            out.push(format!("study.levels {} exceeds 8", s.levels));
        }
        if matches!(self.command, Command::RingStudy) {
            let names: Vec<String> = ring_catalogue().into_iter().map(|p| p.name).collect();
            for name in &s.problems {
                if !names.contains(name) {
                    out.push(format!("unknown catalogue problem '{name}'"));
                }
            }
        }
        if !(s.radius > 0.0) {
            out.push("study.radius must be positive".into());
        }
        out
    }
}

/// A commented configuration that validates cleanly: the smooth-pit
/// certificate run.
pub const BUNDLED_SMOOTH_PIT: &str = include_str!("../../configs/smooth_pit.toml");
