//! The σ-order envelope obstacle problem and its companions.
//!
//! [`solve_obstacle`] computes `Γ = sup{v : E_σ(v) ≥ 0 in B₃, v ≤ ψ}` with
//! `ψ = u·1_{B₁}` by penalization: for each `ε` of a decreasing schedule it
//! marches `v ← v + dt (E_σ(v) - β_ε(ψ - v))` to steady state, with the
//! penalty taken implicitly. Starting from `ψ`, which is a supersolution,
//! the first level decreases monotonically; later levels start from the
//! previous one and increase.
//!
//! The module also provides the forward Dirichlet solver for `M⁻u = f`,
//! the classical convex envelope, inf-convolution, and a second-order
//! obstacle solver for the σ → 2 limit operator.

use crate::base::{hessian_prefactor, norm, Exterior, Field, Grid, Interp, SigmaParams};
use crate::error::{Error, Result};
use crate::linalg::Sym;
use crate::quadrature::{PlanSpec, QuadraturePlan};
use crate::stencil::{lattice_directions, StencilBank};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Shape of the penalty `β`, convex and nonincreasing with `β(s) = 0` for
/// `s ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyProfile {
    /// `β(s) = β₀ max(1 - s, 0)²`.
    #[default]
    Quadratic,
    /// `β(s) = β₀ max(1 - s, 0)`.
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub epsilon: f64,
    pub beta0: f64,
    #[serde(default)]
    pub profile: PenaltyProfile,
}

impl PenaltySpec {
    pub fn new(epsilon: f64, beta0: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !(beta0 >= 0.0) {
            return Err(Error::Domain(format!("penalty needs epsilon > 0 and beta0 >= 0, got {epsilon}, {beta0}")));
        }
        Ok(PenaltySpec { epsilon, beta0, profile: PenaltyProfile::Quadratic })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        PenaltySpec { epsilon, ..*self }
    }
}

/// `β_ε(s) = β(s/ε)`.
pub fn penalty_beta(s: f64, spec: &PenaltySpec) -> f64 {
    let t = (1.0 - s / spec.epsilon).max(0.0);
    match spec.profile {
        PenaltyProfile::Quadratic => spec.beta0 * t * t,
        PenaltyProfile::Linear => spec.beta0 * t,
    }
}

/// Solves `z + dt β_ε(ψ - z) = b` for `z`; the left side is increasing.
fn implicit_penalty(b: f64, psi: f64, dt: f64, spec: &PenaltySpec) -> f64 {
    let z0 = psi - spec.epsilon;
    if b <= z0 {
        return b;
    }
    let rhs = b - z0;
    match spec.profile {
        PenaltyProfile::Quadratic => {
            let a = dt * spec.beta0 / (spec.epsilon * spec.epsilon);
            z0 + 2.0 * rhs / (1.0 + (1.0 + 4.0 * a * rhs).sqrt())
        }
        PenaltyProfile::Linear => {
            let a = dt * spec.beta0 / spec.epsilon;
            z0 + rhs / (1.0 + a)
        }
    }
}

/// Which lower operator defines the envelope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeOperator {
    /// `E_σ`, smallest eigenvalue of the fractional Hessian.
    #[default]
    Hessian,
    /// `E*_σ`, minimum over lattice directions of 1-D fractional Laplacians.
    Directional,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvelopeOptions {
    pub operator: EnvelopeOperator,
    /// Pseudo-time step as a fraction of the explicit stability limit.
    pub cfl: f64,
    /// Steady-state tolerance on `|E(v) - β_ε(ψ - v)|`.
    pub residual_tol: f64,
    pub max_iter: usize,
    /// Radius of the region where the envelope is free.
    pub outer_radius: f64,
    /// Radius of the region where the obstacle is active.
    pub inner_radius: f64,
    /// Optional viscosity `ρ Δ v` added on all but the last level, halved
    /// per level.
    pub viscosity: Option<f64>,
    /// Stop the schedule once the contact mask is unchanged for two levels.
    pub stop_when_stable: bool,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        EnvelopeOptions {
            operator: EnvelopeOperator::Hessian,
            cfl: 0.9,
            residual_tol: 1e-4,
            max_iter: 200_000,
            outer_radius: 3.0,
            inner_radius: 1.0,
            viscosity: None,
            stop_when_stable: false,
        }
    }
}

/// Diagnostics of one penalization level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpsRecord {
    pub eps: f64,
    /// `sup |ψ - v^ε|` over the contact mask at this level.
    pub sup_gap_contact: f64,
    pub contact_nodes: usize,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct EnvelopeResult {
    pub gamma: Field,
    pub contact: Vec<bool>,
    /// `E_σ(Γ)` (or `E*_σ(Γ)`) at every node.
    pub residual: Field,
    pub eps_history: Vec<EpsRecord>,
    /// Iterates at the end of each level, for monotonicity checks.
    pub levels: Vec<Vec<f64>>,
    pub beta0: f64,
    pub obstacle_shift: f64,
    pub contact_tol: f64,
    pub iterations: usize,
}

/// Lower operator evaluated on a whole grid.
pub struct LowerOperator {
    bank: StencilBank,
    kind: EnvelopeOperator,
    scale: f64,
    lipschitz: f64,
}

impl LowerOperator {
    pub fn new(grid: &Grid, p: &SigmaParams, q: &QuadraturePlan, kind: EnvelopeOperator) -> Result<Self> {
        match kind {
            EnvelopeOperator::Hessian => {
                let bank = StencilBank::moments(grid, p.sigma, q)?;
                let c = hessian_prefactor(p.n, p.sigma);
                let d = diag_sym(&bank);
                let lip = c * d.eigenvalues().last().copied().unwrap_or(0.0);
                Ok(LowerOperator { bank, kind, scale: c, lipschitz: lip })
            }
            EnvelopeOperator::Directional => {
                let dirs = lattice_directions(grid.n);
                let bank = StencilBank::directional(grid, p.sigma, &dirs, q.far_cutoff)?;
                let lip = bank.diagonal().iter().copied().fold(0.0, f64::max);
                Ok(LowerOperator { bank, kind, scale: 1.0, lipschitz: lip })
            }
        }
    }

    /// Bound on the derivative of the operator with respect to `v(x)`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn eval(&self, v: &Field) -> Result<Vec<f64>> {
        let out = self.bank.apply(v)?;
        let len = v.grid.len();
        Ok(match self.kind {
            EnvelopeOperator::Hessian => (0..len)
                .into_par_iter()
                .map(|i| self.scale * self.bank.sym_at(&out, i).min_eigenvalue())
                .collect(),
            EnvelopeOperator::Directional => (0..len)
                .into_par_iter()
                .map(|i| out.iter().map(|c| c[i]).fold(f64::INFINITY, f64::min))
                .collect(),
        })
    }
}

fn diag_sym(bank: &StencilBank) -> Sym {
    let n = bank.grid.n;
    let mut d = Sym::zeros(n);
    for (c, (a, b)) in crate::stencil::sym_components(n).iter().enumerate() {
        d.m[*a][*b] = bank.diagonal()[c];
        d.m[*b][*a] = bank.diagonal()[c];
    }
    d
}

fn region_mask(grid: &Grid, radius: f64) -> Vec<bool> {
    (0..grid.len()).map(|i| norm(&grid.point(i)) < radius).collect()
}

/// Default schedule `ε_k = ε₀ 2^{-k}`, `k = 0..levels`.
pub fn geometric_schedule(eps0: f64, levels: usize) -> Vec<f64> {
    (0..levels).map(|k| eps0 * 0.5f64.powi(k as i32)).collect()
}

/// Nodes of `B₁` where `|Γ - u| ≤ tol`.
pub fn contact_set(gamma: &Field, obstacle: &Field, tol: f64) -> Vec<bool> {
    contact_set_in(gamma, obstacle, tol, 1.0)
}

pub fn contact_set_in(gamma: &Field, obstacle: &Field, tol: f64, radius: f64) -> Vec<bool> {
    let g = &gamma.grid;
    (0..g.len())
        .map(|i| norm(&g.point(i)) < radius && (gamma.values[i] - obstacle.values[i]).abs() <= tol)
        .collect()
}

/// Envelope with default options.
pub fn solve_obstacle(obstacle: &Field, p: &SigmaParams, q: &QuadraturePlan, spec: &PenaltySpec, schedule: &[f64]) -> Result<EnvelopeResult> {
    solve_obstacle_with(obstacle, p, q, spec, schedule, &EnvelopeOptions::default())
}

pub fn solve_obstacle_with(
    obstacle: &Field,
    p: &SigmaParams,
    q: &QuadraturePlan,
    spec: &PenaltySpec,
    schedule: &[f64],
    opts: &EnvelopeOptions,
) -> Result<EnvelopeResult> {
    let op = LowerOperator::new(&obstacle.grid, p, q, opts.operator.clone())?;
    solve_obstacle_op(obstacle, &op, spec, schedule, opts)
}

/// Envelope with a prebuilt operator, so sweeps can share stencils.
pub fn solve_obstacle_op(obstacle: &Field, op: &LowerOperator, spec: &PenaltySpec, schedule: &[f64], opts: &EnvelopeOptions) -> Result<EnvelopeResult> {
    let g = obstacle.grid;
    if schedule.is_empty() {
        return Err(Error::Domain("empty epsilon schedule".into()));
    }
    if schedule.iter().any(|e| !(*e > 0.0)) || schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("epsilon schedule must be positive and strictly decreasing".into()));
    }
    let inner = region_mask(&g, opts.inner_radius);
    let free = region_mask(&g, opts.outer_radius);
    for a in 0..g.n {
        if g.lo[a] > -opts.outer_radius || g.hi[a] < opts.outer_radius {
            return Err(Error::Precondition(format!("grid does not cover B_{}", opts.outer_radius)));
        }
    }
    let sup_in = (0..g.len()).filter(|&i| inner[i]).map(|i| obstacle.values[i]).fold(f64::NEG_INFINITY, f64::max);
    let shift = sup_in.max(0.0);
    let psi: Vec<f64> = (0..g.len()).map(|i| if inner[i] { obstacle.values[i] - shift } else { 0.0 }).collect();
    let psi_field = Field { grid: g, values: psi.clone(), exterior: Exterior::Zero };
    if psi.iter().all(|v| *v == 0.0) {
        // Zero is admissible and every admissible function lies below it.
        let zero = Field::zeros(g);
        let history = schedule.iter().map(|&eps| EpsRecord { eps, sup_gap_contact: 0.0, contact_nodes: inner.iter().filter(|m| **m).count(), iterations: 0, residual: 0.0 }).collect();
        return Ok(EnvelopeResult {
            residual: zero.clone(),
            contact: inner,
            eps_history: history,
            levels: vec![zero.values.clone(); schedule.len()],
            gamma: zero,
            beta0: spec.beta0,
            obstacle_shift: shift,
            contact_tol: schedule[schedule.len() - 1],
            iterations: 0,
        });
    }

    let e_psi = op.eval(&psi_field)?;
    let sup_e = (0..g.len()).filter(|&i| free[i]).map(|i| e_psi[i]).fold(0.0f64, f64::max);
    let beta0 = spec.beta0.max(sup_e);
    let dt = opts.cfl / op.lipschitz().max(f64::MIN_POSITIVE);
    let h2 = g.h * g.h;

    let mut v = psi.clone();
    let mut history = Vec::new();
    let mut levels = Vec::new();
    let mut total_iter = 0;
    let mut prev_masks: Vec<Vec<bool>> = Vec::new();
    let last = schedule.len() - 1;
    for (k, &eps) in schedule.iter().enumerate() {
        let level_spec = PenaltySpec { epsilon: eps, beta0, profile: spec.profile };
        let rho = match opts.viscosity {
            Some(r0) if k < last => r0 * 0.5f64.powi(k as i32),
            _ => 0.0,
        };
        let dt_level = if rho > 0.0 { 1.0 / (1.0 / dt + 2.0 * g.n as f64 * rho / h2) * opts.cfl.min(1.0) } else { dt };
        let mut iters = 0;
        let mut residual = f64::INFINITY;
        while iters < opts.max_iter {
            let field = Field { grid: g, values: v, exterior: Exterior::Zero };
            let e = op.eval(&field)?;
            let vv = field.values;
            let lap = if rho > 0.0 { laplacian5(&g, &vv) } else { Vec::new() };
            let new: Vec<(f64, f64)> = (0..g.len())
                .into_par_iter()
                .map(|i| {
                    if !free[i] {
                        return (0.0, 0.0);
                    }
                    let mut drive = e[i];
                    if rho > 0.0 {
                        drive += rho * lap[i];
                    }
                    let b = vv[i] + dt_level * drive;
                    let z = implicit_penalty(b, psi[i], dt_level, &level_spec);
                    (z, (z - vv[i]).abs() / dt_level)
                })
                .collect();
            residual = new.iter().map(|x| x.1).fold(0.0, f64::max);
            v = new.into_iter().map(|x| x.0).collect();
            iters += 1;
            if residual < opts.residual_tol {
                break;
            }
        }
        total_iter += iters;
        if residual >= opts.residual_tol {
            return Err(Error::NonConvergence { iterations: total_iter, residual });
        }
        let mask: Vec<bool> = (0..g.len()).map(|i| inner[i] && psi[i] - v[i] <= eps).collect();
        let gap = (0..g.len()).filter(|&i| mask[i]).map(|i| (psi[i] - v[i]).abs()).fold(0.0, f64::max);
        history.push(EpsRecord { eps, sup_gap_contact: gap, contact_nodes: mask.iter().filter(|m| **m).count(), iterations: iters, residual });
        levels.push(v.clone());
        let stable = prev_masks.len() >= 2 && prev_masks.iter().rev().take(2).all(|m| *m == mask);
        prev_masks.push(mask);
        if opts.stop_when_stable && stable {
            break;
        }
    }
    let eps_last = history.last().map(|r| r.eps).unwrap_or(schedule[last]);
    let gamma = Field { grid: g, values: v, exterior: Exterior::Zero };
    let resid = op.eval(&gamma)?;
    let psi_obstacle = Field { grid: g, values: psi, exterior: Exterior::Zero };
    let contact = contact_set_in(&gamma, &psi_obstacle, eps_last, opts.inner_radius);
    Ok(EnvelopeResult {
        residual: Field { grid: g, values: resid, exterior: Exterior::Zero },
        gamma,
        contact,
        eps_history: history,
        levels,
        beta0,
        obstacle_shift: shift,
        contact_tol: eps_last,
        iterations: total_iter,
    })
}

fn laplacian5(g: &Grid, v: &[f64]) -> Vec<f64> {
    let h2 = g.h * g.h;
    let field = Field { grid: *g, values: v.to_vec(), exterior: Exterior::Zero };
    (0..g.len())
        .into_par_iter()
        .map(|i| {
            let node = g.node(i);
            let mut acc = -2.0 * g.n as f64 * v[i];
            for a in 0..g.n {
                for s in [-1i64, 1] {
                    let mut m = node;
                    m[a] += s;
                    acc += field.node_value(&m);
                }
            }
            acc / h2
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DirichletOptions {
    pub cfl: f64,
    /// Tolerance on `|M⁻u - f|` at interior nodes.
    pub residual_tol: f64,
    pub max_iter: usize,
    pub radius: f64,
    /// Nesterov momentum with restart whenever the residual grows. The
    /// fixed point is unchanged; without it the march is the plain
    /// monotone explicit scheme.
    pub momentum: bool,
}

impl Default for DirichletOptions {
    fn default() -> Self {
        DirichletOptions { cfl: 0.9, residual_tol: 1e-6, max_iter: 500_000, radius: 1.0, momentum: true }
    }
}

/// `M⁻` on a whole grid, reusing one stencil bank.
pub struct PucciSweep {
    bank: StencilBank,
    p: SigmaParams,
    lipschitz: f64,
}

impl PucciSweep {
    pub fn new(grid: &Grid, p: &SigmaParams, q: &QuadraturePlan) -> Result<Self> {
        let bank = StencilBank::moments(grid, p.sigma, q)?;
        let d = diag_sym(&bank);
        let lipschitz = (2.0 - p.sigma) * p.big_lambda * d.trace();
        Ok(PucciSweep { bank, p: *p, lipschitz })
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Moment matrices `W` at every node.
    pub fn moments(&self, v: &Field) -> Result<Vec<Sym>> {
        let out = self.bank.apply(v)?;
        Ok((0..v.grid.len()).into_par_iter().map(|i| self.bank.sym_at(&out, i)).collect())
    }

    pub fn minus(&self, v: &Field) -> Result<Vec<f64>> {
        let out = self.bank.apply(v)?;
        let p = self.p;
        Ok((0..v.grid.len())
            .into_par_iter()
            .map(|i| {
                let mut e = self.bank.sym_at(&out, i).eigenvalues();
                (2.0 - p.sigma) * trace_min_value(&mut e, p.lambda, p.big_lambda)
            })
            .collect())
    }
}

/// Value of the water-filling program without the weights; sorts `e`.
pub(crate) fn trace_min_value(e: &mut [f64], lambda: f64, big_lambda: f64) -> f64 {
    e.sort_by(f64::total_cmp);
    let mut used = 0.0;
    let mut val = 0.0;
    for &x in e.iter() {
        if x < 0.0 {
            used += big_lambda;
            val += big_lambda * x;
        }
    }
    for &x in e.iter() {
        if used >= lambda {
            break;
        }
        if x >= 0.0 {
            let take = (lambda - used).min(big_lambda);
            used += take;
            val += take * x;
        }
    }
    val
}

/// Solves `M⁻u = f` in `B₁`, `u = 0` outside, by monotone pseudo-time
/// marching from `u = 0`.
pub fn solve_dirichlet(f: &Field, p: &SigmaParams, q: &QuadraturePlan) -> Result<Field> {
    let sweep = PucciSweep::new(&f.grid, p, q)?;
    solve_dirichlet_with(f, &sweep, &DirichletOptions::default())
}

pub fn solve_dirichlet_with(f: &Field, sweep: &PucciSweep, opts: &DirichletOptions) -> Result<Field> {
    solve_dirichlet_from(f, sweep, opts, vec![0.0; f.grid.len()])
}

/// Marching from the initial values `u0`, which are set to zero outside
/// the ball.
pub fn solve_dirichlet_from(f: &Field, sweep: &PucciSweep, opts: &DirichletOptions, u0: Vec<f64>) -> Result<Field> {
    let g = f.grid;
    if let Some(i) = f.values.iter().position(|x| *x < 0.0) {
        return Err(Error::Precondition(format!("right-hand side negative at node {i}")));
    }
    if u0.len() != g.len() {
        return Err(Error::Domain("initial values do not match the grid".into()));
    }
    let inside = region_mask(&g, opts.radius);
    let dt = opts.cfl / sweep.lipschitz().max(f64::MIN_POSITIVE);
    let mut u: Vec<f64> = u0.into_iter().zip(&inside).map(|(v, m)| if *m { v } else { 0.0 }).collect();
    let mut prev = u.clone();
    let mut k = 0usize;
    let mut last = f64::INFINITY;
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let beta = if opts.momentum { k as f64 / (k as f64 + 3.0) } else { 0.0 };
        let y: Vec<f64> = u.iter().zip(&prev).map(|(a, b)| a + beta * (a - b)).collect();
        let field = Field { grid: g, values: y, exterior: Exterior::Zero };
        let m = sweep.minus(&field)?;
        let mut y = field.values;
        residual = 0.0;
        for i in 0..g.len() {
            if inside[i] {
                residual = residual.max((m[i] - f.values[i]).abs());
            }
        }
        if residual < opts.residual_tol {
            return Ok(Field { grid: g, values: y, exterior: Exterior::Zero });
        }
        if k > 0 && residual > last {
            k = 0;
            prev.clone_from(&u);
            last = f64::INFINITY;
            continue;
        }
        for i in 0..g.len() {
            if inside[i] {
                y[i] += dt * (m[i] - f.values[i]);
            }
        }
        prev = std::mem::replace(&mut u, y);
        last = residual;
        k += 1;
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, residual })
}

/// Coarsest grid, in nodes per axis, used by [`solve_dirichlet_multilevel`].
pub const MULTILEVEL_MIN_POINTS: usize = 33;

/// Solves on the grid with doubled spacing first, when every axis has an
/// odd node count and the coarse grid keeps at least
/// [`MULTILEVEL_MIN_POINTS`] nodes per axis, and starts the fine march from
/// the interpolated coarse solution. The fixed point is the same as that of
/// [`solve_dirichlet_with`]; only the number of fine iterations changes.
pub fn solve_dirichlet_multilevel(f: &Field, p: &SigmaParams, spec: &PlanSpec, opts: &DirichletOptions) -> Result<Field> {
    let g = f.grid;
    let plan = QuadraturePlan::from_spec(g.n, g.h, spec.clone())?;
    let sweep = PucciSweep::new(&g, p, &plan)?;
    let coarsenable = (0..g.n).all(|a| g.dims[a] % 2 == 1 && (g.dims[a] - 1) / 2 + 1 >= MULTILEVEL_MIN_POINTS);
    if !coarsenable {
        return solve_dirichlet_with(f, &sweep, opts);
    }
    let lo: Vec<f64> = g.lo[..g.n].to_vec();
    let hi: Vec<f64> = g.hi[..g.n].to_vec();
    let cg = Grid::new(&lo, &hi, 2.0 * g.h)?;
    let fc: Vec<f64> = (0..cg.len())
        .map(|i| {
            let mut node = cg.node(i);
            for c in node.iter_mut().take(g.n) {
                *c *= 2;
            }
            f.node_value(&node)
        })
        .collect();
    let uc = solve_dirichlet_multilevel(&Field { grid: cg, values: fc, exterior: Exterior::Zero }, p, spec, opts)?;
    let u0 = (0..g.len()).map(|i| uc.value_at(&g.point(i), Interp::Multilinear)).collect();
    solve_dirichlet_from(f, &sweep, opts, u0)
}

/// Lower convex hull of the points `(x_k, y_k)` (sorted by `x`), evaluated
/// back at every `x_k`.
fn hull_1d(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut hull: Vec<usize> = Vec::new();
    for k in 0..xs.len() {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (xs[b] - xs[a]) * (ys[k] - ys[a]) - (ys[b] - ys[a]) * (xs[k] - xs[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    let mut out = vec![0.0; xs.len()];
    let mut seg = 0;
    for k in 0..xs.len() {
        while seg + 1 < hull.len() - 1 && xs[hull[seg + 1]] < xs[k] {
            seg += 1;
        }
        if hull.len() == 1 {
            out[k] = ys[hull[0]];
            continue;
        }
        let (a, b) = (hull[seg], hull[(seg + 1).min(hull.len() - 1)]);
        if a == b || xs[b] == xs[a] {
            out[k] = ys[a];
        } else {
            let t = (xs[k] - xs[a]) / (xs[b] - xs[a]);
            out[k] = ys[a] + t * (ys[b] - ys[a]);
        }
        if k == a || k == b {
            out[k] = ys[k];
        }
    }
    out
}

/// Discrete Legendre data of a grid function restricted to a ball.
#[derive(Clone, Debug)]
pub struct SlopeMap {
    pub n: usize,
    pub pmax: f64,
    pub dp: f64,
    pub per_axis: usize,
    /// `v*(p) = max_x (p·x - v(x))` per slope, row-major.
    pub conjugate: Vec<f64>,
    /// Grid index of the maximizer per slope.
    pub argmax: Vec<usize>,
}

impl SlopeMap {
    pub fn slope(&self, k: usize) -> [f64; 3] {
        let mut p = [0.0; 3];
        let mut rem = k;
        for a in (0..self.n).rev() {
            let j = rem % self.per_axis;
            rem /= self.per_axis;
            p[a] = -self.pmax + j as f64 * self.dp;
        }
        p
    }
}

/// Largest Lipschitz quotient of `v` along grid axes inside `B_R`.
fn axis_lipschitz(v: &Field, inside: &[bool]) -> f64 {
    let g = &v.grid;
    let mut l = 0.0f64;
    for i in 0..g.len() {
        if !inside[i] {
            continue;
        }
        let node = g.node(i);
        for a in 0..g.n {
            let mut m = node;
            m[a] += 1;
            if let Some(j) = g.index(&m) {
                if inside[j] {
                    l = l.max((v.values[j] - v.values[i]).abs() / g.h);
                }
            }
        }
    }
    l
}

/// Separable max-plus transform `out(b) = max_a (a·b + vals(a))` between
/// tensor grids, tracking the flat index of the maximizing `a` (taken from
/// `arg`). Entries equal to `-∞` are skipped.
fn maxplus(mut vals: Vec<f64>, mut arg: Vec<usize>, src: &[Vec<f64>], dst: &[Vec<f64>]) -> (Vec<f64>, Vec<usize>) {
    let n = src.len();
    let neg = f64::NEG_INFINITY;
    let mut shape: Vec<usize> = src.iter().map(|c| c.len()).collect();
    for axis in (0..n).rev() {
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let len_a = shape[axis];
        let xs = &src[axis];
        let ps = &dst[axis];
        let per = ps.len();
        let mut nv = vec![neg; outer * per * inner];
        let mut na = vec![0usize; outer * per * inner];
        nv.par_chunks_mut(per * inner).zip(na.par_chunks_mut(per * inner)).enumerate().for_each(|(o, (cv, ca))| {
            for (jp, &pv) in ps.iter().enumerate() {
                for r in 0..inner {
                    let mut best = neg;
                    let mut ba = 0usize;
                    for (k, &xk) in xs.iter().enumerate().take(len_a) {
                        let s = (o * len_a + k) * inner + r;
                        let val = vals[s];
                        if val == neg {
                            continue;
                        }
                        let cand = val + pv * xk;
                        if cand > best {
                            best = cand;
                            ba = arg[s];
                        }
                    }
                    cv[jp * inner + r] = best;
                    ca[jp * inner + r] = ba;
                }
            }
        });
        vals = nv;
        arg = na;
        shape[axis] = per;
    }
    (vals, arg)
}

fn axis_coords(g: &Grid) -> Vec<Vec<f64>> {
    (0..g.n).map(|a| (0..g.dims[a]).map(|k| g.lo[a] + k as f64 * g.h).collect()).collect()
}

/// Slope grid with `per_axis` points on `[-pmax, pmax]` (odd, so `p = 0` is
/// included) and the conjugate of `v` restricted to `B_R` on it.
pub fn legendre_slopes(v: &Field, radius: f64, pmax: Option<f64>, per_axis: Option<usize>) -> SlopeMap {
    let g = &v.grid;
    let n = g.n;
    let inside: Vec<bool> = (0..g.len()).map(|i| norm(&g.point(i)) <= radius + 1e-12).collect();
    let pmax = pmax.unwrap_or_else(|| axis_lipschitz(v, &inside).max(1e-12));
    let mut per = per_axis.unwrap_or(4 * g.dims[..n].iter().copied().max().unwrap_or(2) + 1);
    if per.is_multiple_of(2) {
        per += 1;
    }
    let dp = 2.0 * pmax / (per - 1) as f64;
    let ps: Vec<f64> = (0..per).map(|j| -pmax + j as f64 * dp).collect();
    let vals: Vec<f64> = (0..g.len()).map(|i| if inside[i] { -v.values[i] } else { f64::NEG_INFINITY }).collect();
    let (conjugate, argmax) = maxplus(vals, (0..g.len()).collect(), &axis_coords(g), &vec![ps; n]);
    SlopeMap { n, pmax, dp, per_axis: per, conjugate, argmax }
}

/// Largest convex minorant of `v` on `B_R`. Values outside `B_R` are copied
/// from `v`.
///
/// In 1-D this is the exact lower hull of the sampled graph. In 2-D and 3-D
/// it is the discrete Legendre biconjugate over a slope grid, which never
/// exceeds the true hull and is exact at nodes where the grid contains a
/// subgradient.
pub fn convex_envelope(v: &Field, radius: f64) -> Field {
    convex_envelope_with(v, radius, None, None)
}

pub fn convex_envelope_with(v: &Field, radius: f64, pmax: Option<f64>, per_axis: Option<usize>) -> Field {
    let g = &v.grid;
    let inside: Vec<bool> = (0..g.len()).map(|i| norm(&g.point(i)) <= radius + 1e-12).collect();
    if g.n == 1 {
        let idx: Vec<usize> = (0..g.len()).filter(|&i| inside[i]).collect();
        let xs: Vec<f64> = idx.iter().map(|&i| g.point(i)[0]).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| v.values[i]).collect();
        let hull = if idx.is_empty() { Vec::new() } else { hull_1d(&xs, &ys) };
        let mut out = v.values.clone();
        for (k, &i) in idx.iter().enumerate() {
            out[i] = hull[k];
        }
        return v.with_values(out);
    }
    let sm = legendre_slopes(v, radius, pmax, per_axis);
    let ps: Vec<f64> = (0..sm.per_axis).map(|j| -sm.pmax + j as f64 * sm.dp).collect();
    let neg: Vec<f64> = sm.conjugate.iter().map(|c| -c).collect();
    let len = neg.len();
    let (bi, _) = maxplus(neg, vec![0; len], &vec![ps; g.n], &axis_coords(g));
    let out = (0..g.len()).map(|i| if inside[i] { bi[i].min(v.values[i]) } else { v.values[i] }).collect();
    v.with_values(out)
}

/// `v_ε(x) = min_y { v(y) + |x - y|²/(2ε) }` over grid nodes, by separable
/// lower envelopes of parabolas.
pub fn inf_convolution(v: &Field, eps: f64) -> Result<Field> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("inf_convolution needs eps > 0, got {eps}")));
    }
    let g = &v.grid;
    let mut cur = v.values.clone();
    let strides = g.strides();
    for a in 0..g.n {
        let len = g.dims[a];
        let stride = strides[a];
        let lines: Vec<usize> = (0..g.len()).filter(|&i| (i / stride).is_multiple_of(len)).collect();
        let c = 1.0 / (2.0 * eps);
        let h = g.h;
        let results: Vec<(usize, Vec<f64>)> = lines
            .par_iter()
            .map(|&start| {
                let f: Vec<f64> = (0..len).map(|k| cur[start + k * stride]).collect();
                (start, parabola_envelope(&f, h, c))
            })
            .collect();
        for (start, r) in results {
            for (k, val) in r.into_iter().enumerate() {
                cur[start + k * stride] = val;
            }
        }
    }
    Ok(v.with_values(cur))
}

/// `d(k) = min_j f(j) + c (h(k - j))²`, exact, linear time.
fn parabola_envelope(f: &[f64], h: f64, c: f64) -> Vec<f64> {
    let n = f.len();
    let q = |j: usize| j as f64 * h;
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let inter = |i: usize, j: usize| ((f[i] + c * q(i) * q(i)) - (f[j] + c * q(j) * q(j))) / (2.0 * c * (q(i) - q(j)));
    for i in 1..n {
        let mut s = inter(i, v[k]);
        while s <= z[k] {
            k -= 1;
            s = inter(i, v[k]);
        }
        k += 1;
        v[k] = i;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut out = vec![0.0; n];
    k = 0;
    for (i, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q(i) {
            k += 1;
        }
        let d = q(i) - q(v[k]);
        *o = f[v[k]] + c * d * d;
    }
    out
}

/// Options of the second-order limit obstacle solver.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct LimitOptions {
    pub cfl: f64,
    pub residual_tol: f64,
    pub max_iter: usize,
    pub outer_radius: f64,
    pub inner_radius: f64,
    /// Coefficient of the Laplacian in `λ₁(D²v) + c Δv`.
    pub laplacian_coeff: f64,
}

impl Default for LimitOptions {
    fn default() -> Self {
        LimitOptions { cfl: 0.9, residual_tol: 1e-6, max_iter: 2_000_000, outer_radius: 3.0, inner_radius: 1.0, laplacian_coeff: 0.5 }
    }
}

/// Obstacle problem for `λ₁(D²v) + c Δv ≥ 0` in `B₃`, `v ≤ u 1_{B₁}`, solved
/// by projected monotone marching with the wide stencil
/// `min_d [D_dd v + c Σ_i D_ii v]` over lattice directions.
pub fn solve_limit_obstacle(obstacle: &Field, opts: &LimitOptions) -> Result<Field> {
    let g = obstacle.grid;
    let inner = region_mask(&g, opts.inner_radius);
    let free = region_mask(&g, opts.outer_radius);
    let psi: Vec<f64> = (0..g.len()).map(|i| if inner[i] { obstacle.values[i].min(0.0) } else { 0.0 }).collect();
    let dirs = lattice_directions(g.n);
    let h2 = g.h * g.h;
    let lip = dirs.iter().map(|d| 2.0 / (((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64) * h2)).fold(0.0, f64::max)
        + opts.laplacian_coeff * 2.0 * g.n as f64 / h2;
    let dt = opts.cfl / lip;
    let mut v = psi.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let field = Field { grid: g, values: v, exterior: Exterior::Zero };
        let next: Vec<(f64, f64)> = (0..g.len())
            .into_par_iter()
            .map(|i| {
                if !free[i] {
                    return (0.0, 0.0);
                }
                let node = g.node(i);
                let v0 = field.values[i];
                let second = |d: &[i64; 3]| {
                    let mut a = node;
                    let mut b = node;
                    for k in 0..g.n {
                        a[k] += d[k];
                        b[k] -= d[k];
                    }
                    let l2 = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64 * h2;
                    (field.node_value(&a) + field.node_value(&b) - 2.0 * v0) / l2
                };
                let mut lap = 0.0;
                for k in 0..g.n {
                    let mut e = [0i64; 3];
                    e[k] = 1;
                    lap += second(&e);
                }
                let f = dirs.iter().map(second).fold(f64::INFINITY, f64::min) + opts.laplacian_coeff * lap;
                let z = (v0 + dt * f).min(psi[i]);
                (z, (z - v0).abs() / dt)
            })
            .collect();
        residual = next.iter().map(|x| x.1).fold(0.0, f64::max);
        v = next.into_iter().map(|x| x.0).collect();
        if residual < opts.residual_tol {
            return Ok(Field { grid: g, values: v, exterior: Exterior::Zero });
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, residual })
}
