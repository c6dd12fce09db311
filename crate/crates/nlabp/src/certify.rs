//! Certificates for the nonlocal ABP estimate and its ingredients.
//!
//! Every inequality is evaluated with explicit constants where the
//! argument provides them, and with a reported empirical constant where it
//! does not. A certificate is a plain value: all chain steps with their two
//! sides, the pass flag, and the location of the worst node.

use crate::base::{ball_volume, hessian_prefactor, norm, sphere_area, Exterior, Field, Grid, Point, SigmaParams};
use crate::envelope::{solve_limit_obstacle, solve_obstacle_with, convex_envelope, EnvelopeOptions, EnvelopeResult, LimitOptions, PenaltySpec, PucciSweep, geometric_schedule};
use crate::error::{Error, Result};
use crate::linalg::Sym;
use crate::nonlocal_ops::{frac_hessian, moments, trace_min};
use crate::potential::{potential_hessian, potential_on, riesz_potential, decay_radius, PotentialField};
use crate::quadrature::{sphere_rule, QuadraturePlan};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Eigenvalues below this are treated as a domain error by the determinant
/// formula; values in `[-DET_NEG_TOL, 0)` are clamped to zero.
pub const DET_NEG_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DetInf {
    /// Determinant by cofactor expansion.
    pub direct: f64,
    /// `((1/n) inf{Tr(AW) : A ⪰ 0, det A = 1})ⁿ`, evaluated at the optimal
    /// `A = det(W)^{1/n} W⁻¹` assembled in the original basis.
    pub dual: f64,
}

pub fn det_inf_detail(w: &Sym) -> Result<DetInf> {
    let n = w.n;
    let (vals, vecs) = w.eigen();
    if vals.iter().any(|e| *e < -DET_NEG_TOL * w.norm().max(1.0)) {
        return Err(Error::Domain(format!("matrix is not positive semidefinite, eigenvalues {vals:?}")));
    }
    let e: Vec<f64> = vals.iter().map(|x| x.max(0.0)).collect();
    let direct = w.det();
    if e.contains(&0.0) {
        return Ok(DetInf { direct, dual: 0.0 });
    }
    let root = e.iter().map(|x| x.ln()).sum::<f64>() / n as f64;
    let root = root.exp();
    let mut a = Sym::zeros(n);
    for (ei, vi) in e.iter().zip(&vecs) {
        a.add_outer(root / ei, vi);
    }
    let dual = (a.dot(w) / n as f64).powi(n as i32);
    Ok(DetInf { direct, dual })
}

/// `det W` through the infimum formula.
pub fn det_inf_formula(w: &Sym) -> Result<f64> {
    Ok(det_inf_detail(w)?.dual)
}

/// `D²P` from a moment matrix: `c_h (W - S/(n+σ) Id)`.
pub fn potential_hessian_from_moments(w: &Sym, n: usize, sigma: f64) -> Sym {
    let c = hessian_prefactor(n, sigma);
    w.add_scaled_identity(-w.trace() / (n as f64 + sigma)).scale(c)
}

/// Determinant of the symmetric matrix with negative eigenvalues set to
/// zero, and whether it was positive semidefinite to begin with.
fn gated_det(m: &Sym) -> (f64, bool) {
    let e = m.eigenvalues();
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let gated = e[0] >= -1e-12 * scale;
    (e.iter().map(|x| x.max(0.0)).product(), gated)
}

#[derive(Clone, Debug, Serialize)]
pub struct MongeAmpere {
    pub value: f64,
    /// `D²P(x) ⪰ 0`; when false `value` is the determinant of the positive
    /// part and is meant for diagnostics only.
    pub gated: bool,
    pub hessian: Sym,
}

/// `D_σ(Γ,x) = det D²P(x)` on the gated set.
pub fn monge_ampere_sigma(gamma: &Field, x: &Point, p: &SigmaParams, q: &QuadraturePlan) -> Result<MongeAmpere> {
    let hessian = potential_hessian(gamma, x, p, q)?;
    let (det, gated) = gated_det(&hessian);
    let value = if gated { det_inf_formula(&hessian.add_scaled_identity(0.0)).unwrap_or(det) } else { det };
    Ok(MongeAmpere { value, gated, hessian })
}

/// Constant of `det(D²P)^{1/n} ≤ C M⁻(Γ)/λ` on the gated set,
/// `C = σ c_h / (n (2-σ))`. It follows from AM-GM on the eigenvalues of
/// `D²P` together with `W ⪰ S/(n+σ) Id` there.
pub fn ordering_constant(n: usize, sigma: f64) -> f64 {
    sigma * hessian_prefactor(n, sigma) / (n as f64 * (2.0 - sigma))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct OrderingCheck {
    /// `D_σ(Γ,x)`.
    pub lhs: f64,
    /// `(M⁻(Γ,x)/λ)ⁿ`.
    pub rhs: f64,
    /// `lhs / rhs`, bounded by `ordering_constant(n,σ)ⁿ`.
    pub ratio: Option<f64>,
    pub constant: f64,
}

pub fn ordering_from_moments(w: &Sym, p: &SigmaParams) -> Result<OrderingCheck> {
    let n = p.n;
    let d2p = potential_hessian_from_moments(w, n, p.sigma);
    let (det, gated) = gated_det(&d2p);
    if !gated {
        return Err(Error::Precondition("D²P is not positive semidefinite".into()));
    }
    let e = w.eigenvalues();
    let m = (2.0 - p.sigma) * trace_min(&e, p.lambda, p.big_lambda)?.0;
    let rhs = (m.max(0.0) / p.lambda).powi(n as i32);
    Ok(OrderingCheck { lhs: det, rhs, ratio: (rhs > 0.0).then(|| det / rhs), constant: ordering_constant(n, p.sigma).powi(n as i32) })
}

/// Both sides of `D_σ(Γ,x) ≤ C(n)/λⁿ (M⁻(Γ,x))ⁿ`.
pub fn ordering_check(gamma: &Field, x: &Point, p: &SigmaParams, q: &QuadraturePlan) -> Result<OrderingCheck> {
    let w = moments(gamma, x, p.sigma, q)?.w;
    let e_sigma = hessian_prefactor(p.n, p.sigma) * w.min_eigenvalue();
    if e_sigma < -1e-8 * hessian_prefactor(p.n, p.sigma) * w.norm().max(1.0) {
        return Err(Error::Precondition(format!("E_sigma = {e_sigma} < 0 at {:?}", &x[..p.n])));
    }
    ordering_from_moments(&w, p)
}

#[derive(Clone, Debug, Serialize)]
pub struct Ring {
    pub k: usize,
    pub r_k: f64,
    pub nodes: usize,
    /// Fraction of ring nodes in `A_{x₀}`.
    pub good_fraction: f64,
    pub bad: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RingReport {
    pub rho0: f64,
    pub x0: [f64; 3],
    pub rings: Vec<Ring>,
    pub bad_indices: Vec<usize>,
    /// `2/((2-σ)λ)`, the bound on the bad count up to the constant `C_n`.
    pub bound: f64,
    /// `#bad · (2-σ) · λ`, to be compared with `2 C_n`.
    pub scaled_bad: f64,
}

/// Rings below this node count are not classified.
pub const MIN_RING_NODES: usize = 32;

/// Dyadic rings `r_{k+1} < |y| ≤ r_k`, `r_k = ρ₀ 2^{-k}`, around the minimum
/// of `Γ`, classified by the share of nodes where
/// `Γ(x₀+y) - Γ(x₀) ≤ f(x₀)|y|^σ`.
pub fn ring_analysis(gamma: &Field, f: &Field, x0: &Point, p: &SigmaParams) -> Result<RingReport> {
    let g = &gamma.grid;
    let node0 = g.lattice_node(x0).ok_or_else(|| Error::Precondition("x0 is not a lattice node".into()))?;
    let g0 = gamma.node_value(&node0);
    let i0 = g.index(&node0).ok_or_else(|| Error::Precondition("x0 outside the grid".into()))?;
    let f0 = f.values[i0];
    if !(g0 < 0.0) {
        return Err(Error::Degenerate(format!("gamma(x0) = {g0} is not negative")));
    }
    if !(f0 > 0.0) {
        return Err(Error::Degenerate(format!("f(x0) = {f0} is not positive")));
    }
    let sig = p.sigma;
    let rho0 = (-g0 / (2.0 * f0)).powf(1.0 / sig);
    let h = g.h;
    let n = g.n;
    let reach = (rho0 / h).ceil() as i64 + 1;
    let mut rings = Vec::new();
    let mut k = 0usize;
    loop {
        let r_k = rho0 * 0.5f64.powi(k as i32);
        let r_in = 0.5 * r_k;
        let lim = ((r_k / h).ceil() as i64 + 1).min(reach);
        let mut nodes = 0usize;
        let mut good = 0usize;
        let side = 2 * lim + 1;
        for idx in 0..(side as usize).pow(n as u32) {
            let mut rem = idx;
            let mut m = [0i64; 3];
            for c in m.iter_mut().take(n) {
                *c = (rem % side as usize) as i64 - lim;
                rem /= side as usize;
            }
            let y = [m[0] as f64 * h, m[1] as f64 * h, m[2] as f64 * h];
            let r = norm(&y);
            if r <= r_in || r > r_k {
                continue;
            }
            nodes += 1;
            let mut node = node0;
            for a in 0..n {
                node[a] += m[a];
            }
            if gamma.node_value(&node) - g0 <= f0 * r.powf(sig) {
                good += 1;
            }
        }
        if nodes < MIN_RING_NODES {
            break;
        }
        let frac = good as f64 / nodes as f64;
        rings.push(Ring { k, r_k, nodes, good_fraction: frac, bad: 1.0 - frac >= 0.5 });
        k += 1;
    }
    let bad_indices: Vec<usize> = rings.iter().filter(|r| r.bad).map(|r| r.k).collect();
    let scaled_bad = bad_indices.len() as f64 * (2.0 - sig) * p.lambda;
    Ok(RingReport { rho0, x0: g.node_point(&node0), rings, bad_indices, bound: 2.0 / ((2.0 - sig) * p.lambda), scaled_bad })
}

#[derive(Clone, Debug, Serialize)]
pub struct PointToMeasure {
    pub x0: [f64; 3],
    pub gamma_x0: f64,
    pub f_x0: f64,
    pub inf_p: f64,
    /// `(-Γ(x₀))^{2/σ} (2f(x₀))^{-(2-σ)/σ}`.
    pub rhs_without_c: f64,
    /// `(-inf P) / rhs_without_c`.
    pub empirical_c: Option<f64>,
    /// `‖P‖∞^{σ/2} ‖f‖∞^{(2-σ)/2}` and `‖Γ‖∞` divided by it.
    pub interpolation_rhs: f64,
    pub interpolation_ratio: Option<f64>,
}

/// Lower bound of `-inf P` by the depth of `Γ` at its minimum.
pub fn point_to_measure(gamma: &Field, pf: &PotentialField, f: &Field, p: &SigmaParams) -> Result<PointToMeasure> {
    point_to_measure_inf(gamma, pf.p.min(), f, p)
}

pub fn point_to_measure_inf(gamma: &Field, inf_p: f64, f: &Field, p: &SigmaParams) -> Result<PointToMeasure> {
    let g = &gamma.grid;
    let sig = p.sigma;
    if gamma.values.iter().all(|v| *v == 0.0) {
        return Ok(PointToMeasure { x0: [0.0; 3], gamma_x0: 0.0, f_x0: 0.0, inf_p, rhs_without_c: 0.0, empirical_c: None, interpolation_rhs: 0.0, interpolation_ratio: None });
    }
    let i0 = gamma.argmin();
    let g0 = gamma.values[i0];
    let f0 = f.values[i0];
    if !(g0 < 0.0) {
        return Err(Error::Degenerate(format!("gamma(x0) = {g0} is not negative")));
    }
    if !(f0 > 0.0) {
        return Err(Error::Degenerate(format!("f(x0) = {f0} is not positive")));
    }
    let rhs = (-g0).powf(2.0 / sig) * (2.0 * f0).powf(-(2.0 - sig) / sig);
    let irhs = inf_p.abs().powf(sig / 2.0) * f.sup_norm().powf((2.0 - sig) / 2.0);
    Ok(PointToMeasure {
        x0: g.point(i0),
        gamma_x0: g0,
        f_x0: f0,
        inf_p,
        rhs_without_c: rhs,
        empirical_c: (rhs > 0.0).then(|| -inf_p / rhs),
        interpolation_rhs: irhs,
        interpolation_ratio: (irhs > 0.0).then(|| -g0 / irhs),
    })
}

/// One inequality of the certificate chain, `lhs ≤ rhs + slack`.
#[derive(Clone, Debug, Serialize)]
pub struct ChainStep {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
    /// Worst node for nodewise steps.
    pub location: Option<[f64; 3]>,
}

impl ChainStep {
    fn new(name: &str, lhs: f64, rhs: f64, slack: f64, location: Option<[f64; 3]>) -> Self {
        ChainStep { name: name.into(), lhs, rhs, slack, pass: lhs <= rhs + slack, location }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct CertOptions {
    pub penalty: PenaltySpec,
    /// Penalization schedule; empty means `0.2 · 2^{-k}` down to `h^σ/4`.
    pub schedule: Vec<f64>,
    pub envelope: EnvelopeOptions,
    /// Slopes per axis of the discrete Aleksandrov map.
    pub slopes_per_axis: usize,
    /// Spacing of the sampled exterior of the `Γ` box inside `B_{R_σ}`.
    pub exterior_spacing: f64,
    /// Relative slack of the slope-measure versus determinant step, which
    /// compares two discretizations of the same integral.
    pub measure_tol: f64,
    /// Absolute slack of `M⁻u ≤ f` relative to `max(1, ‖f‖∞)`.
    pub residual_tol: f64,
}

impl Default for CertOptions {
    fn default() -> Self {
        CertOptions {
            penalty: PenaltySpec { epsilon: 0.2, beta0: 1.0, profile: Default::default() },
            schedule: Vec::new(),
            envelope: EnvelopeOptions::default(),
            slopes_per_axis: 241,
            exterior_spacing: 0.5,
            measure_tol: 0.25,
            residual_tol: 1e-4,
        }
    }
}

impl CertOptions {
    pub fn schedule_for(&self, h: f64, sigma: f64) -> Vec<f64> {
        if !self.schedule.is_empty() {
            return self.schedule.clone();
        }
        let target = 0.25 * h.powf(sigma);
        let mut s = Vec::new();
        let mut e = self.penalty.epsilon;
        while e > target || s.is_empty() {
            s.push(e);
            e *= 0.5;
        }
        s.push(e);
        s
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AbpCertificate {
    pub n: usize,
    pub sigma: f64,
    pub lambda: f64,
    pub h: f64,
    pub inf_u: f64,
    pub inf_gamma: f64,
    pub inf_p: f64,
    pub inf_p_boundary: f64,
    pub decay_radius: f64,
    /// `|K_u|`.
    pub contact_measure: f64,
    pub contact_nodes: usize,
    /// `‖f‖∞` and `‖f‖_n` on `K_u`.
    pub rhs_norms: (f64, f64),
    /// The same norms over all of `B₁`.
    pub rhs_norms_full: (f64, f64),
    /// `-inf u`.
    pub theorem_lhs: f64,
    /// `(1/λ) ‖f‖∞^{(2-σ)/2} ‖f‖_n^{σ/2}` on `K_u`.
    pub theorem_rhs_without_c: f64,
    pub theorem_rhs_full: f64,
    pub empirical_c: Option<f64>,
    pub empirical_c_full: Option<f64>,
    /// Slopes whose minimizer of `P - p·x` is interior, times the cell size.
    pub slope_measure: f64,
    /// `∫ det D²P` over the contact set of `P` with its convex envelope.
    pub det_integral: f64,
    pub p_contact_nodes: usize,
    /// Interior minimizers that fell outside the `Γ` box.
    pub exterior_contacts: usize,
    /// `(-inf P) / [(-Γ(x₀))^{2/σ}(2f(x₀))^{-(2-σ)/σ}]`.
    pub point_to_measure_c: Option<f64>,
    /// `λ (-inf Γ) / (∫_{K_u} D_σ(Γ))^{1/n}`.
    pub envelope_measure_c: Option<f64>,
    pub chain: Vec<ChainStep>,
    pub passed: bool,
    pub envelope_iterations: usize,
}

/// Certificate with default options.
pub fn abp_certificate(u: &Field, f: &Field, p: &SigmaParams, q: &QuadraturePlan) -> Result<AbpCertificate> {
    abp_certificate_with(u, f, p, q, &CertOptions::default())
}

fn lp_norms(f: &Field, mask: &[bool], n: usize) -> (f64, f64) {
    let cell = f.grid.h.powi(n as i32);
    let mut sup = 0.0f64;
    let mut acc = 0.0;
    for (i, m) in mask.iter().enumerate() {
        if *m {
            let v = f.values[i].abs();
            sup = sup.max(v);
            acc += v.powi(n as i32) * cell;
        }
    }
    (sup, acc.powf(1.0 / n as f64))
}

fn theorem_rhs(norms: (f64, f64), p: &SigmaParams) -> f64 {
    norms.0.powf((2.0 - p.sigma) / 2.0) * norms.1.powf(p.sigma / 2.0) / p.lambda
}

/// Runs envelope, potential, discrete Aleksandrov map and the estimate
/// chain for `M⁻u ≤ f` in `B₁`, `u = 0` outside.
pub fn abp_certificate_with(u: &Field, f: &Field, p: &SigmaParams, q: &QuadraturePlan, opts: &CertOptions) -> Result<AbpCertificate> {
    let g = u.grid;
    let n = g.n;
    let h = g.h;
    if f.grid != g {
        return Err(Error::Domain("u and f must share a grid".into()));
    }
    if f.values.iter().any(|v| *v < 0.0) {
        return Err(Error::Precondition("f must be nonnegative".into()));
    }
    let in_b1: Vec<bool> = (0..g.len()).map(|i| norm(&g.point(i)) < 1.0).collect();
    let schedule = opts.schedule_for(h, p.sigma);
    let env: EnvelopeResult = solve_obstacle_with(u, p, q, &opts.penalty, &schedule, &opts.envelope)?;
    let gamma = &env.gamma;
    let inf_u = (0..g.len()).filter(|&i| in_b1[i]).map(|i| u.values[i]).fold(0.0f64, f64::min);
    let inf_gamma = gamma.min().min(0.0);
    let contact = &env.contact;
    let contact_nodes = contact.iter().filter(|c| **c).count();
    let cell = h.powi(n as i32);
    let rhs_norms = lp_norms(f, contact, n);
    let rhs_norms_full = lp_norms(f, &in_b1, n);
    let theorem_lhs = -inf_u;
    let theorem_rhs_without_c = theorem_rhs(rhs_norms, p);
    let theorem_rhs_full = theorem_rhs(rhs_norms_full, p);
    let ratio = |a: f64, b: f64| if b > 0.0 { Some(a / b) } else if a <= 0.0 { None } else { Some(f64::INFINITY) };
    let r_sigma = decay_radius(p);
    let mut chain = Vec::new();
    chain.push(ChainStep::new("envelope_inf", (inf_u - inf_gamma).abs(), env.contact_tol, 1e-12, None));

    let mut cert = AbpCertificate {
        n,
        sigma: p.sigma,
        lambda: p.lambda,
        h,
        inf_u,
        inf_gamma,
        inf_p: 0.0,
        inf_p_boundary: 0.0,
        decay_radius: r_sigma,
        contact_measure: contact_nodes as f64 * cell,
        contact_nodes,
        rhs_norms,
        rhs_norms_full,
        theorem_lhs,
        theorem_rhs_without_c,
        theorem_rhs_full,
        empirical_c: ratio(theorem_lhs, theorem_rhs_without_c),
        empirical_c_full: ratio(theorem_lhs, theorem_rhs_full),
        slope_measure: 0.0,
        det_integral: 0.0,
        p_contact_nodes: 0,
        exterior_contacts: 0,
        point_to_measure_c: None,
        envelope_measure_c: None,
        chain: Vec::new(),
        passed: true,
        envelope_iterations: env.iterations,
    };
    if gamma.values.iter().all(|v| *v == 0.0) {
        cert.passed = chain.iter().all(|c| c.pass);
        cert.chain = chain;
        return Ok(cert);
    }

    // Potential on a lattice-aligned box covering B_{R_σ}.
    let pad: Vec<i64> = (0..n).map(|a| ((r_sigma + 2.0 * h - g.hi[a].min(-g.lo[a])) / h).ceil().max(0.0) as i64).collect();
    let lo: Vec<f64> = (0..n).map(|a| g.lo[a] - pad[a] as f64 * h).collect();
    let hi: Vec<f64> = (0..n).map(|a| g.hi[a] + pad[a] as f64 * h).collect();
    let big = Grid::new(&lo, &hi, h)?;
    let pot = potential_on(gamma, p, h, &big)?;
    let inf_p = pot.min();
    cert.inf_p = inf_p;

    // Point set for the Aleksandrov map.
    let stride = ((opts.exterior_spacing / h).round() as i64).max(1);
    #[derive(Clone, Copy, PartialEq)]
    enum Kind {
        Inner(usize),
        Exterior,
        Boundary,
    }
    let mut pts: Vec<([f64; 3], f64, Kind)> = Vec::new();
    let mut m_boundary = f64::INFINITY;
    for i in 0..big.len() {
        let x = big.point(i);
        let r = norm(&x);
        if r > r_sigma {
            continue;
        }
        let node = big.node(i);
        let mut fine = node;
        for a in 0..n {
            fine[a] -= pad[a];
        }
        if let Some(j) = g.index(&fine) {
            pts.push((x, pot.values[i], Kind::Inner(j)));
        } else if r > r_sigma - h {
            pts.push((x, pot.values[i], Kind::Boundary));
            m_boundary = m_boundary.min(pot.values[i]);
        } else if (0..n).all(|a| node[a] % stride == 0) {
            pts.push((x, pot.values[i], Kind::Exterior));
        }
    }
    let m = pts.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
    cert.inf_p_boundary = m_boundary;
    chain.push(ChainStep::new("decay", -m_boundary, 0.5 * (-m), 1e-12 * m.abs(), None));

    // Slope grid covering the gradients of P in the Γ box and the ball
    // radius of the Aleksandrov argument.
    let r_star = (m_boundary - m) / (2.0 * r_sigma);
    let mut pmax = 0.0f64;
    for i in 0..big.len() {
        let node = big.node(i);
        let inner = (0..n).all(|a| node[a] >= pad[a] && node[a] < pad[a] + g.dims[a] as i64);
        if !inner {
            continue;
        }
        for a in 0..n {
            let mut pn = node;
            let mut mn = node;
            pn[a] += 1;
            mn[a] -= 1;
            if let (Some(ip), Some(im)) = (big.index(&pn), big.index(&mn)) {
                pmax = pmax.max(((pot.values[ip] - pot.values[im]) / (2.0 * h)).abs());
            }
        }
    }
    let pmax = pmax.max(1.05 * r_star).max(f64::MIN_POSITIVE) * 1.05;
    let per = opts.slopes_per_axis.max(3) | 1;
    let dp = 2.0 * pmax / (per - 1) as f64;
    let total_slopes = per.pow(n as u32);
    let argmins: Vec<(usize, f64)> = (0..total_slopes)
        .into_par_iter()
        .map(|k| {
            let mut rem = k;
            let mut s = [0.0; 3];
            for a in (0..n).rev() {
                s[a] = -pmax + (rem % per) as f64 * dp;
                rem /= per;
            }
            let mut best = (usize::MAX, f64::INFINITY);
            for (j, (x, v, _)) in pts.iter().enumerate() {
                let val = v - (s[0] * x[0] + s[1] * x[1] + s[2] * x[2]);
                if val < best.1 {
                    best = (j, val);
                }
            }
            (best.0, norm(&s))
        })
        .collect();
    let mut interior_slopes = 0usize;
    let mut min_boundary_slope = f64::INFINITY;
    let mut p_contact = vec![false; g.len()];
    for (j, pn) in &argmins {
        match pts[*j].2 {
            Kind::Boundary => min_boundary_slope = min_boundary_slope.min(*pn),
            Kind::Exterior => {
                interior_slopes += 1;
                cert.exterior_contacts += 1;
            }
            Kind::Inner(i) => {
                interior_slopes += 1;
                p_contact[i] = true;
            }
        }
    }
    let slope_measure = interior_slopes as f64 * dp.powi(n as i32);
    cert.slope_measure = slope_measure;
    let lattice_slack = (n as f64).sqrt() * dp;
    chain.push(ChainStep::new("aleksandrov_ball", r_star, min_boundary_slope, lattice_slack, None));
    let unit = ball_volume(n);
    let alek_rhs = 2.0 * r_sigma * (slope_measure / unit).powf(1.0 / n as f64);
    chain.push(ChainStep::new("aleksandrov_measure", m_boundary - m, alek_rhs, r_sigma * lattice_slack, None));

    // Moments of Γ and u on their grid.
    let sweep = PucciSweep::new(&g, p, q)?;
    let w_gamma = sweep.moments(gamma)?;
    let u_zero = Field { grid: g, values: u.values.clone(), exterior: Exterior::Zero };
    let w_u = sweep.moments(&u_zero)?;
    let pucci = |w: &Sym| -> f64 {
        let e = w.eigenvalues();
        (2.0 - p.sigma) * trace_min(&e, p.lambda, p.big_lambda).map(|t| t.0).unwrap_or(f64::NAN)
    };
    let c_ord = ordering_constant(n, p.sigma);
    let mut det_integral = 0.0;
    let mut det_vals = vec![0.0; g.len()];
    let mut worst_b = (f64::NEG_INFINITY, None);
    let mut pucci_gamma_int = 0.0;
    for i in 0..g.len() {
        if !p_contact[i] {
            continue;
        }
        let d2p = potential_hessian_from_moments(&w_gamma[i], n, p.sigma);
        let (det, _) = gated_det(&d2p);
        det_vals[i] = det;
        det_integral += det * cell;
        let mg = pucci(&w_gamma[i]).max(0.0);
        let bound = (c_ord * mg / p.lambda).powi(n as i32);
        pucci_gamma_int += bound * cell;
        let excess = det.powf(1.0 / n as f64) - c_ord * mg / p.lambda;
        if excess > worst_b.0 {
            worst_b = (excess, Some(g.point(i)));
        }
    }
    cert.det_integral = det_integral;
    cert.p_contact_nodes = p_contact.iter().filter(|c| **c).count();
    chain.push(ChainStep::new("slope_measure_vs_det", slope_measure, det_integral * (1.0 + opts.measure_tol), 0.0, None));
    let det_scale = det_vals.iter().fold(0.0f64, |a, b| a.max(*b));
    chain.push(ChainStep::new("det_vs_pucci_gamma_nodewise", worst_b.0.max(0.0), 0.0, 1e-9 * det_scale.powf(1.0 / n as f64).max(1e-300), worst_b.1));

    // Contact inclusion of P's contact nodes with positive determinant in K_u
    // dilated by one cell.
    let mut outside = 0usize;
    let mut outside_loc = None;
    for i in 0..g.len() {
        if !p_contact[i] || det_vals[i] <= 1e-8 * det_scale {
            continue;
        }
        let node = g.node(i);
        let mut near = false;
        let side = 3usize.pow(n as u32);
        for s in 0..side {
            let mut rem = s;
            let mut nb = node;
            for a in 0..n {
                nb[a] += (rem % 3) as i64 - 1;
                rem /= 3;
            }
            if let Some(j) = g.index(&nb) {
                near |= contact[j];
            }
        }
        if !near {
            outside += 1;
            outside_loc = Some(g.point(i));
        }
    }
    chain.push(ChainStep::new("p_contact_in_contact_set", outside as f64, 0.0, 0.0, outside_loc));

    // Γ ≤ u with a gap g at a contact node, so δΓ ≤ δu + 2g and the Pucci
    // values differ by at most the sweep's Lipschitz constant times g.
    let lip = sweep.lipschitz();
    let f_scale = f.sup_norm().max(1.0);
    let mut worst_c = (f64::NEG_INFINITY, None);
    let mut worst_d = (f64::NEG_INFINITY, None);
    let mut pucci_u_int = 0.0;
    let mut pucci_gamma_k = 0.0;
    let mut f_int = 0.0;
    let mut d_sigma_int = 0.0;
    for i in 0..g.len() {
        if !contact[i] {
            continue;
        }
        let mg = pucci(&w_gamma[i]);
        let mu = pucci(&w_u[i]);
        let gap = (u.values[i] - gamma.values[i]).max(0.0);
        let excess = mg - mu - lip * gap;
        if excess > worst_c.0 {
            worst_c = (excess, Some(g.point(i)));
        }
        pucci_gamma_k += (c_ord * mg.max(0.0) / p.lambda).powi(n as i32) * cell;
        if mu - f.values[i] > worst_d.0 {
            worst_d = (mu - f.values[i], Some(g.point(i)));
        }
        pucci_u_int += (c_ord * mu.max(0.0) / p.lambda).powi(n as i32) * cell;
        f_int += (c_ord * f.values[i] / p.lambda).powi(n as i32) * cell;
        let (d, gated) = gated_det(&potential_hessian_from_moments(&w_gamma[i], n, p.sigma));
        if gated {
            d_sigma_int += d * cell;
        }
    }
    if contact_nodes > 0 {
        chain.push(ChainStep::new("pucci_gamma_vs_u_nodewise", worst_c.0.max(0.0), 0.0, 1e-9 * f_scale, worst_c.1));
        chain.push(ChainStep::new("pucci_u_vs_f_nodewise", worst_d.0.max(0.0), 0.0, opts.residual_tol * f_scale, worst_d.1));
    }
    chain.push(ChainStep::new("integral_det_vs_pucci_gamma", det_integral, pucci_gamma_int, 1e-9 * pucci_gamma_int, None));
    chain.push(ChainStep::new("integral_pucci_gamma_contact_sets", pucci_gamma_int, pucci_gamma_k, 1e-9 * pucci_gamma_k, None));
    let gap_term: f64 = (0..g.len())
        .filter(|&i| contact[i])
        .map(|i| {
            let mg = pucci(&w_gamma[i]).max(0.0);
            let mu = pucci(&w_u[i]).max(0.0);
            let bump = (mg.min(mu + lip * (u.values[i] - gamma.values[i]).max(0.0)) - mu).max(0.0);
            ((c_ord * (mu + bump) / p.lambda).powi(n as i32) - (c_ord * mu / p.lambda).powi(n as i32)) * cell
        })
        .sum();
    chain.push(ChainStep::new("integral_pucci_gamma_vs_u", pucci_gamma_k, pucci_u_int, gap_term + 1e-9 * pucci_u_int, None));
    chain.push(ChainStep::new("integral_pucci_u_vs_f", pucci_u_int, f_int, n as f64 * opts.residual_tol * f_int.max(1e-300), None));
    // The assembled estimate for P with every explicit constant.
    let assembled = 2.0 * r_sigma * ((1.0 + opts.measure_tol) * f_int / unit).powf(1.0 / n as f64);
    chain.push(ChainStep::new("p_estimate", m_boundary - m, assembled, r_sigma * lattice_slack, None));

    let ptm = point_to_measure_inf(gamma, m, f, p);
    cert.point_to_measure_c = ptm.ok().and_then(|r| r.empirical_c);
    cert.envelope_measure_c = (d_sigma_int > 0.0).then(|| -inf_gamma * p.lambda / d_sigma_int.powf(1.0 / n as f64));
    cert.passed = chain.iter().all(|c| c.pass);
    cert.chain = chain;
    Ok(cert)
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    /// `sup_D (u - v)`.
    pub sup_diff: f64,
    /// `sup` of `u - v` outside `D`.
    pub sup_exterior: f64,
    pub diam: f64,
    /// `‖(f-g)⁻‖∞` and `‖(f-g)⁻‖_n` over `D`.
    pub norms: (f64, f64),
    /// `(1/λ) diam(D) ‖(f-g)⁻‖∞^{(2-σ)/2} ‖(f-g)⁻‖_n^{σ/2}`.
    pub rhs_without_c: f64,
    /// `(sup_diff - sup_exterior)⁺ / rhs_without_c`; zero when the left side
    /// vanishes, infinite when only the right side does.
    pub empirical_c: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Comparison for `M⁻u = f`, `M⁻v = g` in `B_R`: `sup(u - v)` is bounded
/// by the exterior data plus a multiple of the negative part of `f - g`.
pub fn comparison_check(u: &Field, v: &Field, f: &Field, g: &Field, radius: f64, p: &SigmaParams, tol: f64) -> Result<ComparisonReport> {
    let grid = &u.grid;
    if v.grid != *grid || f.grid != *grid || g.grid != *grid {
        return Err(Error::Domain("comparison fields must share a grid".into()));
    }
    let n = grid.n;
    let inside: Vec<bool> = (0..grid.len()).map(|i| norm(&grid.point(i)) < radius).collect();
    let mut sup_diff = f64::NEG_INFINITY;
    let mut sup_ext = f64::NEG_INFINITY;
    for i in 0..grid.len() {
        let d = u.values[i] - v.values[i];
        if inside[i] {
            sup_diff = sup_diff.max(d);
        } else {
            sup_ext = sup_ext.max(d);
        }
    }
    let neg = f.with_values(f.values.iter().zip(&g.values).map(|(a, b)| (b - a).max(0.0)).collect());
    let norms = lp_norms(&neg, &inside, n);
    let diam = 2.0 * radius;
    let rhs = diam * theorem_rhs(norms, p);
    let excess = (sup_diff - sup_ext.max(0.0)).max(0.0);
    let empirical_c = if excess <= tol { 0.0 } else if rhs > 0.0 { excess / rhs } else { f64::INFINITY };
    Ok(ComparisonReport { sup_diff, sup_exterior: sup_ext, diam, norms, rhs_without_c: rhs, empirical_c, tol, pass: empirical_c.is_finite() })
}

/// `∫_{S^{n-1}} θ_i² θ_j² dS` with the module's angular rule.
pub fn spherical_moment(i: usize, j: usize, n: usize, nodes: usize) -> f64 {
    sphere_rule(n, nodes).iter().map(|(t, w)| w * t[i] * t[i] * t[j] * t[j]).sum()
}

/// `∫_{S^{n-1}} θ_i² dS` with the module's angular rule.
pub fn spherical_moment2(i: usize, n: usize, nodes: usize) -> f64 {
    sphere_rule(n, nodes).iter().map(|(t, w)| w * t[i] * t[i]).sum()
}

/// Constant of the limit of the linear operators,
/// `(2-σ) Tr(M W) → c_n Tr((M + Tr(M)/2 Id) D²v)`, `c_n = 2ω_n/(n(n+2))`.
pub fn limit_constant(n: usize) -> f64 {
    2.0 * sphere_area(n) / (n as f64 * (n as f64 + 2.0))
}

/// Classifier of `σ → 2` limits: `B - Tr(B)/(n+2) Id ⪰ 0`.
pub fn representable_limit(b: &Sym) -> bool {
    let n = b.n as f64;
    let shifted = b.add_scaled_identity(-b.trace() / (n + 2.0));
    shifted.min_eigenvalue() >= -1e-12 * b.norm().max(1.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitRow {
    pub sigma: f64,
    /// `‖h_σ - (D²v + ½Δv Id)‖ / ‖D²v + ½Δv Id‖`.
    pub h_err: f64,
    /// Distance to the form `D²v + Δv/(n+2) Id`, for reference.
    pub h_err_alt: f64,
    /// `‖D²P - D²v‖ / ‖D²v‖`.
    pub d2p_err: f64,
    /// `|L_M - c_n Tr((M + Tr M/2 Id) D²v)| / |limit|` for the probe `M`.
    pub l_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitReport {
    pub rows: Vec<LimitRow>,
    pub limit_constant: f64,
    /// Last error below the first for each column.
    pub decreasing: bool,
}

/// Compares the fractional Hessian, the potential Hessian and a linear
/// operator with their second-order limits at `x`, given the exact Hessian.
pub fn sigma2_limit_suite(v: &Field, x: &Point, hessian: &Sym, sigmas: &[f64], probe: &Sym, q: &QuadraturePlan) -> Result<LimitReport> {
    let n = v.grid.n;
    let lap = hessian.trace();
    let target = hessian.add_scaled_identity(0.5 * lap);
    let alt = hessian.add_scaled_identity(lap / (n as f64 + 2.0));
    let cn = limit_constant(n);
    let l_limit = cn * probe.add_scaled_identity(0.5 * probe.trace()).dot(hessian);
    let rel = |a: &Sym, b: &Sym| a.sub(b).norm() / b.norm().max(f64::MIN_POSITIVE);
    let mut rows = Vec::new();
    for &s in sigmas {
        let p = SigmaParams::new(n, s, 1.0, 1.0)?;
        let hs = frac_hessian(v, x, &p, q)?;
        let d2p = potential_hessian(v, x, &p, q)?;
        let w = moments(v, x, s, q)?.w;
        let l = (2.0 - s) * probe.dot(&w);
        rows.push(LimitRow {
            sigma: s,
            h_err: rel(&hs, &target),
            h_err_alt: rel(&hs, &alt),
            d2p_err: rel(&d2p, hessian),
            l_err: (l - l_limit).abs() / l_limit.abs().max(f64::MIN_POSITIVE),
        });
    }
    let decreasing = rows.len() < 2 || {
        let (a, b) = (&rows[0], &rows[rows.len() - 1]);
        b.h_err < a.h_err && b.d2p_err < a.d2p_err && b.l_err < a.l_err
    };
    Ok(LimitReport { rows, limit_constant: cn, decreasing })
}

/// Hessian of `f` at `x` by fourth-order central differences with step `d`;
/// mixed derivatives come from the diagonal directions `e_i ± e_j`.
pub fn fd_hessian(f: impl Fn(&Point) -> f64, x: &Point, n: usize, d: f64) -> Sym {
    let at = |da: [f64; 3]| f(&[x[0] + da[0], x[1] + da[1], x[2] + da[2]]);
    let mut hs = Sym::zeros(n);
    for i in 0..n {
        for j in i..n {
            let mut val = 0.0;
            for (w, s) in [(-1.0, 2.0), (16.0, 1.0)] {
                let mut pp = [0.0; 3];
                let mut pm = [0.0; 3];
                pp[i] += s * d;
                pp[j] += s * d;
                pm[i] += s * d;
                pm[j] -= s * d;
                let mp = pm.map(|c| -c);
                let mm = pp.map(|c| -c);
                val += w * (at(pp) - at(pm) - at(mp) + at(mm));
            }
            let v = val / (48.0 * d * d);
            hs.m[i][j] = v;
            hs.m[j][i] = v;
        }
    }
    hs
}

/// A compactly supported smooth test field with a point where its Hessian
/// is known to high accuracy.
#[derive(Clone)]
pub struct SmoothCase {
    pub name: &'static str,
    pub f: fn(&Point) -> f64,
    pub point: Point,
}

impl SmoothCase {
    pub fn field(&self, grid: &Grid) -> Field {
        Field::from_fn(*grid, Exterior::Zero, self.f)
    }

    pub fn hessian(&self, n: usize) -> Sym {
        fd_hessian(self.f, &self.point, n, 1e-3)
    }
}

/// `C^∞` cutoff equal to 1 on `B_a` and 0 outside `B_b`.
fn cutoff(r: f64, a: f64, b: f64) -> f64 {
    let bump = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let t = (b - r) / (b - a);
    bump(t) / (bump(t) + bump(1.0 - t))
}

/// Smooth fields for the `σ → 2` suite, in two dimensions.
pub fn smooth_catalogue() -> Vec<SmoothCase> {
    fn quadratic(x: &Point) -> f64 {
        (x[0] * x[0] + 2.0 * x[1] * x[1] + 0.5 * x[0] * x[1]) * cutoff(norm(x), 1.0, 2.0)
    }
    fn gaussian(x: &Point) -> f64 {
        let r2 = x[0] * x[0] + x[1] * x[1];
        (-2.0 * r2).exp() * cutoff(r2.sqrt(), 2.0, 2.9)
    }
    fn pit(x: &Point) -> f64 {
        let r2 = (x[0] * x[0] + x[1] * x[1]) / 1.5;
        if r2 < 1.0 {
            -(1.0 - r2).powi(4) * (1.0 + 0.3 * x[0])
        } else {
            0.0
        }
    }
    fn wave(x: &Point) -> f64 {
        (1.5 * x[0] - x[1]).cos() * cutoff(norm(x), 0.8, 2.4)
    }
    vec![
        SmoothCase { name: "cutoff_quadratic", f: quadratic, point: [0.0; 3] },
        SmoothCase { name: "gaussian", f: gaussian, point: [0.3, -0.2, 0.0] },
        SmoothCase { name: "tilted_pit", f: pit, point: [0.2, 0.3, 0.0] },
        SmoothCase { name: "cutoff_wave", f: wave, point: [0.1, 0.4, 0.0] },
    ]
}

#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeLimitRow {
    pub sigma: f64,
    /// `sup |Γ_σ - Γ₂|` over `B₃`.
    pub gap: f64,
    pub contact_nodes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeLimitReport {
    pub rows: Vec<EnvelopeLimitRow>,
    /// Largest violation of `CE(ψ) - tol ≤ Γ_σ ≤ ψ + tol` at the last σ.
    pub sandwich_violation: f64,
    pub tol: f64,
    pub limit_contact_nodes: usize,
}

/// Envelopes along a σ list against the obstacle problem for
/// `λ₁(D²v) + ½Δv`, with the convex-envelope sandwich at the last σ.
pub fn envelope_sigma2_study(u: &Field, sigmas: &[f64], p: &SigmaParams, q: &QuadraturePlan, opts: &CertOptions) -> Result<EnvelopeLimitReport> {
    let g = u.grid;
    let limit = solve_limit_obstacle(u, &LimitOptions::default())?;
    let b3: Vec<bool> = (0..g.len()).map(|i| norm(&g.point(i)) < 3.0).collect();
    let psi: Vec<f64> = (0..g.len()).map(|i| if norm(&g.point(i)) < 1.0 { u.values[i].min(0.0) } else { 0.0 }).collect();
    let limit_contact_nodes = (0..g.len()).filter(|&i| norm(&g.point(i)) < 1.0 && (limit.values[i] - psi[i]).abs() <= 1e-6).count();
    let mut rows = Vec::new();
    let mut last: Option<Field> = None;
    let mut tol = 0.0;
    for &s in sigmas {
        let ps = SigmaParams { sigma: s, ..*p };
        tol = 10.0 * g.h.powf(s);
        let sched = if opts.schedule.is_empty() { geometric_schedule(opts.penalty.epsilon, 8) } else { opts.schedule.clone() };
        let env = solve_obstacle_with(u, &ps, q, &opts.penalty, &sched, &opts.envelope)?;
        let gap = (0..g.len()).filter(|&i| b3[i]).map(|i| (env.gamma.values[i] - limit.values[i]).abs()).fold(0.0, f64::max);
        rows.push(EnvelopeLimitRow { sigma: s, gap, contact_nodes: env.contact.iter().filter(|c| **c).count() });
        last = Some(env.gamma);
    }
    let mut sandwich_violation = 0.0f64;
    if let Some(gamma) = last {
        let ce = convex_envelope(&u.with_values(psi.clone()), 3.0);
        for i in 0..g.len() {
            if b3[i] {
                sandwich_violation = sandwich_violation.max(ce.values[i] - gamma.values[i]).max(gamma.values[i] - psi[i]);
            }
        }
    }
    Ok(EnvelopeLimitReport { rows, sandwich_violation, tol, limit_contact_nodes })
}

/// Potential of `Γ` with the default kernel radius, re-exported for
/// pipelines that certify step by step.
pub fn potential_of(gamma: &Field, p: &SigmaParams) -> Result<PotentialField> {
    riesz_potential(gamma, p, None)
}

/// Right-hand sides used by the certificate studies.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RhsShape {
    /// `height (1 - |x-c|²/r²)²` inside `B_r(c)`.
    Bump { center: [f64; 3], radius: f64, height: f64 },
    /// Indicator of `B_r(c)` averaged over each grid cell.
    Disc { center: [f64; 3], radius: f64 },
    /// `height (1 - (x₁/a)² - (x₂/b)²)₊²`.
    Ellipse { axes: [f64; 2], height: f64 },
    /// `height (1 - ((|x| - m)/w)²)²` for `||x| - m| < w`, with `m` and `w`
    /// the mid radius and half width of the annulus.
    Annulus { inner: f64, outer: f64, height: f64 },
    Sum { parts: Vec<RhsShape> },
}

/// Subsamples per axis when averaging an indicator over a cell.
const CELL_SUBSAMPLES: usize = 8;

impl RhsShape {
    pub fn field(&self, grid: &Grid) -> Field {
        let vals = (0..grid.len()).map(|i| self.node_value(grid, &grid.point(i))).collect();
        Field { grid: *grid, values: vals, exterior: Exterior::Zero }
    }

    fn node_value(&self, grid: &Grid, x: &Point) -> f64 {
        let n = grid.n;
        match self {
            RhsShape::Bump { center, radius, height } => {
                let r2: f64 = (0..n).map(|a| (x[a] - center[a]).powi(2)).sum::<f64>() / (radius * radius);
                if r2 < 1.0 { height * (1.0 - r2).powi(2) } else { 0.0 }
            }
            RhsShape::Ellipse { axes, height } => {
                let r2 = (x[0] / axes[0]).powi(2) + if n > 1 { (x[1] / axes[1]).powi(2) } else { 0.0 };
                if r2 < 1.0 { height * (1.0 - r2).powi(2) } else { 0.0 }
            }
            RhsShape::Disc { center, radius } => {
                let h = grid.h;
                let dist = (0..n).map(|a| (x[a] - center[a]).powi(2)).sum::<f64>().sqrt();
                let half_diag = 0.5 * h * (n as f64).sqrt();
                if dist + half_diag <= *radius {
                    return 1.0;
                }
                if dist - half_diag >= *radius {
                    return 0.0;
                }
                let k = CELL_SUBSAMPLES;
                let total = k.pow(n as u32);
                let mut hits = 0usize;
                for s in 0..total {
                    let mut rem = s;
                    let mut r2 = 0.0;
                    for a in 0..n {
                        let off = ((rem % k) as f64 + 0.5) / k as f64 - 0.5;
                        rem /= k;
                        r2 += (x[a] + off * h - center[a]).powi(2);
                    }
                    if r2 < radius * radius {
                        hits += 1;
                    }
                }
                hits as f64 / total as f64
            }
            RhsShape::Annulus { inner, outer, height } => {
                let mid = 0.5 * (inner + outer);
                let half = 0.5 * (outer - inner);
                let t = (norm(x) - mid) / half;
                if t.abs() < 1.0 { height * (1.0 - t * t).powi(2) } else { 0.0 }
            }
            RhsShape::Sum { parts } => parts.iter().map(|p| p.node_value(grid, x)).sum(),
        }
    }
}

/// A Dirichlet problem `M⁻u = f` in `B₁` used for certificates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CatalogueProblem {
    pub name: String,
    pub params: SigmaParams,
    pub rhs: RhsShape,
}

/// The built-in problem catalogue in two dimensions.
pub fn catalogue() -> Vec<CatalogueProblem> {
    let c0 = [0.0; 3];
    let bump = |c: [f64; 3], r: f64, hgt: f64| RhsShape::Bump { center: c, radius: r, height: hgt };
    let mk = |name: &str, sigma: f64, lambda: f64, big: f64, rhs: RhsShape| CatalogueProblem {
        name: name.into(),
        params: SigmaParams { n: 2, sigma, lambda, big_lambda: big },
        rhs,
    };
    vec![
        mk("centered_bump_s050", 0.5, 1.0, 2.0, bump(c0, 0.7, 1.0)),
        mk("centered_bump_s100", 1.0, 1.0, 2.0, bump(c0, 0.7, 1.0)),
        mk("centered_bump_s150", 1.5, 1.0, 2.0, bump(c0, 0.7, 1.0)),
        mk("offset_bump_s100", 1.0, 0.5, 1.5, bump([0.3, -0.2, 0.0], 0.5, 2.0)),
        mk("two_bumps_s050", 0.5, 1.0, 3.0, RhsShape::Sum { parts: vec![bump([-0.4, 0.0, 0.0], 0.35, 1.0), bump([0.4, 0.1, 0.0], 0.35, 1.5)] }),
        mk("ellipse_s150", 1.5, 1.0, 2.0, RhsShape::Ellipse { axes: [0.8, 0.4], height: 1.0 }),
    ]
}

/// Problems for the ring count. Rings only exist once `ρ₀` exceeds a few
/// grid cells, which needs small `λ`; with `λ` of order one every problem
/// above has `ρ₀` below the grid scale.
pub fn ring_catalogue() -> Vec<CatalogueProblem> {
    let mk = |name: &str, sigma: f64, lambda: f64| CatalogueProblem {
        name: name.into(),
        params: SigmaParams { n: 2, sigma, lambda, big_lambda: 1.0 },
        rhs: RhsShape::Bump { center: [0.0; 3], radius: 0.7, height: 1.0 },
    };
    vec![
        mk("ring_s050_l020", 0.5, 0.02),
        mk("ring_s100_l030", 1.0, 0.03),
        mk("ring_s100_l050", 1.0, 0.05),
        mk("ring_s150_l050", 1.5, 0.05),
        mk("ring_s150_l080", 1.5, 0.08),
    ]
}

#[derive(Clone, Debug, Serialize)]
pub struct RingStudyEntry {
    pub problem: String,
    pub sigma: f64,
    pub lambda: f64,
    pub report: RingReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct RingStudy {
    pub h: f64,
    pub entries: Vec<RingStudyEntry>,
    /// Largest `(#bad)·(2−σ)·λ` over the problems.
    pub fitted_constant: f64,
}

/// Solves each problem, builds its envelope and counts bad rings around
/// the envelope minimum.
pub fn ring_study(grid: &Grid, q: &QuadraturePlan, problems: &[CatalogueProblem], dirichlet: &crate::envelope::DirichletOptions, opts: &CertOptions) -> Result<RingStudy> {
    let mut entries = Vec::with_capacity(problems.len());
    for prob in problems {
        let (u, f) = solve_problem(prob, grid, q, dirichlet)?;
        let p = &prob.params;
        let env = crate::envelope::solve_obstacle_with(&u, p, q, &opts.penalty, &opts.schedule_for(grid.h, p.sigma), &opts.envelope)?;
        let x0 = grid.point(env.gamma.argmin());
        let report = ring_analysis(&env.gamma, &f, &x0, p)?;
        entries.push(RingStudyEntry { problem: prob.name.clone(), sigma: p.sigma, lambda: p.lambda, report });
    }
    let fitted_constant = entries.iter().map(|e| e.report.scaled_bad).fold(0.0, f64::max);
    Ok(RingStudy { h: grid.h, entries, fitted_constant })
}

/// Solves a catalogued problem on `grid`.
pub fn solve_problem(problem: &CatalogueProblem, grid: &Grid, q: &QuadraturePlan, opts: &crate::envelope::DirichletOptions) -> Result<(Field, Field)> {
    let f = problem.rhs.field(grid);
    let u = crate::envelope::solve_dirichlet_multilevel(&f, &problem.params, &q.spec, opts)?;
    Ok((u, f))
}

#[derive(Clone, Debug, Serialize)]
pub struct ShrinkRow {
    pub k: usize,
    pub radius: f64,
    pub sup_u: f64,
    pub f_sup: f64,
    /// `‖f_k‖_n` over the whole support.
    pub f_ln: f64,
    /// Right-hand side of the estimate without constant, norms on `K_u`.
    pub rhs_contact: f64,
    /// The same with norms over the whole support.
    pub rhs_full: f64,
    /// `(4^{-k}|B₁|)^{σ/(2n)} / λ`, the value for an exact indicator.
    pub predicted: f64,
    /// `|rhs_full / predicted - 1|`.
    pub deviation: f64,
    pub contact_nodes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ShrinkReport {
    pub rows: Vec<ShrinkRow>,
    pub sup_strictly_decreasing: bool,
    pub max_deviation: f64,
}

/// Shrinking discs `f_k = 1_{B(0, 2^{-k})}`, `k = 0..=levels`.
pub fn shrink_study(grid: &Grid, p: &SigmaParams, q: &QuadraturePlan, levels: usize, opts: &CertOptions) -> Result<ShrinkReport> {
    let n = grid.n;
    let dopts = crate::envelope::DirichletOptions { residual_tol: 1e-5, ..Default::default() };
    let mut rows: Vec<ShrinkRow> = Vec::new();
    let support: Vec<bool> = vec![true; grid.len()];
    for k in 0..=levels {
        let radius = 0.5f64.powi(k as i32);
        // A disc of radius one would touch the Dirichlet boundary; shrink it
        // by half a cell so the support stays inside B₁.
        let r = if k == 0 { 1.0 - 0.5 * grid.h } else { radius };
        let f = RhsShape::Disc { center: [0.0; 3], radius: r }.field(grid);
        let u = crate::envelope::solve_dirichlet_multilevel(&f, p, &q.spec, &dopts)?;
        let sched = opts.schedule_for(grid.h, p.sigma);
        let env = solve_obstacle_with(&u, p, q, &opts.penalty, &sched, &opts.envelope)?;
        let norms_k = lp_norms(&f, &env.contact, n);
        let norms_full = lp_norms(&f, &support, n);
        let rhs_full = theorem_rhs(norms_full, p);
        let predicted = (ball_volume(n) * 4f64.powi(-(k as i32))).powf(p.sigma / (2.0 * n as f64)) / p.lambda;
        rows.push(ShrinkRow {
            k,
            radius,
            sup_u: u.sup_norm(),
            f_sup: norms_full.0,
            f_ln: norms_full.1,
            rhs_contact: theorem_rhs(norms_k, p),
            rhs_full,
            predicted,
            deviation: (rhs_full / predicted - 1.0).abs(),
            contact_nodes: env.contact.iter().filter(|c| **c).count(),
        });
    }
    let sup_strictly_decreasing = rows.windows(2).all(|w| w[1].sup_u < w[0].sup_u);
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    Ok(ShrinkReport { rows, sup_strictly_decreasing, max_deviation })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_inf_on_diagonal() {
        let mut w = Sym::zeros(2);
        w.m[0][0] = 1.0;
        w.m[1][1] = 4.0;
        let d = det_inf_detail(&w).unwrap();
        assert!((d.direct - 4.0).abs() < 1e-12);
        assert!((d.dual - 4.0).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_has_zero_dual() {
        let mut w = Sym::zeros(2);
        w.m[0][0] = 1.0;
        assert_eq!(det_inf_formula(&w).unwrap(), 0.0);
    }

    #[test]
    fn classifier_examples() {
        assert!(representable_limit(&Sym::identity(2)));
        let mut b = Sym::zeros(2);
        b.m[0][0] = 1.0;
        assert!(!representable_limit(&b));
    }
}
