//! Pointwise nonlocal operators.
//!
//! Every matrix-valued operator here is a function of the moment matrix
//! `W(x) = ∫ δv(x,y) y⊗y / |y|^{n+σ+2} dy` and its trace
//! `S(x) = ∫ δv(x,y) / |y|^{n+σ} dy`. [`moments`] computes both in one
//! pass; the operators are thin wrappers.
//!
//! Sign conventions: all scalar σ-order operators are normalized so that a
//! plane wave `cos⟨ξ,x⟩` is an eigenfunction with eigenvalue `-|ξ|^σ`.

use crate::base::{
    fraclap_constant, EllipticMatrix, Field, Interp, Node,
    Point, SigmaParams,
};
use crate::error::{Error, Result};
use crate::linalg::Sym;
use crate::quadrature::{near_directions, NearOrder, QuadraturePlan};
use serde::{Deserialize, Serialize};

/// An operator value split by integration region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorValue {
    pub value: f64,
    pub near_field: f64,
    pub far_field: f64,
    pub tail: f64,
    pub est_error: f64,
}

impl OperatorValue {
    fn from_parts(near: f64, far: f64, tail: f64, est: f64) -> Self {
        OperatorValue { value: near + far + tail, near_field: near, far_field: far, tail, est_error: est }
    }

    fn scaled(&self, c: f64) -> Self {
        OperatorValue {
            value: c * self.value,
            near_field: c * self.near_field,
            far_field: c * self.far_field,
            tail: c * self.tail,
            est_error: c.abs() * self.est_error,
        }
    }
}

/// Moment matrix `W` and scalar moment `S` at a node, split by region.
#[derive(Clone, Debug)]
pub struct Moments {
    pub w: Sym,
    pub s: f64,
    pub near_w: Sym,
    pub near_s: f64,
    pub far_w: Sym,
    pub far_s: f64,
    pub tail_w: Sym,
    pub tail_s: f64,
    /// Error estimate for `W` in Frobenius norm and for `S`.
    pub est_w: f64,
    pub est_s: f64,
    /// `Σ w |y|^{-n-σ} |δv|` per dyadic shell, innermost first.
    pub shell_abs: Vec<f64>,
    /// Lattice Hessian used by the near field.
    pub hessian: Sym,
}

/// Locates `x` on the lattice of `v`.
pub fn lattice_node(v: &Field, x: &Point) -> Result<Node> {
    v.grid.lattice_node(x).ok_or_else(|| {
        Error::Precondition(format!("point {:?} is not a lattice node of the grid", &x[..v.grid.n]))
    })
}

/// Directional second difference quotients `θ_dᵀ H θ_d` along the lattice
/// directions of the near-field rule.
pub(crate) fn near_quotients(v: &Field, node: &Node, order: NearOrder) -> Vec<f64> {
    let n = v.grid.n;
    let h = v.grid.h;
    let v0 = v.node_value(node);
    let shifted = |d: &[i64; 3], k: i64| {
        let mut p = *node;
        for a in 0..n {
            p[a] += k * d[a];
        }
        v.node_value(&p)
    };
    near_directions(n)
        .iter()
        .map(|(d, _)| {
            let len2 = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64 * h * h;
            let d1 = shifted(d, 1) + shifted(d, -1) - 2.0 * v0;
            match order {
                NearOrder::Second => d1 / len2,
                NearOrder::Fourth => {
                    let d2 = shifted(d, 2) + shifted(d, -2) - 2.0 * v0;
                    (16.0 * d1 - d2) / (12.0 * len2)
                }
            }
        })
        .collect()
}

fn unit(d: &[i64; 3]) -> [f64; 3] {
    let l = ((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64).sqrt();
    [d[0] as f64 / l, d[1] as f64 / l, d[2] as f64 / l]
}

/// Hessian estimate from the near-field quotients: diagonal from the axes,
/// off-diagonals from the face diagonals.
pub(crate) fn lattice_hessian(n: usize, q: &[f64]) -> Sym {
    let mut hs = Sym::zeros(n);
    match n {
        1 => hs.m[0][0] = q[0],
        2 => {
            hs.m[0][0] = q[0];
            hs.m[1][1] = q[1];
            let c = 0.5 * (q[2] - q[3]);
            hs.m[0][1] = c;
            hs.m[1][0] = c;
        }
        _ => {
            for a in 0..3 {
                hs.m[a][a] = q[a];
            }
            let pairs = [(0usize, 1usize, 3usize, 4usize), (0, 2, 5, 6), (1, 2, 7, 8)];
            for (i, j, p, m) in pairs {
                let c = 0.5 * (q[p] - q[m]);
                hs.m[i][j] = c;
                hs.m[j][i] = c;
            }
        }
    }
    hs
}

fn near_moments(n: usize, q: &[f64], factor: f64) -> (Sym, f64) {
    let mut w = Sym::zeros(n);
    let mut s = 0.0;
    for ((d, wd), qd) in near_directions(n).iter().zip(q) {
        let t = unit(d);
        w.add_outer(factor * wd * qd, &t);
        s += factor * wd * qd;
    }
    (w, s)
}

fn shell_pass(v: &Field, x: &Point, v0: f64, sigma: f64, plan: &QuadraturePlan, interp: Interp) -> (Sym, f64, Vec<f64>) {
    let n = plan.n;
    let e = -(n as f64) - sigma;
    let mut w = Sym::zeros(n);
    let mut s = 0.0;
    let mut shell_abs = Vec::with_capacity(plan.shells.len());
    for sh in &plan.shells {
        let mut acc_abs = 0.0;
        for nd in &plan.nodes[sh.start..sh.end] {
            let mut xp = *x;
            let mut xm = *x;
            for a in 0..n {
                xp[a] += nd.y[a];
                xm[a] -= nd.y[a];
            }
            let d = v.value_at(&xp, interp) + v.value_at(&xm, interp) - 2.0 * v0;
            let k = nd.w * nd.r.powf(e);
            w.add_outer(k * d, &nd.theta);
            s += k * d;
            acc_abs += k * d.abs();
        }
        shell_abs.push(acc_abs);
    }
    (w, s, shell_abs)
}

/// Margin over the critical growth rate in the divergence test.
pub const DIVERGENCE_RATIO: f64 = 1.25;

/// Scale pairs `(h,2h)`, `(2h,4h)`, `(4h,8h)` that must all show growth.
pub const DIVERGENCE_PAIRS: usize = 3;

/// Largest spread between growth ratios still read as a single power law.
pub const DIVERGENCE_SPREAD: f64 = 2.0;

/// Detects `δv(x,y) ~ |y|^α` with `α < σ` at a lattice node.
///
/// Uses `q(s) = max_d |δv(x, s d)| / |s d|²` over the lattice directions at
/// `s = 1, 2, 4, 8` cells, which involves grid values only. For such a
/// cusp `q` grows inward by `2^{2-α}` per halving, so the singular integral
/// diverges once the growth exceeds `2^{2-σ}`. Returns the smallest growth
/// ratio when all pairs exceed `DIVERGENCE_RATIO · 2^{2-σ}` and the ratios
/// look like one power law: none above `DIVERGENCE_RATIO · 4` (a jump) and
/// largest over smallest below `DIVERGENCE_SPREAD`. Smooth fields sampled
/// near the edge of their support give erratic ratios and are not flagged.
pub(crate) fn lattice_divergence(v: &Field, node: &Node, sigma: f64) -> Option<f64> {
    let n = v.grid.n;
    let v0 = v.node_value(node);
    let q = |s: i64| {
        near_directions(n)
            .iter()
            .map(|(d, _)| {
                let mut p = *node;
                let mut m = *node;
                for a in 0..n {
                    p[a] += s * d[a];
                    m[a] -= s * d[a];
                }
                let len2 = (s * s * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2])) as f64;
                (v.node_value(&p) + v.node_value(&m) - 2.0 * v0).abs() / len2
            })
            .fold(0.0, f64::max)
    };
    let qs: Vec<f64> = (0..=DIVERGENCE_PAIRS as u32).map(|k| q(1 << k)).collect();
    if !(qs[0] > 1e-300) {
        return None;
    }
    let ratios: Vec<f64> = qs.windows(2).map(|w| w[0] / w[1].max(f64::MIN_POSITIVE)).collect();
    let worst = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let steepest = ratios.iter().copied().fold(0.0, f64::max);
    let power_law = steepest <= DIVERGENCE_RATIO * 4.0 && steepest < DIVERGENCE_SPREAD * worst;
    (power_law && worst > DIVERGENCE_RATIO * 2f64.powf(2.0 - sigma)).then_some(worst)
}

/// Moments `W(x)` and `S(x)` of `v` at the lattice node `x`.
pub fn moments(v: &Field, x: &Point, sigma: f64, plan: &QuadraturePlan) -> Result<Moments> {
    let n = v.grid.n;
    if plan.n != n {
        return Err(Error::Domain(format!("plan dimension {} differs from field dimension {n}", plan.n)));
    }
    if (plan.h - v.grid.h).abs() > 1e-12 * v.grid.h {
        return Err(Error::Domain("plan spacing differs from grid spacing".into()));
    }
    let node = lattice_node(v, x)?;
    let xs = v.grid.node_point(&node);
    let v0 = v.node_value(&node);
    let interp = plan.spec.interp;

    let q = near_quotients(v, &node, plan.spec.near_order);
    let factor = plan.near_factor(sigma);
    let (near_w, near_s) = near_moments(n, &q, factor);
    let other = match plan.spec.near_order {
        NearOrder::Second => NearOrder::Fourth,
        NearOrder::Fourth => NearOrder::Second,
    };
    let q_alt = near_quotients(v, &node, other);
    let (near_w_alt, near_s_alt) = near_moments(n, &q_alt, factor);

    let (far_w, far_s, shell_abs) = shell_pass(v, &xs, v0, sigma, plan, interp);
    let (cw, cs) = match plan.coarse() {
        Some(c) => {
            let (w, s, _) = shell_pass(v, &xs, v0, sigma, c, interp);
            (w, s)
        }
        None => (far_w, far_s),
    };

    let c_far = v.far_value(plan.spec.far_mean);
    let tail_s = 2.0 * (c_far - v0) * plan.tail_mass(sigma);
    let tail_w = Sym::identity(n).scale(tail_s / n as f64);

    if let Some(ratio) = lattice_divergence(v, &node, sigma) {
        return Err(Error::Divergence { location: format!("{:?}", &xs[..n]), ratio });
    }

    let w = near_w.add(&far_w).add(&tail_w);
    let s = near_s + far_s + tail_s;
    Ok(Moments {
        w,
        s,
        near_w,
        near_s,
        far_w,
        far_s,
        tail_w,
        tail_s,
        est_w: far_w.sub(&cw).norm() + near_w.sub(&near_w_alt).norm(),
        est_s: (far_s - cs).abs() + (near_s - near_s_alt).abs(),
        shell_abs,
        hessian: lattice_hessian(n, &q),
    })
}

fn check_kernel_dim(p: &SigmaParams, v: &Field) -> Result<()> {
    if p.n < 2 {
        return Err(Error::Domain("matrix-valued operators need n >= 2".into()));
    }
    if p.n != v.grid.n {
        return Err(Error::Domain(format!("params dimension {} differs from field dimension {}", p.n, v.grid.n)));
    }
    Ok(())
}

/// Fractional Hessian `h_σ(v,x) = (n+σ-2)(n+σ)/2 · A(n,2-σ) · W(x)`.
pub fn frac_hessian(v: &Field, x: &Point, p: &SigmaParams, q: &QuadraturePlan) -> Result<Sym> {
    check_kernel_dim(p, v)?;
    Ok(moments(v, x, p.sigma, q)?.w.scale(p.hessian_prefactor()))
}

/// Fractional Laplacian with symbol `-|ξ|^σ`, split by region.
pub fn frac_laplacian_detail(v: &Field, x: &Point, p: &SigmaParams, q: &QuadraturePlan) -> Result<OperatorValue> {
    if p.n != v.grid.n {
        return Err(Error::Domain("params dimension differs from field dimension".into()));
    }
    let m = moments(v, x, p.sigma, q)?;
    let c = 0.5 * fraclap_constant(p.n, p.sigma);
    Ok(OperatorValue::from_parts(m.near_s, m.far_s, m.tail_s, m.est_s).scaled(c))
}

/// Fractional Laplacian with symbol `-|ξ|^σ`.
pub fn frac_laplacian(v: &Field, x: &Point, p: &SigmaParams, q: &QuadraturePlan) -> Result<f64> {
    Ok(frac_laplacian_detail(v, x, p, q)?.value)
}

/// One-dimensional fractional Laplacian of order σ along the unit vector
/// `tau`, `C(1,σ)/2 ∫ δv(x, sτ) |s|^{-1-σ} ds`.
///
/// The near field uses `τᵀHτ` with the lattice Hessian; the rest of the line
/// is integrated with the plan's radial nodes.
pub fn directional_frac_laplacian(v: &Field, x: &Point, tau: &[f64; 3], sigma: f64, q: &QuadraturePlan) -> Result<f64> {
    let n = v.grid.n;
    let len = (tau[0] * tau[0] + tau[1] * tau[1] + tau[2] * tau[2]).sqrt();
    if (len - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("direction must be a unit vector, |tau| = {len}")));
    }
    if !(sigma > 0.0 && sigma < 2.0) {
        return Err(Error::Domain(format!("sigma out of (0,2): {sigma}")));
    }
    let node = lattice_node(v, x)?;
    let xs = v.grid.node_point(&node);
    let v0 = v.node_value(&node);
    let qd = near_quotients(v, &node, q.spec.near_order);
    let hs = lattice_hessian(n, &qd);
    let near = 2.0 * q.near_factor(sigma) * hs.quad(tau);

    let (gx, gw) = crate::quadrature::gauss_legendre(q.spec.gauss_points);
    let dr = q.spec.radial_step * q.h;
    let mut far = 0.0;
    for sh in &q.shells {
        let (a, b) = (sh.r_in, sh.r_out);
        let sub = ((b - a) / dr).ceil().max(1.0) as usize;
        let width = (b - a) / sub as f64;
        for k in 0..sub {
            let lo = a + k as f64 * width;
            for (xi, wi) in gx.iter().zip(&gw) {
                let s = lo + 0.5 * width * (xi + 1.0);
                let y = [s * tau[0], s * tau[1], s * tau[2]];
                let mut xp = xs;
                let mut xm = xs;
                for c in 0..n {
                    xp[c] += y[c];
                    xm[c] -= y[c];
                }
                let d = v.value_at(&xp, q.spec.interp) + v.value_at(&xm, q.spec.interp) - 2.0 * v0;
                let k = 2.0 * 0.5 * width * wi * s.powf(-1.0 - sigma);
                far += k * d;
            }
        }
    }
    if let Some(ratio) = lattice_divergence(v, &node, sigma) {
        return Err(Error::Divergence { location: format!("{:?}", &xs[..n]), ratio });
    }
    let c_far = v.far_value(q.spec.far_mean);
    let tail = 2.0 * (c_far - v0) * 2.0 * q.far_cutoff.powf(-sigma) / sigma;
    Ok(0.5 * fraclap_constant(1, sigma) * (near + far + tail))
}

/// Linear operator `L_A(v,x) = (2-σ) Tr(A W(x))`.
pub fn linear_op(v: &Field, a: &EllipticMatrix, x: &Point, p: &SigmaParams, q: &QuadraturePlan) -> Result<OperatorValue> {
    check_kernel_dim(p, v)?;
    if a.n() != p.n {
        return Err(Error::Domain("matrix dimension differs from params dimension".into()));
    }
    let m = moments(v, x, p.sigma, q)?;
    Ok(linear_from_moments(&m, &a.to_sym(), p.sigma))
}

/// `L_A` from precomputed moments, so one pass serves many matrices.
pub fn linear_from_moments(m: &Moments, a: &Sym, sigma: f64) -> OperatorValue {
    let c = 2.0 - sigma;
    let anorm = a.norm();
    OperatorValue::from_parts(a.dot(&m.near_w), a.dot(&m.far_w), a.dot(&m.tail_w), anorm * m.est_w).scaled(c)
}

/// Minimizes `Σ aᵢ eᵢ` over `0 ≤ aᵢ ≤ Λ`, `Σ aᵢ ≥ λ`.
///
/// Negative eigenvalues receive the full weight `Λ`. Any remaining trace
/// deficit is filled into the smallest nonnegative eigenvalues first.
pub fn trace_min(e: &[f64], lambda: f64, big_lambda: f64) -> Result<(f64, Vec<f64>)> {
    let n = e.len();
    if (n as f64) * big_lambda < lambda {
        return Err(Error::Infeasible { n_lambda: n as f64 * big_lambda, lambda });
    }
    if e.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite eigenvalue".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| e[i].total_cmp(&e[j]));
    let mut a = vec![0.0; n];
    let mut used = 0.0;
    for &i in &order {
        if e[i] < 0.0 {
            a[i] = big_lambda;
            used += big_lambda;
        }
    }
    for &i in &order {
        if used >= lambda {
            break;
        }
        if e[i] >= 0.0 {
            let take = (lambda - used).min(big_lambda);
            a[i] = take;
            used += take;
        }
    }
    let val = a.iter().zip(e).map(|(a, e)| a * e).sum();
    Ok((val, a))
}

/// `M⁻` from moments: `(2-σ) · trace_min(eig W)`.
pub fn pucci_minus_from_moments(w: &Sym, p: &SigmaParams) -> Result<f64> {
    let eig = w.eigenvalues();
    Ok((2.0 - p.sigma) * trace_min(&eig, p.lambda, p.big_lambda)?.0)
}

/// `M⁺` from moments: `-(2-σ) · trace_min(eig(-W))`.
pub fn pucci_plus_from_moments(w: &Sym, p: &SigmaParams) -> Result<f64> {
    let eig: Vec<f64> = w.eigenvalues().iter().map(|e| -e).collect();
    Ok(-(2.0 - p.sigma) * trace_min(&eig, p.lambda, p.big_lambda)?.0)
}

/// Lower extremal operator over `{A ⪰ 0 : λ ≤ Tr A, A ⪯ Λ Id}`.
pub fn pucci_minus(v: &Field, x: &Point, p: &SigmaParams, q: &QuadraturePlan) -> Result<f64> {
    check_kernel_dim(p, v)?;
    pucci_minus_from_moments(&moments(v, x, p.sigma, q)?.w, p)
}

/// Upper extremal operator, `M⁺(v) = -M⁻(-v)`.
pub fn pucci_plus(v: &Field, x: &Point, p: &SigmaParams, q: &QuadraturePlan) -> Result<f64> {
    check_kernel_dim(p, v)?;
    pucci_plus_from_moments(&moments(v, x, p.sigma, q)?.w, p)
}

/// The extremal operator of the larger kernel family,
/// `(2-σ) ∫ [λ (δv)⁺ - Λ (δv)⁻] / |y|^{n+σ} dy`.
pub fn pucci_minus_cs(v: &Field, x: &Point, p: &SigmaParams, q: &QuadraturePlan) -> Result<f64> {
    check_kernel_dim(p, v)?;
    let n = v.grid.n;
    let node = lattice_node(v, x)?;
    let xs = v.grid.node_point(&node);
    let v0 = v.node_value(&node);
    let g = |d: f64| if d >= 0.0 { p.lambda * d } else { p.big_lambda * d };
    let qd = near_quotients(v, &node, q.spec.near_order);
    let factor = q.near_factor(p.sigma);
    let near: f64 = near_directions(n).iter().zip(&qd).map(|((_, wd), qv)| factor * wd * g(*qv)).sum();
    let e = -(n as f64) - p.sigma;
    let mut far = 0.0;
    for nd in &q.nodes {
        let mut xp = xs;
        let mut xm = xs;
        for a in 0..n {
            xp[a] += nd.y[a];
            xm[a] -= nd.y[a];
        }
        let d = v.value_at(&xp, q.spec.interp) + v.value_at(&xm, q.spec.interp) - 2.0 * v0;
        far += nd.w * nd.r.powf(e) * g(d);
    }
    let c_far = v.far_value(q.spec.far_mean);
    let tail = g(2.0 * (c_far - v0)) * q.tail_mass(p.sigma);
    Ok((2.0 - p.sigma) * (near + far + tail))
}

/// `E_σ(v,x)`, the smallest eigenvalue of the fractional Hessian.
pub fn e_sigma(v: &Field, x: &Point, p: &SigmaParams, q: &QuadraturePlan) -> Result<f64> {
    Ok(frac_hessian(v, x, p, q)?.min_eigenvalue())
}

/// Directions used to sample the unit sphere: equispaced half circle in 2-D,
/// a Fibonacci spiral on the upper hemisphere in 3-D.
pub fn sample_directions(n: usize, count: usize) -> Vec<[f64; 3]> {
    match n {
        1 => vec![[1.0, 0.0, 0.0]],
        2 => (0..count)
            .map(|j| {
                let t = j as f64 * std::f64::consts::PI / count as f64;
                [t.cos(), t.sin(), 0.0]
            })
            .collect(),
        _ => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|j| {
                    let z = 1.0 - (j as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * j as f64;
                    [r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
    }
}

/// `E*_σ(v,x)`: minimum over sampled directions of the directional operator.
/// Returns the minimum and the minimizing direction.
pub fn e_sigma_star_with_direction(v: &Field, x: &Point, sigma: f64, q: &QuadraturePlan, directions: usize) -> Result<(f64, [f64; 3])> {
    if directions < 8 {
        return Err(Error::Domain(format!("need at least 8 directions, got {directions}")));
    }
    let mut best = (f64::INFINITY, [0.0; 3]);
    for tau in sample_directions(v.grid.n, directions) {
        let val = directional_frac_laplacian(v, x, &tau, sigma, q)?;
        if val < best.0 {
            best = (val, tau);
        }
    }
    Ok(best)
}

pub fn e_sigma_star(v: &Field, x: &Point, sigma: f64, q: &QuadraturePlan, directions: usize) -> Result<f64> {
    Ok(e_sigma_star_with_direction(v, x, sigma, q, directions)?.0)
}

/// Normalizing constant of the plane-wave symbol for the scalar moment,
/// exposed for sweep tables: `frac_laplacian = fraclap_scale(n,σ) · S`.
pub fn fraclap_scale(n: usize, sigma: f64) -> f64 {
    0.5 * fraclap_constant(n, sigma)
}
