//! Riesz potential `P = Γ ∗ K_{2-σ}` of an envelope and its derivatives.
//!
//! The convolution uses the kernel regularized inside `B_α` by the unique
//! quadratic that makes it `C^{1,1}`, averaged over grid cells, and is
//! evaluated as an exact discrete sum through zero-padded FFTs.

use crate::base::{a_sigma, hessian_prefactor, norm, riesz_constant, EllipticMatrix, Exterior, Field, Grid, Point, SigmaParams};
use crate::error::{Error, Result};
use crate::fft::{fast_len, FftNd, C64};
use crate::linalg::Sym;
use crate::nonlocal_ops::{lattice_divergence, lattice_node, moments, near_quotients};
use crate::quadrature::{near_directions, QuadraturePlan};
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

/// `K_{2-σ}(y) = A(n,2-σ) |y|^{-(n-2+σ)}` outside `B_α`, and inside
/// `Q_α(y) = A/(2α^{n+σ}) ((n+σ)α² - (n+σ-2)|y|²)`.
pub fn regularized_riesz_kernel(y: &Point, alpha: f64, p: &SigmaParams) -> f64 {
    let n = p.n as f64;
    let a = riesz_constant(p.n, 2.0 - p.sigma).unwrap_or(f64::NAN);
    let r = norm(y);
    if r >= alpha {
        a * r.powf(-(n - 2.0 + p.sigma))
    } else {
        a / (2.0 * alpha.powf(n + p.sigma)) * ((n + p.sigma) * alpha * alpha - (n + p.sigma - 2.0) * r * r)
    }
}

#[derive(Clone, Debug)]
pub struct PotentialField {
    pub p: Field,
    /// Centered-difference gradient, one-sided on the box boundary.
    pub grad: Vec<[f64; 3]>,
    /// Centered-difference Hessian; zero on the outermost ring.
    pub hess: Vec<Sym>,
    pub kernel_alpha: f64,
}

/// Cell averages of the regularized kernel on the lattice offsets
/// `lo..lo+len` per axis, with a 3-point Gauss rule per axis.
fn kernel_table(n: usize, h: f64, lo: &[i64], len: &[usize], alpha: f64, p: &SigmaParams) -> Vec<f64> {
    let gx = [-(0.6f64).sqrt(), 0.0, (0.6f64).sqrt()];
    let gw = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    let total: usize = len[..n].iter().product();
    (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let mut m = [0i64; 3];
            for a in (0..n).rev() {
                m[a] = lo[a] + (idx % len[a]) as i64;
                idx /= len[a];
            }
            let mut acc = 0.0;
            let pts = 3usize.pow(n as u32);
            for s in 0..pts {
                let mut rem = s;
                let mut y = [0.0; 3];
                let mut w = 1.0;
                for a in 0..n {
                    let k = rem % 3;
                    rem /= 3;
                    y[a] = (m[a] as f64 + 0.5 * gx[k]) * h;
                    w *= gw[k];
                }
                acc += w * regularized_riesz_kernel(&y, alpha, p);
            }
            acc
        })
        .collect()
}

fn check_support(gamma: &Field) -> Result<()> {
    let g = &gamma.grid;
    for i in 0..g.len() {
        if gamma.values[i] == 0.0 {
            continue;
        }
        let node = g.node(i);
        if (0..g.n).any(|a| node[a] == 0 || node[a] == g.dims[a] as i64 - 1) {
            return Err(Error::Support(format!("gamma nonzero on the outer ring at {:?}", &g.point(i)[..g.n])));
        }
    }
    Ok(())
}

/// Values of `P` on `target`, which must lie on the lattice of `gamma`.
pub fn potential_on(gamma: &Field, p: &SigmaParams, alpha: f64, target: &Grid) -> Result<Field> {
    let src = &gamma.grid;
    let n = src.n;
    if p.n != n || target.n != n {
        return Err(Error::Domain("dimension mismatch between params, gamma and target".into()));
    }
    if n < 2 {
        return Err(Error::Domain("the Riesz potential needs n >= 2".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("kernel radius must be positive, got {alpha}")));
    }
    if (target.h - src.h).abs() > 1e-12 * src.h {
        return Err(Error::Domain("target spacing differs from gamma spacing".into()));
    }
    check_support(gamma)?;
    let origin = src
        .lattice_node(&target.lo)
        .ok_or_else(|| Error::Domain("target grid is not aligned with the gamma lattice".into()))?;
    let h = src.h;
    let mut fdims = vec![0usize; n];
    let mut klo = vec![0i64; 3];
    let mut klen = vec![1usize; 3];
    for a in 0..n {
        let ns = src.dims[a];
        let nt = target.dims[a];
        klen[a] = ns + nt - 1;
        klo[a] = origin[a] - (ns as i64 - 1);
        fdims[a] = fast_len(ns + nt - 1);
    }
    let table = kernel_table(n, h, &klo, &klen, alpha, p);
    let fft = FftNd::new(&fdims);
    let total = fft.len();
    let place = |dims: &[usize], vals: &dyn Fn(usize) -> f64| {
        let mut buf = vec![C64::new(0.0, 0.0); total];
        let count: usize = dims.iter().product();
        for idx in 0..count {
            let mut rem = idx;
            let mut flat = 0usize;
            let mut stride = 1usize;
            let mut coords = [0usize; 3];
            for a in (0..n).rev() {
                coords[a] = rem % dims[a];
                rem /= dims[a];
            }
            for a in (0..n).rev() {
                flat += coords[a] * stride;
                stride *= fdims[a];
            }
            buf[flat] = C64::new(vals(idx), 0.0);
        }
        buf
    };
    let cell = h.powi(n as i32);
    let mut gbuf = place(&src.dims[..n], &|i| gamma.values[i] * cell);
    let mut kbuf = place(&klen[..n], &|i| table[i]);
    fft.forward(&mut gbuf);
    fft.forward(&mut kbuf);
    gbuf.par_iter_mut().zip(kbuf.par_iter()).for_each(|(a, b)| *a *= b);
    fft.inverse(&mut gbuf);
    let scale = 1.0 / total as f64;
    let values: Vec<f64> = (0..target.len())
        .into_par_iter()
        .map(|i| {
            let node = target.node(i);
            let mut flat = 0usize;
            let mut stride = 1usize;
            for a in (0..n).rev() {
                let k = node[a] as usize + src.dims[a] - 1;
                flat += k * stride;
                stride *= fdims[a];
            }
            gbuf[flat].re * scale
        })
        .collect();
    Ok(Field { grid: *target, values, exterior: monopole(gamma, p) })
}

/// Far-field approximation `P(x) ≈ (∫Γ) K(x - c)` with `c` the barycenter
/// of `|Γ|`.
fn monopole(gamma: &Field, p: &SigmaParams) -> Exterior {
    let g = &gamma.grid;
    let cell = g.h.powi(g.n as i32);
    let mass: f64 = gamma.values.iter().sum::<f64>() * cell;
    let abs: f64 = gamma.values.iter().map(|v| v.abs()).sum::<f64>();
    if mass == 0.0 || abs == 0.0 {
        return Exterior::Zero;
    }
    let mut c = [0.0; 3];
    for i in 0..g.len() {
        let x = g.point(i);
        for a in 0..g.n {
            c[a] += x[a] * gamma.values[i].abs() / abs;
        }
    }
    let pp = *p;
    let alpha = g.h;
    Exterior::Analytic(Arc::new(move |x: &Point| {
        let y = [x[0] - c[0], x[1] - c[1], x[2] - c[2]];
        mass * regularized_riesz_kernel(&y, alpha, &pp)
    }))
}

/// `P = Γ ∗ K^α_{2-σ}` on the grid of `gamma`, with `α = h` by default.
pub fn riesz_potential(gamma: &Field, p: &SigmaParams, alpha: Option<f64>) -> Result<PotentialField> {
    let alpha = alpha.unwrap_or(gamma.grid.h);
    let pf = potential_on(gamma, p, alpha, &gamma.grid)?;
    let (grad, hess) = finite_derivatives(&pf);
    Ok(PotentialField { p: pf, grad, hess, kernel_alpha: alpha })
}

fn finite_derivatives(f: &Field) -> (Vec<[f64; 3]>, Vec<Sym>) {
    let g = &f.grid;
    let n = g.n;
    let h = g.h;
    let val = |node: &[i64; 3]| g.index(node).map(|j| f.values[j]);
    (0..g.len())
        .into_par_iter()
        .map(|i| {
            let node = g.node(i);
            let v0 = f.values[i];
            let mut grad = [0.0; 3];
            let mut hs = Sym::zeros(n);
            for a in 0..n {
                let mut p = node;
                let mut m = node;
                p[a] += 1;
                m[a] -= 1;
                grad[a] = match (val(&p), val(&m)) {
                    (Some(vp), Some(vm)) => {
                        hs.m[a][a] = (vp - 2.0 * v0 + vm) / (h * h);
                        (vp - vm) / (2.0 * h)
                    }
                    (Some(vp), None) => (vp - v0) / h,
                    (None, Some(vm)) => (v0 - vm) / h,
                    (None, None) => 0.0,
                };
                for b in 0..a {
                    let mut c = [node; 4];
                    c[0][a] += 1;
                    c[0][b] += 1;
                    c[1][a] += 1;
                    c[1][b] -= 1;
                    c[2][a] -= 1;
                    c[2][b] += 1;
                    c[3][a] -= 1;
                    c[3][b] -= 1;
                    if let (Some(pp), Some(pm), Some(mp), Some(mm)) = (val(&c[0]), val(&c[1]), val(&c[2]), val(&c[3])) {
                        let x = (pp - pm - mp + mm) / (4.0 * h * h);
                        hs.m[a][b] = x;
                        hs.m[b][a] = x;
                    }
                }
            }
            (grad, hs)
        })
        .unzip()
}

/// `D²P(x) = c_h ∫ δΓ(x,y) [y⊗y/|y|^{n+σ+2} - Id/((n+σ)|y|^{n+σ})] dy`,
/// evaluated in a single pass with the combined kernel.
pub fn potential_hessian(gamma: &Field, x: &Point, p: &SigmaParams, q: &QuadraturePlan) -> Result<Sym> {
    let n = gamma.grid.n;
    if p.n != n || q.n != n {
        return Err(Error::Domain("dimension mismatch between params, plan and gamma".into()));
    }
    let node = lattice_node(gamma, x)?;
    let xs = gamma.grid.node_point(&node);
    let v0 = gamma.node_value(&node);
    let sig = p.sigma;
    let shift = 1.0 / (n as f64 + sig);
    let id = Sym::identity(n);
    let kern = |theta: &[f64; 3]| Sym::outer(n, theta).sub(&id.scale(shift));

    let mut acc = Sym::zeros(n);
    let qd = near_quotients(gamma, &node, q.spec.near_order);
    let factor = q.near_factor(sig);
    for ((d, wd), qv) in near_directions(n).iter().zip(&qd) {
        let l = ((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64).sqrt();
        let t = [d[0] as f64 / l, d[1] as f64 / l, d[2] as f64 / l];
        acc = acc.add(&kern(&t).scale(factor * wd * qv));
    }
    if let Some(ratio) = lattice_divergence(gamma, &node, sig) {
        return Err(Error::Divergence { location: format!("{:?}", &xs[..n]), ratio });
    }
    let e = -(n as f64) - sig;
    for sh in &q.shells {
        for nd in &q.nodes[sh.start..sh.end] {
            let mut xp = xs;
            let mut xm = xs;
            for a in 0..n {
                xp[a] += nd.y[a];
                xm[a] -= nd.y[a];
            }
            let d = gamma.value_at(&xp, q.spec.interp) + gamma.value_at(&xm, q.spec.interp) - 2.0 * v0;
            let k = nd.w * nd.r.powf(e) * d;
            acc = acc.add(&kern(&nd.theta).scale(k));
        }
    }
    // Beyond the cutoff the field equals its far value, so the angular
    // average of the kernel leaves a multiple of the identity.
    let tail = 2.0 * (gamma.far_value(q.spec.far_mean) - v0) * q.tail_mass(sig);
    acc = acc.add(&id.scale(tail * (1.0 / n as f64 - shift)));
    Ok(acc.scale(hessian_prefactor(n, sig)))
}

/// Both sides of the identity `D²P = h_σ - c_h S/(n+σ) Id` at `x`.
#[derive(Clone, Debug, Serialize)]
pub struct HessianIdentity {
    pub d2p: Sym,
    pub h_sigma: Sym,
    pub scalar: f64,
    /// `‖D²P - h_σ - scalar Id‖ / ‖D²P‖`.
    pub rel_err: f64,
}

pub fn hessian_identity(gamma: &Field, x: &Point, p: &SigmaParams, q: &QuadraturePlan) -> Result<HessianIdentity> {
    let d2p = potential_hessian(gamma, x, p, q)?;
    let h_sigma = crate::nonlocal_ops::frac_hessian(gamma, x, p, q)?;
    let lap = crate::nonlocal_ops::frac_laplacian(gamma, x, p, q)?;
    let n = p.n as f64;
    let s = lap / crate::nonlocal_ops::fraclap_scale(p.n, p.sigma);
    let scalar = -hessian_prefactor(p.n, p.sigma) * s / (n + p.sigma);
    let diff = d2p.sub(&h_sigma).add_scaled_identity(-scalar);
    let scale = d2p.norm();
    let rel_err = if scale > 0.0 { diff.norm() / scale } else { diff.norm() };
    Ok(HessianIdentity { d2p, h_sigma, scalar, rel_err })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TraceCheck {
    /// `Tr(A_σ D²P)` from the potential Hessian.
    pub hessian_side: f64,
    /// `c_h ∫ δΓ yᵀAy / |y|^{n+σ+2}` from the moment matrix.
    pub kernel_side: f64,
    pub rel_diff: f64,
}

pub fn trace_a_sigma_detail(gamma: &Field, a: &EllipticMatrix, x: &Point, p: &SigmaParams, q: &QuadraturePlan) -> Result<TraceCheck> {
    if a.n() != p.n {
        return Err(Error::Domain("matrix dimension differs from params dimension".into()));
    }
    if a.eigenvalues()[0] < -crate::base::EIG_TOL * a.a.norm().max(1.0) {
        return Err(Error::Domain("trace_a_sigma needs A >= 0".into()));
    }
    let asig = a_sigma(a, p.sigma)?.to_sym();
    let hessian_side = asig.dot(&potential_hessian(gamma, x, p, q)?);
    let m = moments(gamma, x, p.sigma, q)?;
    let kernel_side = hessian_prefactor(p.n, p.sigma) * a.to_sym().dot(&m.w);
    let scale = kernel_side.abs().max(hessian_side.abs());
    let rel_diff = if scale > 0.0 { (hessian_side - kernel_side).abs() / scale } else { 0.0 };
    Ok(TraceCheck { hessian_side, kernel_side, rel_diff })
}

/// `Tr(A_σ D²P)(x)`, returned from the kernel side.
pub fn trace_a_sigma(gamma: &Field, a: &EllipticMatrix, x: &Point, p: &SigmaParams, q: &QuadraturePlan) -> Result<f64> {
    Ok(trace_a_sigma_detail(gamma, a, x, p, q)?.kernel_side)
}

/// `R_σ = 3 + 6 · 2^{1/(n-2+σ)}`, where `((R-3)/6)^{-(n-2+σ)} = 1/2`.
pub fn decay_radius(p: &SigmaParams) -> f64 {
    3.0 + 6.0 * 2f64.powf(1.0 / (p.n as f64 - 2.0 + p.sigma))
}

/// Lower estimate of `[P]_{C^{1,1}}` as the largest `|δP(x,y)|/|y|²` over
/// up to `sample` nodes and all lattice offsets with `|y|∞ ≤ 3h`.
pub fn c11_seminorm(pf: &Field, sample: usize) -> f64 {
    let g = &pf.grid;
    let n = g.n;
    let reach = 3i64;
    let side = (2 * reach + 1) as usize;
    let mut offsets = Vec::new();
    for k in 0..side.pow(n as u32) {
        let mut rem = k;
        let mut m = [0i64; 3];
        for a in 0..n {
            m[a] = (rem % side) as i64 - reach;
            rem /= side;
        }
        // Half of the offsets suffice since δP is even in y.
        let first = m[..n].iter().find(|c| **c != 0);
        if matches!(first, Some(c) if *c > 0) {
            offsets.push(m);
        }
    }
    let interior: Vec<usize> = (0..g.len())
        .filter(|&i| {
            let node = g.node(i);
            (0..n).all(|a| node[a] >= reach && node[a] < g.dims[a] as i64 - reach)
        })
        .collect();
    if interior.is_empty() || sample == 0 {
        return 0.0;
    }
    let stride = (interior.len() / sample.min(interior.len())).max(1);
    let h2 = g.h * g.h;
    interior
        .par_iter()
        .step_by(stride)
        .map(|&i| {
            let node = g.node(i);
            let v0 = pf.values[i];
            offsets
                .iter()
                .map(|m| {
                    let mut a = node;
                    let mut b = node;
                    for c in 0..n {
                        a[c] += m[c];
                        b[c] -= m[c];
                    }
                    let d = pf.node_value(&a) + pf.node_value(&b) - 2.0 * v0;
                    let len2 = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) as f64 * h2;
                    d.abs() / len2
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct InterpolationReport {
    pub gamma_sup: f64,
    pub p_sup: f64,
    pub c11: f64,
    /// `‖P‖∞^{σ/2} [P]^{(2-σ)/2}`.
    pub interpolation: f64,
    /// `‖Γ‖∞ / interpolation`; absent when both sides vanish.
    pub ratio: Option<f64>,
    /// Minimizer `√(a/b)` of `a ρ^{-(2-σ)}/(2-σ) + b ρ^σ/σ` with
    /// `a = 2‖P‖∞`, `b = [P]`.
    pub rho_star: Option<f64>,
    /// The same minimizer found by golden-section search in `log ρ`.
    pub rho_golden: Option<f64>,
    /// Value of the bound at the minimizer, `2/((2-σ)σ) a^{σ/2} b^{(2-σ)/2}`.
    pub min_value: Option<f64>,
    pub h: f64,
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Compares `‖Γ‖∞` with `‖P‖∞^{σ/2}[P]_{C^{1,1}}^{(2-σ)/2}`.
pub fn interpolation_check(gamma: &Field, pf: &PotentialField, p: &SigmaParams) -> InterpolationReport {
    let sig = p.sigma;
    let gamma_sup = gamma.sup_norm();
    let p_sup = pf.p.sup_norm();
    let c11 = c11_seminorm(&pf.p, usize::MAX);
    let interpolation = p_sup.powf(sig / 2.0) * c11.powf((2.0 - sig) / 2.0);
    let ratio = (interpolation > 0.0).then(|| gamma_sup / interpolation);
    let (a, b) = (2.0 * p_sup, c11);
    let (rho_star, rho_golden, min_value) = if a > 0.0 && b > 0.0 {
        let f = |t: f64| {
            let rho = t.exp();
            a / (2.0 - sig) * rho.powf(-(2.0 - sig)) + b / sig * rho.powf(sig)
        };
        let star = (a / b).sqrt();
        let t = golden_section(f, star.ln() - 10.0, star.ln() + 10.0, 1e-10);
        (Some(star), Some(t.exp()), Some(2.0 / ((2.0 - sig) * sig) * a.powf(sig / 2.0) * b.powf((2.0 - sig) / 2.0)))
    } else {
        (None, None, None)
    };
    InterpolationReport { gamma_sup, p_sup, c11, interpolation, ratio, rho_star, rho_golden, min_value, h: gamma.grid.h }
}

/// `∫Γ` by the cell rule.
pub fn mass(gamma: &Field) -> f64 {
    gamma.values.iter().sum::<f64>() * gamma.grid.h.powi(gamma.grid.n as i32)
}
