//! Quadrature plans for the singular integrals `∫ δv(x,y) k(y) dy`.
//!
//! The integration domain splits into three parts.
//!
//! * Near field `|y| < r₀`: `δv(x,y)` is replaced by `yᵀHy` with `H`
//!   estimated from lattice second differences, and the radial integral is
//!   done in closed form.
//! * Shells `r₀ ≤ |y| ≤ R_far`: dyadic shells, each split radially into
//!   subintervals of width about `radial_step` with Gauss–Legendre nodes, and
//!   a product angular rule whose density grows with the radius.
//! * Tail `|y| > R_far`: the field is assumed to equal its far value there,
//!   which makes the tail an exact closed form for compactly supported fields.
//!
//! Because `δv(x,y) = δv(x,-y)` only half of each sphere is sampled.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub use crate::base::Interp;

/// Order of the lattice difference used for the near-field Hessian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NearOrder {
    /// Three-point second differences; monotone.
    #[default]
    Second,
    /// Five-point differences; higher order but not monotone.
    Fourth,
}

/// User-facing description of a plan. Lengths are in units of the lattice
/// spacing `h` unless noted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanSpec {
    /// Near-field cutoff in units of `h`.
    pub inner_radius: f64,
    /// Far cutoff in absolute length units.
    pub far_cutoff: f64,
    /// Target width of a radial subinterval, in units of `h`.
    pub radial_step: f64,
    /// Target arc length between angular nodes, in units of `h`.
    pub angular_step: f64,
    /// Gauss–Legendre points per radial subinterval.
    pub gauss_points: usize,
    /// Lower bound on angular nodes per half sphere (per axis in 3-D).
    pub min_angular: usize,
    pub interp: Interp,
    pub near_order: NearOrder,
    /// Mean value assumed beyond the far cutoff for analytic exteriors.
    pub far_mean: f64,
}

impl Default for PlanSpec {
    fn default() -> Self {
        PlanSpec {
            inner_radius: 1.0,
            far_cutoff: 6.0,
            radial_step: 1.0,
            angular_step: 1.0,
            gauss_points: 2,
            min_angular: 8,
            interp: Interp::Multilinear,
            near_order: NearOrder::Second,
            far_mean: 0.0,
        }
    }
}

/// One quadrature node in the shell region: offset `y`, unit direction and
/// geometric weight (radial Gauss weight times angular weight times the
/// volume factor `r^{n-1}`, doubled for the omitted antipode).
#[derive(Clone, Copy, Debug)]
pub struct QNode {
    pub y: [f64; 3],
    pub theta: [f64; 3],
    pub r: f64,
    pub w: f64,
}

/// Shell geometry of a plan.
#[derive(Clone, Debug)]
pub struct Shell {
    pub r_in: f64,
    pub r_out: f64,
    pub start: usize,
    pub end: usize,
    pub angular_nodes: usize,
}

/// A built plan for lattice spacing `h` in dimension `n`.
#[derive(Clone, Debug)]
pub struct QuadraturePlan {
    pub n: usize,
    pub h: f64,
    pub spec: PlanSpec,
    pub inner_radius: f64,
    pub far_cutoff: f64,
    pub radial_levels: usize,
    pub shells: Vec<Shell>,
    pub nodes: Vec<QNode>,
    coarse: Option<Box<QuadraturePlan>>,
}

impl QuadraturePlan {
    /// Plan with default spacing choices and the given far cutoff.
    pub fn new(n: usize, h: f64, far_cutoff: f64) -> Result<Self> {
        Self::from_spec(n, h, PlanSpec { far_cutoff, ..PlanSpec::default() })
    }

    pub fn from_spec(n: usize, h: f64, spec: PlanSpec) -> Result<Self> {
        let mut plan = Self::build(n, h, &spec)?;
        let coarse_spec = PlanSpec {
            radial_step: spec.radial_step * 2.0,
            angular_step: spec.angular_step * 2.0,
            min_angular: (spec.min_angular / 2).max(4),
            ..spec.clone()
        };
        plan.coarse = Some(Box::new(Self::build(n, h, &coarse_spec)?));
        Ok(plan)
    }

    /// Same plan with node densities multiplied by `factor`.
    pub fn refined(&self, factor: f64) -> Result<Self> {
        let spec = PlanSpec {
            radial_step: self.spec.radial_step / factor,
            angular_step: self.spec.angular_step / factor,
            min_angular: ((self.spec.min_angular as f64) * factor).ceil() as usize,
            ..self.spec.clone()
        };
        Self::from_spec(self.n, self.h, spec)
    }

    pub fn with_interp(&self, interp: Interp, near_order: NearOrder) -> Result<Self> {
        let spec = PlanSpec { interp, near_order, ..self.spec.clone() };
        Self::from_spec(self.n, self.h, spec)
    }

    /// Plan with half the node density, used for error estimates.
    pub fn coarse(&self) -> Option<&QuadraturePlan> {
        self.coarse.as_deref()
    }

    fn build(n: usize, h: f64, spec: &PlanSpec) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(Error::Domain(format!("quadrature dimension {n} not supported")));
        }
        let r0 = spec.inner_radius * h;
        if !(r0 > 0.0) || !(h > 0.0) {
            return Err(Error::Domain("inner radius and spacing must be positive".into()));
        }
        if !(spec.far_cutoff > r0) {
            return Err(Error::Domain(format!(
                "far cutoff {} must exceed inner radius {r0}",
                spec.far_cutoff
            )));
        }
        if spec.gauss_points == 0 || spec.radial_step <= 0.0 || spec.angular_step <= 0.0 {
            return Err(Error::Domain("quadrature densities must be positive".into()));
        }
        let (gx, gw) = gauss_legendre(spec.gauss_points);
        let levels = (spec.far_cutoff / r0).log2().ceil().max(1.0) as usize;
        let dr = spec.radial_step * h;
        let ds = spec.angular_step * h;
        let mut shells = Vec::with_capacity(levels);
        let mut nodes = Vec::new();
        for k in 0..levels {
            let a = r0 * 2f64.powi(k as i32);
            let b = (2.0 * a).min(spec.far_cutoff);
            if b <= a {
                break;
            }
            let start = nodes.len();
            let sub = ((b - a) / dr).ceil().max(1.0) as usize;
            let width = (b - a) / sub as f64;
            let ang = half_sphere_rule(n, b, ds, spec.min_angular);
            for s in 0..sub {
                let lo = a + s as f64 * width;
                for (xi, wi) in gx.iter().zip(&gw) {
                    let r = lo + 0.5 * width * (xi + 1.0);
                    let wr = 0.5 * width * wi * r.powi(n as i32 - 1);
                    for (theta, wa) in &ang {
                        nodes.push(QNode {
                            y: [r * theta[0], r * theta[1], r * theta[2]],
                            theta: *theta,
                            r,
                            w: wr * wa,
                        });
                    }
                }
            }
            shells.push(Shell { r_in: a, r_out: b, start, end: nodes.len(), angular_nodes: ang.len() });
        }
        Ok(QuadraturePlan {
            n,
            h,
            spec: spec.clone(),
            inner_radius: r0,
            far_cutoff: spec.far_cutoff,
            radial_levels: shells.len(),
            shells,
            nodes,
            coarse: None,
        })
    }

    /// `∫_{|y|>R} |y|^{-n-σ} dy = ω_n R^{-σ} / σ`.
    pub fn tail_mass(&self, sigma: f64) -> f64 {
        crate::base::sphere_area(self.n) * self.far_cutoff.powf(-sigma) / sigma
    }

    /// Radial factor `∫_0^{r₀} r^{1-σ} dr = r₀^{2-σ}/(2-σ)` of the near field.
    pub fn near_factor(&self, sigma: f64) -> f64 {
        self.inner_radius.powf(2.0 - sigma) / (2.0 - sigma)
    }

    /// Lattice reach of the plan in units of `h`, including interpolation
    /// support and near-field stencils.
    pub fn lattice_radius(&self) -> usize {
        let interp_extra = match self.spec.interp {
            Interp::Multilinear => 1,
            Interp::Cubic => 2,
        };
        let near = match self.spec.near_order {
            NearOrder::Second => 1,
            NearOrder::Fourth => 2,
        };
        ((self.far_cutoff / self.h).ceil() as usize + interp_extra).max(near)
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(m, z);
        if d.is_finite() {
            dp = d;
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(m: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Full-sphere angular rule with `count` nodes per axis: equispaced angles in
/// 2-D, Gauss in `cos θ` times equispaced `φ` (twice as many) in 3-D, and the
/// two points `±1` in 1-D.
pub fn sphere_rule(n: usize, count: usize) -> Vec<([f64; 3], f64)> {
    match n {
        1 => vec![([1.0, 0.0, 0.0], 1.0), ([-1.0, 0.0, 0.0], 1.0)],
        2 => {
            let w = 2.0 * PI / count as f64;
            (0..count)
                .map(|j| {
                    let t = (j as f64 + 0.5) * 2.0 * PI / count as f64;
                    ([t.cos(), t.sin(), 0.0], w)
                })
                .collect()
        }
        _ => {
            let (zs, zw) = gauss_legendre(count);
            let nphi = 2 * count;
            let wphi = 2.0 * PI / nphi as f64;
            let mut out = Vec::with_capacity(count * nphi);
            for (z, wz) in zs.iter().zip(&zw) {
                let s = (1.0 - z * z).max(0.0).sqrt();
                for j in 0..nphi {
                    let phi = (j as f64 + 0.5) * wphi;
                    out.push(([s * phi.cos(), s * phi.sin(), *z], wz * wphi));
                }
            }
            out
        }
    }
}

/// Half-sphere rule for even integrands at radius `r` with arc spacing `ds`.
/// Weights already include the factor two for the antipodal half.
fn half_sphere_rule(n: usize, r: f64, ds: f64, min_nodes: usize) -> Vec<([f64; 3], f64)> {
    let per_axis = ((PI * r / ds).ceil() as usize).max(min_nodes);
    match n {
        1 => vec![([1.0, 0.0, 0.0], 2.0)],
        2 => {
            let w = 2.0 * PI / per_axis as f64;
            (0..per_axis)
                .map(|j| {
                    let t = (j as f64 + 0.5) * PI / per_axis as f64;
                    ([t.cos(), t.sin(), 0.0], w)
                })
                .collect()
        }
        _ => {
            let (zs, zw) = gauss_legendre(per_axis);
            let nphi = per_axis;
            let wphi = PI / nphi as f64;
            let mut out = Vec::with_capacity(per_axis * nphi);
            for (z, wz) in zs.iter().zip(&zw) {
                let s = (1.0 - z * z).max(0.0).sqrt();
                for j in 0..nphi {
                    let phi = (j as f64 + 0.5) * wphi;
                    out.push(([s * phi.cos(), s * phi.sin(), *z], 2.0 * wz * wphi));
                }
            }
            out
        }
    }
}

/// Lattice directions and weights of the near-field angular rule, one entry
/// per antipodal pair, weights summing to the sphere area.
///
/// In 2-D the four axes at multiples of 45° form an equispaced rule exact for
/// trigonometric degree below 8. In 3-D the 26 neighbours of the unit cube
/// carry the degree-7 Lebedev weights.
pub fn near_directions(n: usize) -> Vec<([i64; 3], f64)> {
    match n {
        1 => vec![([1, 0, 0], 2.0)],
        2 => {
            let w = PI / 2.0;
            vec![([1, 0, 0], w), ([0, 1, 0], w), ([1, 1, 0], w), ([1, -1, 0], w)]
        }
        _ => {
            let four_pi = 4.0 * PI;
            let (a1, a2, a3) = (2.0 * four_pi / 21.0, 2.0 * four_pi * 4.0 / 105.0, 2.0 * four_pi * 9.0 / 280.0);
            vec![
                ([1, 0, 0], a1),
                ([0, 1, 0], a1),
                ([0, 0, 1], a1),
                ([1, 1, 0], a2),
                ([1, -1, 0], a2),
                ([1, 0, 1], a2),
                ([1, 0, -1], a2),
                ([0, 1, 1], a2),
                ([0, 1, -1], a2),
                ([1, 1, 1], a3),
                ([1, 1, -1], a3),
                ([1, -1, 1], a3),
                ([-1, 1, 1], a3),
            ]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for m in 1..8 {
            let (x, w) = gauss_legendre(m);
            let deg = 2 * m - 1;
            for p in 0..=deg {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "m={m} p={p} q={q}");
            }
        }
    }

    #[test]
    fn shell_weights_integrate_the_radial_kernel() {
        // ∫_{r0<|y|<R} |y|^{-n-σ} dy = ω (r0^{-σ} - R^{-σ})/σ
        for n in [2usize, 3] {
            let sigma = 0.7;
            let exact = crate::base::sphere_area(n) * (0.1f64.powf(-sigma) - 2f64.powf(-sigma)) / sigma;
            // Two Gauss points lose about 0.2% on the steep first shell.
            for (points, tol) in [(2usize, 5e-3), (6, 1e-7)] {
                let spec = PlanSpec { far_cutoff: 2.0, gauss_points: points, ..PlanSpec::default() };
                let plan = QuadraturePlan::from_spec(n, 0.1, spec).unwrap();
                let q: f64 = plan.nodes.iter().map(|nd| nd.w * nd.r.powf(-(n as f64) - sigma)).sum();
                assert!((q / exact - 1.0).abs() < tol, "n={n}, {points} points: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn near_weights_sum_to_sphere_area() {
        for n in [2usize, 3] {
            let s: f64 = near_directions(n).iter().map(|d| d.1).sum();
            assert!((s - crate::base::sphere_area(n)).abs() < 1e-12);
        }
    }
}
