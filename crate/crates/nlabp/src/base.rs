//! Grids, sampled fields with an explicit exterior extension, kernel
//! constants and the admissibility tests for the matrix family.
//!
//! Every nonlocal operator reads a field on all of space. A [`Field`] holds
//! samples on a uniform [`Grid`] together with an [`Exterior`] rule that is
//! total, so off-grid reads never fail.

use crate::error::{Error, Result};
use crate::linalg::{sym_eigenvalues, Sym};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// A point of space. Coordinates beyond the field dimension are ignored and
/// kept at zero.
pub type Point = [f64; 3];

/// Lattice coordinates of a node, possibly outside the sampled box.
pub type Node = [i64; 3];

/// Dimension, order and ellipticity bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaParams {
    pub n: usize,
    pub sigma: f64,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
}

impl SigmaParams {
    pub fn new(n: usize, sigma: f64, lambda: f64, big_lambda: f64) -> Result<Self> {
        let p = SigmaParams { n, sigma, lambda, big_lambda };
        let issues = p.diagnostics();
        if issues.is_empty() {
            Ok(p)
        } else {
            Err(Error::Domain(issues.join("; ")))
        }
    }

    /// Every violated constraint, as human-readable strings.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(1..=3).contains(&self.n) {
            out.push(format!("dimension {} not in {{1,2,3}}", self.n));
        }
        if !(self.sigma > 0.0 && self.sigma < 2.0) {
            out.push(format!("sigma out of (0,2): {}", self.sigma));
        }
        if !(self.lambda > 0.0) {
            out.push(format!("lambda must be positive: {}", self.lambda));
        }
        if !(self.big_lambda >= self.lambda) {
            out.push(format!(
                "Lambda must be at least lambda: Lambda = {}, lambda = {}",
                self.big_lambda, self.lambda
            ));
        }
        out
    }

    /// Prefactor of the fractional Hessian, `(n+σ-2)(n+σ)/2 · A(n, 2-σ)`.
    pub fn hessian_prefactor(&self) -> f64 {
        hessian_prefactor(self.n, self.sigma)
    }
}

/// Uniform grid on an axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub h: f64,
    pub dims: [usize; 3],
}

impl Grid {
    /// Grid with spacing `h` on `[lo, hi]`; each extent must be a whole
    /// number of cells.
    pub fn new(lo: &[f64], hi: &[f64], h: f64) -> Result<Self> {
        let n = lo.len();
        if n == 0 || n > 3 || hi.len() != n {
            return Err(Error::Domain(format!("grid dimension must be 1..=3, got {n}")));
        }
        if !(h > 0.0) {
            return Err(Error::Domain(format!("grid spacing must be positive: {h}")));
        }
        let mut g = Grid { n, lo: [0.0; 3], hi: [0.0; 3], h, dims: [1; 3] };
        for a in 0..n {
            let cells = (hi[a] - lo[a]) / h;
            let k = cells.round();
            if k < 1.0 || (cells - k).abs() > 1e-6 {
                return Err(Error::Domain(format!(
                    "axis {a}: extent {} is not a positive multiple of h = {h}",
                    hi[a] - lo[a]
                )));
            }
            g.lo[a] = lo[a];
            g.hi[a] = lo[a] + k * h;
            g.dims[a] = k as usize + 1;
        }
        Ok(g)
    }

    /// Cube `[-half_width, half_width]^n` sampled with `points` nodes per axis.
    pub fn cube(n: usize, half_width: f64, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::Domain("a grid needs at least two points per axis".into()));
        }
        let h = 2.0 * half_width / (points - 1) as f64;
        let lo = vec![-half_width; n];
        let hi = vec![half_width; n];
        Grid::new(&lo, &hi, h)
    }

    /// Same box with `h` halved `k` times.
    pub fn refined(&self, k: u32) -> Self {
        let f = 1usize << k;
        let mut g = *self;
        g.h = self.h / f as f64;
        for a in 0..self.n {
            g.dims[a] = (self.dims[a] - 1) * f + 1;
        }
        g
    }

    pub fn len(&self) -> usize {
        self.dims[..self.n].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn strides(&self) -> [usize; 3] {
        let mut s = [0usize; 3];
        let mut acc = 1;
        for a in (0..self.n).rev() {
            s[a] = acc;
            acc *= self.dims[a];
        }
        s
    }

    pub fn index(&self, node: &Node) -> Option<usize> {
        let s = self.strides();
        let mut idx = 0usize;
        for a in 0..self.n {
            if node[a] < 0 || node[a] >= self.dims[a] as i64 {
                return None;
            }
            idx += node[a] as usize * s[a];
        }
        Some(idx)
    }

    pub fn node(&self, mut idx: usize) -> Node {
        let mut out = [0i64; 3];
        for a in (0..self.n).rev() {
            out[a] = (idx % self.dims[a]) as i64;
            idx /= self.dims[a];
        }
        out
    }

    pub fn node_point(&self, node: &Node) -> Point {
        let mut p = [0.0; 3];
        for a in 0..self.n {
            p[a] = self.lo[a] + node[a] as f64 * self.h;
        }
        p
    }

    pub fn point(&self, idx: usize) -> Point {
        self.node_point(&self.node(idx))
    }

    /// Lattice node at `p`, if `p` sits on the lattice to within `1e-7 h`.
    pub fn lattice_node(&self, p: &Point) -> Option<Node> {
        let mut out = [0i64; 3];
        for a in 0..self.n {
            let t = (p[a] - self.lo[a]) / self.h;
            let k = t.round();
            if (t - k).abs() > 1e-7 {
                return None;
            }
            out[a] = k as i64;
        }
        Some(out)
    }

    pub fn contains(&self, p: &Point) -> bool {
        let eps = 1e-12 * self.h;
        (0..self.n).all(|a| p[a] >= self.lo[a] - eps && p[a] <= self.hi[a] + eps)
    }

    /// Diameter of the box.
    pub fn diameter(&self) -> f64 {
        (0..self.n).map(|a| (self.hi[a] - self.lo[a]).powi(2)).sum::<f64>().sqrt()
    }
}

pub fn norm(p: &Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// Closed-form function of a point, used for analytic exteriors.
pub type AnalyticFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// How a field extends beyond its sampled box.
#[derive(Clone)]
pub enum Exterior {
    Zero,
    Constant(f64),
    Analytic(AnalyticFn),
}

impl fmt::Debug for Exterior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exterior::Zero => write!(f, "Zero"),
            Exterior::Constant(c) => write!(f, "Constant({c})"),
            Exterior::Analytic(_) => write!(f, "Analytic(..)"),
        }
    }
}

/// Off-grid reconstruction rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Interp {
    /// Tensor-product linear interpolation; monotone, used by every solver.
    #[default]
    Multilinear,
    /// Tensor-product four-point Lagrange interpolation; for accuracy studies
    /// on smooth fields only, it is not monotone.
    Cubic,
}

/// Scalar function sampled on a grid with a total exterior rule.
#[derive(Clone, Debug)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub exterior: Exterior,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>, exterior: Exterior) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Domain(format!(
                "field has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at node {i}")));
        }
        Ok(Field { grid, values, exterior })
    }

    pub fn zeros(grid: Grid) -> Self {
        Field { grid, values: vec![0.0; grid.len()], exterior: Exterior::Zero }
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: Grid, exterior: Exterior, f: impl Fn(&Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Field { grid, values, exterior }
    }

    /// Samples an analytic function and uses it as the exterior as well.
    pub fn analytic(grid: Grid, f: AnalyticFn) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Field { grid, values, exterior: Exterior::Analytic(f) }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        Field { grid: self.grid, values, exterior: self.exterior.clone() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    /// Value beyond the far cutoff of a quadrature, used by the tail formula.
    /// Analytic exteriors report `fallback`.
    pub fn far_value(&self, fallback: f64) -> f64 {
        match self.exterior {
            Exterior::Zero => 0.0,
            Exterior::Constant(c) => c,
            Exterior::Analytic(_) => fallback,
        }
    }

    /// Value at a lattice node; nodes outside the box follow the exterior rule.
    #[inline]
    pub fn node_value(&self, node: &Node) -> f64 {
        match self.grid.index(node) {
            Some(i) => self.values[i],
            None => match &self.exterior {
                Exterior::Zero => 0.0,
                Exterior::Constant(c) => *c,
                Exterior::Analytic(f) => f(&self.grid.node_point(node)),
            },
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v < self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Value at an arbitrary point.
    ///
    /// Zero and constant exteriors interpolate over the infinite lattice whose
    /// off-box nodes carry the exterior value. Analytic exteriors interpolate
    /// inside the box and evaluate the closed form outside it.
    pub fn value_at(&self, p: &Point, interp: Interp) -> f64 {
        let g = &self.grid;
        if let Exterior::Analytic(f) = &self.exterior {
            if !g.contains(p) {
                return f(p);
            }
        }
        let n = g.n;
        let mut base = [0i64; 3];
        let mut t = [0.0f64; 3];
        for a in 0..n {
            let s = (p[a] - g.lo[a]) / g.h;
            let mut b = s.floor();
            if matches!(self.exterior, Exterior::Analytic(_)) && interp == Interp::Multilinear {
                b = b.min((g.dims[a] - 2) as f64).max(0.0);
            }
            base[a] = b as i64;
            t[a] = s - b;
        }
        match interp {
            Interp::Multilinear => {
                let mut acc = 0.0;
                for corner in 0..(1usize << n) {
                    let mut w = 1.0;
                    let mut node = [0i64; 3];
                    for a in 0..n {
                        let bit = (corner >> a) & 1;
                        node[a] = base[a] + bit as i64;
                        w *= if bit == 1 { t[a] } else { 1.0 - t[a] };
                    }
                    if w != 0.0 {
                        acc += w * self.node_value(&node);
                    }
                }
                acc
            }
            Interp::Cubic => {
                let mut wts = [[0.0f64; 4]; 3];
                for a in 0..n {
                    wts[a] = lagrange4(t[a]);
                }
                let mut acc = 0.0;
                let count = 4usize.pow(n as u32);
                for c in 0..count {
                    let mut w = 1.0;
                    let mut node = [0i64; 3];
                    let mut rem = c;
                    for a in 0..n {
                        let k = rem % 4;
                        rem /= 4;
                        node[a] = base[a] - 1 + k as i64;
                        w *= wts[a][k];
                    }
                    if w != 0.0 {
                        acc += w * self.node_value(&node);
                    }
                }
                acc
            }
        }
    }

    /// Maximum absolute value over nodes on the outermost ring of the box.
    pub fn boundary_sup(&self) -> f64 {
        let g = &self.grid;
        let mut m = 0.0f64;
        for i in 0..g.len() {
            let node = g.node(i);
            let on_edge = (0..g.n).any(|a| node[a] == 0 || node[a] == g.dims[a] as i64 - 1);
            if on_edge {
                m = m.max(self.values[i].abs());
            }
        }
        m
    }
}

/// Weights of four-point Lagrange interpolation at nodes -1, 0, 1, 2 for
/// a fractional position `t` in `[0, 1)`.
fn lagrange4(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// `v(x+y) + v(x-y) - 2 v(x)` with multilinear off-grid reads.
pub fn second_difference(v: &Field, x: &Point, y: &Point) -> f64 {
    second_difference_with(v, x, y, Interp::Multilinear)
}

pub fn second_difference_with(v: &Field, x: &Point, y: &Point, interp: Interp) -> f64 {
    let mut xp = *x;
    let mut xm = *x;
    for a in 0..3 {
        xp[a] += y[a];
        xm[a] -= y[a];
    }
    v.value_at(&xp, interp) + v.value_at(&xm, interp) - 2.0 * v.value_at(x, interp)
}

/// Surface area of the unit sphere in `R^n`.
pub fn sphere_area(n: usize) -> f64 {
    2.0 * PI.powf(n as f64 / 2.0) / gamma(n as f64 / 2.0)
}

/// Volume of the unit ball in `R^n`.
pub fn ball_volume(n: usize) -> f64 {
    sphere_area(n) / n as f64
}

/// Riesz constant `A(n, α) = π^{α - n/2} Γ((n-α)/2) / Γ(α/2)`.
///
/// With this constant the kernel `A |y|^{α-n}` has Fourier multiplier
/// `|ξ|^{-α}` for the transform with phase `e^{2πi x·ξ}`.
pub fn riesz_constant(n: usize, alpha: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("riesz_constant needs n >= 2, got {n}")));
    }
    if !(alpha > 0.0 && alpha < n as f64) {
        return Err(Error::Domain(format!("alpha = {alpha} outside (0, {n})")));
    }
    let nf = n as f64;
    Ok(PI.powf(alpha - nf / 2.0) * gamma((nf - alpha) / 2.0) / gamma(alpha / 2.0))
}

/// Constant `C(n, σ)` of the fractional Laplacian with symbol `|ξ|^σ`
/// (angular frequency), `C = 2^σ Γ((n+σ)/2) / (π^{n/2} |Γ(-σ/2)|)`.
pub fn fraclap_constant(n: usize, sigma: f64) -> f64 {
    let nf = n as f64;
    2f64.powf(sigma) * gamma((nf + sigma) / 2.0) / (PI.powf(nf / 2.0) * gamma(-sigma / 2.0).abs())
}

/// Prefactor `(n+σ-2)(n+σ)/2 · A(n, 2-σ)` of the fractional Hessian.
pub fn hessian_prefactor(n: usize, sigma: f64) -> f64 {
    let nf = n as f64;
    let a = riesz_constant(n, 2.0 - sigma).unwrap_or(f64::NAN);
    (nf + sigma - 2.0) * (nf + sigma) / 2.0 * a
}

/// Symmetric matrix defining the kernel `(2-σ) y^T A y / |y|^{n+σ+2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipticMatrix {
    pub a: DMatrix<f64>,
}

impl EllipticMatrix {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::Domain("matrix must be square and nonempty".into()));
        }
        for i in 0..a.nrows() {
            for j in 0..i {
                if a[(i, j)] != a[(j, i)] {
                    return Err(Error::Domain(format!("matrix not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(EllipticMatrix { a })
    }

    pub fn from_sym(s: &Sym) -> Self {
        EllipticMatrix { a: s.to_dmatrix() }
    }

    pub fn identity(n: usize) -> Self {
        EllipticMatrix { a: DMatrix::identity(n, n) }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        EllipticMatrix { a: DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)) }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.a.trace()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        sym_eigenvalues(&self.a)
    }

    pub fn to_sym(&self) -> Sym {
        Sym::from_dmatrix(&self.a)
    }
}

/// Relative tolerance of the eigenvalue tests.
pub const EIG_TOL: f64 = 1e-12;

/// True iff `A ⪰ 0`, `Tr A ≥ λ` and `A ⪯ Λ Id`.
pub fn admissible(a: &EllipticMatrix, p: &SigmaParams) -> bool {
    let eig = a.eigenvalues();
    let scale = eig.iter().fold(p.big_lambda.max(1.0), |m, e| m.max(e.abs()));
    let tol = EIG_TOL * scale;
    let tr: f64 = eig.iter().sum();
    eig[0] >= -tol && tr >= p.lambda - tol && *eig.last().unwrap() <= p.big_lambda + tol
}

/// `A_σ = A + (Tr A / σ) Id`.
pub fn a_sigma(a: &EllipticMatrix, sigma: f64) -> Result<EllipticMatrix> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("a_sigma needs sigma > 0, got {sigma}")));
    }
    let n = a.n();
    let shift = a.trace() / sigma;
    Ok(EllipticMatrix { a: &a.a + DMatrix::identity(n, n) * shift })
}
