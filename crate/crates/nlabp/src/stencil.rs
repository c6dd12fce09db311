//! Whole-grid evaluation of the moment operators by FFT convolution.
//!
//! At a lattice node `x` the interpolation weights of `v(x ± y)` depend on
//! `y` only, so the quadrature of [`crate::nonlocal_ops::moments`] collapses
//! into a fixed lattice stencil: `W(x) = Σ_m K_m (v(x+m) - v(x)) - 2T ṽ(x)`,
//! where `ṽ = v - c` and `c` is the exterior value. For zero and constant
//! exteriors this reproduces the pointwise path up to rounding. The matrix
//! entries `K_m` are nonnegative combinations of `θθᵀ`, so the discrete
//! operators stay degenerate elliptic.

use crate::base::{fraclap_constant, Exterior, Field, Grid, Interp};
use crate::error::{Error, Result};
use crate::fft::{fast_len, FftNd, C64};
use crate::linalg::Sym;
use crate::quadrature::{near_directions, NearOrder, QuadraturePlan};
use rayon::prelude::*;

/// Interpolation weights of the point `t` (in lattice units, relative to the
/// origin node) over lattice offsets.
pub(crate) fn interp_weights(n: usize, t: &[f64; 3], interp: Interp, out: &mut Vec<([i64; 3], f64)>) {
    out.clear();
    let mut base = [0i64; 3];
    let mut frac = [0.0; 3];
    for a in 0..n {
        let b = t[a].floor();
        base[a] = b as i64;
        frac[a] = t[a] - b;
    }
    match interp {
        Interp::Multilinear => {
            for corner in 0..(1usize << n) {
                let mut w = 1.0;
                let mut node = [0i64; 3];
                for a in 0..n {
                    let bit = (corner >> a) & 1;
                    node[a] = base[a] + bit as i64;
                    w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                }
                if w != 0.0 {
                    out.push((node, w));
                }
            }
        }
        Interp::Cubic => {
            let l = |s: f64| {
                [
                    -s * (s - 1.0) * (s - 2.0) / 6.0,
                    (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
                    -(s + 1.0) * s * (s - 2.0) / 2.0,
                    (s + 1.0) * s * (s - 1.0) / 6.0,
                ]
            };
            let mut wts = [[0.0; 4]; 3];
            for a in 0..n {
                wts[a] = l(frac[a]);
            }
            for c in 0..4usize.pow(n as u32) {
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
                    out.push((node, w));
                }
            }
        }
    }
}

/// Lattice kernels `K_m` for several scalar components.
struct KernelBuilder {
    n: usize,
    radius: i64,
    side: usize,
    comps: usize,
    data: Vec<f64>,
}

impl KernelBuilder {
    fn new(n: usize, radius: usize, comps: usize) -> Self {
        let side = 2 * radius + 1;
        KernelBuilder { n, radius: radius as i64, side, comps, data: vec![0.0; comps * side.pow(n as u32)] }
    }

    fn slot(&self, m: &[i64; 3]) -> usize {
        let mut idx = 0usize;
        for a in 0..self.n {
            debug_assert!(m[a].abs() <= self.radius);
            idx = idx * self.side + (m[a] + self.radius) as usize;
        }
        idx
    }

    fn add(&mut self, m: &[i64; 3], vals: &[f64]) {
        let s = self.slot(m) * self.comps;
        for (c, v) in vals.iter().enumerate() {
            self.data[s + c] += v;
        }
    }

    fn sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.comps];
        for chunk in self.data.chunks(self.comps) {
            for (o, v) in out.iter_mut().zip(chunk) {
                *o += v;
            }
        }
        out
    }
}

/// Which quantity the components of a stencil bank represent.
#[derive(Clone, Debug, PartialEq)]
pub enum BankKind {
    /// Components of `W` in the order of [`sym_components`].
    Moments,
    /// One 1-D lattice fractional Laplacian per lattice direction.
    Directional(Vec<[i64; 3]>),
}

/// Index pairs of the stored components of a symmetric matrix.
pub fn sym_components(n: usize) -> Vec<(usize, usize)> {
    match n {
        1 => vec![(0, 0)],
        2 => vec![(0, 0), (1, 1), (0, 1)],
        _ => vec![(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)],
    }
}

/// Precomputed spectra of a family of lattice stencils on a grid.
pub struct StencilBank {
    pub grid: Grid,
    pub kind: BankKind,
    pub radius: usize,
    pub sigma: f64,
    comps: usize,
    fft: FftNd,
    fft_dims: [usize; 3],
    /// Spectra packed in pairs: `K̂_{2k} + i K̂_{2k+1}`.
    spectra: Vec<Vec<C64>>,
    /// `Σ_m K_m + 2 T` per component.
    diag: Vec<f64>,
}

impl StencilBank {
    /// Bank producing the moment matrix `W` at every node.
    pub fn moments(grid: &Grid, sigma: f64, plan: &QuadraturePlan) -> Result<Self> {
        let n = grid.n;
        if plan.n != n || (plan.h - grid.h).abs() > 1e-12 * grid.h {
            return Err(Error::Domain("plan does not match grid".into()));
        }
        if n < 2 {
            return Err(Error::Domain("moment stencils need n >= 2".into()));
        }
        let comps_idx = sym_components(n);
        let comps = comps_idx.len();
        let radius = plan.lattice_radius();
        let mut kb = KernelBuilder::new(n, radius, comps);
        let h = grid.h;
        let e = -(n as f64) - sigma;
        let mut vals = vec![0.0; comps];

        // near field
        let f = plan.near_factor(sigma);
        for (d, wd) in near_directions(n) {
            let len2 = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64;
            let th = {
                let l = len2.sqrt();
                [d[0] as f64 / l, d[1] as f64 / l, d[2] as f64 / l]
            };
            let base = f * wd / (len2 * h * h);
            let taps: Vec<(i64, f64)> = match plan.spec.near_order {
                NearOrder::Second => vec![(1, 1.0)],
                NearOrder::Fourth => vec![(1, 16.0 / 12.0), (2, -1.0 / 12.0)],
            };
            for (k, c) in taps {
                for (c_i, (i, j)) in comps_idx.iter().enumerate() {
                    vals[c_i] = base * c * th[*i] * th[*j];
                }
                for sgn in [1i64, -1] {
                    let m = [sgn * k * d[0], sgn * k * d[1], sgn * k * d[2]];
                    kb.add(&m, &vals);
                }
            }
        }

        // shells
        let mut wts = Vec::new();
        for nd in &plan.nodes {
            let k = nd.w * nd.r.powf(e);
            for (c_i, (i, j)) in comps_idx.iter().enumerate() {
                vals[c_i] = k * nd.theta[*i] * nd.theta[*j];
            }
            for sgn in [1.0, -1.0] {
                let t = [sgn * nd.y[0] / h, sgn * nd.y[1] / h, sgn * nd.y[2] / h];
                interp_weights(n, &t, plan.spec.interp, &mut wts);
                for (m, w) in &wts {
                    let scaled: Vec<f64> = vals.iter().map(|v| v * w).collect();
                    kb.add(m, &scaled);
                }
            }
        }

        let tail = plan.tail_mass(sigma);
        let mut diag = kb.sums();
        for (c_i, (i, j)) in comps_idx.iter().enumerate() {
            if i == j {
                diag[c_i] += 2.0 * tail / n as f64;
            }
        }
        Self::finish(grid, BankKind::Moments, radius, sigma, kb, diag)
    }

    /// Bank of 1-D lattice fractional Laplacians along integer directions,
    /// each normalized to the symbol `-|ξ·τ|^σ` and truncated at `far_cutoff`.
    pub fn directional(grid: &Grid, sigma: f64, dirs: &[[i64; 3]], far_cutoff: f64) -> Result<Self> {
        let n = grid.n;
        if dirs.is_empty() {
            return Err(Error::Domain("no directions".into()));
        }
        let h = grid.h;
        let comps = dirs.len();
        let mut reach = 0usize;
        let mut per_dir = Vec::with_capacity(comps);
        for d in dirs {
            let ell = h * ((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64).sqrt();
            let (w, big_k) = line_weights(sigma, ell, far_cutoff);
            let dmax = d[..n].iter().map(|c| c.unsigned_abs() as usize).max().unwrap_or(1);
            reach = reach.max(big_k * dmax);
            per_dir.push((w, big_k, ell));
        }
        let mut kb = KernelBuilder::new(n, reach, comps);
        let mut diag = vec![0.0; comps];
        let c1 = 0.5 * fraclap_constant(1, sigma);
        for (c_i, (d, (w, big_k, ell))) in dirs.iter().zip(&per_dir).enumerate() {
            let mut vals = vec![0.0; comps];
            for k in 1..=*big_k {
                vals[c_i] = c1 * w[k];
                for sgn in [1i64, -1] {
                    let m = [sgn * k as i64 * d[0], sgn * k as i64 * d[1], sgn * k as i64 * d[2]];
                    kb.add(&m, &vals);
                }
            }
            let l = *big_k as f64 * ell;
            diag[c_i] = 2.0 * c1 * w[1..].iter().sum::<f64>() + c1 * 4.0 * l.powf(-sigma) / sigma;
        }
        Self::finish(grid, BankKind::Directional(dirs.to_vec()), reach, sigma, kb, diag)
    }

    fn finish(grid: &Grid, kind: BankKind, radius: usize, sigma: f64, kb: KernelBuilder, diag: Vec<f64>) -> Result<Self> {
        let n = grid.n;
        let comps = kb.comps;
        let mut fft_dims = [1usize; 3];
        for a in 0..n {
            fft_dims[a] = fast_len(grid.dims[a] + radius);
        }
        let fft = FftNd::new(&fft_dims[..n]);
        let total = fft.len();
        let side = kb.side;
        let r = radius as i64;
        let npairs = comps.div_ceil(2);
        let mut spectra = Vec::with_capacity(npairs);
        for pair in 0..npairs {
            let mut buf = vec![C64::new(0.0, 0.0); total];
            for (slot, chunk) in kb.data.chunks(comps).enumerate() {
                let re = chunk[2 * pair];
                let im = if 2 * pair + 1 < comps { chunk[2 * pair + 1] } else { 0.0 };
                if re == 0.0 && im == 0.0 {
                    continue;
                }
                let mut rem = slot;
                let mut idx = 0usize;
                let mut stride = 1usize;
                for a in (0..n).rev() {
                    let m = (rem % side) as i64 - r;
                    rem /= side;
                    let pos = m.rem_euclid(fft_dims[a] as i64) as usize;
                    idx += pos * stride;
                    stride *= fft_dims[a];
                }
                buf[idx] += C64::new(re, im);
            }
            // Each kernel is even, so its transform is real; the packed
            // transform therefore holds K̂_re in the real part and K̂_im in
            // the imaginary part.
            fft.forward(&mut buf);
            spectra.push(buf);
        }
        Ok(StencilBank { grid: *grid, kind, radius, sigma, comps, fft, fft_dims, spectra, diag })
    }

    pub fn components(&self) -> usize {
        self.comps
    }

    /// Sum of the stencil weights per component, including the tail.
    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Applies every component to `v`; returns `out[c][node]`.
    pub fn apply(&self, v: &Field) -> Result<Vec<Vec<f64>>> {
        if v.grid != self.grid {
            return Err(Error::Domain("field grid differs from stencil grid".into()));
        }
        let c = match v.exterior {
            Exterior::Zero => 0.0,
            Exterior::Constant(c) => c,
            Exterior::Analytic(_) => {
                return Err(Error::Domain("stencil sweeps need a zero or constant exterior".into()))
            }
        };
        let g = &self.grid;
        let n = g.n;
        let total = self.fft.len();
        let mut fs = [0usize; 3];
        let mut acc = 1;
        for a in (0..n).rev() {
            fs[a] = acc;
            acc *= self.fft_dims[a];
        }
        let map: Vec<usize> = (0..g.len())
            .map(|i| {
                let node = g.node(i);
                (0..n).map(|a| node[a] as usize * fs[a]).sum()
            })
            .collect();
        let mut vhat = vec![C64::new(0.0, 0.0); total];
        for (i, &k) in map.iter().enumerate() {
            vhat[k] = C64::new(v.values[i] - c, 0.0);
        }
        self.fft.forward(&mut vhat);
        let scale = 1.0 / total as f64;
        let mut out = vec![vec![0.0; g.len()]; self.comps];
        for (pair, spec) in self.spectra.iter().enumerate() {
            let mut buf: Vec<C64> = vhat.par_iter().zip(spec.par_iter()).map(|(a, b)| a * b).collect();
            self.fft.inverse(&mut buf);
            let c0 = 2 * pair;
            for (i, &k) in map.iter().enumerate() {
                let vt = v.values[i] - c;
                out[c0][i] = buf[k].re * scale - self.diag[c0] * vt;
                if c0 + 1 < self.comps {
                    out[c0 + 1][i] = buf[k].im * scale - self.diag[c0 + 1] * vt;
                }
            }
        }
        Ok(out)
    }

    /// Moment matrix at node `i` from the output of [`apply`](Self::apply).
    pub fn sym_at(&self, out: &[Vec<f64>], i: usize) -> Sym {
        let n = self.grid.n;
        let mut s = Sym::zeros(n);
        for (c, (a, b)) in sym_components(n).iter().enumerate() {
            s.m[*a][*b] = out[c][i];
            s.m[*b][*a] = out[c][i];
        }
        s
    }
}

/// Weights `w_k`, `k = 1..=K`, of the 1-D lattice quadrature
/// `∫_{|s|>0} δ(s)|s|^{-1-σ} ds ≈ Σ_k w_k δ(kℓ)` with `δ` linear between
/// lattice points, quadratic below `ℓ`, and `K = ⌈R/ℓ⌉`. The tail beyond
/// `Kℓ` is left to the caller. Index 0 is unused.
pub fn line_weights(sigma: f64, ell: f64, far_cutoff: f64) -> (Vec<f64>, usize) {
    let big_k = (far_cutoff / ell).ceil().max(2.0) as usize;
    let mut w = vec![0.0; big_k + 1];
    // near field: δ(s) ≈ s² δ(ℓ)/ℓ², both sides
    w[1] += 2.0 * ell.powf(-sigma) / (2.0 - sigma);
    let (gx, gw) = crate::quadrature::gauss_legendre(6);
    for k in 1..big_k {
        let (a, b) = (k as f64 * ell, (k + 1) as f64 * ell);
        let (mut left, mut right) = (0.0, 0.0);
        for (x, wx) in gx.iter().zip(&gw) {
            let s = a + 0.5 * (b - a) * (x + 1.0);
            let t = (s - a) / (b - a);
            let ker = 0.5 * (b - a) * wx * s.powf(-1.0 - sigma);
            left += ker * (1.0 - t);
            right += ker * t;
        }
        w[k] += 2.0 * left;
        w[k + 1] += 2.0 * right;
    }
    (w, big_k)
}

/// Lattice directions with max-norm at most 2 (8 in 2-D); in 3-D the 13
/// neighbour axes of the unit cube.
pub fn lattice_directions(n: usize) -> Vec<[i64; 3]> {
    match n {
        1 => vec![[1, 0, 0]],
        2 => vec![[1, 0, 0], [0, 1, 0], [1, 1, 0], [1, -1, 0], [2, 1, 0], [1, 2, 0], [2, -1, 0], [1, -2, 0]],
        _ => near_directions(3).into_iter().map(|(d, _)| d).collect(),
    }
}

/// Pointwise counterpart of a directional bank component, for dual-route
/// checks: the 1-D lattice fractional Laplacian of `v` at node `i` along `d`.
pub fn directional_lattice_op(v: &Field, i: usize, d: &[i64; 3], sigma: f64, far_cutoff: f64) -> f64 {
    let g = &v.grid;
    let node = g.node(i);
    let ell = g.h * ((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64).sqrt();
    let (w, big_k) = line_weights(sigma, ell, far_cutoff);
    let v0 = v.node_value(&node);
    let c = v.far_value(0.0);
    let mut acc = 0.0;
    for k in 1..=big_k {
        let mut p = node;
        let mut m = node;
        for a in 0..g.n {
            p[a] += k as i64 * d[a];
            m[a] -= k as i64 * d[a];
        }
        acc += w[k] * (v.node_value(&p) + v.node_value(&m) - 2.0 * v0);
    }
    let l = big_k as f64 * ell;
    acc += 4.0 * (c - v0) * l.powf(-sigma) / sigma;
    0.5 * fraclap_constant(1, sigma) * acc
}
