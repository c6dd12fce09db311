mod common;

use common::{grid2, pit};
use nlabp::base::{norm, riesz_constant, Exterior, Field, Grid, SigmaParams};
use nlabp::potential::{c11_seminorm, decay_radius, interpolation_check, mass, potential_on, regularized_riesz_kernel, riesz_potential};

// 3 + 6·√2, the decay radius for n = 3, σ = 1.
const DECAY_3_1: f64 = 11.4852813742385702928101323453;

fn params(n: usize, sigma: f64) -> SigmaParams {
    SigmaParams::new(n, sigma, 1.0, 2.0).unwrap()
}

#[test]
fn regularized_kernel_centre_value() {
    // A(2,1) = 1, so Q(0) = (n+σ)α²/(2α^{n+σ}) = 3·0.01/0.002.
    let q0 = regularized_riesz_kernel(&[0.0; 3], 0.1, &params(2, 1.0));
    assert!((q0 - 15.0).abs() < 1e-12, "{q0}");
}

#[test]
fn regularized_kernel_is_c1_across_the_radius() {
    for (n, sigma, alpha) in [(2, 1.0, 0.1), (2, 0.4, 0.05), (3, 1.5, 0.2), (3, 0.7, 0.1)] {
        let p = params(n, sigma);
        let a = riesz_constant(n, 2.0 - sigma).unwrap();
        let k = |r: f64| regularized_riesz_kernel(&[r, 0.0, 0.0], alpha, &p);
        let exact = a * alpha.powf(-(n as f64 - 2.0 + sigma));
        assert!((k(alpha) / exact - 1.0).abs() < 1e-12);
        let d = 1e-7 * alpha;
        let inner = (k(alpha - d) - k(alpha - 2.0 * d)) / d;
        let outer = (k(alpha + 2.0 * d) - k(alpha + d)) / d;
        assert!((inner / outer - 1.0).abs() < 1e-4, "n={n} σ={sigma}: {inner} vs {outer}");
        // Radially decreasing on both sides.
        assert!(k(0.0) > k(0.5 * alpha) && k(0.5 * alpha) > k(alpha) && k(alpha) > k(2.0 * alpha));
    }
}

#[test]
fn decay_radius_values() {
    assert!((decay_radius(&params(2, 1.0)) - 15.0).abs() < 1e-12);
    assert!((decay_radius(&params(3, 1.0)) - DECAY_3_1).abs() < 1e-12);
}

#[test]
fn seminorm_of_polynomials() {
    let g = Grid::cube(2, 1.0, 21).unwrap();
    let quad = Field::from_fn(g, Exterior::Zero, |p| p[0] * p[0] + p[1] * p[1]);
    assert!((c11_seminorm(&quad, usize::MAX) - 2.0).abs() < 1e-10);
    let affine = Field::from_fn(g, Exterior::Zero, |p| 1.0 + 3.0 * p[0] - p[1]);
    assert!(c11_seminorm(&affine, usize::MAX) < 1e-10);
    let saddle = Field::from_fn(g, Exterior::Zero, |p| p[0] * p[0] - 3.0 * p[1] * p[1]);
    assert!((c11_seminorm(&saddle, usize::MAX) - 6.0).abs() < 1e-9);
}

#[test]
fn zero_measure_has_zero_potential() {
    let g = grid2(33);
    let pf = riesz_potential(&Field::zeros(g), &params(2, 1.0), None).unwrap();
    assert!(pf.p.values.iter().all(|v| *v == 0.0));
    let r = interpolation_check(&Field::zeros(g), &pf, &params(2, 1.0));
    assert!(r.ratio.is_none() && r.rho_star.is_none());
}

#[test]
fn point_mass_potential_is_the_kernel() {
    for (n, sigma, points) in [(2usize, 1.0, 41usize), (2, 0.3, 41), (3, 1.2, 21)] {
        let g = Grid::cube(n, 1.0, points).unwrap();
        let centre = (points / 2) as i64;
        let mut gamma = Field::zeros(g);
        let c = g.index(&[centre, centre, if n == 3 { centre } else { 0 }]).unwrap();
        gamma.values[c] = 1.0;
        // A target box three times as wide, aligned with the source lattice.
        let half = 3.0;
        let target = Grid::new(&vec![-half; n], &vec![half; n], g.h).unwrap();
        let p = params(n, sigma);
        let pot = potential_on(&gamma, &p, g.h, &target).unwrap();
        let a = riesz_constant(n, 2.0 - sigma).unwrap();
        let cell = g.h.powi(n as i32);
        for i in 0..target.len() {
            let x = target.point(i);
            let r = norm(&x);
            if r < 10.0 * g.h {
                continue;
            }
            // Cell averaging adds h²ΔK/24 = s(s+2-n)h²/(24r²)·K with s = n-2+σ.
            let s = n as f64 - 2.0 + sigma;
            let k = cell * a * r.powf(-s) * (1.0 + s * (s + 2.0 - n as f64) * g.h * g.h / (24.0 * r * r));
            assert!((pot.values[i] / k - 1.0).abs() < 5e-5, "n={n} σ={sigma} x={x:?}: {}", pot.values[i] / k);
        }
    }
}

#[test]
fn potential_is_linear_and_restricts_consistently() {
    let g = grid2(33);
    let p = params(2, 1.3);
    let a = Field::from_fn(g, Exterior::Zero, pit);
    let b = Field::from_fn(g, Exterior::Zero, |x| pit(&[2.0 * x[0] - 0.4, 2.0 * x[1], 0.0]));
    let sum = a.with_values(a.values.iter().zip(&b.values).map(|(x, y)| 2.0 * x - y).collect());
    let pa = riesz_potential(&a, &p, None).unwrap();
    let pb = riesz_potential(&b, &p, None).unwrap();
    let ps = riesz_potential(&sum, &p, None).unwrap();
    let scale = ps.p.sup_norm();
    for i in 0..g.len() {
        assert!((ps.p.values[i] - (2.0 * pa.p.values[i] - pb.p.values[i])).abs() < 1e-12 * scale);
    }
    // A sub-box of the source lattice gets the same values.
    let sub = Grid::new(&[-1.0, -0.8], &[1.2, 0.6], g.h).unwrap();
    let direct = potential_on(&a, &p, g.h, &sub).unwrap();
    for i in 0..sub.len() {
        let j = g.index(&g.lattice_node(&sub.point(i)).unwrap()).unwrap();
        assert!((direct.values[i] - pa.p.values[j]).abs() < 1e-12 * pa.p.sup_norm());
    }
}

#[test]
fn potential_rejects_bad_input() {
    let g = grid2(17);
    let p = params(2, 1.0);
    let mut edge = Field::zeros(g);
    edge.values[0] = -1.0;
    assert!(riesz_potential(&edge, &p, None).is_err());
    let inner = Field::from_fn(g, Exterior::Zero, pit);
    assert!(riesz_potential(&inner, &p, Some(0.0)).is_err());
    let shifted = Grid::new(&[-1.0, -1.0], &[1.0, 1.0], g.h).unwrap();
    assert!(potential_on(&inner, &p, g.h, &shifted).is_err());
    assert!(riesz_potential(&inner, &params(3, 1.0), None).is_err());
}

#[test]
fn interpolation_minimiser_matches_golden_section() {
    let g = grid2(33);
    let p = params(2, 0.8);
    let gamma = Field::from_fn(g, Exterior::Zero, pit);
    let pf = riesz_potential(&gamma, &p, None).unwrap();
    let r = interpolation_check(&gamma, &pf, &p);
    let (star, gold) = (r.rho_star.unwrap(), r.rho_golden.unwrap());
    assert!((gold / star - 1.0).abs() < 1e-6, "{gold} vs {star}");
    let a = 2.0 * r.p_sup;
    let b = r.c11;
    let s = p.sigma;
    let at = |rho: f64| a / (2.0 - s) * rho.powf(-(2.0 - s)) + b / s * rho.powf(s);
    assert!((at(star) / r.min_value.unwrap() - 1.0).abs() < 1e-12);
    assert!(r.ratio.unwrap() > 0.0);
}

#[test]
fn mass_of_the_pit() {
    // ∫_{B₁} -(1-|x|²)⁴ dx = -π/5 in the plane.
    let g = Grid::cube(2, 1.2, 241).unwrap();
    let m = mass(&Field::from_fn(g, Exterior::Zero, pit));
    assert!((m + std::f64::consts::PI / 5.0).abs() < 1e-5, "{m}");
}
