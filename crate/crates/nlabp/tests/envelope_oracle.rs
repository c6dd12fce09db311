mod common;

use common::{grid2, pit, plan};
use nlabp::base::{Exterior, Field, Grid, Point, SigmaParams};
use nlabp::envelope::{
    contact_set, convex_envelope, geometric_schedule, inf_convolution, penalty_beta, solve_dirichlet, solve_obstacle, PenaltyProfile, PenaltySpec,
};
use std::sync::Arc;

fn params(sigma: f64) -> SigmaParams {
    SigmaParams::new(2, sigma, 1.0, 2.0).unwrap()
}

#[test]
fn penalty_profiles() {
    let q = PenaltySpec::new(0.5, 2.0).unwrap();
    assert_eq!(penalty_beta(0.0, &q), 2.0);
    assert_eq!(penalty_beta(0.25, &q), 0.5);
    assert_eq!(penalty_beta(0.5, &q), 0.0);
    assert_eq!(penalty_beta(3.0, &q), 0.0);
    assert_eq!(penalty_beta(-0.5, &q), 8.0);
    let l = PenaltySpec { profile: PenaltyProfile::Linear, ..q };
    assert_eq!(penalty_beta(0.25, &l), 1.0);
    assert_eq!(penalty_beta(-0.5, &l), 4.0);
    assert!(PenaltySpec::new(0.0, 1.0).is_err());
    assert!(PenaltySpec::new(0.1, -1.0).is_err());
}

#[test]
fn penalty_is_convex_and_nonincreasing() {
    let q = PenaltySpec::new(0.3, 1.7).unwrap();
    let s: Vec<f64> = (0..200).map(|k| -0.6 + k as f64 * 0.006).collect();
    let b: Vec<f64> = s.iter().map(|x| penalty_beta(*x, &q)).collect();
    for w in b.windows(3) {
        assert!(w[1] <= w[0]);
        assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-12);
    }
}

#[test]
fn geometric_schedule_halves() {
    assert_eq!(geometric_schedule(0.4, 3), vec![0.4, 0.2, 0.1]);
}

#[test]
fn contact_set_examples() {
    let g = Grid::cube(2, 2.0, 9).unwrap();
    let u = Field::from_fn(g, Exterior::Zero, |p| p[0]);
    let gamma = Field::from_fn(g, Exterior::Zero, |p| if p[0] > 0.0 { 0.0 } else { p[0] });
    let c = contact_set(&gamma, &u, 1e-12);
    for i in 0..g.len() {
        let p = g.point(i);
        let inside = (p[0] * p[0] + p[1] * p[1]).sqrt() < 1.0;
        assert_eq!(c[i], inside && p[0] <= 0.0, "{p:?}");
    }
}

#[test]
fn zero_obstacle_gives_zero_envelope() {
    let g = grid2(33);
    let u = Field::zeros(g);
    let r = solve_obstacle(&u, &params(1.0), &plan(&g), &PenaltySpec::new(0.1, 1.0).unwrap(), &geometric_schedule(0.1, 3)).unwrap();
    assert!(r.gamma.values.iter().all(|v| *v == 0.0));
    assert_eq!(r.iterations, 0);
}

#[test]
fn envelope_of_a_pit() {
    let g = grid2(33);
    let q = plan(&g);
    let p = params(1.0);
    let u = Field::from_fn(g, Exterior::Zero, pit);
    let schedule = geometric_schedule(0.05, 3);
    let r = solve_obstacle(&u, &p, &q, &PenaltySpec::new(0.05, 1.0).unwrap(), &schedule).unwrap();
    let eps = schedule[2];
    for i in 0..g.len() {
        let x = g.point(i);
        let gam = r.gamma.values[i];
        assert!(gam <= 1e-12, "Γ is nonpositive");
        if (x[0] * x[0] + x[1] * x[1]).sqrt() < 1.0 {
            assert!(gam <= u.values[i] + 1e-12, "Γ lies below the obstacle");
        }
    }
    // The minimum of the pit is touched.
    let centre = g.index(&[16, 16, 0]).unwrap();
    assert!(r.contact[centre]);
    assert!((r.gamma.values[centre] + 1.0).abs() <= eps);
    // Levels rise toward the obstacle as the penalty tightens.
    for w in r.levels.windows(2) {
        assert!(w[1].iter().zip(&w[0]).all(|(b, a)| *b >= a - 1e-6));
    }
    // A positive shift of the obstacle is removed before solving.
    let shifted = u.map(|v| v + 0.3);
    let rs = solve_obstacle(&shifted, &p, &q, &PenaltySpec::new(0.05, 1.0).unwrap(), &schedule).unwrap();
    assert!((rs.obstacle_shift - 0.3).abs() < 1e-12);
    let diff = rs.gamma.values.iter().zip(&r.gamma.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-9, "{diff}");
}

#[test]
fn obstacle_solver_rejects_bad_input() {
    let g = grid2(17);
    let q = plan(&g);
    let u = Field::from_fn(g, Exterior::Zero, pit);
    let spec = PenaltySpec::new(0.1, 1.0).unwrap();
    assert!(solve_obstacle(&u, &params(1.0), &q, &spec, &[]).is_err());
    assert!(solve_obstacle(&u, &params(1.0), &q, &spec, &[0.1, 0.2]).is_err());
    let small = Grid::cube(2, 2.0, 17).unwrap();
    let us = Field::from_fn(small, Exterior::Zero, pit);
    assert!(solve_obstacle(&us, &params(1.0), &plan(&small), &spec, &[0.1]).is_err());
}

#[test]
fn dirichlet_with_zero_data_is_zero() {
    let g = grid2(33);
    let u = solve_dirichlet(&Field::zeros(g), &params(1.0), &plan(&g)).unwrap();
    assert!(u.values.iter().all(|v| *v == 0.0));
}

#[test]
fn dirichlet_solution_is_symmetric_and_homogeneous() {
    let g = grid2(33);
    let q = plan(&g);
    let p = params(1.0);
    let one = Field::from_fn(g, Exterior::Zero, |_| 1.0);
    let two = one.map(|v| 2.0 * v);
    let u1 = solve_dirichlet(&one, &p, &q).unwrap();
    let u2 = solve_dirichlet(&two, &p, &q).unwrap();
    let c = 16i64;
    for i in 0..g.len() {
        let x = g.point(i);
        let inside = (x[0] * x[0] + x[1] * x[1]).sqrt() < 1.0;
        if !inside {
            assert_eq!(u1.values[i], 0.0);
            continue;
        }
        assert!(u1.values[i] < 0.0);
        let m = g.node(i);
        // Axis reflections are symmetries of the quadrature; the diagonal
        // swap holds only up to the angular rule's anisotropy.
        for (mirror, tol) in [([2 * c - m[0], m[1], 0], 1e-5), ([m[0], 2 * c - m[1], 0], 1e-5), ([m[1], m[0], 0], 2e-3 * u1.values[i].abs())] {
            let j = g.index(&mirror).unwrap();
            let d = (u1.values[i] - u1.values[j]).abs();
            assert!(d < tol, "{m:?} vs {mirror:?}: {d}");
        }
        // M⁻ is positively homogeneous, so doubling f doubles u up to the
        // residual tolerance divided by the smallest stencil eigenvalue.
        assert!((u2.values[i] - 2.0 * u1.values[i]).abs() < 1e-4);
    }
    let neg = one.map(|v| -v);
    assert!(solve_dirichlet(&neg, &p, &q).is_err());
}

#[test]
fn convex_functions_are_their_own_envelope() {
    let g = Grid::cube(2, 1.5, 31).unwrap();
    let v = Field::from_fn(g, Exterior::Zero, |p| 0.5 * (p[0] - 0.2).powi(2) + p[1] * p[1] + 0.3 * p[0] * p[1]);
    let e = convex_envelope(&v, 1.0);
    let err = e.values.iter().zip(&v.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-2, "{err}");
    assert!(e.values.iter().zip(&v.values).all(|(a, b)| a <= b));
}

#[test]
fn envelope_of_a_double_well_in_one_dimension() {
    let g = Grid::cube(1, 2.0, 401).unwrap();
    let well = |p: &Point| (p[0] * p[0] - 1.0).powi(2);
    let v = Field::from_fn(g, Exterior::Zero, well);
    let e = convex_envelope(&v, 2.0);
    for i in 0..g.len() {
        let x = g.point(i)[0];
        let expect = if x.abs() <= 1.0 { 0.0 } else { well(&[x, 0.0, 0.0]) };
        assert!((e.values[i] - expect).abs() < 1e-12, "x = {x}");
    }
}

#[test]
fn envelope_of_a_double_well_in_two_dimensions() {
    let g = Grid::cube(2, 1.2, 49).unwrap();
    let well = |p: &Point| (p[0] * p[0] - 0.25).powi(2) + 0.5 * p[1] * p[1];
    let v = Field::from_fn(g, Exterior::Zero, well);
    let e = convex_envelope(&v, 1.0);
    for i in 0..g.len() {
        let x = g.point(i);
        if (x[0] * x[0] + x[1] * x[1]).sqrt() > 0.9 {
            continue;
        }
        // Inside the ball the hull flattens the well in x₁ for |x₁| ≤ 1/2.
        let expect = if x[0].abs() <= 0.5 { 0.5 * x[1] * x[1] } else { well(&x) };
        assert!(e.values[i] <= v.values[i]);
        assert!((e.values[i] - expect).abs() < 0.02, "{x:?}: {} vs {expect}", e.values[i]);
    }
}

#[test]
fn inf_convolution_of_a_quadratic() {
    let g = Grid::cube(2, 2.0, 81).unwrap();
    let eps = 0.3;
    let v = Field::from_fn(g, Exterior::Zero, |p| 0.5 * (p[0] * p[0] + p[1] * p[1]));
    let w = inf_convolution(&v, eps).unwrap();
    // The continuous minimiser x/(1+ε) is at most h/2 from a node per axis.
    let tol = 2.0 * 0.5 * (1.0 + 1.0 / eps) * (g.h / 2.0).powi(2);
    for i in 0..g.len() {
        let x = g.point(i);
        let exact = (x[0] * x[0] + x[1] * x[1]) / (2.0 * (1.0 + eps));
        assert!(w.values[i] >= exact - 1e-12);
        assert!(w.values[i] - exact <= tol);
    }
}

#[test]
fn inf_convolution_of_the_absolute_value_is_huber() {
    let g = Grid::cube(1, 2.0, 401).unwrap();
    let eps = 0.25;
    let v = Field::analytic(g, Arc::new(|p| p[0].abs()));
    let w = inf_convolution(&v, eps).unwrap();
    for i in 0..g.len() {
        let x = g.point(i)[0];
        let huber = if x.abs() <= eps { x * x / (2.0 * eps) } else { x.abs() - eps / 2.0 };
        assert!((w.values[i] - huber).abs() < 1e-12, "x = {x}");
    }
}

#[test]
fn inf_convolution_fixes_constants_and_orders() {
    let g = Grid::cube(2, 1.0, 21).unwrap();
    let c = Field::from_fn(g, Exterior::Zero, |_| -0.7);
    let w = inf_convolution(&c, 0.1).unwrap();
    assert!(w.values.iter().all(|v| (*v + 0.7).abs() < 1e-15));
    let v = Field::from_fn(g, Exterior::Zero, |p| (3.0 * p[0]).sin() + p[1].abs());
    let w = inf_convolution(&v, 0.05).unwrap();
    assert!(w.values.iter().zip(&v.values).all(|(a, b)| *a <= b + 1e-12));
    assert!(inf_convolution(&v, 0.0).is_err());
}
