mod common;

use nalgebra::{DMatrix, Rotation2};
use nlabp::base::{a_sigma, admissible, riesz_constant, second_difference, EllipticMatrix, Exterior, Field, Grid, SigmaParams};
use nlabp::certify::det_inf_detail;
use nlabp::envelope::{inf_convolution, penalty_beta, PenaltySpec};
use nlabp::linalg::Sym;
use nlabp::nonlocal_ops::{frac_laplacian, trace_min};
use proptest::prelude::*;
use std::sync::Arc;

fn coord() -> impl Strategy<Value = f64> {
    -1.0..1.0f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn second_difference_is_even_and_kills_affine(
        c in prop::array::uniform3(-2.0..2.0f64),
        ix in 0usize..441,
        y in prop::array::uniform2(coord()),
    ) {
        let g = Grid::cube(2, 1.0, 21).unwrap();
        let x = g.point(ix);
        let affine = Field::analytic(g, Arc::new(move |p| c[0] + c[1] * p[0] + c[2] * p[1]));
        let yy = [y[0], y[1], 0.0];
        prop_assert!(second_difference(&affine, &x, &yy).abs() < 1e-12);
        let bump = Field::from_fn(g, Exterior::Zero, common::pit);
        let minus = [-y[0], -y[1], 0.0];
        prop_assert!((second_difference(&bump, &x, &yy) - second_difference(&bump, &x, &minus)).abs() < 1e-14);
    }

    #[test]
    fn admissibility_is_rotation_invariant(
        d0 in 0.0..2.5f64, d1 in 0.0..2.5f64, off in -1.0..1.0f64, theta in 0.0..6.3f64,
    ) {
        let p = SigmaParams::new(2, 1.0, 1.0, 2.0).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[d0, off, off, d1]);
        let r2 = Rotation2::new(theta).into_inner();
        let r = DMatrix::from_fn(2, 2, |i, j| r2[(i, j)]);
        let rot = &r * &a * r.transpose();
        let rot = (&rot + rot.transpose()) * 0.5;
        let e = a.clone().symmetric_eigen().eigenvalues;
        // Skip matrices within rounding of a constraint boundary.
        let margin = [e.min(), e.sum() - 1.0, 2.0 - e.max()].iter().map(|m| m.abs()).fold(f64::INFINITY, f64::min);
        prop_assume!(margin > 1e-9);
        prop_assert_eq!(admissible(&EllipticMatrix::new(a).unwrap(), &p), admissible(&EllipticMatrix::new(rot).unwrap(), &p));
    }

    #[test]
    fn a_sigma_is_linear(
        a in prop::array::uniform3(-1.0..1.0f64), b in prop::array::uniform3(-1.0..1.0f64),
        s in 0.05..1.95f64, t in -3.0..3.0f64,
    ) {
        let m = |v: [f64; 3]| EllipticMatrix::new(DMatrix::from_row_slice(2, 2, &[v[0], v[1], v[1], v[2]])).unwrap();
        let sum = [a[0] + t * b[0], a[1] + t * b[1], a[2] + t * b[2]];
        let lhs = a_sigma(&m(sum), s).unwrap().a;
        let rhs = a_sigma(&m(a), s).unwrap().a + a_sigma(&m(b), s).unwrap().a * t;
        prop_assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn riesz_constant_is_positive(n in 2usize..=3, alpha in 1e-6..1.999f64) {
        let a = riesz_constant(n, alpha).unwrap();
        prop_assert!(a > 0.0 && a.is_finite());
    }

    #[test]
    fn trace_min_beats_every_feasible_weight(
        e in prop::collection::vec(-2.0..2.0f64, 2..=3),
        lambda in 0.1..1.0f64,
        extra in 0.0..1.0f64,
        raw in prop::collection::vec(0.0..1.0f64, 3),
    ) {
        let big = lambda + extra;
        let (val, w) = trace_min(&e, lambda, big).unwrap();
        prop_assert!(w.iter().all(|x| *x >= 0.0 && *x <= big + 1e-15));
        prop_assert!(w.iter().sum::<f64>() >= lambda - 1e-12);
        prop_assert!((w.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() - val).abs() < 1e-12);
        // A feasible competitor: scale raw weights into [0, Λ] and lift the
        // trace to at least λ.
        let mut c: Vec<f64> = raw[..e.len()].iter().map(|r| r * big).collect();
        let tr: f64 = c.iter().sum();
        if tr < lambda {
            let need = lambda - tr;
            let room: f64 = c.iter().map(|x| big - x).sum();
            for x in c.iter_mut() {
                *x += (big - *x) * need / room;
            }
        }
        let cv: f64 = c.iter().zip(&e).map(|(a, b)| a * b).sum();
        prop_assert!(val <= cv + 1e-12);
    }

    #[test]
    fn determinant_duality(v in prop::collection::vec(-1.0..1.0f64, 9), shift in 0.01..1.0f64) {
        let mut s = Sym::zeros(3);
        for k in 0..3 {
            s.add_outer(1.0, &[v[3 * k], v[3 * k + 1], v[3 * k + 2]]);
        }
        let s = s.add_scaled_identity(shift);
        let d = det_inf_detail(&s).unwrap();
        prop_assert!((d.dual / d.direct - 1.0).abs() < 1e-10);
    }

    #[test]
    fn penalty_is_monotone(a in -2.0..2.0f64, b in -2.0..2.0f64, eps in 0.01..1.0f64) {
        let q = PenaltySpec::new(eps, 1.3).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(penalty_beta(lo, &q) >= penalty_beta(hi, &q));
    }

    #[test]
    fn inf_convolution_is_below_and_monotone_in_eps(
        k in prop::array::uniform3(-3.0..3.0f64), e1 in 0.01..0.5f64, e2 in 0.01..0.5f64,
    ) {
        let g = Grid::cube(2, 1.0, 17).unwrap();
        let v = Field::from_fn(g, Exterior::Zero, |p| (k[0] * p[0]).sin() + k[1] * p[1] * p[1] + k[2] * p[0] * p[1]);
        let (small, large) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        let ws = inf_convolution(&v, small).unwrap();
        let wl = inf_convolution(&v, large).unwrap();
        for i in 0..g.len() {
            prop_assert!(ws.values[i] <= v.values[i] + 1e-12);
            prop_assert!(wl.values[i] <= ws.values[i] + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fractional_laplacian_is_linear(a in -2.0..2.0f64, b in -2.0..2.0f64, c in -1.0..1.0f64, sigma in 0.2..1.8f64) {
        let g = common::grid2(65);
        let q = common::plan(&g);
        let p = SigmaParams::new(2, sigma, 1.0, 2.0).unwrap();
        let u = Field::from_fn(g, Exterior::Zero, common::pit);
        let v = Field::from_fn(g, Exterior::Zero, |x| common::pit(&[x[0] - 0.3, 1.5 * x[1], 0.0]));
        let w = u.with_values(u.values.iter().zip(&v.values).map(|(x, y)| a * x + b * y).collect());
        let x = [0.2, -0.4, 0.0];
        let lu = frac_laplacian(&u, &x, &p, &q).unwrap();
        let lv = frac_laplacian(&v, &x, &p, &q).unwrap();
        let lw = frac_laplacian(&w, &x, &p, &q).unwrap();
        prop_assert!((lw - (a * lu + b * lv)).abs() < 1e-10 * (1.0 + lu.abs() + lv.abs()));
        // Constant shifts are invisible.
        let shifted = Field::from_fn(g, Exterior::Constant(c), |x| common::pit(x) + c);
        let ls = frac_laplacian(&shifted, &x, &p, &q).unwrap();
        prop_assert!((ls - lu).abs() < 1e-10 * (1.0 + lu.abs()));
    }
}
