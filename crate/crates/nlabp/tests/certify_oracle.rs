mod common;

use common::{grid2, plan};
use nlabp::base::{norm, sphere_area, Exterior, Field, Grid, SigmaParams};
use nlabp::certify::{
    abp_certificate, comparison_check, det_inf_detail, det_inf_formula, fd_hessian, limit_constant, ordering_constant, ordering_from_moments,
    point_to_measure_inf, potential_hessian_from_moments, representable_limit, ring_analysis, spherical_moment, spherical_moment2,
};
use nlabp::linalg::Sym;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn diag(d: &[f64]) -> Sym {
    let mut s = Sym::zeros(d.len());
    for (i, v) in d.iter().enumerate() {
        s.m[i][i] = *v;
    }
    s
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> Sym {
    let mut s = Sym::zeros(n);
    for _ in 0..n + 1 {
        let mut t = [0.0; 3];
        for c in t.iter_mut().take(n) {
            *c = rng.gen_range(-1.0..1.0);
        }
        s.add_outer(rng.gen_range(0.1..2.0), &t);
    }
    s
}

#[test]
fn determinant_duality_examples() {
    let id = det_inf_detail(&Sym::identity(3)).unwrap();
    assert!((id.direct - 1.0).abs() < 1e-14 && (id.dual - 1.0).abs() < 1e-14);
    let d = det_inf_detail(&diag(&[1.0, 4.0])).unwrap();
    assert!((d.direct - 4.0).abs() < 1e-13 && (d.dual - 4.0).abs() < 1e-13);
    assert_eq!(det_inf_formula(&diag(&[1.0, 0.0])).unwrap(), 0.0);
    assert!(det_inf_formula(&diag(&[1.0, -0.5])).is_err());
}

#[test]
fn determinant_duality_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let n = rng.gen_range(2..=3);
        let w = random_psd(&mut rng, n);
        let d = det_inf_detail(&w).unwrap();
        assert!((d.dual / d.direct - 1.0).abs() < 1e-10, "{d:?}");
    }
}

#[test]
fn hessian_from_moments_and_ordering_constant() {
    // n = 2, σ = 1: c_h = 3/2 and W - Tr(W)/3 Id = Id/3 for W = Id.
    let d2p = potential_hessian_from_moments(&Sym::identity(2), 2, 1.0);
    assert!(d2p.sub(&Sym::identity(2).scale(0.5)).norm() < 1e-14);
    assert!((ordering_constant(2, 1.0) - 0.75).abs() < 1e-14);
}

#[test]
fn ordering_holds_and_is_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut checked = 0;
    for _ in 0..1500 {
        let n = rng.gen_range(2..=3);
        let sigma = rng.gen_range(0.2..1.8);
        let lambda = rng.gen_range(0.2..1.0);
        let p = SigmaParams::new(n, sigma, lambda, lambda + rng.gen_range(0.0..2.0)).unwrap();
        let w = random_psd(&mut rng, n).add_scaled_identity(rng.gen_range(0.0..1.0));
        let Ok(o) = ordering_from_moments(&w, &p) else { continue };
        let r = o.ratio.unwrap();
        assert!(r <= o.constant * (1.0 + 1e-10), "{o:?}");
        let t = rng.gen_range(0.1..10.0);
        let scaled = ordering_from_moments(&w.scale(t), &p).unwrap();
        assert!((scaled.ratio.unwrap() / r - 1.0).abs() < 1e-10);
        checked += 1;
    }
    assert!(checked > 200, "{checked}");
    // Away from the gated set the check refuses to run.
    let p = SigmaParams::new(2, 1.0, 1.0, 2.0).unwrap();
    assert!(ordering_from_moments(&diag(&[1.0, 0.0]), &p).is_err());
}

/// `Γ = -1 + c|x|^σ` near the origin, `f ≡ 1`.
fn cone(c: f64, sigma: f64) -> (Field, Field) {
    let g = Grid::cube(2, 1.5, 121).unwrap();
    let gamma = Field::from_fn(g, Exterior::Zero, |x| -1.0 + c * norm(x).min(1.0).powf(sigma));
    let f = Field::from_fn(g, Exterior::Zero, |_| 1.0);
    (gamma, f)
}

#[test]
fn rings_around_a_shallow_cone_are_good() {
    let p = SigmaParams::new(2, 1.0, 0.5, 1.0).unwrap();
    let (gamma, f) = cone(0.5, 1.0);
    let r = ring_analysis(&gamma, &f, &[0.0; 3], &p).unwrap();
    assert!((r.rho0 - 0.5).abs() < 1e-14);
    assert_eq!(r.rings.len(), 3);
    assert!(r.bad_indices.is_empty());
    assert!((r.bound - 4.0).abs() < 1e-14);
    // Node counts per ring, counted directly.
    let h = gamma.grid.h;
    for ring in &r.rings {
        let lim = (ring.r_k / h).ceil() as i64 + 1;
        let mut count = 0;
        for a in -lim..=lim {
            for b in -lim..=lim {
                let rr = ((a * a + b * b) as f64).sqrt() * h;
                if rr > 0.5 * ring.r_k && rr <= ring.r_k {
                    count += 1;
                }
            }
        }
        assert_eq!(ring.nodes, count);
    }
}

#[test]
fn rings_around_a_steep_cone_are_bad() {
    let p = SigmaParams::new(2, 1.0, 0.5, 1.0).unwrap();
    let (gamma, f) = cone(2.0, 1.0);
    let r = ring_analysis(&gamma, &f, &[0.0; 3], &p).unwrap();
    assert_eq!(r.bad_indices, vec![0, 1, 2]);
    assert!((r.scaled_bad - 1.5).abs() < 1e-14);
    assert!(ring_analysis(&gamma, &f, &[0.01, 0.0, 0.0], &p).is_err());
    let flat = gamma.map(|_| 0.0);
    assert!(ring_analysis(&flat, &f, &[0.0; 3], &p).is_err());
}

#[test]
fn point_to_measure_examples() {
    let p = SigmaParams::new(2, 1.0, 1.0, 2.0).unwrap();
    let (gamma, f) = cone(1.0, 1.0);
    // (-Γ(x₀))^{2/σ}(2f)^{-(2-σ)/σ} = 1/2.
    let r = point_to_measure_inf(&gamma, -0.25, &f, &p).unwrap();
    assert!((r.rhs_without_c - 0.5).abs() < 1e-14);
    assert!((r.empirical_c.unwrap() - 0.5).abs() < 1e-14);
    let zero = gamma.map(|_| 0.0);
    assert!(point_to_measure_inf(&zero, 0.0, &f, &p).unwrap().empirical_c.is_none());
}

#[test]
fn certificate_of_the_zero_problem() {
    let g = grid2(33);
    let p = SigmaParams::new(2, 1.0, 1.0, 2.0).unwrap();
    let zero = Field::zeros(g);
    let c = abp_certificate(&zero, &zero, &p, &plan(&g)).unwrap();
    assert_eq!(c.theorem_lhs, 0.0);
    assert_eq!(c.inf_gamma, 0.0);
    assert!(c.passed, "{:?}", c.chain);
    let neg = zero.map(|_| -1.0);
    assert!(abp_certificate(&zero, &neg, &p, &plan(&g)).is_err());
}

#[test]
fn spherical_moments_of_small_rules() {
    // Eight equally spaced angles integrate trigonometric degree 4 exactly.
    let w = 2.0 * PI;
    assert!((spherical_moment(0, 0, 2, 8) - 3.0 * w / 8.0).abs() < 1e-14);
    assert!((spherical_moment(0, 1, 2, 8) - w / 8.0).abs() < 1e-14);
    assert!((spherical_moment2(1, 2, 8) - w / 2.0).abs() < 1e-14);
}

#[test]
fn limit_constants_and_representability() {
    assert!((limit_constant(2) - PI / 2.0).abs() < 1e-14);
    assert!((limit_constant(3) - 8.0 * PI / 15.0).abs() < 1e-14);
    assert!((limit_constant(3) - 2.0 * sphere_area(3) / 15.0).abs() < 1e-14);
    assert!(representable_limit(&Sym::identity(2)));
    assert!(representable_limit(&Sym::identity(3)));
    assert!(!representable_limit(&diag(&[1.0, 0.0])));
    assert!(representable_limit(&diag(&[1.0, 1.0 / 3.0])));
    assert!(!representable_limit(&diag(&[1.0, 0.3])));
    assert!(representable_limit(&diag(&[1.0, 0.4, 0.4])));
    assert!(!representable_limit(&diag(&[1.0, 0.3, 0.3])));
}

#[test]
fn comparison_of_identical_solutions() {
    let g = grid2(17);
    let p = SigmaParams::new(2, 1.0, 1.0, 2.0).unwrap();
    let u = Field::from_fn(g, Exterior::Zero, common::pit);
    let f = Field::from_fn(g, Exterior::Zero, |_| 1.0);
    let r = comparison_check(&u, &u, &f, &f, 1.0, &p, 1e-12).unwrap();
    assert_eq!(r.empirical_c, 0.0);
    assert!(r.pass);
    // A strictly larger u with equal data has no right side to absorb it.
    let v = Field::from_fn(g, Exterior::Zero, |x| common::pit(x) - if norm(x) < 1.0 { 0.1 } else { 0.0 });
    let r = comparison_check(&u, &v, &f, &f, 1.0, &p, 1e-12).unwrap();
    assert!(r.empirical_c.is_infinite() && !r.pass);
}

#[test]
fn finite_difference_hessian_of_a_cubic() {
    let f = |x: &[f64; 3]| x[0].powi(3) + 2.0 * x[0] * x[1] - x[1] * x[1] + 0.5 * x[2] * x[0];
    let h = fd_hessian(f, &[0.3, -0.2, 0.1], 3, 1e-2);
    let exact = [[1.8, 2.0, 0.5], [2.0, -2.0, 0.0], [0.5, 0.0, 0.0]];
    for i in 0..3 {
        for j in 0..3 {
            assert!((h.get(i, j) - exact[i][j]).abs() < 1e-9, "{i}{j}: {}", h.get(i, j));
        }
    }
}
