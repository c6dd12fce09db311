#![allow(dead_code)]

use nlabp::base::{Exterior, Field, Grid, Point};
use nlabp::quadrature::QuadraturePlan;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Smooth function equal to 1 for `r ≤ a`, 0 for `r ≥ b`.
pub fn cutoff(r: f64, a: f64, b: f64) -> f64 {
    let psi = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let t = (b - r) / (b - a);
    psi(t) / (psi(t) + psi(1.0 - t))
}

pub fn r2(p: &Point) -> f64 {
    p[0] * p[0] + p[1] * p[1] + p[2] * p[2]
}

/// Compactly supported smooth pit `-(1 - |x|²)⁴` on the unit ball.
pub fn pit(p: &Point) -> f64 {
    let s = r2(p);
    if s < 1.0 {
        -(1.0 - s).powi(4)
    } else {
        0.0
    }
}

pub fn grid2(points: usize) -> Grid {
    Grid::cube(2, 3.2, points).unwrap()
}

pub fn plan(grid: &Grid) -> QuadraturePlan {
    QuadraturePlan::new(grid.n, grid.h, 6.0).unwrap()
}

/// Sum of three smooth bumps of random sign, centre and width inside `B₂`.
pub fn random_field(grid: Grid, rng: &mut ChaCha8Rng) -> Field {
    let bumps: Vec<([f64; 2], f64, f64)> = (0..3)
        .map(|_| ([rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8)], rng.gen_range(0.9..1.4), rng.gen_range(-1.0..1.0)))
        .collect();
    Field::from_fn(grid, Exterior::Zero, move |p| {
        bumps
            .iter()
            .map(|(c, w, a)| {
                let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                let s = d2 / (w * w);
                if s < 1.0 {
                    a * (1.0 - s).powi(4)
                } else {
                    0.0
                }
            })
            .sum()
    })
}

/// A random interior lattice point within radius `r`.
pub fn random_node(grid: &Grid, rng: &mut ChaCha8Rng, r: f64) -> Point {
    loop {
        let p = grid.point(rng.gen_range(0..grid.len()));
        if r2(&p).sqrt() < r {
            return p;
        }
    }
}
