//! Solves `M⁻u = f` for a bump `f` and certifies the solution.

use nlabp::base::{Exterior, Field, Grid, SigmaParams};
use nlabp::certify::abp_certificate;
use nlabp::envelope::solve_dirichlet;
use nlabp::quadrature::QuadraturePlan;

fn main() -> nlabp::error::Result<()> {
    let grid = Grid::cube(2, 3.2, 65)?;
    let plan = QuadraturePlan::new(2, grid.h, 6.0)?;
    let p = SigmaParams::new(2, 1.0, 1.0, 2.0)?;
    let f = Field::from_fn(grid, Exterior::Zero, |x| {
        let s = (x[0] * x[0] + x[1] * x[1]) / 0.49;
        if s < 1.0 { 4.0 * (1.0 - s).powi(2) } else { 0.0 }
    });
    let u = solve_dirichlet(&f, &p, &plan)?;
    let cert = abp_certificate(&u, &f, &p, &plan)?;
    println!("inf u = {:.5}", cert.inf_u);
    for step in &cert.chain {
        println!("{:32} {:>12.5e} <= {:>12.5e}  {}", step.name, step.lhs, step.rhs, if step.pass { "ok" } else { "FAIL" });
    }
    println!("empirical constant: {:?}", cert.empirical_c);
    Ok(())
}
