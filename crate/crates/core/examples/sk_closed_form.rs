//! The spherical SK model in closed form, checked against the general solver.

use pspin::sk::{self, SkParams};
use pspin::volterra::{field_gaps, solve_hard, TwoTimeGrid};

fn main() -> anyhow::Result<()> {
    let sp = SkParams::new(1.0, 1.25, 1.0, 0.5)?;
    let grid = TwoTimeGrid::from_horizon(10.0, 0.01)?;

    let oracle = sk::solve_m(&sp, grid)?.to_bundle()?;
    let nu = pspin::MixingFunction::sk();
    let solved = solve_hard(&sp.model_params()?, &nu, grid)?;
    let g = field_gaps(&solved, &oracle)?;
    println!("sup gaps: R {:.2e}  C {:.2e}  q {:.2e}  mu {:.2e}  H {:.2e}", g.r, g.c, g.q, g.mu, g.energy);

    let asym = sk::sk_asymptotics(&sp, grid)?;
    println!("y = {}, alpha^2 = {}, mu(inf) = {}, H(inf) = {}", asym.y, asym.alpha_sq, asym.mu_inf, asym.h_inf);
    let n = grid.n;
    println!("at T = {}: q^2 = {:.6}, mu = {:.6}, H = {:.6}", grid.t_max(), oracle.q[n].powi(2), oracle.mu[n], oracle.energy[n]);
    println!("stationarity residual: {:.2e}", sk::stationarity_residual(&sp)?);
    Ok(())
}
