//! FDT profile, critical temperature, response constants and aging constants
//! for the pure 3-spin model.

use pspin::fdt::{aging_constants, beta_c, d_infty, kappa_values, phi, solve_d};
use pspin::volterra::TwoTimeGrid;
use pspin::MixingFunction;

fn main() -> anyhow::Result<()> {
    let nu = MixingFunction::pure(3, 0.125)?;
    let bc = beta_c(&nu)?;
    println!("beta_c = {bc:.8}");

    let beta = 0.3;
    let prof = solve_d(0.5, beta, &nu, TwoTimeGrid::from_horizon(40.0, 0.01)?)?;
    for tau in [0.0, 1.0, 2.0, 5.0, 10.0] {
        let i = prof.grid.index_of(tau).unwrap();
        println!("D({tau:>4}) = {:.8}", prof.d[i]);
    }
    println!("D_inf = {:?}, phi(1) = {}", d_infty(0.5, beta, &nu), phi(0.5, beta, &nu, 1.0));
    let k = kappa_values(&prof, &nu)?;
    println!("kappa1: quadrature {:.8}, closed form {:.8}", k.quadrature.k1, k.closed_form.k1);
    println!("kappa2: quadrature {:.8}, closed form {:.8}", k.quadrature.k2, k.closed_form.k2);

    let hot = 1.5 * bc;
    let ag = aging_constants(hot, &nu)?;
    println!(
        "beta = {hot:.6}: gamma = {:.8}, D_inf = {:.8}, I = {:.8}, gamma > 1/2: {}",
        ag.gamma, ag.d_inf, ag.i_const, ag.gamma_above_half
    );
    Ok(())
}
