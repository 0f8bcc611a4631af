//! Finite-N Langevin dynamics with conditioned disorder, compared with the
//! soft-constraint limit.

use pspin::simulate::{error_report, error_terms, simulate, SimConfig};
use pspin::volterra::{solve_soft, TwoTimeGrid};
use pspin::{MixingFunction, ModelParams};

fn main() -> anyhow::Result<()> {
    let nu = MixingFunction::sk();
    let params = ModelParams::hard(&nu, 1.0, 1.0, 0.5, 0.625, 1.25)?.with_soft(&nu, 100.0, 1)?;
    let limit = solve_soft(&params, &nu, TwoTimeGrid::from_horizon(1.0, 0.01)?)?;
    for n in [50, 200] {
        let cfg = SimConfig { n, dt: 1e-3, t_max: 1.0, seed: 1, replicas: 4, snapshot_every: 10 };
        let emp = simulate(&params, &nu, &cfg)?;
        let rep = error_report(&emp, &limit)?;
        let t = error_terms(&emp.mean, &limit)?;
        println!(
            "N = {n:>4}: Err = {:.4} (C {:.3}, chi {:.3}, q {:.3}, H {:.3}); per replica {:.3} ± {:.3}",
            rep.of_mean, t.c, t.chi, t.q, t.h, rep.mean, rep.std
        );
        let last = emp.mean.times.len() - 1;
        println!("          q_N(1) = {:.4} vs q(1) = {:.4}", emp.mean.q[last], limit.q[limit.grid.n]);
    }
    Ok(())
}
