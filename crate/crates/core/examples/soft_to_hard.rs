//! Soft confinement approaches the hard sphere as the stiffness `L` grows.

use pspin::volterra::{soft_hard_gap, TwoTimeGrid};
use pspin::{MixingFunction, ModelParams};

fn main() -> anyhow::Result<()> {
    let nu = MixingFunction::sk();
    let params = ModelParams::hard(&nu, 1.0, 1.0, 0.5, 0.625, 1.25)?.with_soft(&nu, 10.0, 1)?;
    let grid = TwoTimeGrid::from_horizon(2.0, 0.005)?;
    let gaps = soft_hard_gap(&params, &nu, grid, &[10.0, 100.0, 1000.0])?;
    println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "L", "sup|K-1|", "R gap", "C gap", "q gap");
    for g in &gaps {
        println!("{:>6} {:>12.3e} {:>12.3e} {:>12.3e} {:>12.3e}", g.l, g.k_sup, g.r_gap, g.c_gap, g.q_gap);
    }
    for w in gaps.windows(2) {
        println!("sup|K-1| ratio L={} -> L={}: {:.2}", w[0].l, w[1].l, w[0].k_sup / w[1].k_sup);
    }
    Ok(())
}
