//! Localized long-time solutions without aging, for SK and a pure cubic model.

use pspin::fdt::localized_no_aging;
use pspin::{MixingFunction, ModelParams};

fn main() -> anyhow::Result<()> {
    let sk = MixingFunction::sk();
    let p = ModelParams::hard(&sk, 1.0, 1.0, 0.5, 0.625, 1.25)?;
    let b = localized_no_aging(&p, &sk)?;
    println!("SK: y = {}, beta_+ = {:?}, alpha^2 = {:.10}, gamma = {:.10}, H(inf) = {:.10}", b.y, b.beta_plus, b.alpha_sq, b.gamma, b.h_inf);

    let cubic = MixingFunction::pure(3, 0.125)?;
    let qs: f64 = 0.9;
    for factor in [2.2, 2.5, 3.0] {
        let g = factor * cubic.d2(qs * qs).sqrt();
        let p = ModelParams::hard(&cubic, 3.0, qs, 0.5, g * qs * qs / 3.0, g)?;
        match localized_no_aging(&p, &cubic) {
            Ok(b) => println!(
                "cubic G = {factor} sqrt(nu''): alpha^2 = {:.8}, beta_+ = {:.6}, TAP stable {}, residuals {:?}",
                b.alpha_sq,
                b.beta_plus.unwrap(),
                b.tap_stable,
                b.ident_residuals
            ),
            Err(e) => println!("cubic G = {factor} sqrt(nu''): {e}"),
        }
    }
    Ok(())
}
