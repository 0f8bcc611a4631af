//! Build a mixing function, derive the conditional drift `v⋆` and resolve
//! the canonical confinement constant.

use pspin::{DriftPolynomial, MixingFunction, ModelParams};

fn main() -> anyhow::Result<()> {
    // ν(r) = r²/8 + r⁴/16
    let nu = MixingFunction::new(vec![0.125, 0.0, 0.0625])?;
    let q_star: f64 = 0.9;
    let a = q_star * q_star;
    println!("nu(q*^2) = {:.6}, nu'(q*^2) = {:.6}, nu''(q*^2) = {:.6}", nu.value(a), nu.d1(a), nu.d2(a));

    let (e, g) = (0.4, 1.2);
    let drift = DriftPolynomial::build(&nu, q_star, e, g)?;
    println!("v*(r) coefficients from r^2: {:?}", drift.coeffs());
    println!("v*(q*^2) = {:.12} (target E = {e})", drift.value(a));
    println!("v*'(q*^2) = {:.12} (target G = {g})", drift.prime(a));

    let params = ModelParams::hard(&nu, 1.0, q_star, 0.5, e, g)?;
    println!("canonical phi = {:.12}", params.confinement.phi());

    // pure models pin G to m E / q*^2
    let cubic = MixingFunction::pure(3, 0.125)?;
    match ModelParams::hard(&cubic, 1.0, q_star, 0.5, e, g) {
        Ok(_) => println!("unexpected: inconsistent pure model accepted"),
        Err(err) => println!("pure cubic with G = {g}: {err}"),
    }
    Ok(())
}
