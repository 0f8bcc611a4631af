//! The conditional Hessian at the critical point is positive definite once
//! `G⋆` exceeds `2 sqrt(ν''(q⋆²))`.

use pspin::simulate::conditional_hessian_spectrum;
use pspin::MixingFunction;

fn main() -> anyhow::Result<()> {
    let nu = MixingFunction::pure(3, 0.125)?;
    let qs: f64 = 0.9;
    let s = nu.d2(qs * qs).sqrt();
    let n = 300;
    for factor in [1.6, 1.8, 1.9, 2.0, 2.1, 2.2, 2.4] {
        let positive = (0..50u64)
            .filter(|&seed| conditional_hessian_spectrum(n, &nu, qs, factor * s, seed).map(|ev| ev[0] > 0.0).unwrap_or(false))
            .count();
        let ev = conditional_hessian_spectrum(n, &nu, qs, factor * s, 0)?;
        println!("G* = {factor:.1} sqrt(nu''): min eig {:>8.4} (edge {:>8.4}), positive definite in {positive}/50", ev[0], (factor - 2.0) * s);
    }
    Ok(())
}
