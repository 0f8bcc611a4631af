//! The time-translation-invariant (FDT) regime: the one-time convolution
//! equation for `D(τ)`, the constants `γ`, `D∞`, `β_c`, `D⋆`, `I`, `κ_i`,
//! the fixed points for the overlap limit `α`, and the localized branch
//! without aging.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MixingFunction, ModelParams};
use crate::volterra::TwoTimeGrid;

/// Points in the coarse scan used by every sup-of-a-closed-set search.
pub const SCAN_POINTS: usize = 10_000;
/// Bisection tolerance for those searches.
pub const BISECT_TOL: f64 = 1e-10;

/// `φ(x) = γ + 2β²ν'(x)`.
pub fn phi(gamma: f64, beta: f64, nu: &MixingFunction, x: f64) -> f64 {
    gamma + 2.0 * beta * beta * nu.d1(x)
}

/// Solution of `D'(s) = −∫_0^s φ(D(v)) D'(s−v) dv − 1/2`, `D(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdtProfile {
    pub grid: TwoTimeGrid,
    pub gamma: f64,
    pub beta: f64,
    pub d: Vec<f64>,
    pub d_prime: Vec<f64>,
}

impl FdtProfile {
    /// `R_fdt(τ) = −2D'(τ)`.
    pub fn r_fdt(&self) -> Vec<f64> {
        self.d_prime.iter().map(|e| -2.0 * e).collect()
    }
}

/// Marches the convolution equation with a trapezoid rule for the memory
/// term, an Euler predictor for `D` and one trapezoid corrector.
pub fn solve_d(gamma: f64, beta: f64, nu: &MixingFunction, grid: TwoTimeGrid) -> Result<FdtProfile> {
    let h = grid.h;
    let n = grid.n;
    let mut d = Vec::with_capacity(n + 1);
    let mut e = Vec::with_capacity(n + 1);
    // φ(D_k) cached per step
    let mut ph = Vec::with_capacity(n + 1);
    d.push(1.0);
    e.push(-0.5);
    ph.push(phi(gamma, beta, nu, 1.0));
    let denom = 1.0 + 0.5 * h * ph[0];
    for i in 1..=n {
        // Σ_{k=1}^{i-1} φ(D_k) E_{i-k}
        let mut mem = 0.0;
        for k in 1..i {
            mem += ph[k] * e[i - k];
        }
        let solve_e = |phi_i: f64| (-h * (mem + 0.5 * phi_i * e[0]) - 0.5) / denom;
        let d_pred = d[i - 1] + h * e[i - 1];
        let e_pred = solve_e(phi(gamma, beta, nu, d_pred));
        let d_new = d[i - 1] + 0.5 * h * (e[i - 1] + e_pred);
        let phi_new = phi(gamma, beta, nu, d_new);
        let e_new = solve_e(phi_new);
        for (field, v) in [("D", d_new), ("D'", e_new)] {
            if !(v.is_finite() && v.abs() <= 1e6) {
                return Err(Error::StepUnstable { step: i, time: grid.t(i), field, value: v });
            }
        }
        d.push(d_new);
        e.push(e_new);
        ph.push(phi_new);
    }
    Ok(FdtProfile { grid, gamma, beta, d, d_prime: e })
}

/// `sup{x ∈ [0,1] : pred(x)}` for a closed set, by a dense scan followed by
/// bisection against the first failing grid point above it.
fn sup_closed<F: Fn(f64) -> bool>(pred: F) -> Option<f64> {
    let xs = |k: usize| k as f64 / SCAN_POINTS as f64;
    let top = (0..=SCAN_POINTS).rev().find(|&k| pred(xs(k)))?;
    if top == SCAN_POINTS {
        return Some(1.0);
    }
    let (mut lo, mut hi) = (xs(top), xs(top + 1));
    while hi - lo > BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        if pred(mid) { lo = mid } else { hi = mid }
    }
    Some(lo)
}

/// `D∞ = sup{x ∈ [0,1] : (γ + 2β²ν'(x))(1−x) ≥ 1/2}`; `None` if the set is
/// empty (or too thin for the scan to see).
pub fn d_infty(gamma: f64, beta: f64, nu: &MixingFunction) -> Option<f64> {
    sup_closed(|x| phi(gamma, beta, nu, x) * (1.0 - x) >= 0.5)
}

/// `D⋆(β) = sup{x ∈ [0,1] : 4β²g(x) ≥ 1}`.
pub fn d_star(beta: f64, nu: &MixingFunction) -> Option<f64> {
    sup_closed(|x| 4.0 * beta * beta * nu.g_landscape(x) >= 1.0)
}

/// Upper end of the bisection bracket for `β_c`.
pub const BETA_C_MAX: f64 = 100.0;

/// `β_c = sup{β : D∞(γ = 1/2, β) = 0}`.
pub fn beta_c(nu: &MixingFunction) -> Result<f64> {
    let ages = |b: f64| d_infty(0.5, b, nu).is_some_and(|d| d > 0.0);
    if !ages(BETA_C_MAX) {
        return Err(Error::NotBracketed("D_inf stays 0 up to beta = 100"));
    }
    let (mut lo, mut hi) = (0.0, BETA_C_MAX);
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if ages(mid) { hi = mid } else { lo = mid }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgingConstants {
    pub gamma: f64,
    pub d_inf: f64,
    pub i_const: f64,
    /// Expected to hold on the aging branch; `false` is reported, not rejected.
    pub gamma_above_half: bool,
    /// `(γ + 2β²ν'(D∞))(1−D∞) − 1/2`.
    pub boundary_residual: f64,
    /// `I − (γ − 1/2 + 2β² D∞ ν'(D∞))`.
    pub i_residual: f64,
}

/// Aging-regime constants above `β_c`: `D∞ = D⋆(β)`,
/// `γ = 2β²[ν''(D∞)(1−D∞) − ν'(D∞)]`, `I = γ − 1/2 + 2β²D∞ν'(D∞)`.
pub fn aging_constants(beta: f64, nu: &MixingFunction) -> Result<AgingConstants> {
    let bc = beta_c(nu)?;
    if beta <= bc {
        return Err(Error::BelowCritical { beta, beta_c: bc });
    }
    let d = d_star(beta, nu).ok_or(Error::NotConverged("D_star is empty above beta_c".into()))?;
    let b2 = beta * beta;
    let gamma = 2.0 * b2 * (nu.d2(d) * (1.0 - d) - nu.d1(d));
    let i_const = gamma - 0.5 + 2.0 * b2 * d * nu.d1(d);
    Ok(AgingConstants {
        gamma,
        d_inf: d,
        i_const,
        gamma_above_half: gamma > 0.5,
        boundary_residual: phi(gamma, beta, nu, d) * (1.0 - d) - 0.5,
        i_residual: i_const - (gamma - 0.5 + 2.0 * b2 * d * nu.d1(d)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappas {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    pub quadrature: Kappas,
    pub closed_form: Kappas,
    pub d_inf: f64,
    /// `|D(T) − D∞|`.
    pub tail_gap: f64,
}

/// Tail criterion for [`kappa_values`].
pub const KAPPA_TAIL_TOL: f64 = 1e-6;

/// `κ₁ = ∫R ν''(C)`, `κ₂ = ∫R` by trapezoid on the profile, next to the
/// closed forms `2(ν'(1) − ν'(D∞))` and `2(1 − D∞)`.
pub fn kappa_values(profile: &FdtProfile, nu: &MixingFunction) -> Result<KappaReport> {
    let d_inf = d_infty(profile.gamma, profile.beta, nu)
        .ok_or(Error::NotConverged("the D_inf set is empty".into()))?;
    let last = *profile.d.last().unwrap();
    let tail_gap = (last - d_inf).abs();
    if tail_gap > KAPPA_TAIL_TOL {
        return Err(Error::NotConverged(format!(
            "|D(T) - D_inf| = {tail_gap:e} exceeds {KAPPA_TAIL_TOL:e}; extend the horizon"
        )));
    }
    let r = profile.r_fdt();
    let h = profile.grid.h;
    let f1: Vec<f64> = r.iter().zip(&profile.d).map(|(r, d)| r * nu.d2(*d)).collect();
    Ok(KappaReport {
        quadrature: Kappas { k1: crate::quad::trapezoid(&f1, h), k2: crate::quad::trapezoid(&r, h), k3: 0.0 },
        closed_form: Kappas { k1: 2.0 * (nu.d1(1.0) - nu.d1(d_inf)), k2: 2.0 * (1.0 - d_inf), k3: 0.0 },
        d_inf,
        tail_gap,
    })
}

/// Adds the single-aging-regime contribution with amplitude `a` between
/// `C_aging(1) = D∞` and `C_aging(0) = α²`.
pub fn aging_kappa_update(k: Kappas, a: f64, d_inf: f64, alpha: f64, nu: &MixingFunction) -> Kappas {
    let a2 = alpha * alpha;
    Kappas {
        k1: k.k1 + a * (nu.d1(d_inf) - nu.d1(a2)),
        k2: k.k2 + a * (d_inf - a2),
        k3: k.k3 + a * (d_inf * nu.d1(d_inf) - a2 * nu.d1(a2)),
    }
}

/// How `μ` and the `κ_i` depend on the candidate `α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaModel {
    /// Constants supplied by the caller.
    Fixed { mu: f64, kappas: Kappas },
    /// FDT profile with `D∞ = α²` and no aging: `κ₁ = 2(ν'(1) − ν'(α²))`,
    /// `κ₂ = 2(1 − α²)`, `κ₃ = 0`, `I` from the identity for `I` in terms
    /// of `κ₂`, `γ` from `I = γ − 1/2 + 2β²α²ν'(α²)` and `μ = φ(1)`.
    NoAging,
}

/// `μαq⋆ − [βq⋆²v⋆'(αq⋆) − β²q⋆²ν''(αq⋆)ν'(αq⋆)κ₂/ν'(q⋆²) + β²αq⋆κ₁]`.
pub fn alpha_residual(params: &ModelParams, nu: &MixingFunction, model: KappaModel, alpha: f64) -> Result<f64> {
    let v = params.drift(nu)?;
    let (beta, qs) = (params.beta, params.q_star);
    let b2 = beta * beta;
    let a = qs * qs;
    let nq = nu.d1(a);
    let inv_nq = if nq > 0.0 { 1.0 / nq } else { 0.0 };
    let x = alpha * qs;
    let (mu, k) = match model {
        KappaModel::Fixed { mu, kappas } => (mu, kappas),
        KappaModel::NoAging => {
            let a2 = alpha * alpha;
            let k = Kappas { k1: 2.0 * (nu.d1(1.0) - nu.d1(a2)), k2: 2.0 * (1.0 - a2), k3: 0.0 };
            let i = beta * x * v.prime(x) - b2 * nu.psi(x) * nu.d1(x) * inv_nq * k.k2 + b2 * k.k3;
            let gamma = i + 0.5 - 2.0 * b2 * a2 * nu.d1(a2);
            (phi(gamma, beta, nu, 1.0), k)
        }
    };
    Ok(mu * x - (beta * a * v.prime(x) - b2 * a * nu.d2(x) * nu.d1(x) * inv_nq * k.k2 + b2 * x * k.k1))
}

/// Every root of [`alpha_residual`] in `[−1, 1]`: exact zeros on the scan
/// grid plus bisection of each sign change.
pub fn alpha_fixed_points(params: &ModelParams, nu: &MixingFunction, model: KappaModel) -> Result<Vec<f64>> {
    if let KappaModel::Fixed { mu, .. } = model {
        if !(mu > 0.0) {
            return Err(Error::InvalidParam(format!("mu = {mu} must be positive")));
        }
    }
    let half = SCAN_POINTS / 2;
    let xs = |k: usize| (k as f64 - half as f64) / half as f64;
    let f = |x: f64| alpha_residual(params, nu, model, x);
    let vals: Vec<f64> = (0..=SCAN_POINTS).map(|k| f(xs(k))).collect::<Result<_>>()?;
    let mut roots = Vec::new();
    for k in 0..=SCAN_POINTS {
        if vals[k] == 0.0 {
            roots.push(xs(k));
            continue;
        }
        if k < SCAN_POINTS && vals[k + 1] != 0.0 && (vals[k] < 0.0) != (vals[k + 1] < 0.0) {
            let (mut lo, mut hi, mut flo) = (xs(k), xs(k + 1), vals[k]);
            while hi - lo > BISECT_TOL {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid)?;
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
    }
    Ok(roots)
}

/// The localized solution without aging (`D∞ = α²`, `α ≠ 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizedBranch {
    /// Smaller root of `G⋆ = √ν''(q⋆²)(y + 1/y)`.
    pub y: f64,
    pub alpha: f64,
    pub alpha_sq: f64,
    pub gamma: f64,
    /// Pure models: `β₊ = y / (2√g(1 − 2/m))`.
    pub beta_plus: Option<f64>,
    /// `D∞ = α²`.
    pub d_inf: f64,
    /// `H(∞) = v⋆(αq⋆) + 2βθ(α²)`.
    pub h_inf: f64,
    /// Residuals of the three no-aging identities at `(α, γ)`.
    pub ident_residuals: [f64; 3],
    /// `1/β > 2√ν''(α²)(1 − α²)`.
    pub tap_stable: bool,
    /// Mixed models: `G⋆ − [2βν''(α²)(1−α²) + 1/(2β(1−α²))]`.
    pub g_alpha_residual: Option<f64>,
}

pub fn localized_no_aging(params: &ModelParams, nu: &MixingFunction) -> Result<LocalizedBranch> {
    params.validate(nu)?;
    let (beta, qs, g) = (params.beta, params.q_star, params.g_star);
    let a = qs * qs;
    let s2 = nu.d2(a).sqrt();
    let threshold = 2.0 * s2;
    if !(g > threshold) {
        return Err(Error::Unstable { g, threshold });
    }
    let g_hat = g / threshold;
    let y = g_hat - (g_hat * g_hat - 1.0).sqrt();
    let b2 = beta * beta;
    let (alpha_sq, beta_plus, g_alpha_residual) = if nu.is_pure() {
        let m = nu.degree().unwrap() as f64;
        let bp = y / (2.0 * nu.g_landscape(1.0 - 2.0 / m).sqrt());
        if beta <= bp {
            return Err(Error::NoBranch { beta, beta_plus: bp });
        }
        let d = d_star(beta / y, nu).ok_or(Error::NoBranch { beta, beta_plus: bp })?;
        (d, Some(bp), None)
    } else {
        let ga = 2.0 * beta * nu.d2(a) * (1.0 - a) + 1.0 / (2.0 * beta * (1.0 - a));
        (a, None, Some(g - ga))
    };
    let alpha = alpha_sq.sqrt();
    let v = params.drift(nu)?;
    let x = alpha * qs;
    let nq = nu.d1(a);
    let one_m = 1.0 - alpha_sq;
    let rhs1 = beta * qs * v.prime(x) - 2.0 * b2 * qs * nu.d2(x) * nu.d1(x) / nq * one_m
        - 2.0 * b2 * alpha * nu.d1(alpha_sq);
    let gamma = rhs1 / alpha;
    let rhs2 = beta * x * v.prime(x) - 2.0 * b2 * nu.psi(x) * nu.d1(x) / nq * one_m
        - 2.0 * b2 * alpha_sq * nu.d1(alpha_sq);
    let ident_residuals = [
        gamma * alpha - rhs1,
        gamma - 0.5 - rhs2,
        phi(gamma, beta, nu, alpha_sq) * one_m - 0.5,
    ];
    Ok(LocalizedBranch {
        y,
        alpha,
        alpha_sq,
        gamma,
        beta_plus,
        d_inf: alpha_sq,
        h_inf: v.value(x) + 2.0 * beta * nu.theta(alpha_sq),
        ident_residuals,
        tap_stable: 1.0 / beta > 2.0 * nu.d2(alpha_sq).sqrt() * one_m,
        g_alpha_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cubic() -> MixingFunction {
        MixingFunction::pure(3, 0.125).unwrap()
    }

    #[test]
    fn free_profile_is_exponential() {
        let p = solve_d(0.5, 0.0, &MixingFunction::sk(), TwoTimeGrid::from_horizon(5.0, 0.005).unwrap()).unwrap();
        assert_eq!(p.d_prime[0], -0.5);
        assert_eq!(p.r_fdt()[0], 1.0);
        for (i, d) in p.d.iter().enumerate() {
            assert_abs_diff_eq!(*d, (-p.grid.t(i) / 2.0).exp(), epsilon = 1e-6);
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let p = solve_d(0.5, 0.3, &cubic(), TwoTimeGrid::from_horizon(5.0, 0.005).unwrap()).unwrap();
        let h = p.grid.h;
        for i in 1..p.d.len() - 1 {
            let fd = (p.d[i + 1] - p.d[i - 1]) / (2.0 * h);
            assert!((fd - p.d_prime[i]).abs() <= 10.0 * h * h, "i = {i}");
        }
    }

    #[test]
    fn d_infty_examples() {
        let sk = MixingFunction::sk();
        assert_eq!(d_infty(0.5, 0.0, &sk), Some(0.0));
        assert_eq!(d_infty(0.5, 0.9, &sk), Some(0.0));
        // SK: (1 + β²x)(1 − x) ≥ 1 up to x = 1 − 1/β².
        let d = d_infty(0.5, 2.0, &sk).unwrap();
        assert_abs_diff_eq!(d, 0.75, epsilon = 1e-9);
        assert_eq!(d_infty(0.2, 0.1, &sk), None);
    }

    #[test]
    fn d_infty_matches_brute_scan() {
        let sk = MixingFunction::sk();
        let (gamma, beta) = (0.6, 1.3);
        let brute = (0..=1_000_000)
            .map(|k| k as f64 * 1e-6)
            .filter(|&x| phi(gamma, beta, &sk, x) * (1.0 - x) >= 0.5)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_abs_diff_eq!(d_infty(gamma, beta, &sk).unwrap(), brute, epsilon = 1.1e-6);
    }

    #[test]
    fn beta_c_values() {
        assert!(matches!(beta_c(&MixingFunction::zero()), Err(Error::NotBracketed(_))));
        assert_abs_diff_eq!(beta_c(&MixingFunction::sk()).unwrap(), 1.0, epsilon = 1e-6);
        // Tangency of (1 + 3β²x²/2)(1 − x) = 1: 3β²x(1−x)/2 = 1 at x = 1/2.
        let bc = beta_c(&cubic()).unwrap();
        assert_abs_diff_eq!(bc, (8.0f64 / 3.0).sqrt(), epsilon = 1e-6);
        assert_eq!(d_infty(0.5, 0.99 * bc, &cubic()), Some(0.0));
        assert!(d_infty(0.5, 1.01 * bc, &cubic()).unwrap() > 0.0);
    }

    #[test]
    fn d_star_examples() {
        let sk = MixingFunction::sk();
        for beta in [1.5, 2.0, 4.0] {
            assert_abs_diff_eq!(d_star(beta, &sk).unwrap(), 1.0 - 1.0 / beta, epsilon = 1e-9);
        }
        assert_eq!(d_star(0.8, &sk), None);
        assert!(d_star(1e4, &sk).unwrap() > 0.999);
        let d = d_star(2.0, &cubic()).unwrap();
        assert!((4.0 * 4.0 * cubic().g_landscape(d) - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn aging_constants_sk() {
        let sk = MixingFunction::sk();
        let c = aging_constants(2.0, &sk).unwrap();
        assert_abs_diff_eq!(c.d_inf, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(c.gamma, 0.0, epsilon = 1e-8);
        assert!(!c.gamma_above_half);
        assert!(c.i_residual.abs() <= 1e-15);
        assert!(c.boundary_residual.abs() <= 1e-8);
        assert!(matches!(aging_constants(0.9, &sk), Err(Error::BelowCritical { .. })));
    }

    #[test]
    fn kappa_update_examples() {
        let sk = MixingFunction::sk();
        let k = Kappas { k1: 0.3, k2: 1.0, k3: 0.0 };
        assert_eq!(aging_kappa_update(k, 0.0, 0.5, 0.0, &sk), k);
        assert_eq!(aging_kappa_update(k, 2.0, 0.5, 0.5f64.sqrt(), &sk).k2, k.k2 + 2.0 * (0.5 - 0.5f64.sqrt().powi(2)));
        let u = aging_kappa_update(Kappas { k1: 0.0, k2: 0.0, k3: 0.0 }, 1.0, 0.5, 0.0, &sk);
        assert_abs_diff_eq!(u.k1, 0.125);
        assert_abs_diff_eq!(u.k2, 0.5);
        assert_abs_diff_eq!(u.k3, 0.0625);
    }

    #[test]
    fn kappas_below_critical() {
        let nu = cubic();
        let p = solve_d(0.5, 0.3, &nu, TwoTimeGrid::from_horizon(40.0, 0.01).unwrap()).unwrap();
        let k = kappa_values(&p, &nu).unwrap();
        assert_eq!(k.d_inf, 0.0);
        assert_abs_diff_eq!(k.closed_form.k1, 2.0 * nu.d1(1.0));
        assert!((k.quadrature.k1 - k.closed_form.k1).abs() <= 1e-4);
        assert!((k.quadrature.k2 - k.closed_form.k2).abs() <= 1e-4);
        let short = solve_d(0.5, 0.3, &nu, TwoTimeGrid::from_horizon(2.0, 0.01).unwrap()).unwrap();
        assert!(matches!(kappa_values(&short, &nu), Err(Error::NotConverged(_))));
        assert_abs_diff_eq!(2.0 * MixingFunction::sk().d1(1.0), 0.5);
    }

    #[test]
    fn alpha_roots_sk() {
        let nu = MixingFunction::sk();
        let p = ModelParams::hard(&nu, 1.0, 1.0, 0.5, 0.625, 1.25).unwrap();
        let roots = alpha_fixed_points(&p, &nu, KappaModel::NoAging).unwrap();
        assert!(roots.contains(&0.0));
        let s = 0.5f64.sqrt();
        assert!(roots.iter().any(|r| (r - s).abs() < 1e-9), "{roots:?}");
        assert!(roots.iter().any(|r| (r + s).abs() < 1e-9), "{roots:?}");
        assert_eq!(roots.len(), 3);
    }

    #[test]
    fn alpha_root_unique_at_small_beta() {
        let nu = cubic();
        let e = 0.2;
        let p = ModelParams::hard(&nu, 0.01, 0.9, 0.5, e, 3.0 * e / 0.81).unwrap();
        assert_eq!(alpha_fixed_points(&p, &nu, KappaModel::NoAging).unwrap(), vec![0.0]);
        let fixed = KappaModel::Fixed { mu: 0.5, kappas: Kappas { k1: 0.1, k2: 1.0, k3: 0.0 } };
        assert!(alpha_fixed_points(&p, &nu, fixed).unwrap().contains(&0.0));
        let bad = KappaModel::Fixed { mu: 0.0, kappas: Kappas { k1: 0.1, k2: 1.0, k3: 0.0 } };
        assert!(alpha_fixed_points(&p, &nu, bad).is_err());
    }

    #[test]
    fn localized_sk() {
        let nu = MixingFunction::sk();
        let p = ModelParams::hard(&nu, 1.0, 1.0, 0.5, 0.625, 1.25).unwrap();
        let b = localized_no_aging(&p, &nu).unwrap();
        assert_abs_diff_eq!(b.y, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b.beta_plus.unwrap(), b.y, epsilon = 1e-15);
        assert_abs_diff_eq!(b.alpha_sq, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(b.h_inf, 0.375, epsilon = 1e-9);
        assert_abs_diff_eq!(b.gamma, 0.75, epsilon = 1e-8);
        for r in b.ident_residuals {
            assert!(r.abs() <= 1e-8, "{:?}", b.ident_residuals);
        }
        let low = ModelParams { beta: 0.4, ..p }.with_hard(&nu).unwrap();
        assert!(matches!(localized_no_aging(&low, &nu), Err(Error::NoBranch { .. })));
    }

    #[test]
    fn localized_pure_cubic_identities() {
        let nu = cubic();
        let qs: f64 = 0.9;
        let g = 2.5 * (nu.d2(qs * qs)).sqrt();
        let p = ModelParams::hard(&nu, 3.0, qs, 0.5, g * qs * qs / 3.0, g).unwrap();
        let b = localized_no_aging(&p, &nu).unwrap();
        for r in b.ident_residuals {
            assert!(r.abs() <= 1e-8, "{:?}", b.ident_residuals);
        }
        // Double root at the threshold is rejected.
        let edge = 2.0 * nu.d2(qs * qs).sqrt();
        let p = ModelParams::hard(&nu, 3.0, qs, 0.5, edge * qs * qs / 3.0, edge).unwrap();
        assert!(matches!(localized_no_aging(&p, &nu), Err(Error::Unstable { .. })));
    }

    #[test]
    fn i_vanishes_without_aging() {
        // γ = 1/2 with D∞ = 0 gives I = 0 exactly.
        let d = 0.0;
        let i = 0.5 - 0.5 + 2.0 * 0.09 * d * cubic().d1(d);
        assert_eq!(i, 0.0);
    }

    proptest! {
        #[test]
        fn pure_models_satisfy_third_identity(alpha in -1.0f64..1.0, qs in 0.05f64..=1.0, m in 2usize..6) {
            let nu = MixingFunction::pure(m, 0.3).unwrap();
            let lhs = nu.d1(alpha * alpha) * nu.d1(qs * qs) - nu.d1(alpha * qs).powi(2);
            prop_assert!(lhs.abs() <= 1e-12);
        }
    }
}
