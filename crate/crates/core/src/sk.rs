//! Closed-form spherical SK dynamics (`ν(x) = x²/8`), used as an analytic
//! oracle for the general solvers.
//!
//! The two-time field `M(s,t) = C̄(s,t)Λ(s)Λ(t)` solves a *linear* Volterra
//! system. It is marched with an integrating-factor trapezoid scheme, which
//! commutes exactly with the rescaling `M ↦ e^{−βG(s+t)}M`, so the discrete
//! solution obeys the superposition principle to rounding error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdt;
use crate::model::{MixingFunction, ModelParams};
use crate::quad::composite_gauss_legendre;
use crate::volterra::{Constraint, TwoTimeBundle, TwoTimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkParams {
    pub beta: f64,
    pub g_star: f64,
    pub q_star: f64,
    pub q_o: f64,
}

impl SkParams {
    pub fn new(beta: f64, g_star: f64, q_star: f64, q_o: f64) -> Result<Self> {
        let p = Self { beta, g_star, q_star, q_o };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParam(format!("beta = {} must be positive", self.beta)));
        }
        if !(self.g_star > 1.0 && self.g_star.is_finite()) {
            return Err(Error::Domain(format!("G* = {} must exceed 1", self.g_star)));
        }
        if !(self.q_star > 0.0 && self.q_star <= 1.0) {
            return Err(Error::InvalidParam(format!("q_star = {} must lie in (0, 1]", self.q_star)));
        }
        if !(self.q_o.abs() <= self.q_star) {
            return Err(Error::InvalidParam(format!("|q_o| = {} exceeds q_star", self.q_o.abs())));
        }
        Ok(())
    }

    /// `E⋆ = G⋆q⋆²/2`.
    pub fn e_star(&self) -> f64 {
        0.5 * self.g_star * self.q_star * self.q_star
    }

    /// Equivalent hard-sphere model parameters.
    pub fn model_params(&self) -> Result<ModelParams> {
        ModelParams::hard(&MixingFunction::sk(), self.beta, self.q_star, self.q_o, self.e_star(), self.g_star)
    }

    /// Inverse of [`SkParams::model_params`]; rejects non-SK mixing.
    pub fn from_model(params: &ModelParams, nu: &MixingFunction) -> Result<Self> {
        if nu != &MixingFunction::sk() {
            return Err(Error::InvalidMixing("the closed form needs nu(x) = x^2/8".into()));
        }
        params.validate(nu)?;
        Self::new(params.beta, params.g_star, params.q_star, params.q_o)
    }
}

/// Below this argument `2I₁(z)/z` is summed from its power series.
const SERIES_SWITCH: f64 = 20.0;

/// `e^{−z} · 2I₁(z)/z`.
fn scaled_bessel_ratio(z: f64) -> f64 {
    let z = z.abs();
    if z <= SERIES_SWITCH {
        (-z).exp() * bessel_ratio_series(z)
    } else {
        scaled_bessel_ratio_asymptotic(z)
    }
}

fn scaled_bessel_ratio_asymptotic(z: f64) -> f64 {
    // I₁(z) ~ e^z/√(2πz) Σ_k (−1)^k a_k(1)/z^k,
    // a_k(1) = Π_{j=1}^k (4 − (2j−1)²) / (k! 8^k).
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (4.0 - odd * odd) / (k as f64 * 8.0 * z);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    2.0 / z * sum / (2.0 * std::f64::consts::PI * z).sqrt()
}

/// `Σ_k (z/2)^{2k} / (k!(k+1)!)`.
fn bessel_ratio_series(z: f64) -> f64 {
    let w = 0.25 * z * z;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= w / (k * (k + 1.0));
        sum += term;
        if term < 1e-17 * sum {
            return sum;
        }
    }
}

/// `ℒ(θ) = (2/π)∫_{−1}^{1} e^{βθx}√(1−x²) dx = 2I₁(βθ)/(βθ)`.
pub fn semicircle_l(theta: f64, beta: f64) -> f64 {
    let z = beta * theta;
    if z.abs() <= SERIES_SWITCH {
        bessel_ratio_series(z.abs())
    } else {
        z.abs().exp() * scaled_bessel_ratio(z)
    }
}

/// `ℒ_G(θ) = e^{−βGθ}ℒ(θ)`, evaluated without overflow.
pub fn l_g(theta: f64, beta: f64, g: f64) -> f64 {
    let z = beta * theta;
    (z.abs() - beta * g * theta).exp() * scaled_bessel_ratio(z)
}

/// `y = G − √(G² − 1)`, the smaller root of `1 − 2Gy + y² = 0`.
pub fn y_of_g(g: f64) -> Result<f64> {
    if !(g >= 1.0) {
        return Err(Error::Domain(format!("G* = {g} is below 1")));
    }
    Ok(1.0 / (g + (g * g - 1.0).sqrt()))
}

/// `H = μ/(2β) − 1/(4β)`.
pub fn h_of_mu(mu: f64, beta: f64) -> f64 {
    mu / (2.0 * beta) - 1.0 / (4.0 * beta)
}

/// Linear two-time solve of
/// `∂_s M = −βG M + (β²/4)[∫_0^s ℒ_G(s−u)M(u,t)du + ∫_0^t ℒ_G(t−u)M(u,s)du]`
/// for `s > t`, with diagonal
/// `M'(t) = q_o² + (1 − 2βG)M(t) + β²∫_0^t ℒ_G(t−u)M(t,u)du`, `M(0) = m0`.
///
/// Returns the lower triangle `m[i][j] = M(t_i, t_j)`.
pub fn solve_m_linear(beta: f64, g: f64, q_o_sq: f64, m0: f64, grid: TwoTimeGrid) -> Result<Vec<Vec<f64>>> {
    let n = grid.n;
    let h = grid.h;
    let b2 = beta * beta;
    let lg: Vec<f64> = (0..=n).map(|k| l_g(grid.t(k), beta, g)).collect();
    // lrev[n − k] = ℒ_G(t_k), so ℒ_G(t_i − t_u) for u = 0..=i is lrev[n−i..=n].
    let lrev: Vec<f64> = lg.iter().rev().copied().collect();
    let e_off = (-beta * g * h).exp();
    let e_diag = ((1.0 - 2.0 * beta * g) * h).exp();

    // sym[j][u] = M(t_j, t_u) for every stored u.
    let mut sym: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    sym.push(vec![m0]);

    // ∫_0^{t_j} ℒ_G(t_j − u) row(u) du by trapezoid.
    let conv = |row: &[f64], j: usize| -> f64 {
        if j == 0 {
            return 0.0;
        }
        let l = &lrev[n - j..=n];
        let mut acc = 0.5 * (l[0] * row[0] + l[j] * row[j]);
        for u in 1..j {
            acc += l[u] * row[u];
        }
        h * acc
    };
    // Off-diagonal right-hand side without the −βG M term, and the diagonal
    // source `q_o² + β² ∫ ℒ_G M`, at row s given that row and history.
    let rhs = |sym: &Vec<Vec<f64>>, s: usize, row: &[f64]| -> (Vec<f64>, f64) {
        let l = &lrev[n - s..=n];
        let tau = |u: usize| if s == 0 { 0.0 } else if u == 0 || u == s { 0.5 * h } else { h };
        let a: Vec<f64> = (0..=s).map(|u| tau(u) * l[u]).collect();
        let f: Vec<f64> = (0..=s)
            .map(|j| {
                let first = if j < s {
                    let col = &sym[j];
                    a[..s].iter().zip(&col[..s]).map(|(x, y)| x * y).sum::<f64>() + a[s] * row[j]
                } else {
                    a.iter().zip(row).map(|(x, y)| x * y).sum::<f64>()
                };
                0.25 * b2 * (first + conv(row, j))
            })
            .collect();
        (f, q_o_sq + b2 * conv(row, s))
    };

    for i in 0..n {
        let row_i: Vec<f64> = sym[i][..=i].to_vec();
        let (f0, src0) = rhs(&sym, i, &row_i);
        let mut pred: Vec<f64> = (0..=i).map(|j| e_off * (row_i[j] + h * f0[j])).collect();
        pred.push(e_diag * (row_i[i] + h * src0));
        let (f1, src1) = rhs(&sym, i + 1, &pred);
        let mut new: Vec<f64> =
            (0..=i).map(|j| e_off * row_i[j] + 0.5 * h * (e_off * f0[j] + f1[j])).collect();
        new.push(e_diag * row_i[i] + 0.5 * h * (e_diag * src0 + src1));
        if let Some(bad) = new.iter().find(|x| !x.is_finite()) {
            return Err(Error::StepUnstable { step: i + 1, time: grid.t(i + 1), field: "M", value: *bad });
        }
        for j in 0..=i {
            sym[j].push(new[j]);
        }
        sym.push(new);
    }
    for (i, row) in sym.iter_mut().enumerate() {
        row.truncate(i + 1);
    }
    Ok(sym)
}

/// `M` and every field derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkSolution {
    pub params: SkParams,
    pub grid: TwoTimeGrid,
    pub m: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub q: Vec<f64>,
    pub r: Vec<Vec<f64>>,
    pub c_bar: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub energy: Vec<f64>,
}

impl SkSolution {
    pub fn m_diag(&self) -> Vec<f64> {
        self.m.iter().enumerate().map(|(i, row)| row[i]).collect()
    }

    /// Repackages the solution as a hard-sphere bundle for comparisons.
    pub fn to_bundle(&self) -> Result<TwoTimeBundle> {
        let v = self.params.model_params()?.drift(&MixingFunction::sk())?;
        let n = self.grid.n + 1;
        Ok(TwoTimeBundle {
            grid: self.grid,
            constraint: Constraint::Hard,
            q_star: self.params.q_star,
            r: self.r.clone(),
            c: self.c.clone(),
            q: self.q.clone(),
            k: vec![1.0; n],
            energy: self.energy.clone(),
            h_hat: self.energy.iter().zip(&self.q).map(|(e, q)| e - v.value(*q)).collect(),
            mu: self.mu.clone(),
            k_pre: vec![1.0; n],
        })
    }
}

/// Solves for `M` from `M(0) = q⋆² − q_o²` and derives
/// `Λ = √(q_o² + M(t))`, `q = q⋆q_o/Λ`, `R(s,t) = Λ(t)/Λ(s)·ℒ_G(s−t)`,
/// `C̄ = M/(Λ(s)Λ(t))`, `C = C̄ + q(s)q(t)/q⋆²`, `μ = βG + M'(t)/(2Λ²)` and
/// `H = μ/(2β) − 1/(4β)`.
pub fn solve_m(params: &SkParams, grid: TwoTimeGrid) -> Result<SkSolution> {
    params.validate()?;
    let SkParams { beta, g_star: g, q_star, q_o } = *params;
    let qo2 = q_o * q_o;
    let m = solve_m_linear(beta, g, qo2, q_star * q_star - qo2, grid)?;
    let n = grid.n;
    let h = grid.h;
    let lambda: Vec<f64> = (0..=n).map(|i| (qo2 + m[i][i]).sqrt()).collect();
    let q: Vec<f64> = lambda.iter().map(|l| q_star * q_o / l).collect();
    let lg: Vec<f64> = (0..=n).map(|k| l_g(grid.t(k), beta, g)).collect();
    let r: Vec<Vec<f64>> = (0..=n).map(|i| (0..=i).map(|j| lambda[j] / lambda[i] * lg[i - j]).collect()).collect();
    let c_bar: Vec<Vec<f64>> =
        (0..=n).map(|i| (0..=i).map(|j| m[i][j] / (lambda[i] * lambda[j])).collect()).collect();
    let c: Vec<Vec<f64>> = (0..=n)
        .map(|i| (0..=i).map(|j| c_bar[i][j] + q[i] * q[j] / (q_star * q_star)).collect())
        .collect();
    let mu: Vec<f64> = (0..=n)
        .map(|i| {
            let row = &m[i];
            let conv = if i == 0 {
                0.0
            } else {
                h * (0.5 * (lg[i] * row[0] + lg[0] * row[i]) + (1..i).map(|u| lg[i - u] * row[u]).sum::<f64>())
            };
            let m_prime = qo2 + (1.0 - 2.0 * beta * g) * row[i] + beta * beta * conv;
            beta * g + m_prime / (2.0 * lambda[i] * lambda[i])
        })
        .collect();
    let energy = mu.iter().map(|&x| h_of_mu(x, beta)).collect();
    Ok(SkSolution { params: *params, grid, m, lambda, q, r, c_bar, c, mu, energy })
}

/// Tail cutoff `U` with `e^{−β(G−1)U}/(β(G−1)) ≤ 1e−12`.
pub fn tail_cutoff(beta: f64, g: f64) -> f64 {
    let k = beta * (g - 1.0);
    ((1e-12 * k).ln() / -k).max(0.0)
}

/// `∫_a^b ℒ_G` by composite Gauss–Legendre with panels of width ≤ 1/2.
fn integral_l_g(a: f64, b: f64, beta: f64, g: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let panels = ((b - a) / 0.5).ceil() as usize;
    composite_gauss_legendre(a, b, panels, |u| l_g(u, beta, g))
}

fn require_localized(params: &SkParams) -> Result<f64> {
    let y = y_of_g(params.g_star)?;
    if params.beta <= y {
        return Err(Error::Delocalized { beta: params.beta, y });
    }
    Ok(y)
}

/// `c = 2(1 − y/β)`.
pub fn c_const(params: &SkParams) -> Result<f64> {
    let y = require_localized(params)?;
    Ok(2.0 * (1.0 - y / params.beta))
}

/// `Γ(τ) = (1/c)∫_τ^∞ ℒ_G(u) du`, truncated at [`tail_cutoff`].
pub fn stationary_gamma(tau: f64, params: &SkParams) -> Result<f64> {
    let c = c_const(params)?;
    let u = tail_cutoff(params.beta, params.g_star).max(tau);
    Ok(integral_l_g(tau, u, params.beta, params.g_star) / c)
}

/// `∫_0^∞ ℒ_G`, truncated at [`tail_cutoff`].
pub fn l_g_total(beta: f64, g: f64) -> f64 {
    integral_l_g(0.0, tail_cutoff(beta, g), beta, g)
}

/// `1 + (1 − 2βG)Γ(0) + β²∫_0^∞ ℒ_G(u)Γ(u) du`, evaluated by nested
/// quadrature.
pub fn stationarity_residual(params: &SkParams) -> Result<f64> {
    let c = c_const(params)?;
    let (beta, g) = (params.beta, params.g_star);
    let u_max = tail_cutoff(beta, g);
    let total = l_g_total(beta, g);
    let panels = (u_max / 0.5).ceil() as usize;
    let w = u_max / panels as f64;
    let rule = gauss_quad::legendre::GaussLegendre::new(16).expect("degree >= 2");
    let mut done = 0.0;
    let mut outer = 0.0;
    for k in 0..panels {
        let lo = k as f64 * w;
        outer += rule.integrate(lo, lo + w, |u| {
            let head = done + rule.integrate(lo, u, |v| l_g(v, beta, g));
            l_g(u, beta, g) * (total - head) / c
        });
        done += rule.integrate(lo, lo + w, |v| l_g(v, beta, g));
    }
    Ok(1.0 + (1.0 - 2.0 * beta * g) * (total / c) + beta * beta * outer)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkAsymptotics {
    pub y: f64,
    pub c: f64,
    pub alpha_sq: f64,
    pub mu_inf: f64,
    pub h_inf: f64,
    pub grid: TwoTimeGrid,
    /// `C_fdt(τ) = 1 − ½∫_0^τ ℒ_G`.
    pub c_fdt: Vec<f64>,
}

pub fn sk_asymptotics(params: &SkParams, grid: TwoTimeGrid) -> Result<SkAsymptotics> {
    params.validate()?;
    let y = require_localized(params)?;
    let (beta, g) = (params.beta, params.g_star);
    let mut c_fdt = Vec::with_capacity(grid.n + 1);
    let mut acc = 0.0;
    c_fdt.push(1.0);
    for i in 1..=grid.n {
        acc += integral_l_g(grid.t(i - 1), grid.t(i), beta, g);
        c_fdt.push(1.0 - 0.5 * acc);
    }
    Ok(SkAsymptotics {
        y,
        c: 2.0 * (1.0 - y / beta),
        alpha_sq: 1.0 - y / beta,
        mu_inf: beta * g,
        h_inf: g / 2.0 - 1.0 / (4.0 * beta),
        grid,
        c_fdt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdtConsistency {
    /// `γ = βG − β²/2`, so that `φ(x) = βG + β²(x−1)/2`.
    pub gamma: f64,
    /// `sup_τ |D(τ) − C_fdt(τ)|`.
    pub gap: f64,
    /// `φ(1)`, to be compared with `μ_∞ = βG`.
    pub phi_one: f64,
    pub mu_inf: f64,
    /// `φ(α²)(1 − α²)`, which should equal 1/2.
    pub boundary_value: f64,
}

/// Solves the one-time FDT equation with the affine SK `φ` and compares it
/// with the closed-form `C_fdt`.
pub fn fdt_consistency(params: &SkParams, grid: TwoTimeGrid) -> Result<FdtConsistency> {
    let asym = sk_asymptotics(params, grid)?;
    let beta = params.beta;
    let gamma = beta * params.g_star - 0.5 * beta * beta;
    let nu = MixingFunction::sk();
    let prof = fdt::solve_d(gamma, beta, &nu, grid)?;
    let gap = prof.d.iter().zip(&asym.c_fdt).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(FdtConsistency {
        gamma,
        gap,
        phi_one: fdt::phi(gamma, beta, &nu, 1.0),
        mu_inf: asym.mu_inf,
        boundary_value: fdt::phi(gamma, beta, &nu, asym.alpha_sq) * (1.0 - asym.alpha_sq),
    })
}

/// Residual of `ℒ_G'(τ) = −βGℒ_G(τ) + (β²/4)∫_0^∞ ℒ_G(u)ℒ_G(τ−u) du`.
///
/// `ℒ_G` is extended by zero to negative arguments, matching `R(s,t) = 0`
/// for `t > s`; the integral then runs over `[0, τ]`. The analytic
/// continuation `e^{βGx}ℒ(x)` makes the integral diverge for every `G`.
pub fn ode_cl_residual(tau: f64, beta: f64, g: f64) -> f64 {
    let eps = 1e-4;
    let f = |x: f64| l_g(x, beta, g);
    // fourth-order central difference
    let deriv = (f(tau - 2.0 * eps) - 8.0 * f(tau - eps) + 8.0 * f(tau + eps) - f(tau + 2.0 * eps)) / (12.0 * eps);
    let conv = composite_gauss_legendre(0.0, tau, (tau / 0.25).ceil().max(1.0) as usize, |u| f(u) * f(tau - u));
    deriv - (-beta * g * f(tau) + 0.25 * beta * beta * conv)
}
