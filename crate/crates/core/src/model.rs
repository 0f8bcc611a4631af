//! Model definition: mixing function, parameters, conditional drift and
//! confinement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for exact algebraic constraints (pure `G = mE/q*^2`,
/// canonical `phi`).
pub const EXACT_RTOL: f64 = 1e-12;

/// The covariance polynomial `ν(r) = Σ_{p≥2} b_p² r^p`.
///
/// Only the squares `b_p²` are stored; the disorder sampler uses
/// `b_p = +sqrt(b_p²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixingFunction {
    /// `coeffs_sq[i]` is `b_{i+2}²`.
    coeffs_sq: Vec<f64>,
}

impl MixingFunction {
    /// Builds `ν` from `[b_2², b_3², ..., b_m²]`.
    ///
    /// The last entry must be positive unless every entry is zero, in which
    /// case the result is the null model `ν ≡ 0`.
    pub fn new(coeffs_sq: Vec<f64>) -> Result<Self> {
        if coeffs_sq.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidMixing(format!(
                "coefficients must be finite and non-negative: {coeffs_sq:?}"
            )));
        }
        if coeffs_sq.iter().all(|&c| c == 0.0) {
            return Ok(Self::zero());
        }
        if *coeffs_sq.last().unwrap() == 0.0 {
            return Err(Error::InvalidMixing(
                "top-degree coefficient b_m^2 must be positive".into(),
            ));
        }
        Ok(Self { coeffs_sq })
    }

    /// The null model `ν ≡ 0`.
    pub fn zero() -> Self {
        Self { coeffs_sq: Vec::new() }
    }

    /// `ν(r) = b² r^p`.
    pub fn pure(p: usize, b_sq: f64) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidMixing(format!("degree {p} < 2")));
        }
        let mut c = vec![0.0; p - 1];
        c[p - 2] = b_sq;
        Self::new(c)
    }

    /// Spherical SK: `ν(r) = r²/8`.
    pub fn sk() -> Self {
        Self { coeffs_sq: vec![0.125] }
    }

    pub fn coeffs_sq(&self) -> &[f64] {
        &self.coeffs_sq
    }

    /// `b_p²` (zero outside the stored range).
    pub fn coeff_sq(&self, p: usize) -> f64 {
        if p < 2 {
            0.0
        } else {
            self.coeffs_sq.get(p - 2).copied().unwrap_or(0.0)
        }
    }

    /// Top degree `m`, or `None` for the null model.
    pub fn degree(&self) -> Option<usize> {
        if self.coeffs_sq.is_empty() {
            None
        } else {
            Some(self.coeffs_sq.len() + 1)
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs_sq.is_empty()
    }

    pub fn is_pure(&self) -> bool {
        self.coeffs_sq.iter().filter(|&&c| c > 0.0).count() == 1
    }

    /// Degrees `p` with `b_p² > 0`, ascending.
    pub fn active_degrees(&self) -> impl Iterator<Item = usize> + '_ {
        self.coeffs_sq
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0.0)
            .map(|(i, _)| i + 2)
    }

    /// `ν^{(order)}(r)` by Horner's rule on the differentiated coefficients.
    pub fn derivative(&self, r: f64, order: u32) -> f64 {
        let k = order as usize;
        let m = match self.degree() {
            Some(m) if m >= k => m,
            _ => return 0.0,
        };
        // Σ_{p=max(2,k)}^{m} b_p² p!/(p-k)! r^{p-k}
        let mut acc = 0.0;
        for p in (2.max(k)..=m).rev() {
            let mut falling = 1.0;
            for j in 0..k {
                falling *= (p - j) as f64;
            }
            acc = acc * r + self.coeffs_sq[p - 2] * falling;
        }
        // Horner above multiplies by r once per degree step down to p = max(2,k);
        // the remaining power is r^{max(2,k)-k}.
        let low = 2.max(k) - k;
        acc * r.powi(low as i32)
    }

    pub fn value(&self, r: f64) -> f64 {
        self.derivative(r, 0)
    }

    pub fn d1(&self, r: f64) -> f64 {
        self.derivative(r, 1)
    }

    pub fn d2(&self, r: f64) -> f64 {
        self.derivative(r, 2)
    }

    pub fn d3(&self, r: f64) -> f64 {
        self.derivative(r, 3)
    }

    /// `ψ(r) = r ν''(r) + ν'(r)`.
    pub fn psi(&self, r: f64) -> f64 {
        r * self.d2(r) + self.d1(r)
    }

    /// `θ(q) = ν(1) - ν(q) - ν'(q)(1-q)`.
    pub fn theta(&self, q: f64) -> f64 {
        self.value(1.0) - self.value(q) - self.d1(q) * (1.0 - q)
    }

    /// `g(x) = ν''(x)(1-x)²`.
    pub fn g_landscape(&self, x: f64) -> f64 {
        self.d2(x) * (1.0 - x) * (1.0 - x)
    }

    /// Returns `β² ν` (the mixing function after absorbing `β` into `b_p`).
    pub fn scaled(&self, factor_sq: f64) -> Self {
        Self { coeffs_sq: self.coeffs_sq.iter().map(|c| c * factor_sq).collect() }
    }
}

impl TryFrom<Vec<f64>> for MixingFunction {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MixingFunction> for Vec<f64> {
    fn from(m: MixingFunction) -> Self {
        m.coeffs_sq
    }
}

/// The conditional drift polynomial `v(r) = Σ_p b_p² <v_p,(E,G)> r^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftPolynomial {
    /// `coeffs[i]` multiplies `r^{i+2}`.
    coeffs: Vec<f64>,
    /// `inner[i] = <v_{i+2}, (E,G)>`.
    inner: Vec<f64>,
}

impl DriftPolynomial {
    pub fn zero() -> Self {
        Self { coeffs: Vec::new(), inner: Vec::new() }
    }

    /// Builds `v` for the pair `(E, G)` at radius `q_star`.
    ///
    /// Pure models use the closed form `v(r) = E q*^{-2m} r^m`; mixed models
    /// invert the 2×2 moment matrix per degree.
    pub fn build(nu: &MixingFunction, q_star: f64, e: f64, g: f64) -> Result<Self> {
        if nu.is_zero() {
            if e == 0.0 && g == 0.0 {
                return Ok(Self::zero());
            }
            return Err(Error::SingularMatrix(0.0));
        }
        let m = nu.degree().unwrap();
        let a = q_star * q_star;
        if nu.is_pure() {
            let expected = m as f64 * e / a;
            if (g - expected).abs() > EXACT_RTOL * g.abs().max(expected.abs()) {
                return Err(Error::PureInconsistent { g, expected });
            }
            let mut coeffs = vec![0.0; m - 1];
            let mut inner = vec![0.0; m - 1];
            coeffs[m - 2] = e * a.powi(-(m as i32));
            inner[m - 2] = coeffs[m - 2] / nu.coeff_sq(m);
            return Ok(Self { coeffs, inner });
        }
        let (m11, m12, m22) = (a * nu.value(a), a * nu.d1(a), nu.psi(a));
        let det = m11 * m22 - m12 * m12;
        if det <= 1e-13 * m11 * m22 {
            return Err(Error::SingularMatrix(det));
        }
        let mut coeffs = Vec::with_capacity(m - 1);
        let mut inner = Vec::with_capacity(m - 1);
        for p in 2..=m {
            let pf = p as f64;
            // v_p = M^{-1} (a, p)
            let v1 = (m22 * a - m12 * pf) / det;
            let v2 = (-m12 * a + m11 * pf) / det;
            let ip = v1 * e + v2 * g;
            inner.push(ip);
            coeffs.push(nu.coeff_sq(p) * ip);
        }
        Ok(Self { coeffs, inner })
    }

    /// Coefficients of `r^p`, starting at `p = 2`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `<v_p, (E,G)>` for `p = 2, 3, ...`.
    pub fn inner_products(&self) -> &[f64] {
        &self.inner
    }

    pub fn value(&self, r: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = acc * r + c;
        }
        acc * r * r
    }

    /// `v'(r)`.
    pub fn prime(&self, r: f64) -> f64 {
        let mut acc = 0.0;
        for (i, &c) in self.coeffs.iter().enumerate().rev() {
            acc = acc * r + c * (i + 2) as f64;
        }
        acc * r
    }
}

/// Spherical confinement: the soft potential
/// `f_L(r) = L(r-1)² + (φ/4k) r^{2k}` or the hard sphere `|x|² = N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Confinement {
    Soft { l: f64, k: u32, phi: f64 },
    Hard { phi: f64 },
}

impl Confinement {
    pub fn phi(&self) -> f64 {
        match *self {
            Confinement::Soft { phi, .. } | Confinement::Hard { phi } => phi,
        }
    }

    pub fn is_hard(&self) -> bool {
        matches!(self, Confinement::Hard { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: f64,
    pub q_star: f64,
    pub q_o: f64,
    pub e_star: f64,
    pub g_star: f64,
    pub confinement: Confinement,
}

impl ModelParams {
    /// Parameters on the hard sphere with the canonical
    /// `φ = 1 + 2β q_o v⋆'(q_o)`.
    pub fn hard(
        nu: &MixingFunction,
        beta: f64,
        q_star: f64,
        q_o: f64,
        e_star: f64,
        g_star: f64,
    ) -> Result<Self> {
        let mut p = Self {
            beta,
            q_star,
            q_o,
            e_star,
            g_star,
            confinement: Confinement::Hard { phi: 1.0 },
        };
        p.confinement = Confinement::Hard { phi: p.canonical_phi(nu)? };
        Ok(p)
    }

    /// Same model with soft confinement `f_L` and canonical `φ`.
    pub fn with_soft(&self, nu: &MixingFunction, l: f64, k: u32) -> Result<Self> {
        let phi = self.canonical_phi(nu)?;
        Ok(Self { confinement: Confinement::Soft { l, k, phi }, ..*self })
    }

    /// Same model on the hard sphere with canonical `φ`.
    pub fn with_hard(&self, nu: &MixingFunction) -> Result<Self> {
        let phi = self.canonical_phi(nu)?;
        Ok(Self { confinement: Confinement::Hard { phi }, ..*self })
    }

    pub fn drift(&self, nu: &MixingFunction) -> Result<DriftPolynomial> {
        DriftPolynomial::build(nu, self.q_star, self.e_star, self.g_star)
    }

    /// `1 + 2β q_o v⋆'(q_o)`.
    pub fn canonical_phi(&self, nu: &MixingFunction) -> Result<f64> {
        let v = self.drift(nu)?;
        Ok(1.0 + 2.0 * self.beta * self.q_o * v.prime(self.q_o))
    }

    /// `f'(r) = 2L(r-1) + (φ/2) r^{2k-1}`.
    pub fn f_prime(&self, r: f64) -> Result<f64> {
        match self.confinement {
            Confinement::Soft { l, k, phi } => {
                Ok(2.0 * l * (r - 1.0) + 0.5 * phi * r.powi(2 * k as i32 - 1))
            }
            Confinement::Hard { .. } => Err(Error::HardConstraint),
        }
    }

    /// Checks every parameter invariant against `nu`.
    pub fn validate(&self, nu: &MixingFunction) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad(format!("beta = {} must be positive", self.beta));
        }
        if !(self.q_star > 0.0 && self.q_star <= 1.0) {
            return bad(format!("q_star = {} must lie in (0, 1]", self.q_star));
        }
        if !(self.q_o.abs() <= self.q_star) {
            return bad(format!("|q_o| = {} exceeds q_star = {}", self.q_o.abs(), self.q_star));
        }
        if !(self.e_star.is_finite() && self.g_star.is_finite()) {
            return bad("E* and G* must be finite".into());
        }
        if !nu.is_zero() && nu.d1(self.q_star * self.q_star) <= 0.0 {
            return bad("nu'(q_star^2) must be positive".into());
        }
        // Covers PureInconsistent and SingularMatrix.
        let v = self.drift(nu)?;
        match self.confinement {
            Confinement::Soft { l, k, phi } => {
                if !(l.is_finite() && l > 0.0) {
                    return bad(format!("L = {l} must be positive"));
                }
                let m = nu.degree().unwrap_or(2);
                if k == 0 || 4 * k as usize <= m {
                    return bad(format!("confinement exponent k = {k} must exceed m/4 = {}", m as f64 / 4.0));
                }
                if !phi.is_finite() {
                    return bad("phi must be finite".into());
                }
            }
            Confinement::Hard { phi } => {
                let expected = 1.0 + 2.0 * self.beta * self.q_o * v.prime(self.q_o);
                if (phi - expected).abs() > EXACT_RTOL * phi.abs().max(expected.abs()) {
                    return Err(Error::PhiMismatch { got: phi, expected });
                }
                if phi <= 0.0 {
                    return Err(Error::PhiNonpositive(phi));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cubic() -> MixingFunction {
        MixingFunction::pure(3, 0.125).unwrap()
    }

    fn mixed() -> MixingFunction {
        MixingFunction::new(vec![0.125, 0.125]).unwrap()
    }

    #[test]
    fn sk_derivatives() {
        let nu = MixingFunction::sk();
        assert_abs_diff_eq!(nu.derivative(1.0, 0), 0.125);
        assert_eq!(nu.derivative(0.0, 1), 0.0);
        assert_abs_diff_eq!(nu.derivative(0.0, 2), 0.25);
        assert_eq!(nu.derivative(0.3, 3), 0.0);
        assert_abs_diff_eq!(cubic().d2(1.0), 0.75);
        assert_abs_diff_eq!(cubic().d3(0.4), 0.75);
    }

    #[test]
    fn derivatives_match_monomial_expansion() {
        let nu = MixingFunction::new(vec![0.3, 0.0, 0.2, 0.05]).unwrap();
        let r: f64 = -0.7;
        let brute = |k: u32| -> f64 {
            (2..=5usize)
                .map(|p| {
                    let c = nu.coeff_sq(p);
                    if (p as u32) < k {
                        return 0.0;
                    }
                    let f: f64 = (0..k).map(|j| (p as u32 - j) as f64).product();
                    c * f * r.powi(p as i32 - k as i32)
                })
                .sum()
        };
        for k in 0..=3 {
            assert_abs_diff_eq!(nu.derivative(r, k), brute(k), epsilon = 1e-14);
        }
    }

    #[test]
    fn psi_theta_g() {
        let sk = MixingFunction::sk();
        assert_abs_diff_eq!(sk.psi(0.3), 0.15, epsilon = 1e-15);
        assert_eq!(cubic().psi(0.0), 0.0);
        assert_abs_diff_eq!(cubic().psi(1.0), 9.0 / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sk.theta(1.0), 0.0);
        assert_abs_diff_eq!(sk.theta(0.0), 0.125);
        assert_abs_diff_eq!(sk.theta(0.5), 0.03125, epsilon = 1e-15);
        assert_abs_diff_eq!(sk.g_landscape(1.0), 0.0);
        assert_abs_diff_eq!(sk.g_landscape(0.0), 0.25);
        assert_abs_diff_eq!(cubic().g_landscape(1.0 - 2.0 / 3.0), 1.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_coefficients() {
        assert!(MixingFunction::new(vec![0.1, -0.2]).is_err());
        assert!(MixingFunction::new(vec![0.1, 0.0]).is_err());
        assert!(MixingFunction::new(vec![0.0, 0.0]).unwrap().is_zero());
        assert!(cubic().is_pure());
        assert!(!mixed().is_pure());
        assert!(!MixingFunction::zero().is_pure());
    }

    #[test]
    fn pure_drift_closed_form() {
        let v = DriftPolynomial::build(&cubic(), 1.0, 1.0, 3.0).unwrap();
        assert_abs_diff_eq!(v.value(0.7), 0.7f64.powi(3), epsilon = 1e-15);
        assert_eq!(v.prime(0.0), 0.0);
        assert_abs_diff_eq!(v.prime(0.5), 0.75, epsilon = 1e-15);
        let z = DriftPolynomial::build(&mixed(), 0.9, 0.0, 0.0).unwrap();
        assert!(z.coeffs().iter().all(|&c| c == 0.0));
        assert_eq!(z.prime(0.4), 0.0);
    }

    #[test]
    fn pure_inconsistent_is_rejected() {
        let e = DriftPolynomial::build(&MixingFunction::sk(), 1.0, 1.0, 1.0).unwrap_err();
        assert!(matches!(e, Error::PureInconsistent { .. }));
    }

    #[test]
    fn mixed_drift_against_explicit_inverse() {
        // Independent oracle: Cramer's rule on the 2x2 moment system.
        let nu = mixed();
        let (qs, e, g) = (0.9f64, 1.0, 1.0);
        let a = qs * qs;
        let nu_a = a * a / 8.0 + a * a * a / 8.0;
        let d1 = a / 4.0 + 3.0 * a * a / 8.0;
        let d2 = 0.25 + 0.75 * a;
        let m = [[a * nu_a, a * d1], [a * d1, a * d2 + d1]];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let v = DriftPolynomial::build(&nu, qs, e, g).unwrap();
        for (i, p) in [2.0, 3.0].iter().enumerate() {
            let x = (a * m[1][1] - m[0][1] * p) / det;
            let y = (m[0][0] * p - m[1][0] * a) / det;
            assert_abs_diff_eq!(v.inner_products()[i], x * e + y * g, epsilon = 1e-12);
            // residual of M v_p = (a, p)
            assert_abs_diff_eq!(m[0][0] * x + m[0][1] * y, a, epsilon = 1e-12);
            assert_abs_diff_eq!(m[1][0] * x + m[1][1] * y, *p, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(v.prime(a), g, epsilon = 1e-10);
        assert_abs_diff_eq!(v.value(a), e, epsilon = 1e-10);
    }

    #[test]
    fn f_prime_values() {
        let nu = MixingFunction::sk();
        let mut p = ModelParams::hard(&nu, 1.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        assert!(matches!(p.f_prime(1.0), Err(Error::HardConstraint)));
        p.confinement = Confinement::Soft { l: 10.0, k: 1, phi: 0.0 };
        assert_eq!(p.f_prime(1.0).unwrap(), 0.0);
        p.confinement = Confinement::Soft { l: 10.0, k: 1, phi: 1.0 };
        assert_abs_diff_eq!(p.f_prime(1.0).unwrap(), 0.5);
        assert_abs_diff_eq!(p.f_prime(1.1).unwrap(), 2.55, epsilon = 1e-12);
    }

    #[test]
    fn validate_examples() {
        let nu = MixingFunction::sk();
        let p = ModelParams::hard(&nu, 1.0, 1.0, 0.5, 0.625, 1.25).unwrap();
        p.validate(&nu).unwrap();
        assert_abs_diff_eq!(p.confinement.phi(), 1.0 + 2.0 * 0.5 * 1.25 * 0.5);

        let bad = ModelParams { e_star: 1.0, g_star: 1.0, ..p };
        assert!(matches!(bad.validate(&nu), Err(Error::PureInconsistent { .. })));

        let wrong_phi = ModelParams { confinement: Confinement::Hard { phi: 1.0 }, ..p };
        assert!(matches!(wrong_phi.validate(&nu), Err(Error::PhiMismatch { .. })));

        let soft = p.with_soft(&nu, 100.0, 1).unwrap();
        soft.validate(&nu).unwrap();
        let k_too_small = ModelParams {
            confinement: Confinement::Soft { l: 10.0, k: 1, phi: 1.0 },
            ..ModelParams::hard(&MixingFunction::pure(4, 0.1).unwrap(), 1.0, 1.0, 0.0, 0.0, 0.0).unwrap()
        };
        assert!(k_too_small.validate(&MixingFunction::pure(4, 0.1).unwrap()).is_err());

        let out_of_band = ModelParams { q_o: 1.2, ..p };
        assert!(out_of_band.validate(&nu).is_err());
    }

    #[test]
    fn negative_phi_is_rejected() {
        let nu = MixingFunction::sk();
        // v'(q_o) = G q_o, so phi = 1 + 2 G q_o^2 < 0 for G < -2.
        let p = ModelParams::hard(&nu, 1.0, 1.0, 1.0, -1.5, -3.0).unwrap();
        assert!(matches!(p.validate(&nu), Err(Error::PhiNonpositive(_))));
    }

    proptest! {
        #[test]
        fn psi_identity(r in -1.0f64..1.0, c2 in 0.0f64..1.0, c3 in 0.0f64..1.0, c4 in 0.01f64..1.0) {
            let nu = MixingFunction::new(vec![c2, c3, c4]).unwrap();
            prop_assert!((nu.psi(r) - r * nu.d2(r) - nu.d1(r)).abs() <= 1e-14);
        }

        #[test]
        fn drift_reproduces_moment_system(qs in 0.05f64..=1.0, c2 in 0.01f64..1.0, c3 in 0.0f64..1.0, c5 in 0.01f64..1.0,
                                          e in -3.0f64..3.0, g in -3.0f64..3.0) {
            let nu = MixingFunction::new(vec![c2, c3, 0.0, c5]).unwrap();
            let a = qs * qs;
            let v = DriftPolynomial::build(&nu, qs, e, g).unwrap();
            let (m11, m12, m22) = (a * nu.value(a), a * nu.d1(a), nu.psi(a));
            let det = m11 * m22 - m12 * m12;
            for p in 2..=5usize {
                // reconstruct v_p from (E,G) pairs (1,0) and (0,1)
                let ve = DriftPolynomial::build(&nu, qs, 1.0, 0.0).unwrap().inner_products()[p - 2];
                let vg = DriftPolynomial::build(&nu, qs, 0.0, 1.0).unwrap().inner_products()[p - 2];
                let scale = a.max(p as f64) * (1.0 + (m11 * m22).abs() / det);
                prop_assert!((m11 * ve + m12 * vg - a).abs() <= 1e-12 * scale);
                prop_assert!((m12 * ve + m22 * vg - p as f64).abs() <= 1e-12 * scale);
            }
            let tol = 1e-10 * (1.0 + g.abs() + e.abs()) * (1.0 + (m11 * m22).abs() / det);
            prop_assert!((v.prime(a) - g).abs() <= tol);
        }

        #[test]
        fn drift_is_linear(e1 in -2.0f64..2.0, g1 in -2.0f64..2.0, e2 in -2.0f64..2.0, g2 in -2.0f64..2.0,
                           s in -2.0f64..2.0, t in -2.0f64..2.0) {
            let nu = mixed();
            let v1 = DriftPolynomial::build(&nu, 0.8, e1, g1).unwrap();
            let v2 = DriftPolynomial::build(&nu, 0.8, e2, g2).unwrap();
            let v = DriftPolynomial::build(&nu, 0.8, s * e1 + t * e2, s * g1 + t * g2).unwrap();
            for i in 0..2 {
                let lin = s * v1.coeffs()[i] + t * v2.coeffs()[i];
                prop_assert!((v.coeffs()[i] - lin).abs() <= 1e-11 * (1.0 + lin.abs()));
            }
        }
    }
}
