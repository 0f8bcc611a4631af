//! Two-time limit equations for `R(s,t)`, `C(s,t)`, `q(s)`, `K(s)` and the
//! energy `H(s)`, discretized on a uniform lower-triangular grid.
//!
//! Each new row `s_{i+1}` is obtained by an explicit Euler predictor followed
//! by one trapezoid corrector. All memory integrals use the composite
//! trapezoid rule, with the diagonal endpoint taken from the enforced
//! boundary values `R(s,s) = 1`, `C(s,s) = K(s)`.
//!
//! With soft confinement the norm equation for `K` is stiff (its relaxation
//! rate is about `4L`), so `K` is advanced with BDF2 while `R`, `C` and `q`
//! stay explicit. Their drift `f'(K)` stays of order one.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Confinement, DriftPolynomial, MixingFunction, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoTimeGrid {
    pub h: f64,
    pub n: usize,
}

impl TwoTimeGrid {
    pub fn new(h: f64, n: usize) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidParam(format!("time step h = {h} must be positive")));
        }
        Ok(Self { h, n })
    }

    /// Grid with `n = round(t_max / h)` steps.
    pub fn from_horizon(t_max: f64, h: f64) -> Result<Self> {
        if !(t_max.is_finite() && t_max >= 0.0) {
            return Err(Error::InvalidParam(format!("horizon T = {t_max} must be non-negative")));
        }
        Self::new(h, (t_max / h).round() as usize)
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn t_max(&self) -> f64 {
        self.t(self.n)
    }

    /// Index of time `t` if it lies on the grid (relative slack `1e-9`).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.h;
        let i = x.round();
        ((x - i).abs() <= 1e-9 * x.abs().max(1.0) && i >= 0.0 && i as usize <= self.n)
            .then_some(i as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constraint {
    Soft,
    Hard,
}

/// Discretized solution of the limit equations.
///
/// `r[i][j]` and `c[i][j]` hold `R(t_i,t_j)` and `C(t_i,t_j)` for `j ≤ i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoTimeBundle {
    pub grid: TwoTimeGrid,
    pub constraint: Constraint,
    pub q_star: f64,
    pub r: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub k: Vec<f64>,
    /// `H(s) = Ĥ(s) + v⋆(q(s))`.
    pub energy: Vec<f64>,
    pub h_hat: Vec<f64>,
    /// Hard sphere: the Lagrange multiplier `μ(s)`. Soft: the drift `f'(K(s))`.
    pub mu: Vec<f64>,
    /// Hard sphere: the diagonal `C(s,s)` one would get by integrating the
    /// norm equation with the drift actually used in each corrector step,
    /// before `C(s,s) = 1` is enforced. Soft: a copy of `k`.
    pub k_pre: Vec<f64>,
}

impl TwoTimeBundle {
    pub fn len(&self) -> usize {
        self.grid.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `R(t_i, t_j)` with `R = 0` above the diagonal.
    pub fn r_at(&self, i: usize, j: usize) -> f64 {
        if j > i { 0.0 } else { self.r[i][j] }
    }

    /// `C(t_i, t_j)`, symmetric.
    pub fn c_at(&self, i: usize, j: usize) -> f64 {
        if j > i { self.c[j][i] } else { self.c[i][j] }
    }

    /// `C̄(s,t) = C(s,t) − q(s)q(t)/q⋆²`.
    pub fn c_bar(&self, i: usize, j: usize) -> f64 {
        self.c_at(i, j) - self.q[i] * self.q[j] / (self.q_star * self.q_star)
    }

    /// Integrated response `χ(s,t) = ∫_0^t R(s,u) du` on every `(i, j ≤ i)`.
    pub fn chi(&self) -> Vec<Vec<f64>> {
        self.r
            .iter()
            .map(|row| crate::quad::cumulative_trapezoid(row, self.grid.h))
            .collect()
    }

    /// Restriction to every `stride`-th grid point.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 || !self.grid.n.is_multiple_of(stride) {
            return Err(Error::GridMismatch(format!(
                "stride {stride} does not divide n = {}",
                self.grid.n
            )));
        }
        let idx: Vec<usize> = (0..=self.grid.n).step_by(stride).collect();
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let tri = |m: &[Vec<f64>]| {
            idx.iter()
                .map(|&i| idx.iter().take_while(|&&j| j <= i).map(|&j| m[i][j]).collect())
                .collect()
        };
        Ok(Self {
            grid: TwoTimeGrid::new(self.grid.h * stride as f64, self.grid.n / stride)?,
            constraint: self.constraint,
            q_star: self.q_star,
            r: tri(&self.r),
            c: tri(&self.c),
            q: pick(&self.q),
            k: pick(&self.k),
            energy: pick(&self.energy),
            h_hat: pick(&self.h_hat),
            mu: pick(&self.mu),
            k_pre: pick(&self.k_pre),
        })
    }
}

/// Solver knobs. The defaults reproduce the reference scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Abort with `StepUnstable` once any field exceeds this magnitude.
    pub blowup: f64,
    /// Optional memory cutoff: drop `u < s − window` from every integral.
    pub window: Option<f64>,
    /// Rows shorter than this are evaluated serially.
    pub parallel_min_row: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { blowup: 1e6, window: None, parallel_min_row: 256 }
    }
}

pub fn solve_soft(params: &ModelParams, nu: &MixingFunction, grid: TwoTimeGrid) -> Result<TwoTimeBundle> {
    solve_with(params, nu, grid, &SolverOptions::default())
}

pub fn solve_hard(params: &ModelParams, nu: &MixingFunction, grid: TwoTimeGrid) -> Result<TwoTimeBundle> {
    solve_with(params, nu, grid, &SolverOptions::default())
}

/// Solves with the confinement recorded in `params`.
pub fn solve_with(
    params: &ModelParams,
    nu: &MixingFunction,
    grid: TwoTimeGrid,
    opts: &SolverOptions,
) -> Result<TwoTimeBundle> {
    params.validate(nu)?;
    let ctx = Ctx::new(params, nu, grid, opts)?;
    ctx.run()
}

/// Lower-triangular history. `c_sym[j][u] = C(t_j, t_u)` for all stored `u`,
/// and `r_cols[j][u - j] = R(t_u, t_j)`, so every memory sum walks a
/// contiguous slice.
struct History {
    r_rows: Vec<Vec<f64>>,
    r_cols: Vec<Vec<f64>>,
    c_sym: Vec<Vec<f64>>,
    q: Vec<f64>,
}

/// Single-time quantities of one row, plus the per-`u` weights reused by the
/// two-time right-hand side.
struct RowScalars {
    lo: usize,
    /// `τ_u R(s,u) ν''(C(s,u))`.
    ww: Vec<f64>,
    /// `R(s,u) ν''(C(s,u))`.
    w2: Vec<f64>,
    /// `ν'(C(s,u)) − ν'(q(s)) ν'(q(u)) / ν'(q⋆²)`.
    g: Vec<f64>,
    mu_formula: f64,
    drift: f64,
    fq: f64,
    k_src: f64,
    h_hat: f64,
    /// `ν''(q(s)) Σ τ R ν'(q) / ν'(q⋆²)`.
    c1: f64,
    /// `β v⋆'(q(s))`.
    vq: f64,
}

struct Ctx<'a> {
    nu: &'a MixingFunction,
    v: DriftPolynomial,
    beta: f64,
    a: f64,
    inv_nq: f64,
    grid: TwoTimeGrid,
    confinement: Confinement,
    q_star: f64,
    q_o: f64,
    window: Option<usize>,
    opts: SolverOptions,
}

impl<'a> Ctx<'a> {
    fn new(params: &ModelParams, nu: &'a MixingFunction, grid: TwoTimeGrid, opts: &SolverOptions) -> Result<Self> {
        let a = params.q_star * params.q_star;
        let nq = nu.d1(a);
        let window = match opts.window {
            Some(w) if !(w > 0.0) => {
                return Err(Error::InvalidParam(format!("memory window {w} must be positive")))
            }
            Some(w) => Some((w / grid.h).ceil() as usize),
            None => None,
        };
        Ok(Self {
            nu,
            v: params.drift(nu)?,
            beta: params.beta,
            a,
            inv_nq: if nq > 0.0 { 1.0 / nq } else { 0.0 },
            grid,
            confinement: params.confinement,
            q_star: params.q_star,
            q_o: params.q_o,
            window,
            opts: *opts,
        })
    }

    fn hard(&self) -> bool {
        self.confinement.is_hard()
    }

    fn f_prime(&self, k: f64) -> f64 {
        match self.confinement {
            Confinement::Soft { l, k: ke, phi } => 2.0 * l * (k - 1.0) + 0.5 * phi * k.powi(2 * ke as i32 - 1),
            Confinement::Hard { .. } => unreachable!("drift on the sphere is the multiplier"),
        }
    }

    fn f_second(&self, k: f64) -> f64 {
        match self.confinement {
            Confinement::Soft { l, k: ke, phi } => {
                let e = 2 * ke as i32 - 1;
                2.0 * l + 0.5 * phi * e as f64 * k.powi(e - 1)
            }
            Confinement::Hard { .. } => 0.0,
        }
    }

    fn scalars(&self, s: usize, row_r: &[f64], row_c: &[f64], q_hist: &[f64], q_s: f64) -> RowScalars {
        let h = self.grid.h;
        let nu = self.nu;
        let lo = self.window.map_or(0, |w| s.saturating_sub(w));
        let q_at = |u: usize| if u == s { q_s } else { q_hist[u] };
        let nq_s = nu.d1(q_s);
        let mut ww = vec![0.0; s + 1];
        let mut w2 = vec![0.0; s + 1];
        let mut g = vec![0.0; s + 1];
        let (mut s_psi, mut s_nu1, mut s_q1, mut s_qw) = (0.0, 0.0, 0.0, 0.0);
        for u in lo..=s {
            let tau = if s == lo {
                0.0
            } else if u == lo || u == s {
                0.5 * h
            } else {
                h
            };
            let (r, c) = (row_r[u], row_c[u]);
            let d1c = nu.d1(c);
            let d2c = nu.d2(c);
            let nq_u = nu.d1(q_at(u));
            w2[u] = r * d2c;
            ww[u] = tau * w2[u];
            g[u] = d1c - nq_s * self.inv_nq * nq_u;
            s_psi += tau * r * (c * d2c + d1c);
            s_nu1 += tau * r * d1c;
            s_q1 += tau * r * nq_u;
            s_qw += ww[u] * q_at(u);
        }
        let beta = self.beta;
        let b2 = beta * beta;
        let vprime = self.v.prime(q_s);
        let p = s_psi - nu.psi(q_s) * self.inv_nq * s_q1;
        let mu_formula = 0.5 + b2 * p + beta * q_s * vprime;
        let drift = if self.hard() { mu_formula } else { self.f_prime(row_c[s]) };
        let fq = -drift * q_s + b2 * (s_qw - self.a * nu.d2(q_s) * self.inv_nq * s_q1) + beta * self.a * vprime;
        RowScalars {
            lo,
            ww,
            w2,
            g,
            mu_formula,
            drift,
            fq,
            k_src: 2.0 * b2 * p + 2.0 * beta * q_s * vprime,
            h_hat: beta * (s_nu1 - nq_s * self.inv_nq * s_q1),
            c1: nu.d2(q_s) * self.inv_nq * s_q1,
            vq: beta * vprime,
        }
    }

    /// `(∂_s R(s,t_j), ∂_s C(s,t_j))` for `j = 0..=s`.
    fn fields(
        &self,
        hist: &History,
        s: usize,
        row_r: &[f64],
        row_c: &[f64],
        q_s: f64,
        sc: &RowScalars,
    ) -> (Vec<f64>, Vec<f64>) {
        let h = self.grid.h;
        let b2 = self.beta * self.beta;
        let lo = sc.lo;
        let one = |j: usize| -> (f64, f64) {
            let (r_sj, c_sj) = (row_r[j], row_c[j]);
            // ∫_{t_j}^{s} R(u,t_j) R(s,u) ν''(C(s,u)) du
            let lo_j = lo.max(j);
            let ir = if lo_j >= s {
                0.0
            } else {
                let col = &hist.r_cols[j];
                let mut acc = 0.5 * (col[lo_j - j] * sc.w2[lo_j] + r_sj * sc.w2[s]);
                acc += dot(&col[lo_j - j + 1..s - j], &sc.w2[lo_j + 1..s]);
                h * acc
            };
            // ∫_0^s R(s,u) ν''(C(s,u)) C(u,t_j) du  − q(t_j) ν''(q(s)) ... / ν'(q⋆²)
            let (ic1, q_j) = if j < s {
                let cj = &hist.c_sym[j];
                (dot(&sc.ww[lo..s], &cj[lo..s]) + sc.ww[s] * c_sj, hist.q[j])
            } else {
                (dot(&sc.ww[lo..=s], &row_c[lo..=s]), q_s)
            };
            // ∫_0^{t_j} R(t_j,u) [ν'(C(s,u)) − ν'(q(s))ν'(q(u))/ν'(q⋆²)] du
            let ic2 = if j <= lo {
                0.0
            } else {
                let rj: &[f64] = if j < s { &hist.r_rows[j] } else { row_r };
                h * (0.5 * (rj[lo] * sc.g[lo] + rj[j] * sc.g[j]) + dot(&rj[lo + 1..j], &sc.g[lo + 1..j]))
            };
            let fr = -sc.drift * r_sj + b2 * ir;
            let fc = -sc.drift * c_sj + b2 * (ic1 - q_j * sc.c1 + ic2) + q_j * sc.vq;
            (fr, fc)
        };
        if s + 1 >= self.opts.parallel_min_row {
            (0..=s).into_par_iter().map(one).unzip()
        } else {
            (0..=s).map(one).unzip()
        }
    }

    /// Solves `K − b − γh(1 − 2f'(K)K + src) = 0` by Newton's method.
    fn implicit_k(&self, b: f64, gh: f64, src: f64, guess: f64) -> f64 {
        let mut k = guess;
        for _ in 0..100 {
            let f = k - b - gh * (1.0 - 2.0 * self.f_prime(k) * k + src);
            let df = 1.0 + 2.0 * gh * (self.f_second(k) * k + self.f_prime(k));
            let dk = f / df;
            k -= dk;
            if dk.abs() <= 1e-15 * k.abs().max(1.0) {
                break;
            }
        }
        k
    }

    /// BDF2 for `K` (backward Euler on the first step).
    fn advance_k(&self, k_hist: &[f64], src: f64) -> f64 {
        let h = self.grid.h;
        let i = k_hist.len() - 1;
        let ki = k_hist[i];
        if i == 0 {
            self.implicit_k(ki, h, src, ki)
        } else {
            let b = (4.0 * ki - k_hist[i - 1]) / 3.0;
            self.implicit_k(b, 2.0 * h / 3.0, src, ki)
        }
    }

    fn guard(&self, step: usize, field: &'static str, value: f64) -> Result<()> {
        if value.is_finite() && value.abs() <= self.opts.blowup {
            Ok(())
        } else {
            Err(Error::StepUnstable { step, time: self.grid.t(step), field, value })
        }
    }

    fn run(&self) -> Result<TwoTimeBundle> {
        let n = self.grid.n;
        let h = self.grid.h;
        let mut hist = History {
            r_rows: Vec::with_capacity(n + 1),
            r_cols: Vec::with_capacity(n + 1),
            c_sym: Vec::with_capacity(n + 1),
            q: Vec::with_capacity(n + 1),
        };
        hist.r_rows.push(vec![1.0]);
        hist.r_cols.push(vec![1.0]);
        hist.c_sym.push(vec![1.0]);
        hist.q.push(self.q_o);
        let mut k = vec![1.0];
        let mut k_pre = vec![1.0];

        let sc0 = self.scalars(0, &[1.0], &[1.0], &[], self.q_o);
        let mut mu = vec![if self.hard() { sc0.mu_formula } else { sc0.drift }];
        let mut h_hat = vec![sc0.h_hat];
        let mut sc_cur = sc0;

        for i in 0..n {
            let s1 = i + 1;
            let (fr0, fc0) = {
                let row_r = &hist.r_rows[i];
                let row_c = &hist.c_sym[i][..=i];
                self.fields(&hist, i, row_r, row_c, hist.q[i], &sc_cur)
            };

            // Predictor.
            let k_pred = if self.hard() { 1.0 } else { self.advance_k(&k, sc_cur.k_src) };
            let mut rp: Vec<f64> = hist.r_rows[i].iter().zip(&fr0).map(|(r, f)| r + h * f).collect();
            rp.push(1.0);
            let mut cp: Vec<f64> = hist.c_sym[i][..=i].iter().zip(&fc0).map(|(c, f)| c + h * f).collect();
            cp.push(k_pred);
            let qp = hist.q[i] + h * sc_cur.fq;
            let sc_p = self.scalars(s1, &rp, &cp, &hist.q, qp);
            let (fr1, fc1) = self.fields(&hist, s1, &rp, &cp, qp, &sc_p);

            // Corrector.
            let k_new = if self.hard() { 1.0 } else { self.advance_k(&k, sc_p.k_src) };
            let mut r_new: Vec<f64> = (0..=i).map(|j| hist.r_rows[i][j] + 0.5 * h * (fr0[j] + fr1[j])).collect();
            r_new.push(1.0);
            let mut c_new: Vec<f64> = (0..=i).map(|j| hist.c_sym[i][j] + 0.5 * h * (fc0[j] + fc1[j])).collect();
            c_new.push(k_new);
            let q_new = hist.q[i] + 0.5 * h * (sc_cur.fq + sc_p.fq);

            self.guard(s1, "K", k_new)?;
            self.guard(s1, "q", q_new)?;
            for (field, row) in [("R", &r_new), ("C", &c_new)] {
                if let Some(bad) = row.iter().find(|x| !(x.is_finite() && x.abs() <= self.opts.blowup)) {
                    self.guard(s1, field, *bad)?;
                }
            }

            for j in 0..=i {
                hist.r_cols[j].push(r_new[j]);
                hist.c_sym[j].push(c_new[j]);
            }
            hist.r_cols.push(vec![1.0]);
            hist.r_rows.push(r_new);
            hist.c_sym.push(c_new);
            hist.q.push(q_new);
            k.push(k_new);

            let sc_new = {
                let row_c = &hist.c_sym[s1][..=s1];
                self.scalars(s1, &hist.r_rows[s1], row_c, &hist.q[..s1], q_new)
            };
            if self.hard() {
                let last = *k_pre.last().unwrap();
                k_pre.push(last + h * (sc_new.mu_formula - sc_p.mu_formula));
                mu.push(sc_new.mu_formula);
            } else {
                k_pre.push(k_new);
                mu.push(sc_new.drift);
            }
            self.guard(s1, "mu", *mu.last().unwrap())?;
            h_hat.push(sc_new.h_hat);
            sc_cur = sc_new;
        }

        let History { r_rows, mut c_sym, q, .. } = hist;
        for (i, row) in c_sym.iter_mut().enumerate() {
            row.truncate(i + 1);
            row.shrink_to_fit();
        }
        let energy = h_hat.iter().zip(&q).map(|(hh, qq)| hh + self.v.value(*qq)).collect();
        Ok(TwoTimeBundle {
            grid: self.grid,
            constraint: if self.hard() { Constraint::Hard } else { Constraint::Soft },
            q_star: self.q_star,
            r: r_rows,
            c: c_sym,
            q,
            k,
            energy,
            h_hat,
            mu,
            k_pre,
        })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four independent accumulators let the compiler vectorize while keeping
    // a fixed summation order.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * k + l] * b[4 * k + l];
        }
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Largest violation of `|∫_{t1}^{t2} R(s,u) du|² ≤ t2 − t1` over all grid
/// triples `t1 ≤ t2 ≤ s`.
pub fn response_integral_bound(bundle: &TwoTimeBundle) -> f64 {
    let h = bundle.grid.h;
    let mut worst = f64::NEG_INFINITY;
    for row in &bundle.r {
        let cum = crate::quad::cumulative_trapezoid(row, h);
        for j2 in 0..cum.len() {
            for j1 in 0..=j2 {
                let d = cum[j2] - cum[j1];
                let v = d * d - (j2 - j1) as f64 * h;
                if v > worst {
                    worst = v;
                }
            }
        }
    }
    worst
}

/// Outcome of [`check_bundle`]. Every field is a measured worst case; the
/// `failures` list names the checks that exceeded the tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub tol: f64,
    pub diag_r: f64,
    pub diag_c: f64,
    pub k_boundary: f64,
    pub q_excess: f64,
    pub c_excess: f64,
    pub psd_min_eig: f64,
    pub k_pre_residual: f64,
    pub failures: Vec<String>,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Points used for the sampled Gram matrix of `C̄`.
pub const PSD_POINTS: usize = 21;

/// Audits the boundary identities, the bounds `|q| ≤ q⋆`, `|C| ≤ 1` (hard)
/// and positive semi-definiteness of `C̄` on a coarse sub-grid.
pub fn check_bundle(bundle: &TwoTimeBundle, tol: f64) -> InvariantReport {
    let n = bundle.grid.n;
    let hard = bundle.constraint == Constraint::Hard;
    let mut diag_r: f64 = 0.0;
    let mut diag_c: f64 = 0.0;
    let mut k_boundary = (bundle.k[0] - 1.0).abs();
    let mut c_excess = f64::NEG_INFINITY;
    for i in 0..=n {
        diag_r = diag_r.max((bundle.r[i][i] - 1.0).abs());
        diag_c = diag_c.max((bundle.c[i][i] - bundle.k[i]).abs());
        if hard {
            k_boundary = k_boundary.max((bundle.k[i] - 1.0).abs());
            for &c in &bundle.c[i] {
                c_excess = c_excess.max(c.abs() - 1.0);
            }
        }
    }
    let q_excess = bundle.q.iter().map(|q| q.abs() - bundle.q_star).fold(f64::NEG_INFINITY, f64::max);
    let k_pre_residual = bundle.k_pre.iter().map(|k| (k - 1.0).abs()).fold(0.0, f64::max);

    let idx: Vec<usize> = if n == 0 {
        vec![0]
    } else {
        (0..PSD_POINTS).map(|k| ((k * n) as f64 / (PSD_POINTS - 1) as f64).round() as usize).collect()
    };
    let gram = DMatrix::from_fn(idx.len(), idx.len(), |a, b| bundle.c_bar(idx[a], idx[b]));
    let psd_min_eig = gram.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);

    let mut failures = Vec::new();
    if diag_r > tol {
        failures.push(format!("R(s,s) deviates from 1 by {diag_r:e}"));
    }
    if diag_c > tol {
        failures.push(format!("C(s,s) deviates from K(s) by {diag_c:e}"));
    }
    if k_boundary > tol {
        failures.push(format!("K boundary deviates from 1 by {k_boundary:e}"));
    }
    if q_excess > tol {
        failures.push(format!("|q| exceeds q_star by {q_excess:e}"));
    }
    if hard && c_excess > tol {
        failures.push(format!("|C| exceeds 1 by {c_excess:e}"));
    }
    if psd_min_eig < -tol {
        failures.push(format!("C-bar Gram matrix has eigenvalue {psd_min_eig:e}"));
    }
    InvariantReport {
        tol,
        diag_r,
        diag_c,
        k_boundary,
        q_excess,
        c_excess: if hard { c_excess } else { f64::NAN },
        psd_min_eig,
        k_pre_residual,
        failures,
    }
}

/// Sup-norm distance between two bundles on the same grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldGaps {
    pub r: f64,
    pub c: f64,
    pub q: f64,
    pub k: f64,
    pub energy: f64,
    pub mu: f64,
}

impl FieldGaps {
    pub fn max_rcq(&self) -> f64 {
        self.r.max(self.c).max(self.q)
    }
}

pub fn field_gaps(a: &TwoTimeBundle, b: &TwoTimeBundle) -> Result<FieldGaps> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", a.grid, b.grid)));
    }
    let sup1 = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    let sup2 = |x: &[Vec<f64>], y: &[Vec<f64>]| x.iter().zip(y).map(|(u, v)| sup1(u, v)).fold(0.0, f64::max);
    Ok(FieldGaps {
        r: sup2(&a.r, &b.r),
        c: sup2(&a.c, &b.c),
        q: sup1(&a.q, &b.q),
        k: sup1(&a.k, &b.k),
        energy: sup1(&a.energy, &b.energy),
        mu: sup1(&a.mu, &b.mu),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftHardGap {
    pub l: f64,
    pub k_sup: f64,
    pub r_gap: f64,
    pub c_gap: f64,
    pub q_gap: f64,
}

/// Runs the soft solver for each `L` and compares against the hard sphere.
///
/// The exponent `k` is taken from `params` if it is soft, otherwise the
/// smallest admissible `k > m/4` is used.
pub fn soft_hard_gap(
    params: &ModelParams,
    nu: &MixingFunction,
    grid: TwoTimeGrid,
    ls: &[f64],
) -> Result<Vec<SoftHardGap>> {
    let phi = params.canonical_phi(nu)?;
    if phi <= 0.0 {
        return Err(Error::PhiNonpositive(phi));
    }
    let k = match params.confinement {
        Confinement::Soft { k, .. } => k,
        Confinement::Hard { .. } => (nu.degree().unwrap_or(2) / 4 + 1) as u32,
    };
    let hard = solve_hard(&params.with_hard(nu)?, nu, grid)?;
    ls.iter()
        .map(|&l| {
            let soft = solve_soft(&params.with_soft(nu, l, k)?, nu, grid)?;
            let g = field_gaps(&soft, &hard)?;
            Ok(SoftHardGap {
                l,
                k_sup: soft.k.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max),
                r_gap: g.r,
                c_gap: g.c,
                q_gap: g.q,
            })
        })
        .collect()
}
