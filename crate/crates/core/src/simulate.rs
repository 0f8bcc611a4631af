//! Finite-N Langevin dynamics for the conditioned spherical mixed p-spin model.
//!
//! The disorder is stored as one symmetric coupling block per active degree,
//! indexed by sorted tuples `i_1 <= ... <= i_p` in lexicographic order. The
//! conditioning point is always `x⋆ = (√N q⋆, 0, ..., 0)`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MixingFunction, ModelParams};
use crate::volterra::TwoTimeBundle;

/// Default cap on the number of stored couplings (8 bytes each).
pub const DEFAULT_BUDGET: usize = 1 << 27;
/// `K_N` above which a run is declared unstable.
pub const BLOWUP_K: f64 = 1e6;

const STREAM_DISORDER: u64 = 0;
const STREAM_INITIAL: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_HESSIAN: u64 = 3;

/// Target number of couplings per contraction chunk.
const CHUNK_ENTRIES: usize = 1 << 16;
const MAX_CHUNKS: usize = 64;

/// Generator for one named stream of a seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed of replica `r`.
pub fn replica_seed(seed: u64, r: usize) -> u64 {
    seed ^ r as u64
}

/// The conditioning point `(√N q⋆, 0, ..., 0)`.
pub fn x_star(n: usize, q_star: f64) -> Vec<f64> {
    let mut x = vec![0.0; n];
    x[0] = (n as f64).sqrt() * q_star;
    x
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    let k = k.min(n.saturating_sub(k));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return None;
        }
    }
    Some(acc as usize)
}

/// Number of sorted `p`-tuples over `n` symbols.
pub fn tuple_count(n: usize, p: usize) -> Option<usize> {
    binomial(n + p - 1, p)
}

/// Couplings of one degree.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingBlock {
    pub p: usize,
    /// `b_p = sqrt(b_p²)`.
    pub b: f64,
    /// Entries in lexicographic order of sorted tuples.
    pub j: Vec<f64>,
    /// Offset of the first tuple with leading index `i`, plus a final sentinel.
    first: Vec<usize>,
    /// Leading-index boundaries of the contraction chunks.
    chunks: Vec<usize>,
}

impl CouplingBlock {
    fn new(n: usize, p: usize, b: f64) -> Self {
        let mut first = Vec::with_capacity(n + 1);
        let mut off = 0;
        for i in 0..n {
            first.push(off);
            off += tuple_count(n - i, p - 1).unwrap();
        }
        first.push(off);
        let target = (off / MAX_CHUNKS).max(CHUNK_ENTRIES);
        let mut chunks = vec![0];
        for i in 1..n {
            if first[i] - first[*chunks.last().unwrap()] >= target {
                chunks.push(i);
            }
        }
        chunks.push(n);
        Self { p, b, j: vec![0.0; off], first, chunks }
    }

    fn n(&self) -> usize {
        self.first.len() - 1
    }

    /// Entry of the tuple `(0, ..., 0, i)`.
    pub fn axis_entry(&self, i: usize) -> f64 {
        self.j[i]
    }

    /// Variance of the entry with multiplicity profile `∏ l_k!`.
    fn variance(&self, mult: f64) -> f64 {
        let fact: f64 = (1..=self.p).map(|k| k as f64).product();
        (self.n() as f64).powi(1 - self.p as i32) * fact / mult
    }

    /// Visits each sorted prefix `(i_1, ..., i_{p-1})` with leading index in
    /// `lo..hi`, passing the prefix and the offset of its contiguous row of
    /// last indices `i_{p-1}..n`.
    fn for_each_prefix<F: FnMut(&[usize], usize)>(&self, lo: usize, hi: usize, mut f: F) {
        let n = self.n();
        let d = self.p - 1;
        for i1 in lo..hi {
            let mut idx = vec![i1; d];
            let mut off = self.first[i1];
            loop {
                f(&idx, off);
                off += n - idx[d - 1];
                // advance positions 1..d in lexicographic order
                let mut pos = d - 1;
                loop {
                    if pos == 0 {
                        break;
                    }
                    idx[pos] += 1;
                    if idx[pos] < n {
                        let v = idx[pos];
                        for slot in &mut idx[pos + 1..] {
                            *slot = v;
                        }
                        break;
                    }
                    pos -= 1;
                }
                if pos == 0 {
                    break;
                }
            }
        }
    }

    /// `(Σ J x^t, ∇)` restricted to leading indices `lo..hi`, unscaled by `b`.
    fn contract_range(&self, x: &[f64], lo: usize, hi: usize, grad: &mut [f64]) -> f64 {
        let n = self.n();
        let d = self.p - 1;
        let mut h = 0.0;
        let mut pre = vec![1.0; d + 1];
        let mut suf = vec![1.0; d + 1];
        self.for_each_prefix(lo, hi, |idx, off| {
            for r in 0..d {
                pre[r + 1] = pre[r] * x[idx[r]];
            }
            suf[d] = 1.0;
            for r in (0..d).rev() {
                suf[r] = suf[r + 1] * x[idx[r]];
            }
            let prod = pre[d];
            let start = idx[d - 1];
            let row = &self.j[off..off + n - start];
            let xs = &x[start..];
            let gs = &mut grad[start..];
            let mut acc = [0.0; 4];
            let mut rc = row.chunks_exact(4);
            let mut xc = xs.chunks_exact(4);
            let mut gc = gs.chunks_exact_mut(4);
            for ((rj, xj), gj) in (&mut rc).zip(&mut xc).zip(&mut gc) {
                for l in 0..4 {
                    acc[l] += rj[l] * xj[l];
                    gj[l] += prod * rj[l];
                }
            }
            let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
            for ((rj, xj), gj) in rc.remainder().iter().zip(xc.remainder()).zip(gc.into_remainder()) {
                s += rj * xj;
                *gj += prod * rj;
            }
            h += prod * s;
            for r in 0..d {
                grad[idx[r]] += pre[r] * suf[r + 1] * s;
            }
        });
        h
    }

    /// `(Σ J x^t, ∇)` with a fixed chunk order, so the result does not depend
    /// on the number of threads.
    fn contract(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let n = self.n();
        let bounds: Vec<(usize, usize)> = self.chunks.windows(2).map(|w| (w[0], w[1])).collect();
        let run = |&(lo, hi): &(usize, usize)| {
            let mut g = vec![0.0; n];
            let h = self.contract_range(x, lo, hi, &mut g);
            (h, g)
        };
        let parts: Vec<(f64, Vec<f64>)> = if bounds.len() > 1 {
            bounds.par_iter().map(run).collect()
        } else {
            bounds.iter().map(run).collect()
        };
        let mut h = 0.0;
        let mut g = vec![0.0; n];
        for (hp, gp) in parts {
            h += hp;
            for (a, b) in g.iter_mut().zip(&gp) {
                *a += b;
            }
        }
        (h, g)
    }
}

/// Gaussian couplings of the Hamiltonian `H_J(x) = Σ_p b_p Σ_t J_t x^t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Disorder {
    pub n: usize,
    pub blocks: Vec<CouplingBlock>,
}

impl Disorder {
    /// All-zero couplings for the active degrees of `nu`.
    pub fn zeros(n: usize, nu: &MixingFunction, budget: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParam(format!("N = {n} must be at least 2")));
        }
        let mut entries: usize = 0;
        for p in nu.active_degrees() {
            let c = tuple_count(n, p).unwrap_or(usize::MAX);
            entries = entries.saturating_add(c);
        }
        if entries > budget {
            return Err(Error::SizeOverflow { entries, budget });
        }
        let blocks = nu
            .active_degrees()
            .map(|p| CouplingBlock::new(n, p, nu.coeff_sq(p).sqrt()))
            .collect();
        Ok(Self { n, blocks })
    }

    pub fn entries(&self) -> usize {
        self.blocks.iter().map(|b| b.j.len()).sum()
    }

    pub fn block(&self, p: usize) -> Option<&CouplingBlock> {
        self.blocks.iter().find(|b| b.p == p)
    }

    /// Unconditioned variance of every stored entry, in storage order.
    pub fn variances(&self) -> Vec<Vec<f64>> {
        self.blocks
            .iter()
            .map(|blk| {
                let mut out = Vec::with_capacity(blk.j.len());
                blk.for_each_prefix(0, blk.n(), |idx, _| {
                    let (mult, run) = multiplicity(idx);
                    let last = idx[idx.len() - 1];
                    for k in last..blk.n() {
                        let m = if k == last { mult * (run + 1) as f64 } else { mult };
                        out.push(blk.variance(m));
                    }
                });
                out
            })
            .collect()
    }
}

/// `(∏ l_k!, length of the final run)` for a sorted prefix.
fn multiplicity(idx: &[usize]) -> (f64, usize) {
    let mut prod = 1.0;
    let mut run = 0;
    let mut prev = usize::MAX;
    for &i in idx {
        run = if i == prev { run + 1 } else { 1 };
        prod *= run as f64;
        prev = i;
    }
    (prod, run)
}

/// Independent Gaussian couplings with the multiplicity-corrected variances.
pub fn sample_disorder(n: usize, nu: &MixingFunction, seed: u64) -> Result<Disorder> {
    sample_disorder_with_budget(n, nu, seed, DEFAULT_BUDGET)
}

pub fn sample_disorder_with_budget(
    n: usize,
    nu: &MixingFunction,
    seed: u64,
    budget: usize,
) -> Result<Disorder> {
    let mut dis = Disorder::zeros(n, nu, budget)?;
    let vars = dis.variances();
    let mut rng = stream_rng(seed, STREAM_DISORDER);
    for (blk, var) in dis.blocks.iter_mut().zip(vars) {
        for (j, v) in blk.j.iter_mut().zip(var) {
            let z: f64 = rng.sample(StandardNormal);
            *j = z * v.sqrt();
        }
    }
    Ok(dis)
}

/// `(H_J(x), ∇H_J(x))`.
pub fn hamiltonian_and_grad(dis: &Disorder, x: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(x.len(), dis.n, "state dimension");
    let mut h = 0.0;
    let mut g = vec![0.0; dis.n];
    for blk in &dis.blocks {
        let (hp, gp) = blk.contract(x);
        h += blk.b * hp;
        for (a, b) in g.iter_mut().zip(&gp) {
            *a += blk.b * b;
        }
    }
    (h, g)
}

/// Conditions `dis` on `x⋆` being a critical point with `H = -N E⋆` and
/// `∇H = -G⋆ x⋆`.
///
/// This is an exact Gaussian projection. Each constraint involves a disjoint
/// set of couplings along the first axis.
pub fn condition_disorder(dis: &Disorder, params: &ModelParams, nu: &MixingFunction) -> Result<Disorder> {
    params.drift(nu)?;
    let mut out = condition_radial(dis, params)?;
    condition_tangential_in_place(&mut out, params.q_star);
    Ok(out)
}

/// Only the tangential constraints `∂_i H(x⋆) = 0`, `i >= 2`.
pub fn condition_tangential(dis: &Disorder, q_star: f64) -> Disorder {
    let mut out = dis.clone();
    condition_tangential_in_place(&mut out, q_star);
    out
}

fn condition_radial(dis: &Disorder, params: &ModelParams) -> Result<Disorder> {
    let mut out = dis.clone();
    if out.blocks.is_empty() {
        return Ok(out);
    }
    let nf = dis.n as f64;
    let a = nf.sqrt() * params.q_star;
    let var: Vec<f64> = out.blocks.iter().map(|b| nf.powi(1 - b.p as i32)).collect();
    let row_h: Vec<f64> = out.blocks.iter().map(|b| b.b * a.powi(b.p as i32)).collect();
    let row_d: Vec<f64> =
        out.blocks.iter().map(|b| b.b * b.p as f64 * a.powi(b.p as i32 - 1)).collect();
    let jv: Vec<f64> = out.blocks.iter().map(|b| b.j[0]).collect();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
    let res_h = dot(&row_h, &jv) + nf * params.e_star;
    let res_d = dot(&row_d, &jv) + a * params.g_star;
    let weighted = |u: &[f64], v: &[f64]| -> f64 {
        u.iter().zip(v).zip(&var).map(|((x, y), s)| x * y * s).sum()
    };
    let m11 = weighted(&row_h, &row_h);
    if out.blocks.len() == 1 {
        let lam = res_h / m11;
        let blk = &mut out.blocks[0];
        blk.j[0] -= var[0] * row_h[0] * lam;
        return Ok(out);
    }
    let m12 = weighted(&row_h, &row_d);
    let m22 = weighted(&row_d, &row_d);
    let det = m11 * m22 - m12 * m12;
    if !(det > 1e-12 * m11 * m22) {
        return Err(Error::RankDeficient);
    }
    let lam_h = (m22 * res_h - m12 * res_d) / det;
    let lam_d = (m11 * res_d - m12 * res_h) / det;
    for (k, blk) in out.blocks.iter_mut().enumerate() {
        blk.j[0] -= var[k] * (row_h[k] * lam_h + row_d[k] * lam_d);
    }
    Ok(out)
}

fn condition_tangential_in_place(dis: &mut Disorder, q_star: f64) {
    if dis.blocks.is_empty() {
        return;
    }
    let nf = dis.n as f64;
    let a = nf.sqrt() * q_star;
    let coef: Vec<f64> = dis.blocks.iter().map(|b| b.b * a.powi(b.p as i32 - 1)).collect();
    let var: Vec<f64> = dis.blocks.iter().map(|b| b.p as f64 * nf.powi(1 - b.p as i32)).collect();
    let denom: f64 = coef.iter().zip(&var).map(|(c, v)| c * c * v).sum();
    if denom == 0.0 {
        return;
    }
    for i in 1..dis.n {
        let w: f64 = dis.blocks.iter().zip(&coef).map(|(b, c)| c * b.j[i]).sum();
        for (k, blk) in dis.blocks.iter_mut().enumerate() {
            blk.j[i] -= var[k] * coef[k] * w / denom;
        }
    }
}

/// Conditional mean of `J^{(p)}_{1...1}` from the drift inner products.
pub fn axis_mean(n: usize, params: &ModelParams, nu: &MixingFunction, p: usize) -> Result<f64> {
    let drift = params.drift(nu)?;
    let ip = drift.inner_products().get(p.wrapping_sub(2)).copied().unwrap_or(0.0);
    let b = nu.coeff_sq(p).sqrt();
    Ok(-b * (n as f64).powf(1.0 - p as f64 / 2.0) * params.q_star.powi(p as i32) * ip)
}

/// Residuals of the critical-point constraints at `x⋆`: the scaled energy
/// gap `|H + N E⋆| / N` and the gradient gap, relative to `‖G⋆ x⋆‖` when
/// that is non-zero.
pub fn conditioning_residuals(dis: &Disorder, params: &ModelParams) -> (f64, f64) {
    let xs = x_star(dis.n, params.q_star);
    let (h, g) = hamiltonian_and_grad(dis, &xs);
    let nf = dis.n as f64;
    let e_gap = (h + nf * params.e_star).abs() / nf;
    let norm: f64 = g
        .iter()
        .zip(&xs)
        .map(|(gi, xi)| (gi + params.g_star * xi).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = params.g_star.abs() * xs[0].abs();
    (e_gap, if scale > 0.0 { norm / scale } else { norm })
}

/// Uniform point on the band `{x ∈ S_N : <x, x⋆>/N = q_o}`.
pub fn sample_initial(n: usize, q_star: f64, q_o: f64, seed: u64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidParam(format!("N = {n} must be at least 2")));
    }
    if !(q_star > 0.0) || q_o.abs() > q_star {
        return Err(Error::Domain(format!("|q_o| = {} exceeds q* = {q_star}", q_o.abs())));
    }
    let nf = n as f64;
    let ratio = q_o / q_star;
    let mut rng = stream_rng(seed, STREAM_INITIAL);
    let mut x = vec![0.0; n];
    x[0] = nf.sqrt() * ratio;
    let radius = (nf * (1.0 - ratio * ratio)).max(0.0).sqrt();
    if radius > 0.0 {
        let tail: Vec<f64> = (1..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = tail.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (xi, z) in x[1..].iter_mut().zip(tail) {
            *xi = radius * z / norm;
        }
    }
    Ok(x)
}

/// Source of Brownian increments `dB` over one step.
pub trait NoiseSource {
    fn fill(&mut self, dt: f64, out: &mut [f64]);
}

impl<F: FnMut(f64, &mut [f64])> NoiseSource for F {
    fn fill(&mut self, dt: f64, out: &mut [f64]) {
        self(dt, out)
    }
}

/// Independent `N(0, dt)` increments.
pub struct GaussianNoise {
    rng: ChaCha8Rng,
}

impl GaussianNoise {
    pub fn new(seed: u64) -> Self {
        Self { rng: stream_rng(seed, STREAM_NOISE) }
    }
}

impl NoiseSource for GaussianNoise {
    fn fill(&mut self, dt: f64, out: &mut [f64]) {
        let s = dt.sqrt();
        for v in out {
            let z: f64 = self.rng.sample(StandardNormal);
            *v = s * z;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    pub replicas: usize,
    /// Steps between snapshots.
    pub snapshot_every: usize,
}

impl SimConfig {
    pub fn steps(&self) -> Result<usize> {
        if self.n < 2 {
            return Err(Error::InvalidParam(format!("N = {} must be at least 2", self.n)));
        }
        if !(self.dt > 0.0) || !(self.t_max >= 0.0) || self.snapshot_every == 0 {
            return Err(Error::InvalidParam("need dt > 0, T >= 0, snapshot_every >= 1".into()));
        }
        let s = self.t_max / self.dt;
        let steps = s.round();
        if (s - steps).abs() > 1e-9 * s.max(1.0) {
            return Err(Error::InvalidParam(format!("T / dt = {s} is not an integer")));
        }
        Ok(steps as usize)
    }

    /// Spacing of the snapshot grid.
    pub fn snapshot_dt(&self) -> f64 {
        self.dt * self.snapshot_every as f64
    }
}

/// Snapshots of a single Langevin path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    /// Accumulated Brownian increments.
    pub b: Vec<Vec<f64>>,
}

/// Euler–Maruyama for `dx = -f'(K_N) x dt - β ∇H_J(x) dt + dB`.
pub fn run_langevin<S: NoiseSource + ?Sized>(
    dis: &Disorder,
    params: &ModelParams,
    cfg: &SimConfig,
    x0: Vec<f64>,
    noise: &mut S,
) -> Result<Trajectory> {
    if params.confinement.is_hard() {
        return Err(Error::HardConstraint);
    }
    let steps = cfg.steps()?;
    let n = dis.n;
    if x0.len() != n {
        return Err(Error::InvalidParam(format!("x0 has length {} != N = {n}", x0.len())));
    }
    let nf = n as f64;
    let dt = cfg.dt;
    let mut x = x0;
    let mut b = vec![0.0; n];
    let mut db = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut traj = Trajectory { times: vec![0.0], x: vec![x.clone()], b: vec![b.clone()] };
    for step in 1..=steps {
        let k = x.iter().map(|v| v * v).sum::<f64>() / nf;
        let fp = params.f_prime(k)?;
        if params.beta != 0.0 {
            grad = hamiltonian_and_grad(dis, &x).1;
        }
        noise.fill(dt, &mut db);
        for i in 0..n {
            x[i] += dt * (-fp * x[i] - params.beta * grad[i]) + db[i];
            b[i] += db[i];
        }
        let k_new = x.iter().map(|v| v * v).sum::<f64>() / nf;
        let t = step as f64 * dt;
        if !(k_new <= BLOWUP_K) {
            return Err(Error::Blowup { time: t, k: k_new });
        }
        if step % cfg.snapshot_every == 0 {
            traj.times.push(t);
            traj.x.push(x.clone());
            traj.b.push(b.clone());
        }
    }
    Ok(traj)
}

/// Empirical observables of one path on its snapshot grid.
///
/// Two-time fields are lower triangular: `c[i][j]` for `j <= i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub times: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    pub chi: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub h: Vec<f64>,
    pub k: Vec<f64>,
}

impl Observables {
    /// Entrywise mean.
    pub fn mean(items: &[Observables]) -> Result<Observables> {
        let first = items.first().ok_or_else(|| Error::InvalidParam("no replicas".into()))?;
        let w = 1.0 / items.len() as f64;
        let avg_vec = |get: &dyn Fn(&Observables) -> &Vec<f64>| -> Vec<f64> {
            let mut acc = vec![0.0; get(first).len()];
            for o in items {
                for (a, v) in acc.iter_mut().zip(get(o)) {
                    *a += w * v;
                }
            }
            acc
        };
        let avg_tri = |get: &dyn Fn(&Observables) -> &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            let mut acc: Vec<Vec<f64>> = get(first).iter().map(|r| vec![0.0; r.len()]).collect();
            for o in items {
                for (ar, vr) in acc.iter_mut().zip(get(o)) {
                    for (a, v) in ar.iter_mut().zip(vr) {
                        *a += w * v;
                    }
                }
            }
            acc
        };
        if items.iter().any(|o| o.times != first.times) {
            return Err(Error::GridMismatch("replicas use different snapshot grids".into()));
        }
        Ok(Observables {
            times: first.times.clone(),
            c: avg_tri(&|o| &o.c),
            chi: avg_tri(&|o| &o.chi),
            q: avg_vec(&|o| &o.q),
            h: avg_vec(&|o| &o.h),
            k: avg_vec(&|o| &o.k),
        })
    }
}

/// Replica observables and their average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalBundle {
    pub replicas: Vec<Observables>,
    pub mean: Observables,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `C_N`, `χ_N`, `q_N`, `H_N = -H_J/N` and `K_N` on the snapshots.
pub fn empirical_observables(traj: &Trajectory, sigma: &[f64], dis: &Disorder) -> Observables {
    let nf = dis.n as f64;
    let m = traj.times.len();
    let c = (0..m)
        .map(|i| (0..=i).map(|j| dot(&traj.x[i], &traj.x[j]) / nf).collect())
        .collect();
    let chi = (0..m)
        .map(|i| (0..=i).map(|j| dot(&traj.x[i], &traj.b[j]) / nf).collect())
        .collect();
    let q = traj.x.iter().map(|x| dot(x, sigma) / nf).collect();
    let h = traj.x.iter().map(|x| -hamiltonian_and_grad(dis, x).0 / nf).collect();
    let k = traj.x.iter().map(|x| dot(x, x) / nf).collect();
    Observables { times: traj.times.clone(), c, chi, q, h, k }
}

/// One replica: sample, condition, initialise, integrate, observe.
pub fn run_replica(
    params: &ModelParams,
    nu: &MixingFunction,
    cfg: &SimConfig,
    replica: usize,
) -> Result<Observables> {
    let seed = replica_seed(cfg.seed, replica);
    let raw = sample_disorder(cfg.n, nu, seed)?;
    let dis = condition_disorder(&raw, params, nu)?;
    let x0 = sample_initial(cfg.n, params.q_star, params.q_o, seed)?;
    let traj = run_langevin(&dis, params, cfg, x0, &mut GaussianNoise::new(seed))?;
    Ok(empirical_observables(&traj, &x_star(cfg.n, params.q_star), &dis))
}

/// All replicas of `cfg`, in parallel, averaged in replica order.
pub fn simulate(params: &ModelParams, nu: &MixingFunction, cfg: &SimConfig) -> Result<EmpiricalBundle> {
    params.validate(nu)?;
    cfg.steps()?;
    if cfg.replicas == 0 {
        return Err(Error::InvalidParam("replicas must be positive".into()));
    }
    let replicas = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| run_replica(params, nu, cfg, r))
        .collect::<Result<Vec<_>>>()?;
    let mean = Observables::mean(&replicas)?;
    Ok(EmpiricalBundle { replicas, mean })
}

/// The four capped sup-norm gaps summed in the error functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrTerms {
    pub c: f64,
    pub chi: f64,
    pub q: f64,
    pub h: f64,
}

impl ErrTerms {
    pub fn total(&self) -> f64 {
        self.c.min(1.0) + self.chi.min(1.0) + self.q.min(1.0) + self.h.min(1.0)
    }
}

fn snapshot_indices(times: &[f64], limit: &TwoTimeBundle) -> Result<Vec<usize>> {
    times
        .iter()
        .map(|&t| {
            limit.grid.index_of(t).ok_or_else(|| {
                Error::GridMismatch(format!("snapshot time {t} is not on the limit grid"))
            })
        })
        .collect()
}

/// Uncapped sup-norm gaps between `emp` and `limit` on the snapshot grid.
pub fn error_terms(emp: &Observables, limit: &TwoTimeBundle) -> Result<ErrTerms> {
    let idx = snapshot_indices(&emp.times, limit)?;
    let chi = limit.chi();
    let mut t = ErrTerms { c: 0.0, chi: 0.0, q: 0.0, h: 0.0 };
    for (a, &ia) in idx.iter().enumerate() {
        for (b, &ib) in idx.iter().enumerate().take(a + 1) {
            t.c = t.c.max((emp.c[a][b] - limit.c_at(ia, ib)).abs());
            t.chi = t.chi.max((emp.chi[a][b] - chi[ia][ib]).abs());
        }
        t.q = t.q.max((emp.q[a] - limit.q[ia]).abs());
        t.h = t.h.max((emp.h[a] - limit.energy[ia]).abs());
    }
    Ok(t)
}

/// `‖C_N−C‖∧1 + ‖χ_N−χ‖∧1 + ‖q_N−q‖∧1 + ‖H_N−H‖∧1` for one set of observables.
pub fn observables_error(emp: &Observables, limit: &TwoTimeBundle) -> Result<f64> {
    Ok(error_terms(emp, limit)?.total())
}

/// The error functional of the replica-averaged observables.
pub fn error_functional(emp: &EmpiricalBundle, limit: &TwoTimeBundle) -> Result<f64> {
    observables_error(&emp.mean, limit)
}

/// Error functional per replica, its mean and spread, and the value for the
/// replica-averaged observables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrReport {
    pub per_replica: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub of_mean: f64,
}

pub fn error_report(emp: &EmpiricalBundle, limit: &TwoTimeBundle) -> Result<ErrReport> {
    let per_replica =
        emp.replicas.iter().map(|o| observables_error(o, limit)).collect::<Result<Vec<_>>>()?;
    let m = per_replica.len() as f64;
    let mean = per_replica.iter().sum::<f64>() / m;
    let var = per_replica.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    Ok(ErrReport { per_replica, mean, std: var.sqrt(), of_mean: error_functional(emp, limit)? })
}

/// Sorted eigenvalues of `G⋆ + sqrt(ν''(q⋆²)(N-1)/N) · GOE(N-1)`.
pub fn conditional_hessian_spectrum(
    n: usize,
    nu: &MixingFunction,
    q_star: f64,
    g_star: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidParam(format!("N = {n} must be at least 2")));
    }
    let d = n - 1;
    let scale = (nu.d2(q_star * q_star) * d as f64 / n as f64).sqrt();
    if scale == 0.0 {
        return Ok(vec![g_star; d]);
    }
    let mut rng = stream_rng(seed, STREAM_HESSIAN);
    let off = 1.0 / (d as f64).sqrt();
    let diag = (2.0 / d as f64).sqrt();
    let mut m = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let z: f64 = rng.sample(StandardNormal);
            let v = scale * z * if i == j { diag } else { off };
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m[(i, i)] += g_star;
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}
