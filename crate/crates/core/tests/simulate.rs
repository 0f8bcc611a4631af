use pspin::simulate::*;
use pspin::volterra::{solve_soft, TwoTimeGrid};
use pspin::{Confinement, MixingFunction, ModelParams};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn sk_soft() -> (MixingFunction, ModelParams) {
    let nu = MixingFunction::sk();
    let p = ModelParams::hard(&nu, 1.0, 1.0, 0.5, 0.625, 1.25).unwrap();
    let soft = p.with_soft(&nu, 100.0, 1).unwrap();
    (nu, soft)
}

fn free_params(l: f64) -> ModelParams {
    ModelParams {
        beta: 1.0,
        q_star: 1.0,
        q_o: 0.0,
        e_star: 0.0,
        g_star: 0.0,
        confinement: Confinement::Soft { l, k: 1, phi: 1.0 },
    }
}

#[test]
fn entry_variance_monte_carlo() {
    let nu = MixingFunction::sk();
    let n = 4;
    let draws = 100_000;
    let (mut s_diag, mut s_off) = (0.0, 0.0);
    for seed in 0..draws {
        let d = sample_disorder(n, &nu, seed).unwrap();
        s_diag += d.blocks[0].j[0].powi(2);
        s_off += d.blocks[0].j[1].powi(2);
    }
    let (v_diag, v_off) = (s_diag / draws as f64, s_off / draws as f64);
    assert!((v_diag / (1.0 / n as f64) - 1.0).abs() < 0.03, "{v_diag}");
    assert!((v_off / (2.0 / n as f64) - 1.0).abs() < 0.03, "{v_off}");
}

#[test]
fn gradient_matches_finite_differences() {
    let nu = MixingFunction::new(vec![0.2, 0.1, 0.05]).unwrap();
    let d = sample_disorder(15, &nu, 11).unwrap();
    let mut rng = stream_rng(99, 0);
    let x: Vec<f64> = (0..15).map(|_| rng.sample(StandardNormal)).collect();
    let (_, g) = hamiltonian_and_grad(&d, &x);
    let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let eps = 1e-5;
    for _ in 0..20 {
        let delta: Vec<f64> = (0..15).map(|_| rng.sample(StandardNormal)).collect();
        let shift = |s: f64| -> Vec<f64> { x.iter().zip(&delta).map(|(a, b)| a + s * b).collect() };
        let fd = (hamiltonian_and_grad(&d, &shift(eps)).0 - hamiltonian_and_grad(&d, &shift(-eps)).0)
            / (2.0 * eps);
        let dir: f64 = g.iter().zip(&delta).map(|(a, b)| a * b).sum();
        assert!((dir - fd).abs() <= 1e-6 * gnorm, "{dir} vs {fd}");
    }
}

#[test]
fn gradient_is_thread_count_independent() {
    // large enough to split into several contraction chunks
    let nu = MixingFunction::pure(3, 0.125).unwrap();
    let d = sample_disorder(120, &nu, 5).unwrap();
    let x = sample_initial(120, 1.0, 0.2, 5).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| hamiltonian_and_grad(&d, &x));
    let b = four.install(|| hamiltonian_and_grad(&d, &x));
    assert_eq!(a, b);
}

#[test]
fn conditional_covariance_matches_kernel() {
    // tangential constraints only, E = G = 0
    let n = 10;
    let q_star = 0.9;
    let nu = MixingFunction::new(vec![0.25, 0.125]).unwrap();
    let x = sample_initial(n, q_star, 0.6, 1).unwrap();
    let mut y = sample_initial(n, q_star, 0.4, 2).unwrap();
    for (yi, xi) in y.iter_mut().zip(&x) {
        *yi = 0.5 * *yi + 0.5 * xi;
    }
    let draws = 2000;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for seed in 0..draws {
        let d = condition_tangential(&sample_disorder(n, &nu, 1000 + seed).unwrap(), q_star);
        let hx = hamiltonian_and_grad(&d, &x).0;
        let hy = hamiltonian_and_grad(&d, &y).0;
        sxx += hx * hx;
        sxy += hx * hy;
        syy += hy * hy;
    }
    let nf = n as f64;
    let xs = x_star(n, q_star);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let kernel = |a: &[f64], b: &[f64]| {
        let c = dot(a, b) / nf;
        let c_bar = dot(&a[1..], &b[1..]) / nf;
        let (qa, qb) = (dot(a, &xs) / nf, dot(b, &xs) / nf);
        nf * (nu.value(c) - c_bar * nu.d1(qa) * nu.d1(qb) / nu.d1(q_star * q_star))
    };
    let m = draws as f64;
    for (emp, exact) in [(sxx / m, kernel(&x, &x)), (sxy / m, kernel(&x, &y)), (syy / m, kernel(&y, &y))] {
        assert!((emp / exact - 1.0).abs() < 5e-2, "{emp} vs {exact}");
    }
}

#[test]
fn free_dynamics_keeps_the_radius() {
    let nu = MixingFunction::zero();
    let p = free_params(100.0);
    let n = 200;
    let cfg = SimConfig { n, dt: 1e-3, t_max: 2.0, seed: 3, replicas: 4, snapshot_every: 100 };
    let dis = Disorder::zeros(n, &nu, DEFAULT_BUDGET).unwrap();
    let mut mean_k = vec![0.0; 21];
    for r in 0..cfg.replicas {
        let seed = replica_seed(cfg.seed, r);
        let x0 = sample_initial(n, 1.0, 0.0, seed).unwrap();
        let traj = run_langevin(&dis, &p, &cfg, x0, &mut GaussianNoise::new(seed)).unwrap();
        let obs = empirical_observables(&traj, &x_star(n, 1.0), &dis);
        for (m, k) in mean_k.iter_mut().zip(&obs.k) {
            *m += k / cfg.replicas as f64;
        }
    }
    assert!(mean_k.iter().all(|&k| (0.9..=1.1).contains(&k)), "{mean_k:?}");
}

#[test]
fn zero_beta_ignores_disorder() {
    let (nu, mut p) = sk_soft();
    p.beta = 0.0;
    let cfg = SimConfig { n: 30, dt: 1e-3, t_max: 0.2, seed: 1, replicas: 1, snapshot_every: 20 };
    let x0 = sample_initial(30, 1.0, 0.5, 1).unwrap();
    let a = sample_disorder(30, &nu, 1).unwrap();
    let b = sample_disorder(30, &nu, 2).unwrap();
    let ta = run_langevin(&a, &p, &cfg, x0.clone(), &mut GaussianNoise::new(8)).unwrap();
    let tb = run_langevin(&b, &p, &cfg, x0, &mut GaussianNoise::new(8)).unwrap();
    assert_eq!(ta, tb);
}

#[test]
fn beta_embedding_is_bitwise() {
    let nu = MixingFunction::pure(3, 0.125).unwrap();
    let beta = 2.0;
    let base = ModelParams::hard(&nu, beta, 0.9, 0.5, 0.2, 0.6 / 0.81).unwrap();
    let p1 = base.with_soft(&nu, 100.0, 1).unwrap();
    let nu2 = nu.scaled(beta * beta);
    let p2 = ModelParams::hard(&nu2, 1.0, 0.9, 0.5, beta * 0.2, beta * 0.6 / 0.81)
        .unwrap()
        .with_soft(&nu2, 100.0, 1)
        .unwrap();
    assert_eq!(p1.confinement, p2.confinement);
    let n = 25;
    let d1 = condition_disorder(&sample_disorder(n, &nu, 4).unwrap(), &p1, &nu).unwrap();
    let d2 = condition_disorder(&sample_disorder(n, &nu2, 4).unwrap(), &p2, &nu2).unwrap();
    let cfg = SimConfig { n, dt: 1e-3, t_max: 0.3, seed: 4, replicas: 1, snapshot_every: 30 };
    let x0 = sample_initial(n, 0.9, 0.5, 4).unwrap();
    let t1 = run_langevin(&d1, &p1, &cfg, x0.clone(), &mut GaussianNoise::new(4)).unwrap();
    let t2 = run_langevin(&d2, &p2, &cfg, x0, &mut GaussianNoise::new(4)).unwrap();
    assert_eq!(t1, t2);
    for x in &t1.x {
        assert_eq!(hamiltonian_and_grad(&d2, x).0, beta * hamiltonian_and_grad(&d1, x).0);
    }
}

#[test]
fn shared_noise_refinement_is_first_order() {
    let (nu, p) = sk_soft();
    let n = 50;
    let dis = condition_disorder(&sample_disorder(n, &nu, 2).unwrap(), &p, &nu).unwrap();
    let x0 = sample_initial(n, 1.0, 0.5, 2).unwrap();
    let fine_dt: f64 = 1.25e-4;
    // a Brownian path sampled at the finest step, shared by all runs
    let steps = (1.0 / fine_dt) as usize;
    let mut rng = stream_rng(17, 2);
    let path: Vec<Vec<f64>> = (0..steps)
        .map(|_| (0..n).map(|_| fine_dt.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let run = |factor: usize| {
        let cfg = SimConfig {
            n,
            dt: fine_dt * factor as f64,
            t_max: 1.0,
            seed: 0,
            replicas: 1,
            snapshot_every: 40 / factor,
        };
        let mut step = 0;
        let mut noise = |_: f64, out: &mut [f64]| {
            out.fill(0.0);
            for k in 0..factor {
                for (o, v) in out.iter_mut().zip(&path[step * factor + k]) {
                    *o += v;
                }
            }
            step += 1;
        };
        let t = run_langevin(&dis, &p, &cfg, x0.clone(), &mut noise).unwrap();
        empirical_observables(&t, &x_star(n, 1.0), &dis)
    };
    let (o1, o2, o4) = (run(1), run(2), run(4));
    let gap = |a: &Observables, b: &Observables| {
        a.c.iter().flatten().zip(b.c.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    };
    let (g_coarse, g_fine) = (gap(&o4, &o1), gap(&o2, &o1));
    assert!(g_coarse <= 10.0 * 4.0 * fine_dt, "{g_coarse}");
    assert!(g_fine < g_coarse);
}

#[test]
fn rotation_fixing_the_axis_preserves_statistics() {
    let (nu, p) = sk_soft();
    let n = 100;
    let cfg = SimConfig { n, dt: 1e-3, t_max: 0.5, seed: 21, replicas: 6, snapshot_every: 50 };
    // Householder reflection acting on coordinates 2..N
    let mut rng = stream_rng(5, 0);
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    v[0] = 0.0;
    let vn: f64 = v.iter().map(|a| a * a).sum();
    let reflect = move |x: &mut [f64]| {
        let s: f64 = x.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() * 2.0 / vn;
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi -= s * vi;
        }
    };
    let mut plain = Vec::new();
    let mut rotated = Vec::new();
    for r in 0..cfg.replicas {
        let seed = replica_seed(cfg.seed, r);
        let dis = condition_disorder(&sample_disorder(n, &nu, seed).unwrap(), &p, &nu).unwrap();
        let x0 = sample_initial(n, 1.0, 0.5, seed).unwrap();
        let t = run_langevin(&dis, &p, &cfg, x0.clone(), &mut GaussianNoise::new(seed)).unwrap();
        plain.push(empirical_observables(&t, &x_star(n, 1.0), &dis));
        let mut x0r = x0;
        reflect(&mut x0r);
        let mut base = GaussianNoise::new(seed);
        let r2 = reflect.clone();
        let mut noise = |dt: f64, out: &mut [f64]| {
            base.fill(dt, out);
            r2(out);
        };
        let t = run_langevin(&dis, &p, &cfg, x0r, &mut noise).unwrap();
        rotated.push(empirical_observables(&t, &x_star(n, 1.0), &dis));
    }
    let a = Observables::mean(&plain).unwrap();
    let b = Observables::mean(&rotated).unwrap();
    for (x, y) in a.c.iter().flatten().zip(b.c.iter().flatten()) {
        assert!((x - y).abs() < 0.05, "{x} {y}");
    }
    for (x, y) in a.q.iter().zip(&b.q) {
        assert!((x - y).abs() < 0.05, "{x} {y}");
    }
}

#[test]
fn error_functional_of_the_limit_is_zero() {
    let (nu, p) = sk_soft();
    let limit = solve_soft(&p, &nu, TwoTimeGrid::from_horizon(0.5, 0.01).unwrap()).unwrap();
    let idx: Vec<usize> = (0..=limit.grid.n).step_by(5).collect();
    let chi = limit.chi();
    let obs = Observables {
        times: idx.iter().map(|&i| limit.grid.t(i)).collect(),
        c: idx.iter().map(|&i| idx.iter().take_while(|&&j| j <= i).map(|&j| limit.c_at(i, j)).collect()).collect(),
        chi: idx.iter().map(|&i| idx.iter().take_while(|&&j| j <= i).map(|&j| chi[i][j]).collect()).collect(),
        q: idx.iter().map(|&i| limit.q[i]).collect(),
        h: idx.iter().map(|&i| limit.energy[i]).collect(),
        k: idx.iter().map(|&i| limit.k[i]).collect(),
    };
    let emp = EmpiricalBundle { replicas: vec![obs.clone()], mean: obs.clone() };
    assert_eq!(error_functional(&emp, &limit).unwrap(), 0.0);
    let mut off = obs;
    off.times[1] += 0.003;
    assert!(matches!(observables_error(&off, &limit), Err(pspin::Error::GridMismatch(_))));
}

#[test]
fn simulate_replicas_are_reproducible() {
    let (nu, p) = sk_soft();
    let cfg = SimConfig { n: 40, dt: 1e-3, t_max: 0.1, seed: 9, replicas: 3, snapshot_every: 10 };
    let a = simulate(&p, &nu, &cfg).unwrap();
    let b = simulate(&p, &nu, &cfg).unwrap();
    assert_eq!(a, b);
    let limit = solve_soft(&p, &nu, TwoTimeGrid::from_horizon(0.1, 0.01).unwrap()).unwrap();
    let e = error_functional(&a, &limit).unwrap();
    assert!((0.0..=4.0).contains(&e));
}

#[test]
fn hessian_far_above_threshold_is_positive() {
    let nu = MixingFunction::pure(3, 0.125).unwrap();
    let q = 0.9;
    let g = 10.0 * nu.d2(q * q).sqrt();
    for seed in 0..100 {
        let ev = conditional_hessian_spectrum(100, &nu, q, g, seed).unwrap();
        assert!(ev[0] > 0.0);
    }
}

#[test]
fn hessian_edge_concentrates() {
    let nu = MixingFunction::pure(3, 0.125).unwrap();
    let q = 0.9;
    let s = nu.d2(q * q).sqrt();
    let g = 2.5 * s;
    let ev = conditional_hessian_spectrum(1000, &nu, q, g, 1).unwrap();
    assert!((ev[0] - (g - 2.0 * s)).abs() <= 0.1, "{}", ev[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conditioning_hits_the_targets(
        seed in 0u64..1000,
        n in 3usize..40,
        e in -1.0f64..1.0,
        g in 0.1f64..3.0,
        q in 0.3f64..1.0,
    ) {
        let nu = MixingFunction::new(vec![0.125, 0.0, 0.05]).unwrap();
        let p = ModelParams::hard(&nu, 1.0, q, 0.0, e, g).unwrap();
        let d = condition_disorder(&sample_disorder(n, &nu, seed).unwrap(), &p, &nu).unwrap();
        let (eg, gg) = conditioning_residuals(&d, &p);
        prop_assert!(eg <= 1e-8 && gg <= 1e-8, "{} {}", eg, gg);
    }

    #[test]
    fn initial_state_lies_on_the_band(seed in 0u64..1000, n in 2usize..200, ratio in -1.0f64..1.0) {
        let q_star = 0.8;
        let x = sample_initial(n, q_star, ratio * q_star, seed).unwrap();
        let k = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
        prop_assert!((k - 1.0).abs() < 1e-12);
        prop_assert!((q_star * x[0] / (n as f64).sqrt() - ratio * q_star).abs() < 1e-12);
    }
}
