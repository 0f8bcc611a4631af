//! Run configuration, command orchestration and on-disk artifacts.
//!
//! A run reads one TOML file, executes a single command and writes its
//! results to an output directory. Every run writes `metadata.json` and an
//! echo of the effective configuration as `config.toml`. Re-running from
//! that echo reproduces the CSV outputs bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fdt;
use crate::model::{Confinement, MixingFunction, ModelParams};
use crate::simulate::{self, SimConfig};
use crate::sk::{self, SkParams};
use crate::volterra::{self, Constraint, TwoTimeBundle, TwoTimeGrid};

/// Process exit code for a successful run.
pub const EXIT_OK: i32 = 0;
/// Process exit code for configuration or computation errors.
pub const EXIT_ERROR: i32 = 1;
/// Process exit code when an invariant audit or comparison exceeds its tolerance.
pub const EXIT_AUDIT: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SolveHard,
    SolveSoft,
    Fdt,
    Sk,
    Simulate,
    Compare,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SolveHard => "solve-hard",
            Command::SolveSoft => "solve-soft",
            Command::Fdt => "fdt",
            Command::Sk => "sk",
            Command::Simulate => "simulate",
            Command::Compare => "compare",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Validation(Error),
    #[error("incomplete configuration: {0}")]
    Missing(String),
    #[error(transparent)]
    Compute(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        EXIT_ERROR
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `[b_2², b_3², ...]`.
    pub nu: Vec<f64>,
    pub beta: f64,
    pub q_star: f64,
    pub q_o: f64,
    pub e_star: f64,
    pub g_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    #[default]
    Hard,
    Soft,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSection {
    #[serde(default)]
    pub kind: ConstraintKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    /// Defaults to the canonical value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub t_max: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub n: usize,
    pub dt: f64,
    /// Defaults to the grid horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default = "one")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub snapshot_every: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Hard,
    Soft,
    Sk,
    /// A bundle previously written by `solve-hard`, `solve-soft` or `sk`.
    Dir,
}

/// One side of a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Source {
    pub kind: SourceKind,
    /// Solve on `h / refine` and restrict to the configured grid.
    #[serde(default = "one_u")]
    pub refine: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

fn one_u() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub left: Source,
    pub right: Source,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_tol() -> f64 {
    5e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdtSection {
    #[serde(default = "half")]
    pub gamma: f64,
}

fn half() -> f64 {
    0.5
}

/// The whole configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    pub model: ModelSection,
    #[serde(default)]
    pub constraint: ConstraintSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fdt: Option<FdtSection>,
    /// Tolerance of the invariant audit.
    #[serde(default = "audit_tol")]
    pub audit_tol: f64,
}

fn audit_tol() -> f64 {
    1e-8
}

impl RunConfig {
    pub fn mixing(&self) -> CliResult<MixingFunction> {
        MixingFunction::new(self.model.nu.clone()).map_err(CliError::Validation)
    }

    /// Validated model parameters with `φ` resolved.
    pub fn params(&self) -> CliResult<ModelParams> {
        let nu = self.mixing()?;
        let m = &self.model;
        let mut p = ModelParams::hard(&nu, m.beta, m.q_star, m.q_o, m.e_star, m.g_star)
            .map_err(CliError::Validation)?;
        let c = &self.constraint;
        p.confinement = match c.kind {
            ConstraintKind::Hard => {
                if c.l.is_some() || c.k.is_some() {
                    return Err(CliError::Missing("l and k apply only to soft constraints".into()));
                }
                Confinement::Hard { phi: c.phi.unwrap_or(p.confinement.phi()) }
            }
            ConstraintKind::Soft => Confinement::Soft {
                l: c.l.ok_or_else(|| CliError::Missing("soft constraint needs l".into()))?,
                k: c.k.unwrap_or(1),
                phi: c.phi.unwrap_or(p.confinement.phi()),
            },
        };
        p.validate(&nu).map_err(CliError::Validation)?;
        Ok(p)
    }

    pub fn grid(&self) -> CliResult<TwoTimeGrid> {
        let g = self.grid.ok_or_else(|| CliError::Missing("[grid] block is required".into()))?;
        TwoTimeGrid::from_horizon(g.t_max, g.h).map_err(CliError::Validation)
    }

    pub fn sim_config(&self) -> CliResult<SimConfig> {
        let s = self.sim.as_ref().ok_or_else(|| CliError::Missing("[sim] block is required".into()))?;
        let t_max = s
            .t_max
            .or(self.grid.map(|g| g.t_max))
            .ok_or_else(|| CliError::Missing("[sim] t_max or [grid] t_max is required".into()))?;
        let cfg = SimConfig {
            n: s.n,
            dt: s.dt,
            t_max,
            seed: s.seed,
            replicas: s.replicas,
            snapshot_every: s.snapshot_every,
        };
        cfg.steps().map_err(CliError::Validation)?;
        Ok(cfg)
    }

    /// Checks that every block needed by `command` is present and valid.
    pub fn check(&self, command: Command) -> CliResult<()> {
        self.params()?;
        match command {
            Command::SolveHard | Command::SolveSoft | Command::Sk | Command::Fdt => {
                self.grid()?;
            }
            Command::Simulate => {
                self.sim_config()?;
            }
            Command::Compare => {
                self.grid()?;
                if self.compare.is_none() {
                    return Err(CliError::Missing("[compare] block is required".into()));
                }
            }
            Command::Report => {}
        }
        match command {
            Command::SolveHard if self.constraint.kind != ConstraintKind::Hard => {
                Err(CliError::Missing("solve-hard needs a hard constraint".into()))
            }
            Command::SolveSoft | Command::Simulate if self.constraint.kind != ConstraintKind::Soft => {
                Err(CliError::Missing(format!("{} needs a soft constraint", command.name())))
            }
            _ => Ok(()),
        }
    }
}

/// Parses and validates `path`. The command is checked only when the file
/// names one.
pub fn parse_config(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let cfg = parse_config_str(&text).map_err(|e| match e {
        CliError::Parse { message, .. } => CliError::Parse { path: path.to_path_buf(), message },
        other => other,
    })?;
    Ok(cfg)
}

pub fn parse_config_str(text: &str) -> CliResult<RunConfig> {
    let cfg: RunConfig = toml::from_str(text)
        .map_err(|e| CliError::Parse { path: PathBuf::from("<string>"), message: e.to_string() })?;
    match cfg.command {
        Some(c) => cfg.check(c)?,
        None => {
            cfg.params()?;
        }
    }
    Ok(cfg)
}

/// Command-line overrides.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// Summary of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// `false` if an audit or comparison exceeded its tolerance.
    pub passed: bool,
    pub messages: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_OK
        } else {
            EXIT_AUDIT
        }
    }
}

/// Exit code of a run result.
pub fn exit_code(result: &CliResult<Outcome>) -> i32 {
    match result {
        Ok(o) => o.exit_code(),
        Err(e) => e.exit_code(),
    }
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
    bundle: Option<BundleHeader>,
}

impl Writer {
    fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new(), bundle: None })
    }

    fn put(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(io_err(&path))?;
        self.files.push(path);
        Ok(())
    }
}

/// Full-precision decimal form used in every CSV.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Lower-triangular triplets `i,j,value`.
pub fn triangle_csv(m: &[Vec<f64>]) -> String {
    let mut s = String::from("i,j,value\n");
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let _ = writeln!(s, "{i},{j},{}", fmt_f64(*v));
        }
    }
    s
}

/// Columns with a header row.
pub fn columns_csv(names: &[&str], cols: &[&[f64]]) -> String {
    let mut s = names.join(",");
    s.push('\n');
    let len = cols.iter().map(|c| c.len()).min().unwrap_or(0);
    for i in 0..len {
        let row: Vec<String> = cols.iter().map(|c| fmt_f64(c[i])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn named_csv(rows: &[(&str, f64)]) -> String {
    let mut s = String::from("name,value\n");
    for (k, v) in rows {
        let _ = writeln!(s, "{k},{}", fmt_f64(*v));
    }
    s
}

fn parse_err(path: &Path, msg: impl Into<String>) -> CliError {
    CliError::Parse { path: path.to_path_buf(), message: msg.into() }
}

fn read_triangle(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        let mut it = line.split(',');
        let mut next = || it.next().ok_or_else(|| parse_err(path, format!("line {}: missing field", ln + 1)));
        let i: usize = next()?.parse().map_err(|_| parse_err(path, format!("line {}: bad i", ln + 1)))?;
        let j: usize = next()?.parse().map_err(|_| parse_err(path, format!("line {}: bad j", ln + 1)))?;
        let v: f64 = next()?.parse().map_err(|_| parse_err(path, format!("line {}: bad value", ln + 1)))?;
        if i == out.len() && j == 0 {
            out.push(Vec::with_capacity(i + 1));
        }
        if i + 1 != out.len() || j != out[i].len() {
            return Err(parse_err(path, format!("line {}: entries out of order", ln + 1)));
        }
        out[i].push(v);
    }
    Ok(out)
}

fn read_columns(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let header: Vec<String> =
        lines.next().ok_or_else(|| parse_err(path, "empty file"))?.split(',').map(String::from).collect();
    let mut cols = vec![Vec::new(); header.len()];
    for (ln, line) in lines.enumerate() {
        let vals: Vec<&str> = line.split(',').collect();
        if vals.len() != header.len() {
            return Err(parse_err(path, format!("line {}: expected {} fields", ln + 2, header.len())));
        }
        for (c, v) in cols.iter_mut().zip(vals) {
            c.push(v.parse().map_err(|_| parse_err(path, format!("line {}: bad number {v}", ln + 2)))?);
        }
    }
    Ok((header, cols))
}

const SERIES_COLUMNS: [&str; 7] = ["t", "q", "K", "H", "H_hat", "mu", "k_pre"];

/// Bundle layout, recorded in `metadata.json` next to `R.csv`, `C.csv` and
/// `series.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BundleHeader {
    pub grid: TwoTimeGrid,
    pub constraint: Constraint,
    pub q_star: f64,
}

/// Writes `R.csv`, `C.csv` and `series.csv`.
fn write_bundle(w: &mut Writer, b: &TwoTimeBundle) -> CliResult<()> {
    w.put("R.csv", &triangle_csv(&b.r))?;
    w.put("C.csv", &triangle_csv(&b.c))?;
    let t: Vec<f64> = (0..=b.grid.n).map(|i| b.grid.t(i)).collect();
    let k_pre = if b.k_pre.is_empty() { vec![f64::NAN; t.len()] } else { b.k_pre.clone() };
    w.put(
        "series.csv",
        &columns_csv(&SERIES_COLUMNS, &[&t, &b.q, &b.k, &b.energy, &b.h_hat, &b.mu, &k_pre]),
    )?;
    w.bundle = Some(BundleHeader { grid: b.grid, constraint: b.constraint, q_star: b.q_star });
    Ok(())
}

/// Reads a bundle written by a solve command.
pub fn load_bundle(dir: &Path) -> CliResult<TwoTimeBundle> {
    #[derive(Deserialize)]
    struct Meta {
        bundle: Option<BundleHeader>,
    }
    let hpath = dir.join("metadata.json");
    let text = fs::read_to_string(&hpath).map_err(io_err(&hpath))?;
    let meta: Meta = serde_json::from_str(&text).map_err(|e| parse_err(&hpath, e.to_string()))?;
    let header = meta.bundle.ok_or_else(|| parse_err(&hpath, "no bundle recorded in this directory"))?;
    let r = read_triangle(&dir.join("R.csv"))?;
    let c = read_triangle(&dir.join("C.csv"))?;
    let spath = dir.join("series.csv");
    let (names, mut cols) = read_columns(&spath)?;
    if names != SERIES_COLUMNS {
        return Err(parse_err(&spath, format!("unexpected header {names:?}")));
    }
    let n = header.grid.n + 1;
    if r.len() != n || c.len() != n || cols[0].len() != n {
        return Err(parse_err(dir, "field lengths do not match the grid"));
    }
    let k_pre = cols.pop().unwrap();
    let k_pre = if k_pre.iter().all(|v| v.is_nan()) { Vec::new() } else { k_pre };
    let mu = cols.pop().unwrap();
    let h_hat = cols.pop().unwrap();
    let energy = cols.pop().unwrap();
    let k = cols.pop().unwrap();
    let q = cols.pop().unwrap();
    Ok(TwoTimeBundle {
        grid: header.grid,
        constraint: header.constraint,
        q_star: header.q_star,
        r,
        c,
        q,
        k,
        energy,
        h_hat,
        mu,
        k_pre,
    })
}

fn to_json<T: Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Missing(format!("serialisation failed: {e}")))
}

fn invariants_csv(rep: &volterra::InvariantReport, rbd: Option<(f64, f64)>) -> String {
    let mut s = String::from("check,value,tol,passed\n");
    let fails = |name: &str| !rep.failures.iter().any(|f| f.contains(name));
    let mut row = |name: &str, v: f64, tol: f64, ok: bool| {
        let _ = writeln!(s, "{name},{},{},{ok}", fmt_f64(v), fmt_f64(tol));
    };
    row("diag_r", rep.diag_r, rep.tol, fails("R(s,s)"));
    row("diag_c", rep.diag_c, rep.tol, fails("C(s,s)"));
    row("k_boundary", rep.k_boundary, rep.tol, fails("K boundary"));
    row("q_excess", rep.q_excess, rep.tol, fails("|q|"));
    row("c_excess", rep.c_excess, rep.tol, fails("|C|"));
    row("psd_min_eig", rep.psd_min_eig, -rep.tol, fails("Gram"));
    row("k_pre_residual", rep.k_pre_residual, f64::NAN, true);
    if let Some((v, tol)) = rbd {
        row("response_bound", v, tol, v <= tol);
    }
    s
}

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: Option<u64>,
    threads: usize,
    wall_time_s: f64,
    passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    bundle: Option<BundleHeader>,
    config: &'a RunConfig,
}

/// Executes `command` for `cfg`, writing artifacts into `out`.
pub fn run(command: Command, cfg: &RunConfig, out: &Path, ov: Overrides) -> CliResult<Outcome> {
    let start = Instant::now();
    let mut cfg = cfg.clone();
    cfg.command = Some(command);
    if let (Some(seed), Some(sim)) = (ov.seed, cfg.sim.as_mut()) {
        sim.seed = seed;
    }
    cfg.check(command)?;
    let mut w = Writer::new(out)?;
    let mut messages = Vec::new();
    let passed = match command {
        Command::SolveHard | Command::SolveSoft => cmd_solve(&cfg, &mut w, &mut messages)?,
        Command::Sk => cmd_sk(&cfg, &mut w, &mut messages)?,
        Command::Fdt => cmd_fdt(&cfg, &mut w, &mut messages)?,
        Command::Simulate => cmd_simulate(&cfg, &mut w, &mut messages)?,
        Command::Compare => cmd_compare(&cfg, &mut w, &mut messages)?,
        Command::Report => cmd_report(&cfg, &mut w, &mut messages)?,
    };
    let echo = toml::to_string(&cfg).map_err(|e| CliError::Missing(format!("cannot echo config: {e}")))?;
    w.put("config.toml", &echo)?;
    let meta = Metadata {
        tool: "pspin",
        version: env!("CARGO_PKG_VERSION"),
        command: command.name(),
        seed: cfg.sim.as_ref().map(|s| s.seed),
        threads: ov.threads.unwrap_or_else(rayon::current_num_threads),
        wall_time_s: start.elapsed().as_secs_f64(),
        passed,
        bundle: w.bundle,
        config: &cfg,
    };
    w.put("metadata.json", &to_json(&meta)?)?;
    Ok(Outcome { files: w.files, passed, messages })
}

fn cmd_solve(cfg: &RunConfig, w: &mut Writer, msgs: &mut Vec<String>) -> CliResult<bool> {
    let nu = cfg.mixing()?;
    let params = cfg.params()?;
    let grid = cfg.grid()?;
    let bundle = volterra::solve_with(&params, &nu, grid, &volterra::SolverOptions::default())?;
    write_bundle(w, &bundle)?;
    let rep = volterra::check_bundle(&bundle, cfg.audit_tol);
    let rbd = (bundle.constraint == Constraint::Hard)
        .then(|| (volterra::response_integral_bound(&bundle), 2.0 * grid.h));
    w.put("invariants.csv", &invariants_csv(&rep, rbd))?;
    msgs.extend(rep.failures.iter().cloned());
    let rbd_ok = rbd.is_none_or(|(v, tol)| v <= tol);
    if !rbd_ok {
        msgs.push("response integral bound exceeds 2h".into());
    }
    Ok(rep.passed() && rbd_ok)
}

fn cmd_sk(cfg: &RunConfig, w: &mut Writer, msgs: &mut Vec<String>) -> CliResult<bool> {
    let nu = cfg.mixing()?;
    let params = cfg.params()?;
    let sp = SkParams::from_model(&params, &nu).map_err(CliError::Validation)?;
    let grid = cfg.grid()?;
    let sol = sk::solve_m(&sp, grid)?;
    let bundle = sol.to_bundle()?;
    write_bundle(w, &bundle)?;
    let mut rows = vec![
        ("y", sk::y_of_g(sp.g_star)?),
        ("stationarity_residual", sk::stationarity_residual(&sp)?),
    ];
    match sk::sk_asymptotics(&sp, grid) {
        Ok(a) => rows.extend([
            ("c", a.c),
            ("alpha_sq", a.alpha_sq),
            ("mu_inf", a.mu_inf),
            ("h_inf", a.h_inf),
        ]),
        Err(e) => msgs.push(format!("no localized asymptotics: {e}")),
    }
    w.put("constants.csv", &named_csv(&rows))?;
    Ok(true)
}

fn cmd_fdt(cfg: &RunConfig, w: &mut Writer, msgs: &mut Vec<String>) -> CliResult<bool> {
    let nu = cfg.mixing()?;
    let params = cfg.params()?;
    let grid = cfg.grid()?;
    let gamma = cfg.fdt.map_or(0.5, |f| f.gamma);
    let beta = params.beta;
    let prof = fdt::solve_d(gamma, beta, &nu, grid)?;
    let t: Vec<f64> = (0..=grid.n).map(|i| grid.t(i)).collect();
    let r = prof.r_fdt();
    w.put("D.csv", &columns_csv(&["t", "D", "D_prime", "R_fdt"], &[&t, &prof.d, &prof.d_prime, &r]))?;
    let mut rows = vec![("gamma", gamma), ("beta", beta), ("phi_1", fdt::phi(gamma, beta, &nu, 1.0))];
    let nan = f64::NAN;
    rows.push(("d_infty", fdt::d_infty(gamma, beta, &nu).unwrap_or(nan)));
    rows.push(("d_star", fdt::d_star(beta, &nu).unwrap_or(nan)));
    match fdt::beta_c(&nu) {
        Ok(bc) => {
            rows.push(("beta_c", bc));
            if beta > bc {
                let a = fdt::aging_constants(beta, &nu)?;
                rows.extend([("aging_gamma", a.gamma), ("aging_d_inf", a.d_inf), ("aging_i", a.i_const)]);
            }
        }
        Err(e) => msgs.push(format!("beta_c unavailable: {e}")),
    }
    match fdt::kappa_values(&prof, &nu) {
        Ok(k) => rows.extend([
            ("kappa1", k.quadrature.k1),
            ("kappa2", k.quadrature.k2),
            ("kappa1_closed", k.closed_form.k1),
            ("kappa2_closed", k.closed_form.k2),
        ]),
        Err(e) => msgs.push(format!("kappas unavailable: {e}")),
    }
    w.put("constants.csv", &named_csv(&rows))?;
    Ok(true)
}

fn cmd_simulate(cfg: &RunConfig, w: &mut Writer, msgs: &mut Vec<String>) -> CliResult<bool> {
    let nu = cfg.mixing()?;
    let params = cfg.params()?;
    let sc = cfg.sim_config()?;
    let emp = simulate::simulate(&params, &nu, &sc)?;
    let m = &emp.mean;
    w.put("C_N.csv", &triangle_csv(&m.c))?;
    w.put("chi_N.csv", &triangle_csv(&m.chi))?;
    w.put("series.csv", &columns_csv(&["t", "q_N", "H_N", "K_N"], &[&m.times, &m.q, &m.h, &m.k]))?;
    let mut rep = String::from("replica,t,q_N,H_N,K_N\n");
    for (r, o) in emp.replicas.iter().enumerate() {
        for i in 0..o.times.len() {
            let _ = writeln!(rep, "{r},{},{},{},{}", fmt_f64(o.times[i]), fmt_f64(o.q[i]), fmt_f64(o.h[i]), fmt_f64(o.k[i]));
        }
    }
    w.put("replicas.csv", &rep)?;
    if cfg.grid.is_some() {
        let limit = volterra::solve_soft(&params, &nu, cfg.grid()?)?;
        let err = simulate::error_report(&emp, &limit)?;
        msgs.push(format!("error functional {:.4} (per-replica mean {:.4} ± {:.4})", err.of_mean, err.mean, err.std));
        w.put("err.json", &to_json(&err)?)?;
    }
    Ok(true)
}

fn load_source(cfg: &RunConfig, src: &Source) -> CliResult<TwoTimeBundle> {
    let nu = cfg.mixing()?;
    let params = cfg.params()?;
    let grid = cfg.grid()?;
    if src.kind == SourceKind::Dir {
        let path = src.path.as_ref().ok_or_else(|| CliError::Missing("dir source needs a path".into()))?;
        return load_bundle(path);
    }
    let r = src.refine.max(1);
    let fine = TwoTimeGrid::new(grid.h / r as f64, grid.n * r).map_err(CliError::Validation)?;
    let b = match src.kind {
        SourceKind::Hard => volterra::solve_hard(&params.with_hard(&nu)?, &nu, fine)?,
        SourceKind::Soft => {
            if !matches!(params.confinement, Confinement::Soft { .. }) {
                return Err(CliError::Missing("soft source needs a soft constraint block".into()));
            }
            volterra::solve_soft(&params, &nu, fine)?
        }
        SourceKind::Sk => {
            let sp = SkParams::from_model(&params.with_hard(&nu)?, &nu).map_err(CliError::Validation)?;
            sk::solve_m(&sp, fine)?.to_bundle()?
        }
        SourceKind::Dir => unreachable!(),
    };
    Ok(if r > 1 { b.subsample(r)? } else { b })
}

#[derive(Serialize)]
struct CompareReport {
    tol: f64,
    gaps: volterra::FieldGaps,
    gaps_passed: bool,
    audits: Vec<(String, volterra::InvariantReport)>,
    passed: bool,
}

fn cmd_compare(cfg: &RunConfig, w: &mut Writer, msgs: &mut Vec<String>) -> CliResult<bool> {
    let cmp = cfg.compare.as_ref().unwrap();
    let a = load_source(cfg, &cmp.left)?;
    let b = load_source(cfg, &cmp.right)?;
    let gaps = volterra::field_gaps(&a, &b)?;
    let worst = [gaps.r, gaps.c, gaps.q, gaps.mu, gaps.energy].into_iter().fold(0.0, f64::max);
    let gaps_passed = worst <= cmp.tol;
    if !gaps_passed {
        msgs.push(format!("largest gap {worst:e} exceeds tolerance {:e}", cmp.tol));
    }
    let mut audits = Vec::new();
    for (name, bundle) in [("left", &a), ("right", &b)] {
        let rep = volterra::check_bundle(bundle, cfg.audit_tol);
        msgs.extend(rep.failures.iter().map(|f| format!("{name}: {f}")));
        audits.push((name.to_string(), rep));
    }
    let passed = gaps_passed && audits.iter().all(|(_, r)| r.passed());
    let report = CompareReport { tol: cmp.tol, gaps, gaps_passed, audits, passed };
    w.put("report.json", &to_json(&report)?)?;
    Ok(passed)
}

fn cmd_report(cfg: &RunConfig, w: &mut Writer, msgs: &mut Vec<String>) -> CliResult<bool> {
    let nu = cfg.mixing()?;
    let params = cfg.params()?;
    let drift = params.drift(&nu)?;
    let a = params.q_star * params.q_star;
    let mut s = String::new();
    let _ = writeln!(s, "# Model report\n");
    let _ = writeln!(s, "- nu coefficients b_p^2 (p = 2, 3, ...): {:?}", nu.coeffs_sq());
    let _ = writeln!(s, "- beta = {}, q_star = {}, q_o = {}", params.beta, params.q_star, params.q_o);
    let _ = writeln!(s, "- E_star = {}, G_star = {}", params.e_star, params.g_star);
    let _ = writeln!(s, "- confinement: {:?}", params.confinement);
    let _ = writeln!(s, "- drift coefficients (p = 2, 3, ...): {:?}", drift.coeffs());
    let _ = writeln!(s, "- canonical phi = {}", params.canonical_phi(&nu)?);
    let threshold = 2.0 * nu.d2(a).sqrt();
    let _ = writeln!(
        s,
        "- Hessian threshold 2 sqrt(nu''(q_star^2)) = {threshold:.6}; G_star is {} it",
        if params.g_star > threshold { "above" } else { "not above" }
    );
    let _ = writeln!(s, "\n## FDT regime\n");
    match fdt::beta_c(&nu) {
        Ok(bc) => {
            let _ = writeln!(s, "- beta_c = {bc:.10}");
            if params.beta > bc {
                let ag = fdt::aging_constants(params.beta, &nu)?;
                let _ = writeln!(s, "- aging: gamma = {:.10}, D_inf = {:.10}, I = {:.10}", ag.gamma, ag.d_inf, ag.i_const);
            } else {
                let _ = writeln!(s, "- beta <= beta_c: D_inf = 0 with gamma = 1/2");
            }
        }
        Err(e) => {
            let _ = writeln!(s, "- beta_c unavailable: {e}");
        }
    }
    let _ = writeln!(s, "- phi(1) at gamma = 1/2: {:.10}", fdt::phi(0.5, params.beta, &nu, 1.0));
    let _ = writeln!(s, "\n## Localized branch without aging\n");
    match fdt::localized_no_aging(&params, &nu) {
        Ok(b) => {
            let _ = writeln!(s, "- y = {:.10}, alpha^2 = {:.10}, gamma = {:.10}", b.y, b.alpha_sq, b.gamma);
            let _ = writeln!(s, "- H(inf) = {:.10}, TAP stable: {}", b.h_inf, b.tap_stable);
            if let Some(bp) = b.beta_plus {
                let _ = writeln!(s, "- beta_plus = {bp:.10}");
            }
        }
        Err(e) => {
            let _ = writeln!(s, "- none: {e}");
        }
    }
    let mut passed = true;
    if let Some(g) = cfg.grid {
        let grid = TwoTimeGrid::from_horizon(g.t_max, g.h).map_err(CliError::Validation)?;
        let hard = volterra::solve_hard(&params.with_hard(&nu)?, &nu, grid)?;
        let rep = volterra::check_bundle(&hard, cfg.audit_tol);
        let _ = writeln!(s, "\n## Hard-sphere audit (T = {}, h = {})\n", g.t_max, g.h);
        let _ = writeln!(s, "- pre-enforcement diagonal residual: {:e}", rep.k_pre_residual);
        let _ = writeln!(s, "- C-bar Gram minimum eigenvalue: {:e}", rep.psd_min_eig);
        let _ = writeln!(s, "- max |q| - q_star: {:e}", rep.q_excess);
        let _ = writeln!(s, "- q(T) = {:.10}, mu(T) = {:.10}, H(T) = {:.10}", hard.q[grid.n], hard.mu[grid.n], hard.energy[grid.n]);
        let _ = writeln!(s, "- audit: {}", if rep.passed() { "passed" } else { "FAILED" });
        msgs.extend(rep.failures.iter().cloned());
        passed = rep.passed();
    }
    w.put("report.md", &s)?;
    Ok(passed)
}
