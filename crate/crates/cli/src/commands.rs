//! Subcommand implementations. Each returns whether the run ended in a
//! converged (or otherwise successful) state.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use himnet::correctors::{Corrector, MionetCorrector, OracleMode, SpectralOracle};
use himnet::fem::{assemble_stiffness, PaddingMode, StructuredGrid};
use himnet::hybrid::{hybrid_solve, sweep_m, write_sweep_csv, HybridConfig, InnerSolver, IterationTrace, SolveStatus, StopRule};
use himnet::mionet::{
    generate_dataset, relative_l2_error, train, Activation, Architecture, Dataset, DatasetConfig,
    FailurePolicy, MionetModel, TrainOptions,
};
use himnet::multigrid::solve_multigrid;
use himnet::smoothers::{solve_stationary, SmootherKind};
use himnet::spectral::{
    argmin_rate, estimate_zeta0, gs_symbol, hybrid_iteration_matrix, model_error_spectrum, rate_bound,
    richardson_m_bound, smoothing_factor, spectral_heatmap, spectral_radius, write_rate_csv, RateParams,
};

use crate::config::usage;
use crate::problem::{CorrectorConfig, FieldSpec, GpField, Problem, ProblemConfig, SolverConfig};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// Timing goes to `<out>.run.json` so that the main output stays byte-identical
/// across runs.
fn write_sidecar(out: &Path, command: &str, started: SystemTime, elapsed_s: f64, extra: Value) -> Result<()> {
    let mut name = out.as_os_str().to_owned();
    name.push(".run.json");
    let started = started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let meta = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix_s": started,
        "elapsed_s": elapsed_s,
        "details": extra,
    });
    let mut w = create(Path::new(&name))?;
    serde_json::to_writer_pretty(&mut w, &meta)?;
    writeln!(w)?;
    Ok(())
}

fn default_records() -> usize {
    1000
}

fn default_dim() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataConfig {
    pub out: PathBuf,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_records")]
    pub n_records: usize,
    #[serde(default)]
    pub seed: u64,
    pub fine_n: Option<usize>,
    pub sensors: Option<usize>,
    pub query_n: Option<usize>,
    pub gp_k: Option<GpField>,
    pub gp_f: Option<GpField>,
    /// Boundary data over `t in [0, 4)` (2-d only).
    pub gp_g: Option<GpField>,
    pub positivity_floor: Option<f64>,
    pub mg_tol: Option<f64>,
    pub on_failure: Option<FailurePolicy>,
}

impl GenDataConfig {
    pub fn dataset_config(&self) -> Result<DatasetConfig> {
        let mut c = match self.dim {
            1 => DatasetConfig::default_1d(self.n_records, self.seed),
            2 => DatasetConfig::default_2d(self.n_records, self.seed),
            d => return Err(usage(format!("dim must be 1 or 2, got {d}"))),
        };
        if let Some(v) = self.fine_n {
            c.fine_n = v;
        }
        if let Some(v) = self.sensors {
            c.sensors = v;
            if self.query_n.is_none() {
                c.query_n = v - 2;
            }
        }
        if let Some(v) = self.query_n {
            c.query_n = v;
        }
        if let Some(g) = &self.gp_k {
            c.gp_k = g.spec();
        }
        if let Some(g) = &self.gp_f {
            c.gp_f = g.spec();
        }
        c.gp_g = self.gp_g.map(|g| g.spec());
        if let Some(v) = self.positivity_floor {
            c.positivity_floor = v;
        }
        if let Some(v) = self.mg_tol {
            c.mg_tol = v;
        }
        if let Some(v) = self.on_failure {
            c.on_failure = v;
        }
        c.validate()?;
        Ok(c)
    }
}

pub fn gen_data(cfg: &GenDataConfig) -> Result<bool> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let dc = cfg.dataset_config()?;
    let (data, skipped) = generate_dataset::<f64>(&dc)?;
    data.save(&cfg.out)?;
    println!(
        "generated {} records ({} skipped): dim {}, fine grid {}, sensors {}, query nodes {}, seed {}",
        data.len(),
        skipped.len(),
        dc.dim,
        dc.fine_n,
        dc.sensors,
        dc.query_n,
        dc.seed
    );
    println!("wrote {}", cfg.out.display());
    write_sidecar(
        &cfg.out,
        "gen-data",
        started,
        clock.elapsed().as_secs_f64(),
        json!({ "config": dc, "skipped": skipped }),
    )?;
    Ok(true)
}

fn default_depth() -> usize {
    3
}

fn default_activation() -> Activation {
    Activation::Tanh
}

/// Hidden width and depth of the branch and trunk networks; input sizes come
/// from the dataset.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    /// 100 in 1-d and 500 in 2-d when absent.
    #[serde(default)]
    pub width: Option<usize>,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self { width: None, depth: default_depth(), activation: default_activation() }
    }
}

impl ArchConfig {
    fn build(&self, data: &Dataset<f64>) -> Architecture {
        let w = self.width.unwrap_or(if data.dim == 1 { 100 } else { 500 });
        let layers = |input: usize| std::iter::once(input).chain(std::iter::repeat_n(w, self.depth)).collect();
        Architecture {
            branch_k: layers(data.k_sensors.len()),
            branch_f: vec![data.f_sensors.len(), w],
            trunk: layers(data.dim),
            activation: self.activation,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    /// `epoch,loss` CSV; `<out>.loss.csv` when absent.
    #[serde(default)]
    pub loss_csv: Option<PathBuf>,
    #[serde(default)]
    pub architecture: ArchConfig,
    #[serde(default)]
    pub model_seed: u64,
    /// Continue from saved weights instead of a fresh initialization.
    #[serde(default)]
    pub resume: Option<PathBuf>,
    /// Trailing records kept out of training and used for the reported test error.
    #[serde(default)]
    pub holdout: usize,
    #[serde(default)]
    pub options: TrainOptions,
}

pub fn train_cmd(cfg: &TrainConfig) -> Result<bool> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let all = Dataset::<f64>::load(&cfg.data)?;
    if cfg.holdout >= all.len() {
        return Err(usage(format!("holdout {} leaves no training records out of {}", cfg.holdout, all.len())));
    }
    let split = all.len() - cfg.holdout;
    let data = all.slice(0..split);
    let (mut model, arch, done) = match &cfg.resume {
        Some(path) => {
            let m = MionetModel::<f64>::load(path)?;
            let done = m.info.get("epochs_completed").and_then(Value::as_u64).unwrap_or(0) as usize;
            let arch = m.info.get("architecture").cloned().unwrap_or(Value::Null);
            (m, arch, done)
        }
        None => {
            let arch = cfg.architecture.build(&data);
            let m = MionetModel::new(&arch, data.k_sensors.clone(), data.f_sensors.clone(), cfg.model_seed)?;
            (m, serde_json::to_value(&arch)?, 0)
        }
    };
    let report = train(&mut model, &data, &cfg.options)?;
    let final_loss = report.loss_history.last().copied().unwrap_or(f64::NAN);
    let train_err = relative_l2_error(&model, &data)?;
    let test_err = if cfg.holdout > 0 { Some(relative_l2_error(&model, &all.slice(split..all.len()))?) } else { None };
    let epochs = done + report.loss_history.len();
    model.info.insert("architecture".into(), arch);
    model.info.insert("train_options".into(), serde_json::to_value(cfg.options)?);
    model.info.insert("model_seed".into(), json!(cfg.model_seed));
    model.info.insert("dataset".into(), all.metadata.clone());
    model.info.insert("train_records".into(), json!(split));
    model.info.insert("holdout_records".into(), json!(cfg.holdout));
    model.info.insert("epochs_completed".into(), json!(epochs));
    model.info.insert("final_loss".into(), json!(final_loss));
    model.info.insert("grad_check".into(), json!(report.grad_check));
    model.info.insert("train_relative_l2".into(), json!(train_err));
    model.info.insert("test_relative_l2".into(), json!(test_err));
    model.save(&cfg.out)?;

    let loss_path = cfg.loss_csv.clone().unwrap_or_else(|| {
        let mut s = cfg.out.as_os_str().to_owned();
        s.push(".loss.csv");
        PathBuf::from(s)
    });
    let mut w = create(&loss_path)?;
    writeln!(w, "epoch,loss")?;
    for (i, l) in report.loss_history.iter().enumerate() {
        writeln!(w, "{},{l:e}", done + i + 1)?;
    }
    w.flush()?;

    println!("trained {} parameters on {} records for {} epochs", model.num_params(), split, report.loss_history.len());
    if let Some(g) = report.grad_check {
        println!("gradient check: max relative error {g:.3e}");
    }
    println!("final loss {final_loss:.6e}, train relative L2 error {train_err:.4e}");
    if let Some(e) = test_err {
        println!("holdout relative L2 error {e:.4e}");
    }
    println!("wrote {} and {}", cfg.out.display(), loss_path.display());
    write_sidecar(&cfg.out, "train", started, clock.elapsed().as_secs_f64(), json!({ "steps": report.steps }))?;
    Ok(true)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub corrector: CorrectorConfig,
    /// Also run the inner solver alone and report the speed-up.
    #[serde(default)]
    pub compare_plain: bool,
    /// Per-step CSV of the hybrid (or plain, without corrector) run.
    #[serde(default)]
    pub trace: Option<PathBuf>,
}

fn plain_solve(solver: &SolverConfig, prob: &Problem) -> Result<IterationTrace<f64>> {
    let mu0 = vec![0.0; prob.b.len()];
    let stop = solver.stop()?;
    Ok(match solver.inner(prob)? {
        InnerSolver::Smoother(kind) => solve_stationary(&kind, &prob.a, &prob.b, &mu0, &stop)?,
        InnerSolver::Multigrid(h) => solve_multigrid(&h, &prob.b, &mu0, &stop)?,
    })
}

fn describe(label: &str, t: &IterationTrace<f64>) {
    println!(
        "{label}: status {}, iterations {}, time {:.3} s, final residual {:.3e}",
        t.status.as_str(),
        t.iterations(),
        t.total_ms / 1e3,
        t.final_residual()
    );
}

fn write_trace(path: &Path, t: &IterationTrace<f64>) -> Result<()> {
    let mut w = create(path)?;
    t.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn solve(cfg: &SolveConfig) -> Result<bool> {
    let prob = cfg.problem.build()?;
    println!(
        "problem: {}-d, {} interior nodes per axis, {} unknowns{}",
        prob.grid.dim(),
        prob.grid.n(),
        prob.b.len(),
        if prob.augmented { " (boundary rows included)" } else { "" }
    );
    let corrector = cfg.corrector.build(&prob)?;
    let plain = if cfg.compare_plain || corrector.is_none() {
        let t = plain_solve(&cfg.solver, &prob)?;
        describe("plain", &t);
        Some(t)
    } else {
        None
    };
    let Some(c) = corrector else {
        let t = plain.expect("plain run without a corrector");
        if let Some(p) = &cfg.trace {
            write_trace(p, &t)?;
        }
        println!("status: {}", t.status.as_str());
        return Ok(t.status == SolveStatus::Converged);
    };
    let hcfg = cfg.solver.hybrid(&prob)?;
    let t = hybrid_solve(&prob.a, &prob.b, c.as_ref(), &hcfg, None)?;
    describe(&format!("hybrid (M = {}, corrector {})", hcfg.m, cfg.corrector.label()), &t);
    println!("corrector time {:.3} s", t.corrector_ms / 1e3);
    if let Some(p) = plain.as_ref().filter(|p| p.status == SolveStatus::Converged && t.status == SolveStatus::Converged)
    {
        println!(
            "speedup: iterations {:.2}x, time {:.2}x",
            p.iterations() as f64 / t.iterations().max(1) as f64,
            p.total_ms / t.total_ms.max(1e-9)
        );
    }
    if let Some(p) = &cfg.trace {
        write_trace(p, &t)?;
    }
    println!("status: {}", t.status.as_str());
    Ok(t.status == SolveStatus::Converged)
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub corrector: CorrectorConfig,
    pub m_values: Vec<usize>,
    /// Run the inner solver alone first to fill the speed-up column.
    #[serde(default = "default_true")]
    pub baseline: bool,
    pub out: PathBuf,
}

pub fn sweep(cfg: &SweepConfig) -> Result<bool> {
    let prob = cfg.problem.build()?;
    let c = cfg.corrector.build(&prob)?.ok_or_else(|| usage("sweep-m needs a corrector"))?;
    let base = if cfg.baseline {
        let t = plain_solve(&cfg.solver, &prob)?;
        describe("plain", &t);
        (t.status == SolveStatus::Converged).then(|| t.iterations())
    } else {
        None
    };
    let template = cfg.solver.hybrid(&prob)?;
    let rows = sweep_m(&prob.a, &prob.b, c.as_ref(), &cfg.m_values, &template, base)?;
    println!("{:>8} {:>12} {:>10} {:>10} {:>9}", "M", "iterations", "time_s", "status", "speedup");
    for r in &rows {
        let status = if r.status == SolveStatus::Diverged { "div." } else { r.status.as_str() };
        let sp = r.speedup.map(|s| format!("{s:.2}")).unwrap_or_else(|| "-".into());
        println!("{:>8} {:>12} {:>10.3} {:>10} {:>9}", r.m, r.iterations, r.time_s, status, sp);
    }
    let mut w = create(&cfg.out)?;
    write_sweep_csv(&rows, &mut w)?;
    w.flush()?;
    println!("wrote {}", cfg.out.display());
    Ok(true)
}

fn d_n() -> usize {
    48
}

fn d_n0() -> usize {
    10
}

fn d_m_max() -> usize {
    200
}

fn d_eps() -> f64 {
    0.1
}

fn d_r() -> f64 {
    10.0
}

/// `Rate(M)` curve. Without `eta1`/`eta2` the contraction factors follow from
/// `n` and `n0` for Richardson with `omega = h/4`, or default to 0.999 / 0.5
/// when those are absent too.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub n: Option<usize>,
    pub n0: Option<usize>,
    #[serde(default = "d_eps")]
    pub eps: f64,
    #[serde(default = "d_r")]
    pub r: f64,
    #[serde(default = "d_m_max")]
    pub m_max: usize,
    /// Operator norm of `I - C A`; when given the guaranteed period is printed.
    pub norm_ima: Option<f64>,
}

impl Default for RateSection {
    fn default() -> Self {
        Self { eta1: None, eta2: None, n: None, n0: None, eps: d_eps(), r: d_r(), m_max: d_m_max(), norm_ima: None }
    }
}

fn d_rho() -> Vec<f64> {
    vec![0.5]
}

fn d_resolution() -> usize {
    512
}

fn d_sweeps() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GsSection {
    #[serde(default = "d_rho")]
    pub rho: Vec<f64>,
    #[serde(default = "d_resolution")]
    pub resolution: usize,
    /// Interior nodes per axis of the 2-d grid used for the empirical
    /// lowest-mode contraction estimate; skipped when absent.
    pub zeta0_n: Option<usize>,
    #[serde(default = "d_sweeps")]
    pub sweeps: usize,
}

impl Default for GsSection {
    fn default() -> Self {
        Self { rho: d_rho(), resolution: d_resolution(), zeta0_n: None, sweeps: d_sweeps() }
    }
}

fn d_m() -> usize {
    20
}

fn d_steps() -> usize {
    400
}

fn d_source() -> FieldSpec {
    FieldSpec::Gp { mean: 0.0, std: 1.0, length_scale: 0.1, seed: 1, period: None }
}

/// Per-mode error history of a Richardson run (hybrid with the oracle when
/// `n0 > 0`) on the 1-d unit-coefficient problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapSection {
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default = "d_m")]
    pub m: usize,
    #[serde(default = "d_n0")]
    pub n0: usize,
    #[serde(default = "d_steps")]
    pub steps: usize,
    #[serde(default = "d_source")]
    pub source: FieldSpec,
}

impl Default for HeatmapSection {
    fn default() -> Self {
        Self { n: d_n(), m: d_m(), n0: d_n0(), steps: d_steps(), source: d_source() }
    }
}

fn d_m_values() -> Vec<usize> {
    vec![5, 10, 20, 40]
}

/// Observed per-step contraction of the oracle hybrid against the period
/// matrix and the rate bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmpiricalSection {
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default = "d_n0")]
    pub n0: usize,
    #[serde(default = "d_m_values")]
    pub m_values: Vec<usize>,
}

impl Default for EmpiricalSection {
    fn default() -> Self {
        Self { n: d_n(), n0: d_n0(), m_values: d_m_values() }
    }
}

/// Per-mode model error of a trained network (unit coefficient), or of the
/// oracle when no model is given.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelErrorSection {
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default = "d_n0")]
    pub n0: usize,
    pub model: Option<PathBuf>,
}

impl Default for ModelErrorSection {
    fn default() -> Self {
        Self { n: d_n(), n0: d_n0(), model: None }
    }
}

fn d_out_dir() -> PathBuf {
    PathBuf::from("analysis")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    #[serde(default = "d_out_dir")]
    pub out_dir: PathBuf,
    pub rate: Option<RateSection>,
    pub gs: Option<GsSection>,
    pub heatmap: Option<HeatmapSection>,
    pub empirical: Option<EmpiricalSection>,
    pub model_error: Option<ModelErrorSection>,
}

fn unit_1d(n: usize) -> Result<(himnet::Grid64, himnet::CsrMatrix64)> {
    let g = StructuredGrid::<f64>::new_1d(n)?;
    let a = assemble_stiffness(&g, |_: &[f64]| 1.0)?;
    Ok((g, a))
}

fn richardson(n: usize) -> SmootherKind<f64> {
    SmootherKind::Richardson { omega: 1.0 / (4.0 * (n + 1) as f64) }
}

fn analyze_rate(s: &RateSection, dir: &Path) -> Result<()> {
    let (eta1, eta2) = match (s.eta1, s.eta2, s.n, s.n0) {
        (Some(a), Some(b), _, _) => (a, b),
        (None, None, Some(n), Some(n0)) => RateParams::richardson_etas(n, n0),
        (None, None, None, None) => (0.999, 0.5),
        _ => return Err(usage("rate: give both eta1 and eta2, or both n and n0")),
    };
    let p = RateParams::new(eta1, eta2, s.eps, s.r)?;
    let path = dir.join("rate.csv");
    let mut w = create(&path)?;
    write_rate_csv(&p, s.m_max, &mut w)?;
    w.flush()?;
    let best = argmin_rate(&p, s.m_max);
    println!("rate: eta1 {eta1:.6}, eta2 {eta2:.6}, eps {}, R {}", p.eps, p.r);
    if s.m_max >= 20 {
        println!("rate: Rate(20) = {:.4}", rate_bound(20, &p));
    }
    println!("rate: minimum {:.4} at M = {best}", rate_bound(best, &p));
    if let Some(norm) = s.norm_ima {
        println!("rate: convergence guaranteed for M >= {}", richardson_m_bound(norm, eta1)?);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn analyze_gs(s: &GsSection, dir: &Path) -> Result<()> {
    let half = gs_symbol(std::f64::consts::FRAC_PI_2, 0.8f64.acos());
    println!("gs: zeta(pi/2, acos 0.8) = {half:.4}");
    println!("gs: zeta(0, 0) = {:.4}", gs_symbol(0.0, 0.0));
    let path = dir.join("smoothing.csv");
    let mut w = create(&path)?;
    writeln!(w, "rho,smoothing_factor")?;
    for &rho in &s.rho {
        let mu = smoothing_factor(rho, s.resolution)?;
        println!("gs: smoothing factor zeta_{rho} = {mu:.4}");
        writeln!(w, "{rho},{mu:.12}")?;
    }
    w.flush()?;
    if let Some(n) = s.zeta0_n {
        let g = StructuredGrid::<f64>::new_2d(n)?;
        let a = assemble_stiffness(&g, |_: &[f64]| 1.0)?;
        let z = estimate_zeta0(&a, &g, s.sweeps)?;
        println!("gs: zeta0 = {z:.6} (empirical estimate, {n} x {n} interior nodes, {} sweeps)", s.sweeps);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn analyze_heatmap(s: &HeatmapSection, dir: &Path) -> Result<()> {
    let p = ProblemConfig { n: s.n, source: s.source, ..Default::default() }.build()?;
    let exact = SpectralOracle::new(p.grid, s.n, OracleMode::DiscreteExact)?;
    let reference = exact.correct(&p.b)?;
    let stop = StopRule::new(1e-300, s.steps)?;
    let trace = if s.n0 > 0 {
        let o = SpectralOracle::new(p.grid, s.n0, OracleMode::DiscreteExact)?;
        let mut cfg = HybridConfig::new(s.m, InnerSolver::Smoother(richardson(s.n)), stop);
        cfg.use_initial_guess = false;
        cfg.record_errors = true;
        hybrid_solve(&p.a, &p.b, &o, &cfg, Some(&reference))?
    } else {
        // a corrector that never fires: the plain smoother with stored errors
        let o = SpectralOracle::new(p.grid, 1, OracleMode::DiscreteExact)?;
        let mut cfg = HybridConfig::new(usize::MAX, InnerSolver::Smoother(richardson(s.n)), stop);
        cfg.use_initial_guess = false;
        cfg.record_errors = true;
        hybrid_solve(&p.a, &p.b, &o, &cfg, Some(&reference))?
    };
    let h = spectral_heatmap(&trace, s.n)?;
    let path = dir.join("heatmap.csv");
    let mut w = create(&path)?;
    h.write_csv(&mut w)?;
    w.flush()?;
    println!("heatmap: {} modes x {} steps (log10 |coefficient|)", h.modes(), h.steps());
    println!("wrote {}", path.display());
    Ok(())
}

fn analyze_empirical(s: &EmpiricalSection, dir: &Path) -> Result<()> {
    if s.n > 64 {
        return Err(usage("empirical: the period matrix is built densely, use n <= 64"));
    }
    let (g, a) = unit_1d(s.n)?;
    let b = himnet::fem::assemble_load(&g, |x: &[f64]| (5.0 * x[0]).sin() + 2.0 * x[0])?.values;
    let o = SpectralOracle::new(g, s.n0, OracleMode::DiscreteExact)?;
    let spec = model_error_spectrum(&o, &g, s.n0)?;
    let (eta1, eta2) = RateParams::richardson_etas(s.n, s.n0);
    let p = RateParams::new(eta1, eta2, spec.eps, spec.r)?;
    let path = dir.join("empirical_rate.csv");
    let mut w = create(&path)?;
    writeln!(w, "M,empirical,period_radius,rate_bound")?;
    for &m in &s.m_values {
        let mut cfg = HybridConfig::new(m, InnerSolver::Smoother(richardson(s.n)), StopRule::new(1e-300, 40 * m)?);
        cfg.use_initial_guess = false;
        let t = hybrid_solve(&a, &b, &o, &cfg, None)?;
        let r = t.residuals();
        // last whole period above the round-off floor
        let empirical = (2..40)
            .take_while(|&k| k * m < r.len() && r[k * m] > 1e-11 * r[0])
            .last()
            .map(|k| (r[k * m] / r[(k - 1) * m]).powf(1.0 / m as f64));
        let period = hybrid_iteration_matrix(&a, &richardson(s.n), &o, m)?;
        let radius = spectral_radius(&period, 400)?.powf(1.0 / m as f64);
        let bound = rate_bound(m, &p);
        let e = empirical.map(|v| format!("{v:.6}")).unwrap_or_default();
        writeln!(w, "{m},{e},{radius:.6},{bound:.6}")?;
        println!(
            "empirical: M = {m}: observed {}, period radius {radius:.6}, bound {bound:.6}",
            if e.is_empty() { "-" } else { &e }
        );
    }
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}

fn analyze_model_error(s: &ModelErrorSection, dir: &Path) -> Result<()> {
    let g = StructuredGrid::<f64>::new_1d(s.n)?;
    let c: Box<dyn Corrector<f64>> = match &s.model {
        Some(path) => {
            let m = std::sync::Arc::new(MionetModel::<f64>::load(path)?);
            let ones = vec![1.0; m.k_sensors().len()];
            Box::new(MionetCorrector::new(m, g, &ones, PaddingMode::Replicate)?)
        }
        None => Box::new(SpectralOracle::new(g, s.n0, OracleMode::DiscreteExact)?),
    };
    let spec = model_error_spectrum(c.as_ref(), &g, s.n0)?;
    let path = dir.join("model_error.csv");
    let mut w = create(&path)?;
    spec.write_csv(&mut w)?;
    w.flush()?;
    println!("model error: eps = {:.4e} (modes <= {}), R = {:.4e}", spec.eps, spec.n0, spec.r);
    println!("model error: eps < R/10 is {}", spec.eps < spec.r / 10.0);
    println!("wrote {}", path.display());
    Ok(())
}

pub fn analyze(cfg: &AnalyzeConfig) -> Result<bool> {
    let nothing =
        cfg.rate.is_none() && cfg.gs.is_none() && cfg.heatmap.is_none() && cfg.empirical.is_none() && cfg.model_error.is_none();
    let (rate, gs) = if nothing {
        (Some(RateSection::default()), Some(GsSection::default()))
    } else {
        (cfg.rate.clone(), cfg.gs.clone())
    };
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    if let Some(s) = &rate {
        analyze_rate(s, &cfg.out_dir)?;
    }
    if let Some(s) = &gs {
        analyze_gs(s, &cfg.out_dir)?;
    }
    if let Some(s) = &cfg.heatmap {
        analyze_heatmap(s, &cfg.out_dir)?;
    }
    if let Some(s) = &cfg.empirical {
        analyze_empirical(s, &cfg.out_dir)?;
    }
    if let Some(s) = &cfg.model_error {
        analyze_model_error(s, &cfg.out_dir)?;
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use himnet::mionet::sensor_lattice;

    #[test]
    fn arch_follows_dataset_sizes() {
        let d = Dataset::<f64> {
            dim: 1,
            k_sensors: sensor_lattice(1, 7),
            f_sensors: sensor_lattice(1, 7),
            query_points: sensor_lattice(1, 5),
            k: vec![],
            f: vec![],
            u: vec![],
            metadata: Value::Null,
        };
        let a = ArchConfig { width: Some(9), depth: 2, activation: Activation::Tanh }.build(&d);
        assert_eq!(a.branch_k, vec![7, 9, 9]);
        assert_eq!(a.branch_f, vec![7, 9]);
        assert_eq!(a.trunk, vec![1, 9, 9]);
    }

    #[test]
    fn sensors_override_sets_query_nodes() {
        let c: GenDataConfig = toml::from_str("out = \"x\"\nsensors = 20\nfine_n = 127").unwrap();
        let d = c.dataset_config().unwrap();
        assert_eq!((d.sensors, d.query_n, d.fine_n), (20, 18, 127));
    }
}
