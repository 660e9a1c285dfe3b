//! End-to-end orchestration: configuration, seed derivation, the two-phase
//! estimation run, the known-set fast path, and report I/O.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::interval::IntervalUnion;
use crate::likelihood::{self, ResampleStream};
use crate::model::{sample_truncated, Dataset, FeatureDistSpec, TruncatedModel};
use crate::psgd::{self, LikelihoodOracle, TraceRow};
use crate::set_learner;
use crate::warm_start::{self, PlugInConstants, ProjectionBall};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    UnknownSet,
    KnownSet,
    GenerateOnly,
}

/// Generative model description for synthetic runs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelSpec {
    pub w_star: Vec<f64>,
    pub survival_set: IntervalUnion,
    pub features: FeatureDistSpec,
}

impl ModelSpec {
    pub fn build<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<TruncatedModel> {
        TruncatedModel::new(
            self.w_star.clone(),
            self.survival_set.clone(),
            self.features.clone(),
            rng,
        )
    }
}

/// Optional replacements for quantities the method otherwise estimates.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub sigma: Option<f64>,
    pub beta: Option<f64>,
    pub rho_sq: Option<f64>,
    pub ball_radius: Option<f64>,
    pub window: Option<f64>,
    pub kappa: Option<f64>,
}

fn default_k() -> usize {
    2
}
fn default_eps() -> f64 {
    0.05
}
fn default_zeta() -> f64 {
    0.2
}
fn default_delta() -> f64 {
    0.1
}
fn default_t() -> usize {
    200_000
}
fn default_runs() -> usize {
    9
}
fn default_n() -> usize {
    100_000
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    /// Synthetic model to draw data from (exclusive with `dataset`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    /// CSV dataset to estimate from (exclusive with `model`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Survival set for known-set runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_set: Option<IntervalUnion>,
    /// Samples to generate when a model is given.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Assumed number of survival-set pieces.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Set-learning accuracy.
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Target estimate accuracy; also the aggregation radius scale.
    #[serde(default = "default_zeta")]
    pub zeta_target: f64,
    /// Confidence parameter (echoed; K defaults already assume 0.1).
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// SGD steps per run.
    #[serde(default = "default_t", rename = "T")]
    pub t_steps: usize,
    /// Number of independent SGD runs to aggregate.
    #[serde(default = "default_runs", rename = "K")]
    pub k_runs: usize,
    pub seed: u64,
    #[serde(default)]
    pub overrides: Overrides,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(Error::Config(format!("eps must be in (0, 1/2), got {}", self.eps)));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::Config(format!("delta must be in (0, 1/2), got {}", self.delta)));
        }
        if !(self.zeta_target > 0.0) {
            return Err(Error::Config("zeta_target must be positive".into()));
        }
        if self.k == 0 || self.t_steps == 0 || self.k_runs == 0 || self.n == 0 {
            return Err(Error::Config("k, T, K, n must all be >= 1".into()));
        }
        match (self.model.is_some(), self.dataset.is_some()) {
            (false, false) => {
                return Err(Error::Config("either `model` or `dataset` is required".into()))
            }
            (true, true) => {
                return Err(Error::Config("`model` and `dataset` are mutually exclusive".into()))
            }
            _ => {}
        }
        if self.mode == Mode::GenerateOnly && self.model.is_none() {
            return Err(Error::Config("generate_only requires a `model`".into()));
        }
        if self.mode == Mode::KnownSet {
            match &self.known_set {
                None => {
                    return Err(Error::Config("known_set mode requires `known_set`".into()))
                }
                Some(s) if s.is_empty() => return Err(Error::EmptySurvivalSet),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Per-stage RNG derived from the master seed by hashing a stage label, so
/// adding or reordering stages never perturbs the streams of existing ones.
pub fn stage_rng(master_seed: u64, label: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest[..32]);
    ChaCha8Rng::from_seed(seed)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Diagnostics {
    pub alpha_hat: f64,
    pub plug_in: PlugInConstants,
    pub ball_radius: f64,
    pub window: f64,
    pub kappa_hat: f64,
    pub kappa_floored: bool,
    pub grad_norm_final: f64,
    pub low_confidence: bool,
    /// Smallest eigenvalue of the empirical feature second moment; values
    /// near zero mean some direction of w is unidentifiable from this data.
    pub min_design_eigenvalue: f64,
    pub assumption_violation: bool,
    pub skipped_steps: usize,
    /// Mass the standard Gaussian puts on learned-vs-true set disagreement,
    /// averaged over observed features (synthetic runs only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symdiff_mass: Option<f64>,
    pub timings_ms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EstimateReport {
    pub config: RunConfig,
    pub seed: u64,
    pub w_hat_warm: Vec<f64>,
    pub learned_set: IntervalUnion,
    pub psgd_runs: Vec<Vec<f64>>,
    pub w_final: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl EstimateReport {
    /// Copy with timing fields cleared, for byte-level reproducibility checks.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.diagnostics.timings_ms = BTreeMap::new();
        r
    }
}

pub fn save_report(report: &EstimateReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<EstimateReport> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load_csv(path)
}

/// Produce the dataset a run will operate on: load it when a path is given,
/// otherwise generate from the model spec under the "generate" stage stream.
pub fn obtain_dataset(config: &RunConfig) -> Result<Dataset> {
    if let Some(path) = &config.dataset {
        return load_dataset(path).map_err(|e| e.in_stage("load-dataset"));
    }
    let spec = config
        .model
        .as_ref()
        .expect("validate() guarantees a model when no dataset is given");
    let mut rng = stage_rng(config.seed, "generate");
    let model = spec.build(&mut rng).map_err(|e| e.in_stage("generate"))?;
    sample_truncated(&model, config.n, &mut rng).map_err(|e| e.in_stage("generate"))
}

/// How many dataset rows the Hessian-based curvature probe looks at; the
/// full dataset would make that stage dominate the run for large n.
const KAPPA_SUBSAMPLE: usize = 20_000;

const KAPPA_PROBES: usize = 20;

/// Default ball-radius multiplier on (sigma + beta) / (rho^2 alpha). The
/// theory's constant is pessimistic; this keeps the ball small enough that
/// the curvature floor inside it stays useful.
const DEFAULT_BALL_SCALE: f64 = 0.5;

pub struct TraceSink {
    pub dir: PathBuf,
}

impl TraceSink {
    fn write_run(&self, run: usize, rows: &[TraceRow]) -> Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let mut w = csv::Writer::from_path(self.dir.join(format!("psgd_run_{run}.csv")))?;
        w.write_record(["t", "eta", "grad_norm", "dist_to_center"])?;
        for r in rows {
            w.write_record([
                r.t.to_string(),
                format!("{}", r.eta),
                format!("{}", r.grad_norm),
                format!("{}", r.dist_to_center),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Tidy metrics for downstream plotting: one row per (quantity, value, stage).
pub fn write_metrics(report: &EstimateReport, path: &Path) -> Result<()> {
    let d = &report.diagnostics;
    let mut rows: Vec<(String, f64, &str)> = vec![
        ("alpha_hat".into(), d.alpha_hat, "alpha"),
        ("sigma".into(), d.plug_in.sigma, "constants"),
        ("beta".into(), d.plug_in.beta, "constants"),
        ("rho_sq".into(), d.plug_in.rho_sq, "constants"),
        ("ball_radius".into(), d.ball_radius, "constants"),
        ("min_design_eigenvalue".into(), d.min_design_eigenvalue, "warm_start"),
        ("window".into(), d.window, "phase1"),
        ("learned_pieces".into(), report.learned_set.piece_count() as f64, "phase1"),
        ("kappa_hat".into(), d.kappa_hat, "kappa"),
        ("skipped_steps".into(), d.skipped_steps as f64, "psgd"),
        ("grad_norm_final".into(), d.grad_norm_final, "aggregate"),
    ];
    if let Some(m) = d.symdiff_mass {
        rows.push(("symdiff_mass".into(), m, "phase1"));
    }
    for (label, ms) in &d.timings_ms {
        rows.push((format!("time_ms_{label}"), *ms, "timing"));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["quantity", "value", "stage"])?;
    for (q, v, s) in rows {
        w.write_record([q, format!("{v}"), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub struct RunOptions {
    pub trace: Option<TraceSink>,
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { trace: None, workers: 1 }
    }
}

fn mean_symdiff_mass(spec: &ModelSpec, learned: &IntervalUnion, data: &Dataset) -> f64 {
    let w = DVector::from_vec(spec.w_star.clone());
    let sym = learned.symdiff(&spec.survival_set);
    let mut acc = 0.0;
    for x in data.xs() {
        acc += sym.gaussian_mass(w.dot(x));
    }
    acc / data.len() as f64
}

/// Full two-phase run. When `known` is provided, Phase I is skipped and the
/// given set is used verbatim.
fn run_impl(
    config: &RunConfig,
    known: Option<&IntervalUnion>,
    options: &RunOptions,
) -> Result<EstimateReport> {
    config.validate()?;
    let mut timings = BTreeMap::new();
    let clock = Instant::now();
    let mark = |timings: &mut BTreeMap<String, f64>, label: &str, t0: Instant| {
        timings.insert(label.to_string(), t0.elapsed().as_secs_f64() * 1e3);
    };

    let data = obtain_dataset(config)?;
    mark(&mut timings, "data", clock);

    // Survival mass lower bound: override, else synthetic ground truth,
    // else a conservative default for file-backed data.
    let t0 = Instant::now();
    let alpha_hat = match (config.overrides.alpha, &config.model) {
        (Some(a), _) => a,
        (None, Some(spec)) => {
            let mut rng = stage_rng(config.seed, "alpha");
            let model = spec.build(&mut rng).map_err(|e| e.in_stage("alpha"))?;
            model.estimate_alpha(20_000, &mut rng).0
        }
        (None, None) => 0.1,
    };
    mark(&mut timings, "alpha", t0);

    // Warm start. A singular design means some feature direction was never
    // observed; fall back to the pseudo-inverse and flag the violation.
    let t0 = Instant::now();
    let design = warm_start::second_moment(&data);
    let (min_design_eig, _) = warm_start::eigen_range(&design);
    let (w_warm, mut assumption_violation) = match warm_start::ols_estimate(&data) {
        Ok(w) => (w, false),
        Err(Error::SingularDesign { .. }) => (warm_start::ols_pseudo_inverse(&data), true),
        Err(e) => return Err(e.in_stage("warm-start")),
    };
    if min_design_eig < 1e-6 {
        assumption_violation = true;
    }
    mark(&mut timings, "warm_start", t0);

    let t0 = Instant::now();
    let mut constants_rng = stage_rng(config.seed, "constants");
    let mut plug_in = PlugInConstants::estimate(&data, alpha_hat, &mut constants_rng);
    // With a singular design the smallest eigenvalue is ~0 and the radius
    // formula explodes; unidentifiable directions cannot be constrained by
    // any radius, so size the ball by the smallest identifiable eigenvalue.
    {
        let eigs = design.symmetric_eigenvalues();
        let max_eig = eigs.iter().cloned().fold(0.0f64, f64::max);
        let cutoff = 1e-6 * max_eig.max(1e-12);
        if plug_in.rho_sq < cutoff {
            plug_in.rho_sq = eigs
                .iter()
                .cloned()
                .filter(|&l| l >= cutoff)
                .fold(f64::INFINITY, f64::min)
                .min(max_eig);
        }
    }
    if let Some(v) = config.overrides.sigma {
        plug_in.sigma = v;
    }
    if let Some(v) = config.overrides.beta {
        plug_in.beta = v;
    }
    if let Some(v) = config.overrides.rho_sq {
        plug_in.rho_sq = v;
    }
    let radius = config
        .overrides
        .ball_radius
        .unwrap_or_else(|| plug_in.ball_radius(DEFAULT_BALL_SCALE));
    let ball = ProjectionBall::new(w_warm.clone(), radius).map_err(|e| e.in_stage("ball"))?;
    mark(&mut timings, "constants", t0);

    // Phase I.
    let t0 = Instant::now();
    let window = config
        .overrides
        .window
        .unwrap_or_else(|| set_learner::default_window(data.ys()));
    let learned_set = match known {
        Some(s) => s.clip(window).map_err(|e| e.in_stage("set-learning"))?,
        None => {
            let mut rng = stage_rng(config.seed, "phase1");
            set_learner::learn_survival_set(
                &data,
                &w_warm,
                config.k,
                config.eps,
                Some(window),
                &mut rng,
            )
            .map_err(|e| e.in_stage("set-learning"))?
        }
    };
    if learned_set.is_empty() {
        return Err(Error::EmptySurvivalSet.in_stage("set-learning"));
    }
    mark(&mut timings, "phase1", t0);

    // Curvature estimate on a subsample.
    let t0 = Instant::now();
    let (kappa_hat, kappa_floored) = match config.overrides.kappa {
        Some(kappa) => (kappa, false),
        None => {
            let sub = if data.len() > KAPPA_SUBSAMPLE {
                let xs = data.xs()[..KAPPA_SUBSAMPLE].to_vec();
                let ys = data.ys()[..KAPPA_SUBSAMPLE].to_vec();
                Dataset::new(xs, ys)?
            } else {
                data.clone()
            };
            let mut rng = stage_rng(config.seed, "kappa");
            psgd::estimate_kappa(&w_warm, &ball, &learned_set, &sub, KAPPA_PROBES, &mut rng)
                .map_err(|e| e.in_stage("kappa"))?
        }
    };
    mark(&mut timings, "kappa", t0);

    // Phase II: K independent SGD runs over bootstrap resamples of the data.
    let t0 = Instant::now();
    let run_one = |i: usize| -> Result<(DVector<f64>, usize, Option<Vec<TraceRow>>)> {
        let mut rng = stage_rng(config.seed, &format!("psgd:{i}"));
        let source = ResampleStream { data: &data };
        let mut oracle = LikelihoodOracle {
            set: &learned_set,
            zeta: config.zeta_target,
            source: &source,
        };
        let mut trace_rows = options.trace.as_ref().map(|_| Vec::new());
        let out = psgd::run_psgd(
            &ball.project(&w_warm),
            &ball,
            config.t_steps,
            kappa_hat,
            &mut oracle,
            &mut rng,
            trace_rows.as_mut(),
        )
        .map_err(|e| e.in_stage("psgd"))?;
        Ok((out.average, out.skipped, trace_rows))
    };
    let results: Vec<Result<(DVector<f64>, usize, Option<Vec<TraceRow>>)>> =
        if options.workers > 1 {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(options.workers)
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
            pool.install(|| (0..config.k_runs).into_par_iter().map(run_one).collect())
        } else {
            (0..config.k_runs).map(run_one).collect()
        };
    let mut runs = Vec::with_capacity(config.k_runs);
    let mut skipped_steps = 0usize;
    for (i, res) in results.into_iter().enumerate() {
        let (avg, skipped, trace_rows) = res?;
        if let (Some(sink), Some(rows)) = (&options.trace, trace_rows) {
            sink.write_run(i, &rows)?;
        }
        skipped_steps += skipped;
        runs.push(avg);
    }
    mark(&mut timings, "psgd", t0);

    let t0 = Instant::now();
    let agg = psgd::aggregate(&runs, config.zeta_target).map_err(|e| e.in_stage("aggregate"))?;
    let grad_norm_final = likelihood::population_gradient(&agg.w, &learned_set, &data)
        .map(|g| g.norm())
        .unwrap_or(f64::NAN);
    let symdiff_mass = config
        .model
        .as_ref()
        .map(|spec| mean_symdiff_mass(spec, &learned_set, &data));
    mark(&mut timings, "aggregate", t0);
    timings.insert("total".to_string(), clock.elapsed().as_secs_f64() * 1e3);

    Ok(EstimateReport {
        config: config.clone(),
        seed: config.seed,
        w_hat_warm: w_warm.iter().copied().collect(),
        learned_set,
        psgd_runs: runs.iter().map(|r| r.iter().copied().collect()).collect(),
        w_final: agg.w.iter().copied().collect(),
        diagnostics: Diagnostics {
            alpha_hat,
            plug_in,
            ball_radius: radius,
            window,
            kappa_hat,
            kappa_floored,
            grad_norm_final,
            low_confidence: agg.low_confidence,
            min_design_eigenvalue: min_design_eig,
            assumption_violation,
            skipped_steps,
            symdiff_mass,
            timings_ms: timings,
        },
    })
}

pub fn run_unknown_set(config: &RunConfig, options: &RunOptions) -> Result<EstimateReport> {
    run_impl(config, None, options)
}

pub fn run_known_set(
    config: &RunConfig,
    s_star: &IntervalUnion,
    options: &RunOptions,
) -> Result<EstimateReport> {
    if s_star.is_empty() {
        return Err(Error::EmptySurvivalSet);
    }
    run_impl(config, Some(s_star), options)
}

/// Dispatch on the configured mode. `generate_only` writes no report; the
/// CLI handles its dataset output separately.
pub fn run(config: &RunConfig, options: &RunOptions) -> Result<EstimateReport> {
    match config.mode {
        Mode::UnknownSet => run_unknown_set(config, options),
        Mode::KnownSet => {
            let set = config.known_set.clone().ok_or(Error::EmptySurvivalSet)?;
            run_known_set(config, &set, options)
        }
        Mode::GenerateOnly => Err(Error::Config(
            "generate_only mode has no estimation run; use the generate command".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use tempfile::tempdir;

    fn small_config(seed: u64) -> RunConfig {
        RunConfig {
            mode: Mode::UnknownSet,
            model: Some(ModelSpec {
                w_star: fixtures::desk_w_star().iter().copied().collect(),
                survival_set: fixtures::desk_survival_set(),
                features: FeatureDistSpec::standard_gaussian(5),
            }),
            dataset: None,
            known_set: None,
            n: 5_000,
            k: 2,
            eps: 0.1,
            zeta_target: 0.3,
            delta: 0.1,
            t_steps: 5_000,
            k_runs: 3,
            seed,
            overrides: Overrides::default(),
        }
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let text = r#"{
            "mode": "unknown_set",
            "model": {
                "w_star": [1.0, 0.0],
                "survival_set": [[-1.0, 1.0]],
                "features": {"kind": "uniform_ball", "radius": 1.0, "dim": 2}
            },
            "seed": 7
        }"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.t_steps, 200_000);
        assert_eq!(cfg.k_runs, 9);
        assert_eq!(cfg.k, 2);
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn validate_rejects_inconsistent_modes() {
        let mut cfg = small_config(1);
        cfg.dataset = Some(PathBuf::from("x.csv"));
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = small_config(1);
        cfg.mode = Mode::KnownSet;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = small_config(1);
        cfg.eps = 0.7;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn report_round_trips_and_reproduces() {
        let cfg = small_config(5);
        let r1 = run_unknown_set(&cfg, &RunOptions::default()).unwrap();
        let r2 = run_unknown_set(&cfg, &RunOptions::default()).unwrap();
        let s1 = serde_json::to_string(&r1.without_timings()).unwrap();
        let s2 = serde_json::to_string(&r2.without_timings()).unwrap();
        assert_eq!(s1, s2);

        let dir = tempdir().unwrap();
        let path = dir.path().join("report.json");
        save_report(&r1, &path).unwrap();
        let back = load_report(&path).unwrap();
        assert_eq!(back, r1);
    }

    #[test]
    fn staged_run_matches_fused_run() {
        let mut cfg = small_config(6);
        // Pin alpha so the fused run's synthetic estimate is not consulted.
        cfg.overrides.alpha = Some(0.38);
        let fused = run_unknown_set(&cfg, &RunOptions::default()).unwrap();

        let dir = tempdir().unwrap();
        let csv_path = dir.path().join("data.csv");
        let data = obtain_dataset(&cfg).unwrap();
        data.save_csv(&csv_path).unwrap();

        let mut staged_cfg = cfg.clone();
        staged_cfg.model = None;
        staged_cfg.dataset = Some(csv_path);
        let staged = run_unknown_set(&staged_cfg, &RunOptions::default()).unwrap();

        assert_eq!(staged.w_final, fused.w_final);
        assert_eq!(staged.learned_set, fused.learned_set);
        assert_eq!(staged.w_hat_warm, fused.w_hat_warm);
    }

    #[test]
    fn parallel_runs_match_sequential() {
        let cfg = small_config(8);
        let seq = run_unknown_set(&cfg, &RunOptions::default()).unwrap();
        let par = run_unknown_set(&cfg, &RunOptions { trace: None, workers: 3 }).unwrap();
        assert_eq!(seq.w_final, par.w_final);
        assert_eq!(seq.psgd_runs, par.psgd_runs);
    }

    #[test]
    fn known_set_run_uses_given_set() {
        let mut cfg = small_config(9);
        cfg.mode = Mode::KnownSet;
        cfg.known_set = Some(fixtures::desk_survival_set());
        let report = run(&cfg, &RunOptions::default()).unwrap();
        // The given set survives clipping (window exceeds its span).
        assert_eq!(report.learned_set, fixtures::desk_survival_set());
    }

    #[test]
    fn trace_files_written() {
        let dir = tempdir().unwrap();
        let mut cfg = small_config(10);
        cfg.t_steps = 100;
        cfg.k_runs = 2;
        let options = RunOptions {
            trace: Some(TraceSink { dir: dir.path().to_path_buf() }),
            workers: 1,
        };
        let report = run_unknown_set(&cfg, &options).unwrap();
        write_metrics(&report, &dir.path().join("metrics.csv")).unwrap();
        let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(metrics.starts_with("quantity,value,stage"));
        assert!(metrics.contains("kappa_hat"));
        for i in 0..2 {
            let p = dir.path().join(format!("psgd_run_{i}.csv"));
            let text = std::fs::read_to_string(p).unwrap();
            assert!(text.starts_with("t,eta,grad_norm,dist_to_center"));
            assert_eq!(text.lines().count(), 101);
        }
    }

    #[test]
    fn stage_rng_streams_are_label_separated() {
        use rand::RngCore;
        let mut a = stage_rng(3, "phase1");
        let mut b = stage_rng(3, "psgd:0");
        let mut a2 = stage_rng(3, "phase1");
        assert_eq!(a.next_u64(), a2.next_u64());
        assert_ne!(a.next_u64(), b.next_u64());
    }
}
