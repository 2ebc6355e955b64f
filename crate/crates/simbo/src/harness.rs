//! Experiment runner: declarative configs, paired runs of the three
//! algorithms on identical problem instances, per-step traces, and CSV
//! emission.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imc::{synthesize, SynthesisConfig, TargetPattern};
use crate::ogd::{contraction_factor, ogd_step, OgdConfig};
use crate::poly;
use crate::problems::{
    random_b_bar, InternalModel, OnlineProblem, QuadraticProblem, SignalKind, TvHessianProblem,
};
use crate::supervisor::{Phase, Supervisor, SupervisorConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Algorithm {
    Ogd,
    ControlBased,
    Simbo,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Ogd => "ogd",
            Algorithm::ControlBased => "control_based",
            Algorithm::Simbo => "simbo",
        }
    }
}

/// One row of an experiment trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub algorithm: Algorithm,
    pub tracking_error: f64,
    pub residual: Option<f64>,
    pub phase: Option<Phase>,
    pub event: Option<String>,
}

/// Signal description before the seeded coefficient vectors are drawn.
#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalSpec {
    Sine {
        #[serde(default = "default_omega0")]
        omega0: f64,
    },
    Ramp,
    SineRamp {
        #[serde(default = "default_omega0")]
        omega0: f64,
    },
    SineSquared {
        #[serde(default = "default_omega1")]
        omega1: f64,
    },
    Constant,
    Switch {
        first: Box<SignalSpec>,
        second: Box<SignalSpec>,
        k_switch: usize,
    },
}

fn default_omega0() -> f64 {
    1.0
}

fn default_omega1() -> f64 {
    10.0
}

impl SignalSpec {
    /// Draw the seeded coefficient vectors and produce the concrete signal.
    pub fn realize(&self, n: usize, seed: u64) -> SignalKind {
        match self {
            SignalSpec::Sine { omega0 } => SignalKind::Sine { omega0: *omega0 },
            SignalSpec::Ramp => SignalKind::Ramp { b_bar: random_b_bar(n, seed) },
            SignalSpec::SineRamp { omega0 } => {
                SignalKind::SineRamp { omega0: *omega0, b_bar: random_b_bar(n, seed) }
            }
            SignalSpec::SineSquared { omega1 } => SignalKind::SineSquared { omega1: *omega1 },
            SignalSpec::Constant => SignalKind::Constant { b_bar: random_b_bar(n, seed) },
            SignalSpec::Switch { first, second, k_switch } => SignalKind::Switch {
                first: Box::new(first.realize(n, seed)),
                second: Box::new(second.realize(n, seed)),
                k_switch: *k_switch,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    Quadratic {
        n: usize,
        lambda_min: f64,
        lambda_max: f64,
        ts: f64,
        signal: SignalSpec,
    },
    /// Sinusoidally perturbed Hessian with a constant linear term;
    /// eigenvalues stay in [1, 5] by construction.
    TvHessian {
        n: usize,
        ts: f64,
        #[serde(default = "default_omega0")]
        omega0: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
pub struct AlgorithmSelection {
    #[serde(default = "default_true")]
    pub ogd: bool,
    #[serde(default = "default_true")]
    pub control_based: bool,
    #[serde(default = "default_true")]
    pub simbo: bool,
}

fn default_true() -> bool {
    true
}

impl Default for AlgorithmSelection {
    fn default() -> Self {
        Self { ogd: true, control_based: true, simbo: true }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OgdSection {
    /// Step size; defaults to 2 / (lambda_min + lambda_max).
    pub h: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RlsSection {
    /// Model order; defaults to the true order of the configured signal.
    pub m: Option<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_alpha() -> f64 {
    0.95
}

fn default_beta() -> f64 {
    1e8
}

impl Default for RlsSection {
    fn default() -> Self {
        Self { m: None, alpha: default_alpha(), beta: default_beta() }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ImcSection {
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_stability_margin")]
    pub stability_margin: f64,
    /// Target-radius retry schedule; defaults to 0.0, 0.1, ..., 0.9.
    pub target_radius_schedule: Option<Vec<f64>>,
    #[serde(default = "default_pattern")]
    pub target_pattern: TargetPatternSpec,
}

fn default_grid_points() -> usize {
    101
}

fn default_stability_margin() -> f64 {
    0.02
}

fn default_pattern() -> TargetPatternSpec {
    TargetPatternSpec::ConjugatePairs
}

impl Default for ImcSection {
    fn default() -> Self {
        Self {
            grid_points: default_grid_points(),
            stability_margin: default_stability_margin(),
            target_radius_schedule: None,
            target_pattern: default_pattern(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPatternSpec {
    ConjugatePairs,
    RealSpread,
}

impl From<TargetPatternSpec> for TargetPattern {
    fn from(spec: TargetPatternSpec) -> Self {
        match spec {
            TargetPatternSpec::ConjugatePairs => TargetPattern::ConjugatePairs,
            TargetPatternSpec::RealSpread => TargetPattern::RealSpread,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisorSection {
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_change_c")]
    pub change_c: f64,
    #[serde(default = "default_change_floor")]
    pub change_floor: f64,
    /// Defaults to 2m + 5.
    pub burn_in: Option<usize>,
}

fn default_theta() -> f64 {
    1e-6
}

fn default_patience() -> usize {
    60
}

fn default_change_c() -> f64 {
    100.0
}

fn default_change_floor() -> f64 {
    1e-6
}

impl Default for SupervisorSection {
    fn default() -> Self {
        Self {
            theta: default_theta(),
            patience: default_patience(),
            change_c: default_change_c(),
            change_floor: default_change_floor(),
            burn_in: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub horizon: usize,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub algorithms: AlgorithmSelection,
    #[serde(default)]
    pub ogd: OgdSection,
    #[serde(default)]
    pub rls: RlsSection,
    #[serde(default)]
    pub imc: ImcSection,
    #[serde(default)]
    pub supervisor: SupervisorSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        Ok(())
    }

    fn model_order(&self) -> usize {
        if let Some(m) = self.rls.m {
            return m;
        }
        match &self.problem {
            ProblemSpec::Quadratic { signal, .. } => signal.realize(1, self.seed).model_order(),
            // constant term plus the fundamental harmonic of the Hessian sweep
            ProblemSpec::TvHessian { .. } => 3,
        }
    }

    fn synthesis_config(&self) -> SynthesisConfig {
        let defaults = SynthesisConfig::default();
        SynthesisConfig {
            grid_points: self.imc.grid_points,
            stability_margin: self.imc.stability_margin,
            radius_schedule: self
                .imc
                .target_radius_schedule
                .clone()
                .unwrap_or(defaults.radius_schedule),
            pattern: self.imc.target_pattern.into(),
        }
    }

    fn supervisor_config(&self, lambda_min: f64, lambda_max: f64) -> SupervisorConfig {
        let m = self.model_order();
        let mut cfg = SupervisorConfig::new(m, lambda_min, lambda_max);
        cfg.theta = self.supervisor.theta;
        cfg.patience = self.supervisor.patience;
        cfg.change_c = self.supervisor.change_c;
        cfg.change_floor = self.supervisor.change_floor;
        cfg.rls_alpha = self.rls.alpha;
        cfg.rls_beta = self.rls.beta;
        if let Some(h) = self.ogd.h {
            cfg.ogd = OgdConfig { h };
        }
        cfg.burn_in = self.supervisor.burn_in.unwrap_or_else(|| {
            let rho = contraction_factor(cfg.ogd.h, lambda_min, lambda_max)
                .unwrap_or(2.0 / 3.0);
            crate::supervisor::default_burn_in(m, rho)
        });
        cfg.synthesis = self.synthesis_config();
        cfg
    }

    fn build_problem(&self) -> Result<Box<dyn OnlineProblem>> {
        match &self.problem {
            ProblemSpec::Quadratic { n, lambda_min, lambda_max, ts, signal } => {
                let kind = signal.realize(*n, self.seed);
                Ok(Box::new(QuadraticProblem::randomized(
                    *n,
                    *lambda_min,
                    *lambda_max,
                    self.seed,
                    kind,
                    *ts,
                )?))
            }
            ProblemSpec::TvHessian { n, ts, omega0 } => {
                Ok(Box::new(TvHessianProblem::randomized(*n, self.seed, *omega0, *ts)?))
            }
        }
    }

    /// Internal model the fixed control-based baseline is built from: the
    /// true signal denominator, the first segment's model for a switching
    /// signal, and the hand-tuned constant-plus-fundamental model for the
    /// time-varying Hessian.
    fn baseline_model(&self) -> Result<InternalModel> {
        match &self.problem {
            ProblemSpec::Quadratic { n, ts, signal, .. } => {
                let concrete = match signal {
                    SignalSpec::Switch { first, .. } => first.realize(*n, self.seed),
                    other => other.realize(*n, self.seed),
                };
                concrete.true_denominator(*ts)
            }
            ProblemSpec::TvHessian { ts, omega0, .. } => InternalModel::new(poly::monic_mul(
                &[-1.0],
                &[1.0, -2.0 * (omega0 * ts).cos()],
            )),
        }
    }
}

/// Run every selected algorithm on the identical problem instance and
/// collect one record per (k, algorithm).
///
/// ```
/// let mut cfg = simbo::preset("sine").unwrap();
/// cfg.horizon = 40;
/// let records = simbo::run_experiment(&cfg).unwrap();
/// assert_eq!(records.len(), 3 * 40);
/// let simbo_errs: Vec<f64> = records
///     .iter()
///     .filter(|r| r.algorithm == simbo::Algorithm::Simbo)
///     .map(|r| r.tracking_error)
///     .collect();
/// assert_eq!(simbo_errs.len(), 40);
/// ```
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<TraceRecord>> {
    config.validate()?;
    let problem = config.build_problem()?;
    let n = problem.dim();
    let (lambda_min, lambda_max) = problem.lambda_bounds();
    let horizon = config.horizon;
    let h = config.ogd.h.unwrap_or_else(|| OgdConfig::optimal(lambda_min, lambda_max).h);
    OgdConfig { h }.validate(lambda_max)?;

    let minimizers: Vec<DVector<f64>> = (0..horizon).map(|k| problem.minimizer(k)).collect();
    let mut records = Vec::new();

    if config.algorithms.ogd {
        let mut x = DVector::zeros(n);
        for (k, xstar) in minimizers.iter().enumerate() {
            records.push(TraceRecord {
                k,
                algorithm: Algorithm::Ogd,
                tracking_error: (&x - xstar).norm(),
                residual: None,
                phase: None,
                event: None,
            });
            x = ogd_step(&x, &problem.gradient(&x, k), h);
        }
    }

    if config.algorithms.control_based {
        let model = config.baseline_model()?;
        let mut ctrl =
            synthesize(&model, lambda_min, lambda_max, n, &config.synthesis_config())?;
        let mut x = DVector::zeros(n);
        for (k, xstar) in minimizers.iter().enumerate() {
            records.push(TraceRecord {
                k,
                algorithm: Algorithm::ControlBased,
                tracking_error: (&x - xstar).norm(),
                residual: None,
                phase: None,
                event: None,
            });
            x = ctrl.step(&problem.gradient(&x, k));
        }
    }

    if config.algorithms.simbo {
        let mut sup =
            Supervisor::new(config.supervisor_config(lambda_min, lambda_max), n, lambda_min, lambda_max)?;
        let mut pending_residual = None;
        let mut pending_events: Vec<String> = Vec::new();
        for (k, xstar) in minimizers.iter().enumerate() {
            let event = if pending_events.is_empty() {
                None
            } else {
                Some(pending_events.join(";"))
            };
            records.push(TraceRecord {
                k,
                algorithm: Algorithm::Simbo,
                tracking_error: (sup.decision() - xstar).norm(),
                residual: pending_residual,
                phase: Some(sup.phase()),
                event,
            });
            let out = sup.step(|kk, x| problem.gradient(x, kk));
            pending_residual = out.residual;
            pending_events = out.events.iter().map(|e| e.name().to_string()).collect();
        }
    }

    Ok(records)
}

/// Maximum tracking error over the final 4/5 of the run.
pub fn asymptotic_error(records: &[TraceRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("empty trace".into()));
    }
    let k_total = records.iter().map(|r| r.k).max().unwrap() + 1;
    let cutoff = k_total as f64 / 5.0;
    Ok(records
        .iter()
        .filter(|r| r.k as f64 >= cutoff)
        .map(|r| r.tracking_error)
        .fold(0.0, f64::max))
}

/// Asymptotic error per algorithm present in a combined trace.
pub fn asymptotic_errors(records: &[TraceRecord]) -> Vec<(Algorithm, f64)> {
    let mut out = Vec::new();
    for algo in [Algorithm::Ogd, Algorithm::ControlBased, Algorithm::Simbo] {
        let subset: Vec<TraceRecord> =
            records.iter().filter(|r| r.algorithm == algo).cloned().collect();
        if !subset.is_empty() {
            out.push((algo, asymptotic_error(&subset).expect("non-empty subset")));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
    /// Line-delimited key=value records.
    Records,
}

fn format_float(v: f64) -> String {
    format!("{v:.17e}")
}

fn render(records: &[TraceRecord], format: EmitFormat) -> String {
    let mut out = String::new();
    match format {
        EmitFormat::Csv => {
            out.push_str("k,algorithm,tracking_error,residual,phase,event\n");
            for r in records {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.k,
                    r.algorithm.name(),
                    format_float(r.tracking_error),
                    r.residual.map(format_float).unwrap_or_default(),
                    r.phase.map(|p| p.name().to_string()).unwrap_or_default(),
                    r.event.clone().unwrap_or_default(),
                );
            }
        }
        EmitFormat::Records => {
            for r in records {
                let _ = writeln!(
                    out,
                    "k={} algorithm={} tracking_error={} residual={} phase={} event={}",
                    r.k,
                    r.algorithm.name(),
                    format_float(r.tracking_error),
                    r.residual.map(format_float).unwrap_or_default(),
                    r.phase.map(|p| p.name().to_string()).unwrap_or_default(),
                    r.event.clone().unwrap_or_default(),
                );
            }
        }
    }
    out
}

/// Write the trace to disk; output is a pure function of the records.
pub fn emit(records: &[TraceRecord], format: EmitFormat, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    file.write_all(render(records, format).as_bytes())?;
    file.flush()?;
    Ok(())
}

fn quadratic_preset(name: &str, signal: SignalSpec, theta: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        name: name.to_string(),
        seed: 17,
        horizon: 1000,
        problem: ProblemSpec::Quadratic {
            n: 15,
            lambda_min: 1.0,
            lambda_max: 5.0,
            ts: 0.1,
            signal,
        },
        algorithms: AlgorithmSelection::default(),
        ogd: OgdSection::default(),
        rls: RlsSection::default(),
        imc: ImcSection::default(),
        supervisor: SupervisorSection::default(),
    };
    cfg.supervisor.theta = theta;
    cfg
}

/// The named experiment presets of the suite. Exit thresholds are tuned per
/// signal: the switch must happen early enough that its transient clears the
/// measurement window, yet late enough that the deployed model is accurate.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let cfg = match name {
        "sine" => quadratic_preset("sine", SignalSpec::Sine { omega0: 1.0 }, 4e-10),
        "ramp" => quadratic_preset("ramp", SignalSpec::Ramp, 1e-8),
        "sine_ramp" => {
            let mut cfg =
                quadratic_preset("sine_ramp", SignalSpec::SineRamp { omega0: 1.0 }, 1e-6);
            // the growing ramp amplifies model mismatch ~1.8e3 for this
            // order-4 family; sparse recomputes let the loop transient decay
            // between refinements instead of limit-cycling
            cfg.supervisor.patience = 150;
            cfg
        }
        "sine_squared" => {
            let mut cfg = quadratic_preset(
                "sine_squared",
                SignalSpec::SineSquared { omega1: 10.0 },
                4e-9,
            );
            // the deployed model already sits at its accuracy floor;
            // recompute swaps would only re-excite the loop
            cfg.supervisor.patience = 1_000_000;
            cfg
        }
        "switch_ramp_sine" => {
            let mut cfg = quadratic_preset(
                "switch_ramp_sine",
                SignalSpec::Switch {
                    first: Box::new(SignalSpec::Ramp),
                    second: Box::new(SignalSpec::Sine { omega0: 1.0 }),
                    k_switch: 1000,
                },
                1e-9,
            );
            cfg.seed = 3;
            cfg.horizon = 2000;
            cfg
        }
        "switch_sine_sine_squared" => {
            let mut cfg = quadratic_preset(
                "switch_sine_sine_squared",
                SignalSpec::Switch {
                    first: Box::new(SignalSpec::Sine { omega0: 1.0 }),
                    second: Box::new(SignalSpec::SineSquared { omega1: 10.0 }),
                    k_switch: 1000,
                },
                1e-8,
            );
            cfg.seed = 3;
            cfg.horizon = 2000;
            cfg
        }
        "tv_hessian" => {
            let mut cfg = ExperimentConfig {
                name: "tv_hessian".to_string(),
                seed: 0,
                horizon: 1000,
                problem: ProblemSpec::TvHessian { n: 15, ts: 0.1, omega0: 1.0 },
                algorithms: AlgorithmSelection::default(),
                ogd: OgdSection::default(),
                rls: RlsSection { m: Some(3), ..Default::default() },
                imc: ImcSection::default(),
                supervisor: SupervisorSection::default(),
            };
            // no finite-order model exists here: the residual floors at the
            // harmonic-distortion level, so the triggers need looser knobs
            cfg.supervisor.theta = 5e-2;
            cfg.supervisor.patience = 50;
            cfg.supervisor.change_floor = 1e-2;
            cfg
        }
        other => return Err(Error::Config(format!("unknown preset '{other}'"))),
    };
    Ok(cfg)
}

/// Named groups of presets.
pub fn suite(name: &str) -> Result<Vec<ExperimentConfig>> {
    let names: Vec<&str> = match name {
        "quadratic" => vec!["sine", "ramp", "sine_ramp", "sine_squared"],
        "switching" => vec!["switch_ramp_sine", "switch_sine_sine_squared"],
        "tv-hessian" | "tv_hessian" => vec!["tv_hessian"],
        "all" => vec![
            "sine",
            "ramp",
            "sine_ramp",
            "sine_squared",
            "switch_ramp_sine",
            "switch_sine_sine_squared",
            "tv_hessian",
        ],
        other => return Err(Error::Config(format!("unknown suite '{other}'"))),
    };
    names.into_iter().map(preset).collect()
}
