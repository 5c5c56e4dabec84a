//! Scenario files: one JSON document naming a model, an initial state and how
//! to run them.
//!
//! ```json
//! {
//!   "kind": "monitoring",
//!   "model": "model.json",
//!   "initial_state": {"signal": {"kind": "gaussian", "mean": 0.0, "sd": 0.25},
//!                     "quantum": [[[0.5,0],[0.5,0]],[[0.5,0],[0.5,0]]]},
//!   "integrator": {"dt": 0.001, "t_final": 1.0, "record_every": 10},
//!   "sampler": {"nu": 1000, "n_traj": 4000, "record_every": 250},
//!   "seed": 7
//! }
//! ```
//!
//! `model` and `initial_state` may be inline objects or paths relative to the
//! scenario file. Everything is parsed and validated before any computation,
//! so a bad configuration fails with a configuration error and writes
//! nothing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::integrator::{
    estimate_generator_norm, evolve, fmt_f64, stability_bound, IntegratorConfig, Observer, OdeState, TimeSeries,
};
use super::io;
use crate::error::{Error, Result};
use crate::generators::{diffusion_apply, lindblad_apply, pauli_apply, LindbladModel, PauliRates};
use crate::hybrid_me::{equivalence_check, hybrid_apply, HybridLindbladModel};
use crate::hybrid_state::{self, make_product, reduce_quantum, ClassicalDensity, DensityMatrix, HybridDensity};
use crate::json;
use crate::linalg::{self, CMatrix};
use crate::measurement::{
    averaged_gaussian_channel, completeness_defect, gaussian_kraus_family, kraus_channel, projective_channel,
    GaussianKrausSpec, KrausFamily,
};
use crate::monitoring::sampler::{
    ensemble_moments, ensemble_summary_csv, pde_moments, sample_ensemble, trajectory_csv, wasserstein1, InitialSignal,
    Moments, SamplerConfig, RNG_ALGORITHM,
};
use crate::monitoring::{monitoring_apply, monitoring_residuals, naive_apply, signal_moments, MonitoringModel};
use crate::random;
use crate::space::{Boundary, ClassicalSpace};

/// Power-iteration steps for the step-size check.
const NORM_ITERATIONS: usize = 40;
/// Largest trace defect and most negative eigenvalue accepted in evolve runs.
pub const TRACE_TOL: f64 = 1e-9;
pub const POSITIVITY_TOL: f64 = -1e-8;
pub const EQUIVALENCE_TOL: f64 = 1e-8;
pub const IDENTITY_TOL: f64 = 1e-11;
pub const DRIFT_TOL: f64 = 1e-4;
pub const MONITORING_POSITIVITY_TOL: f64 = -1e-6;
/// Oracle agreement threshold in standard errors.
pub const ORACLE_SIGMAS: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Classical,
    Quantum,
    Hybrid,
    Monitoring,
    Measure,
    EmbedCheck,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Classical => "classical",
            ScenarioKind::Quantum => "quantum",
            ScenarioKind::Hybrid => "hybrid",
            ScenarioKind::Monitoring => "monitoring",
            ScenarioKind::Measure => "measure",
            ScenarioKind::EmbedCheck => "embed-check",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSettings {
    pub nu: f64,
    /// 0 disables the Monte Carlo comparison.
    #[serde(default)]
    pub n_traj: usize,
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    #[serde(default)]
    pub model: Option<Value>,
    #[serde(default)]
    pub initial_state: Option<Value>,
    #[serde(default)]
    pub integrator: Option<IntegratorConfig>,
    /// Output directory, overridden by the command line.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampler: Option<SamplerSettings>,
    #[serde(default)]
    pub channel: Option<Value>,
    /// Monitoring only: integrate the generator without the two diffusion terms.
    #[serde(default)]
    pub naive: bool,
}

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind) -> Self {
        ScenarioConfig {
            kind,
            model: None,
            initial_state: None,
            integrator: None,
            output: None,
            seed: 0,
            sampler: None,
            channel: None,
            naive: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        io::parse_json(text, "scenario")
    }

    /// Load a scenario and the directory its relative paths refer to.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let cfg = Self::from_json(&io::read_text(path)?)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }
}

/// Machine-readable summary of a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExitReport {
    pub ok: bool,
    pub kind: String,
    pub residuals: BTreeMap<String, f64>,
    pub paths: Vec<String>,
    pub metadata: BTreeMap<String, Value>,
}

impl ExitReport {
    fn new(kind: &str) -> Self {
        ExitReport {
            ok: true,
            kind: kind.to_string(),
            residuals: BTreeMap::new(),
            paths: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    fn residual(&mut self, name: &str, value: f64) {
        self.residuals.insert(name.to_string(), value);
    }

    fn meta(&mut self, name: &str, value: Value) {
        self.metadata.insert(name.to_string(), value);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }
}

/// Report plus the files it will write.
struct Outcome {
    report: ExitReport,
    files: Vec<(String, String)>,
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassicalModel {
    #[serde(default)]
    rates: Option<PauliRates>,
    #[serde(default)]
    diffusion: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MonitoringInitial {
    signal: InitialSignal,
    quantum: DensityMatrix,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomModelSpec {
    n: usize,
    d: usize,
    #[serde(default = "two")]
    channels: usize,
    #[serde(default = "unit")]
    h_sd: f64,
    #[serde(default = "amp_sd")]
    amp_sd: f64,
}

fn two() -> usize {
    2
}
fn unit() -> f64 {
    1.0
}
fn amp_sd() -> f64 {
    0.3
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ChannelSpec {
    Projective {
        #[serde(with = "json::matrix_list")]
        projectors: Vec<CMatrix>,
    },
    Kraus {
        family: KrausFamily,
    },
    Gaussian {
        sigma2: f64,
        #[serde(with = "json::matrix")]
        q_op: CMatrix,
        grid: ClassicalSpace,
    },
}

enum Job {
    Classical { rates: Option<PauliRates>, diffusion: Option<f64>, init: ClassicalDensity, cfg: IntegratorConfig },
    Quantum { model: LindbladModel, init: DensityMatrix, cfg: IntegratorConfig },
    Hybrid { model: HybridLindbladModel, init: HybridDensity, cfg: IntegratorConfig },
    Monitoring { model: MonitoringModel, init: HybridDensity, cfg: IntegratorConfig, naive: bool, oracle: Option<Oracle> },
    Measure { state: DensityMatrix, channel: PreparedChannel },
    EmbedCheck { model: HybridLindbladModel, init: HybridDensity, cfg: IntegratorConfig },
}

struct Oracle {
    cfg: SamplerConfig,
    signal: InitialSignal,
    rho0: DensityMatrix,
    times: Vec<f64>,
}

enum PreparedChannel {
    Projective(Vec<CMatrix>),
    Kraus(KrausFamily),
    Gaussian(GaussianKrausSpec, KrausFamily),
}

fn require<'a>(v: &'a Option<Value>, what: &str) -> Result<&'a Value> {
    v.as_ref().ok_or_else(|| Error::Config(format!("missing `{what}`")))
}

fn integrator(cfg: &ScenarioConfig) -> Result<IntegratorConfig> {
    let ic = cfg.integrator.clone().ok_or_else(|| Error::Config("missing `integrator`".into()))?;
    ic.steps()?;
    Ok(ic)
}

/// Reject `dt` above `0.2·min(ΔX²/2D, 1/‖G‖)`.
fn check_step<S, G>(gen: &G, template: &S, cfg: &IntegratorConfig, diffusion: Option<(f64, f64)>, seed: u64) -> Result<f64>
where
    S: OdeState,
    G: Fn(&S) -> Result<S>,
{
    let norm = estimate_generator_norm(gen, template, NORM_ITERATIONS, seed)?;
    let bound = stability_bound(norm, diffusion);
    cfg.check_stability(bound)?;
    Ok(bound)
}

fn initial_signal_density(space: &ClassicalSpace, signal: InitialSignal) -> Result<ClassicalDensity> {
    match signal {
        InitialSignal::Fixed { x0 } => ClassicalDensity::delta(space.clone(), space.nearest_index(x0)?),
        InitialSignal::Gaussian { mean, sd } => ClassicalDensity::gaussian(space.clone(), mean, sd),
    }
}

fn prepare(sc: &ScenarioConfig, base: &Path) -> Result<Job> {
    match sc.kind {
        ScenarioKind::Classical => {
            let m: ClassicalModel = io::resolve(require(&sc.model, "model")?, base, "model")?;
            if m.rates.is_none() && m.diffusion.is_none() {
                return Err(Error::Config("classical model needs `rates` and/or `diffusion`".into()));
            }
            if let Some(d) = m.diffusion {
                if !(d > 0.0) {
                    return Err(Error::Config(format!("diffusion must be positive, got {d}")));
                }
            }
            let init: ClassicalDensity = io::resolve(require(&sc.initial_state, "initial_state")?, base, "initial_state")?;
            if let Some(r) = &m.rates {
                r.space.check_same(&init.space)?;
            }
            if m.diffusion.is_some() {
                init.space.require_grid()?;
            }
            Ok(Job::Classical { rates: m.rates, diffusion: m.diffusion, init, cfg: integrator(sc)? })
        }
        ScenarioKind::Quantum => {
            let model: LindbladModel = io::resolve(require(&sc.model, "model")?, base, "model")?;
            let init: DensityMatrix = io::resolve(require(&sc.initial_state, "initial_state")?, base, "initial_state")?;
            if init.dim() != model.dim() {
                return Err(Error::DimensionMismatch { expected: model.dim(), found: init.dim() });
            }
            Ok(Job::Quantum { model, init, cfg: integrator(sc)? })
        }
        ScenarioKind::Hybrid => {
            let model: HybridLindbladModel = io::resolve(require(&sc.model, "model")?, base, "model")?;
            let init: HybridDensity = io::resolve(require(&sc.initial_state, "initial_state")?, base, "initial_state")?;
            model.space().check_same(init.space())?;
            if init.dim() != model.dim() {
                return Err(Error::DimensionMismatch { expected: model.dim(), found: init.dim() });
            }
            Ok(Job::Hybrid { model, init, cfg: integrator(sc)? })
        }
        ScenarioKind::Monitoring => {
            let model: MonitoringModel = io::resolve(require(&sc.model, "model")?, base, "model")?;
            let mi: MonitoringInitial = io::resolve(require(&sc.initial_state, "initial_state")?, base, "initial_state")?;
            if mi.quantum.dim() != model.dim() {
                return Err(Error::DimensionMismatch { expected: model.dim(), found: mi.quantum.dim() });
            }
            let cfg = integrator(sc)?.keep_snapshots(true);
            model.check_margin(cfg.t_final, mi.signal.support())?;
            let rc = initial_signal_density(model.xspace(), mi.signal)?;
            let init = make_product(&rc, &mi.quantum, model.dim())?;
            let oracle = match &sc.sampler {
                Some(s) if s.n_traj > 0 => {
                    let scfg = SamplerConfig::new(&model, s.nu, cfg.t_final, s.n_traj, sc.seed)?.record_every(s.record_every);
                    let times = oracle_times(&scfg, &cfg)?;
                    Some(Oracle { cfg: scfg, signal: mi.signal, rho0: mi.quantum, times })
                }
                _ => None,
            };
            Ok(Job::Monitoring { model, init, cfg, naive: sc.naive, oracle })
        }
        ScenarioKind::Measure => {
            let state: DensityMatrix = io::resolve(require(&sc.initial_state, "initial_state")?, base, "initial_state")?;
            let spec: ChannelSpec = io::resolve(require(&sc.channel, "channel")?, base, "channel")?;
            let channel = match spec {
                ChannelSpec::Projective { projectors } => PreparedChannel::Projective(projectors),
                ChannelSpec::Kraus { family } => {
                    PreparedChannel::Kraus(KrausFamily::new(family.space, family.operators)?)
                }
                ChannelSpec::Gaussian { sigma2, q_op, grid } => {
                    let spec = GaussianKrausSpec::new(sigma2, q_op, grid)?;
                    let family = gaussian_kraus_family(&spec)?;
                    PreparedChannel::Gaussian(spec, family)
                }
            };
            Ok(Job::Measure { state, channel })
        }
        ScenarioKind::EmbedCheck => {
            let mut rng = ChaCha20Rng::seed_from_u64(sc.seed);
            let raw = require(&sc.model, "model")?;
            let model = match raw.get("random") {
                Some(spec) => {
                    let r: RandomModelSpec = io::resolve(spec, base, "model.random")?;
                    let space = ClassicalSpace::indexed(r.n)?;
                    random::hybrid_model(&space, r.d, r.channels, r.h_sd, r.amp_sd, &mut rng)
                }
                None => io::resolve(raw, base, "model")?,
            };
            let init = match &sc.initial_state {
                Some(v) => io::resolve(v, base, "initial_state")?,
                None => random::hybrid_density(model.space(), model.dim(), &mut rng),
            };
            model.space().check_same(init.space())?;
            let cfg = sc.integrator.clone().unwrap_or_else(|| IntegratorConfig::new(1e-3, 1.0));
            cfg.steps()?;
            Ok(Job::EmbedCheck { model, init, cfg })
        }
    }
}

/// Sampler record times, each of which must also be a PDE record time.
fn oracle_times(s: &SamplerConfig, ic: &IntegratorConfig) -> Result<Vec<f64>> {
    let steps = s.steps()?;
    let pde_steps = ic.steps()?;
    let pde_times: Vec<f64> = (0..=pde_steps)
        .filter(|k| k % ic.record_every == 0 || *k == pde_steps)
        .map(|k| k as f64 * ic.dt)
        .collect();
    let mut times = Vec::new();
    for k in (1..=steps).filter(|k| k % s.record_every == 0 || *k == steps) {
        let t = k as f64 / s.nu;
        if !pde_times.iter().any(|p| (p - t).abs() <= 1e-9 * t.max(1.0)) {
            return Err(Error::Config(format!("sampler record time {t} is not an integrator record time")));
        }
        times.push(t);
    }
    Ok(times)
}

fn integration_meta(r: &mut ExitReport, cfg: &IntegratorConfig, bound: f64) {
    r.meta("method", json!("rk4"));
    r.meta("dt", json!(cfg.dt));
    r.meta("t_final", json!(cfg.t_final));
    r.meta("record_every", json!(cfg.record_every));
    r.meta("hermitized", json!(cfg.hermitize));
    r.meta("stability_bound", json!(bound));
}

fn evolution_checks<S>(r: &mut ExitReport, ts: &TimeSeries<S>, positivity_tol: f64) {
    let trace = ts.max_trace_defect();
    let min_eig = ts.min_eigenvalue_overall();
    r.residual("max_trace_defect", trace);
    r.residual("min_eigenvalue", min_eig);
    r.ok &= trace <= TRACE_TOL && min_eig >= positivity_tol;
}

fn classical_moments(rho: &ClassicalDensity) -> std::result::Result<(f64, f64), String> {
    let xs = rho.space.coordinates().map_err(|e| e.to_string())?;
    let w = rho.space.weight();
    let mean: f64 = xs.iter().zip(&rho.values).map(|(x, p)| w * x * p).sum();
    let var: f64 = xs.iter().zip(&rho.values).map(|(x, p)| w * (x - mean).powi(2) * p).sum();
    Ok((mean, var))
}

fn hybrid_observers<'a>(mm: Option<&'a MonitoringModel>, grid: bool) -> Vec<Observer<'a, HybridDensity>> {
    let mut obs = Vec::new();
    if grid {
        obs.push(Observer::new("mean_X", |_t: f64, s: &HybridDensity| {
            signal_moments(s).map(|m| m.0).map_err(|e| e.to_string())
        }));
        obs.push(Observer::new("var_X", |_t: f64, s: &HybridDensity| {
            signal_moments(s).map(|m| m.1).map_err(|e| e.to_string())
        }));
    }
    if let Some(mm) = mm {
        obs.push(Observer::new("mean_q", move |_t: f64, s: &HybridDensity| {
            Ok((mm.q_op() * reduce_quantum(s).matrix()).trace().re)
        }));
    }
    obs.push(Observer::new("purity", |_t: f64, s: &HybridDensity| Ok(reduce_quantum(s).purity())));
    obs
}

fn execute(job: Job, seed: u64) -> Result<Outcome> {
    match job {
        Job::Classical { rates, diffusion, init, cfg } => {
            let gen = |s: &ClassicalDensity| -> Result<ClassicalDensity> {
                let mut v = vec![0.0; s.values.len()];
                if let Some(r) = &rates {
                    v.iter_mut().zip(pauli_apply(r, s)?).for_each(|(a, b)| *a += b);
                }
                if let Some(d) = diffusion {
                    v.iter_mut().zip(diffusion_apply(d, s)?).for_each(|(a, b)| *a += b);
                }
                Ok(ClassicalDensity { space: s.space.clone(), values: v })
            };
            let diff = match (diffusion, init.space.dx()) {
                (Some(d), Ok(dx)) => Some((dx, d)),
                _ => None,
            };
            let bound = check_step(&gen, &init, &cfg, diff, seed).map_err(as_config)?;
            let mut obs = Vec::new();
            if init.space.is_grid() {
                obs.push(Observer::new("mean", |_t: f64, s: &ClassicalDensity| classical_moments(s).map(|m| m.0)));
                obs.push(Observer::new("variance", |_t: f64, s: &ClassicalDensity| classical_moments(s).map(|m| m.1)));
            }
            let ts = evolve(gen, init, &cfg, &mut obs)?;
            let mut report = ExitReport::new("classical");
            integration_meta(&mut report, &cfg, bound);
            evolution_checks(&mut report, &ts, 0.0);
            let files = vec![
                ("timeseries.csv".into(), ts.to_csv()),
                ("final_state.json".into(), serde_json::to_string_pretty(&ts.final_state)?),
            ];
            Ok(Outcome { report, files })
        }
        Job::Quantum { model, init, cfg } => {
            let gen = |s: &DensityMatrix| DensityMatrix::new(lindblad_apply(&model, s)?);
            let bound = check_step(&gen, &init, &cfg, None, seed).map_err(as_config)?;
            let mut obs = [Observer::new("purity", |_t: f64, s: &DensityMatrix| Ok(s.purity()))];
            let ts = evolve(gen, init, &cfg, &mut obs)?;
            let mut report = ExitReport::new("quantum");
            integration_meta(&mut report, &cfg, bound);
            evolution_checks(&mut report, &ts, POSITIVITY_TOL);
            let files = vec![
                ("timeseries.csv".into(), ts.to_csv()),
                ("final_state.json".into(), serde_json::to_string_pretty(&ts.final_state)?),
            ];
            Ok(Outcome { report, files })
        }
        Job::Hybrid { model, init, cfg } => {
            let gen = |s: &HybridDensity| s.with_blocks(hybrid_apply(&model, s)?);
            let bound = check_step(&gen, &init, &cfg, None, seed).map_err(as_config)?;
            let mut obs = hybrid_observers(None, init.space().is_grid());
            let ts = evolve(gen, init, &cfg, &mut obs)?;
            let mut report = ExitReport::new("hybrid");
            integration_meta(&mut report, &cfg, bound);
            evolution_checks(&mut report, &ts, POSITIVITY_TOL);
            let files = vec![
                ("timeseries.csv".into(), ts.to_csv()),
                ("final_state.json".into(), ts.final_state.to_json()?),
            ];
            Ok(Outcome { report, files })
        }
        Job::Monitoring { model, init, cfg, naive, oracle } => run_monitoring(&model, init, &cfg, naive, oracle, seed),
        Job::Measure { state, channel } => run_measure(&state, channel),
        Job::EmbedCheck { model, init, cfg } => {
            let gen = |s: &HybridDensity| s.with_blocks(hybrid_apply(&model, s)?);
            let bound = check_step(&gen, &init, &cfg, None, seed).map_err(as_config)?;
            let rep = equivalence_check(&model, &init, cfg.t_final, cfg.dt)?;
            let mut report = ExitReport::new("embed-check");
            integration_meta(&mut report, &cfg, bound);
            report.meta("n", json!(model.space().len()));
            report.meta("d", json!(model.dim()));
            report.meta("amplitudes", json!(model.amplitudes().len()));
            report.residual("equivalence_residual", rep.residual);
            report.residual("min_eigenvalue", rep.hybrid_min_eigenvalue);
            report.residual("max_trace_defect", rep.hybrid_max_trace_defect);
            report.residual("enlarged_max_trace_defect", rep.enlarged_max_trace_defect);
            report.residual("max_off_block", rep.max_off_block);
            report.ok = rep.residual <= EQUIVALENCE_TOL
                && rep.hybrid_min_eigenvalue >= POSITIVITY_TOL
                && rep.hybrid_max_trace_defect <= TRACE_TOL;
            let files = vec![("final_state.json".into(), rep.hybrid_final.to_json()?)];
            Ok(Outcome { report, files })
        }
    }
}

fn run_monitoring(
    mm: &MonitoringModel,
    init: HybridDensity,
    cfg: &IntegratorConfig,
    naive: bool,
    oracle: Option<Oracle>,
    seed: u64,
) -> Result<Outcome> {
    let gen = |s: &HybridDensity| {
        let blocks = if naive { naive_apply(mm, s)? } else { monitoring_apply(mm, s)? };
        s.with_blocks(blocks)
    };
    let diff = Some((mm.xspace().dx()?, mm.diffusion()));
    let bound = check_step(&gen, &init, cfg, diff, seed).map_err(as_config)?;

    // the sampler runs on other threads while the PDE integrates here
    let (pde, ensemble) = rayon::join(
        || {
            let mut obs = hybrid_observers(Some(mm), true);
            evolve(gen, init, cfg, &mut obs)
        },
        || oracle.as_ref().map(|o| sample_ensemble(mm, &o.cfg, &o.rho0, o.signal)),
    );
    let ts = pde?;

    let mut report = ExitReport::new("monitoring");
    integration_meta(&mut report, cfg, bound);
    report.meta("naive", json!(naive));
    report.meta("diffusion", json!(mm.diffusion()));
    report.meta("decoherence", json!(mm.decoherence()));
    let trace = ts.max_trace_defect();
    report.residual("max_trace_defect", trace);
    report.residual("min_eigenvalue", ts.min_eigenvalue_overall());
    if naive {
        report.ok = trace <= TRACE_TOL;
    } else {
        let r = monitoring_residuals(mm, &ts)?;
        report.residual("drift_residual", r.drift_residual);
        report.residual("reduced_lindblad_residual", r.reduced_lindblad_residual);
        report.residual("fokker_planck_residual", r.fokker_planck_residual);
        report.residual("max_boundary_mass", r.max_boundary_mass);
        report.ok = trace <= TRACE_TOL
            && r.drift_residual <= DRIFT_TOL
            && r.reduced_lindblad_residual <= IDENTITY_TOL
            && r.fokker_planck_residual <= IDENTITY_TOL
            && r.min_eigenvalue >= MONITORING_POSITIVITY_TOL;
    }
    let mut files = vec![("timeseries.csv".to_string(), ts.to_csv())];
    files.push(("residuals.json".into(), serde_json::to_string_pretty(&report.residuals)?));

    if let (Some(o), Some(records)) = (oracle, ensemble) {
        let records = records?;
        let mut rows = Vec::new();
        let mut pde_rows = Vec::new();
        let mut worst = [0.0_f64; 5];
        for &t in &o.times {
            let k = ts
                .times
                .iter()
                .position(|p| (p - t).abs() <= 1e-9 * t.max(1.0))
                .expect("checked while preparing");
            let snap = &ts.snapshots[k];
            let pm = pde_moments(mm, snap, t)?;
            let em = ensemble_moments(mm, &records, t)?;
            let kr = records[0]
                .times
                .iter()
                .position(|s| (s - t).abs() <= 1e-9 * t.max(1.0))
                .expect("sampler records every oracle time");
            let xs: Vec<f64> = records.iter().map(|r| r.x[kr]).collect();
            let (w1, se_w) = wasserstein1(&xs, snap)?;
            let z = [
                (em.moments.mean_x - pm.mean_x).abs() / em.se_mean_x,
                (em.moments.var_x - pm.var_x).abs() / em.se_var_x,
                (em.moments.mean_q - pm.mean_q).abs() / em.se_mean_q,
                (em.moments.purity - pm.purity).abs() / em.se_purity,
                w1 / se_w,
            ];
            for (w, zi) in worst.iter_mut().zip(z) {
                *w = w.max(if zi.is_finite() { zi } else { 0.0 });
            }
            rows.push(em);
            pde_rows.push(pm);
        }
        for (name, v) in ["oracle_z_mean_X", "oracle_z_var_X", "oracle_z_mean_q", "oracle_z_purity", "oracle_w1_ratio"]
            .iter()
            .zip(worst)
        {
            report.residual(name, v);
        }
        report.ok &= worst.iter().all(|z| *z <= ORACLE_SIGMAS);
        report.meta("rng", json!(RNG_ALGORITHM));
        report.meta("seed", json!(o.cfg.seed));
        report.meta("nu", json!(o.cfg.nu));
        report.meta("sigma2", json!(o.cfg.sigma2));
        report.meta("n_traj", json!(o.cfg.n_traj));
        files.push(("ensemble_summary.csv".into(), ensemble_summary_csv(&rows)));
        files.push(("pde_moments.csv".into(), pde_moments_csv(&pde_rows)));
        files.push(("trajectory_0.csv".into(), trajectory_csv(&records[0])));
    }
    Ok(Outcome { report, files })
}

fn pde_moments_csv(rows: &[Moments]) -> String {
    let mut out = String::from("t,mean_X,var_X,mean_q,purity\n");
    for m in rows {
        let row = [m.t, m.mean_x, m.var_x, m.mean_q, m.purity];
        out.push_str(&row.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

fn run_measure(state: &DensityMatrix, channel: PreparedChannel) -> Result<Outcome> {
    let mut report = ExitReport::new("measure");
    let mut files = Vec::new();
    let hd = match &channel {
        PreparedChannel::Projective(p) => projective_channel(state, p)?,
        PreparedChannel::Kraus(f) | PreparedChannel::Gaussian(_, f) => {
            report.residual("completeness_defect", completeness_defect(f));
            kraus_channel(state, f)?
        }
    };
    if let PreparedChannel::Gaussian(spec, _) = &channel {
        let avg = averaged_gaussian_channel(state, spec)?;
        let summed = reduce_quantum(&hd);
        report.residual("averaged_channel_difference", linalg::max_abs_diff(avg.matrix(), summed.matrix()));
        files.push(("averaged_state.json".into(), serde_json::to_string_pretty(&avg)?));
    }
    report.residual("probability_defect", (hd.total_trace() - 1.0).abs());
    report.ok = hybrid_state::validate(&hd).ok;

    let w = hd.space().weight();
    let mut csv = String::from("index,outcome,probability\n");
    for (i, b) in hd.blocks().iter().enumerate() {
        let label = match hd.space() {
            ClassicalSpace::Discrete { labels } => labels[i].clone(),
            space => fmt_f64(space.coordinate(i).unwrap_or(f64::NAN)),
        };
        csv.push_str(&format!("{i},{label},{}\n", fmt_f64(w * b.trace().re)));
    }
    files.insert(0, ("outcomes.csv".into(), csv));
    files.insert(1, ("post_state.json".into(), hd.to_json()?));
    Ok(Outcome { report, files })
}

fn finish(mut outcome: Outcome, out_dir: &Path) -> Result<ExitReport> {
    let mut paths: Vec<String> = outcome
        .files
        .iter()
        .map(|(name, _)| out_dir.join(name).display().to_string())
        .collect();
    paths.push(out_dir.join("report.json").display().to_string());
    outcome.report.paths = paths;
    let mut files = outcome.files;
    files.push(("report.json".into(), outcome.report.to_json()));
    io::write_outputs(out_dir, &files)?;
    Ok(outcome.report)
}

/// Parse, run and write outputs. Configuration problems surface as
/// [`Error::Config`] before anything is written.
pub fn run_scenario(sc: &ScenarioConfig, base: &Path, out_dir: &Path) -> Result<ExitReport> {
    let job = prepare(sc, base).map_err(as_config)?;
    let mut outcome = execute(job, sc.seed)?;
    outcome.report.meta("seed", json!(sc.seed));
    finish(outcome, out_dir)
}

/// Model and initial state of the positivity demonstration: `Ĥ = 0`,
/// `q̂ = σz`, `ρ̂(X) = N(0, 0.25²)|+⟩⟨+|` on `[−4, 4]` with 161 points.
pub fn positivity_demo_setup() -> Result<(MonitoringModel, HybridDensity)> {
    let space = ClassicalSpace::grid_span(-4.0, 4.0, 161, Boundary::Periodic)?;
    let mm = MonitoringModel::new(linalg::zeros(2), linalg::pauli_z(), 0.05, space.clone())?;
    let plus = DensityMatrix::pure(&[linalg::c(1.0, 0.0), linalg::c(1.0, 0.0)])?;
    let rc = ClassicalDensity::gaussian(space, 0.0, 0.25)?;
    Ok((mm.clone(), make_product(&rc, &plus, 2)?))
}

/// Naive and corrected monitoring evolution of the demo state up to `t = 0.5`.
pub fn demo_naive_positivity(out_dir: &Path) -> Result<ExitReport> {
    let (mm, init) = positivity_demo_setup()?;
    let cfg = IntegratorConfig::new(1e-3, 0.5).record_every(10);
    let (naive, corrected) = rayon::join(
        || {
            let mut obs = hybrid_observers(Some(&mm), true);
            evolve(|s: &HybridDensity| s.with_blocks(naive_apply(&mm, s)?), init.clone(), &cfg, &mut obs)
        },
        || {
            let mut obs = hybrid_observers(Some(&mm), true);
            evolve(|s: &HybridDensity| s.with_blocks(monitoring_apply(&mm, s)?), init.clone(), &cfg, &mut obs)
        },
    );
    let (naive, corrected) = (naive?, corrected?);
    let mut report = ExitReport::new("demo-naive-positivity");
    report.meta("method", json!("rk4"));
    report.meta("dt", json!(cfg.dt));
    report.meta("t_final", json!(cfg.t_final));
    report.meta("hermitized", json!(cfg.hermitize));
    report.meta("diffusion", json!(mm.diffusion()));
    let (n_min, c_min) = (naive.min_eigenvalue_overall(), corrected.min_eigenvalue_overall());
    report.residual("naive_min_eigenvalue", n_min);
    report.residual("corrected_min_eigenvalue", c_min);
    report.residual("naive_max_trace_defect", naive.max_trace_defect());
    report.residual("corrected_max_trace_defect", corrected.max_trace_defect());
    report.ok = n_min < -1e-3 && c_min >= MONITORING_POSITIVITY_TOL;
    let files = vec![
        ("naive_timeseries.csv".into(), naive.to_csv()),
        ("corrected_timeseries.csv".into(), corrected.to_csv()),
    ];
    finish(Outcome { report, files }, out_dir)
}

/// Check a state file: a hybrid density (`blocks`), a classical density
/// (`values`) or a bare density matrix.
pub fn validate_state_file(path: &Path) -> Result<ExitReport> {
    let text = io::read_text(path)?;
    let value: Value = io::parse_json(&text, &path.display().to_string())?;
    let what = path.display().to_string();
    let (kind, rep) = if value.get("blocks").is_some() {
        let hd: HybridDensity = io::resolve(&value, Path::new(""), &what)?;
        ("hybrid", hybrid_state::validate(&hd))
    } else if value.get("values").is_some() {
        let c: ClassicalDensity = io::resolve(&value, Path::new(""), &what)?;
        ("classical", c.validate())
    } else {
        let d: DensityMatrix = io::resolve(&value, Path::new(""), &what)?;
        ("density-matrix", d.validate())
    };
    let mut report = ExitReport::new("validate");
    report.ok = rep.ok;
    report.meta("state", json!(kind));
    report.residual("worst_eigenvalue", rep.worst_eigenvalue);
    report.residual("hermiticity_defect", rep.hermiticity_defect);
    report.residual("normalization_defect", rep.normalization_defect);
    Ok(report)
}
