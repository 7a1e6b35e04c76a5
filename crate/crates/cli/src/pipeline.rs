//! Stage planning, content-hash caching and execution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use attractor_lab::attractor::{
    build_tracking_net_with, equicontinuity_modulus, section_check, tracking_schedule, verify_tracking, NetRecord,
    PieceLibrary, TrackingNet, PROXY_NOTE,
};
use attractor_lab::forcing::{self, classify_force, log_times, pointwise_limit_probe, Probe, DEFAULT_DELTAS, SAMPLED_DISCLAIMER};
use attractor_lab::phase::{MetricKind, MetricSpec};
use attractor_lab::rds::validate_nonlinearity;
use attractor_lab::store::{load_run, save_run, RunManifest};
use attractor_lab::systems::{random_initial_data, snapshots, Evolution, SystemHandle, Trajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::manifest::{sha256_hex, ExperimentManifest, Solver};

const SIMULATION_NOTE: &str = "Galerkin truncation; absorbing radius from the truncated energy estimate";
const RECORD_FILE: &str = "stage.json";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_ECHO: &str = "manifest.toml";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Simulate,
    Harvest,
    BuildNet,
    VerifyTracking,
    Schedule,
    Equicontinuity,
    SectionCheck,
    ClassifyForce,
    ClassifyNonlinearity,
}

pub const ALL_STAGES: [Stage; 9] = [
    Stage::Simulate,
    Stage::Harvest,
    Stage::BuildNet,
    Stage::VerifyTracking,
    Stage::Schedule,
    Stage::Equicontinuity,
    Stage::SectionCheck,
    Stage::ClassifyForce,
    Stage::ClassifyNonlinearity,
];

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Harvest => "harvest",
            Stage::BuildNet => "build_net",
            Stage::VerifyTracking => "verify_tracking",
            Stage::Schedule => "schedule",
            Stage::Equicontinuity => "equicontinuity",
            Stage::SectionCheck => "section_check",
            Stage::ClassifyForce => "classify_force",
            Stage::ClassifyNonlinearity => "classify_nonlinearity",
        }
    }

    pub fn from_name(name: &str) -> Option<Stage> {
        ALL_STAGES.iter().copied().find(|s| s.name() == name)
    }

    fn deps(self, external_net: bool) -> Vec<Stage> {
        match self {
            Stage::Simulate | Stage::ClassifyForce | Stage::ClassifyNonlinearity => vec![],
            Stage::Harvest => vec![Stage::Simulate],
            Stage::BuildNet | Stage::Equicontinuity => vec![Stage::Harvest],
            Stage::VerifyTracking if external_net => vec![],
            Stage::VerifyTracking => vec![Stage::BuildNet],
            Stage::Schedule => vec![Stage::VerifyTracking],
            Stage::SectionCheck => vec![Stage::Harvest, Stage::BuildNet, Stage::VerifyTracking],
        }
    }

    fn declared(self, m: &ExperimentManifest) -> bool {
        let p = &m.pipeline;
        match self {
            Stage::Simulate => p.simulate.is_some(),
            Stage::Harvest => p.harvest.is_some(),
            Stage::BuildNet => p.build_net.is_some(),
            Stage::VerifyTracking => p.verify_tracking.is_some(),
            Stage::Schedule => p.schedule.is_some(),
            Stage::Equicontinuity => p.equicontinuity.is_some(),
            Stage::SectionCheck => p.section_check.is_some(),
            Stage::ClassifyForce => p.classify_force.is_some(),
            Stage::ClassifyNonlinearity => p.classify_nonlinearity.is_some(),
        }
    }
}

/// Stages declared in the manifest's pipeline block.
pub fn declared_stages(m: &ExperimentManifest) -> Vec<Stage> {
    ALL_STAGES.iter().copied().filter(|s| s.declared(m)).collect()
}

fn grid_ceil(t: f64, h: f64) -> f64 {
    let k = (t / h - 1e-9).ceil();
    // k / n reads back as the short decimal when h = 1/n
    let n = h.recip().round();
    if (h.recip() - n).abs() < 1e-9 * n {
        k / n
    } else {
        k * h
    }
}

fn on_grid(t: f64, h: f64) -> bool {
    let k = t / h;
    (k - k.round()).abs() <= 1e-9 * k.abs().max(1.0)
}

fn positive(field: &str, v: f64) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::field(field, format!("must be positive and finite, got {v}")))
    }
}

fn gridded(field: &str, v: f64, h: f64) -> CliResult<f64> {
    if v >= 0.0 && v.is_finite() && on_grid(v, h) {
        Ok(v)
    } else {
        Err(CliError::field(field, format!("{v} is not a nonnegative multiple of the sample spacing {h}")))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateParams {
    pub runs: usize,
    pub norm: f64,
    pub max_mode: usize,
    pub horizon: f64,
    pub seed: u64,
    pub radius: f64,
    pub entry_time: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HarvestParams {
    pub t0: f64,
    pub duration: f64,
    pub stride: f64,
    pub metric: MetricSpec,
}

#[derive(Clone, Debug, Serialize)]
pub struct NetParams {
    pub epsilon: Option<f64>,
    pub epsilon_fraction: Option<f64>,
    pub dump_matrix: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyParams {
    pub tests: usize,
    pub seed: u64,
    pub norm: f64,
    pub max_mode: usize,
    pub horizon: f64,
    pub t0: f64,
    pub net: Option<String>,
    pub net_sha256: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScheduleParams {
    pub test: usize,
    pub j0: usize,
    pub j_end: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct EquicontinuityParams {
    pub gaps: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SectionParams {
    pub times: Vec<f64>,
    pub tolerance: Option<f64>,
    pub stride: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassifyForceParams {
    pub probe: Probe,
    pub deltas: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassifyNonlinearityParams {
    pub radius: f64,
    pub resolution: f64,
    pub levels: usize,
    pub t_max: f64,
    pub times: usize,
    pub limit_t_max: f64,
    pub limit_times: usize,
    pub limit_tol: f64,
    pub limit_v: Vec<f64>,
}

/// A net produced by another experiment.
#[derive(Clone, Debug)]
struct ExternalNet {
    path: PathBuf,
    record: NetRecord,
}

/// Resolved parameters and content keys of every stage to run.
#[derive(Clone, Debug)]
pub struct Plan {
    pub order: Vec<Stage>,
    pub keys: BTreeMap<Stage, String>,
    params: BTreeMap<Stage, Value>,
    sim: Option<SimulateParams>,
    harvest: Option<HarvestParams>,
    net: Option<NetParams>,
    verify: Option<VerifyParams>,
    schedule: Option<ScheduleParams>,
    equi: Option<EquicontinuityParams>,
    section: Option<SectionParams>,
    force: Option<ClassifyForceParams>,
    nonlin: Option<ClassifyNonlinearityParams>,
    external: Option<ExternalNet>,
}

/// A validated manifest together with its solver.
pub struct Experiment {
    pub manifest: ExperimentManifest,
    pub hash: String,
    /// Directory that relative paths in the manifest refer to.
    pub base_dir: PathBuf,
    pub output: Option<PathBuf>,
    system: SystemHandle,
}

impl Experiment {
    pub fn new(manifest: ExperimentManifest, base_dir: PathBuf, output: Option<PathBuf>) -> CliResult<Self> {
        let system = manifest.system()?;
        let output = output.or_else(|| manifest.output_dir(&base_dir));
        Ok(Experiment {
            hash: manifest.hash(),
            manifest,
            base_dir,
            output,
            system,
        })
    }

    pub fn system(&self) -> &SystemHandle {
        &self.system
    }

    fn sim_params(&self) -> CliResult<SimulateParams> {
        let c = self.manifest.pipeline.simulate.clone().unwrap_or_default();
        let f = |n: &str| format!("pipeline.simulate.{n}");
        let ball = self.system.absorbing_ball();
        let runs = c.runs.unwrap_or(4);
        if runs == 0 {
            return Err(CliError::field(&f("runs"), "must be >= 1"));
        }
        let norm = match c.norm {
            Some(n) => positive(&f("norm"), n)?,
            None => positive(&f("norm"), ball.radius).map_err(|_| {
                CliError::field(
                    &f("norm"),
                    format!("default is the absorbing radius R = {}, which is not usable; set norm", ball.radius),
                )
            })?,
        };
        let max_mode = c.max_mode.unwrap_or(4);
        if max_mode == 0 {
            return Err(CliError::field(&f("max_mode"), "must be >= 1"));
        }
        let entry_time = ball.entry_time(norm);
        let sdt = self.system.sample_dt();
        let horizon = match c.horizon {
            Some(h) => h,
            None => {
                if !(entry_time.is_finite() && entry_time > 0.0) {
                    return Err(CliError::field(
                        &f("horizon"),
                        format!("default 50·t̄ needs a finite positive entry time, got t̄ = {entry_time}; set horizon"),
                    ));
                }
                grid_ceil(50.0 * entry_time, sdt)
            }
        };
        positive(&f("horizon"), horizon)?;
        gridded(&f("horizon"), horizon, sdt)?;
        Ok(SimulateParams {
            runs,
            norm,
            max_mode,
            horizon,
            seed: self.manifest.seed,
            radius: ball.radius,
            entry_time,
        })
    }

    fn harvest_params(&self, sim: &SimulateParams) -> CliResult<HarvestParams> {
        let c = self.manifest.pipeline.harvest.clone().unwrap_or_default();
        let f = |n: &str| format!("pipeline.harvest.{n}");
        let sdt = self.system.sample_dt();
        let duration = positive(&f("duration"), c.duration.unwrap_or(1.0))?;
        gridded(&f("duration"), duration, sdt)?;
        let stride = positive(&f("stride"), c.stride.unwrap_or(0.25 * duration))?;
        gridded(&f("stride"), stride, sdt)?;
        let t0 = match c.t0 {
            Some(t) => t,
            None => {
                if !sim.entry_time.is_finite() {
                    return Err(CliError::field(&f("t0"), "default 5·t̄ needs a finite entry time; set t0"));
                }
                grid_ceil(5.0 * sim.entry_time, sdt)
            }
        };
        gridded(&f("t0"), t0, sdt)?;
        if t0 + duration > sim.horizon + 1e-9 * sim.horizon {
            return Err(CliError::field(
                &f("t0"),
                format!("first piece [{t0}, {}] ends after the simulate horizon {}", t0 + duration, sim.horizon),
            ));
        }
        let mut metric = match c.metric.unwrap_or(MetricKind::Strong) {
            MetricKind::Strong => MetricSpec::strong(),
            MetricKind::Weak => MetricSpec::weak(),
        };
        if let Some(b) = c.weight_base {
            metric.weight_base = b;
        }
        metric.validate().map_err(|e| CliError::field(&f("weight_base"), e))?;
        Ok(HarvestParams { t0, duration, stride, metric })
    }

    fn net_params(&self) -> CliResult<NetParams> {
        let c = self.manifest.pipeline.build_net.clone().unwrap_or_default();
        let f = |n: &str| format!("pipeline.build_net.{n}");
        let (epsilon, epsilon_fraction) = match (c.epsilon, c.epsilon_fraction) {
            (Some(_), Some(_)) => {
                return Err(CliError::field(&f("epsilon_fraction"), "give either epsilon or epsilon_fraction"))
            }
            (Some(e), None) => (Some(positive(&f("epsilon"), e)?), None),
            (None, fr) => (None, Some(positive(&f("epsilon_fraction"), fr.unwrap_or(0.1))?)),
        };
        Ok(NetParams {
            epsilon,
            epsilon_fraction,
            dump_matrix: c.dump_matrix.unwrap_or(false),
        })
    }

    fn external_net(&self) -> CliResult<Option<ExternalNet>> {
        let Some(rel) = self.manifest.pipeline.verify_tracking.as_ref().and_then(|v| v.net.clone()) else {
            return Ok(None);
        };
        let field = "pipeline.verify_tracking.net";
        let path = self.base_dir.join(&rel);
        let bytes = fs::read(&path).map_err(|e| CliError::field(field, format!("{}: {e}", path.display())))?;
        let record: NetRecord = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::field(field, format!("{}: {e}", path.display())))?;
        record
            .basis
            .ensure_same(&self.system.basis())
            .map_err(|e| CliError::field(field, e))?;
        Ok(Some(ExternalNet { path, record }))
    }

    fn verify_params(
        &self,
        sim: &SimulateParams,
        harvest: Option<&HarvestParams>,
        external: Option<&ExternalNet>,
    ) -> CliResult<VerifyParams> {
        let c = self.manifest.pipeline.verify_tracking.clone().unwrap_or_default();
        let f = |n: &str| format!("pipeline.verify_tracking.{n}");
        let sdt = self.system.sample_dt();
        let tests = c.tests.unwrap_or(4);
        if tests == 0 {
            return Err(CliError::field(&f("tests"), "must be >= 1"));
        }
        let norm = positive(&f("norm"), c.norm.unwrap_or(sim.norm))?;
        let max_mode = c.max_mode.unwrap_or(sim.max_mode);
        if max_mode == 0 {
            return Err(CliError::field(&f("max_mode"), "must be >= 1"));
        }
        let horizon = positive(&f("horizon"), c.horizon.unwrap_or(sim.horizon))?;
        gridded(&f("horizon"), horizon, sdt)?;
        let (default_t0, duration, stride) = match (external, harvest) {
            (Some(x), _) => (x.record.t0, x.record.duration, x.record.stride),
            (None, Some(h)) => (h.t0, h.duration, h.stride),
            (None, None) => unreachable!("verify_tracking plans harvest or an external net"),
        };
        let t0 = c.t0.unwrap_or(default_t0);
        gridded(&f("t0"), t0, sdt)?;
        if t0 + stride + duration > horizon + 1e-9 * horizon {
            return Err(CliError::field(
                &f("horizon"),
                format!("{horizon} leaves no window after t0 = {t0} (stride {stride}, duration {duration})"),
            ));
        }
        let net_sha256 = match external {
            Some(x) => Some(sha256_hex(&fs::read(&x.path)?)),
            None => None,
        };
        Ok(VerifyParams {
            tests,
            seed: c.seed.unwrap_or(self.manifest.seed.wrapping_add(1)),
            norm,
            max_mode,
            horizon,
            t0,
            net: c.net,
            net_sha256,
        })
    }

    fn schedule_params(&self, verify: &VerifyParams, duration: f64) -> CliResult<ScheduleParams> {
        let c = self.manifest.pipeline.schedule.clone().unwrap_or_default();
        let f = |n: &str| format!("pipeline.schedule.{n}");
        let test = c.test.unwrap_or(0);
        if test >= verify.tests {
            return Err(CliError::field(&f("test"), format!("{test} out of range for {} tests", verify.tests)));
        }
        let j0 = c.j0.unwrap_or((verify.t0 / duration - 1e-9).ceil().max(0.0) as usize);
        let last = (verify.horizon / duration + 1e-9).floor() as usize;
        if last == 0 {
            return Err(CliError::field(&f("j_end"), "the test horizon holds no whole window"));
        }
        let j_end = c.j_end.unwrap_or(last - 1);
        if j_end < j0 || j_end + 1 > last {
            return Err(CliError::field(
                &f("j_end"),
                format!("window range {j0}..={j_end} must be nonempty and end by {}", last - 1),
            ));
        }
        Ok(ScheduleParams { test, j0, j_end })
    }

    fn equi_params(&self, h: &HarvestParams) -> CliResult<EquicontinuityParams> {
        let c = self.manifest.pipeline.equicontinuity.clone().unwrap_or_default();
        let dt = self.system.sample_dt();
        let gaps = match c.gaps {
            Some(g) => {
                for &l in &g {
                    gridded("pipeline.equicontinuity.gaps", l, dt)?;
                    if l > h.duration + 1e-12 {
                        return Err(CliError::field(
                            "pipeline.equicontinuity.gaps",
                            format!("gap {l} exceeds the piece length {}", h.duration),
                        ));
                    }
                }
                g
            }
            None => {
                let t = h.duration;
                let mut g: Vec<f64> = [0.0, dt, 2.0 * dt, 4.0 * dt, 0.25 * t, 0.5 * t, t]
                    .into_iter()
                    .filter(|&l| l <= t + 1e-12 && on_grid(l, dt))
                    .collect();
                g.sort_by(f64::total_cmp);
                g.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
                g
            }
        };
        if gaps.is_empty() {
            return Err(CliError::field("pipeline.equicontinuity.gaps", "need at least one gap"));
        }
        Ok(EquicontinuityParams { gaps })
    }

    fn section_params(&self, h: &HarvestParams) -> CliResult<SectionParams> {
        let c = self.manifest.pipeline.section_check.clone().unwrap_or_default();
        let f = |n: &str| format!("pipeline.section_check.{n}");
        let dt = self.system.sample_dt();
        let times = c.times.unwrap_or_else(|| vec![0.0, grid_ceil(0.5 * h.duration, dt), h.duration]);
        if times.is_empty() {
            return Err(CliError::field(&f("times"), "need at least one time"));
        }
        for &t in &times {
            gridded(&f("times"), t, dt)?;
            if t > h.duration + 1e-12 {
                return Err(CliError::field(&f("times"), format!("{t} is outside [0, {}]", h.duration)));
            }
        }
        let tolerance = c.tolerance.map(|t| positive(&f("tolerance"), t)).transpose()?;
        let stride = positive(&f("stride"), c.stride.unwrap_or(h.stride))?;
        gridded(&f("stride"), stride, dt)?;
        Ok(SectionParams { times, tolerance, stride })
    }

    fn force_params(&self) -> CliResult<ClassifyForceParams> {
        let c = self.manifest.pipeline.classify_force.clone().unwrap_or_default();
        let f = |n: &str| format!("pipeline.classify_force.{n}");
        let d = Probe::default();
        let probe = Probe {
            horizon: positive(&f("horizon"), c.horizon.unwrap_or(d.horizon))?,
            step: positive(&f("step"), c.step.unwrap_or(d.step))?,
        };
        let deltas = c.deltas.unwrap_or_else(|| DEFAULT_DELTAS.to_vec());
        if deltas.is_empty() {
            return Err(CliError::field(&f("deltas"), "need at least one window length"));
        }
        for &x in &deltas {
            positive(&f("deltas"), x)?;
        }
        Ok(ClassifyForceParams { probe, deltas })
    }

    fn nonlin_params(&self) -> CliResult<ClassifyNonlinearityParams> {
        let c = self.manifest.pipeline.classify_nonlinearity.clone().unwrap_or_default();
        let f = |n: &str| format!("pipeline.classify_nonlinearity.{n}");
        if self.manifest.system.solver != Solver::Rds {
            return Err(CliError::field("pipeline.classify_nonlinearity", "needs an rds system"));
        }
        let radius = positive(&f("radius"), c.radius.unwrap_or(1.0))?;
        let resolution = positive(&f("resolution"), c.resolution.unwrap_or(1e-4))?;
        if resolution >= radius {
            return Err(CliError::field(&f("resolution"), "must be below the radius"));
        }
        let levels = c.levels.unwrap_or(10);
        if levels == 0 {
            return Err(CliError::field(&f("levels"), "must be >= 1"));
        }
        let times = c.times.unwrap_or(32);
        if times < 2 {
            return Err(CliError::field(&f("times"), "must be >= 2"));
        }
        let limit_times = c.limit_times.unwrap_or(64);
        if limit_times < 4 {
            return Err(CliError::field(&f("limit_times"), "must be >= 4"));
        }
        let limit_v = match c.limit_v {
            Some(v) if v.is_empty() => return Err(CliError::field(&f("limit_v"), "empty grid")),
            Some(v) => v,
            None => {
                let n = c.limit_points.unwrap_or(65);
                if n < 2 {
                    return Err(CliError::field(&f("limit_points"), "must be >= 2"));
                }
                (0..n).map(|i| -radius + 2.0 * radius * i as f64 / (n - 1) as f64).collect()
            }
        };
        Ok(ClassifyNonlinearityParams {
            radius,
            resolution,
            levels,
            t_max: positive(&f("t_max"), c.t_max.unwrap_or(1e4))?,
            times,
            limit_t_max: positive(&f("limit_t_max"), c.limit_t_max.unwrap_or(1e6))?,
            limit_times,
            limit_tol: positive(&f("limit_tol"), c.limit_tol.unwrap_or(1e-3))?,
            limit_v,
        })
    }

    /// Resolve `requested` and everything it depends on.
    pub fn plan(&self, requested: &[Stage]) -> CliResult<Plan> {
        let external = self.external_net()?;
        let mut needed = BTreeSet::new();
        let mut stack: Vec<Stage> = requested.to_vec();
        while let Some(s) = stack.pop() {
            if needed.insert(s) {
                stack.extend(s.deps(external.is_some()));
            }
        }
        let order: Vec<Stage> = needed.iter().copied().collect();
        let has = |s: Stage| needed.contains(&s);
        let needs_sim = has(Stage::Simulate) || has(Stage::VerifyTracking);
        let sim = if needs_sim { Some(self.sim_params()?) } else { None };
        let harvest = if has(Stage::Harvest) {
            Some(self.harvest_params(sim.as_ref().expect("simulate planned"))?)
        } else {
            None
        };
        let net = if has(Stage::BuildNet) { Some(self.net_params()?) } else { None };
        let verify = if has(Stage::VerifyTracking) {
            Some(self.verify_params(sim.as_ref().expect("simulate planned"), harvest.as_ref(), external.as_ref())?)
        } else {
            None
        };
        let schedule = if has(Stage::Schedule) {
            let duration = match (&external, &harvest) {
                (Some(x), _) => x.record.duration,
                (None, Some(h)) => h.duration,
                (None, None) => unreachable!(),
            };
            Some(self.schedule_params(verify.as_ref().expect("verify planned"), duration)?)
        } else {
            None
        };
        let equi = if has(Stage::Equicontinuity) {
            Some(self.equi_params(harvest.as_ref().expect("harvest planned"))?)
        } else {
            None
        };
        let section = if has(Stage::SectionCheck) {
            Some(self.section_params(harvest.as_ref().expect("harvest planned"))?)
        } else {
            None
        };
        let force = if has(Stage::ClassifyForce) { Some(self.force_params()?) } else { None };
        let nonlin = if has(Stage::ClassifyNonlinearity) { Some(self.nonlin_params()?) } else { None };

        let mut params = BTreeMap::new();
        let to = |v: &dyn erased::Ser| v.value();
        if let Some(p) = &sim {
            // the simulate stage records its own seed; verify holds its own
            params.insert(Stage::Simulate, to(p));
        }
        if let Some(p) = &harvest {
            params.insert(Stage::Harvest, to(p));
        }
        if let Some(p) = &net {
            params.insert(Stage::BuildNet, to(p));
        }
        if let Some(p) = &verify {
            params.insert(Stage::VerifyTracking, to(p));
        }
        if let Some(p) = &schedule {
            params.insert(Stage::Schedule, to(p));
        }
        if let Some(p) = &equi {
            params.insert(Stage::Equicontinuity, to(p));
        }
        if let Some(p) = &section {
            params.insert(Stage::SectionCheck, to(p));
        }
        if let Some(p) = &force {
            params.insert(Stage::ClassifyForce, to(p));
        }
        if let Some(p) = &nonlin {
            params.insert(Stage::ClassifyNonlinearity, to(p));
        }

        let mut keys = BTreeMap::new();
        for &s in &order {
            let upstream: Vec<&String> = s.deps(external.is_some()).iter().map(|d| &keys[d]).collect();
            let key = sha256_hex(
                &serde_json::to_vec(&json!({
                    "stage": s.name(),
                    "version": env!("CARGO_PKG_VERSION"),
                    "system": self.manifest.system,
                    "symbol": self.manifest.symbol,
                    "params": params[&s],
                    "upstream": upstream,
                }))
                .expect("stage key serializes"),
            );
            keys.insert(s, key);
        }
        Ok(Plan {
            order,
            keys,
            params,
            sim,
            harvest,
            net,
            verify,
            schedule,
            equi,
            section,
            force,
            nonlin,
            external,
        })
    }

    /// Run every stage of `plan` in dependency order.
    pub fn execute(&self, plan: &Plan, log: &mut dyn std::io::Write) -> CliResult<Vec<Outcome>> {
        if let Some(out) = &self.output {
            fs::create_dir_all(out)?;
            fs::write(out.join(MANIFEST_ECHO), self.manifest.to_toml())?;
        }
        let mut ctx = Context {
            exp: self,
            plan,
            runs: None,
            library: None,
            net: None,
            tests: None,
        };
        let mut outcomes = Vec::new();
        for &stage in &plan.order {
            let outcome = ctx.stage(stage)?;
            writeln!(
                log,
                "[{}] {} (key {})",
                stage.name(),
                if outcome.cached { "cached" } else { "done" },
                &outcome.key[..12]
            )?;
            for line in outcome.summary.lines() {
                writeln!(log, "  {line}")?;
            }
            outcomes.push(outcome);
        }
        Ok(outcomes)
    }

    /// Collect the stage records under the output directory into `report.json`.
    pub fn report(&self, log: &mut dyn std::io::Write) -> CliResult<Summary> {
        let out = self
            .output
            .as_ref()
            .ok_or_else(|| CliError::field("output", "report needs an output directory"))?;
        let mut stages = Vec::new();
        for s in ALL_STAGES {
            if let Some(r) = read_record(out, s) {
                stages.push(r);
            }
        }
        if stages.is_empty() {
            return Err(CliError::Validation(format!("no stage artifacts under {}", out.display())));
        }
        let failed: Vec<String> = stages
            .iter()
            .filter(|r| r.verdict == Some(false))
            .map(|r| r.stage.clone())
            .collect();
        let summary = Summary {
            name: self.manifest.name.clone(),
            manifest_hash: self.hash.clone(),
            verification_pass: failed.is_empty(),
            failed,
            stages,
            note: PROXY_NOTE,
        };
        write_json(&out.join(REPORT_FILE), &summary)?;
        writeln!(log, "report: {} ({} stages)", out.join(REPORT_FILE).display(), summary.stages.len())?;
        for r in &summary.stages {
            let verdict = match r.verdict {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "-",
            };
            writeln!(log, "  {:<22} {verdict:<4} {}", r.stage, r.summary.lines().next().unwrap_or(""))?;
        }
        Ok(summary)
    }
}

mod erased {
    use serde::Serialize;
    use serde_json::Value;

    pub trait Ser {
        fn value(&self) -> Value;
    }

    impl<T: Serialize> Ser for T {
        fn value(&self) -> Value {
            serde_json::to_value(self).expect("parameters serialize")
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub key: String,
    pub manifest_hash: String,
    /// `Some(pass)` for verification stages.
    pub verdict: Option<bool>,
    pub summary: String,
    /// Reports that embed the manifest hash.
    pub reports: Vec<String>,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub name: String,
    pub manifest_hash: String,
    pub verification_pass: bool,
    pub failed: Vec<String>,
    pub stages: Vec<StageRecord>,
    pub note: &'static str,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub stage: Stage,
    pub key: String,
    pub cached: bool,
    pub verdict: Option<bool>,
    pub summary: String,
}

fn read_record(out: &Path, stage: Stage) -> Option<StageRecord> {
    let bytes = fs::read(out.join(stage.name()).join(RECORD_FILE)).ok()?;
    serde_json::from_slice(&bytes).ok()
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

fn run_dir(root: &Path, i: usize) -> PathBuf {
    root.join(format!("run-{i:03}"))
}

fn load_runs(root: &Path, count: Option<usize>) -> CliResult<Vec<Trajectory>> {
    let count = match count {
        Some(c) => c,
        None => fs::read_dir(root)
            .map_err(|e| CliError::Io(format!("{}: {e}", root.display())))?
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().starts_with("run-"))
            .count(),
    };
    (0..count)
        .map(|i| {
            let dir = run_dir(root, i);
            load_run(&dir)
                .map(|(_, u)| u)
                .map_err(|e| CliError::core(&format!("loading {}", dir.display()), e))
        })
        .collect()
}

/// Integrate every point, keeping finished runs even when one fails.
fn integrate_all(
    sys: &SystemHandle,
    points: &[attractor_lab::phase::PhaseVector],
    horizon: f64,
) -> Vec<attractor_lab::error::Result<Trajectory>> {
    points.par_iter().map(|p| sys.integrate(p, 0.0, horizon)).collect()
}

struct Files {
    dir: Option<PathBuf>,
    written: Vec<String>,
    reports: Vec<String>,
}

impl Files {
    fn text(&mut self, name: &str, body: &str) -> CliResult<()> {
        if let Some(d) = &self.dir {
            fs::write(d.join(name), body)?;
            self.written.push(name.into());
        }
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> CliResult<()> {
        if let Some(d) = &self.dir {
            write_json(&d.join(name), value)?;
            self.written.push(name.into());
        }
        Ok(())
    }

    fn report(&mut self, name: &str, value: &Value) -> CliResult<()> {
        self.json(name, value)?;
        if self.dir.is_some() {
            self.reports.push(name.into());
        }
        Ok(())
    }
}

struct Context<'a> {
    exp: &'a Experiment,
    plan: &'a Plan,
    runs: Option<Vec<Trajectory>>,
    library: Option<PieceLibrary>,
    net: Option<TrackingNet>,
    tests: Option<Vec<Trajectory>>,
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn num(x: f64) -> String {
    format!("{x:.4e}")
}

impl<'a> Context<'a> {
    fn out(&self) -> Option<&'a Path> {
        self.exp.output.as_deref()
    }

    fn envelope(
        &self,
        stage: Stage,
        horizons: Value,
        tolerances: Value,
        disclaimer: &str,
        result: Value,
    ) -> Value {
        json!({
            "stage": stage.name(),
            "manifest_hash": self.exp.hash,
            "stage_key": self.plan.keys[&stage],
            "params": self.plan.params[&stage],
            "horizons": horizons,
            "tolerances": tolerances,
            "disclaimer": disclaimer,
            "result": result,
        })
    }

    fn runs(&mut self) -> CliResult<Vec<Trajectory>> {
        if let Some(r) = self.runs.take() {
            return Ok(r);
        }
        let out = self.out().ok_or_else(|| CliError::Io("library runs are not in memory".into()))?;
        let n = self.plan.sim.as_ref().expect("simulate planned").runs;
        load_runs(&out.join("simulate").join("runs"), Some(n))
    }

    fn library(&mut self) -> CliResult<&PieceLibrary> {
        if self.library.is_none() {
            let h = self.plan.harvest.clone().expect("harvest planned");
            let runs = self.runs()?;
            let lib = PieceLibrary::from_runs(runs, h.t0, h.duration, h.stride)
                .and_then(|l| l.with_metric(h.metric))
                .map_err(|e| CliError::core("harvest", e))?;
            self.library = Some(lib);
        }
        Ok(self.library.as_ref().expect("library set"))
    }

    fn net(&mut self) -> CliResult<&TrackingNet> {
        if self.net.is_none() {
            let net = if let Some(x) = &self.plan.external {
                let root = x
                    .path
                    .parent()
                    .and_then(Path::parent)
                    .ok_or_else(|| CliError::field("pipeline.verify_tracking.net", "expected <dir>/build_net/net.json"))?;
                let r = &x.record;
                let runs = load_runs(&root.join("simulate").join("runs"), None)?;
                let lib = PieceLibrary::from_runs(runs, r.t0, r.duration, r.stride)
                    .and_then(|l| l.with_metric(r.metric))
                    .map_err(|e| CliError::core("pipeline.verify_tracking.net", e))?;
                TrackingNet::from_record(r, &lib).map_err(|e| CliError::core("pipeline.verify_tracking.net", e))?
            } else {
                let out = self.out().ok_or_else(|| CliError::Io("net is not in memory".into()))?;
                let path = out.join("build_net").join("net.json");
                let record: NetRecord = serde_json::from_slice(&fs::read(&path)?)
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                let lib = self.library()?;
                TrackingNet::from_record(&record, lib).map_err(|e| CliError::core("build_net", e))?
            };
            self.net = Some(net);
        }
        Ok(self.net.as_ref().expect("net set"))
    }

    fn tests(&mut self) -> CliResult<&[Trajectory]> {
        if self.tests.is_none() {
            let out = self.out().ok_or_else(|| CliError::Io("test runs are not in memory".into()))?;
            let n = self.plan.verify.as_ref().expect("verify planned").tests;
            self.tests = Some(load_runs(&out.join("verify_tracking").join("tests"), Some(n))?);
        }
        Ok(self.tests.as_deref().expect("tests set"))
    }

    fn stage(&mut self, stage: Stage) -> CliResult<Outcome> {
        let key = self.plan.keys[&stage].clone();
        let dir = self.out().map(|o| o.join(stage.name()));
        if let Some(d) = &dir {
            if let Some(mut rec) = read_record(self.out().expect("output"), stage) {
                if rec.key == key {
                    if rec.manifest_hash != self.exp.hash {
                        for name in &rec.reports {
                            let path = d.join(name);
                            let mut v: Value = serde_json::from_slice(&fs::read(&path)?)
                                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                            v["manifest_hash"] = json!(self.exp.hash);
                            write_json(&path, &v)?;
                        }
                        rec.manifest_hash = self.exp.hash.clone();
                        write_json(&d.join(RECORD_FILE), &rec)?;
                    }
                    return Ok(Outcome {
                        stage,
                        key,
                        cached: true,
                        verdict: rec.verdict,
                        summary: rec.summary,
                    });
                }
            }
            if d.exists() {
                fs::remove_dir_all(d)?;
            }
            fs::create_dir_all(d)?;
        }
        let mut files = Files {
            dir: dir.clone(),
            written: Vec::new(),
            reports: Vec::new(),
        };
        let (verdict, summary) = match stage {
            Stage::Simulate => self.simulate(&mut files)?,
            Stage::Harvest => self.harvest(&mut files)?,
            Stage::BuildNet => self.build_net(&mut files)?,
            Stage::VerifyTracking => self.verify(&mut files)?,
            Stage::Schedule => self.schedule(&mut files)?,
            Stage::Equicontinuity => self.equicontinuity(&mut files)?,
            Stage::SectionCheck => self.section(&mut files)?,
            Stage::ClassifyForce => self.classify_force(&mut files)?,
            Stage::ClassifyNonlinearity => self.classify_nonlinearity(&mut files)?,
        };
        if let Some(d) = &dir {
            let rec = StageRecord {
                stage: stage.name().into(),
                key: key.clone(),
                manifest_hash: self.exp.hash.clone(),
                verdict,
                summary: summary.clone(),
                reports: files.reports,
                files: files.written,
            };
            write_json(&d.join(RECORD_FILE), &rec)?;
        }
        Ok(Outcome {
            stage,
            key,
            cached: false,
            verdict,
            summary,
        })
    }

    /// Integrate `count` random points and store them under `dir/<sub>`.
    fn ensemble(
        &self,
        files: &Files,
        sub: &str,
        context: &str,
        (count, norm, max_mode, seed, horizon): (usize, f64, usize, u64, f64),
    ) -> CliResult<Vec<Trajectory>> {
        let sys = self.exp.system();
        let basis = sys.basis();
        let init = random_initial_data(&basis, count, norm, max_mode, seed).map_err(|e| CliError::core(context, e))?;
        let results = integrate_all(sys, &init.points, horizon);
        let mut runs = Vec::with_capacity(count);
        let mut failure = None;
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(u) => {
                    if let Some(d) = &files.dir {
                        let m = RunManifest::for_trajectory(&u, self.exp.manifest.system.solver.name(), Some(seed), i);
                        save_run(&run_dir(&d.join(sub), i), &u, &m).map_err(|e| CliError::core(context, e))?;
                    }
                    runs.push(u);
                }
                Err(e) => {
                    if failure.is_none() {
                        failure = Some(CliError::core(&format!("{context} run {i}"), e));
                    }
                }
            }
        }
        match failure {
            Some(e) => Err(e),
            None => Ok(runs),
        }
    }

    fn simulate(&mut self, files: &mut Files) -> CliResult<(Option<bool>, String)> {
        let p = self.plan.sim.clone().expect("simulate planned");
        let runs = self.ensemble(files, "runs", "simulate", (p.runs, p.norm, p.max_mode, p.seed, p.horizon))?;
        let ball = self.exp.system().absorbing_ball();
        let norms: Vec<Vec<f64>> = runs.iter().map(Trajectory::norms).collect();
        let per_run: Vec<Value> = norms
            .iter()
            .enumerate()
            .map(|(i, n)| {
                json!({
                    "run": i,
                    "initial_norm": n[0],
                    "final_norm": n[n.len() - 1],
                    "max_norm": n.iter().cloned().fold(0.0, f64::max),
                    "max_norm_after_entry": max_after(&runs[i], n, p.entry_time),
                })
            })
            .collect();
        let result = json!({ "absorbing_ball": ball, "entry_time": p.entry_time, "runs": per_run });
        let env = self.envelope(
            Stage::Simulate,
            json!({ "horizon": p.horizon, "sample_dt": self.exp.system().sample_dt(), "dt": self.exp.manifest.system.dt }),
            json!({}),
            SIMULATION_NOTE,
            result,
        );
        files.report("simulate.json", &env)?;
        let mut csv = String::from("t");
        for i in 0..runs.len() {
            let _ = write!(csv, ",run{i}");
        }
        csv.push('\n');
        for k in 0..runs[0].len() {
            let _ = write!(csv, "{}", runs[0].time(k));
            for n in &norms {
                let _ = write!(csv, ",{}", n[k]);
            }
            csv.push('\n');
        }
        files.text("norms.csv", &csv)?;
        let summary = format!(
            "{} runs to t = {} from |u0| = {} (R = {}, entry time {})",
            p.runs,
            p.horizon,
            num(p.norm),
            num(ball.radius),
            num(p.entry_time)
        );
        self.runs = Some(runs);
        Ok((None, summary))
    }

    fn harvest(&mut self, files: &mut Files) -> CliResult<(Option<bool>, String)> {
        let h = self.plan.harvest.clone().expect("harvest planned");
        let lib = self.library()?;
        let windows: Vec<Value> = lib
            .pieces()
            .iter()
            .map(|p| json!({ "run": p.run(), "window_start": p.window_start() }))
            .collect();
        let result = json!({ "pieces": lib.len(), "runs": lib.runs(), "windows": windows, "note": PROXY_NOTE });
        let summary = format!("{} pieces of length {} from t0 = {} (stride {})", lib.len(), h.duration, h.t0, h.stride);
        let env = self.envelope(
            Stage::Harvest,
            json!({ "t0": h.t0, "duration": h.duration }),
            json!({}),
            PROXY_NOTE,
            result,
        );
        files.report("harvest.json", &env)?;
        Ok((None, summary))
    }

    fn build_net(&mut self, files: &mut Files) -> CliResult<(Option<bool>, String)> {
        let p = self.plan.net.clone().expect("net planned");
        let lib = self.library()?;
        let d = lib.distance_matrix();
        let diameter = d.diameter();
        let epsilon = match (p.epsilon, p.epsilon_fraction) {
            (Some(e), _) => e,
            (None, Some(f)) => f * diameter,
            (None, None) => unreachable!(),
        };
        let net = build_tracking_net_with(lib, &d, epsilon).map_err(|e| CliError::core("build_net", e))?;
        let (lib_t0, lib_duration, lib_len) = (lib.t0(), lib.duration(), lib.len());
        let record = net.record();
        files.json("net.json", &record)?;
        if p.dump_matrix {
            files.text("distances.csv", &d.to_csv())?;
        }
        let result = json!({
            "epsilon": epsilon,
            "diameter": diameter,
            "library_size": lib_len,
            "net_size": net.len(),
            "coverage": net.coverage(),
            "members": record.members,
            "note": PROXY_NOTE,
        });
        let env = self.envelope(
            Stage::BuildNet,
            json!({ "t0": lib_t0, "duration": lib_duration }),
            json!({ "epsilon": epsilon, "cover_radius": 0.5 * epsilon }),
            PROXY_NOTE,
            result,
        );
        files.report("build_net.json", &env)?;
        let summary = format!(
            "{} members for {} pieces at ε = {} (diameter {}, coverage {})",
            net.len(),
            lib_len,
            num(epsilon),
            num(diameter),
            num(net.coverage())
        );
        self.net = Some(net);
        Ok((None, summary))
    }

    fn verify(&mut self, files: &mut Files) -> CliResult<(Option<bool>, String)> {
        let p = self.plan.verify.clone().expect("verify planned");
        let tests = self.ensemble(files, "tests", "verify_tracking", (p.tests, p.norm, p.max_mode, p.seed, p.horizon))?;
        let net = self.net()?;
        let report = verify_tracking(net, &tests, p.t0).map_err(|e| CliError::core("verify_tracking", e))?;
        let mut csv = String::from("test,window_start,distance,nearest\n");
        for t in &report.tests {
            for ((s, d), n) in t.window_starts.iter().zip(&t.distances).zip(&t.nearest) {
                let _ = writeln!(csv, "{},{s},{d},{n}", t.test);
            }
        }
        files.text("tracking.csv", &csv)?;
        let env = self.envelope(
            Stage::VerifyTracking,
            json!({ "t0": p.t0, "horizon": p.horizon, "duration": report.duration, "stride": report.stride }),
            json!({ "epsilon": report.epsilon }),
            PROXY_NOTE,
            serde_json::to_value(&report).expect("report serializes"),
        );
        files.report("tracking.json", &env)?;
        let summary = format!(
            "tracking: {} ({}/{} tests, max window distance {} vs ε = {}, net of {})",
            if report.pass { "PASS" } else { "FAIL" },
            report.passed,
            report.tests.len(),
            num(report.max_distance),
            num(report.epsilon),
            report.net_size
        );
        self.tests = Some(tests);
        Ok((Some(report.pass), summary))
    }

    fn schedule(&mut self, files: &mut Files) -> CliResult<(Option<bool>, String)> {
        let p = self.plan.schedule.clone().expect("schedule planned");
        self.tests()?;
        self.net()?;
        let u = &self.tests.as_ref().expect("tests loaded")[p.test];
        let net = self.net.as_ref().expect("net loaded");
        let entries = tracking_schedule(net, u, p.j0, p.j_end).map_err(|e| CliError::core("schedule", e))?;
        let mut csv = String::from("j,window_start,index,distance\n");
        for e in &entries {
            let _ = writeln!(csv, "{},{},{},{}", e.j, e.window_start, e.index, e.distance);
        }
        files.text("schedule.csv", &csv)?;
        let used: BTreeSet<usize> = entries.iter().map(|e| e.index).collect();
        let max = entries.iter().map(|e| e.distance).fold(0.0, f64::max);
        let env = self.envelope(
            Stage::Schedule,
            json!({ "duration": net.duration(), "t_end": u.t_end() }),
            json!({ "epsilon": net.epsilon() }),
            PROXY_NOTE,
            json!({ "test": p.test, "entries": entries, "members_used": used, "max_distance": max }),
        );
        files.report("schedule.json", &env)?;
        Ok((
            None,
            format!(
                "{} windows j = {}..={} of test {}, {} distinct members, max distance {}",
                entries.len(),
                p.j0,
                p.j_end,
                p.test,
                used.len(),
                num(max)
            ),
        ))
    }

    fn equicontinuity(&mut self, files: &mut Files) -> CliResult<(Option<bool>, String)> {
        let p = self.plan.equi.clone().expect("equicontinuity planned");
        let lib = self.library()?;
        let table = equicontinuity_modulus(lib, &p.gaps).map_err(|e| CliError::core("equicontinuity", e))?;
        let duration = lib.duration();
        let mut csv = String::from("gap,theta,theta_exact\n");
        for ((l, t), x) in table.gaps.iter().zip(&table.theta).zip(&table.theta_exact) {
            let _ = writeln!(csv, "{l},{t},{x}");
        }
        files.text("theta.csv", &csv)?;
        let monotone = table.is_monotone();
        let summary = format!(
            "θ over {} pieces: nondecreasing {}, θ({}) = {}, θ({}) = {}",
            table.pieces,
            yes(monotone),
            table.gaps[0],
            num(table.theta[0]),
            table.gaps[table.gaps.len() - 1],
            num(table.theta[table.theta.len() - 1])
        );
        let env = self.envelope(
            Stage::Equicontinuity,
            json!({ "duration": duration }),
            json!({}),
            PROXY_NOTE,
            serde_json::to_value(&table).expect("table serializes"),
        );
        files.report("theta.json", &env)?;
        Ok((None, summary))
    }

    fn section(&mut self, files: &mut Files) -> CliResult<(Option<bool>, String)> {
        let p = self.plan.section.clone().expect("section planned");
        let v = self.plan.verify.clone().expect("verify planned");
        self.tests()?;
        let epsilon = self.net()?.epsilon();
        let omega = snapshots(self.tests.as_ref().expect("tests loaded"), v.t0, v.horizon, p.stride)
            .map_err(|e| CliError::core("section_check", e))?;
        let tol = p.tolerance.unwrap_or(2.0 * epsilon);
        let lib = self.library()?;
        let report = section_check(lib, &p.times, &omega, tol).map_err(|e| CliError::core("section_check", e))?;
        let mut csv = String::from("t,distance,section_to_omega,omega_to_section\n");
        for i in 0..report.times.len() {
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                report.times[i], report.distances[i], report.section_to_omega[i], report.omega_to_section[i]
            );
        }
        files.text("section.csv", &csv)?;
        let summary = format!(
            "section: {} (max Hausdorff distance {} vs tolerance {}, ω sample of {} points)",
            if report.pass { "PASS" } else { "FAIL" },
            num(report.max),
            num(tol),
            omega.len()
        );
        let env = self.envelope(
            Stage::SectionCheck,
            json!({ "omega_from": v.t0, "omega_to": v.horizon, "omega_stride": p.stride }),
            json!({ "tolerance": tol, "epsilon": epsilon }),
            PROXY_NOTE,
            serde_json::to_value(&report).expect("report serializes"),
        );
        files.report("section.json", &env)?;
        Ok((Some(report.pass), summary))
    }

    fn classify_force(&mut self, files: &mut Files) -> CliResult<(Option<bool>, String)> {
        let p = self.plan.force.clone().expect("classify_force planned");
        let sym = self.exp.system().symbol();
        let report = classify_force(sym, &p.deltas, &p.probe).map_err(|e| CliError::core("classify_force", e))?;
        let mut csv = String::from("delta,defect\n");
        for (d, x) in &report.defects {
            let _ = writeln!(csv, "{d},{x}");
        }
        files.text("defects.csv", &csv)?;
        let mut summary = format!(
            "normal: {} (defect table attached)\ntranslation bounded: {} (unit-window bound {}, half horizon {})",
            yes(report.normal),
            yes(report.translation_bounded),
            num(report.translation_bound),
            num(report.half_horizon_bound)
        );
        if let Some(t) = report.truth {
            let _ = write!(summary, "\nground truth: {}", serde_json::to_value(t).expect("class serializes").as_str().unwrap_or(""));
        }
        let env = self.envelope(
            Stage::ClassifyForce,
            json!({ "probe_horizon": p.probe.horizon, "probe_step": p.probe.step }),
            json!({ "defect": report.tolerance }),
            SAMPLED_DISCLAIMER,
            serde_json::to_value(&report).expect("report serializes"),
        );
        files.report("force.json", &env)?;
        Ok((None, summary))
    }

    fn classify_nonlinearity(&mut self, files: &mut Files) -> CliResult<(Option<bool>, String)> {
        let p = self.plan.nonlin.clone().expect("classify_nonlinearity planned");
        let f = self
            .exp
            .system()
            .symbol()
            .nonlinearity()
            .ok_or_else(|| CliError::field("symbol.nonlinearity", "no nonlinearity to classify"))?;
        let ctx = |e| CliError::core("classify_nonlinearity", e);
        let times = log_times(p.t_max, p.times);
        let table = forcing::equicontinuity_modulus(f, p.radius, &times, p.resolution, p.levels).map_err(ctx)?;
        let limit_times = log_times(p.limit_t_max, p.limit_times);
        let limit = pointwise_limit_probe(f, &p.limit_v, &limit_times, p.limit_tol).map_err(ctx)?;
        let v_grid: Vec<f64> = (0..=200).map(|i| -p.radius + p.radius * i as f64 / 100.0).collect();
        let validation = validate_nonlinearity(f, &v_grid, &times).map_err(ctx)?;
        let mut csv = String::from("gap,theta\n");
        for (l, t) in table.gaps.iter().zip(&table.theta) {
            let _ = writeln!(csv, "{l},{t}");
        }
        files.text("theta.csv", &csv)?;
        let mut csv = String::from("v,limit,spread\n");
        for ((v, l), s) in limit.v.iter().zip(&limit.limit).zip(&limit.spread) {
            let l = l.map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(csv, "{v},{l},{s}");
        }
        files.text("limit.csv", &csv)?;
        let diverging = limit.limit.iter().filter(|l| l.is_none()).count();
        let mut summary = format!(
            "equicontinuity: {} (θ table attached)\nθ({}) = {}, θ({}) = {}",
            if table.pass { "PASS" } else { "FAIL" },
            table.gaps[0],
            num(table.theta[0]),
            table.gaps[table.gaps.len() - 1],
            num(table.theta[table.theta.len() - 1])
        );
        if let Some((a, b, s)) = limit.jump {
            let _ = write!(summary, "\npointwise limit: largest jump {} between v = {a} and v = {b}", num(s));
        }
        let _ = write!(
            summary,
            "\npointwise limit: {} of {} v values without a limit\ndeclared constants: {}",
            diverging,
            limit.v.len(),
            if validation.pass { "ok" } else { "violated on the grid" }
        );
        let env = self.envelope(
            Stage::ClassifyNonlinearity,
            json!({ "t_max": p.t_max, "limit_t_max": p.limit_t_max }),
            json!({ "limit": p.limit_tol, "modulus_ratio": 0.1 }),
            SAMPLED_DISCLAIMER,
            json!({ "modulus": table, "limit": limit, "validation": validation }),
        );
        files.report("nonlinearity.json", &env)?;
        Ok((None, summary))
    }
}

fn max_after(u: &Trajectory, norms: &[f64], t: f64) -> Option<f64> {
    if !t.is_finite() {
        return None;
    }
    let m = norms
        .iter()
        .enumerate()
        .filter(|(i, _)| u.time(*i) >= t)
        .map(|(_, n)| *n)
        .fold(f64::NEG_INFINITY, f64::max);
    m.is_finite().then_some(m)
}
