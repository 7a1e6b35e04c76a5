//! Experiment manifests: one TOML file per experiment.

use std::path::{Path, PathBuf};

use attractor_lab::error::Error as CoreError;
use attractor_lab::expr::Expr;
use attractor_lab::forcing::{builtin_force, Force, ForceParams, ForceTerm, Symbol, TimeProfile};
use attractor_lab::nse2d::{NseParams, NseSystem};
use attractor_lab::phase::{Basis, MetricKind};
use attractor_lab::rds::{GrowthConstants, Nonlinearity, RdsParams, RdsSystem};
use attractor_lab::systems::SystemHandle;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Nse,
    Rds,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Nse => "nse",
            Solver::Rds => "rds",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Artifact directory, relative to the manifest file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub system: SystemBlock,
    #[serde(default)]
    pub symbol: SymbolBlock,
    #[serde(default)]
    pub pipeline: PipelineBlock,
}

fn default_name() -> String {
    "experiment".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub solver: Solver,
    /// Box side (nse, default 2π) or interval length (rds, default π).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    /// Truncation `K` (nse) or number of sine modes `M` (rds).
    pub modes: usize,
    pub dt: f64,
    pub sample_dt: f64,
    /// Viscosity, nse only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    /// Diffusion coefficient, rds only (default 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<f64>,
    /// 2/3-rule dealiasing, nse only (default true).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dealias: Option<bool>,
    /// Unit-window bound of `‖g‖²_{V'}`; measured on the default probe when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceTermBlock {
    /// `φ(x)` (rds) or stream function `ψ(x, y)` (nse).
    pub space: String,
    /// `p(t)`, in `t` and `T = max(t, 0)`.
    pub time: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// Builtin force: zero, constant, quasiperiodic, decaying, spike_train.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub force_terms: Vec<ForceTermBlock>,
    /// Builtin nonlinearity: zero, linear, cubic, chafee_infante, example1..3.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinearity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinearity_expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<GrowthConstants>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harvest: Option<HarvestBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub build_net: Option<NetBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify_tracking: Option<VerifyBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equicontinuity: Option<EquicontinuityBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section_check: Option<SectionBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify_force: Option<ClassifyForceBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify_nonlinearity: Option<ClassifyNonlinearityBlock>,
}

impl PipelineBlock {
    pub fn is_empty(&self) -> bool {
        *self == PipelineBlock::default()
    }
}

macro_rules! block {
    ($(#[$m:meta])* $name:ident { $($(#[$fm:meta])* $field:ident : $ty:ty),* $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $(
                $(#[$fm])*
                #[serde(default, skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }
    };
}

block!(
    /// Library runs from random initial data.
    SimulateBlock {
        /// Number of runs (default 4).
        runs: usize,
        /// Norm of the initial data (default: absorbing radius R).
        norm: f64,
        /// Highest excited wavenumber (default 4).
        max_mode: usize,
        /// End time (default 50·t̄ on the sample grid).
        horizon: f64,
    }
);

block!(
    /// Pieces `[t0 + j·stride, t0 + j·stride + duration]` of the library runs.
    HarvestBlock {
        /// Transient (default 5·t̄ on the sample grid).
        t0: f64,
        /// Piece length T (default 1).
        duration: f64,
        /// Window stride (default T/4).
        stride: f64,
        /// strong (default) or weak.
        metric: MetricKind,
        /// Base of the weak weights (default 2).
        weight_base: f64,
    }
);

block!(
    /// Greedy ε-net over the library.
    NetBlock {
        /// Absolute ε; excludes `epsilon_fraction`.
        epsilon: f64,
        /// ε as a fraction of the library diameter (default 0.1).
        epsilon_fraction: f64,
        /// Also write the library distance matrix as CSV.
        dump_matrix: bool,
    }
);

block!(
    /// Fresh test runs checked against the net.
    VerifyBlock {
        /// Number of test runs (default 4).
        tests: usize,
        /// Seed of the test data (default: seed + 1).
        seed: u64,
        /// Norm of the test data (default: simulate norm).
        norm: f64,
        /// Highest excited wavenumber (default: simulate max_mode).
        max_mode: usize,
        /// End time (default: simulate horizon).
        horizon: f64,
        /// Windows start after t0 (default: harvest t0).
        t0: f64,
        /// Net file of another experiment (`<dir>/build_net/net.json`).
        net: String,
    }
);

block!(
    /// Nearest-member schedule of one test run.
    ScheduleBlock {
        /// Test run index (default 0).
        test: usize,
        /// First window index (default ⌈t0/T⌉).
        j0: usize,
        /// Last window index (default: last whole window).
        j_end: usize,
    }
);

block!(
    /// Modulus θ(l) of the harvested pieces.
    EquicontinuityBlock {
        /// Gaps l, multiples of the sample spacing (default 0, dt, 2dt, 4dt, T/4, T/2, T).
        gaps: Vec<f64>,
    }
);

block!(
    /// Piece sections against the ω-limit sample of the test runs.
    SectionBlock {
        /// Section times within [0, T] (default 0, T/2, T).
        times: Vec<f64>,
        /// Hausdorff tolerance (default 2ε).
        tolerance: f64,
        /// Snapshot spacing of the ω sample (default: harvest stride).
        stride: f64,
    }
);

block!(
    /// Window norms of the force on a finite probe.
    ClassifyForceBlock {
        /// Probe horizon (default 1000).
        horizon: f64,
        /// Spacing of window starts (default 1/16).
        step: f64,
        /// Window lengths δ (default 2^-k, k = 0..=20).
        deltas: Vec<f64>,
    }
);

block!(
    /// Hull diagnostics of the nonlinearity (rds only).
    ClassifyNonlinearityBlock {
        /// Range |v| ≤ radius (default 1).
        radius: f64,
        /// v grid spacing (default 1e-4).
        resolution: f64,
        /// Gap levels l = radius·2^-k (default 10).
        levels: usize,
        /// Last sampled time (default 1e4).
        t_max: f64,
        /// Number of log-spaced times (default 32).
        times: usize,
        /// Last time of the limit probe (default 1e6).
        limit_t_max: f64,
        /// Number of limit probe times (default 64).
        limit_times: usize,
        /// Relative spread counted as convergence (default 1e-3).
        limit_tol: f64,
        /// v values of the limit probe (default: `limit_points` uniform on [-radius, radius]).
        limit_v: Vec<f64>,
        /// Default 65.
        limit_points: usize,
    }
);

impl ExperimentManifest {
    pub fn from_toml_str(src: &str) -> CliResult<Self> {
        toml::from_str(src).map_err(|e| CliError::Validation(format!("manifest: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("manifest {}: {e}", path.display())))?;
        Self::from_toml_str(&src)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("manifest serializes to TOML")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("manifest serializes to JSON"))
    }

    /// Directory for artifacts: `output` relative to `base`.
    pub fn output_dir(&self, base: &Path) -> Option<PathBuf> {
        self.output.as_ref().map(|o| base.join(o))
    }

    pub fn basis(&self) -> CliResult<Basis> {
        let s = &self.system;
        let b = match s.solver {
            Solver::Nse => Basis::fourier2d(s.length.unwrap_or(2.0 * std::f64::consts::PI), s.modes),
            Solver::Rds => Basis::sine(s.length.unwrap_or(std::f64::consts::PI), s.modes),
        };
        b.validate().map_err(|e| CliError::field("system", e))?;
        Ok(b)
    }

    pub fn symbol(&self) -> CliResult<Symbol> {
        let basis = self.basis()?;
        let sym = &self.symbol;
        let force = self.force(&basis)?;
        let nonlinearity = self.nonlinearity()?;
        if self.system.solver == Solver::Nse && nonlinearity.is_some() {
            return Err(CliError::field("symbol.nonlinearity", "only rds systems take a nonlinearity"));
        }
        let nonlinearity = match (self.system.solver, nonlinearity) {
            (Solver::Rds, None) => Some(Nonlinearity::builtin("zero", 2.0).expect("zero builtin")),
            (_, n) => n,
        };
        let id = sym.id.clone().unwrap_or_else(|| {
            let f = if sym.force_terms.is_empty() {
                sym.force.clone().unwrap_or_else(|| "zero".into())
            } else {
                "expr".into()
            };
            match &nonlinearity {
                Some(n) => format!("{f}+{}", n.tag()),
                None => f,
            }
        });
        Ok(Symbol::new(id, force, nonlinearity))
    }

    fn force(&self, basis: &Basis) -> CliResult<Force> {
        let sym = &self.symbol;
        if !sym.force_terms.is_empty() {
            if sym.force.is_some() {
                return Err(CliError::field("symbol.force", "give either a builtin force or force_terms, not both"));
            }
            let mut terms = Vec::with_capacity(sym.force_terms.len());
            for (i, t) in sym.force_terms.iter().enumerate() {
                let spatial = attractor_lab::forcing::spatial_from_expr(basis, &t.space)
                    .map_err(|e| CliError::field(&format!("symbol.force_terms[{i}].space"), e))?;
                let profile = Expr::parse(&t.time)
                    .map_err(|e| CliError::field(&format!("symbol.force_terms[{i}].time"), e))?;
                terms.push(ForceTerm {
                    profile: TimeProfile::Expr(profile),
                    spatial,
                });
            }
            return Force::new(*basis, terms).map_err(|e| CliError::field("symbol.force_terms", e));
        }
        let defaults = ForceParams::default();
        let params = ForceParams {
            amplitude: sym.amplitude.unwrap_or(defaults.amplitude),
            omega: sym.omega.unwrap_or(defaults.omega),
            rate: sym.rate.unwrap_or(defaults.rate),
        };
        let name = sym.force.as_deref().unwrap_or("zero");
        builtin_force(name, basis, params).map_err(|e| CliError::field("symbol.force", e))
    }

    fn nonlinearity(&self) -> CliResult<Option<Nonlinearity>> {
        let sym = &self.symbol;
        match (&sym.nonlinearity, &sym.nonlinearity_expr) {
            (Some(_), Some(_)) => Err(CliError::field(
                "symbol.nonlinearity_expr",
                "give either a builtin nonlinearity or an expression, not both",
            )),
            (None, Some(src)) => {
                let c = sym
                    .constants
                    .ok_or_else(|| CliError::field("symbol.constants", "required with nonlinearity_expr"))?;
                Nonlinearity::from_expr(src, c)
                    .map(Some)
                    .map_err(|e| CliError::field("symbol.nonlinearity_expr", e))
            }
            (Some(name), None) => {
                if sym.constants.is_some() {
                    return Err(CliError::field("symbol.constants", "only used with nonlinearity_expr"));
                }
                let n = if name == "chafee_infante" {
                    let lambda = sym
                        .lambda
                        .ok_or_else(|| CliError::field("symbol.lambda", "required by chafee_infante"))?;
                    Nonlinearity::chafee_infante(lambda)
                } else {
                    if sym.lambda.is_some() {
                        return Err(CliError::field("symbol.lambda", "only used by chafee_infante"));
                    }
                    Nonlinearity::builtin(name, sym.p.unwrap_or(2.0))
                };
                n.map(Some).map_err(|e| CliError::field("symbol.nonlinearity", e))
            }
            (None, None) => Ok(None),
        }
    }

    /// Build the solver described by the `system` and `symbol` blocks.
    pub fn system(&self) -> CliResult<SystemHandle> {
        let s = &self.system;
        let symbol = self.symbol()?;
        let field = |e: CoreError| CliError::field("system", e);
        match s.solver {
            Solver::Nse => {
                if s.diffusion.is_some() {
                    return Err(CliError::field("system.diffusion", "rds only; nse uses nu"));
                }
                let nu = s.nu.ok_or_else(|| CliError::field("system.nu", "required for nse"))?;
                let params = NseParams {
                    length: s.length.unwrap_or(2.0 * std::f64::consts::PI),
                    nu,
                    modes: s.modes,
                    dt: s.dt,
                    dealias: s.dealias.unwrap_or(true),
                };
                let sys = match s.g_bound {
                    Some(g) => NseSystem::with_g_bound(params, symbol, s.sample_dt, g),
                    None => NseSystem::new(params, symbol, s.sample_dt),
                };
                sys.map(SystemHandle::Nse).map_err(field)
            }
            Solver::Rds => {
                if s.nu.is_some() {
                    return Err(CliError::field("system.nu", "nse only; rds uses diffusion"));
                }
                if s.dealias.is_some() {
                    return Err(CliError::field("system.dealias", "nse only"));
                }
                let params = RdsParams {
                    length: s.length.unwrap_or(std::f64::consts::PI),
                    diffusion: s.diffusion.unwrap_or(1.0),
                    modes: s.modes,
                    dt: s.dt,
                };
                let sys = match s.g_bound {
                    Some(g) => RdsSystem::with_g_bound(params, symbol, s.sample_dt, g),
                    None => RdsSystem::new(params, symbol, s.sample_dt),
                };
                sys.map(SystemHandle::Rds).map_err(field)
            }
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [system]
        solver = "rds"
        modes = 8
        dt = 0.01
        sample_dt = 0.05
    "#;

    #[test]
    fn minimal_manifest_parses_with_defaults() {
        let m = ExperimentManifest::from_toml_str(MINIMAL).unwrap();
        assert_eq!(m.name, "experiment");
        assert!(m.pipeline.is_empty());
        let sys = m.system().unwrap();
        assert!(matches!(sys, SystemHandle::Rds(_)));
    }

    #[test]
    fn toml_echo_round_trips() {
        let mut m = ExperimentManifest::from_toml_str(MINIMAL).unwrap();
        m.pipeline.harvest = Some(HarvestBlock {
            duration: Some(2.0),
            metric: Some(MetricKind::Weak),
            ..Default::default()
        });
        let back = ExperimentManifest::from_toml_str(&m.to_toml()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.hash(), m.hash());
    }

    #[test]
    fn unknown_fields_are_rejected_with_location() {
        let err = ExperimentManifest::from_toml_str(&format!("{MINIMAL}\nstep = 3\n")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("step"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn field_context_in_semantic_errors() {
        let m = ExperimentManifest::from_toml_str(&MINIMAL.replace("rds", "nse")).unwrap();
        assert!(m.system().unwrap_err().to_string().contains("system.nu"));
        let mut m = ExperimentManifest::from_toml_str(MINIMAL).unwrap();
        m.symbol.force = Some("sawtooth".into());
        assert!(m.system().unwrap_err().to_string().contains("symbol.force"));
    }
}
