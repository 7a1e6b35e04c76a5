//! Command-line front end. Every flag overrides the manifest field of the same name.

use std::io::Write;
use std::path::{Path, PathBuf};

use attractor_lab::phase::MetricKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{CliError, CliResult};
use crate::manifest::{ExperimentManifest, Solver, SystemBlock};
use crate::pipeline::{declared_stages, Experiment, Stage, MANIFEST_ECHO};

const UNITS: &str = "Units: times (t0, horizon, duration, stride, dt, gaps) are in nondimensional \
model time; lengths in domain units; norms and distances are L² norms of the state (velocity \
for nse, u for rds). Exit codes: 0 success, 1 validation, 2 solver failure, 3 verification failure.";

#[derive(Debug, Parser)]
#[command(name = "attractor-lab", version, about = "Trajectory attractor experiments: simulate, harvest, build ε-nets, verify tracking", after_help = UNITS)]
pub struct Cli {
    /// Upper bound on worker threads (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment manifest (TOML)
    pub manifest: PathBuf,
    /// Artifact directory [overrides `output`]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed of the library initial data [overrides `seed`]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct OptionalManifest {
    /// Experiment manifest (TOML); a sine basis with M = 64 on [0, π] when absent
    pub manifest: Option<PathBuf>,
    /// Artifact directory [overrides `output`]; nothing is written without one
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MetricArg {
    Strong,
    Weak,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SolverArg {
    Nse,
    Rds,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every stage declared in the manifest, then write report.json
    Run(Common),
    /// Integrate the library runs [pipeline.simulate]
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of runs
        #[arg(long)]
        runs: Option<usize>,
        /// L² norm of the initial data
        #[arg(long)]
        norm: Option<f64>,
        /// Highest excited wavenumber of the initial data
        #[arg(long)]
        max_mode: Option<usize>,
        /// End time (model time units)
        #[arg(long, value_name = "TIME")]
        horizon: Option<f64>,
    },
    /// Cut the library runs into pieces [pipeline.harvest]
    Harvest {
        #[command(flatten)]
        common: Common,
        /// Transient before the first piece (model time units)
        #[arg(long, value_name = "TIME")]
        t0: Option<f64>,
        /// Piece length T (model time units)
        #[arg(long, value_name = "TIME")]
        duration: Option<f64>,
        /// Spacing of piece starts (model time units)
        #[arg(long, value_name = "TIME")]
        stride: Option<f64>,
        /// Point metric of the trajectory distance
        #[arg(long, value_enum)]
        metric: Option<MetricArg>,
    },
    /// Greedy ε-net over the pieces [pipeline.build_net]
    BuildNet {
        #[command(flatten)]
        common: Common,
        /// Absolute ε (L² distance)
        #[arg(long, conflicts_with = "epsilon_fraction")]
        epsilon: Option<f64>,
        /// ε as a fraction of the library diameter
        #[arg(long)]
        epsilon_fraction: Option<f64>,
        /// Also write the piece distance matrix as CSV
        #[arg(long)]
        dump_matrix: bool,
    },
    /// Check fresh runs against the net [pipeline.verify_tracking]
    VerifyTracking {
        #[command(flatten)]
        common: Common,
        /// Number of fresh test runs
        #[arg(long)]
        tests: Option<usize>,
        /// Seed of the test initial data
        #[arg(long)]
        test_seed: Option<u64>,
        /// Windows start after this time (model time units)
        #[arg(long, value_name = "TIME")]
        t0: Option<f64>,
        /// End time of the test runs (model time units)
        #[arg(long, value_name = "TIME")]
        horizon: Option<f64>,
        /// net.json of another experiment instead of this one's net
        #[arg(long, value_name = "FILE")]
        net: Option<PathBuf>,
    },
    /// Nearest-member index sequence of one test run [pipeline.schedule]
    Schedule {
        #[command(flatten)]
        common: Common,
        /// Test run index
        #[arg(long)]
        test: Option<usize>,
        /// First window index j (window [jT, (j+1)T])
        #[arg(long)]
        j0: Option<usize>,
        /// Last window index
        #[arg(long)]
        j_end: Option<usize>,
    },
    /// Modulus θ(l) of the pieces [pipeline.equicontinuity]
    Equicontinuity {
        #[command(flatten)]
        common: Common,
        /// Gaps l (model time units, multiples of sample_dt), comma separated
        #[arg(long, value_delimiter = ',')]
        gaps: Option<Vec<f64>>,
    },
    /// Piece sections against the ω-limit sample [pipeline.section_check]
    SectionCheck {
        #[command(flatten)]
        common: Common,
        /// Section times within [0, T] (model time units), comma separated
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        /// Hausdorff tolerance (L² distance)
        #[arg(long)]
        tolerance: Option<f64>,
        /// Snapshot spacing of the ω sample (model time units)
        #[arg(long, value_name = "TIME")]
        stride: Option<f64>,
    },
    /// Normality and translation boundedness of the force [pipeline.classify_force]
    ClassifyForce {
        #[command(flatten)]
        common: OptionalManifest,
        /// Builtin force: zero, constant, quasiperiodic, decaying, spike_train
        #[arg(long)]
        force: Option<String>,
        /// V' norm of each force term
        #[arg(long)]
        amplitude: Option<f64>,
        /// First frequency of the quasiperiodic force (radians per time unit)
        #[arg(long)]
        omega: Option<f64>,
        /// Decay rate (per time unit)
        #[arg(long)]
        rate: Option<f64>,
        /// Solver whose basis carries the force
        #[arg(long, value_enum)]
        solver: Option<SolverArg>,
        /// Galerkin truncation (K or M)
        #[arg(long)]
        modes: Option<usize>,
        /// Probe horizon (model time units)
        #[arg(long, value_name = "TIME")]
        horizon: Option<f64>,
        /// Spacing of probe window starts (model time units)
        #[arg(long, value_name = "TIME")]
        step: Option<f64>,
        /// Window lengths δ (model time units), comma separated
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
    },
    /// Hull diagnostics of the rds nonlinearity [pipeline.classify_nonlinearity]
    ClassifyNonlinearity {
        #[command(flatten)]
        common: OptionalManifest,
        /// Builtin nonlinearity: zero, linear, cubic, chafee_infante, example1, example2, example3
        #[arg(long)]
        nonlinearity: Option<String>,
        /// Growth exponent p of example1..3
        #[arg(long)]
        p: Option<f64>,
        /// λ of chafee_infante
        #[arg(long)]
        lambda: Option<f64>,
        /// Range |v| ≤ radius (state units)
        #[arg(long)]
        radius: Option<f64>,
        /// v grid spacing (state units)
        #[arg(long)]
        resolution: Option<f64>,
        /// Gap levels l = radius·2^-k
        #[arg(long)]
        levels: Option<usize>,
        /// Last sampled time (model time units)
        #[arg(long, value_name = "TIME")]
        t_max: Option<f64>,
        /// Number of log-spaced sample times
        #[arg(long)]
        times: Option<usize>,
        /// Last time of the pointwise limit probe (model time units)
        #[arg(long, value_name = "TIME")]
        limit_t_max: Option<f64>,
        /// Relative spread counted as convergence
        #[arg(long)]
        limit_tol: Option<f64>,
    },
    /// Summarize the stage artifacts into report.json
    Report(Common),
}

fn load(common: &Common) -> CliResult<(ExperimentManifest, PathBuf)> {
    let mut m = ExperimentManifest::load(&common.manifest)?;
    if let Some(s) = common.seed {
        m.seed = s;
    }
    Ok((m, base_dir(&common.manifest)))
}

fn base_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn default_manifest() -> ExperimentManifest {
    ExperimentManifest {
        name: "classify".into(),
        seed: 0,
        output: None,
        system: SystemBlock {
            solver: Solver::Rds,
            length: None,
            modes: 64,
            dt: 1e-3,
            sample_dt: 1e-2,
            nu: None,
            diffusion: None,
            dealias: None,
            g_bound: None,
        },
        symbol: Default::default(),
        pipeline: Default::default(),
    }
}

fn load_optional(common: &OptionalManifest) -> CliResult<(ExperimentManifest, PathBuf)> {
    match &common.manifest {
        Some(p) => Ok((ExperimentManifest::load(p)?, base_dir(p))),
        None => Ok((default_manifest(), PathBuf::from("."))),
    }
}

fn set<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

fn experiment(m: ExperimentManifest, base: PathBuf, out: Option<PathBuf>) -> CliResult<Experiment> {
    Experiment::new(m, base, out)
}

fn run_stages(exp: &Experiment, stages: &[Stage], with_report: bool, log: &mut dyn Write) -> CliResult<()> {
    let plan = exp.plan(stages)?;
    let outcomes = exp.execute(&plan, log)?;
    if with_report && exp.output.is_some() && !outcomes.is_empty() {
        exp.report(log)?;
    }
    let failed: Vec<&str> = outcomes
        .iter()
        .filter(|o| o.verdict == Some(false))
        .map(|o| o.stage.name())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failed.join(", ")))
    }
}

/// Execute a parsed command line, writing progress to `log`.
pub fn dispatch(cli: Cli, log: &mut dyn Write) -> CliResult<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::field("--workers", "must be >= 1"));
        }
        // a pool built earlier in this process keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Run(common) => {
            let (m, base) = load(&common)?;
            let exp = experiment(m, base, common.out)?;
            let stages = declared_stages(&exp.manifest);
            if stages.is_empty() {
                let out = exp
                    .output
                    .as_ref()
                    .ok_or_else(|| CliError::field("output", "run needs an output directory (manifest `output` or --out)"))?;
                std::fs::create_dir_all(out)?;
                std::fs::write(out.join(MANIFEST_ECHO), exp.manifest.to_toml())?;
                writeln!(log, "empty pipeline; manifest echoed to {}", out.join(MANIFEST_ECHO).display())?;
                writeln!(log, "manifest hash {}", exp.hash)?;
                return Ok(());
            }
            run_stages(&exp, &stages, true, log)
        }
        Command::Simulate { common, runs, norm, max_mode, horizon } => {
            let (mut m, base) = load(&common)?;
            let b = m.pipeline.simulate.get_or_insert_with(Default::default);
            set(&mut b.runs, runs);
            set(&mut b.norm, norm);
            set(&mut b.max_mode, max_mode);
            set(&mut b.horizon, horizon);
            run_stages(&experiment(m, base, common.out)?, &[Stage::Simulate], false, log)
        }
        Command::Harvest { common, t0, duration, stride, metric } => {
            let (mut m, base) = load(&common)?;
            let b = m.pipeline.harvest.get_or_insert_with(Default::default);
            set(&mut b.t0, t0);
            set(&mut b.duration, duration);
            set(&mut b.stride, stride);
            set(
                &mut b.metric,
                metric.map(|k| match k {
                    MetricArg::Strong => MetricKind::Strong,
                    MetricArg::Weak => MetricKind::Weak,
                }),
            );
            run_stages(&experiment(m, base, common.out)?, &[Stage::Harvest], false, log)
        }
        Command::BuildNet { common, epsilon, epsilon_fraction, dump_matrix } => {
            let (mut m, base) = load(&common)?;
            let b = m.pipeline.build_net.get_or_insert_with(Default::default);
            if epsilon.is_some() {
                b.epsilon_fraction = None;
            }
            if epsilon_fraction.is_some() {
                b.epsilon = None;
            }
            set(&mut b.epsilon, epsilon);
            set(&mut b.epsilon_fraction, epsilon_fraction);
            if dump_matrix {
                b.dump_matrix = Some(true);
            }
            run_stages(&experiment(m, base, common.out)?, &[Stage::BuildNet], false, log)
        }
        Command::VerifyTracking { common, tests, test_seed, t0, horizon, net } => {
            let (mut m, base) = load(&common)?;
            let b = m.pipeline.verify_tracking.get_or_insert_with(Default::default);
            set(&mut b.tests, tests);
            set(&mut b.seed, test_seed);
            set(&mut b.t0, t0);
            set(&mut b.horizon, horizon);
            if let Some(n) = net {
                // resolve against the working directory, not the manifest
                let abs = std::path::absolute(&n).map_err(|e| CliError::field("--net", e))?;
                b.net = Some(abs.to_string_lossy().into_owned());
            }
            run_stages(&experiment(m, base, common.out)?, &[Stage::VerifyTracking], false, log)
        }
        Command::Schedule { common, test, j0, j_end } => {
            let (mut m, base) = load(&common)?;
            let b = m.pipeline.schedule.get_or_insert_with(Default::default);
            set(&mut b.test, test);
            set(&mut b.j0, j0);
            set(&mut b.j_end, j_end);
            run_stages(&experiment(m, base, common.out)?, &[Stage::Schedule], false, log)
        }
        Command::Equicontinuity { common, gaps } => {
            let (mut m, base) = load(&common)?;
            let b = m.pipeline.equicontinuity.get_or_insert_with(Default::default);
            set(&mut b.gaps, gaps);
            run_stages(&experiment(m, base, common.out)?, &[Stage::Equicontinuity], false, log)
        }
        Command::SectionCheck { common, times, tolerance, stride } => {
            let (mut m, base) = load(&common)?;
            let b = m.pipeline.section_check.get_or_insert_with(Default::default);
            set(&mut b.times, times);
            set(&mut b.tolerance, tolerance);
            set(&mut b.stride, stride);
            run_stages(&experiment(m, base, common.out)?, &[Stage::SectionCheck], false, log)
        }
        Command::ClassifyForce {
            common,
            force,
            amplitude,
            omega,
            rate,
            solver,
            modes,
            horizon,
            step,
            deltas,
        } => {
            let (mut m, base) = load_optional(&common)?;
            if let Some(s) = solver {
                m.system.solver = match s {
                    SolverArg::Nse => Solver::Nse,
                    SolverArg::Rds => Solver::Rds,
                };
                if m.system.solver == Solver::Nse && m.system.nu.is_none() {
                    m.system.nu = Some(0.1);
                }
            }
            if let Some(k) = modes {
                m.system.modes = k;
            }
            if force.is_some() {
                m.symbol.force_terms.clear();
            }
            set(&mut m.symbol.force, force);
            set(&mut m.symbol.amplitude, amplitude);
            set(&mut m.symbol.omega, omega);
            set(&mut m.symbol.rate, rate);
            let b = m.pipeline.classify_force.get_or_insert_with(Default::default);
            set(&mut b.horizon, horizon);
            set(&mut b.step, step);
            set(&mut b.deltas, deltas);
            run_stages(&experiment(m, base, common.out)?, &[Stage::ClassifyForce], false, log)
        }
        Command::ClassifyNonlinearity {
            common,
            nonlinearity,
            p,
            lambda,
            radius,
            resolution,
            levels,
            t_max,
            times,
            limit_t_max,
            limit_tol,
        } => {
            let (mut m, base) = load_optional(&common)?;
            if nonlinearity.is_some() {
                m.symbol.nonlinearity_expr = None;
                m.symbol.constants = None;
            }
            set(&mut m.symbol.nonlinearity, nonlinearity);
            set(&mut m.symbol.p, p);
            set(&mut m.symbol.lambda, lambda);
            let b = m.pipeline.classify_nonlinearity.get_or_insert_with(Default::default);
            set(&mut b.radius, radius);
            set(&mut b.resolution, resolution);
            set(&mut b.levels, levels);
            set(&mut b.t_max, t_max);
            set(&mut b.times, times);
            set(&mut b.limit_t_max, limit_t_max);
            set(&mut b.limit_tol, limit_tol);
            run_stages(&experiment(m, base, common.out)?, &[Stage::ClassifyNonlinearity], false, log)
        }
        Command::Report(common) => {
            let (m, base) = load(&common)?;
            let exp = experiment(m, base, common.out)?;
            let summary = exp.report(log)?;
            if summary.verification_pass {
                Ok(())
            } else {
                Err(CliError::Verification(summary.failed.join(", ")))
            }
        }
    }
}

/// Parse `args` and run; returns the process exit code.
pub fn main_with<I, T>(args: I, log: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(log, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    1
                }
            };
        }
    };
    match dispatch(cli, log) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
