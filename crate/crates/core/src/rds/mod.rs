//! Scalar reaction–diffusion problem on `[0, ℓ]` with Dirichlet conditions
//!
//! ```text
//! u_t = a u_xx − f(u, t) + g(x, t)
//! ```
//!
//! in the orthonormal sine basis. Diffusion is integrated exactly by Lawson
//! RK4; `f` is applied by collocation on the `2M + 1` interior points of a
//! uniform grid and projected back with the discrete sine transform. Each base
//! step is split into `⌈h · max|∂f/∂v| / 2.5⌉` substeps.

mod nonlinearity;

pub use nonlinearity::{cutoff, validate_nonlinearity, GrowthConstants, Nonlinearity, ValidationReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forcing::{translation_bound_norm, Probe, Symbol};
use crate::phase::{Basis, PhaseVector};
use crate::spectral::SineTransform;
use crate::stepper::{self, Lawson};
use crate::systems::{AbsorbingBall, Evolution, Trajectory};

/// Largest `h · |∂f/∂v|` allowed per substep.
const REACTION_LIMIT: f64 = 2.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdsParams {
    /// Domain length `ℓ`.
    pub length: f64,
    /// Diffusion coefficient `a`.
    pub diffusion: f64,
    /// Number of sine modes `M`.
    pub modes: usize,
    /// Base time step.
    pub dt: f64,
}

impl Default for RdsParams {
    fn default() -> Self {
        RdsParams {
            length: std::f64::consts::PI,
            diffusion: 1.0,
            modes: 64,
            dt: 1e-3,
        }
    }
}

impl RdsParams {
    pub fn basis(&self) -> Basis {
        Basis::sine(self.length, self.modes)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::invalid(format!("domain length must be positive, got {}", self.length)));
        }
        if !(self.diffusion > 0.0 && self.diffusion.is_finite()) {
            return Err(Error::invalid(format!(
                "diffusion coefficient must be positive, got {}",
                self.diffusion
            )));
        }
        if self.modes == 0 {
            return Err(Error::invalid("need at least one sine mode"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("time step must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Solver state shared by all runs of one system.
#[derive(Clone, Debug)]
pub struct RdsSystem {
    params: RdsParams,
    sample_dt: f64,
    symbol: Symbol,
    transform: SineTransform,
    ball: AbsorbingBall,
    g_bound: f64,
}

impl RdsSystem {
    /// The translation bound of the force is measured on the default probe.
    pub fn new(params: RdsParams, symbol: Symbol, sample_dt: f64) -> Result<Self> {
        params.validate()?;
        params.basis().ensure_same(symbol.basis())?;
        let g_bound = translation_bound_norm(&symbol, &Probe::default())?;
        Self::with_g_bound(params, symbol, sample_dt, g_bound)
    }

    pub fn with_g_bound(params: RdsParams, symbol: Symbol, sample_dt: f64, g_bound: f64) -> Result<Self> {
        params.validate()?;
        params.basis().ensure_same(symbol.basis())?;
        stepper::schedule(0.0, sample_dt, params.dt, sample_dt)?;
        let constants = symbol
            .nonlinearity()
            .map(|f| *f.constants())
            .unwrap_or(GrowthConstants { p: 2.0, gamma: 0.0, c_diss: 0.0, c_grow: 1.0 });
        Ok(RdsSystem {
            params,
            sample_dt,
            transform: SineTransform::new(params.length, params.modes),
            ball: absorbing_radius_rds(&params, &constants, g_bound)?,
            symbol,
            g_bound,
        })
    }

    pub fn params(&self) -> &RdsParams {
        &self.params
    }

    pub fn g_bound(&self) -> f64 {
        self.g_bound
    }

    pub fn basis(&self) -> Basis {
        self.params.basis()
    }

    pub fn sample_dt(&self) -> f64 {
        self.sample_dt
    }

    pub fn symbol(&self) -> &Symbol {
        &self.symbol
    }

    pub fn absorbing_ball(&self) -> AbsorbingBall {
        self.ball
    }

    pub fn with_symbol(&self, symbol: Symbol) -> Result<Self> {
        self.basis().ensure_same(symbol.basis())?;
        let constants = symbol
            .nonlinearity()
            .map(|f| *f.constants())
            .unwrap_or(GrowthConstants { p: 2.0, gamma: 0.0, c_diss: 0.0, c_grow: 1.0 });
        Ok(RdsSystem {
            ball: absorbing_radius_rds(&self.params, &constants, self.g_bound)?,
            symbol,
            ..self.clone()
        })
    }

    /// Collocation points of the reaction term.
    pub fn grid(&self) -> Vec<f64> {
        self.transform.grid()
    }

    /// Field values at the collocation points.
    pub fn synthesize(&self, u: &PhaseVector) -> Vec<f64> {
        let mut out = vec![0.0; self.transform.points()];
        self.transform.synthesize(u.coeffs(), &mut out);
        out
    }

    /// Projected reaction `P_M f(u(·), t)`.
    pub fn reaction(&self, u: &PhaseVector, t: f64) -> Result<PhaseVector> {
        self.basis().ensure_same(u.basis())?;
        let mut out = PhaseVector::zeros(self.basis());
        let mut grid = vec![0.0; self.transform.points()];
        self.reaction_into(t, u.coeffs(), &mut grid, out.coeffs_mut())?;
        Ok(out)
    }

    fn reaction_into(&self, t: f64, y: &[f64], grid: &mut [f64], out: &mut [f64]) -> Result<()> {
        self.transform.synthesize(y, grid);
        if let Some(f) = self.symbol.nonlinearity() {
            let tt = t + self.symbol.shift();
            for v in grid.iter_mut() {
                *v = f.try_eval(*v, tt)?;
            }
            self.transform.analyze(grid, out);
        } else {
            out.iter_mut().for_each(|x| *x = 0.0);
        }
        Ok(())
    }

    /// `−aΛu − P_M f(u, t) + g(t)`: the full right-hand side.
    pub fn residual(&self, u: &PhaseVector, t: f64) -> Result<PhaseVector> {
        let mut r = self.reaction(u, t)?.scaled(-1.0);
        self.symbol.add_force(t, r.coeffs_mut());
        let basis = self.basis();
        for (m, x) in r.coeffs_mut().iter_mut().enumerate() {
            *x -= self.params.diffusion * basis.eigenvalue(m) * u.coeffs()[m];
        }
        Ok(r)
    }

    fn decay(&self) -> Vec<f64> {
        let basis = self.basis();
        (0..basis.mode_count())
            .map(|m| self.params.diffusion * basis.eigenvalue(m))
            .collect()
    }

    /// Integrate from `u0` at time `t0` to `t1`, sampling every `sample_dt`.
    pub fn integrate(&self, u0: &PhaseVector, t0: f64, t1: f64) -> Result<Trajectory> {
        self.basis().ensure_same(u0.basis())?;
        if !u0.is_finite() {
            return Err(Error::invalid("initial data is not finite"));
        }
        let q = self.transform.points();
        let mut grid = vec![0.0; q];
        let mut force = vec![0.0; self.params.modes];
        let mut rhs = |t: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
            self.reaction_into(t, y, &mut grid, out)?;
            force.iter_mut().for_each(|x| *x = 0.0);
            self.symbol.add_force(t, &mut force);
            for (o, g) in out.iter_mut().zip(&force) {
                *o = g - *o;
            }
            Ok(())
        };
        let mut values = vec![0.0; q];
        let dt = self.params.dt;
        let mut substeps = |t: f64, y: &[f64]| -> usize {
            let Some(f) = self.symbol.nonlinearity() else {
                return 1;
            };
            self.transform.synthesize(y, &mut values);
            let tt = t + self.symbol.shift();
            let rate = values
                .iter()
                .map(|&v| {
                    let d = 1e-6 * (1.0 + v.abs());
                    ((f.eval(v + d, tt) - f.eval(v - d, tt)) / (2.0 * d)).abs()
                })
                .fold(0.0, f64::max);
            if !rate.is_finite() {
                return 1;
            }
            (dt * rate / REACTION_LIMIT).ceil().clamp(1.0, 1e6) as usize
        };
        let mut lawson = Lawson::new(self.decay());
        stepper::run(
            &mut lawson,
            u0,
            t0,
            t1,
            dt,
            self.sample_dt,
            &self.ball,
            self.symbol.id(),
            &mut rhs,
            &mut substeps,
        )
    }
}

impl Evolution for RdsSystem {
    fn basis(&self) -> Basis {
        RdsSystem::basis(self)
    }

    fn sample_dt(&self) -> f64 {
        self.sample_dt
    }

    fn symbol(&self) -> &Symbol {
        &self.symbol
    }

    fn absorbing_ball(&self) -> AbsorbingBall {
        self.ball
    }

    fn integrate(&self, u0: &PhaseVector, t0: f64, t1: f64) -> Result<Trajectory> {
        RdsSystem::integrate(self, u0, t0, t1)
    }
}

/// Absorbing ball from the energy equality.
///
/// With `(f(u), u) ≥ −C_diss ℓ` and `⟨g, u⟩ ≤ (a/2)‖∇u‖² + ‖g‖²_{V'}/(2a)`,
/// `d/dt|u|² + aλ₁|u|² ≤ 2C_diss ℓ + ‖g‖²_{V'}/a`, hence
/// `|u(t)|² ≤ |u₀|² e^{−aλ₁t} + 2C_diss ℓ/(aλ₁) + G/(a(1 − e^{−aλ₁}))`
/// with `λ₁ = (π/ℓ)²`.
pub fn absorbing_radius_rds(params: &RdsParams, constants: &GrowthConstants, g_bound: f64) -> Result<AbsorbingBall> {
    params.validate()?;
    if !(g_bound >= 0.0 && g_bound.is_finite()) {
        return Err(Error::invalid(format!("force bound must be finite and nonnegative, got {g_bound}")));
    }
    if !(constants.c_diss >= 0.0) {
        return Err(Error::invalid("dissipativity constant must be nonnegative"));
    }
    let a = params.diffusion;
    let rate = a * params.basis().first_eigenvalue();
    let floor_sq = 2.0 * constants.c_diss * params.length / rate + g_bound / (a * (1.0 - (-rate).exp()));
    Ok(AbsorbingBall::from_floor(floor_sq, rate))
}

/// Per-panel residuals of the Galerkin energy equality
/// `½ d/dt|u|² = −a‖∇u‖² − (P_M f(u), u) + ⟨g, u⟩`.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyIdentityReport {
    /// Largest `|½Δ|u|² − ∫ power| / (2h)` over Simpson panels.
    pub max_residual: f64,
    pub mean_residual: f64,
    pub panels: usize,
}

/// Simpson-panel residual of the energy equality along a run of `sys`.
pub fn energy_identity_check(u: &Trajectory, sys: &RdsSystem) -> Result<EnergyIdentityReport> {
    u.basis().ensure_same(&sys.basis())?;
    let basis = sys.basis();
    let a = sys.params.diffusion;
    let mut power = Vec::with_capacity(u.len());
    for (i, s) in u.samples().iter().enumerate() {
        let t = u.time(i);
        let react = sys.reaction(s, t)?;
        let mut g = PhaseVector::zeros(basis);
        sys.symbol.add_force(t, g.coeffs_mut());
        let grad: f64 = (0..basis.mode_count())
            .map(|m| basis.eigenvalue(m) * s.coeffs()[m] * s.coeffs()[m])
            .sum();
        power.push(-a * grad - react.dot(s) + g.dot(s));
    }
    let h = u.dt();
    let mut max_residual = 0.0f64;
    let mut total = 0.0;
    let mut panels = 0usize;
    let mut i = 0;
    while i + 2 < u.len() {
        let de = 0.5 * (u.samples()[i + 2].norm_sq() - u.samples()[i].norm_sq());
        let quad = h / 3.0 * (power[i] + 4.0 * power[i + 1] + power[i + 2]);
        let r = (de - quad).abs() / (2.0 * h);
        max_residual = max_residual.max(r);
        total += r;
        panels += 1;
        i += 2;
    }
    Ok(EnergyIdentityReport {
        max_residual,
        mean_residual: if panels > 0 { total / panels as f64 } else { 0.0 },
        panels,
    })
}

/// `|−aΛu − P_M f(u, t) + g(t)|`: zero at steady states.
pub fn steady_state_residual(sys: &RdsSystem, u: &PhaseVector, t: f64) -> Result<f64> {
    Ok(sys.residual(u, t)?.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::Force;

    fn system(f: Option<Nonlinearity>, modes: usize) -> RdsSystem {
        let params = RdsParams {
            length: 2.0,
            diffusion: 0.5,
            modes,
            dt: 1e-3,
        };
        let symbol = Symbol::new("test", Force::zero(params.basis()), f);
        RdsSystem::with_g_bound(params, symbol, 0.01, 0.0).unwrap()
    }

    #[test]
    fn heat_kernel_decay() {
        let sys = system(None, 16);
        let u0 = PhaseVector::unit(sys.basis(), 0);
        let traj = sys.integrate(&u0, 0.0, 1.0).unwrap();
        let rate = 0.5 * (std::f64::consts::PI / 2.0).powi(2);
        let exact = u0.scaled((-rate).exp());
        assert!(crate::phase::strong_dist(traj.last(), &exact).unwrap() < 1e-14);
    }

    #[test]
    fn linear_reaction_contracts() {
        let sys = system(Some(Nonlinearity::builtin("linear", 2.0).unwrap()), 16);
        let mut c = vec![0.0; 16];
        c[0] = 1.0;
        c[3] = -0.5;
        let u0 = PhaseVector::from_coeffs(sys.basis(), c).unwrap();
        let norms = sys.integrate(&u0, 0.0, 1.0).unwrap().norms();
        assert!(norms.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn zero_run_has_zero_residual() {
        let sys = system(Some(Nonlinearity::builtin("example1", 3.0).unwrap()), 8);
        let traj = Trajectory::constant(PhaseVector::zeros(sys.basis()), 0.0, 0.01, 21).unwrap();
        let rep = energy_identity_check(&traj, &sys).unwrap();
        assert_eq!(rep.max_residual, 0.0);
    }

    #[test]
    fn dirichlet_endpoints_vanish() {
        let st = SineTransform::new(2.0, 8);
        let c: Vec<f64> = (0..8).map(|k| 1.0 / (1.0 + k as f64)).collect();
        let norm = (2.0f64 / 2.0).sqrt();
        for x in [0.0, 2.0] {
            let v: f64 = c
                .iter()
                .enumerate()
                .map(|(k, a)| a * norm * ((k + 1) as f64 * std::f64::consts::PI * x / 2.0).sin())
                .sum();
            assert!(v.abs() < 1e-14);
        }
        let _ = st;
    }

    #[test]
    fn entry_time_decreases_with_rate() {
        let c = GrowthConstants { p: 4.0, gamma: 1.0, c_diss: 1.0, c_grow: 1.0 };
        let mut prev = f64::INFINITY;
        for a in [0.5, 1.0, 2.0, 4.0] {
            let p = RdsParams { diffusion: a, ..RdsParams::default() };
            let ball = absorbing_radius_rds(&p, &c, 0.0).unwrap();
            let t = ball.entry_time(10.0 * ball.radius);
            assert!(t < prev);
            prev = t;
        }
    }
}
