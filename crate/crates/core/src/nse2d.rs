//! Pseudospectral solver for the 2D periodic Navier–Stokes equations
//!
//! ```text
//! du/dt + νAu + B(u, u) = g(t),   B(u, v) = P(u·∇)v
//! ```
//!
//! on `[0, L]²`. The nonlinearity is evaluated in divergence form
//! `P ∇·(u ⊗ v)` on a dealiased grid (`n ≥ 3K + 1`), so `⟨B(u, u), u⟩ = 0`
//! holds to roundoff. Time stepping is Lawson RK4 with the exact Stokes factor
//! `e^{−ν|κ|²h}`; each base step is split into `⌈h · c / 2⌉` substeps, where
//! `c = κ_max (max|u_x| + max|u_y|)` over the grid at the start of the step.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forcing::{translation_bound_norm, Probe, Symbol};
use crate::phase::{Basis, PhaseVector};
use crate::spectral::{leray_in_place, Fft2};
use crate::stepper::{self, Lawson};
use crate::systems::{AbsorbingBall, Evolution, Trajectory};

/// Largest `h · c` allowed per substep.
const ADVECTIVE_LIMIT: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NseParams {
    /// Box side `L`.
    pub length: f64,
    /// Viscosity `ν`.
    pub nu: f64,
    /// Spectral truncation `K`: modes with `|κᵢ| ≤ K`.
    pub modes: usize,
    /// Base time step.
    pub dt: f64,
    #[serde(default = "default_true")]
    pub dealias: bool,
}

fn default_true() -> bool {
    true
}

impl Default for NseParams {
    fn default() -> Self {
        NseParams {
            length: 2.0 * PI,
            nu: 0.1,
            modes: 16,
            dt: 1e-3,
            dealias: true,
        }
    }
}

impl NseParams {
    pub fn basis(&self) -> Basis {
        Basis::fourier2d(self.length, self.modes)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::invalid(format!("box side must be positive, got {}", self.length)));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::invalid(format!("viscosity must be positive, got {}", self.nu)));
        }
        if self.modes < 4 {
            return Err(Error::invalid(format!("truncation K must be >= 4, got {}", self.modes)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("time step must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    /// Largest wavenumber magnitude `2πK/L` along one axis.
    fn k_max(&self) -> f64 {
        2.0 * PI * self.modes as f64 / self.length
    }
}

/// Leray projection of an arbitrary Fourier2d coefficient array.
pub fn leray_project(basis: &Basis, field: &[f64]) -> Result<PhaseVector> {
    if !matches!(basis, Basis::Fourier2d { .. }) {
        return Err(Error::invalid("Leray projection needs a Fourier2d basis"));
    }
    let mut v = PhaseVector::from_coeffs(*basis, field.to_vec())?;
    leray_in_place(basis, v.coeffs_mut());
    Ok(v)
}

/// `max_κ |κ·u_κ|` over all modes.
pub fn max_divergence(u: &PhaseVector) -> f64 {
    let basis = u.basis();
    (0..basis.mode_count())
        .map(|m| {
            let (k1, k2) = basis.wavenumber(m);
            let s = u.mode(m);
            let re = k1 as f64 * s[0] + k2 as f64 * s[2];
            let im = k1 as f64 * s[1] + k2 as f64 * s[3];
            re.hypot(im)
        })
        .fold(0.0, f64::max)
}

/// Enstrophy `‖u‖² = Σ λ_κ |u_κ|²`.
pub fn enstrophy(u: &PhaseVector) -> f64 {
    let basis = u.basis();
    let stride = basis.mode_stride();
    (0..basis.mode_count())
        .map(|m| basis.eigenvalue(m) * u.mode(m)[..stride].iter().map(|x| x * x).sum::<f64>())
        .sum()
}

/// Solver state shared by all runs of one system.
#[derive(Clone, Debug)]
pub struct NseSystem {
    params: NseParams,
    sample_dt: f64,
    symbol: Symbol,
    fft: Fft2,
    ball: AbsorbingBall,
    g_bound: f64,
}

impl NseSystem {
    /// The translation bound of the force is measured on the default probe.
    pub fn new(params: NseParams, symbol: Symbol, sample_dt: f64) -> Result<Self> {
        params.validate()?;
        params.basis().ensure_same(symbol.basis())?;
        let g_bound = translation_bound_norm(&symbol, &Probe::default())?;
        Self::with_g_bound(params, symbol, sample_dt, g_bound)
    }

    /// As [`NseSystem::new`] with a given `‖g‖²_{L²_b(V')}`.
    pub fn with_g_bound(params: NseParams, symbol: Symbol, sample_dt: f64, g_bound: f64) -> Result<Self> {
        params.validate()?;
        params.basis().ensure_same(symbol.basis())?;
        stepper::schedule(0.0, sample_dt, params.dt, sample_dt)?;
        Ok(NseSystem {
            params,
            sample_dt,
            fft: Fft2::new(params.length, params.modes, params.dealias),
            ball: absorbing_radius(&params, g_bound)?,
            symbol,
            g_bound,
        })
    }

    pub fn params(&self) -> &NseParams {
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

    /// The same system driven by another symbol (e.g. a translate).
    pub fn with_symbol(&self, symbol: Symbol) -> Result<Self> {
        self.basis().ensure_same(symbol.basis())?;
        Ok(NseSystem {
            symbol,
            ..self.clone()
        })
    }

    /// `B(u, v) = P ∇·(u ⊗ v)`, equal to `P (u·∇) v` for divergence-free `u`.
    pub fn bilinear(&self, u: &PhaseVector, v: &PhaseVector) -> Result<PhaseVector> {
        let basis = self.basis();
        basis.ensure_same(u.basis())?;
        basis.ensure_same(v.basis())?;
        let mut out = PhaseVector::zeros(basis);
        let mut work = self.fft.work();
        self.fft
            .advection(u.coeffs(), Some(v.coeffs()), out.coeffs_mut(), &mut work);
        leray_in_place(&basis, out.coeffs_mut());
        Ok(out)
    }

    /// `B(u, u)`.
    pub fn nonlinear_term(&self, u: &PhaseVector) -> Result<PhaseVector> {
        let basis = self.basis();
        basis.ensure_same(u.basis())?;
        let mut out = PhaseVector::zeros(basis);
        let mut work = self.fft.work();
        self.fft.advection(u.coeffs(), None, out.coeffs_mut(), &mut work);
        leray_in_place(&basis, out.coeffs_mut());
        Ok(out)
    }

    /// `νAu`.
    pub fn stokes(&self, u: &PhaseVector) -> PhaseVector {
        let basis = *u.basis();
        let mut out = u.clone();
        let c = out.coeffs_mut();
        for m in 0..basis.mode_count() {
            let l = self.params.nu * basis.eigenvalue(m);
            c[4 * m..4 * m + 4].iter_mut().for_each(|x| *x *= l);
        }
        out
    }

    /// Force `g = νAu* + B(u*, u*)` making `u*` a steady state.
    pub fn manufactured_force(&self, u_star: &PhaseVector) -> Result<PhaseVector> {
        let mut g = self.stokes(u_star);
        g.axpy(1.0, &self.nonlinear_term(u_star)?);
        Ok(g)
    }

    /// Right-hand side `−Au` excluded: `g(t) − B(u, u)`.
    pub fn tendency(&self, u: &PhaseVector, t: f64) -> Result<PhaseVector> {
        let mut out = self.nonlinear_term(u)?.scaled(-1.0);
        let mut g = PhaseVector::zeros(self.basis());
        self.symbol.add_force(t, g.coeffs_mut());
        leray_in_place(&self.basis(), g.coeffs_mut());
        out.axpy(1.0, &g);
        Ok(out)
    }

    fn decay(&self) -> Vec<f64> {
        let basis = self.basis();
        let mut d = vec![0.0; basis.coeff_len()];
        for m in 0..basis.mode_count() {
            let l = self.params.nu * basis.eigenvalue(m);
            d[4 * m..4 * m + 4].iter_mut().for_each(|x| *x = l);
        }
        d
    }

    fn check_initial(&self, u0: &PhaseVector) -> Result<()> {
        self.basis().ensure_same(u0.basis())?;
        let div = max_divergence(u0);
        if div > 1e-9 * u0.norm().max(1.0) {
            return Err(Error::invalid(format!(
                "initial velocity is not divergence-free: max |κ·u_κ| = {div:.3e}"
            )));
        }
        if !u0.is_finite() {
            return Err(Error::invalid("initial velocity is not finite"));
        }
        Ok(())
    }

    /// Integrate from `u0` at time `t0` to `t1`, sampling every `sample_dt`.
    pub fn integrate(&self, u0: &PhaseVector, t0: f64, t1: f64) -> Result<Trajectory> {
        self.check_initial(u0)?;
        let basis = self.basis();
        let mut work = self.fft.work();
        let mut force = vec![0.0; basis.coeff_len()];
        let symbol = &self.symbol;
        let fft = &self.fft;
        let mut rhs = |t: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
            fft.advection(y, None, out, &mut work);
            force.iter_mut().for_each(|x| *x = 0.0);
            symbol.add_force(t, &mut force);
            for (o, g) in out.iter_mut().zip(&force) {
                *o = g - *o;
            }
            leray_in_place(&basis, out);
            Ok(())
        };
        let k_max = self.params.k_max();
        let dt = self.params.dt;
        let mut cfl_work = fft.work();
        let mut substeps = |_t: f64, y: &[f64]| -> usize {
            let (ux, uy) = fft.velocity(y, &mut cfl_work);
            let peak = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let rate = k_max * (peak(&ux) + peak(&uy));
            (dt * rate / ADVECTIVE_LIMIT).ceil().max(1.0) as usize
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
            symbol.id(),
            &mut rhs,
            &mut substeps,
        )
    }
}

impl Evolution for NseSystem {
    fn basis(&self) -> Basis {
        NseSystem::basis(self)
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
        NseSystem::integrate(self, u0, t0, t1)
    }
}

/// Absorbing ball of the truncated system.
///
/// From `d/dt|u|² + ν‖u‖² ≤ ‖g‖²_{V'}/ν` and `‖u‖² ≥ λ₁|u|²`,
/// `|u(t)|² ≤ |u₀|² e^{−νλ₁t} + G / (ν(1 − e^{−νλ₁}))` with
/// `G = sup_t ∫_t^{t+1} ‖g‖²_{V'}`, `λ₁ = (2π/L)²`.
pub fn absorbing_radius(params: &NseParams, g_bound: f64) -> Result<AbsorbingBall> {
    params.validate()?;
    if !(g_bound >= 0.0 && g_bound.is_finite()) {
        return Err(Error::invalid(format!("force bound must be finite and nonnegative, got {g_bound}")));
    }
    let rate = params.nu * params.basis().first_eigenvalue();
    let floor_sq = g_bound / (params.nu * (1.0 - (-rate).exp()));
    Ok(AbsorbingBall::from_floor(floor_sq, rate))
}

/// Residuals of the energy balance
/// `E(t) = |u(t)|² + 2ν∫_{t₀}^t ‖u‖² − 2∫_{t₀}^t ⟨g, u⟩`, which is
/// nonincreasing for weak solutions and constant for the Galerkin system.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyBudget {
    /// `max_{s < t} (E(t) − E(s))`, clamped at 0: the worst violation.
    pub max_violation: f64,
    /// `max |E(t) − E(t₀)|`.
    pub max_abs_residual: f64,
    /// Median of `|E(t) − E(t₀)|` over samples.
    pub typical_residual: f64,
    pub samples: usize,
}

/// Fourth-order cumulative integral of sampled values on a uniform grid.
pub fn cumulative_integral(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n < 4 {
        for i in 1..n {
            out[i] = out[i - 1] + 0.5 * h * (values[i - 1] + values[i]);
        }
        return out;
    }
    let f = values;
    for i in 1..n {
        let piece = if i == 1 {
            h / 24.0 * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3])
        } else if i == n - 1 {
            h / 24.0 * (f[n - 4] - 5.0 * f[n - 3] + 19.0 * f[n - 2] + 9.0 * f[n - 1])
        } else {
            h / 24.0 * (-f[i - 2] + 13.0 * f[i - 1] + 13.0 * f[i] - f[i + 1])
        };
        out[i] = out[i - 1] + piece;
    }
    out
}

/// Energy balance along a trajectory generated with symbol `sigma`.
pub fn energy_budget(u: &Trajectory, sigma: &Symbol, nu: f64) -> Result<EnergyBudget> {
    u.basis().ensure_same(sigma.basis())?;
    let n = u.len();
    let mut diss = Vec::with_capacity(n);
    let mut work = Vec::with_capacity(n);
    let mut g = PhaseVector::zeros(*u.basis());
    for (i, s) in u.samples().iter().enumerate() {
        diss.push(enstrophy(s));
        g.coeffs_mut().iter_mut().for_each(|x| *x = 0.0);
        sigma.add_force(u.time(i), g.coeffs_mut());
        work.push(g.dot(s));
    }
    let d = cumulative_integral(&diss, u.dt());
    let w = cumulative_integral(&work, u.dt());
    let energy: Vec<f64> = (0..n)
        .map(|i| u.samples()[i].norm_sq() + 2.0 * nu * d[i] - 2.0 * w[i])
        .collect();
    let mut max_violation = 0.0f64;
    let mut running_min = f64::INFINITY;
    for &e in &energy {
        max_violation = max_violation.max(e - running_min);
        running_min = running_min.min(e);
    }
    let mut abs: Vec<f64> = energy.iter().map(|e| (e - energy[0]).abs()).collect();
    let max_abs_residual = abs.iter().copied().fold(0.0, f64::max);
    abs.sort_by(f64::total_cmp);
    Ok(EnergyBudget {
        max_violation: max_violation.max(0.0),
        max_abs_residual,
        typical_residual: abs[abs.len() / 2],
        samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::Force;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn system(modes: usize, nu: f64) -> NseSystem {
        let params = NseParams {
            length: 2.0 * PI,
            nu,
            modes,
            dt: 1e-3,
            dealias: true,
        };
        NseSystem::with_g_bound(params, Symbol::zero(params.basis()), 0.01, 0.0).unwrap()
    }

    fn random_field(basis: Basis, kmax: i64, rng: &mut ChaCha8Rng) -> PhaseVector {
        let mut c = vec![0.0; basis.coeff_len()];
        for m in 0..basis.mode_count() {
            let (k1, k2) = basis.wavenumber(m);
            if k1.abs().max(k2.abs()) <= kmax {
                for s in 0..4 {
                    c[4 * m + s] = rng.gen_range(-1.0..1.0);
                }
            }
        }
        crate::spectral::hermitian_symmetrize(&mut c, match basis {
            Basis::Fourier2d { modes, .. } => modes,
            _ => unreachable!(),
        });
        leray_project(&basis, &c).unwrap()
    }

    #[test]
    fn projection_is_idempotent_and_solenoidal() {
        let basis = Basis::fourier2d(2.0 * PI, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let raw: Vec<f64> = (0..basis.coeff_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = leray_project(&basis, &raw).unwrap();
        assert!(max_divergence(&p) < 1e-14);
        let pp = leray_project(&basis, p.coeffs()).unwrap();
        assert!(crate::phase::strong_dist(&p, &pp).unwrap() < 1e-14 * p.norm());
    }

    #[test]
    fn shear_has_no_advection() {
        let sys = system(4, 1.0);
        let shear = crate::forcing::catalog_profile(&sys.basis(), 1).unwrap();
        let b = sys.nonlinear_term(&shear).unwrap();
        assert!(b.norm() < 1e-13 * shear.norm());
    }

    #[test]
    fn energy_orthogonality() {
        let sys = system(8, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let u = random_field(sys.basis(), 8, &mut rng);
            let b = sys.nonlinear_term(&u).unwrap();
            let scale = u.norm() * enstrophy(&u).sqrt() * u.norm();
            assert!(b.dot(&u).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn shear_decays_exactly() {
        let sys = system(16, 1.0);
        let u0 = crate::forcing::spatial_from_expr(&sys.basis(), "-cos(y)").unwrap();
        let traj = sys.integrate(&u0, 0.0, 1.0).unwrap();
        let exact = u0.scaled((-1.0f64).exp());
        let err = crate::phase::strong_dist(traj.last(), &exact).unwrap() / exact.norm();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn constant_zero_budget() {
        let sys = system(4, 1.0);
        let z = PhaseVector::zeros(sys.basis());
        let traj = Trajectory::constant(z, 0.0, 0.1, 20).unwrap();
        let b = energy_budget(&traj, &Symbol::new("zero", Force::zero(sys.basis()), None), 1.0).unwrap();
        assert_eq!(b.max_violation, 0.0);
        assert_eq!(b.max_abs_residual, 0.0);
    }

    #[test]
    fn radius_scales_with_force() {
        let p = NseParams::default();
        let a = absorbing_radius(&p, 1.0).unwrap();
        let b = absorbing_radius(&p, 2.0).unwrap();
        assert!((b.radius * b.radius / (a.radius * a.radius) - 2.0).abs() < 1e-12);
        assert_eq!(absorbing_radius(&p, 0.0).unwrap().radius, 0.0);
    }
}
