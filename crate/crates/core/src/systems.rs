//! Trajectories, the translation semigroup, reach maps and ω-limit samples.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forcing::Symbol;
use crate::nse2d::NseSystem;
use crate::phase::{grid_offset, hausdorff, Basis, MetricSpec, PhaseVector, SetSample};
use crate::rds::RdsSystem;

/// A solution path sampled on a uniform time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    basis: Basis,
    t_start: f64,
    dt: f64,
    samples: Vec<PhaseVector>,
    symbol_id: String,
}

impl Trajectory {
    pub fn new(
        t_start: f64,
        dt: f64,
        samples: Vec<PhaseVector>,
        symbol_id: impl Into<String>,
    ) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::invalid("trajectory needs at least one sample"))?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("sample spacing must be positive, got {dt}")));
        }
        if !t_start.is_finite() {
            return Err(Error::invalid("trajectory start time must be finite"));
        }
        let basis = *first.basis();
        for s in &samples[1..] {
            basis.ensure_same(s.basis())?;
        }
        Ok(Trajectory {
            basis,
            t_start,
            dt,
            samples,
            symbol_id: symbol_id.into(),
        })
    }

    /// Constant-in-time trajectory.
    pub fn constant(point: PhaseVector, t_start: f64, dt: f64, len: usize) -> Result<Self> {
        Trajectory::new(t_start, dt, vec![point; len.max(1)], "constant")
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.samples.len() - 1)
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t_start + i as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[PhaseVector] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<PhaseVector> {
        self.samples
    }

    pub fn last(&self) -> &PhaseVector {
        self.samples.last().expect("nonempty")
    }

    pub fn symbol_id(&self) -> &str {
        &self.symbol_id
    }

    /// Sample index of grid time `t`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let i = grid_offset(t - self.t_start, self.dt).map_err(|_| {
            Error::GridMismatch(format!(
                "t = {t} is not on the grid t_start = {}, dt = {}",
                self.t_start, self.dt
            ))
        })?;
        if i >= self.samples.len() {
            return Err(self.out_of_domain(t, t));
        }
        Ok(i)
    }

    /// Inclusive index range of the grid window `[a, b]`.
    pub fn index_range(&self, a: f64, b: f64) -> Result<(usize, usize)> {
        let tol = 1e-9 * self.dt;
        if a < self.t_start - tol || b > self.t_end() + tol {
            return Err(self.out_of_domain(a, b));
        }
        Ok((self.index_of(a)?, self.index_of(b)?))
    }

    fn out_of_domain(&self, a: f64, b: f64) -> Error {
        Error::OutOfDomain {
            a,
            b,
            start: self.t_start,
            end: self.t_end(),
        }
    }

    /// Restriction to the grid window `[a, b]`.
    pub fn restrict(&self, a: f64, b: f64) -> Result<Trajectory> {
        let (i, j) = self.index_range(a, b)?;
        Ok(Trajectory {
            basis: self.basis,
            t_start: self.time(i),
            dt: self.dt,
            samples: self.samples[i..=j].to_vec(),
            symbol_id: self.symbol_id.clone(),
        })
    }

    /// Strong norms of all samples.
    pub fn norms(&self) -> Vec<f64> {
        self.samples.iter().map(PhaseVector::norm).collect()
    }
}

/// `(T(s)u)(t) = u(t + s)`, restricted to the original start time.
///
/// This is an index shift, so `translate(translate(u, r), s)` and
/// `translate(u, r + s)` hold identical samples.
pub fn translate(u: &Trajectory, s: f64) -> Result<Trajectory> {
    if s < 0.0 {
        return Err(Error::invalid(format!("translation must be nonnegative, got {s}")));
    }
    let n = grid_offset(s, u.dt)?;
    if n >= u.samples.len() {
        return Err(Error::OutOfDomain {
            a: u.t_start + s,
            b: u.t_end(),
            start: u.t_start,
            end: u.t_end(),
        });
    }
    Ok(Trajectory {
        basis: u.basis,
        t_start: u.t_start,
        dt: u.dt,
        samples: u.samples[n..].to_vec(),
        symbol_id: u.symbol_id.clone(),
    })
}

/// Fixed-length window of a stored run, renormalized to start at 0.
#[derive(Clone, Debug)]
pub struct TrajectoryPiece {
    source: Arc<Trajectory>,
    run: usize,
    offset: usize,
    len: usize,
}

impl TrajectoryPiece {
    /// Window `[t*, t* + T]` of `source`, where `run` identifies the source.
    pub fn new(source: Arc<Trajectory>, run: usize, window_start: f64, duration: f64) -> Result<Self> {
        let offset = source.index_of(window_start)?;
        let steps = grid_offset(duration, source.dt)?;
        if steps == 0 {
            return Err(Error::invalid("piece duration must be at least one sample step"));
        }
        if offset + steps >= source.len() {
            return Err(Error::OutOfDomain {
                a: window_start,
                b: window_start + duration,
                start: source.t_start,
                end: source.t_end(),
            });
        }
        Ok(TrajectoryPiece {
            source,
            run,
            offset,
            len: steps + 1,
        })
    }

    pub fn samples(&self) -> &[PhaseVector] {
        &self.source.samples[self.offset..self.offset + self.len]
    }

    pub fn sample(&self, j: usize) -> &PhaseVector {
        &self.source.samples[self.offset + j]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dt(&self) -> f64 {
        self.source.dt
    }

    pub fn duration(&self) -> f64 {
        (self.len - 1) as f64 * self.source.dt
    }

    pub fn basis(&self) -> &Basis {
        &self.source.basis
    }

    /// Source run identifier.
    pub fn run(&self) -> usize {
        self.run
    }

    /// Sample offset inside the source run.
    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Window start time `t*` in the source run.
    pub fn window_start(&self) -> f64 {
        self.source.time(self.offset)
    }

    pub fn source(&self) -> &Arc<Trajectory> {
        &self.source
    }

    /// Copy out as a trajectory on `[0, T]`.
    pub fn to_trajectory(&self) -> Trajectory {
        Trajectory {
            basis: self.source.basis,
            t_start: 0.0,
            dt: self.source.dt,
            samples: self.samples().to_vec(),
            symbol_id: self.source.symbol_id.clone(),
        }
    }
}

/// Radius of an absorbing ball and the entry-time estimate behind it.
///
/// Both solvers satisfy `|u(t)|² ≤ |u₀|² e^{-rate·t} + floor²`, and the
/// absorbing ball is `{|u| ≤ radius}` with `radius² = 2 floor²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbsorbingBall {
    pub radius: f64,
    pub floor_sq: f64,
    pub rate: f64,
}

impl AbsorbingBall {
    pub fn from_floor(floor_sq: f64, rate: f64) -> Self {
        AbsorbingBall {
            radius: (2.0 * floor_sq).sqrt(),
            floor_sq,
            rate,
        }
    }

    /// Upper bound of `|u(t)|` for `|u(0)| = r0`.
    pub fn bound_at(&self, r0: f64, t: f64) -> f64 {
        (r0 * r0 * (-self.rate * t).exp() + self.floor_sq).sqrt()
    }

    /// Time after which every run from `|u₀| ≤ r0` stays in `{|u| ≤ target}`.
    /// Infinite when `target² ≤ floor²`.
    pub fn entry_time_to(&self, r0: f64, target: f64) -> f64 {
        let room = target * target - self.floor_sq;
        if room <= 0.0 {
            return f64::INFINITY;
        }
        let ratio = r0 * r0 / room;
        if ratio <= 1.0 {
            0.0
        } else {
            ratio.ln() / self.rate
        }
    }

    /// Entry time `t̄(r0)` into the absorbing ball.
    pub fn entry_time(&self, r0: f64) -> f64 {
        self.entry_time_to(r0, self.radius)
    }

    /// Divergence guard used by the integrators: `10³ · max(R, |u₀|)`.
    pub fn guard(&self, u0_norm: f64) -> f64 {
        1e3 * self.radius.max(u0_norm).max(f64::MIN_POSITIVE)
    }
}

/// Anything that generates trajectories from initial data.
pub trait Evolution: Send + Sync {
    fn basis(&self) -> Basis;

    /// Spacing of stored samples.
    fn sample_dt(&self) -> f64;

    fn symbol(&self) -> &Symbol;

    fn absorbing_ball(&self) -> AbsorbingBall;

    /// Integrate from `u0` at `t0` to `t1`, storing every sample.
    fn integrate(&self, u0: &PhaseVector, t0: f64, t1: f64) -> Result<Trajectory>;
}

/// A concrete solver together with its base symbol.
#[derive(Clone, Debug)]
pub enum SystemHandle {
    Nse(NseSystem),
    Rds(RdsSystem),
}

impl Evolution for SystemHandle {
    fn basis(&self) -> Basis {
        match self {
            SystemHandle::Nse(s) => s.basis(),
            SystemHandle::Rds(s) => s.basis(),
        }
    }

    fn sample_dt(&self) -> f64 {
        match self {
            SystemHandle::Nse(s) => s.sample_dt(),
            SystemHandle::Rds(s) => s.sample_dt(),
        }
    }

    fn symbol(&self) -> &Symbol {
        match self {
            SystemHandle::Nse(s) => s.symbol(),
            SystemHandle::Rds(s) => s.symbol(),
        }
    }

    fn absorbing_ball(&self) -> AbsorbingBall {
        match self {
            SystemHandle::Nse(s) => s.absorbing_ball(),
            SystemHandle::Rds(s) => s.absorbing_ball(),
        }
    }

    fn integrate(&self, u0: &PhaseVector, t0: f64, t1: f64) -> Result<Trajectory> {
        match self {
            SystemHandle::Nse(s) => s.integrate(u0, t0, t1),
            SystemHandle::Rds(s) => s.integrate(u0, t0, t1),
        }
    }
}

fn tag_point(err: Error, point: usize) -> Error {
    match err {
        Error::Diverged {
            time, norm, guard, ..
        } => Error::Diverged {
            time,
            norm,
            guard,
            point,
        },
        other => other,
    }
}

/// `count` random points of norm exactly `norm`, excited on the modes with
/// wavenumbers up to `max_mode` (each component of `κ` for Fourier, `k` for
/// sine). Fourier points are real, divergence-free and mean-free. The seed
/// fixes every point.
pub fn random_initial_data(basis: &Basis, count: usize, norm: f64, max_mode: usize, seed: u64) -> Result<SetSample> {
    basis.validate()?;
    if !(norm >= 0.0 && norm.is_finite()) {
        return Err(Error::invalid(format!("norm must be finite and >= 0, got {norm}")));
    }
    if max_mode == 0 {
        return Err(Error::invalid("max_mode must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    while points.len() < count {
        let mut c = vec![0.0; basis.coeff_len()];
        match *basis {
            Basis::Fourier2d { modes, .. } => {
                for m in 0..basis.mode_count() {
                    let (k1, k2) = basis.wavenumber(m);
                    if k1.unsigned_abs().max(k2.unsigned_abs()) as usize <= max_mode {
                        for s in 0..4 {
                            c[4 * m + s] = rng.gen_range(-1.0..1.0);
                        }
                    }
                }
                crate::spectral::hermitian_symmetrize(&mut c, modes);
                crate::spectral::leray_in_place(basis, &mut c);
            }
            Basis::Sine { modes, .. } => {
                for x in c.iter_mut().take(max_mode.min(modes)) {
                    *x = rng.gen_range(-1.0..1.0);
                }
            }
        }
        let v = PhaseVector::from_coeffs(*basis, c)?;
        let n = v.norm();
        if n > 0.0 {
            points.push(v.scaled(norm / n));
        }
    }
    SetSample::new(points)
}

/// Integrate every point of `initial` from time 0 to `horizon` in parallel.
pub fn ensemble<S: Evolution + ?Sized>(
    sys: &S,
    initial: &SetSample,
    horizon: f64,
) -> Result<Vec<Trajectory>> {
    initial
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| sys.integrate(p, 0.0, horizon).map_err(|e| tag_point(e, i)))
        .collect()
}

/// `R(t)A`: endpoints of runs started from every point of `A`.
pub fn reach_sample<S: Evolution + ?Sized>(sys: &S, a: &SetSample, t: f64) -> Result<SetSample> {
    if t < 0.0 {
        return Err(Error::invalid(format!("reach time must be >= 0, got {t}")));
    }
    if let Some(b) = a.basis() {
        b.ensure_same(&sys.basis())?;
    }
    if t == 0.0 {
        return Ok(a.clone());
    }
    let ends: Result<Vec<PhaseVector>> = a
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            sys.integrate(p, 0.0, t)
                .map(|tr| tr.last().clone())
                .map_err(|e| tag_point(e, i))
        })
        .collect();
    SetSample::new(ends?)
}

/// Snapshots at `t_transient + k·stride ≤ t_horizon` of runs started in `A`:
/// an outer finite approximation of ω(A).
pub fn omega_limit_sample<S: Evolution + ?Sized>(
    sys: &S,
    a: &SetSample,
    t_transient: f64,
    t_horizon: f64,
    stride: f64,
) -> Result<SetSample> {
    let runs = omega_runs(sys, a, t_transient, t_horizon, stride)?;
    snapshots(&runs, t_transient, t_horizon, stride)
}

fn omega_runs<S: Evolution + ?Sized>(
    sys: &S,
    a: &SetSample,
    t_transient: f64,
    t_horizon: f64,
    stride: f64,
) -> Result<Vec<Trajectory>> {
    if !(t_horizon > t_transient && t_transient >= 0.0) {
        return Err(Error::invalid(format!(
            "need t_horizon > t_transient >= 0, got {t_transient}, {t_horizon}"
        )));
    }
    if !(stride > 0.0) {
        return Err(Error::invalid("stride must be positive"));
    }
    if let Some(b) = a.basis() {
        b.ensure_same(&sys.basis())?;
    }
    ensemble(sys, a, t_horizon)
}

/// Snapshots of stored runs at `t_transient + k·stride ≤ t_horizon`.
pub fn snapshots(
    runs: &[Trajectory],
    t_transient: f64,
    t_horizon: f64,
    stride: f64,
) -> Result<SetSample> {
    let mut points = Vec::new();
    for run in runs {
        let step = grid_offset(stride, run.dt())?;
        let first = run.index_of(t_transient)?;
        let last = run.index_of(t_horizon)?;
        let mut i = first;
        while i <= last {
            points.push(run.samples()[i].clone());
            i += step.max(1);
        }
    }
    SetSample::new(points)
}

/// ω-limit samples for several transients, with the Hausdorff distance of
/// each sample to the one with the largest transient.
#[derive(Clone, Debug, Serialize)]
pub struct OmegaProfile {
    pub transients: Vec<f64>,
    pub sample_sizes: Vec<usize>,
    pub distance_to_last: Vec<f64>,
    pub radius: Vec<f64>,
    pub note: &'static str,
}

/// Report ω-limit samples for increasing transients. Nested closures are not
/// computable, so the shrinking of these samples is the observable proxy.
pub fn omega_limit_profile<S: Evolution + ?Sized>(
    sys: &S,
    a: &SetSample,
    transients: &[f64],
    t_horizon: f64,
    stride: f64,
    center: &PhaseVector,
    spec: &MetricSpec,
) -> Result<OmegaProfile> {
    let first = transients
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let runs = omega_runs(sys, a, first, t_horizon, stride)?;
    let samples: Vec<SetSample> = transients
        .iter()
        .map(|&tau| snapshots(&runs, tau, t_horizon, stride))
        .collect::<Result<_>>()?;
    let last = samples.last().ok_or(Error::EmptySet)?;
    let mut distance_to_last = Vec::new();
    let mut radius = Vec::new();
    for s in &samples {
        distance_to_last.push(hausdorff(s, last, spec)?);
        radius.push(s.radius_about(center, spec)?);
    }
    Ok(OmegaProfile {
        transients: transients.to_vec(),
        sample_sizes: samples.iter().map(SetSample::len).collect(),
        distance_to_last,
        radius,
        note: "empirical: finite snapshot unions stand in for the closure of the forward orbit",
    })
}

/// Result of the energy-inequality diagnostic.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyCheckReport {
    pub epsilon: f64,
    pub delta: f64,
    pub checked: usize,
    pub violations: usize,
    /// Largest `min_{t₀} (|u(t)| - |u(t₀)| - ε)` over violating sample times.
    pub worst_violation: f64,
    pub worst_time: Option<f64>,
}

/// For every sample time `t`, look for a grid time `t₀ ∈ [t - δ, t)` with
/// `|u(t)| ≤ |u(t₀)| + ε`.
pub fn check_energy_inequality(u: &Trajectory, eps: f64, delta: f64) -> Result<EnergyCheckReport> {
    if delta < u.dt() * (1.0 - 1e-9) {
        return Err(Error::invalid(format!(
            "delta = {delta} is shorter than the sample spacing {}",
            u.dt()
        )));
    }
    let norms = u.norms();
    // left end included so that delta = dt still has a candidate t0
    let back = ((delta / u.dt()) + 1e-9).floor().max(1.0) as usize;
    let mut report = EnergyCheckReport {
        epsilon: eps,
        delta,
        checked: 0,
        violations: 0,
        worst_violation: 0.0,
        worst_time: None,
    };
    for i in 1..norms.len() {
        let lo = i.saturating_sub(back);
        let best = norms[lo..i]
            .iter()
            .map(|n0| norms[i] - n0 - eps)
            .fold(f64::INFINITY, f64::min);
        report.checked += 1;
        if best > 0.0 {
            report.violations += 1;
            if best > report.worst_violation {
                report.worst_violation = best;
                report.worst_time = Some(u.time(i));
            }
        }
    }
    Ok(report)
}

/// Result of the weak-to-strong Cauchy diagnostic.
#[derive(Clone, Debug, Serialize)]
pub struct CauchyReport {
    pub weak_tolerance: f64,
    pub strong_tolerance: f64,
    pub times: usize,
    /// Fraction of grid times at which the tail of the sequence is weak-Cauchy.
    pub weak_cauchy_fraction: f64,
    /// Fraction of grid times at which the tail is strong-Cauchy.
    pub strong_cauchy_fraction: f64,
    pub note: &'static str,
}

/// Measure how often a weakly Cauchy sequence of runs is also strongly Cauchy.
///
/// At each grid time in `[0, T]` the tail `runs[n/2..]` is tested: weak-Cauchy
/// if all pairwise weak distances are below `tol_w`, strong-Cauchy if all
/// pairwise strong distances are below `sqrt(tol_w)`.
pub fn check_weak_to_strong(runs: &[Trajectory], horizon: f64, tol_w: f64) -> Result<CauchyReport> {
    if runs.len() < 2 {
        return Err(Error::invalid("need at least two runs"));
    }
    let strong_tol = tol_w.sqrt();
    let weak = MetricSpec::weak();
    let strong = MetricSpec::strong();
    let dt = runs[0].dt();
    let steps = grid_offset(horizon, dt)?;
    let tail = &runs[runs.len() / 2..];
    let tail = if tail.len() < 2 { &runs[runs.len() - 2..] } else { tail };
    let mut weak_ok = 0usize;
    let mut strong_ok = 0usize;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let pts: Vec<&PhaseVector> = tail
            .iter()
            .map(|r| r.index_of(t).map(|i| &r.samples()[i]))
            .collect::<Result<_>>()?;
        let mut wmax: f64 = 0.0;
        let mut smax: f64 = 0.0;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                wmax = wmax.max(weak.dist(pts[i], pts[j])?);
                smax = smax.max(strong.dist(pts[i], pts[j])?);
            }
        }
        if wmax < tol_w {
            weak_ok += 1;
        }
        if smax < strong_tol {
            strong_ok += 1;
        }
    }
    let n = (steps + 1) as f64;
    Ok(CauchyReport {
        weak_tolerance: tol_w,
        strong_tolerance: strong_tol,
        times: steps + 1,
        weak_cauchy_fraction: weak_ok as f64 / n,
        strong_cauchy_fraction: strong_ok as f64 / n,
        note: "diagnostic only: grid fraction replaces the almost-everywhere statement",
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Trajectory {
        let b = Basis::sine(1.0, 2);
        let samples = (0..n)
            .map(|i| PhaseVector::from_coeffs(b, vec![i as f64, 0.0]).unwrap())
            .collect();
        Trajectory::new(0.0, 0.1, samples, "ramp").unwrap()
    }

    #[test]
    fn translate_is_index_shift() {
        let u = ramp(100);
        assert_eq!(translate(&u, 0.0).unwrap(), u);
        let v = translate(&u, 1.0).unwrap();
        assert_eq!(v.len(), 90);
        assert_eq!(v.samples(), &u.samples()[10..]);
        let a = translate(&translate(&u, 0.3).unwrap(), 0.5).unwrap();
        let b = translate(&u, 0.8).unwrap();
        assert_eq!(a, b);
        assert!(translate(&u, 10.0).is_err());
        assert!(translate(&u, 0.05).is_err());
    }

    #[test]
    fn piece_window() {
        let u = Arc::new(ramp(50));
        let p = TrajectoryPiece::new(u.clone(), 0, 1.0, 1.0).unwrap();
        assert_eq!(p.len(), 11);
        assert_eq!(p.sample(0).coeffs()[0], 10.0);
        assert!((p.duration() - 1.0).abs() < 1e-12);
        assert!(TrajectoryPiece::new(u, 0, 4.5, 1.0).is_err());
    }

    #[test]
    fn energy_check_constant_and_decay() {
        let b = Basis::sine(1.0, 1);
        let c = Trajectory::constant(PhaseVector::unit(b, 0), 0.0, 0.1, 20).unwrap();
        assert_eq!(check_energy_inequality(&c, 1e-9, 0.2).unwrap().violations, 0);
        let decay: Vec<_> = (0..50)
            .map(|i| PhaseVector::unit(b, 0).scaled((-0.1 * i as f64).exp()))
            .collect();
        let d = Trajectory::new(0.0, 0.1, decay, "decay").unwrap();
        assert_eq!(check_energy_inequality(&d, 1e-12, 0.1).unwrap().violations, 0);
        let grow = ramp(10);
        let r = check_energy_inequality(&grow, 0.5, 0.1).unwrap();
        assert_eq!(r.violations, 9);
        assert!((r.worst_violation - 0.5).abs() < 1e-12);
    }

    #[test]
    fn absorbing_entry_time() {
        let ball = AbsorbingBall::from_floor(1.0, 2.0);
        assert!((ball.radius - 2f64.sqrt()).abs() < 1e-15);
        let t = ball.entry_time(10.0);
        assert!((ball.bound_at(10.0, t) - ball.radius).abs() < 1e-12);
        assert_eq!(ball.entry_time(0.5), 0.0);
        assert!(ball.entry_time_to(1.0, 0.5).is_infinite());
    }
}
