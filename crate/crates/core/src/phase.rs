//! Phase-space points and the metrics used to compare them.
//!
//! A [`PhaseVector`] stores the coefficients of a field in a fixed orthonormal
//! Galerkin basis, so the strong (L²) distance is the Euclidean distance of the
//! coefficient arrays. The weak distance is the weighted series
//!
//! ```text
//! d_w(u, v) = Σ_κ b^{-|κ|} δ_κ / (1 + δ_κ),   δ_κ = |u_κ - v_κ|
//! ```
//!
//! which metrizes the weak topology on bounded sets.
//!
//! Two bases are supported:
//!
//! * [`Basis::Fourier2d`]: velocity fields on the periodic box `[0, L]²`,
//!   orthonormal modes `e^{iκ·x} / L` with integer wavenumbers
//!   `|k₁|, |k₂| ≤ K`. Each mode carries a complex 2-vector stored as
//!   `[Re u_x, Im u_x, Re u_y, Im u_y]`, modes ordered row-major in
//!   `(k₁ + K, k₂ + K)`. The mode norm is `|k₁| + |k₂|`.
//! * [`Basis::Sine`]: scalar fields on `[0, ℓ]` with Dirichlet conditions,
//!   orthonormal modes `√(2/ℓ) sin(kπx/ℓ)`, `k = 1..=M`. The mode norm is
//!   `k - 1`, so the lowest mode has weight 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::systems::Trajectory;

const MAX_FOURIER_MODES: usize = 1 << 12;
const MAX_SINE_MODES: usize = 1 << 24;

/// Galerkin basis a [`PhaseVector`] is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Basis {
    Fourier2d { length: f64, modes: usize },
    Sine { length: f64, modes: usize },
}

impl Basis {
    pub fn fourier2d(length: f64, modes: usize) -> Self {
        Basis::Fourier2d { length, modes }
    }

    pub fn sine(length: f64, modes: usize) -> Self {
        Basis::Sine { length, modes }
    }

    /// Stable textual identifier, e.g. `fourier2d(L=6.283185307179586,K=16)`.
    pub fn id(&self) -> String {
        match self {
            Basis::Fourier2d { length, modes } => format!("fourier2d(L={length},K={modes})"),
            Basis::Sine { length, modes } => format!("sine(l={length},M={modes})"),
        }
    }

    pub fn length(&self) -> f64 {
        match *self {
            Basis::Fourier2d { length, .. } | Basis::Sine { length, .. } => length,
        }
    }

    /// Number of retained modes (including the zero mode for Fourier).
    pub fn mode_count(&self) -> usize {
        match *self {
            Basis::Fourier2d { modes, .. } => (2 * modes + 1) * (2 * modes + 1),
            Basis::Sine { modes, .. } => modes,
        }
    }

    /// Number of `f64` slots per mode.
    pub fn mode_stride(&self) -> usize {
        match self {
            Basis::Fourier2d { .. } => 4,
            Basis::Sine { .. } => 1,
        }
    }

    pub fn coeff_len(&self) -> usize {
        self.mode_count() * self.mode_stride()
    }

    /// Integer wavenumber pair of a Fourier mode index.
    pub fn wavenumber(&self, mode: usize) -> (i64, i64) {
        match *self {
            Basis::Fourier2d { modes, .. } => {
                let side = 2 * modes + 1;
                let k1 = (mode / side) as i64 - modes as i64;
                let k2 = (mode % side) as i64 - modes as i64;
                (k1, k2)
            }
            Basis::Sine { .. } => (mode as i64 + 1, 0),
        }
    }

    /// Mode index of a Fourier wavenumber pair, if retained.
    pub fn fourier_index(&self, k1: i64, k2: i64) -> Option<usize> {
        match *self {
            Basis::Fourier2d { modes, .. } => {
                let k = modes as i64;
                if k1.abs() > k || k2.abs() > k {
                    return None;
                }
                let side = 2 * modes + 1;
                Some((k1 + k) as usize * side + (k2 + k) as usize)
            }
            Basis::Sine { .. } => None,
        }
    }

    /// `|κ|` used by the weak metric weights.
    pub fn mode_norm(&self, mode: usize) -> u32 {
        match self {
            Basis::Fourier2d { .. } => {
                let (k1, k2) = self.wavenumber(mode);
                (k1.unsigned_abs() + k2.unsigned_abs()) as u32
            }
            Basis::Sine { .. } => mode as u32,
        }
    }

    /// Eigenvalue of the (Stokes / Dirichlet) Laplacian on a mode.
    pub fn eigenvalue(&self, mode: usize) -> f64 {
        match *self {
            Basis::Fourier2d { length, .. } => {
                let (k1, k2) = self.wavenumber(mode);
                let s = 2.0 * std::f64::consts::PI / length;
                s * s * (k1 * k1 + k2 * k2) as f64
            }
            Basis::Sine { length, .. } => {
                let s = (mode as f64 + 1.0) * std::f64::consts::PI / length;
                s * s
            }
        }
    }

    /// First nonzero eigenvalue λ₁.
    pub fn first_eigenvalue(&self) -> f64 {
        match *self {
            Basis::Fourier2d { length, .. } => (2.0 * std::f64::consts::PI / length).powi(2),
            Basis::Sine { length, .. } => (std::f64::consts::PI / length).powi(2),
        }
    }

    pub fn ensure_same(&self, other: &Basis) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::BasisMismatch {
                left: self.id(),
                right: other.id(),
            })
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (length, modes) = match *self {
            Basis::Fourier2d { length, modes } | Basis::Sine { length, modes } => (length, modes),
        };
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::invalid(format!("basis length must be positive, got {length}")));
        }
        if modes == 0 {
            return Err(Error::invalid("basis must retain at least one mode"));
        }
        let limit = match self {
            Basis::Fourier2d { .. } => MAX_FOURIER_MODES,
            Basis::Sine { .. } => MAX_SINE_MODES,
        };
        if modes > limit {
            return Err(Error::invalid(format!("{modes} modes exceed the supported {limit}")));
        }
        Ok(())
    }
}

/// A point of the phase space: coefficients in a fixed orthonormal basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PhaseVectorRepr")]
pub struct PhaseVector {
    basis: Basis,
    coeffs: Vec<f64>,
}

#[derive(Deserialize)]
struct PhaseVectorRepr {
    basis: Basis,
    coeffs: Vec<f64>,
}

impl TryFrom<PhaseVectorRepr> for PhaseVector {
    type Error = Error;

    fn try_from(r: PhaseVectorRepr) -> Result<Self> {
        r.basis.validate()?;
        PhaseVector::from_coeffs(r.basis, r.coeffs)
    }
}

impl PhaseVector {
    pub fn zeros(basis: Basis) -> Self {
        PhaseVector {
            basis,
            coeffs: vec![0.0; basis.coeff_len()],
        }
    }

    pub fn from_coeffs(basis: Basis, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.coeff_len() {
            return Err(Error::CoefficientLength {
                basis: basis.id(),
                expected: basis.coeff_len(),
                found: coeffs.len(),
            });
        }
        Ok(PhaseVector { basis, coeffs })
    }

    /// Unit vector in one real slot of the coefficient array.
    pub fn unit(basis: Basis, slot: usize) -> Self {
        let mut u = PhaseVector::zeros(basis);
        u.coeffs[slot] = 1.0;
        u
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn mode(&self, mode: usize) -> &[f64] {
        let s = self.basis.mode_stride();
        &self.coeffs[mode * s..(mode + 1) * s]
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// Strong (L²) norm `|u|`.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// L² inner product.
    pub fn dot(&self, other: &PhaseVector) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &PhaseVector) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> PhaseVector {
        PhaseVector {
            basis: self.basis,
            coeffs: self.coeffs.iter().map(|c| alpha * c).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}

/// Squared Euclidean distance of two coefficient slices.
#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += (x - y) * (x - y);
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

/// Squared distance, abandoning the sum once it exceeds `bound_sq`.
/// Returns a value `> bound_sq` in that case.
#[inline]
pub(crate) fn sq_dist_bounded(a: &[f64], b: &[f64], bound_sq: f64) -> f64 {
    const BLOCK: usize = 256;
    let mut total = 0.0;
    for (x, y) in a.chunks(BLOCK).zip(b.chunks(BLOCK)) {
        total += sq_dist(x, y);
        if total > bound_sq {
            return total;
        }
    }
    total
}

/// Which point metric to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Strong,
    Weak,
}

/// Metric selection and parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub kind: MetricKind,
    /// Base `b` of the weak weights `b^{-|κ|}`; must exceed 1.
    pub weight_base: f64,
    /// Number of terms `L_max` kept in the half-line trajectory metric.
    pub series_terms: usize,
}

impl Default for MetricSpec {
    fn default() -> Self {
        MetricSpec::strong()
    }
}

impl MetricSpec {
    pub fn strong() -> Self {
        MetricSpec {
            kind: MetricKind::Strong,
            weight_base: 2.0,
            series_terms: 20,
        }
    }

    pub fn weak() -> Self {
        MetricSpec {
            kind: MetricKind::Weak,
            ..MetricSpec::strong()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight_base > 1.0 && self.weight_base.is_finite()) {
            return Err(Error::invalid(format!(
                "weight_base must be > 1, got {}",
                self.weight_base
            )));
        }
        if self.series_terms == 0 {
            return Err(Error::invalid("series_terms must be >= 1"));
        }
        Ok(())
    }

    /// Point distance under this metric.
    pub fn dist(&self, u: &PhaseVector, v: &PhaseVector) -> Result<f64> {
        match self.kind {
            MetricKind::Strong => strong_dist(u, v),
            MetricKind::Weak => weak_dist(u, v, self),
        }
    }

    /// Unchecked point distance; caller guarantees matching bases.
    pub(crate) fn dist_raw(&self, u: &PhaseVector, v: &PhaseVector) -> f64 {
        match self.kind {
            MetricKind::Strong => sq_dist(&u.coeffs, &v.coeffs).sqrt(),
            MetricKind::Weak => weak_raw(u, v, self.weight_base),
        }
    }

    /// Upper bound of the weak series over the retained modes.
    pub fn weak_weight_sum(&self, basis: &Basis) -> f64 {
        (0..basis.mode_count())
            .map(|m| self.weight_base.powi(-(basis.mode_norm(m) as i32)))
            .sum()
    }
}

/// `|u - v|`, the L² distance by Parseval.
pub fn strong_dist(u: &PhaseVector, v: &PhaseVector) -> Result<f64> {
    u.basis.ensure_same(&v.basis)?;
    Ok(sq_dist(&u.coeffs, &v.coeffs).sqrt())
}

/// Weighted weak distance over the retained modes.
pub fn weak_dist(u: &PhaseVector, v: &PhaseVector, spec: &MetricSpec) -> Result<f64> {
    u.basis.ensure_same(&v.basis)?;
    spec.validate()?;
    Ok(weak_raw(u, v, spec.weight_base))
}

fn weak_raw(u: &PhaseVector, v: &PhaseVector, base: f64) -> f64 {
    let basis = u.basis;
    let stride = basis.mode_stride();
    let mut total = 0.0;
    for (m, (a, b)) in u
        .coeffs
        .chunks_exact(stride)
        .zip(v.coeffs.chunks_exact(stride))
        .enumerate()
    {
        let delta = sq_dist(a, b).sqrt();
        if delta > 0.0 {
            total += base.powi(-(basis.mode_norm(m) as i32)) * delta / (1.0 + delta);
        }
    }
    total
}

/// Finite sample of points sharing one basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetSample {
    pub points: Vec<PhaseVector>,
}

impl SetSample {
    pub fn new(points: Vec<PhaseVector>) -> Result<Self> {
        if let Some(first) = points.first() {
            for p in &points[1..] {
                first.basis.ensure_same(&p.basis)?;
            }
        }
        Ok(SetSample { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn basis(&self) -> Option<&Basis> {
        self.points.first().map(|p| &p.basis)
    }

    /// Largest distance from the sample to a given point.
    pub fn radius_about(&self, center: &PhaseVector, spec: &MetricSpec) -> Result<f64> {
        let mut r: f64 = 0.0;
        for p in &self.points {
            r = r.max(spec.dist(p, center)?);
        }
        Ok(r)
    }
}

/// `sup_{a∈A} inf_{b∈B} d(a, b)`.
pub fn directed_hausdorff(a: &SetSample, b: &SetSample, spec: &MetricSpec) -> Result<f64> {
    check_pair(a, b)?;
    Ok(directed_raw(a, b, spec))
}

fn directed_raw(a: &SetSample, b: &SetSample, spec: &MetricSpec) -> f64 {
    let mut worst: f64 = 0.0;
    for p in &a.points {
        let mut best = f64::INFINITY;
        for q in &b.points {
            let d = match spec.kind {
                // Strong: prune with squared partial sums.
                MetricKind::Strong => {
                    let sq = sq_dist_bounded(&p.coeffs, &q.coeffs, best * best);
                    sq.sqrt()
                }
                MetricKind::Weak => spec.dist_raw(p, q),
            };
            if d < best {
                best = d;
                if best <= worst {
                    break;
                }
            }
        }
        worst = worst.max(best);
    }
    worst
}

/// Symmetric Hausdorff distance of two finite samples.
pub fn hausdorff(a: &SetSample, b: &SetSample, spec: &MetricSpec) -> Result<f64> {
    check_pair(a, b)?;
    Ok(directed_raw(a, b, spec).max(directed_raw(b, a, spec)))
}

fn check_pair(a: &SetSample, b: &SetSample) -> Result<()> {
    match (a.basis(), b.basis()) {
        (Some(x), Some(y)) => x.ensure_same(y),
        _ => Err(Error::EmptySet),
    }
}

/// `sup_{t∈[a,b]} d(u(t), v(t))` on the shared sample grid.
pub fn traj_dist_window(
    u: &Trajectory,
    v: &Trajectory,
    a: f64,
    b: f64,
    spec: &MetricSpec,
) -> Result<f64> {
    let per_sample = aligned_distances(u, v, a, b, spec)?;
    Ok(per_sample.into_iter().fold(0.0, f64::max))
}

/// Truncated half-line metric with its tail bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalflineDistance {
    /// `Σ_{l=1}^{L_max} 2^{-l} d_l / (1 + d_l)`.
    pub value: f64,
    /// `2^{-L_max}`, the largest possible contribution of the dropped terms.
    pub tail_bound: f64,
}

/// Half-line trajectory metric truncated at `spec.series_terms` unit windows.
pub fn traj_dist_halfline(
    u: &Trajectory,
    v: &Trajectory,
    a: f64,
    spec: &MetricSpec,
) -> Result<HalflineDistance> {
    spec.validate()?;
    let terms = spec.series_terms;
    let end = a + terms as f64;
    let per_sample = aligned_distances(u, v, a, end, spec)?;
    let dt = u.dt();
    let mut value = 0.0;
    let mut running = 0.0f64;
    let mut idx = 0usize;
    for l in 1..=terms {
        let last = grid_offset(l as f64, dt)?;
        while idx <= last && idx < per_sample.len() {
            running = running.max(per_sample[idx]);
            idx += 1;
        }
        value += 0.5f64.powi(l as i32) * running / (1.0 + running);
    }
    Ok(HalflineDistance {
        value,
        tail_bound: 0.5f64.powi(terms as i32),
    })
}

/// Index offset of `span` on a grid of step `dt`, rejecting off-grid spans.
pub(crate) fn grid_offset(span: f64, dt: f64) -> Result<usize> {
    let x = span / dt;
    let n = x.round();
    if n < 0.0 || (x - n).abs() > 1e-6 {
        return Err(Error::GridMismatch(format!(
            "span {span} is not a multiple of dt = {dt}"
        )));
    }
    Ok(n as usize)
}

fn aligned_distances(
    u: &Trajectory,
    v: &Trajectory,
    a: f64,
    b: f64,
    spec: &MetricSpec,
) -> Result<Vec<f64>> {
    u.basis().ensure_same(v.basis())?;
    if ((u.dt() - v.dt()) / u.dt()).abs() > 1e-12 {
        return Err(Error::GridMismatch(format!(
            "dt {} vs {}",
            u.dt(),
            v.dt()
        )));
    }
    if b < a {
        return Err(Error::invalid(format!("empty window [{a}, {b}]")));
    }
    let (iu, ju) = u.index_range(a, b)?;
    let (iv, _) = v.index_range(a, b)?;
    let us = &u.samples()[iu..=ju];
    let vs = &v.samples()[iv..iv + us.len()];
    Ok(us
        .iter()
        .zip(vs)
        .map(|(x, y)| spec.dist_raw(x, y))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sine(m: usize) -> Basis {
        Basis::sine(1.0, m)
    }

    fn random(basis: Basis, rng: &mut ChaCha8Rng) -> PhaseVector {
        let c = (0..basis.coeff_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        PhaseVector::from_coeffs(basis, c).unwrap()
    }

    #[test]
    fn strong_single_mode() {
        let b = sine(8);
        let u = PhaseVector::zeros(b);
        let v = PhaseVector::unit(b, 3).scaled(3.0);
        assert_eq!(strong_dist(&u, &v).unwrap(), 3.0);
        assert_eq!(strong_dist(&u, &u).unwrap(), 0.0);
    }

    #[test]
    fn weak_single_terms() {
        let b = sine(8);
        let spec = MetricSpec::weak();
        let z = PhaseVector::zeros(b);
        // lowest sine mode has |κ| = 0
        let u = PhaseVector::unit(b, 0);
        assert_eq!(weak_dist(&u, &z, &spec).unwrap(), 0.5);
        let v = PhaseVector::unit(b, 1).scaled(3.0);
        assert_eq!(weak_dist(&v, &z, &spec).unwrap(), 0.375);
    }

    #[test]
    fn fourier_mode_norm_is_l1() {
        let b = Basis::fourier2d(1.0, 3);
        let m = b.fourier_index(-2, 1).unwrap();
        assert_eq!(b.wavenumber(m), (-2, 1));
        assert_eq!(b.mode_norm(m), 3);
        assert!(b.fourier_index(4, 0).is_none());
    }

    #[test]
    fn basis_mismatch_rejected() {
        let u = PhaseVector::zeros(sine(4));
        let v = PhaseVector::zeros(sine(5));
        assert!(matches!(strong_dist(&u, &v), Err(Error::BasisMismatch { .. })));
        assert!(weak_dist(&u, &v, &MetricSpec::weak()).is_err());
    }

    #[test]
    fn weak_bounded_by_weight_sum() {
        let b = Basis::fourier2d(1.0, 2);
        let spec = MetricSpec::weak();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random(b, &mut rng).scaled(100.0);
        let v = random(b, &mut rng).scaled(-100.0);
        assert!(weak_dist(&u, &v, &spec).unwrap() <= spec.weak_weight_sum(&b));
    }

    #[test]
    fn weak_but_not_strong_witness() {
        let b = sine(40);
        let spec = MetricSpec::weak();
        let z = PhaseVector::zeros(b);
        let mut prev = f64::INFINITY;
        for n in 0..40 {
            let u = PhaseVector::unit(b, n);
            assert_eq!(strong_dist(&u, &z).unwrap(), 1.0);
            let w = weak_dist(&u, &z, &spec).unwrap();
            assert!(w < prev);
            prev = w;
        }
        assert!(prev < 1e-11);
    }

    #[test]
    fn hausdorff_basics() {
        let b = sine(3);
        let spec = MetricSpec::strong();
        let a = SetSample::new(vec![PhaseVector::zeros(b)]).unwrap();
        let c = SetSample::new(vec![PhaseVector::zeros(b), PhaseVector::unit(b, 1)]).unwrap();
        assert_eq!(hausdorff(&a, &a, &spec).unwrap(), 0.0);
        assert_eq!(hausdorff(&a, &c, &spec).unwrap(), 1.0);
        assert_eq!(directed_hausdorff(&a, &c, &spec).unwrap(), 0.0);
        let empty = SetSample::new(vec![]).unwrap();
        assert!(matches!(hausdorff(&a, &empty, &spec), Err(Error::EmptySet)));
    }

    #[test]
    fn hausdorff_matches_double_loop() {
        let b = sine(6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for spec in [MetricSpec::strong(), MetricSpec::weak()] {
            let a = SetSample::new((0..10).map(|_| random(b, &mut rng)).collect()).unwrap();
            let c = SetSample::new((0..10).map(|_| random(b, &mut rng)).collect()).unwrap();
            let oracle = |x: &SetSample, y: &SetSample| {
                x.points
                    .iter()
                    .map(|p| {
                        y.points
                            .iter()
                            .map(|q| spec.dist(p, q).unwrap())
                            .fold(f64::INFINITY, f64::min)
                    })
                    .fold(0.0, f64::max)
            };
            let expected = oracle(&a, &c).max(oracle(&c, &a));
            let got = hausdorff(&a, &c, &spec).unwrap();
            assert!((got - expected).abs() <= 1e-12 * expected.max(1.0));
        }
    }
}
