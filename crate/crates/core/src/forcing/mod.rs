//! Time symbols `σ = (f, g)`: forces, nonlinearities and their translates.
//!
//! A [`Force`] is a finite sum `g(t) = Σ_i p_i(t) φ_i` of scalar time profiles
//! times fixed spatial fields. Square integrals `∫ ‖g‖²_{V'}` are computed
//! from the Gram matrix of the `φ_i` in `V'`, so window norms never need a
//! spatial grid.

mod classify;
mod hull;

pub use classify::{
    classify_force, is_normal, normal_defect, translation_bound_norm, ForceReport, Probe,
    DEFAULT_DELTAS, SAMPLED_DISCLAIMER,
};
pub use hull::{
    equicontinuity_modulus, log_times, pointwise_limit_probe, LimitProbe, ModulusTable,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Vars};
use crate::phase::{Basis, PhaseVector};
use crate::rds::Nonlinearity;
use crate::spectral::{leray_in_place, Fft2};

/// Last spike of [`TimeProfile::SpikeTrain`]; `4^n` overflows soon after.
pub const SPIKE_LAST: u32 = 500;

/// Scalar time profile of one force term.
#[derive(Clone, Debug, PartialEq)]
pub enum TimeProfile {
    Constant,
    /// `sin(ω t + φ)`.
    Sine { omega: f64, phase: f64 },
    /// `e^{-rate·T}`, `T = max(0, t)`.
    Decaying { rate: f64 },
    /// `Σ_{n≥1} 2ⁿ χ_{[n, n + 4^{-n})}(t)`: every spike has unit square mass.
    SpikeTrain,
    /// User expression in `t` and `T`.
    Expr(Expr),
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Sine { omega, phase } => (omega * t + phase).sin(),
            TimeProfile::Decaying { rate } => (-rate * t.max(0.0)).exp(),
            TimeProfile::SpikeTrain => {
                let n = t.floor();
                if n < 1.0 || n > SPIKE_LAST as f64 {
                    return 0.0;
                }
                let n = n as i32;
                if t - f64::from(n) < 4f64.powi(-n) {
                    2f64.powi(n)
                } else {
                    0.0
                }
            }
            TimeProfile::Expr(e) => e.eval(&Vars { t, ..Vars::default() }),
        }
    }

    /// Rough number of oscillations per unit time, used to size quadrature panels.
    fn scale(&self) -> f64 {
        match self {
            TimeProfile::Constant | TimeProfile::SpikeTrain => 1.0,
            TimeProfile::Sine { omega, .. } => 1.0 + omega.abs(),
            TimeProfile::Decaying { rate } => 1.0 + rate.abs(),
            TimeProfile::Expr(_) => 16.0,
        }
    }
}

/// Five-point Gauss–Legendre rule on `[-1, 1]`.
const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

fn gauss<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

fn composite<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| gauss(f, a + i as f64 * h, a + (i + 1) as f64 * h))
        .sum()
}

/// Spikes of the train meeting `[a, b]`, as `(n, lo, hi)` with the overlap
/// `[n + lo, n + hi]` expressed relative to `n` so narrow spikes keep their width.
fn spike_overlaps(a: f64, b: f64) -> impl Iterator<Item = (i32, f64, f64)> {
    let first = a.floor().max(1.0);
    let last = b.floor().min(SPIKE_LAST as f64);
    let range = if first <= last { first as i32..=last as i32 } else { 1..=0 };
    range.filter_map(move |n| {
        let w = 4f64.powi(-n);
        let lo = (a - n as f64).max(0.0);
        let hi = (b - n as f64).min(w);
        (hi > lo).then_some((n, lo, hi))
    })
}

/// `∫_a^b p(t) q(t) dt`.
fn pair_integral(p: &TimeProfile, q: &TimeProfile, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    match (p, q) {
        (TimeProfile::SpikeTrain, TimeProfile::SpikeTrain) => spike_overlaps(a, b)
            .map(|(n, lo, hi)| 4f64.powi(n) * (hi - lo))
            .sum(),
        (TimeProfile::SpikeTrain, other) | (other, TimeProfile::SpikeTrain) => {
            spike_overlaps(a, b)
                .map(|(n, lo, hi)| {
                    let base = n as f64;
                    2f64.powi(n) * gauss(&|s: f64| other.eval(base + s), lo, hi)
                })
                .sum()
        }
        _ => {
            let rate = p.scale() + q.scale();
            let panels = ((b - a) * rate).ceil().max(1.0) as usize;
            composite(&|t| p.eval(t) * q.eval(t), a, b, panels)
        }
    }
}

/// One term `p(t) φ` of a force.
#[derive(Clone, Debug, PartialEq)]
pub struct ForceTerm {
    pub profile: TimeProfile,
    pub spatial: PhaseVector,
}

/// Inclusion chain of force classes; each class contains the previous one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceClass {
    TranslationCompact,
    Normal,
    TranslationBounded,
}

impl ForceClass {
    pub fn is_normal(self) -> bool {
        self <= ForceClass::Normal
    }
}

/// Sum of separable terms `g(t) = Σ p_i(t) φ_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Force {
    basis: Basis,
    terms: Vec<ForceTerm>,
    /// `gram[i][j] = ⟨φ_i, φ_j⟩_{V'}`.
    gram: Vec<Vec<f64>>,
    truth: Option<ForceClass>,
}

/// `⟨a, b⟩_{V'} = Σ_κ a_κ · b_κ / λ_κ`; modes with `λ = 0` are skipped.
pub fn dual_inner(a: &PhaseVector, b: &PhaseVector) -> Result<f64> {
    a.basis().ensure_same(b.basis())?;
    let basis = a.basis();
    let stride = basis.mode_stride();
    let mut acc = 0.0;
    for m in 0..basis.mode_count() {
        let lambda = basis.eigenvalue(m);
        if lambda == 0.0 {
            continue;
        }
        let (x, y) = (a.mode(m), b.mode(m));
        acc += (0..stride).map(|s| x[s] * y[s]).sum::<f64>() / lambda;
    }
    Ok(acc)
}

/// `‖g‖_{V'}` of a single field.
pub fn dual_norm(g: &PhaseVector) -> f64 {
    dual_inner(g, g).map(f64::sqrt).unwrap_or(0.0)
}

impl Force {
    pub fn new(basis: Basis, terms: Vec<ForceTerm>) -> Result<Self> {
        for term in &terms {
            basis.ensure_same(term.spatial.basis())?;
        }
        let n = terms.len();
        let mut gram = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let g = dual_inner(&terms[i].spatial, &terms[j].spatial)?;
                gram[i][j] = g;
                gram[j][i] = g;
            }
        }
        Ok(Force {
            basis,
            terms,
            gram,
            truth: None,
        })
    }

    pub fn zero(basis: Basis) -> Self {
        Force {
            basis,
            terms: Vec::new(),
            gram: Vec::new(),
            truth: Some(ForceClass::TranslationCompact),
        }
    }

    /// Time-independent force `g(t) = g`.
    pub fn constant(g: PhaseVector) -> Self {
        let basis = *g.basis();
        let mut f = Force::new(
            basis,
            vec![ForceTerm {
                profile: TimeProfile::Constant,
                spatial: g,
            }],
        )
        .expect("single term shares its own basis");
        f.truth = Some(ForceClass::TranslationCompact);
        f
    }

    pub fn with_truth(mut self, class: ForceClass) -> Self {
        self.truth = Some(class);
        self
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn terms(&self) -> &[ForceTerm] {
        &self.terms
    }

    /// Ground-truth class of catalog forces.
    pub fn truth(&self) -> Option<ForceClass> {
        self.truth
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_autonomous(&self) -> bool {
        self.terms.iter().all(|t| t.profile == TimeProfile::Constant)
    }

    /// Add `g(t)` to `out`.
    pub fn add_into(&self, t: f64, out: &mut [f64]) {
        for term in &self.terms {
            let p = term.profile.eval(t);
            if p != 0.0 {
                for (o, c) in out.iter_mut().zip(term.spatial.coeffs()) {
                    *o += p * c;
                }
            }
        }
    }

    pub fn eval(&self, t: f64) -> PhaseVector {
        let mut g = PhaseVector::zeros(self.basis);
        self.add_into(t, g.coeffs_mut());
        g
    }

    /// `‖g(t)‖²_{V'}`.
    pub fn dual_norm_sq(&self, t: f64) -> f64 {
        let p: Vec<f64> = self.terms.iter().map(|x| x.profile.eval(t)).collect();
        let mut acc = 0.0;
        for (i, pi) in p.iter().enumerate() {
            for (j, pj) in p.iter().enumerate() {
                acc += self.gram[i][j] * pi * pj;
            }
        }
        acc
    }

    /// `∫_a^b ‖g(s)‖²_{V'} ds`.
    pub fn square_integral(&self, a: f64, b: f64) -> f64 {
        let n = self.terms.len();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..=i {
                let g = self.gram[i][j];
                if g == 0.0 {
                    continue;
                }
                let w = if i == j { 1.0 } else { 2.0 };
                acc += w * g * pair_integral(&self.terms[i].profile, &self.terms[j].profile, a, b);
            }
        }
        acc.max(0.0)
    }
}

/// Catalog parameters of [`builtin_force`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForceParams {
    /// Size of `‖g(t)‖_{V'}` per term.
    pub amplitude: f64,
    /// First frequency of the quasiperiodic force; the second is `√2` times it.
    pub omega: f64,
    /// Decay rate of the decaying force.
    pub rate: f64,
}

impl Default for ForceParams {
    fn default() -> Self {
        ForceParams {
            amplitude: 1.0,
            omega: 1.0,
            rate: 1.0,
        }
    }
}

/// Spatial profile `P1` (index 1) or `P2` (index 2) of the catalog, with unit
/// `V'` norm.
///
/// * Fourier: `P1 ∝ (sin(2πy/L), 0)`, `P2 ∝ (−1, 1) sin(2π(x + y)/L)`.
/// * Sine: `P1` and `P2` are the first two modes.
pub fn catalog_profile(basis: &Basis, index: usize) -> Result<PhaseVector> {
    let mut g = PhaseVector::zeros(*basis);
    match *basis {
        Basis::Fourier2d { length, modes } => {
            if modes < 1 {
                return Err(Error::invalid("catalog profiles need K >= 1"));
            }
            // sin θ = (e^{iθ} − e^{−iθ}) / 2i, times L for the orthonormal modes
            let half = length / 2.0;
            let c = g.coeffs_mut();
            let set = |c: &mut [f64], k1: i64, k2: i64, vals: [f64; 4]| {
                let m = basis.fourier_index(k1, k2).expect("retained mode");
                c[4 * m..4 * m + 4].copy_from_slice(&vals);
            };
            match index {
                1 => {
                    set(c, 0, 1, [0.0, -half, 0.0, 0.0]);
                    set(c, 0, -1, [0.0, half, 0.0, 0.0]);
                }
                2 => {
                    let s = half / std::f64::consts::SQRT_2;
                    set(c, 1, 1, [0.0, s, 0.0, -s]);
                    set(c, -1, -1, [0.0, -s, 0.0, s]);
                }
                _ => return Err(Error::invalid(format!("no catalog profile P{index}"))),
            }
        }
        Basis::Sine { modes, .. } => {
            if index == 0 || index > 2 || index > modes {
                return Err(Error::invalid(format!("no catalog profile P{index} for {}", basis.id())));
            }
            g.coeffs_mut()[index - 1] = 1.0;
        }
    }
    let n = dual_norm(&g);
    Ok(g.scaled(1.0 / n))
}

/// Spatial field from an expression in `x` (sine basis) or a stream function
/// `ψ(x, y)` (Fourier basis, velocity `(∂_y ψ, −∂_x ψ)`).
pub fn spatial_from_expr(basis: &Basis, src: &str) -> Result<PhaseVector> {
    let expr = Expr::parse(src)?;
    let mut g = PhaseVector::zeros(*basis);
    match *basis {
        Basis::Sine { length, modes } => {
            let st = crate::spectral::SineTransform::new(length, modes);
            let values: Vec<f64> = st
                .grid()
                .iter()
                .map(|&x| expr.eval(&Vars { x, ..Vars::default() }))
                .collect();
            st.analyze(&values, g.coeffs_mut());
        }
        Basis::Fourier2d { length, modes } => {
            let fft = Fft2::new(length, modes, true);
            let mut work = fft.work();
            let grid: Vec<f64> = fft
                .grid_points()
                .iter()
                .map(|&(x, y)| expr.eval(&Vars { x, y, ..Vars::default() }))
                .collect();
            let psi = fft.scalar_to_modes(&grid, &mut work);
            let s = 2.0 * std::f64::consts::PI / length;
            let c = g.coeffs_mut();
            for (m, p) in psi.iter().enumerate() {
                let (k1, k2) = basis.wavenumber(m);
                let ux = num_complex::Complex64::new(0.0, s * k2 as f64) * p;
                let uy = num_complex::Complex64::new(0.0, -s * k1 as f64) * p;
                c[4 * m..4 * m + 4].copy_from_slice(&[ux.re, ux.im, uy.re, uy.im]);
            }
            leray_in_place(basis, c);
        }
    }
    if !g.is_finite() {
        return Err(Error::invalid(format!("spatial expression `{src}` is not finite on the grid")));
    }
    Ok(g)
}

/// Catalog forces: `constant`, `quasiperiodic`, `decaying`, `spike_train`,
/// `zero`. Each carries its ground-truth class.
///
/// * constant: `A P1`
/// * quasiperiodic: `A (sin(ωt) P1 + sin(√2 ωt) P2)`
/// * decaying: `A e^{-rT} P1`
/// * spike_train: `Σ 2ⁿ χ_{[n, n+4^{-n})} A P1`
pub fn builtin_force(name: &str, basis: &Basis, params: ForceParams) -> Result<Force> {
    let a = params.amplitude;
    if !a.is_finite() {
        return Err(Error::invalid("force amplitude must be finite"));
    }
    let term = |profile: TimeProfile, index: usize| -> Result<ForceTerm> {
        Ok(ForceTerm {
            profile,
            spatial: catalog_profile(basis, index)?.scaled(a),
        })
    };
    let (terms, class) = match name {
        "zero" => return Ok(Force::zero(*basis)),
        "constant" => (vec![term(TimeProfile::Constant, 1)?], ForceClass::TranslationCompact),
        "quasiperiodic" => (
            vec![
                term(TimeProfile::Sine { omega: params.omega, phase: 0.0 }, 1)?,
                term(
                    TimeProfile::Sine {
                        omega: std::f64::consts::SQRT_2 * params.omega,
                        phase: 0.0,
                    },
                    2,
                )?,
            ],
            ForceClass::TranslationCompact,
        ),
        "decaying" => (
            vec![term(TimeProfile::Decaying { rate: params.rate }, 1)?],
            ForceClass::TranslationCompact,
        ),
        "spike_train" => (vec![term(TimeProfile::SpikeTrain, 1)?], ForceClass::TranslationBounded),
        other => return Err(Error::UnknownBuiltin(other.to_string())),
    };
    Ok(Force::new(*basis, terms)?.with_truth(class))
}

/// Time symbol `σ = (f, g)` translated by `shift`: `σ(t) = σ₀(t + shift)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Symbol {
    id: String,
    force: Force,
    nonlinearity: Option<Nonlinearity>,
    shift: f64,
}

impl Symbol {
    pub fn new(id: impl Into<String>, force: Force, nonlinearity: Option<Nonlinearity>) -> Self {
        Symbol {
            id: id.into(),
            force,
            nonlinearity,
            shift: 0.0,
        }
    }

    /// Unforced symbol in `basis`.
    pub fn zero(basis: Basis) -> Self {
        Symbol::new("zero", Force::zero(basis), None)
    }

    /// Identifier including the translation, e.g. `quasiperiodic+2.5`.
    pub fn id(&self) -> String {
        if self.shift == 0.0 {
            self.id.clone()
        } else {
            format!("{}{:+}", self.id, self.shift)
        }
    }

    pub fn base_id(&self) -> &str {
        &self.id
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn force(&self) -> &Force {
        &self.force
    }

    pub fn nonlinearity(&self) -> Option<&Nonlinearity> {
        self.nonlinearity.as_ref()
    }

    pub fn basis(&self) -> &Basis {
        self.force.basis()
    }

    /// `T(h)σ`.
    pub fn translate(&self, h: f64) -> Symbol {
        Symbol {
            shift: self.shift + h,
            ..self.clone()
        }
    }

    pub fn add_force(&self, t: f64, out: &mut [f64]) {
        self.force.add_into(t + self.shift, out);
    }

    pub fn force_at(&self, t: f64) -> PhaseVector {
        self.force.eval(t + self.shift)
    }

    pub fn force_dual_norm_sq(&self, t: f64) -> f64 {
        self.force.dual_norm_sq(t + self.shift)
    }

    pub fn force_square_integral(&self, a: f64, b: f64) -> f64 {
        self.force.square_integral(a + self.shift, b + self.shift)
    }

    /// `f(v, t)`; zero when the symbol has no nonlinearity.
    pub fn reaction(&self, v: f64, t: f64) -> f64 {
        self.nonlinearity
            .as_ref()
            .map_or(0.0, |f| f.eval(v, t + self.shift))
    }

    pub fn is_autonomous(&self) -> bool {
        self.force.is_autonomous() && self.nonlinearity.as_ref().map_or(true, |f| f.is_autonomous())
    }
}
