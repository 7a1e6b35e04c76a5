//! Window norms of forces: translation boundedness and normality.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ForceClass, Symbol};
use crate::error::{Error, Result};

/// Every verdict here is read off a finite probe horizon.
pub const SAMPLED_DISCLAIMER: &str =
    "sampled necessary condition: sup over t measured on a finite probe grid (lower bound of the true sup)";

/// Window lengths `δ = 2^{-k}`, `k = 0..=20`.
pub const DEFAULT_DELTAS: [f64; 21] = {
    let mut d = [0.0; 21];
    let mut k = 0;
    let mut v = 1.0;
    while k < 21 {
        d[k] = v;
        v *= 0.5;
        k += 1;
    }
    d
};

/// Window starts `0, step, 2·step, …` with windows inside `[0, horizon]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub horizon: f64,
    pub step: f64,
}

impl Default for Probe {
    fn default() -> Self {
        Probe {
            horizon: 1000.0,
            step: 1.0 / 16.0,
        }
    }
}

impl Probe {
    fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.step > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid(format!(
                "probe needs positive horizon and step, got {:?}",
                self
            )));
        }
        Ok(())
    }

    fn starts(&self, window: f64) -> Vec<f64> {
        let last = ((self.horizon - window) / self.step + 1e-9).floor();
        if last < 0.0 {
            return vec![0.0];
        }
        (0..=last as usize).map(|k| k as f64 * self.step).collect()
    }
}

fn sup_window(sigma: &Symbol, window: f64, probe: &Probe) -> f64 {
    probe
        .starts(window)
        .par_iter()
        .map(|&t| sigma.force_square_integral(t, t + window))
        .reduce(|| 0.0, f64::max)
}

/// `sup_t ∫_t^{t+1} ‖g(s)‖²_{V'} ds` over the probe's window starts.
pub fn translation_bound_norm(sigma: &Symbol, probe: &Probe) -> Result<f64> {
    probe.validate()?;
    Ok(sup_window(sigma, 1.0, probe))
}

/// `sup_t ∫_t^{t+δ} ‖g(s)‖²_{V'} ds` over the probe's window starts.
pub fn normal_defect(sigma: &Symbol, delta: f64, probe: &Probe) -> Result<f64> {
    probe.validate()?;
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("window length must be positive, got {delta}")));
    }
    Ok(sup_window(sigma, delta, probe))
}

/// Sweep `δ` downward through `deltas`; normal at level `eps` once the
/// defect drops to `eps` or below. Returns the verdict and the defect table.
pub fn is_normal(sigma: &Symbol, eps: f64, deltas: &[f64], probe: &Probe) -> Result<(bool, Vec<(f64, f64)>)> {
    let mut table = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let defect = normal_defect(sigma, d, probe)?;
        table.push((d, defect));
        if defect <= eps {
            return Ok((true, table));
        }
    }
    Ok((false, table))
}

#[derive(Clone, Debug, Serialize)]
pub struct ForceReport {
    pub symbol: String,
    pub probe: Probe,
    /// Unit-window bound on the full horizon.
    pub translation_bound: f64,
    /// Unit-window bound on the first half of the horizon.
    pub half_horizon_bound: f64,
    /// `(δ, defect)` for every swept window length.
    pub defects: Vec<(f64, f64)>,
    /// Defect level that counts as small: `1e-3 · translation_bound`.
    pub tolerance: f64,
    pub normal: bool,
    pub translation_bounded: bool,
    pub truth: Option<ForceClass>,
    pub disclaimer: &'static str,
}

/// Classify a force on a probe horizon.
///
/// Normal iff the defect at the smallest swept `δ` is at most
/// `1e-3 ·` the unit-window bound; translation bounded iff the unit-window
/// bound is finite and at most doubles from half the horizon to the full one.
pub fn classify_force(sigma: &Symbol, deltas: &[f64], probe: &Probe) -> Result<ForceReport> {
    if deltas.is_empty() {
        return Err(Error::invalid("need at least one window length"));
    }
    let bound = translation_bound_norm(sigma, probe)?;
    let half = translation_bound_norm(
        sigma,
        &Probe {
            horizon: 0.5 * probe.horizon,
            ..*probe
        },
    )?;
    let tolerance = 1e-3 * bound;
    let mut defects = Vec::with_capacity(deltas.len());
    for &d in deltas {
        defects.push((d, normal_defect(sigma, d, probe)?));
    }
    let smallest = defects
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|&(_, v)| v)
        .unwrap_or(f64::INFINITY);
    Ok(ForceReport {
        symbol: sigma.id(),
        probe: *probe,
        translation_bound: bound,
        half_horizon_bound: half,
        defects,
        tolerance,
        normal: smallest <= tolerance,
        translation_bounded: bound.is_finite() && bound <= 2.0 * half,
        truth: sigma.force().truth(),
        disclaimer: SAMPLED_DISCLAIMER,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::{builtin_force, catalog_profile, Force, ForceParams};
    use crate::phase::Basis;

    fn symbol(name: &str) -> Symbol {
        let basis = Basis::sine(std::f64::consts::PI, 4);
        Symbol::new(name, builtin_force(name, &basis, ForceParams::default()).unwrap(), None)
    }

    fn short() -> Probe {
        Probe {
            horizon: 64.0,
            step: 1.0 / 16.0,
        }
    }

    #[test]
    fn constant_force_window_norms() {
        let s = symbol("constant");
        assert!((translation_bound_norm(&s, &short()).unwrap() - 1.0).abs() < 1e-12);
        let d = normal_defect(&s, 0.125, &short()).unwrap();
        assert!((d - 0.125).abs() < 1e-12);
    }

    #[test]
    fn sine_force_window_closed_form() {
        let basis = Basis::sine(1.0, 2);
        let g = catalog_profile(&basis, 1).unwrap().scaled(3.0);
        let force = Force::new(
            basis,
            vec![crate::forcing::ForceTerm {
                profile: crate::forcing::TimeProfile::Sine { omega: 1.0, phase: 0.0 },
                spatial: g,
            }],
        )
        .unwrap();
        let s = Symbol::new("sin", force, None);
        let probe = Probe {
            horizon: 20.0,
            step: 1.0 / 64.0,
        };
        // ∫_t^{t+1} sin² = 1/2 − (sin(2t+2) − sin 2t)/4 = 1/2 − sin(1)cos(2t+1)/2
        let exact_sup = (0..)
            .map(|k| k as f64 / 64.0)
            .take_while(|t| t + 1.0 <= 20.0)
            .map(|t| 0.5 - 0.5 * (1f64).sin() * (2.0 * t + 1.0).cos())
            .fold(0.0, f64::max)
            * 9.0;
        let got = translation_bound_norm(&s, &probe).unwrap();
        assert!((got - exact_sup).abs() < 1e-9, "{got} vs {exact_sup}");
    }

    #[test]
    fn spike_train_unit_window_sup() {
        // window [17/16, 33/16] catches the tail of spike 1 (mass 3/4) and all of spike 2
        let got = translation_bound_norm(&symbol("spike_train"), &short()).unwrap();
        assert!((got - 1.75).abs() < 1e-12, "{got}");
    }

    #[test]
    fn defect_monotone_in_delta() {
        for name in ["constant", "quasiperiodic", "spike_train", "decaying"] {
            let s = symbol(name);
            let mut prev = f64::INFINITY;
            for &d in &DEFAULT_DELTAS {
                let v = normal_defect(&s, d, &short()).unwrap();
                assert!(v <= prev + 1e-12, "{name}: δ = {d}");
                prev = v;
            }
        }
    }

    #[test]
    fn catalog_ground_truths() {
        for name in ["zero", "constant", "quasiperiodic", "decaying", "spike_train"] {
            let s = symbol(name);
            let rep = classify_force(&s, &DEFAULT_DELTAS, &short()).unwrap();
            let truth = s.force().truth().unwrap();
            assert_eq!(rep.normal, truth.is_normal(), "{name}");
            assert!(rep.translation_bounded, "{name}");
        }
    }

    #[test]
    fn translation_invariant_bound() {
        let s = symbol("constant");
        let a = translation_bound_norm(&s, &short()).unwrap();
        let b = translation_bound_norm(&s.translate(3.0), &short()).unwrap();
        assert_eq!(a, b);
    }
}
