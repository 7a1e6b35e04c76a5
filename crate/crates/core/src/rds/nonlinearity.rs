//! Time-dependent interaction functions `f(v, t)` and their structural checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Vars};

/// Declared constants of the dissipativity and growth conditions
///
/// ```text
/// γ|v|^p − C_diss ≤ f(v, t)·v
/// |f(v, t)|^{p/(p−1)} ≤ C_grow (|v|^p + 1)
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    pub p: f64,
    pub gamma: f64,
    pub c_diss: f64,
    pub c_grow: f64,
}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Zero,
    Linear,
    Cubic,
    ChafeeInfante { lambda: f64 },
    Example1 { p: f64 },
    Example2 { p: f64 },
    Example3 { p: f64 },
    Expr(Expr),
}

/// A continuous interaction function `f(v, t)` with declared constants.
#[derive(Clone, Debug, PartialEq)]
pub struct Nonlinearity {
    kind: Kind,
    constants: GrowthConstants,
    tag: String,
}

/// Smooth step ingredient `exp(-1/x)` for `x > 0`, zero otherwise.
fn smooth_tail(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// C^∞ cutoff equal to 1 for `|v| ≤ inner` and 0 for `|v| ≥ outer`:
/// `s(outer − |v|) / (s(outer − |v|) + s(|v| − inner))` with `s(x) = e^{-1/x}`.
pub fn cutoff(v: f64, inner: f64, outer: f64) -> f64 {
    let a = smooth_tail(outer - v.abs());
    let b = smooth_tail(v.abs() - inner);
    if a == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

fn signed_pow(v: f64, e: f64) -> f64 {
    // |v|^{e-1} v
    v.abs().powf(e - 1.0) * v
}

impl Nonlinearity {
    /// Built-in nonlinearities: `example1`, `example2`, `example3` (exponent
    /// `p ≥ 2`), `cubic` (`v³`), `linear` (`v`), `zero`.
    pub fn builtin(name: &str, p: f64) -> Result<Self> {
        let needs_p = matches!(name, "example1" | "example2" | "example3");
        if needs_p && !(p >= 2.0 && p.is_finite()) {
            return Err(Error::invalid(format!("exponent p must be >= 2, got {p}")));
        }
        let (kind, constants) = match name {
            "zero" => (
                Kind::Zero,
                GrowthConstants { p: 2.0, gamma: 0.0, c_diss: 0.0, c_grow: 1.0 },
            ),
            "linear" => (
                Kind::Linear,
                GrowthConstants { p: 2.0, gamma: 1.0, c_diss: 0.0, c_grow: 1.0 },
            ),
            "cubic" => (
                Kind::Cubic,
                GrowthConstants { p: 4.0, gamma: 1.0, c_diss: 0.0, c_grow: 1.0 },
            ),
            // γ = 2^{-p}, C = 5/2: the middle branch costs at most 1 + γ and
            // the last branch at most 5/2 after (v - c)^{p-1} v ≥ (v - c)^p.
            "example1" => (
                Kind::Example1 { p },
                GrowthConstants { p, gamma: 2f64.powf(-p), c_diss: 2.5, c_grow: 1.0 },
            ),
            // outer branches: f·v ≥ |w|^p with w = v ∓ 2π and |v|^p ≤ 2^{p-1}(|w|^p + (2π)^p)
            "example2" => {
                let two_pi = 2.0 * std::f64::consts::PI;
                (
                    Kind::Example2 { p },
                    GrowthConstants {
                        p,
                        gamma: 2f64.powf(1.0 - p),
                        c_diss: two_pi.powf(p) + two_pi,
                        c_grow: 1.0,
                    },
                )
            }
            "example3" => (
                Kind::Example3 { p },
                GrowthConstants {
                    p,
                    gamma: 2f64.powf(1.0 - p),
                    c_diss: 2f64.powf(p) + 2.0,
                    c_grow: 1.0,
                },
            ),
            other => return Err(Error::UnknownBuiltin(other.to_string())),
        };
        Ok(Nonlinearity {
            kind,
            constants,
            tag: name.to_string(),
        })
    }

    /// Chafee–Infante reaction `f(v) = v³ − λv`.
    pub fn chafee_infante(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::invalid("lambda must be finite"));
        }
        let l = lambda.abs();
        Ok(Nonlinearity {
            kind: Kind::ChafeeInfante { lambda },
            // v⁴ − λv² ≥ v⁴/2 − λ²/2
            constants: GrowthConstants {
                p: 4.0,
                gamma: 0.5,
                c_diss: 0.5 * l * l,
                c_grow: (1.0 + l).powf(4.0 / 3.0),
            },
            tag: format!("chafee_infante({lambda})"),
        })
    }

    /// User expression in `v`, `t` and `T` with declared constants.
    pub fn from_expr(src: &str, constants: GrowthConstants) -> Result<Self> {
        let expr = Expr::parse(src)?;
        if !(constants.p >= 2.0) {
            return Err(Error::invalid(format!("p must be >= 2, got {}", constants.p)));
        }
        Ok(Nonlinearity {
            kind: Kind::Expr(expr),
            constants,
            tag: format!("expr({src})"),
        })
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn constants(&self) -> &GrowthConstants {
        &self.constants
    }

    /// True when `f` does not depend on time.
    pub fn is_autonomous(&self) -> bool {
        match &self.kind {
            Kind::Zero | Kind::Linear | Kind::Cubic | Kind::ChafeeInfante { .. } => true,
            Kind::Example1 { .. } | Kind::Example2 { .. } | Kind::Example3 { .. } => false,
            Kind::Expr(e) => !e.uses("t"),
        }
    }

    pub fn eval(&self, v: f64, t: f64) -> f64 {
        let tp = t.max(0.0);
        match &self.kind {
            Kind::Zero => 0.0,
            Kind::Linear => v,
            Kind::Cubic => v * v * v,
            Kind::ChafeeInfante { lambda } => v * v * v - lambda * v,
            Kind::Example1 { p } => {
                let c = 1.0 / (1.0 + tp);
                if v <= 0.0 {
                    signed_pow(v, *p - 1.0)
                } else if v <= c {
                    -(1.0 + tp) * v
                } else {
                    (v - c).powf(*p - 1.0) - 1.0
                }
            }
            Kind::Example2 { p } => {
                let two_pi = 2.0 * std::f64::consts::PI;
                if v <= -two_pi {
                    signed_pow(v + two_pi, *p - 1.0)
                } else if v >= two_pi {
                    (v - two_pi).powf(*p - 1.0)
                } else {
                    cutoff(v, std::f64::consts::PI, two_pi) * ((1.0 + tp) * v).sin()
                }
            }
            Kind::Example3 { p } => {
                if v <= -2.0 {
                    signed_pow(v + 2.0, *p - 1.0)
                } else if v >= 2.0 {
                    (v - 2.0).powf(*p - 1.0)
                } else {
                    let outer = 2.0 - 0.5 / (1.0 + tp);
                    let inner = 2.0 - 1.0 / (1.0 + tp);
                    cutoff(v, inner, outer) * (tp * tp).sin()
                }
            }
            Kind::Expr(e) => e.eval(&Vars { v, t, x: 0.0, y: 0.0 }),
        }
    }

    /// Evaluate, rejecting non-finite results.
    pub fn try_eval(&self, v: f64, t: f64) -> Result<f64> {
        let y = self.eval(v, t);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::NonlinearityEval { v, t })
        }
    }
}

/// Worst margins of the dissipativity and growth conditions over a sample grid.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub tag: String,
    pub constants: GrowthConstants,
    /// `min (f·v − γ|v|^p + C_diss)` over the grid.
    pub dissipativity_margin: f64,
    pub dissipativity_worst: (f64, f64),
    /// `min (C_grow(|v|^p + 1) − |f|^{p/(p−1)})` over the grid.
    pub growth_margin: f64,
    pub growth_worst: (f64, f64),
    pub samples: usize,
    pub pass: bool,
}

/// Check the declared constants of `f` on every `(v, t)` grid pair.
pub fn validate_nonlinearity(f: &Nonlinearity, v_grid: &[f64], t_grid: &[f64]) -> Result<ValidationReport> {
    if v_grid.is_empty() || t_grid.is_empty() {
        return Err(Error::invalid("validation grid must be nonempty"));
    }
    let c = f.constants;
    let q = c.p / (c.p - 1.0);
    let mut rep = ValidationReport {
        tag: f.tag.clone(),
        constants: c,
        dissipativity_margin: f64::INFINITY,
        dissipativity_worst: (0.0, 0.0),
        growth_margin: f64::INFINITY,
        growth_worst: (0.0, 0.0),
        samples: 0,
        pass: false,
    };
    for &t in t_grid {
        for &v in v_grid {
            let y = f.try_eval(v, t)?;
            let vp = v.abs().powf(c.p);
            let md = y * v - c.gamma * vp + c.c_diss;
            let mg = c.c_grow * (vp + 1.0) - y.abs().powf(q);
            if md < rep.dissipativity_margin {
                rep.dissipativity_margin = md;
                rep.dissipativity_worst = (v, t);
            }
            if mg < rep.growth_margin {
                rep.growth_margin = mg;
                rep.growth_worst = (v, t);
            }
            rep.samples += 1;
        }
    }
    // relative slack for rounding in the power evaluations
    let scale = |v: f64| 1e-12 * (1.0 + v.abs().powf(c.p));
    let (vd, _) = rep.dissipativity_worst;
    let (vg, _) = rep.growth_worst;
    rep.pass = c.gamma > 0.0
        && rep.dissipativity_margin >= -scale(vd)
        && rep.growth_margin >= -scale(vg);
    Ok(rep)
}
