//! Integrating-factor (Lawson) RK4 for `y' = −Λ y + N(t, y)` with diagonal `Λ`.
//!
//! ```text
//! k1 = N(t, y)
//! k2 = N(t + h/2, E½ (y + h/2 k1))
//! k3 = N(t + h/2, E½ y + h/2 k2)
//! k4 = N(t + h, E y + h E½ k3)
//! y⁺ = E y + h/6 (E k1 + 2 E½ (k2 + k3) + k4)
//! ```
//!
//! with `E = e^{−Λh}`, `E½ = e^{−Λh/2}`. The linear part is integrated exactly.

use crate::error::{Error, Result};
use crate::phase::PhaseVector;
use crate::systems::{AbsorbingBall, Trajectory};

pub(crate) struct Lawson {
    decay: Vec<f64>,
    h: f64,
    e_half: Vec<f64>,
    e_full: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
}

impl Lawson {
    pub(crate) fn new(decay: Vec<f64>) -> Self {
        let n = decay.len();
        Lawson {
            decay,
            h: f64::NAN,
            e_half: vec![0.0; n],
            e_full: vec![0.0; n],
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            stage: vec![0.0; n],
        }
    }

    fn set_h(&mut self, h: f64) {
        if self.h == h {
            return;
        }
        self.h = h;
        for ((l, e1), e2) in self.decay.iter().zip(&mut self.e_half).zip(&mut self.e_full) {
            *e1 = (-l * 0.5 * h).exp();
            *e2 = (-l * h).exp();
        }
    }

    pub(crate) fn step<F>(&mut self, t: f64, h: f64, y: &mut [f64], rhs: &mut F) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        self.set_h(h);
        let half = 0.5 * h;
        rhs(t, y, &mut self.k1)?;
        for i in 0..y.len() {
            self.stage[i] = self.e_half[i] * (y[i] + half * self.k1[i]);
        }
        rhs(t + half, &self.stage, &mut self.k2)?;
        for i in 0..y.len() {
            self.stage[i] = self.e_half[i] * y[i] + half * self.k2[i];
        }
        rhs(t + half, &self.stage, &mut self.k3)?;
        for i in 0..y.len() {
            self.stage[i] = self.e_full[i] * y[i] + h * self.e_half[i] * self.k3[i];
        }
        rhs(t + h, &self.stage, &mut self.k4)?;
        let sixth = h / 6.0;
        for i in 0..y.len() {
            y[i] = self.e_full[i] * y[i]
                + sixth
                    * (self.e_full[i] * self.k1[i]
                        + 2.0 * self.e_half[i] * (self.k2[i] + self.k3[i])
                        + self.k4[i]);
        }
        Ok(())
    }
}

/// Step counts of a sampled integration on `[t0, t1]`.
pub(crate) struct Schedule {
    pub samples: usize,
    pub steps_per_sample: usize,
}

pub(crate) fn schedule(t0: f64, t1: f64, dt: f64, sample_dt: f64) -> Result<Schedule> {
    if !(t1 >= t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::invalid(format!("invalid time span [{t0}, {t1}]")));
    }
    let steps_per_sample = crate::phase::grid_offset(sample_dt, dt)?;
    if steps_per_sample == 0 {
        return Err(Error::invalid("sample spacing must be at least one step"));
    }
    let samples = crate::phase::grid_offset(t1 - t0, sample_dt)?;
    Ok(Schedule {
        samples,
        steps_per_sample,
    })
}

/// Drive `stepper` over `[t0, t1]`, taking `substeps(t, y)` equal substeps per
/// base step and storing every `sample_dt`. Every stored sample is checked
/// against the divergence guard of `ball`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run<F, S>(
    stepper: &mut Lawson,
    u0: &PhaseVector,
    t0: f64,
    t1: f64,
    dt: f64,
    sample_dt: f64,
    ball: &AbsorbingBall,
    symbol_id: String,
    rhs: &mut F,
    substeps: &mut S,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    S: FnMut(f64, &[f64]) -> usize,
{
    let plan = schedule(t0, t1, dt, sample_dt)?;
    let guard = ball.guard(u0.norm());
    let basis = *u0.basis();
    let mut y = u0.coeffs().to_vec();
    let mut samples = Vec::with_capacity(plan.samples + 1);
    samples.push(u0.clone());
    let mut step = 0usize;
    for _ in 0..plan.samples {
        for _ in 0..plan.steps_per_sample {
            let t = t0 + step as f64 * dt;
            let n = substeps(t, &y).max(1);
            let h = dt / n as f64;
            for s in 0..n {
                stepper.step(t + s as f64 * h, h, &mut y, rhs)?;
            }
            step += 1;
        }
        let v = PhaseVector::from_coeffs(basis, y.clone())?;
        let norm = v.norm();
        if !(norm <= guard) {
            return Err(Error::Diverged {
                time: t0 + step as f64 * dt,
                norm,
                guard,
                point: 0,
            });
        }
        samples.push(v);
    }
    Trajectory::new(t0, sample_dt, samples, symbol_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_part_is_exact() {
        let mut st = Lawson::new(vec![2.0, 0.5]);
        let mut y = vec![1.0, -3.0];
        let mut zero = |_t: f64, _y: &[f64], out: &mut [f64]| {
            out.iter_mut().for_each(|x| *x = 0.0);
            Ok(())
        };
        for _ in 0..10 {
            st.step(0.0, 0.1, &mut y, &mut zero).unwrap();
        }
        assert!((y[0] - (-2.0f64).exp()).abs() < 1e-15);
        assert!((y[1] + 3.0 * (-0.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn fourth_order_on_forced_decay() {
        // y' = −y + cos t, y(0) = 1
        let exact = |t: f64| 0.5 * (t.cos() + t.sin()) + 0.5 * (-t).exp();
        let err = |h: f64| {
            let mut st = Lawson::new(vec![1.0]);
            let mut y = vec![1.0];
            let n = (2.0 / h).round() as usize;
            let mut rhs = |t: f64, _y: &[f64], out: &mut [f64]| {
                out[0] = t.cos();
                Ok(())
            };
            for i in 0..n {
                st.step(i as f64 * h, h, &mut y, &mut rhs).unwrap();
            }
            (y[0] - exact(2.0)).abs()
        };
        let order = (err(0.1) / err(0.05)).log2();
        assert!((order - 4.0).abs() < 0.3, "order {order}");
    }
}
