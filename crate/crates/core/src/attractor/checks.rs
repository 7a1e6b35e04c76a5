//! Equicontinuity, section and invariance diagnostics on harvested pieces.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::{greedy_cover, DistanceMatrix, PieceLibrary, PROXY_NOTE};
use crate::error::{Error, Result};
use crate::phase::{directed_hausdorff, grid_offset, MetricSpec, SetSample};
use crate::systems::{reach_sample, Evolution, Trajectory};

/// Modulus of continuity of the pieces.
#[derive(Clone, Debug, Serialize)]
pub struct ThetaTable {
    pub gaps: Vec<f64>,
    /// `θ(l) = max_{|t₁−t₂| ≤ l} d(v(t₁), v(t₂))` over all pieces.
    pub theta: Vec<f64>,
    /// The same maximum restricted to `|t₁−t₂| = l`.
    pub theta_exact: Vec<f64>,
    pub pieces: usize,
    pub note: &'static str,
}

impl ThetaTable {
    pub fn is_monotone(&self) -> bool {
        self.theta.windows(2).all(|w| w[0] <= w[1])
    }
}

/// `θ(l)` on the gaps `l_grid` (multiples of dt, at most T).
pub fn equicontinuity_modulus(lib: &PieceLibrary, l_grid: &[f64]) -> Result<ThetaTable> {
    let len = lib.pieces()[0].len();
    let mut steps = Vec::with_capacity(l_grid.len());
    for &l in l_grid {
        let g = grid_offset(l, lib.dt())?;
        if g >= len {
            return Err(Error::invalid(format!(
                "gap {l} exceeds the piece length {}",
                lib.duration()
            )));
        }
        steps.push(g);
    }
    // Overlapping pieces of one run share sample pairs; scan each run once.
    let mut by_source: BTreeMap<usize, (Arc<Trajectory>, Vec<usize>)> = BTreeMap::new();
    for p in lib.pieces() {
        by_source
            .entry(Arc::as_ptr(p.source()) as usize)
            .or_insert_with(|| (p.source().clone(), Vec::new()))
            .1
            .push(p.offset());
    }
    let sources: Vec<_> = by_source.into_values().collect();
    let metric = *lib.metric();
    let theta_exact: Vec<f64> = steps
        .iter()
        .map(|&g| {
            if g == 0 {
                return 0.0;
            }
            sources
                .par_iter()
                .map(|(run, offsets)| {
                    let s = run.samples();
                    let mut need = vec![false; s.len()];
                    for &o in offsets {
                        need[o..o + len - g].iter_mut().for_each(|x| *x = true);
                    }
                    need.iter()
                        .enumerate()
                        .filter(|&(_, &n)| n)
                        .map(|(i, _)| metric.dist_raw(&s[i], &s[i + g]))
                        .fold(0.0, f64::max)
                })
                .reduce(|| 0.0, f64::max)
        })
        .collect();
    // Sort by gap so the running max is over nested sets.
    let mut order: Vec<usize> = (0..steps.len()).collect();
    order.sort_by_key(|&i| steps[i]);
    let mut theta = vec![0.0; steps.len()];
    let mut running: f64 = 0.0;
    for &i in &order {
        running = running.max(theta_exact[i]);
        theta[i] = running;
    }
    Ok(ThetaTable {
        gaps: l_grid.to_vec(),
        theta,
        theta_exact,
        pieces: lib.len(),
        note: PROXY_NOTE,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SectionReport {
    pub times: Vec<f64>,
    /// Hausdorff distance between `{piece(t)}` and the ω-sample, per time.
    pub distances: Vec<f64>,
    /// `sup_{piece} inf_{ω}` per time.
    pub section_to_omega: Vec<f64>,
    /// `sup_{ω} inf_{piece}` per time.
    pub omega_to_section: Vec<f64>,
    pub max: f64,
    /// `max − min` of the distances over the times.
    pub spread: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub note: &'static str,
}

/// Compare piece sections at `times` with an ω-limit sample.
pub fn section_check(lib: &PieceLibrary, times: &[f64], omega: &SetSample, tol: f64) -> Result<SectionReport> {
    if times.is_empty() {
        return Err(Error::invalid("need at least one section time"));
    }
    let omega_basis = omega.basis().ok_or(Error::EmptySet)?;
    lib.basis().ensure_same(omega_basis)?;
    let metric = lib.metric();
    let mut fwd = Vec::with_capacity(times.len());
    let mut rev = Vec::with_capacity(times.len());
    for &t in times {
        let s = lib.section(t)?;
        fwd.push(directed_hausdorff(&s, omega, metric)?);
        rev.push(directed_hausdorff(omega, &s, metric)?);
    }
    let distances: Vec<f64> = fwd.iter().zip(&rev).map(|(a, b)| a.max(*b)).collect();
    let max = distances.iter().cloned().fold(0.0, f64::max);
    let min = distances.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(SectionReport {
        times: times.to_vec(),
        section_to_omega: fwd,
        omega_to_section: rev,
        max,
        spread: max - min,
        tolerance: tol,
        pass: max <= tol,
        distances,
        note: PROXY_NOTE,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct InvarianceReport {
    pub t: f64,
    /// `sup_{x∈R(t)ω} inf_{y∈ω} d(x, y)`: forward containment.
    pub forward: f64,
    /// `sup_{y∈ω} inf_{x∈R(t)ω} d(x, y)`: coverage of ω by the image.
    pub reverse: f64,
    pub hausdorff: f64,
    pub tolerance: f64,
    /// Forward containment within `tolerance`.
    pub pass: bool,
    pub note: &'static str,
}

/// Forward image `R(t)ω` against `ω`.
pub fn invariance_check<S: Evolution + ?Sized>(
    omega: &SetSample,
    sys: &S,
    t: f64,
    tol: f64,
    metric: &MetricSpec,
) -> Result<InvarianceReport> {
    let image = reach_sample(sys, omega, t)?;
    let forward = directed_hausdorff(&image, omega, metric)?;
    let reverse = directed_hausdorff(omega, &image, metric)?;
    Ok(InvarianceReport {
        t,
        forward,
        reverse,
        hausdorff: forward.max(reverse),
        tolerance: tol,
        pass: forward <= tol,
        note: "empirical: finite samples; only forward containment is checkable without backward integration",
    })
}

/// Greedy cover counts of the translates `{T(h)u : h ∈ shifts}` on `[0, window]`.
#[derive(Clone, Debug, Serialize)]
pub struct CoveringTable {
    pub epsilon: f64,
    pub window: f64,
    pub shifts: Vec<f64>,
    /// `counts[k]`: cover count of the first `k + 1` translates.
    pub counts: Vec<usize>,
    /// Shifts chosen as centres for the full set.
    pub centres: Vec<f64>,
}

/// Cover the translates of `u` by balls of radius `ε` in the sup-strong
/// metric on `[0, window]`.
pub fn translate_covering(u: &Trajectory, epsilon: f64, shifts: &[f64], window: f64) -> Result<CoveringTable> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if shifts.is_empty() {
        return Err(Error::EmptySet);
    }
    let w = grid_offset(window, u.dt())?;
    let mut offsets = Vec::with_capacity(shifts.len());
    for &h in shifts {
        let o = grid_offset(h, u.dt())
            .ok()
            .filter(|&o| h >= 0.0 && o + w < u.len())
            .ok_or(Error::OutOfDomain {
                a: u.t_start() + h,
                b: u.t_start() + h + window,
                start: u.t_start(),
                end: u.t_end(),
            })?;
        offsets.push(o);
    }
    let n = offsets.len();
    let metric = MetricSpec::strong();
    let s = u.samples();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|a| {
            (0..n)
                .map(|b| {
                    (0..=w)
                        .map(|j| metric.dist_raw(&s[offsets[a] + j], &s[offsets[b] + j]))
                        .fold(0.0, f64::max)
                })
                .collect()
        })
        .collect();
    let mut counts = Vec::with_capacity(n);
    let mut last = Vec::new();
    for k in 1..=n {
        let data = rows[..k].iter().flat_map(|r| r[..k].iter().cloned()).collect();
        let m = DistanceMatrix::from_rows(k, data)?;
        last = greedy_cover(&m, epsilon);
        counts.push(last.len());
    }
    Ok(CoveringTable {
        epsilon,
        window,
        shifts: shifts.to_vec(),
        counts,
        centres: last.iter().map(|&i| shifts[i]).collect(),
    })
}
