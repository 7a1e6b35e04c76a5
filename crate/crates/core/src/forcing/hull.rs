//! Sampled diagnostics of the translation hull of a nonlinearity.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::Serialize;

use super::SAMPLED_DISCLAIMER;
use crate::error::{Error, Result};
use crate::rds::Nonlinearity;

/// `count` times from `0` to `t_max`, log-spaced after `t = 1`.
pub fn log_times(t_max: f64, count: usize) -> Vec<f64> {
    if count < 2 || t_max <= 0.0 {
        return vec![0.0];
    }
    let mut out = vec![0.0];
    let span = (1.0 + t_max).ln();
    for i in 1..count {
        out.push((span * i as f64 / (count - 1) as f64).exp() - 1.0);
    }
    out
}

/// Modulus of continuity `θ(l, R)` measured over sampled times.
#[derive(Clone, Debug, Serialize)]
pub struct ModulusTable {
    pub tag: String,
    pub radius: f64,
    pub resolution: f64,
    pub times: Vec<f64>,
    /// Gaps `l`, decreasing.
    pub gaps: Vec<f64>,
    /// `θ(l)` maximized over all sampled times.
    pub theta: Vec<f64>,
    /// `θ_t(l)` per sampled time (rows follow `times`).
    pub theta_by_time: Vec<Vec<f64>>,
    /// Passes iff `θ(l_min) ≤ 0.1 · θ(l_max)`.
    pub pass: bool,
    pub disclaimer: &'static str,
}

/// Largest `max − min` over all windows of `width + 1` consecutive values.
fn window_range(values: &[f64], width: usize) -> f64 {
    let mut hi: VecDeque<usize> = VecDeque::new();
    let mut lo: VecDeque<usize> = VecDeque::new();
    let mut best = 0.0f64;
    for (i, &x) in values.iter().enumerate() {
        while hi.back().is_some_and(|&j| values[j] <= x) {
            hi.pop_back();
        }
        hi.push_back(i);
        while lo.back().is_some_and(|&j| values[j] >= x) {
            lo.pop_back();
        }
        lo.push_back(i);
        let start = i.saturating_sub(width);
        while hi.front().is_some_and(|&j| j < start) {
            hi.pop_front();
        }
        while lo.front().is_some_and(|&j| j < start) {
            lo.pop_front();
        }
        best = best.max(values[hi[0]] - values[lo[0]]);
    }
    best
}

/// `θ(l, R) = max_t max_{|v₁ − v₂| ≤ l, |vᵢ| ≤ R} |f(v₁, t) − f(v₂, t)|` on a
/// uniform `v` grid of spacing `resolution`, for gaps `l = R·2^{-k}`,
/// `k = 0..levels`.
pub fn equicontinuity_modulus(
    f: &Nonlinearity,
    radius: f64,
    times: &[f64],
    resolution: f64,
    levels: usize,
) -> Result<ModulusTable> {
    if !(radius > 0.0 && resolution > 0.0 && resolution < radius) {
        return Err(Error::invalid(format!(
            "need 0 < resolution < radius, got resolution {resolution}, radius {radius}"
        )));
    }
    if times.is_empty() || levels == 0 {
        return Err(Error::invalid("need sampled times and at least one gap level"));
    }
    let n = (2.0 * radius / resolution).ceil() as usize;
    let h = 2.0 * radius / n as f64;
    let gaps: Vec<f64> = (0..levels).map(|k| radius * 0.5f64.powi(k as i32)).collect();
    let widths: Vec<usize> = gaps.iter().map(|l| ((l / h) + 1e-9).floor().max(1.0) as usize).collect();
    let theta_by_time: Vec<Vec<f64>> = times
        .par_iter()
        .map(|&t| {
            let values: Vec<f64> = (0..=n).map(|i| f.eval(-radius + i as f64 * h, t)).collect();
            widths.iter().map(|&w| window_range(&values, w)).collect()
        })
        .collect();
    let theta: Vec<f64> = (0..levels)
        .map(|k| theta_by_time.iter().map(|row| row[k]).fold(0.0, f64::max))
        .collect();
    let pass = theta[levels - 1] <= 0.1 * theta[0];
    Ok(ModulusTable {
        tag: f.tag().to_string(),
        radius,
        resolution: h,
        times: times.to_vec(),
        gaps,
        theta,
        theta_by_time,
        pass,
        disclaimer: SAMPLED_DISCLAIMER,
    })
}

/// Pointwise behavior of `f(v, t_k)` as `t_k` grows.
#[derive(Clone, Debug, Serialize)]
pub struct LimitProbe {
    pub tag: String,
    pub v: Vec<f64>,
    /// Last sampled value where the tail is Cauchy, `None` where it is not.
    pub limit: Vec<Option<f64>>,
    /// `max − min` over the tail of the time sequence.
    pub spread: Vec<f64>,
    pub tolerance: f64,
    /// Largest jump of the limit candidate between adjacent `v` samples,
    /// as `(v_left, v_right, size)`.
    pub jump: Option<(f64, f64, f64)>,
}

impl LimitProbe {
    pub fn diverges_at(&self, v: f64) -> Option<bool> {
        self.v
            .iter()
            .position(|&x| x == v)
            .map(|i| self.limit[i].is_none())
    }
}

/// For every `v`, compare `f(v, t_k)` over the last quarter of `times`: a
/// spread below `tol · (1 + |f|)` counts as convergence.
pub fn pointwise_limit_probe(f: &Nonlinearity, v_grid: &[f64], times: &[f64], tol: f64) -> Result<LimitProbe> {
    if times.len() < 4 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("time sequence must be increasing with at least 4 entries"));
    }
    if v_grid.is_empty() {
        return Err(Error::invalid("empty v grid"));
    }
    let tail = &times[times.len() - times.len() / 4..];
    let rows: Vec<(Option<f64>, f64)> = v_grid
        .par_iter()
        .map(|&v| {
            let vals: Vec<f64> = tail.iter().map(|&t| f.eval(v, t)).collect();
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let last = *vals.last().expect("nonempty tail");
            let spread = hi - lo;
            let limit = (spread <= tol * (1.0 + last.abs())).then_some(last);
            (limit, spread)
        })
        .collect();
    let (limit, spread): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let mut jump: Option<(f64, f64, f64)> = None;
    for i in 1..v_grid.len() {
        if let (Some(a), Some(b)) = (limit[i - 1], limit[i]) {
            let size = (b - a).abs();
            if jump.map_or(true, |j| size > j.2) {
                jump = Some((v_grid[i - 1], v_grid[i], size));
            }
        }
    }
    Ok(LimitProbe {
        tag: f.tag().to_string(),
        v: v_grid.to_vec(),
        limit,
        spread,
        tolerance: tol,
        jump,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rds::GrowthConstants;

    #[test]
    fn window_range_matches_brute_force() {
        let vals: Vec<f64> = (0..50).map(|i| ((i * 37 % 11) as f64).sin()).collect();
        for w in [1, 3, 7, 49] {
            let mut brute = 0.0f64;
            for i in 0..vals.len() {
                for j in i..vals.len().min(i + w + 1) {
                    brute = brute.max((vals[i] - vals[j]).abs());
                }
            }
            assert_eq!(window_range(&vals, w), brute);
        }
    }

    #[test]
    fn lipschitz_function_passes() {
        let consts = GrowthConstants { p: 2.0, gamma: 0.0, c_diss: 0.0, c_grow: 1.0 };
        let f = Nonlinearity::from_expr("sin(v)", consts).unwrap();
        let table = equicontinuity_modulus(&f, 2.0, &log_times(100.0, 8), 1e-3, 11).unwrap();
        for (l, th) in table.gaps.iter().zip(&table.theta) {
            assert!(*th <= l + 1e-12);
        }
        assert!(table.pass);
    }

    #[test]
    fn autonomous_limit_is_itself() {
        let f = Nonlinearity::builtin("cubic", 4.0).unwrap();
        let v: Vec<f64> = (-10..=10).map(|i| i as f64 * 0.1).collect();
        let probe = pointwise_limit_probe(&f, &v, &log_times(1e3, 16), 1e-9).unwrap();
        for (x, l) in v.iter().zip(&probe.limit) {
            assert_eq!(l.unwrap(), x * x * x);
        }
    }
}
