//! Index sequences assigning net members to consecutive windows of a run.

use serde::Serialize;

use super::TrackingNet;
use crate::error::{Error, Result};
use crate::phase::grid_offset;
use crate::systems::Trajectory;

/// One window of a schedule and the member chosen for it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScheduleEntry {
    pub j: usize,
    pub window_start: f64,
    /// Position of the chosen member in the net (0-based).
    pub index: usize,
    pub distance: f64,
}

fn entry_at(net: &TrackingNet, u: &Trajectory, j: usize, start: f64) -> Result<ScheduleEntry> {
    let len = grid_offset(net.duration(), net.dt())? + 1;
    let o = u.index_of(start)?;
    if o + len > u.len() {
        return Err(Error::OutOfDomain {
            a: start,
            b: start + net.duration(),
            start: u.t_start(),
            end: u.t_end(),
        });
    }
    let (index, distance) = net.nearest(&u.samples()[o..o + len]);
    Ok(ScheduleEntry {
        j,
        window_start: start,
        index,
        distance,
    })
}

/// Nearest member on every window `[jT, (j+1)T]`, `j0 ≤ j ≤ j_end`.
pub fn tracking_schedule(net: &TrackingNet, u: &Trajectory, j0: usize, j_end: usize) -> Result<Vec<ScheduleEntry>> {
    net.ensure_compatible(u)?;
    if j_end < j0 {
        return Err(Error::invalid(format!("empty schedule range {j0}..={j_end}")));
    }
    let t = net.duration();
    (j0..=j_end).map(|j| entry_at(net, u, j, j as f64 * t)).collect()
}

/// One `(ε_n, T_n)` stage of a multiscale schedule.
#[derive(Clone, Debug, Serialize)]
pub struct Stage {
    pub epsilon: f64,
    pub duration: f64,
    /// Entry time of the net before spacing adjustment.
    pub measured_entry: f64,
    /// `t_n` after enforcing `t_2 − t_1 > 1`, `t_{n+1} − t_n > T_{n−1}`.
    pub entry: f64,
    /// `J_n`.
    pub windows: usize,
    pub start: f64,
    pub end: f64,
    /// Windows `[start + (j−1)T_n, start + jT_n]`, `j = 1..=J_n`.
    pub entries: Vec<ScheduleEntry>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MultiscaleSchedule {
    /// `t_1 + 1`.
    pub t0: f64,
    /// `t0 + Σ_{l<n} J_l T_l` for every stage, then the final end.
    pub boundaries: Vec<f64>,
    pub stages: Vec<Stage>,
    pub pass: bool,
}

fn ceil_to_grid(t: f64, dt: f64) -> f64 {
    (t / dt - 1e-9).ceil() * dt
}

/// Chain nets with `ε_n ↓` and `T_n ↑` along `u`.
///
/// Stage entry times are `t_n = max(t_floor, net_n.t0)`, pushed forward so
/// that `t_2 − t_1 > 1` and `t_{n+1} − t_n > T_{n−1}`, and rounded up to the
/// sample grid. With `t0 = t_1 + 1` and `s_n = t0 + Σ_{l<n} J_l T_l`,
///
/// ```text
/// J_n = ⌊(t_{n+1} − s_n) / T_n⌋ + 1
/// ```
///
/// and the last stage takes every whole window up to the end of `u`.
pub fn multiscale_schedule(nets: &[TrackingNet], u: &Trajectory, t_floor: f64) -> Result<MultiscaleSchedule> {
    let first = nets.first().ok_or(Error::EmptySet)?;
    let dt = first.dt();
    for (n, net) in nets.iter().enumerate() {
        net.ensure_compatible(u)?;
        if n > 0 {
            let prev = &nets[n - 1];
            if !(net.epsilon() < prev.epsilon()) {
                return Err(Error::invalid(format!(
                    "epsilons must strictly decrease: stage {} has {} after {}",
                    n + 1,
                    net.epsilon(),
                    prev.epsilon()
                )));
            }
            if !(net.duration() > prev.duration()) {
                return Err(Error::invalid(format!(
                    "window lengths must strictly increase: stage {} has {} after {}",
                    n + 1,
                    net.duration(),
                    prev.duration()
                )));
            }
        }
    }
    let measured: Vec<f64> = nets.iter().map(|n| n.t0().max(t_floor)).collect();
    let mut entry = Vec::with_capacity(nets.len());
    for (n, &m) in measured.iter().enumerate() {
        let t = if n == 0 {
            m
        } else {
            let gap = if n == 1 { 1.0 } else { nets[n - 2].duration() };
            let min = entry[n - 1] + gap;
            if m > min {
                m
            } else {
                min + dt
            }
        };
        entry.push(ceil_to_grid(t, dt));
    }
    let t0 = ceil_to_grid(entry[0] + 1.0, dt);
    let mut start = t0;
    let mut boundaries = vec![t0];
    let mut stages = Vec::with_capacity(nets.len());
    for (n, net) in nets.iter().enumerate() {
        let t = net.duration();
        let windows = if n + 1 < nets.len() {
            ((entry[n + 1] - start) / t + 1e-9).floor() as usize + 1
        } else {
            ((u.t_end() - start) / t + 1e-9).floor().max(0.0) as usize
        };
        if windows == 0 || start + windows as f64 * t > u.t_end() + 1e-9 * dt {
            return Err(Error::invalid(format!(
                "trajectory ends at {} but stage {} needs [{start}, {}]",
                u.t_end(),
                n + 1,
                start + windows.max(1) as f64 * t
            )));
        }
        let entries = (1..=windows)
            .map(|j| entry_at(net, u, j, start + (j - 1) as f64 * t))
            .collect::<Result<Vec<_>>>()?;
        let end = start + windows as f64 * t;
        stages.push(Stage {
            epsilon: net.epsilon(),
            duration: t,
            measured_entry: measured[n],
            entry: entry[n],
            windows,
            start,
            end,
            pass: entries.iter().all(|e| e.distance < net.epsilon()),
            entries,
        });
        boundaries.push(end);
        start = end;
    }
    Ok(MultiscaleSchedule {
        t0,
        pass: stages.iter().all(|s| s.pass),
        boundaries,
        stages,
    })
}
