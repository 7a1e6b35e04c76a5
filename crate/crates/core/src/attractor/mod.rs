//! Piece libraries, ε-net tracking sets and their verification.
//!
//! A library is the set of windows `[t*, t* + T]` (renormalized to `[0, T]`)
//! of long post-transient runs. The distance between two pieces is
//! `max_{t∈[0,T]} d(u(t), v(t))` on the shared sample grid.

mod checks;
mod schedule;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{grid_offset, sq_dist_bounded, Basis, MetricKind, MetricSpec, PhaseVector, SetSample};
use crate::systems::{ensemble, Evolution, Trajectory, TrajectoryPiece};

pub use checks::{
    equicontinuity_modulus, invariance_check, section_check, translate_covering, CoveringTable,
    InvarianceReport, SectionReport, ThetaTable,
};
pub use schedule::{
    multiscale_schedule, tracking_schedule, MultiscaleSchedule, ScheduleEntry, Stage,
};

/// Attached to every report built on harvested pieces.
pub const PROXY_NOTE: &str = "empirical: pieces are post-transient windows of long runs standing in \
     for pieces of complete trajectories on the attractor";

/// Windows of stored runs sharing one length, spacing and basis.
#[derive(Clone, Debug)]
pub struct PieceLibrary {
    pieces: Vec<TrajectoryPiece>,
    t0: f64,
    duration: f64,
    stride: f64,
    dt: f64,
    basis: Basis,
    metric: MetricSpec,
    runs: usize,
}

impl PieceLibrary {
    /// All windows `[t*, t* + T]` with `t* = t0 + k·stride` inside each run.
    pub fn from_runs(runs: Vec<Trajectory>, t0: f64, duration: f64, stride: f64) -> Result<Self> {
        let first = runs.first().ok_or(Error::EmptySet)?;
        let dt = first.dt();
        let basis = *first.basis();
        if !(duration > 0.0) {
            return Err(Error::invalid(format!("piece length must be positive, got {duration}")));
        }
        let step = grid_offset(stride, dt)?;
        if step == 0 {
            return Err(Error::invalid("stride must be at least one sample step"));
        }
        let len = grid_offset(duration, dt)?;
        if len == 0 {
            return Err(Error::invalid("piece length must be at least one sample step"));
        }
        let count = runs.len();
        let mut pieces = Vec::new();
        for (r, run) in runs.into_iter().enumerate() {
            basis.ensure_same(run.basis())?;
            if ((run.dt() - dt) / dt).abs() > 1e-12 {
                return Err(Error::GridMismatch(format!("run {r}: dt {} vs {dt}", run.dt())));
            }
            let start = run.index_of(t0)?;
            let run = Arc::new(run);
            let mut off = start;
            while off + len < run.len() {
                pieces.push(TrajectoryPiece::new(run.clone(), r, run.time(off), duration)?);
                off += step;
            }
        }
        if pieces.is_empty() {
            return Err(Error::invalid(format!(
                "no window [t*, t* + {duration}] with t* >= {t0} fits in the runs"
            )));
        }
        Ok(PieceLibrary {
            pieces,
            t0,
            duration: len as f64 * dt,
            stride: step as f64 * dt,
            dt,
            basis,
            metric: MetricSpec::strong(),
            runs: count,
        })
    }

    /// Library from explicit pieces, all of one length, spacing and basis.
    pub fn from_pieces(pieces: Vec<TrajectoryPiece>, t0: f64, stride: f64) -> Result<Self> {
        let first = pieces.first().ok_or(Error::EmptySet)?;
        let (dt, len, basis) = (first.dt(), first.len(), *first.basis());
        for p in &pieces {
            basis.ensure_same(p.basis())?;
            if p.len() != len || ((p.dt() - dt) / dt).abs() > 1e-12 {
                return Err(Error::GridMismatch(
                    "library pieces must share length and spacing".into(),
                ));
            }
            if p.window_start() < t0 - 1e-9 * dt {
                return Err(Error::invalid(format!(
                    "piece at t* = {} starts before the transient {t0}",
                    p.window_start()
                )));
            }
        }
        let runs = pieces.iter().map(|p| p.run() + 1).max().unwrap_or(0);
        Ok(PieceLibrary {
            duration: (len - 1) as f64 * dt,
            pieces,
            t0,
            stride,
            dt,
            basis,
            metric: MetricSpec::strong(),
            runs,
        })
    }

    /// Measure pieces with `metric` instead of the strong one.
    pub fn with_metric(mut self, metric: MetricSpec) -> Result<Self> {
        metric.validate()?;
        self.metric = metric;
        Ok(self)
    }

    pub fn pieces(&self) -> &[TrajectoryPiece] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn stride(&self) -> f64 {
        self.stride
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn metric(&self) -> &MetricSpec {
        &self.metric
    }

    /// Number of source runs.
    pub fn runs(&self) -> usize {
        self.runs
    }

    /// Section `{piece(t)}` at the grid time `t ∈ [0, T]`.
    pub fn section(&self, t: f64) -> Result<SetSample> {
        let j = grid_offset(t, self.dt)?;
        if j >= self.pieces[0].len() {
            return Err(Error::OutOfDomain {
                a: t,
                b: t,
                start: 0.0,
                end: self.duration,
            });
        }
        SetSample::new(self.pieces.iter().map(|p| p.sample(j).clone()).collect())
    }

    /// All pairwise piece distances.
    pub fn distance_matrix(&self) -> DistanceMatrix {
        let n = self.pieces.len();
        let len = self.pieces[0].len();
        // Pairs sharing (source a, source b, offset difference) reuse one diagonal
        // of sample distances.
        let mut groups: BTreeMap<(usize, usize, i64), Vec<(usize, usize)>> = BTreeMap::new();
        for p in 0..n {
            for q in p + 1..n {
                let (a, b) = (&self.pieces[p], &self.pieces[q]);
                let delta = b.offset() as i64 - a.offset() as i64;
                let key = (Arc::as_ptr(a.source()) as usize, Arc::as_ptr(b.source()) as usize, delta);
                groups.entry(key).or_default().push((p, q));
            }
        }
        let groups: Vec<_> = groups.into_iter().collect();
        let metric = self.metric;
        let entries: Vec<(usize, usize, f64)> = groups
            .par_iter()
            .flat_map_iter(|((_, _, delta), pairs)| {
                let delta = *delta;
                let src_a = self.pieces[pairs[0].0].source();
                let src_b = self.pieces[pairs[0].1].source();
                let lo = pairs.iter().map(|&(p, _)| self.pieces[p].offset()).min().unwrap_or(0);
                let hi = pairs.iter().map(|&(p, _)| self.pieces[p].offset()).max().unwrap_or(0) + len;
                let mut need = vec![false; hi - lo];
                for &(p, _) in pairs {
                    let o = self.pieces[p].offset() - lo;
                    need[o..o + len].iter_mut().for_each(|x| *x = true);
                }
                let diag: Vec<f64> = (lo..hi)
                    .map(|i| {
                        if need[i - lo] {
                            let j = (i as i64 + delta) as usize;
                            metric.dist_raw(&src_a.samples()[i], &src_b.samples()[j])
                        } else {
                            0.0
                        }
                    })
                    .collect();
                pairs
                    .iter()
                    .map(|&(p, q)| {
                        let o = self.pieces[p].offset() - lo;
                        let d = diag[o..o + len].iter().cloned().fold(0.0, f64::max);
                        (p, q, d)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let mut data = vec![0.0; n * n];
        for (p, q, d) in entries {
            data[p * n + q] = d;
            data[q * n + p] = d;
        }
        DistanceMatrix { n, data }
    }
}

/// `max_{t∈[0,T]} d(u(t), v(t))` for two pieces on one grid.
pub fn piece_distance(u: &TrajectoryPiece, v: &TrajectoryPiece, metric: &MetricSpec) -> Result<f64> {
    u.basis().ensure_same(v.basis())?;
    if u.len() != v.len() || ((u.dt() - v.dt()) / u.dt()).abs() > 1e-12 {
        return Err(Error::GridMismatch("pieces differ in length or spacing".into()));
    }
    Ok(u
        .samples()
        .iter()
        .zip(v.samples())
        .map(|(a, b)| metric.dist_raw(a, b))
        .fold(0.0, f64::max))
}

/// Integrate `initial` to `horizon` and cut every run into pieces.
pub fn harvest_pieces<S: Evolution + ?Sized>(
    sys: &S,
    initial: &SetSample,
    t0: f64,
    duration: f64,
    stride: f64,
    horizon: f64,
) -> Result<PieceLibrary> {
    if horizon < t0 + duration {
        return Err(Error::invalid(format!(
            "horizon {horizon} is shorter than t0 + T = {}",
            t0 + duration
        )));
    }
    if stride < sys.sample_dt() * (1.0 - 1e-9) {
        return Err(Error::invalid(format!(
            "stride {stride} is below the sample spacing {}",
            sys.sample_dt()
        )));
    }
    if let Some(b) = initial.basis() {
        b.ensure_same(&sys.basis())?;
    }
    let runs = ensemble(sys, initial, horizon)?;
    PieceLibrary::from_runs(runs, t0, duration, stride)
}

/// Dense symmetric matrix of piece distances.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// From a row-major `n × n` array.
    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::invalid(format!(
                "distance matrix needs {} entries, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(DistanceMatrix { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Largest entry.
    pub fn diameter(&self) -> f64 {
        self.data.iter().cloned().fold(0.0, f64::max)
    }

    /// Comma-separated rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.n * self.n * 12);
        for i in 0..self.n {
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{v:e}");
            }
            s.push('\n');
        }
        s
    }
}

/// Greedy cover of `0..n` by balls `{j : d(i, j) < radius}` centred at
/// uncovered points. Each round takes the uncovered point covering the most
/// uncovered points; ties go to the lowest index.
pub fn greedy_cover(dist: &DistanceMatrix, radius: f64) -> Vec<usize> {
    let n = dist.len();
    let mut covered = vec![false; n];
    let mut left = n;
    let mut centres = Vec::new();
    while left > 0 {
        let mut best = (0usize, usize::MAX);
        for i in (0..n).filter(|&i| !covered[i]) {
            let gain = dist
                .row(i)
                .iter()
                .zip(&covered)
                .filter(|&(&d, &c)| !c && d < radius)
                .count();
            if best.1 == usize::MAX || gain > best.0 {
                best = (gain, i);
            }
        }
        let c = best.1;
        for (j, &d) in dist.row(c).iter().enumerate() {
            if !covered[j] && d < radius {
                covered[j] = true;
                left -= 1;
            }
        }
        centres.push(c);
    }
    centres
}

/// A finite ε-net of a piece library.
#[derive(Clone, Debug)]
pub struct TrackingNet {
    epsilon: f64,
    duration: f64,
    t0: f64,
    stride: f64,
    dt: f64,
    basis: Basis,
    metric: MetricSpec,
    library_size: usize,
    indices: Vec<usize>,
    members: Vec<TrajectoryPiece>,
    coverage: f64,
}

/// Greedy net covering `lib` within `ε/2`.
pub fn build_tracking_net(lib: &PieceLibrary, epsilon: f64) -> Result<TrackingNet> {
    let dist = lib.distance_matrix();
    build_tracking_net_with(lib, &dist, epsilon)
}

/// As [`build_tracking_net`] with a precomputed distance matrix.
pub fn build_tracking_net_with(lib: &PieceLibrary, dist: &DistanceMatrix, epsilon: f64) -> Result<TrackingNet> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if lib.is_empty() {
        return Err(Error::EmptySet);
    }
    if dist.len() != lib.len() {
        return Err(Error::invalid("distance matrix does not match the library"));
    }
    let indices = greedy_cover(dist, 0.5 * epsilon);
    TrackingNet::from_indices(lib, dist, epsilon, indices)
}

impl TrackingNet {
    fn from_indices(lib: &PieceLibrary, dist: &DistanceMatrix, epsilon: f64, indices: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= lib.len()) {
            return Err(Error::invalid(format!(
                "net member {bad} is outside a library of {} pieces",
                lib.len()
            )));
        }
        let coverage = (0..lib.len())
            .map(|p| indices.iter().map(|&m| dist.get(p, m)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        Ok(TrackingNet {
            epsilon,
            duration: lib.duration,
            t0: lib.t0,
            stride: lib.stride,
            dt: lib.dt,
            basis: lib.basis,
            metric: lib.metric,
            library_size: lib.len(),
            members: indices.iter().map(|&i| lib.pieces[i].clone()).collect(),
            indices,
            coverage,
        })
    }

    /// Rebuild a stored net against the library it was built from.
    pub fn from_record(record: &NetRecord, lib: &PieceLibrary) -> Result<Self> {
        lib.basis.ensure_same(&record.basis)?;
        if record.library_size != lib.len() {
            return Err(Error::invalid(format!(
                "net was built on {} pieces, library has {}",
                record.library_size,
                lib.len()
            )));
        }
        for m in &record.members {
            let p = lib.pieces.get(m.index).ok_or_else(|| {
                Error::invalid(format!("net member {} is outside the library", m.index))
            })?;
            if p.run() != m.run || (p.window_start() - m.window_start).abs() > 1e-9 * lib.dt {
                return Err(Error::invalid(format!(
                    "net member {} does not match library piece (run {}, t* = {})",
                    m.index,
                    p.run(),
                    p.window_start()
                )));
            }
        }
        let lib = lib.clone().with_metric(record.metric)?;
        let dist = lib.distance_matrix();
        TrackingNet::from_indices(&lib, &dist, record.epsilon, record.members.iter().map(|m| m.index).collect())
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn stride(&self) -> f64 {
        self.stride
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn metric(&self) -> &MetricSpec {
        &self.metric
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Library index of every member.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn members(&self) -> &[TrajectoryPiece] {
        &self.members
    }

    /// `max_p min_m d(p, m)` over the library it was built on.
    pub fn coverage(&self) -> f64 {
        self.coverage
    }

    pub fn record(&self) -> NetRecord {
        NetRecord {
            epsilon: self.epsilon,
            duration: self.duration,
            t0: self.t0,
            stride: self.stride,
            dt: self.dt,
            basis: self.basis,
            metric: self.metric,
            library_size: self.library_size,
            coverage: self.coverage,
            members: self
                .members
                .iter()
                .zip(&self.indices)
                .map(|(p, &index)| MemberRecord {
                    index,
                    run: p.run(),
                    window_start: p.window_start(),
                })
                .collect(),
            note: PROXY_NOTE.to_string(),
        }
    }

    pub(crate) fn ensure_compatible(&self, u: &Trajectory) -> Result<()> {
        self.basis.ensure_same(u.basis())?;
        if ((u.dt() - self.dt) / self.dt).abs() > 1e-12 {
            return Err(Error::GridMismatch(format!(
                "trajectory dt {} vs net dt {}",
                u.dt(),
                self.dt
            )));
        }
        Ok(())
    }

    /// Nearest member to the window `u`: `(member, max_t d)`, ties to the
    /// lowest member.
    pub(crate) fn nearest(&self, u: &[PhaseVector]) -> (usize, f64) {
        let mut best = (0usize, f64::INFINITY);
        for (m, piece) in self.members.iter().enumerate() {
            let key = window_key(&self.metric, piece.samples(), u, best.1);
            if key < best.1 {
                best = (m, key);
            }
        }
        (best.0, key_to_dist(&self.metric, best.1))
    }
}

// Strong distances are compared squared so partial sums can abort early.
fn window_key(metric: &MetricSpec, a: &[PhaseVector], b: &[PhaseVector], bound: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        let k = match metric.kind {
            MetricKind::Strong => sq_dist_bounded(x.coeffs(), y.coeffs(), bound),
            MetricKind::Weak => metric.dist_raw(x, y),
        };
        worst = worst.max(k);
        if worst > bound {
            break;
        }
    }
    worst
}

fn key_to_dist(metric: &MetricSpec, key: f64) -> f64 {
    match metric.kind {
        MetricKind::Strong => key.sqrt(),
        MetricKind::Weak => key,
    }
}

/// Serialized net: members by library index with their provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetRecord {
    pub epsilon: f64,
    pub duration: f64,
    pub t0: f64,
    pub stride: f64,
    pub dt: f64,
    pub basis: Basis,
    pub metric: MetricSpec,
    pub library_size: usize,
    pub coverage: f64,
    pub members: Vec<MemberRecord>,
    #[serde(default)]
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub index: usize,
    pub run: usize,
    pub window_start: f64,
}

/// Tracking of one test trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct TestTracking {
    pub test: usize,
    pub window_starts: Vec<f64>,
    /// Min over members of the window distance, per window.
    pub distances: Vec<f64>,
    pub nearest: Vec<usize>,
    pub worst_window_start: f64,
    pub worst_distance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrackingReport {
    pub epsilon: f64,
    pub duration: f64,
    pub t0: f64,
    pub stride: f64,
    pub net_size: usize,
    pub tests: Vec<TestTracking>,
    pub passed: usize,
    pub max_distance: f64,
    pub mean_distance: f64,
    pub pass: bool,
    pub note: &'static str,
}

/// Check every window `[t*, t* + T]`, `t* = t0 + j·stride`, `j ≥ 1`, of
/// every test against the net.
pub fn verify_tracking(net: &TrackingNet, tests: &[Trajectory], t0: f64) -> Result<TrackingReport> {
    if tests.is_empty() {
        return Err(Error::EmptySet);
    }
    let len = grid_offset(net.duration, net.dt)? + 1;
    let step = grid_offset(net.stride, net.dt)?.max(1);
    let mut results = Vec::with_capacity(tests.len());
    for (k, u) in tests.iter().enumerate() {
        net.ensure_compatible(u)?;
        let start = u.index_of(t0)? + step;
        if start + len > u.len() {
            return Err(Error::invalid(format!(
                "test {k} ends at {} before the first window [{}, {}]",
                u.t_end(),
                u.time(start),
                u.time(start) + net.duration
            )));
        }
        let offsets: Vec<usize> = (start..=u.len() - len).step_by(step).collect();
        let found: Vec<(usize, f64)> = offsets
            .par_iter()
            .map(|&o| net.nearest(&u.samples()[o..o + len]))
            .collect();
        let distances: Vec<f64> = found.iter().map(|f| f.1).collect();
        let (wi, wd) = distances
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        results.push(TestTracking {
            test: k,
            window_starts: offsets.iter().map(|&o| u.time(o)).collect(),
            nearest: found.iter().map(|f| f.0).collect(),
            worst_window_start: u.time(offsets[wi]),
            worst_distance: wd,
            pass: distances.iter().all(|&d| d < net.epsilon),
            distances,
        });
    }
    let all: Vec<f64> = results.iter().flat_map(|r| r.distances.iter().cloned()).collect();
    let passed = results.iter().filter(|r| r.pass).count();
    Ok(TrackingReport {
        epsilon: net.epsilon,
        duration: net.duration,
        t0,
        stride: net.stride,
        net_size: net.len(),
        passed,
        pass: passed == results.len(),
        max_distance: all.iter().cloned().fold(0.0, f64::max),
        mean_distance: all.iter().sum::<f64>() / all.len() as f64,
        tests: results,
        note: PROXY_NOTE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_library(points: &[f64]) -> PieceLibrary {
        let basis = Basis::sine(1.0, 2);
        let pieces = points
            .iter()
            .enumerate()
            .map(|(r, &x)| {
                let mut v = PhaseVector::zeros(basis);
                v.coeffs_mut()[0] = x;
                let run = Arc::new(Trajectory::constant(v, 0.0, 0.5, 5).unwrap());
                TrajectoryPiece::new(run, r, 0.0, 1.0).unwrap()
            })
            .collect();
        PieceLibrary::from_pieces(pieces, 0.0, 0.5).unwrap()
    }

    #[test]
    fn three_points_on_a_line() {
        let lib = line_library(&[0.0, 1.0, 2.0]);
        let net = build_tracking_net(&lib, 1.0).unwrap();
        assert_eq!(net.len(), 3);
        let net = build_tracking_net(&lib, 2.5).unwrap();
        assert_eq!(net.indices(), &[1]);
        let net = build_tracking_net(&lib, 10.0).unwrap();
        assert_eq!(net.len(), 1);
    }

    #[test]
    fn rejects_nonpositive_epsilon() {
        let lib = line_library(&[0.0]);
        assert!(build_tracking_net(&lib, 0.0).is_err());
        assert!(build_tracking_net(&lib, f64::NAN).is_err());
    }

    #[test]
    fn window_counts() {
        let basis = Basis::sine(1.0, 1);
        let run = Trajectory::constant(PhaseVector::zeros(basis), 0.0, 0.25, 41).unwrap();
        // horizon 10, t0 = 2, T = 1, stride 0.5 → ⌊(10 − 2 − 1)/0.5⌋ + 1 = 15
        let lib = PieceLibrary::from_runs(vec![run.clone(), run], 2.0, 1.0, 0.5).unwrap();
        assert_eq!(lib.len(), 30);
        assert_eq!(lib.pieces()[14].window_start(), 9.0);
    }

    #[test]
    fn matrix_matches_direct() {
        let basis = Basis::sine(1.0, 3);
        let samples: Vec<PhaseVector> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.1;
                PhaseVector::from_coeffs(basis, vec![t.sin(), (2.0 * t).cos(), 0.3 * t]).unwrap()
            })
            .collect();
        let a = Trajectory::new(0.0, 0.1, samples.clone(), "a").unwrap();
        let b = Trajectory::new(0.0, 0.1, samples.iter().map(|v| v.scaled(0.9)).collect(), "b").unwrap();
        let lib = PieceLibrary::from_runs(vec![a, b], 0.5, 1.0, 0.3).unwrap();
        let m = lib.distance_matrix();
        for p in 0..lib.len() {
            for q in 0..lib.len() {
                let direct = piece_distance(&lib.pieces()[p], &lib.pieces()[q], lib.metric()).unwrap();
                assert!((m.get(p, q) - direct).abs() < 1e-14);
            }
        }
    }
}
