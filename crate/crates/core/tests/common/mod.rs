#![allow(dead_code)]

use attractor_lab::attractor::{DistanceMatrix, PieceLibrary};
use attractor_lab::forcing::{builtin_force, Force, ForceParams, Symbol};
use attractor_lab::nse2d::{NseParams, NseSystem};
use attractor_lab::phase::{Basis, PhaseVector};
use attractor_lab::rds::{Nonlinearity, RdsParams, RdsSystem};
use attractor_lab::systems::Trajectory;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector(basis: Basis, scale: f64, rng: &mut ChaCha8Rng) -> PhaseVector {
    let c = (0..basis.coeff_len()).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
    PhaseVector::from_coeffs(basis, c).unwrap()
}

/// Random walk of `len` samples on a small sine basis.
pub fn random_walk(basis: Basis, len: usize, dt: f64, step: f64, rng: &mut ChaCha8Rng) -> Trajectory {
    let mut x = random_vector(basis, 1.0, rng);
    let mut samples = Vec::with_capacity(len);
    for _ in 0..len {
        samples.push(x.clone());
        let d = random_vector(basis, step, rng);
        x.axpy(1.0, &d);
    }
    Trajectory::new(0.0, dt, samples, "walk").unwrap()
}

/// Library of `pieces` unit-length windows cut from random walks.
pub fn walk_library(runs: usize, pieces_per_run: usize, seed: u64) -> PieceLibrary {
    let mut r = rng(seed);
    let basis = Basis::sine(1.0, 3);
    let dt = 0.25;
    // windows at t* = 0, 1, 2, ...: four samples per stride
    let len = 4 * pieces_per_run + 1;
    let walks = (0..runs).map(|_| random_walk(basis, len, dt, 0.3, &mut r)).collect();
    PieceLibrary::from_runs(walks, 0.0, 1.0, 1.0).unwrap()
}

/// Smallest number of centres among the points whose strict `radius` balls
/// cover all points.
pub fn exhaustive_min_cover(d: &DistanceMatrix, radius: f64) -> usize {
    let n = d.len();
    assert!(n <= 20);
    let balls: Vec<u32> = (0..n)
        .map(|c| (0..n).filter(|&j| d.get(c, j) < radius).fold(0u32, |m, j| m | (1 << j)))
        .collect();
    let full = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let mut best = n;
    for subset in 1u32..(1 << n) {
        let size = subset.count_ones() as usize;
        if size >= best {
            continue;
        }
        let cover = (0..n).filter(|&c| subset & (1 << c) != 0).fold(0u32, |m, c| m | balls[c]);
        if cover == full {
            best = size;
        }
    }
    best
}

pub fn chafee_infante_system(dt: f64, sample_dt: f64, force: Option<f64>) -> RdsSystem {
    let params = RdsParams { dt, ..RdsParams::default() };
    let basis = params.basis();
    let f = Nonlinearity::chafee_infante(2.5).unwrap();
    let g = match force {
        Some(a) => builtin_force("constant", &basis, ForceParams { amplitude: a, ..ForceParams::default() }).unwrap(),
        None => Force::zero(basis),
    };
    RdsSystem::new(params, Symbol::new("chafee_infante", g, Some(f)), sample_dt).unwrap()
}

pub fn nse_system(force: &str, amplitude: f64, nu: f64, dt: f64, sample_dt: f64) -> NseSystem {
    let params = NseParams { nu, dt, modes: 16, ..NseParams::default() };
    let basis = params.basis();
    let g = builtin_force(force, &basis, ForceParams { amplitude, omega: 0.5, rate: 1.0 }).unwrap();
    NseSystem::new(params, Symbol::new(force, g, None), sample_dt).unwrap()
}

pub fn grid_ceil(t: f64, h: f64) -> f64 {
    (t / h - 1e-9).ceil() * h
}
