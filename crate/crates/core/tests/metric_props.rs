mod common;

use std::f64::consts::PI;

use attractor_lab::phase::{
    directed_hausdorff, hausdorff, strong_dist, traj_dist_halfline, traj_dist_window, weak_dist, Basis, MetricSpec,
    PhaseVector, SetSample,
};
use attractor_lab::spectral::{Fft2, SineTransform};
use attractor_lab::systems::{random_initial_data, Trajectory};
use proptest::prelude::*;

use common::*;

fn sine_vec(modes: usize) -> impl Strategy<Value = PhaseVector> {
    prop::collection::vec(-3.0..3.0f64, modes)
        .prop_map(move |c| PhaseVector::from_coeffs(Basis::sine(PI, modes), c).unwrap())
}

fn point_set(modes: usize, max: usize) -> impl Strategy<Value = SetSample> {
    prop::collection::vec(sine_vec(modes), 1..max).prop_map(|p| SetSample::new(p).unwrap())
}

fn metric() -> impl Strategy<Value = MetricSpec> {
    prop_oneof![Just(MetricSpec::strong()), Just(MetricSpec::weak())]
}

proptest! {
    #[test]
    fn axioms(x in sine_vec(6), y in sine_vec(6), z in sine_vec(6), m in metric()) {
        let d = |a: &PhaseVector, b: &PhaseVector| m.dist(a, b).unwrap();
        prop_assert_eq!(d(&x, &x), 0.0);
        prop_assert_eq!(d(&x, &y), d(&y, &x));
        prop_assert!(d(&x, &y) >= 0.0);
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-12);
        if x != y {
            prop_assert!(d(&x, &y) > 0.0);
        }
    }

    #[test]
    fn weak_is_bounded_by_weight_mass(x in sine_vec(8), y in sine_vec(8)) {
        let m = MetricSpec::weak();
        let d = weak_dist(&x, &y, &m).unwrap();
        prop_assert!(d < m.weak_weight_sum(x.basis()));
    }

    #[test]
    fn weak_is_dominated_near_the_diagonal(x in sine_vec(8), y in sine_vec(8)) {
        // each term δ/(1+δ) ≤ δ ≤ |x − y|, weights below 1
        let d = weak_dist(&x, &y, &MetricSpec::weak()).unwrap();
        let s = strong_dist(&x, &y).unwrap();
        prop_assert!(d <= s * MetricSpec::weak().weak_weight_sum(x.basis()) + 1e-15);
    }

    #[test]
    fn sine_strong_distance_matches_quadrature(x in sine_vec(12), y in sine_vec(12)) {
        let st = SineTransform::new(PI, 12);
        let mut a = vec![0.0; st.points()];
        let mut b = vec![0.0; st.points()];
        st.synthesize(x.coeffs(), &mut a);
        st.synthesize(y.coeffs(), &mut b);
        let quad: f64 = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() * st.spacing();
        let d = strong_dist(&x, &y).unwrap();
        prop_assert!((quad.sqrt() - d).abs() <= 1e-10 * (1.0 + d));
    }

    #[test]
    fn hausdorff_matches_brute_force(a in point_set(4, 8), b in point_set(4, 8), m in metric()) {
        let brute = |p: &SetSample, q: &SetSample| {
            p.points
                .iter()
                .map(|x| q.points.iter().map(|y| m.dist(x, y).unwrap()).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
        };
        prop_assert_eq!(directed_hausdorff(&a, &b, &m).unwrap(), brute(&a, &b));
        let h = hausdorff(&a, &b, &m).unwrap();
        prop_assert_eq!(h, brute(&a, &b).max(brute(&b, &a)));
        prop_assert_eq!(h, hausdorff(&b, &a, &m).unwrap());
        prop_assert_eq!(hausdorff(&a, &a, &m).unwrap(), 0.0);
    }

    #[test]
    fn hausdorff_triangle(a in point_set(3, 6), b in point_set(3, 6), c in point_set(3, 6)) {
        let m = MetricSpec::strong();
        let h = |p: &SetSample, q: &SetSample| hausdorff(p, q, &m).unwrap();
        prop_assert!(h(&a, &c) <= h(&a, &b) + h(&b, &c) + 1e-12);
    }
}

#[test]
fn fourier_strong_distance_matches_grid_quadrature() {
    let basis = Basis::fourier2d(2.0 * PI, 6);
    let pts = random_initial_data(&basis, 6, 2.0, 6, 3).unwrap();
    let fft = Fft2::new(basis.length(), 6, true);
    let mut work = fft.work();
    let n = fft.size();
    let cell = (basis.length() / n as f64).powi(2);
    for pair in pts.points.windows(2) {
        let mut diff = pair[0].clone();
        diff.axpy(-1.0, &pair[1]);
        let (ux, uy) = fft.velocity(diff.coeffs(), &mut work);
        let quad: f64 = ux.iter().zip(&uy).map(|(a, b)| a * a + b * b).sum::<f64>() * cell;
        let d = strong_dist(&pair[0], &pair[1]).unwrap();
        assert!((quad.sqrt() - d).abs() < 1e-12 * d, "{} vs {d}", quad.sqrt());
    }
}

#[test]
fn window_and_halfline_distances() {
    let basis = Basis::sine(1.0, 2);
    let mut r = rng(4);
    let u = random_walk(basis, 81, 0.25, 0.1, &mut r);
    let shifted: Vec<PhaseVector> = u
        .samples()
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.coeffs_mut()[0] += 0.5;
            s
        })
        .collect();
    let v = Trajectory::new(0.0, 0.25, shifted, "shifted").unwrap();
    let m = MetricSpec::strong();
    let d = traj_dist_window(&u, &v, 0.0, 10.0, &m).unwrap();
    assert!((d - 0.5).abs() < 1e-14);
    let h = traj_dist_halfline(&u, &v, 0.0, &m).unwrap();
    // every unit window has distance 0.5: Σ 2^{-l} (1/3)
    let expected: f64 = (1..=m.series_terms).map(|l| 0.5f64.powi(l as i32) / 3.0).sum();
    assert!((h.value - expected).abs() < 1e-14);
    assert_eq!(h.tail_bound, 0.5f64.powi(m.series_terms as i32));
    assert!(traj_dist_window(&u, &v, 0.0, 30.0, &m).is_err());
}

#[test]
fn mismatched_bases_are_rejected() {
    let a = PhaseVector::zeros(Basis::sine(1.0, 3));
    let b = PhaseVector::zeros(Basis::sine(1.0, 4));
    assert!(strong_dist(&a, &b).is_err());
    assert!(weak_dist(&a, &b, &MetricSpec::weak()).is_err());
    let c = PhaseVector::zeros(Basis::sine(2.0, 3));
    assert!(strong_dist(&a, &c).is_err());
}
