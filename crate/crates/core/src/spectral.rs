//! Transform kernels shared by the solvers.
//!
//! `Fft2` moves Fourier2d coefficients to a physical `n × n` grid and back.
//! Spectral data lives in row-major `[k1][k2]` order; physical data produced
//! by [`Fft2::to_grid`] is in transposed `[j2][j1]` order, which pointwise
//! products do not care about and which saves one transpose per transform.
//!
//! `SineTransform` is the discrete sine transform between `M` orthonormal
//! Dirichlet modes and `Q = 2M + 1` interior collocation points.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::phase::Basis;

/// Smallest `n ≥ min` with no prime factors other than 2, 3 and 5.
pub fn smooth_size(min: usize) -> usize {
    let mut n = min.max(1);
    loop {
        let mut m = n;
        for p in [2, 3, 5] {
            while m % p == 0 {
                m /= p;
            }
        }
        if m == 1 {
            return n;
        }
        n += 1;
    }
}

#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    modes: usize,
    length: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).field("modes", &self.modes).finish()
    }
}

/// Scratch buffers for one thread of work.
pub struct Fft2Work {
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    c: Vec<Complex64>,
    d: Vec<Complex64>,
    tmp: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Fft2 {
    /// Grid of side `n` for a basis with `modes = K`. With `dealias` the grid
    /// satisfies `n ≥ 3K + 1`, so quadratic products are alias-free on the
    /// retained modes (the 2/3 rule).
    pub fn new(length: f64, modes: usize, dealias: bool) -> Self {
        let n = if dealias {
            smooth_size(3 * modes + 1)
        } else {
            smooth_size(2 * modes + 2)
        };
        let mut planner = FftPlanner::new();
        Fft2 {
            n,
            modes,
            length,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn work(&self) -> Fft2Work {
        let len = self.n * self.n;
        let z = Complex64::new(0.0, 0.0);
        let scratch_len = self
            .forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len());
        Fft2Work {
            a: vec![z; len],
            b: vec![z; len],
            c: vec![z; len],
            d: vec![z; len],
            tmp: vec![z; len],
            scratch: vec![z; scratch_len],
        }
    }

    fn wrap(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    fn transpose(&self, data: &mut [Complex64], tmp: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                tmp[j * n + i] = data[i * n + j];
            }
        }
        data.copy_from_slice(tmp);
    }

    fn inverse_2d(&self, data: &mut [Complex64], tmp: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inverse.process_with_scratch(data, scratch);
        self.transpose(data, tmp);
        self.inverse.process_with_scratch(data, scratch);
    }

    fn forward_2d(&self, data: &mut [Complex64], tmp: &mut [Complex64], scratch: &mut [Complex64]) {
        self.forward.process_with_scratch(data, scratch);
        self.transpose(data, tmp);
        self.forward.process_with_scratch(data, scratch);
    }

    /// Scatter the packed field `u_x + i u_y` into `out` and transform to the grid.
    fn pack_to_grid(&self, coeffs: &[f64], out: &mut [Complex64], tmp: &mut [Complex64], scratch: &mut [Complex64]) {
        let k = self.modes as i64;
        let side = 2 * self.modes + 1;
        let inv_l = 1.0 / self.length;
        out.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for k1 in -k..=k {
            for k2 in -k..=k {
                let m = (k1 + k) as usize * side + (k2 + k) as usize;
                let s = &coeffs[4 * m..4 * m + 4];
                let ux = Complex64::new(s[0], s[1]);
                let uy = Complex64::new(s[2], s[3]);
                out[self.wrap(k1) * self.n + self.wrap(k2)] = (ux + Complex64::i() * uy) * inv_l;
            }
        }
        self.inverse_2d(out, tmp, scratch);
    }

    /// Physical velocity of a Fourier2d coefficient array, as `(u_x, u_y)`
    /// grids in `[j2][j1]` order.
    pub fn velocity(&self, coeffs: &[f64], work: &mut Fft2Work) -> (Vec<f64>, Vec<f64>) {
        let Fft2Work { a, tmp, scratch, .. } = work;
        self.pack_to_grid(coeffs, a, tmp, scratch);
        (a.iter().map(|z| z.re).collect(), a.iter().map(|z| z.im).collect())
    }

    /// Divergence-form advection `Σ_b ∂_b(u_b v_a)` on the retained modes,
    /// before projection. `v = None` means `v = u`. Returns the maximum grid
    /// speeds `(max|u_x|, max|u_y|)` of `u`.
    pub fn advection(
        &self,
        u: &[f64],
        v: Option<&[f64]>,
        out: &mut [f64],
        work: &mut Fft2Work,
    ) -> (f64, f64) {
        let Fft2Work { a, b, c, d, tmp, scratch } = work;
        self.pack_to_grid(u, a, tmp, scratch);
        let mut speed = (0.0f64, 0.0f64);
        for z in a.iter() {
            speed.0 = speed.0.max(z.re.abs());
            speed.1 = speed.1.max(z.im.abs());
        }
        match v {
            None => {
                // c ← u_x² + i u_y², d ← u_x u_y
                for ((zc, zd), za) in c.iter_mut().zip(d.iter_mut()).zip(a.iter()) {
                    *zc = Complex64::new(za.re * za.re, za.im * za.im);
                    *zd = Complex64::new(za.re * za.im, 0.0);
                }
                self.forward_2d(c, tmp, scratch);
                self.forward_2d(d, tmp, scratch);
                self.assemble(out, |k1, k2| {
                    let (xx, yy) = split(c, self.idx(k1, k2), self.idx(-k1, -k2));
                    let xy = d[self.idx(k1, k2)];
                    (xx, xy, xy, yy)
                });
            }
            Some(v) => {
                self.pack_to_grid(v, b, tmp, scratch);
                // c ← u_x v_x + i u_y v_x, d ← u_x v_y + i u_y v_y
                for (((zc, zd), za), zb) in c.iter_mut().zip(d.iter_mut()).zip(a.iter()).zip(b.iter()) {
                    *zc = Complex64::new(za.re * zb.re, za.im * zb.re);
                    *zd = Complex64::new(za.re * zb.im, za.im * zb.im);
                }
                self.forward_2d(c, tmp, scratch);
                self.forward_2d(d, tmp, scratch);
                self.assemble(out, |k1, k2| {
                    let (i, j) = (self.idx(k1, k2), self.idx(-k1, -k2));
                    let (xx, yx) = split(c, i, j);
                    let (xy, yy) = split(d, i, j);
                    (xx, yx, xy, yy)
                });
            }
        }
        speed
    }

    fn idx(&self, k1: i64, k2: i64) -> usize {
        self.wrap(k1) * self.n + self.wrap(k2)
    }

    /// Write `N_a = i κ₁ P_{1a} + i κ₂ P_{2a}` for the product transforms
    /// `(P_xx, P_yx, P_xy, P_yy)` returned by `products(k1, k2)`, where
    /// `P_ba` is the transform of `u_b v_a`.
    fn assemble<F>(&self, out: &mut [f64], products: F)
    where
        F: Fn(i64, i64) -> (Complex64, Complex64, Complex64, Complex64),
    {
        let k = self.modes as i64;
        let side = 2 * self.modes + 1;
        let scale = self.length / (self.n * self.n) as f64;
        let wave = 2.0 * PI / self.length;
        for k1 in -k..=k {
            for k2 in -k..=k {
                let m = (k1 + k) as usize * side + (k2 + k) as usize;
                let (pxx, pyx, pxy, pyy) = products(k1, k2);
                let i1 = Complex64::new(0.0, wave * k1 as f64 * scale);
                let i2 = Complex64::new(0.0, wave * k2 as f64 * scale);
                let nx = i1 * pxx + i2 * pyx;
                let ny = i1 * pxy + i2 * pyy;
                out[4 * m] = nx.re;
                out[4 * m + 1] = nx.im;
                out[4 * m + 2] = ny.re;
                out[4 * m + 3] = ny.im;
            }
        }
        hermitian_symmetrize(out, self.modes);
    }

    /// Transform a real physical scalar (in `[j2][j1]` order, as produced by
    /// evaluating on [`Fft2::grid_points`]) to orthonormal coefficients on the
    /// retained modes, returned as complex values in mode order.
    pub fn scalar_to_modes(&self, grid: &[f64], work: &mut Fft2Work) -> Vec<Complex64> {
        let Fft2Work { a, tmp, scratch, .. } = work;
        for (z, g) in a.iter_mut().zip(grid) {
            *z = Complex64::new(*g, 0.0);
        }
        self.forward_2d(a, tmp, scratch);
        let k = self.modes as i64;
        let scale = self.length / (self.n * self.n) as f64;
        let mut out = Vec::with_capacity((2 * self.modes + 1).pow(2));
        for k1 in -k..=k {
            for k2 in -k..=k {
                out.push(a[self.idx(k1, k2)] * scale);
            }
        }
        out
    }

    /// Physical grid points `(x, y)` in `[j2][j1]` order.
    pub fn grid_points(&self) -> Vec<(f64, f64)> {
        let h = self.length / self.n as f64;
        let mut pts = Vec::with_capacity(self.n * self.n);
        for j2 in 0..self.n {
            for j1 in 0..self.n {
                pts.push((j1 as f64 * h, j2 as f64 * h));
            }
        }
        pts
    }
}

/// Separate the transforms of two real fields packed as `X + iY`.
fn split(z: &[Complex64], i: usize, j: usize) -> (Complex64, Complex64) {
    let a = z[i];
    let b = z[j].conj();
    ((a + b) * 0.5, (a - b) * Complex64::new(0.0, -0.5))
}

/// Enforce `u_{-κ} = conj(u_κ)` on a Fourier2d coefficient array.
pub fn hermitian_symmetrize(coeffs: &mut [f64], modes: usize) {
    let side = 2 * modes + 1;
    let count = side * side;
    for m in 0..count / 2 + 1 {
        let r = count - 1 - m;
        for c in 0..2 {
            let (re, im) = (4 * m + 2 * c, 4 * m + 2 * c + 1);
            let (rre, rim) = (4 * r + 2 * c, 4 * r + 2 * c + 1);
            let avg_re = 0.5 * (coeffs[re] + coeffs[rre]);
            let avg_im = 0.5 * (coeffs[im] - coeffs[rim]);
            coeffs[re] = avg_re;
            coeffs[im] = avg_im;
            coeffs[rre] = avg_re;
            coeffs[rim] = -avg_im;
        }
    }
}

/// Leray projection of a Fourier2d coefficient array in place: removes the
/// component of each mode parallel to κ and zeroes the mean.
pub fn leray_in_place(basis: &Basis, coeffs: &mut [f64]) {
    for m in 0..basis.mode_count() {
        let (k1, k2) = basis.wavenumber(m);
        let s = &mut coeffs[4 * m..4 * m + 4];
        if k1 == 0 && k2 == 0 {
            s.iter_mut().for_each(|x| *x = 0.0);
            continue;
        }
        let (a, b) = (k1 as f64, k2 as f64);
        let kk = a * a + b * b;
        // κ·u for real and imaginary parts
        let dre = (a * s[0] + b * s[2]) / kk;
        let dim = (a * s[1] + b * s[3]) / kk;
        s[0] -= a * dre;
        s[2] -= b * dre;
        s[1] -= a * dim;
        s[3] -= b * dim;
    }
}

/// Discrete sine transform between orthonormal Dirichlet modes and interior
/// collocation points `x_j = j ℓ / (Q + 1)`, `j = 1..=Q`, `Q = 2M + 1`.
#[derive(Clone, Debug)]
pub struct SineTransform {
    modes: usize,
    points: usize,
    length: f64,
    /// `table[k * Q + j] = √(2/ℓ) sin((k+1) π x_{j+1} / ℓ)`.
    table: Vec<f64>,
}

impl SineTransform {
    pub fn new(length: f64, modes: usize) -> Self {
        let points = 2 * modes + 1;
        let norm = (2.0 / length).sqrt();
        let mut table = Vec::with_capacity(modes * points);
        for k in 1..=modes {
            for j in 1..=points {
                let arg = (k * j) as f64 * PI / (points + 1) as f64;
                table.push(norm * arg.sin());
            }
        }
        SineTransform {
            modes,
            points,
            length,
            table,
        }
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        self.length / (self.points + 1) as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        let h = self.spacing();
        (1..=self.points).map(|j| j as f64 * h).collect()
    }

    /// Field values at the collocation points.
    pub fn synthesize(&self, coeffs: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (k, c) in coeffs.iter().enumerate().take(self.modes) {
            if *c == 0.0 {
                continue;
            }
            let row = &self.table[k * self.points..(k + 1) * self.points];
            for (o, s) in out.iter_mut().zip(row) {
                *o += c * s;
            }
        }
    }

    /// Orthonormal sine coefficients of collocation values; exact for fields
    /// spanned by the first `Q` modes.
    pub fn analyze(&self, values: &[f64], out: &mut [f64]) {
        let h = self.spacing();
        for (k, o) in out.iter_mut().enumerate().take(self.modes) {
            let row = &self.table[k * self.points..(k + 1) * self.points];
            *o = h * row.iter().zip(values).map(|(s, v)| s * v).sum::<f64>();
        }
    }
}
