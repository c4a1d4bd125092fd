//! Reference disk discretization.
//!
//! Nodes are the tensor product of a uniform angular grid and the positive
//! half of an odd-order Chebyshev-Gauss-Lobatto grid on the diameter
//! `[-1, 1]`. A function on the disk is extended to the full diameter through
//! `f(-r, φ) = f(r, φ + π)`, so every angular mode carries its own radial
//! parity and the origin is never a node.
//!
//! Node `(i_r, i_θ)` is stored at flat index `i_r * n_theta + i_θ`; ring
//! `i_r = 0` is the boundary circle `r = 1`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Smallest supported radial node count.
pub const MIN_RADIAL: usize = 9;
/// Smallest supported angular node count.
pub const MIN_ANGULAR: usize = 8;

pub struct ReferenceDisk {
    n_r: usize,
    n_theta: usize,
    radii: Vec<f64>,
    angles: Vec<f64>,
    /// Radial weights for `∫₀¹ F(r) r dr` with `F` even in `r`.
    radial_weights: Vec<f64>,
    area_weights: Vec<f64>,
    // Radial differentiation split into the direct and mirrored halves of
    // the diameter, row-major `n_r × n_r`.
    d1_direct: Vec<f64>,
    d1_mirror: Vec<f64>,
    d2_direct: Vec<f64>,
    d2_mirror: Vec<f64>,
    cos_t: Vec<f64>,
    sin_t: Vec<f64>,
    inv_r: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for ReferenceDisk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReferenceDisk")
            .field("n_r", &self.n_r)
            .field("n_theta", &self.n_theta)
            .finish()
    }
}

/// Chebyshev differentiation matrix on `x_j = cos(jπ/m)`, `j = 0..=m`.
pub fn chebyshev_matrix(m: usize) -> (Vec<f64>, Vec<f64>) {
    let n = m + 1;
    let x: Vec<f64> = (0..n).map(|j| (PI * j as f64 / m as f64).cos()).collect();
    let c = |i: usize| {
        let base = if i == 0 || i == m { 2.0 } else { 1.0 };
        if i % 2 == 0 {
            base
        } else {
            -base
        }
    };
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            if i != j {
                // x_i − x_j via the product formula, free of cancellation.
                let gap = -2.0
                    * (PI * (i + j) as f64 / (2 * m) as f64).sin()
                    * (PI * (i as f64 - j as f64) / (2 * m) as f64).sin();
                let v = c(i) / c(j) / gap;
                d[i * n + j] = v;
                row_sum += v;
            }
        }
        d[i * n + i] = -row_sum;
    }
    (x, d)
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

/// `∫₀¹ T_{2k}(r) r dr`.
fn even_chebyshev_moment(k: usize) -> f64 {
    if k % 2 == 1 {
        0.0
    } else {
        let k = k as f64;
        1.0 / (2.0 * (1.0 - k * k))
    }
}

impl ReferenceDisk {
    pub fn new(n_r: usize, n_theta: usize) -> Result<Arc<Self>> {
        if n_r < MIN_RADIAL || n_theta < MIN_ANGULAR || n_theta % 2 != 0 {
            return Err(Error::InvalidResolution { n_r, n_theta });
        }
        let m = 2 * n_r - 1;
        let (x, d1) = chebyshev_matrix(m);
        let mut d2 = matmul(&d1, &d1, m + 1);
        // Rows of D² must annihilate constants exactly.
        for i in 0..=m {
            let off: f64 = (0..=m).filter(|&j| j != i).map(|j| d2[i * (m + 1) + j]).sum();
            d2[i * (m + 1) + i] = -off;
        }
        let split = |d: &[f64]| {
            let mut direct = vec![0.0; n_r * n_r];
            let mut mirror = vec![0.0; n_r * n_r];
            for i in 0..n_r {
                for j in 0..n_r {
                    direct[i * n_r + j] = d[i * (m + 1) + j];
                    mirror[i * n_r + j] = d[i * (m + 1) + (m - j)];
                }
            }
            (direct, mirror)
        };
        let (d1_direct, d1_mirror) = split(&d1);
        let (d2_direct, d2_mirror) = split(&d2);
        let radii: Vec<f64> = x[..n_r].to_vec();

        let vandermonde = nalgebra::DMatrix::from_fn(n_r, n_r, |k, j| {
            let t = radii[j].acos();
            (2.0 * k as f64 * t).cos()
        });
        let moments = nalgebra::DVector::from_fn(n_r, |k, _| even_chebyshev_moment(k));
        let radial_weights: Vec<f64> = vandermonde
            .lu()
            .solve(&moments)
            .expect("even Chebyshev Vandermonde is nonsingular")
            .iter()
            .copied()
            .collect();

        let dphi = 2.0 * PI / n_theta as f64;
        let angles: Vec<f64> = (0..n_theta).map(|k| k as f64 * dphi).collect();
        let mut area_weights = Vec::with_capacity(n_r * n_theta);
        let mut cos_t = Vec::with_capacity(n_r * n_theta);
        let mut sin_t = Vec::with_capacity(n_r * n_theta);
        let mut inv_r = Vec::with_capacity(n_r * n_theta);
        for &w in radial_weights.iter().take(n_r) {
            for _ in 0..n_theta {
                area_weights.push(w * dphi);
            }
        }
        for &r in &radii {
            for &phi in &angles {
                cos_t.push(phi.cos());
                sin_t.push(phi.sin());
                inv_r.push(1.0 / r);
            }
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n_theta);
        let inverse = planner.plan_fft_inverse(n_theta);
        Ok(Arc::new(Self {
            n_r,
            n_theta,
            radii,
            angles,
            radial_weights,
            area_weights,
            d1_direct,
            d1_mirror,
            d2_direct,
            d2_mirror,
            cos_t,
            sin_t,
            inv_r,
            forward,
            inverse,
        }))
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn len(&self) -> usize {
        self.n_r * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, i_r: usize, i_theta: usize) -> usize {
        i_r * self.n_theta + i_theta
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn radius(&self, node: usize) -> f64 {
        self.radii[node / self.n_theta]
    }

    pub fn angle(&self, node: usize) -> f64 {
        self.angles[node % self.n_theta]
    }

    /// Cartesian reference coordinates `(y₁, y₂)` of a node.
    pub fn point(&self, node: usize) -> [f64; 2] {
        let r = self.radius(node);
        [r * self.cos_t[node], r * self.sin_t[node]]
    }

    /// Samples a function of the Cartesian reference coordinates.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|n| {
                let [y1, y2] = self.point(n);
                f(y1, y2)
            })
            .collect()
    }

    pub fn radial_weights(&self) -> &[f64] {
        &self.radial_weights
    }

    pub fn area_weights(&self) -> &[f64] {
        &self.area_weights
    }

    /// Uniform arc weight of a boundary node on the reference circle.
    pub fn boundary_weight(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    /// `∫_Ω f dy` over the reference disk.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.area_weights).map(|(a, w)| a * w).sum()
    }

    /// `∮ f dφ` over the boundary ring of a nodal field.
    pub fn integrate_boundary(&self, f: &[f64]) -> f64 {
        f[..self.n_theta].iter().sum::<f64>() * self.boundary_weight()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        node < self.n_theta
    }

    /// Flat index of the node diametrically opposite on the same ring.
    fn mirror_shift(&self, f: &[f64]) -> Vec<f64> {
        let nt = self.n_theta;
        let half = nt / 2;
        let mut out = vec![0.0; f.len()];
        for (ring_out, ring_in) in out.chunks_mut(nt).zip(f.chunks(nt)) {
            ring_out[..half].copy_from_slice(&ring_in[half..]);
            ring_out[half..].copy_from_slice(&ring_in[..half]);
        }
        out
    }

    fn apply_radial(&self, direct: &[f64], mirror: &[f64], f: &[f64]) -> Vec<f64> {
        let nt = self.n_theta;
        let nr = self.n_r;
        let shifted = self.mirror_shift(f);
        let mut out = vec![0.0; f.len()];
        for i in 0..nr {
            let row = &mut out[i * nt..(i + 1) * nt];
            for j in 0..nr {
                let a = direct[i * nr + j];
                let b = mirror[i * nr + j];
                let fj = &f[j * nt..(j + 1) * nt];
                let sj = &shifted[j * nt..(j + 1) * nt];
                for k in 0..nt {
                    row[k] += a * fj[k] + b * sj[k];
                }
            }
        }
        out
    }

    /// `∂f/∂r` of a single-valued nodal field.
    pub fn d_dr(&self, f: &[f64]) -> Vec<f64> {
        self.apply_radial(&self.d1_direct, &self.d1_mirror, f)
    }

    /// `∂²f/∂r²` of a single-valued nodal field.
    pub fn d2_dr2(&self, f: &[f64]) -> Vec<f64> {
        self.apply_radial(&self.d2_direct, &self.d2_mirror, f)
    }

    /// Signed wavenumber of FFT bin `k`.
    pub fn wavenumber(&self, k: usize) -> i64 {
        let nt = self.n_theta as i64;
        let k = k as i64;
        if k <= nt / 2 {
            k
        } else {
            k - nt
        }
    }

    /// Forward FFT of every ring, unnormalized.
    pub fn rings_forward(&self, f: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = f.iter().map(|&a| Complex64::new(a, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse of [`rings_forward`](Self::rings_forward), real part.
    pub fn rings_inverse(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.n_theta as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    /// Removes the alternating `(−1)^j` mode from every ring.
    pub fn without_nyquist(&self, f: &[f64]) -> Vec<f64> {
        let nt = self.n_theta;
        let mut out = f.to_vec();
        for ring in out.chunks_mut(nt) {
            let c = ring.iter().enumerate().map(|(j, x)| if j % 2 == 0 { *x } else { -x }).sum::<f64>() / nt as f64;
            for (j, x) in ring.iter_mut().enumerate() {
                *x -= if j % 2 == 0 { c } else { -c };
            }
        }
        out
    }

    /// `∂f/∂φ`, Nyquist mode dropped.
    pub fn d_dphi(&self, f: &[f64]) -> Vec<f64> {
        let mut buf = self.rings_forward(f);
        let nt = self.n_theta;
        for ring in buf.chunks_mut(nt) {
            for (k, c) in ring.iter_mut().enumerate() {
                if 2 * k == nt {
                    *c = Complex64::new(0.0, 0.0);
                } else {
                    let m = self.wavenumber(k) as f64;
                    *c = Complex64::new(-m * c.im, m * c.re);
                }
            }
        }
        self.rings_inverse(buf)
    }

    /// `∂²f/∂φ²`, Nyquist mode kept.
    pub fn d2_dphi2(&self, f: &[f64]) -> Vec<f64> {
        let mut buf = self.rings_forward(f);
        let nt = self.n_theta;
        for ring in buf.chunks_mut(nt) {
            for (k, c) in ring.iter_mut().enumerate() {
                let m = self.wavenumber(k) as f64;
                *c *= -m * m;
            }
        }
        self.rings_inverse(buf)
    }

    /// `Δ_y f = f_rr + f_r/r + f_φφ/r²`, the operator of
    /// [`mode_laplacian`](Self::mode_laplacian) in nodal form.
    pub fn flat_laplacian(&self, f: &[f64]) -> Vec<f64> {
        let fr = self.d_dr(f);
        let frr = self.d2_dr2(f);
        let fpp = self.d2_dphi2(f);
        (0..f.len())
            .map(|k| {
                let ir = self.inv_r[k];
                frr[k] + ir * (fr[k] + ir * fpp[k])
            })
            .collect()
    }

    /// Cartesian reference derivatives `(∂f/∂y₁, ∂f/∂y₂)`.
    pub fn grad_y(&self, f: &[f64]) -> [Vec<f64>; 2] {
        let fr = self.d_dr(f);
        let fp = self.d_dphi(f);
        let mut g1 = vec![0.0; f.len()];
        let mut g2 = vec![0.0; f.len()];
        for n in 0..f.len() {
            let (c, s, ir) = (self.cos_t[n], self.sin_t[n], self.inv_r[n]);
            g1[n] = c * fr[n] - s * ir * fp[n];
            g2[n] = s * fr[n] + c * ir * fp[n];
        }
        [g1, g2]
    }

    /// Radial first-derivative matrix acting on angular mode `m`.
    pub fn mode_d1(&self, m: i64) -> nalgebra::DMatrix<f64> {
        self.mode_matrix(&self.d1_direct, &self.d1_mirror, m)
    }

    /// Radial second-derivative matrix acting on angular mode `m`.
    pub fn mode_d2(&self, m: i64) -> nalgebra::DMatrix<f64> {
        self.mode_matrix(&self.d2_direct, &self.d2_mirror, m)
    }

    fn mode_matrix(&self, direct: &[f64], mirror: &[f64], m: i64) -> nalgebra::DMatrix<f64> {
        let parity = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let n = self.n_r;
        nalgebra::DMatrix::from_fn(n, n, |i, j| direct[i * n + j] + parity * mirror[i * n + j])
    }

    /// Flat Laplacian of angular mode `m` on the radial nodes.
    pub fn mode_laplacian(&self, m: i64) -> nalgebra::DMatrix<f64> {
        let d1 = self.mode_d1(m);
        let mut l = self.mode_d2(m);
        let m2 = (m * m) as f64;
        for i in 0..self.n_r {
            let r = self.radii[i];
            for j in 0..self.n_r {
                l[(i, j)] += d1[(i, j)] / r;
            }
            l[(i, i)] -= m2 / (r * r);
        }
        l
    }

    /// Fraction of the spectral energy carried by the top third of the
    /// angular and Chebyshev modes, the larger of the two.
    pub fn spectral_tail(&self, f: &[f64]) -> f64 {
        let nt = self.n_theta;
        let nr = self.n_r;
        let buf = self.rings_forward(f);
        let cutoff = (nt / 2) * 2 / 3;
        let (mut total, mut tail) = (0.0, 0.0);
        for ring in buf.chunks(nt) {
            for (k, c) in ring.iter().enumerate() {
                let e = c.norm_sqr();
                total += e;
                if self.wavenumber(k).unsigned_abs() as usize > cutoff {
                    tail += e;
                }
            }
        }
        let angular = if total > 0.0 { (tail / total).sqrt() } else { 0.0 };

        // Chebyshev coefficients along each diameter.
        let m = 2 * nr - 1;
        let (mut total, mut tail) = (0.0, 0.0);
        let cut = (m + 1) * 2 / 3;
        let half = nt / 2;
        let mut line = vec![0.0; m + 1];
        for k in 0..half {
            for j in 0..nr {
                line[j] = f[j * nt + k];
                line[m - j] = f[j * nt + k + half];
            }
            for p in 0..=m {
                let mut a = 0.0;
                for (j, &v) in line.iter().enumerate() {
                    let w = if j == 0 || j == m { 0.5 } else { 1.0 };
                    a += w * v * (PI * (p * j) as f64 / m as f64).cos();
                }
                let e = a * a;
                total += e;
                if p >= cut {
                    tail += e;
                }
            }
        }
        let radial = if total > 0.0 { (tail / total).sqrt() } else { 0.0 };
        angular.max(radial)
    }
}
