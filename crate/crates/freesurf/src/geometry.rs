//! Flow map, induced metric and free-surface geometry.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{Field, Frame};
use crate::grid::ReferenceDisk;

/// The flow map `x(y)` sampled at the reference nodes together with its
/// Jacobian `F^i_a = ∂x^i/∂y^a` and inverse `A^a_i = ∂y^a/∂x^i`.
#[derive(Clone, Debug)]
pub struct LagrangianMap {
    disk: Arc<ReferenceDisk>,
    x: [Vec<f64>; 2],
    jac: [Vec<f64>; 4],
    inv: [Vec<f64>; 4],
    det: Vec<f64>,
}

impl LagrangianMap {
    pub fn identity(disk: &Arc<ReferenceDisk>) -> Self {
        let x1 = disk.sample(|y1, _| y1);
        let x2 = disk.sample(|_, y2| y2);
        Self::new(disk, [x1, x2]).expect("identity map is regular")
    }

    pub fn from_fn(disk: &Arc<ReferenceDisk>, f: impl Fn(f64, f64) -> [f64; 2]) -> Result<Self> {
        let pts: Vec<[f64; 2]> = (0..disk.len())
            .map(|n| {
                let [y1, y2] = disk.point(n);
                f(y1, y2)
            })
            .collect();
        let x1 = pts.iter().map(|p| p[0]).collect();
        let x2 = pts.iter().map(|p| p[1]).collect();
        Self::new(disk, [x1, x2])
    }

    pub fn new(disk: &Arc<ReferenceDisk>, x: [Vec<f64>; 2]) -> Result<Self> {
        let n = disk.len();
        if x[0].len() != n || x[1].len() != n {
            return Err(Error::InvalidInput("map positions do not match the grid".into()));
        }
        let [f11, f12] = disk.grad_y(&x[0]);
        let [f21, f22] = disk.grad_y(&x[1]);
        let mut det = vec![0.0; n];
        let mut inv = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for k in 0..n {
            let d = f11[k] * f22[k] - f12[k] * f21[k];
            if !(d > 0.0) {
                return Err(Error::DegenerateMap { node: k, det: d });
            }
            det[k] = d;
            // A = F⁻¹, stored as A^a_i at [2a + i].
            inv[0][k] = f22[k] / d;
            inv[1][k] = -f12[k] / d;
            inv[2][k] = -f21[k] / d;
            inv[3][k] = f11[k] / d;
        }
        Ok(Self {
            disk: disk.clone(),
            x,
            jac: [f11, f12, f21, f22],
            inv,
            det,
        })
    }

    pub fn disk(&self) -> &Arc<ReferenceDisk> {
        &self.disk
    }

    pub fn positions(&self) -> &[Vec<f64>; 2] {
        &self.x
    }

    /// `∂x^i/∂y^a`.
    pub fn jacobian(&self, i: usize, a: usize) -> &[f64] {
        &self.jac[2 * i + a]
    }

    /// `∂y^a/∂x^i`.
    pub fn inverse_jacobian(&self, a: usize, i: usize) -> &[f64] {
        &self.inv[2 * a + i]
    }

    /// `J = det(∂x/∂y) = √det g`.
    pub fn volume_factor(&self) -> &[f64] {
        &self.det
    }

    /// Eulerian gradient `∂_i f = A^a_i ∂_a f` of a nodal scalar.
    pub fn grad(&self, f: &[f64]) -> [Vec<f64>; 2] {
        let [f1, f2] = self.disk.grad_y(f);
        let n = f.len();
        let mut g1 = vec![0.0; n];
        let mut g2 = vec![0.0; n];
        for k in 0..n {
            g1[k] = self.inv[0][k] * f1[k] + self.inv[2][k] * f2[k];
            g2[k] = self.inv[1][k] * f1[k] + self.inv[3][k] * f2[k];
        }
        [g1, g2]
    }

    /// `Δf = J⁻¹ ∂_a(J g^{ab} ∂_b f)`, split as the flat polar Laplacian
    /// plus the divergence of `(J g^{ab} − δ^{ab}) ∂_b f`, acting on and
    /// returning fields without the angular Nyquist mode. Composing the
    /// collocation gradient twice, or keeping the Nyquist mode, leaves
    /// eigenvalues far off the negative axis that the wave equation
    /// turns into exponential growth.
    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        let f = self.disk.without_nyquist(f);
        let flat = self.disk.flat_laplacian(&f);
        let [f1, f2] = self.disk.grad_y(&f);
        let n = f.len();
        let mut w1 = vec![0.0; n];
        let mut w2 = vec![0.0; n];
        for k in 0..n {
            let (a11, a12, a21, a22) = (self.inv[0][k], self.inv[1][k], self.inv[2][k], self.inv[3][k]);
            let j = self.det[k];
            let g11 = j * (a11 * a11 + a12 * a12) - 1.0;
            let g12 = j * (a11 * a21 + a12 * a22);
            let g22 = j * (a21 * a21 + a22 * a22) - 1.0;
            w1[k] = g11 * f1[k] + g12 * f2[k];
            w2[k] = g12 * f1[k] + g22 * f2[k];
        }
        let [d11, _] = self.disk.grad_y(&w1);
        let [_, d22] = self.disk.grad_y(&w2);
        let out: Vec<f64> = (0..n).map(|k| (flat[k] + d11[k] + d22[k]) / self.det[k]).collect();
        self.disk.without_nyquist(&out)
    }

    /// Quadrature weights of `dx = J dy`.
    pub fn volume_weights(&self) -> Vec<f64> {
        self.disk
            .area_weights()
            .iter()
            .zip(&self.det)
            .map(|(w, j)| w * j)
            .collect()
    }

    /// `∫_{D_t} f dx`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter()
            .zip(self.disk.area_weights())
            .zip(&self.det)
            .map(|((a, w), j)| a * w * j)
            .sum()
    }

    /// Induced metric `g_ab = δ_ij F^i_a F^j_b`.
    pub fn metric(&self) -> Field {
        let n = self.disk.len();
        let mut comps = vec![vec![0.0; n]; 4];
        for a in 0..2 {
            for b in 0..2 {
                for k in 0..n {
                    comps[2 * a + b][k] = self.jac[a][k] * self.jac[b][k] + self.jac[2 + a][k] * self.jac[2 + b][k];
                }
            }
        }
        Field::from_components(2, Frame::Lagrangian, comps).expect("rank 2")
    }

    /// Inverse metric `g^{ab} = A^a_i A^b_i`.
    pub fn inverse_metric(&self) -> Field {
        let n = self.disk.len();
        let mut comps = vec![vec![0.0; n]; 4];
        for a in 0..2 {
            for b in 0..2 {
                for k in 0..n {
                    comps[2 * a + b][k] = self.inv[2 * a][k] * self.inv[2 * b][k] + self.inv[2 * a + 1][k] * self.inv[2 * b + 1][k];
                }
            }
        }
        Field::from_components(2, Frame::Lagrangian, comps).expect("rank 2")
    }

    /// Largest `|F·F⁻¹ − I|` entry, a consistency diagnostic.
    pub fn inverse_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.disk.len() {
            for i in 0..2 {
                for j in 0..2 {
                    let s: f64 = (0..2).map(|a| self.jac[2 * i + a][k] * self.inv[2 * a + j][k]).sum();
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((s - target).abs());
                }
            }
        }
        worst
    }

    pub fn boundary_curve(&self) -> BoundaryCurve {
        let nt = self.disk.n_theta();
        BoundaryCurve::from_samples(&self.x[0][..nt], &self.x[1][..nt])
    }
}

/// Trigonometric interpolant of the free boundary `X(φ) = x(1, φ)`.
#[derive(Clone, Debug)]
pub struct BoundaryCurve {
    coeffs: [Vec<Complex64>; 2],
    n: usize,
}

impl BoundaryCurve {
    pub fn from_samples(x1: &[f64], x2: &[f64]) -> Self {
        let n = x1.len();
        let mut planner = rustfft::FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let transform = |x: &[f64]| {
            let mut buf: Vec<Complex64> = x.iter().map(|&a| Complex64::new(a / n as f64, 0.0)).collect();
            fft.process(&mut buf);
            buf
        };
        Self {
            coeffs: [transform(x1), transform(x2)],
            n,
        }
    }

    /// `d^p X_c/dφ^p` at an arbitrary angle.
    pub fn eval(&self, c: usize, phi: f64, p: u32) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for (k, a) in self.coeffs[c].iter().enumerate() {
            if 2 * k == n {
                let m = k as f64;
                s += a.re * m.powi(p as i32) * (m * phi + p as f64 * PI / 2.0).cos();
                continue;
            }
            let m = if 2 * k < n { k as f64 } else { k as f64 - n as f64 };
            let e = Complex64::new(0.0, m * phi).exp();
            let ik = Complex64::new(0.0, m).powu(p);
            s += (a * ik * e).re;
        }
        s
    }

    pub fn point(&self, phi: f64) -> [f64; 2] {
        [self.eval(0, phi, 0), self.eval(1, phi, 0)]
    }

    pub fn tangent(&self, phi: f64) -> [f64; 2] {
        [self.eval(0, phi, 1), self.eval(1, phi, 1)]
    }

    /// Outward unit normal for a counterclockwise curve.
    pub fn normal(&self, phi: f64) -> [f64; 2] {
        let [t1, t2] = self.tangent(phi);
        let s = (t1 * t1 + t2 * t2).sqrt();
        [t2 / s, -t1 / s]
    }

    /// Signed curvature, positive for a convex counterclockwise curve.
    pub fn curvature(&self, phi: f64) -> f64 {
        let [a1, a2] = self.tangent(phi);
        let b1 = self.eval(0, phi, 2);
        let b2 = self.eval(1, phi, 2);
        (a1 * b2 - a2 * b1) / (a1 * a1 + a2 * a2).powf(1.5)
    }

    /// Foot point of the nearest boundary point, refined by Newton from
    /// `phi0`. Returns `(φ*, distance)`.
    pub fn nearest(&self, x: [f64; 2], phi0: f64) -> (f64, f64) {
        let dist = |phi: f64| {
            let p = self.point(phi);
            ((p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)).sqrt()
        };
        let mut phi = phi0;
        let mut best = (phi0, dist(phi0));
        for _ in 0..30 {
            let p = self.point(phi);
            let t = self.tangent(phi);
            let tt = [self.eval(0, phi, 2), self.eval(1, phi, 2)];
            let r = [p[0] - x[0], p[1] - x[1]];
            let g = r[0] * t[0] + r[1] * t[1];
            let dg = t[0] * t[0] + t[1] * t[1] + r[0] * tt[0] + r[1] * tt[1];
            if dg <= 0.0 {
                break;
            }
            let step = (g / dg).clamp(-0.5, 0.5);
            phi -= step;
            let d = dist(phi);
            if d < best.1 {
                best = (phi, d);
            }
            if step.abs() < 1e-15 {
                break;
            }
        }
        best
    }
}

/// Smooth cutoff: `1` for `s ≤ 1/4`, `0` for `s ≥ 1/2`, quintic blend between.
pub fn cutoff(s: f64) -> f64 {
    if s <= 0.25 {
        1.0
    } else if s >= 0.5 {
        0.0
    } else {
        let t = (s - 0.25) / 0.25;
        1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

/// Options for [`GeometryCache::new`].
#[derive(Clone, Copy, Debug)]
pub struct GeometryOptions {
    /// Normal-turn threshold used by the injectivity radius search.
    pub eta_threshold: f64,
    /// `d₀ = collar_fraction · l₀`.
    pub collar_fraction: f64,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        Self {
            eta_threshold: 1.0,
            collar_fraction: 0.25,
        }
    }
}

/// Everything geometric derived from a [`LagrangianMap`].
///
/// Boundary quantities are stored per boundary node (ring 0, `n_theta`
/// entries); Eulerian tensors use the components of `x`.
#[derive(Clone, Debug)]
pub struct GeometryCache {
    pub map: LagrangianMap,
    pub metric: Field,
    pub inverse_metric: Field,
    /// Eulerian outward unit normal `N^i`.
    pub normal: [Vec<f64>; 2],
    /// Lagrangian conormal `N_a`.
    pub conormal: [Vec<f64>; 2],
    /// Lagrangian normal `N^a = g^{ab} N_b`.
    pub normal_lagrangian: [Vec<f64>; 2],
    /// `γ_a^b`, flat index `2a + b`.
    pub projection: [Vec<f64>; 4],
    /// Eulerian `γ^{ij} = δ^{ij} − N^i N^j`.
    pub projection_eulerian: [Vec<f64>; 4],
    /// Second fundamental form, Eulerian components `θ_ij`.
    pub theta: [Vec<f64>; 4],
    /// Second fundamental form, Lagrangian components `θ_ab`.
    pub theta_lagrangian: [Vec<f64>; 4],
    /// Mean curvature `σ = tr θ`.
    pub mean_curvature: Vec<f64>,
    /// Arc-length density `|dX/dφ|`.
    pub arc_speed: Vec<f64>,
    /// Distance to the free boundary at every node.
    pub distance: Vec<f64>,
    /// Extended unit normal at every node (normal at the foot point).
    pub extended_normal: [Vec<f64>; 2],
    /// `η(d/d₀)` at every node.
    pub eta: Vec<f64>,
    /// `q^{ij} = δ^{ij} − η² 𝒩^i 𝒩^j`, flat index `2i + j`.
    pub q: [Vec<f64>; 4],
    pub d0: f64,
    pub l0: f64,
    pub l1: f64,
    pub eta_threshold: f64,
}

impl GeometryCache {
    pub fn new(map: &LagrangianMap) -> Result<Self> {
        Self::with_options(map, GeometryOptions::default())
    }

    pub fn with_options(map: &LagrangianMap, opts: GeometryOptions) -> Result<Self> {
        let disk = map.disk().clone();
        let nt = disk.n_theta();
        let n = disk.len();
        let curve = map.boundary_curve();
        let angles = disk.angles();

        let mut normal = [vec![0.0; nt], vec![0.0; nt]];
        let mut arc_speed = vec![0.0; nt];
        let mut mean_curvature = vec![0.0; nt];
        let mut theta = [vec![0.0; nt], vec![0.0; nt], vec![0.0; nt], vec![0.0; nt]];
        let mut projection_eulerian = theta.clone();
        for k in 0..nt {
            let t = curve.tangent(angles[k]);
            let s = (t[0] * t[0] + t[1] * t[1]).sqrt();
            let tu = [t[0] / s, t[1] / s];
            let nu = [tu[1], -tu[0]];
            let kappa = curve.curvature(angles[k]);
            arc_speed[k] = s;
            mean_curvature[k] = kappa;
            normal[0][k] = nu[0];
            normal[1][k] = nu[1];
            for i in 0..2 {
                for j in 0..2 {
                    theta[2 * i + j][k] = kappa * tu[i] * tu[j];
                    let delta = if i == j { 1.0 } else { 0.0 };
                    projection_eulerian[2 * i + j][k] = delta - nu[i] * nu[j];
                }
            }
        }

        let mut conormal = [vec![0.0; nt], vec![0.0; nt]];
        let mut normal_lagrangian = [vec![0.0; nt], vec![0.0; nt]];
        let mut projection = [vec![0.0; nt], vec![0.0; nt], vec![0.0; nt], vec![0.0; nt]];
        let mut theta_lagrangian = projection.clone();
        for k in 0..nt {
            for a in 0..2 {
                conormal[a][k] = (0..2).map(|i| map.jacobian(i, a)[k] * normal[i][k]).sum();
                normal_lagrangian[a][k] = (0..2).map(|i| map.inverse_jacobian(a, i)[k] * normal[i][k]).sum();
            }
            for a in 0..2 {
                for b in 0..2 {
                    let delta = if a == b { 1.0 } else { 0.0 };
                    projection[2 * a + b][k] = delta - conormal[a][k] * normal_lagrangian[b][k];
                    let mut s = 0.0;
                    for i in 0..2 {
                        for j in 0..2 {
                            s += map.jacobian(i, a)[k] * map.jacobian(j, b)[k] * theta[2 * i + j][k];
                        }
                    }
                    theta_lagrangian[2 * a + b][k] = s;
                }
            }
        }

        let (l0, l1) = injectivity_radius_of(&curve, angles, &mean_curvature, opts.eta_threshold);
        let d0 = opts.collar_fraction * l0;

        let x = map.positions();
        let mut distance = vec![0.0; n];
        let mut extended_normal = [vec![0.0; n], vec![0.0; n]];
        let bx: Vec<[f64; 2]> = (0..nt).map(|k| [x[0][k], x[1][k]]).collect();
        for node in 0..n {
            if disk.is_boundary(node) {
                extended_normal[0][node] = normal[0][node];
                extended_normal[1][node] = normal[1][node];
                continue;
            }
            let p = [x[0][node], x[1][node]];
            let (kbest, dbest) = bx
                .iter()
                .enumerate()
                .map(|(k, b)| (k, ((b[0] - p[0]).powi(2) + (b[1] - p[1]).powi(2)).sqrt()))
                .fold((0, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
            if dbest < 2.0 * d0 {
                let (phi, d) = curve.nearest(p, angles[kbest]);
                let nn = curve.normal(phi);
                distance[node] = d;
                extended_normal[0][node] = nn[0];
                extended_normal[1][node] = nn[1];
            } else {
                distance[node] = dbest;
                extended_normal[0][node] = normal[0][kbest];
                extended_normal[1][node] = normal[1][kbest];
            }
        }
        let eta: Vec<f64> = distance.iter().map(|&d| cutoff(d / d0)).collect();
        let mut q = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for node in 0..n {
            let e2 = eta[node] * eta[node];
            for i in 0..2 {
                for j in 0..2 {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    q[2 * i + j][node] = delta - e2 * extended_normal[i][node] * extended_normal[j][node];
                }
            }
        }

        Ok(Self {
            map: map.clone(),
            metric: map.metric(),
            inverse_metric: map.inverse_metric(),
            normal,
            conormal,
            normal_lagrangian,
            projection,
            projection_eulerian,
            theta,
            theta_lagrangian,
            mean_curvature,
            arc_speed,
            distance,
            extended_normal,
            eta,
            q,
            d0,
            l0,
            l1,
            eta_threshold: opts.eta_threshold,
        })
    }

    pub fn disk(&self) -> &Arc<ReferenceDisk> {
        self.map.disk()
    }

    /// Largest `|θ|` over the boundary.
    pub fn max_curvature(&self) -> f64 {
        self.mean_curvature.iter().fold(0.0, |a, &k| a.max(k.abs()))
    }

    /// A priori geometry monitor `max|θ| + 1/l₀`.
    pub fn geometry_monitor(&self) -> f64 {
        self.max_curvature() + 1.0 / self.l0
    }

    /// `∮ f dS` of boundary-node values.
    pub fn integrate_boundary(&self, f: &[f64]) -> f64 {
        let w = self.disk().boundary_weight();
        f.iter().zip(&self.arc_speed).map(|(a, s)| a * s * w).sum()
    }

    /// Boundary length.
    pub fn perimeter(&self) -> f64 {
        self.integrate_boundary(&vec![1.0; self.arc_speed.len()])
    }

    /// `N^i ∂_i h` at every boundary node.
    pub fn normal_derivative(&self, h: &[f64]) -> Vec<f64> {
        let [g1, g2] = self.map.grad(h);
        (0..self.normal[0].len())
            .map(|k| self.normal[0][k] * g1[k] + self.normal[1][k] * g2[k])
            .collect()
    }
}

/// `(l₀, l₁)` from an exhaustive search over boundary node pairs, with the
/// normal-turn crossing located on the interpolated curve.
fn injectivity_radius_of(curve: &BoundaryCurve, angles: &[f64], curvature: &[f64], threshold: f64) -> (f64, f64) {
    let nt = angles.len();
    let pts: Vec<[f64; 2]> = angles.iter().map(|&p| curve.point(p)).collect();
    let nrm: Vec<[f64; 2]> = angles.iter().map(|&p| curve.normal(p)).collect();
    let chord = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let tol = 1e-9;
    let excess = |i: usize, n: [f64; 2]| chord(nrm[i], n) - threshold;

    let mut l1 = f64::INFINITY;
    let mut diameter: f64 = 0.0;
    for i in 0..nt {
        for j in 0..nt {
            if i == j {
                continue;
            }
            diameter = diameter.max(chord(pts[i], pts[j]));
            let fj = excess(i, nrm[j]);
            if fj > tol {
                l1 = l1.min(chord(pts[i], pts[j]));
            }
            let jn = (j + 1) % nt;
            if jn == i {
                continue;
            }
            let fn_ = excess(i, nrm[jn]);
            if (fj <= 0.0) != (fn_ <= 0.0) {
                let (mut lo, mut hi) = (angles[j], angles[j] + 2.0 * PI / nt as f64);
                let lo_ok = fj <= 0.0;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    let ok = excess(i, curve.normal(mid)) <= 0.0;
                    if ok == lo_ok {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let phi = if lo_ok { hi } else { lo };
                l1 = l1.min(chord(pts[i], curve.point(phi)));
            }
        }
    }
    if !l1.is_finite() {
        l1 = diameter;
    }
    let kmax = curvature.iter().fold(0.0_f64, |a, &k| a.max(k.abs()));
    let l0 = if kmax > 0.0 { (l1 / 2.0).min(1.0 / kmax) } else { l1 / 2.0 };
    (l0, l1)
}

/// Injectivity radius estimates for a given normal-turn threshold.
pub fn injectivity_radius(cache: &GeometryCache, eta_threshold: f64) -> Result<(f64, f64)> {
    if !(eta_threshold > 0.0 && eta_threshold <= 2.0) {
        return Err(Error::InvalidInput(format!("eta_threshold {eta_threshold} outside (0, 2]")));
    }
    let curve = cache.map.boundary_curve();
    Ok(injectivity_radius_of(&curve, cache.disk().angles(), &cache.mean_curvature, eta_threshold))
}

/// Material derivatives of the geometric quantities along a velocity field.
#[derive(Clone, Debug)]
pub struct MaterialDerivatives {
    /// `D_t g_ab = ∇_a v_b + ∇_b v_a`.
    pub metric: Field,
    /// `D_t g^{ab} = −g^{ac} g^{bd} D_t g_cd`.
    pub inverse_metric: Field,
    /// `D_t N_a = −½ N_a (D_t g^{cd}) N_c N_d` at boundary nodes.
    pub conormal: [Vec<f64>; 2],
    /// `D_t dμ_g / dμ_g = div v`.
    pub volume_rate: Vec<f64>,
    /// `σ v·N` at boundary nodes.
    pub surface_rate: Vec<f64>,
    /// `γ^{ij} ∂_i v_j` at boundary nodes, the exact rate of `dμ_γ`.
    pub tangential_divergence: Vec<f64>,
}

/// Evaluates the material derivatives of `g`, `g⁻¹`, `N` and the measures.
/// `v` may be given in Eulerian components or as a Lagrangian covector.
pub fn material_derivatives(cache: &GeometryCache, v: &Field) -> Result<MaterialDerivatives> {
    if v.rank() != 1 {
        return Err(Error::RankMismatch {
            expected: 1,
            found: v.rank(),
        });
    }
    let map = &cache.map;
    let n = map.disk().len();
    let nt = map.disk().n_theta();
    let ve: [Vec<f64>; 2] = match v.frame() {
        Frame::Eulerian => [v.component(0).to_vec(), v.component(1).to_vec()],
        Frame::Lagrangian => {
            let mut out = [vec![0.0; n], vec![0.0; n]];
            for i in 0..2 {
                for k in 0..n {
                    out[i][k] = (0..2).map(|a| map.inverse_jacobian(a, i)[k] * v.component(a)[k]).sum();
                }
            }
            out
        }
    };
    // dv[i][j] = ∂_i v^j
    let g0 = map.grad(&ve[0]);
    let g1 = map.grad(&ve[1]);
    let dv = [[&g0[0], &g1[0]], [&g0[1], &g1[1]]];

    let mut dg = vec![vec![0.0; n]; 4];
    for a in 0..2 {
        for b in 0..2 {
            for k in 0..n {
                let mut s = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        let sym = dv[i][j][k] + dv[j][i][k];
                        s += map.jacobian(i, a)[k] * map.jacobian(j, b)[k] * sym;
                    }
                }
                dg[2 * a + b][k] = s;
            }
        }
    }
    let ginv = &cache.inverse_metric;
    let mut dginv = vec![vec![0.0; n]; 4];
    for a in 0..2 {
        for b in 0..2 {
            for k in 0..n {
                let mut s = 0.0;
                for c in 0..2 {
                    for d in 0..2 {
                        s += ginv.component(2 * a + c)[k] * ginv.component(2 * b + d)[k] * dg[2 * c + d][k];
                    }
                }
                dginv[2 * a + b][k] = -s;
            }
        }
    }
    let mut dn = [vec![0.0; nt], vec![0.0; nt]];
    let mut surface_rate = vec![0.0; nt];
    let mut tangential_divergence = vec![0.0; nt];
    for k in 0..nt {
        let nc = [cache.conormal[0][k], cache.conormal[1][k]];
        let mut quad = 0.0;
        for c in 0..2 {
            for d in 0..2 {
                quad += dginv[2 * c + d][k] * nc[c] * nc[d];
            }
        }
        for a in 0..2 {
            dn[a][k] = -0.5 * nc[a] * quad;
        }
        let vn = ve[0][k] * cache.normal[0][k] + ve[1][k] * cache.normal[1][k];
        surface_rate[k] = cache.mean_curvature[k] * vn;
        let mut s = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                s += cache.projection_eulerian[2 * i + j][k] * dv[i][j][k];
            }
        }
        tangential_divergence[k] = s;
    }
    let volume_rate = (0..n).map(|k| dv[0][0][k] + dv[1][1][k]).collect();
    Ok(MaterialDerivatives {
        metric: Field::from_components(2, Frame::Lagrangian, dg)?,
        inverse_metric: Field::from_components(2, Frame::Lagrangian, dginv)?,
        conormal: dn,
        volume_rate,
        surface_rate,
        tangential_divergence,
    })
}
