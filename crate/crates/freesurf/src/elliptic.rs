//! Poisson problems on the deformed disk and the inequality monitors.
//!
//! The variable-coefficient operator `J⁻¹∂_a(J g^{ab}∂_b)` is inverted by
//! restarted GMRES, right-preconditioned with the exact flat solver, which
//! is diagonal in the angular Fourier modes.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, LU};
use rustfft::num_complex::Complex64;

use crate::calculus::{gradient, gradient_power};
use crate::error::{Error, Result};
use crate::field::{Field, Frame};
use crate::geometry::{GeometryCache, LagrangianMap};
use crate::grid::ReferenceDisk;

#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryCondition {
    /// Values on the boundary ring.
    Dirichlet(Vec<f64>),
    /// Outward normal derivative `N^i ∂_i q` on the boundary ring.
    Neumann(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EllipticProblem {
    pub rhs: Vec<f64>,
    pub boundary: BoundaryCondition,
    pub tolerance: f64,
    /// Remove the incompatible part of Neumann data instead of failing.
    pub project_neumann: bool,
}

impl EllipticProblem {
    pub fn dirichlet(rhs: Vec<f64>, values: Vec<f64>) -> Self {
        Self {
            rhs,
            boundary: BoundaryCondition::Dirichlet(values),
            tolerance: DEFAULT_TOLERANCE,
            project_neumann: false,
        }
    }

    /// `Δq = rhs`, `q = 0` on the boundary.
    pub fn homogeneous(disk: &ReferenceDisk, rhs: Vec<f64>) -> Self {
        Self::dirichlet(rhs, vec![0.0; disk.n_theta()])
    }

    pub fn neumann(rhs: Vec<f64>, flux: Vec<f64>) -> Self {
        Self {
            rhs,
            boundary: BoundaryCondition::Neumann(flux),
            tolerance: DEFAULT_TOLERANCE,
            project_neumann: true,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }
}

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
const RESTART: usize = 40;
const MAX_ITERATIONS: usize = 400;

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub values: Vec<f64>,
    pub iterations: usize,
    /// `‖Δq − rhs‖/‖rhs‖` in `L²(dx)` over interior nodes, absolute when
    /// `rhs = 0`.
    pub residual: f64,
    /// `∫rhs dx − ∮flux ds` for Neumann problems, before projection.
    pub neumann_defect: Option<f64>,
}

/// Factorized flat per-mode operators for one reference disk.
pub struct EllipticSolver {
    disk: Arc<ReferenceDisk>,
    dirichlet: Vec<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    neumann: Vec<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl std::fmt::Debug for EllipticSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EllipticSolver").field("disk", &self.disk).finish()
    }
}

impl EllipticSolver {
    pub fn new(disk: &Arc<ReferenceDisk>) -> Self {
        let nr = disk.n_r();
        let half = disk.n_theta() / 2;
        let mut dirichlet = Vec::with_capacity(half + 1);
        let mut neumann = Vec::with_capacity(half + 1);
        for m in 0..=half as i64 {
            let l = disk.mode_laplacian(m);
            let mut a = l.clone();
            for j in 0..nr {
                a[(0, j)] = if j == 0 { 1.0 } else { 0.0 };
            }
            dirichlet.push(a.lu());

            let d1 = disk.mode_d1(m);
            if m == 0 {
                // Bordered: a multiplier on the interior rows and the
                // mean-zero constraint as the last row.
                let mut b = DMatrix::zeros(nr + 1, nr + 1);
                b.view_mut((0, 0), (nr, nr)).copy_from(&l);
                for j in 0..nr {
                    b[(0, j)] = d1[(0, j)];
                }
                let nt = disk.n_theta() as f64;
                let dphi = 2.0 * std::f64::consts::PI / nt;
                for i in 1..nr {
                    b[(i, nr)] = nt;
                }
                for j in 0..nr {
                    b[(nr, j)] = disk.radial_weights()[j] * dphi;
                }
                neumann.push(b.lu());
            } else {
                let mut b = l;
                for j in 0..nr {
                    b[(0, j)] = d1[(0, j)];
                }
                neumann.push(b.lu());
            }
        }
        Self {
            disk: disk.clone(),
            dirichlet,
            neumann,
        }
    }

    pub fn disk(&self) -> &Arc<ReferenceDisk> {
        &self.disk
    }

    /// Applies a per-mode real solve to every angular mode of `f`, with
    /// `boundary` supplying the first radial row. `extra` is appended to
    /// the mode-0 system when bordered.
    fn modal_solve(
        &self,
        factors: &[LU<f64, nalgebra::Dyn, nalgebra::Dyn>],
        f: &[f64],
        boundary: &[f64],
        extra: Option<f64>,
    ) -> (Vec<f64>, f64) {
        let nt = self.disk.n_theta();
        let nr = self.disk.n_r();
        let mut spec = self.disk.rings_forward(f);
        let bspec = self.disk.rings_forward(boundary);
        spec[..nt].copy_from_slice(&bspec);
        let mut multiplier = 0.0;
        for k in 0..nt {
            let m = self.disk.wavenumber(k).unsigned_abs() as usize;
            let lu = &factors[m];
            let bordered = m == 0 && extra.is_some();
            let size = if bordered { nr + 1 } else { nr };
            let mut re = DVector::zeros(size);
            let mut im = DVector::zeros(size);
            for i in 0..nr {
                re[i] = spec[i * nt + k].re;
                im[i] = spec[i * nt + k].im;
            }
            if bordered {
                re[nr] = extra.unwrap_or(0.0);
            }
            let xr = lu.solve(&re).unwrap_or_else(|| DVector::zeros(size));
            let xi = lu.solve(&im).unwrap_or_else(|| DVector::zeros(size));
            for i in 0..nr {
                spec[i * nt + k] = Complex64::new(xr[i], xi[i]);
            }
            if bordered {
                multiplier = xr[nr];
            }
        }
        (self.disk.rings_inverse(spec), multiplier)
    }

    /// Exact flat Dirichlet solve of `Δq = f` with boundary values `g`.
    pub fn flat_dirichlet(&self, f: &[f64], g: &[f64]) -> Vec<f64> {
        self.modal_solve(&self.dirichlet, f, g, None).0
    }

    pub fn solve(&self, map: &LagrangianMap, problem: &EllipticProblem) -> Result<Solution> {
        let n = self.disk.len();
        let nt = self.disk.n_theta();
        if problem.rhs.len() != n {
            return Err(Error::InvalidInput("rhs length differs from the grid".into()));
        }
        if !(problem.tolerance > 1e-14 && problem.tolerance < 1e-4) {
            return Err(Error::InvalidInput(format!("tolerance {} outside (1e-14, 1e-4)", problem.tolerance)));
        }
        // The angular Nyquist mode lies outside the range of the operator.
        let rhs = self.disk.without_nyquist(&problem.rhs);
        match &problem.boundary {
            BoundaryCondition::Dirichlet(g) => {
                if g.len() != nt {
                    return Err(Error::InvalidInput("boundary data length differs from the ring".into()));
                }
                self.solve_dirichlet(map, &rhs, g, problem.tolerance)
            }
            BoundaryCondition::Neumann(g) => {
                if g.len() != nt {
                    return Err(Error::InvalidInput("boundary data length differs from the ring".into()));
                }
                self.solve_neumann(map, &rhs, g, problem.tolerance, problem.project_neumann)
            }
        }
    }

    fn solve_dirichlet(&self, map: &LagrangianMap, rhs: &[f64], g: &[f64], tol: f64) -> Result<Solution> {
        let n = self.disk.len();
        let nt = self.disk.n_theta();
        let zeros = vec![0.0; n];
        let lift = self.flat_dirichlet(&zeros, g);
        let lap_lift = map.laplacian(&lift);
        let mut b: Vec<f64> = rhs.iter().zip(&lap_lift).map(|(r, l)| r - l).collect();
        b[..nt].iter_mut().for_each(|x| *x = 0.0);

        let apply = |w: &[f64]| {
            let mut out = map.laplacian(w);
            out[..nt].copy_from_slice(&w[..nt]);
            out
        };
        let zero_ring = vec![0.0; nt];
        let precondition = |r: &[f64]| {
            let mut w = self.flat_dirichlet(r, &zero_ring);
            w[..nt].iter_mut().for_each(|x| *x = 0.0);
            w
        };
        let target = absolute_target(rhs, nt, tol);
        let (w, iterations) = gmres(apply, precondition, &b, target)?;

        let w = self.disk.without_nyquist(&w);
        let mut q: Vec<f64> = w.iter().zip(&lift).map(|(a, b)| a + b).collect();
        q[..nt].copy_from_slice(g);
        let residual = interior_residual(map, &q, rhs, nt);
        Ok(Solution {
            values: q,
            iterations,
            residual,
            neumann_defect: None,
        })
    }

    fn solve_neumann(&self, map: &LagrangianMap, rhs: &[f64], g: &[f64], tol: f64, project: bool) -> Result<Solution> {
        let n = self.disk.len();
        let nt = self.disk.n_theta();
        let normal = eulerian_normal(map);
        let arc = arc_speed(map);
        let dphi = self.disk.boundary_weight();
        let boundary_flux: f64 = g.iter().zip(&arc).map(|(a, s)| a * s * dphi).sum();
        let interior_source = map.integrate(rhs);
        let defect = interior_source - boundary_flux;
        let volume = map.integrate(&vec![1.0; n]);
        let scale = rhs.iter().map(|x| x.abs()).fold(0.0, f64::max) * volume
            + g.iter().map(|x| x.abs()).fold(0.0, f64::max) * 2.0 * std::f64::consts::PI;
        if !project && defect.abs() > tol * scale.max(1.0) {
            return Err(Error::IncompatibleNeumann { defect });
        }
        let shift = defect / volume;
        let weights = map.volume_weights();

        // Unknowns: q at every node followed by the multiplier.
        let mut b = vec![0.0; n + 1];
        for k in nt..n {
            b[k] = rhs[k] - shift;
        }
        b[..nt].copy_from_slice(g);

        let apply = |x: &[f64]| {
            let q = &x[..n];
            let lam = x[n];
            let mut out = map.laplacian(q);
            for v in out[nt..].iter_mut() {
                *v += lam;
            }
            let grad = map.grad(q);
            for k in 0..nt {
                out[k] = normal[0][k] * grad[0][k] + normal[1][k] * grad[1][k];
            }
            out.push(q.iter().zip(&weights).map(|(a, w)| a * w).sum());
            out
        };
        let precondition = |r: &[f64]| {
            let (mut q, lam) = self.modal_solve(&self.neumann, &r[..n], &r[..nt], Some(r[n]));
            q.push(lam);
            q
        };
        let target = absolute_target(&b[..n], 0, tol);
        let (x, iterations) = gmres(apply, precondition, &b, target)?;
        let q = x[..n].to_vec();
        let shifted: Vec<f64> = rhs.iter().map(|r| r - shift).collect();
        let residual = interior_residual(map, &q, &shifted, nt);
        Ok(Solution {
            values: q,
            iterations,
            residual,
            neumann_defect: Some(defect),
        })
    }
}

/// One-shot solve that factorizes the flat operators on the fly.
pub fn solve(map: &LagrangianMap, problem: &EllipticProblem) -> Result<Solution> {
    EllipticSolver::new(map.disk()).solve(map, problem)
}

fn absolute_target(rhs: &[f64], skip: usize, tol: f64) -> f64 {
    let norm = rhs[skip..].iter().map(|x| x * x).sum::<f64>().sqrt();
    let floor = 1e-12 * (rhs.len() as f64).sqrt();
    (tol * norm).max(floor)
}

fn interior_residual(map: &LagrangianMap, q: &[f64], rhs: &[f64], nt: usize) -> f64 {
    let lap = map.laplacian(q);
    let mut diff: Vec<f64> = lap.iter().zip(rhs).map(|(a, b)| (a - b).powi(2)).collect();
    diff[..nt].iter_mut().for_each(|x| *x = 0.0);
    let r = l2(map, &diff);
    let norm = l2(map, &rhs.iter().map(|x| x * x).collect::<Vec<_>>());
    if norm > 0.0 {
        r / norm
    } else {
        r
    }
}

/// Outward unit normal `N_i ∝ ∂_i r` on the boundary ring.
fn eulerian_normal(map: &LagrangianMap) -> [Vec<f64>; 2] {
    let disk = map.disk();
    let nt = disk.n_theta();
    let mut out = [vec![0.0; nt], vec![0.0; nt]];
    for k in 0..nt {
        let [c, s] = disk.point(k);
        let n1 = map.inverse_jacobian(0, 0)[k] * c + map.inverse_jacobian(1, 0)[k] * s;
        let n2 = map.inverse_jacobian(0, 1)[k] * c + map.inverse_jacobian(1, 1)[k] * s;
        let len = n1.hypot(n2);
        out[0][k] = n1 / len;
        out[1][k] = n2 / len;
    }
    out
}

fn arc_speed(map: &LagrangianMap) -> Vec<f64> {
    let disk = map.disk();
    let nt = disk.n_theta();
    let [x1, x2] = map.positions();
    let d1 = disk.d_dphi(x1);
    let d2 = disk.d_dphi(x2);
    (0..nt).map(|k| d1[k].hypot(d2[k])).collect()
}

/// Restarted right-preconditioned GMRES on `A M⁻¹ z = b`, `x = M⁻¹ z`.
/// Returns the solution and the number of inner iterations.
fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precondition: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    target: f64,
) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut beta = dot(&r, &r).sqrt();
    let mut total = 0;
    if beta <= target {
        return Ok((x, 0));
    }
    while total < MAX_ITERATIONS {
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = DMatrix::<f64>::zeros(RESTART + 1, RESTART);
        let mut cs = vec![0.0; RESTART];
        let mut sn = vec![0.0; RESTART];
        let mut s = vec![0.0; RESTART + 1];
        s[0] = beta;
        let mut used = 0;
        for j in 0..RESTART {
            total += 1;
            let z = precondition(&basis[j]);
            let mut w = apply(&z);
            for (i, vi) in basis.iter().enumerate() {
                let hij = dot(&w, vi);
                h[(i, j)] = hij;
                w.iter_mut().zip(vi).for_each(|(a, b)| *a -= hij * b);
            }
            let norm = dot(&w, &w).sqrt();
            h[(j + 1, j)] = norm;
            for i in 0..j {
                let t = cs[i] * h[(i, j)] + sn[i] * h[(i + 1, j)];
                h[(i + 1, j)] = -sn[i] * h[(i, j)] + cs[i] * h[(i + 1, j)];
                h[(i, j)] = t;
            }
            let denom = h[(j, j)].hypot(h[(j + 1, j)]);
            cs[j] = h[(j, j)] / denom;
            sn[j] = h[(j + 1, j)] / denom;
            h[(j, j)] = denom;
            h[(j + 1, j)] = 0.0;
            s[j + 1] = -sn[j] * s[j];
            s[j] *= cs[j];
            used = j + 1;
            if s[j + 1].abs() <= target || norm == 0.0 || total >= MAX_ITERATIONS {
                break;
            }
            basis.push(w.iter().map(|v| v / norm).collect());
        }
        // Back substitution for the Krylov coefficients.
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut acc = s[i];
            for k in (i + 1)..used {
                acc -= h[(i, k)] * y[k];
            }
            y[i] = acc / h[(i, i)];
        }
        let mut update = vec![0.0; n];
        for (yi, vi) in y.iter().zip(&basis) {
            update.iter_mut().zip(vi).for_each(|(a, b)| *a += yi * b);
        }
        let dx = precondition(&update);
        x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        let ax = apply(&x);
        r = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
        let new_beta = dot(&r, &r).sqrt();
        if new_beta <= target {
            return Ok((x, total));
        }
        if new_beta >= beta * (1.0 - 1e-3) && used < RESTART {
            // Stagnated below the Krylov target: the true residual sits
            // at the roundoff floor of the operator.
            return Err(Error::NoConvergence {
                iterations: total,
                residual: new_beta,
            });
        }
        beta = new_beta;
    }
    Err(Error::NoConvergence {
        iterations: total,
        residual: beta,
    })
}

/// First zero `j₀,₁` of the Bessel function `J₀`.
pub fn bessel_j0_first_zero() -> f64 {
    let mut x = 2.4;
    for _ in 0..50 {
        let step = bessel_j0(x) / -bessel_j1(x);
        x -= step;
        if step.abs() < 1e-16 {
            break;
        }
    }
    x
}

/// Power series of `J₀`, accurate for moderate arguments.
pub fn bessel_j0(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut s = 1.0;
    for k in 1..60 {
        term *= q / (k * k) as f64;
        s += term;
        if term.abs() < 1e-18 {
            break;
        }
    }
    s
}

pub fn bessel_j1(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 0.5 * x;
    let mut s = term;
    for k in 1..60 {
        term *= q / (k * (k + 1)) as f64;
        s += term;
        if term.abs() < 1e-18 {
            break;
        }
    }
    s
}

fn require_vanishing(q: &[f64], nt: usize) -> Result<()> {
    let max = q[..nt].iter().map(|x| x.abs()).fold(0.0, f64::max);
    if max > 1e-10 {
        return Err(Error::BoundaryNonzero { max });
    }
    Ok(())
}

fn l2(map: &LagrangianMap, pointwise_sq: &[f64]) -> f64 {
    map.integrate(pointwise_sq).max(0.0).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoincareReport {
    /// `‖q‖/‖∇q‖`.
    pub ratio_gradient: f64,
    /// `‖∇q‖/‖Δq‖`.
    pub ratio_laplacian: f64,
    /// Faber-Krahn bound `(vol/π)^{1/2}/j₀,₁` for the first ratio.
    pub faber_krahn: f64,
}

pub fn poincare_check(map: &LagrangianMap, q: &[f64]) -> Result<PoincareReport> {
    let nt = map.disk().n_theta();
    require_vanishing(q, nt)?;
    let [g1, g2] = map.grad(q);
    let lap = map.laplacian(q);
    let nq = l2(map, &q.iter().map(|x| x * x).collect::<Vec<_>>());
    let ng = l2(map, &g1.iter().zip(&g2).map(|(a, b)| a * a + b * b).collect::<Vec<_>>());
    let nl = l2(map, &lap.iter().map(|x| x * x).collect::<Vec<_>>());
    let volume = map.integrate(&vec![1.0; q.len()]);
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else if a == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(PoincareReport {
        ratio_gradient: ratio(nq, ng),
        ratio_laplacian: ratio(ng, nl),
        faber_krahn: (volume / std::f64::consts::PI).sqrt() / bessel_j0_first_zero(),
    })
}

/// `‖Π∇²q − θ∇_N q‖_{L²(∂Ω)}` for `q` vanishing on the boundary.
pub fn projection_formula_check(cache: &GeometryCache, q: &[f64]) -> Result<f64> {
    let map = &cache.map;
    let nt = map.disk().n_theta();
    require_vanishing(q, nt)?;
    let hess = gradient_power(map, &Field::scalar(q.to_vec()), 2)?;
    let dn = cache.normal_derivative(q);
    let gamma = &cache.projection_eulerian;
    let mut sq = vec![0.0; nt];
    for k in 0..nt {
        for i in 0..2 {
            for j in 0..2 {
                let mut proj = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        proj += gamma[2 * i + a][k] * gamma[2 * j + b][k] * hess.component(2 * a + b)[k];
                    }
                }
                let d = proj - cache.theta[2 * i + j][k] * dn[k];
                sq[k] += d * d;
            }
        }
    }
    Ok(cache.integrate_boundary(&sq).max(0.0).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HodgeReport {
    /// `∫|∇β|²`.
    pub lhs: f64,
    /// `∫(tangential + |div β|² + |curl β|² + K²|β|²)`.
    pub rhs: f64,
    /// Smallest constant with `lhs ≤ C·rhs`; 1 when both sides vanish.
    pub constant: f64,
    pub k: f64,
}

/// Hodge-type monitor for `β = ∇ʳu`. The tangential term uses the
/// extended normal `η𝒩` and the weights `q^{ij}` in place of `N` and `γ`.
pub fn hodge_check(cache: &GeometryCache, u: &Field, order: usize, k: f64) -> Result<HodgeReport> {
    if u.rank() != 1 {
        return Err(Error::RankMismatch {
            expected: 1,
            found: u.rank(),
        });
    }
    let map = &cache.map;
    let n = u.nodes();
    let beta = gradient_power(map, u, order)?;
    let dbeta = gradient(map, &beta)?;
    let r = order;
    // dbeta indices: (k, i₁..i_r, i).
    let rank = r + 2;
    let mut lhs_pt = vec![0.0; n];
    for c in 0..(1usize << rank) {
        for (a, x) in lhs_pt.iter_mut().zip(dbeta.component(c)) {
            *a += x * x;
        }
    }
    let mut tangential = vec![0.0; n];
    let nn: Vec<[f64; 2]> = (0..n)
        .map(|p| [cache.eta[p] * cache.extended_normal[0][p], cache.eta[p] * cache.extended_normal[1][p]])
        .collect();
    // T = Σ_k q^{IJ} (ñ^i ∂_k β_{Ii})(ñ^j ∂_k β_{Jj}).
    for kk in 0..2 {
        let mut contracted = vec![vec![0.0; n]; 1 << r];
        for (ci, comp) in contracted.iter_mut().enumerate() {
            let idx = Field::unflat(r, ci);
            for i in 0..2 {
                let mut full = vec![kk];
                full.extend_from_slice(&idx);
                full.push(i);
                let src = dbeta.component(Field::flat(&full));
                for p in 0..n {
                    comp[p] += nn[p][i] * src[p];
                }
            }
        }
        for ci in 0..(1usize << r) {
            let ii = Field::unflat(r, ci);
            for cj in 0..(1usize << r) {
                let jj = Field::unflat(r, cj);
                for p in 0..n {
                    let mut w = 1.0;
                    for s in 0..r {
                        w *= cache.q[2 * ii[s] + jj[s]][p];
                    }
                    tangential[p] += w * contracted[ci][p] * contracted[cj][p];
                }
            }
        }
    }
    let mut div_sq = vec![0.0; n];
    let mut curl_sq = vec![0.0; n];
    let mut beta_sq = vec![0.0; n];
    for ci in 0..(1usize << r) {
        let idx = Field::unflat(r, ci);
        let entry = |a: usize, b: usize| {
            let mut full = vec![a];
            full.extend_from_slice(&idx);
            full.push(b);
            dbeta.component(Field::flat(&full))
        };
        let (d00, d11, d01, d10) = (entry(0, 0), entry(1, 1), entry(0, 1), entry(1, 0));
        for p in 0..n {
            div_sq[p] += (d00[p] + d11[p]).powi(2);
            curl_sq[p] += 2.0 * (d01[p] - d10[p]).powi(2);
        }
    }
    for c in 0..(1usize << (r + 1)) {
        for (a, x) in beta_sq.iter_mut().zip(beta.component(c)) {
            *a += x * x;
        }
    }
    let lhs = map.integrate(&lhs_pt);
    let rhs_pt: Vec<f64> = (0..n)
        .map(|p| tangential[p] + div_sq[p] + curl_sq[p] + k * k * beta_sq[p])
        .collect();
    let rhs = map.integrate(&rhs_pt);
    let constant = if lhs <= 1e-300 && rhs <= 1e-300 {
        1.0
    } else if rhs > 0.0 {
        lhs / rhs
    } else {
        f64::INFINITY
    };
    Ok(HodgeReport { lhs, rhs, constant, k })
}

/// `‖α‖_{L²(∂Ω)} / (‖α‖ + ‖∇α‖)`.
pub fn trace_check(cache: &GeometryCache, alpha: &Field) -> Result<f64> {
    let map = &cache.map;
    let nt = map.disk().n_theta();
    let alpha = if alpha.rank() == 0 { alpha.clone() } else { alpha.clone().with_frame(Frame::Eulerian) };
    let pt = alpha.pointwise_norm();
    let boundary: Vec<f64> = pt[..nt].iter().map(|x| x * x).collect();
    let nb = cache.integrate_boundary(&boundary).max(0.0).sqrt();
    let ni = l2(map, &pt.iter().map(|x| x * x).collect::<Vec<_>>());
    let grad = gradient(map, &alpha)?;
    let ng = l2(map, &grad.pointwise_norm().iter().map(|x| x * x).collect::<Vec<_>>());
    let denom = ni + ng;
    Ok(if denom > 0.0 { nb / denom } else { 0.0 })
}
