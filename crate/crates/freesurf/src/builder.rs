//! Compatible initial data by successive approximation of the coupled
//! Poisson problems for `φ, h₀, …, h₃`.

use std::sync::Arc;

use crate::calculus::gradient_power;
use crate::elliptic::{EllipticProblem, EllipticSolver, DEFAULT_TOLERANCE};
use crate::energy::{energy_total, EnergyOptions, EnergyReport};
use crate::eos::EosFamily;
use crate::error::{Error, Result};
use crate::field::{Field, Frame};
use crate::geometry::{GeometryCache, LagrangianMap};
use crate::state::SimState;
use crate::symbolic::{forcing, velocity_gradient_square, Engine, JetEvaluator};

/// Number of enthalpy profiles `h₀ … h₅`.
pub const PROFILES: usize = 6;
/// Profiles obtained from Poisson solves; the rest vanish.
const SOLVED: usize = 4;

fn norm_sq(map: &LagrangianMap, f: &Field) -> f64 {
    let sq: Vec<f64> = f.pointwise_norm().iter().map(|x| x * x).collect();
    map.integrate(&sq).max(0.0)
}

/// `‖f‖_{H^m} = (Σ_{j ≤ m} ‖∂^j f‖²)^{1/2}`.
pub fn sobolev_norm(map: &LagrangianMap, f: &Field, m: usize) -> Result<f64> {
    let mut total = norm_sq(map, f);
    let mut g = f.clone();
    for _ in 0..m {
        g = gradient_power(map, &g, 1)?;
        total += norm_sq(map, &g);
    }
    Ok(total.sqrt())
}

/// `Δp₀ = −(∂_i u^k)(∂_k u^i)`, `p₀ = 0` on the boundary.
pub fn incompressible_pressure(solver: &EllipticSolver, map: &LagrangianMap, u: &Field) -> Result<Vec<f64>> {
    let [a, _] = map.grad(u.component(0));
    let [_, b] = map.grad(u.component(1));
    let div: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y).powi(2)).collect();
    let div_norm = map.integrate(&div).max(0.0).sqrt();
    if div_norm > 1e-8 {
        return Err(Error::InvalidInput(format!("seed velocity has divergence {div_norm:.3e}")));
    }
    let mut jets = JetEvaluator::new(map, [u.component(0).to_vec(), u.component(1).to_vec()], vec![], &EosFamily::incompressible());
    let rhs: Vec<f64> = jets.evaluate(&velocity_gradient_square())?.iter().map(|x| -x).collect();
    let disk = map.disk();
    Ok(solver.solve(map, &EllipticProblem::homogeneous(disk, rhs))?.values)
}

/// `F_k` evaluated at `t = 0` from `v₀` and `h₀ … h_{k−1}`.
pub fn assemble_forcing(engine: &mut Engine, k: usize, map: &LagrangianMap, v0: &Field, h: &[Vec<f64>]) -> Result<Vec<f64>> {
    if h.len() < k {
        return Err(Error::MissingField(format!("h_{} needed for F_{k}", k.saturating_sub(1))));
    }
    let mut profiles = h[..k].to_vec();
    // The top profile enters only through ΔD_t^k h, which cancels.
    profiles.push(vec![0.0; map.disk().len()]);
    let mut jets = JetEvaluator::new(map, [v0.component(0).to_vec(), v0.component(1).to_vec()], profiles, &EosFamily::incompressible());
    jets.evaluate(&forcing(engine, k))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotentialBoundary {
    /// `φ = 0` on the boundary.
    Dirichlet,
    /// `∇_N φ = 0`, with the incompatible mean removed.
    Neumann,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuilderOptions {
    /// Stop once the `L²` form of `M*^ν` falls below this fraction of
    /// the `L²` form of `m*^ν`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Sobolev index `s` of the norms `‖h_k‖_{H^{s−k}}`.
    pub sobolev: usize,
    pub potential: PotentialBoundary,
    pub elliptic_tolerance: f64,
    /// Minimum `min_∂Ω(−∇_N h₀)` of the result; `None` skips the check.
    pub eps_min: Option<f64>,
}

impl Default for BuilderOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 30,
            sobolev: 5,
            potential: PotentialBoundary::Dirichlet,
            elliptic_tolerance: DEFAULT_TOLERANCE,
            eps_min: Some(1e-6),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CompatibleData {
    pub u0: Field,
    pub p0: Vec<f64>,
    pub v0: Field,
    pub phi: Vec<f64>,
    /// `h₀ … h₅`.
    pub h: Vec<Vec<f64>>,
    pub kappa: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    /// `m_k^ν = ‖h_k^ν‖_{H^{s−k}}`, `k ≤ 3`.
    pub m: Vec<f64>,
    /// `m*^ν = Σ m_k^ν + ‖v₀^ν‖_{H^s}`.
    pub m_star: f64,
    /// `m*^ν` with every norm replaced by `L²`.
    pub weak_m_star: f64,
    /// `M_k^ν = ‖h_k^ν − h_k^{ν−1}‖_{H^{s−k}}`; empty at `ν = 0`.
    pub differences: Vec<f64>,
    /// `M*^ν`; `None` at `ν = 0`.
    pub m_diff_star: Option<f64>,
    /// `M*^ν` with every norm replaced by `L²`.
    pub weak_diff_star: Option<f64>,
    /// `M*^ν / M*^{ν−1}`.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    /// Contraction ratios in iteration order.
    pub fn ratios(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.ratio).collect()
    }

    pub fn differences(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.m_diff_star).collect()
    }

    pub fn weak_differences(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.weak_diff_star).collect()
    }
}

struct Iterate {
    phi: Vec<f64>,
    v0: Field,
    h: Vec<Vec<f64>>,
}

/// Runs the successive approximation for one `κ` (`∞` gives the
/// incompressible system).
pub fn build_initial_data(
    solver: &EllipticSolver,
    map: &LagrangianMap,
    u0: &Field,
    kappa: f64,
    opts: &BuilderOptions,
) -> Result<(CompatibleData, IterationTrace)> {
    if !(kappa > 0.0) {
        return Err(Error::NonpositiveKappa(kappa));
    }
    if !(opts.tolerance > 1e-12 && opts.tolerance < 1e-6) {
        return Err(Error::InvalidInput(format!("builder tolerance {} outside (1e-12, 1e-6)", opts.tolerance)));
    }
    let disk = map.disk();
    let n = disk.len();
    let s = opts.sobolev;
    let inv_kappa = if kappa.is_finite() { 1.0 / kappa } else { 0.0 };
    let mut engine = Engine::new();
    let p0 = incompressible_pressure(solver, map, u0)?;

    let dirichlet = |rhs: Vec<f64>| -> Result<Vec<f64>> {
        let problem = EllipticProblem::homogeneous(disk, rhs).with_tolerance(opts.elliptic_tolerance);
        Ok(solver.solve(map, &problem)?.values)
    };

    let solve_profiles = |engine: &mut Engine, v0: &Field, upper: Option<&[Vec<f64>]>| -> Result<Vec<Vec<f64>>> {
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(SOLVED);
        for k in 0..SOLVED {
            let f = assemble_forcing(engine, k, map, v0, &h)?;
            let rhs: Vec<f64> = match upper {
                Some(prev) if k + 2 < SOLVED => f.iter().zip(&prev[k + 2]).map(|(a, b)| inv_kappa * b - a).collect(),
                _ => f.iter().map(|a| -a).collect(),
            };
            h.push(dirichlet(rhs)?);
        }
        Ok(h)
    };

    let record = |it: &Iterate, prev: Option<&Iterate>, last: Option<f64>| -> Result<IterationRecord> {
        let mut m = Vec::with_capacity(SOLVED);
        let mut differences = Vec::new();
        let mut weak = 0.0;
        let mut weak_size = norm_sq(map, &it.v0).sqrt();
        for k in 0..SOLVED {
            weak_size += norm_sq(map, &Field::scalar(it.h[k].clone())).sqrt();
            m.push(sobolev_norm(map, &Field::scalar(it.h[k].clone()), s.saturating_sub(k))?);
            if let Some(p) = prev {
                let d = Field::scalar(it.h[k].iter().zip(&p.h[k]).map(|(a, b)| a - b).collect());
                differences.push(sobolev_norm(map, &d, s.saturating_sub(k))?);
                weak += norm_sq(map, &d).sqrt();
            }
        }
        let m_star = m.iter().sum::<f64>() + sobolev_norm(map, &it.v0, s)?;
        let (m_diff_star, weak_diff_star, ratio) = match prev {
            Some(p) => {
                let dv = it.v0.sub(&p.v0)?;
                let total = differences.iter().sum::<f64>() + sobolev_norm(map, &dv, s)?;
                weak += norm_sq(map, &dv).sqrt();
                let ratio = last.map(|l| if l > 0.0 { total / l } else { 0.0 });
                (Some(total), Some(weak), ratio)
            }
            None => (None, None, None),
        };
        Ok(IterationRecord {
            m,
            m_star,
            weak_m_star: weak_size,
            differences,
            m_diff_star,
            weak_diff_star,
            ratio,
        })
    };

    let h0 = solve_profiles(&mut engine, u0, None)?;
    let mut current = Iterate {
        phi: vec![0.0; n],
        v0: u0.clone(),
        h: h0,
    };
    let mut trace = IterationTrace {
        records: vec![record(&current, None, None)?],
    };
    let mut last: Option<f64> = None;
    let mut last_weak: Option<f64> = None;
    let mut growth = 0;
    let mut converged = false;
    for nu in 1..=opts.max_iterations {
        let rhs: Vec<f64> = current.h[1].iter().map(|x| -inv_kappa * x).collect();
        let phi = match opts.potential {
            PotentialBoundary::Dirichlet => dirichlet(rhs)?,
            PotentialBoundary::Neumann => {
                let problem = EllipticProblem::neumann(rhs, vec![0.0; disk.n_theta()]).with_tolerance(opts.elliptic_tolerance);
                solver.solve(map, &problem)?.values
            }
        };
        let [g1, g2] = map.grad(&phi);
        let v0 = u0.add(&Field::vector(Frame::Eulerian, [g1, g2]))?;
        let h = solve_profiles(&mut engine, &v0, Some(&current.h))?;
        let next = Iterate { phi, v0, h };
        let rec = record(&next, Some(&current), last)?;
        let weak = rec.weak_diff_star.unwrap_or(0.0);
        let size = rec.weak_m_star.max(f64::MIN_POSITIVE);
        if let Some(prev) = last_weak {
            growth = if weak >= prev && weak > 0.0 { growth + 1 } else { 0 };
        }
        last = rec.m_diff_star;
        trace.records.push(rec);
        current = next;
        // Fifth derivatives of roundoff swamp M*^ν long before any
        // useful tolerance, so convergence is judged in relative L².
        if weak <= opts.tolerance * size {
            converged = true;
            break;
        }
        if growth >= 2 {
            return Err(Error::NoContraction {
                iteration: nu,
                ratio: weak / last_weak.unwrap_or(f64::NAN),
            });
        }
        last_weak = Some(weak);
    }
    if !converged {
        return Err(Error::BuilderNoConvergence {
            iterations: opts.max_iterations,
            residual: last_weak.unwrap_or(f64::NAN),
        });
    }

    let mut h = current.h;
    h.resize(PROFILES, vec![0.0; n]);
    let data = CompatibleData {
        u0: u0.clone(),
        p0,
        v0: current.v0,
        phi: current.phi,
        h,
        kappa,
        iterations: trace.records.len() - 1,
    };
    if let Some(eps_min) = opts.eps_min {
        let cache = GeometryCache::new(map)?;
        let eps = cache.normal_derivative(&data.h[0]).iter().map(|x| -x).fold(f64::INFINITY, f64::min);
        if !(eps >= eps_min) {
            return Err(Error::SignConditionViolation { eps });
        }
    }
    Ok((data, trace))
}

impl CompatibleData {
    /// The `t = 0` state `(x = y, v₀, h₀, h₁)`.
    pub fn initial_state(&self, map: &LagrangianMap, eos: Arc<EosFamily>) -> Result<SimState> {
        SimState::new(map.clone(), self.v0.clone(), self.h[0].clone(), self.h[1].clone(), eos)
    }

    /// Largest `|h_k|` on the boundary ring over `k ≤ 5`.
    pub fn boundary_residual(&self, nt: usize) -> f64 {
        self.h
            .iter()
            .flat_map(|h| h[..nt].iter())
            .map(|x| x.abs())
            .fold(0.0, f64::max)
    }
}

/// The `t = 0` energy report of built data.
pub fn verify_uniform_energy(data: &CompatibleData, map: &LagrangianMap, eos: Arc<EosFamily>, r: usize) -> Result<EnergyReport> {
    let state = data.initial_state(map, eos)?;
    let cache = GeometryCache::new(map)?;
    energy_total(&state, &cache, r, EnergyOptions::default())
}
