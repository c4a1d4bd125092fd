//! Explicit time integration of the compressible and incompressible
//! Lagrangian systems, the `κ` sweep and transport diagnostics.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::builder::{build_initial_data, BuilderOptions};
use crate::elliptic::{EllipticProblem, EllipticSolver, DEFAULT_TOLERANCE};
use crate::energy::{energy_total, physical_energy, taylor_and_apriori, EnergyOptions, EnergyReport};
use crate::eos::EosFamily;
use crate::error::{Error, Result};
use crate::field::{Field, Frame};
use crate::geometry::{GeometryCache, LagrangianMap};
use crate::grid::ReferenceDisk;
use crate::state::SimState;

/// Stability bound of classical RK4 on the imaginary axis.
const RK4_IMAGINARY_LIMIT: f64 = 2.8;

/// `λ_max^{-1/2}` of the collocation Laplacian with boundary values held,
/// the length scale of the fastest discrete acoustic mode.
pub fn spectral_spacing(disk: &Arc<ReferenceDisk>) -> f64 {
    let map = LagrangianMap::identity(disk);
    let nt = disk.n_theta();
    let apply = |w: &[f64]| {
        let mut w = w.to_vec();
        w[..nt].iter_mut().for_each(|x| *x = 0.0);
        let mut out = map.laplacian(&w);
        out[..nt].iter_mut().for_each(|x| *x = 0.0);
        out
    };
    let mut w: Vec<f64> = (0..disk.len()).map(|k| ((k * 7919) % 104_729) as f64 / 104_729.0 - 0.5).collect();
    let mut lambda = 0.0;
    for _ in 0..300 {
        let next = apply(&w);
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let prev: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let estimate = norm / prev;
        w = next.iter().map(|x| x / norm).collect();
        if (estimate - lambda).abs() <= 1e-6 * estimate {
            lambda = estimate;
            break;
        }
        lambda = estimate;
    }
    1.0 / lambda.max(f64::MIN_POSITIVE).sqrt()
}

fn curl(map: &LagrangianMap, v: [&[f64]; 2]) -> Vec<f64> {
    let [_, d2v1] = map.grad(v[0]);
    let [d1v2, _] = map.grad(v[1]);
    d1v2.iter().zip(&d2v1).map(|(a, b)| a - b).collect()
}

fn divergence(map: &LagrangianMap, v: [&[f64]; 2]) -> Vec<f64> {
    let [a, _] = map.grad(v[0]);
    let [_, b] = map.grad(v[1]);
    a.iter().zip(&b).map(|(x, y)| x + y).collect()
}

/// `(∂_i v^j)(∂_j v^i)`.
fn gradient_square(map: &LagrangianMap, v: [&[f64]; 2]) -> Vec<f64> {
    let [a11, a12] = map.grad(v[0]);
    let [a21, a22] = map.grad(v[1]);
    (0..a11.len())
        .map(|k| a11[k] * a11[k] + 2.0 * a12[k] * a21[k] + a22[k] * a22[k])
        .collect()
}

fn l2(map: &LagrangianMap, f: &[f64]) -> f64 {
    let sq: Vec<f64> = f.iter().map(|x| x * x).collect();
    map.integrate(&sq).max(0.0).sqrt()
}

fn reference_l2(disk: &ReferenceDisk, f: &[f64]) -> f64 {
    let sq: Vec<f64> = f.iter().map(|x| x * x).collect();
    disk.integrate(&sq).max(0.0).sqrt()
}

fn rk4(y: &[f64], dt: f64, mut rate: impl FnMut(&[f64]) -> Result<Vec<f64>>) -> Result<Vec<f64>> {
    let shifted = |k: &[f64], a: f64| -> Vec<f64> { y.iter().zip(k).map(|(y, k)| y + a * k).collect() };
    let k1 = rate(y)?;
    let k2 = rate(&shifted(&k1, 0.5 * dt))?;
    let k3 = rate(&shifted(&k2, 0.5 * dt))?;
    let k4 = rate(&shifted(&k3, dt))?;
    Ok((0..y.len())
        .map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Time stepper bound to one reference grid.
#[derive(Debug, Clone)]
pub struct Integrator {
    disk: Arc<ReferenceDisk>,
    elliptic: Arc<EllipticSolver>,
    spacing: f64,
    /// `c_cfl` in `Δt ≤ c_cfl·Δx_min·√(min e′)`.
    pub cfl: f64,
    /// Divergence cleaning period of incompressible runs, in steps.
    pub cleaning_period: usize,
    pub elliptic_tolerance: f64,
}

impl Integrator {
    pub fn new(disk: &Arc<ReferenceDisk>) -> Self {
        Self::with_solver(Arc::new(EllipticSolver::new(disk)))
    }

    pub fn with_solver(elliptic: Arc<EllipticSolver>) -> Self {
        let disk = elliptic.disk().clone();
        Self {
            spacing: spectral_spacing(&disk),
            disk,
            elliptic,
            cfl: 1.0,
            cleaning_period: 10,
            elliptic_tolerance: DEFAULT_TOLERANCE,
        }
    }

    pub fn disk(&self) -> &Arc<ReferenceDisk> {
        &self.disk
    }

    pub fn elliptic(&self) -> &EllipticSolver {
        &self.elliptic
    }

    /// `Δx_min`.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Largest admissible compressible step for the enthalpy range of `state`.
    pub fn max_step(&self, state: &SimState) -> f64 {
        let de_min = state
            .h
            .iter()
            .map(|&h| state.eos.de(h))
            .fold(f64::INFINITY, f64::min);
        self.cfl * self.spacing * de_min.max(0.0).sqrt()
    }

    fn check_cfl(&self, state: &SimState, dt: f64) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= RK4_IMAGINARY_LIMIT) {
            return Err(Error::InvalidInput(format!("CFL constant {} outside (0, {RK4_IMAGINARY_LIMIT}]", self.cfl)));
        }
        let limit = self.max_step(state);
        if !(dt.abs() <= limit) {
            return Err(Error::CflViolation { dt, limit });
        }
        Ok(())
    }

    /// Keeps the angular Nyquist mode out of every evolved block, where
    /// products would otherwise feed it back unchecked.
    fn without_nyquist(&self, mut y: Vec<f64>) -> Vec<f64> {
        for block in y.chunks_mut(self.disk.len()) {
            let clean = self.disk.without_nyquist(block);
            block.copy_from_slice(&clean);
        }
        y
    }

    fn compressible_rate(&self, eos: &EosFamily, y: &[f64]) -> Result<Vec<f64>> {
        let n = self.disk.len();
        let nt = self.disk.n_theta();
        let block = |i: usize| &y[i * n..(i + 1) * n];
        let map = LagrangianMap::new(&self.disk, [block(0).to_vec(), block(1).to_vec()])?;
        let (v1, v2, h, hdot) = (block(2), block(3), block(4), block(5));
        let [hx, hy] = map.grad(h);
        let lap = map.laplacian(h);
        let q = gradient_square(&map, [v1, v2]);
        let mut out = Vec::with_capacity(6 * n);
        out.extend_from_slice(v1);
        out.extend_from_slice(v2);
        out.extend(hx.iter().map(|x| -x));
        out.extend(hy.iter().map(|x| -x));
        out.extend_from_slice(hdot);
        out.extend((0..n).map(|k| {
            let (e1, e2) = (eos.derivative(1, h[k]), eos.derivative(2, h[k]));
            (lap[k] + q[k] - e2 * hdot[k] * hdot[k]) / e1
        }));
        // h = 0 on the boundary ring at every stage.
        out[4 * n..4 * n + nt].iter_mut().for_each(|x| *x = 0.0);
        out[5 * n..5 * n + nt].iter_mut().for_each(|x| *x = 0.0);
        Ok(self.without_nyquist(out))
    }

    /// One classical RK4 step of `(x, v, h, D_t h)`.
    pub fn step_compressible(&self, state: &SimState, dt: f64) -> Result<SimState> {
        self.check_cfl(state, dt)?;
        let n = self.disk.len();
        let [x1, x2] = state.map.positions();
        let mut y = Vec::with_capacity(6 * n);
        for block in [x1.as_slice(), x2, state.v.component(0), state.v.component(1), &state.h, &state.hdot] {
            y.extend_from_slice(block);
        }
        let y = rk4(&y, dt, |y| self.compressible_rate(&state.eos, y))?;
        let block = |i: usize| y[i * n..(i + 1) * n].to_vec();
        let map = LagrangianMap::new(&self.disk, [block(0), block(1)])?;
        let v = Field::vector(Frame::Eulerian, [block(2), block(3)]);
        let mut next = SimState::new(map, v, block(4), block(5), state.eos.clone())?;
        next.t = state.t + dt;
        Ok(next)
    }

    /// `p` on the current geometry from `Δp = −(∂_i u^j)(∂_j u^i)`.
    pub fn pressure(&self, map: &LagrangianMap, u: [&[f64]; 2]) -> Result<Vec<f64>> {
        let rhs: Vec<f64> = gradient_square(map, u).iter().map(|x| -x).collect();
        let problem = EllipticProblem::homogeneous(&self.disk, rhs).with_tolerance(self.elliptic_tolerance);
        Ok(self.elliptic.solve(map, &problem)?.values)
    }

    fn incompressible_rate(&self, y: &[f64]) -> Result<Vec<f64>> {
        let n = self.disk.len();
        let block = |i: usize| &y[i * n..(i + 1) * n];
        let map = LagrangianMap::new(&self.disk, [block(0).to_vec(), block(1).to_vec()])?;
        let p = self.pressure(&map, [block(2), block(3)])?;
        let [px, py] = map.grad(&p);
        let mut out = Vec::with_capacity(4 * n);
        out.extend_from_slice(block(2));
        out.extend_from_slice(block(3));
        out.extend(px.iter().map(|x| -x));
        out.extend(py.iter().map(|x| -x));
        Ok(self.without_nyquist(out))
    }

    /// One RK4 step of `(x, u)`; the pressure is re-solved at every stage.
    pub fn step_incompressible(&self, state: &IncompressibleState, dt: f64) -> Result<IncompressibleState> {
        let n = self.disk.len();
        let [x1, x2] = state.map.positions();
        let mut y = Vec::with_capacity(4 * n);
        for block in [x1.as_slice(), x2, &state.u[0], &state.u[1]] {
            y.extend_from_slice(block);
        }
        let y = rk4(&y, dt, |y| self.incompressible_rate(y))?;
        let block = |i: usize| y[i * n..(i + 1) * n].to_vec();
        Ok(IncompressibleState {
            t: state.t + dt,
            map: LagrangianMap::new(&self.disk, [block(0), block(1)])?,
            u: [block(2), block(3)],
        })
    }

    /// `u ← u − ∂ψ` with `Δψ = div u`, `ψ = 0` on the boundary.
    pub fn clean_divergence(&self, state: &mut IncompressibleState) -> Result<()> {
        let div = divergence(&state.map, [&state.u[0], &state.u[1]]);
        let problem = EllipticProblem::homogeneous(&self.disk, div).with_tolerance(self.elliptic_tolerance);
        let psi = self.elliptic.solve(&state.map, &problem)?.values;
        let [g1, g2] = state.map.grad(&psi);
        for (u, g) in state.u.iter_mut().zip([g1, g2]) {
            u.iter_mut().zip(&g).for_each(|(u, g)| *u -= g);
        }
        Ok(())
    }
}

/// `(t, x, u)` of the incompressible system.
#[derive(Clone, Debug)]
pub struct IncompressibleState {
    pub t: f64,
    pub map: LagrangianMap,
    pub u: [Vec<f64>; 2],
}

impl IncompressibleState {
    pub fn new(map: LagrangianMap, u: &Field) -> Result<Self> {
        if u.rank() != 1 || u.nodes() != map.disk().len() {
            return Err(Error::InvalidInput("velocity must be a vector on the grid".into()));
        }
        Ok(Self {
            t: 0.0,
            map,
            u: [u.component(0).to_vec(), u.component(1).to_vec()],
        })
    }
}

/// Time lattice and reporting of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub t_final: f64,
    /// Spacing of the sample times; a whole number of steps fits in it.
    pub sample_interval: f64,
    /// Requested step; the CFL step (compressible) or `1e-3`
    /// (incompressible) when absent.
    pub dt: Option<f64>,
    /// Order `r` of the energy reported at each sample.
    pub energy_order: Option<usize>,
    pub energy: EnergyOptions,
    pub keep_snapshots: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            t_final: 0.2,
            sample_interval: 0.01,
            dt: None,
            energy_order: Some(0),
            energy: EnergyOptions::default(),
            keep_snapshots: true,
        }
    }
}

impl RunOptions {
    fn lattice(&self, dt_max: f64) -> Result<(usize, usize, f64)> {
        if !(self.t_final >= 0.0 && self.sample_interval > 0.0 && dt_max > 0.0) {
            return Err(Error::InvalidInput("run needs T ≥ 0 and positive sample interval and step".into()));
        }
        let samples = (self.t_final / self.sample_interval).round() as usize;
        if ((samples as f64) * self.sample_interval - self.t_final).abs() > 1e-9 * self.t_final.max(1.0) {
            return Err(Error::InvalidInput("T is not a whole number of sample intervals".into()));
        }
        let per_sample = (self.sample_interval / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Ok((samples, per_sample, self.sample_interval / per_sample as f64))
    }
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub x: [Vec<f64>; 2],
    pub v: [Vec<f64>; 2],
    /// Enthalpy, or the pressure of an incompressible run.
    pub h: Vec<f64>,
    pub hdot: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub t: f64,
    /// `E₀ = ½∫ρ|v|² + ∫ρQ`; `½∫|u|²` for incompressible runs.
    pub physical_energy: f64,
    pub energy: Option<EnergyReport>,
    /// Set when the requested energy could not be resolved at this sample.
    pub energy_error: Option<String>,
    /// `‖div v + e′D_t h‖_{L²}`; `‖div u‖_{L²}` for incompressible runs.
    pub continuity: f64,
    pub curl_norm: f64,
    /// `sup|curl v − c|` against the initial mean curl `c`.
    pub curl_deviation: f64,
    pub eps: f64,
    pub cal_e: f64,
    /// `max | |x| − 1 |` over boundary labels.
    pub boundary_radius_drift: f64,
    pub boundary_enthalpy: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IntegratorStats {
    pub steps: usize,
    pub dt: f64,
    pub wall_seconds: f64,
    pub cleanings: usize,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    /// `None` for incompressible runs.
    pub kappa: Option<f64>,
    pub samples: Vec<Sample>,
    pub snapshots: Vec<Snapshot>,
    pub stats: IntegratorStats,
    /// Set when the initial pressure violates the sign condition.
    pub sign_violation: bool,
}

impl RunResult {
    /// Largest `|E₀(t) − E₀(0)| / |E₀(0)|`.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.samples.first().map_or(0.0, |s| s.physical_energy);
        let worst = self
            .samples
            .iter()
            .map(|s| (s.physical_energy - e0).abs())
            .fold(0.0, f64::max);
        if e0 != 0.0 {
            worst / e0.abs()
        } else {
            worst
        }
    }

    /// Largest `E_r*(t) / E_r*(0)` over the samples that resolved it.
    pub fn energy_growth(&self) -> Option<f64> {
        let e0 = self.samples.first()?.energy.as_ref()?.cumulative;
        let worst = self
            .samples
            .iter()
            .filter_map(|s| s.energy.as_ref().map(|e| e.cumulative))
            .fold(0.0, f64::max);
        Some(if e0 > 0.0 { worst / e0 } else { worst })
    }
}

fn boundary_radius_drift(map: &LagrangianMap) -> f64 {
    let nt = map.disk().n_theta();
    let [x1, x2] = map.positions();
    (0..nt).map(|k| (x1[k].hypot(x2[k]) - 1.0).abs()).fold(0.0, f64::max)
}

fn mean(map: &LagrangianMap, f: &[f64]) -> f64 {
    map.integrate(f) / map.integrate(&vec![1.0; f.len()])
}

fn compressible_sample(state: &SimState, opts: &RunOptions, curl0: f64) -> Result<Sample> {
    let cache = GeometryCache::new(&state.map)?;
    let (energy, energy_error) = match opts.energy_order.map(|r| energy_total(state, &cache, r, opts.energy)) {
        Some(Ok(e)) => (Some(e), None),
        // Under-resolved time derivatives are a diagnostic, not a fault of the trajectory.
        Some(Err(e @ Error::ResolutionInsufficient { .. })) => (None, Some(e.to_string())),
        Some(Err(e)) => return Err(e),
        None => (None, None),
    };
    let taylor = match &energy {
        Some(e) => e.taylor,
        None => taylor_and_apriori(state, &cache, None)?,
    };
    let [v1, v2] = state.velocity_components();
    let w = curl(&state.map, [&v1, &v2]);
    let nt = state.map.disk().n_theta();
    Ok(Sample {
        t: state.t,
        physical_energy: physical_energy(state),
        energy,
        energy_error,
        continuity: state.continuity_residual_norm(),
        curl_norm: l2(&state.map, &w),
        curl_deviation: w.iter().map(|x| (x - curl0).abs()).fold(0.0, f64::max),
        eps: taylor.eps,
        cal_e: taylor.cal_e,
        boundary_radius_drift: boundary_radius_drift(&state.map),
        boundary_enthalpy: state.h[..nt].iter().map(|x| x.abs()).fold(0.0, f64::max),
    })
}

fn snapshot_of(t: f64, map: &LagrangianMap, v: [&[f64]; 2], h: &[f64], hdot: &[f64]) -> Snapshot {
    let [x1, x2] = map.positions();
    Snapshot {
        t,
        x: [x1.clone(), x2.clone()],
        v: [v[0].to_vec(), v[1].to_vec()],
        h: h.to_vec(),
        hdot: hdot.to_vec(),
    }
}

/// Integrates the compressible system from `state` to `opts.t_final`.
pub fn run_compressible(integrator: &Integrator, state: SimState, opts: &RunOptions) -> Result<RunResult> {
    let clock = Instant::now();
    let dt_max = match opts.dt {
        Some(dt) => dt,
        None => integrator.max_step(&state),
    };
    let (samples, per_sample, dt) = opts.lattice(dt_max)?;
    let [v1, v2] = state.velocity_components();
    let curl0 = mean(&state.map, &curl(&state.map, [&v1, &v2]));
    let mut result = RunResult {
        kappa: Some(state.eos.kappa()),
        samples: Vec::with_capacity(samples + 1),
        snapshots: Vec::new(),
        stats: IntegratorStats {
            dt,
            ..Default::default()
        },
        sign_violation: false,
    };
    let t0 = state.t;
    let mut state = state;
    for k in 0..=samples {
        if k > 0 {
            for _ in 0..per_sample {
                state = integrator.step_compressible(&state, dt)?;
                result.stats.steps += 1;
            }
            // Pin sample times to the lattice.
            state.t = t0 + k as f64 * opts.sample_interval;
        }
        result.samples.push(compressible_sample(&state, opts, curl0)?);
        if opts.keep_snapshots {
            let [v1, v2] = state.velocity_components();
            result.snapshots.push(snapshot_of(state.t, &state.map, [&v1, &v2], &state.h, &state.hdot));
        }
    }
    result.sign_violation = result.samples[0].eps <= 0.0;
    result.stats.wall_seconds = clock.elapsed().as_secs_f64();
    Ok(result)
}

/// Integrates the incompressible system; the pressure is stored in the
/// snapshot enthalpy slot.
pub fn run_incompressible(integrator: &Integrator, state: IncompressibleState, opts: &RunOptions) -> Result<RunResult> {
    let clock = Instant::now();
    let (samples, per_sample, dt) = opts.lattice(opts.dt.unwrap_or(1e-3))?;
    let disk = integrator.disk().clone();
    let nt = disk.n_theta();
    let curl0 = mean(&state.map, &curl(&state.map, [&state.u[0], &state.u[1]]));
    let mut result = RunResult {
        kappa: None,
        samples: Vec::with_capacity(samples + 1),
        snapshots: Vec::new(),
        stats: IntegratorStats {
            dt,
            ..Default::default()
        },
        sign_violation: false,
    };
    let t0 = state.t;
    let mut state = state;
    for k in 0..=samples {
        if k > 0 {
            for _ in 0..per_sample {
                state = integrator.step_incompressible(&state, dt)?;
                result.stats.steps += 1;
                if integrator.cleaning_period > 0 && result.stats.steps % integrator.cleaning_period == 0 {
                    integrator.clean_divergence(&mut state)?;
                    result.stats.cleanings += 1;
                }
            }
            state.t = t0 + k as f64 * opts.sample_interval;
        }
        let u = [state.u[0].as_slice(), state.u[1].as_slice()];
        let p = integrator.pressure(&state.map, u)?;
        let cache = GeometryCache::new(&state.map)?;
        let eps = cache.normal_derivative(&p).iter().map(|x| -x).fold(f64::INFINITY, f64::min);
        let w = curl(&state.map, u);
        let kinetic: Vec<f64> = (0..p.len()).map(|k| 0.5 * (u[0][k].powi(2) + u[1][k].powi(2))).collect();
        result.samples.push(Sample {
            t: state.t,
            physical_energy: state.map.integrate(&kinetic),
            energy: None,
            energy_error: None,
            continuity: l2(&state.map, &divergence(&state.map, u)),
            curl_norm: l2(&state.map, &w),
            curl_deviation: w.iter().map(|x| (x - curl0).abs()).fold(0.0, f64::max),
            eps,
            cal_e: if eps > 0.0 { 1.0 / eps } else { f64::INFINITY },
            boundary_radius_drift: boundary_radius_drift(&state.map),
            boundary_enthalpy: p[..nt].iter().map(|x| x.abs()).fold(0.0, f64::max),
        });
        if opts.keep_snapshots {
            let zeros = vec![0.0; p.len()];
            result.snapshots.push(snapshot_of(state.t, &state.map, u, &p, &zeros));
        }
    }
    result.sign_violation = result.samples[0].eps <= 0.0;
    result.stats.wall_seconds = clock.elapsed().as_secs_f64();
    Ok(result)
}

/// `(t, ‖D_t curl v − T(v)‖_{L²})` at every interior snapshot, with
/// `D_t` from centered differences and `T_ij = −(∂_i v^k)curl_kj + (∂_j v^k)curl_ki`.
pub fn curl_transport_check(run: &RunResult, disk: &Arc<ReferenceDisk>) -> Result<Vec<(f64, f64)>> {
    let snaps = &run.snapshots;
    if snaps.len() < 3 {
        return Err(Error::InsufficientSnapshots(snaps.len()));
    }
    let fields = |s: &Snapshot| -> Result<(LagrangianMap, Vec<f64>)> {
        let map = LagrangianMap::new(disk, s.x.clone())?;
        let w = curl(&map, [&s.v[0], &s.v[1]]);
        Ok((map, w))
    };
    let mut out = Vec::with_capacity(snaps.len() - 2);
    let mut prev = fields(&snaps[0])?;
    let mut cur = fields(&snaps[1])?;
    for i in 1..snaps.len() - 1 {
        let next = fields(&snaps[i + 1])?;
        let span = snaps[i + 1].t - snaps[i - 1].t;
        let (map, w) = &cur;
        let s = &snaps[i];
        let [a11, _] = map.grad(&s.v[0]);
        let [_, a22] = map.grad(&s.v[1]);
        // With ω = curl₁₂ = −curl₂₁ the (1,2) entry is −(∂₁v¹)ω + (∂₂v²)(−ω).
        let residual: Vec<f64> = (0..w.len())
            .map(|k| {
                let rate = (next.1[k] - prev.1[k]) / span;
                rate + (a11[k] + a22[k]) * w[k]
            })
            .collect();
        out.push((s.t, l2(map, &residual)));
        prev = std::mem::replace(&mut cur, next);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    pub run: RunOptions,
    pub builder: BuilderOptions,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepColumns {
    /// `sup_t ‖v_κ − u‖_{L²}` on the reference domain.
    pub velocity_gap: f64,
    /// `sup_t ‖h_κ − p‖_{L²}`.
    pub enthalpy_gap: f64,
    /// `sup_t ‖x_κ − x_u‖_{L²}`.
    pub flow_map_gap: f64,
    /// `max_t E_r*(t)/E_r*(0)`.
    pub energy_growth: Option<f64>,
    pub energy_drift: f64,
    pub builder_iterations: usize,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub kappa: f64,
    pub outcome: std::result::Result<SweepColumns, String>,
}

fn compare(disk: &ReferenceDisk, run: &RunResult, reference: &RunResult) -> (f64, f64, f64) {
    let mut gaps = (0.0f64, 0.0f64, 0.0f64);
    for (a, b) in run.snapshots.iter().zip(&reference.snapshots) {
        let diff = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(a, b)| a - b).collect() };
        let pair = |x: &[Vec<f64>; 2], y: &[Vec<f64>; 2]| -> f64 {
            reference_l2(disk, &diff(&x[0], &y[0])).hypot(reference_l2(disk, &diff(&x[1], &y[1])))
        };
        gaps.0 = gaps.0.max(pair(&a.v, &b.v));
        gaps.1 = gaps.1.max(reference_l2(disk, &diff(&a.h, &b.h)));
        gaps.2 = gaps.2.max(pair(&a.x, &b.x));
    }
    gaps
}

/// Builds data and runs the compressible system for every `κ`,
/// comparing against one incompressible run from `u₀`.
pub fn kappa_sweep(integrator: &Integrator, u0: &Field, kappas: &[f64], opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    let disk = integrator.disk().clone();
    let identity = LagrangianMap::identity(&disk);
    let mut run_opts = opts.run;
    run_opts.keep_snapshots = true;
    let reference = run_incompressible(integrator, IncompressibleState::new(identity.clone(), u0)?, &run_opts)?;
    let rows = kappas
        .par_iter()
        .map(|&kappa| {
            let clock = Instant::now();
            let outcome = (|| -> Result<SweepColumns> {
                if kappa.is_infinite() {
                    let (v, h, x) = compare(&disk, &reference, &reference);
                    return Ok(SweepColumns {
                        velocity_gap: v,
                        enthalpy_gap: h,
                        flow_map_gap: x,
                        energy_growth: None,
                        energy_drift: reference.energy_drift(),
                        builder_iterations: 0,
                        wall_seconds: reference.stats.wall_seconds,
                    });
                }
                let (data, _) = build_initial_data(integrator.elliptic(), &identity, u0, kappa, &opts.builder)?;
                let eos = Arc::new(EosFamily::linear(kappa)?);
                let state = data.initial_state(&identity, eos)?;
                let run = run_compressible(integrator, state, &run_opts)?;
                let (v, h, x) = compare(&disk, &run, &reference);
                Ok(SweepColumns {
                    velocity_gap: v,
                    enthalpy_gap: h,
                    flow_map_gap: x,
                    energy_growth: run.energy_growth(),
                    energy_drift: run.energy_drift(),
                    builder_iterations: data.iterations,
                    wall_seconds: clock.elapsed().as_secs_f64(),
                })
            })();
            SweepRow {
                kappa,
                outcome: outcome.map_err(|e| e.to_string()),
            }
        })
        .collect();
    Ok(rows)
}
