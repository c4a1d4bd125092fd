use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use freesurf::builder::{build_initial_data, verify_uniform_energy, BuilderOptions, PotentialBoundary};
use freesurf::calculus::{commutator_residual, CommutatorKind};
use freesurf::elliptic::{
    bessel_j0, bessel_j0_first_zero, hodge_check, poincare_check, projection_formula_check, trace_check, EllipticSolver,
};
use freesurf::energy::EnergyOptions;
use freesurf::eos::{EosFamily, MAX_DERIVATIVE};
use freesurf::error::Error;
use freesurf::field::{Field, Frame};
use freesurf::geometry::{GeometryCache, LagrangianMap};
use freesurf::grid::ReferenceDisk;
use freesurf::solver::{
    kappa_sweep, run_compressible, run_incompressible, IncompressibleState, Integrator, RunOptions, Sample, Snapshot,
    SweepOptions,
};
use freesurf::state::SimState;
use serde::Serialize;

use crate::config::{DtRule, EosName, ExperimentConfig, Physics, Potential, Preset, Seed, Term};
use crate::output::{num, opt, Block, Container, Csv, Manifest, OutDir, HASH_KEY};
use crate::Failure;

/// Variant name of a library error, e.g. `SignConditionViolation`.
pub fn error_kind(e: &Error) -> String {
    let debug = format!("{e:?}");
    debug.split(|c: char| !c.is_alphanumeric()).next().unwrap_or_default().to_string()
}

pub struct Context {
    pub config: ExperimentConfig,
    pub hash: String,
    pub out: OutDir,
    pub stages: BTreeMap<String, f64>,
    pub notes: BTreeMap<String, String>,
    command: &'static str,
    clock: Instant,
}

impl Context {
    pub fn new(config: ExperimentConfig, out: PathBuf, command: &'static str) -> Result<Self, Failure> {
        let out = OutDir::create(out.clone()).map_err(|e| Failure::Io(format!("{}: {e}", out.display())))?;
        Ok(Self {
            hash: config.hash(),
            config,
            out,
            stages: BTreeMap::new(),
            notes: BTreeMap::new(),
            command,
            clock: Instant::now(),
        })
    }

    /// Writes the manifest of this command.
    pub fn finish(&mut self, failure: Option<&Failure>) -> Result<(), Failure> {
        self.notes.insert(
            "status".into(),
            failure.map_or_else(|| "ok".to_string(), |f| format!("failed ({f})")),
        );
        let manifest = Manifest {
            command: self.command.into(),
            config_hash: self.hash.clone(),
            freesurf_version: freesurf::VERSION.into(),
            cli_version: env!("CARGO_PKG_VERSION").into(),
            wall_seconds: self.clock.elapsed().as_secs_f64(),
            files: self.out.written.clone(),
            stages: self.stages.clone(),
            notes: self.notes.clone(),
        };
        let path = self.out.root.join(format!("{}.manifest.toml", self.command));
        crate::output::write_toml(&path, &manifest)?;
        Ok(())
    }

    fn disk(&self) -> Result<Arc<ReferenceDisk>, Failure> {
        Ok(ReferenceDisk::new(self.config.grid.n_r, self.config.grid.n_theta)?)
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.out.path(name)
    }
}

fn polynomial(disk: &ReferenceDisk, terms: &[Term]) -> Vec<f64> {
    disk.sample(|x, y| terms.iter().map(|&(i, j, c)| c * x.powi(i as i32) * y.powi(j as i32)).sum())
}

/// Seed velocity on the reference disk, where labels and positions agree.
pub fn seed_velocity(seed: &Seed, disk: &ReferenceDisk) -> Field {
    let n = disk.len();
    let components = match seed.preset {
        Some(Preset::Zero) => [vec![0.0; n], vec![0.0; n]],
        Some(Preset::IrrotationalQuadrupole) => {
            let a = seed.amplitude;
            [disk.sample(|x, _| 2.0 * a * x), disk.sample(|_, y| -2.0 * a * y)]
        }
        Some(Preset::RigidRotation) => {
            let w = seed.omega;
            [disk.sample(|_, y| -w * y), disk.sample(|x, _| w * x)]
        }
        None => [
            polynomial(disk, seed.u1.as_deref().unwrap_or_default()),
            polynomial(disk, seed.u2.as_deref().unwrap_or_default()),
        ],
    };
    Field::vector(Frame::Eulerian, components)
}

fn seed_name(seed: &Seed) -> &'static str {
    match seed.preset {
        Some(Preset::Zero) => "zero",
        Some(Preset::IrrotationalQuadrupole) => "irrotational-quadrupole",
        Some(Preset::RigidRotation) => "rigid-rotation",
        None => "coefficients",
    }
}

/// The equation of state at `kappa`; `None` is the incompressible system.
fn family(physics: &Physics, kappa: f64) -> Result<Option<Arc<EosFamily>>, Failure> {
    match physics.eos {
        EosName::Linear if kappa.is_infinite() => Ok(None),
        EosName::Linear => Ok(Some(Arc::new(EosFamily::linear(kappa)?))),
        EosName::Custom => {
            let table: [f64; MAX_DERIVATIVE] = physics
                .eos_table
                .as_deref()
                .and_then(|t| t.try_into().ok())
                .ok_or_else(|| Failure::Config("physics.eos_table needs six entries".into()))?;
            let fam = EosFamily::from_derivative_table(table)?;
            // The builder forcing is closed for e″ = … = e⁽⁶⁾ = 0 only.
            if fam.max_nonzero_order() > 1 {
                return Err(Error::UnsupportedEos("the data builder needs e''(0) = ... = e^(6)(0) = 0".into()).into());
            }
            Ok(Some(Arc::new(fam)))
        }
    }
}

fn builder_options(config: &ExperimentConfig, at_rest: bool) -> BuilderOptions {
    let tol = &config.tolerances;
    BuilderOptions {
        tolerance: tol.builder,
        max_iterations: tol.max_iterations,
        potential: match config.physics.potential {
            Potential::Dirichlet => PotentialBoundary::Dirichlet,
            Potential::Neumann => PotentialBoundary::Neumann,
        },
        elliptic_tolerance: tol.elliptic,
        // The rest state has ε = 0 exactly and would always be rejected.
        eps_min: (!at_rest).then_some(tol.eps_min),
        ..BuilderOptions::default()
    }
}

fn run_options(config: &ExperimentConfig, energy: bool) -> RunOptions {
    let time = &config.time;
    RunOptions {
        t_final: time.t_final,
        sample_interval: time.sample_interval,
        dt: match time.dt_rule {
            DtRule::Cfl => None,
            DtRule::Fixed => time.dt,
        },
        energy_order: energy.then_some(time.order),
        energy: EnergyOptions {
            eps_min: config.tolerances.eps_min,
        },
        keep_snapshots: true,
    }
}

fn integrator(config: &ExperimentConfig, disk: &Arc<ReferenceDisk>) -> Integrator {
    let mut integrator = Integrator::new(disk);
    integrator.cfl = config.time.cfl;
    integrator.elliptic_tolerance = config.tolerances.elliptic;
    integrator
}

/// `key: value` lines under the hash stamp.
struct Summary {
    lines: Vec<(String, String)>,
}

impl Summary {
    fn add(&mut self, key: &str, value: impl Into<String>) {
        self.lines.push((key.into(), value.into()));
    }

    fn write(&self, path: &Path, hash: &str) -> std::io::Result<()> {
        let mut text = format!("# {HASH_KEY}={hash}\n");
        for (k, v) in &self.lines {
            text.push_str(&format!("{k}: {v}\n"));
        }
        fs::write(path, text)
    }
}

pub fn build_data(ctx: &mut Context) -> Result<(), Failure> {
    let config = ctx.config.clone();
    let disk = ctx.disk()?;
    let nt = disk.n_theta();
    let map = LagrangianMap::identity(&disk);
    let solver = EllipticSolver::new(&disk);
    let u0 = seed_velocity(&config.seed, &disk);
    let eos = family(&config.physics, config.physics.kappa)?;
    let kappa = eos.as_ref().map_or(f64::INFINITY, |e| e.kappa());
    let at_rest = u0.sup_norm() == 0.0;

    let clock = Instant::now();
    let built = build_initial_data(&solver, &map, &u0, kappa, &builder_options(&config, at_rest));
    ctx.stages.insert("build".into(), clock.elapsed().as_secs_f64());

    let mut summary = Summary { lines: Vec::new() };
    let summary_path = ctx.path("summary.txt");
    let (data, trace) = match built {
        Ok(built) => built,
        Err(e) => {
            summary.add("status", "failed");
            summary.add("error", error_kind(&e));
            summary.add("message", e.to_string());
            summary.add("seed", seed_name(&config.seed));
            summary.add("kappa", num(kappa));
            summary.write(&summary_path, &ctx.hash)?;
            return Err(e.into());
        }
    };

    let cache = GeometryCache::new(&map)?;
    let eps = cache.normal_derivative(&data.h[0]).iter().map(|x| -x).fold(f64::INFINITY, f64::min);
    let r = config.time.order;
    summary.add("status", "ok");
    summary.add("seed", seed_name(&config.seed));
    summary.add("kappa", num(kappa));
    summary.add("resolution", format!("{}x{}", config.grid.n_r, nt));
    summary.add("iterations", data.iterations.to_string());
    summary.add("eps", num(eps));
    summary.add("calE", num(if eps > 0.0 { 1.0 / eps } else { f64::INFINITY }));
    summary.add("energy_order", r.to_string());
    let energy = match &eos {
        Some(eos) => verify_uniform_energy(&data, &map, eos.clone(), r).map(|e| num(e.cumulative)),
        None => Err(Error::DegenerateEos),
    };
    summary.add(
        &format!("E{r}star(0)"),
        energy.unwrap_or_else(|e| format!("unavailable ({}: {e})", error_kind(&e))),
    );
    let ratios: Vec<String> = trace.ratios().into_iter().map(num).collect();
    summary.add("contraction_ratios", ratios.join(" "));
    summary.add("boundary_residual", num(data.boundary_residual(nt)));

    let mut blocks = vec![
        Block::vector("u0", [data.u0.component(0), data.u0.component(1)]),
        Block::vector("v0", [data.v0.component(0), data.v0.component(1)]),
        Block::scalar("p0", &data.p0),
        Block::scalar("phi", &data.phi),
    ];
    blocks.extend(data.h.iter().enumerate().map(|(k, h)| Block::scalar(&format!("h{k}"), h)));
    let container = Container {
        attrs: [
            (HASH_KEY.to_string(), ctx.hash.clone()),
            ("kappa".to_string(), num(kappa)),
            ("iterations".to_string(), data.iterations.to_string()),
            ("seed".to_string(), seed_name(&config.seed).to_string()),
        ]
        .into(),
        grid: (config.grid.n_r, nt),
        blocks,
    };
    container.write(&ctx.path("data.bin"))?;

    let header: Vec<String> = [
        "nu", "m0", "m1", "m2", "m3", "m_star", "weak_m_star", "diff0", "diff1", "diff2", "diff3", "diff_star",
        "weak_diff_star", "ratio",
    ]
    .map(String::from)
    .to_vec();
    let mut csv = Csv::create(&ctx.path("trace.csv"), &ctx.hash, &header)?;
    for (nu, rec) in trace.records.iter().enumerate() {
        let mut row = vec![nu.to_string()];
        row.extend((0..4).map(|k| opt(rec.m.get(k).copied())));
        row.push(num(rec.m_star));
        row.push(num(rec.weak_m_star));
        row.extend((0..4).map(|k| opt(rec.differences.get(k).copied())));
        row.push(opt(rec.m_diff_star));
        row.push(opt(rec.weak_diff_star));
        row.push(opt(rec.ratio));
        csv.row(&row)?;
    }
    csv.finish()?;
    summary.write(&summary_path, &ctx.hash)?;
    Ok(())
}

/// Column names of `energy.csv` for order `r`.
pub fn energy_header(r: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..=r).map(|k| format!("E{}{k}", r - k)));
    h.extend([
        format!("K{r}"),
        format!("W{}", r + 1),
        format!("W{}sq", r + 1),
        format!("E{r}"),
        format!("E{r}star"),
    ]);
    h.extend(["eps", "calE", "K", "M", "physical", "continuity", "curl", "boundary_drift"].map(String::from));
    h
}

fn energy_row(s: &Sample, r: usize) -> Vec<String> {
    let mut row = vec![num(s.t)];
    match &s.energy {
        Some(e) => {
            row.extend(e.e_sk.iter().map(|&x| num(x)));
            row.extend([e.curl, e.wave, e.wave * e.wave, e.total, e.cumulative].map(num));
            row.extend([e.taylor.eps, e.taylor.cal_e, e.taylor.k, e.taylor.m].map(num));
        }
        None => {
            row.extend((0..r + 6).map(|_| num(f64::NAN)));
            row.extend([s.eps, s.cal_e, f64::NAN, f64::NAN].map(num));
        }
    }
    row.extend([s.physical_energy, s.continuity, s.curl_norm, s.boundary_radius_drift].map(num));
    row
}

fn snapshot_container(hash: &str, grid: (usize, usize), s: &Snapshot) -> Container {
    Container {
        attrs: [(HASH_KEY.to_string(), hash.to_string()), ("t".to_string(), num(s.t))].into(),
        grid,
        blocks: vec![
            Block::vector("x", [&s.x[0], &s.x[1]]),
            Block::vector("v", [&s.v[0], &s.v[1]]),
            Block::scalar("h", &s.h),
            Block::scalar("hdot", &s.hdot),
        ],
    }
}

pub fn run(ctx: &mut Context) -> Result<(), Failure> {
    let config = ctx.config.clone();
    let disk = ctx.disk()?;
    let grid = (config.grid.n_r, config.grid.n_theta);
    let path = ctx.out.root.join("data.bin");
    let data = Container::read(&path).map_err(|e| Failure::Io(format!("{}: {e} (run build-data first)", path.display())))?;
    if data.grid != grid {
        return Err(Failure::Config(format!(
            "data.bin was built at {}x{}, the configuration asks for {}x{}",
            data.grid.0, data.grid.1, grid.0, grid.1
        )));
    }
    let eos = family(&config.physics, config.physics.kappa)?;
    let kappa = eos.as_ref().map_or(f64::INFINITY, |e| e.kappa());
    let built_kappa = data.attr("kappa")?;
    if built_kappa != num(kappa) {
        return Err(Failure::Config(format!("data.bin was built for kappa = {built_kappa}, not {}", num(kappa))));
    }
    ctx.notes.insert("data_hash".into(), data.attr(HASH_KEY)?.to_string());

    let v0 = data.block("v0")?;
    let v0 = Field::vector(Frame::Eulerian, [v0.component(0).to_vec(), v0.component(1).to_vec()]);
    let map = LagrangianMap::identity(&disk);
    let integrator = integrator(&config, &disk);
    let opts = run_options(&config, eos.is_some());
    let result = match eos {
        Some(eos) => {
            let h0 = data.block("h0")?.data.clone();
            let h1 = data.block("h1")?.data.clone();
            run_compressible(&integrator, SimState::new(map, v0, h0, h1, eos)?, &opts)?
        }
        None => run_incompressible(&integrator, IncompressibleState::new(map, &v0)?, &opts)?,
    };
    ctx.stages.insert("integrate".into(), result.stats.wall_seconds);
    ctx.notes.insert("steps".into(), result.stats.steps.to_string());
    ctx.notes.insert("dt".into(), num(result.stats.dt));
    ctx.notes.insert("cleanings".into(), result.stats.cleanings.to_string());
    ctx.notes.insert("sign_violation".into(), result.sign_violation.to_string());
    ctx.notes.insert("energy_drift".into(), num(result.energy_drift()));

    let r = config.time.order;
    let mut csv = Csv::create(&ctx.path("energy.csv"), &ctx.hash, &energy_header(r))?;
    for s in &result.samples {
        csv.row(&energy_row(s, r))?;
    }
    csv.finish()?;

    if let Some(last) = result.snapshots.last() {
        snapshot_container(&ctx.hash, grid, last).write(&ctx.path("state.bin"))?;
    }
    if config.output.snapshots {
        fs::create_dir_all(ctx.out.root.join("snapshots"))?;
        for (k, s) in result.snapshots.iter().enumerate() {
            snapshot_container(&ctx.hash, grid, s).write(&ctx.path(&format!("snapshots/t{k:05}.bin")))?;
        }
    }
    Ok(())
}

pub fn sweep(ctx: &mut Context) -> Result<(), Failure> {
    let config = ctx.config.clone();
    if config.physics.eos != EosName::Linear {
        return Err(Failure::Config("sweep runs the linear family only (physics.eos)".into()));
    }
    let disk = ctx.disk()?;
    let u0 = seed_velocity(&config.seed, &disk);
    let opts = SweepOptions {
        run: run_options(&config, true),
        builder: builder_options(&config, u0.sup_norm() == 0.0),
    };
    let rows = kappa_sweep(&integrator(&config, &disk), &u0, &config.physics.kappa_list, &opts)?;

    let header: Vec<String> = [
        "kappa", "status", "velocity_gap", "enthalpy_gap", "flow_map_gap", "velocity_ratio", "enthalpy_ratio",
        "energy_growth", "energy_drift", "builder_iterations", "error",
    ]
    .map(String::from)
    .to_vec();
    let mut csv = Csv::create(&ctx.path("sweep.csv"), &ctx.hash, &header)?;
    let mut previous: Option<(f64, f64)> = None;
    let mut failed = 0;
    for row in &rows {
        let mut line = vec![num(row.kappa)];
        match &row.outcome {
            Ok(c) => {
                line.push("ok".into());
                line.extend([c.velocity_gap, c.enthalpy_gap, c.flow_map_gap].map(num));
                line.push(opt(previous.map(|p| c.velocity_gap / p.0)));
                line.push(opt(previous.map(|p| c.enthalpy_gap / p.1)));
                line.push(opt(c.energy_growth));
                line.push(num(c.energy_drift));
                line.push(c.builder_iterations.to_string());
                line.push(String::new());
                previous = Some((c.velocity_gap, c.enthalpy_gap));
                ctx.stages.insert(format!("kappa={}", num(row.kappa)), c.wall_seconds);
            }
            Err(e) => {
                failed += 1;
                line.push("failed".into());
                line.extend((0..8).map(|_| String::new()));
                line.push(e.clone());
            }
        }
        csv.row(&line)?;
    }
    csv.finish()?;
    if failed > 0 {
        return Err(Failure::Numerical(format!("{failed} of {} sweep rows failed", rows.len())));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct MonitorRow {
    monitor: String,
    geometry: String,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    within: Option<bool>,
}

impl MonitorRow {
    fn new(monitor: &str, geometry: &str, value: f64) -> Self {
        Self {
            monitor: monitor.into(),
            geometry: geometry.into(),
            value,
            reference: None,
            bound: None,
            within: None,
        }
    }

    fn bounded(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self.within = Some(self.value <= bound);
        self
    }

    fn against(mut self, reference: f64, tolerance: f64) -> Self {
        self.reference = Some(reference);
        self.bound = Some(tolerance);
        self.within = Some((self.value - reference).abs() <= tolerance);
        self
    }
}

#[derive(Debug, Serialize)]
struct Monitors {
    config_hash: String,
    resolution: String,
    rows: Vec<MonitorRow>,
}

fn eulerian(map: &LagrangianMap, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let [x1, x2] = map.positions();
    x1.iter().zip(x2).map(|(&a, &b)| f(a, b)).collect()
}

pub fn check(ctx: &mut Context) -> Result<(), Failure> {
    let disk = ctx.disk()?;
    let bend = ctx.config.check.bend;
    let j = bessel_j0_first_zero();
    let mut geometries = vec![("identity", LagrangianMap::identity(&disk))];
    if bend > 0.0 {
        geometries.push(("bent", LagrangianMap::from_fn(&disk, |a, b| [a + bend * a * b, b + 0.5 * bend * a * a])?));
    }
    let nt = disk.n_theta();
    let mut rows = Vec::new();
    for (name, map) in &geometries {
        let cache = GeometryCache::new(map)?;
        // First Dirichlet eigenfunction of the unit disk, pulled back by the labels.
        let mut q = disk.sample(|a, b| bessel_j0(j * a.hypot(b)));
        q[..nt].fill(0.0);
        let p = poincare_check(map, &q)?;
        let ratio = MonitorRow::new("poincare", name, p.ratio_gradient);
        rows.push(if *name == "identity" {
            ratio.against(1.0 / j, 1e-6)
        } else {
            ratio.bounded(p.faber_krahn * (1.0 + 1e-9))
        });
        rows.push(MonitorRow::new("poincare_laplacian", name, p.ratio_laplacian));
        rows.push(MonitorRow::new("faber_krahn", name, p.faber_krahn));

        let u = Field::vector(Frame::Eulerian, [eulerian(map, |a, _| a * a), eulerian(map, |a, b| a * b)]);
        rows.push(MonitorRow::new("hodge", name, hodge_check(&cache, &u, 1, 1.0)?.constant));
        let f = Field::scalar(eulerian(map, |a, b| a.exp() * b.cos()));
        rows.push(MonitorRow::new("trace", name, trace_check(&cache, &f)?));

        let radial = disk.sample(|a, b| 1.0 - a * a - b * b);
        let angular = disk.sample(|a, b| {
            let r = a.hypot(b);
            (1.0 - r * r) * if r > 0.0 { a / r } else { 0.0 }
        });
        rows.push(MonitorRow::new("projection_radial", name, projection_formula_check(&cache, &radial)?).bounded(1e-8));
        rows.push(MonitorRow::new("projection_angular", name, projection_formula_check(&cache, &angular)?).bounded(1e-8));

        let v = Field::vector(Frame::Eulerian, [eulerian(map, |_, b| b * b), eulerian(map, |a, b| a * b + 0.5)]);
        let g = Field::scalar(eulerian(map, |a, b| a * a * a * b + b * b - a));
        for (kind, order, label) in [
            (CommutatorKind::DtGrad, 1, "commutator_dt_grad"),
            (CommutatorKind::DtGradPower, 2, "commutator_dt_grad2"),
            (CommutatorKind::DtGradPower, 3, "commutator_dt_grad3"),
            (CommutatorKind::LaplaceDt, 1, "commutator_laplace_dt"),
        ] {
            let c = commutator_residual(kind, order, map, &v, &g)?;
            rows.push(MonitorRow::new(label, name, c.residual).bounded(1e-9));
        }
    }
    let outside = rows.iter().filter(|r| r.within == Some(false)).count();
    ctx.notes.insert("rows_outside_bounds".into(), outside.to_string());
    let monitors = Monitors {
        config_hash: ctx.hash.clone(),
        resolution: format!("{}x{nt}", disk.n_r()),
        rows,
    };
    crate::output::write_json(&ctx.path("monitors.json"), &monitors)?;
    Ok(())
}
