//! Experiment configuration: a TOML file with one table per concern.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MAX_N_R: usize = 65;
pub const MAX_N_THETA: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Zero,
    IrrotationalQuadrupole,
    RigidRotation,
}

/// Polynomial term `c·x₁^i·x₂^j`, written `[i, j, c]`.
pub type Term = (u32, u32, f64);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seed {
    /// Absent together with `u1`, `u2` means the quadrupole.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    /// Scales the quadrupole `(2x₁, −2x₂)`.
    pub amplitude: f64,
    /// Angular velocity of the rigid rotation.
    pub omega: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u1: Option<Vec<Term>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u2: Option<Vec<Term>>,
}

impl Default for Seed {
    fn default() -> Self {
        Self {
            preset: Some(Preset::IrrotationalQuadrupole),
            amplitude: 1.0,
            omega: 1.0,
            u1: None,
            u2: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EosName {
    Linear,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Potential {
    Dirichlet,
    Neumann,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Physics {
    /// Sound speed of `build-data` and `run`; `inf` selects the
    /// incompressible system.
    pub kappa: f64,
    /// Sound speeds of `sweep`.
    pub kappa_list: Vec<f64>,
    pub eos: EosName,
    /// `e⁽ᵏ⁾(0)` for `k = 1..=6`, used when `eos = "custom"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eos_table: Option<Vec<f64>>,
    pub potential: Potential,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            kappa: 1e4,
            kappa_list: vec![1e2, 1e3, 1e4],
            eos: EosName::Linear,
            eos_table: None,
            potential: Potential::Dirichlet,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grid {
    pub n_r: usize,
    pub n_theta: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self { n_r: 33, n_theta: 64 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DtRule {
    Cfl,
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Time {
    pub t_final: f64,
    /// Sample cadence.
    pub sample_interval: f64,
    pub dt_rule: DtRule,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub cfl: f64,
    /// Energy order `r`.
    pub order: usize,
}

impl Default for Time {
    fn default() -> Self {
        Self {
            t_final: 0.2,
            sample_interval: 0.01,
            dt_rule: DtRule::Cfl,
            dt: None,
            cfl: 1.0,
            order: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub elliptic: f64,
    pub builder: f64,
    pub eps_min: f64,
    pub max_iterations: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            elliptic: 1e-10,
            builder: 1e-10,
            eps_min: 1e-6,
            max_iterations: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Check {
    /// Amplitude of the bent test geometry; 0 keeps only the identity.
    pub bend: f64,
}

impl Default for Check {
    fn default() -> Self {
        Self { bend: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub dir: String,
    /// Write every sampled state of `run` to `snapshots/`.
    pub snapshots: bool,
}

impl Default for Output {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            snapshots: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: Seed,
    pub physics: Physics,
    pub grid: Grid,
    pub time: Time,
    pub tolerances: Tolerances,
    pub check: Check,
    pub output: Output,
}

/// A configuration problem, located by dotted key and, when the file
/// mentions the key, by line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub file: Option<String>,
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: &str, message: impl Into<String>) -> Self {
        Self {
            file: None,
            key: Some(key.into()),
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(file) = &self.file {
            write!(f, "{file}: ")?;
        }
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "key `{key}`: ")?;
        }
        f.write_str(&self.message)
    }
}

/// Line of `key = ...` inside `[section]`, 1-based.
fn locate(source: &str, dotted: &str) -> Option<usize> {
    let (section, key) = dotted.split_once('.')?;
    let mut current = "";
    for (n, line) in source.lines().enumerate() {
        let line = line.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim();
        } else if current == section && line.split('=').next().map(str::trim) == Some(key) {
            return Some(n + 1);
        }
    }
    None
}

impl ExperimentConfig {
    pub fn parse(source: &str) -> Result<Self, ConfigError> {
        let mut config: Self = toml::from_str(source).map_err(|e| {
            let line = e.span().map(|s| source[..s.start].matches('\n').count() + 1);
            ConfigError {
                file: None,
                key: None,
                line,
                message: e.to_string().trim_end().to_string(),
            }
        })?;
        if config.seed.u1.is_none() && config.seed.u2.is_none() {
            config.seed.preset.get_or_insert(Preset::IrrotationalQuadrupole);
        }
        config.validate().map_err(|mut e| {
            e.line = e.key.as_deref().and_then(|k| locate(source, k));
            e
        })?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|e| ConfigError {
            file: Some(path.display().to_string()),
            key: None,
            line: None,
            message: format!("cannot read: {e}"),
        })?;
        Self::parse(&source).map_err(|mut e| {
            e.file = Some(path.display().to_string());
            e
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let seed = &self.seed;
        let coefficients = seed.u1.is_some() || seed.u2.is_some();
        if seed.preset.is_some() == coefficients {
            return Err(ConfigError::new("seed.preset", "give exactly one of a preset or the coefficient lists u1, u2"));
        }
        for (key, terms) in [("seed.u1", &seed.u1), ("seed.u2", &seed.u2)] {
            if terms.iter().flatten().any(|t| !t.2.is_finite() || t.0 + t.1 > 8) {
                return Err(ConfigError::new(key, "terms are [i, j, c] with finite c and degree i + j ≤ 8"));
            }
        }
        if !seed.amplitude.is_finite() || !seed.omega.is_finite() {
            return Err(ConfigError::new("seed.amplitude", "seed parameters must be finite"));
        }

        let physics = &self.physics;
        if !(physics.kappa > 0.0) {
            return Err(ConfigError::new("physics.kappa", format!("must be positive or inf, got {}", physics.kappa)));
        }
        if physics.kappa_list.is_empty() || physics.kappa_list.iter().any(|k| !(*k > 0.0)) {
            return Err(ConfigError::new("physics.kappa_list", "needs at least one positive value"));
        }
        match (physics.eos, &physics.eos_table) {
            (EosName::Custom, Some(t)) if t.len() == freesurf::eos::MAX_DERIVATIVE => {}
            (EosName::Custom, _) => {
                return Err(ConfigError::new(
                    "physics.eos_table",
                    format!("custom families need {} derivatives e'(0) .. e^(6)(0)", freesurf::eos::MAX_DERIVATIVE),
                ))
            }
            (EosName::Linear, Some(_)) => return Err(ConfigError::new("physics.eos_table", "only used with eos = \"custom\"")),
            (EosName::Linear, None) => {}
        }

        let grid = &self.grid;
        if !(9..=MAX_N_R).contains(&grid.n_r) {
            return Err(ConfigError::new("grid.n_r", format!("must lie in 9..={MAX_N_R}, got {}", grid.n_r)));
        }
        if !(8..=MAX_N_THETA).contains(&grid.n_theta) || grid.n_theta % 2 != 0 {
            return Err(ConfigError::new(
                "grid.n_theta",
                format!("must be even and lie in 8..={MAX_N_THETA}, got {}", grid.n_theta),
            ));
        }

        let time = &self.time;
        if !(time.t_final >= 0.0 && time.t_final.is_finite()) {
            return Err(ConfigError::new("time.t_final", "must be finite and non-negative"));
        }
        if !(time.sample_interval > 0.0) {
            return Err(ConfigError::new("time.sample_interval", "must be positive"));
        }
        let samples = (time.t_final / time.sample_interval).round();
        if (samples * time.sample_interval - time.t_final).abs() > 1e-9 * time.t_final.max(1.0) {
            return Err(ConfigError::new("time.t_final", "must be a whole number of sample intervals"));
        }
        match (time.dt_rule, time.dt) {
            (DtRule::Fixed, Some(dt)) if dt > 0.0 && dt.is_finite() => {}
            (DtRule::Fixed, _) => return Err(ConfigError::new("time.dt", "dt_rule = \"fixed\" needs a positive dt")),
            (DtRule::Cfl, Some(_)) => return Err(ConfigError::new("time.dt", "dt is only read with dt_rule = \"fixed\"")),
            (DtRule::Cfl, None) => {}
        }
        if !(time.cfl > 0.0 && time.cfl <= 2.8) {
            return Err(ConfigError::new("time.cfl", format!("must lie in (0, 2.8], got {}", time.cfl)));
        }
        if time.order > 3 {
            return Err(ConfigError::new("time.order", format!("energy order must be at most 3, got {}", time.order)));
        }

        let tol = &self.tolerances;
        if !(tol.elliptic > 1e-14 && tol.elliptic < 1e-4) {
            return Err(ConfigError::new("tolerances.elliptic", format!("must lie in (1e-14, 1e-4), got {}", tol.elliptic)));
        }
        if !(tol.builder > 1e-12 && tol.builder < 1e-6) {
            return Err(ConfigError::new("tolerances.builder", format!("must lie in (1e-12, 1e-6), got {}", tol.builder)));
        }
        if !(tol.eps_min > 0.0 && tol.eps_min < 1.0) {
            return Err(ConfigError::new("tolerances.eps_min", format!("must lie in (0, 1), got {}", tol.eps_min)));
        }
        if !(1..=200).contains(&tol.max_iterations) {
            return Err(ConfigError::new("tolerances.max_iterations", "must lie in 1..=200"));
        }
        if !(0.0..=0.3).contains(&self.check.bend) {
            return Err(ConfigError::new("check.bend", "must lie in [0, 0.3] to keep the map invertible"));
        }
        if self.output.dir.is_empty() {
            return Err(ConfigError::new("output.dir", "must not be empty"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML form. The output directory is left
    /// out, so the same experiment hashes alike wherever it is written.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.dir.clear();
        let text = toml::to_string(&canonical).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `"1e2,1e3,inf"`.
pub fn parse_kappa_list(s: &str) -> Result<Vec<f64>, ConfigError> {
    s.split(',')
        .map(|k| {
            let k = k.trim();
            k.parse::<f64>()
                .ok()
                .filter(|k| *k > 0.0)
                .ok_or_else(|| ConfigError::new("--kappa", format!("`{k}` is not a positive number or inf")))
        })
        .collect()
}

/// `"33x64"`.
pub fn parse_resolution(s: &str) -> Result<(usize, usize), ConfigError> {
    s.split_once('x')
        .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
        .ok_or_else(|| ConfigError::new("--resolution", format!("expected NRxNT, got `{s}`")))
}
