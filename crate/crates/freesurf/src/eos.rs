//! Sound-speed parametrized equations of state in enthalpy form,
//! `e(h) = ln ρ(h)`.

use crate::error::{Error, Result};

/// Highest derivative of `e` that is ever evaluated.
pub const MAX_DERIVATIVE: usize = 6;

#[derive(Clone, Debug, PartialEq)]
enum Law {
    /// `e(h) = h/κ`.
    Linear { kappa: f64 },
    /// `e(h) = Σ_k c_k h^k / k!` from the derivative table `c_k = e⁽ᵏ⁾(0)`.
    Table { derivatives: [f64; MAX_DERIVATIVE] },
    /// `e ≡ 0`, the incompressible member.
    Incompressible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EosFamily {
    law: Law,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl EosFamily {
    /// `e(h) = h/κ`, `ρ = exp(h/κ)`.
    pub fn linear(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::NonpositiveKappa(kappa));
        }
        Ok(Self {
            law: Law::Linear { kappa },
        })
    }

    /// Family given by the values `e⁽ᵏ⁾(0)`, `k = 1..=6`.
    pub fn from_derivative_table(derivatives: [f64; MAX_DERIVATIVE]) -> Result<Self> {
        if !(derivatives[0] > 0.0) {
            return Err(Error::UnsupportedEos("e'(0) must be positive".into()));
        }
        if derivatives.iter().any(|d| !d.is_finite()) {
            return Err(Error::UnsupportedEos("non-finite derivative".into()));
        }
        Ok(Self {
            law: Law::Table { derivatives },
        })
    }

    pub fn incompressible() -> Self {
        Self {
            law: Law::Incompressible,
        }
    }

    pub fn is_incompressible(&self) -> bool {
        matches!(self.law, Law::Incompressible)
    }

    /// `κ = p'(1) = 1/e'(0)`; infinite for the incompressible member.
    pub fn kappa(&self) -> f64 {
        match &self.law {
            Law::Linear { kappa } => *kappa,
            Law::Table { derivatives } => 1.0 / derivatives[0],
            Law::Incompressible => f64::INFINITY,
        }
    }

    /// Largest `k` with `e⁽ᵏ⁾` not identically zero.
    pub fn max_nonzero_order(&self) -> usize {
        match &self.law {
            Law::Linear { .. } => 1,
            Law::Table { derivatives } => derivatives.iter().rposition(|&d| d != 0.0).map_or(0, |p| p + 1),
            Law::Incompressible => 0,
        }
    }

    /// `e⁽ᵏ⁾(h)`, with `k = 0` giving `e(h)`.
    pub fn derivative(&self, k: usize, h: f64) -> f64 {
        match &self.law {
            Law::Linear { kappa } => match k {
                0 => h / kappa,
                1 => 1.0 / kappa,
                _ => 0.0,
            },
            Law::Table { derivatives } => {
                // Taylor polynomial of degree 6 about h = 0.
                let mut s = 0.0;
                for j in k.max(1)..=MAX_DERIVATIVE {
                    let p = j - k;
                    s += derivatives[j - 1] * h.powi(p as i32) / factorial(p);
                }
                s
            }
            Law::Incompressible => 0.0,
        }
    }

    pub fn e(&self, h: f64) -> f64 {
        self.derivative(0, h)
    }

    pub fn de(&self, h: f64) -> f64 {
        self.derivative(1, h)
    }

    /// `ρ(h) = exp(e(h))`.
    pub fn density(&self, h: f64) -> f64 {
        self.e(h).exp()
    }

    /// Inverse of [`density`](Self::density).
    pub fn enthalpy_from_density(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0) {
            return Err(Error::InvalidInput(format!("density {rho} must be positive")));
        }
        let target = rho.ln();
        match &self.law {
            Law::Linear { kappa } => Ok(kappa * target),
            Law::Incompressible => Err(Error::DegenerateEos),
            Law::Table { .. } => {
                let mut h = target * self.kappa();
                for _ in 0..100 {
                    let f = self.e(h) - target;
                    let d = self.de(h);
                    if d <= 0.0 {
                        return Err(Error::DegenerateEos);
                    }
                    let step = f / d;
                    h -= step;
                    if step.abs() <= 1e-15 * (1.0 + h.abs()) {
                        return Ok(h);
                    }
                }
                Ok(h)
            }
        }
    }

    /// Pressure `p(h) = ∫₀ʰ ρ(s) ds`, normalized by `p = 0` at `ρ = 1`.
    pub fn pressure(&self, h: f64) -> f64 {
        match &self.law {
            Law::Linear { kappa } => kappa * (h / kappa).exp_m1(),
            Law::Incompressible => h,
            Law::Table { .. } => gauss_legendre(0.0, h, |s| self.density(s)),
        }
    }

    /// Internal energy density `ρ Q(ρ)` with `Q(ρ) = ∫₁^ρ p(λ) λ⁻² dλ`.
    pub fn internal_energy(&self, h: f64) -> f64 {
        match &self.law {
            Law::Linear { kappa } => {
                // κ[ρ ln ρ − ρ + 1] with u = h/κ.
                let u = h / kappa;
                let phi = if u.abs() < 0.5 {
                    let mut term = u;
                    let mut s = 0.0;
                    for n in 2..40 {
                        term *= u / n as f64;
                        s += (n - 1) as f64 * term;
                        if term.abs() < 1e-18 * s.abs() {
                            break;
                        }
                    }
                    s
                } else {
                    (u - 1.0) * u.exp() + 1.0
                };
                kappa * phi
            }
            Law::Incompressible => 0.0,
            Law::Table { .. } => {
                // Q = ∫₀ʰ p(s) e'(s) / ρ(s) ds in the enthalpy variable.
                let q = gauss_legendre(0.0, h, |s| self.pressure(s) * self.de(s) / self.density(s));
                self.density(h) * q
            }
        }
    }
}

/// Composite 8-point Gauss-Legendre rule on 16 panels.
fn gauss_legendre(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    const X: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
    const W: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];
    let panels = 16;
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (x, w) in X.iter().zip(&W) {
            s += w * (f(mid + 0.5 * h * x) + f(mid - 0.5 * h * x));
        }
    }
    0.5 * h * s
}

/// Outcome of [`verify_structural_conditions`].
#[derive(Clone, Debug, PartialEq)]
pub struct StructuralReport {
    pub pass: bool,
    /// Largest of `|e⁽ᵏ⁾|/c₀` and `|e⁽ᵏ⁾|/(c₀√e')` over the samples.
    pub worst_ratio: f64,
    pub worst_order: usize,
    pub worst_h: f64,
}

/// Checks `|e⁽ᵏ⁾(h)| ≤ c₀` and `|e⁽ᵏ⁾(h)| ≤ c₀√e'(h)`, `1 ≤ k ≤ 6`, on
/// `samples` evenly spaced points of `[0, h_max]`.
pub fn verify_structural_conditions(fam: &EosFamily, c0: f64, h_max: f64, samples: usize) -> StructuralReport {
    let mut report = StructuralReport {
        pass: true,
        worst_ratio: 0.0,
        worst_order: 0,
        worst_h: 0.0,
    };
    let samples = samples.max(1);
    for s in 0..samples {
        let h = if samples == 1 { 0.0 } else { h_max * s as f64 / (samples - 1) as f64 };
        let sqrt_de = fam.de(h).max(0.0).sqrt();
        for k in 1..=MAX_DERIVATIVE {
            let d = fam.derivative(k, h).abs();
            if d == 0.0 {
                continue;
            }
            let plain = d / c0;
            let weighted = if sqrt_de > 0.0 { d / (c0 * sqrt_de) } else { f64::INFINITY };
            let ratio = plain.max(weighted);
            if ratio > report.worst_ratio {
                report.worst_ratio = ratio;
                report.worst_order = k;
                report.worst_h = h;
            }
        }
    }
    report.pass = report.worst_ratio <= 1.0;
    report
}
