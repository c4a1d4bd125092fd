//! Energy functionals, derived time derivatives and a priori monitors.

use crate::calculus::{div_curl, gradient, gradient_power};
use crate::error::{Error, Result};
use crate::field::{Field, Frame};
use crate::geometry::GeometryCache;
use crate::state::SimState;
use crate::symbolic::{velocity_time_derivative, wave_remainder, Engine, JetEvaluator};

/// Highest energy order with full structural support.
pub const MAX_ORDER: usize = 4;

/// Relative spectral tail above which a derived field is rejected.
pub const TAIL_LIMIT: f64 = 0.1;

/// `h_k = D_t^k h` for `k ≤ r + 1` and `v_k = D_t^k v` for `k ≤ r`.
#[derive(Clone, Debug)]
pub struct DerivedTimeFields {
    pub h: Vec<Vec<f64>>,
    pub v: Vec<Field>,
}

impl DerivedTimeFields {
    /// The `r` these fields were derived for.
    pub fn order(&self) -> usize {
        self.v.len() - 1
    }
}

fn sup(f: &[f64]) -> f64 {
    f.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Fields below `1e-8` of the size of the terms they were summed from are
/// cancellation noise and are not checked.
fn check_tail(state: &SimState, name: String, f: &[f64], scale: f64) -> Result<()> {
    if sup(f) <= 1e-8 * scale {
        return Ok(());
    }
    let tail = state.map.disk().spectral_tail(f);
    if tail > TAIL_LIMIT {
        return Err(Error::ResolutionInsufficient { field: name, tail });
    }
    Ok(())
}

/// Time derivatives computed from the equations: `h_{k+1}` from `D_t^k` of
/// the continuity equation and `v_k` from `D_t^{k-1}` of `D_t v = −∂h`.
pub fn derive_time_fields(state: &SimState, r: usize) -> Result<DerivedTimeFields> {
    if r > MAX_ORDER {
        return Err(Error::InvalidInput(format!("energy order {r} exceeds {MAX_ORDER}")));
    }
    if r >= 1 && state.eos.is_incompressible() {
        return Err(Error::DegenerateEos);
    }
    let mut engine = Engine::new();
    let mut jets = JetEvaluator::new(
        &state.map,
        state.velocity_components(),
        vec![state.h.clone(), state.hdot.clone()],
        &state.eos,
    );
    let de: Vec<f64> = state.h.iter().map(|&h| state.eos.de(h)).collect();
    let mut h = vec![state.h.clone(), state.hdot.clone()];
    for k in 1..=r {
        let (rest, size) = jets.evaluate_with_magnitude(&wave_remainder(&mut engine, k))?;
        let next: Vec<f64> = rest.iter().zip(&de).map(|(a, d)| -a / d).collect();
        let scale = size.iter().zip(&de).map(|(a, d)| a / d).fold(0.0, f64::max);
        check_tail(state, format!("D_t^{} h", k + 1), &next, scale)?;
        jets.push_enthalpy(next.clone());
        h.push(next);
    }
    let mut v = vec![state.v.clone()];
    for k in 1..=r {
        let mut comps = Vec::with_capacity(2);
        for j in 0..2 {
            let (c, size) = jets.evaluate_with_magnitude(&velocity_time_derivative(&mut engine, j, k))?;
            check_tail(state, format!("D_t^{k} v"), &c, sup(&size))?;
            comps.push(c);
        }
        v.push(Field::from_components(1, Frame::Eulerian, comps)?);
    }
    Ok(DerivedTimeFields { h, v })
}

/// Contracts the first `slots` indices of `t` with `q^{ij}`.
fn apply_q(cache: &GeometryCache, t: &Field, slots: usize) -> Field {
    let r = t.rank();
    let n = t.nodes();
    let mut out = t.clone();
    for slot in 0..slots.min(r) {
        let mut next = Field::zeros(r, t.frame(), n);
        for c in 0..t.n_components() {
            let idx = Field::unflat(r, c);
            let acc = next.component_mut(c);
            for b in 0..2 {
                let mut jdx = idx.clone();
                jdx[slot] = b;
                let src = out.component(Field::flat(&jdx));
                let q = &cache.q[2 * idx[slot] + b];
                for k in 0..n {
                    acc[k] += q[k] * src[k];
                }
            }
        }
        out = next;
    }
    out
}

/// `Q(α, β) = q^{i₁j₁}⋯q^{i_rj_r} α_{i₁…i_r} β_{j₁…j_r}` at every node.
pub fn q_inner(cache: &GeometryCache, a: &Field, b: &Field) -> Result<Vec<f64>> {
    if a.rank() != b.rank() {
        return Err(Error::RankMismatch {
            expected: a.rank(),
            found: b.rank(),
        });
    }
    apply_q(cache, a, a.rank()).pointwise_dot(b)
}

/// Taylor sign quantities and the a priori `L^∞` monitors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaylorReport {
    /// `min_∂Ω(−∇_N h)`.
    pub eps: f64,
    /// `max_∂Ω(−∇_N h)⁻¹`; infinite when `eps ≤ 0`.
    pub cal_e: f64,
    pub sign_ok: bool,
    /// `max|θ| + 1/l₀`.
    pub k: f64,
    /// Largest of `|∂v|, |∂h|, |∂²h|, |∂D_t h|, |D_t h|, |D_t²h|, |ρ|`.
    pub m: f64,
}

/// `h2` is `D_t²h` when available; it is left out of `M` otherwise.
pub fn taylor_and_apriori(state: &SimState, cache: &GeometryCache, h2: Option<&[f64]>) -> Result<TaylorReport> {
    let map = &state.map;
    let dn = cache.normal_derivative(&state.h);
    let eps = dn.iter().map(|x| -x).fold(f64::INFINITY, f64::min);
    let cal_e = if eps > 0.0 { 1.0 / eps } else { f64::INFINITY };
    let dv = gradient(map, &state.v)?;
    let hf = Field::scalar(state.h.clone());
    let dh = gradient(map, &hf)?;
    let ddh = gradient(map, &dh)?;
    let dh1 = gradient(map, &Field::scalar(state.hdot.clone()))?;
    let rho_max = state.h.iter().map(|&h| state.eos.density(h)).fold(0.0, f64::max);
    let mut m = dv.sup_norm().max(dh.sup_norm()).max(ddh.sup_norm()).max(dh1.sup_norm());
    m = m.max(sup(&state.hdot)).max(rho_max);
    if let Some(h2) = h2 {
        m = m.max(sup(h2));
    }
    Ok(TaylorReport {
        eps,
        cal_e,
        sign_ok: eps > 0.0,
        k: cache.geometry_monitor(),
        m,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyOptions {
    /// Smallest admissible `min_∂Ω(−∇_N h)` for `r ≥ 1`.
    pub eps_min: f64,
}

impl Default for EnergyOptions {
    fn default() -> Self {
        Self { eps_min: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    pub order: usize,
    /// `E_{r−k,k}` indexed by `k`.
    pub e_sk: Vec<f64>,
    /// `K_r`.
    pub curl: f64,
    /// `W_{r+1}`.
    pub wave: f64,
    /// `W̃_{r+1}`.
    pub wave_tilde: f64,
    /// `E_r`.
    pub total: f64,
    /// `E_0, …, E_r`.
    pub levels: Vec<f64>,
    /// `E_r* = Σ_{r' ≤ r} E_{r'}`.
    pub cumulative: f64,
    /// `Ê_r`, dropping `E_{s,k}` with `k ≥ r − 1`.
    pub modified: f64,
    /// `Σ_{r' ≤ r} Ê_{r'}`.
    pub modified_cumulative: f64,
    /// `Ẽ_r = Σ E_{s,k} + K_r + W̃_{r+1}`.
    pub tilde: f64,
    /// `½∫ρ|v|² + ∫ρQ(ρ)`.
    pub physical: f64,
    pub taylor: TaylorReport,
}

struct Pieces<'a> {
    state: &'a SimState,
    cache: &'a GeometryCache,
    derived: &'a DerivedTimeFields,
    rho: Vec<f64>,
    de: Vec<f64>,
    nu: Option<Vec<f64>>,
}

impl Pieces<'_> {
    fn l2(&self, pointwise_sq: &[f64]) -> f64 {
        self.state.map.integrate(pointwise_sq).max(0.0).sqrt()
    }

    fn e_sk(&self, s: usize, k: usize) -> Result<f64> {
        let map = &self.state.map;
        let nt = map.disk().n_theta();
        let gv = gradient_power(map, &self.derived.v[k], s)?;
        let qv = apply_q(self.cache, &gv, s).pointwise_dot(&gv)?;
        let gh = gradient_power(map, &Field::scalar(self.derived.h[k].clone()), s)?;
        let qh = apply_q(self.cache, &gh, s).pointwise_dot(&gh)?;
        let interior: Vec<f64> = (0..qv.len())
            .map(|p| self.rho[p] * (qv[p] + self.de[p] * qh[p]))
            .collect();
        let mut total = 0.5 * map.integrate(&interior);
        if let Some(nu) = &self.nu {
            let boundary: Vec<f64> = (0..nt).map(|p| self.rho[p] * qh[p] * nu[p]).collect();
            total += 0.5 * self.cache.integrate_boundary(&boundary);
        }
        Ok(total)
    }

    fn curl(&self, r: usize) -> Result<f64> {
        if r == 0 {
            return Ok(0.0);
        }
        let map = &self.state.map;
        let (_, curl) = div_curl(map, &self.state.v)?;
        let g = gradient_power(map, &curl, r - 1)?;
        let sq: Vec<f64> = g.pointwise_norm().iter().zip(&self.rho).map(|(x, p)| p * x * x).collect();
        Ok(map.integrate(&sq))
    }

    /// `(W_{r+1}, W̃_{r+1})`.
    fn wave(&self, r: usize) -> Result<(f64, f64)> {
        let map = &self.state.map;
        let top = &self.derived.h[r + 1];
        let grad = gradient(map, &Field::scalar(self.derived.h[r].clone()))?;
        let g2: Vec<f64> = grad.pointwise_norm().iter().map(|x| x * x).collect();
        let a: Vec<f64> = top.iter().zip(&self.de).map(|(h, d)| d * h * h).collect();
        let b: Vec<f64> = top.iter().zip(&self.de).map(|(h, d)| (d * h).powi(2)).collect();
        let c: Vec<f64> = g2.iter().zip(&self.de).map(|(g, d)| d * g).collect();
        Ok((0.5 * self.l2(&a) + 0.5 * self.l2(&g2), 0.5 * self.l2(&b) + 0.5 * self.l2(&c)))
    }
}

/// `½∫ρ|v|² + ∫ρQ(ρ)`.
pub fn physical_energy(state: &SimState) -> f64 {
    let n = state.h.len();
    let integrand: Vec<f64> = (0..n)
        .map(|p| {
            let h = state.h[p];
            let v2 = state.v.component(0)[p].powi(2) + state.v.component(1)[p].powi(2);
            0.5 * state.eos.density(h) * v2 + state.eos.internal_energy(h)
        })
        .collect();
    state.map.integrate(&integrand)
}

/// Every energy of order `r` at the state.
pub fn energy_total(state: &SimState, cache: &GeometryCache, r: usize, opts: EnergyOptions) -> Result<EnergyReport> {
    let derived = derive_time_fields(state, r)?;
    energy_from_fields(state, cache, &derived, r, opts)
}

/// As [`energy_total`], reusing fields derived for an order `≥ r`.
pub fn energy_from_fields(
    state: &SimState,
    cache: &GeometryCache,
    derived: &DerivedTimeFields,
    r: usize,
    opts: EnergyOptions,
) -> Result<EnergyReport> {
    if derived.order() < r {
        return Err(Error::MissingDerivedFields {
            needed: r,
            available: derived.order(),
        });
    }
    let h2 = derived.h.get(2).map(|v| v.as_slice());
    let taylor = taylor_and_apriori(state, cache, h2)?;
    let nu = if r >= 1 {
        if !(taylor.eps >= opts.eps_min) {
            return Err(Error::SignConditionViolation { eps: taylor.eps });
        }
        let dn = cache.normal_derivative(&state.h);
        Some(dn.iter().map(|x| -1.0 / x).collect())
    } else {
        None
    };
    let pieces = Pieces {
        state,
        cache,
        derived,
        rho: state.h.iter().map(|&h| state.eos.density(h)).collect(),
        de: state.h.iter().map(|&h| state.eos.de(h)).collect(),
        nu,
    };
    let mut levels = Vec::with_capacity(r + 1);
    let mut modified_cumulative = 0.0;
    let mut top = None;
    for level in 0..=r {
        let e_sk = (0..=level).map(|k| pieces.e_sk(level - k, k)).collect::<Result<Vec<_>>>()?;
        let curl = pieces.curl(level)?;
        let (wave, wave_tilde) = pieces.wave(level)?;
        let interior: f64 = e_sk.iter().sum();
        let total = interior + curl + wave * wave;
        let modified: f64 = e_sk.iter().enumerate().filter(|(k, _)| k + 2 <= level).map(|(_, e)| e).sum::<f64>() + curl + wave * wave;
        let tilde = interior + curl + wave_tilde;
        levels.push(total);
        modified_cumulative += modified;
        top = Some((e_sk, curl, wave, wave_tilde, total, modified, tilde));
    }
    let (e_sk, curl, wave, wave_tilde, total, modified, tilde) = top.expect("at least one level");
    Ok(EnergyReport {
        order: r,
        e_sk,
        curl,
        wave,
        wave_tilde,
        total,
        cumulative: levels.iter().sum(),
        levels,
        modified,
        modified_cumulative,
        tilde,
        physical: physical_energy(state),
        taylor,
    })
}

/// Mixed space-time norms of order `r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixedNormReport {
    /// `‖v‖_{r,0}`.
    pub velocity: f64,
    /// `‖h‖_r`.
    pub enthalpy: f64,
    /// `‖h‖_{r,0}`.
    pub enthalpy_spatial: f64,
    /// `⟨⟨h⟩⟩_r`.
    pub enthalpy_boundary: f64,
    /// `‖D_t h‖_r`.
    pub enthalpy_rate: f64,
}

pub fn mixed_norms(state: &SimState, cache: &GeometryCache, derived: &DerivedTimeFields, r: usize) -> Result<MixedNormReport> {
    if derived.order() < r {
        return Err(Error::MissingDerivedFields {
            needed: r,
            available: derived.order(),
        });
    }
    let map = &state.map;
    let nt = map.disk().n_theta();
    let norm = |f: &Field| -> f64 {
        let sq: Vec<f64> = f.pointwise_norm().iter().map(|x| x * x).collect();
        map.integrate(&sq).max(0.0).sqrt()
    };
    let boundary_norm = |f: &Field| -> f64 {
        let sq: Vec<f64> = f.pointwise_norm()[..nt].iter().map(|x| x * x).collect();
        cache.integrate_boundary(&sq).max(0.0).sqrt()
    };
    let de: Vec<f64> = state.h.iter().map(|&h| state.eos.de(h)).collect();
    let weighted = |f: &[f64]| -> f64 {
        let sq: Vec<f64> = f.iter().zip(&de).map(|(x, d)| d * x * x).collect();
        map.integrate(&sq).max(0.0).sqrt()
    };
    let scalar = |k: usize| Field::scalar(derived.h[k].clone());

    let mut velocity = 0.0;
    let mut spatial = 0.0;
    let mut rate = 0.0;
    for k in 0..r {
        let s = r - k;
        velocity += norm(&gradient_power(map, &derived.v[k], s)?);
        spatial += norm(&gradient_power(map, &scalar(k), s)?);
        rate += norm(&gradient_power(map, &scalar(k + 1), s)?);
    }
    let mut boundary = 0.0;
    for k in 0..=r {
        boundary += boundary_norm(&gradient_power(map, &scalar(k), r - k)?);
    }
    Ok(MixedNormReport {
        velocity,
        enthalpy: spatial + weighted(&derived.h[r]),
        enthalpy_spatial: spatial,
        enthalpy_boundary: boundary,
        enthalpy_rate: rate + weighted(&derived.h[r + 1]),
    })
}
