//! Symbolic expansion of material derivatives.
//!
//! Expressions are integer polynomials in the jet variables `∂^α v^j`,
//! `∂^α D_t^b h` and `e⁽ᵐ⁾(h)`, written in explicit Cartesian components.
//! Eulerian partials commute, so a derivative is a pair of counts
//! `(α₁, α₂)`. The only rewrite rules are
//!
//! * `D_t ∂_i Y = ∂_i D_t Y − (∂_i v^k) ∂_k Y`,
//! * `D_t v^j = −∂_j h`,
//! * `D_t e⁽ᵐ⁾(h) = e⁽ᵐ⁺¹⁾(h) D_t h` and `∂_i e⁽ᵐ⁾(h) = e⁽ᵐ⁺¹⁾(h) ∂_i h`.

use std::collections::HashMap;

use crate::eos::{EosFamily, MAX_DERIVATIVE};
use crate::error::{Error, Result};
use crate::geometry::LagrangianMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    /// `∂₁^{d.0} ∂₂^{d.1} v^component`.
    Velocity { component: u8, d: (u8, u8) },
    /// `∂₁^{d.0} ∂₂^{d.1} D_t^order h`.
    Enthalpy { order: u8, d: (u8, u8) },
    /// `e⁽ᵒʳᵈᵉʳ⁾(h)`.
    Eos { order: u8 },
}

impl Symbol {
    pub fn velocity(component: usize, d: (u8, u8)) -> Self {
        Symbol::Velocity {
            component: component as u8,
            d,
        }
    }

    pub fn enthalpy(order: usize, d: (u8, u8)) -> Self {
        Symbol::Enthalpy { order: order as u8, d }
    }

    /// Total spatial derivative count.
    pub fn derivatives(&self) -> usize {
        match *self {
            Symbol::Velocity { d, .. } | Symbol::Enthalpy { d, .. } => (d.0 + d.1) as usize,
            Symbol::Eos { .. } => 0,
        }
    }
}

fn bump(d: (u8, u8), i: usize) -> (u8, u8) {
    if i == 0 {
        (d.0 + 1, d.1)
    } else {
        (d.0, d.1 + 1)
    }
}

/// A sorted product of symbols.
pub type Monomial = Vec<Symbol>;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polynomial {
    terms: HashMap<Monomial, i64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: i64) -> Self {
        let mut p = Self::zero();
        p.add_term(Vec::new(), c);
        p
    }

    pub fn symbol(s: Symbol) -> Self {
        let mut p = Self::zero();
        p.add_term(vec![s], 1);
        p
    }

    pub fn monomial(mut factors: Vec<Symbol>, c: i64) -> Self {
        factors.sort();
        let mut p = Self::zero();
        p.add_term(factors, c);
        p
    }

    fn add_term(&mut self, m: Monomial, c: i64) {
        use std::collections::hash_map::Entry;
        if c == 0 {
            return;
        }
        match self.terms.entry(m) {
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0 {
                    o.remove();
                }
            }
            Entry::Vacant(v) => {
                v.insert(c);
            }
        }
    }

    pub fn add_assign(&mut self, other: &Polynomial) {
        for (m, c) in &other.terms {
            self.add_term(m.clone(), *c);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in a deterministic order.
    pub fn terms(&self) -> Vec<(&Monomial, i64)> {
        let mut out: Vec<_> = self.terms.iter().map(|(m, c)| (m, *c)).collect();
        out.sort();
        out
    }

    pub fn coefficient(&self, m: &[Symbol]) -> i64 {
        let mut key = m.to_vec();
        key.sort();
        self.terms.get(&key).copied().unwrap_or(0)
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn scale(&self, a: i64) -> Polynomial {
        let mut out = Self::zero();
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c * a);
        }
        out
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(-1))
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = Self::zero();
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                let mut m = a.clone();
                m.extend_from_slice(b);
                m.sort();
                out.add_term(m, ca * cb);
            }
        }
        out
    }

    /// Splits off the terms containing `s`, returning `(with, without)`.
    pub fn split_on(&self, s: Symbol) -> (Polynomial, Polynomial) {
        let mut with = Self::zero();
        let mut without = Self::zero();
        for (m, c) in &self.terms {
            if m.contains(&s) {
                with.add_term(m.clone(), *c);
            } else {
                without.add_term(m.clone(), *c);
            }
        }
        (with, without)
    }

    /// Every symbol that occurs.
    pub fn symbols(&self) -> Vec<Symbol> {
        let mut out: Vec<Symbol> = self.terms.keys().flatten().copied().collect();
        out.sort();
        out.dedup();
        out
    }

    /// Highest `D_t` order of `h` that occurs.
    pub fn max_enthalpy_order(&self) -> Option<usize> {
        self.symbols()
            .iter()
            .filter_map(|s| match s {
                Symbol::Enthalpy { order, .. } => Some(*order as usize),
                _ => None,
            })
            .max()
    }
}

/// Derivative rules with memoized single-symbol results.
#[derive(Debug, Default)]
pub struct Engine {
    time: HashMap<Symbol, Polynomial>,
}

impl Engine {
    pub fn new() -> Self {
        Self::default()
    }

    /// `∂_i s`.
    pub fn partial_symbol(s: Symbol, i: usize) -> Polynomial {
        match s {
            Symbol::Velocity { component, d } => Polynomial::symbol(Symbol::Velocity {
                component,
                d: bump(d, i),
            }),
            Symbol::Enthalpy { order, d } => Polynomial::symbol(Symbol::Enthalpy { order, d: bump(d, i) }),
            Symbol::Eos { order } => Polynomial::monomial(
                vec![Symbol::Eos { order: order + 1 }, Symbol::enthalpy(0, bump((0, 0), i))],
                1,
            ),
        }
    }

    /// `D_t s`.
    pub fn time_symbol(&mut self, s: Symbol) -> Polynomial {
        if let Some(p) = self.time.get(&s) {
            return p.clone();
        }
        let out = match s {
            Symbol::Eos { order } => Polynomial::monomial(vec![Symbol::Eos { order: order + 1 }, Symbol::enthalpy(1, (0, 0))], 1),
            Symbol::Velocity { component, d: (0, 0) } => {
                Polynomial::monomial(vec![Symbol::enthalpy(0, bump((0, 0), component as usize))], -1)
            }
            Symbol::Enthalpy { order, d: (0, 0) } => Polynomial::symbol(Symbol::Enthalpy { order: order + 1, d: (0, 0) }),
            Symbol::Velocity { d, .. } | Symbol::Enthalpy { d, .. } => {
                // Peel one derivative: s = ∂_i y.
                let i = if d.0 > 0 { 0 } else { 1 };
                let lower = if i == 0 { (d.0 - 1, d.1) } else { (d.0, d.1 - 1) };
                let y = match s {
                    Symbol::Velocity { component, .. } => Symbol::Velocity { component, d: lower },
                    Symbol::Enthalpy { order, .. } => Symbol::Enthalpy { order, d: lower },
                    Symbol::Eos { .. } => unreachable!(),
                };
                let dty = self.time_symbol(y);
                let mut out = Self::partial(&dty, i);
                for k in 0..2 {
                    let dvi = Symbol::velocity(k, bump((0, 0), i));
                    let dky = Self::partial_symbol(y, k);
                    out.add_assign(&Polynomial::symbol(dvi).mul(&dky).scale(-1));
                }
                out
            }
        };
        self.time.insert(s, out.clone());
        out
    }

    fn leibniz(p: &Polynomial, mut rule: impl FnMut(Symbol) -> Polynomial) -> Polynomial {
        let mut out = Polynomial::zero();
        for (m, c) in p.terms() {
            for pos in 0..m.len() {
                let mut rest = m.clone();
                let s = rest.remove(pos);
                let d = rule(s);
                out.add_assign(&d.mul(&Polynomial::monomial(rest, c)));
            }
        }
        out
    }

    /// `∂_i p`.
    pub fn partial(p: &Polynomial, i: usize) -> Polynomial {
        Self::leibniz(p, |s| Self::partial_symbol(s, i))
    }

    /// `D_t p`.
    pub fn time(&mut self, p: &Polynomial) -> Polynomial {
        let mut cache: Vec<(Symbol, Polynomial)> = Vec::new();
        for s in p.symbols() {
            let d = self.time_symbol(s);
            cache.push((s, d));
        }
        Self::leibniz(p, |s| cache.iter().find(|(t, _)| *t == s).map(|(_, d)| d.clone()).unwrap_or_default())
    }

    /// `D_t^k p`.
    pub fn time_power(&mut self, p: &Polynomial, k: usize) -> Polynomial {
        let mut out = p.clone();
        for _ in 0..k {
            out = self.time(&out);
        }
        out
    }
}

/// `div v = ∂₁v¹ + ∂₂v²`.
pub fn divergence() -> Polynomial {
    Polynomial::symbol(Symbol::velocity(0, (1, 0))).add(&Polynomial::symbol(Symbol::velocity(1, (0, 1))))
}

/// `(∂_i v^j)(∂_j v^i)`.
pub fn velocity_gradient_square() -> Polynomial {
    let mut out = Polynomial::zero();
    for i in 0..2 {
        for j in 0..2 {
            let a = Symbol::velocity(j, bump((0, 0), i));
            let b = Symbol::velocity(i, bump((0, 0), j));
            out = out.add(&Polynomial::monomial(vec![a, b], 1));
        }
    }
    out
}

/// `Δ D_t^k h`.
pub fn laplacian_of_enthalpy(k: usize) -> Polynomial {
    Polynomial::symbol(Symbol::enthalpy(k, (2, 0))).add(&Polynomial::symbol(Symbol::enthalpy(k, (0, 2))))
}

/// The continuity equation `e'(h) D_t h + div v = 0` as a polynomial.
pub fn continuity() -> Polynomial {
    Polynomial::monomial(vec![Symbol::Eos { order: 1 }, Symbol::enthalpy(1, (0, 0))], 1).add(&divergence())
}

/// `D_t^k` of the continuity equation, split as `e'(h) D_t^{k+1} h + R_k`.
/// Returns `R_k`.
pub fn wave_remainder(engine: &mut Engine, k: usize) -> Polynomial {
    let full = engine.time_power(&continuity(), k);
    let top = Symbol::enthalpy(k + 1, (0, 0));
    let (with, without) = full.split_on(top);
    debug_assert_eq!(with.len(), 1);
    debug_assert_eq!(with.coefficient(&[Symbol::Eos { order: 1 }, top]), 1);
    without
}

/// `F_k = D_t^k(∂v·∂v) + D_t^kΔh − ΔD_t^kh`, computed as
/// `−D_t^{k+1} div v − ΔD_t^k h`.
pub fn forcing(engine: &mut Engine, k: usize) -> Polynomial {
    let dt = engine.time_power(&divergence(), k + 1);
    dt.scale(-1).sub(&laplacian_of_enthalpy(k))
}

/// `D_t^k v^j`.
pub fn velocity_time_derivative(engine: &mut Engine, component: usize, k: usize) -> Polynomial {
    engine.time_power(&Polynomial::symbol(Symbol::velocity(component, (0, 0))), k)
}

/// Numerical values of the jet variables on a grid, with memoized
/// derivatives.
pub struct JetEvaluator<'a> {
    map: &'a LagrangianMap,
    velocity: [Vec<f64>; 2],
    enthalpy: Vec<Vec<f64>>,
    eos: Vec<Vec<f64>>,
    cache: HashMap<Symbol, Vec<f64>>,
}

impl<'a> JetEvaluator<'a> {
    /// `enthalpy[b]` holds `D_t^b h`; `eos` supplies `e⁽ᵐ⁾` at `h = enthalpy[0]`.
    pub fn new(map: &'a LagrangianMap, velocity: [Vec<f64>; 2], enthalpy: Vec<Vec<f64>>, eos: &EosFamily) -> Self {
        let h0 = enthalpy.first().cloned().unwrap_or_else(|| vec![0.0; map.disk().len()]);
        let table = (0..=MAX_DERIVATIVE + 2)
            .map(|m| h0.iter().map(|&h| eos.derivative(m, h)).collect())
            .collect();
        Self {
            map,
            velocity,
            enthalpy,
            eos: table,
            cache: HashMap::new(),
        }
    }

    /// Appends `D_t^{b} h` for the next order `b`.
    pub fn push_enthalpy(&mut self, values: Vec<f64>) {
        self.enthalpy.push(values);
    }

    pub fn enthalpy_orders(&self) -> usize {
        self.enthalpy.len()
    }

    fn value(&mut self, s: Symbol) -> Result<Vec<f64>> {
        if let Some(v) = self.cache.get(&s) {
            return Ok(v.clone());
        }
        let out = match s {
            Symbol::Eos { order } => self.eos.get(order as usize).cloned().unwrap_or_else(|| vec![0.0; self.map.disk().len()]),
            Symbol::Velocity { component, d: (0, 0) } => self.velocity[component as usize].clone(),
            Symbol::Enthalpy { order, d: (0, 0) } => self
                .enthalpy
                .get(order as usize)
                .cloned()
                .ok_or_else(|| Error::MissingField(format!("D_t^{order} h")))?,
            Symbol::Velocity { d, .. } | Symbol::Enthalpy { d, .. } => {
                let (lower, i) = if d.1 > 0 { ((d.0, d.1 - 1), 1) } else { ((d.0 - 1, d.1), 0) };
                let y = match s {
                    Symbol::Velocity { component, .. } => Symbol::Velocity { component, d: lower },
                    Symbol::Enthalpy { order, .. } => Symbol::Enthalpy { order, d: lower },
                    Symbol::Eos { .. } => unreachable!(),
                };
                let base = self.value(y)?;
                let [g1, g2] = self.map.grad(&base);
                if i == 0 {
                    g1
                } else {
                    g2
                }
            }
        };
        self.cache.insert(s, out.clone());
        Ok(out)
    }

    pub fn evaluate(&mut self, p: &Polynomial) -> Result<Vec<f64>> {
        Ok(self.evaluate_with_magnitude(p)?.0)
    }

    /// The value and the pointwise sum of absolute term values, which
    /// bounds the cancellation in the value.
    pub fn evaluate_with_magnitude(&mut self, p: &Polynomial) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.map.disk().len();
        let mut out = vec![0.0; n];
        let mut magnitude = vec![0.0; n];
        for (m, c) in p.terms() {
            let mut prod = vec![c as f64; n];
            for &s in m {
                let v = self.value(s)?;
                prod.iter_mut().zip(&v).for_each(|(a, b)| *a *= b);
            }
            out.iter_mut().zip(&prod).for_each(|(a, b)| *a += b);
            magnitude.iter_mut().zip(&prod).for_each(|(a, b)| *a += b.abs());
        }
        Ok((out, magnitude))
    }
}
