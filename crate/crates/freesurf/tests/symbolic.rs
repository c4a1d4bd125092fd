mod common;

use freesurf::eos::EosFamily;
use freesurf::error::Error;
use freesurf::geometry::LagrangianMap;
use freesurf::grid::ReferenceDisk;
use freesurf::symbolic::{
    continuity, divergence, forcing, laplacian_of_enthalpy, velocity_gradient_square, velocity_time_derivative,
    wave_remainder, Engine, JetEvaluator, Polynomial, Symbol,
};
use proptest::prelude::*;

use common::{max_abs, max_diff, quadrupole};

fn p(s: Symbol) -> Polynomial {
    Polynomial::symbol(s)
}

fn mentions_velocity(poly: &Polynomial) -> bool {
    poly.terms()
        .iter()
        .all(|(m, _)| m.iter().any(|s| matches!(s, Symbol::Velocity { .. })))
}

#[test]
fn basic_rules() {
    let mut e = Engine::new();
    let h1 = Symbol::enthalpy(0, (1, 0));
    let v = velocity_time_derivative(&mut e, 0, 1);
    assert_eq!(v, Polynomial::monomial(vec![h1], -1));

    // D_t ∂₁h = ∂₁D_t h − (∂₁v¹)∂₁h − (∂₁v²)∂₂h.
    let got = e.time(&p(h1));
    let mut expected = p(Symbol::enthalpy(1, (1, 0)));
    expected.add_assign(&Polynomial::monomial(vec![Symbol::velocity(0, (1, 0)), h1], -1));
    expected.add_assign(&Polynomial::monomial(vec![Symbol::velocity(1, (1, 0)), Symbol::enthalpy(0, (0, 1))], -1));
    assert_eq!(got, expected);

    let eos = p(Symbol::Eos { order: 1 });
    assert_eq!(
        e.time(&eos),
        Polynomial::monomial(vec![Symbol::Eos { order: 2 }, Symbol::enthalpy(1, (0, 0))], 1)
    );
    assert_eq!(
        Engine::partial(&eos, 1),
        Polynomial::monomial(vec![Symbol::Eos { order: 2 }, Symbol::enthalpy(0, (0, 1))], 1)
    );
}

#[test]
fn lowest_forcing_is_the_velocity_gradient_square() {
    let mut e = Engine::new();
    assert_eq!(forcing(&mut e, 0), velocity_gradient_square());
    assert_eq!(wave_remainder(&mut e, 0), divergence());
    assert!(mentions_velocity(&forcing(&mut e, 0)));
    assert!(mentions_velocity(&forcing(&mut e, 1)));
    // At second order the (∂²h)² terms survive without velocity.
    assert!(!mentions_velocity(&forcing(&mut e, 2)));
}

#[test]
fn continuity_hierarchy_has_unit_top_coefficient() {
    let mut e = Engine::new();
    for k in 0..4 {
        let full = e.time_power(&continuity(), k);
        let top = Symbol::enthalpy(k + 1, (0, 0));
        assert_eq!(full.coefficient(&[Symbol::Eos { order: 1 }, top]), 1);
        let rest = wave_remainder(&mut e, k);
        assert!(rest.max_enthalpy_order().unwrap_or(0) <= k);
    }
}

#[test]
fn evaluation_on_the_quadrupole() {
    let d = ReferenceDisk::new(13, 24).unwrap();
    let map = LagrangianMap::identity(&d);
    let v = quadrupole(&d);
    let h = d.sample(|x, y| 2.0 * (1.0 - x * x - y * y));
    let eos = EosFamily::linear(100.0).unwrap();
    let mut jets = JetEvaluator::new(&map, [v.component(0).to_vec(), v.component(1).to_vec()], vec![h, vec![0.0; d.len()]], &eos);
    let mut e = Engine::new();
    assert!(max_diff(&jets.evaluate(&forcing(&mut e, 0)).unwrap(), &vec![8.0; d.len()]) < 1e-10);
    assert!(max_diff(&jets.evaluate(&laplacian_of_enthalpy(0)).unwrap(), &vec![-8.0; d.len()]) < 1e-9);
    assert!(max_abs(&jets.evaluate(&divergence()).unwrap()) < 1e-11);
    let (value, magnitude) = jets.evaluate_with_magnitude(&velocity_gradient_square()).unwrap();
    assert!(max_diff(&value, &magnitude) < 1e-10);

    assert!(matches!(jets.evaluate(&p(Symbol::enthalpy(2, (0, 0)))), Err(Error::MissingField(_))));
    jets.push_enthalpy(vec![1.0; d.len()]);
    assert_eq!(jets.enthalpy_orders(), 3);
    assert_eq!(jets.evaluate(&p(Symbol::enthalpy(2, (0, 0)))).unwrap(), vec![1.0; d.len()]);
}

#[test]
fn zero_velocity_kills_low_forcing() {
    let d = ReferenceDisk::new(13, 24).unwrap();
    let map = LagrangianMap::identity(&d);
    let h = d.sample(|x, y| (x * y).sin());
    let eos = EosFamily::linear(10.0).unwrap();
    let zero = vec![0.0; d.len()];
    let mut jets = JetEvaluator::new(&map, [zero.clone(), zero.clone()], vec![h, zero.clone(), zero], &eos);
    let mut e = Engine::new();
    for k in 0..2 {
        assert_eq!(max_abs(&jets.evaluate(&forcing(&mut e, k)).unwrap()), 0.0);
    }
}

fn symbol() -> impl Strategy<Value = Symbol> {
    prop_oneof![
        (0usize..2, 0u8..3, 0u8..3).prop_map(|(c, a, b)| Symbol::velocity(c, (a, b))),
        (0usize..3, 0u8..3, 0u8..3).prop_map(|(o, a, b)| Symbol::enthalpy(o, (a, b))),
        (0u8..3).prop_map(|order| Symbol::Eos { order }),
    ]
}

fn polynomial() -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((prop::collection::vec(symbol(), 0..4), -5i64..6), 0..5).prop_map(|terms| {
        let mut out = Polynomial::zero();
        for (m, c) in terms {
            out.add_assign(&Polynomial::monomial(m, c));
        }
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ring_axioms(a in polynomial(), b in polynomial(), c in polynomial()) {
        prop_assert_eq!(a.add(&b), b.add(&a));
        prop_assert_eq!(a.mul(&b), b.mul(&a));
        prop_assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
        prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
        prop_assert!(a.sub(&a).is_zero());
        prop_assert_eq!(a.mul(&Polynomial::constant(1)), a.clone());
        prop_assert!(a.mul(&Polynomial::zero()).is_zero());
        prop_assert_eq!(a.scale(3), a.add(&a).add(&a));
    }

    #[test]
    fn derivations_obey_leibniz(a in polynomial(), b in polynomial(), i in 0usize..2) {
        let mut e = Engine::new();
        let lhs = Engine::partial(&a.mul(&b), i);
        prop_assert_eq!(lhs, Engine::partial(&a, i).mul(&b).add(&a.mul(&Engine::partial(&b, i))));
        let lhs = e.time(&a.mul(&b));
        let rhs = e.time(&a).mul(&b).add(&a.mul(&e.time(&b)));
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn partials_commute(a in polynomial()) {
        prop_assert_eq!(Engine::partial(&Engine::partial(&a, 0), 1), Engine::partial(&Engine::partial(&a, 1), 0));
    }

    #[test]
    fn time_derivative_commutator(s in symbol(), i in 0usize..2) {
        // [D_t, ∂_i] Y = −(∂_i v^k) ∂_k Y on every generator.
        let mut e = Engine::new();
        let y = p(s);
        let lhs = e.time(&Engine::partial(&y, i)).sub(&Engine::partial(&e.time(&y), i));
        let mut rhs = Polynomial::zero();
        for k in 0..2 {
            let dv = Engine::partial(&p(Symbol::velocity(k, (0, 0))), i);
            rhs = rhs.sub(&dv.mul(&Engine::partial(&y, k)));
        }
        prop_assert_eq!(lhs, rhs);
    }
}
