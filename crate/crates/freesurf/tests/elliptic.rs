mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_abs_diff_eq;
use freesurf::elliptic::{
    bessel_j0, bessel_j0_first_zero, hodge_check, poincare_check, projection_formula_check, solve, trace_check,
    EllipticProblem, EllipticSolver,
};
use freesurf::error::Error;
use freesurf::field::{Field, Frame};
use freesurf::geometry::{GeometryCache, LagrangianMap};
use freesurf::grid::ReferenceDisk;
use proptest::prelude::*;

use common::{bent_map, eulerian, max_abs, max_diff, quadrupole, rigid_rotation};

fn rotation(disk: &Arc<ReferenceDisk>, angle: f64) -> LagrangianMap {
    let (s, c) = angle.sin_cos();
    LagrangianMap::from_fn(disk, |a, b| [c * a - s * b, s * a + c * b]).unwrap()
}

#[test]
fn dirichlet_examples() {
    let d = ReferenceDisk::new(17, 32).unwrap();
    let id = LagrangianMap::identity(&d);
    let nt = d.n_theta();

    let sol = solve(&id, &EllipticProblem::homogeneous(&d, vec![-8.0; d.len()])).unwrap();
    assert!(max_diff(&sol.values, &d.sample(|x, y| 2.0 * (1.0 - x * x - y * y))) < 1e-11);
    assert!(sol.residual <= 1e-10);

    let g: Vec<f64> = d.angles().iter().map(|p| p.cos()).collect();
    let sol = solve(&id, &EllipticProblem::dirichlet(vec![0.0; d.len()], g.clone())).unwrap();
    assert!(max_diff(&sol.values, &d.sample(|x, _| x)) < 1e-11);
    assert_eq!(&sol.values[..nt], &g[..]);

    let sol = solve(&id, &EllipticProblem::homogeneous(&d, vec![0.0; d.len()])).unwrap();
    assert_eq!(max_abs(&sol.values), 0.0);
}

#[test]
fn polynomial_data_is_solved_to_truncation() {
    let d = ReferenceDisk::new(17, 32).unwrap();
    let id = LagrangianMap::identity(&d);
    // q = (1 − r²)(x³ + xy) has Δq a polynomial of degree 3.
    let q = d.sample(|x, y| (1.0 - x * x - y * y) * (x * x * x + x * y));
    let rhs = d.flat_laplacian(&q);
    let sol = solve(&id, &EllipticProblem::homogeneous(&d, rhs)).unwrap();
    assert!(sol.residual <= 1e-11, "{}", sol.residual);
    assert!(max_diff(&sol.values, &q) < 1e-11);
}

#[test]
fn curved_solve_matches_manufactured_solution() {
    let d = ReferenceDisk::new(17, 32).unwrap();
    let map = bent_map(&d, 0.1);
    let nt = d.n_theta();
    // q = x₁² + x₂ x₁ has Eulerian Laplacian 2.
    let q = eulerian(&map, |a, b| a * a + a * b);
    let sol = solve(&map, &EllipticProblem::dirichlet(vec![2.0; d.len()], q[..nt].to_vec())).unwrap();
    assert!(sol.residual <= 1e-10, "{}", sol.residual);
    assert!(max_diff(&sol.values, &q) < 1e-8);
}

#[test]
fn rotation_agrees_with_flat_solver() {
    let d = ReferenceDisk::new(17, 32).unwrap();
    let solver = EllipticSolver::new(&d);
    let rot = rotation(&d, 0.7);
    let rhs = eulerian(&rot, |a, b| (a * b).exp() - 3.0 * b);
    let curved = solver.solve(&rot, &EllipticProblem::homogeneous(&d, rhs.clone())).unwrap();
    let flat = solver.flat_dirichlet(&d.without_nyquist(&rhs), &vec![0.0; d.n_theta()]);
    assert!(max_diff(&curved.values, &flat) <= 1e-10, "{:e}", max_diff(&curved.values, &flat));
}

#[test]
fn laplacian_is_self_adjoint() {
    let d = ReferenceDisk::new(17, 32).unwrap();
    let map = bent_map(&d, 0.1);
    let bump = |f: Vec<f64>| -> Vec<f64> {
        let mut out: Vec<f64> = f.iter().zip(d.sample(|x, y| 1.0 - x * x - y * y)).map(|(a, b)| a * b).collect();
        out[..d.n_theta()].iter_mut().for_each(|x| *x = 0.0);
        out
    };
    let u = bump(eulerian(&map, |a, b| a.cos() + b * b));
    let v = bump(eulerian(&map, |a, b| (a - b).sin() + 1.0));
    let lu = map.laplacian(&u);
    let lv = map.laplacian(&v);
    let left = map.integrate(&lu.iter().zip(&v).map(|(a, b)| a * b).collect::<Vec<_>>());
    let right = map.integrate(&u.iter().zip(&lv).map(|(a, b)| a * b).collect::<Vec<_>>());
    assert!((left - right).abs() <= 1e-9, "{left} vs {right}");
}

#[test]
fn neumann_problems() {
    let d = ReferenceDisk::new(17, 32).unwrap();
    let id = LagrangianMap::identity(&d);
    let nt = d.n_theta();
    let sol = solve(&id, &EllipticProblem::neumann(vec![4.0; d.len()], vec![2.0; nt])).unwrap();
    assert!(max_diff(&sol.values, &d.sample(|x, y| x * x + y * y - 0.5)) < 1e-10);
    assert!(sol.neumann_defect.unwrap().abs() < 1e-12);

    // Zero flux with a nonzero source is incompatible by 4π.
    let mut p = EllipticProblem::neumann(vec![4.0; d.len()], vec![0.0; nt]);
    let sol = solve(&id, &p).unwrap();
    assert_abs_diff_eq!(sol.neumann_defect.unwrap(), 4.0 * PI, epsilon = 1e-10);
    assert!(id.integrate(&sol.values).abs() < 1e-10);
    p.project_neumann = false;
    assert!(matches!(solve(&id, &p), Err(Error::IncompatibleNeumann { .. })));
}

#[test]
fn invalid_problems_are_rejected() {
    let d = ReferenceDisk::new(9, 16).unwrap();
    let id = LagrangianMap::identity(&d);
    for tol in [1e-14, 1e-3, 0.0] {
        let p = EllipticProblem::homogeneous(&d, vec![1.0; d.len()]).with_tolerance(tol);
        assert!(matches!(solve(&id, &p), Err(Error::InvalidInput(_))));
    }
    let p = EllipticProblem::homogeneous(&d, vec![1.0; 3]);
    assert!(matches!(solve(&id, &p), Err(Error::InvalidInput(_))));
    let p = EllipticProblem::dirichlet(vec![1.0; d.len()], vec![0.0; 2]);
    assert!(matches!(solve(&id, &p), Err(Error::InvalidInput(_))));
}

#[test]
fn bessel_root() {
    let j = bessel_j0_first_zero();
    assert_abs_diff_eq!(j, 2.404_825_557_695_773, epsilon = 1e-14);
    assert!(bessel_j0(j).abs() < 1e-15);
}

#[test]
fn poincare_examples() {
    let d = ReferenceDisk::new(17, 32).unwrap();
    let id = LagrangianMap::identity(&d);
    let q = d.sample(|x, y| 1.0 - x * x - y * y);
    let r = poincare_check(&id, &q).unwrap();
    assert_abs_diff_eq!(r.ratio_gradient, 1.0 / 6f64.sqrt(), epsilon = 1e-12);
    // ‖∇q‖ = √(2π), ‖Δq‖ = 4√π.
    assert_abs_diff_eq!(r.ratio_laplacian, (2.0 * PI).sqrt() / (4.0 * PI.sqrt()), epsilon = 1e-12);
    assert_abs_diff_eq!(r.faber_krahn, 1.0 / bessel_j0_first_zero(), epsilon = 1e-12);
    assert!(r.ratio_gradient <= r.faber_krahn);

    let j = bessel_j0_first_zero();
    let eig = d.sample(|x, y| bessel_j0(j * (x * x + y * y).sqrt()));
    let r = poincare_check(&id, &eig).unwrap();
    assert_abs_diff_eq!(r.ratio_gradient, 1.0 / j, epsilon = 1e-6);

    let mut bad = q.clone();
    bad[0] = 1e-6;
    assert!(matches!(poincare_check(&id, &bad), Err(Error::BoundaryNonzero { .. })));
}

#[test]
fn projection_formula_examples() {
    let d = ReferenceDisk::new(17, 32).unwrap();
    let c = GeometryCache::new(&LagrangianMap::identity(&d)).unwrap();
    assert!(projection_formula_check(&c, &d.sample(|x, y| 1.0 - x * x - y * y)).unwrap() <= 1e-9);
    assert!(projection_formula_check(&c, &d.sample(|x, y| (1.0 - x * x - y * y) * x)).unwrap() <= 1e-8);
    assert_eq!(projection_formula_check(&c, &vec![0.0; d.len()]).unwrap(), 0.0);
    assert!(matches!(projection_formula_check(&c, &vec![1.0; d.len()]), Err(Error::BoundaryNonzero { .. })));
}

#[test]
fn hodge_examples() {
    let d = ReferenceDisk::new(17, 32).unwrap();
    let c = GeometryCache::new(&LagrangianMap::identity(&d)).unwrap();
    let r = hodge_check(&c, &quadrupole(&d), 1, 1.0).unwrap();
    assert!(r.constant.is_finite() && r.constant <= 10.0, "{r:?}");

    let r = hodge_check(&c, &rigid_rotation(&d, 1.0), 1, 1.0).unwrap();
    assert!(r.constant.is_finite() && r.lhs <= r.constant * r.rhs * (1.0 + 1e-12), "{r:?}");
    let r0 = hodge_check(&c, &rigid_rotation(&d, 1.0), 0, 1.0).unwrap();
    // β = u: ∫|∇u|² = 2π while curl² contributes 2·4·π.
    assert_abs_diff_eq!(r0.lhs, 2.0 * PI, epsilon = 1e-10);
    assert!(r0.constant <= 1.0);

    let zero = Field::vector(Frame::Eulerian, [vec![0.0; d.len()], vec![0.0; d.len()]]);
    assert_eq!(hodge_check(&c, &zero, 1, 1.0).unwrap().constant, 1.0);
    assert!(matches!(
        hodge_check(&c, &Field::scalar(vec![0.0; d.len()]), 1, 1.0),
        Err(Error::RankMismatch { .. })
    ));
}

#[test]
fn trace_examples() {
    let d = ReferenceDisk::new(17, 32).unwrap();
    let c = GeometryCache::new(&LagrangianMap::identity(&d)).unwrap();
    assert_abs_diff_eq!(trace_check(&c, &Field::scalar(vec![1.0; d.len()])).unwrap(), 2f64.sqrt(), epsilon = 1e-12);
    assert_eq!(trace_check(&c, &Field::scalar(vec![0.0; d.len()])).unwrap(), 0.0);

    let ratio = |n_r: usize, n_t: usize| {
        let d = ReferenceDisk::new(n_r, n_t).unwrap();
        let c = GeometryCache::new(&LagrangianMap::identity(&d)).unwrap();
        trace_check(&c, &Field::scalar(d.sample(|x, y| x * x.hypot(y)))).unwrap()
    };
    let (coarse, fine) = (ratio(17, 32), ratio(33, 64));
    assert!(coarse.is_finite() && ((fine - coarse) / coarse).abs() <= 0.01, "{coarse} {fine}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn poincare_ratios_are_scale_invariant(c in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3]) {
        let d = ReferenceDisk::new(9, 16).unwrap();
        let id = LagrangianMap::identity(&d);
        let q = d.sample(|x, y| 1.0 - x * x - y * y);
        let base = poincare_check(&id, &q).unwrap();
        let scaled = poincare_check(&id, &q.iter().map(|v| c * v).collect::<Vec<_>>()).unwrap();
        prop_assert!((base.ratio_gradient - scaled.ratio_gradient).abs() <= 1e-12);
        prop_assert!((base.ratio_laplacian - scaled.ratio_laplacian).abs() <= 1e-12);
    }

    #[test]
    fn dirichlet_solve_is_linear(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let d = ReferenceDisk::new(9, 16).unwrap();
        let map = bent_map(&d, 0.05);
        let f = eulerian(&map, |x, y| x * y + 1.0);
        let g = eulerian(&map, |x, _| x.exp());
        let s = |rhs: Vec<f64>| solve(&map, &EllipticProblem::homogeneous(&d, rhs)).unwrap().values;
        let combined = s(f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect());
        let parts: Vec<f64> = s(f).iter().zip(s(g)).map(|(x, y)| a * x + b * y).collect();
        prop_assert!(max_diff(&combined, &parts) <= 1e-8 * (1.0 + a.abs() + b.abs()));
    }
}
