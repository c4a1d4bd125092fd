#![allow(dead_code)]

use std::sync::Arc;

use freesurf::field::{Field, Frame};
use freesurf::geometry::LagrangianMap;
use freesurf::grid::ReferenceDisk;

/// `u₀ = (2x₁, −2x₂)`, with pressure `p₀ = 2(1 − r²)`.
pub fn quadrupole(disk: &ReferenceDisk) -> Field {
    Field::vector(Frame::Eulerian, [disk.sample(|x, _| 2.0 * x), disk.sample(|_, y| -2.0 * y)])
}

/// `u₀ = ω(−x₂, x₁)`, with pressure `p₀ = (ω²/2)(r² − 1)`.
pub fn rigid_rotation(disk: &ReferenceDisk, omega: f64) -> Field {
    Field::vector(Frame::Eulerian, [disk.sample(|_, y| -omega * y), disk.sample(|x, _| omega * x)])
}

/// A mild polynomial deformation of the identity.
pub fn bent_map(disk: &Arc<ReferenceDisk>, amp: f64) -> LagrangianMap {
    LagrangianMap::from_fn(disk, |a, b| [a + amp * a * b, b + 0.5 * amp * a * a]).unwrap()
}

pub fn eulerian(map: &LagrangianMap, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let [x1, x2] = map.positions();
    x1.iter().zip(x2).map(|(&a, &b)| f(a, b)).collect()
}

pub fn max_abs(f: &[f64]) -> f64 {
    f.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
