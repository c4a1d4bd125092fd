use std::sync::Arc;

use crate::eos::EosFamily;
use crate::error::{Error, Result};
use crate::field::{Field, Frame};
use crate::geometry::LagrangianMap;

/// `(t, x, v, h, D_t h)` on the reference grid.
#[derive(Clone, Debug)]
pub struct SimState {
    pub t: f64,
    pub map: LagrangianMap,
    /// Eulerian components of the velocity at each label.
    pub v: Field,
    pub h: Vec<f64>,
    pub hdot: Vec<f64>,
    pub eos: Arc<EosFamily>,
}

impl SimState {
    pub fn new(map: LagrangianMap, v: Field, h: Vec<f64>, hdot: Vec<f64>, eos: Arc<EosFamily>) -> Result<Self> {
        let n = map.disk().len();
        if v.rank() != 1 || v.nodes() != n || v.frame() != Frame::Eulerian {
            return Err(Error::InvalidInput("velocity must be an Eulerian vector on the grid".into()));
        }
        if h.len() != n || hdot.len() != n {
            return Err(Error::InvalidInput("enthalpy fields must live on the grid".into()));
        }
        Ok(Self {
            t: 0.0,
            map,
            v,
            h,
            hdot,
            eos,
        })
    }

    pub fn velocity_components(&self) -> [Vec<f64>; 2] {
        [self.v.component(0).to_vec(), self.v.component(1).to_vec()]
    }

    /// `div v + e'(h) D_t h`, which vanishes along exact solutions.
    pub fn continuity_residual(&self) -> Vec<f64> {
        let [a, _] = self.map.grad(self.v.component(0));
        let [_, b] = self.map.grad(self.v.component(1));
        (0..self.h.len())
            .map(|k| a[k] + b[k] + self.eos.de(self.h[k]) * self.hdot[k])
            .collect()
    }

    /// `L²(dx)` norm of [`continuity_residual`](Self::continuity_residual).
    pub fn continuity_residual_norm(&self) -> f64 {
        let r: Vec<f64> = self.continuity_residual().iter().map(|x| x * x).collect();
        self.map.integrate(&r).max(0.0).sqrt()
    }
}
