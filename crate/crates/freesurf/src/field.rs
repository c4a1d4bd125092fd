//! Tensor-valued nodal fields on the reference disk.

use crate::error::{Error, Result};

/// Spatial dimension.
pub const DIM: usize = 2;

/// Which coordinate system the tensor indices refer to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    Eulerian,
    Lagrangian,
}

/// Components of a rank-`r` tensor at every node, component-major: the
/// component with index tuple `(i₁, …, i_r)` has flat id `Σ i_k 2^{r-1-k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    rank: usize,
    frame: Frame,
    nodes: usize,
    data: Vec<f64>,
}

pub const MAX_RANK: usize = 6;

impl Field {
    pub fn zeros(rank: usize, frame: Frame, nodes: usize) -> Self {
        Self {
            rank,
            frame,
            nodes,
            data: vec![0.0; (1 << rank) * nodes],
        }
    }

    pub fn scalar(values: Vec<f64>) -> Self {
        Self {
            rank: 0,
            frame: Frame::Eulerian,
            nodes: values.len(),
            data: values,
        }
    }

    pub fn vector(frame: Frame, components: [Vec<f64>; 2]) -> Self {
        let [a, b] = components;
        Self::from_components(1, frame, vec![a, b]).expect("two components")
    }

    pub fn from_components(rank: usize, frame: Frame, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != 1 << rank {
            return Err(Error::RankMismatch {
                expected: rank,
                found: components.len(),
            });
        }
        let nodes = components[0].len();
        let mut data = Vec::with_capacity(nodes << rank);
        for c in &components {
            if c.len() != nodes {
                return Err(Error::InvalidInput("ragged field components".into()));
            }
            data.extend_from_slice(c);
        }
        Ok(Self {
            rank,
            frame,
            nodes,
            data,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn n_components(&self) -> usize {
        1 << self.rank
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.data[c * self.nodes..(c + 1) * self.nodes]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.nodes..(c + 1) * self.nodes]
    }

    /// Scalar values; panics on rank > 0.
    pub fn values(&self) -> &[f64] {
        assert_eq!(self.rank, 0, "values() on a tensor field");
        &self.data
    }

    pub fn with_frame(mut self, frame: Frame) -> Self {
        self.frame = frame;
        self
    }

    /// Flat component id of an index tuple.
    pub fn flat(indices: &[usize]) -> usize {
        indices.iter().fold(0, |acc, &i| (acc << 1) | i)
    }

    /// Index tuple of a flat component id.
    pub fn unflat(rank: usize, c: usize) -> Vec<usize> {
        (0..rank).map(|k| (c >> (rank - 1 - k)) & 1).collect()
    }

    pub fn get(&self, indices: &[usize], node: usize) -> f64 {
        self.data[Self::flat(indices) * self.nodes + node]
    }

    fn check(&self, other: &Field) -> Result<()> {
        if self.rank != other.rank {
            return Err(Error::RankMismatch {
                expected: self.rank,
                found: other.rank,
            });
        }
        if self.rank > 0 && self.frame != other.frame {
            return Err(Error::FrameMismatch);
        }
        if self.nodes != other.nodes {
            return Err(Error::InvalidInput("node count mismatch".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.axpy(-1.0, other)
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &Field) -> Result<Field> {
        self.check(other)?;
        let mut out = self.clone();
        for (x, y) in out.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
        Ok(out)
    }

    pub fn scale(&self, a: f64) -> Field {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= a);
        out
    }

    /// Euclidean norm of the tensor at each node.
    pub fn pointwise_norm(&self) -> Vec<f64> {
        (0..self.nodes)
            .map(|n| {
                (0..self.n_components())
                    .map(|c| self.data[c * self.nodes + n].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// Pointwise `Σ_components a·b`.
    pub fn pointwise_dot(&self, other: &Field) -> Result<Vec<f64>> {
        self.check(other)?;
        let mut out = vec![0.0; self.nodes];
        for c in 0..self.n_components() {
            for (o, (a, b)) in out
                .iter_mut()
                .zip(self.component(c).iter().zip(other.component(c)))
            {
                *o += a * b;
            }
        }
        Ok(out)
    }

    /// Largest pointwise norm.
    pub fn sup_norm(&self) -> f64 {
        self.pointwise_norm().into_iter().fold(0.0, f64::max)
    }

    /// Multiplies every component by a scalar field.
    pub fn mul_scalar_field(&self, s: &[f64]) -> Field {
        let mut out = self.clone();
        for c in 0..self.n_components() {
            for (x, w) in out.component_mut(c).iter_mut().zip(s) {
                *x *= w;
            }
        }
        out
    }

    /// Swaps the position of index `a` and `b`.
    pub fn transpose(&self, a: usize, b: usize) -> Field {
        let mut out = self.clone();
        for c in 0..self.n_components() {
            let mut idx = Self::unflat(self.rank, c);
            idx.swap(a, b);
            let target = Self::flat(&idx);
            out.component_mut(target).copy_from_slice(self.component(c));
        }
        out
    }

    /// Sets every component at the listed nodes to zero.
    pub fn zero_nodes(&mut self, nodes: std::ops::Range<usize>) {
        for c in 0..self.n_components() {
            let comp = self.component_mut(c);
            for n in nodes.clone() {
                comp[n] = 0.0;
            }
        }
    }
}
