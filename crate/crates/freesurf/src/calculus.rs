//! Eulerian differential operators on the moving domain.

use crate::error::{Error, Result};
use crate::field::{Field, Frame, MAX_RANK};
use crate::geometry::{GeometryCache, LagrangianMap};

fn require_eulerian(f: &Field) -> Result<()> {
    if f.rank() > 0 && f.frame() != Frame::Eulerian {
        return Err(Error::FrameMismatch);
    }
    Ok(())
}

/// Eulerian gradient; the new index is placed first.
pub fn gradient(map: &LagrangianMap, f: &Field) -> Result<Field> {
    require_eulerian(f)?;
    if f.rank() >= MAX_RANK {
        return Err(Error::RankMismatch {
            expected: MAX_RANK - 1,
            found: f.rank(),
        });
    }
    let nc = f.n_components();
    let mut comps = vec![Vec::new(); 2 * nc];
    for c in 0..nc {
        let [g1, g2] = map.grad(f.component(c));
        comps[c] = g1;
        comps[nc + c] = g2;
    }
    Field::from_components(f.rank() + 1, Frame::Eulerian, comps)
}

/// `∂^s f`.
pub fn gradient_power(map: &LagrangianMap, f: &Field, s: usize) -> Result<Field> {
    let mut out = f.clone();
    for _ in 0..s {
        out = gradient(map, &out)?;
    }
    Ok(out)
}

/// Laplace-Beltrami operator of a scalar field in divergence form.
pub fn laplace_beltrami(map: &LagrangianMap, h: &Field) -> Result<Field> {
    if h.rank() != 0 {
        return Err(Error::RankMismatch {
            expected: 0,
            found: h.rank(),
        });
    }
    Ok(Field::scalar(map.laplacian(h.values())))
}

/// Divergence and curl `curl_ij = ∂_i v_j − ∂_j v_i` of an Eulerian vector.
pub fn div_curl(map: &LagrangianMap, v: &Field) -> Result<(Field, Field)> {
    if v.rank() != 1 {
        return Err(Error::RankMismatch {
            expected: 1,
            found: v.rank(),
        });
    }
    require_eulerian(v)?;
    let dv = gradient(map, v)?;
    let n = v.nodes();
    let div: Vec<f64> = (0..n).map(|k| dv.component(0)[k] + dv.component(3)[k]).collect();
    let c12: Vec<f64> = (0..n).map(|k| dv.component(1)[k] - dv.component(2)[k]).collect();
    let c21: Vec<f64> = c12.iter().map(|x| -x).collect();
    let curl = Field::from_components(2, Frame::Eulerian, vec![vec![0.0; n], c12, c21, vec![0.0; n]])?;
    Ok((Field::scalar(div), curl))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Symmetric dot product: `a` has `p` free indices followed by the
/// contracted one, `b` starts with the contracted index. The result has
/// `p + rank(b) − 1` indices, symmetrized with weight `1/r!`.
pub fn symmetric_dot(a: &Field, b: &Field) -> Result<Field> {
    if a.rank() < 1 || b.rank() < 1 {
        return Err(Error::RankMismatch {
            expected: 1,
            found: a.rank().min(b.rank()),
        });
    }
    if a.frame() != b.frame() {
        return Err(Error::FrameMismatch);
    }
    let p = a.rank() - 1;
    let q = b.rank() - 1;
    let r = p + q;
    if r == 0 || r > MAX_RANK {
        return Err(Error::RankMismatch {
            expected: MAX_RANK,
            found: r,
        });
    }
    let n = a.nodes();
    let perms = permutations(r);
    let norm = 1.0 / perms.len() as f64;
    let mut out = Field::zeros(r, a.frame(), n);
    for c in 0..(1usize << r) {
        let idx = Field::unflat(r, c);
        let mut acc = vec![0.0; n];
        for perm in &perms {
            let permuted: Vec<usize> = perm.iter().map(|&s| idx[s]).collect();
            for k in 0..2 {
                let mut ia = permuted[..p].to_vec();
                ia.push(k);
                let mut ib = vec![k];
                ib.extend_from_slice(&permuted[p..]);
                let ca = a.component(Field::flat(&ia));
                let cb = b.component(Field::flat(&ib));
                for node in 0..n {
                    acc[node] += ca[node] * cb[node];
                }
            }
        }
        for (o, x) in out.component_mut(c).iter_mut().zip(&acc) {
            *o = x * norm;
        }
    }
    Ok(out)
}

/// Projects every index of a tensor onto the boundary tangent space.
/// Accepts a field on all nodes or on the boundary ring only; returns a
/// field on the boundary ring.
pub fn boundary_project(cache: &GeometryCache, s: &Field) -> Result<Field> {
    let nt = cache.disk().n_theta();
    let gamma = match s.frame() {
        Frame::Eulerian => &cache.projection_eulerian,
        Frame::Lagrangian => &cache.projection,
    };
    let mut out = restrict_to_boundary(s, nt)?;
    let r = s.rank();
    for slot in 0..r {
        let mut next = Field::zeros(r, s.frame(), nt);
        for c in 0..(1usize << r) {
            let idx = Field::unflat(r, c);
            let acc = next.component_mut(c);
            for b in 0..2 {
                let mut jdx = idx.clone();
                jdx[slot] = b;
                let src = out.component(Field::flat(&jdx));
                let g = &gamma[2 * idx[slot] + b];
                for k in 0..nt {
                    acc[k] += g[k] * src[k];
                }
            }
        }
        out = next;
    }
    Ok(out)
}

/// The boundary-ring restriction of a nodal field.
pub fn restrict_to_boundary(s: &Field, nt: usize) -> Result<Field> {
    if s.nodes() == nt {
        return Ok(s.clone());
    }
    if s.nodes() < nt {
        return Err(Error::InvalidInput("field smaller than the boundary ring".into()));
    }
    let comps = (0..s.n_components()).map(|c| s.component(c)[..nt].to_vec()).collect();
    Field::from_components(s.rank(), s.frame(), comps)
}

/// `v^k ∂_k T` for every component of `T`.
pub fn advective_derivative(map: &LagrangianMap, v: &Field, t: &Field) -> Result<Field> {
    let g = gradient(map, t)?;
    let nc = t.n_components();
    let mut out = Field::zeros(t.rank(), Frame::Eulerian, t.nodes());
    for c in 0..nc {
        let dst = out.component_mut(c);
        for k in 0..2 {
            let gk = g.component(k * nc + c);
            let vk = v.component(k);
            for node in 0..dst.len() {
                dst[node] += vk[node] * gk[node];
            }
        }
    }
    Ok(out)
}

/// `L²(dx)` norm of a tensor field.
pub fn l2_norm(map: &LagrangianMap, f: &Field) -> f64 {
    let sq: Vec<f64> = f.pointwise_norm().iter().map(|x| x * x).collect();
    map.integrate(&sq).max(0.0).sqrt()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Which commutator identity to test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommutatorKind {
    /// `[D_t, ∂_i] f = −(∂_i v^k) ∂_k f`.
    DtGrad,
    /// `[D_t, ∂^r] f = −Σ_s C(r, s+1) (∂^{1+s} v)·̃∂^{r−s} f`.
    DtGradPower,
    /// `[Δ, D_t] f = (Δv^j) ∂_j f + 2 ∂^i v^j ∂_i ∂_j f`.
    LaplaceDt,
}

#[derive(Clone, Copy, Debug)]
pub struct CommutatorResidual {
    pub lhs_norm: f64,
    pub rhs_norm: f64,
    pub residual: f64,
}

/// Evaluates both sides of a commutator identity for a test field `f` that
/// is stationary in the Eulerian frame, so `D_t T = v^k ∂_k T` for every
/// tensor `T` built from `f`.
pub fn commutator_residual(
    kind: CommutatorKind,
    order: usize,
    map: &LagrangianMap,
    v: &Field,
    f: &Field,
) -> Result<CommutatorResidual> {
    require_eulerian(v)?;
    if v.rank() != 1 || f.rank() != 0 {
        return Err(Error::RankMismatch {
            expected: 1,
            found: v.rank(),
        });
    }
    let dt_f = advective_derivative(map, v, f)?;
    let (lhs, rhs) = match kind {
        CommutatorKind::DtGrad | CommutatorKind::DtGradPower => {
            let r = if kind == CommutatorKind::DtGrad { 1 } else { order.max(1) };
            let dr_f = gradient_power(map, f, r)?;
            let lhs = advective_derivative(map, v, &dr_f)?.sub(&gradient_power(map, &dt_f, r)?)?;
            let mut rhs = Field::zeros(r, Frame::Eulerian, f.nodes());
            for s in 0..r {
                let dv = gradient_power(map, v, 1 + s)?;
                let df = gradient_power(map, f, r - s)?;
                rhs = rhs.axpy(-binomial(r, s + 1), &symmetric_dot(&dv, &df)?)?;
            }
            (lhs, rhs)
        }
        CommutatorKind::LaplaceDt => {
            let lap_f = laplace_beltrami(map, f)?;
            let lhs = laplace_beltrami(map, &dt_f)?.sub(&advective_derivative(map, v, &lap_f)?)?;
            let df = gradient(map, f)?;
            let ddf = gradient(map, &df)?;
            let dv = gradient(map, v)?;
            let n = f.nodes();
            let mut rhs = vec![0.0; n];
            for j in 0..2 {
                let lap_vj = map.laplacian(v.component(j));
                for k in 0..n {
                    rhs[k] += lap_vj[k] * df.component(j)[k];
                }
                for i in 0..2 {
                    let a = dv.component(2 * i + j);
                    let b = ddf.component(2 * i + j);
                    for k in 0..n {
                        rhs[k] += 2.0 * a[k] * b[k];
                    }
                }
            }
            (lhs, Field::scalar(rhs))
        }
    };
    let diff = lhs.sub(&rhs)?;
    Ok(CommutatorResidual {
        lhs_norm: l2_norm(map, &lhs),
        rhs_norm: l2_norm(map, &rhs),
        residual: l2_norm(map, &diff),
    })
}
