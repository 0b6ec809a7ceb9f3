//! Homogeneous deformation mode.
//!
//! Leaders carry an affine map `r_c = Q r_0 + d` of the reference
//! configuration; followers reach the same map through the frozen weights of
//! the reference network. This module recovers `(Q, d)` from the leaders,
//! evaluates global and local desired positions, the per-axis error vectors
//! linking them, and the minimum-singular-value collision certificate.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x2};

use crate::error::{Error, Result};
use crate::geometry::{plane_normal, rank_simplex, Position3};
use crate::refnet::{PositionMap, ReferenceConfiguration};
use crate::scalar::Real;
use crate::AgentId;

/// Affine map `r ↦ Q r + d` with the singular values of `Q`.
///
/// For a planar deformation `singular_values[0..2]` are the in-plane values
/// (descending) and `singular_values[2]` is the out-of-plane gain, which is 1.
/// For `n = 3` all three are sorted descending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousTransform<T: Real> {
    pub q: Matrix3<T>,
    pub d: Position3<T>,
    pub singular_values: [T; 3],
}

impl<T: Real> HomogeneousTransform<T> {
    pub fn identity() -> Self {
        Self {
            q: Matrix3::identity(),
            d: Position3::zeros(),
            singular_values: [T::one(); 3],
        }
    }

    pub fn apply(&self, r0: &Position3<T>) -> Position3<T> {
        self.q * r0 + self.d
    }

    pub fn min_singular_value(&self) -> T {
        self.singular_values.iter().fold(T::max_value().unwrap(), |m, &s| m.min(s))
    }
}

fn sorted_desc<T: Real>(mut v: Vec<T>) -> Vec<T> {
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

/// Recovers the homogeneous transform carrying the leaders' reference
/// simplex onto their current positions.
pub fn fit_homogeneous_transform<T: Real>(
    leader_ref: &[Position3<T>],
    leader_current: &[Position3<T>],
    n: usize,
) -> Result<HomogeneousTransform<T>> {
    if leader_ref.len() != n + 1 || leader_current.len() != n + 1 {
        return Err(Error::Argument(format!("an {n}-D deformation needs {} leaders", n + 1)));
    }
    if rank_simplex(leader_ref, n)? < n {
        return Err(Error::Degenerate("leader reference simplex is degenerate".into()));
    }
    let edge = |pts: &[Position3<T>], k: usize| pts[k] - pts[0];
    let (basis_ref, basis_cur) = if n == 3 {
        (
            Matrix3::from_columns(&[edge(leader_ref, 1), edge(leader_ref, 2), edge(leader_ref, 3)]),
            Matrix3::from_columns(&[
                edge(leader_current, 1),
                edge(leader_current, 2),
                edge(leader_current, 3),
            ]),
        )
    } else {
        let n_ref = plane_normal(&leader_ref[0], &leader_ref[1], &leader_ref[2])?;
        let n_cur = plane_normal(&leader_current[0], &leader_current[1], &leader_current[2])
            .map_err(|_| Error::Degenerate("current leader triangle is degenerate".into()))?;
        (
            Matrix3::from_columns(&[edge(leader_ref, 1), edge(leader_ref, 2), n_ref]),
            Matrix3::from_columns(&[edge(leader_current, 1), edge(leader_current, 2), n_cur]),
        )
    };
    let inv = basis_ref
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("leader reference basis is singular".into()))?;
    let q = basis_cur * inv;
    let d = leader_current[0] - q * leader_ref[0];

    let singular_values = if n == 3 {
        let sv = sorted_desc(q.singular_values().iter().copied().collect());
        [sv[0], sv[1], sv[2]]
    } else {
        let e1 = edge(leader_ref, 1).normalize();
        let normal = basis_ref.column(2).into_owned();
        let e2 = normal.cross(&e1).normalize();
        let in_plane = q * Matrix3x2::from_columns(&[e1, e2]);
        let sv = sorted_desc(in_plane.singular_values().iter().copied().collect());
        [sv[0], sv[1], (q * normal).norm()]
    };
    Ok(HomogeneousTransform { q, d, singular_values })
}

/// Followers' global desired positions `W_L · leaders`, one per row of `W_L`.
pub fn global_desired_positions<T: Real>(leader_desired: &[Position3<T>], w_l: &DMatrix<T>) -> Result<Vec<Position3<T>>> {
    if w_l.ncols() != leader_desired.len() {
        return Err(Error::Argument(format!(
            "W_L has {} columns but {} leader positions were given",
            w_l.ncols(),
            leader_desired.len()
        )));
    }
    Ok((0..w_l.nrows())
        .map(|r| {
            leader_desired
                .iter()
                .enumerate()
                .fold(Position3::zeros(), |acc, (k, p)| acc + p * w_l[(r, k)])
        })
        .collect())
}

/// Weighted combination `Σ w_h r_h` of the in-neighbors' actual positions.
pub fn local_desired_position<T: Real>(neighbor_actual: &[Position3<T>], weights: &[T]) -> Result<Position3<T>> {
    if neighbor_actual.len() != weights.len() {
        return Err(Error::Argument("neighbor and weight counts differ".into()));
    }
    Ok(neighbor_actual
        .iter()
        .zip(weights)
        .fold(Position3::zeros(), |acc, (p, &w)| acc + p * w))
}

impl<T: Real> ReferenceConfiguration<T> {
    /// Global desired positions of every agent given the leaders' commanded
    /// positions (in leader order).
    pub fn global_desired(&self, leader_desired: &[Position3<T>]) -> Result<PositionMap<T>> {
        let followers = global_desired_positions(leader_desired, &self.matrices.w_l)?;
        Ok(self
            .leaders
            .iter()
            .copied()
            .zip(leader_desired.iter().copied())
            .chain(self.followers.iter().copied().zip(followers))
            .collect())
    }

    /// Local desired position of agent `i`: the leader's own commanded
    /// position, or the follower's weighted in-neighbor combination.
    pub fn local_desired(
        &self,
        i: AgentId,
        actual: &PositionMap<T>,
        leader_global: &PositionMap<T>,
    ) -> Result<Position3<T>> {
        if self.is_leader(i) {
            return leader_global
                .get(&i)
                .copied()
                .ok_or_else(|| Error::Argument(format!("no commanded position for leader {i}")));
        }
        let nbrs = self
            .in_neighbors
            .get(&i)
            .ok_or_else(|| Error::Argument(format!("agent {i} is not in the network")))?;
        let pts = nbrs
            .iter()
            .map(|nb| {
                actual
                    .get(nb)
                    .copied()
                    .ok_or(Error::Communication { agent: i, neighbor: *nb })
            })
            .collect::<Result<Vec<_>>>()?;
        local_desired_position(&pts, &self.weights[&i])
    }
}

/// Per-axis error vectors (`x`, `y`, `z`): local-desired follower error,
/// global-desired follower error, global-desired leader error.
#[derive(Debug, Clone, PartialEq)]
pub struct HdmErrors<T: Real> {
    pub e_d_f: [DVector<T>; 3],
    pub e_c_f: [DVector<T>; 3],
    pub e_c_l: [DVector<T>; 3],
}

fn axis_vector<T: Real>(ids: &[AgentId], f: impl Fn(AgentId) -> Result<T>) -> Result<DVector<T>> {
    Ok(DVector::from_vec(ids.iter().map(|&id| f(id)).collect::<Result<Vec<_>>>()?))
}

fn lookup<T: Real>(map: &PositionMap<T>, id: AgentId, what: &str) -> Result<Position3<T>> {
    map.get(&id)
        .copied()
        .ok_or_else(|| Error::Argument(format!("missing {what} position for agent {id}")))
}

/// Stacks actual, local desired and global desired positions into the error
/// vectors `E_d^F = P_d^F - P^F`, `E_c^F = P_c^F - P^F`, `E_c^L = P_c^L - P^L`.
pub fn error_vectors<T: Real>(
    config: &ReferenceConfiguration<T>,
    actual: &PositionMap<T>,
    local_desired: &PositionMap<T>,
    global_desired: &PositionMap<T>,
) -> Result<HdmErrors<T>> {
    let mk = |ids: &[AgentId], target: &PositionMap<T>, what: &str| -> Result<[DVector<T>; 3]> {
        let mut out: [DVector<T>; 3] = [DVector::zeros(0), DVector::zeros(0), DVector::zeros(0)];
        for (axis, slot) in out.iter_mut().enumerate() {
            *slot = axis_vector(ids, |id| {
                Ok(lookup(target, id, what)?[axis] - lookup(actual, id, "actual")?[axis])
            })?;
        }
        Ok(out)
    };
    Ok(HdmErrors {
        e_d_f: mk(&config.followers, local_desired, "local desired")?,
        e_c_f: mk(&config.followers, global_desired, "global desired")?,
        e_c_l: mk(&config.leaders, global_desired, "global desired")?,
    })
}

impl<T: Real> HdmErrors<T> {
    /// Largest residual of `E_d^F = D P^F + B P^L` over the three axes.
    pub fn local_identity_residual(&self, config: &ReferenceConfiguration<T>, actual: &PositionMap<T>) -> Result<T> {
        let m = &config.matrices;
        let mut worst = T::zero();
        for axis in 0..3 {
            let pf = axis_vector(&config.followers, |id| Ok(lookup(actual, id, "actual")?[axis]))?;
            let pl = axis_vector(&config.leaders, |id| Ok(lookup(actual, id, "actual")?[axis]))?;
            let rhs = &m.d * pf + &m.b * pl;
            worst = worst.max((&self.e_d_f[axis] - rhs).amax());
        }
        Ok(worst)
    }

    /// Largest residual of `E_c^F = -D⁻¹ E_d^F + W_L E_c^L` over the axes.
    pub fn global_identity_residual(&self, config: &ReferenceConfiguration<T>) -> T {
        let m = &config.matrices;
        (0..3)
            .map(|axis| {
                let rhs = -(&m.d_inv * &self.e_d_f[axis]) + &m.w_l * &self.e_c_l[axis];
                (&self.e_c_f[axis] - rhs).amax()
            })
            .fold(T::zero(), |a, b| a.max(b))
    }
}

/// Collision certificate: the threshold `(Δ + ε) / (d_min / 2 + ε)` and
/// whether the smallest singular value of the deformation reaches it.
pub fn collision_safety_margin<T: Real>(
    transform: &HomogeneousTransform<T>,
    delta: T,
    epsilon: T,
    d_min: T,
) -> Result<(T, bool)> {
    if !(epsilon > T::zero()) || !(d_min > T::zero()) {
        return Err(Error::Argument("vehicle radius and minimum separation must be positive".into()));
    }
    if delta < T::zero() {
        return Err(Error::Argument("deviation bound must be nonnegative".into()));
    }
    let threshold = (delta + epsilon) / (d_min / T::lit(2.0) + epsilon);
    Ok((threshold, transform.min_singular_value() >= threshold))
}

/// Positions in `ids` order; convenience for leader lists.
pub fn gather<T: Real>(map: &PositionMap<T>, ids: &[AgentId]) -> Result<Vec<Position3<T>>> {
    ids.iter().map(|id| lookup(map, *id, "requested")).collect()
}

pub fn leader_reference<T: Real>(config: &ReferenceConfiguration<T>) -> Vec<Position3<T>> {
    config.leaders.iter().map(|id| config.ref_positions[id]).collect()
}

/// Map from follower id to global desired position.
pub fn follower_map<T: Real>(config: &ReferenceConfiguration<T>, positions: Vec<Position3<T>>) -> BTreeMap<AgentId, Position3<T>> {
    config.followers.iter().copied().zip(positions).collect()
}
