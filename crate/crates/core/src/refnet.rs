//! Reference-configuration communication network.
//!
//! From the agents' reference positions this module classifies boundary and
//! interior agents, picks `n + 1` boundary leaders, gives every interior
//! follower the nearest enclosing simplex of other agents as its in-neighbor
//! set, and freezes the barycentric communication weights. The follower rows
//! of the resulting weight matrix split into a leader block `B` and a follower
//! block `A`; with `D = A - I`, the product `W_L = -D⁻¹ B` reproduces every
//! follower's barycentric coordinates with respect to the leaders.

use std::collections::{BTreeMap, BTreeSet};

use itertools::Itertools;
use nalgebra::{DMatrix, DVector, Schur};

use crate::error::{Error, Result};
use crate::geometry::{lambda_nd, rank_simplex, simplex_measure, Position3};
use crate::scalar::Real;
use crate::AgentId;

pub type PositionMap<T> = BTreeMap<AgentId, Position3<T>>;

/// Initial size of the nearest-agent pool searched for enclosing simplexes.
pub const DEFAULT_NEIGHBOR_POOL: usize = 8;

/// Default admissibility threshold `ρ` for an `n`-D deformation.
pub fn default_rho<T: Real>(n: usize) -> T {
    if n == 3 {
        T::lit(0.05)
    } else {
        T::lit(0.1)
    }
}

/// Knobs for building a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    pub n: usize,
    pub rho: T,
    pub xi: T,
    pub leader_override: Option<Vec<AgentId>>,
}

impl<T: Real> NetworkParams<T> {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            rho: default_rho(n),
            xi: T::one(),
            leader_override: None,
        }
    }

    pub fn with_rho(mut self, rho: T) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_leaders(mut self, leaders: Vec<AgentId>) -> Self {
        self.leader_override = Some(leaders);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n != 2 && self.n != 3 {
            return Err(Error::Argument(format!("n must be 2 or 3, got {}", self.n)));
        }
        let cap = T::one() / T::from_usize(self.n + 1).unwrap();
        if !(self.rho > T::zero() && self.rho < cap) {
            return Err(Error::Argument(format!(
                "rho = {} must lie in (0, 1/{})",
                self.rho,
                self.n + 1
            )));
        }
        if self.xi == T::zero() {
            return Err(Error::Argument("xi must be nonzero".into()));
        }
        Ok(())
    }
}

/// The `W` matrix and its partition.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrices<T: Real> {
    /// `(N - n - 1) × N`, columns ordered leaders first, then followers.
    pub w: DMatrix<T>,
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    /// `D = -I + A`.
    pub d: DMatrix<T>,
    pub d_inv: DMatrix<T>,
    /// `W_L = -D⁻¹ B`.
    pub w_l: DMatrix<T>,
}

/// Immutable communication network built on a reference configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceConfiguration<T: Real> {
    pub n: usize,
    pub rho: T,
    pub xi: T,
    pub ref_positions: PositionMap<T>,
    pub leaders: Vec<AgentId>,
    /// Ascending by id; row order of `W`.
    pub followers: Vec<AgentId>,
    pub boundary: BTreeSet<AgentId>,
    pub interior: BTreeSet<AgentId>,
    pub in_neighbors: BTreeMap<AgentId, Vec<AgentId>>,
    /// Aligned with `in_neighbors`.
    pub weights: BTreeMap<AgentId, Vec<T>>,
    pub matrices: WeightMatrices<T>,
    pub xi_max: T,
}

fn check_positions<T: Real>(positions: &PositionMap<T>, n: usize) -> Result<()> {
    if positions.len() < n + 2 {
        return Err(Error::Configuration(format!(
            "an {n}-D network needs at least {} agents, got {}",
            n + 2,
            positions.len()
        )));
    }
    for (p, v) in positions {
        if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
            return Err(Error::Argument(format!("agent {p} has a non-finite position")));
        }
    }
    let ids: Vec<_> = positions.keys().copied().collect();
    for (i, j) in ids.iter().tuple_combinations() {
        if (positions[i] - positions[j]).norm() <= T::weight_tol() {
            return Err(Error::Degenerate(format!("agents {i} and {j} coincide")));
        }
    }
    Ok(())
}

fn simplex_of<T: Real>(positions: &PositionMap<T>, ids: &[AgentId]) -> Vec<Position3<T>> {
    ids.iter().map(|id| positions[id]).collect()
}

/// Weights of `target` on the simplex `ids`, or `None` if it is degenerate.
fn weights_on<T: Real>(
    positions: &PositionMap<T>,
    ids: &[AgentId],
    target: &Position3<T>,
    n: usize,
    xi: T,
) -> Option<crate::geometry::LambdaWeights<T>> {
    let simplex = simplex_of(positions, ids);
    if !may_enclose(&simplex, target, n) {
        return None;
    }
    lambda_nd(&simplex, target, n, xi).ok()
}

/// Cheap orientation test: `false` only when `c` is clearly outside the
/// simplex (or on the far side of a face), so every weight above a positive
/// threshold is impossible. Borderline cases are left to the exact solve.
fn may_enclose<T: Real>(simplex: &[Position3<T>], c: &Position3<T>, n: usize) -> bool {
    let slack = T::lit(1e-9);
    let agrees = |reference: T, query: T| reference * query > -slack * reference * reference;
    if n == 3 {
        let orient = |a: usize, b: usize, d: usize, p: &Position3<T>| {
            (simplex[b] - simplex[a]).cross(&(simplex[d] - simplex[a])).dot(&(p - simplex[a]))
        };
        [(0, 1, 2, 3), (0, 1, 3, 2), (0, 2, 3, 1), (1, 2, 3, 0)]
            .iter()
            .all(|&(a, b, d, l)| agrees(orient(a, b, d, &simplex[l]), orient(a, b, d, c)))
    } else {
        let normal = (simplex[1] - simplex[0]).cross(&(simplex[2] - simplex[0]));
        let side = |a: usize, b: usize, p: &Position3<T>| (simplex[b] - simplex[a]).cross(&(p - simplex[a])).dot(&normal);
        [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
            .iter()
            .all(|&(a, b, l)| agrees(side(a, b, &simplex[l]), side(a, b, c)))
    }
}

/// Other agents ordered by distance to `h` (ties by id).
fn by_distance<T: Real>(positions: &PositionMap<T>, h: AgentId) -> Vec<(AgentId, T)> {
    let origin = positions[&h];
    let mut others: Vec<_> = positions
        .iter()
        .filter(|(id, _)| **id != h)
        .map(|(id, p)| (*id, (p - origin).norm()))
        .collect();
    others.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    others
}

/// Splits the agents into boundary and interior sets.
///
/// Agent `i` is interior iff some `n + 1` other agents form a simplex whose
/// barycentric weights at `i` all exceed `rho`.
pub fn classify_boundary_interior<T: Real>(
    positions: &PositionMap<T>,
    n: usize,
    rho: T,
    xi: T,
) -> Result<(BTreeSet<AgentId>, BTreeSet<AgentId>)> {
    NetworkParams { n, rho, xi, leader_override: None }.validate()?;
    check_positions(positions, n)?;
    let mut boundary = BTreeSet::new();
    let mut interior = BTreeSet::new();
    for (&i, target) in positions {
        // nearest candidates first: interior agents usually resolve early
        let others: Vec<AgentId> = by_distance(positions, i).into_iter().map(|(id, _)| id).collect();
        let enclosed = others.iter().copied().combinations(n + 1).any(|tuple| {
            weights_on(positions, &tuple, target, n, xi).is_some_and(|l| l.all_above(rho, n))
        });
        if enclosed {
            interior.insert(i);
        } else {
            boundary.insert(i);
        }
    }
    Ok((boundary, interior))
}

/// Chooses `n + 1` boundary agents as leaders.
///
/// An override is validated and returned as given. Otherwise the boundary
/// simplex of largest area/volume wins, ties going to the lexicographically
/// smallest id tuple.
pub fn select_leaders<T: Real>(
    boundary: &BTreeSet<AgentId>,
    positions: &PositionMap<T>,
    n: usize,
    leader_override: Option<&[AgentId]>,
) -> Result<Vec<AgentId>> {
    if let Some(chosen) = leader_override {
        if chosen.len() != n + 1 {
            return Err(Error::Selection(format!("{} leaders required, got {}", n + 1, chosen.len())));
        }
        if chosen.iter().collect::<BTreeSet<_>>().len() != chosen.len() {
            return Err(Error::Selection("leader ids repeat".into()));
        }
        if let Some(bad) = chosen.iter().find(|id| !boundary.contains(id)) {
            return Err(Error::Selection(format!("agent {bad} is not a boundary agent")));
        }
        if rank_simplex(&simplex_of(positions, chosen), n)? < n {
            return Err(Error::Selection("override leaders form a degenerate simplex".into()));
        }
        return Ok(chosen.to_vec());
    }
    if boundary.len() < n + 1 {
        return Err(Error::Selection(format!(
            "{} boundary agents cannot supply {} leaders",
            boundary.len(),
            n + 1
        )));
    }
    let mut best: Option<(T, Vec<AgentId>)> = None;
    for tuple in boundary.iter().copied().combinations(n + 1) {
        let pts = simplex_of(positions, &tuple);
        if rank_simplex(&pts, n)? < n {
            continue;
        }
        let measure = simplex_measure(&pts, n)?;
        let better = match &best {
            None => true,
            // combinations come out in lexicographic order, so only a strictly
            // larger measure displaces the incumbent
            Some((m, _)) => measure > *m * (T::one() + T::rank_rtol()),
        };
        if better {
            best = Some((measure, tuple));
        }
    }
    best.map(|(_, t)| t)
        .ok_or_else(|| Error::Selection("boundary agents are all degenerate".into()))
}

/// In-neighbors of interior agent `h`: the admissible simplex (weights at `h`
/// all above `rho`) with the smallest sum of distances to `h`.
///
/// Candidates are drawn from a pool of nearest agents that grows until the
/// best tuple found provably beats every tuple containing an agent outside
/// the pool.
pub fn find_in_neighbors<T: Real>(
    h: AgentId,
    positions: &PositionMap<T>,
    rho: T,
    n: usize,
    xi: T,
) -> Result<Vec<AgentId>> {
    let target = *positions
        .get(&h)
        .ok_or_else(|| Error::Argument(format!("unknown agent {h}")))?;
    let ranked = by_distance(positions, h);
    if ranked.len() < n + 1 {
        return Err(Error::Connectivity(h));
    }
    let distance: BTreeMap<AgentId, T> = ranked.iter().copied().collect();
    let mut pool_size = DEFAULT_NEIGHBOR_POOL.max(n + 1).min(ranked.len());
    loop {
        let mut pool: Vec<AgentId> = ranked[..pool_size].iter().map(|(id, _)| *id).collect();
        pool.sort();
        let mut best: Option<(T, Vec<AgentId>)> = None;
        for tuple in pool.iter().copied().combinations(n + 1) {
            let Some(l) = weights_on(positions, &tuple, &target, n, xi) else {
                continue;
            };
            if !l.all_above(rho, n) {
                continue;
            }
            let total = tuple.iter().fold(T::zero(), |s, id| s + distance[id]);
            let replace = match &best {
                None => true,
                Some((b, _)) => total < *b - T::weight_tol() * (T::one() + b.abs()),
            };
            if replace {
                best = Some((total, tuple));
            }
        }
        let exhausted = pool_size == ranked.len();
        if let Some((total, tuple)) = best {
            if exhausted {
                return Ok(tuple);
            }
            // any tuple using an agent beyond the pool costs at least this much
            let outsider_floor = ranked[pool_size].1 + ranked[..n].iter().fold(T::zero(), |s, (_, d)| s + *d);
            if total <= outsider_floor {
                return Ok(tuple);
            }
        } else if exhausted {
            return Err(Error::Connectivity(h));
        }
        pool_size = (pool_size * 2).min(ranked.len());
    }
}

/// Frozen weights of follower `i` on its in-neighbor simplex.
pub fn communication_weights<T: Real>(
    i: AgentId,
    neighbors: &[AgentId],
    positions: &PositionMap<T>,
    n: usize,
    xi: T,
) -> Result<Vec<T>> {
    let target = positions
        .get(&i)
        .ok_or_else(|| Error::Argument(format!("unknown agent {i}")))?;
    if let Some(missing) = neighbors.iter().find(|id| !positions.contains_key(id)) {
        return Err(Error::Argument(format!("unknown in-neighbor {missing} of agent {i}")));
    }
    let pts = simplex_of(positions, neighbors);
    if neighbors.len() != n + 1 || rank_simplex(&pts, n)? < n {
        return Err(Error::Degenerate(format!("in-neighbors of agent {i} do not form an {n}-simplex")));
    }
    let l = lambda_nd(&pts, target, n, xi)?;
    Ok(l.leading(n).to_vec())
}

/// Assembles `W`, splits it into `B | A`, and derives `D` and `W_L`.
pub fn build_weight_matrices<T: Real>(
    leaders: &[AgentId],
    followers: &[AgentId],
    in_neighbors: &BTreeMap<AgentId, Vec<AgentId>>,
    weights: &BTreeMap<AgentId, Vec<T>>,
) -> Result<WeightMatrices<T>> {
    let n_lead = leaders.len();
    let n_fol = followers.len();
    let mut column = BTreeMap::new();
    for (c, id) in leaders.iter().chain(followers).enumerate() {
        column.insert(*id, c);
    }
    let mut w = DMatrix::zeros(n_fol, n_lead + n_fol);
    for (row, f) in followers.iter().enumerate() {
        let nbrs = in_neighbors
            .get(f)
            .ok_or_else(|| Error::Network(format!("follower {f} has no in-neighbors")))?;
        let ws = weights
            .get(f)
            .ok_or_else(|| Error::Network(format!("follower {f} has no weights")))?;
        if nbrs.len() != ws.len() {
            return Err(Error::Network(format!("follower {f}: neighbor/weight count mismatch")));
        }
        for (nb, wt) in nbrs.iter().zip(ws) {
            let c = *column
                .get(nb)
                .ok_or_else(|| Error::Network(format!("in-neighbor {nb} of {f} is not in the network")))?;
            w[(row, c)] += *wt;
        }
    }
    let b = w.columns(0, n_lead).into_owned();
    let a = w.columns(n_lead, n_fol).into_owned();
    let d = &a - DMatrix::identity(n_fol, n_fol);
    let d_inv = d
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Network("D = A - I is singular (followers cut off from leaders)".into()))?;
    let w_l = -(&d_inv * &b);
    Ok(WeightMatrices { w, a, b, d, d_inv, w_l })
}

/// Amplification `Ξ_max = max_l (-Σ_j D⁻¹_lj + Σ_j B_lj)` and deviation bound
/// `Δ = Ξ_max √(Δx² + Δy² + Δz²)`.
pub fn deviation_bound<T: Real>(d: &DMatrix<T>, b: &DMatrix<T>, delta_x: T, delta_y: T, delta_z: T) -> Result<(T, T)> {
    let d_inv = d
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Network("D is singular".into()))?;
    let xi_max = amplification(&d_inv, b);
    let delta = xi_max * (delta_x * delta_x + delta_y * delta_y + delta_z * delta_z).sqrt();
    Ok((xi_max, delta))
}

fn amplification<T: Real>(d_inv: &DMatrix<T>, b: &DMatrix<T>) -> T {
    (0..d_inv.nrows())
        .map(|l| -d_inv.row(l).sum() + b.row(l).sum())
        .fold(T::zero(), |m, v| m.max(v))
}

/// Splits off eigenvalues exposed by rows or columns that vanish off the
/// diagonal; returns them with the remaining block.
fn deflate<T: Real>(m: &DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let mut m = m.clone();
    let mut exposed = Vec::new();
    loop {
        let n = m.nrows();
        let isolated = (0..n).find(|&i| {
            (0..n).all(|j| j == i || m[(i, j)] == T::zero()) || (0..n).all(|j| j == i || m[(j, i)] == T::zero())
        });
        let Some(i) = isolated else { return (exposed, m) };
        exposed.push(m[(i, i)]);
        m = m.remove_row(i).remove_column(i);
    }
}

/// Largest real part among the eigenvalues of `m`.
///
/// Rows and columns that are zero off the diagonal (boundary followers give
/// many) are deflated first, since the repeated eigenvalues they carry stall
/// the QR iteration. The Schur iteration on the rest is bounded; if it
/// stalls, the transpose and a reflected similarity (same spectrum,
/// different Hessenberg form) are tried before giving up.
pub fn spectral_abscissa<T: Real>(m: &DMatrix<T>) -> Result<T> {
    let (exposed, rest) = deflate(m);
    let floor = exposed.into_iter().fold(T::min_value().unwrap(), |a, b| a.max(b));
    if rest.is_empty() {
        return Ok(if m.is_empty() { T::zero() } else { floor });
    }
    let n = rest.nrows();
    let v = DVector::from_fn(n, |i, _| T::lit((i + 1) as f64));
    let h = DMatrix::identity(n, n) - &v * v.transpose() * (T::lit(2.0) / v.norm_squared());
    let max_iter = 200 * n.max(10);
    for candidate in [rest.clone(), rest.transpose(), &h * &rest * &h] {
        if let Some(schur) = Schur::try_new(candidate, T::default_epsilon(), max_iter) {
            let eig = schur.complex_eigenvalues();
            return Ok(eig.iter().map(|z| z.re).fold(floor, |a, b| a.max(b)));
        }
    }
    Err(Error::Network("eigenvalue iteration did not converge".into()))
}

pub fn is_hurwitz<T: Real>(m: &DMatrix<T>) -> Result<bool> {
    Ok(m.is_empty() || spectral_abscissa(m)? < T::zero())
}

impl<T: Real> ReferenceConfiguration<T> {
    /// Builds the full network from reference positions.
    pub fn build(positions: &PositionMap<T>, params: &NetworkParams<T>) -> Result<Self> {
        params.validate()?;
        let n = params.n;
        let (boundary, interior) = classify_boundary_interior(positions, n, params.rho, params.xi)?;
        let leaders = select_leaders(&boundary, positions, n, params.leader_override.as_deref())?;
        let leader_set: BTreeSet<_> = leaders.iter().copied().collect();
        let followers: Vec<AgentId> = positions.keys().copied().filter(|id| !leader_set.contains(id)).collect();

        let mut in_neighbors = BTreeMap::new();
        let mut weights = BTreeMap::new();
        for &f in &followers {
            let nbrs = if boundary.contains(&f) {
                leaders.clone()
            } else {
                find_in_neighbors(f, positions, params.rho, n, params.xi)?
            };
            let w = communication_weights(f, &nbrs, positions, n, params.xi)?;
            in_neighbors.insert(f, nbrs);
            weights.insert(f, w);
        }
        let matrices = build_weight_matrices(&leaders, &followers, &in_neighbors, &weights)?;
        if !is_hurwitz(&matrices.d)? {
            return Err(Error::Network("D = A - I is not Hurwitz".into()));
        }
        let xi_max = amplification(&matrices.d_inv, &matrices.b);
        Ok(Self {
            n,
            rho: params.rho,
            xi: params.xi,
            ref_positions: positions.clone(),
            leaders,
            followers,
            boundary,
            interior,
            in_neighbors,
            weights,
            matrices,
            xi_max,
        })
    }

    /// `Δ` for per-axis tracking tolerances.
    pub fn deviation(&self, delta_x: T, delta_y: T, delta_z: T) -> T {
        self.xi_max * (delta_x * delta_x + delta_y * delta_y + delta_z * delta_z).sqrt()
    }

    pub fn is_leader(&self, id: AgentId) -> bool {
        self.leaders.contains(&id)
    }

    pub fn contains(&self, id: AgentId) -> bool {
        self.ref_positions.contains_key(&id)
    }

    /// Row of `W_L` for `follower`.
    pub fn alpha(&self, follower: AgentId) -> Option<Vec<T>> {
        let row = self.followers.iter().position(|f| *f == follower)?;
        Some(self.matrices.w_l.row(row).iter().copied().collect())
    }

    /// Smallest pairwise distance in the reference configuration.
    pub fn min_separation(&self) -> T {
        min_pairwise_distance(self.ref_positions.values())
    }

    /// Re-checks the structural invariants of a built network.
    pub fn check_invariants(&self) -> Result<()> {
        let tol = T::weight_tol();
        for f in &self.followers {
            let s = self.weights[f].iter().fold(T::zero(), |a, &b| a + b);
            if (s - T::one()).abs() > tol {
                return Err(Error::Network(format!("weights of {f} sum to {s}")));
            }
        }
        if !is_hurwitz(&self.matrices.d)? {
            return Err(Error::Network("D is not Hurwitz".into()));
        }
        // -D⁻¹ is entry-wise nonnegative when every follower weight is
        if self.matrices.a.iter().all(|&v| v >= T::zero())
            && self.matrices.d_inv.iter().any(|&v| v > T::lit(1e-12))
        {
            return Err(Error::Network("D⁻¹ has a positive entry".into()));
        }
        for r in 0..self.matrices.w_l.nrows() {
            let s = self.matrices.w_l.row(r).sum();
            if (s - T::one()).abs() > tol {
                return Err(Error::Network(format!("row {r} of W_L sums to {s}")));
            }
        }
        Ok(())
    }
}

pub fn min_pairwise_distance<'a, T: Real>(points: impl IntoIterator<Item = &'a Position3<T>>) -> T {
    let pts: Vec<_> = points.into_iter().collect();
    let mut best = T::max_value().unwrap();
    for (a, b) in pts.iter().tuple_combinations() {
        best = best.min((*a - *b).norm());
    }
    best
}
