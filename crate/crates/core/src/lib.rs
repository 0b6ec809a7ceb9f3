//! Resilient continuum-deformation coordination for multi-agent teams.
//!
//! A team normally moves as a homogeneous deformation driven by `n + 1`
//! leaders ([`hdm`]), with followers acquiring the motion from in-neighbor
//! simplexes chosen on a reference configuration ([`refnet`]). Followers
//! continuously recompute their barycentric weights from actual positions;
//! a weight leaving its admissible interval flags the agent ([`anomaly`]).
//! Once an agent is flagged the supervisor ([`automaton`]) switches to an
//! ideal-flow mode in which healthy agents slide along streamlines of a
//! uniform flow past doublets wrapping the failed agents ([`cem`]).
//! [`harness`] ties everything into a fixed-step simulator.
//!
//! The numeric modules are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, which is what the harness uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(a > b)` also rejects NaN

pub mod anomaly;
pub mod automaton;
pub mod cem;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod hdm;
pub mod refnet;
pub mod scalar;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};
pub use scalar::Real;

/// Identifier of an agent in the team.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for AgentId {
    fn from(v: u32) -> Self {
        AgentId(v)
    }
}

pub type Position3 = geometry::Position3<f64>;
pub type LambdaWeights = geometry::LambdaWeights<f64>;
pub type ReferenceConfiguration = refnet::ReferenceConfiguration<f64>;
pub type WeightMatrices = refnet::WeightMatrices<f64>;
pub type HomogeneousTransform = hdm::HomogeneousTransform<f64>;
pub type HdmErrors = hdm::HdmErrors<f64>;
pub type Doublet = cem::Doublet<f64>;
pub type FlowField = cem::FlowField<f64>;
pub type FlowSample = cem::FlowSample<f64>;
pub type TransientWeightReport = anomaly::TransientWeightReport<f64>;
pub type ModeState = automaton::ModeState<f64>;

/// Single-precision flavors of the numeric types.
pub mod f32 {
    pub type Position3 = crate::geometry::Position3<f32>;
    pub type ReferenceConfiguration = crate::refnet::ReferenceConfiguration<f32>;
    pub type FlowField = crate::cem::FlowField<f32>;
    pub type HomogeneousTransform = crate::hdm::HomogeneousTransform<f32>;
}
