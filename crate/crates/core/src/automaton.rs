//! Hybrid supervisor switching between deformation and exclusion modes.
//!
//! The team runs in HDM until a follower fails its weight check inside the
//! containment domain. It then switches to CEM, where healthy agents flow
//! around the flagged ones, and returns to HDM with a freshly built
//! reference network once every flagged agent has left the domain.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Position3;
use crate::refnet::PositionMap;
use crate::scalar::Real;
use crate::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    Hdm,
    Cem,
}

/// Norm measuring distance from the containment center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    #[default]
    L1,
    L2,
}

/// Whether the containment center follows the healthy agents during CEM or
/// stays where it was at CEM entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterPolicy {
    #[default]
    Tracking,
    Frozen,
}

/// Supervisor state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeState<T> {
    pub mode: Mode,
    pub entered_at: T,
    pub containment_center: Position3<T>,
    pub containment_half_size: T,
    pub norm_kind: NormKind,
    pub center_policy: CenterPolicy,
    /// Agents excluded by the current (or last) CEM episode.
    pub anomalous: BTreeSet<AgentId>,
}

/// Mode switches reported by [`transition`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransitionEvent<T> {
    EnterCem { time: T, agents: Vec<AgentId> },
    /// Return to HDM; the reference network must be rebuilt from current
    /// positions without `excluded`.
    ReferenceReset { time: T, excluded: Vec<AgentId> },
}

impl<T: Real> ModeState<T> {
    pub fn new(center: Position3<T>, half_size: T, norm_kind: NormKind, center_policy: CenterPolicy) -> Result<Self> {
        if !(half_size > T::zero()) {
            return Err(Error::Argument("containment half-size must be positive".into()));
        }
        Ok(Self {
            mode: Mode::Hdm,
            entered_at: T::zero(),
            containment_center: center,
            containment_half_size: half_size,
            norm_kind,
            center_policy,
            anomalous: BTreeSet::new(),
        })
    }

    /// Moves the containment center unless it is frozen for the current
    /// CEM episode.
    pub fn track_center(&mut self, center: Position3<T>) {
        if !(self.mode == Mode::Cem && self.center_policy == CenterPolicy::Frozen) {
            self.containment_center = center;
        }
    }

    pub fn contains(&self, r: &Position3<T>) -> bool {
        containment_contains(r, &self.containment_center, self.containment_half_size, self.norm_kind)
    }
}

/// `Σ β_i r_i`, uniform weights by default.
pub fn nominal_containment_position<T: Real>(positions: &[Position3<T>], betas: Option<&[T]>) -> Result<Position3<T>> {
    if positions.is_empty() {
        return Err(Error::Argument("containment center needs at least one position".into()));
    }
    match betas {
        None => Ok(positions.iter().fold(Position3::zeros(), |a, p| a + p) / T::from_usize(positions.len()).unwrap()),
        Some(b) => {
            if b.len() != positions.len() {
                return Err(Error::Argument("one beta per position required".into()));
            }
            if b.iter().any(|x| *x < T::zero()) {
                return Err(Error::Argument("betas must be nonnegative".into()));
            }
            let sum = b.iter().fold(T::zero(), |a, x| a + *x);
            if (sum - T::one()).abs() > T::weight_tol() {
                return Err(Error::Argument(format!("betas sum to {sum}, not 1")));
            }
            Ok(positions.iter().zip(b).fold(Position3::zeros(), |a, (p, w)| a + p * *w))
        }
    }
}

pub fn containment_distance<T: Real>(r: &Position3<T>, center: &Position3<T>, norm_kind: NormKind) -> T {
    let d = r - center;
    match norm_kind {
        NormKind::L1 => d.x.abs() + d.y.abs() + d.z.abs(),
        NormKind::L2 => d.norm(),
    }
}

/// Membership in the containment domain, boundary included.
pub fn containment_contains<T: Real>(r: &Position3<T>, center: &Position3<T>, half_size: T, norm_kind: NormKind) -> bool {
    containment_distance(r, center, norm_kind) <= half_size
}

/// One supervisor step.
///
/// In HDM, any flagged agent inside the domain switches to CEM. In CEM the
/// flagged set is fixed; once all its members are outside the domain the
/// mode returns to HDM with a reference reset.
pub fn transition<T: Real>(
    state: &ModeState<T>,
    anomalous: &BTreeSet<AgentId>,
    actual: &PositionMap<T>,
    clock: T,
) -> (ModeState<T>, Vec<TransitionEvent<T>>) {
    let mut next = state.clone();
    let inside = |id: &AgentId| actual.get(id).is_some_and(|r| state.contains(r));
    match state.mode {
        Mode::Hdm => {
            if anomalous.iter().any(inside) {
                next.mode = Mode::Cem;
                next.entered_at = clock;
                next.anomalous = anomalous.clone();
                let agents = anomalous.iter().copied().collect();
                return (next, vec![TransitionEvent::EnterCem { time: clock, agents }]);
            }
        }
        Mode::Cem => {
            if !state.anomalous.iter().any(inside) {
                next.mode = Mode::Hdm;
                next.entered_at = clock;
                let excluded = state.anomalous.iter().copied().collect();
                return (next, vec![TransitionEvent::ReferenceReset { time: clock, excluded }]);
            }
        }
    }
    (next, Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64, z: f64) -> Position3<f64> {
        Position3::new(x, y, z)
    }

    #[test]
    fn nominal_position() {
        let pts = [p(0., 0., 0.), p(2., 0., 0.)];
        assert_eq!(nominal_containment_position(&pts, None).unwrap(), p(1., 0., 0.));
        assert_eq!(nominal_containment_position(&pts, Some(&[1.0, 0.0])).unwrap(), p(0., 0., 0.));
        assert!(nominal_containment_position(&pts, Some(&[0.7, 0.7])).is_err());
        assert!(nominal_containment_position(&pts, Some(&[1.5, -0.5])).is_err());
    }

    #[test]
    fn one_norm_box() {
        let c = p(0., 0., 0.);
        assert!(containment_contains(&p(40., 0., 0.), &c, 40.0, NormKind::L1));
        assert!(!containment_contains(&p(40.1, 0., 0.), &c, 40.0, NormKind::L1));
        assert!(containment_contains(&p(20., 20., 0.), &c, 40.0, NormKind::L1));
        assert!(!containment_contains(&p(20., 20.1, 0.), &c, 40.0, NormKind::L1));
        assert!(containment_contains(&p(20., 20.1, 0.), &c, 40.0, NormKind::L2));
    }

    fn state() -> ModeState<f64> {
        ModeState::new(p(0., 0., 0.), 40.0, NormKind::L1, CenterPolicy::Frozen).unwrap()
    }

    #[test]
    fn transitions() {
        let mut pos = PositionMap::new();
        pos.insert(AgentId(11), p(5., 5., 0.));
        pos.insert(AgentId(1), p(0., 0., 0.));
        let none = BTreeSet::new();
        let (s, ev) = transition(&state(), &none, &pos, 1.0);
        assert_eq!(s.mode, Mode::Hdm);
        assert!(ev.is_empty());

        let flagged: BTreeSet<_> = [AgentId(11)].into_iter().collect();
        let (s, ev) = transition(&state(), &flagged, &pos, 100.3);
        assert_eq!(s.mode, Mode::Cem);
        assert_eq!(s.entered_at, 100.3);
        assert_eq!(ev, vec![TransitionEvent::EnterCem { time: 100.3, agents: vec![AgentId(11)] }]);

        // still inside
        let (s2, ev) = transition(&s, &none, &pos, 101.0);
        assert_eq!(s2.mode, Mode::Cem);
        assert!(ev.is_empty());

        pos.insert(AgentId(11), p(41., 0., 0.));
        let (s3, ev) = transition(&s2, &none, &pos, 118.0);
        assert_eq!(s3.mode, Mode::Hdm);
        assert_eq!(ev, vec![TransitionEvent::ReferenceReset { time: 118.0, excluded: vec![AgentId(11)] }]);
    }

    #[test]
    fn flagged_outside_domain_keeps_hdm() {
        let mut pos = PositionMap::new();
        pos.insert(AgentId(3), p(100., 0., 0.));
        let flagged: BTreeSet<_> = [AgentId(3)].into_iter().collect();
        assert_eq!(transition(&state(), &flagged, &pos, 0.0).0.mode, Mode::Hdm);
    }

    #[test]
    fn center_policies() {
        let mut s = state();
        s.mode = Mode::Cem;
        s.track_center(p(1., 1., 1.));
        assert_eq!(s.containment_center, p(0., 0., 0.));
        s.center_policy = CenterPolicy::Tracking;
        s.track_center(p(1., 1., 1.));
        assert_eq!(s.containment_center, p(1., 1., 1.));
        assert!(ModeState::new(p(0., 0., 0.), 0.0, NormKind::L1, CenterPolicy::Tracking).is_err());
    }
}
