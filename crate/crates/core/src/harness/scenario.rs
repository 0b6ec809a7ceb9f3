//! Scenario files.
//!
//! Scenarios are TOML documents. Lengths are meters, times seconds and
//! angles radians.
//!
//! ```toml
//! n = 2
//! dt = 0.001
//! duration = 20.0
//! gain = 25.0                # optional
//! leaders = [1, 2, 3]        # optional override
//!
//! [tolerances]               # per-axis tracking tolerances
//! x = 0.1
//!
//! [containment]
//! half_size = 40.0
//! norm = "l1"                # or "l2"
//! center = "tracking"        # or "frozen"
//!
//! [cem]
//! u_inf = 10.0
//! theta_inf = 0.0
//! exclusion_radius = 4.0
//! v_phi = 10.0
//!
//! [[agents]]
//! id = 1
//! position = [0.0, 0.0, 5.0]
//!
//! [[leader_trajectory]]
//! id = 1
//! waypoints = [{ t = 0.0, position = [0.0, 0.0, 5.0] }, { t = 10.0, position = [20.0, 0.0, 5.0] }]
//!
//! [[failures]]
//! agent = 11
//! time = 5.0
//! kind = "freeze"            # or kind = "drift", velocity = [0.5, 0.0, 0.0]
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::automaton::{CenterPolicy, NormKind};
use crate::error::{Error, Result};
use crate::geometry::Position3;
use crate::refnet::{default_rho, PositionMap};
use crate::AgentId;

fn default_gain() -> f64 {
    25.0
}
fn one() -> f64 {
    1.0
}
fn default_radius() -> f64 {
    0.5
}
fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "Tolerances::axis")]
    pub x: f64,
    #[serde(default = "Tolerances::axis")]
    pub y: f64,
    #[serde(default = "Tolerances::axis")]
    pub z: f64,
}

impl Tolerances {
    fn axis() -> f64 {
        0.1
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { x: 0.1, y: 0.1, z: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContainmentConfig {
    #[serde(default = "ContainmentConfig::half")]
    pub half_size: f64,
    #[serde(default)]
    pub norm: NormKind,
    #[serde(default)]
    pub center: CenterPolicy,
    /// Optional weights of the containment center per agent; renormalized
    /// over the agents currently healthy.
    #[serde(default)]
    pub betas: Option<BTreeMap<AgentId, f64>>,
}

impl ContainmentConfig {
    fn half() -> f64 {
        40.0
    }
}

impl Default for ContainmentConfig {
    fn default() -> Self {
        Self { half_size: 40.0, norm: NormKind::L1, center: CenterPolicy::Tracking, betas: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CemConfig {
    #[serde(default = "CemConfig::u")]
    pub u_inf: f64,
    #[serde(default)]
    pub theta_inf: f64,
    #[serde(default = "CemConfig::radius")]
    pub exclusion_radius: f64,
    #[serde(default = "CemConfig::u")]
    pub v_phi: f64,
}

impl CemConfig {
    fn u() -> f64 {
        10.0
    }
    fn radius() -> f64 {
        4.0
    }
}

impl Default for CemConfig {
    fn default() -> Self {
        Self { u_inf: 10.0, theta_inf: 0.0, exclusion_radius: 4.0, v_phi: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: AgentId,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub position: [f64; 3],
}

/// Piecewise-linear path of one leader. Before the first waypoint the path
/// sits at the first position, after the last at the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderTrajectory {
    pub id: AgentId,
    pub waypoints: Vec<Waypoint>,
}

impl LeaderTrajectory {
    pub fn position(&self, t: f64) -> Position3<f64> {
        let w = &self.waypoints;
        let k = w.partition_point(|p| p.t <= t);
        let v = |p: &Waypoint| Position3::from(p.position);
        if k == 0 {
            return v(&w[0]);
        }
        if k == w.len() {
            return v(&w[k - 1]);
        }
        let (a, b) = (&w[k - 1], &w[k]);
        let s = (t - a.t) / (b.t - a.t);
        v(a) + (v(b) - v(a)) * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FailureKind {
    /// Hold the position held at failure time.
    Freeze,
    /// Move at a constant velocity.
    Drift { velocity: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureSpec {
    pub agent: AgentId,
    pub time: f64,
    #[serde(flatten)]
    pub kind: FailureKind,
}

/// Validated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub n: usize,
    pub dt: f64,
    pub duration: f64,
    #[serde(default = "default_gain")]
    pub gain: f64,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default = "one")]
    pub xi: f64,
    #[serde(default = "default_radius")]
    pub vehicle_radius: f64,
    #[serde(default)]
    pub d_min: Option<f64>,
    /// Log every `log_stride`-th tick (events are always logged).
    #[serde(default = "default_stride")]
    pub log_stride: usize,
    #[serde(default)]
    pub leaders: Option<Vec<AgentId>>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub containment: ContainmentConfig,
    #[serde(default)]
    pub cem: CemConfig,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub leader_trajectory: Vec<LeaderTrajectory>,
    #[serde(default)]
    pub failures: Vec<FailureSpec>,
}

/// Rewrites serde's "missing field `x`" into "x required".
fn describe_parse_error(e: toml::de::Error) -> Error {
    let msg = e.message().to_string();
    if let Some(rest) = msg.strip_prefix("missing field `") {
        if let Some(field) = rest.strip_suffix('`') {
            return Error::Scenario(format!("{field} required"));
        }
    }
    Error::Scenario(e.to_string().trim_end().to_string())
}

fn positive(value: f64, field: &str) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::Scenario(format!("{field} must be positive, got {value}")))
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(describe_parse_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Scenario(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn rho(&self) -> f64 {
        self.rho.unwrap_or_else(|| default_rho(self.n))
    }

    pub fn reference_positions(&self) -> PositionMap<f64> {
        self.agents.iter().map(|a| (a.id, Position3::from(a.position))).collect()
    }

    pub fn trajectory(&self, id: AgentId) -> Option<&LeaderTrajectory> {
        self.leader_trajectory.iter().find(|t| t.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n != 2 && self.n != 3 {
            return Err(Error::Scenario(format!("n: must be 2 or 3, got {}", self.n)));
        }
        positive(self.dt, "dt")?;
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::Scenario(format!("duration: must be nonnegative, got {}", self.duration)));
        }
        positive(self.gain, "gain")?;
        positive(self.vehicle_radius, "vehicle_radius")?;
        if let Some(d) = self.d_min {
            positive(d, "d_min")?;
        }
        if self.log_stride == 0 {
            return Err(Error::Scenario("log_stride: must be at least 1".into()));
        }
        if self.xi == 0.0 || !self.xi.is_finite() {
            return Err(Error::Scenario("xi: must be finite and nonzero".into()));
        }
        let cap = 1.0 / (self.n as f64 + 1.0);
        if !(self.rho() > 0.0 && self.rho() < cap) {
            return Err(Error::Scenario(format!("rho: must lie in (0, {cap}), got {}", self.rho())));
        }
        for (axis, v) in [("x", self.tolerances.x), ("y", self.tolerances.y), ("z", self.tolerances.z)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Scenario(format!("tolerances.{axis}: must be nonnegative")));
            }
        }
        positive(self.containment.half_size, "containment.half_size")?;
        if let Some(b) = &self.containment.betas {
            if b.values().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Scenario("containment.betas: must be nonnegative".into()));
            }
        }
        positive(self.cem.u_inf, "cem.u_inf")?;
        positive(self.cem.exclusion_radius, "cem.exclusion_radius")?;
        positive(self.cem.v_phi, "cem.v_phi")?;
        if !self.cem.theta_inf.is_finite() {
            return Err(Error::Scenario("cem.theta_inf: must be finite".into()));
        }

        let mut ids = BTreeSet::new();
        for (k, a) in self.agents.iter().enumerate() {
            if !ids.insert(a.id) {
                return Err(Error::Scenario(format!("agents[{k}]: duplicate agent id {}", a.id)));
            }
            if a.position.iter().any(|v| !v.is_finite()) {
                return Err(Error::Scenario(format!("agents[{k}].position: must be finite")));
            }
        }
        if let Some(leaders) = &self.leaders {
            if leaders.len() != self.n + 1 {
                return Err(Error::Scenario(format!("leaders: need exactly {} ids", self.n + 1)));
            }
            for l in leaders {
                if !ids.contains(l) {
                    return Err(Error::Scenario(format!("leaders: unknown agent {l}")));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for (k, tr) in self.leader_trajectory.iter().enumerate() {
            if !ids.contains(&tr.id) {
                return Err(Error::Scenario(format!("leader_trajectory[{k}].id: unknown agent {}", tr.id)));
            }
            if !seen.insert(tr.id) {
                return Err(Error::Scenario(format!("leader_trajectory[{k}]: second trajectory for agent {}", tr.id)));
            }
            if tr.waypoints.is_empty() {
                return Err(Error::Scenario(format!("leader_trajectory[{k}].waypoints: empty")));
            }
            for (j, w) in tr.waypoints.iter().enumerate() {
                if !w.t.is_finite() || w.position.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Scenario(format!("leader_trajectory[{k}].waypoints[{j}]: must be finite")));
                }
                if j > 0 && w.t <= tr.waypoints[j - 1].t {
                    return Err(Error::Scenario(format!(
                        "leader_trajectory[{k}].waypoints[{j}]: times must be strictly increasing"
                    )));
                }
            }
        }
        for (k, f) in self.failures.iter().enumerate() {
            if !ids.contains(&f.agent) {
                return Err(Error::Scenario(format!("failures[{k}].agent: unknown agent {}", f.agent)));
            }
            if !(f.time.is_finite() && f.time >= 0.0) {
                return Err(Error::Scenario(format!("failures[{k}].time: must be nonnegative")));
            }
            if f.time > self.duration {
                log::warn!("failure of agent {} at t = {} lies beyond the run and has no effect", f.agent, f.time);
            }
            if let FailureKind::Drift { velocity } = f.kind {
                if velocity.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Scenario(format!("failures[{k}].velocity: must be finite")));
                }
            }
        }
        Ok(())
    }
}
