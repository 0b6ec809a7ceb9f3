//! Fixed-step simulation loop.
//!
//! Every agent is a single integrator `ṙ = g (r_d − r)` integrated with the
//! classical fourth-order scheme over the whole team at once, so followers
//! see their in-neighbors' intermediate stage positions. After each step the
//! supervisor runs the weight checks (in HDM), moves the containment center
//! and applies mode transitions.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::anomaly::{attribution_ambiguities, evaluate_network, partition_health, TransientWeightReport};
use crate::automaton::{nominal_containment_position, transition, Mode, ModeState, TransitionEvent};
use crate::cem::{assign_stream_constants, build_flow_from_failures, step_streamline, FlowField};
use crate::error::{Error, Result};
use crate::geometry::Position3;
use crate::harness::log::{AgentSample, EventRecord, LogRow, MarginSample, NetworkSummary, SimEvent, TrajectoryLog};
use crate::harness::scenario::{FailureKind, FailureSpec, ScenarioConfig};
use crate::hdm::{collision_safety_margin, fit_homogeneous_transform, leader_reference};
use crate::refnet::{NetworkParams, PositionMap, ReferenceConfiguration};
use crate::AgentId;

type P3 = Position3<f64>;

/// What drives an agent during a step.
#[derive(Debug, Clone)]
enum Drive {
    Leader(usize),
    Follower(Vec<(usize, f64)>),
    /// Streamline target interpolated between the start and end of the step.
    Stream(P3, P3),
    Hold(P3),
    Velocity(P3),
}

#[derive(Debug, Clone)]
struct CemEpisode {
    field: FlowField<f64>,
    psi0: BTreeMap<AgentId, f64>,
    targets: BTreeMap<usize, P3>,
    stalled: BTreeSet<usize>,
}

/// Network-dependent quantities derived once per (re)build.
#[derive(Debug, Clone)]
struct Network {
    config: ReferenceConfiguration<f64>,
    delta: f64,
    d_min: f64,
    /// Leader commanded position at HDM entry and the entry time.
    anchors: Vec<(P3, f64)>,
}

/// Simulator state. Build with [`Simulation::new`], then [`Simulation::run`]
/// or step manually with [`Simulation::step`].
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: ScenarioConfig,
    ids: Vec<AgentId>,
    index: BTreeMap<AgentId, usize>,
    pos: Vec<P3>,
    tick: u64,
    network: Network,
    mode: ModeState<f64>,
    pending: Vec<FailureSpec>,
    failed: BTreeMap<usize, FailureKind>,
    excluded: BTreeSet<AgentId>,
    holds: BTreeMap<usize, P3>,
    cem: Option<CemEpisode>,
    reports: Vec<TransientWeightReport<f64>>,
    flagged: BTreeSet<AgentId>,
    safe: bool,
    log: TrajectoryLog,
}

fn lerp(a: &P3, b: &P3, s: f64) -> P3 {
    a + (b - a) * s
}

fn numeric_context(tick: u64, time: f64, e: Error) -> Error {
    match e {
        Error::Singular(_) | Error::Singularity { .. } | Error::Stagnation { .. } => {
            Error::Numeric { tick, time, message: e.to_string() }
        }
        other => other,
    }
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let ids: Vec<AgentId> = cfg.reference_positions().keys().copied().collect();
        let index = ids.iter().enumerate().map(|(k, id)| (*id, k)).collect();
        let refs = cfg.reference_positions();
        let pos: Vec<P3> = ids.iter().map(|id| refs[id]).collect();
        let mut params = NetworkParams::new(cfg.n).with_rho(cfg.rho());
        params.xi = cfg.xi;
        if let Some(l) = &cfg.leaders {
            params = params.with_leaders(l.clone());
        }
        let config = ReferenceConfiguration::build(&refs, &params)?;
        let network = Self::derive_network(&cfg, config, 0.0);
        let mut pending = cfg.failures.clone();
        pending.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.agent.cmp(&b.agent)));
        let mode = ModeState::new(P3::zeros(), cfg.containment.half_size, cfg.containment.norm, cfg.containment.center)?;
        let log = TrajectoryLog { name: cfg.name.clone(), dt: cfg.dt, agents: ids.clone(), ..Default::default() };
        let mut sim = Self {
            cfg,
            ids,
            index,
            pos,
            tick: 0,
            network,
            mode,
            pending,
            failed: BTreeMap::new(),
            excluded: BTreeSet::new(),
            holds: BTreeMap::new(),
            cem: None,
            reports: Vec::new(),
            flagged: BTreeSet::new(),
            safe: true,
            log,
        };
        sim.network_built(0.0);
        sim.supervise()?;
        Ok(sim)
    }

    fn derive_network(cfg: &ScenarioConfig, config: ReferenceConfiguration<f64>, time: f64) -> Network {
        let t = &cfg.tolerances;
        let delta = config.deviation(t.x, t.y, t.z);
        let d_min = cfg.d_min.unwrap_or_else(|| config.min_separation());
        let anchors = config.leaders.iter().map(|l| (config.ref_positions[l], time)).collect();
        Network { config, delta, d_min, anchors }
    }

    fn network_built(&mut self, time: f64) {
        let c = &self.network.config;
        self.log.networks.push(NetworkSummary {
            time,
            leaders: c.leaders.clone(),
            boundary: c.boundary.iter().copied().collect(),
            interior: c.interior.iter().copied().collect(),
            in_neighbors: c.in_neighbors.clone(),
            weights: c.weights.clone(),
            xi_max: c.xi_max,
            delta: self.network.delta,
            d_min: self.network.d_min,
        });
        let event = SimEvent::NetworkBuilt {
            leaders: c.leaders.clone(),
            xi_max: c.xi_max,
            delta: self.network.delta,
            d_min: self.network.d_min,
        };
        self.event(event);
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.cfg.dt
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn mode(&self) -> &ModeState<f64> {
        &self.mode
    }

    pub fn network(&self) -> &ReferenceConfiguration<f64> {
        &self.network.config
    }

    /// Deviation bound `Δ` of the current network.
    pub fn delta(&self) -> f64 {
        self.network.delta
    }

    pub fn flow_field(&self) -> Option<&FlowField<f64>> {
        self.cem.as_ref().map(|c| &c.field)
    }

    pub fn stream_constants(&self) -> Option<&BTreeMap<AgentId, f64>> {
        self.cem.as_ref().map(|c| &c.psi0)
    }

    pub fn position(&self, id: AgentId) -> Option<P3> {
        self.index.get(&id).map(|&k| self.pos[k])
    }

    pub fn positions(&self) -> PositionMap<f64> {
        self.ids.iter().copied().zip(self.pos.iter().copied()).collect()
    }

    pub fn log(&self) -> &TrajectoryLog {
        &self.log
    }

    pub fn into_log(self) -> TrajectoryLog {
        self.log
    }

    /// Agents that are still coordinating (in the network and not flagged).
    pub fn healthy(&self) -> BTreeSet<AgentId> {
        self.network.config.ref_positions.keys().filter(|id| !self.excluded.contains(id)).copied().collect()
    }

    fn event(&mut self, event: SimEvent) {
        log::debug!("t = {:.3}: {event:?}", self.time());
        self.log.events.push(EventRecord { tick: self.tick, time: self.time(), event });
    }

    /// Commanded position of the `k`-th leader at time `t`.
    fn leader_command(&self, k: usize, t: f64) -> P3 {
        let (anchor, t0) = self.network.anchors[k];
        match self.cfg.trajectory(self.network.config.leaders[k]) {
            Some(tr) => anchor + (tr.position(t) - tr.position(t0)),
            None => anchor,
        }
    }

    fn leader_commands(&self, t: f64) -> Vec<P3> {
        (0..self.network.config.leaders.len()).map(|k| self.leader_command(k, t)).collect()
    }

    fn activate_failures(&mut self) {
        let t = self.time();
        let eps = 1e-9 * self.cfg.dt;
        while self.pending.first().is_some_and(|f| f.time <= t + eps) {
            let f = self.pending.remove(0);
            let k = self.index[&f.agent];
            self.failed.insert(k, f.kind);
            self.event(SimEvent::FailureInjected { agent: f.agent, failure: f.kind });
        }
    }

    fn drives(&self, stream_end: &BTreeMap<usize, P3>) -> Vec<Drive> {
        let cfg = &self.network.config;
        (0..self.ids.len())
            .map(|k| {
                let id = self.ids[k];
                if let Some(kind) = self.failed.get(&k) {
                    return match kind {
                        FailureKind::Freeze => Drive::Velocity(P3::zeros()),
                        FailureKind::Drift { velocity } => Drive::Velocity(P3::from(*velocity)),
                    };
                }
                if let Some(p) = self.holds.get(&k) {
                    return Drive::Hold(*p);
                }
                if !cfg.contains(id) {
                    return Drive::Hold(self.pos[k]);
                }
                match (&self.cem, self.mode.mode) {
                    (Some(ep), Mode::Cem) => match ep.targets.get(&k) {
                        Some(start) => Drive::Stream(*start, stream_end[&k]),
                        None => Drive::Hold(self.pos[k]),
                    },
                    _ => match cfg.leaders.iter().position(|l| *l == id) {
                        Some(j) => Drive::Leader(j),
                        None => Drive::Follower(
                            cfg.in_neighbors[&id]
                                .iter()
                                .zip(&cfg.weights[&id])
                                .map(|(nb, w)| (self.index[nb], *w))
                                .collect(),
                        ),
                    },
                }
            })
            .collect()
    }

    fn velocities(&self, drives: &[Drive], t0: f64, s: f64, r: &[P3]) -> Vec<P3> {
        let g = self.cfg.gain;
        let t = t0 + s * self.cfg.dt;
        drives
            .iter()
            .zip(r)
            .map(|(d, ri)| match d {
                Drive::Velocity(v) => *v,
                Drive::Hold(p) => (p - ri) * g,
                Drive::Stream(a, b) => (lerp(a, b, s) - ri) * g,
                Drive::Leader(j) => (self.leader_command(*j, t) - ri) * g,
                Drive::Follower(nb) => {
                    let target = nb.iter().fold(P3::zeros(), |acc, (h, w)| acc + r[*h] * *w);
                    (target - ri) * g
                }
            })
            .collect()
    }

    /// Advances the streamline targets by one step.
    fn advance_targets(&mut self) -> Result<BTreeMap<usize, P3>> {
        let (dt, v_phi) = (self.cfg.dt, self.cfg.cem.v_phi);
        let Some(ep) = self.cem.as_ref() else {
            return Ok(BTreeMap::new());
        };
        let mut next = BTreeMap::new();
        let mut events = Vec::new();
        let mut stalled = ep.stalled.clone();
        for (&k, p) in &ep.targets {
            match step_streamline(p, &ep.field, v_phi, dt) {
                Ok(step) => {
                    if step.projected {
                        events.push(SimEvent::DiskProjection { agent: self.ids[k] });
                    }
                    stalled.remove(&k);
                    next.insert(k, step.position);
                }
                Err(Error::Stagnation { .. }) => {
                    if stalled.insert(k) {
                        events.push(SimEvent::Stagnation { agent: self.ids[k] });
                    }
                    next.insert(k, *p);
                }
                Err(e) => return Err(e),
            }
        }
        self.cem.as_mut().unwrap().stalled = stalled;
        for e in events {
            self.event(e);
        }
        Ok(next)
    }

    /// One tick: failures, dynamics, supervision, logging.
    pub fn step(&mut self) -> Result<()> {
        self.activate_failures();
        let t0 = self.time();
        let dt = self.cfg.dt;
        let stream_end = self.advance_targets().map_err(|e| numeric_context(self.tick, t0, e))?;
        let drives = self.drives(&stream_end);

        let r0 = self.pos.clone();
        let stage = |k: &[P3], h: f64| -> Vec<P3> { r0.iter().zip(k).map(|(r, v)| r + v * h).collect() };
        let k1 = self.velocities(&drives, t0, 0.0, &r0);
        let k2 = self.velocities(&drives, t0, 0.5, &stage(&k1, dt / 2.0));
        let k3 = self.velocities(&drives, t0, 0.5, &stage(&k2, dt / 2.0));
        let k4 = self.velocities(&drives, t0, 1.0, &stage(&k3, dt));
        for (k, r) in self.pos.iter_mut().enumerate() {
            *r += (k1[k] + (k2[k] + k3[k]) * 2.0 + k4[k]) * (dt / 6.0);
        }
        self.tick += 1;
        if let Some(k) = self.pos.iter().position(|r| !r.iter().all(|v| v.is_finite())) {
            return Err(Error::Numeric {
                tick: self.tick,
                time: self.time(),
                message: format!("position of agent {} is not finite", self.ids[k]),
            });
        }
        if let Some(ep) = self.cem.as_mut() {
            ep.targets = stream_end;
        }
        let (tick, time) = (self.tick, self.time());
        self.supervise().map_err(|e| numeric_context(tick, time, e))
    }

    /// Runs to the configured duration.
    pub fn run(&mut self) -> Result<()> {
        let ticks = (self.cfg.duration / self.cfg.dt).round() as u64;
        while self.tick < ticks {
            self.step()?;
        }
        Ok(())
    }

    fn member_positions(&self) -> PositionMap<f64> {
        self.network
            .config
            .ref_positions
            .keys()
            .map(|id| (*id, self.pos[self.index[id]]))
            .collect()
    }

    fn containment_center(&self, desired: &PositionMap<f64>) -> Result<P3> {
        let healthy: Vec<(AgentId, P3)> =
            desired.iter().filter(|(id, _)| !self.excluded.contains(id)).map(|(i, p)| (*i, *p)).collect();
        let pts: Vec<P3> = healthy.iter().map(|(_, p)| *p).collect();
        match &self.cfg.containment.betas {
            None => nominal_containment_position(&pts, None),
            Some(b) => {
                let raw: Vec<f64> = healthy.iter().map(|(id, _)| b.get(id).copied().unwrap_or(0.0)).collect();
                let sum: f64 = raw.iter().sum();
                if !(sum > 0.0) {
                    return nominal_containment_position(&pts, None);
                }
                let norm: Vec<f64> = raw.iter().map(|w| w / sum).collect();
                nominal_containment_position(&pts, Some(&norm))
            }
        }
    }

    fn supervise(&mut self) -> Result<()> {
        let t = self.time();
        let actual = self.positions();
        let mut anomalous = BTreeSet::new();
        let desired = match self.mode.mode {
            Mode::Hdm => {
                let members = self.member_positions();
                self.reports = evaluate_network(&self.network.config, &members, self.network.delta, t)?;
                anomalous = partition_health(members.keys().copied(), &self.reports).1;
                if anomalous != self.flagged {
                    if !anomalous.is_empty() {
                        self.event(SimEvent::AnomalyDetected { agents: anomalous.iter().copied().collect() });
                        for (agent, neighbor) in attribution_ambiguities(&self.network.config, &anomalous) {
                            self.event(SimEvent::AttributionAmbiguity { agent, neighbor });
                        }
                    }
                    self.flagged = anomalous.clone();
                }
                self.network.config.global_desired(&self.leader_commands(t))?
            }
            Mode::Cem => {
                self.reports.clear();
                let ep = self.cem.as_ref().expect("CEM episode active");
                let breaches: Vec<AgentId> = ep
                    .targets
                    .keys()
                    .filter(|&&k| ep.field.inside_disk(self.pos[k].x, self.pos[k].y).is_some())
                    .map(|&k| self.ids[k])
                    .collect();
                let desired = ep.targets.iter().map(|(k, p)| (self.ids[*k], *p)).collect();
                for agent in breaches {
                    self.event(SimEvent::ExclusionBreach { agent });
                }
                desired
            }
        };
        if !desired.is_empty() {
            let c = self.containment_center(&desired)?;
            self.mode.track_center(c);
        }

        let (next, events) = transition(&self.mode, &anomalous, &actual, t);
        let was = self.mode.mode;
        self.mode = next;
        if events.is_empty() && was == Mode::Hdm && !anomalous.is_empty() {
            let outside: Vec<AgentId> = anomalous.iter().copied().collect();
            if self.log.events.last().map(|e| &e.event) != Some(&SimEvent::FlaggedOutsideDomain { agents: outside.clone() }) {
                self.event(SimEvent::FlaggedOutsideDomain { agents: outside });
            }
        }
        for e in events {
            match e {
                TransitionEvent::EnterCem { agents, .. } => self.enter_cem(&agents)?,
                TransitionEvent::ReferenceReset { excluded, .. } => self.reset_reference(&excluded)?,
            }
        }
        if self.tick.is_multiple_of(self.cfg.log_stride as u64) {
            self.record();
        }
        Ok(())
    }

    fn enter_cem(&mut self, flagged: &[AgentId]) -> Result<()> {
        self.event(SimEvent::EnterCem { agents: flagged.to_vec() });
        for id in flagged {
            self.excluded.insert(*id);
            let k = self.index[id];
            if !self.failed.contains_key(&k) {
                self.holds.insert(k, self.pos[k]);
            }
        }
        let failed: Vec<(AgentId, P3)> = flagged.iter().map(|id| (*id, self.pos[self.index[id]])).collect();
        let c = &self.cfg.cem;
        let field = build_flow_from_failures(&failed, c.u_inf, c.theta_inf, c.exclusion_radius)?;
        let healthy: PositionMap<f64> = self.healthy().into_iter().map(|id| (id, self.pos[self.index[&id]])).collect();
        let psi0 = assign_stream_constants(&healthy, &field)?;
        let targets = healthy.iter().map(|(id, p)| (self.index[id], *p)).collect();
        self.cem = Some(CemEpisode { field, psi0, targets, stalled: BTreeSet::new() });
        Ok(())
    }

    fn reset_reference(&mut self, excluded: &[AgentId]) -> Result<()> {
        let t = self.time();
        self.event(SimEvent::ReferenceReset { excluded: excluded.to_vec() });
        self.cem = None;
        self.flagged.clear();
        let members: PositionMap<f64> = self
            .network
            .config
            .ref_positions
            .keys()
            .filter(|id| !self.excluded.contains(id))
            .map(|id| (*id, self.pos[self.index[id]]))
            .collect();
        let mut params = NetworkParams::new(self.cfg.n).with_rho(self.cfg.rho());
        params.xi = self.cfg.xi;
        let requested = self.cfg.leaders.clone().filter(|l| l.iter().all(|id| members.contains_key(id)));
        if let Some(l) = &requested {
            params = params.with_leaders(l.clone());
        }
        let config = match ReferenceConfiguration::build(&members, &params) {
            Err(Error::Selection(reason)) if requested.is_some() => {
                self.event(SimEvent::LeaderOverrideRejected { requested: requested.unwrap(), reason });
                params.leader_override = None;
                ReferenceConfiguration::build(&members, &params)?
            }
            other => other?,
        };
        self.network = Self::derive_network(&self.cfg, config, t);
        self.network_built(t);
        Ok(())
    }

    fn margin(&mut self, t: f64) -> Option<MarginSample> {
        let cfg = &self.network.config;
        let tr = fit_homogeneous_transform(&leader_reference(cfg), &self.leader_commands(t), cfg.n).ok()?;
        let (threshold, satisfied) =
            collision_safety_margin(&tr, self.network.delta, self.cfg.vehicle_radius, self.network.d_min).ok()?;
        if satisfied != self.safe {
            self.safe = satisfied;
            if !satisfied {
                self.event(SimEvent::SafetyViolated { sigma_min: tr.min_singular_value(), threshold });
            }
        }
        Some(MarginSample { sigma: tr.singular_values, threshold, delta: self.network.delta, satisfied })
    }

    fn record(&mut self) {
        let t = self.time();
        let hdm = self.mode.mode == Mode::Hdm;
        let margin = if hdm { self.margin(t) } else { None };
        let cfg = &self.network.config;
        let commands = self.leader_commands(t);
        let global = if hdm { cfg.global_desired(&commands).ok() } else { None };
        let agents = (0..self.ids.len())
            .map(|k| {
                let id = self.ids[k];
                let healthy = !self.excluded.contains(&id);
                let (local, glob) = match (&self.cem, hdm) {
                    (_, true) if healthy && cfg.contains(id) => {
                        let g = global.as_ref().map(|m| m[&id]);
                        let l = match cfg.in_neighbors.get(&id) {
                            Some(nb) => Some(nb.iter().zip(&cfg.weights[&id]).fold(P3::zeros(), |a, (h, w)| a + self.pos[self.index[h]] * *w)),
                            None => g,
                        };
                        (l, g)
                    }
                    (Some(ep), false) => {
                        let p = ep.targets.get(&k).copied();
                        (p, p)
                    }
                    _ => (None, None),
                };
                AgentSample {
                    actual: self.pos[k].into(),
                    local_desired: local.map(Into::into),
                    global_desired: glob.map(Into::into),
                    healthy,
                }
            })
            .collect();
        self.log.rows.push(LogRow {
            tick: self.tick,
            time: t,
            mode: self.mode.mode,
            agents,
            containment_center: self.mode.containment_center.into(),
            reports: self.reports.clone(),
            margin,
        });
    }
}

/// Runs a scenario to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<TrajectoryLog> {
    let mut sim = Simulation::new(cfg.clone())?;
    sim.run()?;
    Ok(sim.into_log())
}

/// Network and safety summary of a scenario, without time stepping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub agents: usize,
    pub leaders: Vec<AgentId>,
    pub boundary: Vec<AgentId>,
    pub interior: Vec<AgentId>,
    pub in_neighbors: BTreeMap<AgentId, Vec<AgentId>>,
    pub weights: BTreeMap<AgentId, Vec<f64>>,
    pub xi_max: f64,
    pub delta: f64,
    pub d_min: f64,
    pub spectral_abscissa: f64,
    pub threshold: f64,
    /// Smallest singular value of the commanded deformation over the run.
    pub sigma_min: f64,
    pub sigma_min_time: f64,
    pub safe: bool,
}

/// Builds the reference network and evaluates the collision certificate
/// along the commanded leader motion.
pub fn check_scenario(cfg: &ScenarioConfig) -> Result<CheckReport> {
    let sim = Simulation::new(cfg.clone())?;
    let net = &sim.network;
    let c = &net.config;
    let refs = leader_reference(c);
    let mut times: Vec<f64> = (0..=200).map(|k| cfg.duration * k as f64 / 200.0).collect();
    for tr in &cfg.leader_trajectory {
        times.extend(tr.waypoints.iter().map(|w| w.t).filter(|t| (0.0..=cfg.duration).contains(t)));
    }
    let mut worst = (f64::INFINITY, 0.0);
    for t in times {
        let tr = fit_homogeneous_transform(&refs, &sim.leader_commands(t), c.n)?;
        if tr.min_singular_value() < worst.0 {
            worst = (tr.min_singular_value(), t);
        }
    }
    let tr = crate::hdm::HomogeneousTransform::identity();
    let (threshold, _) = collision_safety_margin(&tr, net.delta, cfg.vehicle_radius, net.d_min)?;
    Ok(CheckReport {
        agents: c.ref_positions.len(),
        leaders: c.leaders.clone(),
        boundary: c.boundary.iter().copied().collect(),
        interior: c.interior.iter().copied().collect(),
        in_neighbors: c.in_neighbors.clone(),
        weights: c.weights.clone(),
        xi_max: c.xi_max,
        delta: net.delta,
        d_min: net.d_min,
        spectral_abscissa: crate::refnet::spectral_abscissa(&c.matrices.d)?,
        threshold,
        sigma_min: worst.0,
        sigma_min_time: worst.1,
        safe: worst.0 >= threshold,
    })
}
