//! Trajectory log and its CSV / JSON renderings.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anomaly::TransientWeightReport;
use crate::automaton::Mode;
use crate::error::{Error, Result};
use crate::harness::scenario::FailureKind;
use crate::AgentId;

/// State of one agent in one log row. Desired positions are absent for
/// agents that no longer coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSample {
    pub actual: [f64; 3],
    pub local_desired: Option<[f64; 3]>,
    pub global_desired: Option<[f64; 3]>,
    pub healthy: bool,
}

/// Deformation singular values and the collision certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginSample {
    pub sigma: [f64; 3],
    pub threshold: f64,
    pub delta: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub tick: u64,
    pub time: f64,
    pub mode: Mode,
    /// Aligned with [`TrajectoryLog::agents`].
    pub agents: Vec<AgentSample>,
    pub containment_center: [f64; 3],
    /// Weight checks run on this tick (HDM only).
    pub reports: Vec<TransientWeightReport<f64>>,
    pub margin: Option<MarginSample>,
}

/// Something worth recording that is not part of the per-tick state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimEvent {
    NetworkBuilt { leaders: Vec<AgentId>, xi_max: f64, delta: f64, d_min: f64 },
    FailureInjected { agent: AgentId, failure: FailureKind },
    AnomalyDetected { agents: Vec<AgentId> },
    /// A flagged agent's in-neighbor is flagged too; either may be at fault.
    AttributionAmbiguity { agent: AgentId, neighbor: AgentId },
    FlaggedOutsideDomain { agents: Vec<AgentId> },
    EnterCem { agents: Vec<AgentId> },
    ReferenceReset { excluded: Vec<AgentId> },
    LeaderOverrideRejected { requested: Vec<AgentId>, reason: String },
    Stagnation { agent: AgentId },
    DiskProjection { agent: AgentId },
    /// A healthy agent's actual position is strictly inside an exclusion disk.
    ExclusionBreach { agent: AgentId },
    SafetyViolated { sigma_min: f64, threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub tick: u64,
    pub time: f64,
    #[serde(flatten)]
    pub event: SimEvent,
}

impl EventRecord {
    pub fn kind(&self) -> String {
        serde_json::to_value(&self.event)
            .ok()
            .and_then(|v| v.get("kind").and_then(|k| k.as_str()).map(str::to_string))
            .unwrap_or_default()
    }

    /// Event fields other than the kind, as compact JSON.
    pub fn payload(&self) -> String {
        let mut v = serde_json::to_value(&self.event).unwrap_or_default();
        if let Some(m) = v.as_object_mut() {
            m.remove("kind");
        }
        v.to_string()
    }
}

/// Network in force from `time` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSummary {
    pub time: f64,
    pub leaders: Vec<AgentId>,
    pub boundary: Vec<AgentId>,
    pub interior: Vec<AgentId>,
    pub in_neighbors: BTreeMap<AgentId, Vec<AgentId>>,
    pub weights: BTreeMap<AgentId, Vec<f64>>,
    pub xi_max: f64,
    pub delta: f64,
    pub d_min: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub name: Option<String>,
    pub dt: f64,
    pub agents: Vec<AgentId>,
    pub rows: Vec<LogRow>,
    pub events: Vec<EventRecord>,
    pub networks: Vec<NetworkSummary>,
}

/// Output flavor of [`TrajectoryLog::write`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn opt3(v: Option<[f64; 3]>) -> [String; 3] {
    match v {
        Some(p) => p.map(|x| x.to_string()),
        None => Default::default(),
    }
}

impl TrajectoryLog {
    pub fn index_of(&self, id: AgentId) -> Option<usize> {
        self.agents.iter().position(|a| *a == id)
    }

    pub fn events_of<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a EventRecord> + 'a {
        self.events.iter().filter(move |e| e.kind() == kind)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_reader(std::io::BufReader::new(file))
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, self).map_err(|e| Error::Io(e.to_string()))?;
        out.flush()?;
        Ok(())
    }

    /// Per-tick trajectory: time, then per agent x, y, z, x_d, y_d, z_d,
    /// x_c, y_c, z_c and the health flag.
    pub fn write_trajectory_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["time".to_string()];
        for id in &self.agents {
            for col in ["x", "y", "z", "x_d", "y_d", "z_d", "x_c", "y_c", "z_c", "health"] {
                header.push(format!("{col}_{id}"));
            }
        }
        out.write_record(&header).map_err(csv_err)?;
        for row in &self.rows {
            let mut rec = vec![row.time.to_string()];
            for a in &row.agents {
                rec.extend(a.actual.map(|x| x.to_string()));
                rec.extend(opt3(a.local_desired));
                rec.extend(opt3(a.global_desired));
                rec.push(u8::from(a.healthy).to_string());
            }
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_events_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time", "kind", "payload"]).map_err(csv_err)?;
        for e in &self.events {
            out.write_record([e.time.to_string(), e.kind(), e.payload()]).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_weights_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time", "agent", "neighbor", "lo", "weight", "transient", "hi", "pass"])
            .map_err(csv_err)?;
        for row in &self.rows {
            for r in &row.reports {
                if r.degenerate {
                    out.write_record([row.time.to_string(), r.agent.to_string(), String::new(), String::new(), String::new(), String::new(), String::new(), "0".into()])
                        .map_err(csv_err)?;
                }
                for e in &r.entries {
                    out.write_record([
                        row.time.to_string(),
                        r.agent.to_string(),
                        e.neighbor.to_string(),
                        e.lo.to_string(),
                        e.static_weight.to_string(),
                        e.transient.to_string(),
                        e.hi.to_string(),
                        u8::from(e.pass).to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_margins_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time", "mode", "sigma1", "sigma2", "sigma3", "delta", "threshold", "satisfied"])
            .map_err(csv_err)?;
        for row in &self.rows {
            let mode = if row.mode == Mode::Hdm { "HDM" } else { "CEM" };
            let mut rec = vec![row.time.to_string(), mode.to_string()];
            match row.margin {
                Some(m) => {
                    rec.extend(m.sigma.map(|s| s.to_string()));
                    rec.extend([m.delta.to_string(), m.threshold.to_string(), u8::from(m.satisfied).to_string()]);
                }
                None => rec.extend(std::iter::repeat_n(String::new(), 6)),
            }
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes the log into `dir` and returns the files created.
    pub fn write(&self, dir: impl AsRef<Path>, format: OutputFormat) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let open = |name: &str| -> Result<(PathBuf, BufWriter<File>)> {
            let p = dir.join(name);
            Ok((p.clone(), BufWriter::new(File::create(p)?)))
        };
        match format {
            OutputFormat::Json => {
                let p = dir.join("log.json");
                self.write_json(&p)?;
                Ok(vec![p])
            }
            OutputFormat::Csv => {
                let mut written = Vec::new();
                let (p, f) = open("trajectory.csv")?;
                self.write_trajectory_csv(f)?;
                written.push(p);
                let (p, f) = open("events.csv")?;
                self.write_events_csv(f)?;
                written.push(p);
                let (p, f) = open("weights.csv")?;
                self.write_weights_csv(f)?;
                written.push(p);
                let (p, f) = open("margins.csv")?;
                self.write_margins_csv(f)?;
                written.push(p);
                Ok(written)
            }
        }
    }
}
