//! Scenario-driven simulator: scenario files, the tick loop, failure
//! injection, trajectory logs and the data series extracted from them.

mod log;
pub mod scenario;
mod sim;

use std::io::Write;
use std::str::FromStr;

pub use self::log::{AgentSample, EventRecord, LogRow, MarginSample, NetworkSummary, OutputFormat, SimEvent, TrajectoryLog};
pub use scenario::{
    AgentSpec, CemConfig, ContainmentConfig, FailureKind, FailureSpec, LeaderTrajectory, ScenarioConfig, Tolerances, Waypoint,
};
pub use sim::{check_scenario, run_scenario, CheckReport, Simulation};

use crate::automaton::Mode;
use crate::error::{Error, Result};

/// Data series that can be extracted from a log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    /// Actual positions over time.
    Positions,
    /// Deformation singular values and the collision threshold.
    Sigma,
    /// Static weights with their transient values and bounds.
    WeightBounds,
    /// Actual positions of healthy agents while in CEM.
    CemPaths,
}

impl FromStr for Series {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positions" => Ok(Self::Positions),
            "sigma" => Ok(Self::Sigma),
            "weight-bounds" => Ok(Self::WeightBounds),
            "cem-paths" => Ok(Self::CemPaths),
            other => Err(Error::Argument(format!(
                "unknown series {other:?}; expected positions, sigma, weight-bounds or cem-paths"
            ))),
        }
    }
}

/// Writes `series` of `log` as CSV.
pub fn write_series(log: &TrajectoryLog, series: Series, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Io(e.to_string());
    match series {
        Series::Positions => {
            let mut header = vec!["time".to_string(), "mode".to_string()];
            for id in &log.agents {
                header.extend(["x", "y", "z"].map(|c| format!("{c}_{id}")));
            }
            w.write_record(&header).map_err(err)?;
            for row in &log.rows {
                let mut rec = vec![row.time.to_string(), mode_str(row.mode).to_string()];
                for a in &row.agents {
                    rec.extend(a.actual.map(|v| v.to_string()));
                }
                w.write_record(&rec).map_err(err)?;
            }
        }
        Series::Sigma => {
            w.write_record(["time", "sigma1", "sigma2", "sigma3", "threshold"]).map_err(err)?;
            for row in &log.rows {
                if let Some(m) = row.margin {
                    let mut rec = vec![row.time.to_string()];
                    rec.extend(m.sigma.map(|s| s.to_string()));
                    rec.push(m.threshold.to_string());
                    w.write_record(&rec).map_err(err)?;
                }
            }
        }
        Series::WeightBounds => {
            log.write_weights_csv(w.into_inner().map_err(|e| Error::Io(e.to_string()))?)?;
            return Ok(());
        }
        Series::CemPaths => {
            w.write_record(["time", "agent", "x", "y", "z"]).map_err(err)?;
            for row in log.rows.iter().filter(|r| r.mode == Mode::Cem) {
                for (id, a) in log.agents.iter().zip(&row.agents) {
                    if a.healthy {
                        let [x, y, z] = a.actual;
                        w.write_record([row.time.to_string(), id.to_string(), x.to_string(), y.to_string(), z.to_string()])
                            .map_err(err)?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn mode_str(m: Mode) -> &'static str {
    match m {
        Mode::Hdm => "HDM",
        Mode::Cem => "CEM",
    }
}
