//! End-to-end runs: simulate, detect, identify, split and report; replay of
//! recorded streams; parameter sweeps.

mod config;
mod output;
mod pipeline;
mod plot;
mod sweep;

use std::fmt::Display;
use std::path::Path;

use thiserror::Error;

use crate::coherency::{CggRegistry, CoherencyError};
use crate::coi::ConfigError;
use crate::grid::{run_power_flow, CaseError, GridCase};
use crate::sim::{EventScript, PmuStream, SimError, Simulator, StreamError};

pub use config::{PipelineConfig, SplitterConfig};
pub use output::{write_outputs, write_split_log};
pub use pipeline::{
    replay_stream, AlarmReport, DetectionReport, IslandReport, LogEntry, Pipeline, PredictionCheck, RunReport,
    SelectionReport, SplitCommand, SplitReport, TraceRow, Verdict,
};
pub use plot::{line_plot, Series};
pub use sweep::{sweep, SweepGrid, SweepPoint};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Coherency(#[from] CoherencyError),
    #[error(transparent)]
    Detector(#[from] ConfigError),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<HarnessError>,
    },
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Wraps the error with a short description of what was being done.
    pub fn context(self, context: impl Display) -> Self {
        HarnessError::Context {
            context: context.to_string(),
            source: Box::new(self),
        }
    }
}

/// Files shipped with the library for the 39-bus studies.
pub mod bundled {
    use super::*;

    pub const REGISTRY_JSON: &str = include_str!("../../data/registry_ieee39.json");
    pub const CONFIG_JSON: &str = include_str!("../../data/config_default.json");
    pub const SCENARIOS: [(&str, &str); 3] = [
        ("flt1617", include_str!("../../data/scenarios/flt1617.json")),
        ("flt2122", include_str!("../../data/scenarios/flt2122.json")),
        ("trip2829", include_str!("../../data/scenarios/trip2829.json")),
    ];

    pub fn registry(case: &GridCase) -> Result<CggRegistry, HarnessError> {
        Ok(CggRegistry::from_json(REGISTRY_JSON, case)?)
    }

    pub fn config() -> PipelineConfig {
        PipelineConfig::from_json(CONFIG_JSON).expect("bundled configuration is valid")
    }

    pub fn scenario(name: &str) -> Option<EventScript> {
        SCENARIOS.iter().find(|(n, _)| *n == name).map(|(n, text)| {
            let mut s = EventScript::from_json(text).expect("bundled scenario is valid");
            if s.name.is_empty() {
                s.name = n.to_string();
            }
            s
        })
    }
}

/// Registry named by the configuration, or the bundled one.
pub fn load_registry(cfg: &PipelineConfig, case: &GridCase) -> Result<CggRegistry, HarnessError> {
    match &cfg.registry {
        Some(path) => Ok(CggRegistry::load(path, case)?),
        None => bundled::registry(case),
    }
}

/// Everything produced by one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub stream: PmuStream,
    pub trace: Vec<TraceRow>,
    pub log: Vec<LogEntry>,
    /// Set when the simulation stopped early because the state diverged.
    pub diverged_at: Option<f64>,
}

/// Simulates `script` with the detection pipeline in the loop; identified
/// splits are actuated and the run is extended to cover the post-split interval.
pub fn run_live(
    case: &GridCase,
    script: &EventScript,
    cfg: &PipelineConfig,
    registry: &CggRegistry,
) -> Result<RunOutput, HarnessError> {
    let pf = run_power_flow(case).map_err(SimError::from)?;
    let mut sim = Simulator::new(case, &pf, script)?;
    let mut pipe = Pipeline::new(case, cfg.clone(), registry, script.t_s)?;
    let mut stream = sim.empty_stream();
    let mut diverged_at = None;
    loop {
        let frame = match sim.next_frame() {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(SimError::NonFinite { last_valid_t }) => {
                diverged_at = Some(last_valid_t);
                break;
            }
            Err(e) => return Err(e.into()),
        };
        if let Some(cmd) = pipe.push(&frame)? {
            sim.extend_to(cmd.frame as f64 * script.t_s + cfg.post_split_s);
            sim.schedule_split(cmd.cutset, cmd.frame);
        }
        stream.frames.push(frame);
    }
    Ok(RunOutput {
        report: pipe.finish(&script.name),
        stream,
        trace: pipe.trace().to_vec(),
        log: pipe.log().to_vec(),
        diverged_at,
    })
}

/// Replays a stream and returns the same bundle a live run produces.
pub fn run_replay(
    case: &GridCase,
    stream: PmuStream,
    cfg: &PipelineConfig,
    registry: &CggRegistry,
    name: &str,
) -> Result<RunOutput, HarnessError> {
    let (report, trace, log) = replay_stream(case, &stream, cfg, registry, name)?;
    Ok(RunOutput {
        report,
        stream,
        trace,
        log,
        diverged_at: None,
    })
}
