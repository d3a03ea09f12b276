use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::pipeline::RunReport;
use super::{run_live, HarnessError};
use crate::coherency::CggRegistry;
use crate::grid::GridCase;
use crate::sim::EventScript;

/// Parameter axes; the run set is their Cartesian product and an empty axis
/// leaves that parameter at its template value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    /// Pipeline configuration file, relative to the grid file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<std::path::PathBuf>,
    /// Fault durations in nominal-frequency cycles.
    #[serde(default)]
    pub fault_cycles: Vec<f64>,
    /// Energy growth factors of the detector.
    #[serde(default)]
    pub alpha_w: Vec<f64>,
}

impl SweepGrid {
    /// Reads a grid file; a relative configuration path is resolved against
    /// the file's directory.
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut grid: SweepGrid =
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        if let (Some(cfg), Some(dir)) = (&grid.config, path.parent()) {
            if cfg.is_relative() {
                grid.config = Some(dir.join(cfg));
            }
        }
        Ok(grid)
    }

    /// Grid points as `(fault_cycles, alpha_w)`.
    pub fn points(&self) -> Vec<(Option<f64>, Option<f64>)> {
        let axis = |v: &[f64]| -> Vec<Option<f64>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        };
        let mut out = Vec::new();
        for c in axis(&self.fault_cycles) {
            for a in axis(&self.alpha_w) {
                out.push((c, a));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub fault_cycles: Option<f64>,
    pub alpha_w: Option<f64>,
    pub report: RunReport,
}

/// Runs every grid point independently and in parallel; results keep grid order.
pub fn sweep(
    case: &GridCase,
    template: &EventScript,
    cfg: &PipelineConfig,
    registry: &CggRegistry,
    grid: &SweepGrid,
) -> Result<Vec<SweepPoint>, HarnessError> {
    if grid.fault_cycles.is_empty() && grid.alpha_w.is_empty() {
        return Err(HarnessError::Config("sweep grid has no points".into()));
    }
    grid.points()
        .into_par_iter()
        .map(|(cycles, alpha)| {
            let mut script = match cycles {
                Some(c) => template
                    .with_fault_duration(c, case.f0_hz)
                    .ok_or_else(|| HarnessError::Config("template has no fault to resize".into()))?,
                None => template.clone(),
            };
            let mut run_cfg = cfg.clone();
            if let Some(a) = alpha {
                run_cfg.detector.alpha_w = a;
            }
            script.name = label(&template.name, cycles, alpha);
            let out = run_live(case, &script, &run_cfg, registry).map_err(|e| e.context(&script.name))?;
            Ok(SweepPoint {
                fault_cycles: cycles,
                alpha_w: alpha,
                report: out.report,
            })
        })
        .collect()
}

fn label(base: &str, cycles: Option<f64>, alpha: Option<f64>) -> String {
    let mut s = base.to_string();
    if let Some(c) = cycles {
        s += &format!("_c{c}");
    }
    if let Some(a) = alpha {
        s += &format!("_a{a}");
    }
    s
}

impl SweepPoint {
    pub fn write_summary<W: Write>(points: &[SweepPoint], out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "name",
            "fault_cycles",
            "alpha_w",
            "verdict",
            "t_detect",
            "path",
            "scenario",
            "cutset",
            "theta_max_deg",
            "vmin_pu",
        ])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for p in points {
            let r = &p.report;
            let d = r.detection.as_ref();
            let s = r.selection.as_ref();
            w.write_record([
                r.scenario.clone(),
                opt(p.fault_cycles),
                opt(p.alpha_w),
                r.verdict.as_str().to_string(),
                opt(d.map(|d| d.t)),
                d.map_or(String::new(), |d| d.path.clone()),
                s.map_or(String::new(), |s| s.scenario.to_string()),
                s.map_or(String::new(), |s| s.cutset.join(" ")),
                opt(d.map(|d| d.theta_max_deg)),
                opt(d.map(|d| d.vmin_pu)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
