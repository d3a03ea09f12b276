use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::grid::{BranchId, GridCase};

/// Shunt susceptance of a bolted three-phase fault, p.u.
pub const BOLTED_FAULT_B: f64 = -1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ApplyFault,
    ClearFault,
    TripBranch,
    Split,
    /// Overrides a machine damping coefficient from the event time onwards.
    SetDamping,
}

/// Bus or machine number, a single branch `[from, to]`, or a branch list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Index(u32),
    Branch([u32; 2]),
    Branches(Vec<[u32; 2]>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventParams {
    /// Fault shunt conductance, p.u.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    /// Fault shunt susceptance, p.u.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Damping coefficient for `set_damping`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Target>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub params: EventParams,
}

fn is_default(p: &EventParams) -> bool {
    *p == EventParams::default()
}

fn default_h_int() -> f64 {
    1e-3
}

fn default_t_s() -> f64 {
    1.0 / 60.0
}

/// Timed disturbance script driving a simulation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventScript {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub events: Vec<Event>,
    pub end_time_s: f64,
    #[serde(default = "default_h_int")]
    pub h_int_s: f64,
    #[serde(default = "default_t_s")]
    pub t_s: f64,
}

impl EventScript {
    pub fn quiet(end_time_s: f64) -> Self {
        EventScript {
            name: "quiet".into(),
            events: Vec::new(),
            end_time_s,
            h_int_s: default_h_int(),
            t_s: default_t_s(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Script(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Script(format!("{}: {e}", path.display())))?;
        let mut script = Self::from_json(&text)?;
        if script.name.is_empty() {
            if let Some(stem) = path.file_stem() {
                script.name = stem.to_string_lossy().into_owned();
            }
        }
        Ok(script)
    }

    /// Integration steps per PMU frame; the integration step is snapped so that
    /// the sampling period is an exact multiple of it.
    pub fn steps_per_frame(&self) -> u64 {
        ((self.t_s / self.h_int_s).round() as u64).max(1)
    }

    /// Effective integration step after snapping.
    pub fn h_int(&self) -> f64 {
        self.t_s / self.steps_per_frame() as f64
    }

    /// Time of the first fault application, if any.
    pub fn fault_time(&self) -> Option<f64> {
        self.events
            .iter()
            .find(|e| e.kind == EventKind::ApplyFault)
            .map(|e| e.t)
    }

    /// Time of the first fault clearing, if any.
    pub fn clearing_time(&self) -> Option<f64> {
        self.events
            .iter()
            .find(|e| e.kind == EventKind::ClearFault)
            .map(|e| e.t)
    }

    /// Copy with the fault-clearing actions moved so that the fault lasts
    /// `cycles` nominal-frequency cycles. Every event scheduled at the original
    /// clearing instant moves with it.
    pub fn with_fault_duration(&self, cycles: f64, f0_hz: f64) -> Option<Self> {
        let start = self.fault_time()?;
        let clear = self.clearing_time()?;
        let new_clear = start + cycles / f0_hz;
        let mut out = self.clone();
        for e in &mut out.events {
            if (e.t - clear).abs() < 1e-12 {
                e.t = new_clear;
            }
        }
        out.events.sort_by(|a, b| a.t.total_cmp(&b.t));
        Some(out)
    }

    pub(crate) fn resolve(&self, case: &GridCase) -> Result<Vec<TimedAction>, SimError> {
        if !(self.t_s > 0.0 && self.h_int_s > 0.0 && self.end_time_s >= 0.0) {
            return Err(SimError::Script("t_s, h_int_s must be positive and end_time_s non-negative".into()));
        }
        let h = self.h_int();
        let mut out = Vec::with_capacity(self.events.len());
        let mut last = f64::NEG_INFINITY;
        for (i, e) in self.events.iter().enumerate() {
            if e.t < last {
                return Err(SimError::Script(format!("event {i} at t={} precedes its predecessor", e.t)));
            }
            if e.t < 0.0 {
                return Err(SimError::Script(format!("event {i} has negative time")));
            }
            last = e.t;
            let action = resolve_action(case, i, e)?;
            out.push(TimedAction {
                step: (e.t / h).round() as u64,
                action,
            });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Action {
    ApplyFault { bus: usize, admittance: Complex64 },
    ClearFault { bus: Option<usize> },
    Trip(BranchId),
    Split(Vec<BranchId>),
    SetDamping { machine: usize, d: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TimedAction {
    pub step: u64,
    pub action: Action,
}

fn bus_target(case: &GridCase, i: usize, t: &Option<Target>) -> Result<usize, SimError> {
    match t {
        Some(Target::Index(id)) => case
            .bus_index(*id)
            .ok_or_else(|| SimError::Script(format!("event {i}: unknown bus {id}"))),
        _ => Err(SimError::Script(format!("event {i}: expected a bus number target"))),
    }
}

pub(crate) fn resolve_branch(case: &GridCase, pair: [u32; 2]) -> Result<BranchId, SimError> {
    case.find_branch(pair[0], pair[1]).ok_or(SimError::UnknownBranch(pair[0], pair[1]))
}

fn resolve_action(case: &GridCase, i: usize, e: &Event) -> Result<Action, SimError> {
    Ok(match e.kind {
        EventKind::ApplyFault => Action::ApplyFault {
            bus: bus_target(case, i, &e.target)?,
            admittance: Complex64::new(e.params.g.unwrap_or(0.0), e.params.b.unwrap_or(BOLTED_FAULT_B)),
        },
        EventKind::ClearFault => Action::ClearFault {
            bus: match &e.target {
                None => None,
                t => Some(bus_target(case, i, t)?),
            },
        },
        EventKind::TripBranch => match &e.target {
            Some(Target::Branch(pair)) => Action::Trip(resolve_branch(case, *pair)?),
            _ => return Err(SimError::Script(format!("event {i}: trip_branch needs [from, to]"))),
        },
        EventKind::Split => match &e.target {
            Some(Target::Branches(list)) => Action::Split(
                list.iter()
                    .map(|p| resolve_branch(case, *p))
                    .collect::<Result<_, _>>()?,
            ),
            Some(Target::Branch(pair)) => Action::Split(vec![resolve_branch(case, *pair)?]),
            _ => return Err(SimError::Script(format!("event {i}: split needs a branch list"))),
        },
        EventKind::SetDamping => {
            let machine = match e.target {
                Some(Target::Index(k)) if k >= 1 && (k as usize) <= case.machine_count() => k as usize - 1,
                _ => return Err(SimError::Script(format!("event {i}: set_damping needs a machine number"))),
            };
            let d = e
                .params
                .d
                .ok_or_else(|| SimError::Script(format!("event {i}: set_damping needs params.d")))?;
            Action::SetDamping { machine, d }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ieee39;

    const FLT: &str = r#"{"events":[
        {"t":0.1,"kind":"apply_fault","target":16},
        {"t":0.21666666666666667,"kind":"clear_fault","target":16},
        {"t":0.21666666666666667,"kind":"trip_branch","target":[16,17]}],
        "end_time_s":3.0}"#;

    #[test]
    fn parses_and_snaps_to_grid() {
        let script = EventScript::from_json(FLT).unwrap();
        assert_eq!(script.steps_per_frame(), 17);
        let actions = script.resolve(&ieee39()).unwrap();
        assert_eq!(actions[0].step, 102);
        assert_eq!(actions[1].step, 102 + 7 * 17);
        assert!(matches!(actions[0].action, Action::ApplyFault { admittance, .. } if admittance.im == BOLTED_FAULT_B));
    }

    #[test]
    fn fault_duration_rewrite() {
        let script = EventScript::from_json(FLT).unwrap();
        let s3 = script.with_fault_duration(3.0, 60.0).unwrap();
        assert!((s3.events[1].t - 0.15).abs() < 1e-12);
        assert!((s3.events[2].t - 0.15).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_targets() {
        let case = ieee39();
        let bad = r#"{"events":[{"t":0.1,"kind":"trip_branch","target":[1,99]}],"end_time_s":1}"#;
        assert!(matches!(
            EventScript::from_json(bad).unwrap().resolve(&case),
            Err(SimError::UnknownBranch(1, 99))
        ));
        let unordered = r#"{"events":[{"t":0.2,"kind":"clear_fault"},{"t":0.1,"kind":"clear_fault"}],"end_time_s":1}"#;
        assert!(EventScript::from_json(unordered).unwrap().resolve(&case).is_err());
    }
}
