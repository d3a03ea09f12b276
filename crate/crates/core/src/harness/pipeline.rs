use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::HarnessError;
use crate::coherency::{algorithm1, taylor_predict, CggRegistry, CriticalBipartition};
use crate::coi::{coi_transform, AngleUnwrapper, CoiFrame, Detector1, OosEvent};
use crate::grid::{BranchId, GridCase};
use crate::pp::{Detector2, PeakCounter, UndampedAlarm};
use crate::sim::{PmuFrame, PmuStream};

/// Final classification of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    NoOos,
    DetectedSplitStable,
    DetectedSplitUnstable,
    DetectedNoMatch,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::NoOos => "no-oos",
            Verdict::DetectedSplitStable => "detected-split-stable",
            Verdict::DetectedSplitUnstable => "detected-split-unstable",
            Verdict::DetectedNoMatch => "detected-no-match",
        }
    }
}

/// Detection with the network state observed at that frame. Machine numbers
/// are one-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub t: f64,
    pub path: String,
    pub island: usize,
    pub i_max: u32,
    pub j_max: u32,
    pub delta_max_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<Vec<u32>>,
    pub theta_max_branch: String,
    pub theta_max_deg: f64,
    pub vmin_bus: u32,
    pub vmin_pu: f64,
    /// Island kinetic energy at detection.
    pub wk: f64,
    /// Growing-peak count of every machine at detection.
    pub kappa: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub t: f64,
    pub scenario: u32,
    /// Registered group (one-based machine numbers).
    pub group: Vec<u32>,
    /// Critical machines returned by the identification (one-based).
    pub cm: Vec<u32>,
    /// Branches that are opened, i.e. the in-service members of the cutset.
    pub cutset: Vec<String>,
    pub d: Vec<f64>,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandReport {
    pub machines: Vec<u32>,
    /// Largest island kinetic energy in each whole second after the split.
    pub wk_max_per_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub t_split: f64,
    pub islands: Vec<IslandReport>,
    /// Largest island energy over the last second of the post-split interval.
    pub wk_final_max: f64,
    pub settled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmReport {
    pub t: f64,
    pub machine: u32,
    pub kappa: u32,
}

/// Predicted against realized angle deviations over the horizon following the
/// identification frame, with all machines referred to one common COI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionCheck {
    pub t: f64,
    pub max_abs_deg: f64,
    pub mean_rel: f64,
    pub max_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub verdict: Verdict,
    pub detection: Option<DetectionReport>,
    pub selection: Option<SelectionReport>,
    pub split: Option<SplitReport>,
    pub post_split_detections: Vec<DetectionReport>,
    pub undamped_alarms: Vec<AlarmReport>,
    pub prediction: Option<PredictionCheck>,
    pub end_time_s: f64,
}

/// A request to open `cutset` at the instant of frame `frame`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCommand {
    pub frame: u64,
    pub cutset: Vec<BranchId>,
}

/// Per-frame indices kept for traces and plots.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub islands: usize,
    /// Largest island kinetic energy.
    pub wk_max: f64,
    /// γ of the island holding machine 1.
    pub gamma: f64,
    /// Largest angle separation over islands, deg.
    pub delta_max_deg: f64,
    pub delta_tilde_deg: Vec<f64>,
    pub omega_tilde: Vec<f64>,
    pub wk_i: Vec<f64>,
}

/// A detector or peak-counter log line.
#[derive(Debug, Clone, PartialEq)]
pub enum LogEntry {
    Oos(OosEvent),
    Undamped(UndampedAlarm),
}

/// Streaming detection → identification → splitting decision chain. The same
/// object serves live simulation (commands are actuated) and replay (commands
/// are only reported).
pub struct Pipeline<'a> {
    case: &'a GridCase,
    cfg: PipelineConfig,
    registry: &'a CggRegistry,
    inertias: Vec<f64>,
    t_s: f64,
    unwrapper: AngleUnwrapper,
    det1: Detector1,
    det2: Detector2,
    peaks: PeakCounter,
    baseline: Option<Vec<f64>>,
    global_baseline: Option<Vec<f64>>,
    history: Vec<Vec<f64>>,
    global_rows: Vec<(u64, Vec<f64>)>,
    detection: Option<(OosEvent, DetectionReport, Vec<usize>)>,
    selection: Option<(SelectionReport, CriticalBipartition, u64)>,
    split_frame: Option<u64>,
    gave_up: bool,
    post_split: Vec<DetectionReport>,
    alarms: Vec<AlarmReport>,
    trace: Vec<TraceRow>,
    log: Vec<LogEntry>,
    split_islands: Option<Vec<Vec<usize>>>,
    island_wk: Vec<(f64, Vec<(Vec<usize>, f64)>)>,
    last_t: f64,
}

impl<'a> Pipeline<'a> {
    pub fn new(case: &'a GridCase, cfg: PipelineConfig, registry: &'a CggRegistry, t_s: f64) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let mut det_cfg = cfg.detector.clone();
        det_cfg.t_s = t_s;
        let m = case.machine_count();
        let groups: Vec<Vec<usize>> = match &cfg.pp.groups {
            Some(gs) => gs
                .iter()
                .map(|g| {
                    g.iter()
                        .map(|&id| {
                            if id == 0 || id as usize > m {
                                Err(HarnessError::Config(format!("monitored group names machine {id}")))
                            } else {
                                Ok(id as usize - 1)
                            }
                        })
                        .collect()
                })
                .collect::<Result<_, _>>()?,
            None => (0..m).map(|i| vec![i]).chain(registry.groups().iter().cloned()).collect(),
        };
        Ok(Pipeline {
            case,
            inertias: case.inertias(),
            t_s,
            unwrapper: AngleUnwrapper::default(),
            det1: Detector1::new(det_cfg.clone())?,
            det2: Detector2::new(cfg.pp.clone(), det_cfg, groups)?,
            peaks: PeakCounter::new(m, &cfg.pp),
            cfg,
            registry,
            baseline: None,
            global_baseline: None,
            history: Vec::new(),
            global_rows: Vec::new(),
            detection: None,
            selection: None,
            split_frame: None,
            gave_up: false,
            post_split: Vec::new(),
            alarms: Vec::new(),
            trace: Vec::new(),
            log: Vec::new(),
            split_islands: None,
            island_wk: Vec::new(),
            last_t: 0.0,
        })
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    /// Time at which a split was requested, if any.
    pub fn t_split(&self) -> Option<f64> {
        self.split_frame.map(|n| n as f64 * self.t_s)
    }

    fn describe(&self, ev: &OosEvent, frame: &PmuFrame, coi: &CoiFrame) -> DetectionReport {
        let (tb, tmax) = frame.theta_max().unwrap_or((usize::MAX, f64::NAN));
        let (vb, vmin) = frame.vmin().unwrap_or((usize::MAX, f64::NAN));
        let wk = coi
            .islands
            .iter()
            .find(|i| i.label == ev.island)
            .map_or(f64::NAN, |i| i.wk);
        DetectionReport {
            t: ev.t,
            path: ev.path.as_str().to_string(),
            island: ev.island,
            i_max: ev.i_max as u32 + 1,
            j_max: ev.j_max as u32 + 1,
            delta_max_deg: ev.delta_max_deg,
            group: ev.group.as_ref().map(|g| g.iter().map(|&i| i as u32 + 1).collect()),
            theta_max_branch: self
                .case
                .branches
                .get(tb)
                .map_or_else(|| "-".to_string(), |b| b.label()),
            theta_max_deg: tmax,
            vmin_bus: self.case.buses.get(vb).map_or(0, |b| b.id),
            vmin_pu: vmin,
            wk,
            kappa: self.peaks.kappa().to_vec(),
        }
    }

    /// Consumes one frame; returns a split request when the critical group has
    /// just been identified.
    pub fn push(&mut self, frame: &PmuFrame) -> Result<Option<SplitCommand>, HarnessError> {
        let m = self.case.machine_count();
        if frame.delta_deg.len() != m || frame.island.len() != m {
            return Err(HarnessError::Config(format!(
                "frame {} carries {} machines, the network has {m}",
                frame.n,
                frame.delta_deg.len()
            )));
        }
        self.last_t = frame.t;
        let raw: Vec<f64> = frame.delta_rad();
        let delta = self.unwrapper.unwrap(&raw);
        let coi = CoiFrame::new(frame.t, &delta, &frame.omega, &self.inertias, &frame.island);
        let dt_deg: Vec<f64> = coi.delta_tilde.iter().map(|d| d.to_degrees()).collect();
        let global: Vec<f64> = coi_transform(&delta, &self.inertias, &vec![0; m])
            .iter()
            .map(|d| d.to_degrees())
            .collect();

        if self.baseline.is_none() && coi.omega_tilde.iter().any(|w| w.abs() > self.cfg.splitter.onset_omega) {
            self.baseline = Some(dt_deg.clone());
            self.global_baseline = Some(global.clone());
        }
        if let Some(base) = &self.baseline {
            let row: Vec<f64> = dt_deg.iter().zip(base).map(|(d, b)| d - b).collect();
            if self.history.len() == self.cfg.splitter.fit_window {
                self.history.remove(0);
            }
            self.history.push(row);
        }
        if let Some(gb) = &self.global_baseline {
            self.global_rows
                .push((frame.n, global.iter().zip(gb).map(|(d, b)| d - b).collect()));
        }

        for alarm in self.peaks.step(frame.t, &coi.wk_i, &coi.omega_tilde) {
            self.alarms.push(AlarmReport {
                t: alarm.t,
                machine: alarm.machine as u32 + 1,
                kappa: alarm.kappa,
            });
            self.log.push(LogEntry::Undamped(alarm));
        }

        let mut events = self.det1.step(&coi);
        events.extend(self.det2.step(&coi, &self.inertias));
        for ev in events {
            self.log.push(LogEntry::Oos(ev.clone()));
            let after_split = self.split_frame.is_some_and(|n| frame.n >= n);
            if self.detection.is_none() {
                let members = coi
                    .islands
                    .iter()
                    .find(|i| i.label == ev.island)
                    .map(|i| i.members.clone())
                    .unwrap_or_default();
                let rep = self.describe(&ev, frame, &coi);
                self.detection = Some((ev, rep, members));
            } else if after_split {
                let rep = self.describe(&ev, frame, &coi);
                self.post_split.push(rep);
            }
        }

        if self.split_frame.is_some_and(|n| frame.n >= n) {
            if self.split_islands.is_none() {
                self.split_islands = Some(coi.islands.iter().map(|i| i.members.clone()).collect());
            }
            self.island_wk.push((
                frame.t,
                coi.islands.iter().map(|i| (i.members.clone(), i.wk)).collect(),
            ));
        }

        let command = self.try_identify(frame, &coi)?;

        self.trace.push(TraceRow {
            t: frame.t,
            islands: coi.islands.len(),
            wk_max: coi.islands.iter().map(|i| i.wk).fold(0.0, f64::max),
            gamma: coi.islands.first().map_or(0.0, |i| i.gamma),
            delta_max_deg: coi
                .islands
                .iter()
                .filter_map(|i| i.pair.map(|p| p.delta_max.to_degrees()))
                .fold(0.0, f64::max),
            delta_tilde_deg: dt_deg,
            omega_tilde: coi.omega_tilde.clone(),
            wk_i: coi.wk_i.clone(),
        });
        Ok(command)
    }

    fn try_identify(&mut self, frame: &PmuFrame, coi: &CoiFrame) -> Result<Option<SplitCommand>, HarnessError> {
        let Some((ev, _, members)) = &self.detection else {
            return Ok(None);
        };
        if self.selection.is_some() || self.gave_up {
            return Ok(None);
        }
        if frame.t - ev.t > self.cfg.splitter.give_up_s + 1e-9
            || !coi.islands.iter().any(|i| &i.members == members)
        {
            self.gave_up = true;
            return Ok(None);
        }
        if self.history.len() < self.cfg.splitter.fit_window {
            return Ok(None);
        }
        let cols: Vec<Vec<f64>> = self
            .history
            .iter()
            .map(|row| members.iter().map(|&i| row[i]).collect())
            .collect();
        let pred = taylor_predict(
            &cols,
            members,
            self.t_s,
            self.cfg.splitter.horizon_s,
            self.cfg.splitter.fit_window,
        )?;
        let Some(bip) = algorithm1(&pred, Some(self.registry)) else {
            return Ok(None);
        };
        let k = self.registry.lookup(&bip.cm, &bip.nm).expect("algorithm1 checked membership");
        let open: Vec<BranchId> = self
            .registry
            .cutset(k)
            .iter()
            .copied()
            .filter(|id| frame.theta_deg.get(id.0).is_some_and(Option::is_some))
            .collect();
        let entry = self.registry.entry(k);
        let split_at = frame.n + self.cfg.splitter.split_delay_frames;
        self.selection = Some((
            SelectionReport {
                t: frame.t,
                scenario: entry.scenario,
                group: entry.group.clone(),
                cm: bip.cm.iter().map(|&i| i as u32 + 1).collect(),
                cutset: open.iter().map(|id| self.case.branches[id.0].label()).collect(),
                d: bip.d.clone(),
                phi: bip.phi.clone(),
            },
            bip,
            frame.n,
        ));
        self.split_frame = Some(split_at);
        Ok(Some(SplitCommand {
            frame: split_at,
            cutset: open,
        }))
    }

    fn prediction_check(&self) -> Option<PredictionCheck> {
        let (_, bip, n_sel) = self.selection.as_ref()?;
        let members: Vec<usize> = {
            let mut v = bip.cm.clone();
            v.extend(&bip.nm);
            v.sort_unstable();
            v
        };
        let pos = self.global_rows.iter().position(|(n, _)| n == n_sel)?;
        let fit = self.cfg.splitter.fit_window;
        if pos + 1 < fit {
            return None;
        }
        let cols: Vec<Vec<f64>> = self.global_rows[pos + 1 - fit..=pos]
            .iter()
            .map(|(_, row)| members.iter().map(|&i| row[i]).collect())
            .collect();
        let pred = taylor_predict(&cols, &members, self.t_s, self.cfg.splitter.horizon_s, fit).ok()?;
        let (mut max_abs, mut sum_rel, mut max_rel, mut count) = (0.0f64, 0.0, 0.0f64, 0usize);
        for (k, row) in pred.values.iter().enumerate() {
            let (_, actual) = self.global_rows.get(pos + 1 + k)?;
            for (c, &i) in members.iter().enumerate() {
                let err = (row[c] - actual[i]).abs();
                max_abs = max_abs.max(err);
                if actual[i].abs() >= 1.0 {
                    let rel = err / actual[i].abs();
                    sum_rel += rel;
                    max_rel = max_rel.max(rel);
                    count += 1;
                }
            }
        }
        Some(PredictionCheck {
            t: *n_sel as f64 * self.t_s,
            max_abs_deg: max_abs,
            mean_rel: if count > 0 { sum_rel / count as f64 } else { 0.0 },
            max_rel,
        })
    }

    fn split_report(&self, wk_detect: f64) -> Option<SplitReport> {
        let t_split = self.t_split()?;
        let islands = self.split_islands.clone()?;
        let post = self.cfg.post_split_s;
        let bins = post.round().max(1.0) as usize;
        let reports = islands
            .iter()
            .map(|members| {
                let mut per_s = vec![0.0f64; bins];
                for (t, wks) in &self.island_wk {
                    let k = ((t - t_split) / 1.0).floor() as usize;
                    if let (Some(slot), Some((_, wk))) = (per_s.get_mut(k), wks.iter().find(|(m, _)| m == members)) {
                        *slot = slot.max(*wk);
                    }
                }
                IslandReport {
                    machines: members.iter().map(|&i| i as u32 + 1).collect(),
                    wk_max_per_s: per_s,
                }
            })
            .collect();
        let lo = t_split + post - 1.0 - 1e-9;
        let hi = t_split + post + 1e-9;
        let final_window: Vec<f64> = self
            .island_wk
            .iter()
            .filter(|(t, _)| *t >= lo && *t <= hi)
            .map(|(_, wks)| wks.iter().map(|(_, w)| *w).fold(0.0, f64::max))
            .collect();
        let covered = self.last_t >= t_split + post - 1e-9;
        let wk_final_max = final_window.iter().copied().fold(0.0, f64::max);
        let settled = covered
            && islands.len() > 1
            && wk_final_max < self.cfg.settle_fraction * wk_detect
            && self.post_split.is_empty();
        Some(SplitReport {
            t_split,
            islands: reports,
            wk_final_max,
            settled,
        })
    }

    /// Assembles the report once the stream has ended.
    pub fn finish(&self, scenario: &str) -> RunReport {
        let detection = self.detection.as_ref().map(|(_, rep, _)| rep.clone());
        let selection = self.selection.as_ref().map(|(rep, _, _)| rep.clone());
        let split = detection.as_ref().and_then(|d| self.split_report(d.wk));
        let verdict = match (&detection, &selection, &split) {
            (None, _, _) => Verdict::NoOos,
            (Some(_), None, _) => Verdict::DetectedNoMatch,
            (Some(_), Some(_), Some(s)) if s.settled => Verdict::DetectedSplitStable,
            _ => Verdict::DetectedSplitUnstable,
        };
        RunReport {
            scenario: scenario.to_string(),
            verdict,
            detection,
            selection,
            split,
            post_split_detections: self.post_split.clone(),
            undamped_alarms: self.alarms.clone(),
            prediction: self.prediction_check(),
            end_time_s: self.last_t,
        }
    }
}

/// Runs a recorded stream through the pipeline without actuation.
pub fn replay_stream(
    case: &GridCase,
    stream: &PmuStream,
    cfg: &PipelineConfig,
    registry: &CggRegistry,
    name: &str,
) -> Result<(RunReport, Vec<TraceRow>, Vec<LogEntry>), HarnessError> {
    let expected: Vec<(u32, u32)> = case.branches.iter().map(|b| (b.from, b.to)).collect();
    if stream.branches != expected {
        return Err(HarnessError::Config("stream branch columns do not match the network".into()));
    }
    let mut pipe = Pipeline::new(case, cfg.clone(), registry, stream.t_s)?;
    for f in &stream.frames {
        pipe.push(f)?;
    }
    Ok((pipe.finish(name), pipe.trace.clone(), pipe.log.clone()))
}
