//! Center-of-inertia quantities and the energy/γ based out-of-step detector.
//!
//! Every per-island aggregate is computed relative to that island's own center
//! of inertia, so islands formed by splitting are monitored independently.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid detector configuration: {0}")]
    Invalid(String),
}

/// Removes the inertia-weighted mean of `values` within each island.
pub fn coi_transform(values: &[f64], inertias: &[f64], island: &[usize]) -> Vec<f64> {
    let mut sums: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for ((v, m), l) in values.iter().zip(inertias).zip(island) {
        let e = sums.entry(*l).or_insert((0.0, 0.0));
        e.0 += m * v;
        e.1 += m;
    }
    values
        .iter()
        .zip(island)
        .map(|(v, l)| {
            let (num, den) = sums[l];
            v - num / den
        })
        .collect()
}

/// Per-machine kinetic energies `0.5 M ω̃²`.
pub fn machine_kinetic_energy(omega_tilde: &[f64], inertias: &[f64]) -> Vec<f64> {
    omega_tilde.iter().zip(inertias).map(|(w, m)| 0.5 * m * w * w).collect()
}

/// Per-machine `δ̃·ω̃` products.
pub fn machine_gamma(delta_tilde: &[f64], omega_tilde: &[f64]) -> Vec<f64> {
    delta_tilde.iter().zip(omega_tilde).map(|(d, w)| d * w).collect()
}

fn mean_over(values: &[f64], members: &[usize]) -> f64 {
    members.iter().map(|&i| values[i]).sum::<f64>() / members.len() as f64
}

/// Pair of machines with the largest angle separation in an island.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPair {
    /// Lower machine index of the pair (zero-based).
    pub i: usize,
    /// Higher machine index of the pair (zero-based).
    pub j: usize,
    /// Separation |δ_i − δ_j|, rad.
    pub delta_max: f64,
}

impl CriticalPair {
    /// `(leading, lagging)`: the member with the larger angle first.
    pub fn oriented(&self, delta: &[f64]) -> (usize, usize) {
        if delta[self.i] >= delta[self.j] {
            (self.i, self.j)
        } else {
            (self.j, self.i)
        }
    }
}

/// Argmax of |δ_i − δ_j| over `members` (ascending); ties keep the lowest i, then j.
pub fn critical_pair(delta: &[f64], members: &[usize]) -> Option<CriticalPair> {
    let mut best: Option<CriticalPair> = None;
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            let d = (delta[i] - delta[j]).abs();
            if best.is_none_or(|b| d > b.delta_max) {
                best = Some(CriticalPair { i, j, delta_max: d });
            }
        }
    }
    best
}

/// Island-level aggregates for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct IslandSummary {
    pub label: usize,
    /// Zero-based machine indices, ascending.
    pub members: Vec<usize>,
    /// Mean kinetic energy of the island's machines.
    pub wk: f64,
    /// Mean γ of the island's machines.
    pub gamma: f64,
    pub pair: Option<CriticalPair>,
}

/// COI-relative view of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CoiFrame {
    pub t: f64,
    /// Unwrapped absolute angles, rad.
    pub delta: Vec<f64>,
    /// COI-relative angles, rad.
    pub delta_tilde: Vec<f64>,
    /// COI-relative speeds, p.u.
    pub omega_tilde: Vec<f64>,
    pub wk_i: Vec<f64>,
    pub gamma_i: Vec<f64>,
    pub island: Vec<usize>,
    pub islands: Vec<IslandSummary>,
}

impl CoiFrame {
    pub fn new(t: f64, delta: &[f64], omega: &[f64], inertias: &[f64], island: &[usize]) -> Self {
        let delta_tilde = coi_transform(delta, inertias, island);
        let omega_tilde = coi_transform(omega, inertias, island);
        let wk_i = machine_kinetic_energy(&omega_tilde, inertias);
        let gamma_i = machine_gamma(&delta_tilde, &omega_tilde);
        let islands = crate::sim::island_members(island)
            .into_iter()
            .map(|members| IslandSummary {
                label: island[members[0]],
                wk: mean_over(&wk_i, &members),
                gamma: mean_over(&gamma_i, &members),
                pair: critical_pair(delta, &members),
                members,
            })
            .collect();
        CoiFrame {
            t,
            delta: delta.to_vec(),
            delta_tilde,
            omega_tilde,
            wk_i,
            gamma_i,
            island: island.to_vec(),
            islands,
        }
    }
}

/// Keeps angles continuous across frames by adding whole turns.
#[derive(Debug, Clone, Default)]
pub struct AngleUnwrapper {
    prev: Option<Vec<f64>>,
    offset: Vec<f64>,
}

impl AngleUnwrapper {
    pub fn unwrap(&mut self, raw: &[f64]) -> Vec<f64> {
        match &self.prev {
            None => self.offset = vec![0.0; raw.len()],
            Some(prev) => {
                for ((off, r), p) in self.offset.iter_mut().zip(raw).zip(prev) {
                    let turns = ((p - r) / (2.0 * PI)).round();
                    *off = turns * 2.0 * PI;
                }
            }
        }
        let out: Vec<f64> = raw.iter().zip(&self.offset).map(|(r, o)| r + o).collect();
        self.prev = Some(out.clone());
        out
    }
}

fn default_delta_arm() -> f64 {
    120.0
}
fn default_delta_crt() -> f64 {
    220.0
}
fn default_eps_delta() -> f64 {
    1.0
}
fn default_window() -> usize {
    9
}
fn default_eps() -> f64 {
    1e-6
}
fn default_alpha() -> f64 {
    1.1
}
fn default_omega_min() -> f64 {
    0.003
}
fn default_t_s() -> f64 {
    1.0 / 60.0
}

/// Thresholds of the energy/γ detector. Angles in degrees, speeds in p.u.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    #[serde(default = "default_delta_arm")]
    pub delta_arm_deg: f64,
    #[serde(default = "default_delta_crt")]
    pub delta_crt_deg: f64,
    /// Minimal growth rate of the largest angle separation, deg/s.
    #[serde(default = "default_eps_delta")]
    pub eps_delta_deg_per_s: f64,
    /// Window length N in samples; conditions are checked on samples n−N..n.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_eps")]
    pub eps_w: f64,
    #[serde(default = "default_alpha")]
    pub alpha_w: f64,
    #[serde(default = "default_eps")]
    pub eps_gamma: f64,
    #[serde(default = "default_alpha")]
    pub alpha_gamma: f64,
    /// Minimal COI speed deviation confirming separation, p.u.
    #[serde(default = "default_omega_min")]
    pub omega_min: f64,
    #[serde(default = "default_t_s")]
    pub t_s: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            delta_arm_deg: default_delta_arm(),
            delta_crt_deg: default_delta_crt(),
            eps_delta_deg_per_s: default_eps_delta(),
            window: default_window(),
            eps_w: default_eps(),
            alpha_w: default_alpha(),
            eps_gamma: default_eps(),
            alpha_gamma: default_alpha(),
            omega_min: default_omega_min(),
            t_s: default_t_s(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if !(self.delta_crt_deg > self.delta_arm_deg && self.delta_arm_deg > 90.0) {
            return bad("need delta_crt_deg > delta_arm_deg > 90");
        }
        if !(self.alpha_w > 1.0 && self.alpha_gamma > 1.0) {
            return bad("growth factors alpha_w, alpha_gamma must exceed 1");
        }
        if !(self.omega_min > 0.0) {
            return bad("omega_min must be positive");
        }
        if self.window < 2 {
            return bad("window must be at least 2 samples");
        }
        if !(self.t_s > 0.0) {
            return bad("t_s must be positive");
        }
        Ok(())
    }

    /// Samples needed before the windowed conditions can be evaluated: the
    /// N+1 window samples plus two predecessors for the growth ratios.
    pub fn history_len(&self) -> usize {
        self.window + 3
    }
}

/// Which clause of the decision rule confirmed the detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionPath {
    WkGrowth,
    GammaGrowth,
    CrtAngle,
    PhasePortrait,
}

impl DetectionPath {
    pub fn as_str(&self) -> &'static str {
        match self {
            DetectionPath::WkGrowth => "wk-growth",
            DetectionPath::GammaGrowth => "gamma-growth",
            DetectionPath::CrtAngle => "crt-angle",
            DetectionPath::PhasePortrait => "phase-portrait",
        }
    }
}

/// An out-of-step detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OosEvent {
    pub t: f64,
    pub island: usize,
    pub path: DetectionPath,
    /// Critical pair, zero-based, leading (positive δ̃) machine first.
    pub i_max: usize,
    pub j_max: usize,
    pub delta_max_deg: f64,
    /// Monitored group that fired, for phase-portrait detections.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<Vec<usize>>,
}

/// Per-frame island quantities the windowed conditions work on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSample {
    pub t: f64,
    /// rad
    pub delta_max: f64,
    pub wk: f64,
    pub gamma: f64,
    /// Leading / lagging machine of the critical pair and their ω̃.
    pub lead: usize,
    pub lag: usize,
    pub omega_lead: f64,
    pub omega_lag: f64,
}

impl WindowSample {
    pub fn from_island(frame: &CoiFrame, island: &IslandSummary) -> Option<Self> {
        let pair = island.pair?;
        let (lead, lag) = pair.oriented(&frame.delta);
        Some(WindowSample {
            t: frame.t,
            delta_max: pair.delta_max,
            wk: island.wk,
            gamma: island.gamma,
            lead,
            lag,
            omega_lead: frame.omega_tilde[lead],
            omega_lag: frame.omega_tilde[lag],
        })
    }
}

/// Successive differences of `x`.
fn diffs(x: impl Iterator<Item = f64>) -> Vec<f64> {
    let v: Vec<f64> = x.collect();
    v.windows(2).map(|w| w[1] - w[0]).collect()
}

/// `Δ[k] > eps` and `Δ[k]/Δ[k−1] > alpha` for the last `n + 1` differences;
/// a non-positive denominator fails the clause.
fn accelerating(d: &[f64], n: usize, eps: f64, alpha: f64) -> bool {
    let len = d.len();
    (len - n - 1..len).all(|k| d[k] > eps && d[k - 1] > 0.0 && d[k] / d[k - 1] > alpha)
}

/// The individual clauses evaluated at the newest window sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Clauses {
    pub armed: bool,
    pub separating: bool,
    pub speed: bool,
    pub wk_growth: bool,
    pub wk_rising: bool,
    pub gamma_growth: bool,
    pub crt_angle: bool,
}

impl Clauses {
    /// The full decision: the first satisfied path, in reporting order.
    pub fn decision(&self) -> Option<DetectionPath> {
        if !(self.armed && self.separating && self.speed) {
            return None;
        }
        if self.wk_growth {
            Some(DetectionPath::WkGrowth)
        } else if self.gamma_growth {
            Some(DetectionPath::GammaGrowth)
        } else if self.crt_angle {
            Some(DetectionPath::CrtAngle)
        } else {
            None
        }
    }
}

/// Evaluates every clause on `window`, whose last element is the current
/// sample. Returns `None` while fewer than `cfg.history_len()` samples exist.
pub fn evaluate_window(window: &[WindowSample], cfg: &DetectorConfig) -> Option<Clauses> {
    let need = cfg.history_len();
    if window.len() < need {
        return None;
    }
    let w = &window[window.len() - need..];
    let n = cfg.window;
    let now = w[need - 1];
    let dd = diffs(w.iter().map(|s| s.delta_max));
    let dw = diffs(w.iter().map(|s| s.wk));
    let dg = diffs(w.iter().map(|s| s.gamma));
    let eps_delta = cfg.eps_delta_deg_per_s.to_radians() * cfg.t_s;
    let tail = |d: &[f64]| d.len() - n - 1..d.len();
    Some(Clauses {
        armed: now.delta_max > cfg.delta_arm_deg.to_radians(),
        separating: tail(&dd).all(|k| dd[k] > eps_delta),
        speed: now.omega_lead > cfg.omega_min || now.omega_lag < -cfg.omega_min,
        wk_growth: accelerating(&dw, n, cfg.eps_w, cfg.alpha_w),
        wk_rising: tail(&dw).all(|k| dw[k] > cfg.eps_w),
        gamma_growth: w[need - n - 1..].iter().all(|s| s.gamma > 0.0)
            && accelerating(&dg, n, cfg.eps_gamma, cfg.alpha_gamma),
        crt_angle: now.delta_max > cfg.delta_crt_deg.to_radians(),
    })
}

/// One evaluation of the decision rule on a window of samples.
pub fn detector1_step(window: &[WindowSample], cfg: &DetectorConfig) -> Option<DetectionPath> {
    evaluate_window(window, cfg)?.decision()
}

/// Bounded history of island samples, reset whenever the island's
/// membership changes.
#[derive(Debug, Clone)]
pub struct IslandHistory {
    capacity: usize,
    rings: BTreeMap<Vec<usize>, Vec<WindowSample>>,
}

impl IslandHistory {
    pub fn new(capacity: usize) -> Self {
        IslandHistory {
            capacity,
            rings: BTreeMap::new(),
        }
    }

    /// Appends the samples of `frame`. Islands that no longer exist are dropped.
    pub fn push(&mut self, frame: &CoiFrame) {
        let live: BTreeSet<&Vec<usize>> = frame.islands.iter().map(|i| &i.members).collect();
        self.rings.retain(|k, _| live.contains(k));
        for isl in &frame.islands {
            let Some(sample) = WindowSample::from_island(frame, isl) else {
                continue;
            };
            let ring = self.rings.entry(isl.members.clone()).or_default();
            if ring.len() == self.capacity {
                ring.remove(0);
            }
            ring.push(sample);
        }
    }

    pub fn window(&self, members: &[usize]) -> Option<&[WindowSample]> {
        self.rings.get(members).map(Vec::as_slice)
    }
}

/// Streaming energy/γ detector over all islands of a frame sequence. Each
/// island fires at most once; a membership change starts a fresh window.
#[derive(Debug, Clone)]
pub struct Detector1 {
    cfg: DetectorConfig,
    history: IslandHistory,
    fired: BTreeSet<Vec<usize>>,
}

impl Detector1 {
    pub fn new(cfg: DetectorConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let cap = cfg.history_len();
        Ok(Detector1 {
            cfg,
            history: IslandHistory::new(cap),
            fired: BTreeSet::new(),
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    pub fn step(&mut self, frame: &CoiFrame) -> Vec<OosEvent> {
        self.history.push(frame);
        let mut out = Vec::new();
        for isl in &frame.islands {
            if self.fired.contains(&isl.members) {
                continue;
            }
            let Some(window) = self.history.window(&isl.members) else {
                continue;
            };
            if let Some(path) = detector1_step(window, &self.cfg) {
                let now = window[window.len() - 1];
                self.fired.insert(isl.members.clone());
                out.push(OosEvent {
                    t: frame.t,
                    island: isl.label,
                    path,
                    i_max: now.lead,
                    j_max: now.lag,
                    delta_max_deg: now.delta_max.to_degrees(),
                    group: None,
                });
            }
        }
        out
    }
}
