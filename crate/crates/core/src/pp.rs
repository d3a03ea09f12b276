//! Phase-portrait out-of-step detection for machines and machine groups, and
//! the growing-peak counter for undamped oscillations.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::coi::{evaluate_window, CoiFrame, ConfigError, DetectionPath, DetectorConfig, IslandHistory, OosEvent};

/// Inertia-weighted COI difference between `group` and the rest of `members`:
/// returns `(δ_A, ω_A)`. `group` must be a proper nonempty subset of `members`.
pub fn group_aggregate(
    delta: &[f64],
    omega: &[f64],
    group: &[usize],
    members: &[usize],
    inertias: &[f64],
) -> (f64, f64) {
    let inside: BTreeSet<usize> = group.iter().copied().collect();
    let mut acc = [[0.0; 3]; 2];
    for &i in members {
        let side = usize::from(!inside.contains(&i));
        acc[side][0] += inertias[i] * delta[i];
        acc[side][1] += inertias[i] * omega[i];
        acc[side][2] += inertias[i];
    }
    let [a, b] = acc;
    (a[0] / a[2] - b[0] / b[2], a[1] / a[2] - b[1] / b[2])
}

fn default_delta_arm_coi() -> f64 {
    100.0
}
fn default_eps() -> f64 {
    1e-6
}
fn default_slope() -> f64 {
    1e-3
}
fn default_window() -> usize {
    9
}
fn default_kappa() -> u32 {
    5
}
fn default_peak_growth() -> f64 {
    1.05
}
fn default_peak_omega() -> f64 {
    5e-4
}

/// Thresholds of the phase-portrait detector and the peak counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpConfig {
    #[serde(default = "default_delta_arm_coi")]
    pub delta_arm_coi_deg: f64,
    /// Minimal per-sample growth of δ_A, rad.
    #[serde(default = "default_eps")]
    pub eps_delta: f64,
    /// Minimal per-sample growth of ω_A, p.u.
    #[serde(default = "default_eps")]
    pub eps_omega: f64,
    /// Minimal slope Δω_A/Δδ_A of a diverging portrait, p.u./rad.
    #[serde(default = "default_slope")]
    pub eps_slope: f64,
    #[serde(default = "default_window")]
    pub window: usize,
    /// Monitored groups as one-based machine numbers; `None` monitors every
    /// single machine plus every registered group.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<Vec<u32>>>,
    /// Growing-peak count confirming an undamped oscillation.
    #[serde(default = "default_kappa")]
    pub kappa_hat: u32,
    /// Factor by which a peak must exceed the previous absolute maximum.
    #[serde(default = "default_peak_growth")]
    pub peak_growth: f64,
    /// Peaks where |ω̃| is below this value are ignored, p.u.
    #[serde(default = "default_peak_omega")]
    pub peak_min_omega: f64,
}

impl Default for PpConfig {
    fn default() -> Self {
        PpConfig {
            delta_arm_coi_deg: default_delta_arm_coi(),
            eps_delta: default_eps(),
            eps_omega: default_eps(),
            eps_slope: default_slope(),
            window: default_window(),
            groups: None,
            kappa_hat: default_kappa(),
            peak_growth: default_peak_growth(),
            peak_min_omega: default_peak_omega(),
        }
    }
}

impl PpConfig {
    pub fn validate(&self, detector: &DetectorConfig) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if !(self.delta_arm_coi_deg < detector.delta_arm_deg) {
            return bad("delta_arm_coi_deg must be below delta_arm_deg");
        }
        if !(self.eps_slope > 0.0) {
            return bad("eps_slope must be positive");
        }
        if self.window < 2 {
            return bad("window must be at least 2 samples");
        }
        if self.kappa_hat < 5 {
            return bad("kappa_hat must be at least 5");
        }
        if !(self.peak_growth > 1.0) {
            return bad("peak_growth must exceed 1");
        }
        Ok(())
    }
}

/// Portrait conditions on `window` of `(δ_A, ω_A)` samples, newest last. The
/// window holds the N+1 checked samples preceded by the reference sample, so
/// it must be exactly `cfg.window + 2` long.
pub fn pp_conditions(window: &[(f64, f64)], cfg: &PpConfig) -> bool {
    if window.len() != cfg.window + 2 {
        return false;
    }
    let (d_ref, w_ref) = window[0];
    let (d_now, _) = window[window.len() - 1];
    if !(d_now > cfg.delta_arm_coi_deg.to_radians()) {
        return false;
    }
    window.windows(2).all(|p| {
        let ((d0, w0), (d1, w1)) = (p[0], p[1]);
        let (dd, dw) = (d1 - d0, w1 - w0);
        w1 > w_ref && d1 > d_ref && dd > cfg.eps_delta && dw > cfg.eps_omega && dw / dd > cfg.eps_slope
    })
}

/// Streaming phase-portrait detector. Combines the portrait conditions of each
/// monitored group with the angle arming/separation clauses and either a rising
/// island energy or δ_A ≥ 180°.
#[derive(Debug, Clone)]
pub struct Detector2 {
    cfg: PpConfig,
    det: DetectorConfig,
    groups: Vec<Vec<usize>>,
    history: IslandHistory,
    portraits: BTreeMap<(Vec<usize>, Vec<usize>), Vec<(f64, f64)>>,
    fired: BTreeSet<Vec<usize>>,
}

impl Detector2 {
    /// `groups` are zero-based machine sets; each is monitored within every
    /// island where it forms a proper nonempty subset.
    pub fn new(cfg: PpConfig, det: DetectorConfig, groups: Vec<Vec<usize>>) -> Result<Self, ConfigError> {
        cfg.validate(&det)?;
        det.validate()?;
        let mut groups: Vec<Vec<usize>> = groups
            .into_iter()
            .map(|mut g| {
                g.sort_unstable();
                g.dedup();
                g
            })
            .filter(|g| !g.is_empty())
            .collect();
        let mut seen = BTreeSet::new();
        groups.retain(|g| seen.insert(g.clone()));
        let cap = det.history_len();
        Ok(Detector2 {
            cfg,
            det,
            groups,
            history: IslandHistory::new(cap),
            portraits: BTreeMap::new(),
            fired: BTreeSet::new(),
        })
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn step(&mut self, frame: &CoiFrame, inertias: &[f64]) -> Vec<OosEvent> {
        self.history.push(frame);
        let live: BTreeSet<&Vec<usize>> = frame.islands.iter().map(|i| &i.members).collect();
        self.portraits.retain(|(members, _), _| live.contains(members));
        let cap = self.cfg.window + 2;
        let mut out = Vec::new();
        for isl in &frame.islands {
            let members = &isl.members;
            let monitored: Vec<&Vec<usize>> = self
                .groups
                .iter()
                .filter(|g| g.len() < members.len() && g.iter().all(|i| members.binary_search(i).is_ok()))
                .collect();
            let mut hit: Option<&Vec<usize>> = None;
            for g in monitored {
                let sample = group_aggregate(&frame.delta, &frame.omega_tilde, g, members, inertias);
                let ring = self.portraits.entry((members.clone(), g.clone())).or_default();
                if ring.len() == cap {
                    ring.remove(0);
                }
                ring.push(sample);
                if hit.is_none() && pp_conditions(ring, &self.cfg) {
                    hit = Some(g);
                }
            }
            let Some(g) = hit else { continue };
            if self.fired.contains(members) {
                continue;
            }
            let Some(window) = self.history.window(members) else {
                continue;
            };
            let Some(cl) = evaluate_window(window, &self.det) else {
                continue;
            };
            let delta_a = self.portraits[&(members.clone(), g.clone())].last().expect("pushed").0;
            if cl.armed && cl.separating && (cl.wk_rising || delta_a >= PI) {
                let now = window[window.len() - 1];
                self.fired.insert(members.clone());
                out.push(OosEvent {
                    t: frame.t,
                    island: isl.label,
                    path: DetectionPath::PhasePortrait,
                    i_max: now.lead,
                    j_max: now.lag,
                    delta_max_deg: now.delta_max.to_degrees(),
                    group: Some(g.clone()),
                });
            }
        }
        out
    }
}

/// Counts growing local maxima of each machine's kinetic energy.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakCounter {
    growth: f64,
    min_omega: f64,
    kappa_hat: u32,
    abs_max: Vec<f64>,
    kappa: Vec<u32>,
    prev: Vec<Option<(f64, f64)>>,
    rising: Vec<bool>,
    alarmed: Vec<bool>,
}

/// A machine whose growing-peak count reached the confirmation threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UndampedAlarm {
    pub t: f64,
    /// Zero-based machine index.
    pub machine: usize,
    pub kappa: u32,
}

impl PeakCounter {
    pub fn new(machines: usize, cfg: &PpConfig) -> Self {
        PeakCounter {
            growth: cfg.peak_growth,
            min_omega: cfg.peak_min_omega,
            kappa_hat: cfg.kappa_hat,
            abs_max: vec![0.0; machines],
            kappa: vec![0; machines],
            prev: vec![None; machines],
            rising: vec![false; machines],
            alarmed: vec![false; machines],
        }
    }

    pub fn kappa(&self) -> &[u32] {
        &self.kappa
    }

    pub fn alarmed(&self) -> &[bool] {
        &self.alarmed
    }

    /// Feeds one sample of per-machine energies and COI speeds. A local maximum
    /// is recognized one sample late, when the discrete derivative turns
    /// non-positive; alarms are reported once per machine.
    pub fn step(&mut self, t: f64, wk_i: &[f64], omega_tilde: &[f64]) -> Vec<UndampedAlarm> {
        let mut out = Vec::new();
        for i in 0..wk_i.len() {
            let (w, om) = (wk_i[i], omega_tilde[i]);
            if let Some((pw, pom)) = self.prev[i] {
                if w > pw {
                    self.rising[i] = true;
                } else if self.rising[i] {
                    self.rising[i] = false;
                    if pom.abs() >= self.min_omega {
                        if pw > self.growth * self.abs_max[i] {
                            self.kappa[i] += 1;
                        }
                        self.abs_max[i] = self.abs_max[i].max(pw);
                    }
                }
            }
            self.prev[i] = Some((w, om));
            if !self.alarmed[i] && self.kappa[i] >= self.kappa_hat {
                self.alarmed[i] = true;
                out.push(UndampedAlarm {
                    t,
                    machine: i,
                    kappa: self.kappa[i],
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_machine_aggregate_is_pairwise_difference() {
        let (d, w) = group_aggregate(&[0.7, 0.2], &[0.01, -0.02], &[0], &[0, 1], &[3.0, 5.0]);
        assert!((d - 0.5).abs() < 1e-15 && (w - 0.03).abs() < 1e-15);
    }

    #[test]
    fn identical_machines_aggregate_to_zero() {
        let (d, w) = group_aggregate(&[0.4; 4], &[0.01; 4], &[1, 3], &[0, 1, 2, 3], &[1.0, 2.0, 3.0, 4.0]);
        assert!(d.abs() < 1e-15 && w.abs() < 1e-15);
    }

    fn ramp(d0: f64, d1: f64, len: usize, accel: bool) -> Vec<(f64, f64)> {
        (0..len)
            .map(|k| {
                let s = k as f64 / (len - 1) as f64;
                let d = d0 + (d1 - d0) * if accel { s * s } else { s };
                let w = if accel { 0.001 + 0.01 * s } else { 0.01 * (1.0 - s) };
                (d.to_radians(), w)
            })
            .collect()
    }

    #[test]
    fn accelerating_ramp_satisfies_portrait() {
        let cfg = PpConfig::default();
        assert!(pp_conditions(&ramp(105.0, 150.0, cfg.window + 2, true), &cfg));
    }

    #[test]
    fn concave_turn_fails() {
        let cfg = PpConfig::default();
        // speed falling while angle still rises: the portrait bends over
        assert!(!pp_conditions(&ramp(105.0, 150.0, cfg.window + 2, false), &cfg));
    }

    #[test]
    fn below_arming_angle_fails() {
        let cfg = PpConfig::default();
        assert!(!pp_conditions(&ramp(40.0, 95.0, cfg.window + 2, true), &cfg));
    }

    #[test]
    fn damped_energy_counts_at_most_one_peak() {
        let cfg = PpConfig::default();
        let mut pc = PeakCounter::new(1, &cfg);
        for n in 0..2000 {
            let t = n as f64 / 60.0;
            let om = 0.01 * (-0.4 * t).exp() * (2.0 * PI * 1.1 * t).sin();
            pc.step(t, &[0.5 * 50.0 * om * om], &[om]);
        }
        assert!(pc.kappa()[0] <= 1);
    }

    fn growing(rate: f64, cycles: usize) -> PeakCounter {
        let cfg = PpConfig::default();
        let mut pc = PeakCounter::new(1, &cfg);
        let f = 0.7;
        let per = (60.0 / f) as usize;
        for n in 0..cycles * per {
            let t = n as f64 / 60.0;
            // each half period's peak grows by `rate` relative to the previous
            let amp = 0.01 * rate.powf(t * 2.0 * f);
            let om = amp.sqrt() * 0.1 * (PI * 2.0 * f * t).sin();
            pc.step(t, &[om * om], &[om]);
        }
        pc
    }

    #[test]
    fn slow_growth_is_not_counted() {
        assert!(growing(1.03, 10).kappa()[0] <= 1);
        assert!(growing(1.10, 10).kappa()[0] >= 5);
    }

    #[test]
    fn alarm_latches_once() {
        let cfg = PpConfig::default();
        let mut pc = PeakCounter::new(1, &cfg);
        let mut alarms = 0;
        let mut last = 0;
        for n in 0..3000 {
            let t = n as f64 / 60.0;
            let om = 1e-3 * 1.2f64.powf(t) * (PI * 2.0 * t).sin();
            alarms += pc.step(t, &[om * om], &[om]).len();
            assert!(pc.kappa()[0] >= last);
            last = pc.kappa()[0];
        }
        assert_eq!(alarms, 1);
        assert!(pc.alarmed()[0]);
    }
}
