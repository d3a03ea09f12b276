//! Post-detection identification of the runaway machine group from predicted
//! angle deviations, and lookup of the matching splitting cutset.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{branch_flows, BranchId, GridCase, PowerFlowSolution};

#[derive(Debug, Error)]
pub enum CoherencyError {
    #[error("prediction needs {need} samples, {have} available")]
    InsufficientSamples { need: usize, have: usize },
    #[error("registry error: {0}")]
    Registry(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Predicted angle deviations for the next `h` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AnglePrediction {
    /// `values[k][c]`: deviation (deg) of machine `machines[c]` at step k+1.
    pub values: Vec<Vec<f64>>,
    /// Zero-based machine index of every column.
    pub machines: Vec<usize>,
    pub horizon_s: f64,
}

impl AnglePrediction {
    pub fn steps(&self) -> usize {
        self.values.len()
    }
}

/// Least-squares quadratic fit over the last `fit_window` rows of `history`
/// (oldest first, one column per machine), extrapolated `round(horizon/T_s)`
/// samples ahead.
pub fn taylor_predict(
    history: &[Vec<f64>],
    machines: &[usize],
    t_s: f64,
    horizon_s: f64,
    fit_window: usize,
) -> Result<AnglePrediction, CoherencyError> {
    let need = fit_window.max(3);
    if history.len() < need {
        return Err(CoherencyError::InsufficientSamples {
            need,
            have: history.len(),
        });
    }
    let h = ((horizon_s / t_s).round() as usize).max(1);
    let rows = &history[history.len() - need..];
    // abscissa in samples with the newest at 0 keeps the fit well conditioned
    let x0 = (need - 1) as f64;
    let a = DMatrix::from_fn(need, 3, |r, c| (r as f64 - x0).powi(c as i32));
    let svd = a.svd(true, true);
    let mut coeffs = Vec::with_capacity(machines.len());
    for c in 0..machines.len() {
        let b = DVector::from_iterator(need, rows.iter().map(|r| r[c]));
        let p = svd.solve(&b, 1e-12).expect("u and v were computed");
        coeffs.push(p);
    }
    let values = (1..=h)
        .map(|k| {
            let x = k as f64;
            coeffs.iter().map(|p| p[0] + p[1] * x + p[2] * x * x).collect()
        })
        .collect();
    Ok(AnglePrediction {
        values,
        machines: machines.to_vec(),
        horizon_s,
    })
}

/// Critical/non-critical bipartition selected from a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalBipartition {
    /// Zero-based machine indices of the critical group (the leading side).
    pub cm: Vec<usize>,
    pub nm: Vec<usize>,
    /// Centroid separation per prediction step, deg.
    pub d: Vec<f64>,
    /// Spread-to-separation ratio per prediction step.
    pub phi: Vec<f64>,
}

fn spread(v: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

/// `(d, φ)` of the bipartition given by `mask` over one prediction row.
pub fn bipartition_metrics(row: &[f64], mask: &[bool]) -> (f64, f64) {
    let side = |s: bool| row.iter().zip(mask).filter(move |(_, &m)| m == s).map(|(v, _)| *v);
    let mean = |s: bool| {
        let (sum, n) = side(s).fold((0.0, 0usize), |(a, n), v| (a + v, n + 1));
        sum / n as f64
    };
    let d = (mean(true) - mean(false)).abs();
    let num = spread(side(true)) + spread(side(false));
    let phi = if d > 0.0 { num / d } else { f64::INFINITY };
    (d, phi)
}

/// Candidate bipartitions: for every prediction step, each prefix of the
/// machines sorted by descending deviation. Returned as column masks of the
/// prefix side, in first-seen order, each unordered bipartition once.
pub fn candidate_masks(pred: &AnglePrediction) -> Vec<Vec<bool>> {
    let m = pred.machines.len();
    let mut seen: BTreeSet<Vec<bool>> = BTreeSet::new();
    let mut out = Vec::new();
    for row in &pred.values {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        let mut mask = vec![false; m];
        for &c in &order[..m.saturating_sub(1)] {
            mask[c] = true;
            let complement: Vec<bool> = mask.iter().map(|x| !x).collect();
            if !seen.contains(&mask) && !seen.contains(&complement) {
                seen.insert(mask.clone());
                out.push(mask.clone());
            }
        }
    }
    out
}

/// Selects the critical group from `pred`. Returns `None` when the largest
/// predicted separation shrinks anywhere over the horizon, when no candidate
/// has the strictly smallest φ at every step together with a growing centroid
/// separation, or when `registry` is given and holds no matching group.
pub fn algorithm1(pred: &AnglePrediction, registry: Option<&CggRegistry>) -> Option<CriticalBipartition> {
    let m = pred.machines.len();
    if m < 2 || pred.values.is_empty() {
        return None;
    }
    let spreads: Vec<f64> = pred.values.iter().map(|r| spread(r.iter().copied())).collect();
    if spreads.windows(2).any(|w| w[1] - w[0] < 0.0) {
        return None;
    }
    let cands = candidate_masks(pred);
    let metrics: Vec<Vec<(f64, f64)>> = cands
        .iter()
        .map(|mask| pred.values.iter().map(|row| bipartition_metrics(row, mask)).collect())
        .collect();
    let chosen = (0..cands.len()).find(|&a| {
        let dominant = (0..pred.steps())
            .all(|k| (0..cands.len()).all(|b| b == a || metrics[a][k].1 < metrics[b][k].1));
        let growing = metrics[a].windows(2).all(|w| w[1].0 - w[0].0 > 0.0);
        dominant && growing
    })?;
    let mask = &cands[chosen];
    let pick = |s: bool| -> Vec<usize> {
        let mut v: Vec<usize> = (0..m).filter(|&c| mask[c] == s).map(|c| pred.machines[c]).collect();
        v.sort_unstable();
        v
    };
    let out = CriticalBipartition {
        cm: pick(true),
        nm: pick(false),
        d: metrics[chosen].iter().map(|x| x.0).collect(),
        phi: metrics[chosen].iter().map(|x| x.1).collect(),
    };
    match registry {
        Some(reg) if reg.lookup(&out.cm, &out.nm).is_none() => None,
        _ => Some(out),
    }
}

/// One candidate grouping with its splitting cutset, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CggEntry {
    pub scenario: u32,
    /// One-based machine numbers.
    pub group: Vec<u32>,
    /// Branches to open, as `[from, to]` bus pairs.
    pub cutset: Vec<[u32; 2]>,
}

/// Candidate groupings checked against a network at load time.
#[derive(Debug, Clone)]
pub struct CggRegistry {
    entries: Vec<CggEntry>,
    groups: Vec<Vec<usize>>,
    cutsets: Vec<Vec<BranchId>>,
}

impl CggRegistry {
    /// Validates that every group is a proper subset of the machines and that
    /// opening its cutset on the intact network separates exactly that group.
    pub fn new(entries: Vec<CggEntry>, case: &GridCase) -> Result<Self, CoherencyError> {
        let m = case.machine_count();
        let err = |s: String| CoherencyError::Registry(s);
        let mut groups = Vec::new();
        let mut cutsets = Vec::new();
        let mut seen = BTreeSet::new();
        for e in &entries {
            let mut g: Vec<usize> = Vec::new();
            for &id in &e.group {
                if id == 0 || id as usize > m {
                    return Err(err(format!("scenario {}: no machine {id}", e.scenario)));
                }
                g.push(id as usize - 1);
            }
            g.sort_unstable();
            g.dedup();
            if g.is_empty() || g.len() == m {
                return Err(err(format!("scenario {}: group must be a proper nonempty subset", e.scenario)));
            }
            if !seen.insert(g.clone()) {
                return Err(err(format!("scenario {}: duplicate group", e.scenario)));
            }
            let mut cut = BTreeSet::new();
            for &[f, t] in &e.cutset {
                let id = case
                    .find_branch(f, t)
                    .ok_or_else(|| err(format!("scenario {}: no branch {f}-{t}", e.scenario)))?;
                cut.insert(id);
            }
            let islands = crate::sim::island_members(&case.machine_islands(&cut));
            if islands.len() != 2 || !islands.contains(&g) {
                return Err(err(format!(
                    "scenario {}: cutset separates {:?} instead of exactly the group",
                    e.scenario,
                    islands
                        .iter()
                        .map(|i| i.iter().map(|x| x + 1).collect::<Vec<_>>())
                        .collect::<Vec<_>>()
                )));
            }
            groups.push(g);
            cutsets.push(cut.into_iter().collect());
        }
        Ok(CggRegistry {
            entries,
            groups,
            cutsets,
        })
    }

    pub fn from_json(text: &str, case: &GridCase) -> Result<Self, CoherencyError> {
        let entries: Vec<CggEntry> =
            serde_json::from_str(text).map_err(|e| CoherencyError::Registry(e.to_string()))?;
        Self::new(entries, case)
    }

    pub fn load(path: impl AsRef<Path>, case: &GridCase) -> Result<Self, CoherencyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CoherencyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, case)
    }

    pub fn entries(&self) -> &[CggEntry] {
        &self.entries
    }

    /// Zero-based machine sets of the stored groups.
    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Position of the entry whose group equals either side of the
    /// bipartition (both sides sorted, zero-based).
    pub fn lookup(&self, cm: &[usize], nm: &[usize]) -> Option<usize> {
        self.groups.iter().position(|g| g == cm || g == nm)
    }

    pub fn entry(&self, k: usize) -> &CggEntry {
        &self.entries[k]
    }

    pub fn cutset(&self, k: usize) -> &[BranchId] {
        &self.cutsets[k]
    }
}

/// Cheapest set of branches separating `group` (zero-based machines) from the
/// other machines, with each branch costing its pre-disturbance |P| flow plus
/// `floor`. Used offline to fill registry cutsets.
pub fn flow_weighted_cutset(case: &GridCase, pf: &PowerFlowSolution, group: &[usize], floor: f64) -> Vec<BranchId> {
    let n = case.bus_count();
    let (src, sink) = (n, n + 1);
    let flows = branch_flows(case, pf);
    let mut cap = vec![vec![0.0f64; n + 2]; n + 2];
    for id in case.in_service(&BTreeSet::new()) {
        let br = &case.branches[id.0];
        let (a, b) = (case.bus_index(br.from).expect("valid"), case.bus_index(br.to).expect("valid"));
        let w = flows[id.0].abs() + floor;
        cap[a][b] += w;
        cap[b][a] += w;
    }
    let big = 1e9;
    for (k, mach) in case.machines.iter().enumerate() {
        let bus = case.bus_index(mach.bus).expect("valid");
        if group.contains(&k) {
            cap[src][bus] = big;
        } else {
            cap[bus][sink] = big;
        }
    }
    // Edmonds-Karp on the dense residual graph
    let mut residual = cap.clone();
    loop {
        let mut parent = vec![usize::MAX; n + 2];
        parent[src] = src;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n + 2 {
                if parent[v] == usize::MAX && residual[u][v] > 1e-12 {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[sink] == usize::MAX {
            let cut: Vec<BranchId> = case
                .in_service(&BTreeSet::new())
                .into_iter()
                .filter(|id| {
                    let br = &case.branches[id.0];
                    let a = parent[case.bus_index(br.from).expect("valid")] != usize::MAX;
                    let b = parent[case.bus_index(br.to).expect("valid")] != usize::MAX;
                    a != b
                })
                .collect();
            return cut;
        }
        let mut bottleneck = f64::INFINITY;
        let mut v = sink;
        while v != src {
            let u = parent[v];
            bottleneck = bottleneck.min(residual[u][v]);
            v = u;
        }
        let mut v = sink;
        while v != src {
            let u = parent[v];
            residual[u][v] -= bottleneck;
            residual[v][u] += bottleneck;
            v = u;
        }
    }
}
