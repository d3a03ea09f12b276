//! Classical-model transient simulation with scripted topology events, sampled
//! into a PMU-rate frame stream.

mod dynamics;
mod script;
mod stream;

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{
    build_ybus, internal_emfs, load_admittances, run_power_flow, BranchId, GridCase, NetworkError,
    PowerFlowError, PowerFlowSolution, ReducedNetwork,
};

pub use dynamics::{step, SimState, SwingParams};
pub use script::{Event, EventKind, EventParams, EventScript, Target, BOLTED_FAULT_B};
pub use stream::{PmuFrame, PmuStream, StreamError};

use script::{Action, TimedAction};

/// Largest tolerated |dω/dt| at the initial operating point.
const EQUILIBRIUM_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario script error: {0}")]
    Script(String),
    #[error("no branch between buses {0} and {1}")]
    UnknownBranch(u32, u32),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("initial state is not an equilibrium (max |dω/dt| = {0:e})")]
    NotEquilibrium(f64),
    #[error("state became non-finite; last valid time {last_valid_t} s")]
    NonFinite { last_valid_t: f64 },
    #[error("opening {0:?} does not split any island")]
    CutsetNotDisconnecting(Vec<String>),
}

/// Machine memberships after a split, and the branches actually opened.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    /// Zero-based machine indices per island, ordered by lowest member.
    pub islands: Vec<Vec<usize>>,
    pub opened: Vec<BranchId>,
}

/// Groups machine indices by island label.
pub fn island_members(labels: &[usize]) -> Vec<Vec<usize>> {
    let count = labels.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); count];
    for (i, &l) in labels.iter().enumerate() {
        out[l].push(i);
    }
    out.retain(|g| !g.is_empty());
    out
}

/// Equilibrium state at the power-flow operating point.
pub fn init_from_power_flow(case: &GridCase, pf: &PowerFlowSolution) -> Result<SimState, SimError> {
    let sim = Simulator::new(case, pf, &EventScript::quiet(0.0))?;
    Ok(sim.state)
}

/// Streaming simulator. Frames are produced lazily so a controller can inject
/// splitting actions between frames.
pub struct Simulator<'a> {
    case: &'a GridCase,
    loads: Vec<Complex64>,
    emf_magnitude: Vec<f64>,
    params: SwingParams,
    outages: BTreeSet<BranchId>,
    faults: BTreeMap<usize, Complex64>,
    network: ReducedNetwork,
    state: SimState,
    step_index: u64,
    steps_per_frame: u64,
    h: f64,
    t_s: f64,
    end_frame: u64,
    next_frame: u64,
    pending: Vec<TimedAction>,
    splits: Vec<(f64, SplitOutcome)>,
}

impl<'a> Simulator<'a> {
    pub fn new(case: &'a GridCase, pf: &PowerFlowSolution, script: &EventScript) -> Result<Self, SimError> {
        let mut pending = script.resolve(case)?;
        pending.reverse();
        let loads = load_admittances(case, pf);
        let emfs = internal_emfs(case, pf);
        let emf_magnitude: Vec<f64> = emfs.iter().map(|e| e.norm()).collect();
        let outages = BTreeSet::new();
        let network = reduce(case, &loads, &outages, &BTreeMap::new(), &emf_magnitude)?;
        let params = SwingParams {
            pm: pf.machine_power.iter().map(|s| s.re).collect(),
            damping: case.machines.iter().map(|m| m.d).collect(),
            inertia: case.inertias(),
            omega0: case.omega0(),
        };
        let state = SimState {
            t: 0.0,
            delta: emfs.iter().map(|e| e.arg()).collect(),
            omega: vec![0.0; case.machine_count()],
            island: case.machine_islands(&outages),
        };
        let (_, domega) = params.derivatives(&network, &state.delta, &state.omega);
        let worst = domega.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        if !(worst < EQUILIBRIUM_TOLERANCE) {
            return Err(SimError::NotEquilibrium(worst));
        }
        let steps_per_frame = script.steps_per_frame();
        Ok(Simulator {
            case,
            loads,
            emf_magnitude,
            params,
            outages,
            faults: BTreeMap::new(),
            network,
            state,
            step_index: 0,
            steps_per_frame,
            h: script.h_int(),
            t_s: script.t_s,
            end_frame: (script.end_time_s / script.t_s + 1e-9).floor() as u64,
            next_frame: 0,
            pending,
            splits: Vec::new(),
        })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn network(&self) -> &ReducedNetwork {
        &self.network
    }

    pub fn t_s(&self) -> f64 {
        self.t_s
    }

    pub fn outages(&self) -> &BTreeSet<BranchId> {
        &self.outages
    }

    /// Splits performed so far with their times.
    pub fn splits(&self) -> &[(f64, SplitOutcome)] {
        &self.splits
    }

    pub fn empty_stream(&self) -> PmuStream {
        PmuStream::for_case(self.case, self.t_s)
    }

    /// Index of the next frame to be produced.
    pub fn next_frame_index(&self) -> u64 {
        self.next_frame
    }

    pub fn end_frame(&self) -> u64 {
        self.end_frame
    }

    /// Moves the end of the run to at least `t` seconds.
    pub fn extend_to(&mut self, t: f64) {
        let frame = (t / self.t_s + 1e-9).floor() as u64;
        self.end_frame = self.end_frame.max(frame);
    }

    /// Stops the run after the frame at time `t`.
    pub fn truncate_to(&mut self, t: f64) {
        let frame = (t / self.t_s + 1e-9).floor() as u64;
        self.end_frame = self.end_frame.min(frame);
    }

    /// Schedules opening `cutset` at the instant of frame `frame`.
    pub fn schedule_split(&mut self, cutset: Vec<BranchId>, frame: u64) {
        let action = TimedAction {
            step: frame * self.steps_per_frame,
            action: Action::Split(cutset),
        };
        // pending is kept in reverse time order; equal-time actions keep script order
        let pos = self
            .pending
            .iter()
            .position(|a| a.step < action.step)
            .unwrap_or(self.pending.len());
        self.pending.insert(pos, action);
    }

    /// Advances to the next frame instant and samples it; `None` once the end
    /// time has been passed.
    pub fn next_frame(&mut self) -> Result<Option<PmuFrame>, SimError> {
        if self.next_frame > self.end_frame {
            return Ok(None);
        }
        let target = self.next_frame * self.steps_per_frame;
        loop {
            self.apply_due()?;
            if self.step_index == target {
                break;
            }
            let next = step(&self.state, &self.network, &self.params, self.h);
            if !next.is_finite() {
                return Err(SimError::NonFinite {
                    last_valid_t: self.state.t,
                });
            }
            self.state = next;
            self.step_index += 1;
            // keep time on the grid rather than accumulating rounding
            self.state.t = self.step_index as f64 * self.h;
        }
        let frame = self.sample(self.next_frame);
        self.next_frame += 1;
        Ok(Some(frame))
    }

    /// Runs to the end, collecting every frame.
    pub fn run_to_end(&mut self) -> Result<PmuStream, SimError> {
        let mut stream = self.empty_stream();
        while let Some(f) = self.next_frame()? {
            stream.frames.push(f);
        }
        Ok(stream)
    }

    fn apply_due(&mut self) -> Result<(), SimError> {
        let mut topology_changed = false;
        while self.pending.last().is_some_and(|a| a.step <= self.step_index) {
            let TimedAction { action, .. } = self.pending.pop().expect("checked");
            match action {
                Action::ApplyFault { bus, admittance } => {
                    self.faults.insert(bus, admittance);
                    topology_changed = true;
                }
                Action::ClearFault { bus } => {
                    match bus {
                        Some(b) => {
                            self.faults.remove(&b);
                        }
                        None => self.faults.clear(),
                    }
                    topology_changed = true;
                }
                Action::Trip(id) => {
                    self.outages.insert(id);
                    topology_changed = true;
                }
                Action::Split(cutset) => {
                    let outcome = apply_split(self.case, &self.outages, &cutset)?;
                    self.outages.extend(outcome.opened.iter().copied());
                    self.splits.push((self.state.t, outcome));
                    topology_changed = true;
                }
                Action::SetDamping { machine, d } => self.params.damping[machine] = d,
            }
        }
        if topology_changed {
            self.network = reduce(self.case, &self.loads, &self.outages, &self.faults, &self.emf_magnitude)?;
            self.state.island = self.case.machine_islands(&self.outages);
        }
        Ok(())
    }

    fn sample(&self, n: u64) -> PmuFrame {
        let emf = self.network.emfs(&self.state.delta);
        let v = self.network.bus_voltages(&emf);
        let theta_deg = self
            .case
            .branches
            .iter()
            .enumerate()
            .map(|(k, br)| {
                if self.outages.contains(&BranchId(k)) || br.status != crate::grid::BranchStatus::In {
                    return None;
                }
                let f = v[self.case.bus_index(br.from).expect("validated")];
                let t = v[self.case.bus_index(br.to).expect("validated")];
                Some((f * t.conj()).arg().to_degrees())
            })
            .collect();
        PmuFrame {
            n,
            t: n as f64 * self.t_s,
            delta_deg: self.state.delta.iter().map(|d| d.to_degrees()).collect(),
            omega: self.state.omega.clone(),
            island: self.state.island.clone(),
            vmag: v.iter().map(|x| x.norm()).collect(),
            theta_deg,
        }
    }
}

fn reduce(
    case: &GridCase,
    loads: &[Complex64],
    outages: &BTreeSet<BranchId>,
    faults: &BTreeMap<usize, Complex64>,
    emf_magnitude: &[f64],
) -> Result<ReducedNetwork, SimError> {
    let mut shunts = loads.to_vec();
    for (&bus, &y) in faults {
        shunts[bus] += y;
    }
    let ybus = build_ybus(case, outages)?.with_shunts(&shunts);
    Ok(ReducedNetwork::from_loaded_ybus(&ybus, case, emf_magnitude.to_vec())?)
}

/// Opens the in-service members of `cutset` and reports the resulting islands.
/// Fails when no island gains a machine-bearing component.
pub fn apply_split(
    case: &GridCase,
    outages: &BTreeSet<BranchId>,
    cutset: &[BranchId],
) -> Result<SplitOutcome, SimError> {
    let label = |id: &BranchId| {
        case.branch(*id)
            .map(|b| b.label())
            .unwrap_or_else(|| format!("#{}", id.0))
    };
    if let Some(bad) = cutset.iter().find(|id| id.0 >= case.branches.len()) {
        return Err(SimError::Network(NetworkError::UnknownBranch(bad.0)));
    }
    let before = island_members(&case.machine_islands(outages)).len();
    let opened: Vec<BranchId> = cutset.iter().copied().filter(|id| !outages.contains(id)).collect();
    let mut after_outages = outages.clone();
    after_outages.extend(opened.iter().copied());
    let islands = island_members(&case.machine_islands(&after_outages));
    if islands.len() <= before {
        return Err(SimError::CutsetNotDisconnecting(cutset.iter().map(label).collect()));
    }
    Ok(SplitOutcome { islands, opened })
}

/// Runs a scripted scenario from the power-flow equilibrium.
pub fn run_scenario(case: &GridCase, script: &EventScript) -> Result<PmuStream, SimError> {
    let pf = run_power_flow(case)?;
    Simulator::new(case, &pf, script)?.run_to_end()
}
