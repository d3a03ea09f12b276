use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while loading or validating a case file.
#[derive(Debug, Error)]
pub enum CaseError {
    #[error("cannot read case file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("case file does not match the schema: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("duplicate bus id {0}")]
    DuplicateBus(u32),
    #[error("branch #{branch} ({from}-{to}) references missing bus {bus}")]
    DanglingBranch {
        branch: usize,
        from: u32,
        to: u32,
        bus: u32,
    },
    #[error("machine {machine} references missing bus {bus}")]
    DanglingMachine { machine: usize, bus: u32 },
    #[error("machine {machine}: {field} must be positive, got {value}")]
    NonPositive {
        machine: usize,
        field: &'static str,
        value: f64,
    },
    #[error("branch #{branch} ({from}-{to}) has zero series impedance")]
    ZeroImpedance { branch: usize, from: u32, to: u32 },
    #[error("expected exactly one slack bus, found {0}")]
    SlackCount(usize),
    #[error("bus {bus} is of type {kind:?} but hosts {machines} machines (need exactly one)")]
    MachineBus {
        bus: u32,
        kind: BusType,
        machines: usize,
    },
    #[error("in-service network is disconnected: bus {0} unreachable from the slack bus")]
    Disconnected(u32),
    #[error("case has no machines")]
    NoMachines,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusType {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    #[serde(rename = "type")]
    pub kind: BusType,
    /// Active load, p.u.
    #[serde(default)]
    pub pd: f64,
    /// Reactive load, p.u.
    #[serde(default)]
    pub qd: f64,
    #[serde(default)]
    pub gs: f64,
    #[serde(default)]
    pub bs: f64,
    /// Voltage magnitude setpoint for slack and PV buses.
    #[serde(default = "unity")]
    pub vset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchStatus {
    In,
    Out,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    #[serde(default)]
    pub b: f64,
    /// Off-nominal tap ratio on the from side.
    #[serde(default = "unity")]
    pub tap: f64,
    #[serde(default = "in_service")]
    pub status: BranchStatus,
}

impl Branch {
    pub fn label(&self) -> String {
        format!("{}-{}", self.from, self.to)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Machine {
    /// Terminal bus id.
    pub bus: u32,
    /// Inertia constant on system base, s.
    pub h: f64,
    /// Transient reactance, p.u.
    pub xd_prime: f64,
    /// Damping coefficient, p.u. power per p.u. speed.
    #[serde(default)]
    pub d: f64,
    /// Scheduled active power, p.u. (ignored for the slack machine).
    pub p: f64,
}

impl Machine {
    /// Inertia coefficient of the swing equation with speed in p.u.
    pub fn inertia(&self) -> f64 {
        2.0 * self.h
    }
}

/// Index of a branch in [`GridCase::branches`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BranchId(pub usize);

fn unity() -> f64 {
    1.0
}

fn in_service() -> BranchStatus {
    BranchStatus::In
}

fn default_base() -> f64 {
    100.0
}

fn default_f0() -> f64 {
    60.0
}

/// Static network and machine data in per-unit on the system base.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCase {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_base")]
    pub base_mva: f64,
    #[serde(default = "default_f0")]
    pub f0_hz: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub machines: Vec<Machine>,
    #[serde(skip)]
    index: HashMap<u32, usize>,
}

impl GridCase {
    /// Builds and validates a case from its parts.
    pub fn new(
        name: impl Into<String>,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        machines: Vec<Machine>,
    ) -> Result<Self, CaseError> {
        let mut case = GridCase {
            name: name.into(),
            base_mva: 100.0,
            f0_hz: 60.0,
            buses,
            branches,
            machines,
            index: HashMap::new(),
        };
        case.validate()?;
        Ok(case)
    }

    pub fn from_json(text: &str) -> Result<Self, CaseError> {
        let mut case: GridCase = serde_json::from_str(text)?;
        case.validate()?;
        Ok(case)
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn machine_count(&self) -> usize {
        self.machines.len()
    }

    /// Row index of a bus id.
    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusType::Slack)
            .expect("validated case has a slack bus")
    }

    /// Nominal angular frequency, rad/s.
    pub fn omega0(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.f0_hz
    }

    pub fn inertias(&self) -> Vec<f64> {
        self.machines.iter().map(Machine::inertia).collect()
    }

    /// Branch connecting two buses in either orientation.
    pub fn find_branch(&self, a: u32, b: u32) -> Option<BranchId> {
        self.branches
            .iter()
            .position(|br| (br.from == a && br.to == b) || (br.from == b && br.to == a))
            .map(BranchId)
    }

    pub fn branch(&self, id: BranchId) -> Option<&Branch> {
        self.branches.get(id.0)
    }

    /// Branches in service once `outages` are removed.
    pub fn in_service(&self, outages: &BTreeSet<BranchId>) -> Vec<BranchId> {
        (0..self.branches.len())
            .map(BranchId)
            .filter(|id| self.branches[id.0].status == BranchStatus::In && !outages.contains(id))
            .collect()
    }

    /// Connected-component label of every bus for the given outage set.
    /// Labels are dense and ordered by first appearance in bus order.
    pub fn bus_components(&self, outages: &BTreeSet<BranchId>) -> Vec<usize> {
        let n = self.buses.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for id in self.in_service(outages) {
            let br = &self.branches[id.0];
            let (a, b) = (self.index[&br.from], self.index[&br.to]);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut labels = vec![usize::MAX; n];
        let mut roots: HashMap<usize, usize> = HashMap::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            let next = roots.len();
            labels[i] = *roots.entry(r).or_insert(next);
        }
        labels
    }

    /// Island label per machine: machines sharing a connected AC network get the
    /// same label; labels are numbered by lowest machine index.
    pub fn machine_islands(&self, outages: &BTreeSet<BranchId>) -> Vec<usize> {
        let comps = self.bus_components(outages);
        let mut map: HashMap<usize, usize> = HashMap::new();
        self.machines
            .iter()
            .map(|m| {
                let c = comps[self.index[&m.bus]];
                let next = map.len();
                *map.entry(c).or_insert(next)
            })
            .collect()
    }

    fn validate(&mut self) -> Result<(), CaseError> {
        self.index.clear();
        for (i, bus) in self.buses.iter().enumerate() {
            if self.index.insert(bus.id, i).is_some() {
                return Err(CaseError::DuplicateBus(bus.id));
            }
        }
        for (i, br) in self.branches.iter().enumerate() {
            for bus in [br.from, br.to] {
                if !self.index.contains_key(&bus) {
                    return Err(CaseError::DanglingBranch {
                        branch: i,
                        from: br.from,
                        to: br.to,
                        bus,
                    });
                }
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(CaseError::ZeroImpedance {
                    branch: i,
                    from: br.from,
                    to: br.to,
                });
            }
        }
        if self.machines.is_empty() {
            return Err(CaseError::NoMachines);
        }
        for (i, m) in self.machines.iter().enumerate() {
            let machine = i + 1;
            if !self.index.contains_key(&m.bus) {
                return Err(CaseError::DanglingMachine { machine, bus: m.bus });
            }
            for (field, value) in [("h", m.h), ("xd_prime", m.xd_prime)] {
                if !(value > 0.0) {
                    return Err(CaseError::NonPositive {
                        machine,
                        field,
                        value,
                    });
                }
            }
        }
        let slacks = self.buses.iter().filter(|b| b.kind == BusType::Slack).count();
        if slacks != 1 {
            return Err(CaseError::SlackCount(slacks));
        }
        for bus in &self.buses {
            let hosted = self.machines.iter().filter(|m| m.bus == bus.id).count();
            let ok = match bus.kind {
                BusType::Pq => hosted == 0,
                BusType::Pv | BusType::Slack => hosted == 1,
            };
            if !ok {
                return Err(CaseError::MachineBus {
                    bus: bus.id,
                    kind: bus.kind,
                    machines: hosted,
                });
            }
        }
        let comps = self.bus_components(&BTreeSet::new());
        if let Some(i) = comps.iter().position(|&c| c != comps[self.slack_index()]) {
            return Err(CaseError::Disconnected(self.buses[i].id));
        }
        Ok(())
    }
}

/// Reads and validates a case file.
pub fn load_case(path: impl AsRef<Path>) -> Result<GridCase, CaseError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CaseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    GridCase::from_json(&text)
}
