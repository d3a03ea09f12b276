use std::collections::BTreeSet;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::case::{BranchId, GridCase};
use super::NetworkError;

/// Dense complex bus admittance matrix; row `k` is `case.buses[k]`.
#[derive(Debug, Clone)]
pub struct YbusMatrix {
    pub y: DMatrix<Complex64>,
    pub bus_ids: Vec<u32>,
}

impl YbusMatrix {
    pub fn dim(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn get(&self, from: u32, to: u32) -> Option<Complex64> {
        let i = self.bus_ids.iter().position(|&b| b == from)?;
        let j = self.bus_ids.iter().position(|&b| b == to)?;
        Some(self.y[(i, j)])
    }

    /// Copy with extra shunt admittances added to the diagonal, indexed by row.
    pub fn with_shunts(&self, shunts: &[Complex64]) -> YbusMatrix {
        let mut out = self.clone();
        for (k, y) in shunts.iter().enumerate() {
            out.y[(k, k)] += y;
        }
        out
    }
}

/// Four π-model stamps `(ff, ft, tf, tt)` of a branch.
pub(crate) fn branch_stamps(case: &GridCase, id: BranchId) -> (usize, usize, [Complex64; 4]) {
    let br = &case.branches[id.0];
    let ys = Complex64::new(br.r, br.x).inv();
    let bc = Complex64::new(0.0, br.b / 2.0);
    let t = br.tap;
    let f = case.bus_index(br.from).expect("validated");
    let to = case.bus_index(br.to).expect("validated");
    (f, to, [(ys + bc) / (t * t), -ys / t, -ys / t, ys + bc])
}

/// Assembles the bus admittance matrix with the listed branches removed.
pub fn build_ybus(case: &GridCase, outages: &BTreeSet<BranchId>) -> Result<YbusMatrix, NetworkError> {
    if let Some(bad) = outages.iter().find(|id| id.0 >= case.branches.len()) {
        return Err(NetworkError::UnknownBranch(bad.0));
    }
    let n = case.bus_count();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (k, bus) in case.buses.iter().enumerate() {
        y[(k, k)] += Complex64::new(bus.gs, bus.bs);
    }
    for id in case.in_service(outages) {
        let (f, t, [ff, ft, tf, tt]) = branch_stamps(case, id);
        y[(f, f)] += ff;
        y[(f, t)] += ft;
        y[(t, f)] += tf;
        y[(t, t)] += tt;
    }
    Ok(YbusMatrix {
        y,
        bus_ids: case.buses.iter().map(|b| b.id).collect(),
    })
}
