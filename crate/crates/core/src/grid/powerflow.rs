use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use super::case::{BusType, GridCase};
use super::ybus::{branch_stamps, build_ybus, YbusMatrix};

const TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 30;

#[derive(Debug, Error)]
pub enum PowerFlowError {
    #[error("power flow did not converge after {iterations} iterations (max mismatch {mismatch:e} p.u.)")]
    NonConvergence { iterations: usize, mismatch: f64 },
    #[error("singular power-flow Jacobian at iteration {0}")]
    SingularJacobian(usize),
}

/// Converged operating point.
#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    /// Bus voltage phasors in case bus order.
    pub voltages: Vec<Complex64>,
    /// Complex power injected by each machine at its terminal.
    pub machine_power: Vec<Complex64>,
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.voltages.iter().map(|v| v.norm()).collect()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.voltages.iter().map(|v| v.arg()).collect()
    }
}

fn injections(y: &DMatrix<Complex64>, v: &[Complex64]) -> Vec<Complex64> {
    let vv = DVector::from_column_slice(v);
    let i = y * &vv;
    v.iter().zip(i.iter()).map(|(v, i)| v * i.conj()).collect()
}

/// Newton-Raphson power flow in polar coordinates. Reactive limits are not enforced;
/// the slack bus absorbs the active-power imbalance.
pub fn run_power_flow(case: &GridCase) -> Result<PowerFlowSolution, PowerFlowError> {
    let ybus = build_ybus(case, &BTreeSet::new()).expect("no outages requested");
    solve(case, &ybus)
}

pub(crate) fn solve(case: &GridCase, ybus: &YbusMatrix) -> Result<PowerFlowSolution, PowerFlowError> {
    let n = case.bus_count();
    let y = &ybus.y;
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    for (k, bus) in case.buses.iter().enumerate() {
        spec[k] -= Complex64::new(bus.pd, bus.qd);
    }
    for m in &case.machines {
        let k = case.bus_index(m.bus).expect("validated");
        spec[k] += Complex64::new(m.p, 0.0);
    }

    let pvpq: Vec<usize> = (0..n).filter(|&k| case.buses[k].kind != BusType::Slack).collect();
    let pq: Vec<usize> = (0..n).filter(|&k| case.buses[k].kind == BusType::Pq).collect();
    let mut vm: Vec<f64> = case
        .buses
        .iter()
        .map(|b| if b.kind == BusType::Pq { 1.0 } else { b.vset })
        .collect();
    let mut va = vec![0.0; n];
    let polar = |vm: &[f64], va: &[f64]| -> Vec<Complex64> {
        vm.iter().zip(va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect()
    };

    let mismatch = |v: &[Complex64]| -> (DVector<f64>, f64) {
        let s = injections(y, v);
        let mut f = DVector::zeros(pvpq.len() + pq.len());
        for (r, &k) in pvpq.iter().enumerate() {
            f[r] = s[k].re - spec[k].re;
        }
        for (r, &k) in pq.iter().enumerate() {
            f[pvpq.len() + r] = s[k].im - spec[k].im;
        }
        let worst = f.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        (f, worst)
    };

    let mut v = polar(&vm, &va);
    let (mut f, mut worst) = mismatch(&v);
    let mut iterations = 0;
    while !(worst < TOLERANCE) {
        if iterations == MAX_ITERATIONS || !worst.is_finite() {
            return Err(PowerFlowError::NonConvergence {
                iterations,
                mismatch: worst,
            });
        }
        iterations += 1;
        let jac = jacobian(y, &v, &pvpq, &pq);
        let dx = jac
            .lu()
            .solve(&(-&f))
            .ok_or(PowerFlowError::SingularJacobian(iterations))?;
        for (r, &k) in pvpq.iter().enumerate() {
            va[k] += dx[r];
        }
        for (r, &k) in pq.iter().enumerate() {
            vm[k] += dx[pvpq.len() + r];
        }
        v = polar(&vm, &va);
        (f, worst) = mismatch(&v);
    }

    let s = injections(y, &v);
    let machine_power = case
        .machines
        .iter()
        .map(|m| {
            let k = case.bus_index(m.bus).expect("validated");
            let bus = &case.buses[k];
            s[k] + Complex64::new(bus.pd, bus.qd)
        })
        .collect();
    Ok(PowerFlowSolution {
        voltages: v,
        machine_power,
        iterations,
        max_mismatch: worst,
    })
}

/// Jacobian of [P(pvpq); Q(pq)] with respect to [Va(pvpq); Vm(pq)].
/// Active power entering each branch at its from end, p.u.; zero for branches
/// out of service.
pub fn branch_flows(case: &GridCase, pf: &PowerFlowSolution) -> Vec<f64> {
    let mut out = vec![0.0; case.branches.len()];
    for id in case.in_service(&BTreeSet::new()) {
        let (f, t, [ff, ft, _, _]) = branch_stamps(case, id);
        let (vf, vt) = (pf.voltages[f], pf.voltages[t]);
        out[id.0] = (vf * (ff * vf + ft * vt).conj()).re;
    }
    out
}

fn jacobian(y: &DMatrix<Complex64>, v: &[Complex64], pvpq: &[usize], pq: &[usize]) -> DMatrix<f64> {
    let n = v.len();
    let vv = DVector::from_column_slice(v);
    let ibus = y * &vv;
    let j = Complex64::new(0.0, 1.0);
    // dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
    // dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
    let mut ds_dva = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let mut ds_dvm = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for r in 0..n {
        for c in 0..n {
            let yrc = y[(r, c)];
            if yrc == Complex64::new(0.0, 0.0) && r != c {
                continue;
            }
            let unit = v[c] / v[c].norm();
            let mut a = -(yrc * v[c]).conj();
            let mut m = v[r] * (yrc * unit).conj();
            if r == c {
                a += ibus[r].conj();
                m += ibus[r].conj() * unit;
            }
            ds_dva[(r, c)] = j * v[r] * a;
            ds_dvm[(r, c)] = m;
        }
    }
    let np = pvpq.len();
    let dim = np + pq.len();
    let mut jac = DMatrix::zeros(dim, dim);
    for (r, &kr) in pvpq.iter().enumerate() {
        for (c, &kc) in pvpq.iter().enumerate() {
            jac[(r, c)] = ds_dva[(kr, kc)].re;
        }
        for (c, &kc) in pq.iter().enumerate() {
            jac[(r, np + c)] = ds_dvm[(kr, kc)].re;
        }
    }
    for (r, &kr) in pq.iter().enumerate() {
        for (c, &kc) in pvpq.iter().enumerate() {
            jac[(np + r, c)] = ds_dva[(kr, kc)].im;
        }
        for (c, &kc) in pq.iter().enumerate() {
            jac[(np + r, np + c)] = ds_dvm[(kr, kc)].im;
        }
    }
    jac
}
