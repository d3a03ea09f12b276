use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;

use super::case::GridCase;
use super::powerflow::PowerFlowSolution;
use super::ybus::YbusMatrix;
use super::NetworkError;

/// Constant-impedance load equivalents `(Pd - jQd)/|V|^2` at the power-flow voltages.
pub fn load_admittances(case: &GridCase, pf: &PowerFlowSolution) -> Vec<Complex64> {
    case.buses
        .iter()
        .zip(&pf.voltages)
        .map(|(bus, v)| Complex64::new(bus.pd, -bus.qd) / v.norm_sqr())
        .collect()
}

/// Internal EMF behind the transient reactance of every machine.
pub fn internal_emfs(case: &GridCase, pf: &PowerFlowSolution) -> Vec<Complex64> {
    case.machines
        .iter()
        .zip(&pf.machine_power)
        .map(|(m, s)| {
            let v = pf.voltages[case.bus_index(m.bus).expect("validated")];
            let i = (s / v).conj();
            v + Complex64::new(0.0, m.xd_prime) * i
        })
        .collect()
}

fn generator_admittances(case: &GridCase) -> (Vec<Complex64>, Vec<usize>) {
    case.machines
        .iter()
        .map(|m| {
            (
                Complex64::new(0.0, m.xd_prime).inv(),
                case.bus_index(m.bus).expect("validated"),
            )
        })
        .unzip()
}

/// Network reduced to the machine internal nodes, together with the factored bus
/// block that recovers bus voltages from internal EMFs.
#[derive(Debug, Clone)]
pub struct ReducedNetwork {
    /// m×m admittance among internal nodes.
    pub admittance: DMatrix<Complex64>,
    /// |E_i| of every machine, p.u.
    pub emf_magnitude: Vec<f64>,
    bus_block: LU<Complex64, Dyn, Dyn>,
    gen_admittance: Vec<Complex64>,
    gen_bus: Vec<usize>,
}

impl ReducedNetwork {
    /// Reduces a bus admittance matrix that already contains the load (and any
    /// fault) shunts.
    pub fn from_loaded_ybus(
        ybus: &YbusMatrix,
        case: &GridCase,
        emf_magnitude: Vec<f64>,
    ) -> Result<Self, NetworkError> {
        let (gen_admittance, gen_bus) = generator_admittances(case);
        let n = ybus.dim();
        let m = gen_bus.len();
        let mut ybb = ybus.y.clone();
        for (&k, &yg) in gen_bus.iter().zip(&gen_admittance) {
            ybb[(k, k)] += yg;
        }
        let lu = ybb.lu();
        let mut rhs = DMatrix::from_element(n, m, Complex64::new(0.0, 0.0));
        for (j, (&k, &yg)) in gen_bus.iter().zip(&gen_admittance).enumerate() {
            rhs[(k, j)] = yg;
        }
        // X = Ybb^-1 * (-Ybg) so that bus voltages are V = X E
        let x = lu.solve(&rhs).ok_or(NetworkError::SingularBusBlock)?;
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(NetworkError::SingularBusBlock);
        }
        let mut admittance = DMatrix::from_element(m, m, Complex64::new(0.0, 0.0));
        for i in 0..m {
            let yg = gen_admittance[i];
            for j in 0..m {
                admittance[(i, j)] = -yg * x[(gen_bus[i], j)];
            }
            admittance[(i, i)] += yg;
        }
        Ok(ReducedNetwork {
            admittance,
            emf_magnitude,
            bus_block: lu,
            gen_admittance,
            gen_bus,
        })
    }

    pub fn machine_count(&self) -> usize {
        self.emf_magnitude.len()
    }

    /// EMF phasors for the given rotor angles.
    pub fn emfs(&self, delta: &[f64]) -> Vec<Complex64> {
        self.emf_magnitude
            .iter()
            .zip(delta)
            .map(|(&e, &d)| Complex64::from_polar(e, d))
            .collect()
    }

    /// Current injected by every internal node.
    pub fn currents(&self, emf: &[Complex64]) -> Vec<Complex64> {
        let e = DVector::from_column_slice(emf);
        (&self.admittance * e).iter().copied().collect()
    }

    /// Electrical output power of every machine at the given rotor angles.
    pub fn electrical_power(&self, delta: &[f64]) -> Vec<f64> {
        let m = self.machine_count();
        let mut out = vec![0.0; m];
        for i in 0..m {
            let ei = self.emf_magnitude[i];
            let mut p = 0.0;
            for j in 0..m {
                let y = self.admittance[(i, j)];
                if y.re == 0.0 && y.im == 0.0 {
                    continue;
                }
                let dij = delta[i] - delta[j];
                p += ei * self.emf_magnitude[j] * (y.re * dij.cos() + y.im * dij.sin());
            }
            out[i] = p;
        }
        out
    }

    /// Bus voltages implied by the internal EMFs.
    pub fn bus_voltages(&self, emf: &[Complex64]) -> Vec<Complex64> {
        let n = self.bus_block.l().nrows();
        let mut rhs = DVector::from_element(n, Complex64::new(0.0, 0.0));
        for ((&k, &yg), e) in self.gen_bus.iter().zip(&self.gen_admittance).zip(emf) {
            rhs[k] += yg * e;
        }
        self.bus_block
            .solve(&rhs)
            .expect("bus block was checked invertible")
            .iter()
            .copied()
            .collect()
    }
}

/// Classical-model reduction: loads become constant admittances at the power-flow
/// voltages and machines are represented by constant EMFs behind `X'd`.
pub fn kron_reduce(
    ybus: &YbusMatrix,
    case: &GridCase,
    pf: &PowerFlowSolution,
) -> Result<ReducedNetwork, NetworkError> {
    let loaded = ybus.with_shunts(&load_admittances(case, pf));
    let emf = internal_emfs(case, pf).iter().map(|e| e.norm()).collect();
    ReducedNetwork::from_loaded_ybus(&loaded, case, emf)
}

/// Full-network linear solve: bus voltages for the given internal EMFs, with the
/// load shunts already folded into `ybus`.
pub fn solve_network(
    ybus: &YbusMatrix,
    case: &GridCase,
    emfs: &[Complex64],
) -> Result<Vec<Complex64>, NetworkError> {
    let n = ybus.dim();
    let m = case.machine_count();
    // augmented nodal matrix over [buses; internal nodes] with the internal nodes
    // held at their EMF, solved by eliminating nothing but the known columns
    let mut aug = DMatrix::from_element(n + m, n + m, Complex64::new(0.0, 0.0));
    aug.view_mut((0, 0), (n, n)).copy_from(&ybus.y);
    let mut rhs = DVector::from_element(n + m, Complex64::new(0.0, 0.0));
    for (i, machine) in case.machines.iter().enumerate() {
        let k = case.bus_index(machine.bus).expect("validated");
        let yg = Complex64::new(0.0, machine.xd_prime).inv();
        aug[(k, k)] += yg;
        aug[(k, n + i)] -= yg;
        // internal node equation: E_i fixed
        aug[(n + i, n + i)] = Complex64::new(1.0, 0.0);
        rhs[n + i] = emfs[i];
    }
    let sol = aug.lu().solve(&rhs).ok_or(NetworkError::SingularBusBlock)?;
    if sol.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(NetworkError::SingularBusBlock);
    }
    Ok(sol.iter().take(n).copied().collect())
}

/// Machine current injections recovered from a full-network solution.
pub fn machine_currents(case: &GridCase, voltages: &[Complex64], emfs: &[Complex64]) -> Vec<Complex64> {
    case.machines
        .iter()
        .zip(emfs)
        .map(|(m, e)| {
            let v = voltages[case.bus_index(m.bus).expect("validated")];
            (e - v) / Complex64::new(0.0, m.xd_prime)
        })
        .collect()
}
