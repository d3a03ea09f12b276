use crate::grid::ReducedNetwork;

/// Rotor angles (rad, absolute), speed deviations (p.u.) and island labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub delta: Vec<f64>,
    pub omega: Vec<f64>,
    pub island: Vec<usize>,
}

impl SimState {
    pub fn is_finite(&self) -> bool {
        self.delta.iter().chain(&self.omega).all(|x| x.is_finite())
    }
}

/// Per-machine constants of the swing equation
/// `2H dω/dt = Pm - Pe - D ω`, `dδ/dt = ω0 ω`.
#[derive(Debug, Clone)]
pub struct SwingParams {
    pub pm: Vec<f64>,
    pub damping: Vec<f64>,
    pub inertia: Vec<f64>,
    pub omega0: f64,
}

impl SwingParams {
    /// Time derivatives of (δ, ω).
    pub fn derivatives(&self, net: &ReducedNetwork, delta: &[f64], omega: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let pe = net.electrical_power(delta);
        let ddelta = omega.iter().map(|w| self.omega0 * w).collect();
        let domega = (0..delta.len())
            .map(|i| (self.pm[i] - pe[i] - self.damping[i] * omega[i]) / self.inertia[i])
            .collect();
        (ddelta, domega)
    }
}

fn axpy(base: &[f64], k: &[f64], h: f64) -> Vec<f64> {
    base.iter().zip(k).map(|(b, k)| b + h * k).collect()
}

/// One classical fourth-order Runge-Kutta step over a fixed network.
pub fn step(state: &SimState, net: &ReducedNetwork, params: &SwingParams, h: f64) -> SimState {
    let (d, w) = (&state.delta, &state.omega);
    let (k1d, k1w) = params.derivatives(net, d, w);
    let (k2d, k2w) = params.derivatives(net, &axpy(d, &k1d, h / 2.0), &axpy(w, &k1w, h / 2.0));
    let (k3d, k3w) = params.derivatives(net, &axpy(d, &k2d, h / 2.0), &axpy(w, &k2w, h / 2.0));
    let (k4d, k4w) = params.derivatives(net, &axpy(d, &k3d, h), &axpy(w, &k3w, h));
    let combine = |x: &[f64], a: &[f64], b: &[f64], c: &[f64], e: &[f64]| -> Vec<f64> {
        (0..x.len())
            .map(|i| x[i] + h / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + e[i]))
            .collect()
    };
    SimState {
        t: state.t + h,
        delta: combine(d, &k1d, &k2d, &k3d, &k4d),
        omega: combine(w, &k1w, &k2w, &k3w, &k4w),
        island: state.island.clone(),
    }
}
