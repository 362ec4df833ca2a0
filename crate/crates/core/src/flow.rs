//! Time integration of the normalized Kahler-Ricci flow in the gauge-fixed
//! momentum-profile form.
//!
//! With the momentum endpoints pinned, the flow dg/dt = -Ric + g reduces to
//! d psi/dt = psi + psi psi''/2 - (psi')^2/2 - (mu - 1) psi',
//! whose gauge velocity mu - 1 + psi'/2 vanishes at both poles, so endpoint
//! values and slopes are preserved exactly. The round profile is a fixed
//! point. Time stepping is explicit RK4 with a CFL-limited adaptive step.

use crate::error::{Error, Result};
use crate::geometry::{
    profile_to_csv, round_profile, validate_profile, Grid, MetricProfile, ScalarField, TOL_BC,
};
use nalgebra::DMatrix;

/// Flow time, current profile, and the last accepted step size.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub profile: MetricProfile,
    pub dt_last: f64,
}

/// Integration controls for [`evolve`].
#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub t_max: f64,
    pub cfl_safety: f64,
    /// Convergence threshold on ||K - 1||_inf.
    pub tol_converge: f64,
    /// Diagnostic cadence in flow time.
    pub record_every: f64,
    /// Entropy evaluation cadence in flow time.
    pub entropy_every: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            t_max: 50.0,
            cfl_safety: 0.2,
            tol_converge: 1e-5,
            record_every: 0.05,
            entropy_every: 0.5,
        }
    }
}

fn rhs_into(psi: &[f64], spacing: f64, out: &mut [f64]) {
    let n = psi.len() - 1;
    out[0] = 0.0;
    out[n] = 0.0;
    let inv2h = 0.5 / spacing;
    let invh2 = 1.0 / (spacing * spacing);
    for j in 1..n {
        let mu = 2.0 * j as f64 / n as f64;
        let p = psi[j];
        let dp = (psi[j + 1] - psi[j - 1]) * inv2h;
        let ddp = (psi[j + 1] - 2.0 * psi[j] + psi[j - 1]) * invh2;
        out[j] = p + 0.5 * p * ddp - 0.5 * dp * dp - (mu - 1.0) * dp;
    }
}

/// Right-hand side of the reduced flow; exactly zero at the endpoints.
pub fn flow_rhs(profile: &MetricProfile) -> ScalarField {
    let grid = profile.grid().clone();
    let mut out = vec![0.0; grid.len()];
    rhs_into(profile.psi(), grid.spacing(), &mut out);
    ScalarField::new(grid, out)
}

/// Parabolic stability limit 2 dmu^2 / max psi (the psi'' coefficient is psi/2).
pub fn cfl_limit(profile: &MetricProfile) -> f64 {
    let h = profile.grid().spacing();
    let max_psi = profile.psi().iter().fold(f64::MIN, |m, v| m.max(*v));
    2.0 * h * h / max_psi.max(1e-30)
}

/// sup |K - 1| over all nodes.
pub fn curvature_deviation(profile: &MetricProfile) -> f64 {
    let psi2 = profile.grid().second_derivative(profile.psi());
    psi2.iter().fold(0.0f64, |m, v| m.max((-0.5 * v - 1.0).abs()))
}

/// Scratch buffers for the RK4 stepper.
struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n_nodes: usize) -> Rk4 {
        Rk4 {
            k1: vec![0.0; n_nodes],
            k2: vec![0.0; n_nodes],
            k3: vec![0.0; n_nodes],
            k4: vec![0.0; n_nodes],
            tmp: vec![0.0; n_nodes],
        }
    }

    fn advance(&mut self, psi: &[f64], spacing: f64, dt: f64, out: &mut [f64]) {
        let n = psi.len();
        rhs_into(psi, spacing, &mut self.k1);
        for j in 0..n {
            self.tmp[j] = psi[j] + 0.5 * dt * self.k1[j];
        }
        rhs_into(&self.tmp, spacing, &mut self.k2);
        for j in 0..n {
            self.tmp[j] = psi[j] + 0.5 * dt * self.k2[j];
        }
        rhs_into(&self.tmp, spacing, &mut self.k3);
        for j in 0..n {
            self.tmp[j] = psi[j] + dt * self.k3[j];
        }
        rhs_into(&self.tmp, spacing, &mut self.k4);
        for j in 0..n {
            out[j] = psi[j]
                + dt / 6.0 * (self.k1[j] + 2.0 * self.k2[j] + 2.0 * self.k3[j] + self.k4[j]);
        }
        out[0] = 0.0;
        out[n - 1] = 0.0;
    }
}

fn admissible_after_step(profile: &MetricProfile) -> bool {
    let rep = validate_profile(profile);
    rep.interior_positive
        && (rep.slopes.0 - 2.0).abs() <= 20.0 * TOL_BC
        && (rep.slopes.1 + 2.0).abs() <= 20.0 * TOL_BC
}

/// One RK4 step of size `dt`; endpoints re-pinned to zero exactly.
pub fn step(state: &FlowState, dt: f64) -> Result<FlowState> {
    let limit = cfl_limit(&state.profile);
    if dt > limit {
        return Err(Error::CflViolation { dt, dt_max: limit });
    }
    let grid = state.profile.grid().clone();
    let mut rk = Rk4::new(grid.len());
    let mut out = vec![0.0; grid.len()];
    rk.advance(state.profile.psi(), grid.spacing(), dt, &mut out);
    let profile = MetricProfile::new(grid, out)?;
    if !admissible_after_step(&profile) {
        return Err(Error::StepRejected);
    }
    Ok(FlowState { t: state.t + dt, profile, dt_last: dt })
}

/// Outcome of a completed [`evolve`] call.
#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub state: FlowState,
    pub converged: bool,
    pub steps: u64,
}

/// Integrate from `initial` until ||K - 1||_inf < tol_converge or t_max.
///
/// `hook` is invoked on the initial state, whenever the flow crosses a
/// multiple of `record_every`, and on the final state. Deterministic for a
/// fixed configuration.
pub fn evolve(
    initial: &MetricProfile,
    cfg: &FlowConfig,
    hook: &mut dyn FnMut(&FlowState) -> Result<()>,
) -> Result<FlowOutcome> {
    let rep = validate_profile(initial);
    if !rep.pass() {
        return Err(Error::InadmissibleProfile("evolve needs an admissible initial profile".into()));
    }
    let grid = initial.grid().clone();
    let spacing = grid.spacing();
    let mut rk = Rk4::new(grid.len());
    let mut psi = initial.psi().to_vec();
    let mut next = vec![0.0; grid.len()];
    let mut t = 0.0;
    let mut dt_last = 0.0;
    let mut steps: u64 = 0;
    let mut next_record = 0.0;

    let mut state = FlowState { t, profile: initial.clone(), dt_last };
    hook(&state)?;
    next_record += cfg.record_every;

    let mut converged = curvature_deviation(&state.profile) < cfg.tol_converge;
    while !converged && t < cfg.t_max {
        let limit = cfl_limit(&state.profile);
        let mut dt = (cfg.cfl_safety * limit).min(cfg.t_max - t).min(next_record - t).max(1e-14);
        let mut halvings = 0;
        loop {
            rk.advance(&psi, spacing, dt, &mut next);
            let candidate = MetricProfile::new(grid.clone(), next.clone());
            match candidate {
                Ok(p) if admissible_after_step(&p) => {
                    psi.copy_from_slice(&next);
                    t += dt;
                    dt_last = dt;
                    steps += 1;
                    state = FlowState { t, profile: p, dt_last };
                    break;
                }
                _ => {
                    halvings += 1;
                    dt *= 0.5;
                    if halvings > 40 || dt < 1e-14 {
                        return Err(Error::BlowUp {
                            t,
                            profile_csv: profile_to_csv(&state.profile),
                        });
                    }
                }
            }
        }
        converged = curvature_deviation(&state.profile) < cfg.tol_converge;
        if t >= next_record - 1e-12 {
            hook(&state)?;
            while next_record <= t + 1e-12 {
                next_record += cfg.record_every;
            }
        }
    }
    if state.t > 0.0 && (state.t < next_record - cfg.record_every + 1e-12 || converged) {
        // make sure the final state is recorded
        hook(&state)?;
    }
    Ok(FlowOutcome { state, converged, steps })
}

/// Linear-stability oracle at the round profile.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Eigenvalues (re, im) of the restricted Jacobian, sorted by decreasing
    /// real part.
    pub eigenvalues: Vec<(f64, f64)>,
    /// Number of eigenvalues with |Re| < 0.5.
    pub near_null_dim: usize,
}

impl SpectrumReport {
    /// Decay rate of the slowest mode, -max Re(lambda).
    pub fn leading_rate(&self) -> f64 {
        -self.eigenvalues[0].0
    }
}

/// Finite-difference Jacobian of [`flow_rhs`] at the round profile,
/// restricted to admissible (value- and slope-preserving) perturbations.
pub fn spectrum_oracle(grid: &Grid) -> SpectrumReport {
    let n = grid.n_cells();
    let nn = grid.len();
    let spacing = grid.spacing();
    let base = round_profile(grid);
    let psi0 = base.psi();

    // Orthonormal basis of the constraint null space: chi_0 = chi_n = 0 and
    // the one-sided slope stencils vanish (chi_2 = 4 chi_1, chi_{n-2} = 4 chi_{n-1}).
    let dim = n - 3;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    let s = 1.0 / 17f64.sqrt();
    let mut v = vec![0.0; nn];
    v[1] = s;
    v[2] = 4.0 * s;
    basis.push(v);
    let mut v = vec![0.0; nn];
    v[n - 1] = s;
    v[n - 2] = 4.0 * s;
    basis.push(v);
    for j in 3..=(n - 3) {
        let mut v = vec![0.0; nn];
        v[j] = 1.0;
        basis.push(v);
    }

    let eta = 1e-6;
    let mut plus = vec![0.0; nn];
    let mut minus = vec![0.0; nn];
    let mut rp = vec![0.0; nn];
    let mut rm = vec![0.0; nn];
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for b in &basis {
        for j in 0..nn {
            plus[j] = psi0[j] + eta * b[j];
            minus[j] = psi0[j] - eta * b[j];
        }
        rhs_into(&plus, spacing, &mut rp);
        rhs_into(&minus, spacing, &mut rm);
        images.push((0..nn).map(|j| (rp[j] - rm[j]) / (2.0 * eta)).collect());
    }

    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for (col, w) in images.iter().enumerate() {
        for (row, q) in basis.iter().enumerate() {
            m[(row, col)] = q.iter().zip(w).map(|(a, b)| a * b).sum();
        }
    }
    let eig = m.complex_eigenvalues();
    let mut eigenvalues: Vec<(f64, f64)> = eig.iter().map(|z| (z.re, z.im)).collect();
    eigenvalues.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let near_null_dim = eigenvalues.iter().filter(|(re, _)| re.abs() < 0.5).count();
    SpectrumReport { eigenvalues, near_null_dim }
}
