//! Full instrumented flow runs and the experiment suites built on them:
//! the continuity path over initial data, the stability probe, the
//! exponential-decay fit, and the energy level.

use crate::config::ExperimentConfig;
use crate::entropy::{dlambda_integrand, minimize_w, prop44_bound, EntropyOpts};
use crate::error::{Error, Result};
use crate::flow::{evolve, FlowConfig};
use crate::functionals::{
    k_energy_from_round, perelman_diagnostics, ricci_potential, DiagnosticsRow,
};
use crate::geometry::{
    c3_distance, hessian_and_soliton_residual, perturbed_profile, round_profile,
    validate_profile, Grid, MetricProfile, ScalarField,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Entropy-cadence sample along a run: the quantities whose flow identities
/// the identity checks compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyPoint {
    pub t: f64,
    pub lambda_hat: f64,
    pub el_residual_l2: f64,
    pub iterations: usize,
    /// Predicted d(lambda)/dt.
    pub dlambda_integrand: f64,
    pub prop44_lhs: f64,
    pub prop44_rhs_minus: f64,
    pub prop44_rhs_plus: f64,
}

/// A completed (or blown-up) instrumented flow run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub rows: Vec<DiagnosticsRow>,
    pub entropy_trace: Vec<EntropyPoint>,
    pub converged: bool,
    pub t_final: f64,
    /// Profile CSV at the failure time when the integrator blew up.
    pub blowup: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub converged: bool,
    pub t_final: f64,
    pub lambda_hat_final: f64,
    pub k_energy_final: f64,
    pub decay_delta: Option<f64>,
    pub decay_r2: Option<f64>,
    pub max_f_sup: f64,
    /// lambda_hat decreases beyond 1e-8 between entropy samples.
    pub monotonicity_violations: usize,
    /// Which sign of the lower bound held at every sample: "plus", "minus",
    /// "both", or "neither".
    pub empirical_sign_prop44: String,
}

impl RunRecord {
    pub fn summary(&self) -> RunSummary {
        let last = self.rows.last();
        let (decay_delta, decay_r2) = match decay_fit(self, 0.5) {
            Ok(fit) => (Some(fit.delta), Some(fit.r2)),
            Err(_) => (None, None),
        };
        let mut violations = 0;
        for w in self.entropy_trace.windows(2) {
            if w[1].lambda_hat < w[0].lambda_hat - 1e-8 {
                violations += 1;
            }
        }
        let slack = |lhs: f64, rhs: f64| lhs >= rhs - 1e-12 - 1e-9 * rhs.abs();
        let plus = self.entropy_trace.iter().all(|p| slack(p.prop44_lhs, p.prop44_rhs_plus));
        let minus = self.entropy_trace.iter().all(|p| slack(p.prop44_lhs, p.prop44_rhs_minus));
        RunSummary {
            converged: self.converged,
            t_final: self.t_final,
            lambda_hat_final: last.map_or(f64::NAN, |r| r.lambda_hat),
            k_energy_final: last.map_or(f64::NAN, |r| r.k_energy),
            decay_delta,
            decay_r2,
            max_f_sup: self.rows.iter().fold(0.0, |m, r| m.max(r.f_sup)),
            monotonicity_violations: violations,
            empirical_sign_prop44: match (plus, minus) {
                (true, true) => "both",
                (true, false) => "plus",
                (false, true) => "minus",
                (false, false) => "neither",
            }
            .into(),
        }
    }
}

/// Run the flow described by `config` with full diagnostics.
pub fn run_flow(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    let initial = config.initial_profile()?;
    run_flow_from(&initial, config)
}

/// As [`run_flow`] but from an explicit initial profile (the sweeps build
/// their own initial data); the config still sets every control.
pub fn run_flow_from(initial: &MetricProfile, config: &ExperimentConfig) -> Result<RunRecord> {
    let fc = FlowConfig {
        t_max: config.t_max,
        cfl_safety: config.cfl_safety,
        tol_converge: config.tol_converge,
        record_every: config.record_every,
        entropy_every: config.entropy_every,
    };
    let grid = initial.grid().clone();
    let mut rows: Vec<DiagnosticsRow> = Vec::new();
    let mut trace: Vec<EntropyPoint> = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    let mut lambda_hat = f64::NAN;
    let mut f_vals = vec![0.0; grid.len()];
    let mut next_entropy = 0.0f64;

    let outcome = {
        let rows = &mut rows;
        let trace = &mut trace;
        let warm = &mut warm;
        let lambda_hat = &mut lambda_hat;
        let f_vals = &mut f_vals;
        let next_entropy = &mut next_entropy;
        evolve(initial, &fc, &mut |state| {
            if let Some(last) = rows.last() {
                if (state.t - last.t).abs() < 1e-12 {
                    return Ok(());
                }
            }
            let h = ricci_potential(&state.profile)?;
            if state.t + 1e-12 >= *next_entropy {
                let opts = EntropyOpts {
                    tol: config.entropy_tol,
                    multistart: config.multistart,
                    warm_start: warm.clone(),
                    ..EntropyOpts::default()
                };
                let er = minimize_w(&state.profile, &opts)?;
                *lambda_hat = er.lambda_hat;
                *f_vals = er.f().values().to_vec();
                *warm = Some(er.u.values().to_vec());
                let p44 = prop44_bound(&state.profile, er.f(), &h.h)?;
                trace.push(EntropyPoint {
                    t: state.t,
                    lambda_hat: er.lambda_hat,
                    el_residual_l2: er.el_residual_l2,
                    iterations: er.iterations,
                    dlambda_integrand: dlambda_integrand(&state.profile, er.f())?,
                    prop44_lhs: p44.lhs,
                    prop44_rhs_minus: p44.rhs_minus,
                    prop44_rhs_plus: p44.rhs_plus,
                });
                while *next_entropy <= state.t + 1e-12 {
                    *next_entropy += config.entropy_every;
                }
            }
            let f = ScalarField::new(grid.clone(), f_vals.clone());
            let frag = perelman_diagnostics(&state.profile, &h.h, &f)?;
            let sol = hessian_and_soliton_residual(&state.profile, &f)?;
            rows.push(DiagnosticsRow {
                t: state.t,
                lambda_hat: *lambda_hat,
                k_energy: k_energy_from_round(&state.profile)?,
                h_energy: frag.h_energy,
                h_sup: frag.h_sup,
                grad_h_sup: frag.grad_h_sup,
                lap_h_sup: frag.lap_h_sup,
                f_sup: frag.f_sup,
                grad_f_l2: frag.grad_f_l2,
                lap_f_l2: frag.lap_f_l2,
                f_weighted_mean: frag.f_weighted_mean,
                soliton_resid: sol.l2_weighted,
                diam: frag.diam,
                dist_c3_round: frag.dist_c3_round,
                a_t: 0.0,
                dt: state.dt_last,
            });
            Ok(())
        })
    };
    let (converged, t_final, blowup, final_profile) = match outcome {
        Ok(o) => (o.converged, o.state.t, None, Some(o.state.profile)),
        Err(Error::BlowUp { t, profile_csv }) => (false, t, Some(profile_csv), None),
        Err(e) => return Err(e),
    };

    // fresh entropy at the final state so the closing row never carries a
    // stale minimizer
    if let (Some(profile), Some(_)) = (&final_profile, rows.last()) {
        let opts = EntropyOpts {
            tol: config.entropy_tol,
            multistart: config.multistart,
            warm_start: warm.clone(),
            ..EntropyOpts::default()
        };
        let er = minimize_w(profile, &opts)?;
        let h = ricci_potential(profile)?;
        let frag = perelman_diagnostics(profile, &h.h, er.f())?;
        let sol = hessian_and_soliton_residual(profile, er.f())?;
        let last = rows.last_mut().unwrap();
        last.lambda_hat = er.lambda_hat;
        last.f_sup = frag.f_sup;
        last.grad_f_l2 = frag.grad_f_l2;
        last.lap_f_l2 = frag.lap_f_l2;
        last.f_weighted_mean = frag.f_weighted_mean;
        last.soliton_resid = sol.l2_weighted;
        let t_last = last.t;
        if trace.last().map_or(true, |p| (p.t - t_last).abs() > 1e-12) {
            let p44 = prop44_bound(profile, er.f(), &h.h)?;
            trace.push(EntropyPoint {
                t: t_last,
                lambda_hat: er.lambda_hat,
                el_residual_l2: er.el_residual_l2,
                iterations: er.iterations,
                dlambda_integrand: dlambda_integrand(profile, er.f())?,
                prop44_lhs: p44.lhs,
                prop44_rhs_minus: p44.rhs_minus,
                prop44_rhs_plus: p44.rhs_plus,
            });
        }
    }

    // backfill a_t = int_t^{t_end} e^{t-s} H ds by the backward recurrence
    // a_i = trapz(i, i+1) + e^{t_i - t_{i+1}} a_{i+1}
    let mut a = 0.0;
    for i in (0..rows.len()).rev() {
        if i + 1 < rows.len() {
            let dt = rows[i + 1].t - rows[i].t;
            let seg = 0.5 * (rows[i].h_energy + (-dt).exp() * rows[i + 1].h_energy) * dt;
            a = seg + (-dt).exp() * a;
        } else {
            a = 0.0;
        }
        rows[i].a_t = a;
    }

    Ok(RunRecord {
        config: config.clone(),
        rows,
        entropy_trace: trace,
        converged,
        t_final,
        blowup,
    })
}

/// Exponential fit H(t) ~ C e^{-delta t} over the tail of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFit {
    pub delta: f64,
    pub c: f64,
    pub r2: f64,
}

/// Least-squares line on (t, log H) over the last `window` fraction of the
/// rows where H is above the noise floor 1e-12.
pub fn decay_fit(record: &RunRecord, window: f64) -> Result<DecayFit> {
    let usable: Vec<(f64, f64)> = record
        .rows
        .iter()
        .filter(|r| r.h_energy > 1e-12)
        .map(|r| (r.t, r.h_energy.ln()))
        .collect();
    let start = ((1.0 - window.clamp(0.0, 1.0)) * usable.len() as f64).floor() as usize;
    let pts = &usable[start..];
    if pts.len() < 3 {
        return Err(Error::WindowTooShort { points: pts.len() });
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let syy: f64 = pts.iter().map(|p| p.1 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom <= 0.0 {
        return Err(Error::WindowTooShort { points: pts.len() });
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let ss_tot = syy - sy * sy / n;
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let e = p.1 - (slope * p.0 + intercept);
            e * e
        })
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(DecayFit { delta: -slope, c: intercept.exp(), r2 })
}

/// Final normalized entropy of a settled run.
pub fn energy_level(record: &RunRecord) -> Result<f64> {
    let last = record.rows.last().ok_or(Error::NotSettled)?;
    if record.converged {
        return Ok(last.lambda_hat);
    }
    let tail: Vec<f64> = record
        .rows
        .iter()
        .rev()
        .take(10)
        .map(|r| r.lambda_hat)
        .collect();
    if tail.len() == 10 {
        let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-6 {
            return Ok(last.lambda_hat);
        }
    }
    Err(Error::NotSettled)
}

/// One parameter value of a continuity-path sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathEntry {
    pub s: f64,
    pub summary: Option<RunSummary>,
    /// sup over the run of the C3 distance to round.
    pub sup_dist: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathReport {
    pub entries: Vec<PathEntry>,
    pub all_converged: bool,
}

/// Profile on the path: linear interpolation of symplectic potentials
/// between round and `target`; since u'' = 1/psi that is harmonic-mean
/// interpolation of the profiles themselves.
pub fn path_profile(target: &MetricProfile, s: f64) -> Result<MetricProfile> {
    let grid = target.grid();
    let n = grid.n_cells();
    let psi: Vec<f64> = (0..=n)
        .map(|j| {
            if j == 0 || j == n {
                return 0.0;
            }
            let mu = grid.node(j);
            let q = mu * (2.0 - mu);
            1.0 / ((1.0 - s) / q + s / target.psi()[j])
        })
        .collect();
    MetricProfile::new(grid.clone(), psi)
}

/// Run the flow from every point of an `n_points` grid of path parameters
/// in [0,1] (endpoints included), concurrently, merged in s order. A
/// per-s failure is reported in place, not fatal to the sweep.
pub fn continuity_path_records(
    target: &MetricProfile,
    n_points: usize,
    config: &ExperimentConfig,
) -> Result<Vec<(f64, std::result::Result<RunRecord, String>)>> {
    if n_points < 2 {
        return Err(Error::Validation {
            key: "n_points".into(),
            msg: "need at least the two endpoints".into(),
        });
    }
    let rep = validate_profile(target);
    if !rep.pass() {
        return Err(Error::InadmissibleProfile("continuity path needs an admissible target".into()));
    }
    Ok((0..n_points)
        .into_par_iter()
        .map(|i| {
            let s = i as f64 / (n_points - 1) as f64;
            let run = path_profile(target, s).and_then(|p| {
                if !validate_profile(&p).pass() {
                    return Err(Error::InadmissibleProfile(format!(
                        "path profile at s = {s} is inadmissible"
                    )));
                }
                run_flow_from(&p, config)
            });
            (s, run.map_err(|e| e.to_string()))
        })
        .collect())
}

/// Summary view of [`continuity_path_records`].
pub fn continuity_path(
    target: &MetricProfile,
    n_points: usize,
    config: &ExperimentConfig,
) -> Result<PathReport> {
    let entries: Vec<PathEntry> = continuity_path_records(target, n_points, config)?
        .into_iter()
        .map(|(s, run)| match run {
            Ok(record) => PathEntry {
                s,
                sup_dist: Some(record.rows.iter().fold(0.0f64, |m, r| m.max(r.dist_c3_round))),
                summary: Some(record.summary()),
                error: None,
            },
            Err(e) => PathEntry { s, summary: None, sup_dist: None, error: Some(e) },
        })
        .collect();
    let all_converged = entries
        .iter()
        .all(|e| e.summary.as_ref().map_or(false, |s| s.converged));
    Ok(PathReport { entries, all_converged })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbePoint {
    pub amplitude: f64,
    pub initial_dist: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Tolerance on sup_t dist_c3_round.
    pub epsilon: f64,
    /// Largest passing amplitude mapped to its initial C3 distance.
    pub delta_max: f64,
    pub amp_best: f64,
    /// True when the amplitude cap itself passes.
    pub saturated: bool,
    pub trace: Vec<ProbePoint>,
}

/// Bisect (12 iterations) on the amplitude of the mode-`k` perturbation
/// family for the largest initial datum whose run converges with
/// sup_t dist_c3_round <= epsilon.
pub fn stability_probe(
    epsilon: f64,
    k: u32,
    amp_cap: f64,
    config: &ExperimentConfig,
) -> Result<StabilityReport> {
    let grid = config.grid()?;
    let mut trace = Vec::new();
    let probe = |amp: f64, grid: &Grid, trace: &mut Vec<ProbePoint>| -> Result<(bool, f64)> {
        let (passed, dist) = match perturbed_profile(grid, amp, k) {
            Ok(p) => {
                let dist = c3_distance(&p, &round_profile(grid))?;
                match run_flow_from(&p, config) {
                    Ok(record) => {
                        let sup =
                            record.rows.iter().fold(0.0f64, |m, r| m.max(r.dist_c3_round));
                        (record.converged && sup <= epsilon, dist)
                    }
                    Err(_) => (false, dist),
                }
            }
            Err(_) => (false, f64::NAN),
        };
        trace.push(ProbePoint { amplitude: amp, initial_dist: dist, passed });
        Ok((passed, dist))
    };
    let (cap_pass, cap_dist) = probe(amp_cap, &grid, &mut trace)?;
    if cap_pass {
        return Ok(StabilityReport {
            epsilon,
            delta_max: cap_dist,
            amp_best: amp_cap,
            saturated: true,
            trace,
        });
    }
    let mut lo = 0.0f64; // zero amplitude passes trivially
    let mut lo_dist = 0.0f64;
    let mut hi = amp_cap;
    for _ in 0..12 {
        let mid = 0.5 * (lo + hi);
        let (pass, dist) = probe(mid, &grid, &mut trace)?;
        if pass {
            lo = mid;
            lo_dist = dist;
        } else {
            hi = mid;
        }
    }
    Ok(StabilityReport {
        epsilon,
        delta_max: lo_dist,
        amp_best: lo,
        saturated: false,
        trace,
    })
}
