//! Ricci potential, per-state diagnostics, K-energy, the exponential-weight
//! tail functional a_t, and the weighted Poincare inequality check.

use crate::error::{Error, Result};
use crate::geometry::{
    c3_distance, diameter, gradient_norm_sq, integrate, laplacian, round_profile,
    validate_profile, MetricProfile, ScalarField, VOLUME,
};
use serde::{Deserialize, Serialize};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Ricci potential h with Delta h = R - 2 and int e^h dV = V.
#[derive(Debug, Clone)]
pub struct RicciPotential {
    pub h: ScalarField,
    /// Additive constant applied to meet the volume normalization.
    pub normalization_shift: f64,
}

/// h'(mu) = (2 - 2mu - psi')/psi, with the regular limit
/// h' = (-2 - psi'')/psi' at both poles (l'Hopital: the numerator vanishes
/// there by the slope conditions).
pub fn ricci_potential(profile: &MetricProfile) -> Result<RicciPotential> {
    let report = validate_profile(profile);
    if !report.interior_positive {
        return Err(Error::InadmissibleProfile("ricci potential needs psi > 0 inside".into()));
    }
    let grid = profile.grid();
    let n = grid.n_cells();
    let h = grid.spacing();
    let psi = profile.psi();
    let dpsi = grid.derivative(psi);
    let ddpsi = grid.second_derivative(psi);
    let mut hp = vec![0.0; n + 1];
    for j in 1..n {
        let mu = grid.node(j);
        hp[j] = (2.0 - 2.0 * mu - dpsi[j]) / psi[j];
    }
    hp[0] = (-2.0 - ddpsi[0]) / dpsi[0];
    hp[n] = (-2.0 - ddpsi[n]) / dpsi[n];
    // integrate from the middle node outward
    let mid = n / 2;
    let mut hv = vec![0.0; n + 1];
    for j in (mid + 1)..=n {
        hv[j] = hv[j - 1] + 0.5 * (hp[j - 1] + hp[j]) * h;
    }
    for j in (0..mid).rev() {
        hv[j] = hv[j + 1] - 0.5 * (hp[j] + hp[j + 1]) * h;
    }
    let weights: Vec<f64> = hv.iter().map(|v| v.exp()).collect();
    let shift = (2.0 / grid.trapezoid(&weights)).ln();
    for v in hv.iter_mut() {
        *v += shift;
    }
    Ok(RicciPotential {
        h: ScalarField::new(grid.clone(), hv),
        normalization_shift: shift,
    })
}

/// One record of the flow time series; the CSV column order is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub lambda_hat: f64,
    pub k_energy: f64,
    /// H(t) = int |grad h|^2 dV.
    pub h_energy: f64,
    pub h_sup: f64,
    pub grad_h_sup: f64,
    pub lap_h_sup: f64,
    pub f_sup: f64,
    pub grad_f_l2: f64,
    pub lap_f_l2: f64,
    /// int f e^-f dV (no kappa prefactor).
    pub f_weighted_mean: f64,
    pub soliton_resid: f64,
    pub diam: f64,
    pub dist_c3_round: f64,
    pub a_t: f64,
    pub dt: f64,
}

pub const SERIES_HEADER: &str = "t,lambda_hat,k_energy,H,h_sup,grad_h_sup,lap_h_sup,f_sup,grad_f_l2,lap_f_l2,f_weighted_mean,soliton_resid,diam,dist_c3_round,a_t,dt";

impl DiagnosticsRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.lambda_hat,
            self.k_energy,
            self.h_energy,
            self.h_sup,
            self.grad_h_sup,
            self.lap_h_sup,
            self.f_sup,
            self.grad_f_l2,
            self.lap_f_l2,
            self.f_weighted_mean,
            self.soliton_resid,
            self.diam,
            self.dist_c3_round,
            self.a_t,
            self.dt
        )
    }

    pub fn from_csv_line(line: &str, lineno: usize) -> Result<DiagnosticsRow> {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 16 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 16 columns, got {}", parts.len()),
            });
        }
        let mut vals = [0.0f64; 16];
        for (i, p) in parts.iter().enumerate() {
            vals[i] = p.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("column {}: {e}", i + 1),
            })?;
        }
        Ok(DiagnosticsRow {
            t: vals[0],
            lambda_hat: vals[1],
            k_energy: vals[2],
            h_energy: vals[3],
            h_sup: vals[4],
            grad_h_sup: vals[5],
            lap_h_sup: vals[6],
            f_sup: vals[7],
            grad_f_l2: vals[8],
            lap_f_l2: vals[9],
            f_weighted_mean: vals[10],
            soliton_resid: vals[11],
            diam: vals[12],
            dist_c3_round: vals[13],
            a_t: vals[14],
            dt: vals[15],
        })
    }
}

/// Sup norms of h, |grad h|, Delta h; diameter; and the L2/weighted norms
/// of a minimizer f. A partially filled [`DiagnosticsRow`] fragment.
#[derive(Debug, Clone)]
pub struct DiagnosticsFragment {
    pub h_sup: f64,
    pub grad_h_sup: f64,
    pub lap_h_sup: f64,
    pub h_energy: f64,
    pub f_sup: f64,
    pub grad_f_l2: f64,
    pub lap_f_l2: f64,
    pub f_weighted_mean: f64,
    pub diam: f64,
    pub dist_c3_round: f64,
}

pub fn perelman_diagnostics(
    profile: &MetricProfile,
    h: &ScalarField,
    f: &ScalarField,
) -> Result<DiagnosticsFragment> {
    let grid = profile.grid();
    if h.grid() != grid || f.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let gh = gradient_norm_sq(profile, h)?;
    let lh = laplacian(profile, h)?;
    let gf = gradient_norm_sq(profile, f)?;
    let lf = laplacian(profile, f)?;
    let h_energy = integrate(&gh, None)?;
    let grad_f_l2 = integrate(&gf, None)?.max(0.0).sqrt();
    let lap_sq = ScalarField::new(
        grid.clone(),
        lf.values().iter().map(|v| v * v).collect(),
    );
    let lap_f_l2 = integrate(&lap_sq, None)?.max(0.0).sqrt();
    let fw = ScalarField::new(
        grid.clone(),
        f.values().iter().map(|v| v * (-v).exp()).collect(),
    );
    let f_weighted_mean = integrate(&fw, None)?;
    let round = round_profile(grid);
    Ok(DiagnosticsFragment {
        h_sup: h.sup_norm(),
        grad_h_sup: gh.values().iter().fold(0.0f64, |m, v| m.max(v.max(0.0).sqrt())),
        lap_h_sup: lh.sup_norm(),
        h_energy,
        f_sup: f.sup_norm(),
        grad_f_l2,
        lap_f_l2,
        f_weighted_mean,
        diam: diameter(profile)?,
        dist_c3_round: c3_distance(profile, &round)?,
    })
}

/// Regularized K-energy integrand in mu: for a path with potential velocity
/// v (v'' = 2 psi_dot / psi^2), -int v (R - 2) dV reduces to
/// -4pi int v'' Q dmu with Q = mu - mu^2/2 - psi/2 (double zero at the poles,
/// so the two integrations by parts carry no boundary terms).
fn k_energy_rate(profile: &MetricProfile, psi_dot: &[f64]) -> f64 {
    let grid = profile.grid();
    let psi = profile.psi();
    let nn = grid.len();
    let mut integrand = vec![0.0; nn];
    for j in 1..nn - 1 {
        let mu = grid.node(j);
        let q = mu - 0.5 * mu * mu - 0.5 * psi[j];
        let vpp = 2.0 * psi_dot[j] / (psi[j] * psi[j]);
        integrand[j] = vpp * q;
    }
    -2.0 * VOLUME * 0.5 * grid.trapezoid(&integrand) // -4pi int v'' Q dmu
}

/// K-energy change along an explicit path of profiles, by Simpson quadrature
/// in the path parameter with centered differences for the velocity.
pub fn k_energy_delta(
    path: &dyn Fn(f64) -> Result<MetricProfile>,
    n_sub: usize,
) -> Result<f64> {
    let n_sub = n_sub.max(1);
    let m = 2 * n_sub; // Simpson needs an even number of intervals
    let ds = 1.0 / m as f64;
    let eps = 1e-5;
    let mut total = 0.0;
    for i in 0..=m {
        let s = i as f64 * ds;
        let here = path(s)?;
        // centered psi_dot, one-sided at the parameter endpoints
        let psi_dot: Vec<f64> = if i == 0 {
            let a = path(eps)?;
            let b = path(2.0 * eps)?;
            (0..here.grid().len())
                .map(|j| {
                    (-3.0 * here.psi()[j] + 4.0 * a.psi()[j] - b.psi()[j]) / (2.0 * eps)
                })
                .collect()
        } else if i == m {
            let a = path(1.0 - eps)?;
            let b = path(1.0 - 2.0 * eps)?;
            (0..here.grid().len())
                .map(|j| {
                    (3.0 * here.psi()[j] - 4.0 * a.psi()[j] + b.psi()[j]) / (2.0 * eps)
                })
                .collect()
        } else {
            let a = path(s - eps)?;
            let b = path(s + eps)?;
            (0..here.grid().len())
                .map(|j| (b.psi()[j] - a.psi()[j]) / (2.0 * eps))
                .collect()
        };
        let rate = k_energy_rate(&here, &psi_dot);
        let w = if i == 0 || i == m {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        total += w * rate;
    }
    Ok(total * ds / 3.0)
}

/// K-energy relative to the round profile, in closed form along the
/// harmonic path 1/psi_s = (1-s)/q + s/psi (linear interpolation of the
/// symplectic potential): the s-integral evaluates analytically, leaving a
/// single mu-quadrature.
pub fn k_energy_from_round(profile: &MetricProfile) -> Result<f64> {
    let report = validate_profile(profile);
    if !report.interior_positive {
        return Err(Error::InadmissibleProfile("k-energy needs psi > 0 inside".into()));
    }
    let grid = profile.grid();
    let psi = profile.psi();
    let nn = grid.len();
    let mut integrand = vec![0.0; nn];
    for j in 1..nn - 1 {
        let mu = grid.node(j);
        let q = mu * (2.0 - mu);
        let b = 1.0 / psi[j] - 1.0 / q;
        integrand[j] = -2.0 * b * (mu - 0.5 * mu * mu) + (q / psi[j]).ln();
    }
    Ok(-2.0 * VOLUME * 0.5 * grid.trapezoid(&integrand))
}

/// Both sides of int |grad f|^2 e^h dV >= int f^2 e^h dV - (int f e^h dV)^2/V.
#[derive(Debug, Clone)]
pub struct PoincareCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

pub fn weighted_poincare_check(
    profile: &MetricProfile,
    h: &ScalarField,
    f_test: &ScalarField,
) -> Result<PoincareCheck> {
    let grid = profile.grid();
    if h.grid() != grid || f_test.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let w: Vec<f64> = h.values().iter().map(|v| v.exp()).collect();
    let gf = gradient_norm_sq(profile, f_test)?;
    let nn = grid.len();
    let prod = |vals: &dyn Fn(usize) -> f64| -> f64 {
        let data: Vec<f64> = (0..nn).map(|j| vals(j) * w[j]).collect();
        TWO_PI * grid.trapezoid(&data)
    };
    let lhs = prod(&|j| gf.values()[j]);
    let fsq = prod(&|j| f_test.values()[j] * f_test.values()[j]);
    let fmean = prod(&|j| f_test.values()[j]);
    let rhs = fsq - fmean * fmean / VOLUME;
    let scale = lhs.abs().max(rhs.abs()).max(1.0);
    Ok(PoincareCheck { lhs, rhs, pass: lhs >= rhs - 1e-10 * scale })
}

/// a(t) = int_t^{t_end} e^{t-s} H(s) ds with its truncation bound.
#[derive(Debug, Clone)]
pub struct TailIntegral {
    pub value: f64,
    pub truncation_bound: f64,
}

/// Tail functional over a recorded (t, H) series; requires H(t_end) < 1e-8
/// so the truncated exponential tail is negligible.
pub fn a_tail(series: &[(f64, f64)], t: f64) -> Result<TailIntegral> {
    let (t_end, h_end) = *series.last().ok_or(Error::WindowUnavailable)?;
    if h_end >= 1e-8 {
        return Err(Error::TailNotResolved { h_end });
    }
    if t > t_end {
        return Err(Error::WindowUnavailable);
    }
    let mut value = 0.0;
    for win in series.windows(2) {
        let (t0, h0) = win[0];
        let (t1, h1) = win[1];
        if t1 <= t {
            continue;
        }
        let (ta, ha) = if t0 < t {
            // clip the first partial interval at t by linear interpolation
            let frac = (t - t0) / (t1 - t0);
            (t, h0 + frac * (h1 - h0))
        } else {
            (t0, h0)
        };
        value += 0.5 * ((t - ta).exp() * ha + (t - t1).exp() * h1) * (t1 - ta);
    }
    Ok(TailIntegral { value, truncation_bound: (t - t_end).exp() * h_end })
}

/// One admissible window of the parabolic smoothing probe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothingEntry {
    pub t: f64,
    /// C0 size of the Ricci potential at t (gauge-free stand-in for the
    /// potential velocity of the smoothing lemma).
    pub osc_h: f64,
    /// grad_h_sup + lap_h_sup two time units later.
    pub response: f64,
    pub ratio: f64,
}

/// Empirical smoothing constant: for rows with osc(h) in (noise, delta_probe],
/// the ratio of first/second-derivative norms at t+2 to osc(h) at t.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothingTable {
    pub entries: Vec<SmoothingEntry>,
    pub empirical_k: Option<f64>,
}

pub fn smoothing_ratio(rows: &[DiagnosticsRow], delta_probe: f64) -> Result<SmoothingTable> {
    if rows.len() < 2 {
        return Err(Error::WindowUnavailable);
    }
    let t_end = rows.last().unwrap().t;
    if t_end < 2.0 {
        return Err(Error::WindowUnavailable);
    }
    let noise = 1e-10;
    let mut entries = Vec::new();
    for row in rows {
        let t2 = row.t + 2.0;
        if t2 > t_end + 1e-9 {
            break;
        }
        if row.h_sup <= noise || row.h_sup > delta_probe {
            continue;
        }
        // nearest recorded row at t + 2
        let later = rows
            .iter()
            .min_by(|a, b| {
                (a.t - t2).abs().partial_cmp(&(b.t - t2).abs()).unwrap()
            })
            .unwrap();
        let response = later.grad_h_sup + later.lap_h_sup;
        entries.push(SmoothingEntry {
            t: row.t,
            osc_h: row.h_sup,
            response,
            ratio: response / row.h_sup,
        });
    }
    let empirical_k = entries.iter().map(|e| e.ratio).fold(None, |m: Option<f64>, r| {
        Some(m.map_or(r, |v| v.max(r)))
    });
    Ok(SmoothingTable { entries, empirical_k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{curvature, perturbed_profile, random_profile, Grid};
    use approx::assert_abs_diff_eq;

    fn grid400() -> Grid {
        Grid::new(400).unwrap()
    }

    #[test]
    fn ricci_potential_round_is_zero() {
        let g = grid400();
        let rp = ricci_potential(&round_profile(&g)).unwrap();
        assert!(rp.h.sup_norm() < 1e-12, "||h|| = {}", rp.h.sup_norm());
        assert!(rp.normalization_shift.abs() < 1e-12);
    }

    #[test]
    fn ricci_potential_normalized_and_consistent() {
        let g = grid400();
        let h2 = g.spacing() * g.spacing();
        // the interior constant scales with the fourth derivative of psi,
        // which is much larger for the multi-mode random profile
        for (p, tol) in [
            (perturbed_profile(&g, 0.1, 1).unwrap(), 10.0 * h2),
            (random_profile(&g, 13, 0.3).unwrap(), 100.0 * h2),
        ] {
            let rp = ricci_potential(&p).unwrap();
            // volume normalization is exact by construction
            let w = ScalarField::new(g.clone(), rp.h.values().iter().map(|v| v.exp()).collect());
            assert_abs_diff_eq!(integrate(&w, None).unwrap(), VOLUME, epsilon = 1e-10);
            // defining property Delta h = R - 2 = 2(K - 1); the one-sided
            // stencils at the poles are lower order, so check them separately
            let lap = laplacian(&p, &rp.h).unwrap();
            let (k, _) = curvature(&p);
            let mut worst_in = 0.0f64;
            let mut worst_end = 0.0f64;
            for j in 0..g.len() {
                let r = (lap.values()[j] - 2.0 * (k.values()[j] - 1.0)).abs();
                if j < 2 || j > g.len() - 3 {
                    worst_end = worst_end.max(r);
                } else {
                    worst_in = worst_in.max(r);
                }
            }
            assert!(worst_in < tol, "interior residual {worst_in}");
            assert!(worst_end < 20.0 * tol, "pole residual {worst_end}");
        }
    }

    #[test]
    fn ricci_potential_symmetric_profile_has_flat_center() {
        let g = grid400();
        let p = perturbed_profile(&g, 0.2, 1).unwrap(); // reflection-symmetric
        let rp = ricci_potential(&p).unwrap();
        let dh = g.derivative(rp.h.values());
        assert_abs_diff_eq!(dh[200], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn diagnostics_round_zero_except_diameter() {
        let g = grid400();
        let r = round_profile(&g);
        let zero = ScalarField::zeros(g.clone());
        let d = perelman_diagnostics(&r, &zero, &zero).unwrap();
        assert_eq!(d.h_sup, 0.0);
        assert_eq!(d.grad_h_sup, 0.0);
        assert!(d.lap_h_sup < 1e-12);
        assert_eq!(d.f_sup, 0.0);
        assert_eq!(d.grad_f_l2, 0.0);
        assert!(d.lap_f_l2 < 1e-12);
        assert_eq!(d.f_weighted_mean, 0.0);
        assert_abs_diff_eq!(d.diam, std::f64::consts::PI, epsilon = 1e-6);
        assert!(d.dist_c3_round < 1e-12);
    }

    #[test]
    fn k_energy_round_is_zero_and_positive_nearby() {
        let g = grid400();
        assert_eq!(k_energy_from_round(&round_profile(&g)).unwrap(), 0.0);
        // the round profile minimizes the K-energy in this class
        for seed in [1, 5, 9] {
            let p = random_profile(&g, seed, 0.3).unwrap();
            assert!(k_energy_from_round(&p).unwrap() > 0.0, "seed {seed}");
        }
        assert!(k_energy_from_round(&perturbed_profile(&g, 0.1, 1).unwrap()).unwrap() > 0.0);
    }

    #[test]
    fn k_energy_path_quadrature_matches_closed_form() {
        // straight-psi path via Simpson + FD velocities against the
        // closed-form harmonic-path value: path independence of the
        // underlying 1-form
        let g = grid400();
        let target = perturbed_profile(&g, 0.1, 1).unwrap();
        let closed = k_energy_from_round(&target).unwrap();
        let tpsi = target.psi().to_vec();
        let straight = move |s: f64| -> Result<MetricProfile> {
            let psi: Vec<f64> = (0..tpsi.len())
                .map(|j| {
                    let mu = 2.0 * j as f64 / (tpsi.len() - 1) as f64;
                    let q = mu * (2.0 - mu);
                    (1.0 - s) * q + s * tpsi[j]
                })
                .collect();
            MetricProfile::new(Grid::new(tpsi.len() - 1).unwrap(), psi)
        };
        let by_path = k_energy_delta(&straight, 8).unwrap();
        assert_abs_diff_eq!(by_path, closed, epsilon = 1e-4 * closed.abs().max(1e-3));
    }

    #[test]
    fn k_energy_harmonic_path_matches_closed_form() {
        let g = grid400();
        let target = perturbed_profile(&g, 0.25, 2).unwrap();
        let closed = k_energy_from_round(&target).unwrap();
        let tpsi = target.psi().to_vec();
        let harmonic = move |s: f64| -> Result<MetricProfile> {
            let n = tpsi.len() - 1;
            let psi: Vec<f64> = (0..=n)
                .map(|j| {
                    if j == 0 || j == n {
                        return 0.0;
                    }
                    let mu = 2.0 * j as f64 / n as f64;
                    let q = mu * (2.0 - mu);
                    1.0 / ((1.0 - s) / q + s / tpsi[j])
                })
                .collect();
            MetricProfile::new(Grid::new(n).unwrap(), psi)
        };
        let by_path = k_energy_delta(&harmonic, 8).unwrap();
        assert_abs_diff_eq!(by_path, closed, epsilon = 1e-4 * closed.abs().max(1e-3));
    }

    #[test]
    fn poincare_closed_form_case() {
        let g = grid400();
        let r = round_profile(&g);
        let zero = ScalarField::zeros(g.clone());
        let f = ScalarField::from_fn(g.clone(), |mu| mu - 1.0);
        let c = weighted_poincare_check(&r, &zero, &f).unwrap();
        assert_abs_diff_eq!(c.lhs, TWO_PI * 4.0 / 3.0, epsilon = 1e-4);
        assert_abs_diff_eq!(c.rhs, TWO_PI * 2.0 / 3.0, epsilon = 1e-4);
        assert!(c.pass);
        assert!(c.lhs > 1.9 * c.rhs, "slack factor 2");
        // constants give (0, 0, pass)
        let k = ScalarField::from_fn(g.clone(), |_| 2.5);
        let c = weighted_poincare_check(&r, &zero, &k).unwrap();
        assert!(c.lhs.abs() < 1e-12);
        assert!(c.rhs.abs() < 1e-9);
        assert!(c.pass);
    }

    #[test]
    fn poincare_random_tests_pass() {
        let g = grid400();
        for seed in 0..20u64 {
            let p = random_profile(&g, seed, 0.3).unwrap();
            let rp = ricci_potential(&p).unwrap();
            let f = ScalarField::from_fn(g.clone(), |mu| {
                ((seed as f64 + 1.0) * 0.37 * mu).sin() + 0.2 * mu
            });
            let c = weighted_poincare_check(&p, &rp.h, &f).unwrap();
            assert!(c.pass, "seed {seed}: lhs {} rhs {}", c.lhs, c.rhs);
        }
    }

    #[test]
    fn a_tail_examples() {
        // H identically zero
        let series: Vec<(f64, f64)> = (0..100).map(|i| (i as f64 * 0.1, 0.0)).collect();
        let a = a_tail(&series, 1.0).unwrap();
        assert_eq!(a.value, 0.0);
        // synthetic exponential H = e^{-3s}: a(t) = int_t^T e^{t-s}e^{-3s} ds
        let series: Vec<(f64, f64)> = (0..=20_000)
            .map(|i| {
                let s = i as f64 * 1e-3;
                (s, (-3.0 * s).exp())
            })
            .collect();
        let t = 2.0f64;
        let t_end = 20.0f64;
        let exact = (t.exp() / 4.0) * ((-4.0 * t).exp() - (-4.0 * t_end).exp());
        let a = a_tail(&series, t).unwrap();
        assert_abs_diff_eq!(a.value, exact, epsilon = 1e-5 * exact);
        // unresolved tail
        let series = vec![(0.0, 1.0), (1.0, 0.5)];
        assert!(matches!(a_tail(&series, 0.0), Err(Error::TailNotResolved { .. })));
    }

    #[test]
    fn smoothing_ratio_round_series_is_empty() {
        let rows: Vec<DiagnosticsRow> = (0..100)
            .map(|i| DiagnosticsRow {
                t: i as f64 * 0.05,
                lambda_hat: 1.0,
                k_energy: 0.0,
                h_energy: 0.0,
                h_sup: 0.0,
                grad_h_sup: 0.0,
                lap_h_sup: 0.0,
                f_sup: 0.0,
                grad_f_l2: 0.0,
                lap_f_l2: 0.0,
                f_weighted_mean: 0.0,
                soliton_resid: 0.0,
                diam: std::f64::consts::PI,
                dist_c3_round: 0.0,
                a_t: 0.0,
                dt: 1e-5,
            })
            .collect();
        let table = smoothing_ratio(&rows, 0.5).unwrap();
        assert!(table.entries.is_empty());
        assert!(table.empirical_k.is_none());
    }

    #[test]
    fn diagnostics_row_csv_round_trip() {
        let row = DiagnosticsRow {
            t: 0.15,
            lambda_hat: 0.999,
            k_energy: 0.01,
            h_energy: 0.2,
            h_sup: 0.1,
            grad_h_sup: 0.3,
            lap_h_sup: 0.4,
            f_sup: 0.05,
            grad_f_l2: 0.06,
            lap_f_l2: 0.07,
            f_weighted_mean: -0.01,
            soliton_resid: 0.002,
            diam: 3.14,
            dist_c3_round: 0.21,
            a_t: 0.033,
            dt: 7.7e-6,
        };
        let back = DiagnosticsRow::from_csv_line(&row.to_csv_line(), 2).unwrap();
        assert_eq!(row, back);
        assert_eq!(SERIES_HEADER.split(',').count(), 16);
    }
}
