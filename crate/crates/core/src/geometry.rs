//! S1-invariant Kahler geometry on CP1 reduced to a momentum profile.
//!
//! A metric in the class is g = dmu^2/psi + psi dtheta^2 on mu in [0,2],
//! theta in [0,2pi), with psi(0) = psi(2) = 0 and psi'(0) = 2, psi'(2) = -2.
//! In these coordinates det g = 1, so dV = dmu dtheta and the total area is
//! 4pi for every profile. The Gauss curvature is K = -psi''/2 and the round
//! metric is psi = mu(2-mu), which has K = 1.

use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Total area of every profile metric (dV = dmu dtheta on [0,2] x [0,2pi)).
pub const VOLUME: f64 = 4.0 * std::f64::consts::PI;

/// Relative tolerance on the boundary slopes psi'(0) = 2, psi'(2) = -2.
pub const TOL_BC: f64 = 1e-3;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Uniform grid on the momentum interval [0,2]; mu = 1 is always a node.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n_cells: usize,
    spacing: f64,
}

impl Grid {
    /// `n_cells` must be even and at least 32.
    pub fn new(n_cells: usize) -> Result<Grid> {
        if n_cells < 32 || n_cells % 2 != 0 {
            return Err(Error::Validation {
                key: "n_cells".into(),
                msg: format!("must be even and >= 32, got {n_cells}"),
            });
        }
        Ok(Grid { n_cells, spacing: 2.0 / n_cells as f64 })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Number of nodes, n_cells + 1.
    pub fn len(&self) -> usize {
        self.n_cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Node mu_j = 2j/N; the endpoints are exactly 0 and 2.
    pub fn node(&self, j: usize) -> f64 {
        2.0 * j as f64 / self.n_cells as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.node(j)).collect()
    }

    /// Composite trapezoid of per-node values over [0,2].
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let inner: f64 = values[1..self.n_cells].iter().sum();
        (inner + 0.5 * (values[0] + values[self.n_cells])) * self.spacing
    }

    /// Trapezoid node weight: dmu/2 at the endpoints, dmu inside.
    pub fn weight(&self, j: usize) -> f64 {
        if j == 0 || j == self.n_cells {
            0.5 * self.spacing
        } else {
            self.spacing
        }
    }

    /// Centered first derivative, second-order one-sided at the endpoints.
    pub fn derivative(&self, values: &[f64]) -> Vec<f64> {
        let n = self.n_cells;
        let h = self.spacing;
        let mut out = vec![0.0; n + 1];
        out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
        out[n] = (3.0 * values[n] - 4.0 * values[n - 1] + values[n - 2]) / (2.0 * h);
        for j in 1..n {
            out[j] = (values[j + 1] - values[j - 1]) / (2.0 * h);
        }
        out
    }

    /// Centered second derivative, second-order one-sided at the endpoints.
    pub fn second_derivative(&self, values: &[f64]) -> Vec<f64> {
        let n = self.n_cells;
        let h2 = self.spacing * self.spacing;
        let mut out = vec![0.0; n + 1];
        out[0] = (2.0 * values[0] - 5.0 * values[1] + 4.0 * values[2] - values[3]) / h2;
        out[n] = (2.0 * values[n] - 5.0 * values[n - 1] + 4.0 * values[n - 2] - values[n - 3]) / h2;
        for j in 1..n {
            out[j] = (values[j + 1] - 2.0 * values[j] + values[j - 1]) / h2;
        }
        out
    }
}

/// Grid function of the momentum variable (f, h, u, K, R, test functions).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> ScalarField {
        assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn zeros(grid: Grid) -> ScalarField {
        let n = grid.len();
        ScalarField::new(grid, vec![0.0; n])
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> ScalarField {
        let values = (0..grid.len()).map(|j| f(grid.node(j))).collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// An S1-invariant Kahler metric on CP1 as a momentum profile.
///
/// The profile is the canonical modulo-diffeomorphism representative of the
/// metric (up to the reflection mu -> 2 - mu).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricProfile {
    grid: Grid,
    psi: Vec<f64>,
}

impl MetricProfile {
    /// Endpoint values must already vanish (to 1e-8); they are pinned to 0.
    pub fn new(grid: Grid, mut psi: Vec<f64>) -> Result<MetricProfile> {
        if psi.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        let n = grid.n_cells();
        if psi[0].abs() > 1e-8 || psi[n].abs() > 1e-8 {
            return Err(Error::InadmissibleProfile(format!(
                "endpoint values psi(0) = {}, psi(2) = {} do not vanish",
                psi[0], psi[n]
            )));
        }
        if !psi.iter().all(|v| v.is_finite()) {
            return Err(Error::InadmissibleProfile("non-finite value".into()));
        }
        psi[0] = 0.0;
        psi[n] = 0.0;
        Ok(MetricProfile { grid, psi })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn psi_field(&self) -> ScalarField {
        ScalarField::new(self.grid.clone(), self.psi.clone())
    }

    /// The reflected profile psi(2 - mu).
    pub fn reflected(&self) -> MetricProfile {
        let mut psi = self.psi.clone();
        psi.reverse();
        MetricProfile { grid: self.grid.clone(), psi }
    }
}

/// Per-criterion admissibility report with pass/fail at `TOL_BC`.
#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    pub min_interior: f64,
    pub interior_positive: bool,
    pub endpoint_values: (f64, f64),
    pub endpoint_values_ok: bool,
    pub slopes: (f64, f64),
    pub slope_left_ok: bool,
    pub slope_right_ok: bool,
}

impl AdmissibilityReport {
    pub fn pass(&self) -> bool {
        self.interior_positive && self.endpoint_values_ok && self.slope_left_ok && self.slope_right_ok
    }
}

/// The round (Kahler-Einstein) profile psi = mu(2 - mu); K = 1 identically.
pub fn round_profile(grid: &Grid) -> MetricProfile {
    let psi = (0..grid.len())
        .map(|j| {
            let mu = grid.node(j);
            mu * (2.0 - mu)
        })
        .collect();
    MetricProfile::new(grid.clone(), psi).expect("round profile is admissible")
}

/// psi = mu(2-mu) (1 + eps [mu(2-mu)]^k); admissible for all k >= 1 while
/// 1 + eps q^k stays positive.
pub fn perturbed_profile(grid: &Grid, eps: f64, k: u32) -> Result<MetricProfile> {
    if k == 0 {
        return Err(Error::Validation { key: "mode".into(), msg: "mode index k must be >= 1".into() });
    }
    let psi: Vec<f64> = (0..grid.len())
        .map(|j| {
            let q = grid.node(j) * (2.0 - grid.node(j));
            q * (1.0 + eps * q.powi(k as i32))
        })
        .collect();
    let profile = MetricProfile::new(grid.clone(), psi)?;
    let report = validate_profile(&profile);
    if !report.interior_positive {
        return Err(Error::InadmissibleProfile(format!(
            "perturbation eps = {eps}, k = {k} loses interior positivity"
        )));
    }
    Ok(profile)
}

/// Seeded random admissible profile: psi = q (1 + P) with q = mu(2-mu) and
/// P a combination of q^k sin/cos terms rescaled so |P| <= amplitude.
/// Deterministic per seed.
pub fn random_profile(grid: &Grid, seed: u64, amplitude: f64) -> Result<MetricProfile> {
    if !(0.0..1.0).contains(&amplitude) {
        return Err(Error::Validation {
            key: "amplitude".into(),
            msg: format!("must be in [0,1), got {amplitude}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // a_k, b_k for k = 1..=3
    let coeffs: Vec<(f64, f64)> =
        (0..3).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let raw: Vec<f64> = (0..grid.len())
        .map(|j| {
            let mu = grid.node(j);
            let q = mu * (2.0 - mu);
            let mut p = 0.0;
            for (k, (a, b)) in coeffs.iter().enumerate() {
                let km = (k + 1) as f64;
                p += q.powi(k as i32 + 1) * (a * (km * mu).cos() + b * (km * mu).sin());
            }
            p
        })
        .collect();
    let scale = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let psi: Vec<f64> = (0..grid.len())
        .map(|j| {
            let mu = grid.node(j);
            let q = mu * (2.0 - mu);
            let p = if scale > 0.0 { amplitude * raw[j] / scale } else { 0.0 };
            q * (1.0 + p)
        })
        .collect();
    let profile = MetricProfile::new(grid.clone(), psi)?;
    let report = validate_profile(&profile);
    if !report.pass() {
        return Err(Error::InadmissibleProfile(format!(
            "random profile seed = {seed}, amplitude = {amplitude} failed validation"
        )));
    }
    Ok(profile)
}

/// Interior positivity, endpoint values, and one-sided endpoint slopes.
pub fn validate_profile(profile: &MetricProfile) -> AdmissibilityReport {
    let grid = profile.grid();
    let psi = profile.psi();
    let n = grid.n_cells();
    let min_interior = psi[1..n].iter().cloned().fold(f64::INFINITY, f64::min);
    let h = grid.spacing();
    let slope0 = (-3.0 * psi[0] + 4.0 * psi[1] - psi[2]) / (2.0 * h);
    let slope1 = (3.0 * psi[n] - 4.0 * psi[n - 1] + psi[n - 2]) / (2.0 * h);
    AdmissibilityReport {
        min_interior,
        interior_positive: min_interior > 0.0,
        endpoint_values: (psi[0], psi[n]),
        endpoint_values_ok: psi[0] == 0.0 && psi[n] == 0.0,
        slopes: (slope0, slope1),
        slope_left_ok: (slope0 - 2.0).abs() <= 2.0 * TOL_BC,
        slope_right_ok: (slope1 + 2.0).abs() <= 2.0 * TOL_BC,
    }
}

/// Gauss curvature K = -psi''/2 and scalar curvature R = 2K.
///
/// The endpoint second derivative uses a compensated one-sided stencil
/// chosen so that the trapezoid of psi'' telescopes to third-order
/// one-sided boundary slopes; the discrete Gauss-Bonnet identity then
/// holds to O(dmu^3) for every admissible profile.
pub fn curvature(profile: &MetricProfile) -> (ScalarField, ScalarField) {
    let grid = profile.grid();
    let mut psi2 = grid.second_derivative(profile.psi());
    let psi = profile.psi();
    let n = grid.n_cells();
    let h2 = grid.spacing() * grid.spacing();
    psi2[0] = (5.0 * psi[0] - 12.0 * psi[1] + 9.0 * psi[2] - 2.0 * psi[3]) / (3.0 * h2);
    psi2[n] =
        (5.0 * psi[n] - 12.0 * psi[n - 1] + 9.0 * psi[n - 2] - 2.0 * psi[n - 3]) / (3.0 * h2);
    let k: Vec<f64> = psi2.iter().map(|v| -0.5 * v).collect();
    let r: Vec<f64> = k.iter().map(|v| 2.0 * v).collect();
    (ScalarField::new(grid.clone(), k), ScalarField::new(grid.clone(), r))
}

/// Laplace-Beltrami operator on invariant functions: Delta f = (psi f')'.
///
/// Conservative face-flux discretization; at the endpoints psi vanishes and
/// the regular limit (psi f')'(0) = psi'(0) f'(0) is used.
pub fn laplacian(profile: &MetricProfile, f: &ScalarField) -> Result<ScalarField> {
    let grid = profile.grid();
    if f.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let psi = profile.psi();
    let v = f.values();
    let n = grid.n_cells();
    let h = grid.spacing();
    let h2 = h * h;
    let mut out = vec![0.0; n + 1];
    for j in 1..n {
        let flux_r = 0.5 * (psi[j] + psi[j + 1]) * (v[j + 1] - v[j]);
        let flux_l = 0.5 * (psi[j - 1] + psi[j]) * (v[j] - v[j - 1]);
        out[j] = (flux_r - flux_l) / h2;
    }
    let slope0 = (-3.0 * psi[0] + 4.0 * psi[1] - psi[2]) / (2.0 * h);
    let slope1 = (3.0 * psi[n] - 4.0 * psi[n - 1] + psi[n - 2]) / (2.0 * h);
    let f0 = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    let f1 = (3.0 * v[n] - 4.0 * v[n - 1] + v[n - 2]) / (2.0 * h);
    out[0] = slope0 * f0;
    out[n] = slope1 * f1;
    Ok(ScalarField::new(grid.clone(), out))
}

/// Pointwise |grad f|^2 = psi (f')^2.
pub fn gradient_norm_sq(profile: &MetricProfile, f: &ScalarField) -> Result<ScalarField> {
    let grid = profile.grid();
    if f.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let df = grid.derivative(f.values());
    let vals = profile.psi().iter().zip(&df).map(|(p, d)| p * d * d).collect();
    Ok(ScalarField::new(grid.clone(), vals))
}

/// 2pi * trapezoid of field (optionally times weight) over [0,2]; this is
/// the surface integral since dV = dmu dtheta.
pub fn integrate(field: &ScalarField, weight: Option<&ScalarField>) -> Result<f64> {
    let grid = field.grid();
    let vals: Vec<f64> = match weight {
        Some(w) => {
            if w.grid() != grid {
                return Err(Error::GridMismatch);
            }
            field.values().iter().zip(w.values()).map(|(a, b)| a * b).collect()
        }
        None => field.values().to_vec(),
    };
    Ok(TWO_PI * grid.trapezoid(&vals))
}

fn sqrt_model_integral(a: f64, b: f64, m: f64) -> f64 {
    // int_0^m dmu / sqrt(a mu + b mu^2), a > 0, a + b m > 0.
    let x = b * m / a;
    if x.abs() < 1e-9 {
        2.0 * (m / a).sqrt() * (1.0 - x / 6.0)
    } else if b > 0.0 {
        2.0 / b.sqrt() * (b * m / a).sqrt().asinh()
    } else {
        2.0 / (-b).sqrt() * (-b * m / a).sqrt().min(1.0).asin()
    }
}

/// Pole-to-pole distance d = int_0^2 dmu / sqrt(psi).
///
/// The square-root endpoint singularity is handled by the closed-form local
/// model psi ~ psi'(0) mu + psi''(0) mu^2/2 on each half; the smooth
/// remainder 1/sqrt(psi) - 1/sqrt(model) is integrated by trapezoid. On the
/// round profile the model is exact and d = pi to machine precision.
pub fn diameter(profile: &MetricProfile) -> Result<f64> {
    let report = validate_profile(profile);
    if !report.interior_positive {
        return Err(Error::InadmissibleProfile("diameter needs psi > 0 inside".into()));
    }
    let grid = profile.grid();
    let n = grid.n_cells();
    let psi = profile.psi();
    let half = |nodes_psi: &dyn Fn(usize) -> f64| -> f64 {
        // integrates from the left pole (index 0 of the view) to mu = 1
        let h = grid.spacing();
        let p = |j: usize| nodes_psi(j);
        let a = (-3.0 * p(0) + 4.0 * p(1) - p(2)) / (2.0 * h);
        let b = 0.5 * (2.0 * p(0) - 5.0 * p(1) + 4.0 * p(2) - p(3)) / (h * h);
        // shrink the model region if the model loses positivity before mu = 1
        let mut j_cut = n / 2;
        while j_cut > 1 {
            let mu = j_cut as f64 * h;
            if a + b * mu > 0.1 * a {
                break;
            }
            j_cut -= 1;
        }
        let mu_cut = j_cut as f64 * h;
        let closed = sqrt_model_integral(a, b, mu_cut);
        let mut corr = vec![0.0; j_cut + 1];
        for (j, c) in corr.iter_mut().enumerate().skip(1) {
            let mu = j as f64 * h;
            *c = 1.0 / p(j).sqrt() - 1.0 / (a * mu + b * mu * mu).sqrt();
        }
        let mut corr_int = 0.0;
        for j in 0..j_cut {
            corr_int += 0.5 * (corr[j] + corr[j + 1]) * h;
        }
        // remaining smooth stretch up to mu = 1
        let mut rest = 0.0;
        for j in j_cut..n / 2 {
            rest += 0.5 * (1.0 / p(j).sqrt() + 1.0 / p(j + 1).sqrt()) * h;
        }
        closed + corr_int + rest
    };
    let left = half(&|j| psi[j]);
    let right = half(&|j| psi[n - j]);
    Ok(left + right)
}

/// Residual of the shrinking-soliton equation S = Ric - g + Hess f.
///
/// Components are stored in the orthonormal frame (sqrt(psi) d_mu,
/// d_theta / sqrt(psi)), which stays regular at the poles:
/// S(e_mu,e_mu) = (K-1) + psi f'' + (psi'/2) f',
/// S(e_th,e_th) = (K-1) + (psi'/2) f'.
#[derive(Debug, Clone)]
pub struct SolitonResidual {
    pub s_mumu: ScalarField,
    pub s_thth: ScalarField,
    /// ||S|| in L^2(e^-f dV).
    pub l2_weighted: f64,
}

pub fn hessian_and_soliton_residual(profile: &MetricProfile, f: &ScalarField) -> Result<SolitonResidual> {
    let grid = profile.grid();
    if f.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let psi = profile.psi();
    let dpsi = grid.derivative(psi);
    let (k, _) = curvature(profile);
    let df = grid.derivative(f.values());
    let d2f = grid.second_derivative(f.values());
    let nn = grid.len();
    let mut s_mm = vec![0.0; nn];
    let mut s_tt = vec![0.0; nn];
    let mut weighted = vec![0.0; nn];
    for j in 0..nn {
        let km1 = k.values()[j] - 1.0;
        s_mm[j] = km1 + psi[j] * d2f[j] + 0.5 * dpsi[j] * df[j];
        s_tt[j] = km1 + 0.5 * dpsi[j] * df[j];
        weighted[j] = (s_mm[j] * s_mm[j] + s_tt[j] * s_tt[j]) * (-f.values()[j]).exp();
    }
    let l2 = (TWO_PI * grid.trapezoid(&weighted)).max(0.0).sqrt();
    Ok(SolitonResidual {
        s_mumu: ScalarField::new(grid.clone(), s_mm),
        s_thth: ScalarField::new(grid.clone(), s_tt),
        l2_weighted: l2,
    })
}

/// Symplectic potential: u'' = 1/psi with the gauge u(1) = u'(1) = 0.
///
/// u' is the cumulative trapezoid of 1/psi from mu = 1 outward and u the
/// cumulative trapezoid of u'; the endpoint values (where u' diverges
/// logarithmically) come from the local model psi ~ psi'(0) mu.
pub fn symplectic_potential(profile: &MetricProfile) -> Result<ScalarField> {
    let report = validate_profile(profile);
    if !report.interior_positive {
        return Err(Error::InadmissibleProfile("symplectic potential needs psi > 0 inside".into()));
    }
    let grid = profile.grid();
    let psi = profile.psi();
    let n = grid.n_cells();
    let mid = n / 2;
    let h = grid.spacing();
    let mut du = vec![0.0; n + 1];
    for j in (mid + 1)..n {
        du[j] = du[j - 1] + 0.5 * (1.0 / psi[j - 1] + 1.0 / psi[j]) * h;
    }
    for j in (1..mid).rev() {
        du[j] = du[j + 1] - 0.5 * (1.0 / psi[j] + 1.0 / psi[j + 1]) * h;
    }
    let mut u = vec![0.0; n + 1];
    for j in (mid + 1)..n {
        u[j] = u[j - 1] + 0.5 * (du[j - 1] + du[j]) * h;
    }
    for j in (1..mid).rev() {
        u[j] = u[j + 1] - 0.5 * (du[j] + du[j + 1]) * h;
    }
    // endpoint values from u'' = 1/(slope * mu): u(0) = u(h) - h u'(h) + h/slope
    let (s0, s1) = report.slopes;
    u[0] = u[1] - h * du[1] + h / s0;
    u[n] = u[n - 1] + h * du[n - 1] + h / (-s1);
    Ok(ScalarField::new(grid.clone(), u))
}

/// C^3 distance between profiles, minimized over the reflection mu -> 2-mu:
/// min over {id, reflect} of max_{0<=j<=3} sup |d^j/dmu^j (psi1 - psi2)|.
pub fn c3_distance(p1: &MetricProfile, p2: &MetricProfile) -> Result<f64> {
    if p1.grid() != p2.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = p1.grid();
    let dist = |other: &MetricProfile| -> f64 {
        let mut d: Vec<f64> =
            p1.psi().iter().zip(other.psi()).map(|(a, b)| a - b).collect();
        let mut worst = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for _ in 0..3 {
            d = grid.derivative(&d);
            worst = worst.max(d.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
        worst
    };
    Ok(dist(p2).min(dist(&p2.reflected())))
}

/// Serialize a profile as CSV with header `mu,psi` (LF line endings).
pub fn profile_to_csv(profile: &MetricProfile) -> String {
    let mut out = String::from("mu,psi\n");
    for j in 0..profile.grid().len() {
        out.push_str(&format!("{},{}\n", profile.grid().node(j), profile.psi()[j]));
    }
    out
}

/// Parse a `mu,psi` CSV produced by [`profile_to_csv`].
pub fn profile_from_csv(text: &str) -> Result<MetricProfile> {
    let mut psi = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != "mu,psi" {
                return Err(Error::Parse { line: 1, msg: "expected header 'mu,psi'".into() });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (mu, val) = (parts.next(), parts.next());
        match (mu, val) {
            (Some(_), Some(v)) => psi.push(v.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?),
            _ => return Err(Error::Parse { line: i + 1, msg: "expected 'mu,psi' pair".into() }),
        }
    }
    if psi.len() < 33 {
        return Err(Error::Parse { line: 0, msg: format!("too few rows: {}", psi.len()) });
    }
    let grid = Grid::new(psi.len() - 1)?;
    MetricProfile::new(grid, psi)
}

/// Serialize a scalar field as CSV with the given value column name.
pub fn field_to_csv(field: &ScalarField, name: &str) -> String {
    let mut out = format!("mu,{name}\n");
    for j in 0..field.grid().len() {
        out.push_str(&format!("{},{}\n", field.grid().node(j), field.values()[j]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid400() -> Grid {
        Grid::new(400).unwrap()
    }

    #[test]
    fn grid_endpoints_exact() {
        let g = grid400();
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(400), 2.0);
        assert_eq!(g.node(200), 1.0);
    }

    #[test]
    fn round_profile_closed_form() {
        let g = Grid::new(64).unwrap();
        let p = round_profile(&g);
        for j in 0..g.len() {
            let mu = g.node(j);
            assert_abs_diff_eq!(p.psi()[j], mu * (2.0 - mu), epsilon = 1e-15);
        }
        assert_eq!(p.psi()[32], 1.0);
        let rep = validate_profile(&p);
        assert!(rep.pass());
        // one-sided slope stencils are exact on quadratics
        assert_abs_diff_eq!(rep.slopes.0, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.slopes.1, -2.0, epsilon = 1e-12);
    }

    #[test]
    fn curvature_round_is_one() {
        let p = round_profile(&grid400());
        let (k, r) = curvature(&p);
        for j in 0..k.grid().len() {
            assert_abs_diff_eq!(k.values()[j], 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(r.values()[j], 2.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn perturbed_profile_examples() {
        let g = grid400();
        let p = perturbed_profile(&g, 0.1, 1).unwrap();
        assert_abs_diff_eq!(p.psi()[200], 1.1, epsilon = 1e-14);
        let (k, _) = curvature(&p);
        // psi''(1) = -2.4 symbolically, so K(1) = 1.2
        assert_abs_diff_eq!(k.values()[200], 1.2, epsilon = 1e-5);
        let rep = validate_profile(&p);
        assert!(rep.pass());
        assert_abs_diff_eq!(rep.slopes.0, 2.0, epsilon = 1e-4);
    }

    #[test]
    fn perturbed_zero_is_round() {
        let g = Grid::new(64).unwrap();
        assert_eq!(perturbed_profile(&g, 0.0, 3).unwrap(), round_profile(&g));
    }

    #[test]
    fn perturbed_rejects_loss_of_positivity() {
        let g = Grid::new(64).unwrap();
        assert!(perturbed_profile(&g, -1.5, 1).is_err());
    }

    #[test]
    fn perturbed_admissible_through_amplitude_sweep() {
        let g = grid400();
        for k in 1..=3u32 {
            for sgn in [-1.0, 1.0] {
                let p = perturbed_profile(&g, sgn * 0.3, k).unwrap();
                assert!(validate_profile(&p).pass(), "eps = {}, k = {}", sgn * 0.3, k);
            }
        }
    }

    #[test]
    fn random_profile_deterministic_and_admissible() {
        let g = grid400();
        let p1 = random_profile(&g, 7, 0.3).unwrap();
        let p2 = random_profile(&g, 7, 0.3).unwrap();
        assert_eq!(p1.psi(), p2.psi());
        assert!(validate_profile(&p1).pass());
        assert_eq!(random_profile(&g, 3, 0.0).unwrap(), round_profile(&g));
    }

    #[test]
    fn validate_flags_negative_interior() {
        let g = Grid::new(64).unwrap();
        let mut psi = round_profile(&g).psi().to_vec();
        psi[32] = -0.1;
        let p = MetricProfile::new(g, psi).unwrap();
        let rep = validate_profile(&p);
        assert!(!rep.interior_positive);
        assert!(!rep.pass());
    }

    #[test]
    fn volume_is_4pi_to_machine_precision() {
        let g = grid400();
        let one = ScalarField::from_fn(g, |_| 1.0);
        assert_abs_diff_eq!(integrate(&one, None).unwrap(), VOLUME, epsilon = 1e-12);
    }

    #[test]
    fn gauss_bonnet_on_sample_profiles() {
        let g = grid400();
        let tol = 10.0 * g.spacing() * g.spacing();
        let mut profiles = vec![round_profile(&g), perturbed_profile(&g, 0.3, 2).unwrap()];
        for seed in [1, 2, 3, 4, 5] {
            profiles.push(random_profile(&g, seed, 0.3).unwrap());
        }
        for p in &profiles {
            let (k, _) = curvature(&p);
            let total = integrate(&k, None).unwrap();
            assert!((total - VOLUME).abs() < tol, "Gauss-Bonnet defect {}", total - VOLUME);
        }
    }

    #[test]
    fn laplacian_examples() {
        let g = grid400();
        let p = random_profile(&g, 11, 0.2).unwrap();
        let c = ScalarField::from_fn(g.clone(), |_| 3.7);
        let lc = laplacian(&p, &c).unwrap();
        assert!(lc.sup_norm() < 1e-10);
        // f = mu gives Delta f = psi' for any profile
        let f = ScalarField::from_fn(g.clone(), |mu| mu);
        let lf = laplacian(&p, &f).unwrap();
        let dpsi = g.derivative(p.psi());
        for j in 0..g.len() {
            assert_abs_diff_eq!(lf.values()[j], dpsi[j], epsilon = 2e-3);
        }
        // on the round profile the identity is exact in the stencils
        let r = round_profile(&g);
        let lf = laplacian(&r, &f).unwrap();
        for j in 0..g.len() {
            let mu = g.node(j);
            assert_abs_diff_eq!(lf.values()[j], 2.0 - 2.0 * mu, epsilon = 1e-10);
        }
    }

    #[test]
    fn laplacian_discrete_self_adjoint() {
        let g = grid400();
        let p = random_profile(&g, 4, 0.3).unwrap();
        // fields vanishing at the endpoints
        let f = ScalarField::from_fn(g.clone(), |mu| (mu * (2.0 - mu)).powi(2));
        let w = ScalarField::from_fn(g.clone(), |mu| mu * (2.0 - mu) * (1.5 * mu).sin());
        let lf = laplacian(&p, &f).unwrap();
        let lw = laplacian(&p, &w).unwrap();
        let a = integrate(&w, Some(&lf)).unwrap();
        let b = integrate(&f, Some(&lw)).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn gradient_norm_examples() {
        let g = grid400();
        let r = round_profile(&g);
        let f = ScalarField::from_fn(g.clone(), |mu| mu - 1.0);
        let gn = gradient_norm_sq(&r, &f).unwrap();
        for j in 0..g.len() {
            let mu = g.node(j);
            assert_abs_diff_eq!(gn.values()[j], mu * (2.0 - mu), epsilon = 1e-10);
        }
        assert_abs_diff_eq!(
            integrate(&gn, None).unwrap(),
            TWO_PI * 4.0 / 3.0,
            epsilon = 1e-4
        );
    }

    #[test]
    fn integrate_polynomial() {
        let g = grid400();
        let f = ScalarField::from_fn(g, |mu| (mu - 1.0) * (mu - 1.0));
        // exact value 2pi * 2/3; trapezoid error ~ dmu^2/6
        assert_abs_diff_eq!(integrate(&f, None).unwrap(), TWO_PI * 2.0 / 3.0, epsilon = 1e-4);
    }

    #[test]
    fn diameter_round_is_pi() {
        let g = grid400();
        let d = diameter(&round_profile(&g)).unwrap();
        assert_abs_diff_eq!(d, std::f64::consts::PI, epsilon = 1e-6);
    }

    #[test]
    fn diameter_reflection_symmetric() {
        let g = grid400();
        let p = random_profile(&g, 9, 0.3).unwrap();
        let d1 = diameter(&p).unwrap();
        let d2 = diameter(&p.reflected()).unwrap();
        assert_abs_diff_eq!(d1, d2, epsilon = 1e-9);
    }

    #[test]
    fn diameter_perturbed_below_pi() {
        let g = grid400();
        let p = perturbed_profile(&g, 0.1, 1).unwrap();
        let d = diameter(&p).unwrap();
        assert!(d < std::f64::consts::PI);
        // independent quadrature oracle: mu = 1 + sin(phi) turns the integral
        // into int dphi / sqrt(1 + 0.1 cos^2 phi), which is smooth
        let m = 200_000;
        let mut oracle = 0.0;
        for i in 0..=m {
            let phi = -std::f64::consts::FRAC_PI_2
                + std::f64::consts::PI * i as f64 / m as f64;
            let w = if i == 0 || i == m { 0.5 } else { 1.0 };
            oracle += w * std::f64::consts::PI / m as f64
                / (1.0 + 0.1 * phi.cos() * phi.cos()).sqrt();
        }
        assert_abs_diff_eq!(d, oracle, epsilon = 1e-5);
    }

    #[test]
    fn soliton_residual_round_zero() {
        let g = grid400();
        let r = round_profile(&g);
        let f = ScalarField::zeros(g.clone());
        let s = hessian_and_soliton_residual(&r, &f).unwrap();
        for j in 1..g.len() - 1 {
            assert_abs_diff_eq!(s.s_mumu.values()[j], 0.0, epsilon = 1e-11);
            assert_abs_diff_eq!(s.s_thth.values()[j], 0.0, epsilon = 1e-11);
        }
        assert!(s.l2_weighted < 1e-10);
    }

    #[test]
    fn soliton_residual_zero_f_matches_curvature_defect() {
        let g = grid400();
        let p = perturbed_profile(&g, 0.1, 1).unwrap();
        let f = ScalarField::zeros(g.clone());
        let s = hessian_and_soliton_residual(&p, &f).unwrap();
        let (k, _) = curvature(&p);
        for j in 0..g.len() {
            assert_abs_diff_eq!(s.s_thth.values()[j], k.values()[j] - 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn soliton_hessian_theta_component_matches_christoffel() {
        // Hess f (d_th, d_th) = -Gamma^mu_thth f' with Gamma^mu_thth = -psi psi'/2;
        // in the orthonormal frame this contributes (psi'/2) f'.
        let g = grid400();
        let p = random_profile(&g, 5, 0.2).unwrap();
        let f = ScalarField::from_fn(g.clone(), |mu| (0.7 * mu).cos());
        let s = hessian_and_soliton_residual(&p, &f).unwrap();
        let (k, _) = curvature(&p);
        let dpsi = g.derivative(p.psi());
        let df = g.derivative(f.values());
        for j in 0..g.len() {
            let expect = (k.values()[j] - 1.0) + 0.5 * dpsi[j] * df[j];
            assert_abs_diff_eq!(s.s_thth.values()[j], expect, epsilon = 1e-13);
        }
    }

    #[test]
    fn symplectic_potential_round_closed_form() {
        let g = grid400();
        let u = symplectic_potential(&round_profile(&g)).unwrap();
        assert_eq!(u.values()[200], 0.0);
        for j in 0..g.len() {
            let mu = g.node(j);
            if !(0.1..=1.9).contains(&mu) {
                continue;
            }
            let exact = 0.5 * (mu * mu.ln() + (2.0 - mu) * (2.0 - mu).ln());
            assert_abs_diff_eq!(u.values()[j], exact, epsilon = 2e-3);
        }
    }

    #[test]
    fn symplectic_potential_convex() {
        let g = grid400();
        for seed in [1, 6, 12] {
            let p = random_profile(&g, seed, 0.3).unwrap();
            let u = symplectic_potential(&p).unwrap();
            let v = u.values();
            for j in 1..g.len() - 1 {
                assert!(v[j + 1] - 2.0 * v[j] + v[j - 1] > 0.0, "convexity at node {j}");
            }
        }
    }

    #[test]
    fn c3_distance_quotient_and_triangle() {
        let g = grid400();
        let a = random_profile(&g, 1, 0.3).unwrap();
        let b = random_profile(&g, 2, 0.3).unwrap();
        let c = random_profile(&g, 3, 0.3).unwrap();
        assert_eq!(c3_distance(&a, &a).unwrap(), 0.0);
        assert!(c3_distance(&a, &a.reflected()).unwrap() < 1e-12);
        let ab = c3_distance(&a, &b).unwrap();
        let bc = c3_distance(&b, &c).unwrap();
        let ac = c3_distance(&a, &c).unwrap();
        assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn profile_csv_round_trip() {
        let g = Grid::new(64).unwrap();
        let p = random_profile(&g, 42, 0.25).unwrap();
        let text = profile_to_csv(&p);
        let q = profile_from_csv(&text).unwrap();
        assert_eq!(p.psi(), q.psi());
    }
}
