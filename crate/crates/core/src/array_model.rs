//! Array geometry, snapshot simulation, covariance estimates, angular sector
//! matrices and steering-vector uncertainty sets.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::hermlinalg::{vdot, vnorm, CMatrix, CVector, HermitianMatrix, C64};
use crate::{Error, Result};

/// Sensor positions in half-wavelength units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    positions: Vec<f64>,
}

impl ArrayGeometry {
    pub fn ula(n: usize) -> Self {
        Self { positions: (0..n).map(|k| k as f64).collect() }
    }

    pub fn new(positions: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Config("array needs at least one sensor".into()));
        }
        if positions.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("sensor positions must be strictly increasing".into()));
        }
        Ok(Self { positions })
    }

    pub fn n_sensors(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interferer {
    pub angle_deg: f64,
    pub inr_db: f64,
}

/// One simulated environment. Noise power is fixed at 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    pub soi_angle_true: f64,
    pub soi_angle_presumed: f64,
    pub interferers: Vec<Interferer>,
    pub snr_db: f64,
    pub snapshots: usize,
    pub seed: u64,
    pub phase_sigma: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            geometry: ArrayGeometry::ula(12),
            soi_angle_true: 7.0,
            soi_angle_presumed: 5.0,
            interferers: vec![
                Interferer { angle_deg: -15.0, inr_db: 30.0 },
                Interferer { angle_deg: 15.0, inr_db: 30.0 },
            ],
            snr_db: 20.0,
            snapshots: 100,
            seed: 0,
            phase_sigma: 0.02,
        }
    }
}

/// On-disk form of [`Scenario`]; every field is optional and defaults to the
/// 12-sensor reference scenario.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub n_sensors: Option<usize>,
    pub positions: Option<Vec<f64>>,
    pub soi_angle_true: Option<f64>,
    pub soi_angle_presumed: Option<f64>,
    pub interferers: Option<Vec<Interferer>>,
    pub snr_db: Option<f64>,
    pub snapshots: Option<usize>,
    pub seed: Option<u64>,
    pub phase_sigma: Option<f64>,
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario> {
        let d = Scenario::default();
        let geometry = match (self.positions, self.n_sensors) {
            (Some(p), n) => {
                if n.is_some_and(|n| n != p.len()) {
                    return Err(Error::Config("n_sensors disagrees with positions".into()));
                }
                ArrayGeometry::new(p)?
            }
            (None, Some(n)) if n >= 1 => ArrayGeometry::ula(n),
            (None, Some(_)) => return Err(Error::Config("n_sensors must be positive".into())),
            (None, None) => d.geometry,
        };
        let s = Scenario {
            geometry,
            soi_angle_true: self.soi_angle_true.unwrap_or(d.soi_angle_true),
            soi_angle_presumed: self.soi_angle_presumed.unwrap_or(d.soi_angle_presumed),
            interferers: self.interferers.unwrap_or(d.interferers),
            snr_db: self.snr_db.unwrap_or(d.snr_db),
            snapshots: self.snapshots.unwrap_or(d.snapshots),
            seed: self.seed.unwrap_or(d.seed),
            phase_sigma: self.phase_sigma.unwrap_or(d.phase_sigma),
        };
        s.validate()?;
        Ok(s)
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.snapshots == 0 {
            return Err(Error::Config("snapshots must be at least 1".into()));
        }
        if !(self.phase_sigma >= 0.0) {
            return Err(Error::Config("phase_sigma must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        file.into_scenario()
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn n(&self) -> usize {
        self.geometry.n_sensors()
    }

    /// Signal power relative to unit noise.
    pub fn signal_power(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    pub fn presumed_steering(&self) -> CVector {
        steering(&self.geometry, self.soi_angle_presumed)
    }
}

/// `d_n(theta) = exp(i pi p_n sin(theta))`, theta in degrees from broadside.
pub fn steering(geometry: &ArrayGeometry, theta_deg: f64) -> CVector {
    let s = theta_deg.to_radians().sin();
    CVector::from_iterator(
        geometry.n_sensors(),
        geometry.positions().iter().map(|p| C64::from_polar(1.0, PI * p * s)),
    )
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub snapshots: Vec<CVector>,
    pub r_sample: HermitianMatrix,
    pub r_inplus_noise: HermitianMatrix,
    pub a_true: CVector,
}

fn complex_gaussian(rng: &mut ChaCha8Rng, power: f64) -> C64 {
    let normal = Normal::new(0.0, (power / 2.0).sqrt()).expect("finite variance");
    C64::new(normal.sample(rng), normal.sample(rng))
}

/// Draws training snapshots containing the distorted signal, the interferers and unit white noise.
pub fn simulate(scenario: &Scenario) -> Result<Simulation> {
    scenario.validate()?;
    let n = scenario.n();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let phase = Normal::new(0.0, scenario.phase_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut a_true = steering(&scenario.geometry, scenario.soi_angle_true);
    let mut phi = 0.0;
    for k in 1..n {
        phi += phase.sample(&mut rng);
        a_true[k] *= C64::from_polar(1.0, phi);
    }
    let sig_pow = scenario.signal_power();
    let interf: Vec<(CVector, f64)> = scenario
        .interferers
        .iter()
        .map(|i| (steering(&scenario.geometry, i.angle_deg), 10f64.powf(i.inr_db / 10.0)))
        .collect();

    let mut r_in = CMatrix::identity(n, n);
    for (d, p) in &interf {
        r_in += d * d.adjoint() * C64::new(*p, 0.0);
    }
    let t = scenario.snapshots;
    let mut snapshots = Vec::with_capacity(t);
    let mut acc = CMatrix::zeros(n, n);
    for _ in 0..t {
        let mut y = &a_true * complex_gaussian(&mut rng, sig_pow);
        for (d, p) in &interf {
            y += d * complex_gaussian(&mut rng, *p);
        }
        for k in 0..n {
            y[k] += complex_gaussian(&mut rng, 1.0);
        }
        acc += &y * y.adjoint();
        snapshots.push(y);
    }
    acc /= C64::new(t as f64, 0.0);
    Ok(Simulation {
        snapshots,
        r_sample: HermitianMatrix::new(acc)?,
        r_inplus_noise: HermitianMatrix::new(r_in)?,
        a_true,
    })
}

/// `R + sqrt(gamma) I`.
pub fn r_hat(r_sample: &HermitianMatrix, gamma: f64) -> Result<HermitianMatrix> {
    if !(gamma >= 0.0) {
        return Err(Error::Domain(format!("gamma must be nonnegative, got {gamma}")));
    }
    Ok(r_sample + &HermitianMatrix::identity(r_sample.dim()).scale(gamma.sqrt()))
}

/// `gamma` with `sqrt(gamma) = factor * lambda_min(R_sample)`.
pub fn gamma_from_min_eig(r_sample: &HermitianMatrix, factor: f64) -> Result<f64> {
    let l = r_sample.min_eig()?.max(0.0);
    Ok((factor * l).powi(2))
}

/// Composite Simpson nodes and weights on `[a, b]` (radians); `points` is rounded up to odd.
fn simpson(a: f64, b: f64, points: usize) -> Vec<(f64, f64)> {
    let m = if points % 2 == 0 { points + 1 } else { points.max(3) };
    let h = (b - a) / (m - 1) as f64;
    (0..m)
        .map(|k| {
            let w = if k == 0 || k == m - 1 {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (a + h * k as f64, w * h / 3.0)
        })
        .collect()
}

/// Quadrature of `int d(theta) d(theta)^H dtheta` over `[lo, hi]` degrees, or over
/// its complement in `[-90, 90]` when `complement` is set.
pub fn sector_matrix(geometry: &ArrayGeometry, interval: (f64, f64), complement: bool, quad_points: usize) -> Result<HermitianMatrix> {
    if quad_points < 2 {
        return Err(Error::Domain("quadrature needs at least 2 points".into()));
    }
    let (lo, hi) = (interval.0.max(-90.0), interval.1.min(90.0));
    let pieces: Vec<(f64, f64)> = if complement {
        let lo = lo.min(90.0);
        let hi = hi.max(-90.0);
        if hi < lo {
            vec![(-90.0, 90.0)]
        } else {
            vec![(-90.0, lo), (hi, 90.0)]
        }
    } else if hi > lo {
        vec![(lo, hi)]
    } else {
        vec![]
    };
    let pieces: Vec<(f64, f64)> = pieces.into_iter().filter(|(a, b)| b > a).collect();
    let n = geometry.n_sensors();
    if pieces.is_empty() {
        log::warn!("empty angular sector, returning the zero matrix");
        return Ok(HermitianMatrix::zeros(n));
    }
    let pos = geometry.positions();
    let mut out = CMatrix::zeros(n, n);
    for (a, b) in pieces {
        for (theta, w) in simpson(a.to_radians(), b.to_radians(), quad_points) {
            let s = theta.sin();
            for q in 0..n {
                for p in 0..=q {
                    let z = C64::from_polar(w, PI * (pos[p] - pos[q]) * s);
                    out[(p, q)] += z;
                }
            }
        }
    }
    for q in 0..n {
        for p in 0..q {
            out[(q, p)] = out[(p, q)].conj();
        }
    }
    HermitianMatrix::new(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaThresholds {
    /// `max_{theta in sector} d^H C_bar d`
    pub delta0: f64,
    /// `min_{theta in sector} d^H C d`
    pub delta1: f64,
}

fn golden_search(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if (b - a).abs() < 1e-12 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Minimum of `f` over `[lo, hi]` by a dense grid followed by golden-section refinement.
fn grid_min(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, grid: usize) -> f64 {
    let grid = grid.max(2);
    let h = (hi - lo) / (grid - 1) as f64;
    let (mut best_k, mut best) = (0, f64::INFINITY);
    for k in 0..grid {
        let v = f(lo + h * k as f64);
        if v < best {
            best = v;
            best_k = k;
        }
    }
    let a = (lo + h * (best_k as f64 - 1.0)).max(lo);
    let b = (lo + h * (best_k as f64 + 1.0)).min(hi);
    let x = golden_search(f, a, b);
    best.min(f(x))
}

/// Thresholds of the quadratic-form uncertainty sets over the sector `interval` (degrees).
pub fn delta_thresholds(
    geometry: &ArrayGeometry,
    interval: (f64, f64),
    c_bar: &HermitianMatrix,
    c: &HermitianMatrix,
    grid_points: usize,
) -> DeltaThresholds {
    let (lo, hi) = interval;
    let q_bar = |t: f64| -c_bar.quad_form(&steering(geometry, t));
    let q = |t: f64| c.quad_form(&steering(geometry, t));
    DeltaThresholds { delta0: -grid_min(&q_bar, lo, hi, grid_points), delta1: grid_min(&q, lo, hi, grid_points) }
}

/// Output SINR in dB; `-inf` when `w` is orthogonal to `a_true`.
pub fn output_sinr(w: &CVector, sigma_s2: f64, a_true: &CVector, r_inplus_noise: &HermitianMatrix) -> Result<f64> {
    if vnorm(w) == 0.0 {
        return Err(Error::Domain("zero weight vector".into()));
    }
    let num = sigma_s2 * vdot(w, a_true).norm_sqr();
    let den = r_inplus_noise.quad_form(w);
    Ok(10.0 * (num / den).log10())
}

/// `sigma_s^2 a^H R_{i+n}^{-1} a` in dB, the largest SINR any weight vector attains.
pub fn optimal_sinr(sigma_s2: f64, a_true: &CVector, r_inplus_noise: &HermitianMatrix) -> Result<f64> {
    let x = r_inplus_noise.solve_pd(a_true)?;
    Ok(10.0 * (sigma_s2 * vdot(a_true, &x).re).log10())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuadSign {
    /// `a^H M a <= delta`
    Upper,
    /// `a^H M a >= delta`
    Lower,
}

/// Steering-vector uncertainty set.
#[derive(Clone, Debug, PartialEq)]
pub enum UncertaintySpec {
    /// `||a - a_hat||^2 <= eps` and `N - eta1 <= ||a||^2 <= N + eta2`.
    Ball { a_hat: CVector, eps: f64, eta1: f64, eta2: f64 },
    /// `a^H M a <= delta` (or `>=`) and the same norm shell.
    Quad { m: HermitianMatrix, delta: f64, eta1: f64, eta2: f64, sign: QuadSign },
}

fn check_shell(n: usize, eta1: f64, eta2: f64) -> Result<()> {
    if !(eta1 >= 0.0 && eta1 < n as f64) {
        return Err(Error::InvalidSpec(format!("eta1 = {eta1} must lie in [0, {n})")));
    }
    if !(eta2 >= 0.0) {
        return Err(Error::InvalidSpec(format!("eta2 = {eta2} must be nonnegative")));
    }
    Ok(())
}

/// Range of `delta` for which `{a^H M a <= delta}` meets the shell and is not implied by it.
pub fn admissible_range(m: &HermitianMatrix, eta1: f64, eta2: f64) -> Result<(f64, f64)> {
    let n = m.dim() as f64;
    let vals = m.eigenvalues()?;
    let (top, bottom) = (vals[0], vals[vals.len() - 1]);
    let lo = if bottom >= 0.0 { bottom * (n - eta1) } else { bottom * (n + eta2) };
    let hi = if top >= 0.0 { top * (n + eta2) } else { top * (n - eta1) };
    Ok((lo, hi))
}

impl UncertaintySpec {
    pub fn ball(a_hat: CVector, eps: f64, eta1: f64, eta2: f64) -> Result<Self> {
        let n = a_hat.len();
        let norm2 = vnorm(&a_hat).powi(2);
        if (norm2 - n as f64).abs() > 1e-9 * n as f64 {
            return Err(Error::InvalidSpec(format!("||a_hat||^2 = {norm2} must equal N = {n}")));
        }
        if !(eps >= 0.0 && eps < n as f64) {
            return Err(Error::InvalidSpec(format!("eps = {eps} must lie in [0, N)")));
        }
        check_shell(n, eta1, eta2)?;
        Ok(Self::Ball { a_hat, eps, eta1, eta2 })
    }

    /// Quadratic-form set; `delta` must lie in the admissible range of its upper-bound form.
    pub fn quad(m: HermitianMatrix, delta: f64, eta1: f64, eta2: f64, sign: QuadSign) -> Result<Self> {
        check_shell(m.dim(), eta1, eta2)?;
        let spec = Self::Quad { m, delta, eta1, eta2, sign };
        let (mm, dd) = spec.upper_form().expect("quad");
        let (lo, hi) = admissible_range(&mm, eta1, eta2)?;
        let tol = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
        if dd < lo - tol || dd > hi + tol {
            return Err(Error::InvalidSpec(format!(
                "threshold {dd} outside admissible range [{lo}, {hi}] of the upper-bound form"
            )));
        }
        Ok(spec)
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Ball { a_hat, .. } => a_hat.len(),
            Self::Quad { m, .. } => m.dim(),
        }
    }

    pub fn shell(&self) -> (f64, f64) {
        let n = self.n() as f64;
        match *self {
            Self::Ball { eta1, eta2, .. } | Self::Quad { eta1, eta2, .. } => (n - eta1, n + eta2),
        }
    }

    /// `(M, delta)` such that the quadratic constraint reads `a^H M a <= delta`.
    pub fn upper_form(&self) -> Option<(HermitianMatrix, f64)> {
        match self {
            Self::Ball { .. } => None,
            Self::Quad { m, delta, sign: QuadSign::Upper, .. } => Some((m.clone(), *delta)),
            Self::Quad { m, delta, sign: QuadSign::Lower, .. } => Some((m.scale(-1.0), -*delta)),
        }
    }

    /// Largest constraint violation of `a` (0 when `a` belongs to the set).
    pub fn violation(&self, a: &CVector) -> f64 {
        let (lo, hi) = self.shell();
        let n2 = vnorm(a).powi(2);
        let shell = (lo - n2).max(n2 - hi).max(0.0);
        let set = match self {
            Self::Ball { a_hat, eps, .. } => (vnorm(&(a - a_hat)).powi(2) - eps).max(0.0),
            Self::Quad { .. } => {
                let (m, d) = self.upper_form().expect("quad");
                (m.quad_form(a) - d).max(0.0)
            }
        };
        shell.max(set)
    }

    pub fn contains(&self, a: &CVector, tol: f64) -> bool {
        self.violation(a) <= tol
    }
}

/// The two sector-based sets for the angular interval `interval` (degrees):
/// `a^H C_bar a <= delta0` with `C_bar` integrated over the complement of the interval, and
/// `a^H C a >= delta1` with `C` integrated over the interval itself.
pub fn sector_sets(
    geometry: &ArrayGeometry,
    interval: (f64, f64),
    eta1: f64,
    eta2: f64,
    quad_points: usize,
    grid_points: usize,
) -> Result<(UncertaintySpec, UncertaintySpec)> {
    let c_bar = sector_matrix(geometry, interval, true, quad_points)?;
    let c = sector_matrix(geometry, interval, false, quad_points)?;
    let t = delta_thresholds(geometry, interval, &c_bar, &c, grid_points);
    let upper = UncertaintySpec::quad(c_bar, t.delta0, eta1, eta2, QuadSign::Upper)?;
    let lower = UncertaintySpec::quad(c, t.delta1, eta1, eta2, QuadSign::Lower)?;
    Ok((upper, lower))
}
