//! Monte Carlo experiment runner: simulates the scenario per run, builds every requested
//! beamformer on the same training data and scores it against the true covariance.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array_model::{
    gamma_from_min_eig, optimal_sinr, output_sinr, r_hat, sector_sets, simulate, Scenario, ScenarioFile, Simulation,
    UncertaintySpec,
};
use crate::baselines::{capon, mvdr_rab, socp_worst_case, BeamformerResult};
use crate::blmi::{BlmiOutcome, BlmiSettings};
use crate::hermlinalg::{vnorm, CVector, HermitianMatrix};
use crate::wcsinr_a1::{blmi_solve, inner_min_any, outcome_result};
use crate::wcsinr_quad::blmi_solve_quad;
use crate::{Error, Result};

mod validate;
pub use validate::{validate_suite, CheckResult};

pub const CSV_HEADER: [&str; 7] = ["method", "sweep_name", "sweep_value", "run", "output_sinr_db", "wall_time_ms", "status"];

/// SNR used by snapshot sweeps unless the scenario sets one.
pub const SNAPSHOT_SWEEP_SNR_DB: f64 = 23.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Capon,
    Socp,
    #[serde(rename = "mvdr_rab_1")]
    MvdrRab1,
    #[serde(rename = "mvdr_rab_2")]
    MvdrRab2,
    #[serde(rename = "mvdr_rab_3")]
    MvdrRab3,
    #[serde(rename = "qmi_1")]
    Qmi1,
    #[serde(rename = "qmi_2")]
    Qmi2,
    #[serde(rename = "qmi_3")]
    Qmi3,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Capon,
        Method::Socp,
        Method::MvdrRab1,
        Method::MvdrRab2,
        Method::MvdrRab3,
        Method::Qmi1,
        Method::Qmi2,
        Method::Qmi3,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Capon => "capon",
            Method::Socp => "socp",
            Method::MvdrRab1 => "mvdr_rab_1",
            Method::MvdrRab2 => "mvdr_rab_2",
            Method::MvdrRab3 => "mvdr_rab_3",
            Method::Qmi1 => "qmi_1",
            Method::Qmi2 => "qmi_2",
            Method::Qmi3 => "qmi_3",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`; expected one of {}", tags(&Method::ALL))))
    }
}

fn tags(methods: &[Method]) -> String {
    methods.iter().map(|m| m.tag()).collect::<Vec<_>>().join(", ")
}

#[derive(Clone, Debug, PartialEq)]
pub enum Sweep {
    SnrDb(Vec<f64>),
    Snapshots(Vec<usize>),
}

impl Sweep {
    pub fn name(&self) -> &'static str {
        match self {
            Sweep::SnrDb(_) => "snr_db",
            Sweep::Snapshots(_) => "snapshots",
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Sweep::SnrDb(v) => v.clone(),
            Sweep::Snapshots(v) => v.iter().map(|&t| t as f64).collect(),
        }
    }

    fn len(&self) -> usize {
        match self {
            Sweep::SnrDb(v) => v.len(),
            Sweep::Snapshots(v) => v.len(),
        }
    }

    fn apply(&self, k: usize, scenario: &mut Scenario) {
        match self {
            Sweep::SnrDb(v) => scenario.snr_db = v[k],
            Sweep::Snapshots(v) => scenario.snapshots = v[k],
        }
    }
}

/// Parameters of the uncertainty sets, shared by all runs.
#[derive(Clone, Debug, PartialEq)]
pub struct SetParams {
    /// Ball radius (squared) of the ball-and-shell set.
    pub eps: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// Angular sector of the quadratic-form sets, degrees.
    pub sector: (f64, f64),
    /// `sqrt(gamma) = gamma_factor * lambda_min(R_sample)`
    pub gamma_factor: f64,
    pub quad_points: usize,
    pub grid_points: usize,
}

impl SetParams {
    /// Defaults for an `n`-sensor array: `eps = 0.3 n`, `eta1 = eta2 = 0.2 n`, sector `[0, 10]`.
    pub fn defaults(n: usize) -> Self {
        let n = n as f64;
        Self {
            eps: 0.3 * n,
            eta1: 0.2 * n,
            eta2: 0.2 * n,
            sector: (0.0, 10.0),
            gamma_factor: 0.1,
            quad_points: 512,
            grid_points: 10_000,
        }
    }

    pub fn gamma_rule(&self) -> String {
        format!("sqrt_gamma = {} * lambda_min(R_sample)", self.gamma_factor)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    /// Template for every run; the swept field and the seed are overwritten per cell.
    pub scenario: Scenario,
    pub sweep: Sweep,
    pub methods: Vec<Method>,
    pub runs: usize,
    pub base_seed: u64,
    pub sets: SetParams,
    pub output: PathBuf,
    /// Record per-method wall time; when false the column is written as 0 so that repeated
    /// runs produce identical files.
    pub record_timing: bool,
    /// Worker threads; `None` uses all cores.
    pub threads: Option<usize>,
    pub blmi: BlmiSettings,
}

impl ExperimentConfig {
    /// Defaults at desk scale: 20 runs, SNR in {-10, 0, 10, 20, 30} dB, all methods.
    pub fn desk_scale(output: impl Into<PathBuf>) -> Self {
        let scenario = Scenario::default();
        let sets = SetParams::defaults(scenario.n());
        Self {
            scenario,
            sweep: Sweep::SnrDb(vec![-10.0, 0.0, 10.0, 20.0, 30.0]),
            methods: Method::ALL.to_vec(),
            runs: 20,
            base_seed: 0,
            sets,
            output: output.into(),
            record_timing: true,
            threads: None,
            blmi: BlmiSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.sweep.len() == 0 {
            return Err(Error::Config("sweep has no values".into()));
        }
        if let Sweep::Snapshots(v) = &self.sweep {
            if v.contains(&0) {
                return Err(Error::Config("snapshot counts must be positive".into()));
            }
        }
        if self.sets.sector.0 >= self.sets.sector.1 {
            return Err(Error::Config("sector must be an interval [lo, hi] with lo < hi".into()));
        }
        if !(self.sets.gamma_factor >= 0.0) {
            return Err(Error::Config("gamma_factor must be nonnegative".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        self.scenario.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        file.into_config()
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    snr_db: Option<Vec<f64>>,
    snapshots: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetsFile {
    eps: Option<f64>,
    eta1: Option<f64>,
    eta2: Option<f64>,
    sector: Option<(f64, f64)>,
    gamma_factor: Option<f64>,
    quad_points: Option<usize>,
    grid_points: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    runs: Option<usize>,
    base_seed: Option<u64>,
    methods: Option<Vec<String>>,
    output: Option<PathBuf>,
    record_timing: Option<bool>,
    threads: Option<usize>,
    #[serde(default)]
    scenario: ScenarioFile,
    #[serde(default)]
    sweep: SweepFile,
    #[serde(default)]
    sets: SetsFile,
}

impl ConfigFile {
    fn into_config(self) -> Result<ExperimentConfig> {
        let snr_given = self.scenario.snr_db.is_some();
        let mut scenario = self.scenario.into_scenario()?;
        let sweep = match (self.sweep.snr_db, self.sweep.snapshots) {
            (Some(_), Some(_)) => return Err(Error::Config("sweep takes either snr_db or snapshots, not both".into())),
            (Some(v), None) => Sweep::SnrDb(v),
            (None, Some(v)) => {
                if !snr_given {
                    scenario.snr_db = SNAPSHOT_SWEEP_SNR_DB;
                }
                Sweep::Snapshots(v)
            }
            (None, None) => Sweep::SnrDb(vec![-10.0, 0.0, 10.0, 20.0, 30.0]),
        };
        let methods = match self.methods {
            Some(list) => list.iter().map(|s| s.parse()).collect::<Result<Vec<Method>>>()?,
            None => Method::ALL.to_vec(),
        };
        let d = SetParams::defaults(scenario.n());
        let s = self.sets;
        let sets = SetParams {
            eps: s.eps.unwrap_or(d.eps),
            eta1: s.eta1.unwrap_or(d.eta1),
            eta2: s.eta2.unwrap_or(d.eta2),
            sector: s.sector.unwrap_or(d.sector),
            gamma_factor: s.gamma_factor.unwrap_or(d.gamma_factor),
            quad_points: s.quad_points.unwrap_or(d.quad_points),
            grid_points: s.grid_points.unwrap_or(d.grid_points),
        };
        let cfg = ExperimentConfig {
            scenario,
            sweep,
            methods,
            runs: self.runs.unwrap_or(20),
            base_seed: self.base_seed.unwrap_or(0),
            sets,
            output: self.output.unwrap_or_else(|| PathBuf::from("results.csv")),
            record_timing: self.record_timing.unwrap_or(true),
            threads: self.threads,
            blmi: BlmiSettings::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The three uncertainty sets used by the methods, built once per configuration.
#[derive(Clone, Debug)]
pub struct SetBundle {
    pub ball: UncertaintySpec,
    pub upper: UncertaintySpec,
    pub lower: UncertaintySpec,
}

impl SetBundle {
    pub fn new(scenario: &Scenario, params: &SetParams) -> Result<Self> {
        let ball = UncertaintySpec::ball(scenario.presumed_steering(), params.eps, params.eta1, params.eta2)?;
        let (upper, lower) =
            sector_sets(&scenario.geometry, params.sector, params.eta1, params.eta2, params.quad_points, params.grid_points)?;
        Ok(Self { ball, upper, lower })
    }

    /// The set a method is robust against; `None` for Capon.
    pub fn for_method(&self, method: Method) -> Option<&UncertaintySpec> {
        match method {
            Method::Capon => None,
            Method::Socp | Method::MvdrRab1 | Method::Qmi1 => Some(&self.ball),
            Method::MvdrRab2 | Method::Qmi2 => Some(&self.upper),
            Method::MvdrRab3 | Method::Qmi3 => Some(&self.lower),
        }
    }
}

/// Training data of one run and the covariance estimates derived from it.
#[derive(Clone, Debug)]
pub struct RunData {
    pub scenario: Scenario,
    pub sim: Simulation,
    pub gamma: f64,
    pub r_hat: HermitianMatrix,
}

impl RunData {
    pub fn new(scenario: Scenario, gamma_factor: f64) -> Result<Self> {
        let sim = simulate(&scenario)?;
        let gamma = gamma_from_min_eig(&sim.r_sample, gamma_factor)?;
        let r_hat = r_hat(&sim.r_sample, gamma)?;
        Ok(Self { scenario, sim, gamma, r_hat })
    }

    pub fn output_sinr(&self, w: &CVector) -> Result<f64> {
        output_sinr(w, self.scenario.signal_power(), &self.sim.a_true, &self.sim.r_inplus_noise)
    }

    pub fn optimal_sinr(&self) -> Result<f64> {
        optimal_sinr(self.scenario.signal_power(), &self.sim.a_true, &self.sim.r_inplus_noise)
    }
}

/// Builds one beamformer. Capon and MVDR-RAB use the sample covariance; the worst-case
/// designs use the loaded estimate `R_hat`.
pub fn build_beamformer(method: Method, data: &RunData, sets: &SetBundle, blmi: &BlmiSettings) -> Result<BeamformerResult> {
    build_beamformer_detailed(method, data, sets, blmi).map(|(res, _)| res)
}

/// [`build_beamformer`] that also returns the restriction-loop outcome of the QMI methods.
pub fn build_beamformer_detailed(
    method: Method,
    data: &RunData,
    sets: &SetBundle,
    blmi: &BlmiSettings,
) -> Result<(BeamformerResult, Option<BlmiOutcome>)> {
    let spec = sets.for_method(method);
    let mut outcome = None;
    let mut res = match method {
        Method::Capon => capon(&data.sim.r_sample, &data.scenario.presumed_steering())?,
        Method::Socp => {
            let eps = match spec {
                Some(UncertaintySpec::Ball { eps, .. }) => *eps,
                _ => unreachable!("socp is paired with the ball set"),
            };
            socp_worst_case(&data.r_hat, &data.scenario.presumed_steering(), eps)?
        }
        Method::MvdrRab1 | Method::MvdrRab2 | Method::MvdrRab3 => mvdr_rab(&data.sim.r_sample, spec.expect("set"))?,
        Method::Qmi1 | Method::Qmi2 | Method::Qmi3 => {
            let spec = spec.expect("set");
            let out = if method == Method::Qmi1 {
                blmi_solve(&data.r_hat, spec, blmi)?
            } else {
                blmi_solve_quad(&data.r_hat, spec, blmi)?
            };
            let res = outcome_result(method.tag(), &data.r_hat, &out);
            outcome = Some(out);
            res
        }
    };
    res.method = method.tag().to_string();
    Ok((res, outcome))
}

/// `min_a |w^H a|^2 / (w^H R_hat w)` over the set, with the inner minimum from its tight
/// relaxation.
pub fn evaluate_worst_case_sinr(w: &CVector, spec: &UncertaintySpec, r_hat: &HermitianMatrix) -> Result<f64> {
    if vnorm(w) == 0.0 {
        return Err(Error::Domain("zero weight vector".into()));
    }
    if r_hat.dim() != w.len() {
        return Err(Error::Dimension(format!("R_hat is {0}x{0}, w has {1} entries", r_hat.dim(), w.len())));
    }
    // scale-free: normalize first so the inner relaxation sees a unit vector
    let u = w / crate::hermlinalg::C64::new(vnorm(w), 0.0);
    let inner = inner_min_any(&u, spec)?;
    Ok(inner.value / r_hat.quad_form(&u))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub sweep_name: &'static str,
    pub sweep_value: f64,
    pub run: usize,
    /// NaN for a failed cell.
    pub output_sinr_db: f64,
    pub wall_time_ms: f64,
    /// `ok`, `nonconverged` (restriction loop hit its limit, the best iterate is scored) or
    /// `failed`.
    pub status: String,
    /// `sigma_s^2 a^H R_{i+n}^{-1} a` of the run, dB.
    pub optimal_sinr_db: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub csv_path: PathBuf,
    pub meta_path: PathBuf,
}

impl ExperimentOutput {
    /// Mean output SINR per (method, sweep value) over successful rows.
    pub fn means(&self) -> BTreeMap<(Method, u64), f64> {
        let mut acc: BTreeMap<(Method, u64), (f64, usize)> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.output_sinr_db.is_finite()) {
            let e = acc.entry((r.method, r.sweep_value.to_bits())).or_insert((0.0, 0));
            e.0 += r.output_sinr_db;
            e.1 += 1;
        }
        acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect()
    }

    pub fn mean(&self, method: Method, sweep_value: f64) -> Option<f64> {
        self.means().get(&(method, sweep_value.to_bits())).copied()
    }
}

fn run_cell(cfg: &ExperimentConfig, sets: &SetBundle, k: usize, run: usize) -> Vec<ResultRow> {
    let mut scenario = cfg.scenario.clone();
    cfg.sweep.apply(k, &mut scenario);
    scenario.seed = cfg.base_seed.wrapping_add(run as u64);
    let sweep_value = cfg.sweep.values()[k];
    let row = |method: Method, sinr: f64, ms: f64, status: &str, opt: f64| ResultRow {
        method,
        sweep_name: cfg.sweep.name(),
        sweep_value,
        run,
        output_sinr_db: sinr,
        wall_time_ms: if cfg.record_timing { ms } else { 0.0 },
        status: status.to_string(),
        optimal_sinr_db: opt,
    };
    let data = match RunData::new(scenario, cfg.sets.gamma_factor) {
        Ok(d) => d,
        Err(e) => {
            log::warn!("run {run} at {}={sweep_value}: simulation failed: {e}", cfg.sweep.name());
            return cfg.methods.iter().map(|&m| row(m, f64::NAN, 0.0, "failed", f64::NAN)).collect();
        }
    };
    let opt = data.optimal_sinr().unwrap_or(f64::NAN);
    cfg.methods
        .iter()
        .map(|&m| {
            let t = Instant::now();
            let built = build_beamformer(m, &data, sets, &cfg.blmi).and_then(|res| data.output_sinr(&res.w).map(|s| (res, s)));
            let ms = t.elapsed().as_secs_f64() * 1e3;
            match built {
                Ok((res, sinr)) if sinr.is_finite() => {
                    let nonconv = res.diagnostics.get("status").is_some_and(|&s| s == 3.0);
                    row(m, sinr, ms, if nonconv { "nonconverged" } else { "ok" }, opt)
                }
                Ok((_, sinr)) => {
                    log::warn!("{m} run {run} at {}={sweep_value}: non-finite SINR {sinr}", cfg.sweep.name());
                    row(m, f64::NAN, ms, "failed", opt)
                }
                Err(e) => {
                    log::warn!("{m} run {run} at {}={sweep_value}: {e}", cfg.sweep.name());
                    row(m, f64::NAN, ms, "failed", opt)
                }
            }
        })
        .collect()
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

fn write_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    // write to a sibling temporary and rename, so a reader never sees a partial file
    let tmp = path.with_extension("csv.partial");
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        w.write_record(CSV_HEADER)?;
        for r in rows {
            w.write_record([
                r.method.tag().to_string(),
                r.sweep_name.to_string(),
                format_value(r.sweep_value),
                r.run.to_string(),
                format_value(r.output_sinr_db),
                format!("{:.3}", r.wall_time_ms),
                r.status.clone(),
            ])?;
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Path of the metadata file written next to `csv_path`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn write_meta(cfg: &ExperimentConfig, sets: &SetBundle, rows: &[ResultRow], path: &Path) -> Result<()> {
    let thresholds = |s: &UncertaintySpec| match s {
        UncertaintySpec::Quad { delta, .. } => *delta,
        _ => f64::NAN,
    };
    let mut opt: BTreeMap<String, f64> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.method == cfg.methods[0]) {
        opt.insert(format!("{}={} run={}", r.sweep_name, r.sweep_value, r.run), r.optimal_sinr_db);
    }
    let meta = serde_json::json!({
        "generator": concat!("rabf ", env!("CARGO_PKG_VERSION")),
        "metric": "output SINR in dB against the true interference-plus-noise covariance and the distorted steering vector",
        "gamma_rule": cfg.sets.gamma_rule(),
        "sweep": cfg.sweep.name(),
        "sweep_values": cfg.sweep.values(),
        "methods": cfg.methods.iter().map(|m| m.tag()).collect::<Vec<_>>(),
        "runs": cfg.runs,
        "base_seed": cfg.base_seed,
        "seed_rule": "scenario seed = base_seed + run index; phase distortions redrawn per run",
        "scenario": {
            "n_sensors": cfg.scenario.n(),
            "positions": cfg.scenario.geometry.positions(),
            "soi_angle_true": cfg.scenario.soi_angle_true,
            "soi_angle_presumed": cfg.scenario.soi_angle_presumed,
            "interferers": cfg.scenario.interferers,
            "snr_db": cfg.scenario.snr_db,
            "snapshots": cfg.scenario.snapshots,
            "phase_sigma": cfg.scenario.phase_sigma,
        },
        "sets": {
            "eps": cfg.sets.eps,
            "eta1": cfg.sets.eta1,
            "eta2": cfg.sets.eta2,
            "sector_deg": [cfg.sets.sector.0, cfg.sets.sector.1],
            "upper_threshold": thresholds(&sets.upper),
            "lower_threshold": thresholds(&sets.lower),
            "quad_points": cfg.sets.quad_points,
            "grid_points": cfg.sets.grid_points,
        },
        "record_timing": cfg.record_timing,
        "optimal_sinr_db": opt,
    });
    let mut f = std::fs::File::create(path)?;
    f.write_all(serde_json::to_string_pretty(&meta).map_err(|e| Error::Schema(e.to_string()))?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Runs every (sweep value, run) cell, writes the CSV and its metadata file, and returns the rows.
/// Rows are sorted by method, sweep value and run regardless of scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let sets = SetBundle::new(&cfg.scenario, &cfg.sets)?;
    let cells: Vec<(usize, usize)> = (0..cfg.sweep.len()).flat_map(|k| (0..cfg.runs).map(move |r| (k, r))).collect();
    let work = || cells.par_iter().flat_map_iter(|&(k, r)| run_cell(cfg, &sets, k, r)).collect::<Vec<_>>();
    let mut rows = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work),
        None => work(),
    };
    let order: BTreeMap<Method, usize> = cfg.methods.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let sweep_order: Vec<u64> = cfg.sweep.values().iter().map(|v| v.to_bits()).collect();
    let pos = |v: f64| sweep_order.iter().position(|&b| b == v.to_bits()).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| (order[&r.method], pos(r.sweep_value), r.run));
    if let Some(dir) = cfg.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_csv(&cfg.output, &rows)?;
    let meta = meta_path(&cfg.output);
    write_meta(cfg, &sets, &rows, &meta)?;
    Ok(ExperimentOutput { rows, csv_path: cfg.output.clone(), meta_path: meta })
}

/// Reads the rows of an experiment CSV, checking the header.
pub fn read_rows(csv_path: &Path) -> Result<Vec<BTreeMap<String, String>>> {
    let mut rd = csv::Reader::from_path(csv_path)?;
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    for col in CSV_HEADER {
        if !header.iter().any(|h| h == col) {
            return Err(Error::Schema(format!("{}: missing column `{col}`", csv_path.display())));
        }
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        out.push(header.iter().cloned().zip(rec.iter().map(str::to_string)).collect());
    }
    Ok(out)
}

/// Writes a standalone matplotlib script next to `csv_path` that plots mean output SINR against
/// the swept quantity, one line per method. Returns the script path.
pub fn emit_plot_script(csv_path: &Path) -> Result<PathBuf> {
    let rows = read_rows(csv_path)?;
    if rows.is_empty() {
        return Err(Error::Schema(format!("{}: no data rows", csv_path.display())));
    }
    let mut methods: Vec<String> = Vec::new();
    let mut sweeps: Vec<String> = Vec::new();
    for r in &rows {
        if !methods.contains(&r["method"]) {
            methods.push(r["method"].clone());
        }
        if !sweeps.contains(&r["sweep_name"]) {
            sweeps.push(r["sweep_name"].clone());
        }
    }
    let csv_name = csv_path.file_name().and_then(|s| s.to_str()).unwrap_or("results.csv").to_string();
    let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    let script = csv_path.with_file_name(format!("{stem}_plot.py"));
    let py_list = |v: &[String]| format!("[{}]", v.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(", "));
    let text = format!(
        r#"#!/usr/bin/env python3
"""Mean output SINR per method from {csv_name}."""
import csv
import math
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

CSV = os.path.join(os.path.dirname(os.path.abspath(__file__)), {csv_name:?})
METHODS = {methods}
SWEEPS = {sweeps}
LABELS = {{"snr_db": "SNR (dB)", "snapshots": "Number of snapshots"}}


def main():
    sums = {{}}
    with open(CSV, newline="") as f:
        for row in csv.DictReader(f):
            v = float(row["output_sinr_db"])
            if not math.isfinite(v):
                continue
            key = (row["sweep_name"], row["method"], float(row["sweep_value"]))
            s, c = sums.get(key, (0.0, 0))
            sums[key] = (s + v, c + 1)
    for sweep in SWEEPS:
        fig, ax = plt.subplots()
        for method in METHODS:
            pts = sorted((x, s / c) for (sw, m, x), (s, c) in sums.items() if sw == sweep and m == method)
            if pts:
                ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=method)
        ax.set_xlabel(LABELS.get(sweep, sweep))
        ax.set_ylabel("Output SINR (dB)")
        ax.grid(True)
        ax.legend()
        out = os.path.splitext(CSV)[0] + "_" + sweep + ".png"
        fig.savefig(out, dpi=120)
        print(out)


if __name__ == "__main__":
    sys.exit(main())
"#,
        methods = py_list(&methods),
        sweeps = py_list(&sweeps),
    );
    std::fs::write(&script, text)?;
    Ok(script)
}

/// Writes restriction-loop diagnostics: iteration, objective, lambda_1, lambda_2, gap, doublings.
pub fn write_blmi_diagnostics(path: &Path, history: &[crate::blmi::BlmiIteration]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "objective", "lambda1", "lambda2", "gap", "doublings"])?;
    for h in history {
        w.write_record([
            h.iteration.to_string(),
            format!("{}", h.objective),
            format!("{}", h.lambda1),
            format!("{}", h.lambda2),
            format!("{}", h.gap),
            h.doublings.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert!("qmi_4".parse::<Method>().is_err());
    }

    #[test]
    fn config_defaults_and_snapshot_snr() {
        let cfg = ExperimentConfig::from_toml_str("[sweep]\nsnapshots = [20, 50]\n").unwrap();
        assert_eq!(cfg.scenario.snr_db, SNAPSHOT_SWEEP_SNR_DB);
        assert_eq!(cfg.runs, 20);
        assert!((cfg.sets.eps - 3.6).abs() < 1e-12);
        let cfg = ExperimentConfig::from_toml_str("[scenario]\nsnr_db = 5.0\n[sweep]\nsnapshots = [20]\n").unwrap();
        assert_eq!(cfg.scenario.snr_db, 5.0);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(ExperimentConfig::from_toml_str("runs = 0"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml_str("methods = [\"nope\"]"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml_str("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(
            ExperimentConfig::from_toml_str("[sweep]\nsnr_db = [1.0]\nsnapshots = [3]"),
            Err(Error::Config(_))
        ));
    }
}
