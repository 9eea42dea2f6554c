//! Experiment configuration: JSON schema, validation and plant assembly.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::grid::{build_ieee14, GridModel, SensorInfo};
use super::ingest::{to_jordan, Ingested};
use crate::error::{Error, Result};
use crate::estimator::GainPolicy;
use crate::linalg::{self, to_complex, CMatrix, CVector, C64};
use crate::system::SystemModel;
use crate::threat::{AttackConfig, AttackMode};

/// A matrix or vector entry: a number or `{re, im}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex { re: f64, im: f64 },
}

impl Entry {
    pub fn value(self) -> C64 {
        match self {
            Entry::Real(v) => C64::new(v, 0.0),
            Entry::Complex { re, im } => C64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub buffer: BufferConfig,
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    /// `A` already in Jordan form.
    Jordan { a: Vec<Vec<Entry>>, c: Vec<Vec<Entry>> },
    /// Real `A`, diagonalized on load.
    Real { a: Vec<Vec<f64>>, c: Vec<Vec<f64>> },
    Ieee14 {
        #[serde(default)]
        grid: GridParams,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridParams {
    pub inertia: f64,
    pub damping: f64,
    pub susceptance: f64,
    /// Per-bus overrides keyed by 1-based bus number.
    pub inertia_by_bus: BTreeMap<usize, f64>,
    pub damping_by_bus: BTreeMap<usize, f64>,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            inertia: 1.0,
            damping: 0.8,
            susceptance: 1.0,
            inertia_by_bus: BTreeMap::new(),
            damping_by_bus: BTreeMap::new(),
        }
    }
}

impl GridParams {
    pub fn grid(&self) -> GridModel {
        let mut g = GridModel::ieee14();
        g.inertia = vec![self.inertia; g.buses];
        g.damping = vec![self.damping; g.buses];
        for (&b, &v) in &self.inertia_by_bus {
            if (1..=g.buses).contains(&b) {
                g.inertia[b - 1] = v;
            }
        }
        for (&b, &v) in &self.damping_by_bus {
            if (1..=g.buses).contains(&b) {
                g.damping[b - 1] = v;
            }
        }
        for line in &mut g.lines {
            line.2 = self.susceptance;
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default = "d_interval_min")]
    pub interval_min: f64,
    #[serde(default = "d_interval_max")]
    pub interval_max: f64,
    #[serde(default = "d_success")]
    pub success_prob: f64,
    pub t_max: f64,
    /// Explicit sample times replacing the renewal clock.
    #[serde(default)]
    pub stamps: Option<Vec<f64>>,
}

fn d_interval_min() -> f64 {
    0.001
}
fn d_interval_max() -> f64 {
    0.05
}
fn d_success() -> f64 {
    0.6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// `Q = q_scale·I` unless `q` is given.
    pub q_scale: f64,
    pub q: Option<Vec<Vec<f64>>>,
    /// `R_i = r_scale` unless `r` lists per-sensor variances.
    pub r_scale: f64,
    pub r: Option<Vec<f64>>,
    /// Defaults to the largest `R_i`.
    pub r_bar: Option<f64>,
    /// Mean of the initial state in the configured coordinates.
    pub x0_mean: Option<Vec<Entry>>,
    /// `P_0 = p0_scale·I` in the configured coordinates.
    pub p0_scale: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { q_scale: 0.001, q: None, r_scale: 0.01, r: None, r_bar: None, x0_mean: None, p0_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub rho_bar: f64,
    pub policy: GainPolicy,
    /// Overrides the grid estimate of `l̄`.
    pub l_bar: Option<f64>,
    pub l_bar_grid: usize,
    /// Initial estimate in the configured coordinates; defaults to the
    /// initial-state mean.
    pub initial_estimate: Option<Vec<Entry>>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { rho_bar: 0.6, policy: GainPolicy::default(), l_bar: None, l_bar_grid: 200, initial_estimate: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSection {
    pub p: usize,
    /// Keyed by 1-based sensor number.
    pub sensors: BTreeMap<usize, AttackMode>,
}

impl AttackSection {
    pub fn to_attack_config(&self) -> AttackConfig {
        AttackConfig {
            p: self.p,
            sensors: self.sensors.iter().map(|(&i, m)| (i.wrapping_sub(1), m.clone())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BufferConfig {
    pub window: f64,
    /// Transmission delays are `U[0, max_delay]`.
    pub max_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_true")]
    pub record_locals: bool,
    /// Verify `s`-sparse observability before running.
    #[serde(default)]
    pub check_sparsity: Option<usize>,
}

fn d_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let path = if path.is_empty() || path == "." { "config".to_string() } else { path };
            Error::config(path, inner.to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), format!("cannot read: {e}")))?;
        Self::from_json_str(&text)
    }

    /// Range checks that need no model.
    pub fn validate(&self) -> Result<()> {
        let s = &self.sampling;
        if !(s.t_max > 0.0 && s.t_max.is_finite()) {
            return Err(Error::config("sampling.t_max", format!("must be positive, got {}", s.t_max)));
        }
        if !(0.0..=1.0).contains(&s.success_prob) {
            return Err(Error::config("sampling.success_prob", format!("must lie in [0, 1], got {}", s.success_prob)));
        }
        match &s.stamps {
            Some(stamps) => {
                if stamps.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                    return Err(Error::config("sampling.stamps", "stamps must be positive and finite"));
                }
                if stamps.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::config("sampling.stamps", "stamps must be strictly increasing"));
                }
            }
            None => {
                if !(s.interval_min > 0.0) {
                    return Err(Error::config("sampling.interval_min", format!("must be positive, got {}", s.interval_min)));
                }
                if !(s.interval_max >= s.interval_min && s.interval_max <= s.t_max) {
                    return Err(Error::config(
                        "sampling.interval_max",
                        format!("interval range [{}, {}] must lie in (0, T_max = {}]", s.interval_min, s.interval_max, s.t_max),
                    ));
                }
            }
        }
        let n = &self.noise;
        if !(n.q_scale >= 0.0 && n.q_scale.is_finite()) {
            return Err(Error::config("noise.q_scale", format!("must be nonnegative, got {}", n.q_scale)));
        }
        if !(n.r_scale >= 0.0 && n.r_scale.is_finite()) {
            return Err(Error::config("noise.r_scale", format!("must be nonnegative, got {}", n.r_scale)));
        }
        if let Some(r) = &n.r {
            if let Some(k) = r.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::config(format!("noise.r[{k}]"), "variances must be nonnegative"));
            }
        }
        if let Some(rb) = n.r_bar {
            if !(rb >= 0.0 && rb.is_finite()) {
                return Err(Error::config("noise.r_bar", format!("must be nonnegative, got {rb}")));
            }
        }
        if !(n.p0_scale >= 0.0 && n.p0_scale.is_finite()) {
            return Err(Error::config("noise.p0_scale", format!("must be nonnegative, got {}", n.p0_scale)));
        }
        let e = &self.estimator;
        if !(e.rho_bar > 0.0 && e.rho_bar < 1.0) {
            return Err(Error::config("estimator.rho_bar", format!("must lie in (0, 1), got {}", e.rho_bar)));
        }
        match e.policy {
            GainPolicy::Uniform { scale } | GainPolicy::Radial { scale } if !(0.0..=1.0).contains(&scale) => {
                return Err(Error::config("estimator.policy.scale", format!("must lie in [0, 1], got {scale}")));
            }
            GainPolicy::MinNorm { points } if points < 2 => {
                return Err(Error::config("estimator.policy.points", "needs at least 2 points"));
            }
            _ => {}
        }
        if let Some(l) = e.l_bar {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::config("estimator.l_bar", format!("must be positive, got {l}")));
            }
        }
        if e.l_bar_grid == 0 {
            return Err(Error::config("estimator.l_bar_grid", "must be at least 1"));
        }
        let b = &self.buffer;
        if !(b.window >= 0.0 && b.window.is_finite()) {
            return Err(Error::config("buffer.window", format!("must be nonnegative, got {}", b.window)));
        }
        if !(b.max_delay >= 0.0 && b.max_delay.is_finite()) {
            return Err(Error::config("buffer.max_delay", format!("must be nonnegative, got {}", b.max_delay)));
        }
        if !(self.run.horizon > 0.0 && self.run.horizon.is_finite()) {
            return Err(Error::config("run.horizon", format!("must be positive, got {}", self.run.horizon)));
        }
        if self.attack.sensors.keys().any(|&i| i == 0) {
            return Err(Error::config("attack.sensors", "sensor numbers are 1-based"));
        }
        Ok(())
    }

    /// Builds the plant in estimator coordinates.
    pub fn build_plant(&self) -> Result<Plant> {
        let t_max = self.sampling.t_max;
        let (a_real, c_real, roster, jordan) = match &self.system {
            SystemConfig::Jordan { a, c } => {
                let a = complex_matrix(a, "system.a")?;
                let c = complex_matrix(c, "system.c")?;
                (None, None, None, Some((a, c)))
            }
            SystemConfig::Real { a, c } => (Some(real_matrix(a, "system.a")?), Some(real_matrix(c, "system.c")?), None, None),
            SystemConfig::Ieee14 { grid } => {
                let (a, c, roster) = build_ieee14(&grid.grid())?;
                (Some(a), Some(c), Some(roster), None)
            }
        };
        let n = jordan.as_ref().map(|(a, _)| a.nrows()).or(a_real.as_ref().map(|a| a.nrows())).unwrap();
        let m = jordan.as_ref().map(|(_, c)| c.nrows()).or(c_real.as_ref().map(|c| c.nrows())).unwrap();
        check_shape(n, m, &jordan, &a_real, &c_real)?;

        let q_real = match &self.noise.q {
            Some(q) => {
                let q = real_matrix(q, "noise.q")?;
                if q.shape() != (n, n) {
                    return Err(Error::config("noise.q", format!("expected {n}x{n}, got {}x{}", q.nrows(), q.ncols())));
                }
                q
            }
            None => DMatrix::identity(n, n) * self.noise.q_scale,
        };
        let r = match &self.noise.r {
            Some(r) if r.len() != m => {
                return Err(Error::config("noise.r", format!("expected {m} variances, got {}", r.len())));
            }
            Some(r) => r.clone(),
            None => vec![self.noise.r_scale; m],
        };
        let r_max = r.iter().cloned().fold(0.0, f64::max);
        let r_bar = self.noise.r_bar.unwrap_or(r_max);
        if r_max > r_bar {
            return Err(Error::config("noise.r_bar", format!("r_bar = {r_bar} is below the largest variance {r_max}")));
        }
        let x0 = match &self.noise.x0_mean {
            Some(v) => entries_vector(v, n, "noise.x0_mean")?,
            None => CVector::zeros(n),
        };
        let guess = match &self.estimator.initial_estimate {
            Some(v) => entries_vector(v, n, "estimator.initial_estimate")?,
            None => x0.clone(),
        };

        let (model, ingested) = match jordan {
            Some((a, c)) => {
                let q = to_complex(&q_real);
                let model = SystemModel::unchecked(a, c, q, r_bar, t_max)?;
                let violations = model.validate_jordan();
                if !violations.is_empty() {
                    return Err(Error::Model(violations.join("; ")));
                }
                (model, None)
            }
            None => {
                let ing = to_jordan(a_real.as_ref().unwrap(), c_real.as_ref().unwrap())?;
                let g = linalg::psd_factor(&to_complex(&q_real), 1e-12)?;
                let factor = &ing.v_inv * g;
                let model = SystemModel::with_noise_factor(ing.a.clone(), ing.c.clone(), factor, r_bar, t_max)?;
                (model, Some(ing))
            }
        };
        let root = C64::new(self.noise.p0_scale.sqrt(), 0.0);
        let (x0_modal, guess_modal, p0_factor) = match &ingested {
            Some(ing) => (ing.to_modal(&x0), ing.to_modal(&guess), &ing.v_inv * root),
            None => (x0, guess, CMatrix::identity(n, n) * root),
        };
        let sigma_0 = linalg::hermitian_spectral_radius(&(&p0_factor * p0_factor.adjoint()));
        Ok(Plant { model, ingested, roster, r, x0_mean: x0_modal, initial_estimate: guess_modal, p0_factor, sigma_0 })
    }
}

fn check_shape(
    n: usize,
    m: usize,
    jordan: &Option<(CMatrix, CMatrix)>,
    a_real: &Option<DMatrix<f64>>,
    c_real: &Option<DMatrix<f64>>,
) -> Result<()> {
    let (ar, ac, cc) = match (jordan, a_real, c_real) {
        (Some((a, c)), _, _) => (a.nrows(), a.ncols(), c.ncols()),
        (None, Some(a), Some(c)) => (a.nrows(), a.ncols(), c.ncols()),
        _ => unreachable!(),
    };
    if n == 0 || ar != ac {
        return Err(Error::config("system.a", format!("must be square and nonempty, got {ar}x{ac}")));
    }
    if cc != n || m == 0 {
        return Err(Error::config("system.c", format!("expected rows of length {n}, got {m}x{cc}")));
    }
    Ok(())
}

fn rows_len<T>(rows: &[Vec<T>], path: &str) -> Result<usize> {
    let width = rows.first().map_or(0, |r| r.len());
    if let Some(k) = rows.iter().position(|r| r.len() != width) {
        return Err(Error::config(format!("{path}[{k}]"), format!("row has {} entries, expected {width}", rows[k].len())));
    }
    Ok(width)
}

fn complex_matrix(rows: &[Vec<Entry>], path: &str) -> Result<CMatrix> {
    let w = rows_len(rows, path)?;
    let m = CMatrix::from_fn(rows.len(), w, |r, c| rows[r][c].value());
    if !linalg::is_finite(&m) {
        return Err(Error::config(path, "entries must be finite"));
    }
    Ok(m)
}

fn real_matrix(rows: &[Vec<f64>], path: &str) -> Result<DMatrix<f64>> {
    let w = rows_len(rows, path)?;
    let m = DMatrix::from_fn(rows.len(), w, |r, c| rows[r][c]);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::config(path, "entries must be finite"));
    }
    Ok(m)
}

fn entries_vector(v: &[Entry], n: usize, path: &str) -> Result<CVector> {
    if v.len() != n {
        return Err(Error::config(path, format!("expected {n} entries, got {}", v.len())));
    }
    Ok(CVector::from_iterator(n, v.iter().map(|e| e.value())))
}

/// Plant in estimator coordinates plus everything needed to simulate it.
#[derive(Debug, Clone)]
pub struct Plant {
    pub model: SystemModel,
    /// Present when the configured system was diagonalized on load.
    pub ingested: Option<Ingested>,
    pub roster: Option<Vec<SensorInfo>>,
    /// Measurement variance per sensor.
    pub r: Vec<f64>,
    pub x0_mean: CVector,
    pub initial_estimate: CVector,
    /// Maps a real standard normal vector in configured coordinates to the
    /// initial deviation in estimator coordinates.
    pub p0_factor: CMatrix,
    pub sigma_0: f64,
}

impl Plant {
    /// States in reporting coordinates (`Re(V·z)` or `Re(z)`).
    pub fn report(&self, z: &CVector) -> Vec<f64> {
        match &self.ingested {
            Some(ing) => ing.to_original(z),
            None => z.iter().map(|w| w.re).collect(),
        }
    }
}
