//! Local observers on each sensor's observable subspace.
//!
//! Each sensor keeps `η_i`, predicts it at every fused stamp and corrects it
//! when its own measurement arrives, with a gain designed against the
//! transition accumulated since the sensor's previous measurement.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64, ZERO};
use crate::observability::{SensorDecomposition, SensorSubspace};
use crate::system::SystemModel;

/// Condition number of the observability matrix above which placement is
/// refused.
pub const MAX_PLACEMENT_COND: f64 = 1e12;

/// Width of the gap buckets used to memoize gains, in seconds.
pub const GAP_BUCKET: f64 = 1e-6;

/// Where closed-loop eigenvalues are placed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainPolicy {
    /// Every eigenvalue at `scale·ρ̄` on the positive real axis.
    Uniform {
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// Every eigenvalue at the origin.
    Deadbeat,
    /// Modes with `|a| > ρ̄` are pulled radially to `scale·ρ̄·a/|a|`; modes
    /// already inside the disc keep their eigenvalue and receive no gain.
    Radial {
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// Uniform placement at the magnitude on an `points`-point grid over
    /// `[0, ρ̄]` that gives the smallest `‖L‖²`.
    MinNorm {
        #[serde(default = "default_grid_points")]
        points: usize,
    },
}

fn default_scale() -> f64 {
    0.9
}

fn default_grid_points() -> usize {
    21
}

impl Default for GainPolicy {
    fn default() -> Self {
        GainPolicy::Uniform { scale: default_scale() }
    }
}

/// A synthesized gain and the closed-loop quantities it achieves.
#[derive(Debug, Clone, PartialEq)]
pub struct GainDesign {
    pub gain: CVector,
    /// `ρ((I − L·C̃)·Ã)`.
    pub radius: f64,
    /// `‖L‖²`.
    pub norm_sq: f64,
}

/// Gain `L` for the pair `(Ã, C̃)` so that `ρ((I − L·C̃)·Ã) ≤ ρ̄`.
///
/// Placement acts on `(Ã, C̃·Ã)` in observable canonical form: with `O` the
/// observability matrix of that pair and `Ǒ` the one of the companion form,
/// `L = O⁻¹·Ǒ·(r − c)` where `c` and `r` are the open- and closed-loop
/// characteristic coefficients. Under [`GainPolicy::Radial`] the placement
/// runs only on the modes that need to move.
pub fn synthesize_gain(a: &CMatrix, c_tilde: &CMatrix, rho_bar: f64, policy: GainPolicy) -> Result<GainDesign> {
    let n = a.nrows();
    if a.ncols() != n || c_tilde.shape() != (1, n) {
        return Err(Error::Dimension(format!(
            "gain synthesis on {}x{} transition with {}x{} output row",
            a.nrows(),
            a.ncols(),
            c_tilde.nrows(),
            c_tilde.ncols()
        )));
    }
    if !(rho_bar > 0.0 && rho_bar < 1.0) {
        return Err(Error::Model(format!("rho_bar must lie in (0, 1), got {rho_bar}")));
    }
    if n == 0 {
        return Ok(GainDesign { gain: CVector::zeros(0), radius: 0.0, norm_sq: 0.0 });
    }
    let open = spectrum_of(a)?;
    let c_out = c_tilde * a;
    let gain = match policy {
        GainPolicy::Uniform { scale } => {
            check_scale(scale)?;
            place(a, &c_out, &vec![C64::new(scale * rho_bar, 0.0); n], &open)?
        }
        GainPolicy::Deadbeat => place(a, &c_out, &vec![ZERO; n], &open)?,
        GainPolicy::Radial { scale } => {
            check_scale(scale)?;
            radial_gain(a, &c_out, &open, rho_bar, scale)?
        }
        GainPolicy::MinNorm { points } => {
            if points < 2 {
                return Err(Error::Model("minimum-norm grid needs at least 2 points".into()));
            }
            let mut best: Option<(f64, CVector)> = None;
            for k in 0..points {
                let mag = rho_bar * k as f64 / (points - 1) as f64;
                let Ok(g) = place(a, &c_out, &vec![C64::new(mag, 0.0); n], &open) else { continue };
                let radius = closed_loop_radius(a, &g, c_tilde)?;
                let norm_sq = norm_sq(&g);
                if radius <= rho_bar + 1e-9 && best.as_ref().is_none_or(|b| norm_sq < b.0) {
                    best = Some((norm_sq, g));
                }
            }
            best.ok_or_else(|| Error::Numerical("no grid magnitude produced a contracting gain".into()))?.1
        }
    };
    let radius = closed_loop_radius(a, &gain, c_tilde)?;
    if !radius.is_finite() || gain.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("observer gain"));
    }
    Ok(GainDesign { norm_sq: norm_sq(&gain), gain, radius })
}

fn check_scale(scale: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&scale) {
        return Err(Error::Model(format!("pole scale must lie in [0, 1], got {scale}")));
    }
    Ok(())
}

fn norm_sq(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Eigenvalues, read off the diagonal when the matrix is upper triangular.
fn spectrum_of(a: &CMatrix) -> Result<Vec<C64>> {
    let n = a.nrows();
    let triangular = (0..n).all(|i| (0..i).all(|j| a[(i, j)] == ZERO));
    if triangular {
        Ok((0..n).map(|i| a[(i, i)]).collect())
    } else {
        linalg::eigenvalues(a)
    }
}

/// `(I − L·C̃)·Ã`, formed as the rank-one update `Ã − L·(C̃·Ã)`.
pub fn closed_loop(a: &CMatrix, gain: &CVector, c_tilde: &CMatrix) -> CMatrix {
    a - gain * (c_tilde * a)
}

pub fn closed_loop_radius(a: &CMatrix, gain: &CVector, c_tilde: &CMatrix) -> Result<f64> {
    linalg::spectral_radius(&closed_loop(a, gain, c_tilde))
}

/// Canonical-form placement of `eig(A − L·c) = targets`.
fn place(a: &CMatrix, c_out: &CMatrix, targets: &[C64], open: &[C64]) -> Result<CVector> {
    let n = a.nrows();
    let mut o = CMatrix::zeros(n, n);
    let mut row = c_out.clone();
    for k in 0..n {
        o.set_row(k, &row.row(0));
        if k + 1 < n {
            row = &row * a;
        }
    }
    let cond = linalg::condition_number(&o);
    if !(cond <= MAX_PLACEMENT_COND) {
        return Err(Error::NumericallyUnobservable { gap: f64::NAN, cond });
    }
    let c = linalg::monic_from_roots(open);
    let r = linalg::monic_from_roots(targets);
    let o_check = companion_observability(&c);
    let diff = CVector::from_iterator(n, r.iter().zip(&c).map(|(r, c)| r - c));
    let lu = o.lu();
    lu.solve(&(o_check * diff)).ok_or(Error::NumericallyUnobservable { gap: f64::NAN, cond })
}

/// Observability matrix of the companion pair with last column `−c` and
/// output row `e_nᵀ`.
fn companion_observability(c: &[C64]) -> CMatrix {
    let n = c.len();
    let mut a = CMatrix::zeros(n, n);
    for i in 1..n {
        a[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..n {
        a[(i, n - 1)] = -c[i];
    }
    let mut o = CMatrix::zeros(n, n);
    let mut row = CMatrix::zeros(1, n);
    row[(0, n - 1)] = C64::new(1.0, 0.0);
    for k in 0..n {
        o.set_row(k, &row.row(0));
        if k + 1 < n {
            row = &row * &a;
        }
    }
    o
}

fn radial_gain(a: &CMatrix, c_out: &CMatrix, open: &[C64], rho_bar: f64, scale: f64) -> Result<CVector> {
    let n = a.nrows();
    let target = |z: C64| if z.norm() == 0.0 { ZERO } else { z * (scale * rho_bar / z.norm()) };
    if open.iter().all(|z| z.norm() <= rho_bar) {
        return Ok(CVector::zeros(n));
    }
    // Mode-by-index selection needs the eigenvalues on the diagonal.
    let triangular = (0..n).all(|i| (0..i).all(|j| a[(i, j)] == ZERO));
    let moved: Vec<usize> = (0..n).filter(|&j| triangular && open[j].norm() > rho_bar).collect();
    let kept: Vec<usize> = (0..n).filter(|&j| !moved.contains(&j)).collect();
    let decoupled = triangular && kept.iter().all(|&r| moved.iter().all(|&c| a[(r, c)] == ZERO));
    if !decoupled {
        let targets: Vec<C64> = open.iter().map(|&z| if z.norm() > rho_bar { target(z) } else { z }).collect();
        return place(a, c_out, &targets, open);
    }
    let k = moved.len();
    let sub_a = CMatrix::from_fn(k, k, |r, c| a[(moved[r], moved[c])]);
    let sub_c = CMatrix::from_fn(1, k, |_, c| c_out[(0, moved[c])]);
    let sub_open: Vec<C64> = moved.iter().map(|&j| open[j]).collect();
    let sub_targets: Vec<C64> = sub_open.iter().map(|&z| target(z)).collect();
    let sub_gain = place(&sub_a, &sub_c, &sub_targets, &sub_open)?;
    let mut gain = CVector::zeros(n);
    for (r, &j) in moved.iter().enumerate() {
        gain[j] = sub_gain[r];
    }
    Ok(gain)
}

/// Closed-form gain for diagonal `Ã = diag(a)` with distinct entries,
/// output row `c̃` and closed-loop roots `r`.
pub fn modal_gain(a: &[C64], c_tilde: &[C64], targets: &[C64]) -> Result<CVector> {
    let n = a.len();
    let mut gain = CVector::zeros(n);
    for j in 0..n {
        let denom = c_tilde[j] * a[j];
        if denom.norm() == 0.0 {
            return Err(Error::NumericallyUnobservable { gap: f64::NAN, cond: f64::INFINITY });
        }
        let mut num = a[j] - targets[j];
        for k in 0..n {
            if k != j {
                num *= (a[j] - targets[k]) / (a[j] - a[k]);
            }
        }
        gain[j] = num / denom;
    }
    Ok(gain)
}

/// Evenly spaced gap grid over `[t_min, t_max]`.
pub fn gap_grid(t_min: f64, t_max: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![t_max];
    }
    (0..points).map(|k| t_min + (t_max - t_min) * k as f64 / (points - 1) as f64).collect()
}

/// `1.1 ×` the largest `‖L‖²` over all sensors and grid gaps, skipping
/// pathological gaps.
pub fn estimate_l_bar(
    model: &SystemModel,
    decomposition: &SensorDecomposition,
    rho_bar: f64,
    policy: GainPolicy,
    grid: &[f64],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &gap in grid {
        if !(gap > 0.0 && gap <= model.t_max()) {
            return Err(Error::OutOfInterval { t: gap, lo: 0.0, hi: model.t_max() });
        }
        if model.is_pathological_default(gap) {
            continue;
        }
        let lambda = model.state_transition(gap);
        for s in decomposition.sensors() {
            if s.dim() == 0 {
                continue;
            }
            let design = synthesize_gain(&s.restrict(&lambda), &s.c_tilde, rho_bar, policy)
                .map_err(|e| with_gap(e, gap))?;
            worst = worst.max(design.norm_sq);
        }
    }
    Ok(1.1 * worst)
}

fn with_gap(e: Error, gap: f64) -> Error {
    match e {
        Error::NumericallyUnobservable { cond, .. } => Error::NumericallyUnobservable { gap, cond },
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainRecord {
    pub k: usize,
    pub gap: f64,
    pub gain: CVector,
    pub radius: f64,
    pub norm_sq: f64,
}

/// Per-sensor observer state.
#[derive(Debug, Clone)]
pub struct LocalEstimator {
    sensor: usize,
    c_tilde: CMatrix,
    eta: CVector,
    last_stamp_index: usize,
    last_stamp_time: f64,
    rho_bar: f64,
    l_bar: f64,
    t_max: f64,
    policy: GainPolicy,
    memo: HashMap<i64, GainDesign>,
    keep_log: bool,
    gain_log: Vec<GainRecord>,
}

/// What an update did with its measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateKind {
    Predicted,
    Corrected { radius: f64, norm_sq: f64 },
}

impl LocalEstimator {
    /// `η_i[0] = H_i·x0` at stamp 0, `t_0 = 0`.
    pub fn initialize(
        subspace: &SensorSubspace,
        expected_x0: &CVector,
        rho_bar: f64,
        l_bar: f64,
        t_max: f64,
        policy: GainPolicy,
    ) -> Result<Self> {
        if expected_x0.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("initial state estimate"));
        }
        Ok(LocalEstimator {
            sensor: subspace.sensor,
            c_tilde: subspace.c_tilde.clone(),
            eta: subspace.project(expected_x0),
            last_stamp_index: 0,
            last_stamp_time: 0.0,
            rho_bar,
            l_bar,
            t_max,
            policy,
            memo: HashMap::new(),
            keep_log: false,
            gain_log: Vec::new(),
        })
    }

    /// Keeps every applied gain in [`LocalEstimator::gain_log`].
    pub fn with_gain_log(mut self) -> Self {
        self.keep_log = true;
        self
    }

    pub fn sensor(&self) -> usize {
        self.sensor
    }

    pub fn eta(&self) -> &CVector {
        &self.eta
    }

    pub fn set_eta(&mut self, eta: CVector) {
        assert_eq!(eta.len(), self.eta.len());
        self.eta = eta;
    }

    pub fn last_stamp_index(&self) -> usize {
        self.last_stamp_index
    }

    pub fn last_stamp_time(&self) -> f64 {
        self.last_stamp_time
    }

    pub fn l_bar(&self) -> f64 {
        self.l_bar
    }

    pub fn gain_log(&self) -> &[GainRecord] {
        &self.gain_log
    }

    /// Gain for the transition `a_gap` accumulated over `gap`, memoized by
    /// gap bucket.
    pub fn gain_for(&mut self, gap: f64, a_gap: &CMatrix) -> Result<GainDesign> {
        let key = (gap / GAP_BUCKET).round() as i64;
        if let Some(d) = self.memo.get(&key) {
            return Ok(d.clone());
        }
        let design = synthesize_gain(a_gap, &self.c_tilde, self.rho_bar, self.policy).map_err(|e| with_gap(e, gap))?;
        if design.norm_sq > self.l_bar {
            return Err(Error::GainAboveBudget { norm_sq: design.norm_sq, l_bar: self.l_bar });
        }
        self.memo.insert(key, design.clone());
        Ok(design)
    }

    /// One stamp of the local observer.
    ///
    /// `a_step` is `Ã_i(t_k − t_{k−1})`. A measurement comes with
    /// `Ã_i(t_k − t_{k−Δ})`, the transition since this sensor's previous
    /// measurement. On error the state is left untouched so the caller can
    /// fall back to a pure prediction.
    pub fn update(
        &mut self,
        k: usize,
        t_k: f64,
        a_step: &CMatrix,
        measurement: Option<(f64, &CMatrix)>,
    ) -> Result<UpdateKind> {
        let predicted = a_step * &self.eta;
        let Some((y, a_gap)) = measurement else {
            self.eta = predicted;
            return Ok(UpdateKind::Predicted);
        };
        if !y.is_finite() {
            return Err(Error::NonFinite("measurement"));
        }
        let gap = t_k - self.last_stamp_time;
        if gap > self.t_max {
            return Err(Error::IntervalTooLong { dt: gap, t_max: self.t_max });
        }
        if !(gap > 0.0) {
            return Err(Error::Model(format!("stamp {t_k} does not follow the previous measurement")));
        }
        let design = self.gain_for(gap, a_gap)?;
        let innovation = C64::new(y, 0.0) - (&self.c_tilde * &predicted)[(0, 0)];
        self.eta = predicted + &design.gain * innovation;
        self.last_stamp_index = k;
        self.last_stamp_time = t_k;
        if self.keep_log {
            self.gain_log.push(GainRecord {
                k,
                gap,
                gain: design.gain.clone(),
                radius: design.radius,
                norm_sq: design.norm_sq,
            });
        }
        Ok(UpdateKind::Corrected { radius: design.radius, norm_sq: design.norm_sq })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;

    fn c(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    fn jordan2(l: f64, t: f64) -> CMatrix {
        let e = (l * t).exp();
        CMatrix::from_row_slice(2, 2, &[c(e), c(t * e), ZERO, c(e)])
    }

    #[test]
    fn scalar_deadbeat_is_unit_gain() {
        let a = CMatrix::from_element(1, 1, c((-0.3f64 * 0.2).exp()));
        let ct = CMatrix::from_element(1, 1, ONE);
        let d = synthesize_gain(&a, &ct, 0.6, GainPolicy::Deadbeat).unwrap();
        assert!((d.gain[0] - ONE).norm() < 1e-15);
        assert!(d.radius < 1e-15);
    }

    #[test]
    fn jordan_pair_placement_meets_radius() {
        let a = jordan2(-0.2, 0.1);
        let ct = CMatrix::from_row_slice(1, 2, &[ONE, ZERO]);
        let d = synthesize_gain(&a, &ct, 0.5, GainPolicy::default()).unwrap();
        let eig = linalg::eigenvalues(&closed_loop(&a, &d.gain, &ct)).unwrap();
        for z in eig {
            assert!(z.norm() <= 0.5, "{z}");
        }
        assert!((d.radius - 0.45).abs() < 1e-6);
    }

    #[test]
    fn deadbeat_closed_loop_is_nilpotent() {
        let a = jordan2(0.4, 0.3);
        let ct = CMatrix::from_row_slice(1, 2, &[c(2.0), c(-1.0)]);
        let d = synthesize_gain(&a, &ct, 0.6, GainPolicy::Deadbeat).unwrap();
        // Characteristic polynomial s^2 means M^2 = 0.
        let m = closed_loop(&a, &d.gain, &ct);
        assert!(linalg::max_abs(&(&m * &m)) < 1e-12);
        let tr = m.trace();
        assert!(tr.norm() < 1e-12);
    }

    #[test]
    fn canonical_and_modal_routes_agree_on_diagonal_pairs() {
        let a = [c((-0.3f64).exp()), C64::new(-0.1 * 0.3, 0.3).exp(), c(1.0)];
        let ct = [c(1.0), c(-0.5), c(2.0)];
        let targets = [c(0.1), c(-0.2), c(0.3)];
        let modal = modal_gain(&a, &ct, &targets).unwrap();
        let am = CMatrix::from_diagonal(&CVector::from_column_slice(&a));
        let cm = CMatrix::from_row_slice(1, 3, &ct);
        let canonical = place(&am, &(&cm * &am), &targets, &a).unwrap();
        for j in 0..3 {
            assert!((modal[j] - canonical[j]).norm() < 1e-9, "{modal} vs {canonical}");
        }
        let mut eig = linalg::eigenvalues(&closed_loop(&am, &modal, &cm)).unwrap();
        eig.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        assert!((eig[0] - c(-0.2)).norm() < 1e-9 && (eig[2] - c(0.3)).norm() < 1e-9);
    }

    #[test]
    fn radial_policy_moves_only_modes_outside_the_disc() {
        let a = CMatrix::from_diagonal(&CVector::from_column_slice(&[c(1.0), c(0.5), C64::new(0.3, 0.3)]));
        let ct = CMatrix::from_row_slice(1, 3, &[c(0.7), ONE, ONE]);
        let d = synthesize_gain(&a, &ct, 0.9, GainPolicy::Radial { scale: 0.9 }).unwrap();
        assert_eq!(d.gain[1], ZERO);
        assert_eq!(d.gain[2], ZERO);
        let expected = (1.0 - 0.81) / 0.7;
        assert!((d.gain[0] - c(expected)).norm() < 1e-12);
        assert!((d.radius - 0.81).abs() < 1e-12);
    }

    #[test]
    fn min_norm_never_exceeds_uniform_and_respects_radius() {
        let a = jordan2(0.1, 0.5);
        let ct = CMatrix::from_row_slice(1, 2, &[ONE, c(0.5)]);
        let rho = 0.6;
        let uniform = synthesize_gain(&a, &ct, rho, GainPolicy::default()).unwrap();
        let best = synthesize_gain(&a, &ct, rho, GainPolicy::MinNorm { points: 61 }).unwrap();
        assert!(best.norm_sq <= uniform.norm_sq + 1e-12);
        assert!(best.radius <= rho + 1e-9);
    }

    #[test]
    fn unobservable_pair_is_reported() {
        let a = CMatrix::from_diagonal(&CVector::from_column_slice(&[c(0.9), c(0.8)]));
        let ct = CMatrix::from_row_slice(1, 2, &[ONE, ZERO]);
        assert!(matches!(
            synthesize_gain(&a, &ct, 0.6, GainPolicy::default()),
            Err(Error::NumericallyUnobservable { .. })
        ));
    }

    fn scalar_setup() -> (SystemModel, SensorDecomposition) {
        let model = SystemModel::new(
            CMatrix::from_element(1, 1, c(-0.5)),
            CMatrix::from_element(1, 1, ONE),
            CMatrix::zeros(1, 1),
            0.1,
            1.0,
        )
        .unwrap();
        let d = SensorDecomposition::build(&model);
        (model, d)
    }

    #[test]
    fn l_bar_for_scalar_deadbeat_and_single_point() {
        let (model, d) = scalar_setup();
        let l = estimate_l_bar(&model, &d, 0.6, GainPolicy::Deadbeat, &gap_grid(0.01, 1.0, 50)).unwrap();
        assert!((l - 1.1).abs() < 1e-12);
        let a = (-0.5f64 * 0.3).exp();
        let one = estimate_l_bar(&model, &d, 0.6, GainPolicy::default(), &[0.3]).unwrap();
        let gain = (a - 0.54) / a;
        assert!((one - 1.1 * gain * gain).abs() < 1e-12);
    }

    #[test]
    fn l_bar_is_monotone_under_grid_refinement() {
        let a = CMatrix::from_row_slice(3, 3, &[c(-1.0), ZERO, ZERO, ZERO, c(-0.2), ONE, ZERO, ZERO, c(-0.2)]);
        let cm = CMatrix::from_row_slice(2, 3, &[ONE, ZERO, ZERO, ZERO, ONE, ZERO]);
        let model = SystemModel::new(a, cm, CMatrix::zeros(3, 3), 0.1, 1.0).unwrap();
        let d = SensorDecomposition::build(&model);
        let mut prev = 0.0;
        for points in [3, 5, 9, 17, 33] {
            let l = estimate_l_bar(&model, &d, 0.6, GainPolicy::default(), &gap_grid(0.1, 1.0, points)).unwrap();
            assert!(l >= prev);
            prev = l;
        }
    }

    #[test]
    fn prediction_only_and_deadbeat_correction() {
        let (model, d) = scalar_setup();
        let sub = d.sensor(0);
        let mut est = LocalEstimator::initialize(sub, &CVector::from_element(1, c(4.0)), 0.6, 10.0, 1.0, GainPolicy::Deadbeat)
            .unwrap()
            .with_gain_log();
        let identity = CMatrix::identity(1, 1);
        est.update(1, 0.1, &identity, None).unwrap();
        assert_eq!(est.eta()[0], c(4.0));

        let step = sub.restrict(&model.state_transition(0.2));
        let gap = sub.restrict(&model.state_transition(0.3));
        est.update(2, 0.3, &step, Some((1.25, &gap))).unwrap();
        assert!((est.eta()[0] - c(1.25)).norm() < 1e-15);
        assert_eq!(est.last_stamp_index(), 2);
        assert_eq!(est.gain_log().len(), 1);
    }

    #[test]
    fn update_rejects_long_gaps_without_mutating() {
        let (model, d) = scalar_setup();
        let sub = d.sensor(0);
        let mut est = LocalEstimator::initialize(sub, &CVector::from_element(1, c(1.0)), 0.6, 10.0, 1.0, GainPolicy::default()).unwrap();
        let step = sub.restrict(&model.state_transition(0.5));
        let err = est.update(1, 1.5, &step, Some((0.0, &step))).unwrap_err();
        assert!(matches!(err, Error::IntervalTooLong { .. }));
        assert_eq!(est.eta()[0], c(1.0));
        assert!(est.update(1, 0.5, &step, Some((f64::NAN, &step))).is_err());
    }

    #[test]
    fn gain_memo_reuses_bucketed_gaps() {
        let (model, d) = scalar_setup();
        let sub = d.sensor(0);
        let mut est = LocalEstimator::initialize(sub, &CVector::zeros(1), 0.6, 10.0, 1.0, GainPolicy::default()).unwrap();
        let g1 = est.gain_for(0.2, &sub.restrict(&model.state_transition(0.2))).unwrap();
        let g2 = est.gain_for(0.2 + 1e-8, &sub.restrict(&model.state_transition(0.2 + 1e-8))).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn budget_violation_is_an_error() {
        let (model, d) = scalar_setup();
        let sub = d.sensor(0);
        let mut est = LocalEstimator::initialize(sub, &CVector::zeros(1), 0.6, 1e-6, 1.0, GainPolicy::default()).unwrap();
        let a = sub.restrict(&model.state_transition(0.2));
        assert!(matches!(est.gain_for(0.2, &a), Err(Error::GainAboveBudget { .. })));
    }

    #[test]
    fn policy_serde_round_trip() {
        let p: GainPolicy = serde_json::from_str(r#"{"kind":"radial"}"#).unwrap();
        assert_eq!(p, GainPolicy::Radial { scale: 0.9 });
        let p: GainPolicy = serde_json::from_str(r#"{"kind":"min_norm","points":11}"#).unwrap();
        assert_eq!(p, GainPolicy::MinNorm { points: 11 });
        assert!(serde_json::from_str::<GainPolicy>(r#"{"kind":"uniform","scal":0.5}"#).is_err());
    }
}
