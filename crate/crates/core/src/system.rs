//! Continuous-time plant in Jordan canonical form: exact transition
//! matrices, stochastic propagation, sensor measurements and the
//! non-pathological sampling test.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64, ZERO};

/// One Jordan block `J(λ)` occupying rows/columns `start..start + size`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JordanBlock {
    pub eigenvalue: C64,
    pub start: usize,
    pub size: usize,
}

impl JordanBlock {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.size
    }
}

/// The plant `ẋ = A x + w`, `y_i = C_i x + v_i` with `A` in Jordan form.
///
/// `q` is the process-noise intensity in the coordinates of `a`;
/// `noise_factor` is a (possibly rectangular) `G` with `q = G·Gᴴ`, driven
/// by real standard normals.
#[derive(Debug, Clone)]
pub struct SystemModel {
    a: CMatrix,
    c: CMatrix,
    q: CMatrix,
    noise_factor: CMatrix,
    r_bar: f64,
    t_max: f64,
    blocks: Vec<JordanBlock>,
    periods: Vec<f64>,
}

/// A sampled plant state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueState {
    pub t: f64,
    pub x: CVector,
}

impl SystemModel {
    /// Builds a model from a Jordan-form `a`, measurement rows `c` and a
    /// real positive semidefinite intensity `q`.
    pub fn new(a: CMatrix, c: CMatrix, q: CMatrix, r_bar: f64, t_max: f64) -> Result<Self> {
        let n = a.nrows();
        check_inputs(&a, &c, &q, r_bar, t_max)?;
        let g = linalg::psd_factor(&q, 1e-12)?;
        let mut model = SystemModel { a, c, q, noise_factor: g, r_bar, t_max, blocks: Vec::new(), periods: Vec::new() };
        let violations = model.validate_jordan();
        if !violations.is_empty() {
            return Err(Error::Model(violations.join("; ")));
        }
        model.blocks = parse_blocks(&model.a);
        model.periods = aliasing_periods(&model.blocks);
        debug_assert_eq!(model.blocks.iter().map(|b| b.size).sum::<usize>(), n);
        Ok(model)
    }

    /// Builds a model whose process noise is `G ξ` with `ξ` real white noise
    /// (used after a similarity transform of a real plant).
    pub fn with_noise_factor(
        a: CMatrix,
        c: CMatrix,
        noise_factor: CMatrix,
        r_bar: f64,
        t_max: f64,
    ) -> Result<Self> {
        if noise_factor.nrows() != a.nrows() {
            return Err(Error::Dimension(format!(
                "noise factor has {} rows, state dimension is {}",
                noise_factor.nrows(),
                a.nrows()
            )));
        }
        let q = &noise_factor * noise_factor.adjoint();
        check_inputs(&a, &c, &q, r_bar, t_max)?;
        let mut model = SystemModel { a, c, q, noise_factor, r_bar, t_max, blocks: Vec::new(), periods: Vec::new() };
        let violations = model.validate_jordan();
        if !violations.is_empty() {
            return Err(Error::Model(violations.join("; ")));
        }
        model.blocks = parse_blocks(&model.a);
        model.periods = aliasing_periods(&model.blocks);
        Ok(model)
    }

    /// Like [`SystemModel::new`] but keeps a model that fails the Jordan
    /// check, so callers can inspect [`SystemModel::validate_jordan`].
    pub fn unchecked(a: CMatrix, c: CMatrix, q: CMatrix, r_bar: f64, t_max: f64) -> Result<Self> {
        check_inputs(&a, &c, &q, r_bar, t_max)?;
        let g = linalg::psd_factor(&q, 1e-12)?;
        let blocks = parse_blocks(&a);
        let periods = aliasing_periods(&blocks);
        Ok(SystemModel { a, c, q, noise_factor: g, r_bar, t_max, blocks, periods })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &CMatrix {
        &self.a
    }

    pub fn c(&self) -> &CMatrix {
        &self.c
    }

    pub fn c_row(&self, sensor: usize) -> CMatrix {
        self.c.rows(sensor, 1).into_owned()
    }

    pub fn q(&self) -> &CMatrix {
        &self.q
    }

    pub fn r_bar(&self) -> f64 {
        self.r_bar
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn blocks(&self) -> &[JordanBlock] {
        &self.blocks
    }

    /// Eigenvalues with multiplicity, in state order.
    pub fn spectrum(&self) -> Vec<C64> {
        (0..self.n()).map(|i| self.a[(i, i)]).collect()
    }

    /// `Λ(dt) = exp(A·dt)` from the closed-form Jordan-block exponential.
    pub fn state_transition(&self, dt: f64) -> CMatrix {
        let n = self.n();
        let mut out = CMatrix::zeros(n, n);
        for block in &self.blocks {
            let scale = (block.eigenvalue * dt).exp();
            // Upper-triangular Toeplitz with entries dt^j / j!.
            let mut coeff = vec![1.0; block.size];
            for j in 1..block.size {
                coeff[j] = coeff[j - 1] * dt / j as f64;
            }
            for r in 0..block.size {
                for c in r..block.size {
                    out[(block.start + r, block.start + c)] = scale * coeff[c - r];
                }
            }
        }
        out
    }

    /// `x' = Λ(dt)·x + w` with `w ~ N(0, Q·dt)`.
    pub fn propagate_state<R: Rng + ?Sized>(
        &self,
        x: &TrueState,
        dt: f64,
        rng: &mut R,
    ) -> Result<TrueState> {
        if !(dt > 0.0) {
            return Err(Error::Model(format!("propagation interval must be positive, got {dt}")));
        }
        if dt > self.t_max {
            return Err(Error::IntervalTooLong { dt, t_max: self.t_max });
        }
        let mut next = self.state_transition(dt) * &x.x;
        let k = self.noise_factor.ncols();
        if k > 0 && linalg::max_abs(&self.noise_factor) > 0.0 {
            let xi = CVector::from_fn(k, |_, _| C64::new(rng.sample::<f64, _>(StandardNormal), 0.0));
            next += (&self.noise_factor * xi) * C64::new(dt.sqrt(), 0.0);
        }
        Ok(TrueState { t: x.t + dt, x: next })
    }

    /// `y_i = Re(C_i x) + v` with `v ~ N(0, r)`.
    ///
    /// The real part is taken because the measurement channel carries real
    /// scalars; for plants that are real in their original coordinates the
    /// imaginary part is rounding noise.
    pub fn measure<R: Rng + ?Sized>(
        &self,
        sensor: usize,
        x: &TrueState,
        r: f64,
        rng: &mut R,
    ) -> Result<f64> {
        if sensor >= self.m() {
            return Err(Error::Dimension(format!("sensor {sensor} out of range (m = {})", self.m())));
        }
        if r < 0.0 || !r.is_finite() {
            return Err(Error::Model(format!("measurement variance must be nonnegative, got {r}")));
        }
        if r > self.r_bar {
            return Err(Error::NoiseAboveBound { r, r_bar: self.r_bar });
        }
        let clean = self.c.row(sensor).iter().zip(x.x.iter()).map(|(c, v)| c * v).sum::<C64>().re;
        if r == 0.0 {
            return Ok(clean);
        }
        Ok(clean + r.sqrt() * rng.sample::<f64, _>(StandardNormal))
    }

    /// Whether `elapsed` lies within `tol` of an aliasing time
    /// `2kπ / |Im(λ_i − λ_j)|` of two eigenvalues sharing a real part.
    pub fn is_pathological(&self, elapsed: f64, tol: f64) -> bool {
        if !(elapsed > 0.0) {
            return false;
        }
        for &base in &self.periods {
            let k = (elapsed / base).round();
            if k >= 1.0 && (elapsed - k * base).abs() <= tol {
                return true;
            }
        }
        false
    }

    /// [`SystemModel::is_pathological`] with the default band
    /// `1e-9·(1 + elapsed)`.
    pub fn is_pathological_default(&self, elapsed: f64) -> bool {
        self.is_pathological(elapsed, default_pathological_tol(elapsed))
    }

    /// Fundamental periods `2π / |Im(λ_i − λ_j)|` for all distinct eigenvalue
    /// pairs with equal real parts, sorted and deduplicated.
    pub fn aliasing_periods(&self) -> Vec<f64> {
        self.periods.clone()
    }

    /// Lists every way `a` departs from a Jordan form with one block per
    /// eigenvalue. Empty when the structure is valid.
    pub fn validate_jordan(&self) -> Vec<String> {
        jordan_violations(&self.a)
    }
}

fn aliasing_periods(blocks: &[JordanBlock]) -> Vec<f64> {
    let ev: Vec<C64> = blocks.iter().map(|b| b.eigenvalue).collect();
    let mut periods = Vec::new();
    for i in 0..ev.len() {
        for j in i + 1..ev.len() {
            let d = ev[i] - ev[j];
            let scale = 1.0 + ev[i].norm().max(ev[j].norm());
            if d.re.abs() <= 1e-12 * scale && d.im.abs() > 1e-12 * scale {
                periods.push(2.0 * PI / d.im.abs());
            }
        }
    }
    periods.sort_by(|a, b| a.partial_cmp(b).unwrap());
    periods.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    periods
}

pub fn default_pathological_tol(elapsed: f64) -> f64 {
    1e-9 * (1.0 + elapsed.abs())
}

fn check_inputs(a: &CMatrix, c: &CMatrix, q: &CMatrix, r_bar: f64, t_max: f64) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!("A is {}x{}", n, a.ncols())));
    }
    if c.ncols() != n {
        return Err(Error::Dimension(format!("C has {} columns, A is {n}x{n}", c.ncols())));
    }
    if q.shape() != (n, n) {
        return Err(Error::Dimension(format!("Q is {}x{}, expected {n}x{n}", q.nrows(), q.ncols())));
    }
    if !linalg::is_finite(a) {
        return Err(Error::NonFinite("A"));
    }
    if !linalg::is_finite(c) {
        return Err(Error::NonFinite("C"));
    }
    if !linalg::is_finite(q) {
        return Err(Error::NonFinite("Q"));
    }
    let asym = linalg::max_abs_diff(q, &q.adjoint());
    if asym > 1e-10 * linalg::max_abs(q).max(1.0) {
        return Err(Error::Model(format!("Q is not symmetric (asymmetry {asym:e})")));
    }
    if !(r_bar >= 0.0) || !r_bar.is_finite() {
        return Err(Error::Model(format!("r_bar must be finite and nonnegative, got {r_bar}")));
    }
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::Model(format!("T_max must be positive, got {t_max}")));
    }
    Ok(())
}

/// Splits the diagonal into blocks joined by unit superdiagonal entries.
fn parse_blocks(a: &CMatrix) -> Vec<JordanBlock> {
    let n = a.nrows();
    let mut blocks = Vec::new();
    let mut start = 0;
    for i in 0..n {
        let chained = i + 1 < n && a[(i, i + 1)] != ZERO;
        if !chained {
            blocks.push(JordanBlock { eigenvalue: a[(start, start)], start, size: i + 1 - start });
            start = i + 1;
        }
    }
    blocks
}

fn jordan_violations(a: &CMatrix) -> Vec<String> {
    let n = a.nrows();
    let mut out = Vec::new();
    if a.ncols() != n {
        out.push(format!("A is not square ({}x{})", n, a.ncols()));
        return out;
    }
    let mut below = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let v = a[(i, j)];
            if v == ZERO || i == j || j == i + 1 {
                continue;
            }
            below.push((i + 1, j + 1));
        }
    }
    if !below.is_empty() {
        let cells: Vec<String> = below.iter().take(8).map(|(i, j)| format!("({i},{j})")).collect();
        out.push(format!(
            "not upper bidiagonal Jordan structure: nonzero entries at {}",
            cells.join(", ")
        ));
    }
    for i in 0..n.saturating_sub(1) {
        let s = a[(i, i + 1)];
        if s == ZERO {
            continue;
        }
        if s != C64::new(1.0, 0.0) {
            out.push(format!("superdiagonal entry ({},{}) is {} rather than 0 or 1", i + 1, i + 2, fmt_c(s)));
        } else if a[(i, i)] != a[(i + 1, i + 1)] {
            out.push(format!(
                "rows {} and {} are chained but carry different eigenvalues {} and {}",
                i + 1,
                i + 2,
                fmt_c(a[(i, i)]),
                fmt_c(a[(i + 1, i + 1)])
            ));
        }
    }
    let blocks = parse_blocks(a);
    for (bi, b) in blocks.iter().enumerate() {
        let count = blocks.iter().filter(|o| o.eigenvalue == b.eigenvalue).count();
        let first = blocks.iter().position(|o| o.eigenvalue == b.eigenvalue) == Some(bi);
        if count > 1 && first {
            out.push(format!(
                "eigenvalue {} has geometric multiplicity {count}",
                fmt_c(b.eigenvalue)
            ));
        }
    }
    out
}

pub(crate) fn fmt_c(z: C64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else {
        format!("{}{:+}i", z.re, z.im)
    }
}
