//! Error-bound constants and envelopes for local and fused estimates.

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::linalg;
use crate::observability::SensorDecomposition;
use crate::system::SystemModel;

const S_CUT: f64 = 12.0;
const QUAD_TOL: f64 = 1e-12;

fn std_normal_pdf(s: f64) -> f64 {
    (-0.5 * s * s).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn std_normal_cdf(s: f64) -> f64 {
    0.5 * erfc(-s / std::f64::consts::SQRT_2)
}

/// `s^order · m·Φ(s)^{m−1}·φ(s)`.
fn n_integrand(s: f64, m: u32, order: i32) -> f64 {
    let phi_m1 = if m == 1 { 1.0 } else { std_normal_cdf(s).powi(m as i32 - 1) };
    s.powi(order) * m as f64 * phi_m1 * std_normal_pdf(s)
}

/// `N_order = ∫_0^∞ s^order d/ds Φ(s)^m ds`, by adaptive Simpson on `[0, 12]`.
pub fn compute_n(m: u32, order: i32) -> f64 {
    assert!(m >= 1, "compute_n needs at least one variable");
    assert!(order == 1 || order == 2, "order must be 1 or 2");
    let f = |s: f64| n_integrand(s, m, order);
    // Split so the adaptive rule sees the bulk of the mass on each piece.
    let knots = [0.0, 1.0, 2.0, 3.0, 4.0, 6.0, S_CUT];
    knots.windows(2).map(|w| adaptive_simpson(&f, w[0], w[1], QUAD_TOL, 50)).sum()
}

/// Composite Simpson with `intervals` (even) panels on `[0, 12]`.
pub fn compute_n_fixed(m: u32, order: i32, intervals: usize) -> f64 {
    assert!(intervals >= 2 && intervals.is_multiple_of(2));
    let h = S_CUT / intervals as f64;
    let mut acc = n_integrand(0.0, m, order) + n_integrand(S_CUT, m, order);
    for k in 1..intervals {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * n_integrand(k as f64 * h, m, order);
    }
    acc * h / 3.0
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let c = 0.5 * (a + b);
    let (fa, fb, fc) = (f(a), f(b), f(c));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_step(f, a, b, fa, fb, fc, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fb: f64, fc: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let c = 0.5 * (a + b);
    let (d, e) = (0.5 * (a + c), 0.5 * (c + b));
    let (fd, fe) = (f(d), f(e));
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, c, fa, fc, fd, left, 0.5 * tol, depth - 1)
        + simpson_step(f, c, b, fc, fb, fe, right, 0.5 * tol, depth - 1)
}

/// Bounds on `E[max X_i]`, `E[min X_i]`, `E[(max X_i)²]`, `E[(min X_i)²]`
/// for independent zero-mean Gaussians with standard deviations `sigmas`.
pub fn order_stat_envelope(sigmas: &[f64]) -> Result<(f64, f64, f64, f64)> {
    if sigmas.is_empty() {
        return Err(Error::Empty);
    }
    if sigmas.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::Model("standard deviations must be positive and finite".into()));
    }
    let m = sigmas.len() as u32;
    let s_max = sigmas.iter().cloned().fold(0.0, f64::max);
    let (n1, n2) = (compute_n(m, 1), compute_n(m, 2));
    Ok((s_max * n1, -s_max * n1, s_max * s_max * n2, s_max * s_max * n2))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundConstants {
    pub r_bar: f64,
    pub l_bar: f64,
    pub q_bar: f64,
    pub a_bar: f64,
    /// Time in `(0, T_max]` where `ρ(exp(A·t))` peaks; 0 when the supremum
    /// is the `t → 0⁺` limit.
    pub a_bar_at: f64,
    pub rho_bar: f64,
    pub sigma_0: f64,
    /// Sensor count used in the literal reading of `N_1`, `N_2`.
    pub m: usize,
    pub n1: f64,
    pub n2: f64,
    /// Largest `|F_j|` and the constants it gives.
    pub m_entry: usize,
    pub n1_entry: f64,
    pub n2_entry: f64,
}

/// `sup_{0<t≤T_max} ρ(exp(A·t))` on a 10⁴-point grid with golden-section
/// refinement, together with its maximizer.
pub fn a_bar(model: &SystemModel) -> Result<(f64, f64)> {
    let t_max = model.t_max();
    let f = |t: f64| {
        let lam = model.state_transition(t);
        (0..model.n()).map(|i| lam[(i, i)].norm()).fold(0.0, f64::max)
    };
    const POINTS: usize = 10_000;
    let h = t_max / POINTS as f64;
    let (mut best_k, mut best) = (0usize, f64::NEG_INFINITY);
    for k in 1..=POINTS {
        let v = f(k as f64 * h);
        if v > best {
            best = v;
            best_k = k;
        }
    }
    let lo = (best_k as f64 - 1.0) * h;
    let hi = ((best_k as f64 + 1.0) * h).min(t_max);
    let (t_star, v_star) = golden_max(&f, lo.max(f64::MIN_POSITIVE), hi, 1e-12 * t_max.max(1.0));
    let (t_best, v_best) = if v_star > best { (t_star, v_star) } else { (best_k as f64 * h, best) };
    if !v_best.is_finite() {
        return Err(Error::NonFinite("a_bar"));
    }
    // The open interval starts at 0⁺ where exp(A·t) → I.
    Ok(if v_best > 1.0 + 1e-12 { (v_best, t_best) } else { (1.0, 0.0) })
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
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
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// `q̄ = ρ(Q)·T_max·(l̄·max_i ‖C_i‖₂ + 1)²`.
pub fn q_bar(model: &SystemModel, l_bar: f64) -> f64 {
    let c_max = (0..model.m())
        .map(|i| model.c().row(i).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let base = l_bar * c_max + 1.0;
    linalg::hermitian_spectral_radius(model.q()) * model.t_max() * base * base
}

pub fn compute_constants(
    model: &SystemModel,
    decomposition: &SensorDecomposition,
    l_bar: f64,
    rho_bar: f64,
    sigma_0: f64,
) -> Result<BoundConstants> {
    if !(rho_bar > 0.0 && rho_bar < 1.0) {
        return Err(Error::Model(format!("rho_bar must lie in (0, 1), got {rho_bar}")));
    }
    if !(l_bar >= 0.0) || !(sigma_0 >= 0.0) {
        return Err(Error::Model("l_bar and sigma_0 must be nonnegative".into()));
    }
    let (a_bar, a_bar_at) = a_bar(model)?;
    let m = model.m();
    let m_entry = decomposition.raw_fusion_sets().iter().map(|f| f.len()).max().unwrap_or(0).max(1);
    Ok(BoundConstants {
        r_bar: model.r_bar(),
        l_bar,
        q_bar: q_bar(model, l_bar),
        a_bar,
        a_bar_at,
        rho_bar,
        sigma_0,
        m,
        n1: compute_n(m as u32, 1),
        n2: compute_n(m as u32, 2),
        m_entry,
        n1_entry: compute_n(m_entry as u32, 1),
        n2_entry: compute_n(m_entry as u32, 2),
    })
}

/// `ρ̄^{2k}σ_0ā² + (r̄l̄ + q̄)ā²/(1 − ρ̄²)`.
pub fn theorem3_bound(k: usize, c: &BoundConstants) -> f64 {
    let a2 = c.a_bar * c.a_bar;
    let decay = if k > i32::MAX as usize / 2 { 0.0 } else { c.rho_bar.powi(2 * k as i32) };
    decay * c.sigma_0 * a2 + theorem3_asymptote(c)
}

pub fn theorem3_asymptote(c: &BoundConstants) -> f64 {
    (c.r_bar * c.l_bar + c.q_bar) * c.a_bar * c.a_bar / (1.0 - c.rho_bar * c.rho_bar)
}

/// (expectation bound, covariance bound) with the total sensor count in
/// `N_1`, `N_2`.
pub fn theorem2_bounds(k: usize, c: &BoundConstants) -> (f64, f64) {
    let b = theorem3_bound(k, c);
    (b * c.n1, b * b * c.n2)
}

/// As [`theorem2_bounds`] with `N_1`, `N_2` taken at the largest `|F_j|`.
pub fn theorem2_bounds_per_entry(k: usize, c: &BoundConstants) -> (f64, f64) {
    let b = theorem3_bound(k, c);
    (b * c.n1_entry, b * b * c.n2_entry)
}
