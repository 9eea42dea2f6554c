//! Small dense linear-algebra helpers over complex matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| C64::new(v, 0.0))
}

/// Largest absolute row sum.
pub fn inf_norm(m: &CMatrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn vec_norm(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest entry modulus of a vector.
pub fn vec_max_abs(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Eigenvalues of a general complex square matrix.
///
/// Rows and columns that decouple (all off-diagonal entries exactly zero
/// among the remaining indices) are peeled off first; the remaining core
/// goes through a complex Schur decomposition.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Dimension(format!("eigenvalues of {}x{} matrix", n, m.ncols())));
    }
    if !is_finite(m) {
        return Err(Error::NonFinite("matrix passed to eigenvalue solver"));
    }
    let mut active: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n);
    loop {
        let before = active.len();
        let mut keep = Vec::with_capacity(active.len());
        for &i in &active {
            let row_free = active.iter().all(|&j| j == i || m[(i, j)] == ZERO);
            let col_free = active.iter().all(|&j| j == i || m[(j, i)] == ZERO);
            if row_free || col_free {
                out.push(m[(i, i)]);
            } else {
                keep.push(i);
            }
        }
        active = keep;
        if active.len() == before || active.is_empty() {
            break;
        }
    }
    if !active.is_empty() {
        let k = active.len();
        let core = CMatrix::from_fn(k, k, |r, c| m[(active[r], active[c])]);
        let schur = core
            .try_schur(f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
        let ev = schur
            .eigenvalues()
            .ok_or_else(|| Error::Numerical("Schur form has unreduced blocks".into()))?;
        out.extend(ev.iter().copied());
    }
    Ok(out)
}

pub fn spectral_radius(m: &CMatrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Spectral radius of a Hermitian matrix (largest absolute eigenvalue).
pub fn hermitian_spectral_radius(m: &CMatrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    sym.symmetric_eigenvalues().iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Factor `G` with `G·Gᴴ = m` for a Hermitian positive semidefinite `m`.
/// Eigenvalues below `-tol·max(1, ‖m‖)` are reported as an indefinite matrix.
pub fn psd_factor(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    let n = m.nrows();
    if n == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let scale = max_abs(&sym).max(1.0);
    let eig = sym.symmetric_eigen();
    let mut g = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -tol * scale {
            return Err(Error::Model(format!(
                "matrix is not positive semidefinite (eigenvalue {lambda:e})"
            )));
        }
        let s = lambda.max(0.0).sqrt();
        g.column_mut(j).scale_mut(s);
    }
    Ok(g)
}

/// Ratio of the extreme singular values; infinite for singular input.
pub fn condition_number(m: &CMatrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Numerical rank with threshold `tol·σ_max`.
pub fn rank(m: &CMatrix, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * max).count()
}

/// Monic polynomial coefficients `[c_0, …, c_{n-1}]` of `Π (s − r_k)`
/// (the leading 1 is implicit).
pub fn monic_from_roots(roots: &[C64]) -> Vec<C64> {
    // coeffs[k] multiplies s^k; start with the constant polynomial 1.
    let mut coeffs = vec![ONE];
    for &r in roots {
        let mut next = vec![ZERO; coeffs.len() + 1];
        for (k, &c) in coeffs.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= c * r;
        }
        coeffs = next;
    }
    coeffs.pop();
    coeffs
}

/// Evaluates `p(M) = M^n + Σ c_k M^k` for monic coefficients from
/// [`monic_from_roots`].
pub fn eval_monic_at_matrix(coeffs: &[C64], m: &CMatrix) -> CMatrix {
    let n = m.nrows();
    let mut acc = CMatrix::identity(n, n);
    for &c in coeffs.iter().rev() {
        acc = &acc * m + CMatrix::identity(n, n) * c;
    }
    acc
}
