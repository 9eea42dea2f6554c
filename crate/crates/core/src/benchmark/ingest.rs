//! Similarity transform of a real plant into diagonal Jordan coordinates.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, to_complex, CMatrix, CVector, C64};

/// Eigenvector matrices above this condition number are rejected.
pub const MAX_EIGENVECTOR_COND: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct Ingested {
    /// Diagonal `V⁻¹·A·V`.
    pub a: CMatrix,
    /// `C·V`.
    pub c: CMatrix,
    pub v: CMatrix,
    pub v_inv: CMatrix,
    pub cond: f64,
    /// `‖V·A_J·V⁻¹ − A‖_∞`.
    pub residual: f64,
}

impl Ingested {
    /// `x = Re(V·z)`.
    pub fn to_original(&self, z: &CVector) -> Vec<f64> {
        (&self.v * z).iter().map(|w| w.re).collect()
    }

    pub fn to_modal(&self, x: &CVector) -> CVector {
        &self.v_inv * x
    }
}

/// Diagonalizes `a_real` with eigenvalues ordered by `(re, im)`.
///
/// Conjugate pairs get exactly conjugate eigenvalues and eigenvectors, so
/// real trajectories stay real under `x = V·z`. Each eigenvector has unit
/// norm with its largest component real and positive.
pub fn to_jordan(a_real: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<Ingested> {
    let n = a_real.nrows();
    if a_real.ncols() != n || c.ncols() != n {
        return Err(Error::Dimension(format!("A is {}x{}, C has {} columns", n, a_real.ncols(), c.ncols())));
    }
    if a_real.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("A"));
    }
    let a = to_complex(a_real);
    let scale = linalg::max_abs(&a).max(1.0);
    let mut eig = linalg::eigenvalues(&a)?;
    symmetrize_conjugates(&mut eig, scale)?;
    eig.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap().then(x.im.partial_cmp(&y.im).unwrap()));
    for w in eig.windows(2) {
        if (w[0] - w[1]).norm() <= 1e-8 * scale {
            return Err(Error::Model(format!(
                "repeated eigenvalue {} cannot be diagonalized with geometric multiplicity 1",
                crate::system::fmt_c(w[0])
            )));
        }
    }
    let mut v = CMatrix::zeros(n, n);
    for (k, &lambda) in eig.iter().enumerate() {
        let col = if lambda.im < 0.0 {
            // Conjugating the partner's vector keeps the pair exact.
            null_vector(&a, lambda.conj()).map(|x| x.conj())
        } else {
            null_vector(&a, lambda)
        };
        v.set_column(k, &col);
    }
    let cond = linalg::condition_number(&v);
    if !(cond <= MAX_EIGENVECTOR_COND) {
        return Err(Error::Model(format!("eigenvector matrix condition number {cond:e} exceeds {MAX_EIGENVECTOR_COND:e}")));
    }
    let v_inv = v.clone().try_inverse().ok_or_else(|| Error::Numerical("eigenvector matrix is singular".into()))?;
    let a_j = CMatrix::from_diagonal(&CVector::from_column_slice(&eig));
    let residual = linalg::inf_norm(&(&v * &a_j * &v_inv - &a));
    Ok(Ingested { a: a_j, c: to_complex(c) * &v, v, v_inv, cond, residual })
}

fn symmetrize_conjugates(eig: &mut [C64], scale: f64) -> Result<()> {
    let tol = 1e-9 * scale;
    let n = eig.len();
    let mut done = vec![false; n];
    for i in 0..n {
        if done[i] {
            continue;
        }
        if eig[i].im.abs() <= tol {
            eig[i].im = 0.0;
            done[i] = true;
            continue;
        }
        let target = eig[i].conj();
        let partner = (0..n)
            .filter(|&j| j != i && !done[j])
            .min_by(|&x, &y| (eig[x] - target).norm().partial_cmp(&(eig[y] - target).norm()).unwrap())
            .ok_or_else(|| Error::Numerical(format!("eigenvalue {} has no conjugate partner", eig[i])))?;
        if (eig[partner] - target).norm() > 1e-6 * scale {
            return Err(Error::Numerical(format!("eigenvalue {} has no conjugate partner", eig[i])));
        }
        let mean = 0.5 * (eig[i] + eig[partner].conj());
        let upper = C64::new(mean.re, mean.im.abs());
        eig[i] = upper;
        eig[partner] = upper.conj();
        done[i] = true;
        done[partner] = true;
    }
    Ok(())
}

/// Unit null vector of `A − λI` from the smallest right singular vector.
fn null_vector(a: &CMatrix, lambda: C64) -> CVector {
    let n = a.nrows();
    let shifted = a - CMatrix::identity(n, n) * lambda;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let k = (0..svd.singular_values.len())
        .min_by(|&x, &y| svd.singular_values[x].partial_cmp(&svd.singular_values[y]).unwrap())
        .unwrap();
    let mut x = CVector::from_iterator(n, v_t.row(k).iter().map(|z| z.conj()));
    let norm = linalg::vec_norm(&x);
    x /= C64::new(norm, 0.0);
    let pivot = (0..n).max_by(|&p, &q| x[p].norm().partial_cmp(&x[q].norm()).unwrap()).unwrap();
    let phase = x[pivot] / x[pivot].norm();
    x / phase
}
