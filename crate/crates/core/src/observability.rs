//! Per-sensor observable subspaces of a Jordan-form plant.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64, ONE};
use crate::system::SystemModel;

/// Default cap on the number of sensor subsets enumerated by
/// [`check_sparse_observability`].
pub const DEFAULT_SUBSET_CAP: u128 = 1_000_000;

/// Relative band used to decide whether an observability-matrix entry is
/// structurally nonzero.
pub const EPS_RANK: f64 = 1e-10;

/// Observable coordinates of one sensor.
#[derive(Debug, Clone)]
pub struct SensorSubspace {
    pub sensor: usize,
    pub o: CMatrix,
    /// Observable state indices, ascending.
    pub qset: Vec<usize>,
    /// `n_i × n` selector with rows `e_jᵀ`, `j ∈ qset`.
    pub h: CMatrix,
    /// `C_i·H_iᵀ`, a `1 × n_i` row.
    pub c_tilde: CMatrix,
}

impl SensorSubspace {
    pub fn dim(&self) -> usize {
        self.qset.len()
    }

    /// `H_i·x`.
    pub fn project(&self, x: &crate::CVector) -> crate::CVector {
        crate::CVector::from_iterator(self.qset.len(), self.qset.iter().map(|&j| x[j]))
    }

    /// `H_iᵀ·η`.
    pub fn lift(&self, eta: &crate::CVector, n: usize) -> crate::CVector {
        let mut out = crate::CVector::zeros(n);
        for (k, &j) in self.qset.iter().enumerate() {
            out[j] = eta[k];
        }
        out
    }

    /// `H_i·Λ·H_iᵀ` for a precomputed full transition matrix.
    pub fn restrict(&self, lambda: &CMatrix) -> CMatrix {
        let k = self.qset.len();
        CMatrix::from_fn(k, k, |r, c| lambda[(self.qset[r], self.qset[c])])
    }
}

#[derive(Debug, Clone)]
pub struct SensorDecomposition {
    n: usize,
    sensors: Vec<SensorSubspace>,
    fusion_sets: Vec<Vec<usize>>,
}

impl SensorDecomposition {
    pub fn build(model: &SystemModel) -> Self {
        let n = model.n();
        let sensors: Vec<SensorSubspace> = (0..model.m())
            .map(|i| {
                let o = observability_matrix(model, i);
                let qset = observable_index_set(&o);
                let h = projection_matrix(&qset, n).expect("indices come from O_i");
                let c_tilde = model.c_row(i) * h.transpose();
                SensorSubspace { sensor: i, o, qset, h, c_tilde }
            })
            .collect();
        let mut fusion_sets = vec![Vec::new(); n];
        for s in &sensors {
            for &j in &s.qset {
                fusion_sets[j].push(s.sensor);
            }
        }
        SensorDecomposition { n, sensors, fusion_sets }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sensors(&self) -> &[SensorSubspace] {
        &self.sensors
    }

    pub fn sensor(&self, i: usize) -> &SensorSubspace {
        &self.sensors[i]
    }

    /// `F_j` for every state, possibly empty.
    pub fn raw_fusion_sets(&self) -> &[Vec<usize>] {
        &self.fusion_sets
    }

    /// `F_j` for every state; fails on the first state no sensor observes.
    pub fn fusion_sets(&self) -> Result<&[Vec<usize>]> {
        match self.unobservable_states().first() {
            Some(&j) => Err(Error::UnobservableState(j)),
            None => Ok(&self.fusion_sets),
        }
    }

    pub fn unobservable_states(&self) -> Vec<usize> {
        (0..self.n).filter(|&j| self.fusion_sets[j].is_empty()).collect()
    }

    /// `(Ã_i(dt), C̃_i)`.
    pub fn reduced_transition(&self, model: &SystemModel, i: usize, dt: f64) -> (CMatrix, CMatrix) {
        let s = &self.sensors[i];
        (s.restrict(&model.state_transition(dt)), s.c_tilde.clone())
    }
}

/// Rows `C_i·A^k`, `k = 0..n−1`.
pub fn observability_matrix(model: &SystemModel, sensor: usize) -> CMatrix {
    let n = model.n();
    let mut o = CMatrix::zeros(n, n);
    let mut row = model.c_row(sensor);
    for k in 0..n {
        o.set_row(k, &row.row(0));
        if k + 1 < n {
            row = &row * model.a();
        }
    }
    o
}

/// Columns of `o` that carry a nonzero entry.
///
/// Each row is judged against its own scale, `EPS_RANK·max(1, max_j |o_kj|)`,
/// because rows `C_i·A^k` grow like `|λ|^k` and a single global threshold
/// would swallow the contributions of small or zero eigenvalues.
pub fn observable_index_set(o: &CMatrix) -> Vec<usize> {
    let mut keep = vec![false; o.ncols()];
    for row in o.row_iter() {
        let scale = row.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        for (j, z) in row.iter().enumerate() {
            if z.norm() > EPS_RANK * scale {
                keep[j] = true;
            }
        }
    }
    (0..o.ncols()).filter(|&j| keep[j]).collect()
}

pub fn projection_matrix(qset: &[usize], n: usize) -> Result<CMatrix> {
    if let Some(&bad) = qset.iter().find(|&&j| j >= n) {
        return Err(Error::Dimension(format!("state index {} exceeds n = {n}", bad + 1)));
    }
    if qset.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Dimension("index set must be strictly ascending".into()));
    }
    let mut h = CMatrix::zeros(qset.len(), n);
    for (r, &j) in qset.iter().enumerate() {
        h[(r, j)] = ONE;
    }
    Ok(h)
}

/// Outcome of an `s`-sparse observability check.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCertificate {
    pub s: usize,
    pub observable: bool,
    /// Removed sensors (0-based) that break observability.
    pub witness: Option<Vec<usize>>,
    /// Eigenvalues whose PBH test fails once the witness is removed.
    pub lost_eigenvalues: Vec<C64>,
    pub subsets_checked: u128,
}

impl fmt::Display for SparseCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.witness {
            None => write!(f, "{}-sparse observable ({} subsets checked)", self.s, self.subsets_checked),
            Some(w) => {
                let ids: Vec<String> = w.iter().map(|i| (i + 1).to_string()).collect();
                write!(f, "not {}-sparse observable: removing sensors {{{}}}", self.s, ids.join(","))?;
                let evs: Vec<String> = self.lost_eigenvalues.iter().map(|&z| crate::system::fmt_c(z)).collect();
                write!(f, " loses eigenvalue(s) {}", evs.join(", "))
            }
        }
    }
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Checks that `(A, C_{I∖S})` is observable for every sensor subset `S`
/// with `|S| = s`, by the PBH test at each distinct eigenvalue. On failure
/// the witness is the removal that loses the most states (first in
/// lexicographic order among ties).
///
/// `rank [A − λI; C'] = n` holds exactly when `C'` has full column rank on
/// `ker(A − λI)`, so the kernel basis is computed once per eigenvalue and
/// each subset only needs the rank of a thin `C'·N_λ`.
pub fn check_sparse_observability(model: &SystemModel, s: usize, cap: u128) -> Result<SparseCertificate> {
    let m = model.m();
    let n = model.n();
    if s >= m {
        return Err(Error::Dimension(format!("sparsity {s} must be below the sensor count {m}")));
    }
    let count = binomial(m, s);
    if count > cap {
        return Err(Error::SubsetOverflow { count, cap });
    }
    let mut eigen: Vec<C64> = Vec::new();
    for ev in model.spectrum() {
        if !eigen.iter().any(|e| (e - ev).norm() <= 1e-12 * (1.0 + ev.norm())) {
            eigen.push(ev);
        }
    }
    let scale = linalg::max_abs(model.c()).max(1.0);
    let projected: Vec<(C64, CMatrix)> = eigen
        .iter()
        .map(|&ev| {
            let shifted = model.a() - CMatrix::identity(n, n) * ev;
            (ev, model.c() * kernel_basis(&shifted))
        })
        .collect();

    let multiplicity: Vec<usize> = eigen
        .iter()
        .map(|ev| model.spectrum().iter().filter(|e| (*e - ev).norm() <= 1e-12 * (1.0 + ev.norm())).count())
        .collect();

    let mut subset: Vec<usize> = (0..s).collect();
    let mut checked: u128 = 0;
    // (states lost, subset, eigenvalues lost) of the most damaging removal.
    let mut worst: Option<(usize, Vec<usize>, Vec<C64>)> = None;
    loop {
        checked += 1;
        let rows: Vec<usize> = (0..m).filter(|i| !subset.contains(i)).collect();
        let mut lost_states = 0;
        let mut lost = Vec::new();
        for (k, (ev, w)) in projected.iter().enumerate() {
            let g = w.ncols();
            let kept = CMatrix::from_fn(rows.len(), g, |r, c| w[(rows[r], c)]);
            let full = g == 0 || (!rows.is_empty() && rank_abs(&kept, EPS_RANK * scale) == g);
            if !full {
                lost_states += multiplicity[k];
                lost.push(*ev);
            }
        }
        if lost_states > worst.as_ref().map_or(0, |w| w.0) {
            worst = Some((lost_states, subset.clone(), lost));
        }
        if !next_combination(&mut subset, m) {
            break;
        }
    }
    Ok(match worst {
        None => SparseCertificate { s, observable: true, witness: None, lost_eigenvalues: Vec::new(), subsets_checked: checked },
        Some((_, witness, lost)) => SparseCertificate {
            s,
            observable: false,
            witness: Some(witness),
            lost_eigenvalues: lost,
            subsets_checked: checked,
        },
    })
}

/// Orthonormal basis of the numerical kernel of a square matrix.
fn kernel_basis(m: &CMatrix) -> CMatrix {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = 1e-10 * max.max(1.0);
    let null_rows: Vec<usize> = (0..n).filter(|&k| k >= svd.singular_values.len() || svd.singular_values[k] <= tol).collect();
    CMatrix::from_fn(n, null_rows.len(), |r, c| v_t[(null_rows[c], r)].conj())
}

fn rank_abs(m: &CMatrix, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    m.clone().singular_values().iter().filter(|&&s| s > tol).count()
}

/// Advances `c` to the next `k`-combination of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Plain PBH test of `(A, C)` at every eigenvalue.
pub fn is_observable(model: &SystemModel) -> bool {
    model.m() > 0
        && check_sparse_observability(model, 0, 1).map(|c| c.observable).unwrap_or(false)
}

/// PBH test for an arbitrary pair (used on reduced subsystems).
pub fn pbh_observable(a: &CMatrix, c: &CMatrix) -> Result<bool> {
    let n = a.nrows();
    let scale = linalg::max_abs(a).max(linalg::max_abs(c)).max(1.0);
    for ev in linalg::eigenvalues(a)? {
        let mut stacked = CMatrix::zeros(n + c.nrows(), n);
        stacked.view_mut((0, 0), (n, n)).copy_from(&(a - CMatrix::identity(n, n) * ev));
        stacked.view_mut((n, 0), (c.nrows(), n)).copy_from(c);
        if rank_abs(&stacked, 1e-10 * scale) < n {
            return Ok(false);
        }
    }
    Ok(true)
}
