//! Entry-wise median fusion of lifted local estimates.

use crate::error::{Error, Result};
use crate::linalg::{CVector, C64};
use crate::observability::SensorDecomposition;
use crate::system::SystemModel;

/// Median with the even-count rule `½(f_{n/2} + f_{n/2+1})`.
pub fn median_entry(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("median input"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    Ok(if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) })
}

/// Values offered for one state entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryContributions {
    pub sensors: Vec<usize>,
    pub values: Vec<C64>,
}

impl EntryContributions {
    pub fn sorted_re(&self) -> Vec<f64> {
        sorted(self.values.iter().map(|z| z.re))
    }

    pub fn sorted_im(&self) -> Vec<f64> {
        sorted(self.values.iter().map(|z| z.im))
    }
}

fn sorted(it: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = it.collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedEstimate {
    pub k: usize,
    pub t: f64,
    pub x_hat: CVector,
    pub entries: Vec<EntryContributions>,
}

/// Fuses estimates over the sets `F_j` of a decomposition.
#[derive(Debug, Clone)]
pub struct Fuser {
    fusion_sets: Vec<Vec<usize>>,
    positions: Vec<Vec<usize>>,
}

impl Fuser {
    /// Fails if some state has no observing sensor. States whose `|F_j|`
    /// falls short of `2p + 1` are logged once here.
    pub fn new(decomposition: &SensorDecomposition, p: usize) -> Result<Self> {
        let sets = decomposition.fusion_sets()?.to_vec();
        for (j, set) in sets.iter().enumerate() {
            if set.len() < 2 * p + 1 {
                log::warn!(
                    "insufficient redundancy for entry {}: {} contributors, {} needed against p = {p}",
                    j + 1,
                    set.len(),
                    2 * p + 1
                );
            }
        }
        let positions = sets
            .iter()
            .enumerate()
            .map(|(j, set)| {
                set.iter()
                    .map(|&i| decomposition.sensor(i).qset.binary_search(&j).expect("F_j membership"))
                    .collect()
            })
            .collect();
        Ok(Fuser { fusion_sets: sets, positions })
    }

    pub fn fusion_sets(&self) -> &[Vec<usize>] {
        &self.fusion_sets
    }

    /// `[x̂]_j = med{[H_iᵀη_i]_j : i ∈ F_j}`, real and imaginary parts taken
    /// separately. `etas[i]` is sensor `i`'s local estimate.
    pub fn fuse(&self, k: usize, t: f64, etas: &[CVector]) -> Result<FusedEstimate> {
        let n = self.fusion_sets.len();
        let mut x_hat = CVector::zeros(n);
        let mut entries = Vec::with_capacity(n);
        let mut re = Vec::new();
        let mut im = Vec::new();
        for j in 0..n {
            let set = &self.fusion_sets[j];
            let values: Vec<C64> = set.iter().zip(&self.positions[j]).map(|(&i, &pos)| etas[i][pos]).collect();
            re.clear();
            im.clear();
            re.extend(values.iter().map(|z| z.re));
            im.extend(values.iter().map(|z| z.im));
            x_hat[j] = C64::new(median_entry(&re)?, median_entry(&im)?);
            entries.push(EntryContributions { sensors: set.clone(), values });
        }
        Ok(FusedEstimate { k, t, x_hat, entries })
    }
}

/// One-shot fusion straight from a decomposition.
pub fn fuse(k: usize, t: f64, etas: &[CVector], decomposition: &SensorDecomposition) -> Result<FusedEstimate> {
    Fuser::new(decomposition, 0)?.fuse(k, t, etas)
}

/// A fused entry that left the range of its benign contributors.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichViolation {
    pub entry: usize,
    pub imaginary: bool,
    pub value: f64,
    pub benign_min: f64,
    pub benign_max: f64,
}

/// Checks `min ≤ [x̂]_j ≤ max` over the benign contributors of every entry,
/// for real and imaginary parts. Entries without benign contributors are
/// skipped.
pub fn sandwich_violations(fused: &FusedEstimate, is_benign: impl Fn(usize) -> bool) -> Vec<SandwichViolation> {
    let mut out = Vec::new();
    for (j, entry) in fused.entries.iter().enumerate() {
        for imaginary in [false, true] {
            let part = |z: &C64| if imaginary { z.im } else { z.re };
            let benign: Vec<f64> = entry
                .sensors
                .iter()
                .zip(&entry.values)
                .filter(|(i, _)| is_benign(**i))
                .map(|(_, z)| part(z))
                .collect();
            if benign.is_empty() {
                continue;
            }
            let lo = benign.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = benign.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let value = part(&fused.x_hat[j]);
            if value < lo || value > hi {
                out.push(SandwichViolation { entry: j, imaginary, value, benign_min: lo, benign_max: hi });
            }
        }
    }
    out
}

/// `x̂(t) = Λ(t − t_k)·x̂(t_k)` for `t_k < t < t_next`.
pub fn predict_between(x_hat: &CVector, t_k: f64, t_next: f64, model: &SystemModel, t: f64) -> Result<CVector> {
    if !(t > t_k && t < t_next) {
        return Err(Error::OutOfInterval { t, lo: t_k, hi: t_next });
    }
    Ok(model.state_transition(t - t_k) * x_hat)
}
