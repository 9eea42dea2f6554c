//! Linearized swing-equation model of the IEEE 14-bus network.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Branches of the standard 14-bus case, 1-based.
pub const IEEE14_LINES: [(usize, usize); 20] = [
    (1, 2),
    (1, 5),
    (2, 3),
    (2, 4),
    (2, 5),
    (3, 4),
    (4, 5),
    (4, 7),
    (4, 9),
    (5, 6),
    (6, 11),
    (6, 12),
    (6, 13),
    (7, 8),
    (7, 9),
    (9, 10),
    (9, 14),
    (10, 11),
    (12, 13),
    (13, 14),
];

pub const IEEE14_GENERATORS: [usize; 5] = [1, 2, 3, 6, 8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Phase,
    AngularVelocity,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SensorInfo {
    /// 1-based bus number.
    pub bus: usize,
    pub kind: SensorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    pub buses: usize,
    pub generators: Vec<usize>,
    /// Angular momentum `m_i` per bus.
    pub inertia: Vec<f64>,
    /// Damping `D_i` per bus.
    pub damping: Vec<f64>,
    /// `(i, j, t_ij)` with 1-based bus numbers.
    pub lines: Vec<(usize, usize, f64)>,
}

impl GridModel {
    /// Synthetic parameters on the standard topology: `m_i = 1`,
    /// `D_i = 0.8` and unit susceptance everywhere.
    pub fn ieee14() -> Self {
        GridModel {
            buses: 14,
            generators: IEEE14_GENERATORS.to_vec(),
            inertia: vec![1.0; 14],
            damping: vec![0.8; 14],
            lines: IEEE14_LINES.iter().map(|&(i, j)| (i, j, 1.0)).collect(),
        }
    }

    /// Susceptance Laplacian `T` (`T_ii = Σ_j t_ij`, `T_ij = −t_ij`).
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.buses;
        let mut t = DMatrix::zeros(n, n);
        for &(i, j, w) in &self.lines {
            let (i, j) = (i - 1, j - 1);
            t[(i, j)] -= w;
            t[(j, i)] -= w;
            t[(i, i)] += w;
            t[(j, j)] += w;
        }
        t
    }

    fn validate(&self) -> Result<()> {
        let n = self.buses;
        if n == 0 {
            return Err(Error::Model("grid has no buses".into()));
        }
        if self.inertia.len() != n || self.damping.len() != n {
            return Err(Error::Dimension(format!("grid parameters must list {n} buses")));
        }
        if let Some(b) = self.inertia.iter().position(|m| !(*m > 0.0)) {
            return Err(Error::Model(format!("bus {} has non-positive angular momentum", b + 1)));
        }
        if let Some(b) = self.damping.iter().position(|d| !(*d >= 0.0)) {
            return Err(Error::Model(format!("bus {} has negative damping", b + 1)));
        }
        for &(i, j, w) in &self.lines {
            if i == 0 || j == 0 || i > n || j > n || i == j {
                return Err(Error::Model(format!("line ({i}, {j}) is not a valid branch")));
            }
            if !(w > 0.0) {
                return Err(Error::Model(format!("line ({i}, {j}) has non-positive susceptance")));
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(b) = stack.pop() {
            for &(i, j, _) in &self.lines {
                for (u, v) in [(i - 1, j - 1), (j - 1, i - 1)] {
                    if u == b && !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        if let Some(b) = seen.iter().position(|s| !s) {
            return Err(Error::Model(format!("topology is disconnected: bus {} is unreachable from bus 1", b + 1)));
        }
        Ok(())
    }
}

/// `ẋ = A·x` on `x = (θ_1..θ_N, ω_1..ω_N)` and one phase, angular-velocity
/// and power sensor per bus, in that order.
pub fn build_ieee14(grid: &GridModel) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<SensorInfo>)> {
    grid.validate()?;
    let n = grid.buses;
    let t = grid.laplacian();
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        a[(i, n + i)] = 1.0;
        for j in 0..n {
            a[(n + i, j)] = -t[(i, j)] / grid.inertia[i];
        }
        a[(n + i, n + i)] = -grid.damping[i] / grid.inertia[i];
    }
    let mut c = DMatrix::zeros(3 * n, 2 * n);
    let mut roster = Vec::with_capacity(3 * n);
    for b in 0..n {
        c[(b, b)] = 1.0;
        roster.push(SensorInfo { bus: b + 1, kind: SensorKind::Phase });
    }
    for b in 0..n {
        c[(n + b, n + b)] = 1.0;
        roster.push(SensorInfo { bus: b + 1, kind: SensorKind::AngularVelocity });
    }
    for b in 0..n {
        for j in 0..n {
            c[(2 * n + b, j)] = t[(b, j)];
        }
        roster.push(SensorInfo { bus: b + 1, kind: SensorKind::Power });
    }
    Ok((a, c, roster))
}

/// 0-based sensor index of a given kind on a 1-based bus.
pub fn sensor_index(buses: usize, bus: usize, kind: SensorKind) -> usize {
    let offset = match kind {
        SensorKind::Phase => 0,
        SensorKind::AngularVelocity => buses,
        SensorKind::Power => 2 * buses,
    };
    offset + bus - 1
}
