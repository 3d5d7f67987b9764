//! Linear POD baseline by the method of snapshots.
//!
//! Modes come from the eigendecomposition of the `K x K` snapshot Gram matrix
//! (no mean subtraction). The lifted modes are re-orthonormalized by modified
//! Gram-Schmidt with a second pass, which keeps the basis orthonormal to
//! rounding even where the Gram eigenvalues have lost relative accuracy.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snapshot::relative_l1_error;

/// Directions whose orthogonalized norm falls below this fraction of the
/// largest singular value are treated as outside the snapshot span.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodBasis {
    /// Orthonormal columns, each of length `N`.
    pub modes: Vec<Vec<f64>>,
    /// Nonincreasing, one per mode.
    pub singular_values: Vec<f64>,
}

impl PodBasis {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn dim(&self) -> usize {
        self.modes.first().map_or(0, Vec::len)
    }

    /// Coefficients `Psi^T s` on all modes.
    pub fn coefficients(&self, s: &[f64]) -> Vec<f64> {
        self.modes.iter().map(|m| dot(m, s)).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

/// POD basis of the columns `snapshots[k]`.
pub fn compute(snapshots: &[Vec<f64>]) -> Result<PodBasis> {
    let k = snapshots.len();
    if k == 0 {
        return Err(Error::TooFewSnapshots { needed: 1, got: 0 });
    }
    let n = snapshots[0].len();
    if let Some(bad) = snapshots.iter().find(|s| s.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: bad.len(),
        });
    }
    let s = DMatrix::from_fn(n, k, |i, j| snapshots[j][i]);
    let gram = s.transpose() * &s;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let sigma_max = eig.eigenvalues[order[0]].max(0.0).sqrt();
    if sigma_max == 0.0 {
        return Ok(PodBasis {
            modes: Vec::new(),
            singular_values: Vec::new(),
        });
    }

    let mut modes: Vec<Vec<f64>> = Vec::new();
    let mut singular_values = Vec::new();
    for &j in &order {
        let v = eig.eigenvectors.column(j);
        let mut m = vec![0.0; n];
        for (c, &vc) in v.iter().enumerate() {
            if vc != 0.0 {
                axpy(&mut m, vc, &snapshots[c]);
            }
        }
        for _ in 0..2 {
            for q in &modes {
                let a = dot(q, &m);
                axpy(&mut m, -a, q);
            }
        }
        let norm = dot(&m, &m).sqrt();
        if norm <= RANK_TOL * sigma_max {
            continue;
        }
        m.iter_mut().for_each(|x| *x /= norm);
        modes.push(m);
        singular_values.push(eig.eigenvalues[j].max(0.0).sqrt());
    }
    // lifting can reorder nearly equal values by rounding; keep the sequence monotone
    for i in 1..singular_values.len() {
        if singular_values[i] > singular_values[i - 1] {
            singular_values[i] = singular_values[i - 1];
        }
    }
    Ok(PodBasis { modes, singular_values })
}

/// Orthogonal projection of `s` onto the first `n` modes.
pub fn reconstruct(basis: &PodBasis, s: &[f64], n: usize) -> Result<Vec<f64>> {
    if n > basis.n_modes() {
        return Err(Error::ModeOutOfRange {
            requested: n,
            available: basis.n_modes(),
        });
    }
    if s.len() != basis.dim() && n > 0 {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: s.len(),
        });
    }
    let mut out = vec![0.0; s.len()];
    for m in &basis.modes[..n] {
        axpy(&mut out, dot(m, s), m);
    }
    Ok(out)
}

/// Relative L1 projection errors of every snapshot for `n = 1..=n_modes`.
///
/// Row `n - 1` holds the errors with `n` modes, one entry per snapshot.
pub fn error_table(basis: &PodBasis, snapshots: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let r = basis.n_modes();
    let per_snapshot: Vec<Vec<f64>> = snapshots
        .par_iter()
        .map(|s| {
            let mut approx = vec![0.0; s.len()];
            basis
                .modes
                .iter()
                .map(|m| {
                    axpy(&mut approx, dot(m, s), m);
                    relative_l1_error(s, &approx)
                })
                .collect()
        })
        .collect();
    (0..r).map(|n| per_snapshot.iter().map(|e| e[n]).collect()).collect()
}

/// Mean and maximum of each row of an error table.
pub fn summarize(table: &[Vec<f64>]) -> Vec<(f64, f64)> {
    table
        .iter()
        .map(|row| {
            let mean = row.iter().sum::<f64>() / row.len().max(1) as f64;
            let max = row.iter().copied().fold(0.0, f64::max);
            (mean, max)
        })
        .collect()
}

/// Which statistic of the per-snapshot errors a tolerance applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorStat {
    Mean,
    Max,
}

/// Smallest `n >= 1` whose statistic is below `eps`, or `None` when no
/// available mode count reaches it.
pub fn first_below(summary: &[(f64, f64)], eps: f64, stat: ErrorStat) -> Option<usize> {
    summary
        .iter()
        .position(|&(mean, max)| match stat {
            ErrorStat::Mean => mean < eps,
            ErrorStat::Max => max < eps,
        })
        .map(|p| p + 1)
}

/// Smallest mode count with mean relative L1 error below `eps`.
pub fn modes_for_tolerance(basis: &PodBasis, snapshots: &[Vec<f64>], eps: f64) -> Option<usize> {
    first_below(&summarize(&error_table(basis, snapshots)), eps, ErrorStat::Mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l2(v: &[f64]) -> f64 {
        dot(v, v).sqrt()
    }

    #[test]
    fn single_snapshot_gives_normalized_mode() {
        let s = vec![3.0, 4.0, 0.0];
        let b = compute(std::slice::from_ref(&s)).unwrap();
        assert_eq!(b.n_modes(), 1);
        assert!((b.singular_values[0] - 5.0).abs() < 1e-12);
        let m = &b.modes[0];
        let sign = m[0].signum();
        for (a, e) in m.iter().zip([0.6, 0.8, 0.0]) {
            assert!((a * sign - e).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_two_set() {
        let a = [1.0, 0.0, 2.0, 1.0];
        let b = [0.0, 1.0, 1.0, -1.0];
        let snaps: Vec<Vec<f64>> = (0..6)
            .map(|k| {
                let (p, q) = (k as f64 + 1.0, 2.0 - k as f64 * 0.3);
                a.iter().zip(&b).map(|(x, y)| p * x + q * y).collect()
            })
            .collect();
        let basis = compute(&snaps).unwrap();
        assert_eq!(basis.n_modes(), 2);
        assert_eq!(modes_for_tolerance(&basis, &snaps, 1e-6), Some(2));
        assert_eq!(modes_for_tolerance(&basis, &snaps, 1.0), Some(1));
    }

    #[test]
    fn orthogonal_snapshot_projects_to_zero() {
        let basis = compute(&[vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0]]).unwrap();
        let r = reconstruct(&basis, &[0.0, 0.0, 5.0], 2).unwrap();
        assert!(l2(&r) < 1e-14);
        assert!(matches!(
            reconstruct(&basis, &[0.0, 0.0, 5.0], 3),
            Err(Error::ModeOutOfRange { .. })
        ));
    }

    #[test]
    fn matches_direct_svd() {
        let snaps: Vec<Vec<f64>> = (0..7)
            .map(|k| {
                (0..20)
                    .map(|i| ((i * (k + 2)) as f64 * 0.37).sin() + 0.1 * k as f64)
                    .collect()
            })
            .collect();
        let basis = compute(&snaps).unwrap();
        let s = DMatrix::from_fn(20, 7, |i, j| snaps[j][i]);
        let mut sv: Vec<f64> = s.svd(false, false).singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(basis.n_modes(), 7);
        for (a, b) in basis.singular_values.iter().zip(&sv) {
            assert!((a - b).abs() <= 1e-8 * b, "{a} vs {b}");
        }
        for (i, mi) in basis.modes.iter().enumerate() {
            for (j, mj) in basis.modes.iter().enumerate() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((dot(mi, mj) - e).abs() < 1e-10);
            }
        }
        for s in &snaps {
            let r = reconstruct(&basis, s, 7).unwrap();
            assert!(relative_l1_error(s, &r) < 1e-8);
        }
    }
}
