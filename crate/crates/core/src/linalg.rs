//! Symmetric pentadiagonal matrices with a cached banded Cholesky factor,
//! plus a small dense Jacobi eigenvalue routine used by the certificates.

use std::sync::OnceLock;

use crate::error::{usage, Error, Result};

/// Symmetric matrix with bandwidth 2. Each band is stored once, so the
/// matrix is symmetric by construction.
#[derive(Debug)]
pub struct BandedSpd {
    diag: Vec<f64>,
    off1: Vec<f64>,
    off2: Vec<f64>,
    factor: OnceLock<std::result::Result<BandCholesky, Error>>,
}

impl Clone for BandedSpd {
    fn clone(&self) -> Self {
        // the clone recomputes its own factor on demand
        BandedSpd::from_bands(self.diag.clone(), self.off1.clone(), self.off2.clone())
            .expect("bands already validated")
    }
}

impl PartialEq for BandedSpd {
    fn eq(&self, other: &Self) -> bool {
        self.diag == other.diag && self.off1 == other.off1 && self.off2 == other.off2
    }
}

/// Lower factor `L` with `A = L Lᵀ`; `l0` is the diagonal, `l1[i] = L[i+1][i]`,
/// `l2[i] = L[i+2][i]`.
#[derive(Debug, Clone)]
struct BandCholesky {
    l0: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl BandedSpd {
    /// `off1` has length `n - 1` and `off2` length `n - 2`.
    pub fn from_bands(diag: Vec<f64>, off1: Vec<f64>, off2: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 || off1.len() + 1 != n.max(1) || off2.len() + 2 != n.max(2) {
            return Err(usage(format!(
                "band lengths {}/{}/{} do not describe a square matrix",
                diag.len(),
                off1.len(),
                off2.len()
            )));
        }
        Ok(BandedSpd {
            diag,
            off1,
            off2,
            factor: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off1(&self) -> &[f64] {
        &self.off1
    }

    pub fn off2(&self) -> &[f64] {
        &self.off2
    }

    /// `self + shift * I`, with a fresh factor cache.
    pub fn shifted(&self, shift: f64) -> BandedSpd {
        BandedSpd {
            diag: self.diag.iter().map(|d| d + shift).collect(),
            off1: self.off1.clone(),
            off2: self.off2.clone(),
            factor: OnceLock::new(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        match hi - lo {
            0 => self.diag[lo],
            1 => self.off1[lo],
            2 => self.off2[lo],
            _ => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if x.len() != n {
            return Err(usage(format!(
                "vector length {} != matrix dimension {n}",
                x.len()
            )));
        }
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, v)| d * v).collect();
        for i in 0..n.saturating_sub(1) {
            y[i] += self.off1[i] * x[i + 1];
            y[i + 1] += self.off1[i] * x[i];
        }
        for i in 0..n.saturating_sub(2) {
            y[i] += self.off2[i] * x[i + 2];
            y[i + 2] += self.off2[i] * x[i];
        }
        Ok(y)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim())
            .map(|i| {
                (i.saturating_sub(2)..(i + 3).min(self.dim()))
                    .map(|j| self.get(i, j).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    fn factor(&self) -> Result<&BandCholesky> {
        self.factor
            .get_or_init(|| BandCholesky::new(self))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Succeeds iff every Cholesky pivot is positive.
    pub fn check_positive_definite(&self) -> Result<()> {
        self.factor().map(|_| ())
    }

    /// Solves `A y = rhs`, factoring on first use.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut y = rhs.to_vec();
        self.solve_in_place(&mut y)?;
        Ok(y)
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) -> Result<()> {
        if rhs.len() != self.dim() {
            return Err(usage(format!(
                "right-hand side length {} != matrix dimension {}",
                rhs.len(),
                self.dim()
            )));
        }
        self.factor()?.solve_in_place(rhs);
        Ok(())
    }
}

impl BandCholesky {
    fn new(a: &BandedSpd) -> Result<Self> {
        let n = a.dim();
        let mut l0 = vec![0.0; n];
        let mut l1 = vec![0.0; n.saturating_sub(1)];
        let mut l2 = vec![0.0; n.saturating_sub(2)];
        for i in 0..n {
            if i >= 2 {
                l2[i - 2] = a.off2[i - 2] / l0[i - 2];
            }
            if i >= 1 {
                let coupling = if i >= 2 { l2[i - 2] * l1[i - 2] } else { 0.0 };
                l1[i - 1] = (a.off1[i - 1] - coupling) / l0[i - 1];
            }
            let mut pivot = a.diag[i];
            if i >= 1 {
                pivot -= l1[i - 1] * l1[i - 1];
            }
            if i >= 2 {
                pivot -= l2[i - 2] * l2[i - 2];
            }
            if pivot.is_nan() || pivot <= 0.0 {
                return Err(Error::NotPositiveDefinite {
                    pivot: i,
                    value: pivot,
                });
            }
            l0[i] = pivot.sqrt();
        }
        Ok(BandCholesky { l0, l1, l2 })
    }

    fn solve_in_place(&self, y: &mut [f64]) {
        let n = y.len();
        // L z = y
        for i in 0..n {
            let mut v = y[i];
            if i >= 1 {
                v -= self.l1[i - 1] * y[i - 1];
            }
            if i >= 2 {
                v -= self.l2[i - 2] * y[i - 2];
            }
            y[i] = v / self.l0[i];
        }
        // Lᵀ x = z
        for i in (0..n).rev() {
            let mut v = y[i];
            if i + 1 < n {
                v -= self.l1[i] * y[i + 1];
            }
            if i + 2 < n {
                v -= self.l2[i] * y[i + 2];
            }
            y[i] = v / self.l0[i];
        }
    }
}

/// Eigenvalues of a dense symmetric matrix by cyclic Jacobi rotations,
/// returned in ascending order.
pub fn jacobi_eigenvalues(matrix: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = matrix.len();
    if matrix.iter().any(|row| row.len() != n) {
        return Err(usage("Jacobi eigenvalues need a square matrix"));
    }
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let scale: f64 = a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (rp, rq) = (row[p], row[q]);
                    row[p] = c * rp - s * rq;
                    row[q] = s * rp + c * rq;
                }
                let (upper, lower) = a.split_at_mut(q);
                for (ap, aq) in upper[p].iter_mut().zip(lower[0].iter_mut()) {
                    let (vp, vq) = (*ap, *aq);
                    *ap = c * vp - s * vq;
                    *aq = s * vp + c * vq;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BandedSpd {
        BandedSpd::from_bands(vec![4.0; 6], vec![-1.0; 5], vec![0.5; 4]).unwrap()
    }

    #[test]
    fn band_lengths_checked() {
        assert!(BandedSpd::from_bands(vec![1.0; 3], vec![0.0; 3], vec![0.0; 1]).is_err());
        assert!(BandedSpd::from_bands(vec![], vec![], vec![]).is_err());
        assert!(BandedSpd::from_bands(vec![2.0], vec![], vec![]).is_ok());
    }

    #[test]
    fn zero_rhs_gives_zero() {
        assert_eq!(sample().solve(&[0.0; 6]).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn non_spd_reports_pivot() {
        let m = BandedSpd::from_bands(vec![1.0, 1.0, 1.0], vec![2.0, 0.0], vec![0.0]).unwrap();
        match m.solve(&[1.0, 1.0, 1.0]) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn multiply_then_solve() {
        let m = sample();
        let x = [1.0, -2.0, 3.0, 0.5, 0.0, 7.0];
        let y = m.mul_vec(&x).unwrap();
        let back = m.solve(&y).unwrap();
        for (u, v) in back.iter().zip(x) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!(m.solve(&[1.0]).is_err());
    }

    #[test]
    fn jacobi_on_diagonal_and_2x2() {
        let eig = jacobi_eigenvalues(&[vec![3.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert_eq!(eig, vec![-1.0, 3.0]);
        let eig = jacobi_eigenvalues(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert!((eig[0] - 1.0).abs() < 1e-14 && (eig[1] - 3.0).abs() < 1e-14);
    }
}
