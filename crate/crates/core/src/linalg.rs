//! Dense symmetric positive-definite solve for the consequent subproblem.

use alloc::vec::Vec;

/// Row-major symmetric matrix stored in full.
pub(crate) struct SymMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: alloc::vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }

    /// Copy the lower triangle into the upper one.
    pub fn mirror_lower(&mut self) {
        for i in 0..self.n {
            for j in 0..i {
                let v = self.at(i, j);
                *self.at_mut(j, i) = v;
            }
        }
    }
}

/// Pivot below `PIVOT_RTOL * max diagonal` counts as singular.
const PIVOT_RTOL: f64 = 1e-13;

/// Solves `A x = b` in place by Cholesky factorization of the lower
/// triangle of `a`. Returns `None` when `a` is not numerically positive
/// definite.
pub(crate) fn cholesky_solve(mut a: SymMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.n;
    let max_diag = (0..n).map(|i| a.at(i, i)).fold(0.0f64, f64::max);
    let tol = PIVOT_RTOL * max_diag.max(f64::MIN_POSITIVE);
    for j in 0..n {
        let row_j = j * n;
        let mut d = a.data[row_j + j];
        for k in 0..j {
            let l = a.data[row_j + k];
            d -= l * l;
        }
        if !(d > tol) {
            return None;
        }
        let d = libm::sqrt(d);
        a.data[row_j + j] = d;
        for i in (j + 1)..n {
            let row_i = i * n;
            let dot: f64 = a.data[row_i..row_i + j]
                .iter()
                .zip(&a.data[row_j..row_j + j])
                .map(|(x, y)| x * y)
                .sum();
            a.data[row_i + j] = (a.data[row_i + j] - dot) / d;
        }
    }
    // forward: L y = b
    let mut y = b.to_vec();
    for i in 0..n {
        let row_i = i * n;
        let dot: f64 = a.data[row_i..row_i + i]
            .iter()
            .zip(&y[..i])
            .map(|(l, v)| l * v)
            .sum();
        y[i] = (y[i] - dot) / a.data[row_i + i];
    }
    // backward: L^T x = y
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= a.data[k * n + i] * y[k];
        }
        y[i] = s / a.data[i * n + i];
    }
    Some(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        // [[4,2,0],[2,5,1],[0,1,3]] x = [2,1,4]
        let mut a = SymMatrix::zeros(3);
        a.data = alloc::vec![4.0, 2.0, 0.0, 2.0, 5.0, 1.0, 0.0, 1.0, 3.0];
        let x = cholesky_solve(a, &[2.0, 1.0, 4.0]).unwrap();
        let expected = [15.0 / 22.0, -4.0 / 11.0, 16.0 / 11.0];
        for (v, e) in x.iter().zip(expected) {
            assert!((v - e).abs() < 1e-12, "{v} vs {e}");
        }
    }

    #[test]
    fn detects_singular() {
        let mut a = SymMatrix::zeros(2);
        a.data = alloc::vec![1.0, 1.0, 1.0, 1.0];
        assert!(cholesky_solve(a, &[1.0, 1.0]).is_none());
    }
}
