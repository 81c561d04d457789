//! Complex tridiagonal systems, factorized once and solved many times.

use num_complex::Complex64;

/// LU factors of a tridiagonal matrix for the Thomas sweep.
#[derive(Debug, Clone)]
pub(crate) struct Factored {
    lower: Vec<Complex64>,
    upper_mod: Vec<Complex64>,
    inv_pivot: Vec<Complex64>,
}

impl Factored {
    /// Factor `(lower, diag, upper)`. `lower[0]` and `upper[n-1]` are ignored.
    /// Returns the index of the first vanishing pivot on failure.
    pub(crate) fn new(lower: &[Complex64], diag: &[Complex64], upper: &[Complex64]) -> Result<Self, usize> {
        let n = diag.len();
        let mut upper_mod = vec![Complex64::new(0.0, 0.0); n];
        let mut inv_pivot = vec![Complex64::new(0.0, 0.0); n];
        let mut prev = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let pivot = if i == 0 { diag[0] } else { diag[i] - lower[i] * prev };
            if !(pivot.norm() > 1e-300) || !pivot.re.is_finite() || !pivot.im.is_finite() {
                return Err(i);
            }
            let inv = pivot.inv();
            inv_pivot[i] = inv;
            prev = if i + 1 < n { upper[i] * inv } else { Complex64::new(0.0, 0.0) };
            upper_mod[i] = prev;
        }
        Ok(Factored { lower: lower.to_vec(), upper_mod, inv_pivot })
    }

    /// Overwrite `rhs` with the solution.
    pub(crate) fn solve(&self, rhs: &mut [Complex64]) {
        let n = rhs.len();
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            let next = rhs[i + 1];
            rhs[i] -= self.upper_mod[i] * next;
        }
    }
}
