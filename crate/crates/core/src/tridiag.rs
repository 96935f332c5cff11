//! Direct tridiagonal solvers (Thomas forward/backward sweeps).
//!
//! Systems here are diagonally dominant by construction (conservative
//! differencing with Dirichlet rows), so no pivoting is performed.

/// Solve `a[i]*x[i-1] + b[i]*x[i] + c[i]*x[i+1] = f[i]` in place.
///
/// `a[0]` and `c[n-1]` are ignored. `x` doubles as the right-hand side on
/// input and holds the solution on output. `scratch` must have length n.
pub fn solve_in_place(a: &[f64], b: &[f64], c: &[f64], x: &mut [f64], scratch: &mut [f64]) {
    let n = x.len();
    assert!(n >= 2, "tridiagonal system needs at least 2 unknowns");
    assert!(a.len() == n && b.len() == n && c.len() == n && scratch.len() == n);

    // scratch holds the modified upper diagonal.
    let mut beta = b[0];
    scratch[0] = c[0] / beta;
    x[0] /= beta;
    for i in 1..n {
        beta = b[i] - a[i] * scratch[i - 1];
        scratch[i] = c[i] / beta;
        x[i] = (x[i] - a[i] * x[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        x[i] -= scratch[i] * x[i + 1];
    }
}

/// Pre-factored tridiagonal system for repeated solves with a fixed matrix.
///
/// The Poisson matrix never changes during a transient run, so the forward
/// elimination coefficients are computed once and each solve costs a single
/// forward/backward pass over the right-hand side.
#[derive(Debug, Clone)]
pub struct Factorized {
    /// Modified upper diagonal c_i / beta_i.
    upper: Vec<f64>,
    /// 1 / beta_i.
    inv_diag: Vec<f64>,
    /// Original sub-diagonal (needed in the forward pass).
    lower: Vec<f64>,
}

impl Factorized {
    pub fn new(a: &[f64], b: &[f64], c: &[f64]) -> Self {
        let n = b.len();
        assert!(n >= 2 && a.len() == n && c.len() == n);
        let mut upper = vec![0.0; n];
        let mut inv_diag = vec![0.0; n];
        let mut beta = b[0];
        inv_diag[0] = 1.0 / beta;
        upper[0] = c[0] / beta;
        for i in 1..n {
            beta = b[i] - a[i] * upper[i - 1];
            inv_diag[i] = 1.0 / beta;
            upper[i] = c[i] * inv_diag[i];
        }
        Factorized { upper, inv_diag, lower: a.to_vec() }
    }

    pub fn len(&self) -> usize {
        self.inv_diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_diag.is_empty()
    }

    /// Solve with `x` as right-hand side on input, solution on output.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(x.len(), n);
        x[0] *= self.inv_diag[0];
        for i in 1..n {
            x[i] = (x[i] - self.lower[i] * x[i - 1]) * self.inv_diag[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.upper[i] * x[i + 1];
        }
    }
}
