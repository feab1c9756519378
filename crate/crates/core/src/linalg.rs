//! Dense complex linear algebra helpers shared by the Fock and spin code.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

/// Tolerance used to decide Hermiticity of states and observables.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues of a state may dip this far below zero from truncation noise.
pub const NEGATIVITY_TOL: f64 = 1e-10;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn hermitian_defect(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(M + M†)/2`; removes rounding asymmetry before an eigensolve.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    let mut h = m.clone();
    h += m.adjoint();
    h *= c(0.5, 0.0);
    h
}

/// Eigen-decomposition of a Hermitian matrix. Columns of the returned matrix
/// are the eigenvectors.
pub fn hermitian_eigen(m: &CMatrix) -> (DVector<f64>, CMatrix) {
    let eig = hermitize(m).symmetric_eigen();
    (eig.eigenvalues, eig.eigenvectors)
}

pub fn hermitian_eigenvalues(m: &CMatrix) -> DVector<f64> {
    hermitize(m).symmetric_eigenvalues()
}

/// `exp(-i t H)` for Hermitian `H`, through its spectral decomposition.
pub fn unitary_exp(h: &CMatrix, t: f64) -> CMatrix {
    let (vals, vecs) = hermitian_eigen(h);
    let mut scaled = vecs.clone();
    for (k, lambda) in vals.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, -t * lambda);
        for x in scaled.column_mut(k).iter_mut() {
            *x *= phase;
        }
    }
    scaled * vecs.adjoint()
}

/// Sum of absolute eigenvalues of a Hermitian matrix.
///
/// Eigenvalues below the solver tolerance (relative to the spectral radius)
/// are flushed to zero so round-off does not accumulate into the sum.
pub fn trace_norm(h: &CMatrix) -> f64 {
    if h.nrows() == 0 {
        return 0.0;
    }
    let vals = hermitian_eigenvalues(h);
    let scale = vals.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    vals.iter()
        .map(|v| v.abs())
        .filter(|v| *v > HERMITIAN_TOL * scale)
        .sum()
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// `U A U†`
pub fn conjugate(u: &CMatrix, a: &CMatrix) -> CMatrix {
    u * a * u.adjoint()
}

/// Smallest eigenvalue of a Hermitian matrix (0 for empty input).
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    hermitian_eigenvalues(m).min()
}

/// Natural log of `k!`, exact summation for small `k` and Stirling series above.
pub fn ln_factorial(k: usize) -> f64 {
    if k < LN_FACT_TABLE {
        return ln_fact_table()[k];
    }
    let x = k as f64 + 1.0;
    // Stirling series for ln Γ(x), accurate to ~1e-15 relative for x > 256.
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
        - 1.0 / (360.0 * x.powi(3))
        + 1.0 / (1260.0 * x.powi(5))
}

const LN_FACT_TABLE: usize = 1024;

fn ln_fact_table() -> &'static [f64; LN_FACT_TABLE] {
    use std::sync::OnceLock;
    static TABLE: OnceLock<[f64; LN_FACT_TABLE]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0; LN_FACT_TABLE];
        for k in 1..LN_FACT_TABLE {
            t[k] = t[k - 1] + (k as f64).ln();
        }
        t
    })
}

pub fn ln_binomial(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    ln_binomial(n, k).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_factorial_matches_direct_products() {
        let mut acc = 0.0;
        for k in 1..1500usize {
            acc += (k as f64).ln();
            let rel = (ln_factorial(k) - acc).abs() / acc.max(1.0);
            assert!(rel < 1e-13, "k={k} rel={rel}");
        }
    }

    #[test]
    fn unitary_exp_of_pauli_x() {
        let mut x = CMatrix::zeros(2, 2);
        x[(0, 1)] = c(1.0, 0.0);
        x[(1, 0)] = c(1.0, 0.0);
        let t = 0.7;
        let u = unitary_exp(&x, t);
        // exp(-i t X) = cos t I - i sin t X
        assert!((u[(0, 0)] - c(t.cos(), 0.0)).norm() < 1e-14);
        assert!((u[(0, 1)] - c(0.0, -t.sin())).norm() < 1e-14);
    }

    #[test]
    fn trace_norm_of_diagonal() {
        let m = CMatrix::from_diagonal(&DVector::from_vec(vec![
            c(0.5, 0.0),
            c(-0.25, 0.0),
            c(0.0, 0.0),
        ]));
        assert!((trace_norm(&m) - 0.75).abs() < 1e-15);
    }
}
