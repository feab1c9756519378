//! Spin-`j` matrices. Spins are labelled by `two_j = 2j` and the basis index
//! `k = j − m` runs from the highest weight (`k = 0`) down to `m = −j`.

use nalgebra::DMatrix;

use crate::linalg::{c, unitary_exp, CMatrix};

pub fn dim(two_j: usize) -> usize {
    two_j + 1
}

/// `J_+`, with `⟨k−1|J_+|k⟩ = √(k(2j−k+1))`.
pub fn j_plus(two_j: usize) -> CMatrix {
    let d = dim(two_j);
    let mut m = CMatrix::zeros(d, d);
    for k in 1..d {
        m[(k - 1, k)] = c(((k * (two_j + 1 - k)) as f64).sqrt(), 0.0);
    }
    m
}

pub fn j_minus(two_j: usize) -> CMatrix {
    j_plus(two_j).adjoint()
}

pub fn j_x(two_j: usize) -> CMatrix {
    let p = j_plus(two_j);
    (&p + p.adjoint()) * c(0.5, 0.0)
}

pub fn j_y(two_j: usize) -> CMatrix {
    let p = j_plus(two_j);
    (&p - p.adjoint()) * c(0.0, -0.5)
}

pub fn j_z(two_j: usize) -> CMatrix {
    let d = dim(two_j);
    let mut m = CMatrix::zeros(d, d);
    for k in 0..d {
        m[(k, k)] = c(two_j as f64 / 2.0 - k as f64, 0.0);
    }
    m
}

/// Rotation by `theta` about the axis `(−sin φ, cos φ, 0)`, which carries
/// `ẑ` to the direction with polar angles `(theta, phi)`.
pub fn rotation(two_j: usize, theta: f64, phi: f64) -> CMatrix {
    let d = dim(two_j);
    if theta == 0.0 {
        return CMatrix::identity(d, d);
    }
    let gen = j_x(two_j) * c(-phi.sin(), 0.0) + j_y(two_j) * c(phi.cos(), 0.0);
    unitary_exp(&gen, theta)
}

/// Calls `visit(2j, d^j(θ))` for every `2j ≤ max_two_j`, where
/// `d^j(θ) = exp(−iθ J_y)` is real.
///
/// Spin `j` is the top component of spin `j−½` coupled to spin `½`, so each
/// matrix follows from the previous one with four terms per entry.
pub fn for_each_small_d(max_two_j: usize, theta: f64, mut visit: impl FnMut(usize, &DMatrix<f64>)) {
    let (s, cs) = (theta / 2.0).sin_cos();
    let mut prev = DMatrix::from_element(1, 1, 1.0);
    visit(0, &prev);
    for tj in 1..=max_two_j {
        let d = tj + 1;
        let inv = 1.0 / tj as f64;
        let up: Vec<f64> = (0..d).map(|k| ((tj - k) as f64 * inv).sqrt()).collect();
        let dn: Vec<f64> = (0..d).map(|k| (k as f64 * inv).sqrt()).collect();
        let pv = prev.as_slice();
        let mut out = vec![0.0; d * d];
        // column-major: entry (k, l) lives at l·rows + k
        for l in 0..d {
            let col = &mut out[l * d..(l + 1) * d];
            if l < tj {
                let a = &pv[l * tj..(l + 1) * tj];
                let (fu, fs) = (up[l] * cs, up[l] * s);
                for k in 0..tj {
                    col[k] += up[k] * fu * a[k];
                    col[k + 1] += dn[k + 1] * fs * a[k];
                }
            }
            if l > 0 {
                let b = &pv[(l - 1) * tj..l * tj];
                let (fu, fs) = (dn[l] * cs, dn[l] * s);
                for k in 0..tj {
                    col[k] -= up[k] * fs * b[k];
                    col[k + 1] += dn[k + 1] * fu * b[k];
                }
            }
        }
        let next = DMatrix::from_vec(d, d, out);
        visit(tj, &next);
        prev = next;
    }
}

/// Real matrix `d^j(θ) = exp(−iθ J_y)`.
pub fn wigner_small_d(two_j: usize, theta: f64) -> DMatrix<f64> {
    let mut out = DMatrix::identity(1, 1);
    for_each_small_d(two_j, theta, |tj, m| {
        if tj == two_j {
            out = m.clone();
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    #[test]
    fn commutation_relations() {
        for two_j in 0..9 {
            let (x, y, z) = (j_x(two_j), j_y(two_j), j_z(two_j));
            let comm = &x * &y - &y * &x;
            assert!(max_abs(&(comm - z.clone() * c(0.0, 1.0))) < 1e-12);
            let cas = &x * &x + &y * &y + &z * &z;
            let j = two_j as f64 / 2.0;
            let d = dim(two_j);
            assert!(max_abs(&(cas - CMatrix::identity(d, d) * c(j * (j + 1.0), 0.0))) < 1e-12);
        }
    }

    #[test]
    fn small_d_matches_complex_exponential() {
        for two_j in [0usize, 1, 2, 7, 20] {
            for theta in [0.3, 1.9, -0.8] {
                let d = wigner_small_d(two_j, theta);
                let full = unitary_exp(&j_y(two_j), theta);
                assert!(max_abs(&(d.map(|x| c(x, 0.0)) - full)) < 1e-12, "2j={two_j} θ={theta}");
            }
        }
    }

    #[test]
    fn rotation_is_unitary_and_moves_z() {
        for two_j in [1usize, 2, 5, 12] {
            let (theta, phi) = (0.7, -1.1);
            let u = rotation(two_j, theta, phi);
            let d = dim(two_j);
            assert!(max_abs(&(u.adjoint() * &u - CMatrix::identity(d, d))) < 1e-12);
            // ⟨j,j| U† J U |j,j⟩ = j·(sinθ cosφ, sinθ sinφ, cosθ)
            let hw = u.column(0).into_owned();
            let ev = |m: &CMatrix| (hw.adjoint() * m * &hw)[(0, 0)].re;
            let j = two_j as f64 / 2.0;
            assert!((ev(&j_x(two_j)) - j * theta.sin() * phi.cos()).abs() < 1e-12);
            assert!((ev(&j_y(two_j)) - j * theta.sin() * phi.sin()).abs() < 1e-12);
            assert!((ev(&j_z(two_j)) - j * theta.cos()).abs() < 1e-12);
        }
    }
}
