//! Block decomposition of `ρ^{⊗n}` for a qubit state `ρ`.
//!
//! `(C²)^{⊗n} = ⊕_j H_j ⊗ C^{n_j}` and `ρ^{⊗n} = ⊕_j p_j ρ_j ⊗ I/n_j`. A
//! decomposition stores `(2j, n_j, p_j, ρ_j)` for each retained block.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::{c, hermitian_defect, ln_binomial, max_abs, min_eigenvalue, trace, CMatrix, NEGATIVITY_TOL};
use crate::spin;

/// Valid `2j` values for `n` qubits, largest first.
pub fn spins(n: usize) -> Vec<usize> {
    (0..=n / 2).map(|i| n - 2 * i).collect()
}

fn check_spin(n: usize, two_j: usize) -> Result<()> {
    if two_j > n || (n - two_j) % 2 != 0 {
        return Err(domain(format!("2j={two_j} is not a valid spin for n={n}")));
    }
    Ok(())
}

/// `n_j = C(n, n/2−j) − C(n, n/2−j−1)`, exact up to `n = 126`.
pub fn multiplicity(n: usize, two_j: usize) -> Result<u128> {
    check_spin(n, two_j)?;
    if n > 126 {
        return Err(Error::Resource(format!("exact multiplicity overflows for n={n}")));
    }
    let k = (n - two_j) / 2;
    let binom = |n: usize, k: usize| -> u128 {
        let mut b: u128 = 1;
        for i in 0..k {
            b = b * (n - i) as u128 / (i + 1) as u128;
        }
        b
    };
    Ok(binom(n, k) - if k == 0 { 0 } else { binom(n, k - 1) })
}

/// `ln n_j`, valid for any `n`.
pub fn ln_multiplicity(n: usize, two_j: usize) -> Result<f64> {
    check_spin(n, two_j)?;
    let k = (n - two_j) / 2;
    Ok(ln_binomial(n, k) + ((two_j + 1) as f64 / (n - k + 1) as f64).ln())
}

/// `n` qubits in the state with Bloch vector `r0·ẑ + u/√n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitModel {
    pub r0: f64,
    pub u: [f64; 3],
    pub n: usize,
}

impl QubitModel {
    pub fn new(r0: f64, u: [f64; 3], n: usize) -> Result<Self> {
        if r0 == 0.0 {
            return Err(Error::Degenerate("reference Bloch length r0 = 0".into()));
        }
        if !(r0 > 0.0 && r0 < 1.0) {
            return Err(domain(format!("reference Bloch length r0={r0} outside (0,1)")));
        }
        if n == 0 {
            return Err(domain("need at least one qubit"));
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(domain("non-finite local parameter"));
        }
        let m = Self { r0, u, n };
        let r = m.bloch_length();
        if r >= 1.0 {
            return Err(domain(format!("Bloch vector length {r} ≥ 1 for u={u:?}, n={n}")));
        }
        Ok(m)
    }

    pub fn bloch_vector(&self) -> [f64; 3] {
        let h = 1.0 / (self.n as f64).sqrt();
        [self.u[0] * h, self.u[1] * h, self.r0 + self.u[2] * h]
    }

    pub fn bloch_length(&self) -> f64 {
        let r = self.bloch_vector();
        (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt()
    }

    /// Larger eigenvalue `(1 + |r|)/2` of the qubit state.
    pub fn mu(&self) -> f64 {
        (1.0 + self.bloch_length()) / 2.0
    }

    pub fn s(&self) -> f64 {
        crate::gaussian::s_from_bloch_length(self.r0)
    }

    pub fn u_norm(&self) -> f64 {
        self.u.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Whether `‖u‖ ≤ n^ε`.
    pub fn is_local(&self, epsilon: f64) -> bool {
        self.u_norm() <= (self.n as f64).powf(epsilon)
    }

    /// Polar angles `(θ, φ)` of the Bloch vector.
    pub fn angles(&self) -> (f64, f64) {
        let r = self.bloch_vector();
        let len = self.bloch_length();
        if len == 0.0 {
            return (0.0, 0.0);
        }
        ((r[2] / len).clamp(-1.0, 1.0).acos(), r[1].atan2(r[0]))
    }

    /// `(1 + r·σ)/2`.
    pub fn qubit_state(&self) -> CMatrix {
        let r = self.bloch_vector();
        CMatrix::from_row_slice(
            2,
            2,
            &[c((1.0 + r[2]) / 2.0, 0.0), c(r[0] / 2.0, -r[1] / 2.0), c(r[0] / 2.0, r[1] / 2.0), c((1.0 - r[2]) / 2.0, 0.0)],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockLawMode {
    Exact,
    Binomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockLaw {
    /// `(2j, p_j)`, largest spin first.
    pub entries: Vec<(usize, f64)>,
    /// Mass removed by renormalisation (binomial mode) or rounding (exact mode).
    pub deficit: f64,
}

/// `ln Σ_{k=0}^{2j} x^k` for `0 ≤ x ≤ 1`.
fn ln_geometric_sum(x: f64, terms: usize) -> f64 {
    if x >= 1.0 {
        return (terms as f64).ln();
    }
    ((-(x.powi(terms as i32))).ln_1p() - (-x).ln_1p()).max(0.0)
}

fn ln_block_probability(n: usize, two_j: usize, mu: f64) -> f64 {
    let a = ((n + two_j) / 2) as f64;
    let b = ((n - two_j) / 2) as f64;
    let ratio = (1.0 - mu) / mu;
    ln_multiplicity(n, two_j).expect("valid spin") + a * mu.ln() + b * (1.0 - mu).ln() + ln_geometric_sum(ratio, two_j + 1)
}

pub fn block_probabilities(model: &QubitModel, mode: BlockLawMode) -> BlockLaw {
    let n = model.n;
    let mu = model.mu();
    let raw: Vec<(usize, f64)> = spins(n)
        .into_iter()
        .map(|tj| {
            let lp = match mode {
                BlockLawMode::Exact => ln_block_probability(n, tj, mu),
                BlockLawMode::Binomial => {
                    let a = (n + tj) / 2;
                    ln_binomial(n, a) + a as f64 * mu.ln() + (n - a) as f64 * (1.0 - mu).ln()
                }
            };
            (tj, lp.exp())
        })
        .collect();
    let total: f64 = raw.iter().map(|e| e.1).sum();
    BlockLaw { entries: raw.iter().map(|&(tj, p)| (tj, p / total)).collect(), deficit: 1.0 - total }
}

fn block_weights(mu: f64, two_j: usize) -> Vec<f64> {
    let ratio = (1.0 - mu) / mu;
    let mut w: Vec<f64> = (0..=two_j).map(|k| ratio.powi(k as i32)).collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    w
}

/// `R_z(φ) d diag(w) dᵀ R_z(φ)†`. `R_z(φ)†` commutes with the diagonal, so
/// only a real product and the phases `e^{−i(m_k − m_l)φ}` are needed.
fn rotated_block(small: &DMatrix<f64>, w: &[f64], phi: f64) -> CMatrix {
    let d = w.len();
    let mut scaled = small.clone();
    for (k, wk) in w.iter().enumerate() {
        scaled.column_mut(k).scale_mut(*wk);
    }
    let real = scaled * small.transpose();
    // m_k − m_l = l − k
    let ph: Vec<Complex64> = (0..d).map(|k| Complex64::from_polar(1.0, k as f64 * phi)).collect();
    CMatrix::from_fn(d, d, |k, l| ph[k] * ph[l].conj() * real[(k, l)])
}

/// `ρ_j = π_j(U) diag(w_k) π_j(U)†` with `w_k ∝ ((1−μ)/μ)^k` and `U` the
/// rotation taking `ẑ` to the Bloch direction.
pub fn block_state(model: &QubitModel, two_j: usize) -> Result<CMatrix> {
    check_spin(model.n, two_j)?;
    let w = block_weights(model.mu(), two_j);
    let (theta, phi) = model.angles();
    Ok(rotated_block(&spin::wigner_small_d(two_j, theta), &w, phi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub two_j: usize,
    pub multiplicity: f64,
    pub probability: f64,
    pub rho: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockDecomposition {
    pub n: usize,
    pub blocks: Vec<Block>,
    /// Probability of blocks left out because they were negligible.
    pub pruned_mass: f64,
}

impl BlockDecomposition {
    pub fn total_probability(&self) -> f64 {
        self.blocks.iter().map(|b| b.probability).sum()
    }

    pub fn block(&self, two_j: usize) -> Option<&Block> {
        self.blocks.iter().find(|b| b.two_j == two_j)
    }

    /// `Σ_j (2j+1) n_j`.
    pub fn dimension_sum(&self) -> f64 {
        self.blocks.iter().map(|b| (b.two_j + 1) as f64 * b.multiplicity).sum()
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let total = self.total_probability() + self.pruned_mass;
        if (total - 1.0).abs() > tol {
            return Err(Error::Invariant(format!("block probabilities sum to {total}")));
        }
        for b in &self.blocks {
            check_spin(self.n, b.two_j)?;
            if b.rho.nrows() != b.two_j + 1 || !b.rho.is_square() {
                return Err(Error::Shape(format!("block 2j={} has a {}×{} matrix", b.two_j, b.rho.nrows(), b.rho.ncols())));
            }
            if b.probability < 0.0 {
                return Err(Error::Invariant(format!("negative probability at 2j={}", b.two_j)));
            }
            if b.probability == 0.0 {
                continue;
            }
            if (trace(&b.rho).re - 1.0).abs() > tol || hermitian_defect(&b.rho) > 1e-10 {
                return Err(Error::Invariant(format!("block 2j={} is not a unit-trace Hermitian matrix", b.two_j)));
            }
            if min_eigenvalue(&b.rho) < -NEGATIVITY_TOL {
                return Err(Error::Invariant(format!("block 2j={} is not positive", b.two_j)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct BlockJson {
            two_j: usize,
            multiplicity: f64,
            probability: f64,
            matrix: Vec<Vec<[f64; 2]>>,
        }
        #[derive(Serialize)]
        struct DecompJson {
            n: usize,
            pruned_mass: f64,
            blocks: Vec<BlockJson>,
        }
        let blocks = self
            .blocks
            .iter()
            .map(|b| BlockJson {
                two_j: b.two_j,
                multiplicity: b.multiplicity,
                probability: b.probability,
                matrix: (0..b.rho.nrows())
                    .map(|i| (0..b.rho.ncols()).map(|j| [b.rho[(i, j)].re, b.rho[(i, j)].im]).collect())
                    .collect(),
            })
            .collect();
        serde_json::to_value(DecompJson { n: self.n, pruned_mass: self.pruned_mass, blocks }).expect("plain data")
    }
}

/// Exact decomposition of `ρ_{r}^{⊗n}` for the model, dropping blocks with
/// `p_j < prune`.
pub fn decompose(model: &QubitModel, prune: f64) -> Result<BlockDecomposition> {
    let law = block_probabilities(model, BlockLawMode::Exact);
    let kept: Vec<(usize, f64)> = law.entries.iter().copied().filter(|e| e.1 >= prune).collect();
    let pruned_mass = law.entries.iter().filter(|e| e.1 < prune).map(|e| e.1).sum();
    let (theta, phi) = model.angles();
    let mu = model.mu();
    let max_tj = kept.iter().map(|e| e.0).max().unwrap_or(0);
    let mut rotated = Vec::with_capacity(kept.len());
    spin::for_each_small_d(max_tj, theta, |tj, small| {
        if let Some(&(_, p)) = kept.iter().find(|e| e.0 == tj) {
            rotated.push((tj, p, small.clone()));
        }
    });
    let mut blocks = rotated
        .into_par_iter()
        .map(|(tj, p, small)| {
            Ok(Block {
                two_j: tj,
                multiplicity: ln_multiplicity(model.n, tj)?.exp(),
                probability: p,
                rho: rotated_block(&small, &block_weights(mu, tj), phi),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    blocks.sort_by(|a, b| b.two_j.cmp(&a.two_j));
    Ok(BlockDecomposition { n: model.n, blocks, pruned_mass })
}

pub const BRUTE_FORCE_MAX_N: usize = 10;

/// Orthonormal `|j, m⟩` columns (`m = j … −j`) of every coupling path, built
/// by adding one spin-½ at a time with Condon–Shortley coefficients. The new
/// qubit is the least significant bit and bit value 0 is spin up.
fn coupled_bases(n: usize) -> Vec<(usize, CMatrix)> {
    let mut paths = vec![(1usize, CMatrix::identity(2, 2))];
    for _ in 1..n {
        let mut next = Vec::with_capacity(paths.len() * 2);
        for (tj1, v) in &paths {
            let tj1 = *tj1 as i64;
            let rows = v.nrows();
            let norm = (tj1 + 1) as f64;
            let couple = |tj: i64| {
                let d = (tj + 1) as usize;
                let mut w = CMatrix::zeros(rows * 2, d);
                for kk in 0..d {
                    let tm = tj - 2 * kk as i64;
                    let plus = (((tj1 + tm + 1) as f64 / 2.0) / norm).sqrt();
                    let minus = (((tj1 - tm + 1) as f64 / 2.0) / norm).sqrt();
                    let (up, down) = if tj > tj1 { (plus, minus) } else { (-minus, plus) };
                    for (bit, tm1, coef) in [(0usize, tm - 1, up), (1usize, tm + 1, down)] {
                        if tm1.abs() > tj1 || coef == 0.0 {
                            continue;
                        }
                        let k1 = ((tj1 - tm1) / 2) as usize;
                        for i in 0..rows {
                            w[(2 * i + bit, kk)] += v[(i, k1)] * coef;
                        }
                    }
                }
                (tj as usize, w)
            };
            next.push(couple(tj1 + 1));
            if tj1 > 0 {
                next.push(couple(tj1 - 1));
            }
        }
        paths = next;
    }
    paths
}

/// Decomposes `ρ^{⊗n}` by explicit change of basis; an oracle for small `n`.
pub fn brute_force_decompose(rho: &CMatrix, n: usize) -> Result<BlockDecomposition> {
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::Resource(format!("brute force limited to n ≤ {BRUTE_FORCE_MAX_N}, got {n}")));
    }
    if n == 0 {
        return Err(domain("need at least one qubit"));
    }
    if rho.shape() != (2, 2) {
        return Err(Error::Shape("qubit state must be 2×2".into()));
    }
    if hermitian_defect(rho) > 1e-12 || (trace(rho).re - 1.0).abs() > 1e-12 || min_eigenvalue(rho) < -NEGATIVITY_TOL {
        return Err(domain("input is not a qubit density matrix"));
    }
    let mut big = rho.clone();
    for _ in 1..n {
        big = big.kronecker(rho);
    }
    let mut sums: Vec<(usize, CMatrix, usize)> = spins(n).into_iter().map(|tj| (tj, CMatrix::zeros(tj + 1, tj + 1), 0)).collect();
    for (tj, v) in coupled_bases(n) {
        let b = v.adjoint() * &big * &v;
        let slot = sums.iter_mut().find(|s| s.0 == tj).expect("spin present");
        if slot.2 > 0 {
            let first = &slot.1 / Complex64::from(slot.2 as f64);
            if max_abs(&(&first - &b)) > 1e-12 {
                return Err(Error::Invariant(format!("copies of block 2j={tj} differ")));
            }
        }
        slot.1 += b;
        slot.2 += 1;
    }
    let blocks = sums
        .into_iter()
        .map(|(tj, sum, copies)| {
            let avg = sum / Complex64::from(copies as f64);
            let tr = trace(&avg).re;
            let mult = multiplicity(n, tj).expect("small n") as f64;
            debug_assert_eq!(mult as usize, copies);
            let rho = if tr > 1e-300 { avg / Complex64::from(tr) } else { avg };
            Block { two_j: tj, multiplicity: mult, probability: mult * tr, rho }
        })
        .collect();
    Ok(BlockDecomposition { n, blocks, pruned_mass: 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinMoments {
    pub mean: [f64; 3],
    pub variance: [f64; 3],
}

/// Moments of `L_a = Σ_i σ_a^{(i)}` under `ρ^{⊗n}`.
pub fn collective_spin_moments(model: &QubitModel) -> SpinMoments {
    let r = model.bloch_vector();
    let n = model.n as f64;
    SpinMoments { mean: r.map(|x| n * x), variance: r.map(|x| n * (1.0 - x * x)) }
}

/// `⟨L_a⟩` computed from the blocks, `L = 2J` on every block.
pub fn block_spin_means(d: &BlockDecomposition) -> [f64; 3] {
    let mut out = [0.0; 3];
    for b in &d.blocks {
        for (a, op) in [spin::j_x(b.two_j), spin::j_y(b.two_j), spin::j_z(b.two_j)].iter().enumerate() {
            out[a] += 2.0 * b.probability * trace(&(&b.rho * op)).re;
        }
    }
    out
}

/// `Σ_j p_j ⟨J_+⟩_j / √(2j)`: the oscillator amplitude seen through the blocks.
pub fn block_oscillator_mean(d: &BlockDecomposition) -> Complex64 {
    d.blocks
        .iter()
        .filter(|b| b.two_j > 0)
        .map(|b| trace(&(&b.rho * spin::j_plus(b.two_j))) * b.probability / (b.two_j as f64).sqrt())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::displacement_amplitude;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn mixed(mu: f64) -> CMatrix {
        DMatrix::from_row_slice(2, 2, &[mu, 0.0, 0.0, 1.0 - mu]).map(|x| c(x, 0.0))
    }

    #[test]
    fn multiplicity_examples() {
        assert_eq!((multiplicity(2, 2).unwrap(), multiplicity(2, 0).unwrap()), (1, 1));
        assert_eq!([4, 2, 0].map(|tj| multiplicity(4, tj).unwrap()), [1, 3, 2]);
        assert_eq!([3, 1].map(|tj| multiplicity(3, tj).unwrap()), [1, 2]);
        assert!(multiplicity(4, 1).is_err());
        assert!(multiplicity(4, 6).is_err());
    }

    #[test]
    fn dimension_identity() {
        for n in 1..=64usize {
            let total: u128 = spins(n).into_iter().map(|tj| (tj as u128 + 1) * multiplicity(n, tj).unwrap()).sum();
            assert_eq!(total, 1u128 << n, "n={n}");
            let ln_total: f64 = spins(n).into_iter().map(|tj| (tj + 1) as f64 * ln_multiplicity(n, tj).unwrap().exp()).sum();
            assert!((ln_total / 2f64.powi(n as i32) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn block_law_examples() {
        let m = QubitModel::new(0.5, [0.0; 3], 2).unwrap();
        assert_abs_diff_eq!(m.mu(), 0.75);
        let law = block_probabilities(&m, BlockLawMode::Exact);
        assert_eq!(law.entries[0].0, 2);
        assert_abs_diff_eq!(law.entries[0].1, 0.8125, epsilon = 1e-15);
        assert_abs_diff_eq!(law.entries[1].1, 0.1875, epsilon = 1e-15);

        let one = block_probabilities(&QubitModel::new(0.3, [0.0; 3], 1).unwrap(), BlockLawMode::Exact);
        assert_eq!(one.entries, vec![(1, 1.0)]);
    }

    fn tv(n: usize) -> f64 {
        let m = QubitModel::new(0.5, [0.0; 3], n).unwrap();
        let e = block_probabilities(&m, BlockLawMode::Exact);
        let b = block_probabilities(&m, BlockLawMode::Binomial);
        0.5 * e.entries.iter().zip(&b.entries).map(|(x, y)| (x.1 - y.1).abs()).sum::<f64>()
    }

    #[test]
    fn binomial_law_approaches_exact() {
        assert!(tv(100) < 0.05, "{}", tv(100));
        let seq: Vec<f64> = [20, 50, 100, 200].map(tv).to_vec();
        assert!(seq.windows(2).all(|w| w[1] < w[0]), "{seq:?}");
    }

    #[test]
    fn block_state_examples() {
        let m = QubitModel::new(0.5, [0.0; 3], 2).unwrap();
        let b = block_state(&m, 2).unwrap();
        let want = [0.5625 / 0.8125, 0.1875 / 0.8125, 0.0625 / 0.8125];
        for (k, w) in want.iter().enumerate() {
            assert_abs_diff_eq!(b[(k, k)].re, *w, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(b[(0, 0)].re, 0.692_307_692_307_692_3, epsilon = 1e-15);
        let m = QubitModel::new(0.4, [0.0; 3], 9).unwrap();
        let b = block_state(&m, 5).unwrap();
        assert_eq!(max_abs(&(b.clone() - CMatrix::from_diagonal(&b.diagonal()))), 0.0);
        assert!(matches!(QubitModel::new(0.0, [0.0; 3], 4), Err(Error::Degenerate(_))));
    }

    #[test]
    fn brute_force_examples() {
        let half = brute_force_decompose(&mixed(0.5), 2).unwrap();
        assert_abs_diff_eq!(half.block(2).unwrap().probability, 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(half.block(0).unwrap().probability, 0.25, epsilon = 1e-15);

        let psi = nalgebra::DVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]);
        let pure = &psi * psi.adjoint();
        let d = brute_force_decompose(&pure, 2).unwrap();
        assert_abs_diff_eq!(d.block(2).unwrap().probability, 1.0, epsilon = 1e-14);
        assert!(d.block(0).unwrap().probability.abs() < 1e-15);

        let m = QubitModel::new(0.5, [0.0; 3], 3).unwrap();
        let d = brute_force_decompose(&m.qubit_state(), 3).unwrap();
        for (tj, p) in block_probabilities(&m, BlockLawMode::Exact).entries {
            assert_abs_diff_eq!(d.block(tj).unwrap().probability, p, epsilon = 1e-12);
        }
        assert!(matches!(brute_force_decompose(&mixed(0.5), 11), Err(Error::Resource(_))));
    }

    #[test]
    fn brute_force_dimension_sum() {
        for n in 1..=8 {
            let d = brute_force_decompose(&mixed(0.7), n).unwrap();
            assert_eq!(d.dimension_sum(), 2f64.powi(n as i32));
            d.validate(1e-12).unwrap();
        }
    }

    fn assert_matches_oracle(m: &QubitModel) {
        let oracle = brute_force_decompose(&m.qubit_state(), m.n).unwrap();
        let fast = decompose(m, 0.0).unwrap();
        assert_eq!(oracle.blocks.len(), fast.blocks.len());
        for (o, f) in oracle.blocks.iter().zip(&fast.blocks) {
            assert_eq!(o.two_j, f.two_j);
            assert_eq!(o.multiplicity, f.multiplicity.round());
            assert!((o.probability - f.probability).abs() < 1e-12);
            assert!(max_abs(&(&o.rho - &f.rho)) < 1e-12, "n={} 2j={}", m.n, o.two_j);
        }
    }

    #[test]
    fn generic_rotation_matches_oracle() {
        assert_matches_oracle(&QubitModel::new(0.6, [0.5, -0.6, 0.3], 4).unwrap());
        assert_matches_oracle(&QubitModel::new(0.3, [-0.5, 0.2, -0.7], 7).unwrap());
    }

    #[test]
    fn spin_means_from_blocks_are_exact() {
        let m = QubitModel::new(0.5, [1.0, -0.6, 0.3], 40).unwrap();
        let d = decompose(&m, 0.0).unwrap();
        let exact = collective_spin_moments(&m).mean;
        let blocks = block_spin_means(&d);
        for a in 0..3 {
            assert!((exact[a] - blocks[a]).abs() < 1e-10, "{a}: {} vs {}", exact[a], blocks[a]);
        }
    }

    #[test]
    fn collective_moment_examples() {
        let m = QubitModel::new(0.5, [0.0; 3], 100).unwrap();
        let mo = collective_spin_moments(&m);
        assert_abs_diff_eq!(mo.mean[2], 50.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mo.variance[2] / 100.0, 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(mo.variance[0] / 100.0, 1.0);
        let m = QubitModel::new(0.5, [1.0, 0.0, 0.0], 10_000).unwrap();
        assert_abs_diff_eq!(collective_spin_moments(&m).mean[0] / 100.0, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn oscillator_amplitude_convention() {
        // ⟨J_+⟩/√(2j) approaches (u_x + i u_y)/(2√r0), not (u_x + i u_y)/√(2 r0).
        let u = [1.0, 0.5, 0.0];
        let alpha = displacement_amplitude(u, 0.5);
        let mut errs = Vec::new();
        for n in [64usize, 160, 400] {
            let d = decompose(&QubitModel::new(0.5, u, n).unwrap(), 1e-15).unwrap();
            errs.push((block_oscillator_mean(&d) - alpha).norm());
        }
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(errs[2] < 0.02, "{errs:?}");
        let wrong = c(1.0, 0.5) / (1.0f64).sqrt();
        assert!((alpha - wrong).norm() > 0.3);
    }

    #[test]
    fn json_layout() {
        let d = decompose(&QubitModel::new(0.5, [0.0; 3], 2).unwrap(), 0.0).unwrap();
        let v = d.to_json();
        assert_eq!(v["n"], 2);
        assert_eq!(v["blocks"][0]["two_j"], 2);
        assert_eq!(v["blocks"][0]["matrix"].as_array().unwrap().len(), 3);
        assert_eq!(v["blocks"][1]["matrix"][0][0][0], 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn oracle_agreement(n in 1usize..=6, r0 in 0.05f64..0.9, ux in -1.0f64..1.0, uy in -1.0f64..1.0, uz in -1.0f64..1.0) {
            let u = [ux, uy, uz].map(|x| x * 0.3 * (n as f64).sqrt() * (1.0 - r0));
            let m = QubitModel::new(r0, u, n).unwrap();
            assert_matches_oracle(&m);
        }

        #[test]
        fn rotations_unitary(two_j in 0usize..30, theta in 0.0f64..3.1, phi in -3.1f64..3.1) {
            let u = spin::rotation(two_j, theta, phi);
            let d = two_j + 1;
            prop_assert!(max_abs(&(u.adjoint() * &u - CMatrix::identity(d, d))) < 1e-12);
        }
    }
}
