//! Truncated Fock-space numerics for a single bosonic mode.
//!
//! Conventions: `[Q, P] = i`, `a = (Q + iP)/√2`, coherent states
//! `|ζ⟩ = W_ζ|0⟩` with `W_ζ = exp(ζa† − ζ̄a)`, so `⟨ζ|a|ζ⟩ = ζ`. Heterodyne
//! outcomes have density `⟨ζ|ρ|ζ⟩/π` with respect to `d(Re ζ) d(Im ζ)`.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gaussian::{self, GaussianMode};
use crate::linalg::{self, c, CMatrix, HERMITIAN_TOL, NEGATIVITY_TOL};

/// Geometric tail mass `s^N` of a thermal state beyond level `N - 1`.
pub fn tail_bound(s: f64, n: usize) -> f64 {
    if s == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    s.powi(n as i32)
}

/// Smallest truncation with `s^N < 1e-10` and `|z|² + 6|z| + 9 < N`.
pub fn recommended_truncation(s: f64, z: Complex64) -> usize {
    let r = z.norm();
    let disp = (r * r + 6.0 * r + 9.0).floor() as usize + 1;
    let mut n = disp.max(1);
    while tail_bound(s, n) >= 1e-10 {
        n += 1;
    }
    n
}

fn check_s(s: f64) -> Result<()> {
    if !(0.0..1.0).contains(&s) || !s.is_finite() {
        return Err(domain(format!("thermal parameter s={s} outside [0,1)")));
    }
    Ok(())
}

fn check_dim(n: usize) -> Result<()> {
    if n == 0 {
        return Err(domain("truncation must be at least 1"));
    }
    Ok(())
}

/// A state diagonal in the Fock basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalState {
    weights: Vec<f64>,
}

impl DiagonalState {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(domain("empty diagonal state"));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= -NEGATIVITY_TOL) || !w.is_finite()) {
            return Err(domain(format!("negative or non-finite weight {w}")));
        }
        Ok(Self { weights })
    }

    /// Builds a state without validation; used for intermediate distributions.
    pub(crate) fn from_raw(weights: Vec<f64>) -> Self {
        Self { weights }
    }

    /// `|k⟩⟨k|` truncated at `dim` levels.
    pub fn fock(k: usize, dim: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::Truncation(format!("level {k} does not fit {dim} levels")));
        }
        let mut w = vec![0.0; dim];
        w[k] = 1.0;
        Ok(Self { weights: w })
    }

    pub fn vacuum(dim: usize) -> Result<Self> {
        Self::fock(0, dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `1 − Σ weights`.
    pub fn deficit(&self) -> f64 {
        1.0 - self.total()
    }

    pub fn get(&self, k: usize) -> f64 {
        self.weights.get(k).copied().unwrap_or(0.0)
    }

    /// `Σ_k |p_k − q_k|`, padding the shorter vector with zeros.
    pub fn l1_distance(&self, other: &DiagonalState) -> f64 {
        let n = self.dim().max(other.dim());
        (0..n).map(|k| (self.get(k) - other.get(k)).abs()).sum()
    }

    /// Mean photon number `Σ k w_k`.
    pub fn mean_number(&self) -> f64 {
        self.weights.iter().enumerate().map(|(k, w)| k as f64 * w).sum()
    }

    /// `Var(Q)` of a phase-invariant state: `⟨n⟩ + 1/2`.
    pub fn quadrature_variance(&self) -> f64 {
        self.mean_number() + 0.5
    }

    pub fn to_fock(&self) -> FockMatrix {
        let d = DVector::from_iterator(self.dim(), self.weights.iter().map(|w| c(*w, 0.0)));
        FockMatrix::from_matrix_unchecked(CMatrix::from_diagonal(&d))
    }

    pub fn renormalized(&self) -> Self {
        let t = self.total();
        Self { weights: self.weights.iter().map(|w| w / t).collect() }
    }
}

/// Thermal state `Σ (1−s) s^k |k⟩⟨k|`, truncated to `n` levels.
pub fn thermal_state(s: f64, n: usize) -> Result<DiagonalState> {
    check_s(s)?;
    check_dim(n)?;
    let mut w = Vec::with_capacity(n);
    let mut p = 1.0 - s;
    for _ in 0..n {
        w.push(p);
        p *= s;
    }
    Ok(DiagonalState { weights: w })
}

/// Dense operator on the first `dim` Fock levels.
#[derive(Debug, Clone, PartialEq)]
pub struct FockMatrix {
    m: CMatrix,
}

impl FockMatrix {
    pub fn from_matrix(m: CMatrix) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::Shape(format!("{}x{} is not a square matrix", m.nrows(), m.ncols())));
        }
        Ok(Self { m })
    }

    pub(crate) fn from_matrix_unchecked(m: CMatrix) -> Self {
        Self { m }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { m: CMatrix::zeros(dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { m: CMatrix::identity(dim, dim) }
    }

    /// `|ψ⟩⟨ψ|`
    pub fn projector(psi: &DVector<Complex64>) -> Self {
        Self { m: psi * psi.adjoint() }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn trace(&self) -> Complex64 {
        linalg::trace(&self.m)
    }

    pub fn diagonal(&self) -> DiagonalState {
        DiagonalState::from_raw(self.m.diagonal().iter().map(|z| z.re).collect())
    }

    pub fn is_hermitian(&self) -> bool {
        linalg::hermitian_defect(&self.m) <= HERMITIAN_TOL
    }

    /// Checks Hermiticity, positivity (≥ −1e-10) and a trace within `trace_tol` of 1.
    pub fn validate_state(&self, trace_tol: f64) -> Result<()> {
        let defect = linalg::hermitian_defect(&self.m);
        if defect > HERMITIAN_TOL {
            return Err(Error::Invariant(format!("state not Hermitian (defect {defect:.3e})")));
        }
        let lo = linalg::min_eigenvalue(&self.m);
        if lo < -NEGATIVITY_TOL {
            return Err(Error::Invariant(format!("state has eigenvalue {lo:.3e}")));
        }
        let tr = self.trace().re;
        if (tr - 1.0).abs() > trace_tol {
            return Err(Error::Invariant(format!("state trace {tr} off by more than {trace_tol:e}")));
        }
        Ok(())
    }

    /// `Tr(ρ a)`
    pub fn mean_annihilation(&self) -> Complex64 {
        let n = self.dim();
        (1..n).map(|k| self.m[(k, k - 1)] * (k as f64).sqrt()).sum()
    }

    /// `Tr(ρ a†a)`
    pub fn mean_number(&self) -> f64 {
        (0..self.dim()).map(|k| k as f64 * self.m[(k, k)].re).sum()
    }

    /// Copy onto `dim` levels, dropping or zero-padding the top.
    pub fn resized(&self, dim: usize) -> Self {
        let n = self.dim().min(dim);
        let mut out = CMatrix::zeros(dim, dim);
        out.view_mut((0, 0), (n, n)).copy_from(&self.m.view((0, 0), (n, n)));
        Self { m: out }
    }

    pub fn scaled(&self, f: f64) -> Self {
        Self { m: &self.m * c(f, 0.0) }
    }

    /// `W ρ W†`
    pub fn conjugated_by(&self, w: &FockMatrix) -> Result<Self> {
        same_dim(self, w)?;
        Ok(Self { m: linalg::conjugate(&w.m, &self.m) })
    }
}

fn same_dim(a: &FockMatrix, b: &FockMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("dimensions {} and {} differ", a.dim(), b.dim())));
    }
    Ok(())
}

/// Annihilation operator on `n` levels.
pub fn annihilation(n: usize) -> CMatrix {
    let mut a = CMatrix::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = c((k as f64).sqrt(), 0.0);
    }
    a
}

/// `exp(z a† − z̄ a)` on `n` levels, from the spectral decomposition of the
/// Hermitian generator `i(z a† − z̄ a)`. Exactly unitary on the truncated
/// space; agrees with the true operator away from the top levels.
pub fn displacement_operator(z: Complex64, n: usize) -> Result<FockMatrix> {
    check_dim(n)?;
    if z.norm() == 0.0 {
        return Ok(FockMatrix::identity(n));
    }
    let a = annihilation(n);
    let gen = (a.adjoint() * z - &a * z.conj()) * linalg::I;
    Ok(FockMatrix { m: linalg::unitary_exp(&gen, 1.0) })
}

/// Coherent-state amplitudes `e^{−|z|²/2} z^k / √k!` for `k < n`.
pub fn coherent_state(z: Complex64, n: usize) -> DVector<Complex64> {
    let mut v = DVector::zeros(n);
    let mut amp = c((-0.5 * z.norm_sqr()).exp(), 0.0);
    for k in 0..n {
        v[k] = amp;
        amp = amp * z / ((k + 1) as f64).sqrt();
    }
    v
}

/// Displaced thermal state `W_z Φ_s W_z†` on `n` levels.
///
/// The displacement is applied on a padded basis and the result cut back to
/// `n` levels, so the upper levels do not see the truncated generator's edge.
pub fn displaced_thermal(z: Complex64, s: f64, n: usize) -> Result<FockMatrix> {
    check_s(s)?;
    check_dim(n)?;
    if z.norm() == 0.0 {
        return Ok(thermal_state(s, n)?.to_fock());
    }
    let r = z.norm();
    let pad = (r * r + 6.0 * r + 9.0).ceil() as usize + 8;
    let work = n + pad;
    let phi = thermal_state(s, work)?.to_fock();
    let w = displacement_operator(z, work)?;
    Ok(phi.conjugated_by(&w)?.resized(n))
}

/// Trace-norm distance `‖A − B‖₁`.
pub fn trace_norm_distance(a: &FockMatrix, b: &FockMatrix) -> Result<f64> {
    same_dim(a, b)?;
    Ok(linalg::trace_norm(&(&a.m - &b.m)))
}

/// Output parameter `s̃ = 1/(2 − s)` of heterodyne-then-coherent-preparation
/// acting on a thermal state.
pub fn reprepared_parameter(s: f64) -> f64 {
    1.0 / (2.0 - s)
}

/// Analytic heterodyne-prepare output for a displaced thermal input with
/// parameter `s` (taken at zero displacement by covariance).
pub fn heterodyne_prepare_analytic(s: f64, n: usize) -> Result<DiagonalState> {
    check_s(s)?;
    thermal_state(reprepared_parameter(s), n)
}

/// Exact averaged action of heterodyne measurement followed by preparation of
/// the coherent state at the outcome, `ρ ↦ ∫ Q_ρ(ζ)|ζ⟩⟨ζ| d²ζ`.
///
/// `⟨k|out|l⟩ = Σ_{b−a = l−k} ρ_{ab} (k+b)! / (2^{k+b+1} √(a! b! k! l!))`.
pub fn heterodyne_prepare_channel(rho: &FockMatrix, n_out: usize) -> FockMatrix {
    heterodyne_prepare_many(std::slice::from_ref(rho), n_out).pop().expect("one output")
}

/// [`heterodyne_prepare_channel`] for several inputs of equal dimension.
///
/// For each diagonal offset `d = l − k` the coefficients form a real
/// `n_out × n_in` matrix acting on the `d`-th diagonals of all inputs at once.
pub fn heterodyne_prepare_many(rhos: &[FockMatrix], n_out: usize) -> Vec<FockMatrix> {
    use nalgebra::DMatrix;
    let Some(first) = rhos.first() else { return Vec::new() };
    let n_in = first.dim();
    assert!(rhos.iter().all(|r| r.dim() == n_in), "inputs must share a truncation");
    let t = rhos.len();
    let ln2 = std::f64::consts::LN_2;
    let lf = |m: usize| linalg::ln_factorial(m) - (m as f64 + 1.0) * ln2;
    let lg: Vec<f64> = (0..n_in.max(n_out) * 2).map(|x| -0.5 * linalg::ln_factorial(x)).collect();
    let mut outs = vec![CMatrix::zeros(n_out, n_out); t];
    for d in 0..n_out.min(n_in) {
        let rows = n_out - d;
        let cols = n_in - d;
        let coef = DMatrix::from_fn(rows, cols, |k, a| (lf(k + a + d) + lg[a] + lg[a + d] + lg[k] + lg[k + d]).exp());
        let mut diag = DMatrix::<f64>::zeros(cols, 2 * t);
        for (i, r) in rhos.iter().enumerate() {
            for a in 0..cols {
                let z = r.m[(a, a + d)];
                diag[(a, 2 * i)] = z.re;
                diag[(a, 2 * i + 1)] = z.im;
            }
        }
        let prod = coef * diag;
        for (i, out) in outs.iter_mut().enumerate() {
            for k in 0..rows {
                let z = c(prod[(k, 2 * i)], prod[(k, 2 * i + 1)]);
                out[(k, k + d)] = z;
                if d > 0 {
                    out[(k + d, k)] = z.conj();
                }
            }
        }
    }
    outs.into_iter().map(|m| FockMatrix { m }).collect()
}

/// Quantum-limited phase-insensitive amplifier with power gain `gain ≥ 1`
/// (amplitude gain `√gain`), applied through its Kraus operators
/// `⟨m+j|A_j|m⟩ = √(C(m+j, j) (g−1)^j / g^{m+j+1})`.
pub fn amplifier_channel(rho: &FockMatrix, gain: f64, n_out: usize) -> Result<FockMatrix> {
    if !(gain >= 1.0) || !gain.is_finite() {
        return Err(domain(format!("amplifier gain {gain} must be ≥ 1")));
    }
    let n_in = rho.dim();
    let mut out = CMatrix::zeros(n_out, n_out);
    if gain == 1.0 {
        return Ok(rho.resized(n_out));
    }
    let ln_g = gain.ln();
    let ln_gm1 = (gain - 1.0).ln();
    let coef = |m: usize, j: usize| -> f64 {
        (0.5 * (linalg::ln_binomial(m + j, j) + j as f64 * ln_gm1 - (m + j + 1) as f64 * ln_g)).exp()
    };
    for j in 0..n_out {
        for m in 0..n_in.min(n_out.saturating_sub(j)) {
            let cm = coef(m, j);
            for mp in 0..n_in.min(n_out.saturating_sub(j)) {
                out[(m + j, mp + j)] += rho.m[(m, mp)] * (cm * coef(mp, j));
            }
        }
    }
    Ok(FockMatrix { m: out })
}

/// Heterodyne outcome density `⟨ζ|ρ|ζ⟩/π` with respect to `d(Re ζ) d(Im ζ)`.
pub fn q_function(rho: &FockMatrix, zeta: Complex64) -> f64 {
    let psi = coherent_state(zeta, rho.dim());
    let v = &rho.m * &psi;
    psi.dotc(&v).re / std::f64::consts::PI
}

/// Rejection sampler for the heterodyne outcome of an arbitrary truncated state.
///
/// Proposal: complex Gaussian centred on `Tr(ρa)` whose variance is twice the
/// heterodyne variance of `ρ`. The envelope constant is the grid maximum of
/// `Q/g` with a 25% margin.
#[derive(Debug, Clone)]
pub struct QFunctionSampler {
    rho: FockMatrix,
    center: Complex64,
    proposal_var: f64,
    envelope: f64,
}

impl QFunctionSampler {
    pub fn new(rho: &FockMatrix) -> Result<Self> {
        let tr = rho.trace().re;
        if !(tr > 0.0) {
            return Err(Error::Degenerate("cannot sample from a zero-trace state".into()));
        }
        let rho = rho.scaled(1.0 / tr);
        let center = rho.mean_annihilation();
        let het_var = (rho.mean_number() - center.norm_sqr() + 1.0).max(1.0);
        let proposal_var = 2.0 * het_var;
        let mut sampler = Self { rho, center, proposal_var, envelope: 1.0 };
        let radius = (proposal_var * 40.0).sqrt();
        let mut worst: f64 = 0.0;
        let (nr, nphi) = (160, 64);
        for i in 0..=nr {
            let r = radius * i as f64 / nr as f64;
            for k in 0..nphi {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / nphi as f64;
                let z = center + Complex64::from_polar(r, phi);
                worst = worst.max(sampler.ratio(z));
            }
        }
        sampler.envelope = 1.25 * worst;
        Ok(sampler)
    }

    fn proposal_density(&self, z: Complex64) -> f64 {
        (-(z - self.center).norm_sqr() / self.proposal_var).exp()
            / (std::f64::consts::PI * self.proposal_var)
    }

    fn ratio(&self, z: Complex64) -> f64 {
        q_function(&self.rho, z) / self.proposal_density(z)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let sd = (self.proposal_var / 2.0).sqrt();
        loop {
            let z = self.center
                + c(
                    sd * gaussian::standard_normal(rng),
                    sd * gaussian::standard_normal(rng),
                );
            let u: f64 = rng.random();
            if u * self.envelope <= self.ratio(z) {
                return z;
            }
        }
    }
}

/// Input accepted by the Monte Carlo heterodyne-prepare path.
#[derive(Debug, Clone)]
pub enum HeterodyneInput {
    /// Displaced thermal state; outcomes drawn from the exact Gaussian law.
    Gaussian(GaussianMode),
    /// Arbitrary truncated state; outcomes drawn by rejection from its Q-function.
    Fock(FockMatrix),
}

#[derive(Debug, Clone, Copy)]
pub struct MonteCarloConfig {
    pub samples: usize,
    pub seed: Option<u64>,
}

/// Empirical output diagonal with per-level standard errors.
#[derive(Debug, Clone)]
pub struct MonteCarloDiagonal {
    pub mean: DiagonalState,
    pub stderr: Vec<f64>,
    pub samples: usize,
}

/// Heterodyne, reprepare `|ζ⟩`, and average the output diagonal over samples.
/// The diagonal of `|ζ⟩⟨ζ|` is Poisson with mean `|ζ|²`.
pub fn heterodyne_prepare_monte_carlo(
    input: &HeterodyneInput,
    cfg: MonteCarloConfig,
    n_out: usize,
) -> Result<MonteCarloDiagonal> {
    let seed = cfg
        .seed
        .ok_or_else(|| Error::Config("Monte Carlo heterodyne path needs a seed".into()))?;
    if cfg.samples == 0 {
        return Err(Error::Config("Monte Carlo heterodyne path needs at least one sample".into()));
    }
    check_dim(n_out)?;
    let mut rng = crate::rng::stream(seed, 0);
    let sampler = match input {
        HeterodyneInput::Fock(rho) => Some(QFunctionSampler::new(rho)?),
        HeterodyneInput::Gaussian(_) => None,
    };
    let mut sum = vec![0.0; n_out];
    let mut sum_sq = vec![0.0; n_out];
    let mut poisson = vec![0.0; n_out];
    for _ in 0..cfg.samples {
        let zeta = match (input, &sampler) {
            (HeterodyneInput::Gaussian(g), _) => gaussian::heterodyne_sample(g, &mut rng),
            (_, Some(smp)) => smp.sample(&mut rng),
            _ => unreachable!(),
        };
        let lam = zeta.norm_sqr();
        let mut p = (-lam).exp();
        for (k, slot) in poisson.iter_mut().enumerate() {
            *slot = p;
            p *= lam / (k + 1) as f64;
        }
        for k in 0..n_out {
            sum[k] += poisson[k];
            sum_sq[k] += poisson[k] * poisson[k];
        }
    }
    let m = cfg.samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / m).collect();
    let stderr = if cfg.samples > 1 {
        sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, mu)| (((sq / m - mu * mu) * m / (m - 1.0)).max(0.0) / m).sqrt())
            .collect()
    } else {
        vec![f64::INFINITY; n_out]
    };
    Ok(MonteCarloDiagonal { mean: DiagonalState::from_raw(mean), stderr, samples: cfg.samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn thermal_examples() {
        let vac = thermal_state(0.0, 8).unwrap();
        assert_eq!(vac.weights()[0], 1.0);
        assert!(vac.weights()[1..].iter().all(|w| *w == 0.0));

        let half = thermal_state(0.5, 4).unwrap();
        assert_eq!(half.weights(), &[0.5, 0.25, 0.125, 0.0625]);

        let hot = thermal_state(0.9, 200).unwrap();
        let deficit = hot.deficit();
        assert_abs_diff_eq!(deficit, 0.9f64.powi(200), epsilon = 1e-14);
        assert!(deficit < 1e-9);
    }

    #[test]
    fn thermal_domain_errors() {
        assert!(matches!(thermal_state(1.0, 4), Err(Error::Domain(_))));
        assert!(matches!(thermal_state(-0.1, 4), Err(Error::Domain(_))));
        assert!(matches!(thermal_state(0.3, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn displacement_of_zero_is_identity() {
        let w = displacement_operator(c(0.0, 0.0), 10).unwrap();
        assert_eq!(w, FockMatrix::identity(10));
    }

    #[test]
    fn displacement_of_vacuum_is_poisson() {
        let w = displacement_operator(c(1.0, 0.0), 64).unwrap();
        let mut fact = 1.0;
        for k in 0..20 {
            if k > 0 {
                fact *= k as f64;
            }
            let p = w.matrix()[(k, 0)].norm_sqr();
            assert_abs_diff_eq!(p, (-1.0f64).exp() / fact, epsilon = 1e-12);
        }
    }

    #[test]
    fn displacement_unitary_on_low_levels() {
        let n = 64;
        let w = displacement_operator(c(0.0, 2.0), n).unwrap();
        let wtw = w.matrix().adjoint() * w.matrix();
        for i in 0..32 {
            for j in 0..32 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((wtw[(i, j)] - c(target, 0.0)).norm() < 1e-8);
            }
        }
        // The true operator satisfies W(z)W(-z) = I; the truncated one on the lower half.
        let winv = displacement_operator(c(0.0, -2.0), n).unwrap();
        let prod = w.matrix() * winv.matrix();
        for i in 0..n / 2 {
            for j in 0..n / 2 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - c(target, 0.0)).norm() < 1e-8, "({i},{j})");
            }
        }
    }

    #[test]
    fn displaced_thermal_examples() {
        let plain = displaced_thermal(c(0.0, 0.0), 0.5, 12).unwrap();
        assert_eq!(plain.diagonal(), thermal_state(0.5, 12).unwrap());

        let pure = displaced_thermal(c(1.0, 0.0), 0.0, 40).unwrap();
        let coh = FockMatrix::projector(&coherent_state(c(1.0, 0.0), 40));
        assert!(trace_norm_distance(&pure, &coh).unwrap() < 1e-10);

        let z = c(1.0, 1.0);
        let rho = displaced_thermal(z, 0.3, 64).unwrap();
        assert!((rho.mean_annihilation() - z).norm() < 1e-8);
        assert!((rho.trace().re - 1.0).abs() < 1e-9);
    }

    #[test]
    fn trace_norm_examples() {
        let x = displaced_thermal(c(0.3, -0.2), 0.4, 30).unwrap();
        assert!(trace_norm_distance(&x, &x).unwrap() < 1e-14);

        let zero = DiagonalState::fock(0, 4).unwrap().to_fock();
        let one = DiagonalState::fock(1, 4).unwrap().to_fock();
        assert_abs_diff_eq!(trace_norm_distance(&zero, &one).unwrap(), 2.0, epsilon = 1e-14);

        let n = 500;
        let a = thermal_state(0.5, n).unwrap().to_fock();
        let b = thermal_state(2.0 / 3.0, n).unwrap().to_fock();
        assert_abs_diff_eq!(
            trace_norm_distance(&a, &b).unwrap(),
            0.388_888_888_888_888_9,
            epsilon = 1e-10
        );

        let bad = FockMatrix::zeros(3);
        assert!(matches!(trace_norm_distance(&a, &bad), Err(Error::Shape(_))));
    }

    #[test]
    fn heterodyne_prepare_analytic_examples() {
        assert_eq!(heterodyne_prepare_analytic(0.0, 10).unwrap(), thermal_state(0.5, 10).unwrap());
        assert_eq!(
            heterodyne_prepare_analytic(0.5, 10).unwrap(),
            thermal_state(2.0 / 3.0, 10).unwrap()
        );
    }

    #[test]
    fn exact_channel_reproduces_thermal_law() {
        for &s in &[0.0, 0.2, 0.5] {
            let n_in = 80;
            let rho = thermal_state(s, n_in).unwrap().to_fock();
            let out = heterodyne_prepare_channel(&rho, 60);
            let want = thermal_state(reprepared_parameter(s), 60).unwrap();
            for k in 0..60 {
                assert_abs_diff_eq!(out.matrix()[(k, k)].re, want.get(k), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn exact_channel_is_covariant() {
        // Coherent input |z⟩ maps to a displaced s̃ = 1/2 thermal state.
        let z = c(0.7, -0.4);
        let n = 60;
        let coh = FockMatrix::projector(&coherent_state(z, n));
        let out = heterodyne_prepare_channel(&coh, n);
        let want = displaced_thermal(z, 0.5, n).unwrap();
        assert!(trace_norm_distance(&out, &want).unwrap() < 1e-9);
    }

    #[test]
    fn heterodyne_adds_one_unit_of_variance() {
        for &s in &[0.1, 0.4, 0.7] {
            let v_in = thermal_state(s, 400).unwrap().quadrature_variance();
            let v_out = heterodyne_prepare_analytic(s, 400).unwrap().quadrature_variance();
            assert_abs_diff_eq!(v_out, v_in + 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn amplifier_maps_vacuum_to_thermal() {
        let g = 1.7;
        let vac = DiagonalState::vacuum(4).unwrap().to_fock();
        let out = amplifier_channel(&vac, g, 80).unwrap();
        let want = thermal_state((g - 1.0) / g, 80).unwrap();
        for k in 0..80 {
            assert_abs_diff_eq!(out.matrix()[(k, k)].re, want.get(k), epsilon = 1e-13);
        }
    }

    #[test]
    fn amplifier_scales_coherent_amplitude() {
        let g = 1.3;
        let z = c(0.5, 0.2);
        let coh = FockMatrix::projector(&coherent_state(z, 50));
        let out = amplifier_channel(&coh, g, 70).unwrap();
        assert!((out.mean_annihilation() - z * g.sqrt()).norm() < 1e-10);
        let want = displaced_thermal(z * g.sqrt(), (g - 1.0) / g, 70).unwrap();
        assert!(trace_norm_distance(&out, &want).unwrap() < 1e-9);
    }

    #[test]
    fn monte_carlo_requires_seed() {
        let input = HeterodyneInput::Gaussian(GaussianMode::new(c(0.0, 0.0), 0.5).unwrap());
        let err = heterodyne_prepare_monte_carlo(&input, MonteCarloConfig { samples: 10, seed: None }, 8);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn q_function_sampler_matches_moments() {
        let z = c(0.4, 0.3);
        let rho = displaced_thermal(z, 0.3, 40).unwrap();
        let sampler = QFunctionSampler::new(&rho).unwrap();
        let mut rng = crate::rng::stream(11, 0);
        let m = 20_000;
        let mut mean = c(0.0, 0.0);
        let mut sq = 0.0;
        for _ in 0..m {
            let x = sampler.sample(&mut rng);
            mean += x;
            sq += (x - z).norm_sqr();
        }
        mean /= m as f64;
        let var = sq / m as f64;
        // complex variance 1/(1-s)
        let want = 1.0 / 0.7;
        assert!((mean - z).norm() < 5.0 * (want / m as f64).sqrt());
        assert!((var - want).abs() < 0.05 * want);
    }
}
