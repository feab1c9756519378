//! Minmax benchmark for teleporting displaced thermal states.
//!
//! The input family is `Φ_z` with fixed thermal parameter `s`. By covariance
//! every competitor channel reduces to a diagonal preparation state `τ`, and
//! the risk of a channel is `‖p^τ − q‖₁` where `q` is the thermal distribution
//! of the input and `p^τ` the photon-number distribution of the output on
//! `Φ_0`. Heterodyne-and-prepare (`τ` = vacuum) is optimal.

use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fock::{self, DiagonalState};
use crate::linalg::ln_binomial;

fn check_open_unit(s: f64, what: &str) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(domain(format!("{what}={s} outside (0,1)")));
    }
    Ok(())
}

fn check_thermal(s: f64) -> Result<()> {
    if !(0.0..1.0).contains(&s) {
        return Err(domain(format!("thermal parameter s={s} outside [0,1)")));
    }
    Ok(())
}

/// Largest photon number `l` at which the re-prepared distribution is still
/// below the input one: `⌊−ln(2−s) / ln(s(2−s))⌋`.
pub fn crossover_m0(s: f64) -> Result<usize> {
    check_open_unit(s, "s")?;
    let x = -(2.0 - s).ln() / (s * (2.0 - s)).ln();
    Ok(x.floor() as usize)
}

/// `R*(s) = 2(2−s)^{−m0−1} − 2 s^{m0+1}`, with `R*(0) = 1`.
pub fn optimal_risk(s: f64) -> Result<f64> {
    check_thermal(s)?;
    if s == 0.0 {
        return Ok(1.0);
    }
    let m = crossover_m0(s)? as i32;
    Ok(2.0 * (2.0 - s).powi(-m - 1) - 2.0 * s.powi(m + 1))
}

/// Input distribution `q` and heterodyne-prepare output `p` for one `s`.
#[derive(Debug, Clone)]
pub struct GeometricPair {
    pub s: f64,
    pub s_tilde: f64,
    pub q: DiagonalState,
    pub p: DiagonalState,
}

impl GeometricPair {
    pub fn new(s: f64, n: usize) -> Result<Self> {
        check_thermal(s)?;
        let s_tilde = fock::reprepared_parameter(s);
        Ok(Self { s, s_tilde, q: fock::thermal_state(s, n)?, p: fock::thermal_state(s_tilde, n)? })
    }

    /// Largest `l` with `p_l ≤ q_l`, found by scanning.
    pub fn scanned_crossover(&self) -> Option<usize> {
        (0..self.q.dim()).take_while(|&l| self.p.get(l) <= self.q.get(l)).last()
    }
}

/// A truncated sum together with an upper bound on what was left out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Estimate {
    pub value: f64,
    pub tail: f64,
}

/// `Σ_{i<N} |q_i − p_i|` for two geometric laws.
pub fn geometric_l1(s: f64, s_tilde: f64, n: usize) -> Result<L1Estimate> {
    check_thermal(s)?;
    check_thermal(s_tilde)?;
    let q = fock::thermal_state(s, n)?;
    let p = fock::thermal_state(s_tilde, n)?;
    Ok(L1Estimate { value: q.l1_distance(&p), tail: fock::tail_bound(s, n) + fock::tail_bound(s_tilde, n) })
}

/// Photon distribution `d^k_l = (1−γ)^{k+1} γ^{l−k} C(l,k)` of the output mode
/// when the auxiliary input carries `k` photons.
pub fn amplifier_fock_output(k: usize, gamma: f64, levels: usize) -> Result<DiagonalState> {
    check_open_unit(gamma, "gamma")?;
    if levels <= k {
        return Err(Error::Truncation(format!("{levels} levels cannot hold level {k}")));
    }
    let (lg, lc) = (gamma.ln(), (1.0 - gamma).ln());
    let w = (0..levels)
        .map(|l| {
            if l < k {
                0.0
            } else {
                ((k + 1) as f64 * lc + (l - k) as f64 * lg + ln_binomial(l, k)).exp()
            }
        })
        .collect();
    Ok(DiagonalState::from_raw(w))
}

/// Photon statistics of `τ` after a beamsplitter with vacuum, keeping the arm
/// with power reflectivity `R² = 1 − T²`:
/// `τ̃_p = Σ_{k≥p} τ_k C(k,p) R^{2p} T^{2(k−p)}`.
pub fn loss_binomial(tau: &DiagonalState, t2: f64) -> Result<DiagonalState> {
    if !(0.0..=1.0).contains(&t2) {
        return Err(domain(format!("T²={t2} outside [0,1]")));
    }
    let r2 = 1.0 - t2;
    let k_max = tau.dim();
    let mut out = vec![0.0; k_max];
    for (k, &tk) in tau.weights().iter().enumerate() {
        if tk == 0.0 {
            continue;
        }
        for (p, o) in out.iter_mut().enumerate().take(k + 1) {
            *o += tk * ln_binomial(k, p).exp() * r2.powi(p as i32) * t2.powi((k - p) as i32);
        }
    }
    Ok(DiagonalState::from_raw(out))
}

/// Constants of the dilation: `tanh² t = s`, `sinh t̃ = cosh t`,
/// `T = sinh t / cosh t̃`, `R = √2 / cosh t̃`, `γ = tanh² t̃`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DilationConstants {
    pub t: f64,
    pub t_tilde: f64,
    pub big_t: f64,
    pub big_r: f64,
    pub gamma: f64,
}

impl DilationConstants {
    pub fn new(s: f64) -> Result<Self> {
        check_thermal(s)?;
        let t = s.sqrt().atanh();
        let t_tilde = t.cosh().asinh();
        let big_t = t.sinh() / t_tilde.cosh();
        let big_r = std::f64::consts::SQRT_2 / t_tilde.cosh();
        let gamma = t_tilde.tanh().powi(2);
        let c = Self { t, t_tilde, big_t, big_r, gamma };
        assert!(
            (big_t * big_t + big_r * big_r - 1.0).abs() < 1e-12 && (gamma - 1.0 / (2.0 - s)).abs() < 1e-12,
            "inconsistent dilation constants at s={s}"
        );
        Ok(c)
    }
}

/// Covariant channel determined by a diagonal preparation state `τ`.
#[derive(Debug, Clone)]
pub struct CovariantChannel {
    pub tau: DiagonalState,
    pub s: f64,
    pub gamma: f64,
}

impl CovariantChannel {
    pub fn new(tau: DiagonalState, s: f64) -> Result<Self> {
        check_open_unit(s, "s")?;
        if (tau.total() - 1.0).abs() > 1e-9 {
            return Err(domain(format!("τ has total weight {}", tau.total())));
        }
        Ok(Self { tau, s, gamma: 1.0 / (2.0 - s) })
    }
}

/// Output distribution `p^τ_l = Σ_p τ̃_p d^p_l` on the input `Φ(s)`.
pub fn covariant_channel_output(ch: &CovariantChannel, n: usize) -> Result<DiagonalState> {
    let k = DilationConstants::new(ch.s)?;
    let tilde = loss_binomial(&ch.tau, k.big_t * k.big_t)?;
    let mut out = vec![0.0; n];
    for (p, &tp) in tilde.weights().iter().enumerate() {
        if tp == 0.0 || p >= n {
            continue;
        }
        let d = amplifier_fock_output(p, k.gamma, n)?;
        for (o, w) in out.iter_mut().zip(d.weights()) {
            *o += tp * w;
        }
    }
    Ok(DiagonalState::from_raw(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderCheck {
    pub ordered: bool,
    pub witness: Option<usize>,
}

/// Checks `p ⪯ q`, i.e. `Σ_{l≤m} p_l ≥ Σ_{l≤m} q_l` for every `m`.
pub fn stochastic_order_check(p: &DiagonalState, q: &DiagonalState) -> Result<OrderCheck> {
    if p.dim() != q.dim() {
        return Err(Error::Shape(format!("truncations differ: {} vs {}", p.dim(), q.dim())));
    }
    let (mut sp, mut sq) = (0.0, 0.0);
    for m in 0..p.dim() {
        sp += p.get(m);
        sq += q.get(m);
        if sp < sq - 1e-12 {
            return Ok(OrderCheck { ordered: false, witness: Some(m) });
        }
    }
    Ok(OrderCheck { ordered: true, witness: None })
}

/// `2 max_m Σ_{l≤m} (q_l − p_l)`: the L1 distance restricted to prefix sets.
pub fn prefix_discrepancy(p: &DiagonalState, q: &DiagonalState) -> f64 {
    let n = p.dim().max(q.dim());
    let mut acc = 0.0;
    let mut best = 0.0f64;
    for l in 0..n {
        acc += q.get(l) - p.get(l);
        best = best.max(acc);
    }
    2.0 * best
}

/// `(cos(c/√n))^{2n}`.
pub fn pure_fidelity_decay(c: f64, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(domain("n must be at least 1"));
    }
    let n = n as f64;
    Ok((2.0 * n * (c / n.sqrt()).cos().abs().ln()).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub starts: usize,
    pub max_iter: usize,
    pub step_tol: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { starts: 20, max_iter: 2000, step_tol: 1e-8, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TauOptimum {
    pub tau: Vec<f64>,
    pub risk: f64,
    pub converged: bool,
    pub iterations: usize,
}

struct Objective {
    cols: Vec<Vec<f64>>,
    q: Vec<f64>,
}

impl Objective {
    fn residual(&self, tau: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = self.q.iter().map(|q| -q).collect();
        for (col, &t) in self.cols.iter().zip(tau) {
            if t != 0.0 {
                for (ri, ci) in r.iter_mut().zip(col) {
                    *ri += t * ci;
                }
            }
        }
        r
    }

    fn value(&self, tau: &[f64]) -> f64 {
        self.residual(tau).iter().map(|r| r.abs()).sum()
    }

    fn subgradient(&self, r: &[f64]) -> Vec<f64> {
        self.cols.iter().map(|col| col.iter().zip(r).map(|(c, r)| c * r.signum()).sum()).collect()
    }
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Exact minimiser over `t ∈ [0, t_max]` of `Σ |r_l + t d_l|`.
fn line_search(r: &[f64], d: &[f64], t_max: f64) -> f64 {
    let mut slope = 0.0;
    let mut kinks = Vec::new();
    for (&ri, &di) in r.iter().zip(d) {
        if di == 0.0 {
            continue;
        }
        let x = ri + 1e-300 * di;
        slope += if x == 0.0 { di.abs() } else { di * x.signum() };
        let t = -ri / di;
        if t > 0.0 && t < t_max {
            kinks.push((t, di.abs()));
        }
    }
    if slope >= 0.0 {
        return 0.0;
    }
    kinks.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (t, w) in kinks {
        slope += 2.0 * w;
        if slope >= 0.0 {
            return t;
        }
    }
    t_max
}

fn descend(obj: &Objective, mut tau: Vec<f64>, cfg: &OptimizerConfig) -> (Vec<f64>, f64, bool, usize) {
    let k = tau.len();
    let mut best = tau.clone();
    let mut best_val = obj.value(&tau);
    let sub_iters = cfg.max_iter / 2;
    for it in 1..=sub_iters {
        let r = obj.residual(&tau);
        let g = obj.subgradient(&r);
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let step = 0.5 / (it as f64).sqrt() / norm;
        for (t, gi) in tau.iter_mut().zip(&g) {
            *t -= step * gi;
        }
        project_simplex(&mut tau);
        let v = obj.value(&tau);
        if v < best_val {
            best_val = v;
            best.clone_from(&tau);
        }
    }

    // pairwise mass transfers with exact line search
    tau = best;
    let mut iterations = sub_iters;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let mut gain = 0.0;
        for i in 0..k {
            for j in 0..k {
                if i == j || tau[j] <= 0.0 {
                    continue;
                }
                let r = obj.residual(&tau);
                let d: Vec<f64> = obj.cols[i].iter().zip(&obj.cols[j]).map(|(a, b)| a - b).collect();
                let t = line_search(&r, &d, tau[j]);
                if t > 0.0 {
                    let before = r.iter().map(|x| x.abs()).sum::<f64>();
                    let after = r.iter().zip(&d).map(|(x, y)| (x + t * y).abs()).sum::<f64>();
                    if after < before {
                        tau[i] += t;
                        tau[j] -= t;
                        gain += before - after;
                    }
                }
            }
        }
        if gain < cfg.step_tol * 1e-3 {
            converged = true;
            break;
        }
    }
    let v = obj.value(&tau);
    (tau, v, converged, iterations)
}

/// Minimises `‖p^τ − q‖₁` over diagonal `τ` with `k` levels, outputs
/// truncated at `n`. Runs `cfg.starts` random starts in parallel.
pub fn minimize_over_tau(s: f64, k: usize, n: usize, cfg: &OptimizerConfig) -> Result<TauOptimum> {
    check_open_unit(s, "s")?;
    if k == 0 {
        return Err(domain("τ truncation must be at least 1"));
    }
    if n <= k {
        return Err(Error::Truncation(format!("output truncation {n} must exceed τ truncation {k}")));
    }
    let cols = (0..k)
        .map(|j| {
            let ch = CovariantChannel::new(DiagonalState::fock(j, k)?, s)?;
            Ok(covariant_channel_output(&ch, n)?.into_weights())
        })
        .collect::<Result<Vec<_>>>()?;
    let obj = Objective { cols, q: fock::thermal_state(s, n)?.into_weights() };
    if k == 1 {
        let risk = obj.value(&[1.0]);
        return Ok(TauOptimum { tau: vec![1.0], risk, converged: true, iterations: 0 });
    }
    let runs: Vec<_> = (0..cfg.starts.max(1))
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::rng::stream(cfg.seed, i as u64);
            descend(&obj, random_simplex(k, &mut rng), cfg)
        })
        .collect();
    let best = runs
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one start");
    Ok(TauOptimum { tau: best.0, risk: best.1, converged: best.2, iterations: best.3 })
}

/// Uniform draw from the probability simplex with `k` vertices.
pub fn random_simplex<R: rand::Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let mut w: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let tot: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= tot);
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderViolation {
    pub s: f64,
    pub k: usize,
    pub m: usize,
}

/// Checks `d^0 ⪯ d^k` for `1 ≤ k ≤ k_max` on levels `0..=m_max`.
pub fn order_audit(s: f64, k_max: usize, m_max: usize) -> Result<Vec<OrderViolation>> {
    check_open_unit(s, "s")?;
    let gamma = 1.0 / (2.0 - s);
    let d0 = amplifier_fock_output(0, gamma, m_max + 1)?;
    let mut out = Vec::new();
    for k in 1..=k_max.min(m_max) {
        let check = stochastic_order_check(&d0, &amplifier_fock_output(k, gamma, m_max + 1)?)?;
        if let Some(m) = check.witness {
            out.push(OrderViolation { s, k, m });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorAudit {
    pub s: f64,
    pub samples: usize,
    pub benchmark: f64,
    /// Smallest `‖p^τ − q‖₁` among the draws.
    pub min_risk: f64,
    /// Draws with `‖p^τ − q‖₁ < R*(s) − tol`.
    pub violations: usize,
}

/// Risk of `samples` random diagonal `τ` on `k` levels against `R*(s)`.
pub fn floor_audit(s: f64, k: usize, n: usize, samples: usize, seed: u64, tol: f64) -> Result<FloorAudit> {
    let benchmark = optimal_risk(s)?;
    let q = fock::thermal_state(s, n)?;
    let risks: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::rng::stream(seed, i as u64);
            let tau = DiagonalState::new(random_simplex(k, &mut rng))?;
            Ok(covariant_channel_output(&CovariantChannel::new(tau, s)?, n)?.l1_distance(&q))
        })
        .collect::<Result<_>>()?;
    Ok(FloorAudit {
        s,
        samples,
        benchmark,
        min_risk: risks.iter().copied().fold(f64::INFINITY, f64::min),
        violations: risks.iter().filter(|&&r| r < benchmark - tol).count(),
    })
}
