//! The adaptive measure-and-prepare protocol for `n` qubits and the
//! construction that turns any qubit protocol into one for the Gaussian
//! problem.
//!
//! Protocol: localise `r` with a small batch, map the rest to the
//! oscillator-plus-classical model with `T_n`, heterodyne and read the
//! classical value, reprepare `|ζ⟩ ⊗ δ_x`, and map back with `S_n`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmark::optimal_risk;
use crate::error::{domain, Error, Result};
use crate::fock::{self, FockMatrix, QFunctionSampler};
use crate::gaussian::{self, bloch_length_from_s, s_to_variance, variance_to_s, GaussianMode};
use crate::lan::{self, LanConfig};
use crate::linalg::{c, CMatrix};
use crate::rng;
use crate::schur_weyl::{self, Block, BlockDecomposition, QubitModel};

/// Smallest per-axis batch accepted by [`localize`].
pub const MIN_LOCALIZATION_BATCH: usize = 30;
pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_DELTA: f64 = 0.05;
pub const BOOTSTRAP_REPS: usize = 1000;
/// Bootstrap replicates in sampled mode, where each one rebuilds the output.
pub const SAMPLED_BOOTSTRAP_REPS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub r_hat: [f64; 3],
    pub qubits_used: usize,
    /// `n^{−1/2+ε}`.
    pub radius: f64,
    pub success: bool,
}

/// Per-axis batch size `⌈n^{1−ε}⌉`.
pub fn localization_batch(n: usize, epsilon: f64) -> usize {
    (n as f64).powf(1.0 - epsilon).ceil() as usize
}

/// Measures `σ_x`, `σ_y`, `σ_z` on three batches of `⌈n^{1−ε}⌉` qubits each
/// and returns the empirical Bloch vector, pulled inside the unit ball.
pub fn localize<R: Rng + ?Sized>(true_r: [f64; 3], n: usize, epsilon: f64, rng: &mut R) -> Result<Localization> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(domain(format!("localization exponent {epsilon} outside (0, 1/2)")));
    }
    let m = localization_batch(n, epsilon);
    if m < MIN_LOCALIZATION_BATCH {
        return Err(Error::Precondition(format!(
            "batch n^(1-ε) = {m} below {MIN_LOCALIZATION_BATCH} for n={n}, ε={epsilon}"
        )));
    }
    let mut r_hat = [0.0; 3];
    for (a, est) in r_hat.iter_mut().enumerate() {
        let p = ((1.0 + true_r[a]) / 2.0).clamp(0.0, 1.0);
        let k = Binomial::new(m as u64, p).map_err(|e| domain(e.to_string()))?.sample(rng);
        *est = 2.0 * k as f64 / m as f64 - 1.0;
    }
    let norm = r_hat.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cap = 1.0 - 1e-9;
    if norm > cap {
        r_hat.iter_mut().for_each(|x| *x *= cap / norm);
    }
    let radius = (n as f64).powf(epsilon - 0.5);
    let err = r_hat.iter().zip(&true_r).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(Localization { r_hat, qubits_used: 3 * m, radius, success: err <= radius })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMode {
    /// The heterodyne-and-reprepare average is taken exactly, block by block;
    /// Monte Carlo covers localization only.
    Exact,
    /// Heterodyne outcomes and classical readings are drawn one by one and the
    /// reprepared states averaged.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolRun {
    pub model: QubitModel,
    pub epsilon: f64,
    pub mc_samples: usize,
    pub seed: u64,
    pub cfg: LanConfig,
    pub mode: EstimatorMode,
}

impl ProtocolRun {
    pub fn new(model: QubitModel, epsilon: f64, mc_samples: usize, seed: u64) -> Result<Self> {
        let cfg = LanConfig::new(model.n, model.r0, model.u, lan::DEFAULT_GRID_BINS, None)?;
        Self::with_config(model, epsilon, mc_samples, seed, cfg, EstimatorMode::Exact)
    }

    pub fn with_config(
        model: QubitModel,
        epsilon: f64,
        mc_samples: usize,
        seed: u64,
        cfg: LanConfig,
        mode: EstimatorMode,
    ) -> Result<Self> {
        if mc_samples == 0 {
            return Err(Error::Config("need at least one Monte Carlo sample".into()));
        }
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(domain(format!("localization exponent {epsilon} outside (0, 1/2)")));
        }
        if cfg.n != model.n || cfg.r0 != model.r0 {
            return Err(Error::Shape("LAN configuration does not match the model".into()));
        }
        Ok(Self { model, epsilon, mc_samples, seed, cfg, mode })
    }

    /// SHA-256 of the canonical JSON of every input that affects the result.
    pub fn config_hash(&self) -> String {
        let v = serde_json::json!({
            "n": self.model.n,
            "r0": self.model.r0,
            "u": self.model.u,
            "epsilon": self.epsilon,
            "mc_samples": self.mc_samples,
            "seed": self.seed,
            "grid": self.cfg.grid,
            "fock_n": self.cfg.fock_n,
            "prune": self.cfg.prune,
            "mode": self.mode,
        });
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub n: usize,
    pub r0: f64,
    pub u: [f64; 3],
    pub s: f64,
    pub risk: f64,
    pub stderr: f64,
    pub benchmark: f64,
    pub seed: u64,
    pub config_hash: String,
    pub mode: EstimatorMode,
    pub epsilon: f64,
    pub mc_samples: usize,
    /// Risk given successful localization.
    pub lan_risk: f64,
    pub failure_rate: f64,
    pub localization_qubits: usize,
    pub fock_n: usize,
    pub grid_bins: usize,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Bootstrap standard error of `stat` over resamples of `0..len`. A single
/// sample carries no spread information; its error is the full range 2.
fn bootstrap<F>(len: usize, reps: usize, seed: u64, stat: F) -> Result<f64>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    if len < 2 {
        return Ok(2.0);
    }
    let values: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, BOOTSTRAP_STREAM + b as u64);
            let idx: Vec<usize> = (0..len).map(|_| rng.random_range(0..len)).collect();
            stat(&idx)
        })
        .collect::<Result<_>>()?;
    Ok(std_dev(&values))
}

const BOOTSTRAP_STREAM: u64 = 1 << 40;

/// Output of `S_n ∘ H ∘ T_n` averaged exactly over heterodyne outcomes and
/// classical readings.
pub fn protocol_output(decomp: &BlockDecomposition, cfg: &LanConfig) -> Result<BlockDecomposition> {
    let t = lan::channel_t(decomp, cfg)?;
    lan::channel_s_after_heterodyne(&t, cfg)
}

struct SampledOutcome {
    success: bool,
    bin: usize,
    zeta: Complex64,
}

/// Block output of the repreparations `|ζ_m⟩ ⊗ δ_{bin_m}` averaged over the
/// successful samples among `idx`.
fn sampled_output(outcomes: &[SampledOutcome], idx: &[usize], cfg: &LanConfig) -> Result<Option<BlockDecomposition>> {
    let kept: Vec<&SampledOutcome> = idx.iter().map(|&i| &outcomes[i]).filter(|o| o.success).collect();
    if kept.is_empty() {
        return Ok(None);
    }
    let w = 1.0 / kept.len() as f64;
    let mut parts: BTreeMap<usize, CMatrix> = BTreeMap::new();
    for o in kept {
        let tj = cfg.spin_of(cfg.grid.center(o.bin));
        let psi = fock::coherent_state(o.zeta, cfg.fock_n);
        let x = parts.entry(tj).or_insert_with(|| CMatrix::zeros(cfg.fock_n, cfg.fock_n));
        *x += &psi * psi.adjoint() * c(w, 0.0);
    }
    let parts = parts.into_iter().map(|(tj, m)| (tj, FockMatrix::from_matrix_unchecked(m))).collect();
    lan::blocks_from_fock(cfg.n, parts).map(Some)
}

fn failure_risk(fail: f64, lan_risk: f64) -> f64 {
    (2.0 * fail + (1.0 - fail) * lan_risk).clamp(0.0, 2.0)
}

/// Monte Carlo risk `‖ρ^{⊗n} − L_n(ρ^{⊗n})‖₁` of the adaptive protocol.
/// Samples whose localization misses are charged the maximal distance 2.
pub fn run_map_protocol(run: &ProtocolRun) -> Result<RiskReport> {
    let model = &run.model;
    let cfg = &run.cfg;
    let r = model.bloch_vector();
    let decomp = schur_weyl::decompose(model, cfg.prune)?;
    let locs: Vec<(Localization, rng::Stream)> = (0..run.mc_samples)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::stream(run.seed, i as u64);
            localize(r, model.n, run.epsilon, &mut g).map(|l| (l, g))
        })
        .collect::<Result<_>>()?;
    let fails: Vec<f64> = locs.iter().map(|(l, _)| if l.success { 0.0 } else { 1.0 }).collect();
    let failure_rate = mean(&fails);
    let qubits = locs[0].0.qubits_used;

    let (lan_risk, risk, stderr) = match run.mode {
        EstimatorMode::Exact => {
            let d = lan::block_l1(&decomp, &protocol_output(&decomp, cfg)?)?.min(2.0);
            let contrib: Vec<f64> = fails.iter().map(|&f| if f > 0.0 { 2.0 } else { d }).collect();
            let se = bootstrap(contrib.len(), BOOTSTRAP_REPS, run.seed, |idx| {
                Ok(idx.iter().map(|&i| contrib[i]).sum::<f64>() / idx.len() as f64)
            })?;
            (d, mean(&contrib), se)
        }
        EstimatorMode::Sampled => {
            let t = lan::channel_t(&decomp, cfg)?;
            let marginal = t.classical_marginal();
            let bins = WeightedIndex::new(&marginal).map_err(|e| Error::Degenerate(e.to_string()))?;
            let mut drawn: Vec<(Localization, rng::Stream, usize)> =
                locs.into_iter().map(|(l, mut g)| {
                    let b = bins.sample(&mut g);
                    (l, g, b)
                }).collect();
            let mut wanted: Vec<usize> = drawn.iter().filter(|d| d.0.success).map(|d| d.2).collect();
            wanted.sort_unstable();
            wanted.dedup();
            let samplers: BTreeMap<usize, QFunctionSampler> = wanted
                .par_iter()
                .map(|&b| {
                    let slab = FockMatrix::from_matrix_unchecked(t.slab(b));
                    QFunctionSampler::new(&slab).map(|s| (b, s))
                })
                .collect::<Result<_>>()?;
            let outcomes: Vec<SampledOutcome> = drawn
                .par_iter_mut()
                .map(|(l, g, b)| SampledOutcome {
                    success: l.success,
                    bin: *b,
                    zeta: if l.success { samplers[b].sample(g) } else { Complex64::new(0.0, 0.0) },
                })
                .collect();
            let risk_of = |idx: &[usize]| -> Result<f64> {
                let fail = idx.iter().filter(|&&i| !outcomes[i].success).count() as f64 / idx.len() as f64;
                let d = match sampled_output(&outcomes, idx, cfg)? {
                    Some(out) => lan::block_l1(&decomp, &out)?.min(2.0),
                    None => 2.0,
                };
                Ok(failure_risk(fail, d))
            };
            let all: Vec<usize> = (0..outcomes.len()).collect();
            let d = match sampled_output(&outcomes, &all, cfg)? {
                Some(out) => lan::block_l1(&decomp, &out)?.min(2.0),
                None => 2.0,
            };
            let se = bootstrap(outcomes.len(), SAMPLED_BOOTSTRAP_REPS, run.seed, risk_of)?;
            (d, failure_risk(failure_rate, d), se)
        }
    };

    Ok(RiskReport {
        n: model.n,
        r0: model.r0,
        u: model.u,
        s: model.s(),
        risk: risk.clamp(0.0, 2.0),
        stderr,
        benchmark: optimal_risk(model.s())?,
        seed: run.seed,
        config_hash: run.config_hash(),
        mode: run.mode,
        epsilon: run.epsilon,
        mc_samples: run.mc_samples,
        lan_risk,
        failure_rate,
        localization_qubits: qubits,
        fock_n: cfg.fock_n,
        grid_bins: cfg.grid.bins,
    })
}

/// A measure-and-prepare map on block-diagonal `n`-qubit states.
pub trait MapCandidate: Sync {
    fn name(&self) -> String;
    fn apply(&self, input: &BlockDecomposition, cfg: &LanConfig) -> Result<BlockDecomposition>;
}

/// The protocol's own map `S_n ∘ H ∘ T_n`.
#[derive(Debug, Clone, Copy, Default)]
pub struct OptimalMap;

impl MapCandidate for OptimalMap {
    fn name(&self) -> String {
        "optimal".into()
    }

    fn apply(&self, input: &BlockDecomposition, cfg: &LanConfig) -> Result<BlockDecomposition> {
        protocol_output(input, cfg)
    }
}

/// Ignores its input and prepares `|j = n/2, k⟩` with `k = photons`.
#[derive(Debug, Clone, Copy)]
pub struct FixedStateMap {
    pub photons: usize,
}

impl MapCandidate for FixedStateMap {
    fn name(&self) -> String {
        format!("fixed(k={})", self.photons)
    }

    fn apply(&self, input: &BlockDecomposition, _cfg: &LanConfig) -> Result<BlockDecomposition> {
        let n = input.n;
        if self.photons > n {
            return Err(domain(format!("level {} does not exist in spin {}/2", self.photons, n)));
        }
        let mut rho = CMatrix::zeros(n + 1, n + 1);
        rho[(self.photons, self.photons)] = c(1.0, 0.0);
        Ok(BlockDecomposition {
            n,
            blocks: vec![Block { two_j: n, multiplicity: 1.0, probability: 1.0, rho }],
            pruned_mass: 0.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GadgetConfig {
    pub s: f64,
    pub delta: f64,
    pub n: usize,
    pub epsilon: f64,
    pub mc_samples: usize,
    pub seed: u64,
    pub grid_bins: usize,
    /// `u` is drawn uniformly from the disc of this radius in the `xy` plane.
    pub prior_radius: f64,
}

impl GadgetConfig {
    pub fn new(s: f64, delta: f64, n: usize) -> Self {
        Self {
            s,
            delta,
            n,
            epsilon: DEFAULT_EPSILON,
            mc_samples: 64,
            seed: 0,
            grid_bins: 1024,
            prior_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackItem {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GadgetReport {
    pub candidate: String,
    pub s: f64,
    pub delta: f64,
    pub n: usize,
    pub seed: u64,
    pub benchmark: f64,
    /// Gaussian-problem risk with heterodyne localization, failures charged 2.
    pub risk: f64,
    pub stderr: f64,
    /// Risk when the reflected arm reveals `z` exactly.
    pub ideal_risk: f64,
    pub localization_failure_rate: f64,
    pub slack: Vec<SlackItem>,
    pub total_slack: f64,
    /// Noise of the amplifier with the output variance `t⁻²/(2r0) + (t⁻¹−1)/2`,
    /// for comparison with the physical amplifier used above.
    pub amplifier_verbatim: f64,
    /// `risk ≥ R*(s) − total_slack`.
    pub bound_holds: bool,
    /// `total_slack < R*(s)/10`.
    pub slack_small: bool,
}

/// `‖Φ_0(V) − Φ_0(V')‖₁` for two centred thermal states.
fn thermal_gap(v: f64, v2: f64) -> Result<f64> {
    let (s1, s2) = (variance_to_s(v)?, variance_to_s(v2)?);
    let dim = fock::recommended_truncation(s1.max(s2), Complex64::new(0.0, 0.0));
    Ok(fock::thermal_state(s1, dim)?.l1_distance(&fock::thermal_state(s2, dim)?))
}

/// `‖Φ_{w/t} − A(T_n^{(q)}(candidate(S_n(Φ_w ⊗ N_0))))‖₁`.
fn gadget_distance(w: Complex64, t: f64, s: f64, n: usize, bins: usize, candidate: &dyn MapCandidate) -> Result<f64> {
    let r0 = bloch_length_from_s(s);
    let u = [2.0 * r0.sqrt() * w.re, 2.0 * r0.sqrt() * w.im, 0.0];
    let base = LanConfig::new(n, r0, u, bins, None)?;
    let gain = t.powi(-2);
    let s_amp = variance_to_s(gain * s_to_variance(s) + (gain - 1.0) / 2.0)?;
    let fock_n = base.fock_n.max(fock::recommended_truncation(s_amp, w / t));
    let cfg = LanConfig { fock_n, ..base };
    let input = lan::channel_s(&lan::gaussian_target(u, &cfg)?, &cfg)?;
    let out = candidate.apply(&input, &cfg)?;
    let x = lan::channel_t_quantum(&out, fock_n)?;
    let amplified = fock::amplifier_channel(&x, gain, fock_n)?;
    let target = fock::displaced_thermal(w / t, s, fock_n)?;
    Ok(fock::trace_norm_distance(&target, &amplified)?.min(2.0))
}

/// Turns the qubit map `candidate` into a measure-and-prepare scheme for
/// displaced thermal states and reports its risk next to `R*(s)` and the
/// itemised slack of the comparison.
///
/// Each draw: `u` from the prior, `Φ_z` split on a beamsplitter of
/// reflectivity `δ` against `Φ_0`, the reflected arm heterodyned to
/// `z_0 = ζ/δ`, the transmitted arm recentred to `Φ_w`, `w = t(z − z_0)`,
/// and if `‖u_w‖ ≤ n^ε` passed through `S_n`, the candidate, the quantum
/// part of `T_n` and an amplifier of power gain `t⁻²`.
pub fn lower_bound_gadget(cfg: &GadgetConfig, candidate: &dyn MapCandidate) -> Result<GadgetReport> {
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(domain(format!("reflectivity δ={} outside (0,1)", cfg.delta)));
    }
    if !(cfg.s > 0.0 && cfg.s < 1.0) {
        return Err(domain(format!("thermal parameter s={} outside (0,1)", cfg.s)));
    }
    if cfg.mc_samples == 0 {
        return Err(Error::Config("need at least one Monte Carlo sample".into()));
    }
    let (s, n) = (cfg.s, cfg.n);
    let r0 = bloch_length_from_s(s);
    let t = (1.0 - cfg.delta * cfg.delta).sqrt();
    let reach = (n as f64).powf(cfg.epsilon);
    let benchmark = optimal_risk(s)?;

    let draws: Vec<f64> = (0..cfg.mc_samples)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::stream(cfg.seed, i as u64);
            let rad = cfg.prior_radius * g.random::<f64>().sqrt();
            let ang = std::f64::consts::TAU * g.random::<f64>();
            let z = gaussian::displacement_amplitude([rad * ang.cos(), rad * ang.sin(), 0.0], r0);
            let (_, reflected) = gaussian::beamsplitter_split(&GaussianMode::new(z, s)?, cfg.delta)?;
            let z0 = gaussian::heterodyne_sample(&reflected, &mut g) / cfg.delta;
            let w = (z - z0) * t;
            if 2.0 * r0.sqrt() * w.norm() > reach {
                return Ok(f64::NAN);
            }
            gadget_distance(w, t, s, n, cfg.grid_bins, candidate)
        })
        .collect::<Result<_>>()?;
    let failure_rate = draws.iter().filter(|d| d.is_nan()).count() as f64 / draws.len() as f64;
    let contrib: Vec<f64> = draws.iter().map(|d| if d.is_nan() { 2.0 } else { *d }).collect();
    let risk = mean(&contrib);
    let stderr = bootstrap(contrib.len(), BOOTSTRAP_REPS, cfg.seed, |idx| {
        Ok(idx.iter().map(|&i| contrib[i]).sum::<f64>() / idx.len() as f64)
    })?;
    let ideal_risk = gadget_distance(Complex64::new(0.0, 0.0), t, s, n, cfg.grid_bins, candidate)?;

    let v = s_to_variance(s);
    let gain = t.powi(-2);
    let lan_row = lan::lan_distances(n, [0.0; 3], r0, cfg.grid_bins, None, cfg.epsilon, cfg.seed)?;
    let slack = vec![
        SlackItem { name: "amplifier".into(), value: thermal_gap(v, gain * v + (gain - 1.0) / 2.0)? },
        SlackItem { name: "localization".into(), value: 2.0 * failure_rate },
        SlackItem { name: "lan_finite_n".into(), value: lan_row.dist_t + lan_row.dist_s },
    ];
    let total_slack = slack.iter().map(|x| x.value).sum::<f64>();
    let verbatim = gaussian::amplify(&GaussianMode::new(Complex64::new(0.0, 0.0), s)?, t, r0)?.variance();

    Ok(GadgetReport {
        candidate: candidate.name(),
        s,
        delta: cfg.delta,
        n,
        seed: cfg.seed,
        benchmark,
        risk,
        stderr,
        ideal_risk,
        localization_failure_rate: failure_rate,
        amplifier_verbatim: thermal_gap(v, verbatim)?,
        bound_holds: risk >= benchmark - total_slack,
        slack_small: total_slack < 0.1 * benchmark,
        slack,
        total_slack,
    })
}
