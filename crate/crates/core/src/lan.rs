//! Channels between the qubit blocks and the classical-quantum Gaussian model
//! `Φ_u ⊗ N(u_z, 1 − r0²)`.
//!
//! `T_n` sends block `j` to the Fock space through `V_j : |j, m⟩ ↦ |j − m⟩`
//! and records a smoothed version of `j` on a classical line. `S_n` reads the
//! classical value back as a block label and compresses the oscillator onto
//! the first `2j + 1` levels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fock::{self, FockMatrix};
use crate::gaussian::{displacement_amplitude, s_from_bloch_length};
use crate::linalg::{trace, trace_norm, CMatrix};
use crate::schur_weyl::{self, Block, BlockDecomposition, QubitModel};

/// Uniform grid of `bins` cells on `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub bins: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(x_max > x_min) {
            return Err(domain(format!("empty grid [{x_min}, {x_max}] with {bins} bins")));
        }
        Ok(Self { x_min, x_max, bins })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.bins as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.bins).map(|i| self.center(i))
    }

    pub fn index_of(&self, x: f64) -> Option<usize> {
        if x < self.x_min || x >= self.x_max {
            return None;
        }
        Some((((x - self.x_min) / self.dx()) as usize).min(self.bins - 1))
    }

    /// Masses `density(x_i)·dx`, renormalised to one. Fails when the density
    /// has no visible mass on the grid.
    pub fn discretize(&self, density: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
        let dx = self.dx();
        let mut m: Vec<f64> = self.centers().map(|x| density(x) * dx).collect();
        let total: f64 = m.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Coverage("density has no mass on the grid".into()));
        }
        m.iter_mut().for_each(|v| *v /= total);
        Ok(m)
    }
}

/// Discretised normal law.
pub fn normal_masses(grid: &Grid, mean: f64, variance: f64) -> Result<Vec<f64>> {
    if variance <= 0.0 {
        let mut m = vec![0.0; grid.bins];
        let i = grid.index_of(mean).ok_or_else(|| Error::Coverage(format!("point {mean} outside grid")))?;
        m[i] = 1.0;
        return Ok(m);
    }
    grid.discretize(|x| (-(x - mean).powi(2) / (2.0 * variance)).exp())
}

/// One product term `mass(x) ⊗ M`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridTerm {
    pub mass: Vec<f64>,
    pub quantum: FockMatrix,
}

/// A classical-quantum state `Σ_t mass_t(x) ⊗ M_t` on a grid. `mass_t[i]`
/// already includes the cell width, so `Σ_{t,i} mass_t[i] Tr M_t = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    pub grid: Grid,
    pub dim: usize,
    pub terms: Vec<HybridTerm>,
    /// Mass dropped while building the state (pruned blocks).
    pub dropped_mass: f64,
}

impl HybridState {
    pub fn new(grid: Grid, dim: usize, terms: Vec<HybridTerm>) -> Result<Self> {
        for t in &terms {
            if t.mass.len() != grid.bins || t.quantum.dim() != dim {
                return Err(Error::Shape("hybrid term does not match grid or truncation".into()));
            }
        }
        Ok(Self { grid, dim, terms, dropped_mass: 0.0 })
    }

    pub fn total_mass(&self) -> f64 {
        self.terms.iter().map(|t| t.mass.iter().sum::<f64>() * t.quantum.trace().re).sum()
    }

    /// `Σ_t mass_t[i] M_t`.
    pub fn slab(&self, i: usize) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for t in &self.terms {
            let w = t.mass[i];
            if w != 0.0 {
                m += t.quantum.matrix() * crate::linalg::c(w, 0.0);
            }
        }
        m
    }

    /// Mass of each bin, `Σ_t mass_t[i] Tr M_t`.
    pub fn classical_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.bins];
        for t in &self.terms {
            let tr = t.quantum.trace().re;
            for (o, m) in out.iter_mut().zip(&t.mass) {
                *o += m * tr;
            }
        }
        out
    }

    /// `Σ_t (Σ_i mass_t[i]) M_t`.
    pub fn quantum_marginal(&self) -> FockMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for t in &self.terms {
            m += t.quantum.matrix() * crate::linalg::c(t.mass.iter().sum(), 0.0);
        }
        FockMatrix::from_matrix_unchecked(m)
    }

    /// Checks positivity of every slab and total mass.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let total = self.total_mass() + self.dropped_mass;
        if (total - 1.0).abs() > tol {
            return Err(Error::Invariant(format!("hybrid state has mass {total}")));
        }
        for i in 0..self.grid.bins {
            let slab = self.slab(i);
            if trace(&slab).re > 0.0 && crate::linalg::min_eigenvalue(&slab) < -crate::linalg::NEGATIVITY_TOL {
                return Err(Error::Invariant(format!("slab {i} is not positive")));
            }
        }
        Ok(())
    }
}

/// Parameters shared by `T_n`, `S_n` and the Gaussian target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanConfig {
    pub n: usize,
    pub r0: f64,
    pub fock_n: usize,
    pub grid: Grid,
    /// Blocks with smaller probability are dropped.
    pub prune: f64,
}

pub const DEFAULT_GRID_BINS: usize = 2048;
pub const GRID_HALF_WIDTH_SD: f64 = 8.0;
pub const DEFAULT_PRUNE: f64 = 1e-15;

impl LanConfig {
    /// Grid `u_z ± (8√(1−r0²) + 6σ_K)`, `σ_K` the kernel width, and truncation `max(n + 1, N_rec(α(u)))`
    /// unless `fock_n` is given.
    pub fn new(n: usize, r0: f64, u: [f64; 3], bins: usize, fock_n: Option<usize>) -> Result<Self> {
        if !(r0 > 0.0 && r0 < 1.0) {
            return Err(domain(format!("r0={r0} outside (0,1)")));
        }
        if n == 0 {
            return Err(domain("need at least one qubit"));
        }
        let half = GRID_HALF_WIDTH_SD * (1.0 - r0 * r0).sqrt() + KERNEL_REACH_SD * (0.5 / (n as f64).sqrt()).sqrt();
        let grid = Grid::new(u[2] - half, u[2] + half, bins)?;
        let rec = fock::recommended_truncation(s_from_bloch_length(r0), displacement_amplitude(u, r0));
        let fock_n = fock_n.unwrap_or((n + 1).max(rec));
        Ok(Self { n, r0, fock_n, grid, prune: DEFAULT_PRUNE })
    }

    pub fn s(&self) -> f64 {
        s_from_bloch_length(self.r0)
    }

    /// `G_n(j) = √n (2j/n − r0)`.
    pub fn kernel_center(&self, two_j: usize) -> f64 {
        let n = self.n as f64;
        (two_j as f64 - n * self.r0) / n.sqrt()
    }

    /// Variance `1/(2√n)` of the smoothing kernel.
    pub fn kernel_variance(&self) -> f64 {
        0.5 / (self.n as f64).sqrt()
    }

    /// Block label read off the classical value: the valid `2j` nearest to
    /// `n r0 + √n x`, ties to the larger spin, clipped to the valid range.
    pub fn spin_of(&self, x: f64) -> usize {
        let n = self.n as f64;
        let t = n * self.r0 + n.sqrt() * x;
        let y = (n - t) / 2.0;
        let i = (y - 0.5).ceil().clamp(0.0, (self.n / 2) as f64) as usize;
        self.n - 2 * i
    }
}

/// `V_j ρ_j V_j†` as an `N`-level Fock matrix; the block basis index is the
/// photon number.
pub fn fock_isometry_apply(rho_j: &CMatrix, fock_n: usize) -> Result<FockMatrix> {
    let d = rho_j.nrows();
    if d > fock_n {
        return Err(Error::Truncation(format!("block of dimension {d} does not fit {fock_n} levels")));
    }
    let mut m = CMatrix::zeros(fock_n, fock_n);
    m.view_mut((0, 0), (d, d)).copy_from(rho_j);
    Ok(FockMatrix::from_matrix_unchecked(m))
}

/// `V_j† X V_j`: the top-left `(2j+1)` corner.
pub fn fock_coisometry_apply(x: &FockMatrix, two_j: usize) -> CMatrix {
    let d = (two_j + 1).min(x.dim());
    let mut out = CMatrix::zeros(two_j + 1, two_j + 1);
    out.view_mut((0, 0), (d, d)).copy_from(&x.matrix().view((0, 0), (d, d)));
    out
}

/// Grid masses of `K_{n,j}`, a normal law centred at `G_n(j)` with variance
/// `1/(2√n)`.
pub fn smoothing_kernel(cfg: &LanConfig, two_j: usize) -> Result<Vec<f64>> {
    let c = cfg.kernel_center(two_j);
    let v = cfg.kernel_variance();
    let reach = KERNEL_REACH_SD * v.sqrt();
    if c - reach < cfg.grid.x_min || c + reach > cfg.grid.x_max {
        return Err(Error::Coverage(format!(
            "kernel for 2j={two_j} centred at {c:.4} not covered by [{:.4}, {:.4}]",
            cfg.grid.x_min, cfg.grid.x_max
        )));
    }
    normal_masses(&cfg.grid, c, v)
}

/// Blocks whose kernel lies off the grid are dropped when their probability is
/// below this, and reported as an error otherwise.
const COVERAGE_SLACK: f64 = 1e-9;
const KERNEL_REACH_SD: f64 = 6.0;

/// `T_n(ρ) = Σ_j p_j K_{n,j} ⊗ V_j ρ_j V_j†`.
pub fn channel_t(decomp: &BlockDecomposition, cfg: &LanConfig) -> Result<HybridState> {
    if decomp.n != cfg.n {
        return Err(Error::Shape(format!("decomposition has n={} but config n={}", decomp.n, cfg.n)));
    }
    let mut dropped = decomp.pruned_mass;
    let mut terms = Vec::with_capacity(decomp.blocks.len());
    for b in &decomp.blocks {
        if b.probability == 0.0 {
            continue;
        }
        let kernel = match smoothing_kernel(cfg, b.two_j) {
            Ok(k) => k,
            Err(Error::Coverage(_)) if b.probability < COVERAGE_SLACK => {
                dropped += b.probability;
                continue;
            }
            Err(e) => return Err(e),
        };
        let q = fock_isometry_apply(&b.rho, cfg.fock_n)?.scaled(b.probability);
        terms.push(HybridTerm { mass: kernel, quantum: q });
    }
    let mut h = HybridState::new(cfg.grid, cfg.fock_n, terms)?;
    h.dropped_mass = dropped;
    Ok(h)
}

/// Quantum part of `T_n`, `Σ_j p_j V_j ρ_j V_j†`.
pub fn channel_t_quantum(decomp: &BlockDecomposition, fock_n: usize) -> Result<FockMatrix> {
    let mut m = CMatrix::zeros(fock_n, fock_n);
    for b in &decomp.blocks {
        let d = b.two_j + 1;
        if d > fock_n {
            return Err(Error::Truncation(format!("block of dimension {d} does not fit {fock_n} levels")));
        }
        let mut view = m.view_mut((0, 0), (d, d));
        view += &b.rho * crate::linalg::c(b.probability, 0.0);
    }
    Ok(FockMatrix::from_matrix_unchecked(m))
}

/// `Φ_u ⊗ N(u_z, 1 − r0²)` with `Φ_u` the thermal state displaced by `α(u)`.
pub fn gaussian_target(u: [f64; 3], cfg: &LanConfig) -> Result<HybridState> {
    let mass = normal_masses(&cfg.grid, u[2], 1.0 - cfg.r0 * cfg.r0)?;
    let q = fock::displaced_thermal(displacement_amplitude(u, cfg.r0), cfg.s(), cfg.fock_n)?;
    HybridState::new(cfg.grid, cfg.fock_n, vec![HybridTerm { mass, quantum: q }])
}

/// Per-`j` classical weight of each term.
fn spin_weights(h: &HybridState, cfg: &LanConfig) -> Vec<Vec<(usize, f64)>> {
    let labels: Vec<usize> = h.grid.centers().map(|x| cfg.spin_of(x)).collect();
    h.terms
        .iter()
        .map(|t| {
            let mut acc: Vec<(usize, f64)> = Vec::new();
            for (i, &m) in t.mass.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                match acc.iter_mut().find(|e| e.0 == labels[i]) {
                    Some(e) => e.1 += m,
                    None => acc.push((labels[i], m)),
                }
            }
            acc
        })
        .collect()
}

/// Assembles blocks from per-`j` unnormalised oscillator states `X_j`:
/// `p_j = Tr X_j`, `ρ_j ∝ V_j† X_j V_j`.
pub(crate) fn blocks_from_fock(n: usize, parts: Vec<(usize, FockMatrix)>) -> Result<BlockDecomposition> {
    let mut blocks = Vec::with_capacity(parts.len());
    for (tj, x) in parts {
        let p = x.trace().re;
        if !(p > 0.0) {
            continue;
        }
        let corner = fock_coisometry_apply(&x, tj);
        let kept = trace(&corner).re;
        let rho = if kept > 1e-300 {
            corner / crate::linalg::c(kept, 0.0)
        } else {
            // nothing of X_j fits the block: fall back to its highest weight
            let mut v = CMatrix::zeros(tj + 1, tj + 1);
            v[(0, 0)] = crate::linalg::c(1.0, 0.0);
            v
        };
        blocks.push(Block { two_j: tj, multiplicity: schur_weyl::ln_multiplicity(n, tj)?.exp(), probability: p, rho });
    }
    if blocks.is_empty() {
        return Err(Error::Degenerate("no classical mass to read a block label from".into()));
    }
    blocks.sort_by(|a, b| b.two_j.cmp(&a.two_j));
    Ok(BlockDecomposition { n, blocks, pruned_mass: 0.0 })
}

/// `S_n`: bins map to blocks through [`LanConfig::spin_of`]; each block gets
/// the bin-averaged oscillator state compressed to `2j + 1` levels.
pub fn channel_s(h: &HybridState, cfg: &LanConfig) -> Result<BlockDecomposition> {
    let weights = spin_weights(h, cfg);
    let mut spins: Vec<usize> = weights.iter().flatten().map(|e| e.0).collect();
    spins.sort_unstable();
    spins.dedup();
    let parts = spins
        .into_iter()
        .map(|tj| {
            let mut m = CMatrix::zeros(h.dim, h.dim);
            for (t, w) in h.terms.iter().zip(&weights) {
                if let Some(e) = w.iter().find(|e| e.0 == tj) {
                    m += t.quantum.matrix() * crate::linalg::c(e.1, 0.0);
                }
            }
            (tj, FockMatrix::from_matrix_unchecked(m))
        })
        .collect();
    blocks_from_fock(cfg.n, parts)
}

/// `S_n` applied after heterodyne-and-prepare on the oscillator of every
/// term, keeping the classical part. This is the exact average of the
/// measure-and-prepare step over heterodyne outcomes and classical readings.
pub fn channel_s_after_heterodyne(h: &HybridState, cfg: &LanConfig) -> Result<BlockDecomposition> {
    let weights = spin_weights(h, cfg);
    let mut spins: Vec<usize> = weights.iter().flatten().map(|e| e.0).collect();
    spins.sort_unstable();
    spins.dedup();
    // By linearity, mix first and apply the channel once per block.
    let mixed: Vec<FockMatrix> = spins
        .iter()
        .map(|&tj| {
            let mut m = CMatrix::zeros(h.dim, h.dim);
            for (t, w) in h.terms.iter().zip(&weights) {
                if let Some(e) = w.iter().find(|e| e.0 == tj) {
                    m += t.quantum.matrix() * crate::linalg::c(e.1, 0.0);
                }
            }
            FockMatrix::from_matrix_unchecked(m)
        })
        .collect();
    let prepared = fock::heterodyne_prepare_many(&mixed, h.dim);
    blocks_from_fock(cfg.n, spins.into_iter().zip(prepared).collect())
}

/// `Σ_i ‖slab₁(i) − slab₂(i)‖₁`.
pub fn hybrid_l1(h1: &HybridState, h2: &HybridState) -> Result<f64> {
    if h1.grid != h2.grid || h1.dim != h2.dim {
        return Err(Error::Shape("hybrid states live on different grids or truncations".into()));
    }
    let m1 = h1.classical_marginal();
    let m2 = h2.classical_marginal();
    let parts: Vec<f64> = (0..h1.grid.bins)
        .into_par_iter()
        .map(|i| {
            if m1[i] + m2[i] < 1e-14 {
                return (m1[i] - m2[i]).abs();
            }
            trace_norm(&(h1.slab(i) - h2.slab(i)))
        })
        .collect();
    Ok(parts.iter().sum())
}

/// `Σ_j ‖p_j ρ_j − p'_j ρ'_j‖₁`.
pub fn block_l1(d1: &BlockDecomposition, d2: &BlockDecomposition) -> Result<f64> {
    if d1.n != d2.n {
        return Err(Error::Shape(format!("block decompositions for n={} and n={}", d1.n, d2.n)));
    }
    let mut spins: Vec<usize> = d1.blocks.iter().chain(&d2.blocks).map(|b| b.two_j).collect();
    spins.sort_unstable();
    spins.dedup();
    let parts: Vec<f64> = spins
        .par_iter()
        .map(|&tj| {
            let scaled = |d: &BlockDecomposition| d.block(tj).map(|b| &b.rho * crate::linalg::c(b.probability, 0.0));
            match (scaled(d1), scaled(d2)) {
                (Some(a), Some(b)) => trace_norm(&(a - b)),
                (Some(a), None) | (None, Some(a)) => trace_norm(&a),
                (None, None) => 0.0,
            }
        })
        .collect();
    Ok(parts.iter().sum::<f64>() + d1.pruned_mass + d2.pruned_mass)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub n: usize,
    pub u: [f64; 3],
    pub r0: f64,
    pub dist_t: f64,
    pub dist_s: f64,
    pub grid_bins: usize,
    pub fock_n: usize,
    pub seed: u64,
    /// `‖u‖ ≤ n^ε`.
    pub in_model: bool,
    /// Mass lost to pruning, grid coverage and Fock truncation; distances are
    /// meaningful up to about twice this.
    pub tolerance: f64,
}

pub const SCAN_CSV_HEADER: &str = "n,u_x,u_y,u_z,r0,dist_T,dist_S,grid_bins,fock_N,seed";

impl ScanRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.12e},{:.12e},{},{},{}",
            self.n, self.u[0], self.u[1], self.u[2], self.r0, self.dist_t, self.dist_s, self.grid_bins, self.fock_n, self.seed
        )
    }
}

/// Both distances of the LAN statement at one `(n, u)`:
/// `‖Φ_u ⊗ N_u − T_n(ρ^n_u)‖₁` and `‖ρ^n_u − S_n(Φ_u ⊗ N_u)‖₁`.
pub fn lan_distances(n: usize, u: [f64; 3], r0: f64, bins: usize, fock_n: Option<usize>, epsilon: f64, seed: u64) -> Result<ScanRow> {
    let model = QubitModel::new(r0, u, n)?;
    let cfg = LanConfig::new(n, r0, u, bins, fock_n)?;
    let decomp = schur_weyl::decompose(&model, cfg.prune)?;
    let target = gaussian_target(u, &cfg)?;
    let t_out = channel_t(&decomp, &cfg)?;
    let dist_t = hybrid_l1(&target, &t_out)?;
    let s_out = channel_s(&target, &cfg)?;
    let dist_s = block_l1(&decomp, &s_out)?;
    let fock_deficit = 1.0 - target.total_mass();
    Ok(ScanRow {
        n,
        u,
        r0,
        dist_t,
        dist_s,
        grid_bins: bins,
        fock_n: cfg.fock_n,
        seed,
        in_model: model.is_local(epsilon),
        tolerance: t_out.dropped_mass + fock_deficit.abs(),
    })
}

pub fn lan_convergence_scan(
    n_list: &[usize],
    u: [f64; 3],
    r0: f64,
    bins: usize,
    fock_n: Option<usize>,
    epsilon: f64,
    seed: u64,
) -> Result<Vec<ScanRow>> {
    n_list.iter().map(|&n| lan_distances(n, u, r0, bins, fock_n, epsilon, seed)).collect()
}
