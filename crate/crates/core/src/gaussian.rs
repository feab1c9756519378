//! First and second moment description of one-mode displaced thermal states,
//! plus the Gaussian operations used by the lower-bound construction.
//!
//! `V` always denotes the variance of the quadrature `Q` (vacuum: `1/2`), and a
//! thermal state with parameter `s` has `V = (1+s)/(2(1−s))`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fock::{self, FockMatrix};

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Displaced thermal state `Φ_z` with parameter `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMode {
    pub mean: Complex64,
    pub s: f64,
}

impl GaussianMode {
    pub fn new(mean: Complex64, s: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&s) {
            return Err(domain(format!("thermal parameter s={s} outside [0,1)")));
        }
        if !mean.re.is_finite() || !mean.im.is_finite() {
            return Err(domain("non-finite displacement"));
        }
        Ok(Self { mean, s })
    }

    pub fn from_variance(mean: Complex64, variance: f64) -> Result<Self> {
        Self::new(mean, variance_to_s(variance)?)
    }

    pub fn variance(&self) -> f64 {
        s_to_variance(self.s)
    }
}

/// Classical normal law `N(mean, variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalGaussian {
    pub mean: f64,
    pub variance: f64,
}

impl ClassicalGaussian {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance >= 0.0) {
            return Err(domain(format!("negative variance {variance}")));
        }
        Ok(Self { mean, variance })
    }

    pub fn density(&self, x: f64) -> f64 {
        let d = x - self.mean;
        (-d * d / (2.0 * self.variance)).exp() / (2.0 * std::f64::consts::PI * self.variance).sqrt()
    }
}

pub fn s_to_variance(s: f64) -> f64 {
    (1.0 + s) / (2.0 * (1.0 - s))
}

/// Inverse of `V(s)`: `s = (2V − 1)/(2V + 1)`.
pub fn variance_to_s(v: f64) -> Result<f64> {
    if !(v >= 0.5) || !v.is_finite() {
        return Err(Error::Domain(format!("unphysical variance {v} < 1/2")));
    }
    Ok((2.0 * v - 1.0) / (2.0 * v + 1.0))
}

/// Thermal parameter of the oscillator limit of qubits with Bloch length `r0`.
pub fn s_from_bloch_length(r0: f64) -> f64 {
    (1.0 - r0) / (1.0 + r0)
}

pub fn bloch_length_from_s(s: f64) -> f64 {
    (1.0 - s) / (1.0 + s)
}

/// Coherent amplitude `⟨a⟩ = (u_x + i u_y)/(2√r0)` carried by the oscillator
/// limit of qubits at local parameter `u`. Equivalently `⟨Q⟩ + i⟨P⟩ = (u_x + i u_y)/√(2 r0)`.
pub fn displacement_amplitude(u: [f64; 3], r0: f64) -> Complex64 {
    Complex64::new(u[0], u[1]) / (2.0 * r0.sqrt())
}

/// Heterodyne outcome of `Φ_z`: complex normal with mean `z` and
/// `E|ζ − z|² = 1/(1−s)`.
pub fn heterodyne_sample<R: Rng + ?Sized>(state: &GaussianMode, rng: &mut R) -> Complex64 {
    let sd = (0.5 / (1.0 - state.s)).sqrt();
    let re = standard_normal(rng);
    let im = standard_normal(rng);
    state.mean + Complex64::new(sd * re, sd * im)
}

/// Mixes `state` with an undisplaced thermal state of the same `s` on a
/// beamsplitter with amplitude reflectivity `delta`. Returns
/// `(transmitted, reflected)`.
pub fn beamsplitter_split(state: &GaussianMode, delta: f64) -> Result<(GaussianMode, GaussianMode)> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(domain(format!("reflectivity {delta} outside [0,1]")));
    }
    let t = (1.0 - delta * delta).sqrt();
    Ok((
        GaussianMode { mean: state.mean * t, s: state.s },
        GaussianMode { mean: state.mean * delta, s: state.s },
    ))
}

/// Amplifier restoring a beamsplitter loss `t`: the displacement is rescaled by
/// `1/t` and the output variance is `t⁻²/(2 r0) + (t⁻¹ − 1)/2`.
pub fn amplify(state: &GaussianMode, t: f64, r0: f64) -> Result<GaussianMode> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(domain(format!("amplifier transmissivity t={t} outside (0,1]")));
    }
    if !(r0 > 0.0 && r0 <= 1.0) {
        return Err(domain(format!("Bloch length r0={r0} outside (0,1]")));
    }
    let v = t.powi(-2) / (2.0 * r0) + (1.0 / t - 1.0) / 2.0;
    GaussianMode::from_variance(state.mean / t, v)
}

/// Moment action of the quantum-limited amplifier with power gain `gain`:
/// mean `×√gain`, variance `gain·V + (gain − 1)/2`. Matches
/// [`fock::amplifier_channel`].
pub fn quantum_limited_amplify(state: &GaussianMode, gain: f64) -> Result<GaussianMode> {
    if !(gain >= 1.0) {
        return Err(domain(format!("amplifier gain {gain} must be ≥ 1")));
    }
    let v = gain * state.variance() + (gain - 1.0) / 2.0;
    GaussianMode::from_variance(state.mean * gain.sqrt(), v)
}

pub fn to_fock(state: &GaussianMode, n: usize) -> Result<FockMatrix> {
    fock::displaced_thermal(state.mean, state.s, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn empirical(state: GaussianMode, draws: usize, seed: u64) -> (Complex64, f64) {
        let mut rng = crate::rng::stream(seed, 0);
        let xs: Vec<Complex64> = (0..draws).map(|_| heterodyne_sample(&state, &mut rng)).collect();
        let mean = xs.iter().sum::<Complex64>() / draws as f64;
        let var = xs.iter().map(|x| (x - mean).norm_sqr()).sum::<f64>() / (draws as f64 - 1.0);
        (mean, var)
    }

    #[test]
    fn heterodyne_variance_vacuum() {
        let (_, var) = empirical(GaussianMode::new(c(0.0, 0.0), 0.0).unwrap(), 1_000_000, 1);
        assert!((var - 1.0).abs() < 0.005, "{var}");
    }

    #[test]
    fn heterodyne_variance_thermal() {
        let (_, var) = empirical(GaussianMode::new(c(0.0, 0.0), 0.5).unwrap(), 1_000_000, 2);
        assert!((var - 2.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn heterodyne_moments_on_grid() {
        let draws = 1_000_000;
        for (i, &(z, s)) in [(c(1.0, 2.0), 0.3), (c(-0.5, 0.0), 0.0), (c(0.0, -3.0), 0.8)]
            .iter()
            .enumerate()
        {
            let (mean, var) = empirical(GaussianMode::new(z, s).unwrap(), draws, 10 + i as u64);
            let want = 1.0 / (1.0 - s);
            // per-component standard error of the mean
            let se = (want / 2.0 / draws as f64).sqrt();
            assert!((mean.re - z.re).abs() < 4.0 * se);
            assert!((mean.im - z.im).abs() < 4.0 * se);
            // the complex variance estimator has relative sd ≈ 1/√draws
            assert!((var - want).abs() < 4.0 * want / (draws as f64).sqrt());
        }
    }

    #[test]
    fn beamsplitter_examples() {
        let g = GaussianMode::new(c(2.0, 0.0), 0.5).unwrap();
        let (t, r) = beamsplitter_split(&g, 0.0).unwrap();
        assert_eq!(t, g);
        assert_eq!(r.mean, c(0.0, 0.0));

        let (t, r) = beamsplitter_split(&g, 0.6).unwrap();
        assert_abs_diff_eq!(t.mean.re, 1.6, epsilon = 1e-15);
        assert_abs_diff_eq!(r.mean.re, 1.2, epsilon = 1e-15);
        assert_eq!((t.s, r.s), (0.5, 0.5));

        let zero = GaussianMode::new(c(0.0, 0.0), 0.2).unwrap();
        let (t, r) = beamsplitter_split(&zero, 0.3).unwrap();
        assert_eq!((t, r), (zero, zero));

        assert!(beamsplitter_split(&g, 1.2).is_err());
        assert!(beamsplitter_split(&g, -0.1).is_err());
    }

    #[test]
    fn amplify_examples() {
        let r0 = 0.5;
        let s = s_from_bloch_length(r0);
        let g = GaussianMode::new(c(0.7, 0.1), s).unwrap();
        let out = amplify(&g, 1.0, r0).unwrap();
        assert_abs_diff_eq!(out.variance(), 1.0, epsilon = 1e-12);
        assert_eq!(out.mean, g.mean);

        let out = amplify(&g, 0.9, r0).unwrap();
        assert_abs_diff_eq!(out.variance(), 1.0 / 0.81 + (1.0 / 0.9 - 1.0) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.variance(), 1.290_123_456_790_123_4, epsilon = 1e-12);

        let shrunk = GaussianMode::new(c(0.9 * 2.0, 0.0), s).unwrap();
        assert_abs_diff_eq!(amplify(&shrunk, 0.9, r0).unwrap().mean.re, 2.0, epsilon = 1e-14);

        assert!(amplify(&g, 0.0, r0).is_err());
        assert!(amplify(&g, -0.5, r0).is_err());
    }

    #[test]
    fn variance_conversions() {
        assert_eq!(variance_to_s(0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(variance_to_s(1.5).unwrap(), 0.5, epsilon = 1e-15);
        assert!(matches!(variance_to_s(0.49), Err(Error::Domain(_))));
        let vac = to_fock(&GaussianMode::new(c(0.0, 0.0), 0.0).unwrap(), 6).unwrap();
        assert_eq!(vac.matrix()[(0, 0)], c(1.0, 0.0));
        assert_abs_diff_eq!(vac.trace().re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn thermal_variance_matches_bloch_length() {
        for i in 1..20 {
            let r0 = i as f64 / 20.0;
            let s = s_from_bloch_length(r0);
            let v = fock::thermal_state(s, 2000).unwrap().quadrature_variance();
            assert_abs_diff_eq!(v, s_to_variance(s), epsilon = 1e-10);
            assert_abs_diff_eq!(v, 1.0 / (2.0 * r0), epsilon = 1e-10);
            // unit-gain amplifier leaves the thermal variance untouched
            let g = GaussianMode::new(c(0.0, 0.0), s).unwrap();
            assert_abs_diff_eq!(amplify(&g, 1.0, r0).unwrap().variance(), v, epsilon = 1e-10);
        }
    }

    #[test]
    fn amplify_restores_beamsplitter_mean() {
        let g = GaussianMode::new(c(1.3, -0.4), 0.25).unwrap();
        let delta: f64 = 0.05;
        let (t_mode, _) = beamsplitter_split(&g, delta).unwrap();
        let t = (1.0 - delta * delta).sqrt();
        let back = amplify(&t_mode, t, bloch_length_from_s(0.25)).unwrap();
        assert!((back.mean - g.mean).norm() < 1e-14);
    }

    proptest! {
        #[test]
        fn variance_round_trip(s in 0.0f64..0.999) {
            let back = variance_to_s(s_to_variance(s)).unwrap();
            prop_assert!((back - s).abs() < 1e-12);
        }

        #[test]
        fn beamsplitter_conserves_mean_energy(re in -5.0f64..5.0, im in -5.0f64..5.0, delta in 0.0f64..=1.0) {
            let g = GaussianMode::new(c(re, im), 0.3).unwrap();
            let (t, r) = beamsplitter_split(&g, delta).unwrap();
            let lhs = t.mean.norm_sqr() + r.mean.norm_sqr();
            prop_assert!((lhs - g.mean.norm_sqr()).abs() < 1e-12 * (1.0 + g.mean.norm_sqr()));
        }
    }
}
