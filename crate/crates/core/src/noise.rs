//! Mollified complex white noise and the stationary Ornstein–Uhlenbeck
//! process `Z^ε = ∫_{−∞}^t P¹_{t−s} ξ^ε_s ds`, sampled exactly mode by mode.
//!
//! Randomness is counter based: every draw is addressed by
//! `(master seed, component, base-step index, wavenumber)`, so a realization
//! does not depend on evaluation order, thread count, grid size or the
//! mollifier. Two solvers stepping the same stream see the same noise, and a
//! run with step `dt` sees the aggregate of the increments of a run with
//! step `dt/m` when both share the same base step.

use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{heat_symbol, inverse, Field, GridSpec, SpectralField, C64};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MollifierProfile {
    /// `χ(x) = exp(1 − 1/(1 − |x|²))` on the unit ball.
    #[default]
    Smooth,
    /// `χ = 1_{|x| < 1}`.
    Sharp,
}

impl std::str::FromStr for MollifierProfile {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth" => Ok(Self::Smooth),
            "sharp" => Ok(Self::Sharp),
            other => Err(invalid(format!("unknown mollifier `{other}` (smooth|sharp)"))),
        }
    }
}

/// Spectral cutoff `χ^ε(k) = χ(εk)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mollifier {
    profile: MollifierProfile,
    eps: f64,
}

impl Mollifier {
    pub fn new(profile: MollifierProfile, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(invalid(format!("eps must be > 0, got {eps}")));
        }
        Ok(Self { profile, eps })
    }

    pub fn profile(&self) -> MollifierProfile {
        self.profile
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// The profile `χ(x)` at radius `|x| = r`.
    pub fn chi(&self, r: f64) -> f64 {
        if r >= 1.0 {
            return 0.0;
        }
        match self.profile {
            MollifierProfile::Sharp => 1.0,
            MollifierProfile::Smooth => (1.0 - 1.0 / (1.0 - r * r)).exp(),
        }
    }

    /// `χ^ε(k)` from `|k|²`.
    pub fn weight(&self, k2: f64) -> f64 {
        self.chi(self.eps * k2.sqrt())
    }

    /// Every `k ∈ Z³` with `χ^ε(k) ≠ 0`, in lexicographic order.
    pub fn support(&self) -> Vec<[i64; 3]> {
        let r = (1.0 / self.eps).ceil() as i64;
        let mut out = Vec::new();
        for a in -r..=r {
            for b in -r..=r {
                for c in -r..=r {
                    let k2 = (a * a + b * b + c * c) as f64;
                    if self.weight(k2) != 0.0 {
                        out.push([a, b, c]);
                    }
                }
            }
        }
        out
    }

    /// Whether the support fits inside the grid's Nyquist cube (`1/ε ≤ n/2`).
    pub fn resolvable(&self, grid: GridSpec) -> bool {
        1.0 / self.eps <= grid.n() as f64 / 2.0 + 1e-12
    }
}

/// Counter-based source of isotropic complex normals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseStream {
    master_seed: u64,
}

/// Component ids used to key draws.
pub mod component {
    pub const STATIONARY: u64 = 0;
    pub const INCREMENT: u64 = 1;
    /// Random states for diagnostics such as the identity check.
    pub const STATE: u64 = 2;
}

const WORD_OFFSET: i64 = 1 << 20;

impl NoiseStream {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn seed(&self) -> u64 {
        self.master_seed
    }

    fn rng(&self, component: u64, index: i64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&component.to_le_bytes());
        key[16..24].copy_from_slice(&index.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }

    /// One unit isotropic complex normal per wavenumber (`E|η|² = 1`,
    /// `E η² = 0`), addressed by `(component, index, k)`.
    pub fn normals(&self, component: u64, index: i64, modes: &[[i64; 3]]) -> Vec<C64> {
        let mut rng = self.rng(component, index);
        modes
            .iter()
            .map(|k| {
                let slot = |v: i64| (v + WORD_OFFSET) as u128;
                let pos = (slot(k[0]) << 42) | (slot(k[1]) << 21) | slot(k[2]);
                rng.set_word_pos(4 * pos);
                let a = rng.next_u64();
                let b = rng.next_u64();
                // u1 ∈ (0, 1], u2 ∈ [0, 1)
                let u1 = ((a >> 11) + 1) as f64 / (1u64 << 53) as f64;
                let u2 = (b >> 11) as f64 / (1u64 << 53) as f64;
                C64::from_polar((-u1.ln()).sqrt(), 2.0 * PI * u2)
            })
            .collect()
    }
}

/// Parameters of the OU dynamics `∂ₜZ = ((i+μ)Δ − 1)Z + ξ^ε`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OuParams {
    pub mu: f64,
}

impl OuParams {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(invalid(format!("mu must be > 0, got {mu}")));
        }
        Ok(Self { mu })
    }

    pub fn lambda(&self, k2: f64) -> C64 {
        heat_symbol(k2, self.mu)
    }

    /// `∫₀^∞ |h(s,k)|² ds = 1/(2(4π²μ|k|² + 1))`.
    pub fn stationary_variance_unmollified(&self, k2: f64) -> f64 {
        0.5 / self.lambda(k2).re
    }

    /// `E|η|²` of the exact OU increment over `dt` for unit `χ`.
    pub fn increment_variance_unmollified(&self, k2: f64, dt: f64) -> f64 {
        let re = self.lambda(k2).re;
        -(-2.0 * re * dt).exp_m1() / (2.0 * re)
    }
}

/// Exact OU stepping restricted to the mollifier support.
///
/// A step of length `dt = substeps · base_dt` aggregates `substeps`
/// base increments: `η = Σ_i e^{−λ(m−1−i)h} η_i`, which has exactly the
/// variance of a single increment over `dt`.
#[derive(Clone, Debug)]
pub struct OuStepper {
    grid: GridSpec,
    params: OuParams,
    moll: Mollifier,
    stream: NoiseStream,
    base_dt: f64,
    substeps: usize,
    modes: Vec<[i64; 3]>,
    flat: Vec<usize>,
    stationary_sd: Vec<f64>,
    base_sd: Vec<f64>,
    base_decay: Vec<C64>,
    step_decay: Vec<C64>,
}

impl OuStepper {
    pub fn new(
        grid: GridSpec,
        params: OuParams,
        moll: Mollifier,
        stream: NoiseStream,
        base_dt: f64,
        substeps: usize,
    ) -> Result<Self> {
        if !(base_dt > 0.0) {
            return Err(invalid(format!("time step must be > 0, got {base_dt}")));
        }
        if substeps == 0 {
            return Err(invalid("substeps must be >= 1"));
        }
        let half = grid.n() as i64 / 2;
        let modes: Vec<[i64; 3]> = moll
            .support()
            .into_iter()
            .filter(|k| k.iter().all(|&v| v >= -half && v < half))
            .collect();
        let dt = base_dt * substeps as f64;
        let mut flat = Vec::with_capacity(modes.len());
        let mut stationary_sd = Vec::with_capacity(modes.len());
        let mut base_sd = Vec::with_capacity(modes.len());
        let mut base_decay = Vec::with_capacity(modes.len());
        let mut step_decay = Vec::with_capacity(modes.len());
        for k in &modes {
            let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
            let chi = moll.weight(k2);
            let lam = params.lambda(k2);
            flat.push(grid.flat_index(*k));
            stationary_sd.push(chi * params.stationary_variance_unmollified(k2).sqrt());
            base_sd.push(chi * params.increment_variance_unmollified(k2, base_dt).sqrt());
            base_decay.push((-lam * base_dt).exp());
            step_decay.push((-lam * dt).exp());
        }
        Ok(Self {
            grid,
            params,
            moll,
            stream,
            base_dt,
            substeps,
            modes,
            flat,
            stationary_sd,
            base_sd,
            base_decay,
            step_decay,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn params(&self) -> OuParams {
        self.params
    }

    pub fn mollifier(&self) -> Mollifier {
        self.moll
    }

    pub fn dt(&self) -> f64 {
        self.base_dt * self.substeps as f64
    }

    /// Wavenumbers carrying noise.
    pub fn modes(&self) -> &[[i64; 3]] {
        &self.modes
    }

    /// A draw from the stationary law, keyed by `sample`.
    pub fn stationary(&self, sample: i64) -> SpectralField {
        let eta = self.stream.normals(component::STATIONARY, sample, &self.modes);
        let mut out = SpectralField::zeros(self.grid);
        let c = out.coeffs_mut();
        for ((&f, &sd), e) in self.flat.iter().zip(&self.stationary_sd).zip(eta) {
            c[f] = sd * e;
        }
        out
    }

    /// The Gaussian increment `η` of the OU step starting at step index `step`.
    pub fn increment(&self, step: i64) -> SpectralField {
        let m = self.substeps;
        let mut acc = vec![C64::new(0.0, 0.0); self.modes.len()];
        for i in 0..m {
            let eta = self
                .stream
                .normals(component::INCREMENT, step * m as i64 + i as i64, &self.modes);
            for ((a, e), (&sd, &d)) in acc
                .iter_mut()
                .zip(eta)
                .zip(self.base_sd.iter().zip(&self.base_decay))
            {
                *a = d * *a + sd * e;
            }
        }
        let mut out = SpectralField::zeros(self.grid);
        let c = out.coeffs_mut();
        for (&f, a) in self.flat.iter().zip(acc) {
            c[f] = a;
        }
        out
    }

    /// `ẑ ← e^{−λ dt}ẑ + η` on the support; modes outside stay zero.
    pub fn step(&self, z: &SpectralField, step: i64) -> SpectralField {
        self.advance_with(z, &self.increment(step))
    }

    /// `ẑ ← e^{−λ dt}ẑ + inc` on the support.
    pub fn advance_with(&self, z: &SpectralField, inc: &SpectralField) -> SpectralField {
        let mut out = SpectralField::zeros(self.grid);
        let (o, zc, ic) = (out.coeffs_mut(), z.coeffs(), inc.coeffs());
        for (&f, &d) in self.flat.iter().zip(&self.step_decay) {
            o[f] = d * zc[f] + ic[f];
        }
        out
    }
}

/// Stationary trajectory on `t = 0, dt, …, T` (inclusive, `round(T/dt)` steps).
pub fn sample_stationary_z(
    grid: GridSpec,
    params: OuParams,
    moll: Mollifier,
    t_end: f64,
    dt: f64,
    stream: NoiseStream,
) -> Result<Vec<Field>> {
    let stepper = OuStepper::new(grid, params, moll, stream, dt, 1)?;
    if !(t_end >= 0.0) {
        return Err(invalid(format!("horizon must be >= 0, got {t_end}")));
    }
    let steps = (t_end / dt).round() as i64;
    let mut z = stepper.stationary(0);
    let mut out = Vec::with_capacity(steps as usize + 1);
    out.push(inverse(&z));
    for j in 0..steps {
        z = stepper.step(&z, j);
        out.push(inverse(&z));
    }
    Ok(out)
}

/// One exact OU step keyed by `key`.
pub fn ou_exact_step(
    z: &SpectralField,
    params: OuParams,
    moll: Mollifier,
    dt: f64,
    stream: NoiseStream,
    key: i64,
) -> Result<SpectralField> {
    Ok(OuStepper::new(z.grid(), params, moll, stream, dt, 1)?.step(z, key))
}

/// The increment `η` consumed by [`ou_exact_step`] with the same arguments.
pub fn sample_forcing_increment(
    grid: GridSpec,
    params: OuParams,
    moll: Mollifier,
    dt: f64,
    stream: NoiseStream,
    key: i64,
) -> Result<SpectralField> {
    Ok(OuStepper::new(grid, params, moll, stream, dt, 1)?.increment(key))
}

/// Space-time mollified variant: increments are smoothed in time by the AR(1)
/// filter `η̃_j = a η̃_{j−1} + √(1−a²) η_j`, `a = e^{−dt/ε²}`, which keeps
/// the per-step variance and gives a correlation time of order `ε²`.
#[derive(Clone, Debug)]
pub struct TimeFilteredIncrements {
    a: f64,
    state: Option<SpectralField>,
}

impl TimeFilteredIncrements {
    pub fn new(eps: f64, dt: f64) -> Self {
        Self {
            a: (-dt / (eps * eps)).exp(),
            state: None,
        }
    }

    pub fn filter(&mut self, eta: SpectralField) -> SpectralField {
        let out = match self.state.take() {
            None => eta,
            Some(prev) => {
                let b = (1.0 - self.a * self.a).sqrt();
                let mut s = prev;
                for (x, &e) in s.coeffs_mut().iter_mut().zip(eta.coeffs()) {
                    *x = self.a * *x + b * e;
                }
                s
            }
        };
        self.state = Some(out.clone());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n).unwrap()
    }

    #[test]
    fn mollifier_support() {
        for profile in [MollifierProfile::Smooth, MollifierProfile::Sharp] {
            let m = Mollifier::new(profile, 0.25).unwrap();
            assert_eq!(m.chi(0.0), 1.0);
            assert_eq!(m.weight(16.0), 0.0);
            assert!(m.weight(15.9) > 0.0);
            assert!(m.support().iter().all(|k| k.iter().map(|v| v * v).sum::<i64>() < 16));
        }
        assert_eq!(Mollifier::new(MollifierProfile::Sharp, 0.5).unwrap().support().len(), 27);
        assert!(Mollifier::new(MollifierProfile::Sharp, 0.0).is_err());
        assert!(Mollifier::new(MollifierProfile::Sharp, 1.0 / 16.0).unwrap().resolvable(grid(32)));
        assert!(!Mollifier::new(MollifierProfile::Sharp, 1.0 / 32.0).unwrap().resolvable(grid(32)));
    }

    #[test]
    fn draws_are_addressed_not_sequenced() {
        let s = NoiseStream::new(42);
        let modes = [[0, 0, 0], [1, -2, 3], [-5, 0, 1]];
        let all = s.normals(1, 7, &modes);
        let rev: Vec<[i64; 3]> = modes.iter().rev().copied().collect();
        let back = s.normals(1, 7, &rev);
        for (a, b) in all.iter().zip(back.iter().rev()) {
            assert_eq!(a, b);
        }
        assert_ne!(s.normals(1, 8, &modes), all);
        assert_ne!(NoiseStream::new(43).normals(1, 7, &modes), all);
        assert_ne!(s.normals(0, 7, &modes), all);
    }

    #[test]
    fn unmollified_modes_stay_zero() {
        let g = grid(8);
        let moll = Mollifier::new(MollifierProfile::Sharp, 0.5).unwrap();
        let p = OuParams::new(1.0).unwrap();
        let st = OuStepper::new(g, p, moll, NoiseStream::new(1), 0.01, 1).unwrap();
        let mut z = st.stationary(0);
        for j in 0..3 {
            z = st.step(&z, j);
        }
        for (i, c) in z.coeffs().iter().enumerate() {
            if g.norm_sq(i) >= 4.0 {
                assert_eq!(*c, C64::new(0.0, 0.0));
            }
        }
        assert!(OuStepper::new(g, p, moll, NoiseStream::new(1), 0.0, 1).is_err());
    }

    #[test]
    fn long_step_variance_is_stationary() {
        let p = OuParams::new(1.0).unwrap();
        for k2 in [0.0, 1.0, 3.0] {
            let v = p.increment_variance_unmollified(k2, 50.0);
            let s = p.stationary_variance_unmollified(k2);
            assert!((v - s).abs() <= 1e-12 * s);
        }
    }

    #[test]
    fn aggregated_increment_matches_substeps() {
        // one step of 2h with substeps=2 equals two explicit h-steps with the same base keys
        let g = grid(8);
        let moll = Mollifier::new(MollifierProfile::Smooth, 0.4).unwrap();
        let p = OuParams::new(0.8).unwrap();
        let s = NoiseStream::new(9);
        let fine = OuStepper::new(g, p, moll, s, 0.01, 1).unwrap();
        let coarse = OuStepper::new(g, p, moll, s, 0.01, 2).unwrap();
        let z0 = fine.stationary(3);
        let a = coarse.step(&z0, 5);
        let b = fine.step(&fine.step(&z0, 10), 11);
        for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn step_is_propagation_plus_increment() {
        let g = grid(8);
        let moll = Mollifier::new(MollifierProfile::Sharp, 0.3).unwrap();
        let p = OuParams::new(1.3).unwrap();
        let s = NoiseStream::new(5);
        let dt = 0.02;
        let z = OuStepper::new(g, p, moll, s, dt, 1).unwrap().stationary(0);
        let stepped = ou_exact_step(&z, p, moll, dt, s, 4).unwrap();
        let inc = sample_forcing_increment(g, p, moll, dt, s, 4).unwrap();
        for (i, (&a, &e)) in stepped.coeffs().iter().zip(inc.coeffs()).enumerate() {
            let lam = p.lambda(g.norm_sq(i));
            let chi = moll.weight(g.norm_sq(i));
            let want = if chi == 0.0 { C64::new(0.0, 0.0) } else { (-lam * dt).exp() * z.coeffs()[i] + e };
            assert!((a - want).norm() < 1e-15);
        }
    }

    #[test]
    fn time_filter_keeps_variance_scale() {
        let g = grid(8);
        let mut f = TimeFilteredIncrements::new(0.5, 0.01);
        let mut e = SpectralField::zeros(g);
        e.coeffs_mut()[0] = C64::new(1.0, 0.0);
        let first = f.filter(e.clone());
        assert_eq!(first, e);
        let second = f.filter(e.clone());
        let a = (-0.01f64 / 0.25).exp();
        assert!((second.coeffs()[0].re - (a + (1.0 - a * a).sqrt())).abs() < 1e-15);
    }
}
