//! Dyadic partition of unity, Littlewood–Paley blocks and grid estimators of
//! Besov–Hölder norms `‖f‖_{C^α} = sup_m 2^{mα}‖Δ_m f‖_∞`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{inverse, transform, Field, GridSpec, SpectralField};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionProfile {
    /// C^∞ radial bumps.
    #[default]
    Smooth,
    /// Indicator shells `1_{2^m ≤ |k| < 2^{m+1}}`, `1_{|k| < 1}` for the low block.
    Sharp,
}

impl std::str::FromStr for PartitionProfile {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth" => Ok(Self::Smooth),
            "sharp" => Ok(Self::Sharp),
            other => Err(invalid(format!("unknown profile `{other}` (smooth|sharp)"))),
        }
    }
}

/// `e^{−1/x}` for `x > 0`, zero otherwise.
fn bump_tail(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Smooth radial cutoff: 1 on `[0, 1]`, 0 on `[4/3, ∞)`.
pub fn low_cutoff(r: f64) -> f64 {
    let s = ((r - 1.0) * 3.0).clamp(0.0, 1.0);
    let a = bump_tail(1.0 - s);
    let b = bump_tail(s);
    a / (a + b)
}

/// Profile value `ρ_m(r)` before grid renormalization.
///
/// Smooth: `ρ_{−1} = θ`, `ρ_m(r) = θ(r/2^{m+1}) − θ(r/2^m)` with `θ` the low
/// cutoff, so `supp ρ_0 ⊂ [1, 8/3]` and the partial sums telescope.
pub fn profile_value(profile: PartitionProfile, m: i32, r: f64) -> f64 {
    match profile {
        PartitionProfile::Smooth => {
            if m < 0 {
                low_cutoff(r)
            } else {
                let s = f64::powi(2.0, m);
                (low_cutoff(r / (2.0 * s)) - low_cutoff(r / s)).max(0.0)
            }
        }
        PartitionProfile::Sharp => {
            if m < 0 {
                f64::from(u8::from(r < 1.0))
            } else {
                let s = f64::powi(2.0, m);
                f64::from(u8::from(r >= s && r < 2.0 * s))
            }
        }
    }
}

/// The partition evaluated on a grid, renormalized so that the weights sum to
/// one at every wavenumber.
#[derive(Clone, Debug)]
pub struct DyadicPartition {
    grid: GridSpec,
    profile: PartitionProfile,
    max_block: i32,
    // weights[m + 1][flat]
    weights: Vec<Vec<f64>>,
}

impl DyadicPartition {
    pub fn build(grid: GridSpec, profile: PartitionProfile) -> Self {
        let radii: Vec<f64> = grid.norm_sq_table().into_iter().map(f64::sqrt).collect();
        // generous upper bound on the block count; trimmed below
        let bound = grid.max_wavenumber().log2().ceil() as i32 + 1;
        let mut weights: Vec<Vec<f64>> = (-1..=bound)
            .map(|m| radii.iter().map(|&r| profile_value(profile, m, r)).collect())
            .collect();
        for i in 0..grid.len() {
            let total: f64 = weights.iter().map(|w| w[i]).sum();
            assert!(total > 0.0, "wavenumber {:?} not covered", grid.wavenumber(i));
            for w in weights.iter_mut() {
                w[i] /= total;
            }
        }
        while weights.len() > 1 && weights.last().unwrap().iter().all(|&w| w == 0.0) {
            weights.pop();
        }
        let max_block = weights.len() as i32 - 2;
        Self {
            grid,
            profile,
            max_block,
            weights,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn profile(&self) -> PartitionProfile {
        self.profile
    }

    /// Largest `m` whose weight is nonzero somewhere on the grid.
    pub fn max_block(&self) -> i32 {
        self.max_block
    }

    pub fn block_indices(&self) -> std::ops::RangeInclusive<i32> {
        -1..=self.max_block
    }

    pub fn num_blocks(&self) -> usize {
        self.weights.len()
    }

    pub fn check_block(&self, m: i32) -> Result<()> {
        if m < -1 || m > self.max_block {
            return Err(invalid(format!(
                "block index {m} outside -1..={}",
                self.max_block
            )));
        }
        Ok(())
    }

    /// `ρ_m(k)` for every flat index.
    pub fn weights(&self, m: i32) -> &[f64] {
        &self.weights[(m + 1) as usize]
    }

    pub fn weight(&self, m: i32, k: [i64; 3]) -> f64 {
        if m < -1 || m > self.max_block {
            return 0.0;
        }
        self.weights(m)[self.grid.flat_index(k)]
    }

    /// `ψ∘(k, l) = Σ_{|i−j|≤1} ρ_i(k) ρ_j(l)`.
    pub fn psi_resonant(&self, k: [i64; 3], l: [i64; 3]) -> f64 {
        let fk = self.grid.flat_index(k);
        let fl = self.grid.flat_index(l);
        self.psi_resonant_flat(fk, fl)
    }

    pub(crate) fn psi_resonant_flat(&self, fk: usize, fl: usize) -> f64 {
        let nb = self.weights.len();
        let mut acc = 0.0;
        for i in 0..nb {
            let wi = self.weights[i][fk];
            if wi == 0.0 {
                continue;
            }
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(nb - 1);
            for j in lo..=hi {
                acc += wi * self.weights[j][fl];
            }
        }
        acc
    }
}

/// Littlewood–Paley blocks `Δ_{−1} f, …, Δ_{max} f` in physical space.
#[derive(Clone, Debug)]
pub struct BlockDecomposition {
    blocks: Vec<Field>,
}

impl BlockDecomposition {
    pub fn new(f: &Field, p: &DyadicPartition) -> Self {
        Self::from_spectrum(&transform(f), p)
    }

    pub fn from_spectrum(s: &SpectralField, p: &DyadicPartition) -> Self {
        assert_eq!(s.grid(), p.grid(), "partition built for another grid");
        let blocks = p
            .block_indices()
            .map(|m| inverse(&s.scaled_by(p.weights(m))))
            .collect();
        Self { blocks }
    }

    pub fn grid(&self) -> GridSpec {
        self.blocks[0].grid()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, m: i32) -> &Field {
        &self.blocks[(m + 1) as usize]
    }

    pub fn blocks(&self) -> &[Field] {
        &self.blocks
    }

    /// `Σ_m Δ_m f`
    pub fn sum(&self) -> Field {
        let mut acc = Field::zeros(self.grid());
        for b in &self.blocks {
            acc += b;
        }
        acc
    }

    /// Block decomposition of the complex conjugate (the partition is radial,
    /// so `Δ_m f̄ = conj(Δ_m f)`).
    pub fn conj(&self) -> Self {
        Self {
            blocks: self.blocks.iter().map(Field::conj).collect(),
        }
    }

    /// `(m, ‖Δ_m f‖_∞)` for every block.
    pub fn sup_norms(&self) -> Vec<(i32, f64)> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (i as i32 - 1, b.sup_norm()))
            .collect()
    }

    pub fn besov_norm(&self, alpha: f64) -> f64 {
        weighted_max(&self.sup_norms(), alpha)
    }
}

fn weighted_max(norms: &[(i32, f64)], alpha: f64) -> f64 {
    norms
        .iter()
        .map(|&(m, s)| f64::powf(2.0, f64::from(m) * alpha) * s)
        .fold(0.0, f64::max)
}

pub fn lp_block(f: &Field, m: i32, p: &DyadicPartition) -> Result<Field> {
    p.check_block(m)?;
    f.same_grid(&Field::zeros(p.grid()))?;
    Ok(inverse(&transform(f).scaled_by(p.weights(m))))
}

/// Grid estimator of `‖f‖_{C^α}`.
pub fn besov_norm(f: &Field, alpha: f64, p: &DyadicPartition) -> f64 {
    BlockDecomposition::new(f, p).besov_norm(alpha)
}

/// `(m, 2^{mα}‖Δ_m f‖_∞)` per block.
pub fn besov_profile(f: &Field, alpha: f64, p: &DyadicPartition) -> Vec<(i32, f64)> {
    BlockDecomposition::new(f, p)
        .sup_norms()
        .into_iter()
        .map(|(m, s)| (m, f64::powf(2.0, f64::from(m) * alpha) * s))
        .collect()
}

/// Discrete maxima of the space-time norms used by the fixed-point theory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpacetimeReport {
    /// `sup_t ‖u_t‖_{C^α}`
    pub sup_norm: f64,
    /// `sup_{s<t} ‖u_t − u_s‖_{C^{α−2δ}} / |t−s|^δ`
    pub holder_seminorm: f64,
    /// `sup_t t^η ‖u_t‖_{C^α}`
    pub weighted_sup: f64,
    /// `sup_{s<t} s^η ‖u_t − u_s‖_{C^{α−2δ}} / |t−s|^δ`
    pub weighted_holder: f64,
}

pub fn spacetime_norms(
    times: &[f64],
    series: &[Field],
    eta: f64,
    alpha: f64,
    delta: f64,
    p: &DyadicPartition,
) -> Result<SpacetimeReport> {
    if series.is_empty() || times.len() != series.len() {
        return Err(invalid("time series is empty or times/fields length mismatch"));
    }
    if !(eta >= 0.0) || !(delta > 0.0 && delta <= 1.0) {
        return Err(invalid(format!(
            "need eta >= 0 and delta in (0,1], got eta={eta}, delta={delta}"
        )));
    }
    if times.iter().any(|&t| !(t > 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("times must be positive and strictly increasing"));
    }
    let decomps: Vec<BlockDecomposition> =
        series.iter().map(|f| BlockDecomposition::new(f, p)).collect();

    let mut report = SpacetimeReport {
        sup_norm: 0.0,
        holder_seminorm: 0.0,
        weighted_sup: 0.0,
        weighted_holder: 0.0,
    };
    for (t, d) in times.iter().zip(&decomps) {
        let norm = d.besov_norm(alpha);
        report.sup_norm = report.sup_norm.max(norm);
        report.weighted_sup = report.weighted_sup.max(t.powf(eta) * norm);
    }
    let low = alpha - 2.0 * delta;
    for (j, (t, dt_)) in times.iter().zip(&decomps).enumerate() {
        for (s, ds) in times.iter().zip(&decomps).take(j) {
            let norms: Vec<(i32, f64)> = dt_
                .blocks()
                .iter()
                .zip(ds.blocks())
                .enumerate()
                .map(|(i, (a, b))| (i as i32 - 1, (a - b).sup_norm()))
                .collect();
            let ratio = weighted_max(&norms, low) / (t - s).powf(delta);
            report.holder_seminorm = report.holder_seminorm.max(ratio);
            report.weighted_holder = report.weighted_holder.max(s.powf(eta) * ratio);
        }
    }
    Ok(report)
}
