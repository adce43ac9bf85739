//! Renormalization constants as exact lattice sums over the mollifier
//! support, the combined constant, divergence-rate fits and a Monte-Carlo
//! check of `c1 = E|Z^ε(t,x)|²`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::C64;
use crate::noise::{component, Mollifier, NoiseStream, OuParams};

/// Pair budget that admits `ε = 2^{-4}`.
pub const DEFAULT_PAIR_BUDGET: u64 = 400_000_000;

const FOUR_PI2: f64 = 4.0 * PI * PI;
const OUTER_CHUNK: usize = 64;

/// Neumaier-compensated complex accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    re: (f64, f64),
    im: (f64, f64),
}

fn neumaier(acc: &mut (f64, f64), x: f64) {
    let t = acc.0 + x;
    if acc.0.abs() >= x.abs() {
        acc.1 += (acc.0 - t) + x;
    } else {
        acc.1 += (x - t) + acc.0;
    }
    acc.0 = t;
}

impl CompensatedSum {
    pub fn add(&mut self, z: C64) {
        neumaier(&mut self.re, z.re);
        neumaier(&mut self.im, z.im);
    }

    pub fn value(&self) -> C64 {
        C64::new(self.re.0 + self.re.1, self.im.0 + self.im.1)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CConvention {
    /// `C = 2(c1 − ν̄·conj(c21) − 2ν·c22)`
    #[default]
    Statement,
    /// `C = c1 − ν̄·conj(c21) + 2ν·c22`
    ProofLine,
}

impl std::str::FromStr for CConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "statement" => Ok(Self::Statement),
            "proof-line" | "proof_line" => Ok(Self::ProofLine),
            other => Err(invalid(format!("unknown convention `{other}` (statement|proof-line)"))),
        }
    }
}

impl std::fmt::Display for CConvention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Statement => "statement",
            Self::ProofLine => "proof-line",
        })
    }
}

struct Mode {
    k: [i64; 3],
    k2: f64,
    /// `χ^ε(k)² / (2(4π²μ|k|²+1))`
    half_weight: f64,
}

fn modes(moll: &Mollifier, mu: f64, literal: bool) -> Vec<Mode> {
    let mu_den = if literal { 1.0 } else { mu };
    moll.support()
        .into_iter()
        .map(|k| {
            let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
            let chi = moll.weight(k2);
            Mode {
                k,
                k2,
                half_weight: chi * chi / (2.0 * (FOUR_PI2 * mu_den * k2 + 1.0)),
            }
        })
        .collect()
}

/// `c1 = Σ_k χ^ε(k)² / (2(4π²μ|k|²+1))`.
pub fn c1_sum(moll: &Mollifier, mu: f64) -> C64 {
    let mut acc = CompensatedSum::default();
    for m in modes(moll, mu, false) {
        acc.add(C64::new(m.half_weight, 0.0));
    }
    acc.value()
}

/// The same sum with the diffusion factor dropped from the denominator.
pub fn c1_sum_literal(moll: &Mollifier) -> C64 {
    let mut acc = CompensatedSum::default();
    for m in modes(moll, 1.0, true) {
        acc.add(C64::new(m.half_weight, 0.0));
    }
    acc.value()
}

/// Number of pairs in the double sum: `|{k ∈ Z³ : |k| < 1/ε}|²`.
fn pair_count(eps: f64) -> u64 {
    let r = 1.0 / eps;
    let ri = r.ceil() as i64;
    let mut n: u64 = 0;
    for a in -ri..=ri {
        for b in -ri..=ri {
            let rest = r * r - (a * a + b * b) as f64;
            if rest > 0.0 {
                // integers c with c² < rest
                let mut c = rest.sqrt().floor() as i64;
                if (c * c) as f64 >= rest {
                    c -= 1;
                }
                n += (2 * c + 1) as u64;
            }
        }
    }
    n.saturating_mul(n)
}

/// Smallest `ε` whose pair sum fits `budget`, to three significant digits.
pub fn min_feasible_eps(budget: u64) -> f64 {
    // pair count grows like ε⁻⁶; bisect on log ε
    let (mut lo, mut hi) = ((2f64).powi(-10).ln(), 0.0f64);
    if pair_count(lo.exp()) <= budget {
        return lo.exp();
    }
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if pair_count(mid.exp()) <= budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi.exp()
}

/// `(c21, c22)` as exact double sums over the mollifier support.
pub fn c2_sums(moll: &Mollifier, mu: f64, pair_budget: u64) -> Result<(C64, C64)> {
    let pairs = pair_count(moll.eps());
    if pairs > pair_budget {
        return Err(Error::Resource(format!(
            "c2 sum at eps = {} needs {pairs} pairs, budget is {pair_budget}; smallest feasible eps is {:.4}",
            moll.eps(),
            min_feasible_eps(pair_budget)
        )));
    }
    let ms = modes(moll, mu, false);
    // weight = χ²/(4(4π²μ|k₁|²+1)(4π²μ|k₂|²+1)) = 2·hw₁·2·hw₂ / 4 = hw₁·hw₂
    let partials: Vec<(C64, C64)> = ms
        .par_chunks(OUTER_CHUNK)
        .map(|chunk| {
            let mut s21 = CompensatedSum::default();
            let mut s22 = CompensatedSum::default();
            for a in chunk {
                for b in &ms {
                    let w = a.half_weight * b.half_weight;
                    let dot = (a.k[0] * b.k[0] + a.k[1] * b.k[1] + a.k[2] * b.k[2]) as f64;
                    let sum2 = a.k2 + b.k2 + 2.0 * dot;
                    let diff2 = a.k2 + b.k2 - 2.0 * dot;
                    let d21 = C64::new(
                        FOUR_PI2 * mu * (sum2 + a.k2 + b.k2) + 3.0,
                        FOUR_PI2 * (sum2 - a.k2 - b.k2),
                    );
                    let d22 = C64::new(
                        FOUR_PI2 * mu * (diff2 + a.k2 + b.k2) + 3.0,
                        FOUR_PI2 * (diff2 - a.k2 + b.k2),
                    );
                    s21.add(w / d21);
                    s22.add(w / d22);
                }
            }
            (s21.value(), s22.value())
        })
        .collect();
    let mut c21 = CompensatedSum::default();
    let mut c22 = CompensatedSum::default();
    for (a, b) in partials {
        c21.add(a);
        c22.add(b);
    }
    Ok((c21.value(), c22.value()))
}

pub fn combined_c(c1: C64, c21: C64, c22: C64, nu: C64, convention: CConvention) -> C64 {
    match convention {
        CConvention::Statement => 2.0 * (c1 - nu.conj() * c21.conj() - 2.0 * nu * c22),
        CConvention::ProofLine => c1 - nu.conj() * c21.conj() + 2.0 * nu * c22,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenormConstants {
    pub eps: f64,
    pub mu: f64,
    pub nu: C64,
    pub c1: C64,
    pub c21: C64,
    pub c22: C64,
    pub c_combined: C64,
    pub convention: CConvention,
    pub literal_c1: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct ConstantsOptions {
    pub convention: CConvention,
    pub literal_c1: bool,
    pub pair_budget: u64,
}

impl Default for ConstantsOptions {
    fn default() -> Self {
        Self {
            convention: CConvention::Statement,
            literal_c1: false,
            pair_budget: DEFAULT_PAIR_BUDGET,
        }
    }
}

impl RenormConstants {
    pub fn compute(moll: &Mollifier, mu: f64, nu: C64, opts: ConstantsOptions) -> Result<Self> {
        OuParams::new(mu)?;
        let c1 = if opts.literal_c1 { c1_sum_literal(moll) } else { c1_sum(moll, mu) };
        let (c21, c22) = c2_sums(moll, mu, opts.pair_budget)?;
        Ok(Self::from_parts(moll.eps(), mu, nu, c1, c21, c22, opts))
    }

    pub fn from_parts(
        eps: f64,
        mu: f64,
        nu: C64,
        c1: C64,
        c21: C64,
        c22: C64,
        opts: ConstantsOptions,
    ) -> Self {
        Self {
            eps,
            mu,
            nu,
            c1,
            c21,
            c22,
            c_combined: combined_c(c1, c21, c22, nu, opts.convention),
            convention: opts.convention,
            literal_c1: opts.literal_c1,
        }
    }

    /// All constants zero: products are then plain (un-renormalized).
    pub fn zero(eps: f64, mu: f64, nu: C64) -> Self {
        let z = C64::new(0.0, 0.0);
        Self::from_parts(eps, mu, nu, z, z, z, ConstantsOptions::default())
    }

    /// Recompute the combined constant under another convention.
    pub fn with_convention(mut self, convention: CConvention) -> Self {
        self.convention = convention;
        self.c_combined = combined_c(self.c1, self.c21, self.c22, self.nu, convention);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitModel {
    /// `log|v| = slope·log ε + b`
    Power,
    /// `|v| = slope·log(1/ε) + b`
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

pub fn divergence_fit(eps: &[f64], values: &[C64], model: FitModel) -> Result<FitResult> {
    if eps.len() != values.len() {
        return Err(invalid("eps and value lists differ in length"));
    }
    if eps.len() < 4 {
        return Err(invalid(format!("need at least 4 eps points, got {}", eps.len())));
    }
    if eps.windows(2).any(|w| !(w[1] < w[0])) || eps.iter().any(|&e| !(e > 0.0)) {
        return Err(invalid("eps list must be positive and strictly decreasing"));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = match model {
        FitModel::Power => eps.iter().zip(values).map(|(e, v)| (e.ln(), v.norm().ln())).unzip(),
        FitModel::Log => eps.iter().zip(values).map(|(e, v)| (-e.ln(), v.norm())).unzip(),
    };
    let (slope, intercept, r_squared) = linear_fit(&x, &y);
    Ok(FitResult {
        model,
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub mc_mean: f64,
    pub std_error: f64,
    pub lattice_value: f64,
    pub z_score: f64,
}

/// Average of `|Z^ε(t, 0)|²` over independent stationary draws.
pub fn mc_validate_c1(moll: &Mollifier, mu: f64, samples: usize, seed: u64) -> Result<McReport> {
    if samples < 100 {
        return Err(invalid(format!("need at least 100 samples, got {samples}")));
    }
    let params = OuParams::new(mu)?;
    let support = moll.support();
    let sd: Vec<f64> = support
        .iter()
        .map(|k| {
            let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
            moll.weight(k2) * params.stationary_variance_unmollified(k2).sqrt()
        })
        .collect();
    let stream = NoiseStream::new(seed);
    let draws: Vec<f64> = (0..samples as i64)
        .into_par_iter()
        .map(|s| {
            let eta = stream.normals(component::STATIONARY, s, &support);
            let z: C64 = sd.iter().zip(eta).map(|(&a, e)| a * e).sum();
            z.norm_sqr()
        })
        .collect();
    let n = samples as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let lattice = c1_sum(moll, mu).re;
    Ok(McReport {
        mc_mean: mean,
        std_error: se,
        lattice_value: lattice,
        z_score: (mean - lattice) / se,
    })
}
