//! Periodic N³ grid on the unit torus, the discrete Fourier pair, Fourier
//! multipliers and the exponential propagators built on the heat symbol
//! `λ_k = 4π²(i+μ)|k|² + 1`.
//!
//! Physical values are stored row-major over `(i₁, i₂, i₃)` with node
//! `x = i/n`. Spectral coefficients share the same flat layout: entry
//! `(i₁, i₂, i₃)` holds wavenumber `k_j = i_j` for `i_j < n/2` and
//! `k_j = i_j − n` otherwise, so every `k ∈ {−n/2, …, n/2−1}³` appears once.
//!
//! Forward convention: `coeff(k) = n⁻³ Σ_x f(x) e^{−2πik·x}`; the inverse is
//! the plain sum `f(x) = Σ_k coeff(k) e^{2πik·x}`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Result};

pub type C64 = Complex64;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridSpec {
    n: usize,
}

impl GridSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(invalid(format!(
                "grid size must be a power of two >= 8, got {n}"
            )));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of grid nodes, `n³`.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn signed(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    pub fn wavenumber(&self, flat: usize) -> [i64; 3] {
        let n = self.n;
        [
            self.signed(flat / (n * n)),
            self.signed((flat / n) % n),
            self.signed(flat % n),
        ]
    }

    /// Flat index of wavenumber `k`, reduced modulo `n` componentwise.
    pub fn flat_index(&self, k: [i64; 3]) -> usize {
        let n = self.n as i64;
        let r = |v: i64| v.rem_euclid(n) as usize;
        (r(k[0]) * self.n + r(k[1])) * self.n + r(k[2])
    }

    pub fn norm_sq(&self, flat: usize) -> f64 {
        let k = self.wavenumber(flat);
        (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64
    }

    /// `|k|²` for every flat index, in layout order.
    pub fn norm_sq_table(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.norm_sq(i)).collect()
    }

    /// Physical coordinates of node `flat`.
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let n = self.n;
        let h = 1.0 / n as f64;
        [
            (flat / (n * n)) as f64 * h,
            ((flat / n) % n) as f64 * h,
            (flat % n) as f64 * h,
        ]
    }

    /// Largest `|k|` represented on the grid, `n√3/2`.
    pub fn max_wavenumber(&self) -> f64 {
        self.n as f64 * 3f64.sqrt() / 2.0
    }
}

/// Complex field sampled at the grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<C64>,
}

/// Fourier coefficients of a field, one per wavenumber.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    coeffs: Vec<C64>,
}

impl Field {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![C64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn constant(grid: GridSpec, c: C64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "field has {} values, grid {} needs {}",
                values.len(),
                grid.n(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> C64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self { grid, values }
    }

    /// The Fourier mode `e_k(x) = e^{2πik·x}`.
    pub fn mode(grid: GridSpec, k: [i64; 3]) -> Self {
        Self::from_fn(grid, |x| {
            let phase = 2.0 * PI * (k[0] as f64 * x[0] + k[1] as f64 * x[1] + k[2] as f64 * x[2]);
            C64::from_polar(1.0, phase)
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    /// Maximum node modulus.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Root mean square over nodes, i.e. the L² norm on the unit torus.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        (s / self.values.len() as f64).sqrt()
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(C64, C64) -> C64) -> Self {
        self.assert_same_grid(other);
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += a·x`
    pub fn axpy(&mut self, a: C64, x: &Field) {
        self.assert_same_grid(x);
        for (s, &v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(invalid(format!(
                "grid mismatch: {} vs {}",
                self.grid.n(),
                other.grid.n()
            )));
        }
        Ok(())
    }

    fn assert_same_grid(&self, other: &Field) {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
    }
}

impl SpectralField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            coeffs: vec![C64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_coeffs(grid: GridSpec, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(invalid(format!(
                "spectrum has {} coefficients, grid {} needs {}",
                coeffs.len(),
                grid.n(),
                grid.len()
            )));
        }
        Ok(Self { grid, coeffs })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<C64> {
        self.coeffs
    }

    pub fn coeff(&self, k: [i64; 3]) -> C64 {
        self.coeffs[self.grid.flat_index(k)]
    }

    /// Multiply coefficient-wise by a real table laid out like the spectrum.
    pub fn scaled_by(&self, weights: &[f64]) -> Self {
        debug_assert_eq!(weights.len(), self.coeffs.len());
        Self {
            grid: self.grid,
            coeffs: self
                .coeffs
                .iter()
                .zip(weights)
                .map(|(&c, &w)| c * w)
                .collect(),
        }
    }

    /// Zero every mode with some `|k_j| > n/3` (2/3 rule).
    pub fn truncate_two_thirds(&mut self) {
        let cut = self.grid.n() as i64 / 3;
        for (i, c) in self.coeffs.iter_mut().enumerate() {
            let k = self.grid.wavenumber(i);
            if k.iter().any(|&kj| kj.abs() > cut) {
                *c = C64::new(0.0, 0.0);
            }
        }
    }

    pub fn add_scaled(&mut self, a: C64, other: &SpectralField) {
        assert_eq!(self.grid, other.grid, "spectra live on different grids");
        for (s, &v) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *s += a * v;
        }
    }
}

/// A Fourier multiplier `φ(D)`: a pure symbol evaluated at integer wavenumbers.
pub struct Multiplier {
    label: String,
    symbol: Box<dyn Fn([i64; 3]) -> C64 + Send + Sync>,
}

impl Multiplier {
    pub fn new(label: impl Into<String>, symbol: impl Fn([i64; 3]) -> C64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            symbol: Box::new(symbol),
        }
    }

    pub fn identity() -> Self {
        Self::new("identity", |_| C64::new(1.0, 0.0))
    }

    /// Projection onto the zero mode.
    pub fn mean() -> Self {
        Self::new("mean", |k| {
            if k == [0, 0, 0] {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// `e^{−λ_k t}`
    pub fn heat(mu: f64, t: f64) -> Self {
        Self::new(format!("heat(mu={mu}, t={t})"), move |k| {
            let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
            (-heat_symbol(k2, mu) * t).exp()
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, k: [i64; 3]) -> C64 {
        (self.symbol)(k)
    }
}

impl std::fmt::Debug for Multiplier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Multiplier").field("label", &self.label).finish()
    }
}

pub fn apply_multiplier(spec: &SpectralField, m: &Multiplier) -> SpectralField {
    let grid = spec.grid;
    let coeffs = spec
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, &c)| m.eval(grid.wavenumber(i)) * c)
        .collect();
    SpectralField { grid, coeffs }
}

/// `λ_k = 4π²(i+μ)|k|² + 1`.
pub fn heat_symbol(k2: f64, mu: f64) -> C64 {
    4.0 * PI * PI * k2 * (I + mu) + 1.0
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

/// Unnormalized in-place 3D FFT over a row-major `n³` buffer.
fn fft3(data: &mut [C64], n: usize, inverse: bool) {
    let p = plans(n);
    let fft = if inverse { &p.inverse } else { &p.forward };
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    // last axis is contiguous
    fft.process_with_scratch(data, &mut scratch);

    // middle axis: transpose each plane, transform rows, transpose back
    for plane in data.chunks_exact_mut(n * n) {
        transpose_square(plane, n);
        fft.process_with_scratch(plane, &mut scratch);
        transpose_square(plane, n);
    }

    // first axis: gather lanes into a contiguous buffer
    let mut buf = vec![C64::new(0.0, 0.0); data.len()];
    for i0 in 0..n {
        for j in 0..n * n {
            buf[j * n + i0] = data[i0 * n * n + j];
        }
    }
    fft.process_with_scratch(&mut buf, &mut scratch);
    for i0 in 0..n {
        for j in 0..n * n {
            data[i0 * n * n + j] = buf[j * n + i0];
        }
    }
}

fn transpose_square(m: &mut [C64], n: usize) {
    for r in 0..n {
        for c in r + 1..n {
            m.swap(r * n + c, c * n + r);
        }
    }
}

pub fn transform(field: &Field) -> SpectralField {
    let n = field.grid.n();
    let mut coeffs = field.values.clone();
    fft3(&mut coeffs, n, false);
    let scale = 1.0 / field.grid.len() as f64;
    for c in coeffs.iter_mut() {
        *c *= scale;
    }
    SpectralField {
        grid: field.grid,
        coeffs,
    }
}

pub fn inverse(spec: &SpectralField) -> Field {
    let mut values = spec.coeffs.clone();
    fft3(&mut values, spec.grid.n(), true);
    Field {
        grid: spec.grid,
        values,
    }
}

/// `P¹_t f`: every mode multiplied by `e^{−λ_k t}`.
pub fn heat_propagate(field: &Field, t: f64, mu: f64) -> Result<Field> {
    if !(t >= 0.0) {
        return Err(invalid(format!("propagation time must be >= 0, got {t}")));
    }
    if !(mu > 0.0) {
        return Err(invalid(format!("mu must be > 0, got {mu}")));
    }
    if t == 0.0 {
        return Ok(field.clone());
    }
    let prop = Propagator::new(field.grid, mu, t)?;
    Ok(inverse(&prop.propagate(&transform(field))))
}

/// `(1 − e^{−z})/z`, stable near zero.
pub fn phi1(z: C64) -> C64 {
    if z.norm() < 0.5 {
        series(z, 1)
    } else {
        (1.0 - (-z).exp()) / z
    }
}

/// `(e^{−z} − 1 + z)/z²`, stable near zero.
pub fn phi2(z: C64) -> C64 {
    if z.norm() < 0.5 {
        series(z, 2)
    } else {
        ((-z).exp() - 1.0 + z) / (z * z)
    }
}

// Σ_j (−z)^j / (j+shift)!
fn series(z: C64, shift: u32) -> C64 {
    let mut fact: f64 = (1..=shift).map(f64::from).product();
    let mut term = C64::new(1.0 / fact, 0.0);
    let mut acc = term;
    for j in 1..24u32 {
        fact = f64::from(j + shift);
        term = term * (-z) / fact;
        acc += term;
    }
    acc
}

/// Per-mode exponential-integrator coefficients for a fixed `(grid, μ, dt)`:
/// `e^{−λ dt}`, `dt·φ₁(λ dt) = λ⁻¹(1 − e^{−λ dt})` and `dt·φ₂(λ dt)`.
#[derive(Clone, Debug)]
pub struct Propagator {
    grid: GridSpec,
    mu: f64,
    dt: f64,
    decay: Vec<C64>,
    phi1: Vec<C64>,
    phi2: Vec<C64>,
}

impl Propagator {
    pub fn new(grid: GridSpec, mu: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid(format!("time step must be > 0, got {dt}")));
        }
        if !(mu > 0.0) {
            return Err(invalid(format!("mu must be > 0, got {mu}")));
        }
        let n = grid.len();
        let mut decay = Vec::with_capacity(n);
        let mut p1 = Vec::with_capacity(n);
        let mut p2 = Vec::with_capacity(n);
        for i in 0..n {
            let z = heat_symbol(grid.norm_sq(i), mu) * dt;
            decay.push((-z).exp());
            p1.push(phi1(z) * dt);
            p2.push(phi2(z) * dt);
        }
        Ok(Self {
            grid,
            mu,
            dt,
            decay,
            phi1: p1,
            phi2: p2,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn decay(&self) -> &[C64] {
        &self.decay
    }

    /// `e^{−λ dt}·ŝ`
    pub fn propagate(&self, state: &SpectralField) -> SpectralField {
        let coeffs = state
            .coeffs
            .iter()
            .zip(&self.decay)
            .map(|(&c, &e)| e * c)
            .collect();
        SpectralField {
            grid: self.grid,
            coeffs,
        }
    }

    /// ETD1: `e^{−λ dt}ŝ + λ⁻¹(1 − e^{−λ dt}) f̂`, exact for constant forcing.
    pub fn mild_step(&self, state: &SpectralField, forcing: &SpectralField) -> SpectralField {
        let coeffs = state
            .coeffs
            .iter()
            .zip(&forcing.coeffs)
            .zip(self.decay.iter().zip(&self.phi1))
            .map(|((&s, &f), (&e, &p))| e * s + p * f)
            .collect();
        SpectralField {
            grid: self.grid,
            coeffs,
        }
    }

    /// Second stage of the Cox–Matthews ETD2RK scheme: adds
    /// `dt·φ₂(λ dt)·(f̂_pred − f̂_start)` to the ETD1 predictor.
    pub fn etd2_correct(
        &self,
        predictor: &SpectralField,
        forcing_start: &SpectralField,
        forcing_pred: &SpectralField,
    ) -> SpectralField {
        let coeffs = predictor
            .coeffs
            .iter()
            .zip(forcing_start.coeffs.iter().zip(&forcing_pred.coeffs))
            .zip(&self.phi2)
            .map(|((&a, (&f0, &f1)), &p)| a + p * (f1 - f0))
            .collect();
        SpectralField {
            grid: self.grid,
            coeffs,
        }
    }
}

/// One ETD1 step of `∂ₜs = ((i+μ)Δ − 1)s + f`.
pub fn mild_step(
    state: &SpectralField,
    forcing: &SpectralField,
    dt: f64,
    mu: f64,
) -> Result<SpectralField> {
    if state.grid != forcing.grid {
        return Err(invalid("state and forcing live on different grids"));
    }
    Ok(Propagator::new(state.grid, mu, dt)?.mild_step(state, forcing))
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a - b)
    }
}

/// Pointwise product.
impl Mul for &Field {
    type Output = Field;
    fn mul(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl Mul<C64> for &Field {
    type Output = Field;
    fn mul(self, rhs: C64) -> Field {
        self.map(|a| a * rhs)
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.map(|a| a * rhs)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.map(|a| -a)
    }
}

impl AddAssign<&Field> for Field {
    fn add_assign(&mut self, rhs: &Field) {
        self.axpy(C64::new(1.0, 0.0), rhs);
    }
}

impl SubAssign<&Field> for Field {
    fn sub_assign(&mut self, rhs: &Field) {
        self.axpy(C64::new(-1.0, 0.0), rhs);
    }
}

/// Relative sup-norm distance `‖a − b‖∞ / ‖b‖∞` (absolute when `b = 0`).
pub fn rel_sup_diff(a: &Field, b: &Field) -> f64 {
    let d = (a - b).sup_norm();
    let s = b.sup_norm();
    if s > 0.0 {
        d / s
    } else {
        d
    }
}
