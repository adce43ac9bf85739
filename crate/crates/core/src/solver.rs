//! The paracontrolled system for `(v, w)`, its exponential time stepper, the
//! direct renormalized-equation solver and the ε-comparison harness.
//!
//! Notation: `u₂ = v + w`, `f = −νW + u₂`, and the solution is
//! `u = Z − νW + v + w = Z + f`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::besov::{BlockDecomposition, DyadicPartition, PartitionProfile};
use crate::drivers::{DriverGenerator, DriverParams, DriverSlice, DriverSource, NoiseProcess};
use crate::error::{invalid, Error, Result};
use crate::grid::{inverse, transform, Field, GridSpec, Propagator, SpectralField, C64};
use crate::noise::{Mollifier, MollifierProfile, NoiseStream};
use crate::paraproduct::{commutator_from_blocks, para_lt, resonant};
use crate::renorm::{combined_c, CConvention, ConstantsOptions, RenormConstants};

/// Sup-norm above which a run is declared blown up.
pub const BLOW_UP_THRESHOLD: f64 = 1e8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Exponential Euler.
    #[default]
    Etd1,
    /// Cox–Matthews ETD2RK.
    Etd2,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "etd1" => Ok(Self::Etd1),
            "etd2" => Ok(Self::Etd2),
            other => Err(invalid(format!("unknown scheme `{other}` (etd1|etd2)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub mu: f64,
    pub nu: C64,
    pub dt: f64,
    pub t_end: f64,
    pub kappa: f64,
    pub kappa_prime: f64,
    pub scheme: Scheme,
    pub partition: PartitionProfile,
    /// Record the state every this many steps (the final time is always kept).
    pub output_every: usize,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Err(Error::Validation { field, reason });
        if !(self.mu > 0.0) {
            return bad("mu", format!("must be > 0, got {}", self.mu));
        }
        if !(self.dt > 0.0) {
            return bad("dt", format!("must be > 0, got {}", self.dt));
        }
        if !(self.t_end > 0.0) {
            return bad("t_end", format!("must be > 0, got {}", self.t_end));
        }
        if !(self.kappa > 0.0 && self.kappa < self.kappa_prime) {
            return bad("kappa", format!("need 0 < kappa < kappa_prime, got {}", self.kappa));
        }
        if !(self.kappa_prime < 1.0 / 18.0) {
            return bad("kappa_prime", format!("must be < 1/18, got {}", self.kappa_prime));
        }
        if self.output_every == 0 {
            return bad("output_every", "must be >= 1".into());
        }
        if !self.nu.re.is_finite() || !self.nu.im.is_finite() {
            return bad("nu", "must be finite".into());
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolutionState {
    pub time: f64,
    pub v: Field,
    pub w: Field,
    /// Mild accumulation of `F`; advanced with the same update as `v`.
    pub vhat: Field,
}

impl SolutionState {
    pub fn new(time: f64, v: Field, w: Field) -> Result<Self> {
        v.same_grid(&w)?;
        if !(time >= 0.0) {
            return Err(invalid(format!("time must be >= 0, got {time}")));
        }
        Ok(Self {
            time,
            vhat: v.clone(),
            v,
            w,
        })
    }

    pub fn u2(&self) -> Field {
        &self.v + &self.w
    }
}

/// `Σ cᵢ·fᵢ`
fn lin(grid: GridSpec, terms: &[(C64, &Field)]) -> Field {
    let mut acc = Field::zeros(grid);
    for (c, f) in terms {
        acc.axpy(*c, f);
    }
    acc
}

fn nonres(a: &BlockDecomposition, b: &BlockDecomposition) -> Field {
    &para_lt(a, b) + &para_lt(b, a)
}

#[derive(Clone, Debug)]
pub struct RenormalizedProducts {
    /// `WZ`
    pub wz: Field,
    /// `WZ̄`
    pub wzb: Field,
    /// `W²Z̄`
    pub w2zb: Field,
    /// `WW̄Z`
    pub wwbz: Field,
}

/// A driver slice with the block decompositions and the state-independent
/// parts of `G` precomputed.
#[derive(Clone, Debug)]
pub struct PreparedSlice {
    pub slice: DriverSlice,
    nu: C64,
    bab: BlockDecomposition,
    baa: BlockDecomposition,
    biab: BlockDecomposition,
    biaa: BlockDecomposition,
    pub products: RenormalizedProducts,
    /// `G₄`, which involves drivers only.
    pub g4: Field,
}

impl PreparedSlice {
    pub fn new(slice: DriverSlice, nu: C64, p: &DyadicPartition) -> Self {
        let s = &slice;
        let bz = BlockDecomposition::new(&s.z, p);
        let bzb = bz.conj();
        let bw = BlockDecomposition::new(&s.w, p);
        let bwb = bw.conj();
        let bab = BlockDecomposition::new(&s.ab, p);
        let baa = BlockDecomposition::new(&s.aa, p);
        let biab = BlockDecomposition::new(&s.iab, p);
        let biaa = BlockDecomposition::new(&s.iaa, p);
        let wb = s.w.conj();

        let mut wz = nonres(&bw, &bz);
        wz += &s.iaab_o_a;
        let mut wzb = nonres(&bw, &bzb);
        wzb += &s.iaab_o_b;

        let w_lt_zb = BlockDecomposition::new(&para_lt(&bw, &bzb), p);
        let mut w2zb = &s.w * &s.iaab_o_b;
        w2zb = &w2zb * 2.0;
        w2zb += &commutator_from_blocks(&s.w, &bw, &bzb, &bw, p);
        w2zb += &nonres(&w_lt_zb, &bw);
        w2zb += &(&s.w * &para_lt(&bzb, &bw));

        let wb_lt_z = BlockDecomposition::new(&para_lt(&bwb, &bz), p);
        let mut wwbz = &wb * &s.iaab_o_a;
        wwbz += &(&s.w * &s.iaab_o_b.conj());
        wwbz += &commutator_from_blocks(&wb, &bwb, &bz, &bw, p);
        wwbz += &nonres(&wb_lt_z, &bw);
        wwbz += &(&s.w * &para_lt(&bz, &bwb));

        let products = RenormalizedProducts { wz, wzb, w2zb, wwbz };

        let (n, nb) = (nu, nu.conj());
        let grid = s.z.grid();
        let w2wb = s.w.zip_map(&wb, |a, b| a * a * b);
        let r1 = commutator_from_blocks(&s.w, &bw, &biab, &bab, p);
        let r2 = commutator_from_blocks(&wb, &bwb, &biab.conj(), &baa, p);
        let r3 = commutator_from_blocks(&wb, &bwb, &biaa, &bab, p);
        let r4 = commutator_from_blocks(&s.w, &bw, &biaa.conj(), &baa, p);
        let inner = lin(
            grid,
            &[
                (-n * n * nb, &w2wb),
                (n * n, &products.w2zb),
                (2.0 * n * nb, &products.wwbz),
                (4.0 * n * n, &(&s.w * &s.iab_o_ab)),
                (4.0 * n * n, &r1),
                (2.0 * nb * nb, &(&wb * &s.iab_o_bb.conj())),
                (2.0 * nb * nb, &r2),
                (2.0 * n * nb, &(&wb * &s.iaa_o_ab)),
                (2.0 * n * nb, &r3),
                (n * nb, &(&s.w * &s.iaa_o_bb.conj())),
                (n * nb, &r4),
                (-2.0 * n, &s.iaab_o_ab),
                (-2.0 * n, &para_lt(&bab, &bw)),
                (-nb, &s.iaab_o_bb.conj()),
                (-nb, &para_lt(&baa, &bwb)),
            ],
        );
        let z_nw = lin(grid, &[(C64::new(1.0, 0.0), &s.z), (-n, &s.w)]);
        let g4 = lin(grid, &[(-n, &inner), (n + 1.0, &z_nw)]);

        Self {
            nu,
            bab,
            baa,
            biab,
            biaa,
            products,
            g4,
            slice,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.slice.grid()
    }

    pub fn nu(&self) -> C64 {
        self.nu
    }
}

/// `WZ`, `WZ̄`, `W²Z̄`, `WW̄Z` from their paraproduct reconstructions.
pub fn renormalized_products(slice: &DriverSlice, nu: C64, p: &DyadicPartition) -> RenormalizedProducts {
    PreparedSlice::new(slice.clone(), nu, p).products
}

/// State-dependent fields shared by `F`, `com` and `G`.
struct StateTerms {
    u2: Field,
    bf: BlockDecomposition,
    bu2: BlockDecomposition,
}

impl StateTerms {
    fn new(state: &SolutionState, ps: &PreparedSlice, p: &DyadicPartition) -> Self {
        let u2 = state.u2();
        let mut f = u2.clone();
        f.axpy(-ps.nu, &ps.slice.w);
        Self {
            bf: BlockDecomposition::new(&f, p),
            bu2: BlockDecomposition::new(&u2, p),
            u2,
        }
    }
}

fn f_from_terms(ps: &PreparedSlice, st: &StateTerms) -> Field {
    let n = ps.nu;
    let grid = ps.grid();
    lin(
        grid,
        &[
            (-2.0 * n, &para_lt(&st.bf, &ps.bab)),
            (-n, &para_lt(&st.bf.conj(), &ps.baa)),
        ],
    )
}

fn com_from_terms(state: &SolutionState, ps: &PreparedSlice, st: &StateTerms) -> Field {
    let n = ps.nu;
    let mut out = state.vhat.clone();
    out.axpy(2.0 * n, &para_lt(&st.bf, &ps.biab));
    out.axpy(n, &para_lt(&st.bf.conj(), &ps.biaa));
    out
}

/// `F = −ν{2f≺X^AB + f̄≺X^AA}`.
pub fn eval_f(state: &SolutionState, ps: &PreparedSlice, p: &DyadicPartition) -> Result<Field> {
    state.v.same_grid(&ps.slice.z)?;
    Ok(f_from_terms(ps, &StateTerms::new(state, ps, p)))
}

/// `com = v̂ + ν{2f≺X^IAB + f̄≺X^IAA}`.
pub fn eval_com(state: &SolutionState, ps: &PreparedSlice, p: &DyadicPartition) -> Result<Field> {
    state.v.same_grid(&ps.slice.z)?;
    Ok(com_from_terms(state, ps, &StateTerms::new(state, ps, p)))
}

fn g_terms_from(
    state: &SolutionState,
    ps: &PreparedSlice,
    st: &StateTerms,
    p: &DyadicPartition,
) -> [Field; 8] {
    let s = &ps.slice;
    let grid = ps.grid();
    let (n, nb) = (ps.nu, ps.nu.conj());
    let one = C64::new(1.0, 0.0);
    let u2 = &st.u2;
    let u2b = u2.conj();
    let bu2b = st.bu2.conj();
    let wb = s.w.conj();
    let zb = s.z.conj();
    let pr = &ps.products;

    let g1 = u2.zip_map(&u2b, |a, b| -n * a * a * b);

    let zb_w = lin(grid, &[(one, &zb), (-nb, &wb)]);
    let z_w = lin(grid, &[(one, &s.z), (-n, &s.w)]);
    let u2sq = u2 * u2;
    let u2u2b = u2 * &u2b;
    let g2 = lin(grid, &[(-n, &(&u2sq * &zb_w)), (-2.0 * n, &(&u2u2b * &z_w))]);

    let a3 = lin(
        grid,
        &[
            (2.0 * n * nb, &(&s.w * &wb)),
            (-2.0 * n, &pr.wzb),
            (-2.0 * nb, &pr.wzb.conj()),
            (-4.0 * n, &s.iab_o_ab),
            (-nb, &s.iaa_o_bb.conj()),
        ],
    );
    let b3 = lin(
        grid,
        &[
            (n * n, &(&s.w * &s.w)),
            (-2.0 * n, &pr.wz),
            (-2.0 * nb, &s.iab_o_bb.conj()),
            (-2.0 * n, &s.iaa_o_ab),
        ],
    );
    let g3 = lin(grid, &[(-n, &(u2 * &a3)), (-n, &(&u2b * &b3)), (n + 1.0, u2)]);

    let biab_c = ps.biab.conj();
    let biaa_c = ps.biaa.conj();
    let g5 = lin(
        grid,
        &[
            (4.0 * n * n, &commutator_from_blocks(u2, &st.bu2, &ps.biab, &ps.bab, p)),
            (2.0 * n * n, &commutator_from_blocks(&u2b, &bu2b, &ps.biaa, &ps.bab, p)),
            (2.0 * n * nb, &commutator_from_blocks(&u2b, &bu2b, &biab_c, &ps.baa, p)),
            (n * nb, &commutator_from_blocks(u2, &st.bu2, &biaa_c, &ps.baa, p)),
        ],
    );

    let com = com_from_terms(state, ps, st);
    let bcom = BlockDecomposition::new(&com, p);
    let g6 = lin(
        grid,
        &[
            (-2.0 * n, &resonant(&bcom, &ps.bab)),
            (-n, &resonant(&bcom.conj(), &ps.baa)),
        ],
    );

    let bwc = BlockDecomposition::new(&state.w, p);
    let g7 = lin(
        grid,
        &[
            (-2.0 * n, &resonant(&bwc, &ps.bab)),
            (-n, &resonant(&bwc.conj(), &ps.baa)),
        ],
    );

    let g8 = lin(
        grid,
        &[
            (-2.0 * n, &para_lt(&ps.bab, &st.bu2)),
            (-n, &para_lt(&ps.baa, &bu2b)),
        ],
    );

    [g1, g2, g3, ps.g4.clone(), g5, g6, g7, g8]
}

/// `G₁, …, G₈` individually.
pub fn g_terms(state: &SolutionState, ps: &PreparedSlice, p: &DyadicPartition) -> Result<[Field; 8]> {
    state.v.same_grid(&ps.slice.z)?;
    let st = StateTerms::new(state, ps, p);
    Ok(g_terms_from(state, ps, &st, p))
}

/// `G = G₁ + … + G₈`.
pub fn assemble_g(state: &SolutionState, ps: &PreparedSlice, p: &DyadicPartition) -> Result<Field> {
    let terms = g_terms(state, ps, p)?;
    let mut g = Field::zeros(ps.grid());
    for t in &terms {
        g += t;
    }
    Ok(g)
}

/// `(F, G)` sharing one set of state decompositions.
fn forcings(state: &SolutionState, ps: &PreparedSlice, p: &DyadicPartition) -> (Field, Field) {
    let st = StateTerms::new(state, ps, p);
    let f = f_from_terms(ps, &st);
    let mut g = Field::zeros(ps.grid());
    for t in &g_terms_from(state, ps, &st, p) {
        g += t;
    }
    (f, g)
}

#[derive(Clone, Debug)]
pub struct IdentityReport {
    pub lhs: Field,
    pub rhs: Field,
    /// `‖lhs − rhs‖∞ / ‖rhs‖∞` (absolute when `rhs = 0`).
    pub rel_error: f64,
    /// The same comparison against `ν(1 + C − |u|²)u + u + νX^AAB` for each
    /// convention of the combined constant `C`.
    pub equation_rel_error: Vec<(CConvention, f64)>,
}

fn rel_err(lhs: &Field, rhs: &Field) -> f64 {
    let d = (lhs - rhs).sup_norm();
    let r = rhs.sup_norm();
    if r == 0.0 {
        d
    } else {
        d / r
    }
}

/// Compares `F + G` with the expanded cubic nonlinearity, both assembled
/// independently with pointwise products only.
pub fn identity_check(
    state: &SolutionState,
    ps: &PreparedSlice,
    consts: &RenormConstants,
    p: &DyadicPartition,
) -> Result<IdentityReport> {
    state.v.same_grid(&ps.slice.z)?;
    let (f, g) = forcings(state, ps, p);
    let lhs = &f + &g;

    let s = &ps.slice;
    let grid = ps.grid();
    let (n, nb) = (ps.nu, ps.nu.conj());
    let one = C64::new(1.0, 0.0);
    let mut small_f = state.u2();
    small_f.axpy(-n, &s.w);
    let fb = small_f.conj();
    let u = &s.z + &small_f;
    let zb_fb = &s.z.conj() + &fb;
    let c2 = 2.0 * (nb * consts.c21.conj() + 2.0 * n * consts.c22);
    let inner = lin(
        grid,
        &[
            (one, &(&(&small_f * &small_f) * &zb_fb)),
            (2.0 * one, &(&(&small_f * &fb) * &s.z)),
            (2.0 * one, &(&small_f * &s.ab)),
            (one, &(&fb * &s.aa)),
            (c2, &u),
        ],
    );
    let rhs = lin(grid, &[(-n, &inner), (n + 1.0, &u)]);

    let equation_rel_error = [CConvention::Statement, CConvention::ProofLine]
        .into_iter()
        .map(|conv| {
            let c = combined_c(consts.c1, consts.c21, consts.c22, n, conv);
            let eq = direct_nonlinearity(&u, n, c);
            let mut eq = eq;
            eq.axpy(n, &s.aab);
            (conv, rel_err(&lhs, &eq))
        })
        .collect();

    Ok(IdentityReport {
        rel_error: rel_err(&lhs, &rhs),
        lhs,
        rhs,
        equation_rel_error,
    })
}

/// `ν(1 + C − |u|²)u + u`: the reaction term of the renormalized equation
/// written against the `−1` in the linear symbol.
pub fn direct_nonlinearity(u: &Field, nu: C64, c: C64) -> Field {
    u.map(|x| nu * (1.0 + c - x.norm_sqr()) * x + x)
}

fn check_blow_up(time: f64, fields: &[&Field]) -> Result<()> {
    for f in fields {
        let sup = f.sup_norm();
        if !f.is_finite() || !(sup <= BLOW_UP_THRESHOLD) {
            return Err(Error::BlowUp {
                time,
                sup_norm: sup,
            });
        }
    }
    Ok(())
}

/// One step of the mild system. With ETD2 the predictor is re-evaluated
/// against the slice at the end of the step.
pub fn step_system(
    state: &SolutionState,
    start: &PreparedSlice,
    end: Option<&PreparedSlice>,
    prop: &Propagator,
    scheme: Scheme,
    p: &DyadicPartition,
) -> Result<SolutionState> {
    let (f0, g0) = forcings(state, start, p);
    let (fs, gs) = (transform(&f0), transform(&g0));
    let v1 = prop.mild_step(&transform(&state.v), &fs);
    let vh1 = prop.mild_step(&transform(&state.vhat), &fs);
    let w1 = prop.mild_step(&transform(&state.w), &gs);
    let time = state.time + prop.dt();
    let (v, vh, w) = match scheme {
        Scheme::Etd1 => (v1, vh1, w1),
        Scheme::Etd2 => {
            let end = end.ok_or_else(|| invalid("ETD2 needs the driver slice at the end of the step"))?;
            let pred = SolutionState {
                time,
                v: inverse(&v1),
                w: inverse(&w1),
                vhat: inverse(&vh1),
            };
            check_blow_up(time, &[&pred.v, &pred.w])?;
            let (f1, g1) = forcings(&pred, end, p);
            let (f1s, g1s) = (transform(&f1), transform(&g1));
            (
                prop.etd2_correct(&v1, &fs, &f1s),
                prop.etd2_correct(&vh1, &fs, &f1s),
                prop.etd2_correct(&w1, &gs, &g1s),
            )
        }
    };
    let next = SolutionState {
        time,
        v: inverse(&v),
        w: inverse(&w),
        vhat: inverse(&vh),
    };
    check_blow_up(time, &[&next.v, &next.w])?;
    Ok(next)
}

/// Output of a run, recorded every `output_every` steps and at the end.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub u: Vec<Field>,
    pub v: Vec<Field>,
    pub w: Vec<Field>,
}

impl Trajectory {
    fn push(&mut self, time: f64, u: Field, v: Option<Field>, w: Option<Field>) {
        self.times.push(time);
        self.u.push(u);
        if let Some(v) = v {
            self.v.push(v);
        }
        if let Some(w) = w {
            self.w.push(w);
        }
    }

    pub fn final_u(&self) -> &Field {
        self.u.last().expect("trajectory has at least the initial state")
    }

    /// `(t, ‖u‖∞, ‖u‖_{L²})` per recorded time.
    pub fn diagnostics(&self) -> Vec<(f64, f64, f64)> {
        self.times
            .iter()
            .zip(&self.u)
            .map(|(&t, u)| (t, u.sup_norm(), u.l2_norm()))
            .collect()
    }
}

fn reconstruct(ps: &PreparedSlice, state: &SolutionState) -> Field {
    let mut u = &ps.slice.z + &state.v;
    u += &state.w;
    u.axpy(-ps.nu, &ps.slice.w);
    u
}

/// Runs the `(v, w)` system with `v₀ = u₀ − Z₀ + νW₀`, `w₀ = 0`, recording
/// `u = Z − νW + v + w`.
pub fn solve_paracontrolled(
    cfg: &SolverConfig,
    source: &mut dyn DriverSource,
    u0: &Field,
) -> Result<Trajectory> {
    cfg.validate()?;
    let grid = source.grid();
    u0.same_grid(&Field::zeros(grid))?;
    let p = DyadicPartition::build(grid, cfg.partition);
    let prop = Propagator::new(grid, cfg.mu, cfg.dt)?;
    let steps = cfg.steps();
    let mut cur = PreparedSlice::new(source.next_slice()?, cfg.nu, &p);
    let mut v0 = u0 - &cur.slice.z;
    v0.axpy(cfg.nu, &cur.slice.w);
    let mut state = SolutionState::new(0.0, v0, Field::zeros(grid))?;
    let mut traj = Trajectory::default();
    traj.push(0.0, reconstruct(&cur, &state), Some(state.v.clone()), Some(state.w.clone()));
    for j in 1..=steps {
        let next = PreparedSlice::new(source.next_slice()?, cfg.nu, &p);
        state = step_system(&state, &cur, Some(&next), &prop, cfg.scheme, &p)?;
        state.time = j as f64 * cfg.dt;
        cur = next;
        if j % cfg.output_every == 0 || j == steps {
            traj.push(state.time, reconstruct(&cur, &state), Some(state.v.clone()), Some(state.w.clone()));
        }
    }
    Ok(traj)
}

/// Exponential integrator for `∂ₜu = (i+μ)Δu + ν(1−|u|²)u + νC u + ξ^ε`
/// driven by the same noise increments as the paracontrolled pipeline.
pub fn solve_direct(
    cfg: &SolverConfig,
    params: &DriverParams,
    moll: Mollifier,
    stream: NoiseStream,
    c: C64,
    u0: &Field,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_time_grid(cfg, params)?;
    u0.same_grid(&Field::zeros(params.grid))?;
    let prop = Propagator::new(params.grid, cfg.mu, cfg.dt)?;
    let mut noise = NoiseProcess::new(params, moll, stream)?;
    if params.time_filter {
        // keep the filter state aligned with the driver pipeline
        for j in -params.burn_in_steps()?..0 {
            noise.increment(j);
        }
    }
    let steps = cfg.steps();
    let mut u = transform(u0);
    let mut traj = Trajectory::default();
    traj.push(0.0, u0.clone(), None, None);
    for j in 0..steps {
        let time = (j + 1) as f64 * cfg.dt;
        let up = inverse(&u);
        let n0 = transform(&direct_nonlinearity(&up, cfg.nu, c));
        let mut pred = prop.mild_step(&u, &n0);
        let eta = noise.increment(j as i64);
        pred.add_scaled(C64::new(1.0, 0.0), &eta);
        u = match cfg.scheme {
            Scheme::Etd1 => pred,
            Scheme::Etd2 => {
                let pp = inverse(&pred);
                check_blow_up(time, &[&pp])?;
                let n1 = transform(&direct_nonlinearity(&pp, cfg.nu, c));
                prop.etd2_correct(&pred, &n0, &n1)
            }
        };
        let phys = inverse(&u);
        check_blow_up(time, &[&phys])?;
        if (j + 1) % cfg.output_every == 0 || j + 1 == steps {
            traj.push(time, phys, None, None);
        }
    }
    Ok(traj)
}

fn check_time_grid(cfg: &SolverConfig, params: &DriverParams) -> Result<()> {
    if (params.dt() - cfg.dt).abs() > 1e-12 * cfg.dt {
        return Err(invalid(format!(
            "solver step {} differs from the noise step {}",
            cfg.dt,
            params.dt()
        )));
    }
    if (params.mu - cfg.mu).abs() > 0.0 {
        return Err(invalid("solver and noise use different mu"));
    }
    Ok(())
}

/// Everything needed to run either solver from `(ε, seed, u₀)`.
#[derive(Clone, Copy, Debug)]
pub struct PipelineSpec {
    pub solver: SolverConfig,
    pub grid: GridSpec,
    /// Noise base step; the solver step is `substeps · base_dt`.
    pub base_dt: f64,
    pub substeps: usize,
    pub burn_in: f64,
    pub chi: MollifierProfile,
    pub time_filter: bool,
    pub constants: ConstantsOptions,
}

impl PipelineSpec {
    pub fn driver_params(&self) -> DriverParams {
        DriverParams {
            grid: self.grid,
            mu: self.solver.mu,
            base_dt: self.base_dt,
            substeps: self.substeps,
            burn_in: self.burn_in,
            partition: self.solver.partition,
            time_filter: self.time_filter,
        }
    }

    pub fn mollifier(&self, eps: f64) -> Result<Mollifier> {
        Mollifier::new(self.chi, eps)
    }

    pub fn constants(&self, eps: f64) -> Result<RenormConstants> {
        RenormConstants::compute(&self.mollifier(eps)?, self.solver.mu, self.solver.nu, self.constants)
    }

    /// The same spec with the step refined by `factor` on the same base step.
    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.solver.dt = self.base_dt * substeps as f64;
        self.substeps = substeps;
        self
    }

    pub fn generator(&self, eps: f64, seed: u64, consts: RenormConstants) -> Result<DriverGenerator> {
        DriverGenerator::new(self.driver_params(), self.mollifier(eps)?, NoiseStream::new(seed), consts)
    }

    pub fn run_para(&self, eps: f64, seed: u64, consts: RenormConstants, u0: &Field) -> Result<Trajectory> {
        check_time_grid(&self.solver, &self.driver_params())?;
        let mut gen = self.generator(eps, seed, consts)?;
        solve_paracontrolled(&self.solver, &mut gen, u0)
    }

    pub fn run_direct(&self, eps: f64, seed: u64, consts: &RenormConstants, u0: &Field) -> Result<Trajectory> {
        solve_direct(
            &self.solver,
            &self.driver_params(),
            self.mollifier(eps)?,
            NoiseStream::new(seed),
            consts.c_combined,
            u0,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub seed: u64,
    pub eps_a: f64,
    pub eps_b: f64,
    /// `sup_t ‖u^a − u^b‖_{C^{−2/3+κ′}}`
    pub besov_diff: f64,
    /// `sup_{t,x} |u^a − u^b|`
    pub sup_diff: f64,
}

/// `sup_t ‖a_t − b_t‖_{C^α}` and `sup_{t,x}|a − b|` over recorded times.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory, alpha: f64, p: &DyadicPartition) -> (f64, f64) {
    let mut besov = 0.0f64;
    let mut sup = 0.0f64;
    for (x, y) in a.u.iter().zip(&b.u) {
        let d = x - y;
        besov = besov.max(BlockDecomposition::new(&d, p).besov_norm(alpha));
        sup = sup.max(d.sup_norm());
    }
    (besov, sup)
}

/// Runs the paracontrolled pipeline for each `ε` and seed with shared
/// per-mode draws and reports distances between consecutive `ε`.
pub fn epsilon_convergence_study(
    spec: &PipelineSpec,
    eps_list: &[f64],
    seeds: &[u64],
    u0: &Field,
) -> Result<Vec<StudyRow>> {
    for &e in eps_list {
        let m = spec.mollifier(e)?;
        if !m.resolvable(spec.grid) {
            return Err(invalid(format!(
                "eps = {e} is not resolved on N = {} (need 1/eps <= N/2)",
                spec.grid.n()
            )));
        }
    }
    let consts: Vec<RenormConstants> = eps_list.iter().map(|&e| spec.constants(e)).collect::<Result<_>>()?;
    let p = DyadicPartition::build(spec.grid, spec.solver.partition);
    let alpha = -2.0 / 3.0 + spec.solver.kappa_prime;
    let per_seed: Vec<Vec<StudyRow>> = seeds
        .par_iter()
        .map(|&seed| {
            let runs: Vec<Trajectory> = eps_list
                .iter()
                .zip(&consts)
                .map(|(&e, c)| spec.run_para(e, seed, *c, u0))
                .collect::<Result<_>>()?;
            Ok(runs
                .windows(2)
                .zip(eps_list.windows(2))
                .map(|(r, e)| {
                    let (besov_diff, sup_diff) = trajectory_distance(&r[0], &r[1], alpha, &p);
                    StudyRow {
                        seed,
                        eps_a: e[0],
                        eps_b: e[1],
                        besov_diff,
                        sup_diff,
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

/// Per consecutive pair of `ε`: mean of the Besov and sup distances over seeds.
pub fn study_means(rows: &[StudyRow]) -> Vec<(f64, f64, f64, f64)> {
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.eps_a, r.eps_b)) {
            keys.push((r.eps_a, r.eps_b));
        }
    }
    keys.into_iter()
        .map(|(a, b)| {
            let sel: Vec<&StudyRow> = rows.iter().filter(|r| r.eps_a == a && r.eps_b == b).collect();
            let n = sel.len() as f64;
            (
                a,
                b,
                sel.iter().map(|r| r.besov_diff).sum::<f64>() / n,
                sel.iter().map(|r| r.sup_diff).sum::<f64>() / n,
            )
        })
        .collect()
}

/// Extracts a real-space field's spectrum truncated to `|k_j| ≤ n/3`.
pub fn band_limit(f: &Field) -> Field {
    let mut s: SpectralField = transform(f);
    s.truncate_two_thirds();
    inverse(&s)
}
