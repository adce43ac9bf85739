//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Run a subset with `cargo test -p pcgl --test acceptance -- 3 5 9`.

use std::path::Path;
use std::time::{Duration, Instant};

use pcgl::besov::{BlockDecomposition, DyadicPartition, PartitionProfile};
use pcgl::drivers::ZeroDrivers;
use pcgl::grid::{inverse, Field, GridSpec, SpectralField, C64};
use pcgl::io::{emit_csv, save_field, Cell, Table};
use pcgl::noise::{Mollifier, MollifierProfile, NoiseStream, OuParams, OuStepper};
use pcgl::paraproduct::{bony_decompose, resonant, resonant_oracle};
use pcgl::renorm::{
    c1_sum, c2_sums, divergence_fit, linear_fit, mc_validate_c1, CConvention, ConstantsOptions,
    FitModel, DEFAULT_PAIR_BUDGET,
};
use pcgl::solver::{
    epsilon_convergence_study, identity_check, renormalized_products, solve_paracontrolled,
    study_means, PipelineSpec, PreparedSlice, Scheme, SolutionState, SolverConfig, Trajectory,
};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

type Criterion = (u32, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn within(elapsed: Duration, limit_s: f64) -> (bool, String) {
    let s = elapsed.as_secs_f64();
    (s < limit_s, format!("runtime {s:.2}s (limit {limit_s}s)"))
}

fn grid(n: usize) -> GridSpec {
    GridSpec::new(n).unwrap()
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * f64::powi(2.0, -53) - 0.5
}

/// Random field with Fourier support in `|k_j| ≤ limit`.
fn random_field(g: GridSpec, rng: &mut ChaCha8Rng, limit: i64, scale: f64) -> Field {
    let mut s = SpectralField::zeros(g);
    for (i, c) in s.coeffs_mut().iter_mut().enumerate() {
        let k = g.wavenumber(i);
        if k.iter().all(|v| v.abs() <= limit) {
            *c = scale * C64::new(uniform(rng), uniform(rng));
        }
    }
    inverse(&s)
}

fn rel(a: &Field, b: &Field) -> f64 {
    (a - b).sup_norm() / b.sup_norm()
}

fn sharp(eps: f64) -> Mollifier {
    Mollifier::new(MollifierProfile::Sharp, eps).unwrap()
}

fn pipeline(n: usize, dt: f64, t_end: f64, burn_in: f64, nu: C64, scheme: Scheme) -> PipelineSpec {
    PipelineSpec {
        solver: SolverConfig {
            mu: 1.0,
            nu,
            dt,
            t_end,
            kappa: 0.02,
            kappa_prime: 0.05,
            scheme,
            partition: PartitionProfile::Smooth,
            output_every: 1,
        },
        grid: grid(n),
        base_dt: dt,
        substeps: 1,
        burn_in,
        chi: MollifierProfile::Smooth,
        time_filter: false,
        constants: ConstantsOptions::default(),
    }
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mu = 1.0;
    let c1a = c1_sum(&sharp(1.0), mu);
    let c1b = c1_sum(&sharp(2.0), mu);
    let (c21, c22) = c2_sums(&sharp(1.0), mu, DEFAULT_PAIR_BUDGET).unwrap();
    let (ok_t, rt) = within(t.elapsed(), 1.0);
    let errs = [
        (c1a - 0.5).norm(),
        (c1b - 0.5).norm(),
        (c21 - 1.0 / 12.0).norm(),
        (c22 - 1.0 / 12.0).norm(),
    ];
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    Outcome::new(
        worst <= 1e-15 && ok_t,
        format!("sharp chi closed forms, max abs error {worst:.2e} (tol 1e-15), {rt}"),
    )
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let mu = 1.0;
    let mut lines = Vec::new();
    let mut pass = true;
    for profile in [MollifierProfile::Smooth, MollifierProfile::Sharp] {
        let e1: Vec<f64> = (2..=6).map(|j| f64::powi(2.0, -j)).collect();
        let c1: Vec<C64> = e1
            .iter()
            .map(|&e| c1_sum(&Mollifier::new(profile, e).unwrap(), mu))
            .collect();
        let fit1 = divergence_fit(&e1, &c1, FitModel::Power).unwrap();
        let e2: Vec<f64> = (1..=4).map(|j| f64::powi(2.0, -j)).collect();
        let c2: Vec<(C64, C64)> = e2
            .iter()
            .map(|&e| c2_sums(&Mollifier::new(profile, e).unwrap(), mu, DEFAULT_PAIR_BUDGET).unwrap())
            .collect();
        let c21: Vec<C64> = c2.iter().map(|c| c.0).collect();
        let c22: Vec<C64> = c2.iter().map(|c| c.1).collect();
        let f21 = divergence_fit(&e2, &c21, FitModel::Log).unwrap();
        let f22 = divergence_fit(&e2, &c22, FitModel::Log).unwrap();
        let ok = (fit1.slope + 1.0).abs() <= 0.05 && f21.r_squared >= 0.99 && f22.r_squared >= 0.99;
        pass &= ok;
        lines.push(format!(
            "{profile:?}: c1 slope {:.4} (need -1+-0.05), R2(c21) {:.4}, R2(c22) {:.4} (need >= 0.99)",
            fit1.slope, f21.r_squared, f22.r_squared
        ));
    }
    let (ok_t, rt) = within(t.elapsed(), 120.0);
    Outcome::new(pass && ok_t, format!("{}; {rt}", lines.join("; ")))
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let g = grid(32);
    let p = DyadicPartition::build(g, PartitionProfile::Smooth);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let limit = g.n() as i64 / 3;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let f = random_field(g, &mut rng, limit, 1.0);
        let h = random_field(g, &mut rng, limit, 1.0);
        let b = bony_decompose(&f, &h, &p).unwrap();
        worst = worst.max(rel(&b.total(), &(&f * &h)));
    }
    let (ok_t, rt) = within(t.elapsed(), 10.0);
    Outcome::new(
        worst <= 1e-12 && ok_t,
        format!("100 pairs at N=32, max relative error {worst:.2e} (tol 1e-12), {rt}"),
    )
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let g = grid(8);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for profile in [PartitionProfile::Smooth, PartitionProfile::Sharp] {
        let p = DyadicPartition::build(g, profile);
        for _ in 0..5 {
            let f = random_field(g, &mut rng, 4, 1.0);
            let h = random_field(g, &mut rng, 4, 1.0);
            let blocks = resonant(&BlockDecomposition::new(&f, &p), &BlockDecomposition::new(&h, &p));
            let oracle = resonant_oracle(&f, &h, &p).unwrap();
            worst = worst.max(rel(&blocks, &oracle));
        }
    }
    let (ok_t, rt) = within(t.elapsed(), 30.0);
    Outcome::new(
        worst <= 1e-12 && ok_t,
        format!("10 pairs at N=8, both partitions, max relative error {worst:.2e} (tol 1e-12), {rt}"),
    )
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let eps = 0.25;
    let nu = C64::new(1.0, 0.5);
    let spec = pipeline(32, 1e-3, 0.0, 0.05, nu, Scheme::Etd1);
    let consts = spec.constants(eps).unwrap();
    let mut gen = spec.generator(eps, 5, consts).unwrap();
    let p = gen.partition().clone();
    let mut worst = [0.0f64; 4];
    for j in 0..8 {
        let s = gen.generate();
        if j % 2 != 0 {
            continue;
        }
        let pr = renormalized_products(&s, nu, &p);
        let plain = [
            &s.w * &s.z,
            &s.w * &s.z.conj(),
            &(&s.w * &s.w) * &s.z.conj(),
            &(&s.w * &s.w.conj()) * &s.z,
        ];
        for (i, (r, q)) in [&pr.wz, &pr.wzb, &pr.w2zb, &pr.wwbz].iter().zip(&plain).enumerate() {
            worst[i] = worst[i].max(rel(r, q));
        }
    }
    let max = worst.iter().cloned().fold(0.0, f64::max);
    let (ok_t, rt) = within(t.elapsed(), 60.0);
    Outcome::new(
        max <= 1e-10 && ok_t,
        format!(
            "eps=1/4 N=32, 4 slices, WZ {:.1e} WZb {:.1e} W2Zb {:.1e} WWbZ {:.1e} (tol 1e-10), {rt}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let eps = 0.25;
    let nu = C64::new(1.0, 0.5);
    let spec = pipeline(16, 1e-3, 0.0, 1.0, nu, Scheme::Etd1);
    let consts = spec.constants(eps).unwrap();
    let mut gen = spec.generator(eps, 6, consts).unwrap();
    let p = gen.partition().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut expanded = 0.0f64;
    let mut stmt = 0.0f64;
    let mut proof = 0.0f64;
    for _ in 0..3 {
        let ps = PreparedSlice::new(gen.generate(), nu, &p);
        let v = random_field(ps.grid(), &mut rng, 5, 1.0);
        let w = random_field(ps.grid(), &mut rng, 5, 0.5);
        let state = SolutionState::new(0.0, v, w).unwrap();
        let rep = identity_check(&state, &ps, &consts, &p).unwrap();
        expanded = expanded.max(rep.rel_error);
        for (conv, e) in rep.equation_rel_error {
            match conv {
                CConvention::Statement => stmt = stmt.max(e),
                CConvention::ProofLine => proof = proof.max(e),
            }
        }
    }
    let passing: Vec<&str> = [("statement", stmt), ("proof-line", proof)]
        .iter()
        .filter(|(_, e)| *e <= 1e-9)
        .map(|(n, _)| *n)
        .collect();
    let (ok_t, rt) = within(t.elapsed(), 60.0);
    Outcome::new(
        expanded <= 1e-9 && !passing.is_empty() && ok_t,
        format!(
            "N=16 eps=1/4, expanded rhs {expanded:.2e}; equation form statement {stmt:.2e}, proof-line {proof:.2e} (tol 1e-9); passing convention: {}; {rt}",
            if passing.is_empty() { "none".to_string() } else { passing.join(",") }
        ),
    )
}

fn criterion_7() -> Outcome {
    let t = Instant::now();
    let mu = 1.0;
    let mut pass = true;
    let mut parts = Vec::new();
    for eps in [1.0, 0.5] {
        let r = mc_validate_c1(&sharp(eps), mu, 500, 7).unwrap();
        pass &= r.z_score.abs() <= 3.0;
        parts.push(format!(
            "eps={eps}: mean {:.4} vs c1 {:.4}, z {:+.2}",
            r.mc_mean, r.lattice_value, r.z_score
        ));
    }

    // per-mode second moments along stationary trajectories
    let g = grid(8);
    let params = OuParams::new(mu).unwrap();
    let moll = sharp(0.5);
    let dt = 0.05;
    let check_steps = [0usize, 5, 10, 20];
    let probe: [[i64; 3]; 4] = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [1, 1, 1]];
    let samples = 500;
    let mut acc = vec![vec![Vec::with_capacity(samples); check_steps.len()]; probe.len()];
    for s in 0..samples {
        let st = OuStepper::new(g, params, moll, NoiseStream::new(7_000 + s as u64), dt, 1).unwrap();
        let mut z = st.stationary(0);
        let mut step = 0usize;
        for (ci, &target) in check_steps.iter().enumerate() {
            while step < target {
                z = st.step(&z, step as i64);
                step += 1;
            }
            for (pi, k) in probe.iter().enumerate() {
                acc[pi][ci].push(z.coeff(*k).norm_sqr());
            }
        }
    }
    let mut worst_z = 0.0f64;
    for (pi, k) in probe.iter().enumerate() {
        let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
        let target = moll.weight(k2).powi(2) * params.stationary_variance_unmollified(k2);
        for xs in &acc[pi] {
            let n = xs.len() as f64;
            let m = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
            worst_z = worst_z.max(((m - target) / (var / n).sqrt()).abs());
        }
    }
    pass &= worst_z <= 3.0;
    parts.push(format!(
        "per-mode variance at 4 modes x 4 times, max |z| {worst_z:.2}"
    ));
    let (ok_t, rt) = within(t.elapsed(), 120.0);
    Outcome::new(pass && ok_t, format!("{} (tol 3 SE), {rt}", parts.join("; ")))
}

/// Blocks `m ≥ 0` whose whole grid support lies strictly inside the sharp
/// mollifier support and away from the Nyquist planes.
fn resolved_blocks(p: &DyadicPartition, eps: f64) -> Vec<i32> {
    let g = p.grid();
    let half = g.n() as i64 / 2;
    (0..=p.max_block())
        .filter(|&m| {
            p.weights(m).iter().enumerate().all(|(i, &w)| {
                let k = g.wavenumber(i);
                w == 0.0 || (g.norm_sq(i).sqrt() < 1.0 / eps && k.iter().all(|v| v.abs() < half))
            })
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let t = Instant::now();
    let g = grid(32);
    let eps = 1.0 / 16.0;
    let p = DyadicPartition::build(g, PartitionProfile::Smooth);
    let st = OuStepper::new(g, OuParams::new(1.0).unwrap(), sharp(eps), NoiseStream::new(8), 1e-3, 1).unwrap();
    let blocks = resolved_blocks(&p, eps);
    let mut energy = vec![0.0; blocks.len()];
    let samples = 100;
    for s in 0..samples {
        let z = BlockDecomposition::from_spectrum(&st.stationary(s), &p);
        for (e, &m) in energy.iter_mut().zip(&blocks) {
            *e += z.block(m).l2_norm().powi(2) / samples as f64;
        }
    }
    let x: Vec<f64> = blocks.iter().map(|&m| f64::from(m)).collect();
    let y: Vec<f64> = energy.iter().map(|e| e.log2()).collect();
    let slope = if blocks.len() >= 2 { linear_fit(&x, &y).0 } else { f64::NAN };
    let (ok_t, rt) = within(t.elapsed(), 120.0);
    Outcome::new(
        (slope - 1.0).abs() <= 0.15 && ok_t,
        format!("N=32 1/eps=16, resolved blocks {blocks:?}, slope {slope:.4} (need 1+-0.15), {rt}"),
    )
}

fn criterion_9() -> Outcome {
    let t = Instant::now();
    let g = grid(8);
    let dt = 1e-4;
    let nu = C64::new(1.0, 0.0);
    let cfg = SolverConfig {
        mu: 1.0,
        nu,
        dt,
        t_end: 1.0,
        kappa: 0.02,
        kappa_prime: 0.05,
        scheme: Scheme::Etd2,
        partition: PartitionProfile::Smooth,
        output_every: 1_000_000,
    };
    let mut src = ZeroDrivers::new(g, dt, 1.0, nu);
    let traj = solve_paracontrolled(&cfg, &mut src, &Field::constant(g, C64::new(0.5, 0.0))).unwrap();
    // r' = r(1 − r²), r(0) = 1/2
    let exact = 1.0 / (1.0 + 3.0 * (-2.0f64).exp()).sqrt();
    let err = traj
        .final_u()
        .values()
        .iter()
        .map(|v| (v - exact).norm())
        .fold(0.0, f64::max);
    let (ok_t, rt) = within(t.elapsed(), 30.0);
    Outcome::new(
        err <= 1e-6 && ok_t,
        format!("ETD2 dt=1e-4 T=1, max |u - r(1)| {err:.2e} (tol 1e-6), {rt}"),
    )
}

/// `sup_t ‖a − b‖∞ / sup_t ‖b‖∞` over recorded times.
fn rel_sup_traj(a: &Trajectory, b: &Trajectory) -> f64 {
    assert_eq!(a.times.len(), b.times.len());
    let d = a.u.iter().zip(&b.u).map(|(x, y)| (x - y).sup_norm()).fold(0.0, f64::max);
    let s = b.u.iter().map(Field::sup_norm).fold(0.0, f64::max);
    d / s
}

fn criterion_10() -> Outcome {
    let t = Instant::now();
    let eps = 0.25;
    let nu = C64::new(1.0, 0.5);
    let base = 1e-4;
    let mut spec = pipeline(16, base, 0.1, 5.0, nu, Scheme::Etd2);
    let consts = spec.constants(eps).unwrap();
    let u0 = Field::zeros(spec.grid);
    let seed = 10;
    let mut diffs = Vec::new();
    let mut proof = Vec::new();
    for (substeps, every) in [(2usize, 50usize), (1, 100)] {
        spec = spec.with_substeps(substeps);
        spec.solver.output_every = every;
        let para = spec.run_para(eps, seed, consts, &u0).unwrap();
        let direct = spec.run_direct(eps, seed, &consts, &u0).unwrap();
        diffs.push(rel_sup_traj(&para, &direct));
        let alt = consts.with_convention(CConvention::ProofLine);
        let direct_alt = spec.run_direct(eps, seed, &alt, &u0).unwrap();
        proof.push(rel_sup_traj(&para, &direct_alt));
    }
    let ratio = diffs[0] / diffs[1];
    let (ok_t, rt) = within(t.elapsed(), 300.0);
    Outcome::new(
        diffs[0] <= 5e-3 && (ratio - 2.0).abs() <= 0.6 && ok_t,
        format!(
            "eps=1/4 N=16 T=0.1 ETD2, statement convention: diff(dt=2e-4) {:.3e} (tol 5e-3), diff(dt=1e-4) {:.3e}, ratio {ratio:.3} (need 2+-0.6); proof-line convention diff {:.3e}/{:.3e}; {rt}",
            diffs[0], diffs[1], proof[0], proof[1]
        ),
    )
}

fn criterion_11() -> Outcome {
    let t = Instant::now();
    let spec = pipeline(32, 2.5e-3, 0.05, 0.5, C64::new(1.0, 0.0), Scheme::Etd1);
    let seeds: Vec<u64> = (1..=10).collect();
    let u0 = Field::zeros(spec.grid);
    let rows = epsilon_convergence_study(&spec, &[0.5, 0.25, 0.125], &seeds, &u0).unwrap();
    let means = study_means(&rows);
    let (a, b) = (means[0].2, means[1].2);
    let (ok_t, rt) = within(t.elapsed(), 900.0);
    Outcome::new(
        a > b && ok_t,
        format!(
            "N=32, 10 seeds, mean C_T C^(-2/3+k') distance: |u(1/2)-u(1/4)| {a:.4e} > |u(1/4)-u(1/8)| {b:.4e}; sup distances {:.4e}, {:.4e}; {rt}",
            means[0].3, means[1].3
        ),
    )
}

/// Writes the outputs of a small end-to-end run into `dir`.
fn determinism_run(dir: &Path) {
    let eps_list = [0.5, 0.25];
    let spec = pipeline(8, 1e-3, 0.01, 0.05, C64::new(1.0, 0.5), Scheme::Etd1);

    let mut t = Table::new(["eps", "c1_re", "c21_re", "c21_im", "c22_re", "c22_im", "c_re", "c_im"]);
    let mut consts = Vec::new();
    for &e in &eps_list {
        let c = spec.constants(e).unwrap();
        t.push(vec![
            Cell::from(e),
            c.c1.re.into(),
            c.c21.re.into(),
            c.c21.im.into(),
            c.c22.re.into(),
            c.c22.im.into(),
            c.c_combined.re.into(),
            c.c_combined.im.into(),
        ]);
        consts.push(c);
    }
    emit_csv(&t, &dir.join("constants.csv")).unwrap();

    let mc = mc_validate_c1(&sharp(0.5), 1.0, 200, 12).unwrap();
    let mut t = Table::new(["mc_mean", "std_error", "lattice"]);
    t.push(vec![mc.mc_mean.into(), mc.std_error.into(), mc.lattice_value.into()]);
    emit_csv(&t, &dir.join("mc.csv")).unwrap();

    let traj = spec.run_para(0.25, 12, consts[1], &Field::zeros(spec.grid)).unwrap();
    save_field(&dir.join("u_final.bin"), traj.final_u()).unwrap();
    let mut t = Table::new(["t", "sup", "l2"]);
    for (time, s, l) in traj.diagnostics() {
        t.push(vec![time.into(), s.into(), l.into()]);
    }
    emit_csv(&t, &dir.join("trajectory.csv")).unwrap();

    let rows = epsilon_convergence_study(&spec, &eps_list, &[1, 2, 3], &Field::zeros(spec.grid)).unwrap();
    let mut t = Table::new(["seed", "eps_a", "eps_b", "besov", "sup"]);
    for r in rows {
        t.push(vec![r.seed.into(), r.eps_a.into(), r.eps_b.into(), r.besov_diff.into(), r.sup_diff.into()]);
    }
    emit_csv(&t, &dir.join("study.csv")).unwrap();
}

fn criterion_12() -> Outcome {
    let t = Instant::now();
    let root = tempfile::tempdir().unwrap();
    let threads = [1usize, 2, 8];
    for &k in &threads {
        let dir = root.path().join(format!("t{k}"));
        std::fs::create_dir(&dir).unwrap();
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .unwrap()
            .install(|| determinism_run(&dir));
    }
    let files = ["constants.csv", "mc.csv", "u_final.bin", "trajectory.csv", "study.csv"];
    let mut differing = Vec::new();
    for f in files {
        let reference = std::fs::read(root.path().join("t1").join(f)).unwrap();
        for &k in &threads[1..] {
            if std::fs::read(root.path().join(format!("t{k}")).join(f)).unwrap() != reference {
                differing.push(format!("{f}@{k}"));
            }
        }
    }
    let (ok_t, rt) = within(t.elapsed(), 120.0);
    Outcome::new(
        differing.is_empty() && ok_t,
        format!(
            "{} files across 1/2/8 threads, differing: {}; {rt}",
            files.len(),
            if differing.is_empty() { "none".to_string() } else { differing.join(",") }
        ),
    )
}

fn main() {
    let all: [Criterion; 12] = [
        (1, "constants closed form", criterion_1),
        (2, "divergence rates", criterion_2),
        (3, "Bony exactness", criterion_3),
        (4, "resonant oracle", criterion_4),
        (5, "renormalized products", criterion_5),
        (6, "algebraic identity", criterion_6),
        (7, "OU moments", criterion_7),
        (8, "Besov regularity diagnostic", criterion_8),
        (9, "deterministic reduction", criterion_9),
        (10, "cross-solver consistency", criterion_10),
        (11, "eps-Cauchy trend", criterion_11),
        (12, "determinism", criterion_12),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, run) in all {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let o = run();
        println!(
            "{} criterion {id:>2} ({name}): {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: {} criterion(s) failed: {failed:?}", failed.len());
        std::process::exit(1);
    }
    println!("acceptance: all selected criteria passed");
}
