use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64 as C64;
use serde_json::{json, Value};

use pcgl::besov::{besov_profile, BlockDecomposition, DyadicPartition, PartitionProfile};
use pcgl::config::{parse_config, RunConfig};
use pcgl::drivers::regularity_report;
use pcgl::grid::{inverse, Field, SpectralField};
use pcgl::io::{emit_csv, load_field, save_field, Cell, RunManifest, Table};
use pcgl::noise::{component, sample_stationary_z, NoiseStream, OuParams};
use pcgl::renorm::{divergence_fit, mc_validate_c1, CConvention, FitModel, RenormConstants};
use pcgl::solver::{
    epsilon_convergence_study, identity_check, study_means, PreparedSlice, SolutionState, Trajectory,
};
use pcgl::{Error, Result};

#[derive(Parser)]
#[command(name = "pcgl", version, about = "Paracontrolled solver for the stochastic cubic complex Ginzburg-Landau equation on T^3")]
struct Cli {
    /// Worker threads (overrides `threads` in the config).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Renormalization constants for a list of eps, with divergence fits.
    Constants {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated eps values; defaults to the config's eps.
        #[arg(long, value_delimiter = ',')]
        eps_list: Vec<f64>,
        /// Also compare c1 with the Monte-Carlo mean of |Z(0)|^2.
        #[arg(long)]
        mc_samples: Option<usize>,
    },
    /// Stationary OU trajectory Z on [0, t_end].
    SampleNoise {
        #[arg(long)]
        config: PathBuf,
    },
    /// Driving vector on [0, t_end] with a regularity report.
    Drive {
        #[arg(long)]
        config: PathBuf,
        /// Save every component of the final slice.
        #[arg(long)]
        save_fields: bool,
    },
    /// Run one solver.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Para)]
        mode: Mode,
    },
    /// Paracontrolled against direct solve on shared noise.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Distances between solutions at consecutive eps over several seeds.
    StudyEps {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        eps_list: Vec<f64>,
        /// Seeds `seed, seed+1, ...` from the config.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Block sup-norms and the C^alpha norm of a saved field (CSV on stdout).
    Besov {
        #[arg(long)]
        field: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, default_value = "smooth")]
        partition: PartitionProfile,
    },
    /// Check the algebraic identity for F + G on sampled drivers.
    IdentityCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        samples: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Para,
    Direct,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation { .. } | Error::Parse(_) | Error::InvalidArgument(_) | Error::Format { .. } => 2,
        Error::BlowUp { .. } => 3,
        Error::Resource(_) => 4,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => 1,
    }
}

/// A validated config plus the directory relative paths are resolved against.
struct Run {
    cfg: RunConfig,
    base: PathBuf,
    out: PathBuf,
    started: Instant,
}

impl Run {
    fn load(path: &Path) -> Result<Self> {
        let cfg = parse_config(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let out = base.join(&cfg.output_dir);
        std::fs::create_dir_all(&out)?;
        Ok(Self {
            cfg,
            base,
            out,
            started: Instant::now(),
        })
    }

    fn manifest(&self, command: &str) -> Result<RunManifest> {
        let mut m = RunManifest::new(command, serde_json::to_value(&self.cfg)?);
        m.seed = Some(self.cfg.seed);
        Ok(m)
    }

    fn constants(&self, eps: f64) -> Result<RenormConstants> {
        self.cfg.pipeline()?.constants(eps)
    }

    fn finish(&self, mut m: RunManifest) -> Result<()> {
        m.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        m.write(&self.out.join(format!("{}.manifest.json", m.command)))
    }

    fn csv(&self, m: &mut RunManifest, name: &str, t: &Table) -> Result<()> {
        emit_csv(t, &self.out.join(name))?;
        m.outputs.push(name.to_string());
        Ok(())
    }

    fn field(&self, m: &mut RunManifest, name: &str, f: &Field) -> Result<()> {
        save_field(&self.out.join(name), f)?;
        m.outputs.push(name.to_string());
        Ok(())
    }
}

fn complex_json(z: C64) -> Value {
    json!([z.re, z.im])
}

fn constants_cells(c: &RenormConstants) -> Vec<Cell> {
    vec![
        c.eps.into(),
        c.c1.re.into(),
        c.c21.re.into(),
        c.c21.im.into(),
        c.c22.re.into(),
        c.c22.im.into(),
        c.c_combined.re.into(),
        c.c_combined.im.into(),
    ]
}

const CONSTANTS_HEADER: [&str; 8] = ["eps", "c1", "c21_re", "c21_im", "c22_re", "c22_im", "c_re", "c_im"];

fn cmd_constants(config: &Path, eps_list: &[f64], mc_samples: Option<usize>) -> Result<()> {
    let run = Run::load(config)?;
    let mut m = run.manifest("constants")?;
    let list = if eps_list.is_empty() { vec![run.cfg.eps] } else { eps_list.to_vec() };
    let mut t = Table::new(CONSTANTS_HEADER);
    let mut all = Vec::new();
    for &e in &list {
        let c = run.constants(e)?;
        t.push(constants_cells(&c));
        m.constants.push(serde_json::to_value(c)?);
        all.push(c);
    }
    run.csv(&mut m, "constants.csv", &t)?;

    let mut summary = serde_json::Map::new();
    if list.len() >= 4 {
        let mut f = Table::new(["quantity", "model", "slope", "intercept", "r_squared"]);
        for (name, model, values) in [
            ("c1", FitModel::Power, all.iter().map(|c| c.c1).collect::<Vec<_>>()),
            ("c21", FitModel::Log, all.iter().map(|c| c.c21).collect()),
            ("c22", FitModel::Log, all.iter().map(|c| c.c22).collect()),
        ] {
            let r = divergence_fit(&list, &values, model)?;
            f.push(vec![
                name.into(),
                format!("{model:?}").to_lowercase().into(),
                r.slope.into(),
                r.intercept.into(),
                r.r_squared.into(),
            ]);
            summary.insert(format!("{name}_fit"), serde_json::to_value(r)?);
        }
        run.csv(&mut m, "fits.csv", &f)?;
    }
    if let Some(samples) = mc_samples {
        let mut t = Table::new(["eps", "mc_mean", "std_error", "lattice", "z_score"]);
        for &e in &list {
            let moll = run.cfg.pipeline()?.mollifier(e)?;
            let r = mc_validate_c1(&moll, run.cfg.mu, samples, run.cfg.seed)?;
            t.push(vec![e.into(), r.mc_mean.into(), r.std_error.into(), r.lattice_value.into(), r.z_score.into()]);
        }
        run.csv(&mut m, "mc.csv", &t)?;
    }
    m.summary = Value::Object(summary);
    run.finish(m)
}

fn cmd_sample_noise(config: &Path) -> Result<()> {
    let run = Run::load(config)?;
    let cfg = &run.cfg;
    let mut m = run.manifest("sample-noise")?;
    let spec = cfg.pipeline()?;
    let series = sample_stationary_z(
        spec.grid,
        OuParams::new(cfg.mu)?,
        spec.mollifier(cfg.eps)?,
        cfg.t_end,
        cfg.dt,
        NoiseStream::new(cfg.seed),
    )?;
    let mut t = Table::new(["step", "t", "sup", "l2"]);
    let last = series.len() - 1;
    for (j, z) in series.iter().enumerate() {
        t.push(vec![j.into(), (j as f64 * cfg.dt).into(), z.sup_norm().into(), z.l2_norm().into()]);
        if j % cfg.output_every == 0 || j == last {
            run.field(&mut m, &format!("z_{j:06}.bin"), z)?;
        }
    }
    run.csv(&mut m, "noise.csv", &t)?;
    run.finish(m)
}

fn cmd_drive(config: &Path, save_fields: bool) -> Result<()> {
    let run = Run::load(config)?;
    let cfg = &run.cfg;
    let mut m = run.manifest("drive")?;
    let spec = cfg.pipeline()?;
    let consts = spec.constants(cfg.eps)?;
    m.constants.push(serde_json::to_value(consts)?);
    let dv = spec.generator(cfg.eps, cfg.seed, consts)?.collect(spec.solver.steps());
    let p = DyadicPartition::build(spec.grid, cfg.partition);
    let rows = regularity_report(&dv, cfg.kappa, 0.5, &p);
    let mut t = Table::new(["t", "component", "alpha", "besov_norm", "block_slope", "target_slope", "flagged"]);
    for r in &rows {
        t.push(vec![
            r.time.into(),
            r.component.into(),
            r.alpha.into(),
            r.besov_norm.into(),
            r.block_slope.map_or(Cell::Text(String::new()), Cell::Float),
            r.target_slope.into(),
            i64::from(r.flagged).into(),
        ]);
    }
    run.csv(&mut m, "drivers.csv", &t)?;
    if save_fields {
        let last = dv.slices.last().expect("at least one slice");
        for tag in pcgl::drivers::DriverTag::ALL {
            run.field(&mut m, &format!("driver_{}.bin", tag.name()), last.get(tag))?;
        }
    }
    m.summary = json!({ "flagged": rows.iter().filter(|r| r.flagged).count(), "rows": rows.len() });
    run.finish(m)
}

fn trajectory_table(traj: &Trajectory) -> Table {
    let mut t = Table::new(["t", "sup", "l2"]);
    for (time, s, l) in traj.diagnostics() {
        t.push(vec![time.into(), s.into(), l.into()]);
    }
    t
}

fn cmd_solve(config: &Path, mode: Mode) -> Result<()> {
    let run = Run::load(config)?;
    let cfg = &run.cfg;
    let (name, label) = match mode {
        Mode::Para => ("solve-para", "para"),
        Mode::Direct => ("solve-direct", "direct"),
    };
    let mut m = run.manifest(name)?;
    let spec = cfg.pipeline()?;
    let consts = spec.constants(cfg.eps)?;
    m.constants.push(serde_json::to_value(consts)?);
    let u0 = cfg.initial_data(&run.base)?;
    let traj = match mode {
        Mode::Para => spec.run_para(cfg.eps, cfg.seed, consts, &u0)?,
        Mode::Direct => spec.run_direct(cfg.eps, cfg.seed, &consts, &u0)?,
    };
    run.csv(&mut m, &format!("trajectory_{label}.csv"), &trajectory_table(&traj))?;
    for (j, u) in traj.u.iter().enumerate() {
        run.field(&mut m, &format!("u_{label}_{j:04}.bin"), u)?;
    }
    let (_, sup, l2) = *traj.diagnostics().last().expect("nonempty trajectory");
    m.summary = json!({ "final_time": traj.times.last(), "final_sup": sup, "final_l2": l2 });
    run.finish(m)
}

fn cmd_compare(config: &Path) -> Result<()> {
    let run = Run::load(config)?;
    let cfg = &run.cfg;
    let mut m = run.manifest("compare")?;
    let spec = cfg.pipeline()?;
    let consts = spec.constants(cfg.eps)?;
    let u0 = cfg.initial_data(&run.base)?;
    let para = spec.run_para(cfg.eps, cfg.seed, consts, &u0)?;
    let mut t = Table::new(["t", "convention", "sup_diff", "rel_sup_diff"]);
    let mut per_conv = serde_json::Map::new();
    for conv in [CConvention::Statement, CConvention::ProofLine] {
        let c = consts.with_convention(conv);
        m.constants.push(serde_json::to_value(c)?);
        let direct = spec.run_direct(cfg.eps, cfg.seed, &c, &u0)?;
        let scale = direct.u.iter().map(Field::sup_norm).fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for ((time, a), b) in para.times.iter().zip(&para.u).zip(&direct.u) {
            let d = (a - b).sup_norm();
            worst = worst.max(d);
            t.push(vec![(*time).into(), conv.to_string().into(), d.into(), (d / scale).into()]);
        }
        per_conv.insert(conv.to_string(), json!(worst / scale));
    }
    run.csv(&mut m, "compare.csv", &t)?;
    let best = per_conv
        .iter()
        .min_by(|a, b| a.1.as_f64().partial_cmp(&b.1.as_f64()).expect("finite"))
        .map(|(k, _)| k.clone());
    m.summary = json!({ "rel_sup_diff": per_conv, "closest_convention": best });
    run.finish(m)
}

fn cmd_study(config: &Path, eps_list: &[f64], seeds: u64) -> Result<()> {
    let run = Run::load(config)?;
    let cfg = &run.cfg;
    let mut m = run.manifest("study-eps")?;
    if eps_list.len() < 2 {
        return Err(Error::InvalidArgument("--eps-list needs at least two values".into()));
    }
    if seeds == 0 {
        return Err(Error::InvalidArgument("--seeds must be >= 1".into()));
    }
    let spec = cfg.pipeline()?;
    let seed_list: Vec<u64> = (0..seeds).map(|i| cfg.seed + i).collect();
    let u0 = cfg.initial_data(&run.base)?;
    let rows = epsilon_convergence_study(&spec, eps_list, &seed_list, &u0)?;
    let mut t = Table::new(["seed", "eps_a", "eps_b", "besov_diff", "sup_diff"]);
    for r in &rows {
        t.push(vec![r.seed.into(), r.eps_a.into(), r.eps_b.into(), r.besov_diff.into(), r.sup_diff.into()]);
    }
    run.csv(&mut m, "study.csv", &t)?;
    let means = study_means(&rows);
    let mut s = Table::new(["eps_a", "eps_b", "mean_besov_diff", "mean_sup_diff"]);
    for &(a, b, mb, ms) in &means {
        s.push(vec![a.into(), b.into(), mb.into(), ms.into()]);
    }
    run.csv(&mut m, "study_means.csv", &s)?;
    let decreasing = means.windows(2).all(|w| w[1].2 < w[0].2);
    m.summary = json!({ "mean_besov_diff_decreasing": decreasing });
    run.finish(m)
}

fn cmd_besov(field: &Path, alpha: f64, partition: PartitionProfile) -> Result<()> {
    let f = load_field(field)?;
    let p = DyadicPartition::build(f.grid(), partition);
    let mut t = Table::new(["block", "weighted_sup"]);
    for (m, v) in besov_profile(&f, alpha, &p) {
        t.push(vec![i64::from(m).into(), v.into()]);
    }
    t.push(vec!["norm".into(), BlockDecomposition::new(&f, &p).besov_norm(alpha).into()]);
    print!("{}", t.to_csv_string()?);
    Ok(())
}

/// Band-limited random field keyed by `(seed, index)`.
fn random_state(stream: &NoiseStream, grid: pcgl::grid::GridSpec, index: i64, scale: f64) -> Field {
    let limit = grid.n() as i64 / 3;
    let modes: Vec<[i64; 3]> = (0..grid.len())
        .map(|i| grid.wavenumber(i))
        .filter(|k| k.iter().all(|v| v.abs() <= limit))
        .collect();
    let draws = stream.normals(component::STATE, index, &modes);
    let mut s = SpectralField::zeros(grid);
    for (k, d) in modes.iter().zip(draws) {
        let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
        s.coeffs_mut()[grid.flat_index(*k)] = scale * d / (1.0 + k2);
    }
    inverse(&s)
}

fn cmd_identity(config: &Path, samples: usize) -> Result<()> {
    let run = Run::load(config)?;
    let cfg = &run.cfg;
    let mut m = run.manifest("identity-check")?;
    let spec = cfg.pipeline()?;
    let consts = spec.constants(cfg.eps)?;
    m.constants.push(serde_json::to_value(consts)?);
    let mut gen = spec.generator(cfg.eps, cfg.seed, consts)?;
    let p = gen.partition().clone();
    let stream = NoiseStream::new(cfg.seed);
    let mut t = Table::new(["sample", "t", "expanded_rel_error", "statement_rel_error", "proof_line_rel_error"]);
    let mut worst = [0.0f64; 3];
    for s in 0..samples {
        let ps = PreparedSlice::new(gen.generate(), cfg.nu(), &p);
        let v = random_state(&stream, spec.grid, 2 * s as i64, 1.0);
        let w = random_state(&stream, spec.grid, 2 * s as i64 + 1, 0.5);
        let rep = identity_check(&SolutionState::new(0.0, v, w)?, &ps, &consts, &p)?;
        let e = [rep.rel_error, rep.equation_rel_error[0].1, rep.equation_rel_error[1].1];
        for (w, x) in worst.iter_mut().zip(e) {
            *w = w.max(x);
        }
        t.push(vec![s.into(), ps.slice.time.into(), e[0].into(), e[1].into(), e[2].into()]);
    }
    run.csv(&mut m, "identity.csv", &t)?;
    m.summary = json!({
        "expanded_rel_error": worst[0],
        "statement_rel_error": worst[1],
        "proof_line_rel_error": worst[2],
        "c_statement": complex_json(consts.with_convention(CConvention::Statement).c_combined),
        "c_proof_line": complex_json(consts.with_convention(CConvention::ProofLine).c_combined),
    });
    run.finish(m)
}

fn threads_from_config(cmd: &Command) -> Option<usize> {
    let path = match cmd {
        Command::Constants { config, .. }
        | Command::SampleNoise { config }
        | Command::Drive { config, .. }
        | Command::Solve { config, .. }
        | Command::Compare { config }
        | Command::StudyEps { config, .. }
        | Command::IdentityCheck { config, .. } => config,
        Command::Besov { .. } => return None,
    };
    parse_config(path).ok().and_then(|c| c.threads)
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Constants { config, eps_list, mc_samples } => cmd_constants(&config, &eps_list, mc_samples),
        Command::SampleNoise { config } => cmd_sample_noise(&config),
        Command::Drive { config, save_fields } => cmd_drive(&config, save_fields),
        Command::Solve { config, mode } => cmd_solve(&config, mode),
        Command::Compare { config } => cmd_compare(&config),
        Command::StudyEps { config, eps_list, seeds } => cmd_study(&config, &eps_list, seeds),
        Command::Besov { field, alpha, partition } => cmd_besov(&field, alpha, partition),
        Command::IdentityCheck { config, samples } => cmd_identity(&config, samples),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| threads_from_config(&cli.command));
    if threads == Some(0) {
        eprintln!("error: --threads must be >= 1");
        return ExitCode::from(2);
    }
    if let Some(k) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: could not start the thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
