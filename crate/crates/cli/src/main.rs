use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use morspai::generate::{generate_bilinear, generate_disc_brake_like, generate_qb};
use morspai::mm::write_matrix_market;
use morspai::sparse::SparseMatrix;
use morspai::Error;
use morspai_cli::bench::{bench_csv, spai_bench};
use morspai_cli::run::load_second_order;
use morspai_cli::{exit_code, run, RunConfig};

/// Model order reduction with reusable sparse approximate inverse preconditioners.
#[derive(Parser)]
#[command(name = "morspai", version)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Second-order reduction with adaptive expansion points.
    Airga(RunArgs),
    /// Bilinear iterative rational Krylov reduction.
    Birka(RunArgs),
    /// Quadratic-bilinear higher-order moment matching.
    Qbihomm(RunArgs),
    /// Compare fresh and updated preconditioners over a shift sequence.
    SpaiBench(BenchArgs),
    /// Write a generated model as Matrix Market files.
    Gen(GenArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// TOML run configuration; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Expansion points (airga, spai-bench) or interpolation points (qbihomm).
    #[arg(long, value_delimiter = ',')]
    points: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Preconditioning mode: none, spai or reuse.
    #[arg(long)]
    precond: Option<String>,
    /// Reduced order (birka).
    #[arg(long)]
    r: Option<usize>,
    /// Skip the transfer-function error curve (airga).
    #[arg(long)]
    no_error_curve: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Also build updates anchored at the first matrix.
    #[arg(long)]
    first_approach: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    DiscBrake,
    Bilinear,
    Qb,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "disc-brake")]
    kind: Kind,
    #[command(flatten)]
    model: ModelArgs,
    /// Inputs of the bilinear model.
    #[arg(long)]
    inputs: Option<usize>,
    #[arg(long)]
    coupling: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

/// Print to stdout, ignoring a closed pipe (`morspai ... | head`).
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn base_config(m: &ModelArgs, algorithm: Option<&str>) -> morspai::Result<RunConfig> {
    let mut cfg = match &m.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(a) = algorithm {
        cfg.algorithm = Some(a.to_string());
    }
    if m.n.is_some() {
        cfg.model.n = m.n;
    }
    if let Some(v) = m.omega {
        cfg.model.omega = v;
    }
    if let Some(v) = m.alpha {
        cfg.model.alpha = v;
    }
    if let Some(v) = m.beta {
        cfg.model.beta = v;
    }
    if let Some(v) = m.seed {
        cfg.seed = v;
    }
    if let Some(p) = &m.points {
        cfg.airga.expansion_points = Some(p.clone());
        cfg.qbihomm.sigmas = p.clone();
    }
    if let Some(o) = &m.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn write_all(dir: &Path, mats: &[(String, &SparseMatrix)]) -> morspai::Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for (name, m) in mats {
        let path = dir.join(format!("{name}.mtx"));
        write_matrix_market(&path, m)?;
        emit(&format!("wrote {}\n", path.display()));
    }
    Ok(())
}

fn execute(cmd: Cmd) -> morspai::Result<i32> {
    match cmd {
        Cmd::Airga(a) => reduce("airga", a),
        Cmd::Birka(a) => reduce("birka", a),
        Cmd::Qbihomm(a) => reduce("qbihomm", a),
        Cmd::SpaiBench(b) => {
            let cfg = base_config(&b.model, Some("airga"))?;
            let sys = load_second_order(&cfg)?;
            let acfg = cfg.airga_config()?;
            let rows = spai_bench(&sys, &acfg.expansion_points, &acfg.reuse, &acfg.gmres, b.first_approach)?;
            let csv = bench_csv(&rows);
            emit(&csv);
            let dir = &cfg.output_dir;
            std::fs::create_dir_all(dir).map_err(|source| Error::Io {
                path: dir.clone(),
                source,
            })?;
            let path = dir.join("spai_bench.csv");
            std::fs::write(&path, csv).map_err(|source| Error::Io { path, source })?;
            let failed = rows.iter().any(|r| !r.fresh.converged || r.update.as_ref().is_some_and(|u| !u.solve.converged));
            Ok(if failed { 3 } else { 0 })
        }
        Cmd::Gen(g) => {
            let mut cfg = base_config(&g.model, None)?;
            let dir = cfg.output_dir.clone();
            if let Some(v) = g.inputs {
                cfg.model.inputs = v;
            }
            let m = &cfg.model;
            match g.kind {
                Kind::DiscBrake => {
                    let s = generate_disc_brake_like(m.n.unwrap_or(2000), m.omega, m.alpha, m.beta, cfg.seed)?;
                    write_all(
                        &dir,
                        &[("M".into(), &s.m), ("D".into(), &s.d), ("K".into(), &s.k), ("F".into(), &s.f), ("C".into(), &s.c)],
                    )?;
                }
                Kind::Bilinear => {
                    let s = generate_bilinear(m.n.unwrap_or(400), m.inputs, g.coupling.unwrap_or(m.coupling), cfg.seed)?;
                    let mut mats = vec![("K".to_string(), &s.k)];
                    mats.extend(s.n.iter().enumerate().map(|(j, nj)| (format!("N{}", j + 1), nj)));
                    mats.extend([("F".to_string(), &s.f), ("C".to_string(), &s.c)]);
                    write_all(&dir, &mats)?;
                }
                Kind::Qb => {
                    let s = generate_qb(m.n.unwrap_or(200), g.gamma.unwrap_or(m.gamma), cfg.seed)?;
                    write_all(
                        &dir,
                        &[
                            ("D".into(), &s.d),
                            ("K".into(), &s.k),
                            ("N".into(), &s.n),
                            ("H".into(), &s.h),
                            ("F".into(), &s.f),
                            ("C".into(), &s.c),
                        ],
                    )?;
                }
            }
            Ok(0)
        }
    }
}

fn reduce(algorithm: &str, a: RunArgs) -> morspai::Result<i32> {
    let mut cfg = base_config(&a.model, Some(algorithm))?;
    if let Some(p) = a.precond {
        cfg.precond = p;
    }
    if let Some(r) = a.r {
        cfg.birka.r = r;
    }
    if a.no_error_curve {
        cfg.error_curve.enabled = false;
    }
    let out = run(&cfg)?;
    emit(&out.report.summary());
    for p in &out.written {
        emit(&format!("wrote {}\n", p.display()));
    }
    let failed = out.failed_solves();
    if failed > 0 {
        eprintln!("{failed} error-curve solves failed");
        return Ok(3);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot set thread count: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli.cmd) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
