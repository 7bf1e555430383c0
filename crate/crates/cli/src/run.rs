//! Load or generate a model, reduce it and write the results.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use morspai::airga::{airga_reduce, transfer_function_error, ErrorCurve, SecondOrderSystem};
use morspai::birka::{birka_reduce, BilinearSystem, BirkaState};
use morspai::gmres::GmresConfig;
use morspai::generate::{generate_bilinear, generate_disc_brake_like, generate_qb};
use morspai::lti::ReducedSecondOrder;
use morspai::mm::{read_matrix_market, write_dense_matrix_market};
use morspai::qbihomm::{qbihomm_reduce, QbSystem, ReducedQb};
use morspai::report::ReductionReport;
use morspai::sparse::SparseMatrix;
use morspai::{Error, Result};

use crate::config::{Algorithm, RunConfig};

#[derive(Debug, Clone)]
pub enum ReducedModel {
    SecondOrder(ReducedSecondOrder),
    Bilinear(BirkaState),
    QuadraticBilinear(ReducedQb),
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: ReductionReport,
    pub reduced: ReducedModel,
    pub curve: Option<ErrorCurve>,
    /// Frequencies (Hz) matching `curve.s`.
    pub curve_hz: Vec<f64>,
    pub written: Vec<PathBuf>,
}

impl RunOutcome {
    /// Solves that failed without aborting the run (error-curve points).
    pub fn failed_solves(&self) -> usize {
        self.curve.as_ref().map_or(0, |c| c.failed.len())
    }
}

fn required(p: &Option<PathBuf>, key: &str) -> Result<SparseMatrix> {
    let path = p
        .as_ref()
        .ok_or_else(|| Error::Config(format!("files.{key} is required when matrix files are given")))?;
    read_matrix_market(path)
}

pub fn load_second_order(cfg: &RunConfig) -> Result<SecondOrderSystem> {
    let f = &cfg.files;
    if !f.any() {
        let m = &cfg.model;
        return generate_disc_brake_like(cfg.n(), m.omega, m.alpha, m.beta, cfg.seed);
    }
    let sys = SecondOrderSystem::new(
        required(&f.m, "m")?,
        required(&f.d, "d")?,
        required(&f.k, "k")?,
        required(&f.f, "f")?,
        required(&f.c, "c")?,
    )?;
    // logs a warning when D is not αM + βK for the configured α, β
    Ok(sys.with_proportional_damping(cfg.model.alpha, cfg.model.beta)?.0)
}

pub fn load_bilinear(cfg: &RunConfig) -> Result<BilinearSystem> {
    let f = &cfg.files;
    if !f.any() {
        let m = &cfg.model;
        return generate_bilinear(cfg.n(), m.inputs, m.coupling, cfg.seed);
    }
    if f.n.is_empty() {
        return Err(Error::Config("files.n needs one coupling matrix per input".into()));
    }
    let ns = f.n.iter().map(|p| read_matrix_market(p)).collect::<Result<_>>()?;
    BilinearSystem::new(required(&f.k, "k")?, ns, required(&f.f, "f")?, required(&f.c, "c")?)
}

pub fn load_qb(cfg: &RunConfig) -> Result<QbSystem> {
    let f = &cfg.files;
    if !f.any() {
        return generate_qb(cfg.n(), cfg.model.gamma, cfg.seed);
    }
    let [n] = &f.n[..] else {
        return Err(Error::Config("files.n needs exactly one matrix for qbihomm".into()));
    };
    QbSystem::new(
        required(&f.d, "d")?,
        required(&f.k, "k")?,
        read_matrix_market(n)?,
        required(&f.h, "h")?,
        required(&f.f, "f")?,
        required(&f.c, "c")?,
    )
}

struct Writer {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn dense(&mut self, name: &str, a: &nalgebra::DMatrix<f64>) -> Result<()> {
        let path = self.dir.join(name);
        write_dense_matrix_market(&path, a)?;
        self.written.push(path);
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }
}

pub fn error_curve_csv(hz: &[f64], curve: &ErrorCurve) -> String {
    let mut s = String::from("f,s,rel_error\n");
    for ((f, sv), e) in hz.iter().zip(&curve.s).zip(&curve.rel_error) {
        let e = if e.is_nan() { String::new() } else { format!("{e:e}") };
        let _ = writeln!(s, "{f},{sv},{e}");
    }
    s
}

/// Validate `cfg`, run the selected algorithm and write the report, the
/// reduced matrices and (for AIRGA) the error curve into `cfg.output_dir`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let mode = cfg.precond_mode()?;
    let mut out = Writer::new(&cfg.output_dir)?;
    let (report, reduced, curve, curve_hz) = match cfg.algorithm()? {
        Algorithm::Airga => {
            let sys = load_second_order(cfg)?;
            let acfg = cfg.airga_config()?;
            let (red, report) = airga_reduce(&sys, &acfg, mode)?;
            for (name, m) in [("M", &red.m), ("D", &red.d), ("K", &red.k), ("F", &red.f), ("C", &red.c)] {
                out.dense(&format!("reduced_{name}.mtx"), m)?;
            }
            out.dense("basis_V.mtx", &red.v)?;
            let (curve, hz) = if cfg.error_curve.enabled {
                let grid = cfg.curve_grid()?;
                let s: Vec<f64> = grid.iter().map(|g| g.1).collect();
                let hz: Vec<f64> = grid.iter().map(|g| g.0).collect();
                let gmres = GmresConfig {
                    rel_tol: cfg.error_curve.gmres_tol,
                    ..acfg.gmres
                };
                let curve = transfer_function_error(&sys, &red, &s, &gmres, &acfg.reuse, mode)?;
                out.text("error_curve.csv", &error_curve_csv(&hz, &curve))?;
                (Some(curve), hz)
            } else {
                (None, Vec::new())
            };
            (report, ReducedModel::SecondOrder(red), curve, hz)
        }
        Algorithm::Birka => {
            let sys = load_bilinear(cfg)?;
            let bcfg = cfg.birka_config()?;
            let init = BirkaState::initial_guess(&sys, bcfg.r, cfg.seed)?;
            let (st, report) = birka_reduce(&sys, &init, &bcfg, mode)?;
            out.dense("reduced_K.mtx", &st.k)?;
            for (j, nj) in st.n.iter().enumerate() {
                out.dense(&format!("reduced_N{}.mtx", j + 1), nj)?;
            }
            out.dense("reduced_F.mtx", &st.f)?;
            out.dense("reduced_C.mtx", &st.c)?;
            out.dense("basis_V.mtx", &st.v)?;
            out.dense("basis_W.mtx", &st.w)?;
            (report, ReducedModel::Bilinear(st), None, Vec::new())
        }
        Algorithm::Qbihomm => {
            let sys = load_qb(cfg)?;
            let (red, report) = qbihomm_reduce(&sys, &cfg.qb_config()?, mode)?;
            for (name, m) in [
                ("D", &red.d),
                ("K", &red.k),
                ("N", &red.n),
                ("H", &red.h),
                ("F", &red.f),
                ("C", &red.c),
            ] {
                out.dense(&format!("reduced_{name}.mtx"), m)?;
            }
            out.dense("basis_U.mtx", &red.u)?;
            (report, ReducedModel::QuadraticBilinear(red), None, Vec::new())
        }
    };
    out.text("report.csv", &report.to_csv())?;
    Ok(RunOutcome {
        report,
        reduced,
        curve,
        curve_hz,
        written: out.written,
    })
}

/// Process exit code for an error: 2 configuration, 3 solver, 4 IO.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Parse { .. } => 4,
        e if e.is_solver_failure() => 3,
        _ => 2,
    }
}
