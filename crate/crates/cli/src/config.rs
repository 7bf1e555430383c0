//! Run configuration: a TOML file with one section per concern.
//!
//! Every key is optional; omitted keys take the defaults shown by
//! `RunConfig::default()`. Unknown keys and sections are rejected.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use morspai::airga::{linspace, AirgaConfig};
use morspai::birka::BirkaConfig;
use morspai::gmres::GmresConfig;
use morspai::precond::{PrecondMode, ReuseConfig};
use morspai::qbihomm::QbConfig;
use morspai::spai::{PatternKind, SpaiConfig};
use morspai::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Airga,
    Birka,
    Qbihomm,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Airga => "airga",
            Algorithm::Birka => "birka",
            Algorithm::Qbihomm => "qbihomm",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "airga" => Ok(Algorithm::Airga),
            "birka" => Ok(Algorithm::Birka),
            "qbihomm" => Ok(Algorithm::Qbihomm),
            other => Err(Error::Config(format!("unknown algorithm '{other}' (airga, birka, qbihomm)"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// `airga`, `birka` or `qbihomm`; the CLI subcommand overrides it.
    pub algorithm: Option<String>,
    /// `none`, `spai` or `reuse`.
    pub precond: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub model: ModelSection,
    pub files: FilesSection,
    pub airga: AirgaSection,
    pub birka: BirkaSection,
    pub qbihomm: QbSection,
    pub gmres: GmresSection,
    pub spai: SpaiSection,
    pub error_curve: CurveSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            algorithm: None,
            precond: "reuse".into(),
            seed: 1,
            output_dir: PathBuf::from("out"),
            model: ModelSection::default(),
            files: FilesSection::default(),
            airga: AirgaSection::default(),
            birka: BirkaSection::default(),
            qbihomm: QbSection::default(),
            gmres: GmresSection::default(),
            spai: SpaiSection::default(),
            error_curve: CurveSection::default(),
        }
    }
}

/// Generator parameters, used when no matrix files are given.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// State dimension; defaults to 2000 / 400 / 200 for airga / birka / qbihomm.
    pub n: Option<usize>,
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Number of inputs of the bilinear toy.
    pub inputs: usize,
    /// Bilinear coupling strength.
    pub coupling: f64,
    /// Quadratic coefficient scale of the QB toy.
    pub gamma: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            n: None,
            omega: 2.0 * std::f64::consts::PI,
            alpha: 5e-2,
            beta: 5e-6,
            inputs: 2,
            coupling: 0.5,
            gamma: 0.1,
        }
    }
}

/// Matrix Market inputs. Any file given switches off the generator, and then
/// every matrix the algorithm needs must be given.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FilesSection {
    pub m: Option<PathBuf>,
    pub d: Option<PathBuf>,
    pub k: Option<PathBuf>,
    /// Bilinear couplings, one file per input; a single file for qbihomm.
    pub n: Vec<PathBuf>,
    pub h: Option<PathBuf>,
    pub f: Option<PathBuf>,
    pub c: Option<PathBuf>,
}

impl FilesSection {
    pub fn any(&self) -> bool {
        self.m.is_some()
            || self.d.is_some()
            || self.k.is_some()
            || !self.n.is_empty()
            || self.h.is_some()
            || self.f.is_some()
            || self.c.is_some()
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AirgaSection {
    /// Explicit initial expansion points; overrides the linspace keys.
    pub expansion_points: Option<Vec<f64>>,
    pub points_min: f64,
    pub points_max: f64,
    pub num_points: usize,
    pub r_max: usize,
    pub outer_tol: f64,
    pub inner_tol: f64,
    pub max_outer: usize,
}

impl Default for AirgaSection {
    fn default() -> Self {
        let d = AirgaConfig::default();
        AirgaSection {
            expansion_points: None,
            points_min: 1.0,
            points_max: 500.0,
            num_points: 4,
            r_max: d.r_max,
            outer_tol: d.outer_tol,
            inner_tol: d.inner_tol,
            max_outer: d.max_outer,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BirkaSection {
    pub r: usize,
    pub tol: f64,
    pub max_sweeps: usize,
    pub assembly_cap: usize,
}

impl Default for BirkaSection {
    fn default() -> Self {
        let d = BirkaConfig::default();
        BirkaSection {
            r: d.r,
            tol: d.tol,
            max_sweeps: d.max_sweeps,
            assembly_cap: d.assembly_cap,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct QbSection {
    pub sigmas: Vec<f64>,
    pub p_moments: usize,
    pub q_moments: usize,
}

impl Default for QbSection {
    fn default() -> Self {
        let d = QbConfig::default();
        QbSection {
            sigmas: d.sigmas,
            p_moments: d.p_moments,
            q_moments: d.q_moments,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GmresSection {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GmresSection {
    fn default() -> Self {
        let d = GmresConfig::default();
        GmresSection {
            tol: d.rel_tol,
            max_iter: d.max_iter,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SpaiSection {
    /// `diagonal`, `a` or `a^k` (with `pattern_power`).
    pub pattern: String,
    pub pattern_power: usize,
    pub fill_tol: f64,
    pub max_fill_per_col: usize,
    pub max_pattern_sweeps: usize,
    /// Augmentation rounds for update factors.
    pub update_pattern_sweeps: usize,
    /// Factors per chain before a fresh rebuild; 0 means unlimited.
    pub max_chain_len: usize,
}

impl Default for SpaiSection {
    fn default() -> Self {
        let d = ReuseConfig::default();
        SpaiSection {
            pattern: "a".into(),
            pattern_power: 2,
            fill_tol: d.spai.fill_tol,
            max_fill_per_col: d.spai.max_fill_per_col,
            max_pattern_sweeps: d.spai.max_pattern_sweeps,
            update_pattern_sweeps: d.update.max_pattern_sweeps,
            max_chain_len: d.max_chain_len.unwrap_or(0),
        }
    }
}

/// Frequency grid in Hz for the exported error curve; `s = 2πf`.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CurveSection {
    pub enabled: bool,
    pub f_min: f64,
    pub f_max: f64,
    pub points: usize,
    /// GMRES tolerance of the full-order solves; tighter than the reduction
    /// tolerance so the curve is not dominated by solver noise.
    pub gmres_tol: f64,
}

impl Default for CurveSection {
    fn default() -> Self {
        CurveSection {
            enabled: true,
            f_min: 1.0,
            f_max: 500.0,
            points: 200,
            gmres_tol: 1e-10,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn algorithm(&self) -> Result<Algorithm> {
        self.algorithm
            .as_deref()
            .ok_or_else(|| Error::Config("no algorithm selected".into()))?
            .parse()
    }

    pub fn precond_mode(&self) -> Result<PrecondMode> {
        self.precond.parse()
    }

    pub fn n(&self) -> usize {
        self.model.n.unwrap_or(match self.algorithm() {
            Ok(Algorithm::Birka) => 400,
            Ok(Algorithm::Qbihomm) => 200,
            _ => 2000,
        })
    }

    pub fn gmres(&self) -> GmresConfig {
        GmresConfig {
            rel_tol: self.gmres.tol,
            max_iter: self.gmres.max_iter,
            ..Default::default()
        }
    }

    pub fn reuse(&self) -> Result<ReuseConfig> {
        let s = &self.spai;
        let pattern = match s.pattern.as_str() {
            "diagonal" | "diag" => PatternKind::Diagonal,
            "a" => PatternKind::PatternOfA,
            "a^k" => PatternKind::PatternOfAPowK(s.pattern_power),
            other => return Err(Error::Config(format!("unknown spai.pattern '{other}' (diagonal, a, a^k)"))),
        };
        let spai = SpaiConfig {
            pattern,
            fill_tol: s.fill_tol,
            max_fill_per_col: s.max_fill_per_col,
            max_pattern_sweeps: s.max_pattern_sweeps,
        };
        spai.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(ReuseConfig {
            spai,
            update: SpaiConfig {
                max_pattern_sweeps: s.update_pattern_sweeps,
                ..spai
            },
            max_chain_len: (s.max_chain_len > 0).then_some(s.max_chain_len),
            ..ReuseConfig::default()
        })
    }

    pub fn airga_config(&self) -> Result<AirgaConfig> {
        let a = &self.airga;
        let points = match &a.expansion_points {
            Some(p) => p.clone(),
            None => linspace(a.points_min, a.points_max, a.num_points),
        };
        let cfg = AirgaConfig {
            expansion_points: points,
            r_max: a.r_max,
            outer_tol: a.outer_tol,
            inner_tol: a.inner_tol,
            max_outer: a.max_outer,
            gmres: self.gmres(),
            reuse: self.reuse()?,
            ..AirgaConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn birka_config(&self) -> Result<BirkaConfig> {
        let b = &self.birka;
        if b.r == 0 || b.max_sweeps == 0 || !(b.tol > 0.0) {
            return Err(Error::Config("birka needs r ≥ 1, max_sweeps ≥ 1 and tol > 0".into()));
        }
        Ok(BirkaConfig {
            r: b.r,
            tol: b.tol,
            max_sweeps: b.max_sweeps,
            assembly_cap: b.assembly_cap,
            gmres: self.gmres(),
            reuse: self.reuse()?,
            seed: self.seed,
            ..BirkaConfig::default()
        })
    }

    pub fn qb_config(&self) -> Result<QbConfig> {
        let q = &self.qbihomm;
        let cfg = QbConfig {
            sigmas: q.sigmas.clone(),
            p_moments: q.p_moments,
            q_moments: q.q_moments,
            gmres: self.gmres(),
            reuse: self.reuse()?,
            ..QbConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Error-curve grid as `(f, s = 2πf)` pairs.
    pub fn curve_grid(&self) -> Result<Vec<(f64, f64)>> {
        let c = &self.error_curve;
        if !(c.f_min > 0.0 && c.f_max >= c.f_min) || c.points == 0 || !(c.gmres_tol > 0.0) {
            return Err(Error::Config("error_curve needs 0 < f_min ≤ f_max, points ≥ 1 and gmres_tol > 0".into()));
        }
        Ok(linspace(c.f_min, c.f_max, c.points)
            .into_iter()
            .map(|f| (f, 2.0 * std::f64::consts::PI * f))
            .collect())
    }

    /// Check every section that the selected algorithm will read.
    pub fn validate(&self) -> Result<()> {
        let alg = self.algorithm()?;
        self.precond_mode()?;
        if !self.files.any() && self.n() < 4 {
            return Err(Error::Config(format!("model.n = {} is too small (need ≥ 4)", self.n())));
        }
        if !(self.gmres.tol > 0.0) || self.gmres.max_iter == 0 {
            return Err(Error::Config("gmres needs tol > 0 and max_iter ≥ 1".into()));
        }
        match alg {
            Algorithm::Airga => {
                self.airga_config()?;
                if self.error_curve.enabled {
                    self.curve_grid()?;
                }
            }
            Algorithm::Birka => {
                self.birka_config()?;
                if self.model.inputs == 0 {
                    return Err(Error::Config("model.inputs must be at least 1".into()));
                }
            }
            Algorithm::Qbihomm => {
                self.qb_config()?;
            }
        }
        Ok(())
    }
}
