//! Run configuration and the file formats: CSV series, `report.json`,
//! checkpoints and mesh text.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assembly::VectorField;
use crate::bounds::{DimensionReport, RegimeGrid, RegimeRow};
use crate::error::{Error, Result};
use crate::evolution::{EnergyBudget, NonlinearMode, ProblemConfig, Trajectory};
use crate::laws::{BoundaryModel, StressModel};

fn d_nu() -> f64 {
    1.0
}
fn d_one() -> f64 {
    1.0
}
fn d_dt() -> f64 {
    0.01
}
fn d_theta() -> f64 {
    0.5
}
fn d_picard_tol() -> f64 {
    1e-10
}
fn d_picard_max() -> usize {
    50
}
fn d_true() -> bool {
    true
}
fn d_refinement() -> usize {
    3
}
fn d_nev() -> usize {
    20
}
fn d_stride() -> usize {
    10
}
fn d_discard() -> f64 {
    0.2
}
fn d_seed() -> u64 {
    0x5eed
}
fn d_out() -> String {
    "out".into()
}

/// JSON run configuration; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "d_nu")]
    pub nu: f64,
    #[serde(default = "d_one")]
    pub alpha: f64,
    #[serde(default = "d_one")]
    pub beta: f64,
    #[serde(default = "d_one")]
    pub ell: f64,
    #[serde(default)]
    pub f: VectorField,
    #[serde(default)]
    pub h: VectorField,
    #[serde(default)]
    pub modulation: Option<f64>,
    #[serde(default)]
    pub stress: StressModel,
    #[serde(default)]
    pub boundary: BoundaryModel,
    #[serde(default = "d_true")]
    pub convection: bool,
    #[serde(default)]
    pub u0: VectorField,
    #[serde(default = "d_dt")]
    pub dt: f64,
    #[serde(default = "d_one")]
    pub t_end: f64,
    #[serde(default = "d_theta")]
    pub theta: f64,
    #[serde(default)]
    pub mode: NonlinearMode,
    #[serde(default = "d_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "d_picard_max")]
    pub picard_max: usize,
    #[serde(default = "d_refinement")]
    pub refinement: usize,
    /// Eigenpairs for `eigen`; also the `N` window for `q(N)`.
    #[serde(default = "d_nev")]
    pub nev: usize,
    #[serde(default = "d_stride")]
    pub stride: usize,
    #[serde(default = "d_discard")]
    pub discard: f64,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_out")]
    pub out: String,
    #[serde(default)]
    pub grid: Option<RegimeGrid>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem().validate()?;
        if !(self.ell > 0.0 && self.ell.is_finite()) {
            return Err(Error::InvalidInput(format!("ell must be positive, got {}", self.ell)));
        }
        if self.refinement > crate::mesh::MAX_REFINEMENT {
            return Err(Error::InvalidInput(format!(
                "refinement must be at most {}, got {}",
                crate::mesh::MAX_REFINEMENT,
                self.refinement
            )));
        }
        if self.nev == 0 || self.nev > 60 {
            return Err(Error::InvalidInput(format!("nev must lie in 1..=60, got {}", self.nev)));
        }
        if self.stride == 0 {
            return Err(Error::InvalidInput("stride must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.discard) {
            return Err(Error::InvalidInput(format!("discard must lie in [0, 1), got {}", self.discard)));
        }
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        Ok(())
    }

    pub fn problem(&self) -> ProblemConfig {
        ProblemConfig {
            nu: self.nu,
            alpha: self.alpha,
            beta: self.beta,
            f: self.f.clone(),
            h: self.h.clone(),
            modulation: self.modulation,
            stress: self.stress,
            boundary: self.boundary,
            convection: self.convection,
            u0: self.u0.clone(),
            dt: self.dt,
            t_end: self.t_end,
            theta: self.theta,
            mode: self.mode,
            picard_tol: self.picard_tol,
            picard_max: self.picard_max,
        }
    }

    pub fn analysis(&self) -> crate::bounds::AnalysisOptions {
        crate::bounds::AnalysisOptions { n_max: self.nev, stride: self.stride, discard: self.discard, seed: self.seed }
    }

    /// SHA-256 of the canonical JSON serialization, ignoring `out`.
    pub fn hash(&self) -> [u8; 32] {
        let canonical = RunConfig { out: String::new(), ..self.clone() };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        Sha256::digest(json.as_bytes()).into()
    }
}

pub const EIGEN_HEADER: &str = "k,mu";
pub const TRAJECTORY_HEADER: &str = "t,H_norm_sq,Du_sq,boundary_dissipation,work,energy_residual";
pub const QN_HEADER: &str = "N,qN,analytic_bound";
pub const LT_HEADER: &str = "N,ratio";
pub const REGIME_HEADER: &str = "alpha,beta,nu,amplitude,forcing_norm,m_alpha,m_beta,formula_bound,n_star_numeric,error";

pub fn eigen_csv(mu: &[f64]) -> String {
    let mut s = format!("{EIGEN_HEADER}\n");
    for (k, m) in mu.iter().enumerate() {
        writeln!(s, "{},{m}", k + 1).unwrap();
    }
    s
}

pub fn trajectory_csv(traj: &Trajectory, budget: &EnergyBudget) -> String {
    let mut s = format!("{TRAJECTORY_HEADER}\n");
    for ((t, d), r) in traj.times.iter().zip(&traj.diagnostics).zip(&budget.cumulative) {
        writeln!(s, "{t},{},{},{},{},{r}", d.h_norm_sq, d.du_sq, d.boundary_dissipation, d.work).unwrap();
    }
    s
}

pub fn qn_csv(q: &[f64], bound: &[f64]) -> String {
    let mut s = format!("{QN_HEADER}\n");
    for (n, (q, b)) in q.iter().zip(bound).enumerate() {
        writeln!(s, "{},{q},{b}", n + 1).unwrap();
    }
    s
}

pub fn lt_csv(ratios: &[f64]) -> String {
    let mut s = format!("{LT_HEADER}\n");
    for (n, r) in ratios.iter().enumerate() {
        writeln!(s, "{},{r}", n + 1).unwrap();
    }
    s
}

pub fn regime_csv(rows: &[RegimeRow]) -> String {
    let mut s = format!("{REGIME_HEADER}\n");
    for r in rows {
        let n = r.n_star_numeric.map_or(String::new(), |n| n.to_string());
        let e = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{n},{e}",
            r.alpha, r.beta, r.nu, r.amplitude, r.forcing_norm, r.m_alpha, r.m_beta, r.formula_bound
        )
        .unwrap();
    }
    s
}

pub fn report_json(report: &DimensionReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"SLIPCKPT";

/// `magic ‖ sha256(config) ‖ t (f64) ‖ len (u64) ‖ len × f64`, little endian.
pub fn checkpoint_bytes(config: &RunConfig, t: f64, state: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(56 + 8 * state.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&config.hash());
    out.extend_from_slice(&t.to_le_bytes());
    out.extend_from_slice(&(state.len() as u64).to_le_bytes());
    for x in state {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// Reads a checkpoint written for `config`; a different config hash is an error.
pub fn read_checkpoint(config: &RunConfig, bytes: &[u8]) -> Result<(f64, Vec<f64>)> {
    let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
    if bytes.len() < 56 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("missing header"));
    }
    if bytes[8..40] != config.hash() {
        return Err(bad("config hash mismatch"));
    }
    let t = f64::from_le_bytes(bytes[40..48].try_into().unwrap());
    let len = u64::from_le_bytes(bytes[48..56].try_into().unwrap()) as usize;
    if bytes.len() != 56 + 8 * len {
        return Err(bad("truncated payload"));
    }
    let state = bytes[56..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((t, state))
}

pub fn write_file(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}
