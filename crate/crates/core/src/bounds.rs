//! Absorbing-set estimates, the attractor-dimension bound with measured
//! constants, the nondimensionalization map and regime tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{build_spaces, DiscreteSystem, VectorField};
use crate::eigen::EigenOptions;
use crate::error::{Error, Result};
use crate::evolution::{run_trajectory, ProblemConfig, Stepper, Trajectory};
use crate::linearized::{lieb_thirring_ratio, trace_qn, TraceReport};
use crate::mesh::{build_disk_mesh, Mesh};
use crate::spectrum::{eigenvalue_fit, korn_constant, m_beta, solve_eigenbasis, solve_pencil};

/// `min{1, αℓ/ν}`
pub fn m_alpha(alpha: f64, ell: f64, nu: f64) -> f64 {
    (alpha * ell / nu).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeConstants {
    pub m_alpha: f64,
    pub m_beta: f64,
    /// `min{c₁/ν, c₃}`
    pub m: f64,
    /// `|Ω|ν⁻²‖F‖_H`
    pub grashof: f64,
}

impl RegimeConstants {
    pub fn new(cfg: &ProblemConfig, ell: f64, forcing_norm: f64) -> Self {
        let area = std::f64::consts::PI * ell * ell / 4.0;
        Self {
            m_alpha: m_alpha(cfg.alpha, ell, cfg.nu),
            m_beta: m_beta(cfg.beta, ell),
            m: (cfg.stress_law().c1 / cfg.nu).min(cfg.boundary_law().c3),
            grashof: area * forcing_norm / (cfg.nu * cfg.nu),
        }
    }
}

fn require_autonomous(cfg: &ProblemConfig) -> Result<()> {
    if cfg.is_time_dependent() {
        Err(Error::InvalidInput("absorbing-set bounds need time-independent forcing".into()))
    } else {
        Ok(())
    }
}

/// `B₀ ≤ (1/m)(M_β/m_α)‖F̃‖` in rescaled variables, mapped back to the
/// physical `H` norm (`‖u‖_H = ν‖ũ‖`, `‖F̃‖ = ℓ²‖F‖/ν²`).
pub fn b0_bound(cfg: &ProblemConfig, ell: f64, forcing_norm: f64) -> Result<f64> {
    require_autonomous(cfg)?;
    let r = RegimeConstants::new(cfg, ell, forcing_norm);
    Ok(r.m_beta / (r.m * r.m_alpha) * ell * ell * forcing_norm / cfg.nu)
}

/// `B₁ ≤ (1/(m c̃₁))(M_β/m_α)‖F̃‖²` for the time average of `‖Dũ‖²`, mapped
/// back with `‖Du‖² = (ν/ℓ)²‖Dũ‖²`.
pub fn b1_bound(cfg: &ProblemConfig, ell: f64, forcing_norm: f64) -> Result<f64> {
    require_autonomous(cfg)?;
    let r = RegimeConstants::new(cfg, ell, forcing_norm);
    let c1 = cfg.stress_law().c1 / cfg.nu;
    let ft = ell * ell * forcing_norm / (cfg.nu * cfg.nu);
    Ok((cfg.nu / ell).powi(2) * r.m_beta / (r.m * c1 * r.m_alpha) * ft * ft)
}

/// Index of the first record of the tail after discarding `discard` of the run.
pub fn tail_start(traj: &Trajectory, discard: f64) -> usize {
    (((traj.len() - 1) as f64) * discard).ceil() as usize
}

/// `max ‖u(t)‖_H` over the tail.
pub fn b0_empirical(traj: &Trajectory, discard: f64) -> f64 {
    traj.diagnostics[tail_start(traj, discard)..].iter().map(|d| d.h_norm_sq.sqrt()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct B1Estimate {
    /// Trapezoid time average of `‖Du‖²` over the tail.
    pub average: f64,
    /// Relative change of the running average over the last quarter.
    pub drift: f64,
    pub converged: bool,
}

pub fn b1_estimate(traj: &Trajectory, discard: f64) -> Result<B1Estimate> {
    let start = tail_start(traj, discard);
    let du: Vec<f64> = traj.diagnostics[start..].iter().map(|d| d.du_sq).collect();
    if du.len() < 5 {
        return Err(Error::InvalidInput("trajectory tail too short for a time average".into()));
    }
    let avg = |v: &[f64]| -> f64 {
        let s: f64 = v.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum();
        s / (v.len() - 1) as f64
    };
    let average = avg(&du);
    let three_quarters = avg(&du[..(3 * du.len()).div_ceil(4).max(2)]);
    let drift = if average == 0.0 { 0.0 } else { (average - three_quarters).abs() / average };
    Ok(B1Estimate { average, drift, converged: drift < 0.05 })
}

/// Shape constants entering `c₀`, measured on the reference configuration
/// `α = β = ν = ℓ = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeConstants {
    pub korn: f64,
    pub kappa: f64,
    pub eig_slope: f64,
}

impl ShapeConstants {
    /// `c₀ = C_K·(2κ/a)^{1/2}`
    pub fn c0(&self) -> f64 {
        self.korn * (2.0 * self.kappa / self.eig_slope).sqrt()
    }
}

pub const SHAPE_EIGENPAIRS: usize = 40;
pub const LT_FAMILY: usize = 30;

pub fn measure_shape_constants(level: usize, seed: u64) -> Result<ShapeConstants> {
    let sys = build_spaces(&build_disk_mesh(level, 1.0)?, 1.0, 1.0)?;
    let basis = solve_eigenbasis(&sys, SHAPE_EIGENPAIRS, seed)?;
    let korn = korn_constant(&sys, seed)?;
    let kappa = (1..=LT_FAMILY)
        .map(|n| lieb_thirring_ratio(&sys, &basis.omega[..n]))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let eig_slope = eigenvalue_fit(&basis.mu, 5, SHAPE_EIGENPAIRS).slope;
    Ok(ShapeConstants { korn, kappa, eig_slope })
}

/// `c₀ (M_β/m_α^{3/2}) ℓ²‖F‖_H/ν²`
pub fn formula_bound(shape: &ShapeConstants, cfg: &ProblemConfig, ell: f64, forcing_norm: f64) -> f64 {
    let ma = m_alpha(cfg.alpha, ell, cfg.nu);
    let mb = m_beta(cfg.beta, ell);
    shape.c0() * mb / ma.powf(1.5) * ell * ell * forcing_norm / (cfg.nu * cfg.nu)
}

/// Coercive floor of the symmetrized linearization: `c₁K_D + α c₅ M_∂`
/// (exactly `νK_D + αM_∂` for linear laws).
fn floor_coefficients(cfg: &ProblemConfig) -> (f64, f64) {
    let law = cfg.stress_law();
    let blaw = cfg.boundary_law();
    let a = if blaw.is_linear() { cfg.alpha } else { cfg.alpha * blaw.c5 };
    (law.c1, a)
}

/// Partial sums `Λ_N`, `N = 1..=n`, of the floor pencil on `ker B`.
pub fn floor_partial_sums(sys: &DiscreteSystem, cfg: &ProblemConfig, n: usize, seed: u64) -> Result<Vec<f64>> {
    let (c, a) = floor_coefficients(cfg);
    let op = sys.k_d.linear_combination(c, &sys.m_boundary, a);
    let mut opts = EigenOptions::new(n);
    opts.seed = seed;
    let basis = solve_pencil(&op, &sys.inner.m_h, &sys.b_div, &opts)?;
    Ok(basis
        .mu
        .iter()
        .scan(0.0, |acc, m| {
            *acc += m;
            Some(*acc)
        })
        .collect())
}

/// `f(N) = −½Λ_N + κ C_K B̂₁ / (2 c m_α)` with `B̂₁` the average of `‖Du‖²`
/// over the q(N) samples; `f[N−1] = f(N)`.
pub fn majorant(
    shape: &ShapeConstants,
    cfg: &ProblemConfig,
    ell: f64,
    partial_sums: &[f64],
    b1_samples: f64,
) -> Vec<f64> {
    let (c, a) = floor_coefficients(cfg);
    let ma = m_alpha(a, ell, c);
    let intercept = shape.kappa * shape.korn * b1_samples / (2.0 * c * ma);
    partial_sums.iter().map(|l| -0.5 * l + intercept).collect()
}

/// First `N` with `f(N) ≤ 0`.
pub fn majorant_root(f: &[f64]) -> Option<usize> {
    f.iter().position(|v| *v <= 0.0).map(|i| i + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C0Parts {
    pub korn: f64,
    pub kappa: f64,
    pub eig_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeSummary {
    pub m_alpha: f64,
    pub m_beta: f64,
    pub grashof: f64,
}

/// Serialized as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionReport {
    pub b0_bound: f64,
    pub b0_emp: f64,
    pub b1_bound: f64,
    pub b1_emp: f64,
    pub n_star_numeric: Option<usize>,
    pub n_star_formula: Option<usize>,
    pub formula_bound: f64,
    pub c0_parts: C0Parts,
    pub regime: RegimeSummary,
}

/// Everything computed along the way, including the q(N) curve.
#[derive(Debug, Clone)]
pub struct DimensionAnalysis {
    pub report: DimensionReport,
    pub trace: TraceReport,
    pub majorant: Vec<f64>,
    pub b1_samples: f64,
    pub b1: B1Estimate,
}

impl DimensionAnalysis {
    /// `q(N) ≤ f(N)` for every computed `N`, with relative slack `tol`.
    pub fn chain_holds(&self, tol: f64) -> bool {
        self.trace.q.iter().zip(&self.majorant).all(|(q, f)| *q <= f + tol * f.abs().max(q.abs()))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AnalysisOptions {
    pub n_max: usize,
    pub stride: usize,
    pub discard: f64,
    pub seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self { n_max: 20, stride: 10, discard: 0.2, seed: 0x5eed }
    }
}

/// Trajectory → q(N) → majorant → report for one configuration.
pub fn dimension_bound(
    sys: &DiscreteSystem,
    cfg: &ProblemConfig,
    shape: &ShapeConstants,
    opts: &AnalysisOptions,
) -> Result<DimensionAnalysis> {
    require_autonomous(cfg)?;
    let ell = sys.ell();
    let traj = run_trajectory(sys, cfg)?;
    let stepper = Stepper::new(sys, cfg)?;
    let trace = trace_qn(&stepper, &traj, opts.n_max, opts.stride, opts.discard, opts.seed)?;
    let fnorm = sys.forcing_h_norm(&cfg.f, &cfg.h);
    let b1_samples =
        trace.sample_indices.iter().map(|&i| traj.diagnostics[i].du_sq).sum::<f64>() / trace.sample_indices.len() as f64;
    let sums = floor_partial_sums(sys, cfg, opts.n_max, opts.seed)?;
    let f = majorant(shape, cfg, ell, &sums, b1_samples);
    let b1 = b1_estimate(&traj, opts.discard)?;
    let regime = RegimeConstants::new(cfg, ell, fnorm);
    let report = DimensionReport {
        b0_bound: b0_bound(cfg, ell, fnorm)?,
        b0_emp: b0_empirical(&traj, opts.discard),
        b1_bound: b1_bound(cfg, ell, fnorm)?,
        b1_emp: b1.average,
        n_star_numeric: trace.n_star(),
        n_star_formula: majorant_root(&f),
        formula_bound: formula_bound(shape, cfg, ell, fnorm),
        c0_parts: C0Parts { korn: shape.korn, kappa: shape.kappa, eig_slope: shape.eig_slope },
        regime: RegimeSummary { m_alpha: regime.m_alpha, m_beta: regime.m_beta, grashof: regime.grashof },
    };
    Ok(DimensionAnalysis { report, trace, majorant: f, b1_samples, b1 })
}

/// Scales relating a configuration to its nondimensional twin:
/// `u(x,t) = a·ũ(x/ℓ, t/τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scaling {
    pub a: f64,
    pub tau: f64,
    pub ell: f64,
}

impl Scaling {
    /// Maps a rescaled coefficient vector back to physical units.
    pub fn back_map(&self, u: &[f64]) -> Vec<f64> {
        u.iter().map(|x| self.a * x).collect()
    }
}

/// `ν̃ = ℓ̃ = 1`, `α̃ = αℓ/ν`, `β̃ = β/ℓ`, `f̃ = (ℓ³/ν²) f(ℓx̃)`, time in units
/// of `τ = ℓ²/ν`. Exact for linear laws; nonlinear laws keep their model
/// with the rescaled coefficients.
pub fn nondimensionalize(cfg: &ProblemConfig, ell: f64) -> (ProblemConfig, Scaling) {
    let nu = cfg.nu;
    let scaling = Scaling { a: nu / ell, tau: ell * ell / nu, ell };
    let factor = ell.powi(3) / (nu * nu);
    let scaled = ProblemConfig {
        nu: 1.0,
        alpha: cfg.alpha * ell / nu,
        beta: cfg.beta / ell,
        f: cfg.f.rescaled(factor, ell),
        h: cfg.h.rescaled(factor, ell),
        modulation: cfg.modulation.map(|w| w * scaling.tau),
        u0: cfg.u0.rescaled(1.0 / scaling.a, ell),
        dt: cfg.dt / scaling.tau,
        t_end: cfg.t_end / scaling.tau,
        ..cfg.clone()
    };
    (scaled, scaling)
}

/// Solves directly on the disk of diameter `ell` and on the unit disk with
/// the nondimensional twin, back-maps the latter and returns
/// `max_t ‖u − a·ũ‖_H / max_t ‖u‖_H`.
pub fn scale_roundtrip(level: usize, cfg: &ProblemConfig, ell: f64) -> Result<f64> {
    let sys = build_spaces(&build_disk_mesh(level, ell)?, cfg.alpha, cfg.beta)?;
    let direct = run_trajectory(&sys, cfg)?;
    let (twin, scaling) = nondimensionalize(cfg, ell);
    let unit = build_spaces(&build_disk_mesh(level, 1.0)?, twin.alpha, twin.beta)?;
    let scaled = run_trajectory(&unit, &twin)?;
    if direct.len() != scaled.len() {
        return Err(Error::Numerical(format!(
            "scale round trip: {} direct records against {} rescaled",
            direct.len(),
            scaled.len()
        )));
    }
    let mut gap: f64 = 0.0;
    let mut size: f64 = 0.0;
    for (u, v) in direct.states.iter().zip(&scaled.states) {
        let back = scaling.back_map(v);
        let d: Vec<f64> = u.iter().zip(&back).map(|(a, b)| a - b).collect();
        gap = gap.max(sys.h_norm_sq(&d).sqrt());
        size = size.max(sys.h_norm_sq(u).sqrt());
    }
    Ok(if size == 0.0 { gap } else { gap / size })
}

/// Five forced Navier–Stokes configurations on a disk of diameter `ell`,
/// each run for three viscous time units. The table lists `(ν, α̃, β̃, f̃, h̃)`
/// in rescaled form; all satisfy
/// `α̃ ≥ β̃ + 1/8`, which puts the rigid-rotation eigenvalue `α̃/(β̃ + 1/8)`
/// at or above 1.
pub fn reference_sweep(ell: f64) -> Vec<ProblemConfig> {
    let tv = |amp: f64| VectorField::TrigVortex { amp, k: 3.0 };
    let base = [
        (1.0, 1.0, 0.5, tv(1000.0), VectorField::Zero),
        (1.0, 2.0, 1.0, tv(600.0), VectorField::Zero),
        (0.5, 1.0, 0.25, tv(400.0), VectorField::Zero),
        (1.0, 4.0, 2.0, tv(800.0), VectorField::Constant { value: [30.0, 10.0] }),
        (2.0, 4.0, 0.5, tv(1200.0), VectorField::Zero),
    ];
    base.into_iter()
        .map(|(nu, alpha, beta, f, h)| {
            let tau = ell * ell / nu;
            let factor = nu * nu / ell.powi(3);
            ProblemConfig {
                nu,
                alpha: alpha * nu / ell,
                beta: beta * ell,
                f: f.rescaled(factor, 1.0 / ell),
                h: h.rescaled(factor, 1.0 / ell),
                dt: 0.02 * tau,
                t_end: 3.0 * tau,
                ..Default::default()
            }
        })
        .collect()
}

/// Grid for [`regime_table`]; forcing is `amp·(f, h)` for each amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeGrid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub nus: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

impl RegimeGrid {
    pub fn validate(&self) -> Result<()> {
        let sizes = [self.alphas.len(), self.betas.len(), self.nus.len(), self.amplitudes.len()];
        let limits = [5, 5, 3, 3];
        if sizes.iter().zip(limits).any(|(s, l)| *s == 0 || *s > l) {
            return Err(Error::InvalidInput(format!("grid sizes {sizes:?} exceed 5x5x3x3 or are empty")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeRow {
    pub alpha: f64,
    pub beta: f64,
    pub nu: f64,
    pub amplitude: f64,
    pub forcing_norm: f64,
    pub m_alpha: f64,
    pub m_beta: f64,
    pub formula_bound: f64,
    pub n_star_numeric: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeChecks {
    /// Non-increasing in `α` while `αℓ/ν < 1`, flat beyond.
    pub alpha_structure: bool,
    /// Flat in `β` up to `β = ℓ`, proportional to `β` beyond.
    pub beta_structure: bool,
    pub zero_forcing_zero: bool,
}

#[derive(Debug, Clone)]
pub struct RegimeTable {
    pub rows: Vec<RegimeRow>,
    pub checks: RegimeChecks,
}

/// Evaluates the formula bound on every grid cell in grid order; with
/// `numeric` set, each cell also runs trajectory → q(N) for `N_star`.
/// Per-cell failures are recorded in the row.
pub fn regime_table(
    mesh: &Mesh,
    template: &ProblemConfig,
    grid: &RegimeGrid,
    shape: &ShapeConstants,
    numeric: Option<&AnalysisOptions>,
) -> Result<RegimeTable> {
    grid.validate()?;
    let ell = mesh.char_length;
    // ‖F‖²_H = ∫|f|² + β∮|h|², both parts measured once
    let unit = build_spaces(mesh, 1.0, 1.0)?;
    let fi = unit.forcing_h_norm(&template.f, &VectorField::Zero).powi(2);
    let hb = unit.forcing_h_norm(&VectorField::Zero, &template.h).powi(2);
    let mut cells = Vec::new();
    for &alpha in &grid.alphas {
        for &beta in &grid.betas {
            for &nu in &grid.nus {
                for &amp in &grid.amplitudes {
                    cells.push((alpha, beta, nu, amp));
                }
            }
        }
    }
    let rows: Vec<RegimeRow> = cells
        .par_iter()
        .map(|&(alpha, beta, nu, amp)| {
            let cfg = ProblemConfig {
                alpha,
                beta,
                nu,
                f: template.f.rescaled(amp, 1.0),
                h: template.h.rescaled(amp, 1.0),
                ..template.clone()
            };
            let forcing_norm = amp.abs() * (fi + beta * hb).sqrt();
            let mut row = RegimeRow {
                alpha,
                beta,
                nu,
                amplitude: amp,
                forcing_norm,
                m_alpha: m_alpha(alpha, ell, nu),
                m_beta: m_beta(beta, ell),
                formula_bound: formula_bound(shape, &cfg, ell, forcing_norm),
                n_star_numeric: None,
                error: None,
            };
            if let Some(opts) = numeric {
                let result = build_spaces(mesh, alpha, beta).and_then(|sys| {
                    let traj = run_trajectory(&sys, &cfg)?;
                    let stepper = Stepper::new(&sys, &cfg)?;
                    trace_qn(&stepper, &traj, opts.n_max, opts.stride, opts.discard, opts.seed)
                });
                match result {
                    Ok(trace) => row.n_star_numeric = trace.n_star(),
                    Err(e) => row.error = Some(e.to_string()),
                }
            }
            row
        })
        .collect();
    let checks = regime_checks(&rows, ell);
    Ok(RegimeTable { rows, checks })
}

fn regime_checks(rows: &[RegimeRow], ell: f64) -> RegimeChecks {
    let tol = 1e-12;
    let close = |a: f64, b: f64| (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300);
    let mut alpha_structure = true;
    let mut beta_structure = true;
    for a in rows {
        for b in rows {
            let same_but_alpha = a.beta == b.beta && a.nu == b.nu && a.amplitude == b.amplitude;
            if same_but_alpha && a.alpha < b.alpha {
                let (ra, rb) = (a.alpha * ell / a.nu, b.alpha * ell / b.nu);
                if b.formula_bound > a.formula_bound * (1.0 + tol) {
                    alpha_structure = false;
                }
                if ra >= 1.0 && rb >= 1.0 && !close(a.formula_bound, b.formula_bound) {
                    alpha_structure = false;
                }
            }
            let same_but_beta = a.alpha == b.alpha && a.nu == b.nu && a.amplitude == b.amplitude;
            if same_but_beta && a.beta < b.beta && a.forcing_norm == b.forcing_norm {
                if b.beta <= ell && !close(a.formula_bound, b.formula_bound) {
                    beta_structure = false;
                }
                if a.beta >= ell && !close(a.formula_bound / a.beta, b.formula_bound / b.beta) {
                    beta_structure = false;
                }
            }
        }
    }
    let zero_forcing_zero = rows.iter().filter(|r| r.amplitude == 0.0).all(|r| r.formula_bound == 0.0);
    RegimeChecks { alpha_structure, beta_structure, zero_forcing_zero }
}
