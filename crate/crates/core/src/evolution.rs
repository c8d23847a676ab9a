//! θ-scheme time stepping for the evolutionary Stokes and Navier–Stokes
//! systems with dynamic slip, trajectories with energy diagnostics, and the
//! discrete energy budget.

use serde::{Deserialize, Serialize};

use crate::assembly::{DiscreteSystem, VectorField};
use crate::error::{Error, Result};
use crate::laws::{BoundaryLaw, BoundaryModel, ConstitutiveLaw, StressModel};
use crate::sparse::{dot, CsrMatrix, SaddleSolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearMode {
    /// Nonlinear terms evaluated at the old state.
    Explicit,
    /// Nonlinear terms evaluated at `u^θ` by fixed-point iteration.
    #[default]
    Picard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub f: VectorField,
    pub h: VectorField,
    /// Forcing multiplied by `cos(ωt)` when set.
    pub modulation: Option<f64>,
    pub stress: StressModel,
    pub boundary: BoundaryModel,
    pub convection: bool,
    pub u0: VectorField,
    pub dt: f64,
    pub t_end: f64,
    pub theta: f64,
    pub mode: NonlinearMode,
    pub picard_tol: f64,
    pub picard_max: usize,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            nu: 1.0,
            alpha: 1.0,
            beta: 1.0,
            f: VectorField::Zero,
            h: VectorField::Zero,
            modulation: None,
            stress: StressModel::Linear,
            boundary: BoundaryModel::Linear,
            convection: true,
            u0: VectorField::Zero,
            dt: 0.01,
            t_end: 1.0,
            theta: 0.5,
            mode: NonlinearMode::Picard,
            picard_tol: 1e-10,
            picard_max: 50,
        }
    }
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{name} must be positive, got {v}")))
            }
        };
        pos("nu", self.nu)?;
        pos("alpha", self.alpha)?;
        pos("beta", self.beta)?;
        pos("dt", self.dt)?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidInput(format!("t_end must be non-negative, got {}", self.t_end)));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(Error::InvalidInput(format!("theta must lie in [0.5, 1], got {}", self.theta)));
        }
        if self.picard_max == 0 || !(self.picard_tol > 0.0) {
            return Err(Error::InvalidInput("picard_max and picard_tol must be positive".into()));
        }
        Ok(())
    }

    pub fn stress_law(&self) -> ConstitutiveLaw {
        ConstitutiveLaw::new(self.stress, self.nu)
    }

    pub fn boundary_law(&self) -> BoundaryLaw {
        BoundaryLaw::new(self.boundary, self.alpha)
    }

    /// Linear stress, linear friction, no convection.
    pub fn is_linear(&self) -> bool {
        self.stress == StressModel::Linear && self.boundary == BoundaryModel::Linear && !self.convection
    }

    pub fn num_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn is_time_dependent(&self) -> bool {
        self.modulation.is_some()
    }
}

/// Per-record energy diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    pub h_norm_sq: f64,
    pub du_sq: f64,
    /// `∫ S(Du):Du`
    pub stress_power: f64,
    /// `∮ s(u)·u`
    pub boundary_dissipation: f64,
    /// `⟨F(t), u⟩`
    pub work: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub diagnostics: Vec<Diagnostics>,
    pub dt: f64,
    pub theta: f64,
    /// Picard iterations used per step (0 in explicit mode).
    pub picard_iterations: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one record")
    }
}

/// Factorized θ-scheme for a fixed system and configuration.
pub struct Stepper<'a> {
    pub sys: &'a DiscreteSystem,
    pub cfg: ProblemConfig,
    pub law: ConstitutiveLaw,
    pub blaw: BoundaryLaw,
    /// `ν∫Du:Dφ + α∮u·φ`
    pub l: CsrMatrix,
    solver: SaddleSolver,
    load: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(sys: &'a DiscreteSystem, cfg: &ProblemConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.alpha != sys.alpha() || cfg.beta != sys.beta() {
            return Err(Error::InvalidInput("configuration alpha/beta differ from the assembled system".into()));
        }
        let l = sys.stokes_operator(cfg.nu);
        let s = sys.inner.m_h.linear_combination(1.0, &l, cfg.theta * cfg.dt);
        let solver = SaddleSolver::new(&s, &sys.b_div, "time step")?;
        let load = sys.assemble_forcing(&cfg.f, &cfg.h);
        Ok(Self { sys, cfg: cfg.clone(), law: cfg.stress_law(), blaw: cfg.boundary_law(), l, solver, load })
    }

    pub fn forcing(&self, t: f64) -> Vec<f64> {
        let m = self.modulation(t);
        self.load.iter().map(|v| m * v).collect()
    }

    fn modulation(&self, t: f64) -> f64 {
        self.cfg.modulation.map_or(1.0, |w| (w * t).cos())
    }

    pub fn has_explicit_terms(&self) -> bool {
        !self.cfg.is_linear()
    }

    /// `N(u,u) + ∫(S(Du) − νDu):Dφ + ∮(s(u) − αu)·φ`
    pub fn explicit_terms(&self, u: &[f64]) -> Vec<f64> {
        let sp = &self.sys.space;
        let mut e = vec![0.0; u.len()];
        if self.cfg.convection {
            e = sp.convection_apply(u, u);
        }
        if !self.law.is_linear() {
            let s = sp.stress_apply_shifted(&self.law, self.cfg.nu, u);
            crate::sparse::axpy(1.0, &s, &mut e);
        }
        if !self.blaw.is_linear() {
            let b = sp.boundary_apply_shifted(&self.blaw, self.cfg.alpha, u);
            crate::sparse::axpy(1.0, &b, &mut e);
        }
        e
    }

    /// Right-hand side without the explicit terms:
    /// `M u − (1−θ)dt L u + dt F^θ`.
    fn base_rhs(&self, u: &[f64], t: f64) -> Vec<f64> {
        let (th, dt) = (self.cfg.theta, self.cfg.dt);
        let mu = self.sys.inner.m_h.matvec(u);
        let lu = self.l.matvec(u);
        let mf = th * self.modulation(t + dt) + (1.0 - th) * self.modulation(t);
        mu.iter()
            .zip(&lu)
            .zip(&self.load)
            .map(|((m, l), f)| m - (1.0 - th) * dt * l + dt * mf * f)
            .collect()
    }

    /// Solves `S x = rhs` on the divergence-free subspace.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.solver.solve(rhs)
    }

    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.solver.solve_many(rhs)
    }

    /// One step from `(t, u)`; returns the new state and the Picard count.
    pub fn step(&self, u: &[f64], t: f64, index: usize) -> Result<(Vec<f64>, usize)> {
        let (th, dt) = (self.cfg.theta, self.cfg.dt);
        let base = self.base_rhs(u, t);
        let mut iterations = 0;
        let next = if !self.has_explicit_terms() {
            self.solver.solve(&base)
        } else {
            match self.cfg.mode {
                NonlinearMode::Explicit => {
                    let e = self.explicit_terms(u);
                    let rhs: Vec<f64> = base.iter().zip(&e).map(|(b, e)| b - dt * e).collect();
                    self.solver.solve(&rhs)
                }
                NonlinearMode::Picard => {
                    let mut cur = u.to_vec();
                    loop {
                        let mid: Vec<f64> = cur.iter().zip(u).map(|(a, b)| th * a + (1.0 - th) * b).collect();
                        let e = self.explicit_terms(&mid);
                        let rhs: Vec<f64> = base.iter().zip(&e).map(|(b, e)| b - dt * e).collect();
                        let new = self.solver.solve(&rhs);
                        iterations += 1;
                        let d: Vec<f64> = new.iter().zip(&cur).map(|(a, b)| a - b).collect();
                        let inc = self.sys.h_norm_sq(&d).sqrt() / self.sys.h_norm_sq(&new).sqrt().max(1.0);
                        cur = new;
                        if !inc.is_finite() {
                            return Err(Error::NonFinite { step: index });
                        }
                        if inc <= self.cfg.picard_tol {
                            break;
                        }
                        if iterations >= self.cfg.picard_max {
                            return Err(Error::Picard { step: index, iterations, increment: inc });
                        }
                    }
                    cur
                }
            }
        };
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: index });
        }
        Ok((next, iterations))
    }

    pub fn diagnostics(&self, u: &[f64], t: f64) -> Diagnostics {
        let sys = self.sys;
        let du_sq = sys.k_d.bilinear(u, u);
        let stress_power = if self.law.is_linear() {
            self.cfg.nu * du_sq
        } else {
            dot(&sys.space.stress_apply(&self.law, u), u)
        };
        let boundary_dissipation = if self.blaw.is_linear() {
            self.cfg.alpha * sys.m_boundary.bilinear(u, u)
        } else {
            dot(&sys.space.boundary_apply_shifted(&self.blaw, 0.0, u), u)
        };
        Diagnostics {
            h_norm_sq: sys.h_norm_sq(u),
            du_sq,
            stress_power,
            boundary_dissipation,
            work: self.modulation(t) * dot(&self.load, u),
        }
    }
}

/// `M_H`-orthogonal projection of a field onto the discrete divergence-free space.
pub fn project_initial(sys: &DiscreteSystem, field: &VectorField) -> Result<Vec<f64>> {
    if field.is_zero() {
        return Ok(vec![0.0; sys.ndof()]);
    }
    let rhs = sys.space.load(|x| field.eval(x), |x| field.eval(x), sys.beta());
    let solver = SaddleSolver::new(&sys.inner.m_h, &sys.b_div, "initial projection")?;
    Ok(solver.solve(&rhs))
}

/// One θ-step of the linear evolutionary Stokes system with forcing vectors
/// `f_old`, `f_new` at the two time levels.
pub fn step_stokes(
    sys: &DiscreteSystem,
    nu: f64,
    u: &[f64],
    dt: f64,
    theta: f64,
    f_old: &[f64],
    f_new: &[f64],
) -> Result<Vec<f64>> {
    if !(theta == 0.5 || theta == 1.0) {
        return Err(Error::InvalidInput(format!("theta must be 1 or 1/2, got {theta}")));
    }
    let l = sys.stokes_operator(nu);
    let s = sys.inner.m_h.linear_combination(1.0, &l, theta * dt);
    let solver = SaddleSolver::new(&s, &sys.b_div, "stokes step")?;
    let mu = sys.inner.m_h.matvec(u);
    let lu = l.matvec(u);
    let rhs: Vec<f64> = (0..u.len())
        .map(|i| mu[i] - (1.0 - theta) * dt * lu[i] + dt * (theta * f_new[i] + (1.0 - theta) * f_old[i]))
        .collect();
    let (x, _, rel) = solver.solve_with_pressure(&rhs);
    if rel > 1e-11 {
        return Err(Error::Numerical(format!("stokes step: linear residual {rel:e}")));
    }
    Ok(x)
}

/// Runs from the projected initial field in the configuration.
pub fn run_trajectory(sys: &DiscreteSystem, cfg: &ProblemConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let u0 = project_initial(sys, &cfg.u0)?;
    run_from(sys, cfg, u0)
}

/// Runs from a given coefficient vector.
pub fn run_from(sys: &DiscreteSystem, cfg: &ProblemConfig, u0: Vec<f64>) -> Result<Trajectory> {
    let stepper = Stepper::new(sys, cfg)?;
    run_with(&stepper, u0)
}

pub fn run_with(stepper: &Stepper<'_>, u0: Vec<f64>) -> Result<Trajectory> {
    let cfg = &stepper.cfg;
    let steps = cfg.num_steps();
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        diagnostics: Vec::with_capacity(steps + 1),
        dt: cfg.dt,
        theta: cfg.theta,
        picard_iterations: Vec::with_capacity(steps),
    };
    traj.diagnostics.push(stepper.diagnostics(&u0, 0.0));
    traj.times.push(0.0);
    traj.states.push(u0);
    for n in 0..steps {
        let t = n as f64 * cfg.dt;
        let (next, it) = stepper.step(traj.last_state(), t, n)?;
        let t1 = (n + 1) as f64 * cfg.dt;
        traj.diagnostics.push(stepper.diagnostics(&next, t1));
        traj.times.push(t1);
        traj.states.push(next);
        traj.picard_iterations.push(it);
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBudget {
    /// Residual of the energy equality over each step.
    pub per_step: Vec<f64>,
    /// Running sum, starting at 0 for the initial record.
    pub cumulative: Vec<f64>,
}

impl EnergyBudget {
    pub fn final_residual(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }
}

/// Residual of `½‖u(t)‖²_H + ∫∫S(Du):Du + ∫∮s(u)·u − ½‖u₀‖²_H − ∫⟨F,u⟩`,
/// with time integrals by the trapezoid rule for `θ = ½` and the right
/// endpoint rule otherwise.
pub fn energy_budget(traj: &Trajectory) -> EnergyBudget {
    let dt = traj.dt;
    let trapezoid = traj.theta == 0.5;
    let rate = |d: &Diagnostics| d.stress_power + d.boundary_dissipation - d.work;
    let mut per_step = Vec::with_capacity(traj.len().saturating_sub(1));
    let mut cumulative = vec![0.0];
    for w in traj.diagnostics.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let flux = if trapezoid { 0.5 * (rate(a) + rate(b)) } else { rate(b) };
        let r = 0.5 * (b.h_norm_sq - a.h_norm_sq) + dt * flux;
        per_step.push(r);
        cumulative.push(cumulative.last().unwrap() + r);
    }
    EnergyBudget { per_step, cumulative }
}
