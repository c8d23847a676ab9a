//! The equation of variations along a trajectory, the quasidifferential
//! check, the N-trace `q(N)` and the Lieb–Thirring measurements.

use faer::{Mat, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::DiscreteSystem;
use crate::eigen::{smallest_eigenpairs, EigenOptions};
use crate::error::{Error, Result};
use crate::evolution::{run_from, NonlinearMode, Stepper, Trajectory};
use crate::sparse::{axpy, CsrMatrix, SaddleSolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Linearization {
    #[default]
    Exact,
    /// Drops the transport term `N(U,u)`; a deliberately wrong variant.
    DropTransport,
}

/// Jacobian of the nonlinear remainder `N(u,u) + (S(Du) − νDu) + (s(u) − αu)` at `u`.
pub fn remainder_jacobian(stepper: &Stepper<'_>, u: &[f64], variant: Linearization) -> CsrMatrix {
    let sp = &stepper.sys.space;
    let n = u.len();
    let mut j = CsrMatrix::zeros(n, n);
    if stepper.cfg.convection {
        j = sp.convection_jacobian(u, variant == Linearization::Exact);
    }
    if !stepper.law.is_linear() {
        j = j.linear_combination(1.0, &sp.stress_jacobian(&stepper.law, stepper.cfg.nu, u), 1.0);
    }
    if !stepper.blaw.is_linear() {
        j = j.linear_combination(1.0, &sp.boundary_jacobian(&stepper.blaw, stepper.cfg.alpha, u), 1.0);
    }
    j
}

/// `A(u)` with `M U' = −A(u) U`; the linearized operator is `−M_H⁻¹A(u)`.
pub fn linearized_operator(stepper: &Stepper<'_>, u: &[f64], variant: Linearization) -> CsrMatrix {
    stepper.l.linear_combination(1.0, &remainder_jacobian(stepper, u, variant), 1.0)
}

/// Linearized counterpart of step `n → n+1` of the base scheme.
pub fn linearized_step(
    stepper: &Stepper<'_>,
    traj: &Trajectory,
    n: usize,
    big_u: &[f64],
    variant: Linearization,
) -> Result<Vec<f64>> {
    if n + 1 >= traj.len() {
        return Err(Error::InvalidInput(format!("time index {n} outside trajectory of {} records", traj.len())));
    }
    let (th, dt) = (stepper.cfg.theta, stepper.cfg.dt);
    let m = &stepper.sys.inner.m_h;
    let mut rhs = m.matvec(big_u);
    if !stepper.has_explicit_terms() {
        axpy(-(1.0 - th) * dt, &stepper.l.matvec(big_u), &mut rhs);
        return Ok(stepper.solve(&rhs));
    }
    match stepper.cfg.mode {
        NonlinearMode::Explicit => {
            let a = linearized_operator(stepper, &traj.states[n], variant);
            axpy(-(1.0 - th) * dt, &stepper.l.matvec(big_u), &mut rhs);
            let j = a.linear_combination(1.0, &stepper.l, -1.0);
            axpy(-dt, &j.matvec(big_u), &mut rhs);
            Ok(stepper.solve(&rhs))
        }
        NonlinearMode::Picard => {
            let mid: Vec<f64> =
                traj.states[n + 1].iter().zip(&traj.states[n]).map(|(a, b)| th * a + (1.0 - th) * b).collect();
            let a = linearized_operator(stepper, &mid, variant);
            axpy(-(1.0 - th) * dt, &a.matvec(big_u), &mut rhs);
            let s = m.linear_combination(1.0, &a, th * dt);
            let solver = SaddleSolver::new(&s, &stepper.sys.b_div, "linearized step")?;
            Ok(solver.solve(&rhs))
        }
    }
}

/// `U(t_n)` for every record of the base trajectory.
pub fn linearized_flow(
    stepper: &Stepper<'_>,
    traj: &Trajectory,
    u0: Vec<f64>,
    variant: Linearization,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(traj.len());
    out.push(u0);
    for n in 0..traj.len() - 1 {
        let next = linearized_step(stepper, traj, n, out.last().unwrap(), variant)?;
        out.push(next);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct QuasiDiffReport {
    pub epsilons: Vec<f64>,
    /// `max_t ‖v(t) − u(t) − U(t)‖_H`
    pub residuals: Vec<f64>,
    /// Log–log slope over the residuals above the noise floor.
    pub slope: f64,
    pub used: usize,
}

pub const NOISE_FLOOR: f64 = 1e-12;

/// Runs `u₀` and `u₀ + εd` through the nonlinear scheme and compares with
/// the linearized flow started from `εd`.
pub fn quasidifferential_order(
    sys: &DiscreteSystem,
    cfg: &crate::evolution::ProblemConfig,
    u0: &[f64],
    direction: &[f64],
    epsilons: &[f64],
    variant: Linearization,
) -> Result<QuasiDiffReport> {
    if epsilons.len() < 3 || epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("need at least three decreasing epsilons".into()));
    }
    let stepper = Stepper::new(sys, cfg)?;
    let base = crate::evolution::run_with(&stepper, u0.to_vec())?;
    let dn = sys.h_norm_sq(direction).sqrt();
    let d: Vec<f64> = direction.iter().map(|x| x / dn).collect();
    let lin = linearized_flow(&stepper, &base, d.clone(), variant)?;
    let residuals: Vec<f64> = epsilons
        .par_iter()
        .map(|&eps| -> Result<f64> {
            let start: Vec<f64> = u0.iter().zip(&d).map(|(a, b)| a + eps * b).collect();
            let pert = crate::evolution::run_with(&stepper, start)?;
            let mut worst: f64 = 0.0;
            for ((v, u), lu) in pert.states.iter().zip(&base.states).zip(&lin) {
                let r: Vec<f64> = (0..v.len()).map(|i| v[i] - u[i] - eps * lu[i]).collect();
                worst = worst.max(sys.h_norm_sq(&r).sqrt());
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = epsilons
        .iter()
        .zip(&residuals)
        .filter(|(_, r)| **r > NOISE_FLOOR)
        .map(|(e, r)| (e.ln(), r.ln()))
        .unzip();
    let slope = if xs.len() >= 2 { crate::spectrum::linear_fit(&xs, &ys).slope } else { f64::NAN };
    Ok(QuasiDiffReport { epsilons: epsilons.to_vec(), residuals, slope, used: xs.len() })
}

/// Measured constants of `‖w(t)‖²_H ≤ C₁‖w(0)‖²_H` and
/// `∫₀ᵗ‖∇w‖² ≤ C₂‖w(0)‖²_H` for `w = v − u`, `v(0) = u(0) + εd`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferenceConstants {
    pub epsilon: f64,
    pub c_sup: f64,
    pub c_grad: f64,
}

pub fn difference_constants(
    sys: &DiscreteSystem,
    cfg: &crate::evolution::ProblemConfig,
    u0: &[f64],
    direction: &[f64],
    epsilons: &[f64],
) -> Result<Vec<DifferenceConstants>> {
    let base = run_from(sys, cfg, u0.to_vec())?;
    let dn = sys.h_norm_sq(direction).sqrt();
    epsilons
        .par_iter()
        .map(|&eps| {
            let start: Vec<f64> = u0.iter().zip(direction).map(|(a, b)| a + eps * b / dn).collect();
            let pert = run_from(sys, cfg, start)?;
            let w: Vec<Vec<f64>> = pert
                .states
                .iter()
                .zip(&base.states)
                .map(|(v, u)| v.iter().zip(u).map(|(a, b)| a - b).collect())
                .collect();
            let w0 = sys.h_norm_sq(&w[0]);
            let c_sup = w.iter().map(|x| sys.h_norm_sq(x)).fold(0.0, f64::max) / w0;
            let g: Vec<f64> = w.iter().map(|x| sys.grad.bilinear(x, x)).collect();
            let integral: f64 = g.windows(2).map(|p| 0.5 * cfg.dt * (p[0] + p[1])).sum();
            Ok(DifferenceConstants { epsilon: eps, c_sup, c_grad: integral / w0 })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TraceReport {
    pub sample_indices: Vec<usize>,
    /// Per sample, `Σ_{j≤N} (largest eigenvalues of the symmetrized operator)`
    /// for `N = 1..=n_max`.
    pub partial_sums: Vec<Vec<f64>>,
    /// Time average of `partial_sums`, `q[N−1] = q(N)`.
    pub q: Vec<f64>,
}

impl TraceReport {
    /// First `N` with `q(N) < 0`.
    pub fn n_star(&self) -> Option<usize> {
        self.q.iter().position(|v| *v < 0.0).map(|i| i + 1)
    }
}

/// Sample indices: every `stride` steps after discarding `discard` of the run.
pub fn sample_indices(traj: &Trajectory, stride: usize, discard: f64) -> Vec<usize> {
    let last = traj.len() - 1;
    let first = ((last as f64) * discard).ceil() as usize;
    let mut idx: Vec<usize> = (first..=last).step_by(stride.max(1)).collect();
    if idx.is_empty() {
        idx.push(last);
    }
    idx
}

/// Smallest `n` eigenvalues of `(sym A(u), M_H)` on `ker B`, with vectors.
pub fn symmetrized_spectrum(
    stepper: &Stepper<'_>,
    u: &[f64],
    n: usize,
    variant: Linearization,
    seed: u64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let a = linearized_operator(stepper, u, variant).symmetric_part();
    let (g, v) = stepper.sys.space.pointwise_maxima(u);
    let coercivity = stepper.law.c1.min(stepper.cfg.nu);
    let (m, b) = (&stepper.sys.inner.m_h, &stepper.sys.b_div);
    // the a priori shift lies far below the spectrum for strong flows, so a
    // loose pass locates the bottom first
    let mut opts = EigenOptions::new(n);
    opts.shift = -(g + 2.0 * v * v / coercivity) - 1.0;
    opts.seed = seed;
    opts.tol = 1e-4;
    let rough = smallest_eigenpairs(&a, m, b, &opts)?;
    let (lo, hi) = (rough.values[0], *rough.values.last().unwrap());
    let mut shift = lo - 0.1 * (hi - lo) - 1e-3 * (lo.abs() + opts.shift.abs()) - 1.0;
    for _ in 0..4 {
        let mut opts = EigenOptions::new(n);
        opts.shift = shift;
        opts.seed = seed;
        let pairs = smallest_eigenpairs(&a, m, b, &opts)?;
        if pairs.values.first().is_none_or(|v| *v > shift) {
            return Ok((pairs.values, pairs.vectors));
        }
        shift = 2.0 * pairs.values[0] - 1.0;
    }
    Err(Error::Eigen("symmetrized spectrum: shift below the spectrum not found".into()))
}

/// `q(N)` for `N = 1..=n_max` as the time average of the extremal traces.
pub fn trace_qn(
    stepper: &Stepper<'_>,
    traj: &Trajectory,
    n_max: usize,
    stride: usize,
    discard: f64,
    seed: u64,
) -> Result<TraceReport> {
    let sample_indices = sample_indices(traj, stride, discard);
    let partial_sums: Vec<Vec<f64>> = sample_indices
        .par_iter()
        .map(|&i| {
            let (vals, _) = symmetrized_spectrum(stepper, &traj.states[i], n_max, Linearization::Exact, seed)?;
            let mut acc = 0.0;
            Ok(vals
                .iter()
                .map(|v| {
                    acc -= v;
                    acc
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let count = partial_sums.len() as f64;
    let q = (0..n_max).map(|k| partial_sums.iter().map(|s| s[k]).sum::<f64>() / count).collect();
    Ok(TraceReport { sample_indices, partial_sums, q })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubOrthoVerdict {
    /// Largest eigenvalue of the interior `L²` Gram matrix.
    pub max_eigenvalue: f64,
    pub pass: bool,
}

pub fn gram_interior(sys: &DiscreteSystem, family: &[Vec<f64>]) -> Mat<f64> {
    let mf: Vec<Vec<f64>> = family.iter().map(|f| sys.m_omega.matvec(f)).collect();
    Mat::from_fn(family.len(), family.len(), |i, j| crate::sparse::dot(&family[i], &mf[j]))
}

pub fn check_suborthonormal(sys: &DiscreteSystem, family: &[Vec<f64>]) -> Result<SubOrthoVerdict> {
    if family.is_empty() {
        return Ok(SubOrthoVerdict { max_eigenvalue: 0.0, pass: true });
    }
    let g = gram_interior(sys, family);
    let eig = g
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("Gram eigenvalues: {e:?}")))?;
    let s = eig.S().column_vector();
    let max_eigenvalue = (0..s.nrows()).map(|i| s[i]).fold(f64::NEG_INFINITY, f64::max);
    Ok(SubOrthoVerdict { max_eigenvalue, pass: max_eigenvalue <= 1.0 + 1e-10 })
}

/// `∫ρ² / Σ(‖∇φ_j‖² + ℓ⁻²‖φ_j‖²)` with `ρ = Σ|φ_j|²`; at unit diameter
/// the lower-order weight is `1/diam Ω`.
pub fn lieb_thirring_ratio(sys: &DiscreteSystem, family: &[Vec<f64>]) -> Result<f64> {
    if !check_suborthonormal(sys, family)?.pass {
        return Err(Error::InvalidInput("family is not suborthonormal in the interior L² product".into()));
    }
    let sp = &sys.space;
    let mut lhs = 0.0;
    for e in 0..sp.elements.len() {
        let values: Vec<_> = family.iter().map(|f| sp.element_values(e, f)).collect();
        for q in 0..values[0].len() {
            let rho: f64 = values.iter().map(|v| v[q].u[0].powi(2) + v[q].u[1].powi(2)).sum();
            lhs += values[0][q].w * rho * rho;
        }
    }
    let ell = sys.ell();
    let rhs: f64 = family.iter().map(|f| sys.grad.bilinear(f, f) + sys.m_omega.bilinear(f, f) / (ell * ell)).sum();
    Ok(lhs / rhs)
}
