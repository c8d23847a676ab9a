//! The dynamic-slip Stokes eigenbasis `(ω_k, φ)_V = μ_k (ω_k, φ)_H`, the
//! projector `P^N`, and spectral measurements on top of it.

use crate::assembly::DiscreteSystem;
use crate::eigen::{no_constraint, smallest_eigenpairs, EigenOptions};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone)]
pub struct StokesBasis {
    /// Non-decreasing.
    pub mu: Vec<f64>,
    /// `M_H`-orthonormal, discretely divergence free.
    pub omega: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

impl StokesBasis {
    pub fn count(&self) -> usize {
        self.mu.len()
    }

    /// Coefficients `(u, ω_k)_H`, `k < n`.
    pub fn coefficients(&self, sys: &DiscreteSystem, u: &[f64], n: usize) -> Vec<f64> {
        let mu = sys.inner.m_h.matvec(u);
        self.omega[..n].iter().map(|w| crate::sparse::dot(w, &mu)).collect()
    }

    /// `P^N u = Σ_{k≤N} (u, ω_k)_H ω_k`
    pub fn project(&self, sys: &DiscreteSystem, u: &[f64], n: usize) -> Result<Vec<f64>> {
        if n > self.count() {
            return Err(Error::InvalidInput(format!("N = {n} exceeds basis size {}", self.count())));
        }
        let c = self.coefficients(sys, u, n);
        Ok(self.combine(&c))
    }

    pub fn combine(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.omega.first().map_or(0, Vec::len)];
        for (ck, w) in c.iter().zip(&self.omega) {
            crate::sparse::axpy(*ck, w, &mut out);
        }
        out
    }

    /// Basis dump: header `count dim` as two little-endian u64, then `count`
    /// rows of `dim` little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let dim = self.omega.first().map_or(0, Vec::len);
        let mut out = Vec::with_capacity(16 + 8 * dim * self.count());
        out.extend_from_slice(&(self.count() as u64).to_le_bytes());
        out.extend_from_slice(&(dim as u64).to_le_bytes());
        for w in &self.omega {
            for x in w {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }
}

/// Smallest `nev` eigenpairs of `K_V ω = μ M_H ω` on the divergence-free subspace.
pub fn solve_eigenbasis(sys: &DiscreteSystem, nev: usize, seed: u64) -> Result<StokesBasis> {
    let mut opts = EigenOptions::new(nev);
    opts.seed = seed;
    solve_pencil(&sys.inner.k_v, &sys.inner.m_h, &sys.b_div, &opts)
}

/// Smallest eigenpairs of an arbitrary positive-definite pencil on `ker B`.
pub fn solve_pencil(a: &CsrMatrix, m: &CsrMatrix, b: &CsrMatrix, opts: &EigenOptions) -> Result<StokesBasis> {
    let pairs = smallest_eigenpairs(a, m, b, opts)?;
    if let Some(&mu1) = pairs.values.first() {
        if mu1 <= 0.0 {
            return Err(Error::Eigen(format!("non-positive first eigenvalue {mu1:e}")));
        }
    }
    Ok(StokesBasis { mu: pairs.values, omega: pairs.vectors, residuals: pairs.residuals })
}

/// `M_β = max{1, β/ℓ}`
pub fn m_beta(beta: f64, ell: f64) -> f64 {
    (beta / ell).max(1.0)
}

#[derive(Debug, Clone)]
pub struct SteklovFloor {
    pub m_beta: f64,
    /// `μ_j(β)·M_β / μ_j(proxy)`
    pub ratios: Vec<f64>,
    pub pass: bool,
}

/// Compares a basis against the proxy basis computed with `β = ℓ` on the same
/// mesh and `α`; min-max gives `μ_j(β) ≥ μ_j(proxy)/M_β`.
pub fn steklov_floor(
    sys: &DiscreteSystem,
    basis: &StokesBasis,
    proxy_sys: &DiscreteSystem,
    proxy: &StokesBasis,
) -> Result<SteklovFloor> {
    if sys.space.mesh != proxy_sys.space.mesh {
        return Err(Error::InvalidInput("steklov_floor: mesh mismatch".into()));
    }
    if sys.alpha() != proxy_sys.alpha() || proxy_sys.beta() != sys.ell() {
        return Err(Error::InvalidInput("steklov_floor: proxy must share alpha and use beta = ell".into()));
    }
    let mb = m_beta(sys.beta(), sys.ell());
    let ratios: Vec<f64> = basis.mu.iter().zip(&proxy.mu).map(|(m, p)| m * mb / p).collect();
    let pass = ratios.iter().all(|r| *r >= 1.0 - 1e-8);
    Ok(SteklovFloor { m_beta: mb, ratios, pass })
}

/// `C_K` in `‖∇u‖² + ℓ⁻²‖u‖² ≤ C_K(‖Du‖² + ℓ⁻¹‖u‖²_∂Ω)` over constrained fields:
/// the reciprocal of the smallest eigenvalue of the reversed pencil.
pub fn korn_constant(sys: &DiscreteSystem, seed: u64) -> Result<f64> {
    let ell = sys.ell();
    let rhs = sys.k_d.linear_combination(1.0, &sys.m_boundary, 1.0 / ell);
    let w = sys.grad.linear_combination(1.0, &sys.m_omega, 1.0 / (ell * ell));
    let mut opts = EigenOptions::new(1);
    opts.seed = seed;
    opts.tol = 1e-9;
    opts.guard = Some(24);
    let basis = solve_pencil(&rhs, &w, &no_constraint(sys.ndof()), &opts)?;
    Ok(1.0 / basis.mu[0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    LinearFit { slope, intercept, r_squared }
}

/// Linear fit of `μ_k` against `k` (1-based) over `k ∈ [from, to]`.
pub fn eigenvalue_fit(mu: &[f64], from: usize, to: usize) -> LinearFit {
    let ks: Vec<f64> = (from..=to).map(|k| k as f64).collect();
    linear_fit(&ks, &mu[from - 1..to])
}
