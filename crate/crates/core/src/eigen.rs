//! Generalized symmetric eigenproblems `A x = μ M x` restricted to `ker B`.
//!
//! Block Krylov iteration with shift-invert: the operator
//! `x ↦ (A − σM)⁻¹ M x` is applied through the saddle-point factorization, so
//! every iterate is discretely divergence free. Each sweep builds the space
//! `[X, OpX, Op²X]`, orthonormalizes it in the `M` metric and performs a
//! Rayleigh–Ritz step.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::{dot, norm2, CsrMatrix, SaddleSolver, TripletBuilder};

#[derive(Debug, Clone)]
pub struct EigenOptions {
    pub nev: usize,
    pub shift: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Extra block vectors beyond `nev`.
    pub guard: Option<usize>,
}

impl EigenOptions {
    pub fn new(nev: usize) -> Self {
        Self { nev, shift: 0.0, tol: 1e-10, max_iter: 60, seed: 0x5eed, guard: None }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPairs {
    /// Ascending.
    pub values: Vec<f64>,
    /// `M`-orthonormal.
    pub vectors: Vec<Vec<f64>>,
    /// `‖P_B(Ax − μMx)‖ / ((|μ| + |σ|)‖x‖)`
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// One row of zeros: no constraint beyond the pinned pressure.
pub fn no_constraint(n: usize) -> CsrMatrix {
    TripletBuilder::new(1, n).build()
}

/// Euclidean projection onto `ker B`.
pub struct KernelProjector {
    solver: SaddleSolver,
}

impl KernelProjector {
    pub fn new(b: &CsrMatrix) -> Result<Self> {
        let n = b.ncols();
        let mut t = TripletBuilder::new(n, n);
        for i in 0..n {
            t.push(i, i, 1.0);
        }
        Ok(Self { solver: SaddleSolver::new(&t.build(), b, "kernel projector")? })
    }

    pub fn project(&self, r: &[f64]) -> Vec<f64> {
        self.solver.solve(r)
    }
}

fn m_orthonormalize(m: &CsrMatrix, basis: &mut Vec<Vec<f64>>, candidates: Vec<Vec<f64>>) {
    for mut v in candidates {
        let before = m.bilinear(&v, &v).sqrt();
        if !(before.is_finite() && before > 0.0) {
            continue;
        }
        for _ in 0..2 {
            let mv = m.matvec(&v);
            let coefs: Vec<f64> = basis.iter().map(|q| dot(q, &mv)).collect();
            for (q, c) in basis.iter().zip(coefs) {
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let after = m.bilinear(&v, &v).sqrt();
        if after > 1e-10 * before {
            for vi in v.iter_mut() {
                *vi /= after;
            }
            basis.push(v);
        }
    }
}

/// Flips signs so the first entry with `|c| > 1e-8·max|c|` is positive.
pub fn normalize_sign(v: &mut [f64]) {
    let mx = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-8 * mx) {
        if *first < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
}

/// Smallest `nev` eigenpairs of `A x = μ M x` on `ker B`.
pub fn smallest_eigenpairs(a: &CsrMatrix, m: &CsrMatrix, b: &CsrMatrix, opts: &EigenOptions) -> Result<EigenPairs> {
    let n = a.nrows();
    if opts.nev == 0 {
        return Ok(EigenPairs { values: vec![], vectors: vec![], residuals: vec![], iterations: 0 });
    }
    let block = opts.nev + opts.guard.unwrap_or_else(|| (opts.nev / 2).max(10));
    let shifted = a.linear_combination(1.0, m, -opts.shift);
    let solver = SaddleSolver::new(&shifted, b, "shift-invert")?;
    let projector = KernelProjector::new(b)?;
    let op = |xs: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let rhs: Vec<Vec<f64>> = xs.iter().map(|x| m.matvec(x)).collect();
        solver.solve_many(&rhs)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start: Vec<Vec<f64>> = (0..block).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut basis = Vec::new();
    m_orthonormalize(m, &mut basis, op(&start));
    if basis.len() < opts.nev {
        return Err(Error::Eigen(format!("constrained space has dimension below {}", opts.nev)));
    }

    let mut worst = f64::NAN;
    for iter in 0..=opts.max_iter {
        let (values, vectors) = rayleigh_ritz(a, &basis, block)?;
        let av: Vec<Vec<f64>> = vectors.iter().map(|v| a.matvec(v)).collect();
        let mv: Vec<Vec<f64>> = vectors.iter().map(|v| m.matvec(v)).collect();
        let resid_vecs: Vec<Vec<f64>> = (0..vectors.len())
            .map(|i| av[i].iter().zip(&mv[i]).map(|(p, q)| p - values[i] * q).collect())
            .collect();
        let residuals: Vec<f64> = (0..opts.nev.min(vectors.len()))
            .map(|i| {
                let pr = projector.project(&resid_vecs[i]);
                norm2(&pr) / ((values[i].abs() + opts.shift.abs()).max(f64::MIN_POSITIVE) * norm2(&vectors[i]))
            })
            .collect();
        worst = residuals.iter().cloned().fold(0.0, f64::max);
        if residuals.len() == opts.nev && worst < opts.tol {
            let pairs = EigenPairs { values, vectors, residuals, iterations: iter };
            return Ok(finish(pairs, opts.nev, m));
        }
        // corrections solve (A − σM)w = r directly, so they carry no
        // cancellation error once the residual is small
        let w = solver.solve_many(&resid_vecs);
        let w2 = op(&w);
        basis = Vec::with_capacity(3 * vectors.len());
        m_orthonormalize(m, &mut basis, vectors);
        m_orthonormalize(m, &mut basis, w);
        m_orthonormalize(m, &mut basis, w2);
    }
    Err(Error::Eigen(format!("no convergence after {} sweeps (worst residual {worst:e})", opts.max_iter)))
}

/// Lowest `keep` Ritz pairs of `A` on an `M`-orthonormal basis.
fn rayleigh_ritz(a: &CsrMatrix, basis: &[Vec<f64>], keep: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let k = basis.len();
    let n = basis[0].len();
    let ab: Vec<Vec<f64>> = basis.iter().map(|q| a.matvec(q)).collect();
    let h = Mat::<f64>::from_fn(k, k, |i, j| 0.5 * (dot(&basis[i], &ab[j]) + dot(&basis[j], &ab[i])));
    let eig = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("dense Rayleigh–Ritz step failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
    let mut values = Vec::with_capacity(keep);
    let mut vectors = Vec::with_capacity(keep);
    for &c in order.iter().take(keep.min(k)) {
        let mut v = vec![0.0; n];
        for (r, q) in basis.iter().enumerate() {
            let coef = u[(r, c)];
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi += coef * qi;
            }
        }
        values.push(s[c]);
        vectors.push(v);
    }
    Ok((values, vectors))
}

fn finish(mut pairs: EigenPairs, nev: usize, m: &CsrMatrix) -> EigenPairs {
    pairs.values.truncate(nev);
    pairs.vectors.truncate(nev);
    for v in pairs.vectors.iter_mut() {
        let nrm = m.bilinear(v, v).sqrt();
        for x in v.iter_mut() {
            *x /= nrm;
        }
        normalize_sign(v);
    }
    pairs
}
