//! Compressed sparse row storage and the saddle-point factorization shared by
//! the eigensolver, the time steppers and the projections.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

/// Accumulates `(row, col, value)` entries; duplicates are summed on build.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    pub fn build(mut self) -> CsrMatrix {
        // sort keeps the summation order of duplicates deterministic
        self.entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut data: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &self.entries {
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, indptr, indices, data }
    }
}

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        TripletBuilder::new(nrows, ncols).build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.indptr[r], self.indptr[r + 1]);
        self.indices[s..e].iter().copied().zip(self.data[s..e].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            *yr = acc;
        }
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            for k in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[k]] += self.data[k] * xr;
            }
        }
        y
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                row += self.data[k] * y[self.indices[k]];
            }
            acc += xr * row;
        }
        acc
    }

    /// `a·self + b·other` on matching shapes.
    pub fn linear_combination(&self, a: f64, other: &CsrMatrix, b: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = TripletBuilder::new(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            t.push(r, c, a * v);
        }
        for (r, c, v) in other.triplets() {
            t.push(r, c, b * v);
        }
        t.build()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = TripletBuilder::new(self.ncols, self.nrows);
        for (r, c, v) in self.triplets() {
            t.push(c, r, v);
        }
        t.build()
    }

    /// `½(A + Aᵀ)`
    pub fn symmetric_part(&self) -> CsrMatrix {
        self.linear_combination(0.5, &self.transpose(), 0.5)
    }

    /// Largest `|A_ij − A_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
            / scale
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            d[r][c] += v;
        }
        d
    }

    /// Coordinate text export, one `row col value` line per entry.
    pub fn write_coordinates<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for (r, c, v) in self.triplets() {
            writeln!(w, "{r} {c} {v}")?;
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn lu_of(triplets: &[Triplet<usize, usize, f64>], n: usize, context: &'static str) -> Result<faer::sparse::linalg::solvers::Lu<usize, f64>> {
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, triplets)
        .map_err(|e| Error::Factorization { context, message: format!("{e:?}") })?;
    mat.sp_lu().map_err(|e| Error::Factorization { context, message: format!("{e:?}") })
}

/// LU factorization of a square sparse matrix.
pub struct SparseLu {
    n: usize,
    matrix: CsrMatrix,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(matrix: &CsrMatrix, context: &'static str) -> Result<Self> {
        assert_eq!(matrix.nrows, matrix.ncols);
        let triplets: Vec<_> = matrix.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        let lu = lu_of(&triplets, matrix.nrows, context)?;
        Ok(Self { n: matrix.nrows, matrix: matrix.clone(), lu })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let mut x: Vec<f64> = (0..self.n).map(|i| self.lu.solve(&b)[(i, 0)]).collect();
        // one step of iterative refinement
        let r: Vec<f64> = rhs.iter().zip(self.matrix.matvec(&x)).map(|(b, ax)| b - ax).collect();
        let rm = Mat::<f64>::from_fn(self.n, 1, |i, _| r[i]);
        let dx = self.lu.solve(&rm);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += dx[(i, 0)];
        }
        x
    }
}

/// Factorized saddle-point matrix
///
/// ```text
/// [ A  Bᵀ ] [u]   [f]
/// [ B  0  ] [p] = [0]
/// ```
///
/// with the first pressure row/column removed (the constant pressure mode is
/// in the kernel of `Bᵀ` for impermeable walls).
pub struct SaddleSolver {
    nu: usize,
    np: usize,
    a: CsrMatrix,
    b: CsrMatrix,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SaddleSolver {
    pub fn new(a: &CsrMatrix, b: &CsrMatrix, context: &'static str) -> Result<Self> {
        let nu = a.nrows;
        assert_eq!(b.ncols, nu, "constraint width mismatch");
        let np = b.nrows.saturating_sub(1);
        let mut trip: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(a.nnz() + 2 * b.nnz());
        for (r, c, v) in a.triplets() {
            trip.push(Triplet::new(r, c, v));
        }
        for (r, c, v) in b.triplets() {
            if r == 0 {
                continue;
            }
            let pr = nu + r - 1;
            trip.push(Triplet::new(pr, c, v));
            trip.push(Triplet::new(c, pr, v));
        }
        let lu = lu_of(&trip, nu + np, context)?;
        Ok(Self { nu, np, a: a.clone(), b: b.clone(), lu })
    }

    pub fn velocity_dim(&self) -> usize {
        self.nu
    }

    fn apply_block(&self, x: &[f64]) -> Vec<f64> {
        let (u, p) = x.split_at(self.nu);
        let mut y = vec![0.0; self.nu + self.np];
        let au = self.a.matvec(u);
        y[..self.nu].copy_from_slice(&au);
        let mut pfull = vec![0.0; self.np + 1];
        pfull[1..].copy_from_slice(p);
        let btp = self.b.matvec_transpose(&pfull);
        for (yi, v) in y[..self.nu].iter_mut().zip(btp) {
            *yi += v;
        }
        let bu = self.b.matvec(u);
        y[self.nu..].copy_from_slice(&bu[1..]);
        y
    }

    /// Solves for several right-hand sides at once; returns velocity parts.
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        if rhs.is_empty() {
            return Vec::new();
        }
        let n = self.nu + self.np;
        let k = rhs.len();
        let b = Mat::<f64>::from_fn(n, k, |i, j| if i < self.nu { rhs[j][i] } else { 0.0 });
        let x = self.lu.solve(&b);
        // one refinement sweep
        let mut resid = Mat::<f64>::zeros(n, k);
        let mut full: Vec<Vec<f64>> = Vec::with_capacity(k);
        for j in 0..k {
            let xj: Vec<f64> = (0..n).map(|i| x[(i, j)]).collect();
            let ax = self.apply_block(&xj);
            for i in 0..n {
                let bi = if i < self.nu { rhs[j][i] } else { 0.0 };
                resid[(i, j)] = bi - ax[i];
            }
            full.push(xj);
        }
        let dx = self.lu.solve(&resid);
        full.into_iter()
            .enumerate()
            .map(|(j, mut xj)| {
                for (i, xi) in xj.iter_mut().enumerate() {
                    *xi += dx[(i, j)];
                }
                xj.truncate(self.nu);
                xj
            })
            .collect()
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.solve_many(std::slice::from_ref(&rhs.to_vec())).pop().unwrap()
    }

    /// Solves and also returns the pressure (first entry pinned to zero) and
    /// the relative residual of the full block system.
    pub fn solve_with_pressure(&self, rhs: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let n = self.nu + self.np;
        let b = Mat::<f64>::from_fn(n, 1, |i, _| if i < self.nu { rhs[i] } else { 0.0 });
        let x0 = self.lu.solve(&b);
        let mut x: Vec<f64> = (0..n).map(|i| x0[(i, 0)]).collect();
        let ax = self.apply_block(&x);
        let r = Mat::<f64>::from_fn(n, 1, |i, _| (if i < self.nu { rhs[i] } else { 0.0 }) - ax[i]);
        let dx = self.lu.solve(&r);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += dx[(i, 0)];
        }
        let ax = self.apply_block(&x);
        let mut rn = 0.0;
        for i in 0..n {
            let bi = if i < self.nu { rhs[i] } else { 0.0 };
            rn += (bi - ax[i]).powi(2);
        }
        let rel = rn.sqrt() / norm2(rhs).max(f64::MIN_POSITIVE);
        let mut p = vec![0.0; self.np + 1];
        p[1..].copy_from_slice(&x[self.nu..]);
        x.truncate(self.nu);
        (x, p, rel)
    }
}
