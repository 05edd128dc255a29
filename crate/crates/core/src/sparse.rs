//! Compressed-row matrices and direct solvers.
//!
//! Factorizations run on a reverse Cuthill–McKee permuted profile (skyline)
//! without pivoting. The systems assembled by this crate are either symmetric
//! positive definite or have a positive definite symmetric part, so every
//! leading principal minor is nonzero.

use std::collections::VecDeque;
use std::io::Write;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row, column and value of one matrix contribution.
pub type Triplet<T> = (usize, usize, T);

/// Compressed sparse row matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T = f64> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SparseMatrix<T> {
    /// Builds a matrix by summing duplicates; the result does not depend on triplet order.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[Triplet<T>]) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::IndexOutOfRange { row: r, col: c, nrows, ncols });
            }
        }
        let mut t: Vec<Triplet<T>> = triplets.to_vec();
        // Total order on (row, col, value) so duplicate sums are order independent.
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.partial_cmp(&b.2).unwrap_or(std::cmp::Ordering::Equal)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values: Vec<T> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self { nrows, ncols, row_ptr, col_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (c, v) = self.row(i);
        match c.binary_search(&j) {
            Ok(k) => v[k],
            Err(_) => T::zero(),
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.nrows)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect()
    }

    /// Quadratic form `x^T A x`.
    pub fn quad_form(&self, x: &[T]) -> T {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| *a * *b).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                row[j] = a;
            }
        }
        d
    }

    /// Entries as triplets in row-major order.
    pub fn triplets(&self) -> Vec<Triplet<T>> {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            t.extend(c.iter().zip(v).map(|(&j, &a)| (i, j, a)));
        }
        t
    }

    /// `a * self + b * other`.
    pub fn linear_combination(&self, a: T, other: &Self, b: T) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::DimensionMismatch("matrix shapes differ".into()));
        }
        let mut t: Vec<Triplet<T>> = self.triplets().into_iter().map(|(i, j, v)| (i, j, a * v)).collect();
        t.extend(other.triplets().into_iter().map(|(i, j, v)| (i, j, b * v)));
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    /// Writes `nrows ncols nnz` followed by one `row col value` line per entry.
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, a) in c.iter().zip(v) {
                writeln!(w, "{i} {j} {a}")?;
            }
        }
        Ok(())
    }
}

/// Structural hint selecting the factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymmetryHint {
    Symmetric,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum FactorKind {
    Ldlt,
    Lu,
}

#[derive(Debug, Clone)]
pub struct LinearSolveReport<T = f64> {
    pub solution: Vec<T>,
    /// `||Ax - b|| / ||b||` from a post-solve multiply (absolute when `b = 0`).
    pub relative_residual: T,
    pub kind: FactorKind,
}

/// Reverse Cuthill–McKee permutation of the symmetrized pattern; `perm[new] = old`.
pub fn rcm_ordering<T: Real>(a: &SparseMatrix<T>) -> Vec<usize> {
    let n = a.nrows;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for &j in a.row(i).0 {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for l in adj.iter_mut() {
        l.sort_unstable();
        l.dedup();
    }
    let deg: Vec<usize> = adj.iter().map(|l| l.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (deg[i], i));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nb.sort_by_key(|&u| (deg[u], u));
            for u in nb {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// Profile factorization `P A P^T = L U` (or `L D L^T`).
struct Skyline<T> {
    perm: Vec<usize>,
    env: Vec<usize>,
    off: Vec<usize>,
    lower: Vec<T>,
    upper: Vec<T>,
    uoff: Vec<usize>,
}

impl<T: Real> Skyline<T> {
    fn factor(a: &SparseMatrix<T>, kind: FactorKind) -> Result<Self> {
        let n = a.nrows;
        let perm = rcm_ordering(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut env: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for &j in a.row(i).0 {
                let (r, c) = (inv[i], inv[j]);
                let (lo, hi) = if r < c { (r, c) } else { (c, r) };
                env[hi] = env[hi].min(lo);
            }
        }
        let mut off = vec![0usize; n + 1];
        let mut uoff = vec![0usize; n + 1];
        for k in 0..n {
            off[k + 1] = off[k] + (k - env[k]);
            uoff[k + 1] = uoff[k] + (k - env[k] + 1);
        }
        let mut lower = vec![T::zero(); off[n]];
        let mut upper = vec![T::zero(); uoff[n]];
        let mut scale = vec![T::zero(); n];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let (r, c) = (inv[i], inv[j]);
                scale[r] = scale[r].max(v.abs());
                if r > c {
                    lower[off[r] + c - env[r]] = v;
                } else {
                    upper[uoff[c] + r - env[c]] = v;
                }
            }
        }
        let tiny = T::epsilon() * T::lit(16.0);
        for k in 0..n {
            let ek = env[k];
            for j in ek..k {
                let ej = env[j];
                let m0 = ej.max(ek);
                // U[j][k]
                let lj = &lower[off[j] + m0 - ej..off[j] + j - ej];
                let uk = &upper[uoff[k] + m0 - ek..uoff[k] + j - ek];
                let s: T = lj.iter().zip(uk).map(|(&x, &y)| x * y).sum();
                upper[uoff[k] + j - ek] -= s;
                let ujj = upper[uoff[j] + j - ej];
                match kind {
                    FactorKind::Lu => {
                        let lk = &lower[off[k] + m0 - ek..off[k] + j - ek];
                        let uj = &upper[uoff[j] + m0 - ej..uoff[j] + j - ej];
                        let s: T = lk.iter().zip(uj).map(|(&x, &y)| x * y).sum();
                        let idx = off[k] + j - ek;
                        lower[idx] = (lower[idx] - s) / ujj;
                    }
                    FactorKind::Ldlt => {
                        lower[off[k] + j - ek] = upper[uoff[k] + j - ek] / ujj;
                    }
                }
            }
            let lk = &lower[off[k]..off[k] + k - ek];
            let uk = &upper[uoff[k]..uoff[k] + k - ek];
            let s: T = lk.iter().zip(uk).map(|(&x, &y)| x * y).sum();
            let d = upper[uoff[k] + k - ek] - s;
            if !d.is_finite() || d.abs() <= tiny * scale[k].max(T::min_positive_value()) {
                return Err(Error::SingularMatrix(perm[k]));
            }
            upper[uoff[k] + k - ek] = d;
        }
        Ok(Self { perm, env, off, lower, upper, uoff })
    }

    fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.perm.len();
        let mut y: Vec<T> = self.perm.iter().map(|&o| b[o]).collect();
        for k in 0..n {
            let ek = self.env[k];
            let l = &self.lower[self.off[k]..self.off[k] + k - ek];
            let s: T = l.iter().zip(&y[ek..k]).map(|(&a, &x)| a * x).sum();
            y[k] -= s;
        }
        for k in (0..n).rev() {
            let ek = self.env[k];
            let col = &self.upper[self.uoff[k]..self.uoff[k + 1]];
            let xk = y[k] / col[k - ek];
            y[k] = xk;
            for (m, &u) in (ek..k).zip(col) {
                y[m] -= u * xk;
            }
        }
        let mut x = vec![T::zero(); n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

fn residual<T: Real>(a: &SparseMatrix<T>, x: &[T], b: &[T]) -> Vec<T> {
    a.mul_vec(x).iter().zip(b).map(|(&ax, &bi)| bi - ax).collect()
}

/// Direct solve with one step of iterative refinement.
pub fn solve<T: Real>(a: &SparseMatrix<T>, b: &[T], hint: SymmetryHint) -> Result<LinearSolveReport<T>> {
    if a.nrows != a.ncols {
        return Err(Error::DimensionMismatch(format!("{}x{} matrix is not square", a.nrows, a.ncols)));
    }
    if b.len() != a.nrows {
        return Err(Error::DimensionMismatch(format!("rhs length {} for {} rows", b.len(), a.nrows)));
    }
    let kind = match hint {
        SymmetryHint::Symmetric => FactorKind::Ldlt,
        SymmetryHint::General => FactorKind::Lu,
    };
    let f = Skyline::factor(a, kind)?;
    let mut x = f.solve(b);
    let bn = norm(b);
    let denom = if bn > T::zero() { bn } else { T::one() };
    let mut r = residual(a, &x, b);
    if norm(&r) / denom > T::epsilon() * T::lit(64.0) {
        let dx = f.solve(&r);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
        r = residual(a, &x, b);
    }
    let relative_residual = norm(&r) / denom;
    if !relative_residual.is_finite() {
        return Err(Error::NonFinite("linear solve".into()));
    }
    Ok(LinearSolveReport { solution: x, relative_residual, kind })
}

/// Dense Gaussian elimination with partial pivoting.
pub fn dense_solve<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Result<Vec<T>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch("dense system is not square".into()));
    }
    let scale = a.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()));
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap()).unwrap();
        if a[piv][k].abs() <= T::epsilon() * scale {
            return Err(Error::SingularMatrix(k));
        }
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..n {
            let m = a[i][k] / a[k][k];
            if m != T::zero() {
                for j in k..n {
                    let akj = a[k][j];
                    a[i][j] -= m * akj;
                }
                let bk = b[k];
                b[i] -= m * bk;
            }
        }
    }
    for k in (0..n).rev() {
        let s: T = (k + 1..n).map(|j| a[k][j] * b[j]).sum();
        b[k] = (b[k] - s) / a[k][k];
    }
    Ok(b)
}
