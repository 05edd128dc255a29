//! Univariate B-spline kernels on open knot vectors and their tensor products.
//!
//! Spans are half-open `[u_i, u_{i+1})` except the last nonempty span, which is
//! closed at the right end point so that `x = 1` is evaluable.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sparse::dense_solve;

/// Highest polynomial degree supported by the kernels.
pub const MAX_DEGREE: usize = 7;
/// Highest derivative order returned by the evaluators.
pub const MAX_DERIVATIVE: usize = 2;

/// Nondecreasing open knot vector on `[0, 1]` together with its degree.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector<T = f64> {
    knots: Vec<T>,
    degree: usize,
}

impl<T: Real> KnotVector<T> {
    /// Validates and wraps a knot sequence.
    pub fn new(knots: Vec<T>, degree: usize) -> Result<Self> {
        if degree == 0 || degree > MAX_DEGREE {
            return Err(Error::UnsupportedDegree(degree));
        }
        let m = knots.len();
        if m < 2 * (degree + 1) {
            return Err(Error::InvalidKnots(format!(
                "{m} knots too few for degree {degree}"
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidKnots("non-finite knot".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidKnots("knots must be nondecreasing".into()));
        }
        let (zero, one) = (T::zero(), T::one());
        if knots[..=degree].iter().any(|&k| k != zero) || knots[m - degree - 1..].iter().any(|&k| k != one) {
            return Err(Error::InvalidKnots(format!(
                "open knot vector on [0,1] needs {} repeated end knots",
                degree + 1
            )));
        }
        let kv = Self { knots, degree };
        for (v, mult) in kv.interior_multiplicities() {
            if mult > degree {
                return Err(Error::MultiplicityOverflow {
                    value: v.to_f64_lossy(),
                    multiplicity: mult,
                    max: degree,
                });
            }
        }
        Ok(kv)
    }

    /// Open knot vector with `spans` equal spans.
    pub fn uniform(degree: usize, spans: usize) -> Result<Self> {
        if spans == 0 {
            return Err(Error::InvalidKnots("at least one span required".into()));
        }
        let mut k = vec![T::zero(); degree + 1];
        let n = T::from_usize(spans).unwrap();
        for i in 1..spans {
            k.push(T::from_usize(i).unwrap() / n);
        }
        k.extend(std::iter::repeat(T::one()).take(degree + 1));
        Self::new(k, degree)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    /// Number of basis functions `n = m - p - 1`.
    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    fn interior_multiplicities(&self) -> Vec<(T, usize)> {
        let p = self.degree;
        let inner = &self.knots[p + 1..self.knots.len() - p - 1];
        let mut out: Vec<(T, usize)> = Vec::new();
        for &k in inner {
            match out.last_mut() {
                Some((v, c)) if *v == k => *c += 1,
                _ => out.push((k, 1)),
            }
        }
        out
    }

    /// Distinct knot values, including both end points.
    pub fn breakpoints(&self) -> Vec<T> {
        let mut b = self.knots.clone();
        b.dedup();
        b
    }

    /// Number of nonempty spans.
    pub fn num_spans(&self) -> usize {
        self.breakpoints().len() - 1
    }

    /// Nonempty spans as `(lower, upper)` pairs.
    pub fn span_intervals(&self) -> Vec<(T, T)> {
        self.breakpoints().windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Knot-span index `i` with `u_i <= x < u_{i+1}` (closed at `x = 1`).
    pub fn find_span(&self, x: T) -> Result<usize> {
        let n = self.num_basis();
        let u = &self.knots;
        if !(x >= u[0] && x <= u[n + self.degree]) {
            return Err(Error::OutOfDomain(x.to_f64_lossy()));
        }
        if x >= u[n] {
            return Ok(n - 1);
        }
        let (mut lo, mut hi) = (self.degree, n);
        let mut mid = (lo + hi) / 2;
        while x < u[mid] || x >= u[mid + 1] {
            if x < u[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
            mid = (lo + hi) / 2;
        }
        Ok(mid)
    }

    /// The `p + 1` nonzero basis values at `x` for a known span.
    pub fn basis_at_span(&self, span: usize, x: T) -> Vec<T> {
        let p = self.degree;
        let u = &self.knots;
        let mut n = vec![T::zero(); p + 1];
        let mut left = vec![T::zero(); p + 1];
        let mut right = vec![T::zero(); p + 1];
        n[0] = T::one();
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = T::zero();
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        n
    }

    /// Nonzero basis values at `x`; returns the index of the first one.
    pub fn eval_basis(&self, x: T) -> Result<(usize, Vec<T>)> {
        let span = self.find_span(x)?;
        Ok((span - self.degree, self.basis_at_span(span, x)))
    }

    /// Derivatives `ders[k][j]` of order `k <= order` at a known span.
    pub fn derivs_at_span(&self, span: usize, x: T, order: usize) -> Vec<Vec<T>> {
        let p = self.degree;
        let u = &self.knots;
        let mut ndu = vec![vec![T::zero(); p + 1]; p + 1];
        let mut left = vec![T::zero(); p + 1];
        let mut right = vec![T::zero(); p + 1];
        ndu[0][0] = T::one();
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = T::zero();
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![T::zero(); p + 1]; order + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let top = order.min(p);
        let mut a = vec![vec![T::zero(); p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = T::one();
            for k in 1..=top {
                let mut d = T::zero();
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut fac = T::from_usize(p).unwrap();
        for k in 1..=top {
            for v in ders[k].iter_mut() {
                *v *= fac;
            }
            fac *= T::from_usize(p - k).unwrap();
        }
        ders
    }

    /// Nonzero basis derivatives up to `order` at `x`.
    pub fn eval_derivs(&self, x: T, order: usize) -> Result<(usize, Vec<Vec<T>>)> {
        if order > MAX_DERIVATIVE {
            return Err(Error::UnsupportedDerivative(order));
        }
        let span = self.find_span(x)?;
        Ok((span - self.degree, self.derivs_at_span(span, x, order)))
    }

    /// Inserts the midpoint of every nonempty span.
    pub fn dyadic_refine(&self) -> Self {
        let two = T::lit(2.0);
        let mids: Vec<T> = self.span_intervals().iter().map(|&(a, b)| (a + b) / two).collect();
        self.insert_knots(&mids).expect("midpoints are simple interior knots")
    }

    /// Inserts the given interior knot values.
    pub fn insert_knots(&self, values: &[T]) -> Result<Self> {
        for &v in values {
            if !(v > T::zero() && v < T::one()) {
                return Err(Error::InvalidKnots(format!(
                    "inserted knot {} not interior",
                    v.to_f64_lossy()
                )));
            }
        }
        let mut k = self.knots.clone();
        k.extend_from_slice(values);
        k.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Self::new(k, self.degree)
    }

    /// Same breakpoints with a different degree (interior knots kept simple).
    pub fn with_degree(&self, degree: usize) -> Result<Self> {
        let b = self.breakpoints();
        let mut k = vec![T::zero(); degree + 1];
        k.extend_from_slice(&b[1..b.len() - 1]);
        k.extend(std::iter::repeat(T::one()).take(degree + 1));
        Self::new(k, degree)
    }

    /// Greville abscissae, one per basis function.
    pub fn greville(&self) -> Vec<T> {
        let p = self.degree;
        let pf = T::from_usize(p).unwrap();
        (0..self.num_basis())
            .map(|i| self.knots[i + 1..=i + p].iter().copied().sum::<T>() / pf)
            .collect()
    }

    /// Dense collocation matrix `C[g][i] = B_i(x_g)`.
    pub fn collocation(&self, points: &[T]) -> Result<Vec<Vec<T>>> {
        let n = self.num_basis();
        let mut c = vec![vec![T::zero(); n]; points.len()];
        for (g, &x) in points.iter().enumerate() {
            let (first, vals) = self.eval_basis(x)?;
            for (j, v) in vals.into_iter().enumerate() {
                c[g][first + j] = v;
            }
        }
        Ok(c)
    }

    /// Coefficients of the spline interpolating `values` at the Greville points.
    pub fn interpolate(&self, values: &[T]) -> Result<Vec<T>> {
        let c = self.collocation(&self.greville())?;
        dense_solve(c, values.to_vec())
    }

    /// Evaluates `sum_i c_i B_i(x)`.
    pub fn eval_spline(&self, coeffs: &[T], x: T) -> Result<T> {
        let (first, vals) = self.eval_basis(x)?;
        Ok(vals.iter().enumerate().map(|(j, &v)| v * coeffs[first + j]).sum())
    }
}

/// Local tensor-product basis data at one parametric point.
#[derive(Debug, Clone)]
pub struct TensorBasisValues<T = f64> {
    /// Index of the first nonzero function per direction.
    pub first: Vec<usize>,
    /// Univariate derivatives per direction: `ders[dir][k][j]`.
    pub ders: Vec<Vec<Vec<T>>>,
}

impl<T: Real> TensorBasisValues<T> {
    /// Number of local tensor functions, `prod (p_dir + 1)`.
    pub fn local_count(&self) -> usize {
        self.ders.iter().map(|d| d[0].len()).product()
    }

    /// Local multi-index for a flat local index (first direction fastest).
    pub fn local_multi(&self, mut l: usize) -> Vec<usize> {
        self.ders
            .iter()
            .map(|d| {
                let n = d[0].len();
                let a = l % n;
                l /= n;
                a
            })
            .collect()
    }

    /// Mixed derivative of a local function; `orders[dir]` is the order per direction.
    pub fn derivative(&self, local: &[usize], orders: &[usize]) -> T {
        let mut v = T::one();
        for (dir, (&a, &k)) in local.iter().zip(orders).enumerate() {
            v *= self.ders[dir][k][a];
        }
        v
    }
}

/// Tensor product of univariate spline spaces, one knot vector per direction.
///
/// Basis functions are indexed lexicographically with the first direction fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSplineSpace<T = f64> {
    dirs: Vec<KnotVector<T>>,
}

impl<T: Real> TensorSplineSpace<T> {
    pub fn new(dirs: Vec<KnotVector<T>>) -> Result<Self> {
        if dirs.is_empty() || dirs.len() > 3 {
            return Err(Error::InvalidKnots(format!("{} directions unsupported", dirs.len())));
        }
        Ok(Self { dirs })
    }

    /// Same degree and `2^levels` uniform spans in every direction.
    pub fn uniform(ndirs: usize, degree: usize, levels: u32) -> Result<Self> {
        let kv = KnotVector::uniform(degree, 1usize << levels)?;
        Self::new(vec![kv; ndirs])
    }

    pub fn directions(&self) -> &[KnotVector<T>] {
        &self.dirs
    }

    pub fn direction(&self, i: usize) -> &KnotVector<T> {
        &self.dirs[i]
    }

    pub fn ndirs(&self) -> usize {
        self.dirs.len()
    }

    /// Degree of the first direction; trial spaces share one degree.
    pub fn degree(&self) -> usize {
        self.dirs[0].degree()
    }

    pub fn max_degree(&self) -> usize {
        self.dirs.iter().map(|k| k.degree()).max().unwrap()
    }

    pub fn num_basis_per_dir(&self) -> Vec<usize> {
        self.dirs.iter().map(|k| k.num_basis()).collect()
    }

    pub fn dim(&self) -> usize {
        self.dirs.iter().map(|k| k.num_basis()).product()
    }

    pub fn linear_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (k, &m) in self.dirs.iter().zip(multi) {
            idx += m * stride;
            stride *= k.num_basis();
        }
        idx
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        self.dirs
            .iter()
            .map(|k| {
                let n = k.num_basis();
                let m = idx % n;
                idx /= n;
                m
            })
            .collect()
    }

    /// Local basis derivatives up to `order` at a parametric point.
    pub fn eval_tensor_basis(&self, xi: &[T], order: usize) -> Result<TensorBasisValues<T>> {
        if xi.len() != self.dirs.len() {
            return Err(Error::DimensionMismatch(format!(
                "point of length {} for {}-variate space",
                xi.len(),
                self.dirs.len()
            )));
        }
        let mut first = Vec::with_capacity(xi.len());
        let mut ders = Vec::with_capacity(xi.len());
        for (k, &x) in self.dirs.iter().zip(xi) {
            let (f, d) = k.eval_derivs(x, order)?;
            first.push(f);
            ders.push(d);
        }
        Ok(TensorBasisValues { first, ders })
    }

    /// Applies `f` to every direction's knot vector.
    pub fn map_dirs(&self, f: impl Fn(&KnotVector<T>) -> KnotVector<T>) -> Self {
        Self { dirs: self.dirs.iter().map(f).collect() }
    }

    /// Uniform dyadic refinement in every direction.
    pub fn dyadic_refine(&self) -> Self {
        self.map_dirs(|k| k.dyadic_refine())
    }

    /// Same breakpoints, new common degree.
    pub fn with_degree(&self, degree: usize) -> Result<Self> {
        Self::new(self.dirs.iter().map(|k| k.with_degree(degree)).collect::<Result<_>>()?)
    }

    /// Evaluates a scalar spline with coefficients `coeffs` at `xi`.
    pub fn eval_spline(&self, coeffs: &[T], xi: &[T]) -> Result<T> {
        let tb = self.eval_tensor_basis(xi, 0)?;
        let zeros = vec![0; self.ndirs()];
        let mut s = T::zero();
        for l in 0..tb.local_count() {
            let a = tb.local_multi(l);
            let g: Vec<usize> = a.iter().zip(&tb.first).map(|(x, f)| x + f).collect();
            s += coeffs[self.linear_index(&g)] * tb.derivative(&a, &zeros);
        }
        Ok(s)
    }

    /// Tensor interpolation at the Greville grid; `values` lexicographic, first direction fastest.
    pub fn interpolate(&self, values: &[T]) -> Result<Vec<T>> {
        tensor_solve(&self.dirs, values)
    }

    /// Greville grid points in lexicographic order.
    pub fn greville_grid(&self) -> Vec<Vec<T>> {
        let g: Vec<Vec<T>> = self.dirs.iter().map(|k| k.greville()).collect();
        (0..self.dim())
            .map(|i| self.multi_index(i).iter().enumerate().map(|(d, &m)| g[d][m]).collect())
            .collect()
    }
}

/// Solves the Kronecker collocation system direction by direction.
pub(crate) fn tensor_solve<T: Real>(dirs: &[KnotVector<T>], values: &[T]) -> Result<Vec<T>> {
    let sizes: Vec<usize> = dirs.iter().map(|k| k.num_basis()).collect();
    let total: usize = sizes.iter().product();
    if values.len() != total {
        return Err(Error::DimensionMismatch(format!("{} values for {} points", values.len(), total)));
    }
    let mut data = values.to_vec();
    let mut stride = 1;
    for (d, kv) in dirs.iter().enumerate() {
        let n = sizes[d];
        let c = kv.collocation(&kv.greville())?;
        let outer = total / (n * stride);
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                let rhs: Vec<T> = (0..n).map(|i| data[base + i * stride]).collect();
                let sol = dense_solve(c.clone(), rhs)?;
                for (i, v) in sol.into_iter().enumerate() {
                    data[base + i * stride] = v;
                }
            }
        }
        stride *= n;
    }
    Ok(data)
}
