//! NURBS maps of space-time cylinders `Q = Omega x (0, T)` and the parametric mesh.
//!
//! The time coordinate is always `t = T * xi_{d+1}`; the spatial coordinates are a
//! NURBS map of the spatial parameters only.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::quadrature::gauss_rule;
use crate::scalar::Real;
use crate::splines::{KnotVector, TensorSplineSpace};

/// Classification of a parametric face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    /// Lateral boundary `Sigma` (Dirichlet).
    Lateral,
    /// Initial face `Sigma_0`.
    Initial,
    /// Final face `Sigma_T` (free).
    Final,
}

/// Spatial part of the map evaluated at one point, with up to second derivatives.
#[derive(Debug, Clone, Copy)]
pub struct SpatialMap<T> {
    pub x: [T; 2],
    /// `jac[k][a] = d x_k / d xi_a`.
    pub jac: [[T; 2]; 2],
    /// `hess[k][a][b] = d^2 x_k / d xi_a d xi_b`.
    pub hess: [[[T; 2]; 2]; 2],
}

/// Full space-time Jacobian at a point.
#[derive(Debug, Clone)]
pub struct Jacobian<T> {
    /// `(d+1) x (d+1)` matrix `J[k][a] = d Phi_k / d xi_a`.
    pub matrix: Vec<Vec<T>>,
    pub det: T,
    /// Transposed inverse of the spatial block.
    pub spatial_inv_t: [[T; 2]; 2],
}

/// Geometry data at a quadrature point.
#[derive(Debug, Clone, Copy)]
pub struct QPoint<T = f64> {
    pub xi: [T; 3],
    pub x: [T; 2],
    pub t: T,
    pub jac: [[T; 2]; 2],
    /// `jinv[a][k] = d xi_a / d x_k`.
    pub jinv: [[T; 2]; 2],
    pub hess: [[[T; 2]; 2]; 2],
    /// Spatial Jacobian determinant.
    pub det_space: T,
    /// Quadrature weight times the relevant measure.
    pub weight: T,
}

/// NURBS space-time cylinder patch.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryPatch<T = f64> {
    d: usize,
    final_time: T,
    space: TensorSplineSpace<T>,
    points: Vec<Vec<T>>,
    weights: Vec<T>,
    spatial: TensorSplineSpace<T>,
    spatial_points: Vec<[T; 2]>,
    spatial_weights: Vec<T>,
}

impl<T: Real> GeometryPatch<T> {
    /// Builds a patch from a `(d+1)`-variate space, control points (space then time) and weights.
    pub fn new(d: usize, final_time: T, space: TensorSplineSpace<T>, points: Vec<Vec<T>>, weights: Vec<T>) -> Result<Self> {
        if !(1..=2).contains(&d) {
            return Err(Error::InvalidGeometry(format!("spatial dimension {d} unsupported")));
        }
        if !(final_time > T::zero()) || !final_time.is_finite() {
            return Err(Error::InvalidGeometry("final time must be positive".into()));
        }
        if space.ndirs() != d + 1 {
            return Err(Error::InvalidGeometry("space must have d+1 directions".into()));
        }
        let n = space.dim();
        if points.len() != n || weights.len() != n || points.iter().any(|p| p.len() != d + 1) {
            return Err(Error::InvalidGeometry("control net size mismatch".into()));
        }
        if weights.iter().any(|&w| !(w > T::zero())) {
            return Err(Error::InvalidGeometry("weights must be positive".into()));
        }
        let time = space.direction(d);
        if time.degree() != 1 || time.num_basis() != 2 {
            return Err(Error::InvalidGeometry("time direction must be linear with one span".into()));
        }
        let spatial = TensorSplineSpace::new(space.directions()[..d].to_vec())?;
        let ns = spatial.dim();
        let mut spatial_points = Vec::with_capacity(ns);
        let mut spatial_weights = Vec::with_capacity(ns);
        for i in 0..ns {
            let (p0, p1) = (&points[i], &points[i + ns]);
            if p0[d] != T::zero() || p1[d] != final_time || p0[..d] != p1[..d] || weights[i] != weights[i + ns] {
                return Err(Error::InvalidGeometry("patch is not a space-time cylinder".into()));
            }
            let mut x = [T::zero(); 2];
            x[..d].copy_from_slice(&p0[..d]);
            spatial_points.push(x);
            spatial_weights.push(weights[i]);
        }
        Ok(Self { d, final_time, space, points, weights, spatial, spatial_points, spatial_weights })
    }

    /// Builds a cylinder from a spatial NURBS patch.
    pub fn cylinder(spatial: TensorSplineSpace<T>, points: Vec<[T; 2]>, weights: Vec<T>, final_time: T) -> Result<Self> {
        let d = spatial.ndirs();
        let mut dirs = spatial.directions().to_vec();
        dirs.push(KnotVector::uniform(1, 1)?);
        let space = TensorSplineSpace::new(dirs)?;
        let mut full = Vec::with_capacity(2 * points.len());
        for layer in [T::zero(), final_time] {
            for p in &points {
                let mut v = p[..d].to_vec();
                v.push(layer);
                full.push(v);
            }
        }
        let w = weights.iter().chain(weights.iter()).copied().collect();
        Self::new(d, final_time, space, full, w)
    }

    pub fn spatial_dim(&self) -> usize {
        self.d
    }

    pub fn final_time(&self) -> T {
        self.final_time
    }

    pub fn space(&self) -> &TensorSplineSpace<T> {
        &self.space
    }

    pub fn control_points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Face `xi_dir = side` classification.
    pub fn face_kind(&self, dir: usize, upper: bool) -> FaceKind {
        match (dir == self.d, upper) {
            (true, false) => FaceKind::Initial,
            (true, true) => FaceKind::Final,
            _ => FaceKind::Lateral,
        }
    }

    /// Spatial map and its first two derivatives at spatial parameters `xi`.
    pub fn eval_spatial(&self, xi: &[T]) -> Result<SpatialMap<T>> {
        let d = self.d;
        let tb = self.spatial.eval_tensor_basis(&xi[..d], 2)?;
        let z = T::zero();
        let mut a = [z; 2];
        let mut da = [[z; 2]; 2];
        let mut dda = [[[z; 2]; 2]; 2];
        let mut w = z;
        let mut dw = [z; 2];
        let mut ddw = [[z; 2]; 2];
        let mut ord = vec![0usize; d];
        for l in 0..tb.local_count() {
            let loc = tb.local_multi(l);
            let g: Vec<usize> = loc.iter().zip(&tb.first).map(|(a, f)| a + f).collect();
            let gi = self.spatial.linear_index(&g);
            let (p, wt) = (self.spatial_points[gi], self.spatial_weights[gi]);
            ord.iter_mut().for_each(|o| *o = 0);
            let n0 = tb.derivative(&loc, &ord) * wt;
            w += n0;
            for k in 0..d {
                a[k] += n0 * p[k];
            }
            for i in 0..d {
                ord.iter_mut().for_each(|o| *o = 0);
                ord[i] = 1;
                let ni = tb.derivative(&loc, &ord) * wt;
                dw[i] += ni;
                for k in 0..d {
                    da[k][i] += ni * p[k];
                }
                for j in 0..d {
                    ord.iter_mut().for_each(|o| *o = 0);
                    ord[i] += 1;
                    ord[j] += 1;
                    let nij = tb.derivative(&loc, &ord) * wt;
                    ddw[i][j] += nij;
                    for k in 0..d {
                        dda[k][i][j] += nij * p[k];
                    }
                }
            }
        }
        let mut x = [z; 2];
        let mut jac = [[z; 2]; 2];
        let mut hess = [[[z; 2]; 2]; 2];
        for k in 0..d {
            x[k] = a[k] / w;
            for i in 0..d {
                jac[k][i] = (da[k][i] - x[k] * dw[i]) / w;
            }
            for i in 0..d {
                for j in 0..d {
                    hess[k][i][j] = (dda[k][i][j] - jac[k][i] * dw[j] - jac[k][j] * dw[i] - x[k] * ddw[i][j]) / w;
                }
            }
        }
        Ok(SpatialMap { x, jac, hess })
    }

    /// Physical point `Phi(xi)` (space then time).
    pub fn map(&self, xi: &[T]) -> Result<Vec<T>> {
        let s = self.eval_spatial(xi)?;
        let mut out = s.x[..self.d].to_vec();
        out.push(self.final_time * xi[self.d]);
        Ok(out)
    }

    /// Jacobian of `Phi`; fails when the determinant is not positive.
    pub fn jacobian_at(&self, xi: &[T]) -> Result<Jacobian<T>> {
        let d = self.d;
        let s = self.eval_spatial(xi)?;
        let (det_s, inv) = invert(d, &s.jac);
        let det = det_s * self.final_time;
        if !(det > T::zero()) {
            return Err(Error::SingularJacobian(xi.iter().map(|v| v.to_f64_lossy()).collect()));
        }
        let mut m = vec![vec![T::zero(); d + 1]; d + 1];
        for k in 0..d {
            for a in 0..d {
                m[k][a] = s.jac[k][a];
            }
        }
        m[d][d] = self.final_time;
        let mut inv_t = [[T::zero(); 2]; 2];
        for k in 0..d {
            for a in 0..d {
                inv_t[k][a] = inv[a][k];
            }
        }
        Ok(Jacobian { matrix: m, det, spatial_inv_t: inv_t })
    }

    /// Quadrature point cache at `xi` with raw parametric `weight`.
    ///
    /// `measure` selects the volume (`true`) or spatial face measure.
    pub fn qpoint(&self, xi: [T; 3], weight: T, volume: bool) -> Result<QPoint<T>> {
        let d = self.d;
        let s = self.eval_spatial(&xi[..d])?;
        let (det_s, jinv) = invert(d, &s.jac);
        if !(det_s > T::zero()) {
            return Err(Error::SingularJacobian(xi[..=d].iter().map(|v| v.to_f64_lossy()).collect()));
        }
        let measure = if volume { det_s * self.final_time } else { det_s };
        Ok(QPoint {
            xi,
            x: s.x,
            t: self.final_time * xi[d],
            jac: s.jac,
            jinv,
            hess: s.hess,
            det_space: det_s,
            weight: weight * measure,
        })
    }

    /// Spectral norm of the full Jacobian at `xi`.
    pub fn jacobian_norm(&self, xi: &[T]) -> Result<T> {
        let s = self.eval_spatial(xi)?;
        let ns = match self.d {
            1 => s.jac[0][0].abs(),
            _ => {
                let j = s.jac;
                let a = j[0][0] * j[0][0] + j[1][0] * j[1][0];
                let c = j[0][1] * j[0][1] + j[1][1] * j[1][1];
                let b = j[0][0] * j[0][1] + j[1][0] * j[1][1];
                let two = T::lit(2.0);
                ((a + c) / two + (((a - c) / two).powi(2) + b * b).sqrt()).sqrt()
            }
        };
        Ok(ns.max(self.final_time))
    }

    /// Plain-text serialization; see [`GeometryPatch::from_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "stiga-patch 1");
        let _ = writeln!(s, "dim {}", self.d);
        let _ = writeln!(s, "final_time {}", self.final_time);
        let degs: Vec<String> = self.space.directions().iter().map(|k| k.degree().to_string()).collect();
        let _ = writeln!(s, "degrees {}", degs.join(" "));
        for (i, k) in self.space.directions().iter().enumerate() {
            let ks: Vec<String> = k.knots().iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "knots {} {} {}", i, ks.len(), ks.join(" "));
        }
        let _ = writeln!(s, "control_points {}", self.points.len());
        for (p, w) in self.points.iter().zip(&self.weights) {
            let cs: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{} {}", cs.join(" "), w);
        }
        s
    }

    /// Parses the format written by [`GeometryPatch::to_text`].
    ///
    /// ```text
    /// stiga-patch 1
    /// dim <d>
    /// final_time <T>
    /// degrees <p_1> ... <p_{d+1}>
    /// knots <dir> <count> <k_0> ... (one line per direction)
    /// control_points <n>
    /// <x_1> ... <x_d> <t> <weight>   (n lines, first direction fastest)
    /// ```
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let mut next = |key: &str| -> Result<(usize, Vec<String>)> {
            let (i, l) = lines.next().ok_or(Error::Format { line: 0, msg: format!("missing {key}") })?;
            let toks: Vec<String> = l.split_whitespace().map(String::from).collect();
            if !key.is_empty() && toks[0] != key {
                return Err(Error::Format { line: i + 1, msg: format!("expected {key}, found {}", toks[0]) });
            }
            Ok((i + 1, toks))
        };
        fn num<V: std::str::FromStr>(line: usize, s: &str) -> Result<V> {
            s.parse().map_err(|_| Error::Format { line, msg: format!("bad number {s}") })
        }
        let (l, h) = next("stiga-patch")?;
        if h.get(1).map(String::as_str) != Some("1") {
            return Err(Error::Format { line: l, msg: "unsupported version".into() });
        }
        let (l, t) = next("dim")?;
        let d: usize = num(l, t.get(1).ok_or(Error::Format { line: l, msg: "dim".into() })?)?;
        let (l, t) = next("final_time")?;
        let final_time: T = num(l, &t[1])?;
        let (l, t) = next("degrees")?;
        let degrees: Vec<usize> = t[1..].iter().map(|s| num(l, s)).collect::<Result<_>>()?;
        if degrees.len() != d + 1 {
            return Err(Error::Format { line: l, msg: "degree count".into() });
        }
        let mut dirs = Vec::new();
        for (dir, &p) in degrees.iter().enumerate() {
            let (l, t) = next("knots")?;
            let idx: usize = num(l, &t[1])?;
            let cnt: usize = num(l, &t[2])?;
            if idx != dir || t.len() != cnt + 3 {
                return Err(Error::Format { line: l, msg: "knot line".into() });
            }
            let k: Vec<T> = t[3..].iter().map(|s| num(l, s)).collect::<Result<_>>()?;
            dirs.push(KnotVector::new(k, p)?);
        }
        let space = TensorSplineSpace::new(dirs)?;
        let (l, t) = next("control_points")?;
        let n: usize = num(l, &t[1])?;
        let mut points = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for _ in 0..n {
            let (l, t) = next("")?;
            if t.len() != d + 2 {
                return Err(Error::Format { line: l, msg: "control point arity".into() });
            }
            let v: Vec<T> = t.iter().map(|s| num(l, s)).collect::<Result<_>>()?;
            weights.push(v[d + 1]);
            points.push(v[..=d].to_vec());
        }
        Self::new(d, final_time, space, points, weights)
    }
}

fn invert<T: Real>(d: usize, j: &[[T; 2]; 2]) -> (T, [[T; 2]; 2]) {
    let z = T::zero();
    if d == 1 {
        return (j[0][0], [[T::one() / j[0][0], z], [z, z]]);
    }
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    (det, [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]])
}

/// Identity map of the unit cube with time scaled to `[0, T]`.
pub fn unit_cylinder<T: Real>(d: usize, final_time: T) -> Result<GeometryPatch<T>> {
    if !(1..=2).contains(&d) {
        return Err(Error::InvalidGeometry(format!("spatial dimension {d} unsupported")));
    }
    let lin = KnotVector::uniform(1, 1)?;
    let spatial = TensorSplineSpace::new(vec![lin; d])?;
    let (z, o) = (T::zero(), T::one());
    let points = match d {
        1 => vec![[z, z], [o, z]],
        _ => vec![[z, z], [o, z], [z, o], [o, o]],
    };
    let w = vec![o; points.len()];
    GeometryPatch::cylinder(spatial, points, w, final_time)
}

/// Exact rational quarter annulus `r_in < |x| < r_out`, `x_1, x_2 > 0`, times `(0, T)`.
///
/// First parameter is radial (degree 1), second angular (degree 2).
pub fn quarter_annulus_cylinder<T: Real>(r_in: T, r_out: T, final_time: T) -> Result<GeometryPatch<T>> {
    if !(r_in > T::zero() && r_out > r_in) {
        return Err(Error::InvalidGeometry("need 0 < r_in < r_out".into()));
    }
    let radial = KnotVector::uniform(1, 1)?;
    let angular = KnotVector::uniform(2, 1)?;
    let spatial = TensorSplineSpace::new(vec![radial, angular])?;
    let (z, o) = (T::zero(), T::one());
    let circle = [[o, z], [o, o], [z, o]];
    let cw = [o, T::lit(0.5).sqrt(), o];
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (c, &w) in circle.iter().zip(&cw) {
        for r in [r_in, r_out] {
            points.push([r * c[0], r * c[1]]);
            weights.push(w);
        }
    }
    GeometryPatch::cylinder(spatial, points, weights, final_time)
}

/// One parametric element.
#[derive(Debug, Clone)]
pub struct Element<T = f64> {
    pub index: usize,
    /// Span index per direction into the mesh breakpoint lists.
    pub spans: [usize; 3],
    pub lower: [T; 3],
    pub upper: [T; 3],
    /// Physical size `h_K`.
    pub h: T,
}

impl<T: Real> Element<T> {
    pub fn midpoint(&self, dir: usize) -> T {
        (self.lower[dir] + self.upper[dir]) / T::lit(2.0)
    }

    pub fn contains(&self, p: &[T]) -> bool {
        p.iter().enumerate().all(|(i, &v)| v >= self.lower[i] && v <= self.upper[i])
    }
}

/// Cartesian element grid of a trial space.
#[derive(Debug, Clone)]
pub struct SpaceTimeMesh<T = f64> {
    pub ndirs: usize,
    pub breakpoints: Vec<Vec<T>>,
    pub elements: Vec<Element<T>>,
    pub h: T,
}

impl<T: Real> SpaceTimeMesh<T> {
    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn spans_per_dir(&self) -> Vec<usize> {
        self.breakpoints.iter().map(|b| b.len() - 1).collect()
    }

    /// Element containing the parametric point (first match in index order).
    pub fn locate(&self, xi: &[T]) -> Option<usize> {
        self.elements.iter().position(|e| e.contains(xi))
    }

    pub fn element_index(&self, spans: &[usize]) -> usize {
        let n = self.spans_per_dir();
        let mut idx = 0;
        let mut stride = 1;
        for (s, m) in spans.iter().zip(n) {
            idx += s * stride;
            stride *= m;
        }
        idx
    }
}

/// One element per product of nonempty spans; `h_K` by Gauss-point Jacobian norms.
pub fn build_mesh<T: Real>(patch: &GeometryPatch<T>, knots: &[KnotVector<T>]) -> Result<SpaceTimeMesh<T>> {
    let nd = patch.spatial_dim() + 1;
    if knots.len() != nd {
        return Err(Error::DimensionMismatch("one knot vector per direction".into()));
    }
    let breakpoints: Vec<Vec<T>> = knots.iter().map(|k| k.breakpoints()).collect();
    let nq = knots.iter().map(|k| k.degree()).max().unwrap() + 1;
    let rule = gauss_rule::<T>(nq.min(crate::quadrature::MAX_POINTS))?;
    let counts: Vec<usize> = breakpoints.iter().map(|b| b.len() - 1).collect();
    let total: usize = counts.iter().product();
    let mut elements = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let mut spans = [0usize; 3];
        let mut lower = [T::zero(); 3];
        let mut upper = [T::zero(); 3];
        for dir in 0..nd {
            spans[dir] = rem % counts[dir];
            rem /= counts[dir];
            lower[dir] = breakpoints[dir][spans[dir]];
            upper[dir] = breakpoints[dir][spans[dir] + 1];
        }
        let hat = (0..nd).map(|i| upper[i] - lower[i]).fold(T::zero(), T::max);
        let mut jmax = T::zero();
        let d = nd - 1;
        let pts: Vec<Vec<T>> = (0..d).map(|i| rule.on_interval(lower[i], upper[i]).0).collect();
        let npts: usize = (0..d).map(|_| rule.len()).product();
        for q in 0..npts {
            let mut r = q;
            let xi: Vec<T> = (0..d)
                .map(|i| {
                    let v = pts[i][r % rule.len()];
                    r /= rule.len();
                    v
                })
                .collect();
            jmax = jmax.max(patch.jacobian_norm(&xi)?);
        }
        elements.push(Element { index: idx, spans, lower, upper, h: jmax * hat });
    }
    let h = elements.iter().map(|e| e.h).fold(T::zero(), T::max);
    Ok(SpaceTimeMesh { ndirs: nd, breakpoints, elements, h })
}
