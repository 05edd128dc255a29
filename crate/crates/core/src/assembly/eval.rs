//! Physical basis evaluation on one element.

use crate::error::Result;
use crate::geometry::{Element, GeometryPatch, QPoint};
use crate::quadrature::gauss_rule;
use crate::splines::TensorSplineSpace;

/// Where on an element the quadrature points live.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Volume,
    /// Spatial face at `xi_{d+1} = 0` (`false`) or `1` (`true`).
    TimeFace(bool),
}

/// Quadrature nodes of one element, lexicographic with the first direction fastest.
#[derive(Debug, Clone)]
pub struct ElementQuadrature {
    /// 1D nodes per direction.
    pub nodes: Vec<Vec<f64>>,
    pub points: Vec<QPoint>,
}

/// Physical derivatives of a scalar function at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhysValues {
    pub v: f64,
    pub dt: f64,
    pub grad: [f64; 2],
    pub lap: f64,
    pub grad_dt: [f64; 2],
}

impl PhysValues {
    pub fn axpy(&mut self, a: f64, o: &PhysValues) {
        self.v += a * o.v;
        self.dt += a * o.dt;
        self.lap += a * o.lap;
        for k in 0..2 {
            self.grad[k] += a * o.grad[k];
            self.grad_dt[k] += a * o.grad_dt[k];
        }
    }
}

/// Basis functions of one space evaluated on an element.
#[derive(Debug, Clone)]
pub struct SpaceEval {
    /// Global linear index of every local function.
    pub dofs: Vec<usize>,
    /// `basis[q][l]`.
    pub basis: Vec<Vec<PhysValues>>,
}

impl SpaceEval {
    /// Field value at quadrature point `q`.
    pub fn field(&self, q: usize, coeffs: &[f64]) -> PhysValues {
        let mut out = PhysValues::default();
        for (b, &g) in self.basis[q].iter().zip(&self.dofs) {
            out.axpy(coeffs[g], b);
        }
        out
    }
}

/// Parametric coordinates of a known singularity, per direction, for graded quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureFocus {
    pub coords: [Option<f64>; 3],
    /// Number of geometric halvings toward the focus.
    pub depth: usize,
}

impl QuadratureFocus {
    /// Whether `elem` lies within half an element width of the focus in every focused direction.
    pub fn applies(&self, elem: &Element, ndirs: usize) -> bool {
        (0..ndirs).any(|k| self.coords[k].is_some())
            && (0..ndirs).all(|k| match self.coords[k] {
                Some(c) => {
                    let w = elem.upper[k] - elem.lower[k];
                    elem.lower[k] - 0.5 * w <= c && c <= elem.upper[k] + 0.5 * w
                }
                None => true,
            })
    }
}

/// Breakpoints of `[a, b]` graded geometrically toward `c` (clamped into the interval).
fn graded_breaks(a: f64, b: f64, c: f64, depth: usize) -> Vec<f64> {
    let c = c.clamp(a, b);
    let mut br = vec![a, b, c];
    for k in 1..=depth {
        let s = (b - a) * 0.5f64.powi(k as i32);
        br.extend([c - s, c + s].into_iter().filter(|&x| a < x && x < b));
    }
    br.sort_by(f64::total_cmp);
    br.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (b - a));
    br
}

/// Quadrature points on an element with `n` Gauss points per direction.
pub fn element_quadrature(patch: &GeometryPatch, elem: &Element, n: usize, region: Region) -> Result<ElementQuadrature> {
    focused_quadrature(patch, elem, n, region, None)
}

/// As [`element_quadrature`], with composite rules graded toward `focus` on nearby elements.
pub fn focused_quadrature(
    patch: &GeometryPatch,
    elem: &Element,
    n: usize,
    region: Region,
    focus: Option<&QuadratureFocus>,
) -> Result<ElementQuadrature> {
    let d = patch.spatial_dim();
    let rule = gauss_rule::<f64>(n)?;
    let focus = focus.filter(|f| f.applies(elem, d + 1));
    let mut nodes = Vec::with_capacity(d + 1);
    let mut weights = Vec::with_capacity(d + 1);
    for dir in 0..=d {
        if dir == d {
            if let Region::TimeFace(upper) = region {
                let t = if upper { elem.upper[d] } else { elem.lower[d] };
                nodes.push(vec![t]);
                weights.push(vec![1.0]);
                continue;
            }
        }
        let (a, b) = (elem.lower[dir], elem.upper[dir]);
        match focus.and_then(|f| f.coords[dir].map(|c| (c, f.depth))) {
            Some((c, depth)) => {
                let (mut x, mut w) = (Vec::new(), Vec::new());
                for pair in graded_breaks(a, b, c, depth).windows(2) {
                    let (xs, ws) = rule.on_interval(pair[0], pair[1]);
                    x.extend(xs);
                    w.extend(ws);
                }
                nodes.push(x);
                weights.push(w);
            }
            None => {
                let (x, w) = rule.on_interval(a, b);
                nodes.push(x);
                weights.push(w);
            }
        }
    }
    let counts: Vec<usize> = nodes.iter().map(|v| v.len()).collect();
    let total: usize = counts.iter().product();
    let mut points = Vec::with_capacity(total);
    for q in 0..total {
        let mut r = q;
        let mut xi = [0.0; 3];
        let mut w = 1.0;
        for dir in 0..=d {
            let i = r % counts[dir];
            r /= counts[dir];
            xi[dir] = nodes[dir][i];
            w *= weights[dir][i];
        }
        points.push(patch.qpoint(xi, w, region == Region::Volume)?);
    }
    Ok(ElementQuadrature { nodes, points })
}

/// Evaluates every basis function of `space` supported on `elem` at the quadrature points.
pub fn eval_space(patch: &GeometryPatch, space: &TensorSplineSpace, elem: &Element, quad: &ElementQuadrature) -> SpaceEval {
    let d = patch.spatial_dim();
    let nd = d + 1;
    let tinv = 1.0 / patch.final_time();
    // Univariate derivatives per direction and node: uni[dir][node][order][a].
    let mut first = [0usize; 3];
    let mut uni: Vec<Vec<Vec<Vec<f64>>>> = Vec::with_capacity(nd);
    let mut npd = [1usize; 3];
    for dir in 0..nd {
        let kv = space.direction(dir);
        let span = kv.find_span(elem.midpoint(dir)).expect("element inside the unit cube");
        first[dir] = span - kv.degree();
        npd[dir] = kv.degree() + 1;
        uni.push(quad.nodes[dir].iter().map(|&x| kv.derivs_at_span(span, x, 2)).collect());
    }
    let nloc: usize = npd[..nd].iter().product();
    let mut dofs = Vec::with_capacity(nloc);
    let mut locs = Vec::with_capacity(nloc);
    for l in 0..nloc {
        let mut r = l;
        let mut a = [0usize; 3];
        let mut g = vec![0usize; nd];
        for dir in 0..nd {
            a[dir] = r % npd[dir];
            r /= npd[dir];
            g[dir] = first[dir] + a[dir];
        }
        dofs.push(space.linear_index(&g));
        locs.push(a);
    }
    let counts: Vec<usize> = quad.nodes.iter().map(|v| v.len()).collect();
    let mut basis = Vec::with_capacity(quad.points.len());
    for (q, qp) in quad.points.iter().enumerate() {
        let mut r = q;
        let mut node = [0usize; 3];
        for dir in 0..nd {
            node[dir] = r % counts[dir];
            r /= counts[dir];
        }
        // lap = sum_ij a_ij d_ij N - sum_m grad_m N * c_m, from J^{-T} and the map curvature.
        let mut amat = [[0.0; 2]; 2];
        for i in 0..d {
            for j in 0..d {
                amat[i][j] = (0..d).map(|k| qp.jinv[i][k] * qp.jinv[j][k]).sum();
            }
        }
        let mut cvec = [0.0; 2];
        for (m, c) in cvec.iter_mut().enumerate().take(d) {
            for i in 0..d {
                for j in 0..d {
                    *c += amat[i][j] * qp.hess[m][i][j];
                }
            }
        }
        let u: Vec<&Vec<Vec<f64>>> = (0..nd).map(|dir| &uni[dir][node[dir]]).collect();
        let mut row = Vec::with_capacity(nloc);
        for a in &locs {
            // Values, first and second derivatives per direction.
            let mut f0 = [1.0; 3];
            let mut f1 = [0.0; 3];
            let mut f2 = [0.0; 3];
            for dir in 0..nd {
                f0[dir] = u[dir][0][a[dir]];
                f1[dir] = u[dir][1][a[dir]];
                f2[dir] = u[dir][2][a[dir]];
            }
            let (n0, nt, ds, dst, dss) = if d == 1 {
                (f0[0] * f0[1], f0[0] * f1[1], [f1[0] * f0[1], 0.0], [f1[0] * f1[1], 0.0], [[f2[0] * f0[1], 0.0], [0.0, 0.0]])
            } else {
                let (x, y, t) = (0, 1, 2);
                (
                    f0[x] * f0[y] * f0[t],
                    f0[x] * f0[y] * f1[t],
                    [f1[x] * f0[y] * f0[t], f0[x] * f1[y] * f0[t]],
                    [f1[x] * f0[y] * f1[t], f0[x] * f1[y] * f1[t]],
                    [[f2[x] * f0[y] * f0[t], f1[x] * f1[y] * f0[t]], [f1[x] * f1[y] * f0[t], f0[x] * f2[y] * f0[t]]],
                )
            };
            let mut pv = PhysValues { v: n0, dt: nt * tinv, ..Default::default() };
            for k in 0..d {
                pv.grad[k] = (0..d).map(|i| qp.jinv[i][k] * ds[i]).sum();
                pv.grad_dt[k] = (0..d).map(|i| qp.jinv[i][k] * dst[i]).sum::<f64>() * tinv;
            }
            let mut lap = 0.0;
            for i in 0..d {
                lap -= pv.grad[i] * cvec[i];
                for j in 0..d {
                    lap += amat[i][j] * dss[i][j];
                }
            }
            pv.lap = lap;
            row.push(pv);
        }
        basis.push(row);
    }
    SpaceEval { dofs, basis }
}
