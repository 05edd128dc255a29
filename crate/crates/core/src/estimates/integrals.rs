use rayon::prelude::*;

use crate::assembly::{eval_space, focused_quadrature, PhysValues, ProblemData, Region, SplineField, SplineVectorField};
use crate::error::{Error, Result};
use crate::geometry::{GeometryPatch, SpaceTimeMesh};

/// Inputs shared by every estimate on one mesh.
#[derive(Clone, Copy)]
pub struct EstimateContext<'a> {
    pub patch: &'a GeometryPatch,
    /// Mesh of `v`; the flux and `w` spaces must be coarser.
    pub mesh: &'a SpaceTimeMesh,
    pub data: &'a dyn ProblemData,
    /// Gauss points per direction.
    pub nq: usize,
}

/// Residuals at one quadrature point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ResidualSample {
    /// `f - dt v + div y`.
    pub r_eq: f64,
    /// `y - grad v`.
    pub r_d: [f64; 2],
    pub div_r_d: f64,
    pub dt_r_d: [f64; 2],
    /// `div y + f - dt w`.
    pub r_eq_ii: f64,
    /// `y + grad w - 2 grad v`.
    pub r_d_ii: [f64; 2],
}

/// Residuals from point values of `v`, the `d` flux components and `w`.
pub fn residual_sample(d: usize, f: f64, v: &PhysValues, y: &[PhysValues], w: &PhysValues) -> ResidualSample {
    let mut s = ResidualSample::default();
    let div_y: f64 = (0..d).map(|k| y[k].grad[k]).sum();
    s.r_eq = f - v.dt + div_y;
    s.div_r_d = div_y - v.lap;
    s.r_eq_ii = div_y + f - w.dt;
    for k in 0..d {
        s.r_d[k] = y[k].v - v.grad[k];
        s.dt_r_d[k] = y[k].dt - v.grad_dt[k];
        s.r_d_ii[k] = y[k].v + w.grad[k] - 2.0 * v.grad[k];
    }
    s
}

/// Squared residual norms restricted to one element.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ElementIntegrals {
    pub rd2: f64,
    pub req2: f64,
    pub div_rd2: f64,
    pub dt_rd2: f64,
    /// `||y - grad v||^2` on `Sigma_T`.
    pub rd2_final: f64,
    pub rd2_ii: f64,
    pub req2_ii: f64,
    /// `||w - v||^2` on `Sigma_T`.
    pub eta2_final: f64,
    /// `(grad v, grad(w - v)) + (dt v - f, w - v)`.
    pub f_term: f64,
    /// `||u_0 - v||^2 - 2 (w - v, u_0 - v)` on `Sigma_0`.
    pub sigma0_ii: f64,
    /// `||Lap v + f - dt v||^2`.
    pub strong2: f64,
    /// `||grad(u_0 - v)||^2` on `Sigma_0`.
    pub initial2: f64,
}

fn sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// One pass over the mesh computing all residual integrals per element.
///
/// A missing flux is treated as `y = 0`, a missing `w` as `w = v`.
pub fn integrate_residuals(
    ctx: &EstimateContext,
    v: &SplineField,
    y: Option<&SplineVectorField>,
    w: Option<&SplineField>,
) -> Result<Vec<ElementIntegrals>> {
    let patch = ctx.patch;
    let d = patch.spatial_dim();
    if let Some(y) = y {
        if y.components.len() < d {
            return Err(Error::DimensionMismatch("flux has fewer than d components".into()));
        }
    }
    let data = ctx.data;
    let focus = data.quadrature_focus();
    ctx.mesh
        .elements
        .par_iter()
        .map(|e| -> Result<ElementIntegrals> {
            let mut out = ElementIntegrals::default();
            let mut regions = vec![Region::Volume];
            if e.upper[d] == 1.0 {
                regions.push(Region::TimeFace(true));
            }
            if e.lower[d] == 0.0 {
                regions.push(Region::TimeFace(false));
            }
            for region in regions {
                let quad = focused_quadrature(patch, e, ctx.nq, region, focus.as_ref())?;
                let sv = eval_space(patch, &v.space, e, &quad);
                let sy = y.map(|y| eval_space(patch, &y.space, e, &quad));
                let sw = w.map(|w| eval_space(patch, &w.space, e, &quad));
                for (q, qp) in quad.points.iter().enumerate() {
                    let x = &qp.x[..d];
                    let wt = qp.weight;
                    let vv = sv.field(q, &v.coeffs);
                    let yv: Vec<PhysValues> = match (&sy, y) {
                        (Some(s), Some(y)) => (0..d).map(|k| s.field(q, &y.components[k])).collect(),
                        _ => vec![PhysValues::default(); d],
                    };
                    let wv = match (&sw, w) {
                        (Some(s), Some(w)) => s.field(q, &w.coeffs),
                        _ => vv,
                    };
                    match region {
                        Region::Volume => {
                            let f = data.source(x, qp.t);
                            let r = residual_sample(d, f, &vv, &yv, &wv);
                            out.rd2 += wt * sq(&r.r_d[..d]);
                            out.req2 += wt * r.r_eq * r.r_eq;
                            out.div_rd2 += wt * r.div_r_d * r.div_r_d;
                            out.dt_rd2 += wt * sq(&r.dt_r_d[..d]);
                            out.rd2_ii += wt * sq(&r.r_d_ii[..d]);
                            out.req2_ii += wt * r.r_eq_ii * r.r_eq_ii;
                            let eta = wv.v - vv.v;
                            let ge: f64 = (0..d).map(|k| vv.grad[k] * (wv.grad[k] - vv.grad[k])).sum();
                            out.f_term += wt * (ge + (vv.dt - f) * eta);
                            let s = vv.lap + f - vv.dt;
                            out.strong2 += wt * s * s;
                        }
                        Region::TimeFace(true) => {
                            let r = residual_sample(d, 0.0, &vv, &yv, &wv);
                            out.rd2_final += wt * sq(&r.r_d[..d]);
                            out.eta2_final += wt * (wv.v - vv.v).powi(2);
                        }
                        Region::TimeFace(false) => {
                            let u0 = data.initial(x);
                            let g0 = data.initial_gradient(x);
                            let e0 = u0 - vv.v;
                            out.sigma0_ii += wt * (e0 * e0 - 2.0 * (wv.v - vv.v) * e0);
                            out.initial2 += wt * (0..d).map(|k| (g0[k] - vv.grad[k]).powi(2)).sum::<f64>();
                        }
                    }
                }
            }
            Ok(out)
        })
        .collect()
}
