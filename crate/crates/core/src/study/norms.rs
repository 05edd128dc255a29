use rayon::prelude::*;
use serde::Serialize;

use super::ExactSolution;
use crate::assembly::{eval_space, focused_quadrature, QuadratureFocus, Region, SplineField};
use crate::error::Result;
use crate::geometry::{GeometryPatch, SpaceTimeMesh};

/// Squared error components of `e = u - v`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ErrorNorms {
    pub grad2: f64,
    pub dt2: f64,
    pub lap2: f64,
    /// `||e||^2` on `Sigma_T`.
    pub final2: f64,
    /// `||grad e||^2` on `Sigma_T`.
    pub final_grad2: f64,
    pub delta: f64,
    /// `||grad e||^2_K`.
    #[serde(skip)]
    pub grad2_elements: Vec<f64>,
}

impl ErrorNorms {
    /// `||grad_x e||_Q`.
    pub fn grad(&self) -> f64 {
        self.grad2.sqrt()
    }

    /// `||e||_{Sigma_T}`.
    pub fn final_l2(&self) -> f64 {
        self.final2.sqrt()
    }

    /// `|||e||| = (||grad e||^2 + ||e||^2_{Sigma_T})^{1/2}`.
    pub fn energy(&self) -> f64 {
        (self.grad2 + self.final2).sqrt()
    }

    /// `|||e|||_{s,h}`.
    pub fn sh(&self) -> f64 {
        (self.grad2 + self.delta * self.dt2 + self.final2 + self.delta * self.final_grad2).sqrt()
    }

    /// Left side of the second stabilized bound, with `(delta/2) ||grad e||^2_{Sigma_T}`.
    pub fn sh_ii(&self) -> f64 {
        (self.grad2 + self.delta * self.dt2 + self.final2 + 0.5 * self.delta * self.final_grad2).sqrt()
    }

    /// `|||e|||_L = (||Lap e||^2 + ||dt e||^2 + ||grad e||^2_{Sigma_T})^{1/2}`.
    pub fn l(&self) -> f64 {
        (self.lap2 + self.dt2 + self.final_grad2).sqrt()
    }
}

/// Error norms by element Gauss quadrature with `nq` points per direction.
///
/// Elements near `focus` use composite rules graded toward it.
pub fn exact_error_norms(
    patch: &GeometryPatch,
    mesh: &SpaceTimeMesh,
    v: &SplineField,
    exact: &dyn ExactSolution,
    delta: f64,
    nq: usize,
    focus: Option<&QuadratureFocus>,
) -> Result<ErrorNorms> {
    let d = patch.spatial_dim();
    let parts: Vec<[f64; 5]> = mesh
        .elements
        .par_iter()
        .map(|e| -> Result<[f64; 5]> {
            let mut acc = [0.0; 5];
            let quad = focused_quadrature(patch, e, nq, Region::Volume, focus)?;
            let sv = eval_space(patch, &v.space, e, &quad);
            for (q, qp) in quad.points.iter().enumerate() {
                let ex = exact.exact(&qp.x[..d], qp.t);
                let f = sv.field(q, &v.coeffs);
                acc[0] += qp.weight * (0..d).map(|k| (ex.grad[k] - f.grad[k]).powi(2)).sum::<f64>();
                acc[1] += qp.weight * (ex.dt - f.dt).powi(2);
                acc[2] += qp.weight * (ex.lap - f.lap).powi(2);
            }
            if e.upper[d] == 1.0 {
                let quad = focused_quadrature(patch, e, nq, Region::TimeFace(true), focus)?;
                let sv = eval_space(patch, &v.space, e, &quad);
                for (q, qp) in quad.points.iter().enumerate() {
                    let ex = exact.exact(&qp.x[..d], qp.t);
                    let f = sv.field(q, &v.coeffs);
                    acc[3] += qp.weight * (ex.u - f.v).powi(2);
                    acc[4] += qp.weight * (0..d).map(|k| (ex.grad[k] - f.grad[k]).powi(2)).sum::<f64>();
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut out = ErrorNorms { delta, ..Default::default() };
    for p in &parts {
        out.grad2 += p[0];
        out.dt2 += p[1];
        out.lap2 += p[2];
        out.final2 += p[3];
        out.final_grad2 += p[4];
    }
    out.grad2_elements = parts.iter().map(|p| p[0]).collect();
    Ok(out)
}

/// `log2(e_{k-1} / e_k)`; `None` for the first level or a vanishing error.
pub fn eoc(errors: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None; errors.len()];
    for k in 1..errors.len() {
        let (a, b) = (errors[k - 1], errors[k]);
        if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
            out[k] = Some((a / b).log2());
        }
    }
    out
}
