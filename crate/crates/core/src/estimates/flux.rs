use std::time::Instant;

use crate::assembly::{assemble_flux_system, SplineField, SplineVectorField};
use crate::error::{Error, Result};
use crate::sparse::{solve, SymmetryHint};
use crate::splines::TensorSplineSpace;

use super::{optimal_beta, pair_bound, EstimateContext};

/// Result of the alternating flux / `beta` minimization.
#[derive(Debug, Clone)]
pub struct FluxReconstruction {
    pub y: SplineVectorField,
    /// Optimal `beta` for the returned flux.
    pub beta: f64,
    /// `beta` of the last linear solve; `y` is stationary for `M^I(., beta_solve)`.
    pub beta_solve: f64,
    /// `M^I` after every iteration, evaluated from the Gram data.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub t_as: f64,
    pub t_sol: f64,
    pub relative_residual: f64,
}

/// Minimizes `M^I(v, .)` over the flux space: solve `(C_F^2 Div + beta M) y = -C_F^2 z + beta g`,
/// update `beta`, repeat up to `n_it` times.
///
/// Stops early once `C_F^2 (1 + 1/beta) m_eq^2 / ((1 + beta) m_d^2) < 0.01`.
pub fn optimize_flux(
    ctx: &EstimateContext,
    v: &SplineField,
    space_q: &TensorSplineSpace,
    c_f: f64,
    n_it: usize,
) -> Result<FluxReconstruction> {
    if n_it == 0 {
        return Err(Error::InvalidParameter("at least one flux iteration is required".into()));
    }
    let d = ctx.patch.spatial_dim();
    let t0 = Instant::now();
    let sys = assemble_flux_system(ctx.patch, ctx.mesh, space_q, v, ctx.data, ctx.nq)?;
    let t_as = t0.elapsed().as_secs_f64();
    let mut t_sol = 0.0;
    let mut beta: f64 = 1.0;
    let mut beta_solve = beta;
    let mut coeffs = vec![0.0; sys.z.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut relative_residual = 0.0;
    for _ in 0..n_it {
        let (a, b) = sys.system(c_f, beta)?;
        let t1 = Instant::now();
        let rep = solve(&a, &b, SymmetryHint::Symmetric)?;
        t_sol += t1.elapsed().as_secs_f64();
        if rep.relative_residual > 1e-8 {
            return Err(Error::InaccurateSolve(rep.relative_residual));
        }
        relative_residual = rep.relative_residual;
        coeffs = rep.solution;
        beta_solve = beta;
        iterations += 1;
        let (md2, meq2) = sys.residual_norms(&coeffs);
        beta = optimal_beta(md2.sqrt(), meq2.sqrt(), c_f);
        history.push(pair_bound(beta, md2, c_f * c_f * meq2));
        let ratio = pair_bound_part(beta, c_f * c_f * meq2) / ((1.0 + beta) * md2);
        if !(beta.is_finite() && beta > 0.0) || ratio < 0.01 {
            break;
        }
    }
    let y = SplineVectorField::from_spatial(space_q.clone(), &coeffs, d)?;
    Ok(FluxReconstruction { y, beta, beta_solve, history, iterations, t_as, t_sol, relative_residual })
}

fn pair_bound_part(beta: f64, b2: f64) -> f64 {
    (1.0 + 1.0 / beta) * b2
}
