use rayon::prelude::*;

use super::eval::{eval_space, focused_quadrature, Region};
use super::{apply_dirichlet, DofMap, ProblemData, SplineField, StabilizationParams};
use crate::error::{Error, Result};
use crate::geometry::{GeometryPatch, SpaceTimeMesh};
use crate::sparse::{solve, LinearSolveReport, SparseMatrix, SymmetryHint, Triplet};
use crate::splines::TensorSplineSpace;

/// Reduced system `K u = f` on the free dofs.
#[derive(Debug, Clone)]
pub struct PrimalSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub dofmap: DofMap,
    pub space: TensorSplineSpace,
}

struct Local {
    dofs: Vec<usize>,
    mat: Vec<f64>,
    rhs: Vec<f64>,
}

/// Stabilized space-time system
/// `a(phi_j, phi_i) = (dt phi_j, phi_i + delta dt phi_i) + (grad phi_j, grad(phi_i + delta dt phi_i))`.
pub fn assemble_primal(
    patch: &GeometryPatch,
    mesh: &SpaceTimeMesh,
    space: &TensorSplineSpace,
    params: StabilizationParams,
    data: &dyn ProblemData,
    nq: usize,
) -> Result<PrimalSystem> {
    let d = patch.spatial_dim();
    let delta = params.delta;
    let focus = data.quadrature_focus();
    let dofmap = apply_dirichlet(space, patch, data)?;
    let locals: Vec<Local> = mesh
        .elements
        .par_iter()
        .map(|e| -> Result<Local> {
            let quad = focused_quadrature(patch, e, nq, Region::Volume, focus.as_ref())?;
            let se = eval_space(patch, space, e, &quad);
            let n = se.dofs.len();
            let mut mat = vec![0.0; n * n];
            let mut rhs = vec![0.0; n];
            for (q, qp) in quad.points.iter().enumerate() {
                let w = qp.weight;
                let f = data.source(&qp.x[..d], qp.t);
                let b = &se.basis[q];
                for (i, bi) in b.iter().enumerate() {
                    let test = bi.v + delta * bi.dt;
                    let mut tg = [0.0; 2];
                    for k in 0..d {
                        tg[k] = bi.grad[k] + delta * bi.grad_dt[k];
                    }
                    rhs[i] += w * f * test;
                    let row = &mut mat[i * n..(i + 1) * n];
                    for (j, bj) in b.iter().enumerate() {
                        let mut s = bj.dt * test;
                        for k in 0..d {
                            s += bj.grad[k] * tg[k];
                        }
                        row[j] += w * s;
                    }
                }
            }
            Ok(Local { dofs: se.dofs, mat, rhs })
        })
        .collect::<Result<_>>()?;
    let nfree = dofmap.free.len();
    let mut rhs = vec![0.0; nfree];
    let mut trip: Vec<Triplet<f64>> = Vec::new();
    for loc in &locals {
        let n = loc.dofs.len();
        for i in 0..n {
            let Some(fi) = dofmap.free_index[loc.dofs[i]] else { continue };
            rhs[fi] += loc.rhs[i];
            for j in 0..n {
                let kij = loc.mat[i * n + j];
                match dofmap.free_index[loc.dofs[j]] {
                    Some(fj) => trip.push((fi, fj, kij)),
                    None => rhs[fi] -= kij * dofmap.values[loc.dofs[j]],
                }
            }
        }
    }
    let matrix = SparseMatrix::from_triplets(nfree, nfree, &trip)?;
    Ok(PrimalSystem { matrix, rhs, dofmap, space: space.clone() })
}

/// Same bilinear form on the enriched space `W_h` (degree `r > p`, coarsened mesh).
pub fn assemble_enriched(
    patch: &GeometryPatch,
    mesh: &SpaceTimeMesh,
    space_r: &TensorSplineSpace,
    params: StabilizationParams,
    data: &dyn ProblemData,
    nq: usize,
) -> Result<PrimalSystem> {
    assemble_primal(patch, mesh, space_r, params, data, nq)
}

/// Solves a primal or enriched system and expands to a full coefficient vector.
pub fn solve_primal(sys: &PrimalSystem) -> Result<(SplineField, LinearSolveReport)> {
    let rep = solve(&sys.matrix, &sys.rhs, SymmetryHint::General)?;
    if rep.relative_residual > 1e-8 {
        return Err(Error::InaccurateSolve(rep.relative_residual));
    }
    let coeffs = sys.dofmap.expand(&rep.solution);
    Ok((SplineField::new(sys.space.clone(), coeffs)?, rep))
}

/// Gram blocks of the flux optimality system, spatial components only.
///
/// Unknown `(k, i)` (component `k`, basis function `i`) has index `k * ny + i`.
#[derive(Debug, Clone)]
pub struct FluxSystem {
    pub d: usize,
    pub ny: usize,
    /// `(div psi_i, div psi_j)`.
    pub div: SparseMatrix,
    /// `(psi_i, psi_j)`.
    pub mass: SparseMatrix,
    /// `(f - dt v, div psi_j)`.
    pub z: Vec<f64>,
    /// `(grad v, psi_j)`.
    pub g: Vec<f64>,
    /// `||grad v||^2`.
    pub grad_v2: f64,
    /// `||f - dt v||^2`.
    pub res2: f64,
    pub space: TensorSplineSpace,
}

impl FluxSystem {
    /// `(||y - grad v||^2, ||div y + f - dt v||^2)` from the Gram data.
    pub fn residual_norms(&self, y: &[f64]) -> (f64, f64) {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let md = self.mass.quad_form(y) - 2.0 * dot(&self.g, y) + self.grad_v2;
        let meq = self.div.quad_form(y) + 2.0 * dot(&self.z, y) + self.res2;
        (md.max(0.0), meq.max(0.0))
    }

    /// `C_F^2 Div + beta M` and `-C_F^2 z + beta g`.
    pub fn system(&self, c_f: f64, beta: f64) -> Result<(SparseMatrix, Vec<f64>)> {
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta = {beta} must be positive")));
        }
        let c2 = c_f * c_f;
        let a = self.div.linear_combination(c2, &self.mass, beta)?;
        let b = self.z.iter().zip(&self.g).map(|(z, g)| -c2 * z + beta * g).collect();
        Ok((a, b))
    }
}

/// Assembles the flux system on the mesh of `v` (which must refine the flux mesh).
pub fn assemble_flux_system(
    patch: &GeometryPatch,
    mesh: &SpaceTimeMesh,
    space_q: &TensorSplineSpace,
    v: &SplineField,
    data: &dyn ProblemData,
    nq: usize,
) -> Result<FluxSystem> {
    let focus = data.quadrature_focus();
    let d = patch.spatial_dim();
    let ny = space_q.dim();
    struct FluxLocal {
        dofs: Vec<usize>,
        div: Vec<f64>,
        mass: Vec<f64>,
        z: Vec<f64>,
        g: Vec<f64>,
        gv2: f64,
        r2: f64,
    }
    // Fine elements inside one flux cell share its dofs; accumulate them together.
    let mut cells: std::collections::BTreeMap<Vec<usize>, Vec<usize>> = std::collections::BTreeMap::new();
    for (k, e) in mesh.elements.iter().enumerate() {
        let key = (0..=d).map(|dir| space_q.direction(dir).find_span(e.midpoint(dir))).collect::<Result<Vec<_>>>()?;
        cells.entry(key).or_default().push(k);
    }
    let groups: Vec<Vec<usize>> = cells.into_values().collect();
    let locals: Vec<FluxLocal> = groups
        .par_iter()
        .map(|group| -> Result<FluxLocal> {
            let mut loc: Option<FluxLocal> = None;
            let mut row = Vec::new();
            for &ei in group {
                let e = &mesh.elements[ei];
                let quad = focused_quadrature(patch, e, nq, Region::Volume, focus.as_ref())?;
                let sy = eval_space(patch, space_q, e, &quad);
                let sv = eval_space(patch, &v.space, e, &quad);
                let n = sy.dofs.len();
                let nb = d * n;
                let l = loc.get_or_insert_with(|| FluxLocal {
                    dofs: sy.dofs.clone(),
                    div: vec![0.0; nb * nb],
                    mass: vec![0.0; n * n],
                    z: vec![0.0; nb],
                    g: vec![0.0; nb],
                    gv2: 0.0,
                    r2: 0.0,
                });
                row.resize(nb, 0.0);
                for (q, qp) in quad.points.iter().enumerate() {
                    let w = qp.weight;
                    let fv = sv.field(q, &v.coeffs);
                    let r = data.source(&qp.x[..d], qp.t) - fv.dt;
                    l.r2 += w * r * r;
                    l.gv2 += w * fv.grad[..d].iter().map(|g| g * g).sum::<f64>();
                    let b = &sy.basis[q];
                    for (i, bi) in b.iter().enumerate() {
                        for k in 0..d {
                            l.z[k * n + i] += w * r * bi.grad[k];
                            l.g[k * n + i] += w * fv.grad[k] * bi.v;
                            row[k * n + i] = bi.grad[k];
                        }
                    }
                    for i in 0..n {
                        let wi = w * b[i].v;
                        let m = &mut l.mass[i * n..(i + 1) * n];
                        for j in i..n {
                            m[j] += wi * b[j].v;
                        }
                    }
                    for a in 0..nb {
                        let wa = w * row[a];
                        let dr = &mut l.div[a * nb..(a + 1) * nb];
                        for c in a..nb {
                            dr[c] += wa * row[c];
                        }
                    }
                }
            }
            let mut l = loc.ok_or(Error::EmptyMesh)?;
            // Mirror the upper triangles.
            let n = l.dofs.len();
            let nb = d * n;
            for i in 0..n {
                for j in 0..i {
                    l.mass[i * n + j] = l.mass[j * n + i];
                }
            }
            for a in 0..nb {
                for c in 0..a {
                    l.div[a * nb + c] = l.div[c * nb + a];
                }
            }
            Ok(l)
        })
        .collect::<Result<_>>()?;
    let nt = d * ny;
    let mut z = vec![0.0; nt];
    let mut g = vec![0.0; nt];
    let mut td = Vec::new();
    let mut tm = Vec::new();
    let (mut grad_v2, mut res2) = (0.0, 0.0);
    for loc in &locals {
        grad_v2 += loc.gv2;
        res2 += loc.r2;
        let n = loc.dofs.len();
        let nb = d * n;
        let gi = |k: usize, i: usize| k * ny + loc.dofs[i];
        for k in 0..d {
            for i in 0..n {
                z[gi(k, i)] += loc.z[k * n + i];
                g[gi(k, i)] += loc.g[k * n + i];
                for j in 0..n {
                    tm.push((gi(k, i), gi(k, j), loc.mass[i * n + j]));
                    for l in 0..d {
                        td.push((gi(k, i), gi(l, j), loc.div[(k * n + i) * nb + l * n + j]));
                    }
                }
            }
        }
    }
    Ok(FluxSystem {
        d,
        ny,
        div: SparseMatrix::from_triplets(nt, nt, &td)?,
        mass: SparseMatrix::from_triplets(nt, nt, &tm)?,
        z,
        g,
        grad_v2,
        res2,
        space: space_q.clone(),
    })
}
