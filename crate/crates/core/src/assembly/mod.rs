//! Degrees of freedom, boundary constraints and the three linear systems.

pub mod eval;
mod systems;

pub use eval::{element_quadrature, eval_space, focused_quadrature, ElementQuadrature, PhysValues, QuadratureFocus, Region, SpaceEval};
pub use systems::{
    assemble_enriched, assemble_flux_system, assemble_primal, solve_primal, FluxSystem, PrimalSystem,
};

use crate::error::{Error, Result};
use crate::geometry::GeometryPatch;
use crate::splines::{tensor_solve, KnotVector, TensorSplineSpace};

/// Data of the initial-boundary value problem.
pub trait ProblemData: Sync {
    /// Source term `f(x, t)`.
    fn source(&self, x: &[f64], t: f64) -> f64;
    /// Lateral Dirichlet data `u_D(x, t)`.
    fn dirichlet(&self, x: &[f64], t: f64) -> f64;
    /// Initial data `u_0(x)`.
    fn initial(&self, x: &[f64]) -> f64;
    /// Spatial gradient of `u_0`; central differences unless overridden.
    fn initial_gradient(&self, x: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        let h = 1e-6;
        for k in 0..x.len().min(2) {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[k] += h;
            b[k] -= h;
            g[k] = (self.initial(&a) - self.initial(&b)) / (2.0 * h);
        }
        g
    }
    /// Where the data is singular; integrals near it use graded composite rules.
    fn quadrature_focus(&self) -> Option<QuadratureFocus> {
        None
    }
}

/// Problem data from closures.
pub struct FnData<F, G, H> {
    pub f: F,
    pub u_d: G,
    pub u_0: H,
}

impl<F, G, H> ProblemData for FnData<F, G, H>
where
    F: Fn(&[f64], f64) -> f64 + Sync,
    G: Fn(&[f64], f64) -> f64 + Sync,
    H: Fn(&[f64]) -> f64 + Sync,
{
    fn source(&self, x: &[f64], t: f64) -> f64 {
        (self.f)(x, t)
    }
    fn dirichlet(&self, x: &[f64], t: f64) -> f64 {
        (self.u_d)(x, t)
    }
    fn initial(&self, x: &[f64]) -> f64 {
        (self.u_0)(x)
    }
}

/// `theta` and the derived `delta_h = theta * h`, with `lambda = 1`, `mu = delta_h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizationParams {
    pub theta: f64,
    pub h: f64,
    pub delta: f64,
}

impl StabilizationParams {
    pub fn new(theta: f64, h: f64) -> Result<Self> {
        if !(theta >= 0.0) || !theta.is_finite() {
            return Err(Error::InvalidParameter(format!("theta = {theta} must be nonnegative")));
        }
        Ok(Self { theta, h, delta: theta * h })
    }

    /// Recomputes `delta_h` for a new mesh size.
    pub fn with_h(self, h: f64) -> Self {
        Self { h, delta: self.theta * h, ..self }
    }
}

/// Free / constrained partition of the tensor basis.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub n: usize,
    pub free: Vec<usize>,
    pub constrained: Vec<usize>,
    /// Position of every global index in `free`.
    pub free_index: Vec<Option<usize>>,
    /// Prescribed coefficients (zero on free dofs).
    pub values: Vec<f64>,
}

impl DofMap {
    /// Full coefficient vector from free-dof values.
    pub fn expand(&self, free_values: &[f64]) -> Vec<f64> {
        let mut c = self.values.clone();
        for (k, &g) in self.free.iter().enumerate() {
            c[g] = free_values[k];
        }
        c
    }
}

/// Constrains every function touching the lateral boundary or the initial face and
/// interpolates the data at the Greville points of each face.
pub fn apply_dirichlet(space: &TensorSplineSpace, patch: &GeometryPatch, data: &dyn ProblemData) -> Result<DofMap> {
    let d = patch.spatial_dim();
    if space.ndirs() != d + 1 {
        return Err(Error::DimensionMismatch("space and patch dimensions differ".into()));
    }
    let sizes = space.num_basis_per_dir();
    let n = space.dim();
    let mut is_con = vec![false; n];
    let mut values = vec![0.0; n];
    let t_end = patch.final_time();
    // Initial face first; lateral faces then agree with it on shared edges for compatible data.
    let faces: Vec<(usize, bool)> = std::iter::once((d, false)).chain((0..d).flat_map(|a| [(a, false), (a, true)])).collect();
    for (dir, upper) in faces {
        let others: Vec<usize> = (0..=d).filter(|&k| k != dir).collect();
        let kvs: Vec<KnotVector> = others.iter().map(|&k| space.direction(k).clone()).collect();
        let grev: Vec<Vec<f64>> = kvs.iter().map(|k| k.greville()).collect();
        let fsizes: Vec<usize> = kvs.iter().map(|k| k.num_basis()).collect();
        let total: usize = fsizes.iter().product();
        let mut samples = Vec::with_capacity(total);
        let mut multis = Vec::with_capacity(total);
        for idx in 0..total {
            let mut r = idx;
            let mut xi = [0.0; 3];
            let mut m = vec![0usize; d + 1];
            xi[dir] = if upper { 1.0 } else { 0.0 };
            m[dir] = if upper { sizes[dir] - 1 } else { 0 };
            for (j, &k) in others.iter().enumerate() {
                let i = r % fsizes[j];
                r /= fsizes[j];
                xi[k] = grev[j][i];
                m[k] = i;
            }
            let x = patch.map(&xi[..=d])?;
            let v = if dir == d { data.initial(&x[..d]) } else { data.dirichlet(&x[..d], xi[d] * t_end) };
            samples.push(v);
            multis.push(m);
        }
        let coeffs = tensor_solve(&kvs, &samples)?;
        for (m, c) in multis.iter().zip(coeffs) {
            let g = space.linear_index(m);
            is_con[g] = true;
            values[g] = c;
        }
    }
    let mut free = Vec::new();
    let mut constrained = Vec::new();
    let mut free_index = vec![None; n];
    for g in 0..n {
        if is_con[g] {
            constrained.push(g);
        } else {
            free_index[g] = Some(free.len());
            free.push(g);
        }
    }
    Ok(DofMap { n, free, constrained, free_index, values })
}

/// Scalar spline field over a tensor space.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineField {
    pub space: TensorSplineSpace,
    pub coeffs: Vec<f64>,
}

impl SplineField {
    pub fn new(space: TensorSplineSpace, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(Error::DimensionMismatch(format!("{} coefficients for dimension {}", coeffs.len(), space.dim())));
        }
        Ok(Self { space, coeffs })
    }

    pub fn zeros(space: TensorSplineSpace) -> Self {
        let n = space.dim();
        Self { space, coeffs: vec![0.0; n] }
    }

    /// Value at a parametric point.
    pub fn eval(&self, xi: &[f64]) -> Result<f64> {
        self.space.eval_spline(&self.coeffs, xi)
    }

    /// `self - other` on the same space.
    pub fn sub(&self, other: &SplineField) -> Result<SplineField> {
        if self.space != other.space {
            return Err(Error::DimensionMismatch("fields live on different spaces".into()));
        }
        Ok(SplineField {
            space: self.space.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        })
    }
}

/// Flux field `y = (y^(1), ..., y^(d+1))`; all components share one space.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineVectorField {
    pub space: TensorSplineSpace,
    pub components: Vec<Vec<f64>>,
}

impl SplineVectorField {
    pub fn zeros(space: TensorSplineSpace, ncomp: usize) -> Self {
        let n = space.dim();
        Self { space, components: vec![vec![0.0; n]; ncomp] }
    }

    /// Builds `d + 1` components from the `d` spatial ones; the time component is zero.
    pub fn from_spatial(space: TensorSplineSpace, spatial: &[f64], d: usize) -> Result<Self> {
        let n = space.dim();
        if spatial.len() != d * n {
            return Err(Error::DimensionMismatch("flux coefficient length".into()));
        }
        let mut components: Vec<Vec<f64>> = spatial.chunks(n).map(|c| c.to_vec()).collect();
        components.push(vec![0.0; n]);
        Ok(Self { space, components })
    }

    /// Concatenated spatial coefficients.
    pub fn spatial_coeffs(&self, d: usize) -> Vec<f64> {
        self.components[..d].concat()
    }

    pub fn num_dofs(&self) -> usize {
        self.components.len() * self.space.dim()
    }
}

/// Dyadic generation of a knot: smallest `j` with `x * 2^j` integral.
pub fn dyadic_level(x: f64) -> u32 {
    let mut v = x;
    for j in 0..=60 {
        if v.fract() == 0.0 {
            return j;
        }
        v *= 2.0;
    }
    61
}

/// Removes the `ceil(log2 ratio)` finest dyadic generations of knots per direction,
/// keeping every knot of generation `<= floor_level`.
pub fn coarsen_space(space: &TensorSplineSpace, ratio: usize, floor_level: u32) -> Result<TensorSplineSpace> {
    if ratio == 0 {
        return Err(Error::InvalidParameter("coarsening ratio must be >= 1".into()));
    }
    let gens = (ratio as f64).log2().ceil() as u32;
    if gens == 0 {
        return Ok(space.clone());
    }
    let dirs = space
        .directions()
        .iter()
        .map(|kv| {
            let p = kv.degree();
            let inner = &kv.knots()[p + 1..kv.knots().len() - p - 1];
            let finest = inner.iter().map(|&x| dyadic_level(x)).max().unwrap_or(0);
            let keep = finest.saturating_sub(gens).max(floor_level);
            let mut k = vec![0.0; p + 1];
            k.extend(inner.iter().copied().filter(|&x| dyadic_level(x) <= keep));
            k.extend(std::iter::repeat(1.0).take(p + 1));
            KnotVector::new(k, p)
        })
        .collect::<Result<Vec<_>>>()?;
    TensorSplineSpace::new(dirs)
}

/// True when every breakpoint of `coarse` is a breakpoint of `fine` in each direction.
pub fn is_nested(coarse: &TensorSplineSpace, fine: &TensorSplineSpace) -> bool {
    coarse.ndirs() == fine.ndirs()
        && coarse.directions().iter().zip(fine.directions()).all(|(c, f)| {
            let fb = f.breakpoints();
            c.breakpoints().iter().all(|x| fb.contains(x))
        })
}
