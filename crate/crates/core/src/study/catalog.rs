use std::f64::consts::PI;

use serde::Serialize;

use crate::assembly::{ProblemData, QuadratureFocus};
use crate::error::{Error, Result};
use crate::estimates::SpatialDomain;
use crate::geometry::{quarter_annulus_cylinder, unit_cylinder, GeometryPatch};

/// Exact solution and the derivatives entering the error norms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExactValues {
    pub u: f64,
    pub dt: f64,
    pub grad: [f64; 2],
    pub lap: f64,
}

/// A problem with known solution.
pub trait ExactSolution: Sync {
    fn exact(&self, x: &[f64], t: f64) -> ExactValues;
}

/// Manufactured test problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ProblemSpec {
    /// `u = (1 - x) x^2 (1 - t) t`.
    Ex1,
    /// `u = sin(k1 pi x) sin(k2 pi t)`.
    Ex2 { k1: f64, k2: f64 },
    /// Exponential peak at `(0.8, 0.05)`.
    Ex3,
    /// Exponential peak at `(0.25, 0.25, 0.25)` on the unit square.
    Ex3TwoD,
    /// `u = (1 - x) x^2 (1 - y) y^2 (1 - t) t^2` on the quarter annulus.
    Ex4,
    /// `u = sin(pi x) |1 - t|^lambda` on `(0, 1) x (0, 2)`.
    Ex6 { lambda: f64 },
}

const NAMES: [&str; 9] = ["ex1", "ex2-1", "ex2-2", "ex3", "ex3-2d", "ex4", "ex6-1.5", "ex6-1", "ex6-0.5"];

impl ProblemSpec {
    pub fn names() -> &'static [&'static str] {
        &NAMES
    }

    pub fn catalog(name: &str) -> Result<Self> {
        Ok(match name.to_ascii_lowercase().as_str() {
            "ex1" => Self::Ex1,
            "ex2-1" => Self::Ex2 { k1: 1.0, k2: 1.0 },
            "ex2-2" => Self::Ex2 { k1: 6.0, k2: 3.0 },
            "ex3" => Self::Ex3,
            "ex3-2d" => Self::Ex3TwoD,
            "ex4" => Self::Ex4,
            "ex6-1.5" => Self::Ex6 { lambda: 1.5 },
            "ex6-1" => Self::Ex6 { lambda: 1.0 },
            "ex6-0.5" => Self::Ex6 { lambda: 0.5 },
            _ => return Err(Error::InvalidParameter(format!("unknown problem '{name}' (known: {})", NAMES.join(", ")))),
        })
    }

    pub fn name(&self) -> String {
        match *self {
            Self::Ex1 => "ex1".into(),
            Self::Ex2 { k1, k2 } if k1 == 1.0 && k2 == 1.0 => "ex2-1".into(),
            Self::Ex2 { k1, k2 } if k1 == 6.0 && k2 == 3.0 => "ex2-2".into(),
            Self::Ex2 { k1, k2 } => format!("ex2({k1},{k2})"),
            Self::Ex3 => "ex3".into(),
            Self::Ex3TwoD => "ex3-2d".into(),
            Self::Ex4 => "ex4".into(),
            Self::Ex6 { lambda } => format!("ex6-{lambda}"),
        }
    }

    pub fn spatial_dim(&self) -> usize {
        match self {
            Self::Ex3TwoD | Self::Ex4 => 2,
            _ => 1,
        }
    }

    pub fn final_time(&self) -> f64 {
        match self {
            Self::Ex6 { .. } => 2.0,
            _ => 1.0,
        }
    }

    pub fn patch(&self) -> Result<GeometryPatch> {
        match self {
            Self::Ex4 => quarter_annulus_cylinder(1.0, 2.0, 1.0),
            _ => unit_cylinder(self.spatial_dim(), self.final_time()),
        }
    }

    pub fn domain(&self) -> SpatialDomain {
        match self {
            Self::Ex4 => SpatialDomain::QuarterAnnulus { r_in: 1.0, r_out: 2.0 },
            _ => SpatialDomain::Box { lengths: [1.0, 1.0], dim: self.spatial_dim() },
        }
    }

    /// Parametric time of a known time singularity.
    pub fn singular_time(&self) -> Option<f64> {
        match self {
            Self::Ex6 { .. } => Some(1.0 / self.final_time()),
            _ => None,
        }
    }

    /// Graded quadrature toward the point or time slab where the source is singular.
    pub fn quadrature_focus(&self) -> Option<QuadratureFocus> {
        let t_end = self.final_time();
        match self {
            Self::Ex3 => Some(QuadratureFocus { coords: [Some(0.8), Some(0.05 / t_end), None], depth: 10 }),
            Self::Ex3TwoD => Some(QuadratureFocus { coords: [Some(0.25), Some(0.25), Some(0.25 / t_end)], depth: 5 }),
            Self::Ex6 { .. } => Some(QuadratureFocus { coords: [None, Some(1.0 / t_end), None], depth: 10 }),
            _ => None,
        }
    }

    /// Location of a solution peak `(x, t)`.
    pub fn peak(&self) -> Option<[f64; 3]> {
        match self {
            Self::Ex3 => Some([0.8, 0.05, 0.0]),
            Self::Ex3TwoD => Some([0.25, 0.25, 0.25]),
            _ => None,
        }
    }
}

fn peak_values(x: &[f64], t: f64, center: &[f64]) -> ExactValues {
    let d = x.len();
    let z: Vec<f64> = x.iter().copied().chain(std::iter::once(t)).collect();
    let r = z.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt().max(1e-300);
    let e = (-100.0 * r).exp();
    let bubble = |s: f64| s * s - s;
    let gt = bubble(t);
    let gx: Vec<f64> = x.iter().map(|&s| bubble(s)).collect();
    let prod_except = |k: usize| (0..d).filter(|&j| j != k).map(|j| gx[j]).product::<f64>();
    let g = gx.iter().product::<f64>() * gt;
    let mut out = ExactValues { u: g * e, ..Default::default() };
    for k in 0..d {
        let rk = (z[k] - center[k]) / r;
        let rkk = (r * r - (z[k] - center[k]).powi(2)) / (r * r * r);
        let ek = -100.0 * rk * e;
        let ekk = (1e4 * rk * rk - 100.0 * rkk) * e;
        let g_k = (2.0 * x[k] - 1.0) * prod_except(k) * gt;
        let g_kk = 2.0 * prod_except(k) * gt;
        out.grad[k] = g_k * e + g * ek;
        out.lap += g_kk * e + 2.0 * g_k * ek + g * ekk;
    }
    let rt = (t - center[d]) / r;
    let g_t = gx.iter().product::<f64>() * (2.0 * t - 1.0);
    out.dt = g_t * e - 100.0 * rt * g * e;
    out
}

impl ExactSolution for ProblemSpec {
    fn exact(&self, x: &[f64], t: f64) -> ExactValues {
        match *self {
            Self::Ex1 => {
                let s = x[0];
                ExactValues {
                    u: (1.0 - s) * s * s * (1.0 - t) * t,
                    dt: (1.0 - s) * s * s * (1.0 - 2.0 * t),
                    grad: [(2.0 * s - 3.0 * s * s) * (1.0 - t) * t, 0.0],
                    lap: (2.0 - 6.0 * s) * (1.0 - t) * t,
                }
            }
            Self::Ex2 { k1, k2 } => {
                let (a, b) = (k1 * PI, k2 * PI);
                let (s1, c1) = (a * x[0]).sin_cos();
                let (s2, c2) = (b * t).sin_cos();
                ExactValues { u: s1 * s2, dt: b * s1 * c2, grad: [a * c1 * s2, 0.0], lap: -a * a * s1 * s2 }
            }
            Self::Ex3 => peak_values(&x[..1], t, &[0.8, 0.05]),
            Self::Ex3TwoD => peak_values(&x[..2], t, &[0.25, 0.25, 0.25]),
            Self::Ex4 => {
                let a = |s: f64| (1.0 - s) * s * s;
                let da = |s: f64| 2.0 * s - 3.0 * s * s;
                let dda = |s: f64| 2.0 - 6.0 * s;
                let b = (1.0 - t) * t * t;
                let db = 2.0 * t - 3.0 * t * t;
                let (ax, ay) = (a(x[0]), a(x[1]));
                ExactValues {
                    u: ax * ay * b,
                    dt: ax * ay * db,
                    grad: [da(x[0]) * ay * b, ax * da(x[1]) * b],
                    lap: (dda(x[0]) * ay + ax * dda(x[1])) * b,
                }
            }
            Self::Ex6 { lambda } => {
                let (s, c) = (PI * x[0]).sin_cos();
                let m = 1.0 - t;
                let phi = m.abs().powf(lambda);
                let dphi = if m == 0.0 { 0.0 } else { -lambda * m.signum() * m.abs().powf(lambda - 1.0) };
                ExactValues { u: s * phi, dt: s * dphi, grad: [PI * c * phi, 0.0], lap: -PI * PI * s * phi }
            }
        }
    }
}

impl ProblemData for ProblemSpec {
    fn source(&self, x: &[f64], t: f64) -> f64 {
        let e = self.exact(x, t);
        e.dt - e.lap
    }
    fn dirichlet(&self, x: &[f64], t: f64) -> f64 {
        self.exact(x, t).u
    }
    fn initial(&self, x: &[f64]) -> f64 {
        self.exact(x, 0.0).u
    }
    fn initial_gradient(&self, x: &[f64]) -> [f64; 2] {
        self.exact(x, 0.0).grad
    }
    fn quadrature_focus(&self) -> Option<QuadratureFocus> {
        ProblemSpec::quadrature_focus(self)
    }
}

/// Largest scaled mismatch between the analytic derivatives and central differences of `u`
/// over `samples` points drawn inside `Q` (away from kinks).
pub fn self_check(spec: &ProblemSpec, samples: usize, seed: u64) -> Result<f64> {
    let patch = spec.patch()?;
    let d = spec.spatial_dim();
    let mut state = seed.wrapping_add(0x9E3779B97F4A7C15);
    let mut rnd = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        0.02 + 0.96 * ((state >> 11) as f64 / (1u64 << 53) as f64)
    };
    let u = |x: &[f64], t: f64| spec.exact(x, t).u;
    let mut worst = 0.0f64;
    let mut taken = 0;
    while taken < samples {
        let xi: Vec<f64> = (0..=d).map(|_| rnd()).collect();
        let p = patch.map(&xi)?;
        let (x, t) = (&p[..d], p[d]);
        if let Some(c) = spec.peak() {
            let r: f64 = x.iter().chain(std::iter::once(&t)).zip(c.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if r < 0.02 {
                continue;
            }
        }
        if spec.singular_time().is_some() && (t - 1.0).abs() < 0.02 {
            continue;
        }
        taken += 1;
        let ex = spec.exact(x, t);
        let h1 = 1e-6;
        let h2 = 1e-4;
        let fd_t = (u(x, t + h1) - u(x, t - h1)) / (2.0 * h1);
        let mut err = (fd_t - ex.dt).abs() / (1.0 + ex.dt.abs());
        let mut lap = 0.0;
        for k in 0..d {
            let shift = |h: f64| {
                let mut y = x.to_vec();
                y[k] += h;
                u(&y, t)
            };
            let g = (shift(h1) - shift(-h1)) / (2.0 * h1);
            err = err.max((g - ex.grad[k]).abs() / (1.0 + ex.grad[k].abs()));
            lap += (shift(h2) - 2.0 * ex.u + shift(-h2)) / (h2 * h2);
        }
        err = err.max((lap - ex.lap).abs() / (1.0 + ex.lap.abs()));
        let f = spec.source(x, t);
        err = err.max((f - (ex.dt - ex.lap)).abs() / (1.0 + f.abs()));
        worst = worst.max(err);
    }
    Ok(worst)
}
