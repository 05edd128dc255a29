//! Marking, tensor knot-line refinement and the approximate / estimate / mark / refine loop.

mod driver;

pub use driver::{adaptive_loop, initial_space, run_level, LevelFailure, LevelOutput, LevelSnapshot, StudyOutcome};

use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::SpaceTimeMesh;
use crate::splines::{KnotVector, TensorSplineSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MarkingKind {
    /// Smallest set carrying a `sigma` fraction of the total.
    Bulk,
    /// Indicators at least `sigma` times the maximum.
    Garu,
    /// The `ceil(sigma n)` largest indicators.
    Puca,
    Uniform,
}

impl MarkingKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Bulk => "bulk",
            Self::Garu => "garu",
            Self::Puca => "puca",
            Self::Uniform => "uniform",
        }
    }
}

impl FromStr for MarkingKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bulk" | "doerfler" => Ok(Self::Bulk),
            "garu" => Ok(Self::Garu),
            "puca" => Ok(Self::Puca),
            "uniform" => Ok(Self::Uniform),
            _ => Err(Error::InvalidParameter(format!("unknown marking '{s}'"))),
        }
    }
}

/// Marking rule with parameter `sigma` in `[0, 1]`; `sigma = 0` marks everything.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarkingCriterion {
    pub kind: MarkingKind,
    pub sigma: f64,
}

impl MarkingCriterion {
    pub fn new(kind: MarkingKind, sigma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&sigma) {
            return Err(Error::InvalidParameter(format!("sigma = {sigma} outside [0, 1]")));
        }
        Ok(Self { kind, sigma })
    }

    pub fn uniform() -> Self {
        Self { kind: MarkingKind::Uniform, sigma: 0.0 }
    }

    pub fn is_uniform(&self) -> bool {
        self.kind == MarkingKind::Uniform || self.sigma == 0.0
    }
}

/// Selected element indices in ascending order.
pub fn mark(indicators: &[f64], crit: MarkingCriterion) -> Result<Vec<usize>> {
    let n = indicators.len();
    if n == 0 {
        return Err(Error::EmptyMesh);
    }
    if indicators.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::NonFinite("indicators".into()));
    }
    let total: f64 = indicators.iter().sum();
    if crit.is_uniform() || total == 0.0 {
        return Ok((0..n).collect());
    }
    // Descending by value, ascending index among ties.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| indicators[b].total_cmp(&indicators[a]).then(a.cmp(&b)));
    let mut out: Vec<usize> = match crit.kind {
        MarkingKind::Bulk => {
            let target = crit.sigma * total;
            let mut acc = 0.0;
            let mut sel = Vec::new();
            for &i in &order {
                if acc >= target {
                    break;
                }
                acc += indicators[i];
                sel.push(i);
            }
            sel
        }
        MarkingKind::Garu => {
            let max = indicators[order[0]];
            order.into_iter().filter(|&i| indicators[i] >= crit.sigma * max).collect()
        }
        MarkingKind::Puca => {
            let k = ((crit.sigma * n as f64).ceil() as usize).clamp(1, n);
            order.into_iter().take(k).collect()
        }
        MarkingKind::Uniform => unreachable!(),
    };
    out.sort_unstable();
    Ok(out)
}

/// Marked elements and the parametric spans to bisect per direction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RefinementPlan {
    pub marked: Vec<usize>,
    /// Ascending span indices into the mesh breakpoint lists.
    pub spans: Vec<Vec<usize>>,
}

impl RefinementPlan {
    pub fn new(mesh: &SpaceTimeMesh, marked: &[usize]) -> Result<Self> {
        let mut spans = vec![Vec::new(); mesh.ndirs];
        for &m in marked {
            let e = mesh
                .elements
                .get(m)
                .ok_or_else(|| Error::InvalidParameter(format!("element {m} not in mesh")))?;
            for (dir, s) in spans.iter_mut().enumerate() {
                s.push(e.spans[dir]);
            }
        }
        for s in &mut spans {
            s.sort_unstable();
            s.dedup();
        }
        Ok(Self { marked: marked.to_vec(), spans })
    }

    pub fn is_empty(&self) -> bool {
        self.marked.is_empty()
    }
}

/// Bisects every planned span; the breakpoints of `mesh` must be those of `space`.
pub fn refine(space: &TensorSplineSpace, mesh: &SpaceTimeMesh, plan: &RefinementPlan) -> Result<TensorSplineSpace> {
    if plan.spans.len() != space.ndirs() {
        return Err(Error::DimensionMismatch("plan and space directions differ".into()));
    }
    let dirs = space
        .directions()
        .iter()
        .enumerate()
        .map(|(dir, kv)| -> Result<KnotVector> {
            let bp = &mesh.breakpoints[dir];
            let new: Vec<f64> = plan.spans[dir]
                .iter()
                .map(|&s| {
                    if s + 1 >= bp.len() {
                        Err(Error::InvalidParameter(format!("span {s} outside direction {dir}")))
                    } else {
                        Ok(0.5 * (bp[s] + bp[s + 1]))
                    }
                })
                .collect::<Result<_>>()?;
            if new.is_empty() {
                Ok(kv.clone())
            } else {
                kv.insert_knots(&new)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    TensorSplineSpace::new(dirs)
}
