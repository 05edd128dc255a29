use std::fmt;
use std::time::Instant;

use serde::Serialize;

use super::{mark, refine, RefinementPlan};
use crate::assembly::{assemble_enriched, assemble_primal, coarsen_space, solve_primal, SplineField, StabilizationParams};
use crate::config::StudyConfig;
use crate::error::{Error, Result};
use crate::estimates::{
    element_indicators, error_identity, friedrichs_constant, gap_constant, integrate_residuals, majorant_i,
    majorant_i_sh, majorant_ii, majorant_ii_sh, optimize_flux, EstimateContext,
};
use crate::geometry::{build_mesh, GeometryPatch, SpaceTimeMesh};
use crate::splines::TensorSplineSpace;
use crate::study::{efficiency_indices, exact_error_norms, EstimateValues, ProblemSpec, StudyReport, StudyRow, TimingLedger};

/// Knot vectors of the trial space at one level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSnapshot {
    pub level: usize,
    pub degree: usize,
    pub knots: Vec<Vec<f64>>,
}

impl LevelSnapshot {
    /// One line per direction: `dir <k> degree <p> knots <n> : k_0 k_1 ...`.
    pub fn to_text(&self) -> String {
        let mut s = format!("level {}\n", self.level);
        for (k, kv) in self.knots.iter().enumerate() {
            let vals: Vec<String> = kv.iter().map(|x| format!("{x}")).collect();
            s += &format!("dir {k} degree {} knots {} : {}\n", self.degree, kv.len(), vals.join(" "));
        }
        s
    }
}

/// Everything one level produced.
#[derive(Debug, Clone)]
pub struct LevelOutput {
    pub row: StudyRow,
    /// Indicator of the configured kind, per element.
    pub indicators: Vec<f64>,
    pub mesh: SpaceTimeMesh,
    pub u: SplineField,
}

/// Rows and mesh snapshots of a finished study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyOutcome {
    pub report: StudyReport,
    pub snapshots: Vec<LevelSnapshot>,
}

/// A level that could not be computed, with the rows finished before it.
#[derive(Debug, Clone)]
pub struct LevelFailure {
    pub level: usize,
    pub error: Error,
    pub partial: StudyOutcome,
}

impl fmt::Display for LevelFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "level {}: {}", self.level, self.error)
    }
}

impl std::error::Error for LevelFailure {}

/// Uniform space of degree `p` after `nref0` dyadic refinements.
pub fn initial_space(spec: &ProblemSpec, cfg: &StudyConfig) -> Result<TensorSplineSpace> {
    TensorSplineSpace::uniform(spec.spatial_dim() + 1, cfg.p, cfg.nref0)
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Approximate and estimate on one trial space.
pub fn run_level(spec: &ProblemSpec, cfg: &StudyConfig, patch: &GeometryPatch, space: &TensorSplineSpace, level: usize) -> Result<LevelOutput> {
    let d = spec.spatial_dim();
    let mesh = build_mesh(patch, space.directions())?;
    let params = StabilizationParams::new(cfg.theta, mesh.h)?;
    let nq = cfg.estimate_points();
    let focus = spec.quadrature_focus();
    let mut tm = TimingLedger::default();

    let t = Instant::now();
    let sys = assemble_primal(patch, &mesh, space, params, spec, (cfg.p + 1).min(crate::quadrature::MAX_POINTS))?;
    tm.t_as_u = secs(t);
    let t = Instant::now();
    let (u, _) = solve_primal(&sys)?;
    tm.t_sol_u = secs(t);

    let t = Instant::now();
    let norms = exact_error_norms(patch, &mesh, &u, spec, params.delta, nq, focus.as_ref())?;
    tm.t_ew_norms = secs(t);

    let c_f = friedrichs_constant(&spec.domain())?.value();
    let ctx = EstimateContext { patch, mesh: &mesh, data: spec, nq };
    let est_set = cfg.estimators;
    let space_y = coarsen_space(&space.with_degree(cfg.q)?, cfg.m_ratio, cfg.nref0)?;
    let space_w = coarsen_space(&space.with_degree(cfg.r)?, cfg.l_ratio, cfg.nref0)?;
    let flux = if est_set.needs_flux() { Some(optimize_flux(&ctx, &u, &space_y, c_f, cfg.n_it)?) } else { None };
    if let Some(f) = &flux {
        tm.t_as_y = f.t_as;
        tm.t_sol_y = f.t_sol;
    }
    let w = if est_set.m2 {
        let t = Instant::now();
        let mesh_w = build_mesh(patch, space_w.directions())?;
        let sys_w = assemble_enriched(patch, &mesh_w, &space_w, params, spec, (cfg.r + 1).min(crate::quadrature::MAX_POINTS))?;
        tm.t_as_w = secs(t);
        let t = Instant::now();
        let (w, _) = solve_primal(&sys_w)?;
        tm.t_sol_w = secs(t);
        Some(w)
    } else {
        None
    };

    let t = Instant::now();
    let ints = integrate_residuals(&ctx, &u, flux.as_ref().map(|f| &f.y), w.as_ref())?;
    let mut est = EstimateValues::default();
    if est_set.m1 {
        let r = majorant_i(&ints, c_f, None, 0.0);
        est.beta = r.terms.beta();
        est.m1 = Some(r.value);
    }
    if est_set.m1_sh {
        let r = majorant_i_sh(&ints, c_f, params.delta, None, None, 0.0)?;
        est.alpha = r.terms.alpha();
        est.m1_sh = Some(r.value);
    }
    if est_set.m2 {
        let r = majorant_ii(&ints, c_f, None, 0.0);
        est.beta_ii = r.terms.beta();
        est.c_gap = gap_constant(&r);
        est.m2 = Some(r.value);
    }
    if est_set.m2_sh {
        est.m2_sh = Some(majorant_ii_sh(&ints, c_f, params.delta, None, None, 0.0)?.value);
    }
    if est_set.eid {
        est.eid2 = Some(error_identity(&ints, 0.0).value);
    }
    tm.t_ew_estimates = secs(t);

    let indicators = element_indicators(&ints, cfg.indicator, Some(&norms.grad2_elements))?;
    let row = StudyRow {
        level,
        elements: mesh.num_elements(),
        dofs_u: space.dim(),
        dofs_y: if est_set.needs_flux() { (d + 1) * space_y.dim() } else { 0 },
        dofs_w: if est_set.m2 { space_w.dim() } else { 0 },
        h: mesh.h,
        delta: params.delta,
        efficiency: efficiency_indices(&norms, &est),
        norms: Some(norms),
        estimates: est,
        timings: tm,
        ..Default::default()
    };
    Ok(LevelOutput { row, indicators, mesh, u })
}

/// Runs `nref` levels starting from the initial mesh; rows are labelled `nref0, nref0 + 1, ...`.
pub fn adaptive_loop(spec: &ProblemSpec, cfg: &StudyConfig) -> std::result::Result<StudyOutcome, LevelFailure> {
    let mut out = StudyOutcome {
        report: StudyReport {
            problem: spec.name(),
            strategy: if cfg.marking.is_uniform() {
                "uniform".into()
            } else {
                format!("{}({})", cfg.marking.kind.name(), cfg.marking.sigma)
            },
            rows: Vec::new(),
        },
        snapshots: Vec::new(),
    };
    let first = cfg.nref0 as usize;
    let fail = |level: usize, error: Error, out: &StudyOutcome| LevelFailure { level, error, partial: out.clone() };
    if let Err(e) = cfg.validate() {
        return Err(fail(first, e, &out));
    }
    let patch = spec.patch().map_err(|e| fail(first, e, &out))?;
    let mut space = initial_space(spec, cfg).map_err(|e| fail(first, e, &out))?;
    for k in 0..cfg.nref {
        let level = first + k;
        out.snapshots.push(LevelSnapshot {
            level,
            degree: cfg.p,
            knots: space.directions().iter().map(|kv| kv.knots().to_vec()).collect(),
        });
        let lev = run_level(spec, cfg, &patch, &space, level).map_err(|e| fail(level, e, &out))?;
        let marked = mark(&lev.indicators, cfg.marking).map_err(|e| fail(level, e, &out))?;
        let mut row = lev.row;
        row.marked = marked.len();
        out.report.rows.push(row);
        if k + 1 < cfg.nref {
            let plan = RefinementPlan::new(&lev.mesh, &marked).map_err(|e| fail(level, e, &out))?;
            space = refine(&space, &lev.mesh, &plan).map_err(|e| fail(level, e, &out))?;
        }
    }
    out.report.compute_eoc();
    Ok(out)
}
