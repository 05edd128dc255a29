use super::*;
use crate::assembly::{
    assemble_primal, element_quadrature, eval_space, solve_primal, FnData, ProblemData, Region, SplineField,
    SplineVectorField, StabilizationParams,
};
use crate::geometry::{build_mesh, unit_cylinder, GeometryPatch, SpaceTimeMesh};
use crate::splines::TensorSplineSpace;
use proptest::prelude::*;

fn ex1() -> impl ProblemData {
    FnData {
        f: |x: &[f64], t: f64| (1.0 - x[0]) * x[0] * x[0] * (1.0 - 2.0 * t) - (2.0 - 6.0 * x[0]) * (1.0 - t) * t,
        u_d: |_: &[f64], _: f64| 0.0,
        u_0: |_: &[f64]| 0.0,
    }
}

struct Exact;
impl Exact {
    fn u(x: f64, t: f64) -> f64 {
        (1.0 - x) * x * x * (1.0 - t) * t
    }
    fn ux(x: f64, t: f64) -> f64 {
        (2.0 * x - 3.0 * x * x) * (1.0 - t) * t
    }
    fn uxx(x: f64, t: f64) -> f64 {
        (2.0 - 6.0 * x) * (1.0 - t) * t
    }
    fn ut(x: f64, t: f64) -> f64 {
        (1.0 - x) * x * x * (1.0 - 2.0 * t)
    }
}

struct Norms {
    grad2: f64,
    dt2: f64,
    final2: f64,
    final_grad2: f64,
    lap2: f64,
}

fn exact_norms(patch: &GeometryPatch, mesh: &SpaceTimeMesh, v: &SplineField) -> Norms {
    let mut n = Norms { grad2: 0.0, dt2: 0.0, final2: 0.0, final_grad2: 0.0, lap2: 0.0 };
    for e in &mesh.elements {
        let q = element_quadrature(patch, e, 6, Region::Volume).unwrap();
        let s = eval_space(patch, &v.space, e, &q);
        for (i, qp) in q.points.iter().enumerate() {
            let f = s.field(i, &v.coeffs);
            let (x, t) = (qp.x[0], qp.t);
            n.grad2 += qp.weight * (Exact::ux(x, t) - f.grad[0]).powi(2);
            n.dt2 += qp.weight * (Exact::ut(x, t) - f.dt).powi(2);
            n.lap2 += qp.weight * (Exact::uxx(x, t) - f.lap).powi(2);
        }
        if e.upper[1] == 1.0 {
            let q = element_quadrature(patch, e, 6, Region::TimeFace(true)).unwrap();
            let s = eval_space(patch, &v.space, e, &q);
            for (i, qp) in q.points.iter().enumerate() {
                let f = s.field(i, &v.coeffs);
                n.final2 += qp.weight * (Exact::u(qp.x[0], 1.0) - f.v).powi(2);
                n.final_grad2 += qp.weight * (Exact::ux(qp.x[0], 1.0) - f.grad[0]).powi(2);
            }
        }
    }
    n
}

struct Run {
    patch: GeometryPatch,
    mesh: SpaceTimeMesh,
    u: SplineField,
    delta: f64,
}

fn run(p: usize, levels: u32, theta: f64) -> Run {
    let patch = unit_cylinder(1, 1.0).unwrap();
    let space = TensorSplineSpace::uniform(2, p, levels).unwrap();
    let mesh = build_mesh(&patch, space.directions()).unwrap();
    let params = StabilizationParams::new(theta, mesh.h).unwrap();
    let sys = assemble_primal(&patch, &mesh, &space, params, &ex1(), p + 1).unwrap();
    let u = solve_primal(&sys).unwrap().0;
    Run { patch, mesh, u, delta: params.delta }
}

fn ctx<'a>(r: &'a Run, data: &'a dyn ProblemData) -> EstimateContext<'a> {
    EstimateContext { patch: &r.patch, mesh: &r.mesh, data, nq: 6 }
}

const CF1: f64 = 1.0 / std::f64::consts::PI;

#[test]
fn friedrichs_values() {
    let pi = std::f64::consts::PI;
    let c = |d| friedrichs_constant(&d).unwrap().value();
    assert!((c(SpatialDomain::Box { lengths: [1.0, 0.0], dim: 1 }) - 1.0 / pi).abs() < 1e-15);
    assert!((c(SpatialDomain::Box { lengths: [1.0, 1.0], dim: 2 }) - 0.225079).abs() < 1e-6);
    assert!((c(SpatialDomain::QuarterAnnulus { r_in: 1.0, r_out: 2.0 }) - 0.450158).abs() < 1e-6);
    assert!(friedrichs_constant(&SpatialDomain::Box { lengths: [1.0, 1.0], dim: 3 }).is_err());
    assert!(friedrichs_constant(&SpatialDomain::QuarterAnnulus { r_in: 2.0, r_out: 1.0 }).is_err());
}

#[test]
fn friedrichs_bounds_random_splines() {
    // Random fields vanishing on the lateral boundary; first node and last node fixed to zero.
    let patch = unit_cylinder(1, 1.0).unwrap();
    let space = TensorSplineSpace::uniform(2, 2, 2).unwrap();
    let mesh = build_mesh(&patch, space.directions()).unwrap();
    let n0 = space.num_basis_per_dir()[0];
    let mut s = 11u64;
    for _ in 0..20 {
        let coeffs: Vec<f64> = (0..space.dim())
            .map(|g| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let i = g % n0;
                if i == 0 || i == n0 - 1 {
                    0.0
                } else {
                    (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                }
            })
            .collect();
        let v = SplineField::new(space.clone(), coeffs).unwrap();
        let (mut l2, mut g2) = (0.0, 0.0);
        for e in &mesh.elements {
            let q = element_quadrature(&patch, e, 4, Region::Volume).unwrap();
            let se = eval_space(&patch, &space, e, &q);
            for (i, qp) in q.points.iter().enumerate() {
                let f = se.field(i, &v.coeffs);
                l2 += qp.weight * f.v * f.v;
                g2 += qp.weight * f.grad[0] * f.grad[0];
            }
        }
        assert!(l2.sqrt() <= CF1 * g2.sqrt() * (1.0 + 1e-12));
    }
}

#[test]
fn beta_example_and_limits() {
    assert!((optimal_beta(1.0, 1.0, 0.5) - 0.5).abs() < 1e-15);
    assert_eq!(optimal_beta(0.0, 1.0, 0.5), f64::INFINITY);
    assert_eq!(optimal_beta(1.0, 0.0, 0.5), 0.0);
    assert_eq!(pair_bound(f64::INFINITY, 0.0, 3.0), 3.0);
    assert_eq!(pair_bound(0.0, 2.0, 0.0), 2.0);
    assert_eq!(optimal_pair(4.0, 0.0).1, 4.0);
    assert_eq!(optimal_pair(0.0, 9.0).1, 9.0);
}

fn golden_min(f: impl Fn(f64) -> f64) -> f64 {
    // scan in log(beta) on [1e-4, 1e4]
    let (mut a, mut b) = ((1e-4f64).ln(), (1e4f64).ln());
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..200 {
        if f(c.exp()) < f(d.exp()) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    ((a + b) / 2.0).exp()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]
    #[test]
    fn beta_matches_golden_scan(md in 0.01f64..10.0, meq in 0.01f64..10.0, cf in 0.1f64..1.0) {
        let val = |b: f64| pair_bound(b, md * md, cf * cf * meq * meq);
        let beta = optimal_beta(md, meq, cf);
        let scan = golden_min(val);
        prop_assert!((beta - scan).abs() <= 1e-6 * beta);
        prop_assert!(val(beta) <= val(beta * 1.01) && val(beta) <= val(beta * 0.99));
        prop_assert!((val(beta) - (md + cf * meq).powi(2)).abs() <= 1e-12 * val(beta));
    }

    #[test]
    fn alpha_matches_golden_scan(a in 0.01f64..10.0, b in 0.01f64..10.0) {
        let val = |x: f64| pair_bound(x, a * a, b * b);
        let alpha = optimal_alpha_sh(a, b);
        prop_assert!((alpha - golden_min(val)).abs() <= 1e-6 * alpha);
    }
}

#[test]
fn exact_solution_gives_zero() {
    let r = run(3, 1, 0.3);
    let data = ex1();
    let c = ctx(&r, &data);
    let fl = optimize_flux(&c, &r.u, &TensorSplineSpace::uniform(2, 3, 1).unwrap(), CF1, 2).unwrap();
    let ints = integrate_residuals(&c, &r.u, Some(&fl.y), Some(&r.u)).unwrap();
    let scale = exact_norms(&r.patch, &r.mesh, &SplineField::zeros(r.u.space.clone())).grad2;
    for rep in [
        majorant_i(&ints, CF1, None, 0.0),
        majorant_i_sh(&ints, CF1, r.delta, None, None, 0.0).unwrap(),
        majorant_ii(&ints, CF1, None, 0.0),
        majorant_ii_sh(&ints, CF1, r.delta, None, None, 0.0).unwrap(),
        error_identity(&ints, 0.0),
    ] {
        assert!(rep.value.abs() <= 1e-16 * scale.max(1.0) || rep.value.abs() < 1e-20, "{:?} {}", rep.kind, rep.value);
    }
}

#[test]
fn bounds_hold_and_recombine() {
    for (lev, theta) in [(1, 0.0), (2, 0.0), (3, 0.5), (2, 1.0)] {
        let r = run(2, lev, theta);
        let data = ex1();
        let c = ctx(&r, &data);
        let yspace = TensorSplineSpace::uniform(2, 3, 1).unwrap();
        let fl = optimize_flux(&c, &r.u, &yspace, CF1, 2).unwrap();
        let wfield = {
            let space = TensorSplineSpace::uniform(2, 3, 1).unwrap();
            let mesh = build_mesh(&r.patch, space.directions()).unwrap();
            let p = StabilizationParams::new(theta, r.mesh.h).unwrap();
            solve_primal(&assemble_primal(&r.patch, &mesh, &space, p, &data, 4).unwrap()).unwrap().0
        };
        let ints = integrate_residuals(&c, &r.u, Some(&fl.y), Some(&wfield)).unwrap();
        let n = exact_norms(&r.patch, &r.mesh, &r.u);
        let m1 = majorant_i(&ints, CF1, None, 0.0);
        let m1sh = majorant_i_sh(&ints, CF1, r.delta, None, None, 0.0).unwrap();
        let m2 = majorant_ii(&ints, CF1, None, 0.0);
        let m2sh = majorant_ii_sh(&ints, CF1, r.delta, None, None, 0.0).unwrap();
        let eid = error_identity(&ints, 0.0);
        let sh2 = n.grad2 + r.delta * n.dt2 + n.final2 + r.delta * n.final_grad2;
        let ii2 = n.grad2 + r.delta * n.dt2 + n.final2 + 0.5 * r.delta * n.final_grad2;
        assert!(m1.value >= n.grad2 + n.final2, "lev {lev}");
        assert!(m1sh.value >= sh2);
        assert!(m2.value >= n.grad2);
        assert!(m2sh.value >= ii2);
        let l2 = n.lap2 + n.dt2 + n.final_grad2;
        assert!((eid.value - l2).abs() <= 1e-8 * l2, "{} {}", eid.value, l2);
        for rep in [&m1, &m1sh, &m2, &m2sh, &eid] {
            assert!((rep.terms.recombine() - rep.value).abs() <= 1e-12 * rep.value);
        }
        let s: f64 = m1.indicators.iter().sum();
        assert!((s - m1.terms.recombine_part_md()).abs() <= 1e-12 * s);
        let s: f64 = eid.indicators.iter().sum();
        assert!((s - eid.value).abs() <= 1e-12 * eid.value);
        // history non-increasing
        assert!(fl.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }
}

impl MajorantTerms {
    fn recombine_part_md(&self) -> f64 {
        match *self {
            MajorantTerms::I { m_d2, .. } => m_d2,
            _ => unreachable!(),
        }
    }
}

#[test]
fn zero_delta_reduces() {
    let r = run(2, 2, 0.0);
    let data = ex1();
    let c = ctx(&r, &data);
    let fl = optimize_flux(&c, &r.u, &TensorSplineSpace::uniform(2, 3, 1).unwrap(), CF1, 2).unwrap();
    let ints = integrate_residuals(&c, &r.u, Some(&fl.y), None).unwrap();
    let m1 = majorant_i(&ints, CF1, None, 0.0).value;
    assert_eq!(majorant_i_sh(&ints, CF1, 0.0, None, None, 0.0).unwrap().value, m1);
    assert_eq!(majorant_ii_sh(&ints, CF1, 0.0, None, None, 0.0).unwrap().value, m1);
    assert!(majorant_i_sh(&ints, CF1, -1.0, None, None, 0.0).is_err());
    assert!(majorant_ii_sh(&ints, CF1, -1.0, None, None, 0.0).is_err());
}

#[test]
fn flux_is_stationary() {
    let r = run(2, 3, 0.0);
    let data = ex1();
    let c = ctx(&r, &data);
    let fl = optimize_flux(&c, &r.u, &TensorSplineSpace::uniform(2, 3, 1).unwrap(), CF1, 2).unwrap();
    let base = fl.y.spatial_coeffs(1);
    let value = |coeffs: &[f64]| {
        let y = SplineVectorField::from_spatial(fl.y.space.clone(), coeffs, 1).unwrap();
        let ints = integrate_residuals(&c, &r.u, Some(&y), None).unwrap();
        majorant_i(&ints, CF1, Some(fl.beta_solve), 0.0).value
    };
    let m0 = value(&base);
    let mut s = 3u64;
    for _ in 0..20 {
        let dir: Vec<f64> = base
            .iter()
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        let eps = 1e-3;
        let shift = |k: f64| base.iter().zip(&dir).map(|(b, d)| b + k * eps * d).collect::<Vec<_>>();
        let (mp, mm) = (value(&shift(1.0)), value(&shift(-1.0)));
        let g = (mp - mm) / (2.0 * eps);
        let q = (mp + mm - 2.0 * m0) / (2.0 * eps * eps);
        assert!(g.abs() <= 1e-6 * 2.0 * (m0 * q).sqrt(), "g = {g}, m = {m0}, q = {q}");
    }
}

#[test]
fn gap_identity_with_exact_w_and_flux() {
    let r = run(2, 2, 0.0);
    let data = ex1();
    let exact = run(3, 1, 0.0);
    let c = ctx(&r, &data);
    let ce = ctx(&exact, &data);
    let fl = optimize_flux(&ce, &exact.u, &TensorSplineSpace::uniform(2, 3, 1).unwrap(), CF1, 1).unwrap();
    let ints = integrate_residuals(&c, &r.u, Some(&fl.y), Some(&exact.u)).unwrap();
    let grad2 = exact_norms(&r.patch, &r.mesh, &r.u).grad2;
    for beta in [0.3, 1.0, 2.5] {
        let m = majorant_ii(&ints, CF1, Some(beta), 0.0);
        let want = (4.0 * (1.0 + beta) - 2.0) * grad2;
        assert!((m.value - want).abs() <= 1e-8 * want, "{} {}", m.value, want);
        assert_eq!(gap_constant(&m), Some(4.0 * (1.0 + beta) - 2.0));
    }
}

#[test]
fn indicator_kinds() {
    let r = run(2, 2, 0.0);
    let data = ex1();
    let c = ctx(&r, &data);
    let ints = integrate_residuals(&c, &r.u, None, None).unwrap();
    assert_eq!(element_indicators(&ints, IndicatorKind::MajorantDual, None).unwrap().len(), r.mesh.num_elements());
    assert!(element_indicators(&ints, IndicatorKind::ExactEnergy, None).is_err());
    let res = element_indicators(&ints, IndicatorKind::Residual, None).unwrap();
    assert!(res.iter().all(|&v| v >= 0.0));
    assert_eq!("eid".parse::<IndicatorKind>().unwrap(), IndicatorKind::Identity);
    assert!("nope".parse::<IndicatorKind>().is_err());
}
