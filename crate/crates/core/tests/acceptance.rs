//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Always exits 0 so the workspace test run stays usable; set `STIGA_ACCEPTANCE_STRICT=1`
//! to exit 1 when any criterion fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stiga::adapt::{adaptive_loop, run_level, MarkingCriterion, MarkingKind, StudyOutcome};
use stiga::assembly::{assemble_primal, coarsen_space, solve_primal, SplineVectorField, StabilizationParams};
use stiga::config::StudyConfig;
use stiga::estimates::{
    friedrichs_constant, integrate_residuals, majorant_i, majorant_i_sh, optimize_flux, ElementIntegrals, EstimateContext,
    IndicatorKind,
};
use stiga::geometry::{build_mesh, quarter_annulus_cylinder};
use stiga::quadrature::gauss_rule;
use stiga::splines::{KnotVector, TensorSplineSpace};
use stiga::study::{ProblemSpec, StudyRow};

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn study(problem: &str, edit: impl FnOnce(&mut StudyConfig)) -> StudyOutcome {
    let mut cfg = StudyConfig::for_problem(problem).unwrap();
    cfg.marking = MarkingCriterion::uniform();
    edit(&mut cfg);
    let spec = ProblemSpec::catalog(&cfg.problem).unwrap();
    adaptive_loop(&spec, &cfg).unwrap_or_else(|f| panic!("{problem}: {f}"))
}

fn norms(row: &StudyRow) -> &stiga::study::ErrorNorms {
    row.norms.as_ref().unwrap()
}

/// Slacks `sqrt(M) - err` of M^I, M^I_sh and M^II.
fn slacks(row: &StudyRow) -> [f64; 3] {
    let n = norms(row);
    let e = &row.estimates;
    let s = |m: Option<f64>, err: f64| m.map_or(f64::NAN, |m| m.max(0.0).sqrt() - err);
    let neg = |m: Option<f64>| m.map_or(false, |m| m < 0.0);
    let mut out = [s(e.m1, n.grad()), s(e.m1_sh, n.sh()), s(e.m2, n.grad())];
    // A negative bound is a failure regardless of the error.
    for (o, m) in out.iter_mut().zip([e.m1, e.m1_sh, e.m2]) {
        if neg(m) {
            *o = m.unwrap();
        }
    }
    out
}

fn guarantees(runs: &[(&str, &StudyOutcome)]) -> Outcome {
    let mut fails = Vec::new();
    let mut worst = f64::INFINITY;
    for (name, out) in runs {
        for row in &out.report.rows {
            for (label, s) in ["M^I", "M^I_sh", "M^II"].iter().zip(slacks(row)) {
                worst = worst.min(s);
                if !(s >= -1e-10) {
                    fails.push(format!("{name} level {} {label} slack {s:.3e}", row.level));
                }
            }
        }
    }
    let detail = if fails.is_empty() { format!("min slack {worst:.3e}") } else { fails.join("; ") };
    Outcome { name: "AC1 guaranteed upper bounds on uniform runs", pass: fails.is_empty(), detail }
}

fn identity(runs: &[(&str, &StudyOutcome)]) -> Outcome {
    let mut fails = Vec::new();
    let mut worst: f64 = 0.0;
    for (name, out) in runs {
        for row in &out.report.rows {
            let dev = row.efficiency.eid.map_or(f64::INFINITY, |v| (v - 1.0).abs());
            worst = worst.max(dev);
            if !(dev <= 0.01) {
                fails.push(format!("{name} level {} I_eff(EId) {:.4}", row.level, row.efficiency.eid.unwrap_or(f64::NAN)));
            }
        }
    }
    let detail = if fails.is_empty() { format!("max |I_eff - 1| {worst:.2e}") } else { fails.join("; ") };
    Outcome { name: "AC2 error identity within 1%", pass: fails.is_empty(), detail }
}

fn ex1_table(ex1: &StudyOutcome) -> Outcome {
    let rows = &ex1.report.rows;
    let find = |level: usize| rows.iter().find(|r| r.level == level);
    let mut ok = true;
    let mut parts = Vec::new();
    for (level, dofs, reference) in [(2, 36, 2.5516e-3), (4, 324, 1.5947e-4)] {
        match find(level) {
            Some(r) => {
                let g = norms(r).grad();
                let good = r.dofs_u == dofs && (g / reference - 1.0).abs() <= 0.05;
                ok &= good;
                parts.push(format!("level {level} dofs {} err {g:.4e} (ref {reference:.4e})", r.dofs_u));
            }
            None => {
                ok = false;
                parts.push(format!("level {level} missing"));
            }
        }
    }
    let last = rows.last().unwrap();
    let (sh, l) = (last.eoc_sh.unwrap_or(f64::NAN), last.eoc_l.unwrap_or(f64::NAN));
    ok &= (sh - 2.0).abs() <= 0.1 && (l - 1.0).abs() <= 0.1;
    parts.push(format!("final e.o.c. sh {sh:.3} L {l:.3}"));
    Outcome { name: "AC3 Ex1 reference errors and rates", pass: ok, detail: parts.join("; ") }
}

fn ex1_efficiency(ex1: &StudyOutcome) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for r in &ex1.report.rows {
        let (m1, m2) = (r.efficiency.m1.unwrap_or(f64::NAN), r.efficiency.m2.unwrap_or(f64::NAN));
        let good = (1.0..=1.6).contains(&m1) && (1.0..=1.3).contains(&m2) && m2 < m1;
        ok &= good;
        parts.push(format!("{}:{m1:.4}/{m2:.4}{}", r.level, if good { "" } else { "!" }));
    }
    Outcome { name: "AC4 Ex1 efficiency of M^I and M^II", pass: ok, detail: format!("level:I_eff(M^I)/I_eff(M^II) {}", parts.join(" ")) }
}

fn rates() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for p in [2usize, 3] {
        let out = study("ex2-1", |c| {
            c.p = p;
            (c.q, c.r) = (p + 2, p + 2);
            c.nref0 = 1;
            c.nref = 5;
            c.estimators = "eid".parse().unwrap();
            c.indicator = IndicatorKind::ExactEnergy;
        });
        let rate = out.report.rows.last().unwrap().eoc_sh.unwrap_or(f64::NAN);
        ok &= rate >= p as f64 - 0.15;
        parts.push(format!("p={p}: {rate:.3}"));
    }
    Outcome { name: "AC5 Ex2-1 rate of |||e|||_sh >= p - 0.15", pass: ok, detail: parts.join("; ") }
}

fn cubic_exact() -> Outcome {
    let out = study("ex1", |c| {
        c.p = 3;
        (c.q, c.r) = (4, 4);
        c.nref0 = 1;
        c.nref = 2;
    });
    let mut worst: f64 = 0.0;
    for r in &out.report.rows {
        let n = norms(r);
        for v in [n.grad(), n.final_l2(), n.energy(), n.sh(), n.l()] {
            worst = worst.max(v);
        }
    }
    Outcome { name: "AC6 Ex1 with p=3 is reproduced", pass: worst <= 1e-10, detail: format!("max norm {worst:.2e}") }
}

fn stationarity(rng: &mut ChaCha8Rng) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (problem, level) in [("ex1", 3u32), ("ex3", 4)] {
        let spec = ProblemSpec::catalog(problem).unwrap();
        let mut cfg = StudyConfig::for_problem(problem).unwrap();
        cfg.nref0 = level;
        let d = spec.spatial_dim();
        let patch = spec.patch().unwrap();
        let space = TensorSplineSpace::uniform(d + 1, cfg.p, level).unwrap();
        let mesh = build_mesh(&patch, space.directions()).unwrap();
        let params = StabilizationParams::new(cfg.theta, mesh.h).unwrap();
        let u = solve_primal(&assemble_primal(&patch, &mesh, &space, params, &spec, cfg.p + 1).unwrap()).unwrap().0;
        let ctx = EstimateContext { patch: &patch, mesh: &mesh, data: &spec, nq: cfg.estimate_points() };
        let c_f = friedrichs_constant(&spec.domain()).unwrap().value();
        let space_y = coarsen_space(&space.with_degree(cfg.q).unwrap(), cfg.m_ratio, cfg.nref0).unwrap();
        let flux = optimize_flux(&ctx, &u, &space_y, c_f, cfg.n_it).unwrap();
        let base = flux.y.spatial_coeffs(d);
        let m = |c: &[f64]| {
            let y = SplineVectorField::from_spatial(space_y.clone(), c, d).unwrap();
            let ints = integrate_residuals(&ctx, &u, Some(&y), None).unwrap();
            majorant_i(&ints, c_f, Some(flux.beta_solve), 0.0).value
        };
        let m0 = m(&base);
        let eps = 1e-2;
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let mut dir: Vec<f64> = (0..base.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let nrm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            dir.iter_mut().for_each(|x| *x /= nrm);
            let shifted = |s: f64| base.iter().zip(&dir).map(|(b, v)| b + s * v).collect::<Vec<_>>();
            let (mp, mm) = (m(&shifted(eps)), m(&shifted(-eps)));
            let g = (mp - mm) / (2.0 * eps);
            let q = (mp + mm - 2.0 * m0) / (2.0 * eps * eps);
            let scale = 2.0 * (m0 * q.max(0.0)).sqrt();
            worst = worst.max(g.abs() / scale);
        }
        ok &= worst <= 1e-6;
        parts.push(format!("{problem}: max |g| / 2 sqrt(M Q) = {worst:.2e}"));
    }
    Outcome { name: "AC7 flux is stationary for M^I at beta_solve", pass: ok, detail: parts.join("; ") }
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc < fd {
            b = d;
            (d, fd) = (c, fc);
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            (c, fc) = (d, fd);
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Residual magnitudes stay within three decades so the scan itself resolves 1e-6 in f64.
fn parameter_scan(rng: &mut ChaCha8Rng) -> Outcome {
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let ints = vec![ElementIntegrals {
            rd2: 10f64.powf(rng.gen_range(-3.0..0.0)),
            req2: 10f64.powf(rng.gen_range(-3.0..0.0)),
            div_rd2: 10f64.powf(rng.gen_range(-3.0..0.0)),
            ..Default::default()
        }];
        let c_f = rng.gen_range(0.1..1.0);
        let delta = rng.gen_range(0.1..1.0);
        let best = majorant_i(&ints, c_f, None, 0.0);
        let beta = best.terms.beta().unwrap();
        let scanned = golden_min(|s| majorant_i(&ints, c_f, Some(s.exp()), 0.0).value, -30.0, 30.0).exp();
        worst = worst.max((scanned / beta - 1.0).abs());
        let sh = majorant_i_sh(&ints, c_f, delta, Some(beta), None, 0.0).unwrap();
        let alpha = sh.terms.alpha().unwrap();
        let scanned =
            golden_min(|s| majorant_i_sh(&ints, c_f, delta, Some(beta), Some(s.exp()), 0.0).unwrap().value, -30.0, 30.0).exp();
        worst = worst.max((scanned / alpha - 1.0).abs());
    }
    Outcome { name: "AC8 closed-form beta and alpha match a golden-section scan", pass: worst <= 1e-6, detail: format!("max relative deviation {worst:.2e}") }
}

fn annulus(rng: &mut ChaCha8Rng) -> Outcome {
    let patch = quarter_annulus_cylinder(1.0, 2.0, 1.0).unwrap();
    let rule = gauss_rule::<f64>(10).unwrap();
    let pieces = 8;
    let mut nodes = Vec::new();
    for k in 0..pieces {
        let (x, w) = rule.on_interval(k as f64 / pieces as f64, (k + 1) as f64 / pieces as f64);
        nodes.extend(x.into_iter().zip(w));
    }
    let mut vol = 0.0;
    for &(a, wa) in &nodes {
        for &(b, wb) in &nodes {
            vol += wa * wb * patch.jacobian_at(&[a, b, 0.5]).unwrap().det;
        }
    }
    let vol_err = (vol - 0.75 * std::f64::consts::PI).abs();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let xi: Vec<f64> = (0..3).map(|_| rng.gen_range(0.01..0.99)).collect();
        let jac = patch.jacobian_at(&xi).unwrap().matrix;
        for a in 0..3 {
            let mut p = xi.clone();
            let mut m = xi.clone();
            p[a] += h;
            m[a] -= h;
            let (fp, fm) = (patch.map(&p).unwrap(), patch.map(&m).unwrap());
            for k in 0..3 {
                let fd = (fp[k] - fm[k]) / (2.0 * h);
                worst = worst.max((fd - jac[k][a]).abs());
            }
        }
    }
    Outcome {
        name: "AC9 annulus volume and Jacobian",
        pass: vol_err <= 1e-10 && worst <= 1e-6,
        detail: format!("volume error {vol_err:.2e}, max Jacobian FD deviation {worst:.2e}"),
    }
}

/// Dofs at which a decreasing error curve reaches `target`, interpolated in log-log.
fn dofs_at(rows: &[(f64, f64)], target: f64) -> Option<f64> {
    rows.windows(2).find_map(|w| {
        let ((n0, e0), (n1, e1)) = (w[0], w[1]);
        if e0 >= target && target >= e1 {
            let s = (target.ln() - e0.ln()) / (e1.ln() - e0.ln());
            Some((n0.ln() + s * (n1.ln() - n0.ln())).exp())
        } else {
            None
        }
    })
}

fn adaptivity() -> Outcome {
    let edit = |c: &mut StudyConfig| {
        c.estimators = "m1".parse().unwrap();
        c.indicator = IndicatorKind::MajorantDual;
    };
    let uni = study("ex3", |c| {
        edit(c);
        c.nref = 3;
    });
    let ada = study("ex3", |c| {
        edit(c);
        c.marking = MarkingCriterion::new(MarkingKind::Bulk, 0.6).unwrap();
        c.nref = 6;
    });
    let curve = |o: &StudyOutcome| o.report.rows.iter().map(|r| (r.dofs_u as f64, norms(r).grad())).collect::<Vec<_>>();
    let (cu, ca) = (curve(&uni), curve(&ada));
    let target = cu.last().unwrap().1.max(ca.last().unwrap().1);
    let (nu, na) = (dofs_at(&cu, target), dofs_at(&ca, target));
    let fewer = matches!((nu, na), (Some(u), Some(a)) if a < u);
    let decreasing = ca.windows(2).all(|w| w[1].1 < w[0].1);

    let spec = ProblemSpec::Ex3;
    let mut cfg = StudyConfig::for_problem("ex3").unwrap();
    edit(&mut cfg);
    let patch = spec.patch().unwrap();
    let space = stiga::adapt::initial_space(&spec, &cfg).unwrap();
    let lev = run_level(&spec, &cfg, &patch, &space, cfg.nref0 as usize).unwrap();
    let peak = spec.peak().unwrap();
    let xi = [peak[0], peak[1] / spec.final_time()];
    let argmax = (0..lev.indicators.len()).max_by(|&a, &b| lev.indicators[a].total_cmp(&lev.indicators[b])).unwrap();
    let at_peak = lev.mesh.elements[argmax].contains(&xi);

    let fmt = |c: &[(f64, f64)]| c.iter().map(|(n, e)| format!("{n}:{e:.3e}")).collect::<Vec<_>>().join(" ");
    Outcome {
        name: "AC10 Ex3 bulk(0.6) beats uniform refinement",
        pass: fewer && decreasing && at_peak,
        detail: format!(
            "at err {target:.3e}: adaptive {:.0} vs uniform {:.0} dofs; decreasing {decreasing}; peak element marked first {at_peak}; adaptive {}; uniform {}",
            na.unwrap_or(f64::NAN),
            nu.unwrap_or(f64::NAN),
            fmt(&ca),
            fmt(&cu)
        ),
    }
}

fn random_knots(rng: &mut ChaCha8Rng) -> KnotVector {
    let p = rng.gen_range(1..=5);
    let mut interior = Vec::new();
    let mut x = 0.0;
    loop {
        x += rng.gen_range(0.03..0.3);
        if x > 0.97 {
            break;
        }
        for _ in 0..rng.gen_range(1..=p) {
            interior.push(x);
        }
    }
    let mut knots = vec![0.0; p + 1];
    knots.extend(interior);
    knots.extend(vec![1.0; p + 1]);
    KnotVector::new(knots, p).unwrap()
}

fn spline_kernels(rng: &mut ChaCha8Rng) -> Outcome {
    let (mut pou, mut dsum, mut fd, mut nest): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..1000 {
        let kv = random_knots(rng);
        let x = rng.gen_range(0.0..1.0);
        let (_, ders) = kv.eval_derivs(x, 1).unwrap();
        pou = pou.max((ders[0].iter().sum::<f64>() - 1.0).abs());
        let dscale: f64 = ders[1].iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        dsum = dsum.max(ders[1].iter().sum::<f64>().abs() / dscale);

        let coeffs: Vec<f64> = (0..kv.num_basis()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (first, ders) = kv.eval_derivs(x, 1).unwrap();
        let exact: f64 = ders[1].iter().enumerate().map(|(j, b)| coeffs[first + j] * b).sum();
        let span = kv.find_span(x).unwrap();
        let (lo, hi) = (kv.knots()[span], kv.knots()[span + 1]);
        let h = 1e-6 * (hi - lo);
        let (a, b) = ((x - h).max(lo), (x + h).min(hi));
        let d = (kv.eval_spline(&coeffs, b).unwrap() - kv.eval_spline(&coeffs, a).unwrap()) / (b - a);
        fd = fd.max((d - exact).abs() / exact.abs().max(1.0));

        let extra: Vec<f64> = (0..rng.gen_range(1..4)).map(|_| rng.gen_range(0.01..0.99)).collect();
        let fine = kv.insert_knots(&extra).unwrap();
        let samples: Vec<f64> = fine.greville().iter().map(|&g| kv.eval_spline(&coeffs, g).unwrap()).collect();
        if let Ok(fc) = fine.interpolate(&samples) {
            for _ in 0..5 {
                let z = rng.gen_range(0.0..1.0);
                let diff = (fine.eval_spline(&fc, z).unwrap() - kv.eval_spline(&coeffs, z).unwrap()).abs();
                nest = nest.max(diff);
            }
        } else {
            nest = f64::INFINITY;
        }
    }
    let pass = pou <= 1e-12 && dsum <= 1e-12 && fd <= 1e-5 && nest <= 1e-9;
    Outcome {
        name: "AC11 spline kernels on 1000 random cases",
        pass,
        detail: format!("partition {pou:.1e}, derivative sum {dsum:.1e}, FD {fd:.1e}, nesting {nest:.1e}"),
    }
}

fn main() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20261014);
    let mut results = Vec::new();
    let report = |o: Outcome, results: &mut Vec<bool>| {
        println!("{} {} [{}]", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
        results.push(o.pass);
    };

    let ex1 = study("ex1", |c| {
        c.nref0 = 1;
        c.nref = 6;
    });
    let ex2 = study("ex2-1", |c| {
        c.nref0 = 1;
        c.nref = 5;
    });
    let ex3 = study("ex3", |c| {
        c.nref0 = 2;
        c.nref = 5;
    });
    let ex4 = study("ex4", |c| {
        c.nref0 = 1;
        c.nref = 4;
    });
    let runs = [("ex1", &ex1), ("ex2-1", &ex2), ("ex3", &ex3), ("ex4", &ex4)];
    report(guarantees(&runs), &mut results);
    report(identity(&runs), &mut results);
    report(ex1_table(&ex1), &mut results);
    report(ex1_efficiency(&ex1), &mut results);
    report(rates(), &mut results);
    report(cubic_exact(), &mut results);
    report(stationarity(&mut rng), &mut results);
    report(parameter_scan(&mut rng), &mut results);
    report(annulus(&mut rng), &mut results);
    report(adaptivity(), &mut results);
    report(spline_kernels(&mut rng), &mut results);

    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed in {:.1} s", results.len(), start.elapsed().as_secs_f64());
    if passed < results.len() && std::env::var("STIGA_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
