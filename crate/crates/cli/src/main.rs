use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use stiga::adapt::{adaptive_loop, initial_space, LevelFailure, MarkingCriterion, StudyOutcome};
use stiga::config::StudyConfig;
use stiga::geometry::build_mesh;
use stiga::study::{self_check, ProblemSpec, StudyReport};

#[derive(Parser)]
#[command(name = "stiga", version, about = "Space-time IgA heat solver with functional error majorants")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one refinement study and write its reports.
    Run(StudyArgs),
    /// Run several marking strategies on the same problem and join the results.
    Compare {
        #[command(flatten)]
        study: StudyArgs,
        /// `uniform`, `bulk:0.6`, `garu:0.5:residual`, ... (marking[:sigma[:indicator]]).
        #[arg(long = "strategy", required = true)]
        strategies: Vec<String>,
    },
    /// Write the geometry and the knot vectors of the initial mesh.
    DumpMesh {
        #[arg(long)]
        example: String,
        #[arg(long)]
        nref0: Option<u32>,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long, default_value = "stiga-mesh")]
        output: PathBuf,
    },
    /// Checks f = du/dt - lap u for every catalog entry.
    Check {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
}

#[derive(Args, Clone, Default)]
struct StudyArgs {
    /// Key = value config file; flags override its entries.
    config: Option<PathBuf>,
    #[arg(long)]
    example: Option<String>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long = "m-ratio")]
    m_ratio: Option<usize>,
    #[arg(long = "l-ratio")]
    l_ratio: Option<usize>,
    #[arg(long)]
    nref: Option<usize>,
    #[arg(long)]
    nref0: Option<u32>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    marking: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    indicator: Option<String>,
    /// Comma list of m1, m1_sh, m2, m2_sh, eid (or `all`).
    #[arg(long)]
    estimators: Option<String>,
    #[arg(long = "n-it")]
    n_it: Option<usize>,
    #[arg(long)]
    quadrature: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Do not print the markdown table.
    #[arg(long)]
    quiet: bool,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(String),
    Numerical(LevelFailure),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.into())
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

impl StudyArgs {
    fn build(&self) -> Result<StudyConfig, Failure> {
        let mut cfg = match (&self.config, &self.example) {
            (Some(path), _) => {
                let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
                StudyConfig::parse(&text).map_err(config_err)?
            }
            (None, Some(ex)) => StudyConfig::for_problem(ex).map_err(config_err)?,
            (None, None) => return Err(config_err("missing problem name (give a config file or --example)")),
        };
        let mut set = |k: &str, v: Option<String>| -> Result<(), Failure> {
            match v {
                Some(v) => cfg.set(k, &v).map_err(config_err),
                None => Ok(()),
            }
        };
        if self.config.is_some() {
            set("problem", self.example.clone())?;
        }
        set("p", self.p.map(|v| v.to_string()))?;
        set("q", self.q.map(|v| v.to_string()))?;
        set("r", self.r.map(|v| v.to_string()))?;
        set("M", self.m_ratio.map(|v| v.to_string()))?;
        set("L", self.l_ratio.map(|v| v.to_string()))?;
        set("nref", self.nref.map(|v| v.to_string()))?;
        set("nref0", self.nref0.map(|v| v.to_string()))?;
        set("theta", self.theta.map(|v| v.to_string()))?;
        set("marking", self.marking.clone())?;
        set("sigma", self.sigma.map(|v| v.to_string()))?;
        set("indicator", self.indicator.clone())?;
        set("estimators", self.estimators.clone())?;
        set("n_it", self.n_it.map(|v| v.to_string()))?;
        set("quadrature", self.quadrature.map(|v| v.to_string()))?;
        set("output", self.output.as_ref().map(|v| v.display().to_string()))?;
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }
}

fn output_dir(cfg: &StudyConfig) -> PathBuf {
    cfg.output.clone().unwrap_or_else(|| PathBuf::from("stiga-out").join(&cfg.problem))
}

/// Acceptance quantities of one study as JSON.
fn summary(cfg: &StudyConfig, report: &StudyReport) -> serde_json::Value {
    let mut min_slack = [f64::INFINITY; 3];
    let mut eid_dev: f64 = 0.0;
    let levels: Vec<serde_json::Value> = report
        .rows
        .iter()
        .map(|r| {
            let n = r.norms.clone().unwrap_or_default();
            let e = &r.estimates;
            let slack = [
                e.m1.map(|m| m.sqrt() - n.grad()),
                e.m1_sh.map(|m| m.sqrt() - n.sh()),
                e.m2.map(|m| m.sqrt() - n.grad()),
            ];
            for (acc, s) in min_slack.iter_mut().zip(slack) {
                if let Some(s) = s {
                    *acc = acc.min(s);
                }
            }
            if let Some(i) = r.efficiency.eid {
                eid_dev = eid_dev.max((i - 1.0).abs());
            }
            json!({
                "level": r.level,
                "elements": r.elements,
                "dofs_u": r.dofs_u,
                "dofs_y": r.dofs_y,
                "dofs_w": r.dofs_w,
                "err_grad": n.grad(),
                "err_energy": n.energy(),
                "err_sh": n.sh(),
                "err_l": n.l(),
                "slack_m1": slack[0],
                "slack_m1_sh": slack[1],
                "slack_m2": slack[2],
                "ieff": r.efficiency,
                "eoc_grad": r.eoc_grad,
                "eoc_sh": r.eoc_sh,
                "eoc_l": r.eoc_l,
                "marked": r.marked,
                "timings": r.timings,
            })
        })
        .collect();
    let finite = |v: f64| v.is_finite().then_some(v);
    let last = report.rows.last();
    json!({
        "problem": report.problem,
        "strategy": report.strategy,
        "config": cfg,
        "levels": levels,
        "min_slack_m1": finite(min_slack[0]),
        "min_slack_m1_sh": finite(min_slack[1]),
        "min_slack_m2": finite(min_slack[2]),
        "guaranteed": min_slack.iter().all(|s| !s.is_finite() || *s >= -1e-10),
        "max_eid_deviation": eid_dev,
        "final_eoc_sh": last.and_then(|r| r.eoc_sh),
        "final_eoc_l": last.and_then(|r| r.eoc_l),
    })
}

fn write_outcome(cfg: &StudyConfig, out: &StudyOutcome, dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir.join("mesh")).with_context(|| format!("creating {}", dir.display()))?;
    let spec = ProblemSpec::catalog(&cfg.problem)?;
    let patch_text = spec.patch()?.to_text();
    fs::write(dir.join("report.csv"), out.report.to_csv()?)?;
    fs::write(dir.join("report.md"), out.report.to_markdown())?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary(cfg, &out.report))?)?;
    for snap in &out.snapshots {
        fs::write(dir.join("mesh").join(format!("level_{}.patch", snap.level)), &patch_text)?;
        fs::write(dir.join("mesh").join(format!("level_{}.knots", snap.level)), snap.to_text())?;
    }
    Ok(())
}

fn run_one(cfg: &StudyConfig, dir: &Path) -> Result<StudyOutcome, Failure> {
    let spec = ProblemSpec::catalog(&cfg.problem).map_err(config_err)?;
    match adaptive_loop(&spec, cfg) {
        Ok(out) => {
            write_outcome(cfg, &out, dir)?;
            Ok(out)
        }
        Err(fail) => {
            // Keep the finished levels on disk.
            let _ = write_outcome(cfg, &fail.partial, dir);
            Err(Failure::Numerical(fail))
        }
    }
}

fn run(args: &StudyArgs) -> Result<(), Failure> {
    let cfg = args.build()?;
    let dir = output_dir(&cfg);
    let out = run_one(&cfg, &dir)?;
    if !args.quiet {
        print!("{}", out.report.to_markdown());
    }
    eprintln!("wrote {}", dir.display());
    Ok(())
}

/// `marking[:sigma[:indicator]]`.
fn apply_strategy(cfg: &mut StudyConfig, s: &str) -> Result<String, Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() > 3 || parts[0].is_empty() {
        return Err(config_err(format!("bad strategy '{s}'")));
    }
    cfg.set("marking", parts[0]).map_err(config_err)?;
    if parts[0].eq_ignore_ascii_case("uniform") {
        cfg.marking = MarkingCriterion::uniform();
    }
    if let Some(sig) = parts.get(1) {
        cfg.set("sigma", sig).map_err(config_err)?;
    }
    if let Some(ind) = parts.get(2) {
        cfg.set("indicator", ind).map_err(config_err)?;
    }
    cfg.validate().map_err(config_err)?;
    let label = if cfg.marking.is_uniform() {
        "uniform".to_string()
    } else {
        format!("{}-{}-{}", cfg.marking.kind.name(), cfg.marking.sigma, cfg.indicator.name())
    };
    Ok(label)
}

fn compare(args: &StudyArgs, strategies: &[String]) -> Result<(), Failure> {
    let base = args.build()?;
    let root = output_dir(&base);
    let mut runs = Vec::new();
    for s in strategies {
        let mut cfg = base.clone();
        let label = apply_strategy(&mut cfg, s)?;
        cfg.output = Some(root.join(&label));
        let out = run_one(&cfg, &root.join(&label))?;
        runs.push((label, out));
    }
    let mut table = String::from("strategy,level,elements,dofs_u,err_grad,err_energy,err_sh,err_l\n");
    let mut md = String::from("| strategy | level | dofs(u_h) | ‖∇e‖ | |||e|||_sh | |||e|||_L |\n|---|---:|---:|---:|---:|---:|\n");
    for (label, out) in &runs {
        for r in &out.report.rows {
            let n = r.norms.clone().unwrap_or_default();
            table += &format!(
                "{label},{},{},{},{:.10e},{:.10e},{:.10e},{:.10e}\n",
                r.level,
                r.elements,
                r.dofs_u,
                n.grad(),
                n.energy(),
                n.sh(),
                n.l()
            );
            md += &format!("| {label} | {} | {} | {:.4e} | {:.4e} | {:.4e} |\n", r.level, r.dofs_u, n.grad(), n.sh(), n.l());
        }
    }
    fs::create_dir_all(&root)?;
    fs::write(root.join("compare.csv"), &table)?;
    fs::write(root.join("compare.md"), &md)?;
    if !args.quiet {
        print!("{md}");
    }
    eprintln!("wrote {}", root.display());
    Ok(())
}

fn dump_mesh(example: &str, nref0: Option<u32>, p: Option<usize>, output: &Path) -> Result<(), Failure> {
    let mut cfg = StudyConfig::for_problem(example).map_err(config_err)?;
    if let Some(n) = nref0 {
        cfg.nref0 = n;
    }
    if let Some(p) = p {
        cfg.p = p;
    }
    cfg.validate().map_err(config_err)?;
    let spec = ProblemSpec::catalog(example).map_err(config_err)?;
    let run = || -> anyhow::Result<()> {
        let patch = spec.patch()?;
        let space = initial_space(&spec, &cfg)?;
        let mesh = build_mesh(&patch, space.directions())?;
        fs::create_dir_all(output)?;
        fs::write(output.join("patch.txt"), patch.to_text())?;
        let mut knots = String::new();
        for (k, kv) in space.directions().iter().enumerate() {
            let v: Vec<String> = kv.knots().iter().map(|x| x.to_string()).collect();
            knots += &format!("dir {k} degree {} knots {} : {}\n", kv.degree(), v.len(), v.join(" "));
        }
        fs::write(output.join("knots.txt"), knots)?;
        let mut elems = String::from("index,lower0,upper0,lower1,upper1,lower2,upper2,h\n");
        for e in &mesh.elements {
            elems += &format!(
                "{},{},{},{},{},{},{},{:.10e}\n",
                e.index, e.lower[0], e.upper[0], e.lower[1], e.upper[1], e.lower[2], e.upper[2], e.h
            );
        }
        fs::write(output.join("elements.csv"), elems)?;
        println!("{} elements, h = {:.6e}", mesh.num_elements(), mesh.h);
        Ok(())
    };
    Ok(run()?)
}

fn check(samples: usize, seed: u64, tol: f64) -> Result<bool, Failure> {
    let mut ok = true;
    for name in ProblemSpec::names() {
        let spec = ProblemSpec::catalog(name).map_err(config_err)?;
        let worst = self_check(&spec, samples, seed).map_err(anyhow::Error::from)?;
        let pass = worst < tol;
        ok &= pass;
        println!("{} {name}: max scaled mismatch {worst:.3e}", if pass { "PASS" } else { "FAIL" });
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Command::Run(a) => run(a).map(|_| true),
        Command::Compare { study, strategies } => compare(study, strategies).map(|_| true),
        Command::DumpMesh { example, nref0, p, output } => dump_mesh(example, *nref0, *p, output).map(|_| true),
        Command::Check { samples, seed, tol } => check(*samples, *seed, *tol),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(m)) => {
            eprintln!("invalid configuration: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(f)) => {
            eprintln!("numerical failure at level {}: {}", f.level, f.error);
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
