use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fpp_core::decomposition::{alpha_threshold, beta_schedule, verify_schedule};
use fpp_core::montecarlo::{
    load_results, parse_functionals, persist_results, run_experiment, sweep, ExperimentPlan, RunManifest, SampleTable,
    SweepGrid, Widths,
};
use fpp_core::passage::StripOptions;
use fpp_core::{GraphSpec, WeightDistribution};

use crate::args::{Cli, Command, PlanArgs, ScheduleArgs, SimulateArgs, SweepArgs};
use crate::error::CliError;

mod analyze;
mod verify;

pub const DEFAULT_OUT: &str = "fpp-out";
pub const SWEEP_INDEX: &str = "sweep.csv";
pub const SCHEDULE_FILE: &str = "schedule.csv";

pub struct Context {
    pub out: PathBuf,
    pub workers: usize,
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let workers = match cli.workers {
        Some(0) => return Err(CliError::invalid("workers", "must be at least 1")),
        Some(w) => w,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    let ctx = Context {
        out: cli.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        workers,
    };
    match cli.command {
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Sweep(a) => run_sweep(&ctx, a),
        Command::Schedule(a) => schedule(&ctx, a),
        Command::Verify(a) => verify::run(&ctx, a),
        Command::Analyze(a) => analyze::run(&ctx, a),
    }
}

pub(crate) fn parse_list<T: FromStr>(key: &str, s: &str) -> Result<Vec<T>, CliError>
where
    T::Err: Display,
{
    let items: Vec<T> = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().map_err(|e| CliError::invalid(key, format!("`{p}`: {e}"))))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(CliError::invalid(key, "empty list"));
    }
    Ok(items)
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// CSV field, quoted when needed.
pub(crate) fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub(crate) fn run_dirs(ctx: &Context, runs: Option<&str>) -> Result<Vec<PathBuf>, CliError> {
    match runs {
        Some(list) => Ok(parse_list::<String>("runs", list)?.into_iter().map(PathBuf::from).collect()),
        None => Ok(vec![ctx.out.clone()]),
    }
}

pub(crate) fn load_runs(dirs: &[PathBuf]) -> Result<Vec<(RunManifest, SampleTable)>, CliError> {
    dirs.iter()
        .map(|d| load_results(d).map_err(|e| CliError::Runtime(format!("run {}: {e}", d.display()))))
        .collect()
}

fn distribution(spec: &str) -> Result<WeightDistribution, CliError> {
    let dist = match spec.strip_prefix("file:") {
        Some(path) => WeightDistribution::empirical_from_file(Path::new(path)),
        None => spec.parse(),
    };
    dist.map_err(|e| CliError::invalid("dist", e))
}

fn build_plan(n: u32, base: GraphSpec, a: &PlanArgs) -> Result<ExperimentPlan, CliError> {
    let dist = distribution(a.dist.as_deref().ok_or_else(|| CliError::missing("dist"))?)?;
    let functionals = parse_functionals(a.functionals.as_deref().unwrap_or("T")).map_err(|e| CliError::invalid("functionals", e))?;
    let reps = a.reps.ok_or_else(|| CliError::missing("reps"))?;
    let seed = a.seed.ok_or_else(|| CliError::missing("seed"))?;
    let defaults = StripOptions::default();
    Ok(ExperimentPlan {
        namespace: a.namespace.unwrap_or(0),
        strip: StripOptions {
            initial_margin: a.margin.unwrap_or(defaults.initial_margin),
            margin_cap: a.margin_cap.or(defaults.margin_cap),
        },
        retain_samples: a.retain,
        ..ExperimentPlan::new(n, base, dist, functionals, reps, seed)
    })
}

fn report_run(manifest: &RunManifest) {
    let g = &manifest.graph;
    eprintln!(
        "n = {}, base {} vertices (diameter {}), {} cylinder vertices, {} replicates in {:.2} s",
        manifest.plan.n,
        g.base.vertex_count,
        g.base.diameter,
        g.vertices,
        manifest.plan.replicates,
        manifest.timing.wall_seconds
    );
    for s in &manifest.summaries {
        let m = &s.moments;
        eprintln!(
            "  {:>8}  mean {:>14.6}  sd {:>12.6}  se {:>10.3e}",
            s.name,
            m.mean,
            m.std_dev(),
            m.std_error()
        );
    }
}

fn simulate(ctx: &Context, a: SimulateArgs) -> Result<(), CliError> {
    let n = a.n.ok_or_else(|| CliError::missing("n"))?;
    let base = match (&a.base_file, a.h) {
        (Some(_), Some(_)) => return Err(CliError::Config("keys `h` and `base-file` are mutually exclusive".into())),
        (Some(path), None) => GraphSpec::from_edge_list_file(path).map_err(|e| CliError::invalid("base-file", e))?,
        (None, Some(h)) => GraphSpec::boxed(h, a.plan.d.unwrap_or(2)),
        (None, None) => return Err(CliError::missing("h")),
    };
    let plan = build_plan(n, base, &a.plan)?;
    plan.validate()?;
    for w in plan.warnings()? {
        eprintln!("warning: {w}");
    }
    let (manifest, samples) = run_experiment(&plan, ctx.workers)?;
    persist_results(&manifest, &samples, &ctx.out)?;
    report_run(&manifest);
    eprintln!("wrote {}", ctx.out.display());
    Ok(())
}

fn run_sweep(ctx: &Context, a: SweepArgs) -> Result<(), CliError> {
    let ns: Vec<u32> = parse_list("ns", a.ns.as_deref().ok_or_else(|| CliError::missing("ns"))?)?;
    let widths = match (&a.hs, &a.alphas) {
        (Some(_), Some(_)) => return Err(CliError::Config("keys `hs` and `alphas` are mutually exclusive".into())),
        (Some(hs), None) => Widths::Fixed { h: parse_list("hs", hs)? },
        (None, Some(al)) => Widths::Exponent {
            alpha: parse_list("alphas", al)?,
        },
        (None, None) => return Err(CliError::missing("hs")),
    };
    let plan = build_plan(ns[0], GraphSpec::boxed(1, a.plan.d.unwrap_or(2)), &a.plan)?;
    let grid = SweepGrid { n: ns, widths };
    let points = sweep(&plan, &grid, ctx.workers)?;
    let mut index = String::from("point,n,h,namespace,status,dir\n");
    let mut failures = 0;
    for (k, p) in points.iter().enumerate() {
        let dir = format!("point{k:03}-n{}-h{}", p.n, p.h);
        let status = match &p.outcome {
            Ok((manifest, samples)) => {
                persist_results(manifest, samples, &ctx.out.join(&dir))?;
                eprintln!("point {k}: n = {} h = {}", p.n, p.h);
                report_run(manifest);
                "ok"
            }
            Err(e) => {
                failures += 1;
                eprintln!("point {k}: n = {} h = {} failed: {e}", p.n, p.h);
                "failed"
            }
        };
        index.push_str(&format!("{k},{},{},{},{status},{dir}\n", p.n, p.h, p.namespace));
    }
    write_file(&ctx.out.join(SWEEP_INDEX), &index)?;
    eprintln!("wrote {}", ctx.out.display());
    if failures > 0 {
        return Err(CliError::Runtime(format!("{failures} of {} sweep points failed", points.len())));
    }
    Ok(())
}

fn schedule(ctx: &Context, a: ScheduleArgs) -> Result<(), CliError> {
    let q = match (a.q, a.p) {
        (Some(q), _) => q,
        (None, Some(p)) if p.is_finite() && p >= 4.0 => (p / 2.0).floor() as u32,
        (None, Some(_)) => return Err(CliError::Config("key `q` is required unless `p` is finite and at least 4".into())),
        (None, None) => return Err(CliError::missing("q")),
    };
    let theta = a.theta.ok_or_else(|| CliError::missing("theta"))?;
    let t = a.t.ok_or_else(|| CliError::missing("t"))?;
    let s = beta_schedule(q, theta, t).map_err(|e| CliError::Config(e.to_string()))?;
    let alpha = a.alpha.unwrap_or(s.alpha_star);
    let report = verify_schedule(&s, alpha);

    let mut rows: Vec<(String, String)> = vec![
        ("q".into(), q.to_string()),
        ("theta".into(), theta.to_string()),
        ("t".into(), t.to_string()),
        ("r".into(), s.r.to_string()),
    ];
    rows.extend(s.betas.iter().enumerate().map(|(i, b)| (format!("beta_{}", i + 1), b.to_string())));
    rows.push(("alpha_star".into(), s.alpha_star.to_string()));
    rows.push(("alpha_limit".into(), s.alpha_limit.to_string()));
    if let Some(p) = a.p {
        let th = alpha_threshold(p, theta, a.d).map_err(|e| CliError::Config(e.to_string()))?;
        rows.push(("alpha_threshold".into(), th.general_form.to_string()));
        if let Some(b) = th.box_form {
            rows.push(("alpha_threshold_box".into(), b.to_string()));
        }
    }
    rows.push(("alpha".into(), alpha.to_string()));
    rows.extend(report.margins.iter().map(|m| (format!("slack {}", m.condition), m.slack.to_string())));
    rows.push(("satisfied".into(), report.satisfied.to_string()));

    let mut csv = String::from("key,value\n");
    for (k, v) in &rows {
        csv.push_str(&format!("{},{}\n", field(k), v));
        eprintln!("{k:>24}  {v}");
    }
    let path = ctx.out.join(SCHEDULE_FILE);
    write_file(&path, &csv)?;
    eprintln!("wrote {}", path.display());
    if !report.satisfied {
        let failed: Vec<&str> = report
            .margins
            .iter()
            .filter(|m| if m.strict { m.slack <= 0.0 } else { m.slack < -fpp_core::decomposition::SCHEDULE_TOLERANCE })
            .map(|m| m.condition.as_str())
            .collect();
        return Err(CliError::CheckFailed(format!("schedule conditions violated at alpha = {alpha}: {}", failed.join("; "))));
    }
    Ok(())
}
