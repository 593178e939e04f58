use std::path::{Path, PathBuf};

use fpp_core::montecarlo::{simulate_iid_sum, Functional, RunManifest, SampleTable};
use fpp_core::stats::{
    donsker_covariance_check, mean_convergence_check, normality_diagnostics, sandwich_and_domination_check,
    scaling_points, tail_geodesic_check, variance_scaling_check, SandwichInput,
};
use fpp_core::weights::distribution_moment;
use serde_json::{json, Value};

use super::{load_runs, parse_list, run_dirs, write_file, Context};
use crate::args::VerifyArgs;
use crate::error::CliError;

pub const REPORT_FILE: &str = "verify.json";
pub const CHECKS: [&str; 5] = ["sandwich", "normality", "scaling", "donsker", "tails"];

/// Namespace offset of the i.i.d. comparison sums, away from sweep namespaces.
const IID_NAMESPACE_OFFSET: u64 = 1 << 20;

struct Run {
    dir: PathBuf,
    manifest: RunManifest,
    samples: SampleTable,
}

struct Settings {
    functional: Option<String>,
    p: f64,
    tail_p: f64,
    min_p: f64,
    max_skew: f64,
}

/// Result of one check on one run or on a group of runs.
struct Outcome {
    target: String,
    passed: bool,
    summary: String,
    report: Value,
}

/// Why a check could not run.
struct Skip(String);

type CheckResult = Result<Vec<Outcome>, Skip>;

fn samples<'a>(run: &'a Run, name: &str) -> Result<&'a [f64], Skip> {
    run.samples
        .get(name)
        .ok_or_else(|| Skip(format!("run {} has no samples of `{name}`", run.dir.display())))
}

fn display(dir: &Path) -> String {
    dir.display().to_string()
}

fn stats_skip(run: &Run, e: impl std::fmt::Display) -> Skip {
    Skip(format!("run {}: {e}", run.dir.display()))
}

fn sandwich(run: &Run, st: &Settings) -> Result<Outcome, Skip> {
    let plan = &run.manifest.plan;
    let side = samples(run, "T")?;
    let point = samples(run, "t")?;
    let strip = run.samples.get("a");
    let diameter = run.manifest.graph.base.diameter;
    let dist = &plan.distribution;
    let moment = distribution_moment(dist, st.p).map_err(|e| stats_skip(run, e))?;
    let blocks = plan.functionals.iter().find_map(|f| match f {
        Functional::Blocks { l } => Some(*l),
        _ => None,
    });
    let (error, iid, m) = match (blocks, run.samples.get("Y")) {
        (Some(l), Some(y)) => {
            let m = plan.n / l;
            let iid = simulate_iid_sum(
                dist,
                m as u64 * diameter as u64,
                y.len() as u64,
                plan.seed,
                plan.namespace + IID_NAMESPACE_OFFSET,
            );
            (Some(y), Some(iid), m)
        }
        _ => (None, None, 0),
    };
    let input = SandwichInput {
        side_to_side: side,
        strip,
        point,
        error,
        iid_sum: iid.as_deref(),
        p: st.p,
        diameter,
        weight_moment_p: moment,
        weight_mean: dist.mean(),
        blocks: m,
    };
    let r = sandwich_and_domination_check(&input).map_err(|e| stats_skip(run, e))?;
    let failed: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    Ok(Outcome {
        target: display(&run.dir),
        passed: r.passed(),
        summary: format!(
            "{} replicates, {} ordering violations, {} negative errors, failing: {:?}",
            r.replicates,
            r.ordering_violations.len(),
            r.negative_errors.len(),
            failed
        ),
        report: serde_json::to_value(&r).unwrap_or(Value::Null),
    })
}

fn pick_functional(run: &Run, st: &Settings, preferred: &[&str]) -> Result<String, Skip> {
    if let Some(f) = &st.functional {
        return Ok(f.clone());
    }
    preferred
        .iter()
        .find(|p| run.samples.get(p).is_some())
        .map(|p| p.to_string())
        .or_else(|| run.samples.columns.first().map(|c| c.name.clone()))
        .ok_or_else(|| Skip(format!("run {} has no retained samples", run.dir.display())))
}

fn normality(run: &Run, st: &Settings) -> Result<Outcome, Skip> {
    let name = pick_functional(run, st, &["T"])?;
    let xs = samples(run, &name)?;
    let r = normality_diagnostics(xs).map_err(|e| stats_skip(run, e))?;
    Ok(Outcome {
        target: display(&run.dir),
        passed: r.passes(st.min_p, st.max_skew),
        summary: format!(
            "{name}: KS p = {:.4} (> {}), skewness {:.4} (|.| < {}), excess kurtosis {:.4}",
            r.ks_p_value, st.min_p, r.skewness, st.max_skew, r.excess_kurtosis
        ),
        report: json!({ "functional": name, "min_p": st.min_p, "max_skew": st.max_skew, "diagnostics": r }),
    })
}

fn per_run(runs: &[Run], st: &Settings, f: fn(&Run, &Settings) -> Result<Outcome, Skip>) -> CheckResult {
    let mut out = Vec::new();
    let mut skips = Vec::new();
    for run in runs {
        match f(run, st) {
            Ok(o) => out.push(o),
            Err(Skip(m)) => skips.push(m),
        }
    }
    if out.is_empty() {
        return Err(Skip(skips.join("; ")));
    }
    for m in skips {
        eprintln!("note: {m}");
    }
    Ok(out)
}

fn scaling(runs: &[Run], st: &Settings) -> CheckResult {
    if runs.len() < 2 {
        return Err(Skip("scaling needs at least two runs".into()));
    }
    let name = match &st.functional {
        Some(f) => f.clone(),
        None => ["a", "t", "T"]
            .iter()
            .find(|p| runs.iter().all(|r| r.manifest.summary(p).is_some()))
            .map(|p| p.to_string())
            .ok_or_else(|| Skip("no functional common to all runs".into()))?,
    };
    let pairs: Vec<(RunManifest, SampleTable)> = runs.iter().map(|r| (r.manifest.clone(), r.samples.clone())).collect();
    let points = scaling_points(&pairs, &name).map_err(|e| Skip(e.to_string()))?;
    let first = &runs[0].manifest;
    let var = variance_scaling_check(&points, true).map_err(|e| Skip(e.to_string()))?;
    let mean = mean_convergence_check(&points, first.plan.distribution.mean(), first.graph.base.diameter)
        .map_err(|e| Skip(e.to_string()))?;
    let failed: Vec<&str> = var
        .checks
        .iter()
        .chain(&mean.checks)
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    let target = runs.iter().map(|r| display(&r.dir)).collect::<Vec<_>>().join(",");
    Ok(vec![Outcome {
        target,
        passed: var.passed() && mean.passed(),
        summary: format!(
            "{name}: nu_hat {:.5}, mean/n spread {:.4}, Var/n ratio {:.4}, failing: {:?}",
            mean.nu_hat, mean.mean_per_n_spread, var.variance_ratio, failed
        ),
        report: json!({ "functional": name, "variance": var, "mean": mean }),
    }])
}

fn donsker(run: &Run, _st: &Settings) -> Result<Outcome, Skip> {
    let mut cols: Vec<(u32, &[f64])> = run
        .samples
        .columns
        .iter()
        .filter_map(|c| c.name.strip_prefix("t@").and_then(|k| k.parse().ok()).map(|k| (k, c.values.as_slice())))
        .collect();
    if cols.is_empty() {
        return Err(Skip(format!("run {} has no process columns", run.dir.display())));
    }
    cols.sort_by_key(|c| c.0);
    let steps: Vec<u32> = cols.iter().map(|c| c.0).collect();
    let values: Vec<&[f64]> = cols.iter().map(|c| c.1).collect();
    let r = donsker_covariance_check(&values, &steps, run.manifest.plan.n, None).map_err(|e| stats_skip(run, e))?;
    let failed: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    Ok(Outcome {
        target: display(&run.dir),
        passed: r.passed(),
        summary: format!("max |C - min(s,t)| = {:.4}, failing: {:?}", r.max_deviation, failed),
        report: serde_json::to_value(&r).unwrap_or(Value::Null),
    })
}

fn tails(runs: &[Run], st: &Settings) -> CheckResult {
    let with_pi: Vec<(u32, &[f64], &Path)> = runs
        .iter()
        .filter_map(|r| r.samples.get("pi").map(|xs| (r.manifest.plan.n, xs, r.dir.as_path())))
        .collect();
    if with_pi.len() < 2 {
        return Err(Skip("geodesic tails need `pi` samples from at least two runs".into()));
    }
    let input: Vec<(u32, &[f64])> = with_pi.iter().map(|(n, xs, _)| (*n, *xs)).collect();
    let r = tail_geodesic_check(&input, st.tail_p).map_err(|e| Skip(e.to_string()))?;
    let failed: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let q: Vec<String> = r.rows.iter().map(|row| format!("n={}: {:.4}", row.n, row.quantiles[3])).collect();
    Ok(vec![Outcome {
        target: with_pi.iter().map(|(_, _, d)| display(d)).collect::<Vec<_>>().join(","),
        passed: r.passed(),
        summary: format!("99.9% quantiles of pi/n {}, failing: {:?}", q.join(", "), failed),
        report: serde_json::to_value(&r).unwrap_or(Value::Null),
    }])
}

pub fn run(ctx: &Context, a: VerifyArgs) -> Result<(), CliError> {
    let selected: Option<Vec<String>> = a.checks.as_deref().map(|s| parse_list("checks", s)).transpose()?;
    if let Some(sel) = &selected {
        if let Some(bad) = sel.iter().find(|c| !CHECKS.contains(&c.as_str())) {
            return Err(CliError::invalid("checks", format!("unknown check `{bad}` (expected one of {})", CHECKS.join(", "))));
        }
    }
    let st = Settings {
        functional: a.functional,
        p: a.p.unwrap_or(2.0),
        tail_p: a.tail_p.unwrap_or(4.0),
        min_p: a.min_p.unwrap_or(0.01),
        max_skew: a.max_skew.unwrap_or(0.2),
    };
    if !(st.p >= 1.0) {
        return Err(CliError::invalid("p", "must be at least 1"));
    }
    let dirs = run_dirs(ctx, a.runs.as_deref())?;
    let runs: Vec<Run> = load_runs(&dirs)?
        .into_iter()
        .zip(dirs)
        .map(|((manifest, samples), dir)| Run { dir, manifest, samples })
        .collect();

    let explicit = selected.is_some();
    let names: Vec<String> = selected.unwrap_or_else(|| CHECKS.iter().map(|s| s.to_string()).collect());
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    let mut failures = Vec::new();
    for name in &names {
        let result = match name.as_str() {
            "sandwich" => per_run(&runs, &st, sandwich),
            "normality" => per_run(&runs, &st, normality),
            "scaling" => scaling(&runs, &st),
            "donsker" => per_run(&runs, &st, donsker),
            _ => tails(&runs, &st),
        };
        match result {
            Ok(outcomes) => {
                for o in outcomes {
                    let mark = if o.passed { "PASS" } else { "FAIL" };
                    eprintln!("{name:>10} {mark} {}: {}", o.target, o.summary);
                    if !o.passed {
                        failures.push(format!("{name} on {}", o.target));
                    }
                    entries.push(json!({
                        "check": name,
                        "target": o.target,
                        "passed": o.passed,
                        "report": o.report,
                    }));
                }
            }
            Err(Skip(why)) if explicit => {
                return Err(CliError::Config(format!("check `{name}` cannot run: {why}")));
            }
            Err(Skip(why)) => {
                eprintln!("{name:>10} skipped: {why}");
                skipped.push(json!({ "check": name, "reason": why }));
            }
        }
    }
    if entries.is_empty() {
        return Err(CliError::Config("no check could run on the given runs".into()));
    }
    let report = json!({
        "passed": failures.is_empty(),
        "runs": runs.iter().map(|r| display(&r.dir)).collect::<Vec<_>>(),
        "checks": entries,
        "skipped": skipped,
    });
    let path = ctx.out.join(REPORT_FILE);
    write_file(&path, &format!("{}\n", serde_json::to_string_pretty(&report).unwrap_or_default()))?;
    eprintln!("wrote {}", path.display());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(failures.join("; ")))
    }
}
