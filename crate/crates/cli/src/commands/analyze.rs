use statrs::distribution::{ContinuousCDF, Normal};

use super::{field, load_runs, parse_list, run_dirs, write_file, Context};
use crate::args::AnalyzeArgs;
use crate::error::CliError;
use fpp_core::montecarlo::MomentAccumulator;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const QQ_FILE: &str = "qq.csv";
pub const COVARIANCE_FILE: &str = "covariance.csv";

fn is_block_column(name: &str) -> bool {
    name == "Y" || name.strip_prefix('X').is_some_and(|k| !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()))
}

/// Normal quantiles at plotting positions `(i + 0.5) / R` against
/// standardized sorted values.
pub fn qq_points(xs: &[f64]) -> Vec<(f64, f64)> {
    let acc = MomentAccumulator::from_samples(xs);
    let sd = acc.std_dev();
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let r = xs.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let z = if sd > 0.0 { (x - acc.mean) / sd } else { 0.0 };
            (normal.inverse_cdf((i as f64 + 0.5) / r), z)
        })
        .collect()
}

/// Sample covariance of two equally long columns.
fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
}

pub fn run(ctx: &Context, a: AnalyzeArgs) -> Result<(), CliError> {
    let dirs = run_dirs(ctx, a.runs.as_deref())?;
    let runs = load_runs(&dirs)?;
    let wanted: Option<Vec<String>> = a.functionals.as_deref().map(|s| parse_list("functionals", s)).transpose()?;

    let mut summary = String::from("run,n,name,count,mean,variance,std_error,skewness,excess_kurtosis,min,max\n");
    let mut qq = String::from("run,name,rank,normal_quantile,standardized\n");
    let mut cov = String::from("run,s,t,covariance,scaled,min_st\n");
    let mut any_cov = false;
    for (dir, (manifest, samples)) in dirs.iter().zip(&runs) {
        let run = field(&dir.display().to_string());
        let n = manifest.plan.n;
        eprintln!("{} (n = {n}, {} replicates)", dir.display(), manifest.plan.replicates);
        for s in &manifest.summaries {
            let m = &s.moments;
            summary.push_str(&format!(
                "{run},{n},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                field(&s.name),
                m.count,
                m.mean,
                m.variance(),
                m.std_error(),
                m.skewness(),
                m.excess_kurtosis(),
                m.min,
                m.max
            ));
            eprintln!(
                "  {:>8}  mean {:>14.6}  var {:>12.6}  skew {:>8.4}  kurt {:>8.4}",
                s.name,
                m.mean,
                m.variance(),
                m.skewness(),
                m.excess_kurtosis()
            );
        }
        if samples.is_empty() {
            eprintln!("  no retained samples; QQ and covariance tables skipped");
            continue;
        }
        if let Some(w) = &wanted {
            if let Some(missing) = w.iter().find(|name| samples.get(name).is_none()) {
                return Err(CliError::invalid("functionals", format!("run {} has no samples of `{missing}`", dir.display())));
            }
        }
        for c in &samples.columns {
            let keep = match &wanted {
                Some(w) => w.contains(&c.name),
                None => !is_block_column(&c.name),
            };
            if !keep || c.values.len() < 2 {
                continue;
            }
            for (i, (q, z)) in qq_points(&c.values).into_iter().enumerate() {
                qq.push_str(&format!("{run},{},{i},{q:e},{z:e}\n", field(&c.name)));
            }
        }
        let mut process: Vec<(u32, &[f64])> = samples
            .columns
            .iter()
            .filter_map(|c| c.name.strip_prefix("t@").and_then(|k| k.parse().ok()).map(|k| (k, c.values.as_slice())))
            .collect();
        process.sort_by_key(|p| p.0);
        if let Some(&(k_last, last)) = process.last() {
            if last.len() >= 2 && k_last > 0 {
                let sigma2 = covariance(last, last) / k_last as f64;
                for &(j, xj) in &process {
                    for &(k, xk) in &process {
                        let c = covariance(xj, xk);
                        let (s, t) = (j as f64 / n as f64, k as f64 / n as f64);
                        cov.push_str(&format!("{run},{s},{t},{c:e},{:e},{}\n", c / (sigma2 * n as f64), s.min(t)));
                    }
                }
                any_cov = true;
            }
        }
    }
    write_file(&ctx.out.join(SUMMARY_FILE), &summary)?;
    write_file(&ctx.out.join(QQ_FILE), &qq)?;
    if any_cov {
        write_file(&ctx.out.join(COVARIANCE_FILE), &cov)?;
    }
    eprintln!("wrote {}", ctx.out.display());
    Ok(())
}
