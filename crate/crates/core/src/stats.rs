//! Statistical checks on simulated passage times.
//!
//! Every check is a pure function of sample arrays or moment summaries and
//! returns a serializable report with one entry per assertion. Tolerances are
//! three standard errors unless stated otherwise.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::decomposition::ERROR_TOLERANCE;
use crate::montecarlo::{MomentAccumulator, RunManifest, SampleTable};

/// Level of the one-sided two-sample Kolmogorov band.
pub const DOMINATION_LEVEL: f64 = 0.001;
/// Allowed factor between tail quantiles of consecutive grid points.
pub const TAIL_RATIO: f64 = 1.25;
pub const MIN_NORMALITY_SAMPLES: usize = 50;
pub const MIN_DONSKER_PATHS: usize = 500;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("degenerate sample: zero variance")]
    Degenerate,
    #[error("mismatched inputs: {0}")]
    Mismatch(String),
    #[error("inconsistent runs: {0}")]
    Inconsistent(String),
    #[error("missing data: {0}")]
    Missing(String),
}

/// One assertion of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Observed quantity.
    pub value: f64,
    /// Threshold it was compared with.
    pub bound: f64,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= bound,
            value,
            bound,
        }
    }
}

fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub sample_size: usize,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
}

impl NormalityReport {
    pub fn passes(&self, min_p: f64, max_abs_skew: f64) -> bool {
        self.ks_p_value > min_p && self.skewness.abs() < max_abs_skew
    }
}

/// Standardizes with the sample mean and variance and compares to N(0,1).
pub fn normality_diagnostics(samples: &[f64]) -> Result<NormalityReport, StatsError> {
    if samples.len() < MIN_NORMALITY_SAMPLES {
        return Err(StatsError::TooFew {
            needed: MIN_NORMALITY_SAMPLES,
            got: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let m2 = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if !(m2 > 0.0) {
        return Err(StatsError::Degenerate);
    }
    let sd = (m2 * n / (n - 1.0)).sqrt();
    let mut z: Vec<f64> = samples.iter().map(|x| (x - mean) / sd).collect();
    let skewness = z.iter().map(|v| v.powi(3)).sum::<f64>() / n / (m2 / sd.powi(2)).powf(1.5);
    let excess_kurtosis = z.iter().map(|v| v.powi(4)).sum::<f64>() / n / (m2 / sd.powi(2)).powi(2) - 3.0;
    z.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let ks_statistic = ks_statistic_sorted(&z, |x| normal.cdf(x));
    Ok(NormalityReport {
        sample_size: samples.len(),
        skewness,
        excess_kurtosis,
        ks_statistic,
        ks_p_value: kolmogorov_survival(n.sqrt() * ks_statistic),
    })
}

/// `sup |F_n - F|` for sorted data.
pub fn ks_statistic_sorted(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let f = cdf(sorted[i]);
        d = d.max(f - i as f64 / n).max((j + 1) as f64 / n - f);
        i = j + 1;
    }
    d
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi form, fast for small arguments
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|k| {
                let odd = (2 * k - 1) as f64;
                (-odd * odd * c).exp()
            })
            .sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

/// Per-n estimates extracted from one run.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingPoint {
    pub n: u32,
    pub moments: MomentAccumulator,
    pub samples: Option<Vec<f64>>,
}

impl ScalingPoint {
    pub fn from_run(manifest: &RunManifest, samples: &SampleTable, functional: &str) -> Result<Self, StatsError> {
        let moments = manifest
            .summary(functional)
            .ok_or_else(|| StatsError::Missing(format!("functional `{functional}` not in run")))?
            .clone();
        Ok(Self {
            n: manifest.plan.n,
            moments,
            samples: samples.get(functional).map(<[f64]>::to_vec),
        })
    }

    pub fn from_samples(n: u32, samples: Vec<f64>) -> Self {
        Self {
            n,
            moments: MomentAccumulator::from_samples(&samples),
            samples: Some(samples),
        }
    }

    fn variance_se(&self) -> f64 {
        match &self.samples {
            Some(xs) if xs.len() >= 3 => jackknife_variance_se(xs),
            _ => self.moments.variance_std_error(),
        }
    }
}

/// Collects one functional across runs that differ only in `n`.
pub fn scaling_points(runs: &[(RunManifest, SampleTable)], functional: &str) -> Result<Vec<ScalingPoint>, StatsError> {
    let first = runs.first().ok_or(StatsError::TooFew { needed: 2, got: 0 })?;
    for (m, _) in runs {
        if m.plan.base != first.0.plan.base || m.plan.distribution != first.0.plan.distribution {
            return Err(StatsError::Inconsistent("runs differ in base graph or weight law".into()));
        }
    }
    runs.iter().map(|(m, s)| ScalingPoint::from_run(m, s, functional)).collect()
}

/// Jackknife standard error of the unbiased sample variance.
pub fn jackknife_variance_se(xs: &[f64]) -> f64 {
    let r = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / r;
    let m2: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let loo: Vec<f64> = xs
        .iter()
        .map(|x| (m2 - (x - mean).powi(2) * r / (r - 1.0)) / (r - 2.0))
        .collect();
    let avg = loo.iter().sum::<f64>() / r;
    ((r - 1.0) / r * loo.iter().map(|v| (v - avg).powi(2)).sum::<f64>()).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: u32,
    pub mean_per_n: f64,
    pub mean_per_n_se: f64,
    pub variance_per_n: f64,
    pub variance_per_n_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// Mean per unit length at the largest n.
    pub nu_hat: f64,
    /// Largest relative difference of `mean / n` between grid points.
    pub mean_per_n_spread: f64,
    /// `max / min` of `variance / n` across the grid.
    pub variance_ratio: f64,
    pub checks: Vec<Check>,
}

impl ScalingReport {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }
}

fn sorted_points(points: &[ScalingPoint]) -> Result<Vec<&ScalingPoint>, StatsError> {
    let mut ps: Vec<&ScalingPoint> = points.iter().collect();
    ps.sort_by_key(|p| p.n);
    if ps.len() < 2 || ps.windows(2).any(|w| w[0].n == w[1].n) {
        return Err(StatsError::TooFew {
            needed: 2,
            got: ps.len(),
        });
    }
    if ps.iter().any(|p| p.moments.count < 2) {
        return Err(StatsError::TooFew {
            needed: 2,
            got: ps.iter().map(|p| p.moments.count as usize).min().unwrap_or(0),
        });
    }
    Ok(ps)
}

fn rows(ps: &[&ScalingPoint]) -> Vec<ScalingRow> {
    ps.iter()
        .map(|p| {
            let n = p.n as f64;
            ScalingRow {
                n: p.n,
                mean_per_n: p.moments.mean / n,
                mean_per_n_se: p.moments.std_error() / n,
                variance_per_n: p.moments.variance() / n,
                variance_per_n_se: p.variance_se() / n,
            }
        })
        .collect()
}

fn spreads(rows: &[ScalingRow]) -> (f64, f64) {
    let means = rows.iter().map(|r| r.mean_per_n);
    let (lo, hi) = means.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let vars = rows.iter().map(|r| r.variance_per_n);
    let (vlo, vhi) = vars.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    ((hi - lo) / lo.abs(), vhi / vlo)
}

/// Mean bounds for a subadditive point-to-point functional:
/// `nu n <= E <= mu n`, `E_{n+m} <= E_n + E_m` and `|E_n - n nu| <= mu D`.
pub fn mean_convergence_check(points: &[ScalingPoint], weight_mean: f64, diameter: u32) -> Result<ScalingReport, StatsError> {
    let ps = sorted_points(points)?;
    let rows = rows(&ps);
    let last = ps.last().unwrap();
    let big_n = last.n as f64;
    let nu_hat = last.moments.mean / big_n;
    let nu_se = last.moments.std_error() / big_n;
    let mut checks = Vec::new();
    for p in &ps {
        let n = p.n as f64;
        let se = p.moments.std_error();
        checks.push(Check::at_most(format!("nu n <= mean at n={}", p.n), nu_hat * n - 3.0 * se, p.moments.mean));
        checks.push(Check::at_most(format!("mean <= mu n at n={}", p.n), p.moments.mean - 3.0 * se, weight_mean * n));
        let combined = (se * se + (n * nu_se).powi(2)).sqrt();
        checks.push(Check::at_most(
            format!("|mean - n nu| <= mu D at n={}", p.n),
            (p.moments.mean - n * nu_hat).abs() - 3.0 * combined,
            weight_mean * diameter as f64,
        ));
    }
    for (i, a) in ps.iter().enumerate() {
        for b in &ps[i..] {
            if let Some(c) = ps.iter().find(|c| c.n == a.n + b.n) {
                let se = if a.n == b.n {
                    (c.moments.std_error().powi(2) + 4.0 * a.moments.std_error().powi(2)).sqrt()
                } else {
                    (c.moments.std_error().powi(2) + a.moments.std_error().powi(2) + b.moments.std_error().powi(2)).sqrt()
                };
                checks.push(Check::at_most(
                    format!("subadditive at {}+{}", a.n, b.n),
                    c.moments.mean - 3.0 * se,
                    a.moments.mean + b.moments.mean,
                ));
            }
        }
    }
    let (mean_per_n_spread, variance_ratio) = spreads(&rows);
    Ok(ScalingReport {
        rows,
        nu_hat,
        mean_per_n_spread,
        variance_ratio,
        checks,
    })
}

/// Positivity, boundedness and, for a fixed base, stabilization of `Var / n`
/// between `n` and `2n`.
pub fn variance_scaling_check(points: &[ScalingPoint], fixed_base: bool) -> Result<ScalingReport, StatsError> {
    let ps = sorted_points(points)?;
    let rows = rows(&ps);
    let mut checks = Vec::new();
    for r in &rows {
        checks.push(Check {
            name: format!("variance > 0 at n={}", r.n),
            passed: r.variance_per_n > 0.0,
            value: r.variance_per_n,
            bound: 0.0,
        });
    }
    let (mean_per_n_spread, variance_ratio) = spreads(&rows);
    if fixed_base {
        for a in &rows {
            if let Some(b) = rows.iter().find(|b| b.n == 2 * a.n) {
                let se = (a.variance_per_n_se.powi(2) + b.variance_per_n_se.powi(2)).sqrt();
                checks.push(Check::at_most(
                    format!("Var/n stable from n={} to n={}", a.n, b.n),
                    (a.variance_per_n - b.variance_per_n).abs(),
                    3.0 * se + 1e-12 * a.variance_per_n.max(b.variance_per_n),
                ));
            }
        }
    }
    let last = ps.last().unwrap();
    Ok(ScalingReport {
        rows,
        nu_hat: last.moments.mean / last.n as f64,
        mean_per_n_spread,
        variance_ratio,
        checks,
    })
}

/// Joint per-replicate samples for the ordering and domination checks.
#[derive(Clone, Debug, Default)]
pub struct SandwichInput<'a> {
    pub side_to_side: &'a [f64],
    pub strip: Option<&'a [f64]>,
    pub point: &'a [f64],
    /// Decomposition error `Y` and independent draws of `S_{mD}`.
    pub error: Option<&'a [f64]>,
    pub iid_sum: Option<&'a [f64]>,
    /// Moment order for the gap bound.
    pub p: f64,
    pub diameter: u32,
    /// `E[w^p]` and `E[w]` of the weight law.
    pub weight_moment_p: f64,
    pub weight_mean: f64,
    /// Full block count `m`.
    pub blocks: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub replicates: usize,
    /// Replicate ids where `T <= a <= t` fails.
    pub ordering_violations: Vec<usize>,
    /// Replicate ids with a negative decomposition error.
    pub negative_errors: Vec<usize>,
    /// `sup (F_S - F_Y)` when both samples are given.
    pub domination_excess: Option<f64>,
    pub domination_band: Option<f64>,
    pub checks: Vec<Check>,
}

impl SandwichReport {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let acc = MomentAccumulator::from_samples(xs);
    (acc.mean, acc.std_error())
}

/// One-sided two-sample Kolmogorov critical value at `level`.
pub fn one_sided_band(n: usize, m: usize, level: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    (-(level.ln()) / 2.0).sqrt() * ((n + m) / (n * m)).sqrt()
}

/// `sup_x (F_b(x) - F_a(x))`: how far `b` sits to the left of `a`.
pub fn max_cdf_excess(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => break,
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max(j as f64 / nb - i as f64 / na);
    }
    best
}

/// Ordering `T <= a <= t`, the `p`-th moment of `t - T`, and the bounds on
/// the decomposition error `Y`.
pub fn sandwich_and_domination_check(input: &SandwichInput) -> Result<SandwichReport, StatsError> {
    let r = input.side_to_side.len();
    if input.point.len() != r || input.strip.is_some_and(|a| a.len() != r) || input.error.is_some_and(|y| y.len() != r) {
        return Err(StatsError::Mismatch("per-replicate arrays differ in length".into()));
    }
    if r < 2 {
        return Err(StatsError::TooFew { needed: 2, got: r });
    }
    let mut ordering_violations = Vec::new();
    for i in 0..r {
        let mid = input.strip.map_or(input.point[i], |a| a[i]);
        if !(input.side_to_side[i] <= mid && mid <= input.point[i]) {
            ordering_violations.push(i);
        }
    }
    let mut checks = vec![Check {
        name: "T <= a <= t in every replicate".into(),
        passed: ordering_violations.is_empty(),
        value: ordering_violations.len() as f64,
        bound: 0.0,
    }];
    let gaps: Vec<f64> = (0..r)
        .map(|i| (input.point[i] - input.side_to_side[i]).abs().powf(input.p))
        .collect();
    let (gap_mean, gap_se) = mean_and_se(&gaps);
    checks.push(Check::at_most(
        format!("E|t - T|^{} <= (2D)^p E[w^p]", input.p),
        gap_mean - 3.0 * gap_se,
        (2.0 * input.diameter as f64).powf(input.p) * input.weight_moment_p,
    ));
    let mut negative_errors = Vec::new();
    let mut domination_excess = None;
    let mut domination_band = None;
    if let Some(y) = input.error {
        for (i, &v) in y.iter().enumerate() {
            if v < -ERROR_TOLERANCE * input.side_to_side[i].abs().max(1.0) {
                negative_errors.push(i);
            }
        }
        checks.push(Check {
            name: "Y >= 0 in every replicate".into(),
            passed: negative_errors.is_empty(),
            value: negative_errors.len() as f64,
            bound: 0.0,
        });
        let (y_mean, y_se) = mean_and_se(y);
        checks.push(Check::at_most(
            "E[Y] <= m D mu",
            y_mean - 3.0 * y_se,
            input.blocks as f64 * input.diameter as f64 * input.weight_mean,
        ));
        if let Some(s) = input.iid_sum {
            if s.is_empty() {
                return Err(StatsError::TooFew { needed: 1, got: 0 });
            }
            let excess = max_cdf_excess(y, s);
            let band = one_sided_band(r, s.len(), DOMINATION_LEVEL);
            checks.push(Check::at_most("F_S - F_Y within the Kolmogorov band", excess, band));
            domination_excess = Some(excess);
            domination_band = Some(band);
        }
    }
    Ok(SandwichReport {
        replicates: r,
        ordering_violations,
        negative_errors,
        domination_excess,
        domination_band,
        checks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DonskerReport {
    /// Grid times `k_j / n`.
    pub times: Vec<f64>,
    /// Scaled empirical covariance, row major.
    pub covariance: Vec<Vec<f64>>,
    pub max_deviation: f64,
    /// Correlations of increments over disjoint intervals, `(j, k, r)`.
    pub increment_correlations: Vec<(usize, usize, f64)>,
    pub increment_variances: Vec<f64>,
    pub checks: Vec<Check>,
}

impl DonskerReport {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }
}

/// Compares the covariance of the scaled process `X(k) = t_k - k nu` with
/// `min(s, t)`. `columns[j]` holds the values at `k = steps[j]`; `sigma2` is
/// the variance per unit length, estimated from the last column when `None`.
pub fn donsker_covariance_check(
    columns: &[&[f64]],
    steps: &[u32],
    n: u32,
    sigma2: Option<f64>,
) -> Result<DonskerReport, StatsError> {
    let g = columns.len();
    if g == 0 || steps.len() != g {
        return Err(StatsError::Mismatch("one column per grid point required".into()));
    }
    let r = columns[0].len();
    if columns.iter().any(|c| c.len() != r) {
        return Err(StatsError::Mismatch("columns differ in length".into()));
    }
    if r < MIN_DONSKER_PATHS {
        return Err(StatsError::TooFew {
            needed: MIN_DONSKER_PATHS,
            got: r,
        });
    }
    if steps.windows(2).any(|w| w[0] >= w[1]) || steps[0] == 0 || steps[g - 1] > n {
        return Err(StatsError::Mismatch("grid must increase within (0, n]".into()));
    }
    let rf = r as f64;
    let means: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / rf).collect();
    let cov = |a: usize, b: usize| -> f64 {
        (0..r).map(|i| (columns[a][i] - means[a]) * (columns[b][i] - means[b])).sum::<f64>() / (rf - 1.0)
    };
    let sigma2 = sigma2.unwrap_or_else(|| cov(g - 1, g - 1) / steps[g - 1] as f64);
    if !(sigma2 > 0.0) {
        return Err(StatsError::Degenerate);
    }
    let scale = n as f64 * sigma2;
    let times: Vec<f64> = steps.iter().map(|&k| k as f64 / n as f64).collect();
    let mut covariance = vec![vec![0.0; g]; g];
    let mut max_deviation: f64 = 0.0;
    for a in 0..g {
        for b in 0..g {
            covariance[a][b] = cov(a, b) / scale;
            max_deviation = max_deviation.max((covariance[a][b] - times[a].min(times[b])).abs());
        }
    }
    // increments of the scaled process, with X(0) = 0
    let incr: Vec<Vec<f64>> = (0..g)
        .map(|j| {
            (0..r)
                .map(|i| {
                    let prev = if j == 0 { 0.0 } else { columns[j - 1][i] };
                    (columns[j][i] - prev) / scale.sqrt()
                })
                .collect()
        })
        .collect();
    let accs: Vec<MomentAccumulator> = incr.iter().map(|x| MomentAccumulator::from_samples(x)).collect();
    let mut checks = Vec::new();
    let mut increment_correlations = Vec::new();
    for a in 0..g {
        for b in a + 1..g {
            let c = (0..r)
                .map(|i| (incr[a][i] - accs[a].mean) * (incr[b][i] - accs[b].mean))
                .sum::<f64>()
                / (rf - 1.0);
            let corr = c / (accs[a].std_dev() * accs[b].std_dev());
            increment_correlations.push((a, b, corr));
            checks.push(Check::at_most(
                format!("increment correlation ({a},{b}) near 0"),
                corr.abs(),
                3.0 / rf.sqrt(),
            ));
        }
    }
    let mut increment_variances = Vec::new();
    for (j, acc) in accs.iter().enumerate() {
        let width = times[j] - if j == 0 { 0.0 } else { times[j - 1] };
        let v = acc.variance();
        increment_variances.push(v);
        checks.push(Check::at_most(
            format!("increment {j} variance near {width:.4}"),
            (v - width).abs(),
            3.0 * jackknife_variance_se(&incr[j]),
        ));
    }
    Ok(DonskerReport {
        times,
        covariance,
        max_deviation,
        increment_correlations,
        increment_variances,
        checks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub n: u32,
    /// Quantiles of `pi / n` at 0.5, 0.9, 0.99 and 0.999.
    pub quantiles: [f64; 4],
    /// `E[(pi / n)^(p/2)]`.
    pub moment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub p: f64,
    pub rows: Vec<TailRow>,
    pub checks: Vec<Check>,
}

impl TailReport {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }
}

pub const TAIL_LEVELS: [f64; 4] = [0.5, 0.9, 0.99, 0.999];

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * level;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Stability of the upper tail of `pi_n / n` along a grid of `n`.
pub fn tail_geodesic_check(runs: &[(u32, &[f64])], p: f64) -> Result<TailReport, StatsError> {
    if runs.is_empty() || runs.iter().any(|(_, xs)| xs.is_empty()) {
        return Err(StatsError::TooFew { needed: 1, got: 0 });
    }
    let mut runs = runs.to_vec();
    runs.sort_by_key(|(n, _)| *n);
    let rows: Vec<TailRow> = runs
        .iter()
        .map(|&(n, xs)| {
            let mut scaled: Vec<f64> = xs.iter().map(|x| x / n as f64).collect();
            scaled.sort_by(f64::total_cmp);
            let moment = scaled.iter().map(|x| x.powf(p / 2.0)).sum::<f64>() / scaled.len() as f64;
            TailRow {
                n,
                quantiles: TAIL_LEVELS.map(|l| quantile_sorted(&scaled, l)),
                moment,
            }
        })
        .collect();
    let mut checks = Vec::new();
    for w in rows.windows(2) {
        let (a, b) = (w[0].quantiles[3], w[1].quantiles[3]);
        checks.push(Check::at_most(
            format!("99.9% quantile ratio n={} vs n={}", w[0].n, w[1].n),
            (a / b).max(b / a),
            TAIL_RATIO,
        ));
        checks.push(Check::at_most(
            format!("moment growth n={} to n={}", w[0].n, w[1].n),
            w[1].moment / w[0].moment,
            TAIL_RATIO,
        ));
    }
    Ok(TailReport { p, rows, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{derive_stream, WeightDistribution};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = derive_stream(seed, 0);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn brute_force_ks(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
        let n = xs.len() as f64;
        let mut d: f64 = 0.0;
        for &x in xs {
            let below = xs.iter().filter(|&&y| y < x).count() as f64;
            let at_or_below = xs.iter().filter(|&&y| y <= x).count() as f64;
            let f = cdf(x);
            d = d.max(f - below / n).max(at_or_below / n - f);
        }
        d
    }

    #[test]
    fn ks_matches_brute_force() {
        let normal = Normal::standard();
        for seed in 0..20 {
            let mut xs = normals(seed, 1 + 50 * seed as usize);
            // a few ties
            if xs.len() > 4 {
                xs[1] = xs[0];
                xs[3] = xs[0];
            }
            let brute = brute_force_ks(&xs, |x| normal.cdf(x));
            xs.sort_by(f64::total_cmp);
            assert_eq!(ks_statistic_sorted(&xs, |x| normal.cdf(x)), brute);
        }
    }

    #[test]
    fn kolmogorov_distribution_values() {
        // both series agree where they overlap
        let c = std::f64::consts::PI.powi(2) / (8.0 * 1.18f64.powi(2));
        let jacobi = 1.0 - (2.0 * std::f64::consts::PI).sqrt() / 1.18 * (1..=20).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum::<f64>();
        assert!((kolmogorov_survival(1.18) - jacobi).abs() < 1e-12);
        // critical values of the limiting law
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_survival(1.9495) - 0.001).abs() < 1e-4);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
        assert!(kolmogorov_survival(0.2) > 0.999_999);
    }

    #[test]
    fn normal_samples_pass_calibration() {
        let mut passes = 0;
        for seed in 0..200 {
            let r = normality_diagnostics(&normals(1000 + seed, 10_000)).unwrap();
            assert!((0.0..=1.0).contains(&r.ks_statistic) && (0.0..=1.0).contains(&r.ks_p_value));
            if r.ks_p_value > 0.01 {
                passes += 1;
            }
        }
        assert!(passes >= 198, "{passes}/200");
    }

    #[test]
    fn exponential_samples_fail() {
        let dist = WeightDistribution::exponential(1.0);
        let mut rng = derive_stream(3, 3);
        let xs: Vec<f64> = (0..10_000).map(|_| dist.sample(&mut rng)).collect();
        let r = normality_diagnostics(&xs).unwrap();
        assert!(r.ks_p_value < 0.001);
        assert!(r.skewness > 1.5);
        assert!(!r.passes(0.01, 0.2));
    }

    #[test]
    fn normality_errors() {
        assert_eq!(normality_diagnostics(&[1.0; 100]), Err(StatsError::Degenerate));
        assert!(matches!(normality_diagnostics(&[1.0, 2.0]), Err(StatsError::TooFew { .. })));
    }

    #[test]
    fn normality_is_affine_invariant() {
        let xs = normals(8, 500);
        let base = normality_diagnostics(&xs).unwrap();
        for (a, b) in [(3.0, -7.0), (0.01, 1.0), (250.0, 1.0)] {
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let r = normality_diagnostics(&ys).unwrap();
            assert!((r.skewness - base.skewness).abs() < 1e-12);
            assert!((r.excess_kurtosis - base.excess_kurtosis).abs() < 1e-12);
            assert!((r.ks_statistic - base.ks_statistic).abs() < 1e-12);
        }
    }

    #[test]
    fn jackknife_matches_direct_leave_one_out() {
        let xs = normals(4, 40);
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        let loo: Vec<f64> = (0..xs.len())
            .map(|i| {
                let mut v = xs.clone();
                v.remove(i);
                var(&v)
            })
            .collect();
        let r = xs.len() as f64;
        let avg = loo.iter().sum::<f64>() / r;
        let direct = ((r - 1.0) / r * loo.iter().map(|v| (v - avg).powi(2)).sum::<f64>()).sqrt();
        assert!((jackknife_variance_se(&xs) - direct).abs() < 1e-12 * direct);
    }

    fn constant_point(n: u32, value: f64, reps: usize) -> ScalingPoint {
        ScalingPoint::from_samples(n, vec![value; reps])
    }

    #[test]
    fn deterministic_mean_scaling() {
        let pts: Vec<ScalingPoint> = [10, 20, 40].iter().map(|&n| constant_point(n, 2.0 * n as f64, 30)).collect();
        let r = mean_convergence_check(&pts, 2.0, 4).unwrap();
        assert_eq!(r.nu_hat, 2.0);
        assert!(r.passed(), "{:?}", r.checks);
        assert_eq!(r.mean_per_n_spread, 0.0);
        assert!(r.checks.iter().any(|c| c.name.starts_with("subadditive") && c.value == c.bound));
    }

    #[test]
    fn linear_synthetic_means() {
        // mean exactly 3n with a little symmetric noise
        let pts: Vec<ScalingPoint> = [5, 10, 15]
            .iter()
            .map(|&n| ScalingPoint::from_samples(n, vec![3.0 * n as f64 - 1.0, 3.0 * n as f64 + 1.0]))
            .collect();
        let r = mean_convergence_check(&pts, 3.0, 0).unwrap();
        assert_eq!(r.nu_hat, 3.0);
        assert!(r.passed(), "{:?}", r.checks);
    }

    #[test]
    fn superlinear_means_fail() {
        let pts: Vec<ScalingPoint> = [10, 20]
            .iter()
            .map(|&n| ScalingPoint::from_samples(n, vec![(n * n) as f64 - 0.1, (n * n) as f64 + 0.1]))
            .collect();
        assert!(!mean_convergence_check(&pts, 100.0, 2).unwrap().passed());
    }

    #[test]
    fn variance_scaling_fixtures() {
        let alternating = |n: u32, var: f64, reps: usize| {
            let s = var.sqrt();
            ScalingPoint::from_samples(n, (0..reps).map(|i| if i % 2 == 0 { s } else { -s }).collect())
        };
        let linear: Vec<ScalingPoint> = [100, 200, 400].iter().map(|&n| alternating(n, 2.0 * n as f64, 1000)).collect();
        let r = variance_scaling_check(&linear, true).unwrap();
        assert!(r.passed(), "{:?}", r.checks);
        assert!((r.variance_ratio - 1.0).abs() < 1e-12);
        for row in &r.rows {
            assert!((row.variance_per_n - 2.0 * 1000.0 / 999.0).abs() < 1e-12);
        }
        // cubic growth must be flagged
        let mut rng = derive_stream(2, 2);
        let cubic: Vec<ScalingPoint> = [100u32, 200]
            .iter()
            .map(|&n| {
                let s = (n as f64).powf(1.5);
                ScalingPoint::from_samples(n, (0..1000).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect())
            })
            .collect();
        assert!(!variance_scaling_check(&cubic, true).unwrap().passed());
        let degenerate: Vec<ScalingPoint> = [10, 20].iter().map(|&n| constant_point(n, 1.0, 10)).collect();
        let r = variance_scaling_check(&degenerate, true).unwrap();
        assert!(!r.passed());
        assert!(matches!(variance_scaling_check(&degenerate[..1], true), Err(StatsError::TooFew { .. })));
    }

    #[test]
    fn sandwich_negative_control() {
        let t_side = [1.0, 2.0, 3.0];
        let a = [1.5, 1.9, 3.0];
        let t = [2.0, 2.5, 3.5];
        let input = SandwichInput {
            side_to_side: &t_side,
            strip: Some(&a),
            point: &t,
            p: 2.0,
            diameter: 2,
            weight_moment_p: 2.0,
            weight_mean: 1.0,
            ..Default::default()
        };
        let r = sandwich_and_domination_check(&input).unwrap();
        assert_eq!(r.ordering_violations, vec![1]);
        assert!(!r.passed());
        let short = SandwichInput {
            point: &t[..2],
            ..input.clone()
        };
        assert!(matches!(sandwich_and_domination_check(&short), Err(StatsError::Mismatch(_))));
    }

    #[test]
    fn deterministic_domination_is_trivial() {
        let t_side = [10.0; 50];
        let y = [0.0; 50];
        let s = [6.0; 50];
        let input = SandwichInput {
            side_to_side: &t_side,
            strip: Some(&t_side),
            point: &t_side,
            error: Some(&y),
            iid_sum: Some(&s),
            p: 2.0,
            diameter: 2,
            weight_moment_p: 1.0,
            weight_mean: 1.0,
            blocks: 3,
        };
        let r = sandwich_and_domination_check(&input).unwrap();
        assert!(r.passed(), "{:?}", r.checks);
        assert_eq!(r.domination_excess, Some(0.0));
    }

    #[test]
    fn domination_detects_larger_error() {
        let dist = WeightDistribution::exponential(1.0);
        let mut rng = derive_stream(9, 9);
        let y: Vec<f64> = (0..2000).map(|_| 5.0 + dist.sample(&mut rng)).collect();
        let s: Vec<f64> = (0..2000).map(|_| dist.sample(&mut rng)).collect();
        let t: Vec<f64> = y.iter().map(|v| v + 100.0).collect();
        let input = SandwichInput {
            side_to_side: &t,
            point: &t,
            error: Some(&y),
            iid_sum: Some(&s),
            p: 2.0,
            diameter: 1,
            weight_moment_p: 2.0,
            weight_mean: 1.0,
            blocks: 100,
            ..Default::default()
        };
        let r = sandwich_and_domination_check(&input).unwrap();
        assert!(r.domination_excess.unwrap() > r.domination_band.unwrap());
        assert!(!r.passed());
    }

    #[test]
    fn cdf_excess_brute_force() {
        let a = normals(1, 37);
        let b: Vec<f64> = normals(2, 23).iter().map(|x| x + 0.3).collect();
        let ecdf = |v: &[f64], x: f64| v.iter().filter(|&&y| y <= x).count() as f64 / v.len() as f64;
        let brute = a.iter().chain(&b).map(|&x| ecdf(&b, x) - ecdf(&a, x)).fold(0.0, f64::max);
        assert!((max_cdf_excess(&a, &b) - brute).abs() < 1e-15);
        assert!((one_sided_band(100, 100, 0.001) - (0.001f64.ln() / -2.0).sqrt() * 0.02f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn donsker_with_exact_brownian_paths() {
        let n = 1000u32;
        let steps = [250u32, 500, 750, 1000];
        let paths = 5000;
        let mut rng = derive_stream(21, 0);
        let mut cols: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(paths)).collect();
        for _ in 0..paths {
            let mut x = 0.0;
            let mut prev = 0;
            for (j, &k) in steps.iter().enumerate() {
                x += ((k - prev) as f64).sqrt() * rng.sample::<f64, _>(StandardNormal) + 0.7 * (k - prev) as f64;
                prev = k;
                cols[j].push(x);
            }
        }
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        let r = donsker_covariance_check(&refs, &steps, n, None).unwrap();
        assert!(r.max_deviation < 0.05, "{}", r.max_deviation);
        assert_eq!(r.covariance[3][3], 1.0);
        // Brownian covariance at (0.5, 1.0) is 0.5
        assert!((r.covariance[1][3] - 0.5).abs() < 0.05);
        assert_eq!(r.increment_correlations.len(), 6);
        let r = donsker_covariance_check(&refs, &steps, n, Some(1.0)).unwrap();
        assert!(r.passed(), "{:?}", r.checks);
    }

    #[test]
    fn donsker_rejects_correlated_increments() {
        let steps = [500u32, 1000];
        let mut rng = derive_stream(22, 0);
        let first: Vec<f64> = (0..1000).map(|_| 500f64.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
        // second increment repeats the first
        let second: Vec<f64> = first.iter().map(|x| 2.0 * x).collect();
        let r = donsker_covariance_check(&[&first, &second], &steps, 1000, Some(1.0)).unwrap();
        assert!(!r.passed());
        assert!(matches!(
            donsker_covariance_check(&[&first[..10]], &[500], 1000, None),
            Err(StatsError::TooFew { .. })
        ));
        let flat = vec![1.0; 600];
        assert_eq!(donsker_covariance_check(&[&flat], &[10], 10, None), Err(StatsError::Degenerate));
    }

    #[test]
    fn straight_geodesics_have_flat_tails() {
        let a = vec![100.0; 20];
        let b = vec![200.0; 20];
        let r = tail_geodesic_check(&[(200, &b), (100, &a)], 4.0).unwrap();
        assert!(r.passed());
        assert_eq!(r.rows[0].n, 100);
        assert_eq!(r.rows[0].quantiles, [1.0; 4]);
        let c = vec![300.0; 20];
        assert!(!tail_geodesic_check(&[(100, &a), (200, &c)], 4.0).unwrap().passed());
    }

    #[test]
    fn quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&xs, 0.5), 3.0);
        assert_eq!(quantile_sorted(&xs, 0.9), 4.6);
        assert_eq!(quantile_sorted(&xs, 1.0), 5.0);
    }
}
