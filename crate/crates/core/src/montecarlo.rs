//! Replicate harness: independent weight draws, passage functionals,
//! mergeable moment summaries and on-disk artifacts.
//!
//! Replicate `i` of a plan always reads stream `namespace * 2^40 + i` of the
//! master seed, and summaries are accumulated in replicate order, so the
//! output does not depend on the number of workers.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomposition::{block_times_with, DecompositionError};
use crate::graph::{CylinderGraph, GraphError, GraphMetrics, GraphSpec};
use crate::passage::{PassageEngine, PassageError, PassageQuery, StripOptions};
use crate::weights::{derive_stream, sample_weights, WeightDistribution, WeightError};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_FILE: &str = "samples.csv";
/// Raw samples are kept by default up to this many replicates.
pub const RETAIN_LIMIT: u64 = 1_000_000;

const STREAM_SHIFT: u32 = 40;
const CHUNK: u64 = 1 << 16;

#[derive(Debug, Error)]
pub enum MonteCarloError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error("replicate {replicate}: {source}")]
    Replicate { replicate: u64, source: PassageError },
    #[error("replicate {replicate}: {source}")]
    Decomposition { replicate: u64, source: DecompositionError },
    #[error("could not start worker pool: {0}")]
    Pool(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("malformed {path}: {message}")]
    Format { path: String, message: String },
    #[error("empty sweep grid")]
    EmptyGrid,
}

/// A per-replicate quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Functional {
    /// `T`: side to side across `[0, n]`.
    SideToSide,
    /// `t`: origin to origin inside `[0, n]`.
    CylinderPoint,
    /// `a`: origin to origin in the infinite strip.
    StripPoint,
    /// `pi`: edge count of the geodesic of `t`.
    GeodesicLength,
    /// `L`: essential edges of `t`.
    EssentialEdges,
    /// `X1..X{m+1}` and `Y` of the block decomposition of `T`.
    Blocks { l: u32 },
    /// `t@k`: origin to origin inside `[0, k]` for `k = floor(n f)`.
    Process { fractions: Vec<f64> },
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Functional::SideToSide => write!(f, "T"),
            Functional::CylinderPoint => write!(f, "t"),
            Functional::StripPoint => write!(f, "a"),
            Functional::GeodesicLength => write!(f, "pi"),
            Functional::EssentialEdges => write!(f, "L"),
            Functional::Blocks { l } => write!(f, "blocks:{l}"),
            Functional::Process { fractions } => {
                let parts: Vec<String> = fractions.iter().map(|x| x.to_string()).collect();
                write!(f, "process:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for Functional {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        match (head, rest) {
            ("T", None) => Ok(Functional::SideToSide),
            ("t", None) => Ok(Functional::CylinderPoint),
            ("a", None) => Ok(Functional::StripPoint),
            ("pi", None) => Ok(Functional::GeodesicLength),
            ("L", None) => Ok(Functional::EssentialEdges),
            ("blocks", Some(l)) => l
                .trim()
                .parse()
                .map(|l| Functional::Blocks { l })
                .map_err(|_| format!("bad block length in `{s}`")),
            ("process", Some(fr)) => fr
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map(|fractions| Functional::Process { fractions })
                .map_err(|_| format!("bad fraction list in `{s}`")),
            _ => Err(format!("unknown functional `{s}` (expected T, t, a, pi, L, blocks:<l> or process:<f,...>)")),
        }
    }
}

/// Parses a comma separated list such as `T,t,a,blocks:100`.
/// Fractions of a process functional are separated by `/` in this form.
pub fn parse_functionals(s: &str) -> Result<Vec<Functional>, String> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.replace('/', ",").parse())
        .collect()
}

fn process_columns(n: u32, fractions: &[f64]) -> Vec<u32> {
    fractions.iter().map(|f| (n as f64 * f).floor() as u32).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub n: u32,
    pub base: GraphSpec,
    pub distribution: WeightDistribution,
    pub functionals: Vec<Functional>,
    pub replicates: u64,
    pub seed: u64,
    /// Stream namespace; replicate `i` uses stream `namespace * 2^40 + i`.
    #[serde(default)]
    pub namespace: u64,
    #[serde(default)]
    pub strip: StripOptions,
    /// `None` keeps raw samples when `replicates <= RETAIN_LIMIT`.
    #[serde(default)]
    pub retain_samples: Option<bool>,
}

impl ExperimentPlan {
    pub fn new(n: u32, base: GraphSpec, distribution: WeightDistribution, functionals: Vec<Functional>, replicates: u64, seed: u64) -> Self {
        Self {
            n,
            base,
            distribution,
            functionals,
            replicates,
            seed,
            namespace: 0,
            strip: StripOptions::default(),
            retain_samples: None,
        }
    }

    pub fn retains_samples(&self) -> bool {
        self.retain_samples.unwrap_or(self.replicates <= RETAIN_LIMIT)
    }

    pub fn stream_id(&self, replicate: u64) -> u64 {
        (self.namespace << STREAM_SHIFT) | replicate
    }

    /// Column names produced by each replicate, in order.
    pub fn sample_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for f in &self.functionals {
            match f {
                Functional::Blocks { l } => {
                    let m = self.n / l.max(&1);
                    names.extend((1..=m + 1).map(|i| format!("X{i}")));
                    names.push("Y".into());
                }
                Functional::Process { fractions } => {
                    names.extend(process_columns(self.n, fractions).iter().map(|k| format!("t@{k}")));
                }
                other => names.push(other.to_string()),
            }
        }
        names
    }

    pub fn validate(&self) -> Result<(), MonteCarloError> {
        let bad = |m: String| Err(MonteCarloError::Plan(m));
        if self.n < 1 {
            return bad("n must be at least 1".into());
        }
        if self.replicates < 1 {
            return bad("replicates must be at least 1".into());
        }
        if self.replicates >= 1 << STREAM_SHIFT {
            return bad(format!("at most 2^{STREAM_SHIFT} replicates per plan"));
        }
        if self.namespace >= 1 << (64 - STREAM_SHIFT) {
            return bad(format!("namespace must be below 2^{}", 64 - STREAM_SHIFT));
        }
        if self.functionals.is_empty() {
            return bad("functional set is empty".into());
        }
        self.distribution.validate()?;
        for f in &self.functionals {
            match f {
                Functional::Blocks { l } if *l < 1 || *l > self.n => {
                    return bad(format!("block length {l} outside [1, {}]", self.n));
                }
                Functional::Process { fractions } => {
                    if fractions.is_empty() {
                        return bad("process functional needs at least one fraction".into());
                    }
                    if fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) || fractions.windows(2).any(|w| w[0] >= w[1]) {
                        return bad("process fractions must increase within (0, 1]".into());
                    }
                    let cols = process_columns(self.n, fractions);
                    if cols[0] < 1 || cols.windows(2).any(|w| w[0] >= w[1]) {
                        return bad(format!("process fractions give columns {cols:?}; need distinct columns >= 1"));
                    }
                }
                _ => {}
            }
        }
        let mut names = self.sample_names();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("functionals produce duplicate sample names".into());
        }
        Ok(())
    }

    /// Non-fatal configuration concerns.
    pub fn warnings(&self) -> Result<Vec<String>, MonteCarloError> {
        let d = self.base.materialize()?.metrics().diameter as u64;
        let mut out = Vec::new();
        for f in &self.functionals {
            if let Functional::Blocks { l } = f {
                if d * d > *l as u64 {
                    out.push(format!(
                        "block length {l} is not large against the squared base diameter {}; block moment bounds assume D^2 = o(l)",
                        d * d
                    ));
                }
            }
        }
        Ok(out)
    }
}

/// Count, mean and central moment sums `M_2..M_8`, mergeable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentAccumulator {
    pub count: u64,
    pub mean: f64,
    /// `sums[k] = sum (x - mean)^(k+2)` for orders 2 through 8.
    pub sums: [f64; 7],
    pub min: f64,
    pub max: f64,
}

impl Default for MomentAccumulator {
    fn default() -> Self {
        Self {
            count: 0,
            mean: 0.0,
            sums: [0.0; 7],
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

pub const MAX_MOMENT_ORDER: usize = 8;

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples(xs: &[f64]) -> Self {
        let mut acc = Self::new();
        for &x in xs {
            acc.push(x);
        }
        acc
    }

    pub fn push(&mut self, x: f64) {
        let single = MomentAccumulator {
            count: 1,
            mean: x,
            sums: [0.0; 7],
            min: x,
            max: x,
        };
        *self = merge_accumulators(self, &single);
    }

    /// `M_p`, the sum of `(x - mean)^p`; zero for `p < 2`.
    pub fn sum(&self, p: usize) -> f64 {
        if p < 2 {
            0.0
        } else {
            self.sums[p - 2]
        }
    }

    /// Plug-in central moment `M_p / count`, `2 <= p <= 8`.
    pub fn central_moment(&self, p: usize) -> f64 {
        assert!((2..=MAX_MOMENT_ORDER).contains(&p));
        self.sum(p) / self.count as f64
    }

    /// Unbiased variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        self.sums[0] / (self.count - 1) as f64
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        (self.variance() / self.count as f64).sqrt()
    }

    /// Standard error of [`variance`](Self::variance) from the fourth moment.
    pub fn variance_std_error(&self) -> f64 {
        let n = self.count as f64;
        if self.count < 4 {
            return f64::NAN;
        }
        let m2 = self.central_moment(2);
        let m4 = self.central_moment(4);
        ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt() * n / (n - 1.0)
    }

    pub fn skewness(&self) -> f64 {
        let n = self.count as f64;
        n.sqrt() * self.sums[1] / self.sums[0].powf(1.5)
    }

    pub fn excess_kurtosis(&self) -> f64 {
        let n = self.count as f64;
        n * self.sums[2] / (self.sums[0] * self.sums[0]) - 3.0
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Pairwise combination of two accumulators.
pub fn merge_accumulators(x: &MomentAccumulator, y: &MomentAccumulator) -> MomentAccumulator {
    if x.count == 0 {
        return y.clone();
    }
    if y.count == 0 {
        return x.clone();
    }
    let na = x.count as f64;
    let nb = y.count as f64;
    let n = na + nb;
    let delta = y.mean - x.mean;
    let mean = x.mean + delta * nb / n;
    let a_shift = -nb * delta / n;
    let b_shift = na * delta / n;
    let mut sums = [0.0; 7];
    for p in 2..=MAX_MOMENT_ORDER {
        let mut s = x.sum(p) + y.sum(p);
        for k in 1..=p - 2 {
            s += binomial(p, k) * (x.sum(p - k) * a_shift.powi(k as i32) + y.sum(p - k) * b_shift.powi(k as i32));
        }
        let pf = p as i32;
        s += (na * nb * delta / n).powi(pf) * (1.0 / nb.powi(pf - 1) - (-1.0 / na).powi(pf - 1));
        sums[p - 2] = s;
    }
    MomentAccumulator {
        count: x.count + y.count,
        mean,
        sums,
        min: x.min.min(y.min),
        max: x.max.max(y.max),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleColumn {
    pub name: String,
    pub values: Vec<f64>,
}

/// Raw per-replicate values, one column per sample name, rows in replicate order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleTable {
    pub columns: Vec<SampleColumn>,
}

impl SampleTable {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|c| c.name == name).map(|c| c.values.as_slice())
    }

    pub fn replicates(&self) -> usize {
        self.columns.first().map_or(0, |c| c.values.len())
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn summaries(&self) -> Vec<NamedSummary> {
        self.columns
            .iter()
            .map(|c| NamedSummary {
                name: c.name.clone(),
                moments: MomentAccumulator::from_samples(&c.values),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedSummary {
    pub name: String,
    pub moments: MomentAccumulator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub base: GraphMetrics,
    pub columns: u32,
    pub vertices: u32,
    pub edges: u32,
    pub enumeration_hash: u64,
}

/// Wall-clock data; the only field that differs between identical runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix: u64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub code_version: String,
    pub plan: ExperimentPlan,
    pub graph: GraphSummary,
    pub summaries: Vec<NamedSummary>,
    /// File name of the raw samples, relative to the manifest.
    pub samples_file: Option<String>,
    pub timing: Timing,
}

impl RunManifest {
    pub fn summary(&self, name: &str) -> Option<&MomentAccumulator> {
        self.summaries.iter().find(|s| s.name == name).map(|s| &s.moments)
    }

    /// Copy with the timing field cleared, for comparisons.
    pub fn masked(&self) -> RunManifest {
        RunManifest {
            timing: Timing::default(),
            ..self.clone()
        }
    }
}

/// Shared read-only state of one run.
struct RunContext {
    plan: ExperimentPlan,
    core: CylinderGraph,
    needs_strip: bool,
}

impl RunContext {
    fn replicate(&self, engine: &mut PassageEngine, i: u64) -> Result<Vec<f64>, MonteCarloError> {
        let plan = &self.plan;
        let mut stream = derive_stream(plan.seed, plan.stream_id(i));
        let ext = stream.substream(u64::MAX);
        let weights = sample_weights(&self.core, &plan.distribution, &mut stream);
        let n = plan.n as i64;
        let fail = |source| MonteCarloError::Replicate { replicate: i, source };
        let mut point = None;
        let mut out = Vec::new();
        for f in &plan.functionals {
            match f {
                Functional::SideToSide => out.push(engine.side_to_side(&self.core, &weights, 0, n).map_err(fail)?.value),
                Functional::CylinderPoint | Functional::GeodesicLength => {
                    if point.is_none() {
                        point = Some(engine.cylinder_point(&self.core, &weights).map_err(fail)?);
                    }
                    let p = point.as_ref().unwrap();
                    out.push(if *f == Functional::CylinderPoint { p.value } else { p.pi as f64 });
                }
                Functional::StripPoint => {
                    debug_assert!(self.needs_strip);
                    let (res, _) = engine
                        .strip_point_from_core(&self.core, &weights, &plan.distribution, &ext, &plan.strip)
                        .map_err(fail)?;
                    out.push(res.value);
                }
                Functional::EssentialEdges => {
                    let report = engine
                        .essential_edges(&self.core, &weights, PassageQuery::CylinderPoint { a: 0, b: n })
                        .map_err(fail)?;
                    out.push(report.essential as f64);
                }
                Functional::Blocks { l } => {
                    let dec = block_times_with(engine, &self.core, &weights, *l)
                        .map_err(|source| MonteCarloError::Decomposition { replicate: i, source })?;
                    out.extend_from_slice(&dec.x);
                    out.push(dec.y);
                }
                Functional::Process { fractions } => {
                    for k in process_columns(plan.n, fractions) {
                        out.push(engine.cylinder_point_between(&self.core, &weights, 0, k as i64).map_err(fail)?.value);
                    }
                }
            }
        }
        Ok(out)
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> MonteCarloError {
    MonteCarloError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Runs every replicate of `plan` on `workers` threads.
pub fn run_experiment(plan: &ExperimentPlan, workers: usize) -> Result<(RunManifest, SampleTable), MonteCarloError> {
    plan.validate()?;
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let base = Arc::new(plan.base.materialize()?);
    let base_metrics = base.metrics();
    let core = CylinderGraph::new(0, plan.n as i64, base)?;
    let ctx = RunContext {
        plan: plan.clone(),
        needs_strip: plan.functionals.contains(&Functional::StripPoint),
        core,
    };
    let names = plan.sample_names();
    let retain = plan.retains_samples();
    let mut accs = vec![MomentAccumulator::new(); names.len()];
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); if retain { names.len() } else { 0 }];
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| MonteCarloError::Pool(e.to_string()))?;
    let mut start = 0;
    while start < plan.replicates {
        let end = (start + CHUNK).min(plan.replicates);
        let rows: Vec<Result<Vec<f64>, MonteCarloError>> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map_init(PassageEngine::new, |engine, i| ctx.replicate(engine, i))
                .collect()
        });
        for row in rows {
            let row = row?;
            for (j, &v) in row.iter().enumerate() {
                accs[j].push(v);
                if retain {
                    columns[j].push(v);
                }
            }
        }
        start = end;
    }
    let core = &ctx.core;
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        plan: plan.clone(),
        graph: GraphSummary {
            base: base_metrics,
            columns: core.column_count(),
            vertices: core.vertex_count(),
            edges: core.edge_count(),
            enumeration_hash: core.enumeration_hash(),
        },
        summaries: names
            .iter()
            .zip(accs)
            .map(|(name, moments)| NamedSummary { name: name.clone(), moments })
            .collect(),
        samples_file: retain.then(|| SAMPLES_FILE.to_string()),
        timing: Timing {
            started_unix,
            wall_seconds: started.elapsed().as_secs_f64(),
        },
    };
    let samples = SampleTable {
        columns: if retain {
            names
                .into_iter()
                .zip(columns)
                .map(|(name, values)| SampleColumn { name, values })
                .collect()
        } else {
            Vec::new()
        },
    };
    Ok((manifest, samples))
}

/// Writes `manifest.json` and, when samples are present, `samples.csv` into `dir`.
pub fn persist_results(manifest: &RunManifest, samples: &SampleTable, dir: &Path) -> Result<(), MonteCarloError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut manifest = manifest.clone();
    manifest.samples_file = (!samples.is_empty()).then(|| SAMPLES_FILE.to_string());
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| io_err(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
    if samples.is_empty() {
        return Ok(());
    }
    let path = dir.join(SAMPLES_FILE);
    let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        writeln!(out, "replicate,functional,value")?;
        for r in 0..samples.replicates() {
            for c in &samples.columns {
                writeln!(out, "{r},{},{:.16e}", c.name, c.values[r])?;
            }
        }
        out.flush()
    };
    write(&mut out).map_err(|e| io_err(&path, e))
}

pub fn load_manifest(path: &Path) -> Result<RunManifest, MonteCarloError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| MonteCarloError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != SCHEMA_VERSION {
        return Err(MonteCarloError::SchemaVersion {
            found,
            expected: SCHEMA_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| MonteCarloError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_samples(path: &Path) -> Result<SampleTable, MonteCarloError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let malformed = |line: usize, msg: &str| MonteCarloError::Format {
        path: path.display().to_string(),
        message: format!("line {line}: {msg}"),
    };
    let mut table = SampleTable::default();
    let mut index: std::collections::HashMap<String, usize> = Default::default();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if k == 0 {
            if line.trim() != "replicate,functional,value" {
                return Err(malformed(1, "expected header `replicate,functional,value`"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (Some(r), Some(name), Some(v), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(malformed(k + 1, "expected three fields"));
        };
        let r: usize = r.parse().map_err(|_| malformed(k + 1, "bad replicate id"))?;
        let v: f64 = v.parse().map_err(|_| malformed(k + 1, "bad value"))?;
        let j = *index.entry(name.to_string()).or_insert_with(|| {
            table.columns.push(SampleColumn {
                name: name.to_string(),
                values: Vec::new(),
            });
            table.columns.len() - 1
        });
        if table.columns[j].values.len() != r {
            return Err(malformed(k + 1, "replicates out of order"));
        }
        table.columns[j].values.push(v);
    }
    let n = table.replicates();
    if table.columns.iter().any(|c| c.values.len() != n) {
        return Err(malformed(0, "columns have different lengths"));
    }
    Ok(table)
}

/// Reads a directory written by [`persist_results`].
pub fn load_results(dir: &Path) -> Result<(RunManifest, SampleTable), MonteCarloError> {
    let manifest = load_manifest(&dir.join(MANIFEST_FILE))?;
    let samples = match &manifest.samples_file {
        Some(f) => load_samples(&dir.join(f))?,
        None => SampleTable::default(),
    };
    Ok((manifest, samples))
}

/// Cylinder widths of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Widths {
    Fixed { h: Vec<u32> },
    /// `h = floor(n^alpha)`.
    Exponent { alpha: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub n: Vec<u32>,
    pub widths: Widths,
}

/// `floor(n^alpha)`, nudged up when rounding lands just below an integer.
pub fn width_for_exponent(n: u32, alpha: f64) -> u32 {
    let x = (n as f64).powf(alpha);
    let h = x.floor();
    if (h + 1.0) - x <= 1e-9 * x.max(1.0) {
        (h + 1.0) as u32
    } else {
        h as u32
    }
}

#[derive(Debug)]
pub struct SweepPoint {
    pub n: u32,
    pub h: u32,
    pub namespace: u64,
    pub outcome: Result<(RunManifest, SampleTable), MonteCarloError>,
}

/// One run per grid point over box bases of the dimension in `base_plan`.
/// Point `k` uses namespace `base_plan.namespace + k`.
pub fn sweep(base_plan: &ExperimentPlan, grid: &SweepGrid, workers: usize) -> Result<Vec<SweepPoint>, MonteCarloError> {
    let d = match base_plan.base {
        GraphSpec::Box { d, .. } => d,
        _ => return Err(MonteCarloError::Plan("sweeps need a box base".into())),
    };
    let mut points = Vec::new();
    for &n in &grid.n {
        match &grid.widths {
            Widths::Fixed { h } => points.extend(h.iter().map(|&h| (n, h))),
            Widths::Exponent { alpha } => points.extend(alpha.iter().map(|&a| (n, width_for_exponent(n, a)))),
        }
    }
    if points.is_empty() {
        return Err(MonteCarloError::EmptyGrid);
    }
    Ok(points
        .into_iter()
        .enumerate()
        .map(|(k, (n, h))| {
            let plan = ExperimentPlan {
                n,
                base: GraphSpec::boxed(h, d),
                namespace: base_plan.namespace + k as u64,
                ..base_plan.clone()
            };
            SweepPoint {
                n,
                h,
                namespace: plan.namespace,
                outcome: run_experiment(&plan, workers),
            }
        })
        .collect())
}

/// `reps` draws of a sum of `terms` i.i.d. weights, replicate `i` on stream
/// `namespace * 2^40 + i`.
pub fn simulate_iid_sum(dist: &WeightDistribution, terms: u64, reps: u64, seed: u64, namespace: u64) -> Vec<f64> {
    (0..reps)
        .map(|i| {
            let mut rng = derive_stream(seed, (namespace << STREAM_SHIFT) | i);
            (0..terms).map(|_| dist.sample(&mut rng)).sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    fn two_pass(xs: &[f64]) -> (f64, Vec<f64>) {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sums = (2..=8).map(|p| xs.iter().map(|x| (x - mean).powi(p)).sum()).collect();
        (mean, sums)
    }

    fn assert_acc_close(a: &MomentAccumulator, b: &MomentAccumulator, tol: f64) {
        assert_eq!(a.count, b.count);
        assert!(rel_close(a.mean, b.mean, tol), "{} vs {}", a.mean, b.mean);
        let scale = a.sums[0].abs().max(1e-300);
        for p in 0..7 {
            // odd sums can cancel to zero; compare against the M2 scale
            let s = scale.powf((p as f64 + 2.0) / 2.0) / (a.count as f64).powf(p as f64 / 2.0);
            assert!(
                (a.sums[p] - b.sums[p]).abs() <= tol * a.sums[p].abs().max(b.sums[p].abs()).max(s),
                "M{}: {} vs {}",
                p + 2,
                a.sums[p],
                b.sums[p]
            );
        }
    }

    #[test]
    fn merge_example() {
        let ab = MomentAccumulator::from_samples(&[1.0, 2.0]);
        let c = MomentAccumulator::from_samples(&[3.0]);
        let m = merge_accumulators(&ab, &c);
        assert_eq!(m.count, 3);
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.sum(2), 2.0);
        assert_eq!(m.sum(3), 0.0);
        assert_eq!(m.sum(4), 2.0);
        assert_eq!((m.min, m.max), (1.0, 3.0));
        assert_eq!(merge_accumulators(&m, &MomentAccumulator::new()), m);
        assert_eq!(merge_accumulators(&MomentAccumulator::new(), &m), m);
    }

    #[test]
    fn streaming_matches_two_pass() {
        let mut rng = derive_stream(1, 2);
        let dist = WeightDistribution::exponential(0.5);
        let xs: Vec<f64> = (0..5000).map(|_| 10.0 + dist.sample(&mut rng)).collect();
        let acc = MomentAccumulator::from_samples(&xs);
        let (mean, sums) = two_pass(&xs);
        assert!(rel_close(acc.mean, mean, 1e-12));
        for p in 0..7 {
            assert!(rel_close(acc.sums[p], sums[p], 1e-9), "order {}", p + 2);
        }
    }

    proptest! {
        #[test]
        fn merge_is_commutative_and_associative(
            a in prop::collection::vec(-50.0f64..50.0, 0..40),
            b in prop::collection::vec(-50.0f64..50.0, 0..40),
            c in prop::collection::vec(-50.0f64..50.0, 1..40),
        ) {
            let (x, y, z) = (
                MomentAccumulator::from_samples(&a),
                MomentAccumulator::from_samples(&b),
                MomentAccumulator::from_samples(&c),
            );
            let left = merge_accumulators(&merge_accumulators(&x, &y), &z);
            let right = merge_accumulators(&x, &merge_accumulators(&y, &z));
            assert_acc_close(&left, &right, 1e-9);
            assert_acc_close(&merge_accumulators(&x, &y), &merge_accumulators(&y, &x), 1e-9);
            let all: Vec<f64> = a.iter().chain(&b).chain(&c).copied().collect();
            assert_acc_close(&left, &MomentAccumulator::from_samples(&all), 1e-9);
            prop_assert_eq!(left.count, (a.len() + b.len() + c.len()) as u64);
        }
    }

    #[test]
    fn accumulator_statistics() {
        let acc = MomentAccumulator::from_samples(&[-1.0, 1.0, -1.0, 1.0]);
        assert_eq!(acc.variance(), 4.0 / 3.0);
        assert_eq!(acc.central_moment(4), 1.0);
        assert_eq!(acc.skewness(), 0.0);
        assert_eq!(acc.excess_kurtosis(), -2.0);
    }

    fn small_plan(functionals: Vec<Functional>, reps: u64) -> ExperimentPlan {
        ExperimentPlan::new(12, GraphSpec::boxed(1, 2), WeightDistribution::exponential(1.0), functionals, reps, 17)
    }

    #[test]
    fn deterministic_weights_have_zero_variance() {
        let mut plan = small_plan(
            vec![
                Functional::SideToSide,
                Functional::CylinderPoint,
                Functional::StripPoint,
                Functional::GeodesicLength,
                Functional::Blocks { l: 4 },
            ],
            25,
        );
        plan.distribution = WeightDistribution::deterministic(2.5);
        let (manifest, samples) = run_experiment(&plan, 2).unwrap();
        for s in &manifest.summaries {
            assert_eq!(s.moments.sum(2), 0.0, "{}", s.name);
        }
        assert_eq!(manifest.summary("T").unwrap().mean, 30.0);
        assert_eq!(manifest.summary("a").unwrap().mean, 30.0);
        assert_eq!(manifest.summary("pi").unwrap().mean, 12.0);
        assert_eq!(manifest.summary("Y").unwrap().max, 0.0);
        assert_eq!(samples.get("X4").unwrap(), &[0.0; 25]);
    }

    #[test]
    fn sandwich_holds_per_replicate() {
        let plan = small_plan(vec![Functional::SideToSide, Functional::StripPoint, Functional::CylinderPoint], 200);
        let (_, s) = run_experiment(&plan, 1).unwrap();
        let (t_side, a, t_point) = (s.get("T").unwrap(), s.get("a").unwrap(), s.get("t").unwrap());
        for i in 0..200 {
            assert!(t_side[i] <= a[i] && a[i] <= t_point[i], "replicate {i}");
        }
    }

    #[test]
    fn worker_count_does_not_matter() {
        let plan = small_plan(
            vec![Functional::SideToSide, Functional::StripPoint, Functional::Process { fractions: vec![0.5, 1.0] }],
            64,
        );
        let (m1, s1) = run_experiment(&plan, 1).unwrap();
        let (m8, s8) = run_experiment(&plan, 8).unwrap();
        assert_eq!(m1.masked(), m8.masked());
        assert_eq!(s1, s8);
    }

    #[test]
    fn replicate_values_match_direct_computation() {
        let plan = small_plan(vec![Functional::SideToSide, Functional::StripPoint], 5);
        let (_, s) = run_experiment(&plan, 1).unwrap();
        for i in 0..5u64 {
            let mut stream = derive_stream(plan.seed, plan.stream_id(i));
            let a = crate::passage::strip_point_time(12, 1, 2, &plan.distribution, &mut stream, &plan.strip).unwrap();
            assert_eq!(a.value, s.get("a").unwrap()[i as usize]);
        }
    }

    #[test]
    fn sample_names_and_validation() {
        let plan = small_plan(
            vec![Functional::Blocks { l: 5 }, Functional::Process { fractions: vec![0.25, 1.0] }],
            3,
        );
        assert_eq!(plan.sample_names(), ["X1", "X2", "X3", "Y", "t@3", "t@12"]);
        assert!(plan.validate().is_ok());
        assert!(small_plan(vec![], 3).validate().is_err());
        assert!(small_plan(vec![Functional::SideToSide], 0).validate().is_err());
        assert!(small_plan(vec![Functional::Blocks { l: 13 }], 3).validate().is_err());
        assert!(small_plan(vec![Functional::SideToSide, Functional::SideToSide], 3).validate().is_err());
        assert!(small_plan(vec![Functional::Process { fractions: vec![0.5, 0.25] }], 3).validate().is_err());
        assert!(small_plan(vec![Functional::Process { fractions: vec![0.01] }], 3).validate().is_err());
    }

    #[test]
    fn functional_syntax_roundtrip() {
        let fs = parse_functionals("T,t,a,pi,L,blocks:10,process:0.5/1").unwrap();
        assert_eq!(fs.len(), 7);
        assert_eq!(fs[6], Functional::Process { fractions: vec![0.5, 1.0] });
        for f in &fs[..6] {
            assert_eq!(&f.to_string().parse::<Functional>().unwrap(), f);
        }
        assert!("bogus".parse::<Functional>().is_err());
    }

    #[test]
    fn block_warning() {
        let plan = small_plan(vec![Functional::Blocks { l: 3 }], 1);
        assert_eq!(plan.warnings().unwrap().len(), 1);
        let plan = small_plan(vec![Functional::Blocks { l: 12 }], 1);
        assert!(plan.warnings().unwrap().is_empty());
    }

    #[test]
    fn persistence_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let plan = small_plan(vec![Functional::SideToSide, Functional::CylinderPoint], 3);
        let (manifest, samples) = run_experiment(&plan, 1).unwrap();
        persist_results(&manifest, &samples, dir.path()).unwrap();
        let (m2, s2) = load_results(dir.path()).unwrap();
        assert_eq!(m2, manifest);
        assert_eq!(s2, samples);
        for (stored, recomputed) in m2.summaries.iter().zip(s2.summaries()) {
            assert_eq!(stored.name, recomputed.name);
            assert_acc_close(&stored.moments, &recomputed.moments, 1e-9);
        }
    }

    #[test]
    fn summaries_only_above_retention() {
        let dir = tempfile::tempdir().unwrap();
        let mut plan = small_plan(vec![Functional::SideToSide], 4);
        plan.retain_samples = Some(false);
        let (manifest, samples) = run_experiment(&plan, 1).unwrap();
        assert!(samples.is_empty() && manifest.samples_file.is_none());
        persist_results(&manifest, &samples, dir.path()).unwrap();
        assert!(!dir.path().join(SAMPLES_FILE).exists());
        assert_eq!(load_results(dir.path()).unwrap().0, manifest);
    }

    #[test]
    fn schema_version_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let plan = small_plan(vec![Functional::SideToSide], 2);
        let (manifest, samples) = run_experiment(&plan, 1).unwrap();
        persist_results(&manifest, &samples, dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 99");
        fs::write(&path, text).unwrap();
        assert!(matches!(
            load_results(dir.path()),
            Err(MonteCarloError::SchemaVersion { found: 99, expected: 1 })
        ));
        assert!(matches!(load_results(&dir.path().join("missing")), Err(MonteCarloError::Io { .. })));
    }

    #[test]
    fn exponent_widths() {
        assert_eq!(width_for_exponent(4096, 0.3), 12);
        assert_eq!(width_for_exponent(4096, 0.5), 64);
        assert_eq!(width_for_exponent(1000, 1.0 / 3.0), 10);
        assert_eq!(width_for_exponent(100, 0.0), 1);
    }

    #[test]
    fn sweep_points_use_distinct_namespaces() {
        let mut plan = small_plan(vec![Functional::SideToSide], 3);
        plan.n = 10;
        let grid = SweepGrid {
            n: vec![10, 20],
            widths: Widths::Fixed { h: vec![2] },
        };
        let points = sweep(&plan, &grid, 1).unwrap();
        assert_eq!(points.len(), 2);
        assert_ne!(points[0].namespace, points[1].namespace);
        assert!(points.iter().all(|p| p.outcome.is_ok()));
        let empty = SweepGrid {
            n: vec![],
            widths: Widths::Fixed { h: vec![2] },
        };
        assert!(matches!(sweep(&plan, &empty, 1), Err(MonteCarloError::EmptyGrid)));
    }

    #[test]
    fn sweep_failures_stay_local() {
        let plan = small_plan(vec![Functional::Blocks { l: 15 }], 2);
        let grid = SweepGrid {
            n: vec![10, 20],
            widths: Widths::Fixed { h: vec![1] },
        };
        let points = sweep(&plan, &grid, 1).unwrap();
        assert!(points[0].outcome.is_err());
        assert!(points[1].outcome.is_ok());
    }

    #[test]
    fn margin_cap_reports_replicate() {
        let mut plan = small_plan(vec![Functional::StripPoint], 3);
        plan.strip = StripOptions {
            initial_margin: 0,
            margin_cap: Some(0),
        };
        match run_experiment(&plan, 1) {
            Err(MonteCarloError::Replicate { replicate: 0, source: PassageError::MarginCap { .. } }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn iid_sums() {
        let dist = WeightDistribution::deterministic(1.5);
        assert_eq!(simulate_iid_sum(&dist, 4, 3, 1, 9), vec![6.0; 3]);
        let dist = WeightDistribution::exponential(1.0);
        let xs = simulate_iid_sum(&dist, 10, 4000, 1, 9);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 10.0).abs() < 4.0 * (10.0f64 / 4000.0).sqrt());
    }
}
