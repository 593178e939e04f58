//! Edge-weight laws, their moments, admissibility, the `h`-transform and
//! reproducible sampling onto cylinder edges.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::CylinderGraph;
use crate::quadrature;

#[derive(Debug, Error, PartialEq)]
pub enum WeightError {
    #[error("invalid distribution: {0}")]
    Invalid(String),
    #[error("moment order must be at least 1, got {0}")]
    MomentOrder(f64),
    #[error("cannot parse distribution {0:?}: {1}")]
    Parse(String, String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// A law `F` on `[0, inf)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WeightDistribution {
    Deterministic { value: f64 },
    Exponential { rate: f64 },
    Uniform { low: f64, high: f64 },
    /// `base` with probability `atom`, otherwise `base + step`.
    ShiftedBernoulli { base: f64, step: f64, atom: f64 },
    /// Finite support, ascending, with matching probabilities.
    Empirical { support: Vec<f64>, probs: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Admissibility {
    Admissible,
    Inadmissible,
    Degenerate,
}

/// Bond percolation thresholds used when the caller does not supply one.
///
/// Only `d = 2` is exact (1/2). The others are numerical estimates from the
/// percolation literature, not derived here.
pub fn default_critical_probability(d: u32) -> Option<f64> {
    match d {
        2 => Some(0.5),
        3 => Some(0.248_811_8),
        4 => Some(0.160_131_3),
        5 => Some(0.118_171_8),
        6 => Some(0.094_201_9),
        7 => Some(0.078_675_2),
        _ => None,
    }
}

impl WeightDistribution {
    pub fn exponential(rate: f64) -> Self {
        WeightDistribution::Exponential { rate }
    }

    pub fn uniform(low: f64, high: f64) -> Self {
        WeightDistribution::Uniform { low, high }
    }

    pub fn deterministic(value: f64) -> Self {
        WeightDistribution::Deterministic { value }
    }

    pub fn shifted_bernoulli(base: f64, step: f64, atom: f64) -> Self {
        WeightDistribution::ShiftedBernoulli { base, step, atom }
    }

    pub fn empirical(support: Vec<f64>, probs: Vec<f64>) -> Result<Self, WeightError> {
        let d = WeightDistribution::Empirical { support, probs };
        d.validate()?;
        Ok(d)
    }

    /// Two-column text file `value probability`, one atom per line.
    pub fn empirical_from_file(path: &Path) -> Result<Self, WeightError> {
        let text = std::fs::read_to_string(path).map_err(|e| WeightError::Io(e.to_string()))?;
        let mut atoms = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| WeightError::Parse(line.to_string(), format!("line {}: {e}", i + 1)))
            };
            if cols.len() != 2 {
                return Err(WeightError::Parse(line.to_string(), format!("line {}: expected two columns", i + 1)));
            }
            atoms.push((parse(cols[0])?, parse(cols[1])?));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (support, probs) = atoms.into_iter().unzip();
        Self::empirical(support, probs)
    }

    pub fn validate(&self) -> Result<(), WeightError> {
        let bad = |m: &str| Err(WeightError::Invalid(m.to_string()));
        match *self {
            WeightDistribution::Deterministic { value } => {
                if !(value.is_finite() && value >= 0.0) {
                    return bad("deterministic value must be finite and nonnegative");
                }
            }
            WeightDistribution::Exponential { rate } => {
                if !(rate.is_finite() && rate > 0.0) {
                    return bad("exponential rate must be positive");
                }
            }
            WeightDistribution::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low >= 0.0 && high > low) {
                    return bad("uniform needs 0 <= low < high");
                }
            }
            WeightDistribution::ShiftedBernoulli { base, step, atom } => {
                if !(base.is_finite() && base >= 0.0) {
                    return bad("bernoulli base must be nonnegative");
                }
                if !(step.is_finite() && step > 0.0) {
                    return bad("bernoulli step must be positive");
                }
                if !(0.0..=1.0).contains(&atom) {
                    return bad("bernoulli atom mass must lie in [0, 1]");
                }
            }
            WeightDistribution::Empirical {
                ref support,
                ref probs,
            } => {
                if support.is_empty() || support.len() != probs.len() {
                    return bad("empirical law needs matching nonempty support and probabilities");
                }
                if support.iter().any(|&s| !(s.is_finite() && s >= 0.0)) {
                    return bad("empirical support must be finite and nonnegative");
                }
                if support.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("empirical support must be strictly ascending");
                }
                if probs.iter().any(|&p| !(p >= 0.0)) {
                    return bad("empirical probabilities must be nonnegative");
                }
                if (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return bad("empirical probabilities must sum to 1");
                }
            }
        }
        Ok(())
    }

    /// Finite atoms `(value, mass)` for discrete families.
    fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match *self {
            WeightDistribution::Deterministic { value } => Some(vec![(value, 1.0)]),
            WeightDistribution::ShiftedBernoulli { base, step, atom } => {
                Some(vec![(base, atom), (base + step, 1.0 - atom)])
            }
            WeightDistribution::Empirical {
                ref support,
                ref probs,
            } => Some(support.iter().copied().zip(probs.iter().copied()).collect()),
            _ => None,
        }
    }

    pub fn mean(&self) -> f64 {
        self.raw_moment(1.0)
    }

    pub fn variance(&self) -> f64 {
        match *self {
            WeightDistribution::Exponential { rate } => 1.0 / (rate * rate),
            WeightDistribution::Uniform { low, high } => (high - low).powi(2) / 12.0,
            _ => {
                let mu = self.mean();
                self.atoms()
                    .expect("discrete family")
                    .iter()
                    .map(|&(x, p)| p * (x - mu).powi(2))
                    .sum()
            }
        }
    }

    /// Smallest point of the support.
    pub fn support_min(&self) -> f64 {
        match *self {
            WeightDistribution::Deterministic { value } => value,
            WeightDistribution::Exponential { .. } => 0.0,
            WeightDistribution::Uniform { low, .. } => low,
            WeightDistribution::ShiftedBernoulli { base, atom, step } => {
                if atom > 0.0 {
                    base
                } else {
                    base + step
                }
            }
            WeightDistribution::Empirical {
                ref support,
                ref probs,
            } => support
                .iter()
                .zip(probs)
                .find(|(_, &p)| p > 0.0)
                .map(|(&s, _)| s)
                .unwrap_or(support[0]),
        }
    }

    /// `F(lambda)`: mass of the atom at the support minimum.
    pub fn atom_at_min(&self) -> f64 {
        match self.atoms() {
            None => 0.0,
            Some(atoms) => {
                let lambda = self.support_min();
                atoms
                    .iter()
                    .filter(|&&(x, _)| x == lambda)
                    .map(|&(_, p)| p)
                    .sum()
            }
        }
    }

    pub fn is_degenerate(&self) -> bool {
        match self.atoms() {
            None => false,
            Some(atoms) => atoms.iter().filter(|&&(_, p)| p > 0.0).count() <= 1,
        }
    }

    /// `E[w^p]`, closed form for every family.
    fn raw_moment(&self, p: f64) -> f64 {
        match *self {
            WeightDistribution::Exponential { rate } => {
                statrs::function::gamma::gamma(p + 1.0) / rate.powf(p)
            }
            WeightDistribution::Uniform { low, high } => {
                (high.powf(p + 1.0) - low.powf(p + 1.0)) / ((p + 1.0) * (high - low))
            }
            _ => self
                .atoms()
                .expect("discrete family")
                .iter()
                .map(|&(x, m)| m * x.powf(p))
                .sum(),
        }
    }

    /// Upper integration limit for continuous families: the `1 - 1e-12` quantile.
    pub fn upper_quantile(&self) -> f64 {
        match *self {
            WeightDistribution::Exponential { rate } => -(1e-12f64).ln() / rate,
            WeightDistribution::Uniform { high, .. } => high,
            _ => self
                .atoms()
                .expect("discrete family")
                .iter()
                .filter(|&&(_, p)| p > 0.0)
                .map(|&(x, _)| x)
                .fold(0.0, f64::max),
        }
    }

    fn density(&self, x: f64) -> Option<f64> {
        match *self {
            WeightDistribution::Exponential { rate } => Some(if x < 0.0 { 0.0 } else { rate * (-rate * x).exp() }),
            WeightDistribution::Uniform { low, high } => {
                Some(if x < low || x > high { 0.0 } else { 1.0 / (high - low) })
            }
            _ => None,
        }
    }

    /// `E[g(w)]` by adaptive quadrature on `[lambda, q(1-1e-12)]` for
    /// continuous families, by summation over atoms otherwise.
    pub fn expect_by_quadrature(&self, g: impl Fn(f64) -> f64) -> f64 {
        match self.atoms() {
            Some(atoms) => atoms.iter().map(|&(x, p)| p * g(x)).sum(),
            None => {
                let lo = self.support_min();
                let hi = self.upper_quantile();
                quadrature::integrate(
                    |x| g(x) * self.density(x).expect("continuous family"),
                    lo,
                    hi,
                    1e-12,
                )
            }
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            WeightDistribution::Deterministic { value } => value,
            WeightDistribution::Exponential { rate } => {
                Exp::new(rate).expect("validated rate").sample(rng)
            }
            WeightDistribution::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            WeightDistribution::ShiftedBernoulli { base, step, atom } => {
                if rng.random::<f64>() < atom {
                    base
                } else {
                    base + step
                }
            }
            WeightDistribution::Empirical {
                ref support,
                ref probs,
            } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (&s, &p) in support.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return s;
                    }
                }
                *support.last().expect("nonempty support")
            }
        }
    }
}

impl fmt::Display for WeightDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightDistribution::Deterministic { value } => write!(f, "deterministic:{value}"),
            WeightDistribution::Exponential { rate } => write!(f, "exponential:{rate}"),
            WeightDistribution::Uniform { low, high } => write!(f, "uniform:{low},{high}"),
            WeightDistribution::ShiftedBernoulli { base, step, atom } => {
                write!(f, "bernoulli:{base},{step},{atom}")
            }
            WeightDistribution::Empirical { support, probs } => {
                write!(f, "empirical:")?;
                for (i, (s, p)) in support.iter().zip(probs).enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{s}/{p}")?;
                }
                Ok(())
            }
        }
    }
}

/// Parses `family:params`, e.g. `exponential:1`, `uniform:0,1`,
/// `bernoulli:0,1,0.4`, `empirical:1/0.5;2/0.5`.
impl FromStr for WeightDistribution {
    type Err = WeightError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |m: &str| WeightError::Parse(s.to_string(), m.to_string());
        let (family, params) = s.split_once(':').ok_or_else(|| err("expected family:params"))?;
        let nums = |p: &str| -> Result<Vec<f64>, WeightError> {
            p.split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| err(&e.to_string())))
                .collect()
        };
        let dist = match family.trim() {
            "deterministic" | "const" => match nums(params)?[..] {
                [c] => Self::deterministic(c),
                _ => return Err(err("deterministic takes one value")),
            },
            "exponential" | "exp" => match nums(params)?[..] {
                [r] => Self::exponential(r),
                _ => return Err(err("exponential takes one rate")),
            },
            "uniform" => match nums(params)?[..] {
                [a, b] => Self::uniform(a, b),
                _ => return Err(err("uniform takes low,high")),
            },
            "bernoulli" | "shifted_bernoulli" => match nums(params)?[..] {
                [l, d, p] => Self::shifted_bernoulli(l, d, p),
                _ => return Err(err("bernoulli takes base,step,atom")),
            },
            "empirical" => {
                let mut support = Vec::new();
                let mut probs = Vec::new();
                for atom in params.split(';') {
                    let (v, p) = atom.split_once('/').ok_or_else(|| err("empirical atoms are value/prob"))?;
                    support.push(v.trim().parse::<f64>().map_err(|e| err(&e.to_string()))?);
                    probs.push(p.trim().parse::<f64>().map_err(|e| err(&e.to_string()))?);
                }
                return Self::empirical(support, probs);
            }
            other => return Err(err(&format!("unknown family {other:?}"))),
        };
        dist.validate()?;
        Ok(dist)
    }
}

/// Decides admissibility: nondegenerate, supported on `[0, inf)` and
/// `F(lambda) < p_c`.
pub fn admissibility_check(dist: &WeightDistribution, _d: u32, p_c: f64) -> Admissibility {
    assert!(p_c > 0.0 && p_c < 1.0, "critical probability must lie in (0, 1)");
    if dist.validate().is_err() {
        return Admissibility::Inadmissible;
    }
    if dist.is_degenerate() {
        return Admissibility::Degenerate;
    }
    if dist.atom_at_min() < p_c {
        Admissibility::Admissible
    } else {
        Admissibility::Inadmissible
    }
}

/// `E[w^p]` for `p >= 1`.
pub fn distribution_moment(dist: &WeightDistribution, p: f64) -> Result<f64, WeightError> {
    if !(p >= 1.0) {
        return Err(WeightError::MomentOrder(p));
    }
    Ok(dist.raw_moment(p))
}

/// `x -> E[(x - eta)_+]` for `eta ~ F`.
#[derive(Clone, Debug)]
pub struct HTransform {
    dist: WeightDistribution,
}

impl HTransform {
    pub fn eval(&self, x: f64) -> f64 {
        match self.dist {
            WeightDistribution::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    x - (1.0 - (-rate * x).exp()) / rate
                }
            }
            WeightDistribution::Uniform { low, high } => {
                if x <= low {
                    0.0
                } else if x <= high {
                    (x - low).powi(2) / (2.0 * (high - low))
                } else {
                    x - 0.5 * (low + high)
                }
            }
            _ => self
                .dist
                .atoms()
                .expect("discrete family")
                .iter()
                .map(|&(s, p)| p * (x - s).max(0.0))
                .sum(),
        }
    }

    /// Same function evaluated by quadrature of the density, for cross-checks.
    pub fn eval_by_quadrature(&self, x: f64) -> f64 {
        self.dist.expect_by_quadrature(|y| (x - y).max(0.0))
    }

    /// Support minimum of the transformed law `h(w)`; always 0.
    pub fn transformed_support_min(&self) -> f64 {
        0.0
    }

    /// `P(h(w) = 0) = P(w = lambda)`.
    pub fn transformed_atom_at_zero(&self) -> f64 {
        self.dist.atom_at_min()
    }
}

pub fn h_transform(dist: &WeightDistribution) -> Result<HTransform, WeightError> {
    dist.validate()?;
    if dist.is_degenerate() {
        return Err(WeightError::Invalid("h-transform needs a nondegenerate law".into()));
    }
    Ok(HTransform { dist: dist.clone() })
}

/// A counter-based random stream keyed by `(master seed, stream id)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_stream(master_seed: u64, stream_id: u64) -> RngStream {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id);
    RngStream {
        master_seed,
        stream_id,
        rng,
    }
}

impl RngStream {
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// An independent stream tagged by `tag`, sharing this stream's id.
    pub fn substream(&self, tag: u64) -> RngStream {
        derive_stream(splitmix64(self.master_seed ^ splitmix64(tag.wrapping_add(1))), self.stream_id)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub stream_id: u64,
    pub enumeration_hash: u64,
}

/// Edge weights in canonical edge order.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightConfig {
    pub weights: Vec<f64>,
    pub provenance: Provenance,
}

impl WeightConfig {
    /// Weights supplied directly, e.g. hand-built fixtures.
    pub fn from_values(graph: &CylinderGraph, weights: Vec<f64>) -> Result<Self, WeightError> {
        if weights.len() != graph.edge_count() as usize {
            return Err(WeightError::Invalid(format!(
                "expected {} weights, got {}",
                graph.edge_count(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(WeightError::Invalid("weights must be finite and nonnegative".into()));
        }
        Ok(Self {
            weights,
            provenance: Provenance {
                master_seed: 0,
                stream_id: 0,
                enumeration_hash: graph.enumeration_hash(),
            },
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn matches(&self, graph: &CylinderGraph) -> bool {
        self.weights.len() == graph.edge_count() as usize
            && self.provenance.enumeration_hash == graph.enumeration_hash()
    }
}

/// I.i.d. draws from `dist`, one per edge in canonical order.
pub fn sample_weights(graph: &CylinderGraph, dist: &WeightDistribution, stream: &mut RngStream) -> WeightConfig {
    let provenance = Provenance {
        master_seed: stream.master_seed,
        stream_id: stream.stream_id,
        enumeration_hash: graph.enumeration_hash(),
    };
    let weights = (0..graph.edge_count()).map(|_| dist.sample(stream)).collect();
    WeightConfig { weights, provenance }
}
