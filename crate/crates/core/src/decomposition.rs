//! Block decomposition, the beta schedule and the CLT exponent thresholds.
//!
//! Also houses two elementary inequalities used in the moment bounds,
//! exposed as predicates that evaluate both sides.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::CylinderGraph;
use crate::passage::{PassageEngine, PassageError};
use crate::weights::WeightConfig;

/// Relative slack allowed when checking `Y >= 0`; the two sides are sums of
/// the same weights in different orders.
pub const ERROR_TOLERANCE: f64 = 1e-9;

/// Slack used when comparing the schedule conditions.
pub const SCHEDULE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum DecompositionError {
    #[error("block length {l} outside [1, {n}]")]
    BlockLength { l: u32, n: u32 },
    #[error("block decomposition needs a cylinder starting at column 0, got [{first}, {last}]")]
    Columns { first: i64, last: i64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("degenerate sample: zero empirical variance")]
    Degenerate,
    #[error(transparent)]
    Passage(#[from] PassageError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub n: u32,
    pub l: u32,
    pub m: u32,
    pub rem: u32,
    /// `m + 1` block times; the last is zero when `rem == 0`.
    pub x: Vec<f64>,
    pub total: f64,
    /// `total - sum(x)`.
    pub y: f64,
}

impl Decomposition {
    pub fn block_sum(&self) -> f64 {
        self.x.iter().sum()
    }

    pub fn error_is_nonnegative(&self) -> bool {
        self.y >= -ERROR_TOLERANCE * self.total.abs().max(1.0)
    }
}

/// Splits `T_n` on `[0, n]` into `m` full blocks of length `l`, a remainder
/// block and the connector error `Y`.
pub fn block_times(graph: &CylinderGraph, weights: &WeightConfig, l: u32) -> Result<Decomposition, DecompositionError> {
    block_times_with(&mut PassageEngine::new(), graph, weights, l)
}

pub fn block_times_with(
    engine: &mut PassageEngine,
    graph: &CylinderGraph,
    weights: &WeightConfig,
    l: u32,
) -> Result<Decomposition, DecompositionError> {
    let (first, last) = (graph.first_column(), graph.last_column());
    if first != 0 || last < 1 {
        return Err(DecompositionError::Columns { first, last });
    }
    let n = last as u32;
    if l == 0 || l > n {
        return Err(DecompositionError::BlockLength { l, n });
    }
    let m = n / l;
    let rem = n % l;
    let mut x = Vec::with_capacity(m as usize + 1);
    for i in 0..m as i64 {
        let a = i * l as i64;
        x.push(engine.side_to_side(graph, weights, a, a + l as i64)?.value);
    }
    x.push(if rem == 0 {
        0.0
    } else {
        engine.side_to_side(graph, weights, (m * l) as i64, last)?.value
    });
    let total = engine.side_to_side(graph, weights, 0, last)?.value;
    let y = total - x.iter().sum::<f64>();
    Ok(Decomposition { n, l, m, rem, x, total, y })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub q: u32,
    pub theta: f64,
    pub t: u32,
    pub r: f64,
    /// `beta_1 > ... > beta_t`.
    pub betas: Vec<f64>,
    pub alpha_star: f64,
    /// Limit of `alpha_star` as `t -> infinity`.
    pub alpha_limit: f64,
}

/// Closed-form solution of the schedule equations at depth `t`.
pub fn beta_schedule(q: u32, theta: f64, t: u32) -> Result<Schedule, DecompositionError> {
    if q < 2 {
        return Err(DecompositionError::Parameter(format!("q = {q} must be at least 2")));
    }
    if !(theta >= 1.0) || !theta.is_finite() {
        return Err(DecompositionError::Parameter(format!("theta = {theta} must be a finite value >= 1")));
    }
    if t < 1 {
        return Err(DecompositionError::Parameter("depth t must be at least 1".into()));
    }
    let qf = q as f64;
    let r = 1.0 - 1.0 / (2.0 * qf);
    let rt = r.powi(t as i32);
    let denom = theta + (qf - 1.0) * (2.0 + theta) * (1.0 - rt);
    let betas = (1..=t)
        .map(|i| 1.0 - qf * theta * (1.0 - r.powi(i as i32)) / denom)
        .collect();
    Ok(Schedule {
        q,
        theta,
        t,
        r,
        betas,
        alpha_star: (qf - 1.0) * (1.0 - rt) / denom,
        alpha_limit: (qf - 1.0) / (theta + (qf - 1.0) * (2.0 + theta)),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionMargin {
    pub condition: String,
    /// Right side minus left side; strict conditions need a positive slack.
    pub slack: f64,
    pub strict: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub satisfied: bool,
    pub margins: Vec<ConditionMargin>,
}

/// Evaluates every sufficiency condition for the schedule at exponent `alpha`,
/// with `beta_0 = 1`.
pub fn verify_schedule(s: &Schedule, alpha: f64) -> ScheduleReport {
    let q = s.q as f64;
    let theta = s.theta;
    let mut beta = Vec::with_capacity(s.betas.len() + 1);
    beta.push(1.0);
    beta.extend_from_slice(&s.betas);
    let t = s.betas.len();
    let mut margins = Vec::new();
    for i in 0..t {
        let bound = (1.0 - 2.0 * (beta[i] - beta[i + 1]) - (1.0 - beta[i]) / q) / (2.0 + theta);
        margins.push(ConditionMargin {
            condition: format!("level {i}"),
            slack: bound - alpha,
            strict: false,
        });
    }
    margins.push(ConditionMargin {
        condition: "tail".into(),
        slack: (q - 1.0) / q * (1.0 - beta[t]) / theta - alpha,
        strict: false,
    });
    margins.push(ConditionMargin {
        condition: format!("2 alpha < beta_{t}"),
        slack: beta[t] - 2.0 * alpha,
        strict: true,
    });
    for i in (1..t).rev() {
        margins.push(ConditionMargin {
            condition: format!("beta_{} < beta_{}", i + 1, i),
            slack: beta[i] - beta[i + 1],
            strict: true,
        });
    }
    margins.push(ConditionMargin {
        condition: "beta_1 < 1".into(),
        slack: 1.0 - beta[1],
        strict: true,
    });
    let satisfied = margins
        .iter()
        .all(|c| if c.strict { c.slack > 0.0 } else { c.slack >= -SCHEDULE_TOLERANCE });
    ScheduleReport { satisfied, margins }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaThreshold {
    /// Box cylinder form with `theta = d - 1`, when `d` is given.
    pub box_form: Option<f64>,
    pub general_form: f64,
}

/// Largest width exponent for which the CLT is known, given `p` finite
/// moments (`p = f64::INFINITY` allowed).
pub fn alpha_threshold(p: f64, theta: f64, d: Option<u32>) -> Result<AlphaThreshold, DecompositionError> {
    if !(p > 2.0) {
        return Err(DecompositionError::Parameter(format!("p = {p} must exceed 2")));
    }
    if !(theta >= 1.0) || !theta.is_finite() {
        return Err(DecompositionError::Parameter(format!("theta = {theta} must be a finite value >= 1")));
    }
    let general_form = 1.0 / (2.0 + theta + theta * moment_penalty(p));
    let box_form = match d {
        Some(d) if d < 2 => return Err(DecompositionError::Parameter(format!("dimension {d} must be at least 2"))),
        Some(d) => {
            let d = d as f64;
            let penalty = if p < 4.0 {
                2.0 * p * (d - 1.0) / (p - 2.0)
            } else {
                (d - 1.0) * moment_penalty(p)
            };
            Some(1.0 / (d + 1.0 + penalty))
        }
        None => None,
    };
    Ok(AlphaThreshold { box_form, general_form })
}

// min{2p/(p-2), 1/(q-1)} with q = floor(p/2), the second term only for q >= 2
fn moment_penalty(p: f64) -> f64 {
    if p.is_infinite() {
        return 0.0;
    }
    let first = 2.0 * p / (p - 2.0);
    let q = (p / 2.0).floor();
    if q >= 2.0 {
        first.min(1.0 / (q - 1.0))
    } else {
        first
    }
}

/// `m * E|X - mean|^p / (m * var)^(p/2)` with plug-in moments.
pub fn lyapounov_ratio(block_samples: &[f64], m: u64, p: f64) -> Result<f64, DecompositionError> {
    if block_samples.len() < 2 {
        return Err(DecompositionError::Parameter("need at least two samples".into()));
    }
    if m == 0 || !(p > 2.0) || !p.is_finite() {
        return Err(DecompositionError::Parameter(format!("need m >= 1 and finite p > 2, got m = {m}, p = {p}")));
    }
    let k = block_samples.len() as f64;
    let mean = block_samples.iter().sum::<f64>() / k;
    let var = block_samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k;
    if var <= 0.0 {
        return Err(DecompositionError::Degenerate);
    }
    let central = block_samples.iter().map(|x| (x - mean).abs().powf(p)).sum::<f64>() / k;
    if !central.is_finite() {
        return Err(DecompositionError::Parameter("empirical p-th moment is not finite".into()));
    }
    let m = m as f64;
    Ok(m * central / (m * var).powf(p / 2.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `|x|x|^(p-2) - y|y|^(p-2)| <= max(1, (p-1)/2) |x-y| (|x|^(p-2) + |y|^(p-2))`.
pub fn power_mean_gap_bound(x: f64, y: f64, p: f64) -> InequalityCheck {
    let fx = x * x.abs().powf(p - 2.0);
    let fy = y * y.abs().powf(p - 2.0);
    let lhs = (fx - fy).abs();
    let rhs = 1f64.max((p - 1.0) / 2.0) * (x - y).abs() * (x.abs().powf(p - 2.0) + y.abs().powf(p - 2.0));
    // rounding of the difference on the left
    let slack = 4.0 * f64::EPSILON * (fx.abs() + fy.abs());
    InequalityCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + slack,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootBound {
    /// Largest `y >= 0` with `y^beta <= a + b y`.
    pub y_star: f64,
    /// `a^((beta-1)/beta) + b`.
    pub bound: f64,
    pub holds: bool,
}

/// Finds `y_star` by bisection and checks `y_star^(beta-1) <= bound`.
pub fn root_dominance_bound(a: f64, b: f64, beta: f64) -> Result<RootBound, DecompositionError> {
    if !(a >= 0.0 && b >= 0.0 && beta > 1.0) || !(a.is_finite() && b.is_finite() && beta.is_finite()) {
        return Err(DecompositionError::Parameter(format!(
            "need finite a >= 0, b >= 0, beta > 1, got ({a}, {b}, {beta})"
        )));
    }
    let g = |y: f64| y.powf(beta) - b * y - a;
    let mut lo = 0.0;
    let mut hi = 1.0 + b.powf(1.0 / (beta - 1.0)) + a.powf(1.0 / beta) + 1.0;
    // the starting bracket can fall just short when beta is close to 1
    while g(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if g(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let bound = a.powf((beta - 1.0) / beta) + b;
    let lhs = lo.powf(beta - 1.0);
    Ok(RootBound {
        y_star: lo,
        bound,
        holds: lhs <= bound * (1.0 + 1e-12),
    })
}

/// Constants `(A_q, B_q)` of the i.i.d. moment bound
/// `E[S_m^{2q}] <= A_q m^q E[Y^2]^q + B_q m E[Y^{2q}]`, for `2 <= q <= 5`.
pub fn iid_moment_constants(q: u32) -> Result<(f64, f64), DecompositionError> {
    if !(2..=5).contains(&q) {
        return Err(DecompositionError::Parameter(format!("q = {q} outside 2..=5")));
    }
    let mut a_sum = 0i128;
    let mut b_sum = 0i128;
    let mut parts = Vec::new();
    partitions(2 * q, 2, &mut parts, &mut |parts| {
        let w = multinomial_weight(q, parts) as i128;
        let size = parts.len() as i128;
        a_sum += (size - 1) * w;
        b_sum += (q as i128 - size) * w;
    });
    let denom = (q - 1) as f64;
    Ok((a_sum as f64 / denom, b_sum as f64 / denom))
}

/// Right side of the i.i.d. moment bound.
pub fn iid_moment_bound(q: u32, m: u64, second: f64, moment_2q: f64) -> Result<f64, DecompositionError> {
    let (a, b) = iid_moment_constants(q)?;
    let m = m as f64;
    Ok(a * m.powi(q as i32) * second.powi(q as i32) + b * m * moment_2q)
}

// non-increasing partitions of `rest` into parts >= `min`
fn partitions(rest: u32, min: u32, parts: &mut Vec<u32>, f: &mut impl FnMut(&[u32])) {
    if rest == 0 {
        f(parts);
        return;
    }
    let start = parts.last().copied().unwrap_or(rest).min(rest);
    for part in (min..=start).rev() {
        parts.push(part);
        partitions(rest - part, min, parts, f);
        parts.pop();
    }
}

// (2q)! / prod_i (i!^{a_i} a_i!) for the multiplicities a_i of `parts`
fn multinomial_weight(q: u32, parts: &[u32]) -> u128 {
    let fact = |k: u32| (1..=k as u128).product::<u128>();
    let mut denom = 1u128;
    let mut i = 0;
    while i < parts.len() {
        let mut j = i;
        while j < parts.len() && parts[j] == parts[i] {
            j += 1;
        }
        let mult = (j - i) as u32;
        denom *= fact(parts[i]).pow(mult) * fact(mult);
        i = j;
    }
    fact(2 * q) / denom
}

#[cfg(test)]
#[path = "../tests/common/oracle.rs"]
mod oracle;
