//! Expected-latency achievability bounds built from an [`XiSeries`], the
//! zero-error converse, the ARQ baseline, and the policies that pick block
//! length `N`, increment `I` and attempt budget `m`.
//!
//! All latencies are real-valued expectations in channel symbols.

use std::f64::consts::LOG2_E;

use crate::error::{Error, Result};
use crate::numeric::{ceil_guarded, CompensatedSum};
use crate::xi::XiSeries;

/// When an infinite sum of `xi` values may be cut off.
///
/// Summation stops once `consecutive` attempt indices in a row have
/// `xi < threshold` *and* the attempt time exceeds `min_time_factor * k / C`.
/// Reaching `max_time` first is a [`Error::NonConvergence`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailPolicy {
    pub threshold: f64,
    pub consecutive: usize,
    pub min_time_factor: f64,
    pub max_time: usize,
}

impl Default for TailPolicy {
    fn default() -> Self {
        Self {
            threshold: 1e-12,
            consecutive: 10,
            min_time_factor: 2.0,
            max_time: 50_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundKind {
    Infinite,
    Truncated,
    Repeated,
    Periodic,
    Combined,
    Arq,
}

impl BoundKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundKind::Infinite => "infinite",
            BoundKind::Truncated => "truncated",
            BoundKind::Repeated => "repeated",
            BoundKind::Periodic => "periodic",
            BoundKind::Combined => "combined",
            BoundKind::Arq => "arq",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "infinite" => BoundKind::Infinite,
            "truncated" => BoundKind::Truncated,
            "repeated" => BoundKind::Repeated,
            "periodic" => BoundKind::Periodic,
            "combined" => BoundKind::Combined,
            "arq" => BoundKind::Arq,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Last attempt time included in a truncated infinite sum.
    pub truncation_index: Option<usize>,
    /// Geometric estimate of the discarded tail (already scaled by `I`).
    pub tail_estimate: Option<f64>,
    /// `xi_N` at the block length, where one applies.
    pub xi_at_block_length: Option<f64>,
    /// The channel's information density is not essentially bounded.
    pub unbounded_density: bool,
}

/// An evaluated expected-latency bound.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyBound {
    pub expected_latency: f64,
    pub error_bound: f64,
    pub throughput: f64,
    pub log2_m: f64,
    pub kind: BoundKind,
    pub diagnostics: Diagnostics,
}

impl LatencyBound {
    fn new(kind: BoundKind, ell: f64, eps: f64, xi: &XiSeries, diagnostics: Diagnostics) -> Self {
        let log2_m = xi.log2_m();
        Self {
            expected_latency: ell,
            error_bound: eps.clamp(0.0, 1.0),
            throughput: log2_m / ell,
            log2_m,
            kind,
            diagnostics: Diagnostics {
                unbounded_density: xi.channel().has_unbounded_density(),
                ..diagnostics
            },
        }
    }
}

/// Decode-attempt times `n_j = n_1 + (j-1) I` for `j = 1..=m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodingSchedule {
    first_attempt: usize,
    increment: usize,
    attempts: Option<usize>,
}

impl DecodingSchedule {
    /// `attempts = None` means unbounded.
    pub fn new(first_attempt: usize, increment: usize, attempts: Option<usize>) -> Result<Self> {
        if first_attempt == 0 || increment == 0 || attempts == Some(0) {
            return Err(Error::domain(format!(
                "schedule needs n_1 >= 1, I >= 1, m >= 1 (got {first_attempt}, {increment}, {attempts:?})"
            )));
        }
        Ok(Self {
            first_attempt,
            increment,
            attempts,
        })
    }

    /// Decode after every symbol up to block length `n`.
    pub fn every_symbol(n: usize) -> Result<Self> {
        Self::new(1, 1, Some(n))
    }

    pub fn first_attempt(&self) -> usize {
        self.first_attempt
    }

    pub fn increment(&self) -> usize {
        self.increment
    }

    pub fn attempts(&self) -> Option<usize> {
        self.attempts
    }

    /// `n_j`, 1-based.
    pub fn attempt_time(&self, j: usize) -> usize {
        self.first_attempt + (j - 1) * self.increment
    }

    /// Implied block length `N = n_1 + (m-1) I`.
    pub fn block_length(&self) -> Option<usize> {
        self.attempts.map(|m| self.attempt_time(m))
    }

    /// `true` if `n` is one of the attempt times.
    pub fn is_attempt_time(&self, n: usize) -> bool {
        n >= self.first_attempt
            && (n - self.first_attempt).is_multiple_of(self.increment)
            && self.block_length().is_none_or(|big_n| n <= big_n)
    }
}

/// `C(k) = sum over attempts of xi`, truncated by `tail`.
struct TailSum {
    sum: f64,
    last_time: usize,
    tail_estimate: Option<f64>,
}

fn sum_attempts_to_infinity(
    xi: &XiSeries,
    first: usize,
    increment: usize,
    tail: &TailPolicy,
) -> Result<TailSum> {
    let c = xi.capacity();
    let k = xi.log2_m();
    let min_time = if k == 0.0 {
        0.0
    } else if c > 0.0 {
        tail.min_time_factor * k / c
    } else {
        f64::INFINITY
    };
    let mut acc = CompensatedSum::new();
    let mut run = 0usize;
    let mut prev = f64::NAN;
    let mut n = first;
    let mut terms = 0usize;
    loop {
        if n > tail.max_time {
            return Err(Error::NonConvergence {
                partial_sum: acc.value(),
                terms,
            });
        }
        let v = xi.get(n)?;
        acc.add(v);
        terms += 1;
        run = if v < tail.threshold { run + 1 } else { 0 };
        if run >= tail.consecutive && n as f64 > min_time {
            let tail_estimate = if v == 0.0 {
                Some(0.0)
            } else if prev > 0.0 && v < prev {
                let r = v / prev;
                Some(increment as f64 * v * r / (1.0 - r))
            } else {
                None
            };
            return Ok(TailSum {
                sum: acc.value(),
                last_time: n,
                tail_estimate,
            });
        }
        prev = v;
        n += increment;
    }
}

/// `sum_{n>=0} xi_n` (infinite codebook, decoding every symbol, zero error).
pub fn ell_infinite(xi: &XiSeries, tail: &TailPolicy) -> Result<LatencyBound> {
    let t = sum_attempts_to_infinity(xi, 1, 1, tail)?;
    let ell = xi.get(0)? + t.sum;
    Ok(LatencyBound::new(
        BoundKind::Infinite,
        ell,
        0.0,
        xi,
        Diagnostics {
            truncation_index: Some(t.last_time),
            tail_estimate: t.tail_estimate,
            ..Default::default()
        },
    ))
}

fn prefix_sum(xi: &XiSeries, upto_exclusive: usize) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    for n in 0..upto_exclusive {
        acc.add(xi.get(n)?);
    }
    Ok(acc.value())
}

/// Length-`N` codebook, decoding every symbol, declaring a decision at `N`.
/// `ell = sum_{n<N} xi_n`, `eps = xi_N`.
pub fn ell_truncated(xi: &XiSeries, block_length: usize) -> Result<LatencyBound> {
    if block_length == 0 {
        return Err(Error::domain("block length must be >= 1"));
    }
    let ell = prefix_sum(xi, block_length)?;
    let xi_n = xi.get(block_length)?;
    Ok(LatencyBound::new(
        BoundKind::Truncated,
        ell,
        xi_n,
        xi,
        Diagnostics {
            xi_at_block_length: Some(xi_n),
            ..Default::default()
        },
    ))
}

/// Length-`N` codebook restarted from scratch after `N` symbols.
/// `ell = (1 - xi_N)^-1 sum_{n<N} xi_n`, zero error.
pub fn ell_repeated(xi: &XiSeries, block_length: usize) -> Result<LatencyBound> {
    if block_length == 0 {
        return Err(Error::domain("block length must be >= 1"));
    }
    let xi_n = xi.get(block_length)?;
    if xi_n >= 1.0 {
        return Err(Error::Infeasible {
            block_length,
            xi: xi_n,
        });
    }
    let ell = prefix_sum(xi, block_length)? / (1.0 - xi_n);
    Ok(LatencyBound::new(
        BoundKind::Repeated,
        ell,
        0.0,
        xi,
        Diagnostics {
            xi_at_block_length: Some(xi_n),
            ..Default::default()
        },
    ))
}

/// Infinite codebook, decoding only at `n_1 + (j-1) I`.
/// `ell = n_1 + I sum_{j>=1} xi_{n_j}`.
pub fn ell_periodic(
    xi: &XiSeries,
    first_attempt: usize,
    increment: usize,
    tail: &TailPolicy,
) -> Result<LatencyBound> {
    DecodingSchedule::new(first_attempt, increment, None)?;
    let t = sum_attempts_to_infinity(xi, first_attempt, increment, tail)?;
    let ell = first_attempt as f64 + increment as f64 * t.sum;
    Ok(LatencyBound::new(
        BoundKind::Periodic,
        ell,
        0.0,
        xi,
        Diagnostics {
            truncation_index: Some(t.last_time),
            tail_estimate: t.tail_estimate,
            ..Default::default()
        },
    ))
}

/// Finite block length and periodic decoding with restart:
/// `ell = (1 - xi_N)^-1 (n_1 + I sum_{j=1}^{m-1} xi_{n_j})`, `N = n_m`.
pub fn ell_combined(xi: &XiSeries, schedule: &DecodingSchedule) -> Result<LatencyBound> {
    combined(xi, schedule, BoundKind::Combined)
}

fn combined(xi: &XiSeries, schedule: &DecodingSchedule, kind: BoundKind) -> Result<LatencyBound> {
    let m = schedule
        .attempts()
        .ok_or_else(|| Error::domain("combined bound needs a finite attempt budget"))?;
    let block_length = schedule.attempt_time(m);
    let xi_n = xi.get(block_length)?;
    if xi_n >= 1.0 {
        return Err(Error::Infeasible {
            block_length,
            xi: xi_n,
        });
    }
    let mut acc = CompensatedSum::new();
    for j in 1..m {
        acc.add(xi.get(schedule.attempt_time(j))?);
    }
    let ell = (schedule.first_attempt() as f64 + schedule.increment() as f64 * acc.value())
        / (1.0 - xi_n);
    Ok(LatencyBound::new(
        kind,
        ell,
        0.0,
        xi,
        Diagnostics {
            xi_at_block_length: Some(xi_n),
            ..Default::default()
        },
    ))
}

/// Plain ARQ with block length `N`: `ell = N / (1 - xi_N)`.
pub fn arq_latency(xi: &XiSeries, block_length: usize) -> Result<LatencyBound> {
    let schedule = DecodingSchedule::new(block_length, block_length, Some(1))?;
    combined(xi, &schedule, BoundKind::Arq)
}

/// Scans `range` for the ARQ block length with the smallest latency bound;
/// ties go to the smallest `N`.
pub fn arq_optimize(
    xi: &XiSeries,
    range: std::ops::RangeInclusive<usize>,
) -> Result<(usize, LatencyBound)> {
    let (lo, hi) = (*range.start(), *range.end());
    let mut best: Option<(usize, LatencyBound)> = None;
    for n in range {
        match arq_latency(xi, n) {
            Ok(b) => {
                if best
                    .as_ref()
                    .is_none_or(|(_, cur)| b.expected_latency < cur.expected_latency)
                {
                    best = Some((n, b));
                }
            }
            Err(Error::Infeasible { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    best.ok_or(Error::NoFeasibleBlockLength { lo, hi })
}

/// Default ARQ search range `ceil(k/C) ..= ceil(4k/C)`.
pub fn default_arq_range(log2_m: f64, capacity: f64) -> std::ops::RangeInclusive<usize> {
    let lo = (ceil_guarded(log2_m / capacity) as usize).max(1);
    let hi = (ceil_guarded(4.0 * log2_m / capacity) as usize).max(lo);
    lo..=hi
}

/// Largest `log2 M` any zero-error VLFT code with expected latency `ell`
/// can carry: `ell C + log2(ell + 1) + log2 e`.
pub fn converse_max_log_m(ell: f64, capacity: f64) -> f64 {
    ell * capacity + (ell + 1.0).log2() + LOG2_E
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockLengthPolicy {
    Fixed(usize),
    /// `N = ceil(k / ((1 - delta) C))`, i.e. `Delta = delta * C` backoff.
    LogOverCDelta(f64),
    /// `N = ceil(k/C + a log2(k/C) + b)`.
    EllPlusLog {
        a: f64,
        b: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IncrementPolicy {
    Fixed(usize),
    /// `I = ceil(log2 k)`, i.e. `ceil(log2 log2 M)`.
    LogLog,
    /// `I = ceil(c k)`.
    LinearLog(f64),
}

pub fn choose_block_length(policy: BlockLengthPolicy, log2_m: f64, capacity: f64) -> Result<usize> {
    if let BlockLengthPolicy::Fixed(n) = policy {
        return if n >= 1 {
            Ok(n)
        } else {
            Err(Error::domain("fixed block length must be >= 1"))
        };
    }
    if !(log2_m > 0.0 && capacity > 0.0) {
        return Err(Error::domain(format!(
            "block-length policy needs k > 0 and C > 0 (got k = {log2_m}, C = {capacity})"
        )));
    }
    let ratio = log2_m / capacity;
    let n = match policy {
        BlockLengthPolicy::Fixed(_) => unreachable!(),
        BlockLengthPolicy::LogOverCDelta(delta) => {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(Error::domain(format!(
                    "delta fraction {delta} outside (0,1)"
                )));
            }
            ceil_guarded(ratio / (1.0 - delta))
        }
        BlockLengthPolicy::EllPlusLog { a, b } => {
            if !(a >= 0.0 && b >= 0.0) {
                return Err(Error::domain("EllPlusLog needs a, b >= 0"));
            }
            ceil_guarded(ratio + a * ratio.log2() + b)
        }
    };
    Ok((n as usize).max(1))
}

pub fn choose_increment(policy: IncrementPolicy, log2_m: f64) -> Result<usize> {
    let i = match policy {
        IncrementPolicy::Fixed(i) => {
            if i == 0 {
                return Err(Error::domain("fixed increment must be >= 1"));
            }
            return Ok(i);
        }
        IncrementPolicy::LogLog => {
            if log2_m < 2.0 {
                return Err(Error::domain(format!(
                    "LogLog increment needs k >= 2 (got {log2_m})"
                )));
            }
            ceil_guarded(log2_m.log2())
        }
        IncrementPolicy::LinearLog(c) => {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::domain(format!(
                    "LinearLog coefficient {c} must be > 0"
                )));
            }
            ceil_guarded(c * log2_m)
        }
    };
    Ok((i as usize).max(1))
}

/// Attempt budget `m = ceil(k / (I C_delta) - n_1 / I + 1)` with
/// `C_delta = (1 - delta) C`, so that `n_1 + (m-1) I >= k / C_delta`.
pub fn choose_attempts(
    log2_m: f64,
    capacity: f64,
    delta: f64,
    first_attempt: usize,
    increment: usize,
) -> Result<usize> {
    if !(0.0..1.0).contains(&delta)
        || delta == 0.0
        || capacity.is_nan()
        || capacity <= 0.0
        || increment == 0
    {
        return Err(Error::domain(
            "attempt policy needs delta in (0,1), C > 0, I >= 1",
        ));
    }
    let c_delta = (1.0 - delta) * capacity;
    let inc = increment as f64;
    let m = ceil_guarded(log2_m / (inc * c_delta) - first_attempt as f64 / inc + 1.0);
    Ok(if m < 1.0 { 1 } else { m as usize })
}
