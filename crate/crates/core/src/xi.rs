//! The decode-failure bound sequence `xi_n`.
//!
//! `xi_n` bounds the probability that the true codeword is not the unique
//! information-density maximiser after `n` received symbols. Three methods
//! are provided:
//!
//! * [`xi_bsc`]: the closed-form RCU expression for the BSC,
//!   `sum_t C(n,t) p^t (1-p)^(n-t) min{1, M sum_{j<=t} C(n,j) 2^-n}`.
//! * [`xi_dt_dmc`]: the weaker `E[min{1, M 2^-i(X^n;Y^n)}]` for any DMC,
//!   evaluated on a lattice of the n-fold density distribution.
//! * [`xi_exact_oracle`]: brute-force enumeration of the RCU expectation for
//!   tiny instances, used to check the other two.
//!
//! Message counts are passed as `log2_m = log2 M` so that `M = 2^512` is
//! representable.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;
use std::sync::Mutex;

use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::numeric::{ln_add_exp, ln_binom_pmf, log2_pow2_minus_one, CompensatedSum};

/// Default lattice spacing for [`DensityLattice`], in bits.
pub const DEFAULT_GRID_STEP: f64 = 1e-4;
/// Default largest `n` the exhaustive oracle accepts.
pub const DEFAULT_ORACLE_LIMIT: usize = 6;
// densities closer than this count as tied in the oracle
const TIE_TOL: f64 = 1e-9;
const PRUNE_MASS: f64 = 1e-18;
// above 2^-40 the inner binomial sum is accumulated in linear domain
const LN_LINEAR_SWITCH: f64 = -40.0 * LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum XiMethod {
    BscRcuExact,
    DmcDtConvolution,
    ExhaustiveOracle,
}

impl XiMethod {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bsc_rcu" | "bsc_rcu_exact" | "BscRcuExact" => Some(Self::BscRcuExact),
            "dt" | "dmc_dt" | "DmcDtConvolution" => Some(Self::DmcDtConvolution),
            "oracle" | "exhaustive" | "ExhaustiveOracle" => Some(Self::ExhaustiveOracle),
            _ => None,
        }
    }
}

/// Which multiplier appears in front of the pairwise error probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum MultiplierConvention {
    /// `M - 1`, the literal union bound over competing codewords.
    MMinusOne,
    /// `M`, the simplified form used for the published curves.
    #[default]
    M,
}

impl MultiplierConvention {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "M" | "m" => Some(Self::M),
            "M_minus_one" | "m_minus_one" | "M-1" => Some(Self::MMinusOne),
            _ => None,
        }
    }

    fn log2_multiplier(self, log2_m: f64) -> f64 {
        match self {
            Self::M => log2_m,
            Self::MMinusOne => log2_pow2_minus_one(log2_m),
        }
    }
}

/// BSC RCU value with the `M` multiplier.
pub fn xi_bsc(n: usize, log2_m: f64, p: f64) -> f64 {
    xi_bsc_with_multiplier(n, log2_m, p)
}

/// BSC RCU value with an arbitrary multiplier `2^log2_mult` (`-inf` for zero).
pub(crate) fn xi_bsc_with_multiplier(n: usize, log2_mult: f64, p: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if log2_mult == f64::NEG_INFINITY {
        return 0.0;
    }
    if log2_mult >= n as f64 {
        return 1.0;
    }
    if p == 0.5 {
        // every competitor ties with the true codeword
        return log2_mult.min(0.0).exp2();
    }
    // flipping all outputs maps BSC(p) onto BSC(1-p) with the decoder reversed
    let p = if p > 0.5 { 1.0 - p } else { p };
    let nn = n as u64;
    let q = 1.0 - p;
    let ln_mult = log2_mult * LN_2;

    let mut outer = CompensatedSum::new();
    // running ln sum_{j<=t} C(n,j) 2^-n, first in log domain, then linear
    let mut ln_cum = f64::NEG_INFINITY;
    let mut linear: Option<CompensatedSum> = None;
    let mut saturated = false;

    for t in 0..=nn {
        let ln_w = ln_binom_pmf(t, nn, p, q);
        if saturated {
            if ln_w > f64::NEG_INFINITY {
                outer.add(ln_w.exp());
            }
            continue;
        }
        let ln_term = ln_binom_pmf(t, nn, 0.5, 0.5);
        let ln_inner = match linear.as_mut() {
            Some(acc) => {
                acc.add(ln_term.exp());
                acc.value().ln()
            }
            None => {
                ln_cum = ln_add_exp(ln_cum, ln_term);
                if ln_cum >= LN_LINEAR_SWITCH {
                    let mut acc = CompensatedSum::new();
                    acc.add(ln_cum.exp());
                    linear = Some(acc);
                }
                ln_cum
            }
        };
        let ln_ratio = ln_mult + ln_inner;
        if ln_ratio >= 0.0 {
            saturated = true;
        }
        if ln_w > f64::NEG_INFINITY {
            outer.add((ln_w + ln_ratio.min(0.0)).exp());
        }
    }
    outer.value().clamp(0.0, 1.0)
}

/// Exact RCU expectation by full enumeration of `(x^n, y^n, xbar^n)`.
///
/// Ties between the true and a competing density count toward the inner
/// probability. Refuses `n > limit` and enumerations above `2^24` triples.
pub fn xi_exact_oracle(
    n: usize,
    log2_m: f64,
    ch: &ChannelModel,
    convention: MultiplierConvention,
    limit: usize,
) -> Result<f64> {
    if n > limit {
        return Err(Error::OracleLimit { n, limit });
    }
    if n == 0 {
        return Ok(1.0);
    }
    let nx = ch.input_alphabet_size();
    let ny = ch.output_alphabet_size();
    let n32 = n as u32;
    let (Some(count_x), Some(count_y)) = (nx.checked_pow(n32), ny.checked_pow(n32)) else {
        return Err(Error::OracleLimit { n, limit });
    };
    match count_x
        .checked_mul(count_x)
        .and_then(|v| v.checked_mul(count_y))
    {
        Some(v) if v <= 1 << 24 => {}
        _ => return Err(Error::OracleLimit { n, limit }),
    }
    let multiplier = match convention {
        MultiplierConvention::M => log2_m.exp2(),
        MultiplierConvention::MMinusOne => log2_m.exp2() - 1.0,
    };

    let digits = |mut idx: usize, base: usize| -> Vec<usize> {
        let mut out = vec![0; n];
        for slot in out.iter_mut() {
            *slot = idx % base;
            idx /= base;
        }
        out
    };
    let xs: Vec<Vec<usize>> = (0..count_x).map(|i| digits(i, nx)).collect();
    let px: Vec<f64> = xs
        .iter()
        .map(|x| x.iter().map(|&s| ch.input_dist()[s]).product())
        .collect();

    let mut total = CompensatedSum::new();
    for yi in 0..count_y {
        let y = digits(yi, ny);
        // density of every input sequence against this y (None = unreachable)
        let dens: Vec<Option<f64>> = xs
            .iter()
            .map(|x| ch.information_density(x, &y).ok())
            .collect();
        for (xi, x) in xs.iter().enumerate() {
            let Some(d_true) = dens[xi] else { continue };
            let p_joint: f64 = px[xi]
                * x.iter()
                    .zip(&y)
                    .map(|(&a, &b)| ch.transition()[a][b])
                    .product::<f64>();
            if p_joint == 0.0 {
                continue;
            }
            let inner: CompensatedSum = dens
                .iter()
                .zip(&px)
                .filter(|(d, _)| matches!(d, Some(v) if *v >= d_true - TIE_TOL))
                .map(|(_, &p)| p)
                .collect();
            total.add(p_joint * (multiplier * inner.value()).min(1.0));
        }
    }
    Ok(total.value().clamp(0.0, 1.0))
}

/// Sparse lattice carrying the distribution of `i(X^n;Y^n)` under the joint
/// law, with every per-symbol density rounded down to a multiple of
/// `grid_step`.
#[derive(Debug, Clone)]
pub struct DensityLattice {
    grid_step: f64,
    n: usize,
    atoms: Vec<(i64, f64)>,
    support: Vec<(i64, f64)>,
}

impl DensityLattice {
    /// Lattice for `n = 0` (a point mass at zero density).
    pub fn new(ch: &ChannelModel, grid_step: f64) -> Result<Self> {
        if !(grid_step > 0.0 && grid_step.is_finite()) {
            return Err(Error::domain(format!(
                "grid_step {grid_step} must be positive"
            )));
        }
        let mut per_symbol: BTreeMap<i64, f64> = BTreeMap::new();
        for (x, (row, &px)) in ch.transition().iter().zip(ch.input_dist()).enumerate() {
            for (y, &pyx) in row.iter().enumerate() {
                let mass = px * pyx;
                if mass == 0.0 {
                    continue;
                }
                if let Some(d) = ch.density().get(x, y) {
                    *per_symbol
                        .entry((d / grid_step).floor() as i64)
                        .or_default() += mass;
                }
            }
        }
        Ok(Self {
            grid_step,
            n: 0,
            atoms: per_symbol.into_iter().collect(),
            support: vec![(0, 1.0)],
        })
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `(density in bits, mass)` pairs in increasing density order.
    pub fn support(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support
            .iter()
            .map(move |&(i, m)| (i as f64 * self.grid_step, m))
    }

    pub fn total_mass(&self) -> f64 {
        self.support
            .iter()
            .map(|&(_, m)| m)
            .collect::<CompensatedSum>()
            .value()
    }

    /// Convolve with the per-symbol distribution once (`n -> n + 1`).
    pub fn advance(&mut self) {
        let mut next: BTreeMap<i64, f64> = BTreeMap::new();
        for &(i, m) in &self.support {
            for &(a, w) in &self.atoms {
                *next.entry(i + a).or_default() += m * w;
            }
        }
        let mut pruned = 0.0;
        let mut kept: Vec<(i64, f64)> = Vec::with_capacity(next.len());
        for (i, m) in next {
            if m < PRUNE_MASS {
                pruned += m;
            } else {
                kept.push((i, m));
            }
        }
        // pruned mass moves to the lowest retained density
        match kept.first_mut() {
            Some(first) => first.1 += pruned,
            None => kept.push((i64::MIN / 4, pruned)),
        }
        self.support = kept;
        self.n += 1;
    }

    /// `E[min{1, M 2^-i}]` over the current lattice.
    pub fn dt_bound(&self, log2_m: f64) -> f64 {
        if self.n == 0 {
            return 1.0;
        }
        let s: CompensatedSum = self
            .support
            .iter()
            .map(|&(i, m)| {
                let excess = i as f64 * self.grid_step - log2_m;
                if excess <= 0.0 {
                    m
                } else {
                    m * (-excess).exp2()
                }
            })
            .collect();
        s.value().clamp(0.0, 1.0)
    }
}

/// DT-style bound `E[2^-[i(X^n;Y^n) - log2 M]^+]` for a general DMC.
pub fn xi_dt_dmc(n: usize, log2_m: f64, ch: &ChannelModel, grid_step: f64) -> Result<f64> {
    let mut lattice = DensityLattice::new(ch, grid_step)?;
    for _ in 0..n {
        lattice.advance();
    }
    Ok(lattice.dt_bound(log2_m))
}

#[derive(Debug)]
struct Cache {
    values: Vec<f64>,
    lattice: Option<DensityLattice>,
}

/// Lazily filled, memoized `xi_0, xi_1, ...` for one `(channel, M)` pair.
///
/// Safe to share between threads; the cache is filled under a lock.
#[derive(Debug)]
pub struct XiSeries {
    channel: ChannelModel,
    log2_m: f64,
    method: XiMethod,
    convention: MultiplierConvention,
    grid_step: f64,
    oracle_limit: usize,
    cache: Mutex<Cache>,
}

impl XiSeries {
    pub fn new(channel: ChannelModel, log2_m: f64, method: XiMethod) -> Result<Self> {
        if !(log2_m >= 0.0 && log2_m.is_finite()) {
            return Err(Error::domain(format!(
                "log2 M = {log2_m} must be finite and >= 0"
            )));
        }
        if method == XiMethod::BscRcuExact && channel.crossover().is_none() {
            return Err(Error::domain("BscRcuExact requires a BSC channel"));
        }
        Ok(Self {
            channel,
            log2_m,
            method,
            convention: MultiplierConvention::default(),
            grid_step: DEFAULT_GRID_STEP,
            oracle_limit: DEFAULT_ORACLE_LIMIT,
            cache: Mutex::new(Cache {
                values: vec![1.0],
                lattice: None,
            }),
        })
    }

    /// BSC closed form with the `M` multiplier.
    pub fn bsc(p: f64, log2_m: f64) -> Result<Self> {
        Self::new(ChannelModel::bsc(p)?, log2_m, XiMethod::BscRcuExact)
    }

    pub fn with_convention(mut self, convention: MultiplierConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn with_grid_step(mut self, grid_step: f64) -> Result<Self> {
        if !(grid_step > 0.0 && grid_step.is_finite()) {
            return Err(Error::domain(format!(
                "grid_step {grid_step} must be positive"
            )));
        }
        self.grid_step = grid_step;
        Ok(self)
    }

    pub fn with_oracle_limit(mut self, limit: usize) -> Self {
        self.oracle_limit = limit;
        self
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }

    pub fn log2_m(&self) -> f64 {
        self.log2_m
    }

    pub fn method(&self) -> XiMethod {
        self.method
    }

    pub fn convention(&self) -> MultiplierConvention {
        self.convention
    }

    /// Mutual information of the underlying channel in bits.
    pub fn capacity(&self) -> f64 {
        self.channel.capacity()
    }

    pub fn get(&self, n: usize) -> Result<f64> {
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        while cache.values.len() <= n {
            let next = cache.values.len();
            let v = self.compute(next, &mut cache)?;
            cache.values.push(v);
        }
        Ok(cache.values[n])
    }

    fn compute(&self, n: usize, cache: &mut Cache) -> Result<f64> {
        let log2_mult = self.convention.log2_multiplier(self.log2_m);
        match self.method {
            XiMethod::BscRcuExact => {
                let p = self.channel.crossover().expect("checked at construction");
                Ok(xi_bsc_with_multiplier(n, log2_mult, p))
            }
            XiMethod::ExhaustiveOracle => xi_exact_oracle(
                n,
                self.log2_m,
                &self.channel,
                self.convention,
                self.oracle_limit,
            ),
            XiMethod::DmcDtConvolution => {
                let lattice = match cache.lattice.as_mut() {
                    Some(l) => l,
                    None => cache
                        .lattice
                        .insert(DensityLattice::new(&self.channel, self.grid_step)?),
                };
                while lattice.n() < n {
                    lattice.advance();
                }
                Ok(lattice.dt_bound(self.log2_m))
            }
        }
    }
}
