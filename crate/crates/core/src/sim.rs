//! Monte Carlo simulation of the random-coding VLFT scheme.
//!
//! Each trial draws a codebook of `M = 2^k` codewords with i.i.d. symbols
//! from the channel input distribution, sends a uniformly chosen message and
//! attempts decoding at the schedule times. A decoding attempt succeeds only
//! when the transmitted codeword is the *unique* information-density
//! maximiser; ties are failures.
//!
//! For a BSC the density is a decreasing (p < 1/2) or increasing (p > 1/2)
//! function of the Hamming distance, so the BSC path compares bit-packed
//! distances instead of summing densities.
//!
//! Trials are seeded by [`trial_seed`] and aggregated in trial order, so a run
//! is bit-identical for any worker count.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bounds::DecodingSchedule;
use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::numeric::ceil_guarded;

/// Largest `k = log2 M` the simulator accepts.
pub const MAX_SIM_LOG2_M: u32 = 22;
const MAX_RESTARTS: u32 = 100_000;
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Stop at the first success or at `N`, flagging an error at `N`.
    Truncated,
    /// After `N` symbols without success, resend the same codeword with fresh
    /// noise and discard everything received so far.
    Repeated,
    /// Unbounded codeword length, symbols drawn on demand; trials reaching the
    /// cap (default `64 k / C`) are censored.
    InfiniteCapped(Option<usize>),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub channel: ChannelModel,
    pub log2_m: u32,
    pub schedule: DecodingSchedule,
    pub variant: Variant,
    pub trials: usize,
    pub base_seed: u64,
    /// Thread count; `None` uses the ambient rayon pool.
    pub workers: Option<usize>,
    /// Draw one codebook for the whole run instead of one per trial.
    /// Exploratory only: the bounds are ensemble averages.
    pub fixed_codebook: bool,
}

impl SimConfig {
    pub fn new(
        channel: ChannelModel,
        log2_m: u32,
        schedule: DecodingSchedule,
        variant: Variant,
        trials: usize,
        base_seed: u64,
    ) -> Self {
        Self {
            channel,
            log2_m,
            schedule,
            variant,
            trials,
            base_seed,
            workers: None,
            fixed_codebook: false,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.trials == 0 {
            problems.push("trials must be >= 1".to_string());
        }
        if self.log2_m > MAX_SIM_LOG2_M {
            problems.push(format!(
                "k = {} exceeds the simulator limit {MAX_SIM_LOG2_M}",
                self.log2_m
            ));
        }
        if matches!(self.variant, Variant::Truncated | Variant::Repeated)
            && self.schedule.attempts().is_none()
        {
            problems.push("truncated/repeated variants need a finite attempt budget".to_string());
        }
        if self.workers == Some(0) {
            problems.push("workers must be >= 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    fn cap(&self) -> usize {
        match self.variant {
            Variant::InfiniteCapped(Some(cap)) => cap,
            _ => {
                let c = self.channel.capacity();
                let k = self.log2_m as f64;
                let base = if k == 0.0 {
                    0
                } else if c > 0.0 {
                    ceil_guarded(64.0 * k / c) as usize
                } else {
                    4096
                };
                base.max(self.schedule.first_attempt())
            }
        }
    }

    fn message_count(&self) -> usize {
        1usize << self.log2_m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEstimate {
    pub mean_tau: f64,
    pub std_error: f64,
    pub trials: usize,
    /// Fraction of trials ending in a wrong decision (truncated only).
    pub error_rate: Option<f64>,
    pub error_std_error: Option<f64>,
    /// Mean number of restarts (repeated only).
    pub restarts_mean: Option<f64>,
    pub censored: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaEstimate {
    pub probability: f64,
    pub std_error: f64,
    pub trials: usize,
}

/// Outcome of a single trial; exposed for the schedule-respect checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub tau: usize,
    pub error: bool,
    pub restarts: u32,
    pub censored: bool,
}

/// Stream seed for trial `index` of a run seeded with `base_seed`.
///
/// Both arguments pass through the SplitMix64 finaliser, a bijection on
/// `u64`, so distinct indices under one base seed never collide.
pub fn trial_seed(base_seed: u64, index: u64) -> u64 {
    mix64(
        mix64(base_seed)
            ^ index
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(0x632B_E59B_D9B4_E019),
    )
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn trial_rng(base_seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial_seed(base_seed, index))
}

// ---------------------------------------------------------------------------
// BSC: bit-packed codebook, Hamming-distance decoder

#[derive(Debug, Clone)]
struct BitCodebook {
    m: usize,
    // blocks[w][j] = bits 64w..64w+63 of codeword j
    blocks: Vec<Vec<u64>>,
}

impl BitCodebook {
    fn new(m: usize) -> Self {
        Self {
            m,
            blocks: Vec::new(),
        }
    }

    fn draw(m: usize, nbits: usize, rng: &mut impl Rng) -> Self {
        let mut cb = Self::new(m);
        cb.ensure(nbits, rng);
        cb
    }

    fn ensure(&mut self, nbits: usize, rng: &mut impl Rng) {
        while self.blocks.len() * 64 < nbits {
            let mut block = vec![0u64; self.m];
            rng.fill(&mut block[..]);
            self.blocks.push(block);
        }
    }

    #[cfg(test)]
    fn from_rows(rows: &[Vec<usize>]) -> Self {
        let len = rows.first().map_or(0, Vec::len);
        let nblocks = len.div_ceil(64);
        let mut blocks = vec![vec![0u64; rows.len()]; nblocks];
        for (j, row) in rows.iter().enumerate() {
            for (t, &b) in row.iter().enumerate() {
                if b == 1 {
                    blocks[t / 64][j] |= 1 << (t % 64);
                }
            }
        }
        Self {
            m: rows.len(),
            blocks,
        }
    }
}

#[derive(Debug, Default, Clone)]
struct BitReceived {
    y: Vec<u64>,
    noise: Vec<u64>,
    len: usize,
}

impl BitReceived {
    fn extend(&mut self, cb: &BitCodebook, truth: usize, nbits: usize, p: f64, rng: &mut impl Rng) {
        while self.len < nbits {
            let (w, b) = (self.len / 64, self.len % 64);
            if b == 0 {
                self.y.push(0);
                self.noise.push(0);
            }
            let flip = (rng.gen::<f64>() < p) as u64;
            let bit = ((cb.blocks[w][truth] >> b) & 1) ^ flip;
            self.noise[w] |= flip << b;
            self.y[w] |= bit << b;
            self.len += 1;
        }
    }
}

fn prefix_distance(words: impl Iterator<Item = u64>, n: usize) -> u32 {
    let full = n / 64;
    let rem = n % 64;
    let mut d = 0;
    for (w, x) in words.enumerate() {
        if w < full {
            d += x.count_ones();
        } else {
            if rem > 0 {
                d += (x & ((1u64 << rem) - 1)).count_ones();
            }
            break;
        }
    }
    d
}

struct BscDecoder {
    // smaller distance is better when p < 1/2
    lower_is_better: bool,
    last_blocker: Option<usize>,
}

impl BscDecoder {
    fn new(p: f64) -> Self {
        Self {
            lower_is_better: p < 0.5,
            last_blocker: None,
        }
    }

    fn distance(cb: &BitCodebook, rx: &BitReceived, j: usize, n: usize) -> u32 {
        prefix_distance(cb.blocks.iter().zip(&rx.y).map(|(blk, &y)| blk[j] ^ y), n)
    }

    fn blocks(&self, d_j: u32, d_true: u32) -> bool {
        if self.lower_is_better {
            d_j <= d_true
        } else {
            d_j >= d_true
        }
    }

    /// `true` iff codeword `truth` is the unique best after `n` symbols.
    fn unique_best(&mut self, cb: &BitCodebook, rx: &BitReceived, truth: usize, n: usize) -> bool {
        let d_true = prefix_distance(rx.noise.iter().copied(), n);
        if let Some(j) = self.last_blocker {
            if self.blocks(Self::distance(cb, rx, j, n), d_true) {
                return false;
            }
        }
        for j in (0..cb.m).filter(|&j| j != truth) {
            if self.blocks(Self::distance(cb, rx, j, n), d_true) {
                self.last_blocker = Some(j);
                return false;
            }
        }
        true
    }
}

// ---------------------------------------------------------------------------
// General DMC: symbol codebook, incremental density sums

#[derive(Debug, Clone)]
struct SymbolCodebook {
    rows: Vec<Vec<u16>>,
}

impl SymbolCodebook {
    fn new(m: usize) -> Self {
        Self {
            rows: vec![Vec::new(); m],
        }
    }

    fn ensure(&mut self, len: usize, input: &WeightedIndex<f64>, rng: &mut impl Rng) {
        let have = self.rows.first().map_or(0, Vec::len);
        for _ in have..len {
            for row in &mut self.rows {
                row.push(input.sample(rng) as u16);
            }
        }
    }
}

struct DensityDecoder<'a> {
    ch: &'a ChannelModel,
    outputs: Vec<WeightedIndex<f64>>,
    sums: Vec<f64>,
    dead: Vec<bool>,
    time: usize,
}

impl<'a> DensityDecoder<'a> {
    fn new(ch: &'a ChannelModel, m: usize) -> Self {
        let outputs = ch
            .transition()
            .iter()
            .map(|row| WeightedIndex::new(row).expect("rows are stochastic"))
            .collect();
        Self {
            ch,
            outputs,
            sums: vec![0.0; m],
            dead: vec![false; m],
            time: 0,
        }
    }

    fn reset(&mut self) {
        self.sums.iter_mut().for_each(|s| *s = 0.0);
        self.dead.iter_mut().for_each(|d| *d = false);
        self.time = 0;
    }

    /// Receive one more channel output for the transmitted codeword.
    fn step(&mut self, cb: &SymbolCodebook, truth: usize, rng: &mut impl Rng) {
        let t = self.time;
        let x = cb.rows[truth][t] as usize;
        let y = self.outputs[x].sample(rng);
        self.absorb(cb, t, y);
    }

    fn absorb(&mut self, cb: &SymbolCodebook, t: usize, y: usize) {
        let table = self.ch.density();
        for (j, row) in cb.rows.iter().enumerate() {
            if self.dead[j] {
                continue;
            }
            match table.get(row[t] as usize, y) {
                Some(d) => self.sums[j] += d,
                None => self.dead[j] = true,
            }
        }
        self.time += 1;
    }

    fn unique_best(&self, truth: usize) -> bool {
        let best = self.sums[truth];
        self.sums
            .iter()
            .zip(&self.dead)
            .enumerate()
            .all(|(j, (&s, &dead))| j == truth || dead || s < best - TIE_TOL)
    }
}

// ---------------------------------------------------------------------------
// Trials

enum SharedCodebook {
    None,
    Bits(BitCodebook),
    Symbols(SymbolCodebook),
}

fn bsc_fast_path(ch: &ChannelModel) -> Option<f64> {
    ch.crossover().filter(|&p| p != 0.5)
}

fn run_trial(cfg: &SimConfig, shared: &SharedCodebook, index: u64) -> TrialOutcome {
    let mut rng = trial_rng(cfg.base_seed, index);
    let m = cfg.message_count();
    let truth = rng.gen_range(0..m);
    match bsc_fast_path(&cfg.channel) {
        Some(p) => run_bsc_trial(cfg, shared, truth, p, &mut rng),
        None => run_dmc_trial(cfg, shared, truth, &mut rng),
    }
}

fn run_bsc_trial(
    cfg: &SimConfig,
    shared: &SharedCodebook,
    truth: usize,
    p: f64,
    rng: &mut ChaCha8Rng,
) -> TrialOutcome {
    let m = cfg.message_count();
    let s = &cfg.schedule;
    let mut dec = BscDecoder::new(p);
    match cfg.variant {
        Variant::Truncated | Variant::Repeated => {
            let big_n = s.block_length().expect("validated");
            let attempts = s.attempts().expect("validated");
            let mut owned = None;
            let mut offset = 0;
            let mut restarts = 0;
            loop {
                // each restart uses an independent codebook unless one is shared
                let cb = match shared {
                    SharedCodebook::Bits(cb) => cb,
                    _ => &*owned.insert(BitCodebook::draw(m, big_n, rng)),
                };
                let mut rx = BitReceived::default();
                rx.extend(cb, truth, big_n, p, rng);
                dec.last_blocker = None;
                for j in 1..=attempts {
                    let n = s.attempt_time(j);
                    if dec.unique_best(cb, &rx, truth, n) {
                        return TrialOutcome {
                            tau: offset + n,
                            error: false,
                            restarts,
                            censored: false,
                        };
                    }
                }
                if cfg.variant == Variant::Truncated {
                    return TrialOutcome {
                        tau: big_n,
                        error: true,
                        restarts: 0,
                        censored: false,
                    };
                }
                offset += big_n;
                restarts += 1;
                if restarts >= MAX_RESTARTS {
                    return TrialOutcome {
                        tau: offset,
                        error: false,
                        restarts,
                        censored: true,
                    };
                }
            }
        }
        Variant::InfiniteCapped(_) => {
            let cap = cfg.cap();
            let mut owned = match shared {
                SharedCodebook::Bits(cb) => cb.clone(),
                _ => BitCodebook::new(m),
            };
            let mut rx = BitReceived::default();
            let mut j = 1;
            loop {
                let n = s.attempt_time(j);
                if n > cap {
                    return TrialOutcome {
                        tau: cap,
                        error: false,
                        restarts: 0,
                        censored: true,
                    };
                }
                owned.ensure(n, rng);
                rx.extend(&owned, truth, n, p, rng);
                if dec.unique_best(&owned, &rx, truth, n) {
                    return TrialOutcome {
                        tau: n,
                        error: false,
                        restarts: 0,
                        censored: false,
                    };
                }
                j += 1;
            }
        }
    }
}

fn run_dmc_trial(
    cfg: &SimConfig,
    shared: &SharedCodebook,
    truth: usize,
    rng: &mut ChaCha8Rng,
) -> TrialOutcome {
    let m = cfg.message_count();
    let s = &cfg.schedule;
    let input = WeightedIndex::new(cfg.channel.input_dist()).expect("input_dist is a distribution");
    let mut dec = DensityDecoder::new(&cfg.channel, m);
    let (horizon, finite) = match cfg.variant {
        Variant::Truncated | Variant::Repeated => (s.block_length().expect("validated"), true),
        Variant::InfiniteCapped(_) => (cfg.cap(), false),
    };
    let mut cb = match shared {
        SharedCodebook::Symbols(cb) => cb.clone(),
        _ => SymbolCodebook::new(m),
    };
    if finite {
        cb.ensure(horizon, &input, rng);
    }
    let mut offset = 0;
    let mut restarts = 0;
    loop {
        dec.reset();
        let mut j = 1;
        loop {
            if finite && s.attempts().is_some_and(|mm| j > mm) {
                break;
            }
            let n = s.attempt_time(j);
            if n > horizon {
                break;
            }
            if !finite {
                cb.ensure(n, &input, rng);
            }
            while dec.time < n {
                dec.step(&cb, truth, rng);
            }
            if dec.unique_best(truth) {
                return TrialOutcome {
                    tau: offset + n,
                    error: false,
                    restarts,
                    censored: false,
                };
            }
            j += 1;
        }
        match cfg.variant {
            Variant::Truncated => {
                return TrialOutcome {
                    tau: horizon,
                    error: true,
                    restarts: 0,
                    censored: false,
                }
            }
            Variant::InfiniteCapped(_) => {
                return TrialOutcome {
                    tau: horizon,
                    error: false,
                    restarts: 0,
                    censored: true,
                }
            }
            Variant::Repeated => {
                offset += horizon;
                restarts += 1;
                if !matches!(shared, SharedCodebook::Symbols(_)) {
                    cb = SymbolCodebook::new(m);
                    cb.ensure(horizon, &input, rng);
                }
                if restarts >= MAX_RESTARTS {
                    return TrialOutcome {
                        tau: offset,
                        error: false,
                        restarts,
                        censored: true,
                    };
                }
            }
        }
    }
}

fn shared_codebook(cfg: &SimConfig) -> SharedCodebook {
    if !cfg.fixed_codebook {
        return SharedCodebook::None;
    }
    let mut rng = trial_rng(cfg.base_seed, u64::MAX);
    let m = cfg.message_count();
    let len = cfg.schedule.block_length().unwrap_or_else(|| cfg.cap());
    match bsc_fast_path(&cfg.channel) {
        Some(_) => SharedCodebook::Bits(BitCodebook::draw(m, len, &mut rng)),
        None => {
            let input = WeightedIndex::new(cfg.channel.input_dist()).expect("distribution");
            let mut cb = SymbolCodebook::new(m);
            cb.ensure(len, &input, &mut rng);
            SharedCodebook::Symbols(cb)
        }
    }
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::domain(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs every trial and returns the per-trial outcomes in trial order.
pub fn simulate_trials(cfg: &SimConfig) -> Result<Vec<TrialOutcome>> {
    cfg.validate()?;
    let shared = shared_codebook(cfg);
    in_pool(cfg.workers, || {
        (0..cfg.trials as u64)
            .into_par_iter()
            .map(|i| run_trial(cfg, &shared, i))
            .collect()
    })
}

fn mean_and_stderr(values: impl Iterator<Item = f64> + Clone, count: usize) -> (f64, f64) {
    let n = count as f64;
    let mean = values.clone().sum::<f64>() / n;
    if count < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Estimates the expected stopping time of the scheme in `cfg`.
///
/// Fails with [`Error::Censored`] when more than 1% of trials hit the cap.
pub fn simulate_vlft(cfg: &SimConfig) -> Result<SimEstimate> {
    let outcomes = simulate_trials(cfg)?;
    let trials = outcomes.len();
    let censored = outcomes.iter().filter(|o| o.censored).count();
    if censored * 100 > trials {
        return Err(Error::Censored { censored, trials });
    }
    let (mean_tau, std_error) = mean_and_stderr(outcomes.iter().map(|o| o.tau as f64), trials);
    let (error_rate, error_std_error) = if cfg.variant == Variant::Truncated {
        let (r, se) = mean_and_stderr(outcomes.iter().map(|o| o.error as u8 as f64), trials);
        (Some(r), Some(se))
    } else {
        (None, None)
    };
    let restarts_mean = (cfg.variant == Variant::Repeated)
        .then(|| outcomes.iter().map(|o| o.restarts as f64).sum::<f64>() / trials as f64);
    Ok(SimEstimate {
        mean_tau,
        std_error,
        trials,
        error_rate,
        error_std_error,
        restarts_mean,
        censored,
        seed: cfg.base_seed,
    })
}

/// Frequency of the marginal error event at time `n`: some wrong codeword's
/// density is at least the true codeword's.
pub fn estimate_zeta(cfg: &SimConfig, n: usize) -> Result<ZetaEstimate> {
    cfg.validate()?;
    if let Some(big_n) = cfg.schedule.block_length() {
        if n > big_n {
            return Err(Error::domain(format!(
                "n = {n} exceeds block length {big_n}"
            )));
        }
    }
    let m = cfg.message_count();
    let events: Vec<bool> = in_pool(cfg.workers, || {
        (0..cfg.trials as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = trial_rng(cfg.base_seed, i);
                let truth = rng.gen_range(0..m);
                if m == 1 {
                    return false;
                }
                match bsc_fast_path(&cfg.channel) {
                    Some(p) => {
                        let cb = BitCodebook::draw(m, n, &mut rng);
                        let mut rx = BitReceived::default();
                        rx.extend(&cb, truth, n, p, &mut rng);
                        !BscDecoder::new(p).unique_best(&cb, &rx, truth, n)
                    }
                    None => {
                        let input =
                            WeightedIndex::new(cfg.channel.input_dist()).expect("distribution");
                        let mut cb = SymbolCodebook::new(m);
                        cb.ensure(n, &input, &mut rng);
                        let mut dec = DensityDecoder::new(&cfg.channel, m);
                        while dec.time < n {
                            dec.step(&cb, truth, &mut rng);
                        }
                        !dec.unique_best(truth)
                    }
                }
            })
            .collect()
    })?;
    let (probability, std_error) =
        mean_and_stderr(events.iter().map(|&e| e as u8 as f64), events.len());
    Ok(ZetaEstimate {
        probability,
        std_error,
        trials: events.len(),
    })
}
