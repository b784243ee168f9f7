//! Shared fixtures for the criterion benchmarks.

use vlft_core::{ChannelModel, XiMethod, XiSeries};

/// Crossover probability used throughout the benchmarks.
pub const BENCH_CROSSOVER: f64 = 0.0789;

/// A fresh (cold cache) BSC series for message size `k`.
pub fn bsc_series(k: u32) -> XiSeries {
    XiSeries::bsc(BENCH_CROSSOVER, k as f64).expect("valid crossover")
}

/// A fresh DT series over the BSC, for comparing against the closed form.
pub fn dt_series(k: u32) -> XiSeries {
    let ch = ChannelModel::bsc(BENCH_CROSSOVER).expect("valid crossover");
    XiSeries::new(ch, k as f64, XiMethod::DmcDtConvolution).expect("valid series")
}
