//! Non-asymptotic bounds for variable-length feedback codes with termination
//! (VLFT) built on finite-length codebooks with periodic decoding attempts.
//!
//! The crate is organised bottom-up:
//!
//! * [`channel`] holds discrete memoryless channels and their information density.
//! * [`xi`] evaluates the per-attempt decode-failure bound sequence.
//! * [`bounds`] turns that sequence into expected-latency bounds, the converse
//!   and the block-length/increment policies.
//! * [`sim`] runs the random-coding scheme itself to cross-check the bounds.
//! * [`sweep`] drives parameter sweeps and emits CSV.

pub mod bounds;
pub mod channel;
mod error;
pub mod numeric;
pub mod sim;
pub mod sweep;
pub mod xi;

pub use bounds::{
    arq_latency, arq_optimize, choose_attempts, choose_block_length, choose_increment,
    converse_max_log_m, ell_combined, ell_infinite, ell_periodic, ell_repeated, ell_truncated,
    BlockLengthPolicy, BoundKind, DecodingSchedule, Diagnostics, IncrementPolicy, LatencyBound,
    TailPolicy,
};
pub use channel::{ChannelModel, DensityTable};
pub use error::{Error, Result};
pub use sim::{
    estimate_zeta, simulate_vlft, trial_seed, SimConfig, SimEstimate, Variant, ZetaEstimate,
};
pub use sweep::{emit_csv, load_config, run_sweep, SweepConfig, SweepRow};
pub use xi::{
    xi_bsc, xi_dt_dmc, xi_exact_oracle, DensityLattice, MultiplierConvention, XiMethod, XiSeries,
};
