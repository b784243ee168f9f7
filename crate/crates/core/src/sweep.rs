//! Parameter sweeps over message sizes and bound families, plus the JSON
//! config and CSV formats used by the `vlft-lab` CLI.
//!
//! A config is a single JSON object:
//!
//! ```json
//! {
//!   "bsc": 0.0789,
//!   "k_list": [8, 16, 32],
//!   "curves": [
//!     {"label": "inf", "kind": "infinite"},
//!     {"label": "d04", "kind": "repeated", "block_length": {"delta_frac": 0.4}},
//!     {"label": "ll", "kind": "combined", "block_length": {"delta_frac": 0.4},
//!      "increment": "log_log"}
//!   ],
//!   "simulation": {"trials": 10000, "seed": 1}
//! }
//! ```
//!
//! A general DMC replaces `"bsc"` with `"transition"` and `"input_dist"`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{Map, Value};

use crate::bounds::{
    arq_optimize, choose_attempts, choose_block_length, choose_increment, converse_max_log_m,
    default_arq_range, ell_combined, ell_infinite, ell_periodic, ell_repeated, ell_truncated,
    BlockLengthPolicy, BoundKind, DecodingSchedule, IncrementPolicy, LatencyBound, TailPolicy,
};
use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::sim::{simulate_vlft, trial_seed, SimConfig, Variant, MAX_SIM_LOG2_M};
use crate::xi::{MultiplierConvention, XiMethod, XiSeries, DEFAULT_GRID_STEP};

/// Column order of every emitted CSV file.
pub const CSV_HEADER: [&str; 13] = [
    "label",
    "k",
    "M_log2",
    "N",
    "n_1",
    "I",
    "m",
    "ell",
    "epsilon",
    "throughput",
    "converse_log_m",
    "sim_mean",
    "sim_stderr",
];

const INFEASIBLE: &str = "infeasible";
const UNBOUNDED: &str = "inf";

/// k grid shared by the builtin presets.
pub const PRESET_K_LIST: [u32; 13] = [8, 12, 16, 24, 32, 48, 64, 96, 128, 192, 256, 384, 512];

/// Names accepted by [`load_config`] in place of a path.
pub const PRESETS: [&str; 3] = ["fig1", "fig2", "sim"];

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSpec {
    pub label: String,
    pub kind: BoundKind,
    pub block_length: Option<BlockLengthPolicy>,
    pub increment: IncrementPolicy,
    pub first_attempt: Option<usize>,
    pub attempts: Option<usize>,
    pub arq_range: Option<(usize, usize)>,
    pub xi_method: Option<XiMethod>,
    pub convention: Option<MultiplierConvention>,
    pub grid_step: Option<f64>,
}

impl CurveSpec {
    pub fn new(label: impl Into<String>, kind: BoundKind) -> Self {
        Self {
            label: label.into(),
            kind,
            block_length: None,
            increment: IncrementPolicy::Fixed(1),
            first_attempt: None,
            attempts: None,
            arq_range: None,
            xi_method: None,
            convention: None,
            grid_step: None,
        }
    }

    pub fn with_block_length(mut self, policy: BlockLengthPolicy) -> Self {
        self.block_length = Some(policy);
        self
    }

    pub fn with_increment(mut self, policy: IncrementPolicy) -> Self {
        self.increment = policy;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationSpec {
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub channel: ChannelModel,
    pub k_list: Vec<u32>,
    pub curves: Vec<CurveSpec>,
    pub xi_method: XiMethod,
    pub convention: MultiplierConvention,
    pub grid_step: f64,
    pub tail: TailPolicy,
    pub simulation: Option<SimulationSpec>,
    pub output: Option<PathBuf>,
}

impl SweepConfig {
    pub fn new(channel: ChannelModel, k_list: Vec<u32>, curves: Vec<CurveSpec>) -> Self {
        let xi_method = default_method(&channel);
        Self {
            channel,
            k_list,
            curves,
            xi_method,
            convention: MultiplierConvention::default(),
            grid_step: DEFAULT_GRID_STEP,
            tail: TailPolicy::default(),
            simulation: None,
            output: None,
        }
    }

    /// Builtin config by name, see [`PRESETS`].
    pub fn preset(name: &str) -> Option<Self> {
        let channel = ChannelModel::bsc(0.0789).expect("valid crossover");
        let k_list = PRESET_K_LIST.to_vec();
        let delta = |d| BlockLengthPolicy::LogOverCDelta(d);
        let cfg = match name {
            "fig1" => Self::new(
                channel,
                k_list,
                vec![
                    CurveSpec::new("N=inf", BoundKind::Infinite),
                    CurveSpec::new("N=k/C+10log2(k/C)+30", BoundKind::Repeated)
                        .with_block_length(BlockLengthPolicy::EllPlusLog { a: 10.0, b: 30.0 }),
                    CurveSpec::new("delta=0.3C", BoundKind::Repeated).with_block_length(delta(0.3)),
                    CurveSpec::new("delta=0.4C", BoundKind::Repeated).with_block_length(delta(0.4)),
                ],
            ),
            "fig2" => Self::new(
                channel,
                k_list,
                vec![
                    CurveSpec::new("I=1", BoundKind::Combined).with_block_length(delta(0.4)),
                    CurveSpec::new("I=ceil(log2 k)", BoundKind::Combined)
                        .with_block_length(delta(0.4))
                        .with_increment(IncrementPolicy::LogLog),
                    CurveSpec::new("I=ceil(0.15k)", BoundKind::Combined)
                        .with_block_length(delta(0.4))
                        .with_increment(IncrementPolicy::LinearLog(0.15)),
                    CurveSpec::new("ARQ N*", BoundKind::Arq),
                ],
            ),
            "sim" => {
                let mut cfg = Self::new(
                    channel,
                    vec![8, 16],
                    vec![
                        CurveSpec::new("I=1", BoundKind::Combined).with_block_length(delta(0.4)),
                        CurveSpec::new("I=ceil(log2 k)", BoundKind::Combined)
                            .with_block_length(delta(0.4))
                            .with_increment(IncrementPolicy::LogLog),
                    ],
                );
                cfg.simulation = Some(SimulationSpec {
                    trials: 10_000,
                    seed: 1,
                });
                cfg
            }
            _ => return None,
        };
        Some(cfg)
    }

    fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.k_list.is_empty() {
            problems.push("k_list must not be empty".to_string());
        }
        if self.k_list.windows(2).any(|w| w[0] >= w[1]) {
            problems.push(format!(
                "k_list must be strictly increasing: {:?}",
                self.k_list
            ));
        }
        if self.k_list.contains(&0) {
            problems.push("k_list entries must be >= 1".to_string());
        }
        let mut labels = BTreeSet::new();
        for c in &self.curves {
            if !labels.insert(c.label.as_str()) {
                problems.push(format!("duplicate curve label {:?}", c.label));
            }
            let needs_n = matches!(c.kind, BoundKind::Truncated | BoundKind::Repeated);
            if needs_n && c.block_length.is_none() {
                problems.push(format!(
                    "curve {:?}: kind {} needs block_length",
                    c.label,
                    c.kind.as_str()
                ));
            }
            if c.kind == BoundKind::Combined && c.block_length.is_none() && c.attempts.is_none() {
                problems.push(format!(
                    "curve {:?}: combined needs block_length or m",
                    c.label
                ));
            }
            let method = c.xi_method.unwrap_or(self.xi_method);
            if method == XiMethod::BscRcuExact && self.channel.crossover().is_none() {
                problems.push(format!(
                    "curve {:?}: xi_method bsc_rcu needs a BSC channel",
                    c.label
                ));
            }
        }
        if self.xi_method == XiMethod::BscRcuExact && self.channel.crossover().is_none() {
            problems.push("xi_method bsc_rcu needs a BSC channel".to_string());
        }
        problems
    }

    /// `validate` plus the limits that only apply when simulating.
    fn validate_for_run(&self) -> Vec<String> {
        let mut problems = self.validate();
        if self.simulation.is_some() {
            if let Some(&k) = self.k_list.iter().find(|&&k| k > MAX_SIM_LOG2_M) {
                problems.push(format!(
                    "simulation supports k <= {MAX_SIM_LOG2_M}, k_list has {k}"
                ));
            }
        }
        problems
    }
}

fn default_method(channel: &ChannelModel) -> XiMethod {
    if channel.crossover().is_some() {
        XiMethod::BscRcuExact
    } else {
        XiMethod::DmcDtConvolution
    }
}

/// Command-line overrides of top-level scalar keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub bsc: Option<f64>,
    pub xi_method: Option<XiMethod>,
    pub convention: Option<MultiplierConvention>,
    pub grid_step: Option<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

impl SweepConfig {
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(p) = o.bsc {
            self.channel = ChannelModel::bsc(p).map_err(|e| Error::Config(vec![e.to_string()]))?;
        }
        if let Some(m) = o.xi_method {
            self.xi_method = m;
        }
        if let Some(c) = o.convention {
            self.convention = c;
        }
        if let Some(g) = o.grid_step {
            self.grid_step = g;
        }
        if o.trials.is_some() || o.seed.is_some() {
            let sim = self.simulation.get_or_insert(SimulationSpec {
                trials: 10_000,
                seed: 0,
            });
            if let Some(t) = o.trials {
                sim.trials = t;
            }
            if let Some(s) = o.seed {
                sim.seed = s;
            }
        }
        if let Some(out) = &o.output {
            self.output = Some(out.clone());
        }
        let problems = self.validate_for_run();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

// ---------------------------------------------------------------------------
// JSON parsing

const TOP_KEYS: [&str; 11] = [
    "bsc",
    "transition",
    "input_dist",
    "k_list",
    "curves",
    "simulation",
    "output",
    "xi_method",
    "m_convention",
    "grid_step",
    "channel",
];
const CURVE_KEYS: [&str; 11] = [
    "label",
    "kind",
    "block_length",
    "increment",
    "n1",
    "m",
    "arq_range",
    "xi_method",
    "m_convention",
    "grid_step",
    "n",
];

fn check_keys(obj: &Map<String, Value>, allowed: &[&str], ctx: &str, problems: &mut Vec<String>) {
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            problems.push(format!("{ctx}: unknown key {key:?}"));
        }
    }
}

fn as_count(v: &Value, what: &str, problems: &mut Vec<String>) -> Option<usize> {
    match v.as_u64() {
        Some(n) if n >= 1 => Some(n as usize),
        _ => {
            problems.push(format!("{what}: expected a positive integer, got {v}"));
            None
        }
    }
}

fn as_prob_vec(v: &Value) -> Option<Vec<f64>> {
    v.as_array()?.iter().map(Value::as_f64).collect()
}

fn parse_channel(obj: &Map<String, Value>, problems: &mut Vec<String>) -> Option<ChannelModel> {
    let channel_obj = match obj.get("channel") {
        Some(Value::Object(c)) => {
            check_keys(c, &["bsc", "transition", "input_dist"], "channel", problems);
            c
        }
        Some(other) => {
            problems.push(format!("channel: expected an object, got {other}"));
            return None;
        }
        None => obj,
    };
    let bsc = channel_obj.get("bsc");
    let transition = channel_obj.get("transition");
    match (bsc, transition) {
        (Some(_), Some(_)) => {
            problems.push("channel: give either bsc or transition, not both".to_string());
            None
        }
        (None, None) => {
            problems.push(
                "missing channel: expected \"bsc\" or \"transition\" + \"input_dist\"".to_string(),
            );
            None
        }
        (Some(p), None) => match p.as_f64() {
            Some(p) => ChannelModel::bsc(p)
                .map_err(|e| problems.push(format!("bsc: {e}")))
                .ok(),
            None => {
                problems.push(format!("bsc: expected a number, got {p}"));
                None
            }
        },
        (None, Some(t)) => {
            let rows: Option<Vec<Vec<f64>>> = t
                .as_array()
                .and_then(|rows| rows.iter().map(as_prob_vec).collect());
            let Some(rows) = rows else {
                problems.push("transition: expected an array of numeric arrays".to_string());
                return None;
            };
            let Some(input) = channel_obj.get("input_dist").and_then(as_prob_vec) else {
                problems.push("input_dist: expected a numeric array".to_string());
                return None;
            };
            ChannelModel::new(rows, input)
                .map_err(|e| problems.push(format!("channel: {e}")))
                .ok()
        }
    }
}

fn parse_method(v: &Value, ctx: &str, problems: &mut Vec<String>) -> Option<XiMethod> {
    let m = v.as_str().and_then(XiMethod::parse);
    if m.is_none() {
        problems.push(format!(
            "{ctx}xi_method: unknown method {v} (bsc_rcu, dt, oracle)"
        ));
    }
    m
}

fn parse_convention(
    v: &Value,
    ctx: &str,
    problems: &mut Vec<String>,
) -> Option<MultiplierConvention> {
    let c = v.as_str().and_then(MultiplierConvention::parse);
    if c.is_none() {
        problems.push(format!(
            "{ctx}m_convention: expected \"M\" or \"M_minus_one\", got {v}"
        ));
    }
    c
}

fn parse_grid(v: &Value, ctx: &str, problems: &mut Vec<String>) -> Option<f64> {
    match v.as_f64() {
        Some(g) if g > 0.0 => Some(g),
        _ => {
            problems.push(format!(
                "{ctx}grid_step: expected a positive number, got {v}"
            ));
            None
        }
    }
}

fn parse_block_length(
    v: &Value,
    ctx: &str,
    problems: &mut Vec<String>,
) -> Option<BlockLengthPolicy> {
    if v.is_u64() {
        return as_count(v, &format!("{ctx}block_length"), problems).map(BlockLengthPolicy::Fixed);
    }
    let Some(obj) = v.as_object() else {
        problems.push(format!(
            "{ctx}block_length: expected an integer or object, got {v}"
        ));
        return None;
    };
    check_keys(
        obj,
        &["delta_frac", "ell_plus_log", "fixed"],
        &format!("{ctx}block_length"),
        problems,
    );
    if let Some(d) = obj.get("delta_frac") {
        return match d.as_f64() {
            Some(d) if d > 0.0 && d < 1.0 => Some(BlockLengthPolicy::LogOverCDelta(d)),
            _ => {
                problems.push(format!(
                    "{ctx}block_length.delta_frac: expected a number in (0,1), got {d}"
                ));
                None
            }
        };
    }
    if let Some(e) = obj.get("ell_plus_log") {
        let a = e.get("a").and_then(Value::as_f64);
        let b = e.get("b").and_then(Value::as_f64);
        if let Some(eo) = e.as_object() {
            check_keys(
                eo,
                &["a", "b"],
                &format!("{ctx}block_length.ell_plus_log"),
                problems,
            );
        }
        return match (a, b) {
            (Some(a), Some(b)) if a >= 0.0 && b >= 0.0 => {
                Some(BlockLengthPolicy::EllPlusLog { a, b })
            }
            _ => {
                problems.push(format!(
                    "{ctx}block_length.ell_plus_log: expected {{\"a\": >=0, \"b\": >=0}}"
                ));
                None
            }
        };
    }
    if let Some(n) = obj.get("fixed") {
        return as_count(n, &format!("{ctx}block_length.fixed"), problems)
            .map(BlockLengthPolicy::Fixed);
    }
    problems.push(format!("{ctx}block_length: empty policy"));
    None
}

fn parse_increment(v: &Value, ctx: &str, problems: &mut Vec<String>) -> Option<IncrementPolicy> {
    if v.is_u64() {
        return as_count(v, &format!("{ctx}increment"), problems).map(IncrementPolicy::Fixed);
    }
    if v.as_str() == Some("log_log") {
        return Some(IncrementPolicy::LogLog);
    }
    if let Some(c) = v.get("linear_log") {
        return match c.as_f64() {
            Some(c) if c > 0.0 => Some(IncrementPolicy::LinearLog(c)),
            _ => {
                problems.push(format!(
                    "{ctx}increment.linear_log: expected a positive number, got {c}"
                ));
                None
            }
        };
    }
    problems.push(format!(
        "{ctx}increment: expected an integer, \"log_log\" or {{\"linear_log\": c}}, got {v}"
    ));
    None
}

fn parse_curve(v: &Value, idx: usize, problems: &mut Vec<String>) -> Option<CurveSpec> {
    let ctx = format!("curves[{idx}].");
    let Some(obj) = v.as_object() else {
        problems.push(format!("curves[{idx}]: expected an object"));
        return None;
    };
    check_keys(obj, &CURVE_KEYS, &format!("curves[{idx}]"), problems);
    let before = problems.len();
    let kind = match obj
        .get("kind")
        .map(|k| (k, k.as_str().and_then(BoundKind::parse)))
    {
        Some((_, Some(kind))) => Some(kind),
        Some((k, None)) => {
            problems.push(format!("{ctx}kind: unknown bound kind {k}"));
            None
        }
        None => {
            problems.push(format!("{ctx}kind: missing"));
            None
        }
    };
    let label = match obj.get("label") {
        Some(Value::String(s)) => Some(s.clone()),
        Some(other) => {
            problems.push(format!("{ctx}label: expected a string, got {other}"));
            None
        }
        None => kind.map(|k| k.as_str().to_string()),
    };
    let mut block_length = obj
        .get("block_length")
        .and_then(|b| parse_block_length(b, &ctx, problems));
    if let Some(n) = obj.get("n") {
        block_length = as_count(n, &format!("{ctx}n"), problems).map(BlockLengthPolicy::Fixed);
    }
    let increment = obj
        .get("increment")
        .map(|i| parse_increment(i, &ctx, problems))
        .unwrap_or(Some(IncrementPolicy::Fixed(1)));
    let first_attempt = obj
        .get("n1")
        .and_then(|n| as_count(n, &format!("{ctx}n1"), problems));
    let attempts = obj
        .get("m")
        .and_then(|n| as_count(n, &format!("{ctx}m"), problems));
    let arq_range = obj.get("arq_range").and_then(|r| {
        let pair = r
            .as_array()
            .filter(|a| a.len() == 2)
            .and_then(|a| Some((a[0].as_u64()? as usize, a[1].as_u64()? as usize)));
        match pair {
            Some((lo, hi)) if lo >= 1 && lo <= hi => Some((lo, hi)),
            _ => {
                problems.push(format!(
                    "{ctx}arq_range: expected [lo, hi] with 1 <= lo <= hi, got {r}"
                ));
                None
            }
        }
    });
    let xi_method = obj
        .get("xi_method")
        .and_then(|m| parse_method(m, &ctx, problems));
    let convention = obj
        .get("m_convention")
        .and_then(|m| parse_convention(m, &ctx, problems));
    let grid_step = obj
        .get("grid_step")
        .and_then(|g| parse_grid(g, &ctx, problems));
    if problems.len() > before {
        return None;
    }
    Some(CurveSpec {
        label: label?,
        kind: kind?,
        block_length,
        increment: increment?,
        first_attempt,
        attempts,
        arq_range,
        xi_method,
        convention,
        grid_step,
    })
}

/// Parses and validates a JSON config document, reporting every problem found.
pub fn parse_config(text: &str) -> Result<SweepConfig> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| Error::Config(vec![format!("malformed JSON: {e}")]))?;
    let Some(obj) = value.as_object() else {
        return Err(Error::Config(vec![
            "config must be a JSON object".to_string()
        ]));
    };
    let mut problems = Vec::new();
    check_keys(obj, &TOP_KEYS, "config", &mut problems);
    let channel = parse_channel(obj, &mut problems);

    let k_list: Option<Vec<u32>> = match obj.get("k_list") {
        Some(Value::Array(ks)) => {
            let parsed: Vec<Option<u32>> = ks
                .iter()
                .map(|k| match k.as_u64() {
                    Some(k) if k >= 1 && k <= u32::MAX as u64 => Some(k as u32),
                    _ => {
                        problems.push(format!("k_list: {k} is not a positive integer"));
                        None
                    }
                })
                .collect();
            parsed.into_iter().collect()
        }
        Some(other) => {
            problems.push(format!("k_list: expected an array, got {other}"));
            None
        }
        None => {
            problems.push("missing k_list".to_string());
            None
        }
    };

    let curves: Option<Vec<CurveSpec>> = match obj.get("curves") {
        Some(Value::Array(cs)) => {
            let parsed: Vec<Option<CurveSpec>> = cs
                .iter()
                .enumerate()
                .map(|(i, c)| parse_curve(c, i, &mut problems))
                .collect();
            parsed.into_iter().collect()
        }
        Some(other) => {
            problems.push(format!("curves: expected an array, got {other}"));
            None
        }
        None => {
            problems.push("missing curves".to_string());
            None
        }
    };

    if let Some(ks) = &k_list {
        if ks.is_empty() {
            problems.push("k_list must not be empty".to_string());
        }
        if ks.windows(2).any(|w| w[0] >= w[1]) {
            problems.push(format!("k_list must be strictly increasing: {ks:?}"));
        }
    }
    if let Some(cs) = &curves {
        let mut labels = BTreeSet::new();
        for c in cs {
            if !labels.insert(c.label.as_str()) {
                problems.push(format!("duplicate curve label {:?}", c.label));
            }
        }
    }

    let xi_method = obj
        .get("xi_method")
        .and_then(|m| parse_method(m, "", &mut problems));
    let convention = obj
        .get("m_convention")
        .and_then(|m| parse_convention(m, "", &mut problems));
    let grid_step = obj
        .get("grid_step")
        .and_then(|g| parse_grid(g, "", &mut problems));

    let simulation = match obj.get("simulation") {
        None | Some(Value::Null) => None,
        Some(Value::Object(s)) => {
            check_keys(s, &["trials", "seed"], "simulation", &mut problems);
            let trials = s.get("trials").map_or(Some(10_000), |t| {
                as_count(t, "simulation.trials", &mut problems)
            });
            let seed = match s.get("seed") {
                None => Some(0),
                Some(v) => v.as_u64().or_else(|| {
                    problems.push(format!(
                        "simulation.seed: expected a non-negative integer, got {v}"
                    ));
                    None
                }),
            };
            trials
                .zip(seed)
                .map(|(trials, seed)| SimulationSpec { trials, seed })
        }
        Some(other) => {
            problems.push(format!("simulation: expected an object, got {other}"));
            None
        }
    };

    let output = match obj.get("output") {
        None => None,
        Some(Value::String(p)) => Some(PathBuf::from(p)),
        Some(Value::Object(o)) => {
            check_keys(o, &["path", "format"], "output", &mut problems);
            if let Some(f) = o.get("format") {
                if f.as_str() != Some("csv") {
                    problems.push(format!("output.format: only \"csv\" is supported, got {f}"));
                }
            }
            o.get("path").and_then(Value::as_str).map(PathBuf::from)
        }
        Some(other) => {
            problems.push(format!(
                "output: expected a path string or object, got {other}"
            ));
            None
        }
    };

    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let channel = channel.expect("no problems implies a channel");
    let mut cfg = SweepConfig::new(channel, k_list.expect("checked"), curves.expect("checked"));
    if let Some(m) = xi_method {
        cfg.xi_method = m;
    }
    if let Some(c) = convention {
        cfg.convention = c;
    }
    if let Some(g) = grid_step {
        cfg.grid_step = g;
    }
    cfg.simulation = simulation;
    cfg.output = output;
    let problems = cfg.validate();
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(problems))
    }
}

/// Loads a config from a preset name or a JSON file path.
pub fn load_config(source: impl AsRef<Path>) -> Result<SweepConfig> {
    let source = source.as_ref();
    if let Some(cfg) = source.to_str().and_then(SweepConfig::preset) {
        return Ok(cfg);
    }
    let text = std::fs::read_to_string(source).map_err(|e| Error::Io {
        path: source.to_path_buf(),
        source: e,
    })?;
    parse_config(&text)
}

// ---------------------------------------------------------------------------
// Evaluation

/// One line of sweep output. `ell == None` marks an infeasible point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub label: String,
    pub k: u32,
    pub log2_m: f64,
    pub block_length: Option<usize>,
    pub first_attempt: usize,
    pub increment: usize,
    pub attempts: Option<usize>,
    pub ell: Option<f64>,
    pub epsilon: Option<f64>,
    pub throughput: Option<f64>,
    pub converse_log_m: Option<f64>,
    pub sim_mean: Option<f64>,
    pub sim_stderr: Option<f64>,
}

impl SweepRow {
    pub fn is_feasible(&self) -> bool {
        self.ell.is_some()
    }
}

type SeriesKey = (u32, XiMethod, MultiplierConvention, u64);

struct Resolved {
    block_length: Option<usize>,
    first_attempt: usize,
    increment: usize,
    attempts: Option<usize>,
    variant: Option<Variant>,
}

fn evaluate_point(
    cfg: &SweepConfig,
    curve: &CurveSpec,
    k: u32,
    xi: &XiSeries,
) -> Result<(Resolved, Option<LatencyBound>)> {
    let kf = k as f64;
    let c = cfg.channel.capacity();
    let block = |policy: Option<BlockLengthPolicy>| -> Result<usize> {
        choose_block_length(policy.expect("validated"), kf, c)
    };
    let feasible = |r: Result<LatencyBound>| -> Result<Option<LatencyBound>> {
        match r {
            Ok(b) => Ok(Some(b)),
            Err(
                Error::Infeasible { .. }
                | Error::NoFeasibleBlockLength { .. }
                | Error::NonConvergence { .. },
            ) => Ok(None),
            Err(e) => Err(e),
        }
    };
    Ok(match curve.kind {
        BoundKind::Infinite => (
            Resolved {
                block_length: None,
                first_attempt: 1,
                increment: 1,
                attempts: None,
                variant: Some(Variant::InfiniteCapped(None)),
            },
            feasible(ell_infinite(xi, &cfg.tail))?,
        ),
        BoundKind::Truncated | BoundKind::Repeated => {
            let n = block(curve.block_length)?;
            let (bound, variant) = if curve.kind == BoundKind::Truncated {
                (ell_truncated(xi, n), Variant::Truncated)
            } else {
                (ell_repeated(xi, n), Variant::Repeated)
            };
            (
                Resolved {
                    block_length: Some(n),
                    first_attempt: 1,
                    increment: 1,
                    attempts: Some(n),
                    variant: Some(variant),
                },
                feasible(bound)?,
            )
        }
        BoundKind::Periodic => {
            let inc = choose_increment(curve.increment, kf)?;
            let n1 = curve.first_attempt.unwrap_or(inc);
            (
                Resolved {
                    block_length: None,
                    first_attempt: n1,
                    increment: inc,
                    attempts: None,
                    variant: Some(Variant::InfiniteCapped(None)),
                },
                feasible(ell_periodic(xi, n1, inc, &cfg.tail))?,
            )
        }
        BoundKind::Combined => {
            let inc = choose_increment(curve.increment, kf)?;
            let n1 = curve.first_attempt.unwrap_or(inc);
            let m = match (curve.attempts, curve.block_length) {
                (Some(m), _) => m,
                (None, Some(BlockLengthPolicy::LogOverCDelta(d))) => {
                    choose_attempts(kf, c, d, n1, inc)?
                }
                (None, policy) => {
                    let n = block(policy)?;
                    if n <= n1 {
                        1
                    } else {
                        (n - n1).div_ceil(inc) + 1
                    }
                }
            };
            let schedule = DecodingSchedule::new(n1, inc, Some(m))?;
            (
                Resolved {
                    block_length: schedule.block_length(),
                    first_attempt: n1,
                    increment: inc,
                    attempts: Some(m),
                    variant: Some(Variant::Repeated),
                },
                feasible(ell_combined(xi, &schedule))?,
            )
        }
        BoundKind::Arq => {
            let range = match curve.arq_range {
                Some((lo, hi)) => lo..=hi,
                None => default_arq_range(kf, c),
            };
            match arq_optimize(xi, range.clone()) {
                Ok((n, b)) => (
                    Resolved {
                        block_length: Some(n),
                        first_attempt: n,
                        increment: n,
                        attempts: Some(1),
                        variant: Some(Variant::Repeated),
                    },
                    Some(b),
                ),
                Err(Error::NoFeasibleBlockLength { .. }) => (
                    Resolved {
                        block_length: None,
                        first_attempt: *range.start(),
                        increment: *range.start(),
                        attempts: Some(1),
                        variant: None,
                    },
                    None,
                ),
                Err(e) => return Err(e),
            }
        }
    })
}

/// Evaluates every `(curve, k)` point. Rows are ordered by `(label, k)`.
/// Infeasible points produce rows with `ell == None`; other errors abort.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    let problems = cfg.validate_for_run();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let key = |curve: &CurveSpec, k: u32| -> SeriesKey {
        (
            k,
            curve.xi_method.unwrap_or(cfg.xi_method),
            curve.convention.unwrap_or(cfg.convention),
            curve.grid_step.unwrap_or(cfg.grid_step).to_bits(),
        )
    };
    let mut series: BTreeMap<SeriesKey, XiSeries> = BTreeMap::new();
    for curve in &cfg.curves {
        for &k in &cfg.k_list {
            let key = key(curve, k);
            if series.contains_key(&key) {
                continue;
            }
            let s = XiSeries::new(cfg.channel.clone(), k as f64, key.1)?
                .with_convention(key.2)
                .with_grid_step(f64::from_bits(key.3))?;
            series.insert(key, s);
        }
    }

    let mut points: Vec<(&CurveSpec, u32)> = cfg
        .curves
        .iter()
        .flat_map(|c| cfg.k_list.iter().map(move |&k| (c, k)))
        .collect();
    points.sort_by(|a, b| a.0.label.cmp(&b.0.label).then(a.1.cmp(&b.1)));

    let capacity = cfg.channel.capacity();
    let evaluated: Vec<Result<(SweepRow, Option<Variant>)>> = points
        .par_iter()
        .map(|&(curve, k)| {
            let xi = &series[&key(curve, k)];
            let (r, bound) = evaluate_point(cfg, curve, k, xi)?;
            let row = SweepRow {
                label: curve.label.clone(),
                k,
                log2_m: k as f64,
                block_length: r.block_length,
                first_attempt: r.first_attempt,
                increment: r.increment,
                attempts: r.attempts,
                ell: bound.as_ref().map(|b| b.expected_latency),
                epsilon: bound.as_ref().map(|b| b.error_bound),
                throughput: bound.as_ref().map(|b| b.throughput),
                converse_log_m: bound
                    .as_ref()
                    .map(|b| converse_max_log_m(b.expected_latency, capacity)),
                sim_mean: None,
                sim_stderr: None,
            };
            let variant = if row.is_feasible() { r.variant } else { None };
            Ok((row, variant))
        })
        .collect();
    let mut rows = Vec::with_capacity(evaluated.len());
    for (idx, item) in evaluated.into_iter().enumerate() {
        let (mut row, variant) = item?;
        if let (Some(sim), Some(variant)) = (cfg.simulation, variant) {
            let schedule = DecodingSchedule::new(row.first_attempt, row.increment, row.attempts)?;
            let sc = SimConfig::new(
                cfg.channel.clone(),
                row.k,
                schedule,
                variant,
                sim.trials,
                trial_seed(sim.seed, idx as u64),
            );
            let est = simulate_vlft(&sc)?;
            row.sim_mean = Some(est.mean_tau);
            row.sim_stderr = Some(est.std_error);
        }
        rows.push(row);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// CSV

/// Formats `x` with 12 significant digits, like C's `%.12g`.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim(mantissa), exp)
    }
}

fn opt_num(v: Option<f64>, missing: &str) -> String {
    v.map_or_else(|| missing.to_string(), format_sig12)
}

fn opt_count(v: Option<usize>) -> String {
    v.map_or_else(|| UNBOUNDED.to_string(), |n| n.to_string())
}

fn quote_label(label: &str) -> String {
    if label.contains([',', '"', '\n']) {
        format!("\"{}\"", label.replace('"', "\"\""))
    } else {
        label.to_string()
    }
}

/// Renders rows as CSV text (header first, `\n` line endings).
pub fn to_csv_string(rows: &[SweepRow]) -> String {
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            quote_label(&r.label),
            r.k,
            format_sig12(r.log2_m),
            opt_count(r.block_length),
            r.first_attempt,
            r.increment,
            opt_count(r.attempts),
            opt_num(r.ell, INFEASIBLE),
            opt_num(r.epsilon, INFEASIBLE),
            opt_num(r.throughput, INFEASIBLE),
            opt_num(r.converse_log_m, INFEASIBLE),
            opt_num(r.sim_mean, ""),
            opt_num(r.sim_stderr, ""),
        );
    }
    out
}

/// Writes rows to `path` as CSV.
pub fn emit_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_csv_string(rows)).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(ch) = chars.next() {
        match (ch, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => fields.push(std::mem::take(&mut cur)),
            (c, _) => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

/// Parses text produced by [`to_csv_string`].
pub fn parse_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER.join(",") => {}
        _ => {
            return Err(Error::Csv {
                line: 1,
                msg: "missing or unexpected header".to_string(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let err = |msg: String| Error::Csv { line: line_no, msg };
        let f = split_csv_line(line);
        if f.len() != CSV_HEADER.len() {
            return Err(err(format!(
                "expected {} fields, got {}",
                CSV_HEADER.len(),
                f.len()
            )));
        }
        let num = |s: &str, missing: &str| -> Result<Option<f64>> {
            if s == missing {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| err(format!("bad number {s:?}")))
            }
        };
        let count = |s: &str| -> Result<Option<usize>> {
            if s == UNBOUNDED {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| err(format!("bad count {s:?}")))
            }
        };
        let int =
            |s: &str| -> Result<usize> { s.parse().map_err(|_| err(format!("bad integer {s:?}"))) };
        rows.push(SweepRow {
            label: f[0].clone(),
            k: f[1].parse().map_err(|_| err(format!("bad k {:?}", f[1])))?,
            log2_m: f[2]
                .parse()
                .map_err(|_| err(format!("bad M_log2 {:?}", f[2])))?,
            block_length: count(&f[3])?,
            first_attempt: int(&f[4])?,
            increment: int(&f[5])?,
            attempts: count(&f[6])?,
            ell: num(&f[7], INFEASIBLE)?,
            epsilon: num(&f[8], INFEASIBLE)?,
            throughput: num(&f[9], INFEASIBLE)?,
            converse_log_m: num(&f[10], INFEASIBLE)?,
            sim_mean: num(&f[11], "")?,
            sim_stderr: num(&f[12], "")?,
        });
    }
    Ok(rows)
}
