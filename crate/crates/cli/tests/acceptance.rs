//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

use std::process::Command;
use std::time::{Duration, Instant};

use vlft_core::{
    arq_latency, arq_optimize, choose_attempts, choose_increment, converse_max_log_m, ell_combined,
    ell_infinite, ell_periodic, ell_repeated, ell_truncated, load_config, run_sweep, simulate_vlft,
    trial_seed, xi_bsc, xi_exact_oracle, ChannelModel, DecodingSchedule, IncrementPolicy,
    MultiplierConvention, SimConfig, SweepRow, TailPolicy, Variant, XiSeries,
};

const P: f64 = 0.0789;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs()
}

fn rows_of(preset: &str) -> Result<Vec<SweepRow>, String> {
    let cfg = load_config(preset).map_err(|e| e.to_string())?;
    run_sweep(&cfg).map_err(|e| e.to_string())
}

fn throughput(rows: &[SweepRow], label: &str, k: u32) -> Result<f64, String> {
    rows.iter()
        .find(|r| r.label == label && r.k == k)
        .and_then(|r| r.throughput)
        .ok_or_else(|| format!("no feasible row {label:?} at k={k}"))
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for &p in &[0.0789, 0.1, 0.25] {
        let ch = ChannelModel::bsc(p).map_err(|e| e.to_string())?;
        for n in 0..=6 {
            for log2_m in 0..=3 {
                let fast = xi_bsc(n, log2_m as f64, p);
                let slow = xi_exact_oracle(n, log2_m as f64, &ch, MultiplierConvention::M, 6)
                    .map_err(|e| e.to_string())?;
                worst = worst.max((fast - slow).abs());
                cases += 1;
                check(close(fast, slow, 1e-12), || {
                    format!("n={n} log2M={log2_m} p={p}: closed form {fast} vs oracle {slow}")
                })?;
            }
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(10), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{cases} cases, max diff {worst:.1e}, {elapsed:.2?}"
    ))
}

fn noiseless_goldens() -> Outcome {
    let xi = XiSeries::bsc(0.0, 1.0).map_err(|e| e.to_string())?;
    let tail = TailPolicy::default();
    let e = |r: vlft_core::Result<vlft_core::LatencyBound>| r.map_err(|e| e.to_string());
    let inf = e(ell_infinite(&xi, &tail))?.expected_latency;
    let trunc = e(ell_truncated(&xi, 3))?;
    let rep = e(ell_repeated(&xi, 3))?.expected_latency;
    let per = e(ell_periodic(&xi, 1, 2, &tail))?.expected_latency;
    let sched = DecodingSchedule::new(1, 2, Some(2)).map_err(|e| e.to_string())?;
    let comb = e(ell_combined(&xi, &sched))?.expected_latency;
    let (n_star, arq) = arq_optimize(&xi, 2..=8).map_err(|e| e.to_string())?;
    let table = [
        ("infinite", inf, 3.0),
        ("truncated ell", trunc.expected_latency, 2.5),
        ("truncated eps", trunc.error_bound, 0.25),
        ("repeated", rep, 10.0 / 3.0),
        ("periodic", per, 11.0 / 3.0),
        ("combined", comb, 4.0),
        ("arq", arq.expected_latency, 4.0),
    ];
    for (name, got, want) in table {
        check(close(got, want, 1e-12), || {
            format!("{name}: {got} != {want}")
        })?;
    }
    Ok(format!("7 goldens exact, ARQ N*={n_star}"))
}

fn unit(base: u64, i: u64) -> f64 {
    (trial_seed(base, i) >> 11) as f64 / (1u64 << 53) as f64
}

fn reduction_lattice() -> Outcome {
    let tail = TailPolicy::default();
    let mut worst: f64 = 0.0;
    for i in 0..20u64 {
        let p = 0.01 + 0.2 * unit(11, 3 * i);
        let k = 1 + (unit(11, 3 * i + 1) * 12.0) as u32;
        let xi = XiSeries::bsc(p, k as f64).map_err(|e| e.to_string())?;
        let c = xi.capacity();
        let n = (k as f64 / c).ceil() as usize + 1 + (unit(11, 3 * i + 2) * 30.0) as usize;
        let ctx = format!("p={p:.4} k={k} N={n}");
        let e = |r: vlft_core::Result<vlft_core::LatencyBound>| {
            r.map(|b| b.expected_latency)
                .map_err(|e| format!("{ctx}: {e}"))
        };
        let every = DecodingSchedule::new(1, 1, Some(n)).map_err(|e| e.to_string())?;
        let arq_sched = DecodingSchedule::new(n, n, Some(1)).map_err(|e| e.to_string())?;
        let pairs = [
            (
                "combined(1,1,N) vs repeated",
                e(ell_combined(&xi, &every))?,
                e(ell_repeated(&xi, n))?,
            ),
            (
                "combined(m=1) vs ARQ",
                e(ell_combined(&xi, &arq_sched))?,
                e(arq_latency(&xi, n))?,
            ),
            (
                "periodic(1,1) vs infinite",
                e(ell_periodic(&xi, 1, 1, &tail))?,
                e(ell_infinite(&xi, &tail))?,
            ),
        ];
        for (name, a, b) in pairs {
            worst = worst.max((a - b).abs());
            check(close(a, b, 1e-12), || format!("{ctx} {name}: {a} vs {b}"))?;
        }
    }
    Ok(format!("20 tuples x 3 reductions, max diff {worst:.1e}"))
}

fn converse_sandwich() -> Outcome {
    let c = ChannelModel::bsc(P).map_err(|e| e.to_string())?.capacity();
    let mut checked = 0;
    for preset in ["fig1", "fig2"] {
        for r in rows_of(preset)? {
            let Some(ell) = r.ell else {
                return Err(format!("{preset} {} k={} infeasible", r.label, r.k));
            };
            let cap = converse_max_log_m(ell, c);
            let explicit = ell * c + (ell + 1.0).log2() + std::f64::consts::LOG2_E;
            check(
                close(cap, explicit, 1e-9) && r.converse_log_m == Some(cap),
                || format!("{preset} {} k={}: converse column mismatch", r.label, r.k),
            )?;
            check(r.k as f64 <= cap, || {
                format!("{preset} {} k={}: k > {cap}", r.label, r.k)
            })?;
            checked += 1;
        }
    }
    Ok(format!("{checked} rows, zero violations"))
}

// Frozen values from the fig1 preset.
const FIG1_GOLDEN: [(&str, u32, f64); 6] = [
    ("N=inf", 8, 0.555344758835),
    ("N=inf", 128, 0.608207553921),
    ("N=inf", 512, 0.604533619444),
    ("delta=0.4C", 128, 0.608207518899),
    ("delta=0.3C", 8, 0.49526924569),
    ("N=k/C+10log2(k/C)+30", 512, 0.602734142155),
];

// Frozen values from the fig2 preset.
const FIG2_GOLDEN: [(&str, u32, f64); 6] = [
    ("I=1", 16, 0.58460321185),
    ("I=ceil(log2 k)", 16, 0.547562368838),
    ("I=ceil(0.15k)", 16, 0.564523053461),
    ("ARQ N*", 16, 0.398175779584),
    ("I=ceil(log2 k)", 512, 0.601705160541),
    ("I=ceil(0.15k)", 512, 0.578785799489),
];

fn goldens(rows: &[SweepRow], table: &[(&str, u32, f64)]) -> Result<(), String> {
    for &(label, k, want) in table {
        let got = throughput(rows, label, k)?;
        check(rel_close(got, want, 1e-9), || {
            format!("golden {label} k={k}: {got} != {want}")
        })?;
    }
    Ok(())
}

fn fig1_convergence() -> Outcome {
    let rows = rows_of("fig1")?;
    goldens(&rows, &FIG1_GOLDEN)?;
    let cfg = load_config("fig1").map_err(|e| e.to_string())?;
    let ks = &cfg.k_list;
    let threshold = *ks
        .iter()
        .find(|&&k| {
            rows.iter()
                .any(|r| r.label == "N=inf" && r.k == k && r.ell.is_some_and(|l| l >= 200.0))
        })
        .ok_or("no k reaches ell >= 200")?;
    let inf = throughput(&rows, "N=inf", threshold)?;
    let d4 = throughput(&rows, "delta=0.4C", threshold)?;
    let rel = (inf - d4).abs() / inf;
    check(rel <= 0.03, || {
        format!("k={threshold}: delta=0.4C {d4} vs N=inf {inf} ({rel:.3})")
    })?;
    let mut visible = Vec::new();
    for &k in ks {
        let a = throughput(&rows, "delta=0.3C", k)?;
        let b = throughput(&rows, "delta=0.4C", k)?;
        if (a - b).abs() / b > 0.01 {
            visible.push(k);
        }
    }
    check(visible.iter().all(|&k| k < threshold), || {
        format!("delta curves differ by >1% at k={visible:?}, threshold k={threshold}")
    })?;
    let largest = *ks.last().unwrap();
    let inf_l = throughput(&rows, "N=inf", largest)?;
    for label in ["N=k/C+10log2(k/C)+30", "delta=0.3C", "delta=0.4C"] {
        let t = throughput(&rows, label, largest)?;
        check((inf_l - t).abs() / inf_l <= 0.03, || {
            format!("{label} at k={largest}: {t} vs {inf_l}")
        })?;
    }
    Ok(format!(
        "threshold k={threshold}, rel gap {rel:.1e}, >1% split only at k={visible:?}"
    ))
}

fn above_capacity() -> Outcome {
    let rows = rows_of("fig1")?;
    let c = ChannelModel::bsc(P).map_err(|e| e.to_string())?.capacity();
    let cfg = load_config("fig1").map_err(|e| e.to_string())?;
    let excess: Vec<(u32, f64)> = cfg
        .k_list
        .iter()
        .map(|&k| throughput(&rows, "N=inf", k).map(|t| (k, t - c)))
        .collect::<Result<_, _>>()?;
    let (k0, e0) = excess[0];
    let (kl, el) = *excess.last().unwrap();
    let summary = excess
        .iter()
        .map(|(k, e)| format!("{k}:{e:+.4}"))
        .collect::<Vec<_>>()
        .join(" ");
    check(e0 > 0.0, || {
        format!(
            "N=inf throughput at k={k0} is below C by {:.4}; excess {summary}",
            -e0
        )
    })?;
    let monotone = excess.windows(2).all(|w| w[1].1 < w[0].1);
    check(monotone || el < 0.2 * e0, || {
        format!("excess not shrinking: k={k0} {e0:.4}, k={kl} {el:.4}")
    })?;
    Ok(format!("excess {summary}"))
}

fn fig2_ordering() -> Outcome {
    let rows = rows_of("fig2")?;
    goldens(&rows, &FIG2_GOLDEN)?;
    let cfg = load_config("fig2").map_err(|e| e.to_string())?;
    let ks: Vec<u32> = cfg.k_list.iter().copied().filter(|&k| k >= 16).collect();
    let labels = ["I=1", "I=ceil(log2 k)", "I=ceil(0.15k)", "ARQ N*"];
    let mut misordered = Vec::new();
    for &k in &ks {
        let t: Vec<f64> = labels
            .iter()
            .map(|l| throughput(&rows, l, k))
            .collect::<Result<_, _>>()?;
        for w in 0..3 {
            if t[w] + 1e-12 < t[w + 1] {
                misordered.push(format!(
                    "k={k}: {} {:.4} < {} {:.4}",
                    labels[w],
                    t[w],
                    labels[w + 1],
                    t[w + 1]
                ));
            }
        }
    }
    let gap = |label: &str, k: u32| -> Result<f64, String> {
        Ok(throughput(&rows, "I=1", k)? - throughput(&rows, label, k)?)
    };
    let (k0, kl) = (ks[0], *ks.last().unwrap());
    let log_small = gap(labels[1], k0)?;
    let log_large = gap(labels[1], kl)?;
    let lin_small = gap(labels[2], k0)?;
    let lin_large = gap(labels[2], kl)?;
    let detail = format!(
        "log gap {log_small:.4}->{log_large:.4}, linear gap {lin_small:.4}->{lin_large:.4}"
    );
    check(misordered.is_empty(), || {
        format!("{}; {detail}", misordered.join("; "))
    })?;
    check(log_large < log_small, || {
        format!("log gap does not shrink: {detail}")
    })?;
    check(lin_large >= 0.5 * lin_small, || {
        format!("linear gap collapses: {detail}")
    })?;
    Ok(detail)
}

fn simulation_dominance() -> Outcome {
    let start = Instant::now();
    let ch = ChannelModel::bsc(P).map_err(|e| e.to_string())?;
    let c = ch.capacity();
    let mut notes = Vec::new();
    for k in [8u32, 16] {
        let xi = XiSeries::bsc(P, k as f64).map_err(|e| e.to_string())?;
        for policy in [IncrementPolicy::Fixed(1), IncrementPolicy::LogLog] {
            let inc = choose_increment(policy, k as f64).map_err(|e| e.to_string())?;
            let n1 = inc;
            let m = choose_attempts(k as f64, c, 0.4, n1, inc).map_err(|e| e.to_string())?;
            let sched = DecodingSchedule::new(n1, inc, Some(m)).map_err(|e| e.to_string())?;
            let big_n = sched.block_length().unwrap();
            let ell = ell_combined(&xi, &sched)
                .map_err(|e| e.to_string())?
                .expected_latency;
            let seed = 1000 + k as u64 * 10 + inc as u64;
            let rep = simulate_vlft(&SimConfig::new(
                ch.clone(),
                k,
                sched,
                Variant::Repeated,
                10_000,
                seed,
            ))
            .map_err(|e| e.to_string())?;
            check(rep.mean_tau <= ell + 3.0 * rep.std_error, || {
                format!(
                    "k={k} I={inc}: mean tau {} > ell {ell} + 3 se {}",
                    rep.mean_tau, rep.std_error
                )
            })?;
            let trunc = simulate_vlft(&SimConfig::new(
                ch.clone(),
                k,
                sched,
                Variant::Truncated,
                10_000,
                seed + 1,
            ))
            .map_err(|e| e.to_string())?;
            let xi_n = xi.get(big_n).map_err(|e| e.to_string())?;
            let (rate, se) = (trunc.error_rate.unwrap(), trunc.error_std_error.unwrap());
            check(rate <= xi_n + 3.0 * se, || {
                format!("k={k} I={inc}: error rate {rate} > xi_N {xi_n} + 3 se {se}")
            })?;
            notes.push(format!(
                "k={k},I={inc}: {:.2}<={ell:.2}, err {rate:.4}<={xi_n:.4}",
                rep.mean_tau
            ));
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!("{}; {elapsed:.1?}", notes.join("; ")))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_vlft-lab");
    let mut outputs = Vec::new();
    for i in 0..2 {
        let path = dir.path().join(format!("fig2_{i}.csv"));
        let status = Command::new(bin)
            .args(["sweep", "--config", "fig2", "--out"])
            .arg(&path)
            .status()
            .map_err(|e| e.to_string())?;
        check(status.success(), || format!("sweep exited with {status}"))?;
        outputs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    check(outputs[0] == outputs[1], || {
        "fig2 CSV differs between runs".to_string()
    })?;
    let ch = ChannelModel::bsc(P).map_err(|e| e.to_string())?;
    let sched = DecodingSchedule::new(3, 3, Some(8)).map_err(|e| e.to_string())?;
    let cfg = SimConfig::new(ch, 8, sched, Variant::Repeated, 1000, 99);
    let one = simulate_vlft(&cfg.clone().with_workers(1)).map_err(|e| e.to_string())?;
    let eight = simulate_vlft(&cfg.with_workers(8)).map_err(|e| e.to_string())?;
    check(one == eight, || {
        format!("1 worker {one:?} vs 8 workers {eight:?}")
    })?;
    Ok(format!(
        "{} byte CSV identical, 1 vs 8 workers identical",
        outputs[0].len()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("noiseless goldens", noiseless_goldens),
        ("reduction lattice", reduction_lattice),
        ("converse sandwich", converse_sandwich),
        ("fig1 convergence", fig1_convergence),
        ("above-capacity throughput", above_capacity),
        ("fig2 ordering", fig2_ordering),
        ("simulation dominance", simulation_dominance),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
