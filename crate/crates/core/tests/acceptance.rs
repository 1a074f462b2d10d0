//! One line per criterion: `criterion N: PASS|FAIL <detail>`.
//! Run with `cargo test -p posbias-core --test acceptance -- --nocapture`.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::{check_case, fixtures, samples, simulator, small_catalog, Counting};
use posbias_core::backend::{BackendKind, BackendSpec, CallContext, RemoteSpec, SimulatorPreset};
use posbias_core::data::{popularity_order, sample_candidates, synthetic_catalog, DistributionKind, SyntheticSpec};
use posbias_core::metrics::{kendall_tau, ndcg_at_k};
use posbias_core::order::{rng, shuffle_in_place, uniform_below};
use posbias_core::runner::{run_experiment, DatasetSpec, ExperimentConfig, RunOptions, RunReport};
use posbias_core::strategies::{borda_aggregate, rank, CallLog, Session, StrategyConfig};
use posbias_core::types::ItemId;

fn verdict(n: &str, ok: bool, detail: impl AsRef<str>) -> bool {
    println!(
        "criterion {n}: {} {}",
        if ok { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    ok
}

fn labels(n: usize) -> Vec<ItemId> {
    (0..n).map(|i| ItemId::new(format!("x{i}"))).collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for slot in 0..n {
            let mut q = p.clone();
            q.insert(slot, n - 1);
            out.push(q);
        }
    }
    out
}

/// Pair counting straight from the definition.
fn brute_tau(a: &[ItemId], b: &[ItemId]) -> f64 {
    let pos = |l: &[ItemId], x: &ItemId| l.iter().position(|y| y == x).unwrap() as i64;
    let n = a.len();
    let (mut c, mut d) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let s = (pos(b, &a[i]) - pos(b, &a[j])).signum();
            // a[i] precedes a[j] in a, so the sign in b decides.
            if s < 0 {
                c += 1;
            } else {
                d += 1;
            }
        }
    }
    (c - d) as f64 / (n * (n - 1) / 2) as f64
}

#[test]
fn criterion_01_kendall_tau_matches_pair_counting() {
    let start = Instant::now();
    let mut checked = 0usize;
    let mut mismatches = 0usize;
    let mut check = |a: &[ItemId], b: &[ItemId]| {
        checked += 1;
        if kendall_tau(a, b).unwrap().tau != brute_tau(a, b) {
            mismatches += 1;
        }
    };
    // Every ordered pair for n <= 6.
    for n in 2..=6 {
        let ids = labels(n);
        let perms: Vec<Vec<ItemId>> = permutations(n)
            .into_iter()
            .map(|p| p.into_iter().map(|i| ids[i].clone()).collect())
            .collect();
        for a in &perms {
            for b in &perms {
                check(a, b);
            }
        }
    }
    // n = 7: tau depends only on the relative permutation, so every
    // permutation against a set of fixed references covers all classes.
    let ids = labels(7);
    let perms: Vec<Vec<ItemId>> = permutations(7)
        .into_iter()
        .map(|p| p.into_iter().map(|i| ids[i].clone()).collect())
        .collect();
    let mut r = rng(1);
    let mut refs = vec![ids.clone(), ids.iter().rev().cloned().collect()];
    for _ in 0..8 {
        refs.push(perms[uniform_below(&mut r, perms.len() as u64) as usize].clone());
    }
    for a in &refs {
        for b in &perms {
            check(a, b);
        }
    }
    let ids30 = labels(30);
    let mut r = rng(2);
    for _ in 0..1000 {
        let mut a = ids30.clone();
        let mut b = ids30.clone();
        shuffle_in_place(&mut a, &mut r);
        shuffle_in_place(&mut b, &mut r);
        check(&a, &b);
    }
    let rev: Vec<ItemId> = ids30.iter().rev().cloned().collect();
    let anchors = kendall_tau(&ids30, &ids30).unwrap().tau == 1.0 && kendall_tau(&ids30, &rev).unwrap().tau == -1.0;
    let elapsed = start.elapsed();
    let ok = mismatches == 0 && anchors && elapsed < Duration::from_secs(10);
    assert!(verdict(
        "1",
        ok,
        format!("{checked} pairs, {mismatches} mismatches, identity/reversal anchors {anchors}, {elapsed:.2?}")
    ));
}

fn anchor_config(dir: &Path, preset: SimulatorPreset) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(DatasetSpec::Synthetic {
        spec: SyntheticSpec::default(),
        seed: 42,
    });
    c.k_values = vec![10, 20, 30];
    c.rise_n_sweep = vec![1, 3, 5];
    c.sample_count = 10;
    c.trials = 2;
    c.backend = BackendSpec {
        kind: BackendKind::Simulator(preset.spec(42)),
        max_concurrency: 4,
    };
    c.output_dir = Some(dir.to_owned());
    c
}

#[test]
fn criterion_02_oracle_and_echo_anchors() {
    let start = Instant::now();
    let oracle_dir = tempfile::tempdir().unwrap();
    let echo_dir = tempfile::tempdir().unwrap();
    let oracle = run_experiment(
        &anchor_config(oracle_dir.path(), SimulatorPreset::Oracle),
        &RunOptions::default(),
    )
    .unwrap();
    let echo = run_experiment(
        &anchor_config(echo_dir.path(), SimulatorPreset::Echo),
        &RunOptions::default(),
    )
    .unwrap();
    let elapsed = start.elapsed();

    let exact =
        |m: &Option<posbias_core::MetricSummary>, want: f64| m.as_ref().is_some_and(|s| s.mean == want && s.std == 0.0);
    let mut failures = Vec::new();
    for c in &oracle.cells {
        if !(exact(&c.pc, 1.0) && exact(&c.sim, 1.0)) {
            failures.push(format!("oracle {} K={}", c.strategy, c.k));
        }
    }
    let mut bootstrap_echo = Vec::new();
    for c in &echo.cells {
        if c.strategy == "bootstrap" {
            // Bootstrap reshuffles before asking, so echo anchors do not apply.
            bootstrap_echo.push(format!("K={} PC {:.3}", c.k, c.pc.as_ref().unwrap().mean));
            continue;
        }
        if !(exact(&c.pc, -1.0) && exact(&c.sens, 1.0)) {
            failures.push(format!("echo {} K={}", c.strategy, c.k));
        }
    }
    let ok = failures.is_empty() && elapsed < Duration::from_secs(5);
    assert!(verdict(
        "2",
        ok,
        format!(
            "oracle PC=Sim=1 on {} cells, echo PC=-1 Sens=1 on standard/rise cells, failures {failures:?}, {elapsed:.2?} (echo bootstrap: {})",
            oracle.cells.len(),
            bootstrap_echo.join(", ")
        )
    ));
}

#[test]
fn criterion_03_borda() {
    let id = |s: &str| ItemId::new(s);
    let lists = vec![
        vec![id("a"), id("b"), id("c")],
        vec![id("b"), id("a"), id("c")],
        vec![id("a"), id("c"), id("b")],
    ];
    let hand = borda_aggregate(&lists).unwrap().ids() == [id("a"), id("b"), id("c")];

    let mut r = rng(3);
    let mut varied = 0;
    for _ in 0..1000 {
        let n = 2 + uniform_below(&mut r, 9) as usize;
        let m = 1 + uniform_below(&mut r, 6) as usize;
        let base = labels(n);
        let mut lists: Vec<Vec<ItemId>> = (0..m)
            .map(|_| {
                let mut l = base.clone();
                shuffle_in_place(&mut l, &mut r);
                l
            })
            .collect();
        let before = borda_aggregate(&lists).unwrap().into_ids();
        shuffle_in_place(&mut lists, &mut r);
        if borda_aggregate(&lists).unwrap().into_ids() != before {
            varied += 1;
        }
    }
    assert!(verdict(
        "3",
        hand && varied == 0,
        format!("hand example {hand}, {varied}/1000 order-dependent cases")
    ));
}

/// DCG straight from the definition with binary relevance.
fn brute_ndcg(ranking: &[ItemId], truth: &[ItemId], k: usize) -> f64 {
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, id)| truth.contains(id))
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..truth.len()).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    dcg / ideal
}

#[test]
fn criterion_04_ndcg() {
    let ids = labels(10);
    let truth = vec![ids[0].clone(), ids[3].clone(), ids[4].clone()];
    let hand = ndcg_at_k(&ids, &truth, 5).unwrap().value;
    let hand_ok = (hand - 0.8530).abs() <= 1e-3;

    let mut r = rng(4);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = 5 + uniform_below(&mut r, 26) as usize;
        let mut l = labels(n);
        shuffle_in_place(&mut l, &mut r);
        let mut pool = l.clone();
        shuffle_in_place(&mut pool, &mut r);
        let truth = &pool[..3];
        if ndcg_at_k(&l, truth, 5).unwrap().value != brute_ndcg(&l, truth, 5) {
            mismatches += 1;
        }
    }
    assert!(verdict(
        "4",
        hand_ok && mismatches == 0,
        format!("hand value {hand:.4}, {mismatches}/1000 oracle mismatches")
    ));
}

struct TrendRun {
    report: RunReport,
    elapsed: Duration,
}

fn trend_config(dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(DatasetSpec::Synthetic {
        spec: SyntheticSpec::default(),
        seed: 42,
    });
    c.k_values = vec![10, 20, 30];
    c.strategies = vec!["standard".into(), "bootstrap".into(), "rise@1".into()];
    c.rise_n_sweep = vec![1, 3, 5];
    c.sample_count = 200;
    c.trials = 3;
    c.experiment_seed = 42;
    c.backend = BackendSpec {
        kind: BackendKind::Simulator(SimulatorPreset::Biased { beta: 0.6, noise: 0.3 }.spec(42)),
        max_concurrency: 1,
    };
    c.output_dir = Some(dir.to_owned());
    c
}

/// The seeded BIASED(0.6, 0.3) grid, run once on one thread.
fn trend_run() -> &'static TrendRun {
    static RUN: OnceLock<TrendRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let report = run_experiment(&trend_config(dir.path()), &RunOptions::default()).unwrap();
        TrendRun {
            report,
            elapsed: start.elapsed(),
        }
    })
}

fn pc(report: &RunReport, k: usize, strategy: &str) -> f64 {
    report
        .cell(DistributionKind::Full, k, strategy)
        .unwrap()
        .pc
        .as_ref()
        .unwrap()
        .mean
}

fn sim(report: &RunReport, k: usize, strategy: &str) -> f64 {
    report
        .cell(DistributionKind::Full, k, strategy)
        .unwrap()
        .sim
        .as_ref()
        .unwrap()
        .mean
}

/// Cell means from the first seeded run.
const GOLDEN: &[(usize, &str, f64, f64)] = &[
    (10, "standard", 0.18407407407407422, 0.23288888888888898),
    (10, "bootstrap", 0.399728395061728, 0.4013333333333334),
    (10, "rise@1", 0.3137777777777769, 0.3305185185185186),
    (10, "rise@3", 0.2685185185185182, 0.2719999999999999),
    (10, "rise@5", 0.24614814814814806, 0.25451851851851853),
    (20, "standard", -0.07678947368421053, 0.05312280701754386),
    (20, "bootstrap", 0.14678947368421078, 0.14592982456140358),
    (20, "rise@1", 0.09371929824561404, 0.15207017543859647),
    (20, "rise@3", 0.04980701754385963, 0.1251228070175439),
    (20, "rise@5", 0.03671929824561409, 0.11115789473684208),
    (30, "standard", -0.07211494252873557, 0.06281992337164749),
    (30, "bootstrap", 0.13215070242656451, 0.1332707535121329),
    (30, "rise@1", -0.003532567049808434, 0.09541762452107277),
    (30, "rise@3", -0.019164750957854425, 0.08986973180076632),
    (30, "rise@5", -0.03206130268199236, 0.0793409961685824),
];

#[test]
fn criterion_05_consistency_trends() {
    let TrendRun { report, elapsed } = trend_run();
    let std10 = pc(report, 10, "standard");
    let std20 = pc(report, 20, "standard");
    let std30 = pc(report, 30, "standard");
    let a = std10 - std30 >= 0.10;
    let b20 = pc(report, 20, "rise@1") - std20;
    let b30 = pc(report, 30, "rise@1") - std30;
    let b = b20 >= 0.05 && b30 >= 0.05;
    let c: Vec<(usize, f64, f64)> = [10, 20, 30]
        .iter()
        .map(|&k| (k, sim(report, k, "bootstrap"), sim(report, k, "standard")))
        .collect();
    let c_ok = c.iter().all(|(_, boot, std)| boot > std);

    let mut drift = Vec::new();
    for &(k, s, want_pc, want_sim) in GOLDEN {
        let (got_pc, got_sim) = (pc(report, k, s), sim(report, k, s));
        if (got_pc - want_pc).abs() > 1e-9 || (got_sim - want_sim).abs() > 1e-9 {
            drift.push(format!("{s} K={k}: PC {got_pc} Sim {got_sim}"));
        }
    }
    // Dump the grid in pin format when it moves.
    for cell in report.cells.iter().filter(|_| !drift.is_empty()) {
        println!(
            "  ({}, \"{}\", {:?}, {:?}),",
            cell.k,
            cell.strategy,
            cell.pc.as_ref().unwrap().mean,
            cell.sim.as_ref().unwrap().mean
        );
    }
    let fast = *elapsed < Duration::from_secs(120);
    // Endpoint drop K=10 -> K=30. Bias strength stops growing at length 20,
    // so K=20 and K=30 differ by sampling noise only.
    let middle = if std20 > std30 {
        "monotone"
    } else {
        "not monotone between K=20 and K=30"
    };
    verdict(
        "5a",
        a,
        format!(
            "standard PC {std10:.3} (K=10) -> {std20:.3} (K=20) -> {std30:.3} (K=30), drop {:.3}, {middle}",
            std10 - std30
        ),
    );
    verdict(
        "5b",
        b,
        format!("rise@1 - standard PC: {b20:+.3} (K=20), {b30:+.3} (K=30)"),
    );
    verdict(
        "5c",
        c_ok,
        c.iter()
            .map(|(k, b, s)| format!("K={k} Sim {b:.3} vs {s:.3}"))
            .collect::<Vec<_>>()
            .join(", "),
    );
    verdict(
        "5-golden",
        drift.is_empty(),
        format!("{} pinned cells, drift {drift:?}", GOLDEN.len()),
    );
    verdict("5-runtime", fast, format!("{elapsed:.2?} single-threaded"));
    assert!(verdict("5", a && b && c_ok && drift.is_empty() && fast, "all parts"));
}

#[test]
fn criterion_06_selection_depth() {
    let TrendRun { report, .. } = trend_run();
    let [r1, r3, r5] = ["rise@1", "rise@3", "rise@5"].map(|s| pc(report, 20, s));
    let ok = r1 >= r3 && r3 >= r5 && r1 - r5 >= 0.03;
    assert!(verdict(
        "6",
        ok,
        format!(
            "K=20 PC rise@1 {r1:.3} >= rise@3 {r3:.3} >= rise@5 {r5:.3}, gap {:.3}",
            r1 - r5
        )
    ));
}

#[test]
fn criterion_07_intertwined_pattern() {
    let catalog = synthetic_catalog(&SyntheticSpec::default(), 42).unwrap();
    let order = popularity_order(&catalog);
    let mut wrong = 0;
    for seed in 0..50 {
        let cands = sample_candidates(&catalog, 10, DistributionKind::Intertwined, seed).unwrap();
        let ranks: Vec<usize> = cands
            .ids()
            .iter()
            .map(|id| order.iter().position(|x| x == id).unwrap())
            .collect();
        let mut sorted = ranks.clone();
        sorted.sort();
        let relative: Vec<usize> = ranks.iter().map(|r| sorted.binary_search(r).unwrap()).collect();
        if relative != [0, 9, 1, 8, 2, 7, 3, 6, 4, 5] {
            wrong += 1;
        }
    }
    assert!(verdict(
        "7",
        wrong == 0,
        format!("{wrong}/50 draws off the [0,9,1,8,2,7,3,6,4,5] pattern")
    ));
}

#[test]
fn criterion_08_call_accounting() {
    let cat = small_catalog();
    let backend = Counting::new(simulator(SimulatorPreset::Biased { beta: 0.6, noise: 0.3 }));
    let mut wrong = Vec::new();
    let mut checked = 0;
    for k in [10usize, 20, 30] {
        let drawn = &samples(&cat, k, 1, k as u64)[0];
        let s = &drawn.sample;
        let mut cases = vec![(StrategyConfig::standard(), 1), (StrategyConfig::bootstrap(), 9)];
        for n in [1usize, 3, 5] {
            cases.push((StrategyConfig::rise(n), k.div_ceil(n)));
        }
        for (cfg, want) in cases {
            backend.reset();
            let mut log = CallLog::default();
            let mut session = Session::new(&backend, CallContext::new(s), &mut log);
            rank(s, s.candidates(), &cfg, 1, &mut session).unwrap();
            checked += 1;
            if backend.count() != want {
                wrong.push(format!("{} K={k}: {} calls, want {want}", cfg.label(), backend.count()));
            }
        }
    }
    assert!(verdict(
        "8",
        wrong.is_empty(),
        format!("{checked} strategy/K cases, mismatches {wrong:?}")
    ));
}

#[test]
fn criterion_09_schedule_independence() {
    let mut runs = Vec::new();
    for threads in [1, 8, 8] {
        let dir = tempfile::tempdir().unwrap();
        let mut c = trend_config(dir.path());
        c.sample_count = 20;
        c.trials = 2;
        c.backend.max_concurrency = threads;
        run_experiment(&c, &RunOptions::default()).unwrap();
        let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
        runs.push((threads, read("trials.jsonl"), read("report.csv")));
    }
    let same = runs.windows(2).all(|w| w[0].1 == w[1].1 && w[0].2 == w[1].2);
    assert!(verdict(
        "9",
        same,
        format!(
            "trials.jsonl and report.csv byte-identical across concurrency {:?}",
            runs.iter().map(|r| r.0).collect::<Vec<_>>()
        )
    ));
}

#[test]
fn criterion_10_parser_fixtures() {
    let f = fixtures();
    let (pool, titles) = f.pool();
    let mut failures: Vec<String> = f
        .malformed
        .iter()
        .filter_map(|c| check_case(c, &pool, &titles, true).err())
        .collect();
    failures.extend(
        f.clean
            .iter()
            .filter_map(|c| check_case(c, &pool, &titles, false).err()),
    );
    let ok = failures.is_empty() && f.malformed.len() >= 20;
    assert!(verdict(
        "10",
        ok,
        format!(
            "{} malformed + {} clean fixtures, failures {failures:#?}",
            f.malformed.len(),
            f.clean.len()
        )
    ));
}

/// Needs POSBIAS_LIVE_BASE_URL, POSBIAS_LIVE_MODEL and an API key in the
/// variable named by POSBIAS_LIVE_KEY_ENV (default OPENAI_API_KEY).
#[test]
fn criterion_11_live_endpoint_smoke() {
    let (Ok(base_url), Ok(model)) = (
        std::env::var("POSBIAS_LIVE_BASE_URL"),
        std::env::var("POSBIAS_LIVE_MODEL"),
    ) else {
        println!("criterion 11: SKIP set POSBIAS_LIVE_BASE_URL and POSBIAS_LIVE_MODEL to run against a live endpoint");
        return;
    };
    let key_env = std::env::var("POSBIAS_LIVE_KEY_ENV").unwrap_or_else(|_| "OPENAI_API_KEY".into());
    if std::env::var(&key_env).is_err() {
        println!("criterion 11: SKIP no API key in {key_env}");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let mut spec = RemoteSpec::new(base_url, model);
    spec.api_key_env = Some(key_env);
    let mut c = ExperimentConfig::new(DatasetSpec::Synthetic {
        spec: SyntheticSpec::default(),
        seed: 42,
    });
    c.k_values = vec![10];
    c.rise_n_sweep = vec![1];
    c.sample_count = 1;
    c.trials = 1;
    c.max_failure_fraction = 1.0;
    c.backend = BackendSpec {
        kind: BackendKind::Remote(spec),
        max_concurrency: 2,
    };
    c.output_dir = Some(dir.path().to_owned());
    let opts = RunOptions {
        confirm_remote: true,
        backend: None,
    };
    let result = run_experiment(&c, &opts);
    let rows: BTreeMap<String, bool> = match &result {
        Ok(r) => r.cells.iter().map(|c| (c.strategy.clone(), c.pc.is_some())).collect(),
        Err(_) => BTreeMap::new(),
    };
    let ok = result.is_ok() && rows.len() == 3 && dir.path().join("report.csv").exists();
    assert!(verdict("11", ok, format!("{:?}, rows {rows:?}", result.err())));
}
