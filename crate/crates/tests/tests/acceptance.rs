//! Acceptance criteria 1-8. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use depcap_cli::config::{ModelSource, Params, PartitionerKind, RunConfig, SelectorKind, StrategyEntry};
use depcap_cli::harness::{write_csv, Harness, RunRow, COLUMNS};
use depcap_core::analysis::{random_fixtures, run_fixture, ENUMERATION_CAP};
use depcap_core::cap::{select_safe_subset, SelectConfig};
use depcap_core::denoiser::{HmmModel, RandomModelSpec};
use depcap_core::depga::{plan_next_block, PartitionConfig};
use depcap_core::engine::{run_decode, Partitioner, Selector, StrategySpec};
use depcap_core::mutants::{self, Mutant};
use depcap_core::{BlockSpan, Dist, Predictions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;
const FLOOR: f64 = 1e-12;

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Runs `f` and, when a budget is given, fails it for running over.
fn timed(budget_secs: Option<u64>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let elapsed = start.elapsed();
    out.detail.push_str(&format!(", {:.2}s", elapsed.as_secs_f64()));
    if let Some(b) = budget_secs {
        out.detail.push_str(&format!(" (limit {b}s)"));
        out.pass &= elapsed <= Duration::from_secs(b);
    }
    out
}

// ---- criterion 1 ----------------------------------------------------------

fn vanilla_nfe_identity() -> Outcome {
    let lens = [8usize, 64, 256];
    let partitioners = [
        Partitioner::Fixed(16),
        Partitioner::Fixed(32),
        Partitioner::Fixed(64),
        Partitioner::DepGa(PartitionConfig::default()),
        Partitioner::AdaBlock {
            delimiter: 0,
            default_size: 32,
        },
    ];
    let mut bad = Vec::new();
    for i in 0..100u64 {
        let k = 1 + (i % 5) as usize;
        let v = 2 + (i % 15) as usize;
        let model = HmmModel::random(RandomModelSpec::new(k, v), 1000 + i).unwrap();
        let prompt = model.sample_reference_sequence((i % 17) as usize, i);
        let l_gen = lens[(i % 3) as usize];
        let spec = StrategySpec::new(partitioners[(i % 5) as usize], Selector::Vanilla).with_l_gen(l_gen);
        let run = run_decode(&model, &prompt, &spec).unwrap();
        if run.metrics.nfe != l_gen || run.metrics.tokens_per_step.iter().any(|&t| t != 1) {
            bad.push((i, run.metrics.nfe, l_gen));
        }
    }
    Outcome::new(
        bad.is_empty(),
        format!("{}/100 runs with nfe = L_gen {:?}", 100 - bad.len(), bad),
    )
}

// ---- criterion 2 ----------------------------------------------------------

fn information_identities() -> Outcome {
    let fixtures = random_fixtures(50, 0, ENUMERATION_CAP).unwrap();
    let mut worst = [0.0f64; 3];
    let mut failures = 0;
    let mut shape_ok = fixtures.len() >= 50;
    for f in &fixtures {
        shape_ok &= f.model.states() <= 3 && f.model.vocab_size() <= 4 && f.targets.len() <= 4;
        let out = run_fixture(f).unwrap();
        let r = &out.report;
        let influence = out.influence_residuals.iter().copied().fold(0.0, f64::max);
        let res = [
            r.chain_residual(),
            r.overlap_residual(),
            influence.max(r.sample_residual()),
        ];
        for (w, x) in worst.iter_mut().zip(res) {
            *w = w.max(x);
        }
        if res.iter().any(|x| x.is_nan() || *x > TOL) {
            failures += 1;
        }
    }
    Outcome::new(
        shape_ok && failures == 0,
        format!(
            "{} fixtures, {failures} failing; max residuals chain {:.1e}, overlap {:.1e}, expected-vs-sample {:.1e}",
            fixtures.len(),
            worst[0],
            worst[1],
            worst[2]
        ),
    )
}

// ---- criterion 3 ----------------------------------------------------------

fn argmax(d: &Dist) -> (usize, f64) {
    let mut best = (0, d.probs()[0]);
    for (i, &p) in d.probs().iter().enumerate() {
        if p > best.1 {
            best = (i, p);
        }
    }
    best
}

fn oracle_conflict_score(a: &Dist, b: &Dist) -> f64 {
    let (ya, _) = argmax(a);
    let (yb, _) = argmax(b);
    a.probs()[yb].max(FLOOR).ln() + b.probs()[ya].max(FLOOR).ln()
}

fn dist_from(weights: &[(usize, f64)], v: usize) -> Dist {
    let mut w = vec![0.0; v];
    for &(i, p) in weights {
        w[i] = p;
    }
    Dist::new(w).unwrap()
}

fn random_peaked(rng: &mut ChaCha8Rng, v: usize) -> Dist {
    let top = rng.random_range(0..v);
    let conf = rng.random_range(0.3..1.0);
    let mut w: Vec<f64> = (0..v)
        .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() })
        .collect();
    w[top] = 0.0;
    let rest: f64 = w.iter().sum();
    if rest > 0.0 {
        w.iter_mut().for_each(|x| *x *= (1.0 - conf) / rest);
        w[top] = conf;
    } else {
        w[top] = 1.0;
    }
    Dist::from_weights(w).unwrap()
}

fn cap_safety() -> Outcome {
    // hand trace: 1 and 2 conflict, 3 conflicts with neither
    let v = 3;
    let dists: Predictions = [
        (1, dist_from(&[(0, 0.97), (1, 0.03)], v)),
        (2, dist_from(&[(0, 0.10), (1, 0.90)], v)),
        (3, dist_from(&[(1, 0.15), (2, 0.85)], v)),
    ]
    .into_iter()
    .collect();
    let masked: BTreeSet<usize> = [1, 2, 3].into();
    let traced = select_safe_subset(BlockSpan::new(1, 3), &masked, &dists, &SelectConfig::default()).unwrap();
    let traced_ok = traced.positions() == vec![1, 3] && traced.high_confidence == vec![1] && traced.greedy == vec![3];

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    let mut empty = 0;
    let mut greedy_seen = 0;
    for _ in 0..10_000 {
        let v = rng.random_range(2..=6);
        let len = rng.random_range(1..=12);
        let start = rng.random_range(0..20);
        let block = BlockSpan::new(start, len);
        let mut masked: BTreeSet<usize> = block.positions().filter(|_| rng.random_bool(0.8)).collect();
        if masked.is_empty() {
            masked.insert(start + rng.random_range(0..len));
        }
        let preds: Predictions = block.positions().map(|p| (p, random_peaked(&mut rng, v))).collect();
        let cfg = if rng.random_bool(0.5) {
            SelectConfig {
                gamma: rng.random_range(-30.0..0.0),
                ..Default::default()
            }
        } else {
            let tau_low = rng.random_range(0.3..0.9);
            SelectConfig {
                tau_low,
                tau_high: rng.random_range(tau_low..=1.0),
                gamma: rng.random_range(-30.0..0.0),
            }
        };
        let s = select_safe_subset(block, &masked, &preds, &cfg).unwrap();
        let chosen = s.positions();
        if chosen.is_empty() || chosen.iter().any(|p| !masked.contains(p)) {
            empty += 1;
            continue;
        }
        let phase1: Vec<usize> = masked
            .iter()
            .copied()
            .filter(|p| argmax(&preds[p]).1 >= cfg.tau_high)
            .collect();
        if s.high_confidence != phase1 {
            violations += 1;
            continue;
        }
        greedy_seen += s.greedy.len();
        let greedy: BTreeSet<usize> = s.greedy.iter().copied().collect();
        for (a, &i) in chosen.iter().enumerate() {
            for &j in &chosen[a + 1..] {
                if (greedy.contains(&i) || greedy.contains(&j))
                    && oracle_conflict_score(&preds[&i], &preds[&j]) > cfg.gamma
                {
                    violations += 1;
                }
            }
        }
    }
    Outcome::new(
        traced_ok && violations == 0 && empty == 0,
        format!(
            "hand trace {:?}, 10000 instances: {violations} unsafe pairs, {empty} empty or invalid subsets, {greedy_seen} greedy picks",
            traced.positions()
        ),
    )
}

// ---- criterion 4 ----------------------------------------------------------

fn oracle_kl(p: &Dist, q: &Dist) -> f64 {
    let kl: f64 = p
        .probs()
        .iter()
        .zip(q.probs())
        .filter(|(pv, _)| **pv > 0.0)
        .map(|(pv, qv)| pv * (pv.ln() - qv.max(FLOOR).ln()))
        .sum();
    kl.max(0.0)
}

fn oracle_entropy(p: &Dist) -> f64 {
    p.probs()
        .iter()
        .filter(|v| **v > 0.0)
        .map(|v| -v * v.ln())
        .sum::<f64>()
        .max(0.0)
}

fn oracle_smooth_norm(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let s: Vec<f64> = (0..n)
        .map(|i| (x[i.saturating_sub(1)] + x[i] + x[(i + 1).min(n - 1)]) / 3.0)
        .collect();
    let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        return vec![0.5; n];
    }
    s.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Returns the oracle length and the scores it was derived from.
fn oracle_block_len(
    prev: &Predictions,
    curr: &Predictions,
    frontier: usize,
    l_remain: usize,
    cfg: &PartitionConfig,
) -> (usize, Vec<f64>) {
    let l_window = cfg.l_max.min(l_remain);
    let window: Vec<usize> = (frontier..frontier + l_window).collect();
    let infl: Vec<f64> = window.iter().map(|k| oracle_kl(&curr[k], &prev[k])).collect();
    let ent: Vec<f64> = window.iter().map(|k| oracle_entropy(&curr[k])).collect();
    let (ni, nh) = (oracle_smooth_norm(&infl), oracle_smooth_norm(&ent));
    let scores: Vec<f64> = ni.iter().zip(&nh).map(|(i, h)| i - cfg.lambda * h).collect();
    let raw = scores.iter().position(|s| *s < 0.0).unwrap_or(l_window);
    (raw.clamp(cfg.l_min.min(l_window), l_window), scores)
}

fn random_spread(rng: &mut ChaCha8Rng, v: usize) -> Dist {
    // log-weights spanning many orders of magnitude, so tiny probabilities occur
    let scale = rng.random_range(0.5..14.0);
    Dist::from_weights((0..v).map(|_| (scale * rng.random::<f64>()).exp()).collect()).unwrap()
}

fn depga_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut out_of_bounds = 0;
    let mut cold_wrong = 0;
    let mut oracle_mismatch = 0;
    for _ in 0..10_000 {
        let l_min = rng.random_range(1..=16);
        let cfg = PartitionConfig {
            lambda: rng.random_range(0.05..4.0),
            l_min,
            l_max: l_min + rng.random_range(0..=100),
        };
        let l_remain = rng.random_range(1..=90);
        let frontier = rng.random_range(0..40);
        let v = rng.random_range(2..=8);
        let mut prev = Predictions::new();
        let mut curr = Predictions::new();
        for p in frontier..frontier + l_remain {
            prev.insert(p, random_spread(&mut rng, v));
            let moved = rng.random_bool(0.5);
            curr.insert(
                p,
                if moved {
                    random_spread(&mut rng, v)
                } else {
                    prev[&p].clone()
                },
            );
        }
        let cold = plan_next_block(None, &curr, frontier, l_remain, &cfg).unwrap().span;
        if cold != BlockSpan::new(frontier, cfg.l_min.min(l_remain)) {
            cold_wrong += 1;
        }
        let span = plan_next_block(Some(&prev), &curr, frontier, l_remain, &cfg)
            .unwrap()
            .span;
        if span.start != frontier || span.len < cfg.l_min.min(l_remain) || span.len > cfg.l_max.min(l_remain) {
            out_of_bounds += 1;
        }
        let (want, scores) = oracle_block_len(&prev, &curr, frontier, l_remain, &cfg);
        if span.len != want {
            // tolerate disagreement only where a score sits on the sign boundary
            let hi = span.len.max(want).min(scores.len() - 1);
            if !scores[..=hi].iter().any(|s| s.abs() < TOL) {
                oracle_mismatch += 1;
            }
        }
    }
    Outcome::new(
        out_of_bounds + cold_wrong + oracle_mismatch == 0,
        format!("10000 windows: {out_of_bounds} out of bounds, {cold_wrong} wrong cold starts, {oracle_mismatch} differ from the scoring oracle"),
    )
}

// ---- criterion 5 ----------------------------------------------------------

fn parallelism_sanity() -> Outcome {
    let model = HmmModel::new(vec![1.0], vec![vec![1.0]], vec![vec![0.99, 0.004, 0.003, 0.003]]).unwrap();
    let spec = StrategySpec::new(Partitioner::Fixed(8), Selector::Cap(SelectConfig::default())).with_l_gen(64);
    let run = run_decode(&model, &[1, 2, 3], &spec).unwrap();
    // hand trace: every block position has confidence 0.99 >= tau_high, so
    // Phase 1 takes the whole block in one pass
    let trace_ok = run.trace.steps.len() == 8
        && run.trace.steps.iter().enumerate().all(|(i, s)| {
            s.positions == (8 * i..8 * i + 8).collect::<Vec<_>>()
                && s.tokens.iter().all(|&t| t == 0)
                && s.confidences.iter().all(|&c| (c - 0.99).abs() < 1e-12)
        })
        && run.metrics.block_lengths == vec![8; 8]
        && run.metrics.tokens_per_step == vec![8; 8];
    Outcome::new(
        run.metrics.nfe == 8 && trace_ok,
        format!(
            "nfe {} (expected 8), trace matches hand derivation: {trace_ok}",
            run.metrics.nfe
        ),
    )
}

// ---- criterion 6 ----------------------------------------------------------

fn desk_config() -> RunConfig {
    RunConfig {
        prompt_len: 16,
        l_gen: 256,
        seeds: (0..20).collect(),
        output: None,
        model: ModelSource::Synthetic {
            states: 4,
            vocab: 16,
            seed: None,
            transition_concentration: 1.0,
            emission_concentration: 1.0,
        },
        strategies: vec![
            StrategyEntry {
                partitioner: PartitionerKind::Depga,
                selector: SelectorKind::Cap,
            },
            StrategyEntry {
                partitioner: PartitionerKind::Fixed,
                selector: SelectorKind::Vanilla,
            },
        ],
        params: Params::default(),
        grid: None,
    }
}

fn without_wall_ms(csv_text: &[u8]) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(csv_text);
    let wall = COLUMNS.iter().position(|c| *c == "wall_ms").unwrap();
    r.records()
        .map(|rec| {
            rec.unwrap()
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != wall)
                .map(|(_, f)| f.to_owned())
                .collect()
        })
        .collect()
}

fn speed_quality_trend() -> Outcome {
    let harness = Harness::new(desk_config()).unwrap();
    let rows = harness.run(None).unwrap();
    let again = harness.run(None).unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    write_csv(&rows, &[], &mut a).unwrap();
    write_csv(&again, &[], &mut b).unwrap();
    let deterministic = without_wall_ms(&a) == without_wall_ms(&b);
    let header_ok = String::from_utf8_lossy(&a).lines().next() == Some(COLUMNS.join(",").as_str());

    let by_seed = |sel: &str| -> BTreeMap<u64, &RunRow> {
        rows.iter().filter(|r| r.strategy == sel).map(|r| (r.seed, r)).collect()
    };
    let (cap, vanilla) = (by_seed("cap"), by_seed("vanilla"));
    let mut faster = 0;
    for (seed, c) in &cap {
        let v = vanilla[seed];
        if c.nfe < v.nfe {
            faster += 1;
        }
        println!(
            "    seed {seed:>2}: cap+depga nfe {:>3} ({:.3} tok/nfe, loglik {:.2}, agreement {:.3}) vs vanilla nfe {}",
            c.nfe,
            c.l_gen as f64 / c.nfe as f64,
            c.quality_loglik.unwrap_or(f64::NAN),
            c.agreement_vs_vanilla,
            v.nfe
        );
    }
    let mean_nfe = cap.values().map(|r| r.nfe as f64).sum::<f64>() / cap.len() as f64;
    let vanilla_mean = vanilla.values().map(|r| r.nfe as f64).sum::<f64>() / vanilla.len() as f64;
    Outcome::new(
        deterministic && header_ok && faster >= 19 && mean_nfe < vanilla_mean,
        format!(
            "cap+depga faster in {faster}/20 runs (need 19), mean nfe {mean_nfe:.1} vs vanilla {vanilla_mean:.1}, deterministic CSV: {deterministic}, schema: {header_ok}"
        ),
    )
}

// ---- criterion 7 ----------------------------------------------------------

fn determinism() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let mut cfg = desk_config();
    cfg.seeds = vec![0, 7, 19];
    cfg.l_gen = 96;
    cfg.strategies = [
        PartitionerKind::Depga,
        PartitionerKind::Fixed,
        PartitionerKind::Adablock,
    ]
    .into_iter()
    .flat_map(|p| {
        [SelectorKind::Vanilla, SelectorKind::Confidence, SelectorKind::Cap].map(|s| StrategyEntry {
            partitioner: p,
            selector: s,
        })
    })
    .collect();
    let run_cfg = dir.path().join("run.toml");
    fs::write(&run_cfg, cfg.to_toml()).unwrap();
    let sweep_cfg = dir.path().join("sweep.toml");
    fs::write(
        &sweep_cfg,
        format!(
            "{}\n[grid]\ngamma = [-8.0, -16.0]\nlambda = [0.6, 1.2]\n",
            cfg.to_toml()
        ),
    )
    .unwrap();

    let mut checks = Vec::new();
    for (cmd, path, jobs) in [("run", &run_cfg, ["4", "2"]), ("sweep", &sweep_cfg, ["3", "1"])] {
        let outs: Vec<Vec<u8>> = jobs
            .iter()
            .enumerate()
            .map(|(i, j)| {
                let out = dir.path().join(format!("{cmd}{i}.csv"));
                let code = depcap_cli::cli::run([
                    "depcap",
                    cmd,
                    "--config",
                    path.to_str().unwrap(),
                    "--out",
                    out.to_str().unwrap(),
                    "--jobs",
                    j,
                ]);
                assert_eq!(code, 0, "{cmd} exited with {code}");
                fs::read(out).unwrap()
            })
            .collect();
        let same = without_wall_ms(&outs[0]) == without_wall_ms(&outs[1]);
        checks.push(format!(
            "{cmd} ({} rows) identical: {same}",
            without_wall_ms(&outs[0]).len() - 1
        ));
    }
    Outcome::new(checks.iter().all(|c| c.ends_with("true")), checks.join(", "))
}

// ---- criterion 8 ----------------------------------------------------------

fn mutation_check() -> Outcome {
    let probes: [(&str, Check); 4] = [
        ("2", information_identities),
        ("3", cap_safety),
        ("4", depga_bounds),
        ("5", parallelism_sanity),
    ];
    let mut all_caught = true;
    let mut notes = Vec::new();
    for (name, m) in [
        ("KL floor", Mutant::KlFloor),
        ("lambda sign", Mutant::LambdaSign),
        ("conflict direction", Mutant::ConflictDirection),
        ("KL offset", Mutant::KlOffset),
    ] {
        mutants::clear();
        mutants::enable(m);
        let caught: Vec<&str> = probes
            .iter()
            .filter(|(_, check)| !std::panic::catch_unwind(check).map(|o| o.pass).unwrap_or(false))
            .map(|(id, _)| *id)
            .collect();
        mutants::clear();
        all_caught &= !caught.is_empty();
        notes.push(format!("{name} -> fails {caught:?}"));
    }
    Outcome::new(all_caught, notes.join("; "))
}

fn main() -> ExitCode {
    let criteria: [(&str, &str, Option<u64>, Check); 8] = [
        ("1", "vanilla NFE identity", Some(10), vanilla_nfe_identity),
        ("2", "information identities", Some(60), information_identities),
        ("3", "CAP safety invariant", Some(10), cap_safety),
        ("4", "DepGA bounds", Some(5), depga_bounds),
        ("5", "parallelism sanity", Some(1), parallelism_sanity),
        ("6", "speed-quality trend", Some(120), speed_quality_trend),
        ("7", "determinism", None, determinism),
        ("8", "mutation check", None, mutation_check),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let out = timed(budget, check);
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!("criterion {id} [{name}]: {verdict}: {}", out.detail);
        failed += usize::from(!out.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
