//! Acceptance gate. Each criterion runs in isolation and prints one
//! PASS/FAIL line; the process exits non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use dbforge_core::characterize::prune::{contains_run, prune_sequences, Piece};
use dbforge_core::eval::{copy_repo, load_declaration, EvalReport};
use dbforge_core::index::SymbolIndex;
use dbforge_core::orchestration::{MemoryPool, TrajectoryRecord};
use dbforge_core::planning::{
    best_score, score_plans, CodingPlan, PlanBlock, PlanCounts, PlannedUnit, ScoreWeights,
};
use dbforge_core::profile::DbProfile;
use dbforge_core::synthesis::{adaptation_probability, ModeState, SynthesisMode};
use dbforge_core::util::tree_digest;
use dbforge_core::validation::{
    run_stages, Diagnostic, ErrorClass, Stage, StageOutcome, StageRunner, Verdict,
};
use dbforge_mockllm::{MockServer, Script};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn profile() -> DbProfile {
    DbProfile::load(&root().join("profiles/toydb.toml")).unwrap()
}

fn repo_copy(into: &Path) -> PathBuf {
    let repo = into.join("repo");
    std::fs::create_dir_all(&repo).unwrap();
    copy_repo(&root().join("fixtures/toydb"), &repo).unwrap();
    repo
}

fn dbforge(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dbforge"));
    cmd.args(["--profiles-dir", root().join("profiles").to_str().unwrap()])
        .args(args);
    // Replay must never need the network: point any accidental call at a dead port.
    cmd.env("LLM_BASE_URL", "http://127.0.0.1:9/v1")
        .env_remove("LLM_API_KEY");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn within(started: Instant, limit: Duration, what: &str) {
    let took = started.elapsed();
    assert!(took <= limit, "{what} took {took:?}, limit {limit:?}");
}

/// Independent evaluator for the plan score: inverted min-max per
/// dimension, then the weighted sum.
fn score_oracle(counts: &[(usize, usize, usize)], w: ScoreWeights) -> Vec<f64> {
    let dim = |k: usize| -> Vec<f64> {
        let v: Vec<f64> = counts.iter().map(|c| [c.0, c.1, c.2][k] as f64).collect();
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        v.iter()
            .map(|x| if hi == lo { 1.0 } else { (hi - x) / (hi - lo) })
            .collect()
    };
    let (r, l, u) = (dim(0), dim(1), dim(2));
    (0..counts.len())
        .map(|i| w.references * r[i] + w.locations * l[i] + w.size * u[i])
        .collect()
}

fn plan_with(bad_refs: usize, bad_locations: usize, units: usize) -> CodingPlan {
    CodingPlan {
        function_name: "f".into(),
        units: (0..units)
            .map(|i| PlannedUnit {
                unit_name: format!("unit_{i}"),
                file_path: if i < bad_locations {
                    format!("../outside_{i}.c")
                } else {
                    format!("new_{i}.c")
                },
                create_file: true,
                blocks: vec![PlanBlock {
                    description: "step".into(),
                    candidate_refs: if i == 0 {
                        (0..bad_refs).map(|k| format!("nowhere_{k}")).collect()
                    } else {
                        vec![]
                    },
                }],
            })
            .collect(),
        provenance: Default::default(),
    }
}

fn random_batch(rng: &mut ChaCha8Rng, degenerate: bool) -> Vec<(usize, usize, usize)> {
    let n = rng.random_range(1..=10);
    let one = |rng: &mut ChaCha8Rng| {
        let units = rng.random_range(1..=8);
        (rng.random_range(0..=6), rng.random_range(0..=units), units)
    };
    if degenerate {
        let c = one(rng);
        vec![c; n]
    } else {
        (0..n).map(|_| one(rng)).collect()
    }
}

fn criterion_plan_scores() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dir = tempfile::tempdir().unwrap();
    let index = SymbolIndex::empty(dir.path());
    let profile = profile();
    let w = ScoreWeights::default();
    for b in 0..200 {
        let degenerate = b % 10 == 0;
        let batch = random_batch(&mut rng, degenerate);
        let plans: Vec<_> = batch.iter().map(|&(r, l, u)| plan_with(r, l, u)).collect();
        let scores = score_plans(&plans, &index, dir.path(), &profile, w).unwrap();
        let want = score_oracle(&batch, w);
        for (i, sc) in scores.iter().enumerate() {
            let (r, l, u) = batch[i];
            assert_eq!(
                sc.counts,
                PlanCounts {
                    bad_refs: r,
                    bad_locations: l,
                    units: u
                },
                "batch {b} plan {i}"
            );
            assert!(
                (sc.total - want[i]).abs() <= 1e-9,
                "batch {b} plan {i}: {} vs {}",
                sc.total,
                want[i]
            );
            if degenerate {
                assert!(
                    (sc.total - 1.0).abs() <= 1e-9,
                    "degenerate batch {b} plan {i} scored {}",
                    sc.total
                );
            }
        }
    }
    within(started, Duration::from_secs(5), "200 scored batches");
}

fn criterion_argmax_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let dir = tempfile::tempdir().unwrap();
    let index = SymbolIndex::empty(dir.path());
    let profile = profile();
    let w = ScoreWeights::default();
    for b in 0..100 {
        let batch = random_batch(&mut rng, false);
        let plans: Vec<_> = batch.iter().map(|&(r, l, u)| plan_with(r, l, u)).collect();
        let base = best_score(&score_plans(&plans, &index, dir.path(), &profile, w).unwrap());
        for _ in 0..20 {
            let factor = 10f64.powf(rng.random_range(-3.0..3.0));
            let scaled = best_score(
                &score_plans(&plans, &index, dir.path(), &profile, w.scaled(factor)).unwrap(),
            );
            assert_eq!(
                base, scaled,
                "batch {b} changed argmax under factor {factor}"
            );
        }
    }
}

fn criterion_decay() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let n: u32 = rng.random_range(0..60);
        let decay: f64 = rng.random_range(0.01..0.99);
        let want = (0..n).fold(1.0f64, |p, _| p * decay);
        let got = adaptation_probability(n, decay);
        assert!(
            (got - want).abs() <= 1e-12 * want,
            "n={n} decay={decay}: {got} vs {want}"
        );
    }

    let mut m = ModeState::new(0.5, 0.05, 99).unwrap();
    for n in 0..5 {
        let d = m.decide();
        assert!(!d.absorbed, "absorbed at n={n}");
        m.record_failure();
    }
    for _ in 0..10 {
        let d = m.decide();
        assert!(d.absorbed && d.failures == 5 && d.mode == SynthesisMode::FromScratch);
    }

    for seed in 0..50u64 {
        let pattern: Vec<bool> = (0..12).map(|i| (seed >> (i % 6)) & 1 == 1).collect();
        let run = || {
            let mut m = ModeState::new(0.5, 0.05, seed).unwrap();
            pattern
                .iter()
                .map(|&fail| {
                    let d = m.decide();
                    if fail {
                        m.record_failure();
                    }
                    d
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run(), "seed {seed} replayed differently");
    }
}

fn draw(rng: &mut ChaCha8Rng, vocab: &[&str], len: usize) -> Vec<String> {
    (0..len)
        .map(|_| vocab[rng.random_range(0..vocab.len())].to_string())
        .collect()
}

/// Related pairs share a skeleton with an insertion in one and a deletion
/// in the other; disjoint pairs draw from separate vocabularies.
fn token_pair(rng: &mut ChaCha8Rng, disjoint: bool) -> (Vec<String>, Vec<String>) {
    const LOW: [&str; 8] = ["int", "x", "(", ")", "{", "}", ";", "return"];
    const HIGH: [&str; 6] = ["Y", "Z", "+", "=", "if", "while"];
    if disjoint {
        let (la, lb) = (rng.random_range(1..12), rng.random_range(1..12));
        return (draw(rng, &LOW, la), draw(rng, &HIGH, lb));
    }
    let skeleton = draw(rng, &LOW, 10);
    let mut a = skeleton.clone();
    let mut b = skeleton;
    let insert = draw(rng, &HIGH, 3);
    let at = rng.random_range(0..=a.len());
    a.splice(at..at, insert);
    let cut = rng.random_range(0..b.len());
    b.remove(cut);
    b.extend(draw(rng, &HIGH, 2));
    (a, b)
}

fn criterion_prune() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for i in 0..200 {
        let disjoint = i % 2 == 1;
        let (a, b) = token_pair(&mut rng, disjoint);
        let ab = prune_sequences(&a, &b);
        let ba = prune_sequences(&b, &a);
        assert_eq!(
            ab.as_ref().map(|p| &p.template),
            ba.as_ref().map(|p| &p.template),
            "pair {i} not symmetric"
        );

        let same = prune_sequences(&a, &a).expect("a sequence shares everything with itself");
        assert_eq!(
            same.template.pieces,
            vec![Piece::Fixed(a.clone())],
            "pair {i} not idempotent"
        );

        if disjoint {
            assert!(ab.is_none(), "disjoint pair {i} produced a template");
        } else if let Some(p) = ab {
            for run in p.template.fixed_runs() {
                assert!(
                    contains_run(&a, run) && contains_run(&b, run),
                    "pair {i}: run {run:?} not in both"
                );
            }
        }
    }
}

fn brute_stats(v: &[usize]) -> (usize, usize, usize) {
    let mut v = v.to_vec();
    v.sort();
    (v[0], v[(v.len() - 1) / 2], v[v.len() - 1])
}

fn criterion_memory_pool() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for seq in 0..1000 {
        let cap = rng.random_range(3..=10);
        let mut pool = MemoryPool::with_cap(cap).unwrap();
        for c in 0..5 {
            let category = format!("cat{c}");
            for k in 0..rng.random_range(1..=25) {
                let count = rng.random_range(1..=30);
                let before: Vec<usize> = pool
                    .entries
                    .get(&category)
                    .map(|v| v.iter().map(|r| r.total_count).collect())
                    .unwrap_or_default();
                let expect = before.is_empty() || {
                    let (lo, med, hi) = brute_stats(&before);
                    let mut with = before.clone();
                    with.push(count);
                    count < lo || count > hi || brute_stats(&with).1 != med
                };
                let accepted = pool.insert_trajectory(TrajectoryRecord::synthetic(
                    &format!("f{k}"),
                    &category,
                    count,
                ));
                assert_eq!(accepted, expect, "sequence {seq} {category} insert {k}");

                let stored: Vec<usize> = pool.entries[&category]
                    .iter()
                    .map(|r| r.total_count)
                    .collect();
                assert!(stored.len() <= cap, "sequence {seq} over cap");
                let (lo, med, hi) = brute_stats(&stored);
                let st = pool.stats(&category).unwrap();
                assert_eq!(
                    (st.min, st.median, st.max),
                    (lo, med, hi),
                    "sequence {seq} {category}"
                );
                let got: Vec<usize> = pool
                    .retrieve_reference_trajectories(&category)
                    .iter()
                    .map(|r| r.total_count)
                    .collect();
                let mut want = vec![lo, med, hi];
                want.dedup();
                assert_eq!(got, want, "sequence {seq} {category} retrieval");
            }
        }
    }
}

struct Faulty {
    faults: [bool; 3],
    notes: usize,
    ran: Vec<Stage>,
}

impl StageRunner for Faulty {
    fn run_stage(&mut self, stage: Stage) -> StageOutcome {
        self.ran.push(stage);
        let i = self.ran.len() - 1;
        if self.faults[i] {
            let diags = (0..self.notes)
                .map(|k| Diagnostic::note(format!("n{k}")))
                .collect();
            StageOutcome::fail(stage, diags)
        } else {
            StageOutcome::pass(
                stage,
                (0..self.notes)
                    .map(|k| Diagnostic::note(format!("n{k}")))
                    .collect(),
            )
        }
    }
}

fn criterion_validation_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for p in 0..500 {
        let faults = [
            rng.random_bool(0.3),
            rng.random_bool(0.3),
            rng.random_bool(0.3),
        ];
        let mut runner = Faulty {
            faults,
            notes: rng.random_range(0..3),
            ran: vec![],
        };
        let report = run_stages(&mut runner);
        let stop = faults.iter().position(|f| *f).map_or(3, |i| i + 1);
        assert_eq!(
            runner.ran,
            Stage::ALL[..stop].to_vec(),
            "pattern {p}: {faults:?}"
        );
        assert!(report.is_well_formed(), "pattern {p} malformed");
        assert_eq!(
            report.verdict == Verdict::Pass,
            stop == 3 && !faults[2],
            "pattern {p} verdict"
        );
        if let Some(failed) = report.outcomes.iter().find(|o| !o.passed) {
            assert!(
                failed.diagnostics.iter().any(|d| d.error_class.is_some()),
                "pattern {p}: unclassified failure"
            );
            assert!(failed.error_classes().contains(&ErrorClass::Other));
        }
    }
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(
        &std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display())),
    )
    .unwrap()
}

const RUN_ORDER: [&str; 5] = [
    "toy_even",
    "toy_quarter",
    "toy_gcd",
    "toy_cube",
    "toy_weekday",
];

fn eval_suite(suite: &str, transcript: &str) -> EvalReport {
    let work = tempfile::tempdir().unwrap();
    let repo = repo_copy(work.path());
    let out = work.path().join("out");
    let o = dbforge(
        &[
            "--repo",
            s(&repo),
            "--out",
            s(&out),
            "--memory-pool",
            s(&out.join("memory_pool.json")),
            "--transcript",
            s(&root().join(transcript)),
            "eval",
            s(&root().join(suite)),
        ],
        &[],
    );
    assert!(
        o.status.success(),
        "eval {suite} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    serde_json::from_value(read_json(&out.join("eval_report.json"))).unwrap()
}

fn check_tally(report: &EvalReport, expected: &[(&str, bool, bool)]) {
    let got: Vec<(String, bool, bool)> = report
        .rows
        .iter()
        .map(|r| (r.name.clone(), r.verdict_exe, r.verdict_res))
        .collect();
    let want: Vec<(String, bool, bool)> = expected
        .iter()
        .map(|&(n, e, r)| (n.to_string(), e, r))
        .collect();
    assert_eq!(got, want);
    let n = expected.len() as f64;
    let exe = expected.iter().filter(|r| r.1).count() as f64 / n;
    let res = expected.iter().filter(|r| r.2).count() as f64 / n;
    assert_eq!((report.acc_exe, report.acc_res), (exe, res));
}

fn criterion_toydb_end_to_end() {
    let started = Instant::now();
    let work = tempfile::tempdir().unwrap();
    let repo = repo_copy(work.path());
    let pool = work.path().join("out/memory_pool.json");
    let transcript = root().join("fixtures/transcripts/run/transcript.jsonl");
    let mut passed = vec![];
    for name in RUN_ORDER {
        let spec = root().join(format!("fixtures/specs/{name}.toml"));
        let out = work.path().join("out").join(name);
        let o = dbforge(
            &[
                "--repo",
                s(&repo),
                "--out",
                s(&out),
                "--memory-pool",
                s(&pool),
                "--transcript",
                s(&transcript),
                "run",
                s(&spec),
            ],
            &[],
        );
        match o.status.code() {
            Some(0) => passed.push(name),
            Some(1) => {}
            other => panic!(
                "{name}: unexpected exit {other:?}: {}",
                String::from_utf8_lossy(&o.stderr)
            ),
        }
    }
    assert!(
        passed.len() >= 4,
        "only {} of 5 passed: {passed:?}",
        passed.len()
    );

    // Rebuild the final tree by hand and check each passing function's
    // documented examples straight against the binary.
    let build = Command::new("sh")
        .arg("build.sh")
        .current_dir(&repo)
        .output()
        .unwrap();
    assert!(
        build.status.success(),
        "final tree does not build: {}",
        String::from_utf8_lossy(&build.stderr)
    );
    for name in &passed {
        let decl = load_declaration(&root().join(format!("fixtures/specs/{name}.toml"))).unwrap();
        for (sql, expected) in &decl.sql_examples {
            let o = Command::new(repo.join("build/toydb"))
                .arg(sql)
                .current_dir(&repo)
                .output()
                .unwrap();
            assert_eq!(
                String::from_utf8_lossy(&o.stdout).trim(),
                expected.trim(),
                "{name}: {sql}"
            );
        }
    }

    let eval5 = eval_suite(
        "fixtures/suites/eval5.toml",
        "fixtures/transcripts/eval5/transcript.jsonl",
    );
    check_tally(
        &eval5,
        &[
            ("toy_even", true, true),
            ("toy_quarter", true, true),
            ("toy_gcd", true, true),
            ("toy_cube", true, true),
            ("toy_weekday", true, false),
        ],
    );
    let eval4 = eval_suite(
        "fixtures/suites/eval4.toml",
        "fixtures/transcripts/eval4/transcript.jsonl",
    );
    check_tally(
        &eval4,
        &[
            ("toy_even", true, true),
            ("toy_quarter", true, true),
            ("toy_weekday", true, false),
            ("toy_sqrt", false, false),
        ],
    );
    within(started, Duration::from_secs(60), "toydb end to end");
}

const SWITCH_TEXT: &str = "mode switch fill_in_blank -> from_scratch";

fn criterion_adversarial() {
    let started = Instant::now();
    let work = tempfile::tempdir().unwrap();
    let repo = repo_copy(work.path());
    let before = tree_digest(&repo).unwrap();
    let out = work.path().join("out");
    let pool_path = out.join("memory_pool.json");
    let o = dbforge(
        &[
            "--profile",
            "toydb-adversarial",
            "--max-steps",
            "30",
            "--repo",
            s(&repo),
            "--out",
            s(&out),
            "--memory-pool",
            s(&pool_path),
            "--transcript",
            s(&root().join("fixtures/transcripts/adversarial/transcript.jsonl")),
            "run",
            s(&root().join("fixtures/specs/toy_sign.json")),
        ],
        &[],
    );
    assert_eq!(
        o.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(
        String::from_utf8_lossy(&o.stderr).contains(SWITCH_TEXT),
        "switch not logged"
    );

    let record: TrajectoryRecord =
        serde_json::from_value(read_json(&out.join("trajectory.json"))).unwrap();
    assert_eq!(record.verdict, Verdict::Fail);
    assert!(record.is_consistent());
    let routed = record
        .steps
        .iter()
        .take_while(|st| st.tool != "stop")
        .count();
    assert!(routed <= 30, "{routed} routed steps");
    assert!(record.total_count <= 31 && record.steps.last().unwrap().tool == "stop");
    assert!(record
        .steps
        .iter()
        .any(|st| st.summary_line.contains(SWITCH_TEXT)));
    // Build products are not edits; only the sources must be restored.
    std::fs::remove_dir_all(repo.join("build")).ok();
    assert_eq!(
        tree_digest(&repo).unwrap(),
        before,
        "failed edits were left in place"
    );

    // The failed trajectory was persisted, and the pool gates it on its statistics.
    let pool = MemoryPool::load(&pool_path).unwrap();
    let stored = &pool.entries[&record.category];
    assert_eq!(stored.len(), 1);
    assert_eq!(stored[0], record);
    let mut again = pool.clone();
    assert!(
        !again.insert_trajectory(record.clone()),
        "an identical count should not move any statistic"
    );
    let shorter = TrajectoryRecord::synthetic("shorter", &record.category, record.total_count - 1);
    assert!(
        again.insert_trajectory(shorter),
        "a new minimum must be accepted"
    );
    within(started, Duration::from_secs(30), "adversarial run");
}

const ROUND_TRIP_FILES: [&str; 4] = [
    "plans.json",
    "synthesis_attempt.json",
    "validation_report.json",
    "trajectory.json",
];

fn criterion_record_replay() {
    let script = Script::load(&root().join("fixtures/mock/toydb.toml")).unwrap();
    let server = MockServer::start(script, "127.0.0.1:0").unwrap();
    let base_url = server.base_url();
    let work = tempfile::tempdir().unwrap();
    let transcript = work.path().join("transcript.jsonl");
    let spec = root().join("fixtures/specs/toy_gcd.toml");

    let run = |tag: &str, mode: &str, env: &[(&str, &str)]| -> PathBuf {
        let dir = work.path().join(tag);
        let repo = repo_copy(&dir);
        let out = dir.join("out");
        let o = dbforge(
            &[
                "--llm-mode",
                mode,
                "--repo",
                s(&repo),
                "--out",
                s(&out),
                "--memory-pool",
                s(&dir.join("pool.json")),
                "--transcript",
                s(&transcript),
                "run",
                s(&spec),
            ],
            env,
        );
        assert!(
            o.status.code().is_some_and(|c| c <= 1),
            "{tag}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        out
    };
    let recorded = run(
        "record",
        "record",
        &[("LLM_BASE_URL", &base_url), ("LLM_API_KEY", "mock")],
    );
    let served = server.requests();
    assert!(served > 0, "record mode never reached the endpoint");
    let replayed = run("replay", "replay", &[]);
    assert_eq!(server.requests(), served, "replay reached the endpoint");

    for f in ROUND_TRIP_FILES {
        let a = std::fs::read(recorded.join(f)).unwrap_or_else(|e| panic!("recorded {f}: {e}"));
        let b = std::fs::read(replayed.join(f)).unwrap_or_else(|e| panic!("replayed {f}: {e}"));
        assert!(a == b, "{f} differs between record and replay");
    }
}

fn main() {
    let criteria: [(&str, fn()); 9] = [
        (
            "1 plan scores match an independent evaluator",
            criterion_plan_scores,
        ),
        (
            "2 best plan is invariant to weight rescaling",
            criterion_argmax_invariance,
        ),
        (
            "3 mode adaptation decay, absorption and seeded replay",
            criterion_decay,
        ),
        ("4 sequence pruning properties", criterion_prune),
        (
            "5 memory pool against brute-force statistics",
            criterion_memory_pool,
        ),
        (
            "6 validation stage ordering under fault injection",
            criterion_validation_order,
        ),
        (
            "7 toydb end to end with hand-tallied accuracy",
            criterion_toydb_end_to_end,
        ),
        (
            "8 adversarial session terminates and is gated",
            criterion_adversarial,
        ),
        (
            "9 record and replay produce identical artifacts",
            criterion_record_replay,
        ),
    ];
    // Keep panic messages for the failure lines only.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = BTreeSet::new();
    for (name, check) in criteria {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let took = started.elapsed().as_secs_f64();
        match result {
            Ok(()) => println!("PASS criterion {name} ({took:.2} s)"),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|m| m.to_string()))
                    .unwrap_or_default();
                println!("FAIL criterion {name} ({took:.2} s): {msg}");
                failed.insert(name);
            }
        }
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
