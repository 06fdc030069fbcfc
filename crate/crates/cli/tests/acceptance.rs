//! Acceptance suite. Runs each criterion in turn, prints one
//! `criterion N: PASS|FAIL ...` line apiece and exits nonzero if any failed.
//!
//! Positional arguments filter by criterion number (`cargo test --test
//! acceptance -- 4 9`); flags passed by the test runner are ignored.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command as Proc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use heat_core::decpomdp::{
    brute_force, dtde_train, DecPomdp, DtdeConfig, JointPolicy, LocalPolicy, DEFAULT_SEARCH_CAP,
};
use heat_core::env::{compile_mdp, generate_family, FamilyManifest, GaitChainParams, JointMask};
use heat_core::policy::{finite_diff_check, init_policy, Architecture, LossConfig, PolicySizes};
use heat_core::pomdp::{
    compose, decide_threshold, embed_pomdp, exact_value, exact_value_observed_start,
    revealing_observations, ThresholdQuery,
};
use heat_core::stats::{median, spearman};
use heat_core::train::{
    evaluate_policy, optimal_episode_value, run_benchmark, run_episode, staleness_probe,
    staleness_series, train_run, BenchConfig, Learner, Optimizer, RunConfig, Scenario,
};
use heat_oracle::{mdp_expectimax, pomdp_policy_enumeration, random_composite, RandomSpec};

type Outcome = std::result::Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

const CRITERION1_SEEDS: std::ops::Range<u64> = 0..24;

/// Exact belief search against enumeration of every deterministic
/// observation-history policy.
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut solved = 0;
    for seed in CRITERION1_SEEDS {
        let p = random_composite(seed, RandomSpec::default());
        let plain = p.to_standalone();
        for h in 1..=3 {
            let v = exact_value(&p, p.initial_belief(), h).map_err(|e| e.to_string())?;
            let oracle = pomdp_policy_enumeration(&plain, h);
            worst = worst.max((v - oracle).abs());
            solved += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-9 && secs < 60.0,
        format!("{solved} (instance, H) pairs, max |diff| {worst:.2e}, {secs:.2}s"),
    )
}

/// With the morphology revealed every step the value is the prior-weighted
/// sum of per-morphology optima.
fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let families = 8;
    for f in 0..families {
        let kmax = rng.gen_range(1..=3);
        let params = GaitChainParams::new(kmax);
        let masks: Vec<JointMask> = (0..2)
            .map(|_| JointMask::from_bits(rng.gen_range(1..(1u64 << kmax)), kmax).unwrap())
            .collect();
        let mdps: Vec<_> = masks
            .iter()
            .map(|m| compile_mdp(m, &params).unwrap())
            .collect();
        let w: f64 = rng.gen_range(0.05..0.95);
        let prior = vec![w, 1.0 - w];
        let h = 1 + f % 3;
        let p = compose(mdps.clone(), prior.clone(), revealing_observations(&mdps))
            .map_err(|e| e.to_string())?;
        let v = exact_value_observed_start(&p, p.initial_belief(), h).map_err(|e| e.to_string())?;
        let oracle: f64 = mdps
            .iter()
            .zip(&prior)
            .map(|(m, w)| w * mdp_expectimax(m, m.initial_state(), h))
            .sum();
        worst = worst.max((v - oracle).abs());
    }
    check(
        worst <= 1e-9,
        format!("{families} two-morphology families, max |diff| {worst:.2e}"),
    )
}

fn criterion_3() -> Outcome {
    let mut decisions = 0;
    for seed in CRITERION1_SEEDS {
        let p = random_composite(seed, RandomSpec::default());
        let plain = p.to_standalone();
        for h in 1..=3 {
            let v = pomdp_policy_enumeration(&plain, h);
            for (k, want) in [(v - 0.1, true), (v + 0.1, false)] {
                let q = ThresholdQuery::new(h, k).map_err(|e| e.to_string())?;
                let (got, _) = decide_threshold(&p, q).map_err(|e| e.to_string())?;
                if got != want {
                    return Err(format!("seed {seed} H={h} K={k}: decided {got}"));
                }
                decisions += 1;
            }
        }
    }
    Ok(format!("{decisions} threshold decisions correct"))
}

fn criterion_4() -> Outcome {
    let family = generate_family(5, 12, 5, 7).unwrap();
    let mdps = family.compile_train().unwrap();
    let sizes = PolicySizes::for_kmax(5);
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for arch in [Architecture::Recurrent, Architecture::Modular] {
        for seed in 0..10u64 {
            let policy = init_policy(arch, sizes, seed).unwrap();
            let mdp = &mdps[seed as usize % mdps.len()];
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let traj = run_episode(mdp, &policy, 0, 10, &mut rng).unwrap();
            let loss = LossConfig {
                entropy_coef: if seed % 2 == 0 {
                    0.0
                } else {
                    LossConfig::ENTROPY_BONUS
                },
                ..LossConfig::default()
            };
            let err = finite_diff_check(&policy, &traj, &loss, 1e-5).map_err(|e| e.to_string())?;
            worst = worst.max(err);
            checks += 1;
        }
    }
    check(
        worst <= 1e-4,
        format!("{checks} checks (recurrent + modular, T=10), max rel err {worst:.2e}"),
    )
}

fn criterion_5() -> Outcome {
    let mdp = compile_mdp(
        &JointMask::new(vec![1, 4], 5).unwrap(),
        &GaitChainParams::new(5),
    )
    .unwrap();
    let base = init_policy(Architecture::Recurrent, PolicySizes::for_kmax(5), 0).unwrap();
    let (stored, _) = heat_core::train::rollout(
        &mdp,
        &Learner::new(base.clone()),
        100,
        2000,
        &mut ChaCha8Rng::seed_from_u64(5),
    )
    .unwrap();

    let identity = staleness_probe(&base, &base, &stored).map_err(|e| e.to_string())?;
    if identity.logprob_drift != 0.0 || identity.hidden_drift != 0.0 {
        return Err(format!("identity update drifted: {identity:?}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut min_drift = f64::INFINITY;
    for _ in 0..20 {
        let scale = 10f64.powf(rng.gen_range(-6.0..-1.0));
        let theta: Vec<f64> = base
            .theta()
            .iter()
            .map(|t| t + scale * rng.gen_range(-1.0..1.0))
            .collect();
        let moved = base.with_theta(theta).unwrap();
        let r = staleness_probe(&base, &moved, &stored).map_err(|e| e.to_string())?;
        min_drift = min_drift.min(r.logprob_drift);
    }
    if min_drift <= 0.0 {
        return Err("a nonzero perturbation left stored log-probabilities unchanged".into());
    }

    let mut rhos = Vec::new();
    for seed in 0..5u64 {
        let mut learner = Learner::with_optimizer(
            init_policy(Architecture::Recurrent, PolicySizes::for_kmax(5), seed).unwrap(),
            Optimizer::Adam,
        );
        let cfg = RunConfig::new(Scenario::SingleMem, seed);
        let reports =
            staleness_series(&mut learner, &mdp, 100, &cfg, 5).map_err(|e| e.to_string())?;
        let delta: Vec<f64> = reports.iter().map(|r| r.param_delta).collect();
        let drift: Vec<f64> = reports.iter().map(|r| r.logprob_drift).collect();
        rhos.push(spearman(&delta, &drift));
    }
    let med = median(&rhos);
    check(
        med >= 0.8,
        format!("identity drift 0, min perturbed drift {min_drift:.2e}, Spearman per seed {rhos:.2?}, median {med:.3}"),
    )
}

fn bench_family() -> FamilyManifest {
    generate_family(5, 12, 5, 7).unwrap()
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = BenchConfig {
        scenarios: Vec::new(),
        cycles: 11,
        ..BenchConfig::new(6)
    };
    // throwaway pass so the timed one starts from a warm cache and clock
    run_benchmark(
        &bench_family(),
        &BenchConfig {
            scaling: vec![2],
            ..cfg.clone()
        },
        dir.path(),
    )
    .map_err(|e| e.to_string())?;
    let (_, summary) =
        run_benchmark(&bench_family(), &cfg, dir.path()).map_err(|e| e.to_string())?;
    let r2 = summary.scaling_r_squared.unwrap_or(f64::NAN);
    let secs = start.elapsed().as_secs_f64();
    let points: Vec<String> = summary
        .scaling_points
        .iter()
        .map(|(n, s)| format!("n={n}:{s:.3}s"))
        .collect();
    check(
        r2 >= 0.95 && secs < 600.0,
        format!(
            "{} R^2 {r2:.4}, slope {:.4}s per morphology, {secs:.1}s",
            points.join(" "),
            summary.scaling_slope.unwrap_or(f64::NAN)
        ),
    )
}

/// Timing noise only ever adds time, so each scenario's cost is the fastest
/// of several interleaved repetitions.
fn criterion_7() -> Outcome {
    const REPS: usize = 9;
    let dir = tempfile::tempdir().unwrap();
    let cfg = BenchConfig {
        scenarios: vec![Scenario::SingleNomem, Scenario::SingleMem],
        cycles: 11,
        scaling: Vec::new(),
        ..BenchConfig::new(7)
    };
    run_benchmark(
        &bench_family(),
        &BenchConfig {
            cycles: 3,
            ..cfg.clone()
        },
        dir.path(),
    )
    .map_err(|e| e.to_string())?;
    let (mut nomem, mut mem) = (f64::INFINITY, f64::INFINITY);
    let mut per_rep = Vec::new();
    for _ in 0..REPS {
        let (runs, summary) =
            run_benchmark(&bench_family(), &cfg, dir.path()).map_err(|e| e.to_string())?;
        for run in &runs {
            match run.label.as_str() {
                "single_nomem" => nomem = nomem.min(run.ns_per_step()),
                "single_mem" => mem = mem.min(run.ns_per_step()),
                _ => {}
            }
        }
        per_rep.push(summary.memory_ratio.unwrap_or(f64::NAN));
    }
    let ratio = mem / nomem;
    check(
        ratio >= 1.2,
        format!("single_mem / single_nomem time per step = {ratio:.3} (best of {REPS}; per repetition {per_rep:.2?})"),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let base = bench_family();
    let mask = base
        .train_masks
        .iter()
        .find(|m| m.len() == 2)
        .cloned()
        .ok_or("family has no two-slot mask")?;
    let manifest = FamilyManifest {
        train_masks: vec![mask.clone()],
        eval_masks: Vec::new(),
        ..base
    };
    let mdp = compile_mdp(&mask, &manifest.params).unwrap();
    let best = optimal_episode_value(&mdp, manifest.params.episode_len);
    let mut fractions = Vec::new();
    for seed in 0..3u64 {
        let out = train_run(&manifest, &RunConfig::new(Scenario::SingleMem, seed))
            .map_err(|e| e.to_string())?;
        let rows = evaluate_policy(
            out.learner.policy(),
            std::slice::from_ref(&mdp),
            manifest.params.episode_len,
            2000,
            100 + seed,
        )
        .map_err(|e| e.to_string())?;
        fractions.push(rows[0].mean_return / best);
    }
    let med = median(&fractions);
    let secs = start.elapsed().as_secs_f64();
    check(
        med >= 0.8 && secs < 300.0,
        format!("mask {:?}, DP optimum {best:.4}, fraction per seed {fractions:.3?}, median {med:.3}, {secs:.1}s", mask.present()),
    )
}

fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.01).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn random_single_agent(seed: u64) -> DecPomdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ns, na, no) = (
        rng.gen_range(1..=3),
        rng.gen_range(1..=2),
        rng.gen_range(1..=2),
    );
    DecPomdp {
        gamma: rng.gen_range(0.5..=1.0),
        initial: random_distribution(&mut rng, ns),
        actions: vec![na],
        transition: (0..ns)
            .map(|_| (0..na).map(|_| random_distribution(&mut rng, ns)).collect())
            .collect(),
        reward: (0..ns)
            .map(|_| (0..na).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect(),
        obs_models: vec![(0..ns)
            .map(|_| (0..na).map(|_| random_distribution(&mut rng, no)).collect())
            .collect()],
        initial_obs_models: Some(vec![(0..ns)
            .map(|_| random_distribution(&mut rng, no))
            .collect()]),
    }
}

fn criterion_9() -> Outcome {
    let d = DecPomdp::meet_signal();
    let res = brute_force(&d, 1, DEFAULT_SEARCH_CAP).map_err(|e| e.to_string())?;
    let follow = JointPolicy {
        locals: (0..2)
            .map(|i| LocalPolicy::from_fn(&d, i, 1, |h| *h.last().unwrap()))
            .collect(),
    };
    let has_follow = res.maximizers.contains(&follow);
    if (res.value - 0.64).abs() > 1e-9 || !has_follow {
        return Err(format!(
            "MeetSignal H=1 value {} follow-among-maximizers {has_follow}",
            res.value
        ));
    }
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for seed in 0..30 {
        let d = random_single_agent(seed);
        let single = d.single_agent_pomdp().map_err(|e| e.to_string())?;
        let p = embed_pomdp(&single).map_err(|e| e.to_string())?;
        for h in 1..=3 {
            let bf = brute_force(&d, h, DEFAULT_SEARCH_CAP)
                .map_err(|e| e.to_string())?
                .value;
            let v =
                exact_value_observed_start(&p, p.initial_belief(), h).map_err(|e| e.to_string())?;
            worst = worst.max((bf - v).abs());
            n += 1;
        }
    }
    check(
        worst <= 1e-9,
        format!("MeetSignal V*={:.12} with follow-observation optimal; {n} single-agent cases max |diff| {worst:.2e}", res.value),
    )
}

fn criterion_10() -> Outcome {
    let d = DecPomdp::meet_signal();
    let mut finals = Vec::new();
    for seed in 0..5u64 {
        let out = dtde_train(&d, &DtdeConfig::new(seed)).map_err(|e| e.to_string())?;
        if out.final_value > 0.64 + 3.0 * out.final_sigma {
            return Err(format!(
                "seed {seed}: {} exceeds 0.64 + 3 sigma ({})",
                out.final_value, out.final_sigma
            ));
        }
        finals.push(out.final_value);
    }
    let med = median(&finals);
    check(
        med >= 0.55,
        format!("final values {finals:.4?}, median {med:.4}"),
    )
}

fn heat(dir: &Path, args: &[&str]) -> std::result::Result<String, String> {
    let out = Proc::new(env!("CARGO_BIN_EXE_heat"))
        .args(args)
        .current_dir(dir)
        .env_remove("HEAT_LOG")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "heat {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Bench CSVs with the two timing columns removed.
fn strip_timing(csv: &str) -> String {
    csv.lines()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            [&f[..5], &f[7..]].concat().join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

struct Verb {
    args: Vec<&'static str>,
    /// Whether stdout carries timing.
    timed_stdout: bool,
    files: Vec<&'static str>,
    /// Files whose timing columns are dropped before comparing.
    bench_files: Vec<&'static str>,
    config_dir: &'static str,
}

fn snapshot(dir: &Path, verb: &Verb, stdout: &str) -> Vec<(String, Vec<u8>)> {
    let mut snap = Vec::new();
    if !verb.timed_stdout {
        snap.push(("stdout".to_string(), stdout.as_bytes().to_vec()));
    }
    for f in &verb.files {
        snap.push((f.to_string(), fs::read(dir.join(f)).unwrap_or_default()));
    }
    for f in &verb.bench_files {
        let text = fs::read_to_string(dir.join(f)).unwrap_or_default();
        snap.push((f.to_string(), strip_timing(&text).into_bytes()));
    }
    let cfg = Path::new(verb.config_dir).join("config.json");
    snap.push((
        cfg.display().to_string(),
        fs::read(dir.join(cfg)).unwrap_or_default(),
    ));
    snap
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let toy = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../instances/toy_pomdp.json"
    );
    let meet = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../instances/meetsignal.json"
    );
    heat(
        d,
        &[
            "gen-family",
            "--kmax",
            "5",
            "--train",
            "12",
            "--eval",
            "5",
            "--seed",
            "7",
            "--out",
            "fam.json",
        ],
    )?;
    heat(
        d,
        &[
            "train",
            "--family",
            "fam.json",
            "--scenario",
            "multi_mem_modular",
            "--cycles",
            "2",
            "--steps",
            "500",
            "--seed",
            "1",
            "--out",
            "runs/base",
        ],
    )?;

    let verbs = vec![
        Verb {
            args: vec![
                "gen-family",
                "--kmax",
                "5",
                "--train",
                "12",
                "--eval",
                "5",
                "--seed",
                "7",
                "--out",
                "fam/fam.json",
            ],
            timed_stdout: false,
            files: vec!["fam/fam.json"],
            bench_files: vec![],
            config_dir: "fam",
        },
        Verb {
            args: vec![
                "solve-exact",
                "--family",
                "fam.json",
                "--morphs",
                "0,1",
                "--horizon",
                "3",
                "--K",
                "1",
                "--out-dir",
                "solve",
            ],
            timed_stdout: false,
            files: vec![],
            bench_files: vec![],
            config_dir: "solve",
        },
        Verb {
            args: vec![
                "decide",
                "--family",
                "fam.json",
                "--morphs",
                "0,1",
                "--horizon",
                "4",
                "--K",
                "1.5",
                "--json",
                "--out-dir",
                "decide",
            ],
            timed_stdout: false,
            files: vec![],
            bench_files: vec![],
            config_dir: "decide",
        },
        Verb {
            args: vec![
                "solve-observable",
                "--family",
                "fam.json",
                "--horizon",
                "6",
                "--out-dir",
                "obs",
            ],
            timed_stdout: false,
            files: vec![],
            bench_files: vec![],
            config_dir: "obs",
        },
        Verb {
            args: vec![
                "embed",
                "--pomdp",
                toy,
                "--horizon",
                "3",
                "--out-dir",
                "embed",
            ],
            timed_stdout: false,
            files: vec![],
            bench_files: vec![],
            config_dir: "embed",
        },
        Verb {
            args: vec![
                "train",
                "--family",
                "fam.json",
                "--scenario",
                "single_mem",
                "--cycles",
                "3",
                "--steps",
                "1000",
                "--seed",
                "4",
                "--out",
                "runs/t",
            ],
            timed_stdout: true,
            files: vec![
                "runs/t/curves.csv",
                "runs/t/final.ckpt",
                "runs/t/final.ckpt.json",
            ],
            bench_files: vec!["runs/t/bench.csv"],
            config_dir: "runs/t",
        },
        Verb {
            args: vec![
                "bench",
                "--family",
                "fam.json",
                "--cycles",
                "2",
                "--steps",
                "500",
                "--scaling",
                "1,2",
                "--seed",
                "3",
                "--out",
                "runs/b",
            ],
            timed_stdout: true,
            files: vec!["runs/b/curves.csv"],
            bench_files: vec!["runs/b/bench.csv"],
            config_dir: "runs/b",
        },
        Verb {
            args: vec![
                "eval",
                "--checkpoint",
                "runs/base/final.ckpt",
                "--family",
                "fam.json",
                "--episodes",
                "50",
                "--seed",
                "9",
                "--out",
                "ev/eval.csv",
            ],
            timed_stdout: false,
            files: vec!["ev/eval.csv"],
            bench_files: vec![],
            config_dir: "ev",
        },
        Verb {
            args: vec![
                "decpomdp-solve",
                "--instance",
                meet,
                "--horizon",
                "2",
                "--json",
                "--out-dir",
                "dsolve",
            ],
            timed_stdout: false,
            files: vec![],
            bench_files: vec![],
            config_dir: "dsolve",
        },
        Verb {
            args: vec![
                "decpomdp-train",
                "--message-bits",
                "1",
                "--episodes",
                "1000",
                "--eval-episodes",
                "2000",
                "--seed",
                "2",
                "--out",
                "dtrain",
            ],
            timed_stdout: false,
            files: vec!["dtrain/curve.csv", "dtrain/learners.json"],
            bench_files: vec![],
            config_dir: "dtrain",
        },
    ];
    for verb in &verbs {
        let first_out = heat(d, &verb.args)?;
        let first = snapshot(d, verb, &first_out);
        let again_out = heat(d, &verb.args)?;
        let config = Path::new(verb.config_dir).join("config.json");
        let replay_out = heat(d, &["--config", config.to_str().unwrap()])?;
        for (label, run) in [
            ("re-run", snapshot(d, verb, &again_out)),
            ("--config replay", snapshot(d, verb, &replay_out)),
        ] {
            for ((name, a), (_, b)) in first.iter().zip(&run) {
                if a.is_empty() && name != "stdout" {
                    return Err(format!("{}: {name} missing", verb.args[0]));
                }
                if a != b {
                    return Err(format!("{}: {name} differs on {label}", verb.args[0]));
                }
            }
        }
    }
    Ok(format!(
        "{} verbs byte-identical on re-run and --config replay (timing columns excluded)",
        verbs.len()
    ))
}

fn main() {
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let criteria: [(u32, fn() -> Outcome); 11] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|x| x == &n.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        let took = fmt_secs(start.elapsed());
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS ({took}) {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n}: FAIL ({took}) {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn fmt_secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}
