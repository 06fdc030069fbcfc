use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use heat_core::env::FamilyManifest;
use heat_core::policy::{init_policy, save_checkpoint, Architecture, Policy, PolicySizes};
use heat_core::pomdp::{compose, exact_value, outcome_observations};

fn heat(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heat"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn family(dir: &Path) {
    let o = heat(
        dir,
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
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn gen_family_writes_manifest_and_config() {
    let dir = tempfile::tempdir().unwrap();
    family(dir.path());
    let m = FamilyManifest::from_json(&fs::read_to_string(dir.path().join("fam.json")).unwrap())
        .unwrap();
    assert_eq!(
        (m.kmax, m.train_masks.len(), m.eval_masks.len()),
        (5, 12, 5)
    );
    let cfg: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["command"], "gen-family");
    assert_eq!(cfg["args"]["seed"], 7);
}

#[test]
fn decide_prints_value_from_the_exact_solver() {
    let dir = tempfile::tempdir().unwrap();
    family(dir.path());
    let o = heat(
        dir.path(),
        &[
            "decide",
            "--family",
            "fam.json",
            "--morphs",
            "0,1",
            "--horizon",
            "4",
            "--K",
            "1.5",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o);
    let line = line.trim();
    let (v, decision) = line
        .strip_prefix("V*=")
        .and_then(|rest| rest.split_once(" decision="))
        .unwrap_or_else(|| panic!("unexpected output {line:?}"));
    let v: f64 = v.parse().unwrap();

    let m = FamilyManifest::from_json(&fs::read_to_string(dir.path().join("fam.json")).unwrap())
        .unwrap();
    let mdps = m.compile_train().unwrap()[..2].to_vec();
    let obs = outcome_observations(&mdps);
    let p = compose(mdps, vec![0.5, 0.5], obs).unwrap();
    let want = exact_value(&p, p.initial_belief(), 4).unwrap();
    assert_eq!(v, want);
    assert_eq!(decision, (want >= 1.5).to_string());

    let o = heat(
        dir.path(),
        &[
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
        ],
    );
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["value"].as_f64(), Some(want));
    assert_eq!(doc["decision"].as_bool(), Some(want >= 1.5));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    family(dir.path());
    for args in [
        vec!["solve-exact", "--horizon", "-1", "--family", "fam.json"],
        vec![
            "solve-exact",
            "--family",
            "fam.json",
            "--horizon",
            "2",
            "--bogus",
        ],
        vec!["frobnicate"],
        vec![],
        vec!["decpomdp-train", "--out", "d", "--message-bits", "2"],
    ] {
        let o = heat(dir.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(o.stdout.is_empty(), "{args:?}");
        assert!(!o.stderr.is_empty(), "{args:?}");
    }
    let o = heat(dir.path(), &["--config", "missing.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_per_verb_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    for verb in [
        "gen-family",
        "solve-exact",
        "decide",
        "solve-observable",
        "embed",
        "train",
        "bench",
        "eval",
        "decpomdp-solve",
        "decpomdp-train",
    ] {
        let o = heat(dir.path(), &[verb, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{verb}");
        assert!(stdout(&o).contains("Usage"), "{verb}");
    }
}

#[test]
fn domain_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = heat(
        d,
        &[
            "gen-family",
            "--kmax",
            "2",
            "--train",
            "3",
            "--eval",
            "1",
            "--seed",
            "0",
            "--out",
            "f.json",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    let o = heat(d, &["decpomdp-solve", "--horizon", "5", "--cap", "1000"]);
    assert_eq!(o.status.code(), Some(1));
    family(d);
    let o = heat(
        d,
        &[
            "solve-exact",
            "--family",
            "fam.json",
            "--morphs",
            "99",
            "--horizon",
            "1",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_reports_held_out_rows_and_rejects_foreign_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    family(d);
    let zero = Policy::zeroed(Architecture::Recurrent, PolicySizes::for_kmax(5), 0).unwrap();
    save_checkpoint(&d.join("zero.ckpt"), &zero, 0, serde_json::json!({})).unwrap();

    let args = [
        "eval",
        "--checkpoint",
        "zero.ckpt",
        "--family",
        "fam.json",
        "--split",
        "eval",
        "--episodes",
        "40",
        "--seed",
        "3",
        "--out",
        "e1.csv",
    ];
    let o = heat(d, &args);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = fs::read_to_string(d.join("e1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5);
    assert!(csv.starts_with("split,morphology_id,episodes,mean_return,std_err\n"));
    assert!(stdout(&o).contains("average="));

    let mut again = args;
    again[args.len() - 1] = "e2.csv";
    heat(d, &again);
    assert_eq!(csv, fs::read_to_string(d.join("e2.csv")).unwrap());

    let wide = init_policy(Architecture::Recurrent, PolicySizes::for_kmax(7), 0).unwrap();
    save_checkpoint(&d.join("wide.ckpt"), &wide, 0, serde_json::json!({})).unwrap();
    let o = heat(
        d,
        &[
            "eval",
            "--checkpoint",
            "wide.ckpt",
            "--family",
            "fam.json",
            "--out",
            "e3.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_writes_the_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    family(d);
    let o = heat(
        d,
        &[
            "train",
            "--family",
            "fam.json",
            "--scenario",
            "multi_mem",
            "--morphs",
            "0,1",
            "--cycles",
            "2",
            "--steps",
            "500",
            "--out",
            "runs/r",
        ],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for f in [
        "config.json",
        "bench.csv",
        "curves.csv",
        "final.ckpt",
        "final.ckpt.json",
    ] {
        assert!(d.join("runs/r").join(f).exists(), "{f}");
    }
    let bench = fs::read_to_string(d.join("runs/r/bench.csv")).unwrap();
    assert!(bench.starts_with(
        "scenario,cycle,morphology_id,episodes,mean_return,t_generate_ns,t_optimize_ns,param_count,hidden_mem_bytes,theta_version\n"
    ));
    assert_eq!(bench.lines().count(), 1 + 2 * 2);
    let curves = fs::read_to_string(d.join("runs/r/curves.csv")).unwrap();
    assert!(curves.starts_with("scenario,cycle,morphology_id,mean_return\n"));
}

#[test]
fn dec_solve_reports_meet_signal_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let o = heat(dir.path(), &["decpomdp-solve", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((doc["value"].as_f64().unwrap() - 0.64).abs() < 1e-9);
}
