//! The `heat` command line: family generation, exact solving, training,
//! benchmarks, Dec-POMDP runs and held-out evaluation.
//!
//! Every run echoes its resolved arguments to a `config.json`; passing that
//! file back through `heat --config <path>` repeats the run.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use heat_core::decpomdp::{
    brute_force, dtde_curve_csv, dtde_train, DecPomdp, DtdeConfig, DEFAULT_SEARCH_CAP,
};
use heat_core::env::{generate_family, FamilyManifest, TabularMdp};
use heat_core::policy::{load_checkpoint, save_checkpoint, LossConfig, Policy, PolicySizes};
use heat_core::pomdp::{
    compose, embed_pomdp, exact_value_with, morphology_outcome_observations, outcome_observations,
    revealing_observations, solve_observable, CompositePomdp, SolverOptions, StandalonePomdp,
    DECISION_SLACK,
};
use heat_core::train::{
    bench_csv, curves_csv, evaluate_policy, run_benchmark, train_run, BenchConfig, EvalRow,
    Optimizer, RunConfig, Scenario, ScenarioRun,
};
use heat_core::HeatError;

pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Parser)]
#[command(
    name = "heat",
    version,
    about = "Cross-morphology training lab",
    args_conflicts_with_subcommands = true
)]
struct Cli {
    /// Re-run the command recorded in a config.json.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", content = "args", rename_all = "kebab-case")]
pub enum Command {
    /// Sample a family of joint masks and write its manifest.
    GenFamily(GenFamilyArgs),
    /// Exact optimal value of a composite POMDP over a finite horizon.
    SolveExact(SolveArgs),
    /// Is a target return reachable within the horizon?
    Decide(DecideArgs),
    /// Optimal value when the morphology is observed every step.
    SolveObservable(ObservableArgs),
    /// Solve a plain POMDP read from JSON as a one-component composite.
    Embed(EmbedArgs),
    /// Train one scenario and write a run directory.
    Train(TrainArgs),
    /// Time every scenario plus the morphology-count scaling study.
    Bench(BenchArgs),
    /// Roll out a frozen checkpoint on a family split.
    Eval(EvalArgs),
    /// Brute-force the optimal joint policy of a Dec-POMDP.
    DecpomdpSolve(DecSolveArgs),
    /// Train independent learners on a Dec-POMDP.
    DecpomdpTrain(DecTrainArgs),
}

impl Command {
    pub fn verb(&self) -> &'static str {
        match self {
            Command::GenFamily(_) => "gen-family",
            Command::SolveExact(_) => "solve-exact",
            Command::Decide(_) => "decide",
            Command::SolveObservable(_) => "solve-observable",
            Command::Embed(_) => "embed",
            Command::Train(_) => "train",
            Command::Bench(_) => "bench",
            Command::Eval(_) => "eval",
            Command::DecpomdpSolve(_) => "decpomdp-solve",
            Command::DecpomdpTrain(_) => "decpomdp-train",
        }
    }

    /// Directory that receives this command's config.json.
    pub fn config_dir(&self) -> PathBuf {
        fn parent(p: &Path) -> PathBuf {
            match p.parent() {
                Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
                _ => PathBuf::from("."),
            }
        }
        match self {
            Command::GenFamily(a) => parent(&a.out),
            Command::Eval(a) => parent(&a.out),
            Command::SolveExact(a) => a.out_dir.clone(),
            Command::Decide(a) => a.out_dir.clone(),
            Command::SolveObservable(a) => a.out_dir.clone(),
            Command::Embed(a) => a.out_dir.clone(),
            Command::DecpomdpSolve(a) => a.out_dir.clone(),
            Command::Train(a) => a.out.clone(),
            Command::Bench(a) => a.out.clone(),
            Command::DecpomdpTrain(a) => a.out.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenFamilyArgs {
    /// Number of joint slots.
    #[arg(long)]
    pub kmax: usize,
    /// Training masks to draw.
    #[arg(long)]
    pub train: usize,
    /// Held-out masks to draw.
    #[arg(long)]
    pub eval: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObsModel {
    /// The gait outcome of the entered state.
    Outcome,
    /// Outcome paired with the morphology index.
    MorphOutcome,
    /// The morphology index alone, with a fixed start symbol.
    Revealing,
}

/// Which composite to build from a family manifest.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemArgs {
    /// Family manifest written by gen-family.
    #[arg(long)]
    pub family: PathBuf,
    /// Indices into the training masks; all of them when omitted.
    #[arg(long, value_delimiter = ',')]
    pub morphs: Vec<usize>,
    /// Prior over the selected morphologies; uniform when omitted.
    #[arg(long, value_delimiter = ',')]
    pub prior: Vec<f64>,
    #[arg(long, value_enum, default_value_t = ObsModel::Outcome)]
    pub obs: ObsModel,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub horizon: usize,
    /// Also report whether this return is reachable.
    #[arg(long = "K")]
    pub k: Option<f64>,
    /// Cache subtree values by belief.
    #[arg(long)]
    pub memo: bool,
    #[arg(long)]
    pub json: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecideArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub horizon: usize,
    /// Target return.
    #[arg(long = "K")]
    pub k: f64,
    #[arg(long)]
    pub json: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableArgs {
    #[arg(long)]
    pub family: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub morphs: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub prior: Vec<f64>,
    #[arg(long)]
    pub horizon: usize,
    #[arg(long)]
    pub json: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedArgs {
    /// POMDP JSON with gamma, initial, transition, reward, observation.
    #[arg(long)]
    pub pomdp: PathBuf,
    #[arg(long)]
    pub horizon: usize,
    #[arg(long = "K")]
    pub k: Option<f64>,
    #[arg(long)]
    pub json: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long)]
    pub family: PathBuf,
    /// single_nomem, single_mem, multi_mem or multi_mem_modular.
    #[arg(long)]
    pub scenario: Scenario,
    #[arg(long, default_value_t = 50)]
    pub cycles: usize,
    #[arg(long, default_value_t = 5000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    /// sgd or adam.
    #[arg(long, default_value = "adam")]
    pub optimizer: Optimizer,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Indices into the training masks.
    #[arg(long, value_delimiter = ',')]
    pub morphs: Vec<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub memory: Option<usize>,
    #[arg(long)]
    pub message: Option<usize>,
    /// Add the entropy bonus to the loss.
    #[arg(long)]
    pub entropy: bool,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchArgs {
    #[arg(long)]
    pub family: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub cycles: usize,
    #[arg(long, default_value_t = 5000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "single_nomem,single_mem,multi_mem,multi_mem_modular"
    )]
    pub scenarios: Vec<Scenario>,
    /// Morphology counts for the scaling study.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub scaling: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Eval => "eval",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub family: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Eval)]
    pub split: Split,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV report.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecSolveArgs {
    /// Dec-POMDP JSON; the built-in MeetSignal instance when omitted.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub horizon: usize,
    /// Largest number of joint policies to enumerate.
    #[arg(long, default_value_t = DEFAULT_SEARCH_CAP as u64)]
    pub cap: u64,
    #[arg(long)]
    pub json: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecTrainArgs {
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long, default_value_t = 5000)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    /// Broadcast channel width, 0 or 1.
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub message_bits: u8,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub horizon: usize,
    #[arg(long, default_value_t = 20_000)]
    pub eval_episodes: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// A problem with the invocation itself rather than with the model.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Parse `argv` (program name first), run the command and return the process
/// exit code: 0 on success, 1 on domain errors, 2 on usage errors.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let command = match (cli.config, cli.command) {
        (Some(path), None) => match read_config(&path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e:#}");
                return 2;
            }
        },
        (None, Some(c)) => c,
        _ => {
            eprintln!("error: a command or --config is required (see heat --help)");
            return 2;
        }
    };
    match run(&command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("HEAT_LOG", "warn");
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .try_init();
}

pub fn read_config(path: &Path) -> Result<Command> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a heat config", path.display()))
}

pub fn config_json(command: &Command) -> Result<String> {
    let mut s = serde_json::to_string_pretty(command)?;
    s.push('\n');
    Ok(s)
}

/// Execute one command, writing its config.json first.
pub fn run(command: &Command) -> Result<()> {
    let dir = command.config_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(CONFIG_FILE), config_json(command)?)?;
    log::info!("{} (config in {})", command.verb(), dir.display());
    match command {
        Command::GenFamily(a) => gen_family(a),
        Command::SolveExact(a) => solve_exact(a),
        Command::Decide(a) => decide(a),
        Command::SolveObservable(a) => observable(a),
        Command::Embed(a) => embed(a),
        Command::Train(a) => train(a),
        Command::Bench(a) => bench(a),
        Command::Eval(a) => eval(a),
        Command::DecpomdpSolve(a) => dec_solve(a),
        Command::DecpomdpTrain(a) => dec_train(a),
    }
}

/// Decimal rendering with 17 significant digits, enough to round-trip an f64.
pub fn sig17(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let decimals = (16 - v.abs().log10().floor() as i64).clamp(0, 400) as usize;
    format!("{v:.decimals$}")
}

fn value_line(v: f64, decision: Option<bool>) -> String {
    match decision {
        Some(d) => format!("V*={} decision={d}", sig17(v)),
        None => format!("V*={}", sig17(v)),
    }
}

fn reachable(v: f64, k: f64) -> bool {
    v >= k - DECISION_SLACK
}

fn load_family(path: &Path) -> Result<FamilyManifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FamilyManifest::from_json(&text)?)
}

fn pick_train(manifest: &FamilyManifest, morphs: &[usize]) -> Result<Vec<TabularMdp>> {
    let all = manifest.compile_train()?;
    if morphs.is_empty() {
        return Ok(all);
    }
    morphs
        .iter()
        .map(|&i| {
            all.get(i).cloned().ok_or_else(|| {
                HeatError::InvalidParams(format!(
                    "morphology index {i} out of range ({} train masks)",
                    all.len()
                ))
                .into()
            })
        })
        .collect()
}

fn prior_for(prior: &[f64], n: usize) -> Vec<f64> {
    if prior.is_empty() {
        vec![1.0 / n as f64; n]
    } else {
        prior.to_vec()
    }
}

fn build_problem(p: &ProblemArgs) -> Result<CompositePomdp> {
    let manifest = load_family(&p.family)?;
    let mdps = pick_train(&manifest, &p.morphs)?;
    let prior = prior_for(&p.prior, mdps.len());
    let obs = match p.obs {
        ObsModel::Outcome => outcome_observations(&mdps),
        ObsModel::MorphOutcome => morphology_outcome_observations(&mdps),
        ObsModel::Revealing => revealing_observations(&mdps),
    };
    Ok(compose(mdps, prior, obs)?)
}

fn report_value(
    p: &CompositePomdp,
    horizon: usize,
    k: Option<f64>,
    memo: bool,
    json: bool,
) -> Result<()> {
    let sol = exact_value_with(
        p,
        p.initial_belief(),
        horizon,
        SolverOptions { memoize: memo },
    )?;
    let decision = k.map(|k| reachable(sol.value, k));
    if json {
        let doc = json!({
            "value": sol.value,
            "horizon": horizon,
            "threshold": k,
            "decision": decision,
            "first_action": sol.first_action,
            "nodes": sol.nodes,
        });
        println!("{doc}");
    } else {
        println!("{}", value_line(sol.value, decision));
    }
    Ok(())
}

fn gen_family(a: &GenFamilyArgs) -> Result<()> {
    let manifest = generate_family(a.kmax, a.train, a.eval, a.seed)?;
    fs::write(&a.out, manifest.to_json()?)
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "wrote {} (kmax={}, {} train, {} eval)",
        a.out.display(),
        manifest.kmax,
        manifest.train_masks.len(),
        manifest.eval_masks.len()
    );
    Ok(())
}

fn solve_exact(a: &SolveArgs) -> Result<()> {
    let p = build_problem(&a.problem)?;
    report_value(&p, a.horizon, a.k, a.memo, a.json)
}

fn decide(a: &DecideArgs) -> Result<()> {
    if a.horizon == 0 {
        return Err(UsageError("decide needs --horizon >= 1".into()).into());
    }
    let p = build_problem(&a.problem)?;
    report_value(&p, a.horizon, Some(a.k), false, a.json)
}

fn observable(a: &ObservableArgs) -> Result<()> {
    let manifest = load_family(&a.family)?;
    let mdps = pick_train(&manifest, &a.morphs)?;
    let prior = prior_for(&a.prior, mdps.len());
    let v = solve_observable(&mdps, &prior, a.horizon)?;
    if a.json {
        println!(
            "{}",
            json!({ "value": v, "horizon": a.horizon, "components": mdps.len() })
        );
    } else {
        println!("{}", value_line(v, None));
    }
    Ok(())
}

fn embed(a: &EmbedArgs) -> Result<()> {
    let text =
        fs::read_to_string(&a.pomdp).with_context(|| format!("reading {}", a.pomdp.display()))?;
    let single = StandalonePomdp::from_json(&text)?;
    let p = embed_pomdp(&single)?;
    report_value(&p, a.horizon, a.k, false, a.json)
}

fn run_config(a: &TrainArgs, kmax: usize) -> RunConfig {
    let sizes = (a.hidden.is_some() || a.memory.is_some() || a.message.is_some()).then(|| {
        let d = PolicySizes::for_kmax(kmax);
        PolicySizes {
            hidden: a.hidden.unwrap_or(d.hidden),
            memory: a.memory.unwrap_or(d.memory),
            message: a.message.unwrap_or(d.message),
            ..d
        }
    });
    let loss = LossConfig {
        entropy_coef: if a.entropy {
            LossConfig::ENTROPY_BONUS
        } else {
            0.0
        },
        ..LossConfig::default()
    };
    RunConfig {
        cycles: a.cycles,
        steps_per_cycle: a.steps,
        learning_rate: a.lr,
        morphs: a.morphs.clone(),
        sizes,
        loss,
        optimizer: a.optimizer,
        ..RunConfig::new(a.scenario, a.seed)
    }
}

fn train(a: &TrainArgs) -> Result<()> {
    let manifest = load_family(&a.family)?;
    let cfg = run_config(a, manifest.kmax);
    let outcome = train_run(&manifest, &cfg)?;
    let run = ScenarioRun {
        label: a.scenario.name().to_string(),
        records: outcome.records,
        episode_len: manifest.params.episode_len,
    };
    fs::write(
        a.out.join("bench.csv"),
        bench_csv(std::slice::from_ref(&run)),
    )?;
    fs::write(
        a.out.join("curves.csv"),
        curves_csv(std::slice::from_ref(&run)),
    )?;
    let policy = outcome.learner.policy();
    save_checkpoint(
        &a.out.join("final.ckpt"),
        policy,
        a.seed,
        serde_json::to_value(&cfg)?,
    )?;

    let last = run.records.iter().map(|r| r.cycle).max().unwrap_or(0);
    for r in run.records.iter().filter(|r| r.cycle == last) {
        println!(
            "cycle={} morphology_id={} mean_return={}",
            r.cycle,
            r.morphology_id,
            sig17(r.mean_return)
        );
    }
    println!(
        "scenario={} params={} seconds={:.3} out={}",
        a.scenario,
        policy.param_count(),
        run.total_seconds(),
        a.out.display()
    );
    Ok(())
}

fn bench(a: &BenchArgs) -> Result<()> {
    let manifest = load_family(&a.family)?;
    let cfg = BenchConfig {
        scenarios: a.scenarios.clone(),
        cycles: a.cycles,
        steps_per_cycle: a.steps,
        learning_rate: a.lr,
        seed: a.seed,
        scaling: a.scaling.clone(),
    };
    let (runs, summary) = run_benchmark(&manifest, &cfg, &a.out)?;
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(a.out.join("summary.json"), text)?;
    for run in &runs {
        println!(
            "{} seconds={:.4} ns_per_step={:.1}",
            run.label,
            run.total_seconds(),
            run.ns_per_step()
        );
    }
    let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
    println!("memory_ratio={}", opt(summary.memory_ratio));
    println!("multi_single_ratio={}", opt(summary.multi_single_ratio));
    println!(
        "scaling_slope={} scaling_r_squared={}",
        opt(summary.scaling_slope),
        opt(summary.scaling_r_squared)
    );
    Ok(())
}

fn check_compatible(policy: &Policy, manifest: &FamilyManifest) -> Result<()> {
    let want = PolicySizes::for_kmax(manifest.kmax);
    let got = policy.sizes();
    if got.obs != want.obs || got.actions != want.actions {
        return Err(HeatError::Checkpoint(format!(
            "checkpoint expects {} observations and {} actions, family has {} and {}",
            got.obs, got.actions, want.obs, want.actions
        ))
        .into());
    }
    Ok(())
}

pub const EVAL_HEADER: &str = "split,morphology_id,episodes,mean_return,std_err";

pub fn eval_csv(split: Split, rows: &[EvalRow]) -> String {
    let mut out = format!("{EVAL_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{split},{},{},{},{}\n",
            r.morphology_id, r.episodes, r.mean_return, r.std_err
        ));
    }
    out
}

fn eval(a: &EvalArgs) -> Result<()> {
    let manifest = load_family(&a.family)?;
    let (policy, _) = load_checkpoint(&a.checkpoint)?;
    check_compatible(&policy, &manifest)?;
    let mdps = match a.split {
        Split::Train => manifest.compile_train()?,
        Split::Eval => manifest.compile_eval()?,
    };
    if a.episodes == 0 {
        return Err(UsageError("--episodes must be positive".into()).into());
    }
    let rows = evaluate_policy(
        &policy,
        &mdps,
        manifest.params.episode_len,
        a.episodes,
        a.seed,
    )?;
    fs::write(&a.out, eval_csv(a.split, &rows))
        .with_context(|| format!("writing {}", a.out.display()))?;
    for r in &rows {
        println!(
            "morphology_id={} mean_return={} std_err={}",
            r.morphology_id,
            sig17(r.mean_return),
            sig17(r.std_err)
        );
    }
    let avg = if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r.mean_return).sum::<f64>() / rows.len() as f64
    };
    println!(
        "split={} morphologies={} average={}",
        a.split,
        rows.len(),
        sig17(avg)
    );
    Ok(())
}

fn load_instance(path: Option<&Path>) -> Result<DecPomdp> {
    match path {
        None => Ok(DecPomdp::meet_signal()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(DecPomdp::from_json(&text)?)
        }
    }
}

fn dec_solve(a: &DecSolveArgs) -> Result<()> {
    let dec = load_instance(a.instance.as_deref())?;
    if a.horizon == 0 {
        return Err(UsageError("decpomdp-solve needs --horizon >= 1".into()).into());
    }
    let res = brute_force(&dec, a.horizon, u128::from(a.cap))?;
    if a.json {
        let doc = json!({
            "value": res.value,
            "horizon": a.horizon,
            "evaluated": res.evaluated,
            "n_maximizers": res.n_maximizers,
            "best": res.best,
        });
        println!("{doc}");
    } else {
        println!(
            "{} maximizers={} evaluated={}",
            value_line(res.value, None),
            res.n_maximizers,
            res.evaluated
        );
        for local in &res.best.locals {
            let acts: Vec<String> = local.actions.iter().map(usize::to_string).collect();
            println!("agent={} actions={}", local.agent, acts.join(","));
        }
    }
    Ok(())
}

fn dec_train(a: &DecTrainArgs) -> Result<()> {
    let dec = load_instance(a.instance.as_deref())?;
    let cfg = DtdeConfig {
        episodes: a.episodes,
        learning_rate: a.lr,
        message_bits: a.message_bits,
        horizon: a.horizon,
        eval_episodes: a.eval_episodes,
        ..DtdeConfig::new(a.seed)
    };
    let outcome = dtde_train(&dec, &cfg)?;
    fs::write(a.out.join("curve.csv"), dtde_curve_csv(&outcome.curve))?;
    let mut learners = serde_json::to_string_pretty(&outcome.learners)?;
    learners.push('\n');
    fs::write(a.out.join("learners.json"), learners)?;
    println!(
        "final_value={} sigma={} episodes={} message_bits={}",
        sig17(outcome.final_value),
        sig17(outcome.final_sigma),
        a.episodes,
        a.message_bits
    );
    Ok(())
}
