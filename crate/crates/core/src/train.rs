//! Sequential on-policy training.
//!
//! Each cycle visits the morphologies in a fixed order. For every morphology
//! the current policy collects fresh episodes, the per-episode gradients are
//! averaged, and the parameters take one step. A trajectory is stamped with
//! the parameter version it was collected under and cannot be fed into any
//! later update: its stored memory traces and log-probabilities belong to
//! parameters that no longer exist.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{dp_optimal_value, mdp_step, observe, FamilyManifest, TabularMdp};
use crate::error::{HeatError, Result};
use crate::policy::{episode_gradient, init_policy, Architecture, LossConfig, Policy, PolicySizes};
use crate::rng::{cycle_stream, stream_rng};
use crate::stats::{linear_fit, mean, std_err, LinearFit};

/// One fixed-length episode collected on-policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Ground-truth morphology; never shown to recurrent policies.
    pub morphology_id: u64,
    pub gamma: f64,
    pub observations: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    /// Memory after each step.
    pub hidden_snapshots: Vec<Vec<f64>>,
    pub logprobs: Vec<f64>,
    pub theta_version: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn discounted_return(&self) -> f64 {
        self.rewards
            .iter()
            .rev()
            .fold(0.0, |acc, r| r + self.gamma * acc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// `theta -= lr * g`
    Sgd,
    /// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    Adam,
}

impl FromStr for Optimizer {
    type Err = HeatError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(HeatError::InvalidParams(format!(
                "unknown optimizer {other:?}"
            ))),
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// A policy together with the number of updates applied to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Learner {
    policy: Policy,
    version: u64,
    optimizer: Optimizer,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl Learner {
    pub fn new(policy: Policy) -> Self {
        Self::with_optimizer(policy, Optimizer::Sgd)
    }

    pub fn with_optimizer(policy: Policy, optimizer: Optimizer) -> Self {
        let n = policy.param_count();
        Self {
            policy,
            version: 0,
            optimizer,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
        }
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn into_policy(self) -> Policy {
        self.policy
    }

    /// One gradient step on the mean episode gradient of `batch`. Every
    /// trajectory must have been collected under the current version.
    pub fn update(
        &mut self,
        batch: &[Trajectory],
        learning_rate: f64,
        loss: &LossConfig,
    ) -> Result<()> {
        if let Some(stale) = batch.iter().find(|t| t.theta_version != self.version) {
            return Err(HeatError::StaleTrajectory {
                collected: stale.theta_version,
                current: self.version,
            });
        }
        let mut grad = vec![0.0; self.policy.param_count()];
        for traj in batch {
            for (g, d) in grad
                .iter_mut()
                .zip(episode_gradient(&self.policy, traj, loss)?)
            {
                *g += d;
            }
        }
        let n = batch.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        let theta = match self.optimizer {
            Optimizer::Sgd => self
                .policy
                .theta()
                .iter()
                .zip(&grad)
                .map(|(w, g)| w - learning_rate * g)
                .collect(),
            Optimizer::Adam => {
                let step = (self.version + 1) as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(step);
                let c2 = 1.0 - ADAM_BETA2.powi(step);
                let mut theta = self.policy.theta().to_vec();
                for i in 0..theta.len() {
                    self.first_moment[i] =
                        ADAM_BETA1 * self.first_moment[i] + (1.0 - ADAM_BETA1) * grad[i];
                    self.second_moment[i] =
                        ADAM_BETA2 * self.second_moment[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
                    let m = self.first_moment[i] / c1;
                    let v = self.second_moment[i] / c2;
                    theta[i] -= learning_rate * m / (v.sqrt() + ADAM_EPS);
                }
                theta
            }
        };
        self.policy.set_theta(theta)?;
        self.version += 1;
        Ok(())
    }
}

fn sample_action<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (a, p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    dist.len() - 1
}

/// Run one episode of `episode_len` steps from the MDP's initial state. The
/// first observation is the start state's outcome symbol.
pub fn run_episode<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &Policy,
    version: u64,
    episode_len: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let id = mdp.morphology_id();
    let mut traj = Trajectory {
        morphology_id: id,
        gamma: mdp.gamma(),
        observations: Vec::with_capacity(episode_len),
        actions: Vec::with_capacity(episode_len),
        rewards: Vec::with_capacity(episode_len),
        hidden_snapshots: Vec::with_capacity(episode_len),
        logprobs: Vec::with_capacity(episode_len),
        theta_version: version,
    };
    let mut s = mdp.initial_state();
    let mut hidden = policy.initial_hidden();
    for _ in 0..episode_len {
        let o = observe(s);
        let out = policy.step(o, &hidden, id)?;
        let a = sample_action(&out.action_dist, rng);
        let (next, r) = mdp_step(mdp, s, a, rng)?;
        traj.observations.push(o);
        traj.actions.push(a);
        traj.rewards.push(r);
        traj.logprobs.push(out.log_dist[a]);
        traj.hidden_snapshots.push(out.next_hidden.clone());
        hidden = out.next_hidden;
        s = next;
    }
    Ok(traj)
}

/// `floor(steps / episode_len)` on-policy episodes and the wall time of the
/// collection loop.
pub fn rollout<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    learner: &Learner,
    episode_len: usize,
    steps: usize,
    rng: &mut R,
) -> Result<(Vec<Trajectory>, Duration)> {
    if episode_len == 0 || steps < episode_len {
        return Err(HeatError::ContractViolation(format!(
            "need steps >= episode length >= 1, got steps={steps} episode_len={episode_len}"
        )));
    }
    let episodes = steps / episode_len;
    let start = Instant::now();
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        out.push(run_episode(
            mdp,
            &learner.policy,
            learner.version,
            episode_len,
            rng,
        )?);
    }
    Ok((out, start.elapsed()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    SingleNomem,
    SingleMem,
    MultiMem,
    MultiMemModular,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::SingleNomem,
        Scenario::SingleMem,
        Scenario::MultiMem,
        Scenario::MultiMemModular,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::SingleNomem => "single_nomem",
            Scenario::SingleMem => "single_mem",
            Scenario::MultiMem => "multi_mem",
            Scenario::MultiMemModular => "multi_mem_modular",
        }
    }

    pub fn arch(self) -> Architecture {
        match self {
            Scenario::SingleNomem => Architecture::Feedforward,
            Scenario::SingleMem | Scenario::MultiMem => Architecture::Recurrent,
            Scenario::MultiMemModular => Architecture::Modular,
        }
    }

    pub fn is_single(self) -> bool {
        matches!(self, Scenario::SingleNomem | Scenario::SingleMem)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = HeatError;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| HeatError::InvalidParams(format!("unknown scenario {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub cycles: usize,
    pub steps_per_cycle: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Indices into the family's training masks. Empty selects the default:
    /// the first mask for single scenarios, every mask for multi scenarios.
    #[serde(default)]
    pub morphs: Vec<usize>,
    pub sizes: Option<PolicySizes>,
    #[serde(default)]
    pub loss: LossConfig,
    pub optimizer: Optimizer,
}

impl RunConfig {
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        Self {
            scenario,
            cycles: 50,
            steps_per_cycle: 5000,
            learning_rate: 0.05,
            seed,
            morphs: Vec::new(),
            sizes: None,
            loss: LossConfig::default(),
            optimizer: Optimizer::Adam,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cycles == 0 || self.steps_per_cycle == 0 {
            return Err(HeatError::InvalidParams(
                "cycles and steps_per_cycle must be positive".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(HeatError::InvalidParams(format!(
                "bad learning rate {}",
                self.learning_rate
            )));
        }
        if self.scenario.is_single() && self.morphs.len() > 1 {
            return Err(HeatError::InvalidParams(format!(
                "{} trains exactly one morphology, got {}",
                self.scenario,
                self.morphs.len()
            )));
        }
        Ok(())
    }

    /// The training masks this run visits, in visiting order.
    pub fn select(&self, manifest: &FamilyManifest) -> Result<Vec<TabularMdp>> {
        self.validate()?;
        let all = manifest.compile_train()?;
        let picks: Vec<usize> = match (self.morphs.is_empty(), self.scenario.is_single()) {
            (false, _) => self.morphs.clone(),
            (true, true) => vec![0],
            (true, false) => (0..all.len()).collect(),
        };
        if all.is_empty() {
            return Err(HeatError::InvalidParams(
                "family has no training masks".into(),
            ));
        }
        picks
            .iter()
            .map(|&i| {
                all.get(i).cloned().ok_or_else(|| {
                    HeatError::InvalidParams(format!(
                        "morphology index {i} out of range ({} train masks)",
                        all.len()
                    ))
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub cycle: usize,
    pub morphology_id: u64,
    pub episodes: usize,
    pub mean_return: f64,
    pub t_generate_ns: u128,
    pub t_optimize_ns: u128,
    pub param_count: usize,
    pub hidden_mem_bytes: usize,
    /// Parameter version the episodes were collected under.
    pub theta_version: u64,
}

/// Bytes of unrolled memory one episode keeps for backpropagation.
pub fn hidden_mem_bytes(policy: &Policy, episode_len: usize) -> usize {
    episode_len * policy.hidden_size() * std::mem::size_of::<f64>()
}

/// One cycle: for each morphology in order, collect, average, update.
pub fn train_cycle(
    learner: &mut Learner,
    mdps: &[TabularMdp],
    cycle: usize,
    episode_len: usize,
    config: &RunConfig,
) -> Result<Vec<BenchRecord>> {
    if mdps.is_empty() {
        return Err(HeatError::ContractViolation(
            "train_cycle needs at least one morphology".into(),
        ));
    }
    let mut records = Vec::with_capacity(mdps.len());
    for (slot, mdp) in mdps.iter().enumerate() {
        let mut rng = stream_rng(config.seed, cycle_stream(cycle, slot));
        let version = learner.version();
        let (batch, t_generate) =
            rollout(mdp, learner, episode_len, config.steps_per_cycle, &mut rng)?;
        let start = Instant::now();
        learner.update(&batch, config.learning_rate, &config.loss)?;
        let t_optimize = start.elapsed();
        let returns: Vec<f64> = batch.iter().map(Trajectory::discounted_return).collect();
        records.push(BenchRecord {
            cycle,
            morphology_id: mdp.morphology_id(),
            episodes: batch.len(),
            mean_return: mean(&returns),
            t_generate_ns: t_generate.as_nanos(),
            t_optimize_ns: t_optimize.as_nanos(),
            param_count: learner.policy().param_count(),
            hidden_mem_bytes: hidden_mem_bytes(learner.policy(), episode_len),
            theta_version: version,
        });
    }
    Ok(records)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub learner: Learner,
    pub records: Vec<BenchRecord>,
}

/// A full training run of `config.cycles` cycles.
pub fn train_run(manifest: &FamilyManifest, config: &RunConfig) -> Result<TrainOutcome> {
    let mdps = config.select(manifest)?;
    let sizes = config
        .sizes
        .unwrap_or_else(|| PolicySizes::for_kmax(manifest.kmax));
    let policy = init_policy(config.scenario.arch(), sizes, config.seed)?;
    let mut learner = Learner::with_optimizer(policy, config.optimizer);
    let episode_len = manifest.params.episode_len;
    let mut records = Vec::with_capacity(config.cycles * mdps.len());
    for cycle in 0..config.cycles {
        records.extend(train_cycle(
            &mut learner,
            &mdps,
            cycle,
            episode_len,
            config,
        )?);
    }
    Ok(TrainOutcome { learner, records })
}

/// How far a stored batch has drifted from a newer policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// Mean `|log pi_new(a_t) - stored log pi(a_t)|` over all steps.
    pub logprob_drift: f64,
    /// Mean L2 distance between stored and recomputed memory per step.
    pub hidden_drift: f64,
    /// `||theta_new - theta_old||`.
    pub param_delta: f64,
}

/// Replay every stored observation sequence through `new`, recomputing the
/// memory from scratch, and compare with what was stored under `old`.
pub fn staleness_probe(old: &Policy, new: &Policy, stored: &[Trajectory]) -> Result<DriftReport> {
    if old.param_count() != new.param_count() || old.arch() != new.arch() {
        return Err(HeatError::ContractViolation(
            "probe needs two versions of one network".into(),
        ));
    }
    let mut lp_sum = 0.0;
    let mut h_sum = 0.0;
    let mut steps = 0usize;
    for traj in stored {
        let replay = new.replay(&traj.observations, &traj.actions, traj.morphology_id)?;
        for t in 0..traj.len() {
            lp_sum += (replay.logprobs[t] - traj.logprobs[t]).abs();
            let stored_h = &traj.hidden_snapshots[t];
            if stored_h.len() != replay.hidden[t].len() {
                return Err(HeatError::ContractViolation(
                    "stored memory width does not match policy".into(),
                ));
            }
            h_sum += stored_h
                .iter()
                .zip(&replay.hidden[t])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
        }
        steps += traj.len();
    }
    let param_delta = old
        .theta()
        .iter()
        .zip(new.theta())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let per_step = |x: f64| if steps == 0 { 0.0 } else { x / steps as f64 };
    Ok(DriftReport {
        logprob_drift: per_step(lp_sum),
        hidden_drift: per_step(h_sum),
        param_delta,
    })
}

/// Collect a batch under the learner's current parameters, then apply
/// `updates` real training updates on `mdp` (each from fresh episodes) and
/// probe the original batch after every one of them.
pub fn staleness_series(
    learner: &mut Learner,
    mdp: &TabularMdp,
    episode_len: usize,
    config: &RunConfig,
    updates: usize,
) -> Result<Vec<DriftReport>> {
    let mut rng = stream_rng(config.seed, cycle_stream(0, 0));
    let (stored, _) = rollout(mdp, learner, episode_len, config.steps_per_cycle, &mut rng)?;
    let original = learner.policy().clone();
    let mut reports = Vec::with_capacity(updates);
    for k in 1..=updates {
        let mut rng = stream_rng(config.seed, cycle_stream(k, 0));
        let (batch, _) = rollout(mdp, learner, episode_len, config.steps_per_cycle, &mut rng)?;
        learner.update(&batch, config.learning_rate, &config.loss)?;
        reports.push(staleness_probe(&original, learner.policy(), &stored)?);
    }
    Ok(reports)
}

/// Per-morphology mean discounted return of a frozen policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub morphology_id: u64,
    pub episodes: usize,
    pub mean_return: f64,
    pub std_err: f64,
}

pub fn evaluate_policy(
    policy: &Policy,
    mdps: &[TabularMdp],
    episode_len: usize,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EvalRow>> {
    mdps.iter()
        .enumerate()
        .map(|(slot, mdp)| {
            let mut rng = stream_rng(seed, cycle_stream(0, slot));
            let returns = (0..episodes)
                .map(
                    |_| Ok(run_episode(mdp, policy, 0, episode_len, &mut rng)?.discounted_return()),
                )
                .collect::<Result<Vec<f64>>>()?;
            Ok(EvalRow {
                morphology_id: mdp.morphology_id(),
                episodes,
                mean_return: mean(&returns),
                std_err: std_err(&returns),
            })
        })
        .collect()
}

pub const BENCH_HEADER: &str =
    "scenario,cycle,morphology_id,episodes,mean_return,t_generate_ns,t_optimize_ns,param_count,hidden_mem_bytes,theta_version";
pub const CURVES_HEADER: &str = "scenario,cycle,morphology_id,mean_return";

/// Benchmark rows for one scenario label.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub label: String,
    pub records: Vec<BenchRecord>,
    pub episode_len: usize,
}

impl ScenarioRun {
    /// Records after the warm-up cycle.
    fn measured(&self) -> impl Iterator<Item = &BenchRecord> {
        self.records.iter().filter(|r| r.cycle > 0)
    }

    /// Wall time of all measured cycles, in seconds.
    pub fn total_seconds(&self) -> f64 {
        self.measured()
            .map(|r| (r.t_generate_ns + r.t_optimize_ns) as f64)
            .sum::<f64>()
            * 1e-9
    }

    /// Training time per environment step, in nanoseconds.
    pub fn ns_per_step(&self) -> f64 {
        let (ns, steps) = self.measured().fold((0.0, 0usize), |(ns, steps), r| {
            (
                ns + (r.t_generate_ns + r.t_optimize_ns) as f64,
                steps + r.episodes * self.episode_len,
            )
        });
        ns / steps.max(1) as f64
    }
}

pub fn bench_csv(runs: &[ScenarioRun]) -> String {
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    for run in runs {
        for r in &run.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                run.label,
                r.cycle,
                r.morphology_id,
                r.episodes,
                r.mean_return,
                r.t_generate_ns,
                r.t_optimize_ns,
                r.param_count,
                r.hidden_mem_bytes,
                r.theta_version
            ));
        }
    }
    out
}

pub fn curves_csv(runs: &[ScenarioRun]) -> String {
    let mut out = String::from(CURVES_HEADER);
    out.push('\n');
    for run in runs {
        for r in &run.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                run.label, r.cycle, r.morphology_id, r.mean_return
            ));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub scenarios: Vec<Scenario>,
    /// Cycles per scenario, including the warm-up cycle.
    pub cycles: usize,
    pub steps_per_cycle: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Morphology counts for the linear-scaling study.
    pub scaling: Vec<usize>,
}

impl BenchConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            scenarios: Scenario::ALL.to_vec(),
            cycles: 4,
            steps_per_cycle: 5000,
            learning_rate: 0.05,
            seed,
            scaling: vec![1, 2, 4, 8],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchSummary {
    /// single_mem / single_nomem training time per step.
    pub memory_ratio: Option<f64>,
    /// multi_mem / single_mem total measured time.
    pub multi_single_ratio: Option<f64>,
    /// (n, seconds) points of the scaling study.
    pub scaling_points: Vec<(usize, f64)>,
    pub scaling_slope: Option<f64>,
    pub scaling_r_squared: Option<f64>,
}

/// Run every scenario and the scaling study single-threaded, writing
/// `bench.csv` and `curves.csv` under `out_dir`.
pub fn run_benchmark(
    manifest: &FamilyManifest,
    config: &BenchConfig,
    out_dir: &Path,
) -> Result<(Vec<ScenarioRun>, BenchSummary)> {
    if config.cycles < 2 {
        return Err(HeatError::InvalidParams(
            "benchmark needs a warm-up cycle plus at least one more".into(),
        ));
    }
    let base = |scenario: Scenario| RunConfig {
        cycles: config.cycles,
        steps_per_cycle: config.steps_per_cycle,
        learning_rate: config.learning_rate,
        ..RunConfig::new(scenario, config.seed)
    };
    let episode_len = manifest.params.episode_len;
    let mut runs = Vec::new();
    for &scenario in &config.scenarios {
        let out = train_run(manifest, &base(scenario))?;
        runs.push(ScenarioRun {
            label: scenario.name().to_string(),
            records: out.records,
            episode_len,
        });
    }
    let mut points = Vec::new();
    for &n in &config.scaling {
        if n == 0 || n > manifest.train_masks.len() {
            return Err(HeatError::InvalidParams(format!(
                "scaling point n={n} needs that many training masks ({} available)",
                manifest.train_masks.len()
            )));
        }
        let cfg = RunConfig {
            morphs: (0..n).collect(),
            ..base(Scenario::MultiMem)
        };
        let out = train_run(manifest, &cfg)?;
        let run = ScenarioRun {
            label: format!("multi_mem_n{n}"),
            records: out.records,
            episode_len,
        };
        points.push((n, run.total_seconds()));
        runs.push(run);
    }

    let find = |s: Scenario| runs.iter().find(|r| r.label == s.name());
    let memory_ratio = match (find(Scenario::SingleMem), find(Scenario::SingleNomem)) {
        (Some(m), Some(f)) => Some(m.ns_per_step() / f.ns_per_step()),
        _ => None,
    };
    let multi_single_ratio = match (find(Scenario::MultiMem), find(Scenario::SingleMem)) {
        (Some(m), Some(s)) => Some(m.total_seconds() / s.total_seconds()),
        _ => None,
    };
    let fit: Option<LinearFit> = (points.len() >= 2).then(|| {
        let xs: Vec<f64> = points.iter().map(|p| p.0 as f64).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        linear_fit(&xs, &ys)
    });
    let summary = BenchSummary {
        memory_ratio,
        multi_single_ratio,
        scaling_points: points,
        scaling_slope: fit.map(|f| f.slope),
        scaling_r_squared: fit.map(|f| f.r_squared),
    };
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("bench.csv"), bench_csv(&runs))?;
    fs::write(out_dir.join("curves.csv"), curves_csv(&runs))?;
    Ok((runs, summary))
}

/// DP-optimal expected discounted return of one episode.
pub fn optimal_episode_value(mdp: &TabularMdp, episode_len: usize) -> f64 {
    dp_optimal_value(mdp, episode_len).value
}
