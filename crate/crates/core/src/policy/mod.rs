//! Memory-based policies over the shared GaitChain action space.
//!
//! Three architectures share one interface: a tanh recurrent network, the
//! same network with its recurrence removed (no memory), and a modular
//! network that runs one shared cell per present joint slot. Gradients are
//! derived by hand (full backpropagation through time) and checked against
//! central finite differences.
//!
//! The loss of one episode is
//!
//! ```text
//! L = -sum_t A_t log pi(a_t | h_t) + c_v sum_t (G_t - v_t)^2 - beta sum_t H(pi_t)
//! ```
//!
//! with `G_t` the discounted return-to-go and `A_t = G_t - v_t` evaluated at
//! the parameters the gradient is taken at and then held constant, so the
//! value baseline only learns through the squared-error term.

mod checkpoint;
mod linalg;
mod modular;
mod recurrent;

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::env::{JointMask, N_OUTCOMES};
use crate::error::{HeatError, Result};
use crate::rng::seeded_rng;
use crate::train::Trajectory;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, sidecar_path, write_checkpoint,
    CheckpointMeta,
};
pub use modular::ModularNet;
pub use recurrent::RecurrentNet;

/// Below this many parameters the finite-difference check visits every coordinate.
pub const FD_FULL_LIMIT: usize = 2048;
/// Coordinates sampled by the finite-difference check for larger networks.
pub const FD_SUBSET: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Recurrent,
    Modular,
    Feedforward,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Recurrent => "recurrent",
            Architecture::Modular => "modular",
            Architecture::Feedforward => "feedforward",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Architecture::Recurrent => 1,
            Architecture::Modular => 2,
            Architecture::Feedforward => 3,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Architecture::Recurrent),
            2 => Some(Architecture::Modular),
            3 => Some(Architecture::Feedforward),
            _ => None,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = HeatError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recurrent" => Ok(Architecture::Recurrent),
            "modular" => Ok(Architecture::Modular),
            "feedforward" => Ok(Architecture::Feedforward),
            other => Err(HeatError::InvalidParams(format!(
                "unknown architecture {other:?}"
            ))),
        }
    }
}

/// Layer widths. `hidden` is used by the recurrent and feedforward
/// networks, `memory` and `message` by the modular one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySizes {
    pub obs: usize,
    pub actions: usize,
    pub hidden: usize,
    pub memory: usize,
    pub message: usize,
}

impl PolicySizes {
    /// Lab defaults for a family with `kmax` slots.
    pub fn for_kmax(kmax: usize) -> Self {
        Self {
            obs: N_OUTCOMES,
            actions: kmax + 1,
            hidden: 16,
            memory: 8,
            message: 8,
        }
    }

    /// Joint slots of the shared action space (every action but the no-op).
    pub fn slots(&self) -> usize {
        self.actions.saturating_sub(1)
    }

    fn validate(&self, arch: Architecture) -> Result<()> {
        let zero = |name: &str| Err(HeatError::InvalidParams(format!("{name} must be positive")));
        if self.obs == 0 {
            return zero("observation alphabet");
        }
        if self.actions < 2 {
            return Err(HeatError::InvalidParams(
                "need at least one slot plus the no-op".into(),
            ));
        }
        match arch {
            Architecture::Recurrent | Architecture::Feedforward if self.hidden == 0 => {
                zero("hidden width")
            }
            Architecture::Modular if self.memory == 0 => zero("memory width"),
            Architecture::Modular if self.message == 0 => zero("message width"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Net {
    Dense(RecurrentNet),
    Modular(Box<ModularNet>),
}

/// Per-step network outputs of an unrolled sequence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutputs {
    pub logits: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub hidden: Vec<Vec<f64>>,
}

impl StepOutputs {
    pub(crate) fn with_capacity(n: usize) -> Self {
        Self {
            logits: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            hidden: Vec::with_capacity(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyStepOutput {
    pub action_dist: Vec<f64>,
    /// `ln action_dist`, computed directly from the logits.
    pub log_dist: Vec<f64>,
    pub value_est: f64,
    /// Empty for the memory-free architecture.
    pub next_hidden: Vec<f64>,
}

/// Recomputed quantities for a stored observation/action sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub logprobs: Vec<f64>,
    pub values: Vec<f64>,
    pub hidden: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    arch: Architecture,
    sizes: PolicySizes,
    seed: u64,
    net: Net,
    theta: Vec<f64>,
}

/// Build a policy with scaled-uniform weights and zero biases.
pub fn init_policy(arch: Architecture, sizes: PolicySizes, seed: u64) -> Result<Policy> {
    let mut policy = Policy::zeroed(arch, sizes, seed)?;
    let mut rng = seeded_rng(seed);
    match &policy.net {
        Net::Dense(n) => n.init(&mut policy.theta, &mut rng),
        Net::Modular(n) => n.init(&mut policy.theta, &mut rng),
    }
    Ok(policy)
}

/// Closed-form parameter count for an architecture and its widths.
pub fn param_count_for(arch: Architecture, sizes: &PolicySizes) -> usize {
    match arch {
        Architecture::Recurrent => {
            RecurrentNet::count_for(sizes.obs, sizes.hidden, sizes.actions, true)
        }
        Architecture::Feedforward => {
            RecurrentNet::count_for(sizes.obs, sizes.hidden, sizes.actions, false)
        }
        Architecture::Modular => ModularNet::count_for(sizes.obs, sizes.memory, sizes.message),
    }
}

impl Policy {
    /// All parameters zero.
    pub fn zeroed(arch: Architecture, sizes: PolicySizes, seed: u64) -> Result<Self> {
        sizes.validate(arch)?;
        let net = match arch {
            Architecture::Recurrent => Net::Dense(RecurrentNet::new(
                sizes.obs,
                sizes.hidden,
                sizes.actions,
                true,
            )),
            Architecture::Feedforward => Net::Dense(RecurrentNet::new(
                sizes.obs,
                sizes.hidden,
                sizes.actions,
                false,
            )),
            Architecture::Modular => Net::Modular(Box::new(ModularNet::new(
                sizes.obs,
                sizes.slots(),
                sizes.memory,
                sizes.message,
            ))),
        };
        let count = match &net {
            Net::Dense(n) => n.param_count(),
            Net::Modular(n) => n.param_count(),
        };
        Ok(Self {
            arch,
            sizes,
            seed,
            net,
            theta: vec![0.0; count],
        })
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn sizes(&self) -> &PolicySizes {
        &self.sizes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    pub fn n_actions(&self) -> usize {
        self.sizes.actions
    }

    /// Width of the memory carried between steps (0 without memory).
    pub fn hidden_size(&self) -> usize {
        match &self.net {
            Net::Dense(n) => n.hidden_size(),
            Net::Modular(n) => n.hidden_size(),
        }
    }

    /// Replace the parameter vector wholesale.
    pub fn set_theta(&mut self, theta: Vec<f64>) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(HeatError::ContractViolation(format!(
                "parameter vector has {} entries, policy has {}",
                theta.len(),
                self.theta.len()
            )));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(HeatError::ContractViolation("non-finite parameter".into()));
        }
        self.theta = theta;
        Ok(())
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        let mut p = self.clone();
        p.set_theta(theta)?;
        Ok(p)
    }

    /// Zero memory for the start of an episode.
    pub fn initial_hidden(&self) -> Vec<f64> {
        vec![0.0; self.hidden_size()]
    }

    /// Present slots (0-based) the modular network wires up for a morphology.
    /// Other architectures ignore the morphology entirely.
    fn wiring(&self, morphology_id: u64) -> Result<Vec<usize>> {
        match &self.net {
            Net::Dense(_) => Ok(Vec::new()),
            Net::Modular(n) => {
                let mask = JointMask::from_bits(morphology_id, n.slots)?;
                Ok(mask.present().iter().map(|j| j - 1).collect())
            }
        }
    }

    fn check_obs(&self, obs: usize) -> Result<()> {
        if obs >= self.sizes.obs {
            return Err(HeatError::ContractViolation(format!(
                "observation {obs} outside alphabet of {}",
                self.sizes.obs
            )));
        }
        Ok(())
    }

    /// One step from observation `obs` and the previous memory.
    pub fn step(&self, obs: usize, hidden: &[f64], morphology_id: u64) -> Result<PolicyStepOutput> {
        self.check_obs(obs)?;
        if hidden.len() != self.hidden_size() {
            return Err(HeatError::ContractViolation(format!(
                "hidden state has width {}, policy expects {}",
                hidden.len(),
                self.hidden_size()
            )));
        }
        let (logits, value_est, next_hidden) = match &self.net {
            Net::Dense(n) => n.step(&self.theta, obs, hidden),
            Net::Modular(n) => {
                let present = self.wiring(morphology_id)?;
                let (_, logits, v, next) = n.step_forward(&self.theta, obs, hidden, &present);
                (logits, v, next)
            }
        };
        let log_dist = log_softmax(&logits);
        Ok(PolicyStepOutput {
            action_dist: log_dist.iter().map(|l| l.exp()).collect(),
            log_dist,
            value_est,
            next_hidden,
        })
    }

    fn unroll(&self, theta: &[f64], observations: &[usize], present: &[usize]) -> Unrolled {
        match &self.net {
            Net::Dense(n) => Unrolled::Dense(n.forward(theta, observations)),
            Net::Modular(n) => {
                let (out, caches) = n.forward(theta, observations, present);
                Unrolled::Modular(out, caches)
            }
        }
    }

    /// Recompute memory, log-probabilities and values for a stored
    /// observation/action sequence from scratch under the current parameters.
    pub fn replay(
        &self,
        observations: &[usize],
        actions: &[usize],
        morphology_id: u64,
    ) -> Result<Replay> {
        if observations.len() != actions.len() {
            return Err(HeatError::ContractViolation(
                "observation and action counts differ".into(),
            ));
        }
        for &o in observations {
            self.check_obs(o)?;
        }
        self.check_actions(actions)?;
        let present = self.wiring(morphology_id)?;
        let out = self
            .unroll(&self.theta, observations, &present)
            .into_outputs();
        let logprobs = out
            .logits
            .iter()
            .zip(actions)
            .map(|(z, &a)| log_softmax(z)[a])
            .collect();
        let hidden = match &self.net {
            Net::Dense(n) if !n.memory => vec![Vec::new(); observations.len()],
            _ => out.hidden,
        };
        Ok(Replay {
            logprobs,
            values: out.values,
            hidden,
        })
    }

    fn check_actions(&self, actions: &[usize]) -> Result<()> {
        if let Some(&a) = actions.iter().find(|&&a| a >= self.sizes.actions) {
            return Err(HeatError::ContractViolation(format!(
                "action {a} outside {} actions",
                self.sizes.actions
            )));
        }
        Ok(())
    }

    /// Does `traj` have this policy's rollout format?
    fn check_trajectory(&self, traj: &Trajectory) -> Result<()> {
        let t = traj.observations.len();
        if traj.actions.len() != t || traj.rewards.len() != t {
            return Err(HeatError::ContractViolation(
                "trajectory sequences differ in length".into(),
            ));
        }
        for &o in &traj.observations {
            self.check_obs(o)?;
        }
        self.check_actions(&traj.actions)?;
        if traj
            .hidden_snapshots
            .iter()
            .any(|h| h.len() != self.hidden_size())
        {
            return Err(HeatError::ContractViolation(format!(
                "trajectory memory width does not match a {} policy with memory width {}",
                self.arch,
                self.hidden_size()
            )));
        }
        Ok(())
    }
}

enum Unrolled {
    Dense(StepOutputs),
    Modular(StepOutputs, Vec<modular::ModularStep>),
}

impl Unrolled {
    fn outputs(&self) -> &StepOutputs {
        match self {
            Unrolled::Dense(o) | Unrolled::Modular(o, _) => o,
        }
    }

    fn into_outputs(self) -> StepOutputs {
        match self {
            Unrolled::Dense(o) | Unrolled::Modular(o, _) => o,
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Discounted return-to-go for every step.
pub fn returns_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut g = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        g[t] = acc;
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub value_coef: f64,
    pub entropy_coef: f64,
}

impl LossConfig {
    /// Coefficient used when the entropy bonus is switched on.
    pub const ENTROPY_BONUS: f64 = 0.01;
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            value_coef: 0.5,
            entropy_coef: 0.0,
        }
    }
}

/// Loss at `theta` with the advantages held fixed.
fn loss_at(
    policy: &Policy,
    theta: &[f64],
    traj: &Trajectory,
    present: &[usize],
    adv: &[f64],
    cfg: &LossConfig,
) -> f64 {
    let out = policy
        .unroll(theta, &traj.observations, present)
        .into_outputs();
    let g = returns_to_go(&traj.rewards, traj.gamma);
    let mut loss = 0.0;
    for t in 0..traj.observations.len() {
        let lp = log_softmax(&out.logits[t]);
        loss -= adv[t] * lp[traj.actions[t]];
        loss += cfg.value_coef * (g[t] - out.values[t]).powi(2);
        if cfg.entropy_coef != 0.0 {
            let entropy: f64 = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
            loss -= cfg.entropy_coef * entropy;
        }
    }
    loss
}

/// Advantages `G_t - v_t` under the policy's current parameters.
fn advantages(traj: &Trajectory, values: &[f64]) -> Vec<f64> {
    returns_to_go(&traj.rewards, traj.gamma)
        .iter()
        .zip(values)
        .map(|(g, v)| g - v)
        .collect()
}

/// The episode loss at the policy's parameters.
pub fn episode_loss(policy: &Policy, traj: &Trajectory, cfg: &LossConfig) -> Result<f64> {
    policy.check_trajectory(traj)?;
    let present = policy.wiring(traj.morphology_id)?;
    let values = policy
        .unroll(&policy.theta, &traj.observations, &present)
        .into_outputs()
        .values;
    let adv = advantages(traj, &values);
    Ok(loss_at(policy, &policy.theta, traj, &present, &adv, cfg))
}

/// Gradient of the episode loss with respect to every parameter, through
/// the whole unrolled episode.
pub fn episode_gradient(policy: &Policy, traj: &Trajectory, cfg: &LossConfig) -> Result<Vec<f64>> {
    policy.check_trajectory(traj)?;
    let present = policy.wiring(traj.morphology_id)?;
    let theta = &policy.theta;
    let unrolled = policy.unroll(theta, &traj.observations, &present);
    let out = unrolled.outputs();
    let g = returns_to_go(&traj.rewards, traj.gamma);
    let adv = advantages(traj, &out.values);
    let n = traj.observations.len();
    let mut dz = Vec::with_capacity(n);
    let mut dv = Vec::with_capacity(n);
    for t in 0..n {
        let lp = log_softmax(&out.logits[t]);
        let pi: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
        let entropy: f64 = -pi.iter().zip(&lp).map(|(p, l)| p * l).sum::<f64>();
        let mut d: Vec<f64> = pi.iter().map(|p| adv[t] * p).collect();
        d[traj.actions[t]] -= adv[t];
        if cfg.entropy_coef != 0.0 {
            for (dj, (p, l)) in d.iter_mut().zip(pi.iter().zip(&lp)) {
                *dj += cfg.entropy_coef * p * (l + entropy);
            }
        }
        dz.push(d);
        dv.push(-2.0 * cfg.value_coef * (g[t] - out.values[t]));
    }
    Ok(match (&policy.net, &unrolled) {
        (Net::Dense(net), Unrolled::Dense(o)) => {
            net.backward(theta, &traj.observations, o, &dz, &dv)
        }
        (Net::Modular(net), Unrolled::Modular(_, caches)) => {
            net.backward(theta, caches, &present, &dz, &dv)
        }
        _ => unreachable!("unroll matches the network kind"),
    })
}

/// Central-difference gradient of `f` at `theta` on the chosen coordinates.
pub fn finite_diff_gradient(
    f: impl Fn(&[f64]) -> f64,
    theta: &[f64],
    eps: f64,
    coords: &[usize],
) -> Vec<f64> {
    let mut probe = theta.to_vec();
    coords
        .iter()
        .map(|&i| {
            probe[i] = theta[i] + eps;
            let up = f(&probe);
            probe[i] = theta[i] - eps;
            let down = f(&probe);
            probe[i] = theta[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// `max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-12)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-12))
        .fold(0.0, f64::max)
}

/// Coordinates visited by [`finite_diff_check`]: all of them for small
/// networks, otherwise a fixed seeded sample.
pub fn fd_coordinates(count: usize) -> Vec<usize> {
    if count <= FD_FULL_LIMIT {
        (0..count).collect()
    } else {
        let mut idx = sample(&mut seeded_rng(count as u64), count, FD_SUBSET).into_vec();
        idx.sort_unstable();
        idx
    }
}

/// Largest relative error between [`episode_gradient`] and central
/// differences of the loss, advantages frozen at the policy's parameters.
pub fn finite_diff_check(
    policy: &Policy,
    traj: &Trajectory,
    cfg: &LossConfig,
    eps: f64,
) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(HeatError::ContractViolation(format!(
            "eps {eps} outside [1e-7, 1e-3]"
        )));
    }
    let analytic = episode_gradient(policy, traj, cfg)?;
    let present = policy.wiring(traj.morphology_id)?;
    let values = policy
        .unroll(&policy.theta, &traj.observations, &present)
        .into_outputs()
        .values;
    let adv = advantages(traj, &values);
    let coords = fd_coordinates(policy.param_count());
    let numeric = finite_diff_gradient(
        |theta| loss_at(policy, theta, traj, &present, &adv, cfg),
        &policy.theta,
        eps,
        &coords,
    );
    let picked: Vec<f64> = coords.iter().map(|&i| analytic[i]).collect();
    Ok(max_relative_error(&picked, &numeric))
}
