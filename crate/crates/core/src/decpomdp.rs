//! Decentralized POMDPs: exact joint-policy evaluation, brute-force search
//! at toy sizes, and independent learners with an optional 1-bit channel.
//!
//! Conventions:
//!
//! - Joint actions are packed with agent 0 most significant:
//!   `joint = sum_i a_i * prod_{j > i} |A_j|`.
//! - Every agent receives a private observation of the start state before
//!   its first action (`initial_obs_models`, defaulting to one uninformative
//!   symbol), then one observation per step from `Z_i(o | s', a_i)`.
//! - A local policy is a decision tree stored depth by depth. At depth `t`
//!   the node of history `(o_0, ..., o_t)` has index
//!   `offset_t + (((o_0) * |O_i| + o_1) * |O_i| + ...) + o_t`.
//! - Brute force visits joint policies in lexicographic order of the digit
//!   string `agent 0 nodes, agent 1 nodes, ...` and keeps the first policy
//!   among values tied within `1e-12`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::check_distribution;
use crate::error::{HeatError, Result};
use crate::policy::returns_to_go;
use crate::pomdp::StandalonePomdp;
use crate::rng::{seeded_rng, stream_rng};
use crate::stats::{mean, std_err};

/// Default refusal threshold for brute-force search.
pub const DEFAULT_SEARCH_CAP: u128 = 10_000_000;
/// Values within this distance count as tied.
pub const TIE_TOL: f64 = 1e-12;
/// At most this many tied maximizers are kept (the count is always exact).
pub const MAX_KEPT_MAXIMIZERS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecPomdp {
    pub gamma: f64,
    pub initial: Vec<f64>,
    /// `|A_i|` per agent.
    pub actions: Vec<usize>,
    /// `transition[s][joint][s']`
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][joint]`
    pub reward: Vec<Vec<f64>>,
    /// `obs_models[i][s'][a_i][o]`
    pub obs_models: Vec<Vec<Vec<Vec<f64>>>>,
    /// `initial_obs_models[i][s][o]`: what agent `i` sees of the start state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_obs_models: Option<Vec<Vec<Vec<f64>>>>,
}

impl DecPomdp {
    /// Hidden coin, two agents that each see it correctly with probability
    /// 0.8, reward 1 iff both pick the coin's side. The coin never flips.
    pub fn meet_signal() -> Self {
        let noisy = |s: usize| {
            if s == 0 {
                vec![0.8, 0.2]
            } else {
                vec![0.2, 0.8]
            }
        };
        let per_agent: Vec<Vec<Vec<f64>>> = (0..2).map(|s| vec![noisy(s), noisy(s)]).collect();
        let initial_per_agent: Vec<Vec<f64>> = (0..2).map(noisy).collect();
        let reward = (0..2)
            .map(|s| (0..4).map(|j| if j == s * 3 { 1.0 } else { 0.0 }).collect())
            .collect();
        let transition = (0..2)
            .map(|s| {
                (0..4)
                    .map(|_| {
                        if s == 0 {
                            vec![1.0, 0.0]
                        } else {
                            vec![0.0, 1.0]
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            gamma: 1.0,
            initial: vec![0.5, 0.5],
            actions: vec![2, 2],
            transition,
            reward,
            obs_models: vec![per_agent.clone(), per_agent],
            initial_obs_models: Some(vec![initial_per_agent.clone(), initial_per_agent]),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dec: Self = serde_json::from_str(text)?;
        dec.validate()?;
        Ok(dec)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn n_agents(&self) -> usize {
        self.actions.len()
    }

    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    pub fn n_joint_actions(&self) -> usize {
        self.actions.iter().product()
    }

    /// `|O_i|`
    pub fn n_observations(&self, agent: usize) -> usize {
        self.obs_models[agent][0][0].len()
    }

    /// Size of agent `i`'s start-observation alphabet (1 without a model).
    pub fn n_initial_observations(&self, agent: usize) -> usize {
        match &self.initial_obs_models {
            Some(m) => m[agent][0].len(),
            None => 1,
        }
    }

    fn initial_obs_prob(&self, agent: usize, s: usize, o: usize) -> f64 {
        match &self.initial_obs_models {
            Some(m) => m[agent][s][o],
            None => 1.0,
        }
    }

    pub fn joint_index(&self, acts: &[usize]) -> usize {
        acts.iter()
            .zip(&self.actions)
            .fold(0, |acc, (&a, &n)| acc * n + a)
    }

    pub fn split_joint(&self, mut joint: usize) -> Vec<usize> {
        let mut acts = vec![0; self.n_agents()];
        for i in (0..self.n_agents()).rev() {
            acts[i] = joint % self.actions[i];
            joint /= self.actions[i];
        }
        acts
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HeatError::Malformed(m));
        let n = self.n_states();
        let na = self.n_agents();
        if n == 0 || na == 0 || self.actions.contains(&0) {
            return bad("need at least one state, agent and action per agent".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        check_distribution(&self.initial, n).or_else(|e| bad(format!("initial: {e}")))?;
        let nj = self.n_joint_actions();
        if self.transition.len() != n || self.reward.len() != n {
            return bad("transition/reward must have one entry per state".into());
        }
        for s in 0..n {
            if self.transition[s].len() != nj || self.reward[s].len() != nj {
                return bad(format!("state {s}: expected {nj} joint actions"));
            }
            for (j, row) in self.transition[s].iter().enumerate() {
                check_distribution(row, n).or_else(|e| bad(format!("T[{s}][{j}]: {e}")))?;
            }
            if self.reward[s].iter().any(|r| !r.is_finite()) {
                return bad(format!("non-finite reward in state {s}"));
            }
        }
        if self.obs_models.len() != na {
            return bad(format!(
                "{na} agents but {} observation models",
                self.obs_models.len()
            ));
        }
        for (i, z) in self.obs_models.iter().enumerate() {
            if z.len() != n || z.iter().any(|per_s| per_s.len() != self.actions[i]) {
                return bad(format!("obs_models[{i}] must be [state][own action][obs]"));
            }
            let width = z[0][0].len();
            if width == 0 {
                return bad(format!("agent {i} has no observations"));
            }
            for (s, per_s) in z.iter().enumerate() {
                for (a, row) in per_s.iter().enumerate() {
                    check_distribution(row, width)
                        .or_else(|e| bad(format!("Z_{i}[{s}][{a}]: {e}")))?;
                }
            }
        }
        if let Some(init) = &self.initial_obs_models {
            if init.len() != na {
                return bad("initial_obs_models needs one model per agent".into());
            }
            for (i, z) in init.iter().enumerate() {
                if z.len() != n || z[0].is_empty() {
                    return bad(format!("initial_obs_models[{i}] must be [state][obs]"));
                }
                let width = z[0].len();
                for (s, row) in z.iter().enumerate() {
                    check_distribution(row, width).or_else(|e| bad(format!("Z0_{i}[{s}]: {e}")))?;
                }
            }
        }
        Ok(())
    }

    /// Decision nodes of agent `i` for a horizon: `|O0_i| * sum_{t<H} |O_i|^t`.
    pub fn history_nodes(&self, agent: usize, horizon: usize) -> u128 {
        let o0 = self.n_initial_observations(agent) as u128;
        let o = self.n_observations(agent) as u128;
        (0..horizon as u32)
            .map(|t| o0.saturating_mul(o.saturating_pow(t)))
            .fold(0u128, u128::saturating_add)
    }

    /// Number of deterministic joint policies, `prod_i |A_i|^nodes_i`.
    pub fn joint_policy_count(&self, horizon: usize) -> u128 {
        (0..self.n_agents())
            .map(|i| {
                let nodes = self.history_nodes(i, horizon);
                let a = self.actions[i] as u128;
                u32::try_from(nodes)
                    .ok()
                    .and_then(|k| a.checked_pow(k))
                    .unwrap_or(u128::MAX)
            })
            .fold(1u128, u128::saturating_mul)
    }

    /// The equivalent single-agent POMDP of a one-agent instance. States are
    /// `start copies of S` followed by `(s, last action)` pairs so that the
    /// observation depends on the state alone; the agent's start observation
    /// is the start copy's emission.
    pub fn single_agent_pomdp(&self) -> Result<StandalonePomdp> {
        if self.n_agents() != 1 {
            return Err(HeatError::ContractViolation(
                "single_agent_pomdp needs exactly one agent".into(),
            ));
        }
        let n = self.n_states();
        let na = self.actions[0];
        let n_obs = self.n_observations(0).max(self.n_initial_observations(0));
        let total = n + n * na;
        let pair = |s: usize, a: usize| n + s * na + a;
        let base = |x: usize| if x < n { x } else { (x - n) / na };
        let mut transition = vec![vec![vec![0.0; total]; na]; total];
        let mut reward = vec![vec![0.0; na]; total];
        let mut observation = vec![vec![0.0; n_obs]; total];
        for (x, rows) in transition.iter_mut().enumerate() {
            let s = base(x);
            for (a, row) in rows.iter_mut().enumerate() {
                for sp in 0..n {
                    row[pair(sp, a)] = self.transition[s][a][sp];
                }
                reward[x][a] = self.reward[s][a];
            }
        }
        for s in 0..n {
            let n_init = self.n_initial_observations(0);
            for (o, slot) in observation[s].iter_mut().take(n_init).enumerate() {
                *slot = self.initial_obs_prob(0, s, o);
            }
            for a in 0..na {
                observation[pair(s, a)][..self.n_observations(0)]
                    .copy_from_slice(&self.obs_models[0][s][a]);
            }
        }
        let mut initial = vec![0.0; total];
        initial[..n].copy_from_slice(&self.initial);
        let p = StandalonePomdp {
            gamma: self.gamma,
            initial,
            transition,
            reward,
            observation,
        };
        p.validate()?;
        Ok(p)
    }
}

/// A deterministic local policy: one action per history node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LocalPolicy {
    pub agent: usize,
    pub horizon: usize,
    pub actions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointPolicy {
    pub locals: Vec<LocalPolicy>,
}

/// Node indexing for one agent's history tree.
#[derive(Debug, Clone)]
struct Tree {
    n_obs: usize,
    offsets: Vec<usize>,
}

impl Tree {
    fn new(dec: &DecPomdp, agent: usize, horizon: usize) -> Self {
        let n_obs = dec.n_observations(agent);
        let mut offsets = Vec::with_capacity(horizon + 1);
        let mut width = dec.n_initial_observations(agent);
        let mut acc = 0;
        for _ in 0..=horizon {
            offsets.push(acc);
            acc += width;
            width *= n_obs;
        }
        Self { n_obs, offsets }
    }

    fn total(&self) -> usize {
        *self.offsets.last().expect("offsets cover depth 0..=H")
    }

    fn root(&self, o0: usize) -> usize {
        o0
    }

    fn child(&self, depth: usize, node: usize, o: usize) -> usize {
        let within = node - self.offsets[depth];
        self.offsets[depth + 1] + within * self.n_obs + o
    }
}

impl LocalPolicy {
    /// The policy that always takes `action`.
    pub fn constant(dec: &DecPomdp, agent: usize, horizon: usize, action: usize) -> Self {
        let n = Tree::new(dec, agent, horizon).total();
        Self {
            agent,
            horizon,
            actions: vec![action; n],
        }
    }

    /// Build from a function of the full local history `(o_0, ..., o_t)`.
    pub fn from_fn(
        dec: &DecPomdp,
        agent: usize,
        horizon: usize,
        f: impl Fn(&[usize]) -> usize,
    ) -> Self {
        let tree = Tree::new(dec, agent, horizon);
        let mut actions = vec![0; tree.total()];
        let mut stack: Vec<(usize, usize, Vec<usize>)> = (0..dec.n_initial_observations(agent))
            .map(|o| (0, tree.root(o), vec![o]))
            .collect();
        while let Some((depth, node, hist)) = stack.pop() {
            actions[node] = f(&hist);
            if depth + 1 < horizon {
                for o in 0..tree.n_obs {
                    let mut h = hist.clone();
                    h.push(o);
                    stack.push((depth + 1, tree.child(depth, node, o), h));
                }
            }
        }
        Self {
            agent,
            horizon,
            actions,
        }
    }
}

fn check_joint(dec: &DecPomdp, jp: &JointPolicy, horizon: usize) -> Result<Vec<Tree>> {
    if horizon == 0 {
        return Err(HeatError::ContractViolation(
            "evaluate_joint needs H >= 1".into(),
        ));
    }
    if jp.locals.len() != dec.n_agents() {
        return Err(HeatError::ContractViolation(format!(
            "{} local policies for {} agents",
            jp.locals.len(),
            dec.n_agents()
        )));
    }
    let trees: Vec<Tree> = (0..dec.n_agents())
        .map(|i| Tree::new(dec, i, horizon))
        .collect();
    for (i, (lp, tree)) in jp.locals.iter().zip(&trees).enumerate() {
        if lp.actions.len() != tree.total() || lp.actions.iter().any(|&a| a >= dec.actions[i]) {
            return Err(HeatError::ContractViolation(format!(
                "local policy {i} is not a total map onto agent {i}'s actions at H={horizon}"
            )));
        }
    }
    Ok(trees)
}

/// Visit every joint observation with positive probability.
fn for_each_joint_obs(
    n_agents: usize,
    widths: impl Fn(usize) -> usize,
    prob: impl Fn(usize, usize) -> f64,
    mut f: impl FnMut(&[usize], f64),
) {
    let mut obs = vec![0usize; n_agents];
    loop {
        let p: f64 = (0..n_agents).map(|i| prob(i, obs[i])).product();
        if p > 0.0 {
            f(&obs, p);
        }
        let mut k = n_agents;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            obs[k] += 1;
            if obs[k] < widths(k) {
                break;
            }
            obs[k] = 0;
        }
    }
}

struct Evaluator<'a> {
    dec: &'a DecPomdp,
    trees: &'a [Tree],
    horizon: usize,
}

impl Evaluator<'_> {
    fn value(&self, policies: &[&[usize]], s: usize, nodes: &[usize], depth: usize) -> f64 {
        let dec = self.dec;
        let acts: Vec<usize> = nodes.iter().zip(policies).map(|(&n, p)| p[n]).collect();
        let joint = dec.joint_index(&acts);
        let mut v = dec.reward[s][joint];
        if depth + 1 == self.horizon {
            return v;
        }
        let mut future = 0.0;
        for (sp, &pt) in dec.transition[s][joint].iter().enumerate() {
            if pt == 0.0 {
                continue;
            }
            for_each_joint_obs(
                dec.n_agents(),
                |i| dec.n_observations(i),
                |i, o| dec.obs_models[i][sp][acts[i]][o],
                |obs, po| {
                    let next: Vec<usize> = (0..nodes.len())
                        .map(|i| self.trees[i].child(depth, nodes[i], obs[i]))
                        .collect();
                    future += pt * po * self.value(policies, sp, &next, depth + 1);
                },
            );
        }
        v += dec.gamma * future;
        v
    }

    fn start(&self, policies: &[&[usize]]) -> f64 {
        let dec = self.dec;
        let mut total = 0.0;
        for (s, &p0) in dec.initial.iter().enumerate() {
            if p0 == 0.0 {
                continue;
            }
            for_each_joint_obs(
                dec.n_agents(),
                |i| dec.n_initial_observations(i),
                |i, o| dec.initial_obs_prob(i, s, o),
                |obs, po| {
                    let nodes: Vec<usize> =
                        (0..obs.len()).map(|i| self.trees[i].root(obs[i])).collect();
                    total += p0 * po * self.value(policies, s, &nodes, 0);
                },
            );
        }
        total
    }
}

/// Exact expected discounted return of a deterministic joint policy.
pub fn evaluate_joint(dec: &DecPomdp, jp: &JointPolicy, horizon: usize) -> Result<f64> {
    let trees = check_joint(dec, jp, horizon)?;
    let policies: Vec<&[usize]> = jp.locals.iter().map(|l| l.actions.as_slice()).collect();
    Ok(Evaluator {
        dec,
        trees: &trees,
        horizon,
    }
    .start(&policies))
}

/// Sample one episode of a deterministic joint policy; returns the
/// discounted shared return.
pub fn simulate_joint<R: Rng + ?Sized>(
    dec: &DecPomdp,
    jp: &JointPolicy,
    horizon: usize,
    rng: &mut R,
) -> Result<f64> {
    let trees = check_joint(dec, jp, horizon)?;
    let mut s = sample(&dec.initial, rng);
    let mut nodes: Vec<usize> = (0..dec.n_agents())
        .map(|i| {
            let row: Vec<f64> = (0..dec.n_initial_observations(i))
                .map(|o| dec.initial_obs_prob(i, s, o))
                .collect();
            trees[i].root(sample(&row, rng))
        })
        .collect();
    let mut total = 0.0;
    let mut discount = 1.0;
    for depth in 0..horizon {
        let acts: Vec<usize> = nodes
            .iter()
            .zip(&jp.locals)
            .map(|(&n, l)| l.actions[n])
            .collect();
        let joint = dec.joint_index(&acts);
        total += discount * dec.reward[s][joint];
        discount *= dec.gamma;
        if depth + 1 == horizon {
            break;
        }
        s = sample(&dec.transition[s][joint], rng);
        for i in 0..nodes.len() {
            let o = sample(&dec.obs_models[i][s][acts[i]], rng);
            nodes[i] = trees[i].child(depth, nodes[i], o);
        }
    }
    Ok(total)
}

fn sample<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(dist.len() - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub value: f64,
    /// Lexicographically first optimal joint policy.
    pub best: JointPolicy,
    /// Optimal joint policies in lexicographic order, at most
    /// [`MAX_KEPT_MAXIMIZERS`] of them.
    pub maximizers: Vec<JointPolicy>,
    pub n_maximizers: u64,
    pub evaluated: u64,
}

/// Exhaustive search over every deterministic joint policy.
pub fn brute_force(dec: &DecPomdp, horizon: usize, cap: u128) -> Result<BruteForceResult> {
    if horizon == 0 {
        return Err(HeatError::ContractViolation(
            "brute_force needs H >= 1".into(),
        ));
    }
    let count = dec.joint_policy_count(horizon);
    if count > cap {
        return Err(HeatError::TooLargeForExactSearch { count, cap });
    }
    let trees: Vec<Tree> = (0..dec.n_agents())
        .map(|i| Tree::new(dec, i, horizon))
        .collect();
    let sizes: Vec<usize> = trees.iter().map(Tree::total).collect();
    let radix: Vec<usize> = (0..dec.n_agents())
        .flat_map(|i| vec![dec.actions[i]; sizes[i]])
        .collect();
    let mut digits = vec![0usize; radix.len()];
    let eval = Evaluator {
        dec,
        trees: &trees,
        horizon,
    };
    let split = |digits: &[usize]| -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(sizes.len());
        let mut at = 0;
        for &n in &sizes {
            out.push(digits[at..at + n].to_vec());
            at += n;
        }
        out
    };
    let to_joint = |parts: Vec<Vec<usize>>| JointPolicy {
        locals: parts
            .into_iter()
            .enumerate()
            .map(|(agent, actions)| LocalPolicy {
                agent,
                horizon,
                actions,
            })
            .collect(),
    };

    let mut best = f64::NEG_INFINITY;
    let mut maximizers: Vec<Vec<usize>> = Vec::new();
    let mut n_max = 0u64;
    let mut evaluated = 0u64;
    loop {
        let parts = split(&digits);
        let refs: Vec<&[usize]> = parts.iter().map(Vec::as_slice).collect();
        let v = eval.start(&refs);
        evaluated += 1;
        if v > best + TIE_TOL {
            best = v;
            maximizers.clear();
            maximizers.push(digits.clone());
            n_max = 1;
        } else if v >= best - TIE_TOL {
            n_max += 1;
            if maximizers.len() < MAX_KEPT_MAXIMIZERS {
                maximizers.push(digits.clone());
            }
        }
        // odometer, last digit fastest
        let mut k = digits.len();
        loop {
            if k == 0 {
                let maximizers: Vec<JointPolicy> =
                    maximizers.iter().map(|d| to_joint(split(d))).collect();
                return Ok(BruteForceResult {
                    value: best,
                    best: maximizers[0].clone(),
                    maximizers,
                    n_maximizers: n_max,
                    evaluated,
                });
            }
            k -= 1;
            digits[k] += 1;
            if digits[k] < radix[k] {
                break;
            }
            digits[k] = 0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtdeConfig {
    pub episodes: usize,
    pub learning_rate: f64,
    /// 0 or 1: width of the broadcast channel.
    pub message_bits: u8,
    pub seed: u64,
    pub horizon: usize,
    /// Monte-Carlo episodes for the final value estimate.
    pub eval_episodes: usize,
}

impl DtdeConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            episodes: 5000,
            learning_rate: 0.1,
            message_bits: 0,
            seed,
            horizon: 1,
            eval_episodes: 20_000,
        }
    }
}

pub const DTDE_CURVE_HEADER: &str = "episode,shared_return,agent_count,message_bits";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    pub shared_return: f64,
    pub agent_count: usize,
    pub message_bits: u8,
}

/// Independent REINFORCE learner for one agent. It sees only its own
/// history nodes, its own choices and the shared reward signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLearner {
    pub agent: usize,
    /// Local observation symbols per step (environment symbol and, with a
    /// channel, the other agents' last bits).
    pub n_symbols: usize,
    pub n_start_symbols: usize,
    /// Choices per node: own actions times broadcast values.
    pub n_choices: usize,
    /// `logits[node][choice]`
    pub logits: Vec<Vec<f64>>,
    /// Running mean of the return-to-go at each depth.
    pub baseline: Vec<f64>,
}

/// What one agent recorded during an episode.
#[derive(Debug, Clone, Default)]
pub struct LocalEpisode {
    pub nodes: Vec<usize>,
    pub choices: Vec<usize>,
}

impl LocalLearner {
    fn new(
        agent: usize,
        n_start_symbols: usize,
        n_symbols: usize,
        n_choices: usize,
        horizon: usize,
    ) -> Self {
        let mut nodes = 0;
        let mut width = n_start_symbols;
        for _ in 0..horizon {
            nodes += width;
            width *= n_symbols;
        }
        Self {
            agent,
            n_symbols,
            n_start_symbols,
            n_choices,
            logits: vec![vec![0.0; n_choices]; nodes],
            baseline: vec![0.0; horizon],
        }
    }

    fn offset(&self, depth: usize) -> usize {
        let mut acc = 0;
        let mut width = self.n_start_symbols;
        for _ in 0..depth {
            acc += width;
            width *= self.n_symbols;
        }
        acc
    }

    fn root(&self, symbol: usize) -> usize {
        symbol
    }

    fn child(&self, depth: usize, node: usize, symbol: usize) -> usize {
        self.offset(depth + 1) + (node - self.offset(depth)) * self.n_symbols + symbol
    }

    pub fn probs(&self, node: usize) -> Vec<f64> {
        crate::policy::softmax(&self.logits[node])
    }

    fn choose<R: Rng + ?Sized>(&self, node: usize, rng: &mut R) -> usize {
        sample(&self.probs(node), rng)
    }

    /// REINFORCE step from this agent's own episode and the shared rewards.
    pub fn update(
        &mut self,
        episode: &LocalEpisode,
        rewards: &[f64],
        gamma: f64,
        learning_rate: f64,
    ) {
        let to_go = returns_to_go(rewards, gamma);
        for (t, (&node, &g)) in episode.nodes.iter().zip(&to_go).enumerate() {
            let adv = g - self.baseline[t];
            let pi = self.probs(node);
            for (c, p) in pi.iter().enumerate() {
                let indicator = if c == episode.choices[t] { 1.0 } else { 0.0 };
                self.logits[node][c] += learning_rate * adv * (indicator - p);
            }
            self.baseline[t] += BASELINE_RATE * (g - self.baseline[t]);
        }
    }
}

const BASELINE_RATE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtdeOutcome {
    pub learners: Vec<LocalLearner>,
    pub curve: Vec<CurveRow>,
    pub final_value: f64,
    /// Standard error of `final_value`.
    pub final_sigma: f64,
}

struct DtdeEnv<'a> {
    dec: &'a DecPomdp,
    bits: usize,
    horizon: usize,
}

impl DtdeEnv<'_> {
    /// Symbol agent `i` sees: environment symbol, then the other agents'
    /// bits from the previous step in agent order.
    fn symbol(&self, agent: usize, env_symbol: usize, last_bits: &[usize]) -> usize {
        let mut s = env_symbol;
        if self.bits > 0 {
            for (j, &b) in last_bits.iter().enumerate() {
                if j != agent {
                    s = s * 2 + b;
                }
            }
        }
        s
    }

    fn episode<R: Rng + ?Sized>(
        &self,
        learners: &[LocalLearner],
        rng: &mut R,
    ) -> (Vec<LocalEpisode>, Vec<f64>) {
        let dec = self.dec;
        let n = dec.n_agents();
        let mut s = sample(&dec.initial, rng);
        let mut bits = vec![0usize; n];
        let mut nodes: Vec<usize> = (0..n)
            .map(|i| {
                let row: Vec<f64> = (0..dec.n_initial_observations(i))
                    .map(|o| dec.initial_obs_prob(i, s, o))
                    .collect();
                learners[i].root(self.symbol(i, sample(&row, rng), &bits))
            })
            .collect();
        let mut episodes = vec![LocalEpisode::default(); n];
        let mut rewards = Vec::with_capacity(self.horizon);
        for depth in 0..self.horizon {
            let choices: Vec<usize> = (0..n).map(|i| learners[i].choose(nodes[i], rng)).collect();
            let acts: Vec<usize> = (0..n).map(|i| choices[i] % dec.actions[i]).collect();
            for i in 0..n {
                episodes[i].nodes.push(nodes[i]);
                episodes[i].choices.push(choices[i]);
                bits[i] = choices[i] / dec.actions[i];
            }
            let joint = dec.joint_index(&acts);
            rewards.push(dec.reward[s][joint]);
            if depth + 1 == self.horizon {
                break;
            }
            s = sample(&dec.transition[s][joint], rng);
            for i in 0..n {
                let o = sample(&dec.obs_models[i][s][acts[i]], rng);
                nodes[i] = learners[i].child(depth, nodes[i], self.symbol(i, o, &bits));
            }
        }
        (episodes, rewards)
    }
}

fn discounted(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

/// Train one independent learner per agent on the shared reward, then
/// estimate the learned joint behaviour's value by simulation.
pub fn dtde_train(dec: &DecPomdp, config: &DtdeConfig) -> Result<DtdeOutcome> {
    dec.validate()?;
    if config.message_bits > 1 {
        return Err(HeatError::InvalidParams(format!(
            "message_bits must be 0 or 1, got {}",
            config.message_bits
        )));
    }
    if config.episodes == 0 || config.horizon == 0 {
        return Err(HeatError::InvalidParams(
            "episodes and horizon must be positive".into(),
        ));
    }
    if !(config.learning_rate.is_finite() && config.learning_rate >= 0.0) {
        return Err(HeatError::InvalidParams(format!(
            "bad learning rate {}",
            config.learning_rate
        )));
    }
    let n = dec.n_agents();
    let bits = config.message_bits as usize;
    let channel = 1usize << (bits * (n - 1));
    let mut learners: Vec<LocalLearner> = (0..n)
        .map(|i| {
            LocalLearner::new(
                i,
                dec.n_initial_observations(i) * channel,
                dec.n_observations(i) * channel,
                dec.actions[i] << bits,
                config.horizon,
            )
        })
        .collect();
    let env = DtdeEnv {
        dec,
        bits,
        horizon: config.horizon,
    };
    let mut rng = stream_rng(config.seed, 0);
    let mut curve = Vec::with_capacity(config.episodes);
    for episode in 0..config.episodes {
        let (local, rewards) = env.episode(&learners, &mut rng);
        for (learner, ep) in learners.iter_mut().zip(&local) {
            learner.update(ep, &rewards, dec.gamma, config.learning_rate);
        }
        curve.push(CurveRow {
            episode,
            shared_return: discounted(&rewards, dec.gamma),
            agent_count: n,
            message_bits: config.message_bits,
        });
    }
    let mut eval_rng = stream_rng(config.seed, 1);
    let returns: Vec<f64> = (0..config.eval_episodes.max(1))
        .map(|_| discounted(&env.episode(&learners, &mut eval_rng).1, dec.gamma))
        .collect();
    Ok(DtdeOutcome {
        learners,
        curve,
        final_value: mean(&returns),
        final_sigma: std_err(&returns),
    })
}

pub fn dtde_curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(DTDE_CURVE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.episode, r.shared_return, r.agent_count, r.message_bits
        ));
    }
    out
}

/// Monte-Carlo estimate `(mean, standard error)` of a deterministic joint policy.
pub fn monte_carlo_value(
    dec: &DecPomdp,
    jp: &JointPolicy,
    horizon: usize,
    episodes: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut rng = seeded_rng(seed);
    let returns = (0..episodes)
        .map(|_| simulate_joint(dec, jp, horizon, &mut rng))
        .collect::<Result<Vec<f64>>>()?;
    Ok((mean(&returns), std_err(&returns)))
}
