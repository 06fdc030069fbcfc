//! GaitChain morphology family and its compilation into tabular MDPs.
//!
//! A morphology is a set of present joint slots out of `kmax`. The body makes
//! progress by toggling its present joints in ascending order; one full pass
//! is a gait cycle and pays `cycle_reward`. The action space is the same for
//! every morphology (toggle any of the `kmax` slots, or do nothing), so
//! trajectories from different bodies share a format but not a meaning.
//!
//! State layout: `state = cursor * N_OUTCOMES + outcome`, where `outcome` is
//! the result of the previous action. The outcome is the only thing a policy
//! ever observes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HeatError, Result};

/// Largest supported slot count; masks are stored as `u64` bit sets.
pub const MAX_KMAX: usize = 32;

/// Stochasticity tolerance for transition rows.
pub const ROW_TOL: f64 = 1e-12;

/// Result of the previous action, folded into the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Idle = 0,
    Failed = 1,
    Reset = 2,
    Advanced = 3,
    Cycle = 4,
}

pub const N_OUTCOMES: usize = 5;

impl Outcome {
    pub const ALL: [Outcome; N_OUTCOMES] = [
        Outcome::Idle,
        Outcome::Failed,
        Outcome::Reset,
        Outcome::Advanced,
        Outcome::Cycle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Idle => "idle",
            Outcome::Failed => "failed",
            Outcome::Reset => "reset",
            Outcome::Advanced => "advanced",
            Outcome::Cycle => "cycle",
        }
    }
}

pub fn state_index(cursor: usize, outcome: Outcome) -> usize {
    cursor * N_OUTCOMES + outcome.index()
}

pub fn decode_state(state: usize) -> (usize, Outcome) {
    (
        state / N_OUTCOMES,
        Outcome::from_index(state % N_OUTCOMES).expect("mod N_OUTCOMES"),
    )
}

/// Observation symbol emitted by a GaitChain state (its outcome).
pub fn observe(state: usize) -> usize {
    state % N_OUTCOMES
}

/// Action index for "toggle slot `slot`" (slots are 1-based).
pub fn toggle_action(slot: usize) -> usize {
    slot - 1
}

/// The no-op action is always last.
pub fn noop_action(kmax: usize) -> usize {
    kmax
}

/// A morphology: the ascending list of present joint slots in `1..=kmax`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JointMask {
    present: Vec<usize>,
    kmax: usize,
}

impl JointMask {
    pub fn new(present: Vec<usize>, kmax: usize) -> Result<Self> {
        if kmax == 0 || kmax > MAX_KMAX {
            return Err(HeatError::InvalidMask(format!(
                "kmax must be in 1..={MAX_KMAX}, got {kmax}"
            )));
        }
        if present.is_empty() {
            return Err(HeatError::InvalidMask("mask is empty".into()));
        }
        if present.iter().any(|&j| j == 0 || j > kmax) {
            return Err(HeatError::InvalidMask(format!(
                "slots must lie in 1..={kmax}: {present:?}"
            )));
        }
        if present.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HeatError::InvalidMask(format!(
                "slots must be strictly increasing: {present:?}"
            )));
        }
        Ok(Self { present, kmax })
    }

    /// Mask from a bit set where bit `j - 1` marks slot `j` present.
    pub fn from_bits(bits: u64, kmax: usize) -> Result<Self> {
        if kmax == 0 || kmax > MAX_KMAX {
            return Err(HeatError::InvalidMask(format!(
                "kmax must be in 1..={MAX_KMAX}, got {kmax}"
            )));
        }
        if bits >> kmax != 0 {
            return Err(HeatError::InvalidMask(format!(
                "bits {bits:#b} exceed kmax={kmax}"
            )));
        }
        let present = (1..=kmax).filter(|j| bits >> (j - 1) & 1 == 1).collect();
        Self::new(present, kmax)
    }

    pub fn bits(&self) -> u64 {
        self.present.iter().fold(0u64, |acc, j| acc | 1 << (j - 1))
    }

    pub fn present(&self) -> &[usize] {
        &self.present
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    pub fn len(&self) -> usize {
        self.present.len()
    }

    pub fn is_empty(&self) -> bool {
        self.present.is_empty()
    }

    pub fn contains(&self, slot: usize) -> bool {
        self.present.binary_search(&slot).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitChainParams {
    pub kmax: usize,
    pub fail_prob: f64,
    pub reset_penalty: f64,
    pub cycle_reward: f64,
    pub gamma: f64,
    pub episode_len: usize,
}

impl GaitChainParams {
    pub fn new(kmax: usize) -> Self {
        Self {
            kmax,
            fail_prob: 0.1,
            reset_penalty: 0.0,
            cycle_reward: 1.0,
            gamma: 0.95,
            episode_len: 100,
        }
    }

    // gamma = 1 is accepted: every horizon here is finite.
    pub fn validate(&self) -> Result<()> {
        if self.kmax == 0 || self.kmax > MAX_KMAX {
            return Err(HeatError::InvalidParams(format!(
                "kmax must be in 1..={MAX_KMAX}"
            )));
        }
        if !(0.0..1.0).contains(&self.fail_prob) {
            return Err(HeatError::InvalidParams(format!(
                "fail_prob must be in [0, 1), got {}",
                self.fail_prob
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(HeatError::InvalidParams(format!(
                "gamma must be in [0, 1], got {}",
                self.gamma
            )));
        }
        if self.episode_len == 0 {
            return Err(HeatError::InvalidParams("episode_len must be >= 1".into()));
        }
        if !self.reset_penalty.is_finite() || !self.cycle_reward.is_finite() {
            return Err(HeatError::InvalidParams("rewards must be finite".into()));
        }
        Ok(())
    }
}

/// Explicit finite MDP for one morphology.
///
/// Transitions are kept dense (`[s][a][s']`, row-major) plus a sparse
/// successor list per `(s, a)` for the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    successors: Vec<Vec<(usize, f64)>>,
    reward: Vec<f64>,
    gamma: f64,
    initial_state: usize,
    morphology_id: u64,
}

impl TabularMdp {
    /// `transition[s][a][s']` and `reward[s][a]`.
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        gamma: f64,
        initial_state: usize,
        morphology_id: u64,
    ) -> Result<Self> {
        let n_states = transition.len();
        if n_states == 0 {
            return Err(HeatError::Malformed("MDP has no states".into()));
        }
        let n_actions = transition[0].len();
        if n_actions == 0 {
            return Err(HeatError::Malformed("MDP has no actions".into()));
        }
        if reward.len() != n_states {
            return Err(HeatError::Malformed(format!(
                "reward has {} rows, expected {n_states}",
                reward.len()
            )));
        }
        if initial_state >= n_states {
            return Err(HeatError::Malformed(format!(
                "initial state {initial_state} out of range"
            )));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(HeatError::Malformed(format!(
                "gamma {gamma} outside [0, 1]"
            )));
        }
        let mut flat = Vec::with_capacity(n_states * n_actions * n_states);
        let mut flat_reward = Vec::with_capacity(n_states * n_actions);
        for (s, (rows, rs)) in transition.iter().zip(&reward).enumerate() {
            if rows.len() != n_actions || rs.len() != n_actions {
                return Err(HeatError::Malformed(format!(
                    "state {s}: expected {n_actions} actions"
                )));
            }
            for (a, row) in rows.iter().enumerate() {
                check_distribution(row, n_states)
                    .map_err(|e| HeatError::Malformed(format!("T[{s}][{a}]: {e}")))?;
                flat.extend_from_slice(row);
                if !rs[a].is_finite() {
                    return Err(HeatError::Malformed(format!("R[{s}][{a}] is not finite")));
                }
                flat_reward.push(rs[a]);
            }
        }
        let successors = flat
            .chunks(n_states)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(s, &p)| (s, p))
                    .collect()
            })
            .collect();
        Ok(Self {
            n_states,
            n_actions,
            transition: flat,
            successors,
            reward: flat_reward,
            gamma,
            initial_state,
            morphology_id,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn morphology_id(&self) -> u64 {
        self.morphology_id
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.row(s, a)[next]
    }

    /// Nonzero entries of `T[s][a]` in ascending successor order.
    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.successors[s * self.n_actions + a]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    fn check_indices(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(HeatError::ContractViolation(format!(
                "state {s} out of range (n_states={})",
                self.n_states
            )));
        }
        if a >= self.n_actions {
            return Err(HeatError::ContractViolation(format!(
                "action {a} out of range (n_actions={})",
                self.n_actions
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_distribution(row: &[f64], len: usize) -> std::result::Result<(), String> {
    if row.len() != len {
        return Err(format!("length {} != {len}", row.len()));
    }
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err("negative or non-finite probability".into());
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOL {
        return Err(format!("sums to {sum}"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyManifest {
    pub kmax: usize,
    pub params: GaitChainParams,
    pub train_masks: Vec<JointMask>,
    pub eval_masks: Vec<JointMask>,
    pub seed: u64,
}

/// On-disk form: masks as plain integer arrays, keys in declaration order.
#[derive(Serialize, Deserialize)]
struct ManifestFile {
    kmax: usize,
    params: GaitChainParams,
    train_masks: Vec<Vec<usize>>,
    eval_masks: Vec<Vec<usize>>,
    seed: u64,
}

impl FamilyManifest {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.params.kmax != self.kmax {
            return Err(HeatError::InvalidParams(format!(
                "params.kmax={} != kmax={}",
                self.params.kmax, self.kmax
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for m in self.train_masks.iter().chain(&self.eval_masks) {
            if m.kmax() != self.kmax {
                return Err(HeatError::InvalidMask(format!(
                    "mask {:?} has kmax {} in a kmax={} family",
                    m.present(),
                    m.kmax(),
                    self.kmax
                )));
            }
            if !seen.insert(m.bits()) {
                return Err(HeatError::InvalidMask(format!(
                    "mask {:?} appears more than once",
                    m.present()
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ManifestFile {
            kmax: self.kmax,
            params: self.params.clone(),
            train_masks: self
                .train_masks
                .iter()
                .map(|m| m.present().to_vec())
                .collect(),
            eval_masks: self
                .eval_masks
                .iter()
                .map(|m| m.present().to_vec())
                .collect(),
            seed: self.seed,
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ManifestFile = serde_json::from_str(text)?;
        let to_masks = |v: Vec<Vec<usize>>| -> Result<Vec<JointMask>> {
            v.into_iter()
                .map(|p| JointMask::new(p, file.kmax))
                .collect()
        };
        let manifest = Self {
            kmax: file.kmax,
            params: file.params,
            train_masks: to_masks(file.train_masks)?,
            eval_masks: to_masks(file.eval_masks)?,
            seed: file.seed,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn compile_train(&self) -> Result<Vec<TabularMdp>> {
        self.train_masks
            .iter()
            .map(|m| compile_mdp(m, &self.params))
            .collect()
    }

    pub fn compile_eval(&self) -> Result<Vec<TabularMdp>> {
        self.eval_masks
            .iter()
            .map(|m| compile_mdp(m, &self.params))
            .collect()
    }
}

/// Sample `n_train + n_eval` distinct non-empty masks uniformly without
/// replacement; the first `n_train` form the training split.
pub fn generate_family(
    kmax: usize,
    n_train: usize,
    n_eval: usize,
    seed: u64,
) -> Result<FamilyManifest> {
    if kmax == 0 || kmax > MAX_KMAX {
        return Err(HeatError::InvalidParams(format!(
            "kmax must be in 1..={MAX_KMAX}, got {kmax}"
        )));
    }
    let available = (1u128 << kmax) - 1;
    let requested = n_train + n_eval;
    if requested as u128 > available {
        return Err(HeatError::FamilyTooLarge {
            kmax,
            requested,
            available,
        });
    }
    let mut rng = crate::rng::seeded_rng(seed);
    let picks = rand::seq::index::sample(&mut rng, available as usize, requested);
    let masks = picks
        .into_iter()
        .map(|i| JointMask::from_bits(i as u64 + 1, kmax))
        .collect::<Result<Vec<_>>>()?;
    let (train, eval) = masks.split_at(n_train);
    Ok(FamilyManifest {
        kmax,
        params: GaitChainParams::new(kmax),
        train_masks: train.to_vec(),
        eval_masks: eval.to_vec(),
        seed,
    })
}

/// Compile one morphology into its tabular MDP. The morphology id is the
/// mask's bit set.
pub fn compile_mdp(mask: &JointMask, params: &GaitChainParams) -> Result<TabularMdp> {
    params.validate()?;
    if mask.kmax() != params.kmax {
        return Err(HeatError::InvalidMask(format!(
            "mask kmax {} != params kmax {}",
            mask.kmax(),
            params.kmax
        )));
    }
    let k = mask.len();
    let n_states = k * N_OUTCOMES;
    let n_actions = params.kmax + 1;
    let eps = params.fail_prob;

    let mut transition = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    let mut reward = vec![vec![0.0; n_actions]; n_states];
    for s in 0..n_states {
        let (c, _) = decode_state(s);
        for a in 0..n_actions {
            let row = &mut transition[s][a];
            if a == noop_action(params.kmax) {
                row[state_index(c, Outcome::Idle)] = 1.0;
                continue;
            }
            let slot = a + 1;
            if !mask.contains(slot) {
                row[state_index(c, Outcome::Failed)] = 1.0;
            } else if slot == mask.present()[c] {
                let advanced = if c + 1 == k {
                    reward[s][a] = (1.0 - eps) * params.cycle_reward;
                    state_index(0, Outcome::Cycle)
                } else {
                    state_index(c + 1, Outcome::Advanced)
                };
                row[advanced] += 1.0 - eps;
                row[state_index(c, Outcome::Failed)] += eps;
            } else {
                row[state_index(0, Outcome::Reset)] = 1.0;
                reward[s][a] = params.reset_penalty;
            }
        }
    }
    TabularMdp::new(
        transition,
        reward,
        params.gamma,
        state_index(0, Outcome::Idle),
        mask.bits(),
    )
}

/// Sample one transition. The reward is the tabulated `R(s, a)`.
pub fn mdp_step<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    s: usize,
    a: usize,
    rng: &mut R,
) -> Result<(usize, f64)> {
    mdp.check_indices(s, a)?;
    let succ = mdp.successors(s, a);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut next = succ[succ.len() - 1].0;
    for &(sp, p) in succ {
        acc += p;
        if u < acc {
            next = sp;
            break;
        }
    }
    Ok((next, mdp.reward(s, a)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpSolution {
    /// Optimal value from the initial state.
    pub value: f64,
    /// `values[t][s]`: optimal value with `horizon - t` steps to go.
    pub values: Vec<Vec<f64>>,
    /// `policy[t][s]`: greedy action at stage `t`, lowest index on ties.
    pub policy: Vec<Vec<usize>>,
}

/// Finite-horizon discounted optimum by backward induction.
pub fn dp_optimal_value(mdp: &TabularMdp, horizon: usize) -> DpSolution {
    let n = mdp.n_states();
    let mut values = vec![vec![0.0; n]; horizon + 1];
    let mut policy = vec![vec![0; n]; horizon];
    for t in (0..horizon).rev() {
        let (now, later) = values.split_at_mut(t + 1);
        let next = &later[0];
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..mdp.n_actions() {
                let future: f64 = mdp
                    .successors(s, a)
                    .iter()
                    .map(|&(sp, p)| p * next[sp])
                    .sum();
                let q = mdp.reward(s, a) + mdp.gamma() * future;
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            now[t][s] = best;
            policy[t][s] = best_a;
        }
    }
    DpSolution {
        value: values[0][mdp.initial_state()],
        values,
        policy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    fn mask(p: &[usize], kmax: usize) -> JointMask {
        JointMask::new(p.to_vec(), kmax).unwrap()
    }

    fn params(kmax: usize, eps: f64, gamma: f64) -> GaitChainParams {
        GaitChainParams {
            fail_prob: eps,
            gamma,
            ..GaitChainParams::new(kmax)
        }
    }

    #[test]
    fn mask_invariants() {
        assert!(JointMask::new(vec![], 3).is_err());
        assert!(JointMask::new(vec![2, 1], 3).is_err());
        assert!(JointMask::new(vec![1, 1], 3).is_err());
        assert!(JointMask::new(vec![4], 3).is_err());
        assert!(JointMask::new(vec![0], 3).is_err());
        let m = mask(&[1, 3], 5);
        assert_eq!(m.bits(), 0b101);
        assert_eq!(JointMask::from_bits(0b101, 5).unwrap(), m);
        assert!(JointMask::from_bits(0, 5).is_err());
        assert!(JointMask::from_bits(0b100000, 5).is_err());
    }

    #[test]
    fn twelve_train_five_held_out_family() {
        let f = generate_family(5, 12, 5, 7).unwrap();
        assert_eq!(f.train_masks.len(), 12);
        assert_eq!(f.eval_masks.len(), 5);
        f.validate().unwrap();
    }

    #[test]
    fn single_slot_family() {
        let f = generate_family(1, 1, 0, 0).unwrap();
        assert_eq!(f.train_masks, vec![mask(&[1], 1)]);
        assert!(f.eval_masks.is_empty());
    }

    #[test]
    fn exhaustive_family_covers_every_subset() {
        let f = generate_family(3, 7, 0, 3).unwrap();
        let mut got: Vec<u64> = f.train_masks.iter().map(JointMask::bits).collect();
        got.sort_unstable();
        // every non-empty subset of {1,2,3}, enumerated independently
        let mut want = Vec::new();
        for a in [false, true] {
            for b in [false, true] {
                for c in [false, true] {
                    let bits = a as u64 | (b as u64) << 1 | (c as u64) << 2;
                    if bits != 0 {
                        want.push(bits);
                    }
                }
            }
        }
        want.sort_unstable();
        assert_eq!(got, want);
    }

    #[test]
    fn family_too_large() {
        let err = generate_family(3, 6, 2, 0).unwrap_err();
        assert!(matches!(
            err,
            HeatError::FamilyTooLarge {
                available: 7,
                requested: 8,
                ..
            }
        ));
        assert!(err.to_string().contains("family too large for kmax"));
    }

    #[test]
    fn family_is_seed_deterministic() {
        assert_eq!(
            generate_family(5, 12, 5, 9).unwrap(),
            generate_family(5, 12, 5, 9).unwrap()
        );
        assert_ne!(
            generate_family(5, 12, 5, 9).unwrap(),
            generate_family(5, 12, 5, 10).unwrap()
        );
    }

    #[test]
    fn manifest_json_roundtrip_and_key_order() {
        let f = generate_family(5, 12, 5, 7).unwrap();
        let text = f.to_json().unwrap();
        let keys = [
            "\"kmax\"",
            "\"params\"",
            "\"train_masks\"",
            "\"eval_masks\"",
            "\"seed\"",
        ];
        let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{text}");
        assert_eq!(FamilyManifest::from_json(&text).unwrap(), f);
    }

    #[test]
    fn manifest_rejects_overlapping_splits() {
        let mut f = generate_family(3, 2, 1, 1).unwrap();
        f.eval_masks[0] = f.train_masks[0].clone();
        assert!(FamilyManifest::from_json(&f.to_json().unwrap()).is_err());
    }

    #[test]
    fn single_joint_sizes() {
        let mdp = compile_mdp(&mask(&[1], 1), &GaitChainParams::new(1)).unwrap();
        assert_eq!(mdp.n_states(), 5);
        assert_eq!(mdp.n_actions(), 2);
    }

    #[test]
    fn correct_joint_transition() {
        let mdp = compile_mdp(&mask(&[1, 3], 5), &params(5, 0.1, 0.95)).unwrap();
        let s0 = state_index(0, Outcome::Idle);
        let a = toggle_action(1);
        assert_eq!(mdp.prob(s0, a, state_index(1, Outcome::Advanced)), 0.9);
        assert_eq!(mdp.prob(s0, a, state_index(0, Outcome::Failed)), 0.1);
        assert_eq!(mdp.successors(s0, a).len(), 2);
        assert_eq!(mdp.reward(s0, a), 0.0);
    }

    #[test]
    fn absent_and_wrong_joints() {
        let p = GaitChainParams {
            reset_penalty: -0.5,
            ..params(5, 0.1, 0.95)
        };
        let mdp = compile_mdp(&mask(&[1, 3], 5), &p).unwrap();
        for c in 0..2 {
            let s = state_index(c, Outcome::Advanced);
            // slot 2 is absent
            assert_eq!(
                mdp.successors(s, toggle_action(2)),
                &[(state_index(c, Outcome::Failed), 1.0)]
            );
            assert_eq!(mdp.reward(s, toggle_action(2)), 0.0);
            assert_eq!(
                mdp.successors(s, noop_action(5)),
                &[(state_index(c, Outcome::Idle), 1.0)]
            );
        }
        // slot 3 present but wrong at cursor 0
        let s0 = state_index(0, Outcome::Idle);
        assert_eq!(
            mdp.successors(s0, toggle_action(3)),
            &[(state_index(0, Outcome::Reset), 1.0)]
        );
        assert_eq!(mdp.reward(s0, toggle_action(3)), -0.5);
        // last joint completes the cycle
        let s1 = state_index(1, Outcome::Advanced);
        assert_eq!(
            mdp.prob(s1, toggle_action(3), state_index(0, Outcome::Cycle)),
            0.9
        );
        assert!((mdp.reward(s1, toggle_action(3)) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn step_wraps_single_joint_cycle() {
        let mdp = compile_mdp(&mask(&[1], 1), &params(1, 0.0, 0.95)).unwrap();
        let mut rng = seeded_rng(0);
        for _ in 0..10 {
            let (next, r) = mdp_step(&mdp, 0, toggle_action(1), &mut rng).unwrap();
            assert_eq!(next, state_index(0, Outcome::Cycle));
            assert_eq!(r, 1.0);
        }
    }

    #[test]
    fn step_deterministic_row() {
        let mdp = compile_mdp(&mask(&[2], 3), &GaitChainParams::new(3)).unwrap();
        let mut rng = seeded_rng(1);
        for _ in 0..50 {
            assert_eq!(mdp_step(&mdp, 0, noop_action(3), &mut rng).unwrap().0, 0);
        }
    }

    #[test]
    fn step_rejects_bad_indices() {
        let mdp = compile_mdp(&mask(&[1], 1), &GaitChainParams::new(1)).unwrap();
        let mut rng = seeded_rng(0);
        assert!(matches!(
            mdp_step(&mdp, 5, 0, &mut rng),
            Err(HeatError::ContractViolation(_))
        ));
        assert!(matches!(
            mdp_step(&mdp, 0, 2, &mut rng),
            Err(HeatError::ContractViolation(_))
        ));
    }

    #[test]
    fn step_frequencies_match_row() {
        let mdp = compile_mdp(&mask(&[1, 3], 5), &params(5, 0.1, 0.95)).unwrap();
        let mut rng = seeded_rng(42);
        let n = 100_000;
        let adv = state_index(1, Outcome::Advanced);
        let hits = (0..n)
            .filter(|_| mdp_step(&mdp, 0, 0, &mut rng).unwrap().0 == adv)
            .count();
        assert!((hits as f64 / n as f64 - 0.9).abs() < 0.01);
    }

    #[test]
    fn dp_small_values() {
        let mdp = compile_mdp(&mask(&[1], 1), &params(1, 0.1, 1.0)).unwrap();
        assert_eq!(dp_optimal_value(&mdp, 0).value, 0.0);
        let sol = dp_optimal_value(&mdp, 3);
        assert!((sol.value - 2.7).abs() < 1e-12);
        assert!(sol.policy.iter().all(|stage| stage[0] == toggle_action(1)));
    }

    #[test]
    fn dp_horizon_one_is_best_immediate_reward() {
        let mdp = compile_mdp(&mask(&[2, 3], 3), &params(3, 0.2, 0.9)).unwrap();
        let s0 = mdp.initial_state();
        let best = (0..mdp.n_actions())
            .map(|a| mdp.reward(s0, a))
            .fold(f64::MIN, f64::max);
        assert_eq!(dp_optimal_value(&mdp, 1).value, best);
    }

    #[test]
    fn dp_ties_pick_lowest_action() {
        // every action is worth zero at horizon 1 from the idle start of a 2-joint chain
        let mdp = compile_mdp(&mask(&[1, 2], 2), &params(2, 0.1, 0.9)).unwrap();
        assert_eq!(dp_optimal_value(&mdp, 1).policy[0][0], 0);
    }

    #[test]
    fn rejects_malformed_tables() {
        assert!(
            TabularMdp::new(vec![vec![vec![0.5, 0.4]]; 2], vec![vec![0.0]; 2], 0.9, 0, 0).is_err()
        );
        assert!(
            TabularMdp::new(vec![vec![vec![1.0, 0.0]]; 2], vec![vec![0.0]; 1], 0.9, 0, 0).is_err()
        );
        assert!(TabularMdp::new(
            vec![vec![vec![1.0, 0.0]]; 2],
            vec![vec![f64::NAN]; 2],
            0.9,
            0,
            0
        )
        .is_err());
        assert!(
            TabularMdp::new(vec![vec![vec![1.0, 0.0]]; 2], vec![vec![0.0]; 2], 0.9, 2, 0).is_err()
        );
    }
}
