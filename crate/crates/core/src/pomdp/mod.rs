//! The latent-morphology POMDP.
//!
//! A composite stacks the per-morphology MDPs into one global state space:
//! global state `offsets[i] + s` is local state `s` of component `i`. The
//! component index never changes during an episode, so the transition matrix
//! is block diagonal and the morphology is only learnable through the shared
//! observation model, which is conditioned on the successor state.

mod solver;
mod standalone;

pub use solver::{
    decide_threshold, exact_value, exact_value_observed_start, exact_value_with, observe_start,
    solve_observable, ExactSolution, SolverOptions, ThresholdQuery, DECISION_SLACK,
};
pub use standalone::{embed_pomdp, StandalonePomdp};

use crate::env::{check_distribution, observe, TabularMdp, N_OUTCOMES};
use crate::error::{HeatError, Result};

pub const BELIEF_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CompositePomdp {
    components: Vec<TabularMdp>,
    prior: Vec<f64>,
    obs_model: Vec<Vec<f64>>,
    n_obs: usize,
    n_actions: usize,
    gamma: f64,
    offsets: Vec<usize>,
    initial: Belief,
}

/// Probability vector over the global states of a composite.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    probs: Vec<f64>,
}

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(HeatError::ContractViolation(
                "belief has negative or non-finite entries".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > BELIEF_TOL {
            return Err(HeatError::ContractViolation(format!(
                "belief sums to {sum}"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

fn validate_prior(prior: &[f64], n: usize) -> Result<()> {
    check_distribution(prior, n)
        .map_err(|e| HeatError::IncompatibleComponents(format!("prior: {e}")))
}

fn validate_components(mdps: &[TabularMdp]) -> Result<()> {
    let first = mdps
        .first()
        .ok_or_else(|| HeatError::IncompatibleComponents("no components".into()))?;
    for (i, m) in mdps.iter().enumerate() {
        if m.n_actions() != first.n_actions() {
            return Err(HeatError::IncompatibleComponents(format!(
                "component {i} has {} actions, component 0 has {}",
                m.n_actions(),
                first.n_actions()
            )));
        }
        if m.gamma() != first.gamma() {
            return Err(HeatError::IncompatibleComponents(format!(
                "component {i} has gamma {}, component 0 has {}",
                m.gamma(),
                first.gamma()
            )));
        }
    }
    Ok(())
}

/// Build the composite from per-morphology MDPs, a prior over them, and an
/// observation distribution for every global state (components concatenated
/// in order).
pub fn compose(
    mdps: Vec<TabularMdp>,
    prior: Vec<f64>,
    obs_map: Vec<Vec<f64>>,
) -> Result<CompositePomdp> {
    validate_components(&mdps)?;
    validate_prior(&prior, mdps.len())?;
    let mut offsets = Vec::with_capacity(mdps.len() + 1);
    let mut total = 0;
    for m in &mdps {
        offsets.push(total);
        total += m.n_states();
    }
    offsets.push(total);
    if obs_map.len() != total {
        return Err(HeatError::Malformed(format!(
            "observation model has {} rows, composite has {total} states",
            obs_map.len()
        )));
    }
    let n_obs = obs_map[0].len();
    if n_obs == 0 {
        return Err(HeatError::Malformed("empty observation alphabet".into()));
    }
    for (g, row) in obs_map.iter().enumerate() {
        check_distribution(row, n_obs)
            .map_err(|e| HeatError::Malformed(format!("observation row {g}: {e}")))?;
    }
    let mut init = vec![0.0; total];
    for (i, m) in mdps.iter().enumerate() {
        init[offsets[i] + m.initial_state()] += prior[i];
    }
    Ok(CompositePomdp {
        n_actions: mdps[0].n_actions(),
        gamma: mdps[0].gamma(),
        components: mdps,
        prior,
        obs_model: obs_map,
        n_obs,
        offsets,
        initial: Belief { probs: init },
    })
}

/// GaitChain observation model: every state emits its outcome symbol.
pub fn outcome_observations(mdps: &[TabularMdp]) -> Vec<Vec<f64>> {
    mdps.iter()
        .flat_map(|m| 0..m.n_states())
        .map(|s| one_hot(observe(s), N_OUTCOMES))
        .collect()
}

/// Observation model that reveals the outcome and the morphology index.
pub fn morphology_outcome_observations(mdps: &[TabularMdp]) -> Vec<Vec<f64>> {
    let n_obs = mdps.len() * N_OUTCOMES;
    mdps.iter()
        .enumerate()
        .flat_map(|(i, m)| (0..m.n_states()).map(move |s| (i, s)))
        .map(|(i, s)| one_hot(i * N_OUTCOMES + observe(s), n_obs))
        .collect()
}

/// Identity observation model over global states.
pub fn revealing_observations(mdps: &[TabularMdp]) -> Vec<Vec<f64>> {
    let total: usize = mdps.iter().map(TabularMdp::n_states).sum();
    (0..total).map(|g| one_hot(g, total)).collect()
}

fn one_hot(i: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

impl CompositePomdp {
    pub fn n_states(&self) -> usize {
        *self.offsets.last().expect("offsets has n+1 entries")
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_observations(&self) -> usize {
        self.n_obs
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn components(&self) -> &[TabularMdp] {
        &self.components
    }

    /// Global index range of component `i`.
    pub fn block(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn locate(&self, global: usize) -> (usize, usize) {
        let i = self.offsets.partition_point(|&o| o <= global) - 1;
        (i, global - self.offsets[i])
    }

    pub fn initial_belief(&self) -> &Belief {
        &self.initial
    }

    pub fn reward(&self, global: usize, a: usize) -> f64 {
        let (i, s) = self.locate(global);
        self.components[i].reward(s, a)
    }

    pub fn transition(&self, global: usize, a: usize, next: usize) -> f64 {
        let (i, s) = self.locate(global);
        let (j, sp) = self.locate(next);
        if i != j {
            return 0.0;
        }
        self.components[i].prob(s, a, sp)
    }

    pub fn obs_prob(&self, global: usize, o: usize) -> f64 {
        self.obs_model[global][o]
    }

    pub fn obs_row(&self, global: usize) -> &[f64] {
        &self.obs_model[global]
    }

    /// Probability mass per component.
    pub fn component_mass(&self, b: &Belief) -> Vec<f64> {
        (0..self.n_components())
            .map(|i| b.probs[self.block(i)].iter().sum())
            .collect()
    }

    fn check_belief(&self, b: &Belief) -> Result<()> {
        if b.len() != self.n_states() {
            return Err(HeatError::ContractViolation(format!(
                "belief has {} entries, composite has {} states",
                b.len(),
                self.n_states()
            )));
        }
        Ok(())
    }

    /// Expected immediate reward of `a` under belief `probs`.
    pub(crate) fn expected_reward(&self, probs: &[f64], a: usize) -> f64 {
        let mut r = 0.0;
        for (i, m) in self.components.iter().enumerate() {
            let off = self.offsets[i];
            for s in 0..m.n_states() {
                let p = probs[off + s];
                if p > 0.0 {
                    r += p * m.reward(s, a);
                }
            }
        }
        r
    }

    /// `out[s'] = sum_s T(s'|s,a) b(s)`; stays inside each component block.
    pub(crate) fn predict_into(&self, probs: &[f64], a: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (i, m) in self.components.iter().enumerate() {
            let off = self.offsets[i];
            for s in 0..m.n_states() {
                let p = probs[off + s];
                if p > 0.0 {
                    for &(sp, t) in m.successors(s, a) {
                        out[off + sp] += p * t;
                    }
                }
            }
        }
    }

    /// Unnormalized posterior `out[s'] = Omega(o|s') pred[s']`; returns its sum.
    pub(crate) fn condition_into(&self, pred: &[f64], o: usize, out: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for (g, (x, &p)) in out.iter_mut().zip(pred).enumerate() {
            *x = if p > 0.0 {
                p * self.obs_model[g][o]
            } else {
                0.0
            };
            total += *x;
        }
        total
    }
}

/// Bayes filter step. Returns the posterior and `Pr(o | b, a)`.
pub fn belief_update(p: &CompositePomdp, b: &Belief, a: usize, o: usize) -> Result<(Belief, f64)> {
    p.check_belief(b)?;
    if a >= p.n_actions() {
        return Err(HeatError::ContractViolation(format!(
            "action {a} out of range"
        )));
    }
    if o >= p.n_observations() {
        return Err(HeatError::ContractViolation(format!(
            "observation {o} out of range"
        )));
    }
    let n = p.n_states();
    let mut pred = vec![0.0; n];
    p.predict_into(&b.probs, a, &mut pred);
    let mut post = vec![0.0; n];
    let likelihood = p.condition_into(&pred, o, &mut post);
    if likelihood <= 0.0 {
        return Err(HeatError::InconsistentObservation {
            action: a,
            observation: o,
        });
    }
    post.iter_mut().for_each(|x| *x /= likelihood);
    Ok((Belief { probs: post }, likelihood))
}
