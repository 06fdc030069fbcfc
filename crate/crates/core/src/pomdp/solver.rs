use std::collections::HashMap;

use super::{validate_components, validate_prior, Belief, CompositePomdp};
use crate::env::{dp_optimal_value, TabularMdp};
use crate::error::{HeatError, Result};

/// Slack used when comparing a value against a threshold.
pub const DECISION_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default)]
pub struct SolverOptions {
    /// Cache subtree values keyed by (belief rounded to 1e-12, depth).
    /// Off by default so memory stays proportional to the search depth.
    pub memoize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub value: f64,
    /// Optimal first action (lowest index among ties); `None` when `H = 0`.
    pub first_action: Option<usize>,
    /// Belief nodes expanded by the search.
    pub nodes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdQuery {
    horizon: usize,
    threshold: f64,
}

impl ThresholdQuery {
    pub fn new(horizon: usize, threshold: f64) -> Result<Self> {
        if horizon == 0 {
            return Err(HeatError::ContractViolation(
                "threshold query needs H >= 1".into(),
            ));
        }
        if threshold.is_nan() {
            return Err(HeatError::ContractViolation("threshold is NaN".into()));
        }
        Ok(Self { horizon, threshold })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

struct Search<'a> {
    p: &'a CompositePomdp,
    memo: Option<HashMap<(Vec<i64>, usize), f64>>,
    nodes: u64,
}

impl Search<'_> {
    fn key(probs: &[f64], depth: usize) -> (Vec<i64>, usize) {
        (
            probs.iter().map(|x| (x * 1e12).round() as i64).collect(),
            depth,
        )
    }

    /// Depth-first expectimax. Only the beliefs along the current path are live.
    fn value(&mut self, probs: &[f64], depth: usize) -> (f64, Option<usize>) {
        if depth == 0 {
            return (0.0, None);
        }
        if let Some(memo) = &self.memo {
            if let Some(&v) = memo.get(&Self::key(probs, depth)) {
                return (v, None);
            }
        }
        self.nodes += 1;
        let p = self.p;
        let n = p.n_states();
        let mut pred = vec![0.0; n];
        let mut post = vec![0.0; n];
        let mut best = f64::NEG_INFINITY;
        let mut best_a = 0;
        for a in 0..p.n_actions() {
            let mut q = p.expected_reward(probs, a);
            if depth > 1 {
                p.predict_into(probs, a, &mut pred);
                let mut future = 0.0;
                for o in 0..p.n_observations() {
                    let like = p.condition_into(&pred, o, &mut post);
                    if like <= 0.0 {
                        continue;
                    }
                    post.iter_mut().for_each(|x| *x /= like);
                    future += like * self.value(&post, depth - 1).0;
                }
                q += p.gamma() * future;
            }
            if q > best {
                best = q;
                best_a = a;
            }
        }
        if let Some(memo) = &mut self.memo {
            memo.insert(Self::key(probs, depth), best);
        }
        (best, Some(best_a))
    }
}

/// Optimal expected discounted return over `horizon` steps from `b0`,
/// maximized over all history-dependent policies.
pub fn exact_value(p: &CompositePomdp, b0: &Belief, horizon: usize) -> Result<f64> {
    Ok(exact_value_with(p, b0, horizon, SolverOptions::default())?.value)
}

pub fn exact_value_with(
    p: &CompositePomdp,
    b0: &Belief,
    horizon: usize,
    opts: SolverOptions,
) -> Result<ExactSolution> {
    p.check_belief(b0)?;
    let mut search = Search {
        p,
        memo: opts.memoize.then(HashMap::new),
        nodes: 0,
    };
    let (value, first_action) = search.value(b0.probs(), horizon);
    Ok(ExactSolution {
        value,
        first_action,
        nodes: search.nodes,
    })
}

/// Split `b0` on an observation emitted by the start state itself:
/// `(o, Pr(o | b0), b0 conditioned on o)` for every possible `o`.
pub fn observe_start(p: &CompositePomdp, b0: &Belief) -> Result<Vec<(usize, f64, Belief)>> {
    p.check_belief(b0)?;
    let mut out = Vec::new();
    let mut post = vec![0.0; p.n_states()];
    for o in 0..p.n_observations() {
        let like = p.condition_into(b0.probs(), o, &mut post);
        if like > 0.0 {
            post.iter_mut().for_each(|x| *x /= like);
            out.push((
                o,
                like,
                Belief {
                    probs: post.clone(),
                },
            ));
        }
    }
    Ok(out)
}

/// Optimal value when the agent also sees the start state's emission before
/// its first action: `sum_o Pr(o | b0) V*(b0 | o, H)`.
pub fn exact_value_observed_start(p: &CompositePomdp, b0: &Belief, horizon: usize) -> Result<f64> {
    let mut v = 0.0;
    for (_, like, b) in observe_start(p, b0)? {
        v += like * exact_value(p, &b, horizon)?;
    }
    Ok(v)
}

/// Does some policy reach expected return `K` from the composite's initial
/// belief? Returns the decision and `V*`.
pub fn decide_threshold(p: &CompositePomdp, q: ThresholdQuery) -> Result<(bool, f64)> {
    let v = exact_value(p, p.initial_belief(), q.horizon)?;
    Ok((v >= q.threshold - DECISION_SLACK, v))
}

/// Optimal value when the morphology index is observed every step: the
/// problem splits into one ordinary MDP per morphology.
pub fn solve_observable(mdps: &[TabularMdp], prior: &[f64], horizon: usize) -> Result<f64> {
    validate_components(mdps)?;
    validate_prior(prior, mdps.len())?;
    Ok(mdps
        .iter()
        .zip(prior)
        .map(|(m, w)| w * dp_optimal_value(m, horizon).value)
        .sum())
}
