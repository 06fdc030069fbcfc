use serde::{Deserialize, Serialize};

use super::{compose, Belief, CompositePomdp};
use crate::env::{check_distribution, TabularMdp};
use crate::error::{HeatError, Result};

/// A plain finite POMDP read from JSON.
///
/// `transition[s][a][s']`, `reward[s][a]`, `observation[s'][o]` (emission by
/// the state entered), `initial[s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandalonePomdp {
    pub gamma: f64,
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub observation: Vec<Vec<f64>>,
}

impl StandalonePomdp {
    pub fn n_states(&self) -> usize {
        self.transition.len()
    }

    pub fn n_actions(&self) -> usize {
        self.transition.first().map_or(0, Vec::len)
    }

    pub fn n_observations(&self) -> usize {
        self.observation.first().map_or(0, Vec::len)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_states();
        if n == 0 || self.n_actions() == 0 || self.n_observations() == 0 {
            return Err(HeatError::Malformed(
                "empty state, action or observation set".into(),
            ));
        }
        if self.observation.len() != n {
            return Err(HeatError::Malformed(format!(
                "observation has {} rows, expected {n}",
                self.observation.len()
            )));
        }
        for (s, row) in self.observation.iter().enumerate() {
            check_distribution(row, self.n_observations())
                .map_err(|e| HeatError::Malformed(format!("observation[{s}]: {e}")))?;
        }
        check_distribution(&self.initial, n)
            .map_err(|e| HeatError::Malformed(format!("initial: {e}")))?;
        // transition/reward shapes and gamma are checked by TabularMdp::new
        Ok(())
    }
}

impl CompositePomdp {
    /// Flatten back into plain tables over global states.
    pub fn to_standalone(&self) -> StandalonePomdp {
        let n = self.n_states();
        let transition = (0..n)
            .map(|g| {
                (0..self.n_actions())
                    .map(|a| (0..n).map(|h| self.transition(g, a, h)).collect())
                    .collect()
            })
            .collect();
        let reward = (0..n)
            .map(|g| (0..self.n_actions()).map(|a| self.reward(g, a)).collect())
            .collect();
        StandalonePomdp {
            gamma: self.gamma(),
            initial: self.initial_belief().probs().to_vec(),
            transition,
            reward,
            observation: self.obs_model.clone(),
        }
    }
}

/// Embed a plain POMDP as a one-morphology composite with the same tables.
pub fn embed_pomdp(single: &StandalonePomdp) -> Result<CompositePomdp> {
    single.validate()?;
    let start = single
        .initial
        .iter()
        .position(|&p| p > 0.0)
        .expect("validated initial distribution has positive mass");
    let mdp = TabularMdp::new(
        single.transition.clone(),
        single.reward.clone(),
        single.gamma,
        start,
        0,
    )?;
    let mut p = compose(vec![mdp], vec![1.0], single.observation.clone())?;
    p.initial = Belief::new(single.initial.clone())?;
    Ok(p)
}
