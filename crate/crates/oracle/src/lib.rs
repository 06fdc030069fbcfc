//! Brute-force reference computations for the heat-core solvers.
//!
//! Nothing here calls the solver it is meant to check: POMDP values come from
//! enumerating every deterministic policy tree, MDP values from recursing over
//! state paths, and posteriors from explicit joint tables.

use heat_core::env::TabularMdp;
use heat_core::pomdp::{compose, CompositePomdp, StandalonePomdp};
use heat_core::rng::seeded_rng;
use rand::Rng;

/// Largest number of policy trees an enumeration level may build.
const MAX_TREES: usize = 5_000_000;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `g[s] = sum_{s'} T(s'|s,a) Omega(o|s') alpha(s')`.
fn backproject(p: &StandalonePomdp, a: usize, o: usize, alpha: &[f64]) -> Vec<f64> {
    (0..p.n_states())
        .map(|s| {
            (0..p.n_states())
                .map(|sp| p.transition[s][a][sp] * p.observation[sp][o] * alpha[sp])
                .sum()
        })
        .collect()
}

/// Visit every tuple in `0..radix` of length `len` in odometer order.
fn for_each_tuple(len: usize, radix: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; len];
    loop {
        f(&idx);
        let mut k = 0;
        loop {
            if k == len {
                return;
            }
            idx[k] += 1;
            if idx[k] < radix {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Value vectors of every deterministic policy tree of the given depth.
fn all_policy_trees(p: &StandalonePomdp, depth: usize) -> Vec<Vec<f64>> {
    assert!(depth >= 1);
    let n_a = p.n_actions();
    if depth == 1 {
        return (0..n_a)
            .map(|a| (0..p.n_states()).map(|s| p.reward[s][a]).collect())
            .collect();
    }
    let sub = all_policy_trees(p, depth - 1);
    let n_o = p.n_observations();
    let count = n_a * sub.len().pow(n_o as u32);
    assert!(
        count <= MAX_TREES,
        "{count} policy trees is too many to enumerate"
    );
    let mut out = Vec::with_capacity(count);
    for a in 0..n_a {
        let g: Vec<Vec<Vec<f64>>> = (0..n_o)
            .map(|o| {
                sub.iter()
                    .map(|alpha| backproject(p, a, o, alpha))
                    .collect()
            })
            .collect();
        for_each_tuple(n_o, sub.len(), |choice| {
            let alpha = (0..p.n_states())
                .map(|s| {
                    p.reward[s][a]
                        + p.gamma
                            * choice
                                .iter()
                                .enumerate()
                                .map(|(o, &c)| g[o][c][s])
                                .sum::<f64>()
                })
                .collect();
            out.push(alpha);
        });
    }
    out
}

/// Best expected return over every deterministic observation-history policy
/// of length `horizon`, started from `p.initial`.
pub fn pomdp_policy_enumeration(p: &StandalonePomdp, horizon: usize) -> f64 {
    pomdp_policy_enumeration_from(p, &p.initial, horizon)
}

pub fn pomdp_policy_enumeration_from(p: &StandalonePomdp, b0: &[f64], horizon: usize) -> f64 {
    if horizon == 0 {
        return 0.0;
    }
    let n_a = p.n_actions();
    let n_o = p.n_observations();
    let immediate = |a: usize| -> f64 { (0..p.n_states()).map(|s| b0[s] * p.reward[s][a]).sum() };
    if horizon == 1 {
        return (0..n_a).map(immediate).fold(f64::NEG_INFINITY, f64::max);
    }
    let sub = all_policy_trees(p, horizon - 1);
    let mut best = f64::NEG_INFINITY;
    for a in 0..n_a {
        let base = immediate(a);
        let scores: Vec<Vec<f64>> = (0..n_o)
            .map(|o| {
                sub.iter()
                    .map(|alpha| dot(b0, &backproject(p, a, o, alpha)))
                    .collect()
            })
            .collect();
        for_each_tuple(n_o, sub.len(), |choice| {
            let v = base
                + p.gamma
                    * choice
                        .iter()
                        .enumerate()
                        .map(|(o, &c)| scores[o][c])
                        .sum::<f64>();
            if v > best {
                best = v;
            }
        });
    }
    best
}

/// Value of a fixed open-loop action sequence (the same actions whatever is
/// observed), by propagating the state distribution.
pub fn open_loop_value(p: &StandalonePomdp, actions: &[usize]) -> f64 {
    let mut dist = p.initial.clone();
    let mut total = 0.0;
    let mut discount = 1.0;
    for &a in actions {
        total += discount
            * (0..p.n_states())
                .map(|s| dist[s] * p.reward[s][a])
                .sum::<f64>();
        let mut next = vec![0.0; p.n_states()];
        for (s, &ps) in dist.iter().enumerate() {
            for (sp, n) in next.iter_mut().enumerate() {
                *n += ps * p.transition[s][a][sp];
            }
        }
        dist = next;
        discount *= p.gamma;
    }
    total
}

/// Optimal finite-horizon value of an MDP state by recursing over every
/// successor path (no tables).
pub fn mdp_expectimax(mdp: &TabularMdp, state: usize, horizon: usize) -> f64 {
    if horizon == 0 {
        return 0.0;
    }
    (0..mdp.n_actions())
        .map(|a| {
            let future: f64 = (0..mdp.n_states())
                .filter(|&sp| mdp.prob(state, a, sp) > 0.0)
                .map(|sp| mdp.prob(state, a, sp) * mdp_expectimax(mdp, sp, horizon - 1))
                .sum();
            mdp.reward(state, a) + mdp.gamma() * future
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Posterior over states after `(a, o)` from the explicit joint table
/// `P(s, s', o) = b(s) T(s'|s,a) Omega(o|s')`. `None` when `o` is impossible.
pub fn bayes_posterior(
    p: &StandalonePomdp,
    b: &[f64],
    a: usize,
    o: usize,
) -> Option<(Vec<f64>, f64)> {
    let n = p.n_states();
    let mut joint = vec![vec![0.0; n]; n];
    for (s, row) in joint.iter_mut().enumerate() {
        for (sp, cell) in row.iter_mut().enumerate() {
            *cell = b[s] * p.transition[s][a][sp] * p.observation[sp][o];
        }
    }
    let evidence: f64 = joint.iter().flatten().sum();
    if evidence <= 0.0 {
        return None;
    }
    let post = (0..n)
        .map(|sp| (0..n).map(|s| joint[s][sp]).sum::<f64>() / evidence)
        .collect();
    Some((post, evidence))
}

#[derive(Debug, Clone, Copy)]
pub struct RandomSpec {
    pub max_states: usize,
    pub max_actions: usize,
    pub max_obs: usize,
    pub nonnegative_rewards: bool,
}

impl Default for RandomSpec {
    fn default() -> Self {
        Self {
            max_states: 12,
            max_actions: 3,
            max_obs: 3,
            nonnegative_rewards: false,
        }
    }
}

fn random_distribution<R: Rng>(rng: &mut R, n: usize, sparsity: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            if rng.gen::<f64>() < sparsity {
                0.0
            } else {
                rng.gen::<f64>() + 1e-3
            }
        })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        v[rng.gen_range(0..n)] = 1.0;
    }
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= sum);
    v
}

/// A random multi-component composite within the given size limits.
pub fn random_composite(seed: u64, spec: RandomSpec) -> CompositePomdp {
    let mut rng = seeded_rng(seed);
    let n_actions = rng.gen_range(1..=spec.max_actions);
    let n_obs = rng.gen_range(1..=spec.max_obs);
    let gamma = [0.5, 0.9, 0.95, 1.0][rng.gen_range(0..4)];
    let n_components = rng.gen_range(1..=3usize.min(spec.max_states));
    let mut budget = spec.max_states;
    let mut mdps = Vec::new();
    for i in 0..n_components {
        let remaining = n_components - i - 1;
        let n = rng.gen_range(1..=(budget - remaining).min(4));
        budget -= n;
        let transition = (0..n)
            .map(|_| {
                (0..n_actions)
                    .map(|_| random_distribution(&mut rng, n, 0.4))
                    .collect()
            })
            .collect();
        let reward = (0..n)
            .map(|_| {
                (0..n_actions)
                    .map(|_| {
                        let r = rng.gen::<f64>();
                        if spec.nonnegative_rewards {
                            r
                        } else {
                            2.0 * r - 1.0
                        }
                    })
                    .collect()
            })
            .collect();
        let init = rng.gen_range(0..n);
        mdps.push(
            TabularMdp::new(transition, reward, gamma, init, i as u64).expect("valid random MDP"),
        );
    }
    let total: usize = mdps.iter().map(TabularMdp::n_states).sum();
    let obs = (0..total)
        .map(|_| random_distribution(&mut rng, n_obs, 0.3))
        .collect();
    let prior = random_distribution(&mut rng, n_components, 0.0);
    compose(mdps, prior, obs).expect("valid random composite")
}
