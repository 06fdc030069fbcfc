//! Monolithic tanh recurrent policy and its memory-free variant.
//!
//! ```text
//! h_t   = tanh(W_h h_{t-1} + W_x onehot(o_t) + b)
//! logit = P h_t
//! value = w . h_t
//! ```
//!
//! Parameter layout in `theta`: `W_h (H x H)`, `W_x (H x O)`, `b (H)`,
//! `P (A x H)`, `w (H)`, so `W = H^2 + H*O + H + A*H + H`. The feedforward
//! variant drops `W_h` and carries no hidden state between steps.

use rand::Rng;

use super::linalg::{tanh_in_place, Block, LayoutBuilder};
use super::StepOutputs;

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentNet {
    pub(crate) obs: usize,
    pub(crate) hidden: usize,
    pub(crate) actions: usize,
    pub(crate) memory: bool,
    wh: Option<Block>,
    wx: Block,
    b: Block,
    head: Block,
    value: Block,
    count: usize,
}

impl RecurrentNet {
    pub fn new(obs: usize, hidden: usize, actions: usize, memory: bool) -> Self {
        let mut lb = LayoutBuilder::default();
        let wh = memory.then(|| lb.block(hidden, hidden));
        let wx = lb.block(hidden, obs);
        let b = lb.vector(hidden);
        let head = lb.block(actions, hidden);
        let value = lb.vector(hidden);
        Self {
            obs,
            hidden,
            actions,
            memory,
            wh,
            wx,
            b,
            head,
            value,
            count: lb.total(),
        }
    }

    /// Closed-form parameter count.
    pub fn count_for(obs: usize, hidden: usize, actions: usize, memory: bool) -> usize {
        let recurrent = if memory { hidden * hidden } else { 0 };
        recurrent + hidden * obs + hidden + actions * hidden + hidden
    }

    pub fn param_count(&self) -> usize {
        self.count
    }

    pub fn hidden_size(&self) -> usize {
        if self.memory {
            self.hidden
        } else {
            0
        }
    }

    pub(crate) fn init<R: Rng>(&self, theta: &mut [f64], rng: &mut R) {
        let cell_fan_in = self.obs + if self.memory { self.hidden } else { 0 };
        if let Some(wh) = self.wh {
            wh.init_uniform(theta, cell_fan_in, rng);
        }
        self.wx.init_uniform(theta, cell_fan_in, rng);
        self.head.init_uniform(theta, self.hidden, rng);
        self.value.init_uniform(theta, self.hidden, rng);
    }

    fn cell(&self, theta: &[f64], obs: usize, h_prev: &[f64]) -> Vec<f64> {
        let mut pre = self.b.slice(theta).to_vec();
        if let Some(wh) = self.wh {
            wh.matvec_add(theta, h_prev, &mut pre);
        }
        self.wx.column_add(theta, obs, &mut pre);
        tanh_in_place(&mut pre);
        pre
    }

    fn heads(&self, theta: &[f64], h: &[f64]) -> (Vec<f64>, f64) {
        let mut logits = vec![0.0; self.actions];
        self.head.matvec_add(theta, h, &mut logits);
        (logits, self.value.dot(theta, h))
    }

    /// One step; `h_prev` is ignored by the memory-free variant.
    pub(crate) fn step(
        &self,
        theta: &[f64],
        obs: usize,
        h_prev: &[f64],
    ) -> (Vec<f64>, f64, Vec<f64>) {
        let h = self.cell(theta, obs, h_prev);
        let (logits, v) = self.heads(theta, &h);
        let next = if self.memory { h } else { Vec::new() };
        (logits, v, next)
    }

    /// Unroll over an observation sequence. `hidden[t]` is the cell output
    /// at step `t` (kept for the backward pass even without memory).
    pub(crate) fn forward(&self, theta: &[f64], observations: &[usize]) -> StepOutputs {
        let mut out = StepOutputs::with_capacity(observations.len());
        let mut h = vec![0.0; self.hidden];
        for &o in observations {
            h = self.cell(theta, o, &h);
            let (logits, v) = self.heads(theta, &h);
            out.logits.push(logits);
            out.values.push(v);
            out.hidden.push(h.clone());
        }
        out
    }

    /// Full BPTT given output gradients `dz[t]` (logits) and `dv[t]` (value).
    pub(crate) fn backward(
        &self,
        theta: &[f64],
        observations: &[usize],
        fwd: &StepOutputs,
        dz: &[Vec<f64>],
        dv: &[f64],
    ) -> Vec<f64> {
        let mut grad = vec![0.0; self.count];
        let zeros = vec![0.0; self.hidden];
        let mut dh = vec![0.0; self.hidden];
        let mut dh_next = vec![0.0; self.hidden];
        let mut da = vec![0.0; self.hidden];
        let value_w = self.value.slice(theta);
        for t in (0..observations.len()).rev() {
            let h = &fwd.hidden[t];
            self.head.outer_add(&mut grad, &dz[t], h);
            for (g, x) in grad[self.value.range()].iter_mut().zip(h) {
                *g += x * dv[t];
            }

            std::mem::swap(&mut dh, &mut dh_next);
            self.head.t_matvec_add(theta, &dz[t], &mut dh);
            for (d, w) in dh.iter_mut().zip(value_w) {
                *d += w * dv[t];
            }
            for ((a, y), d) in da.iter_mut().zip(h).zip(&dh) {
                *a = d * (1.0 - y * y);
            }
            self.wx.outer_add_column(&mut grad, &da, observations[t]);
            self.b.add(&mut grad, &da);
            dh_next.iter_mut().for_each(|x| *x = 0.0);
            if let Some(wh) = self.wh {
                let h_prev = if t > 0 { &fwd.hidden[t - 1] } else { &zeros };
                wh.outer_add(&mut grad, &da, h_prev);
                wh.t_matvec_add(theta, &da, &mut dh_next);
            }
        }
        grad
    }
}
