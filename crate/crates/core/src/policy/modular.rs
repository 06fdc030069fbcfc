//! Modular per-joint policy with one shared cell and local memory.
//!
//! Present slots form a chain in ascending slot order. Each step runs one
//! root-to-leaf sweep of down messages, one leaf-to-root sweep of up
//! messages, then updates every present slot's local memory:
//!
//! ```text
//! d_p = tanh(Dx x + Dd d_{p-1} + Dm m_p + bd)     (d_{-1} = 0)
//! u_p = tanh(Ux x + Ud d_p + Uu u_{p+1} + bu)      (u_{n} = 0)
//! m_p' = tanh(Mm m_p + Md d_p + Mu u_p + bm)
//! ```
//!
//! Slot `p` contributes `wt . m_p'` as the logit of toggling its own joint,
//! `wn . m_p'` to the no-op logit and `wv . m_p'` to the value. Absent slots
//! send no messages, keep zero memory and leave their toggle logit at 0.
//! The parameter count depends only on the widths, never on the mask.

use rand::Rng;

use super::linalg::{one_hot, tanh_backward, tanh_in_place, Block, LayoutBuilder};
use super::StepOutputs;

#[derive(Debug, Clone, PartialEq)]
pub struct ModularNet {
    pub(crate) obs: usize,
    pub(crate) slots: usize,
    pub(crate) memory: usize,
    pub(crate) message: usize,
    dx: Block,
    dd: Block,
    dm: Block,
    bd: Block,
    ux: Block,
    ud: Block,
    uu: Block,
    bu: Block,
    mm: Block,
    md: Block,
    mu: Block,
    bm: Block,
    wt: Block,
    wn: Block,
    wv: Block,
    count: usize,
}

/// Activations of one step, in chain order.
#[derive(Debug, Clone)]
pub(crate) struct ModularStep {
    x: Vec<f64>,
    mem_prev: Vec<Vec<f64>>,
    down: Vec<Vec<f64>>,
    up: Vec<Vec<f64>>,
    mem: Vec<Vec<f64>>,
}

impl ModularNet {
    pub fn new(obs: usize, slots: usize, memory: usize, message: usize) -> Self {
        let mut lb = LayoutBuilder::default();
        let (m, d) = (memory, message);
        let dx = lb.block(d, obs);
        let dd = lb.block(d, d);
        let dm = lb.block(d, m);
        let bd = lb.vector(d);
        let ux = lb.block(d, obs);
        let ud = lb.block(d, d);
        let uu = lb.block(d, d);
        let bu = lb.vector(d);
        let mm = lb.block(m, m);
        let md = lb.block(m, d);
        let mu = lb.block(m, d);
        let bm = lb.vector(m);
        let wt = lb.vector(m);
        let wn = lb.vector(m);
        let wv = lb.vector(m);
        Self {
            obs,
            slots,
            memory,
            message,
            dx,
            dd,
            dm,
            bd,
            ux,
            ud,
            uu,
            bu,
            mm,
            md,
            mu,
            bm,
            wt,
            wn,
            wv,
            count: lb.total(),
        }
    }

    /// Closed-form parameter count; independent of `slots`.
    pub fn count_for(obs: usize, memory: usize, message: usize) -> usize {
        let (m, d) = (memory, message);
        d * (obs + d + m + 1) + d * (obs + 2 * d + 1) + m * (m + 2 * d + 1) + 3 * m
    }

    pub fn param_count(&self) -> usize {
        self.count
    }

    pub fn n_actions(&self) -> usize {
        self.slots + 1
    }

    pub fn hidden_size(&self) -> usize {
        self.slots * self.memory
    }

    pub(crate) fn init<R: Rng>(&self, theta: &mut [f64], rng: &mut R) {
        let (o, m, d) = (self.obs, self.memory, self.message);
        for b in [self.dx, self.dd, self.dm] {
            b.init_uniform(theta, o + d + m, rng);
        }
        for b in [self.ux, self.ud, self.uu] {
            b.init_uniform(theta, o + 2 * d, rng);
        }
        for b in [self.mm, self.md, self.mu] {
            b.init_uniform(theta, m + 2 * d, rng);
        }
        for b in [self.wt, self.wn, self.wv] {
            b.init_uniform(theta, m, rng);
        }
    }

    fn slot_memory<'a>(&self, hidden: &'a [f64], slot: usize) -> &'a [f64] {
        &hidden[slot * self.memory..(slot + 1) * self.memory]
    }

    /// `present` holds 0-based slot indices in ascending order.
    pub(crate) fn step_forward(
        &self,
        theta: &[f64],
        obs: usize,
        hidden: &[f64],
        present: &[usize],
    ) -> (ModularStep, Vec<f64>, f64, Vec<f64>) {
        let n = present.len();
        let x = one_hot(obs, self.obs);
        let mem_prev: Vec<Vec<f64>> = present
            .iter()
            .map(|&s| self.slot_memory(hidden, s).to_vec())
            .collect();

        let mut down: Vec<Vec<f64>> = Vec::with_capacity(n);
        for p in 0..n {
            let mut pre = self.bd.slice(theta).to_vec();
            self.dx.matvec_add(theta, &x, &mut pre);
            if p > 0 {
                self.dd.matvec_add(theta, &down[p - 1], &mut pre);
            }
            self.dm.matvec_add(theta, &mem_prev[p], &mut pre);
            tanh_in_place(&mut pre);
            down.push(pre);
        }

        let mut up = vec![Vec::new(); n];
        for p in (0..n).rev() {
            let mut pre = self.bu.slice(theta).to_vec();
            self.ux.matvec_add(theta, &x, &mut pre);
            self.ud.matvec_add(theta, &down[p], &mut pre);
            if p + 1 < n {
                let child = up[p + 1].clone();
                self.uu.matvec_add(theta, &child, &mut pre);
            }
            tanh_in_place(&mut pre);
            up[p] = pre;
        }

        let mut mem = Vec::with_capacity(n);
        let mut logits = vec![0.0; self.n_actions()];
        let mut value = 0.0;
        let mut next_hidden = vec![0.0; self.hidden_size()];
        for p in 0..n {
            let mut pre = self.bm.slice(theta).to_vec();
            self.mm.matvec_add(theta, &mem_prev[p], &mut pre);
            self.md.matvec_add(theta, &down[p], &mut pre);
            self.mu.matvec_add(theta, &up[p], &mut pre);
            tanh_in_place(&mut pre);
            logits[present[p]] = self.wt.dot(theta, &pre);
            logits[self.slots] += self.wn.dot(theta, &pre);
            value += self.wv.dot(theta, &pre);
            let s = present[p];
            next_hidden[s * self.memory..(s + 1) * self.memory].copy_from_slice(&pre);
            mem.push(pre);
        }
        let cache = ModularStep {
            x,
            mem_prev,
            down,
            up,
            mem,
        };
        (cache, logits, value, next_hidden)
    }

    pub(crate) fn forward(
        &self,
        theta: &[f64],
        observations: &[usize],
        present: &[usize],
    ) -> (StepOutputs, Vec<ModularStep>) {
        let mut out = StepOutputs::with_capacity(observations.len());
        let mut caches = Vec::with_capacity(observations.len());
        let mut hidden = vec![0.0; self.hidden_size()];
        for &o in observations {
            let (cache, logits, v, next) = self.step_forward(theta, o, &hidden, present);
            out.logits.push(logits);
            out.values.push(v);
            out.hidden.push(next.clone());
            caches.push(cache);
            hidden = next;
        }
        (out, caches)
    }

    pub(crate) fn backward(
        &self,
        theta: &[f64],
        caches: &[ModularStep],
        present: &[usize],
        dz: &[Vec<f64>],
        dv: &[f64],
    ) -> Vec<f64> {
        let n = present.len();
        let (m, d) = (self.memory, self.message);
        let mut grad = vec![0.0; self.count];
        // gradient w.r.t. each present slot's memory flowing back from step t+1
        let mut dmem_future = vec![vec![0.0; m]; n];
        for t in (0..caches.len()).rev() {
            let c = &caches[t];
            let mut dmem_prev = vec![vec![0.0; m]; n];
            let mut ddown = vec![vec![0.0; d]; n];
            let mut dup = vec![vec![0.0; d]; n];

            let noop = dz[t][self.slots];
            for p in 0..n {
                let toggle = dz[t][present[p]];
                self.wt.add(
                    &mut grad,
                    &c.mem[p].iter().map(|x| x * toggle).collect::<Vec<_>>(),
                );
                self.wn.add(
                    &mut grad,
                    &c.mem[p].iter().map(|x| x * noop).collect::<Vec<_>>(),
                );
                self.wv.add(
                    &mut grad,
                    &c.mem[p].iter().map(|x| x * dv[t]).collect::<Vec<_>>(),
                );
                let dm: Vec<f64> = (0..m)
                    .map(|i| {
                        self.wt.slice(theta)[i] * toggle
                            + self.wn.slice(theta)[i] * noop
                            + self.wv.slice(theta)[i] * dv[t]
                            + dmem_future[p][i]
                    })
                    .collect();
                let da = tanh_backward(&c.mem[p], &dm);
                self.mm.outer_add(&mut grad, &da, &c.mem_prev[p]);
                self.md.outer_add(&mut grad, &da, &c.down[p]);
                self.mu.outer_add(&mut grad, &da, &c.up[p]);
                self.bm.add(&mut grad, &da);
                self.mm.t_matvec_add(theta, &da, &mut dmem_prev[p]);
                self.md.t_matvec_add(theta, &da, &mut ddown[p]);
                self.mu.t_matvec_add(theta, &da, &mut dup[p]);
            }

            // up sweep ran leaf to root, so unwind it root to leaf
            for p in 0..n {
                let da = tanh_backward(&c.up[p], &dup[p]);
                self.ux.outer_add(&mut grad, &da, &c.x);
                self.ud.outer_add(&mut grad, &da, &c.down[p]);
                self.bu.add(&mut grad, &da);
                self.ud.t_matvec_add(theta, &da, &mut ddown[p]);
                if p + 1 < n {
                    self.uu.outer_add(&mut grad, &da, &c.up[p + 1]);
                    let (_, rest) = dup.split_at_mut(p + 1);
                    self.uu.t_matvec_add(theta, &da, &mut rest[0]);
                }
            }

            for p in (0..n).rev() {
                let da = tanh_backward(&c.down[p], &ddown[p]);
                self.dx.outer_add(&mut grad, &da, &c.x);
                self.dm.outer_add(&mut grad, &da, &c.mem_prev[p]);
                self.bd.add(&mut grad, &da);
                self.dm.t_matvec_add(theta, &da, &mut dmem_prev[p]);
                if p > 0 {
                    self.dd.outer_add(&mut grad, &da, &c.down[p - 1]);
                    let (head, _) = ddown.split_at_mut(p);
                    self.dd.t_matvec_add(theta, &da, &mut head[p - 1]);
                }
            }
            dmem_future = dmem_prev;
        }
        grad
    }
}
