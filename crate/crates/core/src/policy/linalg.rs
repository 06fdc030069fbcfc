//! Row-major weight blocks addressed inside one flat parameter vector.

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Block {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn slice<'a>(&self, theta: &'a [f64]) -> &'a [f64] {
        &theta[self.range()]
    }

    /// `out += W x`
    pub fn matvec_add(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        let w = self.slice(theta);
        for (o, row) in out.iter_mut().zip(w.chunks_exact(self.cols)) {
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// `out += W^T y`
    pub fn t_matvec_add(&self, theta: &[f64], y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        let w = self.slice(theta);
        for (&yi, row) in y.iter().zip(w.chunks_exact(self.cols)) {
            if yi != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += yi * a;
                }
            }
        }
    }

    /// `dW += y x^T`
    pub fn outer_add(&self, grad: &mut [f64], y: &[f64], x: &[f64]) {
        let g = &mut grad[self.range()];
        for (&yi, row) in y.iter().zip(g.chunks_exact_mut(self.cols)) {
            if yi != 0.0 {
                for (gr, xj) in row.iter_mut().zip(x) {
                    *gr += yi * xj;
                }
            }
        }
    }

    /// `out += W e_j`, the product with a one-hot vector.
    pub fn column_add(&self, theta: &[f64], j: usize, out: &mut [f64]) {
        let w = self.slice(theta);
        for (o, row) in out.iter_mut().zip(w.chunks_exact(self.cols)) {
            *o += row[j];
        }
    }

    /// `dW += y e_j^T`
    pub fn outer_add_column(&self, grad: &mut [f64], y: &[f64], j: usize) {
        let g = &mut grad[self.range()];
        for (&yi, row) in y.iter().zip(g.chunks_exact_mut(self.cols)) {
            row[j] += yi;
        }
    }

    /// `db += y` for a bias or vector block.
    pub fn add(&self, grad: &mut [f64], y: &[f64]) {
        for (g, v) in grad[self.range()].iter_mut().zip(y) {
            *g += v;
        }
    }

    pub fn dot(&self, theta: &[f64], x: &[f64]) -> f64 {
        self.slice(theta).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init_uniform<R: Rng>(&self, theta: &mut [f64], fan_in: usize, rng: &mut R) {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for w in &mut theta[self.range()] {
            *w = rng.gen_range(-bound..=bound);
        }
    }
}

/// Hands out consecutive blocks.
#[derive(Default)]
pub(crate) struct LayoutBuilder {
    next: usize,
}

impl LayoutBuilder {
    pub fn block(&mut self, rows: usize, cols: usize) -> Block {
        let b = Block {
            offset: self.next,
            rows,
            cols,
        };
        self.next += rows * cols;
        b
    }

    pub fn vector(&mut self, len: usize) -> Block {
        self.block(len, 1)
    }

    pub fn total(&self) -> usize {
        self.next
    }
}

pub(crate) fn tanh_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.tanh());
}

/// `dpre = dy * (1 - y^2)` for `y = tanh(pre)`.
pub(crate) fn tanh_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(y, d)| d * (1.0 - y * y)).collect()
}

pub(crate) fn one_hot(i: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}
