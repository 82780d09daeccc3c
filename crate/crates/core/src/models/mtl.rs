//! Multi-task residual network with per-well task vectors.
//!
//! Parameter layout (`h` = width, `d` = inputs, `P` = task dimension):
//! `W0x (h x d)`, `W0b (h x P)`, `b0 (h)`, then per block `W1 (h x h)`,
//! `b1 (h)`, `W2 (h x h)`, `b2 (h)`, then `Wout (1 x h)`, `bout`, and finally
//! the task matrix `B (P x M)` stored column by column so that the task vector
//! of well `j` is contiguous.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::params::ParamBuilder;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MtlShape {
    /// Number of wells (tasks) `M`.
    pub n_wells: usize,
    /// Task-vector dimension `P`.
    pub task_dim: usize,
    /// Width of the residual stream and of each block.
    pub width: usize,
    /// Number of residual blocks `L`.
    pub blocks: usize,
}

impl Default for MtlShape {
    fn default() -> Self {
        Self {
            n_wells: 1,
            task_dim: 4,
            width: 32,
            blocks: 2,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    w0x: usize,
    w0b: usize,
    b0: usize,
    blocks: usize,
    out_w: usize,
    out_b: usize,
    task: usize,
    total: usize,
}

impl MtlShape {
    fn offsets(&self, d: usize) -> Offsets {
        let h = self.width;
        let p = self.task_dim;
        let w0x = 0;
        let w0b = w0x + h * d;
        let b0 = w0b + h * p;
        let blocks = b0 + h;
        let out_w = blocks + self.blocks * self.block_len();
        let out_b = out_w + h;
        let task = out_b + 1;
        let total = task + p * self.n_wells;
        Offsets {
            w0x,
            w0b,
            b0,
            blocks,
            out_w,
            out_b,
            task,
            total,
        }
    }

    fn block_len(&self) -> usize {
        2 * (self.width * self.width + self.width)
    }

    pub fn param_count(&self, input_dim: usize) -> usize {
        self.offsets(input_dim).total
    }

    pub fn shared_param_count(&self, input_dim: usize) -> usize {
        self.offsets(input_dim).task
    }
}

pub(crate) fn push_mtl_params(b: &mut ParamBuilder, shape: &MtlShape, d: usize, rng: &mut Rng) {
    let h = shape.width;
    let p = shape.task_dim;
    let weights = |b: &mut ParamBuilder, name: &str, rows: usize, cols: usize, fan_in: usize, rng: &mut Rng| {
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        for i in 0..rows {
            for j in 0..cols {
                b.push(format!("mtl.{name}[{i},{j}]"), normal.sample(rng), (0.0, std), false, None);
            }
        }
    };
    let biases = |b: &mut ParamBuilder, name: &str, n: usize| {
        for i in 0..n {
            b.push(format!("mtl.{name}[{i}]"), 0.0, (0.0, 1.0), false, None);
        }
    };
    weights(b, "W0x", h, d, d + p, rng);
    weights(b, "W0b", h, p, d + p, rng);
    biases(b, "b0", h);
    for l in 1..=shape.blocks {
        weights(b, &format!("W{l}_1"), h, h, h, rng);
        biases(b, &format!("b{l}_1"), h);
        weights(b, &format!("W{l}_2"), h, h, h, rng);
        biases(b, &format!("b{l}_2"), h);
    }
    weights(b, "Wout", 1, h, h, rng);
    biases(b, "bout", 1);
    let normal = Normal::new(0.0, 1.0).expect("positive std");
    for j in 0..shape.n_wells {
        for k in 0..p {
            b.push(format!("mtl.B[{k},{}]", j + 1), normal.sample(rng), (0.0, 1.0), false, None);
        }
    }
}

fn matvec(w: &[f64], x: &[f64], rows: usize, out: &mut [f64]) {
    let cols = x.len();
    for i in 0..rows {
        out[i] += w[i * cols..(i + 1) * cols]
            .iter()
            .zip(x.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>();
    }
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.max(0.0)).collect()
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct MtlTrace {
    input: Vec<f64>,
    task: usize,
    /// Residual stream `z^(1..=L+1)`.
    z: Vec<Vec<f64>>,
    /// Inner hidden post-activation of each block.
    inner: Vec<Vec<f64>>,
}

pub(crate) struct Mtl<'a> {
    pub shape: &'a MtlShape,
    pub input_dim: usize,
}

impl<'a> Mtl<'a> {
    /// Output for standardized input `x` of well `task` (0-based).
    pub fn forward(&self, params: &[f64], x: &[f64], task: usize, trace: &mut MtlTrace) -> f64 {
        let o = self.shape.offsets(self.input_dim);
        let h = self.shape.width;
        let p = self.shape.task_dim;
        let beta = &params[o.task + task * p..o.task + (task + 1) * p];

        let mut z = params[o.b0..o.b0 + h].to_vec();
        matvec(&params[o.w0x..o.w0x + h * self.input_dim], x, h, &mut z);
        matvec(&params[o.w0b..o.w0b + h * p], beta, h, &mut z);

        trace.input = x.to_vec();
        trace.task = task;
        trace.z.clear();
        trace.inner.clear();
        trace.z.push(z);
        for l in 0..self.shape.blocks {
            let base = o.blocks + l * self.shape.block_len();
            let (w1, b1) = (base, base + h * h);
            let (w2, b2) = (b1 + h, b1 + h + h * h);
            let a = relu(&trace.z[l]);
            let mut hid = params[b1..b1 + h].to_vec();
            matvec(&params[w1..w1 + h * h], &a, h, &mut hid);
            let hid = relu(&hid);
            let mut r = params[b2..b2 + h].to_vec();
            matvec(&params[w2..w2 + h * h], &hid, h, &mut r);
            let next: Vec<f64> = trace.z[l].iter().zip(r.iter()).map(|(a, b)| a + b).collect();
            trace.inner.push(hid);
            trace.z.push(next);
        }
        let last = &trace.z[self.shape.blocks];
        params[o.out_b]
            + params[o.out_w..o.out_w + h]
                .iter()
                .zip(last.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    /// Accumulates `seed * d(output)/d(params)` into `grad`.
    pub fn backward(&self, params: &[f64], trace: &MtlTrace, seed: f64, grad: &mut [f64]) {
        let o = self.shape.offsets(self.input_dim);
        let h = self.shape.width;
        let p = self.shape.task_dim;
        let d = self.input_dim;
        let nb = self.shape.blocks;

        grad[o.out_b] += seed;
        for i in 0..h {
            grad[o.out_w + i] += seed * trace.z[nb][i];
        }
        let mut gz: Vec<f64> = params[o.out_w..o.out_w + h].iter().map(|w| w * seed).collect();

        for l in (0..nb).rev() {
            let base = o.blocks + l * self.shape.block_len();
            let (w1, b1) = (base, base + h * h);
            let (w2, b2) = (b1 + h, b1 + h + h * h);
            let a: Vec<f64> = relu(&trace.z[l]);
            let hid = &trace.inner[l];
            // r = W2 hid + b2
            let mut ghid = vec![0.0; h];
            for i in 0..h {
                let g = gz[i];
                if g == 0.0 {
                    continue;
                }
                grad[b2 + i] += g;
                for j in 0..h {
                    grad[w2 + i * h + j] += g * hid[j];
                    ghid[j] += g * params[w2 + i * h + j];
                }
            }
            // hid = relu(W1 a + b1)
            let mut ga = vec![0.0; h];
            for i in 0..h {
                if hid[i] <= 0.0 {
                    continue;
                }
                let g = ghid[i];
                if g == 0.0 {
                    continue;
                }
                grad[b1 + i] += g;
                for j in 0..h {
                    grad[w1 + i * h + j] += g * a[j];
                    ga[j] += g * params[w1 + i * h + j];
                }
            }
            for j in 0..h {
                if trace.z[l][j] > 0.0 {
                    gz[j] += ga[j];
                }
            }
        }

        let beta_off = o.task + trace.task * p;
        for i in 0..h {
            let g = gz[i];
            if g == 0.0 {
                continue;
            }
            grad[o.b0 + i] += g;
            for j in 0..d {
                grad[o.w0x + i * d + j] += g * trace.input[j];
            }
            for k in 0..p {
                grad[o.w0b + i * p + k] += g * params[beta_off + k];
                grad[beta_off + k] += g * params[o.w0b + i * p + k];
            }
        }
    }

    /// Pre-activation values that pass through a ReLU (for kink detection).
    pub fn relu_inputs(&self, params: &[f64], x: &[f64], task: usize) -> Vec<f64> {
        let mut trace = MtlTrace::default();
        self.forward(params, x, task, &mut trace);
        let o = self.shape.offsets(self.input_dim);
        let h = self.shape.width;
        let mut out = Vec::new();
        for l in 0..self.shape.blocks {
            out.extend_from_slice(&trace.z[l]);
            let base = o.blocks + l * self.shape.block_len();
            let (w1, b1) = (base, base + h * h);
            let a = relu(&trace.z[l]);
            let mut hid = params[b1..b1 + h].to_vec();
            matvec(&params[w1..w1 + h * h], &a, h, &mut hid);
            out.extend_from_slice(&hid);
        }
        out
    }
}
