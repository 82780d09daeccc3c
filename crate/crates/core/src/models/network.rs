//! Dense ReLU networks over a flat parameter slice.
//!
//! Layer `l` stores its weight matrix row-major (`out x in`) followed by its
//! bias vector. Hidden layers apply ReLU, the output layer is affine.

use rand_distr::{Distribution, Normal};

use super::params::ParamBuilder;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Mlp<'a> {
    /// Layer sizes including input and output: `[in, h1, ..., hL, out]`.
    pub sizes: &'a [usize],
}

pub(crate) fn mlp_param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Appends He-initialized parameters for a network with `sizes`.
///
/// Weights are drawn from `N(0, 2 / fan_in)` with the same prior; biases start
/// at `output_bias` for the last layer and zero elsewhere, with prior std 1.
pub(crate) fn push_he_params(
    b: &mut ParamBuilder,
    prefix: &str,
    sizes: &[usize],
    output_bias: f64,
    rng: &mut Rng,
) {
    let n_layers = sizes.len() - 1;
    for (l, w) in sizes.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        for i in 0..fan_out {
            for j in 0..fan_in {
                let v = normal.sample(rng);
                b.push(format!("{prefix}.W{}[{i},{j}]", l + 1), v, (0.0, std), false, None);
            }
        }
        let last = l + 1 == n_layers;
        for i in 0..fan_out {
            let bias = if last { output_bias } else { 0.0 };
            b.push(format!("{prefix}.b{}[{i}]", l + 1), bias, (bias, 1.0), false, None);
        }
    }
}

/// Post-activation values of every layer, `acts[0]` being the input.
#[derive(Debug, Clone, Default)]
pub(crate) struct MlpTrace {
    pub acts: Vec<Vec<f64>>,
}

impl<'a> Mlp<'a> {
    pub fn new(sizes: &'a [usize]) -> Self {
        Self { sizes }
    }

    /// Scalar output for `input`; fills `trace` for a later backward pass.
    pub fn forward(&self, params: &[f64], input: &[f64], trace: &mut MlpTrace) -> f64 {
        debug_assert_eq!(params.len(), mlp_param_count(self.sizes));
        debug_assert_eq!(*self.sizes.last().unwrap(), 1);
        let n_layers = self.sizes.len() - 1;
        trace.acts.clear();
        trace.acts.push(input.to_vec());
        let mut off = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[off..off + n_in * n_out];
            let bias = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let a = &trace.acts[l];
            let mut z: Vec<f64> = (0..n_out)
                .map(|i| {
                    let row = &w[i * n_in..(i + 1) * n_in];
                    bias[i] + row.iter().zip(a.iter()).map(|(p, q)| p * q).sum::<f64>()
                })
                .collect();
            if l + 1 < n_layers {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            trace.acts.push(z);
        }
        trace.acts[n_layers][0]
    }

    /// Accumulates `seed * d(output)/d(params)` into `grad`.
    pub fn backward(&self, params: &[f64], trace: &MlpTrace, seed: f64, grad: &mut [f64]) {
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = vec![seed];
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let a = &trace.acts[l];
            for i in 0..n_out {
                let d = delta[i];
                if d == 0.0 {
                    continue;
                }
                let g = &mut grad[off + i * n_in..off + (i + 1) * n_in];
                for (gj, aj) in g.iter_mut().zip(a.iter()) {
                    *gj += d * aj;
                }
                grad[off + n_in * n_out + i] += d;
            }
            if l > 0 {
                let w = &params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for i in 0..n_out {
                    let d = delta[i];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &w[i * n_in..(i + 1) * n_in];
                    for (p, wij) in prev.iter_mut().zip(row.iter()) {
                        *p += d * wij;
                    }
                }
                for (p, aj) in prev.iter_mut().zip(a.iter()) {
                    if *aj <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }

    /// Pre-activations of all hidden units, layer by layer.
    pub fn hidden_preactivations(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        let n_layers = self.sizes.len() - 1;
        let mut out = Vec::new();
        let mut a = input.to_vec();
        let mut off = 0;
        for l in 0..n_layers - 1 {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[off..off + n_in * n_out];
            let bias = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let z: Vec<f64> = (0..n_out)
                .map(|i| bias[i] + w[i * n_in..(i + 1) * n_in].iter().zip(a.iter()).map(|(p, q)| p * q).sum::<f64>())
                .collect();
            out.extend_from_slice(&z);
            a = z.iter().map(|v| v.max(0.0)).collect();
        }
        out
    }
}
