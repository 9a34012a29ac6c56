//! Small fully-connected regression network with tanh hidden layers, a linear
//! scalar output and an Adam optimizer. Parameters live in one flat buffer so
//! soft updates, optimizer steps and checkpoints work on a single slice.

use rand::distr::Uniform;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer widths from input to the scalar output, e.g. `[14, 64, 64, 1]`.
    arch: Vec<usize>,
    /// Per layer: weights stored input-major (`w[i * out + j]`), then biases.
    params: Vec<f64>,
}

fn layer_len(fan_in: usize, fan_out: usize) -> usize {
    fan_in * fan_out + fan_out
}

/// Checks that `arch` has an input, at least one hidden layer, and a scalar output.
pub fn valid_arch(arch: &[usize]) -> bool {
    arch.len() >= 3 && arch.iter().all(|&n| n > 0) && arch.last() == Some(&1)
}

impl Mlp {
    pub fn zeros(arch: &[usize]) -> Self {
        assert!(valid_arch(arch), "invalid architecture {arch:?}");
        let n = arch.windows(2).map(|p| layer_len(p[0], p[1])).sum();
        Self { arch: arch.to_vec(), params: vec![0.0; n] }
    }

    /// Uniform initialization in ±1/sqrt(fan_in), biases included.
    pub fn init<R: Rng + ?Sized>(arch: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(arch);
        let mut offset = 0;
        for p in arch.windows(2) {
            let bound = 1.0 / (p[0] as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let len = layer_len(p[0], p[1]);
            for v in &mut net.params[offset..offset + len] {
                *v = rng.sample(dist);
            }
            offset += len;
        }
        net
    }

    pub fn from_params(arch: &[usize], params: Vec<f64>) -> Option<Self> {
        let net = Self::zeros(arch);
        (net.params.len() == params.len()).then_some(Self { params, ..net })
    }

    pub fn arch(&self) -> &[usize] {
        &self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.arch[0]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Scalar output for one input vector.
    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut scratch = Scratch::default();
        self.forward_with(x, &mut scratch)
    }

    /// Like [`Mlp::forward`] but reusing caller-owned buffers.
    pub fn forward_with(&self, x: &[f64], scratch: &mut Scratch) -> f64 {
        debug_assert_eq!(x.len(), self.input_dim());
        scratch.cur.clear();
        scratch.cur.extend_from_slice(x);
        let mut offset = 0;
        let last = self.arch.len() - 2;
        for (l, p) in self.arch.windows(2).enumerate() {
            let (fan_in, fan_out) = (p[0], p[1]);
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + layer_len(fan_in, fan_out)];
            scratch.next.clear();
            scratch.next.extend_from_slice(b);
            for (i, &xi) in scratch.cur.iter().enumerate() {
                let row = &w[i * fan_out..(i + 1) * fan_out];
                for (acc, &wij) in scratch.next.iter_mut().zip(row) {
                    *acc += xi * wij;
                }
            }
            if l < last {
                scratch.next.iter_mut().for_each(|v| *v = v.tanh());
            }
            std::mem::swap(&mut scratch.cur, &mut scratch.next);
            offset += layer_len(fan_in, fan_out);
        }
        scratch.cur[0]
    }

    /// Mean squared error over `(input, target)` pairs; accumulates its gradient into `grad`.
    pub fn mse_grad(&self, inputs: &[&[f64]], targets: &[f64], grad: &mut [f64]) -> f64 {
        assert_eq!(inputs.len(), targets.len());
        assert_eq!(grad.len(), self.params.len());
        if inputs.is_empty() {
            return 0.0;
        }
        let n = inputs.len() as f64;
        let layers: Vec<(usize, usize, usize)> = {
            let mut offset = 0;
            self.arch
                .windows(2)
                .map(|p| {
                    let entry = (offset, p[0], p[1]);
                    offset += layer_len(p[0], p[1]);
                    entry
                })
                .collect()
        };
        let mut acts: Vec<Vec<f64>> = self.arch.iter().map(|&k| vec![0.0; k]).collect();
        let mut loss = 0.0;
        for (x, &target) in inputs.iter().zip(targets) {
            acts[0].copy_from_slice(x);
            for (l, &(offset, fan_in, fan_out)) in layers.iter().enumerate() {
                let (head, tail) = acts.split_at_mut(l + 1);
                let (input, out) = (&head[l], &mut tail[0]);
                out.copy_from_slice(&self.params[offset + fan_in * fan_out..offset + layer_len(fan_in, fan_out)]);
                for (i, &xi) in input.iter().enumerate() {
                    let row = &self.params[offset + i * fan_out..offset + (i + 1) * fan_out];
                    for (acc, &wij) in out.iter_mut().zip(row) {
                        *acc += xi * wij;
                    }
                }
                if l + 1 < layers.len() {
                    out.iter_mut().for_each(|v| *v = v.tanh());
                }
            }
            let err = acts[layers.len()][0] - target;
            loss += err * err;

            let mut delta = vec![2.0 * err / n];
            for (l, &(offset, fan_in, fan_out)) in layers.iter().enumerate().rev() {
                let input = &acts[l];
                let (gw, gb) = grad[offset..offset + layer_len(fan_in, fan_out)].split_at_mut(fan_in * fan_out);
                for (g, d) in gb.iter_mut().zip(&delta) {
                    *g += d;
                }
                for (i, &xi) in input.iter().enumerate() {
                    for (g, d) in gw[i * fan_out..(i + 1) * fan_out].iter_mut().zip(&delta) {
                        *g += xi * d;
                    }
                }
                if l > 0 {
                    delta = (0..fan_in)
                        .map(|i| {
                            let row = &self.params[offset + i * fan_out..offset + (i + 1) * fan_out];
                            let back: f64 = row.iter().zip(&delta).map(|(w, d)| w * d).sum();
                            back * (1.0 - input[i] * input[i])
                        })
                        .collect();
                }
            }
        }
        loss / n
    }

    /// `self ← τ·source + (1−τ)·self`, parameter-wise.
    pub fn blend_from(&mut self, source: &Mlp, tau: f64) {
        assert_eq!(self.arch, source.arch, "architecture mismatch");
        if tau == 1.0 {
            self.params.copy_from_slice(&source.params);
            return;
        }
        for (t, &s) in self.params.iter_mut().zip(&source.params) {
            *t = tau * s + (1.0 - tau) * *t;
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct Scratch {
    cur: Vec<f64>,
    next: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}
