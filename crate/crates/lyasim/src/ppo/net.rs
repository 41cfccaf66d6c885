//! Dense multilayer perceptron with hand-rolled backpropagation, plus an
//! Adam optimizer over the flattened parameter vector.
//!
//! Hidden layers use tanh; the output layer is linear. Everything is f64
//! so analytic gradients can be held to finite-difference checks at 1e-4
//! relative error.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// One dense layer; `w` is row-major `[out_dim x in_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        // Xavier-uniform keeps tanh pre-activations in the linear region
        // at initialization.
        let scale = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Self {
            w: (0..in_dim * out_dim).map(|_| rng.gen_range(-scale..scale)).collect(),
            b: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.in_dim);
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

/// MLP with tanh hidden activations and a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Post-activation values of every layer from one forward pass;
/// `post[0]` is the input itself.
#[derive(Debug, Clone, Default)]
pub struct Cache {
    post: Vec<Vec<f64>>,
}

/// Parameter gradients in the same shape as [`Mlp`], accumulated across
/// a minibatch.
#[derive(Debug, Clone)]
pub struct Grads {
    pub dw: Vec<Vec<f64>>,
    pub db: Vec<Vec<f64>>,
}

impl Mlp {
    /// Builds `dims[0] -> dims[1] -> ... -> dims.last()`.
    pub fn new(dims: &[usize], rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let layers = dims
            .windows(2)
            .map(|pair| Dense::new(pair[0], pair[1], rng))
            .collect();
        Self { layers }
    }

    #[must_use]
    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    #[must_use]
    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").out_dim
    }

    /// Forward pass storing activations for a later backward pass.
    pub fn forward_cached(&self, x: &[f64], cache: &mut Cache) -> Vec<f64> {
        cache.post.clear();
        cache.post.push(x.to_vec());
        let mut current = x.to_vec();
        let mut scratch = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.apply(&current, &mut scratch);
            if l != last {
                for v in scratch.iter_mut() {
                    *v = v.tanh();
                }
            }
            current = scratch.clone();
            cache.post.push(current.clone());
        }
        current
    }

    /// Forward pass without caching.
    #[must_use]
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cache = Cache::default();
        self.forward_cached(x, &mut cache)
    }

    /// Back-propagates `dout` = dL/d(output) through the cached pass,
    /// accumulating parameter gradients into `grads`.
    pub fn backward(&self, cache: &Cache, dout: &[f64], grads: &mut Grads) {
        let last = self.layers.len() - 1;
        let mut dz: Vec<f64> = dout.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if l != last {
                // The cached value is tanh(z); tanh' = 1 - tanh^2.
                let post = &cache.post[l + 1];
                for (d, a) in dz.iter_mut().zip(post) {
                    *d *= 1.0 - a * a;
                }
            }
            let input = &cache.post[l];
            let dw = &mut grads.dw[l];
            for o in 0..layer.out_dim {
                let row = &mut dw[o * layer.in_dim..(o + 1) * layer.in_dim];
                let d = dz[o];
                for (slot, xi) in row.iter_mut().zip(input) {
                    *slot += d * xi;
                }
                grads.db[l][o] += d;
            }
            if l > 0 {
                let mut dprev = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                    let d = dz[o];
                    for (slot, wi) in dprev.iter_mut().zip(row) {
                        *slot += d * wi;
                    }
                }
                dz = dprev;
            }
        }
    }

    #[must_use]
    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameters as one flat vector, layer by layer, weights then bias.
    #[must_use]
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    /// Writes a flat vector (same order as [`Mlp::flatten`]) back.
    pub fn assign(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params(), "parameter count mismatch");
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
    }

    /// Layer sizes `[input, hidden..., output]`.
    #[must_use]
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        dims
    }
}

impl Grads {
    #[must_use]
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            dw: net.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            db: net.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    pub fn reset(&mut self) {
        for v in self.dw.iter_mut().chain(self.db.iter_mut()) {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Same flat order as [`Mlp::flatten`].
    #[must_use]
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (dw, db) in self.dw.iter().zip(&self.db) {
            out.extend_from_slice(dw);
            out.extend_from_slice(db);
        }
        out
    }

    /// True if any accumulated gradient is not finite.
    #[must_use]
    pub fn any_non_finite(&self) -> bool {
        self.dw
            .iter()
            .chain(self.db.iter())
            .flatten()
            .any(|v| !v.is_finite())
    }
}

/// Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    #[must_use]
    pub fn new(lr: f64, n_params: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// One descent step on `net` along `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) {
        let mut params = net.flatten();
        let grad = grads.flatten();
        assert_eq!(params.len(), grad.len());
        assert_eq!(params.len(), self.m.len(), "optimizer state size mismatch");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        net.assign(&params);
    }
}
