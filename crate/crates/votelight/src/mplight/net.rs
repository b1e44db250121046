//! Minimal fully-connected Q-network with manual backprop.
//!
//! Parameters are stored as little-endian-friendly f32 (matching the weight
//! file format); all arithmetic runs in f64 so analytic gradients check out
//! against central finite differences to high precision.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One dense layer, weights row-major `[out_dim x in_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f32>,
    pub b: Vec<f32>,
}

impl Dense {
    fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        // Xavier-uniform init.
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = (0..in_dim * out_dim).map(|_| rng.gen_range(-limit..limit) as f32).collect();
        Dense { in_dim, out_dim, w, b: vec![0.0; out_dim] }
    }

    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b[o] as f64;
            for (wi, xi) in row.iter().zip(input) {
                acc += *wi as f64 * xi;
            }
            out.push(acc);
        }
    }
}

/// A training example: input state, acted phase index, TD target.
#[derive(Debug, Clone)]
pub struct QSample {
    pub state: Vec<f64>,
    pub action: usize,
    pub target: f64,
}

/// MLP with ReLU hidden layers and a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layers: Vec<Dense>,
}

impl QNetwork {
    /// `dims` lists layer widths input-first, e.g. `[12, 32, 32, 4]`.
    pub fn new(dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2, "network needs at least one layer");
        let layers = dims.windows(2).map(|w| Dense::new(w[0], w[1], rng)).collect();
        QNetwork { layers }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Self {
        QNetwork { layers }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].in_dim];
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), self.input_dim());
        let mut current = input.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(&current, &mut next);
            if i != last {
                for v in &mut next {
                    *v = v.max(0.0);
                }
            }
            std::mem::swap(&mut current, &mut next);
        }
        current
    }

    /// Mean squared error of `Q(state)[action]` against the targets.
    pub fn loss(&self, batch: &[QSample]) -> f64 {
        assert!(!batch.is_empty());
        let mut acc = 0.0;
        for s in batch {
            let q = self.forward(&s.state);
            let d = q[s.action] - s.target;
            acc += d * d;
        }
        acc / batch.len() as f64
    }

    /// Loss and the full flattened gradient (layer order, weights then bias).
    pub fn loss_and_gradient(&self, batch: &[QSample]) -> (f64, Vec<f64>) {
        assert!(!batch.is_empty());
        let mut grad = vec![0.0f64; self.param_count()];
        let mut loss = 0.0;
        let last = self.layers.len() - 1;
        for sample in batch {
            // Forward pass keeping post-activation values per layer.
            let mut activations: Vec<Vec<f64>> = vec![sample.state.clone()];
            let mut pre: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
            for (i, layer) in self.layers.iter().enumerate() {
                let mut z = Vec::new();
                layer.forward(activations.last().unwrap(), &mut z);
                pre.push(z.clone());
                if i != last {
                    for v in &mut z {
                        *v = v.max(0.0);
                    }
                }
                activations.push(z);
            }
            let q = activations.last().unwrap();
            let diff = q[sample.action] - sample.target;
            loss += diff * diff;
            // d(loss)/d(output): only the acted entry is non-zero.
            let mut delta = vec![0.0f64; self.output_dim()];
            delta[sample.action] = 2.0 * diff / batch.len() as f64;
            // Backward pass.
            let mut offset = self.param_count();
            for (i, layer) in self.layers.iter().enumerate().rev() {
                offset -= layer.w.len() + layer.b.len();
                let input = &activations[i];
                let (gw, gb) = grad[offset..offset + layer.w.len() + layer.b.len()]
                    .split_at_mut(layer.w.len());
                for o in 0..layer.out_dim {
                    gb[o] += delta[o];
                    let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (g, x) in row.iter_mut().zip(input) {
                        *g += delta[o] * x;
                    }
                }
                if i > 0 {
                    let mut prev = vec![0.0f64; layer.in_dim];
                    for o in 0..layer.out_dim {
                        let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                        for (p, wi) in prev.iter_mut().zip(row) {
                            *p += delta[o] * *wi as f64;
                        }
                    }
                    // ReLU mask of the previous layer's pre-activation.
                    for (p, z) in prev.iter_mut().zip(&pre[i - 1]) {
                        if *z <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        (loss / batch.len() as f64, grad)
    }

    /// One SGD step; returns the pre-update batch loss.
    pub fn train_batch(&mut self, batch: &[QSample], learning_rate: f64) -> f64 {
        let (loss, grad) = self.loss_and_gradient(batch);
        let mut idx = 0;
        for layer in &mut self.layers {
            for w in layer.w.iter_mut().chain(layer.b.iter_mut()) {
                *w = (*w as f64 - learning_rate * grad[idx]) as f32;
                idx += 1;
            }
        }
        loss
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn get_param(&self, mut index: usize) -> f32 {
        for layer in &self.layers {
            if index < layer.w.len() {
                return layer.w[index];
            }
            index -= layer.w.len();
            if index < layer.b.len() {
                return layer.b[index];
            }
            index -= layer.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut index: usize, value: f32) {
        for layer in &mut self.layers {
            if index < layer.w.len() {
                layer.w[index] = value;
                return;
            }
            index -= layer.w.len();
            if index < layer.b.len() {
                layer.b[index] = value;
                return;
            }
            index -= layer.b.len();
        }
        panic!("parameter index out of range");
    }
}
