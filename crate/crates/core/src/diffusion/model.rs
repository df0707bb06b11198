use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Fully connected network with ReLU hidden layers and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Per-layer gradients, shaped like the network.
pub struct Grads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Mlp {
    /// He-initialised network; the output layer starts scaled down.
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        let n = sizes.len() - 1;
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        for l in 0..n {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let scale = (2.0 / fan_in as f64).sqrt() * if l + 1 == n { 0.1 } else { 1.0 };
            weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| scale * rng.sample::<f64, _>(StandardNormal)));
            biases.push(Array1::zeros(fan_out));
        }
        Self { weights, biases }
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().unwrap().ncols()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Batched forward pass; rows are samples.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = h.dot(w) + b;
            if l < last {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        h
    }

    /// Mean squared error over all outputs and its gradient.
    pub fn mse_grad(&self, x: &Array2<f64>, target: &Array2<f64>) -> (f64, Grads) {
        let last = self.weights.len() - 1;
        let mut acts = vec![x.clone()];
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut h = acts[l].dot(w) + b;
            if l < last {
                h.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(h);
        }
        let out = acts.pop().unwrap();
        let diff = &out - target;
        let n = diff.len() as f64;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
        let mut delta = diff * (2.0 / n);
        let mut gw = vec![Array2::zeros((0, 0)); self.weights.len()];
        let mut gb = vec![Array1::zeros(0); self.weights.len()];
        for l in (0..=last).rev() {
            gw[l] = acts[l].t().dot(&delta);
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut d = delta.dot(&self.weights[l].t());
                d.zip_mut_with(&acts[l], |g, &a| {
                    if a <= 0.0 {
                        *g = 0.0
                    }
                });
                delta = d;
            }
        }
        (loss, Grads { weights: gw, biases: gb })
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Adam optimiser state for one [`Mlp`].
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        let zeros = || Grads {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        };
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: zeros(), v: zeros() }
    }

    pub fn step(&mut self, net: &mut Mlp, g: &Grads) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let (lr, eps) = (self.lr, self.eps);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for l in 0..net.weights.len() {
            ndarray::Zip::from(&mut net.weights[l])
                .and(&g.weights[l])
                .and(&mut self.m.weights[l])
                .and(&mut self.v.weights[l])
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut net.biases[l])
                .and(&g.biases[l])
                .and(&mut self.m.biases[l])
                .and(&mut self.v.biases[l])
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct LayerDoc {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Mlp {
    pub(crate) fn to_docs(&self) -> Vec<LayerDoc> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| LayerDoc { weights: w.rows().into_iter().map(|r| r.to_vec()).collect(), bias: b.to_vec() })
            .collect()
    }

    pub(crate) fn from_docs(layers: &[LayerDoc]) -> Result<Self, String> {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, d) in layers.iter().enumerate() {
            let rows = d.weights.len();
            let cols = d.weights.first().map_or(0, |r| r.len());
            if rows == 0 || cols == 0 || d.weights.iter().any(|r| r.len() != cols) || d.bias.len() != cols {
                return Err(format!("layer {l} has inconsistent shape"));
            }
            if l > 0 && weights.last().map(|w: &Array2<f64>| w.ncols()) != Some(rows) {
                return Err(format!("layer {l} input does not match previous output"));
            }
            let flat: Vec<f64> = d.weights.iter().flatten().copied().collect();
            weights.push(Array2::from_shape_vec((rows, cols), flat).map_err(|e| e.to_string())?);
            biases.push(Array1::from(d.bias.clone()));
        }
        if weights.is_empty() {
            return Err("no layers".into());
        }
        Ok(Self { weights, biases })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[4, 6, 5, 3], &mut rng);
        let x = Array2::from_shape_fn((5, 4), |_| rng.sample::<f64, _>(StandardNormal));
        let y = Array2::from_shape_fn((5, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let (_, g) = net.mse_grad(&x, &y);
        let h = 1e-6;
        for l in 0..net.weights.len() {
            for idx in [(0, 0), (1, 2), (2, 1)] {
                if idx.0 >= net.weights[l].nrows() || idx.1 >= net.weights[l].ncols() {
                    continue;
                }
                let mut a = net.clone();
                let mut b = net.clone();
                a.weights[l][idx] += h;
                b.weights[l][idx] -= h;
                let fd = (a.mse_grad(&x, &y).0 - b.mse_grad(&x, &y).0) / (2.0 * h);
                assert!((fd - g.weights[l][idx]).abs() < 1e-6, "layer {l} {idx:?}: {fd} vs {}", g.weights[l][idx]);
            }
            let mut a = net.clone();
            let mut b = net.clone();
            a.biases[l][0] += h;
            b.biases[l][0] -= h;
            let fd = (a.mse_grad(&x, &y).0 - b.mse_grad(&x, &y).0) / (2.0 * h);
            assert!((fd - g.biases[l][0]).abs() < 1e-6);
        }
    }

    #[test]
    fn adam_fits_linear_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::new(&[2, 16, 1], &mut rng);
        let mut opt = Adam::new(&net, 1e-2);
        let x = Array2::from_shape_fn((64, 2), |_| rng.random_range(-1.0..1.0));
        let y = x.map_axis(Axis(1), |r| r[0] - 0.5 * r[1]).insert_axis(Axis(1));
        let first = net.mse_grad(&x, &y).0;
        for _ in 0..500 {
            let (_, g) = net.mse_grad(&x, &y);
            opt.step(&mut net, &g);
        }
        assert!(net.mse_grad(&x, &y).0 < first * 0.01);
    }

    #[test]
    fn docs_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&[3, 4, 2], &mut rng);
        assert_eq!(Mlp::from_docs(&net.to_docs()).unwrap(), net);
        let mut bad = net.to_docs();
        bad[1].bias.pop();
        assert!(Mlp::from_docs(&bad).is_err());
    }
}
