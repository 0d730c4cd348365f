//! Dense tanh networks with exact reverse-mode gradients.
//!
//! Parameters live in one flat `Vec<f64>` per network (per layer: the
//! `out x in` weight matrix row-major, then the bias), which keeps the
//! optimizer and checkpointing trivial. All math is in double precision so
//! finite-difference tolerances stay meaningful.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Fully-connected network: tanh on every hidden layer, identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// Layer widths, `[input, hidden..., output]`.
    pub dims: Vec<usize>,
    /// Flat parameters; see [`Mlp::layer_offset`].
    pub params: Vec<f64>,
}

/// Per-layer activations recorded by a forward pass, input first.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache is never empty")
    }
}

impl Mlp {
    /// Scaled-uniform fan-in initialization; hidden layers use gain 1 and the
    /// output layer `output_gain`. Biases start at zero.
    pub fn new(dims: &[usize], output_gain: f64, rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2, "network needs input and output dims");
        let mut params = Vec::with_capacity(Self::param_count_for(dims));
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let gain = if l + 2 == dims.len() { output_gain } else { 1.0 };
            let bound = gain * (3.0 / fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.random_range(-bound..bound));
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            dims: dims.to_vec(),
            params,
        }
    }

    /// All-zero network with the same shape conventions.
    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            params: vec![0.0; Self::param_count_for(dims)],
        }
    }

    pub fn param_count_for(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Offset of layer `l`'s weight block in the flat parameter vector.
    fn layer_offset(&self, l: usize) -> usize {
        (0..l)
            .map(|i| self.dims[i] * self.dims[i + 1] + self.dims[i + 1])
            .sum()
    }

    /// Runs the network, recording every activation for a later backward pass.
    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let n_layers = self.n_layers();
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(input.to_vec());
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let off = self.layer_offset(l);
            let w = &self.params[off..off + fan_in * fan_out];
            let b = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            let prev = activations.last().unwrap();
            let mut out = Vec::with_capacity(fan_out);
            for o in 0..fan_out {
                let mut z = b[o];
                let row = &w[o * fan_in..(o + 1) * fan_in];
                for (wi, xi) in row.iter().zip(prev.iter()) {
                    z += wi * xi;
                }
                out.push(if l + 1 < n_layers { z.tanh() } else { z });
            }
            activations.push(out);
        }
        Ok(ForwardCache { activations })
    }

    /// Runs the network and returns only the output.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(input)?.output().to_vec())
    }

    /// Reverse-mode pass: accumulates parameter gradients into `grads`
    /// (same layout as `params`) and returns the gradient at the input.
    ///
    /// `upstream` is the loss gradient with respect to the network output.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                got: upstream.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: grads.len(),
            });
        }
        let n_layers = self.n_layers();
        let mut dz = upstream.to_vec();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let off = self.layer_offset(l);
            // Hidden layers applied tanh; fold its derivative into dz.
            if l + 1 < n_layers {
                let act = &cache.activations[l + 1];
                for (d, a) in dz.iter_mut().zip(act.iter()) {
                    *d *= 1.0 - a * a;
                }
            }
            let prev = &cache.activations[l];
            let (w_grad, b_grad) = grads[off..off + fan_in * fan_out + fan_out]
                .split_at_mut(fan_in * fan_out);
            for o in 0..fan_out {
                b_grad[o] += dz[o];
                let row = &mut w_grad[o * fan_in..(o + 1) * fan_in];
                for (g, xi) in row.iter_mut().zip(prev.iter()) {
                    *g += dz[o] * xi;
                }
            }
            let w = &self.params[off..off + fan_in * fan_out];
            let mut dx = vec![0.0; fan_in];
            for o in 0..fan_out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                for (dxi, wi) in dx.iter_mut().zip(row.iter()) {
                    *dxi += dz[o] * wi;
                }
            }
            dz = dx;
        }
        Ok(dz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 4, 2]);
        assert_eq!(net.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_like_net_computes_tanh() {
        // One hidden unit with weight 1, identity output layer.
        let mut net = Mlp::zeros(&[1, 1, 1]);
        net.params = vec![1.0, 0.0, 1.0, 0.0];
        for x in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let y = net.forward(&[x]).unwrap()[0];
            assert!((y - x.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn init_is_bit_stable_across_runs() {
        let mut r1 = ChaCha8Rng::seed_from_u64(42);
        let mut r2 = ChaCha8Rng::seed_from_u64(42);
        let a = Mlp::new(&[9, 64, 64, 2], 0.01, &mut r1);
        let b = Mlp::new(&[9, 64, 64, 2], 0.01, &mut r2);
        assert_eq!(a, b);
        let x: Vec<f64> = (0..9).map(|i| (i as f64) * 0.1 - 0.4).collect();
        let ya = a.forward(&x).unwrap();
        let yb = b.forward(&x).unwrap();
        assert!(ya.iter().zip(&yb).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn linear_net_weight_gradient_is_input() {
        // Single linear layer: d out / d w_ij = x_j.
        let mut net = Mlp::zeros(&[3, 1]);
        net.params = vec![0.2, -0.1, 0.4, 0.0];
        let x = [1.5, -2.0, 0.25];
        let cache = net.forward_cached(&x).unwrap();
        let mut grads = vec![0.0; net.params.len()];
        net.backward(&cache, &[1.0], &mut grads).unwrap();
        assert_eq!(&grads[0..3], &x);
        assert_eq!(grads[3], 1.0);
    }

    #[test]
    fn backward_matches_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = Mlp::new(&[9, 64, 64, 2], 1.0, &mut rng);
        let x: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Scalar loss: fixed random projection of the output.
        let u: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cache = net.forward_cached(&x).unwrap();
        let mut grads = vec![0.0; net.params.len()];
        net.backward(&cache, &u, &mut grads).unwrap();

        let loss = |net: &Mlp| -> f64 {
            let y = net.forward(&x).unwrap();
            y.iter().zip(&u).map(|(a, b)| a * b).sum()
        };
        let h = 1e-5;
        let mut max_rel: f64 = 0.0;
        let mut perturbed = net.clone();
        for i in 0..net.params.len() {
            let orig = perturbed.params[i];
            perturbed.params[i] = orig + h;
            let plus = loss(&perturbed);
            perturbed.params[i] = orig - h;
            let minus = loss(&perturbed);
            perturbed.params[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let denom = grads[i].abs().max(numeric.abs());
            if denom > 1e-7 {
                max_rel = max_rel.max((grads[i] - numeric).abs() / denom);
            } else {
                assert!((grads[i] - numeric).abs() < 1e-7);
            }
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }
}
