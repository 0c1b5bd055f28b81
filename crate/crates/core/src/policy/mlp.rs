//! Fully connected network with exact reverse-mode gradients.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};

use super::PolicyError;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Activation {
    #[default]
    Elu,
    Tanh,
    Linear,
}

impl Activation {
    pub fn tag(self) -> u32 {
        match self {
            Self::Elu => 0,
            Self::Tanh => 1,
            Self::Linear => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Self::Elu),
            1 => Some(Self::Tanh),
            2 => Some(Self::Linear),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Self::Elu if x > 0.0 => x,
            Self::Elu => x.exp_m1(),
            Self::Tanh => x.tanh(),
            Self::Linear => x,
        }
    }

    /// Derivative from the pre-activation `x` and output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Self::Elu if x > 0.0 => 1.0,
            Self::Elu => y + 1.0,
            Self::Tanh => 1.0 - y * y,
            Self::Linear => 1.0,
        }
    }
}

/// Network weights. Layer `i` maps `sizes[i]` inputs to `sizes[i + 1]`
/// outputs with weight shape `(out, in)`; hidden layers use `activation`,
/// the last layer is linear. `log_std` is empty for value networks.
#[derive(Debug, Clone)]
pub struct PolicyParams {
    pub sizes: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub log_std: Array1<f64>,
    pub activation: Activation,
    /// Incremented by every in-place update; caches record it.
    pub generation: u64,
}

/// Equality ignores `generation`.
impl PartialEq for PolicyParams {
    fn eq(&self, other: &Self) -> bool {
        self.sizes == other.sizes
            && self.weights == other.weights
            && self.biases == other.biases
            && self.log_std == other.log_std
            && self.activation == other.activation
    }
}

/// Gradients with the same shapes as [`PolicyParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub log_std: Array1<f64>,
}

impl Gradients {
    pub fn zeros_like(p: &PolicyParams) -> Self {
        Self {
            weights: p.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: p.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            log_std: Array1::zeros(p.log_std.raw_dim()),
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.weights.iter().map(|w| w.iter().map(|v| v * v).sum::<f64>()).sum::<f64>()
            + self.biases.iter().map(|b| b.iter().map(|v| v * v).sum::<f64>()).sum::<f64>()
            + self.log_std.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn scale(&mut self, s: f64) {
        self.weights.iter_mut().for_each(|w| *w *= s);
        self.biases.iter_mut().for_each(|b| *b *= s);
        self.log_std *= s;
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
            && self.log_std.iter().all(|v| v.is_finite())
    }
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer, batch-major.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Array2<f64>>,
    generation: u64,
    sizes: Vec<usize>,
}

impl PolicyParams {
    pub fn zeros(sizes: &[usize], action_dim: usize, activation: Activation) -> Self {
        Self {
            sizes: sizes.to_vec(),
            weights: sizes
                .windows(2)
                .map(|w| Array2::zeros((w[1], w[0])))
                .collect(),
            biases: sizes[1..].iter().map(|&n| Array1::zeros(n)).collect(),
            log_std: Array1::zeros(action_dim),
            activation,
            generation: 0,
        }
    }

    /// Gaussian initialization with variance `1 / fan_in`, the output layer
    /// further scaled by `output_gain`.
    pub fn init(
        rng: &mut Rng,
        sizes: &[usize],
        action_dim: usize,
        initial_std: f64,
        output_gain: f64,
    ) -> Self {
        let mut p = Self::zeros(sizes, action_dim, Activation::Elu);
        let last = p.weights.len() - 1;
        for (i, w) in p.weights.iter_mut().enumerate() {
            let fan_in = w.ncols() as f64;
            let gain = if i == last { output_gain } else { 1.0 };
            w.mapv_inplace(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * gain / fan_in.sqrt()
            });
        }
        p.log_std.fill(initial_std.ln());
        p
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_parameters(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
            + self.log_std.len()
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.sizes.len() < 2 || self.weights.len() != self.sizes.len() - 1 {
            return Err(PolicyError::Shape("need at least one layer".into()));
        }
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if w.dim() != (self.sizes[i + 1], self.sizes[i]) || b.len() != self.sizes[i + 1] {
                return Err(PolicyError::Shape(format!(
                    "layer {i}: weight {:?}, bias {} for sizes {} -> {}",
                    w.dim(),
                    b.len(),
                    self.sizes[i],
                    self.sizes[i + 1]
                )));
            }
        }
        let finite = self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
            && self.log_std.iter().all(|v| v.is_finite());
        if !finite {
            return Err(PolicyError::NonFinite("parameters".into()));
        }
        Ok(())
    }

    /// Batch forward pass; rows of `input` are samples.
    pub fn forward(&self, input: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache), PolicyError> {
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.weights.len()),
            pre: Vec::with_capacity(self.weights.len()),
            generation: self.generation,
            sizes: self.sizes.clone(),
        };
        let out = self.run(input, Some(&mut cache))?;
        Ok((out, cache))
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>, PolicyError> {
        self.run(input, None)
    }

    fn run(
        &self,
        input: ArrayView2<'_, f64>,
        mut cache: Option<&mut ForwardCache>,
    ) -> Result<Array2<f64>, PolicyError> {
        let last = self.weights.len() - 1;
        let mut x = input.to_owned();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if x.ncols() != w.ncols() {
                return Err(PolicyError::Shape(format!(
                    "layer {i} expects {} inputs, got {}",
                    w.ncols(),
                    x.ncols()
                )));
            }
            let mut z = x.dot(&w.t());
            z += b;
            if let Some(c) = cache.as_deref_mut() {
                c.inputs.push(x);
            }
            if i == last {
                x = z;
            } else {
                let act = self.activation;
                let y = z.mapv(|v| act.apply(v));
                if let Some(c) = cache.as_deref_mut() {
                    c.pre.push(z);
                }
                x = y;
            }
        }
        Ok(x)
    }

    /// Gradients of `Σ output_grad ⊙ output` for the cached forward pass.
    /// The log-std gradient is left at zero.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<'_, f64>,
    ) -> Result<Gradients, PolicyError> {
        if cache.generation != self.generation || cache.sizes != self.sizes {
            return Err(PolicyError::StaleCache);
        }
        let n = self.weights.len();
        if output_grad.ncols() != self.output_size() || output_grad.nrows() != cache.inputs[0].nrows() {
            return Err(PolicyError::Shape(format!(
                "output gradient {:?} does not match the cached batch",
                output_grad.dim()
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = output_grad.to_owned();
        for i in (0..n).rev() {
            grads.weights[i] = delta.t().dot(&cache.inputs[i]);
            grads.biases[i] = delta.sum_axis(Axis(0));
            if i == 0 {
                break;
            }
            let mut upstream = delta.dot(&self.weights[i]);
            let act = self.activation;
            ndarray::Zip::from(&mut upstream)
                .and(&cache.pre[i - 1])
                .and(&cache.inputs[i])
                .for_each(|g, &x, &y| *g *= act.derivative(x, y));
            delta = upstream;
        }
        Ok(grads)
    }

    /// `self += scale · g`, bumping the generation.
    pub fn add_scaled(&mut self, g: &Gradients, scale: f64) {
        for (w, gw) in self.weights.iter_mut().zip(&g.weights) {
            w.scaled_add(scale, gw);
        }
        for (b, gb) in self.biases.iter_mut().zip(&g.biases) {
            b.scaled_add(scale, gb);
        }
        self.log_std.scaled_add(scale, &g.log_std);
        self.generation += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::array;

    #[test]
    fn zero_network_outputs_zero() {
        let p = PolicyParams::zeros(&[3, 5, 2], 2, Activation::Elu);
        let out = p.predict(array![[1.0, -2.0, 3.0]].view()).unwrap();
        assert_eq!(out, array![[0.0, 0.0]]);
    }

    #[test]
    fn identity_layer() {
        let mut p = PolicyParams::zeros(&[3, 3], 0, Activation::Linear);
        p.weights[0] = Array2::eye(3);
        let x = array![[0.5, -1.0, 2.0]];
        assert_eq!(p.predict(x.view()).unwrap(), x);
    }

    #[test]
    fn shape_error_names_layer() {
        let p = PolicyParams::zeros(&[3, 4, 2], 2, Activation::Elu);
        let err = p.predict(array![[1.0, 2.0]].view()).unwrap_err();
        assert!(err.to_string().contains("layer 0"), "{err}");
    }

    #[test]
    fn stale_cache_rejected() {
        let mut p = PolicyParams::init(&mut stream(0, 0), &[2, 3, 1], 1, 1.0, 1.0);
        let (_, cache) = p.forward(array![[1.0, 2.0]].view()).unwrap();
        let g = Gradients::zeros_like(&p);
        p.add_scaled(&g, 1.0);
        assert!(matches!(
            p.backward(&cache, array![[1.0]].view()),
            Err(PolicyError::StaleCache)
        ));
    }

    #[test]
    fn zero_output_gradient() {
        let p = PolicyParams::init(&mut stream(0, 0), &[2, 3, 2], 2, 1.0, 1.0);
        let (_, cache) = p.forward(array![[1.0, 2.0], [0.3, -0.1]].view()).unwrap();
        let g = p.backward(&cache, Array2::zeros((2, 2)).view()).unwrap();
        assert_eq!(g.squared_norm(), 0.0);
    }
}
