use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NeuroError;

/// Fully connected layer; `weights` is `(inputs, outputs)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Self {
        Self {
            weights: Array2::zeros(self.weights.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }
}

/// ReLU multilayer perceptron with a linear output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork {
    layers: Vec<Dense>,
}

/// Parameter-shaped gradient (or optimizer moment) storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn from_flat_like(net: &QNetwork, values: &[f64]) -> Self {
        let mut layers: Vec<Dense> = net.layers.iter().map(Dense::zeros_like).collect();
        unflatten(&mut layers, values);
        Self { layers }
    }

    pub fn zeros_like(net: &QNetwork) -> Self {
        Self {
            layers: net.layers.iter().map(Dense::zeros_like).collect(),
        }
    }
}

fn flatten(layers: &[Dense]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
        .collect()
}

fn unflatten(layers: &mut [Dense], values: &[f64]) {
    let mut it = values.iter().copied();
    for l in layers {
        for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
            *w = it.next().expect("parameter vector too short");
        }
    }
    assert!(it.next().is_none(), "parameter vector too long");
}

/// Activations kept from a forward pass for backpropagation.
pub struct ForwardCache {
    /// Input followed by every hidden post-activation.
    pub inputs: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl ForwardCache {
    /// Sign pattern of all hidden units, used to spot ReLU kinks.
    pub fn hidden_mask(&self) -> Vec<bool> {
        self.inputs[1..].iter().flat_map(|a| a.iter().map(|&v| v > 0.0)).collect()
    }
}

impl QNetwork {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self, NeuroError> {
        if layer_sizes.len() < 2 {
            return Err(NeuroError::Architecture("need at least an input and an output layer".into()));
        }
        if layer_sizes.contains(&0) {
            return Err(NeuroError::Architecture(format!("zero-size layer in {layer_sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_simple_fn((w[0], w[1]), || rng.random_range(-bound..bound)),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, NeuroError> {
        if layers.is_empty() {
            return Err(NeuroError::Architecture("no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.ncols() != l.bias.len() || l.weights.is_empty() {
                return Err(NeuroError::Architecture(format!("layer {i} weight/bias mismatch")));
            }
            if i > 0 && layers[i - 1].weights.ncols() != l.weights.nrows() {
                return Err(NeuroError::Architecture(format!("layer {i} input width mismatch")));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].weights.nrows()];
        sizes.extend(self.layers.iter().map(|l| l.weights.ncols()));
        sizes
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map(|l| l.weights.ncols()).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params_flat(&mut self, values: &[f64]) -> Result<(), NeuroError> {
        if values.len() != self.param_count() {
            return Err(NeuroError::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        unflatten(&mut self.layers, values);
        Ok(())
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), NeuroError> {
        if x.ncols() != self.input_size() {
            return Err(NeuroError::Shape(format!(
                "input width {} does not match network input {}",
                x.ncols(),
                self.input_size()
            )));
        }
        Ok(())
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<ForwardCache, NeuroError> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = current.dot(&layer.weights);
            z += &layer.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(std::mem::replace(&mut current, z));
        }
        Ok(ForwardCache { inputs, output: current })
    }

    /// Q-values for a batch of rows.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NeuroError> {
        Ok(self.forward_cached(x)?.output)
    }

    /// Q-values for a single input vector.
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>, NeuroError> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| NeuroError::Shape(e.to_string()))?;
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    /// Parameter gradient of `mean_b <output_gradient[b], f(x[b])>`.
    pub fn backward(&self, x: ArrayView2<f64>, output_gradient: ArrayView2<f64>) -> Result<Gradients, NeuroError> {
        let cache = self.forward_cached(x)?;
        self.backward_cached(&cache, output_gradient)
    }

    pub fn backward_cached(&self, cache: &ForwardCache, output_gradient: ArrayView2<f64>) -> Result<Gradients, NeuroError> {
        if output_gradient.dim() != cache.output.dim() {
            return Err(NeuroError::Shape(format!(
                "output gradient {:?} does not match output {:?}",
                output_gradient.dim(),
                cache.output.dim()
            )));
        }
        let batch = output_gradient.nrows().max(1) as f64;
        let mut delta = output_gradient.to_owned() / batch;
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[i];
            let gw = input.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&layer.weights.t());
                ndarray::Zip::from(&mut back).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
            grads.push(Dense { weights: gw, bias: gb });
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }
}
