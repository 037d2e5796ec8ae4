use serde::{Deserialize, Serialize};

use super::network::{Gradients, QNetwork};

/// RMSProp state owned alongside one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    /// Running average of squared gradients, flattened like the parameters.
    pub mean_square: Vec<f64>,
}

impl RmsProp {
    pub fn new(net: &QNetwork, learning_rate: f64, decay: f64, epsilon: f64) -> Self {
        assert!(decay > 0.0 && decay < 1.0, "decay must lie in (0, 1)");
        Self {
            learning_rate,
            decay,
            epsilon,
            mean_square: vec![0.0; net.param_count()],
        }
    }

    pub fn with_defaults(net: &QNetwork) -> Self {
        Self::new(net, 1e-3, 0.99, 1e-8)
    }

    /// `v <- d v + (1 - d) g^2`, `theta <- theta - lr g / (sqrt(v) + e)`.
    pub fn step(&mut self, net: &mut QNetwork, grads: &Gradients) {
        let (lr, d, e) = (self.learning_rate, self.decay, self.epsilon);
        let mut v = self.mean_square.iter_mut();
        for (layer, g) in net.layers_mut().iter_mut().zip(&grads.layers) {
            assert_eq!(layer.weights.dim(), g.weights.dim(), "gradient shape");
            assert_eq!(layer.bias.dim(), g.bias.dim(), "gradient shape");
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let gs = g.weights.iter().chain(g.bias.iter());
            for (theta, &g) in params.zip(gs) {
                let v = v.next().expect("optimizer state too short");
                *v = d * *v + (1.0 - d) * g * g;
                *theta -= lr * g / (v.sqrt() + e);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> QNetwork {
        let mut net = QNetwork::new(&[1, 1], 0).unwrap();
        net.set_params_flat(&[0.3, -0.2]).unwrap();
        net
    }

    #[test]
    fn zero_gradient_only_decays_state() {
        let mut net = tiny();
        let mut opt = RmsProp::with_defaults(&net);
        opt.mean_square = vec![2.0, 4.0];
        let g = Gradients::zeros_like(&net);
        opt.step(&mut net, &g);
        assert_eq!(net.params_flat(), vec![0.3, -0.2]);
        assert_eq!(opt.mean_square, vec![2.0 * 0.99, 4.0 * 0.99]);
    }

    #[test]
    fn first_step_magnitude() {
        let mut net = tiny();
        let mut opt = RmsProp::with_defaults(&net);
        let g = Gradients::from_flat_like(&net, &[1.0, 1.0]);
        opt.step(&mut net, &g);
        let p = net.params_flat();
        let expected = 0.001 / (0.01f64.sqrt() + 1e-8);
        assert!((0.3 - p[0] - expected).abs() < 1e-15);
        assert!((expected - 0.01).abs() < 1e-8);
        // equal gradients, equal updates
        assert_eq!(0.3 - p[0], -0.2 - p[1]);
    }

    #[test]
    fn quadratic_loss_decreases() {
        // loss = (w - 2)^2 with the bias held out of the loss
        let mut net = tiny();
        let mut opt = RmsProp::with_defaults(&net);
        let mut prev = f64::INFINITY;
        for _ in 0..100 {
            let w = net.params_flat()[0];
            let loss = (w - 2.0).powi(2);
            assert!(loss < prev);
            prev = loss;
            let g = Gradients::from_flat_like(&net, &[2.0 * (w - 2.0), 0.0]);
            opt.step(&mut net, &g);
        }
        assert!(opt.mean_square.iter().all(|&v| v >= 0.0));
    }
}
