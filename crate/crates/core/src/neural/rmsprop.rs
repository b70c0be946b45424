use ndarray::Zip;

use super::mlp::{Gradients, Mlp};

pub const DEFAULT_DECAY: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// RMSProp: a running mean of squared gradients scales each step.
#[derive(Debug, Clone)]
pub struct RmsPropState {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    mean_square: Mlp,
}

impl RmsPropState {
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            decay: DEFAULT_DECAY,
            epsilon: DEFAULT_EPSILON,
            mean_square: net.zeros_like(),
        }
    }

    pub fn accumulators(&self) -> impl Iterator<Item = &f64> {
        self.mean_square.params()
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        let (lr, rho, eps) = (self.learning_rate, self.decay, self.epsilon);
        let update = |p: &mut f64, s: &mut f64, &g: &f64| {
            *s = rho * *s + (1.0 - rho) * g * g;
            *p -= lr * g / (s.sqrt() + eps);
        };
        for ((layer, acc), g) in net
            .layers_mut()
            .iter_mut()
            .zip(self.mean_square.layers_mut())
            .zip(grads.layers())
        {
            Zip::from(&mut layer.weights)
                .and(&mut acc.weights)
                .and(&g.weights)
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(&mut acc.bias)
                .and(&g.bias)
                .for_each(update);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn first_step_matches_hand_computation() {
        let mut net = Mlp::zeros(&[1, 1]);
        net.layers_mut()[0].weights[[0, 0]] = 1.0;
        let mut grads = net.zeros_like();
        grads.layers_mut()[0].weights = array![[2.0]];
        grads.layers_mut()[0].bias = array![-1.0];

        let mut opt = RmsPropState::new(&net, 0.1);
        opt.step(&mut net, &grads);
        // s = 0.1 * g^2, step = lr * g / sqrt(s) = lr * sign(g) / sqrt(0.1)
        let expected = 1.0 - 0.1 * 2.0 / ((0.1f64 * 4.0).sqrt() + 1e-8);
        assert!((net.layers()[0].weights[[0, 0]] - expected).abs() < 1e-15);
        let expected_b = 0.1 * 1.0 / ((0.1f64).sqrt() + 1e-8);
        assert!((net.layers()[0].bias[0] - expected_b).abs() < 1e-15);
        assert!(opt.accumulators().all(|&s| s >= 0.0));
    }
}
