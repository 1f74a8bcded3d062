use ndarray::Zip;

use super::{Gradients, LayerParams, Mlp};
use crate::{Error, Result};

/// Bias-corrected Adam moments for one [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: Vec<LayerParams>,
    second_moment: Vec<LayerParams>,
}

impl AdamState {
    pub const DEFAULT_BETA1: f64 = 0.9;
    pub const DEFAULT_BETA2: f64 = 0.999;
    pub const DEFAULT_EPSILON: f64 = 1e-8;

    pub fn new(net: &Mlp) -> Self {
        Self::with_constants(net, Self::DEFAULT_BETA1, Self::DEFAULT_BETA2, Self::DEFAULT_EPSILON)
    }

    pub fn with_constants(net: &Mlp, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros = || net.layers().iter().map(LayerParams::zeros_like).collect::<Vec<_>>();
        Self {
            beta1,
            beta2,
            epsilon,
            step: 0,
            first_moment: zeros(),
            second_moment: zeros(),
        }
    }

    /// Rebuilds a state from stored moments; shapes are checked against `net`.
    pub fn from_parts(
        net: &Mlp,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        step: u64,
        first_moment: Vec<LayerParams>,
        second_moment: Vec<LayerParams>,
    ) -> Result<Self> {
        let state = Self {
            beta1,
            beta2,
            epsilon,
            step,
            first_moment,
            second_moment,
        };
        state.check_shapes(&net.layers)?;
        Ok(state)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[LayerParams] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[LayerParams] {
        &self.second_moment
    }

    fn check_shapes(&self, layers: &[LayerParams]) -> Result<()> {
        let ok = |moments: &[LayerParams]| {
            moments.len() == layers.len() && moments.iter().zip(layers).all(|(m, l)| m.same_shape(l))
        };
        if !ok(&self.first_moment) || !ok(&self.second_moment) {
            return Err(Error::Shape("Adam moments do not mirror the network parameters".into()));
        }
        Ok(())
    }

    /// One Adam update of `net` in place.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients, lr: f64) -> Result<()> {
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(Error::InvalidInput(format!("learning rate must be finite and >= 0, got {lr}")));
        }
        self.check_shapes(&net.layers)?;
        self.check_shapes(&grads.layers)?;

        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let correction1 = 1.0 - b1.powi(self.step as i32);
        let correction2 = 1.0 - b2.powi(self.step as i32);

        let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = flush(b1 * *m + (1.0 - b1) * g);
            *v = flush(b2 * *v + (1.0 - b2) * g * g);
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };

        for (((layer, grad), m), v) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            Zip::from(&mut layer.weights)
                .and(&grad.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(update);
            Zip::from(&mut layer.biases)
                .and(&grad.biases)
                .and(&mut m.biases)
                .and(&mut v.biases)
                .for_each(update);
        }
        Ok(())
    }
}

/// Moments of parameters whose gradient stays zero (dead ReLU units) would
/// otherwise decay into the subnormal range and stick at the smallest subnormal.
fn flush(x: f64) -> f64 {
    if x.is_subnormal() {
        0.0
    } else {
        x
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(net: &mut Mlp, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    state.step(net, grads, lr)
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    fn scalar_net(w: f64) -> Mlp {
        Mlp::from_layers(vec![LayerParams { weights: array![[w]], biases: array![0.0] }]).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = Mlp::new(&[3, 4, 2], 5).unwrap();
        let before = net.clone();
        let mut state = AdamState::new(&net);
        // seed some nonzero moments first
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weights.fill(0.3);
        let mut scratch = net.clone();
        state.step(&mut scratch, &g, 0.01).unwrap();
        let m_before = state.first_moment()[0].weights[[0, 0]];

        let zero = Gradients::zeros_like(&net);
        let mut fresh = AdamState::new(&net);
        fresh.step(&mut net, &zero, 0.01).unwrap();
        assert_eq!(net, before);

        state.step(&mut scratch, &zero, 0.01).unwrap();
        let m_after = state.first_moment()[0].weights[[0, 0]];
        assert!(m_after.abs() < m_before.abs());
        assert_eq!(state.step_count(), 2);
    }

    #[test]
    fn moments_of_idle_parameters_reach_zero() {
        let mut net = scalar_net(1.0);
        let mut state = AdamState::new(&net);
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weights[[0, 0]] = 1.0;
        state.step(&mut net, &g, 1e-3).unwrap();
        let zero = Gradients::zeros_like(&net);
        for _ in 0..8000 {
            state.step(&mut net, &zero, 1e-3).unwrap();
        }
        assert_eq!(state.first_moment()[0].weights[[0, 0]], 0.0);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let lr = 0.005;
        let mut net = scalar_net(1.0);
        let mut state = AdamState::new(&net);
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weights[[0, 0]] = 1.0;
        state.step(&mut net, &g, lr).unwrap();
        // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
        let expected = 1.0 - lr / (1.0 + 1e-8);
        assert!((net.layers()[0].weights[[0, 0]] - expected).abs() < 1e-15);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut net = Mlp::new(&[2, 3, 2], 9).unwrap();
            let mut state = AdamState::new(&net);
            let mut g = Gradients::zeros_like(&net);
            for (i, v) in g.layers[1].weights.iter_mut().enumerate() {
                *v = (i as f64 - 2.5) * 0.1;
            }
            for _ in 0..10 {
                state.step(&mut net, &g, 0.01).unwrap();
            }
            (net.params_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), state)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut net = Mlp::new(&[2, 3, 2], 0).unwrap();
        let other = Mlp::new(&[2, 4, 2], 0).unwrap();
        let mut state = AdamState::new(&net);
        let g = Gradients::zeros_like(&other);
        assert!(matches!(state.step(&mut net, &g, 0.1), Err(Error::Shape(_))));
        assert_eq!(state.step_count(), 0);
    }
}
