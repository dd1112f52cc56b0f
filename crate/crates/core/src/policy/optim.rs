//! RMSprop without momentum or weight decay, plus recurrent-layer gradient
//! norm clipping.

use super::network::PolicyNet;

#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub alpha: f64,
    pub eps: f64,
    square_avg: Vec<f64>,
}

impl RmsProp {
    pub fn new(net: &PolicyNet, lr: f64, alpha: f64) -> Self {
        RmsProp {
            lr,
            alpha,
            eps: 1e-8,
            square_avg: vec![0.0; net.n_params()],
        }
    }

    /// Descends along `grad` (the gradient of the loss).
    pub fn step(&mut self, net: &mut PolicyNet, grad: &PolicyNet) {
        let g = grad.to_flat();
        let mut p = net.to_flat();
        for ((p, g), v) in p.iter_mut().zip(&g).zip(self.square_avg.iter_mut()) {
            *v = self.alpha * *v + (1.0 - self.alpha) * g * g;
            *p -= self.lr * g / (v.sqrt() + self.eps);
        }
        net.set_flat(&p);
    }
}

/// Rescales the recurrent-layer gradients so that their joint L2 norm is at
/// most `max_norm`. Returns the norm before clipping.
pub fn clip_recurrent_grad(grad: &mut PolicyNet, max_norm: f64) -> f64 {
    let norm = grad
        .tensors()
        .iter()
        .filter(|(name, _, _)| PolicyNet::is_recurrent_tensor(name))
        .flat_map(|(_, _, t)| t.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grad.for_each_tensor_mut(|name, t| {
            if PolicyNet::is_recurrent_tensor(name) {
                t.iter_mut().for_each(|g| *g *= scale);
            }
        });
    }
    norm
}
