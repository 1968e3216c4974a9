use super::model::{Gradients, Model};
use crate::{Error, Result};

/// One SGD-with-momentum step on every parameter:
/// `v ← μ·v − lr·(g + wd·θ)`, then `θ ← θ + v`.
pub fn sgd_momentum_step(
    model: &mut Model,
    grads: &Gradients,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidConfig(alloc::format!("learning rate {lr} must be positive")));
    }
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::InvalidConfig(alloc::format!("momentum {momentum} outside [0, 1)")));
    }
    if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
        return Err(Error::InvalidConfig(alloc::format!("weight decay {weight_decay} must be nonnegative")));
    }
    if grads.layers.len() != model.params.len() {
        return Err(Error::Inconsistent(alloc::format!(
            "{} gradient slots for {} layers",
            grads.layers.len(),
            model.params.len()
        )));
    }
    for (layer, (g, p)) in grads.layers.iter().zip(&model.params).enumerate() {
        match (g, p) {
            (Some(g), Some(p)) => {
                if g.weight.shape() != p.weight.shape() || g.bias.shape() != p.bias.shape() {
                    return Err(Error::Inconsistent(alloc::format!("gradient shape mismatch in layer {layer}")));
                }
                if g.weight.data().iter().chain(g.bias.data()).any(|v| !v.is_finite()) {
                    return Err(Error::Divergence { layer });
                }
            }
            (None, None) => {}
            _ => {
                return Err(Error::Inconsistent(alloc::format!(
                    "gradient presence mismatch in layer {layer}"
                )))
            }
        }
    }
    for (layer, g) in grads.layers.iter().enumerate() {
        let Some(g) = g else { continue };
        let p = model.params[layer].as_mut().unwrap();
        let v = model.velocity[layer].as_mut().unwrap();
        let pairs = [
            (p.weight.data_mut(), v.weight.data_mut(), g.weight.data()),
            (p.bias.data_mut(), v.bias.data_mut(), g.bias.data()),
        ];
        for (theta, vel, grad) in pairs {
            for ((t, v), &gv) in theta.iter_mut().zip(vel.iter_mut()).zip(grad) {
                *v = momentum * *v - lr * (gv + weight_decay * *t);
                *t += *v;
            }
        }
        if p.weight.data().iter().chain(p.bias.data()).any(|t| !t.is_finite()) {
            return Err(Error::Divergence { layer });
        }
    }
    Ok(())
}
