use super::{CnnConfig, CnnModel, CnnParams, Real};
use crate::corpus::PAD;
use crate::{Error, Result};

/// RMSProp running averages of squared gradients, one per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<F> {
    pub accumulators: CnnParams<F>,
    pub step: u64,
    pub learning_rate: f64,
}

impl<F: Real> OptimizerState<F> {
    pub fn new(model: &CnnModel<F>) -> Self {
        OptimizerState {
            accumulators: model.params.zeros_like(),
            step: 0,
            learning_rate: model.config.learning_rate,
        }
    }
}

/// `a <- rho a + (1 - rho) g^2; p <- p - lr g / (sqrt(a) + eps)` elementwise,
/// at the learning rate currently held in `state`.
///
/// The PAD embedding row is never updated, nor are embeddings when they are static.
pub fn rmsprop_step<F: Real>(
    model: &mut CnnModel<F>,
    grads: &CnnParams<F>,
    state: &mut OptimizerState<F>,
    config: &CnnConfig,
) -> Result<()> {
    let shapes = |p: &CnnParams<F>| p.tensors().iter().map(|t| t.shape.clone()).collect::<Vec<_>>();
    if shapes(grads) != shapes(&model.params) || shapes(&state.accumulators) != shapes(&model.params) {
        return Err(Error::Shape("gradient/optimizer state shapes differ from model".into()));
    }
    let rho = F::of(config.rho);
    let one_minus_rho = F::of(1.0 - config.rho);
    let eps = F::of(config.epsilon);
    let lr = F::of(state.learning_rate);
    let d = config.embed_dim;

    let params = model.params.tensors_mut();
    let accs = state.accumulators.tensors_mut();
    for (ti, ((p, a), g)) in params.into_iter().zip(accs).zip(grads.tensors()).enumerate() {
        let start = if ti == 0 {
            if !config.trainable_embeddings {
                continue;
            }
            (PAD as usize + 1) * d
        } else {
            0
        };
        for ((pi, ai), &gi) in p.data[start..].iter_mut().zip(&mut a.data[start..]).zip(&g.data[start..]) {
            *ai = rho * *ai + one_minus_rho * gi * gi;
            *pi = *pi - lr * gi / (ai.sqrt() + eps);
            if !pi.is_finite() {
                return Err(Error::Numeric(format!("non-finite parameter after step {}", state.step + 1)));
            }
        }
    }
    state.step += 1;
    Ok(())
}
