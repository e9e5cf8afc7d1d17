use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdParams {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// Velocity buffer matching one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: Vec<f64>,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        Self { velocity: vec![0.0; len] }
    }
}

/// `v <- momentum * v + g + weight_decay * w; w <- w - lr * v`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], state: &mut OptimizerState, hp: SgdParams) -> Result<()> {
    if grads.len() != params.len() || state.velocity.len() != params.len() {
        return Err(Error::ShapeMismatch {
            what: "sgd step",
            expected: params.len(),
            actual: if grads.len() != params.len() { grads.len() } else { state.velocity.len() },
        });
    }
    if !grads.iter().all(|g| g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    for ((w, &g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        *v = hp.momentum * *v + g + hp.weight_decay * *w;
        *w -= hp.lr * *v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hp(lr: f64, momentum: f64, weight_decay: f64) -> SgdParams {
        SgdParams { lr, momentum, weight_decay }
    }

    #[test]
    fn plain_step() {
        let mut w = [1.0];
        sgd_step(&mut w, &[0.5], &mut OptimizerState::new(1), hp(0.1, 0.0, 0.0)).unwrap();
        assert!((w[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn momentum_step() {
        let mut w = [1.0];
        let mut st = OptimizerState { velocity: vec![1.0] };
        sgd_step(&mut w, &[0.0], &mut st, hp(0.1, 0.9, 0.0)).unwrap();
        assert!((st.velocity[0] - 0.9).abs() < 1e-15);
        assert!((w[0] - 0.91).abs() < 1e-15);
    }

    #[test]
    fn decay_step() {
        let mut w = [2.0];
        sgd_step(&mut w, &[0.0], &mut OptimizerState::new(1), hp(1.0, 0.0, 0.0005)).unwrap();
        assert!((w[0] - 1.999).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let mut w = [0.0, 0.0];
        assert!(sgd_step(&mut w, &[0.0], &mut OptimizerState::new(2), hp(1.0, 0.0, 0.0)).is_err());
        assert!(sgd_step(&mut w, &[0.0, f64::INFINITY], &mut OptimizerState::new(2), hp(1.0, 0.0, 0.0)).is_err());
        assert!(sgd_step(&mut w, &[0.0, 0.0], &mut OptimizerState::new(1), hp(1.0, 0.0, 0.0)).is_err());
    }

    proptest! {
        #[test]
        fn reduces_to_gradient_step(w in -10.0f64..10.0, g in -10.0f64..10.0, lr in 0.0f64..1.0) {
            let mut p = [w];
            sgd_step(&mut p, &[g], &mut OptimizerState::new(1), hp(lr, 0.0, 0.0)).unwrap();
            prop_assert_eq!(p[0], w - lr * g);
        }
    }
}
