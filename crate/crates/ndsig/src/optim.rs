//! Adam for network parameters.

use crate::error::{shape_err, EngineError, Result};

/// One named parameter block and its gradient.
pub struct ParamSlot<'a> {
    pub name: &'a str,
    pub values: &'a mut [f64],
    pub grads: &'a [f64],
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    /// Fresh state for parameter blocks of the given sizes.
    pub fn new(block_sizes: &[usize]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first_moment: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }
}

/// Bias-corrected Adam update. Gradients are checked before any parameter
/// is touched, so a failed step leaves parameters and state unchanged.
pub fn adam_step(slots: &mut [ParamSlot<'_>], state: &mut AdamState, lr: f64) -> Result<()> {
    if slots.len() != state.first_moment.len() {
        return Err(shape_err(
            "adam_step",
            format!("{} blocks for state of {}", slots.len(), state.first_moment.len()),
        ));
    }
    for (slot, m) in slots.iter().zip(&state.first_moment) {
        if slot.values.len() != m.len() || slot.grads.len() != m.len() {
            return Err(shape_err("adam_step", format!("block {} has wrong size", slot.name)));
        }
        if slot.grads.iter().any(|g| !g.is_finite()) {
            return Err(EngineError::NonFinite(format!("gradient of {}", slot.name)));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for ((slot, m), v) in slots
        .iter_mut()
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        for i in 0..m.len() {
            let g = slot.grads[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            slot.values[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![1.5, -2.0];
        let g = vec![0.0, 0.0];
        let mut st = AdamState::new(&[2]);
        for _ in 0..3 {
            adam_step(
                &mut [ParamSlot { name: "p", values: &mut p, grads: &g }],
                &mut st,
                0.1,
            )
            .unwrap();
        }
        assert_eq!(p, vec![1.5, -2.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = 1, v̂ = 1 after bias correction, so the step is lr / (1 + eps).
        let mut p = vec![0.0];
        let mut st = AdamState::new(&[1]);
        adam_step(
            &mut [ParamSlot { name: "p", values: &mut p, grads: &[1.0] }],
            &mut st,
            0.1,
        )
        .unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15, "{}", p[0]);
    }

    #[test]
    fn rejects_non_finite_gradient_by_name() {
        let mut p = vec![0.0];
        let mut st = AdamState::new(&[1]);
        let err = adam_step(
            &mut [ParamSlot { name: "conv3.weight", values: &mut p, grads: &[f64::NAN] }],
            &mut st,
            0.1,
        )
        .unwrap_err();
        assert!(err.to_string().contains("conv3.weight"));
        assert_eq!(st.step_count(), 0);
    }
}
