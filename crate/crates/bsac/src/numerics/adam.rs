use super::{NumericsError, Result, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamHyper {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamHyper { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Bias-corrected adaptive-moment state for a fixed parameter list.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub hyper: AdamHyper,
    step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[&Tensor], hyper: AdamHyper) -> Self {
        AdamState {
            hyper,
            step_count: 0,
            first_moment: params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
            second_moment: params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update over the same parameter list the state was built for,
    /// consuming each tensor's grad slot. Deterministic given inputs.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        assert_eq!(params.len(), self.first_moment.len(), "adam: parameter list changed");
        self.step_count += 1;
        let t = self.step_count;
        let AdamHyper { learning_rate, beta1, beta2, epsilon } = self.hyper;
        let bc1 = 1.0 - beta1.powi(t as i32);
        let bc2 = 1.0 - beta2.powi(t as i32);
        for (idx, p) in params.iter_mut().enumerate() {
            let grad = p.grad.as_ref().ok_or_else(|| NumericsError::Dimension {
                op: "adam_step",
                detail: format!("parameter {idx} has no gradient"),
            })?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(NumericsError::NonFiniteGrad { param: format!("param[{idx}]") });
            }
            let m = &mut self.first_moment[idx];
            let v = &mut self.second_moment[idx];
            for i in 0..grad.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.data[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> Tensor {
        let mut t = Tensor::new(vec![1], vec![v]).unwrap();
        t.requires_grad = true;
        t
    }

    #[test]
    fn zero_grad_leaves_params_unchanged() {
        let mut p = scalar_param(1.5);
        p.grad = Some(vec![0.0]);
        let hyper = AdamHyper::with_lr(0.1);
        let mut state = AdamState::new(&[&p], hyper);
        state.step(&mut [&mut p]).unwrap();
        assert_eq!(p.data[0], 1.5);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let lr = 0.01;
        for &g in &[3.7, -0.002] {
            let mut p = scalar_param(0.0);
            p.grad = Some(vec![g]);
            let mut state = AdamState::new(&[&p], AdamHyper::with_lr(lr));
            state.step(&mut [&mut p]).unwrap();
            // bias correction makes m_hat = g, v_hat = g^2 on step one, so the
            // move is lr * g / (|g| + eps) -- epsilon keeps it from being exact
            let expected = -lr * g.signum();
            assert!((p.data[0] - expected).abs() < lr * 1e-4, "g={g}: {}", p.data[0]);
        }
    }

    #[test]
    fn nan_grad_is_reported_with_identifier() {
        let mut p = scalar_param(0.0);
        p.grad = Some(vec![f64::NAN]);
        let mut state = AdamState::new(&[&p], AdamHyper::with_lr(0.1));
        let err = state.step(&mut [&mut p]).unwrap_err();
        match err {
            NumericsError::NonFiniteGrad { param } => assert_eq!(param, "param[0]"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn hundred_step_trajectory_matches_reference_rule() {
        // Independently coded reference update, kept deliberately naive.
        let hyper = AdamHyper { learning_rate: 0.05, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 };
        let grads: Vec<f64> = (0..100).map(|i| ((i as f64) * 0.37).sin() * 2.0).collect();

        let mut p = scalar_param(1.0);
        let mut state = AdamState::new(&[&p], hyper);
        for &g in &grads {
            p.grad = Some(vec![g]);
            state.step(&mut [&mut p]).unwrap();
        }

        let mut x = 1.0_f64;
        let (mut m, mut v) = (0.0_f64, 0.0_f64);
        for (k, &g) in grads.iter().enumerate() {
            let t = (k + 1) as f64;
            m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
            v = hyper.beta2 * v + (1.0 - hyper.beta2) * g * g;
            let m_hat = m / (1.0 - hyper.beta1.powf(t));
            let v_hat = v / (1.0 - hyper.beta2.powf(t));
            x -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
        assert!((p.data[0] - x).abs() < 1e-12, "{} vs {}", p.data[0], x);
    }
}
