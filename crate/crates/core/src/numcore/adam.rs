use super::array::RealArray;
use crate::error::{Error, Result};

/// Moment estimates for Adam over a fixed list of parameter arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first: Vec<RealArray>,
    second: Vec<RealArray>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zero moments with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(params: &[RealArray]) -> Self {
        Self::with_coefficients(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_coefficients(params: &[RealArray], beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<RealArray> = params.iter().map(|p| RealArray::zeros(p.shape())).collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[RealArray] {
        &self.first
    }

    pub fn second_moments(&self) -> &[RealArray] {
        &self.second
    }

    /// One bias-corrected Adam update of `params` in place. No clipping.
    pub fn step(&mut self, params: &mut [RealArray], grads: &[RealArray], lr: f64) -> Result<()> {
        if !(lr >= 0.0) {
            return Err(Error::Precondition(format!("learning rate must be >= 0, got {lr}")));
        }
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::Precondition(format!(
                "adam expects {} parameter/gradient arrays, got {} / {}",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            p.check_shape("adam parameter", m.shape())?;
            g.check_shape("adam gradient", m.shape())?;
        }

        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut params = vec![RealArray::from_vec(vec![1.0, -2.0])];
        let mut state = AdamState::new(&params);
        let zero = vec![RealArray::zeros(&[2])];
        for _ in 0..3 {
            state.step(&mut params, &zero, 5e-3).unwrap();
        }
        assert_eq!(params[0].data(), &[1.0, -2.0]);
        assert_eq!(state.step_count(), 3);
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let mut params = vec![RealArray::from_vec(vec![0.5])];
        let mut state = AdamState::new(&params);
        state.step(&mut params, &[RealArray::from_vec(vec![3.0])], 0.0).unwrap();
        assert_eq!(params[0].data(), &[0.5]);
        assert!(state.first_moments()[0].data()[0] > 0.0);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut params = vec![RealArray::scalar(1.0)];
        let mut state = AdamState::new(&params);
        state.step(&mut params, &[RealArray::scalar(1.0)], 5e-3).unwrap();
        assert!((params[0].item() - 0.995).abs() < 1e-9, "{}", params[0].item());
    }

    #[test]
    fn moments_decay_under_zero_gradient() {
        let mut params = vec![RealArray::scalar(0.0)];
        let mut state = AdamState::new(&params);
        state.step(&mut params, &[RealArray::scalar(1.0)], 0.0).unwrap();
        let m1 = state.first_moments()[0].item();
        state.step(&mut params, &[RealArray::scalar(0.0)], 0.0).unwrap();
        assert!((state.first_moments()[0].item() - 0.9 * m1).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut params = vec![RealArray::zeros(&[2])];
        let mut state = AdamState::new(&params);
        assert!(state.step(&mut params, &[RealArray::zeros(&[3])], 1e-3).is_err());
        assert!(state.step(&mut params, &[RealArray::zeros(&[2])], -1.0).is_err());
    }
}
