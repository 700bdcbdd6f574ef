use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected update. A non-finite gradient leaves both the
    /// state and the parameters untouched.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), TrainError> {
        assert_eq!(params.len(), self.m.len(), "parameter length");
        assert_eq!(grad.len(), self.m.len(), "gradient length");
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(TrainError::NonFinite(format!("gradient entry {i}")));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op_that_counts() {
        let mut s = AdamState::new(3, 1e-3);
        let mut p = vec![1.0, -2.0, 3.0];
        s.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut s = AdamState::new(3, 1e-3);
        let mut p = vec![0.0; 3];
        s.step(&mut p, &[5.0, -0.2, 1e3]).unwrap();
        for (x, sgn) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((x - sgn * 1e-3).abs() < 1e-9, "{x}");
        }
    }

    #[test]
    fn quadratic_bowl_shrinks() {
        let mut s = AdamState::new(4, 1e-3);
        let mut p = vec![0.7, -1.3, 0.2, 2.0];
        let norm = |p: &[f64]| p.iter().map(|x| x * x).sum::<f64>().sqrt();
        let start = norm(&p);
        for _ in 0..1000 {
            let g = p.clone();
            s.step(&mut p, &g).unwrap();
        }
        assert!(norm(&p) < start);
    }

    #[test]
    fn non_finite_gradient_is_refused() {
        let mut s = AdamState::new(2, 1e-3);
        let mut p = vec![1.0, 1.0];
        assert!(s.step(&mut p, &[f64::NAN, 0.0]).is_err());
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(s.step, 0);
    }
}
