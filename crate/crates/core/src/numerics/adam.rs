use crate::error::{shape_err, Result};

use super::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &[Matrix], config: AdamConfig) -> Self {
        let zeros = |p: &Matrix| Matrix::zeros(p.rows(), p.cols());
        Self {
            config,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
            step: 0,
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return shape_err(format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.m.len()
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            p.check_same(g, "adam grad")?;
            p.check_same(m, "adam moment")?;
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let it = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((w, &gi), (mi, vi)) in it {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Step decay: `initial · factor^⌊epoch / period⌋`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub initial: f64,
    pub factor: f64,
    pub period: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial: 1e-3,
            factor: 0.25,
            period: 20,
        }
    }
}

impl LrSchedule {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.initial * self.factor.powi((epoch / self.period.max(1)) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::filled(1, 1, v)
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [3.0, -0.02] {
            let mut p = vec![scalar(1.0)];
            let mut st = AdamState::new(&p, AdamConfig::default());
            st.step(&mut p, &[scalar(g)], 1e-3).unwrap();
            let moved = p[0].data()[0] - 1.0;
            assert!((moved + 1e-3 * f64::signum(g)).abs() < 1e-9, "{moved}");
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = vec![Matrix::from_rows(&[&[0.3, -2.0]]).unwrap()];
        let before = p.clone();
        let mut st = AdamState::new(&p, AdamConfig::default());
        for _ in 0..5 {
            st.step(&mut p, &[Matrix::zeros(1, 2)], 1e-2).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.step, 5);
    }

    #[test]
    fn minimises_a_parabola() {
        // Independent scalar run of the same recurrence ends at w ≈ 2.9367e-3.
        let mut p = vec![scalar(1.0)];
        let mut st = AdamState::new(&p, AdamConfig::default());
        for _ in 0..100 {
            let w = p[0].data()[0];
            st.step(&mut p, &[scalar(2.0 * w)], 1e-1).unwrap();
        }
        let w = p[0].data()[0];
        assert!(w.abs() < 0.1, "{w}");
        assert!((w - 2.936_675_681_102_549e-3).abs() < 1e-12, "{w}");
    }

    #[test]
    fn shape_mismatch() {
        let mut p = vec![scalar(1.0)];
        let mut st = AdamState::new(&p, AdamConfig::default());
        assert!(st.step(&mut p, &[Matrix::zeros(2, 1)], 1e-3).is_err());
    }

    #[test]
    fn schedule_values() {
        let s = LrSchedule::default();
        assert_eq!(s.lr_at(0), 1e-3);
        assert_eq!(s.lr_at(19), 1e-3);
        assert!((s.lr_at(20) - 2.5e-4).abs() < 1e-18);
        assert!((s.lr_at(40) - 6.25e-5).abs() < 1e-18);
        let mut prev = f64::INFINITY;
        for e in 0..200 {
            let lr = s.lr_at(e);
            assert!(lr > 0.0 && lr <= prev);
            prev = lr;
        }
    }
}
