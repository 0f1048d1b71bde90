use ndarray::{Array2, Zip};

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// Descends `params` along `grads`, which must keep the same shapes between calls.
    pub fn step(&mut self, params: Vec<&mut Array2<f64>>, grads: &[Array2<f64>]) {
        assert_eq!(
            params.len(),
            grads.len(),
            "parameter and gradient counts differ"
        );
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Array2::zeros(g.raw_dim())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut p = array![[1.0, -2.0]];
        let mut opt = Adam::new(0.1);
        opt.step(vec![&mut p], &[array![[3.0, -0.5]]]);
        assert!((p[[0, 0]] - 0.9).abs() < 1e-8);
        assert!((p[[0, 1]] + 1.9).abs() < 1e-8);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut p = array![[5.0]];
        let mut opt = Adam::new(0.05);
        for _ in 0..2000 {
            let g = &p * 2.0;
            opt.step(vec![&mut p], &[g]);
        }
        assert!(p[[0, 0]].abs() < 1e-3);
    }
}
