/// Adaptive moment estimation over a fixed-size parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<const D: usize> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: [f64; D],
    v: [f64; D],
    t: i32,
}

impl<const D: usize> Adam<D> {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self { learning_rate, beta1, beta2, epsilon, m: [0.0; D], v: [0.0; D], t: 0 }
    }

    /// Bias-corrected descent step for `grad`; the caller subtracts it.
    pub fn step(&mut self, grad: &[f64; D]) -> [f64; D] {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut out = [0.0; D];
        for i in 0..D {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            out[i] = self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        out
    }
}
