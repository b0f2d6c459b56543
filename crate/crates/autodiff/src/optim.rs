//! Gradient accumulation and parameter updates.
//!
//! Updates follow the ascent convention: the direction passed in is the
//! gradient of an objective to maximize, so `sgd_step` moves `θ ← θ + lr·g`.
//! Callers minimizing a loss pass the negated loss gradient (see
//! [`GradBuffer::negate`]).

use crate::matrix::Matrix;
use crate::tape::Gradients;

/// Sums parameter gradients across several backward passes.
///
/// Accumulation is explicit: call [`GradBuffer::zero`] before reusing the
/// buffer for the next batch.
#[derive(Clone, Debug)]
pub struct GradBuffer {
    grads: Vec<Matrix>,
}

impl GradBuffer {
    pub fn zeros_like(params: &[Matrix]) -> Self {
        Self {
            grads: params
                .iter()
                .map(|p| Matrix::zeros(p.rows(), p.cols()))
                .collect(),
        }
    }

    /// Adds `scale` times every parameter gradient in `g`.
    pub fn accumulate(&mut self, g: &Gradients, scale: f64) {
        for (i, buf) in self.grads.iter_mut().enumerate() {
            if let Some(m) = g.param(i) {
                buf.axpy(scale, m);
            }
        }
    }

    /// Adds another buffer, in index order.
    pub fn merge(&mut self, other: &GradBuffer) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.axpy(1.0, b);
        }
    }

    pub fn zero(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn scale(&mut self, k: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|x| *x *= k);
        }
    }

    /// Flips the sign so a loss gradient becomes an ascent direction.
    pub fn negate(&mut self) {
        self.scale(-1.0);
    }

    pub fn as_slice(&self) -> &[Matrix] {
        &self.grads
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Matrix::is_finite)
    }

    pub fn l2_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.data())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

/// `θ ← θ + lr·g` for each parameter.
pub fn sgd_step(params: &mut [Matrix], direction: &[Matrix], lr: f64) {
    assert_eq!(params.len(), direction.len(), "sgd_step: parameter count");
    for (p, g) in params.iter_mut().zip(direction) {
        p.axpy(lr, g);
    }
}

#[derive(Clone, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for Adam.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &[Matrix]) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| Matrix::zeros(p.rows(), p.cols()))
                .collect()
        };
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam ascent step along `direction`.
pub fn adam_step(params: &mut [Matrix], direction: &[Matrix], state: &mut AdamState, cfg: &AdamConfig) {
    assert_eq!(params.len(), direction.len(), "adam_step: parameter count");
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(direction)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let pd = p.data_mut();
        let (md, vd) = (m.data_mut(), v.data_mut());
        for (i, &gi) in g.data().iter().enumerate() {
            md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * gi;
            vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = md[i] / c1;
            let v_hat = vd[i] / c2;
            pd[i] += cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = vec![Matrix::from_vec(1, 3, vec![1.0, -2.0, 0.5])];
        let before = p.clone();
        let g = vec![Matrix::zeros(1, 3)];
        sgd_step(&mut p, &g, 0.3);
        assert_eq!(p, before);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, &AdamConfig::default());
        assert_eq!(p, before);
    }

    #[test]
    fn sgd_is_ascent() {
        let mut p = vec![Matrix::row(&[1.0, 2.0])];
        sgd_step(&mut p, &[Matrix::row(&[0.5, -1.0])], 1.0);
        assert_eq!(p[0].data(), &[1.5, 1.0]);
    }

    #[test]
    fn adam_first_step_bias_correction() {
        // m_1 = (1-β1) g, so m̂ = m_1 / (1-β1) = g; same for v̂ = g².
        let g = 0.37;
        let mut p = vec![Matrix::scalar(0.0)];
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig {
            lr: 0.1,
            eps: 0.0,
            ..AdamConfig::default()
        };
        adam_step(&mut p, &[Matrix::scalar(g)], &mut st, &cfg);
        let m_hat = st.m[0].item() / (1.0 - 0.9);
        assert!((m_hat - g).abs() < 1e-15);
        // with ε = 0 the first step has magnitude exactly lr
        assert!((p[0].item() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn grad_buffer_accumulates_until_zeroed() {
        use crate::tape::Tape;
        let params = vec![Matrix::scalar(3.0)];
        let mut buf = GradBuffer::zeros_like(&params);
        for _ in 0..2 {
            let mut t = Tape::with_params(&params);
            let p = t.param(0).unwrap();
            let y = t.mul(p, p).unwrap();
            buf.accumulate(&t.backward(y).unwrap(), 1.0);
        }
        assert_eq!(buf.as_slice()[0].item(), 12.0);
        buf.zero();
        assert_eq!(buf.as_slice()[0].item(), 0.0);
    }
}
