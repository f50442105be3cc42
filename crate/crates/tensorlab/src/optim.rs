use crate::{Result, Tensor, TensorError};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamWConfig {
    pub learning_rate: f32,
    pub weight_decay: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// AdamW with decoupled weight decay. Moment buffers are allocated on the
/// first step and matched to parameters by position.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
    step: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, i: usize) -> Option<(&[f32], &[f32])> {
        Some((self.first.get(i)?, self.second.get(i)?))
    }

    /// Global L2 norm over the gradients of `params` (missing grads count
    /// as zero). Errors on any non-finite gradient entry.
    pub fn grad_norm(params: &[&mut Tensor]) -> Result<f32> {
        let mut sq = 0.0f64;
        for (i, p) in params.iter().enumerate() {
            if let Some(g) = p.grad() {
                for &v in g {
                    if !v.is_finite() {
                        return Err(TensorError::NonFinite(format!("gradient of parameter {i}")));
                    }
                    sq += (v as f64) * (v as f64);
                }
            }
        }
        Ok(sq.sqrt() as f32)
    }

    /// Clips the global gradient norm to `max_norm`, applies one AdamW
    /// update and clears the gradients. Returns the pre-clip norm.
    pub fn clip_and_step(&mut self, params: &mut [&mut Tensor], max_norm: f32) -> Result<f32> {
        let norm = Self::grad_norm(params)?;
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() {
            return Err(TensorError::OptimizerState(format!(
                "{} moment buffers for {} parameters",
                self.first.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if self.first[i].len() != p.numel() {
                return Err(TensorError::OptimizerState(format!(
                    "parameter {i} has {} values, moments have {}",
                    p.numel(),
                    self.first[i].len()
                )));
            }
        }
        let scale = if norm > max_norm { max_norm / norm } else { 1.0 };

        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let Some(grad) = p.grad().map(|g| g.to_vec()) else {
                continue;
            };
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            let data = p.data_mut();
            for j in 0..data.len() {
                let g = grad[j] * scale;
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                data[j] -= c.learning_rate * c.weight_decay * data[j];
                data[j] -= c.learning_rate * mhat / (vhat.sqrt() + c.epsilon);
            }
            p.zero_grad();
        }
        Ok(norm)
    }
}
