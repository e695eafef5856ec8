use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParameters;

/// Optimisation recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without dev-WA improvement before stopping.
    pub patience: usize,
    /// Shuffling and dropout stream. Runs derive it from the run seed, so it
    /// is not read from config files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.0005,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: 1.0,
            batch_size: 64,
            epochs: 100,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, detail: String| Err(Error::config(format!("train.{field}"), detail));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr", format!("must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be >= 1".into());
        }
        if !(self.clip_norm > 0.0) {
            return fail("clip_norm", format!("must be positive, got {}", self.clip_norm));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("beta1", "betas must lie in [0, 1)".into());
        }
        if !(self.adam_eps > 0.0) {
            return fail("adam_eps", "must be positive".into());
        }
        Ok(())
    }
}

/// `sqrt(Σ_tensors Σ g²)`.
pub fn global_norm(grads: &[Vec<f64>]) -> f64 {
    grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales all gradients together so their global norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> Result<f64> {
    if let Some((t, i)) = grads
        .iter()
        .enumerate()
        .find_map(|(t, g)| g.iter().position(|v| !v.is_finite()).map(|i| (t, i)))
    {
        return Err(Error::Numeric(format!(
            "non-finite gradient at tensor {t}, element {i}"
        )));
    }
    let norm = global_norm(grads);
    if norm > max_norm {
        let scale = max_norm / norm;
        for v in grads.iter_mut().flatten() {
            *v *= scale;
        }
    }
    Ok(norm)
}

/// Adam moments for a list of tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let m: Vec<Vec<f64>> = sizes.into_iter().map(|n| vec![0.0; n]).collect();
        Self {
            v: m.clone(),
            m,
            t: 0,
        }
    }

    pub fn for_params(params: &ModelParameters) -> Self {
        Self::new(params.named_tensors().iter().map(|(_, t)| t.len()))
    }

    /// One bias-corrected Adam update over `values`, which must mirror the
    /// moment layout. Entries whose `trainable` flag is false are skipped.
    pub fn step(
        &mut self,
        values: &mut [&mut [f64]],
        grads: &[Vec<f64>],
        trainable: &[bool],
        cfg: &TrainConfig,
    ) -> Result<()> {
        if values.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "{} tensors, {} gradients, {} moment slots",
                    values.len(),
                    grads.len(),
                    self.m.len()
                ),
            ));
        }
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for (k, p) in values.iter_mut().enumerate() {
            if !trainable.get(k).copied().unwrap_or(true) {
                continue;
            }
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads[k]);
            if p.len() != g.len() || m.len() != g.len() {
                return Err(Error::shape("adam_step", format!("tensor {k} length mismatch")));
            }
            for i in 0..g.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
            }
        }
        Ok(())
    }
}

/// Adam over every model tensor, then re-zeroes the embedding padding row.
pub fn adam_step(
    params: &mut ModelParameters,
    grads: &[Vec<f64>],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let trainable = params.trainable_mask();
    {
        let mut views: Vec<&mut [f64]> = params.tensors_mut().into_iter().map(|t| t.data_mut()).collect();
        state.step(&mut views, grads, &trainable, cfg)?;
    }
    params.embedding.zero_padding_row();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_examples() {
        let mut g = vec![vec![3.0, 4.0]];
        assert_eq!(clip_global_norm(&mut g, 1.0).unwrap(), 5.0);
        assert!((g[0][0] - 0.6).abs() < 1e-15 && (g[0][1] - 0.8).abs() < 1e-15);

        let mut g = vec![vec![0.3, 0.4]];
        clip_global_norm(&mut g, 1.0).unwrap();
        assert_eq!(g, vec![vec![0.3, 0.4]]);

        let mut split = vec![vec![3.0], vec![4.0]];
        clip_global_norm(&mut split, 1.0).unwrap();
        assert!((split[0][0] - 0.6).abs() < 1e-15 && (split[1][0] - 0.8).abs() < 1e-15);

        let mut bad = vec![vec![1.0, f64::NAN]];
        assert!(matches!(clip_global_norm(&mut bad, 1.0), Err(Error::Numeric(_))));
    }

    #[test]
    fn adam_first_step_by_hand() {
        let cfg = TrainConfig::default();
        let mut state = AdamState::new([1]);
        let mut p = [0.0f64];
        state.step(&mut [&mut p[..]], &[vec![1.0]], &[true], &cfg).unwrap();
        // m̂ = v̂ = 1 after bias correction
        let expected = -cfg.lr / (1.0 + cfg.adam_eps);
        assert!((p[0] - expected).abs() < 1e-18);
        assert!((p[0] + 0.0005).abs() < 1e-10);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn zero_gradient_leaves_param() {
        let cfg = TrainConfig::default();
        let mut state = AdamState::new([2]);
        let mut p = [1.5f64, -2.0];
        state.step(&mut [&mut p[..]], &[vec![0.0, 0.0]], &[true], &cfg).unwrap();
        assert_eq!(p, [1.5, -2.0]);
    }

    #[test]
    fn frozen_tensor_untouched() {
        let cfg = TrainConfig::default();
        let mut state = AdamState::new([1, 1]);
        let mut a = [1.0f64];
        let mut b = [1.0f64];
        state
            .step(&mut [&mut a[..], &mut b[..]], &[vec![1.0], vec![1.0]], &[true, false], &cfg)
            .unwrap();
        assert!(a[0] < 1.0);
        assert_eq!(b[0], 1.0);
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { lr: 0.0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { clip_norm: 0.0, ..TrainConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
