//! End-to-end gradient check of the full model against central finite
//! differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{relative_error, Tensor, FD_STEP};
use crate::data::FeatureBundle;
use crate::error::Result;
use crate::model::{init_parameters, ModelConfig, ModelParameters};
use crate::text::EmbeddingTable;
use crate::training::{batch_loss, batch_loss_and_grads};

/// Largest relative error the check accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradcheckSetup {
    pub model: ModelConfig,
    /// Audio frames per bundle (`L`).
    pub frames: usize,
    /// Token slots per bundle (`M`).
    pub tokens: usize,
    pub vocab_size: usize,
    pub seed: u64,
}

impl GradcheckSetup {
    /// Tiny full model, `L = 10`, `M = 5`.
    pub fn tiny(seed: u64) -> Self {
        Self {
            model: ModelConfig::tiny(),
            frames: 10,
            tokens: 5,
            vocab_size: 8,
            seed,
        }
    }
}

/// One compared element.
#[derive(Debug, Clone, Serialize)]
pub struct ElementError {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub loss: f64,
    pub checked: usize,
    /// Largest `|a − n| / max(|a|, |n|, 1e-8)`.
    pub max_rel_error: f64,
    pub worst: ElementError,
    /// Elements whose plain relative error reaches the tolerance.
    pub over_tolerance: usize,
    /// Absolute error one rounding of the loss causes in a central
    /// difference: `ε·|loss| / h`.
    pub fd_resolution: f64,
    /// Largest relative error with the denominator floored at
    /// `fd_resolution / tolerance`, so gradients too small for the finite
    /// difference to resolve are judged on absolute error.
    pub max_resolved_error: f64,
    pub worst_resolved: ElementError,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_resolved_error < GRADCHECK_TOLERANCE
    }
}

/// Two bundles with different valid lengths (one full, one padded) and
/// random features.
pub fn gradcheck_inputs(setup: &GradcheckSetup) -> Vec<FeatureBundle> {
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed ^ 0x5eed);
    let width = setup.model.audio_dim();
    let lens = [
        (setup.frames, setup.tokens),
        ((setup.frames * 2 / 3).max(1), (setup.tokens / 2).max(1)),
    ];
    lens.iter()
        .enumerate()
        .map(|(n, &(audio_len, text_len))| {
            let mut audio = vec![0.0; setup.frames * width];
            for v in &mut audio[..audio_len * width] {
                *v = rng.gen_range(-1.0..1.0);
            }
            FeatureBundle {
                id: format!("gradcheck_{n}"),
                audio: Tensor::new(vec![setup.frames, width], audio).expect("consistent shape"),
                audio_len,
                token_ids: (0..text_len).map(|_| rng.gen_range(1..setup.vocab_size)).collect(),
                max_tokens: setup.tokens,
                xvector: setup
                    .model
                    .use_xvector
                    .then(|| (0..setup.model.xvector_dim).map(|_| rng.gen_range(-1.0..1.0)).collect()),
                label: n % setup.model.n_classes,
            }
        })
        .collect()
}

pub fn gradcheck_params(setup: &GradcheckSetup) -> Result<ModelParameters> {
    let table = EmbeddingTable::random(setup.vocab_size, setup.model.embedding_dim, setup.seed);
    init_parameters(&setup.model, table, setup.seed.wrapping_add(1))
}

/// Compares the analytic gradient of the mean training loss (dropout active,
/// same mask on every evaluation) with central differences for every
/// parameter element.
pub fn gradcheck(setup: &GradcheckSetup) -> Result<GradcheckReport> {
    setup.model.validate()?;
    let mut params = gradcheck_params(setup)?;
    let bundles = gradcheck_inputs(setup);
    let refs: Vec<&FeatureBundle> = bundles.iter().collect();
    let dropout_seed = setup.seed.wrapping_add(2);

    let (loss, grads) = batch_loss_and_grads(
        &setup.model,
        &params,
        &refs,
        true,
        &mut ChaCha8Rng::seed_from_u64(dropout_seed),
    )?;
    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    let fd_resolution = f64::EPSILON * loss.abs() / FD_STEP;
    let floor = fd_resolution / GRADCHECK_TOLERANCE;

    let blank = ElementError {
        tensor: String::new(),
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
        rel_error: 0.0,
    };
    let mut report = GradcheckReport {
        loss,
        checked: 0,
        max_rel_error: 0.0,
        worst: blank.clone(),
        over_tolerance: 0,
        fd_resolution,
        max_resolved_error: 0.0,
        worst_resolved: blank,
    };
    for (k, name) in names.iter().enumerate() {
        for i in 0..grads[k].len() {
            let mut eval = |delta: f64| -> Result<f64> {
                let orig = params.tensors_mut()[k].data()[i];
                params.tensors_mut()[k].data_mut()[i] = orig + delta;
                let l = batch_loss(
                    &setup.model,
                    &params,
                    &refs,
                    true,
                    &mut ChaCha8Rng::seed_from_u64(dropout_seed),
                );
                params.tensors_mut()[k].data_mut()[i] = orig;
                l
            };
            let numeric = (eval(FD_STEP)? - eval(-FD_STEP)?) / (2.0 * FD_STEP);
            let analytic = grads[k][i];
            let element = |rel_error| ElementError {
                tensor: name.clone(),
                index: i,
                analytic,
                numeric,
                rel_error,
            };
            let err = relative_error(analytic, numeric);
            let resolved = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
            report.checked += 1;
            if err >= GRADCHECK_TOLERANCE {
                report.over_tolerance += 1;
            }
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = element(err);
            }
            if resolved > report.max_resolved_error {
                report.max_resolved_error = resolved;
                report.worst_resolved = element(resolved);
            }
        }
    }
    Ok(report)
}
