use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::text::EmbeddingTable;

/// Kernels (`F × s × D`) and biases (`F`) of one convolution scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBank {
    pub kernel_size: usize,
    pub kernels: Tensor,
    pub bias: Tensor,
}

/// Every learnable weight of the model, including the word embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub audio: Vec<ConvBank>,
    pub text: Vec<ConvBank>,
    pub fc_weight: Tensor,
    pub fc_bias: Tensor,
    pub out_weight: Tensor,
    pub out_bias: Tensor,
    pub embedding: EmbeddingTable,
}

fn xavier<R: Rng>(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("consistent shape")
}

fn conv_banks<R: Rng>(sizes: &[usize], filters: usize, dim: usize, rng: &mut R) -> Vec<ConvBank> {
    sizes
        .iter()
        .map(|&s| ConvBank {
            kernel_size: s,
            kernels: xavier(vec![filters, s, dim], s * dim, s * filters, rng),
            bias: Tensor::zeros(vec![filters]),
        })
        .collect()
}

/// Glorot-uniform weights and zero biases, deterministic in `seed`. The
/// embedding table is taken as given.
pub fn init_parameters(cfg: &ModelConfig, embedding: EmbeddingTable, seed: u64) -> Result<ModelParameters> {
    cfg.validate()?;
    if embedding.dim() != cfg.embedding_dim {
        return Err(Error::config(
            "model.embedding_dim",
            format!("config says {}, table has {}", cfg.embedding_dim, embedding.dim()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = cfg.filters_per_scale;
    let audio = conv_banks(&cfg.audio_kernel_sizes, f, cfg.audio_dim(), &mut rng);
    let text = conv_banks(&cfg.text_kernel_sizes, f, cfg.embedding_dim, &mut rng);
    let fusion = cfg.fusion_dim();
    let fc_weight = xavier(vec![cfg.fc_hidden, fusion], fusion, cfg.fc_hidden, &mut rng);
    let out_weight = xavier(vec![cfg.n_classes, cfg.fc_hidden], cfg.fc_hidden, cfg.n_classes, &mut rng);
    Ok(ModelParameters {
        audio,
        text,
        fc_weight,
        fc_bias: Tensor::zeros(vec![cfg.fc_hidden]),
        out_weight,
        out_bias: Tensor::zeros(vec![cfg.n_classes]),
        embedding,
    })
}

impl ModelParameters {
    /// Named tensors in a fixed order shared by the optimizer and checkpoints.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (branch, banks) in [("audio", &self.audio), ("text", &self.text)] {
            for b in banks {
                out.push((format!("{branch}.conv{}.kernels", b.kernel_size), &b.kernels));
                out.push((format!("{branch}.conv{}.bias", b.kernel_size), &b.bias));
            }
        }
        out.push(("fc.weight".into(), &self.fc_weight));
        out.push(("fc.bias".into(), &self.fc_bias));
        out.push(("out.weight".into(), &self.out_weight));
        out.push(("out.bias".into(), &self.out_bias));
        out.push(("embedding".into(), &self.embedding.matrix));
        out
    }

    /// Mutable view in the same order as [`ModelParameters::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for b in self.audio.iter_mut().chain(self.text.iter_mut()) {
            out.push(&mut b.kernels);
            out.push(&mut b.bias);
        }
        out.push(&mut self.fc_weight);
        out.push(&mut self.fc_bias);
        out.push(&mut self.out_weight);
        out.push(&mut self.out_bias);
        out.push(&mut self.embedding.matrix);
        out
    }

    /// Whether the tensor at each position of the fixed order is updated by
    /// training (only the embedding can be frozen).
    pub fn trainable_mask(&self) -> Vec<bool> {
        let n = self.named_tensors().len();
        let mut mask = vec![true; n];
        mask[n - 1] = self.embedding.trainable;
        mask
    }

    pub fn num_scalars(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.all_finite())
    }

    /// Rounds every weight to `f32` precision, the resolution checkpoints keep.
    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            t.round_to_f32();
        }
    }

    /// Checks that every tensor has the shape `cfg` implies.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let f = cfg.filters_per_scale;
        let mut expected: Vec<(String, Vec<usize>)> = Vec::new();
        for (branch, sizes, dim) in [
            ("audio", &cfg.audio_kernel_sizes, cfg.audio_dim()),
            ("text", &cfg.text_kernel_sizes, cfg.embedding_dim),
        ] {
            for &s in sizes {
                expected.push((format!("{branch}.conv{s}.kernels"), vec![f, s, dim]));
                expected.push((format!("{branch}.conv{s}.bias"), vec![f]));
            }
        }
        expected.push(("fc.weight".into(), vec![cfg.fc_hidden, cfg.fusion_dim()]));
        expected.push(("fc.bias".into(), vec![cfg.fc_hidden]));
        expected.push(("out.weight".into(), vec![cfg.n_classes, cfg.fc_hidden]));
        expected.push(("out.bias".into(), vec![cfg.n_classes]));
        expected.push(("embedding".into(), vec![self.embedding.vocab_size(), cfg.embedding_dim]));

        let actual = self.named_tensors();
        if actual.len() != expected.len() {
            return Err(Error::config(
                "model",
                format!("expected {} tensors, found {}", expected.len(), actual.len()),
            ));
        }
        for ((name, t), (ename, eshape)) in actual.iter().zip(&expected) {
            if name != ename || t.shape() != eshape.as_slice() {
                return Err(Error::config(
                    ename.clone(),
                    format!("expected shape {eshape:?}, found `{name}` with {:?}", t.shape()),
                ));
            }
        }
        Ok(())
    }
}
