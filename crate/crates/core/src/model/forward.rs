use rand::Rng;

use super::config::ModelConfig;
use super::params::ModelParameters;
use crate::autodiff::{Graph, PoolMode, Tensor, Var};
use crate::data::FeatureBundle;
use crate::error::{Error, Result};

/// Graph handles of every parameter tensor, in the order of
/// [`ModelParameters::named_tensors`].
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub audio: Vec<(Var, Var)>,
    pub text: Vec<(Var, Var)>,
    pub fc_weight: Var,
    pub fc_bias: Var,
    pub out_weight: Var,
    pub out_bias: Var,
    /// `None` at inference; the text branch then copies only the rows it uses.
    pub embedding: Option<Var>,
}

impl ParamVars {
    /// Records parameters as gradient-carrying leaves.
    pub fn trainable(g: &mut Graph, p: &ModelParameters) -> Self {
        let mut vars = Self::register(g, p, true);
        vars.embedding = Some(if p.embedding.trainable {
            g.param(p.embedding.matrix.clone())
        } else {
            g.constant(p.embedding.matrix.clone())
        });
        vars
    }

    /// Records parameters as constants.
    pub fn frozen(g: &mut Graph, p: &ModelParameters) -> Self {
        Self::register(g, p, false)
    }

    fn register(g: &mut Graph, p: &ModelParameters, grad: bool) -> Self {
        let mut leaf = |t: &Tensor| {
            if grad {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        let audio = p.audio.iter().map(|b| (leaf(&b.kernels), leaf(&b.bias))).collect();
        let text = p.text.iter().map(|b| (leaf(&b.kernels), leaf(&b.bias))).collect();
        Self {
            audio,
            text,
            fc_weight: leaf(&p.fc_weight),
            fc_bias: leaf(&p.fc_bias),
            out_weight: leaf(&p.out_weight),
            out_bias: leaf(&p.out_bias),
            embedding: None,
        }
    }

    /// Handles in the fixed parameter order (embedding last, when recorded).
    pub fn in_order(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for &(k, b) in self.audio.iter().chain(&self.text) {
            out.push(k);
            out.push(b);
        }
        out.extend([self.fc_weight, self.fc_bias, self.out_weight, self.out_bias]);
        out.extend(self.embedding);
        out
    }
}

/// Parallel full-width convolutions, one per `(kernels, bias)` scale, each
/// followed by ReLU, concatenated along channels into an `L × Σ F` map. Rows
/// at and beyond `valid_len` are zero.
pub fn mscnn_forward(g: &mut Graph, x: Var, banks: &[(Var, Var)], valid_len: usize) -> Result<Var> {
    let maps = banks
        .iter()
        .map(|&(k, b)| {
            let y = g.conv_full_width_masked(x, k, b, valid_len)?;
            Ok(g.relu(y))
        })
        .collect::<Result<Vec<_>>>()?;
    if maps.len() == 1 {
        Ok(maps[0])
    } else {
        g.concat_channels(&maps)
    }
}

/// Statistical pooling of a map: one pooled vector per mode (in canonical
/// order), plus their concatenation.
pub fn spu_forward(
    g: &mut Graph,
    map: Var,
    modes: &[PoolMode],
    valid_len: usize,
) -> Result<(Var, Vec<Var>)> {
    if modes.is_empty() {
        return Err(Error::invalid("spu_forward", "no pooling modes"));
    }
    let mut modes = modes.to_vec();
    modes.sort();
    modes.dedup();
    let pooled = modes
        .iter()
        .map(|&m| g.global_pool_time(map, m, valid_len))
        .collect::<Result<Vec<_>>>()?;
    let joined = if pooled.len() == 1 {
        pooled[0]
    } else {
        g.concat(&pooled)?
    };
    Ok((joined, pooled))
}

/// Result of [`attention_forward`].
#[derive(Debug, Clone)]
pub struct Attention {
    /// Concatenated attended vectors, one per context.
    pub vector: Var,
    /// Softmax weights over text positions, one vector per context.
    pub weights: Vec<Var>,
}

/// Audio-context attention over text positions: for every context vector
/// `e`, weights `softmax_k(e · h_k)` over the valid rows of `text_map` and
/// the weighted sum `Σ_k w_k h_k`; results concatenated in context order.
pub fn attention_forward(
    g: &mut Graph,
    text_map: Var,
    contexts: &[Var],
    valid_len_text: usize,
) -> Result<Attention> {
    if contexts.is_empty() {
        return Err(Error::invalid("attention_forward", "no context vectors"));
    }
    let width = g.value(text_map).shape().get(1).copied().unwrap_or(0);
    let mut attended = Vec::with_capacity(contexts.len());
    let mut weights = Vec::with_capacity(contexts.len());
    for &e in contexts {
        if g.value(e).shape() != [width] {
            return Err(Error::shape(
                "attention_forward",
                format!(
                    "context of shape {:?} does not match text channels {width}",
                    g.value(e).shape()
                ),
            ));
        }
        let logits = g.matvec(text_map, e)?;
        let w = g.masked_softmax(logits, valid_len_text)?;
        attended.push(g.weighted_rows(w, text_map)?);
        weights.push(w);
    }
    let vector = if attended.len() == 1 {
        attended[0]
    } else {
        g.concat(&attended)?
    };
    Ok(Attention { vector, weights })
}

/// Inputs to [`fuse_and_classify`]. Optional blocks must be present exactly
/// when the matching config flag is set.
#[derive(Debug, Clone, Copy)]
pub struct FusionInputs {
    pub audio_spu: Var,
    pub xvector: Option<Var>,
    pub text_spu: Var,
    pub swem: Option<Var>,
    pub attention: Option<Var>,
}

/// Classifier head output.
#[derive(Debug, Clone, Copy)]
pub struct Classified {
    pub probs: Var,
    pub logits: Var,
    pub fused: Var,
}

/// Concatenates the feature blocks, applies dropout (training only), a ReLU
/// hidden layer, the output layer and softmax.
pub fn fuse_and_classify<R: Rng + ?Sized>(
    g: &mut Graph,
    cfg: &ModelConfig,
    vars: &ParamVars,
    inputs: FusionInputs,
    training: bool,
    rng: &mut R,
) -> Result<Classified> {
    for (name, flag, present) in [
        ("xvector", cfg.use_xvector, inputs.xvector.is_some()),
        ("swem", cfg.use_swem, inputs.swem.is_some()),
        ("attention", cfg.use_attention, inputs.attention.is_some()),
    ] {
        if flag != present {
            return Err(Error::invalid(
                "fuse_and_classify",
                format!(
                    "{name} block is {} but use_{name} is {flag}",
                    if present { "present" } else { "missing" }
                ),
            ));
        }
    }
    let blocks: Vec<Var> = [
        Some(inputs.audio_spu),
        inputs.xvector,
        Some(inputs.text_spu),
        inputs.swem,
        inputs.attention,
    ]
    .into_iter()
    .flatten()
    .collect();
    let fused = g.concat(&blocks)?;
    let dropped = g.dropout(fused, cfg.dropout, training, rng)?;
    let hidden = g.affine(dropped, vars.fc_weight, vars.fc_bias)?;
    let hidden = g.relu(hidden);
    let logits = g.affine(hidden, vars.out_weight, vars.out_bias)?;
    let probs = g.softmax(logits)?;
    Ok(Classified {
        probs,
        logits,
        fused,
    })
}

/// Handles produced by one [`model_forward`] call.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub probs: Var,
    pub logits: Var,
    pub fused: Var,
    pub attention_weights: Vec<Var>,
}

/// Checks that a bundle carries what `cfg` needs.
pub fn check_bundle(cfg: &ModelConfig, bundle: &FeatureBundle) -> Result<()> {
    let err = |detail: String| Err(Error::record(bundle.id.clone(), detail));
    let shape = bundle.audio.shape();
    if shape.len() != 2 || shape[1] != cfg.audio_dim() {
        return err(format!("audio features {shape:?}, expected L×{}", cfg.audio_dim()));
    }
    if bundle.audio_len == 0 || bundle.audio_len > shape[0] {
        return err(format!("audio valid length {} not in 1..={}", bundle.audio_len, shape[0]));
    }
    if bundle.token_ids.is_empty() || bundle.token_ids.len() > bundle.max_tokens {
        return err(format!(
            "text valid length {} not in 1..={}",
            bundle.token_ids.len(),
            bundle.max_tokens
        ));
    }
    if cfg.use_xvector {
        match &bundle.xvector {
            None => return err("x-vector required by use_xvector but missing".into()),
            Some(v) if v.len() != cfg.xvector_dim => {
                return err(format!("x-vector has {} values, expected {}", v.len(), cfg.xvector_dim))
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// Full network on one utterance.
pub fn model_forward<R: Rng + ?Sized>(
    g: &mut Graph,
    cfg: &ModelConfig,
    params: &ModelParameters,
    vars: &ParamVars,
    bundle: &FeatureBundle,
    training: bool,
    rng: &mut R,
) -> Result<ForwardOutput> {
    check_bundle(cfg, bundle)?;
    let audio_len = bundle.audio_len;
    let text_len = bundle.token_ids.len();

    let audio = g.constant(bundle.audio.clone());
    let audio_map = mscnn_forward(g, audio, &vars.audio, audio_len)?;
    let (audio_spu, contexts) = spu_forward(g, audio_map, &cfg.audio_modes(), audio_len)?;

    let tokens = match vars.embedding {
        Some(table) => g.gather_rows(table, &bundle.token_ids, bundle.max_tokens)?,
        None => {
            let dim = params.embedding.dim();
            let mut data = vec![0.0; bundle.max_tokens * dim];
            for (i, &id) in bundle.token_ids.iter().enumerate() {
                if id >= params.embedding.vocab_size() {
                    return Err(Error::record(
                        bundle.id.clone(),
                        format!("token id {id} outside vocabulary"),
                    ));
                }
                data[i * dim..(i + 1) * dim].copy_from_slice(params.embedding.row(id));
            }
            g.constant(Tensor::new(vec![bundle.max_tokens, dim], data)?)
        }
    };
    let text_map = mscnn_forward(g, tokens, &vars.text, text_len)?;
    let (text_spu, _) = spu_forward(g, text_map, &cfg.text_modes(), text_len)?;

    let swem = if cfg.use_swem {
        let max = g.global_pool_time(tokens, PoolMode::Max, text_len)?;
        let avg = g.global_pool_time(tokens, PoolMode::Avg, text_len)?;
        Some(g.concat(&[max, avg])?)
    } else {
        None
    };
    let xvector = match (&bundle.xvector, cfg.use_xvector) {
        (Some(v), true) => Some(g.constant(Tensor::from_vec(v.clone()))),
        _ => None,
    };
    let (attention, attention_weights) = if cfg.use_attention {
        let att = attention_forward(g, text_map, &contexts, text_len)?;
        (Some(att.vector), att.weights)
    } else {
        (None, Vec::new())
    };

    let out = fuse_and_classify(
        g,
        cfg,
        vars,
        FusionInputs {
            audio_spu,
            xvector,
            text_spu,
            swem,
            attention,
        },
        training,
        rng,
    )?;
    Ok(ForwardOutput {
        probs: out.probs,
        logits: out.logits,
        fused: out.fused,
        attention_weights,
    })
}

/// Class posteriors for each bundle at inference. Bundles are processed in
/// chunks that share one graph.
pub fn predict_probs(
    cfg: &ModelConfig,
    params: &ModelParameters,
    bundles: &[FeatureBundle],
) -> Result<Vec<Vec<f64>>> {
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let mut out = Vec::with_capacity(bundles.len());
    for chunk in bundles.chunks(32) {
        let mut g = Graph::new();
        let vars = ParamVars::frozen(&mut g, params);
        for b in chunk {
            let f = model_forward(&mut g, cfg, params, &vars, b, false, &mut rng)?;
            out.push(g.value(f.probs).data().to_vec());
        }
    }
    Ok(out)
}
