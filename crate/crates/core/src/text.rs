//! Transcript processing: tokenization, vocabulary, pretrained embedding
//! tables and the pooled SWEM summary of a sentence.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const EMBEDDING_DIM: usize = 300;
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
/// Half-width of the uniform range used for rows missing from an embedding file.
pub const UNKNOWN_INIT_RANGE: f64 = 0.05;

/// Lowercases, splits on whitespace and trims non-alphanumeric characters
/// from both ends of every token, so internal apostrophes survive.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.to_lowercase()
                .trim_matches(|c: char| !c.is_alphanumeric())
                .to_string()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Dense token → row map. Row 0 is padding and row 1 the unknown token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(Vec::<String>::new())
    }
}

impl Vocabulary {
    /// Builds a vocabulary from tokens in first-seen order after the two
    /// reserved entries. Reserved names and repeats are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self {
            tokens: vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()],
            index: HashMap::from([(PAD_TOKEN.to_string(), PAD_ID), (UNK_TOKEN.to_string(), UNK_ID)]),
        };
        for t in tokens {
            let t = t.into();
            if !vocab.index.contains_key(&t) {
                vocab.index.insert(t.clone(), vocab.tokens.len());
                vocab.tokens.push(t);
            }
        }
        vocab
    }

    /// Vocabulary over every token of the given transcripts.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        Self::from_tokens(texts.into_iter().flat_map(tokenize))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Row index of `token`, falling back to the unknown row.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK_ID)
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }
}

/// `V × dim` embedding matrix aligned with a [`Vocabulary`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub matrix: Tensor,
    pub trainable: bool,
}

impl EmbeddingTable {
    /// Every non-padding row drawn from uniform(−0.05, 0.05).
    pub fn random(vocab_size: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![0.0; vocab_size * dim];
        let start = dim.min(data.len());
        for v in &mut data[start..] {
            *v = rng.gen_range(-UNKNOWN_INIT_RANGE..UNKNOWN_INIT_RANGE);
        }
        Self {
            matrix: Tensor::new(vec![vocab_size, dim], data).expect("consistent shape"),
            trainable: true,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn row(&self, id: usize) -> &[f64] {
        self.matrix.row(id)
    }

    /// Restores the all-zero padding row.
    pub fn zero_padding_row(&mut self) {
        let dim = self.dim();
        self.matrix.data_mut()[..dim].fill(0.0);
    }
}

/// Loads a `token v_1 … v_300` text file. See [`load_embeddings_with_dim`].
pub fn load_embeddings(path: impl AsRef<Path>, vocab: &Vocabulary, seed: u64) -> Result<EmbeddingTable> {
    load_embeddings_with_dim(path, vocab, EMBEDDING_DIM, seed)
}

/// Reads one `token` + `dim` decimals per line. Vocabulary rows found in the
/// file are copied (first occurrence wins); the others keep a uniform random
/// initialisation and the padding row stays zero. Every line is validated,
/// including lines for tokens outside the vocabulary.
pub fn load_embeddings_with_dim(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut table = EmbeddingTable::random(vocab.len(), dim, seed);
    let mut filled = vec![false; vocab.len()];
    filled[PAD_ID] = true;
    let parse_err = |line: usize, detail: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        detail,
    };
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().unwrap_or_default();
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(line_no, format!("`{f}` is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(parse_err(
                line_no,
                format!("token `{token}` has {} values, expected {dim}", values.len()),
            ));
        }
        if let Some(id) = vocab.get(token) {
            if !filled[id] {
                table.matrix.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(&values);
                filled[id] = true;
            }
        }
    }
    Ok(table)
}

/// Row ids for `tokens`, truncated to `max_tokens`.
pub fn token_ids(tokens: &[String], vocab: &Vocabulary, max_tokens: usize) -> Vec<usize> {
    tokens.iter().take(max_tokens).map(|t| vocab.id(t)).collect()
}

/// Looks up embeddings into a zero-padded `max_tokens × dim` matrix.
/// Returns the matrix and the number of real rows.
pub fn embed_sequence(
    tokens: &[String],
    vocab: &Vocabulary,
    table: &EmbeddingTable,
    max_tokens: usize,
) -> (Tensor, usize) {
    let ids = token_ids(tokens, vocab, max_tokens);
    let dim = table.dim();
    let mut data = vec![0.0; max_tokens * dim];
    for (i, &id) in ids.iter().enumerate() {
        data[i * dim..(i + 1) * dim].copy_from_slice(table.row(id));
    }
    (
        Tensor::new(vec![max_tokens, dim], data).expect("consistent shape"),
        ids.len(),
    )
}

/// Elementwise max over the first `valid_len` rows followed by their mean.
pub fn swem_features(emb: &Tensor, valid_len: usize) -> Result<Tensor> {
    if emb.ndim() != 2 {
        return Err(Error::shape("swem_features", format!("expected M×D, got {:?}", emb.shape())));
    }
    if valid_len == 0 || valid_len > emb.rows() {
        return Err(Error::invalid(
            "swem_features",
            format!("valid_len must be in 1..={}, got {valid_len}", emb.rows()),
        ));
    }
    let dim = emb.cols();
    let mut max = emb.row(0).to_vec();
    let mut sum = emb.row(0).to_vec();
    for i in 1..valid_len {
        for (j, &v) in emb.row(i).iter().enumerate() {
            max[j] = max[j].max(v);
            sum[j] += v;
        }
    }
    max.extend(sum.iter().map(|s| s / valid_len as f64));
    debug_assert_eq!(max.len(), 2 * dim);
    Ok(Tensor::from_vec(max))
}
