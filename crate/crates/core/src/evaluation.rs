//! Accuracy metrics, confusion matrices and the stratified 10-fold protocol
//! (8 blocks train, 1 dev, 1 test per fold).

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Emotion, FeatureBundle};
use crate::error::{Error, Result};
use crate::model::{predict_probs, ModelConfig, ModelParameters};

pub const N_FOLDS: usize = 10;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::shape("ConfusionMatrix::from_rows", "matrix must be square"));
        }
        Ok(Self {
            n_classes: n,
            counts: rows.concat(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        assert!(truth < self.n_classes && predicted < self.n_classes, "class index out of range");
        self.counts[truth * self.n_classes + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.n_classes..(truth + 1) * self.n_classes]
    }

    pub fn row_total(&self, truth: usize) -> u64 {
        self.row(truth).iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|i| self.get(i, i)).sum()
    }

    /// Adds `other` cell by cell.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.n_classes != self.n_classes {
            return Err(Error::shape(
                "ConfusionMatrix::merge",
                format!("{} vs {} classes", self.n_classes, other.n_classes),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Overall accuracy, `trace / total`.
    pub fn weighted_accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::invalid("weighted_accuracy", "confusion matrix is empty"));
        }
        Ok(self.trace() as f64 / total as f64)
    }

    /// Mean per-class recall. Classes with no samples are left out of the
    /// mean (with a warning).
    pub fn unweighted_accuracy(&self) -> Result<f64> {
        let mut sum = 0.0;
        let mut used = 0usize;
        for i in 0..self.n_classes {
            let row = self.row_total(i);
            if row == 0 {
                log::warn!("class {i} has no samples; left out of UA");
                continue;
            }
            sum += self.get(i, i) as f64 / row as f64;
            used += 1;
        }
        if used == 0 {
            return Err(Error::invalid("unweighted_accuracy", "confusion matrix is empty"));
        }
        Ok(sum / used as f64)
    }

    pub fn metrics(&self) -> Result<Metrics> {
        Ok(Metrics {
            wa: self.weighted_accuracy()?,
            ua: self.unweighted_accuracy()?,
            n: self.total() as usize,
        })
    }

    /// Fixed-width table with class names on both axes when there are four
    /// classes.
    pub fn to_table(&self) -> String {
        let name = |i: usize| {
            if self.n_classes == Emotion::ALL.len() {
                Emotion::ALL[i].name().to_string()
            } else {
                format!("c{i}")
            }
        };
        let mut s = format!("{:>10}", "true\\pred");
        for j in 0..self.n_classes {
            write!(s, "{:>9}", name(j)).unwrap();
        }
        s.push('\n');
        for i in 0..self.n_classes {
            write!(s, "{:>10}", name(i)).unwrap();
            for j in 0..self.n_classes {
                write!(s, "{:>9}", self.get(i, j)).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub wa: f64,
    pub ua: f64,
    pub n: usize,
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Predicts every sample and tallies the confusion matrix.
pub fn evaluate(
    cfg: &ModelConfig,
    params: &ModelParameters,
    samples: &[FeatureBundle],
) -> Result<(ConfusionMatrix, Metrics)> {
    if samples.is_empty() {
        return Err(Error::invalid("evaluate", "no samples"));
    }
    let probs = predict_probs(cfg, params, samples)?;
    let mut cm = ConfusionMatrix::new(cfg.n_classes);
    for (b, p) in samples.iter().zip(&probs) {
        if b.label >= cfg.n_classes {
            return Err(Error::record(&b.id, format!("label index {} out of range", b.label)));
        }
        cm.add(b.label, argmax(p));
    }
    let m = cm.metrics()?;
    Ok((cm, m))
}

/// Index lists of one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    /// The ten disjoint blocks, each sorted.
    pub blocks: Vec<Vec<usize>>,
    pub folds: Vec<FoldSplit>,
}

impl FoldPlan {
    pub fn fold(&self, i: usize) -> Result<&FoldSplit> {
        self.folds
            .get(i)
            .ok_or_else(|| Error::invalid("FoldPlan::fold", format!("fold {i} out of range 0..{N_FOLDS}")))
    }
}

/// Stratified, seeded split into ten blocks. Each class's indices are
/// shuffled and dealt round-robin, the dealing position carrying over from
/// one class to the next so block sizes differ by at most one. Fold `i`
/// tests on block `i`, uses block `(i + 1) % 10` as dev and trains on the
/// other eight.
pub fn make_folds(labels: &[usize], n_classes: usize, seed: u64) -> Result<FoldPlan> {
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class
            .get_mut(l)
            .ok_or_else(|| Error::invalid("make_folds", format!("label {l} at index {i} out of range")))?
            .push(i);
    }
    for (c, idx) in by_class.iter().enumerate() {
        if idx.len() < N_FOLDS {
            return Err(Error::invalid(
                "make_folds",
                format!("class {c} has {} samples, need at least {N_FOLDS}", idx.len()),
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = vec![Vec::new(); N_FOLDS];
    let mut slot = 0;
    for mut idx in by_class {
        idx.shuffle(&mut rng);
        for i in idx {
            blocks[slot % N_FOLDS].push(i);
            slot += 1;
        }
    }
    for b in &mut blocks {
        b.sort_unstable();
    }
    let folds = (0..N_FOLDS)
        .map(|i| {
            let dev_block = (i + 1) % N_FOLDS;
            let mut train: Vec<usize> = (0..N_FOLDS)
                .filter(|&b| b != i && b != dev_block)
                .flat_map(|b| blocks[b].iter().copied())
                .collect();
            train.sort_unstable();
            FoldSplit {
                train,
                dev: blocks[dev_block].clone(),
                test: blocks[i].clone(),
            }
        })
        .collect();
    Ok(FoldPlan { blocks, folds })
}

/// Test-set outcome of one trained fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub repeat: usize,
    pub best_epoch: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregate over folds (and repeats).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub mean_wa: f64,
    pub std_wa: f64,
    pub mean_ua: f64,
    pub std_ua: f64,
    /// Metrics of the summed confusion matrix.
    pub pooled: Metrics,
    pub pooled_confusion: ConfusionMatrix,
}

impl CvReport {
    pub fn new(folds: Vec<FoldResult>) -> Result<Self> {
        let first = folds
            .first()
            .ok_or_else(|| Error::invalid("CvReport::new", "no fold results"))?;
        let mut pooled_confusion = ConfusionMatrix::new(first.confusion.n_classes());
        for f in &folds {
            pooled_confusion.merge(&f.confusion)?;
        }
        let was: Vec<f64> = folds.iter().map(|f| f.metrics.wa).collect();
        let uas: Vec<f64> = folds.iter().map(|f| f.metrics.ua).collect();
        let (mean_wa, std_wa) = mean_std(&was);
        let (mean_ua, std_ua) = mean_std(&uas);
        Ok(Self {
            pooled: pooled_confusion.metrics()?,
            pooled_confusion,
            folds,
            mean_wa,
            std_wa,
            mean_ua,
            std_ua,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for f in &self.folds {
            writeln!(
                s,
                "fold {} repeat {}: WA {:.4} UA {:.4} (n={}, best epoch {})",
                f.fold, f.repeat, f.metrics.wa, f.metrics.ua, f.metrics.n, f.best_epoch
            )
            .unwrap();
            s.push_str(&f.confusion.to_table());
        }
        writeln!(
            s,
            "mean over {} runs: WA {:.4} ± {:.4}  UA {:.4} ± {:.4}",
            self.folds.len(),
            self.mean_wa,
            self.std_wa,
            self.mean_ua,
            self.std_ua
        )
        .unwrap();
        writeln!(s, "pooled: WA {:.4} UA {:.4} (n={})", self.pooled.wa, self.pooled.ua, self.pooled.n).unwrap();
        s.push_str(&self.pooled_confusion.to_table());
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
