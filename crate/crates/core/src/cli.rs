//! The `mscnn` command line. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code: 0 on success, 1 for usage
//! and validation errors, 2 for runtime failures (non-finite loss, corrupt
//! checkpoint, failed gradient check).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::autodiff::PoolMode;
use crate::data::{
    load_manifest, load_xvector, manifest_dir, resolve_path, synth_dataset, Emotion, Extractor, ManifestRecord,
    SynthOptions,
};
use crate::dsp::{read_features_file, write_features_file};
use crate::error::{Error, Result};
use crate::evaluation::{argmax, evaluate, CvReport, FoldResult};
use crate::experiment::{run_experiment, RunConfig};
use crate::gradcheck::{gradcheck, GradcheckSetup, GRADCHECK_TOLERANCE};
use crate::model::{predict_probs, Checkpoint};

#[derive(Debug, Parser)]
#[command(name = "mscnn", version, about = "Bimodal (audio + text) speech emotion recognition")]
pub struct Cli {
    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic four-class corpus.
    Synth(SynthArgs),
    /// Compute MFCC features for every manifest record into an EMF1 file.
    ExtractFeatures(ExtractArgs),
    /// Cross-validated training.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a manifest.
    Eval(EvalArgs),
    /// Class posterior of one utterance.
    Predict(PredictArgs),
    /// Compare analytic and finite-difference gradients on a tiny model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Utterances per class.
    #[arg(short = 'n', long = "per-class", default_value_t = 8)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    /// x-vector dimension of the generated speaker vectors.
    #[arg(long, default_value_t = 512)]
    pub xvector_dim: usize,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Run config whose [frontend] section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Overrides applied on top of the config file; flags win.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run a single fold (0-9) instead of all ten.
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub no_attention: bool,
    #[arg(long)]
    pub no_xvector: bool,
    #[arg(long)]
    pub no_swem: bool,
    /// Comma-separated audio pooling modes (max, avg, std).
    #[arg(long, value_delimiter = ',')]
    pub audio_pool: Option<Vec<PoolMode>>,
    /// Comma-separated text pooling modes (max, avg, std).
    #[arg(long, value_delimiter = ',')]
    pub text_pool: Option<Vec<PoolMode>>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(f) = self.fold {
            cfg.folds = Some(vec![f]);
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(r) = self.repeats {
            cfg.repeats = r;
        }
        if self.no_attention {
            cfg.model.use_attention = false;
        }
        if self.no_xvector {
            cfg.model.use_xvector = false;
        }
        if self.no_swem {
            cfg.model.use_swem = false;
        }
        if let Some(m) = &self.audio_pool {
            cfg.model.pool_modes_audio = m.clone();
        }
        if let Some(m) = &self.text_pool {
            cfg.model.pool_modes_text = m.clone();
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Run config to check the checkpoint against.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// EMF1 feature cache to use instead of the WAV files.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Also write the metrics as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub wav: PathBuf,
    #[arg(long)]
    pub transcript: String,
    /// x-vector file, required when the model uses x-vectors.
    #[arg(long)]
    pub xvector: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Run config whose [model] section replaces the tiny model.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if cli.verbose {
        let _ = env_logger::Builder::new()
            .filter_level(log::LevelFilter::Info)
            .format_timestamp(None)
            .try_init();
    }
    match execute(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_runtime_failure() {
                2
            } else {
                1
            }
        }
    }
}

fn out_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Synth(a) => cmd_synth(&a, out),
        Command::ExtractFeatures(a) => cmd_extract_features(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Predict(a) => cmd_predict(&a, out),
        Command::Gradcheck(a) => cmd_gradcheck(&a, out),
    }
}

pub fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<i32> {
    let mut opts = SynthOptions::new(a.n, a.seed);
    opts.xvector_dim = a.xvector_dim;
    let corpus = synth_dataset(&a.out, &opts)?;
    writeln!(
        out,
        "wrote {} utterances; manifest {}; embeddings {}",
        corpus.records.len(),
        corpus.manifest_path.display(),
        corpus.embeddings_path.display()
    )
    .map_err(out_err)?;
    Ok(0)
}

pub fn cmd_extract_features(a: &ExtractArgs, out: &mut dyn Write) -> Result<i32> {
    let frontend = match &a.config {
        Some(p) => RunConfig::load(p)?.frontend,
        None => Default::default(),
    };
    let records = load_manifest(&a.manifest)?;
    let extractor = Extractor::new(frontend, Default::default(), None, manifest_dir(&a.manifest))?;
    let features = records
        .par_iter()
        .map(|r| extractor.audio_features(r).map(|m| (r.id.clone(), m)))
        .collect::<Result<Vec<_>>>()?;
    write_features_file(&a.out, &features)?;
    writeln!(out, "wrote features of {} records to {}", features.len(), a.out.display()).map_err(out_err)?;
    Ok(0)
}

/// Config file (if any) with flag overrides applied and the manifest path
/// filled in.
pub fn resolve_train_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match (&a.config, a.overrides.seed) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(seed)) => RunConfig::new(seed),
        (None, None) => return Err(Error::config("seed", "give --config with a seed or pass --seed")),
    };
    a.overrides.apply(&mut cfg);
    if let Some(m) = &a.manifest {
        cfg.data.manifest = Some(m.clone());
    }
    for p in [&mut cfg.data.manifest, &mut cfg.data.embeddings, &mut cfg.data.features]
        .into_iter()
        .flatten()
    {
        if p.is_relative() {
            *p = std::env::current_dir().map_err(|e| Error::io(".", e))?.join(&*p);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = resolve_train_config(a)?;
    let report = run_experiment(&cfg, &a.out)?;
    out.write_all(report.to_text().as_bytes()).map_err(out_err)?;
    Ok(0)
}

fn flatten_json(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, String)>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                flatten_json(&format!("{prefix}.{k}"), v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// `section.field: checkpoint X, config Y` for every differing field.
pub fn config_differences(ck: &Checkpoint, cfg: &RunConfig) -> Vec<String> {
    let pairs = [
        ("model", serde_json::to_value(&ck.model), serde_json::to_value(&cfg.model)),
        ("frontend", serde_json::to_value(&ck.frontend), serde_json::to_value(&cfg.frontend)),
    ];
    let mut diffs = Vec::new();
    for (name, a, b) in pairs {
        let (mut fa, mut fb) = (Vec::new(), Vec::new());
        flatten_json(name, &a.expect("serializable"), &mut fa);
        flatten_json(name, &b.expect("serializable"), &mut fb);
        for ((field, va), (_, vb)) in fa.iter().zip(&fb) {
            if va != vb {
                diffs.push(format!("{field}: checkpoint {va}, config {vb}"));
            }
        }
    }
    diffs
}

/// Checks that the manifest provides what the checkpoint's model consumes.
pub fn check_manifest_against(ck: &Checkpoint, records: &[ManifestRecord], base_dir: &Path) -> Result<()> {
    if !ck.model.use_xvector {
        return Ok(());
    }
    for r in records {
        let p = r.xvector_path.as_ref().ok_or_else(|| {
            Error::config(
                "model.use_xvector",
                format!("checkpoint uses x-vectors but record `{}` has no xvector_path", r.id),
            )
        })?;
        load_xvector(&resolve_path(base_dir, p), ck.model.xvector_dim).map_err(|e| {
            Error::config("model.xvector_dim", format!("record `{}`: {e}", r.id))
        })?;
    }
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    if let Some(p) = &a.config {
        let cfg = RunConfig::load(p)?;
        let diffs = config_differences(&ck, &cfg);
        if !diffs.is_empty() {
            return Err(Error::config(
                diffs[0].split(':').next().unwrap_or("config").to_string(),
                format!("checkpoint and config disagree:\n  {}", diffs.join("\n  ")),
            ));
        }
    }
    let records = load_manifest(&a.manifest)?;
    let base = manifest_dir(&a.manifest);
    check_manifest_against(&ck, &records, &base)?;
    let extractor = Extractor::new(
        ck.frontend.clone(),
        ck.vocab.clone(),
        ck.model.use_xvector.then_some(ck.model.xvector_dim),
        base,
    )?;
    let bundles = match &a.features {
        Some(cache) => {
            let mut by_id: std::collections::HashMap<_, _> = read_features_file(cache)?.into_iter().collect();
            records
                .iter()
                .map(|r| {
                    let m = by_id
                        .remove(&r.id)
                        .ok_or_else(|| Error::record(&r.id, "not found in feature cache"))?;
                    extractor.bundle_from_features(r, &m)
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => extractor.extract_all(&records)?,
    };
    let (confusion, metrics) = evaluate(&ck.model, &ck.params, &bundles)?;
    let report = CvReport::new(vec![FoldResult {
        fold: 0,
        repeat: 0,
        best_epoch: 0,
        confusion,
        metrics,
    }])?;
    writeln!(out, "WA {:.6} UA {:.6} n {}", metrics.wa, metrics.ua, metrics.n).map_err(out_err)?;
    out.write_all(report.pooled_confusion.to_table().as_bytes()).map_err(out_err)?;
    if let Some(p) = &a.out {
        std::fs::write(p, serde_json::to_string_pretty(&metrics).expect("serializes"))
            .map_err(|e| Error::io(p, e))?;
    }
    Ok(0)
}

pub fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> Result<i32> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    if ck.model.use_xvector && a.xvector.is_none() {
        return Err(Error::config("xvector", "this model uses x-vectors; pass --xvector"));
    }
    let record = ManifestRecord {
        id: "input".into(),
        wav_path: a.wav.clone(),
        transcript: a.transcript.clone(),
        asr_transcript: None,
        label: Emotion::Angry,
        xvector_path: a.xvector.clone(),
    };
    let extractor = Extractor::new(
        ck.frontend.clone(),
        ck.vocab.clone(),
        ck.model.use_xvector.then_some(ck.model.xvector_dim),
        ".",
    )?;
    let bundle = extractor.extract(&record)?;
    let probs = predict_probs(&ck.model, &ck.params, std::slice::from_ref(&bundle))?.remove(0);
    for (e, p) in Emotion::ALL.iter().zip(&probs) {
        writeln!(out, "{}\t{p:.6}", e.name()).map_err(out_err)?;
    }
    writeln!(out, "predicted\t{}", Emotion::ALL[argmax(&probs)].name()).map_err(out_err)?;
    Ok(0)
}

pub fn cmd_gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> Result<i32> {
    let mut setup = GradcheckSetup::tiny(a.seed);
    if let Some(p) = &a.config {
        setup.model = RunConfig::load(p)?.model;
    }
    let started = std::time::Instant::now();
    let report = gradcheck(&setup)?;
    let w = &report.worst;
    writeln!(
        out,
        "checked {} elements in {:.1} s, loss {:.6}",
        report.checked,
        started.elapsed().as_secs_f64(),
        report.loss
    )
    .map_err(out_err)?;
    writeln!(
        out,
        "max relative error {:.3e} at {}[{}] (analytic {:.6e}, numeric {:.6e}); {} elements >= {GRADCHECK_TOLERANCE:e}",
        report.max_rel_error, w.tensor, w.index, w.analytic, w.numeric, report.over_tolerance
    )
    .map_err(out_err)?;
    let w = &report.worst_resolved;
    writeln!(
        out,
        "max relative error above finite-difference resolution ({:.2e}): {:.3e} at {}[{}]",
        report.fd_resolution, report.max_resolved_error, w.tensor, w.index
    )
    .map_err(out_err)?;
    if report.passed() {
        writeln!(out, "PASS (< {GRADCHECK_TOLERANCE:e})").map_err(out_err)?;
        Ok(0)
    } else {
        writeln!(out, "FAIL (>= {GRADCHECK_TOLERANCE:e})").map_err(out_err)?;
        Ok(2)
    }
}
