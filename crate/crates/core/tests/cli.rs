use std::path::{Path, PathBuf};

use mscnn_spu::cli::{cmd_eval, run, EvalArgs};
use mscnn_spu::Error;

fn mscnn(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = run(std::iter::once("mscnn").chain(args.iter().copied()), &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const DESK_CONFIG: &str = r#"
seed = 3
folds = [0]

[model]
filters_per_scale = 4
audio_kernel_sizes = [3, 5]
text_kernel_sizes = [3, 5]
xvector_dim = 16
fc_hidden = 16

[train]
epochs = 2
batch_size = 8

[frontend]
max_audio_seconds = 1.0
max_tokens = 12
"#;

/// Synthesizes a corpus with 10 utterances per class and 16-dim x-vectors.
fn corpus(dir: &Path) -> PathBuf {
    let out = dir.join("corpus");
    let (code, text) = mscnn(&["synth", "--out", s(&out), "-n", "10", "--seed", "4", "--xvector-dim", "16"]);
    assert_eq!(code, 0);
    assert!(text.contains("wrote 40 utterances"), "{text}");
    out
}

#[test]
fn bad_arguments_exit_with_one() {
    assert_eq!(mscnn(&["frobnicate"]).0, 1);
    assert_eq!(mscnn(&["train", "--out"]).0, 1);
    assert_eq!(mscnn(&["train", "--out", "/tmp/x", "--audio-pool", "median"]).0, 1);
    assert_eq!(mscnn(&["--help"]).0, 0);
    // neither --config nor --seed
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mscnn(&["train", "--out", s(dir.path())]).0, 1);
}

#[test]
fn train_eval_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = corpus(dir.path());
    let manifest = corpus.join("manifest.jsonl");
    let cfg_path = dir.path().join("run.toml");
    let embeddings = corpus.join("embeddings.txt");
    let text = format!(
        "seed = 3\nfolds = [0]\n\n[data]\nembeddings = \"{}\"\n{}",
        embeddings.display(),
        DESK_CONFIG.split_once("folds = [0]").unwrap().1
    );
    std::fs::write(&cfg_path, text).unwrap();

    let cache = dir.path().join("feats.emf");
    let (code, text) = mscnn(&["extract-features", "--manifest", s(&manifest), "--out", s(&cache), "--config", s(&cfg_path)]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("40 records"));

    let run_a = dir.path().join("run_a");
    let (code, report) = mscnn(&["train", "--config", s(&cfg_path), "--manifest", s(&manifest), "--out", s(&run_a)]);
    assert_eq!(code, 0);
    assert!(report.contains("WA"), "{report}");
    for f in ["config.toml", "folds.json", "report.txt", "metrics.json", "fold0_r0/train.log", "fold0_r0/model.emc"] {
        assert!(run_a.join(f).exists(), "{f}");
    }
    let log_a = std::fs::read_to_string(run_a.join("fold0_r0/train.log")).unwrap();
    assert!(log_a.starts_with("epoch\ttrain_loss\tdev_wa\tdev_ua\n0\t"), "{log_a}");

    // the snapshot written with the run reproduces it exactly
    let run_b = dir.path().join("run_b");
    let snapshot = run_a.join("config.toml");
    let (code, _) = mscnn(&["train", "--config", s(&snapshot), "--manifest", s(&manifest), "--out", s(&run_b)]);
    assert_eq!(code, 0);
    assert_eq!(std::fs::read_to_string(run_b.join("fold0_r0/train.log")).unwrap(), log_a);
    assert_eq!(
        std::fs::read(run_b.join("fold0_r0/model.emc")).unwrap(),
        std::fs::read(run_a.join("fold0_r0/model.emc")).unwrap()
    );

    let ckpt = run_a.join("fold0_r0/model.emc");
    let (code, eval) = mscnn(&["eval", "--checkpoint", s(&ckpt), "--manifest", s(&manifest), "--config", s(&cfg_path)]);
    assert_eq!(code, 0);
    assert!(eval.starts_with("WA ") && eval.contains("n 40"), "{eval}");
    let metrics = dir.path().join("m.json");
    let (code, cached) = mscnn(&[
        "eval", "--checkpoint", s(&ckpt), "--manifest", s(&manifest), "--features", s(&cache), "--out", s(&metrics),
    ]);
    assert_eq!(code, 0);
    assert_eq!(cached, eval);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    assert_eq!(m["n"], 40);

    let (code, pred) = mscnn(&[
        "predict",
        "--checkpoint",
        s(&ckpt),
        "--wav",
        s(&corpus.join("wav/sad_0000.wav")),
        "--transcript",
        "i miss you so much",
        "--xvector",
        s(&corpus.join("xvec/sad_0000.txt")),
    ]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = pred.lines().collect();
    assert_eq!(lines.len(), 5);
    let total: f64 = lines[..4].iter().map(|l| l.split('\t').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-5);
    assert!(lines[4].starts_with("predicted\t"));
    // x-vector model without --xvector
    let (code, _) = mscnn(&["predict", "--checkpoint", s(&ckpt), "--wav", s(&corpus.join("wav/sad_0000.wav")), "--transcript", "hi"]);
    assert_eq!(code, 1);

    // a config that disagrees with the checkpoint names the field
    let other = dir.path().join("other.toml");
    std::fs::write(&other, std::fs::read_to_string(&cfg_path).unwrap().replace("fc_hidden = 16", "fc_hidden = 32")).unwrap();
    let (code, _) = mscnn(&["eval", "--checkpoint", s(&ckpt), "--manifest", s(&manifest), "--config", s(&other)]);
    assert_eq!(code, 1);
    let args = EvalArgs {
        checkpoint: ckpt.clone(),
        manifest: manifest.clone(),
        config: Some(other),
        features: None,
        out: None,
    };
    match cmd_eval(&args, &mut Vec::new()) {
        Err(Error::Config { field, .. }) => assert_eq!(field, "model.fc_hidden"),
        other => panic!("{other:?}"),
    }

    // corrupt checkpoint is a runtime failure
    let bad = dir.path().join("bad.emc");
    let mut bytes = std::fs::read(&ckpt).unwrap();
    bytes.truncate(bytes.len() / 2);
    std::fs::write(&bad, bytes).unwrap();
    let (code, _) = mscnn(&["eval", "--checkpoint", s(&bad), "--manifest", s(&manifest)]);
    assert_eq!(code, 2);
}

#[test]
fn train_with_flags_only() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = corpus(dir.path());
    let out = dir.path().join("run");
    let (code, _) = mscnn(&[
        "train",
        "--seed",
        "1",
        "--manifest",
        s(&corpus.join("manifest.jsonl")),
        "--out",
        s(&out),
        "--fold",
        "2",
        "--epochs",
        "1",
        "--no-xvector",
        "--no-attention",
        "--audio-pool",
        "max,std",
    ]);
    assert_eq!(code, 0);
    let snapshot = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(snapshot.contains("use_xvector = false"));
    assert!(snapshot.contains("use_attention = false"));
    assert!(out.join("fold2_r0/model.emc").exists());
}

#[test]
fn gradcheck_subcommand_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.toml");
    std::fs::write(
        &cfg,
        "seed = 0\n[model]\nfilters_per_scale = 2\naudio_kernel_sizes = [3]\ntext_kernel_sizes = [2]\nxvector_dim = 4\nfc_hidden = 4\nembedding_dim = 6\n",
    )
    .unwrap();
    let (code, out) = mscnn(&["gradcheck", "--config", s(&cfg), "--seed", "5"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.trim_end().ends_with("PASS (< 1e-4)"), "{out}");
}
