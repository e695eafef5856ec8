use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;

/// The four emotion classes, in class-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Angry,
    Happy,
    Sad,
    Neutral,
}

impl Emotion {
    pub const ALL: [Emotion; 4] = [Emotion::Angry, Emotion::Happy, Emotion::Sad, Emotion::Neutral];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Angry => "angry",
            Emotion::Happy => "happy",
            Emotion::Sad => "sad",
            Emotion::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Emotion::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown label `{s}` (expected angry, happy, sad or neutral)"))
    }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub wav_path: PathBuf,
    /// Reference transcript.
    pub transcript: String,
    /// Machine-recognised transcript, used instead of `transcript` when the
    /// front end is configured for it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asr_transcript: Option<String>,
    pub label: Emotion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xvector_path: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    wav_path: PathBuf,
    transcript: String,
    #[serde(default)]
    asr_transcript: Option<String>,
    label: String,
    #[serde(default)]
    xvector_path: Option<PathBuf>,
}

/// Resolves a manifest path relative to the directory holding the manifest.
pub fn resolve_path(base_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

/// Reads a JSON-lines manifest, preserving order. Rejects duplicate ids,
/// unknown labels, transcripts with no tokens and referenced files that do
/// not exist (relative paths resolve against the manifest's directory).
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            detail: e.to_string(),
        })?;
        let label = raw
            .label
            .parse::<Emotion>()
            .map_err(|e| Error::record(&raw.id, e))?;
        if !seen.insert(raw.id.clone()) {
            return Err(Error::record(&raw.id, "duplicate id"));
        }
        if tokenize(&raw.transcript).is_empty() {
            return Err(Error::record(&raw.id, "transcript has no tokens"));
        }
        if raw.asr_transcript.as_deref().is_some_and(|t| tokenize(t).is_empty()) {
            return Err(Error::record(&raw.id, "asr_transcript has no tokens"));
        }
        let wav = resolve_path(base, &raw.wav_path);
        if !wav.is_file() {
            return Err(Error::record(&raw.id, format!("missing audio file {}", wav.display())));
        }
        if let Some(x) = &raw.xvector_path {
            let x = resolve_path(base, x);
            if !x.is_file() {
                return Err(Error::record(&raw.id, format!("missing x-vector file {}", x.display())));
            }
        }
        records.push(ManifestRecord {
            id: raw.id,
            wav_path: raw.wav_path,
            transcript: raw.transcript,
            asr_transcript: raw.asr_transcript,
            label,
            xvector_path: raw.xvector_path,
        });
    }
    Ok(records)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[ManifestRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a whitespace-separated x-vector and checks its length.
pub fn load_xvector(path: &Path, expected_dim: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let values = text
        .split_whitespace()
        .map(|f| {
            f.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                detail: format!("`{f}` is not a number"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected_dim {
        return Err(Error::invalid(
            "load_xvector",
            format!("{} has {} values, expected dimension {expected_dim}", path.display(), values.len()),
        ));
    }
    Ok(values)
}
