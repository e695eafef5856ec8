//! `EMF1` feature cache: the magic bytes `EMF1` followed by one record per
//! utterance until end of file. Each record is a little-endian `u32` id length,
//! the UTF-8 id, `u32` frame count `N`, `u32` width `D`, then `N·D`
//! little-endian `f32` values in row-major order.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::mfcc::{MfccMatrix, AUDIO_FEATURE_DIM};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"EMF1";

pub fn write_features<W: Write>(mut out: W, records: &[(String, MfccMatrix)]) -> std::io::Result<()> {
    out.write_all(FEATURE_MAGIC)?;
    for (id, m) in records {
        let values = m.values();
        out.write_all(&(id.len() as u32).to_le_bytes())?;
        out.write_all(id.as_bytes())?;
        out.write_all(&(values.rows() as u32).to_le_bytes())?;
        out.write_all(&(values.cols() as u32).to_le_bytes())?;
        for &v in values.data() {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    out.flush()
}

pub fn write_features_file(path: impl AsRef<Path>, records: &[(String, MfccMatrix)]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_features(BufWriter::new(file), records).map_err(|e| Error::io(path, e))
}

pub fn read_features<R: Read>(mut input: R) -> Result<Vec<(String, MfccMatrix)>> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::FeatureFile(e.to_string()))?;
    let mut cursor = Cursor { bytes: &bytes, pos: 0 };
    if cursor.take(4)? != FEATURE_MAGIC {
        return Err(Error::FeatureFile("missing EMF1 magic".into()));
    }
    let mut records = Vec::new();
    while cursor.pos < bytes.len() {
        let id_len = cursor.u32()? as usize;
        let id = std::str::from_utf8(cursor.take(id_len)?)
            .map_err(|_| Error::FeatureFile("id is not UTF-8".into()))?
            .to_string();
        let n = cursor.u32()? as usize;
        let d = cursor.u32()? as usize;
        if d != AUDIO_FEATURE_DIM {
            return Err(Error::FeatureFile(format!(
                "record `{id}` has width {d}, expected {AUDIO_FEATURE_DIM}"
            )));
        }
        let raw = cursor.take(n * d * 4)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        records.push((id, MfccMatrix::new(Tensor::new(vec![n, d], values)?)?));
    }
    Ok(records)
}

pub fn read_features_file(path: impl AsRef<Path>) -> Result<Vec<(String, MfccMatrix)>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_features(BufReader::new(file))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::FeatureFile(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
