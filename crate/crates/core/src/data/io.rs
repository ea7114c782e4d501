//! On-disk formats.
//!
//! A recording is a directory holding `meta.json` (annotations and layout)
//! and `data.bin` (channel-major contiguous little-endian f32). Manifests
//! are CSV with header `clip_id,subject_id,start_s,label,split`.

use super::{ClipManifest, ClipLabel, DataError, ManifestEntry, Recording, Split};
use crate::scalar::{real, Real};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub subject_id: String,
    pub sampling_rate: f64,
    pub channels: Vec<String>,
    /// Channels flagged as artifact-ridden; dropped at ingestion.
    #[serde(default)]
    pub artifact_channels: Vec<String>,
    pub seizure_onsets: Vec<f64>,
    #[serde(default)]
    pub artifact_intervals: Vec<(f64, f64)>,
    pub n_samples: usize,
    /// Always "f32".
    pub dtype: String,
    /// Always "little".
    pub endianness: String,
}

/// Write `rec` as a recording directory (data stored as little-endian f32).
pub fn write_recording<T: Real>(dir: &Path, rec: &Recording<T>) -> Result<(), DataError> {
    fs::create_dir_all(dir)?;
    let meta = RecordingMeta {
        subject_id: rec.subject_id.clone(),
        sampling_rate: rec.sampling_rate,
        channels: rec.channels.clone(),
        artifact_channels: vec![],
        seizure_onsets: rec.seizure_onsets.clone(),
        artifact_intervals: rec.artifact_intervals.clone(),
        n_samples: rec.n_samples(),
        dtype: "f32".into(),
        endianness: "little".into(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
    let mut w = BufWriter::new(fs::File::create(dir.join("data.bin"))?);
    for row in rec.data.rows() {
        for &v in row.iter() {
            w.write_all(&(v.to_f32().unwrap()).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a recording directory, dropping any channels listed in
/// `artifact_channels`, and validate the result.
pub fn read_recording<T: Real>(dir: &Path) -> Result<Recording<T>, DataError> {
    let meta_path = dir.join("meta.json");
    let meta_bytes = fs::read(&meta_path)
        .map_err(|e| DataError::MalformedHeader(format!("{}: {e}", meta_path.display())))?;
    let meta: RecordingMeta = serde_json::from_slice(&meta_bytes)
        .map_err(|e| DataError::MalformedHeader(format!("{}: {e}", meta_path.display())))?;
    if meta.dtype != "f32" || meta.endianness != "little" {
        return Err(DataError::MalformedHeader(format!(
            "unsupported dtype/endianness {}/{}",
            meta.dtype, meta.endianness
        )));
    }
    if meta.channels.is_empty() {
        return Err(DataError::MalformedHeader("no channels".into()));
    }

    let bin = fs::File::open(dir.join("data.bin"))?;
    let expected = meta.channels.len() * meta.n_samples * 4;
    let actual = bin.metadata()?.len() as usize;
    if expected != actual {
        return Err(DataError::ChannelLengthMismatch(format!(
            "{} channels x {} samples needs {expected} bytes, file has {actual}",
            meta.channels.len(),
            meta.n_samples
        )));
    }

    let keep: Vec<usize> = (0..meta.channels.len())
        .filter(|&i| !meta.artifact_channels.contains(&meta.channels[i]))
        .collect();
    if keep.is_empty() {
        return Err(DataError::MalformedHeader(
            "all channels flagged as artifacts".into(),
        ));
    }

    let mut reader = BufReader::new(bin);
    let mut data = Array2::<T>::zeros((keep.len(), meta.n_samples));
    let mut buf = vec![0u8; meta.n_samples * 4];
    let mut out_row = 0;
    for ch in 0..meta.channels.len() {
        reader.read_exact(&mut buf)?;
        if !keep.contains(&ch) {
            continue;
        }
        for (j, bytes) in buf.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
            data[[out_row, j]] = real(v as f64);
        }
        out_row += 1;
    }

    let rec = Recording {
        subject_id: meta.subject_id,
        sampling_rate: meta.sampling_rate,
        channels: keep.iter().map(|&i| meta.channels[i].clone()).collect(),
        data,
        seizure_onsets: meta.seizure_onsets,
        artifact_intervals: meta.artifact_intervals,
    };
    rec.validate()?;
    Ok(rec)
}

/// Write a manifest CSV (`clip_id,subject_id,start_s,label,split`).
pub fn write_manifest(path: &Path, manifest: &ClipManifest) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["clip_id", "subject_id", "start_s", "label", "split"])?;
    for e in &manifest.entries {
        w.write_record([
            e.clip_id.to_string(),
            e.subject_id.clone(),
            format!("{}", e.start_s),
            e.label.as_str().to_string(),
            e.split.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a manifest CSV.
pub fn read_manifest(path: &Path) -> Result<ClipManifest, DataError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut entries = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = |what: &str| DataError::MalformedHeader(format!("manifest: bad {what}: {rec:?}"));
        entries.push(ManifestEntry {
            clip_id: rec[0].parse().map_err(|_| bad("clip_id"))?,
            subject_id: rec[1].to_string(),
            start_s: rec[2].parse().map_err(|_| bad("start_s"))?,
            label: ClipLabel::from_str(&rec[3]).ok_or_else(|| bad("label"))?,
            split: Split::from_str(&rec[4]).ok_or_else(|| bad("split"))?,
            source_seizure: None,
        });
    }
    Ok(ClipManifest { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn small_rec() -> Recording<f64> {
        Recording {
            subject_id: "subj".into(),
            sampling_rate: 400.0,
            channels: vec!["a".into(), "b".into()],
            data: Array2::from_shape_fn((2, 1000), |(i, j)| (i as f64) + (j as f64) * 0.25),
            seizure_onsets: vec![1.0],
            artifact_intervals: vec![(0.5, 0.75)],
        }
    }

    #[test]
    fn recording_roundtrip() {
        let dir = tempdir().unwrap();
        let rec = small_rec();
        write_recording(dir.path(), &rec).unwrap();
        let back: Recording<f64> = read_recording(dir.path()).unwrap();
        assert_eq!(back.subject_id, "subj");
        assert_eq!(back.sampling_rate, 400.0);
        assert_eq!(back.channels, rec.channels);
        assert_eq!(back.seizure_onsets, rec.seizure_onsets);
        assert_eq!(back.n_samples(), 1000);
        for (a, b) in back.data.iter().zip(rec.data.iter()) {
            assert!((a - b).abs() < 1e-6); // f32 storage
        }
    }

    #[test]
    fn zero_onsets_is_valid() {
        let dir = tempdir().unwrap();
        let mut rec = small_rec();
        rec.seizure_onsets.clear();
        write_recording(dir.path(), &rec).unwrap();
        let back: Recording<f64> = read_recording(dir.path()).unwrap();
        assert!(back.seizure_onsets.is_empty());
    }

    #[test]
    fn truncated_data_is_channel_length_mismatch() {
        let dir = tempdir().unwrap();
        write_recording(dir.path(), &small_rec()).unwrap();
        let bin = dir.path().join("data.bin");
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 4]).unwrap();
        match read_recording::<f64>(dir.path()) {
            Err(DataError::ChannelLengthMismatch(_)) => {}
            other => panic!("expected ChannelLengthMismatch, got {other:?}"),
        }
    }

    #[test]
    fn unsorted_onsets_rejected() {
        let dir = tempdir().unwrap();
        let mut rec = small_rec();
        rec.seizure_onsets = vec![2.0, 1.0];
        write_recording(dir.path(), &rec).unwrap();
        assert!(matches!(
            read_recording::<f64>(dir.path()),
            Err(DataError::UnsortedOnsets)
        ));
    }

    #[test]
    fn artifact_channels_are_dropped_on_ingest() {
        let dir = tempdir().unwrap();
        write_recording(dir.path(), &small_rec()).unwrap();
        // Flag channel "a" after the fact.
        let meta_path = dir.path().join("meta.json");
        let mut meta: RecordingMeta =
            serde_json::from_slice(&fs::read(&meta_path).unwrap()).unwrap();
        meta.artifact_channels = vec!["a".into()];
        fs::write(&meta_path, serde_json::to_vec(&meta).unwrap()).unwrap();
        let back: Recording<f64> = read_recording(dir.path()).unwrap();
        assert_eq!(back.channels, vec!["b".to_string()]);
        assert_eq!(back.n_channels(), 1);
        assert!((back.data[[0, 4]] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let manifest = ClipManifest {
            entries: vec![
                ManifestEntry {
                    clip_id: 0,
                    subject_id: "s".into(),
                    start_s: 14400.0,
                    label: ClipLabel::Interictal,
                    split: Split::Train,
                    source_seizure: None,
                },
                ManifestEntry {
                    clip_id: 1,
                    subject_id: "s".into(),
                    start_s: 39300.0,
                    label: ClipLabel::Preictal,
                    split: Split::Test,
                    source_seizure: Some(43200.0),
                },
            ],
        };
        write_manifest(&path, &manifest).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back.entries.len(), 2);
        assert_eq!(back.entries[1].label, ClipLabel::Preictal);
        assert_eq!(back.entries[1].split, Split::Test);
        assert_eq!(back.entries[0].start_s, 14400.0);
    }
}
