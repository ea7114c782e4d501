//! Model files: a versioned self-describing binary.
//!
//! Layout: magic `PCNM`, format version (u32 LE), header length (u64 LE),
//! JSON header (specs, input shape, seed, train config, train log, counts),
//! then all parameters as little-endian f64 in layer order, then batch-norm
//! running means/vars in layer order.

use super::{LayerSpec, Network, NnetError, Shape, TrainConfig, TrainedModel};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"PCNM";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    scalar: String,
    specs: Vec<LayerSpec>,
    input_shape: Shape,
    seed: u64,
    train_cfg: TrainConfig,
    train_log: Vec<f64>,
    param_count: usize,
    running_count: usize,
}

pub fn save_model<T: Real>(path: &Path, model: &TrainedModel<T>) -> Result<(), NnetError> {
    let params = model.network.params_flat();
    let mut running = Vec::new();
    for layer in model.network.layers() {
        if let Some((mean, var)) = layer.running_stats() {
            running.extend_from_slice(mean);
            running.extend_from_slice(var);
        }
    }
    let header = Header {
        scalar: std::any::type_name::<T>().to_string(),
        specs: model.network.specs.clone(),
        input_shape: model.network.input_shape,
        seed: model.network.seed,
        train_cfg: model.cfg.clone(),
        train_log: model.train_log.clone(),
        param_count: params.len(),
        running_count: running.len(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for v in &params {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in &running {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_model<T: Real>(path: &Path) -> Result<TrainedModel<T>, NnetError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |msg: &str| NnetError::BadConfig(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[0..4] != MAGIC {
        return Err(bad("not a model file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported model version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(&bytes[16..16 + header_len])?;
    let mut off = 16 + header_len;
    let need = off + 8 * (header.param_count + header.running_count);
    if bytes.len() != need {
        return Err(bad(&format!("expected {need} bytes, found {}", bytes.len())));
    }
    let mut read_f64 = |n: usize| -> Vec<f64> {
        let out = bytes[off..off + 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        off += 8 * n;
        out
    };
    let params = read_f64(header.param_count);
    let running = read_f64(header.running_count);

    let mut network = Network::<T>::build(&header.specs, header.input_shape, header.seed)?;
    if network.param_count() != header.param_count {
        return Err(bad("parameter count mismatch against rebuilt stack"));
    }
    network.set_params_flat(&params);
    let mut cursor = 0;
    for layer in network.layers_mut() {
        if let Some((mean, var)) = layer.running_stats_mut() {
            let f = mean.len();
            mean.copy_from_slice(&running[cursor..cursor + f]);
            var.copy_from_slice(&running[cursor + f..cursor + 2 * f]);
            cursor += 2 * f;
        }
    }
    Ok(TrainedModel { network, cfg: header.train_cfg, train_log: header.train_log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{predict, train, Activation};
    use ndarray::Array2;

    #[test]
    fn model_roundtrip_preserves_predictions() {
        let specs = vec![
            LayerSpec::Dense { input: 3, output: 6 },
            LayerSpec::BatchNorm { features: 6 },
            LayerSpec::Activation(Activation::ReLU),
            LayerSpec::Dense { input: 6, output: 1 },
            LayerSpec::Activation(Activation::Sigmoid),
        ];
        let x = Array2::from_shape_fn((16, 3), |(i, j)| ((i * 3 + j) as f64 * 0.7).sin());
        let y: Vec<f64> = (0..16).map(|i| (i % 2) as f64).collect();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 8,
            seed: 3,
            ..TrainConfig::default()
        };
        let model = train::<f64>(&specs, Shape::Flat(3), &x, &y, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.pcnm");
        save_model(&path, &model).unwrap();
        let back: TrainedModel<f64> = load_model(&path).unwrap();
        assert_eq!(predict(&model, &x), predict(&back, &x));
        assert_eq!(back.train_log, model.train_log);
    }

    #[test]
    fn corrupt_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.pcnm");
        fs::write(&path, b"not a model").unwrap();
        assert!(load_model::<f64>(&path).is_err());
    }
}
