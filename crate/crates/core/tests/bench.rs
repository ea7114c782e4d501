//! Rough timing probes for the heavy kernels (run explicitly with
//! `cargo test -p predcoh-core --test bench -- --ignored --nocapture`).

use ndarray::Array2;
use predcoh_core::features::{extract_cache, BiFeatureKind, FeatureConfig, UniFeatureKind};
use predcoh_core::method2::{build_cnn, Method2Spec};
use predcoh_core::nnet::{train, Shape, TrainConfig};
use predcoh_core::rng::{fill_gaussian, stream};
use predcoh_core::data::Segment;
use predcoh_core::SEGMENT_SAMPLES;
use std::time::Instant;

fn noise_matrix(seed: u64, rows: usize, cols: usize) -> Array2<f32> {
    let mut rng = stream(seed, "bench", 0);
    let mut buf = vec![0.0f64; rows * cols];
    fill_gaussian(&mut rng, &mut buf);
    Array2::from_shape_fn((rows, cols), |(i, j)| buf[i * cols + j] as f32)
}

#[test]
#[ignore]
fn bench_cnn_epoch() {
    let k = 4;
    let n = 64;
    let x = noise_matrix(1, n, k * SEGMENT_SAMPLES);
    let labels: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    let spec = Method2Spec::default();
    let stack = build_cnn(k, &spec).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        epochs: 2,
        batch_size: 16,
        seed: 1,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let _ = train::<f32>(&stack, Shape::Map { maps: k, len: SEGMENT_SAMPLES }, &x, &labels, &cfg)
        .unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "cnn k={k}: {n} segments x 2 epochs in {dt:.2} s -> {:.1} ms/segment-epoch (train)",
        dt * 1000.0 / (2.0 * n as f64)
    );

    let mut infer_cfg = cfg.clone();
    infer_cfg.epochs = 1;
    let model =
        train::<f32>(&stack, Shape::Map { maps: k, len: SEGMENT_SAMPLES }, &x, &labels, &infer_cfg)
            .unwrap();
    let t1 = Instant::now();
    let _p = predcoh_core::nnet::predict(&model, &x);
    let dt1 = t1.elapsed().as_secs_f64();
    println!("cnn k={k}: inference {:.2} ms/segment", dt1 * 1000.0 / n as f64);
}

#[test]
#[ignore]
fn bench_feature_extraction() {
    let k = 4;
    let n_segs = 16;
    let segments: Vec<Segment<f32>> = (0..n_segs)
        .map(|i| Segment {
            clip_id: i as u32,
            segment_index: 0,
            data: noise_matrix(100 + i as u64, k, SEGMENT_SAMPLES),
        })
        .collect();
    let cfg = FeatureConfig::default();
    let t0 = Instant::now();
    let _ = extract_cache(&segments, &UniFeatureKind::ALL, &BiFeatureKind::ALL, &cfg, 200.0)
        .unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "features k={k}: {n_segs} segments (all kinds) in {dt:.2} s -> {:.1} ms/segment",
        dt * 1000.0 / n_segs as f64
    );
}
