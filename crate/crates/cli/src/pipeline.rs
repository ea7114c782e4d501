//! Stage-oriented pipeline: synth/ingest -> label -> features -> train ->
//! evaluate -> coherence -> transfer -> report.
//!
//! Every stage writes its outputs under `out/stages/<name>/` next to a
//! fingerprint (sha256 over the stage-relevant config plus upstream
//! fingerprints). Re-running with an unchanged fingerprint loads from disk
//! instead of recomputing, so editing, say, only `[eval]` never retrains
//! models.

use crate::config::PipelineConfig;
use crate::dataset::{
    cache_labels, clip_meta_of, filter_cache, prepare, read_cache, segment_matrix,
    validation_split, write_cache, PreparedData,
};
use predcoh_core::data::{
    read_recording, write_recording, ClipLabel, DataError, ManifestEntry, Recording, Split,
};
use predcoh_core::eval::{
    clip_predict, coherence_report, transfer_curve, CoherenceReport, EvalError, MethodSummary,
    PredictionSeries, SegmentOutput, TransferCurve,
};
use predcoh_core::features::{
    extract_cache, write_feature_matrix, FeatureCache, FeatureError, FeatureStoreMeta,
};
use predcoh_core::method1::{
    feature_search, predict_ensemble, train_ensemble, write_chosen_combo, write_search_report,
    FeatureCombo, LabeledCache, Method1Error, MlpEnsemble, Standardizer, ValidationMode,
};
use predcoh_core::method2::{
    predict_cnn_ensemble, train_cnn_ensemble, write_segment_predictions, CnnEnsemble,
};
use predcoh_core::nnet::{load_model, save_model, NnetError};
use predcoh_core::synth::{generate, GroundTruth, SynthError};
use predcoh_core::{SEGMENTS_PER_CLIP, TARGET_RATE_HZ};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Pipeline scalar: bulk signal work runs in f32; the evaluation stack and
/// the small MLPs stay f64.
pub type F = f32;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Nnet(#[from] NnetError),
    #[error(transparent)]
    Method1(#[from] Method1Error),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("stage {stage} failed (outputs under {dir}): {source}")]
    Stage {
        stage: &'static str,
        dir: PathBuf,
        #[source]
        source: Box<PipelineError>,
    },
}

impl PipelineError {
    /// Process exit code: 1 usage/config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Data(_) | PipelineError::Synth(_) | PipelineError::Io(_)
            | PipelineError::Json(_) => 2,
            PipelineError::Feature(e) => match e {
                FeatureError::NonFinite { .. } => 3,
                _ => 2,
            },
            PipelineError::Nnet(e) => match e {
                NnetError::BadConfig(_) => 1,
                NnetError::Io(_) | NnetError::Json(_) => 2,
                _ => 3,
            },
            PipelineError::Method1(_) => 3,
            PipelineError::Eval(e) => match e {
                EvalError::MissingSegments(_) | EvalError::Misaligned(_) | EvalError::Io(_) => 2,
                _ => 3,
            },
            PipelineError::Stage { source, .. } => source.exit_code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Synth,
    Label,
    Features,
    Train,
    Evaluate,
    Coherence,
    Transfer,
    Report,
}

impl Stage {
    pub const ORDER: [Stage; 8] = [
        Stage::Synth,
        Stage::Label,
        Stage::Features,
        Stage::Train,
        Stage::Evaluate,
        Stage::Coherence,
        Stage::Transfer,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Label => "label",
            Stage::Features => "features",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Coherence => "coherence",
            Stage::Transfer => "transfer",
            Stage::Report => "report",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        match s {
            "synth" | "ingest" => Some(Stage::Synth),
            "label" => Some(Stage::Label),
            "features" => Some(Stage::Features),
            "train" => Some(Stage::Train),
            "evaluate" => Some(Stage::Evaluate),
            "coherence" => Some(Stage::Coherence),
            "transfer" => Some(Stage::Transfer),
            "report" => Some(Stage::Report),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestStats {
    pub train_preictal: usize,
    pub train_interictal: usize,
    pub test_preictal: usize,
    pub test_interictal: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Everything a finished run reports. Regenerating with the same config
/// reproduces all fields except `timing_s` byte-identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub input: String,
    pub seed: u64,
    pub manifest: ManifestStats,
    pub chosen_combo: FeatureCombo,
    pub search_skipped: Vec<String>,
    pub method1: MethodSummary,
    pub method2: MethodSummary,
    pub coherence: CoherenceReport,
    pub transfer: Vec<TransferCurve>,
    pub warnings: Vec<String>,
    pub cached_stages: Vec<String>,
    pub files: Vec<FileEntry>,
    pub timing_s: BTreeMap<String, f64>,
}

fn hex(digest: &[u8]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex(&h.finalize())
}

fn sha256_file(path: &Path) -> std::io::Result<String> {
    use std::io::Read;
    let mut h = Sha256::new();
    let mut f = fs::File::open(path)?;
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex(&h.finalize()))
}

fn fingerprint_of<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("fingerprint input serializes"))
}

pub struct Pipeline {
    cfg: PipelineConfig,
    config_text: String,
    out: PathBuf,
    fps: BTreeMap<&'static str, String>,
    timing: BTreeMap<String, f64>,
    cached: Vec<String>,
    warnings: Vec<String>,
    // Lazily materialized artifacts.
    recording: Option<Recording<F>>,
    prepared: Option<PreparedData<F>>,
    train_cache: Option<FeatureCache>,
    test_cache: Option<FeatureCache>,
    ranked: Option<Vec<FeatureCombo>>,
    search_skipped: Vec<String>,
    m1: Option<MlpEnsemble<f64>>,
    m2: Option<CnnEnsemble<F>>,
    series: Option<(PredictionSeries, PredictionSeries)>,
    coherence: Option<CoherenceReport>,
    transfer: Option<Vec<TransferCurve>>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, config_text: String) -> Self {
        let out = cfg.out_dir.clone();
        Pipeline {
            cfg,
            config_text,
            out,
            fps: BTreeMap::new(),
            timing: BTreeMap::new(),
            cached: Vec::new(),
            warnings: Vec::new(),
            recording: None,
            prepared: None,
            train_cache: None,
            test_cache: None,
            ranked: None,
            search_skipped: Vec::new(),
            m1: None,
            m2: None,
            series: None,
            coherence: None,
            transfer: None,
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    fn stage_dir(&self, name: &str) -> PathBuf {
        self.out.join("stages").join(name)
    }

    /// Check a stored fingerprint against the expected value; returns true
    /// on a cache hit (all `outputs` present too).
    fn cache_hit(&self, dir: &Path, fp_name: &str, fp: &str, outputs: &[&str]) -> bool {
        let stored = fs::read_to_string(dir.join(fp_name)).unwrap_or_default();
        stored == fp && outputs.iter().all(|o| dir.join(o).exists())
    }

    fn store_fp(&self, dir: &Path, fp_name: &str, fp: &str) -> Result<(), PipelineError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(fp_name), fp)?;
        Ok(())
    }

    /// Run all stages up to and including `upto`; returns the report when
    /// `upto` is Report.
    pub fn run(&mut self, upto: Stage) -> Result<Option<RunReport>, PipelineError> {
        fs::create_dir_all(&self.out)?;
        fs::write(self.out.join("config.toml"), &self.config_text)?;
        let mut report = None;
        for stage in Stage::ORDER {
            if stage > upto {
                break;
            }
            let t0 = Instant::now();
            let wrap = |e: PipelineError, name: &'static str, dir: PathBuf| PipelineError::Stage {
                stage: name,
                dir,
                source: Box::new(e),
            };
            let dir = self.stage_dir(stage.name());
            let result = match stage {
                Stage::Synth => self.stage_synth(),
                Stage::Label => self.stage_label(),
                Stage::Features => self.stage_features(),
                Stage::Train => self.stage_train(),
                Stage::Evaluate => self.stage_evaluate(),
                Stage::Coherence => self.stage_coherence(),
                Stage::Transfer => self.stage_transfer(),
                Stage::Report => {
                    let r = self.stage_report()?;
                    report = Some(r);
                    Ok(())
                }
            };
            result.map_err(|e| wrap(e, stage.name(), dir))?;
            self.timing
                .insert(stage.name().to_string(), t0.elapsed().as_secs_f64());
        }
        Ok(report)
    }

    // ----- synth / ingest ---------------------------------------------

    fn synth_fp(&self) -> Result<String, PipelineError> {
        if let Some(path) = &self.cfg.input.recording {
            // External recording: fingerprint its bytes.
            let meta = sha256_file(&path.join("meta.json"))?;
            let data = sha256_file(&path.join("data.bin"))?;
            Ok(sha256_hex(format!("ingest:{meta}:{data}").as_bytes()))
        } else {
            Ok(fingerprint_of(&("synth", self.cfg.synth_config())))
        }
    }

    fn stage_synth(&mut self) -> Result<(), PipelineError> {
        let dir = self.stage_dir("synth");
        let fp = self.synth_fp()?;
        self.fps.insert("synth", fp.clone());
        if self.cache_hit(&dir, ".fingerprint", &fp, &["recording/meta.json", "recording/data.bin"]) {
            self.cached.push("synth".into());
            return Ok(());
        }
        let rec_dir = dir.join("recording");
        if let Some(synth_cfg) = self.cfg.synth_config() {
            let (rec, truth): (Recording<F>, GroundTruth) = generate(&synth_cfg)?;
            write_recording(&rec_dir, &rec)?;
            fs::write(dir.join("ground_truth.json"), serde_json::to_vec_pretty(&truth)?)?;
            self.recording = Some(rec);
        } else {
            // Ingest: validate, resample to the canonical rate, store.
            let src = self.cfg.input.recording.clone().expect("validated config");
            let raw: Recording<F> = read_recording(&src)?;
            let rec = if (raw.sampling_rate - TARGET_RATE_HZ).abs() > 1e-9 {
                predcoh_core::data::resample(&raw, TARGET_RATE_HZ)?
            } else {
                raw
            };
            write_recording(&rec_dir, &rec)?;
            self.recording = Some(rec);
        }
        self.store_fp(&dir, ".fingerprint", &fp)?;
        Ok(())
    }

    fn ensure_recording(&mut self) -> Result<&Recording<F>, PipelineError> {
        if self.recording.is_none() {
            let rec_dir = self.stage_dir("synth").join("recording");
            self.recording = Some(read_recording(&rec_dir)?);
        }
        Ok(self.recording.as_ref().unwrap())
    }

    // ----- label --------------------------------------------------------

    fn label_fp(&self) -> String {
        fingerprint_of(&(
            "label",
            &self.fps["synth"],
            self.cfg.label_policy(),
        ))
    }

    fn stage_label(&mut self) -> Result<(), PipelineError> {
        let dir = self.stage_dir("label");
        let fp = self.label_fp();
        self.fps.insert("label", fp.clone());
        if self.cache_hit(&dir, ".fingerprint", &fp, &["manifest.csv"]) {
            self.cached.push("label".into());
            return Ok(());
        }
        fs::create_dir_all(&dir)?;
        self.ensure_prepared()?;
        let prepared = self.prepared.as_ref().unwrap();
        predcoh_core::data::write_manifest(&dir.join("manifest.csv"), &prepared.manifest)?;
        self.store_fp(&dir, ".fingerprint", &fp)?;
        Ok(())
    }

    fn ensure_prepared(&mut self) -> Result<&PreparedData<F>, PipelineError> {
        if self.prepared.is_none() {
            let policy = self.cfg.label_policy();
            self.ensure_recording()?;
            let rec = self.recording.as_ref().unwrap();
            let prepared = prepare(rec, &policy)?;
            for (clip, ch) in &prepared.flat_channels {
                self.warnings
                    .push(format!("clip {clip}: zero-variance channel {ch} zeroed"));
            }
            // The recording is no longer needed once clips exist.
            self.prepared = Some(prepared);
            self.recording = None;
        }
        Ok(self.prepared.as_ref().unwrap())
    }

    // ----- features -----------------------------------------------------

    fn features_fp(&self) -> String {
        fingerprint_of(&("features", &self.fps["label"], &self.cfg.features))
    }

    fn stage_features(&mut self) -> Result<(), PipelineError> {
        let dir = self.stage_dir("features");
        let fp = self.features_fp();
        self.fps.insert("features", fp.clone());
        if self.cache_hit(
            &dir,
            ".fingerprint",
            &fp,
            &["train.bin", "train.json", "test.bin", "test.json"],
        ) {
            self.cached.push("features".into());
            return Ok(());
        }
        self.ensure_prepared()?;
        let prepared = self.prepared.as_ref().unwrap();
        let fcfg = &self.cfg.features;
        let train = extract_cache(
            &prepared.train.segments,
            &fcfg.uni_kinds,
            &fcfg.bi_kinds,
            &fcfg.core,
            TARGET_RATE_HZ,
        )?;
        let test = extract_cache(
            &prepared.test.segments,
            &fcfg.uni_kinds,
            &fcfg.bi_kinds,
            &fcfg.core,
            TARGET_RATE_HZ,
        )?;
        write_cache(&dir, "train", &train)?;
        write_cache(&dir, "test", &test)?;
        self.train_cache = Some(train);
        self.test_cache = Some(test);
        self.store_fp(&dir, ".fingerprint", &fp)?;
        Ok(())
    }

    fn ensure_caches(&mut self) -> Result<(), PipelineError> {
        if self.train_cache.is_none() {
            let dir = self.stage_dir("features");
            self.train_cache = Some(read_cache(&dir, "train")?);
            self.test_cache = Some(read_cache(&dir, "test")?);
        }
        Ok(())
    }

    // ----- train --------------------------------------------------------

    fn m1_fp(&self) -> String {
        fingerprint_of(&("train_m1", &self.fps["features"], &self.cfg.method1, self.cfg.seed))
    }

    fn m2_fp(&self) -> String {
        fingerprint_of(&("train_m2", &self.fps["label"], &self.cfg.method2, self.cfg.seed))
    }

    fn stage_train(&mut self) -> Result<(), PipelineError> {
        let dir = self.stage_dir("train");
        let (fp1, fp2) = (self.m1_fp(), self.m2_fp());
        self.fps.insert("train_m1", fp1.clone());
        self.fps.insert("train_m2", fp2.clone());

        let m1_outputs = ["chosen_combo.json", "search_report.csv", "m1_standardizer.json"];
        if self.cache_hit(&dir, ".fingerprint_m1", &fp1, &m1_outputs) {
            self.cached.push("train_m1".into());
        } else {
            self.train_method1(&dir)?;
            self.store_fp(&dir, ".fingerprint_m1", &fp1)?;
        }

        if self.cache_hit(&dir, ".fingerprint_m2", &fp2, &["m2_models"]) {
            self.cached.push("train_m2".into());
        } else {
            self.train_method2(&dir)?;
            self.store_fp(&dir, ".fingerprint_m2", &fp2)?;
        }
        Ok(())
    }

    fn train_method1(&mut self, dir: &Path) -> Result<(), PipelineError> {
        fs::create_dir_all(dir)?;
        self.ensure_prepared()?;
        self.ensure_caches()?;
        let prepared = self.prepared.as_ref().unwrap();
        let train_cache = self.train_cache.as_ref().unwrap();
        let test_cache = self.test_cache.as_ref().unwrap();
        let spec = &self.cfg.method1;
        let catalog = self.cfg.catalog();

        let train_entries: Vec<&ManifestEntry> =
            prepared.manifest.split_entries(Split::Train).collect();
        let train_labels = cache_labels(train_cache, &prepared.train.clip_meta);

        let (ranked, skipped) = match spec.validation {
            ValidationMode::Chronological { fraction } => {
                let (fit_ids, val_ids, fallback) = validation_split(&train_entries, fraction);
                if fallback {
                    self.warnings.push(
                        "validation tail was single-class; class-wise chronological split used"
                            .into(),
                    );
                }
                // Leakage guard: the search sees training-half clips only.
                let test_ids: Vec<u32> =
                    prepared.test.clip_meta.iter().map(|m| m.0).collect();
                assert!(
                    fit_ids.iter().chain(&val_ids).all(|id| !test_ids.contains(id)),
                    "validation split leaked test clips"
                );
                let fit_cache = filter_cache(train_cache, &fit_ids);
                let val_cache = filter_cache(train_cache, &val_ids);
                let fit_labels = cache_labels(&fit_cache, &prepared.train.clip_meta);
                let val_labels = cache_labels(&val_cache, &prepared.train.clip_meta);
                feature_search::<f64>(
                    &LabeledCache { cache: &fit_cache, labels: &fit_labels },
                    &LabeledCache { cache: &val_cache, labels: &val_labels },
                    spec,
                    &catalog,
                    self.cfg.seed,
                )?
            }
            ValidationMode::TestAsValidation => {
                self.warnings.push(
                    "validation = test: feature selection sees test labels (short-recording protocol)"
                        .into(),
                );
                let test_labels = cache_labels(test_cache, &prepared.test.clip_meta);
                feature_search::<f64>(
                    &LabeledCache { cache: train_cache, labels: &train_labels },
                    &LabeledCache { cache: test_cache, labels: &test_labels },
                    spec,
                    &catalog,
                    self.cfg.seed,
                )?
            }
        };

        write_search_report(&dir.join("search_report.csv"), &ranked)?;
        let winner = ranked[0].clone();
        write_chosen_combo(&dir.join("chosen_combo.json"), &winner)?;
        if !skipped.is_empty() {
            fs::write(dir.join("search_skipped.txt"), skipped.join("\n"))?;
        }

        // Final ensemble on the full training half with the winning combo.
        let (descriptor, train_x) =
            train_cache.assemble_matrix(winner.uni, winner.bi, winner.variant);
        let ens = train_ensemble::<f64>(
            &train_x,
            &train_labels,
            spec,
            spec.ensemble_size,
            self.cfg.seed ^ 0x6d31,
        )?;
        fs::write(
            dir.join("m1_standardizer.json"),
            serde_json::to_vec_pretty(&ens.standardizer)?,
        )?;
        let models_dir = dir.join("m1_models");
        fs::create_dir_all(&models_dir)?;
        for (i, m) in ens.models.iter().enumerate() {
            save_model(&models_dir.join(format!("member_{i:03}.pcnm")), m)?;
        }

        // Winner feature matrices into the feature store.
        let store_dir = self.stage_dir("features").join("store");
        let subject = &prepared.manifest.entries[0].subject_id;
        for (split, cache) in [("train", train_cache), ("test", test_cache)] {
            let (d, m) = cache.assemble_matrix(winner.uni, winner.bi, winner.variant);
            let meta = FeatureStoreMeta {
                subject_id: subject.clone(),
                split: split.into(),
                descriptor: d,
                n_segments: m.nrows(),
                dim: m.ncols(),
                clip_ids: cache.clip_ids.clone(),
                segment_indices: cache.segment_indices.clone(),
            };
            write_feature_matrix(&store_dir, &meta, &m)?;
        }
        let _ = descriptor;

        self.ranked = Some(ranked);
        self.search_skipped = skipped;
        self.m1 = Some(ens);
        Ok(())
    }

    fn train_method2(&mut self, dir: &Path) -> Result<(), PipelineError> {
        fs::create_dir_all(dir)?;
        self.ensure_prepared()?;
        let prepared = self.prepared.as_ref().unwrap();
        let k = prepared.train.segments[0].data.nrows();
        let (x, labels, _, _) =
            segment_matrix(&prepared.train, self.cfg.method2.train_segment_stride);
        let ens = train_cnn_ensemble::<F>(
            &x,
            &labels,
            k,
            &self.cfg.method2.spec,
            self.cfg.seed ^ 0x6d32,
        )?;
        let models_dir = dir.join("m2_models");
        fs::create_dir_all(&models_dir)?;
        for (i, m) in ens.models.iter().enumerate() {
            save_model(&models_dir.join(format!("member_{i:03}.pcnm")), m)?;
        }
        self.m2 = Some(ens);
        Ok(())
    }

    fn ensure_m1(&mut self) -> Result<(), PipelineError> {
        if self.m1.is_some() {
            return Ok(());
        }
        let dir = self.stage_dir("train");
        let winner: FeatureCombo =
            serde_json::from_slice(&fs::read(dir.join("chosen_combo.json"))?)?;
        let standardizer: Standardizer =
            serde_json::from_slice(&fs::read(dir.join("m1_standardizer.json"))?)?;
        let models_dir = dir.join("m1_models");
        let mut models = Vec::new();
        for i in 0..self.cfg.method1.ensemble_size {
            models.push(load_model(&models_dir.join(format!("member_{i:03}.pcnm")))?);
        }
        let input_dim = models[0].network.input_shape.size();
        self.ranked = Some(vec![winner]);
        self.m1 = Some(MlpEnsemble { models, standardizer, input_dim });
        Ok(())
    }

    fn ensure_m2(&mut self) -> Result<(), PipelineError> {
        if self.m2.is_some() {
            return Ok(());
        }
        let models_dir = self.stage_dir("train").join("m2_models");
        let mut models = Vec::new();
        for i in 0..self.cfg.method2.spec.ensemble_size {
            models.push(load_model(&models_dir.join(format!("member_{i:03}.pcnm")))?);
        }
        self.ensure_prepared()?;
        let k = self.prepared.as_ref().unwrap().train.segments[0].data.nrows();
        self.m2 = Some(CnnEnsemble { models, spec: self.cfg.method2.spec.clone(), n_channels: k });
        Ok(())
    }

    fn winner(&self) -> &FeatureCombo {
        &self.ranked.as_ref().expect("method 1 trained")[0]
    }

    // ----- evaluate -----------------------------------------------------

    fn evaluate_fp(&self) -> String {
        fingerprint_of(&("evaluate", &self.fps["train_m1"], &self.fps["train_m2"]))
    }

    fn stage_evaluate(&mut self) -> Result<(), PipelineError> {
        let dir = self.stage_dir("evaluate");
        let fp = self.evaluate_fp();
        self.fps.insert("evaluate", fp.clone());
        let outputs = [
            "series_method1.json",
            "series_method2.json",
            "predictions_method1.csv",
            "predictions_method2.csv",
        ];
        if self.cache_hit(&dir, ".fingerprint", &fp, &outputs) {
            self.cached.push("evaluate".into());
            return Ok(());
        }
        fs::create_dir_all(&dir)?;
        self.ensure_prepared()?;
        self.ensure_caches()?;
        self.ensure_m1()?;
        self.ensure_m2()?;
        let prepared = self.prepared.as_ref().unwrap();
        let test_meta = clip_meta_of(&prepared.manifest, Split::Test);

        // Method 1 on the winner's feature vectors.
        let winner = self.winner().clone();
        let test_cache = self.test_cache.as_ref().unwrap();
        let (_, test_x) = test_cache.assemble_matrix(winner.uni, winner.bi, winner.variant);
        let per_model_1 = predict_ensemble(self.m1.as_ref().unwrap(), &test_x);
        write_segment_predictions(
            &dir.join("predictions_method1.csv"),
            &test_cache.clip_ids,
            &test_cache.segment_indices,
            &per_model_1,
        )?;
        let outputs_1: Vec<SegmentOutput> = (0..test_cache.clip_ids.len())
            .map(|s| SegmentOutput {
                clip_id: test_cache.clip_ids[s],
                segment_index: test_cache.segment_indices[s],
                per_model: per_model_1.iter().map(|m| m[s]).collect(),
            })
            .collect();
        let series1 = clip_predict("method1", &outputs_1, &test_meta, SEGMENTS_PER_CLIP)?;

        // Method 2 on raw segments (all 40 per clip).
        let (x2, _, clip_ids_2, seg_idx_2) = segment_matrix(&prepared.test, 1);
        let per_model_2 = predict_cnn_ensemble(self.m2.as_ref().unwrap(), &x2);
        write_segment_predictions(
            &dir.join("predictions_method2.csv"),
            &clip_ids_2,
            &seg_idx_2,
            &per_model_2,
        )?;
        let outputs_2: Vec<SegmentOutput> = (0..clip_ids_2.len())
            .map(|s| SegmentOutput {
                clip_id: clip_ids_2[s],
                segment_index: seg_idx_2[s],
                per_model: per_model_2.iter().map(|m| m[s]).collect(),
            })
            .collect();
        let series2 = clip_predict("method2", &outputs_2, &test_meta, SEGMENTS_PER_CLIP)?;

        fs::write(dir.join("series_method1.json"), serde_json::to_vec_pretty(&series1)?)?;
        fs::write(dir.join("series_method2.json"), serde_json::to_vec_pretty(&series2)?)?;
        self.series = Some((series1, series2));
        self.store_fp(&dir, ".fingerprint", &fp)?;
        Ok(())
    }

    fn ensure_series(&mut self) -> Result<&(PredictionSeries, PredictionSeries), PipelineError> {
        if self.series.is_none() {
            let dir = self.stage_dir("evaluate");
            let s1: PredictionSeries =
                serde_json::from_slice(&fs::read(dir.join("series_method1.json"))?)?;
            let s2: PredictionSeries =
                serde_json::from_slice(&fs::read(dir.join("series_method2.json"))?)?;
            self.series = Some((s1, s2));
        }
        Ok(self.series.as_ref().unwrap())
    }

    // ----- coherence ------------------------------------------------------

    fn stage_coherence(&mut self) -> Result<(), PipelineError> {
        let dir = self.stage_dir("coherence");
        let fp = fingerprint_of(&(
            "coherence",
            &self.fps["evaluate"],
            self.cfg.eval.permutations,
            self.cfg.seed,
        ));
        self.fps.insert("coherence", fp.clone());
        if self.cache_hit(&dir, ".fingerprint", &fp, &["coherence.json"]) {
            self.cached.push("coherence".into());
            let report: CoherenceReport =
                serde_json::from_slice(&fs::read(dir.join("coherence.json"))?)?;
            self.coherence = Some(report);
            return Ok(());
        }
        fs::create_dir_all(&dir)?;
        let m = self.cfg.eval.permutations;
        let seed = self.cfg.seed;
        let (s1, s2) = self.ensure_series()?;
        let report = coherence_report(s1, s2, m, seed)?;
        fs::write(dir.join("coherence.json"), serde_json::to_vec_pretty(&report)?)?;
        let csv = format!(
            "metric,value\nmethod1_auc,{}\nmethod1_hanley_p,{}\nmethod2_auc,{}\nmethod2_hanley_p,{}\nc,{}\nc_w,{}\np_c,{}\np_cw,{}\npermutations,{}\npairings,{}\n",
            report.method1.auc,
            report.method1.hanley_p,
            report.method2.auc,
            report.method2.hanley_p,
            report.c,
            report.c_w,
            report.permutation.p_c,
            report.permutation.p_cw,
            report.permutation.m,
            report.permutation.n_pairings,
        );
        fs::write(dir.join("coherence.csv"), csv)?;
        self.coherence = Some(report);
        self.store_fp(&dir, ".fingerprint", &fp)?;
        Ok(())
    }

    // ----- transfer -------------------------------------------------------

    fn stage_transfer(&mut self) -> Result<(), PipelineError> {
        let dir = self.stage_dir("transfer");
        let fp = fingerprint_of(&(
            "transfer",
            &self.fps["evaluate"],
            &self.cfg.eval.threshold_grid,
            self.cfg.seed,
        ));
        self.fps.insert("transfer", fp.clone());
        if self.cache_hit(&dir, ".fingerprint", &fp, &["transfer.json"]) {
            self.cached.push("transfer".into());
            let curves: Vec<TransferCurve> =
                serde_json::from_slice(&fs::read(dir.join("transfer.json"))?)?;
            self.transfer = Some(curves);
            return Ok(());
        }
        fs::create_dir_all(&dir)?;
        let grid = self.cfg.eval.threshold_grid.clone();
        let seed = self.cfg.seed;
        let (s1, s2) = self.ensure_series()?.clone();
        let curves = vec![
            transfer_curve(&s1, &s2, &grid, seed)?,
            transfer_curve(&s2, &s1, &grid, seed ^ 1)?,
        ];
        fs::write(dir.join("transfer.json"), serde_json::to_vec_pretty(&curves)?)?;
        predcoh_core::eval::write_transfer_csv(&dir.join("transfer_curves.csv"), &curves)?;
        self.transfer = Some(curves);
        self.store_fp(&dir, ".fingerprint", &fp)?;
        Ok(())
    }

    // ----- report ---------------------------------------------------------

    fn stage_report(&mut self) -> Result<RunReport, PipelineError> {
        self.ensure_prepared()?;
        self.ensure_m1()?;
        let prepared = self.prepared.as_ref().unwrap();
        let manifest = ManifestStats {
            train_preictal: prepared.manifest.count(Split::Train, ClipLabel::Preictal),
            train_interictal: prepared.manifest.count(Split::Train, ClipLabel::Interictal),
            test_preictal: prepared.manifest.count(Split::Test, ClipLabel::Preictal),
            test_interictal: prepared.manifest.count(Split::Test, ClipLabel::Interictal),
        };

        // Plot data.
        let plots = self.out.join("plots");
        fs::create_dir_all(&plots)?;
        let onsets = prepared.seizure_onsets.clone();
        let (s1, s2) = self.ensure_series()?.clone();
        predcoh_core::eval::write_prediction_over_time(
            &plots.join("prediction_over_time.csv"),
            &s1,
            &s2,
        )?;
        let mut onset_csv = String::from("time_s\n");
        for o in &onsets {
            onset_csv.push_str(&format!("{o}\n"));
        }
        fs::write(plots.join("onsets.csv"), onset_csv)?;
        let curves = self.transfer.clone().expect("transfer stage ran");
        predcoh_core::eval::write_transfer_csv(&plots.join("transfer_curves.csv"), &curves)?;

        // File inventory (everything except the report itself).
        let mut files = Vec::new();
        collect_files(&self.out, &self.out, &mut files)?;
        files.retain(|f| f.path != "report.json");
        files.sort_by(|a, b| a.path.cmp(&b.path));

        let input = if let Some(s) = &self.cfg.input.scenario {
            format!("scenario:{s}")
        } else if let Some(p) = &self.cfg.input.recording {
            format!("recording:{}", p.display())
        } else {
            "synth:custom".into()
        };

        let report = RunReport {
            input,
            seed: self.cfg.seed,
            manifest,
            chosen_combo: self.winner().clone(),
            search_skipped: self.search_skipped.clone(),
            method1: self.coherence.as_ref().unwrap().method1.clone(),
            method2: self.coherence.as_ref().unwrap().method2.clone(),
            coherence: self.coherence.clone().unwrap(),
            transfer: curves,
            warnings: self.warnings.clone(),
            cached_stages: self.cached.clone(),
            files,
            timing_s: self.timing.clone(),
        };
        fs::write(self.out.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
        Ok(report)
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<FileEntry>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
            out.push(FileEntry {
                path: rel,
                bytes: entry.metadata()?.len(),
                sha256: sha256_file(&path)?,
            });
        }
    }
    Ok(())
}

/// Strip the volatile parts of a report for determinism comparisons.
pub fn report_comparable(report: &RunReport) -> serde_json::Value {
    let mut v = serde_json::to_value(report).expect("report serializes");
    let obj = v.as_object_mut().unwrap();
    obj.remove("timing_s");
    v
}
