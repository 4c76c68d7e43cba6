//! End-to-end orchestration: staged execution from sequence documents to a
//! trained classifier and evaluation report, with every stage materialized
//! to disk, plus ablation toggles, model-bundle persistence, and seeded
//! determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{
    argmax, average_precision, train_classifier, ClassifierConfig, ClassifierModelDoc,
};
use crate::dec_cluster::{
    dec_fit, kmeans, select_key_poses, ClusterModel, ClusterModelDoc, DecConfig,
};
use crate::grid_builder::{build_grid, extract_tile, ActionGrid, GridLayout, Tile, TileSource};
use crate::motion_actor::{select_key_actor, track_motion_score, TrackScore};
use crate::pose_data::{load_frames, parse_pose_tracks, GrayImage, SequenceRecord};
use crate::pose_encoding::{encode_pose, encode_pose_cartesian, PoseVector, POSE_VECTOR_DIM};
use crate::pose_filter::{train_autoencoder, FilterConfig, FilterModelDoc};
use crate::synth_gen::{Manifest, ManifestEntry, Split};

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("data error in {stage}{}: {message}", sequence.as_ref().map(|s| format!(" [{s}]")).unwrap_or_default())]
    Data {
        stage: &'static str,
        sequence: Option<String>,
        message: String,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Data { .. } => 1,
            PipelineError::Config(_) => 2,
            PipelineError::Internal(_) => 3,
        }
    }

    fn data(stage: &'static str, sequence: Option<&str>, message: impl ToString) -> Self {
        PipelineError::Data {
            stage,
            sequence: sequence.map(|s| s.to_string()),
            message: message.to_string(),
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSettings {
    /// Threshold multiplier in `tau = mean + k * std`.
    pub k: f64,
    pub epochs: u32,
    pub lr: f64,
    pub batch: usize,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            k: 2.0,
            epochs: 150,
            lr: 1e-3,
            batch: 32,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSettings {
    pub k: usize,
    pub epochs: u32,
    pub update_interval: u32,
}

impl Default for ClusterSettings {
    fn default() -> Self {
        Self {
            k: 8,
            epochs: 80,
            update_interval: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSettings {
    pub tile_size: u32,
    pub rows: u32,
    pub cols: u32,
    pub border: u32,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            tile_size: 112,
            rows: 2,
            cols: 4,
            border: 3,
        }
    }
}

impl GridSettings {
    pub fn layout(&self) -> GridLayout {
        GridLayout {
            rows: self.rows,
            cols: self.cols,
            tile_size: self.tile_size,
            border: self.border,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierSettings {
    pub epochs: u32,
    pub lr: f64,
    pub batch: usize,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        Self {
            epochs: 150,
            lr: 1e-3,
            batch: 32,
        }
    }
}

/// Independent ablation switches; defaults are the full pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationToggles {
    /// Classify every tracked person and majority-vote, instead of the
    /// single key actor.
    pub all_actors: bool,
    /// Pick frames uniformly at random instead of by key-pose clustering.
    pub random_frames: bool,
    /// Encode poses as normalized Cartesian offsets instead of polar.
    pub cartesian: bool,
    /// Apply the reconstruction-error pose filter.
    pub filtering: bool,
}

impl Default for AblationToggles {
    fn default() -> Self {
        Self {
            all_actors: false,
            random_frames: false,
            cartesian: false,
            filtering: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub model_store: PathBuf,
    pub output_dir: PathBuf,
    pub score_threshold: f64,
    pub filter: FilterSettings,
    pub cluster: ClusterSettings,
    pub grid: GridSettings,
    pub classifier: ClassifierSettings,
    pub seed: u64,
    pub ablation: AblationToggles,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("manifest.json"),
            model_store: PathBuf::from("bundle.json"),
            output_dir: PathBuf::from("out"),
            score_threshold: 0.5,
            filter: FilterSettings::default(),
            cluster: ClusterSettings::default(),
            grid: GridSettings::default(),
            classifier: ClassifierSettings::default(),
            seed: 0,
            ablation: AblationToggles::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(PipelineError::Config(
                "score_threshold outside [0,1]".into(),
            ));
        }
        if self.cluster.k == 0 {
            return Err(PipelineError::Config("cluster.k must be positive".into()));
        }
        if self.cluster.k > self.grid.layout().capacity() {
            return Err(PipelineError::Config(format!(
                "cluster.k = {} exceeds grid capacity {}",
                self.cluster.k,
                self.grid.layout().capacity()
            )));
        }
        if self.grid.tile_size == 0 || self.grid.rows == 0 || self.grid.cols == 0 {
            return Err(PipelineError::Config("grid dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// FNV-1a over the sequence id, mixed with the run seed and track id, so
/// per-unit randomness is independent of processing order.
pub fn derived_seed(seed: u64, sequence_id: &str, track_id: u32) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in sequence_id.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ seed ^ ((track_id as u64) << 32)
}

// ---------------------------------------------------------------------------
// Stage artifacts
// ---------------------------------------------------------------------------

/// `identify-actor` output document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActorReport {
    pub sequence_id: String,
    pub key_actor_id: u32,
    pub scores: Vec<ScoreEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub track_id: u32,
    pub score: f64,
}

/// Identify the key actor of one record: score every track that survives
/// the detection-score threshold, then take the argmax.
pub fn identify_actor(
    record: &SequenceRecord,
    score_threshold: f64,
) -> Result<ActorReport, PipelineError> {
    let mut scores: Vec<TrackScore> = Vec::new();
    for track in &record.tracks {
        match track_motion_score(track, score_threshold) {
            Ok(s) => scores.push(s),
            Err(_) => continue, // tracks with no retained detections drop out
        }
    }
    let key = select_key_actor(&scores).map_err(|e| {
        PipelineError::data("identify-actor", Some(&record.sequence_id), e)
    })?;
    Ok(ActorReport {
        sequence_id: record.sequence_id.clone(),
        key_actor_id: key,
        scores: scores
            .iter()
            .map(|s| ScoreEntry {
                track_id: s.track_id,
                score: s.score,
            })
            .collect(),
    })
}

/// One encoded pose row of the vector table.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorRow {
    pub track_id: u32,
    pub frame: u32,
    pub vector: PoseVector,
}

/// Encode every pose of the given tracks, in (track, frame) order.
pub fn encode_record(
    record: &SequenceRecord,
    track_ids: &[u32],
    cartesian: bool,
) -> Vec<VectorRow> {
    let mut rows = Vec::new();
    for &track_id in track_ids {
        for pose in record.track_poses(track_id) {
            let vector = if cartesian {
                encode_pose_cartesian(pose)
            } else {
                encode_pose(pose)
            };
            rows.push(VectorRow {
                track_id,
                frame: pose.frame_index,
                vector,
            });
        }
    }
    rows
}

/// Write a vector table as CSV: `track_id,frame,v00..v33`.
pub fn write_vector_table(path: &Path, rows: &[VectorRow]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| PipelineError::Internal(format!("{}: {e}", path.display())))?;
    let mut header = vec!["track_id".to_string(), "frame".to_string()];
    header.extend((0..POSE_VECTOR_DIM).map(|i| format!("v{i:02}")));
    w.write_record(&header)
        .map_err(|e| PipelineError::Internal(e.to_string()))?;
    for row in rows {
        let mut rec = vec![row.track_id.to_string(), row.frame.to_string()];
        rec.extend(row.vector.as_slice().iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)
            .map_err(|e| PipelineError::Internal(e.to_string()))?;
    }
    w.flush()
        .map_err(|e| PipelineError::Internal(e.to_string()))?;
    Ok(())
}

pub fn read_vector_table(path: &Path) -> Result<Vec<VectorRow>, PipelineError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| PipelineError::data("read-vectors", None, format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| PipelineError::data("read-vectors", None, e))?;
        if record.len() != 2 + POSE_VECTOR_DIM {
            return Err(PipelineError::data(
                "read-vectors",
                None,
                format!("expected {} columns, got {}", 2 + POSE_VECTOR_DIM, record.len()),
            ));
        }
        let parse_err = |e: std::num::ParseIntError| PipelineError::data("read-vectors", None, e);
        let track_id: u32 = record[0].parse().map_err(parse_err)?;
        let frame: u32 = record[1].parse().map_err(parse_err)?;
        let mut values = [0.0f64; POSE_VECTOR_DIM];
        for (i, v) in values.iter_mut().enumerate() {
            *v = record[2 + i]
                .parse()
                .map_err(|e| PipelineError::data("read-vectors", None, e))?;
        }
        rows.push(VectorRow {
            track_id,
            frame,
            vector: PoseVector(values),
        });
    }
    Ok(rows)
}

pub fn rows_to_matrix(rows: &[VectorRow]) -> Array2<f64> {
    let mut m = Array2::zeros((rows.len(), POSE_VECTOR_DIM));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.vector.as_slice().iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    m
}

// ---------------------------------------------------------------------------
// Model bundle
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("bundle version {found}, expected {expected}")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("corrupt bundle: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything needed to run inference on new sequences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelBundle {
    pub version: u32,
    pub filter: FilterModelDoc,
    pub cluster: ClusterModelDoc,
    pub classifier: ClassifierModelDoc,
    pub config: PipelineConfig,
}

pub fn save_bundle(path: &Path, bundle: &ModelBundle) -> Result<(), BundleError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let text = serde_json::to_string(bundle).map_err(|e| BundleError::Corrupt(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle, BundleError> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| BundleError::Corrupt(e.to_string()))?;
    let found = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| BundleError::Corrupt("missing version field".into()))?;
    if found != BUNDLE_VERSION as u64 {
        return Err(BundleError::VersionMismatch {
            found,
            expected: BUNDLE_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| BundleError::Corrupt(e.to_string()))
}

// ---------------------------------------------------------------------------
// Run report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequencePrediction {
    pub sequence_id: String,
    pub label: u32,
    pub predicted: u32,
    pub distribution: Vec<f64>,
    pub key_actor_id: u32,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub identify_ms: f64,
    pub encode_ms: f64,
    pub filter_ms: f64,
    pub cluster_ms: f64,
    pub grid_ms: f64,
    pub train_ms: f64,
    pub predict_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: PipelineConfig,
    pub classes: Vec<String>,
    /// Test-split sequence-level predictions.
    pub predictions: Vec<SequencePrediction>,
    pub per_class_precision: Vec<f64>,
    pub mean_precision: f64,
    pub test_accuracy: f64,
    pub timings: StageTimings,
}

impl RunReport {
    /// Recompute the metrics from the stored predictions.
    pub fn recompute_metrics(&self) -> (Vec<f64>, f64, f64) {
        let predicted: Vec<usize> = self.predictions.iter().map(|p| p.predicted as usize).collect();
        let labels: Vec<usize> = self.predictions.iter().map(|p| p.label as usize).collect();
        let (per_class, mean) = average_precision(&predicted, &labels, self.classes.len());
        let correct = predicted
            .iter()
            .zip(labels.iter())
            .filter(|(a, b)| a == b)
            .count();
        let accuracy = correct as f64 / predicted.len().max(1) as f64;
        (per_class, mean, accuracy)
    }

    pub fn is_self_consistent(&self) -> bool {
        let (per_class, mean, accuracy) = self.recompute_metrics();
        per_class == self.per_class_precision
            && mean == self.mean_precision
            && accuracy == self.test_accuracy
    }
}

// ---------------------------------------------------------------------------
// Pipeline execution
// ---------------------------------------------------------------------------

struct LoadedSequence {
    entry: ManifestEntry,
    record: SequenceRecord,
    dir: PathBuf,
}

struct UnitSelection {
    track_id: u32,
    /// Frames chosen for the grid, chronological.
    frames: Vec<u32>,
    /// Rows (kept after filtering) this unit clustered over.
    kept_rows: Vec<VectorRow>,
    /// True when filtering removed so much that the unit fell back to the
    /// unfiltered pose set.
    filter_fallback: bool,
}

pub fn load_manifest(path: &Path) -> Result<(Manifest, PathBuf), PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| {
        PipelineError::data("manifest", None, format!("{}: {e}", path.display()))
    })?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| PipelineError::data("manifest", None, e))?;
    let dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((manifest, dir))
}

fn load_sequences(
    manifest: &Manifest,
    base: &Path,
) -> Result<Vec<LoadedSequence>, PipelineError> {
    manifest
        .sequences
        .par_iter()
        .map(|entry| {
            let dir = base.join(&entry.path);
            let doc_path = dir.join("sequence.json");
            let text = fs::read_to_string(&doc_path).map_err(|e| {
                PipelineError::data(
                    "load",
                    Some(&entry.sequence_id),
                    format!("{}: {e}", doc_path.display()),
                )
            })?;
            let record = parse_pose_tracks(&text)
                .map_err(|e| PipelineError::data("parse", Some(&entry.sequence_id), e))?;
            Ok(LoadedSequence {
                entry: entry.clone(),
                record,
                dir,
            })
        })
        .collect()
}

/// Run the configured pipeline over the dataset named by the manifest.
///
/// Stage outputs are materialized under `output_dir` (`actors/`, `vectors/`,
/// `keyposes/`, `grids/`, `report.json`) and the trained models are written
/// to `model_store`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let total_start = Instant::now();
    let mut timings = StageTimings::default();
    let out = &config.output_dir;
    for sub in ["actors", "vectors", "keyposes", "grids"] {
        fs::create_dir_all(out.join(sub)).map_err(|e| PipelineError::Internal(e.to_string()))?;
    }

    let (manifest, base) = load_manifest(&config.manifest)?;
    if manifest.sequences.is_empty() {
        return Err(PipelineError::data("manifest", None, "no sequences listed"));
    }
    let classes = manifest.classes.clone();
    let sequences = load_sequences(&manifest, &base)?;

    // Stage: key-actor identification.
    let stage = Instant::now();
    let actor_reports: Vec<ActorReport> = sequences
        .par_iter()
        .map(|seq| {
            let report = identify_actor(&seq.record, config.score_threshold)?;
            let path = out.join("actors").join(format!("{}.json", seq.entry.sequence_id));
            fs::write(&path, serde_json::to_string_pretty(&report).unwrap())
                .map_err(|e| PipelineError::Internal(e.to_string()))?;
            Ok(report)
        })
        .collect::<Result<_, PipelineError>>()?;
    timings.identify_ms = stage.elapsed().as_secs_f64() * 1e3;

    // Stage: pose encoding per unit (key actor, or every track).
    let stage = Instant::now();
    let unit_rows: Vec<Vec<VectorRow>> = sequences
        .par_iter()
        .zip(actor_reports.par_iter())
        .map(|(seq, actors)| {
            let track_ids: Vec<u32> = if config.ablation.all_actors {
                seq.record.tracks.iter().map(|t| t.track_id).collect()
            } else {
                vec![actors.key_actor_id]
            };
            let rows = encode_record(&seq.record, &track_ids, config.ablation.cartesian);
            let path = out.join("vectors").join(format!("{}.csv", seq.entry.sequence_id));
            write_vector_table(&path, &rows)?;
            Ok(rows)
        })
        .collect::<Result<_, PipelineError>>()?;
    timings.encode_ms = stage.elapsed().as_secs_f64() * 1e3;

    // Stage: autoencoder training on train-split vectors. The encoder is
    // needed for clustering even when filtering is toggled off.
    let stage = Instant::now();
    let train_vectors: Vec<PoseVector> = sequences
        .iter()
        .zip(unit_rows.iter())
        .filter(|(seq, _)| seq.entry.split == Split::Train)
        .flat_map(|(_, rows)| rows.iter().map(|r| r.vector.clone()))
        .collect();
    let filter_config = FilterConfig {
        epochs: config.filter.epochs,
        learning_rate: config.filter.lr,
        batch_size: config.filter.batch,
        seed: config.seed,
        threshold_multiplier: config.filter.k,
    };
    let filter_model = train_autoencoder(&train_vectors, &filter_config)
        .map_err(|e| PipelineError::data("train-filter", None, e))?;
    timings.filter_ms = stage.elapsed().as_secs_f64() * 1e3;

    // Stage: frame selection per unit (DEC key-poses or random frames).
    let stage = Instant::now();
    let (encoder_spec, encoder_params) = filter_model.encoder();
    let capacity = config.grid.layout().capacity();
    let selections: Vec<Vec<UnitSelection>> = sequences
        .par_iter()
        .zip(unit_rows.par_iter())
        .map(|(seq, rows)| {
            let seq_id = &seq.entry.sequence_id;
            let mut track_ids: Vec<u32> = rows.iter().map(|r| r.track_id).collect();
            track_ids.dedup();
            let mut units = Vec::new();
            for track_id in track_ids {
                let track_rows: Vec<VectorRow> = rows
                    .iter()
                    .filter(|r| r.track_id == track_id)
                    .cloned()
                    .collect();
                if track_rows.is_empty() {
                    continue;
                }
                let (mut kept_rows, fallback) = if config.ablation.filtering {
                    let vectors: Vec<PoseVector> =
                        track_rows.iter().map(|r| r.vector.clone()).collect();
                    let (kept, _) = filter_model.filter_poses(&vectors);
                    if kept.is_empty() {
                        (track_rows.clone(), true)
                    } else {
                        (
                            kept.iter().map(|&i| track_rows[i].clone()).collect(),
                            false,
                        )
                    }
                } else {
                    (track_rows.clone(), false)
                };
                kept_rows.sort_by_key(|r| r.frame);
                let unit_seed = derived_seed(config.seed, seq_id, track_id);
                let frames: Vec<u32> = if config.ablation.random_frames {
                    let mut rng = ChaCha8Rng::seed_from_u64(unit_seed);
                    let mut all: Vec<u32> = kept_rows.iter().map(|r| r.frame).collect();
                    all.shuffle(&mut rng);
                    let mut chosen: Vec<u32> =
                        all.into_iter().take(capacity.min(kept_rows.len())).collect();
                    chosen.sort_unstable();
                    chosen
                } else {
                    let k_eff = config.cluster.k.min(kept_rows.len());
                    let matrix = rows_to_matrix(&kept_rows);
                    let frames_idx: Vec<u32> = kept_rows.iter().map(|r| r.frame).collect();
                    let dec_config = DecConfig {
                        k: k_eff,
                        seed: unit_seed,
                        epochs: config.cluster.epochs,
                        update_interval: config.cluster.update_interval,
                        ..DecConfig::default()
                    };
                    let fit = dec_fit(&encoder_spec, &encoder_params, &matrix, &dec_config)
                        .map_err(|e| PipelineError::data("cluster", Some(seq_id), e))?;
                    let picks = select_key_poses(&fit.model, &fit.q, &matrix, &frames_idx)
                        .map_err(|e| PipelineError::data("cluster", Some(seq_id), e))?;
                    picks.iter().map(|p| p.frame_index).collect()
                };
                units.push(UnitSelection {
                    track_id,
                    frames,
                    kept_rows,
                    filter_fallback: fallback,
                });
            }
            if units.is_empty() {
                return Err(PipelineError::data(
                    "cluster",
                    Some(seq_id),
                    "no poses available for any unit",
                ));
            }
            #[derive(Serialize)]
            struct KeyPoseDoc<'a> {
                sequence_id: &'a str,
                units: Vec<KeyPoseUnit>,
            }
            #[derive(Serialize)]
            struct KeyPoseUnit {
                track_id: u32,
                frames: Vec<u32>,
                kept_poses: usize,
                filter_fallback: bool,
            }
            let doc = KeyPoseDoc {
                sequence_id: seq_id,
                units: units
                    .iter()
                    .map(|u| KeyPoseUnit {
                        track_id: u.track_id,
                        frames: u.frames.clone(),
                        kept_poses: u.kept_rows.len(),
                        filter_fallback: u.filter_fallback,
                    })
                    .collect(),
            };
            fs::write(
                out.join("keyposes").join(format!("{seq_id}.json")),
                serde_json::to_string_pretty(&doc).unwrap(),
            )
            .map_err(|e| PipelineError::Internal(e.to_string()))?;
            Ok(units)
        })
        .collect::<Result<_, PipelineError>>()?;
    timings.cluster_ms = stage.elapsed().as_secs_f64() * 1e3;

    // Stage: grid assembly from frame crops at key-pose boxes.
    let stage = Instant::now();
    let layout = config.grid.layout();
    let grids: Vec<Vec<(u32, ActionGrid)>> = sequences
        .par_iter()
        .zip(selections.par_iter())
        .map(|(seq, units)| {
            let seq_id = &seq.entry.sequence_id;
            let frames_dir = seq.dir.join("frames");
            let store = load_frames(&frames_dir)
                .map_err(|e| PipelineError::data("build-grids", Some(seq_id), e))?;
            let mut result = Vec::new();
            for unit in units {
                let mut tiles: Vec<Tile> = Vec::new();
                for &frame in &unit.frames {
                    let pose = seq.record.pose(unit.track_id, frame).ok_or_else(|| {
                        PipelineError::data(
                            "build-grids",
                            Some(seq_id),
                            format!("missing pose for track {} frame {frame}", unit.track_id),
                        )
                    })?;
                    let image = store.frame(frame).ok_or_else(|| {
                        PipelineError::data(
                            "build-grids",
                            Some(seq_id),
                            format!("missing frame {frame}"),
                        )
                    })?;
                    let tile = extract_tile(image, frame, &pose.bbox, layout.tile_size)
                        .map_err(|e| PipelineError::data("build-grids", Some(seq_id), e))?;
                    tiles.push(tile);
                }
                let grid = build_grid(tiles, &layout, Some(seq.entry.label))
                    .map_err(|e| PipelineError::data("build-grids", Some(seq_id), e))?;
                let stem = format!("{seq_id}__{:02}", unit.track_id);
                grid.image
                    .write_pgm(&out.join("grids").join(format!("{stem}.pgm")))
                    .map_err(|e| PipelineError::Internal(e.to_string()))?;
                let sidecar = GridSidecar {
                    sequence_id: seq_id.clone(),
                    key_actor_id: unit.track_id,
                    label: Some(seq.entry.label),
                    tiles: grid.sources.clone(),
                };
                fs::write(
                    out.join("grids").join(format!("{stem}.json")),
                    serde_json::to_string_pretty(&sidecar).unwrap(),
                )
                .map_err(|e| PipelineError::Internal(e.to_string()))?;
                result.push((unit.track_id, grid));
            }
            Ok(result)
        })
        .collect::<Result<_, PipelineError>>()?;
    timings.grid_ms = stage.elapsed().as_secs_f64() * 1e3;

    // Stage: classifier training on train-split grids in canonical order.
    let stage = Instant::now();
    let mut train_examples: Vec<(String, u32, &GrayImage, u32)> = Vec::new();
    for (seq, seq_grids) in sequences.iter().zip(grids.iter()) {
        if seq.entry.split != Split::Train {
            continue;
        }
        for (track_id, grid) in seq_grids {
            train_examples.push((
                seq.entry.sequence_id.clone(),
                *track_id,
                &grid.image,
                seq.entry.label,
            ));
        }
    }
    train_examples.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
    let train_refs: Vec<(&GrayImage, u32)> =
        train_examples.iter().map(|(_, _, g, l)| (*g, *l)).collect();
    let classifier_config = ClassifierConfig {
        epochs: config.classifier.epochs,
        learning_rate: config.classifier.lr,
        batch_size: config.classifier.batch,
        seed: config.seed,
        ..ClassifierConfig::default()
    };
    let classifier = train_classifier(&train_refs, &classes, &classifier_config)
        .map_err(|e| PipelineError::data("train-classifier", None, e))?;
    timings.train_ms = stage.elapsed().as_secs_f64() * 1e3;

    // Stage: prediction and metrics on the test split.
    let stage = Instant::now();
    let mut predictions = Vec::new();
    for ((seq, seq_grids), actors) in sequences.iter().zip(grids.iter()).zip(actor_reports.iter())
    {
        if seq.entry.split != Split::Test {
            continue;
        }
        let images: Vec<&GrayImage> = seq_grids.iter().map(|(_, g)| &g.image).collect();
        let dists = classifier
            .predict_batch(&images)
            .map_err(|e| PipelineError::data("predict", Some(&seq.entry.sequence_id), e))?;
        let (predicted, distribution) = if config.ablation.all_actors {
            majority_vote(&dists)
        } else {
            let d = dists.into_iter().next().ok_or_else(|| {
                PipelineError::data("predict", Some(&seq.entry.sequence_id), "no grids")
            })?;
            (argmax(&d) as u32, d)
        };
        predictions.push(SequencePrediction {
            sequence_id: seq.entry.sequence_id.clone(),
            label: seq.entry.label,
            predicted,
            distribution,
            key_actor_id: actors.key_actor_id,
        });
    }
    timings.predict_ms = stage.elapsed().as_secs_f64() * 1e3;

    let predicted: Vec<usize> = predictions.iter().map(|p| p.predicted as usize).collect();
    let labels: Vec<usize> = predictions.iter().map(|p| p.label as usize).collect();
    let (per_class_precision, mean_precision) =
        average_precision(&predicted, &labels, classes.len());
    let correct = predicted
        .iter()
        .zip(labels.iter())
        .filter(|(a, b)| a == b)
        .count();
    let test_accuracy = correct as f64 / predicted.len().max(1) as f64;

    // Bundle: filter, a dataset-level cluster model (k-means over the train
    // latents around the shared encoder), classifier, config.
    let train_matrix = {
        let rows: Vec<VectorRow> = sequences
            .iter()
            .zip(unit_rows.iter())
            .filter(|(seq, _)| seq.entry.split == Split::Train)
            .flat_map(|(_, rows)| rows.iter().cloned())
            .collect();
        rows_to_matrix(&rows)
    };
    let latents = crate::neural_core::forward(&encoder_spec, &encoder_params, &train_matrix)
        .map_err(|e| PipelineError::Internal(e.to_string()))?;
    let km = kmeans(&latents, config.cluster.k, config.seed, 4)
        .map_err(|e| PipelineError::data("cluster", None, e))?;
    let cluster_model = ClusterModel {
        encoder_spec,
        encoder_params,
        centroids: km.centroids,
        k: config.cluster.k,
    };
    let bundle = ModelBundle {
        version: BUNDLE_VERSION,
        filter: filter_model.to_doc(),
        cluster: ClusterModelDoc::new(&cluster_model),
        classifier: classifier.to_doc(),
        config: config.clone(),
    };
    save_bundle(&config.model_store, &bundle)
        .map_err(|e| PipelineError::Internal(e.to_string()))?;

    timings.total_ms = total_start.elapsed().as_secs_f64() * 1e3;
    let report = RunReport {
        config: config.clone(),
        classes,
        predictions,
        per_class_precision,
        mean_precision,
        test_accuracy,
        timings,
    };
    fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&report).unwrap(),
    )
    .map_err(|e| PipelineError::Internal(e.to_string()))?;
    Ok(report)
}

/// Grid sidecar document naming the key-pose sources of each tile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSidecar {
    pub sequence_id: String,
    pub key_actor_id: u32,
    pub label: Option<u32>,
    pub tiles: Vec<TileSource>,
}

/// Most frequent predicted class over per-actor distributions; ties break
/// by summed probability, then lowest class index. Returns the winning
/// class and the mean distribution.
fn majority_vote(dists: &[Vec<f64>]) -> (u32, Vec<f64>) {
    let n_classes = dists.first().map(|d| d.len()).unwrap_or(0);
    let mut votes = vec![0usize; n_classes];
    let mut summed = vec![0.0f64; n_classes];
    for d in dists {
        votes[argmax(d)] += 1;
        for (s, v) in summed.iter_mut().zip(d.iter()) {
            *s += v;
        }
    }
    let mut best = 0usize;
    for c in 1..n_classes {
        if votes[c] > votes[best]
            || (votes[c] == votes[best] && summed[c] > summed[best])
        {
            best = c;
        }
    }
    let mean: Vec<f64> = summed
        .iter()
        .map(|s| s / dists.len().max(1) as f64)
        .collect();
    (best as u32, mean)
}

// ---------------------------------------------------------------------------
// Ablation sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub toggles: AblationToggles,
    pub test_accuracy: f64,
    pub mean_precision: f64,
}

/// The component sweep: each row enables one more pipeline stage, ending at
/// the full configuration.
pub fn ablation_ladder() -> Vec<(&'static str, AblationToggles)> {
    vec![
        (
            "all-actors+random-frames",
            AblationToggles {
                all_actors: true,
                random_frames: true,
                cartesian: true,
                filtering: false,
            },
        ),
        (
            "key-actor+random-frames",
            AblationToggles {
                all_actors: false,
                random_frames: true,
                cartesian: true,
                filtering: false,
            },
        ),
        (
            "key-actor+key-poses",
            AblationToggles {
                all_actors: false,
                random_frames: false,
                cartesian: true,
                filtering: false,
            },
        ),
        (
            "key-actor+key-poses+polar",
            AblationToggles {
                all_actors: false,
                random_frames: false,
                cartesian: false,
                filtering: false,
            },
        ),
        (
            "full",
            AblationToggles {
                all_actors: false,
                random_frames: false,
                cartesian: false,
                filtering: true,
            },
        ),
    ]
}

/// Run the five-step toggle ladder with a shared dataset, seed, and
/// hyperparameters. Artifacts land under `<output_dir>/ablate/<name>/`.
pub fn run_ablation(base: &PipelineConfig) -> Result<Vec<AblationRow>, PipelineError> {
    let mut rows = Vec::new();
    for (name, toggles) in ablation_ladder() {
        let mut config = base.clone();
        config.ablation = toggles;
        config.output_dir = base.output_dir.join("ablate").join(name);
        config.model_store = config.output_dir.join("bundle.json");
        let report = run_pipeline(&config)?;
        rows.push(AblationRow {
            name: name.to_string(),
            toggles,
            test_accuracy: report.test_accuracy,
            mean_precision: report.mean_precision,
        });
    }
    Ok(rows)
}
