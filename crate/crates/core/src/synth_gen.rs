//! Deterministic synthetic multi-actor scene generator.
//!
//! Each sequence contains one main actor performing a class motion (wave,
//! walk, or jump) and zero or more distractors idling at a fraction of the
//! main actor's motion. Joint trajectories drive everything: stored flow
//! magnitudes equal the mean per-frame joint displacement of the underlying
//! trajectory, frames render each joint as a Gaussian blob, and ground truth
//! (key actor, class) is returned alongside the record.
//!
//! Identical spec + seed produces bit-identical output.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose_data::{
    BBox, Detection, FrameStore, GrayImage, Keypoint2D, PoseFrame, SequenceRecord, Track,
    JOINT_COUNT,
};

/// Version tag for dataset manifests.
pub const MANIFEST_VERSION: u32 = 1;

/// Std-dev of the rendered joint blobs, pixels.
const BLOB_SIGMA: f64 = 2.0;
/// Pixel padding added around the joint extent when deriving boxes.
const BBOX_PAD: f64 = 8.0;
/// Distractor motion is trimmed a little below the exact ratio so the
/// main actor clears `motion_ratio` strictly even after rounding.
const RATIO_MARGIN: f64 = 1.02;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The three synthetic action classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionClass {
    Wave,
    Walk,
    Jump,
}

impl ActionClass {
    pub const ALL: [ActionClass; 3] = [ActionClass::Wave, ActionClass::Walk, ActionClass::Jump];

    pub fn index(self) -> u32 {
        match self {
            ActionClass::Wave => 0,
            ActionClass::Walk => 1,
            ActionClass::Jump => 2,
        }
    }

    pub fn from_index(index: u32) -> Option<Self> {
        Self::ALL.get(index as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionClass::Wave => "wave",
            ActionClass::Walk => "walk",
            ActionClass::Jump => "jump",
        }
    }
}

/// Parameters for one synthetic sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub class: ActionClass,
    pub num_actors: u32,
    pub num_frames: u32,
    pub width: u32,
    pub height: u32,
    /// Main-actor motion divided by distractor motion; must exceed 1.
    pub motion_ratio: f64,
    /// Std-dev of the static per-joint skeleton jitter, pixels.
    pub noise_std: f64,
    /// Probability that a stored pose has its joints shuffled, modeling a
    /// failed pose estimate. Trajectories, flow, and rendering are unaffected.
    pub corrupt_prob: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(class: ActionClass, seed: u64) -> Self {
        Self {
            class,
            num_actors: 3,
            num_frames: 32,
            width: 192,
            height: 160,
            motion_ratio: 2.5,
            noise_std: 0.5,
            corrupt_prob: 0.0,
            seed,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.num_actors < 1 {
            return Err(SynthError::InvalidSpec("num_actors must be >= 1".into()));
        }
        if self.num_frames < 16 {
            return Err(SynthError::InvalidSpec("num_frames must be >= 16".into()));
        }
        if self.motion_ratio <= 1.0 {
            return Err(SynthError::InvalidSpec("motion_ratio must exceed 1".into()));
        }
        if !(0.0..=1.0).contains(&self.corrupt_prob) {
            return Err(SynthError::InvalidSpec("corrupt_prob outside [0,1]".into()));
        }
        if self.noise_std < 0.0 {
            return Err(SynthError::InvalidSpec("noise_std must be >= 0".into()));
        }
        Ok(())
    }
}

/// What the generator knows that the pipeline must rediscover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundTruth {
    pub key_actor_id: u32,
    pub class: ActionClass,
}

/// Neutral standing skeleton in unit coordinates relative to the hip
/// center, COCO joint order, y down.
const SKELETON: [(f64, f64); JOINT_COUNT] = [
    (0.00, -0.42),  // nose
    (-0.03, -0.45), // left eye
    (0.03, -0.45),  // right eye
    (-0.07, -0.43), // left ear
    (0.07, -0.43),  // right ear
    (-0.16, -0.30), // left shoulder
    (0.16, -0.30),  // right shoulder
    (-0.22, -0.15), // left elbow
    (0.22, -0.15),  // right elbow
    (-0.25, 0.00),  // left wrist
    (0.25, 0.00),   // right wrist
    (-0.09, 0.00),  // left hip
    (0.09, 0.00),   // right hip
    (-0.10, 0.26),  // left knee
    (0.10, 0.26),   // right knee
    (-0.11, 0.50),  // left ankle
    (0.11, 0.50),   // right ankle
];

const L_ELBOW: usize = 7;
const R_ELBOW: usize = 8;
const L_WRIST: usize = 9;
const R_WRIST: usize = 10;
const L_KNEE: usize = 13;
const R_KNEE: usize = 14;
const L_ANKLE: usize = 15;
const R_ANKLE: usize = 16;

type Joints = [(f64, f64); JOINT_COUNT];

struct ActorLayout {
    center_x: f64,
    center_y: f64,
    height_px: f64,
    idle_phase: f64,
    arm_phase: f64,
    jitter: Joints,
}

/// Absolute joint positions of the main actor across all frames.
fn class_trajectory(class: ActionClass, layout: &ActorLayout, num_frames: u32) -> Vec<Joints> {
    let h = layout.height_px;
    (0..num_frames)
        .map(|t| {
            let t = t as f64;
            let mut joints = base_joints(layout);
            match class {
                ActionClass::Wave => {
                    // Left arm raised overhead, swinging side to side.
                    let swing = (2.0 * std::f64::consts::PI * t / 10.0 + layout.arm_phase).sin();
                    joints[L_ELBOW] = (
                        layout.center_x + (-0.18 + 0.05 * swing) * h + layout.jitter[L_ELBOW].0,
                        layout.center_y - 0.40 * h + layout.jitter[L_ELBOW].1,
                    );
                    joints[L_WRIST] = (
                        layout.center_x + (-0.16 + 0.14 * swing) * h + layout.jitter[L_WRIST].0,
                        layout.center_y - 0.56 * h + layout.jitter[L_WRIST].1,
                    );
                }
                ActionClass::Walk => {
                    // Pacing: whole-body horizontal sway plus a leg/arm gait.
                    let drift = 0.20 * h * (2.0 * std::f64::consts::PI * t / 24.0).sin();
                    let gait = (2.0 * std::f64::consts::PI * t / 8.0).sin();
                    for j in joints.iter_mut() {
                        j.0 += drift;
                    }
                    joints[L_KNEE].0 += 0.07 * h * gait;
                    joints[L_ANKLE].0 += 0.10 * h * gait;
                    joints[R_KNEE].0 -= 0.07 * h * gait;
                    joints[R_ANKLE].0 -= 0.10 * h * gait;
                    joints[L_KNEE].1 -= 0.05 * h * gait.max(0.0);
                    joints[R_KNEE].1 -= 0.05 * h * (-gait).max(0.0);
                    joints[L_WRIST].0 -= 0.06 * h * gait;
                    joints[R_WRIST].0 += 0.06 * h * gait;
                }
                ActionClass::Jump => {
                    // Bounce phase: 0 on the ground (crouched), 1 at the apex.
                    let p = (2.0 * std::f64::consts::PI * t / 16.0).sin().abs();
                    let crouch = 1.0 - p;
                    for j in joints.iter_mut() {
                        j.1 -= 0.22 * h * p;
                    }
                    // Crouch bends the knees out and sinks the torso.
                    for idx in 0..=12 {
                        joints[idx].1 += 0.06 * h * crouch;
                    }
                    joints[L_KNEE].0 -= 0.06 * h * crouch;
                    joints[R_KNEE].0 += 0.06 * h * crouch;
                    joints[L_KNEE].1 -= 0.04 * h * crouch;
                    joints[R_KNEE].1 -= 0.04 * h * crouch;
                    // Arms lift with the jump.
                    joints[L_WRIST].1 -= 0.10 * h * p;
                    joints[R_WRIST].1 -= 0.10 * h * p;
                    joints[L_ELBOW].1 -= 0.05 * h * p;
                    joints[R_ELBOW].1 -= 0.05 * h * p;
                }
            }
            joints
        })
        .collect()
}

fn base_joints(layout: &ActorLayout) -> Joints {
    let mut joints = [(0.0, 0.0); JOINT_COUNT];
    for (i, j) in joints.iter_mut().enumerate() {
        j.0 = layout.center_x + SKELETON[i].0 * layout.height_px + layout.jitter[i].0;
        j.1 = layout.center_y + SKELETON[i].1 * layout.height_px + layout.jitter[i].1;
    }
    joints
}

/// Per-frame idle offsets at unit amplitude: a slow whole-body sway with a
/// little wrist movement. Scaled per distractor to hit the motion ratio.
fn idle_unit_offsets(layout: &ActorLayout, num_frames: u32) -> Vec<Joints> {
    (0..num_frames)
        .map(|t| {
            let t = t as f64;
            let sway = (2.0 * std::f64::consts::PI * t / 32.0 + layout.idle_phase).sin();
            let fidget = (2.0 * std::f64::consts::PI * t / 12.0 + layout.arm_phase).sin();
            let mut offsets = [(0.0, -sway); JOINT_COUNT];
            offsets[L_WRIST].0 += 0.3 * fidget;
            offsets[R_WRIST].0 -= 0.3 * fidget;
            offsets
        })
        .collect()
}

/// Mean over frames of the mean per-joint displacement, px/frame.
fn mean_step_displacement(traj: &[Joints]) -> f64 {
    let steps = traj.len() - 1;
    let mut total = 0.0;
    for t in 1..traj.len() {
        total += frame_displacement(&traj[t - 1], &traj[t]);
    }
    total / steps as f64
}

fn frame_displacement(a: &Joints, b: &Joints) -> f64 {
    let sum: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(p, q)| (p.0 - q.0).hypot(p.1 - q.1))
        .sum();
    sum / JOINT_COUNT as f64
}

fn joints_bbox(joints: &Joints, width: u32, height: u32) -> BBox {
    let mut min_x = f64::INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for &(x, y) in joints {
        min_x = min_x.min(x);
        min_y = min_y.min(y);
        max_x = max_x.max(x);
        max_y = max_y.max(y);
    }
    let left = (min_x - BBOX_PAD).max(0.0);
    let top = (min_y - BBOX_PAD).max(0.0);
    let right = (max_x + BBOX_PAD).min(width as f64);
    let bottom = (max_y + BBOX_PAD).min(height as f64);
    BBox {
        left,
        top,
        width: right - left,
        height: bottom - top,
    }
}

fn render_frame(width: u32, height: u32, actor_joints: &[&Joints]) -> GrayImage {
    let mut img = GrayImage::new(width, height);
    let radius = (3.0 * BLOB_SIGMA).ceil() as i64;
    for joints in actor_joints {
        for &(jx, jy) in joints.iter() {
            let cx = jx.round() as i64;
            let cy = jy.round() as i64;
            for y in (cy - radius).max(0)..=(cy + radius).min(height as i64 - 1) {
                for x in (cx - radius).max(0)..=(cx + radius).min(width as i64 - 1) {
                    let dx = x as f64 - jx;
                    let dy = y as f64 - jy;
                    let d2 = dx * dx + dy * dy;
                    let v = (255.0 * (-d2 / (2.0 * BLOB_SIGMA * BLOB_SIGMA)).exp()).round();
                    if v >= 1.0 {
                        img.add(x as u32, y as u32, v as u8);
                    }
                }
            }
        }
    }
    img
}

/// Generate one sequence: record, frames, and ground truth.
pub fn generate_sequence(
    spec: &SynthSpec,
) -> Result<(SequenceRecord, FrameStore, GroundTruth), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w = spec.width as f64;
    let h_frame = spec.height as f64;
    let n = spec.num_actors as usize;

    let spacing = w / (n as f64 + 1.0);
    let layouts: Vec<ActorLayout> = (0..n)
        .map(|i| {
            let height_px = 0.32 * h_frame * (0.85 + 0.30 * rng.gen::<f64>());
            let mut jitter = [(0.0, 0.0); JOINT_COUNT];
            for j in jitter.iter_mut() {
                // Box-Muller static skeleton jitter.
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen::<f64>();
                let r = (-2.0 * u1.ln()).sqrt() * spec.noise_std;
                let a = 2.0 * std::f64::consts::PI * u2;
                *j = (r * a.cos(), r * a.sin());
            }
            ActorLayout {
                center_x: spacing * (i as f64 + 1.0),
                center_y: 0.55 * h_frame,
                height_px,
                idle_phase: rng.gen_range(0.0..2.0 * std::f64::consts::PI),
                arm_phase: rng.gen_range(0.0..2.0 * std::f64::consts::PI),
                jitter,
            }
        })
        .collect();
    let main_index = rng.gen_range(0..n);

    // Main actor's trajectory sets the motion budget.
    let main_traj = class_trajectory(spec.class, &layouts[main_index], spec.num_frames);
    let main_motion = mean_step_displacement(&main_traj);

    let mut trajectories: Vec<Vec<Joints>> = Vec::with_capacity(n);
    for (i, layout) in layouts.iter().enumerate() {
        if i == main_index {
            trajectories.push(main_traj.clone());
            continue;
        }
        let unit = idle_unit_offsets(layout, spec.num_frames);
        let unit_motion = mean_step_displacement(&unit);
        let amplitude = main_motion / (spec.motion_ratio * RATIO_MARGIN * unit_motion);
        let base = base_joints(layout);
        let traj = unit
            .iter()
            .map(|offsets| {
                let mut joints = base;
                for (j, o) in joints.iter_mut().zip(offsets.iter()) {
                    j.0 += amplitude * o.0;
                    j.1 += amplitude * o.1;
                }
                joints
            })
            .collect();
        trajectories.push(traj);
    }

    for (i, traj) in trajectories.iter().enumerate() {
        for joints in traj {
            for &(x, y) in joints {
                if x < 1.0 || y < 1.0 || x > w - 2.0 || y > h_frame - 2.0 {
                    return Err(SynthError::Geometry(format!(
                        "actor {} leaves the {}x{} frame at ({x:.1}, {y:.1})",
                        i + 1,
                        spec.width,
                        spec.height
                    )));
                }
            }
        }
    }

    // Tracks, poses, and per-frame flow magnitudes from the trajectories.
    let mut tracks = Vec::with_capacity(n);
    let mut poses = BTreeMap::new();
    for (i, traj) in trajectories.iter().enumerate() {
        let track_id = i as u32 + 1;
        let mut detections = Vec::with_capacity(traj.len());
        for (t, joints) in traj.iter().enumerate() {
            let flow = if t == 0 {
                frame_displacement(&traj[0], &traj[1])
            } else {
                frame_displacement(&traj[t - 1], &traj[t])
            };
            let bbox = joints_bbox(joints, spec.width, spec.height);
            detections.push(Detection {
                frame_index: t as u32,
                bbox,
                detection_score: 1.0,
                flow_magnitude: flow,
            });

            let mut stored = *joints;
            if spec.corrupt_prob > 0.0 && rng.gen::<f64>() < spec.corrupt_prob {
                stored.shuffle(&mut rng);
            }
            let mut kp = [Keypoint2D {
                x: 0.0,
                y: 0.0,
                confidence: 0.0,
            }; JOINT_COUNT];
            for (slot, &(x, y)) in kp.iter_mut().zip(stored.iter()) {
                *slot = Keypoint2D {
                    x,
                    y,
                    confidence: rng.gen_range(0.85..1.0),
                };
            }
            poses.insert(
                (track_id, t as u32),
                PoseFrame {
                    frame_index: t as u32,
                    joints: kp,
                    bbox,
                },
            );
        }
        tracks.push(Track {
            track_id,
            detections,
        });
    }

    let frames: Vec<GrayImage> = (0..spec.num_frames as usize)
        .map(|t| {
            let actor_joints: Vec<&Joints> = trajectories.iter().map(|traj| &traj[t]).collect();
            render_frame(spec.width, spec.height, &actor_joints)
        })
        .collect();

    let record = SequenceRecord::new(
        format!("{}-{:016x}", spec.class.name(), spec.seed),
        spec.num_frames,
        spec.width,
        spec.height,
        25.0,
        Some(spec.class.index()),
        tracks,
        poses,
    )
    .expect("generated record satisfies its own invariants");
    let store = FrameStore::new(frames).expect("at least one frame");
    Ok((
        record,
        store,
        GroundTruth {
            key_actor_id: main_index as u32 + 1,
            class: spec.class,
        },
    ))
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

/// Parameters shared by every sequence of a generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub classes: Vec<ActionClass>,
    pub sequences_per_class: u32,
    pub num_actors: u32,
    pub num_frames: u32,
    pub width: u32,
    pub height: u32,
    pub motion_ratio: f64,
    pub noise_std: f64,
    pub corrupt_prob: f64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            classes: ActionClass::ALL.to_vec(),
            sequences_per_class: 40,
            num_actors: 3,
            num_frames: 32,
            width: 192,
            height: 160,
            motion_ratio: 2.5,
            noise_std: 0.5,
            corrupt_prob: 0.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One manifest row: where a sequence lives and what we know about it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sequence_id: String,
    /// Directory of the sequence relative to the manifest, containing
    /// `sequence.json` and `frames/`.
    pub path: String,
    pub label: u32,
    pub key_actor_id: u32,
    pub split: Split,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub classes: Vec<String>,
    pub sequences: Vec<ManifestEntry>,
}

/// Generate `classes x sequences_per_class` sequences under `out_dir`, with
/// a seeded, class-stratified 75/25 train/test split recorded in the
/// manifest (written to `out_dir/manifest.json`).
pub fn generate_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<Manifest, SynthError> {
    if spec.classes.is_empty() || spec.sequences_per_class < 1 {
        return Err(SynthError::InvalidSpec(
            "at least one sequence per class is required".into(),
        ));
    }
    fs::create_dir_all(out_dir)?;

    struct Job {
        spec: SynthSpec,
        sequence_id: String,
        class: ActionClass,
    }
    let mut jobs = Vec::new();
    for (c, &class) in spec.classes.iter().enumerate() {
        for k in 0..spec.sequences_per_class {
            let index = (c as u64) * spec.sequences_per_class as u64 + k as u64;
            let seq_spec = SynthSpec {
                class,
                num_actors: spec.num_actors,
                num_frames: spec.num_frames,
                width: spec.width,
                height: spec.height,
                motion_ratio: spec.motion_ratio,
                noise_std: spec.noise_std,
                corrupt_prob: spec.corrupt_prob,
                seed: spec.seed ^ index,
            };
            jobs.push(Job {
                spec: seq_spec,
                sequence_id: format!("{}-{:03}", class.name(), k),
                class,
            });
        }
    }

    let key_actors: Vec<u32> = jobs
        .par_iter()
        .map(|job| -> Result<u32, SynthError> {
            let (mut record, frames, truth) = generate_sequence(&job.spec)?;
            record.sequence_id = job.sequence_id.clone();
            debug_assert_eq!(truth.class, job.class);
            let seq_dir = out_dir.join(&job.sequence_id);
            fs::create_dir_all(&seq_dir)?;
            fs::write(
                seq_dir.join("sequence.json"),
                crate::pose_data::serialize_sequence(&record),
            )?;
            frames
                .write_dir(&seq_dir.join("frames"))
                .map_err(|e| SynthError::Io(std::io::Error::other(e.to_string())))?;
            Ok(truth.key_actor_id)
        })
        .collect::<Result<_, _>>()?;

    // Stratified split, seeded independently of sequence content.
    let mut split_rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(0x5e17));
    let mut entries = Vec::with_capacity(jobs.len());
    for (c, _) in spec.classes.iter().enumerate() {
        let per_class = spec.sequences_per_class as usize;
        let mut order: Vec<usize> = (0..per_class).collect();
        order.shuffle(&mut split_rng);
        let n_test = per_class / 4;
        let test_set: std::collections::BTreeSet<usize> =
            order.into_iter().take(n_test).collect();
        for k in 0..per_class {
            let index = c * per_class + k;
            let job = &jobs[index];
            entries.push(ManifestEntry {
                sequence_id: job.sequence_id.clone(),
                path: job.sequence_id.clone(),
                label: job.class.index(),
                key_actor_id: key_actors[index],
                split: if test_set.contains(&k) {
                    Split::Test
                } else {
                    Split::Train
                },
            });
        }
    }

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        seed: spec.seed,
        classes: spec.classes.iter().map(|c| c.name().to_string()).collect(),
        sequences: entries,
    };
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serialization"),
    )?;
    Ok(manifest)
}
