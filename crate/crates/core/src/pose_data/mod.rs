//! Domain types for sequences, tracks, and poses, plus parsing and
//! validation of the on-disk sequence document.
//!
//! A sequence document is a single JSON file:
//!
//! ```text
//! {sequence_id, num_frames, width, height, fps, label?,
//!  tracks: [{track_id,
//!            detections: [{frame, bbox: [l,t,w,h], score, flow_magnitude}],
//!            poses:      [{frame, joints: [[x,y,c] x 17], bbox: [l,t,w,h]}]}]}
//! ```
//!
//! All types are immutable after construction and safe to share across
//! threads.

mod frames;

pub use frames::{load_frames, FrameError, FrameStore, GrayImage};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of body joints per pose (COCO keypoint layout).
pub const JOINT_COUNT: usize = 17;

/// COCO joint order: 0 nose, 1 left eye, 2 right eye, 3 left ear,
/// 4 right ear, 5 left shoulder, 6 right shoulder, 7 left elbow,
/// 8 right elbow, 9 left wrist, 10 right wrist, 11 left hip, 12 right hip,
/// 13 left knee, 14 right knee, 15 left ankle, 16 right ankle.
pub const LEFT_HIP: usize = 11;
pub const RIGHT_HIP: usize = 12;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("track {track_id}: duplicate frame {frame}")]
    DuplicateFrame { track_id: u32, frame: u32 },
}

/// One estimated body joint in image coordinates (y grows downward).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint2D {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

/// Axis-aligned box in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    /// True when no part of the box intersects a `w x h` frame.
    pub fn fully_outside(&self, w: u32, h: u32) -> bool {
        self.right() <= 0.0 || self.bottom() <= 0.0 || self.left >= w as f64 || self.top >= h as f64
    }

    /// True when the whole box lies inside a `w x h` frame.
    pub fn inside(&self, w: u32, h: u32) -> bool {
        self.left >= 0.0 && self.top >= 0.0 && self.right() <= w as f64 && self.bottom() <= h as f64
    }
}

/// One actor's pose in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub frame_index: u32,
    pub joints: [Keypoint2D; JOINT_COUNT],
    pub bbox: BBox,
}

/// One tracker detection: where the actor was and how much it moved.
/// `flow_magnitude` is the mean optical-flow magnitude inside the box,
/// in pixels per frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame_index: u32,
    pub bbox: BBox,
    pub detection_score: f64,
    pub flow_magnitude: f64,
}

/// One actor's detections across the sequence, strictly frame-ordered.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u32,
    pub detections: Vec<Detection>,
}

/// Everything known about one video: geometry, tracks, poses, and an
/// optional class label. Frames themselves live in a [`FrameStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub sequence_id: String,
    pub num_frames: u32,
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub label: Option<u32>,
    pub tracks: Vec<Track>,
    poses: BTreeMap<(u32, u32), PoseFrame>,
}

impl SequenceRecord {
    /// Build a record, enforcing every structural invariant.
    pub fn new(
        sequence_id: String,
        num_frames: u32,
        width: u32,
        height: u32,
        fps: f64,
        label: Option<u32>,
        tracks: Vec<Track>,
        poses: BTreeMap<(u32, u32), PoseFrame>,
    ) -> Result<Self, ParseError> {
        let rec = Self {
            sequence_id,
            num_frames,
            width,
            height,
            fps,
            label,
            tracks,
            poses,
        };
        rec.check_invariants()?;
        Ok(rec)
    }

    pub fn poses(&self) -> &BTreeMap<(u32, u32), PoseFrame> {
        &self.poses
    }

    pub fn pose(&self, track_id: u32, frame: u32) -> Option<&PoseFrame> {
        self.poses.get(&(track_id, frame))
    }

    /// Poses of one track in frame order.
    pub fn track_poses(&self, track_id: u32) -> Vec<&PoseFrame> {
        self.poses
            .range((track_id, 0)..=(track_id, u32::MAX))
            .map(|(_, p)| p)
            .collect()
    }

    pub fn track(&self, track_id: u32) -> Option<&Track> {
        self.tracks.iter().find(|t| t.track_id == track_id)
    }

    fn check_invariants(&self) -> Result<(), ParseError> {
        let violation = |msg: String| Err(ParseError::SchemaViolation(msg));
        if self.num_frames == 0 {
            return violation("num_frames must be at least 1".into());
        }
        if self.width == 0 || self.height == 0 {
            return violation("frame dimensions must be positive".into());
        }
        if !self.fps.is_finite() || self.fps <= 0.0 {
            return violation("fps must be positive and finite".into());
        }
        let mut seen_ids = std::collections::BTreeSet::new();
        for track in &self.tracks {
            if !seen_ids.insert(track.track_id) {
                return violation(format!("duplicate track id {}", track.track_id));
            }
            if track.detections.is_empty() {
                return violation(format!("track {} has no detections", track.track_id));
            }
            let mut prev: Option<u32> = None;
            for det in &track.detections {
                if let Some(p) = prev {
                    if det.frame_index == p {
                        return Err(ParseError::DuplicateFrame {
                            track_id: track.track_id,
                            frame: det.frame_index,
                        });
                    }
                    if det.frame_index < p {
                        return violation(format!(
                            "track {}: detections out of frame order",
                            track.track_id
                        ));
                    }
                }
                prev = Some(det.frame_index);
                if det.frame_index >= self.num_frames {
                    return violation(format!(
                        "track {}: detection frame {} beyond num_frames {}",
                        track.track_id, det.frame_index, self.num_frames
                    ));
                }
                if !(0.0..=1.0).contains(&det.detection_score) {
                    return violation(format!(
                        "track {}: detection score {} outside [0,1]",
                        track.track_id, det.detection_score
                    ));
                }
                if !det.flow_magnitude.is_finite() || det.flow_magnitude < 0.0 {
                    return violation(format!(
                        "track {}: negative or non-finite flow magnitude",
                        track.track_id
                    ));
                }
                check_bbox(&det.bbox)?;
            }
        }
        for (&(track_id, frame), pose) in &self.poses {
            if pose.frame_index != frame {
                return violation(format!(
                    "pose key frame {} disagrees with pose frame_index {}",
                    frame, pose.frame_index
                ));
            }
            let track = self
                .track(track_id)
                .ok_or_else(|| ParseError::SchemaViolation(format!(
                    "pose references unknown track {track_id}"
                )))?;
            if !track.detections.iter().any(|d| d.frame_index == frame) {
                return violation(format!(
                    "pose at (track {track_id}, frame {frame}) has no matching detection"
                ));
            }
            check_bbox(&pose.bbox)?;
            for kp in &pose.joints {
                if !kp.x.is_finite() || !kp.y.is_finite() {
                    return violation("non-finite joint coordinate".into());
                }
                if !kp.confidence.is_finite() || !(0.0..=1.0).contains(&kp.confidence) {
                    return violation(format!(
                        "joint confidence {} outside [0,1]",
                        kp.confidence
                    ));
                }
            }
        }
        Ok(())
    }
}

fn check_bbox(bbox: &BBox) -> Result<(), ParseError> {
    let vals = [bbox.left, bbox.top, bbox.width, bbox.height];
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(ParseError::SchemaViolation("non-finite bbox value".into()));
    }
    if bbox.width <= 0.0 || bbox.height <= 0.0 {
        return Err(ParseError::SchemaViolation(
            "bbox width and height must be positive".into(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// On-disk schema
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceDoc {
    sequence_id: String,
    num_frames: u32,
    width: u32,
    height: u32,
    fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<u32>,
    tracks: Vec<TrackDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackDoc {
    track_id: u32,
    detections: Vec<DetectionDoc>,
    poses: Vec<PoseDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionDoc {
    frame: u32,
    bbox: [f64; 4],
    score: f64,
    flow_magnitude: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseDoc {
    frame: u32,
    joints: Vec<[f64; 3]>,
    bbox: [f64; 4],
}

fn bbox_from_doc(b: [f64; 4]) -> BBox {
    BBox {
        left: b[0],
        top: b[1],
        width: b[2],
        height: b[3],
    }
}

fn bbox_to_doc(b: &BBox) -> [f64; 4] {
    [b.left, b.top, b.width, b.height]
}

/// Parse a sequence document, enforcing every [`SequenceRecord`] invariant.
pub fn parse_pose_tracks(document: &str) -> Result<SequenceRecord, ParseError> {
    let doc: SequenceDoc = serde_json::from_str(document)
        .map_err(|e| ParseError::SchemaViolation(e.to_string()))?;
    let mut tracks = Vec::with_capacity(doc.tracks.len());
    let mut poses = BTreeMap::new();
    for t in doc.tracks {
        let detections = t
            .detections
            .iter()
            .map(|d| Detection {
                frame_index: d.frame,
                bbox: bbox_from_doc(d.bbox),
                detection_score: d.score,
                flow_magnitude: d.flow_magnitude,
            })
            .collect();
        for p in t.poses {
            if p.joints.len() != JOINT_COUNT {
                return Err(ParseError::SchemaViolation(format!(
                    "track {}: pose at frame {} has {} joints, expected {}",
                    t.track_id,
                    p.frame,
                    p.joints.len(),
                    JOINT_COUNT
                )));
            }
            let mut joints = [Keypoint2D {
                x: 0.0,
                y: 0.0,
                confidence: 0.0,
            }; JOINT_COUNT];
            for (slot, j) in joints.iter_mut().zip(p.joints.iter()) {
                *slot = Keypoint2D {
                    x: j[0],
                    y: j[1],
                    confidence: j[2],
                };
            }
            let pose = PoseFrame {
                frame_index: p.frame,
                joints,
                bbox: bbox_from_doc(p.bbox),
            };
            if poses.insert((t.track_id, p.frame), pose).is_some() {
                return Err(ParseError::DuplicateFrame {
                    track_id: t.track_id,
                    frame: p.frame,
                });
            }
        }
        tracks.push(Track {
            track_id: t.track_id,
            detections,
        });
    }
    SequenceRecord::new(
        doc.sequence_id,
        doc.num_frames,
        doc.width,
        doc.height,
        doc.fps,
        doc.label,
        tracks,
        poses,
    )
}

/// Serialize a record back to its canonical document form.
pub fn serialize_sequence(rec: &SequenceRecord) -> String {
    let tracks = rec
        .tracks
        .iter()
        .map(|t| TrackDoc {
            track_id: t.track_id,
            detections: t
                .detections
                .iter()
                .map(|d| DetectionDoc {
                    frame: d.frame_index,
                    bbox: bbox_to_doc(&d.bbox),
                    score: d.detection_score,
                    flow_magnitude: d.flow_magnitude,
                })
                .collect(),
            poses: rec
                .track_poses(t.track_id)
                .iter()
                .map(|p| PoseDoc {
                    frame: p.frame_index,
                    joints: p
                        .joints
                        .iter()
                        .map(|j| [j.x, j.y, j.confidence])
                        .collect(),
                    bbox: bbox_to_doc(&p.bbox),
                })
                .collect(),
        })
        .collect();
    let doc = SequenceDoc {
        sequence_id: rec.sequence_id.clone(),
        num_frames: rec.num_frames,
        width: rec.width,
        height: rec.height,
        fps: rec.fps,
        label: rec.label,
        tracks,
    };
    serde_json::to_string_pretty(&doc).expect("sequence document serialization")
}

// ---------------------------------------------------------------------------
// Validation against frame data
// ---------------------------------------------------------------------------

/// A consistency finding from [`validate_sequence`]. Violations are data,
/// not errors: warnings tolerate downstream clamping, fatal ones do not.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Box pokes past the frame edge but still overlaps it; downstream
    /// consumers clamp it.
    BBoxOutOfBounds {
        track_id: u32,
        frame: u32,
    },
    /// Box has no overlap with the frame at all.
    BBoxOutsideFrame {
        track_id: u32,
        frame: u32,
    },
    FrameCountMismatch {
        expected: u32,
        actual: u32,
    },
    FrameSizeMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },
}

impl Violation {
    pub fn is_fatal(&self) -> bool {
        !matches!(self, Violation::BBoxOutOfBounds { .. })
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::BBoxOutOfBounds { track_id, frame } => write!(
                f,
                "bbox out of bounds (clamped downstream): track {track_id}, frame {frame}"
            ),
            Violation::BBoxOutsideFrame { track_id, frame } => {
                write!(f, "bbox fully outside frame: track {track_id}, frame {frame}")
            }
            Violation::FrameCountMismatch { expected, actual } => {
                write!(f, "frame count mismatch: expected {expected}, found {actual}")
            }
            Violation::FrameSizeMismatch { expected, actual } => write!(
                f,
                "frame size mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, actual.0, actual.1
            ),
        }
    }
}

/// Check geometry consistency between a record and (optionally) its frames.
/// Returns an empty list iff every downstream precondition holds.
pub fn validate_sequence(rec: &SequenceRecord, frames: Option<&FrameStore>) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut check = |track_id: u32, frame: u32, bbox: &BBox| {
        if bbox.fully_outside(rec.width, rec.height) {
            violations.push(Violation::BBoxOutsideFrame { track_id, frame });
        } else if !bbox.inside(rec.width, rec.height) {
            violations.push(Violation::BBoxOutOfBounds { track_id, frame });
        }
    };
    for track in &rec.tracks {
        for det in &track.detections {
            check(track.track_id, det.frame_index, &det.bbox);
        }
    }
    for (&(track_id, frame), pose) in rec.poses() {
        check(track_id, frame, &pose.bbox);
    }
    if let Some(store) = frames {
        if store.len() as u32 != rec.num_frames {
            violations.push(Violation::FrameCountMismatch {
                expected: rec.num_frames,
                actual: store.len() as u32,
            });
        }
        if store.len() > 0 && (store.width(), store.height()) != (rec.width, rec.height) {
            violations.push(Violation::FrameSizeMismatch {
                expected: (rec.width, rec.height),
                actual: (store.width(), store.height()),
            });
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn minimal_doc() -> String {
        let joints: Vec<String> = (0..JOINT_COUNT)
            .map(|i| format!("[{}.0, {}.0, 0.9]", 10 + i, 20 + i))
            .collect();
        let pose = |frame: u32| {
            format!(
                "{{\"frame\": {frame}, \"joints\": [{}], \"bbox\": [5.0, 5.0, 40.0, 60.0]}}",
                joints.join(", ")
            )
        };
        format!(
            r#"{{
  "sequence_id": "seq-0",
  "num_frames": 2,
  "width": 100,
  "height": 100,
  "fps": 25.0,
  "label": 1,
  "tracks": [
    {{
      "track_id": 1,
      "detections": [
        {{"frame": 0, "bbox": [5.0, 5.0, 40.0, 60.0], "score": 1.0, "flow_magnitude": 2.5}},
        {{"frame": 1, "bbox": [6.0, 5.0, 40.0, 60.0], "score": 0.9, "flow_magnitude": 2.0}}
      ],
      "poses": [{}, {}]
    }}
  ]
}}"#,
            pose(0),
            pose(1)
        )
    }

    #[test]
    fn parses_minimal_document() {
        let rec = parse_pose_tracks(&minimal_doc()).unwrap();
        assert_eq!(rec.num_frames, 2);
        assert_eq!(rec.tracks.len(), 1);
        assert_eq!(rec.label, Some(1));
        assert_eq!(rec.track_poses(1).len(), 2);
    }

    #[test]
    fn wrong_joint_count_is_schema_violation() {
        let mut doc: serde_json::Value = serde_json::from_str(&minimal_doc()).unwrap();
        doc["tracks"][0]["poses"][0]["joints"]
            .as_array_mut()
            .unwrap()
            .pop();
        match parse_pose_tracks(&doc.to_string()) {
            Err(ParseError::SchemaViolation(msg)) => {
                assert!(msg.contains("16 joints"), "{msg}");
            }
            other => panic!("expected SchemaViolation, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_detection_frame_is_rejected() {
        let doc = minimal_doc().replacen("\"frame\": 1, \"bbox\": [6.0", "\"frame\": 0, \"bbox\": [6.0", 1);
        assert!(matches!(
            parse_pose_tracks(&doc),
            Err(ParseError::DuplicateFrame { track_id: 1, frame: 0 })
        ));
    }

    #[test]
    fn non_finite_number_is_schema_violation() {
        let doc = minimal_doc().replacen("2.5", "\"nan\"", 1);
        assert!(matches!(
            parse_pose_tracks(&doc),
            Err(ParseError::SchemaViolation(_))
        ));
    }

    #[test]
    fn serialize_then_parse_is_identity() {
        let rec = parse_pose_tracks(&minimal_doc()).unwrap();
        let text = serialize_sequence(&rec);
        let rec2 = parse_pose_tracks(&text).unwrap();
        assert_eq!(rec, rec2);
        // Canonical form is a fixpoint of parse/serialize.
        assert_eq!(text, serialize_sequence(&rec2));
    }

    #[test]
    fn consistent_record_validates_clean() {
        let rec = parse_pose_tracks(&minimal_doc()).unwrap();
        assert!(validate_sequence(&rec, None).is_empty());
    }

    #[test]
    fn bbox_past_right_edge_is_flagged_not_fatal() {
        let doc = minimal_doc().replacen("[6.0, 5.0, 40.0, 60.0]", "[90.0, 5.0, 60.0, 60.0]", 1);
        let rec = parse_pose_tracks(&doc).unwrap();
        let violations = validate_sequence(&rec, None);
        assert_eq!(
            violations,
            vec![Violation::BBoxOutOfBounds { track_id: 1, frame: 1 }]
        );
        assert!(!violations[0].is_fatal());
    }

    #[test]
    fn fully_outside_bbox_is_fatal() {
        let doc = minimal_doc().replacen("[6.0, 5.0, 40.0, 60.0]", "[150.0, 5.0, 40.0, 60.0]", 1);
        let rec = parse_pose_tracks(&doc).unwrap();
        let violations = validate_sequence(&rec, None);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].is_fatal());
    }

    #[test]
    fn frame_count_mismatch_is_reported() {
        let rec = parse_pose_tracks(&minimal_doc()).unwrap();
        let store = FrameStore::new(vec![GrayImage::new(100, 100)]).unwrap();
        let violations = validate_sequence(&rec, Some(&store));
        assert_eq!(
            violations,
            vec![Violation::FrameCountMismatch { expected: 2, actual: 1 }]
        );
    }

    #[test]
    fn pose_without_detection_is_rejected() {
        // Pose at frame 1 in a track whose detections stop at frame 0.
        let mut doc: serde_json::Value = serde_json::from_str(&minimal_doc()).unwrap();
        doc["tracks"][0]["detections"]
            .as_array_mut()
            .unwrap()
            .pop();
        match parse_pose_tracks(&doc.to_string()) {
            Err(ParseError::SchemaViolation(msg)) => {
                assert!(msg.contains("no matching detection"), "{msg}")
            }
            Ok(_) => panic!("expected schema violation"),
            Err(e) => panic!("unexpected error {e:?}"),
        }
    }

    #[test]
    fn detections_stay_frame_ordered_after_parse() {
        let rec = parse_pose_tracks(&minimal_doc()).unwrap();
        for track in &rec.tracks {
            for pair in track.detections.windows(2) {
                assert!(pair[0].frame_index < pair[1].frame_index);
            }
        }
    }

    mod roundtrip {
        use super::super::*;
        use proptest::prelude::*;

        prop_compose! {
            fn arb_bbox()(l in 0.0f64..20.0, t in 0.0f64..20.0,
                          w in 1.0f64..30.0, h in 1.0f64..30.0) -> BBox {
                BBox { left: l, top: t, width: w, height: h }
            }
        }

        prop_compose! {
            fn arb_joints()(coords in prop::collection::vec(
                (-50.0f64..150.0, -50.0f64..150.0, 0.0f64..1.0), JOINT_COUNT))
                -> [Keypoint2D; JOINT_COUNT]
            {
                let mut joints = [Keypoint2D { x: 0.0, y: 0.0, confidence: 0.0 }; JOINT_COUNT];
                for (j, (x, y, c)) in joints.iter_mut().zip(coords) {
                    *j = Keypoint2D { x, y, confidence: c };
                }
                joints
            }
        }

        fn arb_record() -> impl Strategy<Value = SequenceRecord> {
            (
                "[a-z]{1,8}",
                2u32..6,
                1usize..4,
                prop::option::of(0u32..5),
                1.0f64..60.0,
            )
                .prop_flat_map(|(id, num_frames, n_tracks, label, fps)| {
                    let track = (
                        prop::collection::vec(
                            (any::<bool>(), arb_bbox(), 0.0f64..1.0, 0.0f64..10.0),
                            num_frames as usize,
                        ),
                        prop::collection::vec(
                            (any::<bool>(), arb_joints(), arb_bbox()),
                            num_frames as usize,
                        ),
                    );
                    (
                        Just(id),
                        Just(num_frames),
                        Just(label),
                        Just(fps),
                        prop::collection::vec(track, n_tracks),
                    )
                })
                .prop_map(|(id, num_frames, label, fps, track_parts)| {
                    let mut tracks = Vec::new();
                    let mut poses = std::collections::BTreeMap::new();
                    for (i, (dets, pose_parts)) in track_parts.into_iter().enumerate() {
                        let track_id = i as u32 + 1;
                        let mut detections = Vec::new();
                        for (frame, (include, bbox, score, flow)) in dets.into_iter().enumerate() {
                            // Frame 0 always present so the track is nonempty.
                            if include || frame == 0 {
                                detections.push(Detection {
                                    frame_index: frame as u32,
                                    bbox,
                                    detection_score: score,
                                    flow_magnitude: flow,
                                });
                            }
                        }
                        for (frame, (include, joints, bbox)) in pose_parts.into_iter().enumerate() {
                            let has_detection =
                                detections.iter().any(|d| d.frame_index == frame as u32);
                            if include && has_detection {
                                poses.insert(
                                    (track_id, frame as u32),
                                    PoseFrame {
                                        frame_index: frame as u32,
                                        joints,
                                        bbox,
                                    },
                                );
                            }
                        }
                        tracks.push(Track {
                            track_id,
                            detections,
                        });
                    }
                    SequenceRecord::new(id, num_frames, 100, 80, fps, label, tracks, poses)
                        .expect("generated records satisfy the invariants")
                })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn parse_inverts_serialize(rec in arb_record()) {
                let text = serialize_sequence(&rec);
                let parsed = parse_pose_tracks(&text).unwrap();
                prop_assert_eq!(&parsed, &rec);
                // Serialization is a canonical fixpoint.
                prop_assert_eq!(serialize_sequence(&parsed), text);
            }
        }
    }
}
