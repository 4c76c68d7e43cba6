//! Hip-referenced relative positioning and scale-invariant polar encoding
//! of poses into fixed-length feature vectors.
//!
//! Each joint is re-expressed relative to the mid-hip point, projected to
//! polar coordinates (radius normalized by the pose's largest radius, angle
//! measured y-up), and flattened to a 34-dimensional vector with every entry
//! in [0, 1]. The encoding is invariant to uniform scaling and translation.

use crate::pose_data::{BBox, PoseFrame, JOINT_COUNT, LEFT_HIP, RIGHT_HIP};

/// Joints with confidence below this inherit the pole position (r=0, angle=0).
pub const MIN_JOINT_CONFIDENCE: f64 = 0.05;

/// Flat feature width: (radius, angle/2pi) per joint.
pub const POSE_VECTOR_DIM: usize = 2 * JOINT_COUNT;

/// A joint relative to the mid-hip reference point, image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeJoint {
    pub dx: f64,
    pub dy: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarJoint {
    /// Radius normalized by the pose's maximum joint radius, in [0, 1].
    pub radius: f64,
    /// Angle in [0, 2pi), measured counterclockwise from +x with y up.
    pub angle: f64,
}

/// A full pose in normalized polar form, with its source location.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarPose {
    pub joints: [PolarJoint; JOINT_COUNT],
    pub frame_index: u32,
    pub bbox: BBox,
}

/// Flat 34-dimensional feature vector, entries in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PoseVector(pub [f64; POSE_VECTOR_DIM]);

impl PoseVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn from_slice(values: &[f64]) -> Option<Self> {
        (values.len() == POSE_VECTOR_DIM).then(|| {
            let mut arr = [0.0; POSE_VECTOR_DIM];
            arr.copy_from_slice(values);
            PoseVector(arr)
        })
    }
}

/// Subtract the mid-hip reference point (midpoint of joints 11 and 12)
/// from every joint.
pub fn center_on_reference(pose: &PoseFrame) -> [RelativeJoint; JOINT_COUNT] {
    let lh = pose.joints[LEFT_HIP];
    let rh = pose.joints[RIGHT_HIP];
    let ref_x = (lh.x + rh.x) / 2.0;
    let ref_y = (lh.y + rh.y) / 2.0;
    let mut out = [RelativeJoint {
        dx: 0.0,
        dy: 0.0,
        confidence: 0.0,
    }; JOINT_COUNT];
    for (slot, j) in out.iter_mut().zip(pose.joints.iter()) {
        *slot = RelativeJoint {
            dx: j.x - ref_x,
            dy: j.y - ref_y,
            confidence: j.confidence,
        };
    }
    out
}

/// Project centered joints onto polar coordinates about the mid-hip pole.
///
/// Radii are divided by the pose's maximum joint radius (0 if the pose is
/// degenerate), angles use `atan2(-dy, dx)` so they read y-up, mapped to
/// [0, 2pi). Low-confidence joints collapse to the pole.
pub fn to_polar(
    relative: &[RelativeJoint; JOINT_COUNT],
    frame_index: u32,
    bbox: BBox,
) -> PolarPose {
    let mut norms = [0.0f64; JOINT_COUNT];
    for (n, j) in norms.iter_mut().zip(relative.iter()) {
        if j.confidence >= MIN_JOINT_CONFIDENCE {
            *n = j.dx.hypot(j.dy);
        }
    }
    let max_norm = norms.iter().cloned().fold(0.0f64, f64::max);
    let mut joints = [PolarJoint {
        radius: 0.0,
        angle: 0.0,
    }; JOINT_COUNT];
    for i in 0..JOINT_COUNT {
        if max_norm == 0.0 || norms[i] == 0.0 {
            continue;
        }
        let radius = norms[i] / max_norm;
        let mut angle = (-relative[i].dy).atan2(relative[i].dx);
        if angle < 0.0 {
            angle += 2.0 * std::f64::consts::PI;
        }
        if angle >= 2.0 * std::f64::consts::PI {
            angle = 0.0;
        }
        joints[i] = PolarJoint { radius, angle };
    }
    PolarPose {
        joints,
        frame_index,
        bbox,
    }
}

/// Flatten a polar pose to `(r, angle/2pi)` per joint, COCO order.
pub fn pose_vector(pose: &PolarPose) -> PoseVector {
    let mut v = [0.0f64; POSE_VECTOR_DIM];
    for (i, j) in pose.joints.iter().enumerate() {
        v[2 * i] = j.radius;
        v[2 * i + 1] = j.angle / (2.0 * std::f64::consts::PI);
    }
    PoseVector(v)
}

/// Full polar encoding of one pose frame.
pub fn encode_pose(pose: &PoseFrame) -> PoseVector {
    pose_vector(&to_polar(
        &center_on_reference(pose),
        pose.frame_index,
        pose.bbox,
    ))
}

/// Cartesian variant used by the encoding ablation: centered coordinates
/// divided by the maximum joint radius, affinely mapped into [0, 1]
/// (scale-invariant like the polar form, but without the angular split).
pub fn encode_pose_cartesian(pose: &PoseFrame) -> PoseVector {
    let relative = center_on_reference(pose);
    let mut norms = [0.0f64; JOINT_COUNT];
    for (n, j) in norms.iter_mut().zip(relative.iter()) {
        if j.confidence >= MIN_JOINT_CONFIDENCE {
            *n = j.dx.hypot(j.dy);
        }
    }
    let max_norm = norms.iter().cloned().fold(0.0f64, f64::max);
    let mut v = [0.5f64; POSE_VECTOR_DIM];
    if max_norm > 0.0 {
        for (i, j) in relative.iter().enumerate() {
            if j.confidence >= MIN_JOINT_CONFIDENCE {
                v[2 * i] = (j.dx / max_norm + 1.0) / 2.0;
                v[2 * i + 1] = (j.dy / max_norm + 1.0) / 2.0;
            }
        }
    }
    PoseVector(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose_data::Keypoint2D;
    use proptest::prelude::*;

    fn pose_from_points(points: [(f64, f64); JOINT_COUNT]) -> PoseFrame {
        let mut joints = [Keypoint2D {
            x: 0.0,
            y: 0.0,
            confidence: 1.0,
        }; JOINT_COUNT];
        for (j, &(x, y)) in joints.iter_mut().zip(points.iter()) {
            j.x = x;
            j.y = y;
        }
        PoseFrame {
            frame_index: 0,
            joints,
            bbox: BBox {
                left: 0.0,
                top: 0.0,
                width: 10.0,
                height: 10.0,
            },
        }
    }

    fn sample_points() -> [(f64, f64); JOINT_COUNT] {
        let mut pts = [(0.0, 0.0); JOINT_COUNT];
        for (i, p) in pts.iter_mut().enumerate() {
            let a = i as f64 * 0.7;
            *p = (15.0 + 6.0 * a.cos(), 10.0 + 4.0 * a.sin());
        }
        pts
    }

    #[test]
    fn coincident_pose_centers_to_zero() {
        let pose = pose_from_points([(5.0, 5.0); JOINT_COUNT]);
        let rel = center_on_reference(&pose);
        assert!(rel.iter().all(|j| j.dx == 0.0 && j.dy == 0.0));
    }

    #[test]
    fn translation_cancels_in_centering() {
        let pose = pose_from_points(sample_points());
        let mut shifted = pose.clone();
        for j in shifted.joints.iter_mut() {
            j.x += 12.5;
            j.y -= 80.25;
        }
        let a = center_on_reference(&pose);
        let b = center_on_reference(&shifted);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x.dx - y.dx).abs() < 1e-9 && (x.dy - y.dy).abs() < 1e-9);
        }
    }

    #[test]
    fn reference_is_hip_midpoint() {
        let mut pts = [(15.0, 10.0); JOINT_COUNT];
        pts[LEFT_HIP] = (10.0, 10.0);
        pts[RIGHT_HIP] = (20.0, 10.0);
        pts[0] = (15.0, 0.0); // nose
        let rel = center_on_reference(&pose_from_points(pts));
        assert_eq!((rel[0].dx, rel[0].dy), (0.0, -10.0));
    }

    #[test]
    fn unit_vector_along_x_maps_to_angle_zero() {
        let mut rel = [RelativeJoint {
            dx: 0.0,
            dy: 0.0,
            confidence: 1.0,
        }; JOINT_COUNT];
        rel[0].dx = 1.0;
        let polar = to_polar(
            &rel,
            0,
            BBox {
                left: 0.0,
                top: 0.0,
                width: 1.0,
                height: 1.0,
            },
        );
        assert_eq!(polar.joints[0].radius, 1.0);
        assert_eq!(polar.joints[0].angle, 0.0);
        // Degenerate joints stay at the pole by convention.
        assert_eq!(polar.joints[1].radius, 0.0);
        assert_eq!(polar.joints[1].angle, 0.0);
    }

    #[test]
    fn upward_image_direction_reads_as_positive_angle() {
        let mut rel = [RelativeJoint {
            dx: 0.0,
            dy: 0.0,
            confidence: 1.0,
        }; JOINT_COUNT];
        rel[0].dy = -10.0; // up in image coordinates
        let polar = to_polar(
            &rel,
            0,
            BBox {
                left: 0.0,
                top: 0.0,
                width: 1.0,
                height: 1.0,
            },
        );
        assert!((polar.joints[0].angle - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn max_radius_is_exactly_one_unless_degenerate() {
        let polar = to_polar(
            &center_on_reference(&pose_from_points(sample_points())),
            0,
            BBox {
                left: 0.0,
                top: 0.0,
                width: 1.0,
                height: 1.0,
            },
        );
        let max = polar
            .joints
            .iter()
            .map(|j| j.radius)
            .fold(0.0f64, f64::max);
        assert_eq!(max, 1.0);
    }

    #[test]
    fn zero_pose_flattens_to_zeros() {
        let v = encode_pose(&pose_from_points([(3.0, 3.0); JOINT_COUNT]));
        assert!(v.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn angle_pi_flattens_to_half() {
        let mut rel = [RelativeJoint {
            dx: 0.0,
            dy: 0.0,
            confidence: 1.0,
        }; JOINT_COUNT];
        rel[3].dx = -2.0; // angle pi at joint 3
        let v = pose_vector(&to_polar(
            &rel,
            0,
            BBox {
                left: 0.0,
                top: 0.0,
                width: 1.0,
                height: 1.0,
            },
        ));
        assert_eq!(v.0[6], 1.0);
        assert!((v.0[7] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn low_confidence_joints_inherit_the_pole() {
        let mut pose = pose_from_points(sample_points());
        pose.joints[9].confidence = 0.01;
        let v = encode_pose(&pose);
        assert_eq!(v.0[18], 0.0);
        assert_eq!(v.0[19], 0.0);
    }

    #[test]
    fn encoding_is_invariant_to_scaling_by_three() {
        let pose = pose_from_points(sample_points());
        let mut scaled = pose.clone();
        for j in scaled.joints.iter_mut() {
            j.x *= 3.0;
            j.y *= 3.0;
        }
        let a = encode_pose(&pose);
        let b = encode_pose(&scaled);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn encoding_invariant_under_similarity_transforms(
            scale in prop::sample::select(vec![0.1f64, 0.37, 1.0, 7.3, 41.0]),
            tx in -500.0f64..500.0,
            ty in -500.0f64..500.0,
            jitter in prop::collection::vec(-30.0f64..30.0, 2 * JOINT_COUNT),
        ) {
            let mut pts = sample_points();
            for (i, p) in pts.iter_mut().enumerate() {
                p.0 += jitter[2 * i];
                p.1 += jitter[2 * i + 1];
            }
            let pose = pose_from_points(pts);
            let mut transformed = pose.clone();
            for j in transformed.joints.iter_mut() {
                j.x = j.x * scale + tx;
                j.y = j.y * scale + ty;
            }
            let a = encode_pose(&pose);
            let b = encode_pose(&transformed);
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn all_entries_stay_in_unit_interval(
            coords in prop::collection::vec(-100.0f64..100.0, 2 * JOINT_COUNT),
        ) {
            let mut pts = [(0.0, 0.0); JOINT_COUNT];
            for (i, p) in pts.iter_mut().enumerate() {
                *p = (coords[2 * i], coords[2 * i + 1]);
            }
            let v = encode_pose(&pose_from_points(pts));
            for &x in v.as_slice() {
                prop_assert!((0.0..=1.0).contains(&x));
            }
            let c = encode_pose_cartesian(&pose_from_points(pts));
            for &x in c.as_slice() {
                prop_assert!((0.0..=1.0).contains(&x));
            }
        }
    }
}
