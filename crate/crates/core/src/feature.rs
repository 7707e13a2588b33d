//! Hand and gripper feature vectors.
//!
//! Layout: `[x, y, z, rx, ry, rz, a_1 .. a_F]` with position in meters,
//! orientation as a rotation vector (axis times angle, radians) and one
//! aperture per finger in `[0, 1]` where 0 is fully open.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Number of pose coordinates ahead of the apertures.
pub const POSE_DIM: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub position: [f64; 3],
    pub orientation: [f64; 3],
    pub apertures: Vec<f64>,
}

impl FeatureVector {
    /// Builds a canonical feature vector: apertures clamped to `[0, 1]` and
    /// the rotation vector wrapped to norm at most pi.
    pub fn new(position: [f64; 3], orientation: [f64; 3], apertures: Vec<f64>) -> Self {
        Self {
            position,
            orientation,
            apertures,
        }
        .canonical()
    }

    pub fn dim(&self) -> usize {
        POSE_DIM + self.apertures.len()
    }

    pub fn canonical(mut self) -> Self {
        self.orientation = canonical_rotation(self.orientation);
        for a in &mut self.apertures {
            *a = a.clamp(0.0, 1.0);
        }
        self
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.position);
        v.extend_from_slice(&self.orientation);
        v.extend_from_slice(&self.apertures);
        v
    }

    /// Inverse of [`to_vec`](Self::to_vec); `None` when `v` is shorter than the pose.
    pub fn from_slice(v: &[f64]) -> Option<Self> {
        if v.len() < POSE_DIM {
            return None;
        }
        Some(Self {
            position: [v[0], v[1], v[2]],
            orientation: [v[3], v[4], v[5]],
            apertures: v[POSE_DIM..].to_vec(),
        })
    }
}

/// Wraps a rotation vector so its norm lies in `[0, pi]`, preserving the rotation.
pub fn canonical_rotation(r: [f64; 3]) -> [f64; 3] {
    let angle = norm3(r);
    if angle <= PI || !angle.is_finite() {
        return r;
    }
    let wrapped = (angle + PI).rem_euclid(2.0 * PI) - PI;
    let scale = wrapped / angle;
    [r[0] * scale, r[1] * scale, r[2] * scale]
}

/// Among rotation vectors equivalent to `r` (same axis, angle shifted by
/// multiples of 2 pi, including the flipped axis), returns the one closest to
/// `reference`. Used before Gaussian modeling so that a cluster straddling the
/// angle-pi boundary stays contiguous.
pub fn unwrap_rotation_toward(r: [f64; 3], reference: [f64; 3]) -> [f64; 3] {
    let angle = norm3(r);
    if angle == 0.0 || !angle.is_finite() {
        return r;
    }
    let axis = [r[0] / angle, r[1] / angle, r[2] / angle];
    // Project the reference onto the axis; the best candidate angle is the
    // one nearest that projection.
    let along = axis[0] * reference[0] + axis[1] * reference[1] + axis[2] * reference[2];
    let k = ((along - angle) / (2.0 * PI)).round();
    let shifted = angle + 2.0 * PI * k;
    [axis[0] * shifted, axis[1] * shifted, axis[2] * shifted]
}

fn norm3(r: [f64; 3]) -> f64 {
    (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt()
}

/// Features as they appear on the wire: either the structured hand layout or
/// a flat array in model order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Features {
    Structured(FeatureVector),
    Flat(Vec<f64>),
}

impl Features {
    /// Flat vector in model order; structured input is canonicalized first.
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Features::Structured(f) => f.clone().canonical().to_vec(),
            Features::Flat(v) => v.clone(),
        }
    }
}

impl From<Vec<f64>> for Features {
    fn from(v: Vec<f64>) -> Self {
        Features::Flat(v)
    }
}
