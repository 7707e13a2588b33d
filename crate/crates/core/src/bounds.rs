use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::POSE_DIM;

/// Per-feature box `lower_i <= r_i <= upper_i` on the robot configuration
/// (e.g. a table height as a lower bound on z).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoundsRepr", into = "BoundsRepr")]
pub struct WorkspaceBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

/// `null` stands for an open side (`-inf` below, `+inf` above), since JSON
/// has no infinities.
#[derive(Serialize, Deserialize)]
struct BoundsRepr {
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
}

impl WorkspaceBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                context: "upper bound length",
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        for (index, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::InfeasibleBounds {
                    index,
                    lower: l,
                    upper: u,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(d: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; d],
            upper: vec![f64::INFINITY; d],
        }
    }

    /// Unbounded pose with apertures limited to `[0, 1]`; for `d` below the
    /// pose size everything is unbounded.
    pub fn hand_default(d: usize) -> Self {
        let mut b = Self::unbounded(d);
        if d > POSE_DIM {
            for i in POSE_DIM..d {
                b.lower[i] = 0.0;
                b.upper[i] = 1.0;
            }
        }
        b
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| v.clamp(l, u))
            .collect()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&l, &u))| v >= l - tol && v <= u + tol)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

impl TryFrom<BoundsRepr> for WorkspaceBounds {
    type Error = Error;

    fn try_from(r: BoundsRepr) -> Result<Self> {
        WorkspaceBounds::new(
            r.lower.into_iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect(),
            r.upper.into_iter().map(|v| v.unwrap_or(f64::INFINITY)).collect(),
        )
    }
}

impl From<WorkspaceBounds> for BoundsRepr {
    fn from(b: WorkspaceBounds) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        BoundsRepr {
            lower: b.lower.into_iter().map(finite).collect(),
            upper: b.upper.into_iter().map(finite).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_to_nearest_vertex() {
        let b = WorkspaceBounds::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(b.clamp(&[5.0, -3.0]), vec![1.0, -1.0]);
        assert_eq!(b.clamp(&[0.5, 0.2]), vec![0.5, 0.2]);
        assert!(b.contains(&[1.0 + 1e-12, 0.0], 1e-9));
        assert!(!b.contains(&[1.1, 0.0], 1e-9));
    }

    #[test]
    fn infeasible_bounds_rejected() {
        assert!(matches!(
            WorkspaceBounds::new(vec![0.0, 2.0], vec![1.0, 1.0]),
            Err(Error::InfeasibleBounds { index: 1, .. })
        ));
        assert!(serde_json::from_str::<WorkspaceBounds>(r#"{"lower":[1],"upper":[0]}"#).is_err());
    }

    #[test]
    fn hand_default_limits_apertures() {
        let b = WorkspaceBounds::hand_default(8);
        assert_eq!(
            b.clamp(&[9.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.5, -0.5]),
            vec![9.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]
        );
    }

    #[test]
    fn open_sides_round_trip_as_null() {
        let b = WorkspaceBounds::hand_default(7);
        let json = serde_json::to_string(&b).unwrap();
        assert!(json.starts_with(r#"{"lower":[null,null"#));
        assert_eq!(serde_json::from_str::<WorkspaceBounds>(&json).unwrap(), b);
    }
}
