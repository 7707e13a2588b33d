//! Multivariate normal grasp classes and log-space normalization helpers.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intent::Combination;

/// Maximum absolute asymmetry tolerated in a covariance matrix.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// `ln(sum(exp(values)))` without overflow; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Cholesky factorization after checking symmetry.
pub(crate) fn spd_factor(cov: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if !cov.is_square() {
        return Err(Error::NotPositiveDefinite(format!(
            "{what}: covariance is {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let n = cov.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_TOLERANCE || !cov[(i, j)].is_finite() {
                return Err(Error::NotPositiveDefinite(format!(
                    "{what}: entries ({i},{j}) and ({j},{i}) differ"
                )));
            }
        }
    }
    Cholesky::new(cov.clone())
        .ok_or_else(|| Error::NotPositiveDefinite(format!("{what}: Cholesky factorization failed")))
}

pub(crate) fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Smallest eigenvalue of a symmetric matrix.
pub(crate) fn min_eigenvalue(cov: &DMatrix<f64>) -> f64 {
    cov.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// One Gaussian class of a grasp model: the feature distribution of grasps
/// that satisfy a particular task combination.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GaussianClassRepr", into = "GaussianClassRepr")]
pub struct GaussianClass {
    combination: Combination,
    prior: f64,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl PartialEq for GaussianClass {
    fn eq(&self, other: &Self) -> bool {
        self.combination == other.combination
            && self.prior == other.prior
            && self.mean == other.mean
            && self.covariance == other.covariance
    }
}

impl GaussianClass {
    pub fn new(combination: Combination, prior: f64, mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if !(prior.is_finite() && (0.0..=1.0).contains(&prior)) {
            return Err(Error::CorruptModel(format!("prior {prior} outside [0, 1]")));
        }
        if covariance.nrows() != mean.len() {
            return Err(Error::DimensionMismatch {
                context: "covariance rows vs mean length",
                expected: mean.len(),
                actual: covariance.nrows(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::CorruptModel("non-finite mean".into()));
        }
        let chol = spd_factor(&covariance, "class")?;
        let d = mean.len() as f64;
        let log_norm = -0.5 * (d * (2.0 * PI).ln() + log_det(&chol));
        Ok(Self {
            combination,
            prior,
            mean,
            covariance,
            chol,
            log_norm,
        })
    }

    /// Convenience constructor for one-dimensional classes.
    pub fn univariate(combination: Combination, prior: f64, mean: f64, variance: f64) -> Result<Self> {
        Self::new(
            combination,
            prior,
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, variance),
        )
    }

    pub fn combination(&self) -> Combination {
        self.combination
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub(crate) fn with_prior(&self, prior: f64) -> Self {
        Self { prior, ..self.clone() }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "feature vector vs class dimension",
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Natural log of the density at `x`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.log_density_unchecked(x))
    }

    pub(crate) fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_iterator(x.len(), x.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        let z = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        self.log_norm - 0.5 * z.norm_squared()
    }

    /// `grad log N(x) = -Sigma^{-1} (x - mu)`.
    pub(crate) fn log_density_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        -self.chol.solve(&(x - &self.mean))
    }
}

/// Multivariate normal density of a class at `x`.
pub fn class_likelihood(class: &GaussianClass, x: &[f64]) -> Result<f64> {
    Ok(class.log_density(x)?.exp())
}

#[derive(Serialize, Deserialize)]
struct GaussianClassRepr {
    combination: Combination,
    prior: f64,
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

impl TryFrom<GaussianClassRepr> for GaussianClass {
    type Error = Error;

    fn try_from(repr: GaussianClassRepr) -> Result<Self> {
        let d = repr.mean.len();
        if repr.covariance.len() != d || repr.covariance.iter().any(|row| row.len() != d) {
            return Err(Error::CorruptModel(format!("covariance is not {d}x{d}")));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| repr.covariance[i][j]);
        GaussianClass::new(repr.combination, repr.prior, DVector::from_vec(repr.mean), cov).map_err(|e| match e {
            Error::NotPositiveDefinite(msg) => Error::CorruptModel(msg),
            other => other,
        })
    }
}

impl From<GaussianClass> for GaussianClassRepr {
    fn from(class: GaussianClass) -> Self {
        let d = class.dim();
        GaussianClassRepr {
            combination: class.combination,
            prior: class.prior,
            mean: class.mean.iter().copied().collect(),
            covariance: (0..d)
                .map(|i| (0..d).map(|j| class.covariance[(i, j)]).collect())
                .collect(),
        }
    }
}
