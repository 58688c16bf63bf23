use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

use super::eigen::sinusoid;

/// Covariance function of the Gaussian-process prior.
///
/// Multi-dimensional inputs are handled as tensor products: the spline
/// kernel multiplies one-dimensional `min` kernels and the Gaussian kernel
/// factorizes over coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    /// First-order spline (Brownian motion) kernel `prod_i min(x_i, x'_i)`.
    SplineFirstOrder,
    /// `exp(-|x - x'|^2 / eta)`.
    Gaussian { eta: f64 },
    /// One-dimensional kernel defined by its spectrum on the spline
    /// sinusoids: `sum_e lambda_e phi_e(x) phi_e(x')`.
    Spectral { lambdas: Vec<f64> },
}

impl KernelSpec {
    pub fn gaussian(eta: f64) -> Result<Self> {
        ensure(eta > 0.0 && eta.is_finite(), || {
            format!("gaussian length-scale must be positive, got {eta}")
        })?;
        Ok(KernelSpec::Gaussian { eta })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::SplineFirstOrder => Ok(()),
            KernelSpec::Gaussian { eta } => Self::gaussian(*eta).map(|_| ()),
            KernelSpec::Spectral { lambdas } => ensure(
                !lambdas.is_empty() && lambdas.iter().all(|l| *l >= 0.0),
                || "spectral kernel needs a nonempty nonnegative spectrum".into(),
            ),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match self {
            KernelSpec::SplineFirstOrder => x.iter().zip(y).map(|(a, b)| a.min(*b)).product(),
            KernelSpec::Gaussian { eta } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / eta).exp()
            }
            KernelSpec::Spectral { lambdas } => lambdas
                .iter()
                .enumerate()
                .map(|(e, l)| l * sinusoid(e, x[0]) * sinusoid(e, y[0]))
                .sum(),
        }
    }

    /// Kernel matrix `[K(a_i, a_j)]`.
    pub fn matrix(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        let n = points.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval(&points[i], &points[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// Cross-kernel matrix `[K(a_i, b_j)]`.
    pub fn cross(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), b.len(), |i, j| self.eval(&a[i], &b[j]))
    }

    pub fn name(&self) -> String {
        match self {
            KernelSpec::SplineFirstOrder => "spline".into(),
            KernelSpec::Gaussian { eta } => format!("gaussian(eta={eta})"),
            KernelSpec::Spectral { lambdas } => format!("spectral({})", lambdas.len()),
        }
    }
}
