use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::seeding::rng;

use super::basis::{Basis, BasisKind};
use super::kernel::KernelSpec;
use super::measure::InputMeasure;

/// How `E[phi(x) phi(x)^T]` is computed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum GramMethod {
    /// Exact integral; Gaussian kernel bases under Gaussian-mixture measures only.
    ClosedForm,
    /// Monte Carlo average over `n_samples` i.i.d. inputs.
    Empirical { n_samples: usize, seed: u64 },
    /// Tensor midpoint rule with `n_nodes` nodes per coordinate.
    Quadrature { n_nodes: usize },
}

/// Expected Gram matrix `E[G^T G / M]` of a basis under an input measure.
pub fn expected_gram(
    basis: &Basis,
    measure: &InputMeasure,
    method: GramMethod,
) -> Result<DMatrix<f64>> {
    let e = basis.dim();
    if basis.kind() == BasisKind::KlEigen {
        return Ok(DMatrix::identity(e, e));
    }
    measure.validate()?;
    ensure(measure.dim() == basis.input_dim(), || {
        "measure and basis dimensions differ".into()
    })?;
    let gram = match method {
        GramMethod::ClosedForm => closed_form(basis, measure)?,
        GramMethod::Empirical { n_samples, seed } => {
            ensure(n_samples >= 1, || "need at least one sample".into())?;
            let mut r = rng(seed);
            let points = (0..n_samples).map(|_| measure.sample(&mut r));
            weighted_outer(basis, points.map(|p| (p, 1.0 / n_samples as f64)))
        }
        GramMethod::Quadrature { n_nodes } => {
            let q = measure.quadrature(n_nodes).ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "quadrature grid with {n_nodes} nodes per axis is too large"
                ))
            })?;
            weighted_outer(basis, q.points.into_iter().zip(q.weights))
        }
    };
    Ok(gram)
}

fn weighted_outer(basis: &Basis, points: impl Iterator<Item = (Vec<f64>, f64)>) -> DMatrix<f64> {
    let e = basis.dim();
    let mut g = DMatrix::zeros(e, e);
    let mut row = vec![0.0; e];
    for (p, w) in points {
        basis.eval_into(&p, &mut row);
        for i in 0..e {
            let wi = w * row[i];
            for j in i..e {
                g[(i, j)] += wi * row[j];
            }
        }
    }
    g.fill_lower_triangle_with_upper_triangle();
    g
}

/// `E[K(a, x) K(b, x)]` for the one-dimensional kernel `exp(-(x-y)^2 / eta)`
/// and `x ~ N(mu, var)`.
pub fn gaussian_section_moment(a: f64, b: f64, eta: f64, mu: f64, var: f64) -> f64 {
    let star = eta * (a * a - 2.0 * mu * a + b * b - 2.0 * mu * b + 2.0 * mu * mu)
        + 2.0 * var * (a - b).powi(2);
    eta.sqrt() / (eta + 4.0 * var).sqrt() * (-star / (eta * eta + 4.0 * eta * var)).exp()
}

fn closed_form(basis: &Basis, measure: &InputMeasure) -> Result<DMatrix<f64>> {
    let eta = match basis.kernel() {
        Some(KernelSpec::Gaussian { eta }) => *eta,
        _ => {
            return Err(Error::UnsupportedClosedForm(
                "closed form needs a Gaussian-kernel section or Nystrom basis".into(),
            ))
        }
    };
    let InputMeasure::GaussianMixture {
        weights,
        means,
        variances,
    } = measure
    else {
        return Err(Error::UnsupportedClosedForm(
            "closed form needs a Gaussian-mixture measure".into(),
        ));
    };
    let anchors = basis.anchors().expect("section bases carry anchors");
    let q = anchors.len();
    let mut c = DMatrix::zeros(q, q);
    for (w, (m, v)) in weights.iter().zip(means.iter().zip(variances)) {
        for i in 0..q {
            for j in i..q {
                let h: f64 = (0..m.len())
                    .map(|d| gaussian_section_moment(anchors[i][d], anchors[j][d], eta, m[d], v[d]))
                    .product();
                c[(i, j)] += w * h;
            }
        }
    }
    c.fill_lower_triangle_with_upper_triangle();
    match basis.nystrom_vectors() {
        Some(v) => {
            let mut g = v.transpose() * c * v;
            let sym = (&g + g.transpose()) * 0.5;
            g.copy_from(&sym);
            Ok(g)
        }
        None => Ok(c),
    }
}
