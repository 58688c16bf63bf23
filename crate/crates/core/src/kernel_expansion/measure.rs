use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::seeding::Rng;

/// Probability measure the input locations are drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputMeasure {
    /// Uniform on the hyper-rectangle `[lower, upper]`.
    Uniform { lower: Vec<f64>, upper: Vec<f64> },
    /// Mixture of axis-aligned Gaussians (per-component, per-coordinate variances).
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
    },
}

/// How a batch of points is drawn from the measure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Iid,
    /// Latin-hypercube draws for uniform measures (each point still has the
    /// uniform marginal); mixtures fall back to i.i.d.
    #[default]
    Stratified,
}

/// Weighted node set approximating integrals against the measure.
#[derive(Clone, Debug)]
pub struct Quadrature {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Largest tensor grid built before refusing (callers fall back to Monte Carlo).
pub const MAX_QUADRATURE_NODES: usize = 1_000_000;

impl InputMeasure {
    pub fn unit_interval() -> Self {
        Self::unit_cube(1)
    }

    pub fn unit_cube(d: usize) -> Self {
        InputMeasure::Uniform {
            lower: vec![0.0; d],
            upper: vec![1.0; d],
        }
    }

    pub fn gaussian(mean: f64, variance: f64) -> Self {
        InputMeasure::GaussianMixture {
            weights: vec![1.0],
            means: vec![vec![mean]],
            variances: vec![vec![variance]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InputMeasure::Uniform { lower, upper } => {
                ensure(!lower.is_empty() && lower.len() == upper.len(), || {
                    "uniform bounds must be nonempty and of equal length".into()
                })?;
                ensure(lower.iter().zip(upper).all(|(l, u)| l < u), || {
                    "uniform lower bounds must be strictly below upper bounds".into()
                })
            }
            InputMeasure::GaussianMixture {
                weights,
                means,
                variances,
            } => {
                ensure(!weights.is_empty(), || {
                    "mixture needs at least one component".into()
                })?;
                ensure(
                    weights.len() == means.len() && weights.len() == variances.len(),
                    || "mixture weights, means and variances differ in length".into(),
                )?;
                ensure(weights.iter().all(|w| *w >= 0.0), || {
                    "mixture weights must be nonnegative".into()
                })?;
                let total: f64 = weights.iter().sum();
                ensure((total - 1.0).abs() <= 1e-12, || {
                    format!("mixture weights sum to {total}, not 1")
                })?;
                let d = means[0].len();
                ensure(
                    d > 0
                        && means.iter().all(|m| m.len() == d)
                        && variances.iter().all(|v| v.len() == d),
                    || "mixture components have inconsistent dimension".into(),
                )?;
                ensure(variances.iter().flatten().all(|v| *v > 0.0), || {
                    "mixture variances must be positive".into()
                })
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            InputMeasure::Uniform { lower, .. } => lower.len(),
            InputMeasure::GaussianMixture { means, .. } => means[0].len(),
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        match self {
            InputMeasure::Uniform { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| l + (u - l) * rng.random::<f64>())
                .collect(),
            InputMeasure::GaussianMixture {
                weights,
                means,
                variances,
            } => {
                let c = pick_component(weights, rng.random::<f64>());
                means[c]
                    .iter()
                    .zip(&variances[c])
                    .map(|(m, v)| {
                        let n: f64 = StandardNormal.sample(rng);
                        m + v.sqrt() * n
                    })
                    .collect()
            }
        }
    }

    pub fn sample_n(&self, n: usize, sampling: Sampling, rng: &mut Rng) -> Vec<Vec<f64>> {
        match (sampling, self) {
            (Sampling::Stratified, InputMeasure::Uniform { lower, upper }) => {
                let d = lower.len();
                let mut pts = vec![vec![0.0; d]; n];
                for j in 0..d {
                    let mut strata: Vec<usize> = (0..n).collect();
                    // Fisher-Yates so coordinates are paired at random across strata.
                    for i in (1..n).rev() {
                        let k = rng.random_range(0..=i);
                        strata.swap(i, k);
                    }
                    for (p, s) in pts.iter_mut().zip(&strata) {
                        let u = (*s as f64 + rng.random::<f64>()) / n as f64;
                        p[j] = lower[j] + (upper[j] - lower[j]) * u;
                    }
                }
                pts
            }
            _ => (0..n).map(|_| self.sample(rng)).collect(),
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        match self {
            InputMeasure::Uniform { lower, upper } => {
                let inside = x
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .all(|(v, (l, u))| *v >= *l && *v <= *u);
                if inside {
                    1.0 / lower.iter().zip(upper).map(|(l, u)| u - l).product::<f64>()
                } else {
                    0.0
                }
            }
            InputMeasure::GaussianMixture {
                weights,
                means,
                variances,
            } => weights
                .iter()
                .zip(means.iter().zip(variances))
                .map(|(w, (m, v))| {
                    w * x
                        .iter()
                        .zip(m.iter().zip(v))
                        .map(|(xi, (mi, vi))| {
                            (-(xi - mi).powi(2) / (2.0 * vi)).exp()
                                / (2.0 * std::f64::consts::PI * vi).sqrt()
                        })
                        .product::<f64>()
                })
                .sum(),
        }
    }

    /// Box containing the support (uniform) or the +-4 sigma region of every
    /// mixture component.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            InputMeasure::Uniform { lower, upper } => (lower.clone(), upper.clone()),
            InputMeasure::GaussianMixture {
                means, variances, ..
            } => {
                let d = means[0].len();
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for (m, v) in means.iter().zip(variances) {
                    for j in 0..d {
                        let s = 4.0 * v[j].sqrt();
                        lo[j] = lo[j].min(m[j] - s);
                        hi[j] = hi[j].max(m[j] + s);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Composite midpoint rule with `n_per_dim` nodes per coordinate (tensor
    /// grid). Gaussian components are integrated over +-8 sigma with
    /// density-proportional weights. Returns `None` when the grid would
    /// exceed [`MAX_QUADRATURE_NODES`].
    pub fn quadrature(&self, n_per_dim: usize) -> Option<Quadrature> {
        let d = self.dim();
        let per_component = n_per_dim.checked_pow(d as u32)?;
        match self {
            InputMeasure::Uniform { lower, upper } => {
                if per_component > MAX_QUADRATURE_NODES || n_per_dim == 0 {
                    return None;
                }
                let axes: Vec<Vec<(f64, f64)>> = (0..d)
                    .map(|j| {
                        let h = (upper[j] - lower[j]) / n_per_dim as f64;
                        (0..n_per_dim)
                            .map(|i| (lower[j] + (i as f64 + 0.5) * h, 1.0 / n_per_dim as f64))
                            .collect()
                    })
                    .collect();
                Some(tensor(&axes, 1.0))
            }
            InputMeasure::GaussianMixture {
                weights,
                means,
                variances,
            } => {
                if per_component * weights.len() > MAX_QUADRATURE_NODES || n_per_dim == 0 {
                    return None;
                }
                let mut out = Quadrature {
                    points: Vec::new(),
                    weights: Vec::new(),
                };
                for (w, (m, v)) in weights.iter().zip(means.iter().zip(variances)) {
                    let axes: Vec<Vec<(f64, f64)>> = (0..d)
                        .map(|j| {
                            let s = v[j].sqrt();
                            let (a, b) = (m[j] - 8.0 * s, m[j] + 8.0 * s);
                            let h = (b - a) / n_per_dim as f64;
                            let raw: Vec<(f64, f64)> = (0..n_per_dim)
                                .map(|i| {
                                    let x = a + (i as f64 + 0.5) * h;
                                    (x, (-(x - m[j]).powi(2) / (2.0 * v[j])).exp())
                                })
                                .collect();
                            let total: f64 = raw.iter().map(|(_, w)| w).sum();
                            raw.into_iter().map(|(x, w)| (x, w / total)).collect()
                        })
                        .collect();
                    let q = tensor(&axes, *w);
                    out.points.extend(q.points);
                    out.weights.extend(q.weights);
                }
                Some(out)
            }
        }
    }
}

fn pick_component(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn tensor(axes: &[Vec<(f64, f64)>], scale: f64) -> Quadrature {
    let mut points = vec![Vec::new()];
    let mut weights = vec![scale];
    for axis in axes {
        let mut np = Vec::with_capacity(points.len() * axis.len());
        let mut nw = Vec::with_capacity(points.len() * axis.len());
        for (p, w) in points.iter().zip(&weights) {
            for (x, wx) in axis {
                let mut q = p.clone();
                q.push(*x);
                np.push(q);
                nw.push(w * wx);
            }
        }
        points = np;
        weights = nw;
    }
    Quadrature { points, weights }
}
