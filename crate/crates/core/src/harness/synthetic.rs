use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::kernel_expansion::{EigenFamily, EigenSystem, InputMeasure, Sampling};
use crate::regression::Dataset;
use crate::seeding::{derive_seed, rng, stream};

/// Random function `f = sum_{e < E_truth} a_e phi_e` with `a_e ~ N(0, lambda_e)`.
#[derive(Clone, Debug)]
pub struct SyntheticTruth {
    eigen: Arc<EigenSystem>,
    coefficients: Vec<f64>,
    seed: u64,
}

/// Draw a truth with `e_truth` coefficients. Spline and exponential systems
/// are extended by their closed forms when `e_truth` exceeds the stored
/// eigenpairs; other families must already hold `e_truth` pairs.
pub fn sample_truth(eigen: &Arc<EigenSystem>, e_truth: usize, seed: u64) -> Result<SyntheticTruth> {
    ensure(e_truth >= 1, || {
        "truth needs at least one coefficient".into()
    })?;
    let eigen = if e_truth <= eigen.e_max() {
        eigen.clone()
    } else {
        match eigen.family() {
            EigenFamily::Spline => Arc::new(EigenSystem::spline(e_truth)?),
            EigenFamily::Exponential { rate } => {
                Arc::new(EigenSystem::exponential(e_truth, *rate)?)
            }
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "truth needs {e_truth} eigenpairs, system holds {}",
                    eigen.e_max()
                )))
            }
        }
    };
    let mut r = rng(seed);
    let coefficients = eigen.lambdas()[..e_truth]
        .iter()
        .map(|l| {
            let z: f64 = StandardNormal.sample(&mut r);
            z * l.sqrt()
        })
        .collect();
    Ok(SyntheticTruth {
        eigen,
        coefficients,
        seed,
    })
}

impl SyntheticTruth {
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn eigensystem(&self) -> &Arc<EigenSystem> {
        &self.eigen
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn e_truth(&self) -> usize {
        self.coefficients.len()
    }

    /// Expected energy of the eigenfunctions beyond the truth's truncation.
    pub fn unresolved_tail(&self) -> f64 {
        self.eigen.tail_sum(self.e_truth())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.e_truth()];
        self.eval_with(x, &mut buf)
    }

    /// Evaluate using a caller-provided buffer of length `e_truth`.
    pub fn eval_with(&self, x: &[f64], buf: &mut [f64]) -> f64 {
        self.eigen.eval_into(x, buf);
        buf.iter().zip(&self.coefficients).map(|(p, a)| p * a).sum()
    }

    /// `int f^2 dmu` of this draw (orthonormal eigenfunctions).
    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(|a| a * a).sum()
    }
}

/// `M` i.i.d. inputs from `measure` and outputs `f(x) + N(0, sigma2)`.
pub fn generate_dataset(
    truth: &SyntheticTruth,
    measure: &InputMeasure,
    m: usize,
    sigma2: f64,
    seed: u64,
) -> Result<Dataset> {
    ensure(m >= 1, || "dataset needs M >= 1".into())?;
    ensure(sigma2 >= 0.0 && sigma2.is_finite(), || {
        format!("noise variance must be nonnegative, got {sigma2}")
    })?;
    let inputs = measure.sample_n(
        m,
        Sampling::Iid,
        &mut rng(derive_seed(seed, stream::INPUTS, 0)),
    );
    let mut noise = rng(derive_seed(seed, stream::NOISE, 0));
    let sd = sigma2.sqrt();
    let mut buf = vec![0.0; truth.e_truth()];
    let outputs = inputs
        .iter()
        .map(|x| {
            let z: f64 = StandardNormal.sample(&mut noise);
            truth.eval_with(x, &mut buf) + sd * z
        })
        .collect();
    Dataset::new(inputs, outputs, sigma2)
}

/// How `int (f - f_hat)^2 dmu` is approximated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MseMethod {
    /// Composite midpoint rule with about `n` nodes in total; falls back to
    /// Monte Carlo with `n` points when no tensor grid is available.
    Quadrature {
        n: usize,
    },
    MonteCarlo {
        n: usize,
        seed: u64,
    },
}

pub fn mse_under_mu(
    predictor: impl Fn(&[f64]) -> f64,
    truth: &SyntheticTruth,
    measure: &InputMeasure,
    method: MseMethod,
) -> Result<f64> {
    let mut buf = vec![0.0; truth.e_truth()];
    let mut sq = |x: &[f64]| (truth.eval_with(x, &mut buf) - predictor(x)).powi(2);
    let monte_carlo = |n: usize, seed: u64, sq: &mut dyn FnMut(&[f64]) -> f64| {
        let mut r = rng(seed);
        (0..n).map(|_| sq(&measure.sample(&mut r))).sum::<f64>() / n as f64
    };
    match method {
        MseMethod::Quadrature { n } => {
            ensure(n >= 1, || "quadrature needs at least one node".into())?;
            let per_dim = (n as f64).powf(1.0 / measure.dim() as f64).round().max(1.0) as usize;
            match measure.quadrature(per_dim) {
                Some(q) => Ok(q
                    .points
                    .iter()
                    .zip(&q.weights)
                    .map(|(p, w)| w * sq(p))
                    .sum()),
                None => Ok(monte_carlo(
                    n,
                    derive_seed(truth.seed, stream::INPUTS, n as u64),
                    &mut sq,
                )),
            }
        }
        MseMethod::MonteCarlo { n, seed } => {
            ensure(n >= 1, || "Monte Carlo needs at least one point".into())?;
            Ok(monte_carlo(n, seed, &mut sq))
        }
    }
}

/// Sample mean and its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let se = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, se }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spline() -> Arc<EigenSystem> {
        Arc::new(EigenSystem::spline(50).unwrap())
    }

    #[test]
    fn deterministic_and_extended() {
        let a = sample_truth(&spline(), 200, 9).unwrap();
        let b = sample_truth(&spline(), 200, 9).unwrap();
        assert_eq!(a.coefficients(), b.coefficients());
        assert_eq!(a.e_truth(), 200);
        let numerical = Arc::new(EigenSystem::from_spectrum(vec![1.0, 0.5]).unwrap());
        assert!(sample_truth(&numerical, 3, 0).is_err());
    }

    #[test]
    fn pointwise_variance_matches_kernel_diagonal() {
        let sys = spline();
        let x = [0.37];
        let n = 10_000;
        let vals: Vec<f64> = (0..n)
            .map(|s| sample_truth(&sys, 50, s).unwrap().eval(&x))
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expected: f64 = (0..50)
            .map(|e| sys.lambda(e) * sys.phi(e, &x).powi(2))
            .sum();
        // variance of a sample variance of Gaussians: 2 s^4 / (n - 1)
        let se = (2.0 / (n - 1) as f64).sqrt() * expected;
        assert!((var - expected).abs() < 3.0 * se, "{var} vs {expected}");
    }

    #[test]
    fn mean_energy_matches_spectrum() {
        let sys = spline();
        let energies: Vec<f64> = (0..4000)
            .map(|s| sample_truth(&sys, 50, s).unwrap().energy())
            .collect();
        let m = MeanSe::of(&energies);
        let expected = 0.5 - sys.tail_sum(50);
        assert!((m.mean - expected).abs() < 3.0 * m.se);
    }

    #[test]
    fn noiseless_outputs_and_noise_variance() {
        let truth = sample_truth(&spline(), 50, 1).unwrap();
        let measure = InputMeasure::unit_interval();
        let clean = generate_dataset(&truth, &measure, 100, 0.0, 4).unwrap();
        for (x, y) in clean.inputs.iter().zip(&clean.outputs) {
            assert_eq!(*y, truth.eval(x));
        }
        let noisy = generate_dataset(&truth, &measure, 20_000, 0.04, 4).unwrap();
        assert_eq!(
            noisy.inputs,
            generate_dataset(&truth, &measure, 20_000, 0.04, 4)
                .unwrap()
                .inputs
        );
        let resid: Vec<f64> = noisy
            .inputs
            .iter()
            .zip(&noisy.outputs)
            .map(|(x, y)| (y - truth.eval(x)).powi(2))
            .collect();
        let m = MeanSe::of(&resid);
        assert!((m.mean - 0.04).abs() < 3.0 * m.se);
    }

    #[test]
    fn inputs_pass_kolmogorov_smirnov() {
        let truth = sample_truth(&spline(), 5, 1).unwrap();
        let data = generate_dataset(&truth, &InputMeasure::unit_interval(), 2000, 0.0, 11).unwrap();
        let mut xs: Vec<f64> = data.inputs.iter().map(|x| x[0]).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
            .fold(0.0, f64::max);
        // 1% critical value of the one-sample KS statistic
        assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn mse_methods() {
        let truth = sample_truth(&spline(), 50, 2).unwrap();
        let measure = InputMeasure::unit_interval();
        let zero = mse_under_mu(
            |x| truth.eval(x),
            &truth,
            &measure,
            MseMethod::Quadrature { n: 100 },
        )
        .unwrap();
        assert_eq!(zero, 0.0);
        let quad = mse_under_mu(
            |_| 0.0,
            &truth,
            &measure,
            MseMethod::Quadrature { n: 10_000 },
        )
        .unwrap();
        assert_relative_eq!(quad, truth.energy(), max_relative = 1e-4);
        let n = 1_000_000;
        let mc = mse_under_mu(
            |_| 0.0,
            &truth,
            &measure,
            MseMethod::MonteCarlo { n, seed: 5 },
        )
        .unwrap();
        // crude bound on the MC standard error: sup f^2 / sqrt(n)
        let sup = (0..1000)
            .map(|i| truth.eval(&[i as f64 / 1000.0]).powi(2))
            .fold(0.0, f64::max);
        assert!((mc - quad).abs() < 3.0 * sup / (n as f64).sqrt());
    }
}
