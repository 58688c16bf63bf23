//! Sufficient statistics and the MAP, A and B estimators.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::kernel_expansion::{Basis, KernelSpec};
use crate::linalg::{leading, leading_vec, pad, SpdFactor};

/// Noisy scalar measurements `y_m = f(x_m) + noise`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
    /// Measurement-noise variance. Zero is accepted for noise-free checks.
    pub noise_variance: f64,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, outputs: Vec<f64>, noise_variance: f64) -> Result<Self> {
        ensure(!inputs.is_empty(), || "dataset is empty".into())?;
        ensure(inputs.len() == outputs.len(), || {
            format!("{} inputs but {} outputs", inputs.len(), outputs.len())
        })?;
        let d = inputs[0].len();
        ensure(d >= 1 && inputs.iter().all(|x| x.len() == d), || {
            "inputs must share a positive dimension".into()
        })?;
        ensure(
            inputs
                .iter()
                .flatten()
                .chain(&outputs)
                .all(|v| v.is_finite()),
            || "dataset contains non-finite values".into(),
        )?;
        ensure(noise_variance >= 0.0 && noise_variance.is_finite(), || {
            format!("noise variance must be nonnegative, got {noise_variance}")
        })?;
        Ok(Self {
            inputs,
            outputs,
            noise_variance,
        })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    /// Read `x_1..x_d, y` columns from CSV with a header row.
    pub fn read_csv<R: std::io::Read>(reader: R, noise_variance: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let width = rdr.headers()?.len();
        ensure(width >= 2, || {
            "dataset CSV needs at least one input column and y".into()
        })?;
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec?;
            if rec.len() != width {
                return Err(Error::Parse {
                    row,
                    message: format!("expected {width} fields, found {}", rec.len()),
                });
            }
            let vals = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    row,
                    message: e.to_string(),
                })?;
            outputs.push(vals[width - 1]);
            inputs.push(vals[..width - 1].to_vec());
        }
        Self::new(inputs, outputs, noise_variance)
    }

    pub fn load_csv(path: &Path, noise_variance: f64) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, noise_variance)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.dim()).map(|i| format!("x_{i}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for (x, y) in self.inputs.iter().zip(&self.outputs) {
            let mut row: Vec<String> = x.iter().map(f64::to_string).collect();
            row.push(y.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    /// Subset of rows by index.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        Self::new(
            idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            idx.iter().map(|&i| self.outputs[i]).collect(),
            self.noise_variance,
        )
    }
}

/// Averaged statistics `V = G^T G / M` and `z = G^T y / M`.
#[derive(Clone, Debug, PartialEq)]
pub struct SufficientStatistics {
    pub v: DMatrix<f64>,
    pub z: DVector<f64>,
    pub m: usize,
}

impl SufficientStatistics {
    pub fn dim(&self) -> usize {
        self.z.len()
    }

    /// Statistics of a whole dataset, accumulated agent by agent exactly as
    /// [`aggregate_statistics`] does.
    pub fn from_data(data: &Dataset, basis: &Basis) -> Self {
        let e = basis.dim();
        let mut v = DMatrix::zeros(e, e);
        let mut z = DVector::zeros(e);
        let mut g = vec![0.0; e];
        for (x, y) in data.inputs.iter().zip(&data.outputs) {
            basis.eval_into(x, &mut g);
            accumulate(&mut v, &mut z, &g, *y);
        }
        finish(v, z, data.len())
    }
}

fn accumulate(v: &mut DMatrix<f64>, z: &mut DVector<f64>, g: &[f64], y: f64) {
    let e = g.len();
    for j in 0..e {
        for i in 0..e {
            v[(i, j)] += g[i] * g[j];
        }
        z[j] += g[j] * y;
    }
}

fn finish(v: DMatrix<f64>, z: DVector<f64>, m: usize) -> SufficientStatistics {
    let mf = m as f64;
    SufficientStatistics {
        v: v / mf,
        z: z / mf,
        m,
    }
}

/// One agent's pair `(G_m^T G_m, G_m^T y_m)`.
pub fn local_statistics(x: &[f64], y: f64, basis: &Basis) -> (DMatrix<f64>, DVector<f64>) {
    let g = DVector::from_vec(basis.eval(x));
    (&g * g.transpose(), g * y)
}

/// Average the per-agent pairs.
pub fn aggregate_statistics(
    locals: &[(DMatrix<f64>, DVector<f64>)],
) -> Result<SufficientStatistics> {
    ensure(!locals.is_empty(), || {
        "no local statistics to aggregate".into()
    })?;
    let e = locals[0].1.len();
    if locals
        .iter()
        .any(|(m, v)| v.len() != e || m.nrows() != e || m.ncols() != e)
    {
        return Err(Error::InvalidInput(
            "local statistics have inconsistent dimensions".into(),
        ));
    }
    let mut v = DMatrix::zeros(e, e);
    let mut z = DVector::zeros(e);
    for (lv, lz) in locals {
        v += lv;
        z += lz;
    }
    Ok(finish(v, z, locals.len()))
}

/// Coefficients `a_hat` of a fitted function `sum_e a_e phi_e`.
#[derive(Clone, Debug)]
pub struct CoefficientEstimate {
    pub a_hat: DVector<f64>,
    pub basis: Arc<Basis>,
    pub gamma: f64,
    /// Effective truncation; equals the basis dimension for the A estimator.
    pub e_prime: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CoefficientDoc {
    pub basis_id: String,
    pub gamma: f64,
    #[serde(rename = "E_prime")]
    pub e_prime: usize,
    pub a_hat: Vec<f64>,
}

impl CoefficientEstimate {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let g = self.basis.eval(x);
        g.iter().zip(self.a_hat.iter()).map(|(p, a)| p * a).sum()
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    pub fn to_doc(&self) -> CoefficientDoc {
        CoefficientDoc {
            basis_id: self.basis.id().to_string(),
            gamma: self.gamma,
            e_prime: self.e_prime,
            a_hat: self.a_hat.iter().copied().collect(),
        }
    }
}

fn check_common(
    stats: &SufficientStatistics,
    basis: &Basis,
    sigma2: f64,
    gamma: f64,
) -> Result<()> {
    ensure(stats.dim() == basis.dim(), || {
        format!(
            "statistics have dimension {}, basis {}",
            stats.dim(),
            basis.dim()
        )
    })?;
    ensure(stats.m >= 1, || "statistics need M >= 1".into())?;
    ensure(gamma >= 0.0 && gamma.is_finite(), || {
        format!("gamma must be nonnegative, got {gamma}")
    })?;
    ensure(sigma2 >= 0.0 && sigma2.is_finite(), || {
        format!("noise variance must be nonnegative, got {sigma2}")
    })
}

/// `a_hat = (V + (gamma sigma^2 / M) P)^{-1} z`.
pub fn estimate_a(
    stats: &SufficientStatistics,
    basis: &Arc<Basis>,
    sigma2: f64,
    gamma: f64,
) -> Result<CoefficientEstimate> {
    check_common(stats, basis, sigma2, gamma)?;
    let c = gamma * sigma2 / stats.m as f64;
    let system = &stats.v + basis.precision() * c;
    let a_hat = SpdFactor::new(&system)?.solve(&stats.z);
    Ok(CoefficientEstimate {
        a_hat,
        basis: basis.clone(),
        gamma,
        e_prime: basis.dim(),
    })
}

/// B estimator truncated to the first `e_prime` coefficients. Uses only `z`
/// for eigenfunction bases; section and Nystrom bases replace `V` with the
/// expected Gram matrix.
pub fn estimate_b(
    stats: &SufficientStatistics,
    basis: &Arc<Basis>,
    sigma2: f64,
    gamma: f64,
    e_prime: usize,
) -> Result<CoefficientEstimate> {
    check_common(stats, basis, sigma2, gamma)?;
    let a_hat = b_coefficients(&stats.z, stats.m, basis, sigma2, gamma, e_prime)?;
    Ok(CoefficientEstimate {
        a_hat,
        basis: basis.clone(),
        gamma,
        e_prime,
    })
}

/// B-estimator coefficients from `z` alone (plus the expected Gram for
/// non-eigenfunction bases), as each agent computes them after the first
/// consensus.
pub fn b_coefficients(
    z: &DVector<f64>,
    m: usize,
    basis: &Basis,
    sigma2: f64,
    gamma: f64,
    e_prime: usize,
) -> Result<DVector<f64>> {
    let e = basis.dim();
    ensure(z.len() == e, || {
        format!("z has length {}, basis {e}", z.len())
    })?;
    ensure(e_prime <= e, || format!("E' = {e_prime} exceeds E = {e}"))?;
    let c = gamma * sigma2 / m as f64;
    match basis.lambdas() {
        Some(lambdas) => Ok(DVector::from_fn(e, |i, _| {
            if i < e_prime {
                z[i] / (1.0 + c / lambdas[i])
            } else {
                0.0
            }
        })),
        None if e_prime == 0 => Ok(DVector::zeros(e)),
        None => {
            let gram = basis.expected_gram().ok_or_else(|| {
                Error::InvalidInput(format!(
                    "{} basis needs an expected Gram matrix for the B estimator",
                    basis.kind().as_str()
                ))
            })?;
            let system = leading(gram, e_prime) + leading(basis.precision(), e_prime) * c;
            let head = SpdFactor::new(&system)?.solve(&leading_vec(z, e_prime));
            Ok(pad(&head, e))
        }
    }
}

/// Full-kernel posterior mean used as a reference estimator.
#[derive(Clone, Debug)]
pub struct MapPredictor {
    kernel: KernelSpec,
    inputs: Vec<Vec<f64>>,
    weights: DVector<f64>,
}

impl MapPredictor {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.inputs
            .iter()
            .zip(self.weights.iter())
            .map(|(xi, w)| w * self.kernel.eval(x, xi))
            .sum()
    }
}

/// Posterior mean `k(x)^T (K + gamma sigma^2 I)^{-1} y` for the prior
/// covariance `K / gamma`.
pub fn estimate_map(data: &Dataset, kernel: &KernelSpec, gamma: f64) -> Result<MapPredictor> {
    kernel.validate()?;
    ensure(gamma >= 0.0 && gamma.is_finite(), || {
        format!("gamma must be nonnegative, got {gamma}")
    })?;
    let mut k = kernel.matrix(&data.inputs);
    let shift = gamma * data.noise_variance;
    for i in 0..data.len() {
        k[(i, i)] += shift;
    }
    let factor = SpdFactor::new(&k).map_err(|e| match e {
        Error::SingularNormalEquations { pivot } => Error::NumericalFailure(format!(
            "kernel plus noise matrix is singular (pivot {pivot:e})"
        )),
        other => other,
    })?;
    let weights = factor.solve(&DVector::from_column_slice(&data.outputs));
    Ok(MapPredictor {
        kernel: kernel.clone(),
        inputs: data.inputs.clone(),
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_expansion::EigenSystem;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::SQRT_2;

    fn spline_basis(e: usize) -> Arc<Basis> {
        Arc::new(Basis::kl_eigen(EigenSystem::spline(e).unwrap(), e).unwrap())
    }

    #[test]
    fn local_statistics_spline() {
        let (m, v) = local_statistics(&[0.5], 2.0, &spline_basis(1));
        assert_relative_eq!(m[(0, 0)], 1.0, epsilon = 1e-15);
        // phi_1(0.5) = sqrt(2) sin(pi/4) = 1, so G^T y = y
        assert_relative_eq!(v[0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(
            SQRT_2 * (std::f64::consts::PI / 4.0).sin(),
            1.0,
            epsilon = 1e-15
        );
        let (m0, v0) = local_statistics(&[0.5], 0.0, &spline_basis(1));
        assert_eq!(m0, m);
        assert_eq!(v0[0], 0.0);
    }

    #[test]
    fn aggregate_rejects_mismatch() {
        let a = local_statistics(&[0.5], 1.0, &spline_basis(1));
        let b = local_statistics(&[0.5], 1.0, &spline_basis(2));
        assert!(aggregate_statistics(&[a, b]).is_err());
        assert!(aggregate_statistics(&[]).is_err());
    }

    #[test]
    fn from_data_matches_aggregate() {
        let basis = spline_basis(4);
        let xs: Vec<Vec<f64>> = (0..17).map(|i| vec![(i as f64 * 0.37) % 1.0]).collect();
        let ys: Vec<f64> = (0..17).map(|i| (i as f64).sin()).collect();
        let data = Dataset::new(xs.clone(), ys.clone(), 0.1).unwrap();
        let locals: Vec<_> = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| local_statistics(x, *y, &basis))
            .collect();
        assert_eq!(
            aggregate_statistics(&locals).unwrap(),
            SufficientStatistics::from_data(&data, &basis)
        );
    }

    #[test]
    fn scalar_estimate_a() {
        let basis = spline_basis(1);
        let data = Dataset::new(
            vec![vec![0.2], vec![0.5], vec![0.9]],
            vec![0.3, -0.1, 0.7],
            0.04,
        )
        .unwrap();
        let s = SufficientStatistics::from_data(&data, &basis);
        let a = estimate_a(&s, &basis, 0.04, 2.0).unwrap();
        let lambda = basis.lambdas().unwrap()[0];
        assert_relative_eq!(
            a.a_hat[0],
            s.z[0] / (s.v[(0, 0)] + 2.0 * 0.04 / (3.0 * lambda)),
            epsilon = 1e-14
        );
    }

    #[test]
    fn noiseless_recovery() {
        let basis = spline_basis(3);
        let truth = [0.7, -0.3, 0.1];
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![0.05 + i as f64 / 10.0]).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| basis.eval(x).iter().zip(&truth).map(|(p, a)| p * a).sum())
            .collect();
        let data = Dataset::new(xs, ys, 0.0).unwrap();
        let s = SufficientStatistics::from_data(&data, &basis);
        let a = estimate_a(&s, &basis, 0.0, 1.0).unwrap();
        for (h, t) in a.a_hat.iter().zip(truth) {
            assert_relative_eq!(*h, t, epsilon = 1e-10);
        }
    }

    #[test]
    fn singular_without_regularization() {
        let basis = spline_basis(3);
        let data = Dataset::new(vec![vec![0.4]], vec![1.0], 0.1).unwrap();
        let s = SufficientStatistics::from_data(&data, &basis);
        assert!(matches!(
            estimate_a(&s, &basis, 0.1, 0.0),
            Err(Error::SingularNormalEquations { .. })
        ));
        assert!(estimate_a(&s, &basis, 0.1, 1.0).is_ok());
    }

    #[test]
    fn estimate_b_arithmetic() {
        let sys = EigenSystem::from_spectrum(vec![0.4053, 0.0450]).unwrap();
        let basis = Arc::new(Basis::kl_eigen(sys, 2).unwrap());
        let s = SufficientStatistics {
            v: DMatrix::identity(2, 2),
            z: DVector::from_vec(vec![1.0, 1.0]),
            m: 100,
        };
        let b = estimate_b(&s, &basis, 0.01, 1.0, 2).unwrap();
        assert_relative_eq!(
            b.a_hat[0],
            1.0 / (1.0 + 0.01 / (100.0 * 0.4053)),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            b.a_hat[1],
            1.0 / (1.0 + 0.01 / (100.0 * 0.0450)),
            epsilon = 1e-15
        );
        let a = estimate_a(&s, &basis, 0.01, 1.0).unwrap();
        assert!((a.a_hat - &b.a_hat).abs().max() < 1e-12);
        let b0 = estimate_b(&s, &basis, 0.01, 0.0, 1).unwrap();
        assert_eq!(b0.a_hat.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn map_scalar() {
        let data = Dataset::new(vec![vec![0.3]], vec![2.0], 1.0).unwrap();
        let p = estimate_map(&data, &KernelSpec::gaussian(1.0).unwrap(), 1.0).unwrap();
        assert_relative_eq!(p.predict(&[0.3]), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn csv_roundtrip_and_errors() {
        let data = Dataset::new(vec![vec![0.1, 0.2], vec![0.3, 0.4]], vec![1.0, 2.0], 0.5).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        assert_eq!(Dataset::read_csv(buf.as_slice(), 0.5).unwrap(), data);
        let bad = "x_1,y\n0.1,1\n0.2,abc\n";
        assert!(matches!(
            Dataset::read_csv(bad.as_bytes(), 0.1),
            Err(Error::Parse { row: 3, .. })
        ));
    }

    proptest! {
        #[test]
        fn b_shrinks_and_truncates(z in prop::collection::vec(-5.0f64..5.0, 5), g1 in 0.0f64..10.0, dg in 0.0f64..10.0, e1 in 0usize..=5) {
            let basis = spline_basis(5);
            let s = SufficientStatistics { v: DMatrix::identity(5, 5), z: DVector::from_vec(z), m: 50 };
            let lo = estimate_b(&s, &basis, 0.1, g1, 5).unwrap();
            let hi = estimate_b(&s, &basis, 0.1, g1 + dg, 5).unwrap();
            prop_assert!(hi.a_hat.norm() <= lo.a_hat.norm() + 1e-12);
            let t = estimate_b(&s, &basis, 0.1, g1, e1).unwrap();
            for i in 0..5 {
                prop_assert_eq!(t.a_hat[i], if i < e1 { lo.a_hat[i] } else { 0.0 });
            }
        }

        #[test]
        fn predictions_invariant_to_permutation(seed in 0u64..500) {
            use rand::seq::SliceRandom;
            let basis = spline_basis(6);
            let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![((i as f64 + 0.5) * 0.61803) % 1.0]).collect();
            let ys: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).cos()).collect();
            let mut idx: Vec<usize> = (0..20).collect();
            idx.shuffle(&mut crate::seeding::rng(seed));
            let d1 = Dataset::new(xs, ys, 0.05).unwrap();
            let d2 = d1.select(&idx).unwrap();
            let a1 = estimate_a(&SufficientStatistics::from_data(&d1, &basis), &basis, 0.05, 1.0).unwrap();
            let a2 = estimate_a(&SufficientStatistics::from_data(&d2, &basis), &basis, 0.05, 1.0).unwrap();
            for x in [0.1, 0.5, 0.9] {
                prop_assert!((a1.predict(&[x]) - a2.predict(&[x])).abs() < 1e-12);
            }
        }
    }
}
