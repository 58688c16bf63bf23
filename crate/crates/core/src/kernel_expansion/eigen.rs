use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;

use crate::error::{ensure, Error, Result};
use crate::linalg::{sorted_symmetric_eigen, TOL_PSD};
use crate::seeding::rng;

use super::kernel::KernelSpec;
use super::measure::{InputMeasure, Sampling};

/// Frequency of the `e`-th (zero-based) spline eigenfunction.
#[inline]
fn spline_frequency(e: usize) -> f64 {
    (e as f64 + 1.0) * PI - PI / 2.0
}

/// Zero-based spline eigenfunction `sqrt(2) sin(x ((e+1) pi - pi/2))`,
/// orthonormal under the uniform measure on `[0, 1]`.
/// Zero-based spline eigenvalue `((e+1) pi - pi/2)^-2`.
#[inline]
pub fn spline_lambda(e: usize) -> f64 {
    let w = spline_frequency(e);
    1.0 / (w * w)
}

#[inline]
pub fn sinusoid(e: usize, x: f64) -> f64 {
    SQRT_2 * (x * spline_frequency(e)).sin()
}

/// Which construction produced an eigensystem.
#[derive(Clone, Debug, PartialEq)]
pub enum EigenFamily {
    /// First-order spline kernel under uniform measure on `[0, 1]`.
    Spline,
    /// Spline sinusoids with spectrum `exp(-rate e)`.
    Exponential { rate: f64 },
    /// User-supplied spectrum on the spline sinusoids.
    Custom,
    /// Kernel-matrix eigendecomposition with Nystrom extension.
    Numerical { kernel: KernelSpec },
    /// Tensor product of one-dimensional systems.
    Tensor,
}

#[derive(Clone, Debug)]
enum Functions {
    Sinusoid,
    Nystrom {
        kernel: KernelSpec,
        anchors: Vec<Vec<f64>>,
        /// `q x E` matrix with entries `sqrt(q) v_e(n) / l_e`.
        coefficients: DMatrix<f64>,
    },
    Tensor {
        factors: Vec<EigenSystem>,
        indices: Vec<Vec<usize>>,
    },
}

#[derive(Clone, Debug)]
enum Tail {
    /// Total prior variance is known in closed form.
    Total(f64),
    /// Only the stored eigenvalues are known; tails are lower estimates.
    Truncated,
}

/// Eigenvalues and eigenfunctions of a kernel w.r.t. an input measure.
///
/// Indices are zero-based: `lambda(0)` is the largest eigenvalue.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    family: EigenFamily,
    lambdas: Vec<f64>,
    functions: Functions,
    k_bound: f64,
    tail: Tail,
}

impl EigenSystem {
    /// Closed-form expansion of `min(x, x')` under the uniform measure on `[0, 1]`.
    pub fn spline(e_max: usize) -> Result<Self> {
        ensure(e_max >= 1, || "E_max must be at least 1".into())?;
        Ok(Self {
            family: EigenFamily::Spline,
            lambdas: (0..e_max).map(spline_lambda).collect(),
            functions: Functions::Sinusoid,
            k_bound: 2.0,
            tail: Tail::Total(0.5),
        })
    }

    /// Spline sinusoids with an exponentially decaying spectrum
    /// `lambda_e = exp(-rate e)` (one-based `e`).
    pub fn exponential(e_max: usize, rate: f64) -> Result<Self> {
        ensure(e_max >= 1, || "E_max must be at least 1".into())?;
        ensure(rate > 0.0 && rate.is_finite(), || {
            format!("decay rate must be positive, got {rate}")
        })?;
        Ok(Self {
            family: EigenFamily::Exponential { rate },
            lambdas: (1..=e_max).map(|e| (-rate * e as f64).exp()).collect(),
            functions: Functions::Sinusoid,
            k_bound: 2.0,
            tail: Tail::Total((-rate).exp() / (1.0 - (-rate).exp())),
        })
    }

    /// Arbitrary positive non-increasing spectrum on the spline sinusoids.
    /// Tail sums are truncated at the supplied length.
    pub fn from_spectrum(lambdas: Vec<f64>) -> Result<Self> {
        validate_spectrum(&lambdas)?;
        Ok(Self {
            family: EigenFamily::Custom,
            lambdas,
            functions: Functions::Sinusoid,
            k_bound: 2.0,
            tail: Tail::Truncated,
        })
    }

    /// Draws `q` points from `measure` and eigendecomposes the kernel matrix.
    pub fn numerical(
        kernel: &KernelSpec,
        measure: &InputMeasure,
        q: usize,
        e: usize,
        seed: u64,
        sampling: Sampling,
    ) -> Result<Self> {
        ensure(q >= e && e >= 1, || {
            format!("need q >= E >= 1, got q={q}, E={e}")
        })?;
        measure.validate()?;
        let anchors = measure.sample_n(q, sampling, &mut rng(seed));
        let mut sys = Self::from_anchor_points(kernel, anchors, e)?;
        sys.k_bound = sys.k_bound.max(grid_sup(&sys, measure));
        Ok(sys)
    }

    /// Numerical eigensystem from fixed anchor points.
    ///
    /// Eigenvalues are `l_e / q`; eigenfunctions use the Nystrom extension
    /// `phi_e(x) = sqrt(q) / l_e * sum_n v_e(n) K(x, x_n)`, which reproduces
    /// `sqrt(q) v_e(n)` at the anchors.
    pub fn from_anchor_points(
        kernel: &KernelSpec,
        anchors: Vec<Vec<f64>>,
        e: usize,
    ) -> Result<Self> {
        let q = anchors.len();
        ensure(q >= e && e >= 1, || {
            format!("need q >= E >= 1, got q={q}, E={e}")
        })?;
        kernel.validate()?;
        let (values, vectors) = sorted_symmetric_eigen(kernel.matrix(&anchors));
        let top = values[0];
        if top.is_nan() || top <= 0.0 {
            return Err(Error::DegenerateKernel(
                "kernel matrix has no positive eigenvalue".into(),
            ));
        }
        let floor = TOL_PSD * top;
        if let Some(neg) = values.iter().copied().find(|v| *v < -floor) {
            return Err(Error::DegenerateKernel(format!(
                "kernel matrix is indefinite (eigenvalue {neg:e})"
            )));
        }
        let positive = values.iter().take_while(|v| **v > floor).count();
        if positive < e {
            return Err(Error::DegenerateKernel(format!(
                "only {positive} eigenvalues above tolerance, {e} requested"
            )));
        }
        let qf = q as f64;
        let coefficients = DMatrix::from_fn(q, e, |n, j| qf.sqrt() * vectors[(n, j)] / values[j]);
        let lambdas = values[..e].iter().map(|l| l / qf).collect();
        let mut sys = Self {
            family: EigenFamily::Numerical {
                kernel: kernel.clone(),
            },
            lambdas,
            functions: Functions::Nystrom {
                kernel: kernel.clone(),
                anchors,
                coefficients,
            },
            k_bound: 0.0,
            tail: Tail::Truncated,
        };
        // sup over the anchors: phi_e(x_n)^2 = q v_e(n)^2
        let vectors = &vectors;
        sys.k_bound = (0..q)
            .flat_map(|n| (0..e).map(move |j| qf * vectors[(n, j)].powi(2)))
            .fold(0.0, f64::max);
        Ok(sys)
    }

    /// Tensor product of one-dimensional eigensystems keeping the `e_max`
    /// largest product eigenvalues.
    pub fn tensor(factors: Vec<EigenSystem>, e_max: usize) -> Result<Self> {
        ensure(!factors.is_empty(), || {
            "tensor product needs at least one factor".into()
        })?;
        ensure(factors.iter().all(|f| f.dim() == 1), || {
            "tensor factors must be one-dimensional".into()
        })?;
        let sizes: Vec<usize> = factors.iter().map(|f| f.e_max()).collect();
        let total_combos = sizes.iter().try_fold(1usize, |a, s| a.checked_mul(*s));
        ensure(
            matches!(total_combos, Some(n) if n >= e_max && n <= 4_000_000),
            || "tensor product has too few or too many index combinations".into(),
        )?;
        let mut combos: Vec<(f64, Vec<usize>)> = vec![(1.0, Vec::new())];
        for f in &factors {
            combos = combos
                .into_iter()
                .flat_map(|(l, idx)| {
                    (0..f.e_max()).map(move |i| {
                        let mut j = idx.clone();
                        j.push(i);
                        (l * f.lambda(i), j)
                    })
                })
                .collect();
        }
        combos.sort_by(|a, b| b.0.total_cmp(&a.0));
        combos.truncate(e_max);
        let tail = factors
            .iter()
            .map(|f| match f.tail {
                Tail::Total(t) => Some(t),
                Tail::Truncated => None,
            })
            .try_fold(1.0, |acc, t| t.map(|t| acc * t))
            .map_or(Tail::Truncated, Tail::Total);
        let k_bound = factors.iter().map(|f| f.k_bound).product();
        Ok(Self {
            family: EigenFamily::Tensor,
            lambdas: combos.iter().map(|c| c.0).collect(),
            functions: Functions::Tensor {
                factors,
                indices: combos.into_iter().map(|c| c.1).collect(),
            },
            k_bound,
            tail,
        })
    }

    pub fn family(&self) -> &EigenFamily {
        &self.family
    }

    /// Number of stored eigenpairs.
    pub fn e_max(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn lambda(&self, e: usize) -> f64 {
        self.lambdas[e]
    }

    /// Squared uniform bound on the eigenfunctions.
    pub fn k_bound(&self) -> f64 {
        self.k_bound
    }

    pub fn dim(&self) -> usize {
        match &self.functions {
            Functions::Sinusoid => 1,
            Functions::Nystrom { anchors, .. } => anchors[0].len(),
            Functions::Tensor { factors, .. } => factors.len(),
        }
    }

    /// Anchor points of a numerical system.
    pub fn anchors(&self) -> Option<&[Vec<f64>]> {
        match &self.functions {
            Functions::Nystrom { anchors, .. } => Some(anchors),
            _ => None,
        }
    }

    pub(crate) fn set_k_bound(&mut self, k: f64) {
        self.k_bound = k;
    }

    pub fn tensor_factors(&self) -> Option<&[EigenSystem]> {
        match &self.functions {
            Functions::Tensor { factors, .. } => Some(factors),
            _ => None,
        }
    }

    /// Whether [`tail_sum`](Self::tail_sum) is exact or a truncated lower estimate.
    pub fn tail_is_exact(&self) -> bool {
        matches!(self.tail, Tail::Total(_))
    }

    /// `sum_{e > E} lambda_e` (one-based), i.e. the prior variance left out
    /// by the first `E` eigenfunctions.
    pub fn tail_sum(&self, e: usize) -> f64 {
        match self.tail {
            Tail::Total(total) => {
                if let EigenFamily::Exponential { rate } = self.family {
                    return (-rate * (e as f64 + 1.0)).exp() / (1.0 - (-rate).exp());
                }
                let partial = if e <= self.lambdas.len() {
                    compensated_sum(self.lambdas[..e].iter().copied())
                } else if self.family == EigenFamily::Spline {
                    compensated_sum((0..e).map(spline_lambda))
                } else {
                    compensated_sum(self.lambdas.iter().copied())
                };
                (total - partial).max(0.0)
            }
            Tail::Truncated => compensated_sum(self.lambdas.iter().skip(e).copied()),
        }
    }

    /// Total prior variance `sum_e lambda_e`.
    pub fn total_variance(&self) -> f64 {
        self.tail_sum(0)
    }

    /// Zero-based eigenfunction `phi_e(x)`.
    pub fn phi(&self, e: usize, x: &[f64]) -> f64 {
        match &self.functions {
            Functions::Sinusoid => sinusoid(e, x[0]),
            Functions::Nystrom {
                kernel,
                anchors,
                coefficients,
            } => anchors
                .iter()
                .enumerate()
                .map(|(n, a)| coefficients[(n, e)] * kernel.eval(x, a))
                .sum(),
            Functions::Tensor { factors, indices } => factors
                .iter()
                .zip(&indices[e])
                .enumerate()
                .map(|(j, (f, i))| f.phi(*i, &x[j..=j]))
                .product(),
        }
    }

    /// Fill `out` with `phi_0(x), ..., phi_{out.len()-1}(x)`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let n = out.len();
        debug_assert!(n <= self.e_max());
        match &self.functions {
            Functions::Sinusoid => {
                for (e, o) in out.iter_mut().enumerate() {
                    *o = sinusoid(e, x[0]);
                }
            }
            Functions::Nystrom {
                kernel,
                anchors,
                coefficients,
            } => {
                out.fill(0.0);
                for (a, row) in anchors.iter().zip(coefficients.row_iter()) {
                    let k = kernel.eval(x, a);
                    for (o, c) in out.iter_mut().zip(row.iter()) {
                        *o += c * k;
                    }
                }
            }
            Functions::Tensor { .. } => {
                for (e, o) in out.iter_mut().enumerate() {
                    *o = self.phi(e, x);
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        self.eval_into(x, &mut out);
        out
    }
}

fn validate_spectrum(lambdas: &[f64]) -> Result<()> {
    ensure(!lambdas.is_empty(), || "spectrum must be nonempty".into())?;
    ensure(lambdas.iter().all(|l| *l > 0.0 && l.is_finite()), || {
        "eigenvalues must be positive and finite".into()
    })?;
    ensure(lambdas.windows(2).all(|w| w[0] >= w[1]), || {
        "eigenvalues must be non-increasing".into()
    })
}

/// Kahan-Babuska summation.
pub(crate) fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Largest `phi_e(x)^2` over a dense grid covering the measure's support.
fn grid_sup(sys: &EigenSystem, measure: &InputMeasure) -> f64 {
    let d = measure.dim();
    let per_dim = match d {
        1 => 2000,
        2 => 64,
        3 => 16,
        _ => 6,
    };
    let (lo, hi) = measure.bounding_box();
    let mut best = 0.0f64;
    let mut idx = vec![0usize; d];
    let mut buf = vec![0.0; sys.e_max()];
    loop {
        let x: Vec<f64> = (0..d)
            .map(|j| lo[j] + (hi[j] - lo[j]) * idx[j] as f64 / (per_dim - 1) as f64)
            .collect();
        sys.eval_into(&x, &mut buf);
        best = buf.iter().fold(best, |m, v| m.max(v * v));
        let mut j = 0;
        loop {
            if j == d {
                return best;
            }
            idx[j] += 1;
            if idx[j] < per_dim {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn spline_first_pair() {
        let s = EigenSystem::spline(1).unwrap();
        assert_relative_eq!(s.lambda(0), 4.0 / (PI * PI), epsilon = 1e-15);
        assert_relative_eq!(s.lambda(0), 0.405285, epsilon = 1e-6);
        assert_relative_eq!(s.phi(0, &[0.5]), 1.0, epsilon = 1e-14);
        assert_eq!(s.k_bound(), 2.0);
        assert!(EigenSystem::spline(0).is_err());
    }

    #[test]
    fn spline_total_variance_is_half() {
        for e_max in [1, 10, 500] {
            assert_eq!(EigenSystem::spline(e_max).unwrap().tail_sum(0), 0.5);
        }
    }

    #[test]
    fn spline_tail_beyond_stored_pairs() {
        let s = EigenSystem::spline(10).unwrap();
        let direct: f64 = (51..=2_000_000)
            .map(|e| 1.0 / ((e as f64 - 0.5) * PI).powi(2))
            .sum();
        // remainder past 2e6 is about 1/(pi^2 2e6)
        assert!((s.tail_sum(50) - direct - 1.0 / (PI * PI * 2e6)).abs() < 1e-10);
    }

    #[test]
    fn exponential_values() {
        let s = EigenSystem::exponential(5, 0.1).unwrap();
        assert_relative_eq!(s.lambda(0), 0.904837, epsilon = 1e-6);
        assert_relative_eq!(s.tail_sum(0), 9.5083, epsilon = 1e-4);
        assert!(EigenSystem::exponential(5, 0.0).is_err());
        assert!(EigenSystem::exponential(5, -1.0).is_err());
        let steep = EigenSystem::exponential(5, 50.0).unwrap();
        assert!(steep.tail_sum(0) < 1e-21);
    }

    #[test]
    fn custom_spectrum_tail_is_truncated() {
        let s = EigenSystem::from_spectrum(vec![3.0, 2.0, 1.0]).unwrap();
        assert!(!s.tail_is_exact());
        assert_eq!(s.tail_sum(1), 3.0);
        assert_eq!(s.tail_sum(3), 0.0);
        assert!(EigenSystem::from_spectrum(vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn single_anchor_eigenvalue_is_kernel_diagonal() {
        let k = KernelSpec::SplineFirstOrder;
        let s = EigenSystem::from_anchor_points(&k, vec![vec![0.3]], 1).unwrap();
        assert_relative_eq!(s.lambda(0), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn repeated_anchor_is_degenerate_beyond_first() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let anchors = vec![vec![0.2]; 4];
        let one = EigenSystem::from_anchor_points(&k, anchors.clone(), 1).unwrap();
        assert_relative_eq!(one.lambda(0), 1.0, epsilon = 1e-12);
        assert!(matches!(
            EigenSystem::from_anchor_points(&k, anchors, 2),
            Err(Error::DegenerateKernel(_))
        ));
    }

    #[test]
    fn nystrom_extension_reproduces_scaled_eigenvectors() {
        let k = KernelSpec::SplineFirstOrder;
        let anchors: Vec<Vec<f64>> = (1..=20).map(|i| vec![i as f64 / 20.0]).collect();
        let s = EigenSystem::from_anchor_points(&k, anchors.clone(), 3).unwrap();
        let (_, v) = sorted_symmetric_eigen(k.matrix(&anchors));
        for (n, a) in anchors.iter().enumerate() {
            for e in 0..3 {
                assert_relative_eq!(s.phi(e, a), 20f64.sqrt() * v[(n, e)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn tensor_orders_products() {
        let a = EigenSystem::spline(5).unwrap();
        let t = EigenSystem::tensor(vec![a.clone(), a.clone()], 6).unwrap();
        assert!(t.lambdas().windows(2).all(|w| w[0] >= w[1]));
        assert_relative_eq!(t.lambda(0), a.lambda(0).powi(2));
        assert_relative_eq!(t.tail_sum(0), 0.25);
        assert_eq!(t.k_bound(), 4.0);
        let x = [0.3, 0.8];
        assert_relative_eq!(t.phi(0, &x), a.phi(0, &[0.3]) * a.phi(0, &[0.8]));
    }

    #[test]
    fn mercer_reconstruction_of_min_kernel() {
        let s = EigenSystem::spline(200).unwrap();
        let mut worst = 0.0f64;
        for i in 0..50 {
            for j in 0..50 {
                let (x, y) = (i as f64 / 49.0, j as f64 / 49.0);
                let px = s.eval(&[x], 200);
                let py = s.eval(&[y], 200);
                let k: f64 = (0..200).map(|e| s.lambda(e) * px[e] * py[e]).sum();
                worst = worst.max((k - x.min(y)).abs());
            }
        }
        assert!(worst < 1e-2, "worst Mercer error {worst}");
    }

    #[test]
    fn closed_form_orthonormality_by_quadrature() {
        let s = EigenSystem::spline(8).unwrap();
        let q = InputMeasure::unit_interval().quadrature(10_000).unwrap();
        let mut gram = DMatrix::<f64>::zeros(8, 8);
        for (p, w) in q.points.iter().zip(&q.weights) {
            let r = s.eval(p, 8);
            for i in 0..8 {
                for j in 0..8 {
                    gram[(i, j)] += w * r[i] * r[j];
                }
            }
        }
        assert!((gram - DMatrix::identity(8, 8)).abs().max() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn numerical_eigenvalues_sorted_nonnegative(seed in 0u64..1000, q in 5usize..60) {
            let k = KernelSpec::gaussian(0.5).unwrap();
            let m = InputMeasure::unit_interval();
            let s = EigenSystem::numerical(&k, &m, q, 3, seed, Sampling::Iid).unwrap();
            prop_assert!(s.lambdas().windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(s.lambdas().iter().all(|l| *l >= 0.0));
        }
    }
}
