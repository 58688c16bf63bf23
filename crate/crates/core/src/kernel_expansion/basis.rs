use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{ensure, Error, Result};
use crate::linalg::{is_symmetric, sorted_symmetric_eigen, TOL_PSD};

use super::eigen::EigenSystem;
use super::kernel::KernelSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisKind {
    KlEigen,
    KernelSections,
    Nystrom,
}

impl BasisKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BasisKind::KlEigen => "kl_eigen",
            BasisKind::KernelSections => "kernel_sections",
            BasisKind::Nystrom => "nystrom",
        }
    }
}

#[derive(Clone, Debug)]
enum Repr {
    Eigen(Arc<EigenSystem>),
    Sections {
        kernel: KernelSpec,
        anchors: Vec<Vec<f64>>,
    },
    Nystrom {
        kernel: KernelSpec,
        anchors: Vec<Vec<f64>>,
        /// `q x E` top eigenvectors of the anchor kernel matrix.
        vectors: DMatrix<f64>,
    },
}

/// A finite set of `E` basis functions together with the precision matrix
/// `P` of their Gaussian coefficient prior and, when known, the expected
/// Gram matrix `E[phi phi^T]` under the input measure.
#[derive(Clone, Debug)]
pub struct Basis {
    repr: Repr,
    precision: DMatrix<f64>,
    expected_gram: Option<DMatrix<f64>>,
    id: String,
}

impl Basis {
    /// First `e` eigenfunctions of a Karhunen-Loeve expansion; precision
    /// `diag(1 / lambda)` and identity expected Gram.
    pub fn kl_eigen(system: impl Into<Arc<EigenSystem>>, e: usize) -> Result<Self> {
        let system = system.into();
        ensure(e >= 1 && e <= system.e_max(), || {
            format!("basis dimension {e} outside 1..={}", system.e_max())
        })?;
        let precision = DMatrix::from_fn(
            e,
            e,
            |i, j| if i == j { 1.0 / system.lambda(i) } else { 0.0 },
        );
        let family = match system.family() {
            super::eigen::EigenFamily::Spline => "spline".to_string(),
            super::eigen::EigenFamily::Exponential { rate } => format!("exponential(rate={rate})"),
            super::eigen::EigenFamily::Custom => "custom".to_string(),
            super::eigen::EigenFamily::Numerical { kernel } => {
                format!("numerical[{}]", kernel.name())
            }
            super::eigen::EigenFamily::Tensor => "tensor".to_string(),
        };
        Ok(Self {
            repr: Repr::Eigen(system),
            precision,
            expected_gram: Some(DMatrix::identity(e, e)),
            id: format!("kl_eigen:{family}:E={e}"),
        })
    }

    /// Kernel sections `phi_e(x) = K(anchor_e, x)` with precision equal to
    /// the anchor kernel matrix.
    pub fn kernel_sections(kernel: &KernelSpec, anchors: Vec<Vec<f64>>) -> Result<Self> {
        kernel.validate()?;
        check_points(&anchors)?;
        let k = kernel.matrix(&anchors);
        let (values, _) = sorted_symmetric_eigen(k.clone());
        let top = values[0];
        if top.is_nan() || top <= 0.0 || *values.last().unwrap() <= TOL_PSD * top {
            return Err(Error::DegenerateAnchors);
        }
        let id = format!("kernel_sections:{}:E={}", kernel.name(), anchors.len());
        Ok(Self {
            repr: Repr::Sections {
                kernel: kernel.clone(),
                anchors,
            },
            precision: k,
            expected_gram: None,
            id,
        })
    }

    /// Nystrom basis `phi_e(x) = sum_n v_e(n) K(anchor_n, x)` built from the
    /// top `e` eigenpairs `(d_e, v_e)` of the anchor kernel matrix; the
    /// precision is `diag(d_1..d_E)`.
    pub fn nystrom(kernel: &KernelSpec, anchors: Vec<Vec<f64>>, e: usize) -> Result<Self> {
        kernel.validate()?;
        check_points(&anchors)?;
        let q = anchors.len();
        ensure(e >= 1 && e <= q, || {
            format!("need 1 <= E <= q, got E={e}, q={q}")
        })?;
        let (values, vectors) = sorted_symmetric_eigen(kernel.matrix(&anchors));
        let floor = TOL_PSD * values[0].max(0.0);
        let available = values
            .iter()
            .take_while(|v| **v > floor && **v > 0.0)
            .count();
        if available < e {
            return Err(Error::RankDeficient {
                requested: e,
                available,
            });
        }
        let id = format!("nystrom:{}:q={q}:E={e}", kernel.name());
        Ok(Self {
            repr: Repr::Nystrom {
                kernel: kernel.clone(),
                anchors,
                vectors: vectors.columns(0, e).into_owned(),
            },
            precision: DMatrix::from_fn(e, e, |i, j| if i == j { values[i] } else { 0.0 }),
            expected_gram: None,
            id,
        })
    }

    /// Attach an expected Gram matrix (see [`expected_gram`](super::gram::expected_gram)).
    pub fn with_expected_gram(mut self, gram: DMatrix<f64>) -> Result<Self> {
        let e = self.dim();
        ensure(gram.nrows() == e && gram.ncols() == e, || {
            format!("expected Gram must be {e}x{e}")
        })?;
        let scale = gram.abs().max().max(1.0);
        ensure(is_symmetric(&gram, 1e-12 * scale), || {
            "expected Gram must be symmetric".into()
        })?;
        if self.kind() == BasisKind::KlEigen {
            ensure(gram == DMatrix::identity(e, e), || {
                "expected Gram of an eigenfunction basis is the identity".into()
            })?;
        }
        self.expected_gram = Some(gram);
        Ok(self)
    }

    pub fn kind(&self) -> BasisKind {
        match self.repr {
            Repr::Eigen(_) => BasisKind::KlEigen,
            Repr::Sections { .. } => BasisKind::KernelSections,
            Repr::Nystrom { .. } => BasisKind::Nystrom,
        }
    }

    /// Number of basis functions `E`.
    pub fn dim(&self) -> usize {
        self.precision.nrows()
    }

    pub fn input_dim(&self) -> usize {
        match &self.repr {
            Repr::Eigen(s) => s.dim(),
            Repr::Sections { anchors, .. } | Repr::Nystrom { anchors, .. } => anchors[0].len(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Precision matrix `P` of the coefficient prior (before scaling by `gamma`).
    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn expected_gram(&self) -> Option<&DMatrix<f64>> {
        self.expected_gram.as_ref()
    }

    pub fn eigensystem(&self) -> Option<&EigenSystem> {
        match &self.repr {
            Repr::Eigen(s) => Some(s),
            _ => None,
        }
    }

    /// Prior variances `lambda_1..lambda_E` of an eigenfunction basis.
    pub fn lambdas(&self) -> Option<&[f64]> {
        self.eigensystem().map(|s| &s.lambdas()[..self.dim()])
    }

    pub fn kernel(&self) -> Option<&KernelSpec> {
        match &self.repr {
            Repr::Eigen(_) => None,
            Repr::Sections { kernel, .. } | Repr::Nystrom { kernel, .. } => Some(kernel),
        }
    }

    pub fn anchors(&self) -> Option<&[Vec<f64>]> {
        match &self.repr {
            Repr::Eigen(s) => s.anchors(),
            Repr::Sections { anchors, .. } | Repr::Nystrom { anchors, .. } => Some(anchors),
        }
    }

    /// Eigenvectors `V_E` of a Nystrom basis.
    pub fn nystrom_vectors(&self) -> Option<&DMatrix<f64>> {
        match &self.repr {
            Repr::Nystrom { vectors, .. } => Some(vectors),
            _ => None,
        }
    }

    /// Fill `out` (length `E`) with the basis functions evaluated at `x`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.repr {
            Repr::Eigen(s) => s.eval_into(x, out),
            Repr::Sections { kernel, anchors } => {
                for (o, a) in out.iter_mut().zip(anchors) {
                    *o = kernel.eval(a, x);
                }
            }
            Repr::Nystrom {
                kernel,
                anchors,
                vectors,
            } => {
                out.fill(0.0);
                for (a, row) in anchors.iter().zip(vectors.row_iter()) {
                    let k = kernel.eval(a, x);
                    for (o, v) in out.iter_mut().zip(row.iter()) {
                        *o += v * k;
                    }
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }

    /// Design matrix with one row `G_m` per input.
    pub fn design(&self, xs: &[Vec<f64>]) -> DMatrix<f64> {
        let e = self.dim();
        let mut g = DMatrix::zeros(xs.len(), e);
        let mut row = vec![0.0; e];
        for (m, x) in xs.iter().enumerate() {
            self.eval_into(x, &mut row);
            for (j, v) in row.iter().enumerate() {
                g[(m, j)] = *v;
            }
        }
        g
    }
}

fn check_points(points: &[Vec<f64>]) -> Result<()> {
    ensure(!points.is_empty(), || "anchor set is empty".into())?;
    let d = points[0].len();
    ensure(d >= 1 && points.iter().all(|p| p.len() == d), || {
        "anchors must share a positive dimension".into()
    })?;
    ensure(points.iter().flatten().all(|v| v.is_finite()), || {
        "anchors must be finite".into()
    })
}
