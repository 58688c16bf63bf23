//! SURE hyperparameter selection for the A and B estimators, noise-variance
//! pre-estimation, and oracle tuners for benchmarking.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::error::{ensure, Error, Result};
use crate::kernel_expansion::Basis;
use crate::linalg::{leading, sorted_symmetric_eigen, SpdFactor};
use crate::regression::{b_coefficients, estimate_a, Dataset, SufficientStatistics};

/// Candidate scale factors `Gamma` and truncation levels `Omega`.
#[derive(Clone, Debug, PartialEq)]
pub struct TuningGrid {
    pub gammas: Vec<f64>,
    pub truncations: Vec<usize>,
}

impl TuningGrid {
    pub fn new(gammas: Vec<f64>, truncations: Vec<usize>) -> Result<Self> {
        ensure(!gammas.is_empty(), || "gamma grid is empty".into())?;
        ensure(gammas.iter().all(|g| *g >= 0.0 && g.is_finite()), || {
            "gamma grid must contain nonnegative finite values".into()
        })?;
        Ok(Self {
            gammas,
            truncations,
        })
    }

    /// `n` log-spaced gammas in `[lo, hi]`, with the full basis as the only truncation.
    pub fn log_gammas(lo: f64, hi: f64, n: usize, e: usize) -> Result<Self> {
        ensure(lo > 0.0 && hi >= lo, || {
            "log grid needs 0 < lo <= hi".into()
        })?;
        Self::new(crate::linalg::logspace(lo, hi, n), vec![e])
    }

    fn check_truncations(&self, e: usize) -> Result<()> {
        ensure(!self.truncations.is_empty(), || {
            "truncation grid is empty".into()
        })?;
        ensure(self.truncations.iter().all(|t| *t >= 1 && *t <= e), || {
            format!("truncation levels must lie in 1..={e}")
        })
    }
}

/// One SURE score split into residual and degrees-of-freedom parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SureEvaluation {
    pub gamma: f64,
    #[serde(rename = "E_prime")]
    pub e_prime: usize,
    pub residual: f64,
    pub dof: f64,
    #[serde(rename = "J")]
    pub j: f64,
}

impl SureEvaluation {
    fn new(gamma: f64, e_prime: usize, residual: f64, dof: f64) -> Self {
        Self {
            gamma,
            e_prime,
            residual,
            dof,
            j: residual + dof,
        }
    }
}

/// Selected evaluation plus the full trace of successful evaluations in grid order.
#[derive(Clone, Debug)]
pub struct TuneOutcome {
    pub best: SureEvaluation,
    pub trace: Vec<SureEvaluation>,
}

pub fn write_trace<W: std::io::Write>(trace: &[SureEvaluation], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for t in trace {
        w.serialize(t)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

fn residual_norm(z: &DVector<f64>, zhat: &DVector<f64>) -> f64 {
    (z - zhat).norm_squared()
}

/// `J_A(gamma) = |(I - S) z|^2 + 2 Tr(S Sigma)` with
/// `S = V (V + c P)^-1`, `Sigma = (sigma^2 / M) V`, `c = gamma sigma^2 / M`.
pub fn sure_risk_a(
    stats: &SufficientStatistics,
    precision: &DMatrix<f64>,
    sigma2: f64,
    gamma: f64,
) -> Result<SureEvaluation> {
    let m = stats.m as f64;
    let c = gamma * sigma2 / m;
    let factor = SpdFactor::new(&(&stats.v + precision * c))?;
    let a = factor.solve(&stats.z);
    let x = factor.solve_mat(&stats.v);
    let trace_vxv = stats.v.component_mul(&x).sum();
    let residual = residual_norm(&stats.z, &(&stats.v * a));
    Ok(SureEvaluation::new(
        gamma,
        stats.dim(),
        residual,
        2.0 * sigma2 / m * trace_vxv.max(0.0),
    ))
}

/// Precomputed whitening of `V` by the prior so that the A estimator and its
/// SURE score cost `O(E^2)` per `gamma`.
///
/// With `P = L L^T` and `L^-1 V L^-T = U diag(w) U^T`, the system matrix is
/// `L U (diag(w) + c) U^T L^T`. Zero `gamma` falls back to the dense solve.
pub struct SurePathA {
    stats: SufficientStatistics,
    precision: DMatrix<f64>,
    sigma2: f64,
    w: DVector<f64>,
    /// `L^-T U`
    r: DMatrix<f64>,
    /// `V L^-T U`
    q: DMatrix<f64>,
    /// `U^T L^-1 z`
    b: DVector<f64>,
    q_norms: DVector<f64>,
}

impl SurePathA {
    pub fn new(
        stats: &SufficientStatistics,
        precision: &DMatrix<f64>,
        sigma2: f64,
    ) -> Result<Self> {
        let e = stats.dim();
        ensure(precision.nrows() == e && precision.ncols() == e, || {
            "prior precision has the wrong shape".into()
        })?;
        let l = Cholesky::new(precision.clone())
            .ok_or_else(|| {
                Error::NumericalFailure("prior precision is not positive definite".into())
            })?
            .unpack();
        let fail =
            || Error::NumericalFailure("triangular solve with the prior factor failed".into());
        let linv_v = l.solve_lower_triangular(&stats.v).ok_or_else(fail)?;
        let mut w_mat = l
            .solve_lower_triangular(&linv_v.transpose())
            .ok_or_else(fail)?;
        let sym = (&w_mat + w_mat.transpose()) * 0.5;
        w_mat.copy_from(&sym);
        let (w, u) = sorted_symmetric_eigen(w_mat);
        let r = l.tr_solve_lower_triangular(&u).ok_or_else(fail)?;
        let q = &stats.v * &r;
        let b = r.tr_mul(&stats.z);
        let q_norms = DVector::from_iterator(e, q.column_iter().map(|c| c.norm_squared()));
        Ok(Self {
            stats: stats.clone(),
            precision: precision.clone(),
            sigma2,
            w: DVector::from_vec(w),
            r,
            q,
            b,
            q_norms,
        })
    }

    fn shift(&self, gamma: f64) -> Result<f64> {
        ensure(gamma >= 0.0 && gamma.is_finite(), || {
            format!("gamma must be nonnegative, got {gamma}")
        })?;
        Ok(gamma * self.sigma2 / self.stats.m as f64)
    }

    fn weights(&self, c: f64) -> Result<DVector<f64>> {
        let mut out = self.b.clone();
        for (o, w) in out.iter_mut().zip(self.w.iter()) {
            let d = w + c;
            if !d.is_finite() || d <= 0.0 {
                return Err(Error::SingularNormalEquations { pivot: d });
            }
            *o /= d;
        }
        Ok(out)
    }

    /// A-estimator coefficients at `gamma`.
    pub fn coefficients(&self, gamma: f64) -> Result<DVector<f64>> {
        let c = self.shift(gamma)?;
        if c == 0.0 {
            return Ok(SpdFactor::new(&self.stats.v)?.solve(&self.stats.z));
        }
        Ok(&self.r * self.weights(c)?)
    }

    pub fn evaluate(&self, gamma: f64) -> Result<SureEvaluation> {
        let c = self.shift(gamma)?;
        if c == 0.0 {
            return sure_risk_a(&self.stats, &self.precision, self.sigma2, gamma);
        }
        let t = self.weights(c)?;
        let zhat = &self.q * &t;
        let trace: f64 = self
            .q_norms
            .iter()
            .zip(self.w.iter())
            .map(|(n, w)| n / (w + c))
            .sum();
        let m = self.stats.m as f64;
        Ok(SureEvaluation::new(
            gamma,
            self.stats.dim(),
            residual_norm(&self.stats.z, &zhat),
            2.0 * self.sigma2 / m * trace,
        ))
    }
}

/// Minimum `J` with ties resolved by `prefer(a, b)` returning true when `a`
/// should win over `b`.
fn select(
    evals: &[SureEvaluation],
    prefer: impl Fn(&SureEvaluation, &SureEvaluation) -> bool,
) -> Option<SureEvaluation> {
    let mut best: Option<SureEvaluation> = None;
    for e in evals.iter().filter(|e| e.j.is_finite()) {
        best = match best {
            None => Some(*e),
            Some(b) if e.j < b.j || (e.j == b.j && prefer(e, &b)) => Some(*e),
            keep => keep,
        };
    }
    best
}

fn prefer_a(a: &SureEvaluation, b: &SureEvaluation) -> bool {
    a.gamma > b.gamma
}

fn prefer_b(a: &SureEvaluation, b: &SureEvaluation) -> bool {
    a.e_prime < b.e_prime || (a.e_prime == b.e_prime && a.gamma > b.gamma)
}

/// Minimize `J_A` over the gamma grid; ties go to the larger gamma.
pub fn tune_a(
    stats: &SufficientStatistics,
    precision: &DMatrix<f64>,
    sigma2: f64,
    gammas: &[f64],
) -> Result<TuneOutcome> {
    ensure(!gammas.is_empty(), || "gamma grid is empty".into())?;
    let trace: Vec<SureEvaluation> = match SurePathA::new(stats, precision, sigma2) {
        Ok(path) => gammas
            .iter()
            .filter_map(|&g| path.evaluate(g).ok())
            .collect(),
        Err(_) => gammas
            .iter()
            .filter_map(|&g| sure_risk_a(stats, precision, sigma2, g).ok())
            .collect(),
    };
    let best = select(&trace, prefer_a).ok_or(Error::TuningFailed)?;
    Ok(TuneOutcome { best, trace })
}

/// One member of the B-estimator family.
#[derive(Clone, Debug)]
pub struct BCandidate {
    pub gamma: f64,
    pub e_prime: usize,
    pub a_hat: DVector<f64>,
}

/// All `(gamma, E')` coefficient vectors computable from `z` alone, in
/// gamma-major grid order.
pub fn b_family(
    z: &DVector<f64>,
    m: usize,
    basis: &Basis,
    sigma2: f64,
    grid: &TuningGrid,
) -> Result<Vec<BCandidate>> {
    grid.check_truncations(basis.dim())?;
    let mut out = Vec::with_capacity(grid.gammas.len() * grid.truncations.len());
    for &gamma in &grid.gammas {
        for &e_prime in &grid.truncations {
            if let Ok(a_hat) = b_coefficients(z, m, basis, sigma2, gamma, e_prime) {
                out.push(BCandidate {
                    gamma,
                    e_prime,
                    a_hat,
                });
            }
        }
    }
    Ok(out)
}

/// `z_hat(gamma, E') = V a_hat(gamma, E')`.
pub fn predicted_z(v: &DMatrix<f64>, family: &[BCandidate]) -> Vec<DVector<f64>> {
    family
        .iter()
        .map(|c| {
            let k = c.e_prime;
            v.columns(0, k) * c.a_hat.rows(0, k)
        })
        .collect()
}

/// Expected degrees of freedom of the B estimator: `2 (sigma^2/M) Tr(S)`
/// with `S = [Gbar]_{E'} ([Gbar]_{E'} + c [P]_{E'})^-1`, which reduces to
/// `2 (sigma^2/M) sum_{e <= E'} lambda_e / (lambda_e + c)` for eigenfunction bases.
pub fn b_dof(basis: &Basis, sigma2: f64, m: usize, gamma: f64, e_prime: usize) -> Result<f64> {
    match basis.lambdas() {
        Some(l) => {
            let c = gamma * sigma2 / m as f64;
            let trace: f64 = l[..e_prime].iter().map(|l| l / (l + c)).sum();
            Ok(2.0 * sigma2 / m as f64 * trace)
        }
        None => {
            let gram = basis
                .expected_gram()
                .ok_or_else(|| Error::InvalidInput("basis has no expected Gram matrix".into()))?;
            sections_dof(gram, basis.precision(), sigma2, m, gamma, e_prime)
        }
    }
}

/// Degrees-of-freedom term for a non-diagonal prior: `2 (sigma^2/M) Tr(S)`
/// over the leading `E'` block.
pub fn sections_dof(
    gram: &DMatrix<f64>,
    precision: &DMatrix<f64>,
    sigma2: f64,
    m: usize,
    gamma: f64,
    e_prime: usize,
) -> Result<f64> {
    if e_prime == 0 {
        return Ok(0.0);
    }
    let c = gamma * sigma2 / m as f64;
    let g = leading(gram, e_prime);
    let system = &g + leading(precision, e_prime) * c;
    // Tr(G A^-1) = Tr(A^-1 G)
    let trace = SpdFactor::new(&system)?.solve_mat(&g).trace();
    Ok(2.0 * sigma2 / m as f64 * trace)
}

/// `J_B = |z - z_hat|^2 + 2 (sigma^2/M) sum_{e <= E'} lambda_e / (lambda_e + gamma sigma^2/M)`.
pub fn sure_risk_b(
    z: &DVector<f64>,
    zhat: &DVector<f64>,
    lambdas: &[f64],
    sigma2: f64,
    m: usize,
    gamma: f64,
    e_prime: usize,
) -> SureEvaluation {
    let c = gamma * sigma2 / m as f64;
    let trace: f64 = lambdas[..e_prime].iter().map(|l| l / (l + c)).sum();
    SureEvaluation::new(
        gamma,
        e_prime,
        residual_norm(z, zhat),
        2.0 * sigma2 / m as f64 * trace,
    )
}

/// Score a B family given its predicted `z_hat` values; ties go to the
/// smaller `E'`, then the larger gamma.
pub fn select_b(
    z: &DVector<f64>,
    family: &[BCandidate],
    zhat: &[DVector<f64>],
    basis: &Basis,
    sigma2: f64,
    m: usize,
) -> Result<TuneOutcome> {
    let trace: Vec<SureEvaluation> = family
        .iter()
        .zip(zhat)
        .filter_map(|(c, zh)| {
            let dof = b_dof(basis, sigma2, m, c.gamma, c.e_prime).ok()?;
            Some(SureEvaluation::new(
                c.gamma,
                c.e_prime,
                residual_norm(z, zh),
                dof,
            ))
        })
        .collect();
    let best = select(&trace, prefer_b).ok_or(Error::TuningFailed)?;
    Ok(TuneOutcome { best, trace })
}

/// Centralized joint selection of `(gamma, E')` for the B estimator.
pub fn tune_b(
    stats: &SufficientStatistics,
    basis: &Basis,
    sigma2: f64,
    grid: &TuningGrid,
) -> Result<TuneOutcome> {
    let family = b_family(&stats.z, stats.m, basis, sigma2, grid)?;
    let zhat = predicted_z(&stats.v, &family);
    select_b(&stats.z, &family, &zhat, basis, sigma2, stats.m)
}

/// `sum residual^2 / (n - E)` of the unregularized A fit on a calibration set.
pub fn estimate_noise_variance(calibration: &Dataset, basis: &Arc<Basis>) -> Result<f64> {
    let (n, e) = (calibration.len(), basis.dim());
    if n <= e {
        return Err(Error::InsufficientData { needed: e, got: n });
    }
    let stats = SufficientStatistics::from_data(calibration, basis);
    let fit = estimate_a(&stats, basis, 0.0, 0.0)?;
    let rss: f64 = calibration
        .inputs
        .iter()
        .zip(&calibration.outputs)
        .map(|(x, y)| (y - fit.predict(x)).powi(2))
        .sum();
    Ok(rss / (n - e) as f64)
}

/// Hyperparameters minimizing a known error functional.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OracleOutcome {
    pub gamma: f64,
    #[serde(rename = "E_prime")]
    pub e_prime: usize,
    pub error: f64,
}

fn oracle_select(
    scored: impl Iterator<Item = OracleOutcome>,
    prefer: impl Fn(&SureEvaluation, &SureEvaluation) -> bool,
) -> Result<OracleOutcome> {
    let as_eval = |o: &OracleOutcome| SureEvaluation::new(o.gamma, o.e_prime, o.error, 0.0);
    let mut best: Option<OracleOutcome> = None;
    for o in scored.filter(|o| o.error.is_finite()) {
        best = match best {
            None => Some(o),
            Some(b)
                if o.error < b.error
                    || (o.error == b.error && prefer(&as_eval(&o), &as_eval(&b))) =>
            {
                Some(o)
            }
            keep => keep,
        };
    }
    best.ok_or(Error::TuningFailed)
}

/// Oracle over the A family; `error` maps coefficients to the true loss
/// (coefficient error for synthetic truths, test-set RSS for field data).
pub fn oracle_tune_a(
    path: &SurePathA,
    gammas: &[f64],
    error: impl Fn(&DVector<f64>) -> f64,
) -> Result<OracleOutcome> {
    let e = path.stats.dim();
    oracle_select(
        gammas.iter().filter_map(|&g| {
            let a = path.coefficients(g).ok()?;
            Some(OracleOutcome {
                gamma: g,
                e_prime: e,
                error: error(&a),
            })
        }),
        prefer_a,
    )
}

pub fn oracle_tune_b(
    family: &[BCandidate],
    error: impl Fn(&DVector<f64>) -> f64,
) -> Result<OracleOutcome> {
    oracle_select(
        family.iter().map(|c| OracleOutcome {
            gamma: c.gamma,
            e_prime: c.e_prime,
            error: error(&c.a_hat),
        }),
        prefer_b,
    )
}

/// `sum_{e <= E} (a_e - a_hat_e)^2 + sum_{e > E} a_e^2 + unresolved_tail`,
/// the squared `L2(mu)` error of an eigenfunction-basis estimate against a
/// truth with coefficients `truth`.
pub fn coefficient_error(truth: &[f64], a_hat: &DVector<f64>, unresolved_tail: f64) -> f64 {
    let e = a_hat.len().min(truth.len());
    let head: f64 = (0..e).map(|i| (truth[i] - a_hat[i]).powi(2)).sum();
    let rest: f64 = truth[e..].iter().map(|a| a * a).sum();
    head + rest + unresolved_tail
}

/// Residual sum of squares of `a_hat` on a test set.
pub fn test_rss(basis: &Basis, test: &Dataset, a_hat: &DVector<f64>) -> f64 {
    let mut g = vec![0.0; basis.dim()];
    test.inputs
        .iter()
        .zip(&test.outputs)
        .map(|(x, y)| {
            basis.eval_into(x, &mut g);
            let f: f64 = g.iter().zip(a_hat.iter()).map(|(p, a)| p * a).sum();
            (y - f).powi(2)
        })
        .sum()
}
