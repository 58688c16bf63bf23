use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::EigenSpec;
use super::synthetic::{generate_dataset, sample_truth, MeanSe, SyntheticTruth};
use crate::bounds::{bound_curve, curve_argmin, EpsilonGrid, Estimator};
use crate::error::{ensure, Error, Result};
use crate::kernel_expansion::{Basis, EigenSystem, InputMeasure};
use crate::linalg::{leading, leading_vec, logspace, SpdFactor};
use crate::regression::{b_coefficients, SufficientStatistics};
use crate::seeding::{derive_seed, stream};
use crate::tuning::{
    b_family, coefficient_error, oracle_tune_a, oracle_tune_b, predicted_z, select_b, tune_a,
    SurePathA, TuningGrid,
};

fn write_rows<T: Serialize, W: std::io::Write>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// Synthetic setting shared by the Monte Carlo drivers: one truth and one
/// dataset per run, seeds derived from the master seed and run index.
struct Setting {
    eigen: Arc<EigenSystem>,
    measure: InputMeasure,
    e_truth: usize,
    sigma2: f64,
    seed: u64,
}

impl Setting {
    fn new(
        spec: &EigenSpec,
        e_max: usize,
        e_truth: Option<usize>,
        sigma2: f64,
        seed: u64,
    ) -> Result<Self> {
        let e_truth = spec.max_truth(e_truth.unwrap_or(10 * e_max));
        ensure(e_truth >= e_max, || {
            format!("E_truth = {e_truth} is below the largest E = {e_max}")
        })?;
        let (eigen, measure) = spec.build(e_truth, derive_seed(seed, stream::ANCHORS, 0))?;
        Ok(Self {
            eigen,
            measure,
            e_truth,
            sigma2,
            seed,
        })
    }

    fn truth(&self, run: u64) -> Result<SyntheticTruth> {
        sample_truth(
            &self.eigen,
            self.e_truth,
            derive_seed(self.seed, stream::TRUTH, run),
        )
    }

    fn statistics(
        &self,
        truth: &SyntheticTruth,
        basis: &Basis,
        m: usize,
        run: u64,
        k: u64,
    ) -> Result<SufficientStatistics> {
        let seed = derive_seed(
            derive_seed(self.seed, stream::INPUTS, run),
            stream::INPUTS,
            k,
        );
        let data = generate_dataset(truth, &self.measure, m, self.sigma2, seed)?;
        Ok(SufficientStatistics::from_data(&data, basis))
    }

    fn basis(&self, e: usize) -> Result<Arc<Basis>> {
        Ok(Arc::new(Basis::kl_eigen(self.eigen.clone(), e)?))
    }
}

/// A-estimator coefficients on the leading `e` block of larger statistics.
fn leading_a(
    stats: &SufficientStatistics,
    basis: &Basis,
    sigma2: f64,
    gamma: f64,
    e: usize,
) -> Result<DVector<f64>> {
    let c = gamma * sigma2 / stats.m as f64;
    let system = leading(&stats.v, e) + leading(basis.precision(), e) * c;
    Ok(SpdFactor::new(&system)?.solve(&leading_vec(&stats.z, e)))
}

/// `sum_{e < E} (a_e - a_hat_e)^2` over the estimated coefficients only.
fn excess(truth: &[f64], a_hat: &DVector<f64>, e: usize) -> f64 {
    (0..e).map(|i| (truth[i] - a_hat[i]).powi(2)).sum()
}

fn ordered_runs<T: Send>(
    runs: usize,
    f: impl Fn(u64) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    (0..runs as u64).into_par_iter().map(f).collect()
}

// ---------------------------------------------------------------- bounds

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundsConfig {
    pub eigen: EigenSpec,
    #[serde(rename = "M")]
    pub m: usize,
    pub sigma2: f64,
    pub alpha: f64,
    pub e_grid: Vec<usize>,
    pub epsilon_points: usize,
    /// Monte Carlo runs for the true-error curves; 0 skips them.
    pub mc_runs: usize,
    /// Regularization of the estimators in the Monte Carlo curves.
    pub gamma: f64,
    pub e_truth: Option<usize>,
    pub seed: u64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            eigen: EigenSpec::Spline,
            m: 10_000,
            sigma2: 0.01,
            alpha: 0.05,
            e_grid: (1..=100).collect(),
            epsilon_points: 1000,
            mc_runs: 0,
            gamma: 1.0,
            e_truth: None,
            seed: 0,
        }
    }
}

/// One `E` of the bound study; all errors are normalized by the prior variance.
#[derive(Clone, Debug, Serialize)]
pub struct BoundsRow {
    #[serde(rename = "E")]
    pub e: usize,
    pub bnd_a: f64,
    pub bnd_b: f64,
    pub lower_bound: f64,
    pub eps_a: f64,
    pub eps_b: f64,
    pub feasible_a: bool,
    pub feasible_b: bool,
    pub mc_err_a: f64,
    pub mc_se_a: f64,
    pub mc_err_b: f64,
    pub mc_se_b: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundsTable {
    pub rows: Vec<BoundsRow>,
    #[serde(rename = "argmin_bnd_a")]
    pub argmin_a: Option<usize>,
    #[serde(rename = "argmin_bnd_b")]
    pub argmin_b: Option<usize>,
    pub prior_variance: f64,
    pub mc_runs: usize,
}

impl BoundsTable {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        write_rows(&self.rows, writer)
    }
}

/// Bound curves over `E`, optionally with Monte Carlo true-error curves of
/// both estimators at the same `M`.
pub fn bounds_experiment(cfg: &BoundsConfig) -> Result<BoundsTable> {
    ensure(
        !cfg.e_grid.is_empty() && cfg.e_grid.iter().all(|&e| e >= 1),
        || "E grid must be nonempty and positive".into(),
    )?;
    let e_max = *cfg.e_grid.iter().max().unwrap();
    let setting = Setting::new(&cfg.eigen, e_max, cfg.e_truth, cfg.sigma2, cfg.seed)?;
    let eigen = &setting.eigen;
    let grid = EpsilonGrid {
        points: cfg.epsilon_points,
        include_boundary: true,
    };
    let curve_a = bound_curve(
        eigen,
        &cfg.e_grid,
        cfg.m,
        cfg.alpha,
        cfg.sigma2,
        Estimator::A,
        &grid,
    )?;
    let curve_b = bound_curve(
        eigen,
        &cfg.e_grid,
        cfg.m,
        cfg.alpha,
        cfg.sigma2,
        Estimator::B,
        &grid,
    )?;
    let norm = eigen.tail_sum(0);
    let errors: Vec<(Vec<f64>, Vec<f64>)> = if cfg.mc_runs > 0 {
        let basis = setting.basis(e_max)?;
        ordered_runs(cfg.mc_runs, |run| {
            let truth = setting.truth(run)?;
            let stats = setting.statistics(&truth, &basis, cfg.m, run, 0)?;
            let tail = truth.unresolved_tail();
            let mut ea = Vec::with_capacity(cfg.e_grid.len());
            let mut eb = Vec::with_capacity(cfg.e_grid.len());
            for &e in &cfg.e_grid {
                ea.push(match leading_a(&stats, &basis, cfg.sigma2, cfg.gamma, e) {
                    Ok(a) => coefficient_error(truth.coefficients(), &a, tail) / norm,
                    Err(Error::SingularNormalEquations { .. }) => f64::NAN,
                    Err(err) => return Err(err),
                });
                let b = b_coefficients(&stats.z, stats.m, &basis, cfg.sigma2, cfg.gamma, e)?;
                eb.push(coefficient_error(truth.coefficients(), &b, tail) / norm);
            }
            Ok((ea, eb))
        })?
    } else {
        Vec::new()
    };
    let column = |k: usize, second: bool| -> MeanSe {
        if errors.is_empty() {
            return MeanSe {
                mean: f64::NAN,
                se: f64::NAN,
            };
        }
        MeanSe::of(
            &errors
                .iter()
                .map(|r| if second { r.1[k] } else { r.0[k] })
                .collect::<Vec<_>>(),
        )
    };
    let rows = cfg
        .e_grid
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            let (a, b) = (&curve_a[k], &curve_b[k]);
            let ma = column(k, false);
            let mb = column(k, true);
            BoundsRow {
                e,
                bnd_a: a.bnd_normalized,
                bnd_b: b.bnd_normalized,
                lower_bound: a.lower_bound_normalized,
                eps_a: a.epsilon,
                eps_b: b.epsilon,
                feasible_a: a.feasible,
                feasible_b: b.feasible,
                mc_err_a: ma.mean,
                mc_se_a: ma.se,
                mc_err_b: mb.mean,
                mc_se_b: mb.se,
            }
        })
        .collect();
    Ok(BoundsTable {
        rows,
        argmin_a: curve_argmin(&curve_a),
        argmin_b: curve_argmin(&curve_b),
        prior_variance: norm,
        mc_runs: cfg.mc_runs,
    })
}

// ------------------------------------------------------------ SURE study

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SureStudyConfig {
    pub eigen: EigenSpec,
    #[serde(rename = "M")]
    pub m: usize,
    pub sigma2: f64,
    pub runs: usize,
    /// Basis dimension of the A estimator and largest `E'` of the B family.
    #[serde(rename = "E")]
    pub e: usize,
    pub gammas_a: Vec<f64>,
    pub gammas_b: Vec<f64>,
    pub truncations_b: Vec<usize>,
    pub e_truth: Option<usize>,
    pub seed: u64,
}

impl Default for SureStudyConfig {
    fn default() -> Self {
        Self {
            eigen: EigenSpec::Spline,
            m: 1000,
            sigma2: 0.01,
            runs: 100,
            e: 400,
            gammas_a: logspace(1e-3, 1e3, 50),
            gammas_b: vec![1e-3, 0.0, 1e3],
            truncations_b: vec![1, 5, 10, 20, 50, 100, 200, 300, 400],
            e_truth: None,
            seed: 0,
        }
    }
}

/// Normalized errors of the SURE-tuned and oracle-tuned estimators in one run.
#[derive(Clone, Debug, Serialize)]
pub struct SureRunRow {
    pub run: u64,
    pub oracle_a: f64,
    pub sure_a: f64,
    pub gamma_oracle_a: f64,
    pub gamma_sure_a: f64,
    pub oracle_b: f64,
    pub sure_b: f64,
    pub gamma_oracle_b: f64,
    pub e_prime_oracle_b: usize,
    pub gamma_sure_b: f64,
    pub e_prime_sure_b: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SureStudy {
    #[serde(skip)]
    pub rows: Vec<SureRunRow>,
    pub runs: usize,
    /// Mean oracle error over mean SURE error, pooling both estimators.
    pub s_p: f64,
    pub s_p_a: f64,
    pub s_p_b: f64,
    /// Whether every run has oracle error <= SURE error for both estimators.
    pub oracle_dominates: bool,
}

impl SureStudy {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        write_rows(&self.rows, writer)
    }
}

/// Compare SURE tuning with the oracle that knows the true function.
pub fn sure_vs_oracle_experiment(cfg: &SureStudyConfig) -> Result<SureStudy> {
    ensure(cfg.runs >= 1, || "SURE study needs at least one run".into())?;
    let setting = Setting::new(&cfg.eigen, cfg.e, cfg.e_truth, cfg.sigma2, cfg.seed)?;
    let basis = setting.basis(cfg.e)?;
    let grid_b = TuningGrid::new(cfg.gammas_b.clone(), cfg.truncations_b.clone())?;
    let norm = setting.eigen.tail_sum(0);
    let rows = ordered_runs(cfg.runs, |run| {
        let truth = setting.truth(run)?;
        let stats = setting.statistics(&truth, &basis, cfg.m, run, 0)?;
        let err = |a: &DVector<f64>| {
            coefficient_error(truth.coefficients(), a, truth.unresolved_tail()) / norm
        };

        let path = SurePathA::new(&stats, basis.precision(), cfg.sigma2)?;
        let sure_a = tune_a(&stats, basis.precision(), cfg.sigma2, &cfg.gammas_a)?.best;
        let oracle_a = oracle_tune_a(&path, &cfg.gammas_a, err)?;

        let family = b_family(&stats.z, stats.m, &basis, cfg.sigma2, &grid_b)?;
        let zhat = predicted_z(&stats.v, &family);
        let sure_b = select_b(&stats.z, &family, &zhat, &basis, cfg.sigma2, stats.m)?.best;
        let chosen_b = family
            .iter()
            .find(|c| c.gamma == sure_b.gamma && c.e_prime == sure_b.e_prime)
            .expect("selection comes from the family");
        let oracle_b = oracle_tune_b(&family, err)?;
        Ok(SureRunRow {
            run,
            oracle_a: oracle_a.error,
            sure_a: err(&path.coefficients(sure_a.gamma)?),
            gamma_oracle_a: oracle_a.gamma,
            gamma_sure_a: sure_a.gamma,
            oracle_b: oracle_b.error,
            sure_b: err(&chosen_b.a_hat),
            gamma_oracle_b: oracle_b.gamma,
            e_prime_oracle_b: oracle_b.e_prime,
            gamma_sure_b: sure_b.gamma,
            e_prime_sure_b: sure_b.e_prime,
        })
    })?;
    let sum = |f: fn(&SureRunRow) -> f64| rows.iter().map(f).sum::<f64>();
    let (oa, sa, ob, sb) = (
        sum(|r| r.oracle_a),
        sum(|r| r.sure_a),
        sum(|r| r.oracle_b),
        sum(|r| r.sure_b),
    );
    Ok(SureStudy {
        runs: rows.len(),
        s_p: (oa + ob) / (sa + sb),
        s_p_a: oa / sa,
        s_p_b: ob / sb,
        oracle_dominates: rows
            .iter()
            .all(|r| r.oracle_a <= r.sure_a && r.oracle_b <= r.sure_b),
        rows,
    })
}

// --------------------------------------------------------- trend study

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrendConfig {
    pub eigen: EigenSpec,
    pub sigma2: f64,
    #[serde(rename = "M_grid")]
    pub m_grid: Vec<usize>,
    /// Fixed basis dimension of the first study.
    #[serde(rename = "E_fixed")]
    pub e_fixed: usize,
    pub gamma: f64,
    pub runs: usize,
    pub e_truth: Option<usize>,
    pub seed: u64,
}

impl Default for TrendConfig {
    fn default() -> Self {
        Self {
            eigen: EigenSpec::Spline,
            sigma2: 0.01,
            m_grid: vec![100, 400, 1600, 6400],
            e_fixed: 5,
            gamma: 1.0,
            runs: 200,
            e_truth: None,
            seed: 0,
        }
    }
}

/// Growing basis dimension `E(M) = ceil(sqrt(M))`.
pub fn sqrt_schedule(m: usize) -> usize {
    (m as f64).sqrt().ceil() as usize
}

/// Errors of one run at every `M` (unnormalized).
#[derive(Clone, Debug)]
pub struct TrendSample {
    pub err_a_fixed: Vec<f64>,
    pub err_b_fixed: Vec<f64>,
    pub excess_a_fixed: Vec<f64>,
    pub excess_b_fixed: Vec<f64>,
    pub err_a_schedule: Vec<f64>,
    pub err_b_schedule: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrendRow {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "E_fixed")]
    pub e_fixed: usize,
    pub tail_fixed: f64,
    pub err_a_mean: f64,
    pub err_a_se: f64,
    pub err_b_mean: f64,
    pub err_b_se: f64,
    pub excess_a_mean: f64,
    pub excess_a_se: f64,
    pub excess_b_mean: f64,
    pub excess_b_se: f64,
    #[serde(rename = "E_schedule")]
    pub e_schedule: usize,
    pub err_a_schedule_mean: f64,
    pub err_a_schedule_se: f64,
    pub err_b_schedule_mean: f64,
    pub err_b_schedule_se: f64,
}

#[derive(Clone, Debug)]
pub struct TrendTable {
    pub rows: Vec<TrendRow>,
    /// Per-run samples for paired comparisons across `M`.
    pub samples: Vec<TrendSample>,
}

impl TrendTable {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        write_rows(&self.rows, writer)
    }
}

/// Errors of both estimators versus `M`, at a fixed `E` and along the
/// `E(M) = ceil(sqrt(M))` schedule. Each run keeps one truth across the
/// whole `M` grid so that differences between sizes are paired.
pub fn consistency_trend_experiment(cfg: &TrendConfig) -> Result<TrendTable> {
    ensure(
        !cfg.m_grid.is_empty() && cfg.m_grid.windows(2).all(|w| w[0] < w[1]),
        || "M grid must be nonempty and strictly ascending".into(),
    )?;
    ensure(cfg.runs >= 2 && cfg.e_fixed >= 1, || {
        "trend study needs runs >= 2 and E >= 1".into()
    })?;
    let schedule: Vec<usize> = cfg.m_grid.iter().map(|&m| sqrt_schedule(m)).collect();
    let e_max = schedule.iter().copied().chain([cfg.e_fixed]).max().unwrap();
    let setting = Setting::new(&cfg.eigen, e_max, cfg.e_truth, cfg.sigma2, cfg.seed)?;
    let basis = setting.basis(e_max)?;
    let samples = ordered_runs(cfg.runs, |run| {
        let truth = setting.truth(run)?;
        let a = truth.coefficients();
        let tail = truth.unresolved_tail();
        let n = cfg.m_grid.len();
        let mut s = TrendSample {
            err_a_fixed: Vec::with_capacity(n),
            err_b_fixed: Vec::with_capacity(n),
            excess_a_fixed: Vec::with_capacity(n),
            excess_b_fixed: Vec::with_capacity(n),
            err_a_schedule: Vec::with_capacity(n),
            err_b_schedule: Vec::with_capacity(n),
        };
        for (k, (&m, &es)) in cfg.m_grid.iter().zip(&schedule).enumerate() {
            let stats = setting.statistics(&truth, &basis, m, run, k as u64)?;
            let fa = leading_a(&stats, &basis, cfg.sigma2, cfg.gamma, cfg.e_fixed)?;
            let fb = b_coefficients(&stats.z, m, &basis, cfg.sigma2, cfg.gamma, cfg.e_fixed)?;
            s.excess_a_fixed.push(excess(a, &fa, cfg.e_fixed));
            s.excess_b_fixed.push(excess(a, &fb, cfg.e_fixed));
            s.err_a_fixed.push(coefficient_error(a, &fa, tail));
            s.err_b_fixed.push(coefficient_error(a, &fb, tail));
            let sa = leading_a(&stats, &basis, cfg.sigma2, cfg.gamma, es)?;
            let sb = b_coefficients(&stats.z, m, &basis, cfg.sigma2, cfg.gamma, es)?;
            s.err_a_schedule.push(coefficient_error(a, &sa, tail));
            s.err_b_schedule.push(coefficient_error(a, &sb, tail));
        }
        Ok(s)
    })?;
    let stat = |k: usize, pick: fn(&TrendSample) -> &Vec<f64>| {
        MeanSe::of(&samples.iter().map(|s| pick(s)[k]).collect::<Vec<_>>())
    };
    let tail_fixed = setting.eigen.tail_sum(cfg.e_fixed);
    let rows = cfg
        .m_grid
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let ea = stat(k, |s| &s.err_a_fixed);
            let eb = stat(k, |s| &s.err_b_fixed);
            let xa = stat(k, |s| &s.excess_a_fixed);
            let xb = stat(k, |s| &s.excess_b_fixed);
            let sa = stat(k, |s| &s.err_a_schedule);
            let sb = stat(k, |s| &s.err_b_schedule);
            TrendRow {
                m,
                e_fixed: cfg.e_fixed,
                tail_fixed,
                err_a_mean: ea.mean,
                err_a_se: ea.se,
                err_b_mean: eb.mean,
                err_b_se: eb.se,
                excess_a_mean: xa.mean,
                excess_a_se: xa.se,
                excess_b_mean: xb.mean,
                excess_b_se: xb.se,
                e_schedule: schedule[k],
                err_a_schedule_mean: sa.mean,
                err_a_schedule_se: sa.se,
                err_b_schedule_mean: sb.mean,
                err_b_schedule_se: sb.se,
            }
        })
        .collect();
    Ok(TrendTable { rows, samples })
}
