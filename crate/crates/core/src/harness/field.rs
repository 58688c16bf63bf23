use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::synthetic::MeanSe;
use crate::error::{ensure, Error, Result};
use crate::kernel_expansion::{
    expected_gram, Basis, EigenSystem, GramMethod, InputMeasure, KernelSpec, Sampling,
};
use crate::linalg::logspace;
use crate::regression::{Dataset, SufficientStatistics};
use crate::seeding::{derive_seed, rng, stream};
use crate::tuning::{
    b_family, estimate_noise_variance, oracle_tune_a, oracle_tune_b, predicted_z, select_b,
    test_rss, tune_a, SurePathA, TuningGrid,
};

/// Names of the input and output columns in a field CSV. Without a
/// mapping the schema is `x_1..x_d, y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub inputs: Vec<String>,
    pub output: String,
}

fn header_error(message: String) -> Error {
    Error::Parse { row: 1, message }
}

/// Read a field CSV with a header row. Row numbers in errors are file lines.
pub fn read_field_csv<R: std::io::Read>(
    reader: R,
    mapping: Option<&ColumnMapping>,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut seen = HashSet::new();
    if let Some(dup) = headers.iter().find(|h| !seen.insert(h.as_str())) {
        return Err(header_error(format!("duplicate column `{dup}`")));
    }
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| header_error(format!("missing column `{name}`")))
    };
    let (input_cols, output_col) = match mapping {
        Some(m) => (
            m.inputs
                .iter()
                .map(|n| position(n))
                .collect::<Result<Vec<_>>>()?,
            position(&m.output)?,
        ),
        None => {
            let y = position("y")?;
            let xs: Vec<usize> = (0..headers.len()).filter(|&i| i != y).collect();
            for (k, &i) in xs.iter().enumerate() {
                if headers[i] != format!("x_{}", k + 1) {
                    return Err(header_error(format!(
                        "expected column `x_{}`, found `{}`",
                        k + 1,
                        headers[i]
                    )));
                }
            }
            (xs, y)
        }
    };
    if input_cols.is_empty() {
        return Err(header_error("no input columns".into()));
    }
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let field = |c: usize| -> Result<f64> {
            let s = rec.get(c).ok_or_else(|| Error::Parse {
                row,
                message: format!("missing field {}", c + 1),
            })?;
            s.parse::<f64>().map_err(|e| Error::Parse {
                row,
                message: format!("`{s}`: {e}"),
            })
        };
        inputs.push(
            input_cols
                .iter()
                .map(|&c| field(c))
                .collect::<Result<Vec<_>>>()?,
        );
        outputs.push(field(output_col)?);
    }
    if inputs.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    Dataset::new(inputs, outputs, 0.0)
}

pub fn load_field_csv(path: &Path, mapping: Option<&ColumnMapping>) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_field_csv(file, mapping)
}

/// Per-axis affine map of a bounding box onto `[0, 1]^d`. Constant axes map to 0.5.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxisRescale {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl AxisRescale {
    pub fn fit<'a>(points: impl IntoIterator<Item = &'a Vec<f64>>) -> Self {
        let mut lower: Vec<f64> = Vec::new();
        let mut upper: Vec<f64> = Vec::new();
        for p in points {
            if lower.is_empty() {
                lower = p.clone();
                upper = p.clone();
            }
            for j in 0..p.len() {
                lower[j] = lower[j].min(p[j]);
                upper[j] = upper[j].max(p[j]);
            }
        }
        Self { lower, upper }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| {
                let w = self.upper[j] - self.lower[j];
                if w > 0.0 {
                    ((v - self.lower[j]) / w).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            })
            .collect()
    }

    pub fn apply_dataset(&self, data: &Dataset) -> Result<Dataset> {
        Dataset::new(
            data.inputs.iter().map(|x| self.apply(x)).collect(),
            data.outputs.clone(),
            data.noise_variance,
        )
    }
}

/// Disjoint train, test and noise-calibration sets on the unit hyper-rectangle.
#[derive(Clone, Debug)]
pub struct FieldSplit {
    pub train: Dataset,
    pub test: Dataset,
    pub calibration: Dataset,
    pub rescale: AxisRescale,
}

impl FieldSplit {
    /// Shuffle `data` with `seed`; with no separate calibration set the first
    /// `calibration_fraction` of the shuffled rows calibrates the noise. The
    /// remaining rows are split `train_fraction` to train, the rest to test.
    pub fn new(
        data: &Dataset,
        calibration: Option<&Dataset>,
        calibration_fraction: f64,
        train_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        ensure(train_fraction > 0.0 && train_fraction < 1.0, || {
            format!("train fraction must lie in (0, 1), got {train_fraction}")
        })?;
        ensure((0.0..1.0).contains(&calibration_fraction), || {
            format!("calibration fraction must lie in [0, 1), got {calibration_fraction}")
        })?;
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.shuffle(&mut rng(derive_seed(seed, stream::SPLIT, 0)));
        let (calib_idx, rest) = match calibration {
            Some(_) => (&idx[..0], &idx[..]),
            None => idx.split_at((calibration_fraction * data.len() as f64).round() as usize),
        };
        let n_train = (train_fraction * rest.len() as f64).round() as usize;
        if n_train == 0 || n_train == rest.len() {
            return Err(Error::InsufficientData {
                needed: 2,
                got: rest.len(),
            });
        }
        let (train_idx, test_idx) = rest.split_at(n_train);
        let calib = match calibration {
            Some(c) => c.clone(),
            None if calib_idx.is_empty() => {
                return Err(Error::InsufficientData { needed: 1, got: 0 })
            }
            None => data.select(calib_idx)?,
        };
        let rescale = AxisRescale::fit(data.inputs.iter().chain(&calib.inputs));
        Ok(Self {
            train: rescale.apply_dataset(&data.select(train_idx)?)?,
            test: rescale.apply_dataset(&data.select(test_idx)?)?,
            calibration: rescale.apply_dataset(&calib)?,
            rescale,
        })
    }
}

/// Basis used by the field pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldBasis {
    /// Numerical Karhunen-Loeve eigenfunctions under the uniform measure on
    /// the unit hyper-rectangle, from `q` anchor draws.
    Numerical {
        kernel: KernelSpec,
        q: usize,
        #[serde(default)]
        sampling: Sampling,
    },
    /// Nystrom basis anchored at every training input; the expected Gram
    /// under the uniform measure comes from `gram`.
    Nystrom {
        kernel: KernelSpec,
        gram: GramMethod,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    pub columns: Option<ColumnMapping>,
    /// Separate noise-calibration CSV (same schema); when absent,
    /// `calibration_fraction` of the rows is held out instead.
    pub calibration_data: Option<std::path::PathBuf>,
    pub calibration_fraction: f64,
    pub train_fraction: f64,
    pub basis: FieldBasis,
    #[serde(rename = "E")]
    pub e: usize,
    pub gammas_a: Vec<f64>,
    pub gammas_b: Vec<f64>,
    pub truncations_b: Vec<usize>,
    pub runs: usize,
    pub seed: u64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            columns: None,
            calibration_data: None,
            calibration_fraction: 0.25,
            train_fraction: 2.0 / 3.0,
            basis: FieldBasis::Numerical {
                kernel: KernelSpec::Gaussian { eta: 0.1 },
                q: 1000,
                sampling: Sampling::Stratified,
            },
            e: 20,
            gammas_a: logspace(1e-5, 1e5, 50),
            gammas_b: vec![0.0],
            truncations_b: (2..=20).step_by(2).collect(),
            runs: 10,
            seed: 0,
        }
    }
}

/// Mean test-set squared error of SURE- and oracle-tuned estimators in one run.
#[derive(Clone, Debug, Serialize)]
pub struct FieldRunRow {
    pub run: u64,
    #[serde(rename = "n_train")]
    pub n_train: usize,
    pub sigma2_hat: f64,
    pub rss_a_sure: f64,
    pub rss_a_oracle: f64,
    pub gamma_a_sure: f64,
    pub gamma_a_oracle: f64,
    pub rss_b_sure: f64,
    pub rss_b_oracle: f64,
    pub gamma_b_sure: f64,
    pub e_prime_b_sure: usize,
    pub gamma_b_oracle: f64,
    pub e_prime_b_oracle: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct FieldReport {
    #[serde(skip)]
    pub rows: Vec<FieldRunRow>,
    pub runs: usize,
    pub basis: String,
    pub rss_a_sure: MeanSe,
    pub rss_a_oracle: MeanSe,
    pub rss_b_sure: MeanSe,
    pub rss_b_oracle: MeanSe,
}

impl FieldReport {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

fn build_basis(
    cfg: &FieldConfig,
    d: usize,
    train: &Dataset,
    shared: Option<&Arc<Basis>>,
) -> Result<Arc<Basis>> {
    if let Some(b) = shared {
        return Ok(b.clone());
    }
    match &cfg.basis {
        FieldBasis::Numerical {
            kernel,
            q,
            sampling,
        } => {
            let sys = EigenSystem::numerical(
                kernel,
                &InputMeasure::unit_cube(d),
                *q,
                cfg.e,
                derive_seed(cfg.seed, stream::ANCHORS, 0),
                *sampling,
            )?;
            Ok(Arc::new(Basis::kl_eigen(sys, cfg.e)?))
        }
        FieldBasis::Nystrom { kernel, gram } => {
            let b = Basis::nystrom(kernel, train.inputs.clone(), cfg.e)?;
            let g = expected_gram(&b, &InputMeasure::unit_cube(d), *gram)?;
            Ok(Arc::new(b.with_expected_gram(g)?))
        }
    }
}

/// Repeated random splits of a field dataset; each run estimates the noise
/// variance on the calibration set and compares SURE tuning with the
/// test-set oracle for both estimators.
pub fn field_pipeline(
    data: &Dataset,
    calibration: Option<&Dataset>,
    cfg: &FieldConfig,
) -> Result<FieldReport> {
    ensure(cfg.runs >= 1 && cfg.e >= 1, || {
        "field pipeline needs runs >= 1 and E >= 1".into()
    })?;
    let grid_b = TuningGrid::new(cfg.gammas_b.clone(), cfg.truncations_b.clone())?;
    let d = data.dim();
    if let Some(c) = calibration {
        ensure(c.dim() == d, || {
            "calibration set has a different input dimension".into()
        })?;
    }
    let shared = match cfg.basis {
        FieldBasis::Numerical { .. } => Some(build_basis(cfg, d, data, None)?),
        FieldBasis::Nystrom { .. } => None,
    };
    let mut rows = Vec::with_capacity(cfg.runs);
    for run in 0..cfg.runs as u64 {
        let split = FieldSplit::new(
            data,
            calibration,
            cfg.calibration_fraction,
            cfg.train_fraction,
            derive_seed(cfg.seed, stream::SPLIT, run),
        )?;
        let basis = build_basis(cfg, d, &split.train, shared.as_ref())?;
        let sigma2 = estimate_noise_variance(&split.calibration, &basis)?;
        let stats = SufficientStatistics::from_data(&split.train, &basis);
        let n_test = split.test.len() as f64;
        let rss = |a: &DVector<f64>| test_rss(&basis, &split.test, a) / n_test;

        let sure_a = tune_a(&stats, basis.precision(), sigma2, &cfg.gammas_a)?.best;
        let path = SurePathA::new(&stats, basis.precision(), sigma2)?;
        let oracle_a = oracle_tune_a(&path, &cfg.gammas_a, rss)?;

        let family = b_family(&stats.z, stats.m, &basis, sigma2, &grid_b)?;
        let zhat = predicted_z(&stats.v, &family);
        let sure_b = select_b(&stats.z, &family, &zhat, &basis, sigma2, stats.m)?.best;
        let chosen = family
            .iter()
            .find(|c| c.gamma == sure_b.gamma && c.e_prime == sure_b.e_prime)
            .expect("selection comes from the family");
        let oracle_b = oracle_tune_b(&family, rss)?;
        rows.push(FieldRunRow {
            run,
            n_train: split.train.len(),
            sigma2_hat: sigma2,
            rss_a_sure: rss(&path.coefficients(sure_a.gamma)?),
            rss_a_oracle: oracle_a.error,
            gamma_a_sure: sure_a.gamma,
            gamma_a_oracle: oracle_a.gamma,
            rss_b_sure: rss(&chosen.a_hat),
            rss_b_oracle: oracle_b.error,
            gamma_b_sure: sure_b.gamma,
            e_prime_b_sure: sure_b.e_prime,
            gamma_b_oracle: oracle_b.gamma,
            e_prime_b_oracle: oracle_b.e_prime,
        });
    }
    let col = |f: fn(&FieldRunRow) -> f64| MeanSe::of(&rows.iter().map(f).collect::<Vec<_>>());
    Ok(FieldReport {
        runs: rows.len(),
        basis: shared
            .map(|b| b.id().to_string())
            .unwrap_or_else(|| format!("nystrom:training-inputs:E={}", cfg.e)),
        rss_a_sure: col(|r| r.rss_a_sure),
        rss_a_oracle: col(|r| r.rss_a_oracle),
        rss_b_sure: col(|r| r.rss_b_sure),
        rss_b_oracle: col(|r| r.rss_b_oracle),
        rows,
    })
}
