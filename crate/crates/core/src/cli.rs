//! Command-line front end. Every subcommand reads a JSON or TOML config,
//! takes `--seed`, writes CSV or JSON, and reports failures as an error JSON
//! on stderr with a nonzero exit code.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::consensus::{
    distributed_fit_a, distributed_fit_b, run_average_consensus, ConsensusConfig, NetworkTopology,
};
use crate::error::{Error, Result};
use crate::harness::{
    bounds_experiment, consistency_trend_experiment, field_pipeline, load_config, load_field_csv,
    sure_vs_oracle_experiment, BoundsConfig, EigenSpec, FieldConfig, SureStudyConfig, TrendConfig,
};
use crate::kernel_expansion::io::{load_points, read_doc};
use crate::kernel_expansion::{expected_gram, Basis, GramMethod, InputMeasure, KernelSpec};
use crate::linalg::logspace;
use crate::regression::{estimate_a, estimate_b, Dataset, SufficientStatistics};
use crate::seeding::{derive_seed, rng, stream};
use crate::tuning::{tune_a, tune_b, write_trace, TuneOutcome, TuningGrid};

#[derive(Debug, Parser)]
#[command(
    name = "klgp",
    version,
    about = "Distributed Gaussian-process regression experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON or TOML config file (`.toml` selects TOML).
    pub config: PathBuf,
    /// Master seed; overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Primary output (CSV or JSON); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON summary file; stdout after the primary output when absent.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bound curves (and optional Monte Carlo error curves) over E as CSV.
    Bounds(Common),
    /// Fit an estimator centrally or over a simulated agent network.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Run the consensus protocol with one agent per measurement.
        #[arg(long)]
        distributed: bool,
    },
    /// SURE trace of the A or B estimator as CSV.
    Tune(Common),
    /// Average consensus on random initial values; per-round deviations as CSV.
    Simulate(Common),
    /// SURE versus oracle Monte Carlo study.
    SureStudy(Common),
    /// Field-data pipeline on a CSV of measurements.
    Field(Common),
    /// Error-versus-M trends at fixed and growing E.
    Trend(Common),
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let report = json!({ "error": "usage-error", "message": e.to_string().trim() });
            eprintln!("{report}");
            return 2;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::to_string(&e.to_report()).expect("error report serializes")
            );
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bounds(c) => {
            let mut cfg: BoundsConfig = load_config(&c.config)?;
            cfg.seed = c.seed.unwrap_or(cfg.seed);
            let table = bounds_experiment(&cfg)?;
            emit(&c, |w| table.write_csv(w), &table_summary(&table)?)
        }
        Command::Fit {
            common,
            distributed,
        } => fit(&common, distributed),
        Command::Tune(c) => tune(&c),
        Command::Simulate(c) => simulate(&c),
        Command::SureStudy(c) => {
            let mut cfg: SureStudyConfig = load_config(&c.config)?;
            cfg.seed = c.seed.unwrap_or(cfg.seed);
            let study = sure_vs_oracle_experiment(&cfg)?;
            emit(&c, |w| study.write_csv(w), &serde_json::to_value(&study)?)
        }
        Command::Field(c) => field(&c),
        Command::Trend(c) => {
            let mut cfg: TrendConfig = load_config(&c.config)?;
            cfg.seed = c.seed.unwrap_or(cfg.seed);
            let table = consistency_trend_experiment(&cfg)?;
            let summary = json!({ "runs": cfg.runs, "rows": table.rows });
            emit(&c, |w| table.write_csv(w), &summary)
        }
    }
}

fn table_summary(t: &crate::harness::BoundsTable) -> Result<serde_json::Value> {
    Ok(json!({
        "argmin_bnd_a": t.argmin_a,
        "argmin_bnd_b": t.argmin_b,
        "prior_variance": t.prior_variance,
        "mc_runs": t.mc_runs,
    }))
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| Error::io(p, e))?),
        None => Box::new(std::io::stdout().lock()),
    })
}

/// Write the primary output, then the JSON summary.
fn emit(
    c: &Common,
    primary: impl FnOnce(&mut dyn Write) -> Result<()>,
    summary: &serde_json::Value,
) -> Result<()> {
    {
        let mut w = open_out(c.out.as_deref())?;
        primary(&mut w)?;
        w.flush().map_err(|e| Error::io("<output>", e))?;
    }
    let text = serde_json::to_string_pretty(summary)?;
    match &c.summary {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Paths in a config are relative to the config file.
fn resolve(config: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config.parent().unwrap_or(Path::new(".")).join(p)
    }
}

// ------------------------------------------------------------ fit / tune

/// Anchor points given inline or as a CSV file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnchorSource {
    Inline(Vec<Vec<f64>>),
    File(PathBuf),
}

impl AnchorSource {
    fn load(&self, config: &Path) -> Result<Vec<Vec<f64>>> {
        match self {
            AnchorSource::Inline(p) => Ok(p.clone()),
            AnchorSource::File(f) => load_points(&resolve(config, f)),
        }
    }
}

/// Basis of a fit. Section and Nystrom bases need `measure` for the B
/// estimator, which uses their expected Gram matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisSpec {
    KlEigen {
        #[serde(default)]
        eigen: EigenSpec,
        #[serde(rename = "E")]
        e: usize,
    },
    KernelSections {
        kernel: KernelSpec,
        anchors: AnchorSource,
        measure: Option<InputMeasure>,
        gram: Option<GramMethod>,
    },
    Nystrom {
        kernel: KernelSpec,
        anchors: AnchorSource,
        #[serde(rename = "E")]
        e: usize,
        measure: Option<InputMeasure>,
        gram: Option<GramMethod>,
    },
    /// Basis exported as an expansion document.
    File { path: PathBuf },
}

impl BasisSpec {
    pub fn build(&self, config: &Path, seed: u64) -> Result<Arc<Basis>> {
        let with_gram = |b: Basis,
                         measure: &Option<InputMeasure>,
                         gram: &Option<GramMethod>|
         -> Result<Basis> {
            match measure {
                Some(m) => {
                    let g = expected_gram(
                        &b,
                        m,
                        gram.unwrap_or(GramMethod::Quadrature { n_nodes: 64 }),
                    )?;
                    b.with_expected_gram(g)
                }
                None => Ok(b),
            }
        };
        let basis = match self {
            BasisSpec::KlEigen { eigen, e } => {
                let (sys, _) = eigen.build(*e, derive_seed(seed, stream::ANCHORS, 0))?;
                Basis::kl_eigen(sys, *e)?
            }
            BasisSpec::KernelSections {
                kernel,
                anchors,
                measure,
                gram,
            } => with_gram(
                Basis::kernel_sections(kernel, anchors.load(config)?)?,
                measure,
                gram,
            )?,
            BasisSpec::Nystrom {
                kernel,
                anchors,
                e,
                measure,
                gram,
            } => with_gram(
                Basis::nystrom(kernel, anchors.load(config)?, *e)?,
                measure,
                gram,
            )?,
            BasisSpec::File { path } => Basis::from_doc(&read_doc(&resolve(config, path))?)?,
        };
        Ok(Arc::new(basis))
    }
}

/// Network over which a distributed fit or a consensus simulation runs.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySpec {
    Path,
    Ring,
    Complete,
    ErdosRenyi {
        #[serde(default)]
        p: Option<f64>,
    },
    /// CSV of `u,v` rows with zero-based labels.
    EdgeList {
        path: PathBuf,
    },
}

impl TopologySpec {
    pub fn build(&self, n: usize, config: &Path, seed: u64) -> Result<NetworkTopology> {
        match self {
            TopologySpec::Path => NetworkTopology::path(n),
            TopologySpec::Ring => NetworkTopology::ring(n),
            TopologySpec::Complete => NetworkTopology::complete(n),
            TopologySpec::ErdosRenyi { p } => {
                NetworkTopology::erdos_renyi(n, *p, derive_seed(seed, stream::TOPOLOGY, 0))
            }
            TopologySpec::EdgeList { path } => {
                NetworkTopology::load_edge_csv(&resolve(config, path), Some(n))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorChoice {
    #[default]
    A,
    B,
}

/// Config shared by `fit` and `tune`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitConfig {
    /// CSV with header `x_1..x_d, y`.
    pub data: PathBuf,
    pub sigma2: f64,
    pub basis: BasisSpec,
    #[serde(default)]
    pub estimator: EstimatorChoice,
    /// Fixed regularization; tuned by SURE over `gammas` when absent.
    pub gamma: Option<f64>,
    /// Fixed truncation for B; tuned jointly with gamma when absent.
    #[serde(rename = "E_prime")]
    pub e_prime: Option<usize>,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    /// Candidate truncations for B; every `E' = 1..E` when empty.
    #[serde(default)]
    pub truncations: Vec<usize>,
    #[serde(default)]
    pub topology: Option<TopologySpec>,
    #[serde(default)]
    pub consensus: ConsensusConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_gammas() -> Vec<f64> {
    logspace(1e-3, 1e3, 50)
}

impl FitConfig {
    fn grid(&self, e: usize) -> Result<TuningGrid> {
        let gammas = self.gamma.map_or_else(|| self.gammas.clone(), |g| vec![g]);
        let truncations = match (self.e_prime, self.truncations.is_empty()) {
            (Some(k), _) => vec![k],
            (None, true) => (1..=e).collect(),
            (None, false) => self.truncations.clone(),
        };
        TuningGrid::new(gammas, truncations)
    }
}

fn load_fit(c: &Common) -> Result<(FitConfig, Dataset, Arc<Basis>)> {
    let mut cfg: FitConfig = load_config(&c.config)?;
    cfg.seed = c.seed.unwrap_or(cfg.seed);
    let data = Dataset::load_csv(&resolve(&c.config, &cfg.data), cfg.sigma2)?;
    let basis = cfg.basis.build(&c.config, cfg.seed)?;
    if basis.input_dim() != data.dim() {
        return Err(Error::InvalidInput(format!(
            "data has {} input columns, basis expects {}",
            data.dim(),
            basis.input_dim()
        )));
    }
    Ok((cfg, data, basis))
}

fn tune_central(
    cfg: &FitConfig,
    stats: &SufficientStatistics,
    basis: &Basis,
) -> Result<TuneOutcome> {
    let grid = cfg.grid(basis.dim())?;
    match cfg.estimator {
        EstimatorChoice::A => tune_a(stats, basis.precision(), cfg.sigma2, &grid.gammas),
        EstimatorChoice::B => tune_b(stats, basis, cfg.sigma2, &grid),
    }
}

fn fit(c: &Common, distributed: bool) -> Result<()> {
    let (cfg, data, basis) = load_fit(c)?;
    let grid = cfg.grid(basis.dim())?;
    if distributed {
        let spec = cfg.topology.as_ref().ok_or_else(|| {
            Error::InvalidTopology("distributed fit needs a `topology` entry".into())
        })?;
        let topo = spec.build(data.len(), &c.config, cfg.seed)?;
        let fit = match cfg.estimator {
            EstimatorChoice::A => distributed_fit_a(
                &data,
                &basis,
                cfg.sigma2,
                &grid.gammas,
                &topo,
                &cfg.consensus,
            )?,
            EstimatorChoice::B => {
                distributed_fit_b(&data, &basis, cfg.sigma2, &grid, &topo, &cfg.consensus)?
            }
        };
        let agents: Vec<_> = fit.agents.iter().map(|a| a.estimate.to_doc()).collect();
        let doc = json!({ "summary": fit.summary, "agents": agents });
        emit(
            c,
            |w| write_json(w, &doc),
            &serde_json::to_value(&fit.summary)?,
        )
    } else {
        let stats = SufficientStatistics::from_data(&data, &basis);
        let best = tune_central(&cfg, &stats, &basis)?.best;
        let est = match cfg.estimator {
            EstimatorChoice::A => estimate_a(&stats, &basis, cfg.sigma2, best.gamma)?,
            EstimatorChoice::B => estimate_b(&stats, &basis, cfg.sigma2, best.gamma, best.e_prime)?,
        };
        let doc = serde_json::to_value(est.to_doc())?;
        emit(c, |w| write_json(w, &doc), &serde_json::to_value(best)?)
    }
}

fn write_json(w: &mut dyn Write, v: &serde_json::Value) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, v)?;
    writeln!(w).map_err(|e| Error::io("<output>", e))
}

fn tune(c: &Common) -> Result<()> {
    let (cfg, data, basis) = load_fit(c)?;
    let stats = SufficientStatistics::from_data(&data, &basis);
    let outcome = tune_central(&cfg, &stats, &basis)?;
    emit(
        c,
        |w| write_trace(&outcome.trace, w),
        &serde_json::to_value(outcome.best)?,
    )
}

// -------------------------------------------------------------- simulate

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub agents: usize,
    pub topology: TopologySpec,
    #[serde(default)]
    pub consensus: ConsensusConfig,
    /// Length of each agent's vector when `values` is absent.
    #[serde(default = "one")]
    pub dim: usize,
    /// Explicit initial vectors, one per agent; uniform on `[0, 1)` otherwise.
    #[serde(default)]
    pub values: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

fn simulate(c: &Common) -> Result<()> {
    let mut cfg: SimulateConfig = load_config(&c.config)?;
    cfg.seed = c.seed.unwrap_or(cfg.seed);
    let topo = cfg.topology.build(cfg.agents, &c.config, cfg.seed)?;
    let values = match cfg.values.clone() {
        Some(v) => v,
        None => {
            let mut r = rng(derive_seed(cfg.seed, stream::INPUTS, 0));
            (0..cfg.agents)
                .map(|_| (0..cfg.dim).map(|_| r.random::<f64>()).collect())
                .collect()
        }
    };
    let run = run_average_consensus(&values, &topo, &cfg.consensus)?;
    let summary = json!({
        "rounds": run.rounds,
        "converged": run.converged,
        "payload_scalars_per_round": values.first().map_or(0, Vec::len),
        "max_disagreement": run.max_deviation(),
        "edges": topo.edges().len(),
    });
    emit(
        c,
        |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["round", "max_deviation"])?;
            for (k, d) in run.deviation_history.iter().enumerate() {
                csv.write_record([k.to_string(), d.to_string()])?;
            }
            csv.flush().map_err(|e| Error::io("<csv>", e))
        },
        &summary,
    )
}

// ----------------------------------------------------------------- field

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldCommandConfig {
    /// Measurements CSV (header `x_1..x_d, y` or mapped via `columns`).
    pub data: PathBuf,
    #[serde(flatten)]
    pub pipeline: FieldConfig,
}

fn field(c: &Common) -> Result<()> {
    let mut cfg: FieldCommandConfig = load_config(&c.config)?;
    cfg.pipeline.seed = c.seed.unwrap_or(cfg.pipeline.seed);
    let mapping = cfg.pipeline.columns.as_ref();
    let data = load_field_csv(&resolve(&c.config, &cfg.data), mapping)?;
    let calibration = cfg
        .pipeline
        .calibration_data
        .as_ref()
        .map(|p| load_field_csv(&resolve(&c.config, p), mapping))
        .transpose()?;
    let report = field_pipeline(&data, calibration.as_ref(), &cfg.pipeline)?;
    emit(c, |w| report.write_csv(w), &serde_json::to_value(&report)?)
}
