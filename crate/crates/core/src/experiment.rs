//! Experiment configuration and the train/evaluate/aggregate pipeline.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{Fingerprint, NetworkConfig, PAYLOAD_UNIT_BYTES};
use crate::evalkit::{self, delivery_time_histogram, CsvOutError, MetricsError, RunMetrics};
use crate::geo::{generate_grid_traces, load_scenario, GeoError, GridSpec, PropagationConfig, TraceSet};
use crate::marl::{self, evaluate, train, Audit, EvalSettings, MarlError, Policy, Scenario, TrainSchedule, Variant};
use crate::neuro::{load_checkpoint, save_checkpoint, NeuroError, QNetwork};
use crate::ConfigError;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "SIDELINK_OUT";
const DEFAULT_OUTPUT_DIR: &str = "results";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSource {
    /// Built-in Manhattan grid; each seed draws its own routes.
    Grid(GridSpec),
    /// Recorded traces shared by every seed.
    #[serde(rename = "trace")]
    TraceFile {
        trace: PathBuf,
        #[serde(default)]
        obstacles: Option<PathBuf>,
    },
}

impl Default for ScenarioSource {
    fn default() -> Self {
        Self::Grid(GridSpec::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub episodes: usize,
    /// Trace time of the first evaluation episode.
    pub start_ms: u64,
    pub histogram_bin_ms: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            start_ms: 3000,
            histogram_bin_ms: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub expert_episodes: usize,
    pub learner_episodes: usize,
    /// Route seed of the expert's training traces, distinct from run seeds.
    pub expert_seed: u64,
    pub expert_checkpoint: Option<PathBuf>,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            expert_episodes: 3000,
            learner_episodes: 1800,
            expert_seed: 7_919,
            expert_checkpoint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub propagation: PropagationConfig,
    pub schedule: TrainSchedule,
    pub scenario: ScenarioSource,
    pub variants: Vec<Variant>,
    /// Payload sizes as multiples of 1060 bytes.
    pub payload_multipliers: Vec<u64>,
    pub seeds: Vec<u64>,
    pub evaluation: EvaluationConfig,
    pub transfer: TransferConfig,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            propagation: PropagationConfig::default(),
            schedule: TrainSchedule::default(),
            scenario: ScenarioSource::default(),
            variants: vec![Variant::Random, Variant::Dqn, Variant::Ddqn],
            payload_multipliers: vec![1, 2, 3, 4],
            seeds: vec![0, 1, 2, 3, 4],
            evaluation: EvaluationConfig::default(),
            transfer: TransferConfig::default(),
            output_dir: None,
        }
    }
}

/// Command-line replacements applied after loading.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    pub payload_mult: Option<u64>,
    pub out: Option<PathBuf>,
    pub expert: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration at {0}")]
    Config(ConfigError),
    #[error("expert checkpoint {0} not found")]
    MissingExpert(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Marl(#[from] MarlError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Neuro(#[from] NeuroError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Csv(#[from] CsvOutError),
    #[error("{0}")]
    Json(String),
    #[error("{0} accounting violations")]
    Accounting(usize),
}

impl From<ConfigError> for ExperimentError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl ExperimentConfig {
    /// Parses JSON, reporting the dotted path of the first bad field.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::invalid(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|e| ExperimentError::Io(path.display().to_string(), e))?;
        Ok(Self::from_json(&text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.network.validate().map_err(|e| e.within("network"))?;
        self.schedule.validate().map_err(|e| e.within("schedule"))?;
        self.propagation
            .validate()
            .map_err(|m| ConfigError::invalid("propagation", m))?;
        match &self.scenario {
            ScenarioSource::Grid(spec) => {
                if spec.n_vehicles < 2 * self.network.k {
                    return Err(ConfigError::invalid(
                        "scenario.n_vehicles",
                        format!("{} V2V pairs need at least {} vehicles", self.network.k, 2 * self.network.k),
                    ));
                }
                if spec.period_ms == 0 {
                    return Err(ConfigError::invalid("scenario.period_ms", "must be positive"));
                }
            }
            ScenarioSource::TraceFile { trace, obstacles } => {
                if !trace.is_file() {
                    return Err(ConfigError::invalid("scenario.trace", format!("{} does not exist", trace.display())));
                }
                if let Some(o) = obstacles {
                    if !o.is_file() {
                        return Err(ConfigError::invalid("scenario.obstacles", format!("{} does not exist", o.display())));
                    }
                }
            }
        }
        if self.variants.is_empty() {
            return Err(ConfigError::invalid("variants", "list at least one variant"));
        }
        if self.variants.iter().collect::<BTreeSet<_>>().len() != self.variants.len() {
            return Err(ConfigError::invalid("variants", "variants must be distinct"));
        }
        if self.payload_multipliers.is_empty() || self.payload_multipliers.contains(&0) {
            return Err(ConfigError::invalid("payload_multipliers", "multipliers must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::invalid("seeds", "list at least one seed"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(ConfigError::invalid("seeds", "seeds must be distinct"));
        }
        let bin = self.evaluation.histogram_bin_ms;
        if bin == 0 || !self.network.budget_ms.is_multiple_of(bin) {
            return Err(ConfigError::invalid("evaluation.histogram_bin_ms", "must divide network.budget_ms"));
        }
        if let Some(p) = &self.transfer.expert_checkpoint {
            if self.variants.contains(&Variant::DdqnTql) && p.as_os_str().is_empty() {
                return Err(ConfigError::invalid("transfer.expert_checkpoint", "empty path"));
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(s) = o.seed {
            self.seeds = vec![s];
        }
        if let Some(v) = o.variant {
            self.variants = vec![v];
        }
        if let Some(m) = o.payload_mult {
            self.payload_multipliers = vec![m];
            self.network.payload_bytes = m * PAYLOAD_UNIT_BYTES;
        }
        if let Some(out) = &o.out {
            self.output_dir = Some(out.clone());
        }
        if let Some(e) = &o.expert {
            self.transfer.expert_checkpoint = Some(e.clone());
        }
        self.validate()
    }

    /// Output directory: explicit setting, then `$SIDELINK_OUT`, then `results`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    fn network_for(&self, payload_mult: u64) -> NetworkConfig {
        NetworkConfig {
            payload_bytes: payload_mult * PAYLOAD_UNIT_BYTES,
            ..self.network.clone()
        }
    }

    /// Schedule a variant trains under.
    pub fn schedule_for(&self, variant: Variant) -> TrainSchedule {
        match variant {
            Variant::DdqnTql => TrainSchedule {
                episodes: self.transfer.learner_episodes,
                ..self.schedule.clone()
            },
            _ => self.schedule.clone(),
        }
    }

    /// Digest of everything a (variant, payload) cell depends on except the
    /// seed.
    pub fn digest(&self, variant: Variant, payload_mult: u64) -> String {
        #[derive(Serialize)]
        struct Cell<'a> {
            network: NetworkConfig,
            propagation: &'a PropagationConfig,
            schedule: TrainSchedule,
            scenario: &'a ScenarioSource,
            evaluation: &'a EvaluationConfig,
            variant: Variant,
            transfer: Option<(&'a TransferConfig, Option<String>)>,
        }
        let cell = Cell {
            network: self.network_for(payload_mult),
            propagation: &self.propagation,
            schedule: self.schedule_for(variant),
            scenario: &self.scenario,
            evaluation: &self.evaluation,
            variant,
            transfer: (variant == Variant::DdqnTql).then(|| {
                let ck = self.transfer.expert_checkpoint.as_ref().and_then(|p| fs::read(p).ok());
                (&self.transfer, ck.map(|b| hex::encode(Sha256::digest(b))))
            }),
        };
        hex::encode(Sha256::digest(serde_json::to_vec(&cell).expect("cell serializes")))
    }

    fn traces(&self, route_seed: u64) -> Result<TraceSet, ExperimentError> {
        Ok(match &self.scenario {
            ScenarioSource::Grid(spec) => generate_grid_traces(spec, route_seed)?,
            ScenarioSource::TraceFile { trace, obstacles } => load_scenario(trace, obstacles.as_deref())?,
        })
    }

    /// Scenario of run `seed` at the given payload.
    pub fn scenario_for(&self, route_seed: u64, payload_mult: u64) -> Result<Scenario, ExperimentError> {
        Ok(Scenario {
            traces: self.traces(route_seed)?,
            network: self.network_for(payload_mult),
            propagation: self.propagation.clone(),
        })
    }

    fn eval_settings(&self, traces: &TraceSet, fingerprint: Fingerprint) -> EvalSettings {
        EvalSettings {
            episodes: self.evaluation.episodes,
            first_snapshot: (self.evaluation.start_ms / traces.period_ms.max(1)) as usize,
            fingerprint,
        }
    }
}

/// One evaluated (variant, payload, seed) cell.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub metrics: RunMetrics,
    pub audit: Audit,
    pub payload_mult: u64,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub cells: Vec<CellResult>,
    pub output_dir: PathBuf,
}

impl ExperimentReport {
    pub fn runs(&self) -> Vec<RunMetrics> {
        self.cells.iter().map(|c| c.metrics.clone()).collect()
    }

    pub fn violations(&self) -> Vec<String> {
        self.cells.iter().flat_map(|c| c.audit.violations.iter().cloned()).collect()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |e| ExperimentError::Io(path.display().to_string(), e)
}

fn create(path: &Path) -> Result<fs::File, ExperimentError> {
    fs::File::create(path).map_err(io_err(path))
}

/// Trains the expert for the transfer variant: Double DQN on routes drawn
/// from `transfer.expert_seed`, for `transfer.expert_episodes` episodes.
pub fn train_expert(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<QNetwork>, ExperimentError> {
    let sched = TrainSchedule {
        episodes: cfg.transfer.expert_episodes,
        ..cfg.schedule.clone()
    };
    if sched.episodes < sched.refresh_episodes {
        log::warn!("expert trains for only {} episodes; the checkpoint will be weak", sched.episodes);
    }
    let scenario = Scenario {
        traces: cfg.traces(cfg.transfer.expert_seed)?,
        network: cfg.network.clone(),
        propagation: cfg.propagation.clone(),
    };
    let outcome = train(&scenario, &sched, Variant::Ddqn, None, cfg.transfer.expert_seed)?;
    let nets = outcome.networks();
    save_checkpoint(out, &nets)?;
    Ok(nets)
}

fn load_expert(cfg: &ExperimentConfig) -> Result<Vec<QNetwork>, ExperimentError> {
    let Some(path) = &cfg.transfer.expert_checkpoint else {
        return Err(ExperimentError::MissingExpert("(none configured)".into()));
    };
    if !path.is_file() {
        return Err(ExperimentError::MissingExpert(path.display().to_string()));
    }
    Ok(load_checkpoint(path)?)
}

/// Runs a single cell and returns its metrics and audit.
pub fn run_cell(
    cfg: &ExperimentConfig,
    variant: Variant,
    payload_mult: u64,
    seed: u64,
    expert: Option<&[QNetwork]>,
    training_log: Option<&Path>,
) -> Result<CellResult, ExperimentError> {
    let scenario = cfg.scenario_for(seed, payload_mult)?;
    let sched = cfg.schedule_for(variant);
    let eval = match variant {
        Variant::Random => {
            let fp = Fingerprint::new(marl::epsilon_at(sched.episodes.saturating_sub(1), &sched), sched.episodes, sched.episodes);
            evaluate(Policy::Random, &scenario, &cfg.eval_settings(&scenario.traces, fp), seed)?
        }
        _ => {
            let outcome = train(&scenario, &sched, variant, expert, seed)?;
            if let Some(path) = training_log {
                marl::write_training_log(create(path)?, &outcome.log)?;
            }
            let settings = cfg.eval_settings(&scenario.traces, outcome.final_fingerprint);
            evaluate(Policy::Greedy(&outcome.bundles), &scenario, &settings, seed)?
        }
    };
    let mut audit = eval.audit.clone();
    let metrics = eval.into_metrics(
        variant.name(),
        seed,
        scenario.network.payload_bytes,
        scenario.network.budget_ms,
        &cfg.digest(variant, payload_mult),
    );
    if !metrics.deliveries.is_empty() {
        let h = delivery_time_histogram(&metrics, cfg.evaluation.histogram_bin_ms)?;
        if h.total() != metrics.deliveries.len() {
            audit
                .violations
                .push(format!("{variant} seed {seed}: histogram holds {} of {} agent-episodes", h.total(), metrics.deliveries.len()));
        }
        let rate = evalkit::delivery_rate(&metrics)?;
        if rate != 1.0 - metrics.lost_count() as f64 / metrics.deliveries.len() as f64 {
            audit.violations.push(format!("{variant} seed {seed}: delivery rate disagrees with lost count"));
        }
    }
    Ok(CellResult { metrics, audit, payload_mult })
}

/// Trains and evaluates every (payload, variant, seed) cell and writes the
/// result files into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let expert = if cfg.variants.contains(&Variant::DdqnTql) {
        Some(load_expert(cfg)?)
    } else {
        None
    };
    let out_dir = cfg.resolved_output_dir();
    let runs_dir = out_dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(io_err(&runs_dir))?;

    let mut cells = Vec::new();
    for &mult in &cfg.payload_multipliers {
        for &variant in &cfg.variants {
            for &seed in &cfg.seeds {
                let stem = format!("{variant}_p{mult}_s{seed}");
                log::info!("running {stem}");
                let log_path = runs_dir.join(format!("{stem}_training.csv"));
                let cell = run_cell(cfg, variant, mult, seed, expert.as_deref(), Some(&log_path))?;
                let json_path = runs_dir.join(format!("{stem}_metrics.json"));
                let json = serde_json::to_string_pretty(&cell.metrics).map_err(|e| ExperimentError::Json(e.to_string()))?;
                fs::write(&json_path, json + "\n").map_err(io_err(&json_path))?;
                cells.push(cell);
            }
        }
    }
    let report = ExperimentReport { cells, output_dir: out_dir.clone() };
    write_aggregates(&out_dir, &report.runs(), cfg.evaluation.histogram_bin_ms)?;
    Ok(report)
}

/// Writes `results.csv`, `summary.csv` and one `histogram_p{m}.csv` per
/// payload, with rows ordered by (payload, variant, seed).
pub fn write_aggregates(out_dir: &Path, runs: &[RunMetrics], bin_ms: u64) -> Result<(), ExperimentError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut runs = runs.to_vec();
    runs.sort_by(|a, b| (a.payload_bytes, &a.variant, a.seed).cmp(&(b.payload_bytes, &b.variant, b.seed)));
    let runs = &runs[..];
    evalkit::write_results_csv(create(&out_dir.join("results.csv"))?, runs)?;
    evalkit::write_summary_csv(create(&out_dir.join("summary.csv"))?, runs)?;
    let payloads: BTreeSet<u64> = runs.iter().map(|r| r.payload_bytes).collect();
    for p in payloads {
        let group: Vec<RunMetrics> = runs.iter().filter(|r| r.payload_bytes == p).cloned().collect();
        let name = if p % PAYLOAD_UNIT_BYTES == 0 {
            format!("histogram_p{}.csv", p / PAYLOAD_UNIT_BYTES)
        } else {
            format!("histogram_{p}b.csv")
        };
        evalkit::write_histogram_csv(create(&out_dir.join(name))?, &group, bin_ms)?;
    }
    Ok(())
}

/// Rebuilds the aggregate CSVs from the per-run metric files in
/// `<dir>/runs`.
pub fn aggregate(dir: &Path, bin_ms: u64) -> Result<Vec<RunMetrics>, ExperimentError> {
    let runs_dir = dir.join("runs");
    let mut paths: Vec<PathBuf> = fs::read_dir(&runs_dir)
        .map_err(io_err(&runs_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with("_metrics.json"))
        .collect();
    paths.sort();
    let mut runs = Vec::with_capacity(paths.len());
    for p in &paths {
        let text = fs::read_to_string(p).map_err(io_err(p))?;
        runs.push(serde_json::from_str::<RunMetrics>(&text).map_err(|e| ExperimentError::Json(format!("{}: {e}", p.display())))?);
    }
    write_aggregates(dir, &runs, bin_ms)?;
    Ok(runs)
}
