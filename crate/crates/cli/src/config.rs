//! Run configuration: JSON file values overridden by command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;
use zonodiff::metrics::{RadiusKind, DEFAULT_BURN_IN};
use zonodiff::observers::{ObserverConfig, ObserverKind, DEFAULT_ORDER};
use zonodiff::plant::{rotating_target_scenario, ScenarioParams};
use zonodiff::simulation::SnapshotSchedule;
use zonodiff::{SystemModel, Topology};

use crate::error::CliError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "ZONODIFF_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "out";
pub const DEFAULT_STEPS: usize = 200;
pub const DEFAULT_NEIGHBORS: usize = 4;

/// Schema of the `--config` JSON file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub algorithm: Option<String>,
    pub diffusion: Option<bool>,
    pub neighbors: Option<usize>,
    pub topology_file: Option<PathBuf>,
    pub nodes: Option<usize>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub seeds: Option<usize>,
    pub order: Option<usize>,
    pub process_noise: Option<f64>,
    pub measurement_noise: Option<f64>,
    pub initial_center: Option<[f64; 2]>,
    pub true_initial_state: Option<[f64; 2]>,
    pub radius: Option<String>,
    pub burn_in: Option<usize>,
    pub snapshot_every: Option<usize>,
    pub snapshot_steps: Option<Vec<usize>>,
    pub timing: Option<bool>,
    pub out_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }
}

fn parse_on_off(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => Err(format!("expected on or off, got '{s}'")),
    }
}

/// Flags shared by `run`, `grid` and `replay`.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// JSON config file; flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Observer: sm (set-membership) or iv (interval-based).
    #[arg(long = "alg", value_name = "ALG")]
    pub algorithm: Option<String>,
    #[arg(long, value_name = "on|off", value_parser = parse_on_off)]
    pub diffusion: Option<bool>,
    /// Ring topology with this many neighbors per node.
    #[arg(long, value_name = "K", conflicts_with = "topology")]
    pub neighbors: Option<usize>,
    /// Custom topology, JSON `{"n": .., "neighbors": [[..], ..]}`.
    #[arg(long, value_name = "FILE")]
    pub topology: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub nodes: Option<usize>,
    #[arg(long, value_name = "N")]
    pub steps: Option<usize>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Reduction order (generator count kept per set).
    #[arg(long, short = 'q', value_name = "Q")]
    pub order: Option<usize>,
    /// Process noise generators are this value times the identity.
    #[arg(long, value_name = "SCALE")]
    pub process_noise: Option<f64>,
    /// Measurement noise bound per strip, in meters.
    #[arg(long, value_name = "R")]
    pub measurement_noise: Option<f64>,
    /// Radius definition: f-radius or half-diagonal.
    #[arg(long, value_name = "KIND")]
    pub radius: Option<String>,
    #[arg(long, value_name = "N")]
    pub burn_in: Option<usize>,
    /// Export node sets every N steps (0 disables).
    #[arg(long, value_name = "N", conflicts_with = "snapshot_steps")]
    pub snapshot_every: Option<usize>,
    /// Export node sets at these steps.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub snapshot_steps: Option<Vec<usize>>,
    /// Record per-node compute time in the records CSV.
    #[arg(long)]
    pub timing: bool,
    /// Output directory [default: $ZONODIFF_OUT_DIR, else ./out].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySource {
    Ring(usize),
    File(PathBuf),
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone)]
pub struct Settings {
    pub algorithm: ObserverKind,
    pub diffusion: bool,
    pub topology: TopologySource,
    pub steps: usize,
    pub steps_explicit: bool,
    pub seed: u64,
    pub seeds: usize,
    pub order: usize,
    pub scenario: ScenarioParams,
    pub radius: RadiusKind,
    pub burn_in: usize,
    pub snapshots: SnapshotSchedule,
    pub timing: bool,
    pub out_dir: PathBuf,
}

impl Settings {
    pub fn resolve(flags: &RunFlags, seeds_flag: Option<usize>) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let config_err = |e: zonodiff::Error| CliError::Config(e.to_string());

        let algorithm = match flags.algorithm.as_ref().or(file.algorithm.as_ref()) {
            Some(name) => name.parse::<ObserverKind>().map_err(config_err)?,
            None => ObserverKind::SetMembership,
        };
        let radius = match flags.radius.as_ref().or(file.radius.as_ref()) {
            Some(name) => name.parse::<RadiusKind>().map_err(config_err)?,
            None => RadiusKind::default(),
        };
        let topology = match (&flags.neighbors, &flags.topology) {
            (Some(k), _) => TopologySource::Ring(*k),
            (_, Some(path)) => TopologySource::File(path.clone()),
            _ => match (file.neighbors, &file.topology_file) {
                (Some(_), Some(_)) => {
                    return Err(CliError::Config(
                        "config sets both neighbors and topology_file".into(),
                    ))
                }
                (_, Some(path)) => TopologySource::File(path.clone()),
                (k, None) => TopologySource::Ring(k.unwrap_or(DEFAULT_NEIGHBORS)),
            },
        };
        let snapshots = match (&flags.snapshot_steps, flags.snapshot_every) {
            (Some(steps), _) => SnapshotSchedule::At(steps.clone()),
            (_, Some(every)) => SnapshotSchedule::Every(every),
            _ => match (&file.snapshot_steps, file.snapshot_every) {
                (Some(steps), _) => SnapshotSchedule::At(steps.clone()),
                (_, every) => SnapshotSchedule::Every(every.unwrap_or(10)),
            },
        };
        let defaults = ScenarioParams::default();
        let scenario = ScenarioParams {
            n_nodes: flags.nodes.or(file.nodes).unwrap_or(defaults.n_nodes),
            process_noise_scale: flags
                .process_noise
                .or(file.process_noise)
                .unwrap_or(defaults.process_noise_scale),
            measurement_bound: flags
                .measurement_noise
                .or(file.measurement_noise)
                .unwrap_or(defaults.measurement_bound),
            initial_center: file.initial_center.unwrap_or(defaults.initial_center),
            true_initial_state: file.true_initial_state,
        };
        let out_dir = flags
            .out
            .clone()
            .or(file.out_dir)
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        let steps_given = flags.steps.or(file.steps);

        let settings = Self {
            algorithm,
            diffusion: flags.diffusion.or(file.diffusion).unwrap_or(true),
            topology,
            steps: steps_given.unwrap_or(DEFAULT_STEPS),
            steps_explicit: steps_given.is_some(),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            seeds: seeds_flag.or(file.seeds).unwrap_or(1),
            order: flags.order.or(file.order).unwrap_or(DEFAULT_ORDER),
            scenario,
            radius,
            burn_in: flags.burn_in.or(file.burn_in).unwrap_or(DEFAULT_BURN_IN),
            snapshots,
            timing: flags.timing || file.timing.unwrap_or(false),
            out_dir,
        };
        settings.validate()?;
        Ok(settings)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.steps == 0 {
            return Err(CliError::Config("steps must be at least 1".into()));
        }
        if self.seeds == 0 {
            return Err(CliError::Config("seeds must be at least 1".into()));
        }
        ObserverConfig::new(self.algorithm, self.order, self.diffusion)
            .validate(2)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn observer(&self) -> ObserverConfig {
        ObserverConfig::new(self.algorithm, self.order, self.diffusion)
    }

    pub fn model(&self) -> Result<SystemModel, CliError> {
        rotating_target_scenario(&self.scenario)
            .map(|(model, _)| model)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// The configured topology and its neighbor-count label.
    pub fn topology(&self) -> Result<(usize, Topology), CliError> {
        let n = self.scenario.n_nodes;
        match &self.topology {
            TopologySource::Ring(k) => Topology::ring(n, *k)
                .map(|t| (*k, t))
                .map_err(|e| CliError::Config(e.to_string())),
            TopologySource::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("cannot read {}: {e}", path.display()))
                })?;
                let topology =
                    Topology::from_json(&text).map_err(|e| CliError::Config(e.to_string()))?;
                if topology.n_nodes() != n {
                    return Err(CliError::Config(format!(
                        "topology has {} nodes, scenario has {n}",
                        topology.n_nodes()
                    )));
                }
                Ok((topology.max_degree(), topology))
            }
        }
    }
}
