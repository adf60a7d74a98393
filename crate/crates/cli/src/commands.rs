//! The `run`, `grid`, `bench` and `replay` verbs.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;
use zonodiff::metrics::{
    aggregate_runs, bench_table, write_records, write_summary, write_summary_by_seed, Aggregate,
    BenchTable, RunLabel,
};
use zonodiff::observers::{ObserverConfig, ObserverKind};
use zonodiff::plant::{check_trajectory, simulate, PRESET_NEIGHBOR_COUNTS};
use zonodiff::simulation::{run, RunOptions, RunOutput, SnapshotSchedule};
use zonodiff::{SystemModel, Topology, Trajectory};

use crate::config::{Settings, TopologySource};
use crate::error::CliError;
use crate::output::write_atomic;

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SUMMARY_BY_SEED_FILE: &str = "summary_by_seed.csv";
pub const SNAPSHOTS_FILE: &str = "snapshots.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const BENCH_FILE: &str = "bench.csv";

/// Smallest repetition count accepted by `bench`.
pub const MIN_BENCH_REPETITIONS: usize = 100;

pub struct CellResult {
    pub label: RunLabel,
    pub output: RunOutput,
    pub aggregate: Aggregate,
}

fn execute(
    settings: &Settings,
    observer: ObserverConfig,
    model: &SystemModel,
    (k_label, topology): (usize, &Topology),
    trajectory: &Trajectory,
    steps: usize,
    snapshots: SnapshotSchedule,
) -> Result<CellResult, CliError> {
    let options = RunOptions {
        radius: settings.radius,
        snapshots,
        timing: settings.timing,
        ..RunOptions::new(observer)
    };
    let output = run(model, topology, trajectory, steps, &options)?;
    let aggregate = aggregate_runs(&[(&output.records, &output.pairwise)], settings.burn_in)
        .map_err(|e| CliError::Config(format!("{e} (burn-in {} >= steps)", settings.burn_in)))?;
    if output.fallbacks > 0 {
        eprintln!(
            "warning: {} node updates used the pseudo-inverse fallback",
            output.fallbacks
        );
    }
    Ok(CellResult {
        label: RunLabel {
            algorithm: observer.kind,
            diffusion: observer.diffusion,
            k_neighbors: k_label,
        },
        output,
        aggregate,
    })
}

fn write_records_file(path: &Path, cell: &CellResult) -> Result<(), CliError> {
    write_atomic(path, |w| Ok(write_records(w, &cell.label, &cell.output.records)?))
}

fn write_cell_outputs(dir: &Path, cell: &CellResult) -> Result<(), CliError> {
    write_records_file(&dir.join(RECORDS_FILE), cell)?;
    write_atomic(&dir.join(SUMMARY_FILE), |w| {
        Ok(write_summary(w, &[(cell.label, cell.aggregate.clone())])?)
    })?;
    let snapshots = json!({
        "algorithm": cell.label.algorithm.as_str(),
        "diffusion": cell.label.diffusion,
        "k_neighbors": cell.label.k_neighbors,
        "snapshots": cell.output.snapshots,
    });
    write_atomic(&dir.join(SNAPSHOTS_FILE), |w| {
        serde_json::to_writer(&mut *w, &snapshots).map_err(|e| CliError::Runtime(e.to_string()))?;
        Ok(writeln!(w)?)
    })
}

fn write_trajectory(path: &Path, trajectory: &Trajectory) -> Result<(), CliError> {
    write_atomic(path, |w| Ok(trajectory.write_csv(w)?))
}

fn report(label: &RunLabel, agg: &Aggregate) {
    let hausdorff = agg
        .hausdorff
        .map_or("undefined".to_string(), |h| format!("{:.4} ± {:.4}", h.mean, h.std));
    println!(
        "{} diffusion={} k={}: radius_m {:.4} ± {:.4}, center_err_m {:.4} ± {:.4}, hausdorff_m {}",
        label.algorithm,
        if label.diffusion { "on" } else { "off" },
        label.k_neighbors,
        agg.radius.mean,
        agg.radius.std,
        agg.center_error.mean,
        agg.center_error.std,
        hausdorff,
    );
}

pub fn cmd_run(settings: &Settings) -> Result<PathBuf, CliError> {
    let model = settings.model()?;
    let (k, topology) = settings.topology()?;
    let trajectory = simulate(&model, settings.steps, settings.seed)?;
    let cell = execute(
        settings,
        settings.observer(),
        &model,
        (k, &topology),
        &trajectory,
        settings.steps,
        settings.snapshots.clone(),
    )?;
    write_cell_outputs(&settings.out_dir, &cell)?;
    write_trajectory(&settings.out_dir.join(TRAJECTORY_FILE), &trajectory)?;
    report(&cell.label, &cell.aggregate);
    Ok(settings.out_dir.clone())
}

pub fn cmd_replay(settings: &Settings, trajectory_path: &Path) -> Result<PathBuf, CliError> {
    let file = File::open(trajectory_path).map_err(|e| {
        CliError::Config(format!("cannot open {}: {e}", trajectory_path.display()))
    })?;
    let trajectory = Trajectory::read_csv(file).map_err(|e| CliError::Config(e.to_string()))?;
    let mut settings = settings.clone();
    settings.scenario.n_nodes = trajectory.n_nodes();
    let steps = if settings.steps_explicit {
        settings.steps
    } else {
        trajectory.steps()
    };
    let model = settings.model()?;
    if !check_trajectory(&model, &trajectory, 1e-9)? {
        eprintln!("warning: trajectory violates the configured noise bounds; containment is not guaranteed");
    }
    let (k, topology) = settings.topology()?;
    let cell = execute(
        &settings,
        settings.observer(),
        &model,
        (k, &topology),
        &trajectory,
        steps,
        settings.snapshots.clone(),
    )?;
    write_cell_outputs(&settings.out_dir, &cell)?;
    report(&cell.label, &cell.aggregate);
    Ok(settings.out_dir.clone())
}

/// Topologies swept by `grid`: the ring presets, or the configured file.
fn grid_topologies(settings: &Settings) -> Result<Vec<(usize, Topology)>, CliError> {
    match settings.topology {
        TopologySource::File(_) => Ok(vec![settings.topology()?]),
        TopologySource::Ring(_) => PRESET_NEIGHBOR_COUNTS
            .iter()
            .filter(|&&k| k < settings.scenario.n_nodes)
            .map(|&k| {
                Topology::ring(settings.scenario.n_nodes, k)
                    .map(|t| (k, t))
                    .map_err(|e| CliError::Config(e.to_string()))
            })
            .collect(),
    }
}

/// File name of one grid cell's records for one seed.
pub fn grid_records_name(label: &RunLabel, seed: u64) -> String {
    format!("{label}_seed{seed}.csv")
}

/// Runs every (algorithm, diffusion, topology) cell on one shared trajectory
/// per seed and writes a combined summary pooled over seeds.
pub fn cmd_grid(settings: &Settings) -> Result<PathBuf, CliError> {
    let model = settings.model()?;
    let topologies = grid_topologies(settings)?;
    let n_topologies = topologies.len();
    let seeds: Vec<u64> = (0..settings.seeds as u64).map(|i| settings.seed + i).collect();
    let labels: Vec<(ObserverKind, bool, usize)> = ObserverKind::ALL
        .iter()
        .flat_map(|&kind| {
            [true, false].into_iter().flat_map(move |diffusion| {
                (0..n_topologies).map(move |t| (kind, diffusion, t))
            })
        })
        .collect();

    let mut cells: Vec<Vec<CellResult>> = labels.iter().map(|_| Vec::new()).collect();
    for &seed in &seeds {
        let trajectory = simulate(&model, settings.steps, seed)?;
        write_trajectory(
            &settings.out_dir.join("trajectories").join(format!("seed{seed}.csv")),
            &trajectory,
        )?;
        for (slot, &(kind, diffusion, t)) in labels.iter().enumerate() {
            let (k, topology) = &topologies[t];
            let observer = ObserverConfig::new(kind, settings.order, diffusion);
            let cell = execute(
                settings,
                observer,
                &model,
                (*k, topology),
                &trajectory,
                settings.steps,
                SnapshotSchedule::Never,
            )?;
            write_records_file(
                &settings.out_dir.join("records").join(grid_records_name(&cell.label, seed)),
                &cell,
            )?;
            cells[slot].push(cell);
        }
        eprintln!("seed {seed}: {} cells done", labels.len());
    }

    let mut pooled = Vec::with_capacity(cells.len());
    let mut by_seed = Vec::new();
    for runs in &cells {
        let pairs: Vec<_> = runs
            .iter()
            .map(|c| (c.output.records.as_slice(), c.output.pairwise.as_slice()))
            .collect();
        let aggregate = aggregate_runs(&pairs, settings.burn_in)?;
        let label = runs[0].label;
        pooled.push((label, aggregate));
        for (seed, cell) in seeds.iter().zip(runs) {
            by_seed.push((*seed, label, cell.aggregate.clone()));
        }
    }
    write_atomic(&settings.out_dir.join(SUMMARY_FILE), |w| Ok(write_summary(w, &pooled)?))?;
    write_atomic(&settings.out_dir.join(SUMMARY_BY_SEED_FILE), |w| {
        Ok(write_summary_by_seed(w, &by_seed)?)
    })?;
    for (label, aggregate) in &pooled {
        report(label, aggregate);
    }
    Ok(settings.out_dir.clone())
}

pub fn cmd_bench(
    repetitions: usize,
    neighbor_counts: &[usize],
    seed: u64,
    out_dir: &Path,
) -> Result<BenchTable, CliError> {
    if repetitions < MIN_BENCH_REPETITIONS {
        return Err(CliError::Config(format!(
            "bench needs at least {MIN_BENCH_REPETITIONS} repetitions, got {repetitions}"
        )));
    }
    if neighbor_counts.is_empty() {
        return Err(CliError::Config("no neighbor counts given".into()));
    }
    let table = bench_table(neighbor_counts, repetitions, seed)?;
    write_atomic(&out_dir.join(BENCH_FILE), |w| Ok(table.write_csv(w)?))?;
    println!("{:<12}{}", "step (µs)", neighbor_counts.iter().map(|k| format!("{:>10}", format!("k={k}"))).collect::<String>());
    for (op, values) in &table.rows {
        println!(
            "{:<12}{}",
            op.label(),
            values.iter().map(|v| format!("{v:>10.3}")).collect::<String>()
        );
    }
    Ok(table)
}
