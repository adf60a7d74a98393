//! Evaluation quantities: set radius, pairwise Hausdorff distance between
//! estimated sets, center localization error, and per-step timing.

use std::fmt;
use std::hint::black_box;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::intersection::Strip;
use crate::observers::{
    iv_luenberger_update, sm_diffusion_update, sm_measurement_update, sm_time_update, Dynamics,
    NodeState, ObserverKind, DEFAULT_ORDER,
};
use crate::plant::{rotating_target_transition, sample_in_zonotope};
use crate::zonotope::Zonotope;

/// Steps excluded from run aggregates unless configured otherwise.
pub const DEFAULT_BURN_IN: usize = 5;

/// Which scalar stands for the size of a zonotope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RadiusKind {
    /// Frobenius norm of the generator matrix.
    #[default]
    FRadius,
    /// Half the diagonal of the interval hull.
    HalfDiagonal,
}

impl FromStr for RadiusKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f-radius" | "frobenius" => Ok(Self::FRadius),
            "half-diagonal" | "box" => Ok(Self::HalfDiagonal),
            other => Err(Error::InvalidArgument(format!(
                "unknown radius definition '{other}' (expected f-radius or half-diagonal)"
            ))),
        }
    }
}

pub fn radius(z: &Zonotope, kind: RadiusKind) -> f64 {
    match kind {
        RadiusKind::FRadius => z.f_radius(),
        RadiusKind::HalfDiagonal => {
            let (lo, hi) = z.interval_hull();
            (hi - lo).norm() / 2.0
        }
    }
}

/// Hausdorff distance between two finite planar point sets.
pub fn hausdorff_points(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    fn directed(from: &[[f64; 2]], to: &[[f64; 2]]) -> f64 {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
    directed(a, b).max(directed(b, a)).sqrt()
}

/// Hausdorff distance between the vertex sets of two planar zonotopes.
pub fn hausdorff_2d(a: &Zonotope, b: &Zonotope) -> Result<f64> {
    Ok(hausdorff_points(&a.vertices_2d()?, &b.vertices_2d()?))
}

/// Per-step, per-node metrics row.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub step: usize,
    pub node: usize,
    pub radius: f64,
    pub center_error: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub step_time_us: f64,
}

impl SimRecord {
    pub fn from_estimate(
        step: usize,
        node: usize,
        estimate: &Zonotope,
        truth: &DVector<f64>,
        radius_kind: RadiusKind,
        step_time: Duration,
    ) -> Self {
        let (lo, hi) = estimate.interval_hull();
        Self {
            step,
            node,
            radius: radius(estimate, radius_kind),
            center_error: (estimate.center() - truth).norm(),
            lower: lo.iter().copied().collect(),
            upper: hi.iter().copied().collect(),
            step_time_us: step_time.as_secs_f64() * 1e6,
        }
    }
}

/// Run-level columns of the records CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RunLabel {
    pub algorithm: ObserverKind,
    pub diffusion: bool,
    pub k_neighbors: usize,
}

impl fmt::Display for RunLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}_{}_k{}",
            self.algorithm,
            on_off(self.diffusion),
            self.k_neighbors
        )
    }
}

fn on_off(flag: bool) -> &'static str {
    if flag {
        "on"
    } else {
        "off"
    }
}

fn parse_on_off(s: &str) -> Result<bool> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(Error::InvalidArgument(format!("expected on/off, got '{other}'"))),
    }
}

pub const RECORD_HEADER: [&str; 12] = [
    "step",
    "node",
    "algorithm",
    "diffusion",
    "k_neighbors",
    "radius_m",
    "center_err_m",
    "lb_x",
    "ub_x",
    "lb_y",
    "ub_y",
    "step_time_us",
];

pub fn write_records<W: Write>(writer: W, label: &RunLabel, records: &[SimRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(RECORD_HEADER)?;
    for r in records {
        if r.lower.len() != 2 || r.upper.len() != 2 {
            return Err(Error::NotPlanar(r.lower.len()));
        }
        out.write_record([
            r.step.to_string(),
            r.node.to_string(),
            label.algorithm.to_string(),
            on_off(label.diffusion).to_string(),
            label.k_neighbors.to_string(),
            r.radius.to_string(),
            r.center_error.to_string(),
            r.lower[0].to_string(),
            r.upper[0].to_string(),
            r.lower[1].to_string(),
            r.upper[1].to_string(),
            r.step_time_us.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<(RunLabel, SimRecord)>> {
    let mut input = csv::Reader::from_reader(reader);
    if input.headers()?.iter().ne(RECORD_HEADER) {
        return Err(Error::InvalidArgument("unexpected records header".into()));
    }
    let mut rows = Vec::new();
    for record in input.records() {
        let record = record?;
        let float = |i: usize| {
            record[i]
                .parse::<f64>()
                .map_err(|e| Error::InvalidArgument(format!("column {}: {e}", RECORD_HEADER[i])))
        };
        let int = |i: usize| {
            record[i]
                .parse::<usize>()
                .map_err(|e| Error::InvalidArgument(format!("column {}: {e}", RECORD_HEADER[i])))
        };
        let label = RunLabel {
            algorithm: record[2].parse()?,
            diffusion: parse_on_off(&record[3])?,
            k_neighbors: int(4)?,
        };
        rows.push((
            label,
            SimRecord {
                step: int(0)?,
                node: int(1)?,
                radius: float(5)?,
                center_error: float(6)?,
                lower: vec![float(7)?, float(9)?],
                upper: vec![float(8)?, float(10)?],
                step_time_us: float(11)?,
            },
        ));
    }
    Ok(rows)
}

/// Pairwise Hausdorff distances between all unordered node pairs at a step.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseDistances {
    pub step: usize,
    pub values: Vec<f64>,
}

impl PairwiseDistances {
    pub fn from_vertex_sets(step: usize, vertex_sets: &[Vec<[f64; 2]>]) -> Self {
        let mut values = Vec::new();
        for (i, a) in vertex_sets.iter().enumerate() {
            for b in &vertex_sets[i + 1..] {
                values.push(hausdorff_points(a, b));
            }
        }
        Self { step, values }
    }
}

/// Population mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl MeanStd {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let count = samples.len();
        let mean = samples.iter().sum::<f64>() / count as f64;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
        Some(Self {
            mean,
            std: var.sqrt(),
            count,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSummary {
    pub step: usize,
    pub radius: MeanStd,
    pub center_error: MeanStd,
    /// `None` when fewer than two nodes exist.
    pub hausdorff: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub radius: MeanStd,
    pub center_error: MeanStd,
    pub hausdorff: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: Vec<StepSummary>,
    /// Over all nodes and all steps at or after the burn-in.
    pub aggregate: Aggregate,
}

/// Pools several runs (e.g. seeds) into one aggregate, skipping steps below
/// `burn_in`.
pub fn aggregate_runs(runs: &[(&[SimRecord], &[PairwiseDistances])], burn_in: usize) -> Result<Aggregate> {
    let kept = |step: usize| step >= burn_in;
    let mut radii = Vec::new();
    let mut errors = Vec::new();
    let mut distances = Vec::new();
    for (records, pairwise) in runs {
        for r in records.iter().filter(|r| kept(r.step)) {
            radii.push(r.radius);
            errors.push(r.center_error);
        }
        for p in pairwise.iter().filter(|p| kept(p.step)) {
            distances.extend_from_slice(&p.values);
        }
    }
    Ok(Aggregate {
        radius: MeanStd::from_samples(&radii).ok_or(Error::Empty("records after burn-in"))?,
        center_error: MeanStd::from_samples(&errors).ok_or(Error::Empty("records after burn-in"))?,
        hausdorff: MeanStd::from_samples(&distances),
    })
}

/// Per-step and whole-run statistics of one run.
pub fn summarize(records: &[SimRecord], pairwise: &[PairwiseDistances], burn_in: usize) -> Result<RunSummary> {
    if records.is_empty() {
        return Err(Error::Empty("records"));
    }
    let mut steps: Vec<usize> = records.iter().map(|r| r.step).collect();
    steps.sort_unstable();
    steps.dedup();

    let per_step = steps
        .iter()
        .map(|&step| {
            let at: Vec<&SimRecord> = records.iter().filter(|r| r.step == step).collect();
            let radii: Vec<f64> = at.iter().map(|r| r.radius).collect();
            let errors: Vec<f64> = at.iter().map(|r| r.center_error).collect();
            let distances: Vec<f64> = pairwise
                .iter()
                .filter(|p| p.step == step)
                .flat_map(|p| p.values.iter().copied())
                .collect();
            StepSummary {
                step,
                radius: MeanStd::from_samples(&radii).expect("step has records"),
                center_error: MeanStd::from_samples(&errors).expect("step has records"),
                hausdorff: MeanStd::from_samples(&distances),
            }
        })
        .collect();

    Ok(RunSummary {
        steps: per_step,
        aggregate: aggregate_runs(&[(records, pairwise)], burn_in)?,
    })
}

pub const SUMMARY_HEADER: [&str; 6] = ["algorithm", "diffusion", "k_neighbors", "metric", "mean", "std"];

/// Metric names used in the summary CSV, in row order.
pub const SUMMARY_METRICS: [&str; 3] = ["radius_m", "center_err_m", "hausdorff_m"];

pub fn write_summary<W: Write>(writer: W, rows: &[(RunLabel, Aggregate)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(SUMMARY_HEADER)?;
    let undefined = MeanStd {
        mean: f64::NAN,
        std: f64::NAN,
        count: 0,
    };
    for (label, agg) in rows {
        let values = [agg.radius, agg.center_error, agg.hausdorff.unwrap_or(undefined)];
        for (metric, stats) in SUMMARY_METRICS.iter().zip(values) {
            out.write_record([
                label.algorithm.to_string(),
                on_off(label.diffusion).to_string(),
                label.k_neighbors.to_string(),
                metric.to_string(),
                stats.mean.to_string(),
                stats.std.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Like [`write_summary`] with a leading `seed` column, one block per run.
pub fn write_summary_by_seed<W: Write>(writer: W, rows: &[(u64, RunLabel, Aggregate)]) -> Result<()> {
    let mut buf = Vec::new();
    for (seed, label, agg) in rows {
        let mut block = Vec::new();
        write_summary(&mut block, &[(*label, agg.clone())])?;
        let text = String::from_utf8(block).expect("csv output is utf-8");
        for line in text.lines().skip(1) {
            buf.push(format!("{seed},{line}"));
        }
    }
    let mut writer = writer;
    writeln!(writer, "seed,{}", SUMMARY_HEADER.join(","))?;
    for line in buf {
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Observer sub-steps timed by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchOp {
    Measurement,
    Diffusion,
    Time,
    Luenberger,
}

impl BenchOp {
    pub const ALL: [BenchOp; 4] = [
        BenchOp::Measurement,
        BenchOp::Diffusion,
        BenchOp::Time,
        BenchOp::Luenberger,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::Measurement => "measurement",
            Self::Diffusion => "diffusion",
            Self::Time => "time",
            Self::Luenberger => "luenberger",
        }
    }
}

/// Generators per random zonotope in the benchmark.
pub const BENCH_GENERATORS: usize = 20;
const BENCH_POOL: usize = 16;

enum BenchInput {
    Update { state: NodeState, strips: Vec<Strip> },
    Diffusion(Vec<Zonotope>),
    Time(Zonotope),
}

/// Pre-generated random inputs for one (operation, neighbor count) cell.
pub struct BenchCase {
    op: BenchOp,
    inputs: Vec<BenchInput>,
    dynamics: Dynamics,
    cursor: usize,
}

fn random_zonotope(rng: &mut ChaCha8Rng) -> Zonotope {
    let center = DVector::from_fn(2, |_, _| rng.gen_range(-50.0..50.0));
    let generators = DMatrix::from_fn(2, BENCH_GENERATORS, |_, _| rng.gen_range(-2.0..2.0));
    Zonotope::new(center, generators).expect("finite random data")
}

impl BenchCase {
    pub fn new(op: BenchOp, k_neighbors: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = k_neighbors + 1;
        let inputs = (0..BENCH_POOL)
            .map(|_| match op {
                BenchOp::Measurement | BenchOp::Luenberger => {
                    let z = random_zonotope(&mut rng);
                    let strips = (0..m)
                        .map(|j| {
                            let mut h = RowDVector::zeros(2);
                            h[j % 2] = 1.0;
                            let x = sample_in_zonotope(&z, &mut rng);
                            Strip::new(h, x[j % 2], 0.2).expect("valid strip")
                        })
                        .collect();
                    BenchInput::Update {
                        state: NodeState {
                            node_id: 0,
                            estimate: z,
                        },
                        strips,
                    }
                }
                BenchOp::Diffusion => {
                    BenchInput::Diffusion((0..m).map(|_| random_zonotope(&mut rng)).collect())
                }
                BenchOp::Time => BenchInput::Time(random_zonotope(&mut rng)),
            })
            .collect();
        let dynamics = Dynamics::new(rotating_target_transition(), DMatrix::identity(2, 2) * 0.02)
            .expect("2x2 dynamics");
        Self {
            op,
            inputs,
            dynamics,
            cursor: 0,
        }
    }

    /// Runs the operation `repetitions` times; returns the total wall time.
    pub fn run(&mut self, repetitions: usize) -> Result<Duration> {
        let start = Instant::now();
        for _ in 0..repetitions {
            let input = &self.inputs[self.cursor];
            self.cursor = (self.cursor + 1) % self.inputs.len();
            let out = match (self.op, input) {
                (BenchOp::Measurement, BenchInput::Update { state, strips }) => {
                    sm_measurement_update(state, strips)?
                }
                (BenchOp::Luenberger, BenchInput::Update { state, strips }) => {
                    iv_luenberger_update(state, strips, &self.dynamics, DEFAULT_ORDER)?
                }
                (BenchOp::Diffusion, BenchInput::Diffusion(sets)) => {
                    sm_diffusion_update(sets, DEFAULT_ORDER)?
                }
                (BenchOp::Time, BenchInput::Time(z)) => sm_time_update(z, &self.dynamics)?,
                _ => unreachable!("inputs are generated per operation"),
            };
            black_box(out);
        }
        Ok(start.elapsed())
    }
}

/// Mean wall-clock time, in microseconds, of one observer sub-step on random
/// 20-generator zonotopes with `k_neighbors + 1` strips or shared sets.
pub fn time_op(op: BenchOp, k_neighbors: usize, repetitions: usize, seed: u64) -> Result<f64> {
    if repetitions == 0 {
        return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
    }
    let mut case = BenchCase::new(op, k_neighbors, seed);
    let total = case.run(repetitions)?;
    Ok(total.as_secs_f64() * 1e6 / repetitions as f64)
}

/// Timing table: one row per operation, one column per neighbor count.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    pub neighbor_counts: Vec<usize>,
    pub rows: Vec<(BenchOp, Vec<f64>)>,
}

impl BenchTable {
    pub fn get(&self, op: BenchOp, k_neighbors: usize) -> Option<f64> {
        let col = self.neighbor_counts.iter().position(|&k| k == k_neighbors)?;
        self.rows.iter().find(|(o, _)| *o == op).map(|(_, v)| v[col])
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let header: Vec<String> = std::iter::once("step".to_string())
            .chain(self.neighbor_counts.iter().map(|k| format!("k{k}_us")))
            .collect();
        out.write_record(&header)?;
        for (op, values) in &self.rows {
            let row: Vec<String> = std::iter::once(op.label().to_string())
                .chain(values.iter().map(|v| format!("{v:.3}")))
                .collect();
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Times every operation at every neighbor count. Cells are interleaved in
/// batches so that slow drifts of the machine affect all cells alike.
pub fn bench_table(neighbor_counts: &[usize], repetitions: usize, seed: u64) -> Result<BenchTable> {
    if repetitions == 0 {
        return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
    }
    const BATCH: usize = 1000;
    let mut cases: Vec<(BenchOp, usize, BenchCase, Duration)> = BenchOp::ALL
        .iter()
        .enumerate()
        .flat_map(|(oi, &op)| {
            neighbor_counts.iter().enumerate().map(move |(ki, &k)| {
                let cell_seed = seed ^ ((oi as u64) << 32 | ki as u64);
                (op, k, BenchCase::new(op, k, cell_seed), Duration::ZERO)
            })
        })
        .collect();
    for case in &mut cases {
        case.2.run(BATCH.min(repetitions).div_ceil(10))?;
    }
    let mut done = 0;
    while done < repetitions {
        let batch = BATCH.min(repetitions - done);
        for (_, _, case, total) in &mut cases {
            *total += case.run(batch)?;
        }
        done += batch;
    }
    let rows = BenchOp::ALL
        .iter()
        .map(|&op| {
            let values = cases
                .iter()
                .filter(|c| c.0 == op)
                .map(|c| c.3.as_secs_f64() * 1e6 / repetitions as f64)
                .collect();
            (op, values)
        })
        .collect();
    Ok(BenchTable {
        neighbor_counts: neighbor_counts.to_vec(),
        rows,
    })
}
