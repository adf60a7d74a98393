//! Ground-truth plant `x_{k+1} = F x_k + n_k`, `yᵢ_k = Hᵢ_k x_k + vᵢ_k` with
//! bounded noise, and the rotating-target localization scenario.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_dim, Error, Result};
use crate::intersection::Strip;
use crate::network::Topology;
use crate::zonotope::Zonotope;

/// Stream id of the process-noise generator; node `i` draws from stream `i + 1`.
pub const PROCESS_NOISE_STREAM: u64 = 0;

/// Per-node, per-step measurement rows.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasurementSchedule {
    /// Node `i` at step `k` measures coordinate `(i + k) mod n`; in the
    /// plane this alternates between `[1 0]` and `[0 1]`.
    CyclicAxes { noise_bound: f64 },
}

impl MeasurementSchedule {
    pub fn row(&self, n: usize, node: usize, step: usize) -> RowDVector<f64> {
        match self {
            Self::CyclicAxes { .. } => {
                let mut h = RowDVector::zeros(n);
                h[(node + step) % n] = 1.0;
                h
            }
        }
    }

    pub fn noise_bound(&self, _node: usize, _step: usize) -> f64 {
        match self {
            Self::CyclicAxes { noise_bound } => *noise_bound,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SystemModel {
    pub transition: DMatrix<f64>,
    /// Generators of the process-noise zonotope `⟨0, Q⟩`.
    pub process_noise: DMatrix<f64>,
    pub schedule: MeasurementSchedule,
    pub initial_set: Zonotope,
    pub true_initial_state: DVector<f64>,
    pub n_nodes: usize,
}

impl SystemModel {
    pub fn new(
        transition: DMatrix<f64>,
        process_noise: DMatrix<f64>,
        schedule: MeasurementSchedule,
        initial_set: Zonotope,
        true_initial_state: DVector<f64>,
        n_nodes: usize,
    ) -> Result<Self> {
        let n = initial_set.dim();
        ensure_dim("transition rows", n, transition.nrows())?;
        ensure_dim("transition columns", n, transition.ncols())?;
        ensure_dim("process noise rows", n, process_noise.nrows())?;
        ensure_dim("true initial state", n, true_initial_state.len())?;
        if transition.iter().chain(process_noise.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("system model"));
        }
        if n_nodes == 0 {
            return Err(Error::InvalidArgument("at least one node required".into()));
        }
        let MeasurementSchedule::CyclicAxes { noise_bound } = &schedule;
        let noise_bound = *noise_bound;
        if !(noise_bound > 0.0 && noise_bound.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "measurement noise bound must be positive, got {noise_bound}"
            )));
        }
        if !initial_set.contains_point(&true_initial_state, 1e-9)? {
            return Err(Error::InvalidArgument(
                "true initial state lies outside the initial set".into(),
            ));
        }
        Ok(Self {
            transition,
            process_noise,
            schedule,
            initial_set,
            true_initial_state,
            n_nodes,
        })
    }

    pub fn dim(&self) -> usize {
        self.initial_set.dim()
    }

    /// The measurement strip of `node` at `step` for the observed value `y`.
    pub fn strip(&self, node: usize, step: usize, y: f64) -> Result<Strip> {
        Strip::new(
            self.schedule.row(self.dim(), node, step),
            y,
            self.schedule.noise_bound(node, step),
        )
    }

    pub fn process_noise_set(&self) -> Zonotope {
        Zonotope::new(DVector::zeros(self.dim()), self.process_noise.clone())
            .expect("dimensions checked at construction")
    }
}

/// States `x_0 … x_T` and the per-node measurements of each of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    /// `measurements[k][i]` is node `i`'s observation of `states[k]`.
    pub measurements: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Number of transitions (`states.len() - 1`).
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn n_nodes(&self) -> usize {
        self.measurements.first().map_or(0, Vec::len)
    }

    /// Writes `step,x1,…,xn,y0,…,y{N-1}`, one row per state.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let n = self.states.first().map_or(0, DVector::len);
        let mut out = csv::Writer::from_writer(writer);
        let header: Vec<String> = std::iter::once("step".to_string())
            .chain((1..=n).map(|i| format!("x{i}")))
            .chain((0..self.n_nodes()).map(|i| format!("y{i}")))
            .collect();
        out.write_record(&header)?;
        for (k, (x, ys)) in self.states.iter().zip(&self.measurements).enumerate() {
            let row: Vec<String> = std::iter::once(k.to_string())
                .chain(x.iter().map(f64::to_string))
                .chain(ys.iter().map(f64::to_string))
                .collect();
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(reader);
        let headers = input.headers()?.clone();
        let n = headers.iter().filter(|h| h.starts_with('x')).count();
        let nodes = headers.iter().filter(|h| h.starts_with('y')).count();
        if n == 0 || headers.len() != 1 + n + nodes {
            return Err(Error::InvalidArgument(
                "trajectory header must be step,x1..xn,y0..y{N-1}".into(),
            ));
        }
        let mut states = Vec::new();
        let mut measurements = Vec::new();
        for (row_index, record) in input.records().enumerate() {
            let record = record?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("row {row_index}: {e}")))
            };
            let step: usize = record[0]
                .trim()
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("row {row_index}: {e}")))?;
            if step != row_index {
                return Err(Error::InvalidArgument(format!(
                    "trajectory steps must be consecutive from 0, found {step} at row {row_index}"
                )));
            }
            let x = (1..=n).map(|i| parse(&record[i])).collect::<Result<Vec<_>>>()?;
            let y = (1 + n..1 + n + nodes)
                .map(|i| parse(&record[i]))
                .collect::<Result<Vec<_>>>()?;
            states.push(DVector::from_vec(x));
            measurements.push(y);
        }
        if states.is_empty() {
            return Err(Error::Empty("trajectory rows"));
        }
        Ok(Self {
            states,
            measurements,
        })
    }
}

/// `c + Gβ` with `β` uniform on `[-1, 1]^e`.
pub fn sample_in_zonotope<R: Rng + ?Sized>(z: &Zonotope, rng: &mut R) -> DVector<f64> {
    let beta = DVector::from_fn(z.num_generators(), |_, _| rng.gen_range(-1.0..=1.0));
    z.center() + z.generators() * beta
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Simulates `steps` transitions and one measurement per node per state.
///
/// Process noise is drawn from ChaCha8 stream [`PROCESS_NOISE_STREAM`] and
/// node `i`'s measurement noise from stream `i + 1`, all keyed by `seed`.
pub fn simulate(model: &SystemModel, steps: usize, seed: u64) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    let noise_set = model.process_noise_set();
    let mut process_rng = stream(seed, PROCESS_NOISE_STREAM);
    let mut node_rngs: Vec<ChaCha8Rng> = (0..model.n_nodes)
        .map(|i| stream(seed, i as u64 + 1))
        .collect();

    let mut states = Vec::with_capacity(steps + 1);
    let mut measurements = Vec::with_capacity(steps + 1);
    let mut x = model.true_initial_state.clone();
    for k in 0..=steps {
        let ys = node_rngs
            .iter_mut()
            .enumerate()
            .map(|(i, rng)| {
                let h = model.schedule.row(model.dim(), i, k);
                let r = model.schedule.noise_bound(i, k);
                h.dot(&x.transpose()) + r * rng.gen_range(-1.0..=1.0)
            })
            .collect();
        measurements.push(ys);
        let next = &model.transition * &x + sample_in_zonotope(&noise_set, &mut process_rng);
        states.push(std::mem::replace(&mut x, next));
    }
    Ok(Trajectory {
        states,
        measurements,
    })
}

/// Checks the noise-bound invariants of a trajectory against its model:
/// every transition residual lies in the process-noise zonotope and every
/// measurement lies within its strip.
pub fn check_trajectory(model: &SystemModel, trajectory: &Trajectory, tol: f64) -> Result<bool> {
    let noise_set = model.process_noise_set();
    for pair in trajectory.states.windows(2) {
        let residual = &pair[1] - &model.transition * &pair[0];
        if !noise_set.contains_point(&residual, tol)? {
            return Ok(false);
        }
    }
    for (k, (x, ys)) in trajectory
        .states
        .iter()
        .zip(&trajectory.measurements)
        .enumerate()
    {
        for (i, &y) in ys.iter().enumerate() {
            if !model.strip(i, k, y)?.contains(x, tol) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Tunable parameters of the rotating-target scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub n_nodes: usize,
    /// Process noise generators are `process_noise_scale · I₂`.
    pub process_noise_scale: f64,
    /// Measurement noise bound `R` of every strip, in meters.
    pub measurement_bound: f64,
    /// Center of the 160 m × 160 m initial box.
    pub initial_center: [f64; 2],
    /// Defaults to the center of the initial box.
    pub true_initial_state: Option<[f64; 2]>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n_nodes: 8,
            process_noise_scale: 0.02,
            measurement_bound: 0.2,
            initial_center: [0.0, 0.0],
            true_initial_state: None,
        }
    }
}

/// Rotation-like transition of the localization example.
pub fn rotating_target_transition() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.992, -0.1247, 0.1247, 0.992])
}

/// Half-width of the initial box, in meters.
pub const INITIAL_HALF_WIDTH: f64 = 80.0;

/// Neighbor counts used by the evaluation grid.
pub const PRESET_NEIGHBOR_COUNTS: [usize; 3] = [2, 4, 6];

/// The eight-node rotating-target localization scenario and its ring
/// topology presets for two, four and six neighbors.
pub fn rotating_target_scenario(params: &ScenarioParams) -> Result<(SystemModel, Vec<(usize, Topology)>)> {
    let center = DVector::from_row_slice(&params.initial_center);
    let initial_set = Zonotope::from_box(
        center.clone(),
        &DVector::from_element(2, INITIAL_HALF_WIDTH),
    )?;
    let true_initial_state = params
        .true_initial_state
        .map_or(center, |x| DVector::from_row_slice(&x));
    let model = SystemModel::new(
        rotating_target_transition(),
        DMatrix::identity(2, 2) * params.process_noise_scale,
        MeasurementSchedule::CyclicAxes {
            noise_bound: params.measurement_bound,
        },
        initial_set,
        true_initial_state,
        params.n_nodes,
    )?;
    let presets = PRESET_NEIGHBOR_COUNTS
        .iter()
        .filter(|&&k| k < params.n_nodes)
        .map(|&k| Topology::ring(params.n_nodes, k).map(|t| (k, t)))
        .collect::<Result<Vec<_>>>()?;
    Ok((model, presets))
}
