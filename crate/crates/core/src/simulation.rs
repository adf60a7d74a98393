//! Full-run driver: feeds a trajectory through the network round by round and
//! collects metrics.

use serde::Serialize;

use crate::error::{ensure_dim, Error, Result};
use crate::metrics::{PairwiseDistances, RadiusKind, SimRecord};
use crate::network::{run_round, Topology};
use crate::observers::{Dynamics, NodeState, ObserverConfig, ObserverKind};
use crate::plant::{SystemModel, Trajectory};
use crate::zonotope::Zonotope;

/// Default slack for the per-step containment check.
pub const DEFAULT_CONTAINMENT_TOL: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub observer: ObserverConfig,
    pub radius: RadiusKind,
    /// Fail with [`Error::ContainmentViolation`] when a posterior misses the
    /// true state by more than this gauge slack. `None` disables the check.
    pub containment_tol: Option<f64>,
    pub hausdorff: bool,
    pub snapshots: SnapshotSchedule,
    /// Record wall-clock compute time per node; zero otherwise.
    pub timing: bool,
}

impl RunOptions {
    pub fn new(observer: ObserverConfig) -> Self {
        Self {
            observer,
            radius: RadiusKind::default(),
            containment_tol: Some(DEFAULT_CONTAINMENT_TOL),
            hausdorff: true,
            snapshots: SnapshotSchedule::Every(10),
            timing: false,
        }
    }
}

/// Steps at which every node's posterior set is kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SnapshotSchedule {
    Never,
    /// Steps `0, every, 2·every, …`.
    Every(usize),
    At(Vec<usize>),
}

impl SnapshotSchedule {
    pub fn includes(&self, step: usize) -> bool {
        match self {
            Self::Never => false,
            Self::Every(every) => *every > 0 && step % every == 0,
            Self::At(steps) => steps.contains(&step),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub step: usize,
    /// The state the sets bound.
    pub true_state: Vec<f64>,
    pub sets: Vec<Zonotope>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// One record per node per step, ordered by step then node.
    pub records: Vec<SimRecord>,
    pub pairwise: Vec<PairwiseDistances>,
    pub snapshots: Vec<Snapshot>,
    /// Number of node updates that needed the pseudo-inverse fallback.
    pub fallbacks: usize,
}

/// Runs `steps` rounds of the observer network over `trajectory`.
///
/// Round `k` uses the measurements of `x_k`. The set-membership posterior
/// bounds `x_k`; the interval-based posterior already includes the
/// prediction and bounds `x_{k+1}`. Each record compares the posterior with
/// the state it bounds.
pub fn run(
    model: &SystemModel,
    topology: &Topology,
    trajectory: &Trajectory,
    steps: usize,
    options: &RunOptions,
) -> Result<RunOutput> {
    let n = model.dim();
    options.observer.validate(n)?;
    ensure_dim("topology nodes", model.n_nodes, topology.n_nodes())?;
    ensure_dim("trajectory nodes", model.n_nodes, trajectory.n_nodes())?;
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    if trajectory.steps() < steps {
        return Err(Error::InvalidArgument(format!(
            "trajectory covers {} steps, {steps} requested",
            trajectory.steps()
        )));
    }
    if options.hausdorff && n != 2 {
        return Err(Error::NotPlanar(n));
    }
    let dynamics = Dynamics::new(model.transition.clone(), model.process_noise.clone())?;
    let lead = match options.observer.kind {
        ObserverKind::SetMembership => 0,
        ObserverKind::IntervalBased => 1,
    };

    let mut states: Vec<NodeState> = (0..model.n_nodes)
        .map(|i| NodeState {
            node_id: i,
            estimate: model.initial_set.clone(),
        })
        .collect();
    let mut out = RunOutput {
        records: Vec::with_capacity(steps * model.n_nodes),
        pairwise: Vec::new(),
        snapshots: Vec::new(),
        fallbacks: 0,
    };

    for k in 0..steps {
        let strips = trajectory.measurements[k]
            .iter()
            .enumerate()
            .map(|(i, &y)| model.strip(i, k, y))
            .collect::<Result<Vec<_>>>()?;
        let (round, _) = run_round(k, topology, &states, &strips, &options.observer, &dynamics)?;
        let truth = &trajectory.states[k + lead];

        for (i, node) in round.iter().enumerate() {
            let posterior = &node.step.posterior;
            if let Some(tol) = options.containment_tol {
                if posterior.gauge(&(truth - posterior.center()), tol) > 1.0 + tol {
                    return Err(Error::ContainmentViolation { step: k, node: i });
                }
            }
            let elapsed = if options.timing {
                node.compute_time
            } else {
                Default::default()
            };
            out.records
                .push(SimRecord::from_estimate(k, i, posterior, truth, options.radius, elapsed));
            out.fallbacks += usize::from(node.step.pseudo_inverse_fallback);
        }
        if options.hausdorff {
            let vertices = round
                .iter()
                .map(|node| node.step.posterior.vertices_2d())
                .collect::<Result<Vec<_>>>()?;
            out.pairwise.push(PairwiseDistances::from_vertex_sets(k, &vertices));
        }
        if options.snapshots.includes(k) {
            out.snapshots.push(Snapshot {
                step: k,
                true_state: truth.iter().copied().collect(),
                sets: round.iter().map(|node| node.step.posterior.clone()).collect(),
            });
        }
        states = round.into_iter().map(|node| node.step.next).collect();
    }
    Ok(out)
}
