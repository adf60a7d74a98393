//! Per-node observer state machines.
//!
//! * Set-membership observer: measurement update (strip intersection with the
//!   F-radius-optimal gain), diffusion update (weighted zonotope intersection
//!   followed by order reduction), time update.
//! * Interval-based observer: one Luenberger step that corrects and
//!   propagates in a single zonotope map, followed by the diffusion update.
//!
//! Each round is split into two phases so that a network can exchange
//! corrected sets between them: [`correct`] produces the set a node shares,
//! [`fuse`] combines the sets received from the neighborhood.
//!
//! Time indexing: at round `k` a node holds a set bounding `x_k` and
//! receives measurements of `x_k`. The set-membership posterior bounds `x_k`;
//! the interval-based posterior already bounds `x_{k+1}`.
//!
//! The reported posterior of either observer is the output of the diffusion
//! intersection. The set-membership observer reduces it to `q` generators
//! only for the state it carries into the time update.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_dim, Error, Result};
use crate::intersection::{
    intersect_strips, intersect_zonotopes, optimal_diffusion_weights, optimal_luenberger_gain,
    optimal_strip_gain, stack_rows, Strip, StripIntersectionGain,
};
use crate::zonotope::Zonotope;

/// Generator budget used when none is configured.
pub const DEFAULT_ORDER: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObserverKind {
    SetMembership,
    IntervalBased,
}

impl ObserverKind {
    pub const ALL: [ObserverKind; 2] = [ObserverKind::SetMembership, ObserverKind::IntervalBased];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SetMembership => "sm",
            Self::IntervalBased => "iv",
        }
    }
}

impl fmt::Display for ObserverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObserverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sm" | "set-membership" => Ok(Self::SetMembership),
            "iv" | "interval" | "interval-based" => Ok(Self::IntervalBased),
            other => Err(Error::InvalidArgument(format!(
                "unknown algorithm '{other}' (expected sm or iv)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObserverConfig {
    pub kind: ObserverKind,
    /// Reduction order `q`.
    pub order: usize,
    pub diffusion: bool,
}

impl ObserverConfig {
    pub fn new(kind: ObserverKind, order: usize, diffusion: bool) -> Self {
        Self {
            kind,
            order,
            diffusion,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.order < n {
            return Err(Error::InvalidArgument(format!(
                "reduction order {} is smaller than the state dimension {n}",
                self.order
            )));
        }
        Ok(())
    }
}

/// State transition `F` and process-noise generators `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dynamics {
    transition: DMatrix<f64>,
    process_noise: DMatrix<f64>,
}

impl Dynamics {
    pub fn new(transition: DMatrix<f64>, process_noise: DMatrix<f64>) -> Result<Self> {
        let n = transition.nrows();
        ensure_dim("transition columns", n, transition.ncols())?;
        ensure_dim("process noise rows", n, process_noise.nrows())?;
        Ok(Self {
            transition,
            process_noise,
        })
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn process_noise(&self) -> &DMatrix<f64> {
        &self.process_noise
    }

    pub fn dim(&self) -> usize {
        self.transition.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub node_id: usize,
    pub estimate: Zonotope,
}

/// Everything a node receives in one round, its own entries included.
#[derive(Debug, Clone, Default)]
pub struct NeighborhoodInput {
    pub strips: Vec<(usize, Strip)>,
    pub shared_sets: Vec<(usize, Zonotope)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// State carried into the next round.
    pub next: NodeState,
    /// Set reported for this round (see the module docs for its time index).
    pub posterior: Zonotope,
    /// Whether any gain solve fell back to the pseudo-inverse.
    pub pseudo_inverse_fallback: bool,
}

/// Phase-one result: the set a node shares with its neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct Corrected {
    pub set: Zonotope,
    pub pseudo_inverse_fallback: bool,
}

fn strip_list(strips: &[(usize, Strip)]) -> Vec<Strip> {
    strips.iter().map(|(_, s)| s.clone()).collect()
}

/// Measurement update with the F-radius-optimal gain.
pub fn sm_measurement_update(state: &NodeState, strips: &[Strip]) -> Result<Zonotope> {
    Ok(sm_measurement_update_with_diagnostics(state, strips)?.set)
}

fn sm_measurement_update_with_diagnostics(state: &NodeState, strips: &[Strip]) -> Result<Corrected> {
    let gain = optimal_strip_gain(&state.estimate, strips)?;
    Ok(Corrected {
        set: intersect_strips(&state.estimate, strips, &gain)?,
        pseudo_inverse_fallback: gain.pseudo_inverse_fallback,
    })
}

/// Diffusion update: optimal weights, weighted intersection, reduction to `q`.
pub fn sm_diffusion_update(shared: &[Zonotope], q: usize) -> Result<Zonotope> {
    let weights = optimal_diffusion_weights(shared)?;
    intersect_zonotopes(shared, &weights)?.reduce(q)
}

/// Time update `F·Z ⊕ ⟨0, Q⟩`.
pub fn sm_time_update(z: &Zonotope, dynamics: &Dynamics) -> Result<Zonotope> {
    let noise = Zonotope::new(DVector::zeros(dynamics.dim()), dynamics.process_noise.clone())?;
    z.linear_map(&dynamics.transition)?.minkowski_sum(&noise)
}

/// Luenberger propagation for an arbitrary gain, without reduction:
///
/// `c̄ = (F − ΛΓ) c + Λ y`,
/// `Ḡ = [(F − ΛΓ) G, −λ¹ r¹, …, −λᵐ rᵐ, Q]`.
pub fn luenberger_propagate(
    prior: &Zonotope,
    strips: &[Strip],
    gain: &StripIntersectionGain,
    dynamics: &Dynamics,
) -> Result<Zonotope> {
    let n = prior.dim();
    ensure_dim("dynamics", n, dynamics.dim())?;
    ensure_dim("luenberger gain count", strips.len(), gain.len())?;
    ensure_dim("luenberger gain rows", n, gain.matrix().nrows())?;
    let gamma = stack_rows(strips, n)?;
    let lambda = gain.matrix();
    let closed_loop = &dynamics.transition - lambda * &gamma;
    let y = DVector::from_iterator(strips.len(), strips.iter().map(Strip::y));
    let r = DVector::from_iterator(strips.len(), strips.iter().map(Strip::r));

    let center = &closed_loop * prior.center() + lambda * y;
    let (e, m, eq) = (
        prior.num_generators(),
        strips.len(),
        dynamics.process_noise.ncols(),
    );
    let mut generators = DMatrix::zeros(n, e + m + eq);
    generators
        .columns_mut(0, e)
        .copy_from(&(closed_loop * prior.generators()));
    generators
        .columns_mut(e, m)
        .copy_from(&(-(lambda * DMatrix::from_diagonal(&r))));
    generators
        .columns_mut(e + m, eq)
        .copy_from(&dynamics.process_noise);
    Zonotope::new(center, generators)
}

/// Luenberger update with the F-radius-optimal observer gain, reduced to `q`.
pub fn iv_luenberger_update(
    state: &NodeState,
    strips: &[Strip],
    dynamics: &Dynamics,
    q: usize,
) -> Result<Zonotope> {
    Ok(iv_luenberger_update_with_diagnostics(state, strips, dynamics, q)?.set)
}

fn iv_luenberger_update_with_diagnostics(
    state: &NodeState,
    strips: &[Strip],
    dynamics: &Dynamics,
    q: usize,
) -> Result<Corrected> {
    let gain = optimal_luenberger_gain(&dynamics.transition, &state.estimate, strips)?;
    let set = luenberger_propagate(&state.estimate, strips, &gain, dynamics)?.reduce(q)?;
    Ok(Corrected {
        set,
        pseudo_inverse_fallback: gain.pseudo_inverse_fallback,
    })
}

/// Phase one: measurement update (set-membership) or Luenberger update
/// (interval-based) from the neighborhood's strips.
pub fn correct(
    state: &NodeState,
    strips: &[Strip],
    cfg: &ObserverConfig,
    dynamics: &Dynamics,
) -> Result<Corrected> {
    cfg.validate(state.estimate.dim())?;
    match cfg.kind {
        ObserverKind::SetMembership => sm_measurement_update_with_diagnostics(state, strips),
        ObserverKind::IntervalBased => {
            iv_luenberger_update_with_diagnostics(state, strips, dynamics, cfg.order)
        }
    }
}

/// Phase two: combine the corrected sets of the neighborhood.
///
/// `shared` must contain the node's own corrected set at `own_index`. With
/// diffusion disabled only that entry is used.
pub fn fuse(
    node_id: usize,
    shared: &[&Zonotope],
    own_index: usize,
    cfg: &ObserverConfig,
    dynamics: &Dynamics,
) -> Result<StepOutput> {
    let own = *shared
        .get(own_index)
        .ok_or_else(|| Error::InvalidArgument("own corrected set missing".into()))?;
    let fused = if cfg.diffusion && shared.len() > 1 {
        let sets: Vec<Zonotope> = shared.iter().map(|&z| z.clone()).collect();
        let weights = optimal_diffusion_weights(&sets)?;
        intersect_zonotopes(&sets, &weights)?
    } else {
        own.clone()
    };
    let (posterior, next) = match cfg.kind {
        ObserverKind::SetMembership => {
            let predicted = sm_time_update(&fused.reduce(cfg.order)?, dynamics)?;
            (fused, predicted)
        }
        ObserverKind::IntervalBased => (fused.clone(), fused),
    };
    Ok(StepOutput {
        next: NodeState {
            node_id,
            estimate: next,
        },
        posterior,
        pseudo_inverse_fallback: false,
    })
}

/// One full round for a single node.
///
/// The entry of `input.shared_sets` carrying this node's id is replaced by
/// the corrected set computed here; the other entries are the neighbors'
/// corrected sets for the same round.
pub fn step(
    state: &NodeState,
    input: &NeighborhoodInput,
    cfg: &ObserverConfig,
    dynamics: &Dynamics,
) -> Result<StepOutput> {
    if input.strips.is_empty() {
        return Err(Error::Empty("strips"));
    }
    let corrected = correct(state, &strip_list(&input.strips), cfg, dynamics)?;
    let own_index = input
        .shared_sets
        .iter()
        .position(|(id, _)| *id == state.node_id)
        .ok_or_else(|| Error::InvalidArgument("shared sets must include the node itself".into()))?;
    let shared: Vec<&Zonotope> = input
        .shared_sets
        .iter()
        .enumerate()
        .map(|(i, (_, z))| if i == own_index { &corrected.set } else { z })
        .collect();
    let mut out = fuse(state.node_id, &shared, own_index, cfg, dynamics)?;
    out.pseudo_inverse_fallback = corrected.pseudo_inverse_fallback;
    Ok(out)
}
