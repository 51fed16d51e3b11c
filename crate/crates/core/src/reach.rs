//! Forward reachable sets of the external system.

use crate::dynamics::DynamicalSystem;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, TimeSampledField};
use crate::hj_solver::{integrate_reach, Progress, SolverConfig};

/// Where the reachable set starts from.
#[derive(Debug, Clone, PartialEq)]
pub enum ReachOrigin {
    /// A single observed state, known up to a ball of radius `r0`.
    Point(Vec<f64>),
    /// Every state whose position lies at or beyond `r_sense` from the origin.
    SensingComplement { r_sense: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachSolution {
    /// Value function snapshots; `x` is reachable at `t` iff the value is <= 0.
    pub tube: TimeSampledField,
    pub origin: ReachOrigin,
    pub r0: f64,
    /// Positional dimensions of the external system's state.
    pub position_dims: Vec<usize>,
}

/// Initial uncertainty radius used when none is given: 1.5 cell diagonals.
pub fn default_r0(spec: &GridSpec) -> f64 {
    1.5 * spec.cell_diagonal()
}

/// Euclidean distance on the grid's metric (wrapped on periodic dims).
fn grid_distance(spec: &GridSpec, a: &[f64], b: &[f64]) -> f64 {
    (0..spec.dims())
        .map(|d| spec.coord_delta(d, a[d], b[d]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Forward reachable set from `x_ext0`, initialized as `|x - x_ext0| - r0`.
pub fn frs_from_point(
    system: &dyn DynamicalSystem,
    x_ext0: &[f64],
    r0: f64,
    t0: f64,
    tf: f64,
    spec: &GridSpec,
    cfg: &SolverConfig,
    progress: Progress<'_>,
) -> Result<ReachSolution> {
    if !(r0 >= 0.0 && r0.is_finite()) {
        return Err(Error::InvalidArgument(format!("r0 must be >= 0, got {r0}")));
    }
    if x_ext0.len() != spec.dims() {
        return Err(Error::InvalidArgument(format!(
            "start state of length {} for a {}-dimensional grid",
            x_ext0.len(),
            spec.dims()
        )));
    }
    for d in 0..spec.dims() {
        if spec.periodic()[d] {
            continue;
        }
        if x_ext0[d] - r0 < spec.mins()[d] || x_ext0[d] + r0 > spec.maxs()[d] {
            return Err(Error::OutOfDomain {
                point: x_ext0.to_vec(),
            });
        }
    }
    let origin = x_ext0.to_vec();
    let v0 = ScalarField::from_fn(spec.clone(), t0, cfg.execution, |x| {
        grid_distance(spec, x, &origin) - r0
    })?;
    let tube = integrate_reach(&v0, system, t0, tf, cfg, progress)?;
    Ok(ReachSolution {
        tube,
        origin: ReachOrigin::Point(origin),
        r0,
        position_dims: system.position_dims(),
    })
}

/// Forward reachable set of every state outside the sensing disk of radius
/// `r_sense` around the origin. Initialized as `r_sense - |p|`, which is
/// negative beyond the disk and independent of non-positional dimensions.
pub fn frs_from_sensing_complement(
    system: &dyn DynamicalSystem,
    r_sense: f64,
    t0: f64,
    tf: f64,
    spec: &GridSpec,
    cfg: &SolverConfig,
    progress: Progress<'_>,
) -> Result<ReachSolution> {
    if !(r_sense > 0.0 && r_sense.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "r_sense must be > 0, got {r_sense}"
        )));
    }
    let pos = system.position_dims();
    for &d in &pos {
        if spec.mins()[d] > -r_sense || spec.maxs()[d] < r_sense {
            return Err(Error::InvalidArgument(format!(
                "sensing disk of radius {r_sense} does not fit in dimension {d} of the grid"
            )));
        }
    }
    let v0 = ScalarField::from_fn(spec.clone(), t0, cfg.execution, |x| {
        r_sense - pos.iter().map(|&d| x[d] * x[d]).sum::<f64>().sqrt()
    })?;
    let tube = integrate_reach(&v0, system, t0, tf, cfg, progress)?;
    Ok(ReachSolution {
        tube,
        origin: ReachOrigin::SensingComplement { r_sense },
        r0: 0.0,
        position_dims: pos,
    })
}

impl ReachSolution {
    pub fn value(&self, x: &[f64], t: f64) -> Result<f64> {
        self.tube.value_at(x, t)
    }

    pub fn membership(&self, x: &[f64], t: f64) -> Result<bool> {
        Ok(self.value(x, t)? <= 0.0)
    }
}

/// Whether `x` is reachable at `t`: interpolated value <= 0.
pub fn membership(sol: &ReachSolution, x: &[f64], t: f64) -> Result<bool> {
    sol.membership(x, t)
}
