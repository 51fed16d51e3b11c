//! Backward avoid tube of the internal system and the eyes-closed safety
//! kernel extracted from it.
//!
//! The value `V(x, t)` is the best worst-case clearance the internal system
//! can keep from the unsafe tube over `[t, tf]` when it stops observing the
//! external system at `t0`. States with `V(x, t) >= 0` form the kernel slice
//! at elapsed time `t`.

use std::sync::Arc;

use crate::dynamics::DynamicalSystem;
use crate::error::{Error, Result};
use crate::grid::{ScalarField, TimeSampledField};
use crate::hj_solver::{integrate_avoid, Progress, SolverConfig};
use crate::setops::UnsafeTube;

#[derive(Debug, Clone, PartialEq)]
pub struct AvoidSolution {
    pub tube: TimeSampledField,
    pub unsafe_tube: Arc<UnsafeTube>,
    pub horizon: (f64, f64),
}

/// Solves the avoid problem over the unsafe tube's whole time range.
pub fn solve_avoid(
    unsafe_tube: Arc<UnsafeTube>,
    system: &dyn DynamicalSystem,
    cfg: &SolverConfig,
    progress: Progress<'_>,
) -> Result<AvoidSolution> {
    let d = &unsafe_tube.d_tilde;
    let tube = integrate_avoid(d.last(), d, system, cfg, progress)?;
    let horizon = (d.start_time(), d.end_time());
    Ok(AvoidSolution {
        tube,
        unsafe_tube,
        horizon,
    })
}

impl AvoidSolution {
    /// Value field at elapsed time `t`, linearly interpolated between
    /// snapshots. The kernel at `t` is its super-zero set.
    pub fn kernel_slice(&self, t: f64) -> Result<ScalarField> {
        self.tube.field_at(t)
    }

    pub fn value(&self, x: &[f64], t: f64) -> Result<f64> {
        self.tube.value_at(x, t)
    }

    /// Whether `x` lies in the kernel at elapsed time `t`.
    pub fn in_kernel(&self, x: &[f64], t: f64) -> Result<bool> {
        Ok(self.value(x, t)? >= 0.0)
    }

    /// Largest amount by which the value exceeds the unsafe field at any
    /// node and snapshot. Zero up to rounding for a correct solve.
    pub fn cap_violation(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (v, d) in self
            .tube
            .snapshots()
            .iter()
            .zip(self.unsafe_tube.d_tilde.snapshots())
        {
            for (a, b) in v.values().iter().zip(d.values()) {
                worst = worst.max(a - b);
            }
        }
        worst
    }

    /// Largest `V(x, t) - V(x, s)` over nodes and snapshot pairs `t <= s`.
    /// Non-positive when the value never decreases toward later times.
    pub fn horizon_monotonicity_violation(&self) -> f64 {
        let snaps = self.tube.snapshots();
        let n = snaps[0].values().len();
        let mut worst = f64::NEG_INFINITY;
        // Per node: max over t <= s of V(t) - V(s) via a backward running min.
        let mut running_min = snaps[snaps.len() - 1].values().to_vec();
        for snap in snaps.iter().rev().skip(1) {
            let vals = snap.values();
            for k in 0..n {
                worst = worst.max(vals[k] - running_min[k]);
                running_min[k] = running_min[k].min(vals[k]);
            }
        }
        worst
    }
}

/// L-infinity difference between the two earliest snapshots.
pub fn convergence_gap(sol: &AvoidSolution) -> Result<f64> {
    let snaps = sol.tube.snapshots();
    if snaps.len() < 2 {
        return Err(Error::InvalidArgument(
            "convergence gap needs at least two snapshots".into(),
        ));
    }
    snaps[0].max_abs_diff(&snaps[1])
}

/// L-infinity difference between the kernel slices at elapsed time zero of
/// two solves over different horizons on the same grid.
pub fn horizon_gap(a: &AvoidSolution, b: &AvoidSolution) -> Result<f64> {
    a.kernel_slice(a.horizon.0)?
        .max_abs_diff(&b.kernel_slice(b.horizon.0)?)
}
