//! Pipeline configuration file.
//!
//! Units: positions in metres, headings in radians, times in seconds,
//! speeds in m/s and turn rates in rad/s. Every physical quantity must be
//! given explicitly; only solver knobs have defaults.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ecsk_core::dynamics::{DubinsCar, DynamicalSystem, Integrator};
use ecsk_core::grid::GridSpec;
use ecsk_core::hj_solver::{snapshot_intervals, Scheme, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Environment variable that replaces `output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "ECSK_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Unicycle `(x, y, heading)` with controls `(speed, turn rate)`.
    Dubins,
    Integrator1d,
    Integrator2d,
}

impl Model {
    pub fn state_dim(self) -> usize {
        match self {
            Model::Dubins => 3,
            Model::Integrator1d => 1,
            Model::Integrator2d => 2,
        }
    }

    fn control_dim(self) -> usize {
        match self {
            Model::Dubins | Model::Integrator2d => 2,
            Model::Integrator1d => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub model: Model,
    /// `[low, high]` per control channel. Dubins: speed (m/s), then turn
    /// rate (rad/s). Integrators: velocity per axis (m/s).
    pub control_bounds: Vec<[f64; 2]>,
}

impl SystemConfig {
    pub fn build(&self) -> ecsk_core::Result<Arc<dyn DynamicalSystem>> {
        let b: Vec<(f64, f64)> = self.control_bounds.iter().map(|c| (c[0], c[1])).collect();
        Ok(match self.model {
            Model::Dubins => Arc::new(DubinsCar::new(b[0], b[1])?),
            Model::Integrator1d | Model::Integrator2d => Arc::new(Integrator::new(&b)?),
        })
    }

    fn validate(&self, name: &str) -> CliResult<()> {
        let field = format!("{name}.control_bounds");
        if self.control_bounds.len() != self.model.control_dim() {
            return Err(CliError::field(
                field,
                format!(
                    "{:?} takes {} control channels, got {}",
                    self.model,
                    self.model.control_dim(),
                    self.control_bounds.len()
                ),
            ));
        }
        for (j, [lo, hi]) in self.control_bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(CliError::field(
                    &field,
                    format!("channel {j}: need finite low <= high, got [{lo}, {hi}]"),
                ));
            }
        }
        Ok(())
    }

    /// Largest attainable planar speed.
    pub fn max_speed(&self) -> f64 {
        match self.model {
            Model::Dubins => self.control_bounds[0][0].abs().max(self.control_bounds[0][1].abs()),
            Model::Integrator1d | Model::Integrator2d => self
                .control_bounds
                .iter()
                .map(|[lo, hi]| lo.abs().max(hi.abs()).powi(2))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    pub counts: Vec<usize>,
    pub periodic: Vec<bool>,
}

impl GridConfig {
    pub fn spec(&self) -> ecsk_core::Result<GridSpec> {
        GridSpec::new(
            self.mins.clone(),
            self.maxs.clone(),
            self.counts.clone(),
            self.periodic.clone(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    Upwind,
    LaxFriedrichs,
    #[default]
    Eno2,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::Upwind => Scheme::Upwind,
            SchemeName::LaxFriedrichs => Scheme::LaxFriedrichs,
            SchemeName::Eno2 => Scheme::Eno2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// The controlled system.
    pub internal: SystemConfig,
    /// The possibly unobserved system.
    pub external: SystemConfig,
    /// Relative-frame grid shared by every stage.
    pub grid: GridConfig,
    /// Start of the horizon (s).
    pub t0: f64,
    /// End of the horizon (s).
    pub tf: f64,
    /// Snapshot spacing (s); `tf - t0` must be a whole multiple.
    pub snapshot_dt: f64,
    /// Radius of the initial uncertainty ball around the observed
    /// external state (m).
    pub r0: f64,
    /// Centre distance below which the two systems collide (m).
    pub collision_radius: f64,
    /// Sensing radius (m); when set, the reachable set from beyond the
    /// sensing disk is computed as well.
    #[serde(default)]
    pub r_sense: Option<f64>,
    pub cfl_factor: f64,
    /// Value (m) below which the runtime filter takes over; defaults to
    /// two of the largest grid cells.
    #[serde(default)]
    pub switch_tolerance: Option<f64>,
    pub rng_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub scheme: SchemeName,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("malformed config: {e}")))
    }

    /// Reads, parses and validates a config file.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg = Self::from_json(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies the output directory environment override and a seed
    /// override.
    pub fn resolve(mut self, seed: Option<u64>) -> Self {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            if !dir.is_empty() {
                self.output_dir = PathBuf::from(dir);
            }
        }
        if let Some(s) = seed {
            self.rng_seed = s;
        }
        self
    }

    pub fn validate(&self) -> CliResult<()> {
        self.internal.validate("internal")?;
        self.external.validate("external")?;
        let dims = self.internal.model.state_dim();
        if self.external.model.state_dim() != dims {
            return Err(CliError::field(
                "external.model",
                "internal and external systems must share a state dimension",
            ));
        }
        let g = &self.grid;
        for (name, len) in [
            ("grid.mins", g.mins.len()),
            ("grid.maxs", g.maxs.len()),
            ("grid.counts", g.counts.len()),
            ("grid.periodic", g.periodic.len()),
        ] {
            if len != dims {
                return Err(CliError::field(
                    name,
                    format!("expected {dims} entries, got {len}"),
                ));
            }
        }
        if let Err(e) = g.spec() {
            return Err(CliError::field("grid", e.to_string()));
        }
        if self.internal.model == Model::Dubins {
            if g.periodic != [false, false, true] {
                return Err(CliError::field(
                    "grid.periodic",
                    "a Dubins grid needs periodic = [false, false, true]",
                ));
            }
            let pi = std::f64::consts::PI;
            if (g.mins[2] + pi).abs() > 1e-9 || (g.maxs[2] - pi).abs() > 1e-9 {
                return Err(CliError::field(
                    "grid.mins",
                    "the heading axis must span [-pi, pi)",
                ));
            }
        }
        if !self.t0.is_finite() {
            return Err(CliError::field("t0", "must be finite"));
        }
        if !(self.tf.is_finite() && self.tf > self.t0) {
            return Err(CliError::field(
                "tf",
                format!("must be greater than t0 = {}, got {}", self.t0, self.tf),
            ));
        }
        if !(self.snapshot_dt > 0.0 && self.snapshot_dt.is_finite()) {
            return Err(CliError::field(
                "snapshot_dt",
                format!("must be positive, got {}", self.snapshot_dt),
            ));
        }
        if let Err(e) = snapshot_intervals(self.t0, self.tf, self.snapshot_dt) {
            return Err(CliError::field("snapshot_dt", e.to_string()));
        }
        if !(self.r0 >= 0.0 && self.r0.is_finite()) {
            return Err(CliError::field(
                "r0",
                format!("must be >= 0, got {}", self.r0),
            ));
        }
        for &d in position_dims(self.external.model) {
            if self.r0 > g.maxs[d].min(-g.mins[d]) {
                return Err(CliError::field(
                    "r0",
                    "the initial ball must fit inside the grid around the origin",
                ));
            }
        }
        if !(self.collision_radius >= 0.0 && self.collision_radius.is_finite()) {
            return Err(CliError::field(
                "collision_radius",
                format!("must be >= 0, got {}", self.collision_radius),
            ));
        }
        if let Some(r) = self.r_sense {
            if !(r > 0.0 && r.is_finite()) {
                return Err(CliError::field(
                    "r_sense",
                    format!("must be > 0, got {r}"),
                ));
            }
            for &d in position_dims(self.external.model) {
                if g.mins[d] > -r || g.maxs[d] < r {
                    return Err(CliError::field(
                        "r_sense",
                        format!("sensing disk does not fit in grid dimension {d}"),
                    ));
                }
            }
        }
        if !(self.cfl_factor > 0.0 && self.cfl_factor <= 1.0) {
            return Err(CliError::field(
                "cfl_factor",
                format!("must lie in (0, 1], got {}", self.cfl_factor),
            ));
        }
        if let Some(tol) = self.switch_tolerance {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(CliError::field(
                    "switch_tolerance",
                    format!("must be > 0, got {tol}"),
                ));
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(CliError::field("output_dir", "must not be empty"));
        }
        Ok(())
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            cfl_factor: self.cfl_factor,
            snapshot_dt: self.snapshot_dt,
            scheme: self.scheme.into(),
            ..SolverConfig::default()
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn position_dims(model: Model) -> &'static [usize] {
    match model {
        Model::Dubins | Model::Integrator2d => &[0, 1],
        Model::Integrator1d => &[0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample() -> PipelineConfig {
        PipelineConfig::from_json(include_str!("../../../configs/dubins_small.json")).unwrap()
    }

    #[test]
    fn sample_config_is_valid() {
        let c = sample();
        c.validate().unwrap();
        assert_eq!(c.internal.build().unwrap().name(), "dubins");
        assert_eq!(c.external.max_speed(), 3.0);
    }

    #[test]
    fn round_trips_through_json() {
        let c = sample();
        assert_eq!(PipelineConfig::from_json(&c.to_json_pretty()).unwrap(), c);
    }

    #[test]
    fn missing_physical_fields_are_rejected() {
        let mut v: serde_json::Value =
            serde_json::from_str(include_str!("../../../configs/dubins_small.json")).unwrap();
        v.as_object_mut().unwrap().remove("collision_radius");
        let err = PipelineConfig::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("collision_radius"), "{err}");
    }

    #[test]
    fn validation_names_the_field() {
        let cases: Vec<(&str, Box<dyn Fn(&mut PipelineConfig)>)> = vec![
            ("tf", Box::new(|c| c.tf = c.t0 - 1.0)),
            ("snapshot_dt", Box::new(|c| c.snapshot_dt = 0.3)),
            ("r0", Box::new(|c| c.r0 = -1.0)),
            ("collision_radius", Box::new(|c| c.collision_radius = f64::NAN)),
            ("cfl_factor", Box::new(|c| c.cfl_factor = 1.5)),
            ("grid.counts", Box::new(|c| c.grid.counts.pop().map(|_| ()).unwrap())),
            ("grid.periodic", Box::new(|c| c.grid.periodic[2] = false)),
            ("internal.control_bounds", Box::new(|c| c.internal.control_bounds[0] = [4.0, 0.0])),
            ("r_sense", Box::new(|c| c.r_sense = Some(100.0))),
            ("switch_tolerance", Box::new(|c| c.switch_tolerance = Some(0.0))),
        ];
        for (field, mutate) in cases {
            let mut c = sample();
            mutate(&mut c);
            let err = c.validate().unwrap_err();
            assert!(
                matches!(&err, CliError::Field { field: f, .. } if f == field),
                "{field}: {err}"
            );
            assert_eq!(err.exit_code(), 2);
        }
    }
}
