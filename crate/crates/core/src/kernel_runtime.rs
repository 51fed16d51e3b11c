//! Runtime queries against a computed safety kernel.
//!
//! The kernel is stored in the frame of the external system's last observed
//! pose: origin at its position, x axis along its heading. World states are
//! planar poses `(x, y, heading)` for both vehicles. Time arguments are the
//! elapsed time since the last observation.

use std::sync::Arc;

use crate::dynamics::{DynamicalSystem, Extremum, MAX_CONTROLS};
use crate::error::{Error, Result};
use crate::grid::{wrap_angle, TimeSampledField};

/// Internal pose expressed in the external system's anchored frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeState {
    pub p_rel: [f64; 2],
    /// Wrapped into `[-pi, pi)`.
    pub theta_rel: f64,
}

impl RelativeState {
    pub fn as_array(&self) -> [f64; 3] {
        [self.p_rel[0], self.p_rel[1], self.theta_rel]
    }
}

/// Translates by the anchor position, rotates by minus its heading and
/// subtracts headings.
pub fn to_relative(x_int: &[f64], x_ext0: &[f64]) -> RelativeState {
    let (dx, dy) = (x_int[0] - x_ext0[0], x_int[1] - x_ext0[1]);
    let (s, c) = x_ext0[2].sin_cos();
    RelativeState {
        p_rel: [c * dx + s * dy, -s * dx + c * dy],
        theta_rel: wrap_angle(x_int[2] - x_ext0[2]),
    }
}

/// Which extremum of `grad(V) . f_int` the evasion control takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ControlConvention {
    /// Steepest value ascent: `argmax_u grad(V) . f(x, u)`.
    #[default]
    Ascent,
    /// `argmin_u grad(V) . f(x, u)`, the steepest descent. Kept for
    /// comparison; it drives the system toward the unsafe set.
    LiteralArgmin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Nominal,
    Safety,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Nominal => "NOMINAL",
            Mode::Safety => "SAFETY",
        }
    }
}

/// Physical parameters the kernel was computed with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMeta {
    pub collision_radius: f64,
    pub r0: f64,
    /// Top speed of the external system.
    pub external_speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub control: Vec<f64>,
    pub mode: Mode,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct SafetyKernel {
    values: TimeSampledField,
    system: Arc<dyn DynamicalSystem>,
    meta: KernelMeta,
    switch_tolerance: f64,
    gradient_step: usize,
    convention: ControlConvention,
}

impl SafetyKernel {
    /// Wraps an avoid-tube value stack over a planar `(x, y, heading)` grid.
    /// The switch tolerance defaults to two of the largest grid cells.
    pub fn new(
        values: TimeSampledField,
        system: Arc<dyn DynamicalSystem>,
        meta: KernelMeta,
    ) -> Result<Self> {
        let spec = values.spec();
        if spec.dims() != 3 || system.state_dim() != 3 {
            return Err(Error::GridMismatch(format!(
                "kernel expects a planar pose grid; grid has {} dims, system {} states",
                spec.dims(),
                system.state_dim()
            )));
        }
        if system.position_dims() != [0, 1] || system.angle_dims() != [2] || !spec.periodic()[2] {
            return Err(Error::InvalidArgument(
                "kernel expects (x, y, heading) states with a periodic heading axis".into(),
            ));
        }
        let switch_tolerance = 2.0 * spec.max_spacing();
        Ok(Self {
            values,
            system,
            meta,
            switch_tolerance,
            gradient_step: 1,
            convention: ControlConvention::Ascent,
        })
    }

    pub fn with_switch_tolerance(mut self, tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "switch_tolerance must be > 0, got {tol}"
            )));
        }
        self.switch_tolerance = tol;
        Ok(self)
    }

    pub fn with_gradient_step(mut self, cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::InvalidArgument(
                "gradient_step must be at least one cell".into(),
            ));
        }
        self.gradient_step = cells;
        Ok(self)
    }

    pub fn with_convention(mut self, convention: ControlConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn values(&self) -> &TimeSampledField {
        &self.values
    }
    pub fn system(&self) -> &dyn DynamicalSystem {
        self.system.as_ref()
    }
    pub fn meta(&self) -> &KernelMeta {
        &self.meta
    }
    pub fn switch_tolerance(&self) -> f64 {
        self.switch_tolerance
    }
    pub fn gradient_step(&self) -> usize {
        self.gradient_step
    }
    pub fn convention(&self) -> ControlConvention {
        self.convention
    }
    /// Length of the stored horizon.
    pub fn horizon(&self) -> f64 {
        self.values.end_time() - self.values.start_time()
    }

    fn absolute_time(&self, elapsed: f64) -> Result<f64> {
        let span = self.horizon();
        if !(elapsed >= 0.0 && elapsed <= span * (1.0 + 1e-12)) {
            return Err(Error::TimeOutOfRange {
                time: elapsed,
                start: 0.0,
                end: span,
            });
        }
        Ok(self.values.start_time() + elapsed.min(span))
    }

    pub fn value_relative(&self, rel: &RelativeState, elapsed: f64) -> Result<f64> {
        let t = self.absolute_time(elapsed)?;
        self.values.value_at(&rel.as_array(), t)
    }

    /// Interpolated kernel value; non-negative inside the kernel.
    pub fn value(&self, x_int: &[f64], x_ext0: &[f64], elapsed: f64) -> Result<f64> {
        self.value_relative(&to_relative(x_int, x_ext0), elapsed)
    }

    /// Central-difference gradient of the interpolated value, one-sided
    /// where the stencil would leave a non-periodic axis.
    pub fn gradient_relative(&self, rel: &RelativeState, elapsed: f64) -> Result<[f64; 3]> {
        let t = self.absolute_time(elapsed)?;
        let spec = self.values.spec();
        let x = rel.as_array();
        self.values.value_at(&x, t)?;
        let mut grad = [0.0; 3];
        for d in 0..3 {
            let h = self.gradient_step as f64 * spec.spacing(d);
            let (mut lo, mut hi) = (x[d] - h, x[d] + h);
            if !spec.periodic()[d] {
                lo = lo.max(spec.mins()[d]);
                hi = hi.min(spec.maxs()[d]);
            }
            let mut a = x;
            let mut b = x;
            a[d] = lo;
            b[d] = hi;
            grad[d] = (self.values.value_at(&b, t)? - self.values.value_at(&a, t)?) / (hi - lo);
        }
        Ok(grad)
    }

    /// Evasion control for the internal system. The inner product
    /// `grad(V) . f` is invariant under the rigid frame change, so the
    /// extremum is taken directly in the anchored frame.
    pub fn optimal_control_relative(&self, rel: &RelativeState, elapsed: f64) -> Result<Vec<f64>> {
        let grad = self.gradient_relative(rel, elapsed)?;
        let sense = match self.convention {
            ControlConvention::Ascent => Extremum::Max,
            ControlConvention::LiteralArgmin => Extremum::Min,
        };
        Ok(extremal_control(
            self.system.as_ref(),
            &rel.as_array(),
            &grad,
            sense,
        ))
    }

    pub fn optimal_control(&self, x_int: &[f64], x_ext0: &[f64], elapsed: f64) -> Result<Vec<f64>> {
        self.optimal_control_relative(&to_relative(x_int, x_ext0), elapsed)
    }

    /// Least-restrictive filter: passes `nominal` through while the value
    /// stays above the switch tolerance, otherwise applies the evasion
    /// control.
    pub fn filter_step(
        &self,
        x_int: &[f64],
        x_ext0: &[f64],
        elapsed: f64,
        nominal: &[f64],
    ) -> Result<FilterOutput> {
        if !self.system.control_box().contains(nominal) {
            return Err(Error::InadmissibleControl {
                control: nominal.to_vec(),
            });
        }
        let rel = to_relative(x_int, x_ext0);
        let value = self.value_relative(&rel, elapsed)?;
        if value > self.switch_tolerance {
            return Ok(FilterOutput {
                control: nominal.to_vec(),
                mode: Mode::Nominal,
                value,
            });
        }
        let control = self.optimal_control_relative(&rel, elapsed)?;
        Ok(FilterOutput {
            control,
            mode: Mode::Safety,
            value,
        })
    }
}

/// Bang-bang extremizer of `p . f(x, u)` returning the control.
fn extremal_control(
    system: &dyn DynamicalSystem,
    x: &[f64],
    p: &[f64],
    sense: Extremum,
) -> Vec<f64> {
    let m = system.control_box().dims();
    let mut coeffs = [0.0; MAX_CONTROLS];
    system.control_coefficients(x, p, &mut coeffs[..m]);
    let bx = system.control_box();
    (0..m)
        .map(|j| {
            let c = coeffs[j];
            match sense {
                Extremum::Max if c > 0.0 => bx.highs()[j],
                Extremum::Min if c < 0.0 => bx.highs()[j],
                _ => bx.lows()[j],
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{costate_dot_flow, hamiltonian_value, DubinsCar};
    use crate::exec::Execution;
    use crate::grid::{GridSpec, ScalarField};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn spec() -> GridSpec {
        GridSpec::new(
            vec![-6.0, -6.0, -PI],
            vec![6.0, 6.0, PI],
            vec![41, 41, 32],
            vec![false, false, true],
        )
        .unwrap()
    }

    fn meta() -> KernelMeta {
        KernelMeta {
            collision_radius: 1.0,
            r0: 0.1,
            external_speed: 3.0,
        }
    }

    fn kernel_from(f: impl Fn(&[f64], f64) -> f64 + Sync) -> SafetyKernel {
        let s = spec();
        let snaps = [0.0, 0.5, 1.0]
            .iter()
            .map(|&t| {
                ScalarField::from_fn(s.clone(), t, Execution::Sequential, |x| f(x, t)).unwrap()
            })
            .collect();
        let car: Arc<dyn DynamicalSystem> = Arc::new(DubinsCar::internal_reference());
        SafetyKernel::new(TimeSampledField::new(snaps).unwrap(), car, meta()).unwrap()
    }

    #[test]
    fn relative_frame_examples() {
        let r = to_relative(&[1.0, 2.0, 0.3], &[1.0, 2.0, 0.3]);
        assert_eq!(r.as_array(), [0.0, 0.0, 0.0]);
        let r = to_relative(&[1.0, -2.0, 4.0], &[0.0, 0.0, 0.0]);
        assert_eq!(r.p_rel, [1.0, -2.0]);
        assert!((r.theta_rel - (4.0 - 2.0 * PI)).abs() < 1e-12);
        let r = to_relative(&[0.0, 1.0, FRAC_PI_2], &[0.0, 0.0, FRAC_PI_2]);
        assert!((r.p_rel[0] - 1.0).abs() < 1e-12 && r.p_rel[1].abs() < 1e-12);
        assert_eq!(r.theta_rel, 0.0);
    }

    #[test]
    fn value_is_frame_invariant() {
        let k = kernel_from(|x, t| x[0].hypot(x[1]) - 1.0 - t + 0.1 * x[2].cos());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = spec().max_spacing();
        for _ in 0..200 {
            let ext = [
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-PI..PI),
            ];
            let int = [
                ext[0] + rng.gen_range(-2.0..2.0),
                ext[1] + rng.gen_range(-2.0..2.0),
                rng.gen_range(-PI..PI),
            ];
            let v = k.value(&int, &ext, 0.3).unwrap();
            let (phi, tx, ty) = (
                rng.gen_range(-PI..PI),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            );
            let (s, c) = phi.sin_cos();
            let mv = |p: [f64; 3]| {
                [
                    c * p[0] - s * p[1] + tx,
                    s * p[0] + c * p[1] + ty,
                    p[2] + phi,
                ]
            };
            let w = k.value(&mv(int), &mv(ext), 0.3).unwrap();
            assert!((v - w).abs() <= 2.0 * h);
        }
    }

    #[test]
    fn value_examples_and_errors() {
        let k = kernel_from(|x, t| x[0].hypot(x[1]) - 1.0 - t);
        assert!(k.value(&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0], 0.0).unwrap() < 0.0);
        assert!(k.value(&[4.0, 0.0, 0.0], &[0.0, 0.0, 0.0], 1.0).unwrap() > 0.0);
        assert!(matches!(
            k.value(&[9.0, 0.0, 0.0], &[0.0, 0.0, 0.0], 0.0),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(k.value(&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0], 1.5).is_err());
        assert!(k.value(&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0], -0.1).is_err());
    }

    #[test]
    fn control_examples() {
        let k = kernel_from(|x, _| x[0] + 0.5 * x[2]);
        let u = k
            .optimal_control(&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0], 0.0)
            .unwrap();
        assert_eq!(u, vec![4.0, 1.0]);
        let k = k.with_convention(ControlConvention::LiteralArgmin);
        let u = k
            .optimal_control(&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0], 0.0)
            .unwrap();
        assert_eq!(u, vec![0.0, -1.0]);
        let flat = kernel_from(|_, _| 2.0);
        let u = flat
            .optimal_control(&[1.0, 1.0, 0.2], &[0.0, 0.0, 0.0], 0.5)
            .unwrap();
        assert_eq!(u, vec![0.0, -1.0]);
    }

    #[test]
    fn control_is_admissible_and_ascends() {
        let k = kernel_from(|x, t| {
            (x[0] - 0.5).hypot(x[1] + 0.3) - 1.0 - 0.5 * t + 0.2 * (x[2] - 0.4).sin()
        });
        let car = DubinsCar::internal_reference();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x = [
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-PI..PI),
            ];
            let t = rng.gen_range(0.0..1.0);
            let u = k.optimal_control(&x, &[0.0, 0.0, 0.0], t).unwrap();
            assert!(car.control_box().contains(&u));
            let rel = to_relative(&x, &[0.0; 3]);
            let g = k.gradient_relative(&rel, t).unwrap();
            let best = hamiltonian_value(&car, &x, &g, false, Extremum::Max);
            assert!((costate_dot_flow(&car, &x, &g, &u) - best).abs() < 1e-12);
            // One small Euler step does not lose value beyond interpolation error.
            let dt = 1e-3;
            let mut f = [0.0; 3];
            car.flow(&x, &u, &mut f);
            let y = [x[0] + dt * f[0], x[1] + dt * f[1], x[2] + dt * f[2]];
            let before = k.value(&x, &[0.0; 3], t).unwrap();
            let after = k.value(&y, &[0.0; 3], t).unwrap();
            assert!(after >= before - 4.0 * dt - 1e-3, "{before} -> {after}");
        }
    }

    #[test]
    fn filter_switches_at_tolerance() {
        let k = kernel_from(|x, _| x[0]);
        let tol = k.switch_tolerance();
        let nominal = [2.0, 0.0];
        let out = k
            .filter_step(&[10.0 * tol, 0.0, 0.0], &[0.0; 3], 0.0, &nominal)
            .unwrap();
        assert_eq!(out.mode, Mode::Nominal);
        assert_eq!(out.control, nominal.to_vec());
        let out = k
            .filter_step(&[0.5 * tol, 0.0, 0.0], &[0.0; 3], 0.0, &nominal)
            .unwrap();
        assert_eq!(out.mode, Mode::Safety);
        assert_eq!(out.control, vec![4.0, -1.0]);
        let again = k
            .filter_step(&[0.5 * tol, 0.0, 0.0], &[0.0; 3], 0.0, &nominal)
            .unwrap();
        assert_eq!(out, again);
        assert!(k
            .filter_step(&[1.0, 0.0, 0.0], &[0.0; 3], 0.0, &[5.0, 0.0])
            .is_err());
    }

    #[test]
    fn settings_are_validated() {
        let k = kernel_from(|x, _| x[0]);
        assert!((k.switch_tolerance() - 2.0 * spec().max_spacing()).abs() < 1e-15);
        assert!(k.clone().with_switch_tolerance(0.0).is_err());
        assert!(k.clone().with_gradient_step(0).is_err());
        assert_eq!(k.with_gradient_step(2).unwrap().gradient_step(), 2);
    }
}
