//! Control-affine dynamics with box-bounded controls.
//!
//! Every system here has the form `f(x, u) = f0(x) + sum_j g_j(x) u_j`, so
//! extremizing `p . f(x, u)` over a box separates per control channel and
//! is solved by a sign test on `p . g_j(x)`.

use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::grid::{wrap_angle, GridSpec};

/// Upper limit on control channels; sized for stack buffers in hot loops.
pub const MAX_CONTROLS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ControlBox {
    lows: Vec<f64>,
    highs: Vec<f64>,
}

impl ControlBox {
    pub fn new(lows: Vec<f64>, highs: Vec<f64>) -> Result<Self> {
        if lows.len() != highs.len() || lows.is_empty() || lows.len() > MAX_CONTROLS {
            return Err(Error::InvalidArgument(format!(
                "control box needs 1..={MAX_CONTROLS} matching bounds, got {} lows and {} highs",
                lows.len(),
                highs.len()
            )));
        }
        for (j, (lo, hi)) in lows.iter().zip(&highs).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::InvalidArgument(format!(
                    "control channel {j}: need finite low <= high, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lows, highs })
    }

    pub fn dims(&self) -> usize {
        self.lows.len()
    }
    pub fn lows(&self) -> &[f64] {
        &self.lows
    }
    pub fn highs(&self) -> &[f64] {
        &self.highs
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dims()
            && u.iter()
                .zip(self.lows.iter().zip(&self.highs))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Largest magnitude any admissible value of channel `j` can take.
    pub fn max_abs(&self, j: usize) -> f64 {
        self.lows[j].abs().max(self.highs[j].abs())
    }
}

/// Which extremum of `p . f` to take over the control box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Min,
    Max,
}

/// Result of extremizing `p . (+-f(x, u))` over the control box.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianValue {
    pub value: f64,
    pub control: Vec<f64>,
}

pub trait DynamicalSystem: Debug + Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn control_box(&self) -> &ControlBox;

    /// State dimensions that carry position; used by set operations and
    /// the collision model.
    fn position_dims(&self) -> Vec<usize>;

    /// Angular dimensions, wrapped into `[-pi, pi)` after integration.
    fn angle_dims(&self) -> Vec<usize> {
        Vec::new()
    }

    /// `p . f0(x)`.
    fn drift_dot(&self, x: &[f64], p: &[f64]) -> f64;

    /// Writes `p . g_j(x)` for every control channel `j`.
    fn control_coefficients(&self, x: &[f64], p: &[f64], out: &mut [f64]);

    fn flow(&self, x: &[f64], u: &[f64], out: &mut [f64]);

    /// Per-dimension bounds on `|f_d(x, u)|` over the grid and control box.
    fn dissipation_bounds(&self, spec: &GridSpec) -> Vec<f64>;

    /// `max_u sum_d f_d(x, u)^+ a_d + f_d(x, u)^- b_d`.
    ///
    /// The one-sided derivative in `a` is taken where the flow is positive
    /// and the one in `b` where it is negative. The default enumerates the
    /// box corners and zero per channel, which is exact when every state
    /// derivative is proportional to a single control channel.
    fn upwind_hamiltonian(&self, x: &[f64], a: &[f64], b: &[f64]) -> f64 {
        let bx = self.control_box();
        let m = bx.dims();
        let n = self.state_dim();
        let mut cands = [[0.0f64; 3]; MAX_CONTROLS];
        let mut sizes = [0usize; MAX_CONTROLS];
        for j in 0..m {
            let (lo, hi) = (bx.lows[j], bx.highs[j]);
            cands[j][0] = lo;
            cands[j][1] = hi;
            sizes[j] = 2;
            if lo < 0.0 && hi > 0.0 {
                cands[j][2] = 0.0;
                sizes[j] = 3;
            }
        }
        let mut pick = [0usize; MAX_CONTROLS];
        let mut u = [0.0; MAX_CONTROLS];
        let mut f = vec![0.0; n];
        let mut best = f64::NEG_INFINITY;
        loop {
            for j in 0..m {
                u[j] = cands[j][pick[j]];
            }
            self.flow(x, &u[..m], &mut f);
            let val: f64 = (0..n).map(|d| upwind_term(f[d], a[d], b[d])).sum();
            best = best.max(val);
            let mut j = 0;
            while j < m {
                pick[j] += 1;
                if pick[j] < sizes[j] {
                    break;
                }
                pick[j] = 0;
                j += 1;
            }
            if j == m {
                return best;
            }
        }
    }

    fn wrap_state(&self, x: &mut [f64]) {
        for d in self.angle_dims() {
            x[d] = wrap_angle(x[d]);
        }
    }
}

#[inline]
fn upwind_term(f: f64, a: f64, b: f64) -> f64 {
    if f > 0.0 {
        f * a
    } else {
        f * b
    }
}

/// Max over `[lo, hi]` of `g(u) = u * kp` for `u >= 0`, `u * kn` below.
#[inline]
fn max_kinked(lo: f64, hi: f64, kp: f64, kn: f64) -> f64 {
    let g = |u: f64| if u >= 0.0 { u * kp } else { u * kn };
    let mut best = g(lo).max(g(hi));
    if lo < 0.0 && hi > 0.0 {
        best = best.max(0.0);
    }
    best
}

/// Sign-test extremum of `sum_j c_j u_j` over the box; returns the value.
/// Zero coefficients pick the channel's lower bound.
#[inline]
fn extremize(bx: &ControlBox, coeffs: &[f64], sense: Extremum, control: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for j in 0..coeffs.len() {
        let c = coeffs[j];
        let (lo, hi) = (bx.lows[j], bx.highs[j]);
        let u = match sense {
            Extremum::Min if c < 0.0 => hi,
            Extremum::Max if c > 0.0 => hi,
            _ => lo,
        };
        control[j] = u;
        total += c * u;
    }
    total
}

/// `ext_u p . (+-f(x, u))` without allocating; `reverse` selects `-f`.
#[inline]
pub fn hamiltonian_value(
    system: &dyn DynamicalSystem,
    x: &[f64],
    p: &[f64],
    reverse: bool,
    sense: Extremum,
) -> f64 {
    let m = system.control_box().dims();
    let mut coeffs = [0.0; MAX_CONTROLS];
    let mut control = [0.0; MAX_CONTROLS];
    system.control_coefficients(x, p, &mut coeffs[..m]);
    let mut drift = system.drift_dot(x, p);
    if reverse {
        drift = -drift;
        for c in &mut coeffs[..m] {
            *c = -*c;
        }
    }
    drift + extremize(system.control_box(), &coeffs[..m], sense, &mut control[..m])
}

fn hamiltonian(
    system: &dyn DynamicalSystem,
    x: &[f64],
    p: &[f64],
    reverse: bool,
    sense: Extremum,
) -> HamiltonianValue {
    let m = system.control_box().dims();
    let mut coeffs = vec![0.0; m];
    system.control_coefficients(x, p, &mut coeffs);
    let sign = if reverse { -1.0 } else { 1.0 };
    for c in &mut coeffs {
        *c *= sign;
    }
    let mut control = vec![0.0; m];
    let value = sign * system.drift_dot(x, p)
        + extremize(system.control_box(), &coeffs, sense, &mut control);
    HamiltonianValue { value, control }
}

/// `min_u p . f(x, u)`, or `min_u p . (-f(x, u))` when `reverse`.
pub fn hamiltonian_min(
    system: &dyn DynamicalSystem,
    x: &[f64],
    p: &[f64],
    reverse: bool,
) -> HamiltonianValue {
    hamiltonian(system, x, p, reverse, Extremum::Min)
}

/// `max_u p . f(x, u)`, or `max_u p . (-f(x, u))` when `reverse`.
pub fn hamiltonian_max(
    system: &dyn DynamicalSystem,
    x: &[f64],
    p: &[f64],
    reverse: bool,
) -> HamiltonianValue {
    hamiltonian(system, x, p, reverse, Extremum::Max)
}

/// `p . f(x, u)`.
pub fn costate_dot_flow(system: &dyn DynamicalSystem, x: &[f64], p: &[f64], u: &[f64]) -> f64 {
    let mut f = vec![0.0; system.state_dim()];
    system.flow(x, u, &mut f);
    f.iter().zip(p).map(|(a, b)| a * b).sum()
}

/// Planar unicycle: `(v cos th, v sin th, w)` with speed `v` and turn rate `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct DubinsCar {
    name: String,
    controls: ControlBox,
}

impl DubinsCar {
    pub fn new(speed: (f64, f64), turn_rate: (f64, f64)) -> Result<Self> {
        Ok(Self {
            name: "dubins".into(),
            controls: ControlBox::new(vec![speed.0, turn_rate.0], vec![speed.1, turn_rate.1])?,
        })
    }

    /// Ego vehicle bounds: `v in [0, 4]`, `w in [-1, 1]`.
    pub fn internal_reference() -> Self {
        Self::new((0.0, 4.0), (-1.0, 1.0)).expect("valid bounds")
    }

    /// Obstacle bounds: `v in [0, 3]`, `w in [-0.75, 0.75]`.
    pub fn external_reference() -> Self {
        Self::new((0.0, 3.0), (-0.75, 0.75)).expect("valid bounds")
    }

    pub fn speed_bounds(&self) -> (f64, f64) {
        (self.controls.lows[0], self.controls.highs[0])
    }

    pub fn turn_bounds(&self) -> (f64, f64) {
        (self.controls.lows[1], self.controls.highs[1])
    }

    pub fn max_speed(&self) -> f64 {
        self.controls.max_abs(0)
    }
}

impl DynamicalSystem for DubinsCar {
    fn name(&self) -> &str {
        &self.name
    }
    fn state_dim(&self) -> usize {
        3
    }
    fn control_box(&self) -> &ControlBox {
        &self.controls
    }
    fn position_dims(&self) -> Vec<usize> {
        vec![0, 1]
    }
    fn angle_dims(&self) -> Vec<usize> {
        vec![2]
    }
    fn drift_dot(&self, _x: &[f64], _p: &[f64]) -> f64 {
        0.0
    }
    fn control_coefficients(&self, x: &[f64], p: &[f64], out: &mut [f64]) {
        let (s, c) = x[2].sin_cos();
        out[0] = p[0] * c + p[1] * s;
        out[1] = p[2];
    }
    fn flow(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let (s, c) = x[2].sin_cos();
        out[0] = u[0] * c;
        out[1] = u[0] * s;
        out[2] = u[1];
    }
    fn dissipation_bounds(&self, _spec: &GridSpec) -> Vec<f64> {
        let v = self.controls.max_abs(0);
        vec![v, v, self.controls.max_abs(1)]
    }
    fn upwind_hamiltonian(&self, x: &[f64], a: &[f64], b: &[f64]) -> f64 {
        let (s, c) = x[2].sin_cos();
        let kp = upwind_term(c, a[0], b[0]) + upwind_term(s, a[1], b[1]);
        let kn = upwind_term(c, b[0], a[0]) + upwind_term(s, b[1], a[1]);
        let bx = &self.controls;
        max_kinked(bx.lows[0], bx.highs[0], kp, kn)
            + max_kinked(bx.lows[1], bx.highs[1], a[2], b[2])
    }
}

/// Single integrator `x' = u` in any dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Integrator {
    name: String,
    controls: ControlBox,
}

impl Integrator {
    pub fn new(bounds: &[(f64, f64)]) -> Result<Self> {
        let name = format!("integrator{}d", bounds.len());
        Ok(Self {
            name,
            controls: ControlBox::new(
                bounds.iter().map(|b| b.0).collect(),
                bounds.iter().map(|b| b.1).collect(),
            )?,
        })
    }
}

impl DynamicalSystem for Integrator {
    fn name(&self) -> &str {
        &self.name
    }
    fn state_dim(&self) -> usize {
        self.controls.dims()
    }
    fn control_box(&self) -> &ControlBox {
        &self.controls
    }
    fn position_dims(&self) -> Vec<usize> {
        (0..self.state_dim()).collect()
    }
    fn drift_dot(&self, _x: &[f64], _p: &[f64]) -> f64 {
        0.0
    }
    fn control_coefficients(&self, _x: &[f64], p: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&p[..out.len()]);
    }
    fn flow(&self, _x: &[f64], u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&u[..out.len()]);
    }
    fn dissipation_bounds(&self, _spec: &GridSpec) -> Vec<f64> {
        (0..self.state_dim())
            .map(|j| self.controls.max_abs(j))
            .collect()
    }
    fn upwind_hamiltonian(&self, _x: &[f64], a: &[f64], b: &[f64]) -> f64 {
        (0..self.state_dim())
            .map(|d| max_kinked(self.controls.lows[d], self.controls.highs[d], a[d], b[d]))
            .sum()
    }
}

/// Piecewise-constant control signal: `controls[i]` holds on
/// `[starts[i], starts[i + 1])`, and the last one holds thereafter.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    starts: Vec<f64>,
    controls: Vec<Vec<f64>>,
}

impl ControlSignal {
    pub fn new(starts: Vec<f64>, controls: Vec<Vec<f64>>) -> Result<Self> {
        if starts.is_empty() || starts.len() != controls.len() {
            return Err(Error::InvalidArgument(
                "control signal needs one start time per segment".into(),
            ));
        }
        if starts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "segment starts must increase".into(),
            ));
        }
        Ok(Self { starts, controls })
    }

    pub fn constant(u: Vec<f64>) -> Self {
        Self {
            starts: vec![f64::NEG_INFINITY],
            controls: vec![u],
        }
    }

    /// Segments of equal length starting at `t0`.
    pub fn uniform(t0: f64, segment: f64, controls: Vec<Vec<f64>>) -> Result<Self> {
        let starts = (0..controls.len())
            .map(|i| t0 + i as f64 * segment)
            .collect();
        Self::new(starts, controls)
    }

    pub fn at(&self, t: f64) -> &[f64] {
        let i = self.starts.partition_point(|&s| s <= t).saturating_sub(1);
        &self.controls[i]
    }

    pub fn segments(&self) -> impl Iterator<Item = &[f64]> {
        self.controls.iter().map(|c| c.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// One classical Runge-Kutta step under a held control, with angle wrap.
pub fn rk4_step(system: &dyn DynamicalSystem, x: &[f64], u: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    system.flow(x, u, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    system.flow(&tmp, u, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    system.flow(&tmp, u, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    system.flow(&tmp, u, &mut k4);
    let mut out: Vec<f64> = (0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    system.wrap_state(&mut out);
    out
}

/// Fixed-step RK4 integration over `t_span`, sampling every `dt` and at the
/// end time. The control is read at the start of each step.
pub fn simulate(
    system: &dyn DynamicalSystem,
    x0: &[f64],
    controls: &ControlSignal,
    t_span: (f64, f64),
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_span.1 >= t_span.0) {
        return Err(Error::InvalidArgument(format!(
            "need dt > 0 and t1 >= t0, got dt = {dt}, span = {t_span:?}"
        )));
    }
    if x0.len() != system.state_dim() {
        return Err(Error::InvalidArgument(format!(
            "state of length {} for a {}-dimensional system",
            x0.len(),
            system.state_dim()
        )));
    }
    if let Some(bad) = controls
        .segments()
        .find(|u| !system.control_box().contains(u))
    {
        return Err(Error::InadmissibleControl {
            control: bad.to_vec(),
        });
    }
    let (t0, t1) = t_span;
    let mut x = x0.to_vec();
    system.wrap_state(&mut x);
    let mut times = vec![t0];
    let mut states = vec![x.clone()];
    let full_steps = ((t1 - t0) / dt * (1.0 + 1e-12)).floor() as usize;
    let mut t = t0;
    for k in 0..full_steps {
        x = rk4_step(system, &x, controls.at(t), dt);
        t = t0 + (k + 1) as f64 * dt;
        times.push(t);
        states.push(x.clone());
    }
    let rest = t1 - t;
    if rest > 1e-12 * dt.max(1.0) {
        x = rk4_step(system, &x, controls.at(t), rest);
        times.push(t1);
        states.push(x);
    }
    Ok(Trajectory { times, states })
}
