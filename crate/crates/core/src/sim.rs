//! Closed-loop simulation of the internal system under a safety filter
//! against an external system it may stop observing.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{rk4_step, DynamicalSystem};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::wrap_angle;
use crate::kernel_runtime::{to_relative, Mode, SafetyKernel};

/// Periods without observation of the external system, as half-open
/// intervals `(a, b]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationSchedule {
    lost: Vec<(f64, f64)>,
}

impl ObservationSchedule {
    pub fn new(lost: Vec<(f64, f64)>) -> Result<Self> {
        for (i, &(a, b)) in lost.iter().enumerate() {
            if !(a < b) || !a.is_finite() || b.is_nan() {
                return Err(Error::InvalidArgument(format!("bad interval ({a}, {b}]")));
            }
            if i > 0 && a < lost[i - 1].1 {
                return Err(Error::InvalidArgument(
                    "intervals must be sorted and disjoint".into(),
                ));
            }
        }
        Ok(Self { lost })
    }

    /// Observations are never lost.
    pub fn always_observed() -> Self {
        Self::default()
    }

    /// Lost on `(t0, tf]`.
    pub fn full_loss(t0: f64, tf: f64) -> Result<Self> {
        Self::new(vec![(t0, tf)])
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.lost
    }

    pub fn is_lost(&self, t: f64) -> bool {
        self.lost.iter().any(|&(a, b)| a < t && t <= b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExternalPolicy {
    Stationary,
    /// A fresh uniformly drawn admissible control every step.
    Random,
    /// Greedy pursuit: draws `samples` admissible controls per step and
    /// takes the one whose one-step successor is closest to the internal
    /// system's current position.
    Adversarial {
        samples: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NominalPolicy {
    /// Zero control; for a unicycle with zero minimum speed this parks.
    Hold,
    /// Steer toward a fixed world position.
    Waypoint { target: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub horizon: f64,
    pub dt: f64,
    pub schedule: ObservationSchedule,
    pub external_policy: ExternalPolicy,
    pub nominal_policy: NominalPolicy,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub times: Vec<f64>,
    pub x_int: Vec<Vec<f64>>,
    pub x_ext: Vec<Vec<f64>>,
    pub controls_int: Vec<Vec<f64>>,
    pub controls_ext: Vec<Vec<f64>>,
    pub mode: Vec<Mode>,
    pub observed: Vec<bool>,
    /// Last observed external state used by the filter at each step.
    pub anchors: Vec<Vec<f64>>,
    /// Time since that observation.
    pub elapsed: Vec<f64>,
    /// Minimum of the collision margin over the recorded states.
    pub min_d: f64,
    pub collision_radius: f64,
    /// Reason the episode stopped early, if it did.
    pub aborted: Option<String>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn collided(&self) -> bool {
        self.min_d < 0.0
    }

    /// `|p_int - p_ext|^2 - R^2` at step `k`.
    pub fn margin(&self, k: usize) -> f64 {
        collision_margin(&self.x_int[k], &self.x_ext[k], self.collision_radius)
    }

    /// Writes one row per step:
    /// `t,x1,x2,x3,x4,x5,x6,u1,u2,u3,u4,mode,observed,d`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x1,x2,x3,x4,x5,x6,u1,u2,u3,u4,mode,observed,d")?;
        for k in 0..self.len() {
            write!(w, "{}", self.times[k])?;
            for v in self.x_int[k].iter().chain(&self.x_ext[k]) {
                write!(w, ",{v}")?;
            }
            for v in self.controls_int[k].iter().chain(&self.controls_ext[k]) {
                write!(w, ",{v}")?;
            }
            writeln!(
                w,
                ",{},{},{}",
                self.mode[k].as_str(),
                u8::from(self.observed[k]),
                self.margin(k)
            )?;
        }
        Ok(())
    }
}

/// Squared center distance minus the squared collision radius.
pub fn collision_margin(x_int: &[f64], x_ext: &[f64], collision_radius: f64) -> f64 {
    (x_int[0] - x_ext[0]).powi(2) + (x_int[1] - x_ext[1]).powi(2)
        - collision_radius * collision_radius
}

fn uniform_control(system: &dyn DynamicalSystem, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let bx = system.control_box();
    bx.lows()
        .iter()
        .zip(bx.highs())
        .map(|(&lo, &hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
        .collect()
}

fn external_control(
    policy: ExternalPolicy,
    system: &dyn DynamicalSystem,
    x_ext: &[f64],
    x_int: &[f64],
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    match policy {
        ExternalPolicy::Stationary => {
            let bx = system.control_box();
            (0..bx.dims())
                .map(|j| 0.0f64.clamp(bx.lows()[j], bx.highs()[j]))
                .collect()
        }
        ExternalPolicy::Random => uniform_control(system, rng),
        ExternalPolicy::Adversarial { samples } => {
            let mut best = uniform_control(system, rng);
            let mut best_d = planar_gap(&rk4_step(system, x_ext, &best, dt), x_int);
            for _ in 1..samples {
                let u = uniform_control(system, rng);
                let d = planar_gap(&rk4_step(system, x_ext, &u, dt), x_int);
                if d < best_d {
                    best_d = d;
                    best = u;
                }
            }
            best
        }
    }
}

fn planar_gap(a: &[f64], b: &[f64]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn nominal_control(policy: NominalPolicy, system: &dyn DynamicalSystem, x: &[f64]) -> Vec<f64> {
    let bx = system.control_box();
    match policy {
        NominalPolicy::Hold => (0..bx.dims())
            .map(|j| 0.0f64.clamp(bx.lows()[j], bx.highs()[j]))
            .collect(),
        NominalPolicy::Waypoint { target } => {
            let (dx, dy) = (target[0] - x[0], target[1] - x[1]);
            let err = wrap_angle(dy.atan2(dx) - x[2]);
            let dist = dx.hypot(dy);
            let v = (dist * err.cos().max(0.0)).clamp(bx.lows()[0], bx.highs()[0]);
            let w = (2.0 * err).clamp(bx.lows()[1], bx.highs()[1]);
            vec![v, w]
        }
    }
}

/// Simulates one episode from world states `x_int0` and `x_ext0`.
///
/// Each step the internal system re-anchors on the true external state if
/// the current time is observed, otherwise it keeps its last anchor and
/// the elapsed time grows. The filter sees only the anchor, the elapsed
/// time and its own state. When the relative state leaves the kernel grid
/// the internal system keeps its nominal control if it is provably beyond
/// the obstacle's reach envelope; otherwise the episode is aborted.
pub fn run_episode(
    kernel: &SafetyKernel,
    external: &dyn DynamicalSystem,
    x_int0: &[f64],
    x_ext0: &[f64],
    cfg: &EpisodeConfig,
) -> Result<SimTrace> {
    if !(cfg.dt > 0.0 && cfg.dt <= 0.05) {
        return Err(Error::InvalidArgument(format!(
            "dt must lie in (0, 0.05], got {}",
            cfg.dt
        )));
    }
    if !(cfg.horizon >= 0.0) || cfg.horizon > kernel.horizon() * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "episode horizon {} exceeds the kernel horizon {}",
            cfg.horizon,
            kernel.horizon()
        )));
    }
    if let ExternalPolicy::Adversarial { samples: 0 } = cfg.external_policy {
        return Err(Error::InvalidArgument(
            "adversary needs at least one sample".into(),
        ));
    }
    if x_int0.iter().chain(x_ext0).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("start states must be finite".into()));
    }
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    if (steps as f64 * cfg.dt - cfg.horizon).abs() > 1e-9 * cfg.horizon.max(1.0) {
        return Err(Error::InvalidArgument(
            "horizon must be a whole number of steps".into(),
        ));
    }
    let internal = kernel.system();
    let meta = *kernel.meta();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut x_int = x_int0.to_vec();
    let mut x_ext = x_ext0.to_vec();
    internal.wrap_state(&mut x_int);
    external.wrap_state(&mut x_ext);
    let mut anchor = x_ext.clone();
    let mut anchor_step = 0usize;
    let mut trace = SimTrace {
        times: Vec::with_capacity(steps + 1),
        x_int: Vec::with_capacity(steps + 1),
        x_ext: Vec::with_capacity(steps + 1),
        controls_int: Vec::with_capacity(steps + 1),
        controls_ext: Vec::with_capacity(steps + 1),
        mode: Vec::with_capacity(steps + 1),
        observed: Vec::with_capacity(steps + 1),
        anchors: Vec::with_capacity(steps + 1),
        elapsed: Vec::with_capacity(steps + 1),
        min_d: f64::INFINITY,
        collision_radius: meta.collision_radius,
        aborted: None,
    };

    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        let observed = !cfg.schedule.is_lost(t);
        if observed {
            anchor.clone_from(&x_ext);
            anchor_step = k;
        }
        let elapsed = (k - anchor_step) as f64 * cfg.dt;
        let nominal = nominal_control(cfg.nominal_policy, internal, &x_int);
        let (u_int, mode) = match kernel.filter_step(&x_int, &anchor, elapsed, &nominal) {
            Ok(out) => (out.control, out.mode),
            Err(Error::OutOfDomain { .. }) => {
                let rel = to_relative(&x_int, &anchor);
                let reach = meta.external_speed * elapsed + meta.r0 + meta.collision_radius;
                if rel.p_rel[0].hypot(rel.p_rel[1]) > reach + kernel.switch_tolerance() {
                    (nominal, Mode::Nominal)
                } else {
                    trace.aborted = Some(format!("relative state left the kernel grid at t = {t}"));
                    break;
                }
            }
            Err(e) => return Err(e),
        };
        let u_ext = external_control(
            cfg.external_policy,
            external,
            &x_ext,
            &x_int,
            cfg.dt,
            &mut rng,
        );

        trace.min_d = trace
            .min_d
            .min(collision_margin(&x_int, &x_ext, meta.collision_radius));
        trace.times.push(t);
        trace.x_int.push(x_int.clone());
        trace.x_ext.push(x_ext.clone());
        trace.controls_int.push(u_int.clone());
        trace.controls_ext.push(u_ext.clone());
        trace.mode.push(mode);
        trace.observed.push(observed);
        trace.anchors.push(anchor.clone());
        trace.elapsed.push(elapsed);

        if k < steps {
            x_int = rk4_step(internal, &x_int, &u_int, cfg.dt);
            x_ext = rk4_step(external, &x_ext, &u_ext, cfg.dt);
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub horizon: f64,
    pub dt: f64,
    pub adversary_samples: usize,
    /// Half-width of the box the world anchor pose is drawn from.
    pub world_extent: f64,
    pub execution: Execution,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            horizon: 5.0,
            dt: 0.02,
            adversary_samples: 50,
            world_extent: 10.0,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub seed_stream: u64,
    pub x_int0: Vec<f64>,
    pub x_ext0: Vec<f64>,
    pub start_value: f64,
    pub min_d: f64,
    pub safety_steps: usize,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub trials: usize,
    pub collisions: usize,
    pub aborted: usize,
    /// Minimum of `min_d` over trials; infinite when there are none.
    pub worst_min_d: f64,
    pub outcomes: Vec<TrialOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.collisions == 0 && self.aborted == 0
    }
}

const MAX_DRAWS: usize = 1_000_000;

/// Draws a start state with kernel value at least `margin` at zero elapsed
/// time: relative pose uniform over the kernel grid, world anchor uniform
/// in `[-world_extent, world_extent]^2` with any heading.
fn sample_start(
    kernel: &SafetyKernel,
    margin: f64,
    world_extent: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let spec = kernel.values().spec();
    let (mins, maxs) = (spec.mins(), spec.maxs());
    let first = kernel.values().first();
    for _ in 0..MAX_DRAWS {
        let rel = [
            rng.gen_range(mins[0]..=maxs[0]),
            rng.gen_range(mins[1]..=maxs[1]),
            rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
        ];
        let v = first.interpolate(&rel)?;
        if v < margin {
            continue;
        }
        let anchor = if world_extent > 0.0 {
            vec![
                rng.gen_range(-world_extent..=world_extent),
                rng.gen_range(-world_extent..=world_extent),
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            ]
        } else {
            vec![0.0; 3]
        };
        let (s, c) = anchor[2].sin_cos();
        let x_int = vec![
            anchor[0] + c * rel[0] - s * rel[1],
            anchor[1] + s * rel[0] + c * rel[1],
            wrap_angle(anchor[2] + rel[2]),
        ];
        return Ok((x_int, anchor, v));
    }
    Err(Error::SamplingExhausted { draws: MAX_DRAWS })
}

/// Runs `trials` full-loss episodes against a greedy adversary from start
/// states with kernel value at least `margin`. The internal nominal
/// controller steers at the external system's initial position, so the
/// filter has to intervene.
pub fn batch_verify(
    kernel: &SafetyKernel,
    external: Arc<dyn DynamicalSystem>,
    trials: usize,
    margin: f64,
    seed: u64,
    opts: &VerifyOptions,
) -> Result<VerifyReport> {
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "margin must be > 0, got {margin}"
        )));
    }
    let schedule = ObservationSchedule::full_loss(0.0, opts.horizon)?;
    let results = opts
        .execution
        .map_range(trials, |i| -> Result<TrialOutcome> {
            let stream = i as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            let (x_int0, x_ext0, start_value) =
                sample_start(kernel, margin, opts.world_extent, &mut rng)?;
            let cfg = EpisodeConfig {
                horizon: opts.horizon,
                dt: opts.dt,
                schedule: schedule.clone(),
                external_policy: ExternalPolicy::Adversarial {
                    samples: opts.adversary_samples,
                },
                nominal_policy: NominalPolicy::Waypoint {
                    target: [x_ext0[0], x_ext0[1]],
                },
                seed: rng.gen(),
            };
            let trace = run_episode(kernel, external.as_ref(), &x_int0, &x_ext0, &cfg)?;
            Ok(TrialOutcome {
                seed_stream: stream,
                x_int0,
                x_ext0,
                start_value,
                min_d: trace.min_d,
                safety_steps: trace.mode.iter().filter(|&&m| m == Mode::Safety).count(),
                aborted: trace.aborted,
            })
        });
    let outcomes = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(VerifyReport {
        trials,
        collisions: outcomes.iter().filter(|o| o.min_d < 0.0).count(),
        aborted: outcomes.iter().filter(|o| o.aborted.is_some()).count(),
        worst_min_d: outcomes
            .iter()
            .map(|o| o.min_d)
            .fold(f64::INFINITY, f64::min),
        outcomes,
    })
}
