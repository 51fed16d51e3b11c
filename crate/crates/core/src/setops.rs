//! Geometric pipeline from the external reachable set to the internal
//! system's unsafe set: projection onto position, Minkowski inflation by the
//! collision radius, extrusion over the remaining internal dimensions, and a
//! fresh signed distance to the result.

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::{signed_distance, GridSpec, ScalarField, TimeSampledField};
use crate::reach::{ReachOrigin, ReachSolution};

/// Time-varying unsafe set of the internal system in the relative frame,
/// stored as the signed distance to it (negative inside).
#[derive(Debug, Clone, PartialEq)]
pub struct UnsafeTube {
    pub d_tilde: TimeSampledField,
    /// Center-to-center distance below which the two systems collide.
    pub collision_radius: f64,
    /// Uncertainty radius of the reachable set this was built from.
    pub r0: f64,
    pub source: ReachOrigin,
}

/// Min-projection of every snapshot onto `keep_dims`: the sub-zero set of
/// the result is the projection of the sub-zero set of the input.
pub fn project_min(
    tube: &TimeSampledField,
    keep_dims: &[usize],
    exec: Execution,
) -> Result<TimeSampledField> {
    if keep_dims.is_empty() {
        return Err(Error::InvalidArgument(
            "projection needs at least one kept dimension".into(),
        ));
    }
    let spec = tube.spec();
    let out_spec = spec.sub_spec(keep_dims)?;
    let out_strides = out_spec.strides();
    let in_counts = spec.counts().to_vec();
    let snaps = exec.map_range(tube.len(), |s| {
        let field = &tube.snapshots()[s];
        let mut out = vec![f64::INFINITY; out_spec.len()];
        let mut idx = vec![0usize; spec.dims()];
        for &v in field.values() {
            let target: usize = keep_dims
                .iter()
                .zip(&out_strides)
                .map(|(&d, st)| idx[d] * st)
                .sum();
            if v < out[target] {
                out[target] = v;
            }
            // Advance the row-major multi-index.
            for d in (0..idx.len()).rev() {
                idx[d] += 1;
                if idx[d] < in_counts[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        ScalarField::new(out_spec.clone(), out, field.time())
    });
    TimeSampledField::new(snaps.into_iter().collect::<Result<Vec<_>>>()?)
}

/// Dilates the sub-zero set of `field` by a closed ball of `radius`.
///
/// Returns `signed_distance(mask) - radius`, whose sub-zero nodes are those
/// within `radius` of a masked node. An empty mask returns the clear
/// sentinel field unchanged.
pub fn inflate(field: &ScalarField, radius: f64, exec: Execution) -> Result<ScalarField> {
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "radius must be >= 0, got {radius}"
        )));
    }
    let mask: Vec<bool> = field.values().iter().map(|&v| v <= 0.0).collect();
    let sd = signed_distance(field.spec(), &mask, exec)?.with_time(field.time());
    if !mask.iter().any(|&m| m) {
        return Ok(sd);
    }
    let values = sd.values().iter().map(|v| v - radius).collect();
    ScalarField::new(field.spec().clone(), values, field.time())
}

/// Copies `field` unchanged across every node of `extra`, which is
/// appended as trailing dimensions.
pub fn extrude(field: &ScalarField, extra: &GridSpec) -> ScalarField {
    let spec = field.spec().product(extra);
    let m = extra.len();
    let mut values = Vec::with_capacity(field.values().len() * m);
    for &v in field.values() {
        values.extend(std::iter::repeat(v).take(m));
    }
    ScalarField::from_parts_unchecked(spec, values, field.time())
}

/// Builds the unsafe tube for a center-distance collision model.
///
/// Each reachable-set snapshot is min-projected onto its positional
/// dimensions, read as relative position of the internal system, inflated
/// by `collision_radius`, re-distanced and extruded over the internal grid's
/// trailing dimensions (relative heading for planar vehicles). The reachable
/// set must be expressed in the relative frame: external start at the
/// origin with zero heading.
pub fn build_unsafe_tube(
    reach: &ReachSolution,
    collision_radius: f64,
    internal_spec: &GridSpec,
    exec: Execution,
) -> Result<UnsafeTube> {
    if !(collision_radius >= 0.0 && collision_radius.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "collision radius must be >= 0, got {collision_radius}"
        )));
    }
    if let ReachOrigin::Point(x0) = &reach.origin {
        if x0.iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidArgument(
                "reachable set must start at the origin of the relative frame".into(),
            ));
        }
    }
    let pos = &reach.position_dims;
    let planar = reach.tube.spec().sub_spec(pos)?;
    let k = pos.len();
    if internal_spec.dims() < k {
        return Err(Error::GridMismatch(format!(
            "internal grid has {} dims, reachable set has {k} positional dims",
            internal_spec.dims()
        )));
    }
    let leading: Vec<usize> = (0..k).collect();
    if internal_spec.sub_spec(&leading)? != planar {
        return Err(Error::GridMismatch(
            "internal grid's positional dims must match the reachable set's".into(),
        ));
    }
    let extra = if internal_spec.dims() > k {
        let rest: Vec<usize> = (k..internal_spec.dims()).collect();
        Some(internal_spec.sub_spec(&rest)?)
    } else {
        None
    };

    let projected = project_min(&reach.tube, pos, exec)?;
    let mut snapshots = Vec::with_capacity(projected.len());
    for slice in projected.snapshots() {
        let grown = inflate(slice, collision_radius, exec)?;
        let mask: Vec<bool> = grown.values().iter().map(|&v| v <= 0.0).collect();
        let sd = signed_distance(&planar, &mask, exec)?.with_time(slice.time());
        snapshots.push(match &extra {
            Some(e) => extrude(&sd, e),
            None => sd,
        });
    }
    Ok(UnsafeTube {
        d_tilde: TimeSampledField::new(snapshots)?,
        collision_radius,
        r0: reach.r0,
        source: reach.origin.clone(),
    })
}

/// Brute-force pessimistic safety value at relative internal state `x_int`:
/// the minimum over reachable grid nodes at time `t` of
/// `|p_int - p_ext|^2 - collision_radius^2`. Only the leading positional
/// coordinates of `x_int` are read. Returns `(2 * domain_diagonal)^2` when
/// nothing is reachable.
pub fn pessimistic_safety_oracle(
    reach: &ReachSolution,
    x_int: &[f64],
    t: f64,
    collision_radius: f64,
) -> Result<f64> {
    let spec = reach.tube.spec();
    let pos = &reach.position_dims;
    if x_int.len() < pos.len() {
        return Err(Error::InvalidArgument("internal state too short".into()));
    }
    let mut best = f64::INFINITY;
    let mut x = vec![0.0; spec.dims()];
    for k in 0..spec.len() {
        if reach.tube.node_value_at(k, t)? > 0.0 {
            continue;
        }
        spec.node_coords_into(k, &mut x);
        let d2: f64 = pos
            .iter()
            .enumerate()
            .map(|(i, &d)| (x_int[i] - x[d]).powi(2))
            .sum();
        best = best.min(d2);
    }
    if best.is_infinite() {
        return Ok((2.0 * spec.domain_diagonal()).powi(2));
    }
    Ok(best - collision_radius * collision_radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{DubinsCar, Integrator};
    use crate::hj_solver::SolverConfig;
    use crate::reach::{default_r0, frs_from_point};
    use std::f64::consts::PI;

    const SEQ: Execution = Execution::Sequential;

    fn plane(n: usize, half: f64) -> GridSpec {
        GridSpec::aperiodic(vec![-half, -half], vec![half, half], vec![n, n]).unwrap()
    }

    fn ring(n: usize) -> GridSpec {
        GridSpec::new(vec![-PI], vec![PI], vec![n], vec![true]).unwrap()
    }

    fn single(field: ScalarField) -> TimeSampledField {
        TimeSampledField::new(vec![field]).unwrap()
    }

    #[test]
    fn projection_examples() {
        let spec = plane(9, 2.0);
        let f = ScalarField::from_fn(spec.clone(), 0.0, SEQ, |x| x[1].abs()).unwrap();
        let p = project_min(&single(f), &[0], SEQ).unwrap();
        assert!(p.first().values().iter().all(|&v| v == 0.0));

        let g = ScalarField::from_fn(spec.clone(), 0.0, SEQ, |x| x[0] * 2.0).unwrap();
        let p = project_min(&single(g.clone()), &[0], SEQ).unwrap();
        for i in 0..9 {
            assert_eq!(p.first().values()[i], g.at(&[i, 4]).unwrap());
        }
        assert!(project_min(&single(g), &[], SEQ).is_err());
    }

    #[test]
    fn projection_inverts_extrusion() {
        let spec = plane(7, 1.0);
        let f = ScalarField::from_fn(spec, 0.3, SEQ, |x| x[0] * x[1] - 0.2).unwrap();
        let up = extrude(&f, &ring(8));
        let back = project_min(&single(up.clone()), &[0, 1], SEQ).unwrap();
        assert_eq!(back.first(), &f);
        // Every heading slice is identical.
        for chunk in up.values().chunks(8) {
            assert!(chunk.iter().all(|&v| v == chunk[0]));
        }
    }

    #[test]
    fn extrusion_volume_is_area_times_period() {
        let spec = plane(41, 2.0);
        let f = ScalarField::from_fn(spec, 0.0, SEQ, |x| x[0].hypot(x[1]) - 1.0).unwrap();
        let inside_2d = f.values().iter().filter(|&&v| v <= 0.0).count();
        let up = extrude(&f, &ring(16));
        let inside_3d = up.values().iter().filter(|&&v| v <= 0.0).count();
        let cell2 = f.spec().spacing(0) * f.spec().spacing(1);
        let cell3 = cell2 * up.spec().spacing(2);
        assert!((inside_3d as f64 * cell3 - 2.0 * PI * inside_2d as f64 * cell2).abs() < 1e-9);
    }

    #[test]
    fn zero_radius_keeps_the_set() {
        let spec = plane(21, 2.0);
        let f = ScalarField::from_fn(spec, 0.0, SEQ, |x| x[0].hypot(x[1]) - 1.0).unwrap();
        let g = inflate(&f, 0.0, SEQ).unwrap();
        for (a, b) in f.values().iter().zip(g.values()) {
            assert_eq!(*a <= 0.0, *b <= 0.0);
        }
    }

    #[test]
    fn inflating_a_point_gives_a_disk() {
        let spec = plane(201, 5.0);
        let h = spec.spacing(0);
        let mut vals = vec![1.0; spec.len()];
        vals[spec.flat_index(&[100, 100]).unwrap()] = -1.0;
        let f = ScalarField::new(spec, vals, 0.0).unwrap();
        let radius = 2.0;
        let g = inflate(&f, radius, SEQ).unwrap();
        let area = g.values().iter().filter(|&&v| v <= 0.0).count() as f64 * h * h;
        let exact = PI * radius * radius;
        assert!(
            (area - exact).abs() <= 2.0 * PI * radius * h,
            "area {area} vs {exact}"
        );
    }

    #[test]
    fn inflated_pair_is_connected() {
        let spec = plane(81, 4.0);
        let mut vals = vec![1.0; spec.len()];
        let a = spec.flat_index(&[30, 40]).unwrap();
        let b = spec.flat_index(&[50, 40]).unwrap();
        vals[a] = -1.0;
        vals[b] = -1.0;
        let gap = 20.0 * spec.spacing(0);
        let f = ScalarField::new(spec.clone(), vals, 0.0).unwrap();
        let g = inflate(&f, 0.6 * gap, SEQ).unwrap();
        let inside: Vec<bool> = g.values().iter().map(|&v| v <= 0.0).collect();
        // Flood fill over 4-neighbours from `a`.
        let mut seen = vec![false; inside.len()];
        let mut stack = vec![a];
        seen[a] = true;
        while let Some(k) = stack.pop() {
            let idx = spec.index_of(k);
            for (d, step) in [(0, -1i64), (0, 1), (1, -1), (1, 1)] {
                let j = idx[d] as i64 + step;
                if j < 0 || j >= 81 {
                    continue;
                }
                let mut n = idx.clone();
                n[d] = j as usize;
                let nk = spec.flat_index(&n).unwrap();
                if inside[nk] && !seen[nk] {
                    seen[nk] = true;
                    stack.push(nk);
                }
            }
        }
        assert!(seen[b]);
    }

    #[test]
    fn larger_radius_lowers_values() {
        let spec = plane(41, 3.0);
        let f = ScalarField::from_fn(spec, 0.0, SEQ, |x| (x[0] - 0.5).hypot(x[1]) - 0.7).unwrap();
        let small = inflate(&f, 0.3, SEQ).unwrap();
        let big = inflate(&f, 0.9, SEQ).unwrap();
        for (a, b) in big.values().iter().zip(small.values()) {
            assert!(a <= b);
        }
    }

    #[test]
    fn empty_set_inflates_to_sentinel() {
        let spec = plane(11, 1.0);
        let f = ScalarField::new(spec.clone(), vec![1.0; spec.len()], 0.0).unwrap();
        let g = inflate(&f, 0.5, SEQ).unwrap();
        assert!(g
            .values()
            .iter()
            .all(|&v| v == 2.0 * spec.domain_diagonal()));
    }

    fn dubins_setup() -> (ReachSolution, GridSpec) {
        let spec = GridSpec::new(
            vec![-8.0, -8.0, -PI],
            vec![8.0, 8.0, PI],
            vec![33, 33, 24],
            vec![false, false, true],
        )
        .unwrap();
        let car = DubinsCar::external_reference();
        let cfg = SolverConfig {
            snapshot_dt: 0.25,
            ..Default::default()
        };
        let reach = frs_from_point(
            &car,
            &[0.0; 3],
            default_r0(&spec),
            0.0,
            1.0,
            &spec,
            &cfg,
            None,
        )
        .unwrap();
        (reach, spec)
    }

    #[test]
    fn unsafe_tube_properties() {
        let (reach, spec) = dubins_setup();
        let radius = 1.0;
        let tube = build_unsafe_tube(&reach, radius, &spec, SEQ).unwrap();
        assert_eq!(tube.d_tilde.times(), reach.tube.times());
        let r0 = reach.r0;
        let h = spec.max_spacing();
        for snap in tube.d_tilde.snapshots() {
            let t = snap.time();
            for chunk in snap.values().chunks(24) {
                assert!(chunk.iter().all(|&v| v == chunk[0]));
            }
            for k in 0..spec.len() {
                let x = spec.node_coords(k);
                if x[0].hypot(x[1]) > 3.0 * t + r0 + radius + h {
                    assert!(snap.values()[k] > 0.0);
                }
            }
            // Nested in time.
            if t > 0.0 {
                let earlier = tube.d_tilde.field_at(t - 0.25).unwrap();
                for (a, b) in snap.values().iter().zip(earlier.values()) {
                    assert!(*a <= *b + h);
                }
            }
        }
        // At t0 the unsafe set is about a disk of radius r0 + collision radius.
        let first = tube.d_tilde.first();
        let disk = r0 + radius;
        for k in 0..spec.len() {
            let x = spec.node_coords(k);
            let rho = x[0].hypot(x[1]);
            if rho < disk - 2.0 * h {
                assert!(first.values()[k] < 0.0);
            } else if rho > disk + 2.0 * h {
                assert!(first.values()[k] > 0.0);
            }
        }
    }

    #[test]
    fn unsafe_tube_rejects_mismatched_grids() {
        let (reach, _) = dubins_setup();
        let other = GridSpec::new(
            vec![-8.0, -8.0, -PI],
            vec![8.0, 8.0, PI],
            vec![31, 33, 24],
            vec![false, false, true],
        )
        .unwrap();
        assert!(matches!(
            build_unsafe_tube(&reach, 1.0, &other, SEQ),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn oracle_examples() {
        let spec = GridSpec::aperiodic(vec![-2.0], vec![2.0], vec![41]).unwrap();
        let sys = Integrator::new(&[(-0.5, 0.5)]).unwrap();
        let cfg = SolverConfig::default();
        let reach = frs_from_point(&sys, &[0.0], 0.05, 0.0, 0.0, &spec, &cfg, None).unwrap();
        // Only the origin node is reachable at t0.
        let d = pessimistic_safety_oracle(&reach, &[0.0], 0.0, 0.5).unwrap();
        assert!((d + 0.25).abs() < 1e-12);
        let d = pessimistic_safety_oracle(&reach, &[0.5], 0.0, 0.5).unwrap();
        assert!(d.abs() < 1e-12);
    }
}
