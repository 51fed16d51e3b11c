use std::sync::Arc;

use ecsk_core::avoid::solve_avoid;
use ecsk_core::dynamics::Integrator;
use ecsk_core::exec::Execution;
use ecsk_core::grid::{GridSpec, ScalarField};
use ecsk_core::hj_solver::{Scheme, SolverConfig};
use ecsk_core::reach::frs_from_point;
use ecsk_core::setops::{build_unsafe_tube, inflate};
use proptest::prelude::*;

fn plane(n: usize, half: f64) -> GridSpec {
    GridSpec::aperiodic(vec![-half, -half], vec![half, half], vec![n, n]).unwrap()
}

fn cfg(exec: Execution, scheme: Scheme) -> SolverConfig {
    SolverConfig {
        snapshot_dt: 0.25,
        execution: exec,
        scheme,
        ..SolverConfig::default()
    }
}

fn run(exec: Execution, scheme: Scheme) -> (Vec<f64>, Vec<f64>) {
    let spec = plane(41, 4.0);
    let ext = Integrator::new(&[(-0.5, 0.5), (-0.5, 0.5)]).unwrap();
    let int = Integrator::new(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
    let c = cfg(exec, scheme);
    let reach = frs_from_point(&ext, &[0.0, 0.0], 0.4, 0.0, 1.0, &spec, &c, None).unwrap();
    let tube = Arc::new(build_unsafe_tube(&reach, 0.5, &spec, exec).unwrap());
    let avoid = solve_avoid(tube, &int, &c, None).unwrap();
    (
        reach.tube.last().values().to_vec(),
        avoid.tube.first().values().to_vec(),
    )
}

#[test]
fn sequential_and_parallel_agree_bitwise() {
    for scheme in [Scheme::Upwind, Scheme::LaxFriedrichs, Scheme::Eno2] {
        assert_eq!(
            run(Execution::Sequential, scheme),
            run(Execution::Parallel, scheme),
            "{scheme:?}"
        );
    }
}

#[test]
fn unsafe_set_grows_with_time_and_caps_the_avoid_tube() {
    let spec = plane(41, 4.0);
    let h = spec.max_spacing();
    let ext = Integrator::new(&[(-0.5, 0.5), (-0.5, 0.5)]).unwrap();
    let int = Integrator::new(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
    let c = SolverConfig {
        snapshot_dt: 0.25,
        ..SolverConfig::default()
    };
    let reach = frs_from_point(&ext, &[0.0, 0.0], 0.4, 0.0, 1.5, &spec, &c, None).unwrap();
    let tube = Arc::new(build_unsafe_tube(&reach, 0.5, &spec, Execution::Parallel).unwrap());
    let snaps = tube.d_tilde.snapshots();
    for w in snaps.windows(2) {
        for (late, early) in w[1].values().iter().zip(w[0].values()) {
            assert!(*late <= early + h);
        }
    }
    let avoid = solve_avoid(tube.clone(), &int, &c, None).unwrap();
    assert!(avoid.cap_violation() <= 1e-12);
    let last = avoid.tube.last().values();
    assert_eq!(last, tube.d_tilde.last().values());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn larger_inflation_never_raises_the_distance(
        cx in -1.0f64..1.0,
        cy in -1.0f64..1.0,
        r in 0.2f64..1.0,
        a in 0.0f64..0.8,
        b in 0.0f64..0.8,
    ) {
        let spec = plane(33, 3.0);
        let disk = ScalarField::from_fn(spec, 0.0, Execution::Sequential, |x| {
            ((x[0] - cx).powi(2) + (x[1] - cy).powi(2)).sqrt() - r
        })
        .unwrap();
        let (small, large) = (a.min(b), a.max(b));
        let s = inflate(&disk, small, Execution::Sequential).unwrap();
        let l = inflate(&disk, large, Execution::Sequential).unwrap();
        for (p, q) in l.values().iter().zip(s.values()) {
            prop_assert!(*p <= *q + 1e-12);
        }
    }
}
