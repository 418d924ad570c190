use super::*;
use crate::examples::{cycle_graph, three_channel_system};
use crate::linmath::pbh_controllable;
use crate::mcsys::Channel;

fn b_unit(m: usize, q: usize) -> Matrix {
    Matrix::from_fn(m, 1, |r, _| if r == q { 1.0 } else { 0.0 })
}

#[test]
fn g_matrix_three_cycle() {
    // 1 -> 2 -> 3 -> 1 in 1-based labels.
    let g = DirectedGraph::cycle(3);
    let gm = construct_G(&g, 0, Some(&[0.0, 2.0, 3.0])).unwrap();
    assert_eq!(gm.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 0.0]);
    assert_eq!((gm[(1, 1)], gm[(1, 0)]), (2.0, -2.0));
    assert_eq!((gm[(2, 2)], gm[(2, 1)]), (3.0, -3.0));
    assert!(pbh_controllable(&gm, &b_unit(3, 0), None).unwrap());
}

#[test]
fn g_matrix_two_cycle() {
    let g = DirectedGraph::cycle(2);
    let gm = construct_G(&g, 1, None).unwrap();
    assert_eq!(gm, Matrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 0.0]));
    assert!(pbh_controllable(&gm, &b_unit(2, 1), None).unwrap());
}

#[test]
fn g_matrix_rejects_disconnected() {
    let g = DirectedGraph::empty(3);
    assert!(matches!(construct_G(&g, 0, None), Err(Error::Domain(_))));
}

#[test]
fn compact_single_agent() {
    let sys = MultiChannelSystem::from_pairs(
        TimeDomain::Continuous,
        Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        vec![(Matrix::from_row_slice(2, 1, &[0.0, 1.0]), Matrix::from_row_slice(1, 2, &[1.0, 0.0]))],
    )
    .unwrap();
    let g = DirectedGraph::empty(1);
    let ces = build_compact_error_system(&sys, &g, &[Matrix::zeros(1, 2)]).unwrap();
    assert_eq!(ces.a_tilde, sys.a);
    assert_eq!(ces.c_tilde[0].nrows(), 0);
}

#[test]
fn compact_selectors_and_observability() {
    let sys = three_channel_system();
    let g = cycle_graph();
    let f: Vec<Matrix> = (0..3).map(|i| Matrix::from_element(1, 3, 0.1 * (i as f64 + 1.0))).collect();
    let ces = build_compact_error_system(&sys, &g, &f).unwrap();
    let bs: Vec<&Matrix> = ces.b_tilde.iter().collect();
    assert_eq!(hcat(9, &bs), Matrix::identity(9, 9));
    let c = {
        let parts: Vec<Matrix> = (0..3).map(|q| ces.output_map(q)).collect();
        let refs: Vec<&Matrix> = parts.iter().collect();
        vcat(9, &refs)
    };
    assert!(pbh_observable(&c, &ces.a_tilde, None).unwrap());
}

#[test]
fn gains_verified_on_example() {
    let sys = three_channel_system();
    let g = cycle_graph();
    let f = state_feedback(&sys, &Region::Continuous { alpha: 1.0 }.targets(3)).unwrap();
    let ces = build_compact_error_system(&sys, &g, &f).unwrap();
    let (gains, sample) = sample_generic_gains(&ces, &g, 0).unwrap();
    assert_eq!(sample.ctrb_index, vec![3, 3, 3]);
    let mm = ces.error_matrix(&gains);
    for q in 0..3 {
        assert_eq!(controllability_index(&mm, &ces.b_tilde[q], None).unwrap(), 3);
    }
}

#[test]
fn kronecker_lift_has_index_m() {
    let g = cycle_graph();
    let n = 2;
    for q in 0..3 {
        let gm = construct_G(&g, q, None).unwrap();
        let big = kron(&gm, &Matrix::identity(n, n));
        let bq = kron(&b_unit(3, q), &Matrix::identity(n, n));
        assert_eq!(controllability_index(&big, &bq, None).unwrap(), 3);
    }
}

#[test]
fn completion_accepts_zero_when_enough() {
    let sys = MultiChannelSystem::from_pairs(
        TimeDomain::Continuous,
        Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        vec![(Matrix::from_row_slice(2, 1, &[0.0, 1.0]), Matrix::from_row_slice(1, 2, &[1.0, 0.0]))],
    )
    .unwrap();
    let c = decentralized_completion(&sys, 0).unwrap();
    assert_eq!(c.attempts, 1);
    assert_eq!(c.f[0], Matrix::zeros(1, 1));
}

#[test]
fn completion_rejects_fixed_modes() {
    let sys = three_channel_system();
    let err = decentralized_completion(&sys.with_shared_outputs(&cycle_graph()).unwrap(), 0).unwrap_err();
    assert!(matches!(err, Error::Domain(_)));
}

#[test]
fn observer_based_assigns_spectrum() {
    let sys = three_channel_system();
    let g = cycle_graph();
    let opts = DesignOptions {
        region: Region::Continuous { alpha: 2.0 },
        mode: CompensatorMode::Full,
        lambda: None,
        seed: 0,
    };
    let d = assemble_observer_controller(&sys, &g, Some(0), &opts).unwrap();
    assert!(d.assignment.max_rel_error <= 1e-6);
    let sp = spectrum(&d.closed_loop).unwrap();
    assert!(sp.abscissa() <= -2.0);
    let mut expect = d.controller.state_targets.clone();
    expect.extend(d.controller.lambda.iter().copied());
    assert!(same_spectrum(&sp.eigenvalues, &expect, SEPARATION_TOL).unwrap());
}

fn scalar_agents() -> MultiChannelSystem {
    let one = Matrix::from_element(1, 1, 1.0);
    MultiChannelSystem::from_pairs(TimeDomain::Continuous, one.clone(), vec![(one.clone(), one.clone()); 3])
        .unwrap()
}

#[test]
fn observer_based_minimal_mode() {
    let opts = DesignOptions {
        region: Region::Continuous { alpha: 1.0 },
        mode: CompensatorMode::Minimal,
        lambda: None,
        seed: 0,
    };
    let d = assemble_observer_controller(&scalar_agents(), &cycle_graph(), None, &opts).unwrap();
    // At most m - 1 compensator states, so at most mn + m - 1 eigenvalues.
    assert!(d.controller.nu() <= 2);
    assert_eq!(d.controller.lambda.len(), 3 + d.controller.nu());
    assert!(d.assignment.max_rel_error <= 1e-6);
}

#[test]
fn minimal_mode_failure_is_reported() {
    let opts = DesignOptions {
        region: Region::Continuous { alpha: 1.0 },
        mode: CompensatorMode::Minimal,
        lambda: None,
        seed: 0,
    };
    match assemble_observer_controller(&three_channel_system(), &cycle_graph(), Some(0), &opts) {
        Ok(d) => assert!(d.assignment.max_rel_error <= 1e-6),
        Err(e) => assert!(e.to_string().contains("full-order")),
    }
}

#[test]
fn single_agent_reduces_to_classical() {
    let sys = MultiChannelSystem::new(
        TimeDomain::Continuous,
        Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        vec![Channel {
            b: Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
            c: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
        }],
    )
    .unwrap();
    let opts = DesignOptions {
        region: Region::Continuous { alpha: 1.0 },
        mode: CompensatorMode::Full,
        lambda: None,
        seed: 3,
    };
    let d = assemble_observer_controller(&sys, &DirectedGraph::empty(1), None, &opts).unwrap();
    assert!(spectrum(&d.closed_loop).unwrap().abscissa() <= -1.0);
}

#[test]
fn observer_free_on_example_cycle() {
    let sys = three_channel_system();
    let opts = DesignOptions {
        region: Region::Continuous { alpha: 1.0 },
        mode: CompensatorMode::Full,
        lambda: None,
        seed: 0,
    };
    let d = observer_free_synthesis(&sys, &LiftSpec::Extension(cycle_graph()), &[1, 1, 1], None, &opts).unwrap();
    assert!(spectrum(&d.closed_loop).unwrap().abscissa() <= -1.0);
}
