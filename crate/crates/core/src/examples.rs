//! Small reference instances: the three-channel plant with a repeated
//! eigenvalue at 1, its cyclic neighbor graph, and two delayed versions of a
//! bidirectional path.

use std::collections::BTreeMap;

use crate::graphs::{DelayedGraph, DirectedGraph};
use crate::linmath::Matrix;
use crate::mcsys::{MultiChannelSystem, TimeDomain};

fn e(n: usize, k: usize) -> Matrix {
    Matrix::from_fn(n, 1, |i, _| if i == k { 1.0 } else { 0.0 })
}

fn plant(domain: TimeDomain) -> MultiChannelSystem {
    let a = Matrix::from_row_slice(3, 3, &[1., 0., 0., 0., 1., 0., 0., 1., 1.]);
    let c1 = Matrix::from_row_slice(2, 3, &[1., 0., 0., 0., 0., 1.]);
    let c23 = Matrix::from_row_slice(1, 3, &[0., 1., 0.]);
    MultiChannelSystem::from_pairs(
        domain,
        a,
        vec![(e(3, 0), c1), (e(3, 1), c23.clone()), (e(3, 0), c23)],
    )
    .expect("reference plant is well formed")
}

/// Continuous-time three-channel plant with `sigma(A) = {1, 1, 1}`.
pub fn three_channel_system() -> MultiChannelSystem {
    plant(TimeDomain::Continuous)
}

/// Same matrices read as a discrete-time plant.
pub fn discrete_three_channel_system() -> MultiChannelSystem {
    plant(TimeDomain::Discrete)
}

/// Three-agent cycle with `N_1 = {1,2}`, `N_2 = {2,3}`, `N_3 = {1,3}`
/// (arcs 2->1, 3->2, 1->3).
pub fn cycle_graph() -> DirectedGraph {
    DirectedGraph::from_arcs(3, [(1, 0), (2, 1), (0, 2)]).expect("valid arcs")
}

fn path_with_delays(d12: usize, d21: usize, d23: usize, d32: usize) -> DelayedGraph {
    let g = DirectedGraph::from_arcs(3, [(0, 1), (1, 0), (1, 2), (2, 1)]).expect("valid arcs");
    let delays = BTreeMap::from([((0, 1), d12), ((1, 0), d21), ((1, 2), d23), ((2, 1), d32)]);
    DelayedGraph::new(g, delays).expect("every arc has a delay")
}

/// Bidirectional path 1 <-> 2 <-> 3 with `d = (1, 2, 2)`.
pub fn path_delays() -> DelayedGraph {
    path_with_delays(1, 0, 2, 2)
}

/// Same path with longer delays, `d = (2, 2, 3)`.
pub fn path_delays_long() -> DelayedGraph {
    path_with_delays(2, 0, 2, 3)
}

/// Discrete plant `A = diag(0, 1.2, -0.8)` whose only fixed eigenvalue is 0,
/// witnessed by the subset `{2}` alone, so `r = 1`. Channel 2 acts on the
/// third mode only and the first mode is invisible to channels 1 and 3.
pub fn delayed_reference_system() -> MultiChannelSystem {
    let a = Matrix::from_row_slice(3, 3, &[0., 0., 0., 0., 1.2, 0., 0., 0., -0.8]);
    let col = |v: [f64; 3]| Matrix::from_column_slice(3, 1, &v);
    let row = |v: [f64; 3]| Matrix::from_row_slice(1, 3, &v);
    MultiChannelSystem::from_pairs(
        TimeDomain::Discrete,
        a,
        vec![
            (col([1., 1., 0.]), row([0., 1., 0.])),
            (col([0., 0., 1.]), row([1., 0., 1.])),
            (col([1., 0., 0.]), row([0., 1., 0.])),
        ],
    )
    .expect("reference plant is well formed")
}

/// Scalar-output plant with the same `A` as the three-channel example, used
/// for set-point control: `y_1 = x_1`, `y_2 = x_3`, `y_3 = x_2`, each agent
/// actuating its own state coordinate.
pub fn setpoint_reference_system() -> MultiChannelSystem {
    let a = Matrix::from_row_slice(3, 3, &[1., 0., 0., 0., 1., 0., 0., 1., 1.]);
    let row = |k: usize| e(3, k).transpose();
    MultiChannelSystem::from_pairs(
        TimeDomain::Continuous,
        a,
        vec![(e(3, 0), row(0)), (e(3, 1), row(2)), (e(3, 2), row(1))],
    )
    .expect("reference plant is well formed")
}
