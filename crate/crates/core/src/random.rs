//! Seeded random instances for property tests and benchmarks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graphs::DirectedGraph;
use crate::linmath::Matrix;
use crate::mcsys::{jointly_controllable, jointly_observable, Channel, MultiChannelSystem, TimeDomain};

pub fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

/// Random matrix with condition number kept moderate by adding a multiple of
/// the identity.
pub fn well_conditioned<R: Rng>(rng: &mut R, n: usize) -> Matrix {
    let mut t = uniform_matrix(rng, n, n);
    for i in 0..n {
        t[(i, i)] += 3.0;
    }
    t
}

/// `T diag(values) T^{-1}` for a random well-conditioned `T`.
fn similar_to_diag<R: Rng>(rng: &mut R, values: &[f64]) -> Matrix {
    let n = values.len();
    let t = well_conditioned(rng, n);
    let tinv = t.clone().try_inverse().expect("diagonally dominant");
    let d = Matrix::from_diagonal(&nalgebra::DVector::from_column_slice(values));
    t * d * tinv
}

/// Dense system with every `p_i` and `q_i` drawn from `1..=2`.
pub fn dense_system<R: Rng>(rng: &mut R, domain: TimeDomain, n: usize, m: usize) -> MultiChannelSystem {
    let a = uniform_matrix(rng, n, n);
    let channels = (0..m)
        .map(|_| {
            let p = rng.random_range(1..=2);
            let q = rng.random_range(1..=2);
            Channel {
                b: uniform_matrix(rng, n, p),
                c: uniform_matrix(rng, q, n),
            }
        })
        .collect();
    MultiChannelSystem::new(domain, a, channels).expect("consistent shapes")
}

/// Semisimple eigenvalue of multiplicity `k` with channel dimensions chosen so
/// that some subset `s` has `p_s + q_{m-s} < k`, which makes it fixed.
/// Returns `None` when no admissible dimensions were found.
pub fn planted_repeated<R: Rng>(
    rng: &mut R,
    domain: TimeDomain,
    n: usize,
    m: usize,
    k: usize,
) -> Option<MultiChannelSystem> {
    if k > n || m < 2 {
        return None;
    }
    for _ in 0..200 {
        let p: Vec<usize> = (0..m).map(|_| rng.random_range(0..=2)).collect();
        let q: Vec<usize> = (0..m).map(|_| rng.random_range(0..=2)).collect();
        if p.iter().sum::<usize>() < k || q.iter().sum::<usize>() < k {
            continue;
        }
        let planted = crate::mcsys::all_subsets(m).any(|s| {
            let ps: usize = s.iter().map(|&i| p[i]).sum();
            let qc: usize = (0..m).filter(|i| !s.contains(i)).map(|i| q[i]).sum();
            ps + qc < k
        });
        if !planted {
            continue;
        }
        let lambda = rng.random_range(-1.0..=1.0);
        let mut values = vec![lambda; k];
        while values.len() < n {
            let v: f64 = rng.random_range(-2.0..=2.0);
            if (v - lambda).abs() > 0.2 {
                values.push(v);
            }
        }
        let a = similar_to_diag(rng, &values);
        let channels = (0..m)
            .map(|i| Channel {
                b: uniform_matrix(rng, n, p[i]),
                c: uniform_matrix(rng, q[i], n),
            })
            .collect();
        return MultiChannelSystem::new(domain, a, channels).ok();
    }
    None
}

/// One channel that only measures (`B_i = 0`) and one that only actuates
/// (`C_j = 0`); the rest dense.
pub fn planted_split_channels<R: Rng>(
    rng: &mut R,
    domain: TimeDomain,
    n: usize,
    m: usize,
) -> MultiChannelSystem {
    let mut sys = dense_system(rng, domain, n, m.max(2));
    let mut idx: Vec<usize> = (0..sys.m()).collect();
    idx.shuffle(rng);
    let (i, j) = (idx[0], idx[1]);
    let p = sys.channels[i].b.ncols();
    sys.channels[i].b = Matrix::zeros(n, p);
    let q = sys.channels[j].c.nrows();
    sys.channels[j].c = Matrix::zeros(q, n);
    sys
}

/// Draws from the three families above until the result is jointly
/// controllable and observable.
pub fn jointly_ctrb_obs_system<R: Rng>(
    rng: &mut R,
    domain: TimeDomain,
    max_n: usize,
    max_m: usize,
) -> MultiChannelSystem {
    loop {
        let n = rng.random_range(1..=max_n);
        let m = rng.random_range(1..=max_m);
        let candidate = match rng.random_range(0..3) {
            0 => Some(dense_system(rng, domain, n, m)),
            1 => {
                let k = rng.random_range(2..=n.max(2));
                planted_repeated(rng, domain, n, m, k)
            }
            _ if m >= 2 => Some(planted_split_channels(rng, domain, n, m)),
            _ => None,
        };
        if let Some(sys) = candidate {
            if jointly_controllable(&sys).unwrap_or(false) && jointly_observable(&sys).unwrap_or(false) {
                return sys;
            }
        }
    }
}

/// A random cycle through all vertices plus each remaining arc with
/// probability `density`.
pub fn strongly_connected_graph<R: Rng>(rng: &mut R, m: usize, density: f64) -> DirectedGraph {
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(rng);
    let mut g = DirectedGraph::empty(m);
    if m > 1 {
        for k in 0..m {
            g.add_arc(perm[k], perm[(k + 1) % m]).expect("in range");
        }
    }
    for a in 0..m {
        for b in 0..m {
            if a != b && rng.random_bool(density) {
                g.add_arc(a, b).expect("in range");
            }
        }
    }
    g
}

/// Each off-diagonal arc with probability `density`.
pub fn random_graph<R: Rng>(rng: &mut R, m: usize, density: f64) -> DirectedGraph {
    let mut g = DirectedGraph::empty(m);
    for a in 0..m {
        for b in 0..m {
            if a != b && rng.random_bool(density) {
                g.add_arc(a, b).expect("in range");
            }
        }
    }
    g
}
