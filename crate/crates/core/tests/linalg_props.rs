use distctl::graphs::DirectedGraph;
use distctl::linmath::{
    controllability_matrix, kron, match_spectra, numerical_rank, pbh_controllable, spectrum, Matrix,
};
use distctl::random::{random_graph, strongly_connected_graph, uniform_matrix, well_conditioned};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random orthogonal matrix from the QR factor of a Gaussian-ish draw.
fn orthogonal(r: &mut ChaCha8Rng, n: usize) -> Matrix {
    uniform_matrix(r, n, n).qr().q()
}

fn permutation(r: &mut ChaCha8Rng, n: usize) -> Matrix {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(r);
    Matrix::from_fn(n, n, |i, j| f64::from(idx[i] == j))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rank_invariant_under_permutation_and_rotation(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (rows, cols) = (r.random_range(1..=12), r.random_range(1..=12));
        let k = r.random_range(0..=rows.min(cols));
        let m = uniform_matrix(&mut r, rows, k) * uniform_matrix(&mut r, k, cols);
        let base = numerical_rank(&m, None).unwrap().rank;
        prop_assert_eq!(base, k);
        let pm = permutation(&mut r, rows) * &m * permutation(&mut r, cols);
        prop_assert_eq!(numerical_rank(&pm, None).unwrap().rank, base);
        let om = orthogonal(&mut r, rows) * &m * orthogonal(&mut r, cols);
        prop_assert_eq!(numerical_rank(&om, None).unwrap().rank, base);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn pbh_agrees_with_controllability_matrix(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(1..=6);
        let p = r.random_range(1..=2);
        let a = uniform_matrix(&mut r, n, n);
        let mut b = uniform_matrix(&mut r, n, p);
        if r.random_bool(0.4) {
            // Hide a mode: put B inside an A-invariant subspace.
            let t = well_conditioned(&mut r, n);
            let mut blk = uniform_matrix(&mut r, n, n);
            for j in 0..n - 1 {
                blk[(n - 1, j)] = 0.0;
            }
            let ti = t.clone().try_inverse().unwrap();
            let a2 = &t * blk * &ti;
            let mut bb = uniform_matrix(&mut r, n, p);
            bb.row_mut(n - 1).fill(0.0);
            b = &t * bb;
            let pbh = pbh_controllable(&a2, &b, None).unwrap();
            let kalman = numerical_rank(&controllability_matrix(&a2, &b, n), None).unwrap().rank == n;
            prop_assert_eq!(pbh, kalman);
        } else {
            let pbh = pbh_controllable(&a, &b, None).unwrap();
            let kalman = numerical_rank(&controllability_matrix(&a, &b, n), None).unwrap().rank == n;
            prop_assert_eq!(pbh, kalman);
        }
    }

    #[test]
    fn spectrum_is_similarity_invariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(1..=8);
        let m = uniform_matrix(&mut r, n, n);
        let t = well_conditioned(&mut r, n);
        let sim = t.clone().try_inverse().unwrap() * &m * &t;
        let a = spectrum(&m).unwrap().eigenvalues;
        let b = spectrum(&sim).unwrap().eigenvalues;
        prop_assert!(match_spectra(&a, &b).unwrap().max_abs_error <= 1e-8);
    }

    #[test]
    fn kron_mixed_product(seed in any::<u64>()) {
        let mut r = rng(seed);
        let d: Vec<usize> = (0..6).map(|_| r.random_range(1..=4)).collect();
        let a = uniform_matrix(&mut r, d[0], d[1]);
        let c = uniform_matrix(&mut r, d[1], d[2]);
        let b = uniform_matrix(&mut r, d[3], d[4]);
        let dd = uniform_matrix(&mut r, d[4], d[5]);
        let lhs = kron(&a, &b) * kron(&c, &dd);
        let rhs = kron(&(&a * &c), &(&b * &dd));
        prop_assert!((lhs - rhs).amax() <= 1e-10);
    }

    #[test]
    fn spanning_tree_uses_graph_arcs(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = r.random_range(1..=8);
        let g = strongly_connected_graph(&mut r, m, 0.2);
        let q = r.random_range(0..m);
        let tree = g.spanning_tree(q).unwrap();
        let arcs = tree.arcs();
        prop_assert_eq!(arcs.len(), m - 1);
        for (a, b) in arcs {
            prop_assert!(g.has_arc(a, b));
        }
    }

    #[test]
    fn strong_implies_weak_connectivity(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = r.random_range(1..=8);
        let density = r.random_range(0.05..0.6);
        let g = random_graph(&mut r, m, density);
        if g.is_strongly_connected() {
            prop_assert!(g.is_weakly_connected());
        }
        // Components partition the vertices.
        let mut seen: Vec<usize> = g.strongly_connected_components().concat();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..m).collect::<Vec<_>>());
    }

    #[test]
    fn neighborhoods_are_monotone(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = r.random_range(1..=8);
        let g: DirectedGraph = random_graph(&mut r, m, 0.3);
        let t: Vec<usize> = (0..m).filter(|_| r.random_bool(0.6)).collect();
        let s: Vec<usize> = t.iter().copied().filter(|_| r.random_bool(0.5)).collect();
        let ns = g.neighborhood_of_set(&s);
        let nt = g.neighborhood_of_set(&t);
        prop_assert!(ns.is_subset(&nt));
        for i in &s {
            prop_assert!(ns.contains(i));
        }
    }
}

#[test]
fn orthogonal_helper_is_orthogonal() {
    let mut r = rng(1);
    let q = orthogonal(&mut r, 5);
    assert!((q.transpose() * &q - DMatrix::<f64>::identity(5, 5)).amax() < 1e-12);
}
