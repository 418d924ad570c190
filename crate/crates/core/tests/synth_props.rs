use distctl::graphs::DirectedGraph;
use distctl::linmath::{hcat, match_spectra, pbh_controllable, pbh_observable, spectrum, vcat, Matrix};
use distctl::mcsys::{Channel, MultiChannelSystem, TimeDomain};
use distctl::random::{jointly_ctrb_obs_system, strongly_connected_graph, uniform_matrix, well_conditioned};
use distctl::setpoint::{check_setpoint_feasible, SetpointProblem};
use distctl::sim::{estimate_decay_rate, simulate, ClosedLoop, StateBlock};
use distctl::synth::{
    assemble_observer_controller, build_compact_error_system, construct_G, CompensatorMode, DesignOptions, Region,
    SEPARATION_TOL,
};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Jointly controllable and observable, every `B_i` and `C_i` nonzero,
/// exactly `m` channels.
fn synth_instance(r: &mut ChaCha8Rng, max_n: usize, m: usize) -> MultiChannelSystem {
    loop {
        let sys = jointly_ctrb_obs_system(r, TimeDomain::Continuous, max_n, m);
        let nonzero = |x: &Matrix| x.iter().any(|&v| v != 0.0);
        if sys.m() == m && sys.channels.iter().all(|c| nonzero(&c.b) && nonzero(&c.c)) {
            return sys;
        }
    }
}

fn plain_loop(matrix: Matrix) -> ClosedLoop {
    let d = matrix.nrows();
    ClosedLoop {
        domain: TimeDomain::Continuous,
        input: Matrix::zeros(d, 0),
        output: Matrix::identity(d, d),
        layout: vec![StateBlock {
            label: "x".into(),
            offset: 0,
            dim: d,
        }],
        matrix,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn g_matrix_controllable_from_every_root(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = r.random_range(1..=8);
        let g = strongly_connected_graph(&mut r, m, 0.2);
        for q in 0..m {
            let gm = construct_G(&g, q, None).unwrap();
            let bq = Matrix::from_fn(m, 1, |i, _| f64::from(i == q));
            prop_assert!(pbh_controllable(&gm, &bq, None).unwrap(), "q = {q}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn compact_error_system_is_jointly_ctrb_and_obs(seed in any::<u64>()) {
        let mut r = rng(seed);
        let sys = jointly_ctrb_obs_system(&mut r, TimeDomain::Continuous, 4, 4);
        let (n, m) = (sys.n(), sys.m());
        let g = strongly_connected_graph(&mut r, m, 0.2);
        let f: Vec<Matrix> = sys.channels.iter().map(|c| uniform_matrix(&mut r, c.b.ncols(), n)).collect();
        let ces = build_compact_error_system(&sys, &g, &f).unwrap();
        let bt: Vec<&Matrix> = ces.b_tilde.iter().collect();
        prop_assert_eq!(hcat(n * m, &bt), Matrix::identity(n * m, n * m));
        let outs: Vec<Matrix> = (0..m).map(|q| ces.output_map(q)).collect();
        let refs: Vec<&Matrix> = outs.iter().collect();
        prop_assert!(pbh_observable(&vcat(n * m, &refs), &ces.a_tilde, None).unwrap());
    }

    #[test]
    fn halving_the_step_changes_nothing(seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = r.random_range(1..=6);
        let mut m = uniform_matrix(&mut r, d, d);
        for i in 0..d {
            m[(i, i)] -= 1.5;
        }
        let cl = plain_loop(m);
        let x0 = DVector::from_fn(d, |_, _| r.random_range(-1.0..=1.0));
        let coarse = simulate(&cl, &x0, &DVector::zeros(0), 2.0, 0.1).unwrap();
        let fine = simulate(&cl, &x0, &DVector::zeros(0), 2.0, 0.05).unwrap();
        for k in 0..coarse.times.len() {
            let a = coarse.states.row(k);
            let b = fine.states.row(2 * k);
            prop_assert!((a - b).norm() <= 1e-9 * b.norm().max(1.0));
        }
    }

    #[test]
    fn decay_fit_respects_abscissa(seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = r.random_range(1..=5);
        let t = well_conditioned(&mut r, d);
        let mut core = uniform_matrix(&mut r, d, d);
        for i in 0..d {
            core[(i, i)] -= 3.0;
        }
        let m = t.clone().try_inverse().unwrap() * core * t;
        let abscissa = spectrum(&m).unwrap().abscissa();
        prop_assume!(abscissa < -0.2);
        let cl = plain_loop(m);
        let x0 = DVector::from_fn(d, |_, _| r.random_range(-1.0..=1.0));
        let horizon = 60.0 / abscissa.abs();
        let tr = simulate(&cl, &x0, &DVector::zeros(0), horizon, horizon / 1200.0).unwrap();
        let fit = estimate_decay_rate(&tr).unwrap();
        // Near-defective modes bias a finite window by roughly k / t.
        prop_assert!((fit.rate - abscissa).abs() <= 0.1 * abscissa.abs().max(1.0), "rate {} abscissa {abscissa}", fit.rate);
    }

    #[test]
    fn setpoint_verdict_matches_dc_gain(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(1..=4);
        let m = r.random_range(1..=n);
        let a = uniform_matrix(&mut r, n, n);
        prop_assume!(a.clone().try_inverse().is_some());
        let mut chans: Vec<Channel> = (0..m)
            .map(|_| Channel { b: uniform_matrix(&mut r, n, 1), c: uniform_matrix(&mut r, 1, n) })
            .collect();
        if r.random_bool(0.3) {
            // Make two inputs equal, which makes the DC gain singular.
            if m >= 2 {
                chans[1].b = chans[0].b.clone();
            }
        }
        let sys = MultiChannelSystem::new(TimeDomain::Continuous, a.clone(), chans).unwrap();
        let dc = sys.c_all() * a.try_inverse().unwrap() * sys.b_all();
        let sv = dc.singular_values();
        let nonsingular = sv.min() > 1e-8 * sv.max().max(1.0);
        let rep = check_setpoint_feasible(&SetpointProblem::new(sys, vec![0.0; m]).unwrap()).unwrap();
        prop_assert_eq!(rep.rank == rep.required, nonsingular);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn observer_design_assigns_and_separates(seed in any::<u64>()) {
        let mut r = rng(seed);
        let sys = synth_instance(&mut r, 3, 3);
        let g: DirectedGraph = strongly_connected_graph(&mut r, 3, 0.3);
        let opts = DesignOptions {
            region: Region::Continuous { alpha: 1.0 },
            mode: CompensatorMode::Full,
            lambda: None,
            seed,
        };
        let d = assemble_observer_controller(&sys, &g, None, &opts).unwrap();
        prop_assert!(d.assignment.max_rel_error <= 1e-6);
        let mut bf = sys.a.clone();
        for (ch, f) in sys.channels.iter().zip(&d.controller.f) {
            bf += &ch.b * f;
        }
        let mut parts = spectrum(&bf).unwrap().eigenvalues;
        parts.extend(spectrum(&d.error_closed_loop).unwrap().eigenvalues);
        let whole = spectrum(&d.closed_loop).unwrap().eigenvalues;
        prop_assert!(match_spectra(&whole, &parts).unwrap().max_rel_error <= SEPARATION_TOL);
        prop_assert!(spectrum(&d.closed_loop).unwrap().abscissa() <= -1.0 + 1e-6);
    }
}
