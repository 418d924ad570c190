//! Distributed set-point control: each agent integrates its own tracking
//! error, and any stabilizing distributed controller for the augmented plant
//! drives every `y_i` to its `r_i`.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result, StageExt};
use crate::graphs::DirectedGraph;
use crate::linmath::{numerical_rank, singular_values, Matrix};
use crate::mcsys::{jointly_controllable, jointly_observable, Channel, MultiChannelSystem, TimeDomain};
use crate::sim::{assemble_observer_closed_loop, assemble_observer_free_closed_loop, ClosedLoop};
use crate::synth::{
    assemble_observer_controller, observer_free_synthesis, CompensatorMode, DesignOptions, DistributedController,
    LiftSpec, ObserverFreeDesign, Region,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SetpointProblem {
    pub sys: MultiChannelSystem,
    pub r: Vec<f64>,
}

impl SetpointProblem {
    pub fn new(sys: MultiChannelSystem, r: Vec<f64>) -> Result<Self> {
        sys.validate()?;
        if r.len() != sys.m() {
            return Err(Error::invalid(format!("{} set-points for {} agents", r.len(), sys.m())));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("set-points must be finite"));
        }
        for (i, ch) in sys.channels.iter().enumerate() {
            if ch.c.nrows() != 1 {
                return Err(Error::domain(format!(
                    "agent {} senses {} outputs; set-point control needs a scalar output",
                    i + 1,
                    ch.c.nrows()
                )));
            }
        }
        Ok(SetpointProblem { sys, r })
    }

    pub fn reference(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.r)
    }
}

/// Plant plus integrators, state `(x, w_1, .., w_m)`. Agent `i` measures
/// `w_i` only. The set-point enters as `exo * r`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    pub system: MultiChannelSystem,
    /// `(n+m) x m`, equal to `-[0; I]`.
    pub exo: Matrix,
    /// `[C 0]`: the original outputs read from the augmented state.
    pub y_map: Matrix,
    pub base_n: usize,
}

pub fn augment_setpoint(problem: &SetpointProblem) -> Result<AugmentedSystem> {
    let sys = &problem.sys;
    let (n, m) = (sys.n(), sys.m());
    let c = sys.c_all();
    let mut a = Matrix::zeros(n + m, n + m);
    a.view_mut((0, 0), (n, n)).copy_from(&sys.a);
    a.view_mut((n, 0), (m, n)).copy_from(&c);
    if sys.domain == TimeDomain::Discrete {
        // w(t+1) = w(t) + y(t) - r
        a.view_mut((n, n), (m, m)).fill_with_identity();
    }
    let channels = sys
        .channels
        .iter()
        .enumerate()
        .map(|(i, ch)| {
            let mut b = Matrix::zeros(n + m, ch.b.ncols());
            b.view_mut((0, 0), (n, ch.b.ncols())).copy_from(&ch.b);
            let mut ci = Matrix::zeros(1, n + m);
            ci[(0, n + i)] = 1.0;
            Channel { b, c: ci }
        })
        .collect();
    let mut exo = Matrix::zeros(n + m, m);
    let mut neg = exo.view_mut((n, 0), (m, m));
    neg.fill_with_identity();
    neg *= -1.0;
    let mut y_map = Matrix::zeros(m, n + m);
    y_map.view_mut((0, 0), (m, n)).copy_from(&c);
    Ok(AugmentedSystem {
        system: MultiChannelSystem::new(sys.domain, a, channels)?,
        exo,
        y_map,
        base_n: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetpointFeasibility {
    pub verdict: bool,
    /// Rank of `[A B; C 0]` (`[A - I B; C 0]` in discrete time).
    pub rank: usize,
    pub required: usize,
    /// Smallest singular value of that matrix relative to the largest.
    pub margin: f64,
    pub plant_jointly_controllable: bool,
    pub plant_jointly_observable: bool,
}

/// The augmented plant is jointly observable whenever the plant is, and
/// jointly controllable iff the plant is and the rank condition at the
/// integrator pole holds.
pub fn check_setpoint_feasible(problem: &SetpointProblem) -> Result<SetpointFeasibility> {
    let sys = &problem.sys;
    let (n, m) = (sys.n(), sys.m());
    let b = sys.b_all();
    let p = b.ncols();
    let mut a = sys.a.clone();
    if sys.domain == TimeDomain::Discrete {
        for k in 0..n {
            a[(k, k)] -= 1.0;
        }
    }
    let mut big = Matrix::zeros(n + m, n + p);
    big.view_mut((0, 0), (n, n)).copy_from(&a);
    big.view_mut((0, n), (n, p)).copy_from(&b);
    big.view_mut((n, 0), (m, n)).copy_from(&sys.c_all());
    let rank = numerical_rank(&big, None)?.rank;
    let sv = singular_values(&big)?;
    let margin = match (sv.first(), sv.get(n + m - 1)) {
        (Some(&hi), Some(&lo)) if hi > 0.0 => lo / hi,
        _ => 0.0,
    };
    let ctrb = jointly_controllable(sys)?;
    let obs = jointly_observable(sys)?;
    Ok(SetpointFeasibility {
        verdict: ctrb && obs && rank == n + m,
        rank,
        required: n + m,
        margin,
        plant_jointly_controllable: ctrb,
        plant_jointly_observable: obs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetpointMethod {
    ObserverBased,
    /// Observer-free design on the extension of the augmented plant.
    ObserverFree { ni: Vec<usize> },
}

#[derive(Debug, Clone)]
pub enum SetpointController {
    ObserverBased(Box<DistributedController>),
    ObserverFree(Box<ObserverFreeDesign>),
}

#[derive(Debug, Clone)]
pub struct SetpointSolution {
    pub feasibility: SetpointFeasibility,
    pub augmented: AugmentedSystem,
    pub controller: SetpointController,
    /// Loop driven by `r`; its output map reads the original `y`.
    pub closed_loop: ClosedLoop,
    pub equilibrium: Equilibrium,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub state: DVector<f64>,
    pub outputs: DVector<f64>,
    pub residual: f64,
}

/// Constant state the loop settles to under `r`.
pub fn equilibrium(cl: &ClosedLoop, r: &DVector<f64>) -> Result<Equilibrium> {
    let forcing = &cl.input * r;
    let lhs = match cl.domain {
        TimeDomain::Continuous => -&cl.matrix,
        TimeDomain::Discrete => Matrix::identity(cl.dim(), cl.dim()) - &cl.matrix,
    };
    let state = lhs
        .clone()
        .lu()
        .solve(&forcing)
        .ok_or_else(|| Error::Numerical("closed loop is singular at the equilibrium".into()))?;
    let residual = (&lhs * &state - &forcing).amax();
    let outputs = &cl.output * &state;
    Ok(Equilibrium {
        state,
        outputs,
        residual,
    })
}

pub fn solve_setpoint(
    problem: &SetpointProblem,
    graph: &DirectedGraph,
    method: &SetpointMethod,
    region: Region,
    mode: CompensatorMode,
    seed: u64,
) -> Result<SetpointSolution> {
    let feasibility = check_setpoint_feasible(problem)?;
    if !feasibility.verdict {
        return Err(Error::domain(format!(
            "set-point problem is infeasible: rank [A B; C 0] = {} < {} or the plant is not jointly controllable and observable",
            feasibility.rank, feasibility.required
        )));
    }
    let aug = augment_setpoint(problem)?;
    let opts = DesignOptions {
        region,
        mode,
        lambda: None,
        seed,
    };
    let (controller, mut closed_loop) = match method {
        SetpointMethod::ObserverBased => {
            let d = assemble_observer_controller(&aug.system, graph, None, &opts).stage("set-point synthesis")?;
            let cl = assemble_observer_closed_loop(&aug.system, graph, &d.controller, Some(&aug.exo))?;
            (SetpointController::ObserverBased(Box::new(d.controller)), cl)
        }
        SetpointMethod::ObserverFree { ni } => {
            let d = observer_free_synthesis(&aug.system, &LiftSpec::Extension(graph.clone()), ni, None, &opts)
                .stage("set-point synthesis")?;
            let cl = assemble_observer_free_closed_loop(&aug.system, &d, Some(&aug.exo))?;
            (SetpointController::ObserverFree(Box::new(d)), cl)
        }
    };
    let dim = closed_loop.dim();
    let mut output = Matrix::zeros(aug.y_map.nrows(), dim);
    output.view_mut((0, 0), aug.y_map.shape()).copy_from(&aug.y_map);
    closed_loop.output = output;
    let equilibrium = equilibrium(&closed_loop, &problem.reference())?;
    Ok(SetpointSolution {
        feasibility,
        augmented: aug,
        controller,
        closed_loop,
        equilibrium,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::{cycle_graph, setpoint_reference_system};
    use crate::linmath::spectrum;
    use crate::sim::simulate;

    fn scalar(domain: TimeDomain, a: f64, b: &[f64], c: &[f64]) -> MultiChannelSystem {
        let n = c.len();
        MultiChannelSystem::from_pairs(
            domain,
            Matrix::from_element(n, n, 0.0) + Matrix::identity(n, n) * a,
            vec![(Matrix::from_column_slice(n, 1, b), Matrix::from_row_slice(1, n, c))],
        )
        .unwrap()
    }

    #[test]
    fn scalar_augmentation_blocks() {
        let p = SetpointProblem::new(scalar(TimeDomain::Continuous, 0.0, &[1.0], &[1.0]), vec![5.0]).unwrap();
        let aug = augment_setpoint(&p).unwrap();
        assert_eq!(aug.system.a, Matrix::from_row_slice(2, 2, &[0., 0., 1., 0.]));
        assert_eq!(aug.system.channels[0].b, Matrix::from_column_slice(2, 1, &[1., 0.]));
        assert_eq!(aug.system.channels[0].c, Matrix::from_row_slice(1, 2, &[0., 1.]));
        assert_eq!(aug.exo, Matrix::from_column_slice(2, 1, &[0., -1.]));
        let f = check_setpoint_feasible(&p).unwrap();
        assert!(f.verdict && f.rank == 2);
    }

    #[test]
    fn three_channel_augmentation_dims() {
        let p = SetpointProblem::new(setpoint_reference_system(), vec![0.0; 3]).unwrap();
        let aug = augment_setpoint(&p).unwrap();
        assert_eq!(aug.system.n(), 6);
        for (i, ch) in aug.system.channels.iter().enumerate() {
            assert_eq!(ch.c.iter().copied().collect::<Vec<_>>(), (0..6).map(|k| f64::from(k == 3 + i)).collect::<Vec<_>>());
        }
        assert!(jointly_observable(&aug.system).unwrap());
        assert!(jointly_controllable(&aug.system).unwrap());
    }

    #[test]
    fn non_scalar_output_rejected() {
        let sys = crate::examples::three_channel_system();
        assert!(matches!(SetpointProblem::new(sys, vec![0.0; 3]), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_at_origin_is_infeasible() {
        let sys = MultiChannelSystem::from_pairs(
            TimeDomain::Continuous,
            Matrix::zeros(2, 2),
            vec![(Matrix::from_column_slice(2, 1, &[0., 1.]), Matrix::from_row_slice(1, 2, &[0., 1.]))],
        )
        .unwrap();
        let p = SetpointProblem::new(sys, vec![1.0]).unwrap();
        let f = check_setpoint_feasible(&p).unwrap();
        assert!(!f.verdict);
        assert_eq!((f.rank, f.required), (2, 3));
        let err = solve_setpoint(&p, &DirectedGraph::complete(1), &SetpointMethod::ObserverBased, Region::Continuous { alpha: 1.0 }, CompensatorMode::Full, 0).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn double_integrator_feasible() {
        let sys = MultiChannelSystem::from_pairs(
            TimeDomain::Continuous,
            Matrix::from_row_slice(2, 2, &[0., 1., 0., 0.]),
            vec![(Matrix::from_column_slice(2, 1, &[0., 1.]), Matrix::from_row_slice(1, 2, &[1., 0.]))],
        )
        .unwrap();
        assert!(check_setpoint_feasible(&SetpointProblem::new(sys, vec![1.0]).unwrap()).unwrap().verdict);
    }

    #[test]
    fn scalar_tracks_reference() {
        let p = SetpointProblem::new(scalar(TimeDomain::Continuous, 0.0, &[1.0], &[1.0]), vec![5.0]).unwrap();
        let sol = solve_setpoint(
            &p,
            &DirectedGraph::complete(1),
            &SetpointMethod::ObserverBased,
            Region::Continuous { alpha: 1.0 },
            CompensatorMode::Full,
            0,
        )
        .unwrap();
        assert!((sol.equilibrium.outputs[0] - 5.0).abs() < 1e-9);
        let x0 = DVector::zeros(sol.closed_loop.dim());
        let tr = simulate(&sol.closed_loop, &x0, &p.reference(), 20.0, 0.05).unwrap();
        assert!((tr.final_output()[0] - 5.0).abs() <= 1e-3);
    }

    #[test]
    fn zero_reference_rests_at_origin() {
        let p = SetpointProblem::new(scalar(TimeDomain::Continuous, 0.0, &[1.0], &[1.0]), vec![0.0]).unwrap();
        let sol = solve_setpoint(&p, &DirectedGraph::complete(1), &SetpointMethod::ObserverBased, Region::Continuous { alpha: 1.0 }, CompensatorMode::Full, 0).unwrap();
        assert_eq!(sol.equilibrium.state.amax(), 0.0);
    }

    #[test]
    fn three_channel_outputs_settle_independently() {
        let p = SetpointProblem::new(setpoint_reference_system(), vec![1.0, -2.0, 0.5]).unwrap();
        let sol = solve_setpoint(
            &p,
            &cycle_graph(),
            &SetpointMethod::ObserverBased,
            Region::Continuous { alpha: 1.0 },
            CompensatorMode::Full,
            3,
        )
        .unwrap();
        assert!(spectrum(&sol.closed_loop.matrix).unwrap().abscissa() < -0.99);
        let eq = &sol.equilibrium;
        assert!(eq.residual <= 1e-9);
        for i in 0..3 {
            assert!((eq.outputs[i] - p.r[i]).abs() <= 1e-9, "{:?}", eq.outputs);
        }
        let moved = equilibrium(&sol.closed_loop, &DVector::from_column_slice(&[1.0, 3.0, 0.5])).unwrap();
        assert!((moved.outputs[0] - 1.0).abs() <= 1e-9 && (moved.outputs[2] - 0.5).abs() <= 1e-9);
        assert!((moved.outputs[1] - 3.0).abs() <= 1e-9);
    }

    #[test]
    fn discrete_integrators_accumulate() {
        let p = SetpointProblem::new(scalar(TimeDomain::Discrete, 0.5, &[1.0], &[1.0]), vec![2.0]).unwrap();
        let aug = augment_setpoint(&p).unwrap();
        assert_eq!(aug.system.a, Matrix::from_row_slice(2, 2, &[0.5, 0., 1., 1.]));
        let sol = solve_setpoint(&p, &DirectedGraph::complete(1), &SetpointMethod::ObserverBased, Region::Discrete { rho: 0.5 }, CompensatorMode::Full, 0).unwrap();
        assert!((sol.equilibrium.outputs[0] - 2.0).abs() < 1e-9);
    }
}
