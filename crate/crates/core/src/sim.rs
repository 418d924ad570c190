//! Closed-loop assembly, exact trajectory simulation and decay-rate fits.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphs::DirectedGraph;
use crate::linmath::{ensure_finite, matrix_exponential_step, Matrix};
use crate::mcsys::{check_graph, MultiChannelSystem, TimeDomain};
use crate::synth::{DistributedController, ObserverFreeDesign};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StateBlock {
    pub label: String,
    pub offset: usize,
    pub dim: usize,
}

/// `x' = M x + E v` (or `x(t+1) = M x(t) + E v`) with outputs `Y x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub domain: TimeDomain,
    pub matrix: Matrix,
    /// Exogenous input map `E`.
    pub input: Matrix,
    /// Output map `Y` (stacked plant outputs `y_i`).
    pub output: Matrix,
    pub layout: Vec<StateBlock>,
}

impl ClosedLoop {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.matrix.ncols() != d || self.input.nrows() != d || self.output.ncols() != d {
            return Err(Error::invalid("closed-loop matrices have inconsistent shapes"));
        }
        ensure_finite(&self.matrix, "closed-loop matrix")
    }

    pub fn block(&self, label: &str) -> Option<&StateBlock> {
        self.layout.iter().find(|b| b.label == label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// One row per time sample.
    pub states: Matrix,
    pub outputs: Matrix,
}

impl Trajectory {
    pub fn final_state(&self) -> DVector<f64> {
        self.states.row(self.states.nrows() - 1).transpose()
    }

    pub fn final_output(&self) -> DVector<f64> {
        self.outputs.row(self.outputs.nrows() - 1).transpose()
    }

    /// CSV with a header `t,<state labels>,y1..`.
    pub fn to_csv(&self, state_labels: &[String]) -> String {
        let mut out = String::from("t");
        for l in state_labels {
            out.push(',');
            out.push_str(l);
        }
        for i in 0..self.outputs.ncols() {
            out.push_str(&format!(",y{}", i + 1));
        }
        out.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            out.push_str(&format!("{t}"));
            for v in self.states.row(k).iter().chain(self.outputs.row(k).iter()) {
                out.push_str(&format!(",{v:e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Per-coordinate labels (`x[1]`, `x1[2]`, `z[1]`, ...) from the layout.
pub fn state_labels(cl: &ClosedLoop) -> Vec<String> {
    let mut out = Vec::with_capacity(cl.dim());
    for b in &cl.layout {
        for k in 0..b.dim {
            out.push(format!("{}[{}]", b.label, k + 1));
        }
    }
    out
}

/// Simulates from `x0` under the constant exogenous input `v` up to
/// `horizon`. Continuous loops step exactly with `exp` of the augmented
/// matrix `[[M, E v], [0, 0]]`; discrete loops require `dt = 1`.
pub fn simulate(cl: &ClosedLoop, x0: &DVector<f64>, v: &DVector<f64>, horizon: f64, dt: f64) -> Result<Trajectory> {
    cl.validate()?;
    let d = cl.dim();
    if x0.len() != d {
        return Err(Error::invalid(format!("initial state has {} entries, expected {d}", x0.len())));
    }
    if v.len() != cl.input.ncols() {
        return Err(Error::invalid(format!(
            "exogenous input has {} entries, expected {}",
            v.len(),
            cl.input.ncols()
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) || !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("time step must be positive and horizon nonnegative"));
    }
    let forcing = &cl.input * v;
    let (phi, gamma) = match cl.domain {
        TimeDomain::Continuous => {
            let mut aug = Matrix::zeros(d + 1, d + 1);
            aug.view_mut((0, 0), (d, d)).copy_from(&cl.matrix);
            aug.view_mut((0, d), (d, 1)).copy_from(&forcing);
            let e = matrix_exponential_step(&aug, dt)?;
            (e.view((0, 0), (d, d)).into_owned(), e.view((0, d), (d, 1)).column(0).into_owned())
        }
        TimeDomain::Discrete => {
            if dt != 1.0 {
                return Err(Error::invalid("discrete-time simulation requires dt = 1"));
            }
            (cl.matrix.clone(), forcing)
        }
    };
    let steps = (horizon / dt).round() as usize;
    let mut states = Matrix::zeros(steps + 1, d);
    let mut x = x0.clone();
    states.set_row(0, &x.transpose());
    for k in 1..=steps {
        x = &phi * &x + &gamma;
        states.set_row(k, &x.transpose());
    }
    let outputs = &states * cl.output.transpose();
    let times = (0..=steps).map(|k| k as f64 * dt).collect();
    Ok(Trajectory { times, states, outputs })
}

/// Norm floor of the log fit.
pub const NORM_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// Slope of `ln ||x(t)||` per unit time (per step in discrete time).
    pub rate: f64,
    /// Some norms fell below [`NORM_FLOOR`] and were clamped.
    pub clamped: bool,
}

/// Least-squares slope of `ln ||x(t)||` over the final 60% of the samples.
pub fn estimate_decay_rate(traj: &Trajectory) -> Result<DecayFit> {
    let t = traj.times.len();
    if t < 3 {
        return Err(Error::invalid("decay fit needs at least three samples"));
    }
    let start = (t as f64 * 0.4).floor() as usize;
    let mut clamped = false;
    let pts: Vec<(f64, f64)> = (start..t)
        .map(|k| {
            let nrm = traj.states.row(k).norm();
            if nrm < NORM_FLOOR {
                clamped = true;
            }
            (traj.times[k], nrm.max(NORM_FLOOR).ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("decay fit window has no time spread"));
    }
    Ok(DecayFit {
        rate: sxy / sxx,
        clamped,
    })
}

/// Observer-based loop in implementation coordinates `(x, x_1..x_m, z)`:
///
/// ```text
/// x'   = A x + sum_i B_i F_i x_i + E v
/// x_i' = (A + K_i C_i + sum_j B_j F_j) x_i - K_i C_i x + sum_j H_ij (x_i - x_j) + [i = q] C z
/// z'   = A_z z + K (C_q x_q - C_q x) + sum_j H_j (x_q - x_j)
/// ```
///
/// `exo` (n x k) is the exogenous map into the plant; `None` means no input.
pub fn assemble_observer_closed_loop(
    sys: &MultiChannelSystem,
    graph: &DirectedGraph,
    ctl: &DistributedController,
    exo: Option<&Matrix>,
) -> Result<ClosedLoop> {
    sys.validate()?;
    check_graph(sys, graph)?;
    let (n, m) = (sys.n(), sys.m());
    let nu = ctl.nu();
    let q = ctl.q;
    if ctl.f.len() != m || ctl.k.len() != m || ctl.h.len() != m || q >= m {
        return Err(Error::invalid("controller does not match the number of channels"));
    }
    for i in 0..m {
        let expected: Vec<usize> = graph.neighbors(i).into_iter().filter(|&j| j != i).collect();
        if ctl.h[i].keys().copied().collect::<Vec<_>>() != expected {
            return Err(Error::invalid(format!(
                "coupling gains of agent {} do not match its neighbors",
                i + 1
            )));
        }
        let ch = &sys.channels[i];
        if ctl.f[i].shape() != (ch.b.ncols(), n) || ctl.k[i].shape() != (n, ch.c.nrows()) {
            return Err(Error::invalid(format!("gains of agent {} have the wrong shape", i + 1)));
        }
    }
    let dim = n * (m + 1) + nu;
    let xi = |i: usize| n * (i + 1);
    let zo = n * (m + 1);
    let mut mm = Matrix::zeros(dim, dim);
    let mut bf_sum = Matrix::zeros(n, n);
    for i in 0..m {
        let bf = &sys.channels[i].b * &ctl.f[i];
        mm.view_mut((0, xi(i)), (n, n)).copy_from(&bf);
        bf_sum += bf;
    }
    mm.view_mut((0, 0), (n, n)).copy_from(&sys.a);
    for i in 0..m {
        let c = &sys.channels[i].c;
        let kc = &ctl.k[i] * c;
        let mut diag = &sys.a + &kc + &bf_sum;
        for (&j, hij) in &ctl.h[i] {
            diag += hij;
            let mut blk = mm.view_mut((xi(i), xi(j)), (n, n));
            blk -= hij;
        }
        let mut blk = mm.view_mut((xi(i), xi(i)), (n, n));
        blk += &diag;
        let mut blk = mm.view_mut((xi(i), 0), (n, n));
        blk -= &kc;
        if i == q && nu > 0 {
            mm.view_mut((xi(i), zo), (n, nu)).copy_from(&ctl.channel_c);
        }
    }
    if nu > 0 {
        let kcq = &ctl.k_bar * &sys.channels[q].c;
        let mut own = kcq.clone();
        for (&j, hj) in &ctl.h_bar {
            own += hj;
            let mut blk = mm.view_mut((zo, xi(j)), (nu, n));
            blk -= hj;
        }
        let mut blk = mm.view_mut((zo, xi(q)), (nu, n));
        blk += &own;
        let mut blk = mm.view_mut((zo, 0), (nu, n));
        blk -= &kcq;
        mm.view_mut((zo, zo), (nu, nu)).copy_from(&ctl.channel_a);
    }
    let k = exo.map_or(0, |e| e.ncols());
    let mut input = Matrix::zeros(dim, k);
    if let Some(e) = exo {
        if e.nrows() != n {
            return Err(Error::invalid("exogenous map must have one row per plant state"));
        }
        input.view_mut((0, 0), (n, k)).copy_from(e);
    }
    let c_all = sys.c_all();
    let mut output = Matrix::zeros(c_all.nrows(), dim);
    output.view_mut((0, 0), (c_all.nrows(), n)).copy_from(&c_all);
    let mut layout = vec![StateBlock {
        label: "x".into(),
        offset: 0,
        dim: n,
    }];
    for i in 0..m {
        layout.push(StateBlock {
            label: format!("x{}", i + 1),
            offset: xi(i),
            dim: n,
        });
    }
    layout.push(StateBlock {
        label: "z".into(),
        offset: zo,
        dim: nu,
    });
    Ok(ClosedLoop {
        domain: sys.domain,
        matrix: mm,
        input,
        output,
        layout,
    })
}

/// Observer-free loop over (augmented state, compensator state). `sys` is
/// the original plant; `exo` maps into its state as above.
pub fn assemble_observer_free_closed_loop(
    sys: &MultiChannelSystem,
    design: &ObserverFreeDesign,
    exo: Option<&Matrix>,
) -> Result<ClosedLoop> {
    let n = sys.n();
    if design.lifted.base_n != n {
        return Err(Error::invalid("design was built for a different plant"));
    }
    let dim = design.closed_loop.nrows();
    let k = exo.map_or(0, |e| e.ncols());
    let mut input = Matrix::zeros(dim, k);
    if let Some(e) = exo {
        if e.nrows() != n {
            return Err(Error::invalid("exogenous map must have one row per plant state"));
        }
        input.view_mut((0, 0), (n, k)).copy_from(e);
    }
    let c_all = sys.c_all();
    let mut output = Matrix::zeros(c_all.nrows(), dim);
    output.view_mut((0, 0), (c_all.nrows(), n)).copy_from(&c_all);
    let mut layout: Vec<StateBlock> = design
        .lifted
        .layout
        .iter()
        .map(|b| StateBlock {
            label: b.label.clone(),
            offset: b.offset,
            dim: b.dim,
        })
        .collect();
    layout.push(StateBlock {
        label: "z".into(),
        offset: design.lifted.n(),
        dim: design.compensator.order(),
    });
    Ok(ClosedLoop {
        domain: sys.domain,
        matrix: design.closed_loop.clone(),
        input,
        output,
        layout,
    })
}
