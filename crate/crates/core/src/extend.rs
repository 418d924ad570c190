//! Observer-free extensions and delay liftings.
//!
//! Every agent `i` gets a bank of `n_i` local states `z_i` driven by a new
//! input `v_i` (integrators in continuous time, unit delays in discrete time)
//! and shares them with its followers. With transmission delays the received
//! copies `z_j(t - delta)` are carried by shift registers appended to the
//! state, which turns the delayed network into an ordinary delay-free
//! multi-channel system.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphs::{DelayedGraph, DirectedGraph};
use crate::linmath::{self, block_diag, scaled_rank_c, Matrix, C64, POINT_TOL};
use crate::mcsys::{
    check_graph, fixed_spectrum, jointly_controllable, jointly_observable, subset_pencil,
    transfer_graph, Channel, FixedSpectrumReport, MultiChannelSystem, TimeDomain,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftKind {
    Extension,
    DelayLift,
    StateHoldingLift,
    SelectiveHoldingLift,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BlockKind {
    Plant,
    /// `z_i(t - delay)` held by the network (a transmission shift register).
    Delayed { agent: usize, delay: usize },
    /// `w_{i,delay}`: a register agent `i` keeps itself to hold its state.
    Holding { agent: usize, delay: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayoutBlock {
    pub label: String,
    pub offset: usize,
    pub dim: usize,
    #[serde(flatten)]
    pub kind: BlockKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSystem {
    pub system: MultiChannelSystem,
    pub layout: Vec<LayoutBlock>,
    pub kind: LiftKind,
    pub ni: Vec<usize>,
    /// Register depth `d_i` of each agent (all zero for plain extensions).
    pub depth: Vec<usize>,
    pub base_n: usize,
}

impl LiftedSystem {
    pub fn n(&self) -> usize {
        self.system.n()
    }

    /// Offset of `z_i(t - delay)` in the lifted state.
    pub fn offset_of(&self, agent: usize, delay: usize) -> Option<usize> {
        self.layout.iter().find_map(|b| match b.kind {
            BlockKind::Delayed { agent: a, delay: d } | BlockKind::Holding { agent: a, delay: d }
                if a == agent && d == delay =>
            {
                Some(b.offset)
            }
            _ => None,
        })
    }

    /// Local controller states kept by the agents: `z_i` plus any holding
    /// registers. Network shift registers are not counted.
    pub fn controller_dim(&self) -> usize {
        self.layout
            .iter()
            .filter(|b| match b.kind {
                BlockKind::Plant => false,
                BlockKind::Delayed { delay, .. } => delay == 0,
                BlockKind::Holding { .. } => true,
            })
            .map(|b| b.dim)
            .sum()
    }

    /// Holding registers only.
    pub fn holding_dim(&self) -> usize {
        self.layout
            .iter()
            .filter(|b| matches!(b.kind, BlockKind::Holding { .. }))
            .map(|b| b.dim)
            .sum()
    }
}

fn check_ni(sys: &MultiChannelSystem, ni: &[usize]) -> Result<()> {
    if ni.len() != sys.m() {
        return Err(Error::invalid(format!(
            "{} controller dimensions for {} channels",
            ni.len(),
            sys.m()
        )));
    }
    Ok(())
}

/// Shared builder. `depth[i]` is the register depth of agent `i`; `reads(i, j)`
/// returns which copy `z_j(t - delta)` agent `i` measures for neighbor `j`,
/// or `None` if it measures none. `holders` decides block naming only.
fn build_chain_lift(
    sys: &MultiChannelSystem,
    graph: &DirectedGraph,
    ni: &[usize],
    depth: &[usize],
    reads: &dyn Fn(usize, usize) -> Option<usize>,
    holders: &BTreeSet<usize>,
    kind: LiftKind,
) -> Result<LiftedSystem> {
    let n = sys.n();
    let m = sys.m();
    let mut layout = vec![LayoutBlock {
        label: "x".into(),
        offset: 0,
        dim: n,
        kind: BlockKind::Plant,
    }];
    let mut offset = n;
    let mut chains = Vec::with_capacity(m);
    for i in 0..m {
        let d = depth[i];
        for delta in 0..=d {
            let holding = delta > 0 && holders.contains(&i);
            let (label, kind) = if holding {
                (
                    format!("w{}{}", i + 1, delta),
                    BlockKind::Holding { agent: i, delay: delta },
                )
            } else if delta == 0 {
                (format!("z{}", i + 1), BlockKind::Delayed { agent: i, delay: 0 })
            } else {
                (
                    format!("z{}(t-{delta})", i + 1),
                    BlockKind::Delayed { agent: i, delay: delta },
                )
            };
            layout.push(LayoutBlock {
                label,
                offset,
                dim: ni[i],
                kind,
            });
            offset += ni[i];
        }
        // Shift register [0 0; I_{d n_i} 0].
        let len = (d + 1) * ni[i];
        chains.push(Matrix::from_fn(len, len, |r, c| {
            if r >= ni[i] && c == r - ni[i] {
                1.0
            } else {
                0.0
            }
        }));
    }
    let total = offset;
    let mut blocks: Vec<&Matrix> = vec![&sys.a];
    blocks.extend(chains.iter());
    let a = block_diag(&blocks);

    let head = |i: usize, delta: usize| -> usize {
        let mut off = n;
        for j in 0..i {
            off += (depth[j] + 1) * ni[j];
        }
        off + delta * ni[i]
    };

    let mut channels = Vec::with_capacity(m);
    for i in 0..m {
        let ch = &sys.channels[i];
        let p = ch.b.ncols();
        let mut b = Matrix::zeros(total, p + ni[i]);
        b.view_mut((0, 0), (n, p)).copy_from(&ch.b);
        let h = head(i, 0);
        for k in 0..ni[i] {
            b[(h + k, p + k)] = 1.0;
        }

        let mut rows: Vec<(usize, usize)> = Vec::new(); // (offset, dim) of each selected copy
        for j in graph.neighbors(i) {
            if let Some(delta) = reads(i, j) {
                debug_assert!(delta <= depth[j]);
                rows.push((head(j, delta), ni[j]));
            }
        }
        let q = ch.c.nrows();
        let extra: usize = rows.iter().map(|r| r.1).sum();
        let mut c = Matrix::zeros(q + extra, total);
        c.view_mut((0, 0), (q, n)).copy_from(&ch.c);
        let mut r = q;
        for (off, dim) in rows {
            for k in 0..dim {
                c[(r + k, off + k)] = 1.0;
            }
            r += dim;
        }
        channels.push(Channel { b, c });
    }
    Ok(LiftedSystem {
        system: MultiChannelSystem::new(sys.domain, a, channels)?,
        layout,
        kind,
        ni: ni.to_vec(),
        depth: depth.to_vec(),
        base_n: n,
    })
}

/// Delay-free extension: `A_bar = diag(A, 0)`, `B_bar_i = diag(B_i, E_i)`,
/// `C_bar_i = diag(C_i, E'_{N_i})` with neighbors in increasing label order.
pub fn build_extension(
    sys: &MultiChannelSystem,
    graph: &DirectedGraph,
    ni: &[usize],
) -> Result<LiftedSystem> {
    check_graph(sys, graph)?;
    check_ni(sys, ni)?;
    let depth = vec![0; sys.m()];
    build_chain_lift(
        sys,
        graph,
        ni,
        &depth,
        &|_, _| Some(0),
        &BTreeSet::new(),
        LiftKind::Extension,
    )
}

fn check_delayed(sys: &MultiChannelSystem, dgraph: &DelayedGraph, ni: &[usize]) -> Result<()> {
    if sys.domain != TimeDomain::Discrete {
        return Err(Error::domain(
            "transmission delays are only modeled for discrete-time systems",
        ));
    }
    check_graph(sys, dgraph.graph())?;
    check_ni(sys, ni)
}

fn delay_of(dgraph: &DelayedGraph, from: usize, to: usize) -> usize {
    dgraph.delay(from, to).expect("neighbor arcs carry delays")
}

/// Lift without state holding: agent `i` measures `z_j(t - d_ji)` for each
/// neighbor `j`.
pub fn build_delay_lift(
    sys: &MultiChannelSystem,
    dgraph: &DelayedGraph,
    ni: &[usize],
) -> Result<LiftedSystem> {
    check_delayed(sys, dgraph, ni)?;
    let depth = dgraph.max_outgoing_delays();
    build_chain_lift(
        sys,
        dgraph.graph(),
        ni,
        &depth,
        &|i, j| Some(delay_of(dgraph, j, i)),
        &BTreeSet::new(),
        LiftKind::DelayLift,
    )
}

/// Lift with state holding: every agent, itself included, measures the
/// maximally delayed copy `z_j(t - d_j)` of each neighbor `j`.
pub fn build_state_holding_lift(
    sys: &MultiChannelSystem,
    dgraph: &DelayedGraph,
    ni: &[usize],
) -> Result<LiftedSystem> {
    check_delayed(sys, dgraph, ni)?;
    let depth = dgraph.max_outgoing_delays();
    let d = depth.clone();
    build_chain_lift(
        sys,
        dgraph.graph(),
        ni,
        &depth,
        &move |_, j| Some(d[j]),
        &(0..sys.m()).collect(),
        LiftKind::StateHoldingLift,
    )
}

/// Holding only for the selected agents. Signals from a holder `j` arrive as
/// `z_j(t - d_j)`; signals from other agents arrive as `z_j(t - d_ji)`. When
/// `own_raw` is false a non-holder does not measure its own current state,
/// which is the measurement list used in the selective-holding example.
pub fn build_selective_holding_lift(
    sys: &MultiChannelSystem,
    dgraph: &DelayedGraph,
    ni: &[usize],
    holders: &BTreeSet<usize>,
    own_raw: bool,
) -> Result<LiftedSystem> {
    check_delayed(sys, dgraph, ni)?;
    if let Some(&h) = holders.iter().find(|&&h| h >= sys.m()) {
        return Err(Error::invalid(format!("holding agent {} out of range", h + 1)));
    }
    let depth = dgraph.max_outgoing_delays();
    let d = depth.clone();
    let reads = move |i: usize, j: usize| {
        if holders.contains(&j) {
            Some(d[j])
        } else if i == j && !own_raw {
            None
        } else {
            Some(delay_of(dgraph, j, i))
        }
    };
    build_chain_lift(
        sys,
        dgraph.graph(),
        ni,
        &depth,
        &reads,
        holders,
        LiftKind::SelectiveHoldingLift,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Strongly connected graph and `n_i >= r`: the extension has no fixed spectrum.
    StrongExtension,
    /// `N_{m-s}` meets `s` for every witness subset `s`.
    GraphIntersection,
    /// The delay lift has no nonzero fixed eigenvalue.
    DelayNonzeroFixed,
    /// The state-holding lift has no fixed spectrum.
    StateHolding,
    /// The selective-holding lift has no fixed spectrum.
    SelectiveHolding,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailingCase {
    pub subset: Vec<usize>,
    #[serde(serialize_with = "crate::report::ser_complex")]
    pub lambda: C64,
    pub rank: usize,
}

/// Comparison of a lifted pencil rank with the closed-form prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankIdentityCheck {
    pub subset: Vec<usize>,
    #[serde(serialize_with = "crate::report::ser_complex")]
    pub lambda: C64,
    pub lifted_rank: usize,
    pub predicted_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub verdict: bool,
    pub failing: Vec<FailingCase>,
    pub lifted_dim: usize,
    pub controller_dim: usize,
    pub holding_dim: usize,
    /// Fixed eigenvalues of the lifted system (all of them, failing or not).
    #[serde(serialize_with = "crate::report::ser_complex_vec")]
    pub lifted_fixed: Vec<C64>,
    pub identity_checks: Vec<RankIdentityCheck>,
}

fn failing_from(report: &FixedSpectrumReport, keep: impl Fn(C64) -> bool) -> Vec<FailingCase> {
    report
        .fixed
        .iter()
        .filter(|f| keep(f.value))
        .flat_map(|f| {
            f.witnesses.iter().map(move |w| FailingCase {
                subset: w.subset.clone(),
                lambda: f.value,
                rank: w.rank,
            })
        })
        .collect()
}

fn report_for(
    condition: Condition,
    lifted: &LiftedSystem,
    fixed: &FixedSpectrumReport,
    failing: Vec<FailingCase>,
    identity_checks: Vec<RankIdentityCheck>,
) -> ConditionReport {
    let identity_ok = identity_checks
        .iter()
        .all(|c| c.lifted_rank == c.predicted_rank);
    ConditionReport {
        condition,
        verdict: failing.is_empty() && identity_ok,
        failing,
        lifted_dim: lifted.n(),
        controller_dim: lifted.controller_dim(),
        holding_dim: lifted.holding_dim(),
        lifted_fixed: fixed.fixed_eigenvalues(),
        identity_checks,
    }
}

fn require_joint(sys: &MultiChannelSystem) -> Result<()> {
    if !jointly_controllable(sys)? {
        return Err(Error::domain("system is not jointly controllable"));
    }
    if !jointly_observable(sys)? {
        return Err(Error::domain("system is not jointly observable"));
    }
    Ok(())
}

fn require_bound(ni: &[usize], r: usize) -> Result<()> {
    if let Some(i) = ni.iter().position(|&k| k < r) {
        return Err(Error::domain(format!(
            "n_{} = {} is below the rank-deficiency bound r = {r}",
            i + 1,
            ni[i]
        )));
    }
    Ok(())
}

/// Checks that the extension of a jointly controllable and observable system
/// over a strongly connected graph, with every `n_i >= r`, has no fixed
/// spectrum. Violated hypotheses are domain errors; a nonempty result is
/// reported as a failing verdict.
pub fn check_no_fixed_spectrum_strong(
    sys: &MultiChannelSystem,
    graph: &DirectedGraph,
    ni: &[usize],
) -> Result<ConditionReport> {
    check_graph(sys, graph)?;
    check_ni(sys, ni)?;
    if !graph.is_strongly_connected() {
        return Err(Error::domain("neighbor graph is not strongly connected"));
    }
    require_joint(sys)?;
    let base = fixed_spectrum(sys)?;
    require_bound(ni, base.deficiency_r)?;
    let lifted = build_extension(sys, graph, ni)?;
    let fixed = fixed_spectrum(&lifted.system)?;
    let failing = failing_from(&fixed, |_| true);
    Ok(report_for(Condition::StrongExtension, &lifted, &fixed, failing, Vec::new()))
}

/// `N_{m-s}` must meet `s` for every subset `s` witnessing a fixed eigenvalue
/// of the original system. Failing entries carry the original pencil rank.
pub fn check_weak_graph_condition(
    sys: &MultiChannelSystem,
    graph: &DirectedGraph,
) -> Result<ConditionReport> {
    check_graph(sys, graph)?;
    let base = fixed_spectrum(sys)?;
    let mut failing = Vec::new();
    for f in &base.fixed {
        for w in &f.witnesses {
            let comp: Vec<usize> = (0..sys.m()).filter(|i| !w.subset.contains(i)).collect();
            let reach = graph.neighborhood_of_set(&comp);
            if w.subset.iter().all(|i| !reach.contains(i)) {
                failing.push(FailingCase {
                    subset: w.subset.clone(),
                    lambda: f.value,
                    rank: w.rank,
                });
            }
        }
    }
    Ok(ConditionReport {
        condition: Condition::GraphIntersection,
        verdict: failing.is_empty(),
        failing,
        lifted_dim: sys.n(),
        controller_dim: 0,
        holding_dim: 0,
        lifted_fixed: base.fixed_eigenvalues(),
        identity_checks: Vec::new(),
    })
}

/// Whether the union of the transfer graph and the neighbor graph is
/// strongly connected (the extension's transfer graph is then strongly
/// connected when every `n_i > 0`).
pub fn extended_transfer_strongly_connected(
    sys: &MultiChannelSystem,
    graph: &DirectedGraph,
) -> Result<bool> {
    check_graph(sys, graph)?;
    Ok(transfer_graph(sys)?.union(graph)?.is_strongly_connected())
}

/// Delay lift: every fixed eigenvalue must be zero.
pub fn check_delay_nonzero_fixed(
    sys: &MultiChannelSystem,
    dgraph: &DelayedGraph,
    ni: &[usize],
) -> Result<ConditionReport> {
    let lifted = build_delay_lift(sys, dgraph, ni)?;
    let fixed = fixed_spectrum(&lifted.system)?;
    let failing = failing_from(&fixed, |z| z.norm() > POINT_TOL);
    Ok(report_for(Condition::DelayNonzeroFixed, &lifted, &fixed, failing, Vec::new()))
}

/// Predicted pencil rank of a holding lift (or plain extension):
/// `rank(original) + sum (d_i + 1) n_i + sum_{i in N_{m-s} and s} n_i`.
pub fn predicted_holding_rank(
    graph: &DirectedGraph,
    lifted: &LiftedSystem,
    original_rank: usize,
    s: &[usize],
) -> usize {
    let m = graph.m();
    let comp: Vec<usize> = (0..m).filter(|i| !s.contains(i)).collect();
    let reach = graph.neighborhood_of_set(&comp);
    let chains: usize = (0..m).map(|i| (lifted.depth[i] + 1) * lifted.ni[i]).sum();
    let overlap: usize = s
        .iter()
        .filter(|i| reach.contains(i))
        .map(|&i| lifted.ni[i])
        .sum();
    original_rank + chains + overlap
}

fn identity_checks(
    sys: &MultiChannelSystem,
    graph: &DirectedGraph,
    lifted: &LiftedSystem,
    points: &[C64],
    subsets: &[Vec<usize>],
) -> Result<Vec<RankIdentityCheck>> {
    let mut out = Vec::new();
    for &lambda in points {
        for s in subsets {
            let orig = scaled_rank_c(
                &subset_pencil(sys, lambda, s),
                linmath::PENCIL_RTOL,
                sys.scale() + lambda.norm(),
            )?
            .rank;
            let lifted_rank = scaled_rank_c(
                &subset_pencil(&lifted.system, lambda, s),
                linmath::PENCIL_RTOL,
                lifted.system.scale() + lambda.norm(),
            )?
            .rank;
            out.push(RankIdentityCheck {
                subset: s.clone(),
                lambda,
                lifted_rank,
                predicted_rank: predicted_holding_rank(graph, lifted, orig, s),
            });
        }
    }
    Ok(out)
}

/// State-holding lift: the fixed spectrum must be empty. The closed-form
/// rank decomposition is also verified at every original witness.
pub fn check_state_holding_no_fixed(
    sys: &MultiChannelSystem,
    dgraph: &DelayedGraph,
    ni: &[usize],
) -> Result<ConditionReport> {
    let lifted = build_state_holding_lift(sys, dgraph, ni)?;
    let fixed = fixed_spectrum(&lifted.system)?;
    let base = fixed_spectrum(sys)?;
    let mut checks = Vec::new();
    for f in &base.fixed {
        let subsets: Vec<Vec<usize>> = f.witnesses.iter().map(|w| w.subset.clone()).collect();
        checks.extend(identity_checks(sys, dgraph.graph(), &lifted, &[f.value], &subsets)?);
    }
    let failing = failing_from(&fixed, |_| true);
    Ok(report_for(Condition::StateHolding, &lifted, &fixed, failing, checks))
}

/// Selective holding: the mixed lift must have no fixed spectrum.
pub fn check_selective_holding(
    sys: &MultiChannelSystem,
    dgraph: &DelayedGraph,
    ni: &[usize],
    holders: &BTreeSet<usize>,
    own_raw: bool,
) -> Result<ConditionReport> {
    let lifted = build_selective_holding_lift(sys, dgraph, ni, holders, own_raw)?;
    let fixed = fixed_spectrum(&lifted.system)?;
    let failing = failing_from(&fixed, |_| true);
    Ok(report_for(Condition::SelectiveHolding, &lifted, &fixed, failing, Vec::new()))
}

/// Rank check of the extension decomposition at arbitrary points: the lifted
/// pencil rank equals the original rank plus `sum n_i` plus the dimensions of
/// agents in both `s` and `N_{m-s}`.
pub fn extension_rank_identity(
    sys: &MultiChannelSystem,
    graph: &DirectedGraph,
    ni: &[usize],
    lambda: C64,
    s: &[usize],
) -> Result<RankIdentityCheck> {
    let lifted = build_extension(sys, graph, ni)?;
    Ok(identity_checks(sys, graph, &lifted, &[lambda], &[s.to_vec()])?.remove(0))
}
