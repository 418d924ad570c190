//! Distributed controller synthesis: decentralized completion, the compact
//! error system of the distributed observer, generic gain sampling, channel
//! compensators and closed-loop assembly.

pub mod compensator;
pub mod placement;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use compensator::{
    assignment_error, compensated_closed_loop, compensator_order, design_channel_compensator,
    Compensator, CompensatorMode, Plant, ASSIGN_RTOL,
};
pub use placement::{place_observer, place_poles};

use crate::error::{Error, Result, StageExt};
use crate::extend::{
    build_delay_lift, build_extension, build_selective_holding_lift, build_state_holding_lift,
    check_delay_nonzero_fixed, check_selective_holding, check_state_holding_no_fixed,
    check_weak_graph_condition, ConditionReport, LiftedSystem,
};
use crate::graphs::{DelayedGraph, DirectedGraph};
use crate::linmath::{
    block_diag, controllability_index, hcat, kron, match_spectra, pbh_controllable, pbh_ctrb_margin,
    pbh_observable, spectrum, vcat, Matrix, SpectrumMatch, C64, POINT_TOL,
};
use crate::mcsys::{
    check_graph, fixed_spectrum, jointly_controllable, jointly_observable, transfer_graph,
    MultiChannelSystem, TimeDomain,
};

/// Bound on fresh random draws in every sampling loop.
pub const MAX_ATTEMPTS: usize = 50;
/// Gain multipliers tried for the graph-coupling part of `H_i`.
pub const G_GRID: [f64; 10] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
/// PBH margin at which a decentralized completion is accepted without
/// further draws.
pub const COMPLETION_MARGIN: f64 = 0.05;
/// Tolerance of the multiset comparison behind the separation check.
pub const SEPARATION_TOL: f64 = 1e-7;

/// Where the closed-loop spectrum has to lie.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Region {
    /// Every real part at most `-alpha`.
    Continuous { alpha: f64 },
    /// Every modulus at most `rho`.
    Discrete { rho: f64 },
}

impl Region {
    fn validate(&self, domain: TimeDomain) -> Result<()> {
        match (*self, domain) {
            (Region::Continuous { alpha }, TimeDomain::Continuous) if alpha.is_finite() => Ok(()),
            (Region::Discrete { rho }, TimeDomain::Discrete) if rho > 0.0 && rho.is_finite() => Ok(()),
            (Region::Continuous { .. }, TimeDomain::Discrete) => {
                Err(Error::invalid("discrete-time systems take a spectral radius target"))
            }
            (Region::Discrete { .. }, TimeDomain::Continuous) => {
                Err(Error::invalid("continuous-time systems take a decay rate target"))
            }
            _ => Err(Error::invalid("rate target must be finite (and rho positive)")),
        }
    }

    /// `count` distinct points strictly inside the region: conjugate pairs
    /// fanning out from the boundary (closely spaced real targets make the
    /// closed-loop eigenvalues needlessly sensitive), plus one real point
    /// when `count` is odd. `shift` moves the whole set further inside so
    /// that two sets can be kept disjoint.
    pub fn targets_shifted(&self, count: usize, shift: f64) -> Vec<C64> {
        let pairs = count / 2;
        let mut out = Vec::with_capacity(count);
        match *self {
            Region::Continuous { alpha } => {
                for k in 0..pairs {
                    let z = C64::new(-(alpha + 0.5 + shift + 0.3 * k as f64), 0.5 + 0.4 * k as f64);
                    out.extend([z, z.conj()]);
                }
                if count % 2 == 1 {
                    out.push(C64::new(-(alpha + 0.25 + shift), 0.0));
                }
            }
            Region::Discrete { rho } => {
                let r0 = rho * (0.8 - 0.3 * shift.min(1.0));
                for k in 0..pairs {
                    let frac = (k as f64 + 0.5) / pairs as f64;
                    let r = r0 * (0.35 + 0.65 * frac);
                    let theta = std::f64::consts::PI * (0.1 + 0.8 * frac);
                    let z = C64::from_polar(r, theta);
                    out.extend([z, z.conj()]);
                }
                if count % 2 == 1 {
                    out.push(C64::new(0.2 * r0, 0.0));
                }
            }
        }
        out
    }

    pub fn targets(&self, count: usize) -> Vec<C64> {
        self.targets_shifted(count, 0.0)
    }

    /// Default spectrum for a compensated plant of order `n` with a
    /// compensator of order `nu`. A full-order compensator gets two
    /// conjugate-closed halves, one per placement.
    pub fn compensated_targets(&self, n: usize, nu: usize, shift: f64) -> Vec<C64> {
        if nu == n && n > 0 {
            let mut t = self.targets_shifted(n, shift);
            t.extend(self.targets_shifted(n, shift + 0.2));
            t
        } else {
            self.targets_shifted(n + nu, shift)
        }
    }

    pub fn contains(&self, z: C64) -> bool {
        match *self {
            Region::Continuous { alpha } => z.re <= -alpha + 1e-9,
            Region::Discrete { rho } => z.norm() <= rho + 1e-9,
        }
    }

    /// Spectral abscissa (continuous) or radius (discrete).
    pub fn measure(&self, eig: &[C64]) -> f64 {
        match self {
            Region::Continuous { .. } => eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max),
            Region::Discrete { .. } => eig.iter().map(|z| z.norm()).fold(0.0, f64::max),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

/// Spanning-tree matrix with zero row sums whose pair `(G, b_q)` is
/// controllable: `g_ii = v_i`, `g_{i, parent(i)} = -v_i`. The default
/// weights are `v_i = i` (1-based) with `v_q = 0`.
#[allow(non_snake_case)]
pub fn construct_G(graph: &DirectedGraph, q: usize, v: Option<&[f64]>) -> Result<Matrix> {
    let m = graph.m();
    if q >= m {
        return Err(Error::invalid(format!("channel {} outside 1..{m}", q + 1)));
    }
    if !graph.is_strongly_connected() {
        return Err(Error::domain("neighbor graph is not strongly connected"));
    }
    let weights: Vec<f64> = match v {
        Some(v) => {
            if v.len() != m {
                return Err(Error::invalid(format!("{} weights for {m} agents", v.len())));
            }
            if v[q] != 0.0 {
                return Err(Error::invalid("the root weight must be zero"));
            }
            for i in 0..m {
                if i == q {
                    continue;
                }
                if v[i] == 0.0 || !v[i].is_finite() {
                    return Err(Error::invalid("non-root weights must be finite and nonzero"));
                }
                if (0..i).any(|j| j != q && v[j] == v[i]) {
                    return Err(Error::invalid("non-root weights must be distinct"));
                }
            }
            v.to_vec()
        }
        None => (0..m).map(|i| if i == q { 0.0 } else { (i + 1) as f64 }).collect(),
    };
    let tree = graph.spanning_tree(q)?;
    let mut g = Matrix::zeros(m, m);
    for i in 0..m {
        if let Some(p) = tree.parent[i] {
            g[(i, i)] = weights[i];
            g[(i, p)] = -weights[i];
        }
    }
    Ok(g)
}

/// Error dynamics of the distributed observer in stacked coordinates
/// `e = (e_1, ..., e_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactErrorSystem {
    pub n: usize,
    pub m: usize,
    /// `I (x) (A + sum B_j F_j) - Q`.
    pub a_tilde: Matrix,
    /// `b_i (x) I_n`.
    pub b_tilde: Vec<Matrix>,
    /// `C_i B~_i'`: agent `i`'s own output error.
    pub c_hat: Vec<Matrix>,
    /// Stacked `(b_i' - b_j') (x) I_n` over the neighbors `j != i`, ascending.
    pub c_tilde: Vec<Matrix>,
    /// Block matrix with `(i, j)` block `B_j F_j`.
    pub q: Matrix,
    /// Neighbors of each agent excluding itself.
    pub neighbors: Vec<Vec<usize>>,
    pub output_dims: Vec<usize>,
}

/// Output-injection and neighbor-coupling gains of the distributed observer.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorGains {
    /// `K_i`, `n x q_i`.
    pub k: Vec<Matrix>,
    /// `H_ij` for each neighbor `j != i`, in the order of `neighbors[i]`.
    pub h: Vec<Vec<Matrix>>,
}

impl CompactErrorSystem {
    pub fn dim(&self) -> usize {
        self.n * self.m
    }

    /// `A~ + sum_i B~_i (K_i C^_i + H_i C~_i)`.
    pub fn error_matrix(&self, gains: &ErrorGains) -> Matrix {
        let mut a = self.a_tilde.clone();
        for i in 0..self.m {
            let mut inj = &gains.k[i] * &self.c_hat[i];
            if !self.neighbors[i].is_empty() {
                let hs: Vec<&Matrix> = gains.h[i].iter().collect();
                inj += hcat(self.n, &hs) * &self.c_tilde[i];
            }
            a += &self.b_tilde[i] * inj;
        }
        a
    }

    /// Measurement `y~_q = [C_q e_q; e_q - e_j, j in N_q]`.
    pub fn output_map(&self, q: usize) -> Matrix {
        vcat(self.dim(), &[&self.c_hat[q], &self.c_tilde[q]])
    }

    pub fn zero_gains(&self) -> ErrorGains {
        ErrorGains {
            k: self.output_dims.iter().map(|&p| Matrix::zeros(self.n, p)).collect(),
            h: self
                .neighbors
                .iter()
                .map(|nb| vec![Matrix::zeros(self.n, self.n); nb.len()])
                .collect(),
        }
    }
}

pub fn build_compact_error_system(
    sys: &MultiChannelSystem,
    graph: &DirectedGraph,
    f: &[Matrix],
) -> Result<CompactErrorSystem> {
    check_graph(sys, graph)?;
    let (n, m) = (sys.n(), sys.m());
    if f.len() != m {
        return Err(Error::invalid(format!("{} feedback gains for {m} channels", f.len())));
    }
    for (i, (fi, ch)) in f.iter().zip(&sys.channels).enumerate() {
        if fi.shape() != (ch.b.ncols(), n) {
            return Err(Error::invalid(format!(
                "F_{} is {}x{}, expected {}x{n}",
                i + 1,
                fi.nrows(),
                fi.ncols(),
                ch.b.ncols()
            )));
        }
    }
    let bf: Vec<Matrix> = sys.channels.iter().zip(f).map(|(ch, fi)| &ch.b * fi).collect();
    let mut acl = sys.a.clone();
    for x in &bf {
        acl += x;
    }
    let mut q = Matrix::zeros(n * m, n * m);
    for i in 0..m {
        for (j, x) in bf.iter().enumerate() {
            q.view_mut((i * n, j * n), (n, n)).copy_from(x);
        }
    }
    let a_tilde = kron(&Matrix::identity(m, m), &acl) - &q;
    let unit = |i: usize| Matrix::from_fn(m, 1, |r, _| if r == i { 1.0 } else { 0.0 });
    let eye = Matrix::identity(n, n);
    let b_tilde: Vec<Matrix> = (0..m).map(|i| kron(&unit(i), &eye)).collect();
    let c_hat: Vec<Matrix> = (0..m)
        .map(|i| &sys.channels[i].c * b_tilde[i].transpose())
        .collect();
    let neighbors: Vec<Vec<usize>> = (0..m)
        .map(|i| graph.neighbors(i).into_iter().filter(|&j| j != i).collect())
        .collect();
    let c_tilde: Vec<Matrix> = (0..m)
        .map(|i| {
            let rows: Vec<Matrix> = neighbors[i]
                .iter()
                .map(|&j| kron(&(unit(i) - unit(j)).transpose(), &eye))
                .collect();
            let refs: Vec<&Matrix> = rows.iter().collect();
            vcat(n * m, &refs)
        })
        .collect();
    Ok(CompactErrorSystem {
        n,
        m,
        a_tilde,
        b_tilde,
        c_hat,
        c_tilde,
        q,
        neighbors,
        output_dims: sys.output_dims(),
    })
}

/// Verification record of a returned gain sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainSample {
    pub seed: u64,
    pub attempts: usize,
    /// Multiplier of the graph-coupling part that passed.
    pub g: f64,
    /// Grid values tried and rejected, across all attempts.
    pub rejected_g: Vec<f64>,
    /// Controllability index of `(M, B~_q)` for each `q`.
    pub ctrb_index: Vec<usize>,
    /// Observability through `y~_q` for each `q`.
    pub observable: Vec<bool>,
}

fn verify_error_gains(ces: &CompactErrorSystem, gains: &ErrorGains) -> Result<Option<(Vec<usize>, Vec<bool>)>> {
    let mm = ces.error_matrix(gains);
    let mut idx = Vec::with_capacity(ces.m);
    let mut obs = Vec::with_capacity(ces.m);
    for q in 0..ces.m {
        match controllability_index(&mm, &ces.b_tilde[q], None) {
            Ok(k) if k == ces.m => idx.push(k),
            _ => return Ok(None),
        }
        if !pbh_observable(&ces.output_map(q), &mm, None)? {
            return Ok(None);
        }
        obs.push(true);
    }
    Ok(Some((idx, obs)))
}

/// Draws `K_i` and `H_ij` until, for every channel `q`, the open-loop error
/// system is controllable from `B~_q` with controllability index `m` and
/// observable through `y~_q`. `H_i = g (h_i (x) I_n) + P_i` where the scalar
/// couplings `h_i` come from [`construct_G`], `P_i` and `K_i` are uniform
/// draws and `g` runs over [`G_GRID`].
pub fn sample_generic_gains(
    ces: &CompactErrorSystem,
    graph: &DirectedGraph,
    seed: u64,
) -> Result<(ErrorGains, GainSample)> {
    let (n, m) = (ces.n, ces.m);
    if graph.m() != m {
        return Err(Error::invalid("graph and error system disagree on the number of agents"));
    }
    if !graph.is_strongly_connected() {
        return Err(Error::domain("neighbor graph is not strongly connected"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rejected = Vec::new();
    let eye = Matrix::identity(n, n);
    for attempt in 0..MAX_ATTEMPTS {
        let g_mat = construct_G(graph, attempt % m, None)?;
        let spread = if attempt == 0 { 0.0 } else { 0.5 };
        let k: Vec<Matrix> = ces.output_dims.iter().map(|&p| uniform(&mut rng, n, p)).collect();
        let mut coupling = Vec::with_capacity(m);
        let mut perturb = Vec::with_capacity(m);
        for i in 0..m {
            let mut hi = Vec::new();
            let mut pi = Vec::new();
            for &j in &ces.neighbors[i] {
                hi.push(-g_mat[(i, j)] + spread * rng.random_range(-1.0..=1.0));
                pi.push(uniform(&mut rng, n, n));
            }
            coupling.push(hi);
            perturb.push(pi);
        }
        for &g in &G_GRID {
            let h: Vec<Vec<Matrix>> = (0..m)
                .map(|i| {
                    coupling[i]
                        .iter()
                        .zip(&perturb[i])
                        .map(|(&hij, p)| &eye * (g * hij) + p)
                        .collect()
                })
                .collect();
            let gains = ErrorGains { k: k.clone(), h };
            match verify_error_gains(ces, &gains)? {
                Some((ctrb_index, observable)) => {
                    return Ok((
                        gains,
                        GainSample {
                            seed,
                            attempts: attempt + 1,
                            g,
                            rejected_g: rejected,
                            ctrb_index,
                            observable,
                        },
                    ))
                }
                None => rejected.push(g),
            }
        }
    }
    Err(Error::Synthesis(format!(
        "no gain sample passed verification after {MAX_ATTEMPTS} attempts ({} grid points rejected)",
        rejected.len()
    )))
}

/// Static decentralized gains that make the plant controllable and
/// observable through every single channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    /// `F_i`, `p_i x q_i`.
    pub f: Vec<Matrix>,
    pub attempts: usize,
    pub seed: u64,
    /// Smallest normalized PBH margin over all channels, both directions.
    pub margin: f64,
}

pub fn decentralized_completion(sys: &MultiChannelSystem, seed: u64) -> Result<Completion> {
    let fixed = fixed_spectrum(sys)?;
    if !fixed.is_empty() {
        let vals: Vec<String> = fixed
            .fixed_eigenvalues()
            .iter()
            .map(|z| format!("{:.6}{:+.6}i", z.re, z.im))
            .collect();
        return Err(Error::domain(format!(
            "system has fixed eigenvalues {}",
            vals.join(", ")
        )));
    }
    if !transfer_graph(sys)?.is_strongly_connected() {
        return Err(Error::domain("transfer graph is not strongly connected"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Completion> = None;
    for attempt in 0..MAX_ATTEMPTS {
        let f: Vec<Matrix> = sys
            .channels
            .iter()
            .map(|ch| {
                if attempt == 0 {
                    Matrix::zeros(ch.b.ncols(), ch.c.nrows())
                } else {
                    uniform(&mut rng, ch.b.ncols(), ch.c.nrows())
                }
            })
            .collect();
        let acl = sys.static_closed_loop(&f)?;
        let mut ok = true;
        for ch in &sys.channels {
            if !pbh_controllable(&acl, &ch.b, None)? || !pbh_observable(&ch.c, &acl, None)? {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        // Barely controllable channels force huge compensator gains, so keep
        // drawing until the weakest channel clears a margin.
        let mut margin = f64::INFINITY;
        for ch in &sys.channels {
            margin = margin
                .min(pbh_ctrb_margin(&acl, &ch.b)?)
                .min(pbh_ctrb_margin(&acl.transpose(), &ch.c.transpose())?);
        }
        let cand = Completion {
            f,
            attempts: attempt + 1,
            seed,
            margin,
        };
        if margin >= COMPLETION_MARGIN {
            return Ok(cand);
        }
        if best.as_ref().is_none_or(|b| margin > b.margin) {
            best = Some(cand);
        }
    }
    best.ok_or_else(|| {
        Error::Synthesis(format!(
            "no decentralized completion found in {MAX_ATTEMPTS} draws"
        ))
    })
}

/// Distributed observer-based controller for one plant and neighbor graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedController {
    pub q: usize,
    /// State feedback `u_i = F_i x_i`.
    pub f: Vec<Matrix>,
    /// Final output-injection gains (channel part already added at `q`).
    pub k: Vec<Matrix>,
    /// Final neighbor couplings `H_ij`, keyed by neighbor.
    pub h: Vec<BTreeMap<usize, Matrix>>,
    /// Channel controller `z' = A z + K (C_q x_q - y_q) + sum H_j (x_q - x_j)`,
    /// feeding `C z` into agent `q`'s estimator.
    pub channel_a: Matrix,
    pub k_bar: Matrix,
    pub h_bar: BTreeMap<usize, Matrix>,
    pub channel_c: Matrix,
    pub mode: CompensatorMode,
    /// Spectrum assigned to `A + sum B_i F_i`.
    pub state_targets: Vec<C64>,
    /// Spectrum assigned to the error system together with the channel controller.
    pub lambda: Vec<C64>,
    pub sample: GainSample,
}

impl DistributedController {
    pub fn nu(&self) -> usize {
        self.channel_a.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct ObserverDesign {
    pub controller: DistributedController,
    pub error_system: CompactErrorSystem,
    /// Closed loop over `(x, e_1..e_m, z)`.
    pub closed_loop: Matrix,
    /// The `(e, z)` block.
    pub error_closed_loop: Matrix,
    pub assignment: SpectrumMatch,
    pub region: Region,
}

#[derive(Debug, Clone)]
pub struct DesignOptions {
    pub region: Region,
    pub mode: CompensatorMode,
    /// Explicit error-system spectrum; generated inside the region when absent.
    pub lambda: Option<Vec<C64>>,
    pub seed: u64,
}

/// Centralized placement of `A + sum B_i F_i` on the stacked input matrix,
/// partitioned into per-channel gains.
pub fn state_feedback(sys: &MultiChannelSystem, targets: &[C64]) -> Result<Vec<Matrix>> {
    let f = place_poles(&sys.a, &sys.b_all(), targets)?;
    let mut out = Vec::with_capacity(sys.m());
    let mut row = 0;
    for p in sys.input_dims() {
        out.push(f.rows(row, p).into_owned());
        row += p;
    }
    Ok(out)
}

/// Full observer-based pipeline: state feedback, error system, generic
/// gains, channel compensator and the split of its feedthrough and input
/// matrices into agent-`q` gains and channel-controller gains.
/// When `q` is `None` every channel is tried and the one with the smallest
/// assignment error is kept.
pub fn assemble_observer_controller(
    sys: &MultiChannelSystem,
    graph: &DirectedGraph,
    q: Option<usize>,
    opts: &DesignOptions,
) -> Result<ObserverDesign> {
    sys.validate()?;
    check_graph(sys, graph)?;
    opts.region.validate(sys.domain)?;
    let (n, m) = (sys.n(), sys.m());
    let candidates = channel_candidates(q, m)?;
    if !graph.is_strongly_connected() {
        return Err(Error::domain("neighbor graph is not strongly connected"));
    }
    for (i, ch) in sys.channels.iter().enumerate() {
        if ch.b.ncols() == 0 || ch.b.iter().all(|&x| x == 0.0) {
            return Err(Error::domain(format!("B_{} is zero", i + 1)));
        }
        if ch.c.nrows() == 0 || ch.c.iter().all(|&x| x == 0.0) {
            return Err(Error::domain(format!("C_{} is zero", i + 1)));
        }
    }
    if !jointly_controllable(sys)? {
        return Err(Error::domain("system is not jointly controllable"));
    }
    if !jointly_observable(sys)? {
        return Err(Error::domain("system is not jointly observable"));
    }

    let plant_targets = opts.region.targets(n);
    let f = state_feedback(sys, &plant_targets).stage("state feedback")?;
    let ces = build_compact_error_system(sys, graph, &f)?;
    let (gains, sample) = sample_generic_gains(&ces, graph, opts.seed).stage("gain sampling")?;

    let error_a = ces.error_matrix(&gains);
    let (q, plant, comp, lambda) = best_channel(&candidates, opts, |q| {
        let plant = Plant {
            a: error_a.clone(),
            b: ces.b_tilde[q].clone(),
            c: ces.output_map(q),
        };
        let nu = compensator_order(&plant, opts.mode)?;
        let lambda = match &opts.lambda {
            Some(l) => l.clone(),
            // Shifted so that it stays disjoint from the plant targets.
            None => opts.region.compensated_targets(n * m, nu, 0.15),
        };
        Ok((plant, lambda))
    })
    .stage("channel compensator")?;

    // Split D_bar and B_bar along y~_q = [C_q e_q; e_q - e_j].
    let pq = ces.output_dims[q];
    let mut k = gains.k.clone();
    k[q] += comp.d.columns(0, pq);
    let mut h: Vec<BTreeMap<usize, Matrix>> = Vec::with_capacity(m);
    for i in 0..m {
        let mut map = BTreeMap::new();
        for (idx, &j) in ces.neighbors[i].iter().enumerate() {
            let mut hij = gains.h[i][idx].clone();
            if i == q {
                hij += comp.d.columns(pq + idx * n, n);
            }
            map.insert(j, hij);
        }
        h.push(map);
    }
    let k_bar = comp.b.columns(0, pq).into_owned();
    let h_bar: BTreeMap<usize, Matrix> = ces.neighbors[q]
        .iter()
        .enumerate()
        .map(|(idx, &j)| (j, comp.b.columns(pq + idx * n, n).into_owned()))
        .collect();

    let error_closed_loop = compensated_closed_loop(&plant, &comp);
    let assignment = match_spectra(&spectrum(&error_closed_loop)?.eigenvalues, &lambda)?;
    if assignment.max_rel_error > ASSIGN_RTOL {
        return Err(Error::Numerical(format!(
            "error-system spectrum misses the target by {:.2e}",
            assignment.max_rel_error
        )));
    }

    // (x, e, z): x' = (A + sum B F) x + sum B_i F_i e_i.
    let mut acl = sys.a.clone();
    let mut coupling = Matrix::zeros(n, n * m);
    for (i, (ch, fi)) in sys.channels.iter().zip(&f).enumerate() {
        let bf = &ch.b * fi;
        acl += &bf;
        coupling.view_mut((0, i * n), (n, n)).copy_from(&bf);
    }
    let mut closed_loop = block_diag(&[&acl, &error_closed_loop]);
    closed_loop.view_mut((0, n), (n, n * m)).copy_from(&coupling);

    let controller = DistributedController {
        q,
        f,
        k,
        h,
        channel_a: comp.a.clone(),
        k_bar,
        h_bar,
        channel_c: comp.c.clone(),
        mode: opts.mode,
        state_targets: plant_targets,
        lambda,
        sample,
    };
    Ok(ObserverDesign {
        controller,
        error_system: ces,
        closed_loop,
        error_closed_loop,
        assignment,
        region: opts.region,
    })
}

/// Which augmentation carries the observer-free design.
#[derive(Debug, Clone, PartialEq)]
pub enum LiftSpec {
    Extension(DirectedGraph),
    Delay(DelayedGraph),
    StateHolding(DelayedGraph),
    Selective {
        graph: DelayedGraph,
        holders: BTreeSet<usize>,
        own_raw: bool,
    },
}

impl LiftSpec {
    pub fn graph(&self) -> &DirectedGraph {
        match self {
            LiftSpec::Extension(g) => g,
            LiftSpec::Delay(d) | LiftSpec::StateHolding(d) => d.graph(),
            LiftSpec::Selective { graph, .. } => graph.graph(),
        }
    }
}

/// Observer-free controller: static decentralized gains on the augmented
/// system plus one dynamic compensator at channel `q`.
#[derive(Debug, Clone)]
pub struct ObserverFreeDesign {
    pub lifted: LiftedSystem,
    pub condition: ConditionReport,
    pub q: usize,
    /// Static gains `F_i` on the augmented channels.
    pub f: Vec<Matrix>,
    pub completion_attempts: usize,
    pub compensator: Compensator,
    pub lambda: Vec<C64>,
    /// Closed loop over (augmented state, compensator state).
    pub closed_loop: Matrix,
    pub assignment: SpectrumMatch,
    pub region: Region,
    pub seed: u64,
}

pub fn build_lift(sys: &MultiChannelSystem, spec: &LiftSpec, ni: &[usize]) -> Result<LiftedSystem> {
    match spec {
        LiftSpec::Extension(g) => build_extension(sys, g, ni),
        LiftSpec::Delay(d) => build_delay_lift(sys, d, ni),
        LiftSpec::StateHolding(d) => build_state_holding_lift(sys, d, ni),
        LiftSpec::Selective {
            graph,
            holders,
            own_raw,
        } => build_selective_holding_lift(sys, graph, ni, holders, *own_raw),
    }
}

/// Condition report matching the lift kind.
pub fn lift_condition(sys: &MultiChannelSystem, spec: &LiftSpec, ni: &[usize]) -> Result<ConditionReport> {
    match spec {
        LiftSpec::Extension(g) => check_weak_graph_condition(sys, g),
        LiftSpec::Delay(d) => check_delay_nonzero_fixed(sys, d, ni),
        LiftSpec::StateHolding(d) => check_state_holding_no_fixed(sys, d, ni),
        LiftSpec::Selective {
            graph,
            holders,
            own_raw,
        } => check_selective_holding(sys, graph, ni, holders, *own_raw),
    }
}

/// `q = None` picks the best-conditioned channel, as for the observer-based
/// design.
pub fn observer_free_synthesis(
    sys: &MultiChannelSystem,
    spec: &LiftSpec,
    ni: &[usize],
    q: Option<usize>,
    opts: &DesignOptions,
) -> Result<ObserverFreeDesign> {
    sys.validate()?;
    opts.region.validate(sys.domain)?;
    let candidates = channel_candidates(q, sys.m())?;
    let condition = lift_condition(sys, spec, ni).stage("condition check")?;
    if !condition.verdict {
        let what = match spec {
            LiftSpec::Extension(_) => "graph intersection condition for the extension fails",
            LiftSpec::Delay(_) => "delay lift has a nonzero fixed eigenvalue",
            LiftSpec::StateHolding(_) => "state-holding lift has fixed eigenvalues",
            LiftSpec::Selective { .. } => "selective-holding lift has fixed eigenvalues",
        };
        return Err(Error::domain(what));
    }
    let lifted = build_lift(sys, spec, ni)?;
    if matches!(spec, LiftSpec::Delay(_)) && lifted_has_zero_fixed(&lifted)? {
        return Err(Error::domain(
            "delay lift keeps a fixed eigenvalue at 0; use state holding",
        ));
    }
    let union = transfer_graph(&lifted.system)?.union(spec.graph())?;
    if !union.is_strongly_connected() {
        return Err(Error::domain(
            "transfer graph joined with the neighbor graph is not strongly connected",
        ));
    }
    let completion = decentralized_completion(&lifted.system, opts.seed).stage("decentralized completion")?;
    let acl = lifted.system.static_closed_loop(&completion.f)?;
    let (q, plant, compensator, lambda) = best_channel(&candidates, opts, |q| {
        let ch = &lifted.system.channels[q];
        let plant = Plant {
            a: acl.clone(),
            b: ch.b.clone(),
            c: ch.c.clone(),
        };
        let nu = compensator_order(&plant, opts.mode)?;
        let lambda = match &opts.lambda {
            Some(l) => l.clone(),
            None => opts.region.compensated_targets(plant.n(), nu, 0.0),
        };
        Ok((plant, lambda))
    })
    .stage("channel compensator")?;
    let closed_loop = compensated_closed_loop(&plant, &compensator);
    let assignment = match_spectra(&spectrum(&closed_loop)?.eigenvalues, &lambda)?;
    Ok(ObserverFreeDesign {
        lifted,
        condition,
        q,
        f: completion.f,
        completion_attempts: completion.attempts,
        compensator,
        lambda,
        closed_loop,
        assignment,
        region: opts.region,
        seed: opts.seed,
    })
}

fn channel_candidates(q: Option<usize>, m: usize) -> Result<Vec<usize>> {
    match q {
        Some(q) if q >= m => Err(Error::invalid(format!("channel {} outside 1..{m}", q + 1))),
        Some(q) => Ok(vec![q]),
        None => Ok((0..m).collect()),
    }
}

/// Designs a compensator at every candidate channel and keeps the most
/// accurate one. The first error is returned when all candidates fail.
fn best_channel(
    candidates: &[usize],
    opts: &DesignOptions,
    setup: impl Fn(usize) -> Result<(Plant, Vec<C64>)>,
) -> Result<(usize, Plant, Compensator, Vec<C64>)> {
    let mut best: Option<(f64, usize, Plant, Compensator, Vec<C64>)> = None;
    let mut first_err = None;
    for &q in candidates {
        let attempt = setup(q).and_then(|(plant, lambda)| {
            let k = design_channel_compensator(&plant, &lambda, opts.mode, opts.seed)?;
            let err = assignment_error(&plant, &k, &lambda)?;
            Ok((err, plant, k, lambda))
        });
        match attempt {
            Ok((err, plant, k, lambda)) => {
                if best.as_ref().is_none_or(|b| err < b.0) {
                    best = Some((err, q, plant, k, lambda));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some((_, q, plant, k, lambda)) => Ok((q, plant, k, lambda)),
        None => Err(first_err.unwrap_or_else(|| Error::invalid("no channel to design at"))),
    }
}

fn lifted_has_zero_fixed(lifted: &LiftedSystem) -> Result<bool> {
    Ok(fixed_spectrum(&lifted.system)?
        .fixed_eigenvalues()
        .iter()
        .any(|z| z.norm() <= POINT_TOL))
}

/// Multiset equality of two spectra after optimal matching.
pub fn same_spectrum(a: &[C64], b: &[C64], tol: f64) -> Result<bool> {
    if a.len() != b.len() {
        return Ok(false);
    }
    Ok(match_spectra(a, b)?.max_rel_error <= tol)
}

#[cfg(test)]
mod tests;
