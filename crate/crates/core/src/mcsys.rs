//! Multi-channel LTI systems: joint controllability/observability, the
//! transfer graph and the fixed-spectrum rank test.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::DirectedGraph;
use crate::linmath::{
    self, cluster, ensure_finite, hcat, scaled_rank_c, vcat, CMatrix, Matrix, C64,
    EIG_CLUSTER_TOL, PENCIL_RTOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeDomain {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    /// n x p_i
    pub b: Matrix,
    /// q_i x n
    pub c: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelSystem {
    pub domain: TimeDomain,
    pub a: Matrix,
    pub channels: Vec<Channel>,
}

impl MultiChannelSystem {
    pub fn new(domain: TimeDomain, a: Matrix, channels: Vec<Channel>) -> Result<Self> {
        let sys = MultiChannelSystem {
            domain,
            a,
            channels,
        };
        sys.validate()?;
        Ok(sys)
    }

    /// Convenience constructor from `(B_i, C_i)` pairs.
    pub fn from_pairs(domain: TimeDomain, a: Matrix, pairs: Vec<(Matrix, Matrix)>) -> Result<Self> {
        let channels = pairs.into_iter().map(|(b, c)| Channel { b, c }).collect();
        Self::new(domain, a, channels)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if n == 0 || self.a.ncols() != n {
            return Err(Error::invalid(format!(
                "A must be square and nonempty, got {}x{}",
                self.a.nrows(),
                self.a.ncols()
            )));
        }
        if self.channels.is_empty() {
            return Err(Error::invalid("system needs at least one channel"));
        }
        ensure_finite(&self.a, "A")?;
        for (i, ch) in self.channels.iter().enumerate() {
            if ch.b.nrows() != n {
                return Err(Error::invalid(format!(
                    "B{} has {} rows, expected {n}",
                    i + 1,
                    ch.b.nrows()
                )));
            }
            if ch.c.ncols() != n {
                return Err(Error::invalid(format!(
                    "C{} has {} columns, expected {n}",
                    i + 1,
                    ch.c.ncols()
                )));
            }
            ensure_finite(&ch.b, &format!("B{}", i + 1))?;
            ensure_finite(&ch.c, &format!("C{}", i + 1))?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.channels.len()
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.channels.iter().map(|c| c.b.ncols()).collect()
    }

    pub fn output_dims(&self) -> Vec<usize> {
        self.channels.iter().map(|c| c.c.nrows()).collect()
    }

    /// `[B_{i1} ... B_{ik}]` for the listed channels.
    pub fn b_of(&self, s: &[usize]) -> Matrix {
        let blocks: Vec<&Matrix> = s.iter().map(|&i| &self.channels[i].b).collect();
        hcat(self.n(), &blocks)
    }

    /// Stacked `C_i` for the listed channels.
    pub fn c_of(&self, s: &[usize]) -> Matrix {
        let blocks: Vec<&Matrix> = s.iter().map(|&i| &self.channels[i].c).collect();
        vcat(self.n(), &blocks)
    }

    pub fn b_all(&self) -> Matrix {
        self.b_of(&(0..self.m()).collect::<Vec<_>>())
    }

    pub fn c_all(&self) -> Matrix {
        self.c_of(&(0..self.m()).collect::<Vec<_>>())
    }

    /// `A + sum_i B_i F_i C_i` for static output feedback gains `F_i` (p_i x q_i).
    pub fn static_closed_loop(&self, gains: &[Matrix]) -> Result<Matrix> {
        if gains.len() != self.m() {
            return Err(Error::invalid(format!(
                "{} gains for {} channels",
                gains.len(),
                self.m()
            )));
        }
        let mut a = self.a.clone();
        for (ch, f) in self.channels.iter().zip(gains) {
            if f.shape() != (ch.b.ncols(), ch.c.nrows()) {
                return Err(Error::invalid("static gain has the wrong shape"));
            }
            a += &ch.b * f * &ch.c;
        }
        Ok(a)
    }

    /// Same plant with the outputs replaced by `C_bar_i = [C_j; j in N_i]`,
    /// i.e. each agent also measures what its neighbors measure.
    pub fn with_shared_outputs(&self, graph: &DirectedGraph) -> Result<MultiChannelSystem> {
        check_graph(self, graph)?;
        let channels = (0..self.m())
            .map(|i| Channel {
                b: self.channels[i].b.clone(),
                c: self.c_of(&graph.neighbors(i)),
            })
            .collect();
        MultiChannelSystem::new(self.domain, self.a.clone(), channels)
    }

    /// `||A|| + ||B|| + ||C||` (Frobenius), the reference size for rank cutoffs.
    pub fn scale(&self) -> f64 {
        self.a.norm() + self.b_all().norm() + self.c_all().norm()
    }

    pub fn to_json(&self) -> SystemJson {
        SystemJson {
            domain: self.domain,
            a: rows_of(&self.a),
            channels: self
                .channels
                .iter()
                .map(|c| ChannelJson {
                    b: rows_of(&c.b),
                    c: rows_of(&c.c),
                })
                .collect(),
        }
    }
}

pub(crate) fn check_graph(sys: &MultiChannelSystem, graph: &DirectedGraph) -> Result<()> {
    if graph.m() != sys.m() {
        return Err(Error::invalid(format!(
            "graph has {} vertices but the system has {} channels",
            graph.m(),
            sys.m()
        )));
    }
    Ok(())
}

/// Serialized system: `{"domain":"continuous","A":[[..]],"channels":[{"B":..,"C":..}]}`.
/// A channel with no inputs may write `"B":[]`; one with no outputs `"C":[]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemJson {
    #[serde(default = "default_domain")]
    pub domain: TimeDomain,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub channels: Vec<ChannelJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelJson {
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
}

fn default_domain() -> TimeDomain {
    TimeDomain::Continuous
}

pub fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Row-list to matrix. `rows_if_empty`/`cols_if_empty` fix the shape of the
/// degenerate cases `[]` and `[[],[],..]`.
pub fn matrix_from_rows(
    rows: &[Vec<f64>],
    rows_if_empty: usize,
    cols_if_empty: usize,
    what: &str,
) -> Result<Matrix> {
    if rows.is_empty() {
        return Ok(Matrix::zeros(rows_if_empty, cols_if_empty));
    }
    let c = rows[0].len();
    if rows.iter().any(|r| r.len() != c) {
        return Err(Error::invalid(format!("{what} has ragged rows")));
    }
    let m = Matrix::from_fn(rows.len(), c, |i, j| rows[i][j]);
    ensure_finite(&m, what)?;
    Ok(m)
}

impl SystemJson {
    pub fn to_system(&self) -> Result<MultiChannelSystem> {
        let a = matrix_from_rows(&self.a, 0, 0, "A")?;
        let n = a.nrows();
        let channels = self
            .channels
            .iter()
            .enumerate()
            .map(|(i, ch)| {
                Ok(Channel {
                    b: matrix_from_rows(&ch.b, n, 0, &format!("B{}", i + 1))?,
                    c: matrix_from_rows(&ch.c, 0, n, &format!("C{}", i + 1))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MultiChannelSystem::new(self.domain, a, channels)
    }
}

pub fn jointly_controllable(sys: &MultiChannelSystem) -> Result<bool> {
    linmath::pbh_controllable(&sys.a, &sys.b_all(), None)
}

pub fn jointly_observable(sys: &MultiChannelSystem) -> Result<bool> {
    linmath::pbh_observable(&sys.c_all(), &sys.a, None)
}

/// Relative cutoff for calling a Markov parameter zero.
pub const MARKOV_RTOL: f64 = 1e-9;

/// Arc `j -> i` whenever `C_i (sI - A)^{-1} B_j` is not identically zero,
/// decided on the Markov parameters `C_i A^k B_j`, `k < 2n`.
pub fn transfer_graph(sys: &MultiChannelSystem) -> Result<DirectedGraph> {
    let n = sys.n();
    let m = sys.m();
    let anorm = sys.a.norm();
    let mut g = DirectedGraph::empty(m);
    for j in 0..m {
        let bj = &sys.channels[j].b;
        // A^k B_j, k = 0..2n-1
        let mut powers = Vec::with_capacity(2 * n);
        let mut blk = bj.clone();
        for _ in 0..2 * n {
            powers.push(blk.clone());
            blk = &sys.a * blk;
        }
        for i in 0..m {
            if i == j {
                continue;
            }
            let ci = &sys.channels[i].c;
            let base = ci.norm() * bj.norm();
            let nonzero = powers.iter().enumerate().any(|(k, akb)| {
                let scale = base * anorm.powi(k as i32);
                (ci * akb).norm() > MARKOV_RTOL * scale
            });
            if nonzero {
                g.add_arc(j, i)?;
            }
        }
    }
    Ok(g)
}

/// `[lambda I - A, B_s; C_{m-s}, 0]`.
pub fn subset_pencil(sys: &MultiChannelSystem, lambda: C64, s: &[usize]) -> CMatrix {
    let n = sys.n();
    let comp: Vec<usize> = (0..sys.m()).filter(|i| !s.contains(i)).collect();
    let b = sys.b_of(s);
    let c = sys.c_of(&comp);
    let (p, q) = (b.ncols(), c.nrows());
    let mut pm = CMatrix::zeros(n + q, n + p);
    for i in 0..n {
        for j in 0..n {
            pm[(i, j)] = C64::new(-sys.a[(i, j)], 0.0);
        }
        pm[(i, i)] += lambda;
        for j in 0..p {
            pm[(i, n + j)] = C64::new(b[(i, j)], 0.0);
        }
    }
    for i in 0..q {
        for j in 0..n {
            pm[(n + i, j)] = C64::new(c[(i, j)], 0.0);
        }
    }
    pm
}

/// Subsets of `0..m` as sorted label lists, in binary-counter order.
pub fn all_subsets(m: usize) -> impl Iterator<Item = Vec<usize>> {
    (0u64..(1u64 << m)).map(move |mask| (0..m).filter(|&i| mask >> i & 1 == 1).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedSpectrumOptions {
    /// Largest channel count for exhaustive subset enumeration.
    pub subset_cap: usize,
    /// Rank cutoff relative to the pencil's largest singular value.
    pub rank_rtol: f64,
    /// Eigenvalues of `A` closer than this are tested once.
    pub cluster_tol: f64,
}

impl Default for FixedSpectrumOptions {
    fn default() -> Self {
        FixedSpectrumOptions {
            subset_cap: 16,
            rank_rtol: PENCIL_RTOL,
            cluster_tol: EIG_CLUSTER_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    /// 0-based channel labels, ascending.
    pub subset: Vec<usize>,
    pub rank: usize,
    /// Singular values around the rank cut, for auditing borderline verdicts.
    pub smallest_kept: Option<f64>,
    pub largest_dropped: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedEigenvalue {
    pub value: C64,
    /// Every subset whose pencil drops rank at `value`.
    pub witnesses: Vec<Witness>,
}

impl FixedEigenvalue {
    pub fn min_rank(&self) -> usize {
        self.witnesses.iter().map(|w| w.rank).min().unwrap_or(usize::MAX)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedSpectrumReport {
    pub n: usize,
    pub fixed: Vec<FixedEigenvalue>,
    /// `n - min rank` over all tested pencils; 0 when nothing is fixed.
    pub deficiency_r: usize,
    pub tolerance_rtol: f64,
}

impl FixedSpectrumReport {
    pub fn fixed_eigenvalues(&self) -> Vec<C64> {
        self.fixed.iter().map(|f| f.value).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.fixed.is_empty()
    }
}

pub fn fixed_spectrum(sys: &MultiChannelSystem) -> Result<FixedSpectrumReport> {
    fixed_spectrum_with(sys, &FixedSpectrumOptions::default())
}

/// Exhaustive rank test: `lambda` in the spectrum of `A` is fixed iff
/// `rank [lambda I - A, B_s; C_{m-s}, 0] < n` for some subset `s`.
pub fn fixed_spectrum_with(
    sys: &MultiChannelSystem,
    opts: &FixedSpectrumOptions,
) -> Result<FixedSpectrumReport> {
    sys.validate()?;
    let m = sys.m();
    if m > opts.subset_cap || m >= 63 {
        return Err(Error::Resource(format!(
            "{m} channels exceed the subset enumeration cap of {}",
            opts.subset_cap
        )));
    }
    let n = sys.n();
    let subsets: Vec<Vec<usize>> = all_subsets(m).collect();
    let mut fixed = Vec::new();
    let mut min_rank = n;
    for lambda in linmath::spectrum(&sys.a)?.distinct(opts.cluster_tol) {
        let mut witnesses = Vec::new();
        let scale = sys.scale() + lambda.norm();
        for s in &subsets {
            let rr = scaled_rank_c(&subset_pencil(sys, lambda, s), opts.rank_rtol, scale)?;
            if rr.rank < n {
                min_rank = min_rank.min(rr.rank);
                witnesses.push(Witness {
                    subset: s.clone(),
                    rank: rr.rank,
                    smallest_kept: rr.smallest_kept(),
                    largest_dropped: rr.largest_dropped(),
                });
            }
        }
        if !witnesses.is_empty() {
            fixed.push(FixedEigenvalue {
                value: lambda,
                witnesses,
            });
        }
    }
    Ok(FixedSpectrumReport {
        n,
        fixed,
        deficiency_r: n - min_rank,
        tolerance_rtol: opts.rank_rtol,
    })
}

/// Largest rank deficiency `n - min rank` induced by fixed eigenvalues.
pub fn deficiency_bound(sys: &MultiChannelSystem) -> Result<usize> {
    Ok(fixed_spectrum(sys)?.deficiency_r)
}

/// Matching tolerance of the sampling oracle.
pub const ORACLE_TOL: f64 = 1e-6;

/// Eigenvalues of one closed loop are grouped at this radius and replaced
/// by group means before intersecting; a defective fixed eigenvalue splits
/// by roughly `eps^(1/k)` but its group mean stays accurate. A candidate
/// also survives a draw if a raw eigenvalue matches it, since an unrelated
/// eigenvalue landing inside the group radius shifts the mean.
const ORACLE_GROUP_TOL: f64 = 1e-4;

/// Independent cross-check of [`fixed_spectrum`]: the distinct eigenvalues
/// common to `A + sum B_i F_i C_i` over `trials` seeded draws of `F_i` with
/// entries uniform in `[-1, 1]`.
pub fn fixed_spectrum_sampling_oracle(
    sys: &MultiChannelSystem,
    trials: usize,
    seed: u64,
) -> Result<Vec<C64>> {
    if trials < 2 {
        return Err(Error::invalid("sampling oracle needs at least two trials"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut common: Option<Vec<C64>> = None;
    for _ in 0..trials {
        let gains: Vec<Matrix> = sys
            .channels
            .iter()
            .map(|ch| {
                Matrix::from_fn(ch.b.ncols(), ch.c.nrows(), |_, _| rng.random_range(-1.0..=1.0))
            })
            .collect();
        let acl = sys.static_closed_loop(&gains)?;
        let eig = linmath::spectrum(&acl)?.eigenvalues;
        let centers: Vec<C64> = cluster(&eig, ORACLE_GROUP_TOL).into_iter().map(|c| c.center).collect();
        common = Some(match common {
            None => centers,
            Some(prev) => prev
                .into_iter()
                .filter(|z| centers.iter().chain(&eig).any(|w| (z - w).norm() <= ORACLE_TOL))
                .collect(),
        });
    }
    Ok(common.unwrap_or_default())
}

/// True when two eigenvalue sets agree point-for-point within `tol`.
pub fn same_point_set(a: &[C64], b: &[C64], tol: f64) -> bool {
    let covered = |x: &[C64], y: &[C64]| x.iter().all(|z| y.iter().any(|w| (z - w).norm() <= tol));
    covered(a, b) && covered(b, a)
}

/// Channels that appear in some witness subset, useful for reporting.
pub fn witness_channels(report: &FixedSpectrumReport) -> BTreeSet<usize> {
    report
        .fixed
        .iter()
        .flat_map(|f| f.witnesses.iter().flat_map(|w| w.subset.iter().copied()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples;

    #[test]
    fn example_system_is_jointly_ctrb_obs() {
        let sys = examples::three_channel_system();
        assert!(jointly_controllable(&sys).unwrap());
        assert!(jointly_observable(&sys).unwrap());
    }

    #[test]
    fn decoupled_mode_is_not_jointly_controllable() {
        let a = Matrix::from_row_slice(2, 2, &[1., 0., 0., 2.]);
        let sys = MultiChannelSystem::from_pairs(
            TimeDomain::Continuous,
            a,
            vec![(Matrix::from_row_slice(2, 1, &[1., 0.]), Matrix::identity(2, 2))],
        )
        .unwrap();
        assert!(!jointly_controllable(&sys).unwrap());
    }

    #[test]
    fn original_example_has_fixed_eigenvalue_one() {
        let sys = examples::three_channel_system();
        let rep = fixed_spectrum(&sys).unwrap();
        assert_eq!(rep.fixed.len(), 1);
        assert!((rep.fixed[0].value - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(rep.fixed[0].witnesses.iter().any(|w| w.subset == vec![0, 2]));
    }

    #[test]
    fn shared_output_example_witness_and_rank() {
        let sys = examples::three_channel_system()
            .with_shared_outputs(&examples::cycle_graph())
            .unwrap();
        let rep = fixed_spectrum(&sys).unwrap();
        assert_eq!(rep.fixed.len(), 1);
        let f = &rep.fixed[0];
        assert!((f.value - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert_eq!(f.witnesses.len(), 1);
        assert_eq!(f.witnesses[0].subset, vec![0, 2]);
        assert_eq!(f.witnesses[0].rank, 2);
        assert_eq!(rep.deficiency_r, 1);
        let oracle = fixed_spectrum_sampling_oracle(&sys, 50, 7).unwrap();
        assert!(same_point_set(&oracle, &rep.fixed_eigenvalues(), 1e-6));
    }

    #[test]
    fn zero_inputs_fix_everything_in_oracle() {
        let a = Matrix::from_row_slice(2, 2, &[0., 1., -2., -3.]);
        let sys = MultiChannelSystem::from_pairs(
            TimeDomain::Continuous,
            a.clone(),
            vec![(Matrix::zeros(2, 1), Matrix::zeros(1, 2))],
        )
        .unwrap();
        let got = fixed_spectrum_sampling_oracle(&sys, 5, 1).unwrap();
        let want = linmath::spectrum(&a).unwrap().eigenvalues;
        assert!(same_point_set(&got, &want, 1e-12));
        assert!(transfer_graph(&sys).unwrap().arc_count() == 0);
    }

    #[test]
    fn single_channel_ctrb_obs_has_no_fixed_modes() {
        let a = Matrix::from_row_slice(2, 2, &[0., 1., -2., -3.]);
        let sys = MultiChannelSystem::from_pairs(
            TimeDomain::Continuous,
            a,
            vec![(
                Matrix::from_row_slice(2, 1, &[0., 1.]),
                Matrix::from_row_slice(1, 2, &[1., 0.]),
            )],
        )
        .unwrap();
        assert!(fixed_spectrum(&sys).unwrap().is_empty());
        assert_eq!(deficiency_bound(&sys).unwrap(), 0);
        assert!(fixed_spectrum_sampling_oracle(&sys, 2, 3).unwrap().is_empty());
    }

    #[test]
    fn transfer_graph_chain() {
        // x1' = u1, x2' = x1, y2 = x2: arc 1 -> 2 through C2 A B1.
        let a = Matrix::from_row_slice(2, 2, &[0., 0., 1., 0.]);
        let sys = MultiChannelSystem::from_pairs(
            TimeDomain::Continuous,
            a,
            vec![
                (Matrix::from_row_slice(2, 1, &[1., 0.]), Matrix::zeros(0, 2)),
                (Matrix::zeros(2, 0), Matrix::from_row_slice(1, 2, &[0., 1.])),
            ],
        )
        .unwrap();
        let g = transfer_graph(&sys).unwrap();
        assert_eq!(g.arcs().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn subset_cap_is_enforced() {
        let sys = examples::three_channel_system();
        let opts = FixedSpectrumOptions {
            subset_cap: 2,
            ..Default::default()
        };
        assert!(matches!(fixed_spectrum_with(&sys, &opts), Err(Error::Resource(_))));
    }

    #[test]
    fn json_round_trip() {
        let sys = examples::three_channel_system();
        let text = serde_json::to_string(&sys.to_json()).unwrap();
        let back: SystemJson = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_system().unwrap(), sys);
        let empty_b = r#"{"domain":"discrete","A":[[1]],"channels":[{"B":[],"C":[[1]]}]}"#;
        let s: SystemJson = serde_json::from_str(empty_b).unwrap();
        let s = s.to_system().unwrap();
        assert_eq!(s.channels[0].b.shape(), (1, 0));
        let ragged = r#"{"A":[[1,2],[3]],"channels":[{"B":[[1],[0]],"C":[[1,0]]}]}"#;
        let r: SystemJson = serde_json::from_str(ragged).unwrap();
        assert!(r.to_system().is_err());
    }
}
