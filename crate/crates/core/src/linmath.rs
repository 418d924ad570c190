//! Dense linear-algebra kernel: numerical rank, spectra, PBH tests,
//! controllability indices, Kronecker products and block assembly.
//!
//! Matrices are `nalgebra::DMatrix<f64>`. Eigenvalues and singular values go
//! through `faer`, whose Hessenberg-QR does not stall on permutation-like
//! matrices (shift registers and cyclic graphs produce those constantly).

use faer::Mat;
use nalgebra::{Complex, DMatrix};
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Computed eigenvalues closer than this are treated as one point.
pub const EIG_CLUSTER_TOL: f64 = 1e-8;

/// Relative singular-value cutoff for rank tests on pencils evaluated at
/// computed eigenvalues.
pub const PENCIL_RTOL: f64 = 1e-9;

/// Absolute tolerance for "eigenvalue at a prescribed point" checks.
pub const POINT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankResult {
    pub rank: usize,
    /// Nonincreasing.
    pub singular_values: Vec<f64>,
    pub tolerance_used: f64,
}

impl RankResult {
    /// Smallest singular value counted in the rank, if any.
    pub fn smallest_kept(&self) -> Option<f64> {
        self.rank.checked_sub(1).map(|k| self.singular_values[k])
    }

    /// Largest singular value treated as zero, if any.
    pub fn largest_dropped(&self) -> Option<f64> {
        self.singular_values.get(self.rank).copied()
    }
}

pub fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} has non-finite entries")))
    }
}

fn ensure_finite_c(m: &CMatrix, what: &str) -> Result<()> {
    if m.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} has non-finite entries")))
    }
}

fn to_faer(m: &Matrix) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn to_faer_c(m: &CMatrix) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn to_complex(m: &Matrix) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

/// `max(rows, cols) * eps * sigma_max`.
pub fn default_rank_tol(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    to_faer(m)
        .singular_values()
        .map_err(|e| Error::Numerical(format!("svd: {e:?}")))
}

pub fn singular_values_c(m: &CMatrix) -> Result<Vec<f64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    to_faer_c(m)
        .singular_values()
        .map_err(|e| Error::Numerical(format!("svd: {e:?}")))
}

fn rank_from_sv(sv: Vec<f64>, rows: usize, cols: usize, tol: Option<f64>) -> RankResult {
    let smax = sv.first().copied().unwrap_or(0.0);
    let tol = tol.unwrap_or_else(|| default_rank_tol(rows, cols, smax));
    let rank = sv.iter().filter(|&&s| s > tol).count();
    RankResult {
        rank,
        singular_values: sv,
        tolerance_used: tol,
    }
}

/// Rank as the number of singular values above `tol` (absolute). Without a
/// tolerance the `max(rows, cols) * eps * sigma_max` rule applies.
pub fn numerical_rank(m: &Matrix, tol: Option<f64>) -> Result<RankResult> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::invalid("rank of an empty matrix"));
    }
    ensure_finite(m, "matrix")?;
    let sv = singular_values(m)?;
    Ok(rank_from_sv(sv, m.nrows(), m.ncols(), tol))
}

/// Complex counterpart of [`numerical_rank`]; empty matrices have rank 0.
pub fn numerical_rank_c(m: &CMatrix, tol: Option<f64>) -> Result<RankResult> {
    ensure_finite_c(m, "matrix")?;
    let sv = singular_values_c(m)?;
    Ok(rank_from_sv(sv, m.nrows(), m.ncols(), tol))
}

/// Rank with cutoff `rtol * sigma_max`.
pub fn relative_rank_c(m: &CMatrix, rtol: f64) -> Result<RankResult> {
    ensure_finite_c(m, "matrix")?;
    let sv = singular_values_c(m)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    Ok(rank_from_sv(sv, m.nrows(), m.ncols(), Some(rtol * smax)))
}

/// Rank with cutoff `rtol * max(sigma_max, scale)`. The floor keeps a pencil
/// made only of rounding noise (e.g. `lambda I - A` with `A = lambda I`) from
/// being judged relative to its own noise level; `scale` should bound the
/// size of the problem the matrix came from.
pub fn scaled_rank_c(m: &CMatrix, rtol: f64, scale: f64) -> Result<RankResult> {
    ensure_finite_c(m, "matrix")?;
    let sv = singular_values_c(m)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    Ok(rank_from_sv(sv, m.nrows(), m.ncols(), Some(rtol * smax.max(scale))))
}

pub fn relative_rank(m: &Matrix, rtol: f64) -> Result<RankResult> {
    ensure_finite(m, "matrix")?;
    let sv = singular_values(m)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    Ok(rank_from_sv(sv, m.nrows(), m.ncols(), Some(rtol * smax)))
}

/// Eigenvalues with algebraic multiplicity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Spectrum {
    pub eigenvalues: Vec<C64>,
}

impl Spectrum {
    pub fn new(mut eigenvalues: Vec<C64>) -> Self {
        sort_complex(&mut eigenvalues);
        Spectrum { eigenvalues }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Largest real part (continuous-time decay rate bound).
    pub fn abscissa(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest modulus (discrete-time decay rate bound).
    pub fn radius(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// One representative (the cluster mean) per group of eigenvalues lying
    /// within `tol` of each other.
    pub fn distinct(&self, tol: f64) -> Vec<C64> {
        cluster(&self.eigenvalues, tol)
            .into_iter()
            .map(|c| c.center)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Cluster {
    pub center: C64,
    pub multiplicity: usize,
}

/// Single-linkage clustering of complex points. Output is sorted by
/// (re, im); centers with |im| <= tol are snapped to the real axis.
pub fn cluster(points: &[C64], tol: f64) -> Vec<Cluster> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut i = i;
        while p[i] != r {
            let next = p[i];
            p[i] = r;
            i = next;
        }
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (points[i] - points[j]).norm() <= tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[b] = a;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<C64>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(points[i]);
    }
    let mut out: Vec<Cluster> = groups
        .into_values()
        .map(|g| {
            let k = g.len();
            let mut center = g.iter().sum::<C64>() / k as f64;
            if center.im.abs() <= tol {
                center.im = 0.0;
            }
            Cluster {
                center,
                multiplicity: k,
            }
        })
        .collect();
    out.sort_by(|a, b| cmp_complex(&a.center, &b.center));
    out
}

fn cmp_complex(a: &C64, b: &C64) -> std::cmp::Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

pub fn sort_complex(v: &mut [C64]) {
    v.sort_by(cmp_complex);
}

fn dense_eigenvalues(m: &Matrix) -> Result<Vec<C64>> {
    to_faer(m)
        .eigenvalues()
        .map_err(|e| Error::Numerical(format!("eigenvalue iteration: {e:?}")))
}

/// Eigenvalues with multiplicity. The matrix is first permuted to block
/// triangular form along the strongly connected components of its sparsity
/// graph, so structurally decoupled eigenvalues (shift registers, triangular
/// parts) come out exactly.
pub fn spectrum(m: &Matrix) -> Result<Spectrum> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid(format!(
            "spectrum of a non-square {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    ensure_finite(m, "matrix")?;
    let n = m.nrows();
    let mut g = DiGraph::<(), ()>::with_capacity(n, n);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if i != j && m[(i, j)] != 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut eig = Vec::with_capacity(n);
    for comp in petgraph::algo::tarjan_scc(&g) {
        let mut idx: Vec<usize> = comp.iter().map(|v| v.index()).collect();
        idx.sort_unstable();
        if idx.len() == 1 {
            eig.push(C64::new(m[(idx[0], idx[0])], 0.0));
        } else {
            let block = Matrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])]);
            eig.extend(dense_eigenvalues(&block)?);
        }
    }
    Ok(Spectrum::new(eig))
}

/// `[lambda*I - A, B]` as a complex matrix.
pub fn ctrb_pencil(a: &Matrix, b: &Matrix, lambda: C64) -> CMatrix {
    let n = a.nrows();
    let mut p = CMatrix::zeros(n, n + b.ncols());
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] = -C64::new(a[(i, j)], 0.0);
        }
        p[(i, i)] += lambda;
        for j in 0..b.ncols() {
            p[(i, n + j)] = C64::new(b[(i, j)], 0.0);
        }
    }
    p
}

fn check_pair(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::invalid("A must be square"));
    }
    if b.nrows() != a.nrows() {
        return Err(Error::invalid(format!(
            "B has {} rows, A is {}x{}",
            b.nrows(),
            a.nrows(),
            a.ncols()
        )));
    }
    ensure_finite(a, "A")?;
    ensure_finite(b, "B")
}

/// Smallest normalized PBH margin `min_lambda sigma_n([lambda I - A, B]) / sigma_1`
/// over the eigenvalues of `A`. Zero for uncontrollable pairs.
pub fn pbh_ctrb_margin(a: &Matrix, b: &Matrix) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(1.0);
    }
    let mut margin = f64::INFINITY;
    for lambda in spectrum(a)?.distinct(EIG_CLUSTER_TOL) {
        let sv = singular_values_c(&ctrb_pencil(a, b, lambda))?;
        let smax = sv.first().copied().unwrap_or(0.0);
        let sn = sv.get(n - 1).copied().unwrap_or(0.0);
        margin = margin.min(if smax > 0.0 { sn / smax } else { 0.0 });
    }
    Ok(margin)
}

/// Hautus test: `rank [lambda I - A, B] = n` at every eigenvalue of `A`.
/// `rtol` is relative to the pencil's largest singular value, floored at
/// `|lambda| + ||A|| + ||B||`.
pub fn pbh_controllable(a: &Matrix, b: &Matrix, rtol: Option<f64>) -> Result<bool> {
    check_pair(a, b)?;
    let n = a.nrows();
    let rtol = rtol.unwrap_or(PENCIL_RTOL);
    let size = a.norm() + b.norm();
    for lambda in spectrum(a)?.distinct(EIG_CLUSTER_TOL) {
        if scaled_rank_c(&ctrb_pencil(a, b, lambda), rtol, size + lambda.norm())?.rank < n {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn pbh_observable(c: &Matrix, a: &Matrix, rtol: Option<f64>) -> Result<bool> {
    if c.ncols() != a.ncols() {
        return Err(Error::invalid(format!(
            "C has {} columns, A is {}x{}",
            c.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }
    pbh_controllable(&a.transpose(), &c.transpose(), rtol)
}

/// Orthonormal basis for the range of `m`, keeping singular directions above `tol`.
pub fn orth(m: &Matrix, tol: f64) -> Result<Matrix> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Matrix::zeros(m.nrows(), 0));
    }
    let svd = to_faer(m)
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("svd: {e:?}")))?;
    let s = svd.S().column_vector();
    let u = svd.U();
    let keep = (0..s.nrows()).filter(|&k| s[k] > tol).count();
    Ok(Matrix::from_fn(m.nrows(), keep, |i, j| u[(i, j)]))
}

/// Orthonormal basis (columns) of the right null space of a complex matrix:
/// right singular vectors whose singular value is at most `rtol * sigma_max`.
pub fn null_space_c(m: &CMatrix, rtol: f64) -> Result<CMatrix> {
    let cols = m.ncols();
    if m.nrows() == 0 {
        return Ok(CMatrix::identity(cols, cols));
    }
    let svd = to_faer_c(m)
        .svd()
        .map_err(|e| Error::Numerical(format!("svd: {e:?}")))?;
    let s = svd.S().column_vector();
    let v = svd.V();
    let smax = if s.nrows() > 0 { s[0].re } else { 0.0 };
    let tol = rtol * smax;
    let first_null = (0..s.nrows()).filter(|&k| s[k].re > tol).count();
    let k = cols - first_null;
    Ok(CMatrix::from_fn(cols, k, |i, j| v[(i, first_null + j)]))
}

/// `[B, AB, ..., A^{k-1} B]`.
pub fn controllability_matrix(a: &Matrix, b: &Matrix, k: usize) -> Matrix {
    let n = a.nrows();
    let p = b.ncols();
    let mut out = Matrix::zeros(n, p * k);
    let mut blk = b.clone();
    for i in 0..k {
        out.view_mut((0, i * p), (n, p)).copy_from(&blk);
        blk = a * blk;
    }
    out
}

/// Smallest `k` with `rank [B, AB, ..., A^{k-1}B] = n`, computed on an
/// orthonormalized block Krylov sequence.
pub fn controllability_index(a: &Matrix, b: &Matrix, rtol: Option<f64>) -> Result<usize> {
    check_pair(a, b)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(0);
    }
    let rtol = rtol.unwrap_or(PENCIL_RTOL);
    let bscale = b.norm();
    let mut newest = orth(b, rtol * bscale)?;
    if newest.ncols() == 0 {
        return Err(Error::domain("pair is not controllable (B = 0)"));
    }
    let mut basis = newest.clone();
    let ascale = a.norm();
    let mut k = 1;
    while basis.ncols() < n {
        let mut w = a * &newest;
        for _ in 0..2 {
            let proj = &basis * (basis.transpose() * &w);
            w -= proj;
        }
        newest = orth(&w, rtol * ascale)?;
        if newest.ncols() == 0 {
            return Err(Error::domain(format!(
                "pair is not controllable (reachable dimension {} < {n})",
                basis.ncols()
            )));
        }
        basis = hcat(n, &[&basis, &newest]);
        k += 1;
    }
    Ok(k)
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Matrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s != 0.0 {
                out.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * s));
            }
        }
    }
    out
}

/// `exp(A * dt)` by scaling and squaring.
pub fn matrix_exponential_step(a: &Matrix, dt: f64) -> Result<Matrix> {
    if a.nrows() != a.ncols() {
        return Err(Error::invalid("matrix exponential of a non-square matrix"));
    }
    ensure_finite(a, "matrix")?;
    if !dt.is_finite() {
        return Err(Error::invalid("time step must be finite"));
    }
    Ok((a * dt).exp())
}

/// Horizontal concatenation; `rows` fixes the height when every block is empty.
pub fn hcat(rows: usize, blocks: &[&Matrix]) -> Matrix {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), rows);
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Vertical concatenation; `cols` fixes the width when every block is empty.
pub fn vcat(cols: usize, blocks: &[&Matrix]) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        debug_assert_eq!(b.ncols(), cols);
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

pub fn block_diag(blocks: &[&Matrix]) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Result of pairing two eigenvalue lists by minimum total distance.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumMatch {
    /// `(index in computed, index in target)`.
    pub pairs: Vec<(usize, usize)>,
    pub max_abs_error: f64,
    /// `|computed - target| / max(|target|, 1)`.
    pub max_rel_error: f64,
}

/// Minimum-cost bipartite matching of `computed` against `target` on
/// `|a - b|`. Lists must have equal length.
pub fn match_spectra(computed: &[C64], target: &[C64]) -> Result<SpectrumMatch> {
    if computed.len() != target.len() {
        return Err(Error::invalid(format!(
            "cannot match {} eigenvalues against {}",
            computed.len(),
            target.len()
        )));
    }
    let n = computed.len();
    let cost: Vec<Vec<f64>> = computed
        .iter()
        .map(|a| target.iter().map(|b| (a - b).norm()).collect())
        .collect();
    let assign = hungarian(&cost);
    let mut pairs = Vec::with_capacity(n);
    let (mut max_abs, mut max_rel) = (0.0f64, 0.0f64);
    for (i, &j) in assign.iter().enumerate() {
        let e = cost[i][j];
        max_abs = max_abs.max(e);
        max_rel = max_rel.max(e / target[j].norm().max(1.0));
        pairs.push((i, j));
    }
    Ok(SpectrumMatch {
        pairs,
        max_abs_error: max_abs,
        max_rel_error: max_rel,
    })
}

/// Square assignment problem, O(n^3) potentials method. Returns the column
/// assigned to each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    row_to_col
}

/// True when every element has a conjugate partner within `tol`
/// (multiplicities respected).
pub fn is_conjugate_closed(values: &[C64], tol: f64) -> bool {
    let conj: Vec<C64> = values.iter().map(|z| z.conj()).collect();
    match match_spectra(values, &conj) {
        Ok(m) => m.max_abs_error <= tol,
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(r: usize, c: usize, v: &[f64]) -> Matrix {
        Matrix::from_row_slice(r, c, v)
    }

    #[test]
    fn rank_identity_and_zero() {
        assert_eq!(numerical_rank(&Matrix::identity(3, 3), None).unwrap().rank, 3);
        let z = numerical_rank(&Matrix::zeros(4, 5), None).unwrap();
        assert_eq!(z.rank, 0);
        assert_eq!(z.singular_values.len(), 4);
    }

    #[test]
    fn rank_rejects_nan_and_empty() {
        let mut a = Matrix::identity(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(numerical_rank(&a, None), Err(Error::InvalidInput(_))));
        assert!(numerical_rank(&Matrix::zeros(0, 3), None).is_err());
    }

    #[test]
    fn spectrum_examples() {
        let d = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let s = spectrum(&d).unwrap();
        let re: Vec<f64> = s.eigenvalues.iter().map(|z| z.re).collect();
        assert_eq!(re, vec![1.0, 2.0, 3.0]);

        // (lambda - 1)^3
        let a = m(3, 3, &[1., 0., 0., 0., 1., 0., 0., 1., 1.]);
        for z in spectrum(&a).unwrap().eigenvalues {
            assert!((z - C64::new(1.0, 0.0)).norm() < 1e-12);
        }

        let r = m(2, 2, &[0., -1., 1., 0.]);
        let s = spectrum(&r).unwrap();
        assert!((s.eigenvalues[0] - C64::new(0.0, -1.0)).norm() < 1e-12);
        assert!((s.eigenvalues[1] - C64::new(0.0, 1.0)).norm() < 1e-12);

        assert!(spectrum(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn spectrum_of_cyclic_permutation() {
        let n = 8;
        let p = Matrix::from_fn(n, n, |i, j| if i == (j + 1) % n { 1.0 } else { 0.0 });
        let s = spectrum(&p).unwrap();
        assert_eq!(s.len(), n);
        for z in &s.eigenvalues {
            assert!((z.norm() - 1.0).abs() < 1e-12);
            assert!((z.powu(8) - C64::new(1.0, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn shift_register_eigenvalues_are_exact_zeros() {
        let n = 6;
        let s = Matrix::from_fn(n, n, |i, j| if i == j + 1 { 1.0 } else { 0.0 });
        assert!(spectrum(&s).unwrap().eigenvalues.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn pbh_examples() {
        assert!(pbh_controllable(&Matrix::zeros(1, 1), &Matrix::identity(1, 1), None).unwrap());
        let a = m(2, 2, &[1., 0., 0., 2.]);
        let b = m(2, 1, &[1., 0.]);
        assert!(!pbh_controllable(&a, &b, None).unwrap());
        assert!(!pbh_observable(&b.transpose(), &a, None).unwrap());
        assert!(pbh_observable(&m(1, 2, &[1., 1.]), &a, None).unwrap());
        assert!(pbh_controllable(&a, &m(3, 1, &[1., 1., 1.]), None).is_err());
    }

    #[test]
    fn controllability_index_examples() {
        assert_eq!(
            controllability_index(&Matrix::zeros(1, 1), &Matrix::identity(1, 1), None).unwrap(),
            1
        );
        let shift = Matrix::from_fn(3, 3, |i, j| if i == j + 1 { 1.0 } else { 0.0 });
        let e1 = m(3, 1, &[1., 0., 0.]);
        assert_eq!(controllability_index(&shift, &e1, None).unwrap(), 3);
        let a = m(2, 2, &[1., 0., 0., 2.]);
        assert!(matches!(
            controllability_index(&a, &m(2, 1, &[1., 0.]), None),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn kron_examples() {
        assert_eq!(
            kron(&Matrix::identity(2, 2), &Matrix::identity(3, 3)),
            Matrix::identity(6, 6)
        );
        let b1 = m(2, 1, &[1., 0.]);
        let k = kron(&b1, &Matrix::identity(2, 2));
        assert_eq!(k, m(4, 2, &[1., 0., 0., 1., 0., 0., 0., 0.]));
    }

    #[test]
    fn expm_examples() {
        assert_eq!(
            matrix_exponential_step(&Matrix::zeros(3, 3), 0.7).unwrap(),
            Matrix::identity(3, 3)
        );
        let d = m(2, 2, &[-1., 0., 0., 2.]);
        let e = matrix_exponential_step(&d, 0.5).unwrap();
        assert!((e[(0, 0)] - (-0.5f64).exp()).abs() < 1e-14);
        assert!((e[(1, 1)] - 1.0f64.exp()).abs() < 1e-13);
        let nil = m(2, 2, &[0., 1., 0., 0.]);
        let e = matrix_exponential_step(&nil, 1.0).unwrap();
        assert!((e - m(2, 2, &[1., 1., 0., 1.])).norm() < 1e-14);
    }

    #[test]
    fn matching_pairs_unordered_lists() {
        let a = vec![C64::new(1.0, 0.0), C64::new(-2.0, 1.0), C64::new(-2.0, -1.0)];
        let b = vec![C64::new(-2.0, -1.0), C64::new(1.0 + 1e-9, 0.0), C64::new(-2.0, 1.0)];
        let mt = match_spectra(&a, &b).unwrap();
        assert!(mt.max_abs_error < 2e-9);
        assert!(is_conjugate_closed(&a, 1e-12));
        assert!(!is_conjugate_closed(&[C64::new(0.0, 1.0)], 1e-12));
    }

    #[test]
    fn null_space_dimension() {
        let a = to_complex(&m(2, 4, &[1., 0., 0., 0., 0., 1., 0., 0.]));
        let ns = null_space_c(&a, 1e-12).unwrap();
        assert_eq!(ns.ncols(), 2);
        assert!((&a * &ns).norm() < 1e-12);
    }
}
