//! Eigenstructure pole placement for multi-input pairs.
//!
//! Each closed-loop eigenvector is drawn from the admissible subspace
//! `{v : (A - lambda I) v in range B}`; a few sweeps of the
//! Kautsky-Nichols-Van Dooren rank-one update push every vector away from
//! the span of the others so that the eigenvector matrix stays well
//! conditioned. The gain is then `F = W V^{-1}`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linmath::{
    ctrb_pencil, ensure_finite, is_conjugate_closed, null_space_c, orth, pbh_controllable, CMatrix,
    Matrix, C64, PENCIL_RTOL,
};

const SWEEPS: usize = 8;
/// Largest tolerated imaginary residue in the recovered real gain.
const IMAG_TOL: f64 = 1e-8;

/// Representative index of each pole with its conjugate partner (if any).
fn conjugate_pairs(poles: &[C64]) -> Result<Vec<(usize, Option<usize>)>> {
    let scale = poles.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let tol = 1e-9 * scale;
    let mut used = vec![false; poles.len()];
    let mut out = Vec::new();
    for k in 0..poles.len() {
        if used[k] {
            continue;
        }
        used[k] = true;
        if poles[k].im.abs() <= tol {
            out.push((k, None));
            continue;
        }
        let partner = (0..poles.len())
            .filter(|&j| !used[j])
            .min_by(|&a, &b| {
                let da = (poles[a] - poles[k].conj()).norm();
                let db = (poles[b] - poles[k].conj()).norm();
                da.total_cmp(&db)
            })
            .filter(|&j| (poles[j] - poles[k].conj()).norm() <= tol.max(1e-7 * scale))
            .ok_or_else(|| Error::invalid("target spectrum is not closed under conjugation"))?;
        used[partner] = true;
        out.push((k, Some(partner)));
    }
    Ok(out)
}

/// Unit vector orthogonal to all columns of `x` except column `skip`.
fn orthogonal_direction(x: &CMatrix, skip: usize) -> DVector<C64> {
    let n = x.nrows();
    let cols: Vec<usize> = (0..x.ncols()).filter(|&c| c != skip).collect();
    let others = CMatrix::from_fn(n, cols.len(), |i, j| x[(i, cols[j])]);
    // Left singular vector for the smallest singular value of `others`
    // (or any direction outside its span when it has fewer than n columns).
    let gram = others.adjoint();
    let ns = null_space_c(&gram, 1e-10).unwrap_or_else(|_| CMatrix::zeros(n, 0));
    if ns.ncols() > 0 {
        return ns.column(0).into_owned();
    }
    let svd = others.svd(true, false);
    let u = svd.u.expect("requested");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    u.column(idx).into_owned()
}

/// Gain `F` with `spectrum(A + B F) = poles`. `poles` must be closed under
/// conjugation and have length `n`; `(A, B)` must be controllable. Repeated
/// poles are accepted up to the rank of `B`.
pub fn place_poles(a: &Matrix, b: &Matrix, poles: &[C64]) -> Result<Matrix> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::invalid("place_poles: A must be square and B must match"));
    }
    ensure_finite(a, "A")?;
    ensure_finite(b, "B")?;
    if poles.len() != n {
        return Err(Error::invalid(format!(
            "{} target poles for a state of dimension {n}",
            poles.len()
        )));
    }
    if n == 0 {
        return Ok(Matrix::zeros(b.ncols(), 0));
    }
    if !is_conjugate_closed(poles, 1e-9) {
        return Err(Error::invalid("target spectrum is not closed under conjugation"));
    }
    if !pbh_controllable(a, b, None)? {
        return Err(Error::domain("pair is not controllable; poles cannot be assigned"));
    }
    // Work with an orthonormal basis of range(B) and map back at the end.
    let bscale = b.norm();
    let bo = orth(b, PENCIL_RTOL * bscale * (n.max(b.ncols()) as f64))?;
    let r = bo.ncols();
    let pairs = conjugate_pairs(poles)?;

    // Admissible subspace for every pole: columns of S_k, with W_k giving the
    // matching input direction.
    let mut spaces: Vec<(CMatrix, CMatrix)> = Vec::with_capacity(n);
    for &lambda in poles {
        // (A - lambda I) v + Bo w = 0, i.e. [lambda I - A, -Bo] [v; w] = 0.
        let pencil = ctrb_pencil(a, &(-&bo), lambda);
        let ns = null_space_c(&pencil, 1e-10)?;
        if ns.ncols() == 0 {
            return Err(Error::Numerical("empty admissible eigenvector space".into()));
        }
        let v = ns.rows(0, n).into_owned();
        let w = ns.rows(n, r).into_owned();
        // Orthonormalize the v-part and carry w along.
        let qr = v.clone().qr();
        let rr = qr.r();
        let q = qr.q();
        let rinv = rr
            .try_inverse()
            .ok_or_else(|| Error::Numerical("degenerate admissible subspace".into()))?;
        spaces.push((q, w * rinv));
    }

    // Initial choice: a fixed mix of the basis vectors (deterministic).
    let mut coeffs: Vec<DVector<C64>> = spaces
        .iter()
        .enumerate()
        .map(|(k, (s, _))| {
            let d = s.ncols();
            let mut c = DVector::from_fn(d, |i, _| C64::new(1.0 + ((i + k) % 3) as f64 * 0.37, 0.0));
            let nrm = (s * &c).norm();
            c /= C64::new(nrm, 0.0);
            c
        })
        .collect();
    let mut x = CMatrix::zeros(n, n);
    let refresh = |x: &mut CMatrix, coeffs: &[DVector<C64>], spaces: &[(CMatrix, CMatrix)]| {
        for &(k, partner) in &pairs {
            let v = &spaces[k].0 * &coeffs[k];
            x.set_column(k, &v);
            if let Some(p) = partner {
                x.set_column(p, &v.map(|z| z.conj()));
            }
        }
    };
    refresh(&mut x, &coeffs, &spaces);

    for _ in 0..SWEEPS {
        for &(k, partner) in &pairs {
            let s = &spaces[k].0;
            if s.ncols() == 1 {
                continue;
            }
            let y = orthogonal_direction(&x, k);
            let mut c = s.adjoint() * y;
            let nrm = c.norm();
            if nrm < 1e-12 {
                continue;
            }
            c /= C64::new(nrm, 0.0);
            let v = s * &c;
            x.set_column(k, &v);
            if let Some(p) = partner {
                x.set_column(p, &v.map(|z| z.conj()));
            }
            coeffs[k] = c;
        }
    }
    refresh(&mut x, &coeffs, &spaces);

    let mut wmat = CMatrix::zeros(r, n);
    for &(k, partner) in &pairs {
        let w = &spaces[k].1 * &coeffs[k];
        wmat.set_column(k, &w);
        if let Some(p) = partner {
            wmat.set_column(p, &w.map(|z| z.conj()));
        }
    }
    let xinv = x
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("closed-loop eigenvector matrix is singular".into()))?;
    let fc = wmat * xinv;
    let imag = fc.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let real = fc.map(|z| z.re);
    if imag > IMAG_TOL * real.norm().max(1.0) {
        return Err(Error::Numerical(format!(
            "placement gain has imaginary residue {imag:.2e}"
        )));
    }
    // Bo = B P with P = pinv(B) Bo, so B (P Fo) = Bo Fo.
    let pinv = b
        .clone()
        .pseudo_inverse(PENCIL_RTOL * bscale)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(pinv * bo * real)
}

/// Output injection `L` with `spectrum(A + L C) = poles`.
pub fn place_observer(a: &Matrix, c: &Matrix, poles: &[C64]) -> Result<Matrix> {
    Ok(place_poles(&a.transpose(), &c.transpose(), poles)?.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmath::{match_spectra, spectrum};

    fn check(a: &Matrix, b: &Matrix, poles: &[C64]) -> f64 {
        let f = place_poles(a, b, poles).unwrap();
        let sp = spectrum(&(a + b * f)).unwrap();
        match_spectra(&sp.eigenvalues, poles).unwrap().max_rel_error
    }

    #[test]
    fn scalar() {
        let a = Matrix::from_element(1, 1, 1.0);
        let b = Matrix::from_element(1, 1, 1.0);
        let f = place_poles(&a, &b, &[C64::new(-1.0, 0.0)]).unwrap();
        assert!((f[(0, 0)] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn double_integrator_complex_pair() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let poles = [C64::new(-1.0, 2.0), C64::new(-1.0, -2.0)];
        assert!(check(&a, &b, &poles) < 1e-10);
    }

    #[test]
    fn multi_input_repeated() {
        let a = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, -2.0, 0.5]);
        let b = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let poles = [C64::new(-2.0, 0.0), C64::new(-2.0, 0.0), C64::new(-3.0, 0.0)];
        assert!(check(&a, &b, &poles) < 1e-9);
    }

    #[test]
    fn rank_deficient_b() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        let b = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 2.0]);
        let poles = [C64::new(-1.0, 0.0), C64::new(-4.0, 0.0)];
        assert!(check(&a, &b, &poles) < 1e-10);
    }

    #[test]
    fn uncontrollable_is_domain_error() {
        let a = Matrix::identity(2, 2);
        let b = Matrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let err = place_poles(&a, &b, &[C64::new(-1.0, 0.0), C64::new(-2.0, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn observer_dual() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let c = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let poles = [C64::new(-3.0, 0.0), C64::new(-4.0, 0.0)];
        let l = place_observer(&a, &c, &poles).unwrap();
        let sp = spectrum(&(&a + l * &c)).unwrap();
        assert!(match_spectra(&sp.eigenvalues, &poles).unwrap().max_rel_error < 1e-10);
    }
}
