//! Dynamic output compensators that assign the full closed-loop spectrum of a
//! single-channel plant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::placement::{place_observer, place_poles};
use crate::error::{Error, Result};
use crate::linmath::{
    controllability_index, ensure_finite, hcat, is_conjugate_closed, match_spectra, spectrum, vcat,
    Matrix, C64,
};

/// Maximal tolerated matched relative eigenvalue error of an assignment.
pub const ASSIGN_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CompensatorMode {
    /// Observer-based compensator of the plant's own order.
    #[default]
    Full,
    /// Order `min(controllability index, observability index) - 1`.
    Minimal,
}

impl std::str::FromStr for CompensatorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(CompensatorMode::Full),
            "minimal" => Ok(CompensatorMode::Minimal),
            other => Err(Error::invalid(format!("unknown compensator mode '{other}'"))),
        }
    }
}

/// `x' = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

impl Plant {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    fn transpose(&self) -> Plant {
        Plant {
            a: self.a.transpose(),
            b: self.c.transpose(),
            c: self.b.transpose(),
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if self.a.ncols() != n || self.b.nrows() != n || self.c.ncols() != n {
            return Err(Error::invalid("plant matrices have inconsistent shapes"));
        }
        ensure_finite(&self.a, "A")?;
        ensure_finite(&self.b, "B")?;
        ensure_finite(&self.c, "C")
    }

    fn ctrb_index(&self) -> Result<usize> {
        controllability_index(&self.a, &self.b, None)
            .map_err(|_| Error::domain("plant is not controllable"))
    }

    fn obs_index(&self) -> Result<usize> {
        controllability_index(&self.a.transpose(), &self.c.transpose(), None)
            .map_err(|_| Error::domain("plant is not observable"))
    }
}

/// `u = C z + D y`, `z' = A z + B y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Compensator {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub mode: CompensatorMode,
}

impl Compensator {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    fn transpose(self) -> Compensator {
        Compensator {
            a: self.a.transpose(),
            b: self.c.transpose(),
            c: self.b.transpose(),
            d: self.d.transpose(),
            mode: self.mode,
        }
    }
}

/// Closed loop over `(x, z)`: `[[A + B D C, B C_k], [B_k C, A_k]]`.
pub fn compensated_closed_loop(plant: &Plant, k: &Compensator) -> Matrix {
    let n = plant.n();
    let nu = k.order();
    let top = hcat(n, &[&(&plant.a + &plant.b * &k.d * &plant.c), &(&plant.b * &k.c)]);
    let bottom = hcat(nu, &[&(&k.b * &plant.c), &k.a]);
    vcat(n + nu, &[&top, &bottom])
}

/// Compensator order the given mode produces for this plant.
pub fn compensator_order(plant: &Plant, mode: CompensatorMode) -> Result<usize> {
    plant.validate()?;
    let kc = plant.ctrb_index()?;
    let ko = plant.obs_index()?;
    Ok(match mode {
        CompensatorMode::Full => plant.n(),
        CompensatorMode::Minimal => kc.min(ko).saturating_sub(1),
    })
}

/// Designs a compensator of the order fixed by `mode` such that the closed
/// loop has spectrum `targets` (within [`ASSIGN_RTOL`]). `seed` drives the
/// random output/input combinations of the minimal mode.
pub fn design_channel_compensator(
    plant: &Plant,
    targets: &[C64],
    mode: CompensatorMode,
    seed: u64,
) -> Result<Compensator> {
    let nu = compensator_order(plant, mode)?;
    if targets.len() != plant.n() + nu {
        return Err(Error::invalid(format!(
            "{} target eigenvalues for plant order {} plus compensator order {nu}",
            targets.len(),
            plant.n()
        )));
    }
    if !is_conjugate_closed(targets, 1e-9) {
        return Err(Error::invalid("target spectrum is not closed under conjugation"));
    }
    let k = match mode {
        CompensatorMode::Full => full_order(plant, targets)?,
        CompensatorMode::Minimal => {
            if plant.ctrb_index()? <= plant.obs_index()? {
                minimal_order(plant, targets, nu, seed)?
            } else {
                minimal_order(&plant.transpose(), targets, nu, seed)?.transpose()
            }
        }
    };
    let err = assignment_error(plant, &k, targets)?;
    if err > ASSIGN_RTOL {
        let hint = match mode {
            CompensatorMode::Minimal => "; retry with the full-order mode",
            CompensatorMode::Full => "",
        };
        return Err(Error::Numerical(format!(
            "assigned spectrum misses the target by {err:.2e} (relative){hint}"
        )));
    }
    Ok(k)
}

/// Matched relative error between the closed-loop spectrum and `targets`.
pub fn assignment_error(plant: &Plant, k: &Compensator, targets: &[C64]) -> Result<f64> {
    let sp = spectrum(&compensated_closed_loop(plant, k))?;
    Ok(match_spectra(&sp.eigenvalues, targets)?.max_rel_error)
}

/// Gauss-Newton on the closed-loop eigenvalues, matched to `targets`, as a
/// function of the real parameters `theta`. Returns the final matched
/// relative error.
fn refine(theta: &mut Vec<f64>, build: &dyn Fn(&[f64]) -> Matrix, targets: &[C64]) -> Result<f64> {
    let residual = |th: &[f64]| -> Result<(Vec<C64>, Matrix, f64)> {
        let eig = spectrum(&build(th))?.eigenvalues;
        let mt = match_spectra(&eig, targets)?;
        let mut ordered = vec![C64::new(0.0, 0.0); targets.len()];
        for &(i, j) in &mt.pairs {
            ordered[j] = eig[i];
        }
        let r = Matrix::from_fn(2 * targets.len(), 1, |k, _| {
            let d = ordered[k / 2] - targets[k / 2];
            if k % 2 == 0 {
                d.re
            } else {
                d.im
            }
        });
        Ok((ordered, r, mt.max_rel_error))
    };
    let (mut base, mut r, mut err) = residual(theta)?;
    for _ in 0..30 {
        if err <= 1e-12 {
            break;
        }
        let mut jac = Matrix::zeros(r.nrows(), theta.len());
        for k in 0..theta.len() {
            let h = 1e-7 * theta[k].abs().max(1.0);
            let mut th = theta.clone();
            th[k] += h;
            let eig = spectrum(&build(&th))?.eigenvalues;
            for (i, j) in match_spectra(&eig, &base)?.pairs {
                let d = (eig[i] - base[j]) / h;
                jac[(2 * j, k)] = d.re;
                jac[(2 * j + 1, k)] = d.im;
            }
        }
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.max();
        let step = svd
            .solve(&(-&r), 1e-12 * smax)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..12 {
            let th: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
            let (b2, r2, e2) = residual(&th)?;
            if r2.norm() < r.norm() {
                *theta = th;
                (base, r, err) = (b2, r2, e2);
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok(err)
}

/// Splits `targets` into two conjugate-closed halves of sizes `n` and the rest.
/// The given order is kept when both halves are already conjugate-closed.
fn split_targets(targets: &[C64], n: usize) -> Result<(Vec<C64>, Vec<C64>)> {
    let (head, tail) = targets.split_at(n);
    if is_conjugate_closed(head, 1e-9) && is_conjugate_closed(tail, 1e-9) {
        return Ok((head.to_vec(), tail.to_vec()));
    }
    let scale = targets.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let mut reals = Vec::new();
    let mut pairs = Vec::new();
    for &z in targets {
        if z.im.abs() <= 1e-9 * scale {
            reals.push(C64::new(z.re, 0.0));
        } else if z.im > 0.0 {
            pairs.push(z);
        }
    }
    let mut first = Vec::with_capacity(n);
    let mut second = Vec::new();
    for z in pairs {
        if first.len() + 2 <= n {
            first.extend([z, z.conj()]);
        } else {
            second.extend([z, z.conj()]);
        }
    }
    for z in reals {
        if first.len() < n {
            first.push(z);
        } else {
            second.push(z);
        }
    }
    if first.len() != n {
        return Err(Error::invalid(
            "target spectrum cannot be split into conjugate-closed halves",
        ));
    }
    Ok((first, second))
}

/// State feedback plus a full-order state observer.
fn full_order(plant: &Plant, targets: &[C64]) -> Result<Compensator> {
    let n = plant.n();
    let (sf, obs) = split_targets(targets, n)?;
    let f = place_poles(&plant.a, &plant.b, &sf)?;
    let l = place_observer(&plant.a, &plant.c, &obs)?;
    Ok(Compensator {
        a: &plant.a + &plant.b * &f + &l * &plant.c,
        b: -l,
        c: f,
        d: Matrix::zeros(plant.b.ncols(), plant.c.nrows()),
        mode: CompensatorMode::Full,
    })
}

/// Monic polynomial with the given roots, coefficients lowest degree first.
fn poly_from_roots(roots: &[C64]) -> Vec<f64> {
    let mut c = vec![C64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![C64::new(0.0, 0.0); c.len() + 1];
        for (k, &ck) in c.iter().enumerate() {
            next[k + 1] += ck;
            next[k] -= ck * r;
        }
        c = next;
    }
    c.into_iter().map(|z| z.re).collect()
}

/// Characteristic polynomial and the numerators `c adj(sI - A) b_j` via the
/// Faddeev recursion `M_0 = I`, `M_k = A M_{k-1} + a_{n-k} I`.
fn transfer_polynomials(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.nrows();
    let d = poly_from_roots(&spectrum(a)?.eigenvalues);
    let mut nums = vec![vec![0.0; n.max(1)]; b.ncols()];
    let mut mk = Matrix::identity(n, n);
    for k in 0..n {
        if k > 0 {
            mk = a * &mk + Matrix::identity(n, n) * d[n - k];
        }
        // adj(sI - A) = sum_k s^{n-1-k} M_k
        let row = c * &mk * b;
        for (j, num) in nums.iter_mut().enumerate() {
            num[n - 1 - k] = row[(0, j)];
        }
    }
    Ok((d, nums))
}

/// Pole assignment for a single output combination `y_s = w' y` with a
/// compensator of order `nu` from `y_s` to all inputs. The closed-loop
/// characteristic polynomial `d(s) dc(s) - sum_j N_j(s) nc_j(s)` is linear in
/// the compensator coefficients; with `nu = controllability index - 1` the
/// system has at least as many unknowns as equations.
fn minimal_order(plant: &Plant, targets: &[C64], nu: usize, seed: u64) -> Result<Compensator> {
    let n = plant.n();
    let p = plant.b.ncols();
    let q = plant.c.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = poly_from_roots(targets);
    let mut last_err = None;
    for attempt in 0..10 {
        // A static pre-feedback makes the plant cyclic when it is not.
        let d0 = if attempt == 0 {
            Matrix::zeros(p, q)
        } else {
            Matrix::from_fn(p, q, |_, _| rng.random_range(-1.0..=1.0))
        };
        let w = Matrix::from_fn(q, 1, |_, _| rng.random_range(-1.0..=1.0));
        let a0 = &plant.a + &plant.b * &d0 * &plant.c;
        let cs = w.transpose() * &plant.c;
        let (d, nums) = transfer_polynomials(&a0, &plant.b, &cs)?;

        // Unknowns: alpha_0..alpha_{nu-1}, then beta_{j,0..nu} per input j.
        let eqs = n + nu;
        let unknowns = nu + p * (nu + 1);
        let mut m = Matrix::zeros(eqs, unknowns);
        for i in 0..nu {
            for (k, &dk) in d.iter().enumerate() {
                if i + k < eqs {
                    m[(i + k, i)] += dk;
                }
            }
        }
        for (j, num) in nums.iter().enumerate() {
            for k in 0..=nu {
                let col = nu + j * (nu + 1) + k;
                for (l, &nl) in num.iter().enumerate() {
                    if k + l < eqs {
                        m[(k + l, col)] -= nl;
                    }
                }
            }
        }
        // Right side: t(s) - s^nu d(s), low coefficients only.
        let mut rhs = Matrix::zeros(eqs, 1);
        for k in 0..eqs {
            let shifted = if k >= nu { d[k - nu] } else { 0.0 };
            rhs[(k, 0)] = t[k] - shifted;
        }
        let svd = m.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax).count();
        if rank < eqs {
            last_err = Some(format!("coefficient system has rank {rank} < {eqs}"));
            continue;
        }
        let sol = svd
            .solve(&rhs, 1e-12 * smax)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let realize = |theta: &[f64]| -> Compensator {
            let alpha = &theta[..nu];
            let beta = |j: usize, k: usize| theta[nu + j * (nu + 1) + k];
            // Controllable canonical realization of nc(s) / dc(s).
            let ak = Matrix::from_fn(nu, nu, |r, c| {
                if r + 1 < nu {
                    if c == r + 1 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    -alpha[c]
                }
            });
            let mut bk = Matrix::zeros(nu, 1);
            if nu > 0 {
                bk[(nu - 1, 0)] = 1.0;
            }
            let dk = Matrix::from_fn(p, 1, |j, _| beta(j, nu));
            let ck = Matrix::from_fn(p, nu, |j, k| beta(j, k) - beta(j, nu) * alpha[k]);
            Compensator {
                a: ak,
                b: &bk * w.transpose(),
                c: ck,
                d: &d0 + dk * w.transpose(),
                mode: CompensatorMode::Minimal,
            }
        };
        let mut theta: Vec<f64> = sol.iter().copied().collect();
        // The coefficient map is badly conditioned for clustered targets;
        // polish on the eigenvalues themselves.
        refine(&mut theta, &|th| compensated_closed_loop(plant, &realize(th)), targets)?;
        let k = realize(&theta);
        let err = assignment_error(plant, &k, targets)?;
        if err <= ASSIGN_RTOL {
            return Ok(k);
        }
        last_err = Some(format!("assigned spectrum misses the target by {err:.2e}"));
    }
    Err(Error::Numerical(format!(
        "minimal-order design failed ({}); retry with the full-order mode",
        last_err.unwrap_or_default()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reals(v: &[f64]) -> Vec<C64> {
        v.iter().map(|&x| C64::new(x, 0.0)).collect()
    }

    #[test]
    fn scalar_static_gain() {
        let plant = Plant {
            a: Matrix::from_element(1, 1, 1.0),
            b: Matrix::from_element(1, 1, 1.0),
            c: Matrix::from_element(1, 1, 1.0),
        };
        let k = design_channel_compensator(&plant, &reals(&[-1.0]), CompensatorMode::Minimal, 0).unwrap();
        assert_eq!(k.order(), 0);
        assert!((k.d[(0, 0)] + 2.0).abs() < 1e-10);
    }

    #[test]
    fn double_integrator_full() {
        let plant = Plant {
            a: Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            b: Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
            c: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
        };
        let t = reals(&[-1.0, -2.0, -3.0, -4.0]);
        let k = design_channel_compensator(&plant, &t, CompensatorMode::Full, 0).unwrap();
        assert_eq!(k.order(), 2);
        assert!(assignment_error(&plant, &k, &t).unwrap() < 1e-9);
    }

    #[test]
    fn double_integrator_minimal() {
        let plant = Plant {
            a: Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            b: Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
            c: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
        };
        let t = reals(&[-1.0, -2.0, -3.0]);
        let k = design_channel_compensator(&plant, &t, CompensatorMode::Minimal, 0).unwrap();
        assert_eq!(k.order(), 1);
    }

    #[test]
    fn size_mismatch() {
        let plant = Plant {
            a: Matrix::from_element(1, 1, 1.0),
            b: Matrix::from_element(1, 1, 1.0),
            c: Matrix::from_element(1, 1, 1.0),
        };
        let err = design_channel_compensator(&plant, &reals(&[-1.0]), CompensatorMode::Full, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn poly_roots() {
        assert_eq!(poly_from_roots(&reals(&[1.0, 2.0])), vec![2.0, -3.0, 1.0]);
    }
}
