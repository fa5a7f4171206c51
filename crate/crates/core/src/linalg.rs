//! Narrow interface over the factorization backend.
//!
//! Every factorization is checked against its input before it is returned: a
//! reconstruction residual above `RECONSTRUCTION_TOL · ‖input‖_F` becomes an
//! [`Error::Numerical`](crate::Error::Numerical).

use alloc::vec::Vec;

use nalgebra::{ColPivQR, DMatrix, Schur, SVD};
use num_complex::Complex64;
#[allow(unused_imports)] // f64 math is inherent when std is linked
use num_traits::Float;

use crate::error::{bail, Result};
use crate::matrix::ComplexMatrix;

pub const RECONSTRUCTION_TOL: f64 = 1e-10;

const SVD_EPS: f64 = 1e-15;
const MAX_ITERS: usize = 10_000;

fn fro(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn check_residual(what: &str, input: &DMatrix<Complex64>, rebuilt: &DMatrix<Complex64>) -> Result<()> {
    let scale = fro(input);
    let residual = fro(&(input - rebuilt));
    if residual.is_nan() || residual > RECONSTRUCTION_TOL * scale.max(f64::MIN_POSITIVE) {
        bail!(Numerical, "{what} reconstruction residual {residual:.3e} exceeds tolerance (‖input‖ = {scale:.3e})");
    }
    Ok(())
}

/// Thin singular value decomposition `m = u · diag(s) · v†` with descending `s`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<Complex64>,
    pub singular_values: Vec<f64>,
    /// Right singular vectors as columns.
    pub v: DMatrix<Complex64>,
}

impl Svd {
    /// Number of singular values above `rel_tol · s_1`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let Some(&top) = self.singular_values.first() else {
            return 0;
        };
        if top == 0.0 {
            return 0;
        }
        self.singular_values.iter().filter(|&&s| s > rel_tol * top).count()
    }
}

/// Thin SVD, verified.
///
/// Uses one-sided Jacobi rotations, which stay accurate on the rank-deficient
/// realignment matrices this crate produces. Very large inputs try the
/// backend's bidiagonal SVD first and fall back to Jacobi if it fails its check.
pub fn svd(m: &DMatrix<Complex64>) -> Result<Svd> {
    if m.nrows().min(m.ncols()) > JACOBI_FAST_PATH_LIMIT {
        if let Some(dec) = backend_svd(m) {
            if check_svd(m, &dec).is_ok() {
                return Ok(dec);
            }
        }
    }
    let dec = if m.nrows() >= m.ncols() {
        jacobi_svd(m)?
    } else {
        let t = jacobi_svd(&m.adjoint())?;
        Svd { u: t.v, singular_values: t.singular_values, v: t.u }
    };
    check_svd(m, &dec)?;
    Ok(dec)
}

const JACOBI_FAST_PATH_LIMIT: usize = 512;
const JACOBI_MAX_SWEEPS: usize = 80;

fn backend_svd(m: &DMatrix<Complex64>) -> Option<Svd> {
    let dec = SVD::try_new(m.clone(), true, true, f64::EPSILON, MAX_ITERS)?;
    let (u, v_t) = (dec.u?, dec.v_t?);
    let mut order: Vec<usize> = (0..dec.singular_values.len()).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    Some(Svd {
        u: DMatrix::from_columns(&order.iter().map(|&j| u.column(j)).collect::<Vec<_>>()),
        singular_values: order.iter().map(|&j| dec.singular_values[j]).collect(),
        v: DMatrix::from_columns(&order.iter().map(|&j| v_t.row(j).adjoint()).collect::<Vec<_>>()),
    })
}

fn check_svd(m: &DMatrix<Complex64>, dec: &Svd) -> Result<()> {
    let s_mat = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        dec.singular_values.len(),
        dec.singular_values.iter().map(|&x| Complex64::new(x, 0.0)),
    ));
    check_residual("SVD", m, &(&dec.u * s_mat * dec.v.adjoint()))?;
    let k = dec.singular_values.len();
    let eye = DMatrix::<Complex64>::identity(k, k);
    let orth = fro(&(dec.u.adjoint() * &dec.u - &eye)).max(fro(&(dec.v.adjoint() * &dec.v - &eye)));
    if orth > 1e-10 * (k.max(1) as f64) {
        bail!(Numerical, "SVD factors deviate from orthonormality by {orth:.3e}");
    }
    Ok(())
}

/// Hestenes one-sided Jacobi for `rows >= cols`.
fn jacobi_svd(m: &DMatrix<Complex64>) -> Result<Svd> {
    let (rows, n) = m.shape();
    let mut a = m.clone();
    let mut v = DMatrix::<Complex64>::identity(n, n);
    let tol = f64::EPSILON * (rows.max(1) as f64).sqrt();
    let negligible = fro(m) * f64::EPSILON;
    let mut converged = n < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dotc(&a.column(q));
                let g = gamma.norm();
                if g <= tol * (alpha * beta).sqrt() || alpha.min(beta).sqrt() <= negligible {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, phase, c, s);
                rotate(&mut v, p, q, phase, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        bail!(Numerical, "Jacobi SVD did not converge on a {rows}x{n} matrix");
    }
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let top = norms.iter().copied().fold(0.0, f64::max);
    let floor = top * f64::EPSILON * (rows.max(n) as f64);
    // Gram-Schmidt in descending order keeps U orthonormal even where small
    // singular values leave the normalized columns slightly skew.
    let mut u_cols: Vec<Option<nalgebra::DVector<Complex64>>> = Vec::with_capacity(n);
    for &j in &order {
        let mut col = (norms[j] > floor).then(|| a.column(j) / Complex64::new(norms[j], 0.0));
        if let Some(c) = col.as_mut() {
            for _ in 0..2 {
                for q in u_cols.iter().flatten() {
                    let p = q.dotc(c);
                    *c -= q * p;
                }
            }
            let norm = c.norm();
            if norm < 0.5 {
                col = None;
            } else {
                *c /= Complex64::new(norm, 0.0);
            }
        }
        u_cols.push(col);
    }
    let mut completed: Vec<nalgebra::DVector<Complex64>> = u_cols.iter().flatten().cloned().collect();
    let kept = completed.len();
    complete_basis(&mut completed, rows, n - kept)?;
    let mut fill = completed.split_off(kept);
    let mut singular_values = Vec::with_capacity(n);
    let mut columns = Vec::with_capacity(n);
    for (col, &j) in u_cols.into_iter().zip(&order) {
        match col {
            Some(c) => {
                columns.push(c);
                singular_values.push(norms[j]);
            }
            None => {
                columns.push(fill.remove(0));
                singular_values.push(0.0);
            }
        }
    }
    let u = DMatrix::from_columns(&columns);
    Ok(Svd { u, singular_values, v: DMatrix::from_columns(&order.iter().map(|&j| v.column(j)).collect::<Vec<_>>()) })
}

/// Extends orthonormal `basis` by `count` vectors, each time taking the
/// standard basis vector with the largest component outside the current span.
fn complete_basis(basis: &mut Vec<nalgebra::DVector<Complex64>>, dim: usize, count: usize) -> Result<()> {
    let target = basis.len() + count;
    while basis.len() < target {
        let mut best: Option<(f64, nalgebra::DVector<Complex64>)> = None;
        for e in 0..dim {
            let mut v = nalgebra::DVector::zeros(dim);
            v[e] = Complex64::new(1.0, 0.0);
            for _ in 0..2 {
                for q in basis.iter() {
                    let p = q.dotc(&v);
                    v -= q * p;
                }
            }
            let norm = v.norm();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, v));
            }
        }
        match best {
            Some((norm, v)) if norm > 1e-3 => basis.push(v / Complex64::new(norm, 0.0)),
            _ => bail!(Numerical, "could not complete an orthonormal basis"),
        }
    }
    Ok(())
}

/// Real Jacobi rotation of columns `p, q` after aligning the phase of `q` with `p`.
fn rotate(m: &mut DMatrix<Complex64>, p: usize, q: usize, phase: Complex64, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let xp = m[(i, p)];
        let xq = m[(i, q)] * phase.conj();
        m[(i, p)] = xp * c - xq * s;
        m[(i, q)] = xp * s + xq * c;
    }
}

/// SVD with square unitary factors: `u` is `rows x rows`, `v` is `cols x cols`.
/// Singular values beyond `min(rows, cols)` are reported as zero.
pub fn full_svd(m: &DMatrix<Complex64>) -> Result<Svd> {
    let (r, c) = m.shape();
    let n = r.max(c);
    let mut padded = DMatrix::zeros(n, n);
    padded.view_mut((0, 0), (r, c)).copy_from(m);
    let dec = svd(&padded)?;
    let u = dec.u.rows(0, r).into_owned();
    let v = dec.v.rows(0, c).into_owned();
    // Padding rows/columns carry no weight, so the leading blocks are orthonormal
    // only after re-orthonormalizing; the first min(r, c) nonzero directions are exact.
    let u = if r < n { orthonormalize_columns(&u, r)? } else { u };
    let v = if c < n { orthonormalize_columns(&v, c)? } else { v };
    Ok(Svd { u, singular_values: dec.singular_values, v })
}

/// Gram–Schmidt on the columns of `m`, keeping the first `keep` independent ones.
fn orthonormalize_columns(m: &DMatrix<Complex64>, keep: usize) -> Result<DMatrix<Complex64>> {
    let n = m.nrows();
    let mut out: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(keep);
    for j in 0..m.ncols() {
        if out.len() == keep {
            break;
        }
        let mut v = m.column(j).into_owned();
        for _ in 0..2 {
            for q in &out {
                let p = q.dotc(&v);
                v -= q * p;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            out.push(v / Complex64::new(norm, 0.0));
        }
    }
    let missing = keep - out.len();
    complete_basis(&mut out, n, missing)?;
    Ok(DMatrix::from_columns(&out))
}

/// Eigendecomposition of a Hermitian matrix with ascending real eigenvalues.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: DMatrix<Complex64>,
}

/// Eigendecomposition of the Hermitian part of `h`, verified against it.
pub fn hermitian_eigen(h: &DMatrix<Complex64>) -> Result<HermitianEigen> {
    if !h.is_square() {
        bail!(Dimension, "eigendecomposition needs a square matrix");
    }
    let herm = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    // herm + cI is positive definite, so its left singular vectors are eigenvectors.
    let shift = herm.norm() + 1.0;
    let shifted = &herm + DMatrix::<Complex64>::identity(h.nrows(), h.ncols()) * Complex64::new(shift, 0.0);
    let dec = svd(&shifted)?;
    let values: Vec<f64> = dec.singular_values.iter().rev().map(|s| s - shift).collect();
    let cols: Vec<_> = (0..values.len()).rev().map(|i| dec.u.column(i).into_owned()).collect();
    let vectors = DMatrix::from_columns(&cols);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        values.len(),
        values.iter().map(|&x| Complex64::new(x, 0.0)),
    ));
    check_residual("Hermitian eigendecomposition", &herm, &(&vectors * d * vectors.adjoint()))?;
    Ok(HermitianEigen { values, vectors })
}

/// Eigenvalues of a general square matrix via the complex Schur form.
pub fn eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        bail!(Dimension, "eigenvalues need a square matrix");
    }
    let Some(schur) = Schur::try_new(m.clone(), SVD_EPS, MAX_ITERS) else {
        bail!(Numerical, "Schur decomposition did not converge");
    };
    let (q, t) = schur.unpack();
    check_residual("Schur decomposition", m, &(&q * &t * q.adjoint()))?;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Solves `a x = b` for square invertible `a`.
pub fn solve(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let Some(x) = a.clone().lu().solve(b) else {
        bail!(Numerical, "linear system is singular");
    };
    check_residual("linear solve", b, &(a * &x))?;
    Ok(x)
}

/// Orthonormal basis of the kernel of `m`: right singular vectors whose
/// singular values are at most `rel_tol · s_1` (all of them if `m` is zero).
pub fn null_space(m: &DMatrix<Complex64>, rel_tol: f64) -> Result<DMatrix<Complex64>> {
    let dec = full_svd(m)?;
    let n = m.ncols();
    let rank = dec.rank(rel_tol);
    Ok(dec.v.columns(rank, n - rank).into_owned())
}

/// Numerical rank with the relative cutoff `rel_tol · s_1`.
pub fn rank(m: &DMatrix<Complex64>, rel_tol: f64) -> Result<usize> {
    Ok(svd(m)?.rank(rel_tol))
}

/// Smallest singular value of a square matrix.
pub fn min_singular_value(m: &DMatrix<Complex64>) -> Result<f64> {
    let dec = svd(m)?;
    Ok(dec.singular_values.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Multiplies each column by a phase so that its first entry with modulus
/// above `1e-12` times the column norm is real and positive.
pub fn fix_column_phases(m: &mut DMatrix<Complex64>) {
    for mut col in m.column_iter_mut() {
        let norm = col.norm();
        if let Some(z) = col.iter().copied().find(|z| z.norm() > 1e-12 * norm) {
            let phase = z.conj() / z.norm();
            col *= phase;
        }
    }
}

/// Orthonormal basis of the orthogonal complement of the span of the
/// (orthonormal) columns of `q`, from a column-pivoted QR of the complement
/// projector, with [`fix_column_phases`] applied.
pub fn orthonormal_complement(q: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let n = q.nrows();
    let k = q.ncols();
    if k >= n {
        return Ok(DMatrix::zeros(n, 0));
    }
    let proj = DMatrix::<Complex64>::identity(n, n) - q * q.adjoint();
    let qr = ColPivQR::new(proj);
    let full_q = qr.q();
    let mut out = full_q.columns(0, n - k).into_owned();
    // Re-orthogonalize against q to remove rounding leakage.
    let leak = q.adjoint() * &out;
    out -= q * leak;
    let mut out = orthonormalize_columns(&out, n - k)?;
    fix_column_phases(&mut out);
    Ok(out)
}

/// Moore–Penrose pseudo-inverse with relative singular-value cutoff.
pub fn pseudo_inverse(m: &DMatrix<Complex64>, rel_tol: f64) -> Result<DMatrix<Complex64>> {
    let dec = svd(m)?;
    let top = dec.singular_values.first().copied().unwrap_or(0.0);
    let k = dec.singular_values.len();
    let inv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        k,
        dec.singular_values.iter().map(|&s| {
            if s > rel_tol * top && s > 0.0 {
                Complex64::new(1.0 / s, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }),
    ));
    Ok(&dec.v * inv * dec.u.adjoint())
}

/// Convenience: numerical rank of a stack of vectorized matrices.
pub fn span_dimension(ops: &[ComplexMatrix], rel_tol: f64) -> Result<usize> {
    if ops.is_empty() {
        return Ok(0);
    }
    let cols: Vec<_> = ops.iter().map(|m| m.vectorize()).collect();
    let stacked = DMatrix::from_columns(&cols);
    if fro(&stacked) == 0.0 {
        return Ok(0);
    }
    rank(&stacked, rel_tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, m: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(n, m, |i, j| Complex64::new(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64))
    }

    #[test]
    fn svd_descends_and_reconstructs() {
        let m = sample(4, 6);
        let dec = svd(&m).unwrap();
        assert!(dec.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn full_svd_has_square_factors() {
        let m = sample(3, 5);
        let dec = full_svd(&m).unwrap();
        assert_eq!(dec.u.shape(), (3, 3));
        assert_eq!(dec.v.shape(), (5, 5));
        let id = DMatrix::<Complex64>::identity(5, 5);
        assert!(fro(&(dec.v.adjoint() * &dec.v - id)) < 1e-10);
        let ker = null_space(&m, 1e-9).unwrap();
        assert_eq!(ker.ncols(), 5 - rank(&m, 1e-9).unwrap());
        assert!(fro(&(&m * &ker)) < 1e-10);
    }

    #[test]
    fn complement_is_orthogonal() {
        let v = DMatrix::from_column_slice(
            3,
            1,
            &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0)],
        ) / Complex64::new(2f64.sqrt(), 0.0);
        let c = orthonormal_complement(&v).unwrap();
        assert_eq!(c.ncols(), 2);
        assert!(fro(&(v.adjoint() * &c)) < 1e-12);
        assert!(fro(&(c.adjoint() * &c - DMatrix::identity(2, 2))) < 1e-12);
    }

    #[test]
    fn general_eigenvalues_of_triangular() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[Complex64::new(1.0, 0.0), Complex64::new(5.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(2.0, 0.0)],
        );
        let mut ev: Vec<f64> = eigenvalues(&m).unwrap().iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 2.0).abs() < 1e-12);
    }
}
