//! Matrix-family algebra behind the controlled-unitary criteria.
//!
//! Structural checks report a relative violation instead of a bare boolean so
//! callers can tell a clear failure from a near miss.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
#[allow(unused_imports)] // f64 math is inherent when std is linked
use num_traits::Float;

use crate::error::{bail, Result};
use crate::linalg;
use crate::matrix::{ComplexMatrix, SystemLayout, ONE, ZERO};
use crate::rng::{self, SeededRng};
use crate::schmidt::{operator_schmidt_decompose, DEFAULT_RANK_TOL};

/// Relative tolerance for commutation, normality and diagonality checks.
pub const STRUCTURE_TOL: f64 = 1e-8;
/// Relative gap below which eigenvalues are merged into one cluster.
pub const CLUSTER_GAP: f64 = 1e-7;

fn dm(m: &ComplexMatrix) -> &DMatrix<Complex64> {
    m.as_dmatrix()
}

fn wrap(m: DMatrix<Complex64>) -> ComplexMatrix {
    ComplexMatrix::from_dmatrix(m)
}

/// Groups ascending `values` into runs whose neighbours differ by at most
/// `gap`. Returns index ranges into `values`.
fn clusters(values: &[f64], gap: f64) -> Vec<core::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] > gap {
            out.push(start..i);
            start = i;
        }
    }
    out
}

fn projector(vectors: &DMatrix<Complex64>, range: core::ops::Range<usize>) -> ComplexMatrix {
    let cols = vectors.columns(range.start, range.len());
    wrap(cols * cols.adjoint())
}

/// `Σ c_i P_i` with distinct nonnegative `c_i` (descending) and orthogonal
/// projectors summing to the identity.
#[derive(Debug, Clone)]
pub struct ProjectorDecomposition {
    pub values: Vec<f64>,
    pub projectors: Vec<ComplexMatrix>,
}

impl ProjectorDecomposition {
    pub fn sum(&self) -> ComplexMatrix {
        self.weighted(|c| c)
    }

    /// `Σ √c_i P_i`.
    pub fn positive_root(&self) -> ComplexMatrix {
        self.weighted(f64::sqrt)
    }

    fn weighted(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let d = self.projectors.first().map_or(0, ComplexMatrix::rows);
        self.values
            .iter()
            .zip(&self.projectors)
            .fold(ComplexMatrix::zeros(d, d), |acc, (&c, p)| &acc + &p.scale_real(f(c)))
    }
}

/// `A = (Σ √c_i P_i) V` with `A A† = Σ c_i P_i` and `V` unitary.
#[derive(Debug, Clone)]
pub struct NormalSplit {
    pub decomposition: ProjectorDecomposition,
    pub unitary: ComplexMatrix,
}

/// Polar form of a square matrix with the spectral projectors of `A A†`.
///
/// On the kernel of `A` the unitary is completed deterministically from the
/// orthonormal complements of the left and right singular subspaces.
pub fn normal_split(a: &ComplexMatrix) -> Result<NormalSplit> {
    if !a.is_square() {
        bail!(Dimension, "normal_split needs a square matrix");
    }
    let d = a.rows();
    let eig = linalg::hermitian_eigen(dm(&(a * &a.dagger())))?;
    let top = eig.values.last().copied().unwrap_or(0.0).max(0.0);
    let mut decomposition = ProjectorDecomposition { values: Vec::new(), projectors: Vec::new() };
    for range in clusters(&eig.values, CLUSTER_GAP * top.max(f64::MIN_POSITIVE)).into_iter().rev() {
        let mean = eig.values[range.clone()].iter().sum::<f64>() / range.len() as f64;
        let value = if mean <= CLUSTER_GAP * top { 0.0 } else { mean };
        decomposition.values.push(value);
        decomposition.projectors.push(projector(&eig.vectors, range));
    }

    let dec = linalg::svd(dm(a))?;
    let k = dec.rank(DEFAULT_RANK_TOL);
    let w = dec.u.columns(0, k).into_owned();
    let x = dec.v.columns(0, k).into_owned();
    let mut v = &w * x.adjoint();
    if k < d {
        let kl = linalg::orthonormal_complement(&w)?;
        let kr = linalg::orthonormal_complement(&x)?;
        v += &kl * kr.adjoint();
    }
    let unitary = wrap(v);
    let residual = (&decomposition.positive_root() * &unitary).distance(a);
    if residual > linalg::RECONSTRUCTION_TOL * a.frobenius_norm().max(f64::MIN_POSITIVE) && residual > 0.0 {
        bail!(Numerical, "normal split residual {residual:.3e} too large");
    }
    Ok(NormalSplit { decomposition, unitary })
}

/// `alpha · a + beta · b`, singular.
#[derive(Debug, Clone)]
pub struct SingularCombination {
    pub alpha: Complex64,
    pub beta: Complex64,
    pub matrix: ComplexMatrix,
}

/// Relative smallest singular value used as the singularity test.
pub const SINGULAR_TOL: f64 = 1e-8;

fn relative_min_singular(m: &DMatrix<Complex64>) -> Result<f64> {
    let n = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n == 0.0 {
        return Ok(0.0);
    }
    Ok(linalg::min_singular_value(m)? / n)
}

/// Singular nonzero element of `span{a, b}` for linearly independent square
/// `a, b`.
///
/// If `a` is invertible the combination is `b − λa` for the eigenvalue `λ` of
/// `a⁻¹b` that makes it most nearly singular.
pub fn singular_combination(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<SingularCombination> {
    if !a.is_square() || a.rows() != b.rows() || a.cols() != b.cols() {
        bail!(Dimension, "singular_combination needs two square matrices of equal size");
    }
    if linalg::span_dimension(&[a.clone(), b.clone()], 1e-10)? < 2 {
        bail!(Argument, "matrices are linearly dependent");
    }
    if relative_min_singular(dm(a))? < SINGULAR_TOL {
        return Ok(SingularCombination { alpha: ONE, beta: ZERO, matrix: a.clone() });
    }
    let pencil = linalg::solve(dm(a), dm(b))?;
    let mut best: Option<(f64, Complex64)> = None;
    for lambda in linalg::eigenvalues(&pencil)? {
        let c = dm(b) - dm(a) * lambda;
        let score = relative_min_singular(&c)?;
        if best.is_none_or(|(s, _)| score < s) {
            best = Some((score, lambda));
        }
    }
    let (_, lambda) = best.expect("square matrices have eigenvalues");
    let matrix = wrap(dm(b) - dm(a) * lambda);
    Ok(SingularCombination { alpha: -lambda, beta: ONE, matrix })
}

/// Basis of a matrix space in which all but possibly the last element are
/// singular. `coefficients[k]` expands `basis[k]` in the input basis.
#[derive(Debug, Clone)]
pub struct SingularBasis {
    pub basis: Vec<ComplexMatrix>,
    pub coefficients: Vec<Vec<Complex64>>,
}

/// Replaces `space` by a basis with at least `r − 1` singular elements.
pub fn find_singular_basis(space: &[ComplexMatrix]) -> Result<SingularBasis> {
    let r = space.len();
    if r == 0 {
        bail!(Argument, "empty matrix space");
    }
    if linalg::span_dimension(space, 1e-10)? < r {
        bail!(Argument, "matrices are linearly dependent");
    }
    let unit = |k: usize| -> Vec<Complex64> { (0..r).map(|j| if j == k { ONE } else { ZERO }).collect() };
    let mut out = SingularBasis { basis: Vec::new(), coefficients: Vec::new() };
    let mut current = (space[0].clone(), unit(0));
    for (j, next) in space.iter().enumerate().skip(1) {
        let next = (next.clone(), unit(j));
        let combo = singular_combination(&current.0, &next.0)?;
        let coeffs: Vec<Complex64> =
            current.1.iter().zip(&next.1).map(|(x, y)| combo.alpha * x + combo.beta * y).collect();
        out.basis.push(combo.matrix);
        out.coefficients.push(coeffs);
        // Drop the partner with the larger weight; the other still spans with the combination.
        if combo.alpha.norm() >= combo.beta.norm() {
            current = next;
        }
    }
    out.basis.push(current.0);
    out.coefficients.push(current.1);
    Ok(out)
}

/// Coefficients of the Hermitian form `x X†X + y Y†Y + z X†Y + z̄ Y†X`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCoefficients {
    pub x: f64,
    pub y: f64,
    pub z: Complex64,
}

impl QuadraticCoefficients {
    fn is_positive_definite(&self) -> bool {
        self.x > 0.0 && self.y > 0.0 && self.x * self.y - self.z.norm_sqr() > 1e-12 * self.x * self.y
    }
}

/// Two operators satisfying `a·B1B1† + b·B2B2† = I` and `B1†B1 + B2†B2 = I`.
#[derive(Debug, Clone)]
pub struct OrthogonalPair {
    pub b1: ComplexMatrix,
    pub b2: ComplexMatrix,
    pub a: f64,
    pub b: f64,
}

fn form(a1: &ComplexMatrix, a2: &ComplexMatrix, c: QuadraticCoefficients, outer: bool) -> ComplexMatrix {
    let p = |x: &ComplexMatrix, y: &ComplexMatrix| if outer { x * &y.dagger() } else { &x.dagger() * y };
    let terms =
        [p(a1, a1).scale_real(c.x), p(a2, a2).scale_real(c.y), p(a1, a2).scale(c.z), p(a2, a1).scale(c.z.conj())];
    terms.iter().skip(1).fold(terms[0].clone(), |acc, t| &acc + t)
}

fn identity_residual(m: &ComplexMatrix) -> f64 {
    m.distance(&ComplexMatrix::identity(m.rows())) / (m.rows() as f64).sqrt()
}

/// Builds `B1, B2` from operators `A1, A2` obeying
/// `x1 A1†A1 + y1 A2†A2 + z1 A1†A2 + z̄1 A2†A1 = I` and
/// `x2 A1A1† + y2 A2A2† + z2 A1A2† + z̄2 A2A1† = I`, both forms positive definite.
pub fn orthogonalize_pair(
    a1: &ComplexMatrix,
    a2: &ComplexMatrix,
    c1: QuadraticCoefficients,
    c2: QuadraticCoefficients,
) -> Result<OrthogonalPair> {
    if !a1.is_square() || a1.rows() != a2.rows() || !a2.is_square() {
        bail!(Dimension, "orthogonalize_pair needs two square matrices of equal size");
    }
    if !c1.is_positive_definite() || !c2.is_positive_definite() {
        bail!(Argument, "coefficient forms must satisfy x, y > 0 and xy > |z|^2");
    }
    let (r1, r2) = (identity_residual(&form(a1, a2, c1, false)), identity_residual(&form(a1, a2, c2, true)));
    if r1.max(r2) > STRUCTURE_TOL {
        bail!(Argument, "input identities violated (residuals {r1:.3e}, {r2:.3e})");
    }

    // Complete the square in the first identity: A3†A3 + A4†A4 = I.
    let p = c1.x - c1.z.norm_sqr() / c1.y;
    let a3 = a1.scale_real(p.sqrt());
    let a4 = (a2 + &a1.scale(c1.z.conj() / c1.y)).scale_real(c1.y.sqrt());
    // A1 = ta·A3, A2 = tc·A3 + tb·A4; push the second form through this change of basis.
    let ta = Complex64::new(1.0 / p.sqrt(), 0.0);
    let tb = Complex64::new(1.0 / c1.y.sqrt(), 0.0);
    let tc = -(c1.z.conj() / c1.y) * ta;
    let t = DMatrix::from_row_slice(2, 2, &[ta, ZERO, tc, tb]);
    let m = DMatrix::from_row_slice(2, 2, &[Complex64::new(c2.x, 0.0), c2.z, c2.z.conj(), Complex64::new(c2.y, 0.0)]);
    let mt = t.transpose() * m * t.conjugate();
    let (x, y, z) = (mt[(0, 0)].re, mt[(1, 1)].re, mt[(0, 1)]);

    // z = |z| e^{-iφ}
    let phase = if z.norm() > 0.0 { z.conj() / z.norm() } else { ONE };
    let (b1, b2, a, b) = if (x - y).abs() <= 1e-14 * (x + y) {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        ((&a3 + &a4.scale(phase)).scale_real(s), (&a3 - &a4.scale(phase)).scale_real(s), x + z.norm(), x - z.norm())
    } else {
        let theta = 0.5 * (2.0 * z.norm() / (x - y)).atan();
        let (s, c) = theta.sin_cos();
        let root = ((x - y).powi(2) + 4.0 * z.norm_sqr()).sqrt();
        let sgn = (x - y).signum();
        (
            &a3.scale_real(c) + &a4.scale(phase * s),
            &a3.scale_real(s) - &a4.scale(phase * c),
            0.5 * (x + y + sgn * root),
            0.5 * (x + y - sgn * root),
        )
    };

    let left = &(&b1 * &b1.dagger()).scale_real(a) + &(&b2 * &b2.dagger()).scale_real(b);
    let right = &(&b1.dagger() * &b1) + &(&b2.dagger() * &b2);
    let (e1, e2) = (identity_residual(&left), identity_residual(&right));
    if e1.max(e2) > STRUCTURE_TOL {
        bail!(Numerical, "orthogonalized pair misses its identities ({e1:.3e}, {e2:.3e})");
    }
    Ok(OrthogonalPair { b1, b2, a, b })
}

/// Inputs for [`orthogonalize_pair`] read off a Schmidt-rank-three unitary.
#[derive(Debug, Clone)]
pub struct OrthogonalizationInput {
    pub a1: ComplexMatrix,
    pub a2: ComplexMatrix,
    pub c1: QuadraticCoefficients,
    pub c2: QuadraticCoefficients,
    /// Singular operator on `singular_side` in the rewritten expansion.
    pub singular_operator: ComplexMatrix,
}

/// Rewrites `u = T1⊗B1 + T2⊗B2 + T3⊗B3` across `singular_side` with `T1`
/// singular, and returns `B2, B3` with the forms obtained by sandwiching
/// `U†U = I` between a kernel vector of `T1` and `UU† = I` between a
/// cokernel vector.
pub fn harvest_orthogonalization_input(
    u: &ComplexMatrix,
    layout: &SystemLayout,
    singular_side: &[usize],
) -> Result<OrthogonalizationInput> {
    let dec = operator_schmidt_decompose(u, layout, singular_side, DEFAULT_RANK_TOL)?;
    if dec.rank() != 3 {
        bail!(Argument, "harvesting needs Schmidt rank 3, found {}", dec.rank());
    }
    let left = dec.weighted_left();
    let singular = find_singular_basis(&left)?;
    let g1 = &singular.coefficients[0];
    // Complete g1 to an invertible change of basis with the best-conditioned pair of unit vectors.
    let mut best: Option<(f64, usize, usize)> = None;
    for (j, k) in [(0, 1), (0, 2), (1, 2)] {
        let l = 3 - j - k;
        let det = g1[l].norm();
        if best.is_none_or(|(b, _, _)| det > b) {
            best = Some((det, j, k));
        }
    }
    let (_, j, k) = best.expect("three candidate pairs");
    let mut g = DMatrix::<Complex64>::zeros(3, 3);
    for i in 0..3 {
        g[(i, 0)] = g1[i];
    }
    g[(j, 1)] = ONE;
    g[(k, 2)] = ONE;
    let g_inv = linalg::solve(&g, &DMatrix::identity(3, 3))?;
    let rewritten: Vec<ComplexMatrix> = (0..3)
        .map(|m| {
            (0..3).fold(ComplexMatrix::zeros(dec.right_factors[0].rows(), dec.right_factors[0].cols()), |acc, i| {
                &acc + &dec.right_factors[i].scale(g_inv[(m, i)])
            })
        })
        .collect();
    let t1 = &singular.basis[0];
    let (t2, t3) = (&left[j], &left[k]);

    let svd = linalg::full_svd(dm(t1))?;
    let n = t1.rows();
    let kernel: DVector<Complex64> = svd.v.column(n - 1).into_owned();
    let cokernel: DVector<Complex64> = svd.u.column(n - 1).into_owned();
    let (t2k, t3k) = (dm(t2) * &kernel, dm(t3) * &kernel);
    let (t2c, t3c) = (dm(t2).adjoint() * &cokernel, dm(t3).adjoint() * &cokernel);
    let c1 = QuadraticCoefficients { x: t2k.norm_squared(), y: t3k.norm_squared(), z: t2k.dotc(&t3k) };
    let c2 = QuadraticCoefficients { x: t2c.norm_squared(), y: t3c.norm_squared(), z: t2c.dotc(&t3c) };
    Ok(OrthogonalizationInput {
        a1: rewritten[1].clone(),
        a2: rewritten[2].clone(),
        c1,
        c2,
        singular_operator: t1.clone(),
    })
}

/// Failed structural check with its relative magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub check: String,
    pub magnitude: f64,
}

/// Largest relative violation of normality and pairwise commutation in
/// `family`, naming the offending members with `name`.
pub fn normal_commuting_violation(family: &[ComplexMatrix], name: impl Fn(usize) -> String) -> Violation {
    let norms: Vec<f64> = family.iter().map(ComplexMatrix::frobenius_norm).collect();
    let scale = norms.iter().copied().fold(0.0, f64::max);
    let negligible = |x: f64| x <= 1e-14 * scale;
    let mut worst = Violation { check: String::from("normal and commuting"), magnitude: 0.0 };
    for (i, m) in family.iter().enumerate() {
        if negligible(norms[i]) {
            continue;
        }
        let v = m.commutator(&m.dagger()).frobenius_norm() / (norms[i] * norms[i]);
        if v > worst.magnitude {
            worst = Violation { check: format!("{} is not normal", name(i)), magnitude: v };
        }
        for (j, other) in family.iter().enumerate().skip(i + 1) {
            if negligible(norms[j]) {
                continue;
            }
            let v = m.commutator(other).frobenius_norm() / (norms[i] * norms[j]);
            if v > worst.magnitude {
                worst = Violation { check: format!("{} and {} do not commute", name(i), name(j)), magnitude: v };
            }
        }
    }
    worst
}

/// Unitary whose columns jointly diagonalize a family of commuting normal
/// matrices. Columns spanning a common eigenspace are adjacent.
pub fn joint_diagonalize_commuting(family: &[ComplexMatrix], tol: f64, seed: u64) -> Result<ComplexMatrix> {
    let Some(first) = family.first() else {
        bail!(Argument, "empty family");
    };
    let d = first.rows();
    if family.iter().any(|m| m.rows() != d || m.cols() != d) {
        bail!(Dimension, "family members must be square and of equal size");
    }
    let violation = normal_commuting_violation(family, |i| format!("member {i}"));
    if violation.magnitude > tol {
        bail!(Structure, "{} (relative violation {:.3e})", violation.check, violation.magnitude);
    }
    let scale = family.iter().map(ComplexMatrix::frobenius_norm).fold(0.0, f64::max);
    let mut rng = rng::seeded(seed);
    let mats: Vec<&DMatrix<Complex64>> = family.iter().map(dm).collect();
    let blocks = split_joint(&mats, DMatrix::identity(d, d), scale, tol, &mut rng)?;
    let columns: Vec<DVector<Complex64>> =
        blocks.iter().flat_map(|b| (0..b.ncols()).map(move |j| b.column(j).into_owned())).collect();
    let q = DMatrix::from_columns(&columns);
    for (i, m) in mats.iter().enumerate() {
        let off = wrap(q.adjoint() * *m * &q).off_diagonal_norm();
        if off > tol * scale.max(f64::MIN_POSITIVE) {
            bail!(Structure, "member {i} is not diagonalized (off-diagonal {off:.3e})");
        }
    }
    Ok(wrap(q))
}

fn split_joint(
    family: &[&DMatrix<Complex64>],
    basis: DMatrix<Complex64>,
    scale: f64,
    tol: f64,
    rng: &mut SeededRng,
) -> Result<Vec<DMatrix<Complex64>>> {
    let k = basis.ncols();
    if k == 1 || scale == 0.0 {
        return Ok(vec![basis]);
    }
    let restricted: Vec<DMatrix<Complex64>> = family.iter().map(|m| basis.adjoint() * *m * &basis).collect();
    let scalar = restricted.iter().all(|m| {
        let mean = m.trace() / Complex64::new(k as f64, 0.0);
        let dev = m - DMatrix::<Complex64>::identity(k, k) * mean;
        dev.norm() <= tol * scale
    });
    if scalar {
        return Ok(vec![basis]);
    }
    let half = Complex64::new(0.5, 0.0);
    let minus_half_i = Complex64::new(0.0, -0.5);
    for _ in 0..4 {
        let mut h = DMatrix::<Complex64>::zeros(k, k);
        for m in &restricted {
            let herm = (m + m.adjoint()) * half;
            let anti = (m - m.adjoint()) * minus_half_i;
            h += herm * Complex64::new(rng::gaussian(rng), 0.0) + anti * Complex64::new(rng::gaussian(rng), 0.0);
        }
        let eig = linalg::hermitian_eigen(&h)?;
        let spread = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        let groups = clusters(&eig.values, CLUSTER_GAP * spread);
        if groups.len() > 1 {
            let mut out = Vec::new();
            for g in groups {
                let sub = &basis * eig.vectors.columns(g.start, g.len());
                out.extend(split_joint(family, sub, scale, tol, rng)?);
            }
            return Ok(out);
        }
    }
    bail!(Structure, "could not separate joint eigenspaces of a {k}-dimensional block")
}

/// Result of a simultaneous singular value decomposition attempt.
#[derive(Debug, Clone)]
pub enum SimultaneousSvd {
    /// `s · M_i · t` is diagonal for every member.
    Found {
        s: ComplexMatrix,
        t: ComplexMatrix,
        diagonals: Vec<Vec<Complex64>>,
        /// Largest relative off-diagonal remainder.
        residual: f64,
    },
    NotFound(Violation),
}

/// Unitaries `s, t` diagonalizing every `M_i` of a family of equal-size
/// square matrices as `s · M_i · t`, when they exist.
///
/// Necessary and sufficient: `{M_i M_j†}` and `{M_i† M_j}` are each normal and
/// commuting. `s†` comes from jointly diagonalizing the first family; `t` is
/// then read off as the normalized image of those columns under `G†` for a
/// random combination `G` of the members, which keeps the pairing of left and
/// right singular vectors consistent inside degenerate subspaces.
pub fn simultaneous_svd(family: &[ComplexMatrix], tol: f64, seed: u64) -> Result<SimultaneousSvd> {
    let Some(first) = family.first() else {
        bail!(Argument, "empty family");
    };
    let d = first.rows();
    if family.iter().any(|m| m.rows() != d || m.cols() != d) {
        bail!(Dimension, "family members must be square and of equal size");
    }
    let mut left = Vec::with_capacity(family.len() * family.len());
    let mut right = Vec::with_capacity(family.len() * family.len());
    for a in family {
        for b in family {
            left.push(a * &b.dagger());
            right.push(&a.dagger() * b);
        }
    }
    let r = family.len();
    for (fam, outer) in [(&left, true), (&right, false)] {
        let v = normal_commuting_violation(fam, |n| {
            let (i, j) = (n / r, n % r);
            if outer {
                format!("M_{i}·M_{j}†")
            } else {
                format!("M_{i}†·M_{j}")
            }
        });
        if v.magnitude > tol {
            return Ok(SimultaneousSvd::NotFound(v));
        }
    }
    let l = match joint_diagonalize_commuting(&left, tol, seed) {
        Ok(l) => l,
        Err(crate::Error::Structure(msg)) => {
            return Ok(SimultaneousSvd::NotFound(Violation { check: msg, magnitude: f64::INFINITY }))
        }
        Err(e) => return Err(e),
    };
    let mut rng = rng::derived(seed, 1);
    let mut g = DMatrix::<Complex64>::zeros(d, d);
    for m in family {
        g += dm(m) * rng::complex_gaussian(&mut rng);
    }
    let g_norm = g.norm();
    let image = g.adjoint() * dm(&l);
    let mut kept = Vec::new();
    let mut columns: Vec<Option<DVector<Complex64>>> = Vec::with_capacity(d);
    for k in 0..d {
        let v = image.column(k).into_owned();
        let n = v.norm();
        if n > 1e-9 * g_norm.max(f64::MIN_POSITIVE) {
            let v = v / Complex64::new(n, 0.0);
            kept.push(v.clone());
            columns.push(Some(v));
        } else {
            columns.push(None);
        }
    }
    let complement = if kept.len() < d {
        linalg::orthonormal_complement(&DMatrix::from_columns(&kept))?
    } else {
        DMatrix::zeros(d, 0)
    };
    let mut fill = 0;
    let cols: Vec<DVector<Complex64>> = columns
        .into_iter()
        .map(|c| {
            c.unwrap_or_else(|| {
                fill += 1;
                complement.column(fill - 1).into_owned()
            })
        })
        .collect();
    let r = DMatrix::from_columns(&cols);
    let orth = (r.adjoint() * &r - DMatrix::<Complex64>::identity(d, d)).norm();
    if orth > 1e-6 {
        return Ok(SimultaneousSvd::NotFound(Violation {
            check: String::from("right singular vectors are not orthonormal"),
            magnitude: orth,
        }));
    }
    // Polar cleanup of the small orthonormality defect.
    let polar = linalg::svd(&r)?;
    let mut t = &polar.u * polar.v.adjoint();

    let s = dm(&l).adjoint();
    for k in 0..d {
        let lead = family.iter().find_map(|m| {
            let e = (s.row(k) * dm(m) * t.column(k))[(0, 0)];
            (e.norm() > tol * m.frobenius_norm()).then_some(e)
        });
        if let Some(e) = lead {
            let phase = e.conj() / e.norm();
            let mut col = t.column_mut(k);
            col *= phase;
        }
    }
    let mut residual: f64 = 0.0;
    let mut diagonals = Vec::with_capacity(family.len());
    for m in family {
        let dmat = wrap(&s * dm(m) * &t);
        let n = m.frobenius_norm();
        if n > 0.0 {
            residual = residual.max(dmat.off_diagonal_norm() / n);
        }
        diagonals.push(dmat.diagonal());
    }
    if residual > tol {
        return Ok(SimultaneousSvd::NotFound(Violation {
            check: String::from("s·M_i·t is not diagonal"),
            magnitude: residual,
        }));
    }
    Ok(SimultaneousSvd::Found { s: wrap(s), t: wrap(t), diagonals, residual })
}

/// Nontrivial invariant-subspace decomposition of a `*`-closed family, read
/// off from its commutant.
#[derive(Debug, Clone)]
pub enum Commutant {
    /// Only multiples of the identity commute with the family.
    Irreducible,
    Reducible {
        /// Orthogonal projectors summing to the identity, each commuting with the family.
        projectors: Vec<ComplexMatrix>,
        /// Dimension of the commutant.
        dimension: usize,
    },
}

/// Commutant of the algebra generated by `generators` (assumed closed under
/// adjoint), and a decomposition into invariant subspaces when it is nontrivial.
///
/// Solves `G X = X G` for all generators as a linear system in `vec(X)`; the
/// vectorized size `d²` must not exceed `max_dim`.
pub fn commutant_blocks(generators: &[ComplexMatrix], seed: u64, max_dim: usize) -> Result<Commutant> {
    let Some(first) = generators.first() else {
        bail!(Argument, "empty generator family");
    };
    let d = first.rows();
    if generators.iter().any(|g| g.rows() != d || g.cols() != d) {
        bail!(Dimension, "generators must be square and of equal size");
    }
    if d.saturating_mul(d) > max_dim {
        bail!(Dimension, "commutant of {d}x{d} matrices exceeds the dimension cap {max_dim}");
    }
    if d == 1 {
        return Ok(Commutant::Irreducible);
    }
    // Reduce the generators to a basis of their span.
    let cols: Vec<DVector<Complex64>> = generators.iter().map(ComplexMatrix::vectorize).collect();
    let stacked = DMatrix::from_columns(&cols);
    let span = linalg::svd(&stacked)?;
    let k = span.rank(1e-12);
    let n = d * d;
    let eye = DMatrix::<Complex64>::identity(d, d);
    let mut system = DMatrix::<Complex64>::zeros(k * n, n);
    for j in 0..k {
        let entries: Vec<Complex64> = span.u.column(j).iter().copied().collect();
        let g = ComplexMatrix::unvectorize(&entries, d, d);
        // Row-major vec: vec(GX − XG) = (G ⊗ I − I ⊗ Gᵀ) vec(X).
        let block = dm(&g).kronecker(&eye) - eye.kronecker(&dm(&g).transpose());
        system.view_mut((j * n, 0), (n, n)).copy_from(&block);
    }
    let kernel = if k == 0 { DMatrix::identity(n, n) } else { linalg::null_space(&system, DEFAULT_RANK_TOL)? };
    let dimension = kernel.ncols();
    if dimension <= 1 {
        return Ok(Commutant::Irreducible);
    }
    let mut rng = rng::seeded(seed);
    for _ in 0..4 {
        let mut x = DMatrix::<Complex64>::zeros(d, d);
        for j in 0..dimension {
            let entries: Vec<Complex64> = kernel.column(j).iter().copied().collect();
            x += dm(&ComplexMatrix::unvectorize(&entries, d, d)) * rng::complex_gaussian(&mut rng);
        }
        let mut h = (&x + x.adjoint()) * Complex64::new(0.5, 0.0);
        let shift = h.trace() / Complex64::new(d as f64, 0.0);
        h -= &eye * shift;
        let eig = linalg::hermitian_eigen(&h)?;
        let spread = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if spread <= 1e-10 * h.norm().max(1.0) {
            continue;
        }
        let groups = clusters(&eig.values, CLUSTER_GAP * spread);
        if groups.len() > 1 {
            let projectors = groups.into_iter().map(|g| projector(&eig.vectors, g)).collect();
            return Ok(Commutant::Reducible { projectors, dimension });
        }
    }
    bail!(Numerical, "commutant of dimension {dimension} produced no spectral split")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{haar_unitary, pauli, random_controlled_unitary};
    use crate::matrix::tensor_product;

    fn close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
        a.distance(b) <= tol * a.frobenius_norm().max(1.0)
    }

    #[test]
    fn normal_split_of_a_unitary_is_trivial() {
        let u = haar_unitary(&mut rng::seeded(2), 4);
        let split = normal_split(&u).unwrap();
        assert_eq!(split.decomposition.values.len(), 1);
        assert!((split.decomposition.values[0] - 1.0).abs() < 1e-12);
        assert!(close(&split.unitary, &u, 1e-10));
    }

    #[test]
    fn normal_split_of_a_projector_times_unitary() {
        let p = ComplexMatrix::diag_real(&[2.0, 2.0, 0.0]);
        let v = haar_unitary(&mut rng::seeded(3), 3);
        let a = &p * &v;
        let split = normal_split(&a).unwrap();
        let values = &split.decomposition.values;
        assert_eq!(values.len(), 2);
        assert!((values[0] - 4.0).abs() < 1e-10 && values[1] == 0.0);
        assert!(split.unitary.unitarity_residual() < 1e-10);
        assert!(close(&(&split.decomposition.positive_root() * &split.unitary), &a, 1e-10));
        assert!(close(&split.decomposition.sum(), &(&a * &a.dagger()), 1e-10));
    }

    #[test]
    fn singular_combination_of_identity_and_diagonal() {
        // b − λ I is singular exactly for λ ∈ {1, 2}.
        let a = ComplexMatrix::identity(2);
        let b = ComplexMatrix::diag_real(&[1.0, 2.0]);
        let c = singular_combination(&a, &b).unwrap();
        let lambda = -c.alpha;
        assert!((lambda - ONE).norm() < 1e-12 || (lambda - Complex64::new(2.0, 0.0)).norm() < 1e-12);
        assert!(linalg::min_singular_value(dm(&c.matrix)).unwrap() < 1e-12);
        assert!(singular_combination(&a, &a.scale_real(2.0)).is_err());
    }

    #[test]
    fn singular_combination_prefers_singular_first_argument() {
        let a = ComplexMatrix::diag_real(&[1.0, 0.0]);
        let b = ComplexMatrix::identity(2);
        let c = singular_combination(&a, &b).unwrap();
        assert_eq!((c.alpha, c.beta), (ONE, ZERO));
    }

    #[test]
    fn singular_basis_of_paulis() {
        let paulis: Vec<_> = (0..4).map(|i| pauli(i).unwrap()).collect();
        let sb = find_singular_basis(&paulis).unwrap();
        assert_eq!(sb.basis.len(), 4);
        for m in &sb.basis[..3] {
            assert!(linalg::min_singular_value(dm(m)).unwrap() < 1e-10);
        }
        assert_eq!(linalg::span_dimension(&sb.basis, 1e-10).unwrap(), 4);
        for (m, coeffs) in sb.basis.iter().zip(&sb.coefficients) {
            let rebuilt =
                coeffs.iter().zip(&paulis).fold(ComplexMatrix::zeros(2, 2), |acc, (c, p)| &acc + &p.scale(*c));
            assert!(close(&rebuilt, m, 1e-12));
        }
    }

    #[test]
    fn orthogonalize_pair_on_harvested_controlled_unitary() {
        let layout = SystemLayout::bipartite(3, 3).unwrap();
        for seed in 0..5 {
            let u = random_controlled_unitary(3, 3, 3, seed).unwrap();
            let input = harvest_orthogonalization_input(&u, &layout, &[1]).unwrap();
            assert!(linalg::min_singular_value(dm(&input.singular_operator)).unwrap() < 1e-8);
            let pair = orthogonalize_pair(&input.a1, &input.a2, input.c1, input.c2).unwrap();
            assert!(pair.a > 0.0 && pair.b > 0.0);
        }
    }

    #[test]
    fn orthogonalize_pair_rejects_bad_forms() {
        let a = ComplexMatrix::identity(2);
        let bad = QuadraticCoefficients { x: 1.0, y: 1.0, z: ONE };
        let good = QuadraticCoefficients { x: 1.0, y: 1.0, z: ZERO };
        assert!(orthogonalize_pair(&a, &a, bad, good).is_err());
        assert!(orthogonalize_pair(&a, &a, good, good).is_err());
    }

    #[test]
    fn orthogonalize_pair_hand_example() {
        // A1 = diag(1,0), A2 = diag(0,1): both forms with x = y = 1, z = 0 hold.
        let a1 = ComplexMatrix::diag_real(&[1.0, 0.0]);
        let a2 = ComplexMatrix::diag_real(&[0.0, 1.0]);
        let c = QuadraticCoefficients { x: 1.0, y: 1.0, z: ZERO };
        let pair = orthogonalize_pair(&a1, &a2, c, c).unwrap();
        assert!((pair.a - 1.0).abs() < 1e-12 && (pair.b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_diagonalization_of_commuting_diagonals() {
        let q = haar_unitary(&mut rng::seeded(5), 4);
        let conj = |d: &[f64]| &(&q * &ComplexMatrix::diag_real(d)) * &q.dagger();
        let family = [conj(&[1.0, 1.0, 2.0, 3.0]), conj(&[0.0, 5.0, 0.0, 0.0])];
        let p = joint_diagonalize_commuting(&family, STRUCTURE_TOL, 1).unwrap();
        assert!(p.unitarity_residual() < 1e-10);
        for m in &family {
            assert!((&(&p.dagger() * m) * &p).off_diagonal_norm() < 1e-9);
        }
        let bad = [pauli(1).unwrap(), pauli(3).unwrap()];
        assert!(matches!(joint_diagonalize_commuting(&bad, STRUCTURE_TOL, 1), Err(crate::Error::Structure(_))));
    }

    #[test]
    fn simultaneous_svd_of_scrambled_diagonals() {
        let mut r = rng::seeded(11);
        let (w, x) = (haar_unitary(&mut r, 3), haar_unitary(&mut r, 3));
        let diags = [
            ComplexMatrix::diag(&[ONE, Complex64::new(0.0, 2.0), ZERO]),
            ComplexMatrix::diag(&[Complex64::new(1.0, 1.0), ZERO, ONE]),
            ComplexMatrix::diag(&[ONE, ONE, ONE]),
        ];
        let family: Vec<_> = diags.iter().map(|d| &(&w * d) * &x).collect();
        match simultaneous_svd(&family, STRUCTURE_TOL, 3).unwrap() {
            SimultaneousSvd::Found { s, t, residual, .. } => {
                assert!(residual < 1e-9);
                assert!(s.unitarity_residual() < 1e-9 && t.unitarity_residual() < 1e-9);
            }
            SimultaneousSvd::NotFound(v) => panic!("{v:?}"),
        }
    }

    #[test]
    fn simultaneous_svd_handles_degenerate_members() {
        // Identity and a unitary share every singular value.
        let v = haar_unitary(&mut rng::seeded(12), 3);
        let w = haar_unitary(&mut rng::seeded(13), 3);
        let family = [&w * &v, w.clone()];
        assert!(matches!(simultaneous_svd(&family, STRUCTURE_TOL, 0).unwrap(), SimultaneousSvd::Found { .. }));
    }

    #[test]
    fn simultaneous_svd_rejects_paulis() {
        let family: Vec<_> = (1..4).map(|i| pauli(i).unwrap()).collect();
        assert!(matches!(simultaneous_svd(&family, STRUCTURE_TOL, 0).unwrap(), SimultaneousSvd::NotFound(_)));
    }

    #[test]
    fn commutant_of_block_diagonal_family() {
        let p0 = ComplexMatrix::basis_outer(2, 0, 0);
        let p1 = ComplexMatrix::basis_outer(2, 1, 1);
        let gens = [
            tensor_product(&p0, &haar_unitary(&mut rng::seeded(1), 2)).unwrap(),
            tensor_product(&p1, &haar_unitary(&mut rng::seeded(2), 2)).unwrap(),
        ];
        let mut family: Vec<ComplexMatrix> = gens.iter().map(|g| g.dagger()).collect();
        family.extend(gens.iter().cloned());
        match commutant_blocks(&family, 0, 4096).unwrap() {
            Commutant::Reducible { projectors, .. } => {
                assert!(projectors.len() >= 2);
                let total = projectors.iter().fold(ComplexMatrix::zeros(4, 4), |acc, p| &acc + p);
                assert!(close(&total, &ComplexMatrix::identity(4), 1e-10));
            }
            Commutant::Irreducible => panic!("family is block diagonal"),
        }
    }

    #[test]
    fn commutant_of_paulis_is_trivial() {
        let family: Vec<_> = (0..4).map(|i| pauli(i).unwrap()).collect();
        assert!(matches!(commutant_blocks(&family, 0, 4096).unwrap(), Commutant::Irreducible));
        assert!(commutant_blocks(&family, 0, 3).is_err());
    }
}
