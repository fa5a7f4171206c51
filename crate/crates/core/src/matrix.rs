//! Dense complex matrices, state vectors and tensor-structure primitives.
//!
//! Every operator in the crate is a [`ComplexMatrix`]; its tensor
//! factorization is described separately by a [`SystemLayout`]. Matrices are
//! immutable values: all operations return new matrices.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
#[allow(unused_imports)] // f64 math is inherent when std is linked
use num_traits::Float;

use crate::error::{bail, Result};

/// Largest side length any constructed matrix may have unless a caller
/// passes an explicit cap.
pub const DEFAULT_MAX_DIM: usize = 4096;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Dense complex matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<Complex64>);

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows(), self.cols())?;
        for i in 0..self.rows() {
            write!(f, " ")?;
            for j in 0..self.cols() {
                let z = self.0[(i, j)];
                write!(f, " {:+.4}{:+.4}i", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, data: &[Complex64]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            bail!(Dimension, "matrix must have positive dimensions, got {rows}x{cols}");
        }
        if data.len() != rows * cols {
            bail!(Dimension, "expected {} entries for a {rows}x{cols} matrix, got {}", rows * cols, data.len());
        }
        if let Some(pos) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            bail!(Argument, "entry {pos} is not finite");
        }
        Ok(Self(DMatrix::from_row_slice(rows, cols, data)))
    }

    /// Wraps a backend matrix. Entries are assumed finite.
    pub fn from_dmatrix(m: DMatrix<Complex64>) -> Self {
        debug_assert!(m.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        Self(m)
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        Self(DMatrix::from_fn(rows, cols, f))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    /// Diagonal matrix with the given entries.
    pub fn diag(entries: &[Complex64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    /// Real diagonal matrix.
    pub fn diag_real(entries: &[f64]) -> Self {
        let v: Vec<Complex64> = entries.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::diag(&v)
    }

    /// `|ket⟩⟨bra|` for computational basis states of dimension `dim`.
    pub fn basis_outer(dim: usize, ket: usize, bra: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        m[(ket, bra)] = ONE;
        Self(m)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<Complex64> {
        self.0
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    /// Row-major vectorization as a column.
    pub fn vectorize(&self) -> DVector<Complex64> {
        DVector::from_vec(self.to_row_major())
    }

    /// Inverse of [`ComplexMatrix::vectorize`].
    pub fn unvectorize(v: &[Complex64], rows: usize, cols: usize) -> Self {
        Self(DMatrix::from_row_slice(rows, cols, v))
    }

    pub fn dagger(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn conj(&self) -> Self {
        Self(self.0.map(|z| z.conj()))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self(&self.0 * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols() != other.rows() {
            bail!(Dimension, "cannot multiply {}x{} by {}x{}", self.rows(), self.cols(), other.rows(), other.cols());
        }
        Ok(Self(&self.0 * &other.0))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    /// Hilbert–Schmidt inner product `tr(self† other)`.
    pub fn hs_inner(&self, other: &Self) -> Complex64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    /// `‖U†U − I‖_F` for square matrices.
    pub fn unitarity_residual(&self) -> f64 {
        let n = self.rows();
        let g = self.0.adjoint() * &self.0;
        (g - DMatrix::<Complex64>::identity(n, n)).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.is_square() && self.unitarity_residual() <= tol
    }

    /// Frobenius distance between two equally sized matrices.
    pub fn distance(&self, other: &Self) -> f64 {
        (&self.0 - &other.0).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Frobenius mass strictly off the diagonal.
    pub fn off_diagonal_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                if i != j {
                    s += self.0[(i, j)].norm_sqr();
                }
            }
        }
        s.sqrt()
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.rows().min(self.cols())).map(|i| self.0[(i, i)]).collect()
    }

    /// Commutator `[self, other]`.
    pub fn commutator(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0 - &other.0 * &self.0)
    }

    /// Copy of the square block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self(self.0.view((r0, c0), (rows, cols)).into_owned())
    }

    /// Column `j` as a vector.
    pub fn column(&self, j: usize) -> DVector<Complex64> {
        self.0.column(j).into_owned()
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    /// Panics on a shape mismatch; use [`ComplexMatrix::matmul`] for a checked product.
    fn mul(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

/// Ordered local dimensions of a tensor-product space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SystemLayout {
    dims: Vec<usize>,
}

impl SystemLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            bail!(Dimension, "a layout needs at least one system");
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            bail!(Dimension, "system {pos} has dimension 0");
        }
        let mut total: usize = 1;
        for &d in &dims {
            total = match total.checked_mul(d) {
                Some(t) => t,
                None => bail!(Dimension, "total dimension overflows"),
            };
        }
        Ok(Self { dims })
    }

    /// Two-system layout `[d_a, d_b]`.
    pub fn bipartite(d_a: usize, d_b: usize) -> Result<Self> {
        Self::new(vec![d_a, d_b])
    }

    /// `n` qubits.
    pub fn qubits(n: usize) -> Self {
        Self { dims: vec![2; n] }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    /// Product of the dimensions of the listed systems.
    pub fn dim_of(&self, systems: &[usize]) -> usize {
        systems.iter().map(|&s| self.dims[s]).product()
    }

    /// Checks that `matrix` is square with the layout's total dimension.
    pub fn check_operator(&self, matrix: &ComplexMatrix) -> Result<()> {
        let n = self.total();
        if matrix.rows() != n || matrix.cols() != n {
            bail!(Dimension, "layout {:?} needs a {n}x{n} matrix, got {}x{}", self.dims, matrix.rows(), matrix.cols());
        }
        Ok(())
    }

    /// Validates a cut (nonempty proper subset of distinct in-range systems)
    /// and returns it sorted.
    pub fn check_cut(&self, cut: &[usize]) -> Result<Vec<usize>> {
        let mut sorted = cut.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != cut.len() {
            bail!(Argument, "cut {cut:?} lists a system twice");
        }
        if let Some(&bad) = sorted.iter().find(|&&s| s >= self.len()) {
            bail!(Argument, "system {bad} out of range for {} systems", self.len());
        }
        if sorted.is_empty() || sorted.len() == self.len() {
            bail!(Argument, "cut {cut:?} must be a nonempty proper subset");
        }
        Ok(sorted)
    }

    /// Systems not in `cut`, in layout order.
    pub fn complement(&self, cut: &[usize]) -> Vec<usize> {
        (0..self.len()).filter(|s| !cut.contains(s)).collect()
    }

    /// Permutation placing `cut` first (in the given order) followed by the
    /// remaining systems in layout order.
    pub fn grouping_permutation(&self, cut: &[usize]) -> Vec<usize> {
        let mut perm = cut.to_vec();
        perm.extend(self.complement(cut));
        perm
    }

    /// Layout after reordering systems so that new system `i` is old `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self { dims: perm.iter().map(|&p| self.dims[p]).collect() }
    }

    /// Decomposes a linear index into per-system digits (row-major, system 0 most significant).
    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
        out
    }

    pub fn index_of(&self, digits: &[usize]) -> usize {
        digits.iter().zip(&self.dims).fold(0, |acc, (&x, &d)| acc * d + x)
    }
}

fn check_perm(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        bail!(Argument, "permutation has {} entries for {n} systems", perm.len());
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            bail!(Argument, "{perm:?} is not a permutation of 0..{n}");
        }
        seen[p] = true;
    }
    Ok(())
}

/// For each basis index of the permuted space, the matching index of the original space.
fn basis_map(layout: &SystemLayout, perm: &[usize]) -> Vec<usize> {
    let new_layout = layout.permuted(perm);
    let n = layout.total();
    let mut old_digits = vec![0; layout.len()];
    (0..n)
        .map(|idx| {
            let nd = new_layout.digits(idx);
            for (i, &p) in perm.iter().enumerate() {
                old_digits[p] = nd[i];
            }
            layout.index_of(&old_digits)
        })
        .collect()
}

/// Kronecker product, capped at [`DEFAULT_MAX_DIM`].
pub fn tensor_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    tensor_product_capped(a, b, DEFAULT_MAX_DIM)
}

/// Kronecker product refusing results with more than `max_dim` rows or columns.
pub fn tensor_product_capped(a: &ComplexMatrix, b: &ComplexMatrix, max_dim: usize) -> Result<ComplexMatrix> {
    let rows = a.rows().checked_mul(b.rows());
    let cols = a.cols().checked_mul(b.cols());
    match (rows, cols) {
        (Some(r), Some(c)) if r <= max_dim && c <= max_dim => Ok(ComplexMatrix(a.0.kronecker(&b.0))),
        _ => bail!(
            Dimension,
            "tensor product {}x{} ⊗ {}x{} exceeds the dimension cap {max_dim}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        ),
    }
}

/// Kronecker product of a nonempty list of factors, left to right.
pub fn tensor_all(factors: &[ComplexMatrix]) -> Result<ComplexMatrix> {
    let Some((first, rest)) = factors.split_first() else {
        bail!(Argument, "tensor product of an empty list");
    };
    rest.iter().try_fold(first.clone(), |acc, f| tensor_product(&acc, f))
}

/// Reshuffles a bipartite operator so that its ordinary SVD is the operator
/// Schmidt decomposition: `M[(i,k),(j,l)] = u[(i,j),(k,l)]`.
pub fn realign(u: &ComplexMatrix, layout: &SystemLayout) -> Result<ComplexMatrix> {
    if layout.len() != 2 {
        bail!(Dimension, "realign needs a two-system layout, got {:?}", layout.dims());
    }
    layout.check_operator(u)?;
    let (da, db) = (layout.dims[0], layout.dims[1]);
    Ok(ComplexMatrix::from_fn(da * da, db * db, |row, col| {
        let (i, k) = (row / da, row % da);
        let (j, l) = (col / db, col % db);
        u.0[(i * db + j, k * db + l)]
    }))
}

/// Inverse of [`realign`].
pub fn unrealign(m: &ComplexMatrix, layout: &SystemLayout) -> Result<ComplexMatrix> {
    if layout.len() != 2 {
        bail!(Dimension, "unrealign needs a two-system layout");
    }
    let (da, db) = (layout.dims[0], layout.dims[1]);
    if m.rows() != da * da || m.cols() != db * db {
        bail!(Dimension, "realigned matrix has the wrong shape for {:?}", layout.dims());
    }
    Ok(ComplexMatrix::from_fn(da * db, da * db, |r, c| {
        let (i, j) = (r / db, r % db);
        let (k, l) = (c / db, c % db);
        m.0[(i * da + k, j * db + l)]
    }))
}

/// Re-expresses `u` with its tensor factors reordered: system `i` of the
/// result is system `perm[i]` of the input.
pub fn permute_systems(u: &ComplexMatrix, layout: &SystemLayout, perm: &[usize]) -> Result<ComplexMatrix> {
    layout.check_operator(u)?;
    check_perm(perm, layout.len())?;
    let map = basis_map(layout, perm);
    let n = layout.total();
    Ok(ComplexMatrix::from_fn(n, n, |r, c| u.0[(map[r], map[c])]))
}

/// Applies the same reordering as [`permute_systems`] to a state vector.
pub fn permute_state(psi: &StateVector, layout: &SystemLayout, perm: &[usize]) -> Result<StateVector> {
    if psi.dim() != layout.total() {
        bail!(Dimension, "state of dimension {} for layout {:?}", psi.dim(), layout.dims());
    }
    check_perm(perm, layout.len())?;
    let map = basis_map(layout, perm);
    Ok(StateVector(DVector::from_fn(psi.dim(), |i, _| psi.0[map[i]])))
}

/// Inverse permutation.
pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Traces out every system not listed in `keep`. Kept systems appear in layout order.
pub fn partial_trace(u: &ComplexMatrix, layout: &SystemLayout, keep: &[usize]) -> Result<ComplexMatrix> {
    layout.check_operator(u)?;
    let mut kept = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.iter().any(|&s| s >= layout.len()) {
        bail!(Argument, "kept systems {keep:?} out of range");
    }
    if kept.len() == layout.len() {
        return Ok(u.clone());
    }
    let perm = layout.grouping_permutation(&kept);
    let grouped = permute_systems(u, layout, &perm)?;
    let dk = layout.dim_of(&kept);
    let dr = layout.total() / dk;
    Ok(ComplexMatrix::from_fn(dk, dk, |a, b| (0..dr).map(|r| grouped.0[(a * dr + r, b * dr + r)]).sum()))
}

/// Normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(DVector<Complex64>);

/// Allowed deviation of a state's norm from 1.
pub const STATE_NORM_TOL: f64 = 1e-12;

impl StateVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            bail!(Dimension, "state vector must be nonempty");
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            bail!(Argument, "state vector has non-finite amplitudes");
        }
        let v = DVector::from_vec(amplitudes);
        let norm = v.norm();
        if (norm - 1.0).abs() > STATE_NORM_TOL {
            bail!(Argument, "state vector has norm {norm}, expected 1");
        }
        Ok(Self(v))
    }

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalized(amplitudes: Vec<Complex64>) -> Result<Self> {
        let v = DVector::from_vec(amplitudes);
        let norm = v.norm();
        if !(norm.is_finite() && norm > 0.0) {
            bail!(Argument, "cannot normalize a zero or non-finite vector");
        }
        Ok(Self(v / Complex64::new(norm, 0.0)))
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            bail!(Argument, "basis index {index} out of range for dimension {dim}");
        }
        let mut v = DVector::zeros(dim);
        v[index] = ONE;
        Ok(Self(v))
    }

    /// Uniform superposition `|+⟩` of dimension `dim`.
    pub fn plus(dim: usize) -> Self {
        let a = 1.0 / (dim as f64).sqrt();
        Self(DVector::from_element(dim, Complex64::new(a, 0.0)))
    }

    /// Tensor product of local states.
    pub fn product(states: &[StateVector]) -> Result<Self> {
        let Some((first, rest)) = states.split_first() else {
            bail!(Argument, "product of an empty list of states");
        };
        let mut v = first.0.clone();
        for s in rest {
            v = v.kronecker(&s.0);
        }
        Ok(Self(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.0
    }

    pub fn apply(&self, u: &ComplexMatrix) -> Result<Self> {
        if u.cols() != self.dim() || u.rows() != u.cols() {
            bail!(Dimension, "cannot apply a {}x{} operator to dimension {}", u.rows(), u.cols(), self.dim());
        }
        Ok(Self(&u.0 * &self.0))
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.0.dotc(&other.0)
    }

    /// Phase-insensitive overlap `|⟨self|other⟩|`.
    pub fn fidelity(&self, other: &Self) -> f64 {
        self.inner(other).norm()
    }

    /// Amplitudes reshaped as a `rows x (dim/rows)` coefficient matrix.
    pub fn coefficient_matrix(&self, rows: usize) -> Result<ComplexMatrix> {
        if rows == 0 || !self.dim().is_multiple_of(rows) {
            bail!(Dimension, "cannot reshape dimension {} into {rows} rows", self.dim());
        }
        Ok(ComplexMatrix::unvectorize(self.0.as_slice(), rows, self.dim() / rows))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{pauli, swap_gate, u3};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn identity_kron_identity() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(tensor_product(&i2, &i2).unwrap(), ComplexMatrix::identity(4));
    }

    #[test]
    fn pauli_x_kron_pauli_x_is_antidiagonal() {
        let x = pauli(1).unwrap();
        let xx = tensor_product(&x, &x).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i + j == 3 { c(1.0) } else { ZERO };
                assert_eq!(xx.get(i, j), expected);
            }
        }
    }

    #[test]
    fn tensor_cap_is_enforced() {
        let a = ComplexMatrix::identity(64);
        assert!(tensor_product_capped(&a, &a, 4095).is_err());
        assert!(tensor_product_capped(&a, &a, 4096).is_ok());
    }

    #[test]
    fn from_row_major_rejects_bad_input() {
        assert!(ComplexMatrix::from_row_major(2, 2, &[ONE; 3]).is_err());
        let nan = Complex64::new(f64::NAN, 0.0);
        assert!(ComplexMatrix::from_row_major(1, 1, &[nan]).is_err());
        assert!(ComplexMatrix::from_row_major(0, 1, &[]).is_err());
    }

    #[test]
    fn realign_of_identity_is_rank_one() {
        let layout = SystemLayout::bipartite(2, 2).unwrap();
        let m = realign(&ComplexMatrix::identity(4), &layout).unwrap();
        // vec(I) vec(I)^T
        let v = ComplexMatrix::identity(2).to_row_major();
        for r in 0..4 {
            for s in 0..4 {
                assert_eq!(m.get(r, s), v[r] * v[s]);
            }
        }
    }

    #[test]
    fn realign_round_trips() {
        let layout = SystemLayout::bipartite(2, 3).unwrap();
        let u = ComplexMatrix::from_fn(6, 6, |i, j| Complex64::new(i as f64, j as f64 * 0.5));
        let back = unrealign(&realign(&u, &layout).unwrap(), &layout).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn realign_rejects_wrong_layout() {
        let layout = SystemLayout::bipartite(2, 3).unwrap();
        assert!(realign(&ComplexMatrix::identity(4), &layout).is_err());
        let three = SystemLayout::qubits(3);
        assert!(realign(&ComplexMatrix::identity(8), &three).is_err());
    }

    #[test]
    fn swapping_factors_of_a_product() {
        let a = ComplexMatrix::from_fn(2, 2, |i, j| c((i * 2 + j) as f64 + 1.0));
        let b = ComplexMatrix::from_fn(3, 3, |i, j| Complex64::new(i as f64, j as f64));
        let ab = tensor_product(&a, &b).unwrap();
        let layout = SystemLayout::bipartite(2, 3).unwrap();
        let swapped = permute_systems(&ab, &layout, &[1, 0]).unwrap();
        assert_eq!(swapped, tensor_product(&b, &a).unwrap());
        let layout_ba = layout.permuted(&[1, 0]);
        assert_eq!(permute_systems(&swapped, &layout_ba, &[1, 0]).unwrap(), ab);
    }

    #[test]
    fn identity_permutation_is_noop() {
        let layout = SystemLayout::qubits(3);
        let u = u3();
        assert_eq!(permute_systems(&u, &layout, &[0, 1, 2]).unwrap(), u);
    }

    #[test]
    fn u3_is_symmetric_under_every_permutation() {
        let layout = SystemLayout::qubits(3);
        let u = u3();
        let perms = [[0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for p in perms {
            let v = permute_systems(&u, &layout, &p).unwrap();
            assert!(v.distance(&u) < 1e-15, "perm {p:?}");
        }
    }

    #[test]
    fn bad_permutation_is_rejected() {
        let layout = SystemLayout::qubits(3);
        let u = ComplexMatrix::identity(8);
        assert!(permute_systems(&u, &layout, &[0, 0, 1]).is_err());
        assert!(permute_systems(&u, &layout, &[0, 1]).is_err());
    }

    #[test]
    fn partial_trace_of_product() {
        let a = ComplexMatrix::from_fn(2, 2, |i, j| Complex64::new((i + j) as f64, 1.0));
        let b = ComplexMatrix::from_fn(3, 3, |i, j| Complex64::new(i as f64 - j as f64, 0.5));
        let ab = tensor_product(&a, &b).unwrap();
        let layout = SystemLayout::bipartite(2, 3).unwrap();
        let reduced = partial_trace(&ab, &layout, &[0]).unwrap();
        assert!(reduced.distance(&a.scale(b.trace())) < 1e-12);
        let reduced_b = partial_trace(&ab, &layout, &[1]).unwrap();
        assert!(reduced_b.distance(&b.scale(a.trace())) < 1e-12);
    }

    #[test]
    fn swap_norm_and_dagger() {
        let s = swap_gate();
        assert!((s.frobenius_norm() - 2.0).abs() < 1e-15);
        let u = u3();
        assert_eq!(u.dagger().dagger(), u);
    }

    #[test]
    fn u3_is_unitary() {
        assert!(u3().unitarity_residual() < 1e-12);
    }

    #[test]
    fn state_vector_checks_norm() {
        assert!(StateVector::new(vec![ONE, ONE]).is_err());
        assert!(StateVector::normalized(vec![ONE, ONE]).is_ok());
        assert!(StateVector::normalized(vec![ZERO, ZERO]).is_err());
    }

    #[test]
    fn digits_round_trip() {
        let layout = SystemLayout::new(vec![2, 3, 4]).unwrap();
        for idx in 0..24 {
            assert_eq!(layout.index_of(&layout.digits(idx)), idx);
        }
        assert_eq!(layout.digits(23), vec![1, 2, 3]);
    }
}
