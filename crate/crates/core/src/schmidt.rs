//! Operator Schmidt decompositions and ranks across arbitrary cuts.
//!
//! A cut is a nonempty proper subset of systems. The systems of the cut are
//! grouped into the left factor (in layout order), the rest into the right
//! factor, and the realigned operator is handed to the SVD.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::DMatrix;
use num_complex::Complex64;
#[allow(unused_imports)] // f64 math is inherent when std is linked
use num_traits::Float;

use crate::error::{bail, Result};
use crate::linalg::{self, RECONSTRUCTION_TOL};
use crate::matrix::{inverse_permutation, permute_systems, realign, tensor_product, ComplexMatrix, SystemLayout};
use crate::rng;

/// Default relative cutoff: a singular value counts iff it exceeds `tol · s_1`.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// `u = Σ s_i · left_i ⊗ right_i` across `cut`, with Hilbert–Schmidt
/// orthonormal factors and descending positive coefficients.
#[derive(Debug, Clone)]
pub struct SchmidtDecomposition {
    pub coefficients: Vec<f64>,
    pub left_factors: Vec<ComplexMatrix>,
    pub right_factors: Vec<ComplexMatrix>,
    /// Systems grouped on the left, sorted.
    pub cut: Vec<usize>,
    pub layout: SystemLayout,
}

impl SchmidtDecomposition {
    pub fn rank(&self) -> usize {
        self.coefficients.len()
    }

    /// Left factors with their coefficients absorbed: `A_i = s_i · left_i`.
    pub fn weighted_left(&self) -> Vec<ComplexMatrix> {
        self.left_factors.iter().zip(&self.coefficients).map(|(a, &s)| a.scale_real(s)).collect()
    }

    /// Permutation bringing the cut systems to the front.
    pub fn grouping_permutation(&self) -> Vec<usize> {
        self.layout.grouping_permutation(&self.cut)
    }

    /// Dimensions `(d_cut, d_rest)` of the grouped bipartition.
    pub fn grouped_dims(&self) -> (usize, usize) {
        let d_cut = self.layout.dim_of(&self.cut);
        (d_cut, self.layout.total() / d_cut)
    }

    /// Sum of the product terms in the grouped (cut-first) ordering.
    pub fn reconstruct_grouped(&self) -> Result<ComplexMatrix> {
        let (dl, dr) = self.grouped_dims();
        let mut acc = ComplexMatrix::zeros(dl * dr, dl * dr);
        for ((s, a), b) in self.coefficients.iter().zip(&self.left_factors).zip(&self.right_factors) {
            acc = &acc + &tensor_product(a, b)?.scale_real(*s);
        }
        Ok(acc)
    }

    /// Sum of the product terms in the original system order.
    pub fn reconstruct(&self) -> Result<ComplexMatrix> {
        let perm = self.grouping_permutation();
        let grouped_layout = self.layout.permuted(&perm);
        permute_systems(&self.reconstruct_grouped()?, &grouped_layout, &inverse_permutation(&perm))
    }
}

/// Numerical rank with its evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// Absolute threshold: singular values strictly above it are counted.
    pub tolerance_used: f64,
}

/// Brings the cut systems to the front and returns the grouped operator with
/// its two-system layout.
pub fn group_cut(
    u: &ComplexMatrix,
    layout: &SystemLayout,
    cut: &[usize],
) -> Result<(ComplexMatrix, SystemLayout, Vec<usize>)> {
    layout.check_operator(u)?;
    let cut = layout.check_cut(cut)?;
    let perm = layout.grouping_permutation(&cut);
    let grouped = permute_systems(u, layout, &perm)?;
    let d_cut = layout.dim_of(&cut);
    let bip = SystemLayout::bipartite(d_cut, layout.total() / d_cut)?;
    Ok((grouped, bip, cut))
}

fn lex_cmp(a: &[Complex64], b: &[Complex64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}

/// Operator Schmidt decomposition of `u` across `cut`.
pub fn operator_schmidt_decompose(
    u: &ComplexMatrix,
    layout: &SystemLayout,
    cut: &[usize],
    tol: f64,
) -> Result<SchmidtDecomposition> {
    let (grouped, bip, cut) = group_cut(u, layout, cut)?;
    let (da, db) = (bip.dims()[0], bip.dims()[1]);
    let realigned = realign(&grouped, &bip)?;
    let dec = linalg::svd(realigned.as_dmatrix())?;
    let rank = dec.rank(tol);

    let mut terms: Vec<(f64, Vec<Complex64>, Vec<Complex64>)> = (0..rank)
        .map(|i| {
            let mut left: Vec<Complex64> = dec.u.column(i).iter().copied().collect();
            let mut right: Vec<Complex64> = dec.v.column(i).iter().map(|z| z.conj()).collect();
            // Phase convention: first significant entry of the left factor real positive.
            if let Some(z) = left.iter().copied().find(|z| z.norm() > 1e-12) {
                let phase = z.conj() / z.norm();
                left.iter_mut().for_each(|x| *x *= phase);
                right.iter_mut().for_each(|x| *x *= phase.conj());
            }
            (dec.singular_values[i], left, right)
        })
        .collect();
    let top = terms.first().map_or(0.0, |t| t.0);
    terms.sort_by(|a, b| if (a.0 - b.0).abs() <= 1e-12 * top { lex_cmp(&a.1, &b.1) } else { b.0.total_cmp(&a.0) });

    let decomposition = SchmidtDecomposition {
        coefficients: terms.iter().map(|t| t.0).collect(),
        left_factors: terms.iter().map(|t| ComplexMatrix::unvectorize(&t.1, da, da)).collect(),
        right_factors: terms.iter().map(|t| ComplexMatrix::unvectorize(&t.2, db, db)).collect(),
        cut,
        layout: layout.clone(),
    };
    let residual = decomposition.reconstruct_grouped()?.distance(&grouped);
    if residual > RECONSTRUCTION_TOL * grouped.frobenius_norm() {
        bail!(Numerical, "Schmidt reconstruction residual {residual:.3e} exceeds {RECONSTRUCTION_TOL:e} relative");
    }
    Ok(decomposition)
}

/// Schmidt rank of `u` across `cut`.
pub fn schmidt_rank(u: &ComplexMatrix, layout: &SystemLayout, cut: &[usize], tol: f64) -> Result<RankReport> {
    let (grouped, bip, _) = group_cut(u, layout, cut)?;
    let realigned = realign(&grouped, &bip)?;
    let dec = linalg::svd(realigned.as_dmatrix())?;
    let top = dec.singular_values.first().copied().unwrap_or(0.0);
    let threshold = if top > 0.0 { tol * top } else { tol };
    Ok(RankReport {
        rank: dec.singular_values.iter().filter(|&&s| s > threshold).count(),
        singular_values: dec.singular_values,
        tolerance_used: threshold,
    })
}

/// Every bipartition of `n` systems once, as the side containing system 0.
pub fn all_bipartitions(n: usize) -> Vec<Vec<usize>> {
    if n < 2 {
        return Vec::new();
    }
    (0u64..(1u64 << (n - 1)) - 1)
        .map(|mask| {
            let mut side = vec![0];
            side.extend((1..n).filter(|&s| mask & (1 << (s - 1)) != 0));
            side
        })
        .filter(|side| side.len() < n)
        .collect()
}

/// Options for the alternating-least-squares upper bound.
#[derive(Debug, Clone, Copy)]
pub struct AlsOptions {
    pub restarts: usize,
    pub sweeps: usize,
    pub residual_target: f64,
    /// Ranks above `lower + extra_ranks` are not attempted.
    pub extra_ranks: usize,
    pub seed: u64,
}

impl Default for AlsOptions {
    fn default() -> Self {
        Self { restarts: 32, sweeps: 500, residual_target: 1e-8, extra_ranks: 8, seed: 0 }
    }
}

/// Certified interval for the multipartite (tensor) Schmidt rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RankBounds {
    /// Maximum Schmidt rank over all bipartitions.
    pub lower: usize,
    /// Smallest rank at which ALS reached the residual target, or `cap + 1`
    /// when no attempted rank succeeded.
    pub upper: usize,
    /// False when `upper` is the `cap + 1` placeholder.
    pub confirmed: bool,
    /// Relative residual of the decomposition backing `upper`.
    pub residual: f64,
    /// The bipartition attaining `lower`.
    pub lower_cut: Vec<usize>,
}

/// Lower bound from bipartitions, upper bound from seeded ALS.
pub fn multipartite_rank_bounds(
    u: &ComplexMatrix,
    layout: &SystemLayout,
    tol: f64,
    options: &AlsOptions,
) -> Result<RankBounds> {
    if layout.len() < 2 {
        bail!(Argument, "multipartite rank needs at least two systems");
    }
    layout.check_operator(u)?;
    let mut lower = 0;
    let mut lower_cut = vec![0];
    for cut in all_bipartitions(layout.len()) {
        let r = schmidt_rank(u, layout, &cut, tol)?.rank;
        if r > lower {
            lower = r;
            lower_cut = cut;
        }
    }
    if lower == 0 {
        return Ok(RankBounds { lower, upper: 0, confirmed: true, residual: 0.0, lower_cut });
    }
    if layout.len() == 2 {
        return Ok(RankBounds { lower, upper: lower, confirmed: true, residual: 0.0, lower_cut });
    }
    let tensor = OperatorTensor::new(u, layout);
    let cap = lower + options.extra_ranks;
    for rank in lower..=cap {
        let best = (0..options.restarts)
            .map(|restart| {
                let mut rng = rng::derived(options.seed ^ (rank as u64) << 32, restart as u64);
                tensor.als(rank, options, &mut rng)
            })
            .try_fold(f64::INFINITY, |best: f64, res| -> Result<f64> {
                let r = res?;
                Ok(best.min(r))
            })?;
        if best <= options.residual_target {
            return Ok(RankBounds { lower, upper: rank, confirmed: true, residual: best, lower_cut });
        }
    }
    Ok(RankBounds { lower, upper: cap + 1, confirmed: false, residual: f64::NAN, lower_cut })
}

/// An n-partite operator viewed as an order-n tensor whose mode `k` indexes
/// the `d_k²` entries of the local factor.
struct OperatorTensor {
    modes: Vec<usize>,
    entries: Vec<Complex64>,
    norm: f64,
}

impl OperatorTensor {
    fn new(u: &ComplexMatrix, layout: &SystemLayout) -> Self {
        let dims = layout.dims();
        let modes: Vec<usize> = dims.iter().map(|d| d * d).collect();
        let total: usize = modes.iter().product();
        let mode_layout = SystemLayout::new(modes.clone()).expect("positive modes");
        let mut entries = vec![Complex64::new(0.0, 0.0); total];
        let mut rows = vec![0; dims.len()];
        let mut cols = vec![0; dims.len()];
        for (idx, slot) in entries.iter_mut().enumerate() {
            for (k, digit) in mode_layout.digits(idx).into_iter().enumerate() {
                rows[k] = digit / dims[k];
                cols[k] = digit % dims[k];
            }
            *slot = u.get(layout.index_of(&rows), layout.index_of(&cols));
        }
        let norm = entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        Self { modes, entries, norm }
    }

    fn for_each_index(&self, mut f: impl FnMut(usize, &[usize])) {
        let mut digits = vec![0usize; self.modes.len()];
        for idx in 0..self.entries.len() {
            f(idx, &digits);
            for k in (0..digits.len()).rev() {
                digits[k] += 1;
                if digits[k] < self.modes[k] {
                    break;
                }
                digits[k] = 0;
            }
        }
    }

    fn relative_residual(&self, factors: &[DMatrix<Complex64>], rank: usize) -> f64 {
        let mut err = 0.0;
        self.for_each_index(|idx, digits| {
            let approx: Complex64 = (0..rank)
                .map(|r| digits.iter().enumerate().map(|(k, &i)| factors[k][(i, r)]).product::<Complex64>())
                .sum();
            err += (self.entries[idx] - approx).norm_sqr();
        });
        err.sqrt() / self.norm
    }

    /// One ALS run; returns the final relative residual.
    fn als(&self, rank: usize, options: &AlsOptions, rng: &mut rng::SeededRng) -> Result<f64> {
        let n = self.modes.len();
        let mut factors: Vec<DMatrix<Complex64>> = self.modes.iter().map(|&m| rng::ginibre(rng, m, rank)).collect();
        let mut residual = self.relative_residual(&factors, rank);
        let mut checkpoint = residual;
        for sweep in 0..options.sweeps {
            for k in 0..n {
                let mut gram = DMatrix::from_element(rank, rank, Complex64::new(1.0, 0.0));
                for (j, f) in factors.iter().enumerate() {
                    if j != k {
                        gram.component_mul_assign(&(f.transpose() * f.conjugate()));
                    }
                }
                let mut mttkrp = DMatrix::<Complex64>::zeros(self.modes[k], rank);
                self.for_each_index(|idx, digits| {
                    let t = self.entries[idx];
                    if t.norm_sqr() == 0.0 {
                        return;
                    }
                    for r in 0..rank {
                        let mut w = t;
                        for (j, &i) in digits.iter().enumerate() {
                            if j != k {
                                w *= factors[j][(i, r)].conj();
                            }
                        }
                        mttkrp[(digits[k], r)] += w;
                    }
                });
                factors[k] = mttkrp * linalg::pseudo_inverse(&gram, 1e-13)?;
            }
            residual = self.relative_residual(&factors, rank);
            if residual <= options.residual_target {
                break;
            }
            if sweep % 50 == 49 {
                if residual > checkpoint * (1.0 - 1e-4) {
                    break;
                }
                checkpoint = residual;
            }
        }
        Ok(residual)
    }
}

/// Evaluation of the Schmidt-rank inequalities for `Σ_j A_j ⊗ B_j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchIneqReport {
    pub delta_a: usize,
    pub delta_b: usize,
    pub terms: usize,
    pub rank: usize,
    /// `δ_A + δ_B ≤ N + r`
    pub holds_sum: bool,
    /// `r ≤ min{δ_A, δ_B} ≤ max{δ_A, δ_B} ≤ N`
    pub holds_chain: bool,
    /// `max{δ_A, δ_B} = N ⇒ min{δ_A, δ_B} = r`
    pub holds_saturation: bool,
}

/// Computes span dimensions and the Schmidt rank of `Σ a_j ⊗ b_j` and checks
/// the three inequalities relating them.
pub fn schineq_check(a_ops: &[ComplexMatrix], b_ops: &[ComplexMatrix]) -> Result<SchIneqReport> {
    if a_ops.len() != b_ops.len() {
        bail!(Dimension, "{} left operators but {} right operators", a_ops.len(), b_ops.len());
    }
    let Some((a0, b0)) = a_ops.first().zip(b_ops.first()) else {
        bail!(Argument, "need at least one term");
    };
    let shape_ok = |ops: &[ComplexMatrix], r: usize, c: usize| ops.iter().all(|m| m.rows() == r && m.cols() == c);
    if !shape_ok(a_ops, a0.rows(), a0.cols()) || !shape_ok(b_ops, b0.rows(), b0.cols()) {
        bail!(Dimension, "operators on one side differ in shape");
    }
    let delta_a = linalg::span_dimension(a_ops, DEFAULT_RANK_TOL)?;
    let delta_b = linalg::span_dimension(b_ops, DEFAULT_RANK_TOL)?;
    // Realignment of Σ a_j ⊗ b_j is Σ vec(a_j) vec(b_j)^T.
    let mut realigned = DMatrix::zeros(a0.rows() * a0.cols(), b0.rows() * b0.cols());
    for (a, b) in a_ops.iter().zip(b_ops) {
        realigned += a.vectorize() * b.vectorize().transpose();
    }
    let rank =
        if realigned.iter().all(|z| z.norm_sqr() == 0.0) { 0 } else { linalg::rank(&realigned, DEFAULT_RANK_TOL)? };
    let n = a_ops.len();
    let (lo, hi) = (delta_a.min(delta_b), delta_a.max(delta_b));
    Ok(SchIneqReport {
        delta_a,
        delta_b,
        terms: n,
        rank,
        holds_sum: delta_a + delta_b <= n + rank,
        holds_chain: rank <= lo && hi <= n,
        holds_saturation: hi != n || lo == rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{cnot, four_qubit_example, pauli, swap_gate, u3, u_odd_n};

    fn two_qubits() -> SystemLayout {
        SystemLayout::qubits(2)
    }

    #[test]
    fn identity_has_rank_one_with_coefficient_two() {
        let d = operator_schmidt_decompose(&ComplexMatrix::identity(4), &two_qubits(), &[0], DEFAULT_RANK_TOL).unwrap();
        assert_eq!(d.rank(), 1);
        assert!((d.coefficients[0] - 2.0).abs() < 1e-12);
        let half = ComplexMatrix::identity(2).scale_real(core::f64::consts::FRAC_1_SQRT_2);
        assert!(d.left_factors[0].distance(&half) < 1e-12);
        assert!(d.right_factors[0].distance(&half) < 1e-12);
    }

    #[test]
    fn swap_has_four_unit_coefficients() {
        let d = operator_schmidt_decompose(&swap_gate(), &two_qubits(), &[0], DEFAULT_RANK_TOL).unwrap();
        assert_eq!(d.rank(), 4);
        for s in &d.coefficients {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cnot_has_two_root_two_coefficients() {
        let d = operator_schmidt_decompose(&cnot(), &two_qubits(), &[0], DEFAULT_RANK_TOL).unwrap();
        assert_eq!(d.rank(), 2);
        for s in &d.coefficients {
            assert!((s - 2f64.sqrt()).abs() < 1e-12);
        }
        assert!(d.reconstruct().unwrap().distance(&cnot()) < 1e-12);
    }

    #[test]
    fn factors_are_orthonormal() {
        let d = operator_schmidt_decompose(&u3(), &SystemLayout::qubits(3), &[1], DEFAULT_RANK_TOL).unwrap();
        for i in 0..d.rank() {
            for j in 0..d.rank() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((d.left_factors[i].hs_inner(&d.left_factors[j]).norm() - expected).abs() < 1e-10);
                assert!((d.right_factors[i].hs_inner(&d.right_factors[j]).norm() - expected).abs() < 1e-10);
            }
        }
        assert!(d.reconstruct().unwrap().distance(&u3()) < 1e-10);
    }

    #[test]
    fn named_gate_ranks() {
        let l3 = SystemLayout::qubits(3);
        for cut in [[0usize], [1], [2]] {
            assert_eq!(schmidt_rank(&u3(), &l3, &cut, DEFAULT_RANK_TOL).unwrap().rank, 3);
        }
        let l4 = SystemLayout::qubits(4);
        let u = four_qubit_example();
        assert_eq!(schmidt_rank(&u, &l4, &[0], DEFAULT_RANK_TOL).unwrap().rank, 4);
        assert_eq!(schmidt_rank(&u, &l4, &[0, 1], DEFAULT_RANK_TOL).unwrap().rank, 2);
    }

    #[test]
    fn rank_report_threshold_matches_count() {
        let rep = schmidt_rank(&swap_gate(), &two_qubits(), &[1], DEFAULT_RANK_TOL).unwrap();
        let counted = rep.singular_values.iter().filter(|&&s| s > rep.tolerance_used).count();
        assert_eq!(counted, rep.rank);
    }

    #[test]
    fn invalid_cuts_are_rejected() {
        let l = two_qubits();
        assert!(schmidt_rank(&swap_gate(), &l, &[], DEFAULT_RANK_TOL).is_err());
        assert!(schmidt_rank(&swap_gate(), &l, &[0, 1], DEFAULT_RANK_TOL).is_err());
        assert!(schmidt_rank(&swap_gate(), &l, &[2], DEFAULT_RANK_TOL).is_err());
    }

    #[test]
    fn bipartitions_enumerated_once() {
        assert_eq!(all_bipartitions(2), vec![vec![0]]);
        assert_eq!(all_bipartitions(3).len(), 3);
        assert_eq!(all_bipartitions(5).len(), 15);
    }

    #[test]
    fn rank_bounds_for_product_and_u3() {
        let l3 = SystemLayout::qubits(3);
        let opts = AlsOptions { seed: 3, ..AlsOptions::default() };
        let product = crate::matrix::tensor_all(&[pauli(1).unwrap(), pauli(2).unwrap(), pauli(3).unwrap()]).unwrap();
        let b = multipartite_rank_bounds(&product, &l3, DEFAULT_RANK_TOL, &opts).unwrap();
        assert_eq!((b.lower, b.upper, b.confirmed), (1, 1, true));
        let b = multipartite_rank_bounds(&u3(), &l3, DEFAULT_RANK_TOL, &opts).unwrap();
        assert_eq!((b.lower, b.upper, b.confirmed), (3, 3, true));
    }

    #[test]
    fn rank_bounds_for_u5() {
        let l5 = SystemLayout::qubits(5);
        let opts = AlsOptions { seed: 11, ..AlsOptions::default() };
        let b = multipartite_rank_bounds(&u_odd_n(5).unwrap(), &l5, DEFAULT_RANK_TOL, &opts).unwrap();
        assert_eq!((b.lower, b.upper), (3, 3));
    }

    #[test]
    fn schineq_on_u3_terms() {
        let s = |i| pauli(i).unwrap();
        let a: Vec<_> = [0, 1, 3].iter().map(|&i| s(i)).collect();
        let b: Vec<_> = [0, 1, 3].iter().map(|&i| tensor_product(&s(i), &s(i)).unwrap()).collect();
        let rep = schineq_check(&a, &b).unwrap();
        assert_eq!((rep.delta_a, rep.delta_b, rep.terms, rep.rank), (3, 3, 3, 3));
        assert!(rep.holds_sum && rep.holds_chain && rep.holds_saturation);
        assert_eq!(rep.delta_a + rep.delta_b, 6);
    }

    #[test]
    fn schineq_with_repeated_left_factor() {
        let id = ComplexMatrix::identity(2);
        let a = vec![id.clone(), id];
        let b = vec![pauli(1).unwrap(), pauli(3).unwrap()];
        let rep = schineq_check(&a, &b).unwrap();
        assert_eq!((rep.delta_a, rep.delta_b, rep.terms, rep.rank), (1, 2, 2, 1));
        assert!(rep.holds_sum);
    }

    #[test]
    fn schineq_rejects_mismatched_lists() {
        assert!(schineq_check(&[ComplexMatrix::identity(2)], &[]).is_err());
    }
}
