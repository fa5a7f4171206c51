//! Schmidt rank of the output when a unitary acts on a product input.

use alloc::vec::Vec;

use nalgebra::DVector;
use num_complex::Complex64;
#[allow(unused_imports)] // f64 math is inherent when std is linked
use num_traits::Float;

use crate::error::{bail, Result};
use crate::linalg;
use crate::matrix::{permute_state, ComplexMatrix, StateVector, SystemLayout};
use crate::rng::{self, SeededRng};
use crate::schmidt::{schmidt_rank, DEFAULT_RANK_TOL};

/// Product of one pure state per system.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductInput {
    pub local_states: Vec<StateVector>,
}

impl ProductInput {
    pub fn new(local_states: Vec<StateVector>, layout: &SystemLayout) -> Result<Self> {
        if local_states.len() != layout.len() {
            bail!(Dimension, "{} local states for {} systems", local_states.len(), layout.len());
        }
        for (i, (s, &d)) in local_states.iter().zip(layout.dims()).enumerate() {
            if s.dim() != d {
                bail!(Dimension, "local state {i} has dimension {}, expected {d}", s.dim());
            }
        }
        Ok(Self { local_states })
    }

    /// `|+⟩` on every system.
    pub fn plus(layout: &SystemLayout) -> Self {
        Self { local_states: layout.dims().iter().map(|&d| StateVector::plus(d)).collect() }
    }

    pub fn random(rng: &mut SeededRng, layout: &SystemLayout) -> Self {
        Self { local_states: layout.dims().iter().map(|&d| random_state(rng, d)).collect() }
    }

    pub fn to_state(&self) -> Result<StateVector> {
        StateVector::product(&self.local_states)
    }
}

fn random_state(rng: &mut SeededRng, d: usize) -> StateVector {
    loop {
        let v: Vec<Complex64> = (0..d).map(|_| rng::complex_gaussian(rng)).collect();
        if let Ok(s) = StateVector::normalized(v) {
            return s;
        }
    }
}

/// Singular values of `psi` across `cut`, largest first.
fn cut_spectrum(psi: &StateVector, layout: &SystemLayout, cut: &[usize]) -> Result<Vec<f64>> {
    let cut = layout.check_cut(cut)?;
    let perm = layout.grouping_permutation(&cut);
    let grouped = permute_state(psi, layout, &perm)?;
    let coeffs = grouped.coefficient_matrix(layout.dim_of(&cut))?;
    Ok(linalg::svd(coeffs.as_dmatrix())?.singular_values)
}

fn count_above(values: &[f64], tol: f64) -> usize {
    let top = values.first().copied().unwrap_or(0.0);
    values.iter().filter(|&&s| s > tol * top).count()
}

/// Schmidt rank of `u · input` across `cut`.
pub fn output_schmidt_rank(
    u: &ComplexMatrix,
    layout: &SystemLayout,
    input: &ProductInput,
    cut: &[usize],
    tol: f64,
) -> Result<usize> {
    layout.check_operator(u)?;
    let psi = input.to_state()?.apply(u)?;
    Ok(count_above(&cut_spectrum(&psi, layout, cut)?, tol))
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    /// Largest rank found; a lower bound on the true maximum.
    pub max_rank: usize,
    pub witness: ProductInput,
    /// `1 − s_1²` of the witness output.
    pub surrogate: f64,
}

const REFINE_ROUNDS: usize = 6;
const LINE_STEPS: [f64; 4] = [0.5, 0.2, 0.05, 0.01];

fn score(u: &ComplexMatrix, layout: &SystemLayout, input: &ProductInput, cut: &[usize]) -> Result<(usize, f64)> {
    let psi = input.to_state()?.apply(u)?;
    let spectrum = cut_spectrum(&psi, layout, cut)?;
    let top = spectrum.first().copied().unwrap_or(0.0);
    Ok((count_above(&spectrum, DEFAULT_RANK_TOL), 1.0 - top * top))
}

/// Searches product inputs for a large output Schmidt rank across `cut`.
///
/// Restart 0 starts from `|+…+⟩`, the others from random product states.
/// Each restart then perturbs one local state at a time, keeping changes
/// that raise `1 − s_1²`.
pub fn max_output_schmidt_rank_search(
    u: &ComplexMatrix,
    layout: &SystemLayout,
    cut: &[usize],
    restarts: usize,
    seed: u64,
) -> Result<SearchResult> {
    layout.check_operator(u)?;
    layout.check_cut(cut)?;
    let mut best: Option<SearchResult> = None;
    for restart in 0..restarts.max(1) {
        let mut r = rng::derived(seed, restart as u64);
        let mut input = if restart == 0 { ProductInput::plus(layout) } else { ProductInput::random(&mut r, layout) };
        let (mut rank, mut surrogate) = score(u, layout, &input, cut)?;
        for _ in 0..REFINE_ROUNDS {
            for party in 0..layout.len() {
                let d = layout.dims()[party];
                for &step in &LINE_STEPS {
                    let current = input.local_states[party].amplitudes();
                    let noise = DVector::from_fn(d, |_, _| rng::complex_gaussian(&mut r) * step);
                    let Ok(state) = StateVector::normalized((current + noise).iter().copied().collect()) else {
                        continue;
                    };
                    let mut candidate = input.clone();
                    candidate.local_states[party] = state;
                    let (cr, cs) = score(u, layout, &candidate, cut)?;
                    if cs > surrogate {
                        (input, rank, surrogate) = (candidate, cr, cs);
                    }
                }
            }
        }
        let better = best.as_ref().is_none_or(|b| (rank, surrogate) > (b.max_rank, b.surrogate));
        if better {
            best = Some(SearchResult { max_rank: rank, witness: input, surrogate });
        }
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AncillaCheck {
    pub rank_with_ancillas: usize,
    pub operator_rank: usize,
}

impl AncillaCheck {
    pub fn consistent(&self) -> bool {
        self.rank_with_ancillas == self.operator_rank
    }
}

/// Applies `u ⊗ I` to maximally entangled pairs `AĀ` and `BB̄` and measures
/// the rank of the output across `AĀ : BB̄`.
pub fn ancilla_extended_check(u: &ComplexMatrix, layout: &SystemLayout) -> Result<AncillaCheck> {
    if layout.len() != 2 {
        bail!(Argument, "ancilla check needs a bipartite layout, got {} systems", layout.len());
    }
    layout.check_operator(u)?;
    let (da, db) = (layout.dims()[0], layout.dims()[1]);
    let n = da * db;
    // Systems ordered A, B, Ā, B̄: the state is the vectorized operator.
    let scale = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
    let amplitudes: Vec<Complex64> = u.to_row_major().into_iter().map(|z| z * scale).collect();
    let psi = StateVector::new(amplitudes)?;
    let extended = SystemLayout::new(alloc::vec![da, db, da, db])?;
    let spectrum = cut_spectrum(&psi, &extended, &[0, 2])?;
    Ok(AncillaCheck {
        rank_with_ancillas: count_above(&spectrum, DEFAULT_RANK_TOL),
        operator_rank: schmidt_rank(u, layout, &[0], DEFAULT_RANK_TOL)?.rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{cnot, controlled_sum, haar_unitary, pauli, swap_gate, u3};
    use crate::matrix::tensor_product;

    #[test]
    fn swap_never_entangles() {
        let layout = SystemLayout::qubits(2);
        let mut r = rng::seeded(1);
        for _ in 0..20 {
            let input = ProductInput::random(&mut r, &layout);
            assert_eq!(output_schmidt_rank(&swap_gate(), &layout, &input, &[0], 1e-9).unwrap(), 1);
        }
        assert_eq!(max_output_schmidt_rank_search(&swap_gate(), &layout, &[0], 8, 3).unwrap().max_rank, 1);
    }

    #[test]
    fn diagonal_gate_on_plus_states_reaches_its_rank() {
        // diag over |a,b⟩ with phases e^{2πi·ab/3}: operator rank 3.
        let layout = SystemLayout::bipartite(3, 3).unwrap();
        let entries: Vec<Complex64> = (0..9)
            .map(|i| {
                let angle = 2.0 * core::f64::consts::PI * ((i / 3) * (i % 3)) as f64 / 3.0;
                Complex64::from_polar(1.0, angle)
            })
            .collect();
        let u = ComplexMatrix::diag(&entries);
        assert_eq!(schmidt_rank(&u, &layout, &[0], 1e-9).unwrap().rank, 3);
        let rank = output_schmidt_rank(&u, &layout, &ProductInput::plus(&layout), &[0], 1e-9).unwrap();
        assert_eq!(rank, 3);
    }

    #[test]
    fn identity_and_cnot() {
        let layout = SystemLayout::qubits(2);
        let plus = ProductInput::plus(&layout);
        assert_eq!(output_schmidt_rank(&ComplexMatrix::identity(4), &layout, &plus, &[0], 1e-9).unwrap(), 1);
        let found = max_output_schmidt_rank_search(&cnot(), &layout, &[0], 64, 0).unwrap();
        assert_eq!(found.max_rank, 2);
        assert_eq!(output_schmidt_rank(&cnot(), &layout, &found.witness, &[0], 1e-9).unwrap(), 2);
    }

    #[test]
    fn qubit_target_caps_the_output_rank() {
        let layout = SystemLayout::bipartite(3, 2).unwrap();
        let blocks: Vec<ComplexMatrix> = (1..=3).map(|i| pauli(i).unwrap()).collect();
        let u = controlled_sum(&blocks).unwrap();
        assert_eq!(schmidt_rank(&u, &layout, &[0], 1e-9).unwrap().rank, 3);
        let found = max_output_schmidt_rank_search(&u, &layout, &[0], 16, 5).unwrap();
        assert_eq!(found.max_rank, 2);
    }

    #[test]
    fn ancilla_rank_matches_operator_rank() {
        let mut r = rng::seeded(2);
        let product = tensor_product(&haar_unitary(&mut r, 2), &haar_unitary(&mut r, 3)).unwrap();
        let cases = [
            (swap_gate(), SystemLayout::qubits(2), 4),
            (cnot(), SystemLayout::qubits(2), 2),
            (product, SystemLayout::bipartite(2, 3).unwrap(), 1),
            (u3(), SystemLayout::bipartite(4, 2).unwrap(), 3),
        ];
        for (u, layout, expected) in cases {
            let check = ancilla_extended_check(&u, &layout).unwrap();
            assert_eq!(check.rank_with_ancillas, expected);
            assert!(check.consistent());
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let layout = SystemLayout::qubits(2);
        assert!(ProductInput::new(alloc::vec![StateVector::plus(3), StateVector::plus(2)], &layout).is_err());
        assert!(ancilla_extended_check(&u3(), &SystemLayout::qubits(3)).is_err());
    }
}
