//! Named gates and seeded random generators.
//!
//! Haar-random unitaries come from the QR decomposition of a complex
//! Gaussian matrix with the phases of `R`'s diagonal moved into `Q`, driven by
//! the generator in [`crate::rng`], so every seed reproduces bit-for-bit.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // f64 math is inherent when std is linked
use num_traits::Float;

use crate::error::{bail, Result};
use crate::matrix::{permute_systems, tensor_all, tensor_product, ComplexMatrix, SystemLayout, I, ONE, ZERO};
use crate::rng::{self, SeededRng};
use crate::schmidt::{schmidt_rank, DEFAULT_RANK_TOL};

/// Pauli matrix `σ_i`, `i ∈ {0, 1, 2, 3}`.
pub fn pauli(i: usize) -> Result<ComplexMatrix> {
    let entries = match i {
        0 => [ONE, ZERO, ZERO, ONE],
        1 => [ZERO, ONE, ONE, ZERO],
        2 => [ZERO, -I, I, ZERO],
        3 => [ONE, ZERO, ZERO, -ONE],
        _ => bail!(Argument, "Pauli index {i} out of range 0..=3"),
    };
    ComplexMatrix::from_row_major(2, 2, &entries)
}

fn sigma(i: usize) -> ComplexMatrix {
    pauli(i).expect("index in range")
}

/// `σ_i^{⊗n}`.
fn sigma_power(i: usize, n: usize) -> ComplexMatrix {
    tensor_all(&vec![sigma(i); n]).expect("qubit powers stay under the cap")
}

/// Two-qubit SWAP, `½ Σ σ_i ⊗ σ_i`.
pub fn swap_gate() -> ComplexMatrix {
    let mut acc = ComplexMatrix::zeros(4, 4);
    for i in 0..4 {
        acc = &acc + &tensor_product(&sigma(i), &sigma(i)).expect("2x2 factors");
    }
    acc.scale_real(0.5)
}

/// `|0⟩⟨0| ⊗ I + |1⟩⟨1| ⊗ σ_1`.
pub fn cnot() -> ComplexMatrix {
    let p0 = ComplexMatrix::basis_outer(2, 0, 0);
    let p1 = ComplexMatrix::basis_outer(2, 1, 1);
    &tensor_product(&p0, &ComplexMatrix::identity(2)).expect("small") + &tensor_product(&p1, &sigma(1)).expect("small")
}

/// Schmidt-rank-three three-qubit unitary that no single qubit controls.
pub fn u3() -> ComplexMatrix {
    u_odd_n(3).expect("n = 3 is odd")
}

/// `(σ_0^{⊗n} + i σ_1^{⊗n} + i σ_3^{⊗n}) / √3` for odd `n ≥ 3`.
pub fn u_odd_n(n: usize) -> Result<ComplexMatrix> {
    if n < 3 || n.is_multiple_of(2) {
        bail!(Argument, "u_odd_n needs odd n >= 3, got {n}");
    }
    if n > 12 {
        bail!(Dimension, "u_odd_n({n}) exceeds the dimension cap");
    }
    let sum = &(&sigma_power(0, n) + &sigma_power(1, n).scale(I)) + &sigma_power(3, n).scale(I);
    Ok(sum.scale_real(1.0 / 3f64.sqrt()))
}

/// `(V_12 ⊗ V_34 + i W_12 ⊗ W_34) / √2` with `V` = SWAP and
/// `W = (σ_0 ⊗ σ_3) V (σ_0 ⊗ σ_3)`.
pub fn four_qubit_example() -> ComplexMatrix {
    let v = swap_gate();
    let z2 = tensor_product(&sigma(0), &sigma(3)).expect("small");
    let w = &(&z2 * &v) * &z2;
    let vv = tensor_product(&v, &v).expect("small");
    let ww = tensor_product(&w, &w).expect("small");
    (&vv + &ww.scale(I)).scale_real(core::f64::consts::FRAC_1_SQRT_2)
}

/// `U^(3)` on a `2 x 2 x n` system: acts as `U^(3)` when the third system is
/// in its first two levels and as the identity on the remaining levels.
pub fn padded_2x2xn(n: usize) -> Result<ComplexMatrix> {
    if n < 3 {
        bail!(Argument, "padded_2x2xn needs n >= 3, got {n}");
    }
    let s = 1.0 / 3f64.sqrt();
    // Embed each qubit Pauli of the third factor into dimension n.
    let embed =
        |m: &ComplexMatrix| ComplexMatrix::from_fn(n, n, |i, j| if i < 2 && j < 2 { m.get(i, j) } else { ZERO });
    let mut acc = ComplexMatrix::zeros(4 * n, 4 * n);
    for (i, coeff) in [(0usize, ONE), (1, I), (3, I)] {
        let term = tensor_all(&[sigma(i), sigma(i), embed(&sigma(i))])?;
        acc = &acc + &term.scale(coeff * s);
    }
    let rest = ComplexMatrix::from_fn(n, n, |i, j| if i == j && i >= 2 { ONE } else { ZERO });
    let pad = tensor_all(&[sigma(0), sigma(0), rest])?;
    Ok(&acc + &pad)
}

/// `U ⊗ I` on ancillas `A_i'` of dimensions `extra_dims`, regrouped so that
/// system `i` of the result is `A_i A_i'`. Returns the operator and its layout.
pub fn tensor_extension(
    u: &ComplexMatrix,
    layout: &SystemLayout,
    extra_dims: &[usize],
) -> Result<(ComplexMatrix, SystemLayout)> {
    layout.check_operator(u)?;
    if extra_dims.len() != layout.len() {
        bail!(Argument, "need one ancilla dimension per system");
    }
    let extra = SystemLayout::new(extra_dims.to_vec())?;
    let big = tensor_product(u, &ComplexMatrix::identity(extra.total()))?;
    let n = layout.len();
    let mut dims = layout.dims().to_vec();
    dims.extend_from_slice(extra_dims);
    let big_layout = SystemLayout::new(dims)?;
    let perm: Vec<usize> = (0..n).flat_map(|i| [i, n + i]).collect();
    let interleaved = permute_systems(&big, &big_layout, &perm)?;
    let merged: Vec<usize> = (0..n).map(|i| layout.dims()[i] * extra_dims[i]).collect();
    Ok((interleaved, SystemLayout::new(merged)?))
}

/// `|1⟩⟨1| ⊗ U^(n−1) + |2⟩⟨2| ⊗ (U^(n−1))†` for even `n ≥ 4`.
pub fn even_qubit_rank3(n: usize) -> Result<ComplexMatrix> {
    if n < 4 || n % 2 == 1 {
        bail!(Argument, "even_qubit_rank3 needs even n >= 4, got {n}");
    }
    let inner = u_odd_n(n - 1)?;
    let p0 = ComplexMatrix::basis_outer(2, 0, 0);
    let p1 = ComplexMatrix::basis_outer(2, 1, 1);
    Ok(&tensor_product(&p0, &inner)? + &tensor_product(&p1, &inner.dagger())?)
}

/// Haar-distributed unitary of dimension `d`.
pub fn haar_unitary(rng: &mut SeededRng, d: usize) -> ComplexMatrix {
    let qr = rng::ginibre(rng, d, d).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let z = r[(j, j)];
        let phase = if z.norm() > 0.0 { z / z.norm() } else { ONE };
        let mut col = q.column_mut(j);
        col *= phase;
    }
    ComplexMatrix::from_dmatrix(q)
}

/// Product of independent Haar unitaries, one per system of `layout`.
pub fn random_product_unitary(rng: &mut SeededRng, layout: &SystemLayout) -> ComplexMatrix {
    let factors: Vec<ComplexMatrix> = layout.dims().iter().map(|&d| haar_unitary(rng, d)).collect();
    tensor_all(&factors).expect("layout already validated")
}

/// `S_1 · u · S_2` with independent seeded Haar product unitaries `S_1, S_2`.
pub fn random_local_scramble(u: &ComplexMatrix, layout: &SystemLayout, seed: u64) -> Result<ComplexMatrix> {
    layout.check_operator(u)?;
    let mut rng = rng::seeded(seed);
    let left = random_product_unitary(&mut rng, layout);
    let right = random_product_unitary(&mut rng, layout);
    Ok(&(&left * u) * &right)
}

/// `Σ_k |k⟩⟨k| ⊗ V_k` before scrambling.
pub fn controlled_sum(blocks: &[ComplexMatrix]) -> Result<ComplexMatrix> {
    let Some(first) = blocks.first() else {
        bail!(Argument, "need at least one block");
    };
    let d = blocks.len();
    let t = first.rows();
    let mut acc = ComplexMatrix::zeros(d * t, d * t);
    for (k, v) in blocks.iter().enumerate() {
        if v.rows() != t || v.cols() != t {
            bail!(Dimension, "block {k} has the wrong shape");
        }
        acc = &acc + &tensor_product(&ComplexMatrix::basis_outer(d, k, k), v)?;
    }
    Ok(acc)
}

/// Locally scrambled controlled unitary on `[d_ctrl, d_tgt]` whose Schmidt
/// rank is exactly `rank`.
///
/// Draws `rank` Haar unitaries on the target and assigns them to the control
/// values cyclically. Resamples up to 8 times if the realized rank is short.
pub fn random_controlled_unitary(d_ctrl: usize, d_tgt: usize, rank: usize, seed: u64) -> Result<ComplexMatrix> {
    if rank == 0 || d_ctrl < rank || d_tgt * d_tgt < rank {
        bail!(Argument, "cannot realize Schmidt rank {rank} on [{d_ctrl}, {d_tgt}]");
    }
    let layout = SystemLayout::bipartite(d_ctrl, d_tgt)?;
    let mut rng = rng::seeded(seed);
    for _ in 0..8 {
        let distinct: Vec<ComplexMatrix> = (0..rank).map(|_| haar_unitary(&mut rng, d_tgt)).collect();
        let blocks: Vec<ComplexMatrix> = (0..d_ctrl).map(|k| distinct[k % rank].clone()).collect();
        let u = controlled_sum(&blocks)?;
        if schmidt_rank(&u, &layout, &[0], DEFAULT_RANK_TOL)?.rank == rank {
            return random_local_scramble(&u, &layout, rng::child_seed(&mut rng));
        }
    }
    bail!(Numerical, "Schmidt rank {rank} not realized after 8 draws")
}

/// Named construction with integer parameters, as accepted by the CLI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateSpec {
    pub name: String,
    pub params: BTreeMap<String, u64>,
}

impl GateSpec {
    pub fn new(name: &str) -> Self {
        Self { name: name.into(), params: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: u64) -> Self {
        self.params.insert(key.into(), value);
        self
    }

    fn param(&self, key: &str) -> Result<usize> {
        match self.params.get(key) {
            Some(&v) => usize::try_from(v).map_err(|_| crate::Error::Argument(alloc::format!("{key} too large"))),
            None => bail!(Argument, "gate {} needs parameter {key}", self.name),
        }
    }

    fn param_or(&self, key: &str, default: u64) -> u64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    /// Builds the operator and its layout.
    pub fn construct(&self) -> Result<(ComplexMatrix, SystemLayout)> {
        let known: &[&str] = match self.name.as_str() {
            "pauli" => &["index"],
            "u_odd_n" | "even_qubit_rank3" | "padded_2x2xn" | "identity" => &["n"],
            "u3_extended" => &["d1", "d2", "d3"],
            "random_controlled" => &["d_ctrl", "d_tgt", "rank", "seed"],
            _ => &[],
        };
        if let Some(k) = self.params.keys().find(|k| !known.contains(&k.as_str())) {
            bail!(Argument, "gate {} does not take parameter {k}", self.name);
        }
        Ok(match self.name.as_str() {
            "pauli" => (pauli(self.param("index")?)?, SystemLayout::qubits(1)),
            "swap" => (swap_gate(), SystemLayout::qubits(2)),
            "cnot" => (cnot(), SystemLayout::qubits(2)),
            "u3" => (u3(), SystemLayout::qubits(3)),
            "u_odd_n" => {
                let n = self.param("n")?;
                (u_odd_n(n)?, SystemLayout::qubits(n))
            }
            "four_qubit_example" => (four_qubit_example(), SystemLayout::qubits(4)),
            "padded_2x2xn" => {
                let n = self.param("n")?;
                (padded_2x2xn(n)?, SystemLayout::new(vec![2, 2, n])?)
            }
            "u3_extended" => {
                let extra = [self.param("d1")?, self.param("d2")?, self.param("d3")?];
                tensor_extension(&u3(), &SystemLayout::qubits(3), &extra)?
            }
            "even_qubit_rank3" => {
                let n = self.param("n")?;
                (even_qubit_rank3(n)?, SystemLayout::qubits(n))
            }
            "i2_i2_u3" => (tensor_product(&ComplexMatrix::identity(4), &u3())?, SystemLayout::qubits(5)),
            "identity" => {
                let n = self.param("n")?;
                if n == 0 || n > 12 {
                    bail!(Argument, "identity needs 1 <= n <= 12 qubits");
                }
                (ComplexMatrix::identity(1 << n), SystemLayout::qubits(n))
            }
            "random_controlled" => {
                let (dc, dt) = (self.param("d_ctrl")?, self.param("d_tgt")?);
                let u = random_controlled_unitary(dc, dt, self.param("rank")?, self.param_or("seed", 0))?;
                (u, SystemLayout::bipartite(dc, dt)?)
            }
            other => bail!(Argument, "unknown gate {other:?}"),
        })
    }
}

/// Names accepted by [`GateSpec::construct`].
pub const GATE_NAMES: &[&str] = &[
    "pauli",
    "swap",
    "cnot",
    "u3",
    "u_odd_n",
    "four_qubit_example",
    "padded_2x2xn",
    "u3_extended",
    "even_qubit_rank3",
    "i2_i2_u3",
    "identity",
    "random_controlled",
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::StateVector;
    use num_complex::Complex64;

    #[test]
    fn paulis_match_their_definitions() {
        assert_eq!(pauli(0).unwrap(), ComplexMatrix::identity(2));
        assert_eq!(pauli(1).unwrap().to_row_major(), vec![ZERO, ONE, ONE, ZERO]);
        assert_eq!(pauli(3).unwrap(), ComplexMatrix::diag_real(&[1.0, -1.0]));
        assert!(pauli(4).is_err());
    }

    #[test]
    fn every_named_gate_is_unitary() {
        let gates = [
            swap_gate(),
            cnot(),
            u3(),
            u_odd_n(5).unwrap(),
            u_odd_n(7).unwrap(),
            four_qubit_example(),
            padded_2x2xn(3).unwrap(),
            padded_2x2xn(5).unwrap(),
            even_qubit_rank3(4).unwrap(),
            even_qubit_rank3(6).unwrap(),
            tensor_extension(&u3(), &SystemLayout::qubits(3), &[2, 1, 3]).unwrap().0,
        ];
        for g in gates {
            assert!(g.unitarity_residual() < 1e-12);
        }
    }

    #[test]
    fn u_odd_n_three_is_u3() {
        let direct = {
            let s = |i| sigma_power(i, 3);
            (&(&s(0) + &s(1).scale(I)) + &s(3).scale(I)).scale_real(1.0 / 3f64.sqrt())
        };
        assert_eq!(u_odd_n(3).unwrap(), direct);
    }

    #[test]
    fn parameter_validation() {
        assert!(u_odd_n(4).is_err());
        assert!(u_odd_n(1).is_err());
        assert!(even_qubit_rank3(5).is_err());
        assert!(even_qubit_rank3(2).is_err());
        assert!(padded_2x2xn(2).is_err());
    }

    #[test]
    fn swap_exchanges_basis_states() {
        let s = swap_gate();
        for a in 0..2 {
            for b in 0..2 {
                let input = StateVector::basis(4, 2 * a + b).unwrap();
                let out = input.apply(&s).unwrap();
                assert_eq!(out, StateVector::basis(4, 2 * b + a).unwrap());
            }
        }
    }

    #[test]
    fn extension_keeps_the_rank() {
        let (v, layout) = tensor_extension(&u3(), &SystemLayout::qubits(3), &[2, 1, 2]).unwrap();
        assert_eq!(layout.dims(), &[4, 2, 4]);
        for cut in [[0usize], [1], [2]] {
            assert_eq!(schmidt_rank(&v, &layout, &cut, DEFAULT_RANK_TOL).unwrap().rank, 3);
        }
    }

    #[test]
    fn random_controlled_ranks() {
        for (rank, seed) in [(1, 1u64), (2, 2), (3, 3)] {
            let u = random_controlled_unitary(3, 4, rank, seed).unwrap();
            let layout = SystemLayout::bipartite(3, 4).unwrap();
            assert!(u.unitarity_residual() < 1e-12);
            assert_eq!(schmidt_rank(&u, &layout, &[0], DEFAULT_RANK_TOL).unwrap().rank, rank);
        }
        assert!(random_controlled_unitary(2, 4, 3, 0).is_err());
    }

    #[test]
    fn generators_are_reproducible() {
        let a = random_controlled_unitary(3, 3, 3, 42).unwrap();
        let b = random_controlled_unitary(3, 3, 3, 42).unwrap();
        assert_eq!(a, b);
        let c = random_controlled_unitary(3, 3, 3, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn scrambling_preserves_ranks() {
        let l = SystemLayout::qubits(2);
        let id = random_local_scramble(&ComplexMatrix::identity(4), &l, 5).unwrap();
        assert_eq!(schmidt_rank(&id, &l, &[0], DEFAULT_RANK_TOL).unwrap().rank, 1);
        let c = random_local_scramble(&cnot(), &l, 6).unwrap();
        assert_eq!(schmidt_rank(&c, &l, &[0], DEFAULT_RANK_TOL).unwrap().rank, 2);
    }

    #[test]
    fn gate_spec_constructs_and_validates() {
        let (u, layout) = GateSpec::new("u_odd_n").with("n", 5).construct().unwrap();
        assert_eq!(layout.len(), 5);
        assert!(u.unitarity_residual() < 1e-12);
        assert!(GateSpec::new("nope").construct().is_err());
        assert!(GateSpec::new("u_odd_n").construct().is_err());
        assert!(GateSpec::new("swap").with("n", 2).construct().is_err());
        for name in GATE_NAMES {
            let spec = match *name {
                "pauli" => GateSpec::new(name).with("index", 2),
                "u_odd_n" => GateSpec::new(name).with("n", 3),
                "even_qubit_rank3" => GateSpec::new(name).with("n", 4),
                "padded_2x2xn" => GateSpec::new(name).with("n", 4),
                "identity" => GateSpec::new(name).with("n", 2),
                "u3_extended" => GateSpec::new(name).with("d1", 1).with("d2", 2).with("d3", 1),
                "random_controlled" => {
                    GateSpec::new(name).with("d_ctrl", 3).with("d_tgt", 3).with("rank", 3).with("seed", 9)
                }
                _ => GateSpec::new(name),
            };
            let (u, layout) = spec.construct().unwrap();
            layout.check_operator(&u).unwrap();
        }
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = rng::seeded(1);
        for d in 1..6 {
            assert!(haar_unitary(&mut rng, d).unitarity_residual() < 1e-12);
        }
    }

    #[test]
    fn complex_constants() {
        assert_eq!(I * I, Complex64::new(-1.0, 0.0));
    }
}
