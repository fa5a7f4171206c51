//! Controlled-unitary and block-controlled-unitary detection.
//!
//! A unitary is controlled from side `S` when it is locally equivalent to
//! `Σ_k |k⟩⟨k| ⊗ V_k`. With `u = Σ_i A_i ⊗ B_i` its operator Schmidt
//! decomposition across `S`, this holds exactly when the `A_i` admit a
//! simultaneous singular value decomposition. Every positive verdict carries
//! a witness that is checked against `u` before it is returned.

use alloc::format;
use alloc::string::String;

use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // f64 math is inherent when std is linked
use num_traits::Float;

use crate::algebra::{self, Commutant, SimultaneousSvd, Violation};
use crate::error::{bail, Result};
use crate::gates;
use crate::linalg;
use crate::matrix::{
    inverse_permutation, permute_systems, tensor_product, ComplexMatrix, SystemLayout, DEFAULT_MAX_DIM,
};
use crate::rng;
use crate::schmidt::{self, group_cut, operator_schmidt_decompose, AlsOptions, RankBounds};

/// Tolerances shared by the detectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative singular-value cutoff for Schmidt ranks.
    pub rank: f64,
    /// Relative bound for commutation, normality, diagonality and witness checks.
    pub structure: f64,
    /// Violations in `(structure, near_miss]` are inconclusive rather than negative.
    pub near_miss: f64,
    /// Absolute Frobenius bound on `U†U − I` for inputs.
    pub unitarity: f64,
    pub max_dim: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rank: 1e-9, structure: 1e-8, near_miss: 1e-5, unitarity: 1e-10, max_dim: DEFAULT_MAX_DIM }
    }
}

fn check_unitary(u: &ComplexMatrix, tol: &Tolerances) -> Result<()> {
    if !u.is_square() {
        bail!(Dimension, "operator must be square");
    }
    if u.rows() > tol.max_dim {
        bail!(Dimension, "dimension {} exceeds the cap {}", u.rows(), tol.max_dim);
    }
    let residual = u.unitarity_residual();
    if residual.is_nan() || residual > tol.unitarity {
        bail!(Argument, "input is not unitary (‖U†U − I‖_F = {residual:.3e})");
    }
    Ok(())
}

/// `(q ⊗ I)(Σ_k |k⟩⟨k| ⊗ V_k)(r ⊗ I)` with the control systems grouped first.
#[derive(Debug, Clone)]
pub struct ControlledForm {
    pub layout: SystemLayout,
    /// Control systems, sorted.
    pub side: Vec<usize>,
    pub q: ComplexMatrix,
    pub r: ComplexMatrix,
    pub blocks: Vec<ComplexMatrix>,
}

impl ControlledForm {
    /// The operator with control systems first and target systems after.
    pub fn grouped_matrix(&self) -> Result<ComplexMatrix> {
        let middle = gates::controlled_sum(&self.blocks)?;
        let id = ComplexMatrix::identity(self.blocks[0].rows());
        Ok(&(&tensor_product(&self.q, &id)? * &middle) * &tensor_product(&self.r, &id)?)
    }

    /// The operator in the original system order.
    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        let perm = self.layout.grouping_permutation(&self.side);
        let grouped_layout = self.layout.permuted(&perm);
        permute_systems(&self.grouped_matrix()?, &grouped_layout, &inverse_permutation(&perm))
    }

    /// Number of distinct control values `m`.
    pub fn control_values(&self) -> usize {
        self.blocks.len()
    }
}

/// Outcome of [`is_controlled`].
///
/// `controlled` holds exactly when `form` is present, and fails exactly when
/// `failed_check` is present. A failure whose violation falls in the
/// near-miss band is additionally flagged `inconclusive`.
#[derive(Debug, Clone)]
pub struct ControlVerdict {
    pub controlled: bool,
    pub inconclusive: bool,
    pub form: Option<ControlledForm>,
    pub failed_check: Option<Violation>,
    pub schmidt_rank: usize,
    /// `‖form − u‖_F / ‖u‖_F` for positive verdicts.
    pub witness_residual: Option<f64>,
}

impl ControlVerdict {
    fn negative(violation: Violation, rank: usize, tol: &Tolerances) -> Self {
        Self {
            controlled: false,
            inconclusive: violation.magnitude <= tol.near_miss,
            form: None,
            failed_check: Some(violation),
            schmidt_rank: rank,
            witness_residual: None,
        }
    }
}

/// Decides whether `u` is controlled from the systems in `side`.
pub fn is_controlled(
    u: &ComplexMatrix,
    layout: &SystemLayout,
    side: &[usize],
    tol: &Tolerances,
    seed: u64,
) -> Result<ControlVerdict> {
    layout.check_operator(u)?;
    check_unitary(u, tol)?;
    let dec = operator_schmidt_decompose(u, layout, side, tol.rank)?;
    let rank = dec.rank();
    let family = dec.weighted_left();
    let (s, t) = match algebra::simultaneous_svd(&family, tol.structure, seed)? {
        SimultaneousSvd::Found { s, t, .. } => (s, t),
        SimultaneousSvd::NotFound(v) => return Ok(ControlVerdict::negative(v, rank, tol)),
    };

    // V_k = (⟨k|s ⊗ I) u (t|k⟩ ⊗ I), read directly from the operator.
    let (grouped, bip, side) = group_cut(u, layout, side)?;
    let (dc, dt) = (bip.dims()[0], bip.dims()[1]);
    let id = ComplexMatrix::identity(dt);
    let w = &(&tensor_product(&s, &id)? * &grouped) * &tensor_product(&t, &id)?;
    let blocks: Vec<ComplexMatrix> = (0..dc).map(|k| w.block(k * dt, k * dt, dt, dt)).collect();
    let worst_block = blocks.iter().map(ComplexMatrix::unitarity_residual).fold(0.0, f64::max);
    if worst_block > tol.structure * (dt as f64).sqrt() {
        let v = Violation { check: String::from("controlled blocks V_k are not unitary"), magnitude: worst_block };
        return Ok(ControlVerdict::negative(v, rank, tol));
    }
    let form = ControlledForm { layout: layout.clone(), side, q: s.dagger(), r: t.dagger(), blocks };
    let residual = form.to_matrix()?.distance(u) / u.frobenius_norm();
    if residual > tol.structure {
        let v =
            Violation { check: String::from("controlled-form witness does not reconstruct u"), magnitude: residual };
        return Ok(ControlVerdict::negative(v, rank, tol));
    }
    Ok(ControlVerdict {
        controlled: true,
        inconclusive: false,
        form: Some(form),
        failed_check: None,
        schmidt_rank: rank,
        witness_residual: Some(residual),
    })
}

/// Matched invariant subspaces on the control side of a block-controlled unitary.
#[derive(Debug, Clone)]
pub struct BlockStructure {
    pub input_projectors: Vec<ComplexMatrix>,
    pub output_projectors: Vec<ComplexMatrix>,
    pub block_dims: Vec<usize>,
}

/// Outcome of [`is_bcu`].
#[derive(Debug, Clone)]
pub struct BcuVerdict {
    pub bcu: bool,
    pub blocks: Option<BlockStructure>,
    pub failed_check: Option<String>,
}

impl BcuVerdict {
    fn negative(reason: String) -> Self {
        Self { bcu: false, blocks: None, failed_check: Some(reason) }
    }
}

fn sum_all(ops: &[ComplexMatrix], d: usize) -> ComplexMatrix {
    ops.iter().fold(ComplexMatrix::zeros(d, d), |acc, m| &acc + m)
}

/// Decides whether `u` is block-controlled from the systems in `side`: the
/// control space splits into orthogonal subspaces mapped onto orthogonal
/// subspaces, with a unitary on the rest for each block.
pub fn is_bcu(
    u: &ComplexMatrix,
    layout: &SystemLayout,
    side: &[usize],
    tol: &Tolerances,
    seed: u64,
) -> Result<BcuVerdict> {
    layout.check_operator(u)?;
    check_unitary(u, tol)?;
    let dec = operator_schmidt_decompose(u, layout, side, tol.rank)?;
    let ops = dec.weighted_left();
    let d = ops[0].rows();
    let mut input_gens = Vec::with_capacity(ops.len() * ops.len());
    let mut output_gens = Vec::with_capacity(ops.len() * ops.len());
    for a in &ops {
        for b in &ops {
            input_gens.push(&a.dagger() * b);
            output_gens.push(a * &b.dagger());
        }
    }
    let input = match algebra::commutant_blocks(&input_gens, seed, tol.max_dim)? {
        Commutant::Irreducible => {
            return Ok(BcuVerdict::negative(String::from("input algebra {A_k†A_l} is irreducible")))
        }
        Commutant::Reducible { projectors, .. } => projectors,
    };
    if let Commutant::Irreducible =
        algebra::commutant_blocks(&output_gens, rng::child_seed(&mut rng::seeded(seed)), tol.max_dim)?
    {
        return Ok(BcuVerdict::negative(String::from("output algebra {A_kA_l†} is irreducible")));
    }

    // Each output block is the joint range of the A_k restricted to the input block.
    let mut output = Vec::with_capacity(input.len());
    let mut block_dims = Vec::with_capacity(input.len());
    for p in &input {
        let images: Vec<ComplexMatrix> = ops.iter().map(|a| a * p).collect();
        let cols: Vec<_> = images.iter().flat_map(|m| (0..d).map(move |j| m.column(j))).collect();
        let stacked = nalgebra::DMatrix::from_columns(&cols);
        let svd = linalg::svd(&stacked)?;
        let k = svd.rank(tol.rank);
        let basis = svd.u.columns(0, k);
        output.push(ComplexMatrix::from_dmatrix(basis * basis.adjoint()));
        let dim_in = p.trace().re.round() as usize;
        if k != dim_in {
            return Ok(BcuVerdict::negative(format!("block of input dimension {dim_in} maps onto dimension {k}")));
        }
        block_dims.push(k);
    }
    let eye = ComplexMatrix::identity(d);
    if sum_all(&output, d).distance(&eye) > tol.structure * (d as f64).sqrt() {
        return Ok(BcuVerdict::negative(String::from("output blocks do not cover the control space")));
    }
    let (grouped, bip, _) = group_cut(u, layout, side)?;
    let id_t = ComplexMatrix::identity(bip.dims()[1]);
    let norm = grouped.frobenius_norm();
    for (p, q) in input.iter().zip(&output) {
        let up = &grouped * &tensor_product(p, &id_t)?;
        let moved = &tensor_product(q, &id_t)? * &up;
        let err = moved.distance(&up) / norm;
        if err > tol.structure {
            return Ok(BcuVerdict::negative(format!("block leaks out of its output subspace ({err:.3e})")));
        }
    }
    Ok(BcuVerdict {
        bcu: true,
        blocks: Some(BlockStructure { input_projectors: input, output_projectors: output, block_dims }),
        failed_check: None,
    })
}

/// `u = (q ⊗ x)(Σ_k |k⟩⟨k| ⊗ D_k)(r ⊗ y)` with diagonal `D_k`, in the grouped
/// (control-first) ordering.
#[derive(Debug, Clone)]
pub struct DiagonalForm {
    pub q: ComplexMatrix,
    pub r: ComplexMatrix,
    pub x: ComplexMatrix,
    pub y: ComplexMatrix,
    pub diagonals: Vec<Vec<Complex64>>,
    pub residual: f64,
}

/// Diagonal canonical form: a controlled form whose blocks also share a
/// singular value decomposition. Returns `None` when either step fails.
pub fn diagonal_canonical_form(
    u: &ComplexMatrix,
    layout: &SystemLayout,
    side: &[usize],
    tol: &Tolerances,
    seed: u64,
) -> Result<Option<DiagonalForm>> {
    let verdict = is_controlled(u, layout, side, tol, seed)?;
    let Some(form) = verdict.form else {
        return Ok(None);
    };
    let (s, t, diagonals) =
        match algebra::simultaneous_svd(&form.blocks, tol.structure, rng::child_seed(&mut rng::derived(seed, 2)))? {
            SimultaneousSvd::Found { s, t, diagonals, .. } => (s, t, diagonals),
            SimultaneousSvd::NotFound(_) => return Ok(None),
        };
    let (x, y) = (s.dagger(), t.dagger());
    let middle = gates::controlled_sum(&diagonals.iter().map(|d| ComplexMatrix::diag(d)).collect::<Vec<_>>())?;
    let rebuilt = &(&tensor_product(&form.q, &x)? * &middle) * &tensor_product(&form.r, &y)?;
    let (grouped, _, _) = group_cut(u, layout, side)?;
    let residual = rebuilt.distance(&grouped) / grouped.frobenius_norm();
    if residual > tol.structure {
        return Ok(None);
    }
    Ok(Some(DiagonalForm { q: form.q, r: form.r, x, y, diagonals, residual }))
}

/// Verdict for one candidate control subset.
#[derive(Debug, Clone)]
pub struct SideAnalysis {
    pub side: Vec<usize>,
    pub schmidt_rank: usize,
    /// Schmidt rank across the side is at most two, which already implies control.
    pub rank_shortcut: bool,
    pub verdict: ControlVerdict,
}

/// Control analysis of a multipartite unitary over singletons and pairs.
#[derive(Debug, Clone)]
pub struct MultipartiteReport {
    pub singletons: Vec<SideAnalysis>,
    pub pairs: Vec<SideAnalysis>,
    /// Smallest controlling subset found (a singleton if any, else a pair).
    pub union_witness: Option<Vec<usize>>,
    /// Interval for the multipartite Schmidt rank, computed when every cut has rank at most three.
    pub rank_bounds: Option<RankBounds>,
    /// Set when the rank is confirmed to be three but no singleton or pair controls.
    pub rank3_guarantee_violated: bool,
}

fn analyse_side(
    u: &ComplexMatrix,
    layout: &SystemLayout,
    side: &[usize],
    tol: &Tolerances,
    seed: u64,
) -> Result<SideAnalysis> {
    let verdict = is_controlled(u, layout, side, tol, seed)?;
    Ok(SideAnalysis {
        side: side.to_vec(),
        schmidt_rank: verdict.schmidt_rank,
        rank_shortcut: verdict.schmidt_rank <= 2,
        verdict,
    })
}

/// Runs [`is_controlled`] for every single system and every pair of systems.
pub fn multipartite_control_analysis(
    u: &ComplexMatrix,
    layout: &SystemLayout,
    tol: &Tolerances,
    seed: u64,
) -> Result<MultipartiteReport> {
    let n = layout.len();
    if n < 3 {
        bail!(Argument, "multipartite analysis needs at least three systems, got {n}");
    }
    layout.check_operator(u)?;
    check_unitary(u, tol)?;
    let mut index = 0u64;
    let mut next_seed = || {
        index += 1;
        rng::child_seed(&mut rng::derived(seed, index))
    };
    let mut singletons = Vec::with_capacity(n);
    for i in 0..n {
        singletons.push(analyse_side(u, layout, &[i], tol, next_seed())?);
    }
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            pairs.push(analyse_side(u, layout, &[i, j], tol, next_seed())?);
        }
    }
    let union_witness = singletons.iter().chain(&pairs).find(|a| a.verdict.controlled).map(|a| a.side.clone());

    let max_cut = schmidt::all_bipartitions(n)
        .iter()
        .map(|cut| schmidt::schmidt_rank(u, layout, cut, tol.rank).map(|r| r.rank))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .max()
        .unwrap_or(1);
    let rank_bounds = if max_cut <= 3 {
        Some(schmidt::multipartite_rank_bounds(u, layout, tol.rank, &AlsOptions { seed, ..AlsOptions::default() })?)
    } else {
        None
    };
    let rank3_guarantee_violated =
        matches!(&rank_bounds, Some(b) if b.confirmed && b.upper == 3) && union_witness.is_none();
    Ok(MultipartiteReport { singletons, pairs, union_witness, rank_bounds, rank3_guarantee_violated })
}

/// Statement exercised by [`fuzz_theorem_checks`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theorem {
    /// Schmidt rank three implies controlled.
    Sch3,
    /// Schmidt rank two: controlled from both sides, with a diagonal canonical form.
    Sch2Diagonal,
    /// Multipartite Schmidt rank three: controlled by one or two systems.
    Multi,
    /// The even-qubit rank-three construction is controlled by a single qubit.
    EvenQubit,
}

impl Theorem {
    pub const ALL: [Theorem; 4] = [Theorem::Sch3, Theorem::Sch2Diagonal, Theorem::Multi, Theorem::EvenQubit];

    pub fn name(self) -> &'static str {
        match self {
            Theorem::Sch3 => "sch3",
            Theorem::Sch2Diagonal => "sch2-diagonal",
            Theorem::Multi => "multi",
            Theorem::EvenQubit => "even-qubit",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }
}

/// First failing fuzz instance.
#[derive(Debug, Clone)]
pub struct FuzzFailure {
    pub trial: usize,
    pub layout: SystemLayout,
    pub matrix: ComplexMatrix,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct FuzzSummary {
    pub theorem: Theorem,
    pub trials: usize,
    pub passed: usize,
    pub inconclusive: usize,
    pub failed: usize,
    pub max_witness_residual: f64,
    pub first_failure: Option<FuzzFailure>,
}

impl FuzzSummary {
    pub fn all_passed(&self) -> bool {
        self.passed == self.trials
    }
}

enum Kind {
    Inconclusive,
    Other,
}

enum TrialOutcome {
    Pass(f64),
    Inconclusive(String),
    Fail(String),
}

/// Layouts cycled through by the bipartite fuzzers.
pub const SCH3_LAYOUTS: [[usize; 2]; 3] = [[3, 3], [3, 4], [4, 5]];
pub const SCH2_LAYOUTS: [[usize; 2]; 4] = [[2, 2], [2, 3], [3, 3], [3, 4]];

fn classify(verdict: &ControlVerdict, what: &str) -> TrialOutcome {
    match (&verdict.failed_check, verdict.inconclusive) {
        (Some(v), true) => TrialOutcome::Inconclusive(format!("{what}: near miss, {} ({:.3e})", v.check, v.magnitude)),
        (Some(v), false) => TrialOutcome::Fail(format!("{what}: {} ({:.3e})", v.check, v.magnitude)),
        (None, _) => TrialOutcome::Pass(verdict.witness_residual.unwrap_or(0.0)),
    }
}

fn run_trial(
    theorem: Theorem,
    trial: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<(SystemLayout, ComplexMatrix, TrialOutcome)> {
    let mut rng = rng::derived(seed, trial as u64);
    let instance_seed = rng::child_seed(&mut rng);
    let detector_seed = rng::child_seed(&mut rng);
    match theorem {
        Theorem::Sch3 => {
            let [dc, dt] = SCH3_LAYOUTS[trial % SCH3_LAYOUTS.len()];
            let layout = SystemLayout::bipartite(dc, dt)?;
            let u = gates::random_controlled_unitary(dc, dt, 3, instance_seed)?;
            let mut outcome = classify(&is_controlled(&u, &layout, &[0], tol, detector_seed)?, "control side");
            if !matches!(outcome, TrialOutcome::Pass(_)) {
                let other = is_controlled(&u, &layout, &[1], tol, detector_seed)?;
                if other.controlled {
                    outcome = classify(&other, "target side");
                }
            }
            Ok((layout, u, outcome))
        }
        Theorem::Sch2Diagonal => {
            let [dc, dt] = SCH2_LAYOUTS[trial % SCH2_LAYOUTS.len()];
            let layout = SystemLayout::bipartite(dc, dt)?;
            let u = gates::random_controlled_unitary(dc, dt, 2, instance_seed)?;
            let mut worst = 0.0f64;
            for side in [0usize, 1] {
                let verdict = is_controlled(&u, &layout, &[side], tol, detector_seed)?;
                match classify(&verdict, if side == 0 { "side 0" } else { "side 1" }) {
                    TrialOutcome::Pass(r) => worst = worst.max(r),
                    other => return Ok((layout, u, other)),
                }
                match diagonal_canonical_form(&u, &layout, &[side], tol, detector_seed)? {
                    Some(d) => worst = worst.max(d.residual),
                    None => {
                        return Ok((
                            layout,
                            u,
                            TrialOutcome::Fail(format!("no diagonal canonical form from side {side}")),
                        ))
                    }
                }
            }
            Ok((layout, u, TrialOutcome::Pass(worst)))
        }
        Theorem::Multi => {
            let layout = SystemLayout::qubits(3);
            let base = if trial.is_multiple_of(2) {
                gates::u3()
            } else {
                // Two qubits jointly control the third.
                gates::random_controlled_unitary(4, 2, 3, instance_seed)?
            };
            let u = gates::random_local_scramble(&base, &layout, instance_seed ^ 0x5eed)?;
            let report = multipartite_control_analysis(&u, &layout, tol, detector_seed)?;
            let outcome = match &report.union_witness {
                Some(side) => {
                    let a = report
                        .singletons
                        .iter()
                        .chain(&report.pairs)
                        .find(|a| &a.side == side)
                        .expect("witness side analysed");
                    TrialOutcome::Pass(a.verdict.witness_residual.unwrap_or(0.0))
                }
                None if report.singletons.iter().chain(&report.pairs).any(|a| a.verdict.inconclusive) => {
                    TrialOutcome::Inconclusive(String::from(
                        "no controlling subset; some verdicts in the near-miss band",
                    ))
                }
                None => TrialOutcome::Fail(String::from("no singleton or pair controls")),
            };
            Ok((layout, u, outcome))
        }
        Theorem::EvenQubit => {
            let layout = SystemLayout::qubits(4);
            let u = gates::random_local_scramble(&gates::even_qubit_rank3(4)?, &layout, instance_seed)?;
            let mut last = TrialOutcome::Fail(String::from("no singleton controls"));
            for i in 0..4 {
                let verdict = is_controlled(&u, &layout, &[i], tol, detector_seed)?;
                if verdict.controlled {
                    return Ok((layout, u, classify(&verdict, "singleton")));
                }
                if verdict.inconclusive {
                    last = classify(&verdict, &format!("singleton {i}"));
                }
            }
            Ok((layout, u, last))
        }
    }
}

/// Generates `trials` scrambled instances for `theorem`, runs the matching
/// detector and tallies the results. Deterministic for a given `seed`.
pub fn fuzz_theorem_checks(theorem: Theorem, trials: usize, seed: u64, tol: &Tolerances) -> Result<FuzzSummary> {
    if trials == 0 {
        bail!(Argument, "need at least one trial");
    }
    let mut summary = FuzzSummary {
        theorem,
        trials,
        passed: 0,
        inconclusive: 0,
        failed: 0,
        max_witness_residual: 0.0,
        first_failure: None,
    };
    for trial in 0..trials {
        let (layout, matrix, outcome) = match run_trial(theorem, trial, seed, tol) {
            Ok(t) => t,
            Err(e) => {
                summary.failed += 1;
                if summary.first_failure.is_none() {
                    summary.first_failure = Some(FuzzFailure {
                        trial,
                        layout: SystemLayout::qubits(1),
                        matrix: ComplexMatrix::identity(1),
                        detail: format!("{e}"),
                    });
                }
                continue;
            }
        };
        let outcome_kind = match outcome {
            TrialOutcome::Inconclusive(_) => Kind::Inconclusive,
            _ => Kind::Other,
        };
        match outcome {
            TrialOutcome::Pass(r) => {
                summary.passed += 1;
                summary.max_witness_residual = summary.max_witness_residual.max(r);
            }
            TrialOutcome::Inconclusive(detail) | TrialOutcome::Fail(detail) => {
                if matches!(outcome_kind, Kind::Inconclusive) {
                    summary.inconclusive += 1;
                } else {
                    summary.failed += 1;
                }
                if summary.first_failure.is_none() {
                    summary.first_failure = Some(FuzzFailure { trial, layout, matrix, detail });
                }
            }
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{
        cnot, even_qubit_rank3, pauli, random_controlled_unitary, random_local_scramble, swap_gate, u3,
    };
    use alloc::vec;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn cnot_is_controlled_with_identity_and_flip() {
        let l = SystemLayout::qubits(2);
        let v = is_controlled(&cnot(), &l, &[0], &tol(), 1).unwrap();
        assert!(v.controlled && v.failed_check.is_none());
        let form = v.form.unwrap();
        assert_eq!(form.blocks.len(), 2);
        assert!(form.to_matrix().unwrap().distance(&cnot()) < 1e-10);
        // Up to the local unitaries q, r the blocks are I and σ_1: V_0†V_1 is traceless and squares to a phase.
        let rel = &form.blocks[0].dagger() * &form.blocks[1];
        assert!(rel.trace().norm() < 1e-10);
        let sq = &rel * &rel;
        assert!(sq.distance(&ComplexMatrix::identity(2).scale(sq.get(0, 0))) < 1e-10);
    }

    #[test]
    fn swap_is_neither_controlled_nor_bcu() {
        let l = SystemLayout::qubits(2);
        for side in [0, 1] {
            let v = is_controlled(&swap_gate(), &l, &[side], &tol(), 2).unwrap();
            assert!(!v.controlled && !v.inconclusive);
            assert_eq!(v.schmidt_rank, 4);
            assert!(!is_bcu(&swap_gate(), &l, &[side], &tol(), 2).unwrap().bcu);
        }
    }

    #[test]
    fn u3_controlled_by_pairs_only() {
        let l = SystemLayout::qubits(3);
        for i in 0..3 {
            let v = is_controlled(&u3(), &l, &[i], &tol(), 3).unwrap();
            assert!(!v.controlled);
            let check = v.failed_check.unwrap();
            assert!(check.check.contains("normal") || check.check.contains("commute"));
            assert!(check.magnitude > 1e-5);
        }
        for pair in [[0, 1], [0, 2], [1, 2]] {
            let v = is_controlled(&u3(), &l, &pair, &tol(), 3).unwrap();
            assert!(v.controlled);
            assert!(v.witness_residual.unwrap() <= 1e-8);
        }
    }

    #[test]
    fn bcu_examples() {
        let l = SystemLayout::qubits(2);
        let v = is_bcu(&cnot(), &l, &[0], &tol(), 4).unwrap();
        assert!(v.bcu);
        assert_eq!(v.blocks.unwrap().block_dims, vec![1, 1]);
        assert!(is_bcu(&ComplexMatrix::identity(4), &l, &[0], &tol(), 4).unwrap().bcu);
    }

    #[test]
    fn bcu_that_is_not_controlled() {
        // A 3-dimensional control space split 1 + 2 with an entangling unitary on the 2-block.
        let l = SystemLayout::bipartite(3, 2).unwrap();
        let p0 = ComplexMatrix::from_fn(
            3,
            3,
            |i, j| if i == 0 && j == 0 { crate::matrix::ONE } else { crate::matrix::ZERO },
        );
        let embed = |m: &ComplexMatrix| {
            ComplexMatrix::from_fn(
                6,
                6,
                |i, j| if i >= 2 && j >= 2 { m.get(i - 2, j - 2) } else { crate::matrix::ZERO },
            )
        };
        let u = &tensor_product(&p0, &ComplexMatrix::identity(2)).unwrap() + &embed(&swap_gate());
        assert!(u.unitarity_residual() < 1e-12);
        let u = random_local_scramble(&u, &l, 8).unwrap();
        assert!(is_bcu(&u, &l, &[0], &tol(), 5).unwrap().bcu);
        assert!(!is_controlled(&u, &l, &[0], &tol(), 5).unwrap().controlled);
    }

    #[test]
    fn rank_two_has_diagonal_form_from_both_sides() {
        let l = SystemLayout::bipartite(3, 3).unwrap();
        let u = random_controlled_unitary(3, 3, 2, 6).unwrap();
        for side in [0, 1] {
            let d = diagonal_canonical_form(&u, &l, &[side], &tol(), 6).unwrap().unwrap();
            assert!(d.residual < 1e-8);
        }
    }

    #[test]
    fn non_unitary_input_rejected() {
        let l = SystemLayout::qubits(2);
        let m = ComplexMatrix::diag_real(&[1.0, 1.0, 1.0, 0.5]);
        assert!(matches!(is_controlled(&m, &l, &[0], &tol(), 0), Err(crate::Error::Argument(_))));
    }

    #[test]
    fn verdicts_survive_local_scrambling() {
        let l = SystemLayout::qubits(3);
        for seed in 0..4 {
            let u = random_local_scramble(&u3(), &l, seed).unwrap();
            assert!(!is_controlled(&u, &l, &[1], &tol(), seed).unwrap().controlled);
            assert!(is_controlled(&u, &l, &[0, 2], &tol(), seed).unwrap().controlled);
        }
    }

    #[test]
    fn multipartite_report_for_u3_and_padding() {
        let r = multipartite_control_analysis(&u3(), &SystemLayout::qubits(3), &tol(), 1).unwrap();
        assert!(r.singletons.iter().all(|a| !a.verdict.controlled && a.schmidt_rank == 3));
        assert!(r.pairs.iter().all(|a| a.verdict.controlled));
        assert_eq!(r.union_witness, Some(vec![0, 1]));
        assert!(!r.rank3_guarantee_violated);

        let padded = tensor_product(&ComplexMatrix::identity(4), &u3()).unwrap();
        let r = multipartite_control_analysis(&padded, &SystemLayout::qubits(5), &tol(), 2).unwrap();
        let pair = r.pairs.iter().find(|a| a.side == vec![1, 2]).unwrap();
        assert!(!pair.verdict.controlled);
        assert!(r.pairs.iter().any(|a| a.verdict.controlled));
    }

    #[test]
    fn even_qubit_controlled_by_first_qubit() {
        let u = even_qubit_rank3(4).unwrap();
        let v = is_controlled(&u, &SystemLayout::qubits(4), &[0], &tol(), 1).unwrap();
        assert!(v.controlled);
    }

    #[test]
    fn fuzz_smoke() {
        for theorem in Theorem::ALL {
            let s = fuzz_theorem_checks(theorem, 4, 9, &tol()).unwrap();
            assert!(s.all_passed(), "{:?}: {:?}", theorem, s.first_failure.map(|f| f.detail));
        }
        assert_eq!(Theorem::from_name("sch2-diagonal"), Some(Theorem::Sch2Diagonal));
        assert!(fuzz_theorem_checks(Theorem::Sch3, 0, 0, &tol()).is_err());
    }

    #[test]
    fn pauli_product_is_controlled_everywhere() {
        let l = SystemLayout::qubits(3);
        let p = crate::matrix::tensor_all(&[pauli(1).unwrap(), pauli(2).unwrap(), pauli(3).unwrap()]).unwrap();
        let r = multipartite_control_analysis(&p, &l, &tol(), 0).unwrap();
        assert!(r.singletons.iter().all(|a| a.verdict.controlled && a.rank_shortcut));
    }
}
