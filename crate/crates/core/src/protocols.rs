//! LOCC implementations of bipartite unitaries, simulated on state vectors.
//!
//! Two routes are provided. Teleportation sends Alice's system to Bob, who
//! applies the gate and teleports it back, consuming `2·log2 d_A` ebits. A
//! controlled unitary `(q⊗I)(Σ_k |k⟩⟨k|⊗V_k)(r⊗I)` with `m` control values
//! needs only one maximally entangled pair of Schmidt rank `m`:
//!
//! 1. Alice applies `r`, subtracts her control value from her half of the
//!    pair, measures that half (outcome `o`) and sends `o`.
//! 2. Bob shifts his half by `−o`, which now holds a copy of the control
//!    value, and applies `Σ_k |k⟩⟨k| ⊗ V_k` with it as control.
//! 3. Bob measures his half in the Fourier basis (outcome `p`) and sends `p`.
//! 4. Alice applies the phase `ω^{−p·k}` on control value `k`, then `q`.
//!
//! Every measurement branch is simulated, either exhaustively or by seeded
//! sampling, and fidelities are phase-insensitive overlaps.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
#[allow(unused_imports)] // f64 math is inherent when std is linked
use num_traits::Float;

use crate::control::ControlledForm;
use crate::error::{bail, Result};
use crate::matrix::{inverse_permutation, permute_state, ComplexMatrix, StateVector, SystemLayout, ONE, ZERO};
use crate::rng;

/// Party performing a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Actor {
    Alice,
    Bob,
}

impl Actor {
    pub fn name(self) -> &'static str {
        match self {
            Actor::Alice => "Alice",
            Actor::Bob => "Bob",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    LocalUnitary,
    Measurement,
    ClassicalMessage,
}

impl StepKind {
    pub fn name(self) -> &'static str {
        match self {
            StepKind::LocalUnitary => "local-unitary",
            StepKind::Measurement => "measurement",
            StepKind::ClassicalMessage => "classical-message",
        }
    }
}

/// One entry of a transcript. Measurements carry their outcome; messages
/// carry the sent value and the index of the measurement it reports.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub actor: Actor,
    pub kind: StepKind,
    pub description: String,
    pub outcome: Option<usize>,
    pub reports: Option<usize>,
}

/// Ordered record of one protocol branch.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolTranscript {
    pub steps: Vec<Step>,
    /// Schmidt ranks of the maximally entangled resources used.
    pub resources: Vec<usize>,
    pub ebits_consumed: f64,
}

impl ProtocolTranscript {
    fn new() -> Self {
        Self { steps: Vec::new(), resources: Vec::new(), ebits_consumed: 0.0 }
    }

    fn consume(&mut self, rank: usize) {
        self.resources.push(rank);
        self.ebits_consumed += (rank as f64).log2();
    }

    fn local(&mut self, actor: Actor, description: impl Into<String>) {
        self.steps.push(Step {
            actor,
            kind: StepKind::LocalUnitary,
            description: description.into(),
            outcome: None,
            reports: None,
        });
    }

    fn measure(&mut self, actor: Actor, description: impl Into<String>, outcome: usize) -> usize {
        self.steps.push(Step {
            actor,
            kind: StepKind::Measurement,
            description: description.into(),
            outcome: Some(outcome),
            reports: None,
        });
        self.steps.len() - 1
    }

    fn send(&mut self, actor: Actor, measurement: usize) {
        let outcome = self.steps[measurement].outcome;
        self.steps.push(Step {
            actor,
            kind: StepKind::ClassicalMessage,
            description: format!("send outcome of step {measurement}"),
            outcome,
            reports: Some(measurement),
        });
    }

    /// Product of the resource ranks.
    pub fn resource_rank(&self) -> usize {
        self.resources.iter().product()
    }

    /// Checks that each message follows the measurement it reports, made by
    /// the same party with the same value, and that the ebit count matches
    /// the resources.
    pub fn check(&self) -> Result<()> {
        for (i, step) in self.steps.iter().enumerate() {
            if step.kind != StepKind::ClassicalMessage {
                continue;
            }
            let Some(j) = step.reports else {
                bail!(Protocol, "message at step {i} does not name its measurement");
            };
            if j >= i {
                bail!(Protocol, "message at step {i} precedes the measurement at step {j}");
            }
            let m = &self.steps[j];
            if m.kind != StepKind::Measurement || m.actor != step.actor || m.outcome != step.outcome {
                bail!(Protocol, "message at step {i} does not match measurement step {j}");
            }
        }
        let expected: f64 = self.resources.iter().map(|&r| (r as f64).log2()).sum();
        if (expected - self.ebits_consumed).abs() > 1e-12 {
            bail!(Protocol, "ebit ledger {} disagrees with resources ({expected})", self.ebits_consumed);
        }
        Ok(())
    }
}

/// How measurement branches are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branches {
    Exhaustive,
    Sampled { count: usize, seed: u64 },
}

/// Result for one combination of measurement outcomes.
#[derive(Debug, Clone)]
pub struct BranchReport {
    pub outcomes: Vec<usize>,
    pub probability: f64,
    pub fidelity: f64,
}

/// All simulated branches of a protocol, with the transcript and output of
/// the first one.
#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub transcript: ProtocolTranscript,
    pub output: StateVector,
    pub branches: Vec<BranchReport>,
}

impl ProtocolRun {
    pub fn min_fidelity(&self) -> f64 {
        self.branches.iter().map(|b| b.fidelity).fold(f64::INFINITY, f64::min)
    }

    pub fn max_fidelity(&self) -> f64 {
        self.branches.iter().map(|b| b.fidelity).fold(0.0, f64::max)
    }
}

/// Multi-register pure state.
struct Registers {
    dims: Vec<usize>,
    strides: Vec<usize>,
    state: DVector<Complex64>,
    fixed: Vec<Option<usize>>,
}

impl Registers {
    fn new(dims: Vec<usize>, state: DVector<Complex64>) -> Self {
        let mut strides = vec![1; dims.len()];
        for i in (0..dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        let fixed = vec![None; dims.len()];
        Self { dims, strides, state, fixed }
    }

    /// Offsets of every basis state of `regs` (first register most significant).
    fn offsets(&self, regs: &[usize]) -> Vec<usize> {
        let mut out = vec![0usize];
        for &r in regs {
            out = out.iter().flat_map(|&base| (0..self.dims[r]).map(move |x| base + x * self.strides[r])).collect();
        }
        out
    }

    fn apply(&mut self, op: &DMatrix<Complex64>, targets: &[usize]) {
        let local = self.offsets(targets);
        let others: Vec<usize> = (0..self.dims.len()).filter(|r| !targets.contains(r)).collect();
        let bases = self.offsets(&others);
        let mut buf = DVector::zeros(local.len());
        for base in bases {
            for (t, &off) in local.iter().enumerate() {
                buf[t] = self.state[base + off];
            }
            let out = op * &buf;
            for (t, &off) in local.iter().enumerate() {
                self.state[base + off] = out[t];
            }
        }
    }

    /// Projects register `reg` onto `|outcome⟩`; returns the probability.
    fn measure(&mut self, reg: usize, outcome: usize) -> f64 {
        let (d, stride) = (self.dims[reg], self.strides[reg]);
        let mut prob = 0.0;
        for (i, z) in self.state.iter_mut().enumerate() {
            if (i / stride) % d == outcome {
                prob += z.norm_sqr();
            } else {
                *z = ZERO;
            }
        }
        if prob > 0.0 {
            self.state /= Complex64::new(prob.sqrt(), 0.0);
        }
        self.fixed[reg] = Some(outcome);
        prob
    }

    /// State of `keep` (in that order) with every other register fixed to its outcome.
    fn extract(&self, keep: &[usize]) -> Result<StateVector> {
        let mut base = 0;
        for (r, f) in self.fixed.iter().enumerate() {
            if keep.contains(&r) {
                continue;
            }
            match f {
                Some(v) => base += v * self.strides[r],
                None => bail!(Protocol, "register {r} is neither kept nor measured"),
            }
        }
        let amplitudes: Vec<Complex64> = self.offsets(keep).iter().map(|&o| self.state[base + o]).collect();
        StateVector::normalized(amplitudes)
    }
}

fn omega(d: usize, power: i64) -> Complex64 {
    let angle = 2.0 * core::f64::consts::PI * (power.rem_euclid(d as i64) as f64) / d as f64;
    Complex64::new(angle.cos(), angle.sin())
}

/// `X^s |y⟩ = |y + s mod d⟩`.
fn shift(d: usize, s: i64) -> DMatrix<Complex64> {
    DMatrix::from_fn(d, d, |i, j| if (j as i64 + s).rem_euclid(d as i64) as usize == i { ONE } else { ZERO })
}

/// `Z^s |y⟩ = ω^{s·y} |y⟩`.
fn clock(d: usize, s: i64) -> DMatrix<Complex64> {
    DMatrix::from_fn(d, d, |i, j| if i == j { omega(d, s * i as i64) } else { ZERO })
}

/// `F |x⟩ = d^{-1/2} Σ_p ω^{x·p} |p⟩`.
fn fourier(d: usize) -> DMatrix<Complex64> {
    let s = 1.0 / (d as f64).sqrt();
    DMatrix::from_fn(d, d, |p, x| omega(d, (p * x) as i64) * s)
}

/// `|k⟩|j⟩ ↦ |k⟩|j − k mod m⟩` on a (control, resource) register pair.
fn subtract(dc: usize, m: usize) -> DMatrix<Complex64> {
    let n = dc * m;
    DMatrix::from_fn(n, n, |row, col| {
        let (k, j) = (col / m, col % m);
        let target = k * m + (j as i64 - k as i64).rem_euclid(m as i64) as usize;
        if row == target {
            ONE
        } else {
            ZERO
        }
    })
}

fn max_entangled(m: usize) -> DVector<Complex64> {
    let s = Complex64::new(1.0 / (m as f64).sqrt(), 0.0);
    DVector::from_fn(m * m, |i, _| if i / m == i % m { s } else { ZERO })
}

fn branch_list(radices: &[usize], mode: Branches) -> Vec<Vec<usize>> {
    let total: usize = radices.iter().product();
    let decode = |mut idx: usize| -> Vec<usize> {
        let mut out = vec![0; radices.len()];
        for (slot, &r) in out.iter_mut().zip(radices).rev() {
            *slot = idx % r;
            idx /= r;
        }
        out
    };
    match mode {
        Branches::Exhaustive => (0..total).map(decode).collect(),
        Branches::Sampled { count, seed } => {
            let mut r = rng::seeded(seed);
            (0..count.max(1)).map(|_| decode(rand::Rng::gen_range(&mut r, 0..total))).collect()
        }
    }
}

fn fidelity(a: &StateVector, b: &StateVector) -> f64 {
    a.inner(b).norm()
}

/// Runs `branch` for every outcome tuple and collects the reports.
fn run_branches(
    radices: &[usize],
    mode: Branches,
    target: &StateVector,
    mut branch: impl FnMut(&[usize]) -> Result<(ProtocolTranscript, StateVector, f64)>,
) -> Result<ProtocolRun> {
    let mut first: Option<(ProtocolTranscript, StateVector)> = None;
    let mut branches = Vec::new();
    for outcomes in branch_list(radices, mode) {
        let (transcript, output, probability) = branch(&outcomes)?;
        transcript.check()?;
        branches.push(BranchReport { fidelity: fidelity(&output, target), probability, outcomes });
        if first.is_none() {
            first = Some((transcript, output));
        }
    }
    let (transcript, output) = first.expect("at least one branch");
    Ok(ProtocolRun { transcript, output, branches })
}

fn check_input(layout: &SystemLayout, input: &StateVector) -> Result<()> {
    if layout.len() != 2 {
        bail!(Argument, "protocols need a bipartite layout, got {} systems", layout.len());
    }
    if input.dim() != layout.total() {
        bail!(Dimension, "input dimension {} does not match layout total {}", input.dim(), layout.total());
    }
    Ok(())
}

/// Teleports `src` onto `dst` through the pair `(half_src, dst)`; the sender
/// owns `src` and `half_src`. Returns the two outcomes' probability product.
fn teleport(
    regs: &mut Registers,
    transcript: &mut ProtocolTranscript,
    sender: Actor,
    (src, half_src, dst): (usize, usize, usize),
    (a, p): (usize, usize),
) -> f64 {
    let d = regs.dims[src];
    let receiver = if sender == Actor::Alice { Actor::Bob } else { Actor::Alice };
    regs.apply(&subtract(d, d), &[src, half_src]);
    transcript.local(sender, "subtract data value from resource half");
    let mut prob = regs.measure(half_src, a);
    let ma = transcript.measure(sender, "measure resource half", a);
    regs.apply(&fourier(d), &[src]);
    transcript.local(sender, "Fourier transform on data");
    prob *= regs.measure(src, p);
    let mp = transcript.measure(sender, "measure data", p);
    transcript.send(sender, ma);
    transcript.send(sender, mp);
    regs.apply(&(clock(d, -(p as i64)) * shift(d, -(a as i64))), &[dst]);
    transcript.local(receiver, format!("apply Z^-{p} X^-{a}"));
    prob
}

/// Implements `u` on `[d_A, d_B]` by teleporting Alice's system to Bob and back.
pub fn teleport_unitary_protocol(
    u: &ComplexMatrix,
    layout: &SystemLayout,
    input: &StateVector,
    branches: Branches,
) -> Result<ProtocolRun> {
    check_input(layout, input)?;
    layout.check_operator(u)?;
    let (da, db) = (layout.dims()[0], layout.dims()[1]);
    let target = input.apply(u)?;
    // Registers: A, B, Alice's and Bob's halves of the outbound pair, then of the return pair.
    let dims = vec![da, db, da, da, da, da];
    let init = input.amplitudes().kronecker(&max_entangled(da)).kronecker(&max_entangled(da));
    run_branches(&[da; 4], branches, &target, |o| {
        let mut regs = Registers::new(dims.clone(), init.clone());
        let mut transcript = ProtocolTranscript::new();
        transcript.consume(da);
        transcript.consume(da);
        let mut prob = teleport(&mut regs, &mut transcript, Actor::Alice, (0, 2, 3), (o[0], o[1]));
        regs.apply(u.as_dmatrix(), &[3, 1]);
        transcript.local(Actor::Bob, "apply u");
        prob *= teleport(&mut regs, &mut transcript, Actor::Bob, (3, 5, 4), (o[2], o[3]));
        Ok((transcript, regs.extract(&[4, 1])?, prob))
    })
}

/// Implements a controlled unitary with one maximally entangled pair of
/// Schmidt rank equal to the number of control values.
pub fn controlled_gate_protocol(form: &ControlledForm, input: &StateVector, branches: Branches) -> Result<ProtocolRun> {
    let m = form.blocks.len();
    let dt = form.blocks.first().map_or(0, ComplexMatrix::rows);
    if m == 0
        || form.q.rows() != m
        || form.r.rows() != m
        || form.blocks.iter().any(|v| v.rows() != dt || v.cols() != dt)
    {
        bail!(Argument, "controlled form has inconsistent shapes");
    }
    if form.layout.dim_of(&form.side) != m || form.layout.total() != m * dt {
        bail!(Argument, "controlled form does not match its layout");
    }
    if input.dim() != form.layout.total() {
        bail!(Dimension, "input dimension {} does not match layout total {}", input.dim(), form.layout.total());
    }
    let target = input.apply(&form.to_matrix()?)?;
    let perm = form.layout.grouping_permutation(&form.side);
    let grouped_input = permute_state(input, &form.layout, &perm)?;
    let grouped_layout = form.layout.permuted(&perm);
    let ungroup = |s: &StateVector| permute_state(s, &grouped_layout, &inverse_permutation(&perm));

    let mut controlled_v = DMatrix::<Complex64>::zeros(m * dt, m * dt);
    for (k, v) in form.blocks.iter().enumerate() {
        controlled_v.view_mut((k * dt, k * dt), (dt, dt)).copy_from(v.as_dmatrix());
    }
    // Registers: control (Alice), target (Bob), Alice's resource half, Bob's resource half.
    let dims = vec![m, dt, m, m];
    let init = grouped_input.amplitudes().kronecker(&max_entangled(m));
    run_branches(&[m, m], branches, &target, |o| {
        let (alice_out, bob_out) = (o[0], o[1]);
        let mut regs = Registers::new(dims.clone(), init.clone());
        let mut t = ProtocolTranscript::new();
        t.consume(m);
        regs.apply(form.r.as_dmatrix(), &[0]);
        t.local(Actor::Alice, "apply r to control");
        regs.apply(&subtract(m, m), &[0, 2]);
        t.local(Actor::Alice, "subtract control value from resource half");
        let mut prob = regs.measure(2, alice_out);
        let ma = t.measure(Actor::Alice, "measure resource half", alice_out);
        t.send(Actor::Alice, ma);
        regs.apply(&shift(m, -(alice_out as i64)), &[3]);
        t.local(Actor::Bob, format!("shift resource half by -{alice_out}"));
        regs.apply(&controlled_v, &[3, 1]);
        t.local(Actor::Bob, "apply controlled blocks from resource half");
        regs.apply(&fourier(m), &[3]);
        t.local(Actor::Bob, "Fourier transform on resource half");
        prob *= regs.measure(3, bob_out);
        let mb = t.measure(Actor::Bob, "measure resource half", bob_out);
        t.send(Actor::Bob, mb);
        regs.apply(&clock(m, -(bob_out as i64)), &[0]);
        t.local(Actor::Alice, format!("apply phase Z^-{bob_out} to control"));
        regs.apply(form.q.as_dmatrix(), &[0]);
        t.local(Actor::Alice, "apply q to control");
        let output = ungroup(&regs.extract(&[0, 1])?)?;
        Ok((t, output, prob))
    })
}

/// Fidelity of a protocol output against the directly computed `u · input`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityReport {
    pub fidelity: f64,
    pub ebits_consumed: f64,
}

/// Checks the transcript and compares `output` with `u · input`.
pub fn verify_protocol(
    transcript: &ProtocolTranscript,
    u: &ComplexMatrix,
    input: &StateVector,
    output: &StateVector,
) -> Result<FidelityReport> {
    transcript.check()?;
    let expected = input.apply(u)?;
    if expected.dim() != output.dim() {
        bail!(Dimension, "output dimension {} does not match {}", output.dim(), expected.dim());
    }
    Ok(FidelityReport { fidelity: fidelity(&expected, output), ebits_consumed: transcript.ebits_consumed })
}

/// Which construction attains an entanglement-cost bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Local,
    Teleportation,
    Controlled,
}

impl Route {
    pub fn name(self) -> &'static str {
        match self {
            Route::Local => "local",
            Route::Teleportation => "teleportation",
            Route::Controlled => "controlled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    /// Schmidt rank of the maximally entangled resource.
    pub k: usize,
    pub ebits: f64,
    pub route: Route,
}

/// Upper bound on the entanglement needed for a Schmidt-rank-three unitary
/// on `d_A ≤ d_B`: `k = min{d_A², m}` with `m` the number of controlled terms
/// (default `d_B`).
pub fn entanglement_cost_upper(d_a: usize, d_b: usize, controlled_terms: Option<usize>) -> Result<CostEstimate> {
    if d_a == 0 || d_b == 0 {
        bail!(Argument, "dimensions must be positive");
    }
    if d_a > d_b {
        bail!(Argument, "expected d_A <= d_B, got {d_a} > {d_b}; swap the parties");
    }
    let m = controlled_terms.unwrap_or(d_b);
    if m == 0 || m > d_a * d_b {
        bail!(Argument, "number of controlled terms {m} out of range");
    }
    let tele = d_a * d_a;
    let (k, route) = if tele.min(m) == 1 {
        (1, Route::Local)
    } else if m <= tele {
        (m, Route::Controlled)
    } else {
        (tele, Route::Teleportation)
    };
    Ok(CostEstimate { k, ebits: (k as f64).log2(), route })
}
