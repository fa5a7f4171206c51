use std::collections::BTreeMap;
use std::path::Path;

use schmidt_lab_core::algebra::Violation;
use schmidt_lab_core::control::{
    fuzz_theorem_checks, is_bcu, is_controlled, multipartite_control_analysis, ControlVerdict, ControlledForm,
    SideAnalysis, Theorem, Tolerances,
};
use schmidt_lab_core::gates::{GateSpec, GATE_NAMES};
use schmidt_lab_core::matrix::{ComplexMatrix, SystemLayout};
use schmidt_lab_core::protocols::{
    controlled_gate_protocol, entanglement_cost_upper, teleport_unitary_protocol, Branches, ProtocolRun,
};
use schmidt_lab_core::schmidt::{group_cut, operator_schmidt_decompose, schmidt_rank};
use schmidt_lab_core::schmidt_number::{ancilla_extended_check, max_output_schmidt_rank_search};
use serde_json::{json, Value};

use crate::io::{block_json, matrix_json, read_matrix, read_state, state_json};
use crate::report::{CommandResult, Failure, Status};

/// Seed for the randomized steps of the detectors.
const DETECTOR_SEED: u64 = 0;
const FIDELITY_FLOOR: f64 = 1.0 - 1e-10;

pub struct Context {
    pub tol: Tolerances,
    pub verbose: bool,
}

type Outcome = Result<CommandResult, Failure>;

fn one_based(systems: &[usize]) -> Vec<usize> {
    systems.iter().map(|s| s + 1).collect()
}

/// Parses `A`, `B` or a comma-separated list of 1-based system indices.
pub fn parse_side(text: &str, layout: &SystemLayout) -> Result<Vec<usize>, Failure> {
    let side = match text {
        "A" | "a" => vec![0],
        "B" | "b" => vec![1],
        _ => text
            .split(',')
            .map(|s| match s.trim().parse::<usize>() {
                Ok(i) if i >= 1 => Ok(i - 1),
                _ => Err(Failure::input(format!("bad system index {s:?}; systems are numbered from 1"))),
            })
            .collect::<Result<Vec<_>, _>>()?,
    };
    Ok(layout.check_cut(&side)?)
}

fn violation_json(v: &Option<Violation>) -> Value {
    match v {
        Some(v) => json!({ "check": v.check, "magnitude": v.magnitude }),
        None => Value::Null,
    }
}

fn form_json(form: &ControlledForm, verbose: bool) -> Value {
    let mut out = json!({
        "control_values": form.control_values(),
        "blocks": form.blocks.iter().map(block_json).collect::<Vec<_>>(),
    });
    if verbose {
        out["q"] = block_json(&form.q);
        out["r"] = block_json(&form.r);
    }
    out
}

fn verdict_json(side: &[usize], v: &ControlVerdict, verbose: bool) -> Value {
    json!({
        "side": one_based(side),
        "controlled": v.controlled,
        "inconclusive": v.inconclusive,
        "schmidt_rank": v.schmidt_rank,
        "failed_check": violation_json(&v.failed_check),
        "witness_residual": v.witness_residual,
        "form": v.form.as_ref().map(|f| form_json(f, verbose)),
    })
}

fn verdict_status(v: &ControlVerdict) -> Status {
    if v.controlled {
        Status::Ok
    } else if v.inconclusive {
        Status::Inconclusive
    } else {
        Status::VerdictNegative
    }
}

fn describe(side: &[usize], v: &ControlVerdict) -> String {
    let sys = one_based(side);
    match (&v.failed_check, v.controlled) {
        (_, true) => format!("controlled from systems {sys:?} (Schmidt rank {})", v.schmidt_rank),
        (Some(f), _) if v.inconclusive => {
            format!("inconclusive for systems {sys:?}: {} ({:.3e})", f.check, f.magnitude)
        }
        (Some(f), _) => format!("not controlled from systems {sys:?}: {} ({:.3e})", f.check, f.magnitude),
        (None, _) => format!("not controlled from systems {sys:?}"),
    }
}

pub fn decompose(ctx: &Context, path: &Path, cut: Option<Vec<usize>>, tol: f64) -> Outcome {
    let (u, layout) = read_matrix(path, ctx.tol.max_dim)?;
    let cut = match cut {
        Some(c) => parse_side(&c.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","), &layout)?,
        None => vec![0],
    };
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Failure::input(format!("tolerance {tol} must lie in (0, 1)")));
    }
    let report = schmidt_rank(&u, &layout, &cut, tol)?;
    let dec = operator_schmidt_decompose(&u, &layout, &cut, tol)?;
    let residual = dec.reconstruct()?.distance(&u) / u.frobenius_norm().max(f64::MIN_POSITIVE);
    let mut payload = json!({
        "dims": layout.dims(),
        "cut": one_based(&cut),
        "rank": dec.rank(),
        "coefficients": dec.coefficients,
        "tolerance_used": report.tolerance_used,
        "reconstruction_residual": residual,
    });
    if ctx.verbose {
        payload["left_factors"] = dec.left_factors.iter().map(block_json).collect();
        payload["right_factors"] = dec.right_factors.iter().map(block_json).collect();
    }
    let summary = format!("Schmidt rank {} across systems {:?}", dec.rank(), one_based(&cut));
    Ok(CommandResult::new(Status::Ok, payload, summary))
}

fn analysis_json(a: &SideAnalysis) -> Value {
    json!({
        "side": one_based(&a.side),
        "schmidt_rank": a.schmidt_rank,
        "rank_shortcut": a.rank_shortcut,
        "controlled": a.verdict.controlled,
        "inconclusive": a.verdict.inconclusive,
        "failed_check": violation_json(&a.verdict.failed_check),
    })
}

fn detect_bcu(ctx: &Context, u: &ComplexMatrix, layout: &SystemLayout, side: &[usize]) -> Outcome {
    let v = is_bcu(u, layout, side, &ctx.tol, DETECTOR_SEED)?;
    let blocks = v.blocks.as_ref().map(|b| {
        let mut out = json!({ "block_dims": b.block_dims });
        if ctx.verbose {
            out["input_projectors"] = b.input_projectors.iter().map(block_json).collect();
            out["output_projectors"] = b.output_projectors.iter().map(block_json).collect();
        }
        out
    });
    let payload = json!({
        "side": one_based(side),
        "bcu": v.bcu,
        "failed_check": v.failed_check,
        "blocks": blocks,
    });
    let (status, summary) = match &v.failed_check {
        None => (Status::Ok, format!("block-controlled from systems {:?}", one_based(side))),
        Some(c) => (Status::VerdictNegative, format!("not block-controlled from systems {:?}: {c}", one_based(side))),
    };
    Ok(CommandResult::new(status, payload, summary))
}

pub fn detect(ctx: &Context, path: &Path, side: Option<&str>, bcu: bool) -> Outcome {
    let (u, layout) = read_matrix(path, ctx.tol.max_dim)?;
    let sides: Vec<Vec<usize>> = match side {
        Some(s) => vec![parse_side(s, &layout)?],
        None if layout.len() == 2 => vec![vec![0], vec![1]],
        None if bcu => return Err(Failure::input("--bcu on more than two systems needs --side")),
        None => return detect_multipartite(ctx, &u, &layout),
    };
    if bcu {
        let mut last = None;
        for s in &sides {
            let r = detect_bcu(ctx, &u, &layout, s)?;
            if r.status == Status::Ok {
                return Ok(r);
            }
            last = Some(r);
        }
        return Ok(last.expect("at least one side"));
    }
    let mut results = Vec::new();
    let mut status = Status::VerdictNegative;
    let mut summaries = Vec::new();
    for s in &sides {
        let v = is_controlled(&u, &layout, s, &ctx.tol, DETECTOR_SEED)?;
        status = match (status, verdict_status(&v)) {
            (Status::Ok, _) | (_, Status::Ok) => Status::Ok,
            (Status::Inconclusive, _) | (_, Status::Inconclusive) => Status::Inconclusive,
            _ => Status::VerdictNegative,
        };
        summaries.push(describe(s, &v));
        results.push(verdict_json(s, &v, ctx.verbose));
    }
    let payload = if results.len() == 1 { results.pop().expect("one result") } else { json!({ "sides": results }) };
    Ok(CommandResult::new(status, payload, summaries.join("; ")))
}

fn detect_multipartite(ctx: &Context, u: &ComplexMatrix, layout: &SystemLayout) -> Outcome {
    let report = multipartite_control_analysis(u, layout, &ctx.tol, DETECTOR_SEED)?;
    let bounds = report.rank_bounds.as_ref().map(|b| {
        json!({
            "lower": b.lower,
            "upper": b.upper,
            "confirmed": b.confirmed,
            "residual": b.residual,
            "lower_cut": one_based(&b.lower_cut),
        })
    });
    let witness_form = report.union_witness.as_ref().and_then(|w| {
        report.singletons.iter().chain(&report.pairs).find(|a| &a.side == w).and_then(|a| a.verdict.form.as_ref())
    });
    let payload = json!({
        "singletons": report.singletons.iter().map(analysis_json).collect::<Vec<_>>(),
        "pairs": report.pairs.iter().map(analysis_json).collect::<Vec<_>>(),
        "union_witness": report.union_witness.as_ref().map(|w| one_based(w)),
        "form": witness_form.map(|f| form_json(f, ctx.verbose)),
        "rank_bounds": bounds,
        "rank3_guarantee_violated": report.rank3_guarantee_violated,
    });
    let any_inconclusive = report.singletons.iter().chain(&report.pairs).any(|a| a.verdict.inconclusive);
    let mut diagnostics = Vec::new();
    if report.rank3_guarantee_violated {
        diagnostics.push(String::from("rank three confirmed but no singleton or pair controls"));
    }
    let (status, summary) = match &report.union_witness {
        Some(w) => (Status::Ok, format!("controlled from systems {:?}", one_based(w))),
        None if any_inconclusive => {
            (Status::Inconclusive, String::from("no controlling singleton or pair; some checks in the near-miss band"))
        }
        None => (Status::VerdictNegative, String::from("no singleton or pair controls")),
    };
    Ok(CommandResult::new(status, payload, summary).with_diagnostics(diagnostics))
}

/// Accepts `{"n": 5}` or `n=5,seed=2`.
fn parse_params(text: &str) -> Result<BTreeMap<String, u64>, Failure> {
    let text = text.trim();
    if text.starts_with('{') {
        let value: Value = serde_json::from_str(text).map_err(|e| Failure::input(format!("bad --params JSON: {e}")))?;
        let obj = value.as_object().ok_or_else(|| Failure::input("--params must be a JSON object"))?;
        return obj
            .iter()
            .map(|(k, v)| match v.as_u64() {
                Some(n) => Ok((k.clone(), n)),
                None => Err(Failure::input(format!("parameter {k} must be a non-negative integer"))),
            })
            .collect();
    }
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (k, v) =
                pair.split_once('=').ok_or_else(|| Failure::input(format!("expected key=value, got {pair:?}")))?;
            let v: u64 = v
                .trim()
                .parse()
                .map_err(|_| Failure::input(format!("parameter {k} must be a non-negative integer")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

pub fn construct(ctx: &Context, gate: &str, params: Option<&str>) -> Outcome {
    if !GATE_NAMES.contains(&gate) {
        return Err(Failure::input(format!("unknown gate {gate:?}; known gates: {}", GATE_NAMES.join(", "))));
    }
    let spec = parse_params(params.unwrap_or(""))?.into_iter().fold(GateSpec::new(gate), |s, (k, v)| s.with(&k, v));
    let (u, layout) = spec.construct()?;
    if u.rows() > ctx.tol.max_dim {
        return Err(Failure::input(format!("dimension {} exceeds the cap {}", u.rows(), ctx.tol.max_dim)));
    }
    let summary = format!("{gate} on dims {:?}", layout.dims());
    Ok(CommandResult::new(Status::Ok, matrix_json(&u, layout.dims()), summary))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum RouteArg {
    Auto,
    Controlled,
    Teleport,
}

fn find_form(ctx: &Context, u: &ComplexMatrix, layout: &SystemLayout) -> Result<Option<ControlledForm>, Failure> {
    if layout.len() == 2 {
        for side in [0usize, 1] {
            let v = is_controlled(u, layout, &[side], &ctx.tol, DETECTOR_SEED)?;
            if v.controlled {
                return Ok(v.form);
            }
        }
        return Ok(None);
    }
    let report = multipartite_control_analysis(u, layout, &ctx.tol, DETECTOR_SEED)?;
    Ok(report.union_witness.and_then(|w| {
        report.singletons.into_iter().chain(report.pairs).find(|a| a.side == w).and_then(|a| a.verdict.form)
    }))
}

fn run_json(run: &ProtocolRun, route: &str, dims: &[usize], verbose: bool) -> Value {
    let steps: Vec<Value> = run
        .transcript
        .steps
        .iter()
        .map(|s| {
            json!({
                "actor": s.actor.name(),
                "kind": s.kind.name(),
                "payload": { "description": s.description, "outcome": s.outcome, "reports": s.reports },
            })
        })
        .collect();
    let mut out = json!({
        "route": route,
        "ebits": run.transcript.ebits_consumed,
        "resource_rank": run.transcript.resource_rank(),
        "branches": run.branches.len(),
        "min_fidelity": run.min_fidelity(),
        "max_fidelity": run.max_fidelity(),
        "transcript": steps,
    });
    if verbose {
        out["output"] = state_json(&run.output, dims);
        out["branch_reports"] = run
            .branches
            .iter()
            .map(|b| json!({ "outcomes": b.outcomes, "probability": b.probability, "fidelity": b.fidelity }))
            .collect();
    }
    out
}

pub fn protocol(ctx: &Context, route: RouteArg, path: &Path, input: Option<&str>) -> Outcome {
    let (u, layout) = read_matrix(path, ctx.tol.max_dim)?;
    let state = read_state(input.unwrap_or("plus"), &layout)?;
    let form = match route {
        RouteArg::Teleport => None,
        _ => find_form(ctx, &u, &layout)?,
    };
    let (run, name, control_values) = match (route, form) {
        (RouteArg::Controlled | RouteArg::Auto, Some(form)) => {
            let m = form.control_values();
            (controlled_gate_protocol(&form, &state, Branches::Exhaustive)?, "controlled", Some(m))
        }
        (RouteArg::Controlled, None) => {
            let payload = json!({ "route": "controlled", "controlled": false });
            return Ok(CommandResult::new(
                Status::VerdictNegative,
                payload,
                "gate is not controlled by any tested subset",
            ));
        }
        _ => {
            if layout.len() != 2 {
                return Err(Failure::input("teleportation needs a two-system gate"));
            }
            (teleport_unitary_protocol(&u, &layout, &state, Branches::Exhaustive)?, "teleport", None)
        }
    };
    let mut payload = run_json(&run, name, layout.dims(), ctx.verbose);
    if layout.len() == 2 {
        let (lo, hi) = (layout.dims()[0].min(layout.dims()[1]), layout.dims()[0].max(layout.dims()[1]));
        if let Ok(c) = entanglement_cost_upper(lo, hi, control_values) {
            payload["cost_bound"] = json!({ "k": c.k, "ebits": c.ebits, "route": c.route.name() });
        }
    }
    if run.min_fidelity() < FIDELITY_FLOOR {
        return Err(Failure::numerical(format!("branch fidelity {:.3e} below the floor", run.min_fidelity())));
    }
    let summary = format!(
        "{name} route: {} branches, min fidelity {:.12}, {:.4} ebits",
        run.branches.len(),
        run.min_fidelity(),
        run.transcript.ebits_consumed
    );
    Ok(CommandResult::new(Status::Ok, payload, summary))
}

pub fn schmidt_number(ctx: &Context, path: &Path, restarts: usize, seed: u64) -> Outcome {
    let (u, layout) = read_matrix(path, ctx.tol.max_dim)?;
    if layout.len() < 2 {
        return Err(Failure::input("need at least two systems"));
    }
    let cut = [0usize];
    let found = max_output_schmidt_rank_search(&u, &layout, &cut, restarts, seed)?;
    let (grouped, bip, _) = group_cut(&u, &layout, &cut)?;
    let ancilla = ancilla_extended_check(&grouped, &bip)?;
    let payload = json!({
        "cut": one_based(&cut),
        "operator_rank": ancilla.operator_rank,
        "max_rank_found": found.max_rank,
        "surrogate": found.surrogate,
        "witness": found.witness.local_states.iter().map(|s| state_json(s, &[s.dim()])).collect::<Vec<_>>(),
        "ancilla": {
            "rank_with_ancillas": ancilla.rank_with_ancillas,
            "consistent": ancilla.consistent(),
        },
    });
    let summary = format!(
        "largest output Schmidt rank found {} (operator rank {}, with ancillas {})",
        found.max_rank, ancilla.operator_rank, ancilla.rank_with_ancillas
    );
    let mut diagnostics = vec![String::from("the search value is a lower bound on the maximum")];
    let status = if ancilla.consistent() {
        Status::Ok
    } else {
        diagnostics.push(String::from("ancilla-assisted rank differs from the operator rank"));
        Status::Inconclusive
    };
    Ok(CommandResult::new(status, payload, summary).with_diagnostics(diagnostics))
}

pub fn fuzz(ctx: &Context, theorem: &str, trials: usize, seed: u64) -> Outcome {
    let Some(t) = Theorem::from_name(theorem) else {
        let names: Vec<&str> = Theorem::ALL.iter().map(|t| t.name()).collect();
        return Err(Failure::input(format!("unknown theorem {theorem:?}; known: {}", names.join(", "))));
    };
    let s = fuzz_theorem_checks(t, trials, seed, &ctx.tol)?;
    let failure = s.first_failure.as_ref().map(|f| {
        let mut out = json!({ "trial": f.trial, "dims": f.layout.dims(), "detail": f.detail });
        if ctx.verbose {
            out["matrix"] = matrix_json(&f.matrix, f.layout.dims());
        }
        out
    });
    let payload = json!({
        "theorem": t.name(),
        "trials": s.trials,
        "seed": seed,
        "passed": s.passed,
        "inconclusive": s.inconclusive,
        "failed": s.failed,
        "max_witness_residual": s.max_witness_residual,
        "first_failure": failure,
    });
    let status = if s.failed > 0 {
        Status::VerdictNegative
    } else if s.inconclusive > 0 {
        Status::Inconclusive
    } else {
        Status::Ok
    };
    let summary =
        format!("{}: {}/{} passed, {} inconclusive, {} failed", t.name(), s.passed, s.trials, s.inconclusive, s.failed);
    Ok(CommandResult::new(status, payload, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn side_parsing() {
        let layout = SystemLayout::qubits(3);
        assert_eq!(parse_side("A", &layout).unwrap(), vec![0]);
        assert_eq!(parse_side("B", &layout).unwrap(), vec![1]);
        assert_eq!(parse_side("3,1", &layout).unwrap(), vec![0, 2]);
        assert!(parse_side("0", &layout).is_err());
        assert!(parse_side("4", &layout).is_err());
        assert!(parse_side("1,2,3", &layout).is_err());
    }

    #[test]
    fn params_in_both_forms() {
        let a = parse_params("{\"d_ctrl\": 3, \"seed\": 4}").unwrap();
        let b = parse_params("d_ctrl=3, seed=4").unwrap();
        assert_eq!(a, b);
        assert!(parse_params("n=-1").is_err());
        assert!(parse_params("").unwrap().is_empty());
    }
}
