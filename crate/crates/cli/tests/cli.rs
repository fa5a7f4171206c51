use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

struct Run {
    code: i32,
    json: Value,
    stdout: String,
}

fn run(args: &[&str]) -> Run {
    run_with_env(args, &[])
}

fn run_with_env(args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_schmidt-lab"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    let stdout = String::from_utf8(out.stdout).expect("utf-8 output");
    let json = serde_json::from_str(stdout.trim()).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {stdout}"));
    Run { code: out.status.code().expect("exit code"), json, stdout }
}

fn construct(dir: &Path, gate: &str, params: Option<&str>) -> PathBuf {
    let mut args = vec!["construct", "--gate", gate];
    if let Some(p) = params {
        args.extend(["--params", p]);
    }
    let r = run(&args);
    assert_eq!(r.code, 0, "{}", r.stdout);
    let path = dir.join(format!("{gate}.json"));
    std::fs::write(&path, &r.stdout).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn entry(v: &Value, i: usize) -> (f64, f64) {
    (v["data"][i][0].as_f64().unwrap(), v["data"][i][1].as_f64().unwrap())
}

#[test]
fn cnot_is_controlled_from_a_with_identity_and_flip_blocks() {
    let dir = TempDir::new().unwrap();
    let cnot = construct(dir.path(), "cnot", None);
    let r = run(&["detect", "--side", "A", s(&cnot)]);
    assert_eq!(r.code, 0);
    assert_eq!(r.json["status"], "ok");
    let blocks = r.json["payload"]["form"]["blocks"].as_array().unwrap();
    assert_eq!(blocks.len(), 2);
    let is_identity = |b: &Value| entry(b, 0) == (1.0, 0.0) && entry(b, 1) == (0.0, 0.0) && entry(b, 3) == (1.0, 0.0);
    let is_flip = |b: &Value| entry(b, 0) == (0.0, 0.0) && entry(b, 1) == (1.0, 0.0) && entry(b, 2) == (1.0, 0.0);
    assert!(blocks.iter().any(is_identity));
    assert!(blocks.iter().any(is_flip));
}

#[test]
fn u3_is_not_controlled_by_one_qubit() {
    let dir = TempDir::new().unwrap();
    let u3 = construct(dir.path(), "u3", None);
    let r = run(&["detect", "--side", "1", s(&u3)]);
    assert_eq!(r.code, 1);
    assert_eq!(r.json["status"], "verdict-negative");
    assert!(r.json["payload"]["failed_check"]["check"].is_string());
    let pair = run(&["detect", "--side", "1,2", s(&u3)]);
    assert_eq!(pair.code, 0);
    let all = run(&["detect", s(&u3)]);
    assert_eq!(all.code, 0);
    assert_eq!(all.json["payload"]["union_witness"].as_array().unwrap().len(), 2);
}

#[test]
fn swap_is_not_block_controlled() {
    let dir = TempDir::new().unwrap();
    let swap = construct(dir.path(), "swap", None);
    let r = run(&["detect", "--bcu", s(&swap)]);
    assert_eq!(r.code, 1);
    assert_eq!(r.json["payload"]["bcu"], false);
}

#[test]
fn fuzz_sch3_passes_every_trial() {
    let r = run(&["fuzz", "--theorem", "sch3", "--trials", "100", "--seed", "7"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.json["payload"]["passed"], 100);
    assert_eq!(r.json["payload"]["failed"], 0);
}

#[test]
fn construct_then_decompose_reproduces_ranks() {
    let dir = TempDir::new().unwrap();
    let cases: [(&str, Option<&str>, u64); 11] = [
        ("swap", None, 4),
        ("cnot", None, 2),
        ("u3", None, 3),
        ("u_odd_n", Some("n=5"), 3),
        ("four_qubit_example", None, 4),
        ("padded_2x2xn", Some("n=3"), 3),
        ("u3_extended", Some("d1=2,d2=1,d3=1"), 3),
        // The first qubit is the control of |0⟩⟨0|⊗U + |1⟩⟨1|⊗U†.
        ("even_qubit_rank3", Some("n=4"), 2),
        ("i2_i2_u3", None, 1),
        ("identity", Some("n=2"), 1),
        ("random_controlled", Some("{\"d_ctrl\": 3, \"d_tgt\": 3, \"rank\": 2, \"seed\": 9}"), 2),
    ];
    for (gate, params, rank) in cases {
        let path = construct(dir.path(), gate, params);
        let r = run(&["decompose", s(&path)]);
        assert_eq!(r.code, 0, "{gate}: {}", r.stdout);
        assert_eq!(r.json["payload"]["rank"], rank, "{gate}");
        assert!(r.json["payload"]["reconstruction_residual"].as_f64().unwrap() < 1e-10);
    }
    let u3 = dir.path().join("u3.json");
    let r = run(&["decompose", s(&u3), "--cut", "1,2"]);
    assert_eq!(r.json["payload"]["rank"], 3);
}

#[test]
fn protocols_reach_unit_fidelity() {
    let dir = TempDir::new().unwrap();
    let cnot = construct(dir.path(), "cnot", None);
    let r = run(&["protocol", "--route", "controlled", s(&cnot), "--input", "random:3"]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert_eq!(r.json["payload"]["ebits"], 1.0);
    assert!(r.json["payload"]["min_fidelity"].as_f64().unwrap() >= 1.0 - 1e-10);
    let t = run(&["protocol", "--route", "teleport", s(&cnot)]);
    assert_eq!(t.code, 0);
    assert_eq!(t.json["payload"]["branches"], 16);
    let swap = construct(dir.path(), "swap", None);
    let neg = run(&["protocol", "--route", "controlled", s(&swap)]);
    assert_eq!(neg.code, 1);
}

#[test]
fn schmidt_number_of_cnot() {
    let dir = TempDir::new().unwrap();
    let cnot = construct(dir.path(), "cnot", None);
    let r = run(&["schmidt-number", s(&cnot), "--restarts", "8", "--seed", "1"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.json["payload"]["max_rank_found"], 2);
    assert_eq!(r.json["payload"]["ancilla"]["rank_with_ancillas"], 2);
}

#[test]
fn identical_seeds_give_identical_output() {
    let a = run(&["fuzz", "--theorem", "sch2-diagonal", "--trials", "20", "--seed", "3"]);
    let b = run(&["fuzz", "--theorem", "sch2-diagonal", "--trials", "20", "--seed", "3"]);
    assert_eq!(a.stdout, b.stdout);
    let dir = TempDir::new().unwrap();
    let u3 = construct(dir.path(), "u3", None);
    let a = run(&["schmidt-number", s(&u3), "--seed", "5", "--restarts", "4"]);
    let b = run(&["schmidt-number", s(&u3), "--seed", "5", "--restarts", "4"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn bad_inputs_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"dims": [2], "rows": 2, "cols": 2, "data": [[1, 0], [0, 0], [0, 0]]}"#).unwrap();
    let r = run(&["decompose", s(&bad)]);
    assert_eq!(r.code, 2);
    assert_eq!(r.json["status"], "error");
    assert!(r.json["payload"].is_null());

    let nonunitary = dir.path().join("nonunitary.json");
    std::fs::write(
        &nonunitary,
        r#"{"dims": [2, 2], "rows": 4, "cols": 4, "data": [[2,0],[0,0],[0,0],[0,0],[0,0],[1,0],[0,0],[0,0],[0,0],[0,0],[1,0],[0,0],[0,0],[0,0],[0,0],[1,0]]}"#,
    )
    .unwrap();
    assert_eq!(run(&["detect", "--side", "A", s(&nonunitary)]).code, 2);
    assert_eq!(run(&["construct", "--gate", "nope"]).code, 2);
    assert_eq!(run(&["construct", "--gate", "u_odd_n", "--params", "n=5,k=1"]).code, 2);
    assert_eq!(run(&["fuzz", "--theorem", "nope"]).code, 2);
    assert_eq!(run(&["decompose", "--unknown-flag", "x"]).code, 2);
}

#[test]
fn dimension_cap_comes_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let u3 = construct(dir.path(), "u3", None);
    let r = run_with_env(&["decompose", s(&u3)], &[("SCHMIDT_LAB_MAX_DIM", "4")]);
    assert_eq!(r.code, 2);
    let r = run_with_env(&["decompose", s(&u3)], &[("SCHMIDT_LAB_MAX_DIM", "8")]);
    assert_eq!(r.code, 0);
}
