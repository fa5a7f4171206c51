//! Matrix and state JSON.
//!
//! A matrix file is `{"dims": [..], "rows": N, "cols": N, "data": [[re, im], ..]}`
//! with `data` in row-major order and `N` the product of `dims`. The output
//! of `construct` (a result envelope whose payload is such an object) is
//! accepted as well.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use schmidt_lab_core::matrix::{ComplexMatrix, StateVector, SystemLayout};
use schmidt_lab_core::rng;
use serde_json::{json, Map, Value};

use crate::report::Failure;

pub fn complex_json(z: Complex64) -> Value {
    json!([z.re, z.im])
}

pub fn matrix_json(m: &ComplexMatrix, dims: &[usize]) -> Value {
    let data: Vec<Value> = m.to_row_major().into_iter().map(complex_json).collect();
    json!({ "dims": dims, "rows": m.rows(), "cols": m.cols(), "data": data })
}

/// A square block without a system structure of its own.
pub fn block_json(m: &ComplexMatrix) -> Value {
    matrix_json(m, &[m.rows()])
}

pub fn state_json(s: &StateVector, dims: &[usize]) -> Value {
    let data: Vec<Value> = s.amplitudes().iter().copied().map(complex_json).collect();
    json!({ "dims": dims, "data": data })
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value, Failure> {
    obj.get(key).ok_or_else(|| Failure::input(format!("missing field {key:?}")))
}

fn as_count(v: &Value, what: &str) -> Result<usize, Failure> {
    v.as_u64()
        .and_then(|n| usize::try_from(n).ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::input(format!("{what} must be a positive integer")))
}

fn parse_dims(obj: &Map<String, Value>) -> Result<Vec<usize>, Failure> {
    let dims = field(obj, "dims")?.as_array().ok_or_else(|| Failure::input("dims must be an array"))?;
    if dims.is_empty() {
        return Err(Failure::input("dims must not be empty"));
    }
    dims.iter().map(|d| as_count(d, "each entry of dims")).collect()
}

fn parse_data(obj: &Map<String, Value>, expected: usize) -> Result<Vec<Complex64>, Failure> {
    let data = field(obj, "data")?.as_array().ok_or_else(|| Failure::input("data must be an array"))?;
    if data.len() != expected {
        return Err(Failure::input(format!("data has {} entries, expected {expected}", data.len())));
    }
    data.iter()
        .enumerate()
        .map(|(i, entry)| {
            let pair = entry.as_array().filter(|p| p.len() == 2);
            let parts = pair.and_then(|p| Some((p[0].as_f64()?, p[1].as_f64()?)));
            match parts {
                Some((re, im)) if re.is_finite() && im.is_finite() => Ok(Complex64::new(re, im)),
                Some(_) => Err(Failure::input(format!("data[{i}] is not finite"))),
                None => Err(Failure::input(format!("data[{i}] must be a pair [re, im]"))),
            }
        })
        .collect()
}

fn checked_total(dims: &[usize], max_dim: usize) -> Result<usize, Failure> {
    let total = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    match total {
        Some(n) if n <= max_dim => Ok(n),
        _ => Err(Failure::input(format!("total dimension of {dims:?} exceeds the cap {max_dim}"))),
    }
}

/// Parses a matrix object, or a result envelope whose payload is one.
pub fn parse_matrix(value: &Value, max_dim: usize) -> Result<(ComplexMatrix, SystemLayout), Failure> {
    let obj = value.as_object().ok_or_else(|| Failure::input("matrix JSON must be an object"))?;
    if let (Some(payload), None) = (obj.get("payload"), obj.get("data")) {
        return parse_matrix(payload, max_dim);
    }
    let dims = parse_dims(obj)?;
    let n = checked_total(&dims, max_dim)?;
    let rows = as_count(field(obj, "rows")?, "rows")?;
    let cols = as_count(field(obj, "cols")?, "cols")?;
    if rows != n || cols != n {
        return Err(Failure::input(format!("rows and cols must both equal the product of dims ({n})")));
    }
    let data = parse_data(obj, n * n)?;
    let m = ComplexMatrix::from_row_major(n, n, &data)?;
    Ok((m, SystemLayout::new(dims)?))
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("{} is not valid JSON: {e}", path.display())))
}

pub fn read_matrix(path: &Path, max_dim: usize) -> Result<(ComplexMatrix, SystemLayout), Failure> {
    parse_matrix(&read_json(path)?, max_dim)
}

/// Input state for `protocol`: `plus`, `basis:K`, `random:SEED` or a path to
/// `{"dims": [..], "data": [[re, im], ..]}`.
pub fn read_state(spec: &str, layout: &SystemLayout) -> Result<StateVector, Failure> {
    let n = layout.total();
    if spec == "plus" {
        return Ok(StateVector::plus(n));
    }
    if let Some(k) = spec.strip_prefix("basis:") {
        let k: usize = k.parse().map_err(|_| Failure::input(format!("bad basis index {k:?}")))?;
        return Ok(StateVector::basis(n, k)?);
    }
    if let Some(seed) = spec.strip_prefix("random:") {
        let seed: u64 = seed.parse().map_err(|_| Failure::input(format!("bad seed {seed:?}")))?;
        let mut r = rng::seeded(seed);
        let amplitudes: Vec<Complex64> = (0..n).map(|_| rng::complex_gaussian(&mut r)).collect();
        return Ok(StateVector::normalized(amplitudes)?);
    }
    let value = read_json(Path::new(spec))?;
    let obj = value.as_object().ok_or_else(|| Failure::input("state JSON must be an object"))?;
    let dims = parse_dims(obj)?;
    if dims != layout.dims() {
        return Err(Failure::input(format!("state dims {dims:?} do not match the gate's {:?}", layout.dims())));
    }
    Ok(StateVector::normalized(parse_data(obj, n)?)?)
}
