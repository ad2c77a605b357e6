//! JSON model and policy files.
//!
//! Model file:
//!
//! ```json
//! {
//!   "states": ["s0", "s1"],
//!   "actions": ["a0"],
//!   "rates": { "s0/a0": { "s1": 1.0 } },
//!   "costs": [ { "s0/a0": 1.0 } ],
//!   "bounds": [],
//!   "initial": { "s0": 1.0 }
//! }
//! ```
//!
//! Missing entries are zero. `costs` holds `N + 1` tables for `N` bounds.
//! Saving writes the canonical form: entries in model order, zeros omitted.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::model::{
    CtmdpModel, MarkovTimePolicy, ModelBuilder, ModelError, PiecewiseRow, PolicyError,
    StationaryPolicy, ValidationReport,
};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("invalid model:\n{0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

impl From<serde_json::Error> for FormatError {
    fn from(e: serde_json::Error) -> Self {
        FormatError::Json { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> FormatError {
    FormatError::Field { field: field.into(), message: message.into() }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    states: Vec<String>,
    actions: Vec<String>,
    #[serde(default)]
    rates: IndexMap<String, IndexMap<String, f64>>,
    costs: Vec<IndexMap<String, f64>>,
    #[serde(default)]
    bounds: Vec<f64>,
    initial: IndexMap<String, f64>,
}

fn lookup(names: &[String], name: &str, field: &str) -> Result<usize, FormatError> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| field_err(field, format!("unknown name `{name}`")))
}

fn pair_key(key: &str, m: &ModelFile, field: &str) -> Result<(usize, usize), FormatError> {
    let (s, a) = key
        .split_once('/')
        .ok_or_else(|| field_err(field, format!("key `{key}` is not of the form state/action")))?;
    Ok((lookup(&m.states, s, field)?, lookup(&m.actions, a, field)?))
}

fn check_names(names: &[String], field: &str) -> Result<(), FormatError> {
    if names.is_empty() {
        return Err(field_err(field, format!("{field} must be nonempty")));
    }
    for (k, n) in names.iter().enumerate() {
        if n.is_empty() || n.contains('/') {
            return Err(field_err(field, format!("name `{n}` must be nonempty and free of '/'")));
        }
        if names[..k].contains(n) {
            return Err(field_err(field, format!("duplicate name `{n}`")));
        }
    }
    Ok(())
}

pub fn parse_model(text: &str) -> Result<CtmdpModel, FormatError> {
    let file: ModelFile = serde_json::from_str(text)?;
    check_names(&file.states, "states")?;
    check_names(&file.actions, "actions")?;
    if file.costs.len() != file.bounds.len() + 1 {
        return Err(field_err(
            "costs",
            format!("expected {} cost tables for {} bounds, got {}", file.bounds.len() + 1, file.bounds.len(), file.costs.len()),
        ));
    }
    let mut b = ModelBuilder::new(file.states.clone(), file.actions.clone(), file.bounds.len());
    for (key, row) in &file.rates {
        let (x, a) = pair_key(key, &file, "rates")?;
        for (target, &r) in row {
            let y = lookup(&file.states, target, "rates")?;
            b = b.rate(x, a, y, r);
        }
    }
    for (i, table) in file.costs.iter().enumerate() {
        let field = format!("costs[{i}]");
        for (key, &c) in table {
            let (x, a) = pair_key(key, &file, &field)?;
            b = b.cost(i, x, a, c);
        }
    }
    for (j, &d) in file.bounds.iter().enumerate() {
        b = b.bound(j + 1, d);
    }
    for (s, &g) in &file.initial {
        let x = lookup(&file.states, s, "initial")?;
        b = b.initial(x, g);
    }
    b.build().map_err(|e| match e {
        ModelError::Invalid(r) => FormatError::Invalid(r),
        ModelError::Structure(s) => field_err("model", s),
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CtmdpModel, FormatError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| FormatError::Io { path: path.display().to_string(), source })?;
    parse_model(&text)
}

fn model_file(m: &CtmdpModel) -> ModelFile {
    let (ns, na) = (m.n_states(), m.n_actions());
    let key = |x: usize, a: usize| format!("{}/{}", m.states()[x], m.actions()[a]);
    let mut rates = IndexMap::new();
    for x in 0..ns {
        for a in 0..na {
            let row: IndexMap<String, f64> = (0..ns)
                .filter(|&y| m.rate(x, a, y) != 0.0)
                .map(|y| (m.states()[y].clone(), m.rate(x, a, y)))
                .collect();
            if !row.is_empty() {
                rates.insert(key(x, a), row);
            }
        }
    }
    let costs = (0..m.n_costs())
        .map(|i| {
            (0..ns)
                .flat_map(|x| (0..na).map(move |a| (x, a)))
                .filter(|&(x, a)| m.cost(i, x, a) != 0.0)
                .map(|(x, a)| (key(x, a), m.cost(i, x, a)))
                .collect()
        })
        .collect();
    let initial = (0..ns)
        .filter(|&x| m.initial()[x] != 0.0)
        .map(|x| (m.states()[x].clone(), m.initial()[x]))
        .collect();
    ModelFile {
        states: m.states().to_vec(),
        actions: m.actions().to_vec(),
        rates,
        costs,
        bounds: m.bounds().to_vec(),
        initial,
    }
}

/// Canonical JSON text for a model.
pub fn model_to_string(m: &CtmdpModel) -> String {
    serde_json::to_string_pretty(&model_file(m)).expect("model serialization cannot fail") + "\n"
}

pub fn save_model(m: &CtmdpModel, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    fs::write(path, model_to_string(m))
        .map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

/// Extended real as JSON: numbers, with `+∞` written as `"inf"`.
pub fn ext(v: f64) -> Value {
    if v == f64::INFINITY {
        Value::String("inf".into())
    } else {
        // Adding zero maps -0.0 to 0.0.
        json!(v + 0.0)
    }
}

/// A policy as `{state: {action: probability}}`, zeros omitted.
pub fn policy_to_json(m: &CtmdpModel, p: &StationaryPolicy) -> Value {
    let mut out = serde_json::Map::new();
    for x in 0..p.n_states() {
        let row: serde_json::Map<String, Value> = (0..p.n_actions())
            .filter(|&a| p.prob(x, a) != 0.0)
            .map(|a| (m.actions()[a].clone(), json!(p.prob(x, a))))
            .collect();
        out.insert(m.states()[x].clone(), Value::Object(row));
    }
    Value::Object(out)
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PolicyRowFile {
    Schedule { breakpoints: Vec<f64>, rows: Vec<IndexMap<String, f64>> },
    Constant(IndexMap<String, f64>),
}

/// A policy file: stationary if every row is a plain action map.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyFile {
    Stationary(StationaryPolicy),
    Markov(MarkovTimePolicy),
}

fn dense_row(m: &CtmdpModel, row: &IndexMap<String, f64>) -> Result<Vec<f64>, FormatError> {
    let mut out = vec![0.0; m.n_actions()];
    for (name, &p) in row {
        let a = m.action_index(name).ok_or_else(|| PolicyError::UnknownAction(name.clone()))?;
        out[a] = p;
    }
    Ok(out)
}

/// Parses a policy file against a model. Every state needs a row.
pub fn parse_policy(m: &CtmdpModel, text: &str) -> Result<PolicyFile, FormatError> {
    let raw: IndexMap<String, PolicyRowFile> = serde_json::from_str(text)?;
    for name in raw.keys() {
        if m.state_index(name).is_none() {
            return Err(PolicyError::UnknownState(name.clone()).into());
        }
    }
    let mut pieces = Vec::with_capacity(m.n_states());
    let mut stationary = true;
    for (x, name) in m.states().iter().enumerate() {
        let row = raw
            .get(name)
            .ok_or_else(|| field_err("policy", format!("missing row for state `{name}`")))?;
        match row {
            PolicyRowFile::Constant(r) => pieces.push(PiecewiseRow::new(x, vec![], vec![dense_row(m, r)?])?),
            PolicyRowFile::Schedule { breakpoints, rows } => {
                stationary &= breakpoints.is_empty();
                let rows = rows.iter().map(|r| dense_row(m, r)).collect::<Result<Vec<_>, _>>()?;
                pieces.push(PiecewiseRow::new(x, breakpoints.clone(), rows)?);
            }
        }
    }
    if stationary {
        let rows = pieces.iter().map(|p| p.rows()[0].clone()).collect();
        Ok(PolicyFile::Stationary(StationaryPolicy::new(rows)?))
    } else {
        Ok(PolicyFile::Markov(MarkovTimePolicy::Schedule(pieces)))
    }
}

pub fn load_policy(m: &CtmdpModel, path: impl AsRef<Path>) -> Result<PolicyFile, FormatError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| FormatError::Io { path: path.display().to_string(), source })?;
    parse_policy(m, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn m3_round_trip() {
        let m = catalog::m3();
        let text = model_to_string(&m);
        let back = parse_model(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_string(&back), text);
    }

    #[test]
    fn empty_states_rejected() {
        let err = parse_model(r#"{"states": [], "actions": ["a"], "costs": [{}], "initial": {}}"#).unwrap_err();
        assert!(err.to_string().contains("states must be nonempty"), "{err}");
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_model("{\n  \"states\": [\"x\",\n}").unwrap_err();
        match err {
            FormatError::Json { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn semantic_violation_attached() {
        let err = parse_model(
            r#"{"states": ["x","y"], "actions": ["a"], "rates": {"x/a": {"y": -1}}, "costs": [{}], "initial": {"x": 1}}"#,
        )
        .unwrap_err();
        match err {
            FormatError::Invalid(r) => assert_eq!(r.violations.len(), 1),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_names_rejected() {
        let err = parse_model(r#"{"states": ["x"], "actions": ["a"], "costs": [{"x/b": 1}], "initial": {"x": 1}}"#)
            .unwrap_err();
        assert!(matches!(err, FormatError::Field { .. }));
        let err = parse_model(r#"{"states": ["x"], "actions": ["a"], "costs": [{}, {}], "initial": {"x": 1}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("cost tables"));
    }

    #[test]
    fn policy_files() {
        let m = catalog::m3();
        let p = parse_policy(&m, r#"{"s0": {"a0": 0.25, "a1": 0.75}, "s1": {"a1": 1}, "s2": {"a0": 1}}"#).unwrap();
        let PolicyFile::Stationary(p) = p else { panic!() };
        assert_eq!(p.row(0), &[0.25, 0.75]);
        let q = parse_policy(
            &m,
            r#"{"s0": {"breakpoints": [1.0], "rows": [{"a0": 1}, {"a1": 1}]}, "s1": {"a1": 1}, "s2": {"a0": 1}}"#,
        )
        .unwrap();
        assert!(matches!(q, PolicyFile::Markov(_)));
        assert!(parse_policy(&m, r#"{"s0": {"a9": 1}, "s1": {"a1": 1}, "s2": {"a0": 1}}"#).is_err());
        assert!(parse_policy(&m, r#"{"s0": {"a0": 1}}"#).is_err());
        let back = parse_policy(&m, &policy_to_json(&m, &p).to_string()).unwrap();
        assert_eq!(back, PolicyFile::Stationary(p));
    }
}
