//! Grid data model and case-file parsing.
//!
//! Buses are kept sorted by their original id; the position of a bus in
//! [`GridCase::buses`] is its dense 0-based index used by the solvers.

mod matpower;
mod native;

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use matpower::parse_matpower_case;
pub use native::{parse_native_case, write_native_case};

/// Quadratic generation cost `C(P) = a·P² + b·P + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostFunction {
    /// $/MW²h
    pub a: f64,
    /// $/MWh
    pub b: f64,
    /// $/h
    pub c: f64,
}

impl CostFunction {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn eval(&self, p: f64) -> f64 {
        (self.a * p + self.b) * p + self.c
    }

    pub fn marginal(&self, p: f64) -> f64 {
        2.0 * self.a * p + self.b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub id: usize,
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub cost: CostFunction,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: usize,
    pub p_load_nominal: f64,
    #[serde(default)]
    pub q_load_nominal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from_bus: usize,
    pub to_bus: usize,
    /// 1/x in per unit.
    pub susceptance: f64,
    /// MW; `None` means unlimited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCase {
    pub base_mva: f64,
    pub slack_bus: usize,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub lines: Vec<Line>,
}

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("missing required matrix or assignment `{0}`")]
    MissingMatrix(String),
    #[error("syntax error at line {line}, column {column}: unexpected token `{token}`")]
    Syntax {
        line: usize,
        column: usize,
        token: String,
    },
    #[error("matrix `{matrix}` row at line {line} has {found} columns, need at least {expected}")]
    ShortRow {
        matrix: String,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("unsupported cost model in gencost row {row}: model {model}, {terms} terms (only polynomial with 3 terms)")]
    UnsupportedCostModel { row: usize, model: f64, terms: f64 },
    #[error("gencost has {found} rows but gen has {expected}")]
    GencostRows { expected: usize, found: usize },
    #[error("branch row {row} has zero reactance")]
    ZeroReactance { row: usize },
    #[error("value at {path} is not a valid id: {value}")]
    BadId { path: String, value: f64 },
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("referential error: {0}")]
    Referential(String),
    #[error("case is invalid: {0:?}")]
    Invalid(Vec<Violation>),
}

/// Machine-readable violation codes produced by [`validate_case`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationCode {
    NonconvexCost,
    NegativeLinearCost,
    NegativeFixedCost,
    NegativeMinCapacity,
    CapacityOrder,
    NonfiniteValue,
    NonpositiveBaseMva,
    DuplicateBus,
    UnknownBus,
    UnknownSlackBus,
    SelfLoop,
    NonpositiveSusceptance,
    NegativeFlowLimit,
    Disconnected,
    NoActiveGenerator,
}

impl ViolationCode {
    /// Codes that make the case unusable as a graph (bus references broken).
    pub fn is_referential(self) -> bool {
        matches!(
            self,
            ViolationCode::DuplicateBus | ViolationCode::UnknownBus | ViolationCode::UnknownSlackBus
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

impl Violation {
    fn new(code: ViolationCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl GridCase {
    /// Sorts buses by id. Parsers always return normalized cases.
    pub fn normalize(&mut self) {
        self.buses.sort_by_key(|b| b.id);
    }

    /// Dense index of a bus id.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.binary_search_by_key(&id, |b| b.id).ok()
    }

    pub fn bus_index_map(&self) -> HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn bus_ids(&self) -> Vec<usize> {
        self.buses.iter().map(|b| b.id).collect()
    }

    pub fn nominal_loads(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.p_load_nominal).collect()
    }

    /// Indices (into `generators`) of in-service generators.
    pub fn in_service(&self) -> Vec<usize> {
        self.generators
            .iter()
            .enumerate()
            .filter(|(_, g)| g.in_service)
            .map(|(i, _)| i)
            .collect()
    }

    /// Converts a per-unit quantity to MW on this case's base.
    pub fn pu_to_mw(&self, pu: f64) -> f64 {
        pu * self.base_mva
    }

    /// SHA-256 of the compact native serialization.
    pub fn fingerprint(&self) -> String {
        let body = serde_json::to_vec(self).expect("GridCase serializes");
        hex::encode(Sha256::digest(&body))
    }

    /// Errors out if any violation is present.
    pub fn ensure_valid(&self) -> Result<(), CaseError> {
        let v = validate_case(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(CaseError::Invalid(v))
        }
    }
}

/// Checks every data-model invariant. An empty list means the case is valid.
pub fn validate_case(case: &GridCase) -> Vec<Violation> {
    use ViolationCode::*;
    let mut out = Vec::new();

    if !(case.base_mva.is_finite() && case.base_mva > 0.0) {
        out.push(Violation::new(
            NonpositiveBaseMva,
            format!("base_mva = {}", case.base_mva),
        ));
    }

    let mut ids = HashMap::new();
    for (i, b) in case.buses.iter().enumerate() {
        if ids.insert(b.id, i).is_some() {
            out.push(Violation::new(DuplicateBus, format!("bus {} appears twice", b.id)));
        }
        if !(b.p_load_nominal.is_finite() && b.q_load_nominal.is_finite()) {
            out.push(Violation::new(
                NonfiniteValue,
                format!("bus {} has a non-finite load", b.id),
            ));
        }
    }
    if !ids.contains_key(&case.slack_bus) {
        out.push(Violation::new(
            UnknownSlackBus,
            format!("slack bus {} does not exist", case.slack_bus),
        ));
    }

    for g in &case.generators {
        let c = &g.cost;
        if ![g.p_min, g.p_max, c.a, c.b, c.c].iter().all(|v| v.is_finite()) {
            out.push(Violation::new(
                NonfiniteValue,
                format!("generator {} has a non-finite field", g.id),
            ));
            continue;
        }
        if !ids.contains_key(&g.bus) {
            out.push(Violation::new(
                UnknownBus,
                format!("generator {} references absent bus {}", g.id, g.bus),
            ));
        }
        if c.a <= 0.0 {
            out.push(Violation::new(
                NonconvexCost,
                format!("generator {} has a = {}", g.id, c.a),
            ));
        }
        if c.b < 0.0 {
            out.push(Violation::new(
                NegativeLinearCost,
                format!("generator {} has b = {}", g.id, c.b),
            ));
        }
        if c.c < 0.0 {
            out.push(Violation::new(
                NegativeFixedCost,
                format!("generator {} has c = {}", g.id, c.c),
            ));
        }
        if g.p_min < 0.0 {
            out.push(Violation::new(
                NegativeMinCapacity,
                format!("generator {} has p_min = {}", g.id, g.p_min),
            ));
        }
        if g.p_min > g.p_max {
            out.push(Violation::new(
                CapacityOrder,
                format!("generator {} has p_min {} > p_max {}", g.id, g.p_min, g.p_max),
            ));
        }
    }
    if !case.generators.iter().any(|g| g.in_service) {
        out.push(Violation::new(NoActiveGenerator, "no in-service generator"));
    }

    let mut lines_ok = true;
    for (k, l) in case.lines.iter().enumerate() {
        for end in [l.from_bus, l.to_bus] {
            if !ids.contains_key(&end) {
                lines_ok = false;
                out.push(Violation::new(
                    UnknownBus,
                    format!("line {k} references absent bus {end}"),
                ));
            }
        }
        if l.from_bus == l.to_bus {
            out.push(Violation::new(SelfLoop, format!("line {k} connects bus {} to itself", l.from_bus)));
        }
        if !(l.susceptance.is_finite() && l.susceptance > 0.0) {
            out.push(Violation::new(
                NonpositiveSusceptance,
                format!("line {k} has susceptance {}", l.susceptance),
            ));
        }
        if let Some(f) = l.flow_limit {
            if !(f >= 0.0) {
                out.push(Violation::new(
                    NegativeFlowLimit,
                    format!("line {k} has flow limit {f}"),
                ));
            }
        }
    }

    if lines_ok && !case.buses.is_empty() && !is_connected(case, &ids) {
        out.push(Violation::new(Disconnected, "network is not connected"));
    }
    out
}

fn is_connected(case: &GridCase, ids: &HashMap<usize, usize>) -> bool {
    let n = case.buses.len();
    let mut adj = vec![Vec::new(); n];
    for l in &case.lines {
        let (f, t) = (ids[&l.from_bus], ids[&l.to_bus]);
        adj[f].push(t);
        adj[t].push(f);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == n
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_gen() -> GridCase {
        GridCase {
            base_mva: 1.0,
            slack_bus: 1,
            buses: vec![Bus {
                id: 1,
                p_load_nominal: 4.0,
                q_load_nominal: 0.0,
            }],
            generators: vec![
                Generator {
                    id: 1,
                    bus: 1,
                    p_min: 0.0,
                    p_max: 20.0,
                    cost: CostFunction::new(0.1, 5.0, 0.0),
                    in_service: true,
                },
                Generator {
                    id: 2,
                    bus: 1,
                    p_min: 0.0,
                    p_max: 20.0,
                    cost: CostFunction::new(0.2, 4.0, 0.0),
                    in_service: true,
                },
            ],
            lines: vec![],
        }
    }

    fn codes(case: &GridCase) -> Vec<ViolationCode> {
        validate_case(case).into_iter().map(|v| v.code).collect()
    }

    #[test]
    fn valid_case_has_no_violations() {
        assert!(validate_case(&two_gen()).is_empty());
    }

    #[test]
    fn zero_quadratic_coefficient_is_nonconvex() {
        let mut c = two_gen();
        c.generators[1].cost.a = 0.0;
        assert_eq!(codes(&c), vec![ViolationCode::NonconvexCost]);
    }

    #[test]
    fn inverted_capacity() {
        let mut c = two_gen();
        c.generators[0].p_min = 30.0;
        assert_eq!(codes(&c), vec![ViolationCode::CapacityOrder]);
    }

    #[test]
    fn disconnected_and_unknown_bus() {
        let mut c = two_gen();
        c.buses.push(Bus {
            id: 2,
            p_load_nominal: 1.0,
            q_load_nominal: 0.0,
        });
        assert_eq!(codes(&c), vec![ViolationCode::Disconnected]);
        c.generators[0].bus = 99;
        assert!(codes(&c).contains(&ViolationCode::UnknownBus));
    }

    #[test]
    fn all_offline_is_flagged() {
        let mut c = two_gen();
        for g in &mut c.generators {
            g.in_service = false;
        }
        assert_eq!(codes(&c), vec![ViolationCode::NoActiveGenerator]);
    }

    #[test]
    fn violation_codes_serialize_kebab() {
        let s = serde_json::to_string(&ViolationCode::NonconvexCost).unwrap();
        assert_eq!(s, "\"nonconvex-cost\"");
    }

    #[test]
    fn fingerprint_changes_with_content() {
        let a = two_gen();
        let mut b = two_gen();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.generators[0].cost.b = 5.5;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
