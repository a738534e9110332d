//! MATPOWER case-file subset: `baseMVA` plus the `bus`, `gen`, `branch` and
//! `gencost` matrices. Other assignments (cell arrays, strings, extra
//! matrices) are skipped.

use std::collections::HashMap;

use super::{Bus, CaseError, CostFunction, Generator, GridCase, Line};

struct Row {
    line: usize,
    values: Vec<f64>,
}

#[derive(Default)]
struct Document {
    scalars: HashMap<String, f64>,
    matrices: HashMap<String, Vec<Row>>,
}

enum State {
    Top,
    Matrix { name: String, rows: Vec<Row> },
    Cell,
}

/// Parses the MATPOWER subset into a normalized [`GridCase`].
///
/// Gencost rows must be polynomial (model 2) with three terms; `c2, c1, c0`
/// map to `a, b, c`. A zero `rateA` means the branch is unlimited.
pub fn parse_matpower_case(text: &str) -> Result<GridCase, CaseError> {
    let doc = scan(text)?;

    let base_mva = *doc
        .scalars
        .get("baseMVA")
        .ok_or_else(|| CaseError::MissingMatrix("baseMVA".into()))?;
    let bus_rows = matrix(&doc, "bus", 4)?;
    let gen_rows = matrix(&doc, "gen", 10)?;
    let branch_rows = matrix(&doc, "branch", 6)?;
    let cost_rows = matrix(&doc, "gencost", 4)?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut slack = None;
    for r in bus_rows {
        let id = as_id(r.values[0], "bus", r.line)?;
        if r.values[1] == 3.0 && slack.is_none() {
            slack = Some(id);
        }
        buses.push(Bus {
            id,
            p_load_nominal: r.values[2],
            q_load_nominal: r.values[3],
        });
    }

    if cost_rows.len() < gen_rows.len() {
        return Err(CaseError::GencostRows {
            expected: gen_rows.len(),
            found: cost_rows.len(),
        });
    }

    let mut generators = Vec::with_capacity(gen_rows.len());
    for (k, (g, c)) in gen_rows.iter().zip(cost_rows).enumerate() {
        let (model, terms) = (c.values[0], c.values[3]);
        if model != 2.0 || terms != 3.0 {
            return Err(CaseError::UnsupportedCostModel {
                row: k + 1,
                model,
                terms,
            });
        }
        if c.values.len() < 7 {
            return Err(CaseError::ShortRow {
                matrix: "gencost".into(),
                line: c.line,
                expected: 7,
                found: c.values.len(),
            });
        }
        generators.push(Generator {
            id: k + 1,
            bus: as_id(g.values[0], "gen", g.line)?,
            p_min: g.values[9],
            p_max: g.values[8],
            cost: CostFunction::new(c.values[4], c.values[5], c.values[6]),
            in_service: g.values[7] > 0.0,
        });
    }

    let mut lines = Vec::with_capacity(branch_rows.len());
    for (k, r) in branch_rows.iter().enumerate() {
        let x = r.values[3];
        if x == 0.0 {
            return Err(CaseError::ZeroReactance { row: k + 1 });
        }
        let rate_a = r.values[5];
        lines.push(Line {
            from_bus: as_id(r.values[0], "branch", r.line)?,
            to_bus: as_id(r.values[1], "branch", r.line)?,
            susceptance: 1.0 / x,
            flow_limit: (rate_a > 0.0).then_some(rate_a),
        });
    }

    let slack_bus = match slack {
        Some(s) => s,
        None => buses
            .iter()
            .map(|b| b.id)
            .min()
            .ok_or_else(|| CaseError::MissingMatrix("bus".into()))?,
    };

    let mut case = GridCase {
        base_mva,
        slack_bus,
        buses,
        generators,
        lines,
    };
    case.normalize();
    Ok(case)
}

fn matrix<'a>(doc: &'a Document, name: &str, min_cols: usize) -> Result<&'a [Row], CaseError> {
    let rows = doc
        .matrices
        .get(name)
        .ok_or_else(|| CaseError::MissingMatrix(name.into()))?;
    for r in rows {
        if r.values.len() < min_cols {
            return Err(CaseError::ShortRow {
                matrix: name.into(),
                line: r.line,
                expected: min_cols,
                found: r.values.len(),
            });
        }
    }
    Ok(rows)
}

fn as_id(v: f64, matrix: &str, line: usize) -> Result<usize, CaseError> {
    if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(CaseError::BadId {
            path: format!("{matrix} (line {line})"),
            value: v,
        })
    }
}

/// Strips a `%` comment, ignoring `%` inside single-quoted strings.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '\'' => quoted = !quoted,
            '%' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn scan(text: &str) -> Result<Document, CaseError> {
    let mut doc = Document::default();
    let mut state = State::Top;

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = strip_comment(raw);

        state = match state {
            State::Cell => {
                if line.contains('}') {
                    State::Top
                } else {
                    State::Cell
                }
            }
            State::Matrix { name, mut rows } => {
                if scan_matrix_text(line, 0, line_no, &mut rows)? {
                    doc.matrices.insert(name, rows);
                    State::Top
                } else {
                    State::Matrix { name, rows }
                }
            }
            State::Top => {
                let Some((lhs, rhs)) = line.split_once('=') else {
                    continue;
                };
                let Some(field) = lhs.trim().split_once('.').map(|(_, f)| f.trim()) else {
                    continue;
                };
                let rhs_trim = rhs.trim_start();
                let offset = line.len() - rhs_trim.len();
                if let Some(body) = rhs_trim.strip_prefix('[') {
                    let mut rows = Vec::new();
                    if scan_matrix_text(body, offset + 1, line_no, &mut rows)? {
                        doc.matrices.insert(field.to_string(), rows);
                        State::Top
                    } else {
                        State::Matrix {
                            name: field.to_string(),
                            rows,
                        }
                    }
                } else if rhs_trim.starts_with('{') {
                    if rhs_trim.contains('}') {
                        State::Top
                    } else {
                        State::Cell
                    }
                } else if rhs_trim.starts_with('\'') {
                    State::Top
                } else {
                    let token = rhs_trim.trim_end().trim_end_matches(';').trim();
                    let v = parse_number(token).ok_or_else(|| CaseError::Syntax {
                        line: line_no,
                        column: offset + 1,
                        token: token.to_string(),
                    })?;
                    doc.scalars.insert(field.to_string(), v);
                    State::Top
                }
            }
        };
    }

    if let State::Matrix { name, .. } = state {
        return Err(CaseError::Syntax {
            line: text.lines().count(),
            column: 1,
            token: format!("<eof inside `{name}`>"),
        });
    }
    Ok(doc)
}

/// Appends rows found in `body` (a line fragment inside `[ ... ]`).
/// Returns true once the closing `]` was consumed.
fn scan_matrix_text(
    body: &str,
    col_offset: usize,
    line_no: usize,
    rows: &mut Vec<Row>,
) -> Result<bool, CaseError> {
    let (content, closed) = match body.find(']') {
        Some(i) => (&body[..i], true),
        None => (body, false),
    };

    let mut current = Vec::new();
    let mut pos = 0;
    for segment in content.split_inclusive(';') {
        let ends_row = segment.ends_with(';');
        let seg = segment.trim_end_matches(';');
        let mut start = None;
        for (i, ch) in seg.char_indices().chain(std::iter::once((seg.len(), ' '))) {
            let sep = ch.is_whitespace() || ch == ',';
            match (sep, start) {
                (false, None) => start = Some(i),
                (true, Some(s)) => {
                    let tok = &seg[s..i];
                    let v = parse_number(tok).ok_or_else(|| CaseError::Syntax {
                        line: line_no,
                        column: col_offset + pos + s + 1,
                        token: tok.to_string(),
                    })?;
                    current.push(v);
                    start = None;
                }
                _ => {}
            }
        }
        if ends_row && !current.is_empty() {
            rows.push(Row {
                line: line_no,
                values: std::mem::take(&mut current),
            });
        }
        pos += segment.len();
    }
    // A newline also terminates a row inside brackets.
    if !current.is_empty() {
        rows.push(Row {
            line: line_no,
            values: current,
        });
    }
    Ok(closed)
}

fn parse_number(tok: &str) -> Option<f64> {
    match tok {
        "Inf" | "inf" => Some(f64::INFINITY),
        "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
        _ => tok.parse::<f64>().ok().filter(|v| !v.is_nan()),
    }
}
