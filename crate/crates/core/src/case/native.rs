//! Native JSON case documents.

use super::{validate_case, CaseError, GridCase};

/// Parses a native case document. Schema errors carry the JSON path of the
/// offending field; broken bus references are rejected here, while other
/// invariant violations are left to [`validate_case`](super::validate_case).
pub fn parse_native_case(text: &str) -> Result<GridCase, CaseError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut case: GridCase = serde_path_to_error::deserialize(de).map_err(|e| CaseError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    case.normalize();

    let referential: Vec<String> = validate_case(&case)
        .into_iter()
        .filter(|v| v.code.is_referential())
        .map(|v| v.message)
        .collect();
    if !referential.is_empty() {
        return Err(CaseError::Referential(referential.join("; ")));
    }
    Ok(case)
}

pub fn write_native_case(case: &GridCase) -> String {
    let mut s = serde_json::to_string_pretty(case).expect("GridCase serializes");
    s.push('\n');
    s
}
