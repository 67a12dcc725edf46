//! Canonical JSON: lexicographically sorted keys, UTF-8, no insignificant
//! whitespace. Every document and wire message in the engine uses this form.

use serde::Serialize;
use serde_json::Value;

/// Serialize `value` in canonical form.
///
/// Goes through [`Value`], whose object map is ordered by key.
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String, serde_json::Error> {
    let v = serde_json::to_value(value)?;
    serde_json::to_string(&v)
}

/// Re-emit arbitrary JSON text in canonical form.
pub fn canonicalize(text: &str) -> Result<String, serde_json::Error> {
    let v: Value = serde_json::from_str(text)?;
    serde_json::to_string(&v)
}
