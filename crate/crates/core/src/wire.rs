//! Canonical JSON for process boundaries: floats carry at most 9 significant
//! digits, object keys are sorted, page ids stay integers. The service, the
//! stdio protocol, and the CLI all emit through this writer so equal values
//! serialize to equal bytes.

use serde::Serialize;
use serde_json::Value;

/// Rounds to at most `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().expect("formatted float re-parses")
}

/// Recursively canonicalizes a JSON value: every non-integer number is
/// rounded to 9 significant digits. Key order is normalized by the
/// `serde_json` map representation.
pub fn canonical_value(value: &Value) -> Value {
    match value {
        Value::Number(n) => {
            if n.is_u64() || n.is_i64() {
                value.clone()
            } else {
                let rounded = round_sig(n.as_f64().expect("number is f64"), 9);
                serde_json::Number::from_f64(rounded).map(Value::Number).unwrap_or(Value::Null)
            }
        }
        Value::Array(items) => Value::Array(items.iter().map(canonical_value).collect()),
        Value::Object(map) => {
            Value::Object(map.iter().map(|(k, v)| (k.clone(), canonical_value(v))).collect())
        }
        _ => value.clone(),
    }
}

/// Serializes any value through the canonical form.
pub fn canonical_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let v = serde_json::to_value(value)?;
    serde_json::to_string(&canonical_value(&v))
}
