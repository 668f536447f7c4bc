//! Canonical answer form shared by the answer reward, the distillation
//! exact-match check, and strict-accuracy evaluation.

/// Normalize an answer string for comparison: lowercase, collapse whitespace
/// runs to single spaces, drop outer whitespace, strip trailing `.`/`,`.
pub fn normalize_answer(s: &str) -> String {
    let lower = s.to_lowercase();
    let collapsed = lower.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.trim_end_matches(['.', ',']).trim_end().to_string()
}

/// Whether two answers are equal after normalization.
pub fn answers_match(a: &str, b: &str) -> bool {
    normalize_answer(a) == normalize_answer(b)
}
