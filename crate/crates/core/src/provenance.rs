//! Number rendering and the numeral audit.
//!
//! Every number shown to a student is rendered from a value held in the
//! structured layer of a report or answer. The audit extracts numerals from
//! text and checks each against the renderings of those values.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;

/// Fixed-point rendering with trailing zeros (and a bare point) removed.
pub fn num(v: f64, max_dp: usize) -> String {
    let s = format!("{v:.max_dp$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        s
    };
    if s == "-0" {
        "0".to_owned()
    } else {
        s
    }
}

/// Percentage with up to two decimals: 0.9375 -> "93.75%".
pub fn pct(v: f64) -> String {
    format!("{}%", num(v * 100.0, 2))
}

/// Whole percentage: 0.2464 -> "25%".
pub fn pct0(v: f64) -> String {
    format!("{}%", num(v * 100.0, 0))
}

/// Every string a value may legitimately appear as: the value at 0-4
/// decimals and its percentage at 0-2 decimals, padded and trimmed, signs
/// dropped.
pub fn renderings(v: f64) -> Vec<String> {
    if !v.is_finite() {
        return Vec::new();
    }
    let v = v.abs();
    let mut out = Vec::with_capacity(14);
    for dp in 0..=4 {
        out.push(format!("{v:.dp$}"));
        out.push(num(v, dp));
    }
    let p = v * 100.0;
    for dp in 0..=2 {
        out.push(format!("{p:.dp$}"));
        out.push(num(p, dp));
    }
    out
}

/// Allowed-numeral set for a collection of values.
pub fn allowed_numerals(values: impl IntoIterator<Item = f64>) -> BTreeSet<String> {
    values.into_iter().flat_map(renderings).collect()
}

fn numeral_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+(?:\.\d+)?").expect("valid regex"))
}

fn identifier_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Tokens such as N1114, S6 or q-0042 are names, not quantities.
    RE.get_or_init(|| Regex::new(r"\b[A-Za-z][A-Za-z_\-]*\d[A-Za-z0-9_\-]*\b").expect("valid regex"))
}

/// Numerals in `text` after removing known names and identifier tokens.
pub fn extract_numerals(text: &str, names: &[String]) -> Vec<String> {
    let mut cleaned = text.to_owned();
    let mut names: Vec<&String> = names.iter().filter(|n| !n.is_empty()).collect();
    names.sort_by_key(|n| std::cmp::Reverse(n.len()));
    for n in names {
        cleaned = cleaned.replace(n.as_str(), " ");
    }
    let cleaned = identifier_re().replace_all(&cleaned, " ");
    numeral_re()
        .find_iter(&cleaned)
        .map(|m| m.as_str().to_owned())
        .collect()
}

/// Numerals in `text` that no allowed value renders to.
pub fn unsupported_numerals(text: &str, allowed: &BTreeSet<String>, names: &[String]) -> Vec<String> {
    extract_numerals(text, names)
        .into_iter()
        .filter(|n| !allowed.contains(n))
        .collect()
}

/// Every JSON number inside `value`.
pub fn collect_numbers(value: &serde_json::Value, out: &mut Vec<f64>) {
    match value {
        serde_json::Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                out.push(f);
            }
        }
        serde_json::Value::Array(items) => items.iter().for_each(|v| collect_numbers(v, out)),
        serde_json::Value::Object(map) => map.values().for_each(|v| collect_numbers(v, out)),
        _ => {}
    }
}
