//! Small helpers for deterministic YAML text.
//!
//! Pipeline text and canonical catalog files are emitted by hand so that key
//! order and quoting never depend on a serializer's defaults.

use serde::Serialize;

const RESERVED: &[&str] = &[
    "true", "false", "yes", "no", "on", "off", "null", "y", "n", "~",
];

/// Emits `value` as a plain scalar when that is unambiguous, otherwise as a
/// double-quoted string.
pub fn scalar(value: &str) -> String {
    if is_plain_safe(value) {
        value.to_string()
    } else {
        quoted(value)
    }
}

/// Double-quoted YAML scalar with JSON-compatible escaping.
pub fn quoted(value: &str) -> String {
    let mut out = String::with_capacity(value.len() + 2);
    out.push('"');
    for ch in value.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\x{:02x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn is_plain_safe(value: &str) -> bool {
    let mut chars = value.chars();
    let Some(first) = chars.next() else {
        return false;
    };
    if !(first.is_ascii_alphabetic() || first == '_') {
        return false;
    }
    if !value
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '/'))
    {
        return false;
    }
    !RESERVED.contains(&value.to_ascii_lowercase().as_str())
}

/// Indents every non-empty line of `text` by `width` spaces. Empty lines stay
/// empty so the output carries no trailing whitespace.
pub fn indent(text: &str, width: usize) -> String {
    let pad = " ".repeat(width);
    let mut out = String::with_capacity(text.len() + width * 8);
    for line in text.lines() {
        if !line.is_empty() {
            out.push_str(&pad);
            out.push_str(line);
        }
        out.push('\n');
    }
    out
}

/// Canonical YAML serialization: every mapping is emitted with sorted keys,
/// sequences keep their order.
pub fn to_canonical_yaml<T: Serialize>(value: &T) -> Result<String, serde_yaml::Error> {
    // serde_json's default map is a BTreeMap, which sorts keys.
    let sorted = serde_json::to_value(value).map_err(<serde_yaml::Error as serde::ser::Error>::custom)?;
    serde_yaml::to_string(&sorted)
}
