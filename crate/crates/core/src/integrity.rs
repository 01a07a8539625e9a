//! Digest sealing of generated pipeline text.
//!
//! A sealed file starts with
//!
//! ```text
//! # pipeforge-digest: v1; sha256=<64 lowercase hex>
//! ```
//!
//! followed by the canonical body. The digest covers the canonical body only
//! (LF line endings, exactly one trailing newline, header removed), so a
//! CRLF checkout or a re-seal does not change it. The header is a YAML
//! comment and the sealed file stays valid engine input.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const HEADER_PREFIX: &str = "# pipeforge-digest: v1; sha256=";
const HEADER_MARKER: &str = "# pipeforge-digest:";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Returns the digest carried by `line` when it is a well-formed header.
fn header_digest(line: &str) -> Option<&str> {
    let hex = line.strip_prefix(HEADER_PREFIX)?;
    let well_formed = hex.len() == 64
        && hex
            .bytes()
            .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
    well_formed.then_some(hex)
}

fn split_first_line(text: &str) -> (&str, &str) {
    match text.split_once('\n') {
        Some((first, rest)) => (first, rest),
        None => (text, ""),
    }
}

/// CRLF → LF. Runs like `\r\r\n` collapse fully so the result never
/// contains a CRLF pair.
fn normalize_newlines(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_cr = 0;
    for c in text.chars() {
        match c {
            '\r' => pending_cr += 1,
            '\n' => {
                pending_cr = 0;
                out.push('\n');
            }
            _ => {
                out.extend(std::iter::repeat_n('\r', pending_cr));
                pending_cr = 0;
                out.push(c);
            }
        }
    }
    out.extend(std::iter::repeat_n('\r', pending_cr));
    out
}

/// Canonical body bytes: CRLF → LF, digest header dropped, exactly one
/// trailing newline. Trailing carriage returns are dropped with the
/// trailing newlines, which keeps the function idempotent.
pub fn canonicalize(text: &str) -> String {
    let normalized = normalize_newlines(text);
    let (first, rest) = split_first_line(&normalized);
    let body = if header_digest(first).is_some() {
        rest
    } else {
        normalized.as_str()
    };
    let mut out = body.trim_end_matches(['\n', '\r']).to_string();
    out.push('\n');
    out
}

pub fn header_line(digest: &str) -> String {
    format!("{HEADER_PREFIX}{digest}")
}

/// Prepends the digest header to the canonical form of `body`. Sealing an
/// already sealed text yields the same output.
pub fn seal(body: &str) -> String {
    let canonical = canonicalize(body);
    let digest = sha256_hex(canonical.as_bytes());
    format!("{}\n{canonical}", header_line(&digest))
}

/// Digest recorded in a sealed text's header, if any.
pub fn sealed_digest(text: &str) -> Option<String> {
    let normalized = normalize_newlines(text);
    header_digest(split_first_line(&normalized).0).map(str::to_owned)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictKind {
    SealedValid,
    Tampered,
    Unsealed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealVerdict {
    pub kind: VerdictKind,
    pub detail: String,
}

impl SealVerdict {
    pub fn is_valid(&self) -> bool {
        self.kind == VerdictKind::SealedValid
    }
}

impl fmt::Display for SealVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            VerdictKind::SealedValid => "sealed-valid",
            VerdictKind::Tampered => "tampered",
            VerdictKind::Unsealed => "unsealed",
        };
        write!(f, "{kind}: {}", self.detail)
    }
}

pub fn verify(text: &str) -> SealVerdict {
    let normalized = normalize_newlines(text);
    let (first, _) = split_first_line(&normalized);
    if !first.starts_with(HEADER_MARKER) {
        return SealVerdict {
            kind: VerdictKind::Unsealed,
            detail: "no digest header on the first line".into(),
        };
    }
    let Some(recorded) = header_digest(first) else {
        return SealVerdict {
            kind: VerdictKind::Tampered,
            detail: format!("malformed digest header `{first}`"),
        };
    };
    let computed = sha256_hex(canonicalize(&normalized).as_bytes());
    if computed == recorded {
        SealVerdict {
            kind: VerdictKind::SealedValid,
            detail: format!("sha256={computed}"),
        }
    } else {
        SealVerdict {
            kind: VerdictKind::Tampered,
            detail: format!("header digest {recorded} does not match computed digest {computed}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // `printf 'stages: []\n' | sha256sum`
    const STAGES_EMPTY_SHA256: &str =
        "28c2d1809e6186bffb0739ef1cceda6761f06bab8aa8280b65fad1765f1aa4d6";

    #[test]
    fn canonicalize_examples() {
        assert_eq!(canonicalize("a: 1\r\n"), "a: 1\n");
        assert_eq!(canonicalize(""), "\n");
        assert_eq!(canonicalize("a: 1\n\n\n"), "a: 1\n");
        assert_eq!(canonicalize(&seal("a: 1\n")), "a: 1\n");
        assert_eq!(canonicalize("a\r\r\nb\r"), "a\nb\n");
        assert_eq!(canonicalize("a\rb\n"), "a\rb\n");
    }

    #[test]
    fn stray_carriage_returns_round_trip() {
        for body in ["x\r", "x\r\r\n", "\r", "a\r\nb\r\r", "x\ry"] {
            let sealed = seal(body);
            assert!(verify(&sealed).is_valid(), "{body:?}");
            assert_eq!(canonicalize(&canonicalize(body)), canonicalize(body));
        }
    }

    #[test]
    fn seal_uses_sha256_of_canonical_body() {
        let sealed = seal("stages: []\n");
        assert_eq!(sealed, format!("{HEADER_PREFIX}{STAGES_EMPTY_SHA256}\nstages: []\n"));
        assert_eq!(seal(&sealed), sealed);
        assert_eq!(seal("a: 1\r\nb: 2\r\n"), seal("a: 1\nb: 2\n"));
    }

    #[test]
    fn verify_verdicts() {
        let sealed = seal("stages: []\n");
        assert!(verify(&sealed).is_valid());
        assert!(verify(&sealed.replace('\n', "\r\n")).is_valid());

        let edited = sealed.replace("[]", "[build]");
        let verdict = verify(&edited);
        assert_eq!(verdict.kind, VerdictKind::Tampered);
        assert!(verdict.detail.contains(STAGES_EMPTY_SHA256));

        assert_eq!(verify("stages: []\n").kind, VerdictKind::Unsealed);
        assert_eq!(verify("").kind, VerdictKind::Unsealed);

        let truncated = sealed.replacen(&STAGES_EMPTY_SHA256[..4], "", 1);
        assert_eq!(verify(&truncated).kind, VerdictKind::Tampered);
        let upper = sealed.replace(STAGES_EMPTY_SHA256, &STAGES_EMPTY_SHA256.to_uppercase());
        assert_eq!(verify(&upper).kind, VerdictKind::Tampered);
    }

    #[test]
    fn sealed_digest_reads_header() {
        let sealed = seal("x: 1\n");
        assert_eq!(
            sealed_digest(&sealed).unwrap(),
            sha256_hex(canonicalize("x: 1\n").as_bytes())
        );
        assert!(sealed_digest("x: 1\n").is_none());
    }
}
