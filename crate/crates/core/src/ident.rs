//! Identifier rules shared by every textual format.
//!
//! Identifiers are ASCII letters, digits, `_` and `-`. Hyphens are dropped
//! from the canonical form (`UVF-Manager` becomes `UVFManager`); callers keep
//! the original spelling as a display label when it differs.

pub fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

/// Canonical identifier check: no hyphens, non-empty, does not start with a digit.
pub fn is_canonical(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Normalizes a raw identifier. Returns the canonical name and, if the raw
/// spelling differs, the raw spelling as display label.
pub fn normalize(raw: &str) -> Option<(String, Option<String>)> {
    if raw.is_empty() || !raw.chars().all(is_ident_char) {
        return None;
    }
    let canonical: String = raw.chars().filter(|&c| c != '-').collect();
    if !is_canonical(&canonical) {
        return None;
    }
    let display = (canonical != raw).then(|| raw.to_string());
    Some((canonical, display))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hyphenated_names_keep_display_label() {
        assert_eq!(normalize("UVF-Manager"), Some(("UVFManager".to_string(), Some("UVF-Manager".to_string()))));
        assert_eq!(normalize("UV"), Some(("UV".to_string(), None)));
    }

    #[test]
    fn rejects_bad_identifiers() {
        assert_eq!(normalize(""), None);
        assert_eq!(normalize("9lives"), None);
        assert_eq!(normalize("a b"), None);
        assert_eq!(normalize("---"), None);
    }
}
