/// Syntactic check for an absolute IRI: an RFC 3987 scheme, a colon, and a
/// non-empty remainder free of whitespace, controls and the characters IRIs
/// never allow unescaped. Percent escapes must be well formed.
pub fn is_absolute_iri(s: &str) -> bool {
    let Some((scheme, rest)) = s.split_once(':') else {
        return false;
    };
    let mut sc = scheme.chars();
    if !sc.next().is_some_and(|c| c.is_ascii_alphabetic()) {
        return false;
    }
    if !sc.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.')) {
        return false;
    }
    if rest.is_empty() {
        return false;
    }
    for c in rest.chars() {
        if c.is_whitespace() || c.is_control() || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '\\' | '^' | '`') {
            return false;
        }
    }
    let bytes = rest.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            if !(bytes.get(i + 1).is_some_and(u8::is_ascii_hexdigit) && bytes.get(i + 2).is_some_and(u8::is_ascii_hexdigit)) {
                return false;
            }
            i += 3;
        } else {
            i += 1;
        }
    }
    // hier-part "//" must introduce a non-empty authority
    if let Some(after) = rest.strip_prefix("//") {
        if after.is_empty() || after.starts_with('/') {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::is_absolute_iri;

    #[test]
    fn accepts() {
        for s in [
            "http://adlnet.gov/expapi/verbs/attempted",
            "https://example.org/a?b=c#d",
            "urn:uuid:6ba7b810-9dad-11d1-80b4-00c04fd430c8",
            "mailto:someone@example.org",
            "https://例え.jp/パス",
            "https://x.org/a%20b",
        ] {
            assert!(is_absolute_iri(s), "{s}");
        }
    }

    #[test]
    fn rejects() {
        for s in ["", "attempted", "/relative/path", "1http://x", "http:", "http://", "http:///x", "http://a b", "http://x/<y>", "http://x/%zz", "http://x/%4"] {
            assert!(!is_absolute_iri(s), "{s}");
        }
    }
}
