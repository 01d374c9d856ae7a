use super::types::CompareMode;

fn is_ws(b: u8) -> bool {
    b.is_ascii_whitespace()
}

fn trim_end(bytes: &[u8]) -> &[u8] {
    let end = bytes.iter().rposition(|b| !is_ws(*b)).map_or(0, |i| i + 1);
    &bytes[..end]
}

/// Lines with trailing whitespace removed and trailing blank lines dropped.
fn normalized_lines(bytes: &[u8]) -> Vec<&[u8]> {
    let mut lines: Vec<&[u8]> = bytes.split(|b| *b == b'\n').map(trim_end).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines
}

pub fn compare_output(actual: &[u8], expected: &[u8], mode: CompareMode) -> bool {
    match mode {
        CompareMode::Exact => actual == expected,
        CompareMode::TrimTrailing => trim_end(actual) == trim_end(expected),
        CompareMode::TrimLines => normalized_lines(actual) == normalized_lines(expected),
    }
}

const EXCERPT_CHARS: usize = 60;

fn excerpt(line: Option<&[u8]>) -> String {
    match line {
        None => "<end of output>".to_string(),
        Some(l) => {
            let s = String::from_utf8_lossy(l);
            let mut out: String = s.chars().take(EXCERPT_CHARS).collect();
            if s.chars().count() > EXCERPT_CHARS {
                out.push('…');
            }
            format!("{out:?}")
        }
    }
}

/// First mismatching line (1-based) with short excerpts of both sides, or
/// `None` when the outputs match under `mode`.
pub fn diff_hint(actual: &[u8], expected: &[u8], mode: CompareMode) -> Option<String> {
    if compare_output(actual, expected, mode) {
        return None;
    }
    let (a, e): (Vec<&[u8]>, Vec<&[u8]>) = match mode {
        CompareMode::TrimLines => (normalized_lines(actual), normalized_lines(expected)),
        CompareMode::TrimTrailing => (
            trim_end(actual).split(|b| *b == b'\n').collect(),
            trim_end(expected).split(|b| *b == b'\n').collect(),
        ),
        CompareMode::Exact => (actual.split(|b| *b == b'\n').collect(), expected.split(|b| *b == b'\n').collect()),
    };
    let n = a.len().max(e.len());
    for i in 0..n {
        let (al, el) = (a.get(i).copied(), e.get(i).copied());
        if al != el {
            return Some(format!("line {}: expected {}, got {}", i + 1, excerpt(el), excerpt(al)));
        }
    }
    // Exact mode can differ only in bytes the line split hides (e.g. '\r').
    Some("output differs in whitespace or line endings".to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use CompareMode::*;

    #[test]
    fn documented_examples() {
        assert!(compare_output(b"hi\n", b"hi\n", Exact));
        assert!(compare_output(b"hi \n\n", b"hi", TrimLines));
        assert!(!compare_output(b"hi\n", b"hi", Exact));
    }

    #[test]
    fn trim_trailing_only_strips_the_end() {
        assert!(compare_output(b"a b\n\n  ", b"a b", TrimTrailing));
        assert!(!compare_output(b"a \nb", b"a\nb", TrimTrailing));
        assert!(compare_output(b"a \nb", b"a\nb", TrimLines));
    }

    #[test]
    fn leading_whitespace_is_significant() {
        assert!(!compare_output(b" hi", b"hi", TrimLines));
        assert!(!compare_output(b"\nhi", b"hi", TrimLines));
    }

    #[test]
    fn empty_outputs() {
        assert!(compare_output(b"", b"", Exact));
        assert!(compare_output(b"\n\n", b"", TrimLines));
        assert!(!compare_output(b"", b"x", TrimLines));
    }

    #[test]
    fn hint_points_at_first_mismatch() {
        let h = diff_hint(b"1\n2\n4\n", b"1\n2\n3\n", TrimLines).unwrap();
        assert!(h.starts_with("line 3:"), "{h}");
        assert!(h.contains("\"3\"") && h.contains("\"4\""));
        let h = diff_hint(b"1\n", b"1\n2\n", TrimLines).unwrap();
        assert!(h.contains("<end of output>"));
        assert_eq!(diff_hint(b"x\n", b"x", TrimLines), None);
    }
}
