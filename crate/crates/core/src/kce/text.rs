/// Lowercased maximal runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Splits `text` at blank-line paragraph boundaries and packs paragraphs
/// greedily into chunks of at most `cap` characters. A paragraph longer
/// than `cap` is broken at whitespace, and a single overlong word is cut.
pub fn split_into_chunks(text: &str, cap: usize) -> Vec<String> {
    assert!(cap > 0, "chunk cap must be positive");
    let mut pieces: Vec<String> = Vec::new();
    for para in paragraphs(text) {
        if char_len(&para) <= cap {
            pieces.push(para);
        } else {
            pieces.extend(split_long(&para, cap));
        }
    }
    let mut chunks: Vec<String> = Vec::new();
    let mut cur = String::new();
    for p in pieces {
        if cur.is_empty() {
            cur = p;
        } else if char_len(&cur) + 2 + char_len(&p) <= cap {
            cur.push_str("\n\n");
            cur.push_str(&p);
        } else {
            chunks.push(std::mem::replace(&mut cur, p));
        }
    }
    if !cur.is_empty() {
        chunks.push(cur);
    }
    chunks
}

fn paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                out.push(cur.join("\n").trim().to_string());
                cur.clear();
            }
        } else {
            cur.push(line);
        }
    }
    if !cur.is_empty() {
        out.push(cur.join("\n").trim().to_string());
    }
    out.retain(|p| !p.is_empty());
    out
}

fn split_long(para: &str, cap: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for word in para.split_whitespace() {
        let mut word = word.to_string();
        while char_len(&word) > cap {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            let head: String = word.chars().take(cap).collect();
            word = word.chars().skip(cap).collect();
            out.push(head);
        }
        if word.is_empty() {
            continue;
        }
        if cur.is_empty() {
            cur = word;
        } else if char_len(&cur) + 1 + char_len(&word) <= cap {
            cur.push(' ');
            cur.push_str(&word);
        } else {
            out.push(std::mem::replace(&mut cur, word));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenizes() {
        assert_eq!(tokenize("For-loops: range(N) x2!"), ["for", "loops", "range", "n", "x2"]);
        assert!(tokenize("  ...  ").is_empty());
    }

    #[test]
    fn short_page_is_one_chunk() {
        let page = "First paragraph.\n\nSecond paragraph.\n\nThird paragraph.";
        let chunks = split_into_chunks(page, 1500);
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0], page);
    }

    #[test]
    fn long_page_respects_cap() {
        let para = "word ".repeat(200); // 1000 chars
        let page = format!("{para}\n\n{para}\n\n{para}\n\n{}", "x".repeat(1000));
        assert!(page.chars().count() >= 4000);
        let chunks = split_into_chunks(&page, 1500);
        assert!(chunks.len() >= 3);
        assert!(chunks.iter().all(|c| c.chars().count() <= 1500));
    }

    proptest! {
        #[test]
        fn chunks_bounded_and_lossless(words in proptest::collection::vec("[a-zé]{1,30}|\n\n", 0..300), cap in 5usize..200) {
            let text = words.join(" ");
            let chunks = split_into_chunks(&text, cap);
            prop_assert!(chunks.iter().all(|c| c.chars().count() <= cap && !c.is_empty()));
            let before: String = text.split_whitespace().collect();
            let after: String = chunks.iter().flat_map(|c| c.split_whitespace()).collect();
            prop_assert_eq!(before, after);
        }
    }
}
