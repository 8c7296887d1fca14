//! Deterministic tokenizer used for message-size accounting.
//!
//! Text is split on whitespace; each whitespace-free run is then split so
//! that every maximal `[A-Za-z0-9_]` stretch is one token and every other
//! character is a token by itself.

fn is_word(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

pub fn tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for run in text.split_whitespace() {
        let mut start = None;
        for (i, c) in run.char_indices() {
            if is_word(c) {
                start.get_or_insert(i);
                continue;
            }
            if let Some(s) = start.take() {
                out.push(&run[s..i]);
            }
            out.push(&run[i..i + c.len_utf8()]);
        }
        if let Some(s) = start {
            out.push(&run[s..]);
        }
    }
    out
}

pub fn token_count(text: &str) -> usize {
    tokenize(text).len()
}
