//! Whitespace tokenizer with tweet-style normalization.

pub type TokenSequence = Vec<String>;

pub const USER_TOKEN: &str = "<user>";
pub const URL_TOKEN: &str = "<url>";

const PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '\'', '"', '(', ')', '#'];

pub fn is_punctuation(c: char) -> bool {
    PUNCTUATION.contains(&c)
}

/// Byte length of the user name at the start of `s`.
fn mention_len(s: &str) -> usize {
    s.char_indices()
        .find(|(_, c)| !(c.is_alphanumeric() || *c == '_'))
        .map_or(s.len(), |(i, _)| i)
}

/// Lowercases, splits on whitespace, splits punctuation into separate
/// tokens, and collapses @-mentions and URLs to `<user>` / `<url>`.
pub fn tokenize(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let chunk = chunk.to_lowercase();
        if chunk.starts_with("http://") || chunk.starts_with("https://") || chunk.starts_with("www.") {
            tokens.push(URL_TOKEN.to_string());
            continue;
        }
        let mut word = String::new();
        let mut chars = chunk.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            if c == '@' && word.is_empty() {
                let name_len = mention_len(&chunk[i + 1..]);
                if name_len > 0 {
                    tokens.push(USER_TOKEN.to_string());
                    while chars.peek().is_some_and(|&(j, _)| j <= i + name_len) {
                        chars.next();
                    }
                    continue;
                }
            }
            if is_punctuation(c) {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(c.to_string());
            } else {
                word.push(c);
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    tokens
}
