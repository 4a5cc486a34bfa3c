//! Text normalisation and the shared word tokenizer.
//!
//! Every component (indexing, mining, corruption, present/absent testing)
//! goes through these two functions so that token boundaries agree.

use crate::DIGIT_TOKEN;

/// Lowercases `text` and replaces every maximal run of ASCII digits with
/// [`DIGIT_TOKEN`]. All other characters are kept.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_digits = false;
    for c in text.chars() {
        if c.is_ascii_digit() {
            if !in_digits {
                out.push_str(DIGIT_TOKEN);
                in_digits = true;
            }
            continue;
        }
        in_digits = false;
        out.extend(c.to_lowercase());
    }
    out
}

/// Splits normalised text into word tokens.
///
/// Whitespace separates tokens. Any character that is neither alphanumeric
/// nor whitespace becomes a token of its own, except a hyphen with an
/// alphanumeric character on both sides (`self-stabilizing` stays whole).
/// The literal [`DIGIT_TOKEN`] is always emitted as one atomic token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let mut rest = text;

    fn flush(word: &mut String, tokens: &mut Vec<String>) {
        if !word.is_empty() {
            tokens.push(std::mem::take(word));
        }
    }

    while let Some(c) = rest.chars().next() {
        if rest.starts_with(DIGIT_TOKEN) {
            flush(&mut word, &mut tokens);
            tokens.push(DIGIT_TOKEN.to_string());
            rest = &rest[DIGIT_TOKEN.len()..];
            continue;
        }
        let next = rest[c.len_utf8()..].chars().next();
        if c.is_whitespace() {
            flush(&mut word, &mut tokens);
        } else if c.is_alphanumeric()
            || (c == '-'
                && word.chars().last().is_some_and(char::is_alphanumeric)
                && next.is_some_and(char::is_alphanumeric))
        {
            word.push(c);
        } else {
            flush(&mut word, &mut tokens);
            tokens.push(c.to_string());
        }
        rest = &rest[c.len_utf8()..];
    }
    flush(&mut word, &mut tokens);
    tokens
}

/// True when the token carries no alphanumeric character.
pub fn is_punctuation(token: &str) -> bool {
    !token.chars().any(char::is_alphanumeric)
}
