//! mteval-v13a tokenization, as used by the standard BLEU signature.

use alloc::string::String;
use alloc::vec::Vec;

/// Whitespace as understood by Python's `str.split()`, which the reference
/// tooling uses to collapse spaces. This adds the ASCII information
/// separators (U+001C..U+001F) to Unicode `White_Space`.
pub(crate) fn is_split_space(c: char) -> bool {
    c.is_whitespace() || ('\u{1c}'..='\u{1f}').contains(&c)
}

pub(crate) fn split_ws(text: &str) -> impl Iterator<Item = &str> {
    text.split(is_split_space).filter(|t| !t.is_empty())
}

/// Symbols padded with spaces unconditionally: `{|}~ [\]^_` `` ` `` and
/// space..`&`, `(`..`+`, `:`..`@`, `/`.
fn is_symbol(c: char) -> bool {
    matches!(c, '{'..='~' | '['..='`' | ' '..='&' | '('..='+' | ':'..='@' | '/')
}

fn is_digit(c: char) -> bool {
    c.is_ascii_digit()
}

fn is_period_or_comma(c: char) -> bool {
    c == '.' || c == ','
}

/// Leftmost, non-overlapping substitution of a two-character pattern
/// `(first)(second)` by `lead first mid second tail`.
fn sub_pair(
    chars: &[char],
    first: impl Fn(char) -> bool,
    second: impl Fn(char) -> bool,
    lead: &str,
    mid: &str,
    tail: &str,
) -> Vec<char> {
    let mut out = Vec::with_capacity(chars.len() + chars.len() / 2);
    let mut i = 0;
    while i < chars.len() {
        if i + 1 < chars.len() && first(chars[i]) && second(chars[i + 1]) {
            out.extend(lead.chars());
            out.push(chars[i]);
            out.extend(mid.chars());
            out.push(chars[i + 1]);
            out.extend(tail.chars());
            i += 2;
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out
}

/// Tokenizes `line` and returns the space-joined result.
pub fn tokenize_13a_string(line: &str) -> String {
    let mut line = line.replace("<skipped>", "").replace("-\n", "").replace('\n', " ");
    if line.contains('&') {
        line = line
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
            .replace("&lt;", "<")
            .replace("&gt;", ">");
    }

    let mut chars: Vec<char> = Vec::with_capacity(line.len() + 2);
    chars.push(' ');
    for c in line.chars() {
        if is_symbol(c) {
            chars.push(' ');
            chars.push(c);
            chars.push(' ');
        } else {
            chars.push(c);
        }
    }
    // Trailing pad of the original line is itself a padded symbol.
    chars.extend([' ', ' ', ' ']);

    // period and comma unless preceded by a digit
    let chars = sub_pair(&chars, |c| !is_digit(c), is_period_or_comma, "", " ", " ");
    // period and comma unless followed by a digit
    let chars = sub_pair(&chars, is_period_or_comma, |c| !is_digit(c), " ", " ", "");
    // dash preceded by a digit
    let chars = sub_pair(&chars, is_digit, |c| c == '-', "", " ", " ");

    let joined: String = chars.into_iter().collect();
    let mut out = String::with_capacity(joined.len());
    for tok in split_ws(&joined) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

/// Tokens of `line` under the 13a scheme.
pub fn tokenize_13a(line: &str) -> Vec<String> {
    split_ws(&tokenize_13a_string(line)).map(String::from).collect()
}
