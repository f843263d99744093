//! Review-line preprocessing and adjacent-pair extraction.
//!
//! Reproduces the reference review pipeline exactly, substitution by
//! substitution: lines are lowercased, quotes/parens become spaces, currency
//! and percent values collapse to `$` / `%`, digits become `num_num` /
//! `num_extend` sentinels or vanish, and `.,?!:` get surrounding spaces.
//! The substitutions are not idempotent (each pass inserts fresh spaces
//! around punctuation) and the document pipeline applies `preprocess` twice,
//! so extracted lines carry double spaces around punctuation and a trailing
//! space. Downstream tokenization splits on whitespace runs, which absorbs
//! the difference.

use std::sync::LazyLock;

use regex::Regex;

static QUOTES_PARENS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"['()"]"#).unwrap());
static DOLLAR_VALUE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\$[\d.]*").unwrap());
static PERCENT_VALUE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\d.]*%").unwrap());
static SINGLE_DIGIT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r" \d[ ,]").unwrap());
static DIGIT_CODE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r" \d[^ ]*").unwrap());
static REMAINING_NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d[\d.]*").unwrap());
static PUNCT_SPACING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"([.,?!:])").unwrap());
static PERIOD_DOUBLE_SPACE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\.  ([a-z])").unwrap());

/// Normalizes one review line. Total function; applies the reference
/// substitution sequence in order.
pub fn preprocess_review_line(raw: &str) -> String {
    let line = raw.to_lowercase();
    let line = QUOTES_PARENS.replace_all(&line, " ");
    let line = DOLLAR_VALUE.replace_all(&line, "$$");
    let line = PERCENT_VALUE.replace_all(&line, "%");
    let line = SINGLE_DIGIT.replace_all(&line, " num_num ");
    let line = DIGIT_CODE.replace_all(&line, " num_extend");
    let line = REMAINING_NUMBER.replace_all(&line, "");
    let line = PUNCT_SPACING.replace_all(&line, " ${1} ");
    PERIOD_DOUBLE_SPACE.replace_all(&line, ". ${1}").into_owned()
}

/// Characters permitted in an acceptable line: space, `!$%&*,-.:;?_` and
/// lowercase ASCII letters.
fn allowed_char(c: char) -> bool {
    matches!(
        c,
        ' ' | '!' | '$' | '%' | '&' | '*' | ',' | '-' | '.' | ':' | ';' | '?' | '_'
    ) || c.is_ascii_lowercase()
}

/// True iff the (already preprocessed) line has length in `[30, 100)`
/// characters and uses only the allowed charset.
pub fn acceptable_line(line: &str) -> bool {
    let len = line.chars().count();
    if len < 30 || len >= 100 {
        return false;
    }
    line.chars().all(allowed_char)
}

/// First `n` characters (not bytes) of a string.
fn take_chars(line: &str, n: usize) -> &str {
    match line.char_indices().nth(n) {
        Some((idx, _)) => &line[..idx],
        None => line,
    }
}

/// Truncates after the last `.`; caller guarantees one exists.
fn clip_to_last_period(line: &str) -> &str {
    let idx = line.rfind('.').expect("caller checked for a period");
    &line[..idx + '.'.len_utf8()]
}

/// Minimal HTML entity unescaping: numeric (`&#38;`, `&#x26;`) plus the
/// common named entities. Unknown sequences pass through untouched.
fn unescape_entities(text: &str) -> String {
    let named = |name: &str| -> Option<char> {
        Some(match name {
            "amp" => '&',
            "lt" => '<',
            "gt" => '>',
            "quot" => '"',
            "apos" => '\'',
            "nbsp" => '\u{a0}',
            _ => return None,
        })
    };
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find('&') {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let entity_end = tail[1..].find(';').map(|i| i + 1);
        let decoded = entity_end.and_then(|end| {
            if end > 24 {
                return None;
            }
            let body = &tail[1..end];
            let ch = if let Some(hex) = body.strip_prefix("#x").or_else(|| body.strip_prefix("#X"))
            {
                u32::from_str_radix(hex, 16).ok().and_then(char::from_u32)
            } else if let Some(dec) = body.strip_prefix('#') {
                dec.parse::<u32>().ok().and_then(char::from_u32)
            } else {
                named(body)
            };
            ch.map(|c| (c, end + 1))
        });
        match decoded {
            Some((c, consumed)) => {
                out.push(c);
                rest = &tail[consumed..];
            }
            None => {
                out.push('&');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Extracts adjacent line pairs from one raw multi-line review.
///
/// Single-line reviews yield nothing. Lines must show a period within their
/// first 100 characters; survivors are clipped to their last period, run
/// through [`preprocess_review_line`] twice (matching the reference pipeline),
/// and filtered by [`acceptable_line`]. Consecutive survivors are paired as
/// (context, target).
pub fn extract_adjacent_pairs(review: &str) -> Vec<(String, String)> {
    let review = unescape_entities(review);
    let review = review.replace("\\\"", "\"");
    if !review.contains('\n') {
        return Vec::new();
    }
    let lines: Vec<String> = review
        .split('\n')
        .filter(|l| !l.is_empty() && take_chars(l, 100).contains('.'))
        .map(|l| preprocess_review_line(clip_to_last_period(take_chars(l, 100))))
        .collect();
    let lines: Vec<String> = lines.iter().map(|l| preprocess_review_line(l)).collect();
    let lines: Vec<String> = lines.into_iter().filter(|l| acceptable_line(l)).collect();
    if lines.len() < 2 {
        return Vec::new();
    }
    lines
        .windows(2)
        .map(|w| (w[0].clone(), w[1].clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases_and_spaces_punctuation() {
        assert_eq!(preprocess_review_line("Hello World."), "hello world . ");
    }

    #[test]
    fn empty_line_unchanged() {
        assert_eq!(preprocess_review_line(""), "");
    }

    #[test]
    fn dollar_values_collapse() {
        assert_eq!(preprocess_review_line("I paid $5.99 today."), "i paid $ today . ");
    }

    #[test]
    fn percent_and_digits() {
        assert_eq!(
            preprocess_review_line("It's 100% true: they charged $0.50 twice!"),
            "it s % true :  they charged $ twice ! "
        );
        assert_eq!(
            preprocess_review_line("a 9 out of 10 from me."),
            "a num_num out of num_extend from me . "
        );
    }

    #[test]
    fn reapplication_widens_punctuation_spacing() {
        let once = preprocess_review_line("good value. would buy again.");
        let twice = preprocess_review_line(&once);
        assert_eq!(once, "good value . would buy again . ");
        assert_eq!(twice, "good value  . would buy again  .  ");
        // The token stream is what downstream stages consume, and it is stable.
        let t_once: Vec<&str> = once.split_whitespace().collect();
        let t_twice: Vec<&str> = twice.split_whitespace().collect();
        assert_eq!(t_once, t_twice);
    }

    #[test]
    fn acceptable_line_length_bounds() {
        assert!(!acceptable_line(&"a".repeat(29)));
        assert!(acceptable_line(&"a".repeat(30)));
        assert!(acceptable_line(&"a".repeat(99)));
        assert!(!acceptable_line(&"a".repeat(100)));
        let mid = "plain lowercase words with a period . and spaces";
        assert_eq!(mid.len(), 48);
        assert!(acceptable_line(mid));
    }

    #[test]
    fn acceptable_line_charset() {
        assert!(!acceptable_line(&format!("{} uppercase X", "a".repeat(30))));
        assert!(!acceptable_line(&format!("{} digit 7 here", "a".repeat(30))));
        assert!(!acceptable_line(&format!("{} hash # here", "a".repeat(30))));
        assert!(acceptable_line(&format!("{} num_num $ % ! ? : ; , - . *", "a".repeat(30))));
    }

    #[test]
    fn single_line_review_yields_nothing() {
        assert!(extract_adjacent_pairs("just one line with a period.").is_empty());
    }

    #[test]
    fn three_acceptable_lines_give_two_pairs() {
        let l = "this line is long enough to pass the filter easily.";
        let review = format!("{l}\n{l}\n{l}");
        let pairs = extract_adjacent_pairs(&review);
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].1, pairs[1].0);
    }

    #[test]
    fn lines_without_periods_yield_nothing() {
        let review = "no terminal punctuation on this line\nnor on this one either\nnope";
        assert!(extract_adjacent_pairs(&review.to_string()).is_empty());
    }

    #[test]
    fn clipping_drops_text_after_last_period_within_window() {
        let long_head = "x".repeat(120);
        let review = format!(
            "a fine start that runs long enough. trailing words\n{long_head}. tail.\nanother quite acceptable closing line here."
        );
        let pairs = extract_adjacent_pairs(&review);
        // Middle line has no period within its first 100 chars and is dropped.
        assert_eq!(pairs.len(), 1);
        assert!(pairs[0].0.starts_with("a fine start"));
        assert!(pairs[0].0.trim_end().ends_with('.'));
        assert!(!pairs[0].0.contains("trailing words"));
    }

    #[test]
    fn entities_unescape_before_splitting() {
        assert_eq!(unescape_entities("a &amp; b &#38; c &#x26; d"), "a & b & c & d");
        assert_eq!(unescape_entities("&unknown; stays"), "&unknown; stays");
        assert_eq!(unescape_entities("bare & ampersand"), "bare & ampersand");
    }
}
