//! NFKC normalization and initial corpus filtering: token-count bounds and
//! the CJK/ASCII ratio filter for noisy Chinese data.

use std::io::{BufRead, Write};

use unicode_normalization::{is_nfkc_quick, IsNormalized, UnicodeNormalization};

use crate::corpus::{SelectionReport, Sentence};
use crate::Result;

pub const REASON_INVALID_UTF8: &str = "invalid_utf8";
pub const REASON_TOO_SHORT: &str = "too_short";
pub const REASON_TOO_LONG: &str = "too_long";
pub const REASON_LOW_CJK: &str = "low_cjk_ratio";
pub const REASON_HIGH_ASCII: &str = "high_ascii_ratio";
pub const REASON_EMPTY: &str = "empty";

/// Filtering thresholds. Token bounds are inclusive-lower/exclusive-upper;
/// a sentence is kept iff min_tokens <= length < max_tokens. Ratio bounds
/// are strict: a CJK fraction of exactly `cjk_min_ratio` keeps, as does an
/// ASCII fraction of exactly `ascii_max_ratio`.
#[derive(Debug, Clone)]
pub struct FilterRule {
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub cjk_min_ratio: f64,
    pub ascii_max_ratio: f64,
    pub cjk_filter_enabled: bool,
}

impl Default for FilterRule {
    fn default() -> Self {
        FilterRule {
            min_tokens: 3,
            max_tokens: 80,
            cjk_min_ratio: 0.30,
            ascii_max_ratio: 0.30,
            cjk_filter_enabled: false,
        }
    }
}

impl FilterRule {
    pub fn validate(&self) -> Result<()> {
        if self.min_tokens == 0 || self.min_tokens >= self.max_tokens {
            return Err(crate::Error::Config(format!(
                "token bounds must satisfy 0 < min ({}) < max ({})",
                self.min_tokens, self.max_tokens
            )));
        }
        for (name, r) in [
            ("cjk-ratio", self.cjk_min_ratio),
            ("ascii-ratio", self.ascii_max_ratio),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(crate::Error::Config(format!(
                    "{name} must lie in [0,1], got {r}"
                )));
            }
        }
        Ok(())
    }
}

/// Unicode NFKC normal form. ASCII and already-normalized text pass through
/// without reallocation.
pub fn nfkc_normalize(line: &str) -> std::borrow::Cow<'_, str> {
    if line.is_ascii() || is_nfkc_quick(line.chars()) == IsNormalized::Yes {
        std::borrow::Cow::Borrowed(line)
    } else {
        std::borrow::Cow::Owned(line.nfkc().collect())
    }
}

/// Keep iff min_tokens <= length < max_tokens.
pub fn token_length_filter(sentence: &Sentence, rule: &FilterRule) -> std::result::Result<(), &'static str> {
    let len = sentence.len();
    if len < rule.min_tokens {
        Err(REASON_TOO_SHORT)
    } else if len >= rule.max_tokens {
        Err(REASON_TOO_LONG)
    } else {
        Ok(())
    }
}

fn is_cjk_char(c: char) -> bool {
    // CJK Unified Ideographs and Extension A.
    matches!(c, '\u{4e00}'..='\u{9fff}' | '\u{3400}'..='\u{4dbf}')
}

/// A token is "Chinese" iff it contains at least one CJK ideograph.
pub fn is_cjk_token(token: &str) -> bool {
    token.chars().any(is_cjk_char)
}

/// A token is "English" iff it is non-empty and entirely ASCII alphabetic.
pub fn is_ascii_alpha_token(token: &str) -> bool {
    !token.is_empty() && token.bytes().all(|b| b.is_ascii_alphabetic())
}

/// Ratio thresholds are compared in exact rational arithmetic; the float
/// threshold is fixed to a rational with denominator 10^9 so that a corpus
/// fraction of exactly 30% compares equal to a 0.3 threshold on every
/// platform.
fn ratio_num(ratio: f64) -> u128 {
    (ratio * 1e9).round() as u128
}

const RATIO_DEN: u128 = 1_000_000_000;

/// Reject iff the CJK token fraction is strictly below `cjk_min_ratio` or
/// the ASCII-alphabetic token fraction is strictly above `ascii_max_ratio`.
pub fn cjk_ratio_filter(sentence: &Sentence, rule: &FilterRule) -> std::result::Result<(), &'static str> {
    let mut total: u128 = 0;
    let mut cjk: u128 = 0;
    let mut ascii: u128 = 0;
    for tok in sentence.tokens() {
        total += 1;
        if is_cjk_token(tok) {
            cjk += 1;
        }
        if is_ascii_alpha_token(tok) {
            ascii += 1;
        }
    }
    if total == 0 {
        return Err(REASON_EMPTY);
    }
    // cjk/total < min  <=>  cjk * DEN < min_num * total
    if cjk * RATIO_DEN < ratio_num(rule.cjk_min_ratio) * total {
        return Err(REASON_LOW_CJK);
    }
    if ascii * RATIO_DEN > ratio_num(rule.ascii_max_ratio) * total {
        return Err(REASON_HIGH_ASCII);
    }
    Ok(())
}

/// Keep/reject decision for one already-normalized sentence.
pub fn filter_decision(sentence: &Sentence, rule: &FilterRule) -> std::result::Result<(), &'static str> {
    token_length_filter(sentence, rule)?;
    if rule.cjk_filter_enabled {
        cjk_ratio_filter(sentence, rule)?;
    }
    Ok(())
}

/// Streaming NFKC normalization: reads raw bytes line by line, writes the
/// normal form; lines that are not valid UTF-8 are dropped and counted.
pub fn run_normalize<R: BufRead, W: Write>(reader: R, mut writer: W) -> Result<SelectionReport> {
    let mut report = SelectionReport::new();
    for raw in split_lines(reader) {
        let raw = raw?;
        match std::str::from_utf8(&raw) {
            Ok(line) => {
                writer.write_all(nfkc_normalize(line).as_bytes())?;
                writer.write_all(b"\n")?;
                report.select();
            }
            Err(_) => report.reject(REASON_INVALID_UTF8),
        }
    }
    Ok(report)
}

/// Streaming filter pipeline. Kept lines are written unmodified, in input
/// order; every input line is accounted for in the report. When `normalize`
/// is set, NFKC runs before the length check and kept lines are emitted in
/// normal form.
pub fn run_filter_pipeline<R: BufRead, W: Write>(
    reader: R,
    mut writer: W,
    rule: &FilterRule,
    normalize: bool,
) -> Result<SelectionReport> {
    rule.validate()?;
    let mut report = SelectionReport::new();
    for raw in split_lines(reader) {
        let raw = raw?;
        let line = match std::str::from_utf8(&raw) {
            Ok(line) => line,
            Err(_) => {
                report.reject(REASON_INVALID_UTF8);
                continue;
            }
        };
        let line = if normalize {
            nfkc_normalize(line)
        } else {
            std::borrow::Cow::Borrowed(line)
        };
        let sentence = Sentence::new(line.as_ref());
        match filter_decision(&sentence, rule) {
            Ok(()) => {
                writer.write_all(line.as_bytes())?;
                writer.write_all(b"\n")?;
                report.select();
            }
            Err(reason) => report.reject(reason),
        }
    }
    Ok(report)
}

/// Byte-level line iterator (LF-terminated, terminator stripped) so invalid
/// UTF-8 can be rejected per line instead of aborting the stream.
fn split_lines<R: BufRead>(mut reader: R) -> impl Iterator<Item = Result<Vec<u8>>> {
    std::iter::from_fn(move || {
        let mut buf = Vec::new();
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => None,
            Ok(_) => {
                if buf.last() == Some(&b'\n') {
                    buf.pop();
                }
                Some(Ok(buf))
            }
            Err(e) => Some(Err(e.into())),
        }
    })
}
