//! Character-level script conversion between related writing systems
//! (e.g. Chinese hanzi to Japanese kanji), either by taking the first
//! candidate per character or by enumerating candidate combinations per
//! word and keeping the one a target-language character LM scores highest.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use crate::ngram::NGramModel;
use crate::{Error, Result};

pub const REASON_CAP_FALLBACK: &str = "cap_fallback";

/// source character -> ordered candidate list; list order is priority order.
#[derive(Debug, Clone, Default)]
pub struct MappingTable {
    entries: HashMap<char, Vec<char>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappingMode {
    OneToOne,
    LmScored,
}

/// Default cap on per-token candidate combinations before falling back to
/// one-to-one mapping.
pub const DEFAULT_CANDIDATE_CAP: u64 = 4096;

impl MappingTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn candidates(&self, c: char) -> Option<&[char]> {
        self.entries.get(&c).map(Vec::as_slice)
    }

    pub fn insert(&mut self, source: char, candidates: Vec<char>) {
        self.entries.insert(source, candidates);
    }

    /// Strict TSV parse: `source_char<TAB>cand1 cand2 ...`, candidates
    /// space-separated in priority order; `#` lines are comments.
    pub fn parse<R: BufRead>(r: R, path: &str) -> Result<MappingTable> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_string(),
            line,
            msg,
        };
        let mut table = MappingTable::default();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(err(
                    i + 1,
                    format!("expected 2 tab-separated columns, got {}", fields.len()),
                ));
            }
            let mut key_chars = fields[0].chars();
            let key = match (key_chars.next(), key_chars.next()) {
                (Some(c), None) => c,
                _ => {
                    return Err(err(
                        i + 1,
                        format!("source key must be a single character, got {:?}", fields[0]),
                    ))
                }
            };
            if table.entries.contains_key(&key) {
                return Err(err(
                    i + 1,
                    format!("duplicate source character {key:?}"),
                ));
            }
            let mut candidates = Vec::new();
            for cand in fields[1].split(' ').filter(|s| !s.is_empty()) {
                let mut chars = cand.chars();
                let c = match (chars.next(), chars.next()) {
                    (Some(c), None) => c,
                    _ => {
                        return Err(err(
                            i + 1,
                            format!("candidate must be a single character, got {cand:?}"),
                        ))
                    }
                };
                if candidates.contains(&c) {
                    return Err(err(i + 1, format!("duplicate candidate {c:?}")));
                }
                candidates.push(c);
            }
            if candidates.is_empty() {
                return Err(err(i + 1, "empty candidate list".into()));
            }
            table.entries.insert(key, candidates);
        }
        Ok(table)
    }

    pub fn from_file(path: &Path) -> Result<MappingTable> {
        let f = std::fs::File::open(path)?;
        Self::parse(std::io::BufReader::new(f), &path.display().to_string())
    }
}

/// Replace every mapped character by its first candidate; everything else
/// passes through. Character count is preserved.
pub fn map_one_to_one(line: &str, table: &MappingTable) -> String {
    line.chars()
        .map(|c| table.candidates(c).map_or(c, |cands| cands[0]))
        .collect()
}

/// All candidate combinations of one token, leftmost character varying
/// slowest, so index 0 is the all-first-candidates (one-to-one) string.
pub fn enumerate_combinations(token: &str, table: &MappingTable) -> Vec<String> {
    let slots: Vec<Vec<char>> = token
        .chars()
        .map(|c| table.candidates(c).map_or(vec![c], <[char]>::to_vec))
        .collect();
    let mut out = vec![String::new()];
    for slot in &slots {
        let mut next = Vec::with_capacity(out.len() * slot.len());
        for prefix in &out {
            for &c in slot {
                let mut s = prefix.clone();
                s.push(c);
                next.push(s);
            }
        }
        out = next;
    }
    out
}

pub fn combination_count(token: &str, table: &MappingTable) -> u64 {
    let mut n: u64 = 1;
    for c in token.chars() {
        let k = table.candidates(c).map_or(1, <[char]>::len) as u64;
        n = n.saturating_mul(k);
    }
    n
}

/// Map one whitespace token, choosing the candidate combination with the
/// highest character-LM score; ties go to the earliest enumerated
/// combination. Tokens whose combination count exceeds `cap` fall back to
/// one-to-one mapping; returns whether the fallback fired.
pub fn map_token_lm_scored(
    token: &str,
    table: &MappingTable,
    lm: &NGramModel,
    cap: u64,
) -> (String, bool) {
    if combination_count(token, table) > cap {
        return (map_one_to_one(token, table), true);
    }
    let mut best: Option<(String, f64)> = None;
    for cand in enumerate_combinations(token, table) {
        let score = lm.score_sentence(&cand).total_log10;
        match &best {
            Some((_, s)) if score <= *s => {}
            _ => best = Some((cand, score)),
        }
    }
    (best.expect("at least one combination").0, false)
}

/// Per-token LM-scored mapping over a line. Tokens are rejoined with single
/// spaces (input is pre-tokenized). Returns the mapped line and the number
/// of tokens that hit the candidate cap and fell back to one-to-one.
pub fn map_lm_scored(line: &str, table: &MappingTable, lm: &NGramModel, cap: u64) -> (String, u64) {
    let mut fallbacks = 0;
    let mapped: Vec<String> = line
        .split_ascii_whitespace()
        .map(|tok| {
            let (s, fell_back) = map_token_lm_scored(tok, table, lm, cap);
            if fell_back {
                fallbacks += 1;
            }
            s
        })
        .collect();
    (mapped.join(" "), fallbacks)
}
