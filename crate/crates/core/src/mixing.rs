//! Combine per-language corpora into one pre-training corpus, oversampling
//! each smaller corpus to the line count of the largest.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::corpus::SelectionReport;
use crate::{derive_seed, Error, Result};

#[derive(Debug, Clone)]
pub struct LanguageCorpus {
    pub tag: String,
    pub lines: Vec<String>,
}

/// One mixed output line with its language tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedLine {
    pub tag: String,
    pub line: String,
}

/// Each corpus contributes exactly max(line_count) lines: floor(M / n) full
/// copies plus a seed-deterministic uniform sample without replacement of
/// the remainder. Contributions are interleaved by a seed-deterministic
/// global shuffle.
pub fn oversample_mix(
    corpora: &[LanguageCorpus],
    seed: u64,
) -> Result<(Vec<TaggedLine>, SelectionReport)> {
    if corpora.is_empty() {
        return Err(Error::Config("no corpora to mix".into()));
    }
    for c in corpora {
        if c.lines.is_empty() {
            return Err(Error::EmptyLanguage(c.tag.clone()));
        }
    }
    let max = corpora.iter().map(|c| c.lines.len()).max().unwrap();
    let mut report = SelectionReport::with_seed(seed);
    let mut out = Vec::with_capacity(max * corpora.len());
    for (ci, corpus) in corpora.iter().enumerate() {
        let n = corpus.lines.len();
        report.lines_read += n as u64;
        let copies = max / n;
        let remainder = max % n;
        for _ in 0..copies {
            for line in &corpus.lines {
                out.push(TaggedLine {
                    tag: corpus.tag.clone(),
                    line: line.clone(),
                });
            }
        }
        if remainder > 0 {
            let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, ci as u64 + 1));
            let mut picked =
                rand::seq::index::sample(&mut rng, n, remainder).into_vec();
            picked.sort_unstable();
            for i in picked {
                out.push(TaggedLine {
                    tag: corpus.tag.clone(),
                    line: corpus.lines[i].clone(),
                });
            }
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, 0));
    out.shuffle(&mut rng);
    report.lines_selected = out.len() as u64;
    Ok((out, report))
}
