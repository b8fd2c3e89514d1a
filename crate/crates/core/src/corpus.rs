//! Shared data model: sentences as token views over lines, length
//! histograms, and per-run selection reports.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One line of UTF-8 text, no trailing newline. Tokens are the
/// ASCII-whitespace-delimited substrings; text is assumed pre-tokenized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    text: String,
}

impl Sentence {
    pub fn new(text: impl Into<String>) -> Self {
        Sentence { text: text.into() }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn into_text(self) -> String {
        self.text
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.text.split_ascii_whitespace()
    }

    /// Token count; 0 only for blank lines.
    pub fn len(&self) -> usize {
        self.tokens().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Character count (Unicode scalars), for the character-length variant.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

impl From<&str> for Sentence {
    fn from(s: &str) -> Self {
        Sentence::new(s)
    }
}

/// Histogram of token-length -> line count over a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LengthDistribution {
    pub counts: BTreeMap<usize, u64>,
    pub total: u64,
}

impl LengthDistribution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, length: usize) {
        *self.counts.entry(length).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn count(&self, length: usize) -> u64 {
        self.counts.get(&length).copied().unwrap_or(0)
    }

    /// Exact integer merge; sharded counting must be order-insensitive.
    pub fn merge(&mut self, other: &LengthDistribution) {
        for (&len, &n) in &other.counts {
            *self.counts.entry(len).or_insert(0) += n;
        }
        self.total += other.total;
    }

    /// TSV persistence: `length<TAB>count`, ascending by length, no header.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        for (len, n) in &self.counts {
            writeln!(w, "{len}\t{n}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R, path: &str) -> Result<Self> {
        let mut dist = LengthDistribution::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let parse = |s: Option<&str>| -> Option<u64> { s.and_then(|v| v.parse().ok()) };
            let len = parse(parts.next());
            let n = parse(parts.next());
            match (len, n) {
                (Some(len), Some(n)) => {
                    *dist.counts.entry(len as usize).or_insert(0) += n;
                    dist.total += n;
                }
                _ => {
                    return Err(Error::Parse {
                        path: path.to_string(),
                        line: i + 1,
                        msg: format!("malformed length distribution row: {line:?}"),
                    })
                }
            }
        }
        Ok(dist)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_tsv(std::io::BufReader::new(f), &path.display().to_string())
    }
}

/// Single-pass length histogram over a corpus; blank lines count at length 0.
pub fn compute_length_distribution<I, S>(corpus: I) -> LengthDistribution
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut dist = LengthDistribution::new();
    for line in corpus {
        dist.add(Sentence::new(line.as_ref()).len());
    }
    dist
}

/// Per-run accounting of what happened to every input line.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct SelectionReport {
    pub lines_read: u64,
    pub lines_selected: u64,
    pub rejections: BTreeMap<String, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SelectionReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_seed(seed: u64) -> Self {
        SelectionReport {
            seed: Some(seed),
            ..Default::default()
        }
    }

    pub fn select(&mut self) {
        self.lines_read += 1;
        self.lines_selected += 1;
    }

    pub fn reject(&mut self, reason: &str) {
        self.lines_read += 1;
        *self.rejections.entry(reason.to_string()).or_insert(0) += 1;
    }

    pub fn rejected(&self, reason: &str) -> u64 {
        self.rejections.get(reason).copied().unwrap_or(0)
    }

    /// lines_read == lines_selected + sum of rejections.
    pub fn is_conserved(&self) -> bool {
        self.lines_read == self.lines_selected + self.rejections.values().sum::<u64>()
    }
}

/// Exact integer summary of a corpus's line lengths.
#[derive(Debug, Clone, Default, Serialize, PartialEq, Eq)]
pub struct CorpusStats {
    pub lines: u64,
    pub tokens: u64,
    pub min_length: Option<usize>,
    /// Lower median of the sorted lengths (element at index (n-1)/2).
    pub median_length: Option<usize>,
    pub max_length: Option<usize>,
    pub distinct_lengths: usize,
}

/// Single-pass stats via the length histogram; memory is O(distinct lengths).
pub fn corpus_stats<I, S>(corpus: I) -> CorpusStats
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let dist = compute_length_distribution(corpus);
    stats_from_distribution(&dist)
}

pub fn stats_from_distribution(dist: &LengthDistribution) -> CorpusStats {
    let lines = dist.total;
    let tokens = dist
        .counts
        .iter()
        .map(|(&len, &n)| len as u64 * n)
        .sum::<u64>();
    if lines == 0 {
        return CorpusStats::default();
    }
    let min_length = dist.counts.keys().next().copied();
    let max_length = dist.counts.keys().next_back().copied();
    let median_rank = (lines - 1) / 2;
    let mut seen = 0u64;
    let mut median_length = None;
    for (&len, &n) in &dist.counts {
        seen += n;
        if seen > median_rank {
            median_length = Some(len);
            break;
        }
    }
    CorpusStats {
        lines,
        tokens,
        min_length,
        median_length,
        max_length,
        distinct_lengths: dist.counts.len(),
    }
}

/// Read a corpus file into lines (no trailing newlines).
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(f).lines() {
        out.push(line?);
    }
    Ok(out)
}

/// Write lines with LF endings.
pub fn write_lines<W: Write, S: AsRef<str>>(mut w: W, lines: &[S]) -> Result<()> {
    for line in lines {
        w.write_all(line.as_ref().as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
