//! Order-N backoff language models: interpolated Kneser-Ney training with a
//! fixed discount, sentence scoring, perplexity, and ARPA persistence.
//!
//! Conventions: sentences are padded with `<s>`/`</s>`; `<s>` is never
//! predicted (its unigram entry carries -99 and a backoff weight only);
//! `</s>` is always predicted; unseen query tokens map to `<unk>`, whose
//! unigram mass comes from the smoothing discount. With these conventions
//! the conditional distribution for every stored history sums to 1.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::{Error, Result};

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

const UNK_ID: u32 = 0;
const BOS_ID: u32 = 1;
const EOS_ID: u32 = 2;

/// Fixed Kneser-Ney discount applied at every order.
pub const KN_DISCOUNT: f64 = 0.75;

const MISSING_LOG10: f64 = -99.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    /// Whitespace tokens.
    Token,
    /// Each non-whitespace character is one token.
    Char,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothing {
    /// Interpolated Kneser-Ney, fixed discount 0.75 per order.
    KneserNey,
    /// Unsmoothed maximum likelihood. Diagnostic only: no `<unk>` mass, no
    /// backoff weights; exists so closed-form count-ratio oracles apply.
    MleDiagnostic,
}

#[derive(Debug, Clone, Copy)]
struct GramEntry {
    logprob: f64,
    backoff: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    granularity: Granularity,
    vocab: Vec<String>,
    lookup: HashMap<String, u32>,
    /// grams[k] holds (k+1)-grams.
    grams: Vec<HashMap<Box<[u32]>, GramEntry>>,
}

/// Log10 score of one sentence, `</s>` included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentenceScore {
    pub total_log10: f64,
    pub tokens_scored: usize,
}

impl SentenceScore {
    pub fn per_token_log10(&self) -> f64 {
        self.total_log10 / self.tokens_scored as f64
    }
}

fn reserved_vocab() -> (Vec<String>, HashMap<String, u32>) {
    let vocab: Vec<String> = [UNK, BOS, EOS].iter().map(|s| s.to_string()).collect();
    let lookup = vocab
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i as u32))
        .collect();
    (vocab, lookup)
}

pub fn tokenize(line: &str, granularity: Granularity) -> Vec<String> {
    match granularity {
        Granularity::Token => line.split_ascii_whitespace().map(str::to_string).collect(),
        Granularity::Char => line
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect(),
    }
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    /// Two-phase training: exact integer n-gram counting, then estimation.
    pub fn train<I, S>(
        corpus: I,
        order: usize,
        granularity: Granularity,
        smoothing: Smoothing,
    ) -> Result<NGramModel>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if order < 1 {
            return Err(Error::Config("n-gram order must be >= 1".into()));
        }
        let (mut vocab, mut lookup) = reserved_vocab();
        let intern = |tok: &str, vocab: &mut Vec<String>, lookup: &mut HashMap<String, u32>| {
            if let Some(&id) = lookup.get(tok) {
                id
            } else {
                let id = vocab.len() as u32;
                vocab.push(tok.to_string());
                lookup.insert(tok.to_string(), id);
                id
            }
        };

        let mut counts: Vec<HashMap<Box<[u32]>, u64>> = vec![HashMap::new(); order];
        let mut sentences = 0u64;
        for line in corpus {
            let tokens = tokenize(line.as_ref(), granularity);
            if tokens.is_empty() {
                continue;
            }
            sentences += 1;
            let mut seq = Vec::with_capacity(tokens.len() + 2);
            seq.push(BOS_ID);
            for tok in &tokens {
                seq.push(intern(tok, &mut vocab, &mut lookup));
            }
            seq.push(EOS_ID);
            for k in 1..=order {
                for window in seq.windows(k) {
                    // <s> is never a predicted word; skip its unigram window.
                    if *window.last().unwrap() == BOS_ID {
                        continue;
                    }
                    *counts[k - 1].entry(window.into()).or_insert(0) += 1;
                }
            }
        }
        if sentences == 0 {
            return Err(Error::EmptyCorpus(
                "no non-blank sentences to train on".into(),
            ));
        }

        let grams = match smoothing {
            Smoothing::KneserNey => estimate_kneser_ney(&counts),
            Smoothing::MleDiagnostic => estimate_mle(&counts),
        };
        Ok(NGramModel {
            order,
            granularity,
            vocab,
            lookup,
            grams,
        })
    }

    fn id_of(&self, tok: &str) -> u32 {
        self.lookup.get(tok).copied().unwrap_or(UNK_ID)
    }

    fn cond_log10_ids(&self, context: &[u32], word: u32) -> f64 {
        let k = context.len();
        let mut gram: Vec<u32> = Vec::with_capacity(k + 1);
        gram.extend_from_slice(context);
        gram.push(word);
        if let Some(e) = self.grams[k].get(gram.as_slice()) {
            return e.logprob;
        }
        if context.is_empty() {
            return self
                .grams[0]
                .get([UNK_ID].as_slice())
                .map(|e| e.logprob)
                .unwrap_or(MISSING_LOG10);
        }
        let backoff = self
            .grams[k - 1]
            .get(context)
            .and_then(|e| e.backoff)
            .unwrap_or(0.0);
        backoff + self.cond_log10_ids(&context[1..], word)
    }

    /// log10 P(word | context), context given most-recent-last; longer
    /// contexts are truncated to order-1. OOV tokens map to `<unk>`.
    pub fn cond_log10(&self, context: &[&str], word: &str) -> f64 {
        let start = context.len().saturating_sub(self.order - 1);
        let ids: Vec<u32> = context[start..].iter().map(|t| self.id_of(t)).collect();
        self.cond_log10_ids(&ids, self.id_of(word))
    }

    /// Total log10 probability of the padded sentence, ending at `</s>`.
    pub fn score_sentence(&self, line: &str) -> SentenceScore {
        let tokens = tokenize(line, self.granularity);
        let mut seq = Vec::with_capacity(tokens.len() + 2);
        seq.push(BOS_ID);
        seq.extend(tokens.iter().map(|t| self.id_of(t)));
        seq.push(EOS_ID);
        let mut total = 0.0;
        for i in 1..seq.len() {
            let start = i.saturating_sub(self.order - 1).min(i);
            total += self.cond_log10_ids(&seq[start..i], seq[i]);
        }
        SentenceScore {
            total_log10: total,
            tokens_scored: tokens.len() + 1,
        }
    }

    /// 10^(-(sum of log10 scores) / (tokens scored)).
    pub fn perplexity<I, S>(&self, corpus: I) -> Result<f64>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut total = 0.0;
        let mut tokens = 0usize;
        for line in corpus {
            let score = self.score_sentence(line.as_ref());
            total += score.total_log10;
            tokens += score.tokens_scored;
        }
        if tokens == 0 {
            return Err(Error::EmptyCorpus("perplexity over empty corpus".into()));
        }
        Ok(10f64.powf(-total / tokens as f64))
    }

    /// Words the model may predict: everything except `<s>`.
    pub fn predictable_vocab(&self) -> impl Iterator<Item = &str> {
        self.vocab
            .iter()
            .map(String::as_str)
            .filter(|&t| t != BOS)
    }

    /// Every stored gram that carries a backoff weight, i.e. actually serves
    /// as a history, plus the empty history. For normalization checks.
    pub fn stored_histories(&self) -> Vec<Vec<String>> {
        let mut out = vec![Vec::new()];
        for level in &self.grams {
            for (key, entry) in level {
                if entry.backoff.is_some() {
                    out.push(
                        key.iter()
                            .map(|&id| self.vocab[id as usize].clone())
                            .collect(),
                    );
                }
            }
        }
        out
    }

    /// Sum of P(w | context) over the predictable vocabulary (including
    /// `<unk>`); 1.0 for a properly normalized model.
    pub fn conditional_sum(&self, context: &[&str]) -> f64 {
        self.predictable_vocab()
            .map(|w| 10f64.powf(self.cond_log10(context, w)))
            .sum()
    }

    pub fn ngram_counts(&self) -> Vec<usize> {
        self.grams.iter().map(HashMap::len).collect()
    }

    /// Gram keys as strings, for monotonicity checks.
    pub fn gram_keys(&self) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        for level in &self.grams {
            for key in level.keys() {
                out.push(
                    key.iter()
                        .map(|&id| self.vocab[id as usize].clone())
                        .collect(),
                );
            }
        }
        out
    }

    /// ARPA serialization: sections sorted lexicographically by token
    /// strings so output is bit-identical for identical models.
    pub fn export_arpa<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "\\data\\")?;
        for (i, level) in self.grams.iter().enumerate() {
            writeln!(w, "ngram {}={}", i + 1, level.len())?;
        }
        for (i, level) in self.grams.iter().enumerate() {
            writeln!(w)?;
            writeln!(w, "\\{}-grams:", i + 1)?;
            let mut entries: Vec<(Vec<&str>, &GramEntry)> = level
                .iter()
                .map(|(key, e)| {
                    (
                        key.iter().map(|&id| self.vocab[id as usize].as_str()).collect(),
                        e,
                    )
                })
                .collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            for (toks, e) in entries {
                write!(w, "{:.7}\t{}", e.logprob, toks.join(" "))?;
                if let Some(b) = e.backoff {
                    write!(w, "\t{b:.7}")?;
                }
                writeln!(w)?;
            }
        }
        writeln!(w)?;
        writeln!(w, "\\end\\")?;
        Ok(())
    }

    pub fn export_arpa_to(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.export_arpa(&mut w)
    }

    /// Strict ARPA parser; count mismatches and malformed rows are errors
    /// with line numbers.
    pub fn import_arpa<R: BufRead>(r: R, path: &str, granularity: Granularity) -> Result<NGramModel> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_string(),
            line,
            msg,
        };
        let mut lines = Vec::new();
        for line in r.lines() {
            lines.push(line?);
        }
        let mut i = 0;
        let skip_blank = |i: &mut usize, lines: &[String]| {
            while *i < lines.len() && lines[*i].trim().is_empty() {
                *i += 1;
            }
        };
        skip_blank(&mut i, &lines);
        if i >= lines.len() || lines[i].trim() != "\\data\\" {
            return Err(err(i + 1, "expected \\data\\ header".into()));
        }
        i += 1;
        let mut declared: Vec<usize> = Vec::new();
        while i < lines.len() && !lines[i].trim().is_empty() {
            let line = lines[i].trim();
            let rest = line
                .strip_prefix("ngram ")
                .ok_or_else(|| err(i + 1, format!("expected 'ngram N=count', got {line:?}")))?;
            let (n, c) = rest
                .split_once('=')
                .ok_or_else(|| err(i + 1, format!("expected 'ngram N=count', got {line:?}")))?;
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| err(i + 1, format!("bad order in {line:?}")))?;
            let c: usize = c
                .trim()
                .parse()
                .map_err(|_| err(i + 1, format!("bad count in {line:?}")))?;
            if n != declared.len() + 1 {
                return Err(err(i + 1, format!("orders must be consecutive from 1, got {n}")));
            }
            declared.push(c);
            i += 1;
        }
        if declared.is_empty() {
            return Err(err(i + 1, "no 'ngram N=count' declarations".into()));
        }
        let order = declared.len();
        let (mut vocab, mut lookup) = reserved_vocab();
        let mut grams: Vec<HashMap<Box<[u32]>, GramEntry>> = vec![HashMap::new(); order];

        for (ord_idx, &count) in declared.iter().enumerate() {
            skip_blank(&mut i, &lines);
            let header = format!("\\{}-grams:", ord_idx + 1);
            if i >= lines.len() || lines[i].trim() != header {
                return Err(err(
                    i + 1,
                    format!(
                        "expected {header:?}, got {:?}",
                        lines.get(i).map(|s| s.trim()).unwrap_or("<eof>")
                    ),
                ));
            }
            i += 1;
            let section_start = i + 1;
            while i < lines.len() && !lines[i].trim().is_empty() {
                let row = &lines[i];
                let fields: Vec<&str> = row.split('\t').collect();
                if fields.len() != 2 && fields.len() != 3 {
                    return Err(err(i + 1, format!("expected 2 or 3 tab-separated fields, got {}", fields.len())));
                }
                if fields.len() == 3 && ord_idx + 1 == order {
                    return Err(err(i + 1, "backoff weight on highest-order n-gram".into()));
                }
                let logprob: f64 = fields[0]
                    .parse()
                    .map_err(|_| err(i + 1, format!("bad log probability {:?}", fields[0])))?;
                let toks: Vec<&str> = fields[1].split(' ').collect();
                if toks.len() != ord_idx + 1 || toks.iter().any(|t| t.is_empty()) {
                    return Err(err(
                        i + 1,
                        format!("expected {}-gram, got {:?}", ord_idx + 1, fields[1]),
                    ));
                }
                let mut key = Vec::with_capacity(toks.len());
                for t in &toks {
                    let id = if ord_idx == 0 {
                        *lookup.entry(t.to_string()).or_insert_with(|| {
                            vocab.push(t.to_string());
                            (vocab.len() - 1) as u32
                        })
                    } else {
                        *lookup.get(*t).ok_or_else(|| {
                            err(i + 1, format!("token {t:?} not in unigram section"))
                        })?
                    };
                    key.push(id);
                }
                let backoff = if fields.len() == 3 {
                    Some(
                        fields[2]
                            .parse()
                            .map_err(|_| err(i + 1, format!("bad backoff weight {:?}", fields[2])))?,
                    )
                } else {
                    None
                };
                if grams[ord_idx]
                    .insert(key.into_boxed_slice(), GramEntry { logprob, backoff })
                    .is_some()
                {
                    return Err(err(i + 1, format!("duplicate n-gram {:?}", fields[1])));
                }
                i += 1;
            }
            if grams[ord_idx].len() != count {
                return Err(err(
                    section_start,
                    format!(
                        "\\data\\ declares {} {}-grams but section lists {}",
                        count,
                        ord_idx + 1,
                        grams[ord_idx].len()
                    ),
                ));
            }
        }
        skip_blank(&mut i, &lines);
        if i >= lines.len() || lines[i].trim() != "\\end\\" {
            return Err(err(i + 1, "expected \\end\\".into()));
        }
        Ok(NGramModel {
            order,
            granularity,
            vocab,
            lookup,
            grams,
        })
    }

    pub fn import_arpa_from(path: &Path, granularity: Granularity) -> Result<NGramModel> {
        let f = std::fs::File::open(path)?;
        Self::import_arpa(
            std::io::BufReader::new(f),
            &path.display().to_string(),
            granularity,
        )
    }
}

type CountMap = HashMap<Box<[u32]>, u64>;

/// Per-history totals: history -> (sum of counts, distinct continuations).
fn group_stats(counts: &CountMap, history_len: usize) -> HashMap<Box<[u32]>, (u64, u64)> {
    let mut groups: HashMap<Box<[u32]>, (u64, u64)> = HashMap::new();
    for (key, &c) in counts {
        let entry = groups.entry(key[..history_len].into()).or_insert((0, 0));
        entry.0 += c;
        entry.1 += 1;
    }
    groups
}

/// Interpolated Kneser-Ney with fixed discount. Lower orders use
/// continuation counts, except n-grams starting with `<s>` which keep raw
/// counts (they cannot be extended to the left). The unigram level
/// interpolates with the uniform distribution over the predictable
/// vocabulary including `<unk>`, which is where the unknown-word mass
/// comes from.
fn estimate_kneser_ney(counts: &[CountMap]) -> Vec<HashMap<Box<[u32]>, GramEntry>> {
    let n = counts.len();
    let d = KN_DISCOUNT;

    let mut adjusted: Vec<CountMap> = Vec::with_capacity(n);
    for ord_idx in 0..n {
        if ord_idx == n - 1 {
            adjusted.push(counts[ord_idx].clone());
        } else {
            let mut adj: CountMap = HashMap::new();
            for key in counts[ord_idx + 1].keys() {
                *adj.entry(key[1..].into()).or_insert(0) += 1;
            }
            for (key, &c) in &counts[ord_idx] {
                if key[0] == BOS_ID {
                    adj.insert(key.clone(), c);
                }
            }
            adjusted.push(adj);
        }
    }

    let groups: Vec<HashMap<Box<[u32]>, (u64, u64)>> = adjusted
        .iter()
        .enumerate()
        .map(|(ord_idx, adj)| group_stats(adj, ord_idx))
        .collect();

    // Linear-space probabilities, lowest order first.
    let mut plin: Vec<HashMap<Box<[u32]>, f64>> = Vec::with_capacity(n);
    let empty: &[u32] = &[];
    let (s0, t0) = groups[0][empty];
    let pred_vocab = adjusted[0].len() as f64 + 1.0; // seen types + <unk>
    let gamma0 = d * t0 as f64 / s0 as f64;
    let uniform = 1.0 / pred_vocab;
    let mut uni: HashMap<Box<[u32]>, f64> = HashMap::new();
    uni.insert(Box::from(&[UNK_ID][..]), gamma0 * uniform);
    for (key, &a) in &adjusted[0] {
        uni.insert(key.clone(), (a as f64 - d) / s0 as f64 + gamma0 * uniform);
    }
    plin.push(uni);
    for ord_idx in 1..n {
        let mut level: HashMap<Box<[u32]>, f64> = HashMap::new();
        for (key, &a) in &adjusted[ord_idx] {
            let (s, t) = groups[ord_idx][&key[..ord_idx]];
            let gamma = d * t as f64 / s as f64;
            let lower = plin[ord_idx - 1][&key[1..]];
            level.insert(key.clone(), (a as f64 - d) / s as f64 + gamma * lower);
        }
        plin.push(level);
    }

    let mut grams: Vec<HashMap<Box<[u32]>, GramEntry>> = plin
        .into_iter()
        .map(|level| {
            level
                .into_iter()
                .map(|(key, p)| {
                    (
                        key,
                        GramEntry {
                            logprob: p.log10(),
                            backoff: None,
                        },
                    )
                })
                .collect()
        })
        .collect();
    grams[0].insert(
        Box::from(&[BOS_ID][..]),
        GramEntry {
            logprob: MISSING_LOG10,
            backoff: None,
        },
    );
    // Backoff weight of h is the discount mass gamma(h) of the next order.
    for ord_idx in 1..n {
        for (h, &(s, t)) in &groups[ord_idx] {
            let entry = grams[ord_idx - 1]
                .get_mut(h)
                .expect("history of a counted n-gram must itself be stored");
            entry.backoff = Some((d * t as f64 / s as f64).log10());
        }
    }
    grams
}

/// Unsmoothed MLE: P(w|h) = c(h,w) / sum_w' c(h,w'). No backoff weights.
fn estimate_mle(counts: &[CountMap]) -> Vec<HashMap<Box<[u32]>, GramEntry>> {
    let mut grams: Vec<HashMap<Box<[u32]>, GramEntry>> = Vec::with_capacity(counts.len());
    for (ord_idx, level) in counts.iter().enumerate() {
        let groups = group_stats(level, ord_idx);
        grams.push(
            level
                .iter()
                .map(|(key, &c)| {
                    let (s, _) = groups[&key[..ord_idx]];
                    (
                        key.clone(),
                        GramEntry {
                            logprob: (c as f64 / s as f64).log10(),
                            backoff: None,
                        },
                    )
                })
                .collect(),
        );
    }
    grams[0].insert(
        Box::from(&[BOS_ID][..]),
        GramEntry {
            logprob: MISSING_LOG10,
            backoff: None,
        },
    );
    grams
}
