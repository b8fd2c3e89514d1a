//! Data selection: seeded random sampling, LM-score top-N, single-pass
//! length-distribution selection, and the LM-then-length combination.

use std::io::BufRead;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::corpus::{LengthDistribution, SelectionReport, Sentence};
use crate::{Error, Result};

pub const REASON_NOT_SAMPLED: &str = "not_sampled";
pub const REASON_BELOW_TOP_N: &str = "below_top_n";
pub const REASON_LENGTH_NOT_IN_TARGET: &str = "length_not_in_target";
pub const REASON_BUCKET_FULL: &str = "length_bucket_full";

/// Uniform sample without replacement of min(n, len) lines, emitted in
/// original corpus order; deterministic given the seed.
pub fn select_random(lines: Vec<String>, n: usize, seed: u64) -> (Vec<String>, SelectionReport) {
    let mut report = SelectionReport::with_seed(seed);
    let take = n.min(lines.len());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, lines.len(), take).into_vec();
    picked.sort_unstable();
    let mut keep = vec![false; lines.len()];
    for i in picked {
        keep[i] = true;
    }
    let mut out = Vec::with_capacity(take);
    for (i, line) in lines.into_iter().enumerate() {
        if keep[i] {
            report.select();
            out.push(line);
        } else {
            report.reject(REASON_NOT_SAMPLED);
        }
    }
    (out, report)
}

/// Indices of all lines ordered by descending score, ties broken by earlier
/// line index.
fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// The n highest-scoring lines, emitted in descending-score order (set
/// `original_order` to restore file order instead).
pub fn select_lm_top_n(
    lines: Vec<String>,
    scores: &[f64],
    n: usize,
    original_order: bool,
) -> Result<(Vec<String>, SelectionReport)> {
    if scores.len() != lines.len() {
        return Err(Error::ScoreMismatch {
            scores: scores.len(),
            lines: lines.len(),
        });
    }
    let mut report = SelectionReport::new();
    let take = n.min(lines.len());
    let mut picked = rank_by_score(scores);
    picked.truncate(take);
    report.lines_read = lines.len() as u64;
    report.lines_selected = take as u64;
    if lines.len() > take {
        report
            .rejections
            .insert(REASON_BELOW_TOP_N.to_string(), (lines.len() - take) as u64);
    }
    if original_order {
        picked.sort_unstable();
    }
    let out = picked.iter().map(|&i| lines[i].clone()).collect();
    Ok((out, report))
}

/// Single-pass length-distribution selection: a line of token length L is
/// admitted iff, at its arrival, current[L]/select_num < target[L]/target
/// total. The comparison is exact integer cross-multiplication, so
/// boundary cases where the ratios are equal reject on every platform.
/// Lengths absent from the target are never selected. One pass only; an
/// under-filled result is reported, not retried.
pub fn select_length_distribution<I, S>(
    input: I,
    target: &LengthDistribution,
    select_num: u64,
) -> Result<(Vec<String>, SelectionReport)>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if target.total == 0 {
        return Err(Error::Config(
            "length-distribution target is empty".into(),
        ));
    }
    if select_num == 0 {
        return Err(Error::Config("select_num must be >= 1".into()));
    }
    let mut current = LengthDistribution::new();
    let mut report = SelectionReport::new();
    let mut out = Vec::new();
    for line in input {
        let line = line.as_ref();
        let len = Sentence::new(line).len();
        let wanted = target.count(len);
        if wanted == 0 {
            report.reject(REASON_LENGTH_NOT_IN_TARGET);
            continue;
        }
        // current[L]/select_num < target[L]/target.total
        if (current.count(len) as u128) * (target.total as u128)
            < (wanted as u128) * (select_num as u128)
        {
            current.add(len);
            report.select();
            out.push(line.to_string());
        } else {
            report.reject(REASON_BUCKET_FULL);
        }
    }
    Ok((out, report))
}

/// LM-then-length combination: full sort by descending score (index
/// tie-break), then length-distribution selection over the sorted stream.
pub fn select_combined(
    lines: Vec<String>,
    scores: &[f64],
    target: &LengthDistribution,
    select_num: u64,
) -> Result<(Vec<String>, SelectionReport)> {
    if scores.len() != lines.len() {
        return Err(Error::ScoreMismatch {
            scores: scores.len(),
            lines: lines.len(),
        });
    }
    let order = rank_by_score(scores);
    let sorted = order.iter().map(|&i| lines[i].as_str());
    select_length_distribution(sorted, target, select_num)
}

/// Parse the `score<TAB>line` TSV produced by LM scoring.
pub fn read_scores<R: BufRead>(r: R, path: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let field = line.split('\t').next().unwrap_or("");
        let score: f64 = field.parse().map_err(|_| Error::Parse {
            path: path.to_string(),
            line: i + 1,
            msg: format!("bad score {field:?}"),
        })?;
        out.push(score);
    }
    Ok(out)
}
