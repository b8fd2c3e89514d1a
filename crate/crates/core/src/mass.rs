//! Masked fragment-prediction training examples: for each sentence a
//! contiguous span is replaced by mask tokens on the encoder side and
//! becomes the decoder target.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::corpus::SelectionReport;
use crate::{derive_seed, Error, Result};

pub const DEFAULT_MASK_TOKEN: &str = "<mask>";
pub const DEFAULT_MASK_FRACTION: f64 = 0.5;
pub const REASON_EMPTY: &str = "empty";

#[derive(Debug, Clone)]
pub struct MaskConfig {
    /// Fraction of each sentence to mask, in (0, 1].
    pub mask_fraction: f64,
    pub seed: u64,
    pub mask_token: String,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            mask_fraction: DEFAULT_MASK_FRACTION,
            seed: 0,
            mask_token: DEFAULT_MASK_TOKEN.to_string(),
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_fraction > 0.0 && self.mask_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "mask fraction must lie in (0,1], got {}",
                self.mask_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MassExample {
    pub language_tag: String,
    pub span_start: usize,
    pub span_len: usize,
    /// Original token sequence with the span replaced by mask tokens.
    pub encoder_input: Vec<String>,
    /// The masked fragment, in order.
    pub decoder_target: Vec<String>,
}

/// Span length is max(1, round(fraction * m)); the start is uniform over
/// the legal positions, deterministic per (seed, line index).
pub fn generate_example(
    tokens: &[String],
    tag: &str,
    line_index: u64,
    config: &MaskConfig,
) -> MassExample {
    let m = tokens.len();
    debug_assert!(m >= 1);
    let span_len = ((config.mask_fraction * m as f64).round() as usize).clamp(1, m);
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(config.seed, line_index));
    let span_start = rng.gen_range(0..=m - span_len);
    let mut encoder_input = tokens.to_vec();
    let decoder_target = encoder_input[span_start..span_start + span_len].to_vec();
    for slot in &mut encoder_input[span_start..span_start + span_len] {
        *slot = config.mask_token.clone();
    }
    MassExample {
        language_tag: tag.to_string(),
        span_start,
        span_len,
        encoder_input,
        decoder_target,
    }
}

/// True iff splicing the decoder target back into the encoder input at the
/// masked span reproduces the original token sequence exactly.
pub fn verify_example(example: &MassExample, original_tokens: &[String]) -> bool {
    if example.span_len != example.decoder_target.len()
        || example.encoder_input.len() != original_tokens.len()
        || example.span_start + example.span_len > original_tokens.len()
    {
        return false;
    }
    let mut restored = example.encoder_input.clone();
    for (slot, tok) in restored[example.span_start..example.span_start + example.span_len]
        .iter_mut()
        .zip(&example.decoder_target)
    {
        *slot = tok.clone();
    }
    restored == original_tokens
}

/// One example per non-blank input line, in order; blank lines are skipped
/// and counted. `tags` aligns with `lines` when present; otherwise every
/// example carries `default_tag`.
pub fn generate_mass_examples(
    lines: &[String],
    tags: Option<&[String]>,
    default_tag: &str,
    config: &MaskConfig,
) -> Result<(Vec<MassExample>, SelectionReport)> {
    config.validate()?;
    if let Some(tags) = tags {
        if tags.len() != lines.len() {
            return Err(Error::ScoreMismatch {
                scores: tags.len(),
                lines: lines.len(),
            });
        }
    }
    let mut report = SelectionReport::with_seed(config.seed);
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let tokens: Vec<String> = line
            .split_ascii_whitespace()
            .map(str::to_string)
            .collect();
        if tokens.is_empty() {
            report.reject(REASON_EMPTY);
            continue;
        }
        let tag = tags.map_or(default_tag, |t| t[i].as_str());
        out.push(generate_example(&tokens, tag, i as u64, config));
        report.select();
    }
    Ok((out, report))
}

/// TSV: `language_tag<TAB>span_start<TAB>span_len<TAB>encoder<TAB>target`.
pub fn write_examples<W: Write>(mut w: W, examples: &[MassExample]) -> Result<()> {
    for e in examples {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            e.language_tag,
            e.span_start,
            e.span_len,
            e.encoder_input.join(" "),
            e.decoder_target.join(" ")
        )?;
    }
    Ok(())
}
