use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use monoprep::corpus::{corpus_stats, read_lines, write_lines, LengthDistribution, SelectionReport};
use monoprep::mass::{generate_mass_examples, write_examples, MaskConfig};
use monoprep::mixing::{oversample_mix, LanguageCorpus};
use monoprep::ngram::{Granularity, NGramModel, Smoothing};
use monoprep::normalize::{run_filter_pipeline, run_normalize, FilterRule};
use monoprep::recipe::{run_recipe, validate_recipe, PipelineRecipe};
use monoprep::script_map::{map_lm_scored, map_one_to_one, MappingTable, DEFAULT_CANDIDATE_CAP};
use monoprep::selection::{
    read_scores, select_combined, select_length_distribution, select_lm_top_n, select_random,
};

/// Corpus preparation for sequence-to-sequence pre-training: normalize,
/// filter, map scripts, train and apply n-gram LMs, select, mix, and emit
/// masked training examples.
#[derive(Parser)]
#[command(name = "monoprep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// NFKC-normalize stdin to stdout, one line at a time
    Normalize {
        #[arg(short, long)]
        input: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Apply token-count and CJK/ASCII ratio filters
    Filter {
        #[arg(long, default_value_t = 3)]
        min_tokens: usize,
        #[arg(long, default_value_t = 80)]
        max_tokens: usize,
        /// Enable the CJK ratio filter; reject lines whose CJK token
        /// fraction is strictly below this
        #[arg(long)]
        cjk_ratio: Option<f64>,
        /// Reject lines whose ASCII-alphabetic token fraction is strictly
        /// above this (only with --cjk-ratio)
        #[arg(long)]
        ascii_ratio: Option<f64>,
        /// NFKC-normalize before filtering
        #[arg(long)]
        nfkc: bool,
        #[arg(short, long)]
        input: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Character-level script conversion driven by a mapping table
    MapScript {
        #[arg(long)]
        table: PathBuf,
        /// one-to-one | lm-scored
        #[arg(long, default_value = "one-to-one")]
        mode: String,
        /// Character-level ARPA LM (lm-scored mode)
        #[arg(long)]
        lm: Option<PathBuf>,
        /// Candidate-combination cap before one-to-one fallback
        #[arg(long, default_value_t = DEFAULT_CANDIDATE_CAP)]
        cap: u64,
        #[arg(short, long)]
        input: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train a Kneser-Ney n-gram LM and write it as ARPA
    LmTrain {
        #[arg(long, default_value_t = 5)]
        order: usize,
        /// Character-level model (default is token-level)
        #[arg(long)]
        char: bool,
        /// Unsmoothed maximum-likelihood estimation (diagnostic)
        #[arg(long)]
        mle: bool,
        #[arg(short, long)]
        input: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score each line with an ARPA LM; emits `score<TAB>line`
    LmScore {
        #[arg(long)]
        lm: PathBuf,
        /// Emit per-token scores instead of totals
        #[arg(long)]
        per_token: bool,
        #[arg(long)]
        char: bool,
        #[arg(short, long)]
        input: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Select lines: random | lm | ld | lm-ld
    Select {
        #[arg(long)]
        method: String,
        #[arg(short, long)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Length-distribution TSV target (ld methods)
        #[arg(long)]
        target_dist: Option<PathBuf>,
        /// Corpus whose length distribution is the target (ld methods)
        #[arg(long)]
        target_file: Option<PathBuf>,
        /// Scores TSV from lm-score (lm methods)
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Emit top-N output in original file order instead of score order
        #[arg(long)]
        original_order: bool,
        #[arg(short, long)]
        input: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Mix tagged corpora (tag:path ...), oversampling to the largest
    Mix {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// tag:path pairs
        #[arg(required = true)]
        corpora: Vec<String>,
        #[arg(short, long)]
        output: PathBuf,
        /// Sidecar `line_index<TAB>tag` file
        #[arg(long)]
        tags: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Emit masked fragment-prediction examples as TSV
    MassGen {
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Tag sidecar aligned with the input
        #[arg(long)]
        tags: Option<PathBuf>,
        #[arg(long, default_value = "xx")]
        default_tag: String,
        #[arg(long, default_value = "<mask>")]
        mask_token: String,
        #[arg(short, long)]
        input: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Exact line/token/length statistics of a corpus, as JSON
    Stats {
        #[arg(short, long)]
        input: Option<PathBuf>,
        /// Also write the length distribution TSV here
        #[arg(long)]
        length_dist: Option<PathBuf>,
    },
    /// Execute a pipeline recipe and write its manifest
    Run {
        recipe: PathBuf,
        /// Directory recipe paths are resolved against (default: recipe dir)
        #[arg(long)]
        base: Option<PathBuf>,
        #[arg(long, default_value = "manifest.json")]
        manifest: PathBuf,
    },
    /// Check a recipe against ordering and path constraints
    Validate {
        recipe: PathBuf,
        #[arg(long)]
        base: Option<PathBuf>,
    },
}

fn reader(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn BufRead>> {
    Ok(match path {
        Some(p) => Box::new(BufReader::new(
            std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?,
        )),
        None => Box::new(BufReader::new(std::io::stdin())),
    })
}

fn writer(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn input_lines(path: &Option<PathBuf>) -> anyhow::Result<Vec<String>> {
    match path {
        Some(p) => Ok(read_lines(p)?),
        None => {
            let mut buf = String::new();
            std::io::stdin().read_to_string(&mut buf)?;
            Ok(buf.lines().map(str::to_string).collect())
        }
    }
}

fn emit_report(path: &Option<PathBuf>, report: &SelectionReport) -> anyhow::Result<()> {
    if let Some(p) = path {
        let f = std::fs::File::create(p)?;
        serde_json::to_writer_pretty(BufWriter::new(f), report)?;
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Normalize { input, output, report } => {
            let r = run_normalize(reader(&input)?, writer(&output)?)?;
            emit_report(&report, &r)?;
        }
        Command::Filter {
            min_tokens,
            max_tokens,
            cjk_ratio,
            ascii_ratio,
            nfkc,
            input,
            output,
            report,
        } => {
            let rule = FilterRule {
                min_tokens,
                max_tokens,
                cjk_min_ratio: cjk_ratio.unwrap_or(0.30),
                ascii_max_ratio: ascii_ratio.unwrap_or(0.30),
                cjk_filter_enabled: cjk_ratio.is_some() || ascii_ratio.is_some(),
            };
            let r = run_filter_pipeline(reader(&input)?, writer(&output)?, &rule, nfkc)?;
            emit_report(&report, &r)?;
        }
        Command::MapScript {
            table,
            mode,
            lm,
            cap,
            input,
            output,
            report,
        } => {
            let table = MappingTable::from_file(&table)?;
            let mut out = writer(&output)?;
            let mut rep = SelectionReport::new();
            match mode.as_str() {
                "one-to-one" => {
                    for line in reader(&input)?.lines() {
                        writeln!(out, "{}", map_one_to_one(&line?, &table))?;
                        rep.select();
                    }
                }
                "lm-scored" => {
                    let lm_path = lm.context("--lm is required in lm-scored mode")?;
                    let lm = NGramModel::import_arpa_from(&lm_path, Granularity::Char)?;
                    let mut fallbacks = 0;
                    for line in reader(&input)?.lines() {
                        let (mapped, f) = map_lm_scored(&line?, &table, &lm, cap);
                        fallbacks += f;
                        writeln!(out, "{mapped}")?;
                        rep.select();
                    }
                    if fallbacks > 0 {
                        eprintln!("monoprep: {fallbacks} token(s) exceeded the candidate cap; used one-to-one fallback");
                    }
                }
                other => bail!("--mode must be one-to-one or lm-scored, got {other:?}"),
            }
            emit_report(&report, &rep)?;
        }
        Command::LmTrain {
            order,
            char,
            mle,
            input,
            output,
        } => {
            let lines = input_lines(&input)?;
            let granularity = if char { Granularity::Char } else { Granularity::Token };
            let smoothing = if mle { Smoothing::MleDiagnostic } else { Smoothing::KneserNey };
            let model = NGramModel::train(&lines, order, granularity, smoothing)?;
            model.export_arpa_to(&output)?;
        }
        Command::LmScore {
            lm,
            per_token,
            char,
            input,
            output,
        } => {
            let granularity = if char { Granularity::Char } else { Granularity::Token };
            let model = NGramModel::import_arpa_from(&lm, granularity)?;
            let mut out = writer(&output)?;
            for line in reader(&input)?.lines() {
                let line = line?;
                let score = model.score_sentence(&line);
                let value = if per_token {
                    score.per_token_log10()
                } else {
                    score.total_log10
                };
                writeln!(out, "{value}\t{line}")?;
            }
        }
        Command::Select {
            method,
            n,
            seed,
            target_dist,
            target_file,
            scores,
            original_order,
            input,
            output,
            report,
        } => {
            if n == 0 {
                bail!("--n must be >= 1");
            }
            let lines = input_lines(&input)?;
            let load_target = || -> anyhow::Result<LengthDistribution> {
                if let Some(p) = &target_dist {
                    Ok(LengthDistribution::from_file(p)?)
                } else if let Some(p) = &target_file {
                    Ok(monoprep::corpus::compute_length_distribution(&read_lines(p)?))
                } else {
                    bail!("--target-dist or --target-file is required for length-distribution methods")
                }
            };
            let load_scores = || -> anyhow::Result<Vec<f64>> {
                let p = scores
                    .as_ref()
                    .context("--scores is required for LM methods")?;
                let f = std::fs::File::open(p)?;
                Ok(read_scores(BufReader::new(f), &p.display().to_string())?)
            };
            let (selected, rep) = match method.as_str() {
                "random" => select_random(lines, n as usize, seed),
                "lm" => select_lm_top_n(lines, &load_scores()?, n as usize, original_order)?,
                "ld" => select_length_distribution(&lines, &load_target()?, n)?,
                "lm-ld" => select_combined(lines, &load_scores()?, &load_target()?, n)?,
                other => bail!("--method must be random|lm|ld|lm-ld, got {other:?}"),
            };
            if rep.lines_selected < n {
                eprintln!(
                    "monoprep: selection under-filled: {} of {} requested lines",
                    rep.lines_selected, n
                );
            }
            write_lines(writer(&output)?, &selected)?;
            emit_report(&report, &rep)?;
        }
        Command::Mix {
            seed,
            corpora,
            output,
            tags,
            report,
        } => {
            let mut list = Vec::new();
            for pair in &corpora {
                let (tag, path) = pair
                    .split_once(':')
                    .with_context(|| format!("corpus must be tag:path, got {pair:?}"))?;
                list.push(LanguageCorpus {
                    tag: tag.to_string(),
                    lines: read_lines(std::path::Path::new(path))?,
                });
            }
            let (mixed, rep) = oversample_mix(&list, seed)?;
            let mut out = BufWriter::new(std::fs::File::create(&output)?);
            let mut tags_out = BufWriter::new(std::fs::File::create(&tags)?);
            for (i, t) in mixed.iter().enumerate() {
                writeln!(out, "{}", t.line)?;
                writeln!(tags_out, "{i}\t{}", t.tag)?;
            }
            emit_report(&report, &rep)?;
        }
        Command::MassGen {
            fraction,
            seed,
            tags,
            default_tag,
            mask_token,
            input,
            output,
            report,
        } => {
            let lines = input_lines(&input)?;
            let tag_list = match &tags {
                Some(p) => {
                    let mut out = Vec::new();
                    for (i, line) in read_lines(p)?.into_iter().enumerate() {
                        let tag = line
                            .split('\t')
                            .nth(1)
                            .with_context(|| format!("{}:{}: expected line_index<TAB>tag", p.display(), i + 1))?;
                        out.push(tag.to_string());
                    }
                    Some(out)
                }
                None => None,
            };
            let config = MaskConfig {
                mask_fraction: fraction,
                seed,
                mask_token,
            };
            let (examples, rep) =
                generate_mass_examples(&lines, tag_list.as_deref(), &default_tag, &config)?;
            write_examples(writer(&output)?, &examples)?;
            emit_report(&report, &rep)?;
        }
        Command::Stats { input, length_dist } => {
            let lines = input_lines(&input)?;
            let stats = corpus_stats(&lines);
            if let Some(p) = &length_dist {
                let dist = monoprep::corpus::compute_length_distribution(&lines);
                dist.write_tsv(BufWriter::new(std::fs::File::create(p)?))?;
            }
            serde_json::to_writer_pretty(std::io::stdout(), &stats)?;
            println!();
        }
        Command::Run {
            recipe,
            base,
            manifest,
        } => {
            let base = base.unwrap_or_else(|| {
                recipe
                    .parent()
                    .map(PathBuf::from)
                    .filter(|p| !p.as_os_str().is_empty())
                    .unwrap_or_else(|| PathBuf::from("."))
            });
            let parsed = PipelineRecipe::from_file(&recipe)?;
            let result = run_recipe(&parsed, &base)?;
            let f = std::fs::File::create(&manifest)?;
            result.write_json(BufWriter::new(f))?;
            if let Some(failed) = result.failed_stage() {
                bail!(
                    "stage '{}' failed: {}",
                    failed.name,
                    failed.error.as_deref().unwrap_or("unknown error")
                );
            }
        }
        Command::Validate { recipe, base } => {
            let base = base.unwrap_or_else(|| {
                recipe
                    .parent()
                    .map(PathBuf::from)
                    .filter(|p| !p.as_os_str().is_empty())
                    .unwrap_or_else(|| PathBuf::from("."))
            });
            let parsed = PipelineRecipe::from_file(&recipe)?;
            let violations = validate_recipe(&parsed, &base);
            if violations.is_empty() {
                eprintln!("recipe OK: {} stage(s)", parsed.stages.len());
            } else {
                for v in &violations {
                    eprintln!("violation: {v}");
                }
                bail!("{} violation(s)", violations.len());
            }
        }
    }
    Ok(())
}
