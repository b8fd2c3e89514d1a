//! Pipeline recipes: a plain-text section file describing an ordered list
//! of stages, executed with per-stage reports, output checksums, and a
//! JSON manifest. All randomness derives from one global seed so reruns
//! are byte-identical.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::corpus::{
    compute_length_distribution, corpus_stats, read_lines, write_lines, LengthDistribution,
    SelectionReport,
};
use crate::mass::{generate_mass_examples, write_examples, MaskConfig};
use crate::mixing::{oversample_mix, LanguageCorpus};
use crate::ngram::{Granularity, NGramModel, Smoothing};
use crate::normalize::{run_filter_pipeline, run_normalize, FilterRule};
use crate::script_map::{map_lm_scored, map_one_to_one, MappingTable, DEFAULT_CANDIDATE_CAP};
use crate::selection::{
    read_scores, select_combined, select_length_distribution, select_lm_top_n, select_random,
};
use crate::{derive_seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageKind {
    Normalize,
    Filter,
    MapScript,
    LmTrain,
    LmScore,
    Select,
    Mix,
    MassGen,
    Stats,
}

impl StageKind {
    fn from_name(name: &str) -> Option<StageKind> {
        Some(match name {
            "normalize" => StageKind::Normalize,
            "filter" => StageKind::Filter,
            "map-script" => StageKind::MapScript,
            "lm-train" => StageKind::LmTrain,
            "lm-score" => StageKind::LmScore,
            "select" => StageKind::Select,
            "mix" => StageKind::Mix,
            "mass-gen" => StageKind::MassGen,
            "stats" => StageKind::Stats,
            _ => return None,
        })
    }

    fn name(&self) -> &'static str {
        match self {
            StageKind::Normalize => "normalize",
            StageKind::Filter => "filter",
            StageKind::MapScript => "map-script",
            StageKind::LmTrain => "lm-train",
            StageKind::LmScore => "lm-score",
            StageKind::Select => "select",
            StageKind::Mix => "mix",
            StageKind::MassGen => "mass-gen",
            StageKind::Stats => "stats",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stage {
    pub kind: StageKind,
    pub name: String,
    pub params: BTreeMap<String, String>,
}

impl Stage {
    fn get(&self, key: &str) -> Option<&str> {
        self.params.get(key).map(String::as_str)
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| {
            Error::Recipe(format!(
                "stage '{}' ({}) is missing required key '{key}'",
                self.name,
                self.kind.name()
            ))
        })
    }

    fn parse_num<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                Error::Recipe(format!(
                    "stage '{}': key '{key}' has unparsable value {v:?}",
                    self.name
                ))
            }),
        }
    }

    /// Paths this stage reads: (key, path) pairs.
    fn input_paths(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        for key in ["input", "table", "lm", "scores", "target-file", "target-dist", "tags-in"] {
            if let Some(v) = self.get(key) {
                out.push((key, v.to_string()));
            }
        }
        if let Some(v) = self.get("inputs") {
            for part in v.split_whitespace() {
                let path = part.split_once(':').map(|(_, p)| p).unwrap_or(part);
                out.push(("inputs", path.to_string()));
            }
        }
        out
    }

    /// Paths this stage writes.
    fn output_paths(&self) -> Vec<String> {
        let mut out = Vec::new();
        for key in ["output", "tags"] {
            if let Some(v) = self.get(key) {
                out.push(v.to_string());
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct PipelineRecipe {
    pub seed: u64,
    pub stages: Vec<Stage>,
}

impl PipelineRecipe {
    /// Section file: top-level `seed = N`, then `[kind name]` sections with
    /// `key = value` lines. `#` starts a comment line.
    pub fn parse<R: BufRead>(r: R, path: &str) -> Result<PipelineRecipe> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_string(),
            line,
            msg,
        };
        let mut seed = 0u64;
        let mut stages: Vec<Stage> = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(section) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let mut parts = section.split_whitespace();
                let kind_name = parts.next().unwrap_or("");
                let kind = StageKind::from_name(kind_name)
                    .ok_or_else(|| err(i + 1, format!("unknown stage kind {kind_name:?}")))?;
                let name = parts
                    .next()
                    .map(str::to_string)
                    .unwrap_or_else(|| format!("{}{}", kind.name(), stages.len() + 1));
                if parts.next().is_some() {
                    return Err(err(i + 1, format!("malformed section header {line:?}")));
                }
                if stages.iter().any(|s| s.name == name) {
                    return Err(err(i + 1, format!("duplicate stage name {name:?}")));
                }
                stages.push(Stage {
                    kind,
                    name,
                    params: BTreeMap::new(),
                });
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(i + 1, format!("expected 'key = value', got {line:?}")))?;
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            match stages.last_mut() {
                None => {
                    if key == "seed" {
                        seed = value
                            .parse()
                            .map_err(|_| err(i + 1, format!("bad seed {value:?}")))?;
                    } else {
                        return Err(err(i + 1, format!("unexpected top-level key {key:?}")));
                    }
                }
                Some(stage) => {
                    if stage.params.insert(key.clone(), value).is_some() {
                        return Err(err(i + 1, format!("duplicate key {key:?}")));
                    }
                }
            }
        }
        Ok(PipelineRecipe { seed, stages })
    }

    pub fn from_file(path: &Path) -> Result<PipelineRecipe> {
        let f = std::fs::File::open(path)?;
        Self::parse(BufReader::new(f), &path.display().to_string())
    }
}

/// Ordering rules: when both kinds occur, every later-kind stage must be
/// preceded by some earlier-kind stage.
const ORDER_RULES: &[(StageKind, StageKind, &str)] = &[
    (StageKind::Normalize, StageKind::Filter, "filter requires normalized input"),
    (StageKind::Filter, StageKind::MapScript, "map-script requires filtered input"),
    (StageKind::Filter, StageKind::Select, "select requires filtered input"),
    (StageKind::Mix, StageKind::MassGen, "mass-gen requires mixed input"),
];

/// Static checks; violations are data, not errors. A recipe is runnable
/// iff this returns an empty list. Input paths must be either a prior
/// stage's output or a file present under `base`.
pub fn validate_recipe(recipe: &PipelineRecipe, base: &Path) -> Vec<String> {
    let mut violations = Vec::new();
    if recipe.stages.is_empty() {
        violations.push("no stages".to_string());
        return violations;
    }
    for (earlier, later, msg) in ORDER_RULES {
        let has_earlier = recipe.stages.iter().any(|s| s.kind == *earlier);
        if !has_earlier {
            continue;
        }
        for (i, stage) in recipe.stages.iter().enumerate() {
            if stage.kind == *later
                && !recipe.stages[..i].iter().any(|s| s.kind == *earlier)
            {
                violations.push(format!("stage '{}': {msg}", stage.name));
            }
        }
    }
    let mut produced: HashSet<String> = HashSet::new();
    for stage in &recipe.stages {
        for (_, path) in stage.input_paths() {
            if !produced.contains(&path) && !base.join(&path).is_file() {
                violations.push(format!(
                    "stage '{}': dangling input path '{path}'",
                    stage.name
                ));
            }
        }
        for path in stage.output_paths() {
            if !produced.insert(path.clone()) {
                violations.push(format!(
                    "stage '{}': output path '{path}' already produced",
                    stage.name
                ));
            }
        }
    }
    violations
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub kind: StageKind,
    pub status: String,
    pub elapsed_ms: u64,
    pub report: SelectionReport,
    /// output path -> sha256 hex
    pub checksums: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub counters: BTreeMap<String, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub seed: u64,
    pub status: String,
    pub elapsed_ms: u64,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn failed_stage(&self) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.status == "failed")
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(|e| Error::Recipe(e.to_string()))
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut f, &mut hasher)?;
    Ok(format!("{:x}", hasher.finalize()))
}

fn open_out(path: &Path) -> Result<BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(std::fs::File::create(path)?))
}

fn read_tags(path: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (i, line) in read_lines(path)?.into_iter().enumerate() {
        let tag = line.split('\t').nth(1).ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: "expected 'line_index<TAB>tag'".into(),
        })?;
        out.push(tag.to_string());
    }
    Ok(out)
}

fn granularity_param(stage: &Stage) -> Result<Granularity> {
    match stage.get("granularity").unwrap_or("token") {
        "token" => Ok(Granularity::Token),
        "char" => Ok(Granularity::Char),
        other => Err(Error::Recipe(format!(
            "stage '{}': granularity must be token|char, got {other:?}",
            stage.name
        ))),
    }
}

/// Run one stage; returns its report plus auxiliary counters.
fn exec_stage(
    stage: &Stage,
    base: &Path,
    stage_seed: u64,
) -> Result<(SelectionReport, BTreeMap<String, u64>)> {
    let p = |s: &str| base.join(s);
    let mut counters = BTreeMap::new();
    let report = match stage.kind {
        StageKind::Normalize => {
            let input = std::fs::File::open(p(stage.require("input")?))?;
            let mut out = open_out(&p(stage.require("output")?))?;
            run_normalize(BufReader::new(input), &mut out)?
        }
        StageKind::Filter => {
            let rule = FilterRule {
                min_tokens: stage.parse_num("min-tokens", 3)?,
                max_tokens: stage.parse_num("max-tokens", 80)?,
                cjk_min_ratio: stage.parse_num("cjk-ratio", 0.30)?,
                ascii_max_ratio: stage.parse_num("ascii-ratio", 0.30)?,
                cjk_filter_enabled: stage.parse_num("cjk-filter", false)?,
            };
            let input = std::fs::File::open(p(stage.require("input")?))?;
            let mut out = open_out(&p(stage.require("output")?))?;
            run_filter_pipeline(BufReader::new(input), &mut out, &rule, false)?
        }
        StageKind::MapScript => {
            let table = MappingTable::from_file(&p(stage.require("table")?))?;
            let lines = read_lines(&p(stage.require("input")?))?;
            let mut out = open_out(&p(stage.require("output")?))?;
            let mut report = SelectionReport::new();
            match stage.get("mode").unwrap_or("one-to-one") {
                "one-to-one" => {
                    for line in &lines {
                        writeln!(out, "{}", map_one_to_one(line, &table))?;
                        report.select();
                    }
                }
                "lm-scored" => {
                    let lm = NGramModel::import_arpa_from(
                        &p(stage.require("lm")?),
                        Granularity::Char,
                    )?;
                    let cap = stage.parse_num("cap", DEFAULT_CANDIDATE_CAP)?;
                    let mut fallbacks = 0;
                    for line in &lines {
                        let (mapped, f) = map_lm_scored(line, &table, &lm, cap);
                        fallbacks += f;
                        writeln!(out, "{mapped}")?;
                        report.select();
                    }
                    counters.insert("cap_fallback_tokens".into(), fallbacks);
                }
                other => {
                    return Err(Error::Recipe(format!(
                        "stage '{}': mode must be one-to-one|lm-scored, got {other:?}",
                        stage.name
                    )))
                }
            }
            report
        }
        StageKind::LmTrain => {
            let lines = read_lines(&p(stage.require("input")?))?;
            let order = stage.parse_num("order", 5)?;
            let model = NGramModel::train(
                &lines,
                order,
                granularity_param(stage)?,
                Smoothing::KneserNey,
            )?;
            model.export_arpa_to(&p(stage.require("output")?))?;
            let mut report = SelectionReport::new();
            report.lines_read = lines.len() as u64;
            report.lines_selected = lines.len() as u64;
            report
        }
        StageKind::LmScore => {
            let lm = NGramModel::import_arpa_from(&p(stage.require("lm")?), granularity_param(stage)?)?;
            let lines = read_lines(&p(stage.require("input")?))?;
            let mut out = open_out(&p(stage.require("output")?))?;
            for line in &lines {
                let score = lm.score_sentence(line);
                writeln!(out, "{}\t{}", score.total_log10, line)?;
            }
            let mut report = SelectionReport::new();
            report.lines_read = lines.len() as u64;
            report.lines_selected = lines.len() as u64;
            report
        }
        StageKind::Select => {
            let lines = read_lines(&p(stage.require("input")?))?;
            let n: u64 = stage.parse_num("n", 0)?;
            if n == 0 {
                return Err(Error::Recipe(format!(
                    "stage '{}': select requires n >= 1",
                    stage.name
                )));
            }
            let load_target = || -> Result<LengthDistribution> {
                if let Some(path) = stage.get("target-dist") {
                    LengthDistribution::from_file(&p(path))
                } else {
                    let target_lines = read_lines(&p(stage.require("target-file")?))?;
                    Ok(compute_length_distribution(&target_lines))
                }
            };
            let load_scores = || -> Result<Vec<f64>> {
                let path = p(stage.require("scores")?);
                let f = std::fs::File::open(&path)?;
                read_scores(BufReader::new(f), &path.display().to_string())
            };
            let (selected, report) = match stage.require("method")? {
                "random" => {
                    let seed = stage.parse_num("seed", stage_seed)?;
                    let (s, r) = select_random(lines, n as usize, seed);
                    (s, r)
                }
                "lm" => select_lm_top_n(lines, &load_scores()?, n as usize, false)?,
                "ld" => select_length_distribution(&lines, &load_target()?, n)?,
                "lm-ld" => select_combined(lines, &load_scores()?, &load_target()?, n)?,
                other => {
                    return Err(Error::Recipe(format!(
                        "stage '{}': method must be random|lm|ld|lm-ld, got {other:?}",
                        stage.name
                    )))
                }
            };
            let mut out = open_out(&p(stage.require("output")?))?;
            write_lines(&mut out, &selected)?;
            report
        }
        StageKind::Mix => {
            let mut corpora = Vec::new();
            for part in stage.require("inputs")?.split_whitespace() {
                let (tag, path) = part.split_once(':').ok_or_else(|| {
                    Error::Recipe(format!(
                        "stage '{}': mix inputs must be tag:path, got {part:?}",
                        stage.name
                    ))
                })?;
                corpora.push(LanguageCorpus {
                    tag: tag.to_string(),
                    lines: read_lines(&p(path))?,
                });
            }
            let seed = stage.parse_num("seed", stage_seed)?;
            let (mixed, report) = oversample_mix(&corpora, seed)?;
            let mut out = open_out(&p(stage.require("output")?))?;
            let mut tags_out = open_out(&p(stage.require("tags")?))?;
            for (i, t) in mixed.iter().enumerate() {
                writeln!(out, "{}", t.line)?;
                writeln!(tags_out, "{i}\t{}", t.tag)?;
            }
            report
        }
        StageKind::MassGen => {
            let lines = read_lines(&p(stage.require("input")?))?;
            let tags = match stage.get("tags-in") {
                Some(path) => Some(read_tags(&p(path))?),
                None => None,
            };
            let config = MaskConfig {
                mask_fraction: stage.parse_num("fraction", 0.5)?,
                seed: stage.parse_num("seed", stage_seed)?,
                mask_token: stage.get("mask-token").unwrap_or("<mask>").to_string(),
            };
            let default_tag = stage.get("default-tag").unwrap_or("xx").to_string();
            let (examples, report) =
                generate_mass_examples(&lines, tags.as_deref(), &default_tag, &config)?;
            let mut out = open_out(&p(stage.require("output")?))?;
            write_examples(&mut out, &examples)?;
            report
        }
        StageKind::Stats => {
            let lines = read_lines(&p(stage.require("input")?))?;
            let stats = corpus_stats(&lines);
            let mut out = open_out(&p(stage.require("output")?))?;
            serde_json::to_writer_pretty(&mut out, &stats)
                .map_err(|e| Error::Recipe(e.to_string()))?;
            writeln!(out)?;
            let mut report = SelectionReport::new();
            report.lines_read = lines.len() as u64;
            report.lines_selected = lines.len() as u64;
            report
        }
    };
    Ok((report, counters))
}

/// Validate then execute the recipe under `base`. Stage failure aborts the
/// run; completed stages and any partial outputs stay in the manifest with
/// the failing stage marked. The recipe-level error is reported through
/// the manifest status.
pub fn run_recipe(recipe: &PipelineRecipe, base: &Path) -> Result<Manifest> {
    let violations = validate_recipe(recipe, base);
    if !violations.is_empty() {
        return Err(Error::Recipe(format!(
            "recipe does not validate: {}",
            violations.join("; ")
        )));
    }
    let start = Instant::now();
    let mut stages = Vec::new();
    let mut failed = false;
    for (i, stage) in recipe.stages.iter().enumerate() {
        let stage_seed = derive_seed(recipe.seed, i as u64);
        let t0 = Instant::now();
        let result = exec_stage(stage, base, stage_seed);
        let elapsed_ms = t0.elapsed().as_millis() as u64;
        let mut record = StageRecord {
            name: stage.name.clone(),
            kind: stage.kind,
            status: "ok".into(),
            elapsed_ms,
            report: SelectionReport::new(),
            checksums: BTreeMap::new(),
            counters: BTreeMap::new(),
            error: None,
        };
        match result {
            Ok((report, counters)) => {
                record.report = report;
                record.counters = counters;
                for path in stage.output_paths() {
                    let full = base.join(&path);
                    if full.is_file() {
                        record.checksums.insert(path, sha256_file(&full)?);
                    }
                }
                stages.push(record);
            }
            Err(e) => {
                record.status = "failed".into();
                record.error = Some(e.to_string());
                // keep checksums of whatever partial outputs exist
                for path in stage.output_paths() {
                    let full = base.join(&path);
                    if full.is_file() {
                        record.checksums.insert(path, sha256_file(&full)?);
                    }
                }
                stages.push(record);
                failed = true;
                break;
            }
        }
    }
    Ok(Manifest {
        seed: recipe.seed,
        status: if failed { "failed" } else { "ok" }.into(),
        elapsed_ms: start.elapsed().as_millis() as u64,
        stages,
    })
}
