//! Acceptance gate: one test per criterion, each printing a single
//! `acceptance <nn> <name>: pass` line (run with `--nocapture` to see them
//! on success). Tolerances and wall-clock budgets are pinned in each test.

use std::collections::{BTreeMap, HashMap};
use std::io::Cursor;
use std::time::{Duration, Instant};

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use monoprep::corpus::compute_length_distribution;
use monoprep::mass::{generate_mass_examples, MaskConfig};
use monoprep::mixing::{oversample_mix, LanguageCorpus};
use monoprep::ngram::{Granularity, NGramModel, Smoothing};
use monoprep::normalize::{
    cjk_ratio_filter, run_filter_pipeline, run_normalize, token_length_filter, FilterRule,
};
use monoprep::recipe::{run_recipe, validate_recipe, Manifest, PipelineRecipe};
use monoprep::script_map::{
    combination_count, map_lm_scored, map_one_to_one, MappingTable,
};
use monoprep::selection::{select_length_distribution, select_lm_top_n};
use monoprep::Sentence;

fn criterion(number: u32, name: &str, f: impl FnOnce() -> Result<(), String>) {
    match f() {
        Ok(()) => println!("acceptance {number:02} {name}: pass"),
        Err(e) => {
            println!("acceptance {number:02} {name}: FAIL ({e})");
            panic!("acceptance {number:02} {name} failed: {e}");
        }
    }
}

fn within_budget(elapsed: Duration, budget: Duration, what: &str) -> Result<(), String> {
    if elapsed <= budget {
        Ok(())
    } else {
        Err(format!("{what} took {elapsed:?}, budget {budget:?}"))
    }
}

/// One randomized length-distribution instance: (input lengths, target
/// lengths, select_num). Bounds per the criterion: targets up to 50 lines,
/// inputs up to 500 lines, lengths 1..=20.
fn ld_instance(rng: &mut ChaCha20Rng) -> (Vec<usize>, Vec<usize>, u64) {
    let target_lines = rng.gen_range(1..=50);
    let input_lines = rng.gen_range(0..=500);
    let max_len = rng.gen_range(1..=20usize);
    let target: Vec<usize> = (0..target_lines)
        .map(|_| rng.gen_range(1..=max_len))
        .collect();
    let input: Vec<usize> = (0..input_lines)
        .map(|_| rng.gen_range(1..=max_len))
        .collect();
    let select_num = rng.gen_range(1..=600);
    (input, target, select_num)
}

fn lines_of_lengths(lengths: &[usize]) -> Vec<String> {
    lengths.iter().map(|&n| vec!["w"; n].join(" ")).collect()
}

/// Direct re-simulation of the selection pass, written independently of
/// the library: plain arrays, i128 cross-multiplication. Returns selected
/// input indices.
fn ld_resimulate(input: &[usize], target: &[usize], select_num: u64) -> Vec<usize> {
    let mut wanted = [0i128; 21];
    for &l in target {
        wanted[l] += 1;
    }
    let total = target.len() as i128;
    let mut current = [0i128; 21];
    let mut picked = Vec::new();
    for (i, &l) in input.iter().enumerate() {
        if wanted[l] == 0 {
            continue;
        }
        if current[l] * total < wanted[l] * select_num as i128 {
            current[l] += 1;
            picked.push(i);
        }
    }
    picked
}

#[test]
fn criterion_01_algorithm_1_fidelity() {
    criterion(1, "length-distribution selection vs re-simulation oracle", || {
        let t0 = Instant::now();
        let mut rng = ChaCha20Rng::seed_from_u64(101);
        for case in 0..1000 {
            let (input, target, n) = ld_instance(&mut rng);
            let lines = lines_of_lengths(&input);
            let dist = compute_length_distribution(lines_of_lengths(&target));
            let (selected, report) = select_length_distribution(&lines, &dist, n)
                .map_err(|e| format!("case {case}: {e}"))?;
            let oracle: Vec<String> = ld_resimulate(&input, &target, n)
                .into_iter()
                .map(|i| lines[i].clone())
                .collect();
            if selected != oracle {
                return Err(format!(
                    "case {case}: selection disagrees with oracle ({} vs {} lines)",
                    selected.len(),
                    oracle.len()
                ));
            }
            if !report.is_conserved() || report.lines_read != input.len() as u64 {
                return Err(format!("case {case}: report not conserved: {report:?}"));
            }
        }
        within_budget(t0.elapsed(), Duration::from_secs(10), "1000 instances")
    });
}

#[test]
fn criterion_02_ld_cap_invariant() {
    criterion(2, "length-distribution cap and total bounds", || {
        let mut rng = ChaCha20Rng::seed_from_u64(101);
        for case in 0..1000 {
            let (input, target, n) = ld_instance(&mut rng);
            let lines = lines_of_lengths(&input);
            let dist = compute_length_distribution(lines_of_lengths(&target));
            let (selected, _) = select_length_distribution(&lines, &dist, n)
                .map_err(|e| format!("case {case}: {e}"))?;
            let mut got: BTreeMap<usize, u64> = BTreeMap::new();
            for line in &selected {
                *got.entry(Sentence::new(line.clone()).len()).or_insert(0) += 1;
            }
            for (&len, &count) in &got {
                // ceil(n * target[len] / total)
                let cap = (n as u128 * dist.count(len) as u128).div_ceil(dist.total as u128);
                if count as u128 > cap {
                    return Err(format!(
                        "case {case}: length {len} selected {count} > cap {cap}"
                    ));
                }
            }
            let bound = n + dist.counts.len() as u64;
            if selected.len() as u64 > bound {
                return Err(format!(
                    "case {case}: selected {} > select_num + distinct lengths = {bound}",
                    selected.len()
                ));
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_03_filter_thresholds() {
    criterion(3, "token-count and ratio threshold boundaries", || {
        let rule = FilterRule::default();
        for (len, want_keep) in [(2usize, false), (3, true), (79, true), (80, false)] {
            let line = Sentence::new(vec!["tok"; len].join(" "));
            let kept = token_length_filter(&line, &rule).is_ok();
            if kept != want_keep {
                return Err(format!("length {len}: keep={kept}, wanted {want_keep}"));
            }
        }
        let cjk = "語";
        let neutral = "123";
        let make = |n_cjk: usize, n_ascii: usize| {
            let mut toks = vec![cjk; n_cjk];
            toks.extend(vec!["abc"; n_ascii]);
            toks.extend(vec![neutral; 10 - n_cjk - n_ascii]);
            Sentence::new(toks.join(" "))
        };
        // exactly 30% CJK keeps (reject only on strictly-below)
        if cjk_ratio_filter(&make(3, 0), &rule).is_err() {
            return Err("30% CJK was rejected".into());
        }
        if cjk_ratio_filter(&make(2, 0), &rule).is_ok() {
            return Err("20% CJK was kept".into());
        }
        // exactly 30% ASCII-alphabetic keeps (reject only on strictly-above)
        if cjk_ratio_filter(&make(7, 3), &rule).is_err() {
            return Err("30% ASCII was rejected".into());
        }
        if cjk_ratio_filter(&make(6, 4), &rule).is_ok() {
            return Err("40% ASCII was kept".into());
        }
        Ok(())
    });
}

fn random_corpus(rng: &mut ChaCha20Rng, vocab_size: usize) -> Vec<String> {
    let lines = rng.gen_range(1..=40);
    (0..lines)
        .map(|_| {
            let len = rng.gen_range(1..=12);
            (0..len)
                .map(|_| format!("w{}", rng.gen_range(0..vocab_size)))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

#[test]
fn criterion_04_kneser_ney_normalization() {
    criterion(4, "KN conditionals sum to 1 within 1e-6", || {
        let t0 = Instant::now();
        let mut rng = ChaCha20Rng::seed_from_u64(404);
        for case in 0..100 {
            let vocab_size = rng.gen_range(1..=50);
            let corpus = random_corpus(&mut rng, vocab_size);
            let order = case % 5 + 1;
            let model = NGramModel::train(&corpus, order, Granularity::Token, Smoothing::KneserNey)
                .map_err(|e| format!("case {case}: {e}"))?;
            for history in model.stored_histories() {
                let ctx: Vec<&str> = history.iter().map(String::as_str).collect();
                let sum = model.conditional_sum(&ctx);
                if (sum - 1.0).abs() > 1e-6 {
                    return Err(format!(
                        "case {case} (order {order}): sum over history {history:?} is {sum}"
                    ));
                }
            }
        }
        within_budget(t0.elapsed(), Duration::from_secs(60), "100 corpora")
    });
}

#[test]
fn criterion_05_mle_unigram_oracle() {
    criterion(5, "diagnostic MLE unigrams equal count ratios", || {
        let cases: &[(&[&str], &[(&str, u64)], u64)] = &[
            // (corpus, (word, count) pairs, total events incl. </s>)
            (&["a a b"], &[("a", 2), ("b", 1)], 4),
            (&["x y x", "y"], &[("x", 2), ("y", 2)], 6),
            (&["q"], &[("q", 1)], 2),
        ];
        for (corpus, counts, total) in cases {
            let model =
                NGramModel::train(corpus.iter(), 1, Granularity::Token, Smoothing::MleDiagnostic)
                    .map_err(|e| e.to_string())?;
            for (word, count) in *counts {
                let got = model.cond_log10(&[], word);
                let want = (*count as f64 / *total as f64).log10();
                if got != want {
                    return Err(format!(
                        "{corpus:?}: P({word}) = 10^{got}, hand count gives 10^{want}"
                    ));
                }
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_06_arpa_round_trip() {
    criterion(6, "ARPA export/import byte-identity and hand-scored bigram", || {
        let mut rng = ChaCha20Rng::seed_from_u64(606);
        for order in 1..=4 {
            let corpus = random_corpus(&mut rng, 20);
            let model = NGramModel::train(&corpus, order, Granularity::Token, Smoothing::KneserNey)
                .map_err(|e| e.to_string())?;
            let mut first = Vec::new();
            model.export_arpa(&mut first).map_err(|e| e.to_string())?;
            let imported = NGramModel::import_arpa(&first[..], "mem", Granularity::Token)
                .map_err(|e| e.to_string())?;
            let mut second = Vec::new();
            imported.export_arpa(&mut second).map_err(|e| e.to_string())?;
            if first != second {
                return Err(format!("order {order}: re-export differs from export"));
            }
        }

        let arpa = "\\data\\\n\
                    ngram 1=3\n\
                    ngram 2=2\n\
                    \n\
                    \\1-grams:\n\
                    -0.5000000\t</s>\n\
                    -99.0000000\t<s>\t-0.4000000\n\
                    -0.3000000\ta\t-0.2000000\n\
                    \n\
                    \\2-grams:\n\
                    -0.1000000\t<s> a\n\
                    -0.6000000\ta </s>\n\
                    \n\
                    \\end\\\n";
        let model = NGramModel::import_arpa(arpa.as_bytes(), "mem", Granularity::Token)
            .map_err(|e| e.to_string())?;
        // "a":   P(a|<s>) = -0.1, P(</s>|a) = -0.6
        // "a a": P(a|<s>) = -0.1, P(a|a) = backoff(a) + P(a) = -0.2 + -0.3,
        //        P(</s>|a) = -0.6
        for (sentence, want) in [("a", -0.7), ("a a", -1.2)] {
            let got = model.score_sentence(sentence).total_log10;
            if (got - want).abs() > 1e-9 {
                return Err(format!("score({sentence:?}) = {got}, hand arithmetic gives {want}"));
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_07_top_n_vs_sort_oracle() {
    criterion(7, "LM top-N equals brute-force sort-and-slice", || {
        let mut rng = ChaCha20Rng::seed_from_u64(707);
        for case in 0..1000 {
            let len = rng.gen_range(0..=1000);
            let lines: Vec<String> = (0..len).map(|i| format!("line {i}")).collect();
            // small score alphabet forces plenty of ties
            let scores: Vec<f64> = (0..len).map(|_| rng.gen_range(0..8) as f64).collect();
            let n = rng.gen_range(1..=1200usize);

            let mut order: Vec<usize> = (0..len).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            let oracle: Vec<String> = order
                .iter()
                .take(n)
                .map(|&i| lines[i].clone())
                .collect();

            let (got, report) = select_lm_top_n(lines.clone(), &scores, n, false)
                .map_err(|e| format!("case {case}: {e}"))?;
            if got != oracle {
                return Err(format!("case {case}: top-N disagrees with sort-and-slice"));
            }
            if !report.is_conserved() {
                return Err(format!("case {case}: report not conserved"));
            }

            let (in_order, _) = select_lm_top_n(lines, &scores, n, true)
                .map_err(|e| format!("case {case}: {e}"))?;
            let mut sorted_oracle = order;
            sorted_oracle.truncate(n.min(len));
            sorted_oracle.sort_unstable();
            let oracle_in_order: Vec<String> =
                sorted_oracle.iter().map(|&i| format!("line {i}")).collect();
            if in_order != oracle_in_order {
                return Err(format!("case {case}: original-order variant disagrees"));
            }
        }
        Ok(())
    });
}

fn random_table(rng: &mut ChaCha20Rng) -> MappingTable {
    let mut table = MappingTable::default();
    for source in 'A'..='J' {
        if rng.gen_bool(0.8) {
            let mut cands: Vec<char> = ('a'..='z').collect();
            cands.shuffle(rng);
            cands.truncate(rng.gen_range(1..=3));
            table.insert(source, cands);
        }
    }
    table
}

fn enumerate_independent(token: &str, table: &MappingTable) -> Vec<String> {
    let mut out = vec![String::new()];
    for c in token.chars() {
        let slot: Vec<char> = table.candidates(c).map_or(vec![c], |s| s.to_vec());
        out = out
            .iter()
            .flat_map(|prefix| {
                slot.iter().map(move |&cand| {
                    let mut s = prefix.clone();
                    s.push(cand);
                    s
                })
            })
            .collect();
    }
    out
}

#[test]
fn criterion_08_script_mapping() {
    criterion(8, "one-to-one invariants and LM-scored maximality", || {
        let mut rng = ChaCha20Rng::seed_from_u64(808);
        let lm_corpus: Vec<String> = (0..30)
            .map(|_| {
                (0..rng.gen_range(2..=8))
                    .map(|_| rng.gen_range('a'..='z').to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let lm = NGramModel::train(&lm_corpus, 2, Granularity::Char, Smoothing::KneserNey)
            .map_err(|e| e.to_string())?;
        for case in 0..300 {
            let table = random_table(&mut rng);
            let token: String = (0..rng.gen_range(1..=8))
                .map(|_| {
                    if rng.gen_bool(0.8) {
                        rng.gen_range('A'..='J')
                    } else {
                        rng.gen_range('q'..='s')
                    }
                })
                .collect();

            let mapped = map_one_to_one(&token, &table);
            if mapped.chars().count() != token.chars().count() {
                return Err(format!("case {case}: one-to-one changed character count"));
            }
            for (src, dst) in token.chars().zip(mapped.chars()) {
                let want = table.candidates(src).map_or(src, |c| c[0]);
                if dst != want {
                    return Err(format!(
                        "case {case}: {src:?} mapped to {dst:?}, first candidate is {want:?}"
                    ));
                }
            }

            if combination_count(&token, &table) <= 256 {
                let (scored, fallbacks) = map_lm_scored(&token, &table, &lm, 256);
                if fallbacks != 0 {
                    return Err(format!("case {case}: unexpected cap fallback"));
                }
                let best = lm.score_sentence(&scored).total_log10;
                for cand in enumerate_independent(&token, &table) {
                    if lm.score_sentence(&cand).total_log10 > best {
                        return Err(format!(
                            "case {case}: candidate {cand:?} outscores chosen {scored:?}"
                        ));
                    }
                }
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_09_oversample_mixing() {
    criterion(9, "per-language oversampling totals and seed determinism", || {
        let mut rng = ChaCha20Rng::seed_from_u64(909);
        for case in 0..200 {
            let n_langs = rng.gen_range(1..=8);
            let corpora: Vec<LanguageCorpus> = (0..n_langs)
                .map(|li| {
                    let size = rng.gen_range(1..=50);
                    LanguageCorpus {
                        tag: format!("L{li}"),
                        lines: (0..size).map(|i| format!("L{li} line {i}")).collect(),
                    }
                })
                .collect();
            let max = corpora.iter().map(|c| c.lines.len()).max().unwrap();
            let seed = rng.gen();

            let (mixed, report) =
                oversample_mix(&corpora, seed).map_err(|e| format!("case {case}: {e}"))?;
            let mut per_tag: HashMap<&str, usize> = HashMap::new();
            for t in &mixed {
                *per_tag.entry(t.tag.as_str()).or_insert(0) += 1;
            }
            for c in &corpora {
                if per_tag.get(c.tag.as_str()) != Some(&max) {
                    return Err(format!(
                        "case {case}: language {} contributed {:?} lines, expected {max}",
                        c.tag,
                        per_tag.get(c.tag.as_str())
                    ));
                }
            }
            if report.lines_selected != (max * n_langs) as u64 {
                return Err(format!("case {case}: bad report {report:?}"));
            }

            let (again, _) = oversample_mix(&corpora, seed).map_err(|e| e.to_string())?;
            let digest = |mix: &[monoprep::mixing::TaggedLine]| {
                let mut h = Sha256::new();
                for t in mix {
                    h.update(t.tag.as_bytes());
                    h.update(b"\t");
                    h.update(t.line.as_bytes());
                    h.update(b"\n");
                }
                format!("{:x}", h.finalize())
            };
            if digest(&mixed) != digest(&again) {
                return Err(format!("case {case}: rerun checksum differs"));
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_10_mass_round_trip() {
    criterion(10, "100k masked examples verify and span-length law", || {
        let t0 = Instant::now();
        let mut rng = ChaCha20Rng::seed_from_u64(1010);
        let lines: Vec<String> = (0..100_000)
            .map(|i| {
                let m = rng.gen_range(1..=30);
                (0..m).map(|t| format!("t{i}_{t}")).collect::<Vec<_>>().join(" ")
            })
            .collect();
        let config = MaskConfig {
            mask_fraction: 0.5,
            seed: 77,
            mask_token: "<mask>".to_string(),
        };
        let (examples, report) =
            generate_mass_examples(&lines, None, "xx", &config).map_err(|e| e.to_string())?;
        if examples.len() != lines.len() || !report.is_conserved() {
            return Err(format!("bad example count or report: {report:?}"));
        }
        for (line, example) in lines.iter().zip(&examples) {
            let tokens: Vec<String> =
                line.split_ascii_whitespace().map(str::to_string).collect();
            let m = tokens.len();
            let want_span = ((0.5 * m as f64).round() as usize).max(1);
            if example.span_len != want_span {
                return Err(format!(
                    "m={m}: span_len {} != max(1, round(0.5*m)) = {want_span}",
                    example.span_len
                ));
            }
            if !monoprep::mass::verify_example(example, &tokens) {
                return Err(format!("verify_example failed for {line:?}"));
            }
        }
        within_budget(t0.elapsed(), Duration::from_secs(30), "100k examples")
    });
}

fn synth_word_lines(rng: &mut ChaCha20Rng, words: &[&str], n: usize) -> String {
    let mut out = String::new();
    for _ in 0..n {
        let len = rng.gen_range(3..40);
        let line: Vec<&str> = (0..len).map(|_| words[rng.gen_range(0..words.len())]).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

fn synth_char_lines(rng: &mut ChaCha20Rng, chars: &[char], n: usize) -> String {
    let mut out = String::new();
    for _ in 0..n {
        let len = rng.gen_range(3..40);
        for t in 0..len {
            if t > 0 {
                out.push(' ');
            }
            out.push(chars[rng.gen_range(0..chars.len())]);
        }
        out.push('\n');
    }
    out
}

fn synth_corpus(base: &std::path::Path, rng: &mut ChaCha20Rng) {
    let en: Vec<&str> = "the a of to and in for on with at from market trade report growth policy system water energy city region people study result"
        .split(' ')
        .collect();
    let fr: Vec<&str> = "le la les un une des et dans pour sur avec marche rapport croissance politique eau energie ville region personnes etude resultat"
        .split(' ')
        .collect();
    let ja: Vec<char> = "日本語学習文章生成機械翻訳研究開発言語処理情報科学技術".chars().collect();
    let zh: Vec<char> = "汉语学习文章生成机械翻译研究开发语言处理信息科学技术".chars().collect();
    let data = base.join("data");
    std::fs::create_dir_all(&data).unwrap();
    std::fs::write(data.join("en.txt"), synth_word_lines(rng, &en, 25_000)).unwrap();
    std::fs::write(data.join("fr.txt"), synth_word_lines(rng, &fr, 25_000)).unwrap();
    std::fs::write(data.join("ja.txt"), synth_char_lines(rng, &ja, 25_000)).unwrap();
    std::fs::write(data.join("zh.txt"), synth_char_lines(rng, &zh, 25_000)).unwrap();
    std::fs::write(data.join("en.dev.txt"), synth_word_lines(rng, &en, 2_000)).unwrap();
    std::fs::write(data.join("ja.dev.txt"), synth_char_lines(rng, &ja, 2_000)).unwrap();
    std::fs::copy(
        concat!(env!("CARGO_MANIFEST_DIR"), "/recipes/data/zh2ja.tsv"),
        data.join("zh2ja.tsv"),
    )
    .unwrap();
}

fn stage_checksums(m: &Manifest) -> Vec<BTreeMap<String, String>> {
    m.stages.iter().map(|s| s.checksums.clone()).collect()
}

#[test]
fn criterion_11_end_to_end_recipe() {
    criterion(11, "paper.recipe on 100k synthetic lines", || {
        let t0 = Instant::now();
        let recipe_path = concat!(env!("CARGO_MANIFEST_DIR"), "/recipes/paper.recipe");
        let recipe = PipelineRecipe::from_file(recipe_path.as_ref()).map_err(|e| e.to_string())?;

        let run_once = || -> Result<Manifest, String> {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let mut rng = ChaCha20Rng::seed_from_u64(1111);
            synth_corpus(dir.path(), &mut rng);
            let violations = validate_recipe(&recipe, dir.path());
            if !violations.is_empty() {
                return Err(format!("recipe does not validate: {violations:?}"));
            }
            run_recipe(&recipe, dir.path()).map_err(|e| e.to_string())
        };

        let first = run_once()?;
        if first.status != "ok" {
            return Err(format!("run status {}", first.status));
        }
        let outputs: BTreeMap<String, String> = recipe
            .stages
            .iter()
            .zip(&first.stages)
            .filter_map(|(stage, record)| {
                stage
                    .params
                    .get("output")
                    .map(|o| (stage.name.clone(), o.clone()))
                    .filter(|_| record.status == "ok")
            })
            .collect();
        // chain conservation: a stage reading another stage's output sees
        // exactly the lines that stage selected
        let selected_by_name = |name: &str| {
            first
                .stages
                .iter()
                .find(|s| s.name == name)
                .map(|s| s.report.lines_selected)
        };
        for (stage, record) in recipe.stages.iter().zip(&first.stages) {
            if let Some(inputs) = stage.params.get("inputs") {
                // oversample mixing: reads the union, emits
                // languages * max(language size) lines
                let sizes: Vec<u64> = inputs
                    .split_whitespace()
                    .filter_map(|part| part.split_once(':'))
                    .filter_map(|(_, path)| {
                        outputs
                            .iter()
                            .find(|(_, out)| *out == path)
                            .and_then(|(name, _)| selected_by_name(name))
                    })
                    .collect();
                let max = sizes.iter().copied().max().unwrap_or(0);
                if record.report.lines_read != sizes.iter().sum::<u64>()
                    || record.report.lines_selected != max * sizes.len() as u64
                {
                    return Err(format!(
                        "stage {}: mix read {} selected {}, upstream sizes {sizes:?}",
                        record.name, record.report.lines_read, record.report.lines_selected
                    ));
                }
                continue;
            }
            if !record.report.is_conserved() {
                return Err(format!("stage {}: report not conserved", record.name));
            }
            if let Some(input) = stage.params.get("input") {
                if let Some((producer, _)) =
                    outputs.iter().find(|(_, out)| *out == input)
                {
                    let upstream = first
                        .stages
                        .iter()
                        .find(|s| s.name == *producer)
                        .unwrap()
                        .report
                        .lines_selected;
                    if record.report.lines_read != upstream {
                        return Err(format!(
                            "stage {} read {} lines, upstream {producer} selected {upstream}",
                            record.name, record.report.lines_read
                        ));
                    }
                }
            }
        }

        let second = run_once()?;
        if stage_checksums(&first) != stage_checksums(&second) {
            return Err("rerun under the same seed is not checksum-identical".into());
        }

        // normalization + filtering throughput on ASCII-dominant input
        let ascii: String = std::iter::repeat("the quick brown fox jumps over the lazy dog\n")
            .take(200_000)
            .collect();
        let lines = 200_000f64;
        let mut sink = Vec::with_capacity(ascii.len());
        let t_norm = Instant::now();
        run_normalize(Cursor::new(ascii.as_bytes()), &mut sink).map_err(|e| e.to_string())?;
        let norm_rate = lines / t_norm.elapsed().as_secs_f64();
        sink.clear();
        let t_filt = Instant::now();
        run_filter_pipeline(
            Cursor::new(ascii.as_bytes()),
            &mut sink,
            &FilterRule::default(),
            false,
        )
        .map_err(|e| e.to_string())?;
        let filt_rate = lines / t_filt.elapsed().as_secs_f64();
        if norm_rate < 50_000.0 || filt_rate < 50_000.0 {
            return Err(format!(
                "throughput below 50k lines/s (normalize {norm_rate:.0}/s, filter {filt_rate:.0}/s)"
            ));
        }

        within_budget(t0.elapsed(), Duration::from_secs(300), "end-to-end run")
    });
}
