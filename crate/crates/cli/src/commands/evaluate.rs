//! `ctxmt evaluate`: scores hypotheses (or decodes and scores a manifest's
//! test suites) and writes an `eval_report.json`.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;

use ctxmt_core::data::{reference_lines, Document};
use ctxmt_core::decode::surface_text;
use ctxmt_core::eval::{corpus_bleu, paired_bootstrap};
use ctxmt_core::synth::{load_oracle, oracle_disambiguation_score, OracleEntry};

use crate::common::{by_domain, decode_parallel, examples_for, load_documents, load_model, load_vocab, out_dir, read_lines, write_lines};
use crate::manifest::{require, ExperimentManifest};
use crate::Global;

#[derive(Args, Clone, Debug)]
pub struct EvaluateArgs {
    /// Hypothesis file (one sentence per line). Without it, the manifest's
    /// checkpoint decodes every suite in --suites.
    #[arg(long)]
    pub hyp: Option<PathBuf>,
    /// Reference corpus for --hyp mode; defaults to the manifest's test set.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Baseline hypothesis file for the paired bootstrap comparison.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Oracle record of polysemous occurrences (oracle.tsv).
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    /// Comma-separated suites for manifest mode: names among
    /// train,dev,test,heldout_test.
    #[arg(long)]
    pub suites: Option<String>,
    /// Bootstrap resamples.
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
}

#[derive(Serialize)]
struct SignificanceBlock {
    baseline_bleu: f64,
    bleu: f64,
    delta: f64,
    p_value: f64,
    strict_wins: f64,
    significant_05: bool,
    significant_01: bool,
    resamples: usize,
}

#[derive(Serialize)]
struct OracleBlock {
    accuracy: f64,
    matched: usize,
    total: usize,
}

#[derive(Serialize)]
struct SuiteReport {
    suite: String,
    sentences: usize,
    bleu: f64,
    precisions: Vec<f64>,
    brevity_penalty: f64,
    hyp_len: usize,
    ref_len: usize,
    per_domain_bleu: Vec<(String, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    significance: Option<SignificanceBlock>,
}

#[derive(Serialize)]
struct EvalReport {
    suites: Vec<SuiteReport>,
}

pub fn run(global: &Global, args: &EvaluateArgs) -> Result<()> {
    let m = global.manifest()?;
    let oracle_path = args.oracle.clone().or_else(|| m.corpus.oracle.clone());
    let oracle = match &oracle_path {
        Some(p) if p.exists() => Some(load_oracle(p)?),
        Some(p) => bail!("oracle record not found at {}", p.display()),
        None => None,
    };

    let mut report = EvalReport { suites: Vec::new() };
    let dir = out_dir(m.out.clone(), "evaluate")?;
    if let Some(hyp_path) = &args.hyp {
        let test_path = match &args.test {
            Some(p) => p.clone(),
            None => require(&m.corpus.test, "reference corpus", "pass --test")?,
        };
        let docs = load_documents(&test_path)?;
        let hyps = read_lines(hyp_path)?;
        let suite = score_suite(
            "test",
            &docs,
            &hyps,
            oracle.as_deref(),
            args.baseline.as_deref().map(read_lines).transpose()?.as_deref(),
            args.resamples,
            m.seed.unwrap_or(1),
        )?;
        println!("{}", summary_line(&suite));
        report.suites.push(suite);
    } else {
        // Manifest mode: decode and score each requested suite.
        let suites: Vec<String> = args
            .suites
            .clone()
            .map(|s| s.split(',').map(|x| x.trim().to_string()).collect())
            .or_else(|| m.eval_suites.clone())
            .unwrap_or_else(|| vec!["test".into(), "heldout_test".into()]);
        let vocab_path = require(&m.corpus.vocab, "vocabulary", "run `ctxmt prepare` first")?;
        let ckpt = require(&m.checkpoint, "checkpoint", "run `ctxmt train` first")?;
        let vocab = load_vocab(&vocab_path)?;
        let cfg = m.model_config(vocab.len())?;
        let model = load_model(&ckpt, cfg.clone())?;
        let workers = m.decode.workers.unwrap_or(1);
        let beam = m.beam_params();
        for suite_name in suites {
            let path = suite_path(&m, &suite_name)?;
            let docs = load_documents(&path)?;
            let examples = examples_for(&docs, &vocab, &cfg);
            let hyps: Vec<String> = decode_parallel(&model, &examples, &beam, workers)?
                .iter()
                .map(|h| surface_text(&vocab, h))
                .collect();
            write_lines(&dir.join(format!("{suite_name}.hyps.txt")), &hyps)?;
            let suite = score_suite(
                &suite_name,
                &docs,
                &hyps,
                oracle.as_deref(),
                None,
                args.resamples,
                m.seed.unwrap_or(1),
            )?;
            println!("{}", summary_line(&suite));
            report.suites.push(suite);
        }
    }

    let report_path = dir.join("eval_report.json");
    let json = serde_json::to_string_pretty(&report).context("serializing eval report")?;
    fs::write(&report_path, json)
        .with_context(|| format!("writing {}", report_path.display()))?;
    println!("report written to {}", report_path.display());
    Ok(())
}

fn suite_path(m: &ExperimentManifest, name: &str) -> Result<PathBuf> {
    let slot = match name {
        "train" => &m.corpus.train,
        "dev" => &m.corpus.dev,
        "test" => &m.corpus.test,
        "heldout_test" => &m.corpus.heldout_test,
        "finetune_train" => &m.corpus.finetune_train,
        "finetune_dev" => &m.corpus.finetune_dev,
        other => bail!("unknown suite {other:?}: expected train, dev, test, or heldout_test"),
    };
    require(slot, &format!("{name} corpus"), "set it in the manifest's [corpus] section")
}

fn score_suite(
    name: &str,
    docs: &[Document],
    hyps: &[String],
    oracle: Option<&[OracleEntry]>,
    baseline: Option<&[String]>,
    resamples: usize,
    seed: u64,
) -> Result<SuiteReport> {
    let refs = reference_lines(docs);
    if refs.len() != hyps.len() {
        bail!("suite {name}: {} hypotheses for {} reference sentences", hyps.len(), refs.len());
    }
    let bleu = corpus_bleu(hyps, &refs, 4)?;

    // Per-domain BLEU over each domain's slice of the line range.
    let domains: Vec<String> = by_domain(docs).into_iter().map(|(d, _)| d).collect();
    let mut per_domain_bleu = Vec::new();
    for domain in domains {
        let mut lines = Vec::new();
        let mut cursor = 0usize;
        for doc in docs {
            let n = doc.sentences.len();
            if doc.domain == domain {
                lines.extend(cursor..cursor + n);
            }
            cursor += n;
        }
        let h: Vec<String> = lines.iter().map(|&i| hyps[i].clone()).collect();
        let r: Vec<String> = lines.iter().map(|&i| refs[i].clone()).collect();
        per_domain_bleu.push((domain, corpus_bleu(&h, &r, 4)?.score));
    }

    let oracle_block = match oracle {
        Some(entries) => match oracle_disambiguation_score(docs, hyps, entries) {
            Ok(score) => Some(OracleBlock {
                accuracy: score.accuracy,
                matched: score.matched,
                total: score.total,
            }),
            // A suite without polysemous occurrences simply has no oracle row.
            Err(_) => None,
        },
        None => None,
    };

    let significance = match baseline {
        Some(base) => {
            let result = paired_bootstrap(base, hyps, &refs, resamples, seed)?;
            Some(SignificanceBlock {
                baseline_bleu: result.bleu_a,
                bleu: result.bleu_b,
                delta: result.bleu_b - result.bleu_a,
                p_value: result.p_value,
                strict_wins: result.strict_wins,
                significant_05: result.significant_05(),
                significant_01: result.significant_01(),
                resamples: result.resamples,
            })
        }
        None => None,
    };

    Ok(SuiteReport {
        suite: name.to_string(),
        sentences: hyps.len(),
        bleu: bleu.score,
        precisions: bleu.precisions,
        brevity_penalty: bleu.brevity_penalty,
        hyp_len: bleu.hyp_len,
        ref_len: bleu.ref_len,
        per_domain_bleu,
        oracle: oracle_block,
        significance,
    })
}

fn summary_line(s: &SuiteReport) -> String {
    let mut line = format!("{}: BLEU {:.2} over {} sentences", s.suite, s.bleu, s.sentences);
    if let Some(o) = &s.oracle {
        line.push_str(&format!(
            ", disambiguation {:.4} ({}/{})",
            o.accuracy, o.matched, o.total
        ));
    }
    if let Some(sig) = &s.significance {
        line.push_str(&format!(
            ", delta {:+.2} vs baseline {:.2} (p {:.3}{})",
            sig.delta,
            sig.baseline_bleu,
            sig.p_value,
            if sig.significant_01 {
                ", significant at 0.01"
            } else if sig.significant_05 {
                ", significant at 0.05"
            } else {
                ""
            }
        ));
    }
    line
}
