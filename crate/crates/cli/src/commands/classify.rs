//! `ctxmt classify`: trains the bag-of-words domain classifier, reports
//! document accuracy, and optionally rewrites a corpus with predicted tags.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use ctxmt_core::classifier::{featurize, ClassifierConfig, DomainClassifier};
use ctxmt_core::data::save_corpus;

use crate::common::{by_domain, load_documents, load_vocab, out_dir};
use crate::manifest::require;
use crate::Global;

#[derive(Args, Clone, Debug)]
pub struct ClassifyArgs {
    /// Training corpus; defaults to the manifest's train set.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Corpus whose documents get classified and scored; defaults to the
    /// manifest's test set.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Additional corpus to classify without scoring (unseen domains welcome).
    #[arg(long)]
    pub heldout: Option<PathBuf>,
    /// Rewrite this corpus's document domains to the predictions and save it
    /// beside the other outputs as tagged.txt.
    #[arg(long)]
    pub apply: Option<PathBuf>,
    /// Hidden layer width.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
}

pub fn run(global: &Global, args: &ClassifyArgs) -> Result<()> {
    let m = global.manifest()?;
    let train_path = match &args.train {
        Some(p) => p.clone(),
        None => require(&m.corpus.train, "training corpus", "pass --train")?,
    };
    let vocab_path = require(&m.corpus.vocab, "vocabulary", "run `ctxmt prepare` first")?;
    let vocab = load_vocab(&vocab_path)?;
    let train_docs = load_documents(&train_path)?;

    let domains: Vec<String> = by_domain(&train_docs).into_iter().map(|(d, _)| d).collect();
    let mut features = Vec::with_capacity(train_docs.len());
    let mut labels = Vec::with_capacity(train_docs.len());
    for doc in &train_docs {
        let class = domains
            .iter()
            .position(|d| d == &doc.domain)
            .expect("by_domain covers every training document");
        features.push(featurize(doc, &vocab));
        labels.push(class);
    }

    let mut cfg = ClassifierConfig { seed: m.seed.unwrap_or(0), ..ClassifierConfig::default() };
    if let Some(h) = args.hidden {
        cfg.hidden = h;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    let (classifier, holdout_acc) =
        DomainClassifier::train(&features, &labels, domains.clone(), &cfg)?;
    println!(
        "trained on {} documents over {} domains; training holdout accuracy {:.4}",
        train_docs.len(),
        domains.len(),
        holdout_acc
    );

    let dir = out_dir(m.out.clone(), "classify")?;
    classifier.save(&dir.join("classifier.ckpt"))?;

    let mut tsv = String::from("doc_id\ttrue_domain\tpredicted\n");

    // Score the test corpus: accuracy over documents whose true domain the
    // classifier has a class for; other documents only report a prediction.
    let test_path = match &args.test {
        Some(p) => p.clone(),
        None => require(&m.corpus.test, "test corpus", "pass --test")?,
    };
    let test_docs = load_documents(&test_path)?;
    let (predicted, warnings) = classifier.predict_documents(&test_docs, &vocab);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let mut scored = 0usize;
    let mut correct = 0usize;
    for doc in &test_docs {
        let p = &predicted[&doc.doc_id];
        tsv.push_str(&format!("{}\t{}\t{}\n", doc.doc_id, doc.domain, p));
        if domains.contains(&doc.domain) {
            scored += 1;
            if p == &doc.domain {
                correct += 1;
            }
        }
    }
    if scored > 0 {
        println!(
            "test document accuracy {:.4} ({}/{} documents with seen domains)",
            correct as f64 / scored as f64,
            correct,
            scored
        );
    }

    if let Some(heldout_path) = &args.heldout {
        let docs = load_documents(heldout_path)?;
        let (pred, warnings) = classifier.predict_documents(&docs, &vocab);
        for w in &warnings {
            eprintln!("warning: {w}");
        }
        // Every prediction is a seen domain by construction; show where the
        // unseen documents land.
        let mut hist: Vec<(String, usize)> = domains.iter().map(|d| (d.clone(), 0)).collect();
        for doc in &docs {
            let p = &pred[&doc.doc_id];
            tsv.push_str(&format!("{}\t{}\t{}\n", doc.doc_id, doc.domain, p));
            if let Some(slot) = hist.iter_mut().find(|(d, _)| d == p) {
                slot.1 += 1;
            }
        }
        let parts: Vec<String> =
            hist.iter().map(|(d, n)| format!("{d} {n}")).collect();
        println!("heldout assignments over {} documents: {}", docs.len(), parts.join(", "));
    }

    let pred_path = dir.join("predictions.tsv");
    fs::write(&pred_path, &tsv).with_context(|| format!("writing {}", pred_path.display()))?;

    if let Some(apply_path) = &args.apply {
        let mut docs = load_documents(apply_path)?;
        let (pred, warnings) = classifier.predict_documents(&docs, &vocab);
        for w in &warnings {
            eprintln!("warning: {w}");
        }
        for doc in &mut docs {
            doc.domain = pred[&doc.doc_id].clone();
        }
        let tagged = dir.join("tagged.txt");
        save_corpus(&tagged, &docs)?;
        println!("predicted-domain corpus written to {}", tagged.display());
    }

    println!("classifier written to {}", dir.join("classifier.ckpt").display());
    println!("predictions written to {}", pred_path.display());
    Ok(())
}
