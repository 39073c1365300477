//! `ctxmt ablate`: decodes every test domain under every training domain's
//! embedding (plus the true context) and writes the resulting BLEU grid.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use ctxmt_core::eval::ablation_matrix;

use crate::common::{by_domain, examples_for, load_documents, load_model, load_vocab, out_dir};
use crate::manifest::require;
use crate::Global;

#[derive(Args, Clone, Debug)]
pub struct AblateArgs {
    /// Test corpus to ablate over; defaults to the manifest's test set.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Domains to include as grid rows and columns; defaults to every domain
    /// present in the input corpus.
    #[arg(long)]
    pub domains: Option<String>,
}

pub fn run(global: &Global, args: &AblateArgs) -> Result<()> {
    let m = global.manifest()?;
    let vocab_path = require(&m.corpus.vocab, "vocabulary", "run `ctxmt prepare` first")?;
    let ckpt = require(&m.checkpoint, "checkpoint", "run `ctxmt train` first")?;
    let input = match &args.input {
        Some(p) => p.clone(),
        None => require(&m.corpus.test, "test corpus", "pass --input")?,
    };

    let vocab = load_vocab(&vocab_path)?;
    let cfg = m.model_config(vocab.len())?;
    let model = load_model(&ckpt, cfg.clone())?;
    let docs = load_documents(&input)?;

    let keep: Option<Vec<String>> = args
        .domains
        .as_ref()
        .map(|s| s.split(',').map(|d| d.trim().to_string()).collect());
    let mut groups = Vec::new();
    for (domain, group) in by_domain(&docs) {
        if keep.as_ref().map_or(true, |k| k.contains(&domain)) {
            groups.push((domain, examples_for(&group, &vocab, &cfg)));
        }
    }

    let beam = m.beam_params();
    let grid = ablation_matrix(&model, &groups, &vocab, &beam)?;

    // TSV: one row per test domain, one column per forced domain, plus the
    // true-context column.
    let dir = out_dir(m.out.clone(), "ablate")?;
    let mut tsv = String::from("domain");
    for d in &grid.domains {
        tsv.push('\t');
        tsv.push_str(d);
    }
    tsv.push_str("\ttrue\n");
    for (r, row_domain) in grid.domains.iter().enumerate() {
        tsv.push_str(row_domain);
        for c in 0..grid.domains.len() {
            tsv.push_str(&format!("\t{:.2}", grid.cells[r][c]));
        }
        tsv.push_str(&format!("\t{:.2}\n", grid.true_column(r)));
    }
    let path = dir.join("ablation.tsv");
    fs::write(&path, &tsv).with_context(|| format!("writing {}", path.display()))?;

    print!("{tsv}");
    for (r, row_domain) in grid.domains.iter().enumerate() {
        let diag = grid.diagonal(r);
        let off: Vec<f64> = (0..grid.domains.len()).filter(|&c| c != r).map(|c| grid.cells[r][c]).collect();
        let off_mean = off.iter().sum::<f64>() / off.len().max(1) as f64;
        println!(
            "{row_domain}: matched {diag:.2}, mismatched mean {off_mean:.2}, true context {:.2}",
            grid.true_column(r)
        );
    }
    println!("grid written to {}", path.display());
    Ok(())
}
