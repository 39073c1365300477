//! `ctxmt train`: model training with plateau decay, checkpoint averaging,
//! and optional warm starts or fine-tuning.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use ctxmt_core::data::filter_overlong;
use ctxmt_core::model::{Checkpoint, Dtype, Model};
use ctxmt_core::train::{init_from_checkpoint, train_and_average, StopReason};

use crate::common::{examples_for, load_documents, load_vocab, out_dir};
use crate::manifest::require;
use crate::Global;

#[derive(Args, Clone, Debug)]
pub struct TrainArgs {
    /// Training corpus; defaults to the manifest's corpus.train.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Dev corpus; defaults to the manifest's corpus.dev.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Vocabulary; defaults to the manifest's corpus.vocab.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_updates: Option<usize>,
    #[arg(long)]
    pub batch_tokens: Option<usize>,
    #[arg(long)]
    pub checkpoint_interval: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Warm-start checkpoint: parameters with matching names are copied.
    #[arg(long)]
    pub init_from: Option<PathBuf>,
    /// Use the fine-tuning recipe (low LR) as the base configuration.
    #[arg(long)]
    pub finetune: bool,
    /// Keep every periodic checkpoint on disk under checkpoints/.
    #[arg(long)]
    pub save_checkpoints: bool,
}

pub fn run(global: &Global, args: &TrainArgs) -> Result<()> {
    let mut m = global.manifest()?;
    if args.finetune {
        m.train.preset = Some("fine_tune".into());
    }
    let t = &mut m.train;
    t.lr = args.lr.or(t.lr);
    t.max_updates = args.max_updates.or(t.max_updates);
    t.batch_tokens = args.batch_tokens.or(t.batch_tokens);
    t.checkpoint_interval = args.checkpoint_interval.or(t.checkpoint_interval);
    t.init_from = args.init_from.clone().or(t.init_from.take());
    m.model.dropout = args.dropout.or(m.model.dropout);
    if let Some(p) = &args.train {
        m.corpus.train = Some(p.clone());
    }
    if let Some(p) = &args.dev {
        m.corpus.dev = Some(p.clone());
    }
    if let Some(p) = &args.vocab {
        m.corpus.vocab = Some(p.clone());
    }

    let train_path = require(&m.corpus.train, "training corpus", "run `ctxmt gen-corpus` first")?;
    let dev_path = require(&m.corpus.dev, "dev corpus", "run `ctxmt gen-corpus` first")?;
    if m.corpus.vocab.is_none() {
        // Convention: the vocabulary sits next to the training corpus.
        m.corpus.vocab = train_path.parent().map(|d| d.join("vocab.json"));
    }
    let vocab_path = require(&m.corpus.vocab, "vocabulary", "run `ctxmt prepare` first")?;
    let vocab = load_vocab(&vocab_path)?;

    let model_cfg = m.model_config(vocab.len())?;
    let train_cfg = m.train_config(None)?;
    let (train_examples, dropped) = filter_overlong(
        examples_for(&load_documents(&train_path)?, &vocab, &model_cfg),
        model_cfg.max_sentence_tokens,
    );
    let dev_examples = examples_for(&load_documents(&dev_path)?, &vocab, &model_cfg);
    if train_examples.is_empty() {
        bail!("no training examples survive the length filter on {}", train_path.display());
    }
    if dropped > 0 {
        println!("dropped {dropped} over-long training examples");
    }

    let mut model = match &m.train.init_from {
        Some(ckpt_path) => {
            if !ckpt_path.exists() {
                bail!("warm-start checkpoint not found at {}", ckpt_path.display());
            }
            let baseline = Checkpoint::load(ckpt_path)?;
            let (model, report) = init_from_checkpoint(&model_cfg, &baseline, train_cfg.seed)?;
            println!(
                "warm start from {}: {} parameters copied, {} fresh",
                ckpt_path.display(),
                report.copied.len(),
                report.fresh.len()
            );
            model
        }
        None => Model::new(model_cfg.clone(), train_cfg.seed),
    };

    let run_name = format!(
        "train/{}-k{}-s{}",
        model_cfg.kind.name(),
        model_cfg.context_size,
        train_cfg.seed
    );
    let dir = out_dir(m.out.clone(), &run_name)?;
    let ckpt_dir = args.save_checkpoints.then(|| dir.join("checkpoints"));

    let log_path = dir.join("train_log.tsv");
    let log_file = File::create(&log_path)
        .with_context(|| format!("creating training log {}", log_path.display()))?;
    let mut log = BufWriter::new(log_file);
    writeln!(log, "{}", ctxmt_core::train::LogEntry::TSV_HEADER)?;
    let outcome = train_and_average(
        &mut model,
        &train_examples,
        &dev_examples,
        &train_cfg,
        ckpt_dir.as_deref(),
        |entry| {
            writeln!(log, "{}", entry.tsv_line()).expect("writing training log");
            println!(
                "step {:>6}  lr {:.2e}  train loss {:>8.4}  dev ppl {:.4}",
                entry.step, entry.lr, entry.train_loss, entry.dev_ppl
            );
        },
    )?;
    log.flush()?;

    let ckpt_path = dir.join("model.ckpt");
    Checkpoint::of_model(&model, outcome.outcome.updates, Some(outcome.dev_ppl))
        .save(&ckpt_path, Dtype::F64)?;

    m.record_model(&model_cfg);
    m.record_train(&train_cfg);
    let beam = m.beam_params();
    m.record_beam(&beam);
    m.seed = Some(train_cfg.seed);
    m.out = Some(dir.clone());
    m.checkpoint = Some(PathBuf::from("model.ckpt"));
    m.save(&dir.join("manifest.toml"))?;

    let stop = match outcome.outcome.stop {
        StopReason::EarlyStopped => "early stop (LR decays exhausted)",
        StopReason::UpdateBudget => "update budget reached",
    };
    println!(
        "trained {} for {} updates ({stop}); dev ppl {:.4}{}; checkpoint {}",
        model_cfg.kind.name(),
        outcome.outcome.updates,
        outcome.dev_ppl,
        if outcome.used_average { " (averaged)" } else { "" },
        ckpt_path.display()
    );
    Ok(())
}
