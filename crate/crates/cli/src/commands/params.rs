//! `ctxmt params`: prints the learned-parameter budget of every model kind
//! under a preset, with deltas against the sentence baseline.
//!
//! `--config` accepts either a manifest path or a preset shorthand such as
//! `paper-sent` or `desk-domemb_avg`.

use anyhow::{bail, Result};
use clap::Args;

use ctxmt_core::model::{count_parameters, ModelConfig, ModelKind};

use crate::Global;

#[derive(Args, Clone, Debug)]
pub struct ParamsArgs {
    /// Architecture preset when --config is absent.
    #[arg(long, default_value = "paper")]
    pub preset: String,
    /// Vocabulary size the embedding tables are sized for.
    #[arg(long, default_value_t = 32_000)]
    pub vocab_size: usize,
}

pub fn run(global: &Global, args: &ParamsArgs) -> Result<()> {
    // Resolve preset and focus kind. A --config value that is not a file is
    // read as "<preset>" or "<preset>-<kind>".
    let mut preset = args.preset.clone();
    let mut focus: Option<ModelKind> = None;
    let mut vocab_size = args.vocab_size;
    if let Some(cfg_path) = &global.config {
        if cfg_path.is_file() {
            let m = global.manifest()?;
            let resolved = m.model_config(vocab_size)?;
            focus = Some(resolved.kind);
            preset = m.model.preset.clone().unwrap_or(preset);
            if let Some(v) = m.model.vocab_size {
                vocab_size = v;
            }
        } else {
            let spec = cfg_path.to_string_lossy();
            let (p, kind) = match spec.split_once('-') {
                Some((p, k)) => (p.to_string(), Some(k)),
                None => (spec.to_string(), None),
            };
            preset = p;
            if let Some(k) = kind {
                focus = Some(crate::parse_kind(k).map_err(|e| anyhow::anyhow!(e))?);
            }
        }
    }
    if let Some(k) = global.model {
        focus = Some(k);
    }

    let base = match preset.as_str() {
        "desk" => ModelConfig::desk(ModelKind::Sent, vocab_size),
        "paper" => ModelConfig::paper(ModelKind::Sent, vocab_size),
        other => bail!("unknown preset {other:?}: expected desk or paper"),
    };

    let for_kind = |kind: ModelKind| -> ModelConfig {
        let mut cfg = base.clone();
        cfg.kind = kind;
        if let Some(k) = global.ctx {
            cfg.context_size = k;
        }
        cfg
    };
    let sent_total = count_parameters(&for_kind(ModelKind::Sent));

    println!(
        "preset {preset}, vocab {vocab_size}, d_model {}, layers {}, heads {}, d_ff {}",
        base.d_model, base.num_layers, base.num_heads, base.d_ff
    );
    println!("{:<14} {:>14} {:>14}", "model", "parameters", "delta vs sent");
    for kind in ModelKind::ALL {
        let total = count_parameters(&for_kind(kind));
        let delta = total as i64 - sent_total as i64;
        let marker = if focus == Some(kind) { "  <--" } else { "" };
        println!("{:<14} {:>14} {:>+14}{marker}", kind.name(), total, delta);
    }
    if let Some(kind) = focus {
        let total = count_parameters(&for_kind(kind));
        println!(
            "{}: {:.1}M parameters ({:+.2}M vs sentence baseline)",
            kind.name(),
            total as f64 / 1e6,
            (total as i64 - sent_total as i64) as f64 / 1e6
        );
    }
    Ok(())
}
