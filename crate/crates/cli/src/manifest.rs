//! Experiment manifests: the structured-text configuration that, together
//! with a seed, fully determines a run. Every command stores the resolved
//! manifest alongside its outputs, and a resolved manifest is itself a valid
//! `--config` input, so any run can be reproduced from its output directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ctxmt_core::decode::BeamParams;
use ctxmt_core::model::{ModelConfig, ModelKind};
use ctxmt_core::synth::SynthConfig;
use ctxmt_core::train::TrainConfig;

/// Paths to corpus artifacts. Commands only require the entries they read.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusPaths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub heldout_test: Option<PathBuf>,
    pub finetune_train: Option<PathBuf>,
    pub finetune_dev: Option<PathBuf>,
    pub oracle: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
}

/// Model section: a preset plus per-field overrides, mirroring
/// [`ModelConfig`] so a serialized config parses back into this section.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    /// "desk" (default) or "paper".
    pub preset: Option<String>,
    pub kind: Option<ModelKind>,
    pub num_layers: Option<usize>,
    pub num_heads: Option<usize>,
    pub d_model: Option<usize>,
    pub d_ff: Option<usize>,
    pub dropout: Option<f64>,
    pub label_smoothing: Option<f64>,
    pub vocab_size: Option<usize>,
    pub tie_embeddings: Option<bool>,
    pub context_size: Option<usize>,
    pub pool_window: Option<usize>,
    pub pool_stride: Option<usize>,
    pub max_sentence_tokens: Option<usize>,
    pub ctx_sentence_limit: Option<usize>,
    pub domemb_decoder_side: Option<bool>,
}

/// Train section, mirroring [`TrainConfig`] field-for-field.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    /// "document_level" (default) or "fine_tune": the base recipe.
    pub preset: Option<String>,
    pub lr: Option<f64>,
    pub decay_factor: Option<f64>,
    pub patience: Option<usize>,
    pub checkpoint_interval: Option<usize>,
    pub keep_best: Option<usize>,
    pub max_consecutive_decays: Option<usize>,
    pub max_updates: Option<usize>,
    pub batch_tokens: Option<usize>,
    pub seed: Option<u64>,
    /// Warm-start checkpoint: shared parameter names are copied over.
    pub init_from: Option<PathBuf>,
}

/// Decode section, mirroring [`BeamParams`].
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeSection {
    pub beam_size: Option<usize>,
    pub alpha: Option<f64>,
    pub max_len: Option<usize>,
    pub workers: Option<usize>,
}

/// The whole experiment manifest. All fields are optional in the file;
/// command-line flags override whatever the file provides.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentManifest {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Weights produced or consumed by the run.
    pub checkpoint: Option<PathBuf>,
    pub corpus: CorpusPaths,
    pub model: ModelSection,
    pub train: TrainSection,
    pub decode: DecodeSection,
    /// Generator settings; present in corpus manifests.
    pub synth: Option<SynthConfig>,
    /// Test suites `evaluate` runs: names among train/dev/test/heldout_test.
    pub eval_suites: Option<Vec<String>>,
}

impl ExperimentManifest {
    pub fn load(path: &Path) -> Result<ExperimentManifest> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        let mut manifest: ExperimentManifest = toml::from_str(&text)
            .with_context(|| format!("parsing manifest {}", path.display()))?;
        // Relative corpus/checkpoint paths are relative to the manifest file,
        // so a stored manifest keeps working from any working directory.
        if let Some(dir) = path.parent() {
            manifest.rebase(dir);
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).context("serializing manifest")?;
        fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(())
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = dir.join(&path);
                }
            }
        };
        fix(&mut self.checkpoint);
        fix(&mut self.train.init_from);
        let c = &mut self.corpus;
        for p in [
            &mut c.train,
            &mut c.dev,
            &mut c.test,
            &mut c.heldout_test,
            &mut c.finetune_train,
            &mut c.finetune_dev,
            &mut c.oracle,
            &mut c.vocab,
        ] {
            fix(p);
        }
    }

    /// Resolves the model section against a known vocabulary size.
    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let kind = self.model.kind.unwrap_or(ModelKind::Sent);
        let mut cfg = match self.model.preset.as_deref() {
            None | Some("desk") => ModelConfig::desk(kind, vocab_size),
            Some("paper") => ModelConfig::paper(kind, vocab_size),
            Some(other) => bail!("unknown model preset {other:?}: expected desk or paper"),
        };
        let m = &self.model;
        set(&mut cfg.num_layers, m.num_layers);
        set(&mut cfg.num_heads, m.num_heads);
        set(&mut cfg.d_model, m.d_model);
        set(&mut cfg.d_ff, m.d_ff);
        set(&mut cfg.dropout, m.dropout);
        set(&mut cfg.label_smoothing, m.label_smoothing);
        set(&mut cfg.tie_embeddings, m.tie_embeddings);
        set(&mut cfg.context_size, m.context_size);
        set(&mut cfg.pool_window, m.pool_window);
        set(&mut cfg.pool_stride, m.pool_stride);
        set(&mut cfg.max_sentence_tokens, m.max_sentence_tokens);
        set(&mut cfg.ctx_sentence_limit, m.ctx_sentence_limit);
        set(&mut cfg.domemb_decoder_side, m.domemb_decoder_side);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Records a resolved model config back into the manifest.
    pub fn record_model(&mut self, cfg: &ModelConfig) {
        self.model = ModelSection {
            preset: self.model.preset.clone(),
            kind: Some(cfg.kind),
            num_layers: Some(cfg.num_layers),
            num_heads: Some(cfg.num_heads),
            d_model: Some(cfg.d_model),
            d_ff: Some(cfg.d_ff),
            dropout: Some(cfg.dropout),
            label_smoothing: Some(cfg.label_smoothing),
            vocab_size: Some(cfg.vocab_size),
            tie_embeddings: Some(cfg.tie_embeddings),
            context_size: Some(cfg.context_size),
            pool_window: Some(cfg.pool_window),
            pool_stride: Some(cfg.pool_stride),
            max_sentence_tokens: Some(cfg.max_sentence_tokens),
            ctx_sentence_limit: Some(cfg.ctx_sentence_limit),
            domemb_decoder_side: Some(cfg.domemb_decoder_side),
        };
    }

    /// Resolves the train section; `seed` wins over the section's seed.
    pub fn train_config(&self, seed: Option<u64>) -> Result<TrainConfig> {
        let mut cfg = match self.train.preset.as_deref() {
            None | Some("document_level") => TrainConfig::document_level(),
            Some("fine_tune") => TrainConfig::fine_tune(),
            Some(other) => {
                bail!("unknown train preset {other:?}: expected document_level or fine_tune")
            }
        };
        let t = &self.train;
        set(&mut cfg.lr, t.lr);
        set(&mut cfg.decay_factor, t.decay_factor);
        set(&mut cfg.patience, t.patience);
        set(&mut cfg.checkpoint_interval, t.checkpoint_interval);
        set(&mut cfg.keep_best, t.keep_best);
        set(&mut cfg.max_consecutive_decays, t.max_consecutive_decays);
        set(&mut cfg.max_updates, t.max_updates);
        set(&mut cfg.batch_tokens, t.batch_tokens);
        set(&mut cfg.seed, t.seed);
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.seed, seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn record_train(&mut self, cfg: &TrainConfig) {
        self.train = TrainSection {
            preset: self.train.preset.clone(),
            lr: Some(cfg.lr),
            decay_factor: Some(cfg.decay_factor),
            patience: Some(cfg.patience),
            checkpoint_interval: Some(cfg.checkpoint_interval),
            keep_best: Some(cfg.keep_best),
            max_consecutive_decays: Some(cfg.max_consecutive_decays),
            max_updates: Some(cfg.max_updates),
            batch_tokens: Some(cfg.batch_tokens),
            seed: Some(cfg.seed),
            init_from: self.train.init_from.clone(),
        };
    }

    pub fn beam_params(&self) -> BeamParams {
        let mut params = BeamParams::default();
        set(&mut params.beam_size, self.decode.beam_size);
        set(&mut params.alpha, self.decode.alpha);
        if self.decode.max_len.is_some() {
            params.max_len = self.decode.max_len;
        }
        params
    }

    pub fn record_beam(&mut self, params: &BeamParams) {
        self.decode.beam_size = Some(params.beam_size);
        self.decode.alpha = Some(params.alpha);
        self.decode.max_len = params.max_len;
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Required-path accessor with an actionable error.
pub fn require(path: &Option<PathBuf>, what: &str, hint: &str) -> Result<PathBuf> {
    match path {
        Some(p) => {
            if !p.exists() {
                bail!("{what} not found at {}: {hint}", p.display());
            }
            Ok(p.clone())
        }
        None => bail!("no {what} configured: {hint}"),
    }
}
