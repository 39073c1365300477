//! The optimization loop: plateau LR decay, periodic checkpoints, early
//! stopping, checkpoint averaging, warm starts, and fine-tuning.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::data::{batch_by_tokens, TrainingExample, PAD_ID};
use crate::error::{Error, Result};
use crate::model::{
    init_parameters, parameter_shapes, prepare_input, Checkpoint, Dtype, Model, ModelConfig,
    Parameters,
};
use crate::tensor::Tape;
use crate::train::{Adam, AdamConfig};

// ── configuration ──

/// Knobs for one training run. Perplexity on the dev set is the monitored
/// metric throughout: it drives LR decay, early stopping, and checkpoint
/// selection.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Initial Adam learning rate.
    pub lr: f64,
    /// Multiplier applied to the LR on plateau, in (0, 1).
    pub decay_factor: f64,
    /// Number of consecutive non-improving checkpoints that triggers a decay.
    pub patience: usize,
    /// Updates between dev evaluations / checkpoints.
    pub checkpoint_interval: usize,
    /// How many best-by-dev-perplexity checkpoints to average at the end.
    pub keep_best: usize,
    /// Stop after this many LR decays with no improvement in between.
    pub max_consecutive_decays: usize,
    /// Hard cap on optimizer updates (guards desk-scale runs).
    pub max_updates: usize,
    /// Target-token budget per batch.
    pub batch_tokens: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Document-level training defaults: LR 1e-4, decay 0.7 with patience 8,
    /// average the 8 best checkpoints, stop after 3 fruitless decays.
    pub fn document_level() -> TrainConfig {
        TrainConfig {
            lr: 1e-4,
            decay_factor: 0.7,
            patience: 8,
            checkpoint_interval: 200,
            keep_best: 8,
            max_consecutive_decays: 3,
            max_updates: 100_000,
            batch_tokens: 1024,
            seed: 1,
        }
    }

    /// Fine-tuning defaults: identical schedule at LR 1e-5 so the model does
    /// not stray far from its starting point.
    pub fn fine_tune() -> TrainConfig {
        TrainConfig { lr: 1e-5, ..TrainConfig::document_level() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("learning rate {} must be finite and >= 0", self.lr)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::Config(format!(
                "decay factor {} must lie strictly between 0 and 1",
                self.decay_factor
            )));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.checkpoint_interval == 0 {
            return Err(Error::Config("checkpoint interval must be at least 1".into()));
        }
        if self.keep_best == 0 {
            return Err(Error::Config("keep-best count must be at least 1".into()));
        }
        if self.max_consecutive_decays == 0 {
            return Err(Error::Config("early stopping needs at least 1 decay".into()));
        }
        if self.max_updates == 0 {
            return Err(Error::Config("update budget must be at least 1".into()));
        }
        if self.batch_tokens == 0 {
            return Err(Error::Config("batch token budget must be at least 1".into()));
        }
        Ok(())
    }
}

// ── plateau schedule ──

/// What the schedule decided after seeing one dev evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScheduleStep {
    pub improved: bool,
    pub decayed: bool,
    pub stop: bool,
}

/// Plateau-based LR decay with early stopping. Perplexity must strictly
/// improve on the best seen so far to count; `patience` consecutive
/// non-improvements trigger one decay, and `max_consecutive_decays` decays
/// without any improvement in between stop the run.
#[derive(Clone, Debug)]
pub struct PlateauSchedule {
    lr: f64,
    decay_factor: f64,
    patience: usize,
    max_consecutive_decays: usize,
    best: f64,
    bad_streak: usize,
    consecutive_decays: usize,
}

impl PlateauSchedule {
    pub fn new(cfg: &TrainConfig) -> PlateauSchedule {
        PlateauSchedule {
            lr: cfg.lr,
            decay_factor: cfg.decay_factor,
            patience: cfg.patience,
            max_consecutive_decays: cfg.max_consecutive_decays,
            best: f64::INFINITY,
            bad_streak: 0,
            consecutive_decays: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Feeds one dev perplexity to the schedule.
    pub fn observe(&mut self, dev_ppl: f64) -> ScheduleStep {
        if dev_ppl < self.best {
            self.best = dev_ppl;
            self.bad_streak = 0;
            self.consecutive_decays = 0;
            return ScheduleStep { improved: true, decayed: false, stop: false };
        }
        self.bad_streak += 1;
        if self.bad_streak < self.patience {
            return ScheduleStep { improved: false, decayed: false, stop: false };
        }
        self.bad_streak = 0;
        self.lr *= self.decay_factor;
        self.consecutive_decays += 1;
        ScheduleStep {
            improved: false,
            decayed: true,
            stop: self.consecutive_decays >= self.max_consecutive_decays,
        }
    }
}

// ── evaluation ──

/// Dev-set perplexity: exp of the mean unsmoothed negative log-likelihood
/// per gold token, computed in eval mode (no dropout).
pub fn corpus_perplexity(model: &Model, examples: &[TrainingExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Invalid("perplexity over an empty example set".into()));
    }
    let mut nll = 0.0;
    let mut tokens = 0usize;
    for ex in examples {
        let input = prepare_input(&model.cfg, ex)?;
        let mut tape = Tape::new(0);
        tape.set_train(false);
        let logits = model.forward_logits(&mut tape, &input);
        let log_probs = tape.log_softmax_rows(logits);
        let loss = tape.nll_smoothed(log_probs, &input.gold, 0.0, PAD_ID);
        nll += tape.value(loss).at(0, 0);
        tokens += input.gold.iter().filter(|&&g| g != PAD_ID).count();
    }
    if tokens == 0 {
        return Err(Error::Invalid("perplexity over zero gold tokens".into()));
    }
    Ok((nll / tokens as f64).exp())
}

// ── training loop ──

/// One dev evaluation, kept both in memory (parameters are `Arc`-shared, so
/// a record is cheap) and optionally on disk.
#[derive(Clone)]
pub struct CheckpointRecord {
    pub step: u64,
    pub dev_ppl: f64,
    pub params: Parameters,
    pub path: Option<PathBuf>,
}

/// One line of the training log.
#[derive(Clone, Debug)]
pub struct LogEntry {
    pub step: u64,
    pub lr: f64,
    /// Mean train loss over the updates since the previous entry; NaN for
    /// the pre-training entry at step 0.
    pub train_loss: f64,
    pub dev_ppl: f64,
    pub path: Option<PathBuf>,
}

impl LogEntry {
    pub const TSV_HEADER: &'static str = "step\tlr\ttrain_loss\tdev_ppl\tcheckpoint";

    pub fn tsv_line(&self) -> String {
        let mut line = String::new();
        write!(
            line,
            "{}\t{:.8}\t{:.6}\t{:.6}\t{}",
            self.step,
            self.lr,
            self.train_loss,
            self.dev_ppl,
            self.path.as_ref().map_or("-".to_string(), |p| p.display().to_string()),
        )
        .expect("writing to a String cannot fail");
        line
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// The LR decayed `max_consecutive_decays` times without improvement.
    EarlyStopped,
    /// The `max_updates` budget ran out first.
    UpdateBudget,
}

pub struct TrainOutcome {
    /// Every checkpoint taken, in step order, starting with step 0.
    pub history: Vec<CheckpointRecord>,
    pub log: Vec<LogEntry>,
    /// Index into `history` of the lowest dev perplexity (ties → earliest).
    pub best: usize,
    pub updates: u64,
    pub stop: StopReason,
}

impl TrainOutcome {
    pub fn best_record(&self) -> &CheckpointRecord {
        &self.history[self.best]
    }
}

fn preflight(model: &Model, examples: &[TrainingExample], role: &str) -> Result<()> {
    if examples.is_empty() {
        return Err(Error::Invalid(format!("{role} set is empty")));
    }
    let v = model.cfg.vocab_size;
    for ex in examples {
        let ids = ex
            .src
            .iter()
            .chain(ex.tgt.iter())
            .chain(ex.ctx_sentences.iter().flatten())
            .chain(ex.tag.iter());
        for &id in ids {
            if id >= v {
                return Err(Error::Invalid(format!(
                    "{role} example in {} has token id {} but the model's vocabulary has {} entries",
                    ex.doc_id, id, v
                )));
            }
        }
    }
    Ok(())
}

fn write_checkpoint(
    model: &Model,
    dir: Option<&Path>,
    step: u64,
    dev_ppl: f64,
) -> Result<Option<PathBuf>> {
    let Some(dir) = dir else { return Ok(None) };
    let path = dir.join(format!("checkpoint-{step:06}.ckpt"));
    Checkpoint::of_model(model, step, Some(dev_ppl)).save(&path, Dtype::F32)?;
    Ok(Some(path))
}

/// Runs the optimization loop on `model` in place, reporting each checkpoint
/// to `hook` as it is taken. Checkpoints are also written under `ckpt_dir`
/// when one is given. The model ends at its final optimizer state; selection
/// among checkpoints is the caller's move (see [`train_and_average`]).
pub fn train_with<F: FnMut(&LogEntry)>(
    model: &mut Model,
    train_set: &[TrainingExample],
    dev_set: &[TrainingExample],
    cfg: &TrainConfig,
    ckpt_dir: Option<&Path>,
    mut hook: F,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    preflight(model, train_set, "train")?;
    preflight(model, dev_set, "dev")?;

    let mut schedule = PlateauSchedule::new(cfg);
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut history: Vec<CheckpointRecord> = Vec::new();
    let mut log: Vec<LogEntry> = Vec::new();

    let checkpoint = |model: &Model,
                          schedule: &mut PlateauSchedule,
                          history: &mut Vec<CheckpointRecord>,
                          log: &mut Vec<LogEntry>,
                          hook: &mut F,
                          step: u64,
                          train_loss: f64|
     -> Result<ScheduleStep> {
        let dev_ppl = corpus_perplexity(model, dev_set)?;
        if !dev_ppl.is_finite() {
            return Err(Error::Diverged { step, msg: format!("dev perplexity {dev_ppl}") });
        }
        let path = write_checkpoint(model, ckpt_dir, step, dev_ppl)?;
        history.push(CheckpointRecord {
            step,
            dev_ppl,
            params: model.params.clone(),
            path: path.clone(),
        });
        let decision = schedule.observe(dev_ppl);
        let entry = LogEntry { step, lr: schedule.lr(), train_loss, dev_ppl, path };
        hook(&entry);
        log.push(entry);
        Ok(decision)
    };

    // The pre-training state is checkpoint zero, so selection can never
    // regress the monitored metric below where the run started.
    checkpoint(model, &mut schedule, &mut history, &mut log, &mut hook, 0, f64::NAN)?;

    let mut step: u64 = 0;
    let mut epoch: u64 = 0;
    let mut interval_loss_sum = 0.0;
    let mut interval_updates = 0usize;
    let mut stop = StopReason::UpdateBudget;

    'training: loop {
        let batches = batch_by_tokens(train_set, cfg.batch_tokens, cfg.seed.wrapping_add(epoch))?;
        epoch += 1;
        for batch in &batches {
            step += 1;
            let mut tape = Tape::new(cfg.seed ^ step.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            tape.set_train(true);
            let (loss, _tokens) = model.batch_loss(&mut tape, &batch.examples)?;
            let loss_value = tape.value(loss).at(0, 0);
            if !loss_value.is_finite() {
                return Err(Error::Diverged { step, msg: format!("train loss {loss_value}") });
            }
            tape.backward(loss);
            adam.set_lr(schedule.lr());
            adam.step(&mut model.params, &tape.param_grads()).map_err(|e| match e {
                Error::Invalid(msg) => Error::Diverged { step, msg },
                other => other,
            })?;
            interval_loss_sum += loss_value;
            interval_updates += 1;

            if step % cfg.checkpoint_interval as u64 == 0 {
                let mean_loss = interval_loss_sum / interval_updates as f64;
                interval_loss_sum = 0.0;
                interval_updates = 0;
                let decision =
                    checkpoint(model, &mut schedule, &mut history, &mut log, &mut hook, step, mean_loss)?;
                if decision.stop {
                    stop = StopReason::EarlyStopped;
                    break 'training;
                }
            }
            if step >= cfg.max_updates as u64 {
                if interval_updates > 0 {
                    let mean_loss = interval_loss_sum / interval_updates as f64;
                    checkpoint(model, &mut schedule, &mut history, &mut log, &mut hook, step, mean_loss)?;
                }
                break 'training;
            }
        }
    }

    let best = best_index(&history);
    Ok(TrainOutcome { history, log, best, updates: step, stop })
}

/// [`train_with`] without a progress hook.
pub fn train(
    model: &mut Model,
    train_set: &[TrainingExample],
    dev_set: &[TrainingExample],
    cfg: &TrainConfig,
    ckpt_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    train_with(model, train_set, dev_set, cfg, ckpt_dir, |_| {})
}

fn best_index(history: &[CheckpointRecord]) -> usize {
    let mut best = 0;
    for (i, rec) in history.iter().enumerate() {
        if rec.dev_ppl < history[best].dev_ppl {
            best = i;
        }
    }
    best
}

// ── checkpoint averaging ──

/// Arithmetic mean of the `n` best checkpoints by dev perplexity (ties →
/// earlier step), capped at what the history holds. Selection and summation
/// order depend only on (perplexity, step), so permuting the history leaves
/// the result bit-identical.
pub fn average_checkpoints(history: &[CheckpointRecord], n: usize) -> Result<Parameters> {
    if history.is_empty() {
        return Err(Error::Invalid("cannot average an empty checkpoint history".into()));
    }
    let mut order: Vec<&CheckpointRecord> = history.iter().collect();
    order.sort_by(|a, b| {
        a.dev_ppl.total_cmp(&b.dev_ppl).then_with(|| a.step.cmp(&b.step))
    });
    order.truncate(n.min(order.len()));
    order.sort_by_key(|rec| rec.step);
    let snapshots: Vec<Parameters> = order.iter().map(|rec| rec.params.clone()).collect();
    crate::model::average_parameters(&snapshots)
}

/// Full regime for one model: train to early stop, average the best
/// checkpoints, then keep whichever of (average, best single checkpoint)
/// has the lower dev perplexity. The guard means selection never regresses
/// the monitored metric, even when a desk-scale history is too short or too
/// noisy for averaging to help.
pub struct AveragedOutcome {
    pub outcome: TrainOutcome,
    /// Dev perplexity of the parameters the model ended up with.
    pub dev_ppl: f64,
    /// True when the averaged parameters won the final comparison.
    pub used_average: bool,
}

pub fn train_and_average<F: FnMut(&LogEntry)>(
    model: &mut Model,
    train_set: &[TrainingExample],
    dev_set: &[TrainingExample],
    cfg: &TrainConfig,
    ckpt_dir: Option<&Path>,
    hook: F,
) -> Result<AveragedOutcome> {
    let outcome = train_with(model, train_set, dev_set, cfg, ckpt_dir, hook)?;
    let averaged = average_checkpoints(&outcome.history, cfg.keep_best)?;
    let best = outcome.best_record();
    let best_ppl = best.dev_ppl;
    let best_params = best.params.clone();

    model.params = averaged;
    let avg_ppl = corpus_perplexity(model, dev_set)?;
    if avg_ppl <= best_ppl {
        Ok(AveragedOutcome { outcome, dev_ppl: avg_ppl, used_average: true })
    } else {
        model.params = best_params;
        Ok(AveragedOutcome { outcome, dev_ppl: best_ppl, used_average: false })
    }
}

// ── warm start ──

/// Which parameters a warm start copied and which it initialized fresh.
#[derive(Clone, Debug)]
pub struct InitReport {
    pub copied: Vec<String>,
    pub fresh: Vec<String>,
}

/// Builds a model of `cfg` from a baseline checkpoint: names the target
/// architecture shares with the checkpoint are copied (shapes must match),
/// the rest are freshly initialized from `seed`. The checkpoint fingerprint
/// is deliberately not checked, since the whole point is crossing
/// architectures.
pub fn init_from_checkpoint(
    cfg: &ModelConfig,
    baseline: &Checkpoint,
    seed: u64,
) -> Result<(Model, InitReport)> {
    cfg.validate()?;
    let fresh_init = init_parameters(cfg, seed);
    let mut params: Parameters = IndexMap::new();
    let mut report = InitReport { copied: Vec::new(), fresh: Vec::new() };
    for (name, shape) in parameter_shapes(cfg) {
        match baseline.params.get(&name) {
            Some(tensor) => {
                if tensor.shape() != shape.as_slice() {
                    return Err(Error::Checkpoint(format!(
                        "shared parameter {} has shape {:?} in the checkpoint but {:?} in the target",
                        name,
                        tensor.shape(),
                        shape
                    )));
                }
                params.insert(name.clone(), tensor.clone());
                report.copied.push(name);
            }
            None => {
                let tensor = fresh_init
                    .get(&name)
                    .expect("parameter_shapes and init_parameters enumerate the same names")
                    .clone();
                params.insert(name.clone(), tensor);
                report.fresh.push(name);
            }
        }
    }
    let model = Model::from_parts(cfg.clone(), params)?;
    Ok((model, report))
}

/// Continues training an existing model on in-domain data. The vocabulary
/// must match; the low fine-tuning LR is the caller's choice via `cfg`.
pub fn fine_tune<F: FnMut(&LogEntry)>(
    model: &mut Model,
    in_domain_train: &[TrainingExample],
    in_domain_dev: &[TrainingExample],
    cfg: &TrainConfig,
    ckpt_dir: Option<&Path>,
    hook: F,
) -> Result<AveragedOutcome> {
    train_and_average(model, in_domain_train, in_domain_dev, cfg, ckpt_dir, hook)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelKind, CTX_PREFIX};

    fn tiny_cfg(kind: ModelKind) -> ModelConfig {
        let mut cfg = ModelConfig::desk(kind, 12);
        cfg.d_model = 8;
        cfg.d_ff = 16;
        cfg.num_heads = 2;
        cfg.num_layers = 2;
        cfg.context_size = 2;
        cfg.pool_window = 2;
        cfg.pool_stride = 2;
        cfg
    }

    fn example(src: Vec<usize>, tgt: Vec<usize>, doc: &str, pos: usize) -> TrainingExample {
        TrainingExample {
            src,
            tgt,
            ctx_sentences: vec![],
            domain: "d1".into(),
            tag: None,
            doc_id: doc.into(),
            position: pos,
        }
    }

    /// Copy-task corpus: the target repeats the source. Ids 5..=11 are the
    /// usable content alphabet under the tiny 12-entry vocabulary.
    fn copy_corpus(n: usize, seed: u64) -> Vec<TrainingExample> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let len = rng.gen_range(2..=4);
                let toks: Vec<usize> = (0..len).map(|_| rng.gen_range(5..12)).collect();
                example(toks.clone(), toks, &format!("doc{i}"), 0)
            })
            .collect()
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            lr: 1e-2,
            decay_factor: 0.7,
            patience: 2,
            checkpoint_interval: 5,
            keep_best: 4,
            max_consecutive_decays: 3,
            max_updates: 40,
            batch_tokens: 64,
            seed: 7,
        }
    }

    // ── schedule contract ──

    #[test]
    fn strictly_improving_perplexity_never_decays() {
        let cfg = TrainConfig { patience: 8, ..quick_cfg() };
        let mut sched = PlateauSchedule::new(&cfg);
        let lr0 = sched.lr();
        for i in 0..50 {
            let step = sched.observe(100.0 - i as f64);
            assert!(step.improved && !step.decayed && !step.stop);
        }
        assert_eq!(sched.lr(), lr0, "improving runs must keep the initial LR");
    }

    #[test]
    fn nine_flat_checkpoints_decay_exactly_once() {
        let cfg = TrainConfig { patience: 8, ..quick_cfg() };
        let mut sched = PlateauSchedule::new(&cfg);
        sched.observe(10.0);
        let mut decays = 0;
        for _ in 0..9 {
            if sched.observe(10.0).decayed {
                decays += 1;
            }
        }
        assert_eq!(decays, 1, "patience 8 must fire on the 8th flat checkpoint only");
        assert!((sched.lr() - cfg.lr * 0.7).abs() < 1e-15);
    }

    #[test]
    fn improvement_resets_the_decay_streak() {
        let cfg = TrainConfig { patience: 1, max_consecutive_decays: 3, ..quick_cfg() };
        let mut sched = PlateauSchedule::new(&cfg);
        sched.observe(10.0);
        assert!(sched.observe(10.0).decayed);
        assert!(sched.observe(10.0).decayed);
        assert!(sched.observe(5.0).improved, "a new best resets both streaks");
        assert!(sched.observe(10.0).decayed);
        let third = (0..2).map(|_| sched.observe(10.0)).last().unwrap();
        assert!(third.stop, "three decays without improvement stop the run");
    }

    #[test]
    fn third_fruitless_decay_stops() {
        let cfg = TrainConfig { patience: 2, max_consecutive_decays: 3, ..quick_cfg() };
        let mut sched = PlateauSchedule::new(&cfg);
        sched.observe(10.0);
        let mut stopped_at = None;
        for i in 1..=6 {
            if sched.observe(10.0).stop {
                stopped_at = Some(i);
                break;
            }
        }
        assert_eq!(stopped_at, Some(6), "patience 2 × 3 decays = 6 flat checkpoints");
    }

    // ── config validation ──

    #[test]
    fn invalid_configs_are_rejected() {
        for mutate in [
            (|c: &mut TrainConfig| c.decay_factor = 1.0) as fn(&mut TrainConfig),
            |c| c.decay_factor = 0.0,
            |c| c.patience = 0,
            |c| c.checkpoint_interval = 0,
            |c| c.keep_best = 0,
            |c| c.max_updates = 0,
            |c| c.batch_tokens = 0,
            |c| c.lr = f64::NAN,
        ] {
            let mut cfg = quick_cfg();
            mutate(&mut cfg);
            assert!(cfg.validate().is_err(), "mutation should invalidate the config");
        }
        assert!(quick_cfg().validate().is_ok());
    }

    // ── training behavior ──

    #[test]
    fn toy_training_improves_dev_perplexity() {
        let train_set = copy_corpus(30, 1);
        let dev_set = copy_corpus(8, 2);
        let mut model = Model::new(tiny_cfg(ModelKind::Sent), 0);
        let outcome = train(&mut model, &train_set, &dev_set, &quick_cfg(), None).unwrap();
        let first = outcome.history[0].dev_ppl;
        let best = outcome.best_record().dev_ppl;
        assert!(
            best < first,
            "best checkpoint ({best}) must improve on the random init ({first})"
        );
        assert!(outcome.history.len() >= 2, "the run must take real checkpoints");
        assert_eq!(outcome.history[0].step, 0, "history starts at the pre-training state");
    }

    #[test]
    fn training_is_deterministic_under_a_fixed_seed() {
        let train_set = copy_corpus(20, 3);
        let dev_set = copy_corpus(6, 4);
        let cfg = TrainConfig { max_updates: 12, ..quick_cfg() };
        let run = || {
            let mut model = Model::new(tiny_cfg(ModelKind::Sent), 0);
            train(&mut model, &train_set, &dev_set, &cfg, None).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.log.len(), b.log.len());
        for (la, lb) in a.log.iter().zip(&b.log) {
            assert_eq!(la.dev_ppl.to_bits(), lb.dev_ppl.to_bits(), "dev ppl must be bit-exact");
            assert_eq!(
                la.train_loss.to_bits(),
                lb.train_loss.to_bits(),
                "train loss must be bit-exact"
            );
        }
    }

    #[test]
    fn one_example_memorization_approaches_the_smoothing_floor() {
        // The smoothed cross-entropy is bounded below by the entropy of the
        // target distribution: (1-ε) on gold, ε/(V-2) on each other live id.
        let cfg = tiny_cfg(ModelKind::Sent);
        let (eps, v) = (cfg.label_smoothing, cfg.vocab_size as f64);
        let floor = -(1.0 - eps) * (1.0 - eps).ln() - eps * (eps / (v - 2.0)).ln();

        let corpus = vec![example(vec![5, 6, 7], vec![5, 6, 7], "only", 0)];
        let mut model = Model::new(cfg, 0);
        let train_cfg = TrainConfig {
            max_updates: 250,
            checkpoint_interval: 50,
            batch_tokens: 16,
            ..quick_cfg()
        };
        let outcome = train(&mut model, &corpus, &corpus, &train_cfg, None).unwrap();
        let final_loss = outcome.log.last().unwrap().train_loss;
        assert!(
            final_loss >= floor - 1e-9,
            "no model can beat the smoothing floor: {final_loss} vs {floor}"
        );
        assert!(
            final_loss < floor + 0.25,
            "memorizing one example should approach the floor: {final_loss} vs {floor}"
        );
    }

    #[test]
    fn empty_corpora_and_oversized_ids_are_rejected() {
        let mut model = Model::new(tiny_cfg(ModelKind::Sent), 0);
        let good = copy_corpus(4, 5);
        assert!(train(&mut model, &[], &good, &quick_cfg(), None).is_err());
        assert!(train(&mut model, &good, &[], &quick_cfg(), None).is_err());
        let bad = vec![example(vec![5, 99], vec![5], "bad", 0)];
        assert!(
            train(&mut model, &bad, &good, &quick_cfg(), None).is_err(),
            "token id beyond the vocabulary must be rejected up front"
        );
    }

    #[test]
    fn checkpoints_land_on_disk_with_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let train_set = copy_corpus(10, 6);
        let cfg = TrainConfig { max_updates: 10, checkpoint_interval: 5, ..quick_cfg() };
        let mut model = Model::new(tiny_cfg(ModelKind::Sent), 0);
        let outcome = train(&mut model, &train_set, &train_set, &cfg, Some(dir.path())).unwrap();
        for rec in &outcome.history {
            let path = rec.path.as_ref().expect("disk directory given, path expected");
            let loaded = Checkpoint::load(path).unwrap();
            assert_eq!(loaded.step, rec.step);
            let stored = loaded.dev_ppl.unwrap();
            // F32 storage rounds the metadata payload's neighbors, not the
            // header, so dev_ppl survives exactly.
            assert_eq!(stored, rec.dev_ppl);
        }
    }

    // ── averaging ──

    fn record(step: u64, ppl: f64, fill: f64) -> CheckpointRecord {
        use crate::tensor::Tensor;
        use std::sync::Arc;
        let mut params: Parameters = IndexMap::new();
        params.insert("w".into(), Arc::new(Tensor::filled(&[2, 2], fill)));
        CheckpointRecord { step, dev_ppl: ppl, params, path: None }
    }

    #[test]
    fn averaging_identical_checkpoints_is_identity() {
        let hist = vec![record(1, 5.0, 3.0), record(2, 4.0, 3.0), record(3, 6.0, 3.0)];
        let avg = average_checkpoints(&hist, 3).unwrap();
        assert_eq!(avg["w"].data(), &[3.0; 4]);
    }

    #[test]
    fn averaging_two_checkpoints_takes_the_mean() {
        let hist = vec![record(1, 5.0, 0.0), record(2, 4.0, 2.0)];
        let avg = average_checkpoints(&hist, 2).unwrap();
        assert_eq!(avg["w"].data(), &[1.0; 4]);
    }

    #[test]
    fn selection_is_by_perplexity_not_recency() {
        let hist = vec![record(1, 9.0, 1.0), record(2, 3.0, 42.0), record(3, 8.0, 7.0)];
        let avg = average_checkpoints(&hist, 1).unwrap();
        assert_eq!(avg["w"].data(), &[42.0; 4], "the best checkpoint is the middle one");
    }

    #[test]
    fn averaging_is_permutation_invariant() {
        let a = vec![record(1, 9.0, 1.0), record(2, 3.0, 4.0), record(3, 8.0, 7.0)];
        let mut b = a.clone();
        b.reverse();
        let (avg_a, avg_b) =
            (average_checkpoints(&a, 2).unwrap(), average_checkpoints(&b, 2).unwrap());
        assert_eq!(avg_a["w"].data(), avg_b["w"].data());
    }

    #[test]
    fn n_is_capped_at_the_history_length() {
        let hist = vec![record(1, 5.0, 2.0)];
        let avg = average_checkpoints(&hist, 8).unwrap();
        assert_eq!(avg["w"].data(), &[2.0; 4]);
        assert!(average_checkpoints(&[], 8).is_err());
    }

    // ── warm start ──

    #[test]
    fn domemb_max_warm_start_adds_no_parameters() {
        let base = Model::new(tiny_cfg(ModelKind::Sent), 0);
        let ckpt = Checkpoint::of_model(&base, 100, Some(3.0));
        let (model, report) =
            init_from_checkpoint(&tiny_cfg(ModelKind::DomembMax), &ckpt, 9).unwrap();
        assert!(report.fresh.is_empty(), "max pooling is parameter-free");
        assert_eq!(report.copied.len(), model.params.len());
    }

    #[test]
    fn domemb_avg_warm_start_adds_exactly_the_ffnn() {
        let base = Model::new(tiny_cfg(ModelKind::Sent), 0);
        let ckpt = Checkpoint::of_model(&base, 100, Some(3.0));
        let (_, report) = init_from_checkpoint(&tiny_cfg(ModelKind::DomembAvg), &ckpt, 9).unwrap();
        let mut fresh = report.fresh.clone();
        fresh.sort();
        assert_eq!(
            fresh,
            vec!["ctx/pool_ffn.b1", "ctx/pool_ffn.b2", "ctx/pool_ffn.w1", "ctx/pool_ffn.w2"]
        );
    }

    #[test]
    fn ctxpool_warm_start_adds_only_context_prefixed_names() {
        let base = Model::new(tiny_cfg(ModelKind::Sent), 0);
        let ckpt = Checkpoint::of_model(&base, 100, Some(3.0));
        let (model, report) =
            init_from_checkpoint(&tiny_cfg(ModelKind::CtxpoolAvg), &ckpt, 9).unwrap();
        assert!(!report.fresh.is_empty());
        for name in &report.fresh {
            assert!(name.starts_with(CTX_PREFIX), "{name} should be context-specific");
        }
        for name in &report.copied {
            assert!(!name.starts_with(CTX_PREFIX), "{name} should come from the baseline");
            let (a, b) = (&model.params[name.as_str()], &ckpt.params[name.as_str()]);
            assert_eq!(a.data(), b.data(), "copied parameters must be bitwise identical");
        }
    }

    #[test]
    fn shared_shape_mismatch_is_an_error() {
        let mut small = tiny_cfg(ModelKind::Sent);
        small.d_ff = 8;
        let base = Model::new(small, 0);
        let ckpt = Checkpoint::of_model(&base, 1, None);
        let err = init_from_checkpoint(&tiny_cfg(ModelKind::DomembAvg), &ckpt, 9);
        assert!(err.is_err(), "d_ff mismatch on a shared name must fail");
    }

    #[test]
    fn warm_start_with_ablated_context_reproduces_baseline_perplexity() {
        // Context-free examples ablate the context path: DomEmb sees no
        // domain vector at all and CtxPool's merge is bypassed outright.
        let dev = copy_corpus(6, 8);
        let base = Model::new(tiny_cfg(ModelKind::Sent), 3);
        let base_ppl = corpus_perplexity(&base, &dev).unwrap();
        let ckpt = Checkpoint::of_model(&base, 0, Some(base_ppl));
        for kind in [
            ModelKind::DomembMax,
            ModelKind::DomembAvg,
            ModelKind::CtxpoolMax,
            ModelKind::CtxpoolAvg,
        ] {
            let (warm, _) = init_from_checkpoint(&tiny_cfg(kind), &ckpt, 77).unwrap();
            let warm_ppl = corpus_perplexity(&warm, &dev).unwrap();
            assert!(
                (warm_ppl - base_ppl).abs() <= 1e-6,
                "{kind}: warm start must reproduce the baseline ({warm_ppl} vs {base_ppl})"
            );
        }
    }

    // ── fine-tuning ──

    #[test]
    fn zero_lr_fine_tune_leaves_parameters_unchanged() {
        let corpus = copy_corpus(6, 9);
        let mut model = Model::new(tiny_cfg(ModelKind::Sent), 0);
        let before: Vec<Vec<f64>> =
            model.params.values().map(|t| t.data().to_vec()).collect();
        let cfg = TrainConfig { lr: 0.0, max_updates: 6, ..quick_cfg() };
        fine_tune(&mut model, &corpus, &corpus, &cfg, None, |_| {}).unwrap();
        for (tensor, old) in model.params.values().zip(&before) {
            assert_eq!(tensor.data(), old.as_slice(), "LR 0 must be a no-op");
        }
    }

    #[test]
    fn fine_tuning_never_regresses_the_monitored_perplexity() {
        let pretrain = copy_corpus(20, 10);
        let in_domain = copy_corpus(10, 11);
        let in_dev = copy_corpus(5, 12);
        let mut model = Model::new(tiny_cfg(ModelKind::Sent), 0);
        let cfg = TrainConfig { max_updates: 20, ..quick_cfg() };
        train(&mut model, &pretrain, &pretrain, &cfg, None).unwrap();
        let before = corpus_perplexity(&model, &in_dev).unwrap();
        let ft_cfg = TrainConfig { lr: 1e-3, max_updates: 10, ..quick_cfg() };
        let result = fine_tune(&mut model, &in_domain, &in_dev, &ft_cfg, None, |_| {}).unwrap();
        assert!(
            result.dev_ppl <= before + 1e-12,
            "checkpoint selection includes step 0, so the metric cannot regress: {} vs {before}",
            result.dev_ppl
        );
        let check = corpus_perplexity(&model, &in_dev).unwrap();
        assert!((check - result.dev_ppl).abs() < 1e-9, "model must end at the selected params");
    }

    #[test]
    fn log_lines_are_tab_separated_and_parseable() {
        let train_set = copy_corpus(8, 13);
        let cfg = TrainConfig { max_updates: 5, checkpoint_interval: 5, ..quick_cfg() };
        let mut model = Model::new(tiny_cfg(ModelKind::Sent), 0);
        let mut seen = Vec::new();
        train_with(&mut model, &train_set, &train_set, &cfg, None, |e| {
            seen.push(e.tsv_line());
        })
        .unwrap();
        assert_eq!(LogEntry::TSV_HEADER.split('\t').count(), 5);
        assert!(seen.len() >= 2);
        for line in &seen {
            let fields: Vec<&str> = line.split('\t').collect();
            assert_eq!(fields.len(), 5, "log line must have 5 tab-separated fields");
            fields[0].parse::<u64>().expect("step parses");
            fields[1].parse::<f64>().expect("lr parses");
            fields[2].parse::<f64>().expect("train loss parses (NaN included)");
            fields[3].parse::<f64>().expect("dev ppl parses");
        }
        assert!(seen[0].split('\t').nth(2).unwrap().parse::<f64>().unwrap().is_nan());
    }
}
