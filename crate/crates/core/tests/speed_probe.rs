//! Fleet dry run: trains the full acceptance model set, caches checkpoints
//! and hypothesis files under target/tmp, and prints the seed-level margins.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ctxmt_core::data::{build_examples, reference_lines, Document, TrainingExample, Vocabulary};
use ctxmt_core::decode::{surface_text, translate_corpus, translate_corpus_ensemble, BeamParams};
use ctxmt_core::eval::corpus_bleu;
use ctxmt_core::model::{Checkpoint, Dtype, Model, ModelConfig, ModelKind};
use ctxmt_core::synth::{generate, oracle_disambiguation_score, SynthConfig};
use ctxmt_core::train::{fine_tune, train_and_average, TrainConfig};

const CORPUS_SEED: u64 = 11;
const BASE_UPDATES: usize = 1500;
const FT_UPDATES: usize = 500;

fn cache_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-cache");
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn key(kind: ModelKind, k: usize, seed: u64, updates: usize, vocab_len: usize, suffix: &str) -> String {
    format!("{}-k{k}-s{seed}-u{updates}-c{CORPUS_SEED}-v{vocab_len}{suffix}", kind.name())
}

fn base_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        lr: 1e-3,
        checkpoint_interval: 100,
        max_updates: BASE_UPDATES,
        batch_tokens: 400,
        seed,
        ..TrainConfig::document_level()
    }
}

fn ft_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        lr: 3e-4,
        checkpoint_interval: 50,
        max_updates: FT_UPDATES,
        batch_tokens: 400,
        seed,
        ..TrainConfig::fine_tune()
    }
}

fn model_config(kind: ModelKind, k: usize, vocab_len: usize) -> ModelConfig {
    let mut cfg = ModelConfig::desk(kind, vocab_len);
    cfg.context_size = k;
    cfg
}

fn train_or_load(
    path: &Path,
    cfg: ModelConfig,
    train: &[TrainingExample],
    dev: &[TrainingExample],
    tcfg: &TrainConfig,
) -> (Model, f64, bool) {
    if path.exists() {
        let ckpt = Checkpoint::load(path).unwrap();
        let ppl = ckpt.dev_ppl.expect("cached fleet checkpoints store dev ppl");
        return (ckpt.into_model(cfg).unwrap(), ppl, true);
    }
    let mut model = Model::new(cfg, tcfg.seed);
    let avg = train_and_average(&mut model, train, dev, tcfg, None, |_| {}).unwrap();
    Checkpoint::of_model(&model, avg.outcome.updates, Some(avg.dev_ppl))
        .save(path, Dtype::F64)
        .unwrap();
    (model, avg.dev_ppl, false)
}

fn decode_or_load(
    path: &Path,
    model: &Model,
    examples: &[TrainingExample],
    vocab: &Vocabulary,
    beam: &BeamParams,
) -> Vec<String> {
    if path.exists() {
        return fs::read_to_string(path).unwrap().lines().map(str::to_string).collect();
    }
    let hyps: Vec<String> = translate_corpus(model, examples, beam)
        .unwrap()
        .iter()
        .map(|h| surface_text(vocab, h))
        .collect();
    fs::write(path, hyps.join("\n") + "\n").unwrap();
    hyps
}

#[test]
fn probe() {
    let dir = cache_dir();
    let corpus = generate(&SynthConfig::desk(CORPUS_SEED)).unwrap();
    let train_docs = corpus.train_documents();
    let dev_docs = corpus.dev_documents();
    let test_docs = corpus.test_documents();
    let vocab = Vocabulary::build(&train_docs);
    let v = vocab.len();
    let z_refs = reference_lines(&corpus.heldout_test);
    let test_refs = reference_lines(&test_docs);
    let beam = BeamParams::with_beam(4);

    let examples = |docs: &[Document], k: usize| build_examples(docs, &vocab, k, 100);

    let mut z_scores: Vec<((ModelKind, usize, u64), f64, f64)> = Vec::new();
    let fleet: Vec<(ModelKind, usize, u64)> = [(ModelKind::DomembAvg, 10), (ModelKind::DomembAvg, 5), (ModelKind::Sent, 10), (ModelKind::DomembAvg, 1)]
        .into_iter()
        .flat_map(|(kind, k)| [1u64, 2, 3].map(|s| (kind, k, s)))
        .collect();
    for &(kind, k, seed) in &fleet {
        let t0 = Instant::now();
        let train = examples(&train_docs, k);
        let dev = examples(&dev_docs, k);
        let name = key(kind, k, seed, BASE_UPDATES, v, "");
        let (model, ppl, cached) = train_or_load(
            &dir.join(format!("{name}.ckpt")),
            model_config(kind, k, v),
            &train,
            &dev,
            &base_train_config(seed),
        );
        let z = examples(&corpus.heldout_test, k);
        let hyps = decode_or_load(&dir.join(format!("{name}-z.hyps")), &model, &z, &vocab, &beam);
        let bleu = corpus_bleu(&hyps, &z_refs, 4).unwrap().score;
        let oracle = oracle_disambiguation_score(&corpus.heldout_test, &hyps, &corpus.oracle).unwrap();
        println!(
            "{} k={k} s={seed}{}: {:.0}s ppl {:.4} | Z BLEU {bleu:.2} oracle {:.4} ({}/{})",
            kind.name(),
            if cached { " (cached)" } else { "" },
            t0.elapsed().as_secs_f64(),
            ppl,
            oracle.accuracy,
            oracle.matched,
            oracle.total,
        );
        z_scores.push(((kind, k, seed), bleu, oracle.accuracy));
    }

    // Seed-averaged criterion margins.
    let avg = |kind: ModelKind, k: usize, col: usize| -> f64 {
        let vals: Vec<f64> = z_scores
            .iter()
            .filter(|(id, _, _)| id.0 == kind && id.1 == k)
            .map(|(_, b, o)| if col == 0 { *b } else { *o })
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    };
    println!(
        "averages: k10 oracle {:.4} | k5 {:.4} | k1 {:.4} | sent {:.4}",
        avg(ModelKind::DomembAvg, 10, 1),
        avg(ModelKind::DomembAvg, 5, 1),
        avg(ModelKind::DomembAvg, 1, 1),
        avg(ModelKind::Sent, 10, 1),
    );
    println!(
        "averages: k10 BLEU {:.2} | k5 {:.2} | k1 {:.2} | sent {:.2}",
        avg(ModelKind::DomembAvg, 10, 0),
        avg(ModelKind::DomembAvg, 5, 0),
        avg(ModelKind::DomembAvg, 1, 0),
        avg(ModelKind::Sent, 10, 0),
    );

    // Timing model for the speed criterion.
    {
        let t0 = Instant::now();
        let k = 10;
        let train = examples(&train_docs, k);
        let dev = examples(&dev_docs, k);
        let mut tcfg = base_train_config(1);
        tcfg.max_updates = 800;
        let name = key(ModelKind::CtxpoolAvg, k, 1, 800, v, "");
        let (_, ppl, cached) = train_or_load(
            &dir.join(format!("{name}.ckpt")),
            model_config(ModelKind::CtxpoolAvg, k, v),
            &train,
            &dev,
            &tcfg,
        );
        println!(
            "ctxpool_avg k=10 s=1 (800u){}: {:.0}s ppl {ppl:.4}",
            if cached { " (cached)" } else { "" },
            t0.elapsed().as_secs_f64(),
        );
    }

    // Fine-tune + ensemble rehearsal on seed 1.
    let joint_docs: Vec<Document> =
        test_docs.iter().chain(corpus.heldout_test.iter()).cloned().collect();
    let joint_refs = reference_lines(&joint_docs);
    let _ = &test_refs;
    for (kind, k) in [(ModelKind::Sent, 10), (ModelKind::DomembAvg, 10)] {
        let t0 = Instant::now();
        let base_name = key(kind, k, 1, BASE_UPDATES, v, "");
        let base_ckpt = Checkpoint::load(&dir.join(format!("{base_name}.ckpt"))).unwrap();
        let base = base_ckpt.into_model(model_config(kind, k, v)).unwrap();

        let ft_name = key(kind, k, 1, FT_UPDATES, v, "-ft");
        let ft_path = dir.join(format!("{ft_name}.ckpt"));
        let ft_model = if ft_path.exists() {
            Checkpoint::load(&ft_path).unwrap().into_model(model_config(kind, k, v)).unwrap()
        } else {
            let ft_train = examples(&corpus.finetune_train, k);
            let ft_dev = examples(&corpus.finetune_dev, k);
            let mut model =
                Checkpoint::load(&dir.join(format!("{base_name}.ckpt"))).unwrap().into_model(model_config(kind, k, v)).unwrap();
            let avg = fine_tune(&mut model, &ft_train, &ft_dev, &ft_train_config(1), None, |_| {}).unwrap();
            Checkpoint::of_model(&model, avg.outcome.updates, Some(avg.dev_ppl))
                .save(&ft_path, Dtype::F64)
                .unwrap();
            model
        };

        let z = examples(&corpus.heldout_test, k);
        let base_z = decode_or_load(&dir.join(format!("{base_name}-z.hyps")), &base, &z, &vocab, &beam);
        let ft_z = decode_or_load(&dir.join(format!("{ft_name}-z.hyps")), &ft_model, &z, &vocab, &beam);
        let base_z_bleu = corpus_bleu(&base_z, &z_refs, 4).unwrap().score;
        let ft_z_bleu = corpus_bleu(&ft_z, &z_refs, 4).unwrap().score;

        let joint = examples(&joint_docs, k);
        let members = [(&base, 0.5), (&ft_model, 0.5)];
        let ens_path = dir.join(format!("{ft_name}-joint-ens.hyps"));
        let ens_hyps: Vec<String> = if ens_path.exists() {
            fs::read_to_string(&ens_path).unwrap().lines().map(str::to_string).collect()
        } else {
            let hyps: Vec<String> = translate_corpus_ensemble(&members, &joint, &beam)
                .unwrap()
                .iter()
                .map(|h| surface_text(&vocab, h))
                .collect();
            fs::write(&ens_path, hyps.join("\n") + "\n").unwrap();
            hyps
        };
        let joint_bleu = corpus_bleu(&ens_hyps, &joint_refs, 4).unwrap().score;
        println!(
            "{} fine-tune: {:.0}s | base Z {base_z_bleu:.2} -> ft Z {ft_z_bleu:.2} | ensemble joint {joint_bleu:.2}",
            kind.name(),
            t0.elapsed().as_secs_f64(),
        );
    }
}
