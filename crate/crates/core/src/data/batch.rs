//! Token-budget batching with length bucketing and seeded shuffling.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::examples::TrainingExample;
use super::vocab::{TokenId, PAD_ID};
use crate::error::{Error, Result};

/// Rectangular id matrix padded with <PAD>, plus a validity mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddedMatrix {
    pub ids: Vec<TokenId>,
    pub mask: Vec<bool>,
    pub rows: usize,
    pub cols: usize,
}

impl PaddedMatrix {
    pub fn build(rows: &[Vec<TokenId>]) -> PaddedMatrix {
        let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
        let mut ids = vec![PAD_ID; rows.len() * cols];
        let mut mask = vec![false; rows.len() * cols];
        for (i, row) in rows.iter().enumerate() {
            ids[i * cols..i * cols + row.len()].copy_from_slice(row);
            for m in &mut mask[i * cols..i * cols + row.len()] {
                *m = true;
            }
        }
        PaddedMatrix { ids, mask, rows: rows.len(), cols }
    }

    pub fn row_ids(&self, i: usize) -> &[TokenId] {
        &self.ids[i * self.cols..(i + 1) * self.cols]
    }

    pub fn non_pad_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// A group of examples trained together under one token budget.
#[derive(Clone, Debug)]
pub struct Batch {
    pub examples: Vec<TrainingExample>,
    pub src: PaddedMatrix,
    pub tgt: PaddedMatrix,
    pub ctx: PaddedMatrix,
    /// Total bare target tokens across the batch (the budget currency).
    pub target_tokens: usize,
}

/// Splits one epoch of examples into batches whose total bare target token
/// count stays within `budget`. Examples are shuffled with the seed, stably
/// bucketed by target length to minimize padding, packed greedily, and the
/// resulting batch order is shuffled again so length does not correlate with
/// training step. Fixed seed, fixed input → identical batch sequence.
pub fn batch_by_tokens(
    examples: &[TrainingExample],
    budget: usize,
    seed: u64,
) -> Result<Vec<Batch>> {
    if let Some(longest) = examples.iter().map(|e| e.tgt.len()).max() {
        if longest > budget {
            return Err(Error::Invalid(format!(
                "token budget {} is smaller than the longest target ({} tokens); \
                 overlong examples should have been filtered upstream",
                budget, longest
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|&i| examples[i].tgt.len());

    let mut batches: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut current_tokens = 0usize;
    for &i in &order {
        let t = examples[i].tgt.len();
        if !current.is_empty() && current_tokens + t > budget {
            batches.push(std::mem::take(&mut current));
            current_tokens = 0;
        }
        current.push(i);
        current_tokens += t;
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches.shuffle(&mut rng);

    Ok(batches
        .into_iter()
        .map(|indices| {
            let group: Vec<TrainingExample> =
                indices.iter().map(|&i| examples[i].clone()).collect();
            let src = PaddedMatrix::build(&group.iter().map(|e| e.src.clone()).collect::<Vec<_>>());
            let tgt = PaddedMatrix::build(&group.iter().map(|e| e.tgt.clone()).collect::<Vec<_>>());
            let ctx =
                PaddedMatrix::build(&group.iter().map(|e| e.context_ids()).collect::<Vec<_>>());
            let target_tokens = group.iter().map(|e| e.tgt.len()).sum();
            Batch { examples: group, src, tgt, ctx, target_tokens }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(tgt_len: usize, marker: usize) -> TrainingExample {
        TrainingExample {
            src: vec![10 + marker; tgt_len.max(1)],
            tgt: vec![20 + marker; tgt_len],
            ctx_sentences: vec![],
            domain: "d".into(),
            tag: None,
            doc_id: format!("doc{}", marker),
            position: 0,
        }
    }

    #[test]
    fn unlimited_budget_gives_one_batch() {
        let examples: Vec<_> = (0..5).map(|i| example(3 + i % 2, i)).collect();
        let batches = batch_by_tokens(&examples, usize::MAX, 1).unwrap();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].examples.len(), 5);
    }

    #[test]
    fn budget_bounds_non_pad_target_tokens() {
        let examples: Vec<_> = (0..30).map(|i| example(2 + i % 5, i)).collect();
        let batches = batch_by_tokens(&examples, 10, 2).unwrap();
        for b in &batches {
            assert!(b.target_tokens <= 10, "batch exceeds budget: {}", b.target_tokens);
            assert_eq!(b.tgt.non_pad_count(), b.target_tokens);
        }
    }

    #[test]
    fn every_example_appears_exactly_once() {
        let examples: Vec<_> = (0..23).map(|i| example(1 + i % 7, i)).collect();
        let batches = batch_by_tokens(&examples, 9, 3).unwrap();
        let mut seen: Vec<&str> = batches
            .iter()
            .flat_map(|b| b.examples.iter().map(|e| e.doc_id.as_str()))
            .collect();
        seen.sort();
        let mut expected: Vec<String> = (0..23).map(|i| format!("doc{}", i)).collect();
        expected.sort();
        assert_eq!(seen, expected.iter().map(String::as_str).collect::<Vec<_>>());
    }

    #[test]
    fn fixed_seed_reproduces_batch_sequence() {
        let examples: Vec<_> = (0..40).map(|i| example(1 + i % 6, i)).collect();
        let a = batch_by_tokens(&examples, 12, 7).unwrap();
        let b = batch_by_tokens(&examples, 12, 7).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.examples, y.examples);
        }
        let c = batch_by_tokens(&examples, 12, 8).unwrap();
        let same = a.len() == c.len()
            && a.iter().zip(&c).all(|(x, y)| x.examples == y.examples);
        assert!(!same, "different seeds should reorder batches");
    }

    #[test]
    fn oversized_example_is_an_error() {
        let examples = vec![example(50, 0)];
        let err = batch_by_tokens(&examples, 10, 0).unwrap_err();
        assert!(err.to_string().contains("budget"));
    }

    #[test]
    fn padding_and_masks_agree() {
        let m = PaddedMatrix::build(&[vec![7, 8, 9], vec![5]]);
        assert_eq!(m.cols, 3);
        assert_eq!(m.row_ids(1), &[5, PAD_ID, PAD_ID]);
        assert_eq!(m.mask, vec![true, true, true, true, false, false]);
    }
}
