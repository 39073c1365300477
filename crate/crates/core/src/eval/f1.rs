//! Domain-specific-word translation F1: each source occurrence of a domain
//! word is force-aligned into the reference (gold) and the hypothesis
//! (predicted); micro-averaged precision/recall over occurrences.

use std::collections::HashSet;

use super::ibm1::Ibm1;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Occurrences whose predicted token equals the gold token.
    pub matches: usize,
    /// Occurrences with a predicted token (hypothesis side aligned).
    pub predicted: usize,
    /// Occurrences with a gold token (reference side aligned).
    pub gold: usize,
    /// True when a zero denominator forced the score to 0.
    pub degenerate: bool,
}

/// Micro-averaged translation F1 of `domain_words` over an aligned test
/// triple. Occurrences in sentences whose hypothesis (or reference) is empty
/// contribute to the gold (or predicted) denominator only.
pub fn domain_word_f1(
    domain_words: &[String],
    test_sources: &[String],
    references: &[String],
    hypotheses: &[String],
    alignment: &Ibm1,
) -> Result<F1Score> {
    if test_sources.len() != references.len() || test_sources.len() != hypotheses.len() {
        return Err(Error::Invalid(format!(
            "F1 needs aligned corpora: {} sources vs {} references vs {} hypotheses",
            test_sources.len(),
            references.len(),
            hypotheses.len()
        )));
    }
    let vocabulary: HashSet<&str> = domain_words.iter().map(String::as_str).collect();
    let (mut matches, mut predicted, mut gold) = (0usize, 0usize, 0usize);
    for ((src, reference), hyp) in test_sources.iter().zip(references).zip(hypotheses) {
        let src_tokens: Vec<&str> = src.split_whitespace().collect();
        let ref_tokens: Vec<&str> = reference.split_whitespace().collect();
        let hyp_tokens: Vec<&str> = hyp.split_whitespace().collect();
        let ref_align = alignment.force_align(src, reference);
        let hyp_align = alignment.force_align(src, hyp);
        for (i, token) in src_tokens.iter().enumerate() {
            if !vocabulary.contains(token) {
                continue;
            }
            let gold_token = ref_align.as_ref().map(|a| ref_tokens[a[i].target_index]);
            let pred_token = hyp_align.as_ref().map(|a| hyp_tokens[a[i].target_index]);
            gold += gold_token.is_some() as usize;
            predicted += pred_token.is_some() as usize;
            if let (Some(g), Some(p)) = (gold_token, pred_token) {
                matches += (g == p) as usize;
            }
        }
    }
    let precision = if predicted == 0 { 0.0 } else { matches as f64 / predicted as f64 };
    let recall = if gold == 0 { 0.0 } else { matches as f64 / gold as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(F1Score {
        precision,
        recall,
        f1,
        matches,
        predicted,
        gold,
        degenerate: predicted == 0 || gold == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lines(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn words(v: &[&str]) -> Vec<String> {
        lines(v)
    }

    /// A corpus whose alignments are unambiguous after a few EM iterations.
    fn trained_model() -> Ibm1 {
        let pairs: Vec<(String, String)> = [
            ("rotor spins fast", "rotor_t spins_t fast_t"),
            ("rotor stops", "rotor_t stops_t"),
            ("valve opens", "valve_t opens_t"),
            ("valve spins", "valve_t spins_t"),
            ("fast valve", "fast_t valve_t"),
        ]
        .iter()
        .map(|(s, t)| (s.to_string(), t.to_string()))
        .collect();
        Ibm1::train(&pairs, 5).unwrap()
    }

    #[test]
    fn perfect_hypotheses_score_one() {
        let model = trained_model();
        let src = lines(&["rotor spins fast", "valve opens"]);
        let refs = lines(&["rotor_t spins_t fast_t", "valve_t opens_t"]);
        let score =
            domain_word_f1(&words(&["rotor", "valve"]), &src, &refs, &refs, &model).unwrap();
        assert_eq!(score.f1, 1.0, "hypothesis == reference must give F1 = 1");
        assert_eq!(score.matches, 2);
        assert!(!score.degenerate);
    }

    #[test]
    fn all_wrong_translations_score_zero() {
        let model = trained_model();
        let src = lines(&["rotor spins", "valve opens"]);
        let refs = lines(&["rotor_t spins_t", "valve_t opens_t"]);
        let hyps = lines(&["wrongA wrongB", "wrongC wrongD"]);
        let score =
            domain_word_f1(&words(&["rotor", "valve"]), &src, &refs, &hyps, &model).unwrap();
        assert_eq!(score.f1, 0.0);
        assert_eq!(score.matches, 0);
        assert_eq!(score.gold, 2);
        assert_eq!(score.predicted, 2);
    }

    #[test]
    fn partial_matches_micro_average() {
        let model = trained_model();
        let src = lines(&["rotor spins", "valve opens"]);
        let refs = lines(&["rotor_t spins_t", "valve_t opens_t"]);
        // First sentence translates the domain word correctly, second not.
        let hyps = lines(&["rotor_t spins_t", "junk junk"]);
        let score =
            domain_word_f1(&words(&["rotor", "valve"]), &src, &refs, &hyps, &model).unwrap();
        assert_eq!(score.matches, 1);
        assert_eq!(score.predicted, 2);
        assert_eq!(score.gold, 2);
        assert!((score.f1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_hypotheses_hit_recall_not_precision() {
        let model = trained_model();
        let src = lines(&["rotor spins"]);
        let refs = lines(&["rotor_t spins_t"]);
        let hyps = lines(&[""]);
        let score = domain_word_f1(&words(&["rotor"]), &src, &refs, &hyps, &model).unwrap();
        assert_eq!(score.gold, 1);
        assert_eq!(score.predicted, 0, "an empty hypothesis predicts nothing");
        assert_eq!(score.f1, 0.0);
        assert!(score.degenerate);
    }

    #[test]
    fn absent_domain_words_are_excluded() {
        let model = trained_model();
        let src = lines(&["rotor spins"]);
        let refs = lines(&["rotor_t spins_t"]);
        let score =
            domain_word_f1(&words(&["nonexistent"]), &src, &refs, &refs, &model).unwrap();
        assert_eq!(score.gold, 0);
        assert_eq!(score.f1, 0.0);
        assert!(score.degenerate, "zero denominators must be flagged");
    }

    #[test]
    fn misaligned_corpora_are_rejected() {
        let model = trained_model();
        let err = domain_word_f1(
            &words(&["rotor"]),
            &lines(&["a", "b"]),
            &lines(&["a"]),
            &lines(&["a"]),
            &model,
        );
        assert!(err.is_err());
    }
}
