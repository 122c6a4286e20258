//! Inference: calibrated span probabilities and the bipartite / window
//! whole-text classifiers.
//!
//! A span score is the probability that a comment containing the span
//! would be moderated, read directly from the model: encode the span
//! alone (no context part exists, so no second logit vector is computed)
//! and apply softmax. The two whole-text modes recompose span scores:
//! bipartite sums the logits of one sampled partition exactly as during
//! training; window averages the calibrated probabilities of all
//! three-token windows.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::normalize_whitespace;
use crate::partition::sample_partition;
use crate::pat::{aggregate_probability, softmax2, PatError, PatModel};

/// A scored span: the probability of the "moderated" class, in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanScore {
    pub span: String,
    pub probability: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ScoringError {
    #[error("span is empty after whitespace normalization")]
    EmptySpan,
    #[error("model error: {0}")]
    Model(#[from] PatError),
}

/// Calibrated probability that a text containing `span` is moderated.
pub fn score_span(model: &PatModel, span: &str) -> Result<SpanScore, ScoringError> {
    let normalized = normalize_whitespace(span);
    if normalized.is_empty() {
        return Err(ScoringError::EmptySpan);
    }
    let logits = model.logits_text(&normalized)?;
    Ok(SpanScore { span: normalized, probability: softmax2(logits)[1] })
}

/// Classify a whole text by sampling one span/context partition and
/// summing the two logit vectors — the same composition used in
/// training.
pub fn classify_bipartite(
    model: &PatModel,
    text: &str,
    rng: &mut impl Rng,
) -> Result<SpanScore, ScoringError> {
    let normalized = normalize_whitespace(text);
    if normalized.is_empty() {
        return Err(ScoringError::EmptySpan);
    }
    let ids = model.tokenize(&normalized);
    let p = sample_partition(&ids, model.mask_id(), rng)
        .expect("non-empty text tokenizes to at least one token");
    let span_logits = model.logits_ids(&p.span)?;
    let context_logits = model.logits_ids(&p.context)?;
    let probability = aggregate_probability(span_logits, context_logits)[1];
    Ok(SpanScore { span: normalized, probability })
}

/// How window scores are combined into the text score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowAggregation {
    /// Arithmetic mean of the per-window probabilities.
    #[default]
    MeanProbability,
    /// Mean of the per-window logit vectors, softmaxed once. Kept as a
    /// sensitivity knob; not the default.
    MeanLogit,
}

/// Number of whitespace tokens per window.
pub const WINDOW_TOKENS: usize = 3;

/// Classify a whole text as the average calibrated score of all
/// three-token windows. Texts shorter than three tokens are scored as a
/// single whole-text window. Deterministic.
pub fn classify_window(model: &PatModel, text: &str) -> Result<SpanScore, ScoringError> {
    classify_window_with(model, text, WindowAggregation::MeanProbability)
}

pub fn classify_window_with(
    model: &PatModel,
    text: &str,
    aggregation: WindowAggregation,
) -> Result<SpanScore, ScoringError> {
    let normalized = normalize_whitespace(text);
    if normalized.is_empty() {
        return Err(ScoringError::EmptySpan);
    }
    let windows = window_spans(&normalized);
    let probability = match aggregation {
        WindowAggregation::MeanProbability => {
            let mut sum = 0.0;
            for w in &windows {
                sum += score_span(model, w)?.probability;
            }
            sum / windows.len() as f64
        }
        WindowAggregation::MeanLogit => {
            let mut acc = [0.0f32; 2];
            for w in &windows {
                let l = model.logits_text(w)?;
                acc[0] += l[0];
                acc[1] += l[1];
            }
            let n = windows.len() as f32;
            softmax2([acc[0] / n, acc[1] / n])[1]
        }
    };
    Ok(SpanScore { span: normalized, probability })
}

/// The window surface strings for a normalized text: all contiguous
/// three-token spans, or the whole text when it has fewer than three
/// tokens.
pub fn window_spans(normalized: &str) -> Vec<String> {
    let tokens: Vec<&str> = normalized.split_whitespace().collect();
    if tokens.len() < WINDOW_TOKENS {
        return vec![tokens.join(" ")];
    }
    tokens.windows(WINDOW_TOKENS).map(|w| w.join(" ")).collect()
}

/// Score many spans. Equivalent to mapping [`score_span`]; per-span
/// failures are returned in place rather than failing the batch, and
/// result order matches input order.
pub fn batch_score(model: &PatModel, spans: &[String]) -> Vec<Result<SpanScore, ScoringError>> {
    spans.par_iter().map(|s| score_span(model, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_corpus, Label};
    use crate::encoder::{EncoderConfig, WordTokenizer};
    use crate::pat::{train_pat, EncoderProfile, ModelKind, TrainConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn untrained_model() -> PatModel {
        let tok = WordTokenizer::train(["one two three four five six seven"], 100, true);
        let enc = EncoderConfig::tiny(tok.vocab_size());
        PatModel::init("t", ModelKind::Pat, tok, enc, TrainConfig::tiny(0), "h".into()).unwrap()
    }

    fn trained_model() -> PatModel {
        let ds = synth_corpus("synth", &["zorgle".to_string()], 60, 21).unwrap();
        train_pat(&ds, EncoderProfile::Tiny, &TrainConfig::tiny(21), None).unwrap().model
    }

    #[test]
    fn zero_head_scores_half_for_any_span() {
        let m = untrained_model();
        for s in ["one", "two three four", "unseen tokens entirely"] {
            assert_eq!(score_span(&m, s).unwrap().probability, 0.5);
        }
    }

    #[test]
    fn empty_span_is_an_error() {
        let m = untrained_model();
        assert!(matches!(score_span(&m, "   "), Err(ScoringError::EmptySpan)));
        assert!(matches!(classify_window(&m, ""), Err(ScoringError::EmptySpan)));
    }

    #[test]
    fn planted_term_scores_high_after_training() {
        let m = trained_model();
        let p = score_span(&m, "zorgle").unwrap().probability;
        assert!(p > 0.9, "planted term scored {p}");
    }

    #[test]
    fn probabilities_stay_in_unit_interval() {
        let m = trained_model();
        for s in ["zorgle", "game", "the game today", "zorgle zorgle zorgle"] {
            let p = score_span(&m, s).unwrap().probability;
            assert!((0.0..=1.0).contains(&p), "{s} -> {p}");
        }
    }

    #[test]
    fn bipartite_is_deterministic_under_fixed_rng() {
        let m = untrained_model();
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let x = classify_bipartite(&m, "one two three four five", &mut a).unwrap();
        let y = classify_bipartite(&m, "one two three four five", &mut b).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn bipartite_single_token_path() {
        let m = trained_model();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = classify_bipartite(&m, "zorgle", &mut rng).unwrap();
        assert!((0.0..=1.0).contains(&s.probability));
    }

    #[test]
    fn window_count_and_mean_rule() {
        let m = trained_model();
        // 5 tokens -> exactly 3 windows
        let text = "the game today zorgle please";
        let windows = window_spans(text);
        assert_eq!(windows.len(), 3);
        let mean: f64 = windows
            .iter()
            .map(|w| score_span(&m, w).unwrap().probability)
            .sum::<f64>()
            / 3.0;
        let got = classify_window(&m, text).unwrap().probability;
        assert!((got - mean).abs() < 1e-12);
    }

    #[test]
    fn short_text_uses_whole_text_window() {
        let m = trained_model();
        let direct = score_span(&m, "zorgle please").unwrap().probability;
        let windowed = classify_window(&m, "zorgle please").unwrap().probability;
        assert_eq!(direct, windowed);
    }

    #[test]
    fn window_score_is_whitespace_invariant() {
        let m = trained_model();
        let a = classify_window(&m, "the  game\tzorgle today   now").unwrap();
        let b = classify_window(&m, "  the game zorgle today now ").unwrap();
        assert_eq!(a.probability, b.probability);
    }

    #[test]
    fn window_mean_lies_between_min_and_max() {
        let m = trained_model();
        let text = "please zorgle the game again tomorrow";
        let scores: Vec<f64> = window_spans(text)
            .iter()
            .map(|w| score_span(&m, w).unwrap().probability)
            .collect();
        let (lo, hi) = scores
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
        let got = classify_window(&m, text).unwrap().probability;
        assert!(got >= lo - 1e-12 && got <= hi + 1e-12);
    }

    #[test]
    fn batch_matches_individual_scoring_and_order() {
        let m = trained_model();
        let spans: Vec<String> =
            ["zorgle", "game today", "the", "please again"].iter().map(|s| s.to_string()).collect();
        let batch = batch_score(&m, &spans);
        assert_eq!(batch.len(), spans.len());
        for (s, r) in spans.iter().zip(&batch) {
            let direct = score_span(&m, s).unwrap();
            let from_batch = r.as_ref().unwrap();
            assert_eq!(direct, *from_batch);
        }
    }

    #[test]
    fn batch_reports_per_item_failures() {
        let m = untrained_model();
        let spans = vec!["fine".to_string(), "  ".to_string(), "also fine".to_string()];
        let out = batch_score(&m, &spans);
        assert!(out[0].is_ok());
        assert!(out[1].is_err());
        assert!(out[2].is_ok());
    }

    #[test]
    fn mean_logit_aggregation_is_available_and_bounded() {
        let m = trained_model();
        let p = classify_window_with(&m, "please zorgle the game again", WindowAggregation::MeanLogit)
            .unwrap()
            .probability;
        assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn training_and_scoring_label_orientation_agree() {
        // The moderated class must be index 1 end to end.
        let ds = synth_corpus("synth", &["zorgle".to_string()], 40, 5).unwrap();
        let m = train_pat(&ds, EncoderProfile::Tiny, &TrainConfig::tiny(5), None).unwrap().model;
        let pos = ds.test.iter().find(|r| r.label == Label::Moderated).unwrap();
        let neg = ds.test.iter().find(|r| r.label == Label::Kept).unwrap();
        let p_pos = score_span(&m, &pos.text).unwrap().probability;
        let p_neg = score_span(&m, &neg.text).unwrap().probability;
        assert!(p_pos > p_neg, "moderated text {p_pos} vs kept {p_neg}");
    }
}
