//! Vocabulary harvesting: extract high-scoring spans from sampled
//! comments, explode them into n-grams, and select the shared term list.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pat::PatModel;
use crate::scoring::{self, SpanScore};

/// Default number of comments sampled per community during harvesting.
pub const DEFAULT_SAMPLE_SIZE: usize = 1000;
/// Default probability threshold for keeping a harvested span.
pub const DEFAULT_THRESHOLD: f64 = 0.8;
/// Default per-n selection cap.
pub const DEFAULT_PER_N_CAP: usize = 10_000;
/// n-gram sizes collected from harvested spans.
pub const NGRAM_RANGE: std::ops::RangeInclusive<usize> = 1..=9;
/// Window widths slid over sampled comments during harvesting.
pub const HARVEST_WIDTHS: std::ops::RangeInclusive<usize> = 3..=9;

#[derive(Debug, thiserror::Error)]
pub enum VocabError {
    #[error("no comments to harvest from")]
    NoComments,
    #[error("threshold must lie strictly inside (0, 1), got {0}")]
    BadThreshold(f64),
    #[error("per_n_cap must be >= 1")]
    ZeroCap,
    #[error("scoring failed for {span:?}: {source}")]
    Scoring { span: String, source: scoring::ScoringError },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("bad vocabulary file: {0}")]
    Parse(String),
}

/// Frequency and selection score recorded for every selected term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermStats {
    pub frequency: u64,
    pub selection_score: f64,
}

/// The shared cross-community n-gram term list. Terms are ordered by
/// n-gram size, then selection rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermVocabulary {
    pub terms: Vec<String>,
    pub per_n_counts: BTreeMap<usize, usize>,
    pub provenance: HashMap<String, TermStats>,
}

impl TermVocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Every term must span 1..=9 whitespace tokens, be unique, and be
    /// consistent with the per-n counters.
    pub fn check_invariants(&self) -> Result<(), VocabError> {
        let mut seen = std::collections::HashSet::new();
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for t in &self.terms {
            let n = t.split_whitespace().count();
            if !NGRAM_RANGE.contains(&n) {
                return Err(VocabError::Parse(format!("term {t:?} has {n} tokens")));
            }
            if !seen.insert(t.as_str()) {
                return Err(VocabError::Parse(format!("duplicate term {t:?}")));
            }
            *counts.entry(n).or_insert(0) += 1;
        }
        if counts != self.per_n_counts {
            return Err(VocabError::Parse("per_n_counts disagree with terms".into()));
        }
        Ok(())
    }

    /// Write `terms.txt` (one term per line) and the provenance sidecar
    /// `terms.tsv` (`term<TAB>n<TAB>frequency<TAB>selection_score`).
    pub fn save(&self, dir: &Path) -> Result<(), VocabError> {
        std::fs::create_dir_all(dir).map_err(|e| VocabError::Io(dir.display().to_string(), e))?;
        let mut plain = String::new();
        let mut sidecar = String::from("term\tn\tfrequency\tselection_score\n");
        for t in &self.terms {
            plain.push_str(t);
            plain.push('\n');
            let stats = self.provenance.get(t).copied().unwrap_or(TermStats {
                frequency: 0,
                selection_score: 0.0,
            });
            sidecar.push_str(&format!(
                "{t}\t{}\t{}\t{:.6}\n",
                t.split_whitespace().count(),
                stats.frequency,
                stats.selection_score
            ));
        }
        for (name, contents) in [("terms.txt", plain), ("terms.tsv", sidecar)] {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|e| VocabError::Io(path.display().to_string(), e))?;
        }
        Ok(())
    }

    /// Load a vocabulary saved by [`TermVocabulary::save`].
    pub fn load(dir: &Path) -> Result<Self, VocabError> {
        let path = dir.join("terms.tsv");
        let raw =
            std::fs::read_to_string(&path).map_err(|e| VocabError::Io(path.display().to_string(), e))?;
        let mut terms = Vec::new();
        let mut per_n_counts: BTreeMap<usize, usize> = BTreeMap::new();
        let mut provenance = HashMap::new();
        for (i, line) in raw.lines().enumerate() {
            if i == 0 {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(VocabError::Parse(format!("line {}: expected 4 fields", i + 1)));
            }
            let term = fields[0].to_string();
            let n = term.split_whitespace().count();
            let frequency: u64 =
                fields[2].parse().map_err(|_| VocabError::Parse(format!("bad frequency on line {}", i + 1)))?;
            let selection_score: f64 = fields[3]
                .parse()
                .map_err(|_| VocabError::Parse(format!("bad selection score on line {}", i + 1)))?;
            *per_n_counts.entry(n).or_insert(0) += 1;
            provenance.insert(term.clone(), TermStats { frequency, selection_score });
            terms.push(term);
        }
        let vocab = TermVocabulary { terms, per_n_counts, provenance };
        vocab.check_invariants()?;
        Ok(vocab)
    }
}

/// Sample comments and return every sliding-window span that the model
/// scores at or above `threshold`. Window widths cover the n-gram range
/// that selection later explodes them into; comments shorter than the
/// smallest width are scored whole.
pub fn harvest_spans(
    model: &PatModel,
    comments: &[String],
    threshold: f64,
    sample_size: usize,
    seed: u64,
) -> Result<Vec<SpanScore>, VocabError> {
    if comments.is_empty() {
        return Err(VocabError::NoComments);
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(VocabError::BadThreshold(threshold));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = sample_size.min(comments.len());
    let picked = rand::seq::index::sample(&mut rng, comments.len(), take);

    let mut spans: Vec<String> = Vec::new();
    for idx in picked.iter() {
        let tokens: Vec<&str> = comments[idx].split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() < *HARVEST_WIDTHS.start() {
            spans.push(tokens.join(" "));
            continue;
        }
        for width in HARVEST_WIDTHS {
            if width > tokens.len() {
                break;
            }
            for w in tokens.windows(width) {
                spans.push(w.join(" "));
            }
        }
    }

    let mut out = Vec::new();
    for (span, result) in spans.iter().zip(scoring::batch_score(model, &spans)) {
        let scored =
            result.map_err(|source| VocabError::Scoring { span: span.clone(), source })?;
        if scored.probability >= threshold {
            out.push(scored);
        }
    }
    Ok(out)
}

/// Explode spans into all whitespace-token n-grams for n in 1..=9 and
/// accumulate counts.
pub fn collect_ngrams<'a>(spans: impl IntoIterator<Item = &'a str>) -> HashMap<String, u64> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for span in spans {
        let tokens: Vec<&str> = span.split_whitespace().collect();
        let max_n = tokens.len().min(*NGRAM_RANGE.end());
        for n in 1..=max_n {
            for w in tokens.windows(n) {
                *counts.entry(w.join(" ")).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Optional fluency scorer used to break frequency ties during
/// selection; absent a scorer, ties break lexicographically.
pub trait FluencyScorer {
    fn score(&self, term: &str) -> f64;
}

/// Rank candidates per n-gram size by frequency and take the top
/// `per_n_cap` of each size. Raising the cap never drops a previously
/// selected term.
pub fn select_vocabulary(
    candidates: &HashMap<String, u64>,
    per_n_cap: usize,
    fluency: Option<&dyn FluencyScorer>,
) -> Result<TermVocabulary, VocabError> {
    if per_n_cap == 0 {
        return Err(VocabError::ZeroCap);
    }
    let mut by_n: BTreeMap<usize, Vec<(&String, u64)>> = BTreeMap::new();
    for (term, &count) in candidates {
        let n = term.split_whitespace().count();
        if NGRAM_RANGE.contains(&n) {
            by_n.entry(n).or_default().push((term, count));
        }
    }

    let mut terms = Vec::new();
    let mut per_n_counts = BTreeMap::new();
    let mut provenance = HashMap::new();
    for (n, mut group) in by_n {
        group.sort_by(|a, b| {
            b.1.cmp(&a.1).then_with(|| match fluency {
                Some(f) => f
                    .score(a.0)
                    .partial_cmp(&f.score(b.0))
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .reverse()
                    .then_with(|| a.0.cmp(b.0)),
                None => a.0.cmp(b.0),
            })
        });
        group.truncate(per_n_cap);
        per_n_counts.insert(n, group.len());
        for (term, count) in group {
            let selection_score = fluency.map(|f| f.score(term)).unwrap_or(0.0);
            provenance.insert(term.clone(), TermStats { frequency: count, selection_score });
            terms.push(term.clone());
        }
    }

    let vocab = TermVocabulary { terms, per_n_counts, provenance };
    vocab.check_invariants()?;
    Ok(vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth_corpus;
    use crate::pat::{train_pat, EncoderProfile, TrainConfig};

    #[test]
    fn ngrams_of_a_three_token_span() {
        let counts = collect_ngrams(["a b c"]);
        let expected = ["a", "b", "c", "a b", "b c", "a b c"];
        assert_eq!(counts.len(), expected.len());
        for t in expected {
            assert_eq!(counts[t], 1, "{t}");
        }
    }

    #[test]
    fn ngram_count_formula() {
        // k tokens yield sum over n of (k - n + 1) n-grams, n <= min(9, k).
        for k in 1..=14 {
            let span: Vec<String> = (0..k).map(|i| format!("w{i}")).collect();
            let counts = collect_ngrams([span.join(" ").as_str()]);
            let total: u64 = counts.values().sum();
            let expected: u64 = (1..=k.min(9)).map(|n| (k - n + 1) as u64).sum();
            assert_eq!(total, expected, "k={k}");
        }
    }

    #[test]
    fn empty_span_list_gives_empty_multiset() {
        let counts = collect_ngrams(std::iter::empty::<&str>());
        assert!(counts.is_empty());
    }

    #[test]
    fn repeated_spans_accumulate() {
        let counts = collect_ngrams(["x y", "x y", "x"]);
        assert_eq!(counts["x"], 3);
        assert_eq!(counts["x y"], 2);
    }

    #[test]
    fn top_k_selection_by_frequency() {
        let mut c = HashMap::new();
        c.insert("a".to_string(), 5u64);
        c.insert("b".to_string(), 3);
        c.insert("c".to_string(), 1);
        let v = select_vocabulary(&c, 2, None).unwrap();
        assert_eq!(v.terms, vec!["a", "b"]);
        assert_eq!(v.per_n_counts[&1], 2);
        assert_eq!(v.provenance["a"].frequency, 5);
    }

    struct FixedFluency;
    impl FluencyScorer for FixedFluency {
        fn score(&self, term: &str) -> f64 {
            // "zeta" is the most fluent in this stub, despite sorting last
            // lexicographically.
            match term {
                "zeta" => 3.0,
                "alpha" => 2.0,
                _ => 1.0,
            }
        }
    }

    #[test]
    fn fluency_breaks_frequency_ties() {
        let mut c = HashMap::new();
        c.insert("alpha".to_string(), 4u64);
        c.insert("zeta".to_string(), 4);
        c.insert("mid".to_string(), 4);
        let v = select_vocabulary(&c, 1, Some(&FixedFluency)).unwrap();
        assert_eq!(v.terms, vec!["zeta"]);
        assert_eq!(v.provenance["zeta"].selection_score, 3.0);
    }

    #[test]
    fn selection_is_monotone_in_cap() {
        let mut c = HashMap::new();
        for (i, t) in ["a", "b", "c", "d", "e", "p q", "r s", "t u"].iter().enumerate() {
            c.insert(t.to_string(), (10 - i) as u64);
        }
        let small = select_vocabulary(&c, 2, None).unwrap();
        let large = select_vocabulary(&c, 4, None).unwrap();
        for t in &small.terms {
            assert!(large.terms.contains(t), "{t} dropped when cap was raised");
        }
    }

    #[test]
    fn oversized_ngrams_are_ignored_in_selection() {
        let mut c = HashMap::new();
        c.insert((0..12).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "), 100u64);
        c.insert("ok".to_string(), 1);
        let v = select_vocabulary(&c, 10, None).unwrap();
        assert_eq!(v.terms, vec!["ok"]);
    }

    #[test]
    fn save_load_round_trip() {
        let mut c = HashMap::new();
        c.insert("a".to_string(), 5u64);
        c.insert("b c".to_string(), 3);
        let v = select_vocabulary(&c, 10, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        v.save(dir.path()).unwrap();
        let back = TermVocabulary::load(dir.path()).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn harvest_rejects_bad_inputs() {
        let ds = synth_corpus("s", &["zorgle".to_string()], 10, 0).unwrap();
        let model = {
            let mut cfg = TrainConfig::tiny(0);
            cfg.epochs = 1;
            train_pat(&ds, EncoderProfile::Tiny, &cfg, None).unwrap().model
        };
        assert!(matches!(harvest_spans(&model, &[], 0.8, 10, 0), Err(VocabError::NoComments)));
        let comments = vec!["a b c".to_string()];
        assert!(matches!(
            harvest_spans(&model, &comments, 0.0, 10, 0),
            Err(VocabError::BadThreshold(_))
        ));
        assert!(matches!(
            harvest_spans(&model, &comments, 1.0, 10, 0),
            Err(VocabError::BadThreshold(_))
        ));
    }

    #[test]
    fn harvest_finds_planted_term_spans() {
        let ds = synth_corpus("s", &["zorgle".to_string()], 60, 11).unwrap();
        let model = train_pat(&ds, EncoderProfile::Tiny, &TrainConfig::tiny(11), None).unwrap().model;
        let comments: Vec<String> = ds.train.iter().map(|r| r.text.clone()).collect();
        let harvested = harvest_spans(&model, &comments, 0.8, 200, 7).unwrap();
        assert!(!harvested.is_empty());
        let containing = harvested
            .iter()
            .filter(|s| s.span.split_whitespace().any(|t| t == "zorgle"))
            .count();
        let frac = containing as f64 / harvested.len() as f64;
        assert!(frac >= 0.9, "only {frac} of harvested spans contain the planted term");
        // determinism under the same seed
        let again = harvest_spans(&model, &comments, 0.8, 200, 7).unwrap();
        assert_eq!(harvested, again);
    }

    #[test]
    fn vacuously_high_threshold_yields_empty_harvest() {
        // an untrained model scores everything at exactly 0.5
        let ds = synth_corpus("s", &["zorgle".to_string()], 10, 0).unwrap();
        let comments: Vec<String> = ds.train.iter().map(|r| r.text.clone()).collect();
        let tok = crate::encoder::WordTokenizer::train(comments.iter().map(|s| s.as_str()), 1000, true);
        let enc = crate::encoder::EncoderConfig::tiny(tok.vocab_size());
        let model = PatModel::init(
            "s",
            crate::pat::ModelKind::Pat,
            tok,
            enc,
            TrainConfig::tiny(0),
            "h".into(),
        )
        .unwrap();
        let harvested = harvest_spans(&model, &comments, 0.999, 50, 0).unwrap();
        assert!(harvested.is_empty());
    }
}
