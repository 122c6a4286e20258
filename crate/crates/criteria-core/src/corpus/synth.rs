//! Synthetic planted-keyword corpora.
//!
//! The label of every generated record is a pure function of planted-term
//! presence, which makes these corpora usable as ground truth for
//! calibration and harvesting tests.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CommentRecord, CommunityDataset, CorpusError, Label};

/// Neutral filler vocabulary for synthetic comments. Deliberately bland:
/// none of these words carries class signal on its own because they are
/// sampled identically for both classes.
pub const FILLER_WORDS: &[&str] = &[
    "the", "a", "an", "this", "that", "these", "those", "some", "any", "each",
    "game", "post", "thread", "comment", "reply", "topic", "idea", "point", "story", "update",
    "team", "player", "match", "round", "level", "quest", "patch", "build", "guide", "review",
    "today", "yesterday", "tomorrow", "morning", "evening", "weekend", "season", "week", "year", "hour",
    "really", "quite", "fairly", "rather", "pretty", "very", "somewhat", "mostly", "nearly", "almost",
    "good", "fine", "solid", "decent", "plain", "simple", "quick", "slow", "long", "short",
    "thanks", "please", "maybe", "perhaps", "probably", "certainly", "surely", "likely", "again", "still",
    "people", "folks", "friends", "others", "everyone", "someone", "anyone", "nobody", "crowd", "group",
    "think", "wonder", "guess", "hope", "expect", "believe", "recall", "notice", "mention", "discuss",
    "about", "around", "between", "through", "under", "over", "after", "before", "during", "within",
    "started", "finished", "watched", "played", "shared", "posted", "opened", "closed", "joined", "missed",
    "question", "answer", "detail", "feature", "option", "setting", "change", "effect", "result", "reason",
];

fn sentence_lengths() -> std::ops::RangeInclusive<usize> {
    7..=14
}

/// Whole-token containment check: does `text` contain any of `terms` as a
/// contiguous run of whitespace tokens? This is the label oracle for
/// synthetic corpora.
pub fn contains_any_term(text: &str, terms: &[String]) -> bool {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    terms.iter().any(|term| {
        let term_tokens: Vec<&str> = term.split_whitespace().collect();
        !term_tokens.is_empty()
            && tokens.windows(term_tokens.len()).any(|w| w == term_tokens.as_slice())
    })
}

/// Generate a balanced synthetic community dataset with `n_per_class`
/// positives (each containing at least one planted term) and `n_per_class`
/// negatives (containing none). A stratified fifth of each class goes to
/// the test split. Deterministic under `seed`.
pub fn synth_corpus(
    community: &str,
    planted_terms: &[String],
    n_per_class: usize,
    seed: u64,
) -> Result<CommunityDataset, CorpusError> {
    if planted_terms.is_empty() {
        return Err(CorpusError::NoPlantedTerms);
    }
    if n_per_class == 0 {
        return Err(CorpusError::EmptySynthClass);
    }
    if community.is_empty() {
        return Err(CorpusError::EmptyCommunity);
    }

    // Keep the filler pool free of planted unigrams so negatives cannot
    // collide with single-word terms.
    let planted_lower: Vec<String> = planted_terms.iter().map(|t| t.to_lowercase()).collect();
    let pool: Vec<&str> = FILLER_WORDS
        .iter()
        .copied()
        .filter(|w| !planted_lower.iter().any(|t| t.split_whitespace().any(|tok| tok == *w)))
        .collect();
    assert!(pool.len() >= 20, "planted terms exhaust the filler pool");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positives = Vec::with_capacity(n_per_class);
    let mut negatives = Vec::with_capacity(n_per_class);

    let mut filler_sentence = |rng: &mut ChaCha8Rng| -> Vec<&str> {
        let len = rng.random_range(sentence_lengths());
        (0..len).map(|_| *pool.choose(rng).expect("non-empty pool")).collect()
    };

    for i in 0..n_per_class {
        let mut words = filler_sentence(&mut rng);
        let term = planted_terms.choose(&mut rng).expect("non-empty terms");
        let at = rng.random_range(0..=words.len());
        let term_tokens: Vec<&str> = term.split_whitespace().collect();
        words.splice(at..at, term_tokens);
        let text = words.join(" ");
        debug_assert!(contains_any_term(&text, planted_terms));
        positives.push(
            CommentRecord::new(format!("{community}-pos-{i}"), community, &text, Label::Moderated, None)
                .expect("generated text is non-empty"),
        );
    }

    for i in 0..n_per_class {
        // Multi-word planted terms could still assemble by chance from
        // filler words; resample until the sentence is clean.
        let text = loop {
            let candidate = filler_sentence(&mut rng).join(" ");
            if !contains_any_term(&candidate, planted_terms) {
                break candidate;
            }
        };
        negatives.push(
            CommentRecord::new(format!("{community}-neg-{i}"), community, &text, Label::Kept, None)
                .expect("generated text is non-empty"),
        );
    }

    // Stratified 80/20 split, at least one test record per class when
    // possible.
    let n_test = (n_per_class / 5).max(usize::from(n_per_class > 1));
    let split = |mut v: Vec<CommentRecord>, rng: &mut ChaCha8Rng| {
        v.shuffle(rng);
        let test = v.split_off(v.len() - n_test);
        (v, test)
    };
    let (mut train, mut test) = split(positives, &mut rng);
    let (neg_train, neg_test) = split(negatives, &mut rng);
    train.extend(neg_train);
    test.extend(neg_test);
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);

    let ds = CommunityDataset { community: community.to_string(), train, test };
    ds.check_invariants().expect("synthetic dataset satisfies invariants");
    Ok(ds)
}
