//! Balanced per-community dataset construction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CommentRecord, CommunityDataset, CorpusError};

/// Build a balanced train split and a fixed-size test split for one
/// community.
///
/// Records for other communities are ignored. The test split takes
/// `test_size` records, stratified as evenly as the two classes allow;
/// the remaining records are balanced by randomly downsampling the
/// majority class. The whole split is a deterministic function of `seed`.
pub fn build_balanced(
    records: impl IntoIterator<Item = CommentRecord>,
    community: &str,
    test_size: usize,
    seed: u64,
) -> Result<CommunityDataset, CorpusError> {
    let mut moderated = Vec::new();
    let mut kept = Vec::new();
    for r in records {
        if r.community != community {
            continue;
        }
        if r.label.is_moderated() {
            moderated.push(r);
        } else {
            kept.push(r);
        }
    }

    if moderated.is_empty() || kept.is_empty() {
        if moderated.is_empty() && kept.is_empty() {
            return Err(CorpusError::InsufficientData {
                community: community.to_string(),
                moderated: 0,
                kept: 0,
                needed: 2 * test_size,
            });
        }
        return Err(CorpusError::SingleClass { community: community.to_string() });
    }
    if moderated.len() + kept.len() < 2 * test_size {
        return Err(CorpusError::InsufficientData {
            community: community.to_string(),
            moderated: moderated.len(),
            kept: kept.len(),
            needed: 2 * test_size,
        });
    }

    // Input order must not leak into the split.
    let sort_key = |r: &CommentRecord| (r.id.clone(), r.text.clone());
    moderated.sort_by_key(sort_key);
    kept.sort_by_key(sort_key);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    moderated.shuffle(&mut rng);
    kept.shuffle(&mut rng);

    // Stratified test split: half per class, remainder drawn from the
    // larger class so the train side keeps as much signal as possible.
    let mut test_mod = test_size / 2;
    let mut test_kept = test_size - test_mod;
    if test_mod >= moderated.len() {
        test_mod = moderated.len() - 1;
        test_kept = test_size - test_mod;
    }
    if test_kept >= kept.len() {
        test_kept = kept.len() - 1;
        test_mod = test_size - test_kept;
    }
    if test_mod >= moderated.len() || test_kept >= kept.len() {
        return Err(CorpusError::InsufficientData {
            community: community.to_string(),
            moderated: moderated.len(),
            kept: kept.len(),
            needed: 2 * test_size,
        });
    }

    let mut test: Vec<CommentRecord> = Vec::with_capacity(test_size);
    test.extend(moderated.drain(..test_mod));
    test.extend(kept.drain(..test_kept));
    test.shuffle(&mut rng);

    // Downsample the majority class among the remaining records.
    let n = moderated.len().min(kept.len());
    moderated.truncate(n);
    kept.truncate(n);
    let mut train: Vec<CommentRecord> = moderated;
    train.append(&mut kept);
    train.shuffle(&mut rng);

    let ds = CommunityDataset { community: community.to_string(), train, test };
    ds.check_invariants()?;
    Ok(ds)
}

/// Concatenate several datasets into one (used for community-agnostic
/// training). Train and test splits are concatenated in input order.
pub fn merge_datasets(datasets: &[CommunityDataset], name: &str) -> CommunityDataset {
    CommunityDataset {
        community: name.to_string(),
        train: datasets.iter().flat_map(|d| d.train.iter().cloned()).collect(),
        test: datasets.iter().flat_map(|d| d.test.iter().cloned()).collect(),
    }
}
