//! Random bipartite partitions of token sequences.
//!
//! A partition cuts a sequence into a contiguous span and its surrounding
//! context, with a single mask token standing in for the removed span:
//!
//! ```text
//! tokens:  [a b c d]      span 2..=3 (1-based)
//! span:    [b c]
//! context: [a MASK d]
//! ```
//!
//! Splicing the span back over the mask reconstructs the original
//! sequence, so `len(span) + len(context) = len(tokens) + 1` always holds.

use rand::Rng;
use std::ops::Range;

/// A bipartite split of a token sequence.
///
/// `span_range` is the 0-based half-open range of the span within the
/// original sequence; the span is never empty. `context` is the
/// concatenation of the prefix, one `mask` token, and the suffix — the
/// mask is inserted even when the prefix or suffix is empty, so the
/// context is never empty either.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition<T> {
    pub span_range: Range<usize>,
    pub span: Vec<T>,
    pub context: Vec<T>,
    pub mask: T,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PartitionError {
    #[error("cannot partition an empty token sequence")]
    EmptyInput,
    #[error("span range {start}..{end} out of bounds for {len} tokens")]
    BadRange { start: usize, end: usize, len: usize },
    #[error("context must contain exactly one mask token, found {0}")]
    MaskCount(usize),
}

impl<T: Clone + PartialEq> Partition<T> {
    /// Build the partition with the span covering `lo..=hi` (0-based
    /// inclusive indices into `tokens`).
    pub fn from_span_indices(
        tokens: &[T],
        lo: usize,
        hi: usize,
        mask: T,
    ) -> Result<Self, PartitionError> {
        if tokens.is_empty() {
            return Err(PartitionError::EmptyInput);
        }
        if lo > hi || hi >= tokens.len() {
            return Err(PartitionError::BadRange { start: lo, end: hi + 1, len: tokens.len() });
        }
        let span = tokens[lo..=hi].to_vec();
        let mut context = Vec::with_capacity(tokens.len() - span.len() + 1);
        context.extend_from_slice(&tokens[..lo]);
        context.push(mask.clone());
        context.extend_from_slice(&tokens[hi + 1..]);
        Ok(Partition { span_range: lo..hi + 1, span, context, mask })
    }

    /// Splice the span back over the mask, recovering the original
    /// sequence. Fails unless the context contains exactly one mask.
    pub fn reconstruct(&self) -> Result<Vec<T>, PartitionError> {
        let mask_count = self.context.iter().filter(|t| **t == self.mask).count();
        if mask_count != 1 {
            return Err(PartitionError::MaskCount(mask_count));
        }
        let at = self.context.iter().position(|t| *t == self.mask).expect("counted above");
        let mut out = Vec::with_capacity(self.context.len() - 1 + self.span.len());
        out.extend_from_slice(&self.context[..at]);
        out.extend_from_slice(&self.span);
        out.extend_from_slice(&self.context[at + 1..]);
        Ok(out)
    }
}

/// Sample a partition by drawing two indices independently and uniformly
/// over the sequence, sorting them, and taking the inclusive span between
/// them. Every contiguous span is reachable.
pub fn sample_partition<T: Clone + PartialEq>(
    tokens: &[T],
    mask: T,
    rng: &mut impl Rng,
) -> Result<Partition<T>, PartitionError> {
    if tokens.is_empty() {
        return Err(PartitionError::EmptyInput);
    }
    let a = rng.random_range(0..tokens.len());
    let b = rng.random_range(0..tokens.len());
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    Partition::from_span_indices(tokens, lo, hi, mask)
}
