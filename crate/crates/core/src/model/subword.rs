//! First-subpiece convention for encoders that split words into pieces: the
//! gold tag sits on the first piece of each word, and every other piece is
//! masked out of the losses, the contrastive pool, and prediction.

use crate::tagging::LabelTag;

/// `word_ids[p]` is the index of the word that piece `p` came from, or `None`
/// for special pieces. Returns the mask of pieces that carry a label.
pub fn first_subpiece_mask(word_ids: &[Option<usize>]) -> Vec<bool> {
    let mut prev = None;
    word_ids
        .iter()
        .map(|w| {
            let keep = w.is_some() && *w != prev;
            prev = *w;
            keep
        })
        .collect()
}

/// Spreads word-level tags onto pieces; unlabeled pieces get `None`.
pub fn piece_tags(word_tags: &[LabelTag], word_ids: &[Option<usize>]) -> Vec<Option<LabelTag>> {
    first_subpiece_mask(word_ids)
        .iter()
        .zip(word_ids)
        .map(|(keep, w)| if *keep { w.and_then(|i| word_tags.get(i).copied()) } else { None })
        .collect()
}

/// Collects per-piece values back to words by reading each word's first piece.
pub fn gather_words<T: Copy>(piece_values: &[T], word_ids: &[Option<usize>]) -> Vec<T> {
    piece_values
        .iter()
        .zip(first_subpiece_mask(word_ids))
        .filter_map(|(v, keep)| keep.then_some(*v))
        .collect()
}
