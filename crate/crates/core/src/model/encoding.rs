use crate::corpus::{Document, TokenId, Vocabulary, CLS, PAD, SEP};

use super::config::SegmentScheme;

pub const SEGMENT_A: u8 = 0;
pub const SEGMENT_B: u8 = 1;

/// Flat encoder input for one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInput {
    pub token_ids: Vec<TokenId>,
    pub segment_ids: Vec<u8>,
    /// Index of the `[CLS]` opening each surviving sentence.
    pub cls_positions: Vec<usize>,
    /// `true` marks a padding position that must not be attended to.
    pub pad_mask: Vec<bool>,
}

impl EncodedInput {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn num_sentences(&self) -> usize {
        self.cls_positions.len()
    }

    pub fn has_padding(&self) -> bool {
        self.pad_mask.iter().any(|&p| p)
    }

    /// Extends the input with masked `[PAD]` positions up to `len`.
    pub fn padded_to(&self, len: usize) -> EncodedInput {
        let mut out = self.clone();
        while out.token_ids.len() < len {
            out.token_ids.push(PAD);
            out.segment_ids.push(SEGMENT_A);
            out.pad_mask.push(true);
        }
        out
    }
}

/// Segment id of the `i`-th sentence (0-based).
pub fn segment_for(i: usize, scheme: SegmentScheme) -> u8 {
    match scheme {
        SegmentScheme::Interval if i % 2 == 1 => SEGMENT_B,
        _ => SEGMENT_A,
    }
}

/// Wraps every sentence as `[CLS] tokens [SEP]`.
///
/// Whole trailing sentences are dropped to fit `max_positions`; if the first
/// sentence alone is too long its tokens are cut so it still fits.
pub fn encode_input(
    doc: &Document,
    vocab: &Vocabulary,
    max_positions: usize,
    scheme: SegmentScheme,
) -> EncodedInput {
    let mut token_ids = Vec::new();
    let mut segment_ids = Vec::new();
    let mut cls_positions = Vec::new();
    for (i, sentence) in doc.sentences.iter().enumerate() {
        let mut ids = vocab.encode_tokens(sentence);
        let needed = ids.len() + 2;
        if token_ids.len() + needed > max_positions {
            if i > 0 {
                break;
            }
            ids.truncate(max_positions.saturating_sub(2));
        }
        let seg = segment_for(i, scheme);
        cls_positions.push(token_ids.len());
        token_ids.push(CLS);
        token_ids.extend_from_slice(&ids);
        token_ids.push(SEP);
        segment_ids.resize(token_ids.len(), seg);
    }
    let pad_mask = vec![false; token_ids.len()];
    EncodedInput {
        token_ids,
        segment_ids,
        cls_positions,
        pad_mask,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab;

    fn doc(src: &[&str]) -> Document {
        Document::from_text("e", src, &["g"]).unwrap()
    }

    #[test]
    fn five_sentences_alternate_segments() {
        let d = doc(&["a", "b c", "d", "e f g", "h"]);
        let v = build_vocab([&d], 50).unwrap();
        let enc = encode_input(&d, &v, 512, SegmentScheme::Interval);
        let per_sentence: Vec<u8> = enc.cls_positions.iter().map(|&p| enc.segment_ids[p]).collect();
        assert_eq!(per_sentence, vec![0, 1, 0, 1, 0]);
        // Segment is constant over each [CLS] .. [SEP] span.
        for (k, &start) in enc.cls_positions.iter().enumerate() {
            let end = enc.cls_positions.get(k + 1).copied().unwrap_or(enc.len());
            assert!(enc.segment_ids[start..end].iter().all(|&s| s == per_sentence[k]));
            assert_eq!(enc.token_ids[end - 1], SEP);
        }
    }

    #[test]
    fn single_short_sentence() {
        let d = doc(&["x y"]);
        let v = build_vocab([&d], 50).unwrap();
        let enc = encode_input(&d, &v, 512, SegmentScheme::Interval);
        let (x, y) = (v.id("x").unwrap(), v.id("y").unwrap());
        assert_eq!(enc.token_ids, vec![CLS, x, y, SEP]);
        assert_eq!(enc.cls_positions, vec![0]);
        assert_eq!(enc.segment_ids, vec![0; 4]);
        assert_eq!(enc.pad_mask, vec![false; 4]);
    }

    #[test]
    fn truncation_drops_whole_sentences() {
        // encodings of 6 + 7 + 7 = 20 positions
        let d = doc(&["a b c d", "e f g h i", "j k l m n"]);
        let v = build_vocab([&d], 50).unwrap();
        let enc = encode_input(&d, &v, 15, SegmentScheme::Interval);
        assert_eq!(enc.len(), 13);
        assert_eq!(enc.num_sentences(), 2);
        let enc = encode_input(&d, &v, 12, SegmentScheme::Interval);
        assert_eq!(enc.len(), 6);
        assert_eq!(enc.num_sentences(), 1);
    }

    #[test]
    fn overlong_first_sentence_is_cut() {
        let d = doc(&["a b c d e f g h", "i"]);
        let v = build_vocab([&d], 50).unwrap();
        let enc = encode_input(&d, &v, 5, SegmentScheme::Interval);
        assert_eq!(enc.len(), 5);
        assert_eq!(enc.num_sentences(), 1);
        assert_eq!(enc.token_ids[0], CLS);
        assert_eq!(enc.token_ids[4], SEP);
    }

    #[test]
    fn constant_scheme_uses_segment_a() {
        let d = doc(&["a", "b", "c"]);
        let v = build_vocab([&d], 50).unwrap();
        let enc = encode_input(&d, &v, 512, SegmentScheme::Constant);
        assert!(enc.segment_ids.iter().all(|&s| s == SEGMENT_A));
    }

    #[test]
    fn padding_appends_masked_positions() {
        let d = doc(&["a b"]);
        let v = build_vocab([&d], 50).unwrap();
        let enc = encode_input(&d, &v, 512, SegmentScheme::Interval).padded_to(7);
        assert_eq!(enc.len(), 7);
        assert_eq!(enc.pad_mask, vec![false, false, false, false, true, true, true]);
        assert!(enc.has_padding());
    }
}
