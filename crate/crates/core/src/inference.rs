//! Turning sentence scores into extractive summaries.

use std::collections::HashSet;

use crate::corpus::{flatten, Document, Sentence, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{encode_input, BertSum, SentenceScores};

pub const DEFAULT_K: usize = 3;

/// Why a ranked candidate was skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockReason {
    /// Shares `trigram` with the already chosen sentence `with`.
    SharedTrigram { with: usize, trigram: [String; 3] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummarySelection {
    /// Chosen sentence indices in document order.
    pub chosen: Vec<usize>,
    pub scores: SentenceScores,
    pub blocked: Vec<(usize, BlockReason)>,
}

/// Indices by descending score, ties by ascending index.
pub fn rank_sentences(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

pub fn trigrams(sentence: &[String]) -> HashSet<[&str; 3]> {
    sentence
        .windows(3)
        .map(|w| [w[0].as_str(), w[1].as_str(), w[2].as_str()])
        .collect()
}

/// Walks `ranked` and accepts a candidate unless one of its trigrams already
/// occurs in an accepted sentence. Stops after `k` acceptances.
pub fn trigram_block_select(ranked: &[usize], sentences: &[Sentence], k: usize) -> (Vec<usize>, Vec<(usize, BlockReason)>) {
    let mut chosen: Vec<usize> = Vec::new();
    let mut blocked = Vec::new();
    for &c in ranked {
        if chosen.len() == k {
            break;
        }
        let hit = chosen.iter().find_map(|&s| {
            let accepted = trigrams(&sentences[s]);
            sentences[c]
                .windows(3)
                .find(|w| accepted.contains(&[w[0].as_str(), w[1].as_str(), w[2].as_str()]))
                .map(|w| (s, w))
        });
        match hit {
            Some((with, w)) => blocked.push((
                c,
                BlockReason::SharedTrigram {
                    with,
                    trigram: [w[0].clone(), w[1].clone(), w[2].clone()],
                },
            )),
            _ => chosen.push(c),
        }
    }
    chosen.sort_unstable();
    (chosen, blocked)
}

/// The first `k` ranked indices, in document order.
pub fn select_top_k(ranked: &[usize], k: usize) -> Vec<usize> {
    let mut chosen: Vec<usize> = ranked.iter().copied().take(k).collect();
    chosen.sort_unstable();
    chosen
}

/// Builds a selection from scores with or without trigram blocking.
pub fn select(scores: SentenceScores, sentences: &[Sentence], k: usize, blocking: bool) -> Result<SummarySelection> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let ranked = rank_sentences(scores.as_slice());
    let (chosen, blocked) = if blocking {
        trigram_block_select(&ranked, sentences, k)
    } else {
        (select_top_k(&ranked, k), Vec::new())
    };
    Ok(SummarySelection {
        chosen,
        scores,
        blocked,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub sentences: Vec<Sentence>,
    pub selection: SummarySelection,
}

/// Scores `doc` with `model` and extracts up to `k` sentences. Sentences cut
/// by the position limit are never candidates.
pub fn summarize(model: &BertSum, vocab: &Vocabulary, doc: &Document, k: usize, blocking: bool) -> Result<Summary> {
    if doc.sentences.is_empty() {
        return Err(Error::Document {
            id: doc.id.clone(),
            msg: "empty document".into(),
        });
    }
    let cfg = model.config();
    let input = encode_input(doc, vocab, cfg.max_positions, cfg.segments);
    let scores = model.scores(&input)?;
    let selection = select(scores, &doc.sentences, k, blocking)?;
    Ok(Summary {
        sentences: selection.chosen.iter().map(|&i| doc.sentences[i].clone()).collect(),
        selection,
    })
}

/// [`summarize`] over many documents on up to `threads` worker threads.
/// Output order follows `docs`.
pub fn summarize_all(
    model: &BertSum,
    vocab: &Vocabulary,
    docs: &[Document],
    k: usize,
    blocking: bool,
    threads: usize,
) -> Result<Vec<Summary>> {
    let threads = threads.clamp(1, docs.len().max(1));
    if threads == 1 {
        return docs.iter().map(|d| summarize(model, vocab, d, k, blocking)).collect();
    }
    let chunk = docs.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = docs
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|d| summarize(model, vocab, d, k, blocking))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(docs.len());
        for h in handles {
            out.extend(h.join().expect("summarize worker panicked")?);
        }
        Ok(out)
    })
}

pub fn lead_baseline(doc: &Document, k: usize) -> Vec<Sentence> {
    doc.sentences.iter().take(k).cloned().collect()
}

pub fn first_k_words_baseline(doc: &Document, k_words: usize) -> Vec<String> {
    flatten(&doc.sentences).into_iter().take(k_words).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, word_tokens};
    use crate::model::{HeadKind, ModelConfig};
    use proptest::prelude::*;

    fn sent(s: &str) -> Sentence {
        word_tokens(s)
    }

    #[test]
    fn ranking_examples() {
        assert_eq!(rank_sentences(&[0.1, 0.9, 0.5]), vec![1, 2, 0]);
        assert_eq!(rank_sentences(&[0.3; 4]), vec![0, 1, 2, 3]);
    }

    #[test]
    fn identical_sentences_block_each_other() {
        let s = vec![sent("the cat sat down"), sent("the cat sat down")];
        let (chosen, blocked) = trigram_block_select(&[0, 1], &s, 2);
        assert_eq!(chosen, vec![0]);
        assert_eq!(blocked.len(), 1);
        assert_eq!(
            blocked[0],
            (
                1,
                BlockReason::SharedTrigram {
                    with: 0,
                    trigram: ["the".into(), "cat".into(), "sat".into()]
                }
            )
        );
    }

    #[test]
    fn short_candidates_never_blocked() {
        let s = vec![sent("a b c"), sent("a b"), sent("b c")];
        let (chosen, _) = trigram_block_select(&[0, 1, 2], &s, 3);
        assert_eq!(chosen, vec![0, 1, 2]);
    }

    #[test]
    fn engineered_six_sentence_case() {
        let s = vec![
            sent("alpha beta gamma delta"),
            sent("beta gamma delta eps"),
            sent("zeta eta theta"),
            sent("gamma delta zeta eta"),
            sent("one two three"),
            sent("eta theta iota"),
        ];
        let ranked = [1, 0, 3, 2, 5, 4];
        // 0 repeats "beta gamma delta" from 1; 3 and 2 overlap only in bigrams.
        let (chosen, blocked) = trigram_block_select(&ranked, &s, 3);
        assert_eq!(chosen, vec![1, 2, 3]);
        assert_eq!(blocked.iter().map(|b| b.0).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn baselines() {
        let d = Document::from_text("d", &["one two .", "three four five .", "six ."], &["x"]).unwrap();
        assert_eq!(lead_baseline(&d, 2).len(), 2);
        assert_eq!(lead_baseline(&d, 5).len(), 3);
        assert!(first_k_words_baseline(&d, 0).is_empty());
        assert_eq!(first_k_words_baseline(&d, 5), vec!["one", "two", ".", "three", "four"]);
        assert_eq!(first_k_words_baseline(&d, 100).len(), 9);
    }

    fn tiny_model(vocab: &Vocabulary) -> BertSum {
        let mut cfg = ModelConfig::tiny(vocab.len(), HeadKind::InterTransformer);
        cfg.d_model = 16;
        cfg.d_ff = 32;
        BertSum::new(cfg).unwrap()
    }

    #[test]
    fn summarize_small_documents() {
        let d = Document::from_text("d", &["red fox .", "blue sky .", "green tree ."], &["red"]).unwrap();
        let v = build_vocab([&d], 50).unwrap();
        let m = tiny_model(&v);
        let on = summarize(&m, &v, &d, 3, true).unwrap();
        let off = summarize(&m, &v, &d, 3, false).unwrap();
        assert_eq!(on.selection.chosen, vec![0, 1, 2]);
        assert_eq!(on, off);
        for _ in 0..10 {
            assert_eq!(summarize(&m, &v, &d, 2, true).unwrap(), summarize(&m, &v, &d, 2, true).unwrap());
        }
        let empty = Document {
            id: "e".into(),
            sentences: vec![],
            gold_summary: vec![],
            labels: None,
        };
        assert!(summarize(&m, &v, &empty, 3, true).is_err());
    }

    #[test]
    fn threaded_matches_sequential() {
        let docs: Vec<Document> = (0..7)
            .map(|i| {
                Document::from_text(format!("d{i}"), &["red fox runs .", "blue sky .", "red fox runs far ."], &["fox"])
                    .unwrap()
            })
            .collect();
        let v = build_vocab(&docs, 50).unwrap();
        let m = tiny_model(&v);
        let one = summarize_all(&m, &v, &docs, 2, true, 1).unwrap();
        let many = summarize_all(&m, &v, &docs, 2, true, 3).unwrap();
        assert_eq!(one, many);
        assert!(summarize_all(&m, &v, &[], 2, true, 4).unwrap().is_empty());
    }

    fn brute_force(ranked: &[usize], sentences: &[Sentence], k: usize) -> Vec<usize> {
        let mut acc: Vec<usize> = Vec::new();
        for &c in ranked {
            if acc.len() == k {
                break;
            }
            let shares = acc.iter().any(|&s| {
                sentences[c]
                    .windows(3)
                    .any(|a| sentences[s].windows(3).any(|b| a == b))
            });
            if !shares {
                acc.push(c);
            }
        }
        acc.sort();
        acc
    }

    proptest! {
        #[test]
        fn blocking_matches_brute_force(
            sents in prop::collection::vec(prop::collection::vec(0u8..4, 0..7), 1..8),
            seed in any::<u64>(),
            k in 1usize..5,
        ) {
            let sentences: Vec<Sentence> = sents.iter().map(|s| s.iter().map(|t| format!("w{t}")).collect()).collect();
            let scores: Vec<f64> = (0..sentences.len()).map(|i| ((seed >> (i % 60)) % 97) as f64).collect();
            let ranked = rank_sentences(&scores);
            let (chosen, _) = trigram_block_select(&ranked, &sentences, k);
            prop_assert_eq!(&chosen, &brute_force(&ranked, &sentences, k));
            for (i, &a) in chosen.iter().enumerate() {
                for &b in &chosen[i + 1..] {
                    prop_assert!(trigrams(&sentences[a]).is_disjoint(&trigrams(&sentences[b])));
                }
            }
            let scaled: Vec<f64> = scores.iter().map(|s| s * 3.5).collect();
            prop_assert_eq!(rank_sentences(&scaled), ranked.clone());
            prop_assert_eq!(select_top_k(&ranked, usize::MAX), (0..sentences.len()).collect::<Vec<_>>());
        }
    }
}
