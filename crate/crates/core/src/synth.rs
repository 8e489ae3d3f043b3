//! Synthetic corpora with planted extractive structure.
//!
//! Every document mixes filler sentences with a few salient ones drawn from
//! a separate word pool. The gold summary is a lightly perturbed copy of the
//! salient sentences, so a good extractor must learn to find them wherever
//! they sit. Optionally a near-duplicate of a salient sentence is planted to
//! exercise redundancy removal.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Sentence};
use crate::error::{Error, Result};
use crate::oracle::{label_documents, Objective};

const CONSONANTS: &[u8] = b"bdfgklmnprstv";
const VOWELS: &[u8] = b"aeiou";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub documents: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub min_salient: usize,
    pub max_salient: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub filler_pool: usize,
    pub salient_pool: usize,
    /// Chance that a filler sentence borrows one salient word.
    pub leak: f64,
    /// Chance that a gold token is replaced.
    pub gold_noise: f64,
    /// Chance that a document receives a near-duplicate salient sentence.
    pub redundancy: f64,
    pub oracle_max: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            documents: 100,
            min_sentences: 5,
            max_sentences: 9,
            min_salient: 1,
            max_salient: 3,
            min_words: 5,
            max_words: 10,
            filler_pool: 300,
            salient_pool: 120,
            leak: 0.15,
            gold_noise: 0.1,
            redundancy: 0.0,
            oracle_max: 3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.min_sentences == 0 || self.min_sentences > self.max_sentences {
            return fail("sentence count range is empty");
        }
        if self.min_salient == 0 || self.min_salient > self.max_salient || self.max_salient >= self.min_sentences {
            return fail("salient range must be non-empty and leave room for filler");
        }
        if self.min_words < 3 || self.min_words > self.max_words {
            return fail("word range must start at 3 or more");
        }
        if self.filler_pool == 0 || self.salient_pool == 0 {
            return fail("word pools must be non-empty");
        }
        if self.filler_pool + self.salient_pool > CONSONANTS.len().pow(2) * VOWELS.len().pow(2) {
            return fail("word pools too large");
        }
        for p in [self.leak, self.gold_noise, self.redundancy] {
            if !(0.0..=1.0).contains(&p) {
                return fail("probabilities must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

fn pseudo_word(i: usize) -> String {
    let n_syl = CONSONANTS.len() * VOWELS.len();
    let total = n_syl * n_syl;
    let j = (i * 37 + 11) % total;
    let syl = |k: usize| [CONSONANTS[k / VOWELS.len()] as char, VOWELS[k % VOWELS.len()] as char];
    syl(j / n_syl).iter().chain(syl(j % n_syl).iter()).collect()
}

struct Pools {
    filler: Vec<String>,
    salient: Vec<String>,
}

impl Pools {
    fn new(cfg: &SynthConfig) -> Self {
        Pools {
            filler: (0..cfg.filler_pool).map(pseudo_word).collect(),
            salient: (cfg.filler_pool..cfg.filler_pool + cfg.salient_pool).map(pseudo_word).collect(),
        }
    }
}

fn sentence(rng: &mut ChaCha8Rng, cfg: &SynthConfig, pools: &Pools, salient: bool) -> Sentence {
    let n = rng.random_range(cfg.min_words..=cfg.max_words);
    let mut words: Sentence = (0..n)
        .map(|_| {
            let pool = if salient && rng.random_bool(0.8) { &pools.salient } else { &pools.filler };
            pool.choose(rng).expect("non-empty pool").clone()
        })
        .collect();
    if !salient && rng.random_bool(cfg.leak) {
        let at = rng.random_range(0..words.len());
        words[at] = pools.salient.choose(rng).expect("non-empty pool").clone();
    }
    words.push(".".into());
    words
}

fn perturb(rng: &mut ChaCha8Rng, cfg: &SynthConfig, pools: &Pools, s: &Sentence) -> Sentence {
    s.iter()
        .map(|w| {
            if w != "." && rng.random_bool(cfg.gold_noise) {
                pools.filler.choose(rng).expect("non-empty pool").clone()
            } else {
                w.clone()
            }
        })
        .collect()
}

/// Copy of `s` with one word changed; keeps most trigrams.
fn near_duplicate(rng: &mut ChaCha8Rng, pools: &Pools, s: &Sentence) -> Sentence {
    let mut d = s.clone();
    let body = d.len() - 1;
    let at = if rng.random_bool(0.5) { 0 } else { body - 1 };
    d[at] = pools.filler.choose(rng).expect("non-empty pool").clone();
    d
}

/// Generates unlabeled documents.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<Document>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pools = Pools::new(cfg);
    let mut docs = Vec::with_capacity(cfg.documents);
    for d in 0..cfg.documents {
        let m = rng.random_range(cfg.min_sentences..=cfg.max_sentences);
        let n_salient = rng.random_range(cfg.min_salient..=cfg.max_salient);
        let salient_at = rand::seq::index::sample(&mut rng, m, n_salient).into_vec();
        let mut sentences: Vec<Sentence> = (0..m)
            .map(|i| sentence(&mut rng, cfg, &pools, salient_at.contains(&i)))
            .collect();
        let mut sorted = salient_at.clone();
        sorted.sort_unstable();
        let gold: Vec<Sentence> = sorted
            .iter()
            .map(|&i| perturb(&mut rng, cfg, &pools, &sentences[i]))
            .collect();
        if rng.random_bool(cfg.redundancy) {
            let src = sorted[rng.random_range(0..sorted.len())];
            let dup = near_duplicate(&mut rng, &pools, &sentences[src]);
            let at = rng.random_range(0..=sentences.len());
            sentences.insert(at, dup);
        }
        docs.push(Document::new(format!("synth-{d:05}"), sentences, gold, None)?);
    }
    Ok(docs)
}

/// Generates documents and labels them with the greedy oracle.
pub fn generate_labeled(cfg: &SynthConfig) -> Result<Vec<Document>> {
    let mut docs = generate(cfg)?;
    label_documents(&mut docs, cfg.oracle_max, Objective::R1r2Mean)?;
    Ok(docs)
}

/// Splits into train/validation/test by the given counts, in order.
pub fn split(mut docs: Vec<Document>, val: usize, test: usize) -> Result<(Vec<Document>, Vec<Document>, Vec<Document>)> {
    if val + test >= docs.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot hold out {} of {} documents",
            val + test,
            docs.len()
        )));
    }
    let test_part = docs.split_off(docs.len() - test);
    let val_part = docs.split_off(docs.len() - val);
    Ok((docs, val_part, test_part))
}
