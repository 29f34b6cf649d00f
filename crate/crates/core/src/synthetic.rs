//! Planted-lexicon corpora for end-to-end checks.
//!
//! Words of length 1 to 3 are drawn over a fixed alphabet; sentences
//! concatenate words sampled from a Zipf-like unigram distribution.

use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Thirty distinct Han characters.
pub const ALPHABET: &str = "的一是不了人我在有他这中大来上国个到说们为子和你地出道也时年";

#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    pub words: usize,
    pub alphabet: Vec<char>,
    /// Sentence length in words, inclusive range.
    pub min_words: usize,
    pub max_words: usize,
    /// Unigram weight of the word at rank `r` (from 1) is `r^-zipf`.
    pub zipf: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            words: 50,
            alphabet: ALPHABET.chars().collect(),
            min_words: 3,
            max_words: 8,
            zipf: 1.0,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticLanguage {
    pub lexicon: Vec<String>,
    weights: WeightedIndex<f64>,
    spec: SyntheticSpec,
    rng: ChaCha8Rng,
}

impl SyntheticLanguage {
    pub fn new(spec: SyntheticSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut seen = HashSet::new();
        let mut lexicon = Vec::with_capacity(spec.words);
        while lexicon.len() < spec.words {
            let len = rng.gen_range(1..=3);
            let w: String = (0..len)
                .map(|_| spec.alphabet[rng.gen_range(0..spec.alphabet.len())])
                .collect();
            if seen.insert(w.clone()) {
                lexicon.push(w);
            }
        }
        let weights = WeightedIndex::new((1..=spec.words).map(|r| (r as f64).powf(-spec.zipf)))
            .expect("positive weights");
        SyntheticLanguage {
            lexicon,
            weights,
            spec,
            rng,
        }
    }

    /// One gold sentence as its words.
    pub fn sentence(&mut self) -> Vec<String> {
        let k = self.rng.gen_range(self.spec.min_words..=self.spec.max_words);
        (0..k)
            .map(|_| self.lexicon[self.weights.sample(&mut self.rng)].clone())
            .collect()
    }

    pub fn sentences(&mut self, count: usize) -> Vec<Vec<String>> {
        (0..count).map(|_| self.sentence()).collect()
    }
}
