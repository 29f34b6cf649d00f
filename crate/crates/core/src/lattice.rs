//! Dynamic programming over the segmentation lattice.
//!
//! Everything here works on precomputed [`SegmentScoreTable`]s and never
//! touches the neural model. All quantities are natural-log probabilities.
//!
//! A table for the backward direction is indexed on the *reversed* sentence:
//! cell `(start, len)` of a backward table covers original positions
//! `n - start - len .. n - start`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest sentence the enumeration oracles accept.
pub const BRUTE_FORCE_LIMIT: usize = 12;

/// `ln(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Log-sum-exp over an iterator. Empty input yields `-inf`.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-probabilities of every candidate segment `(start, len)` with
/// `1 <= len <= min(t_max, n - start)`.
#[derive(Clone, Debug)]
pub struct SegmentScoreTable {
    n: usize,
    t_max: usize,
    cells: Vec<f64>,
}

impl SegmentScoreTable {
    /// Builds a table by evaluating `f(start, len)` on every defined cell.
    ///
    /// Panics if `n == 0` or `t_max == 0`.
    pub fn from_fn(n: usize, t_max: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(n >= 1, "a score table needs at least one character");
        assert!(t_max >= 1, "maximum word length must be at least 1");
        let mut cells = vec![f64::NAN; n * t_max];
        for start in 0..n {
            for len in 1..=t_max.min(n - start) {
                cells[start * t_max + len - 1] = f(start, len);
            }
        }
        SegmentScoreTable { n, t_max, cells }
    }

    pub fn zeros(n: usize, t_max: usize) -> Self {
        Self::from_fn(n, t_max, |_, _| 0.0)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn t_max(&self) -> usize {
        self.t_max
    }

    /// Longest segment that may start at `start`.
    #[inline]
    pub fn max_len(&self, start: usize) -> usize {
        self.t_max.min(self.n - start)
    }

    #[inline]
    pub fn is_defined(&self, start: usize, len: usize) -> bool {
        start < self.n && len >= 1 && len <= self.max_len(start)
    }

    #[inline]
    pub fn score(&self, start: usize, len: usize) -> f64 {
        debug_assert!(self.is_defined(start, len), "cell ({start}, {len}) undefined");
        self.cells[start * self.t_max + len - 1]
    }

    #[inline]
    pub fn set(&mut self, start: usize, len: usize, value: f64) {
        assert!(self.is_defined(start, len), "cell ({start}, {len}) undefined");
        self.cells[start * self.t_max + len - 1] = value;
    }

    /// The same segments indexed from the other end of the sentence.
    pub fn mirrored(&self) -> Self {
        Self::from_fn(self.n, self.t_max, |start, len| {
            self.score(self.n - start - len, len)
        })
    }

    pub fn all_finite(&self) -> bool {
        (0..self.n).all(|s| (1..=self.max_len(s)).all(|l| self.score(s, l).is_finite()))
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.t_max != other.t_max {
            return Err(Error::Contract(format!(
                "score tables disagree: forward (n={}, T={}) vs backward (n={}, T={})",
                self.n, self.t_max, other.n, other.t_max
            )));
        }
        Ok(())
    }
}

impl PartialEq for SegmentScoreTable {
    /// Compares defined cells only.
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.t_max == other.t_max
            && (0..self.n).all(|s| (1..=self.max_len(s)).all(|l| self.score(s, l) == other.score(s, l)))
    }
}

/// Forward variables of one lattice pass.
#[derive(Clone, Debug)]
pub struct LatticeResult {
    n: usize,
    t_max: usize,
    alpha: Vec<f64>,
    prefix: Vec<f64>,
    log_marginal: f64,
}

impl LatticeResult {
    /// `ln alpha_t^k`: mass of the length-`t` prefix whose last `k`
    /// characters form one word. Only `(0, 0)` and `1 <= k <= min(T, t)` are
    /// meaningful; other cells are `-inf`.
    pub fn alpha(&self, t: usize, k: usize) -> f64 {
        self.alpha[t * (self.t_max + 1) + k]
    }

    /// `ln sum_k alpha_t^k`, the total mass of all segmentations of the
    /// length-`t` prefix.
    pub fn prefix_log_sum(&self, t: usize) -> f64 {
        self.prefix[t]
    }

    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Sums the probability of every segmentation (word lengths `<= T`).
///
/// The inner sum over the previous word length is factored into the prefix
/// sum `A_t = logsumexp_k alpha(t, k)`, so each cell costs O(1).
pub fn forward_marginal(scores: &SegmentScoreTable) -> LatticeResult {
    let n = scores.n();
    let t_max = scores.t_max();
    let width = t_max + 1;
    let mut alpha = vec![f64::NEG_INFINITY; (n + 1) * width];
    let mut prefix = vec![f64::NEG_INFINITY; n + 1];
    alpha[0] = 0.0;
    prefix[0] = 0.0;
    for t in 1..=n {
        let mut acc = f64::NEG_INFINITY;
        for k in 1..=t_max.min(t) {
            let a = scores.score(t - k, k) + prefix[t - k];
            alpha[t * width + k] = a;
            acc = log_add(acc, a);
        }
        prefix[t] = acc;
    }
    LatticeResult {
        n,
        t_max,
        alpha,
        log_marginal: prefix[n],
        prefix,
    }
}

/// The backward pass: the forward recursion applied to the table scored on
/// the reversed sentence.
pub fn backward_marginal(scores_bwd: &SegmentScoreTable) -> LatticeResult {
    forward_marginal(scores_bwd)
}

/// `ln` of the total mass of all segmentations of the suffix starting at
/// each position; entry `n` is 0.
pub fn suffix_log_sums(scores: &SegmentScoreTable) -> Vec<f64> {
    let n = scores.n();
    let mut suffix = vec![f64::NEG_INFINITY; n + 1];
    suffix[n] = 0.0;
    for start in (0..n).rev() {
        let mut acc = f64::NEG_INFINITY;
        for len in 1..=scores.max_len(start) {
            acc = log_add(acc, scores.score(start, len) + suffix[start + len]);
        }
        suffix[start] = acc;
    }
    suffix
}

/// Posterior probability that each candidate segment is a word, plus the
/// log marginal. These are the derivatives of the log marginal with
/// respect to every table cell.
pub fn segment_posteriors(scores: &SegmentScoreTable) -> (f64, SegmentScoreTable) {
    let fwd = forward_marginal(scores);
    let suffix = suffix_log_sums(scores);
    let z = fwd.log_marginal();
    let post = SegmentScoreTable::from_fn(scores.n(), scores.t_max(), |start, len| {
        (fwd.prefix_log_sum(start) + scores.score(start, len) + suffix[start + len] - z).exp()
    });
    (z, post)
}

/// Word boundaries of one sentence. `boundaries` are strictly increasing
/// offsets in `(0, n)`; 0 and `n` are implicit.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Segmentation {
    n: usize,
    boundaries: Vec<usize>,
}

impl Segmentation {
    pub fn new(n: usize, boundaries: Vec<usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Contract("segmentation of an empty sentence".into()));
        }
        let mut prev = 0;
        for &b in &boundaries {
            if b <= prev || b >= n {
                return Err(Error::Contract(format!(
                    "boundaries {boundaries:?} are not strictly increasing inside (0, {n})"
                )));
            }
            prev = b;
        }
        Ok(Segmentation { n, boundaries })
    }

    /// One word covering the whole sentence.
    pub fn whole(n: usize) -> Self {
        Segmentation {
            n,
            boundaries: Vec::new(),
        }
    }

    pub fn from_word_lengths(lengths: &[usize]) -> Result<Self> {
        if lengths.contains(&0) {
            return Err(Error::Contract(format!("zero-length word in {lengths:?}")));
        }
        let n: usize = lengths.iter().sum();
        let mut boundaries = Vec::with_capacity(lengths.len().saturating_sub(1));
        let mut acc = 0;
        for &l in &lengths[..lengths.len().saturating_sub(1)] {
            acc += l;
            boundaries.push(acc);
        }
        Segmentation::new(n, boundaries)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn word_count(&self) -> usize {
        self.boundaries.len() + 1
    }

    /// `(start, end)` of every word, left to right.
    pub fn spans(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let starts = std::iter::once(0).chain(self.boundaries.iter().copied());
        let ends = self.boundaries.iter().copied().chain(std::iter::once(self.n));
        starts.zip(ends)
    }

    pub fn word_lengths(&self) -> Vec<usize> {
        self.spans().map(|(s, e)| e - s).collect()
    }

    /// The same cut points seen from the other end of the sentence.
    pub fn mirrored(&self) -> Self {
        let mut boundaries: Vec<usize> = self.boundaries.iter().map(|b| self.n - b).collect();
        boundaries.reverse();
        Segmentation {
            n: self.n,
            boundaries,
        }
    }

    /// Union of two boundary sets over the same sentence.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::Contract(format!(
                "cannot merge segmentations of lengths {} and {}",
                self.n, other.n
            )));
        }
        let merged: BTreeSet<usize> = self
            .boundaries
            .iter()
            .chain(other.boundaries.iter())
            .copied()
            .collect();
        Ok(Segmentation {
            n: self.n,
            boundaries: merged.into_iter().collect(),
        })
    }

    /// Joins the per-position text units with one ASCII space at each
    /// boundary.
    pub fn render<S: AsRef<str>>(&self, units: &[S]) -> String {
        assert_eq!(units.len(), self.n, "unit count must equal sentence length");
        let mut out = String::new();
        for (i, (s, e)) in self.spans().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            for u in &units[s..e] {
                out.push_str(u.as_ref());
            }
        }
        out
    }
}

/// Best segmentation under a score table.
///
/// Ties at a DP cell go to the longer final word.
pub fn viterbi(scores: &SegmentScoreTable) -> (Segmentation, f64) {
    let n = scores.n();
    let mut best = vec![f64::NEG_INFINITY; n + 1];
    let mut back = vec![0usize; n + 1];
    best[0] = 0.0;
    for t in 1..=n {
        for k in 1..=scores.t_max().min(t) {
            let cand = best[t - k] + scores.score(t - k, k);
            if cand >= best[t] {
                best[t] = cand;
                back[t] = k;
            }
        }
    }
    let mut lengths = Vec::new();
    let mut t = n;
    while t > 0 {
        lengths.push(back[t]);
        t -= back[t];
    }
    lengths.reverse();
    let seg = Segmentation::from_word_lengths(&lengths).expect("backtrace covers the sentence");
    (seg, best[n])
}

/// Per-segment log of the geometric mean of the forward and backward
/// probabilities, indexed in forward coordinates.
pub fn averaged_table(
    scores_fwd: &SegmentScoreTable,
    scores_bwd: &SegmentScoreTable,
) -> Result<SegmentScoreTable> {
    scores_fwd.check_same_shape(scores_bwd)?;
    let n = scores_fwd.n();
    Ok(SegmentScoreTable::from_fn(n, scores_fwd.t_max(), |start, len| {
        0.5 * (scores_fwd.score(start, len) + scores_bwd.score(n - start - len, len))
    }))
}

/// Viterbi over the averaged forward/backward segment probabilities.
pub fn sgb_a(scores_fwd: &SegmentScoreTable, scores_bwd: &SegmentScoreTable) -> Result<Segmentation> {
    let avg = averaged_table(scores_fwd, scores_bwd)?;
    Ok(viterbi(&avg).0)
}

/// Union of the boundaries found by each direction on its own.
pub fn sgb_c(scores_fwd: &SegmentScoreTable, scores_bwd: &SegmentScoreTable) -> Result<Segmentation> {
    scores_fwd.check_same_shape(scores_bwd)?;
    let (fwd, _) = viterbi(scores_fwd);
    let (bwd, _) = viterbi(scores_bwd);
    fwd.union(&bwd.mirrored())
}

/// Which combination of the two directions produces the final segmentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Decoder {
    #[default]
    SgbA,
    SgbC,
    Forward,
    Backward,
}

impl Decoder {
    pub fn decode(
        self,
        scores_fwd: &SegmentScoreTable,
        scores_bwd: &SegmentScoreTable,
    ) -> Result<Segmentation> {
        match self {
            Decoder::SgbA => sgb_a(scores_fwd, scores_bwd),
            Decoder::SgbC => sgb_c(scores_fwd, scores_bwd),
            Decoder::Forward => Ok(viterbi(scores_fwd).0),
            Decoder::Backward => Ok(viterbi(scores_bwd).0.mirrored()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Decoder::SgbA => "sgb-a",
            Decoder::SgbC => "sgb-c",
            Decoder::Forward => "fwd",
            Decoder::Backward => "bwd",
        }
    }
}

impl fmt::Display for Decoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Decoder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgb-a" => Ok(Decoder::SgbA),
            "sgb-c" => Ok(Decoder::SgbC),
            "fwd" => Ok(Decoder::Forward),
            "bwd" => Ok(Decoder::Backward),
            other => Err(Error::Config(format!(
                "unknown decoder {other:?} (expected sgb-a, sgb-c, fwd or bwd)"
            ))),
        }
    }
}

fn for_each_segmentation(n: usize, t_max: usize, mut visit: impl FnMut(&[usize])) {
    fn rec(remaining: usize, t_max: usize, lengths: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
        if remaining == 0 {
            visit(lengths);
            return;
        }
        for len in 1..=t_max.min(remaining) {
            lengths.push(len);
            rec(remaining - len, t_max, lengths, visit);
            lengths.pop();
        }
    }
    rec(n, t_max, &mut Vec::new(), &mut visit);
}

fn path_score(scores: &SegmentScoreTable, lengths: &[usize]) -> f64 {
    let mut start = 0;
    let mut total = 0.0;
    for &len in lengths {
        total += scores.score(start, len);
        start += len;
    }
    total
}

fn guard(n: usize) -> Result<()> {
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    Ok(())
}

/// Enumerates every segmentation and log-sum-exps their scores.
pub fn brute_force_marginal(scores: &SegmentScoreTable) -> Result<f64> {
    guard(scores.n())?;
    let mut paths = Vec::new();
    for_each_segmentation(scores.n(), scores.t_max(), |lengths| {
        paths.push(path_score(scores, lengths));
    });
    Ok(log_sum_exp(paths))
}

/// Enumerates every segmentation and keeps the best one, breaking exact
/// ties the way [`viterbi`] does (longer final word, then recursively on
/// the prefix).
pub fn brute_force_best(scores: &SegmentScoreTable) -> Result<(Segmentation, f64)> {
    guard(scores.n())?;
    let mut best: Option<(Vec<usize>, f64)> = None;
    for_each_segmentation(scores.n(), scores.t_max(), |lengths| {
        let s = path_score(scores, lengths);
        let better = match &best {
            None => true,
            Some((b_len, b_score)) => {
                s > *b_score || (s == *b_score && lengths.iter().rev().cmp(b_len.iter().rev()).is_gt())
            }
        };
        if better {
            best = Some((lengths.to_vec(), s));
        }
    });
    let (lengths, score) = best.expect("at least one segmentation exists");
    Ok((Segmentation::from_word_lengths(&lengths)?, score))
}

/// Number of compositions of `n` into parts of size `1..=t_max`.
pub fn composition_count(n: usize, t_max: usize) -> u64 {
    let mut count = vec![0u64; n + 1];
    count[0] = 1;
    for t in 1..=n {
        count[t] = (1..=t_max.min(t)).map(|k| count[t - k]).sum();
    }
    count[n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_table(rng: &mut ChaCha8Rng, n: usize, t_max: usize) -> SegmentScoreTable {
        SegmentScoreTable::from_fn(n, t_max, |_, _| rng.gen_range(-3.0..-0.1))
    }

    #[test]
    fn single_char_marginal_is_its_score() {
        let t = SegmentScoreTable::from_fn(1, 3, |_, _| -1.7);
        assert_eq!(forward_marginal(&t).log_marginal(), -1.7);
        assert_eq!(backward_marginal(&t).log_marginal(), -1.7);
        let (seg, best) = viterbi(&t);
        assert!(seg.boundaries().is_empty());
        assert_eq!(best, -1.7);
    }

    #[test]
    fn zero_scores_count_segmentations() {
        let t = SegmentScoreTable::zeros(4, 2);
        assert!((forward_marginal(&t).log_marginal() - 5f64.ln()).abs() < 1e-12);
        assert!((brute_force_marginal(&SegmentScoreTable::zeros(2, 2)).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((brute_force_marginal(&SegmentScoreTable::zeros(3, 3)).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!((brute_force_marginal(&SegmentScoreTable::zeros(5, 2)).unwrap() - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn alpha_base_case_and_marginal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_table(&mut rng, 6, 3);
        let r = forward_marginal(&t);
        assert_eq!(r.alpha(0, 0), 0.0);
        let lse = log_sum_exp((1..=3).map(|k| r.alpha(6, k)));
        assert!((lse - r.log_marginal()).abs() < 1e-12);
        assert!((r.log_marginal() - brute_force_marginal(&t).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn backward_on_reversed_lattice_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_table(&mut rng, 7, 3);
        let r = backward_marginal(&t);
        assert!((r.log_marginal() - brute_force_marginal(&t).unwrap()).abs() < 1e-9);
        // the reversed lattice carries the same total mass
        let m = forward_marginal(&t.mirrored()).log_marginal();
        assert!((r.log_marginal() - m).abs() < 1e-9);
    }

    #[test]
    fn palindromic_table_gives_equal_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = random_table(&mut rng, 6, 3);
        let pal = SegmentScoreTable::from_fn(6, 3, |s, l| {
            0.5 * (base.score(s, l) + base.score(6 - s - l, l))
        });
        assert_eq!(pal, pal.mirrored());
        let f = forward_marginal(&pal).log_marginal();
        let b = backward_marginal(&pal.mirrored()).log_marginal();
        assert!((f - b).abs() < 1e-12);
    }

    #[test]
    fn viterbi_two_chars_prefers_whole_word() {
        let mut t = SegmentScoreTable::zeros(2, 2);
        t.set(0, 2, -1.0);
        t.set(0, 1, -0.6);
        t.set(1, 1, -0.6);
        let (seg, best) = viterbi(&t);
        assert!(seg.boundaries().is_empty());
        assert_eq!(best, -1.0);
    }

    #[test]
    fn viterbi_tie_break_prefers_longer_final_word() {
        let t = SegmentScoreTable::zeros(5, 2);
        let (seg, _) = viterbi(&t);
        assert_eq!(seg.word_lengths(), vec![1, 2, 2]);
        let (bf, _) = brute_force_best(&t).unwrap();
        assert_eq!(seg, bf);
    }

    #[test]
    fn viterbi_matches_enumeration_n7() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let t = random_table(&mut rng, 7, 3);
            assert_eq!(viterbi(&t), brute_force_best(&t).unwrap());
        }
    }

    #[test]
    fn brute_force_refuses_long_sentences() {
        let t = SegmentScoreTable::zeros(13, 3);
        assert!(matches!(brute_force_marginal(&t), Err(Error::TooLarge { n: 13, .. })));
        assert!(matches!(brute_force_best(&t), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn sgb_a_with_identical_directions_is_plain_viterbi() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fwd = random_table(&mut rng, 8, 3);
        let bwd = fwd.mirrored();
        assert_eq!(sgb_a(&fwd, &bwd).unwrap(), viterbi(&fwd).0);
        assert_eq!(sgb_c(&fwd, &bwd).unwrap(), viterbi(&fwd).0);
    }

    #[test]
    fn sgb_a_matches_enumeration_over_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let fwd = random_table(&mut rng, 6, 3);
            let bwd = random_table(&mut rng, 6, 3);
            let avg = averaged_table(&fwd, &bwd).unwrap();
            let (expected, _) = brute_force_best(&avg).unwrap();
            assert_eq!(sgb_a(&fwd, &bwd).unwrap(), expected);
        }
    }

    #[test]
    fn sgb_rejects_mismatched_tables() {
        let a = SegmentScoreTable::zeros(5, 3);
        let b = SegmentScoreTable::zeros(5, 2);
        assert!(matches!(sgb_a(&a, &b), Err(Error::Contract(_))));
        assert!(matches!(sgb_c(&a, &b), Err(Error::Contract(_))));
    }

    #[test]
    fn union_of_boundaries() {
        let a = Segmentation::new(7, vec![2, 5]).unwrap();
        let b = Segmentation::new(7, vec![3, 5]).unwrap();
        assert_eq!(a.union(&b).unwrap().boundaries(), &[2, 3, 5]);
    }

    #[test]
    fn posteriors_sum_to_expected_word_count_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = random_table(&mut rng, 6, 3);
        let (_, post) = segment_posteriors(&t);
        // every position is covered by exactly one word in every path
        for pos in 0..6 {
            let mut cover = 0.0;
            for s in 0..6 {
                for l in 1..=post.max_len(s) {
                    if s <= pos && pos < s + l {
                        cover += post.score(s, l);
                    }
                }
            }
            assert!((cover - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn render_inserts_spaces() {
        let units: Vec<String> = "我从小学唱歌".chars().map(String::from).collect();
        let seg = Segmentation::from_word_lengths(&[1, 2, 1, 2]).unwrap();
        assert_eq!(seg.render(&units), "我 从小 学 唱歌");
    }

    #[test]
    fn invalid_boundaries_rejected() {
        assert!(Segmentation::new(4, vec![2, 2]).is_err());
        assert!(Segmentation::new(4, vec![0]).is_err());
        assert!(Segmentation::new(4, vec![4]).is_err());
        assert!(Segmentation::from_word_lengths(&[1, 0]).is_err());
    }

    #[test]
    fn composition_counts() {
        assert_eq!(composition_count(4, 2), 5);
        assert_eq!(composition_count(5, 2), 8);
        assert_eq!(composition_count(3, 3), 4);
        assert_eq!(composition_count(1, 4), 1);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn table() -> impl Strategy<Value = SegmentScoreTable> {
            (1usize..=8, 1usize..=4).prop_flat_map(|(n, t)| {
                prop::collection::vec(-5.0f64..0.0, n * t).prop_map(move |v| {
                    SegmentScoreTable::from_fn(n, t, |s, l| v[s * t + l - 1])
                })
            })
        }

        proptest! {
            #[test]
            fn marginal_dominates_best(t in table()) {
                let z = forward_marginal(&t).log_marginal();
                let (_, best) = viterbi(&t);
                prop_assert!(z >= best - 1e-12);
            }

            #[test]
            fn mirror_is_an_involution(lengths in prop::collection::vec(1usize..5, 1..8)) {
                let seg = Segmentation::from_word_lengths(&lengths).unwrap();
                prop_assert_eq!(seg.mirrored().mirrored(), seg);
            }

            #[test]
            fn sgb_c_refines_both_directions(f in table()) {
                let b = SegmentScoreTable::from_fn(f.n(), f.t_max(), |s, l| f.score(s, l) * 0.7 - 0.1 * l as f64);
                let c = sgb_c(&f, &b).unwrap();
                let vf = viterbi(&f).0;
                let vb = viterbi(&b).0.mirrored();
                for x in vf.boundaries().iter().chain(vb.boundaries()) {
                    prop_assert!(c.boundaries().contains(x));
                }
                prop_assert!(c.word_count() >= vf.word_count().max(vb.word_count()));
            }
        }
    }
}
