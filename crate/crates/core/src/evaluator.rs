//! Word-level scoring against gold segmentations and boundary-ambiguity
//! error analysis.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::Segmentation;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold_words: usize,
    pub pred_words: usize,
    pub correct_words: usize,
}

impl EvalReport {
    fn from_counts(gold_words: usize, pred_words: usize, correct_words: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct_words, pred_words);
        let recall = ratio(correct_words, gold_words);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        EvalReport {
            precision,
            recall,
            f1,
            gold_words,
            pred_words,
            correct_words,
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "precision,recall,f1,gold_words,pred_words,correct_words\n{:.6},{:.6},{:.6},{},{},{}\n",
            self.precision, self.recall, self.f1, self.gold_words, self.pred_words, self.correct_words
        )
    }

    pub fn to_text(&self) -> String {
        format!(
            "P = {:.4}  R = {:.4}  F1 = {:.4}  (correct {} / pred {} / gold {})\n",
            self.precision, self.recall, self.f1, self.correct_words, self.pred_words, self.gold_words
        )
    }
}

fn check_aligned(gold: &[Segmentation], pred: &[Segmentation]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::Contract(format!(
            "gold has {} sentences but prediction has {}",
            gold.len(),
            pred.len()
        )));
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.n() != p.n() {
            return Err(Error::Contract(format!(
                "sentence {}: gold covers {} characters, prediction {}",
                i + 1,
                g.n(),
                p.n()
            )));
        }
    }
    Ok(())
}

fn matching_spans(g: &Segmentation, p: &Segmentation) -> usize {
    let gold: HashSet<(usize, usize)> = g.spans().collect();
    p.spans().filter(|s| gold.contains(s)).count()
}

/// A predicted word is correct when its span equals a gold word's span.
pub fn word_f1(gold: &[Segmentation], pred: &[Segmentation]) -> Result<EvalReport> {
    check_aligned(gold, pred)?;
    let (mut g_words, mut p_words, mut correct) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        g_words += g.word_count();
        p_words += p.word_count();
        correct += matching_spans(g, p);
    }
    Ok(EvalReport::from_counts(g_words, p_words, correct))
}

/// A whitespace-segmented line: its characters and their segmentation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentedLine {
    pub chars: Vec<char>,
    pub seg: Segmentation,
}

impl SegmentedLine {
    /// `None` for a blank line.
    pub fn parse(line: &str) -> Option<Self> {
        let words: Vec<&str> = line.split_whitespace().collect();
        if words.is_empty() {
            return None;
        }
        let lengths: Vec<usize> = words.iter().map(|w| w.chars().count()).collect();
        Some(SegmentedLine {
            chars: words.iter().flat_map(|w| w.chars()).collect(),
            seg: Segmentation::from_word_lengths(&lengths).expect("words are nonempty"),
        })
    }

    pub fn words(&self) -> impl Iterator<Item = String> + '_ {
        self.seg.spans().map(|(s, e)| self.chars[s..e].iter().collect())
    }

    fn text(&self, start: usize, end: usize) -> String {
        self.chars[start..end].iter().collect()
    }
}

/// Parses a whitespace-segmented file body, skipping blank lines.
pub fn parse_segmented(text: &str) -> Vec<SegmentedLine> {
    text.lines().filter_map(SegmentedLine::parse).collect()
}

/// Checks that gold and prediction segment the same text, then scores them.
pub fn evaluate_lines(gold: &[SegmentedLine], pred: &[SegmentedLine]) -> Result<EvalReport> {
    check_same_text(gold, pred)?;
    let g: Vec<Segmentation> = gold.iter().map(|l| l.seg.clone()).collect();
    let p: Vec<Segmentation> = pred.iter().map(|l| l.seg.clone()).collect();
    word_f1(&g, &p)
}

fn check_same_text(gold: &[SegmentedLine], pred: &[SegmentedLine]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::Contract(format!(
            "gold has {} sentences but prediction has {}",
            gold.len(),
            pred.len()
        )));
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.chars != p.chars {
            return Err(Error::Contract(format!(
                "sentence {}: gold and prediction contain different text",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Every distinct gold word.
pub fn lexicon_from(gold: &[SegmentedLine]) -> HashSet<String> {
    gold.iter().flat_map(|l| l.words()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AmbiguityKind {
    Combination,
    Overlap,
    /// An error matching neither pattern.
    Residual,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AmbiguityCase {
    /// 1-based line number among non-blank lines.
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub kind: AmbiguityKind,
    pub gold: String,
    pub pred: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AmbiguityReport {
    pub combination_errors: usize,
    pub overlap_errors: usize,
    pub residual_errors: usize,
    pub cases: Vec<AmbiguityCase>,
}

impl AmbiguityReport {
    fn push(&mut self, case: AmbiguityCase) {
        match case.kind {
            AmbiguityKind::Combination => self.combination_errors += 1,
            AmbiguityKind::Overlap => self.overlap_errors += 1,
            AmbiguityKind::Residual => self.residual_errors += 1,
        }
        self.cases.push(case);
    }

    pub fn to_csv(&self) -> String {
        format!(
            "combination_errors,overlap_errors,residual_errors\n{},{},{}\n",
            self.combination_errors, self.overlap_errors, self.residual_errors
        )
    }

    pub fn to_text(&self) -> String {
        format!(
            "combination errors: {}\noverlap errors:     {}\nunclassified:       {}\n",
            self.combination_errors, self.overlap_errors, self.residual_errors
        )
    }

    /// One JSON object per case.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for c in &self.cases {
            let _ = writeln!(out, "{}", serde_json::to_string(c).expect("plain struct"));
        }
        out
    }
}

/// Maximal disagreement regions between two segmentations of one sentence:
/// spans between consecutive shared boundaries where the words differ.
fn error_regions(gold: &Segmentation, pred: &Segmentation) -> Vec<(usize, usize)> {
    let n = gold.n();
    let g: HashSet<usize> = gold.boundaries().iter().copied().collect();
    let mut shared: Vec<usize> = vec![0];
    shared.extend(pred.boundaries().iter().copied().filter(|b| g.contains(b)));
    shared.push(n);
    let p: HashSet<usize> = pred.boundaries().iter().copied().collect();
    shared
        .windows(2)
        .map(|w| (w[0], w[1]))
        .filter(|&(a, b)| (a + 1..b).any(|x| g.contains(&x) || p.contains(&x)))
        .collect()
}

fn words_in(seg: &Segmentation, start: usize, end: usize) -> Vec<(usize, usize)> {
    seg.spans().filter(|&(s, e)| s >= start && e <= end).collect()
}

/// Classifies every disagreement region, left to right.
///
/// A region is a combination error when one side has a single word `xy`
/// and the other the two words `x`, `y`, with all three in the lexicon.
/// It is an overlap error when each side has two words, grouping `xyz` as
/// `xy z` versus `x yz`, with `xy` and `yz` in the lexicon. Everything else
/// is residual.
pub fn ambiguity_analysis(
    gold: &[SegmentedLine],
    pred: &[SegmentedLine],
    lexicon: &HashSet<String>,
) -> Result<AmbiguityReport> {
    check_same_text(gold, pred)?;
    let mut report = AmbiguityReport::default();
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        for (a, b) in error_regions(&g.seg, &p.seg) {
            let gw = words_in(&g.seg, a, b);
            let pw = words_in(&p.seg, a, b);
            let known = |s: usize, e: usize| lexicon.contains(&g.text(s, e));
            let kind = match (gw.len(), pw.len()) {
                (2, 2) => {
                    // the side whose first word is longer holds xy; the other holds yz
                    let (xy, yz) = if gw[0].1 > pw[0].1 { (gw[0], pw[1]) } else { (pw[0], gw[1]) };
                    if known(xy.0, xy.1) && known(yz.0, yz.1) {
                        AmbiguityKind::Overlap
                    } else {
                        AmbiguityKind::Residual
                    }
                }
                (1, 2) | (2, 1) => {
                    let pieces = if gw.len() == 2 { &gw } else { &pw };
                    if known(a, b) && pieces.iter().all(|&(s, e)| known(s, e)) {
                        AmbiguityKind::Combination
                    } else {
                        AmbiguityKind::Residual
                    }
                }
                _ => AmbiguityKind::Residual,
            };
            let render = |ws: &[(usize, usize)]| {
                ws.iter().map(|&(s, e)| g.text(s, e)).collect::<Vec<_>>().join(" ")
            };
            report.push(AmbiguityCase {
                sentence: i + 1,
                start: a,
                end: b,
                kind,
                gold: render(&gw),
                pred: render(&pw),
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(s: &str) -> SegmentedLine {
        SegmentedLine::parse(s).unwrap()
    }

    fn lex(words: &[&str]) -> HashSet<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn identical_is_perfect() {
        let g = [line("我 从小 学 唱歌")];
        let r = evaluate_lines(&g, &g).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn table_sentence_pair() {
        let r = evaluate_lines(&[line("我 从小 学 唱歌")], &[line("我 从 小学 唱歌")]).unwrap();
        assert_eq!(r.correct_words, 2);
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn unsegmented_prediction_scores_zero() {
        let r = evaluate_lines(&[line("我 从小 学 唱歌")], &[line("我从小学唱歌")]).unwrap();
        assert_eq!(r.correct_words, 0);
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn mismatched_inputs_rejected() {
        assert!(evaluate_lines(&[line("a b")], &[line("a b"), line("c")]).is_err());
        assert!(evaluate_lines(&[line("a b")], &[line("a c")]).is_err());
        let g = [Segmentation::whole(3)];
        let p = [Segmentation::whole(4)];
        assert!(matches!(word_f1(&g, &p), Err(Error::Contract(_))));
    }

    #[test]
    fn overlap_error_detected() {
        let g = [line("我 从 小学 毕业")];
        let p = [line("我 从小 学 毕业")];
        let r = ambiguity_analysis(&g, &p, &lex(&["从", "小学", "从小", "学"])).unwrap();
        assert_eq!((r.overlap_errors, r.combination_errors, r.residual_errors), (1, 0, 0));
        assert_eq!(r.cases[0].gold, "从 小学");
        assert_eq!(r.cases[0].pred, "从小 学");
    }

    #[test]
    fn combination_error_detected() {
        let g = [line("从小 学")];
        let p = [line("从 小 学")];
        let r = ambiguity_analysis(&g, &p, &lex(&["从", "小", "学", "从小"])).unwrap();
        assert_eq!((r.combination_errors, r.overlap_errors), (1, 0));
        // merging is the same pattern seen from the other side
        let r = ambiguity_analysis(&p, &g, &lex(&["从", "小", "学", "从小"])).unwrap();
        assert_eq!(r.combination_errors, 1);
    }

    #[test]
    fn unknown_pieces_are_residual() {
        let g = [line("从小 学")];
        let p = [line("从 小 学")];
        let r = ambiguity_analysis(&g, &p, &lex(&["从小", "学"])).unwrap();
        assert_eq!((r.combination_errors, r.overlap_errors, r.residual_errors), (0, 0, 1));
        assert_eq!(r.cases.len(), 1);
    }

    #[test]
    fn no_errors_when_equal() {
        let g = [line("我 从小 学 唱歌"), line("我 从 小学 毕业")];
        let r = ambiguity_analysis(&g, &g, &lexicon_from(&g)).unwrap();
        assert_eq!(r, AmbiguityReport::default());
    }

    #[test]
    fn jsonl_has_one_record_per_case() {
        let g = [line("从小 学 唱歌")];
        let p = [line("从 小 学唱歌")];
        let r = ambiguity_analysis(&g, &p, &lex(&["从", "小", "从小", "学", "唱歌", "学唱歌"])).unwrap();
        assert_eq!(r.cases.len(), 2);
        let out = r.to_jsonl();
        assert_eq!(out.lines().count(), 2);
        assert!(out.contains("\"kind\":\"combination\""));
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn seg_pair() -> impl Strategy<Value = (Segmentation, Segmentation)> {
            (1usize..12).prop_flat_map(|n| {
                let cuts = prop::collection::btree_set(1..n.max(2), 0..n);
                (cuts.clone(), cuts).prop_map(move |(a, b)| {
                    let a = a.into_iter().filter(|&x| x < n).collect();
                    let b = b.into_iter().filter(|&x| x < n).collect();
                    (Segmentation::new(n, a).unwrap(), Segmentation::new(n, b).unwrap())
                })
            })
        }

        proptest! {
            #[test]
            fn precision_recall_swap((g, p) in seg_pair()) {
                let a = word_f1(&[g.clone()], &[p.clone()]).unwrap();
                let b = word_f1(&[p.clone()], &[g.clone()]).unwrap();
                prop_assert_eq!(a.precision, b.recall);
                prop_assert!((0.0..=1.0).contains(&a.f1));
                prop_assert_eq!(a.f1 == 1.0, g == p);
                prop_assert!(a.correct_words <= a.gold_words.min(a.pred_words));
            }
        }
    }
}
