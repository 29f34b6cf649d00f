//! Trains on a planted-lexicon corpus and reports word F1 per decoder after
//! every epoch, next to the F1 of the generating unigram model itself.
//!
//! cargo run --release --example planted -- [epochs] [lr] [batch] [seed]
//!
//! Environment overrides: INIT (init range), ZERO_CELL (0/1), SHARE (0/1),
//! CLIP, LEXSEED, ZIPF, MINW, MAXW.

use std::collections::HashMap;
use std::time::Instant;

use sgbseg::corpus::{build_vocab, sentences_from_text, Preprocess};
use sgbseg::evaluator::{word_f1, SegmentedLine};
use sgbseg::lattice::{viterbi, Decoder, SegmentScoreTable, Segmentation};
use sgbseg::slm::score_bidi;
use sgbseg::synthetic::{SyntheticLanguage, SyntheticSpec};
use sgbseg::trainer::{train_with, TrainConfig};

fn env<T: std::str::FromStr>(key: &str, default: T) -> T {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let config = TrainConfig {
        epochs: arg(0, "10").parse().unwrap(),
        lr: arg(1, "0.01").parse().unwrap(),
        batch_size: arg(2, "16").parse().unwrap(),
        seed: arg(3, "1").parse().unwrap(),
        t_max: 3,
        embed_dim: 32,
        hidden_dim: 32,
        init_range: env("INIT", 0.3),
        zero_lm_cell: env("ZERO_CELL", 1) == 1,
        share_output: env("SHARE", 0) == 1,
        clip: std::env::var("CLIP").ok().and_then(|v| v.parse().ok()),
        ..TrainConfig::default()
    };
    let spec = SyntheticSpec {
        min_words: env("MINW", 3),
        max_words: env("MAXW", 8),
        zipf: env("ZIPF", 1.0),
        seed: env("LEXSEED", 7),
        ..SyntheticSpec::default()
    };
    let zipf = spec.zipf;
    let mut lang = SyntheticLanguage::new(spec);
    let train_gold = lang.sentences(2000);
    let test_gold = lang.sentences(200);
    let join = |s: &[Vec<String>]| s.iter().map(|w| w.concat()).collect::<Vec<_>>().join("\n");
    let pre = Preprocess::default();
    let train_raw = sentences_from_text(&join(&train_gold), &pre);
    let vocab = build_vocab(&train_raw, true);
    let train_ids: Vec<Vec<usize>> = train_raw.iter().map(|s| vocab.encode(s).unwrap().ids).collect();
    let test_raw = sentences_from_text(&join(&test_gold), &pre);
    let test_ids: Vec<Vec<usize>> = test_raw.iter().map(|s| vocab.encode(s).unwrap().ids).collect();
    let gold: Vec<Segmentation> = test_gold
        .iter()
        .map(|w| SegmentedLine::parse(&w.join(" ")).unwrap().seg)
        .collect();

    let norm: f64 = (1..=lang.lexicon.len()).map(|r| (r as f64).powf(-zipf)).sum();
    let logp: HashMap<&str, f64> = lang
        .lexicon
        .iter()
        .enumerate()
        .map(|(r, w)| (w.as_str(), ((r + 1) as f64).powf(-zipf).ln() - norm.ln()))
        .collect();
    let oracle: Vec<Segmentation> = test_gold
        .iter()
        .map(|ws| {
            let chars: Vec<char> = ws.concat().chars().collect();
            let table = SegmentScoreTable::from_fn(chars.len(), 3, |s, l| {
                let w: String = chars[s..s + l].iter().collect();
                logp.get(w.as_str()).copied().unwrap_or(-1e9)
            });
            viterbi(&table).0
        })
        .collect();
    println!("generating model F1 {:.3}", word_f1(&gold, &oracle).unwrap().f1);

    let t0 = Instant::now();
    train_with(&train_ids, vocab.len(), &config, |stat, params| {
        let mut line = format!("epoch {:2} loss {:.4} ({:.1}s)", stat.epoch, stat.mean_loss, stat.seconds);
        for d in [Decoder::SgbA, Decoder::SgbC, Decoder::Forward, Decoder::Backward] {
            let pred: Vec<Segmentation> = test_ids
                .iter()
                .map(|ids| {
                    let (f, b) = score_bidi(params, ids, 3);
                    d.decode(&f, &b).unwrap()
                })
                .collect();
            let r = word_f1(&gold, &pred).unwrap();
            line += &format!("  {d} F1 {:.3} (P {:.3} R {:.3})", r.f1, r.precision, r.recall);
        }
        println!("{line}");
        Ok(())
    })
    .unwrap();
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
