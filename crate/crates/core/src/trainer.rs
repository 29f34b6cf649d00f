//! Maximum-likelihood training of the bi-directional model.
//!
//! The per-sentence loss is `-1/2 (ln Z_fwd + ln Z_bwd)` where each `Z` is
//! the lattice marginal of one direction. Its gradient with respect to a
//! table cell is `-1/2` times that segment's posterior, which is then
//! pushed back through the LM and context LSTMs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{forward_marginal, segment_posteriors, SegmentScoreTable};
use crate::slm::{
    self, backprop_direction, checkpoint, score_bidi, Dims, Direction, ModelOptions, ModelParams,
};

/// Sentences per gradient work item. Fixed so the summation order does not
/// depend on the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub t_max: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global l2 clipping threshold; `None` disables clipping.
    pub clip: Option<f64>,
    /// Training sentences longer than this are cut into pieces.
    pub max_len: usize,
    pub init_range: f64,
    pub share_output: bool,
    pub zero_lm_cell: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            epochs: 10,
            batch_size: 16,
            t_max: 3,
            embed_dim: 300,
            hidden_dim: 300,
            seed: 1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: None,
            max_len: 80,
            init_range: slm::INIT_RANGE,
            share_output: false,
            zero_lm_cell: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr >= 0.0 && self.lr.is_finite()),
            ("epochs", self.epochs >= 1),
            ("batch_size", self.batch_size >= 1),
            ("t_max", self.t_max >= 1),
            ("embed_dim", self.embed_dim >= 1),
            ("hidden_dim", self.hidden_dim >= 1),
            ("beta1", (0.0..1.0).contains(&self.beta1)),
            ("beta2", (0.0..1.0).contains(&self.beta2)),
            ("eps", self.eps > 0.0),
            ("max_len", self.max_len >= 1),
            ("init_range", self.init_range > 0.0),
            ("clip", self.clip.is_none_or(|c| c > 0.0)),
        ];
        match positive.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(Error::Config(format!("{name} is out of range"))),
            None => Ok(()),
        }
    }

    pub fn options(&self) -> ModelOptions {
        ModelOptions {
            share_output: self.share_output,
            zero_lm_cell: self.zero_lm_cell,
        }
    }

    /// Sets one field from its textual `key = value` form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
        }
        let v = value.trim();
        match key.trim() {
            "lr" => self.lr = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "t_max" => self.t_max = num(key, v)?,
            "embed_dim" => self.embed_dim = num(key, v)?,
            "hidden_dim" => self.hidden_dim = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "beta1" => self.beta1 = num(key, v)?,
            "beta2" => self.beta2 = num(key, v)?,
            "eps" => self.eps = num(key, v)?,
            "clip" => {
                self.clip = match v {
                    "none" | "off" | "" => None,
                    _ => Some(num(key, v)?),
                }
            }
            "max_len" => self.max_len = num(key, v)?,
            "init_range" => self.init_range = num(key, v)?,
            "share_output" => self.share_output = num(key, v)?,
            "zero_lm_cell" => self.zero_lm_cell = num(key, v)?,
            other => return Err(Error::Config(format!("unknown training key {other:?}"))),
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> BTreeMap<&'static str, String> {
        BTreeMap::from([
            ("lr", self.lr.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("t_max", self.t_max.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("seed", self.seed.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("eps", self.eps.to_string()),
            ("clip", self.clip.map_or("none".into(), |c| c.to_string())),
            ("max_len", self.max_len.to_string()),
            ("init_range", self.init_range.to_string()),
            ("share_output", self.share_output.to_string()),
            ("zero_lm_cell", self.zero_lm_cell.to_string()),
        ])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStat {
    pub epoch: usize,
    pub mean_loss: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStat>,
    pub wall_seconds: f64,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss,seconds\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{},{:.3}", e.epoch, e.mean_loss, e.seconds);
        }
        out
    }
}

/// `-1/2 (ln Z_fwd + ln Z_bwd)` for one sentence.
pub fn sentence_loss(params: &ModelParams, ids: &[usize], t_max: usize) -> f64 {
    let (fwd, bwd) = score_bidi(params, ids, t_max);
    -0.5 * (forward_marginal(&fwd).log_marginal() + forward_marginal(&bwd).log_marginal())
}

/// Loss of one sentence; its gradient is added into `grads`.
pub fn sentence_loss_and_grad(
    params: &ModelParams,
    ids: &[usize],
    t_max: usize,
    grads: &mut ModelParams,
) -> f64 {
    let mut loss = 0.0;
    for dir in [Direction::Forward, Direction::Backward] {
        let (table, trace) = slm::score_for_training(params, ids, dir, t_max);
        let (log_z, post) = segment_posteriors(&table);
        loss -= 0.5 * log_z;
        let dscores = SegmentScoreTable::from_fn(table.n(), t_max, |s, l| -0.5 * post.score(s, l));
        backprop_direction(params, &trace, &dscores, grads);
    }
    loss
}

/// Mean loss over the batch and its exact gradient.
pub fn gradient<S: AsRef<[usize]> + Sync>(
    params: &ModelParams,
    batch: &[S],
    t_max: usize,
) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::Contract("gradient of an empty batch".into()));
    }
    let parts: Vec<Result<(f64, ModelParams)>> = batch
        .par_chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut g = params.zeros_like();
            let mut total = 0.0;
            for (k, s) in chunk.iter().enumerate() {
                let loss = sentence_loss_and_grad(params, s.as_ref(), t_max, &mut g);
                if !loss.is_finite() {
                    return Err(Error::NonFinite {
                        index: c * GRAD_CHUNK + k,
                    });
                }
                total += loss;
            }
            Ok((total, g))
        })
        .collect();
    let mut grad = params.zeros_like();
    let mut total = 0.0;
    for part in parts {
        let (l, g) = part?;
        total += l;
        grad.add_scaled(&g, 1.0);
    }
    let scale = 1.0 / batch.len() as f64;
    for t in grad.tensors_mut() {
        for v in t.iter_mut() {
            *v *= scale;
        }
    }
    Ok((total * scale, grad))
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: ModelParams,
    v: ModelParams,
}

impl Adam {
    pub fn new(params: &ModelParams, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn update(&mut self, params: &mut ModelParams, grad: &ModelParams) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Cuts sentences longer than `max_len` into consecutive pieces.
pub fn split_long<S: AsRef<[usize]>>(corpus: &[S], max_len: usize) -> Vec<Vec<usize>> {
    corpus
        .iter()
        .flat_map(|s| s.as_ref().chunks(max_len).map(<[usize]>::to_vec).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Shuffled minibatches of sentences of similar length.
fn make_batches(lengths: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| lengths[i]);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    batches.shuffle(rng);
    batches
}

/// Trains from a seeded initialization. `on_epoch` runs after every
/// completed epoch; an error from it aborts training.
pub fn train_with<S, F>(
    corpus: &[S],
    vocab_size: usize,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<(ModelParams, TrainReport)>
where
    S: AsRef<[usize]>,
    F: FnMut(&EpochStat, &ModelParams) -> Result<()>,
{
    config.validate()?;
    let data = split_long(corpus, config.max_len);
    if data.is_empty() {
        return Err(Error::Contract("training corpus is empty".into()));
    }
    if let Some(bad) = data.iter().flatten().find(|&&id| id + 1 >= vocab_size) {
        return Err(Error::Contract(format!(
            "symbol id {bad} is EOS or outside the vocabulary of size {vocab_size}"
        )));
    }
    let dims = Dims {
        vocab: vocab_size,
        embed: config.embed_dim,
        hidden: config.hidden_dim,
    };
    let mut params = ModelParams::init(dims, config.options(), config.seed, config.init_range);
    let mut adam = Adam::new(&params, config.lr, config.beta1, config.beta2, config.eps);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let lengths: Vec<usize> = data.iter().map(Vec::len).collect();
    let mut report = TrainReport::default();
    let started = Instant::now();

    for epoch in 1..=config.epochs {
        let epoch_start = Instant::now();
        let last_good = params.clone();
        let mut total = 0.0;
        let mut diverged = false;
        for batch_ids in make_batches(&lengths, config.batch_size, &mut rng) {
            let batch: Vec<&[usize]> = batch_ids.iter().map(|&i| data[i].as_slice()).collect();
            let (loss, mut grad) = match gradient(&params, &batch, config.t_max) {
                Ok(r) => r,
                Err(Error::NonFinite { .. }) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            total += loss * batch.len() as f64;
            if let Some(limit) = config.clip {
                let norm = grad.l2_norm();
                if norm > limit {
                    for t in grad.tensors_mut() {
                        for v in t.iter_mut() {
                            *v *= limit / norm;
                        }
                    }
                }
            }
            adam.update(&mut params, &grad);
        }
        if diverged || !total.is_finite() || !params.all_finite() {
            return Err(Error::Diverged {
                epoch,
                last_good: Box::new(last_good),
            });
        }
        let stat = EpochStat {
            epoch,
            mean_loss: total / data.len() as f64,
            seconds: epoch_start.elapsed().as_secs_f64(),
        };
        report.epochs.push(stat);
        on_epoch(&stat, &params)?;
    }
    report.wall_seconds = started.elapsed().as_secs_f64();
    Ok((params, report))
}

/// Trains and, when `checkpoint_path` is given, rewrites the checkpoint
/// after every epoch.
pub fn train<S: AsRef<[usize]>>(
    corpus: &[S],
    vocab_size: usize,
    config: &TrainConfig,
    checkpoint_path: Option<&Path>,
) -> Result<(ModelParams, TrainReport)> {
    train_with(corpus, vocab_size, config, |_, params| match checkpoint_path {
        Some(p) => checkpoint::save(params, p),
        None => Ok(()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64, range: f64) -> ModelParams {
        ModelParams::init(
            Dims { vocab: 8, embed: 4, hidden: 4 },
            ModelOptions::default(),
            seed,
            range,
        )
    }

    #[test]
    fn uniform_two_char_loss() {
        let p = ModelParams::zeros(Dims { vocab: 3, embed: 2, hidden: 2 }, ModelOptions::default());
        let loss = sentence_loss(&p, &[0, 1], 2);
        assert!((loss + (4.0f64 / 81.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn single_char_loss() {
        let p = tiny(3, 0.3);
        let (f, b) = score_bidi(&p, &[2], 3);
        let expected = -0.5 * (f.score(0, 1) + b.score(0, 1));
        assert!((sentence_loss(&p, &[2], 3) - expected).abs() < 1e-12);
    }

    #[test]
    fn mirror_swap_symmetry() {
        let p = tiny(4, 0.3);
        let mut q = p.clone();
        std::mem::swap(&mut q.ctx_fwd, &mut q.ctx_bwd);
        std::mem::swap(&mut q.lm_fwd, &mut q.lm_bwd);
        std::mem::swap(&mut q.out_fwd, &mut q.out_bwd);
        std::mem::swap(&mut q.bias_fwd, &mut q.bias_bwd);
        let ids = [0, 3, 5, 1, 2];
        let rev: Vec<usize> = ids.iter().rev().copied().collect();
        assert!((sentence_loss(&p, &ids, 3) - sentence_loss(&q, &rev, 3)).abs() < 1e-12);
    }

    #[test]
    fn loss_and_grad_agrees_with_loss() {
        let p = tiny(5, 0.3);
        let ids = [1, 4, 4, 0, 6, 2];
        let mut g = p.zeros_like();
        let a = sentence_loss_and_grad(&p, &ids, 3, &mut g);
        assert!((a - sentence_loss(&p, &ids, 3)).abs() < 1e-12);
    }

    #[test]
    fn finite_differences_sample() {
        let mut p = tiny(6, 0.5);
        let ids = [0, 3, 1, 6, 2];
        let mut g = p.zeros_like();
        sentence_loss_and_grad(&p, &ids, 3, &mut g);
        let grads: Vec<f64> = g.tensors().iter().flat_map(|t| t.iter().copied()).collect();
        let eps = 1e-4;
        // every 7th coordinate keeps this unit test fast; the acceptance
        // suite checks all of them
        for idx in (0..grads.len()).step_by(7) {
            let orig = get(&p, idx);
            set(&mut p, idx, orig + eps);
            let up = sentence_loss(&p, &ids, 3);
            set(&mut p, idx, orig - eps);
            let down = sentence_loss(&p, &ids, 3);
            set(&mut p, idx, orig);
            let fd = (up - down) / (2.0 * eps);
            let err = (fd - grads[idx]).abs() / fd.abs().max(grads[idx].abs()).max(1e-6);
            assert!(err < 1e-4, "coord {idx}: analytic {} fd {fd}", grads[idx]);
        }
    }

    fn get(p: &ModelParams, mut idx: usize) -> f64 {
        for t in p.tensors() {
            if idx < t.len() {
                return t[idx];
            }
            idx -= t.len();
        }
        unreachable!()
    }

    fn set(p: &mut ModelParams, mut idx: usize, v: f64) {
        for t in p.tensors_mut() {
            if idx < t.len() {
                t[idx] = v;
                return;
            }
            idx -= t.len();
        }
    }

    #[test]
    fn batch_gradient_is_mean_of_singles() {
        let p = tiny(7, 0.3);
        let a = vec![0, 1, 2, 3];
        let b = vec![4, 5, 6];
        let (_, ga) = gradient(&p, &[a.clone()], 3).unwrap();
        let (_, gb) = gradient(&p, &[b.clone()], 3).unwrap();
        let (_, gab) = gradient(&p, &[a, b], 3).unwrap();
        for ((x, y), z) in ga.tensors().iter().zip(gb.tensors()).zip(gab.tensors()) {
            for i in 0..x.len() {
                assert!((0.5 * (x[i] + y[i]) - z[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_batch_rejected() {
        let p = tiny(1, 0.1);
        let empty: Vec<Vec<usize>> = Vec::new();
        assert!(gradient(&p, &empty, 3).is_err());
    }

    fn toy_config() -> TrainConfig {
        TrainConfig {
            embed_dim: 8,
            hidden_dim: 8,
            batch_size: 2,
            epochs: 3,
            lr: 0.01,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        let cfg = TrainConfig { lr: 0.0, ..toy_config() };
        let corpus = vec![vec![0, 1, 0, 1]; 3];
        let (p, _) = train(&corpus, 3, &cfg, None).unwrap();
        let init = ModelParams::init(
            Dims { vocab: 3, embed: 8, hidden: 8 },
            cfg.options(),
            cfg.seed,
            cfg.init_range,
        );
        assert_eq!(p, init);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let corpus = vec![vec![0, 1, 2], vec![2, 1], vec![0, 0, 1, 2, 1]];
        let (a, ra) = train(&corpus, 4, &toy_config(), None).unwrap();
        let (b, rb) = train(&corpus, 4, &toy_config(), None).unwrap();
        assert_eq!(checkpoint::encode(&a), checkpoint::encode(&b));
        let la: Vec<f64> = ra.epochs.iter().map(|e| e.mean_loss).collect();
        let lb: Vec<f64> = rb.epochs.iter().map(|e| e.mean_loss).collect();
        assert_eq!(la, lb);
    }

    #[test]
    fn long_sentences_are_split() {
        let s = split_long(&[vec![1; 10]], 4);
        assert_eq!(s.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
    }

    #[test]
    fn rejects_eos_in_corpus() {
        let corpus = vec![vec![0, 2]];
        assert!(matches!(train(&corpus, 3, &toy_config(), None), Err(Error::Contract(_))));
    }

    #[test]
    fn config_roundtrip_through_pairs() {
        let mut cfg = TrainConfig::default();
        cfg.set("lr", "0.05").unwrap();
        cfg.set("clip", "5").unwrap();
        cfg.set("share_output", "true").unwrap();
        let mut back = TrainConfig::default();
        for (k, v) in cfg.to_pairs() {
            back.set(k, &v).unwrap();
        }
        assert_eq!(back, cfg);
        assert!(cfg.set("nope", "1").is_err());
        assert!(cfg.set("epochs", "x").is_err());
    }
}
