//! Bi-directional segmental language model.
//!
//! Four LSTMs share one character embedding table: a context LSTM and a
//! language-model (LM) LSTM per direction. The context LSTM runs once over
//! the sentence; its state at each offset seeds an LM run that emits the
//! characters of every candidate segment starting there, followed by the
//! end-of-segment symbol. All prefixes of the longest candidate share one LM
//! run, so a direction costs at most `n` context steps and `n * (T + 1)` LM
//! steps.
//!
//! The EOS symbol is always the last vocabulary row. It doubles as the
//! begin-of-segment input of every LM run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lattice::SegmentScoreTable;

pub mod checkpoint;

/// Default half-width of the uniform initialization range.
pub const INIT_RANGE: f64 = 0.08;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    /// Vocabulary size, EOS included.
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ModelOptions {
    /// Both directions use the forward output projection and bias.
    pub share_output: bool,
    /// LM runs start from the context hidden vector with a zero cell
    /// instead of copying the context cell.
    pub zero_lm_cell: bool,
}

/// One LSTM layer. Gate blocks are laid out `[input, forget, output, cell]`,
/// each `hidden` wide. Weight matrices are row-major: `w_ih` is
/// `input x 4*hidden`, `w_hh` is `hidden x 4*hidden`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub input: usize,
    pub hidden: usize,
    pub w_ih: Vec<f64>,
    pub w_hh: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            input,
            hidden,
            w_ih: vec![0.0; input * 4 * hidden],
            w_hh: vec![0.0; hidden * 4 * hidden],
            bias: vec![0.0; 4 * hidden],
        }
    }

    fn pre_activations(&self, h_prev: &[f64], x: &[f64]) -> Vec<f64> {
        let width = 4 * self.hidden;
        let mut a = self.bias.clone();
        accumulate_row_major(&mut a, x, &self.w_ih, width);
        accumulate_row_major(&mut a, h_prev, &self.w_hh, width);
        a
    }
}

/// `out += v * M` for a row-major `len(v) x width` matrix.
#[inline]
fn accumulate_row_major(out: &mut [f64], v: &[f64], m: &[f64], width: usize) {
    for (k, &vk) in v.iter().enumerate() {
        if vk == 0.0 {
            continue;
        }
        let row = &m[k * width..(k + 1) * width];
        for (o, &w) in out.iter_mut().zip(row) {
            *o += vk * w;
        }
    }
}

/// `out += M * d` for a row-major `len(out) x len(d)` matrix.
#[inline]
fn accumulate_transposed(out: &mut [f64], m: &[f64], d: &[f64]) {
    let width = d.len();
    for (k, o) in out.iter_mut().enumerate() {
        let row = &m[k * width..(k + 1) * width];
        *o += row.iter().zip(d).map(|(w, x)| w * x).sum::<f64>();
    }
}

/// `G += v (outer) d`.
#[inline]
fn accumulate_outer(g: &mut [f64], v: &[f64], d: &[f64]) {
    let width = d.len();
    for (k, &vk) in v.iter().enumerate() {
        if vk == 0.0 {
            continue;
        }
        let row = &mut g[k * width..(k + 1) * width];
        for (gr, &x) in row.iter_mut().zip(d) {
            *gr += vk * x;
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl HiddenState {
    pub fn zeros(hidden: usize) -> Self {
        HiddenState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// One LSTM step.
pub fn lstm_step(params: &LstmParams, state: &HiddenState, input: &[f64]) -> HiddenState {
    let cache = StepCache::forward(params, &state.h, &state.c, input);
    HiddenState {
        h: cache.h,
        c: cache.c,
    }
}

/// Everything a step needs for its backward pass.
#[derive(Clone, Debug)]
struct StepCache {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates `[i, f, o, g]`.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

impl StepCache {
    fn forward(params: &LstmParams, h_prev: &[f64], c_prev: &[f64], x: &[f64]) -> Self {
        let hd = params.hidden;
        let mut gates = params.pre_activations(h_prev, x);
        for v in &mut gates[..3 * hd] {
            *v = sigmoid(*v);
        }
        for v in &mut gates[3 * hd..] {
            *v = v.tanh();
        }
        let mut c = vec![0.0; hd];
        let mut tanh_c = vec![0.0; hd];
        let mut h = vec![0.0; hd];
        for u in 0..hd {
            let (i, f, o, g) = (gates[u], gates[hd + u], gates[2 * hd + u], gates[3 * hd + u]);
            c[u] = f * c_prev[u] + i * g;
            tanh_c[u] = c[u].tanh();
            h[u] = o * tanh_c[u];
        }
        StepCache {
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            gates,
            c,
            tanh_c,
            h,
        }
    }

    /// Backpropagates `(dh, dc)` through the step. Returns the gradients for
    /// `(h_prev, c_prev)` and adds the input gradient into `dx`.
    fn backward(
        &self,
        params: &LstmParams,
        grads: &mut LstmParams,
        x: &[f64],
        dh: &[f64],
        dc: &[f64],
        dx: &mut [f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let hd = params.hidden;
        let mut da = vec![0.0; 4 * hd];
        let mut dc_prev = vec![0.0; hd];
        for u in 0..hd {
            let (i, f, o, g) = (
                self.gates[u],
                self.gates[hd + u],
                self.gates[2 * hd + u],
                self.gates[3 * hd + u],
            );
            let tc = self.tanh_c[u];
            let dct = dc[u] + dh[u] * o * (1.0 - tc * tc);
            da[u] = dct * g * i * (1.0 - i);
            da[hd + u] = dct * self.c_prev[u] * f * (1.0 - f);
            da[2 * hd + u] = dh[u] * tc * o * (1.0 - o);
            da[3 * hd + u] = dct * i * (1.0 - g * g);
            dc_prev[u] = dct * f;
        }
        accumulate_outer(&mut grads.w_ih, x, &da);
        accumulate_outer(&mut grads.w_hh, &self.h_prev, &da);
        for (b, d) in grads.bias.iter_mut().zip(&da) {
            *b += d;
        }
        accumulate_transposed(dx, &params.w_ih, &da);
        let mut dh_prev = vec![0.0; hd];
        accumulate_transposed(&mut dh_prev, &params.w_hh, &da);
        (dh_prev, dc_prev)
    }
}

/// All trainable parameters (`theta`).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: Dims,
    pub options: ModelOptions,
    /// `vocab x embed`, row-major.
    pub embed: Vec<f64>,
    pub ctx_fwd: LstmParams,
    pub ctx_bwd: LstmParams,
    pub lm_fwd: LstmParams,
    pub lm_bwd: LstmParams,
    /// `hidden x vocab`, row-major.
    pub out_fwd: Vec<f64>,
    /// Empty when `options.share_output`.
    pub out_bwd: Vec<f64>,
    pub bias_fwd: Vec<f64>,
    /// Empty when `options.share_output`.
    pub bias_bwd: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(dims: Dims, options: ModelOptions) -> Self {
        assert!(dims.vocab >= 2, "vocabulary needs EOS and at least one character");
        let Dims { vocab, embed, hidden } = dims;
        let own = if options.share_output { 0 } else { 1 };
        ModelParams {
            dims,
            options,
            embed: vec![0.0; vocab * embed],
            ctx_fwd: LstmParams::zeros(embed, hidden),
            ctx_bwd: LstmParams::zeros(embed, hidden),
            lm_fwd: LstmParams::zeros(embed, hidden),
            lm_bwd: LstmParams::zeros(embed, hidden),
            out_fwd: vec![0.0; hidden * vocab],
            out_bwd: vec![0.0; own * hidden * vocab],
            bias_fwd: vec![0.0; vocab],
            bias_bwd: vec![0.0; own * vocab],
        }
    }

    /// Uniform initialization in `[-range, range]`.
    pub fn init(dims: Dims, options: ModelOptions, seed: u64, range: f64) -> Self {
        let mut p = Self::zeros(dims, options);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in p.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.gen_range(-range..=range);
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims, self.options)
    }

    pub fn eos_id(&self) -> usize {
        self.dims.vocab - 1
    }

    /// Every parameter array in checkpoint order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.embed];
        for l in [&self.ctx_fwd, &self.ctx_bwd, &self.lm_fwd, &self.lm_bwd] {
            out.extend([&l.w_ih[..], &l.w_hh[..], &l.bias[..]]);
        }
        out.extend([&self.out_fwd[..], &self.out_bwd[..], &self.bias_fwd[..], &self.bias_bwd[..]]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.embed];
        for l in [&mut self.ctx_fwd, &mut self.ctx_bwd, &mut self.lm_fwd, &mut self.lm_bwd] {
            out.push(&mut l.w_ih);
            out.push(&mut l.w_hh);
            out.push(&mut l.bias);
        }
        out.push(&mut self.out_fwd);
        out.push(&mut self.out_bwd);
        out.push(&mut self.bias_fwd);
        out.push(&mut self.bias_bwd);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn embedding(&self, id: usize) -> &[f64] {
        let e = self.dims.embed;
        &self.embed[id * e..(id + 1) * e]
    }

    fn context(&self, dir: Direction) -> &LstmParams {
        match dir {
            Direction::Forward => &self.ctx_fwd,
            Direction::Backward => &self.ctx_bwd,
        }
    }

    fn lm(&self, dir: Direction) -> &LstmParams {
        match dir {
            Direction::Forward => &self.lm_fwd,
            Direction::Backward => &self.lm_bwd,
        }
    }

    fn output(&self, dir: Direction) -> (&[f64], &[f64]) {
        match dir {
            Direction::Backward if !self.options.share_output => (&self.out_bwd, &self.bias_bwd),
            _ => (&self.out_fwd, &self.bias_fwd),
        }
    }

    fn context_mut(&mut self, dir: Direction) -> &mut LstmParams {
        match dir {
            Direction::Forward => &mut self.ctx_fwd,
            Direction::Backward => &mut self.ctx_bwd,
        }
    }

    fn lm_mut(&mut self, dir: Direction) -> &mut LstmParams {
        match dir {
            Direction::Forward => &mut self.lm_fwd,
            Direction::Backward => &mut self.lm_bwd,
        }
    }

    /// Distribution over the next symbol given an LM hidden vector.
    pub fn log_softmax(&self, dir: Direction, h: &[f64]) -> Vec<f64> {
        let (w, b) = self.output(dir);
        let mut z = b.to_vec();
        accumulate_row_major(&mut z, h, w, self.dims.vocab);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in &mut z {
            *v -= lse;
        }
        z
    }
}

/// Symbol ids in the order a direction consumes them.
fn oriented(ids: &[usize], dir: Direction) -> Vec<usize> {
    match dir {
        Direction::Forward => ids.to_vec(),
        Direction::Backward => ids.iter().rev().copied().collect(),
    }
}

/// Context states `0..=n` of a direction; state `t` has read exactly the
/// first `t` characters (of the reversed sentence for `Backward`).
pub fn encode_context(params: &ModelParams, ids: &[usize], dir: Direction) -> Vec<HiddenState> {
    let seq = oriented(ids, dir);
    let lstm = params.context(dir);
    let mut states = Vec::with_capacity(seq.len() + 1);
    states.push(HiddenState::zeros(params.dims.hidden));
    for &id in &seq {
        let next = lstm_step(lstm, states.last().unwrap(), params.embedding(id));
        states.push(next);
    }
    states
}

/// Step counts of one scoring pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScoreStats {
    pub context_steps: usize,
    pub lm_steps: usize,
}

#[derive(Debug)]
struct StartTrace {
    steps: Vec<StepCache>,
    /// Softmax probabilities after each LM step.
    probs: Vec<Vec<f64>>,
}

/// Forward-pass record of one direction, enough to backpropagate.
#[derive(Debug)]
pub(crate) struct DirectionTrace {
    dir: Direction,
    seq: Vec<usize>,
    context: Vec<StepCache>,
    starts: Vec<StartTrace>,
}

fn score_traced(
    params: &ModelParams,
    ids: &[usize],
    dir: Direction,
    t_max: usize,
    keep: bool,
) -> (SegmentScoreTable, ScoreStats, Option<DirectionTrace>) {
    assert!(!ids.is_empty(), "cannot score an empty sentence");
    let hd = params.dims.hidden;
    let eos = params.eos_id();
    let seq = oriented(ids, dir);
    let n = seq.len();
    let mut stats = ScoreStats::default();

    let ctx_lstm = params.context(dir);
    let mut context: Vec<StepCache> = Vec::with_capacity(n);
    let zero = vec![0.0; hd];
    for &id in &seq {
        let (h, c) = match context.last() {
            Some(prev) => (&prev.h[..], &prev.c[..]),
            None => (&zero[..], &zero[..]),
        };
        context.push(StepCache::forward(ctx_lstm, h, c, params.embedding(id)));
        stats.context_steps += 1;
    }

    let lm = params.lm(dir);
    let mut table = SegmentScoreTable::zeros(n, t_max);
    let mut starts = Vec::with_capacity(if keep { n } else { 0 });
    for s in 0..n {
        let max_len = table.max_len(s);
        let (h0, c0) = if s == 0 {
            (&zero[..], &zero[..])
        } else {
            let st = &context[s - 1];
            let c = if params.options.zero_lm_cell { &zero[..] } else { &st.c[..] };
            (&st.h[..], c)
        };
        let mut steps: Vec<StepCache> = Vec::with_capacity(max_len + 1);
        let mut probs = Vec::with_capacity(max_len + 1);
        let mut acc = 0.0;
        for i in 1..=max_len + 1 {
            let input = if i == 1 { eos } else { seq[s + i - 2] };
            let step = match steps.last() {
                Some(prev) => StepCache::forward(lm, &prev.h, &prev.c, params.embedding(input)),
                None => StepCache::forward(lm, h0, c0, params.embedding(input)),
            };
            stats.lm_steps += 1;
            let logp = params.log_softmax(dir, &step.h);
            if i >= 2 {
                table.set(s, i - 1, acc + logp[eos]);
            }
            if i <= max_len {
                acc += logp[seq[s + i - 1]];
            }
            if keep {
                probs.push(logp.iter().map(|v| v.exp()).collect());
            }
            steps.push(step);
        }
        if keep {
            starts.push(StartTrace { steps, probs });
        }
    }
    let trace = keep.then_some(DirectionTrace {
        dir,
        seq,
        context,
        starts,
    });
    (table, stats, trace)
}

/// Log-probability of every candidate segment in one direction.
///
/// For `Backward` the sentence is reversed first, so the table is indexed on
/// the reversed sentence.
pub fn score_segments(
    params: &ModelParams,
    ids: &[usize],
    dir: Direction,
    t_max: usize,
) -> SegmentScoreTable {
    score_traced(params, ids, dir, t_max, false).0
}

/// [`score_segments`] plus the number of LSTM steps it took.
pub fn score_segments_with_stats(
    params: &ModelParams,
    ids: &[usize],
    dir: Direction,
    t_max: usize,
) -> (SegmentScoreTable, ScoreStats) {
    let (t, s, _) = score_traced(params, ids, dir, t_max, false);
    (t, s)
}

/// Forward table and backward (reversed-sentence) table.
pub fn score_bidi(
    params: &ModelParams,
    ids: &[usize],
    t_max: usize,
) -> (SegmentScoreTable, SegmentScoreTable) {
    (
        score_segments(params, ids, Direction::Forward, t_max),
        score_segments(params, ids, Direction::Backward, t_max),
    )
}

pub(crate) fn score_for_training(
    params: &ModelParams,
    ids: &[usize],
    dir: Direction,
    t_max: usize,
) -> (SegmentScoreTable, DirectionTrace) {
    let (t, _, trace) = score_traced(params, ids, dir, t_max, true);
    (t, trace.expect("trace requested"))
}

/// Accumulates into `grads` the gradient of a loss whose derivative with
/// respect to each table cell is `dscores`.
pub(crate) fn backprop_direction(
    params: &ModelParams,
    trace: &DirectionTrace,
    dscores: &SegmentScoreTable,
    grads: &mut ModelParams,
) {
    let dir = trace.dir;
    let Dims { vocab, embed, hidden } = params.dims;
    let eos = params.eos_id();
    let seq = &trace.seq;
    let n = seq.len();
    let (w_out, _) = params.output(dir);
    let lm = params.lm(dir);

    let mut dctx_h = vec![vec![0.0; hidden]; n + 1];
    let mut dctx_c = vec![vec![0.0; hidden]; n + 1];
    let mut dembed = vec![0.0; vocab * embed];
    let mut dw_out = vec![0.0; hidden * vocab];
    let mut db_out = vec![0.0; vocab];
    let mut dlm = LstmParams::zeros(embed, hidden);

    for (s, st) in trace.starts.iter().enumerate() {
        let max_len = dscores.max_len(s);
        // weight on the character emitted at LM position i = sum of the
        // gradients of all segments at least i long
        let mut char_weight = vec![0.0; max_len + 2];
        for i in (1..=max_len).rev() {
            char_weight[i] = char_weight[i + 1] + dscores.score(s, i);
        }
        let mut dh_next = vec![0.0; hidden];
        let mut dc_next = vec![0.0; hidden];
        for i in (1..=max_len + 1).rev() {
            let p = &st.probs[i - 1];
            let cw = if i <= max_len { char_weight[i] } else { 0.0 };
            let ew = if i >= 2 { dscores.score(s, i - 1) } else { 0.0 };
            let mut dz: Vec<f64> = p.iter().map(|pj| -(cw + ew) * pj).collect();
            if i <= max_len {
                dz[seq[s + i - 1]] += cw;
            }
            if i >= 2 {
                dz[eos] += ew;
            }
            let step = &st.steps[i - 1];
            accumulate_outer(&mut dw_out, &step.h, &dz);
            for (b, d) in db_out.iter_mut().zip(&dz) {
                *b += d;
            }
            let mut dh = dh_next;
            accumulate_transposed(&mut dh, w_out, &dz);
            let input = if i == 1 { eos } else { seq[s + i - 2] };
            let x = params.embedding(input);
            let dx = &mut dembed[input * embed..(input + 1) * embed];
            let (dhp, dcp) = step.backward(lm, &mut dlm, x, &dh, &dc_next, dx);
            dh_next = dhp;
            dc_next = dcp;
        }
        for (a, d) in dctx_h[s].iter_mut().zip(&dh_next) {
            *a += d;
        }
        if !params.options.zero_lm_cell {
            for (a, d) in dctx_c[s].iter_mut().zip(&dc_next) {
                *a += d;
            }
        }
    }

    let ctx = params.context(dir);
    let mut dctx = LstmParams::zeros(embed, hidden);
    let mut carry_h = vec![0.0; hidden];
    let mut carry_c = vec![0.0; hidden];
    for t in (1..=n).rev() {
        let dh: Vec<f64> = carry_h.iter().zip(&dctx_h[t]).map(|(a, b)| a + b).collect();
        let dc: Vec<f64> = carry_c.iter().zip(&dctx_c[t]).map(|(a, b)| a + b).collect();
        let id = seq[t - 1];
        let x = params.embedding(id);
        let dx = &mut dembed[id * embed..(id + 1) * embed];
        let (dhp, dcp) = trace.context[t - 1].backward(ctx, &mut dctx, x, &dh, &dc, dx);
        carry_h = dhp;
        carry_c = dcp;
    }

    for (g, d) in grads.embed.iter_mut().zip(&dembed) {
        *g += d;
    }
    add_lstm(grads.lm_mut(dir), &dlm);
    add_lstm(grads.context_mut(dir), &dctx);
    let shared = params.options.share_output;
    let (gw, gb) = match dir {
        Direction::Backward if !shared => (&mut grads.out_bwd, &mut grads.bias_bwd),
        _ => (&mut grads.out_fwd, &mut grads.bias_fwd),
    };
    for (g, d) in gw.iter_mut().zip(&dw_out) {
        *g += d;
    }
    for (g, d) in gb.iter_mut().zip(&db_out) {
        *g += d;
    }
}

fn add_lstm(into: &mut LstmParams, from: &LstmParams) {
    for (a, b) in [
        (&mut into.w_ih, &from.w_ih),
        (&mut into.w_hh, &from.w_hh),
        (&mut into.bias, &from.bias),
    ] {
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
    }
}
