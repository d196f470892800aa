//! Skip-gram with negative sampling over node pairs.
//!
//! Per pair `(t, c)` with sampled negatives `n_1..n_k` the loss is
//!
//! ```text
//! -log σ(u_t · v_c) - Σ_j log σ(-u_t · v_nj)
//! ```
//!
//! where `u` are input (embedding) vectors and `v` output vectors. Updates
//! are plain SGD with a learning rate decaying linearly from `lr_start` to
//! `lr_start / 100` over all updates.

use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;

use rand::Rng;
use rand_distr::{Distribution, WeightedAliasIndex};
use rand_chacha::ChaCha8Rng;

use super::walks::PairStream;
use crate::error::{Error, Result};
use crate::util::{self, sigmoid, softplus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkipGramParams {
    pub dim: usize,
    pub epochs: usize,
    pub negatives: usize,
    /// Exponent applied to node frequencies for negative sampling.
    pub alpha: f64,
    pub lr_start: f64,
    /// 1 = deterministic serial SGD; more = lock-free parallel updates.
    pub threads: usize,
}

impl Default for SkipGramParams {
    fn default() -> Self {
        SkipGramParams {
            dim: 128,
            epochs: 5,
            negatives: 5,
            alpha: 0.75,
            lr_start: 0.025,
            threads: 1,
        }
    }
}

/// Negative sampling distribution `∝ count^alpha`, sampled in O(1) with
/// an alias table.
#[derive(Debug, Clone)]
pub struct NegativeTable {
    probs: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
}

impl PartialEq for NegativeTable {
    fn eq(&self, other: &Self) -> bool {
        self.probs == other.probs
    }
}

impl NegativeTable {
    pub fn from_counts(counts: &[u64], alpha: f64) -> Result<Self> {
        let weights: Vec<f64> = counts
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { (c as f64).powf(alpha) })
            .collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidInput("negative sampling table is empty".into()));
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let alias = WeightedAliasIndex::new(weights)
            .map_err(|e| Error::InvalidInput(format!("negative sampling table: {e}")))?;
        Ok(NegativeTable { probs, alias })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn sample<R: Rng>(&self, rng: &mut R) -> u32 {
        self.alias.sample(rng) as u32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramModel {
    pub n_nodes: usize,
    pub dim: usize,
    /// Row-major `n_nodes × dim`.
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    pub negative_table: NegativeTable,
    pub params: SkipGramParams,
}

impl SkipGramModel {
    pub fn input_row(&self, node: usize) -> &[f64] {
        &self.input[node * self.dim..(node + 1) * self.dim]
    }

    pub fn output_row(&self, node: usize) -> &[f64] {
        &self.output[node * self.dim..(node + 1) * self.dim]
    }

    /// Mean negative-sampling loss over `pairs`, with negatives drawn from a
    /// generator seeded by `eval_seed` (the same draws for every call).
    pub fn corpus_loss(&self, pairs: &PairStream, eval_seed: u64) -> f64 {
        let mut rng = util::rng(eval_seed);
        let mut total = 0.0;
        let mut n = 0usize;
        let mut negs = Vec::with_capacity(self.params.negatives);
        for (t, c) in pairs.iter() {
            negs.clear();
            for _ in 0..self.params.negatives {
                negs.push(self.negative_table.sample(&mut rng));
            }
            let neg_rows: Vec<&[f64]> = negs.iter().map(|&j| self.output_row(j as usize)).collect();
            total += pair_loss(self.input_row(t as usize), self.output_row(c as usize), &neg_rows);
            n += 1;
        }
        total / n.max(1) as f64
    }
}

/// Negative-sampling loss of a single pair.
pub fn pair_loss(target: &[f64], context: &[f64], negatives: &[&[f64]]) -> f64 {
    let mut loss = softplus(-util::dot(target, context));
    for n in negatives {
        loss += softplus(util::dot(target, n));
    }
    loss
}

/// Analytic gradient of [`pair_loss`] with respect to the target vector,
/// the context vector and each negative vector.
pub fn pair_gradient(
    target: &[f64],
    context: &[f64],
    negatives: &[&[f64]],
) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let gp = sigmoid(util::dot(target, context)) - 1.0;
    let mut g_target: Vec<f64> = context.iter().map(|c| gp * c).collect();
    let g_context: Vec<f64> = target.iter().map(|t| gp * t).collect();
    let mut g_negs = Vec::with_capacity(negatives.len());
    for n in negatives {
        let gn = sigmoid(util::dot(target, n));
        for (g, x) in g_target.iter_mut().zip(n.iter()) {
            *g += gn * x;
        }
        g_negs.push(target.iter().map(|t| gn * t).collect());
    }
    (g_target, g_context, g_negs)
}

/// Parameter storage for the lock-free parallel path.
trait Store {
    fn load(&self, i: usize) -> f64;
    fn put(&self, i: usize, v: f64);
}

impl Store for [AtomicU64] {
    #[inline]
    fn load(&self, i: usize) -> f64 {
        f64::from_bits(self[i].load(Ordering::Relaxed))
    }
    #[inline]
    fn put(&self, i: usize, v: f64) {
        self[i].store(v.to_bits(), Ordering::Relaxed)
    }
}

struct StepCtx<'a> {
    dim: usize,
    negatives: usize,
    table: &'a NegativeTable,
}

/// One SGD step on `(target, context)` plus sampled negatives. Returns false
/// if a non-finite score appeared.
#[inline]
fn sgd_step<S: Store + ?Sized>(
    ctx: &StepCtx,
    input: &S,
    output: &S,
    target: usize,
    context: usize,
    lr: f64,
    rng: &mut ChaCha8Rng,
    err: &mut [f64],
) -> bool {
    let d = ctx.dim;
    let tb = target * d;
    err.iter_mut().for_each(|e| *e = 0.0);
    for j in 0..=ctx.negatives {
        let (row, label) = if j == 0 {
            (context, 1.0)
        } else {
            let n = ctx.table.sample(rng) as usize;
            if n == context {
                continue;
            }
            (n, 0.0)
        };
        let rb = row * d;
        let mut acc = [0.0; 4];
        for k in 0..d {
            acc[k % 4] += input.load(tb + k) * output.load(rb + k);
        }
        let f = (acc[0] + acc[1]) + (acc[2] + acc[3]);
        if !f.is_finite() {
            return false;
        }
        let g = lr * (label - sigmoid(f));
        for k in 0..d {
            let o = output.load(rb + k);
            err[k] += g * o;
            output.put(rb + k, o + g * input.load(tb + k));
        }
    }
    for k in 0..d {
        input.put(tb + k, input.load(tb + k) + err[k]);
    }
    true
}

/// Dot product with four interleaved accumulators, summed in a fixed order.
#[inline]
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, ra) = a.split_at(a.len() - a.len() % 4);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// [`sgd_step`] on exclusively borrowed storage.
#[inline]
fn sgd_step_serial(
    ctx: &StepCtx,
    input: &mut [f64],
    output: &mut [f64],
    target: usize,
    context: usize,
    lr: f64,
    rng: &mut ChaCha8Rng,
    err: &mut [f64],
) -> bool {
    let d = ctx.dim;
    let tv = &mut input[target * d..(target + 1) * d];
    err.fill(0.0);
    for j in 0..=ctx.negatives {
        let (row, label) = if j == 0 {
            (context, 1.0)
        } else {
            let n = ctx.table.sample(rng) as usize;
            if n == context {
                continue;
            }
            (n, 0.0)
        };
        let ov = &mut output[row * d..(row + 1) * d];
        let f = dot4(tv, ov);
        if !f.is_finite() {
            return false;
        }
        let g = lr * (label - sigmoid(f));
        for ((e, o), t) in err.iter_mut().zip(ov.iter_mut()).zip(tv.iter()) {
            *e += g * *o;
            *o += g * t;
        }
    }
    for (t, e) in tv.iter_mut().zip(err.iter()) {
        *t += e;
    }
    true
}

/// Epoch-by-epoch trainer; [`train_skipgram`] runs it to completion.
pub struct SkipGramTrainer<'a> {
    pairs: &'a PairStream<'a>,
    model: SkipGramModel,
    rng: ChaCha8Rng,
    seed: u64,
    epoch: usize,
    step: u64,
    total_steps: u64,
}

impl<'a> SkipGramTrainer<'a> {
    pub fn new(pairs: &'a PairStream<'a>, n_nodes: usize, params: SkipGramParams, seed: u64) -> Result<Self> {
        if params.negatives == 0 {
            return Err(Error::InvalidInput("negatives per positive must be at least 1".into()));
        }
        if !(params.lr_start > 0.0) {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        if params.dim == 0 || params.epochs == 0 {
            return Err(Error::InvalidInput("dimension and epochs must be positive".into()));
        }
        let n_pairs = pairs.len();
        if n_pairs == 0 {
            return Err(Error::InvalidInput("skip-gram needs at least one training pair".into()));
        }
        let counts = pairs.corpus().node_counts();
        if counts.len() != n_nodes {
            return Err(Error::InvalidInput(format!(
                "walk corpus covers {} nodes, expected {n_nodes}",
                counts.len()
            )));
        }
        let table = NegativeTable::from_counts(&counts, params.alpha)?;
        let mut rng = util::rng(seed);
        let scale = 1.0 / params.dim as f64;
        let input = (0..n_nodes * params.dim)
            .map(|_| (rng.gen::<f64>() - 0.5) * scale)
            .collect();
        Ok(SkipGramTrainer {
            pairs,
            model: SkipGramModel {
                n_nodes,
                dim: params.dim,
                input,
                output: vec![0.0; n_nodes * params.dim],
                negative_table: table,
                params,
            },
            rng,
            seed,
            epoch: 0,
            step: 0,
            total_steps: (n_pairs * params.epochs) as u64,
        })
    }

    pub fn model(&self) -> &SkipGramModel {
        &self.model
    }

    fn lr_at(&self, step: u64) -> f64 {
        let frac = step as f64 / self.total_steps as f64;
        self.model.params.lr_start * (1.0 - 0.99 * frac.min(1.0))
    }

    pub fn run_epoch(&mut self) -> Result<()> {
        let epoch = self.epoch;
        if self.model.params.threads <= 1 {
            self.serial_epoch()?;
        } else {
            self.parallel_epoch()?;
        }
        self.epoch += 1;
        let bad = self
            .model
            .input
            .iter()
            .chain(&self.model.output)
            .any(|x| !x.is_finite());
        if bad {
            return Err(Error::Training(format!(
                "non-finite embedding entry after epoch {epoch}"
            )));
        }
        Ok(())
    }

    fn serial_epoch(&mut self) -> Result<()> {
        let ctx = StepCtx {
            dim: self.model.dim,
            negatives: self.model.params.negatives,
            table: &self.model.negative_table,
        };
        let input = self.model.input.as_mut_slice();
        let output = self.model.output.as_mut_slice();
        let mut err = vec![0.0; ctx.dim];
        let lr_start = self.model.params.lr_start;
        let total = self.total_steps as f64;
        for (t, c) in self.pairs.iter() {
            let lr = lr_start * (1.0 - 0.99 * (self.step as f64 / total).min(1.0));
            if !sgd_step_serial(&ctx, input, output, t as usize, c as usize, lr, &mut self.rng, &mut err) {
                return Err(Error::Training(format!(
                    "non-finite score at epoch {}, step {}",
                    self.epoch, self.step
                )));
            }
            self.step += 1;
        }
        Ok(())
    }

    fn parallel_epoch(&mut self) -> Result<()> {
        let threads = self.model.params.threads;
        let n_walks = self.pairs.corpus().walks.len();
        let chunk = n_walks.div_ceil(threads).max(1);
        let to_atomic = |v: &[f64]| v.iter().map(|x| AtomicU64::new(x.to_bits())).collect::<Vec<_>>();
        let input = to_atomic(&self.model.input);
        let output = to_atomic(&self.model.output);
        let ctx = StepCtx {
            dim: self.model.dim,
            negatives: self.model.params.negatives,
            table: &self.model.negative_table,
        };
        let base_step = self.step;
        let epoch_steps = self.pairs.len() as u64;
        let failed = thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let range = (t * chunk).min(n_walks)..((t + 1) * chunk).min(n_walks);
                    let (input, output, ctx, pairs) = (&input, &output, &ctx, self.pairs);
                    let lr = |step: u64| self.lr_at(step);
                    let mut rng = util::rng(util::derive_seed(self.seed, self.epoch as u64 + 1, t as u64));
                    s.spawn(move || {
                        let mine = pairs.len_in(range.clone()) as u64;
                        // progress is approximated as this worker's share of the epoch
                        let scale = if mine == 0 { 0.0 } else { epoch_steps as f64 / mine as f64 };
                        let mut err = vec![0.0; ctx.dim];
                        for (i, (a, b)) in pairs.iter_walks(range).enumerate() {
                            let step = base_step + (i as f64 * scale) as u64;
                            if !sgd_step(ctx, &input[..], &output[..], a as usize, b as usize, lr(step), &mut rng, &mut err) {
                                return true;
                            }
                        }
                        false
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sgd worker panicked"))
                .fold(false, |a, b| a | b)
        });
        if failed {
            return Err(Error::Training(format!(
                "non-finite score during parallel epoch {}",
                self.epoch
            )));
        }
        let from_atomic = |v: Vec<AtomicU64>| v.into_iter().map(|a| f64::from_bits(a.into_inner())).collect();
        self.model.input = from_atomic(input);
        self.model.output = from_atomic(output);
        self.step += epoch_steps;
        Ok(())
    }

    pub fn finish(self) -> SkipGramModel {
        self.model
    }
}

pub fn train_skipgram(pairs: &PairStream, n_nodes: usize, params: SkipGramParams, seed: u64) -> Result<SkipGramModel> {
    let mut trainer = SkipGramTrainer::new(pairs, n_nodes, params, seed)?;
    for _ in 0..params.epochs {
        trainer.run_epoch()?;
    }
    Ok(trainer.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::walks::{extract_pairs, WalkCorpus};

    #[test]
    fn negative_table_weights() {
        let t = NegativeTable::from_counts(&[4, 1], 0.75).unwrap();
        let expect = 4f64.powf(0.75) / (4f64.powf(0.75) + 1.0);
        assert!((t.probabilities()[0] - expect).abs() < 1e-12);
        assert!((expect - 0.7388).abs() < 1e-4);
        assert!((t.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(NegativeTable::from_counts(&[0, 0], 0.75).is_err());
    }

    #[test]
    fn sampling_skips_zero_count_nodes() {
        let t = NegativeTable::from_counts(&[0, 3, 0, 1, 0], 0.75).unwrap();
        let mut rng = util::rng(1);
        for _ in 0..5000 {
            let s = t.sample(&mut rng);
            assert!(s == 1 || s == 3, "sampled {s}");
        }
    }

    #[test]
    fn empty_pairs_rejected() {
        let c = WalkCorpus { walks: vec![vec![0]], walk_length: 1, walks_per_node: 1, seed: 0, n_nodes: 1 };
        let p = extract_pairs(&c, 1);
        assert!(matches!(
            train_skipgram(&p, 1, SkipGramParams::default(), 0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn sgd_step_is_a_gradient_step() {
        // With distinct negatives the in-place update equals -lr * gradient.
        let dim = 3;
        let mut rng = util::rng(4);
        let mut input: Vec<f64> = (0..4 * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut output: Vec<f64> = (0..4 * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // only node 3 can be drawn as a negative
        let table = NegativeTable::from_counts(&[0, 0, 0, 5], 1.0).unwrap();
        let ctx = StepCtx { dim, negatives: 1, table: &table };
        let (t, c, n) = (0usize, 1usize, 3usize);
        let row = |v: &Vec<f64>, i: usize| v[i * dim..(i + 1) * dim].to_vec();
        let (gt, gc, gn) = pair_gradient(&row(&input, t), &row(&output, c), &[&row(&output, n)[..]]);
        let before_in = input.clone();
        let before_out = output.clone();
        let lr = 0.1;
        let mut err = vec![0.0; dim];
        let atomic = |v: &Vec<f64>| v.iter().map(|x| AtomicU64::new(x.to_bits())).collect::<Vec<_>>();
        let (ai, ao) = (atomic(&input), atomic(&output));
        assert!(sgd_step(&ctx, &ai[..], &ao[..], t, c, lr, &mut util::rng(0), &mut err));
        assert!(sgd_step_serial(&ctx, &mut input, &mut output, t, c, lr, &mut util::rng(0), &mut err));
        for (a, x) in ai.iter().zip(&input).chain(ao.iter().zip(&output)) {
            assert!((f64::from_bits(a.load(Ordering::Relaxed)) - x).abs() < 1e-15);
        }
        for k in 0..dim {
            assert!((input[t * dim + k] - (before_in[t * dim + k] - lr * gt[k])).abs() < 1e-12);
            assert!((output[c * dim + k] - (before_out[c * dim + k] - lr * gc[k])).abs() < 1e-12);
            assert!((output[n * dim + k] - (before_out[n * dim + k] - lr * gn[0][k])).abs() < 1e-12);
        }
    }
}
