//! Triplet-loss training with hard negative mining, Adam and early stopping.
//!
//! Both trainers share one loop. Each epoch recomputes every train embedding,
//! mines negatives against those (epoch-stale) embeddings, shuffles the
//! resulting triples into batches and takes one Adam step per batch. Batch
//! gradients are computed per item: the loss gradient with respect to each
//! embedding is analytic, and it is pulled back through that item's own tape.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{format_f64, write_text};
use crate::corpus::{Manifest, Split, VerificationPair};
use crate::encoder::{
    encode_on_tape, head_on_tape, tokenize, validate_adapters, AdapterVars, EncoderConfig,
    EncoderVars, EncoderWeights, HeadVars, HeadWeights,
};
use crate::error::{Error, Result};
use crate::lora::LoraAdapter;
use crate::metrics::{eer, score_pairs_with, sweep};
use crate::numerics::{dot, Matrix, Tape, Var};

const UNIT_TOL: f64 = 1e-9;

fn check_unit(v: &[f64]) -> Result<()> {
    let n = dot(v, v).sqrt();
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotUnitNorm(n));
    }
    Ok(())
}

/// `max(0, d(a,p) − d(a,n) + margin)` with cosine distance `d(x,y) = 1 − x·y`.
pub fn triplet_loss(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> Result<f64> {
    if a.len() != p.len() || a.len() != n.len() {
        return Err(Error::shape(
            "triplet_loss",
            format!("dims {}, {}, {}", a.len(), p.len(), n.len()),
        ));
    }
    check_unit(a)?;
    check_unit(p)?;
    check_unit(n)?;
    let d_ap = 1.0 - dot(a, p);
    let d_an = 1.0 - dot(a, n);
    Ok((d_ap - d_an + margin).max(0.0))
}

/// The same loss built from `1 x d` unit rows on a tape.
pub fn triplet_loss_on_tape(tape: &mut Tape, a: Var, p: Var, n: Var, margin: f64) -> Result<Var> {
    let ap = tape.dot_rows(a, p)?;
    let an = tape.dot_rows(a, n)?;
    let gap = tape.sub(an, ap)?;
    let shifted = tape.add_scalar(gap, margin)?;
    tape.relu(shifted)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningConfig {
    pub hard_fraction: f64,
    pub top_pool: usize,
    pub next_pool: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            hard_fraction: 0.30,
            top_pool: 50,
            next_pool: 450,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.hard_fraction) {
            return Err(Error::InvalidInput(format!(
                "mining.hard_fraction must lie in [0, 1], got {}",
                self.hard_fraction
            )));
        }
        if self.top_pool == 0 {
            return Err(Error::InvalidInput(
                "mining.top_pool must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Pool sizes for `n` candidates. When fewer candidates exist than the
    /// two pools cover, both shrink in proportion and the top pool keeps at
    /// least one slot.
    pub fn pool_sizes(&self, n: usize) -> (usize, usize) {
        let full = self.top_pool + self.next_pool;
        if n >= full {
            return (self.top_pool, self.next_pool);
        }
        let top = ((n * self.top_pool) / full).max(1).min(n);
        (top, n - top)
    }

    /// Number of negatives drawn from the top pool, before capping by its size.
    pub fn hard_count(&self, n_select: usize) -> usize {
        // The small offset keeps products like 0.3 * 10 from rounding up to 4.
        ((self.hard_fraction * n_select as f64) - 1e-9)
            .ceil()
            .max(0.0) as usize
    }
}

/// Candidates of other identities ranked by descending cosine to the anchor,
/// ties broken by index. Embeddings are expected to be unit vectors.
pub fn rank_candidates(
    anchor_idx: usize,
    embeddings: &[Vec<f64>],
    identities: &[&str],
) -> Vec<usize> {
    let anchor = &embeddings[anchor_idx];
    let mut cands: Vec<(f64, usize)> = (0..embeddings.len())
        .filter(|&j| identities[j] != identities[anchor_idx])
        .map(|j| (dot(anchor, &embeddings[j]), j))
        .collect();
    cands.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    cands.into_iter().map(|(_, j)| j).collect()
}

/// Selects up to `n_select` distinct negatives for one anchor: the hard share
/// from the top pool, the rest from the next pool, each drawn uniformly
/// without replacement. A pool that runs short is topped up from the other.
pub fn mine_negatives<R: Rng + ?Sized>(
    anchor_idx: usize,
    embeddings: &[Vec<f64>],
    identities: &[&str],
    cfg: &MiningConfig,
    n_select: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    cfg.validate()?;
    if embeddings.len() != identities.len() || anchor_idx >= embeddings.len() {
        return Err(Error::InvalidInput(format!(
            "anchor {anchor_idx} with {} embeddings and {} identities",
            embeddings.len(),
            identities.len()
        )));
    }
    let ranked = rank_candidates(anchor_idx, embeddings, identities);
    if ranked.is_empty() {
        return Err(Error::InsufficientIdentities(format!(
            "anchor {anchor_idx} has no candidates of another identity"
        )));
    }
    let (top, next) = cfg.pool_sizes(ranked.len());
    let want = n_select.min(top + next);
    let mut n_hard = cfg.hard_count(n_select).min(top).min(want);
    let mut n_rest = want - n_hard;
    if n_rest > next {
        n_hard += n_rest - next;
        n_rest = next;
    }
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, top, n_hard)
        .into_iter()
        .map(|i| ranked[i])
        .collect();
    picked.extend(
        rand::seq::index::sample(rng, next, n_rest)
            .into_iter()
            .map(|i| ranked[top + i]),
    );
    Ok(picked)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &[&Matrix]) -> Self {
        let zeros: Vec<Matrix> = params
            .iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Matrix] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Matrix] {
        &self.v
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    state: &mut AdamState,
    lr: f64,
    adam: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "param {:?}, grad {:?}, moment {:?}",
                    p.shape(),
                    g.shape(),
                    m.shape()
                ),
            ));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - adam.beta1.powi(t);
    let c2 = 1.0 - adam.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let ps = p.as_mut_slice();
        let (ms, vs) = (m.as_mut_slice(), v.as_mut_slice());
        for (i, &gi) in g.as_slice().iter().enumerate() {
            ms[i] = adam.beta1 * ms[i] + (1.0 - adam.beta1) * gi;
            vs[i] = adam.beta2 * vs[i] + (1.0 - adam.beta2) * gi * gi;
            let m_hat = ms[i] / c1;
            let v_hat = vs[i] / c2;
            ps[i] -= lr * m_hat / (v_hat.sqrt() + adam.eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    ValEer,
    TrainLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub margin: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub max_epochs: usize,
    /// Triples formed per anchor per epoch, one per mined negative.
    pub negatives_per_anchor: usize,
    pub mining: MiningConfig,
    pub adam: AdamConfig,
    pub monitor: Monitor,
    /// Not read from config files; run configs derive it from their own seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 0.5,
            batch_size: 48,
            learning_rate: 1e-5,
            patience: 10,
            max_epochs: 200,
            negatives_per_anchor: 10,
            mining: MiningConfig::default(),
            adam: AdamConfig::default(),
            monitor: Monitor::ValEer,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad =
            |field: &str, msg: String| Err(Error::InvalidInput(format!("train.{field}: {msg}")));
        if !(self.margin > 0.0 && self.margin < 2.0) {
            return bad("margin", format!("must lie in (0, 2), got {}", self.margin));
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1".into());
        }
        // Zero is accepted so that a frozen run can exercise early stopping.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(
                "learning_rate",
                format!("must be finite and >= 0, got {}", self.learning_rate),
            );
        }
        if self.patience == 0 {
            return bad("patience", "must be at least 1".into());
        }
        if self.negatives_per_anchor == 0 {
            return bad("negatives_per_anchor", "must be at least 1".into());
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return bad(
                "adam",
                "betas must lie in [0, 1) and eps must be positive".into(),
            );
        }
        self.mining.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_eer: f64,
    pub is_best: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    /// Parameters from the best epoch.
    pub model: T,
    pub best_epoch: usize,
    /// Epoch 0 is the untrained model.
    pub history: Vec<EpochRecord>,
}

pub fn render_history(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_eer,is_best\n");
    for r in history {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.epoch,
            format_f64(r.train_loss),
            format_f64(r.val_eer),
            r.is_best
        );
    }
    out
}

pub fn save_history(history: &[EpochRecord], path: &Path) -> Result<()> {
    write_text(path, &render_history(history))
}

/// A model the shared loop can train: a list of parameter matrices and a
/// differentiable map from one input to a unit embedding.
trait Trainable: Sync {
    type Input: Sync;

    fn params(&self) -> Vec<&Matrix>;
    fn params_mut(&mut self) -> Vec<&mut Matrix>;
    /// Returns the embedding node and the parameter leaves in `params` order.
    fn forward(&self, tape: &mut Tape, input: &Self::Input) -> Result<(Var, Vec<Var>)>;

    fn embed(&self, input: &Self::Input) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let (e, _) = self.forward(&mut tape, input)?;
        Ok(tape.value(e).as_slice().to_vec())
    }

    fn snapshot(&self) -> Vec<Matrix> {
        self.params().into_iter().cloned().collect()
    }

    fn restore(&mut self, values: &[Matrix]) {
        for (p, v) in self.params_mut().into_iter().zip(values) {
            *p = v.clone();
        }
    }
}

struct LoraModel<'a> {
    cfg: &'a EncoderConfig,
    base: &'a EncoderWeights,
    adapters: Vec<LoraAdapter>,
}

impl Trainable for LoraModel<'_> {
    type Input = Matrix;

    fn params(&self) -> Vec<&Matrix> {
        self.adapters
            .iter()
            .flat_map(|a| [&a.a_down, &a.b_up])
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.adapters
            .iter_mut()
            .flat_map(|a| [&mut a.a_down, &mut a.b_up])
            .collect()
    }

    fn forward(&self, tape: &mut Tape, tokens: &Matrix) -> Result<(Var, Vec<Var>)> {
        // Base weights go on as constants, so they can never pick up gradient.
        let ev = EncoderVars::attach(tape, self.base, false)?;
        let av = AdapterVars::attach(tape, &self.adapters, true)?;
        let tok = tape.constant(tokens.clone());
        let e = encode_on_tape(tape, self.cfg, &ev, &av, tok, None)?;
        Ok((e, av.iter().flat_map(|a| [a.a_down, a.b_up]).collect()))
    }
}

struct HeadModel {
    head: HeadWeights,
}

impl Trainable for HeadModel {
    type Input = Matrix;

    fn params(&self) -> Vec<&Matrix> {
        let mut p = vec![&self.head.w];
        p.extend(self.head.bias.as_ref());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut p = vec![&mut self.head.w];
        p.extend(self.head.bias.as_mut());
        p
    }

    fn forward(&self, tape: &mut Tape, input: &Matrix) -> Result<(Var, Vec<Var>)> {
        let hv = HeadVars::attach(tape, &self.head, true)?;
        let x = tape.constant(input.clone());
        let e = head_on_tape(tape, &hv, x)?;
        Ok((e, hv.leaves))
    }
}

/// Train-split indices and identities, plus every item the val pairs touch.
struct Data<I> {
    train_inputs: Vec<I>,
    train_ids: Vec<String>,
    val_index: BTreeMap<String, usize>,
    val_inputs: Vec<I>,
}

fn collect_data<I>(
    manifest: &Manifest,
    tag: &str,
    val_pairs: &[VerificationPair],
    to_input: impl Fn(&[f64]) -> Result<I>,
) -> Result<Data<I>> {
    let mut train_inputs = Vec::new();
    let mut train_ids = Vec::new();
    for r in manifest.in_split(Split::Train) {
        train_inputs.push(to_input(r.vector(tag)?)?);
        train_ids.push(r.identity_id.clone());
    }
    let mut per_identity: BTreeMap<&str, usize> = BTreeMap::new();
    for id in &train_ids {
        *per_identity.entry(id).or_default() += 1;
    }
    let with_pairs = per_identity.values().filter(|&&c| c >= 2).count();
    if per_identity.len() < 2 || with_pairs < 1 {
        return Err(Error::InsufficientIdentities(format!(
            "train split has {} identities, {} with at least two items",
            per_identity.len(),
            with_pairs
        )));
    }
    if val_pairs.is_empty() {
        return Err(Error::InvalidInput("no validation pairs".into()));
    }
    let mut val_index = BTreeMap::new();
    let mut val_inputs = Vec::new();
    for p in val_pairs {
        for id in [&p.ref_item, &p.probe_item] {
            if !val_index.contains_key(id) {
                let r = manifest
                    .get(id)
                    .ok_or_else(|| Error::MissingItem(id.clone()))?;
                val_index.insert(id.clone(), val_inputs.len());
                val_inputs.push(to_input(r.vector(tag)?)?);
            }
        }
    }
    Ok(Data {
        train_inputs,
        train_ids,
        val_index,
        val_inputs,
    })
}

fn embed_all<M: Trainable>(model: &M, inputs: &[M::Input]) -> Result<Vec<Vec<f64>>> {
    inputs.par_iter().map(|x| model.embed(x)).collect()
}

fn val_eer<M: Trainable>(
    model: &M,
    data: &Data<M::Input>,
    pairs: &[VerificationPair],
) -> Result<f64> {
    let emb = embed_all(model, &data.val_inputs)?;
    let scores = score_pairs_with(pairs, |a, b| {
        Ok(dot(&emb[data.val_index[a]], &emb[data.val_index[b]]).clamp(-1.0, 1.0))
    })?;
    eer(&sweep(&scores)?)
}

/// Mines this epoch's triples against `embeddings` and shuffles them.
fn build_triples(
    embeddings: &[Vec<f64>],
    ids: &[String],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize, usize)>> {
    let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, id) in id_refs.iter().enumerate() {
        members.entry(id).or_default().push(i);
    }
    let mut triples = Vec::new();
    for a in 0..embeddings.len() {
        let same = &members[id_refs[a]];
        if same.len() < 2 {
            continue;
        }
        let negs = mine_negatives(
            a,
            embeddings,
            &id_refs,
            &cfg.mining,
            cfg.negatives_per_anchor,
            rng,
        )?;
        for n in negs {
            let p = loop {
                let p = same[rng.random_range(0..same.len())];
                if p != a {
                    break p;
                }
            };
            triples.push((a, p, n));
        }
    }
    triples.shuffle(rng);
    Ok(triples)
}

fn mean_loss(
    embeddings: &[Vec<f64>],
    triples: &[(usize, usize, usize)],
    margin: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for &(a, p, n) in triples {
        total += triplet_loss(&embeddings[a], &embeddings[p], &embeddings[n], margin)?;
    }
    Ok(total / triples.len() as f64)
}

/// Mean batch loss and its gradient with respect to every parameter.
fn batch_gradient<M: Trainable>(
    model: &M,
    inputs: &[M::Input],
    batch: &[(usize, usize, usize)],
    margin: f64,
) -> Result<(f64, Vec<Matrix>)> {
    let mut items: Vec<usize> = batch.iter().flat_map(|&(a, p, n)| [a, p, n]).collect();
    items.sort_unstable();
    items.dedup();
    let slot: BTreeMap<usize, usize> = items.iter().enumerate().map(|(s, &i)| (i, s)).collect();

    let tapes = items
        .par_iter()
        .map(|&i| {
            let mut tape = Tape::new();
            let (e, leaves) = model.forward(&mut tape, &inputs[i])?;
            Ok((tape, e, leaves))
        })
        .collect::<Result<Vec<_>>>()?;
    let emb: Vec<&[f64]> = tapes
        .iter()
        .map(|(t, e, _)| t.value(*e).as_slice())
        .collect();

    // dL/de for each item. A hinge exactly at zero counts as inactive.
    let dim = emb[0].len();
    let inv_b = 1.0 / batch.len() as f64;
    let mut upstream = vec![vec![0.0; dim]; items.len()];
    let mut loss = 0.0;
    for &(a, p, n) in batch {
        let (sa, sp, sn) = (slot[&a], slot[&p], slot[&n]);
        let l = triplet_loss(emb[sa], emb[sp], emb[sn], margin)?;
        loss += l;
        if l > 0.0 {
            for k in 0..dim {
                upstream[sa][k] += inv_b * (emb[sn][k] - emb[sp][k]);
                upstream[sp][k] -= inv_b * emb[sa][k];
                upstream[sn][k] += inv_b * emb[sa][k];
            }
        }
    }
    loss *= inv_b;

    let per_item = tapes
        .into_par_iter()
        .zip(upstream)
        .map(|((mut tape, e, leaves), g)| {
            if g.iter().all(|&x| x == 0.0) {
                return Ok(None);
            }
            let gv = tape.constant(Matrix::row_vector(g)?);
            let s = tape.dot_rows(e, gv)?;
            let grads = tape.backward(s, 1.0)?;
            Ok(Some(
                leaves.iter().map(|&v| grads.get(v)).collect::<Vec<_>>(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total: Vec<Matrix> = model
        .params()
        .iter()
        .map(|p| Matrix::zeros(p.rows(), p.cols()))
        .collect();
    for grads in per_item.into_iter().flatten() {
        for (t, g) in total.iter_mut().zip(&grads) {
            t.add_assign(g);
        }
    }
    Ok((loss, total))
}

fn fit<M: Trainable>(
    mut model: M,
    data: &Data<M::Input>,
    val_pairs: &[VerificationPair],
    cfg: &TrainConfig,
) -> Result<(M, usize, Vec<EpochRecord>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&model.params());

    let emb0 = embed_all(&model, &data.train_inputs)?;
    let triples0 = build_triples(&emb0, &data.train_ids, cfg, &mut rng)?;
    let loss0 = mean_loss(&emb0, &triples0, cfg.margin)?;
    let eer0 = val_eer(&model, data, val_pairs)?;
    let monitored = |loss: f64, eer: f64| match cfg.monitor {
        Monitor::ValEer => eer,
        Monitor::TrainLoss => loss,
    };

    let mut history = vec![EpochRecord {
        epoch: 0,
        train_loss: loss0,
        val_eer: eer0,
        is_best: false,
    }];
    let mut best = (0usize, monitored(loss0, eer0), model.snapshot());
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        let emb = embed_all(&model, &data.train_inputs)?;
        let triples = build_triples(&emb, &data.train_ids, cfg, &mut rng)?;
        let mut loss_sum = 0.0;
        for (bi, batch) in triples.chunks(cfg.batch_size).enumerate() {
            let (loss, grads) = batch_gradient(&model, &data.train_inputs, batch, cfg.margin)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.all_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            loss_sum += loss * batch.len() as f64;
            adam_step(
                &mut model.params_mut(),
                &grads,
                &mut adam,
                cfg.learning_rate,
                &cfg.adam,
            )?;
        }
        let train_loss = loss_sum / triples.len() as f64;
        let val = val_eer(&model, data, val_pairs)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_eer: val,
            is_best: false,
        });
        let m = monitored(train_loss, val);
        if m < best.1 {
            best = (epoch, m, model.snapshot());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    model.restore(&best.2);
    history[best.0].is_best = true;
    Ok((model, best.0, history))
}

/// Trains LoRA adapters on a frozen base encoder over the `source_tag`
/// vectors of the train split, monitoring EER on `val_pairs`.
pub fn train_lora(
    manifest: &Manifest,
    source_tag: &str,
    val_pairs: &[VerificationPair],
    cfg: &TrainConfig,
    encoder_cfg: &EncoderConfig,
    base: &EncoderWeights,
    adapters: Vec<LoraAdapter>,
) -> Result<TrainOutcome<Vec<LoraAdapter>>> {
    encoder_cfg.validate()?;
    base.check(encoder_cfg)?;
    validate_adapters(encoder_cfg, &adapters)?;
    if adapters.is_empty() {
        return Err(Error::InvalidInput(
            "train_lora needs at least one adapter".into(),
        ));
    }
    let data = collect_data(manifest, source_tag, val_pairs, |v| {
        tokenize(v, encoder_cfg)
    })?;
    let model = LoraModel {
        cfg: encoder_cfg,
        base,
        adapters,
    };
    let (model, best_epoch, history) = fit(model, &data, val_pairs, cfg)?;
    Ok(TrainOutcome {
        model: model.adapters,
        best_epoch,
        history,
    })
}

/// Trains a linear head over fixed `source_tag` vectors.
pub fn train_head(
    manifest: &Manifest,
    source_tag: &str,
    val_pairs: &[VerificationPair],
    cfg: &TrainConfig,
    head: HeadWeights,
) -> Result<TrainOutcome<HeadWeights>> {
    let d_in = head.d_in();
    let data = collect_data(manifest, source_tag, val_pairs, |v| {
        if v.len() != d_in {
            return Err(Error::shape(
                "train_head",
                format!(
                    "source `{source_tag}` has dim {}, head expects {d_in}",
                    v.len()
                ),
            ));
        }
        Matrix::row_vector(v.to_vec())
    })?;
    let (model, best_epoch, history) = fit(HeadModel { head }, &data, val_pairs, cfg)?;
    Ok(TrainOutcome {
        model: model.head,
        best_epoch,
        history,
    })
}
