//! Toy pre-norm transformer encoder with LoRA sites on every layer's query
//! and value projections, and the fixed-backbone linear head.
//!
//! The encoder has no positional encoding: tokens are treated as a set, so
//! the embedding is invariant to token order. Projection weights are stored
//! `d_out x d_in` and applied to row-major activations as `x · Wᵀ`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codec::{self, field, format_matrix, header_fields, parse_error, parse_matrix};
use crate::error::{Error, Result};
use crate::lora::{LoraAdapter, Target};
use crate::numerics::{Matrix, Tape, Var, LAYER_NORM_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub seq_len: usize,
    pub embed_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl EncoderConfig {
    /// 2 layers, `d_model` 16, 2 heads, `d_ff` 32, 4 tokens, 8-dim output.
    pub fn toy() -> Self {
        Self {
            n_layers: 2,
            d_model: 16,
            n_heads: 2,
            d_ff: 32,
            seq_len: 4,
            embed_dim: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.n_layers,
            self.d_model,
            self.n_heads,
            self.d_ff,
            self.seq_len,
            self.embed_dim,
        ];
        if counts.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "encoder counts must be >= 1: {self:?}"
            )));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidInput(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn param_count(&self) -> usize {
        let d = self.d_model;
        let per_layer = 4 * d * d + 2 * d * self.d_ff + 4 * d;
        self.n_layers * per_layer + 2 * d + self.embed_dim * d
    }

    /// Number of input values one token sequence holds.
    pub fn capacity(&self) -> usize {
        self.seq_len * self.d_model
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub w1: Matrix,
    pub w2: Matrix,
    pub ln1_gain: Matrix,
    pub ln1_bias: Matrix,
    pub ln2_gain: Matrix,
    pub ln2_bias: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    pub layers: Vec<LayerWeights>,
    pub final_gain: Matrix,
    pub final_bias: Matrix,
    pub proj: Matrix,
}

impl EncoderWeights {
    /// Every matrix paired with its checkpoint name, in a fixed order.
    pub fn named(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            for (name, m) in [
                ("wq", &l.wq),
                ("wk", &l.wk),
                ("wv", &l.wv),
                ("wo", &l.wo),
                ("w1", &l.w1),
                ("w2", &l.w2),
                ("ln1_gain", &l.ln1_gain),
                ("ln1_bias", &l.ln1_bias),
                ("ln2_gain", &l.ln2_gain),
                ("ln2_bias", &l.ln2_bias),
            ] {
                out.push((format!("layer{i}.{name}"), m));
            }
        }
        out.push(("final_gain".into(), &self.final_gain));
        out.push(("final_bias".into(), &self.final_bias));
        out.push(("proj".into(), &self.proj));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            for (name, m) in [
                ("wq", &mut l.wq),
                ("wk", &mut l.wk),
                ("wv", &mut l.wv),
                ("wo", &mut l.wo),
                ("w1", &mut l.w1),
                ("w2", &mut l.w2),
                ("ln1_gain", &mut l.ln1_gain),
                ("ln1_bias", &mut l.ln1_bias),
                ("ln2_gain", &mut l.ln2_gain),
                ("ln2_bias", &mut l.ln2_bias),
            ] {
                out.push((format!("layer{i}.{name}"), m));
            }
        }
        out.push(("final_gain".into(), &mut self.final_gain));
        out.push(("final_bias".into(), &mut self.final_bias));
        out.push(("proj".into(), &mut self.proj));
        out
    }

    pub fn check(&self, cfg: &EncoderConfig) -> Result<()> {
        cfg.validate()?;
        if self.layers.len() != cfg.n_layers {
            return Err(Error::shape(
                "encoder",
                format!("{} layers, config says {}", self.layers.len(), cfg.n_layers),
            ));
        }
        let (d, f) = (cfg.d_model, cfg.d_ff);
        for (name, m) in self.named() {
            let expected = match name.rsplit('.').next().unwrap_or("") {
                "wq" | "wk" | "wv" | "wo" => (d, d),
                "w1" => (f, d),
                "w2" => (d, f),
                "proj" => (cfg.embed_dim, d),
                _ => (1, d),
            };
            if m.shape() != expected {
                return Err(Error::shape(
                    "encoder",
                    format!("{name} is {:?}, expected {expected:?}", m.shape()),
                ));
            }
        }
        Ok(())
    }
}

/// Gaussian projections with std 0.02; layer-norm gains 1 and biases 0.
pub fn init_encoder(cfg: &EncoderConfig, seed: u64) -> Result<EncoderWeights> {
    init_encoder_with_std(cfg, seed, 0.02)
}

pub fn init_encoder_with_std(cfg: &EncoderConfig, seed: u64, std: f64) -> Result<EncoderWeights> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |r: usize, c: usize| {
        Matrix::from_raw(
            r,
            c,
            (0..r * c)
                .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        )
    };
    let (d, f) = (cfg.d_model, cfg.d_ff);
    let layers = (0..cfg.n_layers)
        .map(|_| LayerWeights {
            wq: gauss(d, d),
            wk: gauss(d, d),
            wv: gauss(d, d),
            wo: gauss(d, d),
            w1: gauss(f, d),
            w2: gauss(d, f),
            ln1_gain: Matrix::filled(1, d, 1.0),
            ln1_bias: Matrix::zeros(1, d),
            ln2_gain: Matrix::filled(1, d, 1.0),
            ln2_bias: Matrix::zeros(1, d),
        })
        .collect();
    Ok(EncoderWeights {
        layers,
        final_gain: Matrix::filled(1, d, 1.0),
        final_bias: Matrix::zeros(1, d),
        proj: gauss(cfg.embed_dim, d),
    })
}

/// Reshapes a source vector row-wise into `seq_len x d_model`, zero padded.
pub fn tokenize(vector: &[f64], cfg: &EncoderConfig) -> Result<Matrix> {
    if vector.len() > cfg.capacity() {
        return Err(Error::InvalidInput(format!(
            "vector of dim {} exceeds token capacity {}",
            vector.len(),
            cfg.capacity()
        )));
    }
    let mut data = vector.to_vec();
    data.resize(cfg.capacity(), 0.0);
    Matrix::new(cfg.seq_len, cfg.d_model, data)
}

struct LayerVars {
    wq_t: Var,
    wk_t: Var,
    wv_t: Var,
    wo_t: Var,
    w1_t: Var,
    w2_t: Var,
    ln1: (Var, Var),
    ln2: (Var, Var),
}

/// Encoder weights placed on a tape, with the base weights either trainable
/// or frozen.
pub struct EncoderVars {
    layers: Vec<LayerVars>,
    final_ln: (Var, Var),
    proj_t: Var,
    /// Leaves in [`EncoderWeights::named`] order.
    pub leaves: Vec<Var>,
}

impl EncoderVars {
    pub fn attach(tape: &mut Tape, w: &EncoderWeights, trainable: bool) -> Result<Self> {
        let leaf = |tape: &mut Tape, m: &Matrix| {
            if trainable {
                tape.param(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        let mut leaves = Vec::new();
        let mut layers = Vec::new();
        for l in &w.layers {
            let ids: Vec<Var> = [
                &l.wq,
                &l.wk,
                &l.wv,
                &l.wo,
                &l.w1,
                &l.w2,
                &l.ln1_gain,
                &l.ln1_bias,
                &l.ln2_gain,
                &l.ln2_bias,
            ]
            .into_iter()
            .map(|m| leaf(tape, m))
            .collect();
            leaves.extend(&ids);
            layers.push(LayerVars {
                wq_t: tape.transpose(ids[0])?,
                wk_t: tape.transpose(ids[1])?,
                wv_t: tape.transpose(ids[2])?,
                wo_t: tape.transpose(ids[3])?,
                w1_t: tape.transpose(ids[4])?,
                w2_t: tape.transpose(ids[5])?,
                ln1: (ids[6], ids[7]),
                ln2: (ids[8], ids[9]),
            });
        }
        let fg = leaf(tape, &w.final_gain);
        let fb = leaf(tape, &w.final_bias);
        let proj = leaf(tape, &w.proj);
        leaves.extend([fg, fb, proj]);
        Ok(Self {
            layers,
            final_ln: (fg, fb),
            proj_t: tape.transpose(proj)?,
            leaves,
        })
    }
}

/// Adapter factors placed on a tape.
pub struct AdapterVars {
    pub a_down: Var,
    pub b_up: Var,
    a_t: Var,
    b_t: Var,
    scale: f64,
    target: Target,
    layer_index: usize,
}

impl AdapterVars {
    pub fn attach(tape: &mut Tape, adapters: &[LoraAdapter], trainable: bool) -> Result<Vec<Self>> {
        adapters
            .iter()
            .map(|ad| {
                let (a, b) = if trainable {
                    (tape.param(ad.a_down.clone()), tape.param(ad.b_up.clone()))
                } else {
                    (
                        tape.constant(ad.a_down.clone()),
                        tape.constant(ad.b_up.clone()),
                    )
                };
                Ok(Self {
                    a_down: a,
                    b_up: b,
                    a_t: tape.transpose(a)?,
                    b_t: tape.transpose(b)?,
                    scale: ad.scale(),
                    target: ad.target,
                    layer_index: ad.layer_index,
                })
            })
            .collect()
    }
}

fn check_adapters(cfg: &EncoderConfig, adapters: &[LoraAdapter]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for ad in adapters {
        if ad.layer_index >= cfg.n_layers {
            return Err(Error::InvalidInput(format!(
                "adapter layer_index {} out of range for {} layers",
                ad.layer_index, cfg.n_layers
            )));
        }
        if ad.d_in() != cfg.d_model || ad.d_out() != cfg.d_model {
            return Err(Error::shape(
                "encode",
                format!(
                    "adapter {}x{} on d_model {}",
                    ad.d_out(),
                    ad.d_in(),
                    cfg.d_model
                ),
            ));
        }
        if !seen.insert((ad.layer_index, ad.target)) {
            return Err(Error::InvalidInput(format!(
                "two adapters on layer {} target {}",
                ad.layer_index, ad.target
            )));
        }
    }
    Ok(())
}

/// `x · Wᵀ` plus the adapter's `scale · (x · Aᵀ) · Bᵀ` when one sits here.
fn project(tape: &mut Tape, x: Var, w_t: Var, adapter: Option<&AdapterVars>) -> Result<Var> {
    let base = tape.matmul(x, w_t)?;
    match adapter {
        None => Ok(base),
        Some(ad) => {
            let down = tape.matmul(x, ad.a_t)?;
            let up = tape.matmul(down, ad.b_t)?;
            let up = tape.scale(up, ad.scale)?;
            tape.add(base, up)
        }
    }
}

/// Builds the forward pass for one token matrix and returns the `1 x
/// embed_dim` unit embedding. Attention probabilities are appended to
/// `attention` (layer-major, then head) when requested.
pub fn encode_on_tape(
    tape: &mut Tape,
    cfg: &EncoderConfig,
    w: &EncoderVars,
    adapters: &[AdapterVars],
    tokens: Var,
    mut attention: Option<&mut Vec<Var>>,
) -> Result<Var> {
    if tape.value(tokens).shape() != (cfg.seq_len, cfg.d_model) {
        return Err(Error::shape(
            "encode",
            format!(
                "tokens {:?}, expected {:?}",
                tape.value(tokens).shape(),
                (cfg.seq_len, cfg.d_model)
            ),
        ));
    }
    let dh = cfg.head_dim();
    let inv_sqrt = 1.0 / (dh as f64).sqrt();
    let mut x = tokens;
    for (li, layer) in w.layers.iter().enumerate() {
        let site = |t: Target| {
            adapters
                .iter()
                .find(|a| a.layer_index == li && a.target == t)
        };
        let h = tape.layer_norm_rows(x, layer.ln1.0, layer.ln1.1, LAYER_NORM_EPS)?;
        let q = project(tape, h, layer.wq_t, site(Target::Query))?;
        let k = project(tape, h, layer.wk_t, None)?;
        let v = project(tape, h, layer.wv_t, site(Target::Value))?;
        let mut heads = Vec::with_capacity(cfg.n_heads);
        for hd in 0..cfg.n_heads {
            let qh = tape.slice_cols(q, hd * dh, dh)?;
            let kh = tape.slice_cols(k, hd * dh, dh)?;
            let vh = tape.slice_cols(v, hd * dh, dh)?;
            let kh_t = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kh_t)?;
            let scores = tape.scale(scores, inv_sqrt)?;
            let probs = tape.softmax_rows(scores)?;
            if let Some(att) = attention.as_deref_mut() {
                att.push(probs);
            }
            heads.push(tape.matmul(probs, vh)?);
        }
        let cat = tape.concat_cols(&heads)?;
        let attn_out = tape.matmul(cat, layer.wo_t)?;
        x = tape.add(x, attn_out)?;

        let h2 = tape.layer_norm_rows(x, layer.ln2.0, layer.ln2.1, LAYER_NORM_EPS)?;
        let ff = tape.matmul(h2, layer.w1_t)?;
        let ff = tape.gelu(ff)?;
        let ff = tape.matmul(ff, layer.w2_t)?;
        x = tape.add(x, ff)?;
    }
    let x = tape.layer_norm_rows(x, w.final_ln.0, w.final_ln.1, LAYER_NORM_EPS)?;
    let pooled = tape.mean_rows(x)?;
    let out = tape.matmul(pooled, w.proj_t)?;
    tape.l2_normalize_rows(out)
}

/// Unit embedding of one token matrix. An empty adapter list is the base model.
pub fn encode(
    cfg: &EncoderConfig,
    weights: &EncoderWeights,
    adapters: &[LoraAdapter],
    tokens: &Matrix,
) -> Result<Vec<f64>> {
    Ok(encode_with_attention(cfg, weights, adapters, tokens)?.0)
}

/// [`encode`] plus each layer's per-head attention probabilities.
pub fn encode_with_attention(
    cfg: &EncoderConfig,
    weights: &EncoderWeights,
    adapters: &[LoraAdapter],
    tokens: &Matrix,
) -> Result<(Vec<f64>, Vec<Matrix>)> {
    weights.check(cfg)?;
    check_adapters(cfg, adapters)?;
    let mut tape = Tape::new();
    let wv = EncoderVars::attach(&mut tape, weights, false)?;
    let av = AdapterVars::attach(&mut tape, adapters, false)?;
    let tok = tape.constant(tokens.clone());
    let mut att = Vec::new();
    let out = encode_on_tape(&mut tape, cfg, &wv, &av, tok, Some(&mut att))?;
    let probs = att.into_iter().map(|v| tape.value(v).clone()).collect();
    Ok((tape.value(out).as_slice().to_vec(), probs))
}

/// Validates an adapter list against the config; exposed for trainers that
/// build their own tapes.
pub fn validate_adapters(cfg: &EncoderConfig, adapters: &[LoraAdapter]) -> Result<()> {
    check_adapters(cfg, adapters)
}

/// Linear head over a fixed backbone embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    /// `d_out x d_in`.
    pub w: Matrix,
    /// `1 x d_out`.
    pub bias: Option<Matrix>,
}

impl HeadWeights {
    pub fn identity(d: usize, with_bias: bool) -> Self {
        Self {
            w: Matrix::identity(d),
            bias: with_bias.then(|| Matrix::zeros(1, d)),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w.cols()
    }

    pub fn d_out(&self) -> usize {
        self.w.rows()
    }
}

/// Identity when `d_in == d_out`, otherwise gaussian with std `1/sqrt(d_in)`.
pub fn init_head(d_in: usize, d_out: usize, with_bias: bool, seed: u64) -> Result<HeadWeights> {
    if d_in == 0 || d_out == 0 {
        return Err(Error::InvalidInput("head dimensions must be >= 1".into()));
    }
    if d_in == d_out {
        return Ok(HeadWeights::identity(d_in, with_bias));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = 1.0 / (d_in as f64).sqrt();
    let w = (0..d_in * d_out)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(HeadWeights {
        w: Matrix::new(d_out, d_in, w)?,
        bias: with_bias.then(|| Matrix::zeros(1, d_out)),
    })
}

/// Head parameters on a tape; `leaves` is `[w]` or `[w, bias]`.
pub struct HeadVars {
    w_t: Var,
    bias: Option<Var>,
    pub leaves: Vec<Var>,
}

impl HeadVars {
    pub fn attach(tape: &mut Tape, head: &HeadWeights, trainable: bool) -> Result<Self> {
        let mut leaf = |m: &Matrix| {
            if trainable {
                tape.param(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        let w = leaf(&head.w);
        let bias = head.bias.as_ref().map(&mut leaf);
        let mut leaves = vec![w];
        leaves.extend(bias);
        Ok(Self {
            w_t: tape.transpose(w)?,
            bias,
            leaves,
        })
    }
}

pub fn head_on_tape(tape: &mut Tape, head: &HeadVars, input: Var) -> Result<Var> {
    let y = tape.matmul(input, head.w_t)?;
    let y = match head.bias {
        Some(b) => tape.add_row(y, b)?,
        None => y,
    };
    tape.l2_normalize_rows(y)
}

/// `normalize(W·v + b)`.
pub fn head_forward(head: &HeadWeights, backbone_vec: &[f64]) -> Result<Vec<f64>> {
    if backbone_vec.len() != head.d_in() {
        return Err(Error::shape(
            "head_forward",
            format!(
                "input dim {}, head expects {}",
                backbone_vec.len(),
                head.d_in()
            ),
        ));
    }
    let mut tape = Tape::new();
    let hv = HeadVars::attach(&mut tape, head, false)?;
    let x = tape.constant(Matrix::row_vector(backbone_vec.to_vec())?);
    let out = head_on_tape(&mut tape, &hv, x)?;
    Ok(tape.value(out).as_slice().to_vec())
}

const ENCODER_MAGIC: &str = "#encoder v1";
const HEAD_MAGIC: &str = "#head v1";

pub fn render_encoder(cfg: &EncoderConfig, w: &EncoderWeights) -> Result<String> {
    w.check(cfg)?;
    let mut out = format!(
        "{ENCODER_MAGIC} n_layers={} d_model={} n_heads={} d_ff={} seq_len={} embed_dim={}\n",
        cfg.n_layers, cfg.d_model, cfg.n_heads, cfg.d_ff, cfg.seq_len, cfg.embed_dim
    );
    for (name, m) in w.named() {
        out.push_str(&format!("{name}\t{}\n", format_matrix(m)));
    }
    Ok(out)
}

pub fn save_encoder(cfg: &EncoderConfig, w: &EncoderWeights, path: &Path) -> Result<()> {
    codec::write_text(path, &render_encoder(cfg, w)?)
}

pub fn load_encoder(path: &Path) -> Result<(EncoderConfig, EncoderWeights)> {
    let text = codec::read_text(path)?;
    let mut lines = text.split_terminator('\n').enumerate();
    let header = lines.next().map(|(_, h)| h).unwrap_or("");
    let fields = header_fields(header, ENCODER_MAGIC).map_err(|m| parse_error(path, 1, m))?;
    let get = |k: &str| -> Result<usize> { field(&fields, k).map_err(|m| parse_error(path, 1, m)) };
    let cfg = EncoderConfig {
        n_layers: get("n_layers")?,
        d_model: get("d_model")?,
        n_heads: get("n_heads")?,
        d_ff: get("d_ff")?,
        seq_len: get("seq_len")?,
        embed_dim: get("embed_dim")?,
    };
    cfg.validate()
        .map_err(|e| parse_error(path, 1, e.to_string()))?;
    let mut weights = init_encoder_with_std(&cfg, 0, 0.0)?;
    let mut slots = weights.named_mut().into_iter();
    let mut count = 0;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(parse_error(path, lineno, "expected name, shape, values"));
        }
        let (name, slot) = slots
            .next()
            .ok_or_else(|| parse_error(path, lineno, "too many weight lines"))?;
        if cols[0] != name {
            return Err(parse_error(
                path,
                lineno,
                format!("expected `{name}`, found `{}`", cols[0]),
            ));
        }
        let m = parse_matrix(cols[1], cols[2]).map_err(|m| parse_error(path, lineno, m))?;
        if m.shape() != slot.shape() {
            return Err(parse_error(
                path,
                lineno,
                format!("`{name}` is {:?}, expected {:?}", m.shape(), slot.shape()),
            ));
        }
        *slot = m;
        count += 1;
    }
    if slots.next().is_some() {
        return Err(parse_error(path, count + 1, "missing weight lines"));
    }
    Ok((cfg, weights))
}

pub fn render_head(head: &HeadWeights) -> String {
    let mut out = format!(
        "{HEAD_MAGIC} d_in={} d_out={} bias={}\n",
        head.d_in(),
        head.d_out(),
        head.bias.is_some()
    );
    out.push_str(&format!("w\t{}\n", format_matrix(&head.w)));
    if let Some(b) = &head.bias {
        out.push_str(&format!("bias\t{}\n", format_matrix(b)));
    }
    out
}

pub fn save_head(head: &HeadWeights, path: &Path) -> Result<()> {
    codec::write_text(path, &render_head(head))
}

pub fn load_head(path: &Path) -> Result<HeadWeights> {
    let text = codec::read_text(path)?;
    let lines: Vec<&str> = text.split_terminator('\n').collect();
    let fields = header_fields(lines.first().copied().unwrap_or(""), HEAD_MAGIC)
        .map_err(|m| parse_error(path, 1, m))?;
    let d_in: usize = field(&fields, "d_in").map_err(|m| parse_error(path, 1, m))?;
    let d_out: usize = field(&fields, "d_out").map_err(|m| parse_error(path, 1, m))?;
    let has_bias: bool = field(&fields, "bias").map_err(|m| parse_error(path, 1, m))?;
    let expected = if has_bias { 3 } else { 2 };
    if lines.len() != expected {
        return Err(parse_error(
            path,
            lines.len(),
            format!("expected {expected} lines"),
        ));
    }
    let parse = |lineno: usize, name: &str, shape: (usize, usize)| -> Result<Matrix> {
        let cols: Vec<&str> = lines[lineno - 1].split('\t').collect();
        if cols.len() != 3 || cols[0] != name {
            return Err(parse_error(path, lineno, format!("expected `{name}` line")));
        }
        let m = parse_matrix(cols[1], cols[2]).map_err(|m| parse_error(path, lineno, m))?;
        if m.shape() != shape {
            return Err(parse_error(
                path,
                lineno,
                format!("`{name}` has wrong shape"),
            ));
        }
        Ok(m)
    };
    let w = parse(2, "w", (d_out, d_in))?;
    let bias = if has_bias {
        Some(parse(3, "bias", (1, d_out))?)
    } else {
        None
    };
    Ok(HeadWeights { w, bias })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lora::{init_adapters, LoraConfig};
    use crate::numerics::norm;

    fn random_tokens(cfg: &EncoderConfig, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::new(
            cfg.seq_len,
            cfg.d_model,
            (0..cfg.capacity())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn init_deterministic_with_unit_gains() {
        let cfg = EncoderConfig::toy();
        let a = init_encoder(&cfg, 3).unwrap();
        assert_eq!(a, init_encoder(&cfg, 3).unwrap());
        assert_ne!(a, init_encoder(&cfg, 4).unwrap());
        for l in &a.layers {
            assert!(l.ln1_gain.as_slice().iter().all(|&g| g == 1.0));
            assert!(l.ln2_gain.as_slice().iter().all(|&g| g == 1.0));
        }
        assert!(a.final_gain.as_slice().iter().all(|&g| g == 1.0));
    }

    #[test]
    fn output_is_unit_norm_and_finite() {
        let cfg = EncoderConfig::toy();
        let w = init_encoder(&cfg, 1).unwrap();
        for s in 0..10 {
            let e = encode(&cfg, &w, &[], &random_tokens(&cfg, s)).unwrap();
            assert_eq!(e.len(), cfg.embed_dim);
            assert!(e.iter().all(|v| v.is_finite()));
            assert!((norm(&e) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fresh_adapters_are_neutral() {
        let cfg = EncoderConfig::toy();
        let w = init_encoder_with_std(&cfg, 1, 0.3).unwrap();
        let ads = init_adapters(
            &cfg,
            &LoraConfig {
                rank: 4,
                alpha: None,
            },
            2,
        )
        .unwrap();
        let t = random_tokens(&cfg, 5);
        assert_eq!(
            encode(&cfg, &w, &ads, &t).unwrap(),
            encode(&cfg, &w, &[], &t).unwrap()
        );
    }

    #[test]
    fn token_order_does_not_matter() {
        let cfg = EncoderConfig::toy();
        let w = init_encoder_with_std(&cfg, 8, 0.3).unwrap();
        let t = random_tokens(&cfg, 9);
        let perm = [2usize, 0, 3, 1];
        let rows: Vec<Vec<f64>> = perm.iter().map(|&r| t.row(r).to_vec()).collect();
        let shuffled = Matrix::from_rows(&rows).unwrap();
        let a = encode(&cfg, &w, &[], &t).unwrap();
        let b = encode(&cfg, &w, &[], &shuffled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn adapter_range_and_shape_errors() {
        let cfg = EncoderConfig::toy();
        let w = init_encoder(&cfg, 1).unwrap();
        let mut ads = init_adapters(
            &cfg,
            &LoraConfig {
                rank: 2,
                alpha: None,
            },
            0,
        )
        .unwrap();
        ads[0].layer_index = 5;
        assert!(encode(&cfg, &w, &ads, &random_tokens(&cfg, 0)).is_err());
        assert!(encode(&cfg, &w, &[], &Matrix::zeros(3, 16)).is_err());
        let dup = init_adapters(
            &cfg,
            &LoraConfig {
                rank: 2,
                alpha: None,
            },
            0,
        )
        .unwrap();
        let doubled: Vec<_> = dup.iter().chain(dup.iter()).cloned().collect();
        assert!(encode(&cfg, &w, &doubled, &random_tokens(&cfg, 0)).is_err());
    }

    #[test]
    fn tokenize_pads_and_rejects_overflow() {
        let cfg = EncoderConfig::toy();
        let t = tokenize(&[1.0; 20], &cfg).unwrap();
        assert_eq!(t.shape(), (4, 16));
        assert_eq!(t.get(1, 3), 1.0);
        assert_eq!(t.get(1, 4), 0.0);
        assert!(tokenize(&[0.0; 65], &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = EncoderConfig {
            n_heads: 3,
            ..EncoderConfig::toy()
        };
        assert!(bad.validate().is_err());
        assert!(EncoderConfig {
            n_layers: 0,
            ..EncoderConfig::toy()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn head_identity_and_unit_norm() {
        let head = HeadWeights::identity(4, true);
        let x = vec![0.5, 0.5, 0.5, 0.5];
        assert_eq!(head_forward(&head, &x).unwrap(), x);
        let head = init_head(6, 3, true, 1).unwrap();
        let y = head_forward(&head, &[1.0, -2.0, 0.3, 0.0, 4.0, 1.0]).unwrap();
        assert!((norm(&y) - 1.0).abs() < 1e-12);
        assert!(head_forward(&head, &[1.0; 5]).is_err());
    }

    #[test]
    fn encoder_checkpoint_round_trip() {
        let cfg = EncoderConfig::toy();
        let w = init_encoder(&cfg, 21).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.ckpt");
        save_encoder(&cfg, &w, &path).unwrap();
        let (cfg2, w2) = load_encoder(&path).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(w2, w);
    }

    #[test]
    fn head_checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("head.ckpt");
        for head in [
            init_head(5, 3, true, 2).unwrap(),
            HeadWeights::identity(4, false),
        ] {
            save_head(&head, &path).unwrap();
            assert_eq!(load_head(&path).unwrap(), head);
        }
    }
}
