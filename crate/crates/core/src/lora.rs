//! Low-rank adapters for the encoder's query and value projections.
//!
//! An adapter adds `ΔW = (alpha / rank) · B · A` to a frozen `d_out x d_in`
//! weight, where `A` (`rank x d_in`) starts gaussian and `B`
//! (`d_out x rank`) starts at zero, so a freshly initialized adapter leaves
//! the base model's output unchanged.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codec::{
    self, field, format_f64, format_matrix, header_fields, parse_error, parse_matrix,
};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::numerics::{matmul, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Query,
    Value,
}

impl Target {
    pub fn code(self) -> &'static str {
        match self {
            Target::Query => "q",
            Target::Value => "v",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q" => Ok(Target::Query),
            "v" => Ok(Target::Value),
            other => Err(Error::InvalidInput(format!(
                "unknown adapter target `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    pub a_down: Matrix,
    pub b_up: Matrix,
    pub rank: usize,
    pub alpha: f64,
    pub target: Target,
    pub layer_index: usize,
}

/// Rank and scale numerator shared by every adapter of a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoraConfig {
    pub rank: usize,
    /// Defaults to `rank`, i.e. a scale of 1.
    pub alpha: Option<f64>,
}

impl Default for LoraConfig {
    fn default() -> Self {
        Self {
            rank: 16,
            alpha: None,
        }
    }
}

impl LoraConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(self.rank as f64)
    }
}

/// Adapter with `A ~ N(0, 1/d_in)` and `B = 0`.
pub fn init_adapter(
    d_in: usize,
    d_out: usize,
    rank: usize,
    alpha: f64,
    seed: u64,
) -> Result<LoraAdapter> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_with_rng(d_in, d_out, rank, alpha, Target::Query, 0, &mut rng)
}

fn init_with_rng(
    d_in: usize,
    d_out: usize,
    rank: usize,
    alpha: f64,
    target: Target,
    layer_index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LoraAdapter> {
    if rank == 0 || rank > d_in.min(d_out) {
        return Err(Error::InvalidInput(format!(
            "rank {rank} must be in [1, min({d_in}, {d_out})]"
        )));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let std = 1.0 / (d_in as f64).sqrt();
    let a: Vec<f64> = (0..rank * d_in)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(LoraAdapter {
        a_down: Matrix::new(rank, d_in, a)?,
        b_up: Matrix::zeros(d_out, rank),
        rank,
        alpha,
        target,
        layer_index,
    })
}

/// One query and one value adapter per encoder layer, in layer order.
pub fn init_adapters(
    cfg: &EncoderConfig,
    lora: &LoraConfig,
    seed: u64,
) -> Result<Vec<LoraAdapter>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cfg.n_layers * 2);
    for layer in 0..cfg.n_layers {
        for target in [Target::Query, Target::Value] {
            out.push(init_with_rng(
                cfg.d_model,
                cfg.d_model,
                lora.rank,
                lora.alpha(),
                target,
                layer,
                &mut rng,
            )?);
        }
    }
    Ok(out)
}

impl LoraAdapter {
    pub fn d_in(&self) -> usize {
        self.a_down.cols()
    }

    pub fn d_out(&self) -> usize {
        self.b_up.rows()
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    pub fn delta(&self) -> Result<Matrix> {
        Ok(matmul(&self.b_up, &self.a_down)?.scale(self.scale()))
    }

    pub fn param_count(&self) -> usize {
        self.rank * (self.d_in() + self.d_out())
    }

    fn check_base(&self, w_base: &Matrix, op: &'static str) -> Result<()> {
        if w_base.shape() != (self.d_out(), self.d_in()) {
            return Err(Error::shape(
                op,
                format!(
                    "base {:?} vs adapter {}x{}",
                    w_base.shape(),
                    self.d_out(),
                    self.d_in()
                ),
            ));
        }
        Ok(())
    }
}

/// `w_base·x + scale·B·(A·x)` for column inputs `x` (`d_in x n`), without
/// forming `ΔW`.
pub fn adapted_forward(w_base: &Matrix, ad: &LoraAdapter, x: &Matrix) -> Result<Matrix> {
    ad.check_base(w_base, "adapted_forward")?;
    let base = matmul(w_base, x)?;
    let low = matmul(&ad.b_up, &matmul(&ad.a_down, x)?)?;
    base.add(&low.scale(ad.scale()))
}

pub fn merge(w_base: &Matrix, ad: &LoraAdapter) -> Result<Matrix> {
    ad.check_base(w_base, "merge")?;
    w_base.add(&ad.delta()?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamCount {
    pub trainable: usize,
    pub encoder_total: usize,
}

impl ParamCount {
    pub fn ratio(&self) -> f64 {
        self.trainable as f64 / self.encoder_total as f64
    }
}

pub fn trainable_param_count(adapters: &[LoraAdapter], cfg: &EncoderConfig) -> Result<ParamCount> {
    for ad in adapters {
        if ad.layer_index >= cfg.n_layers || ad.d_in() != cfg.d_model || ad.d_out() != cfg.d_model {
            return Err(Error::InvalidInput(format!(
                "adapter for layer {} ({}x{}) does not fit the encoder",
                ad.layer_index,
                ad.d_out(),
                ad.d_in()
            )));
        }
    }
    Ok(ParamCount {
        trainable: adapters.iter().map(LoraAdapter::param_count).sum(),
        encoder_total: cfg.param_count(),
    })
}

const MAGIC: &str = "#lora v1";

pub fn render_adapters(adapters: &[LoraAdapter], n_layers: usize) -> Result<String> {
    let (rank, alpha) = match adapters.first() {
        Some(a) => (a.rank, a.alpha),
        None => (0, 0.0),
    };
    if adapters.iter().any(|a| a.rank != rank || a.alpha != alpha) {
        return Err(Error::InvalidInput(
            "adapters must share rank and alpha".into(),
        ));
    }
    let mut out = format!(
        "{MAGIC} layers={n_layers} rank={rank} alpha={}\n",
        format_f64(alpha)
    );
    for a in adapters {
        for (name, m) in [("a_down", &a.a_down), ("b_up", &a.b_up)] {
            out.push_str(&format!(
                "{}\t{}\t{name}\t{}\n",
                a.layer_index,
                a.target,
                format_matrix(m)
            ));
        }
    }
    Ok(out)
}

pub fn save_adapters(adapters: &[LoraAdapter], n_layers: usize, path: &Path) -> Result<()> {
    codec::write_text(path, &render_adapters(adapters, n_layers)?)
}

/// Returns the adapters and the `layers` value from the header.
pub fn load_adapters(path: &Path) -> Result<(Vec<LoraAdapter>, usize)> {
    let text = codec::read_text(path)?;
    let mut lines = text.split_terminator('\n').enumerate();
    let header = lines.next().map(|(_, h)| h).unwrap_or("");
    let fields = header_fields(header, MAGIC).map_err(|m| parse_error(path, 1, m))?;
    let n_layers: usize = field(&fields, "layers").map_err(|m| parse_error(path, 1, m))?;
    let rank: usize = field(&fields, "rank").map_err(|m| parse_error(path, 1, m))?;
    let alpha: f64 = field(&fields, "alpha").map_err(|m| parse_error(path, 1, m))?;

    let mut adapters: Vec<LoraAdapter> = Vec::new();
    let mut pending: Option<(usize, Target, Matrix)> = None;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let err = |m: String| parse_error(path, lineno, m);
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(err("expected layer, target, factor, shape, values".into()));
        }
        let layer: usize = cols[0]
            .parse()
            .map_err(|_| err(format!("bad layer `{}`", cols[0])))?;
        if layer >= n_layers {
            return Err(err(format!(
                "layer {layer} out of range for {n_layers} layers"
            )));
        }
        let target: Target = cols[1].parse().map_err(|e: Error| err(e.to_string()))?;
        let m = parse_matrix(cols[3], cols[4]).map_err(err)?;
        match (cols[2], pending.take()) {
            ("a_down", None) => pending = Some((layer, target, m)),
            ("b_up", Some((l, t, a))) if l == layer && t == target => {
                if a.rows() != rank || m.cols() != rank {
                    return Err(err(format!("factor shapes disagree with rank {rank}")));
                }
                adapters.push(LoraAdapter {
                    a_down: a,
                    b_up: m,
                    rank,
                    alpha,
                    target,
                    layer_index: layer,
                });
            }
            _ => {
                return Err(err(
                    "expected an a_down line followed by its b_up line".into()
                ))
            }
        }
    }
    if pending.is_some() {
        return Err(parse_error(
            path,
            text.lines().count(),
            "a_down without b_up",
        ));
    }
    Ok((adapters, n_layers))
}
