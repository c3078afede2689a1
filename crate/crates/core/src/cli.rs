//! Command-line pipeline: synthesize, split, build pair protocols, train,
//! embed, fuse, evaluate and plot.
//!
//! Every command reads its inputs from and writes its artifacts to one output
//! directory, so stages can be rerun independently. Exit codes: 0 success,
//! 2 bad configuration, 3 missing input, 4 a module rejected its input.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::write_text;
use crate::corpus::{
    generate_pairs, load_manifest, load_pairs, save_manifest, save_pairs, split_by_identity,
    synth_generate, Manifest, Split, SplitRatios, SynthConfig,
};
use crate::encoder::{
    encode, head_forward, init_encoder, init_head, load_encoder, load_head, save_encoder,
    save_head, tokenize, EncoderConfig,
};
use crate::error::Error;
use crate::fusion::{fuse_record, FusionSpec};
use crate::lora::{init_adapters, load_adapters, save_adapters, LoraConfig};
use crate::metrics::{
    render_roc_csv, render_roc_svg, render_scores_csv, report, score_pairs, sweep, ScoreSet,
};
use crate::training::{save_history, train_head, train_lora, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MISSING: i32 = 3;
pub const EXIT_CONTRACT: i32 = 4;

/// Tags under which `embed` stores each model's output.
pub const CLIP_BASE: &str = "clip-base";
pub const CLIP_LORA: &str = "clip-lora";
pub const FR_BASE: &str = "fr-base";
pub const FR_TUNED: &str = "fr-tuned";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// External manifest to use instead of the synthetic one.
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PairsSection {
    /// Maximum impostor pairs per split; all of them when absent.
    pub impostor_cap: Option<usize>,
}

/// Manifest source tags fed to the two backbones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourcesSection {
    pub clip: String,
    pub fr: String,
}

impl Default for SourcesSection {
    fn default() -> Self {
        Self {
            clip: "clip".into(),
            fr: "fr".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadSection {
    pub bias: bool,
    /// Output dimension; the input dimension when absent.
    pub dim: Option<usize>,
}

impl Default for HeadSection {
    fn default() -> Self {
        Self {
            bias: true,
            dim: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    pub systems: Vec<Vec<String>>,
}

impl Default for FusionSection {
    fn default() -> Self {
        let sys = |s: &[&str]| s.iter().map(|x| x.to_string()).collect();
        Self {
            systems: vec![
                sys(&[FR_BASE, FR_TUNED]),
                sys(&[CLIP_BASE, FR_BASE]),
                sys(&[CLIP_BASE, FR_TUNED]),
                sys(&[CLIP_LORA, FR_BASE]),
                sys(&[CLIP_LORA, FR_TUNED]),
                sys(&[CLIP_LORA, FR_BASE, FR_TUNED]),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Single-model rows, listed before the fusion rows.
    pub systems: Vec<String>,
    pub far_targets: Vec<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            systems: [CLIP_BASE, CLIP_LORA, FR_BASE, FR_TUNED]
                .map(String::from)
                .to_vec(),
            far_targets: vec![0.001, 0.01],
        }
    }
}

/// Everything a pipeline run depends on. The defaults are the reference recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every stochastic stage derives its own seed from it.
    pub seed: u64,
    pub paths: PathsSection,
    pub synth: SynthConfig,
    pub split: SplitRatios,
    pub pairs: PairsSection,
    pub sources: SourcesSection,
    pub encoder: EncoderConfig,
    pub lora: LoraConfig,
    pub train: TrainConfig,
    pub head: HeadSection,
    pub fusion: FusionSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            paths: PathsSection::default(),
            synth: SynthConfig::default(),
            split: SplitRatios::default(),
            pairs: PairsSection::default(),
            sources: SourcesSection::default(),
            encoder: EncoderConfig::default(),
            lora: LoraConfig::default(),
            train: TrainConfig::default(),
            head: HeadSection::default(),
            fusion: FusionSection::default(),
            eval: EvalSection::default(),
        }
    }
}

/// Stable per-stage seed: the first eight bytes of `sha256("{seed}:{stage}")`.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let digest = Sha256::digest(format!("{seed}:{stage}").as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
            .map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message)))
    }

    /// Checks every section and names the offending field on failure.
    pub fn validate(&self) -> Result<(), CliError> {
        let wrap = |field: &str, r: crate::Result<()>| {
            r.map_err(|e| CliError::config(format!("config field `{field}`: {e}")))
        };
        wrap("synth", self.synth.validate())?;
        wrap("split", self.split.validate())?;
        wrap("encoder", self.encoder.validate())?;
        if self.lora.rank == 0 || self.lora.rank > self.encoder.d_model {
            return Err(CliError::config(format!(
                "config field `lora.rank`: must lie in [1, {}], got {}",
                self.encoder.d_model, self.lora.rank
            )));
        }
        if !self.lora.alpha().is_finite() || self.lora.alpha() <= 0.0 {
            return Err(CliError::config(
                "config field `lora.alpha`: must be positive",
            ));
        }
        wrap("train", self.train.validate())?;
        if self.head.dim == Some(0) {
            return Err(CliError::config(
                "config field `head.dim`: must be at least 1",
            ));
        }
        if self.pairs.impostor_cap == Some(0) {
            return Err(CliError::config(
                "config field `pairs.impostor_cap`: must be at least 1",
            ));
        }
        for sys in &self.fusion.systems {
            if sys.is_empty() {
                return Err(CliError::config(
                    "config field `fusion.systems`: empty system",
                ));
            }
            let dims = vec![1; sys.len()];
            FusionSpec::new(sys.clone(), dims)
                .map_err(|e| CliError::config(format!("config field `fusion.systems`: {e}")))?;
        }
        if self.eval.systems.is_empty() && self.fusion.systems.is_empty() {
            return Err(CliError::config(
                "config field `eval.systems`: nothing to evaluate",
            ));
        }
        for &t in &self.eval.far_targets {
            if !(t > 0.0 && t < 1.0) {
                return Err(CliError::config(format!(
                    "config field `eval.far_targets`: {t} is outside (0, 1)"
                )));
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: msg.into(),
        }
    }

    pub fn missing(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_MISSING,
            message: msg.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                EXIT_MISSING
            }
            Error::Io { .. } => EXIT_FAILURE,
            _ => EXIT_CONTRACT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "sitter", version, about = "Sitter verification pipeline")]
pub struct Cli {
    /// TOML run configuration; built-in reference defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory holding every artifact.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate the synthetic manifest.
    Synth,
    /// Assign identity-disjoint train/val/test splits.
    Split,
    /// Build validation and test verification pairs.
    Pairs,
    /// Train LoRA adapters on the frozen toy encoder.
    TrainLora,
    /// Train the linear head over the fixed fr vectors.
    TrainHead,
    /// Export base and adapted embeddings for every item.
    Embed,
    /// Add fused embeddings for every configured fusion system.
    Fuse,
    /// Score test pairs and write the report.
    Eval,
    /// Write per-system ROC curves and the ROC plot.
    Roc,
    /// Every stage in order.
    Run,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Split => "split",
            Command::Pairs => "pairs",
            Command::TrainLora => "train-lora",
            Command::TrainHead => "train-head",
            Command::Embed => "embed",
            Command::Fuse => "fuse",
            Command::Eval => "eval",
            Command::Roc => "roc",
            Command::Run => "run",
        }
    }

    const PIPELINE: [Command; 9] = [
        Command::Synth,
        Command::Split,
        Command::Pairs,
        Command::TrainLora,
        Command::TrainHead,
        Command::Embed,
        Command::Fuse,
        Command::Eval,
        Command::Roc,
    ];
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    hash: String,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Path of an artifact an earlier stage must have produced.
    fn input(&self, name: &str, producer: &str) -> CliResult<PathBuf> {
        let p = self.path(name);
        if !p.is_file() {
            return Err(CliError::missing(format!(
                "missing {}; run `sitter {producer}` first",
                p.display()
            )));
        }
        Ok(p)
    }

    fn seed(&self, stage: &str) -> u64 {
        derive_seed(self.cfg.seed, stage)
    }

    fn manifest_source(&self) -> CliResult<PathBuf> {
        match &self.cfg.paths.manifest {
            Some(p) if p.is_file() => Ok(p.clone()),
            Some(p) => Err(CliError::missing(format!(
                "manifest {} does not exist",
                p.display()
            ))),
            None => self.input("manifest.txt", "synth"),
        }
    }
}

fn synth(ctx: &Ctx) -> CliResult<Vec<PathBuf>> {
    let mut cfg = ctx.cfg.synth.clone();
    cfg.seed = ctx.seed("synth");
    let m = synth_generate(&cfg)?;
    let p = ctx.path("manifest.txt");
    save_manifest(&m, &p)?;
    Ok(vec![p])
}

fn split(ctx: &Ctx) -> CliResult<Vec<PathBuf>> {
    let m = load_manifest(&ctx.manifest_source()?)?;
    let m = split_by_identity(&m, ctx.cfg.split, ctx.seed("split"))?;
    let p = ctx.path("split.txt");
    save_manifest(&m, &p)?;
    Ok(vec![p])
}

fn pairs(ctx: &Ctx) -> CliResult<Vec<PathBuf>> {
    let m = load_manifest(&ctx.input("split.txt", "split")?)?;
    let mut outs = Vec::new();
    for (split, name) in [
        (Split::Val, "pairs_val.csv"),
        (Split::Test, "pairs_test.csv"),
    ] {
        let pairs = generate_pairs(&m, split, ctx.cfg.pairs.impostor_cap, ctx.seed(name))?;
        let p = ctx.path(name);
        save_pairs(&pairs, &p)?;
        outs.push(p);
    }
    Ok(outs)
}

fn require_source(m: &Manifest, tag: &str) -> CliResult<()> {
    if !m.has_source(tag) {
        return Err(CliError {
            code: EXIT_CONTRACT,
            message: format!("source tag `{tag}` is not in the manifest"),
        });
    }
    Ok(())
}

fn train_config(ctx: &Ctx, stage: &str) -> TrainConfig {
    TrainConfig {
        seed: ctx.seed(stage),
        ..ctx.cfg.train.clone()
    }
}

fn cmd_train_lora(ctx: &Ctx) -> CliResult<Vec<PathBuf>> {
    let m = load_manifest(&ctx.input("split.txt", "split")?)?;
    let val = load_pairs(&ctx.input("pairs_val.csv", "pairs")?)?;
    let tag = &ctx.cfg.sources.clip;
    require_source(&m, tag)?;
    let enc = ctx.cfg.encoder;
    let base = init_encoder(&enc, ctx.seed("encoder"))?;
    let adapters = init_adapters(&enc, &ctx.cfg.lora, ctx.seed("lora"))?;
    let out = train_lora(
        &m,
        tag,
        &val,
        &train_config(ctx, "train-lora"),
        &enc,
        &base,
        adapters,
    )?;
    let paths = [
        ctx.path("encoder.ckpt"),
        ctx.path("lora.ckpt"),
        ctx.path("history_lora.csv"),
    ];
    save_encoder(&enc, &base, &paths[0])?;
    save_adapters(&out.model, enc.n_layers, &paths[1])?;
    save_history(&out.history, &paths[2])?;
    Ok(paths.to_vec())
}

fn cmd_train_head(ctx: &Ctx) -> CliResult<Vec<PathBuf>> {
    let m = load_manifest(&ctx.input("split.txt", "split")?)?;
    let val = load_pairs(&ctx.input("pairs_val.csv", "pairs")?)?;
    let tag = &ctx.cfg.sources.fr;
    require_source(&m, tag)?;
    let d_in = m.source_dims()[tag.as_str()];
    let d_out = ctx.cfg.head.dim.unwrap_or(d_in);
    let head = init_head(d_in, d_out, ctx.cfg.head.bias, ctx.seed("head"))?;
    let out = train_head(&m, tag, &val, &train_config(ctx, "train-head"), head)?;
    let paths = [ctx.path("head.ckpt"), ctx.path("history_head.csv")];
    save_head(&out.model, &paths[0])?;
    save_history(&out.history, &paths[1])?;
    Ok(paths.to_vec())
}

fn embed(ctx: &Ctx) -> CliResult<Vec<PathBuf>> {
    let m = load_manifest(&ctx.input("split.txt", "split")?)?;
    let (enc, base) = load_encoder(&ctx.input("encoder.ckpt", "train-lora")?)?;
    let (adapters, _) = load_adapters(&ctx.input("lora.ckpt", "train-lora")?)?;
    let head = load_head(&ctx.input("head.ckpt", "train-head")?)?;
    let (clip, fr) = (&ctx.cfg.sources.clip, &ctx.cfg.sources.fr);
    require_source(&m, clip)?;
    require_source(&m, fr)?;

    type Row = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);
    let rows = m
        .records()
        .par_iter()
        .map(|r| -> crate::Result<Row> {
            let tokens = tokenize(r.vector(clip)?, &enc)?;
            let fr_vec = r.vector(fr)?.to_vec();
            Ok((
                encode(&enc, &base, &[], &tokens)?,
                encode(&enc, &base, &adapters, &tokens)?,
                head_forward(&head, &fr_vec)?,
                fr_vec,
            ))
        })
        .collect::<crate::Result<Vec<Row>>>()?;
    let mut cb = Vec::with_capacity(rows.len());
    let mut cl = Vec::with_capacity(rows.len());
    let mut ft = Vec::with_capacity(rows.len());
    let mut fb = Vec::with_capacity(rows.len());
    for (a, b, c, d) in rows {
        cb.push(a);
        cl.push(b);
        ft.push(c);
        fb.push(d);
    }
    let m = m
        .with_source(CLIP_BASE, cb)?
        .with_source(CLIP_LORA, cl)?
        .with_source(FR_BASE, fb)?
        .with_source(FR_TUNED, ft)?;
    let p = ctx.path("embeddings.txt");
    save_manifest(&m, &p)?;
    Ok(vec![p])
}

fn fusion_specs(ctx: &Ctx, m: &Manifest) -> CliResult<Vec<FusionSpec>> {
    ctx.cfg
        .fusion
        .systems
        .iter()
        .map(|sys| {
            for s in sys {
                require_source(m, s)?;
            }
            Ok(FusionSpec::from_manifest_dims(sys, m.source_dims())?)
        })
        .collect()
}

fn fuse(ctx: &Ctx) -> CliResult<Vec<PathBuf>> {
    let mut m = load_manifest(&ctx.input("embeddings.txt", "embed")?)?;
    for spec in fusion_specs(ctx, &m)? {
        let fused = m
            .records()
            .par_iter()
            .map(|r| fuse_record(&r.vectors, &spec))
            .collect::<crate::Result<Vec<_>>>()?;
        m = m.with_source(&spec.tag(), fused)?;
    }
    let p = ctx.path("fused.txt");
    save_manifest(&m, &p)?;
    Ok(vec![p])
}

/// Report name and manifest tag of every evaluated system, in report order.
fn systems(ctx: &Ctx, m: &Manifest) -> CliResult<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = ctx
        .cfg
        .eval
        .systems
        .iter()
        .map(|s| (s.clone(), s.clone()))
        .collect();
    for spec in fusion_specs(ctx, m)? {
        out.push((spec.sources().join("+"), spec.tag()));
    }
    for (_, tag) in &out {
        require_source(m, tag)?;
    }
    Ok(out)
}

type ScoredSystems = (
    Vec<crate::corpus::VerificationPair>,
    Vec<(String, ScoreSet)>,
);

fn score_systems(ctx: &Ctx) -> CliResult<ScoredSystems> {
    let m = load_manifest(&ctx.input("fused.txt", "fuse")?)?;
    let pairs = load_pairs(&ctx.input("pairs_test.csv", "pairs")?)?;
    let scored = systems(ctx, &m)?
        .into_iter()
        .map(|(name, tag)| Ok((name, score_pairs(&pairs, &m, &tag)?)))
        .collect::<CliResult<Vec<_>>>()?;
    Ok((pairs, scored))
}

fn eval(ctx: &Ctx) -> CliResult<Vec<PathBuf>> {
    let (pairs, scored) = score_systems(ctx)?;
    let mut outs = Vec::new();
    for (name, scores) in &scored {
        let p = ctx.path(&format!("scores/{name}.csv"));
        write_text(&p, &render_scores_csv(&pairs, scores))?;
        outs.push(p);
    }
    let rep = report(&scored, &ctx.cfg.eval.far_targets)?;
    let (csv, txt) = (ctx.path("report.csv"), ctx.path("report.txt"));
    write_text(&csv, &rep.render_csv())?;
    let text = rep.render_text();
    write_text(&txt, &text)?;
    print!("{text}");
    outs.extend([csv, txt]);
    Ok(outs)
}

fn roc(ctx: &Ctx) -> CliResult<Vec<PathBuf>> {
    let (_, scored) = score_systems(ctx)?;
    let mut outs = Vec::new();
    let mut curves = Vec::new();
    for (name, scores) in scored {
        let curve = sweep(&scores)?;
        let p = ctx.path(&format!("roc/{name}.csv"));
        write_text(&p, &render_roc_csv(&curve))?;
        outs.push(p);
        curves.push((name, curve));
    }
    let svg = ctx.path("roc.svg");
    write_text(&svg, &render_roc_svg(&curves))?;
    outs.push(svg);
    Ok(outs)
}

fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Serialize)]
struct LogLine<'a> {
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    wall_time_s: f64,
    outputs: BTreeMap<String, String>,
}

fn log_run(ctx: &Ctx, command: &str, wall: f64, outputs: &[PathBuf]) -> CliResult<()> {
    let mut hashes = BTreeMap::new();
    for p in outputs {
        let rel = p.strip_prefix(&ctx.out).unwrap_or(p);
        hashes.insert(rel.to_string_lossy().replace('\\', "/"), sha256_file(p)?);
    }
    let line = LogLine {
        command,
        config_hash: &ctx.hash,
        seed: ctx.cfg.seed,
        wall_time_s: wall,
        outputs: hashes,
    };
    let path = ctx.path("run_log.jsonl");
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    let json = serde_json::to_string(&line).expect("log line serializes");
    writeln!(f, "{json}").map_err(|e| Error::io(&path, e))?;
    Ok(())
}

fn run_stage(ctx: &Ctx, cmd: Command) -> CliResult<()> {
    let start = Instant::now();
    let outputs = match cmd {
        Command::Synth => synth(ctx)?,
        Command::Split => split(ctx)?,
        Command::Pairs => pairs(ctx)?,
        Command::TrainLora => cmd_train_lora(ctx)?,
        Command::TrainHead => cmd_train_head(ctx)?,
        Command::Embed => embed(ctx)?,
        Command::Fuse => fuse(ctx)?,
        Command::Eval => eval(ctx)?,
        Command::Roc => roc(ctx)?,
        Command::Run => unreachable!("expanded by the caller"),
    };
    log_run(ctx, cmd.name(), start.elapsed().as_secs_f64(), &outputs)
}

/// Runs one parsed invocation.
pub fn execute(cli: &Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    let ctx = Ctx {
        hash: cfg.hash(),
        cfg,
        out: cli.out.clone(),
    };
    match cli.command {
        Command::Run => {
            // An external manifest replaces the synthetic one.
            let skip_synth = ctx.cfg.paths.manifest.is_some();
            for cmd in Command::PIPELINE {
                if !(skip_synth && cmd == Command::Synth) {
                    run_stage(&ctx, cmd)?;
                }
            }
            Ok(())
        }
        cmd => run_stage(&ctx, cmd),
    }
}

/// Parses `args` (including the program name) and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("sitter {}: {}", cli.command.name(), e.message);
            e.code
        }
    }
}
