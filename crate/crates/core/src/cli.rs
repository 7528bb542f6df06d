//! The `density-eval` command line.
//!
//! Every subcommand reads an optional JSON config (`--config`), applies flag
//! overrides on top, writes the resolved config as `<command>.config.json`
//! into the output directory and then runs. Default file names inside the
//! output directory chain the commands together:
//!
//! ```text
//! build-corpus  -> dialogues.jsonl, candidates.jsonl
//! train         -> checkpoint.densp, checkpoint.vocab.json, train_log.jsonl
//! fit           -> model.densg
//! score         -> scores.csv
//! eval          -> eval_report.json, scatter.csv
//! probe         -> probe_report.json
//! selection-metrics -> selection_report.json
//! export-plot   -> histogram.csv
//! ```
//!
//! Exit codes: 0 success, 1 bad input, 2 numerical failure.

use std::collections::HashSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::corpus::{self, CandidateSet, Dialogue, ProbeSet};
use crate::density::{self, DensityScorer, GaussianModel, ResponseScorer, ScoreFunction};
use crate::encoder::{checkpoint, features, Encoder, FeatureMatrix, Vocab};
use crate::error::{Error, Result};
use crate::eval;
use crate::pipeline;
use crate::seed::{self, Stream};
use crate::training::{self, Hyperparams};

pub const THREADS_ENV: &str = "DENSITY_EVAL_THREADS";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Raw dialogue JSONL for `build-corpus --input`.
    pub input: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub eval_dataset: Option<PathBuf>,
    /// Scoring pairs `{"id","context","response"}`.
    pub pairs: Option<PathBuf>,
    /// DENSF1 feature file.
    pub features: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    /// `pair_id,score` CSV for `export-plot` and `eval`.
    pub scores: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusOptions {
    pub synthetic: Option<usize>,
    /// Negatives per context; defaults to `candidate_count - 1`.
    pub negatives: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Smoke {
    /// Every response scores the same.
    Constant,
    /// The original answer scores 1, anything else 0.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportOptions {
    pub permutations: usize,
    pub jitter: bool,
    pub bins: usize,
    pub normalize: bool,
    pub smoke: Option<Smoke>,
    /// Also write the fitted training features as DENSF1.
    pub export_features: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            permutations: 0,
            jitter: false,
            bins: 20,
            normalize: false,
            smoke: None,
            export_features: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub paths: Paths,
    pub corpus: CorpusOptions,
    pub hyperparams: Hyperparams,
    pub score_fn: ScoreFunction,
    pub report: ReportOptions,
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn output_dir(&self) -> PathBuf {
        self.paths.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    fn out(&self, name: &str) -> PathBuf {
        self.output_dir().join(name)
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.paths.corpus.clone().unwrap_or_else(|| self.out("dialogues.jsonl"))
    }

    pub fn candidates_path(&self) -> PathBuf {
        self.paths.candidates.clone().unwrap_or_else(|| self.out("candidates.jsonl"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.paths.checkpoint.clone().unwrap_or_else(|| self.out("checkpoint.densp"))
    }

    pub fn vocab_path(&self) -> PathBuf {
        self.paths
            .vocab
            .clone()
            .unwrap_or_else(|| self.checkpoint_path().with_extension("vocab.json"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.paths.model.clone().unwrap_or_else(|| self.out("model.densg"))
    }

    fn negatives(&self) -> usize {
        self.corpus
            .negatives
            .unwrap_or(self.hyperparams.candidate_count.saturating_sub(1))
    }

    /// Fills every derived default so the echoed config is complete.
    fn resolved(&self) -> Config {
        let mut c = self.clone();
        c.paths.output_dir = Some(self.output_dir());
        c.paths.corpus = Some(self.corpus_path());
        c.paths.candidates = Some(self.candidates_path());
        c.paths.checkpoint = Some(self.checkpoint_path());
        c.paths.vocab = Some(self.vocab_path());
        c.paths.model = Some(self.model_path());
        c.corpus.negatives = Some(self.negatives());
        c
    }
}

#[derive(Debug, Parser)]
#[command(name = "density-eval", version, about = "Density-based dialogue response evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write dialogue and candidate-set JSONL from raw input or a synthetic corpus.
    BuildCorpus(BuildCorpusArgs),
    /// Train the reference encoder.
    Train(TrainArgs),
    /// Fit the Gaussian over training features.
    Fit(FitArgs),
    /// Score context-response pairs.
    Score(ScoreArgs),
    /// Correlate scores with human judgments.
    Eval(EvalArgs),
    /// Accuracy on adversarial probes.
    Probe(ProbeArgs),
    /// Recall@1 and MRR over candidate sets.
    SelectionMetrics(SelectionArgs),
    /// Histogram of a score file.
    ExportPlot(ExportPlotArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct HyperArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub candidate_count: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub warmup: Option<u64>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub min_context: Option<usize>,
    #[arg(long)]
    pub resample_negatives: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EncoderArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub vocab: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub features: Option<PathBuf>,
    #[arg(long, value_name = "NAME")]
    pub score_fn: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct BuildCorpusArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub synthetic: Option<usize>,
    #[arg(long, value_name = "K")]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub min_context: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub export_features: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[arg(long, value_name = "PATH")]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[arg(long, value_name = "PATH")]
    pub eval_dataset: Option<PathBuf>,
    /// Precomputed `pair_id,score` CSV aligned with the dataset rows.
    #[arg(long, value_name = "PATH")]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long)]
    pub jitter: bool,
    #[arg(long)]
    pub max_tokens: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub smoke: Option<Smoke>,
}

#[derive(Debug, Clone, Args)]
pub struct SelectionArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[arg(long, value_name = "PATH")]
    pub candidates: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExportPlotArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_name = "PATH")]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub normalize: bool,
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

impl CommonArgs {
    fn base(&self) -> Result<Config> {
        let mut c = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        set_opt(&mut c.paths.output_dir, self.out_dir.clone());
        set(&mut c.hyperparams.seed, self.seed);
        Ok(c)
    }
}

impl HyperArgs {
    fn apply(&self, h: &mut Hyperparams) {
        set(&mut h.epochs, self.epochs);
        set(&mut h.learning_rate, self.learning_rate);
        set(&mut h.batch_size, self.batch_size);
        set(&mut h.candidate_count, self.candidate_count);
        set(&mut h.tau, self.tau);
        set(&mut h.lambda, self.lambda);
        set(&mut h.warmup_steps, self.warmup);
        set(&mut h.max_tokens, self.max_tokens);
        set(&mut h.dim, self.dim);
        set(&mut h.weight_decay, self.weight_decay);
        set(&mut h.val_fraction, self.val_fraction);
        set(&mut h.min_context, self.min_context);
        if self.resample_negatives {
            h.resample_negatives = true;
        }
    }
}

impl EncoderArgs {
    fn apply(&self, c: &mut Config) -> Result<()> {
        set_opt(&mut c.paths.checkpoint, self.checkpoint.clone());
        set_opt(&mut c.paths.vocab, self.vocab.clone());
        set_opt(&mut c.paths.model, self.model.clone());
        set_opt(&mut c.paths.features, self.features.clone());
        if let Some(name) = &self.score_fn {
            c.score_fn = name.parse()?;
        }
        Ok(())
    }
}

impl Command {
    /// Config with file values, then flag overrides.
    pub fn config(&self) -> Result<Config> {
        let mut c;
        match self {
            Command::BuildCorpus(a) => {
                c = a.common.base()?;
                set_opt(&mut c.paths.input, a.input.clone());
                set_opt(&mut c.corpus.synthetic, a.synthetic);
                set_opt(&mut c.corpus.negatives, a.negatives);
                set(&mut c.hyperparams.min_context, a.min_context);
            }
            Command::Train(a) => {
                c = a.common.base()?;
                a.hyper.apply(&mut c.hyperparams);
                set_opt(&mut c.paths.corpus, a.corpus.clone());
                set_opt(&mut c.paths.checkpoint, a.checkpoint.clone());
            }
            Command::Fit(a) => {
                c = a.common.base()?;
                a.hyper.apply(&mut c.hyperparams);
                a.encoder.apply(&mut c)?;
                set_opt(&mut c.paths.corpus, a.corpus.clone());
                c.report.export_features |= a.export_features;
            }
            Command::Score(a) => {
                c = a.common.base()?;
                a.encoder.apply(&mut c)?;
                set_opt(&mut c.paths.pairs, a.pairs.clone());
                set(&mut c.hyperparams.max_tokens, a.max_tokens);
            }
            Command::Eval(a) => {
                c = a.common.base()?;
                a.encoder.apply(&mut c)?;
                set_opt(&mut c.paths.eval_dataset, a.eval_dataset.clone());
                set_opt(&mut c.paths.scores, a.scores.clone());
                set(&mut c.report.permutations, a.permutations);
                c.report.jitter |= a.jitter;
                set(&mut c.hyperparams.max_tokens, a.max_tokens);
            }
            Command::Probe(a) => {
                c = a.common.base()?;
                a.hyper.apply(&mut c.hyperparams);
                a.encoder.apply(&mut c)?;
                set_opt(&mut c.paths.corpus, a.corpus.clone());
                set_opt(&mut c.report.smoke, a.smoke);
            }
            Command::SelectionMetrics(a) => {
                c = a.common.base()?;
                a.hyper.apply(&mut c.hyperparams);
                a.encoder.apply(&mut c)?;
                set_opt(&mut c.paths.candidates, a.candidates.clone());
                set_opt(&mut c.paths.corpus, a.corpus.clone());
            }
            Command::ExportPlot(a) => {
                c = a.common.base()?;
                set_opt(&mut c.paths.scores, a.scores.clone());
                set(&mut c.report.bins, a.bins);
                c.report.normalize |= a.normalize;
            }
        }
        Ok(c.resolved())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::BuildCorpus(_) => "build-corpus",
            Command::Train(_) => "train",
            Command::Fit(_) => "fit",
            Command::Score(_) => "score",
            Command::Eval(_) => "eval",
            Command::Probe(_) => "probe",
            Command::SelectionMetrics(_) => "selection-metrics",
            Command::ExportPlot(_) => "export-plot",
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return 1;
    }
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

pub fn main() -> i32 {
    run_from(std::env::args_os())
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidInput(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    // A second call in the same process (tests) finds the pool already built.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(command: &Command) -> Result<()> {
    let config = command.config()?;
    config.hyperparams.validate()?;
    let dir = config.output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    eval::write_json(dir.join(format!("{}.config.json", command.name())), &config)?;
    match command {
        Command::BuildCorpus(_) => build_corpus(&config),
        Command::Train(_) => train(&config),
        Command::Fit(_) => fit(&config),
        Command::Score(_) => score(&config),
        Command::Eval(_) => evaluate(&config),
        Command::Probe(_) => probe(&config),
        Command::SelectionMetrics(_) => selection(&config),
        Command::ExportPlot(_) => export_plot(&config),
    }
}

fn require(path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.clone()
        .ok_or_else(|| Error::InvalidInput(format!("missing {what}")))
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{} does not exist", path.display())))
    }
}

fn build_corpus(c: &Config) -> Result<()> {
    let dialogues = match (&c.paths.input, c.corpus.synthetic) {
        (Some(_), Some(_)) => return Err(Error::InvalidInput("give either --input or --synthetic".into())),
        (Some(p), None) => corpus::load_dialogues(p)?,
        (None, Some(0)) => return Err(Error::InvalidInput("--synthetic needs at least 1 dialogue".into())),
        (None, Some(n)) => corpus::synth_corpus(n, c.hyperparams.seed),
        (None, None) => return Err(Error::InvalidInput("missing --input or --synthetic".into())),
    };
    let pairs = corpus::build_pairs(&dialogues, c.hyperparams.min_context)?;
    let sets = corpus::sample_negatives(&pairs, c.negatives(), c.hyperparams.seed)?;
    corpus::save_dialogues(c.corpus_path(), &dialogues)?;
    corpus::save_candidate_sets(c.candidates_path(), &sets)?;
    println!(
        "dialogues={} pairs={} candidate_sets={} set_size={}",
        dialogues.len(),
        pairs.len(),
        sets.len(),
        c.negatives() + 1
    );
    Ok(())
}

fn load_corpus(c: &Config) -> Result<Vec<Dialogue>> {
    let path = c.corpus_path();
    require_file(&path)?;
    corpus::load_dialogues(path)
}

fn train(c: &Config) -> Result<()> {
    let dialogues = load_corpus(c)?;
    let (prep, outcome) = training::train(&dialogues, &c.hyperparams)?;
    for l in &outcome.log {
        println!(
            "epoch={} train_loss={:.6} val_recall_at_1={:.4} val_mrr={:.4}",
            l.epoch, l.train_loss, l.val_recall_at_1, l.val_mrr
        );
    }
    checkpoint::save_checkpoint(c.checkpoint_path(), &outcome.params)?;
    prep.vocab.save(c.vocab_path())?;
    training::write_log(c.output_dir().join("train_log.jsonl"), &outcome.log)?;
    println!(
        "checkpoint={} best_epoch={}",
        c.checkpoint_path().display(),
        outcome.best_epoch.map_or("none".to_string(), |e| e.to_string())
    );
    Ok(())
}

fn load_encoder(c: &Config) -> Result<Encoder> {
    let ckpt = c.checkpoint_path();
    let vocab = c.vocab_path();
    require_file(&ckpt)?;
    require_file(&vocab)?;
    Encoder::new(
        Vocab::load(vocab)?,
        checkpoint::load_checkpoint(ckpt)?,
        c.hyperparams.max_tokens,
    )
}

fn fit(c: &Config) -> Result<()> {
    let (feats, ids) = match &c.paths.features {
        Some(path) => {
            require_file(path)?;
            let feats = features::load_external_features(path)?;
            if c.checkpoint_path().is_file() {
                let params = checkpoint::load_checkpoint(c.checkpoint_path())?;
                if params.dim != feats.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: params.dim,
                        actual: feats.dim(),
                    });
                }
            }
            (feats, None)
        }
        None => {
            let encoder = load_encoder(c)?;
            let prep = training::prepare(&load_corpus(c)?, &c.hyperparams)?;
            let feats = pipeline::encode_pairs(&encoder, &prep.train_pairs)?;
            let ids: Vec<String> = prep.train_pairs.iter().map(|p| p.id.clone()).collect();
            (feats, Some(ids))
        }
    };
    if feats.rows() < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 features, got {}", feats.rows())));
    }
    let model = density::fit(&feats)?;
    density::save_model(&model, c.model_path())?;
    if c.report.export_features {
        let path = c.output_dir().join("features.densf");
        features::save_features(&path, &feats)?;
        if let Some(ids) = ids {
            features::save_feature_ids(&path, &ids)?;
        }
    }
    println!(
        "model={} n_fitted={} dim={}",
        c.model_path().display(),
        model.n_fitted,
        model.dim()
    );
    Ok(())
}

fn load_model(c: &Config) -> Result<GaussianModel> {
    let path = c.model_path();
    require_file(&path)?;
    density::load_model(path)
}

fn density_scorer(c: &Config) -> Result<DensityScorer> {
    DensityScorer::new(load_encoder(c)?, load_model(c)?, c.score_fn)
}

/// Scores every row of a DENSF1 file; the classifier head is unavailable.
fn score_features(model: &GaussianModel, feats: &FeatureMatrix, function: ScoreFunction) -> Result<Vec<f64>> {
    if function == ScoreFunction::Classifier {
        return Err(Error::InvalidInput("classifier scoring needs a checkpoint, not a feature file".into()));
    }
    feats.iter_rows().map(|h| model.score(h, function, None)).collect()
}

fn load_features_for(path: &Path, model: &GaussianModel) -> Result<FeatureMatrix> {
    require_file(path)?;
    let feats = features::load_external_features(path)?;
    if feats.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: feats.dim(),
        });
    }
    Ok(feats)
}

fn score(c: &Config) -> Result<()> {
    let (ids, scores) = match &c.paths.features {
        Some(path) => {
            let model = load_model(c)?;
            let feats = load_features_for(path, &model)?;
            let ids = if features::ids_path(path).is_file() {
                features::load_feature_ids(path)?
            } else {
                (0..feats.rows()).map(|i| i.to_string()).collect()
            };
            if ids.len() != feats.rows() {
                return Err(Error::DimensionMismatch {
                    expected: feats.rows(),
                    actual: ids.len(),
                });
            }
            (ids, score_features(&model, &feats, c.score_fn)?)
        }
        None => {
            let pairs_path = require(&c.paths.pairs, "--pairs")?;
            require_file(&pairs_path)?;
            let pairs = corpus::load_scoring_pairs(&pairs_path)?;
            let scorer = density_scorer(c)?;
            let items: Vec<(Vec<&str>, &str)> = pairs
                .iter()
                .map(|p| (p.context.iter().map(String::as_str).collect(), p.response.as_str()))
                .collect();
            let scores = scorer.score_batch(&items)?;
            (pairs.into_iter().map(|p| p.id).collect(), scores)
        }
    };
    let path = c.output_dir().join("scores.csv");
    write_scores_csv(&path, &ids, &scores)?;
    println!("scored={} file={}", scores.len(), path.display());
    Ok(())
}

pub fn write_scores_csv(path: &Path, ids: &[String], scores: &[f64]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "pair_id,score").map_err(io)?;
    for (id, s) in ids.iter().zip(scores) {
        writeln!(w, "{id},{s}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads the score column of a `pair_id,score` CSV.
pub fn read_scores_csv(path: &Path) -> Result<Vec<f64>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (_, v) = line
            .rsplit_once(',')
            .ok_or_else(|| parse_err(i + 1, "expected pair_id,score".into()))?;
        let v: f64 = v.trim().parse().map_err(|e| parse_err(i + 1, format!("{e}")))?;
        if !v.is_finite() {
            return Err(parse_err(i + 1, "non-finite score".into()));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Ok(out)
}

fn evaluate(c: &Config) -> Result<()> {
    let path = require(&c.paths.eval_dataset, "--eval-dataset")?;
    require_file(&path)?;
    let examples = corpus::load_eval_dataset(&path)?;
    let metric = match (&c.paths.scores, &c.paths.features) {
        (Some(spath), _) => {
            require_file(spath)?;
            let scores = read_scores_csv(spath)?;
            if scores.len() != examples.len() {
                return Err(Error::DimensionMismatch {
                    expected: examples.len(),
                    actual: scores.len(),
                });
            }
            scores
        }
        (None, Some(fpath)) => {
            let model = load_model(c)?;
            let feats = load_features_for(fpath, &model)?;
            if feats.rows() != examples.len() {
                return Err(Error::DimensionMismatch {
                    expected: examples.len(),
                    actual: feats.rows(),
                });
            }
            score_features(&model, &feats, c.score_fn)?
        }
        (None, None) => {
            let scorer = density_scorer(c)?;
            let items: Vec<(Vec<&str>, &str)> = examples
                .iter()
                .map(|e| {
                    (
                        e.context.iter().map(String::as_str).collect(),
                        e.system_response.as_str(),
                    )
                })
                .collect();
            scorer.score_batch(&items)?
        }
    };
    let human: Vec<f64> = examples.iter().map(|e| e.human_score).collect();
    let seed = c.hyperparams.seed;
    let report = if c.report.permutations > 0 {
        eval::correlate_with_significance(&metric, &human, c.report.permutations, seed)?
    } else {
        eval::correlate_scores(&metric, &human)?
    };
    eval::write_json(c.output_dir().join("eval_report.json"), &report)?;
    let jitter = c.report.jitter.then(|| seed_u64(seed, Stream::Jitter));
    let points = eval::scatter_points(&human, &metric, jitter)?;
    eval::write_scatter_csv(c.output_dir().join("scatter.csv"), &points)?;
    println!(
        "n={} pearson_r={:.6} spearman_rho={:.6}",
        report.n, report.pearson_r, report.spearman_rho
    );
    Ok(())
}

fn seed_u64(seed: u64, stream: Stream) -> u64 {
    use rand::RngCore;
    seed::rng(seed, stream, 0).next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbeOutput {
    Trained {
        density: eval::ProbeReport,
        classifier: eval::ProbeReport,
    },
    Smoke {
        smoke: Smoke,
        report: eval::ProbeReport,
    },
}

fn probe(c: &Config) -> Result<()> {
    let dialogues = load_corpus(c)?;
    let prep = training::prepare(&dialogues, &c.hyperparams)?;
    let all = corpus::build_pairs(&dialogues, c.hyperparams.min_context)?;
    let seed = seed_u64(c.hyperparams.seed, Stream::Adversarial);
    let out = match c.report.smoke {
        Some(smoke) => {
            let probes = ProbeSet::build(&prep.val_pairs, &all, seed)?;
            let report = match smoke {
                Smoke::Constant => eval::probe_accuracy(&probes.examples, &|_: &[&str], _: &str| 0.0)?,
                Smoke::Oracle => {
                    let answers: HashSet<(Vec<String>, &str)> = probes
                        .examples
                        .iter()
                        .map(|e| (e.context.clone(), e.answer.as_str()))
                        .collect();
                    let oracle = |ctx: &[&str], r: &str| {
                        let key: Vec<String> = ctx.iter().map(|s| s.to_string()).collect();
                        f64::from(answers.contains(&(key, r)))
                    };
                    eval::probe_accuracy(&probes.examples, &oracle)?
                }
            };
            ProbeOutput::Smoke { smoke, report }
        }
        None => {
            let scorer = density_scorer(c)?;
            let (density, classifier) = pipeline::probe_both(&scorer, &prep.val_pairs, &all, seed)?;
            ProbeOutput::Trained { density, classifier }
        }
    };
    eval::write_json(c.output_dir().join("probe_report.json"), &out)?;
    println!("{}", serde_json::to_string(&out).expect("serializable"));
    Ok(())
}

fn selection(c: &Config) -> Result<()> {
    let sets: Vec<CandidateSet> = match &c.paths.candidates {
        Some(p) if p.is_file() => corpus::load_candidate_sets(p)?,
        _ => training::prepare(&load_corpus(c)?, &c.hyperparams)?.val_sets,
    };
    let scorer = density_scorer(c)?;
    let report = eval::selection_metrics(&sets, &scorer)?;
    eval::write_json(c.output_dir().join("selection_report.json"), &report)?;
    println!("n={} recall_at_1={:.6} mrr={:.6}", report.n, report.recall_at_1, report.mrr);
    Ok(())
}

fn export_plot(c: &Config) -> Result<()> {
    let path = require(&c.paths.scores, "--scores")?;
    require_file(&path)?;
    let mut scores = read_scores_csv(&path)?;
    if c.report.normalize {
        scores = eval::normalize_scores(&scores)?;
    }
    let hist = eval::histogram(&scores, c.report.bins)?;
    let out = c.output_dir().join("histogram.csv");
    eval::write_histogram_csv(&out, &hist)?;
    println!("bins={} n={} file={}", c.report.bins, scores.len(), out.display());
    Ok(())
}
