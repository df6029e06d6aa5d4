//! Commands behind the `segcrf` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use segcrf::corpus::{self, CorpusStats, Dataset, Document, Split};
use segcrf::eval::{self, BenchReport, EvalReport, Level, SweepRow};
use segcrf::features::{BrownClusterMap, FeatureConfig};
use segcrf::text::{char_spans_to_word_spans, tokenize, CharSpan, WordSpan};
use segcrf::training::{self, TrainConfig, LAMBDA_GRID};
use segcrf::{synth, Model, ModelKind};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] segcrf::Error),
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: std::io::Error },
}

impl CliError {
    /// 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(segcrf::Error::Config(_)) => 1,
            CliError::Core(_) | CliError::Output { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn out_err(path: impl AsRef<Path>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.as_ref().display().to_string();
    move |source| CliError::Output { path, source }
}

/// Settings of a run, read from a flat `key = value` file and overridden by
/// command-line flags with the same names.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub brown: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: ModelKind,
    pub features: FeatureConfig,
    pub lambda: f64,
    pub lambda_grid: Option<Vec<f64>>,
    pub seed: u64,
    pub threads: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: None,
            dev: None,
            test: None,
            brown: None,
            out: None,
            model: ModelKind::Weak,
            features: FeatureConfig::default(),
            lambda: 1.0,
            lambda_grid: None,
            seed: 42,
            threads: 1,
            max_iterations: 500,
            tolerance: 1e-6,
        }
    }
}

pub const CONFIG_KEYS: [&str; 14] = [
    "train",
    "dev",
    "test",
    "brown",
    "out",
    "model",
    "features",
    "lambda",
    "lambda_grid",
    "max_seg_len",
    "seed",
    "threads",
    "max_iterations",
    "tolerance",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| usage(format!("invalid value {value:?} for {key}")))
}

pub fn parse_grid(value: &str) -> Result<Vec<f64>> {
    if value.trim().is_empty() || value.trim() == "default" {
        return Ok(LAMBDA_GRID.to_vec());
    }
    value.split(',').map(|v| parse_num("lambda_grid", v.trim())).collect()
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("{}:{}: expected key = value", path.display(), lineno + 1)))?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| usage(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        }
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "train" => self.train = Some(value.into()),
            "dev" => self.dev = Some(value.into()),
            "test" => self.test = Some(value.into()),
            "brown" => self.brown = Some(value.into()),
            "out" => self.out = Some(value.into()),
            "model" => self.model = value.parse().map_err(|e: segcrf::Error| usage(e.to_string()))?,
            "features" => self.features = self.features.clone().with_flags(value)?,
            "lambda" => self.lambda = parse_num(key, value)?,
            "lambda_grid" => self.lambda_grid = Some(parse_grid(value)?),
            "max_seg_len" => self.features.max_segment_len = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "threads" => self.threads = parse_num(key, value)?,
            "max_iterations" => self.max_iterations = parse_num(key, value)?,
            "tolerance" => self.tolerance = parse_num(key, value)?,
            other => return Err(usage(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            model_kind: self.model,
            lambda: self.lambda,
            features: self.features.clone(),
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            history: 10,
            threads: self.threads.max(1),
        }
    }

    /// Checks everything a training run needs before any work starts.
    pub fn validate_for_training(&self) -> Result<()> {
        self.train_config().validate()?;
        if self.threads == 0 {
            return Err(usage("threads must be at least 1"));
        }
        let train = self.train.as_ref().ok_or_else(|| usage("no training data given (--train)"))?;
        require_file(train, "training data")?;
        if self.out.is_none() {
            return Err(usage("no model output path given (--out)"));
        }
        if let Some(grid) = &self.lambda_grid {
            if grid.is_empty() || grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
                return Err(usage("lambda grid values must be positive"));
            }
            let dev = self.dev.as_ref().ok_or_else(|| usage("a lambda grid needs dev data (--dev)"))?;
            require_file(dev, "dev data")?;
        } else if let Some(dev) = &self.dev {
            require_file(dev, "dev data")?;
        }
        match (&self.brown, self.features.use_brown) {
            (None, true) => return Err(usage("feature flag b needs a cluster file (--brown)")),
            (Some(path), true) => require_file(path, "Brown cluster file")?,
            _ => {}
        }
        Ok(())
    }

    pub fn load_brown(&self) -> Result<Option<BrownClusterMap>> {
        match (&self.brown, self.features.use_brown) {
            (Some(path), true) => Ok(Some(BrownClusterMap::load(path)?)),
            _ => Ok(None),
        }
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() || path.is_dir() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Brat,
    Jsonl,
}

impl FromStr for InputFormat {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brat" => Ok(InputFormat::Brat),
            "jsonl" => Ok(InputFormat::Jsonl),
            other => Err(usage(format!("unknown format {other:?} (expected brat or jsonl)"))),
        }
    }
}

pub fn format_stats(stats: &CorpusStats) -> String {
    format!(
        "messages\t{}\nNPs\t{}\nimproper NPs\t{} ({:.1}%)\ntokens\t{}\n",
        stats.messages,
        stats.spans,
        stats.improper,
        stats.improper_percent(),
        stats.tokens
    )
}

/// Reads BRAT standoff files (a directory or one pair) or JSON lines,
/// writes the canonical JSON-lines dataset and returns its statistics.
pub fn cmd_ingest(input: &Path, format: InputFormat, out: &Path) -> Result<CorpusStats> {
    if !input.exists() && !(format == InputFormat::Brat && input.with_extension("ann").is_file()) {
        return Err(usage(format!("input {} does not exist", input.display())));
    }
    let mut docs = match format {
        InputFormat::Jsonl => corpus::read_jsonl(input)?,
        InputFormat::Brat if input.is_dir() => corpus::read_brat_dir(input)?,
        InputFormat::Brat => vec![corpus::read_brat_pair(input)?],
    };
    for doc in &mut docs {
        doc.spans.sort();
    }
    let dataset = Dataset::from_documents(Split::Train, &docs)?;
    corpus::write_jsonl(out, &docs)?;
    Ok(dataset.stats())
}

fn load_split(path: &Path, split: Split) -> Result<Dataset> {
    Ok(Dataset::load_jsonl(path, split)?)
}

pub fn format_eval_row(name: &str, report: &EvalReport) -> String {
    format!(
        "{name}\t{}\tP={:.2}\tR={:.2}\tF={:.2}\ttp={}\tfp={}\tfn={}",
        report.level,
        100.0 * report.precision,
        100.0 * report.recall,
        100.0 * report.f1,
        report.tp,
        report.fp,
        report.fn_
    )
}

/// Trains at the configured lambda, or tunes over the grid on dev data,
/// then saves the model. Progress lines go to `log`.
pub fn cmd_train(config: &RunConfig, log: &mut dyn Write) -> Result<Model> {
    config.validate_for_training()?;
    let train_path = config.train.as_ref().expect("validated");
    let out = config.out.as_ref().expect("validated");
    let train_set = load_split(train_path, Split::Train)?;
    let dev_set = config.dev.as_ref().map(|p| load_split(p, Split::Dev)).transpose()?;
    let brown = config.load_brown()?;
    let train_config = config.train_config();

    let model = match &config.lambda_grid {
        Some(grid) => {
            let dev_set = dev_set.as_ref().expect("validated");
            let tuning = training::tune_lambda(&train_set, dev_set, &train_config, grid, brown.as_ref())?;
            for r in &tuning.reports {
                writeln!(
                    log,
                    "dev lambda={}\t{}\t{}",
                    r.lambda,
                    format_eval_row("", &r.char_level).trim_start(),
                    format_eval_row("", &r.word_level).trim_start()
                )
                .map_err(out_err("log"))?;
            }
            writeln!(log, "best lambda={}", tuning.best_lambda).map_err(out_err("log"))?;
            tuning.model
        }
        None => {
            let mut write_error = None;
            writeln!(log, "iter, objective, grad_norm, seconds").map_err(out_err("log"))?;
            let model = training::train_with_log(&train_set, &train_config, brown.as_ref(), |r| {
                if let Err(e) = writeln!(log, "{}, {:.9}, {:.6e}, {:.6}", r.iteration, -r.value, r.grad_norm, r.seconds) {
                    write_error.get_or_insert(e);
                }
            })?;
            if let Some(e) = write_error {
                return Err(out_err("log")(e));
            }
            if let Some(dev_set) = &dev_set {
                let (c, w) = eval::evaluate_model(&model, dev_set)?;
                writeln!(log, "{}", format_eval_row("dev", &c)).map_err(out_err("log"))?;
                writeln!(log, "{}", format_eval_row("dev", &w)).map_err(out_err("log"))?;
            }
            model
        }
    };
    model.save(out)?;
    Ok(model)
}

/// Predicts spans for every message of a JSON-lines file (gold spans, if
/// present, are ignored) or of a plain text file with one message per line.
pub fn cmd_predict(model_path: &Path, input: &Path, plain_text: bool, out: &mut dyn Write) -> Result<usize> {
    require_file(model_path, "model file")?;
    require_file(input, "input")?;
    let model = Model::load(model_path)?;
    let docs: Vec<Document> = if plain_text {
        fs::read_to_string(input)
            .map_err(|e| segcrf::Error::Io {
                path: input.to_path_buf(),
                source: e,
            })?
            .lines()
            .enumerate()
            .map(|(i, line)| Document {
                id: Some(i.to_string()),
                text: line.to_string(),
                spans: vec![],
            })
            .collect()
    } else {
        corpus::read_jsonl(input)?
    };
    for doc in &docs {
        let sentence = tokenize(&doc.text);
        let predicted = Document {
            id: doc.id.clone(),
            text: doc.text.clone(),
            spans: model.predict_chars(&sentence)?,
        };
        serde_json::to_writer(&mut *out, &predicted).map_err(|e| usage(e.to_string()))?;
        writeln!(out).map_err(out_err("output"))?;
    }
    Ok(docs.len())
}

/// Scores predicted documents against gold documents, both as JSON lines
/// in the same message order.
pub fn cmd_eval(gold: &Path, predicted: &Path) -> Result<(EvalReport, EvalReport)> {
    require_file(gold, "gold data")?;
    require_file(predicted, "predictions")?;
    let gold_docs = corpus::read_jsonl(gold)?;
    let pred_docs = corpus::read_jsonl(predicted)?;
    if gold_docs.len() != pred_docs.len() {
        return Err(segcrf::Error::DimensionMismatch {
            expected: gold_docs.len(),
            actual: pred_docs.len(),
        }
        .into());
    }
    let mut gold_chars: Vec<Vec<CharSpan>> = Vec::with_capacity(gold_docs.len());
    let mut pred_chars = Vec::with_capacity(gold_docs.len());
    let mut gold_words: Vec<Vec<WordSpan>> = Vec::with_capacity(gold_docs.len());
    let mut pred_words = Vec::with_capacity(gold_docs.len());
    for (i, (g, p)) in gold_docs.iter().zip(&pred_docs).enumerate() {
        if g.text != p.text {
            return Err(segcrf::Error::Parse {
                context: predicted.display().to_string(),
                line: i + 1,
                message: "message text differs from the gold file".into(),
            }
            .into());
        }
        let sentence = tokenize(&g.text);
        let mut gs = g.spans.clone();
        gs.sort();
        let mut ps = p.spans.clone();
        ps.sort();
        gold_words.push(char_spans_to_word_spans(&sentence, &gs)?);
        pred_words.push(char_spans_to_word_spans(&sentence, &ps)?);
        gold_chars.push(gs);
        pred_chars.push(ps);
    }
    Ok((
        eval::score_corpus(&gold_chars, &pred_chars, Level::Char)?,
        eval::score_corpus(&gold_words, &pred_words, Level::Word)?,
    ))
}

/// Scores a saved model on a dataset, with the gold upper bound for comparison.
pub fn cmd_eval_model(model_path: &Path, data: &Path) -> Result<Vec<(String, EvalReport, EvalReport)>> {
    require_file(model_path, "model file")?;
    require_file(data, "test data")?;
    let model = Model::load(model_path)?;
    let dataset = load_split(data, Split::Test)?;
    let (c, w) = eval::evaluate_model(&model, &dataset)?;
    let (gc, gw) = eval::gold_upper_bound(&dataset)?;
    let name = format!("{} {}", model.kind, model.features.flag_name());
    Ok(vec![("Gold".to_string(), gc, gw), (name, c, w)])
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub models: Vec<ModelKind>,
    pub sentences: usize,
    pub length: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub sweep: Vec<usize>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            models: ModelKind::ALL.to_vec(),
            sentences: 2000,
            length: 20,
            iterations: 5,
            warmup: 1,
            sweep: vec![],
        }
    }
}

/// Times the models on the training data of `config`, or on a synthetic
/// corpus with one chunk label when no data is given, and optionally runs
/// the label-count sweep.
pub fn cmd_bench(config: &RunConfig, options: &BenchOptions) -> Result<(BenchReport, Vec<SweepRow>)> {
    if options.iterations == 0 || options.models.is_empty() {
        return Err(usage("benchmark needs at least one model and one iteration"));
    }
    if config.features.use_brown {
        return Err(usage("benchmarks run without Brown cluster features"));
    }
    config.features.validate()?;
    let dataset = match &config.train {
        Some(path) => {
            require_file(path, "benchmark data")?;
            load_split(path, Split::Train)?
        }
        None => synth::timing_corpus(options.sentences, options.length, 1, config.features.max_segment_len, config.seed),
    };
    let report = eval::benchmark_training(&dataset, &options.models, &config.features, options.iterations, options.warmup)?;
    let rows = if options.sweep.is_empty() {
        vec![]
    } else {
        eval::benchmark_sweep(
            &options.models,
            &options.sweep,
            options.sentences,
            options.length,
            config.features.max_segment_len,
            options.iterations,
            config.seed,
        )?
    };
    Ok((report, rows))
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(eval::SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}
