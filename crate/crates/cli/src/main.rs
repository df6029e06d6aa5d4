use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use segcrf::eval::{format_table, EvalReport};
use segcrf::ModelKind;
use segcrf_cli::{
    cmd_bench, cmd_eval, cmd_eval_model, cmd_ingest, cmd_predict, cmd_train, format_stats, sweep_csv, BenchOptions,
    CliError, InputFormat, RunConfig,
};

#[derive(Parser)]
#[command(name = "segcrf", version, about = "Linear, semi-Markov and weak semi-Markov CRF chunkers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Convert BRAT or JSON-lines annotations to the canonical dataset and print statistics.
    Ingest {
        input: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model (tuning lambda on dev data when a grid is given).
    Train(RunArgs),
    /// Predict spans for JSON-lines messages or plain text lines.
    Predict {
        #[arg(long)]
        model_file: PathBuf,
        input: PathBuf,
        /// `jsonl` or `text` (one message per line).
        #[arg(long, default_value = "jsonl")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against gold data, or a model on test data.
    Eval {
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long, requires = "gold")]
        predicted: Option<PathBuf>,
        #[arg(long, conflicts_with = "predicted")]
        model_file: Option<PathBuf>,
        #[arg(long, requires = "model_file")]
        test: Option<PathBuf>,
        /// `text` or `json`.
        #[arg(long, default_value = "text")]
        format: String,
    },
    /// Time objective and gradient evaluation per model.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "linear,semi,weak")]
        models: String,
        #[arg(long, default_value_t = 2000)]
        sentences: usize,
        #[arg(long, default_value_t = 20)]
        length: usize,
        #[arg(long, default_value_t = 5)]
        iterations: usize,
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        /// Segment alphabet sizes for the sweep, e.g. `2,4,8,16`.
        #[arg(long)]
        sweep: Option<String>,
        /// `text` or `json`.
        #[arg(long, default_value = "text")]
        format: String,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// Flat `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    brown: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `linear`, `semi` or `weak`.
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated flags from `a`, `b`, `s`.
    #[arg(long)]
    features: Option<String>,
    #[arg(long, conflicts_with = "lambda_grid")]
    lambda: Option<f64>,
    /// Values to tune over; the standard grid when given without a value.
    #[arg(long, num_args = 0..=1, default_missing_value = "default")]
    lambda_grid: Option<String>,
    #[arg(long)]
    max_seg_len: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let overrides = [
            ("train", path(&self.train)),
            ("dev", path(&self.dev)),
            ("test", path(&self.test)),
            ("brown", path(&self.brown)),
            ("out", path(&self.out)),
            ("model", self.model.clone()),
            ("features", self.features.clone()),
            ("lambda", self.lambda.map(|v| v.to_string())),
            ("lambda_grid", self.lambda_grid.clone()),
            ("max_seg_len", self.max_seg_len.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("threads", self.threads.map(|v| v.to_string())),
            ("max_iterations", self.max_iterations.map(|v| v.to_string())),
            ("tolerance", self.tolerance.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(value) = value {
                config.set(key, &value)?;
            }
        }
        if self.lambda.is_some() {
            config.lambda_grid = None;
        }
        Ok(config)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn write_out(path: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, content).map_err(|source| CliError::Output {
            path: p.display().to_string(),
            source,
        }),
        None => io::stdout().write_all(content.as_bytes()).map_err(|source| CliError::Output {
            path: "stdout".into(),
            source,
        }),
    }
}

fn report_json(rows: &[(String, EvalReport, EvalReport)]) -> String {
    let value: Vec<_> = rows
        .iter()
        .map(|(name, c, w)| serde_json::json!({ "system": name, "char": c, "word": w }))
        .collect();
    serde_json::to_string_pretty(&value).expect("reports serialize") + "\n"
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { input, format, out } => {
            let format: InputFormat = format.parse()?;
            let stats = cmd_ingest(&input, format, &out)?;
            print!("{}", format_stats(&stats));
        }
        Command::Train(args) => {
            let config = args.resolve()?;
            let mut log = io::stderr();
            let model = cmd_train(&config, &mut log)?;
            eprintln!(
                "saved {} model ({} features, lambda {}, {} iterations) to {}",
                model.kind,
                model.weights.len(),
                model.meta.lambda,
                model.meta.iterations,
                config.out.as_ref().expect("validated").display()
            );
        }
        Command::Predict {
            model_file,
            input,
            format,
            out,
        } => {
            let plain = match format.as_str() {
                "jsonl" => false,
                "text" => true,
                other => return Err(usage(format!("unknown input format {other:?}"))),
            };
            let mut buf = Vec::new();
            cmd_predict(&model_file, &input, plain, &mut buf)?;
            write_out(&out, &String::from_utf8(buf).expect("JSON is UTF-8"))?;
        }
        Command::Eval {
            gold,
            predicted,
            model_file,
            test,
            format,
        } => {
            let rows = match (gold, predicted, model_file, test) {
                (Some(g), Some(p), None, None) => {
                    let (c, w) = cmd_eval(&g, &p)?;
                    vec![("system".to_string(), c, w)]
                }
                (None, None, Some(m), Some(t)) => cmd_eval_model(&m, &t)?,
                _ => return Err(usage("give either --gold and --predicted, or --model-file and --test")),
            };
            match format.as_str() {
                "text" => print!("{}", format_table(&rows)),
                "json" => print!("{}", report_json(&rows)),
                other => return Err(usage(format!("unknown output format {other:?}"))),
            }
        }
        Command::Bench {
            run,
            models,
            sentences,
            length,
            iterations,
            warmup,
            sweep,
            format,
        } => {
            let config = run.resolve()?;
            let models = models
                .split(',')
                .map(|m| m.trim().parse::<ModelKind>())
                .collect::<Result<Vec<_>, _>>()?;
            let sweep = match sweep {
                Some(s) => s
                    .split(',')
                    .map(|v| v.trim().parse::<usize>().map_err(|_| usage(format!("bad sweep value {v:?}"))))
                    .collect::<Result<Vec<_>, _>>()?,
                None => vec![],
            };
            let options = BenchOptions {
                models,
                sentences,
                length,
                iterations,
                warmup,
                sweep,
            };
            let (report, rows) = cmd_bench(&config, &options)?;
            match format.as_str() {
                "text" => print!("{}", report.to_text()),
                "json" => println!(
                    "{}",
                    serde_json::to_string_pretty(&serde_json::json!({ "bench": report, "sweep": rows }))
                        .expect("reports serialize")
                ),
                other => return Err(usage(format!("unknown output format {other:?}"))),
            }
            if !rows.is_empty() {
                write_out(&config.out, &sweep_csv(&rows))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
