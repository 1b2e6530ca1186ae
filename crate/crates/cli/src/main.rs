use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use outlying_core::error::ErrorKind;
use outlying_core::pipeline::analyze_all_timed;
use outlying_core::runner::{bench_dataset, DEFAULT_REPEATS};
use outlying_core::{
    analyze_all, parse_dataset, Analysis, AnalysisConfig, InputFormat, RankAggregate,
    TemporalBivariateDataset,
};
use outlying_service::{cors, router, AppState, Session};
use tracing::info;

const EXIT_IO: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "outlying", version, about = "Leave-one-out outlying signatures for temporal scatterplots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyze a dataset and write the result document.
    Compute(ComputeArgs),
    /// Serve results over HTTP.
    Serve(ServeArgs),
    /// Time the analysis for several worker counts.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Long CSV (`instance,time,x,y`) or wide JSON dataset.
    #[arg(long)]
    input: PathBuf,
    /// Input format; inferred from the file extension when omitted.
    #[arg(long)]
    format: Option<InputFormat>,
}

#[derive(Debug, Args)]
struct AnalysisArgs {
    #[arg(long, default_value_t = 1.5)]
    iqr_factor: f64,
    #[arg(long, default_value_t = 50)]
    bin_min: usize,
    #[arg(long, default_value_t = 250)]
    bin_max: usize,
    #[arg(long, default_value_t = RankAggregate::Max, value_parser = parse_aggregate)]
    rank_agg: RankAggregate,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
}

fn parse_aggregate(s: &str) -> Result<RankAggregate, String> {
    s.parse()
}

impl AnalysisArgs {
    fn config(&self, workers: usize) -> Result<AnalysisConfig, Failure> {
        let config = AnalysisConfig {
            iqr_factor: self.iqr_factor,
            bin_min: self.bin_min,
            bin_max: self.bin_max,
            workers,
            rank_agg: self.rank_agg,
            top_k: self.top_k,
        };
        config.validate().map_err(|e| Failure::new(EXIT_VALIDATION, e))?;
        let resolved = config.resolved_workers();
        info!(workers = resolved, requested = workers, "worker pool size");
        Ok(config.with_workers(resolved))
    }
}

#[derive(Debug, Args)]
struct ComputeArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Result file; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads; 0 uses every available core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[command(flatten)]
    analysis: AnalysisArgs,
    /// Embed per-stage timings (and the resolved worker count) in the output.
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Precomputed result file for `--input`; computed at startup when omitted.
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Origin allowed by CORS; any origin when omitted.
    #[arg(long)]
    cors_origin: Option<String>,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[command(flatten)]
    analysis: AnalysisArgs,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Comma-separated worker counts; defaults to 1 and every available core.
    #[arg(long, value_delimiter = ',')]
    workers: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    repeats: usize,
    /// Report path stem; writes `<stem>.csv` and `<stem>.json`.
    #[arg(long, default_value = "bench")]
    output: PathBuf,
    #[command(flatten)]
    analysis: AnalysisArgs,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code,
            error: error.into(),
        }
    }

    fn io(path: &Path, error: std::io::Error) -> Self {
        Self::new(EXIT_IO, anyhow!("{}: {error}", path.display()))
    }
}

impl From<outlying_core::Error> for Failure {
    fn from(e: outlying_core::Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Io => EXIT_IO,
            ErrorKind::Validation => EXIT_VALIDATION,
            ErrorKind::Internal => EXIT_INTERNAL,
        };
        Failure::new(code, e)
    }
}

fn load_dataset(args: &InputArgs) -> Result<TemporalBivariateDataset, Failure> {
    let file = File::open(&args.input).map_err(|e| Failure::io(&args.input, e))?;
    let format = args.format.unwrap_or_else(|| InputFormat::from_path(&args.input));
    let (dataset, report) = parse_dataset(BufReader::new(file), format).map_err(|e| {
        let f = Failure::from(outlying_core::Error::from(e));
        Failure::new(f.code, f.error.context(args.input.display().to_string()))
    })?;
    info!(
        path = %args.input.display(),
        records = report.records,
        samples = report.samples,
        dropped = report.dropped,
        instances = dataset.instance_count(),
        timesteps = dataset.timestep_count(),
        "dataset loaded"
    );
    Ok(dataset)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::io(path, e))
}

fn compute(args: ComputeArgs) -> Result<(), Failure> {
    let config = args.analysis.config(args.workers)?;
    let dataset = load_dataset(&args.input)?;
    let analysis = if args.timings {
        analyze_all_timed(&dataset, &config)?.0
    } else {
        analyze_all(&dataset, &config)?
    };
    let json = analysis
        .to_json()
        .map_err(|e| Failure::new(EXIT_INTERNAL, e))?;
    match &args.output {
        Some(path) => {
            write_file(path, &json)?;
            info!(path = %path.display(), hash = %analysis.result_hash(), "results written");
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(json.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Failure::io(Path::new("<stdout>"), e))?;
        }
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), Failure> {
    let config = args.analysis.config(args.workers)?;
    let dataset = load_dataset(&args.input)?;
    let session = match &args.results {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
            let analysis = Analysis::from_json(&text)
                .map_err(|e| Failure::new(EXIT_VALIDATION, anyhow!("{}: {e}", path.display())))?;
            Session::from_results(dataset, analysis, config.workers)
                .map_err(|e| Failure::new(EXIT_VALIDATION, e))?
        }
        None => Session::compute(dataset, &config).map_err(|e| match e {
            outlying_service::SessionError::Analysis(e) => Failure::from(e),
            other => Failure::new(EXIT_INTERNAL, other),
        })?,
    };
    info!(hash = %session.result_hash(), "session ready");
    let origin = args
        .cors_origin
        .as_deref()
        .map(|o| o.parse().map_err(|_| Failure::new(EXIT_VALIDATION, anyhow!("invalid CORS origin `{o}`"))))
        .transpose()?;
    let state = AppState::new(config, Some(session));
    let app = router(state, cors(origin));

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::new(EXIT_INTERNAL, e))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
            .await
            .map_err(|e| Failure::new(EXIT_IO, anyhow!("cannot bind {}:{}: {e}", args.host, args.port)))?;
        outlying_service::serve(listener, app)
            .await
            .map_err(|e| Failure::new(EXIT_IO, e))
    })
}

fn bench(args: BenchArgs) -> Result<(), Failure> {
    let config = args.analysis.config(1)?;
    if args.repeats == 0 {
        return Err(Failure::new(EXIT_VALIDATION, anyhow!("--repeats must be at least 1")));
    }
    if args.workers.contains(&0) {
        return Err(Failure::new(EXIT_VALIDATION, anyhow!("worker counts must be at least 1")));
    }
    let workers = if args.workers.is_empty() {
        let mut w = vec![1, outlying_core::config::hardware_concurrency()];
        w.dedup();
        w
    } else {
        args.workers.clone()
    };
    let dataset = load_dataset(&args.input)?;
    let report = bench_dataset(&dataset, &config, &workers, args.repeats)?;
    if !report.hashes_match {
        return Err(Failure::new(EXIT_INTERNAL, anyhow!("timed runs produced different results")));
    }
    for row in &report.rows {
        info!(workers = row.workers, mean_ms = row.mean_ms, speedup = row.speedup, "bench");
    }
    let mut csv = args.output.clone().into_os_string();
    csv.push(".csv");
    let mut json = args.output.into_os_string();
    json.push(".json");
    write_file(Path::new(&csv), &report.to_csv())?;
    write_file(Path::new(&json), &report.to_json())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();

    let outcome = match cli.command {
        Command::Compute(a) => compute(a),
        Command::Serve(a) => serve(a),
        Command::Bench(a) => bench(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
