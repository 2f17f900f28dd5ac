mod cmd;
mod fileconf;
mod render;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use turbotopics::{BenchConfig, Error, GrowthConfig, LdaConfig};

use cmd::{BenchParams, GrowParams, LdaFitParams, ReportFormat, SimulateParams};
use fileconf::FileConf;

/// Exit codes: 0 success, 1 usage error, 2 data error.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Data(msg) => f.write_str(msg),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::UnknownMethod { .. } | Error::TopicOutOfRange { .. } => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "turbotopics", version, about = "Phrase discovery for unigram topic models")]
struct Cli {
    /// Flat TOML file supplying defaults for any flag; flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for permutation replicates and per-topic growth.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a topic model by collapsed Gibbs sampling and write per-token
    /// topic annotations.
    LdaFit(LdaFitArgs),
    /// Grow significant multiword phrases per topic from an annotated corpus.
    Grow(GrowArgs),
    /// Generate a synthetic word stream with planted bigrams.
    Simulate(SimulateArgs),
    /// Score collocation tests against synthetic corpora on a parameter grid.
    Bench(BenchArgs),
    /// Render grown phrases beside their unigram baselines.
    Report(ReportArgs),
    /// Re-execute the command recorded in an artifact's manifest.
    Rerun(RerunArgs),
}

#[derive(Args)]
struct LdaFitArgs {
    /// Corpus file, one document per line.
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Annotation output: JSON lines with a leading manifest comment.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Optional model summary output (JSON).
    #[arg(long, value_name = "FILE")]
    model_out: Option<PathBuf>,
    #[arg(long, value_name = "K")]
    topics: Option<usize>,
    /// Dirichlet prior on per-document topic proportions; defaults to 50/K.
    #[arg(long)]
    alpha: Option<f64>,
    /// Dirichlet prior on per-topic word distributions.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    sweeps: Option<u32>,
    /// Sweeps discarded before assignments are tallied.
    #[arg(long)]
    burn_in: Option<u32>,
    /// Keep terms appearing in at least this many documents.
    #[arg(long)]
    min_doc_freq: Option<usize>,
    /// Stop-word list, one word per line.
    #[arg(long, value_name = "FILE")]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GrowArgs {
    /// Annotated corpus from lda-fit.
    #[arg(long, value_name = "FILE")]
    annotation: PathBuf,
    /// Phrase report output (JSON).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Topic count; inferred from the annotation when omitted.
    #[arg(long, value_name = "K")]
    topics: Option<usize>,
    #[arg(long)]
    p_threshold: Option<f64>,
    /// Permutations per significance test.
    #[arg(long)]
    permutations: Option<u32>,
    #[arg(long)]
    max_phrase_len: Option<usize>,
    /// Candidate n-grams below this count are never tested.
    #[arg(long)]
    min_count: Option<u32>,
    /// Top-ranked topic words used as growth seeds.
    #[arg(long)]
    top_seed_words: Option<usize>,
    /// Unigrams per topic in the baseline column.
    #[arg(long)]
    baseline_top: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Synthetic corpus output (JSON).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long)]
    n_tokens: Option<usize>,
    /// New-type rate of the type-generating process.
    #[arg(long)]
    crp_alpha: Option<f64>,
    /// Probability that a fresh type is a two-word collocation.
    #[arg(long)]
    beta_bigram: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    /// Per-replication grid output (CSV).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Mean-aggregated output; defaults to <out>.summary.csv.
    #[arg(long, value_name = "FILE")]
    summary_out: Option<PathBuf>,
    /// Comma-separated method ids; defaults to all methods.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Comma-separated corpus sizes in tokens.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Comma-separated significance thresholds.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// Independent corpora per (size, threshold) cell.
    #[arg(long)]
    replications: Option<u32>,
    #[arg(long)]
    permutations: Option<u32>,
    #[arg(long)]
    min_count: Option<u32>,
    #[arg(long)]
    crp_alpha: Option<f64>,
    #[arg(long)]
    beta_bigram: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Phrase report artifact from grow.
    #[arg(long, value_name = "FILE")]
    reports: PathBuf,
    /// Rendered output; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<ReportFormat>,
}

#[derive(Args)]
struct RerunArgs {
    /// Artifact whose embedded manifest should be re-executed.
    #[arg(long, value_name = "FILE")]
    artifact: PathBuf,
}

fn path_string(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

fn resolve_seed(flag: Option<u64>, conf: &FileConf) -> Result<u64, CliError> {
    match flag.or(conf.u64_("seed")?) {
        Some(seed) => Ok(seed),
        None => {
            let seed = cmd::generated_seed();
            log::info!("no seed given; generated {seed} (recorded in the manifest)");
            Ok(seed)
        }
    }
}

fn resolve_lda_fit(args: LdaFitArgs, conf: &FileConf) -> Result<LdaFitParams, CliError> {
    let topics = args
        .topics
        .or(conf.usize_("topics")?)
        .ok_or_else(|| CliError::Usage("--topics is required (flag or config file)".into()))?;
    let defaults = LdaConfig::<f64>::with_topics(topics.max(1));
    Ok(LdaFitParams {
        corpus: path_string(&args.corpus),
        out: path_string(&args.out),
        model_out: args.model_out.as_deref().map(path_string),
        topics,
        alpha: args.alpha.or(conf.f64_("alpha")?).unwrap_or(defaults.alpha),
        eta: args.eta.or(conf.f64_("eta")?).unwrap_or(defaults.eta),
        sweeps: args.sweeps.or(conf.u32_("sweeps")?).unwrap_or(defaults.sweeps),
        burn_in: args.burn_in.or(conf.u32_("burn_in")?).unwrap_or(defaults.burn_in),
        min_doc_freq: args.min_doc_freq.or(conf.usize_("min_doc_freq")?).unwrap_or(1),
        stopwords: args.stopwords.as_deref().map(path_string),
        seed: resolve_seed(args.seed, conf)?,
    })
}

fn resolve_grow(args: GrowArgs, conf: &FileConf) -> Result<GrowParams, CliError> {
    let defaults = GrowthConfig::<f64>::default();
    Ok(GrowParams {
        annotation: path_string(&args.annotation),
        out: path_string(&args.out),
        topics: args.topics.or(conf.usize_("topics")?),
        p_threshold: args.p_threshold.or(conf.f64_("p_threshold")?).unwrap_or(defaults.p_threshold),
        permutations: args
            .permutations
            .or(conf.u32_("permutations")?)
            .unwrap_or(defaults.permutations),
        max_phrase_len: args
            .max_phrase_len
            .or(conf.usize_("max_phrase_len")?)
            .unwrap_or(defaults.max_phrase_len),
        min_count: args.min_count.or(conf.u32_("min_count")?).unwrap_or(defaults.min_count),
        top_seed_words: args
            .top_seed_words
            .or(conf.usize_("top_seed_words")?)
            .unwrap_or(defaults.top_seed_words),
        baseline_top: args.baseline_top.or(conf.usize_("baseline_top")?).unwrap_or(30),
        seed: resolve_seed(args.seed, conf)?,
    })
}

fn resolve_simulate(args: SimulateArgs, conf: &FileConf) -> Result<SimulateParams, CliError> {
    Ok(SimulateParams {
        out: path_string(&args.out),
        n_tokens: args.n_tokens.or(conf.usize_("n_tokens")?).unwrap_or(10_000),
        crp_alpha: args.crp_alpha.or(conf.f64_("crp_alpha")?).unwrap_or(1000.0),
        beta_bigram: args.beta_bigram.or(conf.f64_("beta_bigram")?).unwrap_or(0.1),
        seed: resolve_seed(args.seed, conf)?,
    })
}

fn resolve_bench(args: BenchArgs, conf: &FileConf) -> Result<BenchParams, CliError> {
    let defaults = BenchConfig::<f64>::default();
    let out = path_string(&args.out);
    let summary_out = match args.summary_out {
        Some(p) => path_string(&p),
        None => match conf.string("summary_out")? {
            Some(s) => s,
            None => path_string(&args.out.with_extension("summary.csv")),
        },
    };
    Ok(BenchParams {
        out,
        summary_out,
        methods: args
            .methods
            .or(conf.string_list("methods")?)
            .unwrap_or_else(|| defaults.methods.iter().map(|m| m.id().to_owned()).collect()),
        sizes: args.sizes.or(conf.usize_list("sizes")?).unwrap_or(defaults.sizes),
        thresholds: args.thresholds.or(conf.f64_list("thresholds")?).unwrap_or(defaults.thresholds),
        replications: args
            .replications
            .or(conf.u32_("replications")?)
            .unwrap_or(defaults.replications),
        permutations: args
            .permutations
            .or(conf.u32_("permutations")?)
            .unwrap_or(defaults.permutations),
        min_count: args.min_count.or(conf.u32_("min_count")?).unwrap_or(defaults.min_count),
        crp_alpha: args.crp_alpha.or(conf.f64_("crp_alpha")?).unwrap_or(defaults.crp_alpha),
        beta_bigram: args.beta_bigram.or(conf.f64_("beta_bigram")?).unwrap_or(defaults.beta_bigram),
        seed: resolve_seed(args.seed, conf)?,
    })
}

fn run_report(args: ReportArgs, conf: &FileConf) -> Result<(), CliError> {
    let format = match args.format {
        Some(f) => f,
        None => match conf.string("format")?.as_deref() {
            None | Some("text") => ReportFormat::Text,
            Some("html") => ReportFormat::Html,
            Some(other) => {
                return Err(CliError::Data(format!("config key `format` has unknown value `{other}`")))
            }
        },
    };
    let artifact = cmd::load_grow_artifact(&path_string(&args.reports))?;
    let rendered = match format {
        ReportFormat::Text => render::render_text(&artifact)?,
        ReportFormat::Html => render::render_html(&artifact)?,
    };
    match args.out {
        Some(path) => fs::write(path, rendered)?,
        None => print!("{rendered}"),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let conf = FileConf::load(cli.config.as_deref())?;
    if let Some(jobs) = cli.jobs.or(conf.usize_("jobs")?) {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be positive".into()));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match cli.command {
        Command::LdaFit(args) => cmd::run_lda_fit(&resolve_lda_fit(args, &conf)?),
        Command::Grow(args) => cmd::run_grow(&resolve_grow(args, &conf)?),
        Command::Simulate(args) => cmd::run_simulate(&resolve_simulate(args, &conf)?),
        Command::Bench(args) => cmd::run_bench(&resolve_bench(args, &conf)?),
        Command::Report(args) => run_report(args, &conf),
        Command::Rerun(args) => cmd::run_rerun(&args.artifact),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
