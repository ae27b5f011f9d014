mod repl;

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use labrag_core::chat::{LabAssistant, LlmKind, LlmProviderConfig};
use labrag_core::clock::{Clock, SystemClock};
use labrag_core::embedding::{embed_corpus, read_vectors, write_vectors, EmbeddingProviderConfig};
use labrag_core::eval::{run_eval, EvalOptions, EvalScope, LabDataset, MatchMode, MetricReport, ReferenceSet};
use labrag_core::index::VectorIndex;
use labrag_core::ingest::{crawl, ingest_fixture_dir, parse_page, read_corpus, write_corpus, Corpus, CrawlConfig};
use labrag_service::AppConfig;

#[derive(Parser)]
#[command(name = "labrag", version, about = "Personalized lab reference range lookup")]
struct Cli {
    /// Log filter, e.g. `info` or `labrag_core=debug`. Overrides RUST_LOG.
    #[arg(long, global = true)]
    log: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a corpus file from saved pages or from live URLs.
    Ingest(IngestArgs),
    /// Embed every document of a corpus.
    Embed(EmbedArgs),
    /// Combine a corpus and its vectors into an index file.
    Index(IndexArgs),
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "labrag.toml")]
        config: PathBuf,
    },
    /// Ask questions interactively on the terminal.
    Chat {
        #[arg(long, default_value = "labrag.toml")]
        config: PathBuf,
    },
    /// Score factor retrieval (precision, recall, F1) against a dataset.
    EvalFactors(EvalArgs),
    /// Score normal range answers (question and lab level accuracy).
    EvalRanges(EvalArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Directory of saved article pages (`*.html`).
    #[arg(long, conflicts_with = "from_urls", required_unless_present = "from_urls")]
    from_fixtures: Option<PathBuf>,
    /// File with one article URL per line.
    #[arg(long)]
    from_urls: Option<PathBuf>,
    /// Required with --from-urls.
    #[arg(long)]
    allow_network: bool,
    /// Requests per second when crawling.
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    #[arg(long)]
    ignore_robots: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "medlineplus")]
    source_tag: String,
}

#[derive(Args, Clone)]
struct EmbeddingArgs {
    #[arg(long, value_enum, default_value_t = EmbedderKind::LocalHash)]
    embedder: EmbedderKind,
    /// Vector size; defaults to 512 for local-hash and 3072 for remote.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, default_value = "text-embedding-3-large")]
    embedding_model: String,
    #[arg(long)]
    embedding_endpoint: Option<String>,
    /// Environment variable holding the embedding API key.
    #[arg(long)]
    embedding_key_env: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedderKind {
    LocalHash,
    Remote,
}

impl EmbeddingArgs {
    fn config(&self) -> EmbeddingProviderConfig {
        let mut c = match self.embedder {
            EmbedderKind::LocalHash => EmbeddingProviderConfig::local_hash(),
            EmbedderKind::Remote => EmbeddingProviderConfig::remote(),
        };
        c.dim = self.dim;
        c.model_name = self.embedding_model.clone();
        if self.embedding_endpoint.is_some() {
            c.endpoint_url = self.embedding_endpoint.clone();
        }
        if self.embedding_key_env.is_some() {
            c.api_key_env = self.embedding_key_env.clone();
        }
        c
    }
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    embedding: EmbeddingArgs,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vectors: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth dataset (JSON Lines, one lab per line).
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long, value_enum, default_value_t = Provider::Oracle)]
    provider: Provider,
    /// Recorded model replies; required for `replay`.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// With `replay`: call the remote model on a miss and append the reply.
    #[arg(long)]
    record: bool,
    #[arg(long, default_value = "gpt-4-turbo")]
    model: String,
    /// Where to write the JSON report.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    mode: Mode,
    /// Accepted alternative answers, for `--mode any-reference`.
    #[arg(long)]
    references: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    embedding: EmbeddingArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Provider {
    Oracle,
    Replay,
    RemoteChat,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    AnyReference,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    // The service takes its default log level from its config file.
    if let Command::Serve { config } = &cli.command {
        let config = AppConfig::load(config)?;
        init_logging(cli.log.as_deref(), &config.log_level);
        let rt = tokio::runtime::Runtime::new()?;
        rt.block_on(labrag_service::serve(config))?;
        return Ok(());
    }
    init_logging(cli.log.as_deref(), "warn");
    match cli.command {
        Command::Ingest(args) => ingest(&args),
        Command::Embed(args) => embed(&args),
        Command::Index(args) => index(&args),
        Command::Serve { .. } => unreachable!("handled above"),
        Command::Chat { config } => {
            let config = AppConfig::load(&config)?;
            let assistant = config.build_assistant(Arc::new(SystemClock))?;
            let stdin = std::io::stdin();
            repl::run(&assistant, stdin.lock(), std::io::stdout())
        }
        Command::EvalFactors(args) => eval(&args, EvalScope::FACTORS),
        Command::EvalRanges(args) => eval(&args, EvalScope::RANGES),
    }
}

fn init_logging(filter: Option<&str>, default: &str) {
    use tracing_subscriber::EnvFilter;
    let filter = match filter {
        Some(f) => EnvFilter::new(f),
        None => EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default)),
    };
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn ingest(args: &IngestArgs) -> Result<()> {
    let corpus = if let Some(dir) = &args.from_fixtures {
        let (corpus, skipped) = ingest_fixture_dir(dir, &args.source_tag)?;
        for (path, reason) in &skipped {
            eprintln!("skipped {path}: {reason}");
        }
        corpus
    } else {
        let list = args.from_urls.as_ref().expect("clap requires one source");
        if !args.allow_network {
            bail!("--from-urls fetches pages over the network; pass --allow-network to confirm");
        }
        let text = std::fs::read_to_string(list).with_context(|| format!("reading {}", list.display()))?;
        let urls: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect();
        let mut config = CrawlConfig::default().with_rate(args.rate);
        config.respect_robots = !args.ignore_robots;
        let report = crawl(&urls, &config)?;
        for f in &report.failures {
            eprintln!("failed {}: {}", f.url, f.reason);
        }
        let mut docs = Vec::new();
        for page in &report.pages {
            match parse_page(page) {
                Ok(doc) => docs.push(doc),
                Err(e) => eprintln!("skipped {}: {e}", page.url),
            }
        }
        Corpus::new(&args.source_tag, docs)?
    };
    write_corpus(&corpus, &args.out)?;
    println!("wrote {} documents to {}", corpus.len(), args.out.display());
    Ok(())
}

fn embed(args: &EmbedArgs) -> Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let embedder = args.embedding.config().build()?;
    let vectors = embed_corpus(&corpus, embedder.as_ref())?;
    write_vectors(&args.out, &embedder.provider_tag(), &vectors)?;
    println!(
        "wrote {} vectors ({}) to {}",
        vectors.len(),
        embedder.provider_tag(),
        args.out.display()
    );
    Ok(())
}

fn index(args: &IndexArgs) -> Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let vectors = read_vectors(&args.vectors)?;
    let index = VectorIndex::from_corpus(&corpus, vectors)?;
    index.save(&args.out)?;
    println!(
        "indexed {} documents ({}, dim {}) into {}",
        index.len(),
        index.provider_tag(),
        index.dim(),
        args.out.display()
    );
    Ok(())
}

fn eval(args: &EvalArgs, scope: EvalScope) -> Result<()> {
    let mut llm = LlmProviderConfig::new(match args.provider {
        Provider::Oracle => LlmKind::Oracle,
        Provider::Replay => LlmKind::Replay,
        Provider::RemoteChat => LlmKind::RemoteChat,
    });
    llm.model_name = args.model.clone();
    llm.dataset_path = Some(args.dataset.clone());
    llm.transcript_path = args.transcript.clone();
    llm.record = args.record;
    let llm = llm.build()?;

    let dataset = LabDataset::load(&args.dataset)?;
    let index = VectorIndex::load(&args.index).with_context(|| format!("loading {}", args.index.display()))?;
    let embedder = args.embedding.config().build()?;
    if embedder.provider_tag() != index.provider_tag() {
        bail!(
            "the index was built with {} but the embedder is {}; pass matching --embedder/--dim",
            index.provider_tag(),
            embedder.provider_tag()
        );
    }
    let assistant = LabAssistant::builder(Arc::new(index), embedder, llm)
        .model_name(args.model.clone())
        .build()?;

    let options = EvalOptions {
        mode: match args.mode {
            Mode::Exact => MatchMode::Exact,
            Mode::AnyReference => MatchMode::AnyReference,
        },
        references: match &args.references {
            Some(p) => ReferenceSet::load(p)?,
            None => ReferenceSet::default(),
        },
        threads: args.threads,
    };
    let report = run_eval(&assistant, &dataset, scope, &options, SystemClock.now());
    print_summary(&report);
    if let Some(path) = &args.report {
        std::fs::write(path, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

fn print_summary(report: &MetricReport) {
    println!(
        "provider: {}  embeddings: {}",
        report.provider_kind, report.provider_tag
    );
    if let Some(f) = &report.factors {
        println!(
            "factors: precision {:.3}  recall {:.3}  f1 {:.3}  (tp {} fp {} fn {}, {} labs)",
            f.precision, f.recall, f.f1, f.counts.tp, f.counts.fp, f.counts.fn_, f.labs_scored
        );
    }
    if let Some(r) = &report.ranges {
        println!(
            "ranges: question-level {:.3} ({}/{})  lab-level {:.3} ({:.2}/{})  context recall {:.3}",
            r.qla, r.correct_questions, r.total_questions, r.lla, r.lab_credit, r.total_labs, r.context_recall
        );
    }
    if !report.complete {
        println!("incomplete: {} items skipped after errors", report.failures.len());
        for f in report.failures.iter().take(10) {
            let what = f.question_text.as_deref().unwrap_or(&f.lab_name);
            println!("  {} [{}]: {}", what, f.phase, f.error);
        }
    }
}
