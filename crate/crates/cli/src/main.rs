mod report;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use qc_core::config::Config;
use qc_core::ingest::{run_schedule, Analyzer, CycleReport, FeedSource, Fetcher, HttpFetcher, MirrorFetcher, Pipeline, SystemClock};
use qc_core::store::Store;

#[derive(Parser)]
#[command(name = "qc", version, about = "News content analysis: ingest, store, search and report")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Database file; overrides `database` from the config.
    #[arg(long, global = true)]
    database: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Poll feeds and analyze new or changed articles.
    Ingest {
        #[command(subcommand)]
        mode: IngestMode,
    },
    /// Database maintenance.
    Store {
        #[command(subcommand)]
        action: StoreAction,
    },
    /// HTTP search and export API.
    Service {
        #[command(subcommand)]
        action: ServiceAction,
    },
    /// Corpus reports, written as CSV.
    Report {
        #[command(subcommand)]
        kind: report::ReportKind,
    },
}

#[derive(Subcommand)]
enum IngestMode {
    /// One cycle over every source, then exit.
    Once,
    /// A cycle now, then each source at its poll interval until interrupted.
    Run,
}

#[derive(Subcommand)]
enum StoreAction {
    /// Create or upgrade the schema.
    Migrate,
    /// Run integrity checks and print row counts.
    Check,
}

#[derive(Subcommand)]
enum ServiceAction {
    Run {
        /// Overrides `service.port`; 0 picks a free port.
        #[arg(long)]
        port: Option<u16>,
        /// Overrides `service.bind`.
        #[arg(long)]
        bind: Option<String>,
    },
}

impl Global {
    fn load_config(&self) -> Result<Config> {
        let path = self.config.as_deref().context("--config is required for this command")?;
        Config::load(path).with_context(|| format!("loading {}", path.display()))
    }

    fn database(&self) -> Result<PathBuf> {
        if let Some(db) = &self.database {
            return Ok(db.clone());
        }
        Ok(self.load_config()?.database)
    }

    fn open_store(&self) -> Result<Store> {
        let db = self.database()?;
        open_store(&db)
    }
}

fn open_store(db: &Path) -> Result<Store> {
    if let Some(dir) = db.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Store::open(db).with_context(|| format!("opening {}", db.display()))
}

fn print_cycle(report: &CycleReport) {
    let mut out = std::io::stdout().lock();
    for s in &report.sources {
        let _ = writeln!(
            out,
            "{}: {} items, {} inserted, {} replaced, {} unchanged, {} failed, {} links, {} scores{}",
            s.media_name,
            s.items,
            s.inserted,
            s.replaced,
            s.unchanged,
            s.failures.len(),
            s.links,
            s.scores,
            s.feed_error.as_ref().map(|e| format!(" (feed error: {e})")).unwrap_or_default(),
        );
        for f in s.failures.iter().chain(&s.tagger_errors) {
            let _ = writeln!(out, "  {}: {}", f.url, f.error);
        }
    }
}

fn ctrl_c_flag() -> Arc<AtomicBool> {
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build();
        if let Ok(rt) = rt {
            if rt.block_on(tokio::signal::ctrl_c()).is_ok() {
                tracing::info!("interrupt received; stopping after the current cycle");
                flag.store(true, Ordering::Relaxed);
            }
        }
    });
    stop
}

fn ingest(global: &Global, mode: IngestMode) -> Result<()> {
    let cfg = global.load_config()?;
    let db = global.database.clone().unwrap_or_else(|| cfg.database.clone());
    let sources: Vec<FeedSource> = cfg.feed_sources();
    if sources.is_empty() {
        bail!("no [[sources]] configured");
    }
    let fetcher: Arc<dyn Fetcher> = match &cfg.fetch.mirror_dir {
        Some(dir) => Arc::new(MirrorFetcher::new(dir)),
        None => Arc::new(HttpFetcher::new(
            &cfg.fetch.user_agent,
            std::time::Duration::from_secs(cfg.fetch.timeout_secs),
            std::time::Duration::from_millis(cfg.fetch.min_request_interval_ms),
        )),
    };
    let clock = Arc::new(SystemClock);
    let pipeline = Pipeline::new(Analyzer::from_config(&cfg)?, fetcher, open_store(&db)?, clock.clone(), cfg.merge_policy());
    pipeline.register_sources(&sources)?;

    let all: Vec<&FeedSource> = sources.iter().collect();
    print_cycle(&pipeline.run_cycle(&all));
    if let IngestMode::Run = mode {
        let stop = ctrl_c_flag();
        run_schedule(&sources, clock.as_ref(), None, &stop, |tick| {
            let due: Vec<&FeedSource> = tick.due.iter().map(|&i| &sources[i]).collect();
            print_cycle(&pipeline.run_cycle(&due));
        });
    }
    Ok(())
}

fn store_cmd(global: &Global, action: StoreAction) -> Result<()> {
    let store = global.open_store()?;
    match action {
        StoreAction::Migrate => println!("schema version {}", store.migrate()?),
        StoreAction::Check => {
            println!("{}", serde_json::to_string(&store.table_counts()?)?);
            let problems = store.check_integrity()?;
            for p in &problems {
                println!("{p}");
            }
            if !problems.is_empty() {
                bail!("{} integrity problems", problems.len());
            }
        }
    }
    Ok(())
}

fn service(global: &Global, port: Option<u16>, bind: Option<String>) -> Result<()> {
    let cfg = global.load_config()?;
    let db = global.database.clone().unwrap_or_else(|| cfg.database.clone());
    let state = qc_service::AppState::new(open_store(&db)?)
        .with_preview_limit(cfg.service.preview_limit)
        .with_export_ttl(chrono::Duration::seconds(cfg.service.export_ttl_secs as i64));
    let host = bind.unwrap_or(cfg.service.bind);
    let port = port.unwrap_or(cfg.service.port);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host.as_str(), port))
            .await
            .with_context(|| format!("binding {host}:{port}"))?;
        println!("listening on http://{}", listener.local_addr()?);
        std::io::stdout().flush()?;
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        qc_service::serve(listener, state, shutdown).await?;
        Ok(())
    })
}

fn main() -> std::process::ExitCode {
    // QC_LOG=error|warn|info|debug|trace; warn by default.
    let level = std::env::var("QC_LOG")
        .ok()
        .and_then(|v| v.parse::<tracing::Level>().ok())
        .unwrap_or(tracing::Level::WARN);
    tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest { mode } => ingest(&cli.global, mode),
        Command::Store { action } => store_cmd(&cli.global, action),
        Command::Service { action: ServiceAction::Run { port, bind } } => service(&cli.global, port, bind),
        Command::Report { kind } => report::run(kind, || cli.global.open_store()),
    };
    match result {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
