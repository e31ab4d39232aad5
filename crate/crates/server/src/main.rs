use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};

use convkg_core::arbiter::{parse_samples, train_adaboost};
use convkg_core::engine::CorpusLog;
use convkg_core::eval::{load_benchmark, run_benchmark};
use convkg_core::kb::{load_kb, PageRankConfig};
use convkg_core::{repl, AssetPaths, Engine};
use convkg_server::{router, AppState, ServerConfig};

#[derive(Debug, Parser)]
#[command(name = "convkg", version, about = "Conversational question answering over a knowledge graph")]
struct Cli {
    /// Directory holding the default asset layout.
    #[arg(long, env = "CONVKG_DATA_DIR", global = true, default_value = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data"))]
    data_dir: PathBuf,
    #[arg(long, env = "CONVKG_KB", global = true)]
    kb: Option<PathBuf>,
    #[arg(long, env = "CONVKG_ENTITIES", global = true)]
    entities: Option<PathBuf>,
    #[arg(long, env = "CONVKG_LEXICON", global = true)]
    lexicon: Option<PathBuf>,
    #[arg(long, env = "CONVKG_GRAMMAR", global = true)]
    grammar: Option<PathBuf>,
    #[arg(long, env = "CONVKG_TEMPLATES", global = true)]
    templates: Option<PathBuf>,
    #[arg(long, env = "CONVKG_PARAGRAPHS", global = true)]
    paragraphs: Option<PathBuf>,
    #[arg(long, env = "CONVKG_SPEAKERS", global = true)]
    speakers: Option<PathBuf>,
    #[arg(long, env = "CONVKG_MODEL", global = true)]
    model: Option<PathBuf>,
    #[arg(long, env = "CONVKG_LANG", global = true, default_value = "en")]
    lang: String,
    #[arg(long, env = "CONVKG_LISTEN", global = true, default_value = "127.0.0.1:8080")]
    listen: String,
    /// Idle session lifetime in seconds.
    #[arg(long, env = "CONVKG_SESSION_TTL", global = true, default_value_t = 1800)]
    session_ttl: u64,
    /// Append dialogue-corpus records to this JSONL file.
    #[arg(long, env = "CONVKG_LOG", global = true)]
    log: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP session service.
    Serve {
        /// Static files (the built web client) served at `/`.
        #[arg(long, env = "CONVKG_STATIC_DIR")]
        static_dir: Option<PathBuf>,
    },
    /// Chat on stdin/stdout.
    Repl {
        #[arg(long)]
        speaker: Option<String>,
    },
    /// Score a benchmark file.
    Bench {
        file: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the confidence model from a samples file.
    TrainConfidence {
        file: PathBuf,
        #[arg(long, default_value_t = 20)]
        rounds: usize,
        /// Defaults to the --model path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print entities by PageRank.
    Pagerank {
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
}

/// Exit 1 for bad input or assets, 2 for failures while running.
enum Failure {
    Validation(String),
    Runtime(String),
}

impl Cli {
    fn paths(&self) -> AssetPaths {
        AssetPaths {
            kb: self.kb.clone(),
            entities: self.entities.clone(),
            lexicon: self.lexicon.clone(),
            grammar: self.grammar.clone(),
            templates: self.templates.clone(),
            paragraphs: self.paragraphs.clone(),
            speakers: self.speakers.clone(),
            model: self.model.clone(),
            ..AssetPaths::new(&self.data_dir, &self.lang)
        }
    }

    fn engine(&self) -> Result<Engine, Failure> {
        let engine = Engine::load(&self.paths()).map_err(|e| Failure::Validation(e.to_string()))?;
        match &self.log {
            Some(p) => Ok(engine.with_log(CorpusLog::open(p).map_err(|e| Failure::Validation(e.to_string()))?)),
            None => Ok(engine),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Serve { static_dir } => {
            let engine = Arc::new(cli.engine()?);
            let config = ServerConfig {
                session_ttl: Duration::from_secs(cli.session_ttl),
                static_dir: static_dir.clone(),
                ..ServerConfig::default()
            };
            let app = router(AppState::new(engine, config));
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(e.to_string()))?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&cli.listen)
                    .await
                    .map_err(|e| Failure::Validation(format!("cannot listen on {}: {e}", cli.listen)))?;
                log::info!("listening on {}", cli.listen);
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
                    .map_err(|e| Failure::Runtime(e.to_string()))
            })
        }
        Command::Repl { speaker } => {
            let engine = cli.engine()?;
            let session = format!("repl-{}", std::process::id());
            let mut state = engine
                .new_session(session, speaker.as_deref())
                .ok_or_else(|| Failure::Validation(format!("unknown speaker {:?}", speaker.as_deref().unwrap_or_default())))?;
            let stdin = std::io::stdin();
            let mut out = std::io::stdout();
            let interactive = std::io::IsTerminal::is_terminal(&stdin);
            repl::run(&engine, &mut state, stdin.lock(), &mut out, interactive).map_err(|e| Failure::Runtime(e.to_string()))
        }
        Command::Bench { file, out } => {
            let items = load_benchmark(file).map_err(|e| Failure::Validation(format!("{}: {e}", file.display())))?;
            let engine = cli.engine()?;
            let report = run_benchmark(&items, &engine).to_text();
            match out {
                Some(p) => std::fs::write(p, report).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display()))),
                None => std::io::stdout().write_all(report.as_bytes()).map_err(|e| Failure::Runtime(e.to_string())),
            }
        }
        Command::TrainConfidence { file, rounds, out } => {
            let text = std::fs::read_to_string(file).map_err(|e| Failure::Validation(format!("{}: {e}", file.display())))?;
            let samples = parse_samples(&text).map_err(|e| Failure::Validation(format!("{}: {e}", file.display())))?;
            let model = train_adaboost(&samples, *rounds).map_err(|e| Failure::Validation(e.to_string()))?;
            let target = out.clone().unwrap_or_else(|| cli.paths().model_path());
            model.save(&target).map_err(|e| Failure::Runtime(format!("{}: {e}", target.display())))?;
            let correct = samples.iter().filter(|(x, y)| (model.margin(x).unwrap_or(0.0) >= 0.0) == (*y > 0)).count();
            eprintln!(
                "trained {} stumps on {} samples ({} classified correctly), wrote {}",
                model.stumps.len(),
                samples.len(),
                correct,
                target.display()
            );
            Ok(())
        }
        Command::Pagerank { top } => {
            let paths = cli.paths();
            let mut kb = load_kb(&paths.kb_path(), &paths.entities_path(), &cli.lang).map_err(|e| Failure::Validation(e.to_string()))?;
            let scores = kb.compute_pagerank(&PageRankConfig::default()).map_err(|e| Failure::Runtime(e.to_string()))?;
            let mut ranked: Vec<_> = scores.into_iter().collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            let mut stdout = std::io::stdout().lock();
            for (id, score) in ranked.into_iter().take(*top) {
                writeln!(stdout, "{score:.6}\t{id}\t{}", kb.label(&id, &cli.lang)).map_err(|e| Failure::Runtime(e.to_string()))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
