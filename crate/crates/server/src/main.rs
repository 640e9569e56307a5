use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use longdial::corpus::load_corpus;
use longdial::eval::{run_ablation, run_eval, EvalSettings, MetricReport};
use longdial::persistence::{load_state, state_path};
use longdial::ModuleSet;
use longdial_server::{repl, router, Service, ServiceConfig};
use tracing_subscriber::EnvFilter;

#[derive(Parser, Debug)]
#[command(name = "longdial", version, about = "Long-term dialogue agent with event memory and personas")]
struct Cli {
    /// TOML configuration file. Defaults give an offline mock service.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the HTTP service.
    Serve {
        /// Overrides the listen address from the config.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Chat in the terminal.
    Chat {
        /// Resume this conversation, or create it if it does not exist.
        #[arg(long)]
        id: Option<String>,
        #[arg(long, default_value = "User")]
        user: String,
        #[arg(long, default_value = "Assistant")]
        agent: String,
    },
    /// Replay a multi-session corpus and score the regenerated replies.
    Eval {
        /// JSONL corpus, one dialogue per line.
        #[arg(long)]
        corpus: PathBuf,
        /// Modules to enable, e.g. `memory,persona_user`; `context` for none.
        /// Ignored with --table.
        #[arg(long, default_value = "full")]
        ablation: String,
        /// Run all five ablation rows instead of a single module set.
        #[arg(long)]
        table: bool,
        /// Where to write the JSON report.
        #[arg(long)]
        out: PathBuf,
        /// Also write the ablation table as CSV (with --table).
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
    },
    /// Print a saved conversation snapshot.
    DumpState {
        #[arg(long)]
        id: String,
    },
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = ServiceConfig::load_or_default(cli.config.as_deref()).map_err(Into::into).and_then(|cfg| run(cfg, cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cfg: ServiceConfig, command: Command) -> CliResult {
    match command {
        Command::Serve { listen } => serve(cfg, listen),
        Command::Chat { id, user, agent } => chat(cfg, id, &user, &agent),
        Command::Eval { corpus, ablation, table, out, csv, parallelism } => {
            eval(cfg, &corpus, &ablation, table, &out, csv.as_deref(), parallelism)
        }
        Command::DumpState { id } => {
            let snapshot = load_state(&state_path(&cfg.data_dir, &id))?;
            print!("{}", snapshot.to_json()?);
            Ok(())
        }
    }
}

fn tokio_runtime() -> std::io::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()
}

fn serve(mut cfg: ServiceConfig, listen: Option<String>) -> CliResult {
    if let Some(addr) = listen {
        cfg.listen = addr;
    }
    let addr = cfg.listen.clone();
    let service = Arc::new(Service::from_config(cfg)?);
    tokio_runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr).await?;
        tracing::info!(addr = %listener.local_addr()?, data_dir = %service.config().data_dir.display(), "listening");
        axum::serve(listener, router(service))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn chat(cfg: ServiceConfig, id: Option<String>, user: &str, agent: &str) -> CliResult {
    let service = Service::from_config(cfg)?;
    let id = match id {
        Some(id) if service.view(&id).is_ok() => id,
        Some(id) => service.create(user, agent, Some(&id))?.snapshot.conversation_id.clone(),
        None => service.create(user, agent, None)?.snapshot.conversation_id.clone(),
    };
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    tokio_runtime()?.block_on(repl::run(&service, &id, stdin.lock(), &mut stdout))?;
    Ok(())
}

fn print_report<W: Write>(out: &mut W, report: &MetricReport) -> std::io::Result<()> {
    writeln!(out, "[{}] {} dialogues scored, {} failed", report.ablation, report.dialogues_scored, report.failures.len())?;
    for (session, m) in &report.per_session {
        writeln!(
            out,
            "  session {session}: BL-2 {:.2}  BL-3 {:.2}  R-L {:.2}  METEOR {:.2}  ({} replies)",
            m.bl2 * 100.0,
            m.bl3 * 100.0,
            m.rl * 100.0,
            m.met * 100.0,
            m.responses
        )?;
    }
    for f in &report.failures {
        writeln!(out, "  failed {}: {}", f.dialogue_id, f.error)?;
    }
    Ok(())
}

fn eval(
    cfg: ServiceConfig,
    corpus: &Path,
    ablation: &str,
    table: bool,
    out: &Path,
    csv: Option<&Path>,
    parallelism: usize,
) -> CliResult {
    cfg.validate_settings()?;
    let runtime = cfg.build_runtime()?;
    let dialogues = load_corpus(corpus)?;
    let settings = EvalSettings { parallelism, ..EvalSettings::default() };
    let stdout = std::io::stdout();
    let mut stdout = stdout.lock();
    if table {
        let result = run_ablation(&dialogues, &runtime, &ModuleSet::ablation_rows(), &settings)?;
        for row in &result.rows {
            print_report(&mut stdout, row)?;
        }
        std::fs::write(out, serde_json::to_string_pretty(&result)? + "\n")?;
        if let Some(path) = csv {
            std::fs::write(path, result.to_csv())?;
        }
    } else {
        let modules: ModuleSet = ablation.parse()?;
        let report = run_eval(&dialogues, &runtime.with_modules(modules), &settings)?;
        print_report(&mut stdout, &report)?;
        std::fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(())
}

