use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use codecoach_server::{commands, router, AppState, ServerConfig};
use tracing_subscriber::EnvFilter;

/// Programming exercise grading and SRL feedback service.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Server configuration file (TOML).
    #[arg(long, global = true, env = "AGENT_CONFIG")]
    config: Option<PathBuf>,
    /// Data directory; overrides the file and AGENT_DATA_DIR.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Listen port; overrides the file and AGENT_PORT.
    #[arg(long, global = true)]
    port: Option<u16>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve,
    /// Load concepts, lectures and exercise bundles from a course directory.
    Seed { dir: PathBuf },
    /// Grade one source file against an exercise bundle and print the report.
    Grade {
        exercise: PathBuf,
        file: PathBuf,
        #[arg(long, default_value = "local")]
        actor: String,
    },
    /// Write all statements as newline-delimited JSON (`-` for stdout).
    ExportLogs { out: PathBuf },
}

fn load_config(cli: &Cli) -> anyhow::Result<ServerConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ServerConfig::load(path)?,
        None => ServerConfig::default(),
    };
    cfg.apply_env(|k| std::env::var(k).ok())?;
    if let Some(dir) = &cli.data_dir {
        cfg.data_dir = dir.clone();
    }
    if let Some(port) = cli.port {
        cfg.port = port;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Serve => serve(cfg),
        Command::Seed { dir } => {
            let state = AppState::open(&cfg)?;
            let summary = commands::seed(&state, dir)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
        Command::Grade { exercise, file, actor } => {
            let report = commands::grade(&cfg, exercise, file, actor)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::ExportLogs { out } => {
            let n = commands::export_logs(&cfg, out)?;
            tracing::info!(statements = n, "export written");
            Ok(())
        }
    }
}

#[tokio::main]
async fn serve(cfg: ServerConfig) -> anyhow::Result<()> {
    if cfg.tokens.is_empty() {
        tracing::warn!("no tokens configured; every request except /health will be rejected");
    }
    let state = Arc::new(AppState::open(&cfg)?);
    let addr = format!("{}:{}", cfg.bind, cfg.port);
    let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
    tracing::info!(%addr, data_dir = %cfg.data_dir.display(), "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
