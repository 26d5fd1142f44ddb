use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use storystage::config::Config;
use storystage::log::SessionDocument;
use storystage::scene::{bundled_fixture, fixture_ids};
use storystage::session::{bundled_session, load_document, replay_cli, replay_document, session_ids};

#[derive(Parser)]
#[command(
    name = "storystage",
    version,
    about = "Play a scene with AI characters and export the story"
)]
struct Cli {
    /// TOML or JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Summary,
    Screenplay,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP/WebSocket service.
    #[cfg(feature = "server")]
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Directory for per-session documents.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Replay a session log (file or bundled id) and write frames, marbles, synopsis and screenplay.
    Replay {
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Replay a session log and print the export.
    Export {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Both)]
        format: Format,
    },
    /// List the bundled scenes and session logs.
    Fixtures,
}

fn load_config(path: Option<&Path>) -> Result<Config, String> {
    match path {
        Some(p) => Config::load(p).map_err(|e| e.to_string()),
        None => Ok(Config::default()),
    }
}

/// A path to a session document, or the id of a bundled one.
fn load(input: &Path) -> Result<SessionDocument, String> {
    if !input.exists() {
        if let Some(doc) = input.to_str().and_then(bundled_session) {
            return Ok(doc);
        }
    }
    load_document(input).map_err(|e| e.to_string())
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(text: &str) -> Result<(), String> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.to_string()),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), String> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        #[cfg(feature = "server")]
        Command::Serve { host, port, data_dir } => {
            use storystage::server::{serve, AppState};
            if let Some(d) = &data_dir {
                std::fs::create_dir_all(d).map_err(|e| format!("{}: {e}", d.display()))?;
            }
            let addr: std::net::SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| format!("bad address: {e}"))?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            rt.block_on(serve(addr, AppState::new(config, data_dir)))
                .map_err(|e| e.to_string())
        }
        Command::Replay { input, out } => {
            let doc = load(&input)?;
            let r = replay_cli(&doc, config, &out).map_err(|e| e.to_string())?;
            eprintln!(
                "{} frames, {} marbles -> {}",
                r.frames.len(),
                r.marbles.len(),
                out.display()
            );
            for w in &r.artifacts.continuity {
                eprintln!("continuity: {w}");
            }
            Ok(())
        }
        Command::Export { input, format } => {
            let doc = load(&input)?;
            let r = replay_document(&doc, config).map_err(|e| e.to_string())?;
            let text = match format {
                Format::Summary => format!("{}\n", r.artifacts.synopsis),
                Format::Screenplay => r.artifacts.screenplay_text,
                Format::Both => format!("{}\n\n{}", r.artifacts.synopsis, r.artifacts.screenplay_text),
            };
            emit(&text)
        }
        Command::Fixtures => {
            let mut text = String::new();
            for id in fixture_ids() {
                let f = bundled_fixture(id).expect("listed fixture");
                let cast: Vec<&str> = f.scene.characters.iter().map(|c| c.name.as_str()).collect();
                text += &format!("{id}\t{}\t{}\n", f.title, cast.join(", "));
            }
            for id in session_ids() {
                text += &format!("{id}\tsession log\n");
            }
            emit(&text)
        }
    }
}

fn main() -> ExitCode {
    #[cfg(feature = "server")]
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
