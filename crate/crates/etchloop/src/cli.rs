use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use etchloop_core::stats::WidthMode;
use etchloop_core::synth::SynthConfig;

use crate::commands::{cmd_evaluate, cmd_simulate, cmd_stats, cmd_synth, load_stats};
use crate::config::{Config, Overrides};
use crate::error::CliError;
use crate::server::{serve, AppState};

#[derive(Debug, Parser)]
#[command(name = "etchloop", version, about = "Interactive refinement of engraving line masks")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dataset root (one directory per mirror).
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// identity | heuristic | oracle | remote:URL
    #[arg(long, global = true)]
    pub backend: Option<String>,
    #[arg(long, global = true, value_parser = parse_width_mode)]
    pub width_mode: Option<WidthMode>,
    /// Interaction cap per mirror.
    #[arg(long, global = true)]
    pub cap: Option<usize>,
    #[arg(long, global = true)]
    pub patch_size: Option<usize>,
}

fn parse_width_mode(s: &str) -> Result<WidthMode, String> {
    s.parse().map_err(|e: etchloop_core::Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit stroke-width statistics on the dataset ground truth.
    Stats {
        /// Also write the JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulated annotation runs; writes curves and final masks.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Metrics of predicted masks against ground truth masks.
    Evaluate {
        /// Directory of predicted PNG masks.
        #[arg(long)]
        pred: PathBuf,
        /// Directory of ground-truth PNG masks with the same file names.
        #[arg(long)]
        gt: PathBuf,
    },
    /// Run the annotation service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        journal_dir: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Mirror side length in pixels.
        #[arg(long, default_value_t = 256)]
        size: usize,
    },
}

impl Cli {
    fn config(&self, extra: Overrides) -> Result<Config, CliError> {
        let g = &self.global;
        let overrides = Overrides {
            dataset: g.dataset.clone(),
            seed: g.seed,
            backend: g.backend.clone(),
            width_mode: g.width_mode,
            cap: g.cap,
            patch_size: g.patch_size,
            ..extra
        };
        Config::resolve(g.config.as_deref(), overrides)
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<serde_json::Value, CliError> {
    Ok(serde_json::to_value(value)?)
}

/// Executes a parsed command line and returns the JSON printed on stdout.
pub fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    match &cli.command {
        Command::Stats { out } => {
            let cfg = cli.config(Overrides::default())?;
            let stats = cmd_stats(&cfg.dataset)?;
            if let Some(path) = out {
                std::fs::write(path, serde_json::to_string_pretty(&stats)?)?;
            }
            to_json(&stats)
        }
        Command::Simulate { out, repeats } => {
            let cfg = cli.config(Overrides {
                repeats: *repeats,
                ..Default::default()
            })?;
            to_json(&cmd_simulate(&cfg, out)?)
        }
        Command::Evaluate { pred, gt } => to_json(&cmd_evaluate(pred, gt)?),
        Command::Synth { out, count, size } => {
            let cfg = cli.config(Overrides::default())?;
            let synth = SynthConfig {
                height: *size,
                width: *size,
                ..SynthConfig::default()
            };
            to_json(&cmd_synth(out, *count, cfg.seed, &synth)?)
        }
        Command::Serve { port, journal_dir, host } => {
            let cfg = cli.config(Overrides {
                port: *port,
                journal_dir: journal_dir.clone(),
                ..Default::default()
            })?;
            run_server(cfg, host)
        }
    }
}

fn run_server(cfg: Config, host: &str) -> Result<serde_json::Value, CliError> {
    if !cfg.dataset.is_dir() {
        return Err(CliError::new("io_error", format!("dataset {} is not a directory", cfg.dataset.display())));
    }
    let stats = load_stats(&cfg).ok();
    let addr = format!("{host}:{}", cfg.port);
    let app = Arc::new(AppState::new(cfg, stats.as_ref())?);
    let restored = app.restore_sessions().map_err(|e| CliError::new(e.code, e.message))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::new("port_busy", format!("{addr}: {e}")))?;
        let local = listener.local_addr()?;
        eprintln!("{}", serde_json::json!({ "listening": local.to_string(), "restored_sessions": restored.len() }));
        serve(app, listener, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(serde_json::json!({ "stopped": local.to_string() }))
    })
}
