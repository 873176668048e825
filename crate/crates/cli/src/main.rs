use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use microsteer_client::core::session::Scenario;
use microsteer_client::Client;
use microsteer_server::{LiveConfig, RunningServer};

/// Closed-loop microrobot steering simulator.
///
/// Every command talks to the microsteer service. Without `--server` an
/// in-process instance is started on a free local port.
#[derive(Debug, Parser)]
#[command(name = "microsteer", version)]
struct Cli {
    /// Base URL of a running service, e.g. http://127.0.0.1:8080
    #[arg(long, global = true, env = "MICROSTEER_SERVER")]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario headless and report its metrics.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Simulated seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Write the run record (JSON lines) here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the plotting CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Override a scenario key, e.g. --set sim.offset_delta=45deg
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Re-run a record and check that it reproduces bit for bit.
    Replay { record: PathBuf },
    /// Recompute the metrics of a record.
    Metrics { record: PathBuf },
    /// Serve the HTTP API and a live session.
    Serve {
        /// Scenario for the live session; defaults apply when omitted.
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Simulated seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn parse_override(raw: &str) -> Result<(String, String)> {
    match raw.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => bail!("expected KEY=VALUE, got `{raw}`"),
    }
}

/// Connects to `--server` or starts a local service without a live session.
async fn connect(server: Option<String>) -> Result<(Client, Option<RunningServer>)> {
    match server {
        Some(url) => Ok((Client::new(url), None)),
        None => {
            let local = microsteer_server::spawn(SocketAddr::from(([127, 0, 0, 1], 0)), None).await?;
            Ok((Client::new(local.url()), Some(local)))
        }
    }
}

async fn execute(cli: Cli) -> Result<ExitCode> {
    if let Command::Serve { scenario, port, host, speed } = cli.command {
        let text = scenario.as_deref().map(read).transpose()?.unwrap_or_default();
        let scenario = Scenario::parse(&text)?;
        let listener = tokio::net::TcpListener::bind(SocketAddr::new(host, port)).await?;
        eprintln!("serving on http://{}", listener.local_addr()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        microsteer_server::serve(listener, Some(LiveConfig { scenario, speed }), shutdown).await?;
        return Ok(ExitCode::SUCCESS);
    }

    let (client, local) = connect(cli.server).await?;
    let code = match cli.command {
        Command::Run { scenario, seed, duration, out, csv, overrides } => {
            let mut pairs = overrides.iter().map(|o| parse_override(o)).collect::<Result<Vec<_>>>()?;
            if let Some(seed) = seed {
                pairs.push(("run.seed".into(), seed.to_string()));
            }
            if let Some(duration) = duration {
                pairs.push(("run.duration".into(), duration.to_string()));
            }
            let scenario = client.parse_scenario(&read(&scenario)?, &pairs).await?;
            let run = client.run(&scenario).await?;
            if let Some(path) = &out {
                write(path, &run.record)?;
            }
            if let Some(path) = &csv {
                write(path, client.csv(&run.record).await?)?;
            }
            println!("{}", serde_json::to_string_pretty(&run.metrics)?);
            ExitCode::SUCCESS
        }
        Command::Replay { record } => {
            let report = client.replay(&read(&record)?).await?;
            if report.identical {
                println!("identical: {} frames reproduced", report.frames);
                ExitCode::SUCCESS
            } else {
                println!("diverged at frame {}", report.first_mismatch.map_or("?".into(), |f| f.to_string()));
                ExitCode::FAILURE
            }
        }
        Command::Metrics { record } => {
            let metrics = client.metrics(&read(&record)?).await?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
            ExitCode::SUCCESS
        }
        Command::Serve { .. } => unreachable!("handled above"),
    };
    if let Some(local) = local {
        local.shutdown().await?;
    }
    Ok(code)
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match execute(Cli::parse()).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
