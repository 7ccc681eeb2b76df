use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use tokio::net::TcpListener;

use sitgraph_core::planner::AutonomyLevel;
use sitgraph_mission::events::{EventBody, MissionOutcome, ScriptedCommand};
use sitgraph_mission::log::{read_log, LogWriter};
use sitgraph_mission::replay::{by_step, rebuild_graph};
use sitgraph_mission::server::{serve, Engine, ReplayEngine, STEP_PERIOD};
use sitgraph_mission::{run_mission, Mission, MissionConfig};

#[derive(Parser)]
#[command(name = "sitgraph", version, about = "Situational graph mission runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct MissionArgs {
    /// Scenario file, or `mock_lab` for the bundled lab.
    #[arg(long)]
    scenario: Option<String>,
    /// Autonomy level 1-4.
    #[arg(long, value_parser = parse_level)]
    autonomy: Option<AutonomyLevel>,
    #[arg(long)]
    seed: Option<u64>,
    /// TOML config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a mission headlessly as fast as possible.
    Run {
        #[command(flatten)]
        mission: MissionArgs,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Step limit.
        #[arg(long)]
        steps: Option<u64>,
        /// Operator commands to apply: JSON lines of `{"step", "command"}`,
        /// or a mission log whose commands are replayed.
        #[arg(long)]
        script: Option<PathBuf>,
    },
    /// Run a mission live behind a WebSocket server.
    Serve {
        #[command(flatten)]
        mission: MissionArgs,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Play a log back, to stdout or over WebSocket.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        port: Option<u16>,
        /// Playback speed relative to real time. Without it stdout replay
        /// is unpaced.
        #[arg(long)]
        speed: Option<f64>,
    },
}

fn parse_level(s: &str) -> Result<AutonomyLevel, String> {
    let n: u8 = s
        .trim_start_matches(['L', 'l'])
        .parse()
        .map_err(|_| format!("bad level {s}"))?;
    AutonomyLevel::try_from(n).map_err(|e| e.to_string())
}

fn config_from(
    args: &MissionArgs,
    log: Option<PathBuf>,
    steps: Option<u64>,
) -> anyhow::Result<MissionConfig> {
    let mut config = match &args.config {
        Some(path) => MissionConfig::from_toml_file(path)?,
        None => MissionConfig::default(),
    };
    if let Some(s) = &args.scenario {
        config.scenario = s.clone();
    }
    if let Some(l) = args.autonomy {
        config.autonomy = l;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(n) = steps {
        config.step_limit = n;
    }
    config.log = log;
    config.validate()?;
    Ok(config)
}

fn read_script(path: &Path) -> anyhow::Result<Vec<ScriptedCommand>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    if text.starts_with("{\"type\":\"header\"") {
        let log = sitgraph_mission::log::parse_log(&text)?;
        return Ok(log
            .events
            .iter()
            .filter_map(|e| match &e.body {
                EventBody::Command { command, .. } => Some(ScriptedCommand {
                    step: e.step,
                    command: *command,
                }),
                _ => None,
            })
            .collect());
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("script line {}", i + 1)))
        .collect()
}

fn speed_period(speed: f64) -> anyhow::Result<Duration> {
    if !(speed.is_finite() && speed > 0.0) {
        bail!("speed must be positive");
    }
    Ok(STEP_PERIOD.div_f64(speed))
}

async fn listen(port: u16) -> anyhow::Result<TcpListener> {
    let listener = TcpListener::bind(("127.0.0.1", port))
        .await
        .with_context(|| format!("cannot bind port {port}"))?;
    tracing::info!("listening on ws://{}", listener.local_addr()?);
    Ok(listener)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run {
            mission,
            log,
            steps,
            script,
        } => {
            let config = config_from(&mission, log, steps)?;
            let script = match script {
                Some(p) => read_script(&p)?,
                None => Vec::new(),
            };
            let run = run_mission(&config, &script)?;
            println!("{}", serde_json::to_string(&run.summary)?);
            Ok(match run.summary.outcome {
                MissionOutcome::MissionComplete => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            })
        }
        Command::Serve {
            mission,
            port,
            log,
            steps,
        } => {
            let config = config_from(&mission, log, steps)?;
            let m = Mission::new(config.clone())?;
            let writer = match &config.log {
                Some(p) => Some(LogWriter::create(p, &m.header())?),
                None => None,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = listen(port).await?;
                serve(listener, Engine::live(m, writer), STEP_PERIOD).await?;
                Ok(ExitCode::SUCCESS)
            })
        }
        Command::Replay { log, port, speed } => {
            let parsed = read_log(&log)?;
            let Some(header) = parsed.header else {
                bail!("log {} is empty", log.display());
            };
            if let Some(port) = port {
                let period = speed_period(speed.unwrap_or(1.0))?;
                let engine = ReplayEngine::new(&header, &parsed.events);
                let rt = tokio::runtime::Runtime::new()?;
                return rt.block_on(async {
                    let listener = listen(port).await?;
                    serve(listener, Engine::Replay(Box::new(engine)), period).await?;
                    Ok(ExitCode::SUCCESS)
                });
            }
            let period = speed.map(speed_period).transpose()?;
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            let mut last_step = 0;
            for (step, batch) in by_step(&parsed.events) {
                if let Some(p) = period {
                    std::thread::sleep(p * (step - last_step) as u32);
                }
                last_step = step;
                for e in batch {
                    writeln!(out, "{}", serde_json::to_string(&e)?)?;
                }
                out.flush()?;
            }
            let graph = rebuild_graph(&parsed.events)?;
            eprintln!(
                "replayed {} events: revision {}, {} nodes, {} edges",
                parsed.events.len(),
                graph.revision(),
                graph.node_count(),
                graph.edge_count()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
