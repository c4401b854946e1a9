//! `solefultap` operator CLI.
//!
//! Exit codes: 0 success, 1 invariant breach or runtime failure, 2 usage
//! or parse error.

mod client;
mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use solefultap::actuation::export_log;
use solefultap::live::{LiveConfig, LiveNode, ScriptedSource};
use solefultap::simkit::{dump_samples, parse_script, run_scenario, synth};

use config::{parse_addr, NodeArgs, TuningArgs, DEFAULT_CONTROL_PORT};

#[derive(Parser)]
#[command(name = "solefultap", version, about = "Audio-haptic floor tile node")]
struct Cli {
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    show_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scripted scenario on the virtual clock.
    Simulate {
        #[arg(long)]
        script: PathBuf,
        /// Write the timeline report here (stdout if omitted).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the actuation log here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Write the synthesized sensor samples here.
        #[arg(long)]
        samples: Option<PathBuf>,
        #[command(flatten)]
        tuning: TuningArgs,
    },
    /// Run a live node.
    Run {
        #[command(flatten)]
        node: NodeArgs,
        #[command(flatten)]
        tuning: TuningArgs,
    },
    /// Start or stop recording on a running node.
    Record {
        action: client::RecordVerb,
        /// File to save the recording to on stop.
        #[arg(long)]
        file: Option<PathBuf>,
        #[arg(long, env = "SOLEFULTAP_CONTROL", value_parser = parse_addr,
              default_value_t = std::net::SocketAddr::from(([127, 0, 0, 1], DEFAULT_CONTROL_PORT)))]
        control: std::net::SocketAddr,
    },
    /// Play a recording on a running node (which must be in instruction mode).
    Play {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long, env = "SOLEFULTAP_CONTROL", value_parser = parse_addr,
              default_value_t = std::net::SocketAddr::from(([127, 0, 0, 1], DEFAULT_CONTROL_PORT)))]
        control: std::net::SocketAddr,
    },
    /// Send one raw control-channel JSON line and print the reply.
    Send {
        json: String,
        #[arg(long, env = "SOLEFULTAP_CONTROL", value_parser = parse_addr,
              default_value_t = std::net::SocketAddr::from(([127, 0, 0, 1], DEFAULT_CONTROL_PORT)))]
        control: std::net::SocketAddr,
    },
}

/// Failure carrying its exit code.
struct Exit(u8, anyhow::Error);

fn usage(e: anyhow::Error) -> Exit {
    Exit(2, e)
}

fn failure(e: anyhow::Error) -> Exit {
    Exit(1, e)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Exit(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Exit> {
    let Some(command) = cli.command else {
        if cli.show_config {
            let tuning = TuningArgs::parse_defaults();
            let node = NodeArgs::parse_defaults();
            let mut out = String::new();
            node.render(&mut out);
            tuning.render(&mut out);
            print!("{out}");
            return Ok(());
        }
        return Err(usage(anyhow::anyhow!(
            "no command given; see `solefultap --help`"
        )));
    };
    match command {
        Command::Simulate {
            script,
            report,
            log,
            samples,
            tuning,
        } => {
            if cli.show_config {
                let mut out = String::new();
                tuning.render(&mut out);
                print!("{out}");
                return Ok(());
            }
            simulate(
                &script,
                report.as_deref(),
                log.as_deref(),
                samples.as_deref(),
                &tuning,
            )
        }
        Command::Run { node, tuning } => {
            if cli.show_config {
                let mut out = String::new();
                node.render(&mut out);
                tuning.render(&mut out);
                print!("{out}");
                return Ok(());
            }
            run(node, tuning)
        }
        Command::Record {
            action,
            file,
            control,
        } => client::record(control, action, file.as_deref()).map_err(failure),
        Command::Play {
            file,
            speed,
            control,
        } => client::play(control, &file, speed).map_err(failure),
        Command::Send { json, control } => client::send(control, &json).map_err(failure),
    }
}

fn simulate(
    script_path: &Path,
    report_path: Option<&Path>,
    log_path: Option<&Path>,
    samples_path: Option<&Path>,
    tuning: &TuningArgs,
) -> Result<(), Exit> {
    let shape = tuning.pulse();
    let params = tuning.detector().map_err(usage)?;
    let pattern = tuning.pattern().map_err(usage)?;
    let text = std::fs::read_to_string(script_path)
        .with_context(|| format!("cannot read {}", script_path.display()))
        .map_err(usage)?;
    let script = parse_script(&text, shape.len_us())
        .with_context(|| format!("{}", script_path.display()))
        .map_err(usage)?;

    if let Some(path) = samples_path {
        let streams = synth(&script, &shape).map_err(|e| usage(e.into()))?;
        write_file(path, &dump_samples(&streams)).map_err(failure)?;
    }
    let out = run_scenario(&script, &shape, &params, pattern, &tuning.rig())
        .with_context(|| format!("{}", script_path.display()))
        .map_err(usage)?;

    if let Some(path) = log_path {
        write_file(path, &export_log(&out.log)).map_err(failure)?;
    }
    let rendered = out.report.render();
    match report_path {
        Some(path) => write_file(path, &rendered).map_err(failure)?,
        None => print!("{rendered}"),
    }

    let violations = out.report.violations();
    if violations.is_empty() {
        Ok(())
    } else {
        for v in &violations {
            eprintln!("violation: {v}");
        }
        Err(failure(anyhow::anyhow!(
            "{} invariant violation(s)",
            violations.len()
        )))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn run(node: NodeArgs, tuning: TuningArgs) -> Result<(), Exit> {
    node.check_topology().map_err(usage)?;
    let node_cfg = node.node_config(&tuning).map_err(usage)?;
    let mut cfg = LiveConfig::new(node_cfg);
    cfg.detector = tuning.detector().map_err(usage)?;
    cfg.control = Some(node.control);
    cfg.listen = node.listen;
    cfg.peers = node.peers.clone();
    cfg.log_path = node.log.clone();
    if let Some(path) = &node.script {
        let shape = tuning.pulse();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))
            .map_err(usage)?;
        let script = parse_script(&text, shape.len_us())
            .with_context(|| format!("{}", path.display()))
            .map_err(usage)?;
        let streams = synth(&script, &shape).map_err(|e| usage(e.into()))?;
        cfg.source = Some(Box::new(ScriptedSource::new(streams.interleaved())));
    }

    let live = LiveNode::spawn(cfg)
        .context("cannot start node")
        .map_err(usage)?;
    {
        let mut stdout = std::io::stdout().lock();
        if let Some(addr) = live.control_addr() {
            let _ = writeln!(stdout, "control listening on {addr}");
        }
        if let Some(addr) = live.link_addr() {
            let _ = writeln!(stdout, "links listening on {addr}");
        }
        let _ = stdout.flush();
    }

    match node.exit_after_ms {
        Some(ms) => {
            std::thread::sleep(Duration::from_millis(ms));
            live.shutdown().map_err(|e| failure(e.into()))?;
        }
        None => {
            live.wait().map_err(|e| failure(e.into()))?;
        }
    }
    Ok(())
}

trait ParseDefaults {
    fn parse_defaults() -> Self;
}

impl<T: clap::Args> ParseDefaults for T {
    fn parse_defaults() -> Self {
        #[derive(Parser)]
        struct Wrap<A: clap::Args> {
            #[command(flatten)]
            inner: A,
        }
        Wrap::<T>::parse_from(["solefultap"]).inner
    }
}
