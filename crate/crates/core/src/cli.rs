//! Command-line front end.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{resolve_path, Config, ScenarioChoice};
use crate::error::{Error, Result};
use crate::figures::export_figures;
use crate::harness::{compare, run, run_many, RunSpec, SimLog};
use crate::mpc::build_horizon_qp;
use crate::plant::Fidelity;

#[derive(Debug, Parser)]
#[command(
    name = "sps-ems",
    version,
    about = "Ship power system energy management studies"
)]
pub struct Cli {
    /// JSON configuration; falls back to $SPS_EMS_CONFIG, then the shipped default.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Plant fidelity override.
    #[arg(long, global = true, value_name = "device|dispatch")]
    pub mode: Option<Fidelity>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,

    /// Seed recorded with the run; the simulation itself is deterministic.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Print nothing but errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario and write its CSV logs.
    Run {
        /// scenario-1, scenario-2, scenario-3 or custom (weights from the config).
        #[arg(long)]
        scenario: Option<ScenarioChoice>,
        /// Also write the QP of every controller solve as JSON lines.
        #[arg(long)]
        dump_qp: bool,
    },
    /// Simulate several scenarios and compare them.
    Compare {
        /// Comma-separated scenario names; the config's list by default.
        #[arg(long, value_delimiter = ',')]
        scenarios: Option<Vec<ScenarioChoice>>,
    },
    /// Check a configuration and print the resolved parameters.
    ValidateConfig {
        /// Print the resolved configuration as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Simulate the comparison scenarios and write only the figure data.
    ExportFigures {
        #[arg(long, value_delimiter = ',')]
        scenarios: Option<Vec<ScenarioChoice>>,
    },
}

/// Exit status for an error: 2 for configuration problems, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => 2,
        _ => 1,
    }
}

fn init_logging(cli: &Cli) {
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            2 => log::LevelFilter::Debug,
            _ => log::LevelFilter::Trace,
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match resolve_path(cli.config.as_deref()) {
        Some(path) => Config::load(&path)?,
        None => Config::shipped_default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path)
        .map_err(|e| Error::Export(format!("cannot create {}: {e}", path.display())))?;
    Ok(std::io::BufWriter::new(f))
}

fn write_logs(log: &SimLog, dir: &Path, suffix: &str) -> Result<()> {
    let mut w = create(&dir.join(format!("{}{suffix}.csv", log.name)))?;
    log.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&dir.join(format!("{}{suffix}-mpc.csv", log.name)))?;
    log.write_solves_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Export(format!("cannot create {}: {e}", dir.display())))
}

/// Keeps what an aborted run recorded before handing the error back.
fn salvage(err: Error, dir: &Path) -> Error {
    if let Error::RunAborted { log, .. } = &err {
        if write_logs(log, dir, ".partial").is_ok() {
            log::error!(
                "partial log written to {}",
                dir.join(format!("{}.partial.csv", log.name)).display()
            );
        }
    }
    err
}

fn dump_qps(spec: &RunSpec, log: &SimLog, dir: &Path) -> Result<()> {
    let mut w = create(&dir.join(format!("{}-qp.jsonl", log.name)))?;
    for s in &log.solves {
        let qp = build_horizon_qp(
            &spec.mpc,
            &spec.system,
            s.p_load,
            s.prev_pg,
            s.prev_pb,
            s.soc_measured,
        )?;
        let line = serde_json::json!({ "t": s.t, "qp": qp.problem.to_json() });
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn run_set(cli: &Cli, cfg: &Config, scenarios: &[ScenarioChoice]) -> Result<Vec<SimLog>> {
    let specs = scenarios
        .iter()
        .map(|&s| cfg.spec(s, cli.mode))
        .collect::<Result<Vec<_>>>()?;
    let mut logs = Vec::with_capacity(specs.len());
    let mut first_err = None;
    for r in run_many(&specs) {
        match r {
            Ok(log) => logs.push(log),
            Err(e) => {
                let e = salvage(e, &cli.out);
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(logs),
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let say = |msg: String| {
        if !cli.quiet {
            println!("{msg}");
        }
    };
    match &cli.command {
        Command::ValidateConfig { json } => {
            if *json {
                println!("{}", cfg.to_json_pretty());
            } else {
                print!("{}", cfg.resolved_table());
            }
        }
        Command::Run { scenario, dump_qp } => {
            let choice = scenario.unwrap_or(cfg.run.scenarios[0]);
            let spec = cfg.spec(choice, cli.mode)?;
            create_out(&cli.out)?;
            let log = run(&spec).map_err(|e| salvage(e, &cli.out))?;
            write_logs(&log, &cli.out, "")?;
            if *dump_qp {
                dump_qps(&spec, &log, &cli.out)?;
            }
            let last = log.rows.last().expect("completed runs have rows");
            say(format!(
                "{}: {} solves, final soc {:.6}, Q_L {:.6e} Ah -> {}",
                log.name,
                log.solves.len(),
                last.soc,
                last.q_loss,
                cli.out.join(format!("{}.csv", log.name)).display()
            ));
        }
        Command::Compare { scenarios } => {
            let list = scenarios
                .clone()
                .unwrap_or_else(|| cfg.run.scenarios.clone());
            create_out(&cli.out)?;
            let logs = run_set(cli, &cfg, &list)?;
            let report = compare(&logs)?;
            for log in &logs {
                write_logs(log, &cli.out, "")?;
            }
            let json = serde_json::to_string_pretty(&report)? + "\n";
            std::fs::write(cli.out.join("comparison.json"), json)?;
            let table = report.to_table();
            std::fs::write(cli.out.join("comparison.txt"), &table)?;
            export_figures(&logs, &cli.out)?;
            say(table);
        }
        Command::ExportFigures { scenarios } => {
            let list = scenarios
                .clone()
                .unwrap_or_else(|| cfg.run.scenarios.clone());
            create_out(&cli.out)?;
            let logs = run_set(cli, &cfg, &list)?;
            let files = export_figures(&logs, &cli.out)?;
            for f in files {
                say(f.display().to_string());
            }
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    init_logging(&cli);
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
