use std::error::Error;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wamsplit::grid::{ieee39, load_case, GridCase};
use wamsplit::harness::{
    bundled, load_registry, run_live, run_replay, sweep, write_outputs, HarnessError, PipelineConfig, RunReport,
    SweepGrid, SweepPoint,
};
use wamsplit::sim::{EventScript, PmuStream};

/// Out-of-step detection and controlled islanding on simulated or recorded PMU streams.
#[derive(Debug, Parser)]
#[command(name = "wamsplit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario with detection and splitting in the loop.
    Run {
        /// Network case file; the bundled 39-bus case when omitted.
        #[arg(long)]
        case: Option<PathBuf>,
        /// Scenario file, or the name of a bundled scenario (flt1617, flt2122, trip2829).
        #[arg(long)]
        scenario: String,
        /// Pipeline configuration file; bundled defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the detectors and grouping over a recorded PMU stream without actuation.
    Replay {
        /// PMU stream CSV.
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Network the stream was recorded on; the bundled 39-bus case when omitted.
        #[arg(long)]
        case: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scenario template over a parameter grid.
    Sweep {
        #[arg(long)]
        case: Option<PathBuf>,
        /// Scenario file or bundled scenario name used as the template.
        #[arg(long)]
        template: String,
        /// Grid file with `fault_cycles`, `alpha_w` and an optional `config`.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_case_or_default(path: Option<&Path>) -> Result<GridCase, HarnessError> {
    match path {
        Some(p) => Ok(load_case(p)?),
        None => Ok(ieee39()),
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, HarnessError> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(bundled::config()),
    }
}

fn load_scenario(arg: &str) -> Result<EventScript, HarnessError> {
    let path = Path::new(arg);
    if path.exists() {
        let mut script = EventScript::load(path)?;
        if script.name.is_empty() {
            script.name = path.file_stem().map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned());
        }
        return Ok(script);
    }
    bundled::scenario(arg).ok_or_else(|| HarnessError::Config(format!("no scenario file or bundled scenario named {arg}")))
}

fn summary_line(r: &RunReport) -> String {
    let mut line = format!("{}: {}", r.scenario, r.verdict.as_str());
    if let Some(d) = &r.detection {
        line += &format!(" at t={:.3} s via {}", d.t, d.path);
    }
    if let Some(s) = &r.selection {
        line += &format!(", CGG {} cutset {}", s.scenario, s.cutset.join(" "));
    }
    line
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run {
            case,
            scenario,
            config,
            out,
        } => {
            let case = load_case_or_default(case.as_deref())?;
            let cfg = load_config(config.as_deref())?;
            let registry = load_registry(&cfg, &case)?;
            let script = load_scenario(&scenario)?;
            let result = run_live(&case, &script, &cfg, &registry).map_err(|e| e.context(&script.name))?;
            write_outputs(&out, &result, &case)?;
            println!("{}", summary_line(&result.report));
        }
        Command::Replay {
            stream,
            config,
            case,
            out,
        } => {
            let case = load_case_or_default(case.as_deref())?;
            let cfg = load_config(config.as_deref())?;
            let registry = load_registry(&cfg, &case)?;
            let file = File::open(&stream).map_err(|e| HarnessError::Io {
                path: stream.display().to_string(),
                source: e,
            })?;
            let data = PmuStream::read_csv(BufReader::new(file)).map_err(|e| HarnessError::from(e).context(stream.display()))?;
            let name = stream.file_stem().map_or_else(|| "replay".to_string(), |s| s.to_string_lossy().into_owned());
            let result = run_replay(&case, data, &cfg, &registry, &name)?;
            write_outputs(&out, &result, &case)?;
            println!("{}", summary_line(&result.report));
        }
        Command::Sweep {
            case,
            template,
            grid,
            out,
        } => {
            let case = load_case_or_default(case.as_deref())?;
            let grid = SweepGrid::load(&grid)?;
            let cfg = load_config(grid.config.as_deref())?;
            let registry = load_registry(&cfg, &case)?;
            let template = load_scenario(&template)?;
            let points = sweep(&case, &template, &cfg, &registry, &grid)?;
            write_sweep(&out, &points)?;
            for p in &points {
                println!("{}", summary_line(&p.report));
            }
        }
    }
    Ok(())
}

fn write_sweep(out: &Path, points: &[SweepPoint]) -> Result<(), HarnessError> {
    let io = |path: &Path, e: std::io::Error| HarnessError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let runs = out.join("runs");
    std::fs::create_dir_all(&runs).map_err(|e| io(&runs, e))?;
    let summary = out.join("summary.csv");
    let file = File::create(&summary).map_err(|e| io(&summary, e))?;
    SweepPoint::write_summary(points, file).map_err(|e| io(&summary, std::io::Error::other(e)))?;
    for p in points {
        let path = runs.join(format!("{}.json", p.report.scenario));
        let text = serde_json::to_string_pretty(&p.report).map_err(|e| HarnessError::Config(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| io(&path, e))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprint!("error: {e}");
            let mut source = e.source();
            while let Some(s) = source {
                eprint!(": {s}");
                source = s.source();
            }
            eprintln!();
            ExitCode::FAILURE
        }
    }
}
