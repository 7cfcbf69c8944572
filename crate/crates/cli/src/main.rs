use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand};

use handoff_core::report::parse_report_ledger;
use handoff_core::stats::classify;
use handoff_core::{
    human_table, load_scenario, paper_scenario, render_report, report_text, run, strip_wsn, DirectionMap, Scenario,
    SimTime, StatsLedger,
};

#[derive(Parser)]
#[command(name = "handoff", version, about = "Mote-assisted cellular handoff simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its report.
    Run(RunArgs),
    /// Classify counter changes between a baseline and a run with motes.
    Compare(CompareArgs),
    /// Print the built-in scenario in the scenario file format.
    Scenario,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file, or `paper` for the built-in scene.
    #[arg(long)]
    scenario: String,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the scenario's duration, in seconds.
    #[arg(long)]
    until: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["baseline", "scenario"])))]
struct CompareArgs {
    #[arg(long, requires = "with_wsn", conflicts_with_all = ["scenario", "auto_baseline"])]
    baseline: Option<PathBuf>,
    #[arg(long, requires = "baseline")]
    with_wsn: Option<PathBuf>,
    /// Scenario to run with and without its motes.
    #[arg(long, requires = "auto_baseline")]
    scenario: Option<String>,
    #[arg(long, requires = "scenario")]
    auto_baseline: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Largest change still counted as insignificant.
    #[arg(long)]
    epsilon: Option<u64>,
    /// File of `layer.name=good|bad|neutral` direction overrides.
    #[arg(long)]
    directions: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure reported with exit status 1.
struct ScenarioFailure(anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for ScenarioFailure {
    fn from(e: E) -> Self {
        ScenarioFailure(e.into())
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn resolve_scenario(spec: &str, seed: Option<u64>, until: Option<f64>) -> Result<Scenario> {
    let mut s = if spec == "paper" {
        paper_scenario()
    } else {
        let text = read(Path::new(spec))?;
        load_scenario(&text).with_context(|| format!("in scenario {spec}"))?
    };
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(until) = until {
        s.duration = SimTime::try_from_secs(until).context("--until")?;
    }
    Ok(s)
}

fn cmd_run(args: RunArgs) -> Result<(), ScenarioFailure> {
    let s = resolve_scenario(&args.scenario, args.seed, args.until)?;
    let report = run(&s)?;
    let table = human_table(&report);
    let text = format!("{}{}", report_text(&report), table);
    fs::write(&args.out, text).with_context(|| format!("cannot write {}", args.out.display()))?;
    print!("{table}");
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), ScenarioFailure> {
    let mut dirs = DirectionMap::default();
    if let Some(path) = &args.directions {
        dirs = dirs.with_overrides(&read(path)?)?;
    }
    let (baseline, with_wsn, default_epsilon) = match (&args.baseline, &args.with_wsn, &args.scenario) {
        (Some(b), Some(w), _) => {
            let parse = |p: &Path| -> Result<StatsLedger> {
                parse_report_ledger(&read(p)?).with_context(|| format!("in report {}", p.display()))
            };
            (parse(b)?, parse(w)?, 0)
        }
        (_, _, spec) => {
            let spec = spec.as_deref().expect("clap requires a source");
            let with = resolve_scenario(spec, args.seed, None)?;
            let base = strip_wsn(&with);
            let (a, b) = std::thread::scope(|scope| {
                let base_run = scope.spawn(|| run(&base));
                let with_run = run(&with);
                (base_run.join().expect("baseline run panicked"), with_run)
            });
            (a?.ledger, b?.ledger, with.params.epsilon)
        }
    };
    let c = classify(&baseline, &with_wsn, &dirs, args.epsilon.unwrap_or(default_epsilon));
    let text = render_report(&with_wsn, Some(&c));
    if let Some(out) = &args.out {
        fs::write(out, &text).with_context(|| format!("cannot write {}", out.display()))?;
    }
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Scenario => {
            print!("{}", paper_scenario().to_text());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(ScenarioFailure(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
