use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use driftsel::eval::{downsample, read_report, summarize, write_report};
use driftsel::explain::explain_to_jsonl;
use driftsel::run::{read_snapshot, write_snapshot};
use driftsel::scenario::Scenario;
use driftsel::synth::generate_database;
use driftsel::{Error, RunConfig, Runner, Strategy, SynthDatabase, SynthSchema};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

#[derive(Parser)]
#[command(name = "driftsel", version, about = "Learned cardinality correction under workload drift")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic database and write its binary snapshot.
    Synth(SynthArgs),
    /// Run a benchmark and write one report CSV per strategy plus summary.json.
    Bench(BenchArgs),
    /// Convert PostgreSQL EXPLAIN (ANALYZE, FORMAT JSON) output to plan JSONL.
    ImportExplain(ImportArgs),
    /// Summarize a report CSV and write a downsampled copy for plotting.
    Report(ReportArgs),
    /// Suspend a run to a state snapshot, or resume one.
    #[command(subcommand)]
    State(StateCommand),
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("source").required(true))]
struct SynthArgs {
    /// Schema JSON document.
    #[arg(long, group = "source")]
    schema: Option<PathBuf>,
    /// Built-in scenario instead of a schema file.
    #[arg(long, group = "source")]
    scenario: Option<String>,
    /// Overrides the schema's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Replaces the configured strategies; repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    strategy: Vec<Strategy>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Output directory; defaults to the config's `output`, then `driftsel-out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ImportArgs {
    file: PathBuf,
    /// Plan id prefix; defaults to the file stem.
    #[arg(long)]
    prefix: Option<String>,
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    csv: PathBuf,
    /// Segment boundaries (steps) for the summary.
    #[arg(long, value_delimiter = ',')]
    boundaries: Vec<usize>,
    /// Rows kept in the plot CSV.
    #[arg(long, default_value_t = 2000)]
    points: usize,
    /// Plot CSV path; defaults to `<stem>.plot.csv` next to the input.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Subcommand)]
enum StateCommand {
    /// Run the first `until` steps and write the state snapshot.
    Dump {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        until: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Resume from a snapshot, finish the run and write its outputs.
    Load {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::Config(_) | Error::Validation { .. } | Error::Lookup { .. }) => EXIT_CONFIG,
        Some(Error::NonFinite(_) | Error::Singular(_)) => EXIT_NUMERIC,
        Some(_) => EXIT_DATA,
        None if e.chain().any(|c| c.is::<std::io::Error>()) => EXIT_DATA,
        None => EXIT_CONFIG,
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Synth(args) => synth(args),
        Command::Bench(args) => {
            let mut runner = runner(&args.run)?;
            log::info!("running {} steps", runner.config().n);
            runner.run()?;
            finish(&runner, args.out)
        }
        Command::ImportExplain(args) => import_explain(args),
        Command::Report(args) => report(args),
        Command::State(StateCommand::Dump { run, until, out }) => {
            let mut runner = runner(&run)?;
            if until > runner.config().n {
                bail!(Error::Config(format!("--until {until} is past the end of the stream")));
            }
            runner.run_until(until)?;
            write_snapshot(&runner.snapshot(), &out)?;
            println!("{} (next step {until})", out.display());
            Ok(())
        }
        Command::State(StateCommand::Load { run, state, out }) => {
            let mut runner = runner(&run)?;
            let snapshot = read_snapshot(&state).with_context(|| format!("reading {}", state.display()))?;
            runner.restore(snapshot)?;
            runner.run()?;
            finish(&runner, out)
        }
    }
}

fn load_config(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut config = RunConfig::load(&args.config).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("{}: {io}", args.config.display())),
        e => e,
    })?;
    if !args.strategy.is_empty() {
        config.strategy = driftsel::run::OneOrMany::Many(args.strategy.clone());
    }
    Ok(config)
}

fn runner(args: &RunArgs) -> anyhow::Result<Runner> {
    let config = load_config(args)?;
    log::info!("building workload (n = {}, seed = {})", config.n, config.seed);
    Ok(Runner::new(config)?)
}

fn finish(runner: &Runner, out: Option<PathBuf>) -> anyhow::Result<()> {
    let dir = out
        .or_else(|| runner.config().output.clone())
        .unwrap_or_else(|| PathBuf::from("driftsel-out"));
    let written = runner.write_outputs(&dir)?;
    let mut stdout = std::io::stdout().lock();
    for s in runner.summaries() {
        match s.corrected {
            Some(q) => writeln!(
                stdout,
                "{:<22} mean {:>9.3}  median {:>8.3}  p95 {:>9.3}  skipped {}",
                s.strategy, q.mean, q.median, q.p95, s.skipped
            )?,
            None => writeln!(stdout, "{:<22} no rows", s.strategy)?,
        }
    }
    for p in written {
        writeln!(stdout, "wrote {}", p.display())?;
    }
    Ok(())
}

fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let mut schema: SynthSchema = match (&args.schema, &args.scenario) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        (None, Some(name)) => Scenario::builtin(name, 0)?.schema,
        (None, None) => unreachable!("clap requires a source"),
    };
    if let Some(seed) = args.seed {
        schema.seed = seed;
    }
    let db: SynthDatabase = generate_database(&schema)?;
    let mut w = BufWriter::new(File::create(&args.out)?);
    db.write_snapshot(&mut w)?;
    w.flush()?;
    for t in &db.tables {
        log::info!("{}: {} rows, {} columns", t.name, t.rows, t.columns.len());
    }
    println!("{}", args.out.display());
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "plan".into(), |s| s.to_string_lossy().into_owned())
}

fn import_explain(args: ImportArgs) -> anyhow::Result<()> {
    let doc = std::fs::read_to_string(&args.file).with_context(|| format!("reading {}", args.file.display()))?;
    let prefix = args.prefix.unwrap_or_else(|| stem(&args.file));
    let jsonl = explain_to_jsonl(&doc, &prefix)?;
    match args.out {
        Some(path) => std::fs::write(&path, jsonl)?,
        None => std::io::stdout().lock().write_all(jsonl.as_bytes())?,
    }
    Ok(())
}

fn report(args: ReportArgs) -> anyhow::Result<()> {
    let file = File::open(&args.csv).with_context(|| format!("reading {}", args.csv.display()))?;
    let rows = read_report(BufReader::new(file))?;
    let summary = summarize(&stem(&args.csv), &rows, 0, &args.boundaries);
    let plot = args
        .plot
        .unwrap_or_else(|| args.csv.with_file_name(format!("{}.plot.csv", stem(&args.csv))));
    write_report(&downsample(&rows, args.points), BufWriter::new(File::create(&plot)?))?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    log::info!("wrote {}", plot.display());
    Ok(())
}
