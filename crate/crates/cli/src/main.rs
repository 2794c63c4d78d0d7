//! `matflow`: run a benchmark, rescore stored records, or drive the simulated
//! backend on one calculation directory.
//!
//! `bench` exit codes report harness health only: 0 when the run finished and
//! its reports were written, whatever the scores; 1 on infrastructure errors;
//! 2 on bad usage. `simulate` passes the backend's own status through.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use matflow::harness::{
    load_benchmark, read_records, run_benchmark, score_records, HarnessEnv, LlmSource, MachineReport, RunConfig, RunMode, RECORDS_DIR,
};
use matflow::llm::{ChatCompletionsClient, MockScript, ProviderConfig, ProviderOverrides};
use matflow::scoring::ScoringOptions;
use matflow::sim::SimBackend;
use matflow::workflow::ExternalBackend;
use matflow::TaskType;

/// Environment variable naming the provider config file when `--config` is absent.
const ENV_CONFIG: &str = "MATFLOW_CONFIG";
/// `simulate` exit status when the directory cannot be read as a calculation.
const EXIT_INPUT_ERROR: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "matflow", version, about = "LLM-driven VASP workflow benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[allow(clippy::large_enum_variant)]
#[derive(Subcommand, Debug)]
enum Command {
    /// Benchmark runs and rescoring.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Run the simulated backend in one calculation directory.
    Simulate { dir: PathBuf },
}

#[allow(clippy::large_enum_variant)]
#[derive(Subcommand, Debug)]
enum BenchCommand {
    /// Run every selected entry and write report.json, summary.txt and records/.
    Run(RunArgs),
    /// Rescore records written by an earlier run without re-running anything.
    Score(ScoreArgs),
}

#[derive(Args, Debug)]
struct ScoringFlags {
    /// Zero a TS accuracy term whose relative error exceeds 10%.
    #[arg(long)]
    ts_strict_gate: bool,
    /// Give no accuracy points to items that missed completion points.
    #[arg(long)]
    couple_accuracy: bool,
}

impl ScoringFlags {
    fn options(&self) -> ScoringOptions {
        ScoringOptions { ts_strict_gate: self.ts_strict_gate, couple_accuracy_to_completion: self.couple_accuracy }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    benchmark_dir: PathBuf,
    /// Comma-separated task types to run (SR, BS, AE, TS); all when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_task)]
    tasks: Option<Vec<TaskType>>,
    /// `mock:<script>` to replay a scripted answer file, or `live`.
    #[arg(long)]
    llm: LlmChoice,
    /// `sim` for the built-in simulator or `exec:<program>` for an external code.
    #[arg(long, default_value = "sim")]
    backend: BackendChoice,
    /// Extra argument for an `exec:` backend; repeatable.
    #[arg(long = "backend-arg", allow_hyphen_values = true)]
    backend_args: Vec<String>,
    /// Entries run concurrently.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    #[arg(long)]
    out: PathBuf,
    /// Single-prompt baseline: one monolithic request per entry, no retry.
    #[arg(long)]
    no_agent: bool,
    /// Replace the reports in an output directory that already has them.
    #[arg(long)]
    overwrite: bool,
    #[command(flatten)]
    scoring: ScoringFlags,
    #[command(flatten)]
    provider: ProviderFlags,
}

/// Live provider settings; each overrides the environment, which overrides the config file.
/// The credential is read from the environment or the file only, never from argv.
#[derive(Args, Debug)]
struct ProviderFlags {
    /// TOML file with endpoint, model, api_key, timeout_secs and temperature.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    timeout_secs: Option<u64>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// A run's output directory, or its records/ subdirectory.
    #[arg(long)]
    records: PathBuf,
    /// Print the machine report instead of the summary table.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    scoring: ScoringFlags,
}

#[derive(Debug, Clone)]
enum LlmChoice {
    Mock(PathBuf),
    Live,
}

impl std::str::FromStr for LlmChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            Some(("mock", path)) if !path.is_empty() => Ok(LlmChoice::Mock(path.into())),
            _ if s == "live" => Ok(LlmChoice::Live),
            _ => Err(format!("expected mock:<script> or live, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone)]
enum BackendChoice {
    Sim,
    Exec(String),
}

impl std::str::FromStr for BackendChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            Some(("exec", program)) if !program.is_empty() => Ok(BackendChoice::Exec(program.into())),
            _ if s == "sim" => Ok(BackendChoice::Sim),
            _ => Err(format!("expected sim or exec:<program>, got {s:?}")),
        }
    }
}

fn parse_task(s: &str) -> Result<TaskType, String> {
    TaskType::parse(s.trim()).ok_or_else(|| format!("unknown task type {s:?}; expected SR, BS, AE or TS"))
}

fn provider_config(flags: &ProviderFlags) -> Result<ProviderConfig> {
    let file_path = flags.config.clone().or_else(|| std::env::var_os(ENV_CONFIG).map(PathBuf::from));
    let file = match &file_path {
        Some(p) => ProviderOverrides::from_file(p)?,
        None => ProviderOverrides::default(),
    };
    let env = ProviderOverrides::from_env(|k| std::env::var(k).ok())?;
    let cli = ProviderOverrides {
        endpoint: flags.endpoint.clone(),
        model: flags.model.clone(),
        timeout_secs: flags.timeout_secs,
        ..Default::default()
    };
    Ok(ProviderConfig::resolve(cli, env, file)?)
}

fn bench_run(args: &RunArgs) -> Result<()> {
    if args.parallel == 0 {
        bail!("--parallel must be at least 1");
    }
    let mut env = match &args.llm {
        LlmChoice::Mock(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading mock script {}", path.display()))?;
            let script = MockScript::parse(&text).with_context(|| format!("mock script {}", path.display()))?;
            HarnessEnv::simulated(LlmSource::Mock(Arc::new(script)))
        }
        LlmChoice::Live => {
            let config = provider_config(&args.provider)?;
            log::info!("live provider {} model {}", config.endpoint, config.model);
            let mut env = HarnessEnv::simulated(LlmSource::Shared(Arc::new(ChatCompletionsClient::new(config.clone()))));
            env.llm_options.model = config.model;
            env.llm_options.temperature = config.temperature;
            env
        }
    };
    match &args.backend {
        BackendChoice::Sim if !args.backend_args.is_empty() => bail!("--backend-arg needs an exec: backend"),
        BackendChoice::Sim => {}
        BackendChoice::Exec(program) => {
            env.backend = Arc::new(ExternalBackend { program: program.clone(), args: args.backend_args.clone() })
        }
    }

    let bench = load_benchmark(&args.benchmark_dir)?;
    for w in &bench.warnings {
        eprintln!("warning: {w}");
    }
    let mut cfg = RunConfig::new(&args.out);
    cfg.tasks = args.tasks.clone();
    cfg.parallelism = args.parallel;
    cfg.mode = if args.no_agent { RunMode::NoAgent } else { RunMode::Agent };
    cfg.overwrite = args.overwrite;
    cfg.scoring = args.scoring.options();
    let run = run_benchmark(&bench, &env, &cfg)?;
    print!("{}", run.report.summary_text());
    eprintln!("reports written to {}", args.out.display());
    Ok(())
}

fn records_dir(path: &Path) -> PathBuf {
    let nested = path.join(RECORDS_DIR);
    if nested.is_dir() {
        nested
    } else {
        path.to_path_buf()
    }
}

fn bench_score(args: &ScoreArgs) -> Result<()> {
    let dir = records_dir(&args.records);
    let records = read_records(&dir)?;
    let mode = match records.first() {
        Some(first) if records.iter().any(|r| r.mode != first.mode) => bail!("{} mixes agent and no-agent records", dir.display()),
        Some(first) => first.mode,
        None => RunMode::default(),
    };
    let opts = args.scoring.options();
    let report = MachineReport::new(score_records(&records, &opts)?, &records, mode, opts);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.summary_text());
    }
    Ok(())
}

fn simulate(dir: &Path) -> ExitCode {
    match SimBackend::builtin().run_simulation(dir) {
        Ok(out) => {
            println!("status: {:?}", out.status);
            if let Some(e) = out.energy_trace.last() {
                println!("final energy: {e:.8} eV");
            }
            for v in &out.validation.violations {
                println!("[{}] {}", v.rule_id, v.message);
            }
            if !out.message.is_empty() {
                println!("{}", out.message);
            }
            ExitCode::from(out.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT_ERROR)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { dir } => return simulate(dir),
        Command::Bench(BenchCommand::Run(args)) => bench_run(args),
        Command::Bench(BenchCommand::Score(args)) => bench_score(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
