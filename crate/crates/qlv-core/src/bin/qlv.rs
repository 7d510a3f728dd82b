//! Command-line surface: fidelity-curve generation, Bell-vs-GHZ strategy
//! comparison, protocol and attack scenarios, and the invariant selftest.
//!
//! Exit codes: 0 success/accept, 1 selftest failure, 2 usage or
//! configuration error, 3 verification reject.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use qlv_core::analysis::{self, CurveChannel};
use qlv_core::protocol::{ProtocolWorld, ScenarioConfig};
use qlv_core::selftest;
use qlv_core::QlvError;

#[derive(Parser)]
#[command(
    name = "qlv",
    about = "Quantum location verification under decoherence: curves, strategy \
             comparisons, protocol simulation and selftest",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct IoArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output file (CSV for curves/compare, verdict JSON for protocol).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the p grid, as START:END:POINTS.
    #[arg(long)]
    grid: Option<String>,
    /// Suppresses the summary printed to standard output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generates fidelity-vs-decoherence curves as CSV.
    Curves(IoArgs),
    /// Compares the Bell-pair and GHZ strategies per station count.
    Compare(IoArgs),
    /// Runs a verification scenario and writes the verdict and trace.
    Protocol(ProtocolArgs),
    /// Runs an adversarial scenario; identical mechanics to `protocol`.
    Attack(ProtocolArgs),
    /// Runs the invariant suite and reports per-group pass/fail.
    Selftest {
        #[arg(long)]
        quiet: bool,
    },
}

#[derive(Args)]
struct ProtocolArgs {
    /// Scenario configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Verdict output path (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Event-trace output path (JSON lines); defaults to "<out>.trace.jsonl".
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Overrides the seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppresses the verdict summary on standard output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    start: f64,
    end: f64,
    points: usize,
}

impl GridSpec {
    fn to_grid(&self) -> Result<Vec<f64>, QlvError> {
        if self.points == 0 || !self.start.is_finite() || !self.end.is_finite() {
            return Err(QlvError::Config(format!(
                "grid must have at least one point and finite bounds, got {self:?}"
            )));
        }
        if self.end < self.start {
            return Err(QlvError::Config(format!(
                "grid end {} below start {}",
                self.end, self.start
            )));
        }
        Ok(analysis::linspace(self.start, self.end, self.points))
    }
}

fn default_grid_spec() -> GridSpec {
    GridSpec {
        start: 0.0,
        end: 0.5,
        points: 101,
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurvesConfig {
    channels: Vec<CurveChannel>,
    #[serde(rename = "numQubits")]
    num_qubits: Vec<usize>,
    #[serde(default = "default_grid_spec")]
    grid: GridSpec,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareConfig {
    channel: CurveChannel,
    #[serde(rename = "numStations")]
    num_stations: Vec<usize>,
    #[serde(default = "default_grid_spec")]
    grid: GridSpec,
    #[serde(default)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Curves(args) => run_curves(&args),
        Command::Compare(args) => run_compare(&args),
        Command::Protocol(args) | Command::Attack(args) => run_protocol(&args),
        Command::Selftest { quiet } => Ok(run_selftest(quiet)),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, QlvError> {
    let text = fs::read_to_string(path)
        .map_err(|e| QlvError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| QlvError::Config(format!("{}: {e}", path.display())))
}

fn parse_grid_flag(flag: &str) -> Result<Vec<f64>, QlvError> {
    let parts: Vec<&str> = flag.split(':').collect();
    let [start, end, points] = parts.as_slice() else {
        return Err(QlvError::Config(format!(
            "--grid expects START:END:POINTS, got {flag:?}"
        )));
    };
    let spec = GridSpec {
        start: start
            .parse()
            .map_err(|e| QlvError::Config(format!("--grid start: {e}")))?,
        end: end
            .parse()
            .map_err(|e| QlvError::Config(format!("--grid end: {e}")))?,
        points: points
            .parse()
            .map_err(|e| QlvError::Config(format!("--grid points: {e}")))?,
    };
    spec.to_grid()
}

fn resolve_grid(flag: &Option<String>, config_grid: &GridSpec) -> Result<Vec<f64>, QlvError> {
    match flag {
        Some(text) => parse_grid_flag(text),
        None => config_grid.to_grid(),
    }
}

fn run_curves(args: &IoArgs) -> Result<ExitCode, QlvError> {
    let config: CurvesConfig = read_config(&args.config)?;
    if config.channels.is_empty() || config.num_qubits.is_empty() {
        return Err(QlvError::Config(
            "curves config needs nonempty channels and numQubits".into(),
        ));
    }
    let grid = resolve_grid(&args.grid, &config.grid)?;
    let seed = args.seed.or(config.seed);
    let csv = analysis::curves_to_csv(&config.channels, &config.num_qubits, &grid, seed)?;
    fs::write(&args.out, &csv)?;
    if !args.quiet {
        print_curve_summary(&config.channels, &config.num_qubits, seed)?;
        println!(
            "wrote {} rows to {}",
            csv.lines().count() - 1,
            args.out.display()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn print_curve_summary(
    channels: &[CurveChannel],
    num_qubits: &[usize],
    seed: Option<u64>,
) -> Result<(), QlvError> {
    println!("channel                N   F(0.05)   F(0.10)   F(0.20)");
    for channel in channels {
        for &n in num_qubits {
            let mut row = format!("{:<22} {:<3}", channel.family_name(), n);
            for p in [0.05, 0.1, 0.2] {
                let (f, _) = channel.evaluate(n, p, seed)?;
                row.push_str(&format!(" {f:9.6}"));
            }
            println!("{row}");
        }
    }
    Ok(())
}

fn run_compare(args: &IoArgs) -> Result<ExitCode, QlvError> {
    let config: CompareConfig = read_config(&args.config)?;
    if config.num_stations.is_empty() {
        return Err(QlvError::Config("compare config needs numStations".into()));
    }
    let grid = resolve_grid(&args.grid, &config.grid)?;
    let seed = args.seed.or(config.seed);
    let csv = analysis::comparison_to_csv(&config.channel, &config.num_stations, &grid, seed)?;
    fs::write(&args.out, &csv)?;
    if !args.quiet {
        for &n in &config.num_stations {
            let cmp = analysis::strategy_comparison(n, &config.channel, &grid, seed)?;
            match cmp.crossover_p {
                Some(p) => {
                    println!("N={n}: Bell strategy overtakes GHZ from p = {p:.4} on this grid")
                }
                None => println!("N={n}: GHZ strategy leads across the whole grid"),
            }
        }
        println!("wrote {}", args.out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn run_protocol(args: &ProtocolArgs) -> Result<ExitCode, QlvError> {
    let mut config: ScenarioConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    let (verdict, trace) = ProtocolWorld::run(config)?;

    let verdict_json = serde_json::to_string_pretty(&verdict)?;
    fs::write(&args.out, verdict_json + "\n")?;
    let trace_path = args.trace.clone().unwrap_or_else(|| {
        let mut name = args.out.as_os_str().to_owned();
        name.push(".trace.jsonl");
        PathBuf::from(name)
    });
    fs::write(&trace_path, ProtocolWorld::trace_to_jsonl(&trace)?)?;

    if !args.quiet {
        if verdict.accept {
            println!(
                "ACCEPT: all timing residuals within tolerance, error rate {:.4}",
                verdict.error_rate
            );
        } else {
            println!(
                "REJECT ({}): max residual {:.3e} s, error rate {:.4}",
                verdict.reject_reasons.join(", "),
                verdict.max_residual_s(),
                verdict.error_rate
            );
        }
        println!(
            "verdict: {}  trace: {}",
            args.out.display(),
            trace_path.display()
        );
    }
    Ok(if verdict.accept {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

fn run_selftest(quiet: bool) -> ExitCode {
    let results = selftest::run_selftest();
    let mut all_passed = true;
    for group in &results {
        if group.passed {
            if !quiet {
                println!("PASS {}", group.name);
            }
        } else {
            all_passed = false;
            println!("FAIL {}: {}", group.name, group.detail);
        }
    }
    if all_passed {
        if !quiet {
            println!("selftest: all {} groups passed", results.len());
        }
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
