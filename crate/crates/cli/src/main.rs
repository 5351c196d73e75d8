//! Command-line front end: analyze scenarios, run simulations, compare runs
//! and sweep the malicious-rate scale.

use clap::{Args, Parser, Subcommand};
use maxwork_core::engine::{self, EngineError, RunOutput};
use maxwork_core::metrics;
use maxwork_core::rational::{parse_rat, Rat};
use maxwork_core::scenario::Scenario;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Robust workload scheduling simulator and analyzer.
#[derive(Parser)]
#[command(name = "maxwork", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print maximal configurations, scan cutoffs and stability verdicts
    /// without simulating.
    Analyze {
        scenario: PathBuf,
    },
    /// Run a scenario and write its metrics series as CSV.
    Simulate(SimulateArgs),
    /// Run two scenarios and emit per-sample ratio/difference series
    /// (first scenario over the second).
    Compare {
        scenario_a: PathBuf,
        scenario_b: PathBuf,
        /// Output CSV path (defaults into the output directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scale the malicious rates by each factor and report the stability
    /// margins of the bundled strategies.
    Sweep {
        scenario: PathBuf,
        /// Comma-separated scale factors, e.g. "0,0.5,1,2" or "1/2,1,3/2".
        #[arg(long, value_delimiter = ',')]
        kappa_scale: Vec<String>,
        /// Output CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SimulateArgs {
    scenario: PathBuf,
    /// Output CSV path (defaults to `<out-dir>/<name>.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run this many seeds concurrently (seed, seed+1, ...), writing one
    /// CSV per run suffixed with the seed.
    #[arg(long, default_value_t = 1)]
    runs: u64,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

/// Default output directory: $MAXWORK_OUT_DIR or the working directory.
fn out_dir() -> PathBuf {
    std::env::var_os("MAXWORK_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn load(path: &Path) -> Result<Scenario, EngineError> {
    Ok(Scenario::load(path)?)
}

fn print_summary(out: &RunOutput) {
    let s = &out.summary;
    println!(
        "run `{}` ({}, scan {}): {} slots, seed {}",
        s.scenario_name, s.mode_label, s.scan_label, s.total_slots, s.seed
    );
    println!(
        "  verdict: {} (margin {})",
        out.verdict.stability(),
        out.verdict.margin
    );
    println!(
        "  completed {} genuine jobs, detected {} malicious ({} ran undetected), final queued work {}",
        s.genuine_completions, s.detections, s.executed_malicious, s.final_queue_work
    );
    if let Some(a) = &s.adaptive {
        println!("  adaptive warmup: {} slots", a.warmup_slots);
        for (j, (est, truth)) in a.estimated_rates.iter().zip(&a.true_rates).enumerate() {
            match est {
                Some((g, m)) => println!(
                    "    type {}: estimated ({:.4}, {:.4}) vs true ({:.4}, {:.4})",
                    j + 1,
                    g,
                    m,
                    truth.0,
                    truth.1
                ),
                None => println!("    type {}: no estimate (scan-all fallback)", j + 1),
            }
        }
        println!(
            "    recovered vector matches true optimum: {}",
            a.alpha_matches_true_opt
        );
    }
    for w in &s.warnings {
        println!("  warning: {w}");
    }
}

fn simulate(args: &SimulateArgs) -> Result<(), EngineError> {
    let mut scenario = load(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario = scenario.with_seed(seed);
    }
    let stem = if scenario.name.is_empty() {
        "run".to_string()
    } else {
        scenario.name.clone()
    };
    if args.runs <= 1 {
        let out_path = args
            .out
            .clone()
            .unwrap_or_else(|| out_dir().join(format!("{stem}.csv")));
        let output = engine::run(&scenario)?;
        metrics::export_csv(&output.samples, output.j_count, &out_path)?;
        print_summary(&output);
        println!("  wrote {}", out_path.display());
        return Ok(());
    }
    // Concurrent multi-seed execution: each run is an isolated engine.
    let base_seed = scenario.seed;
    let handles: Vec<_> = (0..args.runs)
        .map(|i| {
            let sc = scenario.with_seed(base_seed + i);
            let stem = stem.clone();
            let explicit_out = args.out.clone();
            std::thread::spawn(move || -> Result<(RunOutput, PathBuf), EngineError> {
                let out_path = match &explicit_out {
                    Some(p) => {
                        let mut p = p.clone();
                        let file = p
                            .file_stem()
                            .and_then(|s| s.to_str())
                            .unwrap_or("run")
                            .to_string();
                        let ext = p
                            .extension()
                            .and_then(|s| s.to_str())
                            .unwrap_or("csv")
                            .to_string();
                        p.set_file_name(format!("{file}-{}.{ext}", sc.seed));
                        p
                    }
                    None => out_dir().join(format!("{stem}-{}.csv", sc.seed)),
                };
                let output = engine::run(&sc)?;
                metrics::export_csv(&output.samples, output.j_count, &out_path)?;
                Ok((output, out_path))
            })
        })
        .collect();
    for h in handles {
        let (output, path) = h.join().expect("run thread panicked")?;
        print_summary(&output);
        println!("  wrote {}", path.display());
    }
    Ok(())
}

fn run_command(cmd: &Command) -> Result<(), EngineError> {
    match cmd {
        Command::Analyze { scenario } => {
            let scenario = load(scenario)?;
            let report = engine::analyze(&scenario)?;
            print!("{report}");
            Ok(())
        }
        Command::Simulate(args) => simulate(args),
        Command::Compare { scenario_a, scenario_b, out } => {
            let a = engine::run(&load(scenario_a)?)?;
            let b = engine::run(&load(scenario_b)?)?;
            print_summary(&a);
            print_summary(&b);
            let rows = engine::compare(&a, &b)?;
            let out_path = out
                .clone()
                .unwrap_or_else(|| out_dir().join("compare.csv"));
            let file = std::fs::File::create(&out_path)?;
            engine::write_compare_csv(&rows, std::io::BufWriter::new(file))?;
            println!("wrote {}", out_path.display());
            Ok(())
        }
        Command::Sweep { scenario, kappa_scale, out } => {
            let scenario = load(scenario)?;
            let scales: Vec<Rat> = kappa_scale
                .iter()
                .map(|s| {
                    parse_rat(s).map_err(|e| {
                        EngineError::Mismatch(format!("bad --kappa-scale entry: {e}"))
                    })
                })
                .collect::<Result<_, _>>()?;
            if scales.is_empty() {
                return Err(EngineError::Mismatch(
                    "--kappa-scale requires at least one factor".into(),
                ));
            }
            let rows = engine::sweep(&scenario, &scales)?;
            match out {
                Some(path) => {
                    let file = std::fs::File::create(path)?;
                    engine::write_sweep_csv(&rows, std::io::BufWriter::new(file))?;
                    println!("wrote {}", path.display());
                }
                None => {
                    engine::write_sweep_csv(&rows, std::io::stdout().lock())?;
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_command(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = if e.is_config() { "configuration" } else { "runtime" };
            eprintln!("{category} error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
