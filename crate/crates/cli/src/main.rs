//! `decoy-pns`: evaluate, sweep, simulate and design decoy-pulse links from
//! JSON scenario files.
//!
//! Exit status is 0 on success, 1 on usage, validation or I/O errors, and 2
//! when a design is infeasible or the Monte Carlo oracle disagrees with the
//! enumeration.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::SystemTime;

use clap::{Args, Parser, Subcommand, ValueEnum};
use decoy_pns::design::{select_decoy_mean, sweep, Axis, DesignConstraints, SweepSpec, REFERENCE_DECOY_GRID};
use decoy_pns::enumeration::{analyze, metrics};
use decoy_pns::monte_carlo::{
    compare, simulate, AgreementReport, Engine, McOptions, McTally, StreamCounters, TruncationMode,
};
use decoy_pns::report::{self, fmt_rate, MetricsRecord};
use decoy_pns::Scenario;

use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(
    name = "decoy-pns",
    version,
    about = "Decoy-pulse BB84 links under a photon-number-splitting attack"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the metrics of one scenario.
    Evaluate(EvaluateArgs),
    /// Evaluate a scenario along one axis and write a CSV (and charts).
    Sweep(SweepArgs),
    /// Run the Monte Carlo oracle and check it against the enumeration.
    Simulate(SimulateArgs),
    /// Pick a decoy mean that satisfies the design constraints.
    Design(DesignArgs),
    /// Write the reference loss, emission and decoy tables.
    Tables(TablesArgs),
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Also write metrics.csv, metrics.json and manifest.json here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AxisArg {
    #[value(name = "lambda_d")]
    LambdaD,
    #[value(name = "l_total")]
    LTotal,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::LambdaD => Axis::LambdaD,
            AxisArg::LTotal => Axis::LTotal,
        }
    }
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    axis: AxisArg,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    values: Vec<f64>,
    /// Also write rate.svg and ratios.svg.
    #[arg(long)]
    svg: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TruncationArg {
    Match,
    Physical,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EngineArg {
    SkipAhead,
    Exhaustive,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    replications: u32,
    /// Multiplier on the signal and decoy slot counts.
    #[arg(long, default_value_t = 1)]
    scale: u64,
    #[arg(long, value_enum, default_value = "match")]
    truncation: TruncationArg,
    #[arg(long, value_enum, default_value = "skip-ahead")]
    engine: EngineArg,
}

#[derive(Debug, Args)]
struct DesignArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Candidate decoy means; defaults to the reference grid.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    values: Option<Vec<f64>>,
    #[arg(long, default_value_t = 2.0)]
    min_yield_ratio: f64,
    #[arg(long, default_value_t = 12.0)]
    max_eve_ratio: f64,
}

#[derive(Debug, Args)]
struct TablesArgs {
    /// Base scenario for the decoy table.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// A run that did not succeed, with its exit status.
#[derive(Debug)]
enum Failure {
    Usage(String),
    /// Infeasible design or oracle disagreement.
    Verdict(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Verdict(_) => 2,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let args = argv[1..].to_vec();
    let started = SystemTime::now();
    let result = match cli.command {
        Command::Evaluate(a) => evaluate(a, args, started),
        Command::Sweep(a) => run_sweep(a, args, started),
        Command::Simulate(a) => run_simulate(a, args, started),
        Command::Design(a) => design(a, args, started),
        Command::Tables(a) => tables(a, args, started),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Verdict(msg) => eprintln!("{msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let scenario = Scenario::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    for w in scenario.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(scenario)
}

fn out_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], manifest: &mut RunManifest) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    manifest.outputs.push(name.to_string());
    Ok(())
}

fn finish(manifest: RunManifest, dir: &Path) -> Outcome {
    manifest
        .write(dir)
        .map_err(|e| usage(format!("{}: {e}", dir.display())))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(usage)?;
    Ok(buf)
}

fn evaluate(a: EvaluateArgs, args: Vec<String>, started: SystemTime) -> Outcome {
    let scenario = load_scenario(&a.scenario)?;
    let m = metrics(&scenario).map_err(usage)?;
    println!("rho_e_sd = {:.2}", m.rho_e_sd);
    println!("rho_y_sd = {:.2}", m.rho_y_sd);
    println!("R_k      = {}", fmt_rate(m.r_k));
    println!("y_bs     = {}", fmt_rate(m.y_bs));
    println!("y_bd     = {}", fmt_rate(m.y_bd));

    if let Some(dir) = a.out {
        out_dir(&dir)?;
        let mut manifest = RunManifest::new("evaluate", args, &scenario, None, started);
        let record = MetricsRecord::new(&scenario, &m);
        let csv = csv_bytes(|b| report::write_metrics_csv(&[record], b))?;
        write_file(&dir, "metrics.csv", &csv, &mut manifest)?;
        let json = serde_json::to_string_pretty(&record).map_err(usage)? + "\n";
        write_file(&dir, "metrics.json", json.as_bytes(), &mut manifest)?;
        finish(manifest, &dir)?;
    }
    Ok(())
}

fn run_sweep(a: SweepArgs, args: Vec<String>, started: SystemTime) -> Outcome {
    let scenario = load_scenario(&a.scenario)?;
    let axis = Axis::from(a.axis);
    let spec = SweepSpec::new(scenario, axis, a.values).map_err(usage)?;
    let points = sweep(&spec).map_err(usage)?;
    out_dir(&a.out)?;
    let mut manifest = RunManifest::new("sweep", args, &scenario, None, started);
    let csv = csv_bytes(|b| report::write_metrics_csv(&report::sweep_records(&points), b))?;
    write_file(&a.out, "sweep.csv", &csv, &mut manifest)?;
    if a.svg {
        let rate = report::rate_chart(axis, &points).to_svg();
        write_file(&a.out, "rate.svg", rate.as_bytes(), &mut manifest)?;
        let ratios = report::ratio_chart(axis, &points).to_svg();
        write_file(&a.out, "ratios.svg", ratios.as_bytes(), &mut manifest)?;
    }
    println!("{} points along {axis} written to {}", points.len(), a.out.display());
    finish(manifest, &a.out)
}

fn tally_csv(tallies: &[McTally]) -> Result<Vec<u8>, Failure> {
    fn rows(w: &mut csv::Writer<&mut Vec<u8>>, rep: u32, stream: &str, c: &StreamCounters) -> csv::Result<()> {
        let mut row = |name: String, v: u64| w.write_record([rep.to_string(), stream.to_string(), name, v.to_string()]);
        row("slots".into(), c.slots)?;
        row("eve_two_photon".into(), c.eve_two_photon)?;
        for (i, v) in c.optical.iter().enumerate() {
            row(format!("optical.k{}", i + 2), *v)?;
        }
        row("optical.beyond_order".into(), c.optical_beyond_order)?;
        row("optical".into(), c.optical_total)?;
        for (i, v) in c.photodetected.iter().enumerate() {
            row(format!("photodetected.k{}", i + 2), *v)?;
        }
        row("photodetected.beyond_order".into(), c.photodetected_beyond_order)?;
        row("photodetected".into(), c.photodetected_total)?;
        row("post_processed".into(), c.post_processed)
    }
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["replication", "stream", "counter", "count"])?;
        for t in tallies {
            rows(&mut w, t.replication, "signal", &t.signal)?;
            rows(&mut w, t.replication, "decoy", &t.decoy)?;
        }
        w.flush()?;
        Ok(())
    })
}

/// Replications allowed to disagree: one in thirty, as a 4σ test over a
/// couple of dozen counters flags a correct model about that often.
fn tolerated_failures(replications: u32) -> u32 {
    replications / 30
}

fn run_simulate(a: SimulateArgs, args: Vec<String>, started: SystemTime) -> Outcome {
    let scenario = load_scenario(&a.scenario)?;
    let options = McOptions {
        seed: a.seed,
        replications: a.replications,
        slots_scale: a.scale,
        truncation: match a.truncation {
            TruncationArg::Match => TruncationMode::MatchAnalytic,
            TruncationArg::Physical => TruncationMode::Physical,
        },
        engine: match a.engine {
            EngineArg::SkipAhead => Engine::SkipAhead,
            EngineArg::Exhaustive => Engine::Exhaustive,
        },
    };
    let analysis = analyze(&scenario).map_err(usage)?;
    let tallies = simulate(&scenario, &options).map_err(usage)?;
    let reports: Vec<AgreementReport> = tallies
        .iter()
        .map(|t| compare(&analysis, t))
        .collect::<Result<_, _>>()
        .map_err(usage)?;

    out_dir(&a.out)?;
    let mut manifest = RunManifest::new("simulate", args, &scenario, Some(a.seed), started);
    write_file(&a.out, "tally.csv", &tally_csv(&tallies)?, &mut manifest)?;
    let agreement = csv_bytes(|b| AgreementReport::write_csv(&reports, b))?;
    write_file(&a.out, "agreement.csv", &agreement, &mut manifest)?;
    finish(manifest, &a.out)?;

    for r in &reports {
        print!("{r}");
    }
    let passed = reports.iter().filter(|r| r.passed()).count() as u32;
    let mean_rk = tallies.iter().map(|t| t.metrics.r_k).sum::<f64>() / tallies.len() as f64;
    println!("{passed}/{} replications agree with the enumeration", reports.len());
    println!(
        "R_k analytic {} realized mean {}",
        fmt_rate(analysis.metrics.r_k),
        fmt_rate(mean_rk)
    );

    if a.replications - passed > tolerated_failures(a.replications) {
        return Err(Failure::Verdict(format!(
            "oracle disagreement: {} of {} replications failed",
            a.replications - passed,
            a.replications
        )));
    }
    Ok(())
}

fn design(a: DesignArgs, args: Vec<String>, started: SystemTime) -> Outcome {
    let scenario = load_scenario(&a.scenario)?;
    let constraints = DesignConstraints {
        min_yield_ratio: a.min_yield_ratio,
        max_eve_ratio: a.max_eve_ratio,
    };
    let grid = a.values.unwrap_or_else(|| REFERENCE_DECOY_GRID.to_vec());
    let report = select_decoy_mean(&scenario, &constraints, &grid).map_err(usage)?;
    print!("{report}");

    if let Some(dir) = a.out {
        out_dir(&dir)?;
        let mut manifest = RunManifest::new("design", args, &scenario, None, started);
        let csv = csv_bytes(|buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record([
                "lambda_d",
                "rho_e_sd",
                "rho_y_sd",
                "clutter_percent",
                "meets_yield",
                "meets_eve",
                "feasible",
            ])?;
            for r in &report.rows {
                w.write_record([
                    r.lambda_d.to_string(),
                    r.rho_e_sd.to_string(),
                    r.rho_y_sd.to_string(),
                    r.clutter_percent.map_or("undef".to_string(), |c| c.to_string()),
                    r.meets_yield.to_string(),
                    r.meets_eve.to_string(),
                    r.feasible().to_string(),
                ])?;
            }
            w.flush()?;
            Ok(())
        })?;
        write_file(&dir, "design.csv", &csv, &mut manifest)?;
        let json = serde_json::to_string_pretty(&report).map_err(usage)? + "\n";
        write_file(&dir, "design.json", json.as_bytes(), &mut manifest)?;
        finish(manifest, &dir)?;
    }

    if report.is_feasible() {
        Ok(())
    } else {
        Err(Failure::Verdict("no feasible decoy mean".to_string()))
    }
}

fn tables(a: TablesArgs, args: Vec<String>, started: SystemTime) -> Outcome {
    let scenario = load_scenario(&a.scenario)?;
    out_dir(&a.out)?;
    let mut manifest = RunManifest::new("tables", args, &scenario, None, started);
    let t1 = report::loss_table().map_err(usage)?;
    let t2 = report::emission_table().map_err(usage)?;
    let t4 = report::decoy_table(&scenario).map_err(usage)?;
    for (name, table) in [("table1.csv", &t1), ("table2.csv", &t2), ("table4.csv", &t4)] {
        let bytes = csv_bytes(|b| table.write_csv(b))?;
        write_file(&a.out, name, &bytes, &mut manifest)?;
    }
    println!("tables written to {}", a.out.display());
    finish(manifest, &a.out)
}
