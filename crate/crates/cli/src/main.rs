// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use skewjoin::harness::{cost_only, run_on, validate, verify_all, Scale, SweepConfig};
use skewjoin::{
    gen_single_skew, gen_zipf, Dataset, ExperimentConfig, MergeMode, Placement, RandomMode, SingleSkewSpec,
    StrategyChoice, ZipfSpec,
};

/// Skewed distributed join simulator.
#[derive(Parser)]
#[command(name = "skewjoin", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesise a dataset file.
    Gen(GenArgs),
    /// Run one join and emit a report.
    Run(RunArgs),
    /// Run every point of a sweep file.
    Sweep(SweepArgs),
    /// Print model costs and the dispatcher's choice without executing.
    Cost(ClusterArgs),
    /// Execute every strategy and compare with the reference join.
    Verify(ClusterArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    rows: u64,
    /// Distinct keys for Zipf data, or non-skewed keys with --skew-key.
    #[arg(long, default_value_t = 1000)]
    distinct: u64,
    #[arg(long, default_value_t = 1.0)]
    zipf_z: f64,
    /// Generate single-skew data with this hot key instead of Zipf data.
    #[arg(long)]
    skew_key: Option<i64>,
    #[arg(long, default_value_t = 0.5, requires = "skew_key")]
    skew_frac: f64,
    #[arg(long, default_value_t = 8)]
    payload_width: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the keys as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    /// Probe table.
    #[arg(long)]
    r: PathBuf,
    /// Build table.
    #[arg(long)]
    s: PathBuf,
    #[arg(long, default_value_t = 12)]
    nodes: usize,
    #[arg(long, default_value = "auto")]
    strategy: StrategyChoice,
    #[arg(long, default_value_t = 0.05)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    gateway: usize,
    #[arg(long, default_value = "gather")]
    merge: MergeMode,
    /// balanced, hot:K or random.
    #[arg(long, default_value = "random")]
    placement: Placement,
    /// Seed for random placement and seeded redistribution.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Draw random destinations from a seeded generator instead of round-robin.
    #[arg(long)]
    seeded_random: bool,
    #[arg(long, default_value_t = 0)]
    hash_offset: i64,
    /// Runs averaged under random placement.
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Report zero wall times so output is reproducible byte for byte.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cluster: ClusterArgs,
    /// Compare the result with the reference join; exit 1 on mismatch.
    #[arg(long)]
    verify: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Multiply generated table sizes by ten.
    #[arg(long)]
    paper_scale: bool,
    /// CSV output; defaults to stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON output with the full report of every point.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    verify: bool,
}

enum Failure {
    Mismatch(String),
    Config(String),
}

impl From<skewjoin::Error> for Failure {
    fn from(e: skewjoin::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

impl ClusterArgs {
    fn config(&self) -> ExperimentConfig {
        let placement = match self.placement {
            Placement::Random(0) => Placement::Random(self.seed),
            p => p,
        };
        ExperimentConfig {
            strategy: self.strategy,
            nodes: self.nodes,
            gateway: self.gateway,
            threshold: self.threshold,
            merge: self.merge,
            placement,
            hash_offset: self.hash_offset,
            random_mode: if self.seeded_random {
                RandomMode::Seeded(self.seed)
            } else {
                RandomMode::RoundRobin
            },
            repeats: self.repeats,
            workers: self.workers,
            timing: !self.no_timing,
            ..ExperimentConfig::default()
        }
    }

    fn load(&self) -> Result<(ExperimentConfig, Dataset, Dataset), Failure> {
        let cfg = self.config();
        validate(&cfg)?;
        Ok((cfg, Dataset::load(&self.r)?, Dataset::load(&self.s)?))
    }
}

fn emit(text: &str, path: Option<&Path>) -> io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.write_all(b"\n")
        }
    }
}

fn gen(args: &GenArgs) -> Outcome {
    let ds = match args.skew_key {
        Some(skew_key) => gen_single_skew(&SingleSkewSpec {
            skew_key,
            skew_fraction: args.skew_frac,
            rows: args.rows,
            distinct_rest: args.distinct,
            seed: args.seed,
            payload_width: args.payload_width,
        })?,
        None => gen_zipf(&ZipfSpec {
            n_distinct: args.distinct,
            z: args.zipf_z,
            rows: args.rows,
            seed: args.seed,
            payload_width: args.payload_width,
        })?,
    };
    ds.save(&args.out)?;
    if let Some(csv) = &args.csv {
        ds.write_csv(BufWriter::new(File::create(csv)?))?;
    }
    log::info!("wrote {} rows to {}", ds.len(), args.out.display());
    Ok(())
}

fn run(args: &RunArgs) -> Outcome {
    let (mut cfg, r, s) = args.cluster.load()?;
    cfg.verify = args.verify;
    let report = run_on(&r, &s, &cfg)?;
    emit(&report.to_json()?, args.report.as_deref())?;
    match report.verified {
        Some(false) => Err(Failure::Mismatch(format!(
            "{} produced {} rows, which disagrees with the reference join",
            report.config.executed, report.metrics.result_count
        ))),
        _ => Ok(()),
    }
}

fn sweep(args: &SweepArgs) -> Outcome {
    let mut cfg = SweepConfig::load(&args.config)?;
    if args.paper_scale {
        cfg.scale = Scale::Full;
    }
    if args.verify {
        cfg.base.verify = true;
    }
    let result = skewjoin::harness::sweep(&cfg)?;
    match &args.csv {
        Some(p) => result.write_csv(BufWriter::new(File::create(p)?))?,
        None => result.write_csv(io::stdout().lock())?,
    }
    if let Some(p) = &args.json {
        std::fs::write(p, result.to_json()?)?;
    }
    if result.all_verified() {
        Ok(())
    } else {
        Err(Failure::Mismatch("at least one sweep point disagrees with the reference join".into()))
    }
}

fn cost(args: &ClusterArgs) -> Outcome {
    let (cfg, r, s) = args.load()?;
    let (costs, decision) = cost_only(&r, &s, &cfg)?;
    let out = serde_json::json!({ "cost_model": costs, "decision": decision });
    emit(&serde_json::to_string_pretty(&out).map_err(|e| Failure::Config(e.to_string()))?, None)?;
    Ok(())
}

fn verify(args: &ClusterArgs) -> Outcome {
    let (cfg, r, s) = args.load()?;
    let outcomes = verify_all(&r, &s, &cfg)?;
    let mut bad = Vec::new();
    for o in &outcomes {
        println!(
            "{:<9} {:>12} rows  {}",
            o.strategy.name(),
            o.result_count,
            if o.matches { "ok" } else { "MISMATCH" }
        );
        if !o.matches {
            bad.push(o.strategy.name());
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::Mismatch(format!("mismatch for {}", bad.join(", "))))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.cmd {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Cost(a) => cost(a),
        Command::Verify(a) => verify(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Mismatch(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
