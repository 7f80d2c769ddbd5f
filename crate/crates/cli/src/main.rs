use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use tcache::harness::output;
use tcache::harness::validate::{validate_small, ValidateOptions};
use tcache::harness::{run_experiment, run_preset, ExperimentConfig, PRESET_NAMES};
use tcache::model::DepBound;

#[derive(Parser)]
#[command(name = "tcache", version, about = "Run transactional edge cache experiments")]
struct Cli {
    /// Overrides the seed of every run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Where reports are written.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment described by a TOML file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a named sweep.
    Preset {
        name: String,
        /// Dotted key=value applied to the preset's base config.
        #[arg(long = "override", value_name = "KEY=VAL")]
        overrides: Vec<String>,
    },
    /// Randomized tiny histories through the real pipeline, checked
    /// against the brute-force oracle.
    ValidateSmall {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Dependency bound, a number or "unbounded".
        #[arg(long, default_value = "unbounded")]
        bound: String,
    },
    /// Print the desk-scale default config.
    DefaultConfig,
    /// List preset names.
    Presets,
}

fn parse_bound(s: &str) -> Result<DepBound> {
    match s {
        "unbounded" | "inf" => Ok(DepBound::Unbounded),
        n => Ok(DepBound::Finite(n.parse().context("bound must be a number or \"unbounded\"")?)),
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run { config } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let dir = cfg.output.dir.clone().unwrap_or(cli.out_dir);
            let r = run_experiment(&cfg)?;
            output::write_run(&dir, &r)?;
            print!("{}", output::summary_json(&r)?);
            eprintln!("wrote {}", dir.display());
        }
        Cmd::Preset { name, mut overrides } => {
            if !PRESET_NAMES.contains(&name.as_str()) {
                bail!("unknown preset {name:?}; known: {}", PRESET_NAMES.join(", "));
            }
            if let Some(s) = cli.seed {
                overrides.push(format!("seed={s}"));
            }
            let r = run_preset(&name, &overrides, Some(&cli.out_dir))?;
            print!("{}", r.csv);
            eprintln!("wrote {}", cli.out_dir.join(format!("{name}.csv")).display());
        }
        Cmd::ValidateSmall { trials, bound } => {
            let opts = ValidateOptions {
                trials,
                seed: cli.seed.unwrap_or(1),
                dep_bound: parse_bound(&bound)?,
                ..ValidateOptions::default()
            };
            let report = validate_small(&opts);
            println!(
                "trials {} committed {} aborted {} committed-inconsistent {} disagreements {} joint-failures {}",
                report.trials,
                report.read_only_committed,
                report.read_only_aborted,
                report.committed_inconsistent,
                report.disagreements,
                report.joint_failures
            );
            for (i, c) in report.counterexamples.iter().enumerate() {
                let path = cli.out_dir.join(format!("counterexample-{i}.json"));
                output::write_file(&path, &serde_json::to_string_pretty(c)?)?;
                eprintln!("counterexample written to {}", path.display());
            }
            if !report.passed() {
                bail!("validation failed");
            }
        }
        Cmd::DefaultConfig => print!("{}", ExperimentConfig::desk_default().to_toml()?),
        Cmd::Presets => {
            for p in PRESET_NAMES {
                println!("{p}");
            }
        }
    }
    Ok(())
}
