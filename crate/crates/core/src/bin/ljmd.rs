use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ljmd::cli::{bench, simulate, write_bench, Overrides};
use ljmd::config::RunConfig;
use ljmd::output::{write_text, xyz_frame};
use ljmd::runtime::Decomposition;
use ljmd::scenario::generate_scenario;
use ljmd::Error;

#[derive(Parser)]
#[command(name = "ljmd", version, about = "Lennard-Jones molecular dynamics with kd-tree load balancing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Uniform,
    Kd,
}

impl From<Method> for Decomposition {
    fn from(m: Method) -> Self {
        match m {
            Method::Uniform => Decomposition::UniformGrid,
            Method::Kd => Decomposition::KdTree,
        }
    }
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (INI).
    config: PathBuf,
    #[arg(long)]
    decomposition: Option<Method>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured schedule and write outputs.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run the scenario at several worker counts and write a scaling CSV.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated worker counts.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        workers: Vec<usize>,
    },
    /// Write the initial configuration as XYZ.
    MakeScenario {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "scenario.xyz")]
        output: PathBuf,
    },
    /// Validate a configuration and print its canonical form.
    CheckConfig { config: PathBuf },
}

fn load(common: &Common, workers: Option<usize>) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::from_path(&common.config)?;
    Overrides {
        workers,
        decomposition: common.decomposition.map(Into::into),
        seed: common.seed,
    }
    .apply(&mut cfg)?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { common, workers } => {
            let cfg = load(&common, workers)?;
            let res = simulate(&cfg, Some(&common.output_dir))?;
            let b = &res.bench;
            eprintln!(
                "N={} steps={} wall={:.3}s steps/s={:.3} condensed={} ell={}",
                b.n,
                b.steps_completed,
                b.wall_seconds,
                b.steps_per_second,
                b.condensed,
                b.ell.map(|e| format!("{e:.3}")).unwrap_or_else(|| "NA".into())
            );
        }
        Command::Bench { common, workers } => {
            let cfg = load(&common, None)?;
            let rows = bench(&cfg, &workers)?;
            let file = cfg.output.bench.clone().unwrap_or_else(|| "bench.csv".into());
            write_bench(&common.output_dir.join(file), &rows)?;
            for (b, s) in &rows {
                eprintln!("workers={} steps/s={:.3} speedup={:.3} imbalance={:.3}", b.workers, b.steps_per_second, s, b.imbalance);
            }
        }
        Command::MakeScenario { common, output } => {
            let cfg = load(&common, None)?;
            let species = cfg.species_table()?;
            let masses: Vec<f64> = species.species().iter().map(|s| s.mass).collect();
            let g = generate_scenario(&cfg.scenario, &cfg.domain, cfg.cutoff, cfg.scenario_species(), &masses, cfg.schedule.seed)?;
            let comment = format!("{} liquid={} seed={}", cfg.scenario.kind.as_str(), g.n_liquid, cfg.schedule.seed);
            write_text(&common.output_dir.join(output), &xyz_frame(&g.molecules, &species, &comment))?;
            eprintln!("{} molecules ({} liquid)", g.molecules.len(), g.n_liquid);
        }
        Command::CheckConfig { config } => {
            let cfg = RunConfig::from_path(&config)?;
            print!("{}", cfg.to_ini());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
