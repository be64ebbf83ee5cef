use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use haps_core::config::Experiment;
use haps_core::output::{self, RunManifest};
use haps_core::scenario::run_scenario;
use haps_core::{build_array, gain_matrix, parse_config_file, Result, ScenarioConfig, UserField};

#[derive(Parser, Debug)]
#[command(
    name = "haps",
    version,
    about = "Antenna-array capacity simulator for high-altitude platforms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configured experiment and write CSV results.
    Simulate {
        config: PathBuf,
        /// Output directory.
        #[arg(long, env = "HAPS_SIM_OUT", default_value = "out")]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the experiment kind, with default parameters.
        #[arg(long)]
        experiment: Option<String>,
        /// Also write the gain matrix of the first drop.
        #[arg(long)]
        dump_gains: bool,
    },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
    /// Write the array geometry only.
    Geometry {
        config: PathBuf,
        #[arg(long, env = "HAPS_SIM_OUT", default_value = "out")]
        out: PathBuf,
    },
}

fn manifest(
    cfg: &ScenarioConfig,
    config: &Path,
    seed: Option<u64>,
    experiment: &str,
) -> RunManifest {
    RunManifest {
        config_path: Some(config.to_path_buf()),
        output_dir: PathBuf::new(),
        seed_override: seed,
        experiment: experiment.to_string(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        files: Vec::new(),
    }
}

fn simulate(
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    experiment: Option<&str>,
    dump_gains: bool,
) -> Result<()> {
    let mut cfg = parse_config_file(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(name) = experiment {
        if cfg.experiment.name() != name {
            cfg.experiment = Experiment::from_name(name)?;
        }
    }
    cfg.validate()?;
    output::preflight(out)?;

    let result = run_scenario(&cfg)?;
    let mut tables = output::result_tables(&result);
    let geometry = build_array(&cfg.array_params(cfg.architecture))?;
    tables.push(output::geometry_table(&geometry));
    if dump_gains {
        let pts: Vec<(f64, f64)> = result
            .rates
            .iter()
            .filter(|r| r.drop == 0 && r.scheme == cfg.architecture)
            .map(|r| (r.x, r.y))
            .collect();
        if pts.is_empty() {
            log::warn!(
                "experiment {} has no served users; skipping gains dump",
                result.experiment
            );
        } else {
            let users = UserField::new(&pts, cfg.altitude_m)?;
            tables.push(output::gains_table(&gain_matrix(
                &geometry,
                &users,
                &cfg.pattern(),
            )));
        }
    }
    let m = output::emit_tables(
        out,
        &tables,
        manifest(&cfg, config, seed, &result.experiment),
    )?;

    println!("experiment: {}", result.experiment);
    println!("config hash: {}", result.config_hash);
    for scheme in cfg.schemes() {
        let rate = result.mean_sum_rate(scheme);
        if rate > 0.0 {
            println!(
                "{} mean sum rate: {:.4} Gbps",
                scheme.short_name(),
                rate / 1e9
            );
        }
    }
    for f in &m.files {
        println!("wrote {}", out.join(&f.file).display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            experiment,
            dump_gains,
        } => simulate(&config, &out, seed, experiment.as_deref(), dump_gains),
        Command::Validate { config } => {
            let cfg = parse_config_file(&config)?;
            println!(
                "ok: {} {} with {} users, experiment {}, config hash {}",
                cfg.architecture.short_name(),
                cfg.elements,
                cfg.user_count(),
                cfg.experiment.name(),
                cfg.hash()
            );
            Ok(())
        }
        Command::Geometry { config, out } => {
            let cfg = parse_config_file(&config)?;
            output::preflight(&out)?;
            let g = build_array(&cfg.array_params(cfg.architecture))?;
            let m = output::emit_tables(
                &out,
                &[output::geometry_table(&g)],
                manifest(&cfg, &config, None, "geometry"),
            )?;
            for f in &m.files {
                println!("wrote {}", out.join(&f.file).display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
