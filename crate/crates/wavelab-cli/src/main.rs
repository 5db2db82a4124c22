//! Command-line driver: exponent tables, simulations, radiation
//! extraction, decomposition studies, linear validation and the preset
//! pipelines. All numeric output goes to CSV files under `--out`; reruns
//! with `--deterministic` are byte-identical.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use wavelab::config::parse_config;
use wavelab::csvout::CsvWriter;
use wavelab::exponents::{critical_exponent, lower_exponent, parse_rational, rational_lattice};
use wavelab::presets::{
    run_config_experiment, run_preset, write_exponent_row, OutputSelection,
};
use wavelab::solver::set_compute_threads;

#[derive(Parser)]
#[command(
    name = "wavelab",
    version,
    about = "Numerical laboratory for light-cone fluxes, radiation fields and exterior scattering of defocusing semilinear waves"
)]
struct Cli {
    /// Worker threads for the Cartesian step kernel (output is identical
    /// for any value).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Force the deterministic reduction order (currently always on; the
    /// flag is recorded in manifests).
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration (TOML with [grid]/[problem]/[diagnostics]).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV series and the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Exact rational exponent table for one (d, p) or a sweep.
    Exponents {
        #[arg(long)]
        d: u32,
        /// Exponent as "num/den" or an integer, e.g. 4 or 9/4.
        #[arg(long)]
        p: Option<String>,
        /// Sweep 50 rational p values over the admissible range instead.
        #[arg(long)]
        table_sweep: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Time integration with energy/flux/morawetz series.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Scheme override: leapfrog | conservative.
        #[arg(long)]
        scheme: Option<String>,
        /// Write a CWV1 snapshot every N steps (0 = never).
        #[arg(long, default_value_t = 0)]
        snapshot_every: usize,
    },
    /// Simulation plus radiation-profile extraction outputs.
    Radiation {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Simulation plus the cone-shell decomposition outputs.
    Decompose {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Linear validation: convergence orders against the exact free wave.
    Validate {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Canned experiment pipelines.
    Preset {
        /// exponent-table | linear-validate | exterior-scattering |
        /// decomposition-study
        name: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    set_compute_threads(cli.threads);

    match cli.command {
        Command::Exponents {
            d,
            p,
            table_sweep,
            out,
        } => {
            std::fs::create_dir_all(&out)?;
            let path = out.join("exponents.csv");
            let mut w = CsvWriter::create(
                &path,
                &[
                    "d", "p", "p_e", "s_p", "q", "r", "k1", "k2", "kappa1", "kappa2",
                    "admissible",
                ],
            )?;
            if table_sweep {
                let lo = lower_exponent(d);
                let hi = critical_exponent(d).map_err(|e| anyhow::anyhow!("{e}"))?;
                for p in rational_lattice(lo, hi, 50) {
                    write_exponent_row(&mut w, d, p).map_err(|e| anyhow::anyhow!("{e}"))?;
                }
            } else {
                let p = p.context("either --p or --table-sweep is required")?;
                let p = parse_rational(&p).map_err(|e| anyhow::anyhow!("{e}"))?;
                write_exponent_row(&mut w, d, p).map_err(|e| anyhow::anyhow!("{e}"))?;
            }
            let path = w.finish()?;
            println!("wrote {}", path.display());
        }
        Command::Simulate {
            cfg,
            scheme,
            snapshot_every,
        } => {
            let mut v = parse_config(&cfg.config)?;
            if let Some(s) = scheme {
                v.problem.scheme = s
                    .parse()
                    .map_err(|e| anyhow::anyhow!("--scheme: {e}"))?;
            }
            let manifest = run_config_experiment(
                &v,
                &cfg.out,
                OutputSelection {
                    series: true,
                    radiation: false,
                    decomposition: false,
                },
                snapshot_every,
            )?;
            println!(
                "simulate done: {} files, manifest digest {}",
                manifest.files.len(),
                manifest.digest()?
            );
        }
        Command::Radiation { cfg } => {
            let v = parse_config(&cfg.config)?;
            if v.diagnostics.window.is_none() {
                bail!("radiation extraction needs diagnostics.window = [R1, R2] in the config");
            }
            let manifest = run_config_experiment(
                &v,
                &cfg.out,
                OutputSelection {
                    series: true,
                    radiation: true,
                    decomposition: false,
                },
                0,
            )?;
            println!(
                "radiation done: {} files, manifest digest {}",
                manifest.files.len(),
                manifest.digest()?
            );
        }
        Command::Decompose { cfg } => {
            let v = parse_config(&cfg.config)?;
            if v.decomposition.is_none() {
                bail!("decompose needs a [decomposition] section in the config");
            }
            let manifest = run_config_experiment(
                &v,
                &cfg.out,
                OutputSelection {
                    series: true,
                    radiation: false,
                    decomposition: true,
                },
                0,
            )?;
            println!(
                "decompose done: {} files, manifest digest {}",
                manifest.files.len(),
                manifest.digest()?
            );
        }
        Command::Validate { out } => {
            let manifest = run_preset("linear-validate", &out)?;
            for f in &manifest.files {
                println!("wrote {}", f.name);
            }
        }
        Command::Preset { name, out } => {
            let manifest = run_preset(&name, &out)?;
            println!(
                "preset {name} done: {} files, manifest digest {}",
                manifest.files.len(),
                manifest.digest()?
            );
        }
    }
    Ok(())
}
