//! `fbi`: command line front end for the flat-band interacting model.

mod commands;
mod config;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use commands::Output;
use config::{Common, Format};

#[derive(Parser, Debug)]
#[command(name = "fbi", version, about = "Flat bands, form factors and Hartree-Fock ground states of chiral twisted graphene")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Magic angles and their multiplicities.
    Magic(commands::MagicArgs),
    /// Band energies along a path in the moire Brillouin zone.
    Bands(commands::BandsArgs),
    /// Form-factor identities, with optional table and basis dumps.
    Formfactor(commands::FormFactorArgs),
    /// Hartree and Fock energies of the FSDs and random states.
    Hf(commands::HfArgs),
    /// Exact diagonalisation of the interacting model on a small grid.
    Ed(commands::EdArgs),
    /// Uniqueness criteria for the FSD ground states.
    Verify(commands::VerifyArgs),
    /// Theta-function identities and closed-form flat bands.
    Elliptic(commands::EllipticArgs),
}

fn run(cli: Cli) -> Result<()> {
    let default_format = if matches!(cli.cmd, Cmd::Bands(_)) { Format::Csv } else { Format::Json };
    let cfg = cli.common.resolve(default_format)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .context("threads: cannot build the worker pool")?;
    let out = match &cli.cmd {
        Cmd::Magic(a) => commands::magic(&cfg, a)?,
        Cmd::Bands(a) => commands::bands(&cfg, a)?,
        Cmd::Formfactor(a) => commands::formfactor(&cfg, a)?,
        Cmd::Hf(a) => commands::hf(&cfg, a)?,
        Cmd::Ed(a) => commands::ed(&cfg, a)?,
        Cmd::Verify(a) => commands::verify(&cfg, a)?,
        Cmd::Elliptic(a) => commands::elliptic_cmd(&cfg, a)?,
    };
    let text = match out {
        Output::Json(v) => serde_json::to_string_pretty(&commands::round_floats(v))? + "\n",
        Output::Csv(s) => s,
    };
    match &cfg.output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("output: cannot write {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
