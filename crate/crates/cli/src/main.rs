use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use densflow::gronwall::{gronwall_verify, GronwallInput};
use densflow::io::{write_json, write_ndjson, Check};
use densflow::studies;
use densflow::{Error, Result, RunConfig};

/// Density-dependent Navier–Stokes on the 2D torus, with estimate monitors.
#[derive(Parser)]
#[command(name = "densflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (`key = value` lines); for `gronwall-check`, a JSON input file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Single run: ledger, checks and requested snapshots.
    Run(Common),
    /// N-refinement study over nested bases.
    Converge {
        #[command(flatten)]
        common: Common,
        #[arg(long = "N-list", value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
    },
    /// Floor sequence `ρ₀ + 1/n` on a density with vacuum.
    VacuumSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long = "n-list", value_delimiter = ',', required = true)]
        n_list: Vec<u64>,
    },
    /// Paired runs with difference diagnostics.
    Uniqueness(Common),
    /// Verify the Gronwall-type lemma on sampled curves.
    GronwallCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Exact single-mode benchmark on a constant density.
    Taylor(Common),
}

fn prepare(common: &Common) -> Result<(PathBuf, PathBuf)> {
    let config = std::fs::canonicalize(&common.config).map_err(|e| {
        Error::InvalidInput(format!("cannot open config {}: {e}", common.config.display()))
    })?;
    std::fs::create_dir_all(&common.out)?;
    Ok((config, std::fs::canonicalize(&common.out)?))
}

fn report(checks: &[Check]) {
    for c in checks {
        println!("{} {}", if c.pass { "PASS" } else { "FAIL" }, c.check);
    }
}

fn single(config: &Path, out: &Path, benchmark: bool) -> Result<()> {
    let cfg = RunConfig::from_path(config)?;
    let run = if benchmark { studies::taylor(&cfg)? } else { studies::run(&cfg)? };
    studies::write_run(&run, out)?;
    report(&run.checks);
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(c) => {
            let (config, out) = prepare(&c)?;
            single(&config, &out, false)
        }
        Command::Taylor(c) => {
            let (config, out) = prepare(&c)?;
            single(&config, &out, true)
        }
        Command::Converge { common, n_list } => {
            let (config, out) = prepare(&common)?;
            let cfg = RunConfig::from_path(&config)?;
            let rep = studies::converge(&cfg, &n_list, Some(&out))?;
            for (w, d) in rep.n_list.windows(2).zip(&rep.differences) {
                println!("N {} -> {}: {d:.6e}", w[0], w[1]);
            }
            Ok(())
        }
        Command::VacuumSweep { common, n_list } => {
            let (config, out) = prepare(&common)?;
            let cfg = RunConfig::from_path(&config)?;
            let rep = studies::vacuum_sweep(&cfg, &n_list, Some(&out))?;
            for e in &rep.entries {
                match &e.error {
                    None => println!("n {}: sup |grad u|^2 = {:.6e}", e.n, e.sup_grad_sq.unwrap_or(f64::NAN)),
                    Some(msg) => println!("n {}: exit {} ({msg})", e.n, e.exit_code),
                }
            }
            if let Some(v) = rep.sup_grad_variation {
                println!("variation {v:.4e}");
            }
            Ok(())
        }
        Command::Uniqueness(c) => {
            let (config, out) = prepare(&c)?;
            let cfg = RunConfig::from_path(&config)?;
            let rep = studies::uniqueness(&cfg, Some(&out))?;
            report(&rep.checks);
            Ok(())
        }
        Command::GronwallCheck { common, tol } => {
            let (config, out) = prepare(&common)?;
            let text = std::fs::read_to_string(&config)?;
            let input: GronwallInput = serde_json::from_str(&text)?;
            let verdict = gronwall_verify(&input, tol)?;
            let check = Check::new(
                "gronwall",
                verdict.pass(),
                verdict.margin(),
                serde_json::to_value(&verdict)?,
            );
            write_json(&out.join("gronwall.json"), &verdict)?;
            write_ndjson(&out.join("checks.ndjson"), std::slice::from_ref(&check))?;
            report(std::slice::from_ref(&check));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("densflow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
