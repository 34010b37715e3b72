use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vpb::config::RunConfig;
use vpb::diagnostics::{decay_fit, read_history};
use vpb::scenario::{describe, run_scenario};
use vpb::weights::WeightParams;
use vpb::{Error, Result};

#[derive(Parser)]
#[command(name = "vpb", version, about = "Vlasov-Poisson-Boltzmann simulator for soft potentials with in-flow boundaries")]
struct Cli {
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the output directory in the configuration.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a TOML file.
    Run { config: PathBuf },
    /// Summarise a run-history CSV as JSON.
    Report {
        csv: PathBuf,
        /// Decay exponent used for the fit.
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Check a configuration and echo the derived parameters.
    Validate { config: PathBuf },
}

fn load(cli: &Cli, path: &PathBuf) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(d) = &cli.out_dir {
        cfg.output.dir = d.clone();
    }
    Ok(cfg)
}

fn init_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Unsupported(format!("thread pool: {e}")))
}

fn report(csv: &PathBuf, rho: f64) -> Result<serde_json::Value> {
    let rows = read_history(csv)?;
    let series: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.sup_w)).collect();
    let max = |f: &dyn Fn(&vpb::diagnostics::NormReport) -> f64| rows.iter().map(|r| f(r).abs()).fold(0.0, f64::max);
    let fit = match decay_fit(&series, rho) {
        Ok(fit) => serde_json::json!({ "defined": true, "lambda_hat": fit.lambda_hat, "amplitude": fit.amplitude, "rho": fit.rho_used, "r_squared": fit.r_squared }),
        Err(e) => serde_json::json!({ "defined": false, "reason": e.to_string() }),
    };
    let last = rows.last().expect("read_history rejects empty files");
    Ok(serde_json::json!({
        "rows": rows.len(),
        "t_final": last.t,
        "sup_w": { "initial": rows[0].sup_w, "final": last.sup_w, "max": max(&|r| r.sup_w) },
        "decay_fit": fit,
        "max_mass_residual": max(&|r| r.mass_residual),
        "max_energy_identity_residual": max(&|r| r.energy_identity_residual),
        "max_grad_phi_sup": max(&|r| r.grad_phi_sup),
        "max_boundary_plus": max(&|r| r.boundary_plus),
    }))
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(cli, config)?;
            init_threads(cfg.threads)?;
            let result = run_scenario(&cfg, &cfg.output.dir);
            if let Ok(s) = &result {
                for c in &s.checks {
                    eprintln!("{}", c.line());
                }
                println!("{}", serde_json::to_string_pretty(s).expect("summary serializes"));
            }
            result.map(|_| ())
        }
        Command::Report { csv, rho } => {
            let rho = rho.unwrap_or_else(|| WeightParams::default().rho());
            println!("{}", serde_json::to_string_pretty(&report(csv, rho)?).expect("json"));
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = load(cli, config)?;
            println!("{}", serde_json::to_string_pretty(&describe(&cfg)).expect("json"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
