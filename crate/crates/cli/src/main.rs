use clap::{Parser, Subcommand};
use qclat::config::RunConfig;
use qclat::{runner, CliError};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qclat", version, about = "Mixed-order quasicontinuum solver for beam lattices")]
struct Cli {
    /// Output root (overrides QCLAT_OUTPUT_ROOT).
    #[arg(long, global = true, env = "QCLAT_OUTPUT_ROOT")]
    output_root: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one benchmark.
    Run { config: PathBuf },
    /// Run the sweep points of a benchmark.
    Sweep {
        config: PathBuf,
        /// Sweep points solved concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// First- vs mixed-order error against the fully resolved Cook membrane.
    CompareOrders {
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Recompute and dump the optimal sampling weights of a mesh document.
    WeightsAudit { mesh: PathBuf },
}

fn go(cli: Cli) -> Result<(), CliError> {
    let root = cli.output_root.as_deref();
    match cli.cmd {
        Cmd::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let (dir, s) = runner::run(&cfg, root)?;
            println!("{}: {} reps / {} cells, max sigma_t {:.6e}", dir.display(), s.n_reps, s.n_cells, s.max_sigma_t);
            if let Some(f) = &s.fracture {
                println!("K_IC/(sigma_f sqrt(l)) = {:.6e}, critical beam {:.2} cells from the tip", f.k_ic_bar, f.tip_distance);
            }
        }
        Cmd::Sweep { config, jobs } => {
            let cfg = RunConfig::load(&config)?;
            let (dir, s) = runner::sweep(&cfg, root, jobs)?;
            println!("{}: {} points", dir.display(), s.points.len());
            if let Some(f) = &s.fit {
                println!("D = {:.4}, d = {:.4} (log residual {:.2e})", f.prefactor, f.exponent, f.residual);
            }
            if let Some(v) = s.variation {
                println!("critical displacement variation {:.2}%", 100.0 * v);
            }
        }
        Cmd::CompareOrders { config, jobs } => {
            let cfg = RunConfig::load(&config)?;
            let (dir, s) = runner::compare_orders(&cfg, root, jobs)?;
            println!("{}: reference max u_y {:.6e}", dir.display(), s.reference_max_uy);
            for r in &s.rows {
                println!("  spacing {:>3} {:?}: density {:.4}, error {:.4}", r.spacing, r.order, r.rep_density, r.error);
            }
        }
        Cmd::WeightsAudit { mesh } => {
            let (dir, s) = runner::weights_audit(&mesh, root)?;
            println!(
                "{}: {} cells, {} sampling points, total weight {}",
                dir.display(),
                s.n_cells,
                s.n_points,
                s.total_weight
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match go(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qclat: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
