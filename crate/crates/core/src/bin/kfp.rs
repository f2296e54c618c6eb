use clap::{Parser, Subcommand};
use kinetic_fp::error::Error;
use kinetic_fp::runner::{self, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

/// Petrov-Galerkin solver for a kinetic Fokker-Planck equation with an
/// inf-sup-stable trial space.
///
/// All commands read a single JSON configuration document; an annotated
/// example ships at config/example.json. Config sections:
///   problem    problem family and mesh resolutions (required)
///                kind = "stationary" (c, d) or "time_dependent_fp"
///                (q_inv in [0.1, 1], t_final = 0.75), n_t/n_x/n_v
///   solver     method = direct_lu | gmres | bi_cg_stab | cg,
///                rel_tol (1e-10), max_iter, preconditioner = none |
///                jacobi | ilu0 | ic0 | block_jacobi, gmres_restart (50);
///                omitted = automatic choice by system size
///   eigen      dense_threshold (6000), tol (1e-6), max_iter (2000)
///   solve      time_slices, phi_slices, slice_time
///   converge   n_x_list, n_v_list (stationary problems)
///   infsup     n_list (table resolutions n = n_x = n_v = 1/h)
///   sparsity   n_list
#[derive(Parser)]
#[command(name = "kfp", version, verbatim_doc_comment)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration document.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble and solve the configured problem, writing field/moment CSVs
    /// and a timing breakdown.
    Solve,
    /// Compute discrete inf-sup constants against the guaranteed lower
    /// bound over the configured resolutions.
    Infsup,
    /// Manufactured-solution convergence study with fitted orders.
    Converge,
    /// Nonzero statistics of the system matrix over the configured
    /// resolutions.
    Sparsity,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidArgument(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: &Cli) -> kinetic_fp::Result<()> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let cfg = RunConfig::from_file(config_path)?;
    let say = |msg: &str| {
        if !cli.quiet {
            println!("{msg}");
        }
    };
    match cli.command {
        Command::Solve => {
            let s = runner::run_solve(&cfg, &cli.out)?;
            say(&format!(
                "solved {} unknowns (nnz {}): relative residual {:.3e} in {} iterations",
                s.n_unknowns, s.nnz, s.rel_residual, s.solver_iterations
            ));
            say(&format!(
                "timings: assembly (incl. lifted basis) {:.2}s ({:.1}% of total), solve {:.2}s, postprocess {:.2}s",
                s.timings.assembly_secs,
                100.0 * s.timings.assembly_share,
                s.timings.solve_secs,
                s.timings.postprocess_secs
            ));
            if let (Some(l2), Some(x)) = (s.l2_error, s.x_error) {
                say(&format!(
                    "errors vs manufactured solution: L2 {l2:.6e}, X {x:.6e}"
                ));
            }
            if let Some(m) = s.mass_t0 {
                say(&format!("initial moment mass: {m:.6e}"));
            }
        }
        Command::Infsup => {
            let rows = runner::run_infsup(&cfg, &cli.out)?;
            for r in &rows {
                say(&format!(
                    "n={}: beta_delta={:.5} beta_lb={:.5} ratio={:.3}",
                    r.n, r.beta_delta, r.beta_lb, r.ratio
                ));
            }
        }
        Command::Converge => {
            let s = runner::run_converge(&cfg, &cli.out)?;
            for (n_v, l2fit, xfit) in &s.orders_in_nx {
                say(&format!(
                    "order in n_x at n_v={n_v}: L2 {:.3}, X {:.3}",
                    l2fit.order, xfit.order
                ));
            }
            for (n_x, l2fit, xfit) in &s.orders_in_nv {
                say(&format!(
                    "order in n_v at n_x={n_x}: L2 {:.3}, X {:.3}",
                    l2fit.order, xfit.order
                ));
            }
        }
        Command::Sparsity => {
            let rows = runner::run_sparsity(&cfg, &cli.out)?;
            for (n, s) in &rows {
                say(&format!(
                    "n={n}: nnz={} ratio={:.4}% scaled={:.2}",
                    s.nnz,
                    100.0 * s.ratio_entries,
                    s.scaled
                ));
            }
        }
    }
    Ok(())
}
