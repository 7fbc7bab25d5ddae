use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use metatopo_cli::{commands, config, output, CliError, GradCheckOptions, RunConfig};

/// Stress- and fatigue-constrained topology optimization of periodic unit cells.
#[derive(Parser)]
#[command(name = "metatopo", version)]
struct Cli {
    /// Worker threads; 1 gives bitwise reproducible runs.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Output directory (overrides `run.output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimizer and write all outputs.
    Optimize {
        /// Config file or `preset:NAME`.
        config: String,
        #[arg(long)]
        quiet: bool,
    },
    /// Homogenize a density field (all solid by default).
    Homogenize {
        config: String,
        #[arg(long)]
        density: Option<PathBuf>,
    },
    /// Check the adjoint gradient against finite differences.
    GradCheck {
        config: String,
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Report per-element criterion values and peak stress of a density field.
    Evaluate {
        config: String,
        #[arg(long)]
        density: PathBuf,
    },
    /// List built-in presets.
    Presets,
}

fn out_dir(cli_out: &Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    cli_out.clone().unwrap_or_else(|| cfg.output_dir.clone())
}

fn run(cli: Cli) -> Result<i32, CliError> {
    metatopo::linalg::configure_threads(cli.threads);
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build_global()
        .map_err(|e| CliError::numerical(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Optimize { config: src, quiet } => {
            let cfg = config::load(&src)?;
            let out = commands::optimize(&cfg, &out_dir(&cli.out, &cfg), !quiet)?;
            let s = &out.summary;
            println!(
                "{}: converged={} iterations={} objective={:.6e} volume={:.4} max_solid_von_mises={:.2} MPa max_relaxed_g={:.4}",
                src, s.converged, s.iterations, s.objective, s.volume_fraction, s.max_solid_von_mises_mpa, s.max_relaxed_constraint
            );
            println!("outputs in {}", out.out_dir.display());
            Ok(out.exit_code)
        }
        Command::Homogenize { config: src, density } => {
            let cfg = config::load(&src)?;
            let t = commands::homogenize(&cfg, density.as_deref(), &out_dir(&cli.out, &cfg))?;
            print!("{}", output::tensor_text(&t));
            Ok(0)
        }
        Command::GradCheck { config: src, corrupt_gradient } => {
            let cfg = config::load(&src)?;
            let (code, report) = commands::grad_check(
                &cfg,
                &out_dir(&cli.out, &cfg),
                GradCheckOptions { corrupt_gradient },
            )?;
            let skipped = report.probes.iter().filter(|p| p.skipped).count();
            println!(
                "max relative error {:.3e} over {} probes ({skipped} skipped at branch switches), tolerance {:.1e}: {}",
                report.max_rel_error,
                report.probes.len(),
                cfg.gradcheck.tolerance,
                if code == 0 { "pass" } else { "FAIL" }
            );
            Ok(code)
        }
        Command::Evaluate { config: src, density } => {
            let cfg = config::load(&src)?;
            let eval = commands::evaluate(&cfg, &density, &out_dir(&cli.out, &cfg))?;
            println!(
                "objective={:.6e} volume={:.4} max_relaxed_g={:.4} max_solid_g={:.4} max_solid_von_mises={:.2} MPa",
                eval.objective,
                eval.volume,
                eval.max_relaxed_constraint(),
                eval.max_solid_g(),
                eval.max_solid_von_mises()
            );
            Ok(0)
        }
        Command::Presets => {
            for n in metatopo_cli::presets::names() {
                println!("{n}");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
