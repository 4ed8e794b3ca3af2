use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sndc::{thread_pool, ExperimentConfig, RunError, Runner};
use tracing::error;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "sndc", version, about = "Least-squares finite elements with stochastic collocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve at every collocation node and write a solution archive.
    Solve(Common),
    /// Spatial convergence study with an EOC table.
    HStudy(Common),
    /// Convergence in the degree of the first parameter, with a decay fit.
    PStudy(Common),
    /// Sampled ellipticity and Cordes check.
    Check(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; omitted keys take their defaults.
    #[arg(long)]
    config: PathBuf,
    /// Continue when the assumption check fails.
    #[arg(long)]
    force: bool,
    /// Worker threads (0 = all cores); overrides the config.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides SNDC_OUT and the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), RunError> {
    let (kind, common) = match cli.command {
        Command::Solve(c) => ("solve", c),
        Command::HStudy(c) => ("h-study", c),
        Command::PStudy(c) => ("p-study", c),
        Command::Check(c) => ("check", c),
    };
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(dir) = common.out.or_else(|| std::env::var_os("SNDC_OUT").map(PathBuf::from)) {
        cfg.output_dir = dir;
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    let pool = thread_pool(cfg.threads)?;
    let runner = Runner::new(cfg, common.force)?;
    pool.install(|| match kind {
        "solve" => {
            let out = runner.run_solve()?;
            println!("nodes {}", out.archive.nodes.len());
            println!("archive {}", out.path.display());
            println!("checksum {}", out.checksum);
            Ok(())
        }
        "h-study" => {
            let out = runner.run_h_study()?;
            for r in &out.records {
                println!("h {:.6e}  error {:.6e}", r.h, r.error);
            }
            for r in &out.eoc {
                println!("eoc {r:.4}");
            }
            println!("wrote {} and {}", out.csv_path.display(), out.summary_path.display());
            Ok(())
        }
        "p-study" => {
            let out = runner.run_p_study()?;
            for r in &out.records {
                println!("p {:?}  error {:.6e}", r.p, r.error);
            }
            match out.fit {
                Some(f) => println!("rate {:.4}  r^2 {:.4}  residual {:.4}", f.rate, f.r_squared, f.residual),
                None => println!("errors vanish, no fit"),
            }
            println!("wrote {} and {}", out.csv_path.display(), out.summary_path.display());
            Ok(())
        }
        _ => {
            let out = runner.run_check()?;
            let r = &out.report;
            println!("problem {}", runner.problem().name);
            println!("lambda_est {:.6}", r.lambda_est);
            println!("eps_est {:.6}", r.eps_est);
            println!("eps_spectral_bound {:.6}", r.eps_spectral_bound);
            println!("samples {} x {}", r.x_samples, r.y_samples);
            println!("verdict {}", if r.passed { "pass" } else { "fail" });
            println!("wrote {}", out.csv_path.display());
            if r.passed || common.force {
                Ok(())
            } else {
                Err(RunError::Assumption(format!("lambda_est = {}, eps_est = {}", r.lambda_est, r.eps_est)))
            }
        }
    })
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
