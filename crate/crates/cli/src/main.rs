use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use helmholtz_hna_cli::{run, Overrides};

#[derive(Parser)]
#[command(name = "hna", version, about = "Helmholtz scattering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Wavenumber or comma-separated list.
        #[arg(long)]
        k: Option<String>,
        /// Polynomial degree or list/range such as 1..5.
        #[arg(long)]
        p: Option<String>,
        /// Number of mesh layers.
        #[arg(long)]
        n: Option<String>,
        /// Geometric mesh grading in (0, 1).
        #[arg(long)]
        sigma: Option<String>,
        /// Incidence angle.
        #[arg(long = "theta-inc", allow_hyphen_values = true)]
        theta_inc: Option<String>,
        /// Grating method: SC, SS or SSstar.
        #[arg(long)]
        method: Option<String>,
        #[arg(long = "out-dir")]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, k, p, n, sigma, theta_inc, method, out_dir, seed } => {
            let ov = Overrides { k, p, n, sigma, theta_inc, method, out_dir, seed };
            match run(&config, &ov) {
                Ok(s) => {
                    for o in &s.outputs {
                        println!("{}", s.out_dir.join(o).display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
