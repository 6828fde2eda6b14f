//! Command-line interface: simulation, single-spectrum fits, trial studies,
//! noise analysis, and macro-pixel binning.

mod commands;
mod config;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "braggfit",
    version,
    about = "Bragg-edge strain estimation from neutron transmission spectra"
)]
struct Cli {
    /// JSON config file mirroring the subcommand flags; explicit flags
    /// override file values.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trial spectra to a directory (CSV plus manifest JSON).
    Simulate(commands::SimulateArgs),
    /// Fit a single spectrum and print a JSON report.
    Fit(commands::FitArgs),
    /// Run a randomized trial study and export metrics tables.
    TrialStudy(commands::TrialStudyArgs),
    /// Fit the transmission noise model from measured spectra.
    NoiseAnalysis(commands::NoiseAnalysisArgs),
    /// Average a pixel stack into macro pixels.
    MacroBin(commands::MacroBinArgs),
}

fn main() {
    let cli = Cli::parse();
    let file = match config::load(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => fail(&e),
    };
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(args, &file),
        Command::Fit(args) => commands::fit(args, &file),
        Command::TrialStudy(args) => commands::trial_study(args, &file),
        Command::NoiseAnalysis(args) => commands::noise_analysis(args, &file),
        Command::MacroBin(args) => commands::macro_bin(args),
    };
    if let Err(e) = result {
        fail(&e);
    }
}

fn fail(error: &anyhow::Error) -> ! {
    let payload = serde_json::json!({ "error": format!("{error:#}") });
    eprintln!("{payload}");
    std::process::exit(1);
}
