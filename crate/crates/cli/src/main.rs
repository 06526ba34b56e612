use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tptkit_cli::{ExperimentConfig, Format, Pipeline, PipelineError, EXIT_CONFIG, EXIT_IDENTITY, EXIT_PASS};

#[derive(Parser)]
#[command(name = "tptkit", version, about = "Reactive trajectories, transition paths and their identities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides simulate.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides output.directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides output.formats with a single format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Committors, density, measures and quadratures.
    Solve,
    /// Records stream 0 of the Euler–Maruyama run.
    Simulate,
    /// Reactive segments and reaction statistics of all streams.
    Segment,
    /// Transition path ensemble started from η_A^-.
    Tpp,
    /// Empirical densities and measures next to the analytic ones.
    Analyze,
    /// Comparison report only.
    Report,
    /// Every stage and every artifact.
    All,
}

fn run(cli: &Cli) -> Result<i32, PipelineError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| tptkit_cli::ConfigError::Invalid("--config PATH is required".into()))?;
    let (config, text) = ExperimentConfig::load(path)?;
    let mut p = Pipeline::new(config, text, cli.seed, cli.out.clone(), cli.format)?;
    let mut code = EXIT_PASS;
    let c = cli.command;
    if matches!(c, Command::Solve | Command::All) {
        p.write_fields()?;
        p.write_quadratures()?;
    }
    if c == Command::Simulate || (c == Command::All && p.config.simulate.record_trajectory) {
        p.write_trajectory()?;
    }
    if matches!(c, Command::Segment | Command::All) {
        p.write_segments()?;
    }
    if matches!(c, Command::Tpp | Command::All) {
        p.write_tpp()?;
    }
    if matches!(c, Command::Analyze | Command::All) {
        p.write_analysis()?;
    }
    if matches!(c, Command::Analyze | Command::Report | Command::All) {
        let rep = p.report()?;
        p.write_report(&rep)?;
        for r in &rep.rows {
            let verdict = if r.pass() { "PASS" } else { "FAIL" };
            println!(
                "{verdict} {:<34} {:.6e} ± {:.2e} vs {:.6e} (rel {:.2e})",
                r.name,
                r.empirical,
                r.stderr,
                r.analytic,
                r.rel_diff()
            );
        }
        for i in &rep.identities {
            let verdict = if i.pass() { "PASS" } else { "FAIL" };
            println!("{verdict} {:<50} error {:.3e} (tolerance {:.1e})", i.name, i.error, i.tolerance);
        }
        if !rep.all_pass() {
            code = EXIT_IDENTITY;
        }
    }
    eprintln!("artifacts in {}", p.out_dir().display());
    Ok(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
