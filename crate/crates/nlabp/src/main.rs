use clap::Parser;
use nlabp::cli::config::BUNDLED_SMOOTH_PIT;
use nlabp::cli::{exit, exit_code, run, RunConfig, RunOptions};
use std::path::PathBuf;
use std::process::ExitCode;

/// Nonlocal Pucci operators, sigma-envelopes and ABP certificates.
///
/// Exit status: 0 success, 1 runtime failure, 2 invalid configuration,
/// 3 solver did not converge, 4 a checked inequality was violated.
#[derive(Parser, Debug)]
#[command(name = "nlabp", version)]
struct Args {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH", required_unless_present = "print_bundled")]
    config: Option<PathBuf>,
    /// Directory for reports, tables, field dumps and the manifest.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads for grid sweeps; defaults to the number of cores.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Overrides the seed given in the configuration.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Halve the grid spacing K times.
    #[arg(long, value_name = "K", default_value_t = 0)]
    refine: u32,
    /// Only validate the configuration and list every problem found.
    #[arg(long)]
    validate: bool,
    /// Print the bundled smooth-pit configuration and exit.
    #[arg(long, conflicts_with = "config")]
    print_bundled: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    ExitCode::from(drive(args) as u8)
}

fn drive(args: Args) -> i32 {
    if args.print_bundled {
        print!("{BUNDLED_SMOOTH_PIT}");
        return exit::OK;
    }
    let path = args.config.expect("clap enforces --config");
    let mut cfg = match RunConfig::load(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit::CONFIG;
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let issues = cfg.validate();
    if args.validate {
        for i in &issues {
            println!("{i}");
        }
        return if issues.is_empty() { exit::OK } else { exit::CONFIG };
    }
    if !issues.is_empty() {
        for i in &issues {
            eprintln!("config: {i}");
        }
        return exit::CONFIG;
    }
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return exit::RUNTIME;
        }
    }
    let opts = RunOptions { out_dir: args.out, refine: args.refine, threads: args.threads };
    match run(&cfg, &opts) {
        Ok(summary) => {
            for p in &summary.outputs {
                println!("wrote {}", p.display());
            }
            if let Some(f) = &summary.finding {
                eprintln!("finding: {f}");
            }
            summary.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
