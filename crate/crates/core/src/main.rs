use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cylvm::config::RunConfig;
use cylvm::run::{exit_code, run, Mode};
use cylvm::Error;

/// Steady states of a relativistic collisionless plasma in an infinite cylinder.
#[derive(Debug, Parser)]
#[command(name = "cylvm", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// solve, verify, confine, extend or sweep.
    #[arg(long, default_value = "solve", value_parser = parse_mode)]
    mode: Mode,
    /// Output directory; defaults to output.dir of the config, then the current directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override domain.grid.
    #[arg(long)]
    grid: Option<usize>,
    /// Override audit.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the parallel sections.
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // help and version are not errors
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0
            || rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .is_err()
        {
            eprintln!("error: cannot start {n} worker threads");
            return ExitCode::from(2);
        }
    }
    let result = RunConfig::load(&cli.config).and_then(|mut cfg| {
        if let Some(n) = cli.grid {
            cfg.domain.grid = n;
        }
        if let Some(s) = cli.seed {
            cfg.audit.seed = s;
        }
        cfg.validate()?;
        let out = cli
            .out
            .clone()
            .or_else(|| cfg.output.dir.as_ref().map(|d| cfg.base_dir.join(d)))
            .unwrap_or_default();
        let start = std::time::Instant::now();
        let outcome = run(&cfg, cli.mode, &out);
        eprintln!("elapsed {:.2} s", start.elapsed().as_secs_f64());
        outcome
    });
    match &result {
        Ok(o) => {
            println!("{} {}", if o.pass { "PASS" } else { "FAIL" }, o.summary);
            for f in &o.files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
