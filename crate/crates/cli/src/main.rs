//! `renewal-ldp`: command-line front end.

mod commands;
mod config;
mod table;
mod verify;

use std::io::Write;

use clap::Parser;

use config::{load_model, Cli, CliError, CliResult, Command, Format};

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("RENEWAL_LDP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("RENEWAL_LDP_THREADS={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn emit(cli: &Cli, text: &str) -> CliResult<()> {
    match &cli.out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Config(e.to_string()))
        }
    }
}

/// Exit code 0 on success, 1 when `verify` finds a failure.
fn run(cli: &Cli) -> CliResult<i32> {
    configure_threads()?;
    let loaded = load_model(cli)?;
    let (table, ok) = match cli.command {
        Command::Validate => (commands::validate(&loaded)?, true),
        Command::FreeEnergy => (commands::free_energy_table(cli, &loaded)?, true),
        Command::Rate => (commands::rate_table(cli, &loaded)?, true),
        Command::PhaseDiagram => (commands::phase_diagram(cli, &loaded)?, true),
        Command::Exact => (commands::exact_table(cli, &loaded)?, true),
        Command::Sample => (commands::sample_table(cli, &loaded)?, true),
        Command::Verify => verify::verify(&loaded, cli.tol, cli.seed)?,
    };
    let text = match cli.format {
        Format::Csv => table.to_csv(),
        Format::Json => table.to_json(),
    };
    emit(cli, &text)?;
    Ok(if ok { 0 } else { 1 })
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let code = run(&cli).unwrap_or_else(|e| {
        eprintln!("renewal-ldp: {e}");
        e.exit_code()
    });
    std::process::exit(code);
}
