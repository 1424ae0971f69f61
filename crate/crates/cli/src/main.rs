use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;
use serde_json::Value;

mod args;
mod commands;
mod grid;
mod report;

use args::{Cli, Command, Format, GlobalArgs};
use commands::{execute, Failure};
use report::{sidecar_path, to_json_bytes, write_atomically, Envelope};

/// What every report embeds to make it reproducible. The worker count is
/// left out: it never changes results, and embedding it would make
/// otherwise identical reports differ.
#[derive(Serialize)]
struct RunConfig<'a> {
    #[serde(flatten)]
    global: &'a GlobalArgs,
    #[serde(flatten)]
    command: &'a Command,
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.global.n_workers {
        if n == 0 {
            return Err(Failure::Usage("--n-workers must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Failure::Data(e.into()))?;
    let outcome = pool.install(|| execute(&cli.command, cli.global.seed))?;

    let config = serde_json::to_value(RunConfig {
        global: &cli.global,
        command: &cli.command,
    })
    .map_err(|e| Failure::Data(e.into()))?;
    let json = |body: &Value| to_json_bytes(&Envelope::new(&config, body)).map_err(Failure::Data);

    match (cli.global.format, &cli.global.output) {
        (Format::Json, Some(path)) => write_atomically(&[(path, &json(&outcome.result)?)]),
        (Format::Csv, Some(path)) => {
            let meta = json(&outcome.summary)?;
            let table = outcome.table.to_csv_bytes().map_err(Failure::Data)?;
            write_atomically(&[(&sidecar_path(path), &meta), (path, &table)])
        }
        (Format::Json, None) => write_stdout(&json(&outcome.result)?),
        (Format::Csv, None) => write_stdout(&outcome.table.to_csv_bytes().map_err(Failure::Data)?),
    }
    .map_err(Failure::Data)
}

fn write_stdout(bytes: &[u8]) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes)?;
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
