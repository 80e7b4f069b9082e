use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use psat::cli::{init_threads, run, Cli, RunConfig};
use psat::Error;

fn fail(kind: &str, msg: &str, code: u8) -> ExitCode {
    eprintln!("error,{kind},{}", msg.replace('\n', " "));
    ExitCode::from(code)
}

fn exit_for(e: &Error) -> ExitCode {
    fail(
        e.kind(),
        &e.to_string(),
        if e.is_numerical() { 3 } else { 2 },
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            return fail(
                "usage",
                msg.lines().next().unwrap_or("invalid arguments"),
                2,
            );
        }
    };
    if let Err(e) = init_threads() {
        return exit_for(&e);
    }
    let config = RunConfig::from(cli);
    let output = match run(&config) {
        Ok(o) => o,
        Err(e) => return exit_for(&e),
    };
    let bytes = output.render(&config);
    let written = match &config.out {
        Some(path) => std::fs::write(path, &bytes),
        None => std::io::stdout().lock().write_all(&bytes),
    };
    if let Err(e) = written {
        return exit_for(&Error::from(e));
    }
    match output.violation {
        Some(msg) => fail("contract", &msg, 3),
        None => ExitCode::SUCCESS,
    }
}
