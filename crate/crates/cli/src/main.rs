mod args;
mod commands;

use std::ffi::OsString;
use std::path::Path;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use crate::args::Cli;

/// Failure classes mapped to exit codes: 1 for validation, 2 for IO.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Io(m) => m,
        }
    }
}

impl From<medclaim::Error> for Failure {
    fn from(e: medclaim::Error) -> Self {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn toml_value_arg(value: &toml::Value) -> Option<String> {
    match value {
        toml::Value::String(s) => Some(s.clone()),
        toml::Value::Integer(i) => Some(i.to_string()),
        toml::Value::Float(f) => Some(f.to_string()),
        toml::Value::Array(items) => {
            let parts: Option<Vec<String>> = items.iter().map(toml_value_arg).collect();
            parts.map(|p| p.join(","))
        }
        _ => None,
    }
}

fn push_flags(out: &mut Vec<OsString>, table: &toml::Table) -> Result<(), Failure> {
    for (key, value) in table {
        if value.is_table() {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            toml::Value::Boolean(true) => out.push(flag.into()),
            toml::Value::Boolean(false) => {}
            other => {
                let v = toml_value_arg(other)
                    .ok_or_else(|| Failure::Validation(format!("config key `{key}` has an unsupported value")))?;
                out.push(flag.into());
                out.push(v.into());
            }
        }
    }
    Ok(())
}

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Inserts flags from the `--config` file directly after the subcommand
/// name, so that flags given on the command line override them.
fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| Failure::Io(format!("cannot read config {}: {e}", Path::new(&path).display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| Failure::Validation(format!("invalid config {}: {e}", Path::new(&path).display())))?;

    let names: Vec<String> = Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect();
    let Some(at) = argv.iter().position(|a| names.iter().any(|n| a == n.as_str())) else {
        return Ok(argv);
    };
    let sub = argv[at].to_string_lossy().into_owned();
    let mut injected = Vec::new();
    push_flags(&mut injected, &table)?;
    if let Some(section) = table.get(&sub).and_then(toml::Value::as_table) {
        push_flags(&mut injected, section)?;
    }
    let mut out = argv;
    out.splice(at + 1..at + 1, injected);
    Ok(out)
}

fn parse(argv: Vec<OsString>) -> Result<Cli, ExitCode> {
    let command = Cli::command()
        .args_override_self(true)
        .mut_subcommands(|s| s.args_override_self(true));
    let matches = command.try_get_matches_from(argv).map_err(|e| {
        let _ = e.print();
        if e.use_stderr() {
            ExitCode::from(1)
        } else {
            ExitCode::SUCCESS
        }
    })?;
    Cli::from_arg_matches(&matches).map_err(|e| {
        let _ = e.print();
        ExitCode::from(1)
    })
}

fn main() -> ExitCode {
    let argv = match expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(f) => {
            eprintln!("error: {}", f.message());
            return ExitCode::from(f.code());
        }
    };
    let cli = match parse(argv) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
