//! Command-line front end for the `sqt-core` simulations: configuration,
//! parallel ensembles, CSV/JSON tables and the self-check suite.

pub mod commands;
pub mod config;
pub mod runner;
pub mod table;
pub mod validate;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::Context;

use crate::commands::{find, CmdError, Output};
use crate::config::{parse_overrides, read_file, Config, ConfigError, Source};
use crate::runner::Pool;

/// Resolve the configuration of `command` from `args` (optionally naming a
/// `--config` file) and run it. `env_seed` is the value of `SQT_SEED`.
pub fn execute(command: &str, args: &[String], env_seed: Option<String>) -> Result<(Output, Config), CmdError> {
    let spec = find(command).ok_or_else(|| {
        CmdError::Config(ConfigError {
            source: Source::Cli,
            key: String::new(),
            message: format!("unknown command `{command}`"),
        })
    })?;
    let (positional, mut overrides) = parse_overrides(args)?;
    let mut file = Vec::new();
    if let Some(i) = overrides.iter().position(|(k, _)| k == "config") {
        let (_, path) = overrides.remove(i);
        file = read_file(Path::new(&path))?;
    }
    if let Some(p) = positional {
        let Some(key) = spec.positional else {
            return Err(CmdError::Config(ConfigError {
                source: Source::Cli,
                key: String::new(),
                message: format!("`{command}` takes no positional argument (got `{p}`)"),
            }));
        };
        overrides.insert(0, (key.to_string(), p));
    }
    let cfg = Config::resolve(&(spec.keys)(), &file, env_seed, &overrides)?;
    let pool = Pool::new(cfg.usize("threads")?).map_err(CmdError::Io)?;
    let out = (spec.run)(&cfg, &pool)?;
    Ok((out, cfg))
}

/// Header comments: the command, every recorded key, then the metadata.
pub fn header(command: &str, cfg: &Config, out: &Output) -> Vec<String> {
    let mut lines = vec![format!("command = {command}")];
    lines.extend(cfg.recorded().into_iter().map(|(k, v)| format!("{k} = {v}")));
    lines.extend(out.metadata.iter().map(|(k, v)| match v {
        serde_json::Value::String(s) => format!("metadata.{k} = {s}"),
        v => format!("metadata.{k} = {v}"),
    }));
    lines
}

fn write_outputs(command: &str, cfg: &Config, out: &Output) -> anyhow::Result<()> {
    let mut table = out.table.clone();
    table.comments = header(command, cfg, out);
    match cfg.raw("out").unwrap_or("-") {
        "-" => {
            let mut stdout = io::stdout().lock();
            match stdout.write_all(table.to_csv_string().as_bytes()).and_then(|()| stdout.flush()) {
                // The reader (e.g. `head`) has seen enough.
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => {}
                r => r.context("writing CSV to stdout")?,
            }
        }
        path => {
            let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {path}"))?);
            table.write_csv(&mut w).with_context(|| format!("writing {path}"))?;
            w.flush().with_context(|| format!("writing {path}"))?;
        }
    }
    if let Some(path) = cfg.raw("json").filter(|p| !p.is_empty()) {
        let doc = out.table.to_json(command, &cfg.recorded(), &out.metadata);
        let text = serde_json::to_string_pretty(&doc)? + "\n";
        std::fs::write(path, text).with_context(|| format!("writing {path}"))?;
    }
    Ok(())
}

/// Run `command` and write its outputs; returns the process exit code.
pub fn run_cli(command: &str, args: &[String], env_seed: Option<String>) -> i32 {
    let result = execute(command, args, env_seed).and_then(|(out, cfg)| {
        write_outputs(command, &cfg, &out).map_err(CmdError::Io)?;
        match out.failure {
            Some(m) => Err(CmdError::Validation(m)),
            None => Ok(()),
        }
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("sqt {command}: {e}");
            e.exit_code()
        }
    }
}
