mod args;
mod commands;
mod input;

use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Parser;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use args::{Cli, Command};
use commands::Report;

const SUBCOMMANDS: [&str; 7] = ["count", "decouple", "select", "transversality", "kakeya", "gamma", "version"];

/// Result keys that carry timings; they are left out of the digest.
const TIMING_KEYS: [&str; 1] = ["elapsed_seconds"];

#[derive(Debug, Serialize)]
struct RunManifest {
    subcommand: String,
    parameters: Value,
    seed: u64,
    version: String,
    wall_time_seconds: f64,
    /// sha256 of the compact result JSON without timing keys.
    output_digest: String,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let budget = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<quadweyl_core::Error>(), Some(quadweyl_core::Error::BudgetExceeded { .. })));
            ExitCode::from(if budget { 2 } else { 1 })
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.global.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("cannot size the worker pool")?;
    }
    let seed = cli.global.seed;
    let start = Instant::now();
    let (report, params) = match &cli.command {
        Command::Count(a) => (commands::count(a, seed)?, serde_json::to_value(a)?),
        Command::Decouple(a) => (commands::decouple(a, seed)?, serde_json::to_value(a)?),
        Command::Select(a) => (commands::select(a, seed)?, serde_json::to_value(a)?),
        Command::Transversality(a) => (commands::transversality(a, seed)?, serde_json::to_value(a)?),
        Command::Kakeya(a) => (commands::kakeya(a, seed)?, serde_json::to_value(a)?),
        Command::Gamma(a) => (commands::gamma(a)?, serde_json::to_value(a)?),
        Command::Version => (commands::version(), Value::Object(Map::new())),
    };
    let mut parameters = serde_json::to_value(&cli.global)?;
    if let (Value::Object(p), Value::Object(extra)) = (&mut parameters, params) {
        p.extend(extra);
    }
    let manifest = RunManifest {
        subcommand: cli.command.name().to_string(),
        parameters,
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        output_digest: digest(&report.result)?,
    };
    write_outputs(cli, &manifest, &report)
}

fn strip_timing(v: &Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(
            m.iter()
                .filter(|(k, _)| !TIMING_KEYS.contains(&k.as_str()))
                .map(|(k, x)| (k.clone(), strip_timing(x)))
                .collect(),
        ),
        Value::Array(a) => Value::Array(a.iter().map(strip_timing).collect()),
        other => other.clone(),
    }
}

fn digest(result: &Value) -> Result<String> {
    let bytes = serde_json::to_vec(&strip_timing(result))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn write_outputs(cli: &Cli, manifest: &RunManifest, report: &Report) -> Result<()> {
    let doc = serde_json::json!({ "manifest": manifest, "result": report.result });
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    match &cli.global.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("cannot write {path}"))?,
        None => print!("{text}"),
    }
    if let Some(path) = &cli.global.csv {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {path}"))?;
        w.write_record(&report.table.headers)?;
        for row in &report.table.rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Flag names that also accept the other case.
fn aliases(flag: &str) -> Vec<String> {
    match flag {
        "--N" | "--n" => vec!["--N".into(), "--n".into()],
        "--K" | "--k" => vec!["--K".into(), "--k".into()],
        f => vec![f.to_string()],
    }
}

fn config_value(v: &Value) -> Option<Vec<String>> {
    match v {
        Value::Null | Value::Bool(false) => None,
        Value::Bool(true) => Some(vec![]),
        Value::String(s) => Some(vec![s.clone()]),
        Value::Number(n) => Some(vec![n.to_string()]),
        Value::Array(a) => Some(vec![a
            .iter()
            .map(|x| match x {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .collect::<Vec<_>>()
            .join(",")]),
        Value::Object(_) => None,
    }
}

/// Appends flags from the --config file that the command line does not set.
/// TOML files give top-level keys plus a table named after the subcommand;
/// JSON reports give the parameters recorded in their manifest.
fn expand_config(mut argv: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    for (k, a) in argv.iter().enumerate() {
        if a == "--config" {
            path = argv.get(k + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let sub = argv.iter().skip(1).find(|a| SUBCOMMANDS.contains(&a.as_str())).cloned();
    let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read config {path}"))?;
    let mut entries: Vec<(String, Value)> = Vec::new();
    if path.ends_with(".json") {
        let doc: Value = serde_json::from_str(&text).with_context(|| format!("{path} is not valid JSON"))?;
        let params = match doc.get("manifest") {
            Some(m) => {
                let recorded = m.get("subcommand").and_then(Value::as_str);
                if recorded.is_some() && recorded != sub.as_deref() {
                    bail!("{path} records a {} run", recorded.unwrap_or_default());
                }
                m.get("parameters").cloned().unwrap_or(Value::Null)
            }
            None => doc,
        };
        let Value::Object(map) = params else { bail!("{path} has no parameter table") };
        entries.extend(map);
    } else {
        let table: toml::Table = text.parse().with_context(|| format!("{path} is not valid TOML"))?;
        let to_json = |v: &toml::Value| serde_json::to_value(v).unwrap_or(Value::Null);
        for (k, v) in &table {
            if !v.is_table() {
                entries.push((k.clone(), to_json(v)));
            }
        }
        if let Some(toml::Value::Table(t)) = sub.as_ref().and_then(|s| table.get(s)) {
            entries.extend(t.iter().map(|(k, v)| (k.clone(), to_json(v))));
        }
    }
    for (key, value) in entries {
        if key == "config" {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        let names = aliases(&flag);
        let present = argv
            .iter()
            .any(|a| names.iter().any(|n| a == n || a.starts_with(&format!("{n}="))));
        if present {
            continue;
        }
        if let Some(vals) = config_value(&value) {
            argv.push(flag);
            argv.extend(vals);
        }
    }
    Ok(argv)
}
