pub mod audit;
pub mod corpus;
pub mod entre;
pub mod eval;
pub mod lexicon;
pub mod oracle;

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use entred_core::corpus::{load_corpus, LoadMode};
use entred_core::ReInstance;
use serde::Serialize;

use crate::cli::{Command, CorpusIn, Format, ReportArgs};

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Corpus(c) => corpus::run(c),
        Command::Lexicon(c) => lexicon::run(c),
        Command::Audit(c) => audit::run(c),
        Command::Entre(c) => entre::run(c),
        Command::Eval(c) => eval::run(c),
        Command::Oracle(c) => oracle::run(c),
    }
}

pub fn load(input: &CorpusIn) -> Result<Vec<ReInstance>> {
    load_path(&input.corpus, input.lenient)
}

pub fn load_path(path: &Path, lenient: bool) -> Result<Vec<ReInstance>> {
    let mode = if lenient { LoadMode::Lenient } else { LoadMode::Strict };
    let loaded = load_corpus(path, mode)?;
    for v in &loaded.skipped {
        log::warn!("{}: skipped record {} ({}): {}", path.display(), v.index, v.id, v.reason);
    }
    log::info!("loaded {} instances from {}", loaded.instances.len(), path.display());
    Ok(loaded.instances)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Writes the JSON report file if requested and prints the report on stdout.
pub fn emit<R: Serialize>(report: &R, args: &ReportArgs, table: impl FnOnce(&R) -> String) -> Result<()> {
    if let Some(path) = &args.report {
        write_json(path, report)?;
    }
    match args.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(report)?),
        Format::Table => print!("{}", table(report)),
    }
    Ok(())
}

pub fn pct(x: f64) -> String {
    format!("{:6.2}%", 100.0 * x)
}
