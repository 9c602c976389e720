//! Turning `--oracle` / `--ner` / `--stub` strings into oracles.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use entred_core::corpus::{load_corpus, LoadMode};
use entred_core::oracle::client::{Endpoint, OracleClient, RetryPolicy};
use entred_core::oracle::stubs::{ConstantOracle, ContextReader, EntityMemorizer, TableNer};
use entred_core::oracle::{BatchOptions, NerOracle, OracleError, RelationOracle};

use crate::cli::BatchArgs;
use crate::Usage;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleSpec {
    Constant(String),
    Memorizer(PathBuf),
    ContextReader(PathBuf),
    /// NER stub echoing a reference corpus's annotations.
    Gold(PathBuf),
    Remote(Endpoint),
}

impl OracleSpec {
    pub fn parse(spec: &str) -> Result<Self, OracleError> {
        let Some(stub) = spec.trim().strip_prefix("stub:") else {
            return Endpoint::parse(spec).map(OracleSpec::Remote);
        };
        let (kind, arg) = stub.split_once('=').ok_or_else(|| OracleError::Endpoint(spec.to_string()))?;
        if arg.is_empty() {
            return Err(OracleError::Endpoint(spec.to_string()));
        }
        match kind {
            "constant" => Ok(OracleSpec::Constant(arg.to_string())),
            "memorizer" => Ok(OracleSpec::Memorizer(arg.into())),
            "context-reader" => Ok(OracleSpec::ContextReader(arg.into())),
            "gold" => Ok(OracleSpec::Gold(arg.into())),
            _ => Err(OracleError::Endpoint(spec.to_string())),
        }
    }

    /// Files the oracle reads, for the manifest.
    pub fn input_file(&self) -> Option<&Path> {
        match self {
            OracleSpec::Memorizer(p) | OracleSpec::ContextReader(p) | OracleSpec::Gold(p) => Some(p),
            _ => None,
        }
    }
}

pub fn require(spec: &Option<String>, flag: &str) -> Result<OracleSpec> {
    let spec = spec
        .as_deref()
        .ok_or_else(|| Usage(format!("--{flag} is required (or set ENTRED_{})", flag.to_uppercase())))?;
    Ok(OracleSpec::parse(spec)?)
}

pub fn batch_options(args: &BatchArgs) -> BatchOptions {
    BatchOptions { batch_size: args.batch_size.max(1), workers: args.workers.max(1) }
}

fn retry(args: &BatchArgs) -> RetryPolicy {
    RetryPolicy { max_attempts: args.retries.max(1), initial_backoff: Duration::from_millis(50) }
}

pub fn read_triggers(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{}: expected a JSON object of trigger -> relation", path.display()))
}

fn reference_corpus(path: &Path) -> Result<Vec<entred_core::ReInstance>> {
    Ok(load_corpus(path, LoadMode::Strict)?.instances)
}

pub fn relation_oracle(spec: &OracleSpec, batch: &BatchArgs) -> Result<Box<dyn RelationOracle>> {
    Ok(match spec {
        OracleSpec::Constant(label) => Box::new(ConstantOracle::new(label.clone())),
        OracleSpec::Memorizer(p) => Box::new(EntityMemorizer::from_instances(&reference_corpus(p)?)),
        OracleSpec::ContextReader(p) => Box::new(ContextReader::new(read_triggers(p)?)),
        OracleSpec::Gold(_) => {
            return Err(OracleError::Endpoint("stub:gold is an NER oracle".into()).into());
        }
        OracleSpec::Remote(e) => Box::new(OracleClient::connect(e, batch.workers.max(1), retry(batch))?),
    })
}

pub fn ner_oracle(spec: &OracleSpec, batch: &BatchArgs) -> Result<Box<dyn NerOracle>> {
    Ok(match spec {
        OracleSpec::Gold(p) => Box::new(TableNer::from_reference(&reference_corpus(p)?)),
        OracleSpec::Remote(e) => Box::new(OracleClient::connect(e, batch.workers.max(1), retry(batch))?),
        _ => return Err(OracleError::Endpoint("only stub:gold and remote endpoints tag entities".into()).into()),
    })
}
