use std::collections::BTreeSet;
use std::io;

use anyhow::Result;
use entred_core::corpus::{load_corpus, LoadMode};
use entred_core::oracle::server::{serve_stdio, Service};
use entred_core::oracle::stubs::TableNer;
use entred_core::Role;

use crate::cli::{HandshakeArgs, OracleCmd, ServeArgs};
use crate::oracles::{relation_oracle, require, OracleSpec};
use crate::Usage;

pub fn run(cmd: OracleCmd) -> Result<()> {
    match cmd {
        OracleCmd::Serve(a) => serve(a),
        OracleCmd::Handshake(a) => handshake(a),
    }
}

fn serve(a: ServeArgs) -> Result<()> {
    let spec = OracleSpec::parse(&a.stub)?;
    let stdin = io::stdin().lock();
    let stdout = io::stdout().lock();
    match &spec {
        OracleSpec::Remote(_) => Err(Usage(format!("--stub must name a stub, got {:?}", a.stub)).into()),
        OracleSpec::Gold(path) => {
            let reference = load_corpus(path, LoadMode::Strict)?.instances;
            let labels: BTreeSet<String> = reference
                .iter()
                .flat_map(|i| Role::BOTH.map(|r| i.entity_type(r).to_string()))
                .collect();
            let ner = TableNer::from_reference(&reference);
            Ok(serve_stdio(Service::Ner { oracle: &ner, labels: labels.into_iter().collect() }, stdin, stdout)?)
        }
        _ => {
            let oracle = relation_oracle(&spec, &Default::default())?;
            Ok(serve_stdio(Service::Relation(oracle.as_ref()), stdin, stdout)?)
        }
    }
}

fn handshake(a: HandshakeArgs) -> Result<()> {
    let spec = require(&a.oracle, "oracle")?;
    let oracle = relation_oracle(&spec, &a.batch)?;
    println!("{}", oracle.identity());
    for label in oracle.labels() {
        println!("  {label}");
    }
    Ok(())
}
