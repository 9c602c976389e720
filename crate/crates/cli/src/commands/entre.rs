use std::path::PathBuf;

use anyhow::{Context, Result};
use entred_core::audit::eligibility_filter;
use entred_core::corpus::write_corpus;
use entred_core::lexicon::build_lexicon;
use entred_core::{run_entre, LoopConfig};

use super::{load, write_json};
use crate::cli::{EntreCmd, EntreRunArgs};
use crate::manifest::RunManifest;
use crate::oracles::{batch_options, relation_oracle, require};

pub const TRACE_FILE: &str = "trace.json";

pub fn run(cmd: EntreCmd) -> Result<()> {
    match cmd {
        EntreCmd::Run(a) => run_loop(a),
    }
}

fn trace_path(a: &EntreRunArgs) -> PathBuf {
    a.trace.clone().unwrap_or_else(|| {
        a.out.parent().map(|d| d.join(TRACE_FILE)).unwrap_or_else(|| PathBuf::from(TRACE_FILE))
    })
}

fn run_loop(a: EntreRunArgs) -> Result<()> {
    let mut manifest = RunManifest::start("entre run", &a)?;
    manifest.seed = Some(a.seed);
    manifest.input("corpus", &a.input.corpus)?;
    manifest.input("person_lexicon", &a.person_lexicon)?;
    manifest.input("org_lexicon", &a.org_lexicon)?;
    let spec = require(&a.oracle, "oracle")?;
    if let Some(p) = spec.input_file() {
        manifest.input("oracle", p)?;
    }

    let mut instances = load(&a.input)?;
    if a.filter_ineligible {
        let (eligible, dropped) = eligibility_filter(&instances);
        if !dropped.is_empty() {
            log::warn!("dropped {} ineligible instances", dropped.len());
        }
        instances = eligible;
    }
    let (lexicon, counts) = build_lexicon(&a.person_lexicon, &a.org_lexicon)?;
    log::info!("lexicon: {} PERSON, {} ORGANIZATION names", counts.person.names, counts.organization.names);

    let oracle = relation_oracle(&spec, &a.batch)?;
    manifest.oracle = Some(oracle.identity());
    let config = LoopConfig {
        max_iterations: a.max_iter,
        mode: a.mode.into(),
        seed: a.seed,
        initial_pass: a.initial_pass,
        eligible_roles: a.roles.iter().map(|&r| r.into()).collect(),
        select_background: !a.exclude_no_relation,
        unique_names: a.unique_names,
        batch: batch_options(&a.batch),
    };
    let output = run_entre(&instances, &lexicon, oracle.as_ref(), &config)?;

    write_corpus(&output.corpus, &a.out)?;
    let trace = trace_path(&a);
    write_json(&trace, &output.trace).with_context(|| "writing trace")?;
    manifest.output("corpus", &a.out)?;
    manifest.output("trace", &trace)?;
    manifest.finish(a.manifest.manifest.as_deref())?;

    let t = &output.trace;
    let touched = t.last_changed.values().filter(|v| v.is_some()).count();
    println!(
        "{} iterations{}, {} oracle calls in {} batches, {} replacements, {} of {} instances changed",
        t.adversarial_iterations(),
        if t.halted_early { " (halted early)" } else { "" },
        t.oracle_calls,
        t.oracle_batches,
        t.replacements().count(),
        touched,
        output.corpus.len()
    );
    Ok(())
}
