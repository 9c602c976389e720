use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use entred_core::corpus::{check_labels, corpus_stats, parse_corpus, write_corpus, CorpusError, CorpusStats, LoadMode};
use entred_core::replace::{apply_entity_mask, mask_context};
use entred_core::synth::{synth_corpus, trigger_map, SynthOptions};

use super::{emit, load, write_json};
use crate::cli::{CorpusCmd, CounterfactualCmdArgs, MaskArgs, StatsArgs, SynthArgs, ValidateArgs};
use crate::manifest::RunManifest;

pub fn run(cmd: CorpusCmd) -> Result<()> {
    match cmd {
        CorpusCmd::Stats(a) => stats(a),
        CorpusCmd::Validate(a) => validate(a),
        CorpusCmd::Mask(a) => mask(a),
        CorpusCmd::Counterfactual(a) => counterfactual(a),
        CorpusCmd::Synth(a) => synth(a),
    }
}

fn stats_table(s: &CorpusStats) -> String {
    let mut out = format!("sentences  {}\ntokens     {}\n\n", s.n_sentences, s.n_tokens);
    let width = s.label_histogram.keys().map(String::len).max().unwrap_or(0);
    for (label, n) in &s.label_histogram {
        out.push_str(&format!("{label:<width$}  {n:>8}\n"));
    }
    out
}

fn stats(a: StatsArgs) -> Result<()> {
    let instances = load(&a.input)?;
    emit(&corpus_stats(&instances), &a.report, stats_table)
}

fn read_labels(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()));
    }
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

fn validate(a: ValidateArgs) -> Result<()> {
    let text = fs::read_to_string(&a.corpus).with_context(|| format!("reading {}", a.corpus.display()))?;
    let result = parse_corpus(&text, LoadMode::Strict).and_then(|loaded| {
        if let Some(path) = &a.labels {
            let labels = read_labels(path).map_err(|e| CorpusError::Format { index: None, message: format!("{e:#}") })?;
            check_labels(&loaded.instances, &labels)?;
        }
        Ok(loaded)
    });
    match result {
        Ok(loaded) => {
            println!("ok: {} instances", loaded.instances.len());
            Ok(())
        }
        Err(CorpusError::Validation { violations }) => {
            for v in &violations {
                println!("record {} ({}): {}", v.index, v.id, v.reason);
            }
            Err(CorpusError::Validation { violations }.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn mask(a: MaskArgs) -> Result<()> {
    let mut manifest = RunManifest::start("corpus mask", &a)?;
    manifest.input("corpus", &a.input.corpus)?;
    let instances = load(&a.input)?;
    let masked: Vec<_> = instances.iter().map(|i| apply_entity_mask(i, a.mode.into())).collect();
    write_corpus(&masked, &a.out)?;
    manifest.output("corpus", &a.out)?;
    manifest.finish(a.manifest.manifest.as_deref())?;
    Ok(())
}

fn counterfactual(a: CounterfactualCmdArgs) -> Result<()> {
    let mut manifest = RunManifest::start("corpus counterfactual", &a)?;
    manifest.input("corpus", &a.input.corpus)?;
    let instances = load(&a.input)?;
    let masked: Vec<_> =
        instances.iter().map(|i| mask_context(i, &a.mask.mask_token, a.mask.context_mode.into())).collect();
    write_corpus(&masked, &a.out)?;
    manifest.output("corpus", &a.out)?;
    manifest.finish(a.manifest.manifest.as_deref())?;
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut manifest = RunManifest::start("corpus synth", &a)?;
    manifest.seed = Some(a.seed);
    let opts = SynthOptions {
        n_instances: a.size,
        seed: a.seed,
        background_rate: a.background_rate,
        distinct_pairs: a.distinct_pairs,
        ..SynthOptions::default()
    };
    let instances = synth_corpus(&opts)?;
    write_corpus(&instances, &a.out)?;
    manifest.output("corpus", &a.out)?;
    if let Some(path) = &a.triggers_out {
        write_json(path, &trigger_map())?;
        manifest.output("triggers", path)?;
    }
    manifest.finish(a.manifest.manifest.as_deref())?;
    Ok(())
}
