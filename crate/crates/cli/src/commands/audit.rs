use anyhow::Result;
use entred_core::audit::{
    compare_reports, diversity_stats, eligibility_filter, flag_annotations, shortcut_analysis, DisagreementReport,
    DiversityReport, ShortcutOptions, SpanMatching,
};
use entred_core::corpus::write_corpus;
use entred_core::{ComparisonReport, ShortcutReport};
use serde::Serialize;

use super::{emit, load, pct, read_json};
use crate::cli::{AnnotationsArgs, AuditCmd, CompareArgs, DiversityArgs, EligibilityArgs, ShortcutsArgs};
use crate::manifest::RunManifest;
use crate::oracles::{batch_options, ner_oracle, relation_oracle, require};

pub fn run(cmd: AuditCmd) -> Result<()> {
    match cmd {
        AuditCmd::Eligibility(a) => eligibility(a),
        AuditCmd::Annotations(a) => annotations(a),
        AuditCmd::Shortcuts(a) => shortcuts(a),
        AuditCmd::Diversity(a) => diversity(a),
        AuditCmd::Compare(a) => compare(a),
    }
}

#[derive(Serialize)]
struct EligibilityReport {
    n_instances: usize,
    n_eligible: usize,
    ineligible: Vec<entred_core::audit::Ineligible>,
}

fn eligibility(a: EligibilityArgs) -> Result<()> {
    let mut manifest = RunManifest::start("audit eligibility", &a)?;
    manifest.input("corpus", &a.input.corpus)?;
    let instances = load(&a.input)?;
    let (eligible, ineligible) = eligibility_filter(&instances);
    write_corpus(&eligible, &a.out)?;
    manifest.output("corpus", &a.out)?;
    let report = EligibilityReport { n_instances: instances.len(), n_eligible: eligible.len(), ineligible };
    emit(&report, &a.report, |r| {
        format!("eligible    {} of {}\nineligible  {}\n", r.n_eligible, r.n_instances, r.ineligible.len())
    })?;
    if let Some(r) = &a.report.report {
        manifest.output("report", r)?;
    }
    manifest.finish(a.manifest.manifest.as_deref())?;
    Ok(())
}

fn disagreement_table(r: &DisagreementReport) -> String {
    let mut out = format!("flagged  {} of {} ({})\n", r.n_flagged, r.n_instances, pct(r.flagged_ratio()).trim());
    for (verdict, n) in &r.verdict_counts {
        out.push_str(&format!("  {:<14}{n:>8}\n", serde_json::to_value(verdict).unwrap().as_str().unwrap_or("")));
    }
    out
}

fn annotations(a: AnnotationsArgs) -> Result<()> {
    let mut manifest = RunManifest::start("audit annotations", &a)?;
    manifest.input("corpus", &a.input.corpus)?;
    let spec = require(&a.ner, "ner")?;
    if let Some(p) = spec.input_file() {
        manifest.input("ner", p)?;
    }
    let instances = load(&a.input)?;
    let ner = ner_oracle(&spec, &a.batch)?;
    manifest.oracle = Some(ner.identity());
    let matching = match a.min_jaccard {
        Some(min_jaccard) => {
            anyhow::ensure!((0.0..=1.0).contains(&min_jaccard), "--min-jaccard must be within [0, 1]");
            SpanMatching::Overlap { min_jaccard }
        }
        None => SpanMatching::Exact,
    };
    let (clean, report) = flag_annotations(&instances, ner.as_ref(), matching, &batch_options(&a.batch))?;
    if let Some(out) = &a.out {
        write_corpus(&clean, out)?;
        manifest.output("corpus", out)?;
    }
    emit(&report, &a.report, disagreement_table)?;
    if let Some(r) = &a.report.report {
        manifest.output("report", r)?;
    }
    if !manifest.outputs.is_empty() || a.manifest.manifest.is_some() {
        manifest.finish(a.manifest.manifest.as_deref())?;
    }
    Ok(())
}

fn shortcut_table(r: &ShortcutReport) -> String {
    let width = r.per_relation.keys().map(String::len).max().unwrap_or(0).max(7);
    let mut out = format!("{:<width$}  {:>8}  {:>8}  {:>8}\n", "relation", "n", "shortcut", "ratio");
    for (rel, c) in r.per_relation.iter().chain([(&"overall".to_string(), &r.overall)]) {
        out.push_str(&format!("{rel:<width$}  {:>8}  {:>8}  {}\n", c.n_instances, c.n_shortcut, pct(c.ratio)));
    }
    out
}

fn shortcuts(a: ShortcutsArgs) -> Result<()> {
    let mut manifest = RunManifest::start("audit shortcuts", &a)?;
    manifest.input("corpus", &a.input.corpus)?;
    let spec = require(&a.oracle, "oracle")?;
    if let Some(p) = spec.input_file() {
        manifest.input("oracle", p)?;
    }
    let instances = load(&a.input)?;
    let oracle = relation_oracle(&spec, &a.batch)?;
    manifest.oracle = Some(oracle.identity());
    let opts = ShortcutOptions {
        mask_mode: a.mask.context_mode.into(),
        mask_token: a.mask.mask_token.clone(),
        batch: batch_options(&a.batch),
    };
    let report: ShortcutReport = shortcut_analysis(&instances, oracle.as_ref(), &opts)?;
    emit(&report, &a.report, shortcut_table)?;
    if let Some(r) = &a.report.report {
        manifest.output("report", r)?;
    }
    if !manifest.outputs.is_empty() || a.manifest.manifest.is_some() {
        manifest.finish(a.manifest.manifest.as_deref())?;
    }
    Ok(())
}

fn diversity_table(r: &DiversityReport) -> String {
    let mut out = format!(
        "instances              {}\ndistinct subjects      {}\ndistinct objects       {}\n\
         PERSON mentions        {} ({} distinct)\nORGANIZATION mentions  {} ({} distinct)\n",
        r.n_instances,
        r.distinct_subjects,
        r.distinct_objects,
        r.n_person_mentions,
        r.distinct_person,
        r.n_organization_mentions,
        r.distinct_organization
    );
    if !r.top_subjects.is_empty() {
        out.push_str("\ntop subjects\n");
        for n in &r.top_subjects {
            out.push_str(&format!("  {:>6}  {}\n", n.count, n.name));
        }
    }
    out
}

fn diversity(a: DiversityArgs) -> Result<()> {
    let instances = load(&a.input)?;
    emit(&diversity_stats(&instances, a.top_k), &a.report, diversity_table)
}

fn comparison_table(r: &ComparisonReport) -> String {
    let fmt_rel = |x: Option<f64>| x.map(pct).unwrap_or_else(|| "      -".into());
    let width = r.per_relation.keys().map(String::len).max().unwrap_or(0).max(7);
    let mut out = format!("{:<width$}  {:>8}  {:>8}  {:>9}\n", "relation", "before", "after", "reduction");
    for (rel, d) in r.per_relation.iter().chain([(&"overall".to_string(), &r.overall)]) {
        out.push_str(&format!(
            "{rel:<width$}  {}  {}  {}\n",
            pct(d.before),
            pct(d.after),
            fmt_rel(d.relative_reduction)
        ));
    }
    if let Some(m) = &r.diversity {
        let x = |v: Option<f64>| v.map(|v| format!("{v:.2}x")).unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "\ndistinct subjects {}  PERSON {}  ORGANIZATION {}\n",
            x(m.subjects),
            x(m.person),
            x(m.organization)
        ));
    }
    out
}

fn compare(a: CompareArgs) -> Result<()> {
    let before: ShortcutReport = read_json(&a.before)?;
    let after: ShortcutReport = read_json(&a.after)?;
    let diversity = match (&a.diversity_before, &a.diversity_after) {
        (Some(b), Some(af)) => Some((read_json::<DiversityReport>(b)?, read_json::<DiversityReport>(af)?)),
        _ => None,
    };
    let report = compare_reports(&before, &after, diversity.as_ref().map(|(b, a)| (b, a)))?;
    emit(&report, &a.report, comparison_table)
}
