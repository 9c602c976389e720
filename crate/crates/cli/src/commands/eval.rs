use std::fmt;

use anyhow::Result;
use entred_core::eval::{evaluate, robustness_eval, score_predictions};
use entred_core::oracle::OraclePrediction;
use entred_core::{EvalReport, RobustnessReport};

use super::{emit, load, load_path, pct, read_json};
use crate::cli::{EvalCmd, RobustnessArgs, ScoreArgs};
use crate::manifest::RunManifest;
use crate::oracles::{batch_options, relation_oracle, require};

/// A score fell below `--min-f1`.
#[derive(Debug)]
pub struct BelowFloor {
    pub f1: f64,
    pub floor: f64,
}

impl fmt::Display for BelowFloor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "micro-F1 {:.4} is below the floor {:.4}", self.f1, self.floor)
    }
}

impl std::error::Error for BelowFloor {}

fn check_floor(f1: f64, floor: Option<f64>) -> Result<()> {
    match floor {
        Some(floor) if f1 < floor => Err(BelowFloor { f1, floor }.into()),
        _ => Ok(()),
    }
}

pub fn run(cmd: EvalCmd) -> Result<()> {
    match cmd {
        EvalCmd::Score(a) => score(a),
        EvalCmd::Robustness(a) => robustness(a),
    }
}

fn eval_table(r: &EvalReport) -> String {
    let width = r.per_relation.keys().map(String::len).max().unwrap_or(0).max(5);
    let mut out = format!("{:<width$}  {:>8}  {:>8}  {:>8}  {:>6}  {:>6}  {:>6}\n", "relation", "P", "R", "F1", "ok", "guess", "gold");
    for (rel, p) in r.per_relation.iter().chain([(&"micro".to_string(), &r.micro)]) {
        out.push_str(&format!(
            "{rel:<width$}  {}  {}  {}  {:>6}  {:>6}  {:>6}\n",
            pct(p.precision),
            pct(p.recall),
            pct(p.f1),
            p.n_correct,
            p.n_guessed,
            p.n_gold
        ));
    }
    out
}

fn score(a: ScoreArgs) -> Result<()> {
    let mut manifest = RunManifest::start("eval score", &a)?;
    manifest.input("corpus", &a.input.corpus)?;
    let instances = load(&a.input)?;
    let report: EvalReport = match &a.predictions {
        Some(path) => {
            manifest.input("predictions", path)?;
            let preds: Vec<OraclePrediction> = read_json(path)?;
            score_predictions(&instances, &preds)?
        }
        None => {
            let spec = require(&a.oracle, "oracle")?;
            if let Some(p) = spec.input_file() {
                manifest.input("oracle", p)?;
            }
            let oracle = relation_oracle(&spec, &a.batch)?;
            manifest.oracle = Some(oracle.identity());
            evaluate(&instances, oracle.as_ref(), &batch_options(&a.batch))?.0
        }
    };
    emit(&report, &a.report, eval_table)?;
    if let Some(r) = &a.report.report {
        manifest.output("report", r)?;
    }
    if !manifest.outputs.is_empty() || a.manifest.manifest.is_some() {
        manifest.finish(a.manifest.manifest.as_deref())?;
    }
    check_floor(report.micro.f1, a.min_f1)
}

fn robustness_table(r: &RobustnessReport) -> String {
    let drop = r.delta.relative_drop.map(pct).unwrap_or_else(|| "      -".into());
    format!(
        "F1 before      {}\nF1 after       {}\nrelative drop  {}\n",
        pct(r.delta.f1_before),
        pct(r.delta.f1_after),
        drop
    )
}

fn robustness(a: RobustnessArgs) -> Result<()> {
    let mut manifest = RunManifest::start("eval robustness", &a)?;
    manifest.input("before", &a.before)?;
    manifest.input("after", &a.after)?;
    let spec = require(&a.oracle, "oracle")?;
    if let Some(p) = spec.input_file() {
        manifest.input("oracle", p)?;
    }
    let before = load_path(&a.before, a.lenient)?;
    let after = load_path(&a.after, a.lenient)?;
    let oracle = relation_oracle(&spec, &a.batch)?;
    manifest.oracle = Some(oracle.identity());
    let report: RobustnessReport = robustness_eval(&before, &after, oracle.as_ref(), &batch_options(&a.batch))?;
    emit(&report, &a.report, robustness_table)?;
    if let Some(r) = &a.report.report {
        manifest.output("report", r)?;
    }
    if !manifest.outputs.is_empty() || a.manifest.manifest.is_some() {
        manifest.finish(a.manifest.manifest.as_deref())?;
    }
    check_floor(report.delta.f1_after, a.min_f1)
}
