//! Pre-flight checks and corpus-level audits: eligibility, annotation
//! disagreement against an NER tagger, counterfactual shortcut ratios and
//! entity-name diversity.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EntityType, ReInstance, Role, Span};
use crate::lexicon::EntityName;
use crate::oracle::{
    predict_all, tag_all, BatchOptions, NerOracle, NerRequest, NerSpan, OracleError, OracleRequest, RelationOracle,
};
use crate::replace::{mask_context, ContextMask, MASK_TOKEN};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("relation sets differ: only before {only_before:?}, only after {only_after:?}")]
    RelationMismatch { only_before: Vec<String>, only_after: Vec<String> },
}

// ---------------------------------------------------------------------------
// Eligibility
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Ineligible {
    pub id: String,
    pub subj_type: String,
    pub obj_type: String,
    pub reason: String,
}

/// Splits instances into those with at least one PERSON/ORGANIZATION role
/// and the rest.
pub fn eligibility_filter(instances: &[ReInstance]) -> (Vec<ReInstance>, Vec<Ineligible>) {
    let mut eligible = Vec::new();
    let mut ineligible = Vec::new();
    for inst in instances {
        if inst.replaceable_roles().next().is_some() {
            eligible.push(inst.clone());
        } else {
            ineligible.push(Ineligible {
                id: inst.id().to_string(),
                subj_type: inst.entity_type(Role::Subject).to_string(),
                obj_type: inst.entity_type(Role::Object).to_string(),
                reason: "neither role is PERSON or ORGANIZATION".into(),
            });
        }
    }
    (eligible, ineligible)
}

// ---------------------------------------------------------------------------
// Annotation disagreement
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Match,
    SpanMismatch,
    TypeMismatch,
    Missing,
}

/// How an annotated span is compared with NER spans.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SpanMatching {
    #[default]
    Exact,
    /// Spans with token Jaccard at least this value count as the same span.
    Overlap { min_jaccard: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoleCheck {
    pub role: Role,
    pub annotated_span: Span,
    pub annotated_type: String,
    pub ner_span: Option<Span>,
    pub ner_type: Option<String>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceCheck {
    pub id: String,
    pub flagged: bool,
    pub roles: Vec<RoleCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisagreementReport {
    pub n_instances: usize,
    pub n_flagged: usize,
    pub verdict_counts: BTreeMap<Verdict, usize>,
    pub instances: Vec<InstanceCheck>,
}

impl DisagreementReport {
    pub fn flagged(&self) -> impl Iterator<Item = &InstanceCheck> {
        self.instances.iter().filter(|c| c.flagged)
    }

    pub fn flagged_ratio(&self) -> f64 {
        if self.n_instances == 0 {
            0.0
        } else {
            self.n_flagged as f64 / self.n_instances as f64
        }
    }
}

/// Compares one annotated mention with the tagger's spans.
pub fn check_role(inst: &ReInstance, role: Role, ner: &[NerSpan], matching: SpanMatching) -> RoleCheck {
    let annotated = inst.span(role);
    let ty = inst.entity_type(role);
    // best candidate: exact span, else the largest overlap
    let best = ner
        .iter()
        .filter(|s| s.span().overlaps(&annotated))
        .max_by(|a, b| {
            let key = |s: &NerSpan| (s.span() == annotated, s.span().jaccard(&annotated));
            key(a).partial_cmp(&key(b)).unwrap_or(std::cmp::Ordering::Equal)
        });
    let verdict = match best {
        None => Verdict::Missing,
        Some(s) => {
            let same_span = match matching {
                SpanMatching::Exact => s.span() == annotated,
                SpanMatching::Overlap { min_jaccard } => s.span().jaccard(&annotated) >= min_jaccard,
            };
            if !same_span {
                Verdict::SpanMismatch
            } else if s.ty() != *ty {
                Verdict::TypeMismatch
            } else {
                Verdict::Match
            }
        }
    };
    RoleCheck {
        role,
        annotated_span: annotated,
        annotated_type: ty.to_string(),
        ner_span: best.map(NerSpan::span),
        ner_type: best.map(|s| s.entity_type.clone()),
        verdict,
    }
}

/// Re-tags every sentence and flags instances where either role disagrees
/// with the tagger. Returns the clean instances in input order.
pub fn flag_annotations(
    instances: &[ReInstance],
    ner: &dyn NerOracle,
    matching: SpanMatching,
    opts: &BatchOptions,
) -> Result<(Vec<ReInstance>, DisagreementReport), AuditError> {
    let requests: Vec<NerRequest> = instances.iter().map(NerRequest::from).collect();
    let tagged = tag_all(ner, &requests, opts)?;

    let mut clean = Vec::new();
    let mut checks = Vec::with_capacity(instances.len());
    let mut verdict_counts = BTreeMap::new();
    for (inst, resp) in instances.iter().zip(&tagged.responses) {
        let roles: Vec<RoleCheck> = Role::BOTH.iter().map(|r| check_role(inst, *r, &resp.spans, matching)).collect();
        for rc in &roles {
            *verdict_counts.entry(rc.verdict).or_insert(0) += 1;
        }
        let flagged = roles.iter().any(|rc| rc.verdict != Verdict::Match);
        if !flagged {
            clean.push(inst.clone());
        }
        checks.push(InstanceCheck { id: inst.id().to_string(), flagged, roles });
    }
    let n_flagged = checks.iter().filter(|c| c.flagged).count();
    Ok((
        clean,
        DisagreementReport { n_instances: instances.len(), n_flagged, verdict_counts, instances: checks },
    ))
}

// ---------------------------------------------------------------------------
// Shortcuts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortcutCount<T> {
    pub n_instances: usize,
    pub n_shortcut: usize,
    pub ratio: T,
}

impl<T: Scalar> ShortcutCount<T> {
    pub fn new(n_instances: usize, n_shortcut: usize) -> Self {
        let ratio = if n_instances == 0 { T::zero() } else { T::ratio(n_shortcut, n_instances) };
        ShortcutCount { n_instances, n_shortcut, ratio }
    }
}

/// Share of instances whose counterfactual (context-masked) prediction
/// equals the gold relation, grouped by gold relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortcutReport<T> {
    pub mask_mode: ContextMask,
    pub mask_token: String,
    pub overall: ShortcutCount<T>,
    pub per_relation: BTreeMap<String, ShortcutCount<T>>,
}

impl<T: Scalar> ShortcutReport<T> {
    /// Builds a report from per-relation `(n_instances, n_shortcut)` counts.
    pub fn from_counts(mask_mode: ContextMask, mask_token: &str, counts: BTreeMap<String, (usize, usize)>) -> Self {
        let total = counts.values().fold((0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1));
        ShortcutReport {
            mask_mode,
            mask_token: mask_token.to_string(),
            overall: ShortcutCount::new(total.0, total.1),
            per_relation: counts.into_iter().map(|(rel, (n, s))| (rel, ShortcutCount::new(n, s))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShortcutOptions {
    pub mask_mode: ContextMask,
    pub mask_token: String,
    pub batch: BatchOptions,
}

impl Default for ShortcutOptions {
    fn default() -> Self {
        ShortcutOptions {
            mask_mode: ContextMask::PreservePositions,
            mask_token: MASK_TOKEN.to_string(),
            batch: BatchOptions::default(),
        }
    }
}

/// Queries the oracle on the context-masked version of every instance and
/// counts shortcuts.
pub fn shortcut_analysis<T: Scalar>(
    instances: &[ReInstance],
    oracle: &dyn RelationOracle,
    opts: &ShortcutOptions,
) -> Result<ShortcutReport<T>, AuditError> {
    let requests: Vec<OracleRequest> = instances
        .iter()
        .map(|i| OracleRequest::from(&mask_context(i, &opts.mask_token, opts.mask_mode)))
        .collect();
    let predicted = predict_all(oracle, &requests, &opts.batch)?;
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (inst, pred) in instances.iter().zip(&predicted.responses) {
        let entry = counts.entry(inst.relation().to_string()).or_default();
        entry.0 += 1;
        if pred.label == inst.relation() {
            entry.1 += 1;
        }
    }
    Ok(ShortcutReport::from_counts(opts.mask_mode, &opts.mask_token, counts))
}

// ---------------------------------------------------------------------------
// Diversity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameCount {
    pub name: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub n_instances: usize,
    pub distinct_subjects: usize,
    pub distinct_objects: usize,
    pub n_person_mentions: usize,
    pub distinct_person: usize,
    pub n_organization_mentions: usize,
    pub distinct_organization: usize,
    /// Most frequent subject names; count descending, then name ascending.
    pub top_subjects: Vec<NameCount>,
}

fn name_of(tokens: &[String]) -> EntityName {
    EntityName::from_tokens(tokens).expect("instance mentions are non-empty")
}

/// Counts distinct entity names (exact token-sequence equality).
pub fn diversity_stats(instances: &[ReInstance], top_k: usize) -> DiversityReport {
    let mut subjects: HashMap<EntityName, usize> = HashMap::new();
    let mut objects: HashSet<EntityName> = HashSet::new();
    let mut person: HashSet<EntityName> = HashSet::new();
    let mut organization: HashSet<EntityName> = HashSet::new();
    let (mut n_person, mut n_org) = (0, 0);

    for inst in instances {
        *subjects.entry(name_of(inst.mention(Role::Subject))).or_default() += 1;
        objects.insert(name_of(inst.mention(Role::Object)));
        for role in Role::BOTH {
            match inst.entity_type(role) {
                EntityType::Person => {
                    n_person += 1;
                    person.insert(name_of(inst.mention(role)));
                }
                EntityType::Organization => {
                    n_org += 1;
                    organization.insert(name_of(inst.mention(role)));
                }
                EntityType::Other(_) => {}
            }
        }
    }

    let mut ranked: Vec<(String, usize)> = subjects.iter().map(|(n, c)| (n.to_string(), *c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top_k);

    DiversityReport {
        n_instances: instances.len(),
        distinct_subjects: subjects.len(),
        distinct_objects: objects.len(),
        n_person_mentions: n_person,
        distinct_person: person.len(),
        n_organization_mentions: n_org,
        distinct_organization: organization.len(),
        top_subjects: ranked.into_iter().map(|(name, count)| NameCount { name, count }).collect(),
    }
}

// ---------------------------------------------------------------------------
// Before/after comparison
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioDelta<T> {
    pub before: T,
    pub after: T,
    /// `after - before`
    pub absolute: T,
    /// `(before - after) / before`; `None` when `before` is zero.
    pub relative_reduction: Option<T>,
}

impl<T: Scalar> RatioDelta<T> {
    pub fn new(before: T, after: T) -> Self {
        let relative_reduction =
            if before == T::zero() { None } else { Some((before.clone() - after.clone()) / before.clone()) };
        RatioDelta { absolute: after.clone() - before.clone(), before, after, relative_reduction }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityMultipliers<T> {
    /// `after / before` for each distinct count; `None` when `before` is zero.
    pub subjects: Option<T>,
    pub person: Option<T>,
    pub organization: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport<T> {
    pub overall: RatioDelta<T>,
    pub per_relation: BTreeMap<String, RatioDelta<T>>,
    pub diversity: Option<DiversityMultipliers<T>>,
}

fn multiplier<T: Scalar>(before: usize, after: usize) -> Option<T> {
    (before > 0).then(|| T::ratio(after, before))
}

/// Per-relation shortcut deltas and, when both diversity reports are given,
/// diversity multipliers.
pub fn compare_reports<T: Scalar>(
    before: &ShortcutReport<T>,
    after: &ShortcutReport<T>,
    diversity: Option<(&DiversityReport, &DiversityReport)>,
) -> Result<ComparisonReport<T>, AuditError> {
    let b: BTreeSet<&String> = before.per_relation.keys().collect();
    let a: BTreeSet<&String> = after.per_relation.keys().collect();
    if a != b {
        return Err(AuditError::RelationMismatch {
            only_before: b.difference(&a).map(|s| s.to_string()).collect(),
            only_after: a.difference(&b).map(|s| s.to_string()).collect(),
        });
    }
    let per_relation = before
        .per_relation
        .iter()
        .map(|(rel, bc)| (rel.clone(), RatioDelta::new(bc.ratio.clone(), after.per_relation[rel].ratio.clone())))
        .collect();
    let diversity = diversity.map(|(db, da)| DiversityMultipliers {
        subjects: multiplier(db.distinct_subjects, da.distinct_subjects),
        person: multiplier(db.distinct_person, da.distinct_person),
        organization: multiplier(db.distinct_organization, da.distinct_organization),
    });
    Ok(ComparisonReport {
        overall: RatioDelta::new(before.overall.ratio.clone(), after.overall.ratio.clone()),
        per_relation,
        diversity,
    })
}

/// Published corpus figures kept as fixtures; checked only when the
/// original files are supplied.
pub mod reference {
    /// Sentences and tokens of the original test split.
    pub const TACRED_TEST_SENTENCES: usize = 15_509;
    pub const TACRED_TEST_TOKENS: usize = 539_306;
    /// Distinct subject names in the original test split.
    pub const TACRED_TEST_DISTINCT_SUBJECTS: usize = 420;
    /// Sentences and tokens of the published replaced benchmark.
    pub const ENTRED_SENTENCES: usize = 12_419;
    pub const ENTRED_TOKENS: usize = 457_121;
    /// Lower bound on the subject-diversity gain of the published benchmark.
    pub const ENTRED_SUBJECT_DIVERSITY_MULTIPLIER: f64 = 25.0;
    /// Sizes of the published name lists.
    pub const LEXICON_PERSON_NAMES: usize = 902_007;
    pub const LEXICON_ORGANIZATION_NAMES: usize = 24_933;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityType::{Organization, Other, Person};
    use crate::oracle::stubs::TableNer;
    use num_rational::Rational64;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn inst(id: &str, s: Span, o: Span, st: EntityType, ot: EntityType) -> ReInstance {
        ReInstance::new(id, toks("Al Bo works at Acme Inc today"), s, o, st, ot, "per:employee_of").unwrap()
    }

    fn ner(s: usize, e: usize, ty: &str) -> NerSpan {
        NerSpan { start: s, end: e, entity_type: ty.into() }
    }

    #[test]
    fn eligibility() {
        let a = inst("a", Span::new(0, 2), Span::new(6, 7), Person, Other("DATE".into()));
        let b = inst("b", Span::new(0, 2), Span::new(6, 7), Other("X".into()), Other("DATE".into()));
        let (ok, bad) = eligibility_filter(&[a, b]);
        assert_eq!(ok.len(), 1);
        assert_eq!(ok[0].id(), "a");
        assert_eq!(bad[0].id, "b");
    }

    #[test]
    fn role_verdicts() {
        let i = inst("a", Span::new(0, 2), Span::new(4, 6), Person, Organization);
        let exact = [ner(0, 2, "PER"), ner(4, 6, "ORG")];
        assert_eq!(check_role(&i, Role::Subject, &exact, SpanMatching::Exact).verdict, Verdict::Match);
        assert_eq!(check_role(&i, Role::Object, &exact, SpanMatching::Exact).verdict, Verdict::Match);

        let shifted = [ner(1, 3, "PERSON")];
        let rc = check_role(&i, Role::Subject, &shifted, SpanMatching::Exact);
        assert_eq!(rc.verdict, Verdict::SpanMismatch);
        assert_eq!(rc.ner_span, Some(Span::new(1, 3)));

        let typed = [ner(0, 2, "ORGANIZATION")];
        assert_eq!(check_role(&i, Role::Subject, &typed, SpanMatching::Exact).verdict, Verdict::TypeMismatch);
        assert_eq!(check_role(&i, Role::Object, &typed, SpanMatching::Exact).verdict, Verdict::Missing);

        let partial = [ner(0, 1, "PERSON")];
        let loose = SpanMatching::Overlap { min_jaccard: 0.5 };
        assert_eq!(check_role(&i, Role::Subject, &partial, loose).verdict, Verdict::Match);
        assert_eq!(check_role(&i, Role::Subject, &partial, SpanMatching::Exact).verdict, Verdict::SpanMismatch);
    }

    #[test]
    fn exact_span_preferred_over_larger_overlap() {
        let i = inst("a", Span::new(0, 2), Span::new(4, 6), Person, Organization);
        let spans = [ner(2, 3, "PERSON"), ner(0, 2, "PERSON")];
        assert_eq!(check_role(&i, Role::Subject, &spans, SpanMatching::Exact).verdict, Verdict::Match);
    }

    #[test]
    fn flagging_with_agreeing_tagger() {
        let items = vec![
            inst("a", Span::new(0, 2), Span::new(4, 6), Person, Organization),
            inst("b", Span::new(0, 1), Span::new(4, 5), Person, Organization),
        ];
        let tagger = TableNer::from_reference(&items);
        let (clean, report) = flag_annotations(&items, &tagger, SpanMatching::Exact, &BatchOptions::default()).unwrap();
        assert_eq!(clean, items);
        assert_eq!(report.n_flagged, 0);
        assert_eq!(report.verdict_counts[&Verdict::Match], 4);
    }

    #[test]
    fn diversity_ranking() {
        let items = vec![
            inst("a", Span::new(0, 2), Span::new(4, 6), Person, Organization),
            inst("b", Span::new(0, 2), Span::new(4, 5), Person, Organization),
            inst("c", Span::new(4, 5), Span::new(0, 1), Organization, Person),
        ];
        let d = diversity_stats(&items, 10);
        assert_eq!(d.distinct_subjects, 2);
        assert_eq!(d.top_subjects[0], NameCount { name: "Al Bo".into(), count: 2 });
        assert_eq!(d.top_subjects[1], NameCount { name: "Acme".into(), count: 1 });
        assert_eq!(d.n_person_mentions, 3);
        assert_eq!(d.distinct_person, 2);
        assert_eq!(d.distinct_organization, 2);
        assert_eq!(diversity_stats(&items, 1).top_subjects.len(), 1);
    }

    #[test]
    fn ties_break_by_name() {
        let items = vec![
            inst("a", Span::new(1, 2), Span::new(4, 6), Person, Organization),
            inst("b", Span::new(0, 1), Span::new(4, 6), Person, Organization),
        ];
        let d = diversity_stats(&items, 10);
        assert_eq!(d.top_subjects[0].name, "Al");
        assert_eq!(d.top_subjects[1].name, "Bo");
    }

    fn report(entries: &[(&str, usize, usize)]) -> ShortcutReport<Rational64> {
        ShortcutReport::from_counts(
            ContextMask::PreservePositions,
            MASK_TOKEN,
            entries.iter().map(|(r, n, s)| (r.to_string(), (*n, *s))).collect(),
        )
    }

    #[test]
    fn comparison_arithmetic() {
        let before = report(&[("r", 10, 8)]);
        let after = report(&[("r", 10, 3)]);
        let c = compare_reports(&before, &after, None).unwrap();
        assert_eq!(c.per_relation["r"].relative_reduction, Some(Rational64::new(5, 8)));
        assert_eq!(c.per_relation["r"].absolute, Rational64::new(-1, 2));

        let same = compare_reports(&before, &before, None).unwrap();
        assert_eq!(same.overall.absolute, Rational64::from_integer(0));
        assert_eq!(same.overall.relative_reduction, Some(Rational64::from_integer(0)));

        let other = report(&[("q", 1, 1)]);
        assert!(matches!(compare_reports(&before, &other, None), Err(AuditError::RelationMismatch { .. })));
    }

    #[test]
    fn diversity_multiplier() {
        let items = vec![inst("a", Span::new(0, 2), Span::new(4, 6), Person, Organization)];
        let d1 = diversity_stats(&items, 3);
        let mut d2 = d1.clone();
        d2.distinct_subjects = 26;
        let r = report(&[("r", 1, 1)]);
        let c = compare_reports(&r, &r, Some((&d1, &d2))).unwrap();
        assert_eq!(c.diversity.unwrap().subjects, Some(Rational64::from_integer(26)));
    }

    #[test]
    fn overall_is_pooled() {
        let r = report(&[("a", 4, 1), ("b", 6, 6)]);
        assert_eq!(r.overall.n_instances, 10);
        assert_eq!(r.overall.ratio, Rational64::new(7, 10));
        assert_eq!(r.per_relation["a"].ratio, Rational64::new(1, 4));
    }
}
