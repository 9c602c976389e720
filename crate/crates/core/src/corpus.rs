//! Relation-extraction instances and the TACRED-style JSON interchange format.
//!
//! The on-disk format stores entity spans with *inclusive* end indices
//! (`subj_start..=subj_end`). In memory every span is a half-open [`Span`];
//! the conversion happens only in [`parse_corpus`] and [`corpus_to_json`].

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::ops::{Add, AddAssign};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Background relation label.
pub const NO_RELATION: &str = "no_relation";

/// Half-open token range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub const fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub const fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub const fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub const fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Size of the intersection in tokens.
    pub fn intersection(&self, other: &Span) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        hi.saturating_sub(lo)
    }

    /// Token-level Jaccard similarity.
    pub fn jaccard(&self, other: &Span) -> f64 {
        let inter = self.intersection(other);
        let union = self.len() + other.len() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub(crate) fn shifted(&self, delta: isize) -> Span {
        Span {
            start: self.start.checked_add_signed(delta).expect("span shift underflow"),
            end: self.end.checked_add_signed(delta).expect("span shift underflow"),
        }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

/// Entity type tag. Only `Person` and `Organization` may be replaced.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum EntityType {
    Person,
    Organization,
    Other(String),
}

impl EntityType {
    /// Parses a tag, accepting the short CoNLL aliases `PER` and `ORG`.
    pub fn from_tag(tag: &str) -> Self {
        match tag {
            "PERSON" | "PER" => EntityType::Person,
            "ORGANIZATION" | "ORG" => EntityType::Organization,
            other => EntityType::Other(other.to_string()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            EntityType::Person => "PERSON",
            EntityType::Organization => "ORGANIZATION",
            EntityType::Other(s) => s,
        }
    }

    pub fn is_replaceable(&self) -> bool {
        matches!(self, EntityType::Person | EntityType::Organization)
    }
}

impl From<String> for EntityType {
    fn from(s: String) -> Self {
        EntityType::from_tag(&s)
    }
}

impl From<EntityType> for String {
    fn from(t: EntityType) -> Self {
        t.as_str().to_string()
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Subject,
    Object,
}

impl Role {
    pub const BOTH: [Role; 2] = [Role::Subject, Role::Object];

    pub fn other(self) -> Role {
        match self {
            Role::Subject => Role::Object,
            Role::Object => Role::Subject,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Subject => "subject",
            Role::Object => "object",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Why an instance failed validation.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum InstanceFault {
    #[error("token list is empty")]
    NoTokens,
    #[error("token {index} is the empty string")]
    EmptyToken { index: usize },
    #[error("{role} span {span} is empty")]
    EmptySpan { role: Role, span: Span },
    #[error("{role} span {span} exceeds {len} tokens")]
    OutOfBounds { role: Role, span: Span, len: usize },
    #[error("subject span {subj} overlaps object span {obj}")]
    Overlap { subj: Span, obj: Span },
    #[error("relation label is empty")]
    EmptyRelation,
}

/// One sentence with a marked subject/object pair and its gold relation.
///
/// Instances are validated on construction and immutable afterwards; every
/// transform in this crate returns a new instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReInstance {
    id: String,
    tokens: Vec<String>,
    subj_span: Span,
    obj_span: Span,
    subj_type: EntityType,
    obj_type: EntityType,
    relation: String,
}

impl ReInstance {
    pub fn new(
        id: impl Into<String>,
        tokens: Vec<String>,
        subj_span: Span,
        obj_span: Span,
        subj_type: EntityType,
        obj_type: EntityType,
        relation: impl Into<String>,
    ) -> Result<Self, InstanceFault> {
        let inst = ReInstance {
            id: id.into(),
            tokens,
            subj_span,
            obj_span,
            subj_type,
            obj_type,
            relation: relation.into(),
        };
        inst.check()?;
        Ok(inst)
    }

    /// Checks every structural invariant.
    pub fn check(&self) -> Result<(), InstanceFault> {
        if self.tokens.is_empty() {
            return Err(InstanceFault::NoTokens);
        }
        if let Some(index) = self.tokens.iter().position(String::is_empty) {
            return Err(InstanceFault::EmptyToken { index });
        }
        for role in Role::BOTH {
            let span = self.span(role);
            if span.is_empty() {
                return Err(InstanceFault::EmptySpan { role, span });
            }
            if span.end > self.tokens.len() {
                return Err(InstanceFault::OutOfBounds { role, span, len: self.tokens.len() });
            }
        }
        if self.subj_span.overlaps(&self.obj_span) {
            return Err(InstanceFault::Overlap { subj: self.subj_span, obj: self.obj_span });
        }
        if self.relation.is_empty() {
            return Err(InstanceFault::EmptyRelation);
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn span(&self, role: Role) -> Span {
        match role {
            Role::Subject => self.subj_span,
            Role::Object => self.obj_span,
        }
    }

    pub fn entity_type(&self, role: Role) -> &EntityType {
        match role {
            Role::Subject => &self.subj_type,
            Role::Object => &self.obj_type,
        }
    }

    /// Tokens covered by the role's span.
    pub fn mention(&self, role: Role) -> &[String] {
        let span = self.span(role);
        &self.tokens[span.start..span.end]
    }

    /// True when the token index falls inside either entity span.
    pub fn in_entity(&self, index: usize) -> bool {
        let inside = |s: Span| s.start <= index && index < s.end;
        inside(self.subj_span) || inside(self.obj_span)
    }

    /// Roles whose type allows replacement.
    pub fn replaceable_roles(&self) -> impl Iterator<Item = Role> + '_ {
        Role::BOTH.into_iter().filter(|r| self.entity_type(*r).is_replaceable())
    }

    /// Same instance with a different relation label.
    pub fn with_relation(&self, relation: impl Into<String>) -> Result<Self, InstanceFault> {
        let mut out = self.clone();
        out.relation = relation.into();
        out.check()?;
        Ok(out)
    }

    /// Builds a copy with new tokens and spans. Caller upholds the invariants.
    pub(crate) fn rebuilt(&self, tokens: Vec<String>, subj_span: Span, obj_span: Span) -> Self {
        let out = ReInstance {
            id: self.id.clone(),
            tokens,
            subj_span,
            obj_span,
            subj_type: self.subj_type.clone(),
            obj_type: self.obj_type.clone(),
            relation: self.relation.clone(),
        };
        debug_assert_eq!(out.check(), Ok(()));
        out
    }
}

/// Source record with inclusive end indices. Fields are declared in
/// lexicographic order so serialization is sorted.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TacredRecord {
    id: String,
    obj_end: usize,
    obj_start: usize,
    obj_type: String,
    relation: String,
    subj_end: usize,
    subj_start: usize,
    subj_type: String,
    token: Vec<String>,
}

impl TacredRecord {
    fn from_instance(inst: &ReInstance) -> Self {
        TacredRecord {
            id: inst.id.clone(),
            obj_end: inst.obj_span.end - 1,
            obj_start: inst.obj_span.start,
            obj_type: inst.obj_type.as_str().to_string(),
            relation: inst.relation.clone(),
            subj_end: inst.subj_span.end - 1,
            subj_start: inst.subj_span.start,
            subj_type: inst.subj_type.as_str().to_string(),
            token: inst.tokens.clone(),
        }
    }

    fn into_instance(self) -> Result<ReInstance, InstanceFault> {
        // an inclusive end before the start maps to an empty span
        let half_open = |start: usize, end_incl: usize| {
            Span::new(start, if end_incl >= start { end_incl + 1 } else { start })
        };
        ReInstance::new(
            self.id,
            self.token,
            half_open(self.subj_start, self.subj_end),
            half_open(self.obj_start, self.obj_end),
            EntityType::from_tag(&self.subj_type),
            EntityType::from_tag(&self.obj_type),
            self.relation,
        )
    }
}

/// A record rejected during loading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub index: usize,
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed corpus{}: {message}", index.map(|i| format!(" at record {i}")).unwrap_or_default())]
    Format { index: Option<usize>, message: String },
    #[error("{} invalid record(s): {}", violations.len(), violation_ids(violations))]
    Validation { violations: Vec<Violation> },
    #[error("I/O error on {path}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

fn violation_ids(violations: &[Violation]) -> String {
    const SHOWN: usize = 10;
    let mut ids: Vec<&str> = violations.iter().take(SHOWN).map(|v| v.id.as_str()).collect();
    if violations.len() > SHOWN {
        ids.push("...");
    }
    ids.join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// Abort on the first batch of invalid records.
    #[default]
    Strict,
    /// Skip invalid records and report them.
    Lenient,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub instances: Vec<ReInstance>,
    /// Records skipped in lenient mode.
    pub skipped: Vec<Violation>,
}

/// Parses a JSON array of TACRED-style records.
pub fn parse_corpus(text: &str, mode: LoadMode) -> Result<LoadedCorpus, CorpusError> {
    let values: Vec<serde_json::Value> = serde_json::from_str(text)
        .map_err(|e| CorpusError::Format { index: None, message: e.to_string() })?;

    let mut out = LoadedCorpus::default();
    let mut seen = HashSet::new();
    for (index, value) in values.into_iter().enumerate() {
        let record: TacredRecord = serde_json::from_value(value)
            .map_err(|e| CorpusError::Format { index: Some(index), message: e.to_string() })?;
        let id = record.id.clone();
        let result = if seen.contains(&id) {
            Err(format!("duplicate id {id}"))
        } else {
            record.into_instance().map_err(|f| f.to_string())
        };
        match result {
            Ok(inst) => {
                seen.insert(id);
                out.instances.push(inst);
            }
            Err(reason) => out.skipped.push(Violation { index, id, reason }),
        }
    }

    if mode == LoadMode::Strict && !out.skipped.is_empty() {
        return Err(CorpusError::Validation { violations: out.skipped });
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>, mode: LoadMode) -> Result<LoadedCorpus, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    parse_corpus(&text, mode)
}

/// Deterministic serialization: one pretty-printed array, sorted record
/// fields, trailing newline.
pub fn corpus_to_json(instances: &[ReInstance]) -> String {
    let records: Vec<TacredRecord> = instances.iter().map(TacredRecord::from_instance).collect();
    let mut s = serde_json::to_string_pretty(&records).expect("records always serialize");
    s.push('\n');
    s
}

pub fn write_corpus(instances: &[ReInstance], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io = |source| CorpusError::Io { path: path.display().to_string(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, corpus_to_json(instances))
        .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })
}

/// Sentence, token and label counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_sentences: usize,
    pub n_tokens: usize,
    pub label_histogram: BTreeMap<String, usize>,
}

pub fn corpus_stats(instances: &[ReInstance]) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for inst in instances {
        stats.n_sentences += 1;
        stats.n_tokens += inst.tokens().len();
        *stats.label_histogram.entry(inst.relation().to_string()).or_default() += 1;
    }
    stats
}

impl AddAssign<&CorpusStats> for CorpusStats {
    fn add_assign(&mut self, rhs: &CorpusStats) {
        self.n_sentences += rhs.n_sentences;
        self.n_tokens += rhs.n_tokens;
        for (label, count) in &rhs.label_histogram {
            *self.label_histogram.entry(label.clone()).or_default() += count;
        }
    }
}

impl Add for CorpusStats {
    type Output = CorpusStats;

    fn add(mut self, rhs: CorpusStats) -> CorpusStats {
        self += &rhs;
        self
    }
}

/// Relation labels present in the corpus, sorted.
pub fn label_set(instances: &[ReInstance]) -> Vec<String> {
    let mut labels: Vec<String> = instances.iter().map(|i| i.relation().to_string()).collect();
    labels.sort();
    labels.dedup();
    labels
}

/// Checks every relation against a known label set (`no_relation` is always allowed).
pub fn check_labels(instances: &[ReInstance], labels: &[String]) -> Result<(), CorpusError> {
    let known: HashSet<&str> = labels.iter().map(String::as_str).collect();
    let violations: Vec<Violation> = instances
        .iter()
        .enumerate()
        .filter(|(_, i)| i.relation() != NO_RELATION && !known.contains(i.relation()))
        .map(|(index, i)| Violation {
            index,
            id: i.id().to_string(),
            reason: format!("unknown relation {}", i.relation()),
        })
        .collect();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CorpusError::Validation { violations })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn record(id: &str, subj: (usize, usize), obj: (usize, usize)) -> String {
        format!(
            r#"{{"id":"{id}","token":["John","works","at","ACME","Corp","."],"subj_start":{},"subj_end":{},"obj_start":{},"obj_end":{},"subj_type":"PERSON","obj_type":"ORGANIZATION","relation":"per:employee_of"}}"#,
            subj.0, subj.1, obj.0, obj.1
        )
    }

    #[test]
    fn inclusive_end_becomes_half_open() {
        let text = format!("[{}]", record("a", (0, 0), (3, 4)));
        let loaded = parse_corpus(&text, LoadMode::Strict).unwrap();
        let inst = &loaded.instances[0];
        assert_eq!(inst.span(Role::Subject), Span::new(0, 1));
        assert_eq!(inst.span(Role::Object), Span::new(3, 5));
        assert_eq!(inst.mention(Role::Object), ["ACME", "Corp"]);
    }

    #[test]
    fn single_token_at_five() {
        let text = r#"[{"id":"x","token":["a","b","c","d","e","Bob","g"],"subj_start":5,"subj_end":5,"obj_start":0,"obj_end":0,"subj_type":"PERSON","obj_type":"DATE","relation":"no_relation"}]"#;
        let inst = &parse_corpus(text, LoadMode::Strict).unwrap().instances[0];
        assert_eq!(inst.span(Role::Subject), Span::new(5, 6));
        assert_eq!(inst.entity_type(Role::Object), &EntityType::Other("DATE".into()));
    }

    #[test]
    fn empty_array() {
        let loaded = parse_corpus("[]", LoadMode::Strict).unwrap();
        assert!(loaded.instances.is_empty());
        assert_eq!(corpus_stats(&loaded.instances), CorpusStats::default());
    }

    #[test]
    fn format_error_carries_index() {
        let text = format!("[{}, {{\"id\": 3}}]", record("a", (0, 0), (3, 3)));
        match parse_corpus(&text, LoadMode::Lenient) {
            Err(CorpusError::Format { index: Some(1), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_corpus("{", LoadMode::Strict), Err(CorpusError::Format { index: None, .. })));
    }

    #[test]
    fn strict_rejects_and_lenient_skips() {
        let text = format!(
            "[{},{},{}]",
            record("ok", (0, 0), (3, 4)),
            record("overlap", (0, 3), (3, 4)),
            record("oob", (0, 0), (5, 9))
        );
        match parse_corpus(&text, LoadMode::Strict) {
            Err(CorpusError::Validation { violations }) => {
                let ids: Vec<_> = violations.iter().map(|v| v.id.as_str()).collect();
                assert_eq!(ids, ["overlap", "oob"]);
            }
            other => panic!("unexpected {other:?}"),
        }
        let loaded = parse_corpus(&text, LoadMode::Lenient).unwrap();
        assert_eq!(loaded.instances.len(), 1);
        assert_eq!(loaded.skipped.len(), 2);
        assert_eq!(loaded.skipped[1].index, 2);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = format!("[{},{}]", record("a", (0, 0), (3, 3)), record("a", (0, 0), (3, 3)));
        assert!(matches!(parse_corpus(&text, LoadMode::Strict), Err(CorpusError::Validation { .. })));
    }

    #[test]
    fn constructor_faults() {
        let t = toks("a b c");
        let p = || EntityType::Person;
        assert_eq!(
            ReInstance::new("i", vec![], Span::new(0, 1), Span::new(1, 2), p(), p(), "r"),
            Err(InstanceFault::NoTokens)
        );
        assert_eq!(
            ReInstance::new("i", toks("a"), Span::new(0, 1), Span::new(1, 2), p(), p(), "r").unwrap_err(),
            InstanceFault::OutOfBounds { role: Role::Object, span: Span::new(1, 2), len: 1 }
        );
        assert!(matches!(
            ReInstance::new("i", t.clone(), Span::new(1, 1), Span::new(2, 3), p(), p(), "r"),
            Err(InstanceFault::EmptySpan { role: Role::Subject, .. })
        ));
        assert!(matches!(
            ReInstance::new("i", vec!["a".into(), "".into()], Span::new(0, 1), Span::new(1, 2), p(), p(), "r"),
            Err(InstanceFault::EmptyToken { index: 1 })
        ));
        assert!(ReInstance::new("i", t, Span::new(0, 2), Span::new(2, 3), p(), p(), "r").is_ok());
    }

    #[test]
    fn stats_sum() {
        let a = ReInstance::new("a", toks("1 2 3 4 5 6 7 8 9 10"), Span::new(0, 1), Span::new(1, 2),
            EntityType::Person, EntityType::Person, "r1").unwrap();
        let b = ReInstance::new("b", toks("1 2 3 4 5 6 7"), Span::new(0, 1), Span::new(1, 2),
            EntityType::Person, EntityType::Person, NO_RELATION).unwrap();
        let s = corpus_stats(&[a.clone(), b.clone()]);
        assert_eq!(s.n_sentences, 2);
        assert_eq!(s.n_tokens, 17);
        assert_eq!(s, corpus_stats(&[a]) + corpus_stats(&[b]));
    }

    #[test]
    fn serialized_fields_are_sorted() {
        let inst = ReInstance::new("a", toks("John works"), Span::new(0, 1), Span::new(1, 2),
            EntityType::Person, EntityType::Other("X".into()), "r").unwrap();
        let json = corpus_to_json(&[inst]);
        let keys: Vec<usize> = ["\"id\"", "\"obj_end\"", "\"obj_start\"", "\"obj_type\"", "\"relation\"",
            "\"subj_end\"", "\"subj_start\"", "\"subj_type\"", "\"token\""]
            .iter()
            .map(|k| json.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        assert!(json.ends_with("]\n"));
    }

    #[test]
    fn label_check() {
        let inst = ReInstance::new("a", toks("x y"), Span::new(0, 1), Span::new(1, 2),
            EntityType::Person, EntityType::Person, "per:spouse").unwrap();
        assert!(check_labels(std::slice::from_ref(&inst), &["per:spouse".into()]).is_ok());
        assert!(check_labels(&[inst], &["org:founded".into()]).is_err());
    }

    #[test]
    fn span_geometry() {
        let a = Span::new(2, 6);
        let b = Span::new(4, 8);
        assert!(a.overlaps(&b));
        assert!(!a.overlaps(&Span::new(6, 7)));
        assert_eq!(a.intersection(&b), 2);
        assert!((a.jaccard(&b) - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(a.jaccard(&a), 1.0);
    }
}
