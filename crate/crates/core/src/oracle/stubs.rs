//! Deterministic in-process oracles.
//!
//! [`EntityMemorizer`] predicts from entity names alone and ignores context;
//! [`ContextReader`] predicts from context trigger words alone and ignores
//! names. Together they bracket the behaviours a real model can show under
//! entity replacement.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{NerOracle, NerRequest, NerResponse, NerSpan, OracleError, OraclePrediction, OracleRequest, RelationOracle};
use crate::corpus::{ReInstance, Role, NO_RELATION};

fn with_background(labels: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut set: BTreeSet<String> = labels.into_iter().collect();
    set.insert(NO_RELATION.to_string());
    set.into_iter().collect()
}

/// Answers every request with one fixed label.
#[derive(Debug, Clone)]
pub struct ConstantOracle {
    label: String,
    labels: Vec<String>,
}

impl ConstantOracle {
    pub fn new(label: impl Into<String>) -> Self {
        let label = label.into();
        ConstantOracle { labels: with_background([label.clone()]), label }
    }

    pub fn no_relation() -> Self {
        Self::new(NO_RELATION)
    }
}

impl RelationOracle for ConstantOracle {
    fn identity(&self) -> String {
        format!("stub:constant={}", self.label)
    }

    fn labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn predict_batch(&self, batch: &[OracleRequest]) -> Result<Vec<OraclePrediction>, OracleError> {
        Ok(batch.iter().map(|r| OraclePrediction::new(r.id.clone(), self.label.clone())).collect())
    }
}

/// Returns the relation memorized for the exact (subject name, object name)
/// pair, `no_relation` otherwise. Context tokens are never read.
#[derive(Debug, Clone, Default)]
pub struct EntityMemorizer {
    pairs: HashMap<(Vec<String>, Vec<String>), String>,
    labels: Vec<String>,
}

impl EntityMemorizer {
    pub fn new(pairs: impl IntoIterator<Item = ((Vec<String>, Vec<String>), String)>) -> Self {
        let pairs: HashMap<_, _> = pairs.into_iter().collect();
        let labels = with_background(pairs.values().cloned());
        EntityMemorizer { pairs, labels }
    }

    /// Memorizes the gold relation of every instance. On conflicting pairs
    /// the first instance wins.
    pub fn from_instances(instances: &[ReInstance]) -> Self {
        let mut pairs = HashMap::new();
        for inst in instances {
            pairs
                .entry((inst.mention(Role::Subject).to_vec(), inst.mention(Role::Object).to_vec()))
                .or_insert_with(|| inst.relation().to_string());
        }
        Self::new(pairs)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn recall(&self, subject: &[String], object: &[String]) -> &str {
        self.pairs
            .get(&(subject.to_vec(), object.to_vec()))
            .map(String::as_str)
            .unwrap_or(NO_RELATION)
    }
}

impl RelationOracle for EntityMemorizer {
    fn identity(&self) -> String {
        format!("stub:memorizer({} pairs)", self.pairs.len())
    }

    fn labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn predict_batch(&self, batch: &[OracleRequest]) -> Result<Vec<OraclePrediction>, OracleError> {
        Ok(batch
            .iter()
            .map(|r| OraclePrediction::new(r.id.clone(), self.recall(r.mention(Role::Subject), r.mention(Role::Object))))
            .collect())
    }
}

/// Returns the relation of the first trigger token found outside both
/// entity spans, `no_relation` when there is none.
#[derive(Debug, Clone, Default)]
pub struct ContextReader {
    triggers: BTreeMap<String, String>,
    labels: Vec<String>,
}

impl ContextReader {
    pub fn new(triggers: BTreeMap<String, String>) -> Self {
        let labels = with_background(triggers.values().cloned());
        ContextReader { triggers, labels }
    }

    pub fn triggers(&self) -> &BTreeMap<String, String> {
        &self.triggers
    }

    pub fn read(&self, req: &OracleRequest) -> &str {
        req.tokens
            .iter()
            .enumerate()
            .filter(|(i, _)| !req.in_entity(*i))
            .find_map(|(_, t)| self.triggers.get(t))
            .map(String::as_str)
            .unwrap_or(NO_RELATION)
    }
}

impl RelationOracle for ContextReader {
    fn identity(&self) -> String {
        format!("stub:context-reader({} triggers)", self.triggers.len())
    }

    fn labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn predict_batch(&self, batch: &[OracleRequest]) -> Result<Vec<OraclePrediction>, OracleError> {
        Ok(batch.iter().map(|r| OraclePrediction::new(r.id.clone(), self.read(r))).collect())
    }
}

/// Delivers the wrapped oracle's responses in reverse order.
#[derive(Debug, Clone)]
pub struct Reversed<O>(pub O);

impl<O: RelationOracle> RelationOracle for Reversed<O> {
    fn identity(&self) -> String {
        format!("reversed({})", self.0.identity())
    }

    fn labels(&self) -> Vec<String> {
        self.0.labels()
    }

    fn predict_batch(&self, batch: &[OracleRequest]) -> Result<Vec<OraclePrediction>, OracleError> {
        let mut out = self.0.predict_batch(batch)?;
        out.reverse();
        Ok(out)
    }
}

impl<O: NerOracle> NerOracle for Reversed<O> {
    fn identity(&self) -> String {
        format!("reversed({})", self.0.identity())
    }

    fn tag_batch(&self, batch: &[NerRequest]) -> Result<Vec<NerResponse>, OracleError> {
        let mut out = self.0.tag_batch(batch)?;
        out.reverse();
        Ok(out)
    }
}

/// NER tagger that answers from a fixed table of spans keyed by instance id;
/// unknown ids get no spans.
#[derive(Debug, Clone, Default)]
pub struct TableNer {
    spans: HashMap<String, Vec<NerSpan>>,
}

impl TableNer {
    pub fn new(spans: HashMap<String, Vec<NerSpan>>) -> Self {
        TableNer { spans }
    }

    /// Echoes the annotated subject/object spans of a reference corpus, i.e.
    /// a perfect tagger with respect to that corpus.
    pub fn from_reference(instances: &[ReInstance]) -> Self {
        let spans = instances
            .iter()
            .map(|inst| {
                let spans = Role::BOTH
                    .iter()
                    .map(|r| {
                        let s = inst.span(*r);
                        NerSpan { start: s.start, end: s.end, entity_type: inst.entity_type(*r).as_str().to_string() }
                    })
                    .collect();
                (inst.id().to_string(), spans)
            })
            .collect();
        TableNer { spans }
    }
}

impl NerOracle for TableNer {
    fn identity(&self) -> String {
        format!("stub:table-ner({} entries)", self.spans.len())
    }

    fn tag_batch(&self, batch: &[NerRequest]) -> Result<Vec<NerResponse>, OracleError> {
        Ok(batch
            .iter()
            .map(|r| NerResponse {
                id: r.id.clone(),
                spans: self
                    .spans
                    .get(&r.id)
                    .map(|s| s.iter().filter(|sp| sp.end <= r.tokens.len()).cloned().collect())
                    .unwrap_or_default(),
            })
            .collect())
    }
}
