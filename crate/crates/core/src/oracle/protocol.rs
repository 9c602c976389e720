//! Wire messages exchanged with external prediction processes.
//!
//! Relation request line:
//! `{"id","tokens","subj_start","subj_end","obj_start","obj_end","subj_type","obj_type"}`
//! with half-open spans. Response: `{"id","label","scores"?}`. NER request:
//! `{"id","tokens"}`, response `{"id","spans":[{"start","end","type"}]}`.
//! A server announces its label set first with `{"labels":[...]}`.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::OracleError;
use crate::corpus::{EntityType, ReInstance, Role, Span};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleRequest {
    pub id: String,
    pub tokens: Vec<String>,
    pub subj_start: usize,
    pub subj_end: usize,
    pub obj_start: usize,
    pub obj_end: usize,
    pub subj_type: String,
    pub obj_type: String,
}

impl OracleRequest {
    pub fn span(&self, role: Role) -> Span {
        match role {
            Role::Subject => Span::new(self.subj_start, self.subj_end),
            Role::Object => Span::new(self.obj_start, self.obj_end),
        }
    }

    pub fn mention(&self, role: Role) -> &[String] {
        let s = self.span(role);
        self.tokens.get(s.start..s.end).unwrap_or(&[])
    }

    pub fn in_entity(&self, index: usize) -> bool {
        Role::BOTH.iter().any(|r| {
            let s = self.span(*r);
            s.start <= index && index < s.end
        })
    }
}

impl From<&ReInstance> for OracleRequest {
    fn from(inst: &ReInstance) -> Self {
        let subj = inst.span(Role::Subject);
        let obj = inst.span(Role::Object);
        OracleRequest {
            id: inst.id().to_string(),
            tokens: inst.tokens().to_vec(),
            subj_start: subj.start,
            subj_end: subj.end,
            obj_start: obj.start,
            obj_end: obj.end,
            subj_type: inst.entity_type(Role::Subject).as_str().to_string(),
            obj_type: inst.entity_type(Role::Object).as_str().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePrediction {
    pub id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<BTreeMap<String, f64>>,
}

impl OraclePrediction {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Self {
        OraclePrediction { id: id.into(), label: label.into(), scores: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NerRequest {
    pub id: String,
    pub tokens: Vec<String>,
}

impl From<&ReInstance> for NerRequest {
    fn from(inst: &ReInstance) -> Self {
        NerRequest { id: inst.id().to_string(), tokens: inst.tokens().to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NerSpan {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub entity_type: String,
}

impl NerSpan {
    pub fn span(&self) -> Span {
        Span::new(self.start, self.end)
    }

    pub fn ty(&self) -> EntityType {
        EntityType::from_tag(&self.entity_type)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NerResponse {
    pub id: String,
    pub spans: Vec<NerSpan>,
}

fn protocol<T: Serialize>(message: String, payload: &T) -> OracleError {
    OracleError::Protocol {
        message,
        payload: serde_json::to_string(payload).unwrap_or_default(),
    }
}

/// Checks that every request id is unique.
pub fn check_unique_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Result<(), OracleError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(OracleError::DuplicateRequestId(id.to_string()));
        }
    }
    Ok(())
}

/// Matches responses to requests by id (order-independent) and enforces
/// label-set closure and argmax consistency. Output follows request order.
pub fn match_predictions(
    requests: &[OracleRequest],
    responses: Vec<OraclePrediction>,
    labels: &[String],
) -> Result<Vec<OraclePrediction>, OracleError> {
    let known: HashSet<&str> = labels.iter().map(String::as_str).collect();
    let wanted: HashSet<&str> = requests.iter().map(|r| r.id.as_str()).collect();
    let mut by_id: HashMap<String, OraclePrediction> = HashMap::with_capacity(responses.len());

    for pred in responses {
        if !wanted.contains(pred.id.as_str()) {
            return Err(protocol(format!("response for unknown id {:?}", pred.id), &pred));
        }
        if !known.contains(pred.label.as_str()) {
            return Err(protocol(format!("label {:?} is not in the announced label set", pred.label), &pred));
        }
        if let Some(scores) = &pred.scores {
            if let Some(bad) = scores.keys().find(|k| !known.contains(k.as_str())) {
                return Err(protocol(format!("score key {bad:?} is not in the announced label set"), &pred));
            }
            let best = scores.values().copied().fold(f64::NEG_INFINITY, f64::max);
            match scores.get(&pred.label) {
                Some(s) if *s >= best => {}
                _ => return Err(protocol(format!("label {:?} is not the argmax of its scores", pred.label), &pred)),
            }
        }
        if by_id.contains_key(&pred.id) {
            return Err(protocol(format!("duplicate response id {:?}", pred.id), &pred));
        }
        by_id.insert(pred.id.clone(), pred);
    }

    requests
        .iter()
        .map(|req| {
            by_id.remove(&req.id).ok_or_else(|| protocol(format!("no response for id {:?}", req.id), req))
        })
        .collect()
}

/// Same as [`match_predictions`] for NER responses; spans must be in bounds
/// and non-overlapping.
pub fn match_ner(requests: &[NerRequest], responses: Vec<NerResponse>) -> Result<Vec<NerResponse>, OracleError> {
    let lengths: HashMap<&str, usize> = requests.iter().map(|r| (r.id.as_str(), r.tokens.len())).collect();
    let mut by_id: HashMap<String, NerResponse> = HashMap::with_capacity(responses.len());

    for resp in responses {
        let Some(&len) = lengths.get(resp.id.as_str()) else {
            return Err(protocol(format!("response for unknown id {:?}", resp.id), &resp));
        };
        let mut spans: Vec<Span> = resp.spans.iter().map(NerSpan::span).collect();
        if let Some(s) = spans.iter().find(|s| s.is_empty() || s.end > len) {
            return Err(protocol(format!("span {s} out of bounds for {len} tokens"), &resp));
        }
        spans.sort();
        if spans.windows(2).any(|w| w[0].overlaps(&w[1])) {
            return Err(protocol("overlapping NER spans".to_string(), &resp));
        }
        if by_id.contains_key(&resp.id) {
            return Err(protocol(format!("duplicate response id {:?}", resp.id), &resp));
        }
        by_id.insert(resp.id.clone(), resp);
    }

    requests
        .iter()
        .map(|req| {
            by_id.remove(&req.id).ok_or_else(|| protocol(format!("no response for id {:?}", req.id), req))
        })
        .collect()
}
