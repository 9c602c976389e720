//! External prediction models ("oracles") and the batching layer over them.
//!
//! An oracle is anything that answers relation requests ([`RelationOracle`])
//! or NER requests ([`NerOracle`]): the in-process stubs in [`stubs`], or a
//! model process reached through [`client::OracleClient`]. All traffic goes
//! through [`predict_all`] / [`tag_all`], which batch, fan out across workers
//! and validate responses the same way for every oracle.

pub mod client;
pub mod protocol;
pub mod server;
pub mod stubs;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

pub use protocol::{Handshake, NerRequest, NerResponse, NerSpan, OraclePrediction, OracleRequest};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("protocol violation: {message}; payload: {payload}")]
    Protocol { message: String, payload: String },
    #[error("transport failure{}: {message}", if *transient { " (transient)" } else { "" })]
    Transport { message: String, transient: bool },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: Box<OracleError> },
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("duplicate request id {0:?} in batch")]
    DuplicateRequestId(String),
    #[error("invalid endpoint {0:?}")]
    Endpoint(String),
}

impl OracleError {
    pub fn is_transient(&self) -> bool {
        matches!(self, OracleError::Transport { transient: true, .. })
    }
}

/// Relation classifier.
pub trait RelationOracle: Send + Sync {
    /// Identifier recorded in run manifests.
    fn identity(&self) -> String;

    /// Label set announced at session start.
    fn labels(&self) -> Vec<String>;

    /// Answers one batch. Responses may arrive in any order.
    fn predict_batch(&self, batch: &[OracleRequest]) -> Result<Vec<OraclePrediction>, OracleError>;
}

/// Named-entity tagger.
pub trait NerOracle: Send + Sync {
    fn identity(&self) -> String;

    fn tag_batch(&self, batch: &[NerRequest]) -> Result<Vec<NerResponse>, OracleError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchOptions {
    pub batch_size: usize,
    /// Maximum batches in flight.
    pub workers: usize,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions { batch_size: 64, workers: 1 }
    }
}

/// Predictions in request order, plus traffic counts.
#[derive(Debug, Clone)]
pub struct BatchOutcome<P> {
    pub responses: Vec<P>,
    pub batches: usize,
    pub requests: usize,
}

impl<P> Default for BatchOutcome<P> {
    fn default() -> Self {
        BatchOutcome { responses: Vec::new(), batches: 0, requests: 0 }
    }
}

/// Runs `call` over `chunks` with up to `workers` threads; results keep chunk order.
fn fan_out<Q, P, F>(chunks: Vec<&[Q]>, workers: usize, call: F) -> Result<Vec<Vec<P>>, OracleError>
where
    Q: Sync,
    P: Send,
    F: Fn(&[Q]) -> Result<Vec<P>, OracleError> + Sync,
{
    let workers = workers.max(1).min(chunks.len());
    if workers <= 1 {
        return chunks.into_iter().map(&call).collect();
    }
    let next = AtomicUsize::new(0);
    type Slot<P> = Mutex<Option<Result<Vec<P>, OracleError>>>;
    let slots: Vec<Slot<P>> = chunks.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(chunk) = chunks.get(i) else { break };
                let result = call(chunk);
                let failed = result.is_err();
                *slots[i].lock().unwrap() = Some(result);
                if failed {
                    // stop handing out work
                    next.store(chunks.len(), Ordering::Relaxed);
                }
            });
        }
    });
    let mut out = Vec::with_capacity(slots.len());
    for slot in slots {
        // empty slots were skipped after an earlier failure
        if let Some(result) = slot.into_inner().unwrap() {
            out.push(result?);
        }
    }
    if out.len() != chunks.len() {
        unreachable!("a skipped chunk implies a recorded failure");
    }
    Ok(out)
}

/// Sends `requests` to `oracle` in batches and returns validated predictions
/// aligned with `requests`.
pub fn predict_all(
    oracle: &dyn RelationOracle,
    requests: &[OracleRequest],
    opts: &BatchOptions,
) -> Result<BatchOutcome<OraclePrediction>, OracleError> {
    protocol::check_unique_ids(requests.iter().map(|r| r.id.as_str()))?;
    if requests.is_empty() {
        return Ok(BatchOutcome::default());
    }
    let labels = oracle.labels();
    let chunks: Vec<&[OracleRequest]> = requests.chunks(opts.batch_size.max(1)).collect();
    let batches = chunks.len();
    let answered = fan_out(chunks, opts.workers, |chunk| {
        let raw = oracle.predict_batch(chunk)?;
        protocol::match_predictions(chunk, raw, &labels).inspect_err(|e| {
            log::error!("oracle {}: {e}", oracle.identity());
        })
    })?;
    Ok(BatchOutcome { responses: answered.into_iter().flatten().collect(), batches, requests: requests.len() })
}

/// NER counterpart of [`predict_all`].
pub fn tag_all(
    oracle: &dyn NerOracle,
    requests: &[NerRequest],
    opts: &BatchOptions,
) -> Result<BatchOutcome<NerResponse>, OracleError> {
    protocol::check_unique_ids(requests.iter().map(|r| r.id.as_str()))?;
    if requests.is_empty() {
        return Ok(BatchOutcome::default());
    }
    let chunks: Vec<&[NerRequest]> = requests.chunks(opts.batch_size.max(1)).collect();
    let batches = chunks.len();
    let answered = fan_out(chunks, opts.workers, |chunk| {
        let raw = oracle.tag_batch(chunk)?;
        protocol::match_ner(chunk, raw).inspect_err(|e| {
            log::error!("NER oracle {}: {e}", oracle.identity());
        })
    })?;
    Ok(BatchOutcome { responses: answered.into_iter().flatten().collect(), batches, requests: requests.len() })
}

#[cfg(test)]
mod tests {
    use super::stubs::{ConstantOracle, Reversed};
    use super::*;

    fn reqs(n: usize) -> Vec<OracleRequest> {
        (0..n)
            .map(|i| OracleRequest {
                id: format!("r{i}"),
                tokens: vec!["a".into(), "b".into()],
                subj_start: 0,
                subj_end: 1,
                obj_start: 1,
                obj_end: 2,
                subj_type: "PERSON".into(),
                obj_type: "PERSON".into(),
            })
            .collect()
    }

    #[test]
    fn empty_batch_makes_no_call() {
        struct Panics;
        impl RelationOracle for Panics {
            fn identity(&self) -> String {
                "panics".into()
            }
            fn labels(&self) -> Vec<String> {
                panic!("labels fetched")
            }
            fn predict_batch(&self, _: &[OracleRequest]) -> Result<Vec<OraclePrediction>, OracleError> {
                panic!("called")
            }
        }
        let out = predict_all(&Panics, &[], &BatchOptions::default()).unwrap();
        assert!(out.responses.is_empty());
        assert_eq!(out.batches, 0);
    }

    #[test]
    fn batch_counts_and_order() {
        let oracle = Reversed(ConstantOracle::no_relation());
        for workers in [1, 3] {
            let r = reqs(130);
            let out = predict_all(&oracle, &r, &BatchOptions { batch_size: 64, workers }).unwrap();
            assert_eq!(out.batches, 3);
            assert_eq!(out.requests, 130);
            assert!(out.responses.iter().zip(&r).all(|(p, q)| p.id == q.id && p.label == "no_relation"));
        }
    }

    #[test]
    fn duplicate_ids_rejected_before_sending() {
        let mut r = reqs(2);
        r[1].id = "r0".into();
        assert!(matches!(
            predict_all(&ConstantOracle::no_relation(), &r, &BatchOptions::default()),
            Err(OracleError::DuplicateRequestId(_))
        ));
    }

    #[test]
    fn worker_failure_propagates() {
        struct FailsOnSecond;
        impl RelationOracle for FailsOnSecond {
            fn identity(&self) -> String {
                "fails".into()
            }
            fn labels(&self) -> Vec<String> {
                vec!["no_relation".into()]
            }
            fn predict_batch(&self, b: &[OracleRequest]) -> Result<Vec<OraclePrediction>, OracleError> {
                if b[0].id == "r2" {
                    Err(OracleError::Transport { message: "boom".into(), transient: false })
                } else {
                    Ok(b.iter().map(|q| OraclePrediction::new(q.id.clone(), "no_relation")).collect())
                }
            }
        }
        for workers in [1, 4] {
            let res = predict_all(&FailsOnSecond, &reqs(8), &BatchOptions { batch_size: 2, workers });
            assert!(matches!(res, Err(OracleError::Transport { .. })));
        }
    }
}
