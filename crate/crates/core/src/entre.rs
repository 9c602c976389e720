//! The adversarial replacement loop.
//!
//! Each iteration queries the oracle, selects target instances and
//! resamples every eligible PERSON/ORGANIZATION mention of each target from
//! the lexicon. The loop stops when no target is left or after
//! `max_iterations` rounds.
//!
//! Selection:
//! * `Full`: the prediction equals the gold relation.
//! * `Fast`: the prediction is not `no_relation` (gold is never read).
//!
//! An instance that is not selected is left untouched, so its prediction
//! cannot change under a deterministic oracle and it can never be selected
//! again. After the first round only the instances rewritten in the previous
//! round are re-queried.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{ReInstance, Role, NO_RELATION};
use crate::lexicon::{EntityLexicon, EntityName, LexiconError};
use crate::oracle::{predict_all, BatchOptions, OracleError, OraclePrediction, OracleRequest, RelationOracle};
use crate::replace::{replace_entity, ReplaceError, ReplacementRecord};

#[derive(Debug, Error)]
pub enum EntreError {
    #[error("invalid loop configuration: {0}")]
    Config(String),
    #[error("no prediction for instance {0}")]
    MissingPrediction(String),
    #[error("duplicate instance id {0}")]
    DuplicateId(String),
    #[error("instance {0} has no PERSON or ORGANIZATION entity; run the eligibility filter first")]
    Ineligible(String),
    #[error("the full-mode trace made no oracle calls")]
    NoCalls,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Replace(#[from] ReplaceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopMode {
    #[default]
    Full,
    Fast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub max_iterations: u32,
    pub mode: LoopMode,
    pub seed: u64,
    /// Replace every instance once before the first oracle query.
    pub initial_pass: bool,
    pub eligible_roles: BTreeSet<Role>,
    /// Full mode only: select instances whose gold and prediction are both
    /// `no_relation`.
    pub select_background: bool,
    /// Never draw a name that is already in the corpus or was drawn before.
    pub unique_names: bool,
    pub batch: BatchOptions,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_iterations: 200,
            mode: LoopMode::Full,
            seed: 0,
            initial_pass: false,
            eligible_roles: Role::BOTH.into_iter().collect(),
            select_background: true,
            unique_names: false,
            batch: BatchOptions::default(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), EntreError> {
        if self.max_iterations == 0 {
            return Err(EntreError::Config("max_iterations must be at least 1".into()));
        }
        if self.eligible_roles.is_empty() {
            return Err(EntreError::Config("no eligible roles".into()));
        }
        if self.batch.batch_size == 0 {
            return Err(EntreError::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PassKind {
    Initial,
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: u32,
    pub kind: PassKind,
    /// Instances sent to the oracle.
    pub oracle_calls: usize,
    pub oracle_batches: usize,
    pub selected: usize,
    pub replacements: Vec<ReplacementRecord>,
    /// Instances whose pool ran dry this round; they are never touched again.
    pub frozen: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopTrace {
    pub mode: LoopMode,
    pub seed: u64,
    pub max_iterations: u32,
    pub iterations: Vec<IterationTrace>,
    /// True when the selection emptied before `max_iterations`.
    pub halted_early: bool,
    pub oracle_calls: usize,
    pub oracle_batches: usize,
    /// Iteration of each instance's last replacement (`None`: never replaced).
    pub last_changed: BTreeMap<String, Option<u32>>,
}

impl LoopTrace {
    /// Number of adversarial (oracle-driven) iterations that ran.
    pub fn adversarial_iterations(&self) -> usize {
        self.iterations.iter().filter(|i| i.kind == PassKind::Adversarial).count()
    }

    pub fn replacements(&self) -> impl Iterator<Item = &ReplacementRecord> {
        self.iterations.iter().flat_map(|i| &i.replacements)
    }
}

#[derive(Debug, Clone)]
pub struct EntreOutput {
    pub corpus: Vec<ReInstance>,
    pub trace: LoopTrace,
}

fn selected(mode: LoopMode, select_background: bool, gold: &str, pred: &str) -> bool {
    match mode {
        LoopMode::Full => pred == gold && (select_background || gold != NO_RELATION),
        LoopMode::Fast => pred != NO_RELATION,
    }
}

/// Ids of the instances to rewrite, in instance order.
pub fn select_targets(
    instances: &[ReInstance],
    predictions: &[OraclePrediction],
    mode: LoopMode,
    select_background: bool,
) -> Result<Vec<String>, EntreError> {
    let by_id: HashMap<&str, &str> = predictions.iter().map(|p| (p.id.as_str(), p.label.as_str())).collect();
    let mut out = Vec::new();
    for inst in instances {
        let pred = by_id.get(inst.id()).ok_or_else(|| EntreError::MissingPrediction(inst.id().to_string()))?;
        if selected(mode, select_background, inst.relation(), pred) {
            out.push(inst.id().to_string());
        }
    }
    Ok(out)
}

/// Fast-mode selection from predictions alone.
pub fn select_fast(predictions: &[OraclePrediction]) -> Vec<String> {
    predictions.iter().filter(|p| p.label != NO_RELATION).map(|p| p.id.clone()).collect()
}

/// Random state for one (instance, iteration, role) draw. Independent of
/// processing order.
pub fn derived_rng(seed: u64, instance_id: &str, iteration: u32, role: Role) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"entre/v1");
    h.update(seed.to_le_bytes());
    h.update((instance_id.len() as u64).to_le_bytes());
    h.update(instance_id.as_bytes());
    h.update(iteration.to_le_bytes());
    h.update([role as u8]);
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

fn mention_name(inst: &ReInstance, role: Role) -> EntityName {
    EntityName::from_tokens(inst.mention(role)).expect("mentions are non-empty")
}

type Resampled = Result<(ReInstance, Vec<ReplacementRecord>), LexiconError>;

fn resample_one(
    inst: &ReInstance,
    lexicon: &EntityLexicon,
    config: &LoopConfig,
    iteration: u32,
    mut used: Option<&mut HashSet<EntityName>>,
) -> Result<Resampled, EntreError> {
    let mut current = inst.clone();
    let mut records = Vec::new();
    for role in config.eligible_roles.iter().copied() {
        let ty = current.entity_type(role).clone();
        if !ty.is_replaceable() {
            continue;
        }
        let old = mention_name(&current, role);
        let mut rng = derived_rng(config.seed, inst.id(), iteration, role);
        let drawn = match used.as_deref_mut() {
            Some(used) => lexicon.sample_name_avoiding(&ty, used, &mut rng),
            None => lexicon.sample_name(&ty, Some(&old), &mut rng),
        };
        let new = match drawn {
            Ok(n) => n.clone(),
            Err(e) => return Ok(Err(e)),
        };
        if let Some(used) = used.as_deref_mut() {
            used.insert(new.clone());
        }
        current = replace_entity(&current, role, &new)?;
        records.push(ReplacementRecord {
            instance_id: inst.id().to_string(),
            role,
            old_name: old,
            new_name: new,
            iteration,
        });
    }
    Ok(Ok((current, records)))
}

struct LoopState<'a> {
    corpus: Vec<ReInstance>,
    frozen: BTreeSet<usize>,
    used: Option<HashSet<EntityName>>,
    lexicon: &'a EntityLexicon,
    config: &'a LoopConfig,
}

/// Records, indices actually rewritten, ids frozen this round.
type Resampling = (Vec<ReplacementRecord>, Vec<usize>, Vec<String>);

impl LoopState<'_> {
    /// Rewrites `targets`; returns the records, the indices actually
    /// rewritten and the ids frozen this round.
    fn resample(
        &mut self,
        targets: &[usize],
        iteration: u32,
    ) -> Result<Resampling, EntreError> {
        let results: Vec<Resampled> = match self.used.as_mut() {
            Some(used) => targets
                .iter()
                .map(|&i| resample_one(&self.corpus[i], self.lexicon, self.config, iteration, Some(used)))
                .collect::<Result<_, _>>()?,
            None => {
                let corpus = &self.corpus;
                let (lexicon, config) = (self.lexicon, self.config);
                targets
                    .par_iter()
                    .map(|&i| resample_one(&corpus[i], lexicon, config, iteration, None))
                    .collect::<Result<_, _>>()?
            }
        };

        let mut records = Vec::new();
        let mut changed = Vec::new();
        let mut frozen = Vec::new();
        for (&i, result) in targets.iter().zip(results) {
            match result {
                Ok((inst, recs)) => {
                    if !recs.is_empty() {
                        changed.push(i);
                    }
                    self.corpus[i] = inst;
                    records.extend(recs);
                }
                Err(e) => {
                    log::warn!("freezing instance {}: {e}", self.corpus[i].id());
                    self.frozen.insert(i);
                    frozen.push(self.corpus[i].id().to_string());
                }
            }
        }
        Ok((records, changed, frozen))
    }
}

/// Runs the replacement loop. The result is a deterministic function of the
/// inputs, the seed and the oracle's answers.
pub fn run_entre(
    instances: &[ReInstance],
    lexicon: &EntityLexicon,
    oracle: &dyn RelationOracle,
    config: &LoopConfig,
) -> Result<EntreOutput, EntreError> {
    config.validate()?;
    let mut ids = HashSet::new();
    for inst in instances {
        if !ids.insert(inst.id()) {
            return Err(EntreError::DuplicateId(inst.id().to_string()));
        }
        if inst.replaceable_roles().next().is_none() {
            return Err(EntreError::Ineligible(inst.id().to_string()));
        }
    }

    let used = config.unique_names.then(|| {
        instances
            .iter()
            .flat_map(|i| Role::BOTH.map(|r| mention_name(i, r)))
            .collect::<HashSet<_>>()
    });
    let mut state = LoopState { corpus: instances.to_vec(), frozen: BTreeSet::new(), used, lexicon, config };
    let mut iterations = Vec::new();
    let mut round = 0u32;

    let mut active: Vec<usize> = (0..instances.len()).collect();
    if config.initial_pass {
        round += 1;
        let (replacements, changed, frozen) = state.resample(&active, round)?;
        iterations.push(IterationTrace {
            iteration: round,
            kind: PassKind::Initial,
            oracle_calls: 0,
            oracle_batches: 0,
            selected: active.len(),
            replacements,
            frozen,
        });
        let changed: HashSet<usize> = changed.into_iter().collect();
        active.retain(|i| changed.contains(i) || !state.frozen.contains(i));
    }

    let mut halted_early = false;
    for _ in 0..config.max_iterations {
        round += 1;
        active.retain(|i| !state.frozen.contains(i));
        let queried: Vec<ReInstance> = active.iter().map(|&i| state.corpus[i].clone()).collect();
        let requests: Vec<OracleRequest> = queried.iter().map(OracleRequest::from).collect();
        let outcome = predict_all(oracle, &requests, &config.batch)?;

        let chosen = select_targets(&queried, &outcome.responses, config.mode, config.select_background)?;
        let chosen: HashSet<&str> = chosen.iter().map(String::as_str).collect();
        let targets: Vec<usize> = active.iter().copied().filter(|&i| chosen.contains(state.corpus[i].id())).collect();

        log::debug!("iteration {round}: {} queried, {} selected", outcome.requests, targets.len());
        if targets.is_empty() {
            iterations.push(IterationTrace {
                iteration: round,
                kind: PassKind::Adversarial,
                oracle_calls: outcome.requests,
                oracle_batches: outcome.batches,
                selected: 0,
                replacements: Vec::new(),
                frozen: Vec::new(),
            });
            halted_early = true;
            break;
        }

        let (replacements, changed, frozen) = state.resample(&targets, round)?;
        iterations.push(IterationTrace {
            iteration: round,
            kind: PassKind::Adversarial,
            oracle_calls: outcome.requests,
            oracle_batches: outcome.batches,
            selected: targets.len(),
            replacements,
            frozen,
        });
        active = changed;
    }

    let mut last_changed: BTreeMap<String, Option<u32>> =
        instances.iter().map(|i| (i.id().to_string(), None)).collect();
    for it in &iterations {
        for rec in &it.replacements {
            last_changed.insert(rec.instance_id.clone(), Some(it.iteration));
        }
    }
    let trace = LoopTrace {
        mode: config.mode,
        seed: config.seed,
        max_iterations: config.max_iterations,
        oracle_calls: iterations.iter().map(|i| i.oracle_calls).sum(),
        oracle_batches: iterations.iter().map(|i| i.oracle_batches).sum(),
        iterations,
        halted_early,
        last_changed,
    };
    Ok(EntreOutput { corpus: state.corpus, trace })
}

/// `1 - fast_calls / full_calls`, counted in instances sent to the oracle.
pub fn estimate_saved_calls(full: &LoopTrace, fast: &LoopTrace) -> Result<f64, EntreError> {
    if full.oracle_calls == 0 {
        return Err(EntreError::NoCalls);
    }
    Ok(1.0 - fast.oracle_calls as f64 / full.oracle_calls as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EntityType, Span};
    use crate::oracle::stubs::{ConstantOracle, EntityMemorizer};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn inst(id: &str, rel: &str) -> ReInstance {
        ReInstance::new(id, toks("Al works at Acme"), Span::new(0, 1), Span::new(3, 4), EntityType::Person,
            EntityType::Organization, rel).unwrap()
    }

    fn preds(pairs: &[(&str, &str)]) -> Vec<OraclePrediction> {
        pairs.iter().map(|(i, l)| OraclePrediction::new(*i, *l)).collect()
    }

    fn lexicon(n: usize) -> EntityLexicon {
        EntityLexicon::from_names(
            (0..n).map(|i| EntityName::parse(&format!("Person{i}")).unwrap()),
            (0..n).map(|i| EntityName::parse(&format!("Org{i} Ltd")).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn full_selection() {
        let items = [inst("id1", "r1"), inst("id2", "r2")];
        let p = preds(&[("id1", "r1"), ("id2", NO_RELATION)]);
        assert_eq!(select_targets(&items, &p, LoopMode::Full, true).unwrap(), ["id1"]);
    }

    #[test]
    fn full_selection_background_flag() {
        let items = [inst("a", NO_RELATION), inst("b", "r1")];
        let p = preds(&[("a", NO_RELATION), ("b", "r1")]);
        assert_eq!(select_targets(&items, &p, LoopMode::Full, true).unwrap(), ["a", "b"]);
        assert_eq!(select_targets(&items, &p, LoopMode::Full, false).unwrap(), ["b"]);
    }

    #[test]
    fn fast_selection() {
        let items = [inst("id1", "r9"), inst("id2", "r2")];
        let p = preds(&[("id1", "r1"), ("id2", NO_RELATION)]);
        assert_eq!(select_targets(&items, &p, LoopMode::Fast, true).unwrap(), ["id1"]);
        assert_eq!(select_fast(&p), ["id1"]);
    }

    #[test]
    fn missing_prediction() {
        let items = [inst("a", "r1")];
        assert!(matches!(select_targets(&items, &[], LoopMode::Fast, true), Err(EntreError::MissingPrediction(_))));
    }

    #[test]
    fn derived_rng_depends_on_every_component() {
        use rand::RngCore;
        let base = derived_rng(1, "a", 1, Role::Subject).next_u64();
        assert_eq!(base, derived_rng(1, "a", 1, Role::Subject).next_u64());
        for other in [
            derived_rng(2, "a", 1, Role::Subject),
            derived_rng(1, "b", 1, Role::Subject),
            derived_rng(1, "a", 2, Role::Subject),
            derived_rng(1, "a", 1, Role::Object),
        ] {
            let mut other = other;
            assert_ne!(base, other.next_u64());
        }
    }

    #[test]
    fn config_validation() {
        let cfg = LoopConfig { max_iterations: 0, ..LoopConfig::default() };
        assert!(matches!(
            run_entre(&[], &lexicon(2), &ConstantOracle::no_relation(), &cfg),
            Err(EntreError::Config(_))
        ));
    }

    #[test]
    fn single_fast_iteration_counts_batches() {
        let items: Vec<_> = (0..150).map(|i| inst(&format!("i{i}"), "r1")).collect();
        let oracle = ConstantOracle::new("r1");
        let cfg = LoopConfig {
            max_iterations: 1,
            mode: LoopMode::Fast,
            batch: BatchOptions { batch_size: 64, workers: 1 },
            ..LoopConfig::default()
        };
        let out = run_entre(&items, &lexicon(1000), &oracle, &cfg).unwrap();
        assert_eq!(out.trace.oracle_batches, 3); // ceil(150 / 64)
        assert_eq!(out.trace.oracle_calls, 150);
        assert_eq!(out.trace.iterations.len(), 1);
        assert_eq!(out.trace.iterations[0].replacements.len(), 300);
        assert!(!out.trace.halted_early);
    }

    #[test]
    fn memorizer_halts_after_one_round() {
        let items = [inst("a", "r1"), inst("b", "r2")];
        // distinct names so the memorizer knows each pair
        let items: Vec<_> = items
            .iter()
            .enumerate()
            .map(|(k, i)| replace_entity(i, Role::Subject, &EntityName::parse(&format!("Orig{k}")).unwrap()).unwrap())
            .collect();
        let oracle = EntityMemorizer::from_instances(&items);
        let out = run_entre(&items, &lexicon(50), &oracle, &LoopConfig::default()).unwrap();
        assert!(out.trace.halted_early);
        assert_eq!(out.trace.adversarial_iterations(), 2);
        assert_eq!(out.trace.iterations[0].selected, 2);
        assert_eq!(out.trace.iterations[1].selected, 0);
        assert_eq!(out.trace.last_changed["a"], Some(1));
    }

    #[test]
    fn exhausted_pool_freezes_instance() {
        // one-name pools: the second replacement of a role has nothing left
        let lex = EntityLexicon::from_names([EntityName::parse("P").unwrap()], [EntityName::parse("O").unwrap()])
            .unwrap();
        let items = vec![inst("a", "r1")];
        let cfg = LoopConfig { max_iterations: 5, ..LoopConfig::default() };
        let out = run_entre(&items, &lex, &ConstantOracle::new("r1"), &cfg).unwrap();
        assert_eq!(out.trace.iterations[0].replacements.len(), 2);
        assert_eq!(out.trace.iterations[1].frozen, ["a"]);
        assert_eq!(out.corpus[0].tokens(), toks("P works at O"));
        assert!(out.trace.halted_early);
    }

    #[test]
    fn unique_names_never_repeat() {
        let items: Vec<_> = (0..40).map(|i| inst(&format!("i{i}"), "r1")).collect();
        let cfg = LoopConfig { max_iterations: 1, unique_names: true, ..LoopConfig::default() };
        let out = run_entre(&items, &lexicon(60), &ConstantOracle::new("r1"), &cfg).unwrap();
        let drawn: Vec<&EntityName> = out.trace.replacements().map(|r| &r.new_name).collect();
        let distinct: HashSet<_> = drawn.iter().collect();
        assert_eq!(drawn.len(), 80);
        assert_eq!(distinct.len(), 80);
    }

    #[test]
    fn saved_calls_ratio() {
        let mk = |calls| LoopTrace {
            mode: LoopMode::Full,
            seed: 0,
            max_iterations: 1,
            iterations: vec![],
            halted_early: false,
            oracle_calls: calls,
            oracle_batches: 0,
            last_changed: BTreeMap::new(),
        };
        assert!((estimate_saved_calls(&mk(1000), &mk(100)).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(estimate_saved_calls(&mk(10), &mk(10)).unwrap(), 0.0);
        assert_eq!(estimate_saved_calls(&mk(10), &mk(20)).unwrap(), -1.0);
        assert!(matches!(estimate_saved_calls(&mk(0), &mk(1)), Err(EntreError::NoCalls)));
    }
}
