//! Typed pools of replacement entity names.
//!
//! Lexicon files are newline-delimited UTF-8, one name per line. Names are
//! whitespace-tokenized so they splice into pre-tokenized sentences as token
//! lists. Duplicates (exact token-sequence equality, case-sensitive) are
//! dropped keeping the first occurrence.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EntityType;

/// A non-empty token sequence naming an entity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityName(Vec<String>);

impl EntityName {
    /// `None` when `tokens` is empty or contains an empty token.
    pub fn new(tokens: Vec<String>) -> Option<Self> {
        if tokens.is_empty() || tokens.iter().any(String::is_empty) {
            None
        } else {
            Some(EntityName(tokens))
        }
    }

    /// Whitespace-tokenizes `text`.
    pub fn parse(text: &str) -> Option<Self> {
        Self::new(text.split_whitespace().map(String::from).collect())
    }

    pub fn from_tokens(tokens: &[String]) -> Option<Self> {
        Self::new(tokens.to_vec())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for EntityName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("{kind} pool is empty")]
    EmptyPool { kind: &'static str },
    #[error("no {kind} pool: only PERSON and ORGANIZATION names can be sampled")]
    Ineligible { kind: String },
    #[error("{kind} pool exhausted: no candidate left after exclusions")]
    Exhausted { kind: &'static str },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

/// Ordered, duplicate-free list of names with an index for exclusion lookups.
#[derive(Debug, Clone, Default)]
pub struct NamePool {
    names: Vec<EntityName>,
    index: HashMap<EntityName, usize>,
}

impl NamePool {
    /// Builds a pool from names, dropping later duplicates. Returns the pool
    /// and the number of duplicates dropped.
    pub fn from_names(names: impl IntoIterator<Item = EntityName>) -> (Self, usize) {
        let mut pool = NamePool::default();
        let mut dropped = 0;
        for name in names {
            if pool.index.contains_key(&name) {
                dropped += 1;
                continue;
            }
            pool.index.insert(name.clone(), pool.names.len());
            pool.names.push(name);
        }
        (pool, dropped)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[EntityName] {
        &self.names
    }

    pub fn contains(&self, name: &EntityName) -> bool {
        self.index.contains_key(name)
    }

    /// Uniform draw from the pool minus `exclude`.
    ///
    /// With the excluded name at index `x`, a draw `r` from `0..n-1` maps to
    /// `r` when `r < x` and `r + 1` otherwise, which is exactly uniform over
    /// the remaining `n - 1` names.
    fn sample<R: Rng + ?Sized>(&self, exclude: Option<&EntityName>, rng: &mut R) -> Option<&EntityName> {
        let excluded = exclude.and_then(|e| self.index.get(e).copied());
        let n = self.names.len() - usize::from(excluded.is_some());
        if n == 0 {
            return None;
        }
        let r = rng.random_range(0..n);
        let idx = match excluded {
            Some(x) if r >= x => r + 1,
            _ => r,
        };
        Some(&self.names[idx])
    }

    /// Uniform draw from the pool minus every name in `avoid`. Rejection
    /// sampling first, exhaustive scan once the pool is mostly used.
    fn sample_avoiding<R: Rng + ?Sized>(&self, avoid: &HashSet<EntityName>, rng: &mut R) -> Option<&EntityName> {
        if self.names.is_empty() {
            return None;
        }
        for _ in 0..64 {
            let candidate = &self.names[rng.random_range(0..self.names.len())];
            if !avoid.contains(candidate) {
                return Some(candidate);
            }
        }
        let remaining: Vec<&EntityName> = self.names.iter().filter(|n| !avoid.contains(*n)).collect();
        if remaining.is_empty() {
            None
        } else {
            Some(remaining[rng.random_range(0..remaining.len())])
        }
    }
}

/// Per-pool construction counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolCounts {
    pub lines: usize,
    pub names: usize,
    pub duplicates: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconCounts {
    pub person: PoolCounts,
    pub organization: PoolCounts,
}

/// PERSON and ORGANIZATION name pools.
#[derive(Debug, Clone)]
pub struct EntityLexicon {
    person: NamePool,
    organization: NamePool,
}

fn pool_from_text(text: &str, kind: &'static str) -> Result<(NamePool, PoolCounts), LexiconError> {
    let names: Vec<EntityName> = text.lines().filter_map(EntityName::parse).collect();
    let lines = names.len();
    let (pool, duplicates) = NamePool::from_names(names);
    if pool.is_empty() {
        return Err(LexiconError::EmptyPool { kind });
    }
    let counts = PoolCounts { lines, names: pool.len(), duplicates };
    Ok((pool, counts))
}

impl EntityLexicon {
    /// Builds a lexicon from the contents of two name-list files.
    pub fn from_lists(person_text: &str, org_text: &str) -> Result<(Self, LexiconCounts), LexiconError> {
        let (person, person_counts) = pool_from_text(person_text, "PERSON")?;
        let (organization, org_counts) = pool_from_text(org_text, "ORGANIZATION")?;
        Ok((
            EntityLexicon { person, organization },
            LexiconCounts { person: person_counts, organization: org_counts },
        ))
    }

    /// Builds a lexicon from name iterators, e.g. generated pools.
    pub fn from_names(
        person: impl IntoIterator<Item = EntityName>,
        organization: impl IntoIterator<Item = EntityName>,
    ) -> Result<Self, LexiconError> {
        let (person, _) = NamePool::from_names(person);
        let (organization, _) = NamePool::from_names(organization);
        if person.is_empty() {
            return Err(LexiconError::EmptyPool { kind: "PERSON" });
        }
        if organization.is_empty() {
            return Err(LexiconError::EmptyPool { kind: "ORGANIZATION" });
        }
        Ok(EntityLexicon { person, organization })
    }

    pub fn pool(&self, ty: &EntityType) -> Option<&NamePool> {
        match ty {
            EntityType::Person => Some(&self.person),
            EntityType::Organization => Some(&self.organization),
            EntityType::Other(_) => None,
        }
    }

    fn eligible_pool(&self, ty: &EntityType) -> Result<(&NamePool, &'static str), LexiconError> {
        match ty {
            EntityType::Person => Ok((&self.person, "PERSON")),
            EntityType::Organization => Ok((&self.organization, "ORGANIZATION")),
            EntityType::Other(k) => Err(LexiconError::Ineligible { kind: k.clone() }),
        }
    }

    /// Draws a name of type `ty` uniformly, never returning `exclude`.
    pub fn sample_name<R: Rng + ?Sized>(
        &self,
        ty: &EntityType,
        exclude: Option<&EntityName>,
        rng: &mut R,
    ) -> Result<&EntityName, LexiconError> {
        let (pool, kind) = self.eligible_pool(ty)?;
        pool.sample(exclude, rng).ok_or(LexiconError::Exhausted { kind })
    }

    /// Draws a name of type `ty` that is not in `avoid`.
    pub fn sample_name_avoiding<R: Rng + ?Sized>(
        &self,
        ty: &EntityType,
        avoid: &HashSet<EntityName>,
        rng: &mut R,
    ) -> Result<&EntityName, LexiconError> {
        let (pool, kind) = self.eligible_pool(ty)?;
        pool.sample_avoiding(avoid, rng).ok_or(LexiconError::Exhausted { kind })
    }
}

/// Reads two newline-delimited name files.
pub fn build_lexicon(
    person_file: impl AsRef<Path>,
    org_file: impl AsRef<Path>,
) -> Result<(EntityLexicon, LexiconCounts), LexiconError> {
    let read = |p: &Path| {
        fs::read_to_string(p).map_err(|source| LexiconError::Io { path: p.display().to_string(), source })
    };
    let person = read(person_file.as_ref())?;
    let org = read(org_file.as_ref())?;
    EntityLexicon::from_lists(&person, &org)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn name(s: &str) -> EntityName {
        EntityName::parse(s).unwrap()
    }

    #[test]
    fn dedup_preserves_first_occurrence() {
        let (lex, counts) = EntityLexicon::from_lists("A B\nA B\nC", "Org").unwrap();
        let pool = lex.pool(&EntityType::Person).unwrap();
        assert_eq!(pool.names(), &[name("A B"), name("C")]);
        assert_eq!(counts.person, PoolCounts { lines: 3, names: 2, duplicates: 1 });
    }

    #[test]
    fn whitespace_normalized_and_case_sensitive() {
        let (lex, _) = EntityLexicon::from_lists("  A   B \n\nA B\na b\n", "X").unwrap();
        assert_eq!(lex.pool(&EntityType::Person).unwrap().len(), 2);
    }

    #[test]
    fn empty_org_file_is_an_error() {
        assert!(matches!(
            EntityLexicon::from_lists("A", "\n  \n"),
            Err(LexiconError::EmptyPool { kind: "ORGANIZATION" })
        ));
    }

    #[test]
    fn singleton_pool() {
        let (lex, _) = EntityLexicon::from_lists("a", "o").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(lex.sample_name(&EntityType::Person, Some(&name("b")), &mut rng).unwrap(), &name("a"));
        }
        assert!(matches!(
            lex.sample_name(&EntityType::Person, Some(&name("a")), &mut rng),
            Err(LexiconError::Exhausted { .. })
        ));
    }

    #[test]
    fn other_types_have_no_pool() {
        let (lex, _) = EntityLexicon::from_lists("a", "o").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            lex.sample_name(&EntityType::Other("MISC".into()), None, &mut rng),
            Err(LexiconError::Ineligible { .. })
        ));
    }

    #[test]
    fn seeded_sequence_is_reproducible() {
        let (lex, _) = EntityLexicon::from_lists("a\nb\nc\nd\ne", "o").unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| lex.sample_name(&EntityType::Person, None, &mut rng).unwrap().to_string())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn avoiding_set() {
        let (lex, _) = EntityLexicon::from_lists("a\nb\nc", "o").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let avoid: HashSet<_> = [name("a"), name("c")].into();
        for _ in 0..20 {
            assert_eq!(lex.sample_name_avoiding(&EntityType::Person, &avoid, &mut rng).unwrap(), &name("b"));
        }
        let all: HashSet<_> = [name("a"), name("b"), name("c")].into();
        assert!(lex.sample_name_avoiding(&EntityType::Person, &all, &mut rng).is_err());
    }
}
