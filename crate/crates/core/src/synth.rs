//! Deterministic synthetic corpora and name pools for tests, demos and the
//! acceptance suite.
//!
//! Every non-background relation is expressed by exactly one trigger word
//! that never occurs in an entity name, so [`trigger_map`] fed to the
//! context-reading stub recovers the gold label of every instance.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{EntityType, ReInstance, Span, NO_RELATION};
use crate::lexicon::{EntityLexicon, EntityName};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("cannot draw {requested} distinct entity pairs; at most {limit} are supported")]
    TooManyPairs { requested: usize, limit: usize },
    #[error("background rate {0} is outside [0, 1]")]
    Rate(f64),
}

const FIRST: &[&str] = &[
    "Alice", "Bruno", "Carmen", "Dmitri", "Elena", "Farid", "Greta", "Hiro", "Ines", "Jonas", "Keiko", "Luis",
    "Mara", "Nikhil", "Olga", "Pavel", "Quinn", "Rosa", "Sven", "Tariq", "Uma", "Viktor", "Wen", "Yusuf",
];
const LAST: &[&str] = &[
    "Abbott", "Baptiste", "Castro", "Dahl", "Eriksen", "Fontaine", "Gupta", "Hale", "Ivanova", "Jensen", "Kowalski",
    "Lindqvist", "Moreau", "Nakamura", "Okafor", "Petrov", "Quintero", "Rahman", "Silva", "Tanaka",
];
const ORG_STEM: &[&str] = &[
    "Acme", "Borealis", "Cobalt", "Delta", "Evergreen", "Falcon", "Granite", "Harbor", "Indigo", "Juniper",
    "Keystone", "Lumen", "Meridian", "Northwind", "Orion", "Pinnacle",
];
const ORG_SUFFIX: &[&str] = &["Corp", "University", "Foundation", "Bank", "Institute"];
const CITIES: &[&str] = &["Lisbon", "Oslo", "Nairobi", "Quito", "Hanoi", "Tbilisi", "Perth", "Porto"];

#[derive(Debug, Clone, Copy)]
enum Slot {
    Person,
    Organization,
    City,
}

impl Slot {
    fn entity_type(self) -> EntityType {
        match self {
            Slot::Person => EntityType::Person,
            Slot::Organization => EntityType::Organization,
            Slot::City => EntityType::Other("CITY".into()),
        }
    }

    fn draw(self, rng: &mut impl Rng) -> Vec<String> {
        let pick = |xs: &[&str], rng: &mut dyn rand::RngCore| xs[rng.random_range(0..xs.len())].to_string();
        match self {
            Slot::Person => vec![pick(FIRST, rng), pick(LAST, rng)],
            Slot::Organization => vec![pick(ORG_STEM, rng), pick(ORG_SUFFIX, rng)],
            Slot::City => vec![pick(CITIES, rng)],
        }
    }

    fn variety(self) -> usize {
        match self {
            Slot::Person => FIRST.len() * LAST.len(),
            Slot::Organization => ORG_STEM.len() * ORG_SUFFIX.len(),
            Slot::City => CITIES.len(),
        }
    }
}

/// One sentence shape. `S` and `O` mark where the subject and object go.
struct Template {
    relation: &'static str,
    trigger: Option<&'static str>,
    subject: Slot,
    object: Slot,
    words: &'static [&'static str],
}

const TEMPLATES: &[Template] = &[
    Template {
        relation: "per:employee_of",
        trigger: Some("works"),
        subject: Slot::Person,
        object: Slot::Organization,
        words: &["S", "now", "works", "for", "O", "."],
    },
    Template {
        relation: "org:founded_by",
        trigger: Some("founded"),
        subject: Slot::Organization,
        object: Slot::Person,
        words: &["S", "was", "founded", "by", "O", "in", "the", "nineties", "."],
    },
    Template {
        relation: "per:spouse",
        trigger: Some("married"),
        subject: Slot::Person,
        object: Slot::Person,
        words: &["S", "married", "O", "last", "spring", "."],
    },
    Template {
        relation: "per:schools_attended",
        trigger: Some("graduated"),
        subject: Slot::Person,
        object: Slot::Organization,
        words: &["After", "years", "of", "study", ",", "S", "graduated", "from", "O", "."],
    },
    Template {
        relation: "per:city_of_death",
        trigger: Some("died"),
        subject: Slot::Person,
        object: Slot::City,
        words: &["S", "died", "in", "O", "on", "Monday", "."],
    },
    Template {
        relation: "org:top_members/employees",
        trigger: Some("leads"),
        subject: Slot::Organization,
        object: Slot::Person,
        words: &["O", "leads", "S", "since", "the", "merger", "."],
    },
];

const BACKGROUND: &[Template] = &[
    Template {
        relation: NO_RELATION,
        trigger: None,
        subject: Slot::Person,
        object: Slot::Organization,
        words: &["S", "spoke", "about", "O", "at", "the", "conference", "."],
    },
    Template {
        relation: NO_RELATION,
        trigger: None,
        subject: Slot::Person,
        object: Slot::Person,
        words: &["Reporters", "saw", "S", "and", "O", "near", "the", "station", "."],
    },
    Template {
        relation: NO_RELATION,
        trigger: None,
        subject: Slot::Organization,
        object: Slot::Organization,
        words: &["S", "and", "O", "issued", "separate", "statements", "."],
    },
];

/// Trigger word to relation, for the context-reading stub.
pub fn trigger_map() -> BTreeMap<String, String> {
    TEMPLATES
        .iter()
        .filter_map(|t| t.trigger.map(|w| (w.to_string(), t.relation.to_string())))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub n_instances: usize,
    pub seed: u64,
    /// Probability that an instance is `no_relation`.
    pub background_rate: f64,
    /// Never repeat a (subject, object) mention pair.
    pub distinct_pairs: bool,
    pub id_prefix: String,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            n_instances: 100,
            seed: 0,
            background_rate: 0.3,
            distinct_pairs: false,
            id_prefix: "synth".into(),
        }
    }
}

fn build(template: &Template, id: String, subject: Vec<String>, object: Vec<String>) -> ReInstance {
    let mut tokens = Vec::new();
    let (mut subj, mut obj) = (Span::new(0, 0), Span::new(0, 0));
    for w in template.words {
        match *w {
            "S" => {
                subj = Span::new(tokens.len(), tokens.len() + subject.len());
                tokens.extend(subject.iter().cloned());
            }
            "O" => {
                obj = Span::new(tokens.len(), tokens.len() + object.len());
                tokens.extend(object.iter().cloned());
            }
            w => tokens.push(w.to_string()),
        }
    }
    ReInstance::new(
        id,
        tokens,
        subj,
        obj,
        template.subject.entity_type(),
        template.object.entity_type(),
        template.relation,
    )
    .expect("templates produce valid instances")
}

/// Generates `n_instances` instances; identical options give identical output.
pub fn synth_corpus(opts: &SynthOptions) -> Result<Vec<ReInstance>, SynthError> {
    if !(0.0..=1.0).contains(&opts.background_rate) {
        return Err(SynthError::Rate(opts.background_rate));
    }
    if opts.distinct_pairs {
        // keep rejection sampling cheap: stay below half the smallest pair space
        let limit = TEMPLATES
            .iter()
            .chain(BACKGROUND)
            .map(|t| t.subject.variety() * t.object.variety())
            .min()
            .unwrap_or(0)
            / 2;
        if opts.n_instances > limit {
            return Err(SynthError::TooManyPairs { requested: opts.n_instances, limit });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut seen: HashSet<(Vec<String>, Vec<String>)> = HashSet::new();
    let mut out = Vec::with_capacity(opts.n_instances);
    for i in 0..opts.n_instances {
        let template = if rng.random_bool(opts.background_rate) {
            &BACKGROUND[rng.random_range(0..BACKGROUND.len())]
        } else {
            &TEMPLATES[rng.random_range(0..TEMPLATES.len())]
        };
        let (subject, object) = loop {
            let s = template.subject.draw(&mut rng);
            let o = template.object.draw(&mut rng);
            if s == o {
                continue;
            }
            if !opts.distinct_pairs || seen.insert((s.clone(), o.clone())) {
                break (s, o);
            }
        };
        out.push(build(template, format!("{}-{i:06}", opts.id_prefix), subject, object));
    }
    Ok(out)
}

const SYLLABLES: [&str; 16] = ["ka", "lo", "mi", "ru", "ne", "sa", "to", "vi", "ze", "po", "da", "fe", "gu", "hi", "jo", "wa"];

/// Five syllables spelling `n` in base 16; distinct for `n < 16^5`.
fn coined_word(n: usize) -> String {
    let mut word = String::with_capacity(10);
    for k in (0..5).rev() {
        word.push_str(SYLLABLES[(n >> (4 * k)) & 0xf]);
    }
    let mut chars = word.chars();
    let first = chars.next().expect("non-empty").to_ascii_uppercase();
    std::iter::once(first).chain(chars).collect()
}

/// Largest pool [`synth_lexicon`] can produce per type.
pub const MAX_SYNTH_POOL: usize = 1 << 20;

/// Coined PERSON and ORGANIZATION names, all distinct and disjoint from the
/// names and trigger words used by [`synth_corpus`].
pub fn synth_lexicon(n_person: usize, n_organization: usize) -> EntityLexicon {
    assert!(n_person.max(n_organization) <= MAX_SYNTH_POOL, "synthetic pools are limited to {MAX_SYNTH_POOL}");
    let person = (0..n_person).map(|i| {
        // the given name alone is unique; the family name just adds texture
        let family = coined_word(i.wrapping_mul(40_503) % MAX_SYNTH_POOL);
        EntityName::new(vec![coined_word(i), family]).expect("non-empty")
    });
    let organization = (0..n_organization)
        .map(|i| EntityName::new(vec![coined_word(i), ["Holdings", "Labs", "Group"][i % 3].to_string()]).expect("non-empty"));
    EntityLexicon::from_names(person, organization).expect("pools are non-empty")
}
