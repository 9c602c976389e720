//! Entity-replacement robustness tooling for relation-extraction corpora.
//!
//! * [`corpus`]: TACRED-format loading, validation, statistics.
//! * [`lexicon`] and [`replace`]: type-constrained name sampling and
//!   span-preserving rewrites, entity masks and context masks.
//! * [`entre`]: the oracle-driven replacement loop.
//! * [`audit`]: annotation disagreement, shortcut ratios, name diversity.
//! * [`eval`]: micro-F1 with `no_relation` as background, robustness deltas.
//! * [`oracle`]: the model wire protocol, clients, a stdio server and stubs.
//!
//! Metric types are generic over [`Scalar`]; the aliases below fix the
//! common choices.

pub mod audit;
pub mod corpus;
pub mod entre;
pub mod eval;
pub mod lexicon;
pub mod oracle;
pub mod replace;
pub mod scalar;
pub mod synth;

pub use num_rational::Rational64;

pub use corpus::{EntityType, ReInstance, Role, Span, NO_RELATION};
pub use entre::{run_entre, LoopConfig, LoopMode, LoopTrace};
pub use lexicon::{EntityLexicon, EntityName};
pub use replace::{replace_entity, ReplacementRecord};
pub use scalar::Scalar;

pub type EvalReport = eval::EvalReport<f64>;
pub type ExactEvalReport = eval::EvalReport<Rational64>;
pub type Prf = eval::Prf<f64>;
pub type DeltaReport = eval::DeltaReport<f64>;
pub type RobustnessReport = eval::RobustnessReport<f64>;
pub type ShortcutReport = audit::ShortcutReport<f64>;
pub type ExactShortcutReport = audit::ShortcutReport<Rational64>;
pub type ComparisonReport = audit::ComparisonReport<f64>;
