//! Span-exact entity replacement and the masking transforms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EntityType, InstanceFault, ReInstance, Role, Span};
use crate::lexicon::EntityName;

/// Default token used for counterfactual context masking.
pub const MASK_TOKEN: &str = "[MASK]";
/// Separator between the two names in [`ContextMask::EntitiesOnly`] inputs.
pub const SEPARATOR_TOKEN: &str = "[SEP]";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplaceError {
    #[error("instance {id}: {role} has type {ty}, only PERSON and ORGANIZATION are replaceable")]
    Ineligible { id: String, role: Role, ty: String },
    #[error("instance {id}: {fault}")]
    Invalid { id: String, fault: InstanceFault },
}

/// Provenance of one name swap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacementRecord {
    pub instance_id: String,
    pub role: Role,
    pub old_name: EntityName,
    pub new_name: EntityName,
    pub iteration: u32,
}

/// Entity-mask baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MaskMode {
    /// `[SUBJ]` / `[OBJ]`
    NoNameNoType,
    /// `[SUBJ-PERSON]` / `[OBJ-ORGANIZATION]`
    NoNameWithType,
    /// Typed marker token followed by the original name.
    WithNameWithType,
}

/// Counterfactual context intervention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMask {
    /// Every non-entity token becomes the mask token; positions are kept.
    #[default]
    PreservePositions,
    /// Context is dropped: `subject ++ [SEP] ++ object`.
    EntitiesOnly,
}

fn role_tag(role: Role) -> &'static str {
    match role {
        Role::Subject => "SUBJ",
        Role::Object => "OBJ",
    }
}

/// Marker token used by the entity-mask modes, e.g. `[SUBJ-PERSON]`.
pub fn mask_marker(role: Role, ty: Option<&EntityType>) -> String {
    match ty {
        Some(ty) => format!("[{}-{}]", role_tag(role), ty.as_str()),
        None => format!("[{}]", role_tag(role)),
    }
}

/// Replaces the tokens of `role`'s span with `replacement`. The role's new
/// span is `inner` relative to the start of the replacement; the other span
/// moves by the length difference when it lies after the rewritten span.
fn rewrite_span(inst: &ReInstance, role: Role, replacement: Vec<String>, inner: Span) -> ReInstance {
    let old = inst.span(role);
    let other = inst.span(role.other());
    let tokens = inst.tokens();

    let delta = replacement.len() as isize - old.len() as isize;
    let mut out = Vec::with_capacity(tokens.len() - old.len() + replacement.len());
    out.extend_from_slice(&tokens[..old.start]);
    out.extend(replacement);
    out.extend_from_slice(&tokens[old.end..]);

    let new_role = inner.shifted(old.start as isize);
    let new_other = if other.start >= old.end { other.shifted(delta) } else { other };
    let (subj, obj) = match role {
        Role::Subject => (new_role, new_other),
        Role::Object => (new_other, new_role),
    };
    inst.rebuilt(out, subj, obj)
}

/// Swaps the entity mention of `role` for `new_name`.
///
/// Only the annotated span is rewritten; other occurrences of the same
/// string elsewhere in the sentence are left as they are.
pub fn replace_entity(inst: &ReInstance, role: Role, new_name: &EntityName) -> Result<ReInstance, ReplaceError> {
    inst.check().map_err(|fault| ReplaceError::Invalid { id: inst.id().to_string(), fault })?;
    let ty = inst.entity_type(role);
    if !ty.is_replaceable() {
        return Err(ReplaceError::Ineligible {
            id: inst.id().to_string(),
            role,
            ty: ty.as_str().to_string(),
        });
    }
    let len = new_name.len();
    Ok(rewrite_span(inst, role, new_name.tokens().to_vec(), Span::new(0, len)))
}

/// Applies an entity-mask baseline to both roles.
pub fn apply_entity_mask(inst: &ReInstance, mode: MaskMode) -> ReInstance {
    let mut out = inst.clone();
    for role in Role::BOTH {
        let ty = out.entity_type(role).clone();
        out = match mode {
            MaskMode::NoNameNoType => rewrite_span(&out, role, vec![mask_marker(role, None)], Span::new(0, 1)),
            MaskMode::NoNameWithType => {
                rewrite_span(&out, role, vec![mask_marker(role, Some(&ty))], Span::new(0, 1))
            }
            MaskMode::WithNameWithType => {
                let mention = out.mention(role);
                let mut tokens = Vec::with_capacity(mention.len() + 1);
                tokens.push(mask_marker(role, Some(&ty)));
                tokens.extend_from_slice(mention);
                let len = mention.len();
                rewrite_span(&out, role, tokens, Span::new(1, 1 + len))
            }
        };
    }
    out
}

/// Builds the counterfactual input: context intervened on, entity mentions kept.
pub fn mask_context(inst: &ReInstance, mask_token: &str, mode: ContextMask) -> ReInstance {
    match mode {
        ContextMask::PreservePositions => {
            let tokens = inst
                .tokens()
                .iter()
                .enumerate()
                .map(|(i, t)| if inst.in_entity(i) { t.clone() } else { mask_token.to_string() })
                .collect();
            inst.rebuilt(tokens, inst.span(Role::Subject), inst.span(Role::Object))
        }
        ContextMask::EntitiesOnly => {
            let subj = inst.mention(Role::Subject);
            let obj = inst.mention(Role::Object);
            let mut tokens = Vec::with_capacity(subj.len() + obj.len() + 1);
            tokens.extend_from_slice(subj);
            tokens.push(SEPARATOR_TOKEN.to_string());
            tokens.extend_from_slice(obj);
            let subj_span = Span::new(0, subj.len());
            let obj_span = Span::new(subj.len() + 1, tokens.len());
            inst.rebuilt(tokens, subj_span, obj_span)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityType::{Organization, Other, Person};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn john_acme() -> ReInstance {
        ReInstance::new("j", toks("John works at ACME"), Span::new(0, 1), Span::new(3, 4), Person, Organization,
            "per:employee_of").unwrap()
    }

    #[test]
    fn subject_replacement_shifts_object() {
        let out = replace_entity(&john_acme(), Role::Subject, &EntityName::parse("Mary Ann").unwrap()).unwrap();
        assert_eq!(out.tokens(), toks("Mary Ann works at ACME"));
        assert_eq!(out.span(Role::Subject), Span::new(0, 2));
        assert_eq!(out.span(Role::Object), Span::new(4, 5));
        assert_eq!(out.relation(), "per:employee_of");
        assert_eq!(out.id(), "j");
    }

    #[test]
    fn same_length_object_replacement() {
        let inst = john_acme();
        let out = replace_entity(&inst, Role::Object, &EntityName::parse("Initech").unwrap()).unwrap();
        assert_eq!(out.tokens(), toks("John works at Initech"));
        assert_eq!(out.span(Role::Subject), inst.span(Role::Subject));
        assert_eq!(out.span(Role::Object), inst.span(Role::Object));
    }

    #[test]
    fn object_before_subject_shifts_subject() {
        let inst = ReInstance::new("k", toks("Big Corp hired Al"), Span::new(3, 4), Span::new(0, 2), Person,
            Organization, "r").unwrap();
        let out = replace_entity(&inst, Role::Object, &EntityName::parse("X").unwrap()).unwrap();
        assert_eq!(out.tokens(), toks("X hired Al"));
        assert_eq!(out.span(Role::Subject), Span::new(2, 3));
        assert_eq!(out.span(Role::Object), Span::new(0, 1));
    }

    #[test]
    fn ineligible_role_refused() {
        let inst = ReInstance::new("d", toks("Al died 2003"), Span::new(0, 1), Span::new(2, 3), Person,
            Other("DATE".into()), "r").unwrap();
        let err = replace_entity(&inst, Role::Object, &EntityName::parse("X").unwrap()).unwrap_err();
        assert!(matches!(err, ReplaceError::Ineligible { role: Role::Object, .. }));
    }

    #[test]
    fn entity_masks() {
        let inst = john_acme();
        let nn = apply_entity_mask(&inst, MaskMode::NoNameNoType);
        assert_eq!(nn.tokens(), toks("[SUBJ] works at [OBJ]"));
        let nt = apply_entity_mask(&inst, MaskMode::NoNameWithType);
        assert_eq!(nt.tokens(), toks("[SUBJ-PERSON] works at [OBJ-ORGANIZATION]"));
        assert_eq!(nt.span(Role::Object), Span::new(3, 4));
        let wt = apply_entity_mask(&inst, MaskMode::WithNameWithType);
        assert_eq!(wt.tokens(), toks("[SUBJ-PERSON] John works at [OBJ-ORGANIZATION] ACME"));
        assert_eq!(wt.mention(Role::Subject), ["John"]);
        assert_eq!(wt.mention(Role::Object), ["ACME"]);
        for out in [nn, nt, wt] {
            assert_eq!(out.relation(), inst.relation());
        }
    }

    #[test]
    fn multi_token_mask_collapses() {
        let inst = ReInstance::new("m", toks("Mary Ann Lee joined Acme Widget Co ."), Span::new(0, 3), Span::new(4, 7),
            Person, Organization, "r").unwrap();
        let out = apply_entity_mask(&inst, MaskMode::NoNameWithType);
        assert_eq!(out.tokens(), toks("[SUBJ-PERSON] joined [OBJ-ORGANIZATION] ."));
        assert_eq!(out.span(Role::Object), Span::new(2, 3));
    }

    #[test]
    fn context_mask_preserve_positions() {
        let out = mask_context(&john_acme(), MASK_TOKEN, ContextMask::PreservePositions);
        assert_eq!(out.tokens(), toks("John [MASK] [MASK] ACME"));
        assert_eq!(out.span(Role::Subject), Span::new(0, 1));
    }

    #[test]
    fn context_mask_nothing_to_mask() {
        let inst = ReInstance::new("f", toks("Al Acme"), Span::new(0, 1), Span::new(1, 2), Person, Organization, "r")
            .unwrap();
        assert_eq!(mask_context(&inst, MASK_TOKEN, ContextMask::PreservePositions), inst);
    }

    #[test]
    fn context_mask_entities_only() {
        // the sentence behind the first motivating example
        let inst = ReInstance::new(
            "fig1",
            toks("Bill Gates founded Microsoft in 1975 ."),
            Span::new(3, 4),
            Span::new(0, 2),
            Organization,
            Person,
            "org:founded_by",
        )
        .unwrap();
        let out = mask_context(&inst, MASK_TOKEN, ContextMask::EntitiesOnly);
        assert_eq!(out.tokens(), toks("Microsoft [SEP] Bill Gates"));
        assert_eq!(out.mention(Role::Subject), ["Microsoft"]);
        assert_eq!(out.mention(Role::Object), ["Bill", "Gates"]);
    }
}
