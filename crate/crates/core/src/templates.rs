//! Per-relation verbalization and question templates, loaded from TOML.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{slot_count, GraphError, RelationType};
use crate::store::sha256_hex;

/// Shipped default template file.
pub const DEFAULT_TEMPLATES: &str = include_str!("../assets/templates.toml");

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("no template for relation `{0}`")]
    MissingTemplate(String),
    #[error("reading templates: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing templates: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Phrase(#[from] GraphError),
    #[error("relation `{relation}`: field `{field}` {message}")]
    InvalidQuestion {
        relation: String,
        field: &'static str,
        message: String,
    },
}

/// How a held-out edge is turned into a multi-hop answer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultihopAnswer {
    /// Group held-out edges by (head, relation); the answer lists the tails.
    #[default]
    Tail,
    /// One question per held-out edge; the answer lists the other heads of
    /// the tail in the training graph (collaborator recommendation).
    CoHeads,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawRelation {
    forward: String,
    inverse: String,
    question_forward: String,
    question_inverse: String,
    question_multihop: String,
    #[serde(default)]
    multihop_answer: MultihopAnswer,
    #[serde(default)]
    head_type: Option<String>,
    #[serde(default)]
    tail_type: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawFile {
    #[serde(default = "one")]
    version: u32,
    #[serde(default)]
    relations: BTreeMap<String, RawRelation>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationTemplate {
    pub relation: RelationType,
    pub question_forward: String,
    pub question_inverse: String,
    pub question_multihop: String,
    pub multihop_answer: MultihopAnswer,
    pub head_type: Option<String>,
    pub tail_type: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TemplateSet {
    relations: BTreeMap<String, RelationTemplate>,
    hash: String,
}

impl TemplateSet {
    pub fn from_toml_str(text: &str) -> Result<Self, TemplateError> {
        let raw: RawFile = toml::from_str(text)?;
        let _ = raw.version;
        let mut relations = BTreeMap::new();
        for (name, r) in raw.relations {
            let relation = RelationType::new(name.clone(), r.forward, r.inverse)?;
            let t = RelationTemplate {
                relation,
                question_forward: r.question_forward,
                question_inverse: r.question_inverse,
                question_multihop: r.question_multihop,
                multihop_answer: r.multihop_answer,
                head_type: r.head_type,
                tail_type: r.tail_type,
            };
            t.validate()?;
            relations.insert(name, t);
        }
        Ok(Self {
            relations,
            hash: sha256_hex(text),
        })
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn builtin() -> Self {
        Self::from_toml_str(DEFAULT_TEMPLATES).expect("shipped templates are valid")
    }

    pub fn get(&self, relation: &str) -> Result<&RelationTemplate, TemplateError> {
        self.relations
            .get(relation)
            .ok_or_else(|| TemplateError::MissingTemplate(relation.to_string()))
    }

    pub fn contains(&self, relation: &str) -> bool {
        self.relations.contains_key(relation)
    }

    pub fn iter(&self) -> impl Iterator<Item = &RelationTemplate> {
        self.relations.values()
    }

    /// SHA-256 of the source text.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// The relation type to register for `name`: the templated one when
    /// present, a generic phrasing otherwise.
    pub fn relation_type(&self, name: &str) -> RelationType {
        self.relations
            .get(name)
            .map(|t| t.relation.clone())
            .unwrap_or_else(|| RelationType::generic(name))
    }
}

impl RelationTemplate {
    fn validate(&self) -> Result<(), TemplateError> {
        let name = &self.relation.name;
        let check = |field: &'static str, text: &str, head: usize, tail: usize| {
            let (h, t) = (slot_count(text, "head"), slot_count(text, "tail"));
            if h != head || t != tail {
                return Err(TemplateError::InvalidQuestion {
                    relation: name.clone(),
                    field,
                    message: format!("needs {head}x {{head}} and {tail}x {{tail}}, found {h} and {t}"),
                });
            }
            Ok(())
        };
        check("question_forward", &self.question_forward, 0, 1)?;
        check("question_inverse", &self.question_inverse, 1, 0)?;
        match self.multihop_answer {
            MultihopAnswer::Tail => check("question_multihop", &self.question_multihop, 1, 0),
            MultihopAnswer::CoHeads => check("question_multihop", &self.question_multihop, 1, 1),
        }
    }
}

/// Substitutes `{name}` slots in a single pass, so slot-like text inside a
/// substituted value is never expanded. Unknown slots are left untouched.
pub fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 32);
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start..];
        let value = after.find('}').and_then(|end| {
            let name = &after[1..end];
            slots.iter().find(|(n, _)| *n == name).map(|(_, v)| (*v, end + 1))
        });
        match value {
            Some((v, consumed)) => {
                out.push_str(v);
                rest = &after[consumed..];
            }
            None => {
                out.push('{');
                rest = &after[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Lookup slots of the form `{head.<relation>}` / `{tail.<relation>}`.
pub fn lookup_slots(template: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        let Some(len) = rest[start..].find('}') else {
            break;
        };
        let inner = &rest[start + 1..start + len];
        if let Some((endpoint, relation)) = inner.split_once('.') {
            if endpoint == "head" || endpoint == "tail" {
                out.push((endpoint.to_string(), relation.to_string()));
            }
        }
        rest = &rest[start + len + 1..];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_templates_parse() {
        let t = TemplateSet::builtin();
        for name in [
            "may treat",
            "may cause",
            "cause of",
            "risk factor of",
            "authored",
            "published_in",
            "cites",
        ] {
            assert!(t.contains(name), "{name}");
        }
        assert_eq!(t.get("authored").unwrap().multihop_answer, MultihopAnswer::CoHeads);
        assert_eq!(t.hash().len(), 64);
    }

    #[test]
    fn missing_template() {
        let t = TemplateSet::builtin();
        assert!(matches!(t.get("nope"), Err(TemplateError::MissingTemplate(_))));
        assert_eq!(t.relation_type("nope").forward_phrase, "{head} nope {tail}");
    }

    #[test]
    fn question_slot_validation() {
        let bad = r#"
[relations.r]
forward = "{head} r {tail}"
inverse = "{tail} r {head}"
question_forward = "What r {head}?"
question_inverse = "What is {head} r?"
question_multihop = "{head}?"
"#;
        assert!(matches!(
            TemplateSet::from_toml_str(bad),
            Err(TemplateError::InvalidQuestion {
                field: "question_forward",
                ..
            })
        ));
    }

    #[test]
    fn fill_and_lookups() {
        assert_eq!(fill("{head} x {tail}", &[("head", "a"), ("tail", "b")]), "a x b");
        assert_eq!(
            fill("{head} x {tail}", &[("head", "{tail}"), ("tail", "b")]),
            "{tail} x b"
        );
        assert_eq!(fill("{x} {head", &[("head", "a")]), "{x} {head");
        assert_eq!(
            lookup_slots("{head} in {tail.published_in} and {x.y} {tail}"),
            vec![("tail".to_string(), "published_in".to_string())]
        );
    }
}
