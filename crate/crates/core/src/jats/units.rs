use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Element, JatsDoc, NodePath, XmlNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnitPolicy {
    Translate,
    PreserveVerbatim,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslatableUnit {
    pub path: NodePath,
    pub policy: UnitPolicy,
}

/// Decides which text is sent for translation.
///
/// The nearest ancestor-or-self element whose tag is in either set decides:
/// `preserve` makes its text verbatim, `translate` re-opens translation
/// inside a preserved region (article titles inside reference lists).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreservePolicy {
    pub preserve: BTreeSet<String>,
    pub translate: BTreeSet<String>,
}

const DEFAULT_PRESERVE: &[&str] = &[
    // math
    "mml:math",
    "math",
    "tex-math",
    // code
    "code",
    "monospace",
    "preformat",
    // identifiers and links
    "uri",
    "ext-link",
    "self-uri",
    "email",
    "pub-id",
    "article-id",
    "object-id",
    "issn",
    "isbn",
    "award-id",
    // people and places
    "contrib-group",
    "aff",
    "journal-meta",
    // citation metadata
    "ref",
];

const DEFAULT_TRANSLATE: &[&str] = &["article-title"];

impl Default for PreservePolicy {
    fn default() -> Self {
        PreservePolicy {
            preserve: DEFAULT_PRESERVE.iter().map(|s| s.to_string()).collect(),
            translate: DEFAULT_TRANSLATE.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl PreservePolicy {
    /// Policy that preserves exactly `tags` with no re-opening exceptions.
    pub fn from_tags<I, S>(tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        PreservePolicy {
            preserve: tags.into_iter().map(Into::into).collect(),
            translate: BTreeSet::new(),
        }
    }

    pub fn none() -> Self {
        Self::from_tags(std::iter::empty::<String>())
    }

    /// Policy in effect inside an element named `tag`, given the policy
    /// inherited from its parent.
    pub fn step(&self, inherited: UnitPolicy, tag: &str) -> UnitPolicy {
        if self.preserve.contains(tag) {
            UnitPolicy::PreserveVerbatim
        } else if self.translate.contains(tag) {
            UnitPolicy::Translate
        } else {
            inherited
        }
    }

    /// Policy in effect for children of the element at `path`.
    pub fn policy_at(&self, doc: &JatsDoc, path: &NodePath) -> UnitPolicy {
        doc.ancestor_names(path)
            .into_iter()
            .fold(UnitPolicy::Translate, |p, tag| self.step(p, tag))
    }
}

/// One unit per text/CDATA node, in document order.
pub fn extract_units(doc: &JatsDoc, policy: &PreservePolicy) -> Vec<TranslatableUnit> {
    fn walk(
        e: &Element,
        path: &NodePath,
        inherited: UnitPolicy,
        policy: &PreservePolicy,
        out: &mut Vec<TranslatableUnit>,
    ) {
        let here = policy.step(inherited, &e.name);
        for (i, c) in e.children.iter().enumerate() {
            match c {
                XmlNode::Element(ce) => walk(ce, &path.child(i), here, policy, out),
                n if n.is_text() => out.push(TranslatableUnit {
                    path: path.child(i),
                    policy: here,
                }),
                _ => {}
            }
        }
    }
    let mut out = Vec::new();
    walk(
        &doc.root,
        &NodePath::root(),
        UnitPolicy::Translate,
        policy,
        &mut out,
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jats::parse_str;

    #[test]
    fn inline_formula_is_verbatim_under_default_policy() {
        let doc = parse_str(
            r#"<article xmlns:mml="http://www.w3.org/1998/Math/MathML"><body><p>Let <inline-formula><mml:math><mml:mi>x</mml:mi></mml:math></inline-formula> be large.</p></body></article>"#,
        )
        .unwrap();
        let units = extract_units(&doc, &PreservePolicy::default());
        let policies: Vec<_> = units
            .iter()
            .map(|u| {
                let text = doc.node_at(&u.path).unwrap().as_text().unwrap().to_owned();
                (text, u.policy)
            })
            .collect();
        assert_eq!(
            policies,
            vec![
                ("Let ".to_string(), UnitPolicy::Translate),
                ("x".to_string(), UnitPolicy::PreserveVerbatim),
                (" be large.".to_string(), UnitPolicy::Translate),
            ]
        );
    }

    #[test]
    fn empty_body_has_no_units() {
        let doc = parse_str("<article><body/></article>").unwrap();
        assert!(extract_units(&doc, &PreservePolicy::default()).is_empty());
    }

    #[test]
    fn single_paragraph_with_empty_policy() {
        let doc = parse_str("<article><body><p>x</p></body></article>").unwrap();
        let units = extract_units(&doc, &PreservePolicy::none());
        assert_eq!(
            units,
            vec![TranslatableUnit {
                path: NodePath(vec![0, 0, 0]),
                policy: UnitPolicy::Translate
            }]
        );
    }

    #[test]
    fn reference_titles_reopen_translation() {
        let doc = parse_str(
            "<article><back><ref-list><ref><element-citation><person-group><name><surname>Kim</surname></name></person-group>\
             <article-title>Strain in WSe2</article-title><source>Nano</source></element-citation></ref></ref-list></back></article>",
        )
        .unwrap();
        let units = extract_units(&doc, &PreservePolicy::default());
        let got: Vec<_> = units
            .iter()
            .map(|u| (doc.node_at(&u.path).unwrap().as_text().unwrap(), u.policy))
            .collect();
        assert_eq!(
            got,
            vec![
                ("Kim", UnitPolicy::PreserveVerbatim),
                ("Strain in WSe2", UnitPolicy::Translate),
                ("Nano", UnitPolicy::PreserveVerbatim),
            ]
        );
    }

    #[test]
    fn policy_at_follows_ancestors() {
        let doc = parse_str(
            "<article><front><contrib-group><contrib/></contrib-group></front></article>",
        )
        .unwrap();
        let p = PreservePolicy::default();
        assert_eq!(p.policy_at(&doc, &NodePath(vec![0])), UnitPolicy::Translate);
        assert_eq!(
            p.policy_at(&doc, &NodePath(vec![0, 0])),
            UnitPolicy::PreserveVerbatim
        );
    }
}
