use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Element, XmlNode};

/// Structure-only projection of an element: tag name, attribute names and
/// child order. Text is reduced to one [`SkeletonChild::Text`] marker per
/// maximal run; whitespace-only text, comments and processing instructions
/// are dropped.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TagSkeleton {
    pub name: String,
    pub attributes: BTreeSet<String>,
    pub children: Vec<SkeletonChild>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SkeletonChild {
    Text,
    Element(TagSkeleton),
}

pub fn skeleton(element: &Element) -> TagSkeleton {
    TagSkeleton {
        name: element.name.clone(),
        attributes: element.attributes.iter().map(|a| a.name.clone()).collect(),
        children: skeleton_of_nodes(&element.children),
    }
}

pub fn skeleton_of_nodes(nodes: &[XmlNode]) -> Vec<SkeletonChild> {
    let mut out = Vec::new();
    for n in nodes {
        match n {
            XmlNode::Element(e) => out.push(SkeletonChild::Element(skeleton(e))),
            XmlNode::Text(_) | XmlNode::CData(_)
                if !n.is_whitespace_text() && out.last() != Some(&SkeletonChild::Text) =>
            {
                out.push(SkeletonChild::Text);
            }
            _ => {}
        }
    }
    out
}

impl fmt::Display for TagSkeleton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.name)?;
        if !self.attributes.is_empty() {
            let names: Vec<_> = self.attributes.iter().map(String::as_str).collect();
            write!(f, " @{}", names.join(","))?;
        }
        write!(f, ", [")?;
        for (i, c) in self.children.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match c {
                SkeletonChild::Text => f.write_str("TEXT")?,
                SkeletonChild::Element(e) => write!(f, "{e}")?,
            }
        }
        f.write_str("])")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jats::{parse_fragment, parse_str};

    fn sk(xml: &str) -> TagSkeleton {
        match &parse_fragment(xml).unwrap()[0] {
            XmlNode::Element(e) => skeleton(e),
            _ => unreachable!(),
        }
    }

    #[test]
    fn text_only_paragraph() {
        assert_eq!(sk("<p>hello</p>").to_string(), "(p, [TEXT])");
    }

    #[test]
    fn mixed_content() {
        assert_eq!(
            sk("<p>a<xref/>b</p>").to_string(),
            "(p, [TEXT, (xref, []), TEXT])"
        );
    }

    #[test]
    fn adjacent_text_runs_collapse() {
        let e = Element::new("p")
            .with_text("a")
            .with_child(XmlNode::Comment("c".into()))
            .with_child(XmlNode::CData("b".into()));
        assert_eq!(skeleton(&e).children, vec![SkeletonChild::Text]);
    }

    #[test]
    fn attribute_values_are_ignored_names_are_not() {
        assert_eq!(sk(r#"<xref rid="a"/>"#), sk(r#"<xref rid="b"/>"#));
        assert_ne!(sk(r#"<xref rid="a"/>"#), sk(r#"<xref id="a"/>"#));
    }

    #[test]
    fn fig1_style_section() {
        let doc = parse_str(
            r#"<article><body><sec id="Sec5"><title>Results</title><p>See <xref rid="Fig2">Fig. 2</xref>.</p></sec></body></article>"#,
        )
        .unwrap();
        let sec = doc.body().unwrap().first_child("sec").unwrap();
        let mut tags = Vec::new();
        fn walk(s: &TagSkeleton, out: &mut Vec<String>) {
            out.push(s.name.clone());
            for c in &s.children {
                if let SkeletonChild::Element(e) = c {
                    walk(e, out);
                }
            }
        }
        walk(&skeleton(sec), &mut tags);
        assert_eq!(tags, ["sec", "title", "p", "xref"]);
    }
}
