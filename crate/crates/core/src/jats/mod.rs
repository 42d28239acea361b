//! JATS document model.
//!
//! A [`JatsDoc`] is an ordered XML tree rooted at `<article>`. Text, comments,
//! processing instructions and CDATA sections are kept as their own nodes so a
//! parse/serialize round trip reproduces the same tree. Namespace prefixes are
//! part of tag names (`mml:math`); no namespace resolution is done.

mod parse;
mod serialize;
mod skeleton;
mod units;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse, parse_fragment, parse_str};
pub use serialize::{escape_attr, escape_text, serialize, serialize_node, serialize_nodes};
pub use skeleton::{skeleton, skeleton_of_nodes, SkeletonChild, TagSkeleton};
pub use units::{extract_units, PreservePolicy, TranslatableUnit, UnitPolicy};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JatsError {
    #[error("malformed XML at byte {position}: {reason}")]
    MalformedXml { position: u64, reason: String },
    #[error("root element is <{found}>, expected <article>")]
    NotAJatsArticle { found: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Element {
    pub name: String,
    /// Attributes in source order.
    pub attributes: Vec<Attribute>,
    pub children: Vec<XmlNode>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XmlNode {
    Element(Element),
    Text(String),
    CData(String),
    Comment(String),
    /// Raw content between `<?` and `?>`.
    ProcessingInstruction(String),
}

impl Element {
    pub fn new(name: impl Into<String>) -> Self {
        Element {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn with_attr(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.push(Attribute {
            name: name.into(),
            value: value.into(),
        });
        self
    }

    pub fn with_child(mut self, child: impl Into<XmlNode>) -> Self {
        self.children.push(child.into());
        self
    }

    pub fn with_text(self, text: impl Into<String>) -> Self {
        self.with_child(XmlNode::Text(text.into()))
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|a| a.name == name)
            .map(|a| a.value.as_str())
    }

    pub fn child_elements(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(XmlNode::as_element)
    }

    pub fn first_child(&self, name: &str) -> Option<&Element> {
        self.child_elements().find(|e| e.name == name)
    }

    /// Concatenated text of all descendant text and CDATA nodes.
    pub fn text_content(&self) -> String {
        let mut out = String::new();
        collect_text(&self.children, &mut out);
        out
    }

    /// Number of elements named `name` in this subtree, including `self`.
    pub fn count_named(&self, name: &str) -> usize {
        let own = usize::from(self.name == name);
        own + self
            .child_elements()
            .map(|c| c.count_named(name))
            .sum::<usize>()
    }
}

impl From<Element> for XmlNode {
    fn from(e: Element) -> Self {
        XmlNode::Element(e)
    }
}

impl XmlNode {
    pub fn as_element(&self) -> Option<&Element> {
        match self {
            XmlNode::Element(e) => Some(e),
            _ => None,
        }
    }

    pub fn as_element_mut(&mut self) -> Option<&mut Element> {
        match self {
            XmlNode::Element(e) => Some(e),
            _ => None,
        }
    }

    /// Text payload of a text or CDATA node.
    pub fn as_text(&self) -> Option<&str> {
        match self {
            XmlNode::Text(t) | XmlNode::CData(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_text(&self) -> bool {
        self.as_text().is_some()
    }

    pub fn is_whitespace_text(&self) -> bool {
        self.as_text()
            .is_some_and(|t| t.chars().all(char::is_whitespace))
    }

    pub fn element_count(&self) -> usize {
        match self {
            XmlNode::Element(e) => 1 + e.children.iter().map(XmlNode::element_count).sum::<usize>(),
            _ => 0,
        }
    }
}

pub(crate) fn collect_text(nodes: &[XmlNode], out: &mut String) {
    for n in nodes {
        match n {
            XmlNode::Text(t) | XmlNode::CData(t) => out.push_str(t),
            XmlNode::Element(e) => collect_text(&e.children, out),
            _ => {}
        }
    }
}

/// Index path from the root element: `[2, 0]` is the first child of the
/// root's third child.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodePath(pub Vec<usize>);

impl NodePath {
    pub fn root() -> Self {
        NodePath(Vec::new())
    }

    pub fn child(&self, index: usize) -> Self {
        let mut v = self.0.clone();
        v.push(index);
        NodePath(v)
    }

    pub fn parent(&self) -> Option<NodePath> {
        let (_, init) = self.0.split_last()?;
        Some(NodePath(init.to_vec()))
    }

    pub fn last_index(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn starts_with(&self, prefix: &NodePath) -> bool {
        self.0.starts_with(&prefix.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("/");
        }
        for i in &self.0 {
            write!(f, "/{i}")?;
        }
        Ok(())
    }
}

/// A parsed JATS article.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JatsDoc {
    pub root: Element,
    pub source_id: String,
    pub declared_language: Option<String>,
    /// Bytes before the root element (XML declaration, DOCTYPE, comments), verbatim.
    pub prolog: String,
    /// Bytes after the root element, verbatim.
    pub epilog: String,
}

impl JatsDoc {
    /// Wraps an `<article>` element. Fails if the root is anything else.
    pub fn from_root(root: Element, source_id: impl Into<String>) -> Result<Self, JatsError> {
        if root.name != "article" {
            return Err(JatsError::NotAJatsArticle { found: root.name });
        }
        let declared_language = root.attr("xml:lang").map(str::to_owned);
        Ok(JatsDoc {
            root,
            source_id: source_id.into(),
            declared_language,
            prolog: String::new(),
            epilog: String::new(),
        })
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }

    pub fn front(&self) -> Option<&Element> {
        self.root.first_child("front")
    }

    pub fn body(&self) -> Option<&Element> {
        self.root.first_child("body")
    }

    pub fn back(&self) -> Option<&Element> {
        self.root.first_child("back")
    }

    /// Node at `path`; the empty path is the root element.
    pub fn node_at(&self, path: &NodePath) -> Option<&XmlNode> {
        let (last, init) = path.0.split_last()?;
        let mut cur = &self.root;
        for &i in init {
            cur = cur.children.get(i)?.as_element()?;
        }
        cur.children.get(*last)
    }

    pub fn element_at(&self, path: &NodePath) -> Option<&Element> {
        if path.is_empty() {
            return Some(&self.root);
        }
        self.node_at(path)?.as_element()
    }

    pub fn element_at_mut(&mut self, path: &NodePath) -> Option<&mut Element> {
        let mut cur = &mut self.root;
        for &i in &path.0 {
            cur = cur.children.get_mut(i)?.as_element_mut()?;
        }
        Some(cur)
    }

    /// Tag names from the root down to (and including) the element at `path`.
    pub fn ancestor_names(&self, path: &NodePath) -> Vec<&str> {
        let mut names = vec![self.root.name.as_str()];
        let mut cur = &self.root;
        for &i in &path.0 {
            match cur.children.get(i).and_then(XmlNode::as_element) {
                Some(e) => {
                    names.push(e.name.as_str());
                    cur = e;
                }
                None => break,
            }
        }
        names
    }

    pub fn text_content(&self) -> String {
        self.root.text_content()
    }

    /// Paths of every text/CDATA node in document order.
    pub fn text_paths(&self) -> Vec<NodePath> {
        fn walk(e: &Element, path: &NodePath, out: &mut Vec<NodePath>) {
            for (i, c) in e.children.iter().enumerate() {
                match c {
                    XmlNode::Element(ce) => walk(ce, &path.child(i), out),
                    n if n.is_text() => out.push(path.child(i)),
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &NodePath::root(), &mut out);
        out
    }

    /// Plain-text rendering: one paragraph per title/paragraph-like element,
    /// separated by blank lines.
    pub fn plain_text(&self) -> String {
        const BLOCKS: &[&str] = &["article-title", "title", "p", "label", "kwd", "th", "td"];
        fn walk(e: &Element, out: &mut Vec<String>) {
            if BLOCKS.contains(&e.name.as_str()) {
                let t = e.text_content();
                let t = t.split_whitespace().collect::<Vec<_>>().join(" ");
                if !t.is_empty() {
                    out.push(t);
                }
                return;
            }
            for c in e.child_elements() {
                if c.name == "ref-list" || c.name == "journal-meta" || c.name == "contrib-group" {
                    continue;
                }
                walk(c, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out.join("\n\n")
    }
}

/// Text-and-structure equality that ignores prolog/epilog bytes and source ids.
pub fn tree_equal(a: &JatsDoc, b: &JatsDoc) -> bool {
    a.root == b.root
}
