//! Splits an article into bounded translation chunks and puts it back together.
//!
//! Figures and tables are lifted out first and replaced by marker comments;
//! each becomes its own chunk. The remaining tree is grouped into runs of
//! sibling nodes holding at most `max_paragraphs` `<p>` elements. An element
//! whose subtree holds more paragraphs than that is descended into instead of
//! being packed whole, so a paragraph is never split.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jats::{
    parse_fragment, serialize_node, serialize_nodes, skeleton_of_nodes, Element, JatsDoc,
    JatsError, NodePath, PreservePolicy, SkeletonChild, UnitPolicy, XmlNode,
};

pub const DEFAULT_MAX_PARAGRAPHS: usize = 5;

const MARKER_PREFIX: &str = "jats-mt:extracted:";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChunkError {
    #[error("document has no translatable content")]
    EmptyDocument,
    #[error("max paragraphs must be at least 1")]
    InvalidMaxParagraphs,
    #[error("expected {expected} fragments, got {found}")]
    FragmentCount { expected: usize, found: usize },
    #[error("fragment for chunk {index} is malformed: {error}")]
    FragmentMalformed { index: usize, error: JatsError },
    #[error("fragment for chunk {index} does not match the source structure: {summary}")]
    FragmentSkeletonMismatch { index: usize, summary: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkKind {
    Body,
    Front,
    Back,
    Figure,
    Table,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub index: usize,
    pub kind: ChunkKind,
    /// Sibling paths covered by the chunk. For extracted figures and tables
    /// this is the single original position.
    pub node_paths: Vec<NodePath>,
    pub fragment: String,
    pub paragraph_count: usize,
    /// Source nodes, the parsed form of `fragment`.
    pub nodes: Vec<XmlNode>,
    /// Translation policy in effect at the chunk's parent.
    pub inherited_policy: UnitPolicy,
    /// Marker id for extracted figures and tables.
    pub marker: Option<usize>,
}

impl Chunk {
    pub fn skeleton(&self) -> Vec<SkeletonChild> {
        skeleton_of_nodes(&self.nodes)
    }

    pub fn is_extracted(&self) -> bool {
        self.marker.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedEntry {
    pub marker: usize,
    pub chunk_index: usize,
    pub kind: ChunkKind,
    pub path: NodePath,
}

#[derive(Debug, Clone)]
pub struct ChunkPlan {
    pub document_id: String,
    pub chunks: Vec<Chunk>,
    pub manifest: Vec<ExtractedEntry>,
    /// The article with figures and tables replaced by markers.
    pub base: JatsDoc,
    pub max_paragraphs: usize,
    /// Extracted nodes with nothing to translate, restored as-is.
    held: Vec<(usize, Vec<XmlNode>)>,
}

#[derive(Debug, Serialize)]
pub struct ChunkSummary<'a> {
    pub index: usize,
    pub kind: ChunkKind,
    pub node_paths: &'a [NodePath],
    pub paragraph_count: usize,
}

impl ChunkPlan {
    /// Debug dump of the plan: one entry per chunk.
    pub fn manifest_json(&self) -> serde_json::Value {
        let rows: Vec<_> = self
            .chunks
            .iter()
            .map(|c| ChunkSummary {
                index: c.index,
                kind: c.kind,
                node_paths: &c.node_paths,
                paragraph_count: c.paragraph_count,
            })
            .collect();
        serde_json::to_value(rows).expect("chunk summary serializes")
    }

    /// Serialized source fragments, one per chunk.
    pub fn identity_fragments(&self) -> Vec<String> {
        self.chunks.iter().map(|c| c.fragment.clone()).collect()
    }
}

pub fn marker_comment(marker: usize) -> String {
    format!("{MARKER_PREFIX}{marker}")
}

fn parse_marker(comment: &str) -> Option<usize> {
    comment.strip_prefix(MARKER_PREFIX)?.parse().ok()
}

fn paragraph_weight(e: &Element) -> usize {
    if e.name == "p" {
        1
    } else {
        e.child_elements().map(paragraph_weight).sum()
    }
}

fn nodes_weight(nodes: &[XmlNode]) -> usize {
    nodes
        .iter()
        .filter_map(XmlNode::as_element)
        .map(paragraph_weight)
        .sum()
}

fn has_translatable_text(
    nodes: &[XmlNode],
    inherited: UnitPolicy,
    policy: &PreservePolicy,
) -> bool {
    nodes.iter().any(|n| match n {
        XmlNode::Element(e) => {
            has_translatable_text(&e.children, policy.step(inherited, &e.name), policy)
        }
        n if n.is_text() => inherited == UnitPolicy::Translate && !n.is_whitespace_text(),
        _ => false,
    })
}

fn complex_kind(name: &str) -> Option<ChunkKind> {
    match name {
        "fig" => Some(ChunkKind::Figure),
        "table-wrap" => Some(ChunkKind::Table),
        _ => None,
    }
}

/// Lifts every outermost `<fig>` and `<table-wrap>` out of the article,
/// leaving a marker comment in its place. Returned chunks are indexed by
/// marker id in document order.
pub fn extract_complex(doc: &JatsDoc) -> (JatsDoc, Vec<Chunk>) {
    extract_complex_with_policy(doc, &PreservePolicy::default())
}

fn extract_complex_with_policy(doc: &JatsDoc, policy: &PreservePolicy) -> (JatsDoc, Vec<Chunk>) {
    fn walk(
        e: &mut Element,
        path: &NodePath,
        inherited: UnitPolicy,
        policy: &PreservePolicy,
        out: &mut Vec<Chunk>,
    ) {
        let here = policy.step(inherited, &e.name);
        for i in 0..e.children.len() {
            let child_path = path.child(i);
            let kind = e.children[i]
                .as_element()
                .and_then(|c| complex_kind(&c.name));
            if let Some(kind) = kind {
                let marker = out.len();
                let node =
                    std::mem::replace(&mut e.children[i], XmlNode::Comment(marker_comment(marker)));
                let weight = node.as_element().map(paragraph_weight).unwrap_or(0);
                out.push(Chunk {
                    index: marker,
                    kind,
                    node_paths: vec![child_path],
                    fragment: serialize_node(&node),
                    paragraph_count: weight,
                    nodes: vec![node],
                    inherited_policy: here,
                    marker: Some(marker),
                });
            } else if let XmlNode::Element(c) = &mut e.children[i] {
                walk(c, &child_path, here, policy, out);
            }
        }
    }
    let mut reduced = doc.clone();
    let mut out = Vec::new();
    walk(
        &mut reduced.root,
        &NodePath::root(),
        UnitPolicy::Translate,
        policy,
        &mut out,
    );
    (reduced, out)
}

/// Puts extracted chunks back at their markers. The inverse of
/// [`extract_complex`] when the chunks are unmodified.
pub fn restore_extracted(reduced: &JatsDoc, extracted: &[Chunk]) -> JatsDoc {
    let mut doc = reduced.clone();
    for chunk in extracted {
        if let Some(marker) = chunk.marker {
            place_extracted(&mut doc, marker, &chunk.node_paths[0], chunk.nodes.clone());
        }
    }
    doc
}

pub fn plan(doc: &JatsDoc, max_paragraphs: usize) -> Result<ChunkPlan, ChunkError> {
    plan_with_policy(doc, max_paragraphs, &PreservePolicy::default())
}

pub fn plan_with_policy(
    doc: &JatsDoc,
    max_paragraphs: usize,
    policy: &PreservePolicy,
) -> Result<ChunkPlan, ChunkError> {
    if max_paragraphs == 0 {
        return Err(ChunkError::InvalidMaxParagraphs);
    }
    let (base, extracted) = extract_complex_with_policy(doc, policy);

    let mut planner = Planner {
        doc: &base,
        max: max_paragraphs,
        policy,
        out: Vec::new(),
    };
    let root_policy = policy.step(UnitPolicy::Translate, &base.root.name);
    for (i, child) in base.root.children.iter().enumerate() {
        let path = NodePath(vec![i]);
        match child {
            XmlNode::Element(e) => {
                let kind = match e.name.as_str() {
                    "front" => ChunkKind::Front,
                    "body" => ChunkKind::Body,
                    _ => ChunkKind::Back,
                };
                planner.container(&path, e, policy.step(root_policy, &e.name), kind);
            }
            n if n.is_text() && !n.is_whitespace_text() => {
                planner.emit(NodePath::root(), i, i, root_policy, ChunkKind::Body);
            }
            _ => {}
        }
    }

    let (translatable, held): (Vec<Chunk>, Vec<Chunk>) = extracted
        .iter()
        .cloned()
        .partition(|c| has_translatable_text(&c.nodes, c.inherited_policy, policy));
    let mut chunks = planner.out;
    chunks.extend(translatable);
    chunks.sort_by(|a, b| a.node_paths[0].cmp(&b.node_paths[0]));
    for (i, c) in chunks.iter_mut().enumerate() {
        c.index = i;
    }
    if chunks.is_empty() {
        return Err(ChunkError::EmptyDocument);
    }

    // Figures without translatable text stay in the manifest so reassembly
    // still restores them; they simply have no chunk of their own.
    let manifest = extracted
        .iter()
        .map(|e| {
            let marker = e.marker.expect("extracted chunk has marker");
            let chunk_index = chunks
                .iter()
                .find(|c| c.marker == Some(marker))
                .map(|c| c.index)
                .unwrap_or(usize::MAX);
            ExtractedEntry {
                marker,
                chunk_index,
                kind: e.kind,
                path: e.node_paths[0].clone(),
            }
        })
        .collect();

    Ok(ChunkPlan {
        document_id: doc.source_id.clone(),
        chunks,
        manifest,
        base,
        max_paragraphs,
        held: held
            .into_iter()
            .map(|c| (c.marker.expect("extracted chunk has marker"), c.nodes))
            .collect(),
    })
}

struct Planner<'a> {
    doc: &'a JatsDoc,
    max: usize,
    policy: &'a PreservePolicy,
    out: Vec<Chunk>,
}

impl Planner<'_> {
    fn container(&mut self, path: &NodePath, e: &Element, here: UnitPolicy, kind: ChunkKind) {
        let mut start: Option<usize> = None;
        let mut weight = 0usize;
        for (i, child) in e.children.iter().enumerate() {
            if let XmlNode::Element(ce) = child {
                let w = paragraph_weight(ce);
                if w > self.max && ce.child_elements().next().is_some() {
                    if let Some(s) = start.take() {
                        self.emit(path.clone(), s, i - 1, here, kind);
                    }
                    weight = 0;
                    self.container(&path.child(i), ce, self.policy.step(here, &ce.name), kind);
                    continue;
                }
                if weight > 0 && weight + w > self.max {
                    if let Some(s) = start.take() {
                        self.emit(path.clone(), s, i - 1, here, kind);
                    }
                    weight = 0;
                }
                weight += w;
            }
            start.get_or_insert(i);
        }
        if let Some(s) = start {
            self.emit(path.clone(), s, e.children.len() - 1, here, kind);
        }
    }

    fn emit(
        &mut self,
        parent: NodePath,
        first: usize,
        last: usize,
        here: UnitPolicy,
        kind: ChunkKind,
    ) {
        let Some(parent_el) = self.doc.element_at(&parent) else {
            return;
        };
        let nodes = parent_el.children[first..=last].to_vec();
        if !has_translatable_text(&nodes, here, self.policy) {
            return;
        }
        self.out.push(Chunk {
            index: 0,
            kind,
            node_paths: (first..=last).map(|i| parent.child(i)).collect(),
            fragment: serialize_nodes(&nodes),
            paragraph_count: nodes_weight(&nodes),
            nodes,
            inherited_policy: here,
            marker: None,
        });
    }
}

/// Parses and checks every fragment against its chunk's structure, then
/// rebuilds the article.
pub fn reassemble(plan: &ChunkPlan, fragments: &[String]) -> Result<JatsDoc, ChunkError> {
    if fragments.len() != plan.chunks.len() {
        return Err(ChunkError::FragmentCount {
            expected: plan.chunks.len(),
            found: fragments.len(),
        });
    }
    let mut replacements = Vec::with_capacity(fragments.len());
    for (chunk, frag) in plan.chunks.iter().zip(fragments) {
        let nodes = parse_fragment(frag).map_err(|error| ChunkError::FragmentMalformed {
            index: chunk.index,
            error,
        })?;
        let expected = chunk.skeleton();
        let found = skeleton_of_nodes(&nodes);
        if expected != found {
            return Err(ChunkError::FragmentSkeletonMismatch {
                index: chunk.index,
                summary: skeleton_diff_summary(&expected, &found),
            });
        }
        replacements.push(Some(nodes));
    }
    Ok(assemble(plan, replacements))
}

/// Splices replacement nodes into the base document without structural
/// checks. `None` keeps a chunk's source nodes.
pub fn assemble(plan: &ChunkPlan, mut replacements: Vec<Option<Vec<XmlNode>>>) -> JatsDoc {
    replacements.resize(plan.chunks.len(), None);
    let mut doc = plan.base.clone();

    let mut ranged: Vec<(&Chunk, Vec<XmlNode>)> = Vec::new();
    let mut extracted: Vec<(usize, NodePath, Vec<XmlNode>)> = Vec::new();
    for (chunk, rep) in plan.chunks.iter().zip(replacements) {
        let nodes = rep.unwrap_or_else(|| chunk.nodes.clone());
        match chunk.marker {
            Some(m) => extracted.push((m, chunk.node_paths[0].clone(), nodes)),
            None => ranged.push((chunk, nodes)),
        }
    }
    // Later ranges first so earlier paths stay valid.
    ranged.sort_by(|a, b| b.0.node_paths[0].cmp(&a.0.node_paths[0]));
    for (chunk, nodes) in ranged {
        let first = &chunk.node_paths[0];
        let last = chunk.node_paths.last().expect("chunk has paths");
        let parent = first.parent().unwrap_or_default();
        let (Some(a), Some(b)) = (first.last_index(), last.last_index()) else {
            continue;
        };
        if let Some(p) = doc.element_at_mut(&parent) {
            let b = b.min(p.children.len().saturating_sub(1));
            p.children.splice(a..=b, nodes);
        }
    }

    for entry in &plan.manifest {
        let nodes = match extracted.iter().position(|(m, _, _)| *m == entry.marker) {
            Some(i) => extracted.swap_remove(i).2,
            None => match plan.held.iter().find(|(m, _)| *m == entry.marker) {
                Some((_, n)) => n.clone(),
                None => continue,
            },
        };
        place_extracted(&mut doc, entry.marker, &entry.path, nodes);
    }
    doc
}

fn place_extracted(doc: &mut JatsDoc, marker: usize, path: &NodePath, nodes: Vec<XmlNode>) {
    if let Some((parent, idx)) = find_marker(&doc.root, &NodePath::root(), marker) {
        if let Some(p) = doc.element_at_mut(&parent) {
            p.children.splice(idx..=idx, nodes);
            return;
        }
    }
    // Marker lost: fall back to the recorded position.
    let parent = path.parent().unwrap_or_default();
    let idx = path.last_index().unwrap_or(0);
    let target = if doc.element_at(&parent).is_some() {
        parent
    } else {
        NodePath::root()
    };
    if let Some(p) = doc.element_at_mut(&target) {
        let idx = idx.min(p.children.len());
        p.children.splice(idx..idx, nodes);
    }
}

fn find_marker(e: &Element, path: &NodePath, marker: usize) -> Option<(NodePath, usize)> {
    for (i, c) in e.children.iter().enumerate() {
        match c {
            XmlNode::Comment(text) if parse_marker(text) == Some(marker) => {
                return Some((path.clone(), i))
            }
            XmlNode::Element(ce) => {
                if let Some(hit) = find_marker(ce, &path.child(i), marker) {
                    return Some(hit);
                }
            }
            _ => {}
        }
    }
    None
}

/// One-line description of where two skeleton sequences first differ.
pub fn skeleton_diff_summary(expected: &[SkeletonChild], found: &[SkeletonChild]) -> String {
    fn label(c: Option<&SkeletonChild>) -> String {
        match c {
            None => "nothing".into(),
            Some(SkeletonChild::Text) => "TEXT".into(),
            Some(SkeletonChild::Element(e)) => format!("<{}>", e.name),
        }
    }
    fn go(
        expected: &[SkeletonChild],
        found: &[SkeletonChild],
        trail: &mut Vec<String>,
    ) -> Option<String> {
        let n = expected.len().max(found.len());
        for i in 0..n {
            let (a, b) = (expected.get(i), found.get(i));
            match (a, b) {
                (Some(SkeletonChild::Element(x)), Some(SkeletonChild::Element(y)))
                    if x.name == y.name =>
                {
                    if x.attributes != y.attributes {
                        return Some(format!("{}<{}> attributes differ", trail.concat(), x.name));
                    }
                    trail.push(format!("{}[{i}]/", x.name));
                    if let Some(s) = go(&x.children, &y.children, trail) {
                        return Some(s);
                    }
                    trail.pop();
                }
                _ if a == b => {}
                _ => {
                    return Some(format!(
                        "at {}#{i}: expected {}, found {}",
                        if trail.is_empty() {
                            "/".to_string()
                        } else {
                            trail.concat()
                        },
                        label(a),
                        label(b)
                    ))
                }
            }
        }
        None
    }
    go(expected, found, &mut Vec::new()).unwrap_or_else(|| "no difference".into())
}
