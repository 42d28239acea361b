//! Structural checks on translated documents and chunks: skeleton equality,
//! nesting errors, truncation and omitted formulas, tables and figures.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::chunker::Chunk;
use crate::jats::{
    parse_fragment, skeleton, skeleton_of_nodes, Element, JatsDoc, NodePath, XmlNode,
};
use crate::lang::ScriptClass;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementCounts {
    pub source: usize,
    pub translated: usize,
    pub missing: usize,
}

impl ElementCounts {
    fn new(source: usize, translated: usize) -> Self {
        ElementCounts {
            source,
            translated,
            missing: source.saturating_sub(translated),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementAudit {
    /// `disp-formula` and `inline-formula`.
    pub equations: ElementCounts,
    /// `table-wrap`.
    pub tables: ElementCounts,
    /// `fig`.
    pub figures: ElementCounts,
}

impl ElementAudit {
    pub fn total_missing(&self) -> usize {
        self.equations.missing + self.tables.missing + self.figures.missing
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Evidence {
    ElementCountDrop { source: usize, translated: usize },
    LengthRatio { ratio: f64, floor: f64 },
    UnterminatedFragment { detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationFlag {
    pub chunk_index: usize,
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestingViolation {
    pub path: NodePath,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Clean,
    StructuralError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub skeleton_match: bool,
    pub truncation_flags: Vec<TruncationFlag>,
    pub nesting_violations: Vec<NestingViolation>,
    pub element_audit: ElementAudit,
    pub verdict: Verdict,
}

impl ValidationReport {
    pub fn new(
        skeleton_match: bool,
        truncation_flags: Vec<TruncationFlag>,
        nesting_violations: Vec<NestingViolation>,
        element_audit: ElementAudit,
    ) -> Self {
        let clean = skeleton_match
            && truncation_flags.is_empty()
            && nesting_violations.is_empty()
            && element_audit.total_missing() == 0;
        ValidationReport {
            skeleton_match,
            truncation_flags,
            nesting_violations,
            element_audit,
            verdict: if clean {
                Verdict::Clean
            } else {
                Verdict::StructuralError
            },
        }
    }

    pub fn is_clean(&self) -> bool {
        self.verdict == Verdict::Clean
    }

    /// Adds chunk-level flags found during translation.
    pub fn with_truncation_flags(self, flags: Vec<TruncationFlag>) -> Self {
        let mut all = self.truncation_flags;
        all.extend(flags);
        all.sort_by_key(|f| f.chunk_index);
        Self::new(
            self.skeleton_match,
            all,
            self.nesting_violations,
            self.element_audit,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Length-ratio floors per script class, and the source length below which
/// the ratio is not checked (short spans vary too much).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruncationConfig {
    pub floors: BTreeMap<ScriptClass, f64>,
    pub min_source_chars: usize,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig {
            floors: [
                (ScriptClass::Alphabetic, 0.3),
                (ScriptClass::Cjk, 0.12),
                (ScriptClass::Abugida, 0.3),
            ]
            .into(),
            min_source_chars: 200,
        }
    }
}

impl TruncationConfig {
    pub fn floor(&self, script: ScriptClass) -> f64 {
        self.floors.get(&script).copied().unwrap_or(0.3)
    }
}

pub fn check_structure(source: &JatsDoc, translated: &JatsDoc) -> ValidationReport {
    let skeleton_match = skeleton(&source.root) == skeleton(&translated.root);
    let violations = if skeleton_match {
        Vec::new()
    } else {
        nesting_violations(&source.root, &translated.root)
    };
    ValidationReport::new(
        skeleton_match,
        Vec::new(),
        violations,
        audit_elements(source, translated),
    )
}

pub fn audit_elements(source: &JatsDoc, translated: &JatsDoc) -> ElementAudit {
    let eq = |e: &Element| e.count_named("disp-formula") + e.count_named("inline-formula");
    ElementAudit {
        equations: ElementCounts::new(eq(&source.root), eq(&translated.root)),
        tables: ElementCounts::new(
            source.root.count_named("table-wrap"),
            translated.root.count_named("table-wrap"),
        ),
        figures: ElementCounts::new(
            source.root.count_named("fig"),
            translated.root.count_named("fig"),
        ),
    }
}

/// Evidence that a translated chunk lost content.
pub fn detect_truncation(
    chunk: &Chunk,
    fragment: &str,
    config: &TruncationConfig,
    script: ScriptClass,
) -> Vec<Evidence> {
    let mut evidence = Vec::new();
    let nodes = match parse_fragment(fragment) {
        Ok(n) => n,
        Err(e) => {
            evidence.push(Evidence::UnterminatedFragment {
                detail: e.to_string(),
            });
            return evidence;
        }
    };
    let count = |ns: &[XmlNode]| ns.iter().map(XmlNode::element_count).sum::<usize>();
    let (src_n, tr_n) = (count(&chunk.nodes), count(&nodes));
    if tr_n < src_n {
        evidence.push(Evidence::ElementCountDrop {
            source: src_n,
            translated: tr_n,
        });
    }
    let src_len = text_len(&chunk.nodes);
    if src_len >= config.min_source_chars {
        let ratio = text_len(&nodes) as f64 / src_len as f64;
        let floor = config.floor(script);
        if ratio < floor {
            evidence.push(Evidence::LengthRatio { ratio, floor });
        }
    }
    evidence
}

fn text_len(nodes: &[XmlNode]) -> usize {
    let mut s = String::new();
    crate::jats::collect_text(nodes, &mut s);
    s.chars().filter(|c| !c.is_whitespace()).count()
}

/// True when the fragment's skeleton equals the chunk's.
pub fn fragment_matches(chunk: &Chunk, fragment: &str) -> bool {
    parse_fragment(fragment).is_ok_and(|n| skeleton_of_nodes(&n) == chunk.skeleton())
}

struct Entry<'a> {
    name: &'a str,
    depth: usize,
    attrs: BTreeSet<&'a str>,
    path: NodePath,
    /// Index one past this element's subtree in the flattened list.
    end: usize,
}

fn flatten(root: &Element) -> Vec<Entry<'_>> {
    fn walk<'a>(e: &'a Element, depth: usize, path: NodePath, out: &mut Vec<Entry<'a>>) {
        let at = out.len();
        out.push(Entry {
            name: &e.name,
            depth,
            attrs: e.attributes.iter().map(|a| a.name.as_str()).collect(),
            path: path.clone(),
            end: 0,
        });
        for (i, c) in e.children.iter().enumerate() {
            if let XmlNode::Element(ce) = c {
                walk(ce, depth + 1, path.child(i), out);
            }
        }
        out[at].end = out.len();
    }
    let mut out = Vec::new();
    walk(root, 0, NodePath::root(), &mut out);
    out
}

fn same(a: &Entry, b: &Entry) -> bool {
    a.name == b.name && a.depth == b.depth && a.attrs == b.attrs
}

/// Aligns the pre-order element sequences and reports elements that kept
/// their tag but changed depth, at the translated parent's path. Omitted or
/// added subtrees are skipped; they surface through the skeleton and audit.
fn nesting_violations(source: &Element, translated: &Element) -> Vec<NestingViolation> {
    let (s, t) = (flatten(source), flatten(translated));
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < s.len() && j < t.len() {
        let (a, b) = (&s[i], &t[j]);
        if same(a, b) {
            i += 1;
            j += 1;
            continue;
        }
        if a.name == b.name && a.attrs == b.attrs {
            let parent = b.path.parent().unwrap_or_default();
            let parent_name = parent_name(translated, &parent);
            out.push(NestingViolation {
                path: parent,
                description: format!(
                    "<{}> appears inside <{}> at depth {} (expected depth {})",
                    b.name, parent_name, b.depth, a.depth
                ),
            });
            i = a.end;
            j = b.end;
            continue;
        }
        let missing_at = s[i + 1..].iter().position(|x| same(x, b));
        let extra_at = t[j + 1..].iter().position(|x| same(x, a));
        match (missing_at, extra_at) {
            (Some(m), Some(x)) if x < m => j = b.end,
            (Some(_), _) => i = a.end,
            (None, Some(_)) => j = b.end,
            (None, None) => {
                out.push(NestingViolation {
                    path: b.path.clone(),
                    description: format!(
                        "structure diverges: expected <{}>, found <{}>",
                        a.name, b.name
                    ),
                });
                break;
            }
        }
    }
    out
}

fn parent_name<'a>(root: &'a Element, path: &NodePath) -> &'a str {
    let mut e = root;
    for &i in &path.0 {
        match e.children.get(i).and_then(XmlNode::as_element) {
            Some(c) => e = c,
            None => break,
        }
    }
    &e.name
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunker::plan;
    use crate::jats::parse_str;

    const ART: &str = r#"<article><body><sec id="s1"><title>Results</title><fig id="f1"><label>Fig. 1</label><caption><p>Cap.</p></caption></fig><p>After the figure.</p><p>Equation <disp-formula id="e1"><tex-math>x</tex-math></disp-formula> holds.</p></sec></body></article>"#;

    #[test]
    fn identical_documents_are_clean() {
        let d = parse_str(ART).unwrap();
        let r = check_structure(&d, &d);
        assert!(r.is_clean());
        assert_eq!(r.element_audit.figures, ElementCounts::new(1, 1));
        assert_eq!(r.element_audit.equations.source, 1);
    }

    #[test]
    fn paragraph_moved_into_caption() {
        let src = parse_str(ART).unwrap();
        let bad = parse_str(&ART.replace(
            "<caption><p>Cap.</p></caption></fig><p>After the figure.</p>",
            "<caption><p>Cap.</p><p>After the figure.</p></caption></fig>",
        ))
        .unwrap();
        let r = check_structure(&src, &bad);
        assert!(!r.skeleton_match);
        assert_eq!(r.nesting_violations.len(), 1);
        let v = &r.nesting_violations[0];
        assert_eq!(bad.element_at(&v.path).unwrap().name, "caption");
        assert_eq!(r.verdict, Verdict::StructuralError);
    }

    #[test]
    fn missing_formula_is_audited() {
        let src = parse_str(ART).unwrap();
        let bad = parse_str(&ART.replace(
            r#"<disp-formula id="e1"><tex-math>x</tex-math></disp-formula>"#,
            "",
        ))
        .unwrap();
        let r = check_structure(&src, &bad);
        assert_eq!(r.element_audit.equations.missing, 1);
        assert!(r.nesting_violations.is_empty());
        assert!(!r.is_clean());
    }

    #[test]
    fn zero_figures() {
        let d = parse_str("<article><body><p>x</p></body></article>").unwrap();
        assert_eq!(audit_elements(&d, &d).figures, ElementCounts::default());
    }

    fn five_para_chunk() -> Chunk {
        let long = "word ".repeat(60);
        let body: String = (0..5).map(|i| format!("<p>{i} {long}</p>")).collect();
        let d = parse_str(&format!("<article><body>{body}</body></article>")).unwrap();
        plan(&d, 5).unwrap().chunks.remove(0)
    }

    #[test]
    fn same_fragment_has_no_evidence() {
        let c = five_para_chunk();
        let cfg = TruncationConfig::default();
        assert!(detect_truncation(&c, &c.fragment, &cfg, ScriptClass::Alphabetic).is_empty());
    }

    #[test]
    fn dropped_paragraph_is_element_count_evidence() {
        let c = five_para_chunk();
        let cut = c.fragment[..c.fragment.rfind("<p>").unwrap()].to_string();
        let ev = detect_truncation(
            &c,
            &cut,
            &TruncationConfig::default(),
            ScriptClass::Alphabetic,
        );
        assert!(ev.contains(&Evidence::ElementCountDrop {
            source: 5,
            translated: 4
        }));
    }

    #[test]
    fn compact_translation_passes_and_tiny_one_fails() {
        let c = five_para_chunk();
        let cfg = TruncationConfig::default();
        let compact = crate::backend::mock::pseudo_rewrite(&c.fragment, "xx", 0.6);
        assert!(detect_truncation(&c, &compact, &cfg, ScriptClass::Alphabetic).is_empty());
        let tiny = crate::backend::mock::pseudo_rewrite(&c.fragment, "xx", 0.05);
        let ev = detect_truncation(&c, &tiny, &cfg, ScriptClass::Alphabetic);
        assert!(matches!(ev[0], Evidence::LengthRatio { .. }));
        // the CJK floor tolerates much shorter output
        let cjk = crate::backend::mock::pseudo_rewrite(&c.fragment, "xx", 0.2);
        assert!(detect_truncation(&c, &cjk, &cfg, ScriptClass::Cjk).is_empty());
    }

    #[test]
    fn unterminated_fragment() {
        let c = five_para_chunk();
        let cut = &c.fragment[..c.fragment.len() - 4];
        let ev = detect_truncation(
            &c,
            cut,
            &TruncationConfig::default(),
            ScriptClass::Alphabetic,
        );
        assert!(matches!(ev[0], Evidence::UnterminatedFragment { .. }));
    }

    #[test]
    fn report_json_field_names() {
        let d = parse_str(ART).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&check_structure(&d, &d).to_json()).unwrap();
        for k in [
            "skeleton_match",
            "truncation_flags",
            "nesting_violations",
            "element_audit",
            "verdict",
        ] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(v["verdict"], "clean");
    }
}
