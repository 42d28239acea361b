//! Deterministic stand-ins for a chat model.
//!
//! Mocks dispatch on [`ChatRequest::template_id`]: translation templates act
//! on the payload, quiz templates produce quizzes or answer maps.
//!
//! * `identity` echoes the payload unchanged.
//! * `pseudo` wraps every text span as `⟦xx:text⟧`, keeping tags intact.
//! * `scripted` replays responses from a fixture, by payload hash or call order.
//!   Order replay is only deterministic when calls are serialized.
//! * `faulty` wraps another mock and corrupts a seeded subset of chunk replies.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{sha256_hex, BackendConfig, BackendError, ChatBackend, ChatRequest};
use crate::jats::{parse_fragment, serialize_nodes, Element, XmlNode};

pub const IDK: &str = "I don't know";
const LETTERS: [&str; 5] = ["A", "B", "C", "D", "E"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MockSpec {
    Identity {
        #[serde(default)]
        answers: AnswerScript,
    },
    Pseudo {
        #[serde(default = "default_marker")]
        marker: String,
        /// Fraction of each text span kept inside the marker.
        #[serde(default = "one")]
        compress: f64,
        #[serde(default)]
        answers: AnswerScript,
    },
    Scripted {
        fixture: PathBuf,
        /// Serves requests the fixture has no entry for.
        #[serde(default)]
        fallback: Option<Box<MockSpec>>,
    },
    Faulty {
        inner: Box<MockSpec>,
        seed: u64,
        #[serde(default)]
        truncate_rate: f64,
        #[serde(default)]
        drop_rate: f64,
        #[serde(default)]
        nest_rate: f64,
        /// Faults forced on specific chunk calls (0-based, in call order).
        #[serde(default, deserialize_with = "numeric_keys")]
        forced: BTreeMap<usize, FaultKind>,
    },
}

/// Map keys arrive as strings inside a tagged enum.
fn numeric_keys<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> Result<BTreeMap<usize, FaultKind>, D::Error> {
    let raw = BTreeMap::<String, FaultKind>::deserialize(d)?;
    raw.into_iter()
        .map(|(k, v)| {
            k.trim()
                .parse()
                .map(|n| (n, v))
                .map_err(|_| serde::de::Error::custom(format!("call index `{k}` is not a number")))
        })
        .collect()
}

fn default_marker() -> String {
    "xx".into()
}

fn one() -> f64 {
    1.0
}

impl MockSpec {
    pub fn identity() -> Self {
        MockSpec::Identity {
            answers: AnswerScript::default(),
        }
    }

    pub fn pseudo() -> Self {
        MockSpec::Pseudo {
            marker: default_marker(),
            compress: 1.0,
            answers: AnswerScript::default(),
        }
    }
}

/// How quiz templates are answered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnswerScript {
    /// Question number → answer, used first.
    pub answers: BTreeMap<String, String>,
    /// Answer quizzes this mock generated correctly, by recomputing the key
    /// from each stem.
    pub oracle: bool,
    /// Answer for questions neither of the above covers.
    pub default_answer: String,
    /// Answers given when no article is supplied; absent numbers get IDK.
    pub contamination: BTreeMap<String, String>,
    /// Quiz returned for generation requests; synthesized when absent.
    pub quiz: Option<Value>,
}

impl Default for AnswerScript {
    fn default() -> Self {
        AnswerScript {
            answers: BTreeMap::new(),
            oracle: false,
            default_answer: IDK.into(),
            contamination: BTreeMap::new(),
            quiz: None,
        }
    }
}

impl AnswerScript {
    pub fn oracle() -> Self {
        AnswerScript {
            oracle: true,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultKind {
    Truncate,
    Drop,
    Nest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub call: usize,
    pub payload_hash: String,
    pub kind: FaultKind,
    /// False when the reply had nothing the fault could act on.
    pub applied: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptFixture {
    pub by_key: BTreeMap<String, String>,
    pub in_order: Vec<String>,
}

impl ScriptFixture {
    /// Key under which a request's response is stored.
    pub fn key_for(request: &ChatRequest) -> String {
        sha256_hex(request.payload_or_last_user())
    }
}

pub fn build(
    spec: &MockSpec,
    config: &BackendConfig,
    base_dir: &Path,
) -> Result<Box<dyn ChatBackend>, BackendError> {
    let mock = Mock::new(spec, base_dir)?;
    Ok(Box::new(MockBackend {
        mock,
        model: config.model.clone(),
        temperature: config.temperature,
        in_flight: config.max_in_flight,
    }))
}

/// A mock with a fixed model id, for use outside config files.
pub fn backend(spec: &MockSpec) -> Result<MockBackend, BackendError> {
    Ok(MockBackend {
        mock: Mock::new(spec, Path::new("."))?,
        model: "mock".into(),
        temperature: 0.0,
        in_flight: 8,
    })
}

pub struct MockBackend {
    mock: Mock,
    model: String,
    temperature: f64,
    in_flight: usize,
}

impl MockBackend {
    /// Faults injected so far, when this is a faulty mock.
    pub fn fault_log(&self) -> Vec<FaultRecord> {
        match &self.mock {
            Mock::Faulty(f) => f.log.lock().unwrap_or_else(|e| e.into_inner()).clone(),
            _ => Vec::new(),
        }
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        request.validate()?;
        self.mock.respond(request)
    }
    fn model_id(&self) -> &str {
        &self.model
    }
    fn default_temperature(&self) -> f64 {
        self.temperature
    }
    fn max_in_flight(&self) -> usize {
        self.in_flight
    }
}

enum Mock {
    Identity(AnswerScript),
    Pseudo {
        marker: String,
        compress: f64,
        answers: AnswerScript,
    },
    Scripted {
        fixture: ScriptFixture,
        next: AtomicUsize,
        fallback: Option<Box<Mock>>,
    },
    Faulty(Box<Faulty>),
}

struct Faulty {
    inner: Mock,
    seed: u64,
    rates: [f64; 3],
    forced: BTreeMap<usize, FaultKind>,
    calls: AtomicUsize,
    log: Mutex<Vec<FaultRecord>>,
}

impl Mock {
    fn new(spec: &MockSpec, base_dir: &Path) -> Result<Self, BackendError> {
        Ok(match spec {
            MockSpec::Identity { answers } => Mock::Identity(answers.clone()),
            MockSpec::Pseudo {
                marker,
                compress,
                answers,
            } => {
                if !(0.0..=1.0).contains(compress) || *compress == 0.0 {
                    return Err(BackendError::Config(format!(
                        "pseudo compress {compress} outside (0, 1]"
                    )));
                }
                Mock::Pseudo {
                    marker: marker.clone(),
                    compress: *compress,
                    answers: answers.clone(),
                }
            }
            MockSpec::Scripted { fixture, fallback } => {
                let path = base_dir.join(fixture);
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    BackendError::FixtureMissing(format!("{}: {e}", path.display()))
                })?;
                let fixture: ScriptFixture = serde_json::from_str(&text)
                    .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
                let fallback = match fallback {
                    Some(f) => Some(Box::new(Mock::new(f, base_dir)?)),
                    None => None,
                };
                Mock::Scripted {
                    fixture,
                    next: AtomicUsize::new(0),
                    fallback,
                }
            }
            MockSpec::Faulty {
                inner,
                seed,
                truncate_rate,
                drop_rate,
                nest_rate,
                forced,
            } => {
                let rates = [*truncate_rate, *drop_rate, *nest_rate];
                if rates.iter().any(|r| !(0.0..=1.0).contains(r)) || rates.iter().sum::<f64>() > 1.0
                {
                    return Err(BackendError::Config(format!(
                        "fault rates {rates:?} must lie in [0, 1] and sum to at most 1"
                    )));
                }
                Mock::Faulty(Box::new(Faulty {
                    inner: Mock::new(inner, base_dir)?,
                    seed: *seed,
                    rates,
                    forced: forced.clone(),
                    calls: AtomicUsize::new(0),
                    log: Mutex::new(Vec::new()),
                }))
            }
        })
    }

    fn respond(&self, request: &ChatRequest) -> Result<String, BackendError> {
        match self {
            Mock::Identity(answers) => Ok(respond_plain(request, answers, None)),
            Mock::Pseudo {
                marker,
                compress,
                answers,
            } => Ok(respond_plain(request, answers, Some((marker, *compress)))),
            Mock::Scripted {
                fixture,
                next,
                fallback,
            } => {
                if let Some(r) = fixture.by_key.get(&ScriptFixture::key_for(request)) {
                    return Ok(r.clone());
                }
                if !fixture.in_order.is_empty() {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if let Some(r) = fixture.in_order.get(i) {
                        return Ok(r.clone());
                    }
                }
                match fallback {
                    Some(f) => f.respond(request),
                    None => Err(BackendError::BadResponse(format!(
                        "scripted fixture has no response for `{}` (key {})",
                        request.template_id,
                        ScriptFixture::key_for(request)
                    ))),
                }
            }
            Mock::Faulty(f) => f.respond(request),
        }
    }
}

impl Faulty {
    fn respond(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let reply = self.inner.respond(request)?;
        if !request.template_id.starts_with("translate_chunk") {
            return Ok(reply);
        }
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        let payload = request.payload_or_last_user();
        let kind = match self.forced.get(&call) {
            Some(k) => Some(*k),
            None => self.draw(payload),
        };
        let Some(kind) = kind else {
            return Ok(reply);
        };
        let corrupted = apply_fault(kind, &reply);
        self.log
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(FaultRecord {
                call,
                payload_hash: sha256_hex(payload),
                kind,
                applied: corrupted.is_some(),
            });
        Ok(corrupted.unwrap_or(reply))
    }

    /// Seeded choice that depends only on the seed and the payload, so the
    /// same chunk is faulted the same way in every run and in any order.
    fn draw(&self, payload: &str) -> Option<FaultKind> {
        let u = unit_draw(self.seed, payload);
        let [t, d, n] = self.rates;
        if u < t {
            Some(FaultKind::Truncate)
        } else if u < t + d {
            Some(FaultKind::Drop)
        } else if u < t + d + n {
            Some(FaultKind::Nest)
        } else {
            None
        }
    }
}

/// Uniform draw in [0, 1) from a seed and a string.
pub fn unit_draw(seed: u64, s: &str) -> f64 {
    let h = sha256_hex(format!("{seed}:{s}"));
    let v = u64::from_str_radix(&h[..16], 16).expect("hex digest");
    (v >> 11) as f64 / (1u64 << 53) as f64
}

/// Applies one fault to a reply. `None` when the fault has nothing to act on.
pub fn apply_fault(kind: FaultKind, reply: &str) -> Option<String> {
    match kind {
        FaultKind::Truncate => {
            let cut = reply.rfind("</")?;
            Some(reply[..cut].to_owned())
        }
        FaultKind::Drop => {
            let mut nodes = parse_fragment(reply).ok()?;
            drop_one(&mut nodes).then(|| serialize_nodes(&nodes))
        }
        FaultKind::Nest => {
            let mut nodes = parse_fragment(reply).ok()?;
            nest_one(&mut nodes).then(|| serialize_nodes(&nodes))
        }
    }
}

const DROP_PREFERRED: &[&str] = &["fig", "table-wrap", "disp-formula", "inline-formula"];

fn drop_one(nodes: &mut Vec<XmlNode>) -> bool {
    // nested preferred element first, then the last paragraph, then the last element
    fn find(
        nodes: &[XmlNode],
        names: &[&str],
        depth: usize,
        best: &mut Option<Vec<usize>>,
        path: &mut Vec<usize>,
    ) {
        for (i, n) in nodes.iter().enumerate() {
            if let XmlNode::Element(e) = n {
                path.push(i);
                if depth > 0 && names.contains(&e.name.as_str()) {
                    *best = Some(path.clone());
                }
                find(&e.children, names, depth + 1, best, path);
                path.pop();
            }
        }
    }
    let mut best = None;
    find(nodes, DROP_PREFERRED, 0, &mut best, &mut Vec::new());
    if best.is_none() {
        let mut p = None;
        find_any_depth(nodes, "p", &mut p, &mut Vec::new());
        best = p;
    }
    if best.is_none() {
        best = nodes
            .iter()
            .rposition(|n| n.as_element().is_some())
            .map(|i| vec![i]);
    }
    let Some(path) = best else {
        return false;
    };
    remove_at(nodes, &path);
    true
}

fn find_any_depth(
    nodes: &[XmlNode],
    name: &str,
    best: &mut Option<Vec<usize>>,
    path: &mut Vec<usize>,
) {
    for (i, n) in nodes.iter().enumerate() {
        if let XmlNode::Element(e) = n {
            path.push(i);
            if e.name == name {
                *best = Some(path.clone());
            }
            find_any_depth(&e.children, name, best, path);
            path.pop();
        }
    }
}

fn remove_at(nodes: &mut Vec<XmlNode>, path: &[usize]) {
    let (last, init) = path.split_last().expect("non-empty path");
    let mut cur = nodes;
    for &i in init {
        cur = &mut cur[i].as_element_mut().expect("element on path").children;
    }
    cur.remove(*last);
}

/// Moves the last element child of the first element with two or more
/// element children into its preceding element sibling.
fn nest_one(nodes: &mut Vec<XmlNode>) -> bool {
    fn try_here(children: &mut [XmlNode]) -> bool {
        let elems: Vec<usize> = children
            .iter()
            .enumerate()
            .filter(|(_, n)| n.as_element().is_some())
            .map(|(i, _)| i)
            .collect();
        if elems.len() < 2 {
            return false;
        }
        let (last, prev) = (elems[elems.len() - 1], elems[elems.len() - 2]);
        let moved = std::mem::replace(&mut children[last], XmlNode::Text(String::new()));
        children[prev]
            .as_element_mut()
            .expect("element")
            .children
            .push(moved);
        true
    }
    fn walk(children: &mut Vec<XmlNode>) -> bool {
        if try_here(children) {
            children.retain(|n| !matches!(n, XmlNode::Text(t) if t.is_empty()));
            return true;
        }
        children
            .iter_mut()
            .filter_map(XmlNode::as_element_mut)
            .any(|e| walk(&mut e.children))
    }
    walk(nodes)
}

fn respond_plain(
    request: &ChatRequest,
    answers: &AnswerScript,
    pseudo: Option<(&str, f64)>,
) -> String {
    let payload = request.payload_or_last_user();
    match request.template_id.as_str() {
        "quiz_generate" => match &answers.quiz {
            Some(q) => q.to_string(),
            None => synth_quiz(payload, question_count(request)).to_string(),
        },
        "quiz_translate" => match pseudo {
            Some((m, _)) => pseudo_quiz(payload, m),
            None => payload.to_owned(),
        },
        "quiz_contamination" => answer_map(payload, |k, _| {
            answers
                .contamination
                .get(k)
                .cloned()
                .unwrap_or_else(|| IDK.to_owned())
        }),
        t if t.starts_with("quiz_execute") || t == "quiz_answer_reask" => {
            answer_map(payload, |k, stem| {
                if let Some(a) = answers.answers.get(k) {
                    return a.clone();
                }
                if answers.oracle {
                    if let Some(stem) = stem {
                        return oracle_letter(stem).to_owned();
                    }
                }
                answers.default_answer.clone()
            })
        }
        _ => match pseudo {
            Some((m, c)) => pseudo_rewrite(payload, m, c),
            None => payload.to_owned(),
        },
    }
}

fn question_count(request: &ChatRequest) -> usize {
    let text = request
        .messages
        .last()
        .map(|m| m.content.as_str())
        .unwrap_or("");
    text.split("labeled 1-")
        .nth(1)
        .and_then(|rest| {
            let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
            digits.parse().ok()
        })
        .unwrap_or(50)
}

/// Letter keyed for a synthesized stem. Pseudo markers are ignored.
pub fn oracle_letter(stem: &str) -> &'static str {
    let clean = strip_any_markers(stem);
    let h = sha256_hex(clean.trim());
    LETTERS[usize::from_str_radix(&h[..2], 16).expect("hex") % 5]
}

/// A valid quiz about `article` with `n` questions.
pub fn synth_quiz(article: &str, n: usize) -> Value {
    let tag = &sha256_hex(article)[..8];
    let mut quiz = Map::new();
    for k in 1..=n {
        let stem =
            format!("Question {k} about article {tag}: which statement matches the findings?");
        let mut options: Vec<Value> = LETTERS
            .iter()
            .map(|l| Value::String(format!("{l}) Finding {k}{l} of {tag}")))
            .collect();
        options.push(Value::String(IDK.into()));
        let answer = oracle_letter(&stem);
        quiz.insert(
            k.to_string(),
            serde_json::json!({"question": stem, "options": options, "answer": answer}),
        );
    }
    Value::Object(quiz)
}

/// Builds a JSON answer map over the question numbers in `payload`.
fn answer_map(payload: &str, mut pick: impl FnMut(&str, Option<&str>) -> String) -> String {
    let mut out = Map::new();
    match serde_json::from_str::<Value>(payload) {
        Ok(Value::Object(qs)) => {
            for (k, q) in qs {
                let stem = q.get("question").and_then(Value::as_str);
                let a = pick(&k, stem);
                out.insert(k, Value::String(a));
            }
        }
        _ => {
            for k in numbered_lines(payload) {
                let a = pick(&k, None);
                out.insert(k, Value::String(a));
            }
        }
    }
    Value::Object(out).to_string()
}

fn numbered_lines(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|l| {
            let d: String = l
                .trim_start()
                .chars()
                .take_while(char::is_ascii_digit)
                .collect();
            (!d.is_empty() && l.trim_start()[d.len()..].starts_with('.')).then_some(d)
        })
        .collect()
}

fn wrap(text: &str, marker: &str, compress: f64) -> String {
    let kept = if compress >= 1.0 {
        text.to_owned()
    } else {
        let n = text.chars().count();
        let keep = ((n as f64) * compress).ceil() as usize;
        text.chars().take(keep.max(1)).collect()
    };
    format!("⟦{marker}:{kept}⟧")
}

/// Wraps every non-blank text span of an XML fragment, or every paragraph
/// when the payload is not XML.
pub fn pseudo_rewrite(payload: &str, marker: &str, compress: f64) -> String {
    fn walk(nodes: &mut [XmlNode], marker: &str, compress: f64) {
        for n in nodes {
            match n {
                XmlNode::Element(Element { children, .. }) => walk(children, marker, compress),
                XmlNode::Text(t) | XmlNode::CData(t) if !t.trim().is_empty() => {
                    *t = wrap(t, marker, compress);
                }
                _ => {}
            }
        }
    }
    if payload.trim_start().starts_with('<') {
        if let Ok(mut nodes) = parse_fragment(payload) {
            walk(&mut nodes, marker, compress);
            return serialize_nodes(&nodes);
        }
    }
    payload
        .split("\n\n")
        .map(|p| {
            if p.trim().is_empty() {
                p.to_owned()
            } else {
                wrap(p, marker, compress)
            }
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn pseudo_quiz(payload: &str, marker: &str) -> String {
    let Ok(Value::Object(mut qs)) = serde_json::from_str::<Value>(payload) else {
        return pseudo_rewrite(payload, marker, 1.0);
    };
    for q in qs.values_mut() {
        if let Some(Value::String(s)) = q.get_mut("question") {
            *s = wrap(s, marker, 1.0);
        }
        if let Some(Value::Array(opts)) = q.get_mut("options") {
            for o in opts {
                if let Value::String(s) = o {
                    *s = wrap(s, marker, 1.0);
                }
            }
        }
    }
    Value::Object(qs).to_string()
}

/// Removes `⟦marker:` … `⟧` wrappers, restoring the wrapped text.
pub fn strip_pseudo_markers(text: &str, marker: &str) -> String {
    let open = format!("⟦{marker}:");
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(i) = rest.find(&open) {
        out.push_str(&rest[..i]);
        let inner = &rest[i + open.len()..];
        match inner.find('⟧') {
            Some(j) => {
                out.push_str(&inner[..j]);
                rest = &inner[j + '⟧'.len_utf8()..];
            }
            None => {
                out.push_str(&rest[i..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

fn strip_any_markers(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(i) = rest.find('⟦') {
        out.push_str(&rest[..i]);
        let inner = &rest[i + '⟦'.len_utf8()..];
        match (inner.find(':'), inner.find('⟧')) {
            (Some(c), Some(j)) if c < j => {
                out.push_str(&inner[c + 1..j]);
                rest = &inner[j + '⟧'.len_utf8()..];
            }
            _ => {
                out.push('⟦');
                rest = inner;
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ChatMessage;

    fn chunk_req(payload: &str) -> ChatRequest {
        ChatRequest::new(
            "translate_chunk",
            vec![ChatMessage::user(format!("translate {payload}"))],
        )
        .with_payload(payload)
    }

    #[test]
    fn identity_echoes_payload() {
        let b = backend(&MockSpec::identity()).unwrap();
        assert_eq!(b.complete(&chunk_req("<p>x</p>")).unwrap(), "<p>x</p>");
    }

    #[test]
    fn pseudo_wraps_text_and_keeps_tags() {
        let b = backend(&MockSpec::pseudo()).unwrap();
        assert_eq!(
            b.complete(&chunk_req("<p>cat</p>")).unwrap(),
            "<p>⟦xx:cat⟧</p>"
        );
        let out = b
            .complete(&chunk_req("<p>a &lt; b<xref rid=\"r1\">1</xref></p>"))
            .unwrap();
        assert_eq!(out, "<p>⟦xx:a &lt; b⟧<xref rid=\"r1\">⟦xx:1⟧</xref></p>");
        assert_eq!(
            strip_pseudo_markers(&out, "xx"),
            "<p>a &lt; b<xref rid=\"r1\">1</xref></p>"
        );
    }

    #[test]
    fn pseudo_plain_text_by_paragraph() {
        assert_eq!(
            pseudo_rewrite("one\n\ntwo", "xx", 1.0),
            "⟦xx:one⟧\n\n⟦xx:two⟧"
        );
    }

    #[test]
    fn compression_shortens_spans() {
        let out = pseudo_rewrite("<p>abcdefghij</p>", "xx", 0.6);
        assert_eq!(out, "<p>⟦xx:abcdef⟧</p>");
    }

    #[test]
    fn scripted_missing_fixture() {
        let spec = MockSpec::Scripted {
            fixture: "no/such/file.json".into(),
            fallback: None,
        };
        assert!(matches!(
            backend(&spec),
            Err(BackendError::FixtureMissing(_))
        ));
    }

    #[test]
    fn scripted_by_key_then_order() {
        let dir = tempfile::tempdir().unwrap();
        let req = chunk_req("<p>gap</p>");
        let fx = ScriptFixture {
            by_key: [(ScriptFixture::key_for(&req), "<p>brecha</p>".to_string())].into(),
            in_order: vec!["first".into(), "second".into()],
        };
        let path = dir.path().join("fx.json");
        std::fs::write(&path, serde_json::to_string(&fx).unwrap()).unwrap();
        let b = build(
            &MockSpec::Scripted {
                fixture: "fx.json".into(),
                fallback: None,
            },
            &BackendConfig::default(),
            dir.path(),
        )
        .unwrap();
        assert_eq!(b.complete(&req).unwrap(), "<p>brecha</p>");
        assert_eq!(b.complete(&chunk_req("<p>q</p>")).unwrap(), "first");
        assert_eq!(b.complete(&chunk_req("<p>r</p>")).unwrap(), "second");
        assert!(b.complete(&chunk_req("<p>s</p>")).is_err());
    }

    fn faulty(seed: u64, rate: f64) -> MockBackend {
        backend(&MockSpec::Faulty {
            inner: Box::new(MockSpec::identity()),
            seed,
            truncate_rate: rate,
            drop_rate: 0.0,
            nest_rate: 0.0,
            forced: BTreeMap::new(),
        })
        .unwrap()
    }

    #[test]
    fn faulty_selection_is_reproducible() {
        let run = || {
            let b = faulty(7, 0.1);
            (0..100)
                .map(|i| b.complete(&chunk_req(&format!("<p>para {i}</p>"))).unwrap())
                .collect::<Vec<_>>()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        let faulted: Vec<usize> = (0..100)
            .filter(|&i| a[i] != format!("<p>para {i}</p>"))
            .collect();
        let expected: Vec<usize> = (0..100)
            .filter(|&i| unit_draw(7, &format!("<p>para {i}</p>")) < 0.1)
            .collect();
        assert_eq!(faulted, expected);
        assert!(!faulted.is_empty());
    }

    #[test]
    fn faulty_ignores_non_chunk_templates() {
        let b = faulty(1, 1.0);
        let r = ChatRequest::new("translate_plain", vec![ChatMessage::user("x</p>")]);
        assert_eq!(b.complete(&r).unwrap(), "x</p>");
        assert!(b.fault_log().is_empty());
    }

    #[test]
    fn drop_prefers_formulas_then_last_paragraph() {
        let r = apply_fault(
            FaultKind::Drop,
            "<p>a</p><p>b<disp-formula id=\"e1\"/></p><p>c</p>",
        )
        .unwrap();
        assert_eq!(r, "<p>a</p><p>b</p><p>c</p>");
        let r = apply_fault(FaultKind::Drop, "<p>a</p><p>b</p>").unwrap();
        assert_eq!(r, "<p>a</p>");
    }

    #[test]
    fn nest_moves_last_sibling_inside_previous() {
        let r = apply_fault(
            FaultKind::Nest,
            "<fig><caption><p>c</p></caption><p>x</p></fig>",
        )
        .unwrap();
        assert_eq!(r, "<fig><caption><p>c</p><p>x</p></caption></fig>");
    }

    #[test]
    fn truncate_cuts_trailing_close() {
        assert_eq!(
            apply_fault(FaultKind::Truncate, "<p>a</p>").unwrap(),
            "<p>a"
        );
        assert_eq!(apply_fault(FaultKind::Truncate, "plain"), None);
    }

    #[test]
    fn oracle_answers_synthesized_quiz() {
        let quiz = synth_quiz("article", 3);
        let mut shown = quiz.clone();
        for q in shown.as_object_mut().unwrap().values_mut() {
            q.as_object_mut().unwrap().remove("answer");
        }
        let b = backend(&MockSpec::Identity {
            answers: AnswerScript::oracle(),
        })
        .unwrap();
        let r = ChatRequest::new("quiz_execute", vec![ChatMessage::user("q")])
            .with_payload(shown.to_string());
        let got: Value = serde_json::from_str(&b.complete(&r).unwrap()).unwrap();
        for (k, q) in quiz.as_object().unwrap() {
            assert_eq!(got[k], q["answer"]);
        }
    }

    #[test]
    fn contamination_defaults_to_idk() {
        let b = backend(&MockSpec::identity()).unwrap();
        let r = ChatRequest::new("quiz_contamination", vec![ChatMessage::user("q")])
            .with_payload(r#"{"1":{"question":"a"},"2":{"question":"b"}}"#);
        assert_eq!(
            b.complete(&r).unwrap(),
            r#"{"1":"I don't know","2":"I don't know"}"#
        );
    }

    #[test]
    fn pseudo_quiz_translation_is_reversible_for_oracle() {
        let quiz = synth_quiz("a", 2);
        let wrapped = pseudo_quiz(&quiz.to_string(), "xx");
        let v: Value = serde_json::from_str(&wrapped).unwrap();
        let stem = v["1"]["question"].as_str().unwrap();
        assert!(stem.starts_with("⟦xx:"));
        assert_eq!(oracle_letter(stem), quiz["1"]["answer"].as_str().unwrap());
    }
}
