//! Document translation: chunk the article, send each chunk with the full
//! source as context, check and reassemble the replies.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    sha256_hex, strip_code_fence, BackendError, ChatBackend, ChatMessage, ChatRequest,
    PromptCatalog, PromptError,
};
use crate::chunker::{
    assemble, plan_with_policy, Chunk, ChunkError, ChunkKind, ChunkPlan, DEFAULT_MAX_PARAGRAPHS,
};
use crate::jats::{
    parse_fragment, serialize, serialize_nodes, skeleton_of_nodes, Element, JatsDoc,
    PreservePolicy, UnitPolicy, XmlNode,
};
use crate::lang::{Language, ScriptClass};
use crate::validator::{
    detect_truncation, Evidence, TruncationConfig, TruncationFlag, ValidationReport,
};

const KEEP_TAG: &str = "jats-keep";

#[derive(Debug, Error)]
pub enum TranslateError {
    #[error("backend failed on chunk {chunk_index}: {cause}")]
    BackendFailure {
        chunk_index: usize,
        cause: BackendError,
    },
    #[error("reassembly failed: {0}")]
    ReassemblyFailure(#[from] ChunkError),
    #[error("job has no one-shot example")]
    MissingExample,
    #[error("empty input")]
    EmptyInput,
    #[error("invalid job: {0}")]
    InvalidJob(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Jats,
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextPolicy {
    FullDocument,
    None,
}

/// A curated translation showing which terms stay in English.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct OneShotExample {
    #[serde(alias = "source_excerpt")]
    pub source_excerpt: String,
    #[serde(alias = "curated_translation")]
    pub curated_translation: String,
    #[serde(alias = "example_language")]
    pub example_language: String,
}

const BUNDLED_KOREAN: &str = include_str!("../fixtures/one_shot_korean.json");

impl OneShotExample {
    /// The curated Korean example shipped with the crate.
    pub fn bundled_korean() -> Self {
        serde_json::from_str(BUNDLED_KOREAN).expect("bundled example parses")
    }

    pub fn load(path: &Path) -> Result<Self, TranslateError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TranslateError::InvalidJob(format!("{}: {e}", path.display())))?;
        let ex: OneShotExample = serde_json::from_str(&text)
            .map_err(|e| TranslateError::InvalidJob(format!("{}: {e}", path.display())))?;
        ex.validate()?;
        Ok(ex)
    }

    pub fn validate(&self) -> Result<(), TranslateError> {
        if self.curated_translation.trim().is_empty() {
            return Err(TranslateError::InvalidJob(
                "curated translation is empty".into(),
            ));
        }
        if retention_rate(&self.source_excerpt, &self.curated_translation)? <= 0.0 {
            return Err(TranslateError::InvalidJob(
                "curated translation retains no English terms".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TranslationJob {
    /// Name used in prompts, e.g. "Spanish".
    pub target_language: String,
    pub mode: Mode,
    pub context_policy: ContextPolicy,
    pub max_paragraphs: usize,
    pub one_shot: Option<OneShotExample>,
    pub preserve: PreservePolicy,
    /// Extra attempts, bypassing any cache, for chunks with truncation evidence.
    pub chunk_retries: u32,
    /// Fail instead of keeping source text when a reply is malformed or
    /// structurally different from its chunk.
    pub strict: bool,
    pub truncation: TruncationConfig,
    pub script: ScriptClass,
    pub catalog: PromptCatalog,
}

impl TranslationJob {
    pub fn new(target_language: impl Into<String>) -> Self {
        let target_language = target_language.into();
        let script = Language::resolve(&target_language).script;
        TranslationJob {
            target_language,
            mode: Mode::Jats,
            context_policy: ContextPolicy::FullDocument,
            max_paragraphs: DEFAULT_MAX_PARAGRAPHS,
            one_shot: None,
            preserve: PreservePolicy::default(),
            chunk_retries: 0,
            strict: false,
            truncation: TruncationConfig::default(),
            script,
            catalog: PromptCatalog::builtin(),
        }
    }

    pub fn with_context(mut self, policy: ContextPolicy) -> Self {
        self.context_policy = policy;
        self
    }

    pub fn with_one_shot(mut self, example: OneShotExample) -> Self {
        self.one_shot = Some(example);
        self
    }

    pub fn with_max_paragraphs(mut self, n: usize) -> Self {
        self.max_paragraphs = n;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    fn validate(&self) -> Result<(), TranslateError> {
        if self.target_language.trim().is_empty() {
            return Err(TranslateError::InvalidJob(
                "target language is empty".into(),
            ));
        }
        if self.max_paragraphs == 0 {
            return Err(TranslateError::InvalidJob(
                "max_paragraphs must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One aligned text node: source text and what replaced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub source: String,
    pub translated: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub index: usize,
    pub kind: ChunkKind,
    /// sha256 of the raw reply that was used.
    pub response_hash: String,
    pub attempts: u32,
    /// False when the reply did not parse and the source nodes were kept.
    pub accepted: bool,
    pub skeleton_match: bool,
    pub evidence: Vec<Evidence>,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSummary {
    pub source_id: String,
    pub target_language: String,
    pub mode: Mode,
    pub context_policy: ContextPolicy,
    pub max_paragraphs: usize,
    pub one_shot: bool,
    pub model: String,
    pub prompt_catalog: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub chunk_count: usize,
    pub backend_calls: usize,
    /// Share of source words left in English; absent when nothing was sent.
    pub retention_rate: Option<f64>,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Debug, Clone, Serialize)]
pub struct TranslatedDoc {
    #[serde(skip)]
    pub doc: JatsDoc,
    pub xml: String,
    pub summary: JobSummary,
    pub chunks: Vec<ChunkRecord>,
    pub truncation_flags: Vec<TruncationFlag>,
    pub metrics: Metrics,
}

impl TranslatedDoc {
    /// Provenance JSON: everything but the document itself.
    pub fn provenance_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "summary": self.summary,
            "chunks": self.chunks,
            "truncation_flags": self.truncation_flags,
            "metrics": self.metrics,
        }))
        .expect("provenance serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("translated doc serializes")
    }

    /// Structural check against the source plus the chunk-level flags.
    pub fn validate(&self, source: &JatsDoc) -> ValidationReport {
        crate::validator::check_structure(source, &self.doc)
            .with_truncation_flags(self.truncation_flags.clone())
    }
}

/// User/assistant exchange demonstrating which terms to keep in English.
pub fn apply_one_shot(job: &TranslationJob) -> Result<Vec<ChatMessage>, TranslateError> {
    let ex = job
        .one_shot
        .as_ref()
        .ok_or(TranslateError::MissingExample)?;
    let question = job.catalog.render_text(
        "one_shot_question",
        &[
            ("excerpt", &ex.source_excerpt),
            ("lang", &ex.example_language),
        ],
    )?;
    Ok(vec![
        ChatMessage::user(question),
        ChatMessage::assistant(ex.curated_translation.clone()),
    ])
}

fn context_messages(
    job: &TranslationJob,
    article: &str,
) -> Result<Vec<ChatMessage>, TranslateError> {
    let mut out = Vec::new();
    if job.context_policy == ContextPolicy::FullDocument {
        out.extend(
            job.catalog
                .render("article_context", &[("article", article)])?,
        );
    }
    if job.one_shot.is_some() {
        out.extend(apply_one_shot(job)?);
    }
    Ok(out)
}

/// The request for one chunk. The payload is the masked fragment.
pub fn chunk_request(
    job: &TranslationJob,
    context: &str,
    masked_fragment: &str,
) -> Result<ChatRequest, TranslateError> {
    let template = if job.one_shot.is_some() {
        "translate_chunk_terms"
    } else {
        "translate_chunk"
    };
    let mut messages = context_messages(job, context)?;
    messages.push(ChatMessage::user(job.catalog.render_text(
        template,
        &[("lang", &job.target_language), ("chunk", masked_fragment)],
    )?));
    Ok(ChatRequest::new(template, messages).with_payload(masked_fragment))
}

/// Replaces verbatim content, comments and processing instructions with
/// numbered `<jats-keep/>` placeholders so they are never sent for
/// translation. Returns the masked nodes and the originals by number.
pub fn mask(
    nodes: &[XmlNode],
    inherited: UnitPolicy,
    policy: &PreservePolicy,
) -> (Vec<XmlNode>, Vec<XmlNode>) {
    fn fully_verbatim(e: &Element, here: UnitPolicy, policy: &PreservePolicy) -> bool {
        here == UnitPolicy::PreserveVerbatim
            && e.children.iter().all(|c| match c {
                XmlNode::Element(ce) => fully_verbatim(ce, policy.step(here, &ce.name), policy),
                _ => true,
            })
    }
    fn keep(kept: &mut Vec<XmlNode>, node: XmlNode) -> XmlNode {
        kept.push(node);
        Element::new(KEEP_TAG)
            .with_attr("n", (kept.len() - 1).to_string())
            .into()
    }
    fn walk(
        nodes: &[XmlNode],
        inherited: UnitPolicy,
        policy: &PreservePolicy,
        kept: &mut Vec<XmlNode>,
    ) -> Vec<XmlNode> {
        nodes
            .iter()
            .map(|n| match n {
                XmlNode::Element(e) => {
                    let here = policy.step(inherited, &e.name);
                    if fully_verbatim(e, here, policy) {
                        keep(kept, n.clone())
                    } else {
                        let mut m = Element::new(e.name.clone());
                        m.attributes = e.attributes.clone();
                        m.children = walk(&e.children, here, policy, kept);
                        m.into()
                    }
                }
                XmlNode::Comment(_) | XmlNode::ProcessingInstruction(_) => keep(kept, n.clone()),
                t if t.is_text()
                    && inherited == UnitPolicy::PreserveVerbatim
                    && !t.is_whitespace_text() =>
                {
                    keep(kept, n.clone())
                }
                _ => n.clone(),
            })
            .collect()
    }
    let mut kept = Vec::new();
    let masked = walk(nodes, inherited, policy, &mut kept);
    (masked, kept)
}

/// Puts masked originals back. Unknown placeholder numbers are dropped.
pub fn unmask(nodes: Vec<XmlNode>, kept: &[XmlNode]) -> Vec<XmlNode> {
    let mut out = Vec::with_capacity(nodes.len());
    for n in nodes {
        match n {
            XmlNode::Element(e) if e.name == KEEP_TAG => {
                if let Some(orig) = e
                    .attr("n")
                    .and_then(|v| v.parse::<usize>().ok())
                    .and_then(|i| kept.get(i))
                {
                    out.push(orig.clone());
                }
            }
            XmlNode::Element(mut e) => {
                e.children = unmask(std::mem::take(&mut e.children), kept);
                out.push(e.into());
            }
            other => out.push(other),
        }
    }
    // A text node next to a restored text node would otherwise stay split.
    merge_adjacent_text(out)
}

fn merge_adjacent_text(nodes: Vec<XmlNode>) -> Vec<XmlNode> {
    let mut out: Vec<XmlNode> = Vec::with_capacity(nodes.len());
    for n in nodes {
        if let (Some(XmlNode::Text(prev)), XmlNode::Text(t)) = (out.last_mut(), &n) {
            prev.push_str(t);
            continue;
        }
        out.push(n);
    }
    out
}

/// Aligns translate-policy text nodes of source and translation by position.
fn segments(
    source: &[XmlNode],
    translated: &[XmlNode],
    inherited: UnitPolicy,
    policy: &PreservePolicy,
) -> Vec<Segment> {
    fn texts(nodes: &[XmlNode], here: UnitPolicy, policy: &PreservePolicy, out: &mut Vec<String>) {
        for n in nodes {
            match n {
                XmlNode::Element(e) => texts(&e.children, policy.step(here, &e.name), policy, out),
                t if t.is_text() && !t.is_whitespace_text() && here == UnitPolicy::Translate => {
                    out.push(t.as_text().unwrap_or_default().to_owned())
                }
                _ => {}
            }
        }
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    texts(source, inherited, policy, &mut a);
    texts(translated, inherited, policy, &mut b);
    a.into_iter()
        .zip(b)
        .map(|(source, translated)| Segment { source, translated })
        .collect()
}

struct ChunkOutcome {
    nodes: Option<Vec<XmlNode>>,
    record: ChunkRecord,
}

fn translate_one(
    chunk: &Chunk,
    context: &str,
    job: &TranslationJob,
    backend: &dyn ChatBackend,
    calls: &AtomicUsize,
) -> Result<ChunkOutcome, TranslateError> {
    let (masked, kept) = mask(&chunk.nodes, chunk.inherited_policy, &job.preserve);
    let payload = serialize_nodes(&masked);
    let request = chunk_request(job, context, &payload)?;
    let mut attempts = 0;
    loop {
        attempts += 1;
        calls.fetch_add(1, Ordering::SeqCst);
        let reply = if attempts == 1 {
            backend.complete(&request)
        } else {
            backend.complete_fresh(&request)
        }
        .map_err(|cause| TranslateError::BackendFailure {
            chunk_index: chunk.index,
            cause,
        })?;
        let text = strip_code_fence(&reply);
        let parsed = parse_fragment(text).map(|n| unmask(n, &kept));
        let evidence = match &parsed {
            Ok(nodes) => {
                detect_truncation(chunk, &serialize_nodes(nodes), &job.truncation, job.script)
            }
            Err(_) => detect_truncation(chunk, text, &job.truncation, job.script),
        };
        if !evidence.is_empty() && attempts <= job.chunk_retries {
            continue;
        }
        let skeleton_match = parsed
            .as_ref()
            .is_ok_and(|n| skeleton_of_nodes(n) == chunk.skeleton());
        if job.strict {
            match &parsed {
                Err(error) => {
                    return Err(ChunkError::FragmentMalformed {
                        index: chunk.index,
                        error: error.clone(),
                    }
                    .into())
                }
                Ok(n) if !skeleton_match => {
                    return Err(ChunkError::FragmentSkeletonMismatch {
                        index: chunk.index,
                        summary: crate::chunker::skeleton_diff_summary(
                            &chunk.skeleton(),
                            &skeleton_of_nodes(n),
                        ),
                    }
                    .into())
                }
                _ => {}
            }
        }
        let nodes = parsed.ok();
        let segs = segments(
            &chunk.nodes,
            nodes.as_deref().unwrap_or(&chunk.nodes),
            chunk.inherited_policy,
            &job.preserve,
        );
        return Ok(ChunkOutcome {
            record: ChunkRecord {
                index: chunk.index,
                kind: chunk.kind,
                response_hash: sha256_hex(&reply),
                attempts,
                accepted: nodes.is_some(),
                skeleton_match,
                evidence,
                segments: segs,
            },
            nodes,
        });
    }
}

/// Runs `f` over `0..n` on up to `workers` threads, results in index order.
pub fn par_map<T: Send>(n: usize, workers: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let r = f(i);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.expect("every index ran"))
        .collect()
}

pub fn translate_document(
    source: &JatsDoc,
    job: &TranslationJob,
    backend: &dyn ChatBackend,
) -> Result<TranslatedDoc, TranslateError> {
    job.validate()?;
    if job.mode != Mode::Jats {
        return Err(TranslateError::InvalidJob(
            "translate_document needs jats mode; use translate_plain".into(),
        ));
    }
    let started = Instant::now();
    let plan = plan_with_policy(source, job.max_paragraphs, &job.preserve)?;
    let context = serialize(source);
    let calls = AtomicUsize::new(0);
    let results = par_map(plan.chunks.len(), backend.max_in_flight(), |i| {
        translate_one(&plan.chunks[i], &context, job, backend, &calls)
    });
    let mut outcomes = Vec::with_capacity(results.len());
    for r in results {
        outcomes.push(r?);
    }
    finish(
        source,
        &plan,
        job,
        backend,
        outcomes,
        calls.into_inner(),
        started,
    )
}

fn finish(
    source: &JatsDoc,
    plan: &ChunkPlan,
    job: &TranslationJob,
    backend: &dyn ChatBackend,
    outcomes: Vec<ChunkOutcome>,
    backend_calls: usize,
    started: Instant,
) -> Result<TranslatedDoc, TranslateError> {
    let mut replacements = Vec::with_capacity(outcomes.len());
    let mut records = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        replacements.push(o.nodes);
        records.push(o.record);
    }
    let mut doc = assemble(plan, replacements);
    doc.source_id = source.source_id.clone();
    doc.prolog = source.prolog.clone();
    doc.epilog = source.epilog.clone();
    set_lang(&mut doc, &job.target_language);

    let truncation_flags = records
        .iter()
        .filter(|r| !r.evidence.is_empty())
        .map(|r| TruncationFlag {
            chunk_index: r.index,
            evidence: r.evidence.clone(),
        })
        .collect();
    let (src_text, tr_text): (Vec<_>, Vec<_>) = records
        .iter()
        .flat_map(|r| r.segments.iter())
        .map(|s| (s.source.as_str(), s.translated.as_str()))
        .unzip();
    let retention = retention_rate(&src_text.join(" "), &tr_text.join(" ")).ok();
    Ok(TranslatedDoc {
        xml: serialize(&doc),
        doc,
        summary: JobSummary {
            source_id: source.source_id.clone(),
            target_language: job.target_language.clone(),
            mode: job.mode,
            context_policy: job.context_policy,
            max_paragraphs: job.max_paragraphs,
            one_shot: job.one_shot.is_some(),
            model: backend.model_id().to_owned(),
            prompt_catalog: job.catalog.hash().to_owned(),
        },
        metrics: Metrics {
            chunk_count: records.len(),
            backend_calls,
            retention_rate: retention,
            elapsed: started.elapsed(),
        },
        chunks: records,
        truncation_flags,
    })
}

/// Records the target language on the root when the source declared one.
fn set_lang(doc: &mut JatsDoc, language: &str) {
    let tag = Language::resolve(language).tag;
    if let Some(a) = doc
        .root
        .attributes
        .iter_mut()
        .find(|a| a.name == "xml:lang")
    {
        a.value = tag.clone();
        doc.declared_language = Some(tag);
    }
}

/// Translates plain text paragraph by paragraph, `max_paragraphs` per call.
pub fn translate_plain(
    text: &str,
    job: &TranslationJob,
    backend: &dyn ChatBackend,
) -> Result<String, TranslateError> {
    job.validate()?;
    let paras: Vec<&str> = text
        .split("\n\n")
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .collect();
    if paras.is_empty() {
        return Err(TranslateError::EmptyInput);
    }
    let template = if job.one_shot.is_some() {
        "translate_plain_terms"
    } else {
        "translate_plain"
    };
    let groups: Vec<String> = paras
        .chunks(job.max_paragraphs)
        .map(|g| g.join("\n\n"))
        .collect();
    let results = par_map(groups.len(), backend.max_in_flight(), |i| {
        let mut messages = context_messages(job, text)?;
        messages.push(ChatMessage::user(job.catalog.render_text(
            template,
            &[("lang", &job.target_language), ("chunk", &groups[i])],
        )?));
        let req = ChatRequest::new(template, messages).with_payload(groups[i].clone());
        backend
            .complete(&req)
            .map(|r| strip_code_fence(&r).trim().to_owned())
            .map_err(|cause| TranslateError::BackendFailure {
                chunk_index: i,
                cause,
            })
    });
    Ok(results
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?
        .join("\n\n"))
}

/// Latin-script word tokens: letters and digits with internal hyphens, at
/// least two characters and at least one letter.
pub fn latin_tokens(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        loop {
            while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                i += 1;
            }
            if i + 1 < bytes.len() && bytes[i] == b'-' && bytes[i + 1].is_ascii_alphanumeric() {
                i += 1;
                continue;
            }
            break;
        }
        let tok = &text[start..i];
        if tok.len() >= 2 && tok.bytes().any(|b| b.is_ascii_alphabetic()) {
            out.push(tok);
        }
    }
    out
}

/// Share of the source's English words that survive in the translation.
///
/// A translated token counts when it, or every hyphen-separated part of it,
/// occurs in the source (case-insensitive). The result is clamped to 1.
pub fn retention_rate(source_text: &str, translated_text: &str) -> Result<f64, TranslateError> {
    if source_text.trim().is_empty() || translated_text.trim().is_empty() {
        return Err(TranslateError::EmptyInput);
    }
    let src = latin_tokens(source_text);
    if src.is_empty() {
        return Ok(0.0);
    }
    let vocab: HashSet<String> = src.iter().map(|t| t.to_ascii_lowercase()).collect();
    let retained = latin_tokens(translated_text)
        .into_iter()
        .filter(|t| {
            let t = t.to_ascii_lowercase();
            vocab.contains(&t) || t.split('-').all(|p| vocab.contains(p))
        })
        .count();
    Ok((retained as f64 / src.len() as f64).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermVariant {
    pub translation: String,
    pub count: usize,
    pub chunks: BTreeSet<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermConsistencyReport {
    pub terms: BTreeMap<String, Vec<TermVariant>>,
}

impl TermConsistencyReport {
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

const STOPWORDS: &[&str] = &[
    "the", "and", "for", "with", "that", "this", "from", "are", "was", "were", "have", "has",
    "been", "not", "but", "which", "their", "these", "those", "its", "into", "than", "then",
    "also", "can", "may", "our", "all", "each", "such", "both", "more", "most", "other", "between",
    "after", "before", "under", "over", "using", "used", "use", "per", "via", "when", "where",
    "while", "there", "they", "them", "his", "her", "one", "two", "three", "data", "study",
];

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn contains_term(text_words: &[String], term: &[String]) -> bool {
    !term.is_empty() && text_words.windows(term.len()).any(|w| w == term)
}

fn repeated_ngrams(records: &[ChunkRecord]) -> Vec<String> {
    let mut chunks_of: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for r in records {
        for s in &r.segments {
            let w = words(&s.source);
            for n in 1..=3 {
                for g in w.windows(n) {
                    let (first, last) = (&g[0], &g[n - 1]);
                    let content = |x: &String| {
                        x.chars().count() >= 3
                            && x.chars().any(char::is_alphabetic)
                            && !STOPWORDS.contains(&x.as_str())
                    };
                    if content(first) && content(last) {
                        chunks_of.entry(g.join(" ")).or_default().insert(r.index);
                    }
                }
            }
        }
    }
    chunks_of
        .into_iter()
        .filter(|(_, c)| c.len() >= 2)
        .map(|(t, _)| t)
        .collect()
}

/// Lists, for each watched (or repeated) source term, how it was rendered in
/// each chunk. Only terms rendered two or more ways across two or more
/// chunks are reported. Nothing is rewritten.
pub fn term_consistency_report(
    tdoc: &TranslatedDoc,
    watch_terms: Option<&[String]>,
) -> TermConsistencyReport {
    let terms: Vec<String> = match watch_terms {
        Some(t) => t.iter().map(|t| t.to_lowercase()).collect(),
        None => repeated_ngrams(&tdoc.chunks),
    };
    let segs: Vec<(usize, Vec<String>, &Segment)> = tdoc
        .chunks
        .iter()
        .flat_map(|r| {
            r.segments
                .iter()
                .map(move |s| (r.index, words(&s.source), s))
        })
        .collect();
    let mut report = TermConsistencyReport::default();
    for term in terms {
        let tw = words(&term);
        let (pos, neg): (Vec<_>, Vec<_>) = segs.iter().partition(|(_, w, _)| contains_term(w, &tw));
        if pos.is_empty() {
            continue;
        }
        let negative: HashSet<String> = neg
            .iter()
            .flat_map(|(_, _, s)| words(&s.translated))
            .collect();
        let mut freq: BTreeMap<String, usize> = BTreeMap::new();
        for (_, _, s) in &pos {
            for w in words(&s.translated).into_iter().collect::<BTreeSet<_>>() {
                *freq.entry(w).or_default() += 1;
            }
        }
        let mut variants: BTreeMap<String, TermVariant> = BTreeMap::new();
        for (chunk, src_words, s) in &pos {
            let tr = words(&s.translated);
            let variant = if contains_term(&tr, &tw) {
                Some(term.clone())
            } else {
                let at = src_words
                    .windows(tw.len())
                    .position(|w| w == tw.as_slice())
                    .unwrap_or(0);
                let rel = (at as f64 + tw.len() as f64 / 2.0) / src_words.len().max(1) as f64;
                tr.iter()
                    .enumerate()
                    .filter(|(_, w)| {
                        !negative.contains(*w)
                            && w.chars().any(char::is_alphabetic)
                            && w.chars().count() >= 3
                    })
                    .min_by(|(i, a), (j, b)| {
                        let fa = freq.get(*a).copied().unwrap_or(0);
                        let fb = freq.get(*b).copied().unwrap_or(0);
                        let da = ((*i as f64 + 0.5) / tr.len() as f64 - rel).abs();
                        let db = ((*j as f64 + 0.5) / tr.len() as f64 - rel).abs();
                        fb.cmp(&fa).then(da.total_cmp(&db))
                    })
                    .map(|(_, w)| w.clone())
            };
            if let Some(v) = variant {
                let e = variants.entry(v.clone()).or_insert_with(|| TermVariant {
                    translation: v,
                    count: 0,
                    chunks: BTreeSet::new(),
                });
                e.count += 1;
                e.chunks.insert(*chunk);
            }
        }
        let chunk_set: BTreeSet<usize> = variants
            .values()
            .flat_map(|v| v.chunks.iter().copied())
            .collect();
        if variants.len() >= 2 && chunk_set.len() >= 2 {
            report.terms.insert(term, variants.into_values().collect());
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::mock::{self, strip_pseudo_markers, MockSpec};
    use crate::backend::CountingBackend;
    use crate::jats::{parse_str, skeleton};

    const ART: &str = r#"<article xml:lang="en" xmlns:mml="http://www.w3.org/1998/Math/MathML"><front><article-meta><title-group><article-title>Strain in WSe2</article-title></title-group></article-meta></front><body><sec id="Sec5"><title>Results</title><p>See <xref rid="Fig2" ref-type="fig">Fig. 2</xref> and a &lt; b.</p><p>Let <inline-formula><mml:math><mml:mi>x</mml:mi></mml:math></inline-formula> grow.</p><fig id="Fig2"><label>Fig. 2</label><caption><p>Band gap.</p></caption></fig></sec></body><back><ref-list><ref id="r1"><mixed-citation>Kim J. <article-title>Gaps</article-title>. doi:<pub-id>10.1/x</pub-id></mixed-citation></ref></ref-list></back></article>"#;

    fn doc() -> JatsDoc {
        parse_str(ART).unwrap()
    }

    #[test]
    fn identity_round_trip() {
        let b = mock::backend(&MockSpec::identity()).unwrap();
        let t = translate_document(&doc(), &TranslationJob::new("English"), &b).unwrap();
        assert_eq!(t.doc.root, doc().root);
        assert_eq!(t.metrics.retention_rate, Some(1.0));
        assert!(t.truncation_flags.is_empty());
    }

    #[test]
    fn pseudo_wraps_translatable_text_only() {
        let b = mock::backend(&MockSpec::pseudo()).unwrap();
        let t = translate_document(&doc(), &TranslationJob::new("Spanish"), &b).unwrap();
        let src = doc();
        let mut expected = skeleton(&src.root);
        let mut got = skeleton(&t.doc.root);
        expected.attributes.clear();
        got.attributes.clear();
        assert_eq!(expected, got);
        assert!(t.xml.contains("<mml:mi>x</mml:mi>"));
        assert!(t.xml.contains("<pub-id>10.1/x</pub-id>"));
        assert!(t.xml.contains("⟦xx:Results⟧"));
        assert!(t.xml.contains("⟦xx:Gaps⟧"));
        assert!(t.xml.contains("⟦xx:Band gap.⟧"));
        assert!(t.xml.contains(r#"<xref rid="Fig2" ref-type="fig">"#));
        assert!(t.xml.contains("⟦xx: and a &lt; b.⟧"));
        assert!(t.xml.contains(r#"xml:lang="es""#));
        let stripped = parse_str(&strip_pseudo_markers(&t.xml, "xx")).unwrap();
        assert_eq!(stripped.text_content(), src.text_content());
    }

    #[test]
    fn context_policy_controls_system_message() {
        let job = TranslationJob::new("French");
        let r = chunk_request(&job, "<article/>", "<p>x</p>").unwrap();
        assert!(r.messages[0].content.contains("<article/>"));
        let r = chunk_request(
            &job.with_context(ContextPolicy::None),
            "<article/>",
            "<p>x</p>",
        )
        .unwrap();
        assert_eq!(r.messages.len(), 1);
        assert!(r.messages[0].content.contains("into French"));
        assert!(r.messages[0]
            .content
            .contains("Do not cut sentences short and include all symbols."));
    }

    #[test]
    fn one_shot_prefix_keeps_korean_and_asks_for_target() {
        let job = TranslationJob::new("French")
            .with_context(ContextPolicy::None)
            .with_one_shot(OneShotExample::bundled_korean());
        let prefix = apply_one_shot(&job).unwrap();
        assert_eq!(prefix.len(), 2);
        assert!(prefix[0]
            .content
            .contains("translate the excerpt into Korean"));
        assert!(prefix[1].content.starts_with("이차원"));
        let r = chunk_request(&job, "", "<p>x</p>").unwrap();
        let last = &r.messages.last().unwrap().content;
        assert!(last.contains("translate the excerpt into French"));
        assert!(!last.contains("Korean"));
        assert!(matches!(
            apply_one_shot(&TranslationJob::new("French")),
            Err(TranslateError::MissingExample)
        ));
    }

    #[test]
    fn one_shot_with_identity_is_harmless() {
        let b = mock::backend(&MockSpec::identity()).unwrap();
        let job = TranslationJob::new("French").with_one_shot(OneShotExample::bundled_korean());
        let t = translate_document(&doc(), &job, &b).unwrap();
        assert_eq!(t.doc.root.text_content(), doc().root.text_content());
    }

    #[test]
    fn masking_round_trips() {
        let d = doc();
        let nodes = d.root.children.clone();
        let (masked, kept) = mask(&nodes, UnitPolicy::Translate, &PreservePolicy::default());
        let s = serialize_nodes(&masked);
        assert!(!s.contains("mml:mi"));
        assert!(!s.contains("10.1/x"));
        assert!(s.contains("Gaps"));
        assert_eq!(unmask(masked, &kept), nodes);
    }

    #[test]
    fn retention_anchors() {
        assert_eq!(retention_rate("the cat sat", "the cat sat").unwrap(), 1.0);
        assert_eq!(
            retention_rate("the cat sat", "고양이가 앉았다").unwrap(),
            0.0
        );
        assert!(retention_rate("", "x").is_err());
        let ex = OneShotExample::bundled_korean();
        let r = retention_rate(&ex.source_excerpt, &ex.curated_translation).unwrap();
        assert!((r - 0.114).abs() <= 0.03, "{r}");
    }

    #[test]
    fn tokens() {
        assert_eq!(
            latin_tokens("2D MoS2, indirect-to-direct x 10 é-a"),
            ["2D", "MoS2", "indirect-to-direct"]
        );
    }

    #[test]
    fn plain_mode_groups_paragraphs() {
        let text: Vec<String> = (0..12).map(|i| format!("Paragraph {i}.")).collect();
        let text = text.join("\n\n");
        let b = CountingBackend::new(mock::backend(&MockSpec::identity()).unwrap());
        let out = translate_plain(&text, &TranslationJob::new("German"), &b).unwrap();
        assert_eq!(out, text);
        assert_eq!(b.calls(), 3);
        let p = mock::backend(&MockSpec::pseudo()).unwrap();
        let out = translate_plain(&text, &TranslationJob::new("German"), &p).unwrap();
        assert!(out
            .split("\n\n")
            .all(|p| p.starts_with("⟦xx:") && p.ends_with('⟧')));
    }

    #[test]
    fn identity_term_report_is_empty() {
        let b = mock::backend(&MockSpec::identity()).unwrap();
        let t = translate_document(
            &doc(),
            &TranslationJob::new("English").with_max_paragraphs(1),
            &b,
        )
        .unwrap();
        assert!(term_consistency_report(&t, None).is_empty());
        assert!(term_consistency_report(&t, Some(&["gap".into()])).is_empty());
    }

    #[test]
    fn truncated_reply_keeps_source_and_flags() {
        let b = mock::backend(&MockSpec::Faulty {
            inner: Box::new(MockSpec::identity()),
            seed: 0,
            truncate_rate: 1.0,
            drop_rate: 0.0,
            nest_rate: 0.0,
            forced: Default::default(),
        })
        .unwrap();
        let t = translate_document(&doc(), &TranslationJob::new("Spanish"), &b).unwrap();
        assert!(!t.truncation_flags.is_empty());
        assert_eq!(t.doc.root, {
            let mut d = doc();
            set_lang(&mut d, "Spanish");
            d.root
        });
        let mut strict = TranslationJob::new("Spanish");
        strict.strict = true;
        assert!(matches!(
            translate_document(&doc(), &strict, &b),
            Err(TranslateError::ReassemblyFailure(_))
        ));
    }

    #[test]
    fn scripted_variants_are_reported() {
        use crate::backend::mock::ScriptFixture;
        use crate::backend::{BackendConfig, ChatBackend};
        let src = parse_str(
            "<article><body><p>The gap is small.</p><p>We measured it.</p>\
             <p>A gap appears here.</p><p>Another effect appears.</p></body></article>",
        )
        .unwrap();
        let job = TranslationJob::new("Spanish").with_max_paragraphs(2);
        let plan = plan_with_policy(&src, 2, &job.preserve).unwrap();
        let replies = [
            "<p>La brecha es pequeña.</p><p>Lo medimos.</p>",
            "<p>Aparece un hueco aquí.</p><p>Aparece otro efecto.</p>",
        ];
        let mut fx = ScriptFixture::default();
        for (c, r) in plan.chunks.iter().zip(replies) {
            let (m, _) = mask(&c.nodes, c.inherited_policy, &job.preserve);
            let req = chunk_request(&job, "", &serialize_nodes(&m)).unwrap();
            fx.by_key
                .insert(ScriptFixture::key_for(&req), r.to_string());
        }
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("fx.json"),
            serde_json::to_string(&fx).unwrap(),
        )
        .unwrap();
        let b = crate::backend::build_backend(
            &BackendConfig::mock(
                "s",
                MockSpec::Scripted {
                    fixture: "fx.json".into(),
                    fallback: None,
                },
            ),
            dir.path(),
        )
        .unwrap();
        let t = translate_document(&src, &job, &*b as &dyn ChatBackend).unwrap();
        let report = term_consistency_report(&t, Some(&["gap".into()]));
        let v = &report.terms["gap"];
        let names: Vec<_> = v.iter().map(|x| x.translation.as_str()).collect();
        assert_eq!(names, ["brecha", "hueco"]);
        // auto-detection finds it too
        assert!(term_consistency_report(&t, None).terms.contains_key("gap"));
    }
}
