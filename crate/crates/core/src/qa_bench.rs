//! Reference-free QA benchmark: generate a multiple-choice quiz from the
//! source article, make sure it cannot be answered without the article, then
//! have a model answer it from each translation and grade against the key.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::backend::{
    strip_code_fence, BackendError, ChatBackend, ChatMessage, ChatRequest, PromptCatalog,
    PromptError,
};

pub const IDK: &str = "I don't know";
pub const DEFAULT_QUESTIONS: usize = 50;
pub const QUIZ_ATTEMPTS: usize = 3;
pub const GENERATION_TEMPERATURE: f64 = 1.0;
pub const QUIZ_TRANSLATION_TEMPERATURE: f64 = 0.0;
pub const EXECUTION_TEMPERATURE: f64 = 1.0;
const LABELS: [char; 5] = ['A', 'B', 'C', 'D', 'E'];

/// Named quiz invariants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Violation {
    NotAnObject,
    NonNumericKey,
    NonContiguousKeys,
    WrongQuestionCount,
    KeyMismatch,
    EmptyStem,
    OptionsCount,
    IdkOptionMissing,
    MissingAnswer,
    InvalidAnswerLabel,
    CorrectIsIdk,
    DuplicateStem,
}

impl Violation {
    pub fn name(self) -> &'static str {
        match self {
            Violation::NotAnObject => "not-an-object",
            Violation::NonNumericKey => "non-numeric-key",
            Violation::NonContiguousKeys => "non-contiguous-keys",
            Violation::WrongQuestionCount => "wrong-question-count",
            Violation::KeyMismatch => "key-mismatch",
            Violation::EmptyStem => "empty-stem",
            Violation::OptionsCount => "options-count",
            Violation::IdkOptionMissing => "idk-option-missing",
            Violation::MissingAnswer => "missing-answer",
            Violation::InvalidAnswerLabel => "invalid-answer-label",
            Violation::CorrectIsIdk => "correct-is-idk",
            Violation::DuplicateStem => "duplicate-stem",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum QaError {
    #[error("invalid quiz payload ({violation}): {detail}")]
    InvalidQuizPayload {
        violation: Violation,
        detail: String,
    },
    #[error("backend failure: {0}")]
    BackendFailure(#[from] BackendError),
    #[error("answer payload malformed: {0}")]
    AnswerPayloadMalformed(String),
    #[error("no runs to aggregate")]
    EmptyRunSet,
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

fn invalid(violation: Violation, detail: impl Into<String>) -> QaError {
    QaError::InvalidQuizPayload {
        violation,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub number: usize,
    pub stem: String,
    /// Six options; the sixth is "I don't know".
    pub options: Vec<String>,
    /// One of A–E.
    pub correct: char,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quiz {
    pub article_id: String,
    pub language: String,
    pub questions: BTreeMap<usize, Question>,
}

#[derive(Serialize, Deserialize)]
struct QuestionFile {
    question: String,
    options: Vec<String>,
    answer: String,
}

#[derive(Serialize)]
struct QuestionShown<'a> {
    question: &'a str,
    options: &'a [String],
}

fn is_idk_text(s: &str) -> bool {
    let t = s.to_lowercase().replace(['\u{2019}', '`'], "'");
    t.contains("don't know") || t.contains("dont know") || t.contains("do not know")
}

fn letter_of(s: &str) -> Option<char> {
    let t = s
        .trim()
        .trim_matches(|c: char| c == '"' || c == '\'' || c == '(');
    let mut cs = t.chars();
    let first = cs.next()?.to_ascii_uppercase();
    match cs.next() {
        None => Some(first),
        Some(')' | '.' | ':' | ' ') => Some(first),
        _ => None,
    }
}

impl Quiz {
    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    /// Parses the quiz file format, accepting common variations in field
    /// names and option shapes, and checks every invariant.
    /// `expected` checks the question count; the IDK option text is only
    /// checked for English quizzes.
    pub fn from_json(
        article_id: &str,
        language: &str,
        text: &str,
        expected: Option<usize>,
    ) -> Result<Quiz, QaError> {
        let body = json_object_slice(strip_code_fence(text))
            .ok_or_else(|| invalid(Violation::NotAnObject, "no JSON object found"))?;
        let v: Value = serde_json::from_str(body)
            .map_err(|e| invalid(Violation::NotAnObject, e.to_string()))?;
        let obj = v
            .as_object()
            .ok_or_else(|| invalid(Violation::NotAnObject, "top level is not an object"))?;
        // some replies nest the questions under a single key
        let obj = match (obj.len(), obj.values().next()) {
            (1, Some(Value::Object(inner)))
                if obj.keys().all(|k| k.parse::<usize>().is_err())
                    && inner.keys().all(|k| k.trim().parse::<usize>().is_ok()) =>
            {
                inner
            }
            _ => obj,
        };
        let mut questions = BTreeMap::new();
        for (k, q) in obj {
            let number: usize = k
                .trim()
                .trim_start_matches(['Q', 'q'])
                .parse()
                .map_err(|_| invalid(Violation::NonNumericKey, format!("key `{k}`")))?;
            let q = q
                .as_object()
                .ok_or_else(|| invalid(Violation::NotAnObject, format!("question {number}")))?;
            questions.insert(number, parse_question(number, q)?);
        }
        let quiz = Quiz {
            article_id: article_id.into(),
            language: language.into(),
            questions,
        };
        quiz.validate(expected)?;
        Ok(quiz)
    }

    pub fn validate(&self, expected: Option<usize>) -> Result<(), QaError> {
        let n = self.questions.len();
        if n == 0 {
            return Err(invalid(
                Violation::WrongQuestionCount,
                "quiz has no questions",
            ));
        }
        if let Some((i, k)) = self
            .questions
            .keys()
            .enumerate()
            .find(|(i, k)| **k != i + 1)
        {
            return Err(invalid(
                Violation::NonContiguousKeys,
                format!("expected key {}, found {k}", i + 1),
            ));
        }
        if let Some(e) = expected {
            if n != e {
                return Err(invalid(
                    Violation::WrongQuestionCount,
                    format!("expected {e} questions, found {n}"),
                ));
            }
        }
        let english = crate::lang::Language::resolve(&self.language).is_english();
        let mut stems = BTreeSet::new();
        for q in self.questions.values() {
            if q.stem.trim().is_empty() {
                return Err(invalid(
                    Violation::EmptyStem,
                    format!("question {}", q.number),
                ));
            }
            if q.options.len() != 6 {
                return Err(invalid(
                    Violation::OptionsCount,
                    format!("question {} has {} options", q.number, q.options.len()),
                ));
            }
            if english && !is_idk_text(&q.options[5]) {
                return Err(invalid(
                    Violation::IdkOptionMissing,
                    format!("question {} sixth option is `{}`", q.number, q.options[5]),
                ));
            }
            if !LABELS.contains(&q.correct) {
                return Err(invalid(
                    Violation::InvalidAnswerLabel,
                    format!("question {} answer `{}`", q.number, q.correct),
                ));
            }
            let key = q
                .stem
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ")
                .to_lowercase();
            if !stems.insert(key) {
                return Err(invalid(
                    Violation::DuplicateStem,
                    format!("question {}", q.number),
                ));
            }
        }
        Ok(())
    }

    /// The quiz file format: keyed by number with question, options, answer.
    pub fn to_json(&self) -> String {
        let m: BTreeMap<String, QuestionFile> = self
            .questions
            .values()
            .map(|q| {
                (
                    q.number.to_string(),
                    QuestionFile {
                        question: q.stem.clone(),
                        options: q.options.clone(),
                        answer: q.correct.to_string(),
                    },
                )
            })
            .collect();
        sorted_json(&m)
    }

    /// Questions and options without the answer key, as shown to the model.
    pub fn questions_json(&self) -> String {
        let m: BTreeMap<String, QuestionShown> = self
            .questions
            .values()
            .map(|q| {
                (
                    q.number.to_string(),
                    QuestionShown {
                        question: &q.stem,
                        options: &q.options,
                    },
                )
            })
            .collect();
        sorted_json(&m)
    }

    pub fn answer_key(&self) -> BTreeMap<usize, char> {
        self.questions
            .iter()
            .map(|(k, q)| (*k, q.correct))
            .collect()
    }
}

/// JSON object with keys in numeric order.
fn sorted_json<T: Serialize>(m: &BTreeMap<String, T>) -> String {
    let mut keys: Vec<&String> = m.keys().collect();
    keys.sort_by_key(|k| k.parse::<usize>().unwrap_or(usize::MAX));
    let mut out = String::from("{");
    for (i, k) in keys.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&serde_json::to_string(k).expect("key"));
        out.push(':');
        out.push_str(&serde_json::to_string(&m[*k]).expect("value"));
    }
    out.push('}');
    out
}

fn json_object_slice(text: &str) -> Option<&str> {
    let a = text.find('{')?;
    let b = text.rfind('}')?;
    (b > a).then(|| &text[a..=b])
}

fn field<'a>(q: &'a Map<String, Value>, names: &[&str]) -> Option<&'a Value> {
    names.iter().find_map(|n| {
        q.iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(n))
            .map(|(_, v)| v)
    })
}

fn parse_question(number: usize, q: &Map<String, Value>) -> Result<Question, QaError> {
    let stem = field(q, &["question", "stem", "q", "text"])
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_owned();
    let options: Vec<String> =
        match field(q, &["options", "choices", "possible_answers", "answers"]) {
            Some(Value::Array(a)) => a
                .iter()
                .map(|o| match o {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect(),
            Some(Value::Object(o)) => {
                let mut v: Vec<(&String, &Value)> = o.iter().collect();
                v.sort_by(|a, b| a.0.cmp(b.0));
                v.into_iter()
                    .map(|(_, x)| {
                        x.as_str()
                            .map(str::to_owned)
                            .unwrap_or_else(|| x.to_string())
                    })
                    .collect()
            }
            _ => Vec::new(),
        };
    let answer = field(
        q,
        &[
            "answer",
            "correct",
            "correct_answer",
            "correct answer",
            "key",
        ],
    )
    .and_then(Value::as_str)
    .map(str::trim)
    .filter(|s| !s.is_empty())
    .ok_or_else(|| invalid(Violation::MissingAnswer, format!("question {number}")))?;
    let correct = if is_idk_text(answer) {
        return Err(invalid(
            Violation::CorrectIsIdk,
            format!("question {number}"),
        ));
    } else if let Some(l) = letter_of(answer) {
        l
    } else if let Some(i) = options.iter().position(|o| o.trim() == answer) {
        if i == 5 {
            'F'
        } else {
            LABELS.get(i).copied().unwrap_or('?')
        }
    } else {
        return Err(invalid(
            Violation::InvalidAnswerLabel,
            format!("question {number} answer `{answer}`"),
        ));
    };
    if correct == 'F' {
        return Err(invalid(
            Violation::CorrectIsIdk,
            format!("question {number}"),
        ));
    }
    Ok(Question {
        number,
        stem,
        options,
        correct,
    })
}

/// A model's answer to one question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Answer {
    Letter(char),
    DontKnow,
    Invalid,
}

impl Answer {
    /// Reads an answer value. The sixth option's text, in any language,
    /// counts as "I don't know"; `F` and anything unrecognized is invalid.
    pub fn parse(value: &str, idk_option: Option<&str>) -> Answer {
        let t = value.trim();
        if is_idk_text(t) || idk_option.is_some_and(|o| !o.trim().is_empty() && o.trim() == t) {
            return Answer::DontKnow;
        }
        match letter_of(t) {
            Some(c) if LABELS.contains(&c) => Answer::Letter(c),
            _ => Answer::Invalid,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Letter(c) => write!(f, "{c}"),
            Answer::DontKnow => f.write_str("IDK"),
            Answer::Invalid => f.write_str("INVALID"),
        }
    }
}

impl Serialize for Answer {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Answer {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(match s.as_str() {
            "IDK" => Answer::DontKnow,
            "INVALID" => Answer::Invalid,
            other => Answer::parse(other, None),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grade {
    pub score: f64,
    pub correct: usize,
    pub idk_count: usize,
    pub invalid_count: usize,
    pub verdicts: BTreeMap<usize, bool>,
}

/// Correct iff the letter equals the key; missing answers are invalid.
pub fn grade(answers: &BTreeMap<usize, Answer>, quiz: &Quiz) -> Grade {
    let mut g = Grade {
        score: 0.0,
        correct: 0,
        idk_count: 0,
        invalid_count: 0,
        verdicts: BTreeMap::new(),
    };
    for (k, q) in &quiz.questions {
        let a = answers.get(k).copied().unwrap_or(Answer::Invalid);
        let ok = a == Answer::Letter(q.correct);
        match a {
            Answer::DontKnow => g.idk_count += 1,
            Answer::Invalid => g.invalid_count += 1,
            Answer::Letter(_) => {}
        }
        g.correct += usize::from(ok);
        g.verdicts.insert(*k, ok);
    }
    if !quiz.questions.is_empty() {
        g.score = g.correct as f64 / quiz.questions.len() as f64;
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    Execution,
    Contamination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizRun {
    pub article_id: String,
    /// Language of the article the model read.
    pub language: String,
    pub quiz_language: String,
    pub model: String,
    pub kind: RunKind,
    pub n: usize,
    pub answers: BTreeMap<usize, Answer>,
    pub verdicts: BTreeMap<usize, bool>,
    pub score: f64,
    pub correct: usize,
    pub idk_count: usize,
    pub invalid_count: usize,
    pub reasked: bool,
}

impl QuizRun {
    fn new(
        quiz: &Quiz,
        language: &str,
        model: &str,
        kind: RunKind,
        answers: BTreeMap<usize, Answer>,
        reasked: bool,
    ) -> Self {
        let g = grade(&answers, quiz);
        QuizRun {
            article_id: quiz.article_id.clone(),
            language: language.into(),
            quiz_language: quiz.language.clone(),
            model: model.into(),
            kind,
            n: quiz.len(),
            answers,
            verdicts: g.verdicts,
            score: g.score,
            correct: g.correct,
            idk_count: g.idk_count,
            invalid_count: g.invalid_count,
            reasked,
        }
    }

    /// A run whose answers could not be read at all: every answer invalid.
    pub fn all_invalid(quiz: &Quiz, language: &str, model: &str) -> Self {
        let answers = quiz
            .questions
            .keys()
            .map(|k| (*k, Answer::Invalid))
            .collect();
        Self::new(quiz, language, model, RunKind::Execution, answers, true)
    }
}

/// Reads an answer JSON object. Missing numbers become invalid answers.
pub fn parse_answers(text: &str, quiz: &Quiz) -> Result<BTreeMap<usize, Answer>, String> {
    let body = json_object_slice(strip_code_fence(text)).ok_or("no JSON object in reply")?;
    let v: Value = serde_json::from_str(body).map_err(|e| e.to_string())?;
    let obj = v.as_object().ok_or("reply is not an object")?;
    let mut by_number: BTreeMap<usize, &Value> = BTreeMap::new();
    for (k, val) in obj {
        if let Ok(n) = k.trim().trim_start_matches(['Q', 'q']).parse::<usize>() {
            by_number.insert(n, val);
        }
    }
    if by_number.is_empty() {
        return Err("reply has no numbered answers".into());
    }
    Ok(quiz
        .questions
        .iter()
        .map(|(k, q)| {
            let a = match by_number.get(k) {
                Some(Value::String(s)) => Answer::parse(s, q.options.get(5).map(String::as_str)),
                Some(Value::Object(o)) => o
                    .get("answer")
                    .and_then(Value::as_str)
                    .map(|s| Answer::parse(s, q.options.get(5).map(String::as_str)))
                    .unwrap_or(Answer::Invalid),
                _ => Answer::Invalid,
            };
            (*k, a)
        })
        .collect())
}

/// Asks for `n` questions about `article` at temperature 1, regenerating
/// (bypassing any cache) while the reply breaks a quiz invariant.
pub fn generate_quiz(
    article_id: &str,
    article: &str,
    backend: &dyn ChatBackend,
    n: usize,
    catalog: &PromptCatalog,
) -> Result<Quiz, QaError> {
    let n_text = n.to_string();
    let messages = catalog.render("quiz_generate", &[("n", &n_text), ("article", article)])?;
    let req = ChatRequest::new("quiz_generate", messages)
        .with_payload(article)
        .with_temperature(GENERATION_TEMPERATURE);
    let mut last = None;
    for attempt in 0..QUIZ_ATTEMPTS {
        let reply = if attempt == 0 {
            backend.complete(&req)?
        } else {
            backend.complete_fresh(&req)?
        };
        match Quiz::from_json(article_id, "English", &reply, Some(n)) {
            Ok(q) => return Ok(q),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

fn ask_answers(
    quiz: &Quiz,
    messages: Vec<ChatMessage>,
    template: &str,
    backend: &dyn ChatBackend,
    catalog: &PromptCatalog,
) -> Result<(BTreeMap<usize, Answer>, bool), QaError> {
    let questions = quiz.questions_json();
    let req = ChatRequest::new(template, messages.clone())
        .with_payload(questions.clone())
        .with_temperature(EXECUTION_TEMPERATURE);
    let reply = backend.complete(&req)?;
    if let Ok(a) = parse_answers(&reply, quiz) {
        return Ok((a, false));
    }
    let mut again = messages;
    again.push(ChatMessage::assistant(if reply.trim().is_empty() {
        "(empty)".to_owned()
    } else {
        reply
    }));
    again.extend(catalog.render("quiz_answer_reask", &[("questions", &questions)])?);
    let req = ChatRequest::new("quiz_answer_reask", again)
        .with_payload(questions)
        .with_temperature(EXECUTION_TEMPERATURE);
    let reply = backend.complete(&req)?;
    parse_answers(&reply, quiz)
        .map(|a| (a, true))
        .map_err(QaError::AnswerPayloadMalformed)
}

/// Runs the quiz without the article. Passes only when every answer is
/// "I don't know".
pub fn contamination_check(
    quiz: &Quiz,
    backend: &dyn ChatBackend,
    catalog: &PromptCatalog,
) -> Result<(bool, QuizRun), QaError> {
    let messages = catalog.render(
        "quiz_contamination",
        &[("questions", &quiz.questions_json())],
    )?;
    let (answers, reasked) = ask_answers(quiz, messages, "quiz_contamination", backend, catalog)?;
    let pass = answers.len() == quiz.len() && answers.values().all(|a| *a == Answer::DontKnow);
    let run = QuizRun::new(
        quiz,
        "none",
        backend.model_id(),
        RunKind::Contamination,
        answers,
        reasked,
    );
    Ok((pass, run))
}

/// Translates stems and options at temperature 0. Keys and the answer key
/// are taken from the source quiz.
pub fn translate_quiz(
    quiz: &Quiz,
    lang: &str,
    backend: &dyn ChatBackend,
    catalog: &PromptCatalog,
) -> Result<Quiz, QaError> {
    let questions = quiz.questions_json();
    let messages = catalog.render(
        "quiz_translate",
        &[("lang", lang), ("questions", &questions)],
    )?;
    let req = ChatRequest::new("quiz_translate", messages)
        .with_payload(questions)
        .with_temperature(QUIZ_TRANSLATION_TEMPERATURE);
    let reply = backend.complete(&req)?;
    let body = json_object_slice(strip_code_fence(&reply))
        .ok_or_else(|| invalid(Violation::NotAnObject, "no JSON object in reply"))?;
    let v: Value =
        serde_json::from_str(body).map_err(|e| invalid(Violation::NotAnObject, e.to_string()))?;
    let obj = v
        .as_object()
        .ok_or_else(|| invalid(Violation::NotAnObject, "reply is not an object"))?;
    let want: BTreeSet<String> = quiz.questions.keys().map(usize::to_string).collect();
    let got: BTreeSet<String> = obj.keys().map(|k| k.trim().to_owned()).collect();
    if want != got {
        let missing: Vec<_> = want.difference(&got).cloned().collect();
        let extra: Vec<_> = got.difference(&want).cloned().collect();
        return Err(invalid(
            Violation::KeyMismatch,
            format!("missing keys {missing:?}, unexpected keys {extra:?}"),
        ));
    }
    let mut out = Quiz {
        article_id: quiz.article_id.clone(),
        language: lang.into(),
        questions: BTreeMap::new(),
    };
    for (k, val) in obj {
        let number: usize = k.trim().parse().expect("checked above");
        let src = &quiz.questions[&number];
        let mut q = val
            .as_object()
            .ok_or_else(|| invalid(Violation::NotAnObject, format!("question {number}")))?
            .clone();
        q.insert("answer".into(), Value::String(src.correct.to_string()));
        let mut parsed = parse_question(number, &q)?;
        parsed.correct = src.correct;
        out.questions.insert(number, parsed);
    }
    out.validate(Some(quiz.len()))?;
    Ok(out)
}

/// Has the model read `article` and answer the quiz. `article_language` is
/// the language named in the prompt; `None` means the untranslated original.
pub fn run_quiz(
    quiz: &Quiz,
    article: &str,
    article_language: Option<&str>,
    backend: &dyn ChatBackend,
    catalog: &PromptCatalog,
) -> Result<QuizRun, QaError> {
    quiz.validate(None)?;
    let questions = quiz.questions_json();
    let (template, messages) = match article_language {
        Some(lang) => (
            "quiz_execute",
            catalog.render(
                "quiz_execute",
                &[
                    ("lang", lang),
                    ("article", article),
                    ("questions", &questions),
                ],
            )?,
        ),
        None => (
            "quiz_execute_original",
            catalog.render(
                "quiz_execute_original",
                &[("article", article), ("questions", &questions)],
            )?,
        ),
    };
    let (answers, reasked) = ask_answers(quiz, messages, template, backend, catalog)?;
    Ok(QuizRun::new(
        quiz,
        article_language.unwrap_or("English"),
        backend.model_id(),
        RunKind::Execution,
        answers,
        reasked,
    ))
}

/// One graded (article, language, backend) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub article: String,
    pub language: String,
    pub backend: String,
    /// The untranslated-article reference row.
    pub baseline: bool,
    pub score: f64,
    pub n: usize,
    /// Numbers of questions answered incorrectly.
    pub incorrect: Vec<usize>,
}

impl Cell {
    pub fn from_run(run: &QuizRun, backend: &str, baseline: bool) -> Self {
        Cell {
            article: run.article_id.clone(),
            language: run.language.clone(),
            backend: backend.into(),
            baseline,
            score: run.score,
            n: run.n,
            incorrect: run
                .verdicts
                .iter()
                .filter(|(_, ok)| !**ok)
                .map(|(k, _)| *k)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub per_article: BTreeMap<String, f64>,
    pub average: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionErrors {
    pub article: String,
    pub question: usize,
    pub incorrect: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub cells: Vec<Cell>,
    pub per_language: BTreeMap<String, f64>,
    pub per_article: BTreeMap<String, f64>,
    pub per_backend: BTreeMap<String, f64>,
    pub per_backend_language: BTreeMap<String, BTreeMap<String, f64>>,
    /// Mean over translated cells.
    pub overall_average: f64,
    /// Mean over all cells, baseline included.
    pub overall_with_baseline: f64,
    pub baseline: Option<BaselineRow>,
    pub question_errors: Vec<QuestionErrors>,
    pub total_incorrect: usize,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn group_mean<'a>(
    cells: impl Iterator<Item = &'a Cell>,
    key: impl Fn(&Cell) -> String,
) -> BTreeMap<String, f64> {
    let mut m: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for c in cells {
        m.entry(key(c)).or_default().push(c.score);
    }
    m.into_iter().map(|(k, v)| (k, mean(v))).collect()
}

pub fn aggregate(cells: &[Cell]) -> Result<BenchReport, QaError> {
    if cells.is_empty() {
        return Err(QaError::EmptyRunSet);
    }
    let translated = || cells.iter().filter(|c| !c.baseline);
    let base: Vec<&Cell> = cells.iter().filter(|c| c.baseline).collect();
    let mut per_backend_language: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (k, v) in group_mean(translated(), |c| {
        format!("{}\u{0}{}", c.backend, c.language)
    }) {
        let (b, l) = k.split_once('\u{0}').expect("separator");
        per_backend_language
            .entry(b.into())
            .or_default()
            .insert(l.into(), v);
    }
    let mut errors: BTreeMap<(String, usize), usize> = BTreeMap::new();
    for c in cells {
        for q in &c.incorrect {
            *errors.entry((c.article.clone(), *q)).or_default() += 1;
        }
    }
    let mut sorted = cells.to_vec();
    sorted.sort_by(|a, b| {
        (a.baseline, &a.backend, &a.language, &a.article).cmp(&(
            b.baseline,
            &b.backend,
            &b.language,
            &b.article,
        ))
    });
    Ok(BenchReport {
        per_language: group_mean(translated(), |c| c.language.clone()),
        per_article: group_mean(translated(), |c| c.article.clone()),
        per_backend: group_mean(translated(), |c| c.backend.clone()),
        per_backend_language,
        overall_average: mean(translated().map(|c| c.score)),
        overall_with_baseline: mean(cells.iter().map(|c| c.score)),
        baseline: (!base.is_empty()).then(|| BaselineRow {
            per_article: group_mean(base.iter().copied(), |c| c.article.clone()),
            average: mean(base.iter().map(|c| c.score)),
        }),
        total_incorrect: errors.values().sum(),
        question_errors: errors
            .into_iter()
            .map(|((article, question), incorrect)| QuestionErrors {
                article,
                question,
                incorrect,
            })
            .collect(),
        cells: sorted,
    })
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per (backend, language) with article columns and the row
    /// average; the baseline is the last row. Scores are fractions.
    pub fn to_csv(&self) -> String {
        let articles: BTreeSet<&str> = self.cells.iter().map(|c| c.article.as_str()).collect();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["backend".to_string(), "language".to_string()];
        header.extend(articles.iter().map(|a| a.to_string()));
        header.push("average".into());
        w.write_record(&header).expect("in-memory write");
        let mut rows: BTreeMap<(bool, &str, &str), BTreeMap<&str, f64>> = BTreeMap::new();
        for c in &self.cells {
            rows.entry((c.baseline, &c.backend, &c.language))
                .or_default()
                .insert(&c.article, c.score);
        }
        for ((baseline, backend, language), scores) in rows {
            let mut rec = vec![
                backend.to_string(),
                if baseline {
                    format!("{language} (baseline)")
                } else {
                    language.to_string()
                },
            ];
            for a in &articles {
                rec.push(scores.get(a).map(|s| format!("{s:.4}")).unwrap_or_default());
            }
            rec.push(format!("{:.4}", mean(scores.values().copied())));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Reads a score table with columns `article, language, backend, correct,
/// total, wrong_questions` (semicolon-separated numbers). Rows whose backend
/// is `original` are baseline cells.
pub fn cells_from_csv(text: &str) -> Result<Vec<Cell>, String> {
    #[derive(Deserialize)]
    struct Row {
        article: String,
        language: String,
        backend: String,
        correct: usize,
        total: usize,
        #[serde(default)]
        wrong_questions: String,
    }
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| format!("row {}: {e}", i + 1))?;
        if row.total == 0 || row.correct > row.total {
            return Err(format!("row {}: bad counts", i + 1));
        }
        let incorrect = row
            .wrong_questions
            .split(';')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| format!("row {}: bad question `{s}`", i + 1))
            })
            .collect::<Result<Vec<usize>, _>>()?;
        out.push(Cell {
            baseline: row.backend == "original",
            article: row.article,
            language: row.language,
            backend: row.backend,
            score: row.correct as f64 / row.total as f64,
            n: row.total,
            incorrect,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::mock::{self, synth_quiz, AnswerScript, MockSpec};

    fn quiz(n: usize) -> Quiz {
        Quiz::from_json(
            "a1",
            "English",
            &synth_quiz("article", n).to_string(),
            Some(n),
        )
        .unwrap()
    }

    fn with(f: impl FnOnce(&mut Value)) -> String {
        let mut v = synth_quiz("x", 5);
        f(&mut v);
        v.to_string()
    }

    fn violation(text: &str) -> Violation {
        match Quiz::from_json("a", "English", text, Some(5)) {
            Err(QaError::InvalidQuizPayload { violation, .. }) => violation,
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn valid_payload_round_trips() {
        let q = quiz(50);
        assert_eq!(q.len(), 50);
        let again = Quiz::from_json("a1", "English", &q.to_json(), Some(50)).unwrap();
        assert_eq!(again, q);
    }

    #[test]
    fn named_violations() {
        assert_eq!(
            violation(&with(|v| {
                v["2"]["options"].as_array_mut().unwrap().pop();
            })),
            Violation::OptionsCount
        );
        assert_eq!(
            violation(&with(|v| {
                v["3"].as_object_mut().unwrap().remove("answer");
            })),
            Violation::MissingAnswer
        );
        assert_eq!(
            violation(&with(|v| v["1"]["answer"] = "G".into())),
            Violation::InvalidAnswerLabel
        );
        assert_eq!(
            violation(&with(|v| v["1"]["answer"] = "F".into())),
            Violation::CorrectIsIdk
        );
        assert_eq!(
            violation(&with(|v| v["1"]["answer"] = IDK.into())),
            Violation::CorrectIsIdk
        );
        assert_eq!(
            violation(&with(|v| v["2"]["question"] = v["1"]["question"].clone())),
            Violation::DuplicateStem
        );
        assert_eq!(
            violation(&with(|v| {
                let q = v.as_object_mut().unwrap().remove("5").unwrap();
                v.as_object_mut().unwrap().insert("6".into(), q);
            })),
            Violation::NonContiguousKeys
        );
        assert_eq!(
            violation(&with(|v| {
                let q = v.as_object_mut().unwrap().remove("5").unwrap();
                v.as_object_mut().unwrap().insert("five".into(), q);
            })),
            Violation::NonNumericKey
        );
        assert_eq!(
            violation(&with(|v| v["4"]["question"] = " ".into())),
            Violation::EmptyStem
        );
        assert_eq!(violation("[1, 2]"), Violation::NotAnObject);
        assert_eq!(
            violation(&with(|v| v["1"]["options"][5] = "None of these".into())),
            Violation::IdkOptionMissing
        );
        assert_eq!(
            violation(&with(|v| {
                v.as_object_mut().unwrap().remove("5");
            })),
            Violation::WrongQuestionCount
        );
    }

    #[test]
    fn lenient_field_names() {
        let text = r#"```json
{"questions": {"1": {"stem": "Why?", "choices": {"A": "a", "B": "b", "C": "c", "D": "d", "E": "e", "F": "I don't know"}, "correct_answer": "B) b"}}}
```"#;
        let q = Quiz::from_json("a", "English", text, Some(1)).unwrap();
        assert_eq!(q.questions[&1].correct, 'B');
        assert_eq!(q.questions[&1].options[5], IDK);
    }

    #[test]
    fn answer_parsing() {
        assert_eq!(Answer::parse("b", None), Answer::Letter('B'));
        assert_eq!(Answer::parse("C) 35%", None), Answer::Letter('C'));
        assert_eq!(Answer::parse("F", None), Answer::Invalid);
        assert_eq!(Answer::parse("I don’t know", None), Answer::DontKnow);
        assert_eq!(
            Answer::parse("모르겠습니다", Some("모르겠습니다")),
            Answer::DontKnow
        );
        assert_eq!(Answer::parse("maybe", None), Answer::Invalid);
    }

    #[test]
    fn grading_basics() {
        let q = quiz(50);
        let key = q.answer_key();
        let mut answers: BTreeMap<usize, Answer> =
            key.iter().map(|(k, c)| (*k, Answer::Letter(*c))).collect();
        assert_eq!(grade(&answers, &q).score, 1.0);
        for k in [3, 9] {
            answers.insert(k, Answer::DontKnow);
        }
        assert_eq!(grade(&answers, &q).score, 0.96);
        let idk: BTreeMap<usize, Answer> = key.keys().map(|k| (*k, Answer::DontKnow)).collect();
        assert_eq!(grade(&idk, &q).score, 0.0);
    }

    fn oracle() -> mock::MockBackend {
        mock::backend(&MockSpec::Identity {
            answers: AnswerScript::oracle(),
        })
        .unwrap()
    }

    #[test]
    fn generate_and_run_with_oracle() {
        let cat = PromptCatalog::builtin();
        let b = oracle();
        let q = generate_quiz("a1", "Some article.", &b, 50, &cat).unwrap();
        assert_eq!(q.len(), 50);
        let run = run_quiz(&q, "Some article.", Some("Spanish"), &b, &cat).unwrap();
        assert_eq!(run.score, 1.0);
        let (pass, c) = contamination_check(&q, &b, &cat).unwrap();
        assert!(pass);
        assert_eq!(c.score, 0.0);
    }

    #[test]
    fn f_answer_is_invalid() {
        let cat = PromptCatalog::builtin();
        let q = quiz(5);
        let mut answers: BTreeMap<String, String> = q
            .answer_key()
            .iter()
            .map(|(k, c)| (k.to_string(), c.to_string()))
            .collect();
        answers.insert("2".into(), "F".into());
        let b = mock::backend(&MockSpec::Identity {
            answers: AnswerScript {
                answers,
                ..Default::default()
            },
        })
        .unwrap();
        let run = run_quiz(&q, "x", None, &b, &cat).unwrap();
        assert_eq!(run.answers[&2], Answer::Invalid);
        assert_eq!(run.invalid_count, 1);
        assert_eq!(run.score, 0.8);
    }

    #[test]
    fn contamination_needs_all_idk() {
        let cat = PromptCatalog::builtin();
        let q = quiz(5);
        let wrong = if q.questions[&1].correct == 'A' {
            "B"
        } else {
            "A"
        };
        for (answer, pass) in [
            (q.questions[&1].correct.to_string(), false),
            (wrong.to_string(), false),
        ] {
            let b = mock::backend(&MockSpec::Identity {
                answers: AnswerScript {
                    contamination: [("1".to_string(), answer)].into(),
                    ..Default::default()
                },
            })
            .unwrap();
            assert_eq!(contamination_check(&q, &b, &cat).unwrap().0, pass);
        }
    }

    #[test]
    fn quiz_translation_keeps_labels() {
        let cat = PromptCatalog::builtin();
        let q = quiz(10);
        let same = translate_quiz(&q, "French", &oracle(), &cat).unwrap();
        assert_eq!(same.language, "French");
        assert_eq!(same.questions, q.questions);
        let p = mock::backend(&MockSpec::pseudo()).unwrap();
        let t = translate_quiz(&q, "French", &p, &cat).unwrap();
        assert_eq!(t.answer_key(), q.answer_key());
        assert_ne!(t.questions[&1].stem, q.questions[&1].stem);
    }

    #[test]
    fn renamed_keys_are_rejected() {
        let cat = PromptCatalog::builtin();
        let q = quiz(3);
        let dir = tempfile::tempdir().unwrap();
        let bad = q.questions_json().replace("\"3\":", "\"three\":");
        let fx = mock::ScriptFixture {
            by_key: Default::default(),
            in_order: vec![bad],
        };
        std::fs::write(
            dir.path().join("f.json"),
            serde_json::to_string(&fx).unwrap(),
        )
        .unwrap();
        let b = crate::backend::build_backend(
            &crate::backend::BackendConfig::mock(
                "s",
                MockSpec::Scripted {
                    fixture: "f.json".into(),
                    fallback: None,
                },
            ),
            dir.path(),
        )
        .unwrap();
        assert!(matches!(
            translate_quiz(&q, "French", &*b, &cat),
            Err(QaError::InvalidQuizPayload {
                violation: Violation::KeyMismatch,
                ..
            })
        ));
    }

    #[test]
    fn malformed_answers_after_reask() {
        let cat = PromptCatalog::builtin();
        let q = quiz(3);
        let dir = tempfile::tempdir().unwrap();
        let fx = mock::ScriptFixture {
            by_key: Default::default(),
            in_order: vec!["no idea".into(), "still nothing".into()],
        };
        std::fs::write(
            dir.path().join("f.json"),
            serde_json::to_string(&fx).unwrap(),
        )
        .unwrap();
        let b = crate::backend::build_backend(
            &crate::backend::BackendConfig::mock(
                "s",
                MockSpec::Scripted {
                    fixture: "f.json".into(),
                    fallback: None,
                },
            ),
            dir.path(),
        )
        .unwrap();
        assert!(matches!(
            run_quiz(&q, "x", Some("German"), &*b, &cat),
            Err(QaError::AnswerPayloadMalformed(_))
        ));
    }

    #[test]
    fn aggregation_single_and_empty() {
        assert!(matches!(aggregate(&[]), Err(QaError::EmptyRunSet)));
        let c = Cell {
            article: "a".into(),
            language: "Spanish".into(),
            backend: "m".into(),
            baseline: false,
            score: 0.9,
            n: 10,
            incorrect: vec![4],
        };
        let r = aggregate(std::slice::from_ref(&c)).unwrap();
        assert_eq!(r.overall_average, 0.9);
        assert_eq!(r.per_language["Spanish"], 0.9);
        assert_eq!(r.per_article["a"], 0.9);
        assert!(r.baseline.is_none());
        assert!(r.to_csv().starts_with("backend,language,a,average\n"));
    }
}
