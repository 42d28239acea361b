//! Command-line front end: `translate`, `bench` and `validate`.
//!
//! Every command writes into a run directory:
//!
//! ```text
//! <out>/manifest.json
//! <out>/translations/<article>.<tag>.xml            (translate)
//! <out>/translations/<backend>/<article>.<tag>.xml  (bench)
//! <out>/reports/...
//! <out>/quizzes/<article>.<tag>.json
//! <out>/cells/<backend>/<article>.<tag>.json
//! ```
//!
//! Exit codes: 0 success, 2 parse/IO/config error, 3 backend failure,
//! 4 structural validation failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::backend::{
    build_backend, BackendConfig, BackendError, CachedBackend, ChatBackend, CountingBackend,
    PromptCatalog,
};
use crate::jats::{parse, parse_str, JatsDoc};
use crate::lang::{slug, Language};
use crate::qa_bench::{self, aggregate, Cell, QaError, Quiz, QuizRun};
use crate::translator::{
    par_map, translate_document, translate_plain, ContextPolicy, Mode, OneShotExample,
    TranslateError, TranslationJob,
};
use crate::validator::{check_structure, ValidationReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

/// Label of the untranslated-article row in benchmark reports.
pub const BASELINE_BACKEND: &str = "original";

#[derive(Debug, Parser)]
#[command(
    name = "jats-mt",
    version,
    about = "Structure-preserving translation of JATS articles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Jats,
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextArg {
    Full,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionsLang {
    /// Translate the quiz into each article's language.
    Target,
    /// Ask the English questions about the translated article.
    English,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Translate one article.
    Translate {
        article: PathBuf,
        #[arg(long)]
        lang: String,
        #[arg(long, value_enum, default_value_t = ModeArg::Jats)]
        mode: ModeArg,
        /// Terminology example (JSON) prepended to every chunk request.
        #[arg(long)]
        one_shot: Option<PathBuf>,
        /// Backend config (JSON).
        #[arg(long)]
        backend: PathBuf,
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ContextArg::Full)]
        context: ContextArg,
        #[arg(long, default_value_t = crate::chunker::DEFAULT_MAX_PARAGRAPHS)]
        max_paragraphs: usize,
        /// Fail on malformed chunk replies instead of keeping the source.
        #[arg(long)]
        strict: bool,
        /// Response cache directory.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Redo work the manifest already records.
        #[arg(long)]
        force: bool,
    },
    /// Run the QA benchmark over a directory of articles.
    Bench {
        articles: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        langs: Vec<String>,
        /// Backend configs used for translation.
        #[arg(long, value_delimiter = ',', required = true)]
        backends: Vec<PathBuf>,
        /// Backend that writes, translates and answers quizzes; defaults to
        /// the first translation backend.
        #[arg(long)]
        quiz_backend: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = QuestionsLang::Target)]
        questions_lang: QuestionsLang,
        #[arg(long, default_value_t = qa_bench::DEFAULT_QUESTIONS)]
        questions: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        jobs: usize,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        force: bool,
        #[arg(long, default_value_t = crate::chunker::DEFAULT_MAX_PARAGRAPHS)]
        max_paragraphs: usize,
    },
    /// Compare a translation against its source and print the report.
    Validate {
        source: PathBuf,
        translated: PathBuf,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// What a command did: exit code plus calls that reached a backend
/// (cache hits excluded).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub backend_calls: usize,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<BackendError> for Failure {
    fn from(e: BackendError) -> Self {
        let code = match e {
            BackendError::Config(_) | BackendError::FixtureMissing(_) => EXIT_INPUT,
            _ => EXIT_BACKEND,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<TranslateError> for Failure {
    fn from(e: TranslateError) -> Self {
        let code = match e {
            TranslateError::BackendFailure { .. } => EXIT_BACKEND,
            TranslateError::ReassemblyFailure(_) => EXIT_VALIDATION,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<QaError> for Failure {
    fn from(e: QaError) -> Self {
        let code = match e {
            QaError::Prompt(_) | QaError::EmptyRunSet => EXIT_INPUT,
            _ => EXIT_BACKEND,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::input(format!("{}: {e}", path.display()))
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return Outcome {
                code,
                backend_calls: 0,
            };
        }
    };
    execute(cli.command)
}

pub fn execute(command: Command) -> Outcome {
    let counter = CallCounter::default();
    let result = match command {
        Command::Translate {
            article,
            lang,
            mode,
            one_shot,
            backend,
            out,
            context,
            max_paragraphs,
            strict,
            cache,
            force,
        } => cmd_translate(
            TranslateArgs {
                article,
                lang,
                mode,
                one_shot,
                backend,
                out,
                context,
                max_paragraphs,
                strict,
                cache,
                force,
            },
            &counter,
        ),
        Command::Bench {
            articles,
            langs,
            backends,
            quiz_backend,
            questions_lang,
            questions,
            out,
            jobs,
            cache,
            force,
            max_paragraphs,
        } => cmd_bench(
            BenchArgs {
                articles,
                langs,
                backends,
                quiz_backend,
                questions_lang,
                questions,
                out,
                jobs,
                cache,
                force,
                max_paragraphs,
            },
            &counter,
        ),
        Command::Validate {
            source,
            translated,
            out,
        } => cmd_validate(&source, &translated, out.as_deref()),
    };
    let code = match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    };
    Outcome {
        code,
        backend_calls: counter.total(),
    }
}

type Counted = Arc<CountingBackend<Box<dyn ChatBackend>>>;

#[derive(Default)]
struct CallCounter(Mutex<Vec<Counted>>);

impl CallCounter {
    fn total(&self) -> usize {
        self.0
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .iter()
            .map(|c| c.calls())
            .sum()
    }

    /// Builds a backend whose calls are counted below any cache.
    fn build(
        &self,
        path: &Path,
        cache: Option<&Path>,
    ) -> Result<(BackendConfig, Box<dyn ChatBackend>), Failure> {
        let mut cfg = BackendConfig::load(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cache_dir = cache
            .map(Path::to_path_buf)
            .or_else(|| cfg.cache_dir.as_ref().map(|d| base.join(d)));
        cfg.cache_dir = None;
        let counted = Arc::new(CountingBackend::new(build_backend(&cfg, base)?));
        self.0
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(counted.clone());
        let backend: Box<dyn ChatBackend> = match cache_dir {
            Some(d) => Box::new(CachedBackend::new(Box::new(counted), d)?),
            None => Box::new(counted),
        };
        Ok((cfg, backend))
    }
}

/// Writes through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!(
        "tmp.{}.{:?}",
        std::process::id(),
        std::thread::current().id()
    ));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub key: String,
    pub kind: String,
    /// Run-directory-relative paths written for this entry.
    pub files: Vec<String>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSnapshot {
    pub name: String,
    pub model: String,
    pub kind: String,
}

impl BackendSnapshot {
    fn of(cfg: &BackendConfig) -> Self {
        BackendSnapshot {
            name: cfg.name.clone(),
            model: cfg.model.clone(),
            kind: if cfg.mock.is_some() { "mock" } else { "http" }.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub command: String,
    pub backends: Vec<BackendSnapshot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quiz_backend: Option<BackendSnapshot>,
    pub languages: Vec<String>,
    pub articles: Vec<String>,
    pub mode: ModeArg,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub questions_lang: Option<QuestionsLang>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub questions: Option<usize>,
    pub prompt_catalog: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub created_at: String,
    pub config: ConfigSnapshot,
    /// Append-only; the last entry for a key wins.
    pub ledger: Vec<LedgerEntry>,
}

impl RunManifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn load(dir: &Path) -> Result<Option<Self>, String> {
        let p = dir.join(Self::FILE);
        match std::fs::read_to_string(&p) {
            Ok(t) => serde_json::from_str(&t)
                .map(Some)
                .map_err(|e| format!("{}: {e}", p.display())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(format!("{}: {e}", p.display())),
        }
    }

    pub fn latest(&self, key: &str) -> Option<&LedgerEntry> {
        self.ledger.iter().rev().find(|e| e.key == key)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

/// Manifest shared between workers; saved after every append.
struct Ledger {
    dir: PathBuf,
    manifest: Mutex<RunManifest>,
}

impl Ledger {
    fn open(dir: &Path, config: ConfigSnapshot) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let manifest = match RunManifest::load(dir).map_err(Failure::input)? {
            Some(mut m) => {
                if m.config.command != config.command {
                    return Err(Failure::input(format!(
                        "{} holds a `{}` run, not `{}`",
                        dir.display(),
                        m.config.command,
                        config.command
                    )));
                }
                if m.config != config {
                    m.config = config;
                }
                m
            }
            None => {
                let now = chrono::Utc::now();
                RunManifest {
                    run_id: format!("run-{}", now.format("%Y%m%dT%H%M%S%.3fZ")),
                    created_at: now.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                    config,
                    ledger: Vec::new(),
                }
            }
        };
        let l = Ledger {
            dir: dir.to_path_buf(),
            manifest: Mutex::new(manifest),
        };
        l.save_if_changed()?;
        Ok(l)
    }

    fn latest(&self, key: &str) -> Option<LedgerEntry> {
        self.manifest
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .latest(key)
            .cloned()
    }

    /// Done and not forced: the recorded entry.
    fn done(&self, key: &str, force: bool) -> Option<LedgerEntry> {
        if force {
            None
        } else {
            self.latest(key)
        }
    }

    fn append(&self, entry: LedgerEntry) -> Result<(), Failure> {
        let mut m = self.manifest.lock().unwrap_or_else(|e| e.into_inner());
        m.ledger.push(entry);
        let p = self.dir.join(RunManifest::FILE);
        write_atomic(&p, m.to_json().as_bytes()).map_err(|e| io_err(&p, e))
    }

    fn save_if_changed(&self) -> Result<(), Failure> {
        let m = self.manifest.lock().unwrap_or_else(|e| e.into_inner());
        let p = self.dir.join(RunManifest::FILE);
        let text = m.to_json();
        if std::fs::read_to_string(&p).ok().as_deref() != Some(text.as_str()) {
            write_atomic(&p, text.as_bytes()).map_err(|e| io_err(&p, e))?;
        }
        Ok(())
    }

    fn write(&self, rel: &str, contents: &str) -> Result<(), Failure> {
        let p = self.dir.join(rel);
        write_atomic(&p, contents.as_bytes()).map_err(|e| io_err(&p, e))
    }

    fn read(&self, rel: &str) -> Result<String, Failure> {
        let p = self.dir.join(rel);
        std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))
    }
}

fn article_id(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "article".into());
    let s: String = stem
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '-'
            }
        })
        .collect();
    if s.is_empty() {
        "article".into()
    } else {
        s
    }
}

fn load_doc(path: &Path) -> Result<JatsDoc, Failure> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    parse(&bytes)
        .map(|d| d.with_source_id(article_id(path)))
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

struct TranslateArgs {
    article: PathBuf,
    lang: String,
    mode: ModeArg,
    one_shot: Option<PathBuf>,
    backend: PathBuf,
    out: PathBuf,
    context: ContextArg,
    max_paragraphs: usize,
    strict: bool,
    cache: Option<PathBuf>,
    force: bool,
}

fn build_job(
    lang: &Language,
    mode: ModeArg,
    context: ContextArg,
    max_paragraphs: usize,
    one_shot: Option<&Path>,
) -> Result<TranslationJob, Failure> {
    let mut job = TranslationJob::new(lang.name.clone())
        .with_mode(match mode {
            ModeArg::Jats => Mode::Jats,
            ModeArg::Plain => Mode::Plain,
        })
        .with_context(match context {
            ContextArg::Full => ContextPolicy::FullDocument,
            ContextArg::None => ContextPolicy::None,
        })
        .with_max_paragraphs(max_paragraphs);
    if let Some(p) = one_shot {
        job = job.with_one_shot(OneShotExample::load(p)?);
    }
    Ok(job)
}

fn cmd_translate(a: TranslateArgs, counter: &CallCounter) -> Result<i32, Failure> {
    let lang = Language::resolve(&a.lang);
    let mut job = build_job(
        &lang,
        a.mode,
        a.context,
        a.max_paragraphs,
        a.one_shot.as_deref(),
    )?;
    job.strict = a.strict;
    if !a.article.exists() {
        return Err(Failure::input(format!(
            "{}: no such file",
            a.article.display()
        )));
    }
    let (cfg, backend) = counter.build(&a.backend, a.cache.as_deref())?;
    let id = article_id(&a.article);
    let ledger = Ledger::open(
        &a.out,
        ConfigSnapshot {
            command: "translate".into(),
            backends: vec![BackendSnapshot::of(&cfg)],
            quiz_backend: None,
            languages: vec![lang.name.clone()],
            articles: vec![id.clone()],
            mode: a.mode,
            questions_lang: None,
            questions: None,
            prompt_catalog: job.catalog.hash().to_owned(),
        },
    )?;
    let key = format!("translation:{id}:{}", lang.tag);
    if let Some(done) = ledger.done(&key, a.force) {
        eprintln!("{key} already done; use --force to redo");
        return Ok(if done.ok { EXIT_OK } else { EXIT_VALIDATION });
    }
    match a.mode {
        ModeArg::Plain => {
            let text = std::fs::read_to_string(&a.article).map_err(|e| io_err(&a.article, e))?;
            let out = translate_plain(&text, &job, &backend)?;
            let rel = format!("translations/{id}.{}.txt", lang.tag);
            ledger.write(&rel, &out)?;
            ledger.append(LedgerEntry {
                key,
                kind: "translation".into(),
                files: vec![rel],
                ok: true,
                detail: None,
            })?;
            Ok(EXIT_OK)
        }
        ModeArg::Jats => {
            let source = load_doc(&a.article)?;
            let tdoc = translate_document(&source, &job, &backend)?;
            let report = tdoc.validate(&source);
            let files = vec![
                format!("translations/{id}.{}.xml", lang.tag),
                format!("reports/{id}.{}.validation.json", lang.tag),
                format!("reports/{id}.{}.provenance.json", lang.tag),
            ];
            ledger.write(&files[0], &tdoc.xml)?;
            ledger.write(&files[1], &report.to_json())?;
            ledger.write(&files[2], &tdoc.provenance_json())?;
            println!("{}", report.to_json());
            let ok = report.is_clean();
            ledger.append(LedgerEntry {
                key,
                kind: "translation".into(),
                files,
                ok,
                detail: (!ok).then(|| "structural-error".to_string()),
            })?;
            Ok(if ok { EXIT_OK } else { EXIT_VALIDATION })
        }
    }
}

fn cmd_validate(source: &Path, translated: &Path, out: Option<&Path>) -> Result<i32, Failure> {
    let s = load_doc(source)?;
    let t = load_doc(translated)?;
    let report: ValidationReport = check_structure(&s, &t);
    let json = report.to_json();
    println!("{json}");
    if let Some(p) = out {
        write_atomic(p, json.as_bytes()).map_err(|e| io_err(p, e))?;
    }
    Ok(if report.is_clean() {
        EXIT_OK
    } else {
        EXIT_VALIDATION
    })
}

struct BenchArgs {
    articles: PathBuf,
    langs: Vec<String>,
    backends: Vec<PathBuf>,
    quiz_backend: Option<PathBuf>,
    questions_lang: QuestionsLang,
    questions: usize,
    out: PathBuf,
    jobs: usize,
    cache: Option<PathBuf>,
    force: bool,
    max_paragraphs: usize,
}

/// Stored result of one benchmark cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub cell: Cell,
    pub validation_clean: Option<bool>,
    pub run: QuizRun,
}

fn list_articles(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "xml"))
        .collect();
    v.sort();
    if v.is_empty() {
        return Err(Failure::input(format!(
            "{}: no .xml articles",
            dir.display()
        )));
    }
    Ok(v)
}

struct Bench<'a> {
    args: &'a BenchArgs,
    ledger: Ledger,
    catalog: PromptCatalog,
    quiz_backend: &'a dyn ChatBackend,
    errors: Mutex<Vec<Failure>>,
}

impl Bench<'_> {
    fn fail(&self, context: &str, f: Failure) {
        eprintln!("error: {context}: {}", f.message);
        self.errors
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(f);
    }

    /// Quiz and contamination check for one article. `None` when excluded.
    fn prepare_quiz(&self, id: &str, doc: &JatsDoc) -> Result<Option<Quiz>, Failure> {
        let rel = format!("quizzes/{id}.en.json");
        let key = format!("quiz:{id}");
        let quiz = match self.ledger.done(&key, self.args.force) {
            Some(e) if !e.ok => return Ok(None),
            Some(_) => Quiz::from_json(
                id,
                "English",
                &self.ledger.read(&rel)?,
                Some(self.args.questions),
            )
            .map_err(|e| Failure::input(format!("{rel}: {e}")))?,
            None => match qa_bench::generate_quiz(
                id,
                &doc.plain_text(),
                self.quiz_backend,
                self.args.questions,
                &self.catalog,
            ) {
                Ok(q) => {
                    self.ledger.write(&rel, &q.to_json())?;
                    self.ledger.append(LedgerEntry {
                        key,
                        kind: "quiz".into(),
                        files: vec![rel],
                        ok: true,
                        detail: None,
                    })?;
                    q
                }
                Err(e @ QaError::InvalidQuizPayload { .. }) => {
                    self.ledger.append(LedgerEntry {
                        key,
                        kind: "quiz".into(),
                        files: vec![],
                        ok: false,
                        detail: Some(e.to_string()),
                    })?;
                    return Ok(None);
                }
                Err(e) => return Err(e.into()),
            },
        };
        let key = format!("contamination:{id}");
        let pass = match self.ledger.done(&key, self.args.force) {
            Some(e) => e.ok,
            None => {
                let (pass, run) =
                    qa_bench::contamination_check(&quiz, self.quiz_backend, &self.catalog)?;
                let rel = format!("quizzes/{id}.contamination.json");
                self.ledger.write(
                    &rel,
                    &serde_json::to_string_pretty(&run).expect("run serializes"),
                )?;
                self.ledger.append(LedgerEntry {
                    key,
                    kind: "contamination".into(),
                    files: vec![rel],
                    ok: pass,
                    detail: (!pass).then(|| {
                        format!(
                            "answered {} of {} questions without the article",
                            run.n - run.idk_count,
                            run.n
                        )
                    }),
                })?;
                pass
            }
        };
        Ok(pass.then_some(quiz))
    }

    fn quiz_in(&self, quiz: &Quiz, lang: &Language) -> Result<Quiz, Failure> {
        if self.args.questions_lang == QuestionsLang::English || lang.is_english() {
            return Ok(quiz.clone());
        }
        let id = &quiz.article_id;
        let rel = format!("quizzes/{id}.{}.json", lang.tag);
        let key = format!("quiz-translation:{id}:{}", lang.tag);
        if self.ledger.done(&key, self.args.force).is_some() {
            let text = self.ledger.read(&rel)?;
            return Quiz::from_json(id, &lang.name, &text, Some(quiz.len()))
                .map_err(|e| Failure::input(format!("{rel}: {e}")));
        }
        let t = qa_bench::translate_quiz(quiz, &lang.name, self.quiz_backend, &self.catalog)?;
        self.ledger.write(&rel, &t.to_json())?;
        self.ledger.append(LedgerEntry {
            key,
            kind: "quiz-translation".into(),
            files: vec![rel],
            ok: true,
            detail: None,
        })?;
        Ok(t)
    }

    fn run_cell(
        &self,
        id: &str,
        source: &JatsDoc,
        quiz: &Quiz,
        lang: &Language,
        backend: Option<(&BackendConfig, &dyn ChatBackend)>,
    ) -> Result<(), Failure> {
        let bname = backend
            .map(|(c, _)| slug(&c.name))
            .unwrap_or_else(|| BASELINE_BACKEND.into());
        let key = format!("cell:{bname}:{id}:{}", lang.tag);
        if self.ledger.done(&key, self.args.force).is_some() {
            return Ok(());
        }
        let mut files = Vec::new();
        let (text, validation_clean) = match backend {
            None => (source.plain_text(), None),
            Some((_, b)) => {
                let job = build_job(
                    lang,
                    ModeArg::Jats,
                    ContextArg::Full,
                    self.args.max_paragraphs,
                    None,
                )?;
                let tdoc = translate_document(source, &job, b)?;
                let report = tdoc.validate(source);
                let tr = format!("translations/{bname}/{id}.{}.xml", lang.tag);
                let rep = format!("reports/{bname}/{id}.{}.validation.json", lang.tag);
                let prov = format!("reports/{bname}/{id}.{}.provenance.json", lang.tag);
                self.ledger.write(&tr, &tdoc.xml)?;
                self.ledger.write(&rep, &report.to_json())?;
                self.ledger.write(&prov, &tdoc.provenance_json())?;
                files.extend([tr, rep, prov]);
                (tdoc.doc.plain_text(), Some(report.is_clean()))
            }
        };
        let quiz = self.quiz_in(quiz, lang)?;
        let article_lang = backend.map(|_| lang.name.as_str());
        let run = match qa_bench::run_quiz(
            &quiz,
            &text,
            article_lang,
            self.quiz_backend,
            &self.catalog,
        ) {
            Ok(r) => r,
            Err(QaError::AnswerPayloadMalformed(m)) => {
                eprintln!("warning: {key}: unreadable answers ({m}); scored as all invalid");
                QuizRun::all_invalid(
                    &quiz,
                    article_lang.unwrap_or("English"),
                    self.quiz_backend.model_id(),
                )
            }
            Err(e) => return Err(e.into()),
        };
        let record = CellRecord {
            cell: Cell::from_run(&run, &bname, backend.is_none()),
            validation_clean,
            run,
        };
        let rel = format!("cells/{bname}/{id}.{}.json", lang.tag);
        self.ledger.write(
            &rel,
            &serde_json::to_string_pretty(&record).expect("cell serializes"),
        )?;
        files.push(rel);
        self.ledger.append(LedgerEntry {
            key,
            kind: "cell".into(),
            files,
            ok: true,
            detail: None,
        })
    }
}

fn cmd_bench(a: BenchArgs, counter: &CallCounter) -> Result<i32, Failure> {
    if a.questions == 0 {
        return Err(Failure::input("--questions must be >= 1"));
    }
    let paths = list_articles(&a.articles)?;
    let mut docs = Vec::new();
    for p in &paths {
        docs.push((article_id(p), load_doc(p)?));
    }
    let langs: Vec<Language> = a.langs.iter().map(|l| Language::resolve(l)).collect();
    let mut backends = Vec::new();
    for p in &a.backends {
        backends.push(counter.build(p, a.cache.as_deref())?);
    }
    let mut names = std::collections::BTreeSet::new();
    for (c, _) in &backends {
        let n = slug(&c.name);
        if n == BASELINE_BACKEND || !names.insert(n.clone()) {
            return Err(Failure::input(format!(
                "backend name `{}` is reserved or repeated",
                c.name
            )));
        }
    }
    let separate_quiz = match &a.quiz_backend {
        Some(p) => Some(counter.build(p, a.cache.as_deref())?),
        None => None,
    };
    let (quiz_cfg, quiz_backend): (&BackendConfig, &dyn ChatBackend) = match &separate_quiz {
        Some((c, b)) => (c, b.as_ref()),
        None => (&backends[0].0, backends[0].1.as_ref()),
    };
    let catalog = PromptCatalog::builtin();
    let ledger = Ledger::open(
        &a.out,
        ConfigSnapshot {
            command: "bench".into(),
            backends: backends
                .iter()
                .map(|(c, _)| BackendSnapshot::of(c))
                .collect(),
            quiz_backend: Some(BackendSnapshot::of(quiz_cfg)),
            languages: langs.iter().map(|l| l.name.clone()).collect(),
            articles: docs.iter().map(|(id, _)| id.clone()).collect(),
            mode: ModeArg::Jats,
            questions_lang: Some(a.questions_lang),
            questions: Some(a.questions),
            prompt_catalog: catalog.hash().to_owned(),
        },
    )?;
    let bench = Bench {
        args: &a,
        ledger,
        catalog,
        quiz_backend,
        errors: Mutex::new(Vec::new()),
    };

    let quizzes = par_map(docs.len(), a.jobs, |i| {
        let (id, doc) = &docs[i];
        bench.prepare_quiz(id, doc).unwrap_or_else(|f| {
            bench.fail(&format!("quiz for {id}"), f);
            None
        })
    });
    for ((id, _), q) in docs.iter().zip(&quizzes) {
        if q.is_none() {
            let reason = bench
                .ledger
                .latest(&format!("contamination:{id}"))
                .or_else(|| bench.ledger.latest(&format!("quiz:{id}")))
                .and_then(|e| e.detail)
                .unwrap_or_else(|| "quiz unavailable".into());
            eprintln!("excluded {id}: {reason}");
        }
    }

    // (article, language, backend index or baseline)
    let mut cells: Vec<(usize, Option<usize>, Option<usize>)> = Vec::new();
    for (ai, q) in quizzes.iter().enumerate() {
        if q.is_none() {
            continue;
        }
        cells.push((ai, None, None));
        for li in 0..langs.len() {
            for bi in 0..backends.len() {
                cells.push((ai, Some(li), Some(bi)));
            }
        }
    }
    // quiz translations first, so cells sharing one never race on it
    let pairs: Vec<(usize, usize)> = cells
        .iter()
        .filter_map(|(ai, li, _)| li.map(|l| (*ai, l)))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    par_map(pairs.len(), a.jobs, |i| {
        let (ai, li) = pairs[i];
        let quiz = quizzes[ai].as_ref().expect("included article");
        if let Err(f) = bench.quiz_in(quiz, &langs[li]) {
            bench.fail(
                &format!("quiz translation {}/{}", docs[ai].0, langs[li].tag),
                f,
            );
        }
    });
    let english = Language::english();
    par_map(cells.len(), a.jobs, |i| {
        let (ai, li, bi) = cells[i];
        let (id, doc) = &docs[ai];
        let quiz = quizzes[ai].as_ref().expect("included article");
        let lang = li.map(|l| &langs[l]).unwrap_or(&english);
        let backend = bi.map(|b| (&backends[b].0, backends[b].1.as_ref()));
        if let Err(f) = bench.run_cell(id, doc, quiz, lang, backend) {
            bench.fail(&format!("cell {id}/{}", lang.tag), f);
        }
    });

    let mut cell_results = Vec::new();
    let m = bench
        .ledger
        .manifest
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .clone();
    let mut latest: BTreeMap<&str, &LedgerEntry> = BTreeMap::new();
    for e in &m.ledger {
        latest.insert(&e.key, e);
    }
    for e in latest.values().filter(|e| e.kind == "cell") {
        let rel = e.files.last().expect("cell entries list their record");
        let rec: CellRecord = serde_json::from_str(&bench.ledger.read(rel)?)
            .map_err(|err| Failure::input(format!("{rel}: {err}")))?;
        cell_results.push(rec.cell);
    }
    let errors = bench.errors.into_inner().unwrap_or_else(|e| e.into_inner());
    if cell_results.is_empty() {
        return Err(errors
            .into_iter()
            .next()
            .unwrap_or_else(|| QaError::EmptyRunSet.into()));
    }
    let report = aggregate(&cell_results)?;
    let (json_rel, csv_rel) = ("reports/bench.json", "reports/bench.csv");
    bench.ledger.write(json_rel, &report.to_json())?;
    bench.ledger.write(csv_rel, &report.to_csv())?;
    if bench.ledger.latest("report:bench").is_none() {
        bench.ledger.append(LedgerEntry {
            key: "report:bench".into(),
            kind: "report".into(),
            files: vec![json_rel.into(), csv_rel.into()],
            ok: true,
            detail: None,
        })?;
    }
    println!(
        "cells: {}  overall: {:.4}  with baseline: {:.4}",
        report.cells.len(),
        report.overall_average,
        report.overall_with_baseline
    );
    Ok(match errors.iter().map(|f| f.code).max() {
        Some(code) => code,
        None => EXIT_OK,
    })
}

/// Parses an XML string as a named document; used by tests and examples.
pub fn doc_from_str(id: &str, xml: &str) -> Result<JatsDoc, String> {
    parse_str(xml)
        .map(|d| d.with_source_id(id))
        .map_err(|e| e.to_string())
}
