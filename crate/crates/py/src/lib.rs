//! Python bindings: segmentation, sentiment scoring, entity resolution,
//! PRF scoring and a store handle that ingests text and answers searches.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Mutex;

use chrono::{DateTime, NaiveDate, Utc};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;

use qc_core::analytics::{self, MatchMode};
use qc_core::ingest::Analyzer;
use qc_core::ner::EntityMention;
use qc_core::resolve::{self as res, AbbreviationCorpus, MergePolicy};
use qc_core::segment::{segment_article, AbbreviationGuard};
use qc_core::sentiment::{self, SentimentLexicon, SentimentScore, SentimentTool};
use qc_core::store::{self as st, QueryFilter};
use qc_core::{Article, Category, ScopeKind, Span};

create_exception!(qc, QcError, PyException);

fn qc_err(e: impl std::fmt::Display) -> PyErr {
    QcError::new_err(e.to_string())
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    match v {
        Value::Null => Ok(py.None().into_bound(py)),
        Value::Bool(b) => b.into_bound_py_any(py),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_bound_py_any(py),
            None => n.as_f64().unwrap_or(f64::NAN).into_bound_py_any(py),
        },
        Value::String(s) => s.into_bound_py_any(py),
        Value::Array(xs) => {
            let list = PyList::empty(py);
            for x in xs {
                list.append(to_py(py, x)?)?;
            }
            Ok(list.into_any())
        }
        Value::Object(map) => {
            let d = PyDict::new(py);
            for (k, x) in map {
                d.set_item(k, to_py(py, x)?)?;
            }
            Ok(d.into_any())
        }
    }
}

fn ser<'py, T: serde::Serialize>(py: Python<'py>, x: &T) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(x).map_err(qc_err)?)
}

fn category(s: &str) -> PyResult<Category> {
    s.parse().map_err(value_err)
}

fn score_dict<'py>(py: Python<'py>, s: &SentimentScore) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("scope", s.scope.kind().as_str())?;
    d.set_item("paragraph", s.scope.paragraph_index())?;
    d.set_item("sentence", s.scope.sentence_index())?;
    d.set_item("compound", s.compound)?;
    d.set_item("five_class", s.five_class)?;
    d.set_item("tool", &s.tool)?;
    Ok(d)
}

/// Sentences of each paragraph, as text.
#[pyfunction]
fn segment(paragraphs: Vec<String>) -> Vec<Vec<String>> {
    let seg = segment_article("", &paragraphs, &AbbreviationGuard::bundled());
    seg.paragraphs.into_iter().map(|p| p.sentences.into_iter().map(|s| s.text).collect()).collect()
}

/// Article, paragraph and sentence scores for one tool.
#[pyfunction]
#[pyo3(signature = (paragraphs, tool = "lexrule-1"))]
fn score<'py>(py: Python<'py>, paragraphs: Vec<String>, tool: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let tool = SentimentTool::builtin(tool).map_err(value_err)?;
    let seg = segment_article("", &paragraphs, &AbbreviationGuard::bundled());
    sentiment::score_article(&seg, &SentimentLexicon::bundled(), &tool).iter().map(|s| score_dict(py, s)).collect()
}

/// Compound score in [-1, 1] of a single piece of text.
#[pyfunction]
fn compound(text: &str) -> f64 {
    let seg = segment_article("", &[text], &AbbreviationGuard::bundled());
    let tokens: Vec<&str> = seg.tokens().map(|t| t.text.as_str()).collect();
    sentiment::score_tokens(&tokens, &SentimentLexicon::bundled())
}

#[pyfunction]
fn five_class(compound: f64) -> PyResult<u8> {
    sentiment::to_five_class(compound).map_err(value_err)
}

#[pyfunction]
fn normalize_surface(surface: &str) -> String {
    res::normalize_surface(surface)
}

type Pairs = Vec<(String, String)>;

/// Resolves `(surface, category)` mentions in document order against the
/// bundled abbreviation list. Returns the entity index of each mention and
/// the `(full_name, category)` of each entity.
#[pyfunction]
fn resolve(mentions: Pairs) -> PyResult<(Vec<usize>, Pairs)> {
    let mentions = mentions
        .iter()
        .enumerate()
        .map(|(i, (s, c))| {
            Ok(EntityMention {
                surface: s.clone(),
                category: category(c)?,
                span: Span::new(i * 1000, i * 1000 + s.chars().count()),
                paragraph_index: 0,
                sentence_index: 0,
                tagger: "python".into(),
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let r = res::resolve_article(&mentions, &AbbreviationCorpus::bundled()).map_err(qc_err)?;
    Ok((
        r.links.iter().map(|l| l.local_id).collect(),
        r.entities.iter().map(|e| (e.full_name.clone(), e.category.as_str().to_string())).collect(),
    ))
}

fn match_mode(mode: &str) -> PyResult<MatchMode> {
    match mode {
        "exact" => Ok(MatchMode::Exact),
        "name-only" | "name_only" => Ok(MatchMode::NameOnly),
        _ => Err(value_err(format!("unknown mode {mode:?}; expected exact or name-only"))),
    }
}

/// Precision, recall and F1 of predicted `(name, category)` pairs.
#[pyfunction]
#[pyo3(signature = (gold, predicted, mode = "name-only"))]
fn prf<'py>(py: Python<'py>, gold: Vec<(String, String)>, predicted: Vec<(String, String)>, mode: &str) -> PyResult<Bound<'py, PyAny>> {
    let conv = |xs: Vec<(String, String)>| xs.into_iter().map(|(n, c)| Ok((n, category(&c)?))).collect::<PyResult<Vec<_>>>();
    ser(py, &analytics::prf(&conv(gold)?, &conv(predicted)?, match_mode(mode)?))
}

/// A database plus the bundled analyzer.
#[pyclass(name = "Store")]
struct PyStore {
    store: Mutex<st::Store>,
    analyzer: Analyzer,
}

fn parse_date(s: Option<&str>) -> PyResult<Option<NaiveDate>> {
    s.map(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").map_err(value_err)).transpose()
}

impl PyStore {
    fn lock(&self) -> std::sync::MutexGuard<'_, st::Store> {
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[pymethods]
impl PyStore {
    /// Opens a database file, or an in-memory one when `path` is None.
    #[new]
    #[pyo3(signature = (path = None))]
    fn new(path: Option<PathBuf>) -> PyResult<Self> {
        let store = match path {
            Some(p) => st::Store::open(&p),
            None => st::Store::open_in_memory(),
        }
        .map_err(qc_err)?;
        Ok(PyStore { store: Mutex::new(store), analyzer: Analyzer::bundled() })
    }

    fn register_media(&self, name: &str, url: &str) -> PyResult<i64> {
        Ok(self.lock().register_media(name, url).map_err(qc_err)?.0)
    }

    /// Analyzes and stores one article. `published` is RFC 3339.
    #[pyo3(signature = (media, url, paragraphs, title = "", published = None))]
    fn add_article<'py>(
        &self,
        py: Python<'py>,
        media: &str,
        url: &str,
        paragraphs: Vec<String>,
        title: &str,
        published: Option<&str>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let url = url::Url::parse(url).map_err(value_err)?;
        let published = published
            .map(|p| DateTime::parse_from_rfc3339(p).map(|t| t.with_timezone(&Utc)).map_err(value_err))
            .transpose()?;
        let now = Utc::now();
        let article = Article::new(media, url, title, published, published.unwrap_or(now), now, paragraphs);
        let analysis = self.analyzer.analyze(&article).map_err(qc_err)?;
        let out = self
            .lock()
            .commit_article(&article, &analysis.scores, &analysis.resolutions, MergePolicy::default())
            .map_err(qc_err)?;
        let d = PyDict::new(py);
        d.set_item("article_id", out.article_id.0)?;
        d.set_item("status", format!("{:?}", out.status).to_lowercase())?;
        d.set_item("links", out.links)?;
        d.set_item("scores", out.scores)?;
        Ok(d)
    }

    /// Matching result rows, each a dict keyed by the CSV column names.
    #[pyo3(signature = (entity = "", sources = None, date_from = None, date_to = None, ner_tool = None, sentiment_tool = None, scope = None))]
    #[allow(clippy::too_many_arguments)]
    fn search<'py>(
        &self,
        py: Python<'py>,
        entity: &str,
        sources: Option<Vec<String>>,
        date_from: Option<&str>,
        date_to: Option<&str>,
        ner_tool: Option<String>,
        sentiment_tool: Option<String>,
        scope: Option<&str>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let f = filter(entity, sources, date_from, date_to, ner_tool, sentiment_tool, scope)?;
        ser(py, &self.lock().query_rows(&f).map_err(qc_err)?)
    }

    /// The same rows as `search`, as CSV text with the fixed header.
    #[pyo3(signature = (entity = "", sources = None, date_from = None, date_to = None, ner_tool = None, sentiment_tool = None, scope = None))]
    #[allow(clippy::too_many_arguments)]
    fn export_csv(
        &self,
        entity: &str,
        sources: Option<Vec<String>>,
        date_from: Option<&str>,
        date_to: Option<&str>,
        ner_tool: Option<String>,
        sentiment_tool: Option<String>,
        scope: Option<&str>,
    ) -> PyResult<String> {
        let f = filter(entity, sources, date_from, date_to, ner_tool, sentiment_tool, scope)?;
        let rows = self.lock().query_rows(&f).map_err(qc_err)?;
        String::from_utf8(st::rows_to_csv(&rows)).map_err(qc_err)
    }

    fn table_counts<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        ser(py, &self.lock().table_counts().map_err(qc_err)?)
    }

    fn check_integrity(&self) -> PyResult<Vec<String>> {
        self.lock().check_integrity().map_err(qc_err)
    }

    /// Roster names matched against stored entities.
    #[pyo3(signature = (roster, exclude = Vec::new()))]
    fn roster_report<'py>(&self, py: Python<'py>, roster: Vec<String>, exclude: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
        ser(py, &analytics::roster_report(&self.lock(), &roster, &exclude).map_err(qc_err)?)
    }

    fn variant_report<'py>(&self, py: Python<'py>, tokens: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
        ser(py, &analytics::variant_report(&self.lock(), &tokens).map_err(qc_err)?)
    }
}

fn filter(
    entity: &str,
    sources: Option<Vec<String>>,
    date_from: Option<&str>,
    date_to: Option<&str>,
    tagger: Option<String>,
    tool: Option<String>,
    scope: Option<&str>,
) -> PyResult<QueryFilter> {
    Ok(QueryFilter {
        entity: entity.to_string(),
        sources: sources.map(|s| s.into_iter().collect::<BTreeSet<_>>()),
        date_from: parse_date(date_from)?,
        date_to: parse_date(date_to)?,
        tagger,
        tool,
        scope: scope.map(|s| s.parse::<ScopeKind>().map_err(value_err)).transpose()?,
    })
}

#[pymodule]
fn qc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("QcError", m.py().get_type::<QcError>())?;
    m.add("CSV_HEADER", st::CSV_HEADER)?;
    m.add_class::<PyStore>()?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(compound, m)?)?;
    m.add_function(wrap_pyfunction!(five_class, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_surface, m)?)?;
    m.add_function(wrap_pyfunction!(resolve, m)?)?;
    m.add_function(wrap_pyfunction!(prf, m)?)?;
    Ok(())
}
