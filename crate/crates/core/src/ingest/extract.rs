//! Generic article extraction: a headline plus the paragraph elements of
//! the main content region.

use chrono::{DateTime, Utc};
use scraper::{ElementRef, Html, Selector};
use serde::{Deserialize, Serialize};
use url::Url;

use crate::model::Article;

use super::FeedSource;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("{0}: no article paragraphs found")]
    NoContent(String),
    #[error("invalid selector {0:?}")]
    BadSelector(String),
}

/// Optional per-source CSS selectors overriding the defaults.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Selectors {
    pub title: Option<String>,
    pub content: Option<String>,
    pub paragraph: Option<String>,
}

const DEFAULT_TITLE: &[&str] = &["h1", "meta[property='og:title']", "title"];
const DEFAULT_CONTENT: &[&str] = &["article", "main", "[role='main']", "body"];
/// Paragraphs inside these are page furniture, not story text.
const SKIP_ANCESTORS: &[&str] = &["aside", "nav", "footer", "header", "figure", "form"];

impl Selectors {
    /// Parses every configured selector, reporting the first invalid one.
    pub fn validate(&self) -> Result<(), ExtractError> {
        for s in [&self.title, &self.content, &self.paragraph].into_iter().flatten() {
            parse(s)?;
        }
        Ok(())
    }
}

fn parse(s: &str) -> Result<Selector, ExtractError> {
    Selector::parse(s).map_err(|_| ExtractError::BadSelector(s.to_string()))
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn element_text(e: ElementRef<'_>) -> String {
    if e.value().name() == "meta" {
        return normalize_ws(e.attr("content").unwrap_or_default());
    }
    normalize_ws(&e.text().collect::<String>())
}

fn meta_time(doc: &Html, property: &str) -> Option<DateTime<Utc>> {
    let sel = Selector::parse(&format!("meta[property='{property}'], meta[name='{property}']")).ok()?;
    doc.select(&sel)
        .filter_map(|m| m.attr("content"))
        .find_map(|c| DateTime::parse_from_rfc3339(c.trim()).ok())
        .map(|t| t.with_timezone(&Utc))
}

/// What a page yields before it is bound to a source and fetch time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedPage {
    pub title: String,
    pub paragraphs: Vec<String>,
    pub published_at: Option<DateTime<Utc>>,
    pub modified_at: Option<DateTime<Utc>>,
}

pub fn extract_page(page: &[u8], selectors: &Selectors) -> Result<ExtractedPage, ExtractError> {
    let html = String::from_utf8_lossy(page);
    let doc = Html::parse_document(&html);

    let title_sels: Vec<Selector> = match &selectors.title {
        Some(s) => vec![parse(s)?],
        None => DEFAULT_TITLE.iter().map(|s| parse(s)).collect::<Result<_, _>>()?,
    };
    let title = title_sels
        .iter()
        .flat_map(|sel| doc.select(sel))
        .map(element_text)
        .find(|t| !t.is_empty())
        .unwrap_or_default();

    let content_sels: Vec<Selector> = match &selectors.content {
        Some(s) => vec![parse(s)?],
        None => DEFAULT_CONTENT.iter().map(|s| parse(s)).collect::<Result<_, _>>()?,
    };
    let region = content_sels.iter().find_map(|sel| doc.select(sel).next());
    let para_sel = parse(selectors.paragraph.as_deref().unwrap_or("p"))?;
    let paragraphs: Vec<String> = match region {
        None => Vec::new(),
        Some(region) => region
            .select(&para_sel)
            .filter(|p| {
                // Skip furniture and paragraphs nested in other paragraphs,
                // looking only at ancestors inside the region.
                !p.ancestors()
                    .take_while(|a| a.id() != region.id())
                    .filter_map(ElementRef::wrap)
                    .any(|a| SKIP_ANCESTORS.contains(&a.value().name()) || para_sel.matches(&a))
            })
            .map(element_text)
            .filter(|t| !t.is_empty())
            .collect(),
    };

    Ok(ExtractedPage {
        title,
        paragraphs,
        published_at: meta_time(&doc, "article:published_time"),
        modified_at: meta_time(&doc, "article:modified_time"),
    })
}

/// Builds an article from a fetched page. Publication time falls back to
/// the feed's, and the modification time to publication, then fetch time.
pub fn extract_article(
    page: &[u8],
    url: &Url,
    source: &FeedSource,
    feed_published: Option<DateTime<Utc>>,
    fetched_at: DateTime<Utc>,
) -> Result<Article, ExtractError> {
    let p = extract_page(page, &source.selectors)?;
    if p.paragraphs.is_empty() {
        return Err(ExtractError::NoContent(url.to_string()));
    }
    let published = p.published_at.or(feed_published);
    let modified = p.modified_at.or(published).unwrap_or(fetched_at);
    Ok(Article::new(&source.media_name, url.clone(), p.title, published, modified, fetched_at, p.paragraphs))
}
