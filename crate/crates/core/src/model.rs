//! Domain types shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use url::Url;

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub i64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }
    };
}

id_newtype!(
    /// Row id of a `media` record.
    MediaId
);
id_newtype!(
    /// Row id of an `article` record.
    ArticleId
);
id_newtype!(
    /// Row id of a globally resolved `entity` record.
    EntityId
);

/// The three entity classes the pipeline keeps. Anything else a tagger
/// produces is dropped before it reaches storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Category {
    Person,
    Location,
    Organization,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Person, Category::Location, Category::Organization];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Person => "PERSON",
            Category::Location => "LOCATION",
            Category::Organization => "ORGANIZATION",
        }
    }

    /// Short code used in search results.
    pub fn code(self) -> EntityType {
        match self {
            Category::Person => EntityType::Per,
            Category::Location => EntityType::Loc,
            Category::Organization => EntityType::Org,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown entity category {0:?}")]
pub struct UnknownCategory(pub String);

impl FromStr for Category {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PERSON" | "PER" => Ok(Category::Person),
            "LOCATION" | "LOC" => Ok(Category::Location),
            "ORGANIZATION" | "ORGANISATION" | "ORG" => Ok(Category::Organization),
            _ => Err(UnknownCategory(s.to_string())),
        }
    }
}

/// `type` column of a search result row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntityType {
    Per,
    Loc,
    Org,
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityType::Per => "PER",
            EntityType::Loc => "LOC",
            EntityType::Org => "ORG",
        })
    }
}

/// Half-open range of character (Unicode scalar value) offsets into a
/// paragraph's text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    /// Returns the substring covered by the span, or `None` when the span
    /// runs past the end of `text`.
    pub fn slice<'a>(&self, text: &'a str) -> Option<&'a str> {
        let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
        let start = indices.nth(self.start)?;
        let end = if self.end == self.start {
            start
        } else {
            indices.nth(self.end - self.start - 1)?
        };
        Some(&text[start..end])
    }
}

/// One scraped news story.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    /// Name of the media record this article belongs to.
    pub media_name: String,
    pub url: Url,
    pub title: String,
    pub published_at: Option<DateTime<Utc>>,
    pub modified_at: DateTime<Utc>,
    pub fetched_at: DateTime<Utc>,
    pub paragraphs: Vec<String>,
}

impl Article {
    /// Builds an article, dropping blank paragraphs and clamping a
    /// publication time that lies after the fetch time.
    pub fn new(
        media_name: impl Into<String>,
        url: Url,
        title: impl Into<String>,
        published_at: Option<DateTime<Utc>>,
        modified_at: DateTime<Utc>,
        fetched_at: DateTime<Utc>,
        paragraphs: impl IntoIterator<Item = String>,
    ) -> Self {
        let paragraphs = paragraphs
            .into_iter()
            .map(|p| p.trim().to_string())
            .filter(|p| !p.is_empty())
            .collect();
        Article {
            media_name: media_name.into(),
            url,
            title: title.into(),
            published_at: published_at.map(|p| p.min(fetched_at)),
            modified_at,
            fetched_at,
            paragraphs,
        }
    }
}

/// Granularity of a sentiment score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScopeKind {
    Article,
    Paragraph,
    Sentence,
}

impl ScopeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScopeKind::Article => "ARTICLE",
            ScopeKind::Paragraph => "PARAGRAPH",
            ScopeKind::Sentence => "SENTENCE",
        }
    }
}

impl fmt::Display for ScopeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown scope {0:?} (expected article, paragraph or sentence)")]
pub struct UnknownScope(pub String);

impl FromStr for ScopeKind {
    type Err = UnknownScope;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "article" => Ok(ScopeKind::Article),
            "paragraph" => Ok(ScopeKind::Paragraph),
            "sentence" => Ok(ScopeKind::Sentence),
            _ => Err(UnknownScope(s.to_string())),
        }
    }
}

/// Where a sentiment score applies. Sentence indices count within their
/// paragraph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scope {
    Article,
    Paragraph { paragraph: usize },
    Sentence { paragraph: usize, sentence: usize },
}

impl Scope {
    pub fn kind(&self) -> ScopeKind {
        match self {
            Scope::Article => ScopeKind::Article,
            Scope::Paragraph { .. } => ScopeKind::Paragraph,
            Scope::Sentence { .. } => ScopeKind::Sentence,
        }
    }

    pub fn paragraph_index(&self) -> Option<usize> {
        match *self {
            Scope::Article => None,
            Scope::Paragraph { paragraph } | Scope::Sentence { paragraph, .. } => Some(paragraph),
        }
    }

    pub fn sentence_index(&self) -> Option<usize> {
        match *self {
            Scope::Sentence { sentence, .. } => Some(sentence),
            _ => None,
        }
    }

    /// Rebuilds a scope from its stored columns, rejecting inconsistent
    /// index combinations.
    pub fn from_parts(kind: ScopeKind, paragraph: Option<usize>, sentence: Option<usize>) -> Option<Scope> {
        match (kind, paragraph, sentence) {
            (ScopeKind::Article, None, None) => Some(Scope::Article),
            (ScopeKind::Paragraph, Some(paragraph), None) => Some(Scope::Paragraph { paragraph }),
            (ScopeKind::Sentence, Some(paragraph), Some(sentence)) => {
                Some(Scope::Sentence { paragraph, sentence })
            }
            _ => None,
        }
    }
}
