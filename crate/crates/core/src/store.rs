//! SQLite persistence for media, articles, resolved entities, mention links
//! and sentiment scores.
//!
//! One `Store` owns one connection. Writes go through transactions so a
//! reader on another connection never sees half an article. Timestamps are
//! stored as RFC 3339 text in UTC with second precision, which keeps
//! lexicographic and chronological order identical.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use rusqlite::functions::FunctionFlags;
use rusqlite::types::Value;
use rusqlite::{params, params_from_iter, Connection, ErrorCode, OptionalExtension};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{Article, ArticleId, Category, EntityId, EntityType, MediaId, Scope, ScopeKind, Span};
use crate::ner::EntityMention;
use crate::resolve::{contains_at_boundary, resolve_global, EntityRegistry, MergePolicy, TaggerResolution};
use crate::sentiment::SentimentScore;

pub const SCHEMA_VERSION: i64 = 1;

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS media (
    id   INTEGER PRIMARY KEY,
    name TEXT NOT NULL UNIQUE,
    url  TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS article (
    id              INTEGER PRIMARY KEY,
    media_id        INTEGER NOT NULL REFERENCES media(id),
    url             TEXT NOT NULL UNIQUE,
    title           TEXT NOT NULL,
    published_at    TEXT,
    modified_at     TEXT NOT NULL,
    fetched_at      TEXT NOT NULL,
    paragraph_texts TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS article_modified ON article(modified_at);
CREATE TABLE IF NOT EXISTS entity (
    id        INTEGER PRIMARY KEY,
    full_name TEXT NOT NULL CHECK (length(full_name) > 0),
    category  TEXT NOT NULL CHECK (category IN ('PERSON', 'LOCATION', 'ORGANIZATION')),
    UNIQUE (full_name, category)
);
CREATE TABLE IF NOT EXISTS article_entity (
    id              INTEGER PRIMARY KEY,
    article_id      INTEGER NOT NULL REFERENCES article(id) ON DELETE CASCADE,
    entity_id       INTEGER NOT NULL REFERENCES entity(id),
    tagger          TEXT NOT NULL,
    surface         TEXT NOT NULL,
    paragraph_index INTEGER NOT NULL CHECK (paragraph_index >= 0),
    sentence_index  INTEGER NOT NULL CHECK (sentence_index >= 0),
    char_start      INTEGER NOT NULL CHECK (char_start >= 0),
    char_end        INTEGER NOT NULL CHECK (char_end > char_start)
);
CREATE INDEX IF NOT EXISTS article_entity_article ON article_entity(article_id);
CREATE INDEX IF NOT EXISTS article_entity_entity ON article_entity(entity_id);
CREATE TABLE IF NOT EXISTS sentiment (
    id              INTEGER PRIMARY KEY,
    article_id      INTEGER NOT NULL REFERENCES article(id) ON DELETE CASCADE,
    scope           TEXT NOT NULL,
    paragraph_index INTEGER,
    sentence_index  INTEGER,
    score           REAL NOT NULL,
    five_class      INTEGER NOT NULL CHECK (five_class BETWEEN 0 AND 4),
    scale           TEXT NOT NULL,
    tool            TEXT NOT NULL,
    CHECK ((scope = 'ARTICLE' AND paragraph_index IS NULL AND sentence_index IS NULL)
        OR (scope = 'PARAGRAPH' AND paragraph_index IS NOT NULL AND sentence_index IS NULL)
        OR (scope = 'SENTENCE' AND paragraph_index IS NOT NULL AND sentence_index IS NOT NULL))
);
CREATE INDEX IF NOT EXISTS sentiment_article ON sentiment(article_id, scope, paragraph_index, sentence_index);
";

const TABLES: [&str; 5] = ["media", "article", "entity", "article_entity", "sentiment"];

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("storage unavailable: {0}")]
    StorageUnavailable(String),
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("unknown media {0:?}")]
    UnknownMedia(String),
    #[error("corrupt row: {0}")]
    Corrupt(String),
}

impl From<rusqlite::Error> for StoreError {
    fn from(e: rusqlite::Error) -> Self {
        match &e {
            rusqlite::Error::SqliteFailure(f, msg) if f.code == ErrorCode::ConstraintViolation => {
                StoreError::ConstraintViolation(msg.clone().unwrap_or_else(|| e.to_string()))
            }
            _ => StoreError::StorageUnavailable(e.to_string()),
        }
    }
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

pub fn format_ts(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn parse_ts(s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| StoreError::Corrupt(format!("timestamp {s:?}: {e}")))
}

fn to_usize(v: i64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| StoreError::Corrupt(format!("negative {what} {v}")))
}

fn parse_category(s: &str) -> Result<Category> {
    s.parse().map_err(|e| StoreError::Corrupt(format!("{e}")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Media {
    pub id: MediaId,
    pub name: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredArticle {
    pub id: ArticleId,
    pub media_name: String,
    pub url: String,
    pub title: String,
    pub published_at: Option<DateTime<Utc>>,
    pub modified_at: DateTime<Utc>,
    pub fetched_at: DateTime<Utc>,
    pub paragraphs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StoredEntity {
    pub id: EntityId,
    pub full_name: String,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredLink {
    pub id: i64,
    pub article_id: ArticleId,
    pub entity_id: EntityId,
    pub tagger: String,
    pub surface: String,
    pub paragraph_index: usize,
    pub sentence_index: usize,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredScore {
    pub id: i64,
    pub article_id: ArticleId,
    pub scope: Scope,
    pub score: f64,
    pub five_class: u8,
    pub scale: String,
    pub tool: String,
}

/// How an upsert treated an existing row with the same URL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpsertStatus {
    Inserted,
    /// Same URL, different content: overwritten and derived rows cleared.
    Replaced,
    /// Same URL and identical content: only `fetched_at` moved.
    Unchanged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Upsert {
    pub id: ArticleId,
    pub status: UpsertStatus,
}

impl Upsert {
    pub fn was_replacement(&self) -> bool {
        self.status != UpsertStatus::Inserted
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitOutcome {
    pub article_id: ArticleId,
    pub status: UpsertStatus,
    pub links: usize,
    pub scores: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableCounts {
    pub media: u64,
    pub article: u64,
    pub entity: u64,
    pub article_entity: u64,
    pub sentiment: u64,
}

impl TableCounts {
    pub fn all_nonzero(&self) -> bool {
        self.media > 0 && self.article > 0 && self.entity > 0 && self.article_entity > 0 && self.sentiment > 0
    }
}

/// Search filter. `None` means "all" for every optional field.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryFilter {
    /// Case-insensitive substring of the entity full name; empty matches all.
    pub entity: String,
    pub sources: Option<BTreeSet<String>>,
    pub date_from: Option<NaiveDate>,
    pub date_to: Option<NaiveDate>,
    pub tagger: Option<String>,
    pub tool: Option<String>,
    pub scope: Option<ScopeKind>,
}

/// One search result: a mention link joined with one sentiment row that
/// covers its location. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub id: i64,
    pub entity: String,
    pub entity_id: i64,
    #[serde(rename = "type")]
    pub entity_type: EntityType,
    pub date: NaiveDate,
    pub url: String,
    pub ner_tool: String,
    pub paragraph: Option<i64>,
    pub sentence: Option<i64>,
    pub sentiment_score: f64,
    pub sentiment_tool: String,
    pub media_name: String,
    pub media_url: String,
}

pub const CSV_HEADER: &str =
    "id,entity,entity_id,type,date,url,ner_tool,paragraph,sentence,sentiment_score,sentiment_tool,media_name,media_url";

/// Writes rows as CSV with the fixed header, LF line endings and minimal
/// quoting.
pub fn write_rows_csv<W: Write>(rows: &[ResultRow], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn rows_to_csv(rows: &[ResultRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_rows_csv(rows, &mut buf).expect("writing to memory cannot fail");
    buf
}

/// Registry view of the `entity` table inside an open transaction.
struct SqlRegistry<'a>(&'a Connection);

impl EntityRegistry for SqlRegistry<'_> {
    type Error = rusqlite::Error;

    fn find(&mut self, full_name: &str, category: Category) -> rusqlite::Result<Option<EntityId>> {
        self.0
            .query_row(
                "SELECT id FROM entity WHERE full_name = ?1 AND category = ?2",
                params![full_name, category.as_str()],
                |r| r.get(0).map(EntityId),
            )
            .optional()
    }

    fn insert(&mut self, full_name: &str, category: Category) -> rusqlite::Result<EntityId> {
        self.0.execute(
            "INSERT INTO entity (full_name, category) VALUES (?1, ?2)",
            params![full_name, category.as_str()],
        )?;
        Ok(EntityId(self.0.last_insert_rowid()))
    }

    fn find_container(&mut self, name: &str, category: Category) -> rusqlite::Result<Option<EntityId>> {
        let mut stmt = self
            .0
            .prepare_cached("SELECT id, full_name FROM entity WHERE category = ?1 AND instr(full_name, ?2) > 0 ORDER BY id DESC")?;
        let mut rows = stmt.query(params![category.as_str(), name])?;
        while let Some(r) = rows.next()? {
            let full: String = r.get(1)?;
            if contains_at_boundary(&full, name) {
                return Ok(Some(EntityId(r.get(0)?)));
            }
        }
        Ok(None)
    }
}

fn icontains(haystack: &str, needle: &str) -> bool {
    haystack.to_lowercase().contains(&needle.to_lowercase())
}

pub struct Store {
    conn: Connection,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("path", &self.conn.path()).finish()
    }
}

impl Store {
    /// Opens (creating if needed) a database file and brings its schema up
    /// to date.
    pub fn open(path: &Path) -> Result<Self> {
        let conn = Connection::open(path)?;
        let mode: String = conn.query_row("PRAGMA journal_mode = WAL", [], |r| r.get(0))?;
        tracing::debug!(path = %path.display(), journal = %mode, "opened store");
        Self::init(conn)
    }

    pub fn open_in_memory() -> Result<Self> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self> {
        conn.busy_timeout(std::time::Duration::from_secs(10))?;
        conn.pragma_update(None, "foreign_keys", true)?;
        conn.create_scalar_function(
            "qc_icontains",
            2,
            FunctionFlags::SQLITE_UTF8 | FunctionFlags::SQLITE_DETERMINISTIC,
            |ctx| {
                let h: String = ctx.get(0)?;
                let n: String = ctx.get(1)?;
                Ok(icontains(&h, &n))
            },
        )?;
        let store = Store { conn };
        store.migrate()?;
        Ok(store)
    }

    /// Creates missing tables and indexes. Safe to run repeatedly.
    pub fn migrate(&self) -> Result<i64> {
        let version: i64 = self.conn.query_row("PRAGMA user_version", [], |r| r.get(0))?;
        if version > SCHEMA_VERSION {
            return Err(StoreError::StorageUnavailable(format!(
                "database schema version {version} is newer than this build ({SCHEMA_VERSION})"
            )));
        }
        self.conn.execute_batch(SCHEMA)?;
        self.conn.pragma_update(None, "user_version", SCHEMA_VERSION)?;
        Ok(SCHEMA_VERSION)
    }

    pub(crate) fn conn(&self) -> &Connection {
        &self.conn
    }

    /// Inserts a media record or updates its URL; returns its id.
    pub fn register_media(&self, name: &str, url: &str) -> Result<MediaId> {
        if name.trim().is_empty() {
            return Err(StoreError::ConstraintViolation("empty media name".into()));
        }
        Ok(MediaId(self.conn.query_row(
            "INSERT INTO media (name, url) VALUES (?1, ?2)
             ON CONFLICT(name) DO UPDATE SET url = excluded.url
             RETURNING id",
            params![name, url],
            |r| r.get(0),
        )?))
    }

    pub fn media(&self) -> Result<Vec<Media>> {
        let mut stmt = self.conn.prepare("SELECT id, name, url FROM media ORDER BY name")?;
        let rows = stmt.query_map([], |r| Ok(Media { id: MediaId(r.get(0)?), name: r.get(1)?, url: r.get(2)? }))?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    fn distinct(&self, sql: &str) -> Result<Vec<String>> {
        let mut stmt = self.conn.prepare(sql)?;
        let rows = stmt.query_map([], |r| r.get(0))?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    /// Tagger ids that have at least one stored link.
    pub fn taggers(&self) -> Result<Vec<String>> {
        self.distinct("SELECT DISTINCT tagger FROM article_entity ORDER BY tagger")
    }

    /// Sentiment tool ids that have at least one stored score.
    pub fn tools(&self) -> Result<Vec<String>> {
        self.distinct("SELECT DISTINCT tool FROM sentiment ORDER BY tool")
    }

    fn media_id(conn: &Connection, name: &str) -> Result<MediaId> {
        conn.query_row("SELECT id FROM media WHERE name = ?1", [name], |r| r.get(0).map(MediaId))
            .optional()?
            .ok_or_else(|| StoreError::UnknownMedia(name.to_string()))
    }

    /// Looks up the row with the article's URL and whether its content
    /// (everything but `fetched_at`) equals the article's.
    fn existing(conn: &Connection, article: &Article, media_id: MediaId) -> Result<Option<(ArticleId, bool)>> {
        type Existing = (i64, i64, String, Option<String>, String, String);
        let existing: Option<Existing> = conn
            .query_row(
                "SELECT id, media_id, title, published_at, modified_at, paragraph_texts FROM article WHERE url = ?1",
                [article.url.as_str()],
                |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?, r.get(5)?)),
            )
            .optional()?;
        Ok(existing.map(|(id, old_media, old_title, old_published, old_modified, old_paragraphs)| {
            let same = old_media == media_id.0
                && old_title == article.title
                && old_published == article.published_at.map(format_ts)
                && old_modified == format_ts(article.modified_at)
                && old_paragraphs == serde_json::to_string(&article.paragraphs).expect("strings serialize");
            (ArticleId(id), same)
        }))
    }

    /// True when an article with this URL is stored with identical content,
    /// so re-analysis can be skipped.
    pub fn is_current(&self, article: &Article) -> Result<bool> {
        let media_id = Self::media_id(&self.conn, &article.media_name)?;
        Ok(Self::existing(&self.conn, article, media_id)?.is_some_and(|(_, same)| same))
    }

    fn upsert_in(conn: &Connection, article: &Article) -> Result<Upsert> {
        if article.url.as_str().is_empty() {
            return Err(StoreError::ConstraintViolation("empty article url".into()));
        }
        let media_id = Self::media_id(conn, &article.media_name)?;
        let paragraphs = serde_json::to_string(&article.paragraphs).expect("strings serialize");
        let published = article.published_at.map(format_ts);
        let modified = format_ts(article.modified_at);
        let fetched = format_ts(article.fetched_at);

        match Self::existing(conn, article, media_id)? {
            None => {
                conn.execute(
                    "INSERT INTO article (media_id, url, title, published_at, modified_at, fetched_at, paragraph_texts)
                     VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
                    params![media_id.0, article.url.as_str(), article.title, published, modified, fetched, paragraphs],
                )?;
                Ok(Upsert { id: ArticleId(conn.last_insert_rowid()), status: UpsertStatus::Inserted })
            }
            Some((id, true)) => {
                conn.execute("UPDATE article SET fetched_at = ?2 WHERE id = ?1", params![id.0, fetched])?;
                Ok(Upsert { id, status: UpsertStatus::Unchanged })
            }
            Some((id, false)) => {
                conn.execute(
                    "UPDATE article SET media_id = ?2, title = ?3, published_at = ?4, modified_at = ?5,
                            fetched_at = ?6, paragraph_texts = ?7
                     WHERE id = ?1",
                    params![id.0, media_id.0, article.title, published, modified, fetched, paragraphs],
                )?;
                Self::clear_derived(conn, id)?;
                Ok(Upsert { id, status: UpsertStatus::Replaced })
            }
        }
    }

    fn clear_derived(conn: &Connection, id: ArticleId) -> Result<()> {
        conn.execute("DELETE FROM sentiment WHERE article_id = ?1", [id.0])?;
        conn.execute("DELETE FROM article_entity WHERE article_id = ?1", [id.0])?;
        Ok(())
    }

    fn insert_scores(conn: &Connection, id: ArticleId, scores: &[SentimentScore]) -> Result<()> {
        let mut stmt = conn.prepare_cached(
            "INSERT INTO sentiment (article_id, scope, paragraph_index, sentence_index, score, five_class, scale, tool)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
        )?;
        for s in scores {
            stmt.execute(params![
                id.0,
                s.scope.kind().as_str(),
                s.scope.paragraph_index().map(|p| p as i64),
                s.scope.sentence_index().map(|p| p as i64),
                s.value(),
                s.five_class,
                s.scale.as_str(),
                s.tool,
            ])?;
        }
        Ok(())
    }

    fn insert_link(conn: &Connection, id: ArticleId, m: &EntityMention, entity: EntityId) -> Result<()> {
        let mut stmt = conn.prepare_cached(
            "INSERT INTO article_entity
                (article_id, entity_id, tagger, surface, paragraph_index, sentence_index, char_start, char_end)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
        )?;
        stmt.execute(params![
            id.0,
            entity.0,
            m.tagger,
            m.surface,
            m.paragraph_index as i64,
            m.sentence_index as i64,
            m.span.start as i64,
            m.span.end as i64,
        ])?;
        Ok(())
    }

    /// Inserts a new article or overwrites the one with the same URL.
    /// Replacing changed content clears the article's sentiment and mention
    /// rows; an identical payload only refreshes `fetched_at`.
    pub fn upsert_article(&mut self, article: &Article) -> Result<Upsert> {
        let tx = self.conn.transaction()?;
        let up = Self::upsert_in(&tx, article)?;
        tx.commit()?;
        Ok(up)
    }

    /// Writes an article with all of its derived rows in one transaction,
    /// replacing any derived rows it had before.
    pub fn persist_article_bundle(
        &mut self,
        article: &Article,
        scores: &[SentimentScore],
        links: &[(EntityMention, EntityId)],
    ) -> Result<Upsert> {
        let tx = self.conn.transaction()?;
        let up = Self::upsert_in(&tx, article)?;
        Self::clear_derived(&tx, up.id)?;
        Self::insert_scores(&tx, up.id, scores)?;
        for (m, e) in links {
            Self::insert_link(&tx, up.id, m, *e)?;
        }
        tx.commit()?;
        Ok(up)
    }

    /// Like [`Store::persist_article_bundle`], but maps each tagger's local
    /// entities to global ones inside the same transaction.
    pub fn commit_article(
        &mut self,
        article: &Article,
        scores: &[SentimentScore],
        resolutions: &[TaggerResolution],
        policy: MergePolicy,
    ) -> Result<CommitOutcome> {
        let tx = self.conn.transaction()?;
        let up = Self::upsert_in(&tx, article)?;
        Self::clear_derived(&tx, up.id)?;
        Self::insert_scores(&tx, up.id, scores)?;
        let mut links = 0;
        for r in resolutions {
            let global = resolve_global(&r.resolution.entities, &mut SqlRegistry(&tx), policy)?;
            for link in &r.resolution.links {
                let m = &r.mentions[link.mention];
                Self::insert_link(&tx, up.id, m, global[&link.local_id])?;
                links += 1;
            }
        }
        tx.commit()?;
        Ok(CommitOutcome { article_id: up.id, status: up.status, links, scores: scores.len() })
    }

    /// Creates the entity if needed; returns its id.
    pub fn ensure_entity(&mut self, full_name: &str, category: Category) -> Result<EntityId> {
        let mut reg = SqlRegistry(&self.conn);
        Ok(match reg.find(full_name, category)? {
            Some(id) => id,
            None => reg.insert(full_name, category)?,
        })
    }

    pub fn find_entity(&self, full_name: &str, category: Category) -> Result<Option<EntityId>> {
        Ok(SqlRegistry(&self.conn).find(full_name, category)?)
    }

    pub fn entity(&self, id: EntityId) -> Result<Option<StoredEntity>> {
        self.conn
            .query_row("SELECT full_name, category FROM entity WHERE id = ?1", [id.0], |r| {
                Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?))
            })
            .optional()?
            .map(|(full_name, c)| Ok(StoredEntity { id, full_name, category: parse_category(&c)? }))
            .transpose()
    }

    pub fn entities(&self) -> Result<Vec<StoredEntity>> {
        let mut stmt = self.conn.prepare("SELECT id, full_name, category FROM entity ORDER BY id")?;
        let rows = stmt.query_map([], |r| Ok((r.get::<_, i64>(0)?, r.get::<_, String>(1)?, r.get::<_, String>(2)?)))?;
        rows.map(|row| {
            let (id, full_name, c) = row?;
            Ok(StoredEntity { id: EntityId(id), full_name, category: parse_category(&c)? })
        })
        .collect()
    }

    fn article_where(&self, clause: &str, param: Value) -> Result<Option<StoredArticle>> {
        let sql = format!(
            "SELECT a.id, m.name, a.url, a.title, a.published_at, a.modified_at, a.fetched_at, a.paragraph_texts
             FROM article a JOIN media m ON m.id = a.media_id WHERE {clause}"
        );
        type Raw = (i64, String, String, String, Option<String>, String, String, String);
        let raw: Option<Raw> = self
            .conn
            .query_row(&sql, [param], |r| {
                Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?, r.get(5)?, r.get(6)?, r.get(7)?))
            })
            .optional()?;
        let Some((id, media_name, url, title, published, modified, fetched, paragraphs)) = raw else {
            return Ok(None);
        };
        Ok(Some(StoredArticle {
            id: ArticleId(id),
            media_name,
            url,
            title,
            published_at: published.as_deref().map(parse_ts).transpose()?,
            modified_at: parse_ts(&modified)?,
            fetched_at: parse_ts(&fetched)?,
            paragraphs: serde_json::from_str(&paragraphs).map_err(|e| StoreError::Corrupt(e.to_string()))?,
        }))
    }

    pub fn article(&self, id: ArticleId) -> Result<Option<StoredArticle>> {
        self.article_where("a.id = ?1", Value::Integer(id.0))
    }

    pub fn article_by_url(&self, url: &str) -> Result<Option<StoredArticle>> {
        self.article_where("a.url = ?1", Value::Text(url.to_string()))
    }

    pub fn links(&self, article: ArticleId) -> Result<Vec<StoredLink>> {
        let mut stmt = self.conn.prepare(
            "SELECT id, entity_id, tagger, surface, paragraph_index, sentence_index, char_start, char_end
             FROM article_entity WHERE article_id = ?1 ORDER BY id",
        )?;
        let rows = stmt.query_map([article.0], |r| {
            Ok((
                r.get::<_, i64>(0)?,
                r.get::<_, i64>(1)?,
                r.get::<_, String>(2)?,
                r.get::<_, String>(3)?,
                r.get::<_, i64>(4)?,
                r.get::<_, i64>(5)?,
                r.get::<_, i64>(6)?,
                r.get::<_, i64>(7)?,
            ))
        })?;
        rows.map(|row| {
            let (id, entity, tagger, surface, p, s, start, end) = row?;
            Ok(StoredLink {
                id,
                article_id: article,
                entity_id: EntityId(entity),
                tagger,
                surface,
                paragraph_index: to_usize(p, "paragraph index")?,
                sentence_index: to_usize(s, "sentence index")?,
                span: Span::new(to_usize(start, "offset")?, to_usize(end, "offset")?),
            })
        })
        .collect()
    }

    pub fn scores(&self, article: ArticleId) -> Result<Vec<StoredScore>> {
        let mut stmt = self.conn.prepare(
            "SELECT id, scope, paragraph_index, sentence_index, score, five_class, scale, tool
             FROM sentiment WHERE article_id = ?1 ORDER BY id",
        )?;
        let rows = stmt.query_map([article.0], |r| {
            Ok((
                r.get::<_, i64>(0)?,
                r.get::<_, String>(1)?,
                r.get::<_, Option<i64>>(2)?,
                r.get::<_, Option<i64>>(3)?,
                r.get::<_, f64>(4)?,
                r.get::<_, i64>(5)?,
                r.get::<_, String>(6)?,
                r.get::<_, String>(7)?,
            ))
        })?;
        rows.map(|row| {
            let (id, scope, p, s, score, five_class, scale, tool) = row?;
            let kind: ScopeKind = scope.parse().map_err(|e| StoreError::Corrupt(format!("{e}")))?;
            let p = p.map(|p| to_usize(p, "paragraph index")).transpose()?;
            let s = s.map(|s| to_usize(s, "sentence index")).transpose()?;
            let scope = Scope::from_parts(kind, p, s)
                .ok_or_else(|| StoreError::Corrupt(format!("sentiment row {id} has inconsistent indices")))?;
            Ok(StoredScore {
                id,
                article_id: article,
                scope,
                score,
                five_class: u8::try_from(five_class).map_err(|_| StoreError::Corrupt("five_class".into()))?,
                scale,
                tool,
            })
        })
        .collect()
    }

    pub fn table_counts(&self) -> Result<TableCounts> {
        let count = |t: &str| -> Result<u64> {
            let n: i64 = self.conn.query_row(&format!("SELECT count(*) FROM {t}"), [], |r| r.get(0))?;
            Ok(n as u64)
        };
        Ok(TableCounts {
            media: count("media")?,
            article: count("article")?,
            entity: count("entity")?,
            article_entity: count("article_entity")?,
            sentiment: count("sentiment")?,
        })
    }

    /// SHA-256 over every row of every table in id order.
    pub fn state_digest(&self) -> Result<String> {
        let mut h = Sha256::new();
        for t in TABLES {
            h.update(t.as_bytes());
            let mut stmt = self.conn.prepare(&format!("SELECT * FROM {t} ORDER BY id"))?;
            let n = stmt.column_count();
            let mut rows = stmt.query([])?;
            while let Some(r) = rows.next()? {
                for i in 0..n {
                    let v: Value = r.get(i)?;
                    h.update(format!("{v:?}\x1f").as_bytes());
                }
                h.update(b"\x1e");
            }
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Full-scan validation; returns one message per problem found.
    pub fn check_integrity(&self) -> Result<Vec<String>> {
        let mut problems = Vec::new();
        let quick: String = self.conn.query_row("PRAGMA quick_check", [], |r| r.get(0))?;
        if quick != "ok" {
            problems.push(format!("quick_check: {quick}"));
        }
        {
            let mut stmt = self.conn.prepare("PRAGMA foreign_key_check")?;
            let mut rows = stmt.query([])?;
            while let Some(r) = rows.next()? {
                let table: String = r.get(0)?;
                let rowid: Option<i64> = r.get(1)?;
                let parent: String = r.get(2)?;
                problems.push(format!("{table} row {rowid:?} references a missing {parent}"));
            }
        }
        let mut stmt = self.conn.prepare("SELECT id FROM article ORDER BY id")?;
        let ids: Vec<i64> = stmt.query_map([], |r| r.get(0))?.collect::<rusqlite::Result<_>>()?;
        for id in ids {
            let id = ArticleId(id);
            let Some(article) = self.article(id)? else { continue };
            for link in self.links(id)? {
                match article.paragraphs.get(link.paragraph_index).and_then(|p| link.span.slice(p)) {
                    Some(text) if text == link.surface => {}
                    Some(text) => problems.push(format!("link {} reads {text:?}, stored {:?}", link.id, link.surface)),
                    None => problems.push(format!("link {} points outside article {id}", link.id)),
                }
            }
            for score in self.scores(id)? {
                if score.scope.paragraph_index().is_some_and(|p| p >= article.paragraphs.len()) {
                    problems.push(format!("score {} points outside article {id}", score.id));
                }
            }
        }
        Ok(problems)
    }

    fn validate_filter(&self, f: &QueryFilter) -> Result<()> {
        if let (Some(from), Some(to)) = (f.date_from, f.date_to) {
            if from > to {
                return Err(StoreError::InvalidFilter(format!("date_from {from} is after date_to {to}")));
            }
        }
        if let Some(sources) = &f.sources {
            let known: BTreeSet<String> = self.media()?.into_iter().map(|m| m.name).collect();
            if let Some(unknown) = sources.iter().find(|s| !known.contains(*s)) {
                return Err(StoreError::InvalidFilter(format!("unknown source {unknown:?}")));
            }
        }
        Ok(())
    }

    /// Runs a search. Rows come in a stable order: date, article, entity,
    /// scope, paragraph, sentence, then tool and link id.
    pub fn query_rows(&self, f: &QueryFilter) -> Result<Vec<ResultRow>> {
        self.validate_filter(f)?;
        let mut sql = String::from(
            "SELECT ae.id, e.full_name, e.id, e.category, a.modified_at, a.url, ae.tagger,
                    s.paragraph_index, s.sentence_index, s.score, s.tool, m.name, m.url
             FROM article_entity ae
             JOIN entity e ON e.id = ae.entity_id
             JOIN article a ON a.id = ae.article_id
             JOIN media m ON m.id = a.media_id
             JOIN sentiment s ON s.article_id = ae.article_id
                AND (s.scope = 'ARTICLE'
                  OR (s.scope = 'PARAGRAPH' AND s.paragraph_index = ae.paragraph_index)
                  OR (s.scope = 'SENTENCE' AND s.paragraph_index = ae.paragraph_index
                                           AND s.sentence_index = ae.sentence_index))
             WHERE 1 = 1",
        );
        let mut args: Vec<Value> = Vec::new();
        let mut bind = |sql: &mut String, clause: &str, v: Value| {
            args.push(v);
            sql.push_str(&clause.replace('?', &format!("?{}", args.len())));
        };
        if !f.entity.is_empty() {
            bind(&mut sql, " AND qc_icontains(e.full_name, ?)", Value::Text(f.entity.clone()));
        }
        if let Some(sources) = &f.sources {
            if sources.is_empty() {
                return Ok(Vec::new());
            }
            sql.push_str(" AND m.name IN (");
            for (i, s) in sources.iter().enumerate() {
                bind(&mut sql, if i == 0 { "?" } else { ", ?" }, Value::Text(s.clone()));
            }
            sql.push(')');
        }
        if let Some(from) = f.date_from {
            bind(&mut sql, " AND substr(a.modified_at, 1, 10) >= ?", Value::Text(from.to_string()));
        }
        if let Some(to) = f.date_to {
            bind(&mut sql, " AND substr(a.modified_at, 1, 10) <= ?", Value::Text(to.to_string()));
        }
        if let Some(t) = &f.tagger {
            bind(&mut sql, " AND ae.tagger = ?", Value::Text(t.clone()));
        }
        if let Some(t) = &f.tool {
            bind(&mut sql, " AND s.tool = ?", Value::Text(t.clone()));
        }
        if let Some(k) = f.scope {
            bind(&mut sql, " AND s.scope = ?", Value::Text(k.as_str().to_string()));
        }
        sql.push_str(
            " ORDER BY a.modified_at, a.id, e.id,
                 CASE s.scope WHEN 'ARTICLE' THEN 0 WHEN 'PARAGRAPH' THEN 1 ELSE 2 END,
                 s.paragraph_index, s.sentence_index, s.tool, ae.id, s.id",
        );

        let mut stmt = self.conn.prepare(&sql)?;
        let rows = stmt.query_map(params_from_iter(args.iter()), |r| {
            Ok((
                r.get::<_, i64>(0)?,
                r.get::<_, String>(1)?,
                r.get::<_, i64>(2)?,
                r.get::<_, String>(3)?,
                r.get::<_, String>(4)?,
                r.get::<_, String>(5)?,
                r.get::<_, String>(6)?,
                r.get::<_, Option<i64>>(7)?,
                r.get::<_, Option<i64>>(8)?,
                r.get::<_, f64>(9)?,
                r.get::<_, String>(10)?,
                r.get::<_, String>(11)?,
                r.get::<_, String>(12)?,
            ))
        })?;
        rows.map(|row| {
            let (id, entity, entity_id, category, modified, url, ner_tool, paragraph, sentence, score, tool, media_name, media_url) =
                row?;
            Ok(ResultRow {
                id,
                entity,
                entity_id,
                entity_type: parse_category(&category)?.code(),
                date: parse_ts(&modified)?.date_naive(),
                url,
                ner_tool,
                paragraph,
                sentence,
                sentiment_score: score,
                sentiment_tool: tool,
                media_name,
                media_url,
            })
        })
        .collect()
    }
}
