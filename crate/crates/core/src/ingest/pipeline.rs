//! Fetch, extract, analyze and commit.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::Serialize;

use crate::model::Article;
use crate::ner::TaggerSet;
use crate::resolve::{AbbreviationCorpus, MergePolicy, TaggerResolution};
use crate::segment::{segment_article, AbbreviationGuard, SegmentedArticle};
use crate::sentiment::{score_article, SentimentLexicon, SentimentScore, SentimentTool};
use crate::store::{Store, UpsertStatus};

use super::{extract_article, fetch_feed, Clock, FeedSource, Fetcher, IngestError};

/// Everything derived from one article's text.
#[derive(Debug, Clone)]
pub struct ArticleAnalysis {
    pub segmented: SegmentedArticle,
    pub scores: Vec<SentimentScore>,
    pub resolutions: Vec<TaggerResolution>,
    /// Taggers that failed on this article, with the reason.
    pub tagger_errors: BTreeMap<String, String>,
}

/// The text analysis half of the pipeline, independent of fetching and
/// storage.
#[derive(Debug, Clone)]
pub struct Analyzer {
    pub guard: AbbreviationGuard,
    pub lexicon: SentimentLexicon,
    pub tools: Vec<SentimentTool>,
    pub taggers: TaggerSet,
    pub corpus: AbbreviationCorpus,
}

impl Analyzer {
    /// Bundled resources, both sentiment tools and the builtin tagger.
    pub fn bundled() -> Self {
        Analyzer {
            guard: AbbreviationGuard::bundled(),
            lexicon: SentimentLexicon::bundled(),
            tools: SentimentTool::defaults(),
            taggers: TaggerSet::new(vec![crate::ner::TaggerSpec::builtin()], Arc::new(crate::ner::Gazetteer::bundled()))
                .expect("one builtin tagger"),
            corpus: AbbreviationCorpus::bundled(),
        }
    }

    pub fn from_config(cfg: &crate::config::Config) -> Result<Self, crate::config::ConfigError> {
        Ok(Analyzer {
            guard: cfg.abbreviation_guard()?,
            lexicon: cfg.lexicon()?,
            tools: cfg.sentiment_tools(),
            taggers: cfg.tagger_set()?,
            corpus: cfg.abbreviation_corpus()?,
        })
    }

    /// Only paragraph text is analyzed; the headline is not.
    pub fn analyze(&self, article: &Article) -> Result<ArticleAnalysis, IngestError> {
        let segmented = segment_article(article.url.as_str(), &article.paragraphs, &self.guard);
        let scores = self.tools.iter().flat_map(|t| score_article(&segmented, &self.lexicon, t)).collect();
        let mut resolutions = Vec::new();
        let mut tagger_errors = BTreeMap::new();
        for (tagger, outcome) in self.taggers.tag_all(&segmented) {
            match outcome.error {
                Some(e) => {
                    tagger_errors.insert(tagger, e.to_string());
                }
                None => resolutions.push(TaggerResolution::resolve(tagger, outcome.mentions, &self.corpus)?),
            }
        }
        Ok(ArticleAnalysis { segmented, scores, resolutions, tagger_errors })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ItemFailure {
    pub url: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SourceReport {
    pub media_name: String,
    pub items: usize,
    pub inserted: usize,
    pub replaced: usize,
    pub unchanged: usize,
    pub links: usize,
    pub scores: usize,
    /// Set when the feed itself could not be fetched or parsed.
    pub feed_error: Option<String>,
    pub failures: Vec<ItemFailure>,
    pub tagger_errors: Vec<ItemFailure>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CycleReport {
    pub started_at: DateTime<Utc>,
    pub sources: Vec<SourceReport>,
}

impl CycleReport {
    pub fn total(&self, f: impl Fn(&SourceReport) -> usize) -> usize {
        self.sources.iter().map(f).sum()
    }
}

pub struct Pipeline {
    pub analyzer: Analyzer,
    fetcher: Arc<dyn Fetcher>,
    store: Mutex<Store>,
    clock: Arc<dyn Clock>,
    policy: MergePolicy,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline").field("policy", &self.policy).finish_non_exhaustive()
    }
}

impl Pipeline {
    pub fn new(analyzer: Analyzer, fetcher: Arc<dyn Fetcher>, store: Store, clock: Arc<dyn Clock>, policy: MergePolicy) -> Self {
        Pipeline { analyzer, fetcher, store: Mutex::new(store), clock, policy }
    }

    pub fn store(&self) -> std::sync::MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn into_store(self) -> Store {
        self.store.into_inner().unwrap_or_else(|e| e.into_inner())
    }

    pub fn register_sources(&self, sources: &[FeedSource]) -> Result<(), IngestError> {
        let store = self.store();
        for s in sources {
            store.register_media(&s.media_name, s.media_url.as_str())?;
        }
        Ok(())
    }

    /// Fetches one article page and stores it. Content identical to the
    /// stored row only refreshes `fetched_at`; derived rows are kept.
    fn ingest_item(&self, source: &FeedSource, url: &url::Url, feed_published: Option<DateTime<Utc>>, report: &mut SourceReport) -> Result<(), IngestError> {
        let page = self.fetcher.fetch(url)?;
        let article = extract_article(&page, url, source, feed_published, self.clock.now())?;
        if self.store().is_current(&article)? {
            let up = self.store().upsert_article(&article)?;
            debug_assert_eq!(up.status, UpsertStatus::Unchanged);
            report.unchanged += 1;
            return Ok(());
        }
        let analysis = self.analyzer.analyze(&article)?;
        for (tagger, error) in &analysis.tagger_errors {
            report.tagger_errors.push(ItemFailure { url: url.to_string(), error: format!("{tagger}: {error}") });
        }
        let outcome = self.store().commit_article(&article, &analysis.scores, &analysis.resolutions, self.policy)?;
        match outcome.status {
            UpsertStatus::Inserted => report.inserted += 1,
            UpsertStatus::Replaced => report.replaced += 1,
            // Raced with another writer that stored the same content.
            UpsertStatus::Unchanged => report.unchanged += 1,
        }
        report.links += outcome.links;
        report.scores += outcome.scores;
        Ok(())
    }

    /// Polls one feed. Item failures are recorded and do not stop the rest.
    pub fn poll_source(&self, source: &FeedSource) -> SourceReport {
        let mut report = SourceReport { media_name: source.media_name.clone(), ..Default::default() };
        let items = match self
            .fetcher
            .fetch(&source.feed_url)
            .map_err(IngestError::from)
            .and_then(|doc| Ok(fetch_feed(source, &doc)?))
        {
            Ok(items) => items,
            Err(e) => {
                tracing::warn!(source = %source.media_name, error = %e, "feed failed");
                report.feed_error = Some(e.to_string());
                return report;
            }
        };
        report.items = items.len();
        for item in items {
            if let Err(e) = self.ingest_item(source, &item.url, item.published_at, &mut report) {
                tracing::warn!(url = %item.url, error = %e, "item failed");
                report.failures.push(ItemFailure { url: item.url.to_string(), error: e.to_string() });
            }
        }
        report
    }

    /// Polls the given sources concurrently, one thread per source.
    pub fn run_cycle(&self, sources: &[&FeedSource]) -> CycleReport {
        let started_at = self.clock.now();
        let reports = std::thread::scope(|scope| {
            let handles: Vec<_> = sources.iter().map(|s| scope.spawn(move || self.poll_source(s))).collect();
            handles
                .into_iter()
                .zip(sources)
                .map(|(h, s)| {
                    h.join().unwrap_or_else(|_| SourceReport {
                        media_name: s.media_name.clone(),
                        feed_error: Some("poller panicked".into()),
                        ..Default::default()
                    })
                })
                .collect()
        });
        CycleReport { started_at, sources: reports }
    }
}
