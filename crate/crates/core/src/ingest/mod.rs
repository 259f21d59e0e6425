//! Feed polling, page fetching and article extraction, and the pipeline
//! that turns fetched pages into stored, analyzed articles.

mod clock;
mod extract;
mod feed;
mod fetch;
mod pipeline;
mod scheduler;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use url::Url;

pub use clock::{Clock, ManualClock, SystemClock};
pub use extract::{extract_article, extract_page, ExtractError, ExtractedPage, Selectors};
pub use feed::{fetch_feed, parse_feed, write_rss, FeedItem, MalformedFeed};
pub use fetch::{FetchError, Fetcher, HttpFetcher, MirrorFetcher, StaticFetcher};
pub use pipeline::{Analyzer, ArticleAnalysis, CycleReport, ItemFailure, Pipeline, SourceReport};
pub use scheduler::{expected_cycles, run_schedule, Tick};

use crate::resolve::ResolveError;
use crate::store::StoreError;

pub const DEFAULT_POLL_INTERVAL: Duration = Duration::from_secs(2 * 60 * 60);

/// One media outlet's feed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedSource {
    pub media_name: String,
    pub feed_url: Url,
    pub media_url: Url,
    pub poll_interval: Duration,
    #[serde(default)]
    pub selectors: Selectors,
}

impl FeedSource {
    pub fn new(media_name: impl Into<String>, feed_url: Url, media_url: Url) -> Self {
        FeedSource {
            media_name: media_name.into(),
            feed_url,
            media_url,
            poll_interval: DEFAULT_POLL_INTERVAL,
            selectors: Selectors::default(),
        }
    }

    pub fn with_poll_interval(mut self, d: Duration) -> Self {
        self.poll_interval = d;
        self
    }

    pub fn with_selectors(mut self, s: Selectors) -> Self {
        self.selectors = s;
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error(transparent)]
    MalformedFeed(#[from] MalformedFeed),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
}
