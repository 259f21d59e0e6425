//! News content analysis: feed ingestion, segmentation, lexicon-rule
//! sentiment, entity tagging and resolution, SQLite storage and corpus
//! analytics.

pub mod analytics;
pub mod config;
pub mod ingest;
pub mod model;
pub mod ner;
pub mod resolve;
pub mod segment;
pub mod sentiment;
pub mod store;

pub use model::{Article, ArticleId, Category, EntityId, EntityType, MediaId, Scope, ScopeKind, Span};
