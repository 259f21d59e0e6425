//! TOML configuration shared by the ingest, service and report commands.
//!
//! ```toml
//! database = "qc.db"
//!
//! [fetch]
//! user_agent = "qc-ingest/0.1"
//! timeout_secs = 30
//! min_request_interval_ms = 1000   # per-host rate floor
//! mirror_dir = "mirror"            # optional: serve URLs from disk
//!
//! [analysis]
//! sentiment_tools = ["lexrule-1", "lexrule-5class"]
//! global_substring_merge = false
//! # lexicon, boosters, negators, abbreviation_guard, abbreviations,
//! # gazetteer, honorifics, org_suffixes: optional file overrides
//!
//! [service]
//! preview_limit = 20
//! export_ttl_secs = 3600
//!
//! [[sources]]
//! media_name = "Slate"
//! feed_url = "https://slate.com/feeds/all.rss"
//! media_url = "https://slate.com"
//! poll_interval_secs = 7200
//! selectors = { content = "article" }
//!
//! [[taggers]]
//! id = "builtin"
//! kind = "builtin"
//!
//! [[taggers]]
//! id = "spacy"
//! kind = "external"
//! command = "python3 adapters/spacy_adapter.py"
//! timeout_secs = 60
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use url::Url;

use crate::ingest::{FeedSource, Selectors};
use crate::model::Category;
use crate::ner::{Gazetteer, TaggerSet, TaggerSpec};
use crate::resolve::{AbbreviationCorpus, MergePolicy};
use crate::segment::AbbreviationGuard;
use crate::sentiment::{SentimentLexicon, SentimentTool, COMPOUND_TOOL, FIVE_CLASS_TOOL};

pub const DEFAULT_POLL_INTERVAL_SECS: u64 = 7200;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub database: PathBuf,
    #[serde(default)]
    pub fetch: FetchConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub service: ServiceConfig,
    #[serde(default)]
    pub sources: Vec<SourceConfig>,
    #[serde(default = "default_taggers")]
    pub taggers: Vec<TaggerConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FetchConfig {
    pub user_agent: String,
    pub timeout_secs: u64,
    pub min_request_interval_ms: u64,
    pub mirror_dir: Option<PathBuf>,
}

impl Default for FetchConfig {
    fn default() -> Self {
        FetchConfig {
            user_agent: concat!("qc-ingest/", env!("CARGO_PKG_VERSION")).into(),
            timeout_secs: 30,
            min_request_interval_ms: 0,
            mirror_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub sentiment_tools: Vec<String>,
    /// Titles are not scored; only `false` is accepted.
    pub score_title: bool,
    pub global_substring_merge: bool,
    pub lexicon: Option<PathBuf>,
    pub boosters: Option<PathBuf>,
    pub negators: Option<PathBuf>,
    pub abbreviation_guard: Option<PathBuf>,
    pub abbreviations: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub honorifics: Option<PathBuf>,
    pub org_suffixes: Option<PathBuf>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            sentiment_tools: vec![COMPOUND_TOOL.into(), FIVE_CLASS_TOOL.into()],
            score_title: false,
            global_substring_merge: false,
            lexicon: None,
            boosters: None,
            negators: None,
            abbreviation_guard: None,
            abbreviations: None,
            gazetteer: None,
            honorifics: None,
            org_suffixes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
    pub preview_limit: usize,
    pub export_ttl_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { bind: "127.0.0.1".into(), port: 8080, preview_limit: 20, export_ttl_secs: 3600 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub media_name: String,
    pub feed_url: Url,
    pub media_url: Url,
    #[serde(default = "default_poll")]
    pub poll_interval_secs: u64,
    #[serde(default)]
    pub selectors: Selectors,
}

fn default_poll() -> u64 {
    DEFAULT_POLL_INTERVAL_SECS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaggerKindConfig {
    Builtin,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaggerConfig {
    pub id: String,
    pub kind: TaggerKindConfig,
    pub command: Option<String>,
    #[serde(default = "default_tagger_timeout")]
    pub timeout_secs: u64,
    pub default_category: Option<Category>,
}

fn default_tagger_timeout() -> u64 {
    30
}

fn default_taggers() -> Vec<TaggerConfig> {
    vec![TaggerConfig {
        id: crate::ner::BUILTIN_TAGGER.into(),
        kind: TaggerKindConfig::Builtin,
        command: None,
        timeout_secs: default_tagger_timeout(),
        default_category: None,
    }]
}

fn is_absolute_web_url(u: &Url) -> bool {
    matches!(u.scheme(), "http" | "https" | "file")
}

impl Config {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: Config =
            toml::from_str(text).map_err(|source| ConfigError::Parse { path: "<config>".into(), source })?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            ConfigError::Parse { source, .. } => ConfigError::Parse { path: path.display().to_string(), source },
            other => other,
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.database);
        if let Some(p) = &mut self.fetch.mirror_dir {
            fix(p);
        }
        let a = &mut self.analysis;
        for p in [
            &mut a.lexicon,
            &mut a.boosters,
            &mut a.negators,
            &mut a.abbreviation_guard,
            &mut a.abbreviations,
            &mut a.gazetteer,
            &mut a.honorifics,
            &mut a.org_suffixes,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut names = HashSet::new();
        for s in &self.sources {
            if s.media_name.trim().is_empty() {
                return Err(invalid("source with empty media_name"));
            }
            if !names.insert(s.media_name.as_str()) {
                return Err(invalid(format!("source {:?} listed twice", s.media_name)));
            }
            if !is_absolute_web_url(&s.feed_url) || !is_absolute_web_url(&s.media_url) {
                return Err(invalid(format!("source {:?}: feed_url and media_url must be http(s) or file URLs", s.media_name)));
            }
            if s.poll_interval_secs == 0 {
                return Err(invalid(format!("source {:?}: poll_interval_secs must be positive", s.media_name)));
            }
            s.selectors.validate().map_err(|e| invalid(format!("source {:?}: {e}", s.media_name)))?;
        }
        if self.analysis.score_title {
            return Err(invalid("analysis.score_title = true is not supported; titles are never scored"));
        }
        if self.analysis.sentiment_tools.is_empty() {
            return Err(invalid("analysis.sentiment_tools is empty"));
        }
        for t in &self.analysis.sentiment_tools {
            SentimentTool::builtin(t).map_err(|e| invalid(e.to_string()))?;
        }
        if self.service.preview_limit == 0 || self.service.export_ttl_secs == 0 {
            return Err(invalid("service.preview_limit and service.export_ttl_secs must be positive"));
        }
        self.tagger_specs()?;
        Ok(())
    }

    pub fn feed_sources(&self) -> Vec<FeedSource> {
        self.sources
            .iter()
            .map(|s| FeedSource {
                media_name: s.media_name.clone(),
                feed_url: s.feed_url.clone(),
                media_url: s.media_url.clone(),
                poll_interval: Duration::from_secs(s.poll_interval_secs),
                selectors: s.selectors.clone(),
            })
            .collect()
    }

    pub fn tagger_specs(&self) -> Result<Vec<TaggerSpec>, ConfigError> {
        let mut seen = HashSet::new();
        self.taggers
            .iter()
            .map(|t| {
                if !seen.insert(t.id.as_str()) {
                    return Err(invalid(format!("tagger {:?} configured twice", t.id)));
                }
                match t.kind {
                    TaggerKindConfig::Builtin => {
                        if t.command.is_some() {
                            return Err(invalid(format!("builtin tagger {:?} takes no command", t.id)));
                        }
                        let mut spec = TaggerSpec::builtin();
                        spec.tagger_id = t.id.clone();
                        if let Some(c) = t.default_category {
                            spec.kind = crate::ner::TaggerKind::Builtin { default_category: c };
                        }
                        Ok(spec)
                    }
                    TaggerKindConfig::External => {
                        let command = t
                            .command
                            .clone()
                            .filter(|c| !c.trim().is_empty())
                            .ok_or_else(|| invalid(format!("external tagger {:?} needs a command", t.id)))?;
                        if t.timeout_secs == 0 {
                            return Err(invalid(format!("tagger {:?}: timeout_secs must be positive", t.id)));
                        }
                        Ok(TaggerSpec::external(t.id.clone(), command, Duration::from_secs(t.timeout_secs)))
                    }
                }
            })
            .collect()
    }

    pub fn merge_policy(&self) -> MergePolicy {
        MergePolicy { global_substring_merge: self.analysis.global_substring_merge }
    }

    pub fn sentiment_tools(&self) -> Vec<SentimentTool> {
        self.analysis
            .sentiment_tools
            .iter()
            .map(|t| SentimentTool::builtin(t).expect("validated"))
            .collect()
    }

    pub fn lexicon(&self) -> Result<SentimentLexicon, ConfigError> {
        let a = &self.analysis;
        match (&a.lexicon, &a.boosters, &a.negators) {
            (None, None, None) => Ok(SentimentLexicon::bundled()),
            (Some(l), Some(b), Some(n)) => SentimentLexicon::load(l, b, n).map_err(|e| invalid(e.to_string())),
            _ => Err(invalid("analysis.lexicon, boosters and negators must be set together")),
        }
    }

    pub fn abbreviation_guard(&self) -> Result<AbbreviationGuard, ConfigError> {
        match &self.analysis.abbreviation_guard {
            None => Ok(AbbreviationGuard::bundled()),
            Some(p) => AbbreviationGuard::load(p).map_err(|source| ConfigError::Io { path: p.display().to_string(), source }),
        }
    }

    pub fn abbreviation_corpus(&self) -> Result<AbbreviationCorpus, ConfigError> {
        match &self.analysis.abbreviations {
            None => Ok(AbbreviationCorpus::bundled()),
            Some(p) => AbbreviationCorpus::load(p).map_err(|e| invalid(e.to_string())),
        }
    }

    pub fn gazetteer(&self) -> Result<Gazetteer, ConfigError> {
        let a = &self.analysis;
        match (&a.gazetteer, &a.honorifics, &a.org_suffixes) {
            (None, None, None) => Ok(Gazetteer::bundled()),
            (Some(g), Some(h), Some(o)) => Gazetteer::load(g, h, o).map_err(|e| invalid(e.to_string())),
            _ => Err(invalid("analysis.gazetteer, honorifics and org_suffixes must be set together")),
        }
    }

    pub fn tagger_set(&self) -> Result<TaggerSet, ConfigError> {
        TaggerSet::new(self.tagger_specs()?, Arc::new(self.gazetteer()?)).map_err(|e| invalid(e.to_string()))
    }
}
