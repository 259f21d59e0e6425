//! Entity mention tagging: the builtin heuristic tagger, the external
//! adapter protocol, and fan-out across every configured tagger.

mod builtin;
mod external;
mod gazetteer;

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use builtin::{is_acronym_token, tag_builtin, BuiltinTagger};
pub use external::{tag_external, AdapterMention, AdapterRequest, AdapterResponse};
pub use gazetteer::{gazetteer_key, Gazetteer};

use crate::model::{Category, Span};
use crate::segment::SegmentedArticle;

pub const BUILTIN_TAGGER: &str = "builtin";

#[derive(Debug, thiserror::Error)]
pub enum NerError {
    #[error("tagger {0:?} timed out")]
    AdapterTimeout(String),
    #[error("tagger {tagger:?} protocol error: {reason}")]
    AdapterProtocolError { tagger: String, reason: String },
    #[error("tagger {tagger:?}: span {start}..{end} of paragraph {paragraph} reads {actual:?}, not {surface:?}")]
    SpanMismatch { tagger: String, paragraph: usize, start: usize, end: usize, surface: String, actual: String },
    #[error("tagger {0:?} is configured more than once")]
    DuplicateTagger(String),
    #[error("invalid tagger spec: {0}")]
    InvalidSpec(String),
    #[error("gazetteer: {0}")]
    Gazetteer(String),
    #[error("could not run tagger {tagger:?}: {source}")]
    Spawn { tagger: String, source: std::io::Error },
}

/// One tagged name occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntityMention {
    pub surface: String,
    pub category: Category,
    /// Character span in the paragraph text.
    pub span: Span,
    pub paragraph_index: usize,
    pub sentence_index: usize,
    pub tagger: String,
}

impl EntityMention {
    /// Document order: paragraph, then start offset.
    pub fn position(&self) -> (usize, usize) {
        (self.paragraph_index, self.span.start)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaggerKind {
    Builtin { default_category: Category },
    External { command: String, timeout: Duration },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggerSpec {
    pub tagger_id: String,
    pub kind: TaggerKind,
}

impl TaggerSpec {
    pub fn builtin() -> Self {
        TaggerSpec {
            tagger_id: BUILTIN_TAGGER.into(),
            kind: TaggerKind::Builtin { default_category: Category::Person },
        }
    }

    pub fn external(id: impl Into<String>, command: impl Into<String>, timeout: Duration) -> Self {
        TaggerSpec { tagger_id: id.into(), kind: TaggerKind::External { command: command.into(), timeout } }
    }

    fn validate(&self) -> Result<(), NerError> {
        if self.tagger_id.trim().is_empty() {
            return Err(NerError::InvalidSpec("empty tagger id".into()));
        }
        if let TaggerKind::External { command, timeout } = &self.kind {
            if command.trim().is_empty() {
                return Err(NerError::InvalidSpec(format!("external tagger {:?} has no command", self.tagger_id)));
            }
            if timeout.is_zero() {
                return Err(NerError::InvalidSpec(format!("external tagger {:?} has a zero timeout", self.tagger_id)));
            }
        }
        Ok(())
    }
}

/// Result of one tagger on one article. A failing tagger yields no mentions
/// and records its error.
#[derive(Debug)]
pub struct TaggerOutcome {
    pub mentions: Vec<EntityMention>,
    pub error: Option<NerError>,
}

/// A validated set of taggers with distinct ids.
#[derive(Debug, Clone)]
pub struct TaggerSet {
    specs: Vec<TaggerSpec>,
    gazetteer: Arc<Gazetteer>,
}

impl TaggerSet {
    pub fn new(specs: Vec<TaggerSpec>, gazetteer: Arc<Gazetteer>) -> Result<Self, NerError> {
        let mut seen = HashSet::new();
        for spec in &specs {
            spec.validate()?;
            if !seen.insert(spec.tagger_id.as_str()) {
                return Err(NerError::DuplicateTagger(spec.tagger_id.clone()));
            }
        }
        Ok(TaggerSet { specs, gazetteer })
    }

    pub fn specs(&self) -> &[TaggerSpec] {
        &self.specs
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.specs.iter().map(|s| s.tagger_id.as_str())
    }

    pub fn gazetteer(&self) -> &Gazetteer {
        &self.gazetteer
    }

    pub fn run_one(&self, spec: &TaggerSpec, seg: &SegmentedArticle) -> Result<Vec<EntityMention>, NerError> {
        match &spec.kind {
            TaggerKind::Builtin { default_category } => {
                let tagger = BuiltinTagger { id: spec.tagger_id.clone(), default_category: *default_category };
                Ok(tagger.tag(seg, &self.gazetteer))
            }
            TaggerKind::External { .. } => tag_external(seg, spec),
        }
    }

    /// Runs every tagger concurrently. Failures are isolated per tagger.
    pub fn tag_all(&self, seg: &SegmentedArticle) -> BTreeMap<String, TaggerOutcome> {
        std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .specs
                .iter()
                .map(|spec| (spec, scope.spawn(move || self.run_one(spec, seg))))
                .collect();
            handles
                .into_iter()
                .map(|(spec, h)| {
                    let outcome = match h.join() {
                        Ok(Ok(mentions)) => TaggerOutcome { mentions, error: None },
                        Ok(Err(e)) => {
                            tracing::warn!(tagger = %spec.tagger_id, error = %e, "tagger failed");
                            TaggerOutcome { mentions: Vec::new(), error: Some(e) }
                        }
                        Err(_) => TaggerOutcome {
                            mentions: Vec::new(),
                            error: Some(NerError::AdapterProtocolError {
                                tagger: spec.tagger_id.clone(),
                                reason: "tagger panicked".into(),
                            }),
                        },
                    };
                    (spec.tagger_id.clone(), outcome)
                })
                .collect()
        })
    }
}
