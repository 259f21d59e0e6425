//! Adapter protocol for out-of-process taggers.
//!
//! The adapter command receives one JSON request on stdin and must print one
//! JSON response on stdout before its timeout:
//!
//! ```text
//! request:  {"article_id": "...", "paragraphs": ["...", ...]}
//! response: {"mentions": [{"p": 0, "s": 0, "start": 0, "end": 5,
//!                          "surface": "...", "category": "PERSON"}]}
//! ```
//!
//! Offsets are character offsets into the paragraph text. Spans that do not
//! reproduce their surface are rejected, as are overlapping spans.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::model::{Category, Span};
use crate::segment::SegmentedArticle;

use super::{EntityMention, NerError, TaggerKind, TaggerSpec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterRequest {
    pub article_id: String,
    pub paragraphs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterResponse {
    pub mentions: Vec<AdapterMention>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterMention {
    pub p: usize,
    pub s: usize,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub category: Category,
}

impl AdapterRequest {
    pub fn for_article(seg: &SegmentedArticle) -> Self {
        AdapterRequest {
            article_id: seg.article_key.clone(),
            paragraphs: seg.paragraphs.iter().map(|p| p.text.clone()).collect(),
        }
    }
}

fn shell(command: &str) -> Command {
    if cfg!(windows) {
        let mut c = Command::new("cmd");
        c.arg("/C").arg(command);
        c
    } else {
        let mut c = Command::new("sh");
        c.arg("-c").arg(command);
        c
    }
}

/// Runs `command`, feeding it `input`; returns stdout, or `None` on timeout.
fn run_with_timeout(tagger: &str, command: &str, input: Vec<u8>, timeout: Duration) -> Result<Option<Vec<u8>>, NerError> {
    let mut child = shell(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|source| NerError::Spawn { tagger: tagger.to_string(), source })?;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let mut stdout = child.stdout.take().expect("piped stdout");
    std::thread::spawn(move || {
        // A broken pipe here means the adapter exited early; the exit status
        // and output are checked below.
        let _ = stdin.write_all(&input);
    });
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let res = stdout.read_to_end(&mut buf).map(|_| buf);
        let _ = tx.send(res);
    });

    match rx.recv_timeout(timeout) {
        Ok(Ok(out)) => {
            let status = child.wait().map_err(|source| NerError::Spawn { tagger: tagger.to_string(), source })?;
            if !status.success() {
                return Err(NerError::AdapterProtocolError {
                    tagger: tagger.to_string(),
                    reason: format!("adapter exited with {status}"),
                });
            }
            Ok(Some(out))
        }
        Ok(Err(e)) => {
            let _ = child.kill();
            let _ = child.wait();
            Err(NerError::AdapterProtocolError { tagger: tagger.to_string(), reason: format!("reading output: {e}") })
        }
        Err(_) => {
            let _ = child.kill();
            let _ = child.wait();
            Ok(None)
        }
    }
}

/// Checks an adapter response against the article and converts it into
/// mentions stamped with `tagger`. Sentence indices are recomputed from the
/// article's own segmentation.
pub fn validate_response(seg: &SegmentedArticle, tagger: &str, response: AdapterResponse) -> Result<Vec<EntityMention>, NerError> {
    let protocol = |reason: String| NerError::AdapterProtocolError { tagger: tagger.to_string(), reason };
    let mut mentions = Vec::with_capacity(response.mentions.len());
    for m in response.mentions {
        let para = seg
            .paragraphs
            .get(m.p)
            .ok_or_else(|| protocol(format!("paragraph index {} out of range", m.p)))?;
        if m.start >= m.end {
            return Err(protocol(format!("empty or reversed span {}..{}", m.start, m.end)));
        }
        let span = Span::new(m.start, m.end);
        let actual = span
            .slice(&para.text)
            .ok_or_else(|| protocol(format!("span {}..{} exceeds paragraph {}", m.start, m.end, m.p)))?;
        if actual != m.surface {
            return Err(NerError::SpanMismatch {
                tagger: tagger.to_string(),
                paragraph: m.p,
                start: m.start,
                end: m.end,
                surface: m.surface,
                actual: actual.to_string(),
            });
        }
        let sentence = para
            .sentence_at(span.start)
            .ok_or_else(|| protocol(format!("span {}..{} starts between sentences", m.start, m.end)))?;
        mentions.push(EntityMention {
            surface: m.surface,
            category: m.category,
            span,
            paragraph_index: m.p,
            sentence_index: sentence,
            tagger: tagger.to_string(),
        });
    }
    mentions.sort_by_key(EntityMention::position);
    for pair in mentions.windows(2) {
        if pair[0].paragraph_index == pair[1].paragraph_index && pair[0].span.overlaps(&pair[1].span) {
            return Err(protocol(format!(
                "overlapping mentions {:?} and {:?} in paragraph {}",
                pair[0].surface, pair[1].surface, pair[0].paragraph_index
            )));
        }
    }
    Ok(mentions)
}

/// Runs an external adapter over one article.
pub fn tag_external(seg: &SegmentedArticle, spec: &TaggerSpec) -> Result<Vec<EntityMention>, NerError> {
    let TaggerKind::External { command, timeout } = &spec.kind else {
        return Err(NerError::InvalidSpec(format!("{:?} is not an external tagger", spec.tagger_id)));
    };
    let tagger = spec.tagger_id.as_str();
    let request = serde_json::to_vec(&AdapterRequest::for_article(seg)).expect("request serializes");
    let output = run_with_timeout(tagger, command, request, *timeout)?
        .ok_or_else(|| NerError::AdapterTimeout(tagger.to_string()))?;
    let response: AdapterResponse = serde_json::from_slice(&output).map_err(|e| NerError::AdapterProtocolError {
        tagger: tagger.to_string(),
        reason: format!("malformed response: {e}"),
    })?;
    validate_response(seg, tagger, response)
}
