//! Lexicon-and-rules sentiment scoring.
//!
//! Each lexicon hit contributes its valence, adjusted by ALL-CAPS emphasis,
//! preceding intensifiers and preceding negation. The adjusted sum plus
//! exclamation emphasis is squashed into `[-1, 1]` with
//! `x / sqrt(x^2 + ALPHA)`.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::Scope;
use crate::segment::{SegmentedArticle, Token};

/// Normalization constant of the compound score.
pub const ALPHA: f64 = 15.0;
/// Multiplier applied to a valence preceded by a negator.
pub const NEGATION_SCALAR: f64 = -0.74;
/// Emphasis added to an all-caps lexicon word in mixed-case text.
pub const CAPS_INCREMENT: f64 = 0.733;
/// Emphasis added per exclamation mark.
pub const EXCLAMATION_INCREMENT: f64 = 0.292;
pub const MAX_EXCLAMATIONS: usize = 3;
/// How far back negators and intensifiers are looked for.
pub const LOOKBACK: usize = 3;
/// Intensifier weight by distance (1, 2, 3 words back).
pub const BOOSTER_DECAY: [f64; LOOKBACK] = [1.0, 0.95, 0.90];

pub const COMPOUND_TOOL: &str = "lexrule-1";
pub const FIVE_CLASS_TOOL: &str = "lexrule-5class";

const BUNDLED_VALENCES: &str = include_str!("../data/valence_lexicon.tsv");
const BUNDLED_BOOSTERS: &str = include_str!("../data/boosters.tsv");
const BUNDLED_NEGATORS: &str = include_str!("../data/negators.txt");

#[derive(Debug, thiserror::Error)]
pub enum SentimentError {
    #[error("compound score {0} is outside [-1, 1]")]
    OutOfRange(f64),
    #[error("{file} line {line}: {reason}")]
    Lexicon { file: &'static str, line: usize, reason: String },
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("unknown sentiment tool {0:?}")]
    UnknownTool(String),
}

#[derive(Debug, Clone, Default)]
pub struct SentimentLexicon {
    valences: HashMap<String, f64>,
    boosters: HashMap<String, f64>,
    negators: HashSet<String>,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn parse_weights(file: &'static str, text: &str) -> Result<HashMap<String, f64>, SentimentError> {
    let err = |line, reason: String| SentimentError::Lexicon { file, line, reason };
    let mut out = HashMap::new();
    for (line, l) in content_lines(text) {
        let mut cols = l.split('\t');
        let token = cols.next().unwrap_or_default().trim();
        let value = cols
            .next()
            .ok_or_else(|| err(line, "expected token<TAB>value".into()))?
            .trim();
        if token.is_empty() {
            return Err(err(line, "empty token".into()));
        }
        if token != token.to_lowercase() {
            return Err(err(line, format!("token {token:?} is not lowercase")));
        }
        let value: f64 = value
            .parse()
            .map_err(|_| err(line, format!("bad number {value:?}")))?;
        if !value.is_finite() {
            return Err(err(line, "value is not finite".into()));
        }
        if out.insert(token.to_string(), value).is_some() {
            return Err(err(line, format!("duplicate token {token:?}")));
        }
    }
    Ok(out)
}

fn normalize_word(token: &str) -> String {
    token.to_lowercase().replace('\u{2019}', "'")
}

impl SentimentLexicon {
    /// Parses the three lexicon files: `token<TAB>valence` lines,
    /// `token<TAB>increment` lines, and one negator per line.
    pub fn parse(valences: &str, boosters: &str, negators: &str) -> Result<Self, SentimentError> {
        let valences = parse_weights("valence lexicon", valences)?;
        let boosters = parse_weights("booster list", boosters)?;
        let negators = content_lines(negators)
            .map(|(_, l)| l.trim().to_lowercase())
            .collect();
        Ok(SentimentLexicon { valences, boosters, negators })
    }

    pub fn load(valences: &Path, boosters: &Path, negators: &Path) -> Result<Self, SentimentError> {
        let read = |p: &Path| {
            fs::read_to_string(p).map_err(|source| SentimentError::Io { path: p.display().to_string(), source })
        };
        Self::parse(&read(valences)?, &read(boosters)?, &read(negators)?)
    }

    /// The shipped lexicon (about 7,500 entries).
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_VALENCES, BUNDLED_BOOSTERS, BUNDLED_NEGATORS)
            .expect("bundled lexicon is well-formed")
    }

    pub fn with_valence(mut self, token: &str, valence: f64) -> Self {
        self.valences.insert(token.to_lowercase(), valence);
        self
    }

    pub fn with_booster(mut self, token: &str, increment: f64) -> Self {
        self.boosters.insert(token.to_lowercase(), increment);
        self
    }

    pub fn with_negator(mut self, token: &str) -> Self {
        self.negators.insert(token.to_lowercase());
        self
    }

    pub fn valence(&self, token: &str) -> Option<f64> {
        self.valences.get(&normalize_word(token)).copied()
    }

    pub fn booster(&self, token: &str) -> Option<f64> {
        self.boosters.get(&normalize_word(token)).copied()
    }

    pub fn is_negator(&self, token: &str) -> bool {
        self.negators.contains(&normalize_word(token))
    }

    pub fn len(&self) -> usize {
        self.valences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valences.is_empty()
    }
}

fn is_all_caps(word: &str) -> bool {
    let mut letters = word.chars().filter(|c| c.is_alphabetic()).peekable();
    letters.peek().is_some() && letters.all(char::is_uppercase)
}

/// Adjusted valence sum of a token stream, including exclamation emphasis.
/// The compound score is a monotone odd function of this value.
pub fn valence_sum<S: AsRef<str>>(tokens: &[S], lexicon: &SentimentLexicon) -> f64 {
    let words: Vec<&str> = tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .collect();
    let any_caps = words.iter().any(|w| is_all_caps(w));
    let any_lower = words
        .iter()
        .any(|w| w.chars().any(char::is_alphabetic) && !is_all_caps(w));
    let caps_differ = any_caps && any_lower;

    let mut sum = 0.0;
    for (i, word) in words.iter().enumerate() {
        if lexicon.booster(word).is_some() {
            continue;
        }
        let Some(base) = lexicon.valence(word) else { continue };
        let sign = if base >= 0.0 { 1.0 } else { -1.0 };
        let mut valence = base;
        if caps_differ && is_all_caps(word) {
            valence += sign * CAPS_INCREMENT;
        }
        let mut negated = false;
        for d in 1..=LOOKBACK.min(i) {
            let prev = words[i - d];
            if let Some(inc) = lexicon.booster(prev) {
                valence += sign * inc * BOOSTER_DECAY[d - 1];
            }
            negated |= lexicon.is_negator(prev);
        }
        if negated {
            valence *= NEGATION_SCALAR;
        }
        sum += valence;
    }

    let bangs = tokens
        .iter()
        .map(|t| t.as_ref().matches('!').count())
        .sum::<usize>()
        .min(MAX_EXCLAMATIONS);
    let emphasis = bangs as f64 * EXCLAMATION_INCREMENT;
    if sum > 0.0 {
        sum += emphasis;
    } else if sum < 0.0 {
        sum -= emphasis;
    }
    sum
}

/// Squashes an adjusted valence sum into `[-1, 1]`.
pub fn normalize(sum: f64) -> f64 {
    (sum / (sum * sum + ALPHA).sqrt()).clamp(-1.0, 1.0)
}

/// Compound score of a token stream; 0.0 when nothing matches the lexicon.
pub fn score_tokens<S: AsRef<str>>(tokens: &[S], lexicon: &SentimentLexicon) -> f64 {
    normalize(valence_sum(tokens, lexicon))
}

/// Maps a compound score onto the 0 (very negative) .. 4 (very positive)
/// scale with 2 as neutral.
pub fn to_five_class(compound: f64) -> Result<u8, SentimentError> {
    if !(-1.0..=1.0).contains(&compound) {
        return Err(SentimentError::OutOfRange(compound));
    }
    Ok(match compound {
        c if c <= -0.6 => 0,
        c if c <= -0.05 => 1,
        c if c < 0.05 => 2,
        c if c < 0.6 => 3,
        _ => 4,
    })
}

/// Which number a tool reports as its score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Continuous compound score in `[-1, 1]`.
    Compound,
    /// Integer class 0..=4.
    FiveClass,
}

impl Scale {
    pub fn as_str(self) -> &'static str {
        match self {
            Scale::Compound => "compound",
            Scale::FiveClass => "five_class",
        }
    }

    pub fn parse(s: &str) -> Option<Scale> {
        match s {
            "compound" => Some(Scale::Compound),
            "five_class" => Some(Scale::FiveClass),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentimentTool {
    pub id: String,
    pub scale: Scale,
}

impl SentimentTool {
    pub fn compound() -> Self {
        SentimentTool { id: COMPOUND_TOOL.into(), scale: Scale::Compound }
    }

    pub fn five_class() -> Self {
        SentimentTool { id: FIVE_CLASS_TOOL.into(), scale: Scale::FiveClass }
    }

    pub fn builtin(id: &str) -> Result<Self, SentimentError> {
        match id {
            COMPOUND_TOOL => Ok(Self::compound()),
            FIVE_CLASS_TOOL => Ok(Self::five_class()),
            other => Err(SentimentError::UnknownTool(other.to_string())),
        }
    }

    pub fn defaults() -> Vec<Self> {
        vec![Self::compound(), Self::five_class()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentScore {
    pub scope: Scope,
    pub compound: f64,
    pub five_class: u8,
    pub tool: String,
    pub scale: Scale,
}

impl SentimentScore {
    /// The tool's native score: the compound value or the class as a real.
    pub fn value(&self) -> f64 {
        match self.scale {
            Scale::Compound => self.compound,
            Scale::FiveClass => f64::from(self.five_class),
        }
    }
}

fn texts<'a>(tokens: impl Iterator<Item = &'a Token>) -> Vec<&'a str> {
    tokens.map(|t| t.text.as_str()).collect()
}

/// Scores an article at every granularity: the article, then each
/// paragraph followed by its sentences.
pub fn score_article(seg: &SegmentedArticle, lexicon: &SentimentLexicon, tool: &SentimentTool) -> Vec<SentimentScore> {
    if seg.paragraphs.is_empty() {
        return Vec::new();
    }
    let make = |scope, tokens: Vec<&str>| {
        let compound = score_tokens(&tokens, lexicon);
        SentimentScore {
            scope,
            compound,
            five_class: to_five_class(compound).expect("normalized score is in range"),
            tool: tool.id.clone(),
            scale: tool.scale,
        }
    };
    let mut out = Vec::with_capacity(crate::segment::expected_score_count(seg));
    out.push(make(Scope::Article, texts(seg.tokens())));
    for p in &seg.paragraphs {
        let para_tokens = texts(p.sentences.iter().flat_map(|s| s.tokens.iter()));
        out.push(make(Scope::Paragraph { paragraph: p.index }, para_tokens));
        for s in &p.sentences {
            out.push(make(
                Scope::Sentence { paragraph: p.index, sentence: s.index_in_paragraph },
                texts(s.tokens.iter()),
            ));
        }
    }
    out
}
