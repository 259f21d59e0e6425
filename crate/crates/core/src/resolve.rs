//! Entity resolution.
//!
//! Within an article, each mention links to the most recently touched entity
//! of its category whose full name contains the mention's normalized surface
//! at token boundaries. Acronyms are expanded first, from earlier names in the
//! same article or from an abbreviation corpus. Across articles, entities
//! merge on exact (full name, category) equality unless substring merging is
//! switched on.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{Category, EntityId};
use crate::ner::EntityMention;
use crate::segment::is_dotted_acronym;

const BUNDLED_ABBREVIATIONS: &str = include_str!("../data/abbreviations.tsv");

/// Words skipped when forming initials ("Department of Justice" gives "DJ").
const FUNCTION_WORDS: &[&str] = &["&", "a", "an", "and", "at", "for", "in", "of", "on", "the", "to"];

#[derive(Debug, thiserror::Error)]
pub enum ResolveError {
    #[error("mentions are not in document order at index {0}")]
    UnsortedInput(usize),
    #[error("mentions from taggers {0:?} and {1:?} mixed in one resolution pass")]
    MixedTaggers(String, String),
    #[error("abbreviation corpus line {line}: {reason}")]
    Corpus { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Drops the periods of dotted acronyms ("F.B.I." becomes "FBI"), collapses
/// whitespace runs and trims. Everything else is kept verbatim.
pub fn normalize_surface(surface: &str) -> String {
    surface
        .split_whitespace()
        .map(|word| {
            let chars: Vec<char> = word.chars().collect();
            if is_dotted_acronym(&chars) {
                chars.into_iter().filter(|&c| c != '.').collect()
            } else {
                word.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// A single word of two or more uppercase letters.
pub fn is_acronym(s: &str) -> bool {
    s.chars().count() >= 2 && s.chars().all(|c| c.is_alphabetic() && c.is_uppercase())
}

fn initials(full_name: &str, skip_function_words: bool) -> String {
    full_name
        .split(|c: char| c.is_whitespace() || c == '-')
        .filter(|w| !w.is_empty())
        .filter(|w| !skip_function_words || !FUNCTION_WORDS.contains(&w.to_lowercase().as_str()))
        .filter_map(|w| w.chars().find(|c| c.is_alphanumeric()))
        .flat_map(char::to_uppercase)
        .collect()
}

/// True when `acronym` spells the initials of `full_name`, with or without
/// its function words.
pub fn matches_initials(acronym: &str, full_name: &str) -> bool {
    if !full_name.contains(' ') {
        return false;
    }
    let a = acronym.to_uppercase();
    initials(full_name, true) == a || initials(full_name, false) == a
}

/// Token-boundary, case-sensitive containment. Equality counts.
pub fn contains_at_boundary(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    haystack.match_indices(needle).any(|(i, _)| {
        let before = haystack[..i].chars().next_back();
        let after = haystack[i + needle.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Expansion {
    full_name: String,
    category: Option<Category>,
}

/// Acronym to full-name dictionary. Keys are period-free and case-folded.
#[derive(Debug, Clone, Default)]
pub struct AbbreviationCorpus {
    entries: HashMap<String, Vec<Expansion>>,
}

fn corpus_key(acronym: &str) -> String {
    acronym.replace('.', "").to_uppercase()
}

impl AbbreviationCorpus {
    /// Lines are `ACRONYM<TAB>Full Name` with an optional `<TAB>CATEGORY`.
    pub fn parse(text: &str) -> Result<Self, ResolveError> {
        let mut corpus = AbbreviationCorpus::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| ResolveError::Corpus { line: i + 1, reason: reason.to_string() };
            let mut fields = line.split('\t');
            let acronym = fields.next().unwrap_or_default().trim();
            let full = fields.next().ok_or_else(|| err("expected ACRONYM<TAB>Full Name"))?.trim();
            let category = match fields.next().map(str::trim) {
                None | Some("") => None,
                Some(c) => Some(c.parse::<Category>().map_err(|e| err(&e.to_string()))?),
            };
            if corpus_key(acronym).chars().count() < 2 {
                return Err(err("acronym shorter than two characters"));
            }
            if full.is_empty() {
                return Err(err("empty full name"));
            }
            corpus = corpus.with_entry(acronym, full, category);
        }
        Ok(corpus)
    }

    pub fn load(path: &Path) -> Result<Self, ResolveError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ResolveError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_ABBREVIATIONS).expect("bundled abbreviation corpus is well-formed")
    }

    pub fn with_entry(mut self, acronym: &str, full_name: &str, category: Option<Category>) -> Self {
        let list = self.entries.entry(corpus_key(acronym)).or_default();
        let e = Expansion { full_name: normalize_surface(full_name), category };
        if !list.contains(&e) {
            list.push(e);
        }
        self
    }

    /// The entry for `category`, falling back to an uncategorized one.
    pub fn lookup(&self, acronym: &str, category: Category) -> Option<&str> {
        let list = self.entries.get(&corpus_key(acronym))?;
        list.iter()
            .find(|e| e.category == Some(category))
            .or_else(|| list.iter().find(|e| e.category.is_none()))
            .map(|e| e.full_name.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Expands `acronym` using earlier full names of the same category in this
/// article (newest first), then the corpus.
pub fn expand_abbreviation<'a>(
    acronym: &str,
    category: Category,
    corpus: &'a AbbreviationCorpus,
    prior: &'a [ResolvedEntity],
) -> Option<&'a str> {
    prior
        .iter()
        .rev()
        .filter(|e| e.category == category)
        .find(|e| matches_initials(acronym, &e.full_name))
        .map(|e| e.full_name.as_str())
        .or_else(|| corpus.lookup(acronym, category))
}

/// An article-local entity. `local_id` indexes [`ArticleResolution::entities`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResolvedEntity {
    pub local_id: usize,
    pub full_name: String,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionLink {
    /// Index of the mention in the resolved input.
    pub mention: usize,
    pub local_id: usize,
    pub tagger: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleResolution {
    pub entities: Vec<ResolvedEntity>,
    pub links: Vec<MentionLink>,
    /// New entities whose name contains an earlier, separate entity's name:
    /// the short form came first, so the two were not linked.
    pub forward_occurrences: usize,
}

impl ArticleResolution {
    /// The entity each mention resolved to, in input order.
    pub fn entity_of(&self, mention: usize) -> Option<&ResolvedEntity> {
        self.links.get(mention).map(|l| &self.entities[l.local_id])
    }
}

/// One tagger's mentions for an article together with their resolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggerResolution {
    pub tagger: String,
    pub mentions: Vec<EntityMention>,
    pub resolution: ArticleResolution,
}

impl TaggerResolution {
    /// Sorts `mentions` into document order and resolves them.
    pub fn resolve(tagger: impl Into<String>, mut mentions: Vec<EntityMention>, corpus: &AbbreviationCorpus) -> Result<Self, ResolveError> {
        mentions.sort_by_key(EntityMention::position);
        let resolution = resolve_article(&mentions, corpus)?;
        Ok(TaggerResolution { tagger: tagger.into(), mentions, resolution })
    }
}

/// The surface a mention is matched with: normalized, then expanded when it
/// is an acronym with a known expansion.
fn match_key(m: &EntityMention, corpus: &AbbreviationCorpus, prior: &[ResolvedEntity]) -> String {
    let s = normalize_surface(&m.surface);
    if is_acronym(&s) {
        if let Some(full) = expand_abbreviation(&s, m.category, corpus, prior) {
            return full.to_string();
        }
    }
    s
}

/// Resolves one tagger's mentions for one article. Input must be sorted by
/// (paragraph, start offset).
pub fn resolve_article(mentions: &[EntityMention], corpus: &AbbreviationCorpus) -> Result<ArticleResolution, ResolveError> {
    for (i, pair) in mentions.windows(2).enumerate() {
        if pair[1].position() < pair[0].position() {
            return Err(ResolveError::UnsortedInput(i + 1));
        }
        if pair[1].tagger != pair[0].tagger {
            return Err(ResolveError::MixedTaggers(pair[0].tagger.clone(), pair[1].tagger.clone()));
        }
    }

    let mut out = ArticleResolution::default();
    // Most recent last.
    let mut recency: BTreeMap<Category, Vec<usize>> = BTreeMap::new();
    for (i, m) in mentions.iter().enumerate() {
        let s = match_key(m, corpus, &out.entities);
        let open = recency.entry(m.category).or_default();
        let found = open
            .iter()
            .rposition(|&id| contains_at_boundary(&out.entities[id].full_name, &s));
        let id = match found {
            Some(pos) => open.remove(pos),
            None => {
                if open.iter().any(|&id| contains_at_boundary(&s, &out.entities[id].full_name)) {
                    out.forward_occurrences += 1;
                }
                let id = out.entities.len();
                out.entities.push(ResolvedEntity { local_id: id, full_name: s, category: m.category });
                id
            }
        };
        open.push(id);
        out.links.push(MentionLink { mention: i, local_id: id, tagger: m.tagger.clone() });
    }
    Ok(out)
}

/// Global entity lookup and creation. The store implements this inside its
/// write transaction; [`MemoryRegistry`] serves tests and dry runs.
pub trait EntityRegistry {
    type Error;
    fn find(&mut self, full_name: &str, category: Category) -> Result<Option<EntityId>, Self::Error>;
    fn insert(&mut self, full_name: &str, category: Category) -> Result<EntityId, Self::Error>;
    /// Newest entity of `category` whose name contains `name` at token
    /// boundaries.
    fn find_container(&mut self, name: &str, category: Category) -> Result<Option<EntityId>, Self::Error>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergePolicy {
    /// Also merge into the newest registry entity containing the local name.
    pub global_substring_merge: bool,
}

/// Maps every local entity to a registry entity, creating missing ones.
pub fn resolve_global<R: EntityRegistry>(
    entities: &[ResolvedEntity],
    registry: &mut R,
    policy: MergePolicy,
) -> Result<BTreeMap<usize, EntityId>, R::Error> {
    let mut map = BTreeMap::new();
    for e in entities {
        let mut id = registry.find(&e.full_name, e.category)?;
        if id.is_none() && policy.global_substring_merge {
            id = registry.find_container(&e.full_name, e.category)?;
        }
        let id = match id {
            Some(id) => id,
            None => registry.insert(&e.full_name, e.category)?,
        };
        map.insert(e.local_id, id);
    }
    Ok(map)
}

/// In-memory registry; ids are assigned from 1 in insertion order.
#[derive(Debug, Clone, Default)]
pub struct MemoryRegistry {
    rows: Vec<(String, Category)>,
}

impl MemoryRegistry {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, id: EntityId) -> Option<(&str, Category)> {
        let idx = usize::try_from(id.0).ok()?.checked_sub(1)?;
        self.rows.get(idx).map(|(n, c)| (n.as_str(), *c))
    }
}

impl EntityRegistry for MemoryRegistry {
    type Error = std::convert::Infallible;

    fn find(&mut self, full_name: &str, category: Category) -> Result<Option<EntityId>, Self::Error> {
        Ok(self
            .rows
            .iter()
            .position(|(n, c)| n == full_name && *c == category)
            .map(|i| EntityId(i as i64 + 1)))
    }

    fn insert(&mut self, full_name: &str, category: Category) -> Result<EntityId, Self::Error> {
        self.rows.push((full_name.to_string(), category));
        Ok(EntityId(self.rows.len() as i64))
    }

    fn find_container(&mut self, name: &str, category: Category) -> Result<Option<EntityId>, Self::Error> {
        Ok(self
            .rows
            .iter()
            .rposition(|(n, c)| *c == category && contains_at_boundary(n, name))
            .map(|i| EntityId(i as i64 + 1)))
    }
}
