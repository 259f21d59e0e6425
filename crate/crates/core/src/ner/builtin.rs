//! Deterministic capitalization-run tagger.
//!
//! Candidates are maximal runs of capitalized tokens, optionally bridged by
//! `of`, `the` or `&`. Honorifics split runs and mark what follows as a
//! person. Categories come from, in order: the gazetteer, an honorific cue,
//! an organization suffix inside the run, and finally a configurable default.

use crate::model::{Category, Span};
use crate::segment::{SegmentedArticle, Sentence, Token};

use super::{EntityMention, Gazetteer, BUILTIN_TAGGER};

const CONNECTORS: [&str; 3] = ["of", "the", "&"];

const STOPWORDS: &[&str] = &[
    "a", "about", "according", "after", "again", "all", "also", "although", "an", "and", "another",
    "any", "are", "as", "at", "because", "before", "both", "but", "by", "despite", "did", "do",
    "during", "each", "even", "every", "few", "for", "from", "had", "has", "have", "he", "he's",
    "her", "here", "hers", "him", "his", "how", "however", "i", "i'd", "i'll", "i'm", "i've", "if",
    "in", "into", "is", "it", "it's", "its", "just", "last", "many", "may", "meanwhile", "more",
    "most", "much", "my", "next", "no", "nor", "not", "now", "of", "on", "once", "one", "only",
    "or", "other", "our", "over", "she", "she's", "since", "so", "some", "still", "such", "than",
    "that", "that's", "the", "their", "them", "then", "there", "there's", "these", "they", "they're",
    "this", "those", "though", "through", "to", "today", "under", "unlike", "until", "was", "we",
    "we'd", "we'll", "we're", "we've", "were", "what", "when", "where", "whether", "which", "while",
    "who", "why", "will", "with", "within", "without", "would", "yes", "yesterday", "yet", "you",
    "you're", "your",
];

fn normalize(word: &str) -> String {
    word.to_lowercase().replace('\u{2019}', "'")
}

fn is_stopword(word: &str) -> bool {
    let w = normalize(word);
    STOPWORDS.binary_search(&w.as_str()).is_ok()
}

fn is_capitalized(t: &Token) -> bool {
    t.is_word() && t.text.chars().next().is_some_and(char::is_uppercase)
}

fn is_connector(t: &Token) -> bool {
    CONNECTORS.contains(&t.text.as_str())
}

/// Two or more letters, all uppercase, optionally separated by periods.
pub fn is_acronym_token(text: &str) -> bool {
    let letters: Vec<char> = text.chars().filter(|&c| c != '.').collect();
    letters.len() >= 2 && letters.iter().all(|c| c.is_alphabetic() && c.is_uppercase())
}

/// Built-in tagger with its tunable default category.
#[derive(Debug, Clone)]
pub struct BuiltinTagger {
    pub id: String,
    pub default_category: Category,
}

impl Default for BuiltinTagger {
    fn default() -> Self {
        BuiltinTagger { id: BUILTIN_TAGGER.to_string(), default_category: Category::Person }
    }
}

impl BuiltinTagger {
    pub fn tag(&self, seg: &SegmentedArticle, gaz: &Gazetteer) -> Vec<EntityMention> {
        let mut out = Vec::new();
        for p in &seg.paragraphs {
            for s in &p.sentences {
                self.tag_sentence(&p.text, p.index, s, gaz, &mut out);
            }
        }
        out
    }

    fn tag_sentence(&self, text: &str, paragraph: usize, sentence: &Sentence, gaz: &Gazetteer, out: &mut Vec<EntityMention>) {
        let tokens = &sentence.tokens;
        let first_word = tokens.iter().position(Token::is_word);
        let mut i = 0;
        while i < tokens.len() {
            if !is_capitalized(&tokens[i]) {
                i += 1;
                continue;
            }
            let start = i;
            let mut end = i;
            let mut j = i + 1;
            while j < tokens.len() {
                if is_capitalized(&tokens[j]) {
                    end = j;
                    j += 1;
                } else if is_connector(&tokens[j]) {
                    let mut k = j;
                    while k < tokens.len() && is_connector(&tokens[k]) {
                        k += 1;
                    }
                    if k < tokens.len() && is_capitalized(&tokens[k]) {
                        end = k;
                        j = k + 1;
                    } else {
                        break;
                    }
                } else {
                    break;
                }
            }
            self.emit_run(text, paragraph, sentence, tokens, start, end, first_word, gaz, out);
            i = end + 1;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn emit_run(
        &self,
        text: &str,
        paragraph: usize,
        sentence: &Sentence,
        tokens: &[Token],
        start: usize,
        end: usize,
        first_word: Option<usize>,
        gaz: &Gazetteer,
        out: &mut Vec<EntityMention>,
    ) {
        if let Some((span, Source::Gazetteer, category)) = self.candidate(text, tokens, start, end, gaz) {
            // The whole run is a known name, e.g. "The Atlantic".
            out.push(self.mention(text, paragraph, sentence, span, category));
            return;
        }
        let mut s = start;
        if Some(s) == first_word && is_stopword(&tokens[s].text) {
            s += 1;
        }
        // Honorifics split the run; the part after one is cued as a person.
        let mut cue = preceding_word(tokens, s).is_some_and(|w| gaz.is_honorific(&w.text));
        let mut seg_start = s;
        let mut k = s;
        while k <= end {
            if gaz.is_honorific(&tokens[k].text) {
                self.emit_segment(text, paragraph, sentence, tokens, seg_start, k, cue, gaz, out);
                cue = true;
                seg_start = k + 1;
            }
            k += 1;
        }
        self.emit_segment(text, paragraph, sentence, tokens, seg_start, end + 1, cue, gaz, out);
    }

    /// Emits tokens `[from, to)` as one mention after trimming connectors at
    /// the edges.
    #[allow(clippy::too_many_arguments)]
    fn emit_segment(
        &self,
        text: &str,
        paragraph: usize,
        sentence: &Sentence,
        tokens: &[Token],
        mut from: usize,
        mut to: usize,
        cue: bool,
        gaz: &Gazetteer,
        out: &mut Vec<EntityMention>,
    ) {
        while from < to && !is_capitalized(&tokens[from]) {
            from += 1;
        }
        while to > from && !is_capitalized(&tokens[to - 1]) {
            to -= 1;
        }
        if from >= to {
            return;
        }
        if to - from == 1 && is_stopword(&tokens[from].text) {
            return;
        }
        let Some((span, source, category)) = self.candidate(text, tokens, from, to - 1, gaz) else {
            return;
        };
        let category = match source {
            Source::Gazetteer | Source::Acronym => category,
            Source::Suffix | Source::Default if cue => Category::Person,
            Source::Suffix | Source::Default => category,
        };
        out.push(self.mention(text, paragraph, sentence, span, category));
    }

    /// Span and category for tokens `[from, to]`, before honorific cues are
    /// considered.
    fn candidate(&self, text: &str, tokens: &[Token], from: usize, to: usize, gaz: &Gazetteer) -> Option<(Span, Source, Category)> {
        let mut span = Span::new(tokens[from].span.start, tokens[to].span.end);
        let last = &tokens[to].text;
        if (last.ends_with("'s") || last.ends_with("\u{2019}s")) && last.chars().count() > 2 {
            span.end -= 2;
        }
        let surface = span.slice(text)?;
        if let Some(c) = gaz.lookup(surface) {
            return Some((span, Source::Gazetteer, c));
        }
        if from == to && is_acronym_token(&tokens[from].text) {
            return Some((span, Source::Acronym, Category::Organization));
        }
        if tokens[from..=to].iter().any(|t| gaz.is_org_suffix(&t.text)) {
            return Some((span, Source::Suffix, Category::Organization));
        }
        Some((span, Source::Default, self.default_category))
    }

    fn mention(&self, text: &str, paragraph: usize, sentence: &Sentence, span: Span, category: Category) -> EntityMention {
        EntityMention {
            surface: span.slice(text).unwrap_or_default().to_string(),
            category,
            span,
            paragraph_index: paragraph,
            sentence_index: sentence.index_in_paragraph,
            tagger: self.id.clone(),
        }
    }
}

/// Which rule produced a candidate's category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Gazetteer,
    Acronym,
    Suffix,
    Default,
}

fn preceding_word(tokens: &[Token], idx: usize) -> Option<&Token> {
    tokens[..idx].iter().rev().find(|t| t.is_word())
}

/// Tags with the default builtin configuration.
pub fn tag_builtin(seg: &SegmentedArticle, gaz: &Gazetteer) -> Vec<EntityMention> {
    BuiltinTagger::default().tag(seg, gaz)
}
