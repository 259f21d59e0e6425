//! Paragraph, sentence and token segmentation.
//!
//! Every downstream index (sentiment scopes, entity mention spans) is
//! expressed in the coordinates produced here: paragraphs and sentences are
//! 0-based and dense, and token spans are character offsets into the
//! paragraph text.

use std::collections::HashSet;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::Span;

const BUNDLED_GUARD: &str = include_str!("../data/abbreviation_guard.txt");

/// Tokens after which a terminal period never ends a sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AbbreviationGuard {
    entries: HashSet<String>,
}

impl AbbreviationGuard {
    /// Parses the guard file format: one entry per line, `#` comments.
    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        AbbreviationGuard { entries }
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_GUARD)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains(token)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for AbbreviationGuard {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        AbbreviationGuard { entries: iter.into_iter().map(Into::into).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Character span in the paragraph text.
    pub span: Span,
}

impl Token {
    /// True for tokens carrying at least one letter or digit; punctuation
    /// tokens are kept for reconstruction but carry no lexical content.
    pub fn is_word(&self) -> bool {
        self.text.chars().any(char::is_alphanumeric)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index_in_paragraph: usize,
    pub global_index: usize,
    /// Character span in the paragraph text.
    pub span: Span,
    pub text: String,
    pub tokens: Vec<Token>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub index: usize,
    pub text: String,
    pub sentences: Vec<Sentence>,
}

impl Paragraph {
    /// Index of the sentence whose span contains character offset `pos`.
    pub fn sentence_at(&self, pos: usize) -> Option<usize> {
        self.sentences
            .iter()
            .position(|s| s.span.start <= pos && pos < s.span.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentedArticle {
    /// Caller-chosen identifier (the article URL in the ingest pipeline).
    pub article_key: String,
    pub paragraphs: Vec<Paragraph>,
}

impl SegmentedArticle {
    pub fn sentence_count(&self) -> usize {
        self.paragraphs.iter().map(|p| p.sentences.len()).sum()
    }

    pub fn sentences(&self) -> impl Iterator<Item = (&Paragraph, &Sentence)> {
        self.paragraphs
            .iter()
            .flat_map(|p| p.sentences.iter().map(move |s| (p, s)))
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences().flat_map(|(_, s)| s.tokens.iter())
    }
}

/// Splits plain text into paragraphs on blank lines.
pub fn split_paragraphs(body: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in body.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(current.join("\n").trim().to_string());
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        out.push(current.join("\n").trim().to_string());
    }
    out.retain(|p| !p.is_empty());
    out
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201D}' | '\u{2019}' | ')' | ']' | '\u{00BB}')
}

fn is_opening_quote(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201C}' | '\u{2018}' | '(' | '[' | '\u{00AB}')
}

/// `F.B.I.`, `U.S.` and friends: letters alternating with periods, at least
/// two letters.
pub(crate) fn is_dotted_acronym(chars: &[char]) -> bool {
    if chars.len() < 3 {
        return false;
    }
    let mut letters = 0;
    let mut expect_letter = true;
    for &c in chars {
        if expect_letter {
            if !c.is_alphabetic() {
                return false;
            }
            letters += 1;
        } else if c != '.' {
            return false;
        }
        expect_letter = !expect_letter;
    }
    letters >= 2
}

/// A single capital letter followed by a period, as in `Raymond W. Kelly`.
fn is_initial(chars: &[char]) -> bool {
    chars.len() == 2 && chars[0].is_uppercase() && chars[1] == '.'
}

/// Splits one paragraph into sentences with paragraph-relative spans.
/// `global_index` is set equal to `index_in_paragraph`; [`segment_article`]
/// renumbers it across the article.
pub fn split_sentences(paragraph: &str, guard: &AbbreviationGuard) -> Vec<Sentence> {
    let chars: Vec<char> = paragraph.chars().collect();
    let n = chars.len();
    let mut bounds: Vec<(usize, usize)> = Vec::new();

    let mut start = match chars.iter().position(|c| !c.is_whitespace()) {
        Some(s) => s,
        None => return Vec::new(),
    };
    let mut i = start;
    while i < n {
        let c = chars[i];
        if !is_terminator(c) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < n && is_terminator(chars[j + 1]) {
            j += 1;
        }
        let mut k = j;
        while k + 1 < n && is_closing(chars[k + 1]) {
            k += 1;
        }
        if k + 1 < n && chars[k + 1].is_whitespace() {
            let mut m = k + 1;
            while m < n && chars[m].is_whitespace() {
                m += 1;
            }
            let opens = m < n
                && (chars[m].is_uppercase() || chars[m].is_ascii_digit() || is_opening_quote(chars[m]));
            if opens && !(c == '.' && j == i && k == j && guarded(&chars, start, i, guard)) {
                bounds.push((start, k + 1));
                start = m;
                i = m;
                continue;
            }
        }
        i = k + 1;
    }
    let mut end = n;
    while end > start && chars[end - 1].is_whitespace() {
        end -= 1;
    }
    if end > start {
        bounds.push((start, end));
    }

    bounds
        .into_iter()
        .enumerate()
        .map(|(idx, (s, e))| Sentence {
            index_in_paragraph: idx,
            global_index: idx,
            span: Span::new(s, e),
            text: chars[s..e].iter().collect(),
            tokens: tokenize_range(&chars, s, e),
        })
        .collect()
}

/// Whether the period at `period` closes a guarded abbreviation or an
/// initial rather than a sentence.
fn guarded(chars: &[char], sentence_start: usize, period: usize, guard: &AbbreviationGuard) -> bool {
    let mut a = period;
    while a > sentence_start && !chars[a - 1].is_whitespace() {
        a -= 1;
    }
    while a < period && is_opening_quote(chars[a]) {
        a += 1;
    }
    let word = &chars[a..=period];
    if is_initial(word) {
        return true;
    }
    let s: String = word.iter().collect();
    guard.contains(&s)
}

/// Tokenizes `text` on whitespace, splitting punctuation off token edges
/// while keeping interior punctuation and the periods of dotted acronyms.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    tokenize_range(&chars, 0, chars.len())
}

fn tokenize_range(chars: &[char], from: usize, to: usize) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut i = from;
    while i < to {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let mut b = i;
        while b < to && !chars[b].is_whitespace() {
            b += 1;
        }
        let mut a = i;
        while a < b && !chars[a].is_alphanumeric() {
            tokens.push(char_token(chars, a));
            a += 1;
        }
        let mut e = b;
        let mut trailing = Vec::new();
        while e > a && !chars[e - 1].is_alphanumeric() {
            if chars[e - 1] == '.' && (is_dotted_acronym(&chars[a..e]) || is_initial(&chars[a..e])) {
                break;
            }
            trailing.push(e - 1);
            e -= 1;
        }
        if e > a {
            tokens.push(Token { text: chars[a..e].iter().collect(), span: Span::new(a, e) });
        }
        tokens.extend(trailing.into_iter().rev().map(|p| char_token(chars, p)));
        i = b;
    }
    tokens
}

fn char_token(chars: &[char], at: usize) -> Token {
    Token { text: chars[at].to_string(), span: Span::new(at, at + 1) }
}

/// Segments an article's paragraphs. Blank paragraphs are skipped so that
/// every emitted paragraph has at least one sentence.
pub fn segment_article<S: AsRef<str>>(
    article_key: impl Into<String>,
    paragraphs: &[S],
    guard: &AbbreviationGuard,
) -> SegmentedArticle {
    let mut global = 0;
    let mut out = Vec::with_capacity(paragraphs.len());
    for text in paragraphs.iter().map(AsRef::as_ref) {
        let mut sentences = split_sentences(text, guard);
        if sentences.is_empty() {
            continue;
        }
        for s in &mut sentences {
            s.global_index = global;
            global += 1;
        }
        out.push(Paragraph { index: out.len(), text: text.to_string(), sentences });
    }
    SegmentedArticle { article_key: article_key.into(), paragraphs: out }
}

/// Number of sentiment rows one tool produces for the article: one per
/// sentence, one per paragraph and one for the whole article.
pub fn expected_score_count(seg: &SegmentedArticle) -> usize {
    if seg.paragraphs.is_empty() {
        return 0;
    }
    seg.sentence_count() + seg.paragraphs.len() + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(p: &str) -> Vec<String> {
        split_sentences(p, &AbbreviationGuard::bundled())
            .into_iter()
            .map(|s| s.text)
            .collect()
    }

    #[test]
    fn paragraphs_split_on_blank_lines() {
        assert_eq!(split_paragraphs("A\n\nB"), vec!["A", "B"]);
        assert!(split_paragraphs("").is_empty());
        assert_eq!(split_paragraphs("A\n\n\n\nB "), vec!["A", "B"]);
        assert_eq!(split_paragraphs("A\n  \t\nB"), vec!["A", "B"]);
    }

    #[test]
    fn canonical_boundary() {
        assert_eq!(texts("He ran. She hid."), vec!["He ran.", "She hid."]);
    }

    #[test]
    fn guarded_honorific_does_not_split() {
        let guard: AbbreviationGuard = ["Ms."].into_iter().collect();
        let s = split_sentences("Ms. Pelosi spoke.", &guard);
        assert_eq!(s.len(), 1);
        // without the guard entry the rule does split
        assert_eq!(split_sentences("Ms. Pelosi spoke.", &AbbreviationGuard::default()).len(), 2);
    }

    #[test]
    fn dotted_acronym_mid_sentence() {
        let t = texts(
            "According to a report by the F.B.I., violent crime across the country rose 3.7 percent",
        );
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn quotes_and_initials() {
        let t = texts(
            "\u{201C}We\u{2019}d like to see no homicides. The reality is we\u{2019}re going to have them,\u{201D} said Police Commissioner Raymond W. Kelly. \u{201C}I think this is a very good year.\u{201D}",
        );
        assert_eq!(t.len(), 3, "{t:?}");
        assert!(t[1].ends_with("Raymond W. Kelly."));
        assert!(t[2].starts_with('\u{201C}'));
    }

    #[test]
    fn guard_covers_dates_and_numbers() {
        let t = texts("Last year there were 579 killings citywide as of Dec. 24, an increase. Yet crime fell.");
        assert_eq!(t.len(), 2);
        assert_eq!(texts("It rose 3.7 percent. 2,262 people were killed."), vec!["It rose 3.7 percent.", "2,262 people were killed."]);
    }

    #[test]
    fn lowercase_continuation_is_not_a_boundary() {
        assert_eq!(texts("It was 5 p.m. on a Tuesday.").len(), 1);
        assert_eq!(texts("Wait... what happened?").len(), 1);
        assert_eq!(texts("Really?! Yes.").len(), 2);
    }

    #[test]
    fn tokens_keep_acronyms_and_interior_punctuation() {
        let toks: Vec<String> = tokenize("(the F.B.I., Ocasio-Cortez's 3.7% \u{201C}quote\u{201D})")
            .into_iter()
            .map(|t| t.text)
            .collect();
        assert_eq!(
            toks,
            vec!["(", "the", "F.B.I.", ",", "Ocasio-Cortez's", "3.7", "%", "\u{201C}", "quote", "\u{201D}", ")"]
        );
        let toks: Vec<String> = tokenize("Ms. Pelosi, U.S.").into_iter().map(|t| t.text).collect();
        assert_eq!(toks, vec!["Ms", ".", "Pelosi", ",", "U.S."]);
    }

    #[test]
    fn score_count_formula() {
        let guard = AbbreviationGuard::bundled();
        let seg = segment_article("a", &["One here. Two here.", "Three here."], &guard);
        assert_eq!(seg.sentence_count(), 3);
        assert_eq!(expected_score_count(&seg), 6);
        let seg = segment_article("b", &["Only one."], &guard);
        assert_eq!(expected_score_count(&seg), 3);
        let empty: [&str; 0] = [];
        assert_eq!(expected_score_count(&segment_article("c", &empty, &guard)), 0);
    }

    #[test]
    fn global_indices_are_dense() {
        let seg = segment_article("a", &["A b. C d.", "   ", "E f."], &AbbreviationGuard::bundled());
        let globals: Vec<usize> = seg.sentences().map(|(_, s)| s.global_index).collect();
        assert_eq!(globals, vec![0, 1, 2]);
        assert_eq!(seg.paragraphs.iter().map(|p| p.index).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn sentence_lookup_by_offset() {
        let seg = segment_article("a", &["He ran. She hid."], &AbbreviationGuard::bundled());
        let p = &seg.paragraphs[0];
        assert_eq!(p.sentence_at(0), Some(0));
        assert_eq!(p.sentence_at(8), Some(1));
        assert_eq!(p.sentence_at(7), None);
    }
}
