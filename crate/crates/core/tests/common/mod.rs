//! Second implementations used as test oracles, plus the property checks
//! shared by the core test suites and the acceptance harness. Nothing here
//! calls the code it checks except through its public entry points.
#![allow(dead_code)]

use std::collections::BTreeSet;

use proptest::prelude::*;
use proptest::test_runner::{Config as RunnerConfig, TestRunner};

use qc_core::analytics::{MatchMode, Prf};
use qc_core::ner::EntityMention;
use qc_core::resolve::{resolve_article, AbbreviationCorpus};
use qc_core::sentiment::{score_tokens, to_five_class, valence_sum, SentimentLexicon};
use qc_core::{Category, Span};

// ---------------------------------------------------------------- sentiment

/// x / sqrt(x^2 + 15) in fixed point: x scaled by 10^15, integer square root
/// on u128, quotient scaled by 10^18. Valid for |x| <= 100.
pub fn hp_normalize(x: f64) -> f64 {
    const S: i128 = 1_000_000_000_000_000; // 10^15
    assert!(x.abs() <= 100.0);
    let xs = (x * S as f64).round() as i128;
    let radicand = (xs * xs) as u128 + 15 * (S as u128) * (S as u128);
    let root = radicand.isqrt() as i128; // sqrt scaled by 10^15
    let q = xs * 1_000_000_000_000_000_000 / root; // scaled by 10^18
    q as f64 / 1e18
}

pub const POSITIVE: &[&str] = &["good", "great", "love", "happy", "excellent", "nice", "win"];
pub const NEGATIVE: &[&str] = &["bad", "terrible", "hate", "sad", "awful", "horrible", "lose"];
pub const BOOSTERS_UP: &[&str] = &["very", "extremely", "really", "absolutely"];
pub const NEGATORS: &[&str] = &["not", "never", "without"];
pub const NEUTRAL: &[&str] = &["the", "senator", "said", "on", "tuesday", "report", ".", ",", "!"];

fn word_pool() -> Vec<String> {
    let mut pool: Vec<String> = Vec::new();
    for w in POSITIVE.iter().chain(NEGATIVE).chain(BOOSTERS_UP).chain(NEGATORS).chain(NEUTRAL) {
        pool.push(w.to_string());
        if w.chars().all(char::is_alphabetic) {
            pool.push(w.to_uppercase());
        }
    }
    pool
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Bounds, sign agreement with the valence sum, five-class range, and
/// monotonicity under appending a positive word out of reach of earlier
/// modifiers. Each stream starts with a lowercase word so the appended
/// lowercase words cannot change the caps-emphasis condition.
pub fn check_sentiment_properties(cases: u32) -> Result<u32, String> {
    let lex = SentimentLexicon::bundled();
    let pool = word_pool();
    let mut runner = TestRunner::new(RunnerConfig { cases, failure_persistence: None, ..RunnerConfig::default() });
    let strategy = (
        prop::collection::vec(prop::sample::select(pool), 0..40),
        prop::sample::select(POSITIVE.to_vec()),
        prop::sample::select(NEGATIVE.to_vec()),
    );
    runner
        .run(&strategy, |(mut tokens, pos, neg)| {
            tokens.insert(0, "the".to_string());
            let sum = valence_sum(&tokens, &lex);
            let c = score_tokens(&tokens, &lex);
            prop_assert!((-1.0..=1.0).contains(&c), "out of bounds: {c}");
            prop_assert_eq!(sign(c), sign(sum), "sign of {} vs sum {}", c, sum);
            prop_assert!(to_five_class(c).is_ok());

            let mut up = tokens.clone();
            up.extend(["the", "the", "the", pos].map(String::from));
            let c_up = score_tokens(&up, &lex);
            prop_assert!(c_up >= c, "adding {pos:?} lowered {c} to {c_up}");

            let mut down = tokens.clone();
            down.extend(["the", "the", "the", neg].map(String::from));
            let c_down = score_tokens(&down, &lex);
            prop_assert!(c_down <= c, "adding {neg:?} raised {c} to {c_down}");

            // Only positive words and upward boosters: strictly positive.
            let only_pos: Vec<String> =
                tokens.iter().filter(|t| !lex.is_negator(t) && lex.valence(t).is_none_or(|v| v > 0.0) && lex.booster(t).is_none_or(|b| b > 0.0)).cloned().collect();
            let mut only_pos = only_pos;
            only_pos.push(pos.to_string());
            prop_assert!(score_tokens(&only_pos, &lex) > 0.0);
            Ok(())
        })
        .map_err(|e| match e {
            proptest::test_runner::TestError::Fail(reason, value) => format!("{reason}: {value:?}"),
            other => other.to_string(),
        })?;
    Ok(cases)
}

/// Samples `n` values of x in [-20, 20] (plus edge values) and returns the
/// largest deviation between the single-word compound score and the
/// fixed-point evaluation.
pub fn max_normalization_error(n: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let x = match i {
            0 => 0.0,
            1 => 1e-6,
            2 => -20.0,
            _ => rng.random_range(-20.0..20.0),
        };
        let lex = SentimentLexicon::default().with_valence("probe", x);
        let got = score_tokens(&["probe"], &lex);
        worst = worst.max((got - hp_normalize(x)).abs());
    }
    worst
}

// --------------------------------------------------------------- resolution

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Token-boundary containment over char vectors.
pub fn oracle_contains(hay: &str, needle: &str) -> bool {
    let h: Vec<char> = hay.chars().collect();
    let n: Vec<char> = needle.chars().collect();
    if n.is_empty() || n.len() > h.len() {
        return false;
    }
    (0..=h.len() - n.len()).any(|i| {
        h[i..i + n.len()] == n[..]
            && (i == 0 || !is_word_char(h[i - 1]))
            && (i + n.len() == h.len() || !is_word_char(h[i + n.len()]))
    })
}

/// Removes the periods from "F.B.I."-style tokens and collapses spaces.
pub fn oracle_normalize(s: &str) -> String {
    s.split_whitespace()
        .map(|w| {
            let parts: Vec<&str> = w.trim_end_matches('.').split('.').collect();
            let dotted = w.contains('.')
                && parts.len() >= 2
                && parts.iter().all(|p| p.chars().count() == 1 && p.chars().all(|c| c.is_uppercase()));
            if dotted {
                parts.concat()
            } else {
                w.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

const SKIP: &[&str] = &["of", "the", "and", "for", "a", "an", "in", "on", "at", "to", "&"];

fn oracle_initials(full: &str, skip: bool) -> String {
    let mut out = String::new();
    for w in full.split([' ', '-']) {
        if w.is_empty() || (skip && SKIP.contains(&w.to_lowercase().as_str())) {
            continue;
        }
        if let Some(c) = w.chars().find(|c| c.is_alphanumeric()) {
            out.extend(c.to_uppercase());
        }
    }
    out
}

fn oracle_is_acronym(s: &str) -> bool {
    s.chars().count() >= 2 && s.chars().all(|c| c.is_uppercase())
}

/// Quadratic reference resolver. For mention i, the match key is its
/// normalized surface (acronyms expanded via the newest earlier same-category
/// entity whose initials fit, else `corpus`). Then earlier mentions are
/// scanned newest first; the first whose entity name contains the key joins
/// i to that entity. Returns per-mention entity labels (numbered by first
/// appearance) and the entity names.
pub fn oracle_resolve(
    mentions: &[(String, Category)],
    corpus: &[(&str, &str, Option<Category>)],
) -> (Vec<usize>, Vec<(String, Category)>) {
    let mut labels: Vec<usize> = Vec::new();
    let mut entities: Vec<(String, Category)> = Vec::new();
    for (i, (surface, cat)) in mentions.iter().enumerate() {
        let mut key = oracle_normalize(surface);
        if oracle_is_acronym(&key) {
            let from_prior = entities.iter().rev().find(|(name, c)| {
                c == cat
                    && name.contains(' ')
                    && (oracle_initials(name, true) == key || oracle_initials(name, false) == key)
            });
            let from_corpus = || {
                corpus
                    .iter()
                    .find(|(a, _, c)| *a == key && *c == Some(*cat))
                    .or_else(|| corpus.iter().find(|(a, _, c)| *a == key && c.is_none()))
            };
            if let Some((name, _)) = from_prior {
                key = name.clone();
            } else if let Some((_, full, _)) = from_corpus() {
                key = full.to_string();
            }
        }
        let hit = (0..i)
            .rev()
            .find(|&j| mentions[j].1 == *cat && oracle_contains(&entities[labels[j]].0, &key));
        match hit {
            Some(j) => labels.push(labels[j]),
            None => {
                labels.push(entities.len());
                entities.push((key, *cat));
            }
        }
    }
    (labels, entities)
}

pub fn mentions_from(seq: &[(String, Category)]) -> Vec<EntityMention> {
    seq.iter()
        .enumerate()
        .map(|(i, (s, c))| EntityMention {
            surface: s.clone(),
            category: *c,
            span: Span::new(i * 40, i * 40 + s.chars().count()),
            paragraph_index: 0,
            sentence_index: 0,
            tagger: "t".into(),
        })
        .collect()
}

/// Streaming labels and names for a sequence, for comparison with the oracle.
pub fn streaming_resolve(seq: &[(String, Category)], corpus: &AbbreviationCorpus) -> (Vec<usize>, Vec<(String, Category)>) {
    let r = resolve_article(&mentions_from(seq), corpus).expect("sorted, one tagger");
    let labels = r.links.iter().map(|l| l.local_id).collect();
    let names = r.entities.iter().map(|e| (e.full_name.clone(), e.category)).collect();
    (labels, names)
}

pub const ALPHABET_NAMES: [&str; 4] = ["Nancy Pelosi", "Pelosi", "Nancy", "NP"];
pub const ALPHABET_CATEGORIES: [Category; 2] = [Category::Person, Category::Organization];

/// Every sequence of length <= `max_len` over the 4-name, 2-category
/// alphabet, compared against the oracle. Returns (sequences checked,
/// first mismatch if any).
pub fn exhaustive_resolution(max_len: usize) -> (usize, Option<String>) {
    let symbols: Vec<(String, Category)> = ALPHABET_CATEGORIES
        .iter()
        .flat_map(|c| ALPHABET_NAMES.iter().map(move |n| (n.to_string(), *c)))
        .collect();
    let corpus_rows: [(&str, &str, Option<Category>); 1] = [("NP", "National Party", Some(Category::Organization))];
    let corpus = AbbreviationCorpus::default().with_entry("NP", "National Party", Some(Category::Organization));
    let k = symbols.len();
    let mut checked = 0;
    let mut seq: Vec<(String, Category)> = Vec::with_capacity(max_len);
    for len in 0..=max_len {
        for code in 0..k.pow(len as u32) {
            seq.clear();
            let mut c = code;
            for _ in 0..len {
                seq.push(symbols[c % k].clone());
                c /= k;
            }
            let expect = oracle_resolve(&seq, &corpus_rows);
            let got = streaming_resolve(&seq, &corpus);
            checked += 1;
            if expect != got {
                return (checked, Some(format!("{seq:?}: oracle {expect:?}, streaming {got:?}")));
            }
        }
    }
    (checked, None)
}

// ---------------------------------------------------------------------- PRF

/// Nested-loop set intersection over deduplicated key lists.
pub fn oracle_prf(gold: &[(String, Category)], pred: &[(String, Category)], mode: MatchMode) -> Prf {
    let key = |(n, c): &(String, Category)| {
        let name = oracle_normalize(n).to_lowercase();
        match mode {
            MatchMode::Exact => format!("{name}\u{1}{}", c.as_str()),
            MatchMode::NameOnly => name,
        }
    };
    let mut g: Vec<String> = Vec::new();
    for x in gold {
        let k = key(x);
        if !g.contains(&k) {
            g.push(k);
        }
    }
    let mut p: Vec<String> = Vec::new();
    for x in pred {
        let k = key(x);
        if !p.contains(&k) {
            p.push(k);
        }
    }
    let mut tp = 0;
    for a in &p {
        for b in &g {
            if a == b {
                tp += 1;
            }
        }
    }
    let (fp, fn_) = (p.len() - tp, g.len() - tp);
    let precision = if p.is_empty() { 0.0 } else { tp as f64 / p.len() as f64 };
    let recall = if g.is_empty() { 0.0 } else { tp as f64 / g.len() as f64 };
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Prf { precision, recall, f1, tp, fp, fn_ }
}

/// Two-pass population mean and standard deviation.
pub fn two_pass(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn random_entity_set(rng: &mut impl rand::Rng, max: usize) -> Vec<(String, Category)> {
    const NAMES: &[&str] = &["Nancy Pelosi", "nancy pelosi", "F.B.I.", "FBI", "Boston", "Ohio", "Acme Corp", "Joe", "Kim"];
    let n = rng.random_range(0..=max);
    (0..n)
        .map(|_| (NAMES[rng.random_range(0..NAMES.len())].to_string(), Category::ALL[rng.random_range(0..3)]))
        .collect()
}

pub fn key_set(xs: &[(String, Category)]) -> BTreeSet<String> {
    xs.iter().map(|(n, _)| oracle_normalize(n).to_lowercase()).collect()
}

// -------------------------------------------------------------------- store

use qc_core::ingest::Analyzer;
use qc_core::model::Article;
use qc_core::resolve::MergePolicy;
use qc_core::store::Store;

const VERSIONS: [&[&str]; 3] = [
    &["Nancy Pelosi met the F.B.I. in Boston. It went well.", "Pelosi was happy."],
    &["Nancy Pelosi criticized the F.B.I. sharply."],
    &["A quiet day in Ohio.", "Nothing happened.", "Joe Biden stayed home."],
];

pub fn dedup_article(url_index: usize, version: usize, step: usize) -> Article {
    let t = chrono::DateTime::from_timestamp(1_600_000_000 + step as i64 * 60, 0).unwrap();
    let url = url::Url::parse(&format!("https://news.test/story/{url_index}")).unwrap();
    let paras = VERSIONS[version % VERSIONS.len()].iter().map(|s| s.to_string());
    Article::new(if url_index % 2 == 0 { "Even" } else { "Odd" }, url, format!("v{version}"), None, t, t, paras)
}

/// Applies the upserts in order through the full analyze-and-commit path,
/// then checks one row per URL and that every article's derived rows are
/// exactly those of its final content.
pub fn dedup_run(ops: &[(usize, usize)]) -> Result<usize, String> {
    let analyzer = Analyzer::bundled();
    let mut store = Store::open_in_memory().map_err(|e| e.to_string())?;
    store.register_media("Even", "https://even.test/").map_err(|e| e.to_string())?;
    store.register_media("Odd", "https://odd.test/").map_err(|e| e.to_string())?;
    let mut last = std::collections::BTreeMap::new();
    for (step, &(u, v)) in ops.iter().enumerate() {
        let a = dedup_article(u, v, step);
        let analysis = analyzer.analyze(&a).map_err(|e| e.to_string())?;
        store
            .commit_article(&a, &analysis.scores, &analysis.resolutions, MergePolicy::default())
            .map_err(|e| e.to_string())?;
        last.insert(u, v);
    }
    let counts = store.table_counts().map_err(|e| e.to_string())?;
    if counts.article as usize != last.len() {
        return Err(format!("{} article rows for {} URLs", counts.article, last.len()));
    }
    let mut expected_links = 0;
    let mut expected_scores = 0;
    for (&u, &v) in &last {
        let a = dedup_article(u, v, 0);
        let stored = store.article_by_url(a.url.as_str()).map_err(|e| e.to_string())?.ok_or("missing article")?;
        if stored.paragraphs != a.paragraphs {
            return Err(format!("article {u} holds stale content"));
        }
        let fresh = analyzer.analyze(&a).map_err(|e| e.to_string())?;
        let links = store.links(stored.id).map_err(|e| e.to_string())?.len();
        let scores = store.scores(stored.id).map_err(|e| e.to_string())?.len();
        let want_links: usize = fresh.resolutions.iter().map(|r| r.mentions.len()).sum();
        if links != want_links || scores != fresh.scores.len() {
            return Err(format!("article {u}: {links} links / {scores} scores, expected {want_links} / {}", fresh.scores.len()));
        }
        expected_links += links;
        expected_scores += scores;
    }
    if counts.article_entity as usize != expected_links || counts.sentiment as usize != expected_scores {
        return Err(format!("orphaned derived rows: {counts:?}"));
    }
    let problems = store.check_integrity().map_err(|e| e.to_string())?;
    if !problems.is_empty() {
        return Err(problems.join("; "));
    }
    Ok(last.len())
}
