//! Evaluation metrics and corpus reports computed over the store.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;

use chrono::NaiveDate;
use rusqlite::types::Value;
use rusqlite::params_from_iter;
use serde::{Deserialize, Serialize};

use crate::model::{ArticleId, Category, EntityId};
use crate::resolve::{contains_at_boundary, normalize_surface};
use crate::store::{parse_ts, Store, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum AnalyticsError {
    #[error("no input to aggregate")]
    EmptyInput,
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("empty roster")]
    EmptyRoster,
    #[error("no search tokens")]
    NoTokens,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<rusqlite::Error> for AnalyticsError {
    fn from(e: rusqlite::Error) -> Self {
        AnalyticsError::Store(e.into())
    }
}

pub type Result<T, E = AnalyticsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchMode {
    /// Name and category must agree.
    Exact,
    /// Names only; categories are ignored.
    #[default]
    NameOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
        let precision = ratio(tp, fp);
        let recall = ratio(tp, fn_);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Prf { precision, recall, f1, tp, fp, fn_ }
    }
}

fn match_key(name: &str, category: Category, mode: MatchMode) -> (String, Option<Category>) {
    let name = normalize_surface(name).to_lowercase();
    match mode {
        MatchMode::Exact => (name, Some(category)),
        MatchMode::NameOnly => (name, None),
    }
}

/// Set-based precision, recall and F1 of `predicted` against `gold`.
/// Duplicates (after normalization) count once.
pub fn prf<S: AsRef<str>>(gold: &[(S, Category)], predicted: &[(S, Category)], mode: MatchMode) -> Prf {
    let keys = |xs: &[(S, Category)]| -> HashSet<_> { xs.iter().map(|(n, c)| match_key(n.as_ref(), *c, mode)).collect() };
    let gold = keys(gold);
    let predicted = keys(predicted);
    let tp = predicted.iter().filter(|k| gold.contains(*k)).count();
    Prf::from_counts(tp, predicted.len() - tp, gold.len() - tp)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfSummary {
    pub articles: usize,
    pub precision: MeanSd,
    pub recall: MeanSd,
    pub f1: MeanSd,
}

/// Welford's running mean and variance.
fn mean_sd(xs: impl Iterator<Item = f64>) -> MeanSd {
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for x in xs {
        n += 1.0;
        let d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    if n == 0.0 {
        return MeanSd::default();
    }
    MeanSd { mean, sd: (m2 / n).max(0.0).sqrt() }
}

pub fn aggregate(per_article: &[Prf]) -> Result<PrfSummary> {
    if per_article.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    Ok(PrfSummary {
        articles: per_article.len(),
        precision: mean_sd(per_article.iter().map(|p| p.precision)),
        recall: mean_sd(per_article.iter().map(|p| p.recall)),
        f1: mean_sd(per_article.iter().map(|p| p.f1)),
    })
}

/// Source and date restrictions shared by the store-backed reports.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportFilter {
    pub sources: Option<BTreeSet<String>>,
    pub date_from: Option<NaiveDate>,
    pub date_to: Option<NaiveDate>,
    pub tagger: Option<String>,
}

impl ReportFilter {
    /// Appends ` AND ...` clauses over aliases `a` (article), `m` (media)
    /// and `ae` (article_entity).
    fn apply(&self, sql: &mut String, args: &mut Vec<Value>) {
        let mut push = |sql: &mut String, clause: &str, v: Value| {
            args.push(v);
            sql.push_str(&clause.replace('?', &format!("?{}", args.len())));
        };
        if let Some(sources) = &self.sources {
            if sources.is_empty() {
                sql.push_str(" AND 0");
            } else {
                sql.push_str(" AND m.name IN (");
                for (i, s) in sources.iter().enumerate() {
                    push(sql, if i == 0 { "?" } else { ", ?" }, Value::Text(s.clone()));
                }
                sql.push(')');
            }
        }
        if let Some(d) = self.date_from {
            push(sql, " AND substr(a.modified_at, 1, 10) >= ?", Value::Text(d.to_string()));
        }
        if let Some(d) = self.date_to {
            push(sql, " AND substr(a.modified_at, 1, 10) <= ?", Value::Text(d.to_string()));
        }
        if let Some(t) = &self.tagger {
            push(sql, " AND ae.tagger = ?", Value::Text(t.clone()));
        }
    }
}

fn icontains_token(haystack: &str, token: &str) -> bool {
    contains_at_boundary(&haystack.to_lowercase(), &token.to_lowercase())
}

/// Space- and hyphen-separated tokens of a roster name.
fn roster_tokens(name: &str) -> Vec<&str> {
    name.split(|c: char| c.is_whitespace() || c == '-').filter(|t| !t.is_empty()).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub person: u64,
    pub location: u64,
    pub organization: u64,
}

impl CategoryCounts {
    pub fn add(&mut self, c: Category, n: u64) {
        match c {
            Category::Person => self.person += n,
            Category::Location => self.location += n,
            Category::Organization => self.organization += n,
        }
    }

    pub fn total(&self) -> u64 {
        self.person + self.location + self.organization
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosterReport {
    pub roster_size: usize,
    pub matched: usize,
    pub coverage: f64,
    /// Mention counts of roster-matched entities by category, per tagger.
    pub per_tagger: BTreeMap<String, CategoryCounts>,
    pub unmatched: Vec<String>,
}

/// Checks how often roster names are mentioned and under which category.
/// An entity matches a roster name when every token of the name occurs in
/// the entity's full name. Entities named in `exclude` are ignored.
pub fn roster_report(store: &Store, roster: &[String], exclude: &[String]) -> Result<RosterReport> {
    let roster: Vec<&String> = {
        let mut seen = HashSet::new();
        roster.iter().filter(|n| !n.trim().is_empty() && seen.insert(n.trim())).collect()
    };
    if roster.is_empty() {
        return Err(AnalyticsError::EmptyRoster);
    }
    let exclude: HashSet<String> = exclude.iter().map(|e| e.trim().to_lowercase()).collect();

    let mut stmt = store.conn().prepare(
        "SELECT e.id, e.full_name, e.category, ae.tagger, count(*)
         FROM article_entity ae JOIN entity e ON e.id = ae.entity_id
         GROUP BY e.id, ae.tagger ORDER BY e.id, ae.tagger",
    )?;
    let rows = stmt.query_map([], |r| {
        Ok((r.get::<_, i64>(0)?, r.get::<_, String>(1)?, r.get::<_, String>(2)?, r.get::<_, String>(3)?, r.get::<_, i64>(4)?))
    })?;
    // entity id -> (name, category, [(tagger, count)])
    type Tally = (String, Category, Vec<(String, u64)>);
    let mut entities: BTreeMap<i64, Tally> = BTreeMap::new();
    for row in rows {
        let (id, name, cat, tagger, n) = row?;
        if exclude.contains(&name.to_lowercase()) {
            continue;
        }
        let cat: Category = cat.parse().map_err(|e| StoreError::Corrupt(format!("{e}")))?;
        entities.entry(id).or_insert_with(|| (name, cat, Vec::new())).2.push((tagger, n as u64));
    }

    let mut matched_entities = BTreeSet::new();
    let mut unmatched = Vec::new();
    let mut matched = 0;
    for name in &roster {
        let tokens = roster_tokens(name);
        let hits: Vec<i64> = entities
            .iter()
            .filter(|(_, (full, _, _))| tokens.iter().all(|t| icontains_token(full, t)))
            .map(|(id, _)| *id)
            .collect();
        if hits.is_empty() {
            unmatched.push(name.to_string());
        } else {
            matched += 1;
            matched_entities.extend(hits);
        }
    }

    let mut per_tagger: BTreeMap<String, CategoryCounts> = BTreeMap::new();
    for id in matched_entities {
        let (_, cat, counts) = &entities[&id];
        for (tagger, n) in counts {
            per_tagger.entry(tagger.clone()).or_default().add(*cat, *n);
        }
    }
    Ok(RosterReport {
        roster_size: roster.len(),
        matched,
        coverage: matched as f64 / roster.len() as f64,
        per_tagger,
        unmatched,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub entity_id: EntityId,
    pub full_name: String,
    pub category: Category,
    pub articles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub tokens: Vec<String>,
    /// Sorted by article count, most frequent first.
    pub variants: Vec<Variant>,
    /// Share of the most frequent variant; 0 when nothing matched.
    pub top_share: f64,
}

/// Collects every entity whose name contains one of `tokens` and counts the
/// distinct articles linking to it.
pub fn variant_report(store: &Store, tokens: &[String]) -> Result<VariantReport> {
    let tokens: Vec<String> = tokens.iter().map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect();
    if tokens.is_empty() {
        return Err(AnalyticsError::NoTokens);
    }
    let mut stmt = store.conn().prepare(
        "SELECT e.id, e.full_name, e.category, count(DISTINCT ae.article_id)
         FROM entity e JOIN article_entity ae ON ae.entity_id = e.id
         GROUP BY e.id",
    )?;
    let rows = stmt.query_map([], |r| {
        Ok((r.get::<_, i64>(0)?, r.get::<_, String>(1)?, r.get::<_, String>(2)?, r.get::<_, i64>(3)?))
    })?;
    let mut variants = Vec::new();
    for row in rows {
        let (id, full_name, cat, n) = row?;
        if tokens.iter().any(|t| icontains_token(&full_name, t)) {
            let category = cat.parse().map_err(|e| StoreError::Corrupt(format!("{e}")))?;
            variants.push(Variant { entity_id: EntityId(id), full_name, category, articles: n as u64 });
        }
    }
    variants.sort_by(|a, b| {
        b.articles
            .cmp(&a.articles)
            .then_with(|| a.full_name.cmp(&b.full_name))
            .then_with(|| a.category.cmp(&b.category))
    });
    let total: u64 = variants.iter().map(|v| v.articles).sum();
    let top_share = match variants.first() {
        Some(v) if total > 0 => v.articles as f64 / total as f64,
        _ => 0.0,
    };
    Ok(VariantReport { tokens, variants, top_share })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationCount {
    pub location: String,
    pub count: u64,
}

/// Mention counts per LOCATION entity, most frequent first.
pub fn location_frequencies(store: &Store, filter: &ReportFilter) -> Result<Vec<LocationCount>> {
    let mut sql = String::from(
        "SELECT e.full_name, count(*) AS n
         FROM article_entity ae
         JOIN entity e ON e.id = ae.entity_id
         JOIN article a ON a.id = ae.article_id
         JOIN media m ON m.id = a.media_id
         WHERE e.category = 'LOCATION'",
    );
    let mut args = Vec::new();
    filter.apply(&mut sql, &mut args);
    sql.push_str(" GROUP BY e.id ORDER BY n DESC, e.full_name");
    let mut stmt = store.conn().prepare(&sql)?;
    let rows = stmt.query_map(params_from_iter(args.iter()), |r| {
        Ok(LocationCount { location: r.get(0)?, count: r.get::<_, i64>(1)? as u64 })
    })?;
    Ok(rows.collect::<rusqlite::Result<_>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub date: NaiveDate,
    pub article_id: ArticleId,
    pub url: String,
    pub article_score: Option<f64>,
    /// Mean over the paragraphs that mention the entity.
    pub paragraph_mean: Option<f64>,
    /// Mean over the sentences that mention the entity.
    pub sentence_mean: Option<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Per-article sentiment around one entity for one tool, in date order.
pub fn sentiment_series(store: &Store, entity: EntityId, tool: &str, filter: &ReportFilter) -> Result<Vec<SeriesPoint>> {
    if store.entity(entity)?.is_none() {
        return Err(AnalyticsError::UnknownEntity(entity));
    }
    let mut sql = String::from(
        "SELECT a.id, a.modified_at, a.url, ae.paragraph_index, ae.sentence_index
         FROM article_entity ae
         JOIN article a ON a.id = ae.article_id
         JOIN media m ON m.id = a.media_id
         WHERE ae.entity_id = ?1",
    );
    let mut args = vec![Value::Integer(entity.0)];
    filter.apply(&mut sql, &mut args);
    sql.push_str(" ORDER BY a.modified_at, a.id, ae.paragraph_index, ae.sentence_index");
    let mut stmt = store.conn().prepare(&sql)?;
    let rows = stmt.query_map(params_from_iter(args.iter()), |r| {
        Ok((r.get::<_, i64>(0)?, r.get::<_, String>(1)?, r.get::<_, String>(2)?, r.get::<_, i64>(3)?, r.get::<_, i64>(4)?))
    })?;

    // Articles in first-seen order, each with its mentioned locations.
    let mut order: Vec<(i64, String, String)> = Vec::new();
    type Places = (BTreeSet<i64>, BTreeSet<(i64, i64)>);
    let mut places: HashMap<i64, Places> = HashMap::new();
    for row in rows {
        let (id, modified, url, p, s) = row?;
        let entry = places.entry(id).or_insert_with(|| {
            order.push((id, modified, url));
            Default::default()
        });
        entry.0.insert(p);
        entry.1.insert((p, s));
    }

    let mut score_stmt = store.conn().prepare(
        "SELECT scope, paragraph_index, sentence_index, score FROM sentiment WHERE article_id = ?1 AND tool = ?2",
    )?;
    let mut out = Vec::with_capacity(order.len());
    for (id, modified, url) in order {
        let (paras, sents) = &places[&id];
        let (mut article, mut p_scores, mut s_scores) = (None, Vec::new(), Vec::new());
        let rows = score_stmt.query_map(rusqlite::params![id, tool], |r| {
            Ok((r.get::<_, String>(0)?, r.get::<_, Option<i64>>(1)?, r.get::<_, Option<i64>>(2)?, r.get::<_, f64>(3)?))
        })?;
        for row in rows {
            match row? {
                (scope, None, None, v) if scope == "ARTICLE" => article = Some(v),
                (scope, Some(p), None, v) if scope == "PARAGRAPH" && paras.contains(&p) => p_scores.push((p, v)),
                (scope, Some(p), Some(s), v) if scope == "SENTENCE" && sents.contains(&(p, s)) => s_scores.push(((p, s), v)),
                _ => {}
            }
        }
        p_scores.sort_by_key(|(k, _)| *k);
        s_scores.sort_by_key(|(k, _)| *k);
        let p_vals: Vec<f64> = p_scores.into_iter().map(|(_, v)| v).collect();
        let s_vals: Vec<f64> = s_scores.into_iter().map(|(_, v)| v).collect();
        out.push(SeriesPoint {
            date: parse_ts(&modified)?.date_naive(),
            article_id: ArticleId(id),
            url,
            article_score: article,
            paragraph_mean: mean(&p_vals),
            sentence_mean: mean(&s_vals),
        });
    }
    Ok(out)
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

/// `article,recall,precision,f1,tp,fp,fn`. Recall leads because gold lists
/// may under-report entities, which depresses precision but not recall.
pub fn write_prf_csv<W: Write>(rows: &[(String, Prf)], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["article", "recall", "precision", "f1", "tp", "fp", "fn"])?;
    for (name, p) in rows {
        w.write_record([
            name.clone(),
            p.recall.to_string(),
            p.precision.to_string(),
            p.f1.to_string(),
            p.tp.to_string(),
            p.fp.to_string(),
            p.fn_.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `tagger,person,location,organization,total`.
pub fn write_roster_csv<W: Write>(report: &RosterReport, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["tagger", "person", "location", "organization", "total"])?;
    for (tagger, c) in &report.per_tagger {
        w.write_record([
            tagger.clone(),
            c.person.to_string(),
            c.location.to_string(),
            c.organization.to_string(),
            c.total().to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `entity_id,full_name,category,articles,share`.
pub fn write_variants_csv<W: Write>(report: &VariantReport, out: W) -> Result<()> {
    let total: u64 = report.variants.iter().map(|v| v.articles).sum();
    let mut w = csv_writer(out);
    w.write_record(["entity_id", "full_name", "category", "articles", "share"])?;
    for v in &report.variants {
        w.write_record([
            v.entity_id.to_string(),
            v.full_name.clone(),
            v.category.as_str().to_string(),
            v.articles.to_string(),
            (v.articles as f64 / total as f64).to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `location,count`, the input format heatmap tools expect.
pub fn write_locations_csv<W: Write>(rows: &[LocationCount], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["location", "count"])?;
    for r in rows {
        w.write_record([r.location.clone(), r.count.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `date,article_id,url,article_score,paragraph_mean,sentence_mean`.
pub fn write_series_csv<W: Write>(rows: &[SeriesPoint], out: W) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv_writer(out);
    w.write_record(["date", "article_id", "url", "article_score", "paragraph_mean", "sentence_mean"])?;
    for r in rows {
        w.write_record([
            r.date.to_string(),
            r.article_id.to_string(),
            r.url.clone(),
            opt(r.article_score),
            opt(r.paragraph_mean),
            opt(r.sentence_mean),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(names: &[&str]) -> Vec<(String, Category)> {
        names.iter().map(|n| (n.to_string(), Category::Person)).collect()
    }

    #[test]
    fn prf_examples() {
        let g = set(&["a", "b"]);
        let p = prf(&g, &g, MatchMode::NameOnly);
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        let p = prf(&g, &set(&["b", "c"]), MatchMode::NameOnly);
        assert_eq!((p.precision, p.recall, p.f1), (0.5, 0.5, 0.5));
        let p = prf(&g, &set(&["a"]), MatchMode::NameOnly);
        assert_eq!((p.precision, p.recall), (1.0, 0.5));
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-15);
        let p = prf(&g, &set(&[]), MatchMode::NameOnly);
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn prf_modes() {
        let gold = vec![("F.B.I.".to_string(), Category::Organization)];
        let pred = vec![("fbi".to_string(), Category::Person)];
        assert_eq!(prf(&gold, &pred, MatchMode::NameOnly).tp, 1);
        assert_eq!(prf(&gold, &pred, MatchMode::Exact).tp, 0);
    }

    #[test]
    fn aggregate_examples() {
        let one = Prf::from_counts(1, 1, 0);
        let s = aggregate(&[one]).unwrap();
        assert_eq!((s.precision.mean, s.precision.sd), (0.5, 0.0));
        let a = Prf { f1: 0.2, ..one };
        let b = Prf { f1: 0.4, ..one };
        let s = aggregate(&[a, b]).unwrap();
        assert!((s.f1.mean - 0.3).abs() < 1e-15 && (s.f1.sd - 0.1).abs() < 1e-15);
        assert!(matches!(aggregate(&[]), Err(AnalyticsError::EmptyInput)));
    }

    #[test]
    fn roster_tokens_split_on_hyphens() {
        assert_eq!(roster_tokens("Alexandria Ocasio-Cortez"), ["Alexandria", "Ocasio", "Cortez"]);
        assert!(icontains_token("Alexandria Ocasio-Cortez", "cortez"));
        assert!(!icontains_token("Nancy Reaganomics", "Reagan"));
    }
}
