//! Acceptance runner. Each criterion runs against its own time bound and
//! prints one PASS/FAIL line; any failure makes the process exit nonzero.
//!
//! `QC_BLESS=1` rewrites the golden CSV instead of comparing against it.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};

use qc_core::analytics::{aggregate, prf, roster_report, variant_report, MatchMode, Prf};
use qc_core::ingest::Analyzer;
use qc_core::model::Article;
use qc_core::ner::EntityMention;
use qc_core::resolve::{normalize_surface, AbbreviationCorpus, MergePolicy};
use qc_core::segment::{segment_article, AbbreviationGuard};
use qc_core::sentiment::{score_article, SentimentLexicon, SentimentTool};
use qc_core::store::{rows_to_csv, QueryFilter, Store, CSV_HEADER};
use qc_core::{Category, ScopeKind, Span};

type Outcome = Result<String, String>;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn t0() -> chrono::DateTime<chrono::Utc> {
    chrono::DateTime::from_timestamp(1_614_600_000, 0).unwrap()
}

// ------------------------------------------------------------------ criteria

fn granularity() -> Outcome {
    let seg = segment_article("k", &["Good start. Bad end.", "Neutral paragraph here."], &AbbreviationGuard::bundled());
    let lex = SentimentLexicon::bundled();
    for tool in SentimentTool::defaults() {
        let rows = score_article(&seg, &lex, &tool);
        let count = |k: ScopeKind| rows.iter().filter(|r| r.scope.kind() == k).count();
        let got = (rows.len(), count(ScopeKind::Sentence), count(ScopeKind::Paragraph), count(ScopeKind::Article));
        ensure(got == (6, 3, 2, 1), || format!("{}: (total, sentence, paragraph, article) = {got:?}", tool.id))?;
    }
    Ok("6 rows for each tool".into())
}

fn sentiment_properties() -> Outcome {
    let n = common::check_sentiment_properties(10_000)?;
    Ok(format!("{n} streams, 0 violations"))
}

fn normalization() -> Outcome {
    let err = common::max_normalization_error(1_000, 11);
    ensure(err <= 1e-9, || format!("max deviation {err:e}"))?;
    Ok(format!("max deviation {err:.1e} over 1000 samples"))
}

fn exhaustive_resolution() -> Outcome {
    let (checked, mismatch) = common::exhaustive_resolution(6);
    let want: usize = (0..=6).map(|l| 8usize.pow(l)).sum();
    if let Some(m) = mismatch {
        return Err(m);
    }
    ensure(checked == want, || format!("checked {checked}, expected {want}"))?;
    Ok(format!("{checked} sequences, 0 mismatches"))
}

fn anchored_resolution() -> Outcome {
    let corpus = AbbreviationCorpus::bundled();
    let seq = [("Alexandria Ocasio-Cortez", Category::Person), ("Ocasio-Cortez", Category::Person)].map(|(s, c)| (s.to_string(), c));
    let (labels, names) = common::streaming_resolve(&seq, &corpus);
    ensure(labels == [0, 0] && names == [("Alexandria Ocasio-Cortez".to_string(), Category::Person)], || {
        format!("Ocasio-Cortez: {labels:?} {names:?}")
    })?;
    let norm = normalize_surface("F.B.I.");
    ensure(norm == "FBI", || format!("F.B.I. normalized to {norm}"))?;
    let (_, names) = common::streaming_resolve(&[("F.B.I.".to_string(), Category::Organization)], &corpus);
    ensure(names[0].0 == "Federal Bureau of Investigation", || format!("F.B.I. resolved to {}", names[0].0))?;
    Ok("Ocasio-Cortez merged; F.B.I. -> FBI -> Federal Bureau of Investigation".into())
}

fn dedup() -> Outcome {
    let mut rng = rand::rngs::StdRng::seed_from_u64(20);
    let mut ops: Vec<(usize, usize)> = (0..100).map(|u| (u, rng.random_range(0..3))).collect();
    ops.extend((0..900).map(|_| (rng.random_range(0..100), rng.random_range(0..3))));
    for i in (1..ops.len()).rev() {
        ops.swap(i, rng.random_range(0..=i));
    }
    let n = common::dedup_run(&ops)?;
    ensure(n == 100, || format!("{n} articles"))?;
    Ok("1000 upserts -> 100 articles, no orphans".into())
}

/// Three analyzed articles plus one hand-made link whose entity name holds a
/// comma and a quote, so the CSV quoting is exercised.
fn golden_store() -> Result<Store, String> {
    let analyzer = Analyzer::bundled();
    let mut store = Store::open_in_memory().map_err(e)?;
    store.register_media("Slate", "https://slate.test/").map_err(e)?;
    store.register_media("Fox News", "https://foxnews.test/").map_err(e)?;
    let bodies: [(&str, &str, &[&str]); 3] = [
        ("Slate", "a1", &["Nancy Pelosi praised the great plan. Pelosi was happy.", "The F.B.I. said nothing."]),
        ("Fox News", "b1", &["Senator Mitch McConnell called it a terrible idea in Washington."]),
        ("Slate", "a2", &["Residents of Boston were not happy.", "Joe Biden visited Ohio on Tuesday."]),
    ];
    for (i, (media, path, paras)) in bodies.iter().enumerate() {
        let host = if *media == "Slate" { "slate.test" } else { "foxnews.test" };
        let url = url::Url::parse(&format!("https://{host}/{path}")).map_err(e)?;
        let t = t0() + chrono::Duration::days(i as i64);
        let a = Article::new(*media, url, format!("Headline {i}"), Some(t), t, t, paras.iter().map(|s| s.to_string()));
        let an = analyzer.analyze(&a).map_err(e)?;
        store.commit_article(&a, &an.scores, &an.resolutions, MergePolicy::default()).map_err(e)?;
    }

    let text = "Smith, Jones & \"Partners\" LLP filed suit.";
    let url = url::Url::parse("https://foxnews.test/b2").map_err(e)?;
    let t = t0() + chrono::Duration::days(3);
    let a = Article::new("Fox News", url, "Headline 3", Some(t), t, t, [text.to_string()]);
    let seg = segment_article(a.url.as_str(), &a.paragraphs, &analyzer.guard);
    let scores: Vec<_> = analyzer.tools.iter().flat_map(|tool| score_article(&seg, &analyzer.lexicon, tool)).collect();
    let name = "Smith, Jones & \"Partners\" LLP";
    let id = store.ensure_entity(name, Category::Organization).map_err(e)?;
    let m = EntityMention {
        surface: name.into(),
        category: Category::Organization,
        span: Span::new(0, name.chars().count()),
        paragraph_index: 0,
        sentence_index: 0,
        tagger: "manual".into(),
    };
    store.persist_article_bundle(&a, &scores, &[(m, id)]).map_err(e)?;
    Ok(store)
}

fn golden_csv() -> Outcome {
    let store = golden_store()?;
    let rows = store.query_rows(&QueryFilter::default()).map_err(e)?;
    let csv = rows_to_csv(&rows);
    let path = fixtures().join("golden/search.csv");
    if std::env::var_os("QC_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).map_err(e)?;
        std::fs::write(&path, &csv).map_err(e)?;
        return Ok(format!("blessed {} ({} rows)", path.display(), rows.len()));
    }
    let want = std::fs::read(&path).map_err(|err| format!("{}: {err}", path.display()))?;
    let header = format!("{CSV_HEADER}\n");
    ensure(csv.starts_with(header.as_bytes()), || "header differs".into())?;
    ensure(CSV_HEADER.split(',').count() == 13, || "header is not 13 columns".into())?;
    if csv != want {
        let got = String::from_utf8_lossy(&csv);
        let want = String::from_utf8_lossy(&want);
        let line = got.lines().zip(want.lines()).position(|(a, b)| a != b).unwrap_or(got.lines().count().min(want.lines().count()));
        return Err(format!("differs from golden at line {}", line + 1));
    }
    Ok(format!("{} rows, byte-exact", rows.len()))
}

fn prf_oracle() -> Outcome {
    let mut rng = rand::rngs::StdRng::seed_from_u64(41);
    let mut per_article = Vec::new();
    for i in 0..10_000 {
        let gold = common::random_entity_set(&mut rng, 12);
        let pred = common::random_entity_set(&mut rng, 12);
        for mode in [MatchMode::Exact, MatchMode::NameOnly] {
            let got = prf(&gold, &pred, mode);
            let want = common::oracle_prf(&gold, &pred, mode);
            ensure(got == want, || format!("pair {i} {mode:?}: {got:?} vs {want:?}"))?;
        }
        per_article.push(prf(&gold, &pred, MatchMode::NameOnly));
    }
    let summary = aggregate(&per_article).map_err(e)?;
    type Pick = (&'static str, fn(&Prf) -> f64, f64, f64);
    let pick: [Pick; 3] = [
        ("precision", |p| p.precision, summary.precision.mean, summary.precision.sd),
        ("recall", |p| p.recall, summary.recall.mean, summary.recall.sd),
        ("f1", |p| p.f1, summary.f1.mean, summary.f1.sd),
    ];
    for (name, f, mean, sd) in pick {
        let xs: Vec<f64> = per_article.iter().map(f).collect();
        let (m, s) = common::two_pass(&xs);
        ensure((m - mean).abs() <= 1e-12 && (s - sd).abs() <= 1e-12, || format!("{name}: ({mean}, {sd}) vs oracle ({m}, {s})"))?;
    }
    Ok("10000 pairs exact in both modes; aggregates within 1e-12".into())
}

fn seed_links(store: &mut Store, name: &str, category: Category, articles: usize, tag: &str) -> Result<(), String> {
    let id = store.ensure_entity(name, category).map_err(e)?;
    for i in 0..articles {
        let url = url::Url::parse(&format!("https://seed.test/{tag}/{i}")).map_err(e)?;
        let text = format!("{name} was mentioned.");
        let a = Article::new("Seed", url, "seed", None, t0(), t0(), [text]);
        let m = EntityMention {
            surface: name.into(),
            category,
            span: Span::new(0, name.chars().count()),
            paragraph_index: 0,
            sentence_index: 0,
            tagger: "builtin".into(),
        };
        store.persist_article_bundle(&a, &[], &[(m, id)]).map_err(e)?;
    }
    Ok(())
}

fn roster() -> Outcome {
    let text = std::fs::read_to_string(fixtures().join("roster.txt")).map_err(e)?;
    let names: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(String::from).collect();
    ensure(names.len() == 538, || format!("roster has {} names", names.len()))?;
    let mut store = Store::open_in_memory().map_err(e)?;
    store.register_media("Seed", "https://seed.test/").map_err(e)?;
    // Seven of every ten names, stopping at 372.
    let seeded: Vec<&String> = names.iter().enumerate().filter(|(i, _)| i % 10 < 7).map(|(_, n)| n).take(372).collect();
    ensure(seeded.len() == 372, || format!("only {} seeded", seeded.len()))?;
    for (i, n) in seeded.iter().enumerate() {
        seed_links(&mut store, n, Category::Person, 1, &format!("r{i}"))?;
    }
    let r = roster_report(&store, &names, &[]).map_err(e)?;
    let pct = r.coverage * 100.0;
    ensure(r.matched == 372 && r.roster_size == 538, || format!("{}/{}", r.matched, r.roster_size))?;
    ensure((pct - 69.1).abs() <= 0.05, || format!("coverage {pct:.3}%"))?;
    Ok(format!("{}/{} = {pct:.2}%", r.matched, r.roster_size))
}

fn variants() -> Outcome {
    let mut store = Store::open_in_memory().map_err(e)?;
    store.register_media("Seed", "https://seed.test/").map_err(e)?;
    seed_links(&mut store, "Pelosi", Category::Organization, 371, "org")?;
    seed_links(&mut store, "Nancy Pelosi", Category::Person, 1915, "per")?;
    let r = variant_report(&store, &["Pelosi".to_string()]).map_err(e)?;
    let got: Vec<(&str, Category, u64)> = r.variants.iter().map(|v| (v.full_name.as_str(), v.category, v.articles)).collect();
    let want = [("Nancy Pelosi", Category::Person, 1915), ("Pelosi", Category::Organization, 371)];
    ensure(got == want, || format!("{got:?}"))?;
    Ok("Nancy Pelosi/PERSON 1915 > Pelosi/ORGANIZATION 371".into())
}

// ------------------------------------------------------------ binary-driven

const SENTINEL: &str = "zqx-body-sentinel";

struct Service {
    child: Child,
    base: String,
}

impl Drop for Service {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn qc(config: &Path, db: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qc"));
    c.arg("--config").arg(config).arg("--database").arg(db);
    c
}

fn run_qc(config: &Path, db: &Path, args: &[&str]) -> Result<String, String> {
    let out = qc(config, db).args(args).output().map_err(e)?;
    if !out.status.success() {
        return Err(format!("qc {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn start_service(config: &Path, db: &Path) -> Result<Service, String> {
    let mut child = qc(config, db)
        .args(["service", "run", "--port", "0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(e)?;
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).map_err(e)?;
    let base = line.trim().strip_prefix("listening on ").map(String::from);
    let svc = Service { child, base: base.unwrap_or_default() };
    ensure(!svc.base.is_empty(), || format!("unexpected service output {line:?}"))?;
    Ok(svc)
}

fn http_get(url: &str) -> Result<String, String> {
    let mut resp = ureq::get(url).call().map_err(|err| format!("GET {url}: {err}"))?;
    let mut s = String::new();
    resp.body_mut().as_reader().read_to_string(&mut s).map_err(e)?;
    Ok(s)
}

/// Ingests the mirrored fixture feeds with the real binary and returns the
/// database path.
fn ingest_fixture(dir: &Path) -> Result<(PathBuf, PathBuf, String), String> {
    let config = fixtures().join("e2e/config.toml");
    let db = dir.join("qc.db");
    let out = run_qc(&config, &db, &["ingest", "once"])?;
    Ok((config, db, out))
}

fn end_to_end(dir: &Path) -> Outcome {
    let (config, db, out) = ingest_fixture(dir)?;
    let inserted: usize = out
        .lines()
        .filter_map(|l| l.split(", ").nth(1)?.strip_suffix(" inserted")?.parse::<usize>().ok())
        .sum();
    ensure(out.lines().filter(|l| !l.starts_with(' ')).count() == 3 && inserted == 10, || format!("ingest output:\n{out}"))?;
    ensure(!out.contains("failed") || out.contains("0 failed"), || out.clone())?;

    let check = run_qc(&config, &db, &["store", "check"])?;
    let counts: serde_json::Value = serde_json::from_str(check.lines().next().unwrap_or("")).map_err(e)?;
    for table in ["media", "article", "entity", "article_entity", "sentiment"] {
        ensure(counts[table].as_u64().unwrap_or(0) > 0, || format!("{table} empty: {counts}"))?;
    }
    ensure(counts["article"] == 10, || format!("{counts}"))?;

    let svc = start_service(&config, &db)?;
    let search: qc_service::SearchResponse =
        serde_json::from_str(&http_get(&format!("{}/api/v1/search?entity=pelosi", svc.base))?).map_err(e)?;
    ensure(search.total > 0, || "no Pelosi rows".into())?;
    let csv = http_get(&format!("{}/api/v1/export/{}", svc.base, search.export))?;
    ensure(csv.starts_with(CSV_HEADER) && csv.lines().count() == search.total + 1, || {
        format!("export has {} lines for total {}", csv.lines().count(), search.total)
    })?;
    Ok(format!("{counts}; search {} rows, export round-trip ok", search.total))
}

fn content_exclusion(dir: &Path) -> Outcome {
    let (config, db, _) = ingest_fixture(dir)?;
    let mut docs: Vec<(String, String)> = Vec::new();
    {
        let svc = start_service(&config, &db)?;
        let all = http_get(&format!("{}/api/v1/search?entity=", svc.base))?;
        let r: qc_service::SearchResponse = serde_json::from_str(&all).map_err(e)?;
        ensure(r.total > 0, || "empty search".into())?;
        docs.push(("export".into(), http_get(&format!("{}/api/v1/export/{}", svc.base, r.export))?));
        docs.push(("search".into(), all));
        for q in ["scope=sentence", "scope=paragraph&sources=CNN", "entity=zqx", "sentiment_tool=lexrule-5class"] {
            docs.push((q.into(), http_get(&format!("{}/api/v1/search?{q}", svc.base))?));
        }
        for m in ["sources", "taggers"] {
            docs.push((m.into(), http_get(&format!("{}/api/v1/meta/{m}", svc.base))?));
        }
    }
    docs.push(("locations".into(), run_qc(&config, &db, &["report", "locations"])?));
    docs.push(("variants".into(), run_qc(&config, &db, &["report", "variants", "--tokens", "Pelosi,FBI"])?));
    docs.push(("series".into(), run_qc(&config, &db, &["report", "series", "--entity-id", "1"])?));
    let roster = fixtures().join("roster.txt");
    docs.push(("roster".into(), run_qc(&config, &db, &["report", "roster", "--roster", roster.to_str().unwrap()])?));
    // Sanity check that the sentinel really is in the stored bodies.
    let store = Store::open(&db).map_err(e)?;
    let urls: std::collections::BTreeSet<String> =
        store.query_rows(&QueryFilter::default()).map_err(e)?.into_iter().map(|r| r.url).collect();
    let mut planted = 0;
    for u in &urls {
        let a = store.article_by_url(u).map_err(e)?.ok_or_else(|| format!("{u} missing"))?;
        planted += a.paragraphs.iter().any(|p| p.contains(SENTINEL)) as usize;
    }
    ensure(planted == 10, || format!("sentinel found in {planted} stored bodies, expected 10"))?;
    let hits: Vec<&str> = docs.iter().filter(|(_, d)| d.contains(SENTINEL)).map(|(n, _)| n.as_str()).collect();
    ensure(hits.is_empty(), || format!("sentinel found in {hits:?}"))?;
    Ok(format!("{} responses/CSVs scanned, 0 hits", docs.len()))
}

// ------------------------------------------------------------------- runner

fn main() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let e2e_dir = tmp.path().join("e2e");
    let excl_dir = tmp.path().join("exclusion");
    std::fs::create_dir_all(&e2e_dir).unwrap();
    std::fs::create_dir_all(&excl_dir).unwrap();

    type Criterion = (&'static str, Duration, Box<dyn FnOnce() -> Outcome>);
    let criteria: Vec<Criterion> = vec![
        ("granularity count", Duration::from_secs(1), Box::new(granularity)),
        ("sentiment properties", Duration::from_secs(30), Box::new(sentiment_properties)),
        ("normalization", Duration::from_secs(5), Box::new(normalization)),
        ("resolution oracle equivalence", Duration::from_secs(60), Box::new(exhaustive_resolution)),
        ("anchored resolution fixtures", Duration::MAX, Box::new(anchored_resolution)),
        ("dedup", Duration::from_secs(10), Box::new(dedup)),
        ("csv contract", Duration::MAX, Box::new(golden_csv)),
        ("prf oracle", Duration::MAX, Box::new(prf_oracle)),
        ("roster arithmetic", Duration::MAX, Box::new(roster)),
        ("variant fixture", Duration::MAX, Box::new(variants)),
        ("content exclusion", Duration::MAX, Box::new(move || content_exclusion(&excl_dir))),
        ("end-to-end smoke", Duration::from_secs(60), Box::new(move || end_to_end(&e2e_dir))),
    ];

    let mut failed = 0;
    for (name, bound, check) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or("panic".into())));
        let took = start.elapsed();
        let outcome = outcome.and_then(|msg| {
            if took > bound {
                Err(format!("{msg}; took {took:.2?}, bound {bound:.0?}"))
            } else {
                Ok(msg)
            }
        });
        match outcome {
            Ok(msg) => println!("PASS  {name:<32} {took:>9.2?}  {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name:<32} {took:>9.2?}  {msg}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
