mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use qc_core::store::{QueryFilter, Store};
use qc_core::ScopeKind;

#[test]
fn thousand_upserts_over_hundred_urls() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(3);
    let mut ops: Vec<(usize, usize)> = (0..100).map(|u| (u, rng.random_range(0..3))).collect();
    ops.extend((0..900).map(|_| (rng.random_range(0..100), rng.random_range(0..3))));
    // Shuffle so first sightings are interleaved with updates.
    for i in (1..ops.len()).rev() {
        ops.swap(i, rng.random_range(0..=i));
    }
    assert_eq!(common::dedup_run(&ops), Ok(100));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn any_interleaving_dedups(ops in prop::collection::vec((0usize..12, 0usize..3), 1..60)) {
        let urls = ops.iter().map(|o| o.0).collect::<BTreeSet<_>>().len();
        prop_assert_eq!(common::dedup_run(&ops), Ok(urls));
    }

    #[test]
    fn queries_do_not_write(entity in "[a-zA-Z ]{0,8}", tool in prop::option::of(prop::sample::select(vec!["lexrule-1", "lexrule-5class", "nope"])),
                            scope in prop::option::of(prop::sample::select(vec![ScopeKind::Article, ScopeKind::Paragraph, ScopeKind::Sentence])),
                            sources in prop::option::of(prop::sample::subsequence(vec!["Even", "Odd", "Unknown"], 0..3)))
    {
        let store = seeded();
        let before = store.state_digest().unwrap();
        let filter = QueryFilter {
            entity,
            tool: tool.map(String::from),
            scope,
            sources: sources.map(|s| s.into_iter().map(String::from).collect()),
            ..Default::default()
        };
        let _ = store.query_rows(&filter);
        prop_assert_eq!(store.state_digest().unwrap(), before);
    }
}

fn seeded() -> Store {
    use std::sync::OnceLock;
    static OPS: OnceLock<Vec<(usize, usize)>> = OnceLock::new();
    let ops = OPS.get_or_init(|| (0..6).map(|i| (i, i % 3)).collect());
    let analyzer = qc_core::ingest::Analyzer::bundled();
    let mut store = Store::open_in_memory().unwrap();
    store.register_media("Even", "https://even.test/").unwrap();
    store.register_media("Odd", "https://odd.test/").unwrap();
    for (step, &(u, v)) in ops.iter().enumerate() {
        let a = common::dedup_article(u, v, step);
        let an = analyzer.analyze(&a).unwrap();
        store.commit_article(&a, &an.scores, &an.resolutions, Default::default()).unwrap();
    }
    store
}

#[test]
fn seeded_store_is_consistent() {
    let store = seeded();
    assert!(store.check_integrity().unwrap().is_empty());
    assert!(store.table_counts().unwrap().all_nonzero());
    let rows = store.query_rows(&QueryFilter { entity: "pelosi".into(), ..Default::default() }).unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.entity.to_lowercase().contains("pelosi")));
}
