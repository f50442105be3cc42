use std::sync::OnceLock;

use proptest::prelude::*;
use shieldrec::datamodel::{Catalog, Explanation, Interaction, ItemRecord};
use shieldrec::evalsim::*;
use shieldrec::ingest::{assemble, synthesize, DatasetConfig, InteractionDataset, SyntheticConfig};
use shieldrec::rectower::{train_bpr, BprConfig, RecTower};
use tensorlab::Tensor;

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One user `u` whose only train item is `i2`, so `i0` and `i1` are its
/// two candidates; `v` exists to keep those items in the catalog.
fn two_item_world() -> (InteractionDataset, RecTower) {
    let mut catalog = Catalog::new();
    for (id, title) in [("i0", "Silver Harbor"), ("i1", "Ember Road"), ("i2", "Dragon Castle")] {
        catalog.insert(id.into(), ItemRecord::new(id, title, "A", ["fantasy"], "").unwrap());
    }
    let its = vec![
        Interaction::new("u", "i2", 5, 0).unwrap(),
        Interaction::new("v", "i0", 5, 1).unwrap(),
        Interaction::new("v", "i1", 4, 2).unwrap(),
        Interaction::new("v", "i2", 5, 3).unwrap(),
    ];
    let cfg = DatasetConfig {
        min_user_interactions: 1,
        min_item_ratings: 1,
        train_fraction: 0.75,
        synthetic: None,
    };
    let ds = assemble(catalog, its, &cfg).unwrap();
    let emb = |ids: &[String], f: &dyn Fn(&str) -> f32| Tensor::from_fn(&[ids.len(), 1], |k| f(&ids[k]));
    let probe = RecTower::init(&ds, 1, 0);
    let users = probe.user_ids().to_vec();
    let items = probe.item_ids().to_vec();
    let tower = RecTower::with_parameters(
        &ds,
        emb(&users, &|u| if u == "u" { 1.0 } else { 0.0 }),
        emb(&items, &|i| match i {
            "i0" => 0.5,
            "i1" => -1.0,
            _ => 0.0,
        }),
        Tensor::zeros(&[users.len()]),
        Tensor::from_fn(&[items.len()], |k| match items[k].as_str() {
            "i0" => 0.2,
            "i1" => 0.1,
            _ => 0.0,
        }),
    )
    .unwrap()
    .freeze();
    (ds, tower)
}

#[test]
fn hand_built_tower_matches_closed_form_sigmoids() {
    let (ds, tower) = two_item_world();
    let recs = tower.recommend("u", CTR_TOP_K).unwrap();
    let ids: Vec<&str> = recs.iter().map(|r| r.0.as_str()).collect();
    assert_eq!(ids, ["i0", "i1"]);

    let prefs: Vec<String> = ds.users["u"].preference_keywords.iter().cloned().collect();
    assert!(!prefs.is_empty());
    let none = simulate_ctr(&tower, &ds, &["u"], |_, _| Ok(None)).unwrap();
    let want_none = (sig(0.7) + sig(-0.9)) / 2.0;
    assert!((none - want_none).abs() < 1e-6, "{none} vs {want_none}");

    // i0 gets an explanation naming one preference keyword, i1 an empty one
    let with = simulate_ctr(&tower, &ds, &["u"], |_, item| {
        Ok(Some(if item.item_id == "i0" {
            Explanation::from_text(prefs[0].clone())
        } else {
            Explanation::empty()
        }))
    })
    .unwrap();
    let appeal = 1.0 / prefs.len() as f64;
    let want = (sig(0.7 + 0.3 * appeal) + sig(-0.9)) / 2.0;
    assert!((with - want).abs() < 1e-6, "{with} vs {want}");

    let full = simulate_ctr(&tower, &ds, &["u"], |_, _| Ok(Some(Explanation::from_text(prefs.join(" "))))).unwrap();
    let want_full = (sig(1.0) + sig(-0.6)) / 2.0;
    assert!((full - want_full).abs() < 1e-6);
    assert!(simulate_ctr(&tower, &ds, &[], |_, _| Ok(None)).is_err());
}

fn world() -> &'static (InteractionDataset, RecTower) {
    static W: OnceLock<(InteractionDataset, RecTower)> = OnceLock::new();
    W.get_or_init(|| {
        let cfg = DatasetConfig {
            synthetic: Some(SyntheticConfig {
                n_users: 30,
                n_items: 60,
                n_interactions: 600,
                n_genres: 4,
                seed: 9,
            }),
            ..DatasetConfig::default()
        };
        let ds = synthesize(&cfg).unwrap();
        let bpr = BprConfig { embedding_dim: 8, epochs: 5, ..BprConfig::default() };
        let tower = train_bpr(&ds, &bpr).unwrap().freeze();
        (ds, tower)
    })
}

fn keyword_text(keywords: &[String], k: usize) -> Explanation {
    Explanation::from_text(keywords.iter().take(k).cloned().collect::<Vec<_>>().join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn more_appeal_never_lowers_relative_ctr(counts in prop::collection::vec((0usize..6, 0usize..6), 300)) {
        let (ds, tower) = world();
        let users: Vec<&str> = ds.users.keys().map(String::as_str).collect();
        let none = simulate_ctr(tower, ds, &users, |_, _| Ok(None)).unwrap();
        let run = |bigger: bool| {
            let mut cell = 0usize;
            let ctr = simulate_ctr(tower, ds, &users, |u, _| {
                let (a, b) = counts[cell % counts.len()];
                cell += 1;
                let k = if bigger { a.max(b) } else { a.min(b) };
                let kw: Vec<String> = u.preference_keywords.iter().cloned().collect();
                Ok(Some(keyword_text(&kw, k)))
            })
            .unwrap();
            relative_ctr(ctr, none).unwrap()
        };
        let (low, high) = (run(false), run(true));
        prop_assert!(high >= low);
        prop_assert!(low >= 1.0);
    }
}

#[test]
fn null_explainer_is_its_own_baseline() {
    let (ds, tower) = world();
    let users: Vec<&str> = ds.users.keys().map(String::as_str).collect();
    let a = simulate_ctr(tower, ds, &users, |_, _| Ok(None)).unwrap();
    let b = simulate_ctr(tower, ds, &users, |_, _| Ok(None)).unwrap();
    assert_eq!(a, b);
    assert_eq!(relative_ctr(a, b).unwrap(), 1.0);
}
