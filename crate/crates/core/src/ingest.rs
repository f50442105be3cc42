//! Dataset loading, synthesis, filtering, temporal split and profile
//! derivation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use indexmap::IndexSet;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datamodel::{Catalog, HistoryEntry, Interaction, ItemRecord, UserProfile};
use crate::{Error, Result};

/// Cap on preference keywords kept per user.
pub const MAX_PREFERENCE_KEYWORDS: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub n_genres: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_users: 100,
            n_items: 300,
            n_interactions: 2000,
            n_genres: 8,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub min_user_interactions: usize,
    pub min_item_ratings: usize,
    pub train_fraction: f64,
    pub synthetic: Option<SyntheticConfig>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            min_user_interactions: 5,
            min_item_ratings: 3,
            train_fraction: 0.8,
            synthetic: Some(SyntheticConfig::default()),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InteractionDataset {
    pub users: BTreeMap<String, UserProfile>,
    pub items: Catalog,
    pub train: Vec<Interaction>,
    pub eval: Vec<Interaction>,
}

#[derive(Deserialize, Serialize)]
struct InteractionRow {
    user_id: String,
    item_id: String,
    rating: u8,
    timestamp: i64,
}

#[derive(Deserialize, Serialize)]
struct ItemRow {
    item_id: String,
    title: String,
    author: String,
    genres: String,
    description: String,
}

const INTERACTION_HEADER: [&str; 4] = ["user_id", "item_id", "rating", "timestamp"];
const ITEM_HEADER: [&str; 5] = ["item_id", "title", "author", "genres", "description"];

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> Result<Vec<(u64, T)>> {
    let csv_err = |line: u64, msg: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(0, e.to_string()))?;
    let got = rdr.headers().map_err(|e| csv_err(1, e.to_string()))?.clone();
    if got.iter().collect::<Vec<_>>() != header {
        return Err(csv_err(1, format!("expected header {}", header.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: T = rec
            .deserialize(Some(&got))
            .map_err(|e| csv_err(line, e.to_string()))?;
        out.push((line, row));
    }
    Ok(out)
}

pub fn load_csv(
    interactions_path: impl AsRef<Path>,
    items_path: impl AsRef<Path>,
    cfg: &DatasetConfig,
) -> Result<InteractionDataset> {
    cfg.validate()?;
    let items_path = items_path.as_ref();
    let interactions_path = interactions_path.as_ref();
    let mut items = Catalog::new();
    for (line, r) in read_rows::<ItemRow>(items_path, &ITEM_HEADER)? {
        let rec = ItemRecord::new(
            r.item_id.clone(),
            r.title,
            r.author,
            r.genres.split('|'),
            &r.description,
        )
        .map_err(|e| Error::Csv {
            path: items_path.to_path_buf(),
            line,
            msg: e.to_string(),
        })?;
        items.insert(r.item_id, rec);
    }
    let mut interactions = Vec::new();
    let mut dropped = 0usize;
    for (line, r) in read_rows::<InteractionRow>(interactions_path, &INTERACTION_HEADER)? {
        let it = Interaction::new(r.user_id, r.item_id, r.rating, r.timestamp).map_err(|e| {
            Error::Csv {
                path: interactions_path.to_path_buf(),
                line,
                msg: e.to_string(),
            }
        })?;
        if items.contains_key(&it.item_id) {
            interactions.push(it);
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} interactions referencing unknown items");
    }
    assemble(items, interactions, cfg)
}

/// Removes users and items below the thresholds until nothing changes.
pub fn filter_to_fixed_point(
    mut interactions: Vec<Interaction>,
    min_user: usize,
    min_item: usize,
) -> Vec<Interaction> {
    loop {
        let mut per_user: HashMap<&str, usize> = HashMap::new();
        let mut per_item: HashMap<&str, usize> = HashMap::new();
        for it in &interactions {
            *per_user.entry(&it.user_id).or_default() += 1;
            *per_item.entry(&it.item_id).or_default() += 1;
        }
        let keep: Vec<bool> = interactions
            .iter()
            .map(|it| per_user[it.user_id.as_str()] >= min_user && per_item[it.item_id.as_str()] >= min_item)
            .collect();
        if keep.iter().all(|&k| k) {
            return interactions;
        }
        let mut flags = keep.into_iter();
        interactions.retain(|_| flags.next().unwrap());
    }
}

/// Chronological split: the earliest `fraction` of interactions train,
/// with every interaction sharing the boundary timestamp kept in train.
pub fn temporal_split(
    mut interactions: Vec<Interaction>,
    fraction: f64,
) -> (Vec<Interaction>, Vec<Interaction>) {
    interactions.sort_by(|a, b| {
        (a.timestamp, &a.user_id, &a.item_id).cmp(&(b.timestamp, &b.user_id, &b.item_id))
    });
    if interactions.is_empty() {
        return (interactions, Vec::new());
    }
    let n_train = ((interactions.len() as f64 * fraction).floor() as usize).max(1);
    let boundary = interactions[n_train - 1].timestamp;
    let cut = interactions.partition_point(|it| it.timestamp <= boundary);
    let eval = interactions.split_off(cut);
    (interactions, eval)
}

/// Filters, splits and profiles an in-memory dataset; the shared tail of
/// [`load_csv`] and [`synthesize`].
pub fn assemble(
    items: Catalog,
    interactions: Vec<Interaction>,
    cfg: &DatasetConfig,
) -> Result<InteractionDataset> {
    let interactions = filter_to_fixed_point(
        interactions,
        cfg.min_user_interactions,
        cfg.min_item_ratings,
    );
    if interactions.is_empty() {
        return Err(Error::EmptyAfterFilter);
    }
    let used: BTreeSet<&str> = interactions.iter().map(|i| i.item_id.as_str()).collect();
    let items: Catalog = items
        .into_iter()
        .filter(|(id, _)| used.contains(id.as_str()))
        .collect();
    let (train, eval) = temporal_split(interactions, cfg.train_fraction);

    let mut by_user: BTreeMap<String, Vec<Interaction>> = BTreeMap::new();
    for it in train.iter() {
        by_user.entry(it.user_id.clone()).or_default().push(it.clone());
    }
    for it in eval.iter() {
        by_user.entry(it.user_id.clone()).or_default();
    }
    let users = by_user
        .into_iter()
        .map(|(uid, its)| {
            let p = derive_profile(&uid, &its, &items);
            (uid, p)
        })
        .collect();
    Ok(InteractionDataset {
        users,
        items,
        train,
        eval,
    })
}

pub fn derive_profile(user_id: &str, interactions: &[Interaction], items: &Catalog) -> UserProfile {
    let mut sorted: Vec<&Interaction> = interactions.iter().collect();
    sorted.sort_by(|a, b| (a.timestamp, &a.item_id).cmp(&(b.timestamp, &b.item_id)));
    let n = sorted.len() as f64;
    let mut genre_weights: BTreeMap<String, f64> = BTreeMap::new();
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for (rank, it) in sorted.iter().enumerate() {
        if !it.is_positive() {
            continue;
        }
        let Some(item) = items.get(&it.item_id) else {
            continue;
        };
        let recency = (rank + 1) as f64 / n;
        for g in &item.genres {
            *genre_weights.entry(g.clone()).or_default() += f64::from(it.rating) / 5.0 * recency;
        }
        for k in &item.domain_keywords {
            *freq.entry(k).or_default() += 1;
        }
    }
    let mut kws: Vec<(&str, usize)> = freq.into_iter().collect();
    kws.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let preference_keywords: IndexSet<String> = kws
        .into_iter()
        .take(MAX_PREFERENCE_KEYWORDS)
        .map(|(k, _)| k.to_string())
        .collect();
    let history = sorted
        .iter()
        .map(|it| HistoryEntry {
            item_id: it.item_id.clone(),
            rating: it.rating,
            timestamp: it.timestamp,
        })
        .collect();
    UserProfile::new(user_id, history, genre_weights, preference_keywords)
        .expect("derived weights are non-negative")
}

impl InteractionDataset {
    pub fn interactions_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for it in self.train.iter().chain(&self.eval) {
            w.serialize(InteractionRow {
                user_id: it.user_id.clone(),
                item_id: it.item_id.clone(),
                rating: it.rating,
                timestamp: it.timestamp,
            })
            .expect("in-memory csv write");
        }
        w.into_inner().expect("in-memory csv flush")
    }

    pub fn items_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for it in self.items.values() {
            w.serialize(ItemRow {
                item_id: it.item_id.clone(),
                title: it.title.clone(),
                author: it.author.clone(),
                genres: it.genres.iter().cloned().collect::<Vec<_>>().join("|"),
                description: it.description.clone(),
            })
            .expect("in-memory csv write");
        }
        w.into_inner().expect("in-memory csv flush")
    }

    /// Writes `interactions.csv` and `items.csv` into `dir`.
    pub fn export_csv(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("interactions.csv"), self.interactions_csv())?;
        fs::write(dir.join("items.csv"), self.items_csv())?;
        Ok(())
    }

    /// SHA-256 over the exported CSV bytes, truncated to 64 bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(self.interactions_csv());
        h.update(self.items_csv());
        u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
    }

    /// Users with at least one positive eval interaction, in id order.
    pub fn eval_users(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self
            .eval
            .iter()
            .filter(|i| i.is_positive())
            .map(|i| i.user_id.as_str())
            .collect();
        set.into_iter().collect()
    }

    pub fn summary(&self) -> String {
        format!(
            "users={} items={} train={} eval={} fingerprint={:016x}",
            self.users.len(),
            self.items.len(),
            self.train.len(),
            self.eval.len(),
            self.fingerprint()
        )
    }
}

const THEMES: [(&str, [&str; 12]); 8] = [
    ("fantasy", ["dragon", "castle", "magic", "quest", "wizard", "kingdom", "sword", "prophecy", "sorcery", "realm", "elven", "throne"]),
    ("romance", ["love", "heart", "passion", "wedding", "summer", "letters", "kiss", "promise", "duke", "courtship", "desire", "harbor"]),
    ("mystery", ["detective", "murder", "clue", "secret", "alibi", "inspector", "manor", "poison", "riddle", "shadow", "witness", "cipher"]),
    ("scifi", ["starship", "galaxy", "robot", "colony", "android", "quantum", "orbit", "alien", "nebula", "planet", "signal", "frontier"]),
    ("horror", ["haunted", "ghost", "curse", "crypt", "fog", "nightmare", "blood", "whisper", "asylum", "ritual", "hollow", "specter"]),
    ("history", ["empire", "war", "revolution", "dynasty", "voyage", "siege", "crown", "republic", "treaty", "legion", "exile", "battle"]),
    ("thriller", ["conspiracy", "agent", "escape", "heist", "chase", "hostage", "spy", "betrayal", "code", "fugitive", "target", "deadline"]),
    ("poetry", ["verse", "river", "moon", "silence", "seasons", "garden", "memory", "light", "ocean", "song", "dawn", "elegy"]),
];

const ADJECTIVES: [&str; 12] = [
    "silver", "broken", "hidden", "last", "crimson", "wild", "distant", "burning", "quiet",
    "golden", "frozen", "lost",
];
const FIRST_NAMES: [&str; 12] = [
    "Mara", "Elias", "Nora", "Tobias", "Lena", "Caspar", "Iris", "Felix", "Greta", "Jonah",
    "Ada", "Silas",
];
const LAST_NAMES: [&str; 12] = [
    "Vell", "Orwin", "Hale", "Marsh", "Quill", "Dunmore", "Ashby", "Crane", "Fenwick", "Locke",
    "Rowe", "Thorne",
];

struct Theme {
    name: String,
    words: Vec<String>,
}

fn themes(n: usize) -> Vec<Theme> {
    (0..n)
        .map(|g| match THEMES.get(g) {
            Some((name, words)) => Theme {
                name: name.to_string(),
                words: words.iter().map(|w| w.to_string()).collect(),
            },
            None => Theme {
                name: format!("genre{g}"),
                words: (0..12).map(|k| format!("motif{g}x{k}")).collect(),
            },
        })
        .collect()
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn synth_item(rng: &mut ChaCha8Rng, id: String, themes: &[Theme]) -> Result<ItemRecord> {
    let primary = rng.gen_range(0..themes.len());
    let mut genres = vec![primary];
    if themes.len() > 1 && rng.gen_bool(0.25) {
        let mut other = rng.gen_range(0..themes.len() - 1);
        if other >= primary {
            other += 1;
        }
        genres.push(other);
    }
    let words = &themes[primary].words;
    let pick = |rng: &mut ChaCha8Rng| words[rng.gen_range(0..words.len())].as_str();
    let adj = ADJECTIVES[rng.gen_range(0..ADJECTIVES.len())];
    let (n1, n2) = (pick(rng), pick(rng));
    let title = match rng.gen_range(0..3) {
        0 => format!("The {} {}", capitalize(adj), capitalize(n1)),
        1 => format!("The {} of the {}", capitalize(n1), capitalize(n2)),
        _ => format!("{} and {}", capitalize(n1), capitalize(n2)),
    };
    let extra: Vec<&str> = (0..3).map(|_| pick(rng)).collect();
    let adj2 = ADJECTIVES[rng.gen_range(0..ADJECTIVES.len())];
    let description = format!(
        "A {adj2} tale of {}, {} and {} in a world of {}.",
        extra[0], extra[1], n1, extra[2]
    );
    let author = format!(
        "{} {}",
        FIRST_NAMES[rng.gen_range(0..FIRST_NAMES.len())],
        LAST_NAMES[rng.gen_range(0..LAST_NAMES.len())]
    );
    ItemRecord::new(
        id,
        title,
        author,
        genres.iter().map(|&g| themes[g].name.clone()),
        &description,
    )
}

/// Generates a genre-structured dataset. Each user prefers one or two
/// genres; items are drawn with probability increasing in affinity and
/// rated 4-5 when affine, 1-3 otherwise.
pub fn synthesize(cfg: &DatasetConfig) -> Result<InteractionDataset> {
    cfg.validate()?;
    let s = cfg
        .synthetic
        .as_ref()
        .ok_or_else(|| Error::Config("synthetic parameters missing".into()))?;
    if s.n_users == 0 || s.n_items == 0 || s.n_genres == 0 {
        return Err(Error::Config("n_users, n_items and n_genres must be positive".into()));
    }
    if s.n_interactions < cfg.min_user_interactions * s.n_users {
        return Err(Error::Config(format!(
            "{} interactions cannot give {} users {} each",
            s.n_interactions, s.n_users, cfg.min_user_interactions
        )));
    }
    let per_user_base = s.n_interactions / s.n_users;
    let remainder = s.n_interactions % s.n_users;
    if per_user_base + usize::from(remainder > 0) > s.n_items {
        return Err(Error::Config(format!(
            "{} interactions over {} users exceed {} distinct items per user",
            s.n_interactions, s.n_users, s.n_items
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let themes = themes(s.n_genres);
    let id_width = |n: usize| n.to_string().len();
    let (iw, uw) = (id_width(s.n_items), id_width(s.n_users));
    let mut items = Catalog::new();
    let mut item_genres: Vec<Vec<usize>> = Vec::with_capacity(s.n_items);
    for k in 0..s.n_items {
        let rec = synth_item(&mut rng, format!("i{:0iw$}", k + 1), &themes)?;
        item_genres.push(
            rec.genres
                .iter()
                .map(|g| themes.iter().position(|t| &t.name == g).unwrap())
                .collect(),
        );
        items.insert(rec.item_id.clone(), rec);
    }
    let item_ids: Vec<String> = items.keys().cloned().collect();

    const SPAN: i64 = 3_000_000;
    const EPOCH: i64 = 1_600_000_000;
    let mut interactions = Vec::with_capacity(s.n_interactions);
    let mut genre_order: Vec<usize> = (0..s.n_genres).collect();
    for u in 0..s.n_users {
        let user_id = format!("u{:0uw$}", u + 1);
        genre_order.shuffle(&mut rng);
        let mut pref = vec![0.05f64; s.n_genres];
        pref[genre_order[0]] = 1.0;
        if s.n_genres > 1 && rng.gen_bool(0.5) {
            pref[genre_order[1]] = 0.6;
        }
        let affinity: Vec<f64> = item_genres
            .iter()
            .map(|gs| gs.iter().map(|&g| pref[g]).fold(0.0, f64::max))
            .collect();
        let mut weights: Vec<f64> = affinity.iter().map(|a| (4.0 * a).exp()).collect();
        let count = per_user_base + usize::from(u < remainder);
        let start = rng.gen_range(0..SPAN / 5);
        let mut stamps: Vec<i64> = (0..count).map(|_| rng.gen_range(start..SPAN)).collect();
        stamps.sort_unstable();
        for ts in stamps {
            let total: f64 = weights.iter().sum();
            let mut x = rng.gen::<f64>() * total;
            let mut pick = weights.len() - 1;
            for (k, w) in weights.iter().enumerate() {
                if *w > 0.0 && x < *w {
                    pick = k;
                    break;
                }
                x -= w;
            }
            while weights[pick] == 0.0 {
                pick -= 1;
            }
            weights[pick] = 0.0;
            let rating = if affinity[pick] >= 0.5 {
                rng.gen_range(4..=5)
            } else {
                rng.gen_range(1..=3)
            };
            interactions.push(Interaction::new(
                user_id.clone(),
                item_ids[pick].clone(),
                rating,
                EPOCH + ts,
            )?);
        }
    }
    assemble(items, interactions, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn it(u: &str, i: &str, r: u8, t: i64) -> Interaction {
        Interaction::new(u, i, r, t).unwrap()
    }

    fn catalog_with(ids: &[(&str, &[&str])]) -> Catalog {
        ids.iter()
            .map(|(id, g)| {
                (
                    id.to_string(),
                    ItemRecord::new(*id, "Storm Castle", "A B", g.iter().copied(), "").unwrap(),
                )
            })
            .collect()
    }

    fn no_synth() -> DatasetConfig {
        DatasetConfig {
            synthetic: None,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn four_interactions_leave_nothing() {
        let items = catalog_with(&[("a", &["g"]), ("b", &["g"]), ("c", &["g"]), ("d", &["g"])]);
        let its = ["a", "b", "c", "d"]
            .iter()
            .enumerate()
            .map(|(k, i)| it("u", i, 5, k as i64))
            .collect();
        assert!(matches!(
            assemble(items, its, &no_synth()),
            Err(Error::EmptyAfterFilter)
        ));
    }

    #[test]
    fn repeated_pair_survives_filters() {
        let items = catalog_with(&[("a", &["g"])]);
        let its = (0..5).map(|t| it("u", "a", 5, t)).collect();
        let ds = assemble(items, its, &no_synth()).unwrap();
        assert!(ds.users.contains_key("u"));
        assert!(ds.items.contains_key("a"));
    }

    #[test]
    fn split_of_ten_keeps_first_eight() {
        let its: Vec<_> = (1..=10).rev().map(|t| it("u", "a", 5, t)).collect();
        let (train, eval) = temporal_split(its, 0.8);
        let mut stamps: Vec<i64> = (1..=10).collect();
        stamps.sort();
        let want: Vec<i64> = stamps[..8].to_vec();
        assert_eq!(train.iter().map(|i| i.timestamp).collect::<Vec<_>>(), want);
        assert_eq!(eval.len(), 2);
    }

    #[test]
    fn boundary_ties_go_to_train() {
        let its: Vec<_> = [1, 2, 3, 4, 5, 6, 7, 8, 8, 9].iter().map(|&t| it("u", "a", 5, t)).collect();
        let (train, eval) = temporal_split(its, 0.8);
        assert_eq!(train.len(), 9);
        assert_eq!(eval[0].timestamp, 9);
    }

    #[test]
    fn profile_without_positives_is_empty() {
        let items = catalog_with(&[("a", &["fantasy"])]);
        let p = derive_profile("u", &[it("u", "a", 3, 1)], &items);
        assert!(p.genre_weights.is_empty());
        assert!(p.preference_keywords.is_empty());
    }

    #[test]
    fn single_five_star_gives_unit_weight() {
        let items = catalog_with(&[("a", &["fantasy"])]);
        let p = derive_profile("u", &[it("u", "a", 5, 1)], &items);
        assert_eq!(p.genre_weights.len(), 1);
        assert_eq!(p.genre_weights["fantasy"], 1.0);
    }

    #[test]
    fn recency_and_rating_weighting() {
        let items = catalog_with(&[("a", &["fantasy"]), ("b", &["fantasy"])]);
        let p = derive_profile("u", &[it("u", "b", 5, 20), it("u", "a", 4, 10)], &items);
        let want = 4.0 / 5.0 * 0.5 + 5.0 / 5.0 * 1.0;
        assert!((p.genre_weights["fantasy"] - want).abs() < 1e-12);
    }

    #[test]
    fn keyword_cap_is_thirty() {
        let ids: Vec<String> = (0..40).map(|k| format!("i{k}")).collect();
        let items: Catalog = ids
            .iter()
            .map(|id| {
                let title = format!("word{id} extra{id}");
                (id.clone(), ItemRecord::new(id, title, "x", ["gothic"], "").unwrap())
            })
            .collect();
        let its: Vec<_> = ids.iter().enumerate().map(|(t, i)| it("u", i, 5, t as i64)).collect();
        let p = derive_profile("u", &its, &items);
        assert_eq!(p.preference_keywords.len(), MAX_PREFERENCE_KEYWORDS);
        // the genre tag appears in every item and ranks first
        assert_eq!(p.preference_keywords[0], "gothic");
    }

    #[test]
    fn bad_train_fraction_rejected() {
        let cfg = DatasetConfig {
            train_fraction: 1.0,
            ..DatasetConfig::default()
        };
        assert!(synthesize(&cfg).is_err());
    }

    #[test]
    fn too_few_interactions_rejected() {
        let cfg = DatasetConfig {
            synthetic: Some(SyntheticConfig {
                n_users: 10,
                n_interactions: 49,
                ..SyntheticConfig::default()
            }),
            ..DatasetConfig::default()
        };
        assert!(matches!(synthesize(&cfg), Err(Error::Config(_))));
    }
}
