//! Implicit-feedback interaction data: loading, sparsity filtering and the
//! timestamp leave-one-out split.

mod snapshot;
pub mod synthetic;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use snapshot::{read_snapshot, write_snapshot, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

/// One binarized user-item interaction. Presence means `r_ui = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub timestamp: i64,
}

/// Delimited text layouts accepted by [`load_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TextFormat {
    #[serde(rename = "tsv", alias = "triples-tsv")]
    TriplesTsv,
    #[serde(rename = "csv", alias = "triples-csv")]
    TriplesCsv,
}

impl TextFormat {
    pub fn delimiter(self) -> char {
        match self {
            TextFormat::TriplesTsv => '\t',
            TextFormat::TriplesCsv => ',',
        }
    }

    /// `.csv` selects comma-separated, everything else tab-separated.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => TextFormat::TriplesCsv,
            _ => TextFormat::TriplesTsv,
        }
    }
}

impl std::str::FromStr for TextFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" | "triples-tsv" => Ok(TextFormat::TriplesTsv),
            "csv" | "triples-csv" => Ok(TextFormat::TriplesCsv),
            other => Err(Error::Config(format!("unknown format `{other}` (expected tsv or csv)"))),
        }
    }
}

/// Sparse binary user x item matrix stored as per-user sorted adjacency.
///
/// Each user's positives `I_u^+` are sorted by item index with a parallel
/// timestamp array. Unrated items `I_u^-` are never materialized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionDataset {
    num_items: usize,
    offsets: Vec<usize>,
    items: Vec<usize>,
    timestamps: Vec<i64>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
}

impl InteractionDataset {
    /// Builds a dataset from dense-indexed interactions. Duplicate
    /// `(user, item)` pairs collapse to one record carrying the max timestamp.
    pub fn from_interactions(
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        interactions: impl IntoIterator<Item = Interaction>,
    ) -> Result<Self> {
        let num_users = user_ids.len();
        let num_items = item_ids.len();
        let mut per_user: Vec<Vec<(usize, i64)>> = vec![Vec::new(); num_users];
        for it in interactions {
            if it.user >= num_users {
                return Err(Error::IndexOutOfRange { what: "user", index: it.user, len: num_users });
            }
            if it.item >= num_items {
                return Err(Error::IndexOutOfRange { what: "item", index: it.item, len: num_items });
            }
            per_user[it.user].push((it.item, it.timestamp));
        }

        let mut offsets = Vec::with_capacity(num_users + 1);
        let mut items = Vec::new();
        let mut timestamps = Vec::new();
        offsets.push(0);
        for mut row in per_user {
            row.sort_unstable();
            let mut k = 0;
            while k < row.len() {
                let item = row[k].0;
                let mut ts = row[k].1;
                while k + 1 < row.len() && row[k + 1].0 == item {
                    k += 1;
                    ts = ts.max(row[k].1);
                }
                items.push(item);
                timestamps.push(ts);
                k += 1;
            }
            offsets.push(items.len());
        }

        Ok(InteractionDataset { num_items, offsets, items, timestamps, user_ids, item_ids })
    }

    pub(crate) fn from_parts(
        num_items: usize,
        offsets: Vec<usize>,
        items: Vec<usize>,
        timestamps: Vec<i64>,
        user_ids: Vec<String>,
        item_ids: Vec<String>,
    ) -> Result<Self> {
        let bad = |m: &str| Err(Error::Format(m.to_string()));
        if offsets.len() != user_ids.len() + 1 || item_ids.len() != num_items {
            return bad("count mismatch");
        }
        if offsets[0] != 0 || *offsets.last().unwrap() != items.len() || items.len() != timestamps.len() {
            return bad("adjacency offsets inconsistent");
        }
        for u in 0..user_ids.len() {
            let (a, b) = (offsets[u], offsets[u + 1]);
            if a > b {
                return bad("offsets not monotone");
            }
            let row = &items[a..b];
            if row.windows(2).any(|w| w[0] >= w[1]) || row.iter().any(|&i| i >= num_items) {
                return bad("adjacency row not strictly sorted or out of range");
            }
        }
        Ok(InteractionDataset { num_items, offsets, items, timestamps, user_ids, item_ids })
    }

    pub fn num_users(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_interactions(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `I_u^+`, sorted ascending.
    pub fn positives(&self, user: usize) -> &[usize] {
        &self.items[self.offsets[user]..self.offsets[user + 1]]
    }

    pub fn timestamps(&self, user: usize) -> &[i64] {
        &self.timestamps[self.offsets[user]..self.offsets[user + 1]]
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.positives(user).binary_search(&item).is_ok()
    }

    /// `|I_u^-|`.
    pub fn num_unrated(&self, user: usize) -> usize {
        self.num_items - self.positives(user).len()
    }

    /// Items not in `I_u^+`, ascending.
    pub fn unrated(&self, user: usize) -> Vec<usize> {
        complement(self.positives(user), self.num_items)
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_items];
        for &i in &self.items {
            deg[i] += 1;
        }
        deg
    }

    pub fn interactions(&self) -> impl Iterator<Item = Interaction> + '_ {
        (0..self.num_users()).flat_map(move |u| {
            self.positives(u)
                .iter()
                .zip(self.timestamps(u))
                .map(move |(&item, &timestamp)| Interaction { user: u, item, timestamp })
        })
    }

    pub(crate) fn raw_parts(&self) -> (&[usize], &[usize], &[i64]) {
        (&self.offsets, &self.items, &self.timestamps)
    }

    /// SHA-256 over counts and adjacency, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.num_users() as u64).to_le_bytes());
        h.update((self.num_items as u64).to_le_bytes());
        for it in self.interactions() {
            h.update((it.user as u64).to_le_bytes());
            h.update((it.item as u64).to_le_bytes());
            h.update(it.timestamp.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Sorted complement of a sorted index list within `0..n`.
pub fn complement(sorted: &[usize], n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n.saturating_sub(sorted.len()));
    let mut k = 0;
    for i in 0..n {
        if k < sorted.len() && sorted[k] == i {
            k += 1;
        } else {
            out.push(i);
        }
    }
    out
}

/// Reads `user<sep>item[<sep>rating]<sep>timestamp` lines.
///
/// Any rating value binarizes to a positive. Blank lines are skipped.
pub fn load_dataset(path: &Path, format: TextFormat) -> Result<InteractionDataset> {
    load_dataset_with(path, format, false)
}

pub fn load_dataset_with(path: &Path, format: TextFormat, has_header: bool) -> Result<InteractionDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(&text, format, has_header, path)
}

pub(crate) fn parse_interactions(
    text: &str,
    format: TextFormat,
    has_header: bool,
    path: &Path,
) -> Result<InteractionDataset> {
    let sep = format.delimiter();
    let mut user_index: HashMap<String, usize> = HashMap::new();
    let mut item_index: HashMap<String, usize> = HashMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut interactions = Vec::new();

    let parse_err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };

    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        if has_header && n == 0 {
            continue;
        }
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(sep).map(str::trim).collect();
        let (user, item, ts) = match fields.as_slice() {
            [u, i, t] => (*u, *i, *t),
            [u, i, r, t] => {
                if r.parse::<f64>().is_err() {
                    return Err(parse_err(lineno, format!("rating `{r}` is not numeric")));
                }
                (*u, *i, *t)
            }
            _ => {
                return Err(parse_err(
                    lineno,
                    format!("expected 3 or 4 `{}`-separated fields, found {}", sep.escape_default(), fields.len()),
                ))
            }
        };
        if user.is_empty() || item.is_empty() {
            return Err(parse_err(lineno, "empty user or item id".into()));
        }
        let timestamp: i64 = ts
            .parse()
            .map_err(|_| parse_err(lineno, format!("timestamp `{ts}` is not an integer")))?;

        let u = *user_index.entry(user.to_string()).or_insert_with(|| {
            user_ids.push(user.to_string());
            user_ids.len() - 1
        });
        let i = *item_index.entry(item.to_string()).or_insert_with(|| {
            item_ids.push(item.to_string());
            item_ids.len() - 1
        });
        interactions.push(Interaction { user: u, item: i, timestamp });
    }

    if interactions.is_empty() {
        return Err(Error::EmptyDataset(format!(": {} has no interactions", path.display())));
    }
    InteractionDataset::from_interactions(user_ids, item_ids, interactions)
}

/// Drops users with fewer than `min_user` positives and items with fewer
/// than `min_item` raters, repeating until neither rule removes anything.
/// Surviving users and items are re-indexed densely in their original order.
pub fn filter_dataset(ds: &InteractionDataset, min_user: usize, min_item: usize) -> Result<InteractionDataset> {
    if min_user == 0 || min_item == 0 {
        return Err(Error::Precondition("filter thresholds must be at least 1".into()));
    }
    let mut keep_user = vec![true; ds.num_users()];
    let mut keep_item = vec![true; ds.num_items()];
    loop {
        let mut user_deg = vec![0usize; ds.num_users()];
        let mut item_deg = vec![0usize; ds.num_items()];
        for it in ds.interactions() {
            if keep_user[it.user] && keep_item[it.item] {
                user_deg[it.user] += 1;
                item_deg[it.item] += 1;
            }
        }
        let mut changed = false;
        for (u, k) in keep_user.iter_mut().enumerate() {
            if *k && user_deg[u] < min_user {
                *k = false;
                changed = true;
            }
        }
        for (i, k) in keep_item.iter_mut().enumerate() {
            if *k && item_deg[i] < min_item {
                *k = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let remap = |keep: &[bool]| {
        let mut next = 0;
        keep.iter()
            .map(|&k| {
                k.then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect::<Vec<Option<usize>>>()
    };
    let user_map = remap(&keep_user);
    let item_map = remap(&keep_item);
    let user_ids = ds.user_ids.iter().zip(&keep_user).filter(|(_, &k)| k).map(|(s, _)| s.clone()).collect::<Vec<_>>();
    let item_ids = ds.item_ids.iter().zip(&keep_item).filter(|(_, &k)| k).map(|(s, _)| s.clone()).collect::<Vec<_>>();

    let kept: Vec<Interaction> = ds
        .interactions()
        .filter_map(|it| {
            Some(Interaction { user: user_map[it.user]?, item: item_map[it.item]?, timestamp: it.timestamp })
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyDataset(format!(
            " after filtering (min_user={min_user}, min_item={min_item})"
        )));
    }
    InteractionDataset::from_interactions(user_ids, item_ids, kept)
}

/// Training interactions plus one held-out test item per user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitDataset {
    pub train: InteractionDataset,
    test: Vec<Option<usize>>,
}

impl SplitDataset {
    pub fn new(train: InteractionDataset, test: Vec<Option<usize>>) -> Result<Self> {
        if test.len() != train.num_users() {
            return Err(Error::Format(format!(
                "test map covers {} users, train has {}",
                test.len(),
                train.num_users()
            )));
        }
        for (u, t) in test.iter().enumerate() {
            if let Some(t) = *t {
                if t >= train.num_items() {
                    return Err(Error::IndexOutOfRange { what: "test item", index: t, len: train.num_items() });
                }
                if train.contains(u, t) {
                    return Err(Error::Precondition(format!("test item {t} of user {u} is also a training positive")));
                }
            }
        }
        Ok(SplitDataset { train, test })
    }

    pub fn test_item(&self, user: usize) -> Option<usize> {
        self.test.get(user).copied().flatten()
    }

    pub fn test_items(&self) -> &[Option<usize>] {
        &self.test
    }

    /// `(user, held-out item)` pairs in user order.
    pub fn test_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.test.iter().enumerate().filter_map(|(u, t)| t.map(|t| (u, t)))
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.train.fingerprint().as_bytes());
        for t in &self.test {
            h.update(t.map_or(u64::MAX, |t| t as u64).to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Holds out each user's latest interaction (ties: largest item index).
pub fn leave_one_out_split(ds: &InteractionDataset) -> Result<SplitDataset> {
    let mut test = Vec::with_capacity(ds.num_users());
    let mut train = Vec::with_capacity(ds.num_interactions());
    for u in 0..ds.num_users() {
        let items = ds.positives(u);
        let ts = ds.timestamps(u);
        if items.len() < 2 {
            return Err(Error::Precondition(format!(
                "user {} ({}) has {} interaction(s); leave-one-out needs at least 2",
                u,
                ds.user_ids[u],
                items.len()
            )));
        }
        let held = (0..items.len()).max_by_key(|&k| (ts[k], items[k])).unwrap();
        test.push(Some(items[held]));
        train.extend(
            (0..items.len())
                .filter(|&k| k != held)
                .map(|k| Interaction { user: u, item: items[k], timestamp: ts[k] }),
        );
    }
    let train = InteractionDataset::from_interactions(ds.user_ids.clone(), ds.item_ids.clone(), train)?;
    SplitDataset::new(train, test)
}
