//! Class-pair front/back relation learned from the relative depth of adjacent
//! training segments.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::layout::{label_components, ClassTable, Components, Connectivity, SemanticLayout};

/// Two segments are adjacent when their masks come within this many pixels.
pub const ADJACENCY_RADIUS: usize = 2;

/// Per-pixel depth with a validity mask (`None` = invalid).
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    depth: Grid<Option<f64>>,
}

impl DepthMap {
    pub fn new(depth: Grid<Option<f64>>) -> Result<Self> {
        if let Some(bad) = depth.as_slice().iter().flatten().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::InvalidConfig(format!("depth value {bad} is not finite and non-negative")));
        }
        Ok(Self { depth })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.depth.dims()
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> Option<f64> {
        *self.depth.get(x, y)
    }

    pub fn grid(&self) -> &Grid<Option<f64>> {
        &self.depth
    }
}

/// Votes for one unordered class pair `{a, b}` with `a < b`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PairVotes {
    pub a_front: u32,
    pub b_front: u32,
}

/// Antisymmetric class-pair ordering plus a back-to-front fallback order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderingTable {
    classes: Vec<String>,
    /// Class indices, back to front.
    fallback: Vec<u8>,
    /// `rank[c]` is the position of class `c` in `fallback`.
    rank: Vec<usize>,
    votes: BTreeMap<(u8, u8), PairVotes>,
}

impl OrderingTable {
    /// A table with no votes; every pair follows `fallback`.
    pub fn from_fallback(table: &ClassTable, fallback: Vec<u8>) -> Result<Self> {
        Self::with_votes(table, fallback, BTreeMap::new())
    }

    pub fn with_votes(table: &ClassTable, fallback: Vec<u8>, votes: BTreeMap<(u8, u8), PairVotes>) -> Result<Self> {
        let n = table.len();
        let mut rank = vec![usize::MAX; n];
        for (i, &c) in fallback.iter().enumerate() {
            let slot = rank
                .get_mut(c as usize)
                .ok_or_else(|| Error::InvalidConfig(format!("fallback names class index {c}, table has {n}")))?;
            if *slot != usize::MAX {
                return Err(Error::InvalidConfig(format!("fallback lists `{}` twice", table.name(c))));
            }
            *slot = i;
        }
        if let Some(c) = rank.iter().position(|&r| r == usize::MAX) {
            return Err(Error::InvalidConfig(format!(
                "fallback order omits class `{}`",
                table.classes[c]
            )));
        }
        if let Some(&(a, b)) = votes.keys().find(|(a, b)| a >= b || *b as usize >= n) {
            return Err(Error::InvalidConfig(format!("invalid vote key ({a}, {b})")));
        }
        Ok(Self {
            classes: table.classes.clone(),
            fallback,
            rank,
            votes,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    /// Back-to-front class order.
    pub fn fallback(&self) -> &[u8] {
        &self.fallback
    }

    /// Position of `class` in the fallback order (0 = furthest back).
    #[inline]
    pub fn rank(&self, class: u8) -> usize {
        self.rank[class as usize]
    }

    pub fn votes(&self, p: u8, q: u8) -> PairVotes {
        let (a, b) = if p < q { (p, q) } else { (q, p) };
        let v = self.votes.get(&(a, b)).copied().unwrap_or_default();
        if p < q {
            v
        } else {
            PairVotes {
                a_front: v.b_front,
                b_front: v.a_front,
            }
        }
    }

    /// Whether the pair was decided by votes rather than the fallback.
    pub fn decided_by_votes(&self, p: u8, q: u8) -> bool {
        let v = self.votes(p, q);
        v.a_front != v.b_front
    }

    /// The class in front for the pair `{p, q}`.
    pub fn front(&self, p: u8, q: u8) -> u8 {
        if p == q {
            return p;
        }
        let v = self.votes(p, q);
        match v.a_front.cmp(&v.b_front) {
            std::cmp::Ordering::Greater => p,
            std::cmp::Ordering::Less => q,
            std::cmp::Ordering::Equal => {
                if self.rank(p) > self.rank(q) {
                    p
                } else {
                    q
                }
            }
        }
    }

    pub fn to_file(&self) -> OrderingFile {
        let name = |c: u8| self.classes[c as usize].clone();
        let n = self.classes.len() as u8;
        let mut pairs = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let v = self.votes(a, b);
                pairs.push(PairEntry {
                    a: name(a),
                    b: name(b),
                    votes_a: v.a_front,
                    votes_b: v.b_front,
                    front: name(self.front(a, b)),
                    decided_by: if v.a_front != v.b_front { "votes" } else { "fallback" }.to_string(),
                });
            }
        }
        OrderingFile {
            classes: self.classes.clone(),
            fallback: self.fallback.iter().map(|&c| name(c)).collect(),
            pairs,
        }
    }

    /// Rebuilds a table from its persisted form. The `front` fields are
    /// checked against the votes and fallback.
    pub fn from_file(file: &OrderingFile) -> Result<Self> {
        let table = ClassTable::new(file.classes.iter().cloned())?;
        let idx = |name: &str| {
            table
                .index_of(name)
                .ok_or_else(|| Error::InvalidConfig(format!("ordering names unknown class `{name}`")))
        };
        let fallback = file.fallback.iter().map(|n| idx(n)).collect::<Result<Vec<_>>>()?;
        let mut votes = BTreeMap::new();
        for p in &file.pairs {
            let (a, b) = (idx(&p.a)?, idx(&p.b)?);
            let (key, v) = if a < b {
                ((a, b), PairVotes { a_front: p.votes_a, b_front: p.votes_b })
            } else {
                ((b, a), PairVotes { a_front: p.votes_b, b_front: p.votes_a })
            };
            if v != PairVotes::default() {
                votes.insert(key, v);
            }
        }
        let out = Self::with_votes(&table, fallback, votes)?;
        for p in &file.pairs {
            let front = out.front(idx(&p.a)?, idx(&p.b)?);
            if out.classes[front as usize] != p.front {
                return Err(Error::InvalidConfig(format!(
                    "pair ({}, {}) records `{}` in front but its votes give `{}`",
                    p.a, p.b, p.front, out.classes[front as usize]
                )));
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::io::write_json(path, &self.to_file())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_file(&crate::io::read_json(path)?)
    }
}

/// Human-readable persisted form of an [`OrderingTable`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingFile {
    pub classes: Vec<String>,
    /// Class names, back to front.
    pub fallback: Vec<String>,
    pub pairs: Vec<PairEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub a: String,
    pub b: String,
    pub votes_a: u32,
    pub votes_b: u32,
    pub front: String,
    pub decided_by: String,
}

/// Back-to-front presets for common label sets. Listed names that exist in
/// the table come first in the given order; remaining classes follow in
/// index order.
pub fn fallback_preset(name: &str, table: &ClassTable) -> Option<Vec<u8>> {
    let listed: &[&str] = match name {
        "cityscapes" => &[
            "sky", "building", "wall", "vegetation", "terrain", "road", "sidewalk", "fence", "pole",
            "traffic sign", "traffic light", "train", "bus", "truck", "car", "motorcycle", "bicycle",
            "rider", "person",
        ],
        "ade20k" => &[
            "sky", "ceiling", "mountain", "hill", "wall", "building", "skyscraper", "house", "tree",
            "water", "sea", "river", "lake", "field", "grass", "earth", "sand", "floor", "road",
            "sidewalk", "path", "rug", "fence", "railing", "plant", "flower", "rock", "car", "bus",
            "truck", "boat", "person",
        ],
        "nyu40" => &[
            "wall", "ceiling", "floor", "window", "door", "floor mat", "blinds", "curtain",
            "picture", "whiteboard", "mirror", "shelves", "bookshelf", "cabinet", "counter",
            "dresser", "refridgerator", "television", "desk", "table", "bed", "sofa", "chair",
            "night stand", "toilet", "sink", "bathtub", "lamp", "pillow", "clothes", "books",
            "paper", "towel", "box", "bag", "person",
        ],
        _ => return None,
    };
    Some(order_with_listed(table, listed))
}

/// Listed names first (those present in `table`), then the rest in index order.
pub fn order_with_listed(table: &ClassTable, listed: &[&str]) -> Vec<u8> {
    let mut out: Vec<u8> = listed.iter().filter_map(|n| table.index_of(n)).collect();
    out.dedup();
    for c in 0..table.len() as u8 {
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

#[derive(Clone, Debug, Default)]
struct Tally {
    votes: BTreeMap<(u8, u8), PairVotes>,
    depth_sum: Vec<f64>,
    depth_count: Vec<u64>,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        for (k, v) in other.votes {
            let e = self.votes.entry(k).or_default();
            e.a_front += v.a_front;
            e.b_front += v.b_front;
        }
        if self.depth_sum.is_empty() {
            return Tally { votes: self.votes, ..other };
        }
        for (s, o) in self.depth_sum.iter_mut().zip(&other.depth_sum) {
            *s += o;
        }
        for (s, o) in self.depth_count.iter_mut().zip(&other.depth_count) {
            *s += o;
        }
        self
    }
}

/// Pairs of distinct component ids whose masks come within `radius` pixels.
pub fn adjacent_components(comps: &Components, radius: usize) -> Vec<(u32, u32)> {
    let ids = &comps.ids;
    let r = radius as i64;
    let offsets: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| (dx, dy) != (0, 0) && dx * dx + dy * dy <= r * r)
        .collect();
    let mut pairs = std::collections::BTreeSet::new();
    for (x, y, &a) in ids.iter_xy() {
        if a == Components::NONE {
            continue;
        }
        for &(dx, dy) in &offsets {
            if let Some(&b) = ids.get_signed(x as i64 + dx, y as i64 + dy) {
                if b != Components::NONE && b > a {
                    pairs.insert((a, b));
                }
            }
        }
    }
    pairs.into_iter().collect()
}

fn tally(layout: &SemanticLayout, depth: &DepthMap, n_classes: usize, connectivity: Connectivity) -> Tally {
    let comps = label_components(&layout.labels, layout.table.unlabeled, connectivity);
    let mut sum = vec![0.0; comps.components.len()];
    let mut cnt = vec![0u64; comps.components.len()];
    let mut t = Tally {
        votes: BTreeMap::new(),
        depth_sum: vec![0.0; n_classes],
        depth_count: vec![0; n_classes],
    };
    for (x, y, &id) in comps.ids.iter_xy() {
        if id == Components::NONE {
            continue;
        }
        if let Some(d) = depth.at(x, y) {
            sum[id as usize] += d;
            cnt[id as usize] += 1;
            let c = comps.components[id as usize].class as usize;
            t.depth_sum[c] += d;
            t.depth_count[c] += 1;
        }
    }
    let mean = |i: u32| (cnt[i as usize] > 0).then(|| sum[i as usize] / cnt[i as usize] as f64);
    for (i, j) in adjacent_components(&comps, ADJACENCY_RADIUS) {
        let (ci, cj) = (comps.components[i as usize].class, comps.components[j as usize].class);
        if ci == cj {
            continue;
        }
        let (Some(di), Some(dj)) = (mean(i), mean(j)) else {
            continue;
        };
        let front = match di.partial_cmp(&dj) {
            Some(std::cmp::Ordering::Less) => ci,
            Some(std::cmp::Ordering::Greater) => cj,
            _ => continue,
        };
        let (a, b) = (ci.min(cj), ci.max(cj));
        let e = t.votes.entry((a, b)).or_default();
        if front == a {
            e.a_front += 1;
        } else {
            e.b_front += 1;
        }
    }
    t
}

/// Builds the ordering table from depth-annotated training layouts.
///
/// Each adjacent pair of segments with different classes and valid depth
/// casts one vote for the nearer segment's class. Without an explicit
/// `fallback`, classes are ordered far to near by mean depth over the whole
/// set; classes never observed with depth go to the back in index order.
pub fn derive_ordering(
    pairs: &[(&SemanticLayout, &DepthMap)],
    table: &ClassTable,
    fallback: Option<Vec<u8>>,
    connectivity: Connectivity,
) -> Result<OrderingTable> {
    for (layout, depth) in pairs {
        if layout.table != *table {
            return Err(Error::ClassTableMismatch("training layout vs ordering table".into()));
        }
        if layout.dims() != depth.dims() {
            return Err(Error::DimensionMismatch {
                what: "depth map",
                expected: layout.dims(),
                found: depth.dims(),
            });
        }
    }
    let n = table.len();
    let total = pairs
        .par_iter()
        .map(|(l, d)| tally(l, d, n, connectivity))
        .reduce(Tally::default, Tally::merge);
    let fallback = match fallback {
        Some(f) => f,
        None => {
            if total.depth_count.iter().all(|&c| c == 0) {
                return Err(Error::MissingFallback);
            }
            let mut observed: Vec<(u8, f64)> = (0..n)
                .filter(|&c| total.depth_count[c] > 0)
                .map(|c| (c as u8, total.depth_sum[c] / total.depth_count[c] as f64))
                .collect();
            observed.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut order: Vec<u8> = (0..n as u8).filter(|&c| total.depth_count[c as usize] == 0).collect();
            order.extend(observed.into_iter().map(|(c, _)| c));
            order
        }
    };
    OrderingTable::with_votes(table, fallback, total.votes)
}
