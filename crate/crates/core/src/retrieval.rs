//! Exact retrieval of the most compatible bank segment for a query region.
//!
//! The score of a candidate is `mask IoU + context IoU`. Candidates are
//! restricted to the query's class, ranked by a cheap upper bound on the
//! score, and scored exactly until the bound drops below the best score seen,
//! so the result always equals the exhaustive argmax (ties to the lowest id).

use std::borrow::Cow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bank::{MemoryBank, Region, SegmentRecord};
use crate::grid::intersection_count;

/// A query is a layout region: same geometry as a bank segment, no color.
pub type Query = Region;

pub const DEFAULT_TOP_K: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredMatch {
    pub segment_id: u32,
    pub mask_iou: f64,
    pub context_iou: f64,
    pub score: f64,
}

#[inline]
fn ratio(inter: usize, a: usize, b: usize) -> f64 {
    let union = a + b - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn mask_intersection(a: &Region, b: &Region) -> usize {
    intersection_count(a, b)
}

fn context_intersection(a: &Region, b: &Region) -> usize {
    let (ab, bb) = (&a.context_box, &b.context_box);
    let Some(ov) = ab.intersect(bb) else {
        return 0;
    };
    let mut n = 0;
    for y in ov.y0..ov.y1() {
        let ra = &a.context.as_slice()[(y - ab.y0) * ab.w + ov.x0 - ab.x0..][..ov.w];
        let rb = &b.context.as_slice()[(y - bb.y0) * bb.w + ov.x0 - bb.x0..][..ov.w];
        n += ra
            .iter()
            .zip(rb)
            .filter(|(&p, &q)| p == q && p != a.unlabeled)
            .count();
    }
    n
}

fn aligned<'a>(a: &Region, b: &'a Region) -> Cow<'a, Region> {
    if a.frame == b.frame {
        Cow::Borrowed(b)
    } else {
        Cow::Owned(b.rescaled_to(a.frame))
    }
}

/// Footprint IoU in a common frame; `b` is rescaled to `a`'s frame when they differ.
pub fn mask_iou(a: &Region, b: &Region) -> f64 {
    let b = aligned(a, b);
    ratio(mask_intersection(a, &b), a.area, b.area)
}

/// IoU of the one-hot context indicators: a `(pixel, class)` pair is set when the
/// pixel lies in the region's context box and carries that class.
pub fn context_iou(a: &Region, b: &Region) -> f64 {
    let b = aligned(a, b);
    ratio(context_intersection(a, &b), a.context_labeled, b.context_labeled)
}

/// Upper bound of `inter / (a + b - inter)` given `inter <= min(a, b, overlap)`.
#[inline]
fn iou_bound(a: usize, b: usize, overlap: usize) -> f64 {
    ratio(a.min(b).min(overlap), a, b)
}

/// Bank geometry prepared for queries in one frame size.
pub struct BankIndex<'a> {
    bank: &'a MemoryBank,
    frame: (usize, usize),
    regions: Vec<Cow<'a, Region>>,
}

impl<'a> BankIndex<'a> {
    /// Rescales every segment whose source frame differs from `frame`.
    pub fn new(bank: &'a MemoryBank, frame: (usize, usize)) -> Self {
        let regions = bank
            .segments()
            .iter()
            .map(|s| {
                if s.region.frame == frame {
                    Cow::Borrowed(&s.region)
                } else {
                    Cow::Owned(s.region.rescaled_to(frame))
                }
            })
            .collect();
        Self {
            bank,
            frame,
            regions,
        }
    }

    pub fn bank(&self) -> &'a MemoryBank {
        self.bank
    }

    pub fn frame(&self) -> (usize, usize) {
        self.frame
    }

    pub fn segment(&self, id: u32) -> &'a SegmentRecord {
        &self.bank.segments()[id as usize]
    }

    /// Exact score of one candidate against a query in this index's frame.
    pub fn score(&self, query: &Query, id: u32) -> ScoredMatch {
        let r = &self.regions[id as usize];
        let m = ratio(mask_intersection(query, r), query.area, r.area);
        let c = ratio(context_intersection(query, r), query.context_labeled, r.context_labeled);
        ScoredMatch {
            segment_id: id,
            mask_iou: m,
            context_iou: c,
            score: m + c,
        }
    }

    fn candidates(&self, query: &Query, exclude_source: Option<u32>) -> Vec<(f64, u32)> {
        let mut cands: Vec<(f64, u32)> = self
            .bank
            .class_ids(query.class_index)
            .iter()
            .filter(|&&id| exclude_source.is_none_or(|s| self.segment(id).source_id != s))
            .map(|&id| {
                let r = &self.regions[id as usize];
                let ub = iou_bound(query.area, r.area, query.bbox.overlap_area(&r.bbox))
                    + iou_bound(
                        query.context_labeled,
                        r.context_labeled,
                        query.context_box.overlap_area(&r.context_box),
                    );
                (ub, id)
            })
            .collect();
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        cands
    }

    fn check_frame(&self, query: &Query) {
        assert_eq!(
            query.frame, self.frame,
            "query frame differs from the index frame; build a BankIndex for this frame"
        );
    }
}

/// `true` when `a` ranks strictly ahead of `b`: higher score, then lower id.
#[inline]
fn ranks_before(a: &ScoredMatch, b: &ScoredMatch) -> bool {
    a.score > b.score || (a.score == b.score && a.segment_id < b.segment_id)
}

/// The same-class candidate maximizing the score, ties to the lowest id.
/// `None` when no candidate of the class survives `exclude_source`.
pub fn retrieve(query: &Query, index: &BankIndex<'_>, exclude_source: Option<u32>) -> Option<ScoredMatch> {
    index.check_frame(query);
    let mut best: Option<ScoredMatch> = None;
    for (ub, id) in index.candidates(query, exclude_source) {
        // Computed scores never exceed their computed bound, so this prune is exact.
        if best.is_some_and(|b| ub < b.score) {
            break;
        }
        let m = index.score(query, id);
        if best.is_none_or(|b| ranks_before(&m, &b)) {
            best = Some(m);
        }
    }
    best
}

/// The `k` best candidates in rank order.
pub fn top_k(query: &Query, index: &BankIndex<'_>, k: usize, exclude_source: Option<u32>) -> Vec<ScoredMatch> {
    index.check_frame(query);
    let k = k.max(1);
    let mut top: Vec<ScoredMatch> = Vec::with_capacity(k + 1);
    for (ub, id) in index.candidates(query, exclude_source) {
        if top.len() == k && ub < top[k - 1].score {
            break;
        }
        let m = index.score(query, id);
        let pos = top.partition_point(|t| ranks_before(t, &m));
        if pos < k {
            top.insert(pos, m);
            top.truncate(k);
        }
    }
    top
}

/// Uniform choice among the `k` best candidates, deterministic in `seed`.
pub fn retrieve_topk(
    query: &Query,
    index: &BankIndex<'_>,
    k: usize,
    seed: u64,
    exclude_source: Option<u32>,
) -> Option<ScoredMatch> {
    let top = top_k(query, index, k, exclude_source);
    if top.is_empty() {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Some(top[rng.random_range(0..top.len())])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::{build_bank, layout_regions, ExtractOptions, TrainingPair};
    use crate::grid::{BoundingBox, Grid};
    use crate::layout::{ClassTable, SemanticLayout, UNLABELED};

    fn square_region(x0: usize, y0: usize, w: usize, h: usize, frame: (usize, usize)) -> Region {
        let mask = Grid::new(w, h, true);
        let bbox = BoundingBox::new(x0, y0, w, h);
        let cbox = crate::bank::context_box(&bbox, frame);
        let ctx = Grid::new(cbox.w, cbox.h, 0);
        Region::new(0, bbox, mask, cbox, ctx, UNLABELED, frame)
    }

    #[test]
    fn mask_iou_examples() {
        let a = square_region(0, 0, 10, 10, (40, 40));
        let b = square_region(20, 20, 10, 10, (40, 40));
        let c = square_region(5, 0, 10, 10, (40, 40));
        assert_eq!(mask_iou(&a, &a), 1.0);
        assert_eq!(mask_iou(&a, &b), 0.0);
        assert_eq!(mask_iou(&a, &c), 50.0 / 150.0);
    }

    #[test]
    fn context_iou_examples() {
        let frame = (10, 10);
        let bbox = BoundingBox::new(3, 3, 2, 2);
        let cbox = BoundingBox::new(2, 2, 4, 4);
        let mk = |ctx: Grid<u8>| Region::new(0, bbox, Grid::new(2, 2, true), cbox, ctx, UNLABELED, frame);
        let a = mk(Grid::new(4, 4, 0));
        let disagree = mk(Grid::new(4, 4, 1));
        // Top half agrees (class 0), bottom half differs.
        let half = mk(Grid::from_fn(4, 4, |_, y| if y < 2 { 0 } else { 1 }));
        assert_eq!(context_iou(&a, &a), 1.0);
        assert_eq!(context_iou(&a, &disagree), 0.0);
        assert_eq!(context_iou(&a, &half), 8.0 / 24.0);
    }

    #[test]
    fn empty_union_is_zero() {
        let frame = (4, 4);
        let bbox = BoundingBox::new(0, 0, 1, 1);
        let r = Region::new(0, bbox, Grid::new(1, 1, true), bbox, Grid::new(1, 1, UNLABELED), UNLABELED, frame);
        assert_eq!(context_iou(&r, &r), 0.0);
    }

    fn bank_of(layouts: &[Grid<u8>]) -> MemoryBank {
        let table = ClassTable::new(["bg", "obj"]).unwrap();
        let ls: Vec<_> = layouts
            .iter()
            .map(|g| SemanticLayout::new(table.clone(), g.clone()).unwrap())
            .collect();
        let imgs: Vec<_> = layouts.iter().map(|g| Grid::new(g.width(), g.height(), [9, 9, 9])).collect();
        let pairs: Vec<_> = ls
            .iter()
            .zip(&imgs)
            .enumerate()
            .map(|(i, (l, im))| TrainingPair { image: im, layout: l, source_id: i as u32 })
            .collect();
        build_bank(&pairs, ExtractOptions { min_area: 1, ..Default::default() }).unwrap()
    }

    fn blob(x0: usize, y0: usize, s: usize) -> Grid<u8> {
        Grid::from_fn(20, 20, |x, y| u8::from(x >= x0 && x < x0 + s && y >= y0 && y < y0 + s))
    }

    #[test]
    fn self_retrieval_scores_two() {
        let bank = bank_of(&[blob(2, 2, 5), blob(8, 8, 6), blob(3, 10, 4)]);
        let index = BankIndex::new(&bank, (20, 20));
        for seg in bank.segments() {
            let m = retrieve(&seg.region, &index, None).unwrap();
            assert_eq!(m.segment_id, seg.id);
            assert_eq!(m.score, 2.0);
        }
    }

    #[test]
    fn single_candidate_is_returned_and_exclusion_empties() {
        let bank = bank_of(&[blob(2, 2, 5)]);
        let index = BankIndex::new(&bank, (20, 20));
        let table = ClassTable::new(["bg", "obj"]).unwrap();
        let q_layout = SemanticLayout::new(table, blob(14, 14, 3)).unwrap();
        let q = layout_regions(&q_layout, &ExtractOptions { min_area: 1, ..Default::default() });
        let obj = q.iter().find(|r| r.class_index == 1).unwrap();
        let only = bank.class_ids(1)[0];
        assert_eq!(retrieve(obj, &index, None).unwrap().segment_id, only);
        assert!(retrieve(obj, &index, Some(0)).is_none());
    }

    #[test]
    fn topk_with_k1_equals_retrieve_and_is_seeded() {
        let bank = bank_of(&[blob(2, 2, 5), blob(3, 3, 5), blob(9, 9, 5), blob(1, 12, 7)]);
        let index = BankIndex::new(&bank, (20, 20));
        let q = &bank.segments()[bank.class_ids(1)[1] as usize].region;
        for seed in 0..20 {
            assert_eq!(retrieve_topk(q, &index, 1, seed, None), retrieve(q, &index, None));
            assert_eq!(retrieve_topk(q, &index, 3, seed, None), retrieve_topk(q, &index, 3, seed, None));
        }
    }

    #[test]
    fn rescaled_candidates_are_scored_in_query_frame() {
        let table = ClassTable::new(["bg", "obj"]).unwrap();
        let small = SemanticLayout::new(table.clone(), Grid::from_fn(10, 10, |x, y| u8::from(x < 5 && y < 5))).unwrap();
        let big = SemanticLayout::new(table, Grid::from_fn(20, 20, |x, y| u8::from(x < 10 && y < 10))).unwrap();
        let opts = ExtractOptions { min_area: 1, ..Default::default() };
        let a = layout_regions(&big, &opts).into_iter().find(|r| r.class_index == 1).unwrap();
        let b = layout_regions(&small, &opts).into_iter().find(|r| r.class_index == 1).unwrap();
        assert_eq!(mask_iou(&a, &b), 1.0);
        // 7x7 context box doubles to 14x14 against the query's 13x13; labels agree everywhere.
        assert_eq!(context_iou(&a, &b), 169.0 / 196.0);
    }
}
