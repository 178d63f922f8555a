//! End-to-end synthesis for one layout: decompose, retrieve, align,
//! composite, elide, finish.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{fit_alignment, warp_segment, AffineTransform2D, AlignOptions};
use crate::bank::layout_regions;
use crate::compositor::{compose, elide_boundaries, Canvas, ElisionOptions, OrderingTable, Placement};
use crate::error::{Error, Result};
use crate::finisher::{finish, Finisher, FinisherInput};
use crate::grid::{BoundingBox, Grid, Rgb};
use crate::layout::SemanticLayout;
use crate::retrieval::{retrieve, retrieve_topk, BankIndex};

/// SplitMix64 finalizer applied over a sequence of words; used to derive
/// independent per-task seeds from one base seed.
pub fn mix_seed(base: u64, words: &[u64]) -> u64 {
    let mut z = base;
    for &w in words {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(w);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOptions {
    /// 1 for argmax retrieval, otherwise a uniform pick among the top k.
    pub k: usize,
    pub exclude_source: Option<u32>,
    pub align: AlignOptions,
    /// Band, rate and exterior exclusions; the seed is derived per run.
    pub elision: ElisionOptions,
    pub max_unlabeled_fraction: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            k: 1,
            exclude_source: None,
            align: AlignOptions::default(),
            elision: ElisionOptions::default(),
            max_unlabeled_fraction: 0.25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionStatus {
    Matched,
    NoMatch,
    /// The aligned segment fell entirely outside the frame.
    EmptyAfterWarp,
}

/// Everything needed to replay one region's retrieval decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub region: u32,
    pub class: String,
    pub bbox: BoundingBox,
    pub area: usize,
    pub status: RegionStatus,
    pub retrieval_seed: u64,
    pub segment_id: Option<u32>,
    pub source_id: Option<u32>,
    pub score: Option<f64>,
    pub mask_iou: Option<f64>,
    pub context_iou: Option<f64>,
    pub transform: Option<AffineTransform2D>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub k: usize,
    pub elision_seed: u64,
    pub regions: Vec<RegionRecord>,
}

#[derive(Clone, Debug)]
pub struct Synthesis {
    pub canvas: Canvas,
    pub image: Grid<Rgb>,
    pub provenance: Provenance,
}

/// Rejects layouts with too many unlabeled pixels.
pub fn check_dense(layout: &SemanticLayout, limit: f64) -> Result<()> {
    let f = layout.unlabeled_fraction();
    if f > limit {
        return Err(Error::CoarseLayout {
            unlabeled_fraction: f,
            limit,
        });
    }
    Ok(())
}

/// Canvas and provenance for `layout`, before finishing.
pub fn build_canvas(
    layout: &SemanticLayout,
    index: &BankIndex<'_>,
    ordering: &OrderingTable,
    opts: &SynthOptions,
    seed: u64,
) -> Result<(Canvas, Provenance)> {
    let bank = index.bank();
    if bank.table.classes != layout.table.classes {
        return Err(Error::ClassTableMismatch("layout vs memory bank".into()));
    }
    if index.frame() != layout.dims() {
        return Err(Error::DimensionMismatch {
            what: "bank index frame",
            expected: layout.dims(),
            found: index.frame(),
        });
    }
    check_dense(layout, opts.max_unlabeled_fraction)?;
    opts.align.validate()?;
    opts.elision.validate()?;
    let regions = layout_regions(layout, &bank.options);
    let frame = layout.dims();
    let results: Vec<(Placement, RegionRecord)> = regions
        .par_iter()
        .enumerate()
        .map(|(i, q)| -> Result<(Placement, RegionRecord)> {
            let rseed = mix_seed(seed, &[i as u64]);
            let m = if opts.k <= 1 {
                retrieve(q, index, opts.exclude_source)
            } else {
                retrieve_topk(q, index, opts.k, rseed, opts.exclude_source)
            };
            let mut rec = RegionRecord {
                region: i as u32,
                class: layout.table.name(q.class_index).to_string(),
                bbox: q.bbox,
                area: q.area,
                status: RegionStatus::NoMatch,
                retrieval_seed: rseed,
                segment_id: None,
                source_id: None,
                score: None,
                mask_iou: None,
                context_iou: None,
                transform: None,
            };
            let Some(m) = m else {
                return Ok((Placement { region: i as u32, segment: None }, rec));
            };
            let seg = index.segment(m.segment_id);
            let src = crate::alignment::PlacedSegment::from_record(seg);
            let t = fit_alignment(&src, q, &opts.align)?;
            let placed = warp_segment(seg, &t, frame)?;
            rec.status = if placed.is_empty() {
                RegionStatus::EmptyAfterWarp
            } else {
                RegionStatus::Matched
            };
            rec.segment_id = Some(m.segment_id);
            rec.source_id = Some(seg.source_id);
            rec.score = Some(m.score);
            rec.mask_iou = Some(m.mask_iou);
            rec.context_iou = Some(m.context_iou);
            rec.transform = Some(t);
            Ok((Placement { region: i as u32, segment: Some(placed) }, rec))
        })
        .collect::<Result<_>>()?;
    let (placements, records): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let canvas = compose(layout, &placements, ordering);
    let elision_seed = mix_seed(seed, &[u64::MAX]);
    let canvas = elide_boundaries(canvas, &ElisionOptions { seed: elision_seed, ..opts.elision.clone() });
    Ok((
        canvas,
        Provenance {
            seed,
            k: opts.k,
            elision_seed,
            regions: records,
        },
    ))
}

/// Full synthesis of one layout with the given finisher backend.
pub fn synthesize(
    layout: &SemanticLayout,
    index: &BankIndex<'_>,
    ordering: &OrderingTable,
    opts: &SynthOptions,
    finisher: &dyn Finisher,
    seed: u64,
) -> Result<Synthesis> {
    let (canvas, provenance) = build_canvas(layout, index, ordering, opts, seed)?;
    let input = FinisherInput::new(canvas, layout.clone())?;
    let image = finish(&input, finisher)?;
    Ok(Synthesis {
        canvas: input.canvas,
        image,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_by_word() {
        assert_ne!(mix_seed(1, &[0]), mix_seed(1, &[1]));
        assert_ne!(mix_seed(1, &[0, 1]), mix_seed(1, &[1, 0]));
        assert_eq!(mix_seed(5, &[2, 3]), mix_seed(5, &[2, 3]));
    }

    #[test]
    fn coarse_layout_rejected() {
        use crate::layout::{ClassTable, UNLABELED};
        let t = ClassTable::new(["a"]).unwrap();
        let l = SemanticLayout::new(t, Grid::from_fn(4, 4, |x, _| if x < 2 { 0 } else { UNLABELED })).unwrap();
        assert!(matches!(check_dense(&l, 0.25), Err(Error::CoarseLayout { .. })));
        assert!(check_dense(&l, 0.5).is_ok());
    }
}
