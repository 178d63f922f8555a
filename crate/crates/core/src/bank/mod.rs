//! The segment memory bank: extraction of connected-component segments from
//! (image, layout) pairs and the class-partitioned collection built from them.

mod store;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoundingBox, Footprint, Grid, Rgb8};
use crate::layout::{label_components, ClassTable, Components, Connectivity, SemanticLayout};

pub use store::{load_bank, save_bank, BANK_VERSION};

/// Default minimum component area kept in a bank.
pub const DEFAULT_MIN_AREA: usize = 16;

/// Geometry shared by bank segments and query regions: the tight mask of one
/// connected component plus the semantic labels of its enlarged context box,
/// all placed in a frame of size `frame = (h, w)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub class_index: u8,
    pub bbox: BoundingBox,
    /// Binary footprint over `bbox`.
    pub mask: Grid<bool>,
    pub area: usize,
    pub context_box: BoundingBox,
    /// Class indices over `context_box`, including the unlabeled sentinel.
    pub context: Grid<u8>,
    /// Number of labeled pixels in `context`.
    pub context_labeled: usize,
    pub unlabeled: u8,
    pub frame: (usize, usize),
}

impl Region {
    /// Builds the region for component `id` of `layout`.
    pub fn from_component(layout: &SemanticLayout, comps: &Components, id: usize) -> Region {
        let comp = &comps.components[id];
        let context_box = context_box(&comp.bbox, layout.dims());
        Region::new(
            comp.class,
            comp.bbox,
            comps.mask(id),
            context_box,
            layout.labels.crop(&context_box),
            layout.table.unlabeled,
            layout.dims(),
        )
    }

    pub fn new(
        class_index: u8,
        bbox: BoundingBox,
        mask: Grid<bool>,
        context_box: BoundingBox,
        context: Grid<u8>,
        unlabeled: u8,
        frame: (usize, usize),
    ) -> Region {
        let area = mask.as_slice().iter().filter(|&&m| m).count();
        let context_labeled = context.as_slice().iter().filter(|&&l| l != unlabeled).count();
        Region {
            class_index,
            bbox,
            mask,
            area,
            context_box,
            context,
            context_labeled,
            unlabeled,
            frame,
        }
    }

    /// Context label at frame pixel `(x, y)`, or the sentinel outside the context box.
    #[inline]
    pub fn context_at(&self, x: usize, y: usize) -> u8 {
        if self.context_box.contains_point(x, y) {
            *self.context.get(x - self.context_box.x0, y - self.context_box.y0)
        } else {
            self.unlabeled
        }
    }

    /// Mask centroid in frame coordinates (pixel centers at integer positions).
    pub fn centroid(&self) -> (f64, f64) {
        let (mut sx, mut sy) = (0.0, 0.0);
        for (x, y, &m) in self.mask.iter_xy() {
            if m {
                sx += (self.bbox.x0 + x) as f64;
                sy += (self.bbox.y0 + y) as f64;
            }
        }
        let n = self.area.max(1) as f64;
        (sx / n, sy / n)
    }

    /// Nearest-neighbor rescale of mask and context into a frame of another size.
    /// Target pixel `t` samples source pixel `floor((t + 0.5) * src / dst)`.
    pub fn rescaled_to(&self, frame: (usize, usize)) -> Region {
        if frame == self.frame {
            return self.clone();
        }
        let (sh, sw) = self.frame;
        let (th, tw) = frame;
        let src_x = |t: usize| ((t as f64 + 0.5) * sw as f64 / tw as f64).floor() as usize;
        let src_y = |t: usize| ((t as f64 + 0.5) * sh as f64 / th as f64).floor() as usize;
        // Target span whose samples land inside [lo, hi).
        let span = |lo: usize, hi: usize, n: usize, f: &dyn Fn(usize) -> usize| {
            let mut first = None;
            let mut last = 0;
            for t in 0..n {
                let s = f(t);
                if s >= lo && s < hi {
                    first.get_or_insert(t);
                    last = t + 1;
                }
            }
            first.map(|f| (f, last - f))
        };
        let cbox = match (
            span(self.context_box.x0, self.context_box.x1(), tw, &src_x),
            span(self.context_box.y0, self.context_box.y1(), th, &src_y),
        ) {
            (Some((x0, w)), Some((y0, h))) => BoundingBox::new(x0, y0, w, h),
            _ => BoundingBox::new(0, 0, 0, 0),
        };
        let context = Grid::from_fn(cbox.w, cbox.h, |x, y| {
            self.context_at(src_x(cbox.x0 + x), src_y(cbox.y0 + y))
        });
        let full = Grid::from_fn(cbox.w, cbox.h, |x, y| {
            self.covers(src_x(cbox.x0 + x), src_y(cbox.y0 + y))
        });
        let (bbox, mask) = match crate::grid::tight_bbox(&full) {
            Some(b) => {
                let b = BoundingBox::new(cbox.x0 + b.x0, cbox.y0 + b.y0, b.w, b.h);
                let m = Grid::from_fn(b.w, b.h, |x, y| {
                    *full.get(b.x0 - cbox.x0 + x, b.y0 - cbox.y0 + y)
                });
                (b, m)
            }
            None => (BoundingBox::new(0, 0, 0, 0), Grid::new(0, 0, false)),
        };
        Region::new(self.class_index, bbox, mask, cbox, context, self.unlabeled, frame)
    }
}

impl Footprint for Region {
    fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }
    fn mask(&self) -> &Grid<bool> {
        &self.mask
    }
    fn area(&self) -> usize {
        self.area
    }
}

/// One bank entry: a region of a training image with its color patch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentRecord {
    pub id: u32,
    pub source_id: u32,
    pub region: Region,
    /// RGB over `region.bbox`, zero outside the mask.
    pub color: Grid<Rgb8>,
}

impl SegmentRecord {
    pub fn class_index(&self) -> u8 {
        self.region.class_index
    }

    pub fn bbox(&self) -> BoundingBox {
        self.region.bbox
    }
}

/// Context box: the bbox enlarged to `ceil(1.25 w) × ceil(1.25 h)` about its
/// center with floored offsets, shifted back inside the frame where it would
/// stick out, and clipped to the frame when larger than it.
pub fn context_box(bbox: &BoundingBox, frame: (usize, usize)) -> BoundingBox {
    let (fh, fw) = frame;
    let axis = |lo: usize, len: usize, limit: usize| -> (usize, usize) {
        let grown = (1.25 * len as f64).ceil() as i64;
        let center = lo as f64 + len as f64 / 2.0;
        let start = (center - grown as f64 / 2.0).floor() as i64;
        let ext = grown.min(limit as i64);
        let start = start.clamp(0, limit as i64 - ext);
        (start as usize, ext as usize)
    };
    let (x0, w) = axis(bbox.x0, bbox.w, fw);
    let (y0, h) = axis(bbox.y0, bbox.h, fh);
    BoundingBox::new(x0, y0, w, h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractOptions {
    pub min_area: usize,
    pub connectivity: Connectivity,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            min_area: DEFAULT_MIN_AREA,
            connectivity: Connectivity::Four,
        }
    }
}

/// Decomposes a layout into query regions (no color).
pub fn layout_regions(layout: &SemanticLayout, opts: &ExtractOptions) -> Vec<Region> {
    let comps = label_components(&layout.labels, layout.table.unlabeled, opts.connectivity);
    (0..comps.components.len())
        .filter(|&i| comps.components[i].area >= opts.min_area)
        .map(|i| Region::from_component(layout, &comps, i))
        .collect()
}

/// One record per connected component of area at least `min_area`, in raster
/// order of each component's first pixel. Ids are local, starting at zero.
pub fn extract_segments(
    image: &Grid<Rgb8>,
    layout: &SemanticLayout,
    source_id: u32,
    opts: &ExtractOptions,
) -> Result<Vec<SegmentRecord>> {
    if image.dims() != layout.dims() {
        return Err(Error::DimensionMismatch {
            what: "image vs layout",
            expected: layout.dims(),
            found: image.dims(),
        });
    }
    let records = layout_regions(layout, opts)
        .into_iter()
        .enumerate()
        .map(|(i, region)| {
            let b = region.bbox;
            let color = Grid::from_fn(b.w, b.h, |x, y| {
                if *region.mask.get(x, y) {
                    *image.get(b.x0 + x, b.y0 + y)
                } else {
                    [0, 0, 0]
                }
            });
            SegmentRecord {
                id: i as u32,
                source_id,
                region,
                color,
            }
        })
        .collect();
    Ok(records)
}

/// One training pair fed to [`build_bank`].
pub struct TrainingPair<'a> {
    pub image: &'a Grid<Rgb8>,
    pub layout: &'a SemanticLayout,
    pub source_id: u32,
}

/// The class-partitioned collection of extracted segments.
///
/// Ids equal positions in `segments`; `per_class[c]` lists the ids of class `c`
/// in ascending order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemoryBank {
    pub table: ClassTable,
    pub options: ExtractOptions,
    segments: Vec<SegmentRecord>,
    per_class: Vec<Vec<u32>>,
}

impl MemoryBank {
    pub fn empty(table: ClassTable, options: ExtractOptions) -> Self {
        let per_class = vec![Vec::new(); table.len()];
        Self {
            table,
            options,
            segments: Vec::new(),
            per_class,
        }
    }

    /// Assembles a bank from records whose ids already equal their positions.
    pub fn from_segments(
        table: ClassTable,
        options: ExtractOptions,
        segments: Vec<SegmentRecord>,
    ) -> Result<Self> {
        let mut per_class = vec![Vec::new(); table.len()];
        for (i, s) in segments.iter().enumerate() {
            if s.id as usize != i {
                return Err(Error::CorruptManifest(format!(
                    "segment at position {i} carries id {}",
                    s.id
                )));
            }
            let c = s.class_index() as usize;
            if c >= table.len() {
                return Err(Error::CorruptManifest(format!(
                    "segment {} has class {c} outside the class table",
                    s.id
                )));
            }
            per_class[c].push(s.id);
        }
        Ok(Self {
            table,
            options,
            segments,
            per_class,
        })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segments(&self) -> &[SegmentRecord] {
        &self.segments
    }

    pub fn get(&self, id: u32) -> Option<&SegmentRecord> {
        self.segments.get(id as usize)
    }

    pub fn class_ids(&self, class: u8) -> &[u32] {
        self.per_class.get(class as usize).map_or(&[], Vec::as_slice)
    }

    /// Segment count per class.
    pub fn stats(&self) -> Vec<usize> {
        self.per_class.iter().map(Vec::len).collect()
    }
}

/// Extracts every pair (in parallel) and assigns ids ordered by source id,
/// then scan order within each image.
pub fn build_bank(dataset: &[TrainingPair<'_>], options: ExtractOptions) -> Result<MemoryBank> {
    let Some(first) = dataset.first() else {
        return Err(Error::EmptyInput("build_bank needs a class table; dataset"));
    };
    let table = first.layout.table.clone();
    build_bank_with_table(table, dataset, options)
}

/// Like [`build_bank`] but with an explicit class table, so an empty dataset yields
/// an empty bank.
pub fn build_bank_with_table(
    table: ClassTable,
    dataset: &[TrainingPair<'_>],
    options: ExtractOptions,
) -> Result<MemoryBank> {
    for pair in dataset {
        if pair.layout.table != table {
            return Err(Error::ClassTableMismatch(format!(
                "source {} disagrees with the bank class table",
                pair.source_id
            )));
        }
    }
    let mut per_image: Vec<(u32, Vec<SegmentRecord>)> = dataset
        .par_iter()
        .map(|p| extract_segments(p.image, p.layout, p.source_id, &options).map(|s| (p.source_id, s)))
        .collect::<Result<_>>()?;
    per_image.sort_by_key(|(src, _)| *src);
    let mut segments = Vec::new();
    for (_, recs) in per_image {
        for mut r in recs {
            r.id = segments.len() as u32;
            segments.push(r);
        }
    }
    MemoryBank::from_segments(table, options, segments)
}
