//! Simulated training canvases: a ground-truth image is degraded the way
//! test-time canvases are, by stenciling each segment with a retrieved
//! segment's shape, transferring color onto a random subset, and eliding
//! boundaries.

mod color;

use std::path::{Path, PathBuf};

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use color::{
    lab_to_rgb, masked_lab, reinhard_transfer, rgb_to_lab, transfer_lab, LabStats, LMS_FLOOR, LMS_TO_RGB,
    RGB_TO_LMS,
};

use crate::alignment::{fit_alignment, warp, AlignOptions, PlacedSegment};
use crate::bank::{extract_segments, ExtractOptions, MemoryBank};
use crate::compositor::{compose_in_frame, elide_boundaries, Canvas, ElisionOptions, OrderingTable, Placement};
use crate::error::{Error, Result};
use crate::grid::{Footprint, Grid, Rgb8};
use crate::io::{self, Dataset};
use crate::layout::SemanticLayout;
use crate::retrieval::{retrieve, BankIndex};

pub const DEFAULT_TRANSFER_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Per-segment probability of color transfer.
    pub color_transfer_fraction: f64,
    pub band: f64,
    pub interior_rate: f64,
    pub rng_seed: u64,
    /// Retrieve stencils and transfer references from other images only.
    pub exclude_same_source: bool,
    /// Classes without an exterior band.
    pub exterior_exclude: Vec<u8>,
    pub align: AlignOptions,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            color_transfer_fraction: DEFAULT_TRANSFER_FRACTION,
            band: crate::compositor::DEFAULT_BAND,
            interior_rate: crate::compositor::DEFAULT_INTERIOR_RATE,
            rng_seed: 0,
            exclude_same_source: true,
            exterior_exclude: Vec::new(),
            align: AlignOptions::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.color_transfer_fraction) {
            return Err(Error::InvalidConfig(format!(
                "color_transfer_fraction {} outside [0, 1]",
                self.color_transfer_fraction
            )));
        }
        self.elision(0).validate()?;
        self.align.validate()
    }

    fn elision(&self, seed: u64) -> ElisionOptions {
        ElisionOptions {
            band: self.band,
            interior_rate: self.interior_rate,
            exterior_exclude: self.exterior_exclude.clone(),
            seed,
        }
    }
}

/// Restricts `seg` to the pixels `stencil` also covers.
pub fn stencil(seg: &PlacedSegment, stencil: &(impl Footprint + ?Sized)) -> PlacedSegment {
    let b = seg.bbox;
    let mask = Grid::from_fn(b.w, b.h, |x, y| *seg.mask.get(x, y) && stencil.covers(b.x0 + x, b.y0 + y));
    PlacedSegment {
        mask,
        ..seg.clone()
    }
    .tightened()
}

/// Output of [`simulate_canvas`].
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedCanvas {
    pub canvas: Canvas,
    /// Non-content pixels of `canvas`.
    pub missing: Grid<bool>,
    /// Bank id of the stencil used per ground-truth segment; `None` when the
    /// segment passed through unstenciled.
    pub stencils: Vec<Option<u32>>,
    /// Bank id of the color reference per ground-truth segment, when transferred.
    pub transfers: Vec<Option<u32>>,
}

/// Builds C′ from a ground-truth pair. `source_id` identifies the pair in the
/// bank for same-source exclusion.
pub fn simulate_canvas(
    image: &Grid<Rgb8>,
    layout: &SemanticLayout,
    source_id: u32,
    bank: &MemoryBank,
    cfg: &SimConfig,
) -> Result<SimulatedCanvas> {
    let index = BankIndex::new(bank, layout.dims());
    simulate_canvas_indexed(image, layout, source_id, &index, cfg)
}

/// [`simulate_canvas`] with a prebuilt index for the layout's frame.
pub fn simulate_canvas_indexed(
    image: &Grid<Rgb8>,
    layout: &SemanticLayout,
    source_id: u32,
    index: &BankIndex<'_>,
    cfg: &SimConfig,
) -> Result<SimulatedCanvas> {
    cfg.validate()?;
    let bank = index.bank();
    if bank.table != layout.table {
        return Err(Error::ClassTableMismatch("layout vs memory bank".into()));
    }
    let frame = layout.dims();
    // Every pixel belongs to some segment, however small.
    let opts = ExtractOptions {
        min_area: 1,
        connectivity: bank.options.connectivity,
    };
    let segments = extract_segments(image, layout, source_id, &opts)?;
    let exclude = cfg.exclude_same_source.then_some(source_id);

    let mut transfer_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    transfer_rng.set_stream(1);
    let mut placements = Vec::with_capacity(segments.len());
    let mut stencils = Vec::with_capacity(segments.len());
    let mut transfers = Vec::with_capacity(segments.len());
    for (j, rec) in segments.iter().enumerate() {
        let pj = PlacedSegment::from_record(rec);
        let (mut out, used) = match retrieve(&rec.region, index, exclude) {
            Some(m) => {
                let stencil_seg = PlacedSegment::from_record(index.segment(m.segment_id));
                let t = fit_alignment(&stencil_seg, &pj, &cfg.align)?;
                let aligned = warp(&stencil_seg, &t, frame)?;
                (stencil(&pj, &aligned), Some(m.segment_id))
            }
            None => {
                warn!(
                    "segment {j} ({}): no stencil candidate, passing through unstenciled",
                    bank.table.name(rec.class_index())
                );
                (pj, None)
            }
        };
        stencils.push(used);

        let selected = transfer_rng.random::<f64>() < cfg.color_transfer_fraction;
        let mut reference = None;
        if selected {
            let pool: Vec<u32> = bank
                .class_ids(rec.class_index())
                .iter()
                .copied()
                .filter(|&id| exclude != Some(bank.segments()[id as usize].source_id))
                .collect();
            if !pool.is_empty() {
                let id = pool[transfer_rng.random_range(0..pool.len())];
                if !out.is_empty() {
                    let r = PlacedSegment::from_record(index.segment(id));
                    out = reinhard_transfer(&out, &r)?;
                }
                reference = Some(id);
            }
        }
        transfers.push(reference);
        placements.push(Placement {
            region: j as u32,
            segment: Some(out),
        });
    }

    let identity: Vec<u8> = (0..layout.table.len() as u8).collect();
    let ordering = OrderingTable::from_fallback(&layout.table, identity)?;
    let composed = compose_in_frame(frame, &placements, &ordering);
    let mut elision_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    elision_rng.set_stream(2);
    let canvas = elide_boundaries(composed, &cfg.elision(elision_rng.random()));
    let missing = canvas.non_content_mask();
    Ok(SimulatedCanvas {
        canvas,
        missing,
        stencils,
        transfers,
    })
}

/// Seed for sample `index` of a run seeded with `base`.
#[inline]
pub fn sample_seed(base: u64, index: usize) -> u64 {
    base ^ index as u64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportRow {
    pub stem: String,
    pub source_id: u32,
    pub seed: u64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Paths relative to the export directory.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub files: Vec<String>,
    #[serde(default)]
    pub transferred_segments: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub base_seed: u64,
    pub samples: Vec<ExportRow>,
}

impl ExportManifest {
    pub fn failures(&self) -> usize {
        self.samples.iter().filter(|r| r.status != "ok").count()
    }
}

pub const EXPORT_DIRS: [&str; 4] = ["canvas", "state", "layout", "image"];

fn export_one(dataset: &Dataset, i: usize, index: &BankIndex<'_>, cfg: &SimConfig, out: &Path) -> Result<(Vec<String>, usize)> {
    let item = &dataset.items[i];
    let layout = dataset.load_layout(item)?;
    let image = dataset.load_image(item)?;
    let sim = simulate_canvas_indexed(&image, &layout, item.source_id, index, cfg)?;
    let rel: Vec<PathBuf> = EXPORT_DIRS.iter().map(|d| Path::new(d).join(format!("{}.png", item.stem))).collect();
    sim.canvas.export(&out.join(&rel[0]), &out.join(&rel[1]))?;
    io::write_layout(&out.join(&rel[2]), &layout)?;
    io::write_rgb(&out.join(&rel[3]), &image)?;
    let n = sim.transfers.iter().flatten().count();
    Ok((rel.iter().map(|p| p.to_string_lossy().replace('\\', "/")).collect(), n))
}

/// Simulates every dataset sample in parallel and writes
/// `{canvas,state,layout,image}/<stem>.png` plus `manifest.json`. Failures
/// are recorded per row and do not stop the run.
pub fn export_training_pairs(dataset: &Dataset, bank: &MemoryBank, cfg: &SimConfig, out_dir: &Path) -> Result<ExportManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let frames: std::collections::BTreeSet<(usize, usize)> = dataset
        .items
        .iter()
        .filter_map(|it| io::read_indexed(&it.layout).ok().map(|g| g.dims()))
        .collect();
    let indices: std::collections::BTreeMap<(usize, usize), BankIndex<'_>> =
        frames.into_iter().map(|f| (f, BankIndex::new(bank, f))).collect();
    let samples = (0..dataset.items.len())
        .into_par_iter()
        .map(|i| {
            let item = &dataset.items[i];
            let seed = sample_seed(cfg.rng_seed, i);
            let c = SimConfig { rng_seed: seed, ..cfg.clone() };
            let res = io::read_indexed(&item.layout).and_then(|g| {
                let index = &indices[&g.dims()];
                export_one(dataset, i, index, &c, out_dir)
            });
            let mut row = ExportRow {
                stem: item.stem.clone(),
                source_id: item.source_id,
                seed,
                status: "ok".into(),
                error: None,
                files: Vec::new(),
                transferred_segments: 0,
            };
            match res {
                Ok((files, n)) => {
                    row.files = files;
                    row.transferred_segments = n;
                }
                Err(e) => {
                    warn!("{}: {e}", item.stem);
                    row.status = "error".into();
                    row.error = Some(e.to_string());
                }
            }
            row
        })
        .collect();
    let manifest = ExportManifest {
        base_seed: cfg.rng_seed,
        samples,
    };
    io::write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
