//! On-disk bank format.
//!
//! ```text
//! bank/
//!   manifest.json                versioned, human-readable index
//!   segments/000000_color.png    RGB patch over the bbox
//!   segments/000000_mask.png     gray, 0 or 255
//!   segments/000000_context.png  gray class indices over the context box
//! ```
//!
//! Every asset carries a SHA-256 of its file bytes in the manifest.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExtractOptions, MemoryBank, Region, SegmentRecord};
use crate::error::{Error, Result};
use crate::grid::{BoundingBox, Grid};
use crate::io::{decode_u8, encode_gray, encode_rgb, write_bytes, write_json};
use crate::layout::ClassTable;

pub const BANK_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    classes: ClassTable,
    options: ExtractOptions,
    segments: Vec<SegmentEntry>,
}

#[derive(Serialize, Deserialize)]
struct SegmentEntry {
    id: u32,
    class_index: u8,
    source_id: u32,
    bbox: BoundingBox,
    context_box: BoundingBox,
    /// `[h, w]` of the source frame.
    frame: [usize; 2],
    area: usize,
    color: Asset,
    mask: Asset,
    context: Asset,
}

#[derive(Serialize, Deserialize)]
struct Asset {
    file: String,
    sha256: String,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn save_bank(bank: &MemoryBank, dir: &Path) -> Result<()> {
    let seg_dir = dir.join("segments");
    fs::create_dir_all(&seg_dir).map_err(|e| Error::io(&seg_dir, e))?;
    let entries = bank
        .segments()
        .par_iter()
        .map(|s| {
            let write = |suffix: &str, bytes: Vec<u8>| -> Result<Asset> {
                let file = format!("segments/{:06}_{suffix}.png", s.id);
                write_bytes(&dir.join(&file), &bytes)?;
                Ok(Asset {
                    file,
                    sha256: digest(&bytes),
                })
            };
            let r = &s.region;
            Ok(SegmentEntry {
                id: s.id,
                class_index: r.class_index,
                source_id: s.source_id,
                bbox: r.bbox,
                context_box: r.context_box,
                frame: [r.frame.0, r.frame.1],
                area: r.area,
                color: write("color", encode_rgb(&s.color))?,
                mask: write("mask", encode_gray(&r.mask.map(|&m| if m { 255 } else { 0 })))?,
                context: write("context", encode_gray(&r.context))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        version: BANK_VERSION,
        classes: bank.table.clone(),
        options: bank.options,
        segments: entries,
    };
    write_json(&dir.join(MANIFEST), &manifest)
}

pub fn load_bank(dir: &Path) -> Result<MemoryBank> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    // Probe the version before the full schema so old or future manifests get a clear diagnostic.
    let probe: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::CorruptManifest(e.to_string()))?;
    let version = probe
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::CorruptManifest("missing `version`".into()))?;
    if version != BANK_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: version as u32,
            expected: BANK_VERSION,
        });
    }
    let manifest: Manifest = serde_json::from_value(probe).map_err(|e| Error::CorruptManifest(e.to_string()))?;
    manifest
        .classes
        .validate()
        .map_err(|e| Error::CorruptManifest(e.to_string()))?;
    let unlabeled = manifest.classes.unlabeled;
    let segments = manifest
        .segments
        .par_iter()
        .map(|e| load_segment(dir, e, unlabeled))
        .collect::<Result<Vec<_>>>()?;
    MemoryBank::from_segments(manifest.classes, manifest.options, segments)
}

fn load_segment(dir: &Path, e: &SegmentEntry, unlabeled: u8) -> Result<SegmentRecord> {
    let read = |asset: &Asset, channels: usize, expect: &BoundingBox| -> Result<Vec<u8>> {
        let path = dir.join(&asset.file);
        let bytes = fs::read(&path).map_err(|err| match err.kind() {
            std::io::ErrorKind::NotFound => Error::MissingAsset {
                id: e.id,
                path: path.clone(),
            },
            _ => Error::io(&path, err),
        })?;
        if digest(&bytes) != asset.sha256 {
            return Err(Error::ChecksumMismatch {
                id: e.id,
                file: asset.file.clone(),
            });
        }
        let (w, h, data) = decode_u8(&bytes, channels)
            .map_err(|m| Error::CorruptManifest(format!("segment {}: {}: {m}", e.id, asset.file)))?;
        if (w, h) != (expect.w, expect.h) {
            return Err(Error::CorruptManifest(format!(
                "segment {}: {} is {w}x{h}, manifest box is {}x{}",
                e.id, asset.file, expect.w, expect.h
            )));
        }
        Ok(data)
    };
    let color_raw = read(&e.color, 3, &e.bbox)?;
    let mask_raw = read(&e.mask, 1, &e.bbox)?;
    let ctx_raw = read(&e.context, 1, &e.context_box)?;
    let color = Grid::from_vec(
        e.bbox.w,
        e.bbox.h,
        color_raw.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
    );
    let mask = Grid::from_vec(e.bbox.w, e.bbox.h, mask_raw.into_iter().map(|v| v != 0).collect());
    let context = Grid::from_vec(e.context_box.w, e.context_box.h, ctx_raw);
    let region = Region::new(
        e.class_index,
        e.bbox,
        mask,
        e.context_box,
        context,
        unlabeled,
        (e.frame[0], e.frame[1]),
    );
    if region.area != e.area {
        return Err(Error::CorruptManifest(format!(
            "segment {}: mask area {} disagrees with manifest {}",
            e.id, region.area, e.area
        )));
    }
    Ok(SegmentRecord {
        id: e.id,
        source_id: e.source_id,
        region,
        color,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::{build_bank, build_bank_with_table, TrainingPair};
    use crate::layout::SemanticLayout;

    fn three_segment_bank() -> MemoryBank {
        let table = ClassTable::new(["a", "b"]).unwrap();
        let labels = Grid::from_fn(12, 10, |x, y| if x < 6 { 0 } else if y < 5 { 1 } else { 0 });
        let layout = SemanticLayout::new(table, labels).unwrap();
        let image = Grid::from_fn(12, 10, |x, y| [x as u8 * 20, y as u8 * 25, 99]);
        let pairs = [TrainingPair { image: &image, layout: &layout, source_id: 3 }];
        let bank = build_bank(&pairs, ExtractOptions { min_area: 1, ..Default::default() }).unwrap();
        assert_eq!(bank.len(), 2);
        // A second source adds a third segment.
        let labels2 = Grid::new(12, 10, 1);
        let layout2 = SemanticLayout::new(bank.table.clone(), labels2).unwrap();
        let pairs = [
            TrainingPair { image: &image, layout: &layout, source_id: 3 },
            TrainingPair { image: &image, layout: &layout2, source_id: 4 },
        ];
        build_bank(&pairs, ExtractOptions { min_area: 1, ..Default::default() }).unwrap()
    }

    #[test]
    fn round_trips_empty_and_small_banks() {
        let dir = tempfile::tempdir().unwrap();
        let empty = build_bank_with_table(ClassTable::new(["x"]).unwrap(), &[], ExtractOptions::default()).unwrap();
        save_bank(&empty, dir.path()).unwrap();
        assert_eq!(load_bank(dir.path()).unwrap(), empty);

        let dir = tempfile::tempdir().unwrap();
        let bank = three_segment_bank();
        assert_eq!(bank.len(), 3);
        save_bank(&bank, dir.path()).unwrap();
        assert_eq!(load_bank(dir.path()).unwrap(), bank);
    }

    #[test]
    fn distinct_diagnostics_for_damage() {
        let dir = tempfile::tempdir().unwrap();
        let bank = three_segment_bank();
        save_bank(&bank, dir.path()).unwrap();

        fs::remove_file(dir.path().join("segments/000001_mask.png")).unwrap();
        match load_bank(dir.path()) {
            Err(Error::MissingAsset { id, .. }) => assert_eq!(id, 1),
            other => panic!("expected missing asset, got {other:?}"),
        }

        save_bank(&bank, dir.path()).unwrap();
        let color = dir.path().join("segments/000002_color.png");
        let other = encode_rgb(&Grid::new(12, 10, [1, 2, 3]));
        fs::write(&color, other).unwrap();
        assert!(matches!(load_bank(dir.path()), Err(Error::ChecksumMismatch { id: 2, .. })));

        save_bank(&bank, dir.path()).unwrap();
        let manifest = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&manifest).unwrap();
        fs::write(&manifest, text.replacen("\"version\": 1", "\"version\": 7", 1)).unwrap();
        assert!(matches!(
            load_bank(dir.path()),
            Err(Error::VersionMismatch { found: 7, expected: 1 })
        ));

        fs::write(&manifest, "{ not json").unwrap();
        assert!(matches!(load_bank(dir.path()), Err(Error::CorruptManifest(_))));
    }
}
