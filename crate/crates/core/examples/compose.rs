//! Orders overlapping segments by class, composites them and elides their
//! boundaries. Writes the canvas and its state map.
//!
//!     cargo run --example compose [-- <out_dir>]

use std::path::PathBuf;

use segsynth::alignment::PlacedSegment;
use segsynth::compositor::{compose, elide_boundaries, ElisionOptions, OrderingTable, PixelState, Placement};
use segsynth::grid::{BoundingBox, Grid};
use segsynth::layout::{ClassTable, SemanticLayout};

fn rect(id: u32, class: u8, frame: (usize, usize), b: BoundingBox, rgb: [f64; 3]) -> PlacedSegment {
    PlacedSegment {
        segment_id: id,
        class_index: class,
        frame,
        bbox: b,
        mask: Grid::new(b.w, b.h, true),
        color: Grid::new(b.w, b.h, rgb),
    }
}

fn main() -> segsynth::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("segsynth_compose"));
    let table = ClassTable::new(["sky", "building", "car"])?;
    let (h, w) = (120, 160);
    let labels = Grid::from_fn(w, h, |x, y| match (x, y) {
        (50..=109, 40..=119) if !(70..=129).contains(&x) || y < 90 => 1,
        (70..=129, 90..=119) => 2,
        _ => 0,
    });
    let layout = SemanticLayout::new(table.clone(), labels)?;

    // The sky segment is larger than its region and spills under the building.
    let placements = vec![
        Placement {
            region: 0,
            segment: Some(rect(10, 0, (h, w), BoundingBox { x0: 0, y0: 0, w, h: 100 }, [0.5, 0.7, 0.95])),
        },
        Placement {
            region: 1,
            segment: Some(rect(11, 1, (h, w), BoundingBox { x0: 48, y0: 38, w: 64, h: 82 }, [0.55, 0.5, 0.45])),
        },
        Placement {
            region: 2,
            segment: Some(rect(12, 2, (h, w), BoundingBox { x0: 72, y0: 92, w: 56, h: 26 }, [0.8, 0.1, 0.1])),
        },
    ];
    let ordering = OrderingTable::from_fallback(&table, vec![0, 1, 2])?;
    let canvas = compose(&layout, &placements, &ordering);
    let paint: Vec<u32> = canvas.layers.iter().map(|l| l.segment_id).collect();
    println!("paint order (back to front): {paint:?}");

    let elided = elide_boundaries(
        canvas,
        &ElisionOptions {
            seed: 3,
            ..ElisionOptions::default()
        },
    );
    for s in PixelState::ALL {
        println!("  {s:?}: {}", elided.count(s));
    }
    elided.export(&out.join("canvas.png"), &out.join("state.png"))?;
    println!("wrote {}", out.display());
    Ok(())
}
