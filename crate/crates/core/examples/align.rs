//! Fits a segment onto a target region by matching moments, then warps it.
//!
//!     cargo run --example align

use segsynth::alignment::{fit_alignment, warp, AlignOptions, PlacedSegment};
use segsynth::grid::{footprint_iou, BoundingBox, Grid};

fn disk(frame: usize, cx: f64, cy: f64, rx: f64, ry: f64, id: u32) -> PlacedSegment {
    let mask = Grid::from_fn(frame, frame, |x, y| {
        let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
        dx * dx + dy * dy <= 1.0
    });
    let color = mask.map(|&m| if m { [0.8, 0.3, 0.2] } else { [0.0; 3] });
    PlacedSegment {
        segment_id: id,
        class_index: 0,
        frame: (frame, frame),
        bbox: BoundingBox { x0: 0, y0: 0, w: frame, h: frame },
        mask,
        color,
    }
    .tightened()
}

fn main() -> segsynth::Result<()> {
    let src = disk(96, 24.0, 30.0, 10.0, 6.0, 1);
    let dst = disk(96, 60.0, 55.0, 22.0, 14.0, 2);
    println!("IoU before alignment {:.3}", footprint_iou(&src, &dst));

    let t = fit_alignment(&src, &dst, &AlignOptions::default())?;
    let moved = warp(&src, &t, (96, 96))?;
    println!("transform linear {:?} translation {:?}", t.linear(), t.translation_part());
    println!("IoU after alignment  {:.3} ({} px -> {} px)", footprint_iou(&moved, &dst), src.mask.as_slice().iter().filter(|&&m| m).count(), moved.mask.as_slice().iter().filter(|&&m| m).count());
    Ok(())
}
