//! Fills the missing pixels of a canvas with the harmonic baseline and
//! compares the result with the original image.
//!
//!     cargo run --example finish

use segsynth::alignment::PlacedSegment;
use segsynth::bank::{extract_segments, ExtractOptions};
use segsynth::compositor::{compose, elide_boundaries, ElisionOptions, OrderingTable, Placement};
use segsynth::finisher::{finish, harmonic_fill, BaselineFinisher, FinisherInput};
use segsynth::io;
use segsynth::toy::{toy_sample, ToyOptions};

fn main() -> segsynth::Result<()> {
    let (image, layout, _) = toy_sample(42, &ToyOptions { size: 96, ..ToyOptions::default() });
    let truth = io::to_rgb_f64(&image);

    // Composite the image's own segments, then elide their boundaries.
    let segs = extract_segments(&image, &layout, 0, &ExtractOptions { min_area: 1, ..ExtractOptions::default() })?;
    let placements: Vec<Placement> = segs
        .iter()
        .enumerate()
        .map(|(i, s)| Placement {
            region: i as u32,
            segment: Some(PlacedSegment::from_record(s)),
        })
        .collect();
    let ordering = OrderingTable::from_fallback(&layout.table, (0..layout.table.len() as u8).collect())?;
    let canvas = elide_boundaries(compose(&layout, &placements, &ordering), &ElisionOptions::default());
    let input = FinisherInput::new(canvas, layout)?;
    let holes = input.missing.as_slice().iter().filter(|&&m| m).count();

    let report = harmonic_fill(&input.canvas.rgb, &input.missing, 1e-4, 10_000)?;
    println!("{holes} missing pixels, {} sweeps, converged {}", report.iterations, report.converged);

    let finished = finish(&input, &BaselineFinisher::default())?;
    let err: f64 = finished
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .zip(input.missing.as_slice())
        .filter(|(_, &m)| m)
        .map(|((a, b), _)| (0..3).map(|k| (a[k] - b[k]).abs()).sum::<f64>() / 3.0)
        .sum::<f64>()
        / holes.max(1) as f64;
    println!("mean absolute error per filled pixel {err:.4}");
    Ok(())
}
