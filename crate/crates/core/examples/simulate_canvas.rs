//! Turns a real training image into the kind of canvas the synthesizer
//! produces: other segments' shapes as stencils, occasional color transfer,
//! and elided boundaries.
//!
//!     cargo run --example simulate_canvas [-- <out_dir>]

use std::path::PathBuf;

use segsynth::bank::{build_bank, ExtractOptions, TrainingPair};
use segsynth::canvas_sim::{simulate_canvas, SimConfig};
use segsynth::compositor::PixelState;
use segsynth::io;
use segsynth::toy::{toy_dataset, ToyOptions};

fn main() -> segsynth::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("segsynth_simulate"));
    let data = toy_dataset(60, 500, &ToyOptions::default());
    let pairs: Vec<TrainingPair<'_>> = data
        .iter()
        .enumerate()
        .map(|(i, (_, image, layout, _))| TrainingPair {
            image,
            layout,
            source_id: i as u32,
        })
        .collect();
    let bank = build_bank(&pairs, ExtractOptions::default())?;

    let cfg = SimConfig {
        color_transfer_fraction: 0.5,
        rng_seed: 21,
        ..SimConfig::default()
    };
    let (stem, image, layout, _) = &data[0];
    let sim = simulate_canvas(image, layout, 0, &bank, &cfg)?;
    println!("{stem}: {} ground-truth segments", sim.stencils.len());
    for (i, (s, t)) in sim.stencils.iter().zip(&sim.transfers).enumerate() {
        println!("  segment {i}: stencil {s:?}, color from {t:?}");
    }
    for s in PixelState::ALL {
        println!("  {s:?}: {}", sim.canvas.count(s));
    }
    sim.canvas.export(&out.join("canvas.png"), &out.join("state.png"))?;
    io::write_rgb(&out.join("image.png"), image)?;
    println!("wrote {}", out.display());
    Ok(())
}
