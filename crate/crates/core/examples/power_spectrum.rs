//! Mean log power spectra of two image sets, their distance, and the
//! exported arrays.
//!
//!     cargo run --example power_spectrum [-- <out_dir>]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segsynth::eval::{export_spectrum, mean_power_spectrum, spectrum_distance};
use segsynth::grid::Grid;
use segsynth::io;
use segsynth::toy::{toy_dataset, ToyOptions};

fn main() -> segsynth::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("segsynth_spectrum"));
    let scenes: Vec<_> = toy_dataset(16, 3, &ToyOptions::default())
        .into_iter()
        .map(|(_, img, _, _)| io::to_rgb_f64(&img))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise: Vec<_> = (0..16)
        .map(|_| Grid::from_fn(64, 64, |_, _| [rng.random::<f64>(); 3]))
        .collect();

    let a = mean_power_spectrum(&scenes, (64, 64))?;
    let b = mean_power_spectrum(&noise, (64, 64))?;
    let (cy, cx) = (32, 32);
    println!("log power at DC: scenes {:.2}, noise {:.2}", a.log_power.get(cx, cy), b.log_power.get(cx, cy));
    println!("log power at (+8, 0): scenes {:.2}, noise {:.2}", a.log_power.get(cx + 8, cy), b.log_power.get(cx + 8, cy));
    println!("spectrum distance {:.4}", spectrum_distance(&a, &b)?);
    export_spectrum(&a, &out, "scenes")?;
    export_spectrum(&b, &out, "noise")?;
    println!("wrote {}", out.display());
    Ok(())
}
