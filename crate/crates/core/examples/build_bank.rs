//! Writes a small generated dataset to disk, extracts its segment bank and
//! reloads it.
//!
//!     cargo run --example build_bank [-- <out_dir>]

use std::path::PathBuf;

use segsynth::bank::{build_bank_with_table, load_bank, save_bank, ExtractOptions, TrainingPair};
use segsynth::io::Dataset;
use segsynth::toy::{write_toy_dataset, ToyOptions};

fn main() -> segsynth::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("segsynth_build_bank"));
    let data_dir = out.join("dataset");
    write_toy_dataset(&data_dir, 40, 7, &ToyOptions::default())?;

    let ds = Dataset::open(&data_dir)?;
    let mut loaded = Vec::new();
    for it in &ds.items {
        loaded.push((ds.load_image(it)?, ds.load_layout(it)?, it.source_id));
    }
    let pairs: Vec<TrainingPair<'_>> = loaded
        .iter()
        .map(|(image, layout, source_id)| TrainingPair {
            image,
            layout,
            source_id: *source_id,
        })
        .collect();
    let bank = build_bank_with_table(ds.table.clone(), &pairs, ExtractOptions::default())?;
    save_bank(&bank, &out.join("bank"))?;

    let back = load_bank(&out.join("bank"))?;
    assert_eq!(back.len(), bank.len());
    println!("{} segments from {} images in {}", bank.len(), ds.items.len(), out.display());
    for (name, n) in bank.table.classes.iter().zip(bank.stats()) {
        println!("  {name:<8} {n:>4}");
    }
    Ok(())
}
