//! End to end: bank and ordering from training scenes, then synthesis of
//! held-out layouts, scored by how well their layout can be read back.
//!
//!     cargo run --release --example synth_pipeline [-- <out_dir>]

use std::path::PathBuf;

use segsynth::bank::{build_bank, ExtractOptions, TrainingPair};
use segsynth::compositor::{derive_ordering, DepthMap};
use segsynth::eval::{layout_agreement, AgreementReport};
use segsynth::finisher::BaselineFinisher;
use segsynth::io;
use segsynth::layout::SemanticLayout;
use segsynth::pipeline::{mix_seed, synthesize, SynthOptions};
use segsynth::retrieval::BankIndex;
use segsynth::toy::{classify_by_color, toy_class_table, toy_dataset, ToyOptions, TOY_COLORS};

fn main() -> segsynth::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("segsynth_pipeline"));
    let opts = ToyOptions::default();
    let data = toy_dataset(120, 2024, &opts);
    let (train, test) = data.split_at(100);

    let pairs: Vec<TrainingPair<'_>> = train
        .iter()
        .enumerate()
        .map(|(i, (_, image, layout, _))| TrainingPair {
            image,
            layout,
            source_id: i as u32,
        })
        .collect();
    let bank = build_bank(&pairs, ExtractOptions::default())?;
    let depths: Vec<(SemanticLayout, DepthMap)> = train
        .iter()
        .map(|(_, _, l, d)| Ok((l.clone(), DepthMap::new(d.clone().expect("toy depth"))?)))
        .collect::<segsynth::Result<_>>()?;
    let refs: Vec<_> = depths.iter().map(|(l, d)| (l, d)).collect();
    let ordering = derive_ordering(&refs, &bank.table, None, bank.options.connectivity)?;
    println!("{} segments; ground paints first: {}", bank.len(), ordering.rank(0) == 0);

    let index = BankIndex::new(&bank, (opts.size, opts.size));
    let finisher = BaselineFinisher::default();
    let mut scores = Vec::new();
    for (i, (stem, _, layout, _)) in test.iter().enumerate() {
        let syn = synthesize(layout, &index, &ordering, &SynthOptions::default(), &finisher, mix_seed(9, &[i as u64]))?;
        let rgb = io::to_rgb8(&syn.image);
        let read_back = SemanticLayout::new(toy_class_table(), classify_by_color(&rgb, &TOY_COLORS))?;
        scores.push((stem.clone(), layout_agreement(layout, &read_back)?));
        io::write_rgb(&out.join(format!("{stem}.png")), &rgb)?;
    }
    let report = AgreementReport::from_pairs(scores);
    println!(
        "{} layouts: pixel accuracy {:.3}, mean IoU {:.3}",
        report.pairs.len(),
        report.pixel_accuracy,
        report.mean_iou
    );
    println!("wrote {}", out.display());
    Ok(())
}
