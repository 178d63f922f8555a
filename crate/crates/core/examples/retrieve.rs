//! Retrieves the best bank segments for each region of an unseen layout.
//!
//!     cargo run --example retrieve

use segsynth::bank::{build_bank, layout_regions, ExtractOptions, TrainingPair};
use segsynth::retrieval::{retrieve, top_k, BankIndex};
use segsynth::toy::{toy_dataset, toy_sample, ToyOptions};

fn main() -> segsynth::Result<()> {
    let opts = ToyOptions::default();
    let data = toy_dataset(80, 100, &opts);
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
    let index = BankIndex::new(&bank, (opts.size, opts.size));

    let (_, query_layout, _) = toy_sample(9_999, &opts);
    for (i, q) in layout_regions(&query_layout, &bank.options).iter().enumerate() {
        let class = query_layout.table.name(q.class_index);
        let best = retrieve(q, &index, None).expect("every toy class is in the bank");
        println!(
            "region {i} ({class}, {} px): segment {} score {:.3} (mask {:.3}, context {:.3})",
            q.area, best.segment_id, best.score, best.mask_iou, best.context_iou
        );
        let runners: Vec<String> = top_k(q, &index, 4, None)
            .iter()
            .skip(1)
            .map(|m| format!("{}:{:.3}", m.segment_id, m.score))
            .collect();
        println!("    next best {}", runners.join(" "));
    }
    Ok(())
}
