//! Computed values checked against independent reference implementations.

mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use segsynth::bank::{build_bank, context_box, layout_regions, ExtractOptions};
use segsynth::canvas_sim::{LMS_TO_RGB, RGB_TO_LMS};
use segsynth::compositor::edt::squared_distance;
use segsynth::eval::{fftshift, layout_agreement, luminance, power_spectrum};
use segsynth::finisher::harmonic_fill;
use segsynth::grid::{BoundingBox, Grid};
use segsynth::layout::{SemanticLayout, UNLABELED};
use segsynth::retrieval::{context_iou, mask_iou, retrieve, top_k, BankIndex};

fn bool_grid(w: usize, h: usize, bits: &[bool]) -> Grid<bool> {
    Grid::from_fn(w, h, |x, y| bits[(y * w + x) % bits.len()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edt_matches_exhaustive_search(w in 1usize..20, h in 1usize..20, bits in prop::collection::vec(prop::bool::weighted(0.2), 1..400)) {
        let g = bool_grid(w, h, &bits);
        let fast = squared_distance(&g);
        let slow = common::brute_sq_distance(&g);
        for (x, y, &d) in slow.iter_xy() {
            prop_assert_eq!(*fast.get(x, y), d, "at ({}, {})", x, y);
        }
    }

    #[test]
    fn iou_matches_enumeration(seed in any::<u64>(), classes in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame = (rng.random_range(6..20), rng.random_range(6..20));
        let a = common::random_layout(&mut rng, frame, classes, 3, true);
        let b = common::random_layout(&mut rng, frame, classes, 3, true);
        let opts = ExtractOptions { min_area: 1, ..ExtractOptions::default() };
        for p in layout_regions(&a, &opts) {
            for q in layout_regions(&b, &opts) {
                prop_assert_eq!(mask_iou(&p, &q), common::oracle_mask_iou(&p, &q));
                prop_assert_eq!(context_iou(&p, &q), common::oracle_context_iou(&p, &q));
            }
        }
    }

    #[test]
    fn retrieval_matches_brute_force(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = rng.random_range(2..5);
        let frame = (20, 24);
        let data: Vec<_> = (0..rng.random_range(2..10))
            .map(|_| (common::flat_image(frame), common::random_layout(&mut rng, frame, classes, 4, true)))
            .collect();
        let opts = ExtractOptions { min_area: 1, ..ExtractOptions::default() };
        let bank = build_bank(&common::pairs(&data), opts).unwrap();
        let index = BankIndex::new(&bank, frame);
        let query = common::random_layout(&mut rng, frame, classes, 4, true);
        for q in layout_regions(&query, &opts) {
            let exclude = rng.random_bool(0.5).then(|| rng.random_range(0..data.len() as u32));
            let got = retrieve(&q, &index, exclude);
            prop_assert_eq!(got.map(|m| (m.segment_id, m.score)), common::brute_retrieve(&q, &bank, exclude));
            let top = top_k(&q, &index, 4, exclude);
            prop_assert_eq!(top.first().copied(), got);
            for pair in top.windows(2) {
                prop_assert!(pair[0].score > pair[1].score || (pair[0].score == pair[1].score && pair[0].segment_id < pair[1].segment_id));
            }
        }
    }

    #[test]
    fn harmonic_fill_solves_laplace(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (rng.random_range(3..9), rng.random_range(3..9));
        let img = Grid::from_fn(w, h, |_, _| std::array::from_fn(|_| rng.random_range(0.0..1.0)));
        let mut hole = Grid::from_fn(w, h, |_, _| rng.random_bool(0.4));
        hole.set(0, 0, false);
        let filled = harmonic_fill(&img, &hole, 1e-12, 100_000).unwrap();
        prop_assert!(filled.converged);
        for c in 0..3 {
            let want = common::laplace_reference(&img.map(|p| p[c]), &hole);
            for (x, y, &u) in hole.iter_xy() {
                // Components without any known neighbor keep the global mean instead.
                if u && reaches_known(&hole, x, y) {
                    prop_assert!((filled.image.get(x, y)[c] - want.get(x, y)).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn parseval_and_shift_invariance(w in 1usize..24, h in 1usize..24, seed in any::<u64>(), dx in 0usize..24, dy in 0usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Grid::from_fn(w, h, |_, _| rng.random_range(-1.0..1.0));
        let p = power_spectrum(&g);
        let energy: f64 = g.as_slice().iter().map(|v| v * v).sum::<f64>() * (w * h) as f64;
        let total: f64 = p.as_slice().iter().sum();
        prop_assert!((total - energy).abs() <= 1e-9 * energy.max(1e-12));
        let shifted = Grid::from_fn(w, h, |x, y| *g.get((x + dx) % w, (y + dy) % h));
        let q = power_spectrum(&shifted);
        for (a, b) in p.as_slice().iter().zip(q.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-9 * energy.max(1.0));
        }
    }

    #[test]
    fn context_box_grows_a_quarter(x0 in 0usize..40, y0 in 0usize..40, w in 1usize..40, h in 1usize..40, fw in 1usize..90, fh in 1usize..90) {
        prop_assume!(x0 + w <= fw && y0 + h <= fh);
        let b = BoundingBox::new(x0, y0, w, h);
        let c = context_box(&b, (fh, fw));
        prop_assert_eq!(c.w, ((1.25 * w as f64).ceil() as usize).min(fw));
        prop_assert_eq!(c.h, ((1.25 * h as f64).ceil() as usize).min(fh));
        prop_assert!(c.x0 <= b.x0 && c.y0 <= b.y0 && c.x0 + c.w >= b.x0 + b.w && c.y0 + c.h >= b.y0 + b.h);
        prop_assert!(c.x0 + c.w <= fw && c.y0 + c.h <= fh);
    }

    #[test]
    fn agreement_matches_confusion_counts(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = rng.random_range(2..6);
        let r = common::random_layout(&mut rng, (12, 15), classes, 3, true);
        let p = common::random_layout(&mut rng, (12, 15), classes, 3, true);
        let a = layout_agreement(&r, &p).unwrap();
        let (mut correct, mut labeled) = (0usize, 0usize);
        let mut ious = Vec::new();
        for c in 0..classes as u8 {
            let (mut inter, mut union) = (0, 0);
            for (x, y, &rl) in r.labels.iter_xy() {
                if rl == UNLABELED {
                    continue;
                }
                let pl = *p.labels.get(x, y);
                inter += (rl == c && pl == c) as usize;
                union += (rl == c || pl == c) as usize;
            }
            if union > 0 {
                ious.push(inter as f64 / union as f64);
            }
        }
        for (x, y, &rl) in r.labels.iter_xy() {
            if rl != UNLABELED {
                labeled += 1;
                correct += (*p.labels.get(x, y) == rl) as usize;
            }
        }
        prop_assert_eq!(a.labeled_pixels, labeled);
        if labeled > 0 {
            prop_assert!((a.pixel_accuracy - correct as f64 / labeled as f64).abs() < 1e-12);
        }
        if !ious.is_empty() {
            prop_assert!((a.mean_iou - ious.iter().sum::<f64>() / ious.len() as f64).abs() < 1e-12);
        }
    }
}

fn reaches_known(hole: &Grid<bool>, x: usize, y: usize) -> bool {
    let (w, h) = (hole.width(), hole.height());
    let mut seen = Grid::new(w, h, false);
    let mut stack = vec![(x, y)];
    seen.set(x, y, true);
    while let Some((x, y)) = stack.pop() {
        for (nx, ny) in [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)] {
            if nx >= w || ny >= h || *seen.get(nx, ny) {
                continue;
            }
            if !*hole.get(nx, ny) {
                return true;
            }
            seen.set(nx, ny, true);
            stack.push((nx, ny));
        }
    }
    false
}

#[test]
fn lms_inverse_matches_elimination() {
    for col in 0..3 {
        let a: Vec<Vec<f64>> = RGB_TO_LMS.iter().map(|r| r.to_vec()).collect();
        let e: Vec<f64> = (0..3).map(|i| (i == col) as u8 as f64).collect();
        let x = common::solve(a, e);
        for row in 0..3 {
            assert!((LMS_TO_RGB[row][col] - x[row]).abs() < 1e-12);
        }
    }
}

#[test]
fn ramp_hole_matches_nine_unknown_solve() {
    let img = Grid::from_fn(5, 5, |x, y| [0.2 * x as f64, 0.1 + 0.15 * y as f64, 0.05 * (x + 2 * y) as f64]);
    let hole = Grid::from_fn(5, 5, |x, y| (1..4).contains(&x) && (1..4).contains(&y));
    let filled = harmonic_fill(&img, &hole, 1e-3, 5000).unwrap().image;
    for c in 0..3 {
        let want = common::laplace_reference(&img.map(|p| p[c]), &hole);
        for (x, y, &u) in hole.iter_xy() {
            if u {
                assert!((filled.get(x, y)[c] - want.get(x, y)).abs() <= 1e-3);
                // A linear ramp is itself harmonic.
                assert!((want.get(x, y) - img.get(x, y)[c]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn spectrum_analytic_cases() {
    let p = power_spectrum(&Grid::new(8, 4, 2.0));
    assert_eq!(*p.get(0, 0), (2.0 * 32.0f64).powi(2));
    assert!(p.iter_xy().all(|(x, y, &v)| x == 0 && y == 0 || v == 0.0));
    // A pure cosine along x puts all energy in bins +-k.
    let k = 3;
    let g = Grid::from_fn(16, 8, |x, _| (2.0 * std::f64::consts::PI * k as f64 * x as f64 / 16.0).cos());
    let p = power_spectrum(&g);
    let expected = (0.5 * 128.0f64).powi(2);
    for (x, y, &v) in p.iter_xy() {
        if y == 0 && (x == k || x == 16 - k) {
            assert!((v - expected).abs() < 1e-9 * expected);
        } else {
            assert!(v < 1e-18 * expected);
        }
    }
    let s = fftshift(&p);
    assert!((s.get(8 + k, 4) - expected).abs() < 1e-9 * expected);
}

#[test]
fn luminance_is_exact_for_gray() {
    for v in [0.0, 0.25, 0.5, 1.0, 37.0 / 255.0] {
        assert_eq!(luminance(&[v, v, v]), v);
    }
    let l = luminance(&[1.0, 0.0, 0.0]);
    assert!((l - 0.299).abs() < 1e-15);
}

#[test]
fn identical_layouts_agree_fully() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let l: SemanticLayout = common::random_layout(&mut rng, (10, 10), 3, 3, false);
    let a = layout_agreement(&l, &l).unwrap();
    assert_eq!((a.mean_iou, a.pixel_accuracy), (1.0, 1.0));
}
