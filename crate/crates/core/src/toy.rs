//! Generated scenes of colored shapes on a ground plane, with exact layouts
//! and depth. Used by the examples and the end-to-end checks.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grid::{Grid, Rgb8};
use crate::io;
use crate::layout::{ClassTable, SemanticLayout};

pub const TOY_CLASSES: [&str; 5] = ["ground", "disk", "square", "bar", "diamond"];

/// Base color per class.
pub const TOY_COLORS: [Rgb8; 5] = [[90, 140, 60], [200, 60, 50], [50, 80, 190], [220, 200, 60], [150, 70, 170]];

/// Depth written for ground pixels and shape pixels.
pub const TOY_GROUND_DEPTH: f64 = 20.0;
pub const TOY_SHAPE_DEPTH: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyOptions {
    pub size: usize,
    pub min_shapes: usize,
    pub max_shapes: usize,
    /// Shape half-extent range in pixels.
    pub min_radius: usize,
    pub max_radius: usize,
    /// Uniform per-pixel noise amplitude per channel.
    pub noise: i32,
    /// Uniform per-image, per-class tint amplitude per channel.
    pub tint: i32,
}

impl Default for ToyOptions {
    fn default() -> Self {
        Self {
            size: 64,
            min_shapes: 1,
            max_shapes: 4,
            min_radius: 5,
            max_radius: 11,
            noise: 10,
            tint: 12,
        }
    }
}

pub fn toy_class_table() -> ClassTable {
    ClassTable::new(TOY_CLASSES).expect("static class list is valid")
}

fn inside(class: u8, dx: i64, dy: i64, r: i64) -> bool {
    match class {
        1 => dx * dx + dy * dy <= r * r,
        2 => dx.abs() <= r && dy.abs() <= r,
        3 => dx.abs() <= r && dy.abs() <= (r / 3).max(2),
        _ => dx.abs() + dy.abs() <= r,
    }
}

/// One scene. Shapes never touch one another (at least 3 px apart).
pub fn toy_sample(seed: u64, opts: &ToyOptions) -> (Grid<Rgb8>, SemanticLayout, Grid<Option<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = opts.size;
    let mut labels = Grid::new(n, n, 0u8);
    let wanted = rng.random_range(opts.min_shapes..=opts.max_shapes);
    let mut placed = 0;
    for _ in 0..wanted * 20 {
        if placed == wanted {
            break;
        }
        let class = rng.random_range(1..TOY_CLASSES.len() as u8);
        let r = rng.random_range(opts.min_radius..=opts.max_radius) as i64;
        let cx = rng.random_range(r..n as i64 - r);
        let cy = rng.random_range(r..n as i64 - r);
        let mut cells = Vec::new();
        let mut clear = true;
        for y in (cy - r - 3).max(0)..(cy + r + 4).min(n as i64) {
            for x in (cx - r - 3).max(0)..(cx + r + 4).min(n as i64) {
                let near = (-3..=3).any(|oy| (-3..=3).any(|ox| inside(class, x - cx + ox, y - cy + oy, r)));
                if near && *labels.get(x as usize, y as usize) != 0 {
                    clear = false;
                }
                if inside(class, x - cx, y - cy, r) {
                    cells.push((x as usize, y as usize));
                }
            }
        }
        if clear && cells.len() >= 16 {
            for (x, y) in cells {
                labels.set(x, y, class);
            }
            placed += 1;
        }
    }
    let tints: Vec<[i32; 3]> = (0..TOY_CLASSES.len())
        .map(|_| std::array::from_fn(|_| rng.random_range(-opts.tint..=opts.tint)))
        .collect();
    let image = Grid::from_fn(n, n, |x, y| {
        let c = *labels.get(x, y) as usize;
        std::array::from_fn(|k| {
            let noise = rng.random_range(-opts.noise..=opts.noise);
            (TOY_COLORS[c][k] as i32 + tints[c][k] + noise).clamp(0, 255) as u8
        })
    });
    let depth = labels.map(|&l| Some(if l == 0 { TOY_GROUND_DEPTH } else { TOY_SHAPE_DEPTH }));
    let layout = SemanticLayout::new(toy_class_table(), labels).expect("labels within table");
    (image, layout, depth)
}

pub type ToySample = (String, Grid<Rgb8>, SemanticLayout, Option<Grid<Option<f64>>>);

/// `count` scenes named `toy_00000`, `toy_00001`, ...; scene `i` uses seed `seed + i`.
pub fn toy_dataset(count: usize, seed: u64, opts: &ToyOptions) -> Vec<ToySample> {
    (0..count)
        .map(|i| {
            let (img, layout, depth) = toy_sample(seed.wrapping_add(i as u64), opts);
            (format!("toy_{i:05}"), img, layout, Some(depth))
        })
        .collect()
}

pub fn write_toy_dataset(root: &Path, count: usize, seed: u64, opts: &ToyOptions) -> Result<Vec<ToySample>> {
    let samples = toy_dataset(count, seed, opts);
    io::write_dataset(root, &toy_class_table(), &samples)?;
    Ok(samples)
}

/// Labels each pixel with the class whose base color is nearest.
pub fn classify_by_color(image: &Grid<Rgb8>, palette: &[Rgb8]) -> Grid<u8> {
    image.map(|p| {
        let d = |c: &Rgb8| (0..3).map(|k| (p[k] as i32 - c[k] as i32).pow(2)).sum::<i32>();
        palette
            .iter()
            .enumerate()
            .min_by_key(|(_, c)| d(c))
            .map_or(0, |(i, _)| i as u8)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_labeled() {
        let o = ToyOptions::default();
        let (a, la, _) = toy_sample(3, &o);
        let (b, lb, _) = toy_sample(3, &o);
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert!(la.labels.as_slice().iter().any(|&l| l != 0));
        assert_eq!(la.unlabeled_fraction(), 0.0);
    }

    #[test]
    fn clean_image_classifies_perfectly() {
        let o = ToyOptions::default();
        let (img, layout, _) = toy_sample(11, &o);
        assert_eq!(classify_by_color(&img, &TOY_COLORS), layout.labels);
    }
}
