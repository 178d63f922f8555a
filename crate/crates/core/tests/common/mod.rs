//! Generators and independent reference implementations shared by the
//! integration tests. Nothing here calls the code under test for the value
//! it is meant to check.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore};
use segsynth::alignment::PlacedSegment;
use segsynth::bank::{MemoryBank, Region, TrainingPair};
use segsynth::grid::{BoundingBox, Grid, Rgb, Rgb8};
use segsynth::layout::{ClassTable, SemanticLayout, UNLABELED};

pub fn table(n: usize) -> ClassTable {
    ClassTable::new((0..n).map(|i| format!("c{i}"))).unwrap()
}

/// Random scene: a background class, then rectangles and ellipses of random
/// classes, optionally with an unlabeled patch.
pub fn random_layout(rng: &mut impl RngCore, frame: (usize, usize), classes: usize, shapes: usize, unlabeled: bool) -> SemanticLayout {
    let (h, w) = frame;
    let mut labels = Grid::new(w, h, rng.random_range(0..classes) as u8);
    for _ in 0..shapes {
        let c = rng.random_range(0..classes) as u8;
        let (cx, cy) = (rng.random_range(0..w) as f64, rng.random_range(0..h) as f64);
        let (rx, ry) = (rng.random_range(1.0..w as f64 / 3.0), rng.random_range(1.0..h as f64 / 3.0));
        let ellipse = rng.random_bool(0.5);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
                let hit = if ellipse { dx * dx + dy * dy <= 1.0 } else { dx.abs() <= 1.0 && dy.abs() <= 1.0 };
                if hit {
                    labels.set(x, y, c);
                }
            }
        }
    }
    if unlabeled && rng.random_bool(0.5) {
        let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
        for y in y0..(y0 + h / 5).min(h) {
            for x in x0..(x0 + w / 5).min(w) {
                labels.set(x, y, UNLABELED);
            }
        }
    }
    SemanticLayout::new(table(classes), labels).unwrap()
}

pub fn flat_image(frame: (usize, usize)) -> Grid<Rgb8> {
    Grid::new(frame.1, frame.0, [128, 128, 128])
}

pub fn pairs<'a>(data: &'a [(Grid<Rgb8>, SemanticLayout)]) -> Vec<TrainingPair<'a>> {
    data.iter()
        .enumerate()
        .map(|(i, (image, layout))| TrainingPair {
            image,
            layout,
            source_id: i as u32,
        })
        .collect()
}

fn in_mask(r: &Region, x: usize, y: usize) -> bool {
    let b = r.bbox;
    x >= b.x0 && x < b.x0 + b.w && y >= b.y0 && y < b.y0 + b.h && *r.mask.get(x - b.x0, y - b.y0)
}

fn context_label(r: &Region, x: usize, y: usize) -> Option<u8> {
    let b = r.context_box;
    if x >= b.x0 && x < b.x0 + b.w && y >= b.y0 && y < b.y0 + b.h {
        let l = *r.context.get(x - b.x0, y - b.y0);
        (l != r.unlabeled).then_some(l)
    } else {
        None
    }
}

fn iou_from_counts(inter: usize, union: usize) -> f64 {
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mask IoU by enumerating every frame pixel. Both regions share a frame.
pub fn oracle_mask_iou(a: &Region, b: &Region) -> f64 {
    let (h, w) = a.frame;
    let (mut inter, mut union) = (0, 0);
    for y in 0..h {
        for x in 0..w {
            let (p, q) = (in_mask(a, x, y), in_mask(b, x, y));
            inter += (p && q) as usize;
            union += (p || q) as usize;
        }
    }
    iou_from_counts(inter, union)
}

/// Context IoU over `(pixel, class)` indicator pairs by enumeration.
pub fn oracle_context_iou(a: &Region, b: &Region) -> f64 {
    let (h, w) = a.frame;
    let (mut inter, mut union) = (0, 0);
    for y in 0..h {
        for x in 0..w {
            match (context_label(a, x, y), context_label(b, x, y)) {
                (Some(p), Some(q)) if p == q => {
                    inter += 1;
                    union += 1;
                }
                (Some(_), Some(_)) => union += 2,
                (Some(_), None) | (None, Some(_)) => union += 1,
                (None, None) => {}
            }
        }
    }
    iou_from_counts(inter, union)
}

/// Argmax over every same-class segment, scoring by enumeration; ties go to
/// the lowest id because only a strictly greater score replaces the best.
pub fn brute_retrieve(q: &Region, bank: &MemoryBank, exclude: Option<u32>) -> Option<(u32, f64)> {
    let mut best: Option<(u32, f64)> = None;
    for s in bank.segments() {
        if s.region.class_index != q.class_index || Some(s.source_id) == exclude {
            continue;
        }
        let score = oracle_mask_iou(q, &s.region) + oracle_context_iou(q, &s.region);
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((s.id, score));
        }
    }
    best
}

/// Squared distance to the nearest `true` cell by exhaustive search.
pub fn brute_sq_distance(features: &Grid<bool>) -> Grid<f64> {
    let pts: Vec<(usize, usize)> = features.iter_xy().filter(|(_, _, &f)| f).map(|(x, y, _)| (x, y)).collect();
    Grid::from_fn(features.width(), features.height(), |x, y| {
        pts.iter()
            .map(|&(px, py)| (px as f64 - x as f64).powi(2) + (py as f64 - y as f64).powi(2))
            .fold(f64::INFINITY, f64::min)
    })
}

/// True when some frame pixel with `target` membership lies within
/// Euclidean distance `r` of `(x, y)`; searches the `r`-box only.
pub fn near(member: &dyn Fn(usize, usize) -> bool, frame: (usize, usize), x: usize, y: usize, r: f64, target: bool) -> bool {
    let k = r.floor() as i64;
    for dy in -k..=k {
        for dx in -k..=k {
            if ((dx * dx + dy * dy) as f64) > r * r {
                continue;
            }
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx < 0 || ny < 0 || nx >= frame.1 as i64 || ny >= frame.0 as i64 {
                continue;
            }
            if member(nx as usize, ny as usize) == target {
                return true;
            }
        }
    }
    false
}

/// Dense Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Discrete Laplace solution for the unknown pixels of one channel with
/// the four-neighbor stencil; neighbors outside the image are ignored.
pub fn laplace_reference(values: &Grid<f64>, unknown: &Grid<bool>) -> Grid<f64> {
    let (w, h) = (values.width(), values.height());
    let cells: Vec<(usize, usize)> = unknown.iter_xy().filter(|(_, _, &u)| u).map(|(x, y, _)| (x, y)).collect();
    let index: BTreeMap<(usize, usize), usize> = cells.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let n = cells.len();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for (i, &(x, y)) in cells.iter().enumerate() {
        let nbrs = [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)];
        for (nx, ny) in nbrs {
            if nx >= w || ny >= h {
                continue;
            }
            a[i][i] += 1.0;
            match index.get(&(nx, ny)) {
                Some(&j) => a[i][j] -= 1.0,
                None => b[i] += values.get(nx, ny),
            }
        }
    }
    let sol = solve(a, b);
    let mut out = values.clone();
    for (i, &(x, y)) in cells.iter().enumerate() {
        out.set(x, y, sol[i]);
    }
    out
}

/// Full-box placed segment with a per-pixel color function.
pub fn placed(frame: (usize, usize), bbox: BoundingBox, mask: Grid<bool>, color: impl Fn(usize, usize) -> Rgb) -> PlacedSegment {
    let color = Grid::from_fn(bbox.w, bbox.h, |x, y| if *mask.get(x, y) { color(x, y) } else { [0.0; 3] });
    PlacedSegment {
        segment_id: 0,
        class_index: 0,
        frame,
        bbox,
        mask,
        color,
    }
}

/// Every file under `dir` with its bytes, keyed by relative path.
pub fn tree_bytes(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Runs the command line in-process and returns its exit code.
pub fn cli<S: AsRef<std::ffi::OsStr>>(list: &[S]) -> i32 {
    let argv: Vec<std::ffi::OsString> = std::iter::once("segsynth".into())
        .chain(list.iter().map(|a| a.as_ref().to_os_string()))
        .collect();
    segsynth::cli::main_with_args(argv)
}
