//! Dense row-major 2D buffers and axis-aligned boxes.

use serde::{Deserialize, Serialize};

/// Linear RGB triple with channels in `[0, 1]`.
pub type Rgb = [f64; 3];

/// 8-bit RGB triple as stored on disk.
pub type Rgb8 = [u8; 3];

/// A dense `height × width` grid stored row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }
}

impl<T> Grid<T> {
    /// Wraps an existing row-major buffer. Panics if the length does not match.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "grid buffer length mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// `(height, width)`.
    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    /// Bounds-checked access with signed coordinates.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> Option<&T> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            None
        } else {
            Some(&self.data[y as usize * self.width + x as usize])
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.width.max(1))
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Iterates `(x, y, &value)` in raster order.
    pub fn iter_xy(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let w = self.width.max(1);
        self.data.iter().enumerate().map(move |(i, v)| (i % w, i / w, v))
    }
}

impl<T: Clone> Grid<T> {
    /// Copies the sub-rectangle `bbox` out of this grid.
    pub fn crop(&self, bbox: &BoundingBox) -> Grid<T> {
        Grid::from_fn(bbox.w, bbox.h, |x, y| self.get(bbox.x0 + x, bbox.y0 + y).clone())
    }
}

/// Axis-aligned pixel box: columns `x0..x0+w`, rows `y0..y0+h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl BoundingBox {
    pub const fn new(x0: usize, y0: usize, w: usize, h: usize) -> Self {
        Self { x0, y0, w, h }
    }

    pub fn full(frame: (usize, usize)) -> Self {
        Self::new(0, 0, frame.1, frame.0)
    }

    #[inline]
    pub fn x1(&self) -> usize {
        self.x0 + self.w
    }

    #[inline]
    pub fn y1(&self) -> usize {
        self.y0 + self.h
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    #[inline]
    pub fn contains_point(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1() && y >= self.y0 && y < self.y1()
    }

    pub fn contains(&self, other: &BoundingBox) -> bool {
        other.x0 >= self.x0 && other.y0 >= self.y0 && other.x1() <= self.x1() && other.y1() <= self.y1()
    }

    /// Overlap rectangle, or `None` when the boxes share no pixel.
    pub fn intersect(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1().min(other.x1());
        let y1 = self.y1().min(other.y1());
        (x1 > x0 && y1 > y0).then(|| BoundingBox::new(x0, y0, x1 - x0, y1 - y0))
    }

    pub fn overlap_area(&self, other: &BoundingBox) -> usize {
        self.intersect(other).map_or(0, |b| b.area())
    }

    pub fn within_frame(&self, frame: (usize, usize)) -> bool {
        self.w >= 1 && self.h >= 1 && self.x1() <= frame.1 && self.y1() <= frame.0
    }
}

/// A binary footprint placed in a frame: a mask over `bbox`.
pub trait Footprint {
    fn bbox(&self) -> &BoundingBox;
    fn mask(&self) -> &Grid<bool>;

    fn area(&self) -> usize {
        self.mask().as_slice().iter().filter(|&&m| m).count()
    }

    #[inline]
    fn covers(&self, x: usize, y: usize) -> bool {
        let b = self.bbox();
        b.contains_point(x, y) && *self.mask().get(x - b.x0, y - b.y0)
    }
}

/// A bare placed mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlacedMask {
    pub bbox: BoundingBox,
    pub mask: Grid<bool>,
}

impl Footprint for PlacedMask {
    fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }
    fn mask(&self) -> &Grid<bool> {
        &self.mask
    }
}

/// Number of frame pixels covered by both footprints.
pub fn intersection_count(a: &(impl Footprint + ?Sized), b: &(impl Footprint + ?Sized)) -> usize {
    let (ab, bb) = (a.bbox(), b.bbox());
    let Some(ov) = ab.intersect(bb) else {
        return 0;
    };
    let (am, bm) = (a.mask().as_slice(), b.mask().as_slice());
    let mut n = 0;
    for y in ov.y0..ov.y1() {
        let ra = &am[(y - ab.y0) * ab.w + ov.x0 - ab.x0..][..ov.w];
        let rb = &bm[(y - bb.y0) * bb.w + ov.x0 - bb.x0..][..ov.w];
        n += ra.iter().zip(rb).filter(|(&p, &q)| p && q).count();
    }
    n
}

/// IoU of two footprints in the same frame; zero when both are empty.
pub fn footprint_iou(a: &(impl Footprint + ?Sized), b: &(impl Footprint + ?Sized)) -> f64 {
    let inter = intersection_count(a, b);
    let union = a.area() + b.area() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Tight bounding box of the set cells of a binary grid, or `None` if nothing is set.
pub fn tight_bbox(mask: &Grid<bool>) -> Option<BoundingBox> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for (x, y, &m) in mask.iter_xy() {
        if m {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x + 1);
            y1 = y1.max(y + 1);
        }
    }
    (x0 != usize::MAX).then(|| BoundingBox::new(x0, y0, x1 - x0, y1 - y0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intersect_and_containment() {
        let a = BoundingBox::new(0, 0, 10, 10);
        let b = BoundingBox::new(5, 0, 10, 10);
        assert_eq!(a.intersect(&b), Some(BoundingBox::new(5, 0, 5, 10)));
        assert_eq!(a.overlap_area(&b), 50);
        assert!(a.intersect(&BoundingBox::new(10, 0, 2, 2)).is_none());
        assert!(a.contains(&BoundingBox::new(2, 2, 3, 3)));
        assert!(!a.contains(&b));
    }

    #[test]
    fn tight_bbox_of_mask() {
        let mut m = Grid::new(6, 5, false);
        m.set(2, 1, true);
        m.set(4, 3, true);
        assert_eq!(tight_bbox(&m), Some(BoundingBox::new(2, 1, 3, 3)));
        assert_eq!(tight_bbox(&Grid::new(3, 3, false)), None);
    }
}
