//! Affine alignment of retrieved segments onto query regions.
//!
//! [`fit_alignment`] is a closed-form fit from mask moments: per-axis scale
//! from tight-box extents (or from principal-axis variances when rotation is
//! enabled), and a translation that maps centroid onto centroid.
//! [`warp`] resamples color bilinearly through the inverse map and thresholds
//! the bilinearly resampled mask at one half.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bank::SegmentRecord;
use crate::error::{Error, Result};
use crate::grid::{tight_bbox, BoundingBox, Footprint, Grid, Rgb};

/// Row-major 2×3 matrix mapping source frame coordinates to destination frame
/// coordinates. Pixel centers sit at integer coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform2D {
    pub m: [[f64; 3]; 2],
}

impl AffineTransform2D {
    pub const IDENTITY: Self = Self {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    };

    pub fn from_linear(linear: [[f64; 2]; 2], t: (f64, f64)) -> Self {
        Self {
            m: [
                [linear[0][0], linear[0][1], t.0],
                [linear[1][0], linear[1][1], t.1],
            ],
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self::from_linear([[1.0, 0.0], [0.0, 1.0]], (tx, ty))
    }

    /// Rotation by `theta` radians, then isotropic `scale`, about `center`, then a shift.
    pub fn similarity_about(center: (f64, f64), scale: f64, theta: f64, shift: (f64, f64)) -> Self {
        let (s, c) = theta.sin_cos();
        let l = [[scale * c, -scale * s], [scale * s, scale * c]];
        let t = (
            center.0 + shift.0 - (l[0][0] * center.0 + l[0][1] * center.1),
            center.1 + shift.1 - (l[1][0] * center.0 + l[1][1] * center.1),
        );
        Self::from_linear(l, t)
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        (
            m[0][0] * x + m[0][1] * y + m[0][2],
            m[1][0] * x + m[1][1] * y + m[1][2],
        )
    }

    pub fn linear(&self) -> [[f64; 2]; 2] {
        [[self.m[0][0], self.m[0][1]], [self.m[1][0], self.m[1][1]]]
    }

    pub fn translation_part(&self) -> (f64, f64) {
        (self.m[0][2], self.m[1][2])
    }

    pub fn determinant(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.determinant();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let [[a, b, tx], [c, d, ty]] = self.m;
        let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
        Some(Self {
            m: [
                [ia, ib, -(ia * tx + ib * ty)],
                [ic, id, -(ic * tx + id * ty)],
            ],
        })
    }

    /// `self` applied after `first`.
    pub fn after(&self, first: &Self) -> Self {
        let (a, b) = (&self.m, &first.m);
        let mut m = [[0.0; 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                m[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c] + if c == 2 { a[r][2] } else { 0.0 };
            }
        }
        Self { m }
    }
}

/// A color segment placed in a frame, as produced by warping or perturbation.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacedSegment {
    /// Bank id of the source segment, or a caller-chosen tag.
    pub segment_id: u32,
    pub class_index: u8,
    pub frame: (usize, usize),
    pub bbox: BoundingBox,
    pub mask: Grid<bool>,
    /// RGB in `[0, 1]` over `bbox`, zero off-mask.
    pub color: Grid<Rgb>,
}

impl Footprint for PlacedSegment {
    fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }
    fn mask(&self) -> &Grid<bool> {
        &self.mask
    }
}

impl PlacedSegment {
    pub fn from_record(seg: &SegmentRecord) -> Self {
        Self {
            segment_id: seg.id,
            class_index: seg.class_index(),
            frame: seg.region.frame,
            bbox: seg.region.bbox,
            mask: seg.region.mask.clone(),
            color: seg.color.map(|p| p.map(|c| c as f64 / 255.0)),
        }
    }

    pub fn empty(segment_id: u32, class_index: u8, frame: (usize, usize)) -> Self {
        Self {
            segment_id,
            class_index,
            frame,
            bbox: BoundingBox::new(0, 0, 0, 0),
            mask: Grid::new(0, 0, false),
            color: Grid::new(0, 0, [0.0; 3]),
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.as_slice().iter().any(|&m| m)
    }

    /// Shrinks `bbox` to the mask's tight extent and zeroes color off-mask.
    pub fn tightened(self) -> Self {
        let Some(t) = tight_bbox(&self.mask) else {
            return Self::empty(self.segment_id, self.class_index, self.frame);
        };
        let mask = self.mask.crop(&t);
        let color = Grid::from_fn(t.w, t.h, |x, y| {
            if *mask.get(x, y) {
                *self.color.get(t.x0 + x, t.y0 + y)
            } else {
                [0.0; 3]
            }
        });
        Self {
            bbox: BoundingBox::new(self.bbox.x0 + t.x0, self.bbox.y0 + t.y0, t.w, t.h),
            mask,
            color,
            ..self
        }
    }

    /// Color at frame pixel `(x, y)` if covered.
    #[inline]
    pub fn color_at(&self, x: usize, y: usize) -> Option<Rgb> {
        self.covers(x, y)
            .then(|| *self.color.get(x - self.bbox.x0, y - self.bbox.y0))
    }
}

/// First and second central moments of a footprint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub cx: f64,
    pub cy: f64,
    pub mu20: f64,
    pub mu02: f64,
    pub mu11: f64,
}

impl Moments {
    pub fn of(fp: &(impl Footprint + ?Sized)) -> Self {
        let b = *fp.bbox();
        let (mut n, mut sx, mut sy) = (0usize, 0.0, 0.0);
        for (x, y, &m) in fp.mask().iter_xy() {
            if m {
                n += 1;
                sx += (b.x0 + x) as f64;
                sy += (b.y0 + y) as f64;
            }
        }
        let nf = n.max(1) as f64;
        let (cx, cy) = (sx / nf, sy / nf);
        let (mut m20, mut m02, mut m11) = (0.0, 0.0, 0.0);
        for (x, y, &m) in fp.mask().iter_xy() {
            if m {
                let dx = (b.x0 + x) as f64 - cx;
                let dy = (b.y0 + y) as f64 - cy;
                m20 += dx * dx;
                m02 += dy * dy;
                m11 += dx * dy;
            }
        }
        Self {
            count: n,
            cx,
            cy,
            mu20: m20 / nf,
            mu02: m02 / nf,
            mu11: m11 / nf,
        }
    }

    /// Principal-axis angle in radians, in `(-pi/2, pi/2]`.
    pub fn orientation(&self) -> f64 {
        0.5 * (2.0 * self.mu11).atan2(self.mu20 - self.mu02)
    }

    /// Eigenvalues of the covariance, major first.
    pub fn principal_variances(&self) -> (f64, f64) {
        let mean = 0.5 * (self.mu20 + self.mu02);
        let dev = (0.25 * (self.mu20 - self.mu02).powi(2) + self.mu11 * self.mu11).sqrt();
        (mean + dev, (mean - dev).max(0.0))
    }

    /// Ratio of principal axis lengths (>= 1; infinite for a line).
    pub fn anisotropy(&self) -> f64 {
        let (l1, l2) = self.principal_variances();
        if l2 <= 0.0 {
            f64::INFINITY
        } else {
            (l1 / l2).sqrt()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignOptions {
    pub allow_rotation: bool,
    pub min_scale: f64,
    pub max_scale: f64,
    /// Both masks must reach this axis-length ratio before rotation is fitted.
    pub anisotropy_threshold: f64,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self {
            allow_rotation: false,
            min_scale: 0.25,
            max_scale: 4.0,
            anisotropy_threshold: 1.5,
        }
    }
}

impl AlignOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_scale > 0.0 && self.min_scale <= self.max_scale && self.max_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "scale clamp [{}, {}] must be positive and ordered",
                self.min_scale, self.max_scale
            )));
        }
        Ok(())
    }
}

/// Fits the transform taking `src` onto `dst`.
pub fn fit_alignment(
    src: &(impl Footprint + ?Sized),
    dst: &(impl Footprint + ?Sized),
    opts: &AlignOptions,
) -> Result<AffineTransform2D> {
    let sb = tight_bbox(src.mask()).ok_or(Error::EmptyMask("alignment source"))?;
    let db = tight_bbox(dst.mask()).ok_or(Error::EmptyMask("alignment target"))?;
    let sm = Moments::of(src);
    let dm = Moments::of(dst);
    let clamp = |s: f64| s.clamp(opts.min_scale, opts.max_scale);

    let rotate = opts.allow_rotation
        && sm.anisotropy() >= opts.anisotropy_threshold
        && dm.anisotropy() >= opts.anisotropy_threshold;

    let linear = if rotate {
        let (s1v, s2v) = sm.principal_variances();
        let (d1v, d2v) = dm.principal_variances();
        let major = if s1v > 0.0 { clamp((d1v / s1v).sqrt()) } else { 1.0 };
        let minor = if s2v > 0.0 && d2v > 0.0 {
            clamp((d2v / s2v).sqrt())
        } else {
            major
        };
        let ts = sm.orientation();
        let mut delta = dm.orientation() - ts;
        // Axes are undirected: keep the smallest turn.
        while delta > std::f64::consts::FRAC_PI_2 {
            delta -= std::f64::consts::PI;
        }
        while delta <= -std::f64::consts::FRAC_PI_2 {
            delta += std::f64::consts::PI;
        }
        // R(ts + delta) · diag(major, minor) · R(-ts)
        let rot = |t: f64| {
            let (s, c) = t.sin_cos();
            [[c, -s], [s, c]]
        };
        let mul = |a: [[f64; 2]; 2], b: [[f64; 2]; 2]| {
            [
                [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
                [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
            ]
        };
        mul(mul(rot(ts + delta), [[major, 0.0], [0.0, minor]]), rot(-ts))
    } else {
        let thin_x = sb.w <= 1 || db.w <= 1;
        let thin_y = sb.h <= 1 || db.h <= 1;
        let rx = clamp(db.w as f64 / sb.w as f64);
        let ry = clamp(db.h as f64 / sb.h as f64);
        let (sx, sy) = match (thin_x, thin_y) {
            (true, true) => (1.0, 1.0),
            (true, false) => (ry, ry),
            (false, true) => (rx, rx),
            (false, false) => (rx, ry),
        };
        [[sx, 0.0], [0.0, sy]]
    };
    let t = (
        dm.cx - (linear[0][0] * sm.cx + linear[0][1] * sm.cy),
        dm.cy - (linear[1][0] * sm.cx + linear[1][1] * sm.cy),
    );
    Ok(AffineTransform2D::from_linear(linear, t))
}

/// Coordinates within this distance of a lattice point are snapped to it, so
/// integer shifts resample exactly.
const LATTICE_SNAP: f64 = 1e-9;

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < LATTICE_SNAP {
        r
    } else {
        v
    }
}

/// Warps a placed segment into `frame`. Color is interpolated from mask-weighted
/// bilinear neighbors so off-mask zeros do not darken edges.
pub fn warp(src: &PlacedSegment, t: &AffineTransform2D, frame: (usize, usize)) -> Result<PlacedSegment> {
    let inv = t
        .inverse()
        .ok_or_else(|| Error::InvalidConfig("affine transform is not invertible".into()))?;
    let out_empty = || PlacedSegment::empty(src.segment_id, src.class_index, frame);
    if src.is_empty() || frame.0 == 0 || frame.1 == 0 {
        return Ok(out_empty());
    }
    let sb = src.bbox;
    let corners = [
        (sb.x0 as f64 - 0.5, sb.y0 as f64 - 0.5),
        (sb.x1() as f64 - 0.5, sb.y0 as f64 - 0.5),
        (sb.x0 as f64 - 0.5, sb.y1() as f64 - 0.5),
        (sb.x1() as f64 - 0.5, sb.y1() as f64 - 0.5),
    ];
    let (mut minx, mut miny, mut maxx, mut maxy) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for (x, y) in corners {
        let (u, v) = t.apply(x, y);
        minx = minx.min(u);
        miny = miny.min(v);
        maxx = maxx.max(u);
        maxy = maxy.max(v);
    }
    let x0 = (minx.floor() - 1.0).max(0.0);
    let y0 = (miny.floor() - 1.0).max(0.0);
    let x1 = (maxx.ceil() + 1.0).min(frame.1 as f64);
    let y1 = (maxy.ceil() + 1.0).min(frame.0 as f64);
    if x1 <= x0 || y1 <= y0 {
        return Ok(out_empty());
    }
    let ob = BoundingBox::new(x0 as usize, y0 as usize, (x1 - x0) as usize, (y1 - y0) as usize);

    let sample = |sx: i64, sy: i64| -> Option<Rgb> {
        if sx < sb.x0 as i64 || sy < sb.y0 as i64 {
            return None;
        }
        let (lx, ly) = ((sx - sb.x0 as i64) as usize, (sy - sb.y0 as i64) as usize);
        if lx >= sb.w || ly >= sb.h || !*src.mask.get(lx, ly) {
            return None;
        }
        Some(*src.color.get(lx, ly))
    };

    let mut mask = Grid::new(ob.w, ob.h, false);
    let mut color = Grid::new(ob.w, ob.h, [0.0; 3]);
    for oy in 0..ob.h {
        for ox in 0..ob.w {
            let (u, v) = inv.apply((ob.x0 + ox) as f64, (ob.y0 + oy) as f64);
            let (u, v) = (snap(u), snap(v));
            let (fx, fy) = (u.floor(), v.floor());
            let (ax, ay) = (u - fx, v - fy);
            let (ix, iy) = (fx as i64, fy as i64);
            let mut m = 0.0;
            let mut acc = [0.0; 3];
            for (dx, dy, w) in [
                (0, 0, (1.0 - ax) * (1.0 - ay)),
                (1, 0, ax * (1.0 - ay)),
                (0, 1, (1.0 - ax) * ay),
                (1, 1, ax * ay),
            ] {
                if w == 0.0 {
                    continue;
                }
                if let Some(c) = sample(ix + dx, iy + dy) {
                    m += w;
                    for k in 0..3 {
                        acc[k] += w * c[k];
                    }
                }
            }
            if m >= 0.5 {
                mask.set(ox, oy, true);
                color.set(ox, oy, acc.map(|a| a / m));
            }
        }
    }
    Ok(PlacedSegment {
        segment_id: src.segment_id,
        class_index: src.class_index,
        frame,
        bbox: ob,
        mask,
        color,
    }
    .tightened())
}

/// Warps a bank segment into a frame.
pub fn warp_segment(seg: &SegmentRecord, t: &AffineTransform2D, frame: (usize, usize)) -> Result<PlacedSegment> {
    warp(&PlacedSegment::from_record(seg), t, frame)
}

/// Ranges for random misalignment. All ranges are symmetric about the identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationSpec {
    /// Maximum absolute shift per axis, pixels.
    pub max_translation: f64,
    /// Isotropic scale range, sampled log-uniformly.
    pub scale_range: (f64, f64),
    /// Maximum absolute rotation, degrees.
    pub max_rotation_deg: f64,
    /// Maximum fraction of the bbox extent cropped from one random side.
    pub max_crop: f64,
    pub seed: u64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            max_translation: 0.0,
            scale_range: (1.0, 1.0),
            max_rotation_deg: 0.0,
            max_crop: 0.0,
            seed: 0,
        }
    }
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        let finite = [self.max_translation, lo, hi, self.max_rotation_deg, self.max_crop]
            .iter()
            .all(|v| v.is_finite());
        if !finite || lo <= 0.0 || hi < lo || self.max_translation < 0.0 || self.max_rotation_deg < 0.0 {
            return Err(Error::InvalidConfig(format!("invalid perturbation ranges {self:?}")));
        }
        if !(0.0..1.0).contains(&self.max_crop) {
            return Err(Error::InvalidConfig("crop fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Output of [`perturb_segment`]: the misaligned segment and the affine part applied.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbed {
    pub segment: PlacedSegment,
    pub transform: AffineTransform2D,
    /// Rows/columns removed by the crop, as `(side, count)`; side 0..4 = left, right, top, bottom.
    pub crop: Option<(u8, usize)>,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Random similarity about the centroid followed by a one-sided crop.
pub fn perturb_segment(seg: &PlacedSegment, spec: &PerturbationSpec) -> Result<Perturbed> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let tx = uniform(&mut rng, -spec.max_translation, spec.max_translation);
    let ty = uniform(&mut rng, -spec.max_translation, spec.max_translation);
    let (lo, hi) = spec.scale_range;
    let scale = uniform(&mut rng, lo.ln(), hi.ln()).exp();
    let theta = uniform(&mut rng, -spec.max_rotation_deg, spec.max_rotation_deg).to_radians();
    let crop_frac = uniform(&mut rng, 0.0, spec.max_crop);
    let side = rng.random_range(0..4u8);

    let m = Moments::of(seg);
    let transform = AffineTransform2D::similarity_about((m.cx, m.cy), scale, theta, (tx, ty));
    let mut out = warp(seg, &transform, seg.frame)?;
    let mut crop = None;
    if crop_frac > 0.0 && !out.is_empty() {
        let b = out.bbox;
        let extent = if side < 2 { b.w } else { b.h };
        let n = (crop_frac * extent as f64).floor() as usize;
        if n > 0 {
            for (x, y, m) in out.mask.as_mut_slice().iter_mut().enumerate().map(|(i, m)| (i % b.w, i / b.w, m)) {
                let cut = match side {
                    0 => x < n,
                    1 => x >= b.w - n,
                    2 => y < n,
                    _ => y >= b.h - n,
                };
                if cut {
                    *m = false;
                }
            }
            crop = Some((side, n));
            out = out.tightened();
        }
    }
    Ok(Perturbed {
        segment: out,
        transform,
        crop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn placed(frame: (usize, usize), f: impl Fn(usize, usize) -> bool) -> PlacedSegment {
        let mask = Grid::from_fn(frame.1, frame.0, |x, y| f(x, y));
        let color = Grid::from_fn(frame.1, frame.0, |x, y| {
            if f(x, y) {
                [x as f64 / frame.1 as f64, y as f64 / frame.0 as f64, 0.5]
            } else {
                [0.0; 3]
            }
        });
        PlacedSegment {
            segment_id: 0,
            class_index: 0,
            frame,
            bbox: BoundingBox::full(frame),
            mask,
            color,
        }
        .tightened()
    }

    fn blob(x: usize, y: usize) -> bool {
        let (dx, dy) = (x as f64 - 20.0, y as f64 - 24.0);
        dx * dx / 81.0 + dy * dy / 36.0 <= 1.0 || (x >= 20 && x < 26 && y >= 24 && y < 33)
    }

    #[test]
    fn identical_masks_fit_identity() {
        let s = placed((64, 64), blob);
        let t = fit_alignment(&s, &s, &AlignOptions::default()).unwrap();
        for (a, b) in t.m.iter().flatten().zip(AffineTransform2D::IDENTITY.m.iter().flatten()) {
            assert!((a - b).abs() < 1e-9);
        }
        let w = warp(&s, &t, s.frame).unwrap();
        assert_eq!(w.bbox, s.bbox);
        assert_eq!(w.mask, s.mask);
        for (p, q) in w.color.as_slice().iter().zip(s.color.as_slice()) {
            for k in 0..3 {
                assert!((p[k] - q[k]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn translation_is_recovered_exactly() {
        let s = placed((64, 64), blob);
        let d = placed((64, 64), |x, y| x >= 7 && y + 3 < 64 && blob(x - 7, y + 3));
        let t = fit_alignment(&s, &d, &AlignOptions::default()).unwrap();
        assert_eq!(t.linear(), [[1.0, 0.0], [0.0, 1.0]]);
        let (tx, ty) = t.translation_part();
        assert!((tx - 7.0).abs() < 1e-9 && (ty + 3.0).abs() < 1e-9, "{tx} {ty}");
        let w = warp(&s, &t, s.frame).unwrap();
        assert_eq!(w.mask, d.mask);
        assert_eq!(w.bbox, d.bbox);
    }

    #[test]
    fn scale_is_recovered_within_quantization() {
        let s = placed((96, 96), |x, y| {
            let (dx, dy) = (x as f64 - 40.0, y as f64 - 40.0);
            dx * dx / 100.0 + dy * dy / 49.0 <= 1.0
        });
        let d = placed((96, 96), |x, y| {
            let (dx, dy) = (x as f64 - 40.0, y as f64 - 40.0);
            dx * dx / 400.0 + dy * dy / 196.0 <= 1.0
        });
        let t = fit_alignment(&s, &d, &AlignOptions::default()).unwrap();
        let l = t.linear();
        assert!((l[0][0] - 2.0).abs() / 2.0 < 0.05, "{l:?}");
        assert!((l[1][1] - 2.0).abs() / 2.0 < 0.05, "{l:?}");
    }

    #[test]
    fn scale_is_clamped_and_thin_axes_borrow() {
        let s = placed((64, 64), |x, y| (10..12).contains(&x) && (10..12).contains(&y));
        let d = placed((64, 64), |x, y| (0..60).contains(&x) && (0..60).contains(&y));
        let t = fit_alignment(&s, &d, &AlignOptions::default()).unwrap();
        assert_eq!(t.linear(), [[4.0, 0.0], [0.0, 4.0]]);

        let line = placed((64, 64), |x, y| y == 5 && (0..10).contains(&x));
        let wide = placed((64, 64), |x, y| (0..20).contains(&x) && (0..6).contains(&y));
        let t = fit_alignment(&line, &wide, &AlignOptions::default()).unwrap();
        assert_eq!(t.linear(), [[2.0, 0.0], [0.0, 2.0]]);
    }

    #[test]
    fn empty_masks_are_rejected() {
        let s = placed((8, 8), |_, _| false);
        let d = placed((8, 8), |x, _| x < 2);
        assert!(matches!(
            fit_alignment(&s, &d, &AlignOptions::default()),
            Err(Error::EmptyMask(_))
        ));
    }

    #[test]
    fn quarter_turn_of_an_l_shape() {
        // L: vertical bar x=2, y=2..6 and foot y=6, x=2..5 (pixel centers).
        let l = |x: usize, y: usize| (x == 2 && (2..=6).contains(&y)) || (y == 6 && (2..=5).contains(&x));
        let src = placed((10, 10), l);
        // Rotation by +90 degrees about (4, 4): (x, y) -> (4 - (y - 4), 4 + (x - 4)) = (8 - y, x).
        let t = AffineTransform2D::similarity_about((4.0, 4.0), 1.0, std::f64::consts::FRAC_PI_2, (0.0, 0.0));
        let out = warp(&src, &t, (10, 10)).unwrap();
        let expected = placed((10, 10), |x, y| x <= 8 && l(y, 8 - x));
        assert_eq!(out.bbox, expected.bbox);
        assert_eq!(out.mask, expected.mask);
    }

    #[test]
    fn warp_out_of_frame_is_empty() {
        let s = placed((16, 16), |x, y| x < 4 && y < 4);
        let out = warp(&s, &AffineTransform2D::translation(100.0, 0.0), (16, 16)).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn zero_perturbation_is_identity_and_seeded() {
        let s = placed((64, 64), blob);
        let p = perturb_segment(&s, &PerturbationSpec::default()).unwrap();
        assert_eq!(p.segment.mask, s.mask);
        assert_eq!(p.segment.bbox, s.bbox);
        let spec = PerturbationSpec {
            max_translation: 5.0,
            scale_range: (0.8, 1.25),
            max_rotation_deg: 10.0,
            max_crop: 0.2,
            seed: 42,
        };
        assert_eq!(perturb_segment(&s, &spec).unwrap(), perturb_segment(&s, &spec).unwrap());
    }

    #[test]
    fn translation_perturbation_is_undone_by_fit() {
        let s = placed((64, 64), blob);
        for seed in 0..20 {
            let spec = PerturbationSpec {
                max_translation: 6.0,
                seed,
                ..Default::default()
            };
            let p = perturb_segment(&s, &spec).unwrap();
            let t = fit_alignment(&p.segment, &s, &AlignOptions::default()).unwrap();
            // Displacement the fit applies at the perturbed centroid; a one-pixel
            // extent change from resampling moves the matrix's own offset term.
            let m = Moments::of(&p.segment);
            let (ex, ey) = t.apply(m.cx, m.cy);
            let (tx, ty) = (ex - m.cx, ey - m.cy);
            let (px, py) = p.transform.translation_part();
            assert!((tx + px).abs() <= 0.5 && (ty + py).abs() <= 0.5, "seed {seed}: {tx},{ty} vs {px},{py}");
        }
    }

    #[test]
    fn rotation_fit_aligns_principal_axes() {
        let bar = |x: usize, y: usize| (10..40).contains(&x) && (20..28).contains(&y);
        let s = placed((64, 64), bar);
        let t = AffineTransform2D::similarity_about((24.5, 23.5), 1.0, 0.5, (3.0, 2.0));
        let d = warp(&s, &t, (64, 64)).unwrap();
        let opts = AlignOptions { allow_rotation: true, ..Default::default() };
        let fit = fit_alignment(&s, &d, &opts).unwrap();
        let back = warp(&s, &fit, (64, 64)).unwrap();
        assert!(crate::grid::footprint_iou(&back, &d) > 0.9);
    }
}
