//! Statistics-matching color transfer in the decorrelated lαβ space.

use std::sync::LazyLock;

use crate::alignment::PlacedSegment;
use crate::error::{Error, Result};
use crate::grid::{Grid, Rgb};

/// RGB to LMS cone response.
pub const RGB_TO_LMS: [[f64; 3]; 3] = [
    [0.3811, 0.5783, 0.0402],
    [0.1967, 0.7244, 0.0782],
    [0.0241, 0.1288, 0.8444],
];

/// Exact numeric inverse of [`RGB_TO_LMS`], so that unmodified colors
/// round-trip to within floating-point error.
pub static LMS_TO_RGB: LazyLock<[[f64; 3]; 3]> = LazyLock::new(|| invert3(&RGB_TO_LMS));

/// Cone responses are floored here (RGB in `[0, 1]`) before the logarithm.
/// At this level every 8-bit color survives the round trip unchanged.
pub const LMS_FLOOR: f64 = 0.1 / 255.0;

const STD_EPS: f64 = 1e-6;

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let cof = [
        [c(1, 2, 1, 2), -c(1, 2, 0, 2), c(1, 2, 0, 1)],
        [-c(0, 2, 1, 2), c(0, 2, 0, 2), -c(0, 2, 0, 1)],
        [c(0, 1, 1, 2), -c(0, 1, 0, 2), c(0, 1, 0, 1)],
    ];
    let det = m[0][0] * cof[0][0] + m[0][1] * cof[0][1] + m[0][2] * cof[0][2];
    let mut inv = [[0.0; 3]; 3];
    for (r, row) in inv.iter_mut().enumerate() {
        for (col, v) in row.iter_mut().enumerate() {
            *v = cof[col][r] / det;
        }
    }
    inv
}

#[inline]
fn mul3(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

const S3: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)
const S6: f64 = 0.408_248_290_463_863; // 1/sqrt(6)
const S2: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub fn rgb_to_lab(rgb: Rgb) -> [f64; 3] {
    let lms = mul3(&RGB_TO_LMS, rgb).map(|v| v.max(LMS_FLOOR).log10());
    let [l, m, s] = lms;
    [S3 * (l + m + s), S6 * (l + m - 2.0 * s), S2 * (l - m)]
}

/// Inverse of [`rgb_to_lab`], without clamping.
pub fn lab_to_rgb(lab: [f64; 3]) -> Rgb {
    let (a, b, c) = (lab[0] * S3, lab[1] * S6, lab[2] * S2);
    let log_lms = [a + b + c, a + b - c, a - 2.0 * b];
    mul3(&LMS_TO_RGB, log_lms.map(|v| 10f64.powf(v)))
}

/// Per-channel mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl LabStats {
    pub fn of(values: &[[f64; 3]]) -> Self {
        let n = values.len().max(1) as f64;
        let mut mean = [0.0; 3];
        for v in values {
            for c in 0..3 {
                mean[c] += v[c];
            }
        }
        mean = mean.map(|m| m / n);
        // A constant channel gets its value back exactly, not a rounded average.
        if let Some(first) = values.first() {
            for c in 0..3 {
                if values.iter().all(|v| v[c] == first[c]) {
                    mean[c] = first[c];
                }
            }
        }
        let mut var = [0.0; 3];
        for v in values {
            for c in 0..3 {
                var[c] += (v[c] - mean[c]).powi(2);
            }
        }
        Self {
            mean,
            std: var.map(|s| (s / n).sqrt()),
        }
    }
}

/// lαβ values of the masked pixels, in raster order.
pub fn masked_lab(seg: &PlacedSegment) -> Vec<[f64; 3]> {
    seg.mask
        .iter_xy()
        .filter(|(_, _, &m)| m)
        .map(|(x, y, _)| rgb_to_lab(*seg.color.get(x, y)))
        .collect()
}

/// Float path: transferred lαβ values of `src`'s masked pixels, before the
/// conversion back to RGB. Channels where `src` is flat are only shifted.
pub fn transfer_lab(src: &PlacedSegment, reference: &PlacedSegment) -> Result<Vec<[f64; 3]>> {
    if src.is_empty() {
        return Err(Error::EmptyMask("color transfer source"));
    }
    if reference.is_empty() {
        return Err(Error::EmptyMask("color transfer reference"));
    }
    let s = masked_lab(src);
    let ss = LabStats::of(&s);
    let rs = LabStats::of(&masked_lab(reference));
    let gain: [f64; 3] = std::array::from_fn(|c| if ss.std[c] < STD_EPS { 1.0 } else { rs.std[c] / ss.std[c] });
    Ok(s.into_iter()
        .map(|v| std::array::from_fn(|c| (v[c] - ss.mean[c]) * gain[c] + rs.mean[c]))
        .collect())
}

/// Moves `src`'s masked color statistics onto `reference`'s; RGB is clamped
/// to `[0, 1]`.
pub fn reinhard_transfer(src: &PlacedSegment, reference: &PlacedSegment) -> Result<PlacedSegment> {
    let lab = transfer_lab(src, reference)?;
    let mut it = lab.into_iter();
    let color = Grid::from_fn(src.bbox.w, src.bbox.h, |x, y| {
        if *src.mask.get(x, y) {
            let v = it.next().expect("one value per masked pixel");
            lab_to_rgb(v).map(|c| c.clamp(0.0, 1.0))
        } else {
            [0.0; 3]
        }
    });
    Ok(PlacedSegment { color, ..src.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundingBox;

    fn seg(colors: Vec<Rgb>, w: usize) -> PlacedSegment {
        let h = colors.len() / w;
        PlacedSegment {
            segment_id: 0,
            class_index: 0,
            frame: (h, w),
            bbox: BoundingBox::new(0, 0, w, h),
            mask: Grid::new(w, h, true),
            color: Grid::from_vec(w, h, colors),
        }
    }

    #[test]
    fn inverse_is_exact() {
        let inv = *LMS_TO_RGB;
        for r in 0..3 {
            for c in 0..3 {
                let v: f64 = (0..3).map(|k| RGB_TO_LMS[r][k] * inv[k][c]).sum();
                assert!((v - if r == c { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip_all_grays_and_primaries() {
        for v in 0..=255u8 {
            for rgb in [[v, v, v], [v, 0, 0], [0, v, 0], [0, 0, v]] {
                let f = rgb.map(|c| c as f64 / 255.0);
                let back = lab_to_rgb(rgb_to_lab(f)).map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8);
                assert_eq!(back, rgb);
            }
        }
    }

    #[test]
    fn same_statistics_is_identity() {
        let s = seg(vec![[0.2, 0.3, 0.4], [0.6, 0.5, 0.1], [0.9, 0.8, 0.7], [0.3, 0.3, 0.3]], 2);
        let out = reinhard_transfer(&s, &s).unwrap();
        for (a, b) in out.color.as_slice().iter().zip(s.color.as_slice()) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constant_to_constant() {
        let s = seg(vec![[0.2, 0.7, 0.1]; 6], 3);
        let r = seg(vec![[0.8, 0.1, 0.5]; 4], 2);
        let out = reinhard_transfer(&s, &r).unwrap();
        for p in out.color.as_slice() {
            for c in 0..3 {
                assert!((p[c] - r.color.as_slice()[0][c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn empty_is_rejected() {
        let s = seg(vec![[0.5; 3]; 4], 2);
        let mut e = s.clone();
        e.mask = Grid::new(2, 2, false);
        assert!(transfer_lab(&e, &s).is_err());
        assert!(transfer_lab(&s, &e).is_err());
    }
}
