//! Interior and exterior boundary elision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::canvas::{Canvas, PixelState, BLACK, WHITE};
use super::edt::squared_distance;
use crate::error::{Error, Result};
use crate::grid::{BoundingBox, Grid};

pub const DEFAULT_BAND: f64 = 0.05;
pub const DEFAULT_INTERIOR_RATE: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElisionOptions {
    /// Band width as a fraction of canvas height.
    pub band: f64,
    /// Probability of eliding each interior band pixel.
    pub interior_rate: f64,
    /// Classes whose segments get no exterior band.
    pub exterior_exclude: Vec<u8>,
    pub seed: u64,
}

impl Default for ElisionOptions {
    fn default() -> Self {
        Self {
            band: DEFAULT_BAND,
            interior_rate: DEFAULT_INTERIOR_RATE,
            exterior_exclude: Vec::new(),
            seed: 0,
        }
    }
}

impl ElisionOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.interior_rate) {
            return Err(Error::InvalidConfig(format!("interior_rate {} outside [0, 1]", self.interior_rate)));
        }
        if !(self.band >= 0.0 && self.band.is_finite()) {
            return Err(Error::InvalidConfig(format!("band {} must be finite and non-negative", self.band)));
        }
        Ok(())
    }

    /// Band distance in pixels for a canvas of height `h`.
    pub fn band_px(&self, h: usize) -> f64 {
        self.band * h as f64
    }
}

/// Window around `bbox` wide enough to hold every pixel within `margin` of it.
fn window(bbox: &BoundingBox, margin: usize, frame: (usize, usize)) -> BoundingBox {
    let x0 = bbox.x0.saturating_sub(margin);
    let y0 = bbox.y0.saturating_sub(margin);
    let x1 = (bbox.x1() + margin).min(frame.1);
    let y1 = (bbox.y1() + margin).min(frame.0);
    BoundingBox::new(x0, y0, x1 - x0, y1 - y0)
}

/// Layer mask resampled onto `win` (false outside the layer's box).
fn mask_in(win: &BoundingBox, layer: &super::canvas::Layer) -> Grid<bool> {
    let b = layer.bbox;
    Grid::from_fn(win.w, win.h, |x, y| {
        let (fx, fy) = (win.x0 + x, win.y0 + y);
        b.contains_point(fx, fy) && *layer.mask.get(fx - b.x0, fy - b.y0)
    })
}

/// Applies interior then exterior elision to every layer, in paint order.
///
/// Interior: mask pixels still showing this layer within the band turn white
/// with probability `interior_rate`, drawn in raster order per layer.
/// Exterior: pixels outside the mask within the band turn black unless they
/// show content of a layer painted later.
pub fn elide_boundaries(mut canvas: Canvas, opts: &ElisionOptions) -> Canvas {
    let frame = canvas.dims();
    let band = opts.band_px(frame.0);
    let band_sq = band * band;
    let margin = band.floor() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let wins: Vec<(BoundingBox, Grid<bool>)> = canvas
        .layers
        .iter()
        .map(|l| {
            let w = window(&l.bbox, margin, frame);
            let m = mask_in(&w, l);
            (w, m)
        })
        .collect();

    for (li, (win, mask)) in wins.iter().enumerate() {
        let inside = squared_distance(&mask.map(|&m| !m));
        for (x, y, &m) in mask.iter_xy() {
            let (fx, fy) = (win.x0 + x, win.y0 + y);
            if !m
                || *inside.get(x, y) > band_sq
                || *canvas.provenance.get(fx, fy) != li as u32
                || *canvas.state.get(fx, fy) != PixelState::Content
            {
                continue;
            }
            if rng.random::<f64>() < opts.interior_rate {
                canvas.state.set(fx, fy, PixelState::InteriorElided);
                canvas.rgb.set(fx, fy, WHITE);
            }
        }
    }

    for (li, (win, mask)) in wins.iter().enumerate() {
        let layer = &canvas.layers[li];
        if opts.exterior_exclude.contains(&layer.class_index) {
            continue;
        }
        let rank = layer.paint_rank;
        let outside = squared_distance(mask);
        for (x, y, &m) in mask.iter_xy() {
            let (fx, fy) = (win.x0 + x, win.y0 + y);
            if m || *outside.get(x, y) > band_sq {
                continue;
            }
            let owner = *canvas.provenance.get(fx, fy);
            let state = *canvas.state.get(fx, fy);
            if owner != Canvas::NO_LAYER
                && state == PixelState::Content
                && canvas.layers[owner as usize].paint_rank > rank
            {
                continue;
            }
            canvas.state.set(fx, fy, PixelState::ExteriorElided);
            canvas.rgb.set(fx, fy, BLACK);
            if owner == Canvas::NO_LAYER {
                canvas.provenance.set(fx, fy, li as u32);
            }
        }
    }
    canvas
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::PlacedSegment;
    use crate::compositor::{compose_in_frame, OrderingTable, Placement};
    use crate::layout::ClassTable;

    fn one_square(frame: (usize, usize), x0: usize, y0: usize, side: usize) -> Canvas {
        let t = ClassTable::new(["a", "b"]).unwrap();
        let ord = OrderingTable::from_fallback(&t, vec![0, 1]).unwrap();
        let seg = PlacedSegment {
            segment_id: 3,
            class_index: 0,
            frame,
            bbox: BoundingBox::new(x0, y0, side, side),
            mask: Grid::new(side, side, true),
            color: Grid::new(side, side, [0.4, 0.5, 0.6]),
        };
        compose_in_frame(frame, &[Placement { region: 0, segment: Some(seg) }], &ord)
    }

    #[test]
    fn zero_rate_only_adds_black_band() {
        let c = one_square((60, 60), 20, 20, 20);
        let opts = ElisionOptions { band: 0.05, interior_rate: 0.0, ..Default::default() };
        let e = elide_boundaries(c.clone(), &opts);
        assert_eq!(e.count(PixelState::InteriorElided), 0);
        for (x, y, &s) in c.state.iter_xy() {
            if s == PixelState::Content {
                assert_eq!(*e.state.get(x, y), PixelState::Content);
                assert_eq!(e.rgb.get(x, y), c.rgb.get(x, y));
            }
        }
        // band = 3 px on a 60-high canvas.
        assert_eq!(*e.state.get(17, 25), PixelState::ExteriorElided);
        assert_eq!(*e.state.get(16, 25), PixelState::Missing);
        e.check_invariants().unwrap();
    }

    #[test]
    fn band_is_ten_pixels_at_height_200() {
        let opts = ElisionOptions::default();
        assert_eq!(opts.band_px(200), 10.0);
        let c = one_square((200, 200), 50, 50, 100);
        let e = elide_boundaries(c, &ElisionOptions { interior_rate: 1.0, ..opts });
        assert_eq!(*e.state.get(59, 100), PixelState::InteriorElided);
        assert_eq!(*e.state.get(60, 100), PixelState::Content);
        assert_eq!(*e.state.get(40, 100), PixelState::ExteriorElided);
        assert_eq!(*e.state.get(39, 100), PixelState::Missing);
    }

    #[test]
    fn seeded_and_deterministic() {
        let c = one_square((100, 100), 10, 10, 60);
        let o = ElisionOptions { seed: 9, ..Default::default() };
        assert_eq!(elide_boundaries(c.clone(), &o), elide_boundaries(c.clone(), &o));
        let o2 = ElisionOptions { seed: 10, ..Default::default() };
        assert_ne!(elide_boundaries(c.clone(), &o).state, elide_boundaries(c, &o2).state);
    }

    #[test]
    fn frame_edge_is_not_a_boundary() {
        let c = one_square((40, 40), 0, 0, 20);
        let e = elide_boundaries(c, &ElisionOptions { interior_rate: 1.0, ..Default::default() });
        // band = 2 px; the corner pixel is far from the open sides.
        assert_eq!(*e.state.get(0, 0), PixelState::Content);
        assert_eq!(*e.state.get(19, 0), PixelState::InteriorElided);
    }

    #[test]
    fn rate_validation() {
        assert!(ElisionOptions { interior_rate: 1.5, ..Default::default() }.validate().is_err());
        assert!(ElisionOptions::default().validate().is_ok());
    }
}
