//! Defaults that come straight from the method description.

use segsynth::bank::context_box;
use segsynth::canvas_sim::SimConfig;
use segsynth::compositor::{ElisionOptions, DEFAULT_BAND, DEFAULT_INTERIOR_RATE};
use segsynth::grid::BoundingBox;

#[test]
fn context_box_is_a_quarter_larger_per_dimension() {
    let b = BoundingBox::new(40, 40, 20, 8);
    let c = context_box(&b, (200, 200));
    assert_eq!((c.w, c.h), (25, 10));
}

#[test]
fn boundary_band_is_five_percent_of_height() {
    assert_eq!(DEFAULT_BAND, 0.05);
    assert_eq!(ElisionOptions::default().band_px(400), 20.0);
}

#[test]
fn eighty_percent_of_interior_band_pixels_are_masked() {
    assert_eq!(DEFAULT_INTERIOR_RATE, 0.8);
}

#[test]
fn one_in_five_simulated_segments_is_recolored() {
    assert_eq!(SimConfig::default().color_transfer_fraction, 0.2);
}
