//! Occlusion-aware compositing of aligned segments and boundary elision.
//!
//! Overlapping segments are ordered by a class-pair table derived from the
//! relative depth of adjacent training segments, with a back-to-front class
//! list as fallback. After painting, a band around each segment's own mask
//! boundary is elided: inside stochastically (white), outside fully (black).

mod canvas;
pub mod edt;
mod elision;
mod ordering;

pub use canvas::{compose, compose_in_frame, paint_order, Canvas, Layer, PixelState, Placement, BLACK, STATE_PALETTE, WHITE};
pub use elision::{elide_boundaries, ElisionOptions, DEFAULT_BAND, DEFAULT_INTERIOR_RATE};
pub use ordering::{
    adjacent_components, derive_ordering, fallback_preset, order_with_listed, DepthMap, OrderingFile, OrderingTable,
    PairEntry, PairVotes, ADJACENCY_RADIUS,
};
