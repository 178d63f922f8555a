//! The canvas and back-to-front compositing.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::path::Path;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use super::ordering::OrderingTable;
use crate::alignment::PlacedSegment;
use crate::error::Result;
use crate::grid::{intersection_count, BoundingBox, Footprint, Grid, Rgb, Rgb8};
use crate::io;
use crate::layout::SemanticLayout;

pub const WHITE: Rgb = [1.0; 3];
pub const BLACK: Rgb = [0.0; 3];

/// Per-pixel canvas state. The discriminant is the value written to the
/// paletted state image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[repr(u8)]
pub enum PixelState {
    Content = 0,
    InteriorElided = 1,
    ExteriorElided = 2,
    Missing = 3,
}

impl PixelState {
    pub const ALL: [PixelState; 4] = [
        PixelState::Content,
        PixelState::InteriorElided,
        PixelState::ExteriorElided,
        PixelState::Missing,
    ];

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

/// Palette of the state image, indexed by [`PixelState`] code.
pub const STATE_PALETTE: [Rgb8; 4] = [[96, 160, 96], [255, 255, 255], [0, 0, 0], [220, 40, 40]];

/// One painted segment.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// Index of the layout region this segment fills.
    pub region: u32,
    pub segment_id: u32,
    pub class_index: u8,
    pub bbox: BoundingBox,
    pub mask: Grid<bool>,
    /// Position in the paint order (0 = painted first, furthest back).
    pub paint_rank: u32,
}

impl Footprint for Layer {
    fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }
    fn mask(&self) -> &Grid<bool> {
        &self.mask
    }
}

/// Composited canvas. `provenance` holds an index into `layers`, or
/// [`Canvas::NO_LAYER`].
#[derive(Clone, Debug, PartialEq)]
pub struct Canvas {
    pub rgb: Grid<Rgb>,
    pub state: Grid<PixelState>,
    pub provenance: Grid<u32>,
    /// Painted layers, in paint order.
    pub layers: Vec<Layer>,
}

impl Canvas {
    pub const NO_LAYER: u32 = u32::MAX;

    /// All-missing canvas.
    pub fn blank(frame: (usize, usize)) -> Self {
        let (h, w) = frame;
        Self {
            rgb: Grid::new(w, h, BLACK),
            state: Grid::new(w, h, PixelState::Missing),
            provenance: Grid::new(w, h, Self::NO_LAYER),
            layers: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.rgb.width()
    }

    pub fn height(&self) -> usize {
        self.rgb.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.rgb.dims()
    }

    /// Bank segment id painted at `(x, y)`, if any.
    pub fn segment_at(&self, x: usize, y: usize) -> Option<u32> {
        let p = *self.provenance.get(x, y);
        (p != Self::NO_LAYER).then(|| self.layers[p as usize].segment_id)
    }

    /// `true` wherever the state is not content.
    pub fn non_content_mask(&self) -> Grid<bool> {
        self.state.map(|&s| s != PixelState::Content)
    }

    pub fn count(&self, state: PixelState) -> usize {
        self.state.as_slice().iter().filter(|&&s| s == state).count()
    }

    /// Checks the color/state and provenance/state couplings.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for (x, y, &s) in self.state.iter_xy() {
            let rgb = *self.rgb.get(x, y);
            let p = *self.provenance.get(x, y);
            match s {
                PixelState::InteriorElided if rgb != WHITE => return Err(format!("({x}, {y}) interior elided but not white")),
                PixelState::ExteriorElided if rgb != BLACK => return Err(format!("({x}, {y}) exterior elided but not black")),
                _ => {}
            }
            if (s == PixelState::Missing) != (p == Self::NO_LAYER) {
                return Err(format!("({x}, {y}) state {s:?} with provenance {p}"));
            }
            if p != Self::NO_LAYER && p as usize >= self.layers.len() {
                return Err(format!("({x}, {y}) provenance {p} out of range"));
            }
        }
        Ok(())
    }

    pub fn to_rgb8(&self) -> Grid<Rgb8> {
        io::to_rgb8(&self.rgb)
    }

    pub fn state_codes(&self) -> Grid<u8> {
        self.state.map(|&s| s as u8)
    }

    /// Writes the RGB buffer and the paletted state grid.
    pub fn export(&self, rgb_path: &Path, state_path: &Path) -> Result<()> {
        io::write_rgb(rgb_path, &self.to_rgb8())?;
        io::write_indexed(state_path, &self.state_codes(), Some(&STATE_PALETTE))
    }
}

/// A layout region and the aligned segment chosen for it, if any.
#[derive(Clone, Debug)]
pub struct Placement {
    pub region: u32,
    pub segment: Option<PlacedSegment>,
}

/// Paint order over `segments` (indices into the slice, back to front).
///
/// Overlapping segments of different classes are ordered by `ordering`. The
/// resulting graph is condensed into strongly connected components; the
/// condensation is sorted topologically, always releasing the ready
/// component with the smallest `(fallback rank, key)` first, and the members
/// of a cyclic component are painted in `(fallback rank, key)` order.
pub fn paint_order<F: Footprint>(segments: &[(u8, u32, &F)], ordering: &OrderingTable) -> Vec<usize> {
    let n = segments.len();
    let key = |i: usize| (ordering.rank(segments[i].0), segments[i].1, i);
    let mut g = DiGraph::<usize, ()>::with_capacity(n, 0);
    let nodes: Vec<_> = (0..n).map(|i| g.add_node(i)).collect();
    for i in 0..n {
        for j in i + 1..n {
            let (ci, _, fi) = segments[i];
            let (cj, _, fj) = segments[j];
            if ci == cj || fi.bbox().overlap_area(fj.bbox()) == 0 || intersection_count(fi, fj) == 0 {
                continue;
            }
            if ordering.front(ci, cj) == cj {
                g.add_edge(nodes[i], nodes[j], ());
            } else {
                g.add_edge(nodes[j], nodes[i], ());
            }
        }
    }
    let sccs = tarjan_scc(&g);
    let mut comp_of = vec![0usize; n];
    let mut members: Vec<Vec<usize>> = Vec::with_capacity(sccs.len());
    for (c, scc) in sccs.iter().enumerate() {
        let mut m: Vec<usize> = scc.iter().map(|&nx| g[nx]).collect();
        m.sort_by_key(|&i| key(i));
        for &i in &m {
            comp_of[i] = c;
        }
        members.push(m);
    }
    let mut indeg = vec![0usize; members.len()];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); members.len()];
    for e in g.raw_edges() {
        let (a, b) = (comp_of[g[e.source()]], comp_of[g[e.target()]]);
        if a != b {
            succ[a].push(b);
            indeg[b] += 1;
        }
    }
    let mut heap: BinaryHeap<Reverse<((usize, u32, usize), usize)>> = (0..members.len())
        .filter(|&c| indeg[c] == 0)
        .map(|c| Reverse((key(members[c][0]), c)))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse((_, c))) = heap.pop() {
        order.extend_from_slice(&members[c]);
        for &d in &succ[c] {
            indeg[d] -= 1;
            if indeg[d] == 0 {
                heap.push(Reverse((key(members[d][0]), d)));
            }
        }
    }
    order
}

/// Paints the placed segments back to front. Regions without a segment, and
/// pixels no segment covers, stay missing.
pub fn compose(layout: &SemanticLayout, placements: &[Placement], ordering: &OrderingTable) -> Canvas {
    compose_in_frame(layout.dims(), placements, ordering)
}

pub fn compose_in_frame(frame: (usize, usize), placements: &[Placement], ordering: &OrderingTable) -> Canvas {
    let mut canvas = Canvas::blank(frame);
    let live: Vec<(u32, &PlacedSegment)> = placements
        .iter()
        .filter_map(|p| p.segment.as_ref().filter(|s| !s.is_empty()).map(|s| (p.region, s)))
        .collect();
    let keyed: Vec<(u8, u32, &PlacedSegment)> = live.iter().map(|&(r, s)| (s.class_index, r, s)).collect();
    for (rank, i) in paint_order(&keyed, ordering).into_iter().enumerate() {
        let (region, seg) = live[i];
        let li = canvas.layers.len() as u32;
        let b = seg.bbox;
        for (x, y, &m) in seg.mask.iter_xy() {
            let (fx, fy) = (b.x0 + x, b.y0 + y);
            if !m || fx >= canvas.width() || fy >= canvas.height() {
                continue;
            }
            canvas.rgb.set(fx, fy, *seg.color.get(x, y));
            canvas.state.set(fx, fy, PixelState::Content);
            canvas.provenance.set(fx, fy, li);
        }
        canvas.layers.push(Layer {
            region,
            segment_id: seg.segment_id,
            class_index: seg.class_index,
            bbox: seg.bbox,
            mask: seg.mask.clone(),
            paint_rank: rank as u32,
        });
    }
    canvas
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::ClassTable;

    fn square(id: u32, class: u8, x0: usize, y0: usize, side: usize, color: Rgb) -> PlacedSegment {
        PlacedSegment {
            segment_id: id,
            class_index: class,
            frame: (20, 20),
            bbox: BoundingBox::new(x0, y0, side, side),
            mask: Grid::new(side, side, true),
            color: Grid::new(side, side, color),
        }
    }

    fn table() -> ClassTable {
        ClassTable::new(["sky", "building", "tree"]).unwrap()
    }

    #[test]
    fn disjoint_segments_are_order_free() {
        let t = table();
        let p = vec![
            Placement { region: 0, segment: Some(square(7, 0, 0, 0, 4, [0.1; 3])) },
            Placement { region: 1, segment: Some(square(8, 1, 10, 10, 4, [0.9; 3])) },
        ];
        let a = compose_in_frame((20, 20), &p, &OrderingTable::from_fallback(&t, vec![0, 1, 2]).unwrap());
        let b = compose_in_frame((20, 20), &p, &OrderingTable::from_fallback(&t, vec![2, 1, 0]).unwrap());
        assert_eq!(a.rgb, b.rgb);
        assert_eq!(a.state, b.state);
        assert_eq!(a.count(PixelState::Content), 32);
        assert_eq!(a.segment_at(11, 11), Some(8));
        a.check_invariants().unwrap();
    }

    #[test]
    fn building_covers_sky() {
        let t = table();
        let ord = OrderingTable::from_fallback(&t, vec![0, 1, 2]).unwrap();
        let p = vec![
            Placement { region: 0, segment: Some(square(1, 1, 4, 4, 6, [0.5; 3])) },
            Placement { region: 1, segment: Some(square(2, 0, 0, 0, 8, [0.2; 3])) },
        ];
        let c = compose_in_frame((20, 20), &p, &ord);
        assert_eq!(c.segment_at(5, 5), Some(1));
        assert_eq!(*c.rgb.get(5, 5), [0.5; 3]);
        assert_eq!(c.segment_at(1, 1), Some(2));
    }

    #[test]
    fn missing_where_uncovered() {
        let t = table();
        let ord = OrderingTable::from_fallback(&t, vec![0, 1, 2]).unwrap();
        let p = vec![Placement { region: 0, segment: None }];
        let c = compose_in_frame((5, 5), &p, &ord);
        assert_eq!(c.count(PixelState::Missing), 25);
        c.check_invariants().unwrap();
    }

    #[test]
    fn cycle_paints_in_fallback_order() {
        use super::super::ordering::PairVotes;
        let t = table();
        let mut votes = std::collections::BTreeMap::new();
        // sky > building, building > tree, tree > sky: a 3-cycle.
        votes.insert((0, 1), PairVotes { a_front: 2, b_front: 0 });
        votes.insert((1, 2), PairVotes { a_front: 2, b_front: 0 });
        votes.insert((0, 2), PairVotes { a_front: 0, b_front: 2 });
        let ord = OrderingTable::with_votes(&t, vec![2, 0, 1], votes).unwrap();
        let segs = [square(0, 0, 0, 0, 6, [0.0; 3]), square(1, 1, 2, 2, 6, [0.0; 3]), square(2, 2, 1, 1, 6, [0.0; 3])];
        let keyed: Vec<_> = segs.iter().enumerate().map(|(i, s)| (s.class_index, i as u32, s)).collect();
        assert_eq!(paint_order(&keyed, &ord), vec![2, 0, 1]);
    }
}
