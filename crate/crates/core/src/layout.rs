//! Semantic layouts and connected-component decomposition.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoundingBox, Grid};

/// Default label value for pixels that carry no class.
pub const UNLABELED: u8 = 255;

/// Ordered class names plus the sentinel used for unlabeled pixels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTable {
    pub classes: Vec<String>,
    #[serde(default = "default_unlabeled")]
    pub unlabeled: u8,
}

fn default_unlabeled() -> u8 {
    UNLABELED
}

impl ClassTable {
    pub fn new<S: Into<String>>(classes: impl IntoIterator<Item = S>) -> Result<Self> {
        let table = Self {
            classes: classes.into_iter().map(Into::into).collect(),
            unlabeled: UNLABELED,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::InvalidLayout("class table is empty".into()));
        }
        if (self.unlabeled as usize) < self.classes.len() {
            return Err(Error::InvalidLayout(format!(
                "unlabeled sentinel {} collides with a class index (c = {})",
                self.unlabeled,
                self.classes.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<u8> {
        self.classes.iter().position(|c| c == name).map(|i| i as u8)
    }

    pub fn name(&self, class: u8) -> &str {
        self.classes.get(class as usize).map_or("<unlabeled>", String::as_str)
    }
}

/// Per-pixel class-index map with its class table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemanticLayout {
    pub table: ClassTable,
    pub labels: Grid<u8>,
}

impl SemanticLayout {
    pub fn new(table: ClassTable, labels: Grid<u8>) -> Result<Self> {
        table.validate()?;
        if labels.width() == 0 || labels.height() == 0 {
            return Err(Error::InvalidLayout("layout has zero extent".into()));
        }
        let c = table.len();
        if let Some(bad) = labels
            .as_slice()
            .iter()
            .find(|&&l| l != table.unlabeled && l as usize >= c)
        {
            return Err(Error::InvalidLayout(format!(
                "label {bad} is neither a class index below {c} nor the unlabeled sentinel {}",
                table.unlabeled
            )));
        }
        Ok(Self { table, labels })
    }

    pub fn width(&self) -> usize {
        self.labels.width()
    }

    pub fn height(&self) -> usize {
        self.labels.height()
    }

    /// `(h, w)`.
    pub fn dims(&self) -> (usize, usize) {
        self.labels.dims()
    }

    pub fn is_labeled(&self, x: usize, y: usize) -> bool {
        *self.labels.get(x, y) != self.table.unlabeled
    }

    pub fn unlabeled_fraction(&self) -> f64 {
        let n = self
            .labels
            .as_slice()
            .iter()
            .filter(|&&l| l == self.table.unlabeled)
            .count();
        n as f64 / self.labels.len() as f64
    }

    /// One binary plane per class.
    pub fn to_one_hot(&self) -> Vec<Grid<bool>> {
        (0..self.table.len())
            .map(|c| self.labels.map(|&l| l as usize == c))
            .collect()
    }

    /// Inverse of [`to_one_hot`](Self::to_one_hot). Pixels with no set plane become unlabeled;
    /// pixels with several set planes are rejected.
    pub fn from_one_hot(table: ClassTable, planes: &[Grid<bool>]) -> Result<Self> {
        if planes.len() != table.len() {
            return Err(Error::InvalidLayout(format!(
                "{} planes for {} classes",
                planes.len(),
                table.len()
            )));
        }
        let (w, h) = (planes[0].width(), planes[0].height());
        let mut labels = Grid::new(w, h, table.unlabeled);
        for (c, plane) in planes.iter().enumerate() {
            if plane.dims() != (h, w) {
                return Err(Error::DimensionMismatch {
                    what: "one-hot plane",
                    expected: (h, w),
                    found: plane.dims(),
                });
            }
            for (x, y, &set) in plane.iter_xy() {
                if set {
                    if *labels.get(x, y) != table.unlabeled {
                        return Err(Error::InvalidLayout(format!("pixel ({x}, {y}) has two classes")));
                    }
                    labels.set(x, y, c as u8);
                }
            }
        }
        Self::new(table, labels)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    #[default]
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

/// One connected component of a single class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub class: u8,
    pub area: usize,
    pub bbox: BoundingBox,
}

/// Result of labeling: `ids` holds a component index per pixel, or [`Components::NONE`]
/// for unlabeled pixels. Components are numbered in raster order of their first pixel.
#[derive(Clone, Debug)]
pub struct Components {
    pub ids: Grid<u32>,
    pub components: Vec<Component>,
}

impl Components {
    pub const NONE: u32 = u32::MAX;

    /// Binary mask of component `id` over its tight bounding box.
    pub fn mask(&self, id: usize) -> Grid<bool> {
        let bbox = self.components[id].bbox;
        Grid::from_fn(bbox.w, bbox.h, |x, y| {
            *self.ids.get(bbox.x0 + x, bbox.y0 + y) == id as u32
        })
    }
}

/// Labels maximal same-class connected regions. Unlabeled pixels belong to none.
pub fn label_components(labels: &Grid<u8>, unlabeled: u8, connectivity: Connectivity) -> Components {
    let (w, h) = (labels.width(), labels.height());
    let mut ids = Grid::new(w, h, Components::NONE);
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for y0 in 0..h {
        for x0 in 0..w {
            let class = *labels.get(x0, y0);
            if class == unlabeled || *ids.get(x0, y0) != Components::NONE {
                continue;
            }
            let id = components.len() as u32;
            ids.set(x0, y0, id);
            queue.push_back((x0, y0));
            let (mut bx0, mut by0, mut bx1, mut by1) = (x0, y0, x0, y0);
            let mut area = 0;
            while let Some((x, y)) = queue.pop_front() {
                area += 1;
                bx0 = bx0.min(x);
                by0 = by0.min(y);
                bx1 = bx1.max(x);
                by1 = by1.max(y);
                for &(dx, dy) in connectivity.offsets() {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    if *labels.get(nx, ny) == class && *ids.get(nx, ny) == Components::NONE {
                        ids.set(nx, ny, id);
                        queue.push_back((nx, ny));
                    }
                }
            }
            components.push(Component {
                class,
                area,
                bbox: BoundingBox::new(bx0, by0, bx1 - bx0 + 1, by1 - by0 + 1),
            });
        }
    }
    Components { ids, components }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[&str]) -> Grid<u8> {
        let h = rows.len();
        let w = rows[0].len();
        Grid::from_fn(w, h, |x, y| match rows[y].as_bytes()[x] {
            b'.' => UNLABELED,
            c => c - b'0',
        })
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let table = ClassTable::new(["a", "b"]).unwrap();
        let labels = Grid::from_vec(2, 1, vec![0, 7]);
        assert!(SemanticLayout::new(table, labels).is_err());
    }

    #[test]
    fn diagonal_contact_splits_under_four_connectivity() {
        // Plus shape centred at (2,2) and a blob touching its arm tips only at corners.
        let g = grid(&[
            "..0....", //
            ".000...", //
            "..0....", //
            "...00..", //
            "...00..", //
            ".......", //
            ".......",
        ]);
        let four = label_components(&g, UNLABELED, Connectivity::Four);
        assert_eq!(four.components.len(), 2);
        assert_eq!(four.components[0].area, 5);
        assert_eq!(four.components[1].area, 4);
        let eight = label_components(&g, UNLABELED, Connectivity::Eight);
        assert_eq!(eight.components.len(), 1);
        assert_eq!(eight.components[0].area, 9);
    }

    #[test]
    fn one_hot_round_trip() {
        let table = ClassTable::new(["a", "b", "c"]).unwrap();
        let layout = SemanticLayout::new(table.clone(), grid(&["01.", "2.1"])).unwrap();
        let back = SemanticLayout::from_one_hot(table, &layout.to_one_hot()).unwrap();
        assert_eq!(back, layout);
    }
}
