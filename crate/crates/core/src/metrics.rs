//! Map-reflection accuracy: per-cell confusion counts of a drawn map against
//! ground truth, and the derived summary metrics.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{CellState, GridIndex, OccupancyGrid};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("maps differ in dimensions, resolution or origin")]
    GeometryMismatch,
    #[error("wall mask is {mask_w}x{mask_h}, grid is {grid_w}x{grid_h}")]
    MaskMismatch {
        mask_w: usize,
        mask_h: usize,
        grid_w: usize,
        grid_h: usize,
    },
}

/// Boolean per-cell mask over a grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl CellMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_cells(width: usize, height: usize, cells: impl IntoIterator<Item = GridIndex>) -> Self {
        let mut mask = Self::empty(width, height);
        for c in cells {
            mask.insert(c);
        }
        mask
    }

    pub fn insert(&mut self, idx: GridIndex) {
        assert!(idx.col < self.width && idx.row < self.height, "{idx} outside mask");
        self.bits[idx.row * self.width + idx.col] = true;
    }

    pub fn contains(&self, idx: GridIndex) -> bool {
        idx.col < self.width && idx.row < self.height && self.bits[idx.row * self.width + idx.col]
    }

    pub fn len(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cells(&self) -> impl Iterator<Item = GridIndex> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| GridIndex::new(i % self.width, i / self.width))
    }
}

/// Occupied cells of the empty-room base map.
pub fn wall_mask_from_base(base: &OccupancyGrid) -> CellMask {
    CellMask {
        width: base.width(),
        height: base.height(),
        bits: base.cells().iter().map(|s| s.is_occupied()).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub excluded_wall_cells: u64,
}

impl ConfusionCounts {
    pub fn classified(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn total(&self) -> u64 {
        self.classified() + self.excluded_wall_cells
    }
}

/// Tallies every non-wall cell by ground-truth state and drawn occupancy.
///
/// Ground truth Occupied splits into TP/FN by whether the drawn cell is
/// Occupied; ground truth Free or Unknown splits into FP/TN the same way.
pub fn classify_cells(
    ground_truth: &OccupancyGrid,
    drawn: &OccupancyGrid,
    wall_mask: &CellMask,
) -> Result<ConfusionCounts, MetricsError> {
    if !ground_truth.same_geometry(drawn) {
        return Err(MetricsError::GeometryMismatch);
    }
    if wall_mask.width != ground_truth.width() || wall_mask.height != ground_truth.height() {
        return Err(MetricsError::MaskMismatch {
            mask_w: wall_mask.width,
            mask_h: wall_mask.height,
            grid_w: ground_truth.width(),
            grid_h: ground_truth.height(),
        });
    }
    let mut c = ConfusionCounts::default();
    let cells = ground_truth.cells().iter().zip(drawn.cells());
    for ((&gt, &dr), &wall) in cells.zip(&wall_mask.bits) {
        if wall {
            c.excluded_wall_cells += 1;
            continue;
        }
        let drawn_occ = dr == CellState::Occupied;
        match (gt == CellState::Occupied, drawn_occ) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// A ratio that is undefined when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratio(pub Option<f64>);

impl Ratio {
    pub fn of(num: u64, den: u64) -> Self {
        Ratio((den != 0).then(|| num as f64 / den as f64))
    }

    pub fn get(&self) -> Option<f64> {
        self.0
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v:.6}"),
            None => f.write_str("n/a"),
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Some(v) => s.serialize_f64(v),
            None => s.serialize_str("n/a"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub accuracy: Ratio,
    pub precision: Ratio,
    pub recall: Ratio,
    pub specificity: Ratio,
    pub f1: Ratio,
}

pub fn compute_metrics(c: &ConfusionCounts) -> MetricReport {
    let precision = Ratio::of(c.tp, c.tp + c.fp);
    let recall = Ratio::of(c.tp, c.tp + c.fn_);
    // p + r == 0 is a zero denominator too
    let f1 = match (precision.0, recall.0) {
        (Some(p), Some(r)) if p + r > 0.0 => Ratio(Some(2.0 * p * r / (p + r))),
        _ => Ratio(None),
    };
    MetricReport {
        accuracy: Ratio::of(c.tp + c.tn, c.classified()),
        precision,
        recall,
        specificity: Ratio::of(c.tn, c.tn + c.fp),
        f1,
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "accuracy: {}", self.accuracy)?;
        writeln!(f, "precision: {}", self.precision)?;
        writeln!(f, "recall: {}", self.recall)?;
        writeln!(f, "specificity: {}", self.specificity)?;
        writeln!(f, "f1: {}", self.f1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Pose2D;

    fn grid(w: usize, h: usize) -> OccupancyGrid {
        OccupancyGrid::filled(w, h, 0.05, Pose2D::default(), CellState::Free).unwrap()
    }

    fn fill_box(g: &mut OccupancyGrid, c0: usize, r0: usize, n: usize) {
        for r in r0..r0 + n {
            for c in c0..c0 + n {
                g.set(GridIndex::new(c, r), CellState::Occupied);
            }
        }
    }

    #[test]
    fn single_cell_cases() {
        let mut gt = grid(1, 1);
        let mut drawn = grid(1, 1);
        gt.set(GridIndex::new(0, 0), CellState::Occupied);
        drawn.set(GridIndex::new(0, 0), CellState::Occupied);
        let c = classify_cells(&gt, &drawn, &CellMask::empty(1, 1)).unwrap();
        assert_eq!(c.tp, 1);

        gt.set(GridIndex::new(0, 0), CellState::Unknown);
        let c = classify_cells(&gt, &drawn, &CellMask::empty(1, 1)).unwrap();
        assert_eq!(c.fp, 1);
    }

    #[test]
    fn shifted_square() {
        let mut gt = grid(10, 10);
        let mut drawn = grid(10, 10);
        fill_box(&mut gt, 3, 3, 3);
        fill_box(&mut drawn, 4, 3, 3);
        let c = classify_cells(&gt, &drawn, &CellMask::empty(10, 10)).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (6, 3, 3, 88));
    }

    #[test]
    fn walls_excluded() {
        let mut base = grid(6, 6);
        for i in 0..6 {
            for idx in [GridIndex::new(i, 0), GridIndex::new(i, 5), GridIndex::new(0, i), GridIndex::new(5, i)] {
                base.set(idx, CellState::Occupied);
            }
        }
        let mask = wall_mask_from_base(&base);
        assert_eq!(mask.len(), 20);
        assert!(mask.cells().all(|c| c.row == 0 || c.row == 5 || c.col == 0 || c.col == 5));
        let c = classify_cells(&base, &base, &mask).unwrap();
        assert_eq!(c.excluded_wall_cells, 20);
        assert_eq!(c.tn, 16);
        assert_eq!(c.total(), 36);
        assert!(wall_mask_from_base(&grid(4, 4)).is_empty());
    }

    #[test]
    fn mismatch_rejected() {
        let a = grid(3, 3);
        let b = grid(3, 4);
        assert_eq!(
            classify_cells(&a, &b, &CellMask::empty(3, 3)),
            Err(MetricsError::GeometryMismatch)
        );
        let shifted = OccupancyGrid::filled(3, 3, 0.05, Pose2D::new(1.0, 0.0, 0.0), CellState::Free).unwrap();
        assert_eq!(
            classify_cells(&a, &shifted, &CellMask::empty(3, 3)),
            Err(MetricsError::GeometryMismatch)
        );
        assert!(matches!(
            classify_cells(&a, &a, &CellMask::empty(2, 2)),
            Err(MetricsError::MaskMismatch { .. })
        ));
    }

    #[test]
    fn formula_example() {
        let c = ConfusionCounts { tp: 8, fp: 2, fn_: 1, tn: 89, excluded_wall_cells: 0 };
        let m = compute_metrics(&c);
        assert_eq!(m.precision.get(), Some(0.8));
        assert_eq!(m.recall.get(), Some(8.0 / 9.0));
        assert_eq!(m.specificity.get(), Some(89.0 / 91.0));
        assert_eq!(m.accuracy.get(), Some(0.97));
        assert!((m.f1.get().unwrap() - 0.842_105).abs() < 1e-6);
    }

    #[test]
    fn perfect_and_empty() {
        let perfect = compute_metrics(&ConfusionCounts { tp: 5, tn: 10, ..Default::default() });
        for r in [perfect.accuracy, perfect.precision, perfect.recall, perfect.specificity, perfect.f1] {
            assert_eq!(r.get(), Some(1.0));
        }
        let empty = compute_metrics(&ConfusionCounts { tn: 7, ..Default::default() });
        assert_eq!(empty.precision.get(), None);
        assert_eq!(empty.recall.get(), None);
        assert_eq!(empty.f1.get(), None);
        assert_eq!(empty.specificity.get(), Some(1.0));
        assert!(empty.to_string().contains("precision: n/a"));
    }
}
