//! Lifting 2D segmentation masks onto per-pixel 3D point maps.

use thiserror::Error;

use crate::geometry::Vec3;
use crate::scene::BBox;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LiftError {
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("grid of {height}x{width} needs {expected} cells, got {actual}")]
    BadLength {
        height: usize,
        width: usize,
        expected: usize,
        actual: usize,
    },
}

fn check_len(height: usize, width: usize, actual: usize) -> Result<(), LiftError> {
    let expected = height * width;
    if expected != actual {
        return Err(LiftError::BadLength {
            height,
            width,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Row-major H×W grid of 3D points from a relative-scale reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMap {
    height: usize,
    width: usize,
    points: Vec<Vec3>,
}

impl PointMap {
    pub fn new(height: usize, width: usize, points: Vec<Vec3>) -> Result<Self, LiftError> {
        check_len(height, width, points.len())?;
        Ok(PointMap { height, width, points })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn at(&self, row: usize, col: usize) -> &Vec3 {
        &self.points[row * self.width + col]
    }
}

/// Row-major H×W boolean mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    cells: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, cells: Vec<bool>) -> Result<Self, LiftError> {
        check_len(height, width, cells.len())?;
        Ok(Mask { height, width, cells })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            cells: vec![false; height * width],
        }
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.cells[row * self.width + col] = value;
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.width + col]
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn selected(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(i, _)| (i / self.width, i % self.width))
    }
}

/// Object center as the mean of the 3D points under the mask.
pub fn lift_mask_to_center(point_map: &PointMap, mask: &Mask) -> Result<Vec3, LiftError> {
    if (point_map.height, point_map.width) != (mask.height, mask.width) {
        return Err(LiftError::ShapeMismatch {
            expected: (point_map.height, point_map.width),
            actual: (mask.height, mask.width),
        });
    }
    let mut sum = Vec3::zeros();
    let mut n = 0usize;
    for (p, _) in point_map.points.iter().zip(&mask.cells).filter(|(_, &m)| m) {
        sum += p;
        n += 1;
    }
    if n == 0 {
        return Err(LiftError::EmptyMask);
    }
    Ok(sum / n as f64)
}

/// Tight box over the selected cells, right/bottom exclusive.
pub fn bbox_from_mask(mask: &Mask) -> Result<BBox, LiftError> {
    let mut it = mask.selected();
    let (r0, c0) = it.next().ok_or(LiftError::EmptyMask)?;
    let (mut rmin, mut rmax, mut cmin, mut cmax) = (r0, r0, c0, c0);
    for (r, c) in it {
        rmin = rmin.min(r);
        rmax = rmax.max(r);
        cmin = cmin.min(c);
        cmax = cmax.max(c);
    }
    Ok(BBox::new(cmin as i32, rmin as i32, cmax as i32 + 1, rmax as i32 + 1))
}
