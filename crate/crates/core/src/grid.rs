//! Uniform square grids with cell-centered samples.

use crate::error::{GlError, Result};
use crate::scalar::Scalar;

/// A square grid of `M x M` cells covering `(-L/2, L/2)^2`.
///
/// Samples live at cell centers; the spacing `h = L/M` is always recomputed
/// from the stored side length and point count, never stored on its own.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec<T> {
    side_length: T,
    points_per_side: usize,
}

pub const MIN_POINTS_PER_SIDE: usize = 8;

impl<T: Scalar> GridSpec<T> {
    pub fn new(side_length: T, points_per_side: usize) -> Result<Self> {
        if !(side_length.is_finite() && side_length > T::zero()) {
            return Err(GlError::InvalidParameter(format!(
                "side_length must be positive and finite, got {side_length}"
            )));
        }
        if points_per_side < MIN_POINTS_PER_SIDE {
            return Err(GlError::InvalidParameter(format!(
                "points_per_side must be >= {MIN_POINTS_PER_SIDE}, got {points_per_side}"
            )));
        }
        Ok(Self {
            side_length,
            points_per_side,
        })
    }

    pub fn side_length(&self) -> T {
        self.side_length
    }

    pub fn points_per_side(&self) -> usize {
        self.points_per_side
    }

    /// Grid spacing `h = side_length / points_per_side`.
    pub fn spacing(&self) -> T {
        self.side_length / T::of(self.points_per_side as f64)
    }

    /// Quadrature weight of one cell, `h^2`.
    pub fn cell_area(&self) -> T {
        let h = self.spacing();
        h * h
    }

    pub fn num_cells(&self) -> usize {
        self.points_per_side * self.points_per_side
    }

    /// Coordinate of the center of cell `k` along one axis,
    /// `x_k = -L/2 + (k + 1/2) h`.
    pub fn center_coord(&self, k: usize) -> T {
        let h = self.spacing();
        let half = T::of(0.5);
        -self.side_length * half + (T::of(k as f64) + half) * h
    }

    /// Coordinate of grid node `k` (cell corner), `x_k = -L/2 + k h`.
    pub fn node_coord(&self, k: usize) -> T {
        -self.side_length * T::of(0.5) + T::of(k as f64) * self.spacing()
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.points_per_side && j < self.points_per_side);
        j * self.points_per_side + i
    }

    pub fn same_as(&self, other: &Self) -> bool {
        self.points_per_side == other.points_per_side
            && (self.side_length - other.side_length).abs()
                <= T::of(1e-12) * (T::one() + self.side_length.abs())
    }
}
