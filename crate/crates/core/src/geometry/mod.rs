//! Planar geometry: polyline borders, sentinels, projections, buffer grids and
//! the placebo line splits.
//!
//! Coordinates are assumed to be in a projected planar reference system.

mod border;
mod grid;
mod split;

pub use border::{place_sentinels, project_to_border, Border, Projection, SentinelSet};
pub(crate) use grid::bbox;
pub use grid::{buffer_grid, BufferGrid, Polygon};
pub use split::{split_by_angle, AngleSplit};

/// A point in the plane.
pub type Point<T> = nalgebra::Point2<T>;

pub(crate) fn check_finite_points<T: crate::Real>(points: &[Point<T>], what: &str) -> crate::Result<()> {
    match points.iter().position(|p| !(p.x.is_finite_value() && p.y.is_finite_value())) {
        Some(i) => Err(crate::Error::NonFinite(format!("{what} (point {i})"))),
        None => Ok(()),
    }
}
