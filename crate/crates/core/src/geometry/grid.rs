use crate::{Error, Real, Result};

use super::{check_finite_points, Border, Point};

/// A polygon with optional holes. Rings need not be explicitly closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon<T: Real> {
    pub exterior: Vec<Point<T>>,
    pub holes: Vec<Vec<Point<T>>>,
}

impl<T: Real> Polygon<T> {
    pub fn new(exterior: Vec<Point<T>>) -> Result<Self> {
        Self::with_holes(exterior, Vec::new())
    }

    pub fn with_holes(exterior: Vec<Point<T>>, holes: Vec<Vec<Point<T>>>) -> Result<Self> {
        if exterior.len() < 3 {
            return Err(Error::invalid("polygon ring needs at least 3 vertices"));
        }
        check_finite_points(&exterior, "polygon ring")?;
        for h in &holes {
            check_finite_points(h, "polygon hole")?;
        }
        Ok(Self { exterior, holes })
    }

    pub fn rectangle(min: (T, T), max: (T, T)) -> Result<Self> {
        Self::new(vec![
            Point::new(min.0, min.1),
            Point::new(max.0, min.1),
            Point::new(max.0, max.1),
            Point::new(min.0, max.1),
        ])
    }

    /// Even-odd rule over all rings.
    pub fn contains(&self, p: &Point<T>) -> bool {
        let mut inside = ring_crossings(&self.exterior, p);
        for h in &self.holes {
            inside ^= ring_crossings(h, p);
        }
        inside
    }

    pub fn bounding_box(&self) -> (Point<T>, Point<T>) {
        bbox(self.exterior.iter())
    }
}

fn ring_crossings<T: Real>(ring: &[Point<T>], p: &Point<T>) -> bool {
    let mut inside = false;
    let n = ring.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub(crate) fn bbox<'a, T: Real>(points: impl Iterator<Item = &'a Point<T>>) -> (Point<T>, Point<T>) {
    let mut lo = Point::new(T::infinity(), T::infinity());
    let mut hi = Point::new(-T::infinity(), -T::infinity());
    for p in points {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

/// Lattice points inside the region polygons and within the buffer distance
/// of the border.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferGrid<T: Real> {
    pub points: Vec<Point<T>>,
    pub spacing: T,
    pub buffer: T,
}

/// Axis-aligned lattice of spacing `spacing`, anchored half a spacing inside
/// the lower-left corner of the polygons' bounding box, clipped to the
/// polygons and to `dist(s, border) <= buffer`. `buffer` may be infinite.
pub fn buffer_grid<T: Real>(
    polygons: &[Polygon<T>],
    border: &Border<T>,
    buffer: T,
    spacing: T,
) -> Result<BufferGrid<T>> {
    if !(buffer > T::zero()) {
        return Err(Error::invalid("buffer distance must be positive"));
    }
    if !(spacing > T::zero() && spacing.is_finite_value()) {
        return Err(Error::invalid("grid spacing must be positive and finite"));
    }
    if polygons.is_empty() {
        return Err(Error::invalid("at least one region polygon is required"));
    }
    let (lo, hi) = bbox(polygons.iter().flat_map(|p| p.exterior.iter()));
    let half = spacing * T::lit(0.5);
    let count = |lo: T, hi: T| -> usize {
        let span = hi - lo - half;
        if span < T::zero() {
            0
        } else {
            (span / spacing).floor().as_f64() as usize + 1
        }
    };
    let (nx, ny) = (count(lo.x, hi.x), count(lo.y, hi.y));
    let mut points = Vec::new();
    for iy in 0..ny {
        let y = lo.y + half + spacing * T::from_usize_lossy(iy);
        for ix in 0..nx {
            let p = Point::new(lo.x + half + spacing * T::from_usize_lossy(ix), y);
            if polygons.iter().any(|poly| poly.contains(&p)) && border.distance(&p) <= buffer {
                points.push(p);
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyGrid { spacing: spacing.as_f64(), buffer: buffer.as_f64() });
    }
    Ok(BufferGrid { points, spacing, buffer })
}
