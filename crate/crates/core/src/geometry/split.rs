use crate::{Error, Real, Result};

use super::grid::bbox;
use super::{Border, Point};

/// Two-way partition of a point set by a straight line.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSplit<T: Real> {
    /// Indices with the smaller signed perpendicular coordinate.
    pub side_a: Vec<usize>,
    /// Indices with the larger signed perpendicular coordinate; gets the
    /// median point when the count is odd.
    pub side_b: Vec<usize>,
    /// The splitting line, clipped to the (slightly padded) data bounding box.
    pub border: Border<T>,
}

/// Splits `points` in half by a line at `angle_deg` counter-clockwise from the
/// horizontal, placed at the median of the signed perpendicular coordinate.
///
/// Points whose perpendicular coordinate ties across the median are assigned
/// by input order.
pub fn split_by_angle<T: Real>(points: &[Point<T>], angle_deg: T) -> Result<AngleSplit<T>> {
    let n = points.len();
    if n < 2 {
        return Err(Error::invalid("split_by_angle needs at least 2 points"));
    }
    let theta = angle_deg * T::pi() / T::lit(180.0);
    let dir = nalgebra::Vector2::new(theta.cos(), theta.sin());
    let normal = nalgebra::Vector2::new(-dir.y, dir.x);
    let coord: Vec<T> = points.iter().map(|p| normal.dot(&p.coords)).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| coord[i].partial_cmp(&coord[j]).expect("finite coordinates").then(i.cmp(&j)));
    let lo_count = n / 2;
    let (first, last) = (coord[order[0]], coord[order[n - 1]]);
    if first == last {
        return Err(Error::invalid("all points are collinear along the split direction; no line separates them"));
    }
    let offset = (coord[order[lo_count - 1]] + coord[order[lo_count]]) * T::lit(0.5);

    let mut side_a = order[..lo_count].to_vec();
    let mut side_b = order[lo_count..].to_vec();
    side_a.sort_unstable();
    side_b.sort_unstable();

    let (mut lo, mut hi) = bbox(points.iter());
    let pad = (hi.x - lo.x).max(hi.y - lo.y) * T::lit(0.01);
    lo -= nalgebra::Vector2::new(pad, pad);
    hi += nalgebra::Vector2::new(pad, pad);
    let border = clip_line(offset, &normal, &dir, lo, hi)?;
    Ok(AngleSplit { side_a, side_b, border })
}

/// Segment of `{p : normal . p = offset}` inside the box `[lo, hi]`.
fn clip_line<T: Real>(
    offset: T,
    normal: &nalgebra::Vector2<T>,
    dir: &nalgebra::Vector2<T>,
    lo: Point<T>,
    hi: Point<T>,
) -> Result<Border<T>> {
    let center = nalgebra::center(&lo, &hi);
    let base = center + normal * (offset - normal.dot(&center.coords));
    let (mut t_lo, mut t_hi) = (-T::infinity(), T::infinity());
    for axis in 0..2 {
        let (p, d, a, b) = (base[axis], dir[axis], lo[axis], hi[axis]);
        if d.abs() > T::lit(1e-12) {
            let (t1, t2) = ((a - p) / d, (b - p) / d);
            t_lo = t_lo.max(t1.min(t2));
            t_hi = t_hi.min(t1.max(t2));
        } else if p < a || p > b {
            return Err(Error::DegenerateBorder("split line misses the data bounding box".into()));
        }
    }
    if !(t_hi > t_lo) {
        return Err(Error::DegenerateBorder("split line misses the data bounding box".into()));
    }
    Border::new(vec![base + dir * t_lo, base + dir * t_hi])
}
